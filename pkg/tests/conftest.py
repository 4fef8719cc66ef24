import os

import pytest

from app import create_app
from app.models import Request, VehicleState
from app.network import Network
from app.scenario import grid_network

os.environ.setdefault('FLASK_CONFIG', 'testing')


@pytest.fixture(scope='module')
def app(tmp_path_factory):
    """Create and configure a new app instance for each test module."""
    app = create_app('testing')
    app.config['OUTPUT_DIR'] = str(tmp_path_factory.mktemp('output'))
    app_context = app.app_context()
    app_context.push()

    yield app

    app_context.pop()


@pytest.fixture(scope='module')
def client(app):
    """A test client for the app."""
    return app.test_client()


@pytest.fixture(scope='module')
def runner(app):
    """A CLI runner bound to the app."""
    return app.test_cli_runner()


@pytest.fixture(scope='module')
def line_net():
    """0 <-> 1 <-> 2, 60 s per edge, half a mile apart."""
    edges = [(0, 1, 60.0), (1, 0, 60.0), (1, 2, 60.0), (2, 1, 60.0)]
    return Network([0.0, 0.5, 1.0], [0.0, 0.0, 0.0], edges)


@pytest.fixture(scope='module')
def long_line():
    """0 <-> 1 <-> 2 <-> 3, 60 s per edge."""
    edges = []
    for u in range(3):
        edges += [(u, u + 1, 60.0), (u + 1, u, 60.0)]
    return Network([0.0, 0.5, 1.0, 1.5], [0.0] * 4, edges)


@pytest.fixture(scope='module')
def grid_net():
    return grid_network(4, 4, 60.0)


@pytest.fixture
def make_request():
    """Request factory with the direct time filled in from the network."""
    def factory(rid, origin, destination, request_time=0.0, net=None, max_wait=120.0, max_delay=240.0):
        direct = net.travel_time(origin, destination) if net is not None else 0.0
        return Request(rid, origin, destination, request_time, max_wait, max_delay, direct_time=direct)
    return factory


@pytest.fixture
def make_vehicle():
    def factory(vid, node, capacity=4, now=0.0, onboard=(), route=()):
        return VehicleState(id=vid, capacity=capacity, current_node=node, arrival_at_next=now,
                            onboard=frozenset(onboard), route=tuple(route))
    return factory
