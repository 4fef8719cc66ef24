import os


def _env_int(name, default):
    value = os.environ.get(name)
    return int(value) if value not in (None, '') else default


def _env_float(name, default):
    value = os.environ.get(name)
    return float(value) if value not in (None, '') else default


class Config:
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO')
    OUTPUT_DIR = os.environ.get('RIDEPOOL_OUTPUT_DIR') or 'output'

    # Epoch loop and fleet
    EPOCH_S = _env_float('EPOCH_S', 30.0)
    FLEET_SIZE = _env_int('FLEET_SIZE', 40)
    CAPACITY = _env_int('CAPACITY', 4)
    OMEGA_S = _env_float('OMEGA_S', 300.0)      # maximum waiting time
    DELTA_S = _env_float('DELTA_S', 600.0)      # maximum total delay
    SEED = _env_int('SEED', 0)
    VARIANT = os.environ.get('VARIANT', 'speedup')
    UNASSIGNED_PENALTY = None                   # None -> 10 * (omega + delta)
    DRAIN_FACTOR = 2.0

    # Route search and trip exploration
    EXHAUSTIVE_CUTOFF = 4
    MAX_TRIP_SIZE = None                        # None -> vehicle capacity
    RTV_BUDGET_STEPS = None
    RTV_BUDGET_SECONDS = None
    IP_BUDGET_NODES = None
    IP_BUDGET_SECONDS = None
    PARTITIONS = _env_int('PARTITIONS', 4)
    WORKERS = _env_int('WORKERS', 1)

    # Rebalancing
    ALPHA_MILES = 0.4
    P_MIN = 0.75
    GAMMA = 3
    V_MAX = 300
    R_MAX = 600
    BIN_SECONDS = 300
    LOOKAHEAD_BINS = 1
    SUPPRESSION_MODE = 'per_vehicle'
    WEIGHT_BY_PROBABILITY = False
    PROACTIVE_TARGETS = 'union'
    REBALANCE_FORMULATION = None                # None -> chosen by variant

    TIMING_MODE = os.environ.get('TIMING_MODE', 'steps')

    @staticmethod
    def init_app(app):
        os.makedirs(app.config['OUTPUT_DIR'], exist_ok=True)


class DevelopmentConfig(Config):
    DEBUG = True
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'DEBUG')


class TestingConfig(Config):
    TESTING = True
    LOG_LEVEL = 'WARNING'
    OUTPUT_DIR = os.environ.get('RIDEPOOL_TEST_OUTPUT_DIR') or os.path.join('output', 'testing')
    FLEET_SIZE = 4
    OMEGA_S = 120.0
    DELTA_S = 240.0
    PARTITIONS = 2


config = {
    'development': DevelopmentConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}
