import logging
from functools import wraps

import click

from app.exceptions import ConfigError, DataError, InvariantViolation

logger = logging.getLogger(__name__)

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_INVARIANT = 4


def exits_on_error(f):
    """
    Maps package errors raised by a CLI command onto its exit code.
    """
    @wraps(f)
    def decorated_function(*args, **kwargs):
        try:
            return f(*args, **kwargs)
        except ConfigError as e:
            click.echo(f'config error: {e}', err=True)
            raise SystemExit(EXIT_CONFIG)
        except DataError as e:
            click.echo(f'data error: {e}', err=True)
            raise SystemExit(EXIT_DATA)
        except InvariantViolation as e:
            logger.exception('invariant violated')
            click.echo(f'internal invariant violated: {e}', err=True)
            raise SystemExit(EXIT_INVARIANT)
    return decorated_function
