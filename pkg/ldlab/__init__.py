"""Lawrence-Doniach laboratory: layered superconductor energies and their limit"""
import logging

from config import get_config
from .version import VERSION

logging.getLogger(__name__).addHandler(logging.NullHandler())

__all__ = ['create_lab', 'VERSION']


def create_lab(config_name=None):
    """Load settings and configure logging and solver defaults.

    Args:
        config_name: Key of ``config_by_name``; defaults to ``LDLAB_ENV``.

    Returns:
        Instantiated settings object.
    """
    settings = get_config(config_name)()
    level = logging.DEBUG if settings.DEBUG else getattr(logging, settings.LOG_LEVEL, logging.WARNING)
    logging.basicConfig(level=level)
    logger = logging.getLogger(__name__)
    logger.setLevel(level)

    # Better Stack
    if settings.USE_BETTERSTACK and settings.BETTERSTACK_SOURCE_TOKEN:
        try:
            from logtail import LogtailHandler
            handler = LogtailHandler(
                source_token=settings.BETTERSTACK_SOURCE_TOKEN,
                host=settings.BETTERSTACK_HOST
            )
            logger.addHandler(handler)
            logger.info("Better Stack logging enabled")
        except Exception as e:
            logger.warning(f"Failed to setup Better Stack: {e}")

    from .lib.solvers import configure_solvers
    configure_solvers(rtol=settings.CG_RTOL, maxiter=settings.CG_MAXITER,
                      power_iterations=settings.POWER_ITERATIONS)
    from .lib.parallel import configure_threads
    configure_threads(settings.THREADS)

    logger.debug(f"ldlab {VERSION} ready (threads={settings.THREADS})")
    return settings
