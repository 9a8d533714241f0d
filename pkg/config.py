import os
from dotenv import load_dotenv

# Load environment variables from .env file if it exists
load_dotenv()

_TRUTHY = ['true', '1', 't', 'y', 'yes']


class Config:
    """Base configuration."""
    DEBUG = False
    TESTING = False

    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'WARNING').upper()

    # Output tree for experiment runs
    OUTPUT_ROOT = os.environ.get('LDLAB_OUTPUT_ROOT', os.path.join(os.path.abspath(os.path.dirname(__file__)), 'runs'))

    # Layer-parallel workers; 1 keeps runs bit-deterministic
    THREADS = int(os.environ.get('LDLAB_THREADS', 1))

    # Linear solvers (conjugate gradient) and operator-norm estimation
    CG_RTOL = float(os.environ.get('CG_RTOL', 1e-10))
    CG_MAXITER = int(os.environ.get('CG_MAXITER', 20000))
    POWER_ITERATIONS = int(os.environ.get('POWER_ITERATIONS', 50))

    # Better Stack (Logtail) configuration
    USE_BETTERSTACK = os.environ.get('USE_BETTERSTACK', 'false').lower() in _TRUTHY
    BETTERSTACK_SOURCE_TOKEN = os.environ.get('BETTERSTACK_SOURCE_TOKEN')
    BETTERSTACK_HOST = os.environ.get('BETTERSTACK_HOST', 'https://in.logs.betterstack.com')


class DevelopmentConfig(Config):
    """Development configuration."""
    DEBUG = os.environ.get('LDLAB_DEBUG', 'false').lower() in _TRUTHY


class ProductionConfig(Config):
    """Production configuration."""
    LOG_LEVEL = os.environ.get('LOG_LEVEL', 'INFO').upper()


class TestingConfig(Config):
    """Testing configuration."""
    TESTING = True
    USE_BETTERSTACK = False
    CG_RTOL = 1e-12
    CG_MAXITER = 50000
    THREADS = 1


config_by_name = {
    'development': DevelopmentConfig,
    'production': ProductionConfig,
    'testing': TestingConfig,
    'default': DevelopmentConfig
}


def get_config(name=None):
    env = name or os.getenv('LDLAB_ENV', 'development')
    return config_by_name.get(env, DevelopmentConfig)
