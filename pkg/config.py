import os
from dotenv import load_dotenv

load_dotenv()


def _get_int(name, default):
    """Read an integer environment variable, raising ValueError on junk"""
    raw = os.environ.get(name)
    if not raw:
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"{name} must be an integer, got {raw!r}")


def _get_float(name, default):
    """Read a float environment variable, raising ValueError on junk"""
    raw = os.environ.get(name)
    if not raw:
        return default
    try:
        return float(raw)
    except ValueError:
        raise ValueError(f"{name} must be a number, got {raw!r}")


class Config:
    # Data settings
    TRUNCATION = _get_int('ALLELIX_TRUNCATION', 5)
    WINDOW_SIZE = _get_int('ALLELIX_WINDOW_SIZE', 10000)
    ALPHA = _get_float('ALLELIX_ALPHA', 0.0)

    # Runtime settings
    THREADS = _get_int('ALLELIX_THREADS', 1)
    LOG_LEVEL = os.environ.get('ALLELIX_LOG_LEVEL') or 'INFO'

    # Continued fractions (Lentz)
    CF_EPS = _get_float('ALLELIX_CF_EPS', 1e-12)
    CF_MAX_ITER = _get_int('ALLELIX_CF_MAX_ITER', 500)

    # Extended precision tails: mpmath working precision floor and the
    # double-precision tail estimate below which it kicks in
    PRECISION_BITS = _get_int('ALLELIX_PRECISION_BITS', 256)
    EXTENDED_THRESHOLD = _get_float('ALLELIX_EXTENDED_THRESHOLD', 1e-6)

    # Optimizer
    OPTIMIZER_TOL = _get_float('ALLELIX_OPTIMIZER_TOL', 1e-8)
    MAX_EVALS = _get_int('ALLELIX_MAX_EVALS', 2000)

    # Project store
    STORE_FORMAT_VERSION = 1
    PROJECT_SUFFIX = '.mixproj'
