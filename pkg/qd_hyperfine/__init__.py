__version__ = '0.1.0'

from .physcore import load_database  # noqa: E402,F401
