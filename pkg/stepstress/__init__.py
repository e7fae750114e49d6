"""stepstress - robust estimation for interval-monitored step-stress life tests."""

from importlib.metadata import PackageNotFoundError, version

from loguru import logger

try:
    __version__ = version("stepstress-mdpde")
except PackageNotFoundError:
    __version__ = "0.0.0+local"
__app_name__ = "stepstress"

# Library logging stays silent until the CLI (or the caller) enables it.
logger.disable("stepstress")
