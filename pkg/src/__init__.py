# Interoperable CBDC simulator package
from .utils import setup_logging, setup_environment

# Initialize logging and environment on import
setup_environment()
setup_logging()
