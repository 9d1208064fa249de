# Utility functions and helpers
from .config import get_settings, setup_environment
from .logging_config import (
    setup_logging,
    get_logger,
    log_enclave_exec,
    log_chain_tx,
    log_transfer_phase,
    log_api_request,
    log_error_with_context
)

__all__ = [
    "get_settings",
    "setup_environment",
    "setup_logging",
    "get_logger",
    "log_enclave_exec",
    "log_chain_tx",
    "log_transfer_phase",
    "log_api_request",
    "log_error_with_context"
]
