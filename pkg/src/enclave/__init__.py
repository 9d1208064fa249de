# Simulated trusted execution: the instance program and its light client
from .light_client import FinalizedReader, LightClient, UnknownInstanceError
from .runtime import (
    MEASUREMENT,
    Enclave,
    EnclaveError,
    ExecOutput,
    IssuanceError,
    RegistrationError,
    StaleStateError,
)

__all__ = [
    "FinalizedReader",
    "LightClient",
    "UnknownInstanceError",
    "MEASUREMENT",
    "Enclave",
    "EnclaveError",
    "ExecOutput",
    "IssuanceError",
    "RegistrationError",
    "StaleStateError",
]
