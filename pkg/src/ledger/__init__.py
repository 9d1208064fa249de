# Micro-ledger: state layout, native VM, IOMC contracts, issuance cap
from .state import (
    IOMC_RECEIVE_ADDRESS,
    IOMC_SEND_ADDRESS,
    DictView,
    MissingStateError,
    Overlay,
    RecordingView,
    StateView,
    account_key,
    address_of,
    escrow_total,
    LedgerTotals,
    ledger_totals,
    genesis_entries,
    in_key,
    out_key,
)
from .iomc import ExecutionContext, Revert, call_iomc
from .vm import VmError, VmResult, execute_batch, run_vm, screen
from .inflation import allowed_issued, meets_inflation_rate

__all__ = [
    "IOMC_RECEIVE_ADDRESS",
    "IOMC_SEND_ADDRESS",
    "DictView",
    "MissingStateError",
    "Overlay",
    "RecordingView",
    "StateView",
    "account_key",
    "address_of",
    "escrow_total",
    "LedgerTotals",
    "ledger_totals",
    "genesis_entries",
    "in_key",
    "out_key",
    "ExecutionContext",
    "Revert",
    "call_iomc",
    "VmError",
    "VmResult",
    "execute_batch",
    "run_vm",
    "screen",
    "allowed_issued",
    "meets_inflation_rate",
]
