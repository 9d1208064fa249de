"""
Ledger state layout and views.

State is a flat key/value map committed by the sparse state tree:

    acct/<address>        canonical Account
    iomc/S/<u64 id>       canonical LockedTransferOut
    iomc/R/<u64 id>       canonical LockedTransferIn
    iomc/S/count          u64 number of sending records
    iomc/R/count          u64 number of receiving records

The VM reads and writes through a ``StateView`` so the same code runs on
the enclave's partial state and on the operator's full tree.
"""

from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Set

from ..authlog.state_tree import SparseStateTree
from ..models.crypto import PublicKey
from ..models.ledger import (
    ACCOUNT_PREFIX,
    IN_PREFIX,
    OUT_PREFIX,
    Account,
    LockedTransferIn,
    LockedTransferOut,
)
from ..utils.crypto import hash_bytes
from ..utils.encoding import canonical_decode, canonical_encode


class MissingStateError(Exception):
    """A partial state lacks an entry the VM needed."""

    def __init__(self, key: bytes, tx_index: Optional[int] = None):
        self.key = key
        self.tx_index = tx_index
        super().__init__(f"State key {key!r} not in partial state (tx {tx_index})")


IOMC_SEND_ADDRESS = hash_bytes(b"cbdc/iomc/send")
IOMC_RECEIVE_ADDRESS = hash_bytes(b"cbdc/iomc/receive")
OUT_COUNT_KEY = OUT_PREFIX + b"count"
IN_COUNT_KEY = IN_PREFIX + b"count"


def address_of(pk: PublicKey) -> bytes:
    return hash_bytes(b"cbdc/addr/" + pk.encode())


def account_key(address: bytes) -> bytes:
    return ACCOUNT_PREFIX + address


def out_key(transfer_id: int) -> bytes:
    return OUT_PREFIX + transfer_id.to_bytes(8, "big")


def in_key(transfer_id: int) -> bytes:
    return IN_PREFIX + transfer_id.to_bytes(8, "big")


class StateView:
    """Typed access to ledger entries over raw ``get``/``set``."""

    def get(self, key: bytes) -> Optional[bytes]:
        raise NotImplementedError

    def set(self, key: bytes, value: Optional[bytes]) -> None:
        raise NotImplementedError

    def account(self, address: bytes) -> Optional[Account]:
        raw = self.get(account_key(address))
        return canonical_decode(raw, Account) if raw is not None else None

    def put_account(self, account: Account) -> None:
        self.set(account_key(account.address), canonical_encode(account))

    def counter(self, key: bytes) -> int:
        raw = self.get(key)
        return canonical_decode(raw) if raw is not None else 0

    def put_counter(self, key: bytes, value: int) -> None:
        self.set(key, canonical_encode(value))

    def transfer_out(self, transfer_id: int) -> Optional[LockedTransferOut]:
        raw = self.get(out_key(transfer_id))
        return canonical_decode(raw, LockedTransferOut) if raw is not None else None

    def put_transfer_out(self, transfer_id: int, record: LockedTransferOut) -> None:
        self.set(out_key(transfer_id), canonical_encode(record))

    def transfer_in(self, transfer_id: int) -> Optional[LockedTransferIn]:
        raw = self.get(in_key(transfer_id))
        return canonical_decode(raw, LockedTransferIn) if raw is not None else None

    def put_transfer_in(self, transfer_id: int, record: LockedTransferIn) -> None:
        self.set(in_key(transfer_id), canonical_encode(record))


class DictView(StateView):
    """Plain mapping; missing keys are errors unless ``strict`` is off."""

    def __init__(self, values: Dict[bytes, Optional[bytes]], strict: bool = True):
        self.values = values
        self.strict = strict

    def get(self, key: bytes) -> Optional[bytes]:
        if key not in self.values:
            if self.strict:
                raise MissingStateError(key)
            return None
        return self.values[key]

    def set(self, key: bytes, value: Optional[bytes]) -> None:
        if self.strict and key not in self.values:
            raise MissingStateError(key)
        self.values[key] = value


class RecordingView(StateView):
    """Reads through to the operator's full tree, recording every touched key."""

    def __init__(self, tree: SparseStateTree):
        self.tree = tree
        self.writes: Dict[bytes, Optional[bytes]] = {}
        self.touched: Set[bytes] = set()

    def get(self, key: bytes) -> Optional[bytes]:
        self.touched.add(key)
        if key in self.writes:
            return self.writes[key]
        return self.tree.get(key)

    def set(self, key: bytes, value: Optional[bytes]) -> None:
        self.touched.add(key)
        self.writes[key] = value


class Overlay(StateView):
    """Per-transaction journal; ``commit`` pushes writes to the parent view."""

    def __init__(self, parent: StateView):
        self.parent = parent
        self.writes: Dict[bytes, Optional[bytes]] = {}

    def get(self, key: bytes) -> Optional[bytes]:
        if key in self.writes:
            return self.writes[key]
        return self.parent.get(key)

    def set(self, key: bytes, value: Optional[bytes]) -> None:
        self.writes[key] = value

    def commit(self) -> None:
        for key, value in self.writes.items():
            self.parent.set(key, value)
        self.writes.clear()


def genesis_entries(treasury_pk: PublicKey, t_i0: int) -> Dict[bytes, bytes]:
    """Initial state: the operator treasury holds the initial issuance."""
    entries = {}
    for address, pk, balance in (
        (address_of(treasury_pk), treasury_pk, t_i0),
        (IOMC_SEND_ADDRESS, None, 0),
        (IOMC_RECEIVE_ADDRESS, None, 0),
    ):
        entries[account_key(address)] = canonical_encode(
            Account(address=address, pk=pk, balance=balance, nonce=0)
        )
    return entries


@dataclass(frozen=True)
class LedgerTotals:
    """Token accounting over one full ledger state."""
    balances: int
    iomc_send: int
    iomc_receive: int
    escrow: int

    @property
    def supply(self) -> int:
        # Escrowed tokens sit in the IOMC send account and are counted there.
        return self.balances + self.iomc_send + self.iomc_receive


def escrow_total(values: Iterable[bytes]) -> int:
    """Sum of pending sending-record amounts among raw record values."""
    total = 0
    for raw in values:
        record = canonical_decode(raw, LockedTransferOut)
        if record.pending:
            total += record.amount
    return total


def ledger_totals(entries: Dict[bytes, bytes]) -> LedgerTotals:
    balances = iomc_send = iomc_receive = 0
    records = []
    for key, raw in entries.items():
        if key.startswith(ACCOUNT_PREFIX):
            account = canonical_decode(raw, Account)
            if account.address == IOMC_SEND_ADDRESS:
                iomc_send = account.balance
            elif account.address == IOMC_RECEIVE_ADDRESS:
                iomc_receive = account.balance
            else:
                balances += account.balance
        elif key.startswith(OUT_PREFIX) and key != OUT_COUNT_KEY:
            records.append(raw)
    return LedgerTotals(balances, iomc_send, iomc_receive, escrow_total(records))
