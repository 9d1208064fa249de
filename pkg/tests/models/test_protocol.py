"""
Tests for the protocol models: validation rules that guard every message,
record and scenario file.
"""

from fractions import Fraction

import pytest
from pydantic import ValidationError

from src.models.chain import Rate
from src.models.crypto import Scheme
from src.models.ledger import (
    FundArgs,
    IomcCall,
    IomcContract,
    LockedTransferOut,
    MicroTransaction,
    ReceiveCommitArgs,
    SendRevertArgs,
    Transfer,
)
from src.models.node import (
    AdversaryPolicy,
    ClientMessage,
    MessageKind,
    QueryAccount,
    QueryIomcAddrs,
    RegisterClient,
    SubmitTx,
)
from src.models.proofs import IncrementalProof, MembershipProof
from src.models.scenario import ScenarioConfig
from src.utils.crypto import keygen, sign

ALICE_KEYS = keygen(Scheme.PB, 7, "models/alice")
ALICE = ALICE_KEYS.public
BOB = keygen(Scheme.PB, 7, "models/bob").public
DIGEST = b"\x11" * 32


def _message(kind, payload, phase=0, sender=ALICE):
    return ClientMessage(kind=kind, payload=payload, sender_pk=sender, phase=phase)


@pytest.mark.unit
@pytest.mark.models
class TestIomcCall:
    """Method names must match their argument types."""

    def test_valid_call(self):
        call = IomcCall(contract=IomcContract.SEND, method="sendRevert", args=SendRevertArgs(transfer_id=0))
        assert call.canonical_method == "sendRevert"

    def test_claim_alias(self):
        call = IomcCall(
            contract=IomcContract.RECEIVE, method="receiveClaim",
            args=ReceiveCommitArgs(transfer_id=0, secret=b"\x01" * 32),
        )
        assert call.canonical_method == "receiveCommit"

    def test_unknown_method(self):
        with pytest.raises(ValidationError, match="Unknown IOMC method"):
            IomcCall(contract=IomcContract.SEND, method="sendAll", args=FundArgs())

    def test_method_on_wrong_contract(self):
        with pytest.raises(ValidationError, match="Unknown IOMC method"):
            IomcCall(contract=IomcContract.SEND, method="fund", args=FundArgs())

    def test_wrong_args(self):
        with pytest.raises(ValidationError, match="expects SendRevertArgs"):
            IomcCall(contract=IomcContract.SEND, method="sendRevert", args=FundArgs())


@pytest.mark.unit
@pytest.mark.models
class TestRecords:

    def _locked(self, **flags):
        return LockedTransferOut(
            sender=ALICE, receiver=BOB, receiver_ipsc="ipsc-B", amount=5, hashlock=DIGEST, timelock=10, **flags
        )

    def test_pending_until_settled(self):
        assert self._locked().pending
        assert not self._locked(is_completed=True).pending
        assert not self._locked(is_reverted=True).pending

    def test_completed_and_reverted_are_exclusive(self):
        with pytest.raises(ValidationError, match="both completed and reverted"):
            self._locked(is_completed=True, is_reverted=True)

    def test_amount_must_be_positive(self):
        with pytest.raises(ValidationError):
            LockedTransferOut(sender=ALICE, receiver=BOB, receiver_ipsc="ipsc-B", amount=0, hashlock=DIGEST,
                              timelock=10)

    def test_models_are_frozen(self):
        record = self._locked()
        with pytest.raises(ValidationError):
            record.amount = 6

    def test_amounts_fit_u64(self):
        with pytest.raises(ValidationError):
            MicroTransaction(sender_pk=ALICE, nonce=0, call=Transfer(to=DIGEST, amount=1 << 64))

    def test_tx_hash_changes_with_nonce(self):
        tx = MicroTransaction(sender_pk=ALICE, nonce=0, call=Transfer(to=DIGEST, amount=1))
        assert tx.tx_hash != tx.model_copy(update={"nonce": 1}).tx_hash
        assert MicroTransaction.decode(tx.encode()) == tx


@pytest.mark.unit
@pytest.mark.models
class TestProofShapes:

    @pytest.mark.parametrize("from_version,to_version", [(0, 3), (4, 3)])
    def test_incremental_versions(self, from_version, to_version):
        with pytest.raises(ValidationError, match="from_version"):
            IncrementalProof(from_version=from_version, to_version=to_version, from_root=DIGEST)

    @pytest.mark.parametrize("index,version", [(0, 3), (4, 3)])
    def test_membership_index(self, index, version):
        with pytest.raises(ValidationError, match="index must satisfy"):
            MembershipProof(index=index, version=version)

    def test_equal_versions_are_allowed(self):
        assert IncrementalProof(from_version=3, to_version=3, from_root=DIGEST).to_version == 3
        assert MembershipProof(index=3, version=3).index == 3


@pytest.mark.unit
@pytest.mark.models
class TestRate:
    """Yearly inflation rates."""

    @pytest.mark.parametrize("text,expected", [
        ("10%", Fraction(1, 10)),
        ("2.5%", Fraction(1, 40)),
        ("1/10", Fraction(1, 10)),
        ("0.05", Fraction(1, 20)),
        (" 0 ", Fraction(0)),
    ])
    def test_parse(self, text, expected):
        assert Rate.parse(text).as_fraction() == expected

    def test_negative(self):
        with pytest.raises(ValueError, match="non-negative"):
            Rate.parse("-1%")

    def test_zero_denominator(self):
        with pytest.raises(ValidationError):
            Rate(num=1, den=0)


@pytest.mark.unit
@pytest.mark.models
class TestClientMessage:

    def test_kind_must_match_payload(self):
        with pytest.raises(ValidationError, match="does not match payload"):
            _message(MessageKind.SUBMIT_TX, QueryIomcAddrs())

    def test_signing_payload_excludes_signature(self):
        message = _message(MessageKind.QUERY_IOMC_ADDRS, QueryIomcAddrs(), sender=ALICE_KEYS.public)
        signed = message.model_copy(update={"signature": sign(ALICE_KEYS, message.signing_payload())})
        assert signed.signing_payload() == message.signing_payload()
        assert signed.encode() != message.encode()
        assert ClientMessage.decode(signed.encode()) == signed


@pytest.mark.unit
@pytest.mark.models
class TestAdversaryPolicy:
    """Which messages a misbehaving operator drops."""

    def test_default_is_honest(self):
        policy = AdversaryPolicy()
        assert policy.honest
        assert not policy.censors(_message(MessageKind.QUERY_ACCOUNT, QueryAccount(pk=ALICE)))

    def test_censor_transactions(self):
        policy = AdversaryPolicy(censor_tx_from=(ALICE,))
        tx = MicroTransaction(sender_pk=ALICE, nonce=0, call=Transfer(to=DIGEST, amount=1))
        assert policy.censors(_message(MessageKind.SUBMIT_TX, SubmitTx(tx=tx)))
        assert not policy.censors(_message(MessageKind.SUBMIT_TX, SubmitTx(tx=tx), sender=BOB))
        assert not policy.censors(_message(MessageKind.QUERY_IOMC_ADDRS, QueryIomcAddrs()))

    def test_censor_queries(self):
        policy = AdversaryPolicy(censor_queries_from=(ALICE,))
        assert policy.censors(_message(MessageKind.QUERY_IOMC_ADDRS, QueryIomcAddrs()))
        assert not policy.censors(_message(MessageKind.REGISTER_CLIENT, RegisterClient(pk=ALICE)))

    def test_stall_phase(self):
        policy = AdversaryPolicy(stall_phase=3)
        assert policy.censors(_message(MessageKind.QUERY_IOMC_ADDRS, QueryIomcAddrs(), phase=3))
        assert policy.censors(_message(MessageKind.REGISTER_CLIENT, RegisterClient(pk=ALICE), phase=3))
        assert not policy.censors(_message(MessageKind.QUERY_IOMC_ADDRS, QueryIomcAddrs(), phase=2))

    @pytest.mark.parametrize("phase", [1, 5])
    def test_stall_phase_range(self, phase):
        with pytest.raises(ValidationError):
            AdversaryPolicy(stall_phase=phase)

    def test_json_round_trip_keeps_keys(self):
        policy = AdversaryPolicy(censor_tx_from=(ALICE,), drop_sync=True)
        assert AdversaryPolicy.model_validate_json(policy.model_dump_json()) == policy


def _scenario(**overrides):
    data = {
        "name": "s",
        "instances": [
            {"name": "A", "clients": [{"name": "alice", "balance": 10}]},
            {"name": "B", "clients": [{"name": "bob"}]},
        ],
    }
    data.update(overrides)
    return ScenarioConfig.model_validate(data)


@pytest.mark.unit
@pytest.mark.models
class TestScenarioConfig:
    """Scenario files are checked before anything runs."""

    def test_defaults(self):
        config = _scenario()
        assert config.imsc_mode == "decentralized"
        assert config.instance("A").t_i0 == 1000
        assert config.instance("A").i_r == "10%"
        assert config.home_of("bob") == "B"
        assert config.schedule == []

    def test_schedule_is_discriminated(self):
        config = _scenario(schedule=[
            {"at": 0, "action": "transfer", "id": "t1", "sender": "alice", "receiver": "bob", "amount": 5},
            {"at": 5, "action": "abort", "transfer": "t1"},
        ])
        assert [type(a).__name__ for a in config.schedule] == ["TransferAction", "AbortAction"]

    @pytest.mark.parametrize("overrides,message", [
        ({"schedule": [{"at": 5, "action": "replace_enclave", "instance": "A"},
                       {"at": 1, "action": "replace_enclave", "instance": "A"}]}, "non-decreasing"),
        ({"schedule": [{"at": 0, "action": "pay", "sender": "alice", "receiver": "zed", "amount": 1}]},
         "unknown client zed"),
        ({"schedule": [{"at": 0, "action": "issue", "instance": "Z", "amount": 1}]}, "unknown instance Z"),
        ({"schedule": [{"at": 0, "action": "abort", "transfer": "t9"}]}, "unknown transfer t9"),
        ({"schedule": [
            {"at": 0, "action": "transfer", "id": "t1", "sender": "alice", "receiver": "bob", "amount": 1},
            {"at": 0, "action": "transfer", "id": "t1", "sender": "alice", "receiver": "bob", "amount": 2},
        ]}, "duplicate transfer id"),
        ({"authority": "Q"}, "unknown authority"),
        ({"instances": [{"name": "A"}, {"name": "A"}]}, "duplicate instance"),
        ({"instances": [{"name": "A", "clients": [{"name": "x"}]}, {"name": "B", "clients": [{"name": "x"}]}]},
         "duplicate client"),
    ])
    def test_invalid(self, overrides, message):
        with pytest.raises(ValidationError, match=message):
            _scenario(**overrides)

    def test_unknown_field(self):
        with pytest.raises(ValidationError):
            _scenario(colour="blue")

    def test_unknown_action(self):
        with pytest.raises(ValidationError):
            _scenario(schedule=[{"at": 0, "action": "teleport"}])
