import pytest

from src.chain import ChainAccount, ChainReader, get_cens_req, get_lroot, get_supply
from src.models.chain import (
    ChainTxStatus,
    CensQryArgs,
    CensTxArgs,
    ImscAddArgs,
    ReplaceEncArgs,
    ResolveCensQryArgs,
    ResolveCensTxArgs,
    SnapshotArgs,
    cens_qry_statement,
    cens_tx_statement,
    replace_statement,
)
from src.models.enclave import CensStatus
from src.models.ledger import AccessTicket
from src.utils.crypto import hash_bytes, seal, sealing_keygen, sign
from tests.chain.helpers import ChainHarness, enclave_keys, signed_pair

ROOT_1 = hash_bytes(b"root-1")
ROOT_2 = hash_bytes(b"root-2")
ROOT_3 = hash_bytes(b"root-3")


class Deployment:
    def __init__(self, issue_authority=True, finality_depth=1):
        self.harness = ChainHarness(finality_depth=finality_depth)
        self.operator = ChainAccount.generate(7, "operator")
        self.tee, self.pb, self.sealing, self.keys = enclave_keys("enclave")
        self.address = self.harness.deploy_ipsc(self.operator, self.keys, issue_authority=issue_authority)

    @property
    def state(self):
        return self.harness.chain.read_latest(self.address)

    def snapshot(self, pair, sender=None):
        args = SnapshotArgs(pair=pair)
        return self.harness.call(sender or self.operator, self.address, "snapshotLedger", args)

    def ticket(self, client, expires_at=1000, issuing_ipsc=None, key=None):
        unsigned = AccessTicket(client_pk=client.pk, issuing_ipsc=issuing_ipsc or self.address,
                                expires_at=expires_at)
        return unsigned.model_copy(update={"signature": sign(key or self.tee, unsigned.signing_payload())})

    def escalate_tx(self, client, **ticket_args):
        etx = seal(self.keys.sealing_pk, b"encrypted transaction", ephemeral_seed=client.pk.short())
        receipt = self.harness.call(client, self.address, "submitCensTx",
                                    CensTxArgs(etx=etx, ticket=self.ticket(client, **ticket_args)))
        return etx, receipt

    def escalate_query(self, client):
        equery = seal(self.keys.sealing_pk, b"encrypted query", ephemeral_seed="q")
        receipt = self.harness.call(client, self.address, "submitCensQry",
                                    CensQryArgs(equery=equery, ticket=self.ticket(client)))
        return equery, receipt


@pytest.fixture
def ipsc():
    return Deployment()


@pytest.fixture
def alice():
    return ChainAccount.generate(7, "alice")


class TestDeployment:
    """Test the IPSC constructor."""

    def test_initial_state(self, ipsc):
        """A fresh IPSC has no snapshot and the initial supply."""
        state = ipsc.state

        assert get_lroot(state) is None
        assert get_supply(state) == (1000, 1000)
        assert state.pk_operator == ipsc.operator.pk
        assert state.keys == ipsc.keys
        assert state.i_r.as_fraction() * 10 == 1
        assert state.accepted_snapshots == 0


class TestSnapshotLedger:
    """Test version-transition pairs."""

    def test_chaining_pairs_advance_the_root(self, ipsc):
        """Each accepted pair moves LRoot_pb and the supply counters."""
        first = ipsc.snapshot(signed_pair(ipsc.pb, None, ROOT_1))
        second = ipsc.snapshot(signed_pair(ipsc.pb, ROOT_1, ROOT_2, t_i=1050, t_s=1040))

        assert first.result is True and second.result is True
        assert get_lroot(ipsc.state) == ROOT_2
        assert get_supply(ipsc.state) == (1050, 1040)
        assert ipsc.state.accepted_snapshots == 2

    def test_non_chaining_pair_is_ignored(self, ipsc):
        """A stale pair is not an error, it just changes nothing."""
        ipsc.snapshot(signed_pair(ipsc.pb, None, ROOT_1))
        receipt = ipsc.snapshot(signed_pair(ipsc.pb, ROOT_3, ROOT_2))

        assert receipt.status == ChainTxStatus.OK
        assert receipt.result is False
        assert get_lroot(ipsc.state) == ROOT_1

    def test_anyone_may_relay_a_pair(self, ipsc, alice):
        """Clients can push a signed pair themselves."""
        receipt = ipsc.snapshot(signed_pair(ipsc.pb, None, ROOT_1), sender=alice)

        assert receipt.result is True

    def test_foreign_signature_reverts(self, ipsc):
        """Only the current enclave's PB key may sign transitions."""
        _, other_pb, _, _ = enclave_keys("impostor")
        receipt = ipsc.snapshot(signed_pair(other_pb, None, ROOT_1))

        assert receipt.status == ChainTxStatus.REVERTED
        assert receipt.reason == "bad enclave signature"

    def test_inflation_cap(self, ipsc):
        """t_i may not exceed the first-year cap."""
        over = ipsc.snapshot(signed_pair(ipsc.pb, None, ROOT_1, t_i=1101, t_s=1101))
        at_cap = ipsc.snapshot(signed_pair(ipsc.pb, None, ROOT_1, t_i=1100, t_s=1100))

        assert over.reason == "inflation rate exceeded"
        assert at_cap.result is True

    def test_instance_without_authority_cannot_issue(self):
        """Without issue authority t_i is frozen."""
        ipsc = Deployment(issue_authority=False)
        receipt = ipsc.snapshot(signed_pair(ipsc.pb, None, ROOT_1, t_i=1001, t_s=1001))

        assert receipt.reason == "instance cannot issue tokens"
        assert ipsc.snapshot(signed_pair(ipsc.pb, None, ROOT_1, t_s=990)).result is True


class TestCensorshipRequests:
    """Test the public request list."""

    def test_request_is_appended(self, ipsc, alice):
        """An authorized client posts an encrypted transaction."""
        etx, receipt = ipsc.escalate_tx(alice)

        assert receipt.result == 0
        info = get_cens_req(ipsc.state, 0)
        assert info.etx == etx
        assert info.requester == alice.pk
        assert not info.resolved
        assert get_cens_req(ipsc.state, 5) is None

    @pytest.mark.parametrize("ticket_args,reason", [
        ({"issuing_ipsc": "elsewhere"}, "ticket issued for another instance"),
        ({"expires_at": 0}, "ticket expired"),
    ])
    def test_ticket_checks(self, ipsc, alice, ticket_args, reason):
        """Tickets must name this IPSC and still be valid."""
        ipsc.harness.clock.advance(10)
        _, receipt = ipsc.escalate_tx(alice, **ticket_args)

        assert receipt.status == ChainTxStatus.REVERTED
        assert receipt.reason == reason

    def test_ticket_bound_to_its_client(self, ipsc, alice):
        """A ticket cannot be used by another sender."""
        mallory = ChainAccount.generate(7, "mallory")
        etx = seal(ipsc.keys.sealing_pk, b"x", ephemeral_seed="m")
        receipt = ipsc.harness.call(mallory, ipsc.address, "submitCensTx",
                                    CensTxArgs(etx=etx, ticket=ipsc.ticket(alice)))

        assert receipt.reason == "ticket belongs to another client"

    def test_ticket_signed_by_the_enclave(self, ipsc, alice):
        """A self-made ticket is refused."""
        forger, _, _, _ = enclave_keys("forger")
        _, receipt = ipsc.escalate_tx(alice, key=forger)

        assert receipt.reason == "ticket not signed by this instance's enclave"

    def test_resolution_needs_the_enclave_signature(self, ipsc, alice):
        """Resolving requires a PB signature over the request and status."""
        etx, _ = ipsc.escalate_tx(alice)
        forged = ResolveCensTxArgs(index=0, status=CensStatus.OK,
                                   signature=sign(alice.keypair, cens_tx_statement(etx, CensStatus.OK)))
        bad = ipsc.harness.call(ipsc.operator, ipsc.address, "resolveCensTx", forged)
        genuine = ResolveCensTxArgs(index=0, status=CensStatus.OK,
                                    signature=sign(ipsc.pb, cens_tx_statement(etx, CensStatus.OK)))
        good = ipsc.harness.call(ipsc.operator, ipsc.address, "resolveCensTx", genuine)
        again = ipsc.harness.call(ipsc.operator, ipsc.address, "resolveCensTx", genuine)

        assert bad.reason == "bad enclave signature"
        assert good.result is True
        assert get_cens_req(ipsc.state, 0).status == CensStatus.OK
        assert again.reason == "request already resolved"

    def test_query_resolution_carries_the_sealed_answer(self, ipsc, alice):
        """Answered queries store the encrypted response publicly."""
        equery, receipt = ipsc.escalate_query(alice)
        edata = seal(sealing_keygen(7, "reply").public, b"answer", ephemeral_seed="a")
        statement = cens_qry_statement(equery, CensStatus.ANSWERED, edata)
        args = ResolveCensQryArgs(index=receipt.result, status=CensStatus.ANSWERED, edata=edata,
                                  signature=sign(ipsc.pb, statement))
        ipsc.harness.call(ipsc.operator, ipsc.address, "resolveCensQry", args)

        info = get_cens_req(ipsc.state, 0)
        assert info.status == CensStatus.ANSWERED
        assert info.edata == edata

    def test_request_kinds_do_not_mix(self, ipsc, alice):
        """A query cannot be resolved as a transaction, nor with a transaction status."""
        equery, _ = ipsc.escalate_query(alice)
        as_tx = ResolveCensTxArgs(index=0, status=CensStatus.OK, signature=sign(ipsc.pb, b"x"))
        edata = seal(sealing_keygen(7, "reply").public, b"answer", ephemeral_seed="a")
        wrong_status = ResolveCensQryArgs(
            index=0, status=CensStatus.OK, edata=edata,
            signature=sign(ipsc.pb, cens_qry_statement(equery, CensStatus.OK, edata)),
        )

        assert ipsc.harness.call(ipsc.operator, ipsc.address, "resolveCensTx", as_tx).reason \
            == "request is not a transaction"
        assert ipsc.harness.call(ipsc.operator, ipsc.address, "resolveCensQry", wrong_status).reason \
            == "bad status"

    def test_index_out_of_range(self, ipsc):
        """Resolving a request that does not exist reverts."""
        args = ResolveCensTxArgs(index=3, status=CensStatus.OK, signature=sign(ipsc.pb, b"x"))

        assert ipsc.harness.call(ipsc.operator, ipsc.address, "resolveCensTx", args).reason \
            == "request index out of range"


class TestReplaceEnclave:
    """Test enclave rotation."""

    def _replace(self, ipsc, keys, pair, sender=None, signer=None):
        signer = signer or ipsc.operator.keypair
        signature = sign(signer, replace_statement(keys, pair))
        args = ReplaceEncArgs(keys=keys, pair=pair, operator_signature=signature)
        return ipsc.harness.call(sender or ipsc.operator, ipsc.address, "replaceEnc", args)

    def test_rotation_extends_key_histories(self, ipsc, alice):
        """The new keys sign from now on; old tickets stay valid."""
        ipsc.snapshot(signed_pair(ipsc.pb, None, ROOT_1))
        _, new_pb, _, new_keys = enclave_keys("replacement")
        receipt = self._replace(ipsc, new_keys, signed_pair(new_pb, ROOT_1, ROOT_1))

        assert receipt.result is True
        state = ipsc.state
        assert state.keys == new_keys
        assert state.pk_tee_history == (ipsc.keys.pk_tee, new_keys.pk_tee)
        assert get_lroot(state) == ROOT_1

        assert ipsc.snapshot(signed_pair(ipsc.pb, ROOT_1, ROOT_2)).reason == "bad enclave signature"
        assert ipsc.snapshot(signed_pair(new_pb, ROOT_1, ROOT_2)).result is True
        _, escalated = ipsc.escalate_tx(alice)
        assert escalated.status == ChainTxStatus.OK

    def test_only_the_operator_rotates(self, ipsc, alice):
        """Neither another sender nor another signature is accepted."""
        _, new_pb, _, new_keys = enclave_keys("replacement")
        pair = signed_pair(new_pb, None, ROOT_1)

        assert self._replace(ipsc, new_keys, pair, sender=alice).reason == \
            "only the operator can replace the enclave"
        assert self._replace(ipsc, new_keys, pair, signer=alice.keypair).reason == "bad operator signature"

    def test_rotation_must_chain(self, ipsc):
        """Unlike snapshotLedger, a non-chaining pair reverts the rotation."""
        ipsc.snapshot(signed_pair(ipsc.pb, None, ROOT_1))
        _, new_pb, _, new_keys = enclave_keys("replacement")
        receipt = self._replace(ipsc, new_keys, signed_pair(new_pb, ROOT_2, ROOT_3))

        assert receipt.reason == "snapshot does not extend the current root"
        assert ipsc.state.keys == ipsc.keys


class TestChainReader:
    """Test the finalized view enclaves and clients read."""

    def test_snapshot_roots_follow_finality(self):
        """Only roots at finalized heights are reported, oldest first."""
        ipsc = Deployment(finality_depth=2)
        authority = ChainAccount.generate(7, "authority")
        imsc = ipsc.harness.deploy_imsc_c(authority, ipsc.address)
        reader = ChainReader(ipsc.harness.chain, imsc)

        ipsc.snapshot(signed_pair(ipsc.pb, None, ROOT_1))
        ipsc.snapshot(signed_pair(ipsc.pb, ROOT_1, ROOT_2))
        assert reader.snapshot_roots(ipsc.address) == (ROOT_1,)
        assert reader.snapshot_root(ipsc.address) == ROOT_1

        ipsc.harness.chain.produce_block()
        assert reader.snapshot_roots(ipsc.address) == (ROOT_1, ROOT_2)
        assert reader.is_approved(ipsc.address)
        assert not reader.is_approved("unknown")
        assert reader.ipsc("unknown") is None

    def test_registry_changes_are_seen_after_finality(self):
        """A newly added instance is approved once the block is final."""
        ipsc = Deployment(finality_depth=2)
        authority = ChainAccount.generate(7, "authority")
        imsc = ipsc.harness.deploy_imsc_c(authority, "A")
        reader = ChainReader(ipsc.harness.chain, imsc)
        ipsc.harness.call(authority, imsc, "add", ImscAddArgs(ipsc=ipsc.address, operator=ipsc.operator.pk))

        assert not reader.is_approved(ipsc.address)
        ipsc.harness.chain.produce_block()
        assert reader.approved() == tuple(sorted(("A", ipsc.address)))
