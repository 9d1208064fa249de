"""Chain fixtures: deploy contracts and run one call per block."""

from src.chain import IMSC_CENTRALIZED, IMSC_DECENTRALIZED, IPSC, ChainAccount, create_chain, deploy_address
from src.models.chain import DEPLOY_TARGET, ImscCInitArgs, ImscDInitArgs, IpscInitArgs, Rate
from src.models.crypto import Scheme
from src.models.enclave import EnclaveKeys, VersionTransitionPair
from src.utils.clock import VirtualClock
from src.utils.crypto import keygen, sealing_keygen, sign


def enclave_keys(label):
    """A stand-in enclave: raw key pairs plus the public EnclaveKeys."""
    tee = keygen(Scheme.TEE, 7, f"{label}/tee")
    pb = keygen(Scheme.PB, 7, f"{label}/pb")
    sealing = sealing_keygen(7, f"{label}/seal")
    return tee, pb, sealing, EnclaveKeys(pk_tee=tee.public, pk_pb=pb.public, sealing_pk=sealing.public)


def signed_pair(pb, root_from, root_to, t_i=1000, t_s=1000) -> VersionTransitionPair:
    unsigned = VersionTransitionPair(root_from=root_from, root_to=root_to, t_i=t_i, t_s=t_s)
    return unsigned.model_copy(update={"signature": sign(pb, unsigned.signing_payload())})


class ChainHarness:
    def __init__(self, finality_depth=1, seed=7):
        self.clock = VirtualClock()
        self.chain = create_chain(self.clock, seed=seed, finality_depth=finality_depth)

    def call(self, account: ChainAccount, target, method, args):
        """Submit, mine one block and return the receipt."""
        tx = account.build(target, method, args)
        self.chain.submit(tx)
        self.chain.produce_block()
        return self.chain.receipt(tx.tx_hash)

    def deploy_ipsc(self, operator: ChainAccount, keys: EnclaveKeys, t_i0=1000, rate="10%",
                    issue_authority=True) -> str:
        address = deploy_address(operator.pk, operator.next_nonce)
        args = IpscInitArgs(keys=keys, t_i0=t_i0, i_r=Rate.parse(rate), issue_authority=issue_authority)
        receipt = self.call(operator, DEPLOY_TARGET, IPSC, args)
        assert receipt.result == address
        return address

    def deploy_imsc_d(self, deployer: ChainAccount, ipscs, operators) -> str:
        args = ImscDInitArgs(ipscs=tuple(ipscs), operators=tuple(op.pk for op in operators))
        return self.call(deployer, DEPLOY_TARGET, IMSC_DECENTRALIZED, args).result

    def deploy_imsc_c(self, authority: ChainAccount, authority_ipsc) -> str:
        args = ImscCInitArgs(authority_ipsc=authority_ipsc)
        return self.call(authority, DEPLOY_TARGET, IMSC_CENTRALIZED, args).result
