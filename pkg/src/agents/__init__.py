# Protocol roles: bank operators, client wallets and the transfer workflow
from .bank_node import BankNode, InstanceParams, NodeError
from .channel import Channel, ChannelError, HttpChannel, InProcessChannel
from .client_wallet import ClientWallet, TransferAborted, WalletError
from .orchestrator import TransferOrchestrator
from .router import TransferRouter

__all__ = [
    "BankNode",
    "InstanceParams",
    "NodeError",
    "Channel",
    "ChannelError",
    "HttpChannel",
    "InProcessChannel",
    "ClientWallet",
    "TransferAborted",
    "WalletError",
    "TransferOrchestrator",
    "TransferRouter",
]
