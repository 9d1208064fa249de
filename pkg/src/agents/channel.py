"""
Client-to-operator transport.

Every request travels as one length-prefixed canonical frame. The in-process
channel hands frames straight to a ``BankNode``; the HTTP channel posts them
to the FastAPI binding of a node running elsewhere.
"""

from typing import Optional, Protocol

import httpx

from ..models.node import ClientMessage, NodeResponse
from ..utils import get_logger
from ..utils.encoding import EncodingError, canonical_decode, frame, unframe

logger = get_logger(__name__)

FRAME_MEDIA_TYPE = "application/octet-stream"


class ChannelError(Exception):
    """The transport failed; distinct from a silently dropped request."""
    pass


class Channel(Protocol):
    def request(self, message: ClientMessage) -> Optional[NodeResponse]:
        """Send one message; ``None`` means the operator gave no answer."""
        ...


def decode_response(data: Optional[bytes], max_bytes: int) -> Optional[NodeResponse]:
    if not data:
        return None
    try:
        payload, rest = unframe(data, max_bytes)
        if rest:
            raise EncodingError("Trailing bytes after frame")
        return canonical_decode(payload, NodeResponse)
    except (EncodingError, ValueError) as exc:
        raise ChannelError(f"Malformed response frame: {exc}") from exc


class InProcessChannel:
    """Duplex channel to a node living in the same process."""

    def __init__(self, node, max_frame_bytes: int):
        self.node = node
        self.max_frame_bytes = max_frame_bytes

    def request(self, message: ClientMessage) -> Optional[NodeResponse]:
        reply = self.node.handle_frame(frame(message.encode(), self.max_frame_bytes))
        return decode_response(reply, self.max_frame_bytes)


class HttpChannel:
    """Channel to a node served by ``src.api.main``."""

    def __init__(self, base_url: str, max_frame_bytes: int, timeout: float = 10.0,
                 client: Optional[httpx.Client] = None):
        self.max_frame_bytes = max_frame_bytes
        self.client = client or httpx.Client(base_url=base_url, timeout=timeout)

    def request(self, message: ClientMessage) -> Optional[NodeResponse]:
        try:
            response = self.client.post(
                "/frames",
                content=frame(message.encode(), self.max_frame_bytes),
                headers={"Content-Type": FRAME_MEDIA_TYPE},
            )
        except httpx.HTTPError as exc:
            raise ChannelError(f"Node unreachable: {exc}") from exc
        if response.status_code == 204:
            return None
        if response.status_code != 200:
            raise ChannelError(f"Node answered HTTP {response.status_code}")
        return decode_response(response.content, self.max_frame_bytes)

    def close(self) -> None:
        self.client.close()
