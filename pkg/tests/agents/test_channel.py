"""
Tests for the client-to-operator transports.
"""

import httpx
import pytest

from src.agents.channel import ChannelError, HttpChannel, InProcessChannel, decode_response
from src.models.crypto import Scheme
from src.models.node import AdversaryPolicy, IomcAddrs, NodeResponse, QueryIomcAddrs
from src.utils.crypto import keygen
from src.utils.encoding import frame
from tests.agents.helpers import message

CLIENT = keygen(Scheme.PB, 7, "channel/client")


def _mock_channel(handler) -> HttpChannel:
    client = httpx.Client(transport=httpx.MockTransport(handler), base_url="http://node")
    return HttpChannel("http://node", 4096, client=client)


@pytest.mark.unit
@pytest.mark.agents
class TestDecodeResponse:
    """Response frames from the node."""

    def test_empty_reply_means_dropped(self):
        assert decode_response(None, 1024) is None
        assert decode_response(b"", 1024) is None

    def test_response_frame(self):
        data = frame(NodeResponse(ok=False, error="nope").encode(), 1024)
        response = decode_response(data, 1024)
        assert response.ok is False
        assert response.error == "nope"

    def test_trailing_bytes(self):
        data = frame(NodeResponse(ok=True).encode(), 1024) + b"\x00"
        with pytest.raises(ChannelError, match="Trailing bytes"):
            decode_response(data, 1024)

    def test_oversized_frame(self):
        data = frame(NodeResponse(ok=True).encode(), 1024)
        with pytest.raises(ChannelError, match="exceeds limit"):
            decode_response(data, 4)


@pytest.mark.integration
@pytest.mark.agents
class TestInProcessChannel:
    """Frames handed straight to a node object."""

    def test_request_roundtrip(self, world):
        alice = world.wallets["alice"]
        channel = InProcessChannel(world.nodes["A"], world.settings.max_frame_bytes)
        response = channel.request(message(alice.account.keypair, QueryIomcAddrs()))
        assert response.ok is True
        assert isinstance(response.payload, IomcAddrs)

    def test_dropped_request(self, world):
        alice = world.wallets["alice"]
        node = world.nodes["A"]
        node.set_adversary(AdversaryPolicy(censor_queries_from=(alice.pk,)))
        channel = InProcessChannel(node, world.settings.max_frame_bytes)
        assert channel.request(message(alice.account.keypair, QueryIomcAddrs())) is None


@pytest.mark.unit
@pytest.mark.agents
class TestHttpChannel:
    """Frames posted over HTTP."""

    def test_no_content_means_dropped(self):
        channel = _mock_channel(lambda request: httpx.Response(204))
        assert channel.request(message(CLIENT, QueryIomcAddrs())) is None

    def test_posts_one_frame(self):
        seen = {}

        def handler(request: httpx.Request) -> httpx.Response:
            seen["path"] = request.url.path
            seen["content_type"] = request.headers["content-type"]
            return httpx.Response(200, content=frame(NodeResponse(ok=True).encode(), 4096))

        response = _mock_channel(handler).request(message(CLIENT, QueryIomcAddrs()))
        assert response.ok is True
        assert seen == {"path": "/frames", "content_type": "application/octet-stream"}

    def test_http_error_status(self):
        channel = _mock_channel(lambda request: httpx.Response(500))
        with pytest.raises(ChannelError, match="HTTP 500"):
            channel.request(message(CLIENT, QueryIomcAddrs()))

    def test_unreachable_node(self):
        def handler(request: httpx.Request) -> httpx.Response:
            raise httpx.ConnectError("connection refused", request=request)

        with pytest.raises(ChannelError, match="unreachable"):
            _mock_channel(handler).request(message(CLIENT, QueryIomcAddrs()))
