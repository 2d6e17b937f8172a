import pytest
from hypothesis import given, strategies as st

from lnverify.network import BufferEmpty, BufferFull, DuplexLink, LinkBuffer, receive, send
from lnverify.protocol import Message, MessageType, Role, Validity

ADD = Message(MessageType.ADD)
COMM = Message(MessageType.COMM)
REV = Message(MessageType.REV)


def test_send_into_empty():
    link = send(DuplexLink.empty(), Role.A, ADD)
    assert link.a_to_b.queue == (ADD,) and link.b_to_a.queue == ()


def test_send_into_full_blocks():
    link = send(DuplexLink.empty(), "A", ADD)
    with pytest.raises(BufferFull):
        send(link, "A", COMM)


def test_directions_are_independent():
    link = send(DuplexLink.empty(), "A", ADD)
    link = send(link, "B", REV)
    assert link.b_to_a.queue == (REV,) and link.a_to_b.queue == (ADD,)


def test_receive():
    m, link = receive(send(DuplexLink.empty(), "A", ADD), "B")
    assert m == ADD and link == DuplexLink.empty()
    with pytest.raises(BufferEmpty):
        receive(link, "B")


def test_bad_capacity():
    with pytest.raises(ValueError):
        DuplexLink.empty(0)


messages = st.builds(Message, st.sampled_from(list(MessageType)), st.sampled_from(list(Validity)), st.integers(0, 9))


@given(st.lists(messages, max_size=6), st.integers(1, 6))
def test_fifo_identity(msgs, cap):
    buf = LinkBuffer(cap)
    accepted = []
    for m in msgs:
        if buf.full:
            with pytest.raises(BufferFull):
                buf.push(m)
            continue
        buf = buf.push(m)
        accepted.append(m)
        assert len(buf.queue) <= cap
    out = []
    while buf.queue:
        m, buf = buf.pop()
        out.append(m)
    assert out == accepted
