"""Bidirectional peer link modelled as two independent bounded FIFO queues."""
from __future__ import annotations

from typing import NamedTuple, Union

from .protocol import Message, Role


class BufferFull(Exception):
    pass


class BufferEmpty(Exception):
    pass


class LinkBuffer(NamedTuple):
    capacity: int = 1
    queue: tuple[Message, ...] = ()

    @property
    def full(self) -> bool:
        return len(self.queue) >= self.capacity

    @property
    def head(self):
        return self.queue[0] if self.queue else None

    def push(self, m: Message) -> "LinkBuffer":
        if self.full:
            raise BufferFull(f"buffer at capacity {self.capacity}")
        return self._replace(queue=self.queue + (m,))

    def pop(self) -> tuple[Message, "LinkBuffer"]:
        if not self.queue:
            raise BufferEmpty("buffer is empty")
        return self.queue[0], self._replace(queue=self.queue[1:])


class DuplexLink(NamedTuple):
    a_to_b: LinkBuffer
    b_to_a: LinkBuffer

    @classmethod
    def empty(cls, capacity: int = 1) -> "DuplexLink":
        if capacity < 1:
            raise ValueError("buffer capacity must be positive")
        return cls(LinkBuffer(capacity), LinkBuffer(capacity))

    def outbound(self, role: Role) -> LinkBuffer:
        return self.a_to_b if role is Role.A else self.b_to_a

    def inbound(self, role: Role) -> LinkBuffer:
        return self.b_to_a if role is Role.A else self.a_to_b


def send(link: DuplexLink, sender: Union[Role, str], m: Message) -> DuplexLink:
    """Enqueue ``m`` on the sender's outbound direction.

    Raises ``BufferFull`` when that direction is at capacity; callers treat
    the sending action as disabled (blocking semantics).
    """
    if Role(sender) is Role.A:
        return link._replace(a_to_b=link.a_to_b.push(m))
    return link._replace(b_to_a=link.b_to_a.push(m))


def receive(link: DuplexLink, receiver: Union[Role, str]) -> tuple[Message, DuplexLink]:
    """Dequeue the head of the receiver's inbound direction."""
    if Role(receiver) is Role.A:
        m, rest = link.b_to_a.pop()
        return m, link._replace(b_to_a=rest)
    m, rest = link.a_to_b.pop()
    return m, link._replace(a_to_b=rest)
