"""Session fabric for the four-party setting.

A session wires one user, one terminal, one smartphone, and one server
together over typed one-way channels and drives them with a
single-threaded FIFO event loop. Everything observable about a run is
captured twice: a transcript of every delivery (step, channel, tag,
payload digest) and a per-entity history of serialized state snapshots.

The snapshot history exists for one reason: secrecy claims about where
plaintext secrets may live are checked by scanning it, not by trusting
the protocol code. Channels carry read-only taps (for passive observers)
and entities carry outbound hooks and io taps (for an in-place
compromise); the honest handler code cannot tell whether it is being
watched.
"""

from __future__ import annotations

import dataclasses
import enum
import hashlib
import struct
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, ClassVar

from . import rng as rngmod
from .qr import VisualFrame

MAX_DELIVERIES = 64  # honest-run liveness budget


class ProtocolViolation(Exception):
    """An event arrived that no state machine is prepared to handle."""


class LivenessError(Exception):
    """A run exceeded the delivery budget without settling."""


class EntityKind(enum.Enum):
    USER = "user"
    TERMINAL = "terminal"
    SMARTPHONE = "smartphone"
    SERVER = "server"


class ChannelKind(enum.Enum):
    NETWORK = "network"
    VISUAL = "visual"
    CLICK = "click"
    CELLULAR_SIDE = "cellular_side"


# name -> (kind, sender, receiver); both terminal and smartphone displays
# fan out as two logical channels, one per audience.
TOPOLOGY: dict[str, tuple[ChannelKind, EntityKind, EntityKind]] = {
    "click_terminal": (ChannelKind.CLICK, EntityKind.USER, EntityKind.TERMINAL),
    "click_phone": (ChannelKind.CLICK, EntityKind.USER, EntityKind.SMARTPHONE),
    "net_up": (ChannelKind.NETWORK, EntityKind.TERMINAL, EntityKind.SERVER),
    "net_down": (ChannelKind.NETWORK, EntityKind.SERVER, EntityKind.TERMINAL),
    "terminal_display_phone": (ChannelKind.VISUAL, EntityKind.TERMINAL, EntityKind.SMARTPHONE),
    "terminal_display_user": (ChannelKind.VISUAL, EntityKind.TERMINAL, EntityKind.USER),
    "phone_display_user": (ChannelKind.VISUAL, EntityKind.SMARTPHONE, EntityKind.USER),
    "phone_display_terminal": (ChannelKind.VISUAL, EntityKind.SMARTPHONE, EntityKind.TERMINAL),
    "cellular": (ChannelKind.CELLULAR_SIDE, EntityKind.SMARTPHONE, EntityKind.SERVER),
}


# -------- message vocabulary --------

_TAG_BYTES: dict[str, int] = {}
_TAG_CHANNEL: dict[str, str] = {}


def register_message(channel_name: str):
    """Bind a message class to its one legal channel and assign a wire tag."""

    def deco(cls):
        tag = cls.TAG
        if tag in _TAG_BYTES:
            raise ValueError(f"duplicate message tag {tag}")
        if channel_name not in TOPOLOGY:
            raise ValueError(f"unknown channel {channel_name}")
        _TAG_BYTES[tag] = len(_TAG_BYTES) + 1
        _TAG_CHANNEL[tag] = channel_name
        return cls

    return deco


def canonical_bytes(obj) -> bytes:
    """Stable type-tagged serialization used for digests and snapshots."""
    if obj is None:
        return b"N"
    if isinstance(obj, bool):
        return b"?" + (b"\x01" if obj else b"\x00")
    if isinstance(obj, int):
        enc = str(obj).encode()
        return b"i" + struct.pack(">I", len(enc)) + enc
    if isinstance(obj, float):
        enc = repr(obj).encode()
        return b"f" + struct.pack(">I", len(enc)) + enc
    if isinstance(obj, str):
        enc = obj.encode("utf-8")
        return b"s" + struct.pack(">I", len(enc)) + enc
    if isinstance(obj, (bytes, bytearray)):
        return b"b" + struct.pack(">I", len(obj)) + bytes(obj)
    if isinstance(obj, enum.Enum):
        return canonical_bytes(obj.value)
    if isinstance(obj, (tuple, list)):
        parts = [canonical_bytes(x) for x in obj]
        return b"l" + struct.pack(">I", len(parts)) + b"".join(parts)
    if isinstance(obj, (set, frozenset)):
        parts = sorted(canonical_bytes(x) for x in obj)
        return b"e" + struct.pack(">I", len(parts)) + b"".join(parts)
    if isinstance(obj, dict):
        items = sorted((canonical_bytes(k), canonical_bytes(v)) for k, v in obj.items())
        return (
            b"d"
            + struct.pack(">I", len(items))
            + b"".join(k + v for k, v in items)
        )
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        name = type(obj).__name__.encode()
        body = b"".join(
            canonical_bytes(getattr(obj, f.name)) for f in dataclasses.fields(obj)
        )
        return b"D" + struct.pack(">I", len(name)) + name + body
    raise TypeError(f"cannot canonicalize {type(obj).__name__}")


@dataclass(frozen=True)
class Message:
    TAG: ClassVar[str] = ""

    @property
    def tag(self) -> str:
        return type(self).TAG

    def body_bytes(self) -> bytes:
        return b"".join(
            canonical_bytes(getattr(self, f.name)) for f in dataclasses.fields(self)
        )

    def wire(self) -> bytes:
        # tag byte, big-endian length, body
        body = self.body_bytes()
        return bytes([_TAG_BYTES[self.tag]]) + struct.pack(">I", len(body)) + body

    def digest(self) -> str:
        return hashlib.sha256(self.wire()).hexdigest()[:16]


@dataclass
class Channel:
    name: str
    kind: ChannelKind
    sender: EntityKind
    receiver: EntityKind
    taps: list[Callable] = field(default_factory=list)
    queue: deque = field(default_factory=deque)


@dataclass(frozen=True)
class Envelope:
    seq: int
    channel_name: str
    message: Message


@dataclass(frozen=True)
class TranscriptEvent:
    step: int
    channel_kind: ChannelKind
    sender: EntityKind
    receiver: EntityKind
    tag: str
    digest: str

    def line(self) -> str:
        return (
            f"{self.step}|{self.channel_kind.value}|{self.sender.value}"
            f"|{self.receiver.value}|{self.tag}|{self.digest}"
        )


class SecretKind(enum.Enum):
    PASSWORD = "password"
    PERMUTATION = "permutation"
    OTP = "otp"
    USER_PRIVATE_KEY = "user_private_key"
    SERVER_PRIVATE_KEY = "server_private_key"
    CREDENTIAL_CIPHERTEXT = "credential_ciphertext"
    VIEW_FIELD = "view_field"


@dataclass(frozen=True)
class SecretProbe:
    kind: SecretKind
    data: bytes
    allowed: frozenset[EntityKind]


@dataclass(frozen=True)
class SecretSighting:
    entity: EntityKind
    kind: SecretKind
    step: int
    violation: bool


class Entity:
    """Base participant: a tag-dispatched state machine with a state dict.

    Handlers are on_<tag> methods; each delivery runs exactly one handler
    and then snapshots the entity's state.
    """

    kind: ClassVar[EntityKind]

    def __init__(self, session: "Session"):
        self.session = session
        self.state: dict = {}
        self.snapshots: list[tuple[int, bytes]] = []
        self.outbound_hooks: list[Callable] = []  # installed by a compromise
        self.io_taps: list[Callable] = []

    def emit(self, channel_name: str, message: Message) -> None:
        self.session.emit(self, channel_name, message)

    def handle(self, message: Message) -> None:
        handler = getattr(self, "on_" + message.tag, None)
        if handler is None:
            raise ProtocolViolation(
                f"{self.kind.value} has no handler for {message.tag!r}"
            )
        handler(message)

    def on_idle(self) -> None:
        """Called once when the queues drain without an outcome."""

    def take_snapshot(self, step: int) -> None:
        self.snapshots.append((step, canonical_bytes(self.state)))


class Session:
    """One protocol run: entities, channels, queues, transcript, verdict."""

    _ids = iter(range(1, 1 << 62))

    def __init__(self, seed: int, flags=None):
        self.session_id = next(Session._ids)
        self.seed = seed
        self.rng = rngmod.fork(seed, "session")
        self.flags = flags
        self.channels: dict[str, Channel] = {
            name: Channel(name, *TOPOLOGY[name]) for name in TOPOLOGY
        }
        self.entities: dict[EntityKind, Entity] = {}
        self.transcript: list[TranscriptEvent] = []
        self.step = 0
        self._seq = 0
        self._order: deque[Envelope] = deque()
        self._emitted: list[Message] | None = None
        self.outcome = None
        self.closed = False
        self.frame_log: list[tuple[int, str, VisualFrame]] = []
        self.secret_probes: list[SecretProbe] = []

    def add_entity(self, entity: Entity) -> None:
        if entity.kind in self.entities:
            raise ValueError(f"second {entity.kind.value} in one session")
        self.entities[entity.kind] = entity

    def register_secret(self, kind: SecretKind, data: bytes, allowed) -> None:
        if len(data) < 3:
            raise ValueError("secret probe too short to scan for")
        self.secret_probes.append(SecretProbe(kind, bytes(data), frozenset(allowed)))

    def note_frame(self, context: str, frame: VisualFrame) -> None:
        self.frame_log.append((self.step, context, frame))

    def emit(self, sender: Entity, channel_name: str, message: Message) -> None:
        channel = self.channels[channel_name]
        if channel.sender is not sender.kind:
            raise ProtocolViolation(
                f"{sender.kind.value} cannot send on {channel_name}"
            )
        if _TAG_CHANNEL.get(message.tag) != channel_name:
            raise ProtocolViolation(
                f"message {message.tag!r} is not declared for channel {channel_name}"
            )
        for hook in sender.outbound_hooks:
            message = hook(channel_name, message)
            if message is None:
                return  # dropped in transit by the compromise
        for tap in sender.io_taps:
            tap("out", channel, message)
        self._seq += 1
        envelope = Envelope(self._seq, channel_name, message)
        channel.queue.append(envelope)
        self._order.append(envelope)
        for tap in channel.taps:
            tap(self.step, channel, message)
        if self._emitted is not None:
            self._emitted.append(message)

    def inject(self, channel_name: str, message: Message) -> Envelope:
        """Queue a message without a sending entity (adversarial insertion)."""
        channel = self.channels[channel_name]
        self._seq += 1
        envelope = Envelope(self._seq, channel_name, message)
        channel.queue.append(envelope)
        self._order.append(envelope)
        for tap in channel.taps:
            tap(self.step, channel, message)
        return envelope

    def finish(self, outcome) -> None:
        if self.outcome is None:
            self.outcome = outcome

    def run(self, max_deliveries: int = MAX_DELIVERIES):
        """Drain the queues; one idle round lets timeouts fire fail-closed."""
        deliveries = 0
        idled = False
        while True:
            while self._order:
                if deliveries >= max_deliveries:
                    raise LivenessError(
                        f"exceeded {max_deliveries} deliveries without settling"
                    )
                deliver(self, self._order[0])
                deliveries += 1
            if self.outcome is not None or idled:
                break
            idled = True
            for kind in EntityKind:
                if kind in self.entities:
                    self.entities[kind].on_idle()
        self.closed = True
        return self.outcome


def deliver(session: Session, envelope: Envelope) -> list[Message]:
    """Deliver one event: advance the receiving machine exactly one handler.

    Returns the messages the handler emitted. Raises ProtocolViolation for
    events delivered to a closed session or that no handler accepts.
    """
    if session.closed:
        raise ProtocolViolation("message delivered to a completed session")
    channel = session.channels[envelope.channel_name]
    try:
        channel.queue.remove(envelope)
        session._order.remove(envelope)
    except ValueError:
        pass  # out-of-band envelope, delivered directly
    receiver = session.entities.get(channel.receiver)
    if receiver is None:
        raise ProtocolViolation(f"no {channel.receiver.value} in this session")
    session.step += 1
    msg = envelope.message
    session.transcript.append(
        TranscriptEvent(
            step=session.step,
            channel_kind=channel.kind,
            sender=channel.sender,
            receiver=channel.receiver,
            tag=msg.tag,
            digest=msg.digest(),
        )
    )
    for tap in receiver.io_taps:
        tap("in", channel, msg)
    previous, session._emitted = session._emitted, []
    try:
        receiver.handle(msg)
        emitted = session._emitted
    finally:
        session._emitted = previous
    receiver.take_snapshot(session.step)
    return emitted


def export_transcript(session: Session) -> str:
    """step|channel|from|to|tag|digest lines, one per delivery."""
    return "".join(event.line() + "\n" for event in session.transcript)


def scan_states_for_secrets(session: Session) -> list[SecretSighting]:
    """Hunt every registered secret through every snapshot ever taken.

    Reports the first step each (entity, secret) pair was seen at;
    violation marks a sighting outside the secret's allowed set.
    """
    sightings = []
    for probe in session.secret_probes:
        for kind, entity in session.entities.items():
            for step, snap in entity.snapshots:
                if probe.data in snap:
                    sightings.append(
                        SecretSighting(
                            entity=kind,
                            kind=probe.kind,
                            step=step,
                            violation=kind not in probe.allowed,
                        )
                    )
                    break
    return sightings


def secrecy_violations(session: Session) -> list[SecretSighting]:
    return [s for s in scan_states_for_secrets(session) if s.violation]
