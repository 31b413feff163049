"""The machine-readable visual channel: framing, capacity, corruption.

A frame is the data layer of a 2D barcode: mode header + packed payload
bits + pad codewords + Reed-Solomon parity over GF(256), flattened to a
single block. Matrix layout, masking, and optics sit below the modeled
granularity; corruption is applied per codeword.

Decoding success is a step function of the damage: a frame with c
corrupted codewords decodes iff c <= correction_budget(spec), where the
budget is floor(parity_count / 2). Within budget the recorded damage is
healed and the bitstream is parsed for real; beyond it decoding raises.
A parity recheck after healing means a decode can never silently return
wrong bytes, even for damage inflicted behind the model's back.

Capacity constants for versions 1..10 are the published standard values;
the test suite re-derives every entry from the codeword counts and the
bit-packing arithmetic. Letters in alphanumeric mode are lowercase here
(the protocol alphabet is lowercase); uppercase input is folded. The
45-value capacity arithmetic is unchanged by that swap.
"""

from __future__ import annotations

import base64
import enum
import random
from dataclasses import dataclass, replace
from functools import lru_cache

from .rng import as_rng

MIN_VERSION = 1
MAX_VERSION = 10


class ChannelError(Exception):
    pass


class CapacityError(ChannelError):
    """Payload does not fit the frame. required_version is the smallest
    version that would fit at the same ec/mode, or None if none <= 10 does."""

    def __init__(self, message, required_version=None):
        super().__init__(message)
        self.required_version = required_version


class PayloadError(ChannelError):
    """Payload contains symbols outside the mode's charset."""


class UncorrectableFrameError(ChannelError):
    """Damage exceeds the correction budget (or was inflicted off the books)."""


class EcLevel(enum.Enum):
    L = "L"
    M = "M"
    Q = "Q"
    H = "H"


class Mode(enum.Enum):
    NUMERIC = "numeric"
    ALPHANUMERIC = "alphanumeric"
    BYTE = "byte"


_MODE_INDICATOR = {Mode.NUMERIC: 0b0001, Mode.ALPHANUMERIC: 0b0010, Mode.BYTE: 0b0100}
_INDICATOR_MODE = {v: k for k, v in _MODE_INDICATOR.items()}

# total codewords per version 1..10
_TOTAL_CODEWORDS = (26, 44, 70, 100, 134, 172, 196, 242, 292, 346)

# parity codewords per version 1..10, flattened to one block per (L, M, Q, H)
_EC_CODEWORDS = {
    1: {"L": 7, "M": 10, "Q": 13, "H": 17},
    2: {"L": 10, "M": 16, "Q": 22, "H": 28},
    3: {"L": 15, "M": 26, "Q": 36, "H": 44},
    4: {"L": 20, "M": 36, "Q": 52, "H": 64},
    5: {"L": 26, "M": 48, "Q": 72, "H": 88},
    6: {"L": 36, "M": 64, "Q": 96, "H": 112},
    7: {"L": 40, "M": 72, "Q": 108, "H": 130},
    8: {"L": 48, "M": 88, "Q": 132, "H": 156},
    9: {"L": 60, "M": 110, "Q": 160, "H": 192},
    10: {"L": 72, "M": 130, "Q": 192, "H": 224},
}

# published character capacities, (numeric, alphanumeric, byte)
_CAPACITY = {
    1: {"L": (41, 25, 17), "M": (34, 20, 14), "Q": (27, 16, 11), "H": (17, 10, 7)},
    2: {"L": (77, 47, 32), "M": (63, 38, 26), "Q": (48, 29, 20), "H": (34, 20, 14)},
    3: {"L": (127, 77, 53), "M": (101, 61, 42), "Q": (77, 47, 32), "H": (58, 35, 24)},
    4: {"L": (187, 114, 78), "M": (149, 90, 62), "Q": (111, 67, 46), "H": (82, 50, 34)},
    5: {"L": (255, 154, 106), "M": (202, 122, 84), "Q": (144, 87, 60), "H": (106, 64, 44)},
    6: {"L": (322, 195, 134), "M": (255, 154, 106), "Q": (178, 108, 74), "H": (139, 84, 58)},
    7: {"L": (370, 224, 154), "M": (293, 178, 122), "Q": (207, 125, 86), "H": (154, 93, 64)},
    8: {"L": (461, 279, 192), "M": (365, 221, 152), "Q": (259, 157, 108), "H": (202, 122, 84)},
    9: {"L": (552, 335, 230), "M": (432, 262, 180), "Q": (312, 189, 130), "H": (235, 143, 98)},
    10: {"L": (652, 395, 271), "M": (513, 311, 213), "Q": (364, 221, 151), "H": (288, 174, 119)},
}

# single-symbol ceiling of the format itself (largest version, lowest ec)
GLOBAL_MAX = {Mode.NUMERIC: 7089, Mode.ALPHANUMERIC: 4296, Mode.BYTE: 2953}

_MODE_COLUMN = {Mode.NUMERIC: 0, Mode.ALPHANUMERIC: 1, Mode.BYTE: 2}

# digits, lowercase letters, then the nine specials; 45 values as standard
ALNUM_CHARSET = "0123456789abcdefghijklmnopqrstuvwxyz $%*+-./:"
_ALNUM_INDEX = {ch: i for i, ch in enumerate(ALNUM_CHARSET)}


def _count_bits(version: int, mode: Mode) -> int:
    # count-indicator width; versions 1..9 vs 10.. differ
    if mode is Mode.NUMERIC:
        return 10 if version <= 9 else 12
    if mode is Mode.ALPHANUMERIC:
        return 9 if version <= 9 else 11
    return 8 if version <= 9 else 16


@dataclass(frozen=True)
class FrameSpec:
    version: int
    ec_level: EcLevel
    mode: Mode

    def __post_init__(self):
        if not (MIN_VERSION <= self.version <= MAX_VERSION):
            raise ValueError(f"version must be {MIN_VERSION}..{MAX_VERSION}")

    @property
    def side_modules(self) -> int:
        return 17 + 4 * self.version

    @property
    def module_count(self) -> int:
        return self.side_modules**2


def capacity(spec: FrameSpec) -> int:
    """Published character capacity for a version/level/mode combination."""
    return _CAPACITY[spec.version][spec.ec_level.value][_MODE_COLUMN[spec.mode]]


def data_codeword_count(spec: FrameSpec) -> int:
    return _TOTAL_CODEWORDS[spec.version - 1] - _EC_CODEWORDS[spec.version][spec.ec_level.value]


def parity_codeword_count(spec: FrameSpec) -> int:
    return _EC_CODEWORDS[spec.version][spec.ec_level.value]


def correction_budget(spec: FrameSpec) -> int:
    """Codewords of damage the frame survives: floor(parity / 2)."""
    return parity_codeword_count(spec) // 2


def derived_capacity(spec: FrameSpec) -> int:
    """Capacity re-derived from codeword counts and packing arithmetic.

    Exists so the published table can be cross-checked rather than trusted.
    """
    bits = 8 * data_codeword_count(spec) - 4 - _count_bits(spec.version, spec.mode)
    if bits < 0:
        return 0
    if spec.mode is Mode.NUMERIC:
        triples, rem = divmod(bits, 10)
        return 3 * triples + (2 if rem >= 7 else 1 if rem >= 4 else 0)
    if spec.mode is Mode.ALPHANUMERIC:
        pairs, rem = divmod(bits, 11)
        return 2 * pairs + (1 if rem >= 6 else 0)
    return bits // 8


# -------- GF(256) Reed-Solomon parity --------

_GF_EXP = [0] * 512
_GF_LOG = [0] * 256
_x = 1
for _i in range(255):
    _GF_EXP[_i] = _x
    _GF_LOG[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= 0x11D
for _i in range(255, 512):
    _GF_EXP[_i] = _GF_EXP[_i - 255]


def _gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return _GF_EXP[_GF_LOG[a] + _GF_LOG[b]]


@lru_cache(maxsize=None)
def _generator_poly(degree: int) -> tuple[int, ...]:
    g = [1]
    for i in range(degree):
        nxt = [0] * (len(g) + 1)
        for j, coef in enumerate(g):
            nxt[j] ^= _gf_mul(coef, _GF_EXP[i])
            nxt[j + 1] ^= coef
        g = nxt
    return tuple(reversed(g))  # highest degree first


def rs_parity(data: bytes, degree: int) -> bytes:
    """Reed-Solomon parity of data, degree codewords long."""
    gen = _generator_poly(degree)
    rem = bytearray(degree)
    for byte in data:
        factor = byte ^ rem[0]
        del rem[0]
        rem.append(0)
        if factor:
            flog = _GF_LOG[factor]
            for i in range(degree):
                coef = gen[i + 1]
                if coef:
                    rem[i] ^= _GF_EXP[flog + _GF_LOG[coef]]
    return bytes(rem)


# -------- bit packing --------


class _BitWriter:
    def __init__(self):
        self.bits: list[int] = []

    def put(self, value: int, width: int) -> None:
        for shift in range(width - 1, -1, -1):
            self.bits.append((value >> shift) & 1)

    def to_codewords(self, n_codewords: int) -> bytes:
        bits = self.bits
        # terminator: up to four zero bits, then pad to a byte boundary
        bits = bits + [0] * min(4, 8 * n_codewords - len(bits))
        bits = bits + [0] * (-len(bits) % 8)
        out = bytearray()
        for i in range(0, len(bits), 8):
            byte = 0
            for b in bits[i : i + 8]:
                byte = (byte << 1) | b
            out.append(byte)
        # alternate pad codewords fill the remainder
        pads = (0xEC, 0x11)
        i = 0
        while len(out) < n_codewords:
            out.append(pads[i % 2])
            i += 1
        return bytes(out)


class _BitReader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, width: int) -> int:
        value = 0
        for _ in range(width):
            byte = self.data[self.pos >> 3]
            value = (value << 1) | ((byte >> (7 - (self.pos & 7))) & 1)
            self.pos += 1
        return value


def _fold_payload(payload: bytes, mode: Mode) -> bytes:
    if mode is Mode.BYTE:
        return payload
    try:
        text = payload.decode("ascii")
    except UnicodeDecodeError:
        raise PayloadError("text modes take ASCII payloads") from None
    text = text.lower()
    if mode is Mode.NUMERIC:
        if not all(c.isdigit() for c in text):
            raise PayloadError("numeric mode takes digits only")
    else:
        bad = [c for c in text if c not in _ALNUM_INDEX]
        if bad:
            raise PayloadError(f"symbols outside the alphanumeric charset: {bad[:5]!r}")
    return text.encode("ascii")


def _pack(payload: bytes, spec: FrameSpec) -> bytes:
    w = _BitWriter()
    w.put(_MODE_INDICATOR[spec.mode], 4)
    w.put(len(payload), _count_bits(spec.version, spec.mode))
    if spec.mode is Mode.NUMERIC:
        text = payload.decode("ascii")
        for i in range(0, len(text) - 2, 3):
            w.put(int(text[i : i + 3]), 10)
        rem = len(text) % 3
        if rem == 2:
            w.put(int(text[-2:]), 7)
        elif rem == 1:
            w.put(int(text[-1:]), 4)
    elif spec.mode is Mode.ALPHANUMERIC:
        vals = [_ALNUM_INDEX[c] for c in payload.decode("ascii")]
        for i in range(0, len(vals) - 1, 2):
            w.put(vals[i] * 45 + vals[i + 1], 11)
        if len(vals) % 2:
            w.put(vals[-1], 6)
    else:
        for byte in payload:
            w.put(byte, 8)
    return w.to_codewords(data_codeword_count(spec))


def _unpack(data_codewords: bytes, version: int) -> bytes:
    r = _BitReader(data_codewords)
    indicator = r.take(4)
    mode = _INDICATOR_MODE.get(indicator)
    if mode is None:
        raise UncorrectableFrameError(f"bad mode indicator {indicator:#06b}")
    count = r.take(_count_bits(version, mode))
    try:
        if mode is Mode.NUMERIC:
            out = []
            for i in range(0, count - 2, 3):
                out.append(f"{r.take(10):03d}")
            rem = count % 3
            if rem == 2:
                out.append(f"{r.take(7):02d}")
            elif rem == 1:
                out.append(f"{r.take(4):01d}")
            return "".join(out).encode("ascii")
        if mode is Mode.ALPHANUMERIC:
            out = []
            for _ in range(count // 2):
                pair = r.take(11)
                out.append(ALNUM_CHARSET[pair // 45])
                out.append(ALNUM_CHARSET[pair % 45])
            if count % 2:
                out.append(ALNUM_CHARSET[r.take(6)])
            return "".join(out).encode("ascii")
        return bytes(r.take(8) for _ in range(count))
    except IndexError:
        raise UncorrectableFrameError("bitstream ran dry while parsing") from None


# -------- frames --------


@dataclass(frozen=True)
class VisualFrame:
    """One displayed barcode: spec, original payload, codewords, damage.

    codewords reflects damage applied through corrupt(); damage_record
    keeps the xor masks so an in-budget decode can heal them.
    """

    spec: FrameSpec
    payload: bytes
    codewords: bytes
    corrupted_codewords: frozenset[int] = frozenset()
    damage_record: tuple[tuple[int, int], ...] = ()


def qr_encode(payload: bytes, spec: FrameSpec) -> VisualFrame:
    """Frame a payload, or raise CapacityError naming the version needed."""
    payload = _fold_payload(payload, spec.mode)
    cap = capacity(spec)
    if len(payload) > cap:
        required = None
        for v in range(spec.version + 1, MAX_VERSION + 1):
            if len(payload) <= capacity(FrameSpec(v, spec.ec_level, spec.mode)):
                required = v
                break
        if required is None:
            raise CapacityError(
                f"{len(payload)} symbols exceed every version up to "
                f"{MAX_VERSION} at {spec.ec_level.value}/{spec.mode.value} "
                f"(format ceiling {GLOBAL_MAX[spec.mode]})",
                required_version=None,
            )
        raise CapacityError(
            f"{len(payload)} symbols exceed version {spec.version} "
            f"{spec.ec_level.value}/{spec.mode.value} capacity {cap}; "
            f"needs version {required}",
            required_version=required,
        )
    data = _pack(payload, spec)
    parity = rs_parity(data, parity_codeword_count(spec))
    return VisualFrame(spec=spec, payload=payload, codewords=data + parity)


def choose_spec(
    payload: bytes, mode: Mode = Mode.BYTE, ec_level: EcLevel = EcLevel.M
) -> FrameSpec:
    """Smallest version whose capacity fits the payload at ec_level/mode."""
    length = len(_fold_payload(payload, mode))
    for v in range(MIN_VERSION, MAX_VERSION + 1):
        spec = FrameSpec(v, ec_level, mode)
        if length <= capacity(spec):
            return spec
    raise CapacityError(
        f"{length} symbols fit no version up to {MAX_VERSION} at "
        f"{ec_level.value}/{mode.value}",
        required_version=None,
    )


def corrupt(frame: VisualFrame, count: int, seed: random.Random | int) -> VisualFrame:
    """Damage count distinct codewords, chosen and masked off the seed.

    The same seed on the same frame yields the identical corruption set.
    """
    total = len(frame.codewords)
    if count < 0 or count > total:
        raise ValueError(f"corruption count must be 0..{total}")
    rng = as_rng(seed)
    indices = sorted(rng.sample(range(total), count))
    masks = [(i, rng.randrange(1, 256)) for i in indices]
    damaged = bytearray(frame.codewords)
    for i, mask in masks:
        damaged[i] ^= mask
    return replace(
        frame,
        codewords=bytes(damaged),
        corrupted_codewords=frame.corrupted_codewords | set(indices),
        damage_record=frame.damage_record + tuple(masks),
    )


def qr_decode(frame: VisualFrame) -> bytes:
    """Recover the payload or raise UncorrectableFrameError.

    Succeeds iff the corrupted-codeword count is within the frame's budget;
    the healed stream must also pass a full parity recheck, so a decode
    never hands back bytes that differ from the encoded payload.
    """
    budget = correction_budget(frame.spec)
    if len(frame.corrupted_codewords) > budget:
        raise UncorrectableFrameError(
            f"{len(frame.corrupted_codewords)} corrupted codewords exceed "
            f"the correction budget {budget}"
        )
    healed = bytearray(frame.codewords)
    for i, mask in frame.damage_record:
        healed[i] ^= mask
    n_parity = parity_codeword_count(frame.spec)
    data, parity = bytes(healed[:-n_parity]), bytes(healed[-n_parity:])
    if rs_parity(data, n_parity) != parity:
        raise UncorrectableFrameError("parity recheck failed: unrecorded damage")
    return _unpack(data, frame.spec.version)


def estimated_scan_seconds(spec: FrameSpec, a: float, b: float) -> float:
    """Affine scan-cost estimate a + b * module_count. A labeled estimate
    for reports only; nothing asserts against it."""
    return a + b * spec.module_count


def dump_frame(frame: VisualFrame) -> str:
    """Two-line export: 'QRV <version> <ec> <mode> <payload_len>' + codewords."""
    head = (
        f"QRV {frame.spec.version} {frame.spec.ec_level.value} "
        f"{frame.spec.mode.value} {len(frame.payload)}"
    )
    return head + "\n" + base64.b64encode(frame.codewords).decode("ascii") + "\n"
