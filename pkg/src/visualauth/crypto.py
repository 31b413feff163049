"""Key material, sealed payloads, signatures, keyboard permutations, OTPs.

Design constraints this module enforces:

* Every keypair is reproducible from a seed. Both curve25519 halves are
  derived from raw private bytes drawn off the caller's PRNG stream, so a
  scenario seed pins all key material.
* Every ciphertext is integrity protected. There is no unauthenticated
  mode; a flipped bit anywhere in a sealed payload must surface as
  IntegrityError at decryption, never as silently wrong plaintext.
* Signatures are detached and verification never raises on forgeries, it
  returns False.

The content cipher is AES-192-GCM (a counter-mode cipher plus a mandatory
tag). Public-key sealing wraps it in an X25519 ephemeral-static envelope.
"""

from __future__ import annotations

import base64
import enum
import random
import struct
from dataclasses import dataclass

from cryptography.exceptions import InvalidSignature, InvalidTag
from cryptography.hazmat.primitives import hashes, serialization
from cryptography.hazmat.primitives.asymmetric.ed25519 import (
    Ed25519PrivateKey,
    Ed25519PublicKey,
)
from cryptography.hazmat.primitives.asymmetric.x25519 import (
    X25519PrivateKey,
    X25519PublicKey,
)
from cryptography.hazmat.primitives.ciphers.aead import AESGCM
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .rng import as_rng

# 6x6 on-screen grid: lowercase letters then digits, case-insensitive inputs
# are folded before lookup.
ALPHABET = "abcdefghijklmnopqrstuvwxyz0123456789"
ALPHABET_SIZE = len(ALPHABET)
ALPHABET_INDEX = {ch: i for i, ch in enumerate(ALPHABET)}

NONCE_LEN = 16
DEFAULT_OTP_LEN = 8
SYMMETRIC_KEY_LEN = 24  # AES-192
SYMMETRIC_MAX_MESSAGE = 4096  # fixed-buffer symmetric mode refuses more

_GCM_NONCE_LEN = 12
_GCM_TAG_LEN = 16
_RAW = serialization.Encoding.Raw
_RAW_PUB = serialization.PublicFormat.Raw

KEYFILE_MAGIC = b"VAK1"


class CryptoError(Exception):
    """Base class for everything this module raises on purpose."""


class IntegrityError(CryptoError):
    """Ciphertext failed authentication: tampered, truncated, or wrong key."""


class OversizeMessageError(CryptoError):
    """Message exceeds the fixed symmetric buffer."""


class Role(enum.Enum):
    USER = "user"
    SERVER = "server"


class Scheme(enum.Enum):
    PUBLIC_KEY_HYBRID = "public_key_hybrid"
    SYMMETRIC_CTR = "symmetric_ctr"


_SCHEME_BYTE = {Scheme.PUBLIC_KEY_HYBRID: 0x01, Scheme.SYMMETRIC_CTR: 0x02}
_BYTE_SCHEME = {v: k for k, v in _SCHEME_BYTE.items()}


# -------- key pairs --------


@dataclass(frozen=True)
class KeyPair:
    """Sealing (X25519) plus signing (Ed25519) halves under one identity.

    public_key and private_key are opaque 64-byte strings: the sealing
    half first, the signing half second.
    """

    role: Role
    public_key: bytes
    private_key: bytes

    def __post_init__(self):
        if len(self.public_key) != 64 or len(self.private_key) != 64:
            raise ValueError("key halves must be 32+32 bytes")

    @property
    def seal_public(self) -> bytes:
        return self.public_key[:32]

    @property
    def sign_public(self) -> bytes:
        return self.public_key[32:]


def generate_keypair(role: Role, seed: random.Random | int) -> KeyPair:
    """Deterministically derive a keypair from a seed or PRNG stream.

    The same (role, seed) always yields byte-identical key material.
    """
    rng = as_rng(seed)
    seal_raw = rng.randbytes(32)
    sign_raw = rng.randbytes(32)
    seal_priv = X25519PrivateKey.from_private_bytes(seal_raw)
    sign_priv = Ed25519PrivateKey.from_private_bytes(sign_raw)
    pub = (
        seal_priv.public_key().public_bytes(_RAW, _RAW_PUB)
        + sign_priv.public_key().public_bytes(_RAW, _RAW_PUB)
    )
    return KeyPair(role=role, public_key=pub, private_key=seal_raw + sign_raw)


def save_keypair(path, pair: KeyPair) -> None:
    """Write magic + role byte + public + private, 133 bytes total."""
    role_byte = b"\x00" if pair.role is Role.USER else b"\x01"
    with open(path, "wb") as fh:
        fh.write(KEYFILE_MAGIC + role_byte + pair.public_key + pair.private_key)


def load_keypair(path) -> KeyPair:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:4] != KEYFILE_MAGIC:
        raise ValueError("not a key file: bad magic header")
    if len(blob) != 4 + 1 + 64 + 64:
        raise ValueError("key file truncated or overlong")
    role = Role.USER if blob[4] == 0 else Role.SERVER
    return KeyPair(role=role, public_key=blob[5:69], private_key=blob[69:])


# -------- sealed payloads --------


@dataclass(frozen=True)
class Ciphertext:
    """An integrity-protected sealed payload.

    body layout for PUBLIC_KEY_HYBRID: ephemeral public key (32) +
    cipher nonce (12) + ciphertext. For SYMMETRIC_CTR: cipher nonce (12) +
    ciphertext. tag is the 16-byte authenticator in both schemes.
    """

    scheme_id: Scheme
    body: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        return (
            bytes([_SCHEME_BYTE[self.scheme_id]])
            + struct.pack(">I", len(self.body))
            + self.body
            + self.tag
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Ciphertext":
        if len(blob) < 5 + _GCM_TAG_LEN:
            raise IntegrityError("ciphertext too short")
        scheme = _BYTE_SCHEME.get(blob[0])
        if scheme is None:
            raise IntegrityError("unknown scheme byte")
        (body_len,) = struct.unpack(">I", blob[1:5])
        if len(blob) != 5 + body_len + _GCM_TAG_LEN:
            raise IntegrityError("ciphertext length mismatch")
        return cls(scheme, blob[5 : 5 + body_len], blob[5 + body_len :])


def _hybrid_key(shared: bytes, eph_pub: bytes, recipient_pub: bytes) -> bytes:
    return HKDF(
        algorithm=hashes.SHA256(),
        length=SYMMETRIC_KEY_LEN,
        salt=None,
        info=b"visualauth.hybrid.v1" + eph_pub + recipient_pub,
    ).derive(shared)


def encrypt(public_key: bytes, message: bytes, rng: random.Random | int) -> Ciphertext:
    """Seal message to the holder of public_key's sealing half.

    An ephemeral X25519 key is drawn from rng, so the output is a pure
    function of (public_key, message, rng state). The recipient's public
    key and the scheme byte ride in the authenticated data: redirecting a
    ciphertext or relabeling its scheme breaks the tag.
    """
    rng = as_rng(rng)
    recipient = X25519PublicKey.from_public_bytes(public_key[:32])
    eph_priv = X25519PrivateKey.from_private_bytes(rng.randbytes(32))
    eph_pub = eph_priv.public_key().public_bytes(_RAW, _RAW_PUB)
    key = _hybrid_key(eph_priv.exchange(recipient), eph_pub, public_key[:32])
    nonce = rng.randbytes(_GCM_NONCE_LEN)
    aad = bytes([_SCHEME_BYTE[Scheme.PUBLIC_KEY_HYBRID]]) + public_key[:32]
    sealed = AESGCM(key).encrypt(nonce, message, aad)
    return Ciphertext(
        scheme_id=Scheme.PUBLIC_KEY_HYBRID,
        body=eph_pub + nonce + sealed[:-_GCM_TAG_LEN],
        tag=sealed[-_GCM_TAG_LEN:],
    )


def decrypt(pair: KeyPair, ciphertext: Ciphertext) -> bytes:
    """Open a sealed payload. Raises IntegrityError on any tampering,
    truncation, or wrong-key attempt; never returns corrupted plaintext."""
    if ciphertext.scheme_id is not Scheme.PUBLIC_KEY_HYBRID:
        raise IntegrityError("scheme mismatch: expected public_key_hybrid")
    if len(ciphertext.body) < 32 + _GCM_NONCE_LEN:
        raise IntegrityError("ciphertext body too short")
    eph_pub = ciphertext.body[:32]
    nonce = ciphertext.body[32 : 32 + _GCM_NONCE_LEN]
    ct = ciphertext.body[32 + _GCM_NONCE_LEN :] + ciphertext.tag
    try:
        priv = X25519PrivateKey.from_private_bytes(pair.private_key[:32])
        shared = priv.exchange(X25519PublicKey.from_public_bytes(eph_pub))
        key = _hybrid_key(shared, eph_pub, pair.seal_public)
        aad = bytes([_SCHEME_BYTE[Scheme.PUBLIC_KEY_HYBRID]]) + pair.seal_public
        return AESGCM(key).decrypt(nonce, ct, aad)
    except (InvalidTag, ValueError) as exc:
        raise IntegrityError("ciphertext rejected") from exc


def symmetric_encrypt(
    key: bytes, message: bytes, rng: random.Random | int
) -> Ciphertext:
    """Counter-mode seal under a raw 24-byte key; fixed-buffer mode."""
    if len(key) != SYMMETRIC_KEY_LEN:
        raise ValueError(f"symmetric key must be {SYMMETRIC_KEY_LEN} bytes")
    if len(message) > SYMMETRIC_MAX_MESSAGE:
        raise OversizeMessageError(
            f"message of {len(message)} bytes exceeds the "
            f"{SYMMETRIC_MAX_MESSAGE}-byte symmetric buffer"
        )
    rng = as_rng(rng)
    nonce = rng.randbytes(_GCM_NONCE_LEN)
    aad = bytes([_SCHEME_BYTE[Scheme.SYMMETRIC_CTR]])
    sealed = AESGCM(key).encrypt(nonce, message, aad)
    return Ciphertext(
        scheme_id=Scheme.SYMMETRIC_CTR,
        body=nonce + sealed[:-_GCM_TAG_LEN],
        tag=sealed[-_GCM_TAG_LEN:],
    )


def symmetric_decrypt(key: bytes, ciphertext: Ciphertext) -> bytes:
    if ciphertext.scheme_id is not Scheme.SYMMETRIC_CTR:
        raise IntegrityError("scheme mismatch: expected symmetric_ctr")
    if len(ciphertext.body) < _GCM_NONCE_LEN:
        raise IntegrityError("ciphertext body too short")
    nonce = ciphertext.body[:_GCM_NONCE_LEN]
    ct = ciphertext.body[_GCM_NONCE_LEN:] + ciphertext.tag
    try:
        aad = bytes([_SCHEME_BYTE[Scheme.SYMMETRIC_CTR]])
        return AESGCM(key).decrypt(nonce, ct, aad)
    except (InvalidTag, ValueError) as exc:
        raise IntegrityError("ciphertext rejected") from exc


# -------- signatures --------


@dataclass(frozen=True)
class Signature:
    sig: bytes
    signer: Role

    def to_bytes(self) -> bytes:
        return (b"\x00" if self.signer is Role.USER else b"\x01") + self.sig

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Signature":
        if len(blob) != 65:
            raise ValueError("signature blob must be 65 bytes")
        return cls(sig=blob[1:], signer=Role.USER if blob[0] == 0 else Role.SERVER)


def sign(pair: KeyPair, message: bytes) -> Signature:
    """Detached signature over message with the signing half of pair."""
    priv = Ed25519PrivateKey.from_private_bytes(pair.private_key[32:])
    return Signature(sig=priv.sign(message), signer=pair.role)


def verify(public_key: bytes, message: bytes, signature: Signature) -> bool:
    """True iff signature is valid for message under public_key.

    Any mutation of message or signature flips the result to False; this
    never raises for a mere forgery.
    """
    if len(signature.sig) != 64:
        return False
    try:
        Ed25519PublicKey.from_public_bytes(public_key[32:]).verify(
            signature.sig, message
        )
        return True
    except InvalidSignature:
        return False


# -------- keyboard permutations --------


@dataclass(frozen=True)
class KeyboardPermutation:
    """A bijection from the 36 grid positions to the 36 symbols.

    mapping[p] is the symbol rendered at position p. Serialized form is
    the 36 mapped symbols concatenated in position order.
    """

    mapping: tuple[str, ...]

    def __post_init__(self):
        if sorted(self.mapping) != sorted(ALPHABET):
            raise ValueError("mapping is not a bijection over the alphabet")

    def symbol_at(self, position: int) -> str:
        return self.mapping[position]

    def position_of(self, symbol: str) -> int:
        sym = symbol.lower()
        if sym not in ALPHABET_INDEX:
            raise ValueError(f"symbol {symbol!r} outside the alphabet")
        return self.mapping.index(sym)

    def resolve(self, positions) -> str:
        """Map a click-position sequence back to the symbols typed."""
        return "".join(self.mapping[p] for p in positions)

    def serialize(self) -> bytes:
        return "".join(self.mapping).encode("ascii")

    def to_base64(self) -> str:
        # for embedding in text contexts (reports, dumps)
        return base64.b64encode(self.serialize()).decode("ascii")

    @classmethod
    def from_serialized(cls, blob: bytes) -> "KeyboardPermutation":
        return cls(tuple(blob.decode("ascii")))

    @classmethod
    def from_base64(cls, text: str) -> "KeyboardPermutation":
        return cls.from_serialized(base64.b64decode(text.encode("ascii")))

    @classmethod
    def identity(cls) -> "KeyboardPermutation":
        return cls(tuple(ALPHABET))


def generate_permutation(rng: random.Random | int) -> KeyboardPermutation:
    """Uniform random layout via the PRNG's Fisher-Yates shuffle."""
    rng = as_rng(rng)
    symbols = list(ALPHABET)
    rng.shuffle(symbols)
    return KeyboardPermutation(tuple(symbols))


# -------- one-time passwords --------


@dataclass
class OtpToken:
    """A single-use password. consumed may flip False -> True exactly once."""

    value: str
    issued_at: int
    consumed: bool = False

    def consume(self) -> None:
        if self.consumed:
            raise CryptoError("token already consumed")
        self.consumed = True


def generate_otp(
    rng: random.Random | int,
    length: int = DEFAULT_OTP_LEN,
    issued_at: int = 0,
    outstanding=(),
) -> OtpToken:
    """Draw a fresh token over the alphabet.

    Freshness means the value differs from every unconsumed token in
    outstanding; collisions redraw.
    """
    if length <= 0:
        raise ValueError("otp length must be positive")
    rng = as_rng(rng)
    live = {t.value for t in outstanding if not t.consumed}
    while True:
        value = "".join(rng.choice(ALPHABET) for _ in range(length))
        if value not in live:
            return OtpToken(value=value, issued_at=issued_at)


# -------- nonces --------


@dataclass(frozen=True)
class Nonce:
    value: bytes
    issued_to_session: int

    def __post_init__(self):
        if len(self.value) != NONCE_LEN:
            raise ValueError(f"nonce must be {NONCE_LEN} bytes")


def fresh_nonce(
    rng: random.Random | int, session_id: int, seen: set[bytes] | None = None
) -> Nonce:
    """Draw a nonce, redrawing on collision with the seen set (which is
    updated in place so one server instance never repeats itself)."""
    rng = as_rng(rng)
    while True:
        value = rng.randbytes(NONCE_LEN)
        if seen is None:
            return Nonce(value, session_id)
        if value not in seen:
            seen.add(value)
            return Nonce(value, session_id)
