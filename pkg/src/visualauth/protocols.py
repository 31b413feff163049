"""The three visualized login protocols and the transaction extensions.

Flow shapes (honest runs):

* keyboard_permutation: the server encrypts a fresh random keyboard layout
  to the user's public key and frames it; the terminal renders the frame
  beside a blank 6x6 grid; the smartphone decrypts and shows the layout;
  the user clicks positions; the server alone resolves positions back to
  symbols. The terminal never learns which symbol any click meant.
* encrypted_otp: the server frames an encrypted one-time password; the
  smartphone decrypts and displays it; the user types it on the terminal;
  the token is consumed on first successful use.
* nonce_upload: the server frames a plaintext nonce; the user types id and
  password on the smartphone, which seals (nonce, id, password, server
  name) to the server's public key and displays the ciphertext as a frame
  the terminal camera captures and relays. The terminal holds ciphertext
  only, and a stale or mismatched nonce is refused.

Extensions run inside an established session: signed transaction
confirmations verified on the smartphone, encrypted document fields
readable only through the smartphone, and a cellular side-channel copy
that a transaction must match before the server executes it (absence of
the copy fails closed).
"""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field, replace

from . import crypto, entities, qr, rng as rngmod
from .crypto import (
    KeyPair,
    KeyboardPermutation,
    Nonce,
    OtpToken,
    Role,
    Signature,
)
from .entities import (
    Entity,
    EntityKind,
    Message,
    SecretKind,
    Session,
    register_message,
)
from .qr import EcLevel, Mode, VisualFrame

GRID_ROWS = 6
GRID_COLS = 6
MASK_GLYPH = "*"


class Protocol(enum.Enum):
    P1 = "P1"  # randomized blank keyboard
    P2 = "P2"  # encrypted one-time password
    P3 = "P3"  # nonce challenge, credentials sealed on the phone
    TXVERIFY = "TXVERIFY"
    SECUREVIEW = "SECUREVIEW"
    HIJACKGUARD = "HIJACKGUARD"


AUTH_PROTOCOLS = (Protocol.P1, Protocol.P2, Protocol.P3)


class Outcome(enum.Enum):
    AUTHENTICATED = "authenticated"
    DENIED = "denied"
    ABORTED = "aborted"
    CONFIRMED = "confirmed"
    USER_FLAGGED_MISMATCH = "user_flagged_mismatch"
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    VIEWED = "viewed"


# -------- credentials and transactions --------


@dataclass(frozen=True)
class Credential:
    user_id: str
    password: str
    keypair: KeyPair  # lives on the user's phone; the server sees only the public half


@dataclass
class CredentialStore:
    """Provisioned identities plus the server's own keys and name."""

    server_pair: KeyPair
    server_name: str
    users: dict[str, Credential] = field(default_factory=dict)
    issued_nonces: set[bytes] = field(default_factory=set)

    def add_user(self, credential: Credential) -> None:
        if credential.user_id in self.users:
            raise ValueError(f"duplicate user id {credential.user_id!r}")
        self.users[credential.user_id] = credential

    def public_key_of(self, user_id: str) -> bytes:
        return self.users[user_id].keypair.public_key

    @classmethod
    def provision(cls, seed: int, server_name: str = "acme-bank", users=(("alice", "data"),)):
        store = cls(
            server_pair=crypto.generate_keypair(Role.SERVER, rngmod.fork(seed, "server-key")),
            server_name=server_name,
        )
        for user_id, password in users:
            store.add_user(
                Credential(
                    user_id=user_id,
                    password=password,
                    keypair=crypto.generate_keypair(Role.USER, rngmod.fork(seed, "user-key", user_id)),
                )
            )
        return store


@dataclass(frozen=True)
class Transaction:
    receiver_account: str
    amount: int  # minor units
    receiver_name: str

    def __post_init__(self):
        if self.amount <= 0:
            raise ValueError("amount must be positive")
        for text in (self.receiver_account, self.receiver_name):
            if "\n" in text or "=" in text:
                raise ValueError("transaction fields may not contain '\\n' or '='")


def canonical_tx_bytes(tx: Transaction, nonce: bytes | None = None) -> bytes:
    """label=value lines in fixed order; the signing and comparison form."""
    lines = [
        f"receiver_account={tx.receiver_account}",
        f"amount={tx.amount}",
        f"receiver_name={tx.receiver_name}",
    ]
    if nonce is not None:
        lines.append(f"nonce={nonce.hex()}")
    return "\n".join(lines).encode("utf-8")


def parse_tx_canonical(blob: bytes) -> tuple[Transaction, bytes | None]:
    fields_ = dict(line.split("=", 1) for line in blob.decode("utf-8").split("\n"))
    tx = Transaction(
        receiver_account=fields_["receiver_account"],
        amount=int(fields_["amount"]),
        receiver_name=fields_["receiver_name"],
    )
    nonce = bytes.fromhex(fields_["nonce"]) if "nonce" in fields_ else None
    return tx, nonce


@dataclass(frozen=True)
class SignedConfirmation:
    tx: Transaction
    nonce: bytes | None
    signature: Signature

    def canonical(self) -> bytes:
        return canonical_tx_bytes(self.tx, self.nonce)

    def verify(self, server_public_key: bytes) -> bool:
        return crypto.verify(server_public_key, self.canonical(), self.signature)

    def to_payload(self) -> bytes:
        canonical = self.canonical()
        return struct.pack(">I", len(canonical)) + canonical + self.signature.to_bytes()

    @classmethod
    def from_payload(cls, payload: bytes) -> "SignedConfirmation":
        (n,) = struct.unpack(">I", payload[:4])
        tx, nonce = parse_tx_canonical(payload[4 : 4 + n])
        return cls(tx=tx, nonce=nonce, signature=Signature.from_bytes(payload[4 + n :]))


@dataclass(frozen=True)
class SecureDocument:
    labels: tuple[str, ...]
    frames: tuple[VisualFrame, ...]


# -------- session configuration --------


@dataclass(frozen=True)
class SessionFlags:
    sign_server_payloads: bool = True
    hijack_guard: bool = True
    tx_nonce_freshness: bool = True


DEFAULT_TX = Transaction(receiver_account="ACCT-7291", amount=25000, receiver_name="northwind supply")
DEFAULT_VIEW_FIELDS = (("balance", "10452.17"), ("statement", "paid 93.40 to coastal water"))


@dataclass(frozen=True)
class SessionConfig:
    """Everything one run needs besides the provisioned store.

    submit_passwords is what the user-model will type, one entry per
    attempt; None means the genuine password once. The scripted_* fields
    turn the session into an attacker's replay attempt: the smartphone
    goes inert and the scripted value is submitted in place of the honest
    step. phone_keypair_override arms the phone with a stolen key.
    """

    protocol: Protocol
    seed: int
    user_id: str = "alice"
    submit_passwords: tuple[str, ...] | None = None
    max_attempts: int = 1
    flags: SessionFlags = SessionFlags()
    frame_ec: EcLevel = EcLevel.M
    corrupt_codewords: int | str = 0  # int, "budget", or "budget+1"
    otp_length: int = crypto.DEFAULT_OTP_LEN
    mistype_otp: bool = False  # user fat-fingers one symbol of the shown OTP
    corrupt_context: str | None = None  # None corrupts every capture
    forced_permutation: KeyboardPermutation | None = None
    tx: Transaction = DEFAULT_TX
    view_fields: tuple[tuple[str, str], ...] = DEFAULT_VIEW_FIELDS
    scripted_positions: tuple[int, ...] | None = None
    scripted_otp: str | None = None
    scripted_ciphertext: bytes | None = None
    phone_keypair_override: KeyPair | None = None
    phone_server_name_override: str | None = None  # a phished phone's belief
    drop_side_copy: bool = False

    @property
    def phone_inert(self) -> bool:
        return (
            self.scripted_positions is not None
            or self.scripted_otp is not None
            or self.scripted_ciphertext is not None
        )


# -------- message vocabulary --------


@register_message("click_terminal")
@dataclass(frozen=True)
class TypeId(Message):
    TAG = "type_id"
    user_id: str


@register_message("net_up")
@dataclass(frozen=True)
class LoginRequest(Message):
    TAG = "login_request"
    user_id: str
    protocol: str


@register_message("net_down")
@dataclass(frozen=True)
class KeyboardChallenge(Message):
    TAG = "kbd_challenge"
    frame: VisualFrame
    grid_rows: int
    grid_cols: int


@register_message("net_down")
@dataclass(frozen=True)
class OtpChallenge(Message):
    TAG = "otp_challenge"
    frame: VisualFrame


@register_message("net_down")
@dataclass(frozen=True)
class NonceChallenge(Message):
    TAG = "nonce_challenge"
    frame: VisualFrame


@register_message("terminal_display_phone")
@dataclass(frozen=True)
class ShowFrame(Message):
    TAG = "show_frame"
    frame: VisualFrame
    context: str


@register_message("terminal_display_user")
@dataclass(frozen=True)
class ShowKeyboard(Message):
    TAG = "show_keyboard"
    layout_kind: str  # "blank" or "full"
    rows: int
    cols: int


@register_message("phone_display_user")
@dataclass(frozen=True)
class ShowLayout(Message):
    TAG = "show_layout"
    layout: KeyboardPermutation


@register_message("click_terminal")
@dataclass(frozen=True)
class ClickPositions(Message):
    TAG = "click_positions"
    positions: tuple[int, ...]


@register_message("terminal_display_user")
@dataclass(frozen=True)
class EchoClicks(Message):
    TAG = "echo_clicks"
    positions: tuple[int, ...]


@register_message("net_up")
@dataclass(frozen=True)
class SubmitPositions(Message):
    TAG = "submit_positions"
    positions: tuple[int, ...]


@register_message("phone_display_user")
@dataclass(frozen=True)
class ShowOtp(Message):
    TAG = "show_otp"
    otp: str


@register_message("click_terminal")
@dataclass(frozen=True)
class TypeOtp(Message):
    TAG = "type_otp"
    otp: str


@register_message("terminal_display_user")
@dataclass(frozen=True)
class EchoOtp(Message):
    TAG = "echo_otp"
    otp: str


@register_message("net_up")
@dataclass(frozen=True)
class SubmitOtp(Message):
    TAG = "submit_otp"
    otp: str


@register_message("click_terminal")
@dataclass(frozen=True)
class Connect(Message):
    TAG = "connect"


@register_message("net_up")
@dataclass(frozen=True)
class ConnectRequest(Message):
    TAG = "connect_request"


@register_message("phone_display_user")
@dataclass(frozen=True)
class ShowLoginBox(Message):
    TAG = "show_login_box"


@register_message("click_phone")
@dataclass(frozen=True)
class TypeCredentials(Message):
    TAG = "type_credentials"
    user_id: str
    password: str


@register_message("phone_display_user")
@dataclass(frozen=True)
class EchoMaskedCredentials(Message):
    TAG = "echo_masked_credentials"
    user_id: str
    masked: str  # the login box masks the password glyphs


@register_message("phone_display_terminal")
@dataclass(frozen=True)
class UploadFrame(Message):
    TAG = "upload_frame"
    frame: VisualFrame


@register_message("net_up")
@dataclass(frozen=True)
class SubmitCiphertext(Message):
    TAG = "submit_ciphertext"
    blob: bytes  # ciphertext wire bytes; all the terminal ever holds


@register_message("net_down")
@dataclass(frozen=True)
class AuthResult(Message):
    TAG = "auth_result"
    ok: bool


@register_message("terminal_display_user")
@dataclass(frozen=True)
class ShowResult(Message):
    TAG = "show_result"
    ok: bool


@register_message("click_terminal")
@dataclass(frozen=True)
class RequestTx(Message):
    TAG = "request_tx"
    tx: Transaction


@register_message("net_up")
@dataclass(frozen=True)
class SubmitTx(Message):
    TAG = "submit_tx"
    tx: Transaction


@register_message("net_down")
@dataclass(frozen=True)
class TxConfirmation(Message):
    TAG = "tx_confirmation"
    display_tx: Transaction
    frame: VisualFrame


@register_message("terminal_display_phone")
@dataclass(frozen=True)
class ShowTxFrame(Message):
    TAG = "show_tx_frame"
    frame: VisualFrame


@register_message("terminal_display_user")
@dataclass(frozen=True)
class ShowTxPage(Message):
    TAG = "show_tx_page"
    tx: Transaction


@register_message("phone_display_user")
@dataclass(frozen=True)
class ShowVerifiedTx(Message):
    TAG = "show_verified_tx"
    tx: Transaction | None
    sig_valid: bool
    fresh: bool


@register_message("click_terminal")
@dataclass(frozen=True)
class ConfirmTx(Message):
    TAG = "confirm_tx"
    ok: bool


@register_message("net_up")
@dataclass(frozen=True)
class ForwardConfirm(Message):
    TAG = "forward_confirm"
    ok: bool


@register_message("click_phone")
@dataclass(frozen=True)
class ConfirmOnPhone(Message):
    TAG = "confirm_on_phone"
    tx: Transaction


@register_message("cellular")
@dataclass(frozen=True)
class SideCopy(Message):
    TAG = "side_copy"
    tx: Transaction
    signature: Signature


@register_message("net_down")
@dataclass(frozen=True)
class TxResult(Message):
    TAG = "tx_result"
    accepted: bool


@register_message("net_down")
@dataclass(frozen=True)
class SecureDocMessage(Message):
    TAG = "secure_doc"
    labels: tuple[str, ...]
    frames: tuple[VisualFrame, ...]


@register_message("terminal_display_phone")
@dataclass(frozen=True)
class ShowDoc(Message):
    TAG = "show_doc"
    labels: tuple[str, ...]
    frames: tuple[VisualFrame, ...]


@register_message("phone_display_user")
@dataclass(frozen=True)
class ShowFields(Message):
    TAG = "show_fields"
    values: tuple[tuple[str, str], ...]
    failures: tuple[str, ...]


# -------- framing helpers --------


def _pack_signed(ct: crypto.Ciphertext, sig: Signature | None) -> bytes:
    wire = ct.to_bytes()
    out = struct.pack(">I", len(wire)) + wire
    if sig is not None:
        out += sig.to_bytes()
    return out


def _unpack_signed(payload: bytes) -> tuple[crypto.Ciphertext, Signature | None]:
    (n,) = struct.unpack(">I", payload[:4])
    ct = crypto.Ciphertext.from_bytes(payload[4 : 4 + n])
    rest = payload[4 + n :]
    return ct, (Signature.from_bytes(rest) if rest else None)


def _pack_credentials(nonce: bytes, user_id: str, password: str, server_name: str) -> bytes:
    parts = [nonce]
    for text in (user_id, password, server_name):
        enc = text.encode("utf-8")
        parts.append(struct.pack(">H", len(enc)) + enc)
    return b"".join(parts)


def _unpack_credentials(blob: bytes) -> tuple[bytes, str, str, str]:
    nonce, pos = blob[: crypto.NONCE_LEN], crypto.NONCE_LEN
    out = []
    for _ in range(3):
        (n,) = struct.unpack(">H", blob[pos : pos + 2])
        out.append(blob[pos + 2 : pos + 2 + n].decode("utf-8"))
        pos += 2 + n
    return nonce, out[0], out[1], out[2]


def _frame(session: Session, payload: bytes, context: str) -> VisualFrame:
    """Auto-select the smallest fitting version at the session's ec level."""
    spec = qr.choose_spec(payload, Mode.BYTE, session.config.frame_ec)
    frame = qr.qr_encode(payload, spec)
    session.note_frame(context, frame)
    return frame


def _capture(session: Session, frame: VisualFrame, context: str) -> bytes:
    """A camera capture: apply the scenario's corruption, then decode."""
    cfg = session.config
    setting = cfg.corrupt_codewords
    if cfg.corrupt_context is not None and cfg.corrupt_context != context:
        setting = 0
    if setting == "budget":
        count = qr.correction_budget(frame.spec)
    elif setting == "budget+1":
        count = qr.correction_budget(frame.spec) + 1
    else:
        count = int(setting)
    if count:
        frame = qr.corrupt(frame, count, session.rng)
    return qr.qr_decode(frame)


def _abort(session: Session, reason: str, retryable: bool) -> None:
    session.abort_reason = reason
    session.abort_retryable = retryable
    session.finish(Outcome.ABORTED)


# -------- the four participants --------


class UserModel(Entity):
    """The human: remembers credentials and intent, reads screens, clicks.

    Confirms a transaction only when the smartphone-verified copy agrees
    with both the page on the terminal and what it meant to send.
    """

    kind = EntityKind.USER

    def __init__(self, session, config: SessionConfig, password: str):
        super().__init__(session)
        passwords = config.submit_passwords or (password,)
        self.state.update(
            user_id=config.user_id,
            passwords=tuple(passwords),
            attempt=0,
            keyboard_shown=False,
            pending_otp=None,
            typed_otps=0,
            intended_tx=config.tx,
            page_tx=None,
        )

    def _next_password(self) -> str:
        pw = self.state["passwords"][min(self.state["attempt"], len(self.state["passwords"]) - 1)]
        self.state["attempt"] += 1
        return pw

    def begin(self) -> None:
        protocol = self.session.protocol
        if protocol in (Protocol.P1, Protocol.P2):
            self.emit("click_terminal", TypeId(user_id=self.state["user_id"]))
        elif protocol is Protocol.P3:
            self.emit("click_terminal", Connect())
        elif protocol in (Protocol.TXVERIFY, Protocol.HIJACKGUARD):
            self.emit("click_terminal", RequestTx(tx=self.state["intended_tx"]))
            if protocol is Protocol.HIJACKGUARD:
                self.emit("click_phone", ConfirmOnPhone(tx=self.state["intended_tx"]))
        elif protocol is Protocol.SECUREVIEW:
            self.emit("click_terminal", Connect())

    def on_show_keyboard(self, msg: ShowKeyboard) -> None:
        self.state["keyboard_shown"] = True
        cfg = self.session.config
        if cfg.scripted_positions is not None:
            self.emit("click_terminal", ClickPositions(positions=tuple(cfg.scripted_positions)))
        elif cfg.scripted_otp is not None:
            self.emit("click_terminal", TypeOtp(otp=cfg.scripted_otp))
        elif self.state["pending_otp"] is not None:
            self._type_pending_otp()

    def on_show_layout(self, msg: ShowLayout) -> None:
        # find each password symbol on the freshly decrypted layout
        password = self._next_password()
        positions = tuple(msg.layout.position_of(ch) for ch in password)
        self.emit("click_terminal", ClickPositions(positions=positions))

    def on_show_otp(self, msg: ShowOtp) -> None:
        self.state["pending_otp"] = msg.otp
        if self.state["keyboard_shown"]:
            self._type_pending_otp()

    def _type_pending_otp(self) -> None:
        otp, self.state["pending_otp"] = self.state["pending_otp"], None
        self.state["typed_otps"] += 1
        if self.session.config.mistype_otp:
            # one symbol off: the next alphabet symbol in the first slot
            shifted = crypto.ALPHABET[(crypto.ALPHABET.index(otp[0]) + 1) % len(crypto.ALPHABET)]
            otp = shifted + otp[1:]
        self.emit("click_terminal", TypeOtp(otp=otp))

    def on_show_login_box(self, msg: ShowLoginBox) -> None:
        self.emit(
            "click_phone",
            TypeCredentials(user_id=self.state["user_id"], password=self._next_password()),
        )

    def on_echo_clicks(self, msg: EchoClicks) -> None:
        self.state["echo_positions"] = msg.positions

    def on_echo_otp(self, msg: EchoOtp) -> None:
        self.state["echo_otp_len"] = len(msg.otp)

    def on_echo_masked_credentials(self, msg: EchoMaskedCredentials) -> None:
        self.state["masked_echo"] = msg.masked

    def on_show_result(self, msg: ShowResult) -> None:
        self.state["saw_result"] = msg.ok

    def on_show_tx_page(self, msg: ShowTxPage) -> None:
        self.state["page_tx"] = msg.tx

    def on_show_verified_tx(self, msg: ShowVerifiedTx) -> None:
        ok = (
            msg.sig_valid
            and msg.fresh
            and msg.tx is not None
            and msg.tx == self.state["page_tx"]
            and msg.tx == self.state["intended_tx"]
        )
        if not ok:
            self.session.finish(Outcome.USER_FLAGGED_MISMATCH)
        self.emit("click_terminal", ConfirmTx(ok=ok))

    def on_show_fields(self, msg: ShowFields) -> None:
        self.state["viewed_fields"] = msg.values
        self.session.view_values = dict(msg.values)
        self.session.view_failures = tuple(msg.failures)
        self.session.finish(Outcome.VIEWED)


class Terminal(Entity):
    """The untrusted browser/kiosk: routes, renders, never holds a secret
    beyond the one-time password it relays in the OTP flow."""

    kind = EntityKind.TERMINAL

    def on_type_id(self, msg: TypeId) -> None:
        self.state["user_id"] = msg.user_id
        self.emit("net_up", LoginRequest(user_id=msg.user_id, protocol=self.session.protocol.value))

    def on_connect(self, msg: Connect) -> None:
        self.emit("net_up", ConnectRequest())

    def on_kbd_challenge(self, msg: KeyboardChallenge) -> None:
        self.state["challenge_payload"] = msg.frame.payload
        self.emit("terminal_display_phone", ShowFrame(frame=msg.frame, context="keyboard"))
        self.emit("terminal_display_user", ShowKeyboard(layout_kind="blank", rows=msg.grid_rows, cols=msg.grid_cols))

    def on_otp_challenge(self, msg: OtpChallenge) -> None:
        self.state["challenge_payload"] = msg.frame.payload
        self.emit("terminal_display_phone", ShowFrame(frame=msg.frame, context="otp"))
        self.emit("terminal_display_user", ShowKeyboard(layout_kind="full", rows=4, cols=10))

    def on_nonce_challenge(self, msg: NonceChallenge) -> None:
        self.state["nonce_frame_payload"] = msg.frame.payload
        cfg = self.session.config
        if cfg.scripted_ciphertext is not None:
            self.emit("net_up", SubmitCiphertext(blob=cfg.scripted_ciphertext))
            return
        self.emit("terminal_display_phone", ShowFrame(frame=msg.frame, context="nonce"))

    def on_click_positions(self, msg: ClickPositions) -> None:
        self.state["positions"] = msg.positions
        self.emit("terminal_display_user", EchoClicks(positions=msg.positions))
        self.emit("net_up", SubmitPositions(positions=msg.positions))

    def on_type_otp(self, msg: TypeOtp) -> None:
        self.state["typed_otp"] = msg.otp
        self.emit("terminal_display_user", EchoOtp(otp=msg.otp))
        self.emit("net_up", SubmitOtp(otp=msg.otp))

    def on_upload_frame(self, msg: UploadFrame) -> None:
        try:
            blob = _capture(self.session, msg.frame, "credential_upload")
        except qr.UncorrectableFrameError:
            _abort(self.session, "upload_frame_undecodable", retryable=True)
            return
        self.state["credential_blob"] = blob
        self.emit("net_up", SubmitCiphertext(blob=blob))

    def on_auth_result(self, msg: AuthResult) -> None:
        self.state["auth_ok"] = msg.ok
        self.emit("terminal_display_user", ShowResult(ok=msg.ok))

    def on_request_tx(self, msg: RequestTx) -> None:
        self.state["form_tx"] = msg.tx
        self.emit("net_up", SubmitTx(tx=msg.tx))

    def on_tx_confirmation(self, msg: TxConfirmation) -> None:
        self.state["page_tx"] = msg.display_tx
        self.emit("terminal_display_phone", ShowTxFrame(frame=msg.frame))
        self.emit("terminal_display_user", ShowTxPage(tx=msg.display_tx))

    def on_confirm_tx(self, msg: ConfirmTx) -> None:
        self.emit("net_up", ForwardConfirm(ok=msg.ok))

    def on_tx_result(self, msg: TxResult) -> None:
        self.state["tx_ok"] = msg.accepted
        self.emit("terminal_display_user", ShowResult(ok=msg.accepted))

    def on_secure_doc(self, msg: SecureDocMessage) -> None:
        self.state["doc_payloads"] = tuple(f.payload for f in msg.frames)
        self.emit("terminal_display_phone", ShowDoc(labels=msg.labels, frames=msg.frames))


class Smartphone(Entity):
    """The trusted personal device: the only place the user's private key
    lives and the only party that renders decrypted content to the user."""

    kind = EntityKind.SMARTPHONE

    def __init__(self, session, keypair: KeyPair, server_public: bytes, server_name: str, inert: bool):
        super().__init__(session)
        self.inert = inert
        self.state.update(keypair=keypair, server_public=server_public, server_name=server_name)

    def on_show_frame(self, msg: ShowFrame) -> None:
        if self.inert:
            return
        try:
            payload = _capture(self.session, msg.frame, msg.context)
        except qr.UncorrectableFrameError:
            _abort(self.session, "frame_undecodable", retryable=True)
            return
        if msg.context == "keyboard":
            self._handle_keyboard_payload(payload)
        elif msg.context == "otp":
            self._handle_otp_payload(payload)
        elif msg.context == "nonce":
            self.state["nonce"] = payload
            self.emit("phone_display_user", ShowLoginBox())
        else:
            raise entities.ProtocolViolation(f"unknown frame context {msg.context!r}")

    def _verify_and_open(self, payload: bytes) -> bytes | None:
        try:
            ct, sig = _unpack_signed(payload)
        except (struct.error, crypto.IntegrityError, ValueError):
            _abort(self.session, "challenge_malformed", retryable=False)
            return None
        if self.session.flags.sign_server_payloads:
            if sig is None or not crypto.verify(self.state["server_public"], ct.to_bytes(), sig):
                _abort(self.session, "challenge_signature_invalid", retryable=False)
                return None
        try:
            return crypto.decrypt(self.state["keypair"], ct)
        except crypto.IntegrityError:
            _abort(self.session, "challenge_ciphertext_rejected", retryable=False)
            return None

    def _handle_keyboard_payload(self, payload: bytes) -> None:
        plain = self._verify_and_open(payload)
        if plain is None:
            return
        layout = KeyboardPermutation.from_serialized(plain)
        self.state["layout"] = layout
        self.emit("phone_display_user", ShowLayout(layout=layout))

    def _handle_otp_payload(self, payload: bytes) -> None:
        plain = self._verify_and_open(payload)
        if plain is None:
            return
        otp = plain.decode("ascii")
        self.state["otp"] = otp
        self.emit("phone_display_user", ShowOtp(otp=otp))

    def on_type_credentials(self, msg: TypeCredentials) -> None:
        # the login box masks the password; only glyph count is rendered
        self.state["login"] = (msg.user_id, msg.password)
        self.emit(
            "phone_display_user",
            EchoMaskedCredentials(user_id=msg.user_id, masked=MASK_GLYPH * len(msg.password)),
        )
        nonce = self.state.get("nonce")
        if nonce is None:
            _abort(self.session, "no_nonce_scanned", retryable=False)
            return
        plain = _pack_credentials(nonce, msg.user_id, msg.password, self.state["server_name"])
        ct = crypto.encrypt(self.state["server_public"], plain, self.session.rng)
        blob = ct.to_bytes()
        self.session.register_secret(
            SecretKind.CREDENTIAL_CIPHERTEXT, blob, allowed=set(EntityKind)
        )
        frame = _frame(self.session, blob, "credential_upload")
        self.emit("phone_display_terminal", UploadFrame(frame=frame))

    def on_show_tx_frame(self, msg: ShowTxFrame) -> None:
        try:
            payload = _capture(self.session, msg.frame, "tx_confirmation")
            conf = SignedConfirmation.from_payload(payload)
        except (qr.UncorrectableFrameError, struct.error, ValueError, KeyError):
            self.emit("phone_display_user", ShowVerifiedTx(tx=None, sig_valid=False, fresh=False))
            return
        valid = conf.verify(self.state["server_public"])
        if self.session.flags.tx_nonce_freshness:
            fresh = conf.nonce is not None and conf.nonce == self.state.get("session_nonce")
        else:
            fresh = True
        self.state["verified_tx"] = conf.tx
        self.emit("phone_display_user", ShowVerifiedTx(tx=conf.tx, sig_valid=valid, fresh=fresh))

    def on_confirm_on_phone(self, msg: ConfirmOnPhone) -> None:
        if self.session.config.drop_side_copy:
            return  # side channel suppressed in this scenario
        sig = crypto.sign(self.state["keypair"], canonical_tx_bytes(msg.tx))
        self.emit("cellular", SideCopy(tx=msg.tx, signature=sig))

    def on_show_doc(self, msg: ShowDoc) -> None:
        values, failures = [], []
        for label, frame in zip(msg.labels, msg.frames):
            try:
                blob = _capture(self.session, frame, f"secure_field:{label}")
                plain = crypto.decrypt(self.state["keypair"], crypto.Ciphertext.from_bytes(blob))
                values.append((label, plain.decode("utf-8")))
            except (qr.UncorrectableFrameError, crypto.IntegrityError):
                failures.append(label)
        self.state["doc_values"] = tuple(values)
        self.emit("phone_display_user", ShowFields(values=tuple(values), failures=tuple(failures)))


class Server(Entity):
    """The verifier: issues challenges, alone resolves click positions,
    enforces one-time and freshness semantics, and executes transactions
    only past the enabled guards."""

    kind = EntityKind.SERVER

    def __init__(self, session, store: CredentialStore):
        super().__init__(session)
        self.store = store
        self.state.update(
            name=store.server_name,
            keypair=store.server_pair,
            registry={uid: (c.password, c.keypair.public_key) for uid, c in store.users.items()},
            attempts=0,
            executed_tx=None,
        )

    # -- challenge issuance --

    def _issue_keyboard(self) -> None:
        cfg = self.session.config
        layout = cfg.forced_permutation or crypto.generate_permutation(self.session.rng)
        self.state["layout"] = layout
        self.session.register_secret(
            SecretKind.PERMUTATION,
            layout.serialize(),
            allowed={EntityKind.SERVER, EntityKind.SMARTPHONE, EntityKind.USER},
        )
        _, public_key = self.state["registry"][self.state["user_id"]]
        ct = crypto.encrypt(public_key, layout.serialize(), self.session.rng)
        sig = (
            crypto.sign(self.state["keypair"], ct.to_bytes())
            if self.session.flags.sign_server_payloads
            else None
        )
        frame = _frame(self.session, _pack_signed(ct, sig), "keyboard_challenge")
        self.emit("net_down", KeyboardChallenge(frame=frame, grid_rows=GRID_ROWS, grid_cols=GRID_COLS))

    def _issue_otp(self) -> None:
        cfg = self.session.config
        token = crypto.generate_otp(
            self.session.rng,
            length=cfg.otp_length,
            issued_at=self.session.step,
            outstanding=[t for t in (self.state.get("token"),) if t],
        )
        self.state["token"] = token
        self.session.register_secret(SecretKind.OTP, token.value.encode(), allowed=set(EntityKind))
        _, public_key = self.state["registry"][self.state["user_id"]]
        ct = crypto.encrypt(public_key, token.value.encode("ascii"), self.session.rng)
        sig = (
            crypto.sign(self.state["keypair"], ct.to_bytes())
            if self.session.flags.sign_server_payloads
            else None
        )
        frame = _frame(self.session, _pack_signed(ct, sig), "otp_challenge")
        self.emit("net_down", OtpChallenge(frame=frame))

    def _issue_nonce(self) -> None:
        nonce = crypto.fresh_nonce(self.session.rng, self.session.session_id, self.store.issued_nonces)
        self.state["nonce"] = nonce
        self.state["nonce_consumed"] = False
        frame = _frame(self.session, nonce.value, "nonce_challenge")
        self.emit("net_down", NonceChallenge(frame=frame))

    def on_login_request(self, msg: LoginRequest) -> None:
        if msg.user_id not in self.state["registry"]:
            self._deny()
            return
        self.state["user_id"] = msg.user_id
        if self.session.protocol is Protocol.P1:
            self._issue_keyboard()
        else:
            self._issue_otp()

    def on_connect_request(self, msg: ConnectRequest) -> None:
        if self.session.protocol is Protocol.SECUREVIEW:
            self._issue_document()
        else:
            self._issue_nonce()

    # -- verdicts --

    def _deny(self) -> None:
        self.session.finish(Outcome.DENIED)
        self.emit("net_down", AuthResult(ok=False))

    def _authenticate(self) -> None:
        self.session.finish(Outcome.AUTHENTICATED)
        self.emit("net_down", AuthResult(ok=True))

    def _retry_or_deny(self, reissue) -> None:
        self.state["attempts"] += 1
        if self.state["attempts"] < self.session.config.max_attempts:
            reissue()
        else:
            self._deny()

    def on_submit_positions(self, msg: SubmitPositions) -> None:
        # the one place click positions turn back into symbols
        layout: KeyboardPermutation | None = self.state.get("layout")
        if layout is None:
            self._deny()
            return
        candidate = layout.resolve(msg.positions)
        password, _ = self.state["registry"][self.state["user_id"]]
        if candidate == password:
            self._authenticate()
        else:
            self._retry_or_deny(self._issue_keyboard)

    def on_submit_otp(self, msg: SubmitOtp) -> None:
        token: OtpToken | None = self.state.get("token")
        if token is not None and not token.consumed and msg.otp == token.value:
            token.consume()
            self._authenticate()
        else:
            self._retry_or_deny(self._issue_otp)

    def on_submit_ciphertext(self, msg: SubmitCiphertext) -> None:
        try:
            plain = crypto.decrypt(
                self.state["keypair"], crypto.Ciphertext.from_bytes(msg.blob)
            )
            nonce_value, user_id, password, server_name = _unpack_credentials(plain)
        except (crypto.IntegrityError, struct.error, UnicodeDecodeError):
            self._retry_or_deny(self._issue_nonce)
            return
        nonce: Nonce | None = self.state.get("nonce")
        fresh = (
            nonce is not None
            and not self.state["nonce_consumed"]
            and nonce_value == nonce.value
        )
        self.state["nonce_consumed"] = True
        entry = self.state["registry"].get(user_id)
        if fresh and server_name == self.state["name"] and entry is not None and password == entry[0]:
            self._authenticate()
        else:
            self._retry_or_deny(self._issue_nonce)

    # -- transactions --

    def on_submit_tx(self, msg: SubmitTx) -> None:
        self.state["received_tx"] = msg.tx
        if self.session.protocol is Protocol.HIJACKGUARD:
            if not self.session.flags.hijack_guard:
                self._execute_tx(msg.tx)
            else:
                self._check_guard()
            return
        nonce = self.state["session_nonce"] if self.session.flags.tx_nonce_freshness else None
        canonical = canonical_tx_bytes(msg.tx, nonce)
        conf = SignedConfirmation(
            tx=msg.tx, nonce=nonce, signature=crypto.sign(self.state["keypair"], canonical)
        )
        frame = _frame(self.session, conf.to_payload(), "tx_confirmation")
        self.emit("net_down", TxConfirmation(display_tx=msg.tx, frame=frame))

    def on_forward_confirm(self, msg: ForwardConfirm) -> None:
        if msg.ok:
            self._execute_tx(self.state["received_tx"])
            self.session.finish(Outcome.CONFIRMED)
        else:
            self.session.finish(Outcome.USER_FLAGGED_MISMATCH)
        self.emit("net_down", TxResult(accepted=msg.ok))

    def on_side_copy(self, msg: SideCopy) -> None:
        self.state["side_tx"] = msg.tx
        self.state["side_sig"] = msg.signature
        if self.session.flags.hijack_guard:
            self._check_guard()

    def _check_guard(self) -> None:
        received = self.state.get("received_tx")
        side_tx = self.state.get("side_tx")
        if received is None or side_tx is None:
            return  # wait for the other half; on_idle fails closed
        entry = self.state["registry"].get(self.session.config.user_id)
        if entry is None:
            self.session.finish(Outcome.REJECTED)
            self.emit("net_down", TxResult(accepted=False))
            return
        _, public_key = entry
        sig_ok = crypto.verify(public_key, canonical_tx_bytes(side_tx), self.state["side_sig"])
        if sig_ok and side_tx == received:
            self._execute_tx(received)
            self.session.finish(Outcome.ACCEPTED)
        else:
            self.session.finish(Outcome.REJECTED)
        self.emit("net_down", TxResult(accepted=self.session.outcome is Outcome.ACCEPTED))

    def on_idle(self) -> None:
        # a transaction with no matching side-channel copy dies here
        if (
            self.session.protocol is Protocol.HIJACKGUARD
            and self.session.outcome is None
            and self.session.flags.hijack_guard
        ):
            self.session.finish(Outcome.REJECTED)
            self.emit("net_down", TxResult(accepted=False))

    def _execute_tx(self, tx: Transaction) -> None:
        self.state["executed_tx"] = tx
        self.session.executed_tx = tx
        if self.session.protocol is Protocol.HIJACKGUARD and not self.session.flags.hijack_guard:
            self.session.finish(Outcome.ACCEPTED)
            self.emit("net_down", TxResult(accepted=True))

    # -- secure viewing --

    def _issue_document(self) -> None:
        cfg = self.session.config
        entry = self.state["registry"].get(cfg.user_id)
        if entry is None:
            self._deny()
            return
        _, public_key = entry
        labels, frames = [], []
        for label, value in cfg.view_fields:
            self.session.register_secret(
                SecretKind.VIEW_FIELD,
                value.encode("utf-8"),
                allowed={EntityKind.SERVER, EntityKind.SMARTPHONE, EntityKind.USER},
            )
            ct = crypto.encrypt(public_key, value.encode("utf-8"), self.session.rng)
            labels.append(label)
            frames.append(_frame(self.session, ct.to_bytes(), f"secure_field:{label}"))
        self.state["document_labels"] = tuple(labels)
        self.emit("net_down", SecureDocMessage(labels=tuple(labels), frames=tuple(frames)))


# -------- session assembly and runners --------


def build_session(config: SessionConfig, store: CredentialStore) -> Session:
    credential = store.users.get(config.user_id)
    if credential is None:
        # an id the server never provisioned still gets to walk up to the
        # terminal and be denied; give the session disposable material
        credential = Credential(
            user_id=config.user_id,
            password="unprovisioned",
            keypair=crypto.generate_keypair(
                Role.USER, rngmod.fork(config.seed, "unprovisioned-key", config.user_id)
            ),
        )
    session = Session(config.seed, flags=config.flags)
    session.config = config
    session.protocol = config.protocol
    session.store = store
    session.abort_reason = None
    session.abort_retryable = False
    session.executed_tx = None
    session.view_values = {}
    session.view_failures = ()

    phone_pair = config.phone_keypair_override or credential.keypair
    user = UserModel(session, config, credential.password)
    terminal = Terminal(session)
    phone = Smartphone(
        session,
        keypair=phone_pair,
        server_public=store.server_pair.public_key,
        server_name=config.phone_server_name_override or store.server_name,
        inert=config.phone_inert,
    )
    server = Server(session, store)
    for entity in (user, terminal, phone, server):
        session.add_entity(entity)

    session.register_secret(
        SecretKind.PASSWORD,
        credential.password.encode("utf-8"),
        allowed={EntityKind.USER, EntityKind.SERVER}
        | ({EntityKind.SMARTPHONE} if config.protocol is Protocol.P3 else set()),
    )
    session.register_secret(
        SecretKind.USER_PRIVATE_KEY,
        credential.keypair.private_key,
        allowed={EntityKind.SMARTPHONE},
    )
    session.register_secret(
        SecretKind.SERVER_PRIVATE_KEY,
        store.server_pair.private_key,
        allowed={EntityKind.SERVER},
    )

    if config.protocol in (Protocol.TXVERIFY, Protocol.HIJACKGUARD):
        # extensions presuppose an authenticated session; both ends already
        # share its nonce
        nonce = crypto.fresh_nonce(session.rng, session.session_id, store.issued_nonces)
        server.state["session_nonce"] = nonce.value
        phone.state["session_nonce"] = nonce.value
    return session


@dataclass
class SessionResult:
    outcome: Outcome
    session: Session

    @property
    def authenticated(self) -> bool:
        return self.outcome is Outcome.AUTHENTICATED


def _run(config: SessionConfig, store: CredentialStore | None, adversaries=()) -> SessionResult:
    store = store or CredentialStore.provision(config.seed)
    session = build_session(config, store)
    for adversary in adversaries:
        adversary.install(session)
    session.entities[EntityKind.USER].begin()
    session.run()
    if session.outcome is None:
        _abort(session, "stalled", retryable=False)
    return SessionResult(outcome=session.outcome, session=session)


def run_protocol1(config: SessionConfig, store=None, adversaries=()) -> SessionResult:
    if config.protocol is not Protocol.P1:
        config = replace(config, protocol=Protocol.P1)
    return _run(config, store, adversaries)


def run_protocol2(config: SessionConfig, store=None, adversaries=()) -> SessionResult:
    if config.protocol is not Protocol.P2:
        config = replace(config, protocol=Protocol.P2)
    return _run(config, store, adversaries)


def run_protocol3(config: SessionConfig, store=None, adversaries=()) -> SessionResult:
    if config.protocol is not Protocol.P3:
        config = replace(config, protocol=Protocol.P3)
    return _run(config, store, adversaries)


def run_tx_verification(config: SessionConfig, store=None, adversaries=()) -> SessionResult:
    if config.protocol is not Protocol.TXVERIFY:
        config = replace(config, protocol=Protocol.TXVERIFY)
    return _run(config, store, adversaries)


def run_secure_view(config: SessionConfig, store=None, adversaries=()) -> SessionResult:
    if config.protocol is not Protocol.SECUREVIEW:
        config = replace(config, protocol=Protocol.SECUREVIEW)
    return _run(config, store, adversaries)


def run_hijack_guard(config: SessionConfig, store=None, adversaries=()) -> SessionResult:
    if config.protocol is not Protocol.HIJACKGUARD:
        config = replace(config, protocol=Protocol.HIJACKGUARD)
    return _run(config, store, adversaries)


RUNNERS = {
    Protocol.P1: run_protocol1,
    Protocol.P2: run_protocol2,
    Protocol.P3: run_protocol3,
    Protocol.TXVERIFY: run_tx_verification,
    Protocol.SECUREVIEW: run_secure_view,
    Protocol.HIJACKGUARD: run_hijack_guard,
}


def run_flow(config: SessionConfig, store=None, adversaries=()) -> SessionResult:
    return RUNNERS[config.protocol](config, store, adversaries)
