"""The attacker repertoire: what each adversary sees, and what that buys.

Four attacker kinds live on one of two loci (terminal or smartphone):

* keylogger: read-only tap on the input events arriving at its locus.
* shoulder_surfer: read-only view of the displays its locus renders.
* malware: full compromise of the locus; reads its io both ways, reads
  its state, and may rewrite or drop what it sends.
* brute_force: no foothold at all; a budget-capped password guesser.

Nothing here is scored by argument. ``evaluate`` decides whether an
adversary "can authenticate later" by actually mounting the followup: it
replays captured positions, one-time passwords, or ciphertexts through a
fresh session, or runs a whole login with whatever credentials or keys it
exfiltrated, and reports what the server said. The resistance matrix is
therefore an output of the state machines, not a transcription.

A fifth kind, the phishing fake_server, only makes sense as a scenario
(it impersonates the far end rather than compromising a locus) and gets
its own functions, as do the documented caveats: the dual-view shoulder
surfer and the one-time-password race.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field, replace

from . import crypto, rng as rngmod
from .entities import Channel, ChannelKind, EntityKind, Message, Session
from .protocols import (
    AUTH_PROTOCOLS,
    CredentialStore,
    Outcome,
    Protocol,
    SessionConfig,
    SessionFlags,
    Transaction,
    run_flow,
    run_hijack_guard,
)

FOLLOWUP_BUDGET = 16  # default guess cap for the in-matrix brute forcer

EVIL_TX = Transaction(receiver_account="ACCT-6660", amount=999900, receiver_name="mule household")


class AdversaryKind(enum.Enum):
    KEYLOGGER = "keylogger"
    MALWARE = "malware"
    SHOULDER_SURFER = "shoulder_surfer"
    FAKE_SERVER = "fake_server"
    BRUTE_FORCE = "brute_force"


MATRIX_KINDS = (
    AdversaryKind.KEYLOGGER,
    AdversaryKind.MALWARE,
    AdversaryKind.SHOULDER_SURFER,
    AdversaryKind.BRUTE_FORCE,
)
MATRIX_LOCI = (EntityKind.TERMINAL, EntityKind.SMARTPHONE)

# the one pattern the whole simulation must reproduce: resistance holds
# everywhere except these three cells
BROKEN_CELLS = frozenset(
    {
        (Protocol.P2, AdversaryKind.MALWARE, EntityKind.SMARTPHONE),
        (Protocol.P3, AdversaryKind.KEYLOGGER, EntityKind.SMARTPHONE),
        (Protocol.P3, AdversaryKind.MALWARE, EntityKind.SMARTPHONE),
    }
)


def expected_resistance(protocol: Protocol, kind: AdversaryKind, locus: EntityKind) -> bool:
    return (protocol, kind, locus) not in BROKEN_CELLS


@dataclass(frozen=True)
class AdversaryConfig:
    kind: AdversaryKind
    locus: EntityKind = EntityKind.TERMINAL

    def __post_init__(self):
        if self.locus not in MATRIX_LOCI:
            raise ValueError("locus must be terminal or smartphone")

    @property
    def capabilities(self) -> frozenset[str]:
        caps = set()
        if self.kind is AdversaryKind.KEYLOGGER:
            caps.add(f"tap_input:{self.locus.value}")
        elif self.kind is AdversaryKind.SHOULDER_SURFER:
            caps.add(f"view_display:{self.locus.value}")
        elif self.kind is AdversaryKind.MALWARE:
            caps.update(
                {
                    f"tap_io:{self.locus.value}",
                    f"read_state:{self.locus.value}",
                    f"alter_outbound:{self.locus.value}",
                }
            )
        elif self.kind is AdversaryKind.BRUTE_FORCE:
            caps.add("guess_offline")
        elif self.kind is AdversaryKind.FAKE_SERVER:
            caps.add("impersonate_server")
        return frozenset(caps)


@dataclass(frozen=True)
class Observation:
    step: int
    channel_kind: ChannelKind
    data: tuple

    def line(self) -> str:
        return f"{self.step}|{self.channel_kind.value}|{'|'.join(map(str, self.data))}"


@dataclass(frozen=True)
class AttackOutcome:
    learned_password: bool
    learned_reusable_secret: bool
    can_authenticate_later: bool
    can_alter_transaction: bool
    posterior_candidate_count: int | None

    def resisted(self) -> bool:
        return not self.can_authenticate_later


# -------- what a message looks like to an onlooker --------


def _observe(msg: Message) -> tuple | None:
    """Reduce a message to what an observer of that surface learns.

    Input events yield their raw content (a keylogger reads keystrokes, a
    login box read by malware reads fields); displays yield what is drawn,
    which for a masked password entry is only the glyph count.
    """
    tag = msg.tag
    if tag == "type_id":
        return ("typed_id", msg.user_id)
    if tag == "click_positions":
        return ("positions", tuple(msg.positions))
    if tag == "echo_clicks":
        return ("positions", tuple(msg.positions))
    if tag == "type_otp" or tag == "echo_otp" or tag == "show_otp":
        return ("otp", msg.otp)
    if tag == "type_credentials":
        return ("login", msg.user_id, msg.password)
    if tag == "echo_masked_credentials":
        return ("masked_login", msg.user_id, msg.masked)
    if tag == "show_layout":
        return ("layout", msg.layout.serialize())
    if tag == "show_keyboard":
        return ("keyboard", msg.layout_kind)
    if tag == "upload_frame":
        return ("ciphertext", msg.frame.payload)
    if tag == "submit_ciphertext":
        return ("ciphertext", msg.blob)
    if tag == "show_frame":
        return ("frame_payload", msg.context, msg.frame.payload)
    if tag == "show_tx_frame":
        return ("frame_payload", "tx_confirmation", msg.frame.payload)
    if tag in ("connect", "request_tx", "confirm_tx", "confirm_on_phone"):
        return ("click", tag)
    return None


@dataclass
class AttackerHandle:
    """One adversary attached to one session: config, taps, takings."""

    config: AdversaryConfig
    session: Session
    observations: list[Observation] = field(default_factory=list)
    stolen_keypair: crypto.KeyPair | None = None
    alter_tx: Transaction | None = None  # armed for transaction flows

    def record(self, step: int, kind: ChannelKind, msg: Message) -> None:
        data = _observe(msg)
        if data is not None:
            self.observations.append(Observation(step=step, channel_kind=kind, data=data))

    def observed(self, label: str):
        for obs in self.observations:
            if obs.data[0] == label:
                return obs.data[1:]
        return None


def attach(config: AdversaryConfig, session: Session) -> AttackerHandle:
    """Install the adversary's taps/hooks on a built (not yet run) session."""
    handle = AttackerHandle(config=config, session=session)
    kind, locus = config.kind, config.locus

    def channel_tap(step: int, channel: Channel, msg: Message) -> None:
        handle.record(step, channel.kind, msg)

    if kind is AdversaryKind.KEYLOGGER:
        for channel in session.channels.values():
            if channel.kind is ChannelKind.CLICK and channel.receiver is locus:
                channel.taps.append(channel_tap)
    elif kind is AdversaryKind.SHOULDER_SURFER:
        for channel in session.channels.values():
            if channel.kind is ChannelKind.VISUAL and channel.sender is locus:
                channel.taps.append(channel_tap)
    elif kind is AdversaryKind.MALWARE:
        entity = session.entities[locus]

        def io_tap(direction: str, channel: Channel, msg: Message) -> None:
            handle.record(session.step, channel.kind, msg)

        entity.io_taps.append(io_tap)

        def alter_hook(channel_name: str, msg: Message):
            if handle.alter_tx is not None and msg.tag == "submit_tx":
                return replace(msg, tx=handle.alter_tx)
            if handle.alter_tx is not None and msg.tag == "side_copy":
                return replace(msg, tx=handle.alter_tx)
            return msg

        entity.outbound_hooks.append(alter_hook)
    # fake_server and brute_force hold no foothold inside the session
    return handle


def _exfiltrate(handle: AttackerHandle) -> None:
    """Malware reads its locus outright; a phone compromise yields the key."""
    if handle.config.kind is not AdversaryKind.MALWARE:
        return
    state = handle.session.entities[handle.config.locus].state
    pair = state.get("keypair")
    if isinstance(pair, crypto.KeyPair):
        handle.stolen_keypair = pair


# -------- followup attacks: the adversary actually tries --------


def _followup_config(protocol: Protocol, seed: int, **overrides) -> SessionConfig:
    return SessionConfig(protocol=protocol, seed=seed, **overrides)


def _attempt(config: SessionConfig, store: CredentialStore) -> bool:
    return run_flow(config, store).outcome is Outcome.AUTHENTICATED


def _later_authentication(handle: AttackerHandle, budget: int) -> bool:
    """Mount every strategy the observations support against a new session."""
    session = handle.session
    protocol = session.protocol
    if protocol not in AUTH_PROTOCOLS:
        return False
    store: CredentialStore = session.store
    seed = rngmod.child_seed(session.seed, "followup", handle.config.kind.value)

    login = handle.observed("login")
    if login is not None and protocol is Protocol.P3:
        # learned credentials suffice: encrypt them on any phone at all
        user_id, password = login
        own_phone = crypto.generate_keypair(crypto.Role.USER, rngmod.fork(seed, "attacker-phone"))
        if _attempt(
            _followup_config(
                protocol,
                rngmod.child_seed(seed, "learned-creds"),
                user_id=user_id,
                submit_passwords=(password,),
                phone_keypair_override=own_phone,
            ),
            store,
        ):
            return True

    if handle.stolen_keypair is not None and protocol is Protocol.P2:
        # the exfiltrated private key opens any future challenge
        if _attempt(
            _followup_config(
                protocol,
                rngmod.child_seed(seed, "stolen-key"),
                user_id=session.config.user_id,
                phone_keypair_override=handle.stolen_keypair,
            ),
            store,
        ):
            return True

    replays = {
        Protocol.P1: ("positions", "scripted_positions"),
        Protocol.P2: ("otp", "scripted_otp"),
        Protocol.P3: ("ciphertext", "scripted_ciphertext"),
    }
    label, config_field = replays[protocol]
    captured = handle.observed(label)
    if captured is not None:
        if _attempt(
            _followup_config(
                protocol,
                rngmod.child_seed(seed, "replay"),
                user_id=session.config.user_id,
                **{config_field: captured[0]},
            ),
            store,
        ):
            return True

    if handle.config.kind is AdversaryKind.BRUTE_FORCE:
        return brute_force_guessing(store, session.config.user_id, budget, seed) > 0
    return False


def _transaction_alteration(handle: AttackerHandle) -> bool:
    """Can the compromise push an altered transaction past the live guard?"""
    if handle.config.kind is not AdversaryKind.MALWARE:
        return False
    session = handle.session
    store: CredentialStore = session.store
    seed = rngmod.child_seed(session.seed, "alter-tx", handle.config.locus.value)
    config = SessionConfig(protocol=Protocol.HIJACKGUARD, seed=seed, flags=session.flags)
    followup = None

    def install(new_session: Session) -> None:
        nonlocal followup
        followup = attach(handle.config, new_session)
        followup.alter_tx = EVIL_TX

    result = run_hijack_guard(config, store, adversaries=[_Installer(install)])
    return result.session.executed_tx == EVIL_TX


class _Installer:
    """Adapter so a bare callable can ride the adversaries= hook point."""

    def __init__(self, fn):
        self._fn = fn

    def install(self, session: Session) -> None:
        self._fn(session)


def evaluate(handle: AttackerHandle, followup_budget: int = FOLLOWUP_BUDGET) -> AttackOutcome:
    """Score a completed, observed session by attacking its aftermath."""
    _exfiltrate(handle)
    login = handle.observed("login")
    learned_password = login is not None
    later = _later_authentication(handle, followup_budget)
    return AttackOutcome(
        learned_password=learned_password,
        learned_reusable_secret=learned_password or handle.stolen_keypair is not None,
        can_authenticate_later=later,
        can_alter_transaction=_transaction_alteration(handle),
        posterior_candidate_count=None,  # full 36-symbol instance: see posterior_count
    )


def run_attacked_session(
    protocol: Protocol,
    config: AdversaryConfig,
    seed: int,
    store: CredentialStore | None = None,
    flags: SessionFlags = SessionFlags(),
    session_config: SessionConfig | None = None,
) -> tuple[AttackerHandle, "SessionResultLike"]:
    """Honest run with the adversary attached; returns handle + result."""
    store = store or CredentialStore.provision(rngmod.child_seed(seed, "store"))
    if session_config is None:
        session_config = SessionConfig(protocol=protocol, seed=seed, flags=flags)
    holder = []

    def install(session: Session) -> None:
        holder.append(attach(config, session))

    result = run_flow(session_config, store, adversaries=[_Installer(install)])
    return holder[0], result


SessionResultLike = object


# -------- the keylogger posterior, by plain enumeration --------


def posterior_count(observed_positions: tuple[int, ...] | list[int], k: int, n: int) -> int:
    """Passwords of length n over a k-symbol alphabet consistent with the
    observed click positions on a k-position blank keyboard.

    Enumerates all k! layouts; each layout determines the one password
    that would have produced the clicks, so the posterior is a set size.
    Small instances only.
    """
    if n < 0 or n > 4:
        raise ValueError("password length out of the desk-scale range (n <= 4)")
    if len(observed_positions) != n:
        raise ValueError("need exactly one observed position per password symbol")
    if n == 0:
        return 1
    if k > 10:
        raise ValueError("instance too large: k <= 10 for full enumeration")
    if any(p < 0 or p >= k for p in observed_positions):
        raise ValueError("observed position outside the keyboard")
    candidates = set()
    for layout in itertools.permutations(range(k)):
        candidates.add(tuple(layout[p] for p in observed_positions))
    return len(candidates)


# -------- offline guessing --------


def brute_force_guessing(
    store: CredentialStore, user_id: str, budget: int, seed: int
) -> int:
    """Random password guesses against the stored credential; returns hits.

    Models the offline attacker with no foothold: each guess is a fresh
    uniform draw over the full password space.
    """
    password = store.users[user_id].password
    rng = rngmod.fork(seed, "bruteforce")
    length = len(password)
    hits = 0
    for _ in range(budget):
        guess = "".join(rng.choices(crypto.ALPHABET, k=length))
        if guess == password:
            hits += 1
    return hits


# -------- named scenarios from the documented caveats --------


def dual_locus_surfer_scenario(seed: int, store: CredentialStore | None = None) -> dict:
    """An onlooker watching BOTH screens during a keyboard-permutation
    login composes the phone's layout with the terminal's click echoes and
    reads the password off. The per-locus matrix survives; this does not.
    """
    store = store or CredentialStore.provision(rngmod.child_seed(seed, "store"))
    session_config = SessionConfig(protocol=Protocol.P1, seed=seed)
    handles = []

    def install(session: Session) -> None:
        handles.append(attach(AdversaryConfig(AdversaryKind.SHOULDER_SURFER, EntityKind.TERMINAL), session))
        handles.append(attach(AdversaryConfig(AdversaryKind.SHOULDER_SURFER, EntityKind.SMARTPHONE), session))

    result = run_flow(session_config, store, adversaries=[_Installer(install)])
    positions = None
    layout_bytes = None
    for handle in handles:
        positions = positions or handle.observed("positions")
        layout_bytes = layout_bytes or handle.observed("layout")
    recovered = None
    if positions and layout_bytes:
        layout = crypto.KeyboardPermutation.from_serialized(layout_bytes[0])
        recovered = layout.resolve(positions[0])
    actual = store.users[session_config.user_id].password
    return {
        "outcome": result.outcome,
        "recovered_password": recovered,
        "actual_password": actual,
        "password_recovered": recovered == actual,
    }


def fake_server_scenario(seed: int, store: CredentialStore | None = None) -> dict:
    """Phishing against the nonce-upload flow.

    The fake far end issues its own nonce, the victim's phone dutifully
    seals credentials, but to the GENUINE server's pinned public key with
    the genuine server's name inside. Three failures follow: the phisher
    cannot open the ciphertext, relaying it to the real server dies on
    nonce freshness, and a ciphertext naming the wrong server dies on the
    name check even with a live nonce.
    """
    store = store or CredentialStore.provision(rngmod.child_seed(seed, "store"))
    credential = store.users["alice"]
    fake_pair = crypto.generate_keypair(crypto.Role.SERVER, rngmod.fork(seed, "fake-server"))
    fake_nonce = crypto.fresh_nonce(rngmod.fork(seed, "fake-nonce"), session_id=0)

    # what the phone would upload after scanning the phisher's nonce frame
    from .protocols import _pack_credentials  # shared wire layout

    plain = _pack_credentials(fake_nonce.value, credential.user_id, credential.password, store.server_name)
    blob = crypto.encrypt(store.server_pair.public_key, plain, rngmod.fork(seed, "phone-seal")).to_bytes()

    try:
        crypto.decrypt(fake_pair, crypto.Ciphertext.from_bytes(blob))
        phisher_decrypted = True
    except crypto.IntegrityError:
        phisher_decrypted = False

    relay = run_flow(
        SessionConfig(
            protocol=Protocol.P3,
            seed=rngmod.child_seed(seed, "relay"),
            scripted_ciphertext=blob,
        ),
        store,
    )

    misdirected = run_flow(
        SessionConfig(
            protocol=Protocol.P3,
            seed=rngmod.child_seed(seed, "misdirected"),
            phone_server_name_override="totally-real-bank",
        ),
        store,
    )

    return {
        "phisher_decrypted": phisher_decrypted,
        "relay_outcome": relay.outcome,
        "wrong_name_outcome": misdirected.outcome,
    }


def confirmation_replay_scenario(
    seed: int, tx_nonce_freshness: bool, store: CredentialStore | None = None
) -> dict:
    """Terminal malware masks an altered transaction with an old receipt.

    First a clean confirmation for the victim's usual transaction is
    recorded. In the attacked session the malware rewrites the submission
    to its own transaction, then papers over it: the terminal page and the
    barcode it shows the phone are both the stale original. Without the
    session nonce inside the signed blob the phone has no way to tell, the
    user sees everything agree, and the altered transaction executes. With
    freshness on, the stale receipt fails the nonce check and the user
    flags it.
    """
    store = store or CredentialStore.provision(rngmod.child_seed(seed, "store"))
    flags = SessionFlags(tx_nonce_freshness=tx_nonce_freshness)
    intended = SessionConfig(protocol=Protocol.TXVERIFY, seed=0).tx

    captured: dict = {}

    def recorder(session: Session) -> None:
        terminal = session.entities[EntityKind.TERMINAL]

        def tap(direction: str, channel, msg) -> None:
            if msg.tag == "tx_confirmation":
                captured["frame"] = msg.frame
                captured["display_tx"] = msg.display_tx

        terminal.io_taps.append(tap)

    clean = run_flow(
        SessionConfig(protocol=Protocol.TXVERIFY, seed=rngmod.child_seed(seed, "clean"), flags=flags),
        store,
        adversaries=[_Installer(recorder)],
    )

    def replayer(session: Session) -> None:
        terminal = session.entities[EntityKind.TERMINAL]

        def hook(channel_name: str, msg):
            if msg.tag == "submit_tx":
                return replace(msg, tx=EVIL_TX)
            if msg.tag == "show_tx_frame":
                return replace(msg, frame=captured["frame"])
            if msg.tag == "show_tx_page":
                return replace(msg, tx=captured["display_tx"])
            return msg

        terminal.outbound_hooks.append(hook)

    attacked = run_flow(
        SessionConfig(
            protocol=Protocol.TXVERIFY, seed=rngmod.child_seed(seed, "attacked"), flags=flags
        ),
        store,
        adversaries=[_Installer(replayer)],
    )
    return {
        "clean_outcome": clean.outcome,
        "attacked_outcome": attacked.outcome,
        "attacker_tx_executed": attacked.session.executed_tx == EVIL_TX,
        "intended_tx": intended,
    }


def otp_race_scenario(seed: int, hijack_guard: bool, store: CredentialStore | None = None) -> dict:
    """Terminal malware in the one-time-password flow.

    The compromise reads the token as it passes through (conceded and
    unavoidable there) and then tries to spend the live session on its own
    transaction. With the side-channel guard on, the altered transaction
    dies on the mismatch; with it off, this is a working hijack. Either
    way the captured token buys no LATER login: it is consumed.
    """
    store = store or CredentialStore.provision(rngmod.child_seed(seed, "store"))
    flags = SessionFlags(hijack_guard=hijack_guard)
    config = AdversaryConfig(AdversaryKind.MALWARE, EntityKind.TERMINAL)
    handle, login_result = run_attacked_session(Protocol.P2, config, seed, store, flags=flags)

    captured = handle.observed("otp")
    replay = run_flow(
        SessionConfig(
            protocol=Protocol.P2,
            seed=rngmod.child_seed(seed, "race-replay"),
            scripted_otp=captured[0] if captured else "",
        ),
        store,
    )

    hijack_config = SessionConfig(
        protocol=Protocol.HIJACKGUARD, seed=rngmod.child_seed(seed, "hijack"), flags=flags
    )
    followup = []

    def install(session: Session) -> None:
        h = attach(config, session)
        h.alter_tx = EVIL_TX
        followup.append(h)

    hijack = run_hijack_guard(hijack_config, store, adversaries=[_Installer(install)])
    return {
        "login_outcome": login_result.outcome,
        "otp_captured": captured is not None,
        "replay_outcome": replay.outcome,
        "hijack_outcome": hijack.outcome,
        "attacker_tx_executed": hijack.session.executed_tx == EVIL_TX,
    }


# -------- the full resistance matrix --------


@dataclass(frozen=True)
class MatrixCell:
    protocol: Protocol
    kind: AdversaryKind
    locus: EntityKind
    trials: int
    breaches: int
    expected_resist: bool

    @property
    def resisted(self) -> bool:
        return self.breaches == 0

    @property
    def matches_expected(self) -> bool:
        return self.resisted == self.expected_resist


def run_matrix(seed: int, trials: int = 100, followup_budget: int = FOLLOWUP_BUDGET) -> list[MatrixCell]:
    """Every protocol x adversary x locus, each cell over seeded trials.

    A cell resists when no trial's adversary could authenticate later.
    """
    store = CredentialStore.provision(rngmod.child_seed(seed, "matrix-store"))
    cells = []
    for protocol in AUTH_PROTOCOLS:
        for kind in MATRIX_KINDS:
            for locus in MATRIX_LOCI:
                breaches = 0
                for trial in range(trials):
                    trial_seed = rngmod.child_seed(
                        seed, protocol.value, kind.value, locus.value, str(trial)
                    )
                    handle, result = run_attacked_session(
                        protocol, AdversaryConfig(kind, locus), trial_seed, store
                    )
                    outcome = evaluate(handle, followup_budget)
                    if outcome.can_authenticate_later:
                        breaches += 1
                cells.append(
                    MatrixCell(
                        protocol=protocol,
                        kind=kind,
                        locus=locus,
                        trials=trials,
                        breaches=breaches,
                        expected_resist=expected_resistance(protocol, kind, locus),
                    )
                )
    return cells
