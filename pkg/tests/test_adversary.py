"""Adversary observations, followup attacks, the resistance matrix."""

from __future__ import annotations

import itertools

import pytest

from visualauth.adversary import (
    BROKEN_CELLS,
    EVIL_TX,
    AdversaryConfig,
    AdversaryKind,
    MatrixCell,
    brute_force_guessing,
    confirmation_replay_scenario,
    dual_locus_surfer_scenario,
    evaluate,
    expected_resistance,
    fake_server_scenario,
    otp_race_scenario,
    posterior_count,
    run_attacked_session,
    run_matrix,
)
from visualauth.entities import EntityKind
from visualauth.protocols import (
    AUTH_PROTOCOLS,
    CredentialStore,
    Outcome,
    Protocol,
)


# -------- the posterior oracle, computed before anything is trusted --------
#
# Desk-scale instance: a 5-position blank keyboard and 2-symbol passwords.
# The oracle enumerates BOTH sides (all 120 layouts x all 25 candidate
# passwords) and asks, per password, whether some layout reconciles it
# with the observed clicks. posterior_count enumerates layouts only, so
# the two routes agree only if the counting logic is right.

ORACLE_K = 5
ORACLE_N = 2
ORACLE_DISTINCT_POSITIONS = (1, 3)
ORACLE_REPEATED_POSITIONS = (2, 2)

# frozen outputs of the oracle below; recomputed in the test every run
ORACLE_DISTINCT_COUNT = 20
ORACLE_REPEATED_COUNT = 5


def _feasible_passwords(observed: tuple[int, ...], k: int) -> set[tuple[int, ...]]:
    feasible = set()
    for password in itertools.product(range(k), repeat=len(observed)):
        for layout in itertools.permutations(range(k)):
            if all(layout[p] == c for p, c in zip(observed, password)):
                feasible.add(password)
                break
    return feasible


def _falling_factorial(k: int, d: int) -> int:
    out = 1
    for i in range(d):
        out *= k - i
    return out


class TestPosteriorOracle:
    def test_oracle_distinct_positions(self):
        oracle = _feasible_passwords(ORACLE_DISTINCT_POSITIONS, ORACLE_K)
        assert len(oracle) == ORACLE_DISTINCT_COUNT
        assert (
            posterior_count(ORACLE_DISTINCT_POSITIONS, ORACLE_K, ORACLE_N)
            == ORACLE_DISTINCT_COUNT
        )

    def test_oracle_repeated_positions(self):
        oracle = _feasible_passwords(ORACLE_REPEATED_POSITIONS, ORACLE_K)
        assert len(oracle) == ORACLE_REPEATED_COUNT
        assert (
            posterior_count(ORACLE_REPEATED_POSITIONS, ORACLE_K, ORACLE_N)
            == ORACLE_REPEATED_COUNT
        )
        # repeated clicks pin the symbols to be equal, nothing more
        assert all(a == b for a, b in _feasible_passwords((2, 2), ORACLE_K))

    def test_posterior_is_the_falling_factorial_of_distinct_clicks(self):
        for k in range(3, 8):
            for positions in [(), (0,), (0, 1), (1, 1), (0, 1, 2), (0, 0, 1), (2, 2, 2)]:
                if any(p >= k for p in positions):
                    continue
                expected = _falling_factorial(k, len(set(positions)))
                assert posterior_count(positions, k, len(positions)) == expected

    def test_full_keyboard_zero_observations(self):
        # nothing observed: the posterior is everything, reported as 1
        # consistent with the empty password
        assert posterior_count((), 36, 0) == 1

    def test_instance_guards(self):
        with pytest.raises(ValueError):
            posterior_count((0,) * 5, 5, 5)  # n > 4
        with pytest.raises(ValueError):
            posterior_count((0, 1), 5, 3)  # length mismatch
        with pytest.raises(ValueError):
            posterior_count((0, 1), 36, 2)  # k too large to enumerate
        with pytest.raises(ValueError):
            posterior_count((7,), 5, 1)  # position off the keyboard


class TestExpectedPattern:
    def test_exactly_three_broken_cells(self):
        assert BROKEN_CELLS == {
            (Protocol.P2, AdversaryKind.MALWARE, EntityKind.SMARTPHONE),
            (Protocol.P3, AdversaryKind.KEYLOGGER, EntityKind.SMARTPHONE),
            (Protocol.P3, AdversaryKind.MALWARE, EntityKind.SMARTPHONE),
        }

    def test_expected_resistance_mirrors_the_set(self):
        total = 0
        broken = 0
        for protocol in AUTH_PROTOCOLS:
            for kind in (
                AdversaryKind.KEYLOGGER,
                AdversaryKind.MALWARE,
                AdversaryKind.SHOULDER_SURFER,
                AdversaryKind.BRUTE_FORCE,
            ):
                for locus in (EntityKind.TERMINAL, EntityKind.SMARTPHONE):
                    total += 1
                    if not expected_resistance(protocol, kind, locus):
                        broken += 1
        assert total == 24
        assert broken == 3

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdversaryConfig(AdversaryKind.KEYLOGGER, EntityKind.SERVER)

    def test_capability_sets(self):
        key = AdversaryConfig(AdversaryKind.KEYLOGGER, EntityKind.TERMINAL)
        assert key.capabilities == {"tap_input:terminal"}
        mal = AdversaryConfig(AdversaryKind.MALWARE, EntityKind.SMARTPHONE)
        assert "read_state:smartphone" in mal.capabilities
        assert "alter_outbound:smartphone" in mal.capabilities
        brute = AdversaryConfig(AdversaryKind.BRUTE_FORCE)
        assert brute.capabilities == {"guess_offline"}


def _attack(protocol, kind, locus, seed):
    handle, result = run_attacked_session(protocol, AdversaryConfig(kind, locus), seed)
    return handle, result, evaluate(handle)


class TestKeyloggerCells:
    def test_p1_terminal_sees_positions_but_no_symbols(self):
        handle, result, outcome = _attack(
            Protocol.P1, AdversaryKind.KEYLOGGER, EntityKind.TERMINAL, 201
        )
        assert result.outcome is Outcome.AUTHENTICATED
        kinds = {obs.data[0] for obs in handle.observations}
        assert kinds <= {"typed_id", "positions", "click"}
        assert handle.observed("positions") is not None
        password = handle.session.store.users["alice"].password
        for obs in handle.observations:
            assert password not in map(str, obs.data)
        assert not outcome.learned_password
        assert not outcome.can_authenticate_later

    def test_p1_position_replay_fails_against_a_fresh_layout(self):
        handle, _, outcome = _attack(
            Protocol.P1, AdversaryKind.KEYLOGGER, EntityKind.TERMINAL, 202
        )
        assert handle.observed("positions") is not None
        assert not outcome.can_authenticate_later

    def test_p1_smartphone_hears_nothing(self):
        handle, _, outcome = _attack(
            Protocol.P1, AdversaryKind.KEYLOGGER, EntityKind.SMARTPHONE, 203
        )
        assert handle.observations == []
        assert not outcome.can_authenticate_later

    def test_p2_terminal_captures_a_dead_token(self):
        handle, _, outcome = _attack(
            Protocol.P2, AdversaryKind.KEYLOGGER, EntityKind.TERMINAL, 204
        )
        assert handle.observed("otp") is not None
        assert not outcome.learned_reusable_secret
        assert not outcome.can_authenticate_later

    def test_p3_terminal_sees_only_a_connect_click(self):
        handle, _, outcome = _attack(
            Protocol.P3, AdversaryKind.KEYLOGGER, EntityKind.TERMINAL, 205
        )
        kinds = {obs.data[0] for obs in handle.observations}
        assert kinds <= {"click"}
        assert not outcome.can_authenticate_later

    def test_p3_smartphone_reads_the_typed_credentials(self):
        # the one keylogger placement that breaks anything: the password
        # is typed on the phone in this flow, and id+password is all the
        # flow ever needs
        handle, _, outcome = _attack(
            Protocol.P3, AdversaryKind.KEYLOGGER, EntityKind.SMARTPHONE, 206
        )
        assert handle.observed("login") == ("alice", "data")
        assert outcome.learned_password
        assert outcome.learned_reusable_secret
        assert outcome.can_authenticate_later


class TestShoulderSurferCells:
    def test_p1_terminal_view_is_positions_only(self):
        handle, _, outcome = _attack(
            Protocol.P1, AdversaryKind.SHOULDER_SURFER, EntityKind.TERMINAL, 211
        )
        assert handle.observed("positions") is not None
        assert handle.observed("layout") is None
        assert not outcome.can_authenticate_later

    def test_p1_smartphone_view_is_layout_only(self):
        handle, _, outcome = _attack(
            Protocol.P1, AdversaryKind.SHOULDER_SURFER, EntityKind.SMARTPHONE, 212
        )
        assert handle.observed("layout") is not None
        assert handle.observed("positions") is None
        assert not outcome.can_authenticate_later

    def test_p2_either_screen_shows_a_consumed_token(self):
        for locus, seed in ((EntityKind.TERMINAL, 213), (EntityKind.SMARTPHONE, 214)):
            handle, _, outcome = _attack(
                Protocol.P2, AdversaryKind.SHOULDER_SURFER, locus, seed
            )
            assert handle.observed("otp") is not None
            assert not outcome.can_authenticate_later

    def test_p3_smartphone_shows_only_masked_glyphs(self):
        handle, _, outcome = _attack(
            Protocol.P3, AdversaryKind.SHOULDER_SURFER, EntityKind.SMARTPHONE, 215
        )
        assert handle.observed("login") is None
        user_id, masked = handle.observed("masked_login")
        assert user_id == "alice"
        assert masked == "****"
        assert not outcome.learned_password
        assert not outcome.can_authenticate_later


class TestMalwareCells:
    def test_p1_smartphone_steals_the_key_but_not_the_password(self):
        handle, _, outcome = _attack(
            Protocol.P1, AdversaryKind.MALWARE, EntityKind.SMARTPHONE, 221
        )
        assert handle.stolen_keypair is not None
        assert handle.observed("layout") is not None
        # the key alone decrypts layouts; clicking still takes the password
        assert not outcome.can_authenticate_later

    def test_p2_smartphone_key_theft_opens_future_tokens(self):
        handle, _, outcome = _attack(
            Protocol.P2, AdversaryKind.MALWARE, EntityKind.SMARTPHONE, 222
        )
        assert handle.stolen_keypair is not None
        assert outcome.learned_reusable_secret
        assert outcome.can_authenticate_later

    def test_p2_terminal_malware_only_gets_the_spent_token(self):
        handle, _, outcome = _attack(
            Protocol.P2, AdversaryKind.MALWARE, EntityKind.TERMINAL, 223
        )
        assert handle.stolen_keypair is None
        assert handle.observed("otp") is not None
        assert not outcome.can_authenticate_later

    def test_p3_smartphone_malware_reads_credentials_in_flight(self):
        handle, _, outcome = _attack(
            Protocol.P3, AdversaryKind.MALWARE, EntityKind.SMARTPHONE, 224
        )
        assert handle.observed("login") == ("alice", "data")
        assert outcome.can_authenticate_later

    def test_p3_terminal_malware_holds_ciphertext_only(self):
        handle, _, outcome = _attack(
            Protocol.P3, AdversaryKind.MALWARE, EntityKind.TERMINAL, 225
        )
        assert handle.observed("login") is None
        assert handle.observed("ciphertext") is not None
        assert not outcome.can_authenticate_later


class TestBruteForceCells:
    def test_no_foothold_no_observations(self):
        for protocol, seed in ((Protocol.P1, 231), (Protocol.P2, 232), (Protocol.P3, 233)):
            handle, result, outcome = _attack(
                protocol, AdversaryKind.BRUTE_FORCE, EntityKind.TERMINAL, seed
            )
            assert result.outcome is Outcome.AUTHENTICATED
            assert handle.observations == []
            assert not outcome.can_authenticate_later

    def test_guessing_budget_finds_nothing_at_scale(self):
        store = CredentialStore.provision(234)
        assert brute_force_guessing(store, "alice", budget=10_000, seed=234) == 0

    def test_guessing_is_deterministic(self):
        store = CredentialStore.provision(235)
        a = brute_force_guessing(store, "alice", budget=500, seed=77)
        b = brute_force_guessing(store, "alice", budget=500, seed=77)
        assert a == b

    def test_guessing_can_hit_a_one_symbol_password(self):
        # positive control: the guesser works, the space is just too big
        store = CredentialStore.provision(236, users=(("tiny", "a"),))
        assert brute_force_guessing(store, "tiny", budget=500, seed=236) > 0


class TestMatrix:
    def test_small_matrix_reproduces_the_pattern(self):
        cells = run_matrix(seed=2401, trials=3)
        assert len(cells) == 24
        for cell in cells:
            assert cell.matches_expected, (cell.protocol, cell.kind, cell.locus)
            broken = (cell.protocol, cell.kind, cell.locus) in BROKEN_CELLS
            if broken:
                # the breaking attacks are deterministic, not probabilistic
                assert cell.breaches == cell.trials
            else:
                assert cell.breaches == 0

    def test_matrix_is_deterministic(self):
        assert run_matrix(seed=2402, trials=2) == run_matrix(seed=2402, trials=2)

    def test_breaches_imply_reusable_secrets(self):
        # invariant: nobody authenticates later without a reusable secret
        for protocol in AUTH_PROTOCOLS:
            for kind in (AdversaryKind.KEYLOGGER, AdversaryKind.MALWARE):
                for locus in (EntityKind.TERMINAL, EntityKind.SMARTPHONE):
                    handle, _, outcome = _attack(protocol, kind, locus, 241)
                    if outcome.can_authenticate_later:
                        assert outcome.learned_reusable_secret

    def test_cell_properties(self):
        cell = MatrixCell(
            protocol=Protocol.P1,
            kind=AdversaryKind.KEYLOGGER,
            locus=EntityKind.TERMINAL,
            trials=5,
            breaches=0,
            expected_resist=True,
        )
        assert cell.resisted and cell.matches_expected
        breached = MatrixCell(
            protocol=Protocol.P3,
            kind=AdversaryKind.KEYLOGGER,
            locus=EntityKind.SMARTPHONE,
            trials=5,
            breaches=5,
            expected_resist=False,
        )
        assert not breached.resisted
        assert breached.matches_expected


class TestDualLocusSurfer:
    def test_both_screens_together_leak_the_password(self):
        report = dual_locus_surfer_scenario(seed=251)
        assert report["outcome"] is Outcome.AUTHENTICATED
        assert report["password_recovered"]
        assert report["recovered_password"] == report["actual_password"] == "data"

    def test_composition_is_layout_applied_to_clicks(self):
        report = dual_locus_surfer_scenario(seed=252)
        assert report["recovered_password"] == report["actual_password"]


class TestFakeServer:
    def test_phishing_fails_three_ways(self):
        report = fake_server_scenario(seed=261)
        assert report["phisher_decrypted"] is False
        assert report["relay_outcome"] is Outcome.DENIED
        assert report["wrong_name_outcome"] is Outcome.DENIED


class TestOtpRace:
    def test_with_the_guard_on(self):
        report = otp_race_scenario(seed=271, hijack_guard=True)
        assert report["login_outcome"] is Outcome.AUTHENTICATED
        assert report["otp_captured"]
        assert report["replay_outcome"] is Outcome.DENIED
        assert report["hijack_outcome"] is Outcome.REJECTED
        assert not report["attacker_tx_executed"]

    def test_with_the_guard_off(self):
        report = otp_race_scenario(seed=272, hijack_guard=False)
        assert report["otp_captured"]
        assert report["replay_outcome"] is Outcome.DENIED
        assert report["hijack_outcome"] is Outcome.ACCEPTED
        assert report["attacker_tx_executed"]


class TestConfirmationReplay:
    def test_freshness_on_catches_the_stale_receipt(self):
        report = confirmation_replay_scenario(seed=281, tx_nonce_freshness=True)
        assert report["clean_outcome"] is Outcome.CONFIRMED
        assert report["attacked_outcome"] is Outcome.USER_FLAGGED_MISMATCH
        assert not report["attacker_tx_executed"]

    def test_freshness_off_is_the_documented_gap(self):
        # positive control: remove the nonce and the replay walks through
        report = confirmation_replay_scenario(seed=282, tx_nonce_freshness=False)
        assert report["clean_outcome"] is Outcome.CONFIRMED
        assert report["attacked_outcome"] is Outcome.CONFIRMED
        assert report["attacker_tx_executed"]


class TestTransactionAlteration:
    def test_terminal_malware_cannot_alter_past_the_guard(self):
        handle, _, outcome = _attack(
            Protocol.P2, AdversaryKind.MALWARE, EntityKind.TERMINAL, 291
        )
        assert not outcome.can_alter_transaction

    def test_passive_observers_never_alter(self):
        for kind in (AdversaryKind.KEYLOGGER, AdversaryKind.SHOULDER_SURFER):
            handle, _, outcome = _attack(Protocol.P1, kind, EntityKind.TERMINAL, 292)
            assert not outcome.can_alter_transaction

    def test_evil_transaction_shape(self):
        assert EVIL_TX.amount > 0
        assert EVIL_TX.receiver_account != "ACCT-7291"
