"""Key handling, sealing, signing, permutations, tokens, nonces."""

from __future__ import annotations

import math
import random

import pytest

from visualauth import crypto
from visualauth.crypto import (
    ALPHABET,
    Ciphertext,
    CryptoError,
    IntegrityError,
    KeyboardPermutation,
    OversizeMessageError,
    Role,
    Signature,
)
from visualauth.rng import fork


@pytest.fixture
def pair():
    return crypto.generate_keypair(Role.USER, seed=1001)


@pytest.fixture
def server_pair():
    return crypto.generate_keypair(Role.SERVER, seed=1002)


class TestKeyPairs:
    def test_deterministic_generation(self):
        a = crypto.generate_keypair(Role.USER, seed=7)
        b = crypto.generate_keypair(Role.USER, seed=7)
        c = crypto.generate_keypair(Role.USER, seed=8)
        assert a.public_key == b.public_key and a.private_key == b.private_key
        assert a.public_key != c.public_key

    def test_key_sizes(self, pair):
        # 32 sealing + 32 signing bytes on each half
        assert len(pair.public_key) == 64
        assert len(pair.private_key) == 64

    def test_keyfile_round_trip(self, pair, tmp_path):
        path = tmp_path / "user.key"
        crypto.save_keypair(path, pair)
        assert path.read_bytes()[:4] == b"VAK1"
        assert len(path.read_bytes()) == 133
        loaded = crypto.load_keypair(path)
        assert loaded == pair

    def test_keyfile_bad_magic(self, pair, tmp_path):
        path = tmp_path / "mangled.key"
        crypto.save_keypair(path, pair)
        raw = bytearray(path.read_bytes())
        raw[0] ^= 0xFF
        path.write_bytes(bytes(raw))
        with pytest.raises(ValueError):
            crypto.load_keypair(path)

    def test_keyfile_truncated(self, pair, tmp_path):
        path = tmp_path / "short.key"
        crypto.save_keypair(path, pair)
        path.write_bytes(path.read_bytes()[:50])
        with pytest.raises(ValueError):
            crypto.load_keypair(path)


class TestSealing:
    def test_round_trip_many_sizes(self, pair):
        # spec-level property: everything up to 4 KiB comes back intact
        rng = random.Random(42)
        for i in range(1000):
            message = rng.randbytes(rng.randrange(0, 4097))
            ct = crypto.encrypt(pair.public_key, message, rng=fork(42, "e", str(i)))
            assert crypto.decrypt(pair, ct) == message

    def test_encryption_deterministic_under_seed(self, pair):
        ct1 = crypto.encrypt(pair.public_key, b"fixed message", rng=99)
        ct2 = crypto.encrypt(pair.public_key, b"fixed message", rng=99)
        ct3 = crypto.encrypt(pair.public_key, b"fixed message", rng=100)
        assert ct1.to_bytes() == ct2.to_bytes()
        assert ct1.to_bytes() != ct3.to_bytes()

    def test_wrong_key_rejected_across_pairs(self):
        # 100 distinct recipients; each ciphertext opens for exactly its own
        pairs = [crypto.generate_keypair(Role.USER, seed=2000 + i) for i in range(100)]
        message = b"addressed to one recipient only"
        for i, owner in enumerate(pairs):
            ct = crypto.encrypt(owner.public_key, message, rng=3000 + i)
            assert crypto.decrypt(owner, ct) == message
            stranger = pairs[(i + 1) % len(pairs)]
            with pytest.raises(IntegrityError):
                crypto.decrypt(stranger, ct)

    def test_every_single_bit_flip_rejected(self, pair):
        message = b"16 byte msg here"
        ct = crypto.encrypt(pair.public_key, message, rng=5)
        wire = ct.to_bytes()
        for byte_index in range(len(wire)):
            for bit in range(8):
                mangled = bytearray(wire)
                mangled[byte_index] ^= 1 << bit
                with pytest.raises(IntegrityError):
                    crypto.decrypt(pair, Ciphertext.from_bytes(bytes(mangled)))

    def test_ciphertext_wire_round_trip(self, pair):
        ct = crypto.encrypt(pair.public_key, b"transportable", rng=6)
        again = Ciphertext.from_bytes(ct.to_bytes())
        assert again == ct

    def test_truncated_wire_rejected(self, pair):
        wire = crypto.encrypt(pair.public_key, b"clip me", rng=7).to_bytes()
        for cut in (0, 1, 4, len(wire) // 2, len(wire) - 1):
            with pytest.raises(IntegrityError):
                Ciphertext.from_bytes(wire[:cut])


class TestSymmetric:
    def test_round_trip(self):
        key = fork(11, "k").randbytes(crypto.SYMMETRIC_KEY_LEN)
        ct = crypto.symmetric_encrypt(key, b"shared-key payload", rng=12)
        assert crypto.symmetric_decrypt(key, ct) == b"shared-key payload"

    def test_oversize_rejected(self):
        key = fork(13, "k").randbytes(crypto.SYMMETRIC_KEY_LEN)
        with pytest.raises(OversizeMessageError):
            crypto.symmetric_encrypt(key, b"x" * (crypto.SYMMETRIC_MAX_MESSAGE + 1), rng=14)

    def test_tamper_rejected(self):
        key = fork(15, "k").randbytes(crypto.SYMMETRIC_KEY_LEN)
        ct = crypto.symmetric_encrypt(key, b"tamper target", rng=16)
        bad = Ciphertext(ct.scheme_id, ct.body, bytes(b ^ 1 for b in ct.tag))
        with pytest.raises(IntegrityError):
            crypto.symmetric_decrypt(key, bad)

    def test_scheme_confusion_rejected(self, pair):
        # a public-key ciphertext never opens through the symmetric path
        key = fork(17, "k").randbytes(crypto.SYMMETRIC_KEY_LEN)
        ct = crypto.encrypt(pair.public_key, b"mislabeled", rng=18)
        with pytest.raises(IntegrityError):
            crypto.symmetric_decrypt(key, ct)


class TestSignatures:
    def test_sign_verify(self, server_pair):
        sig = crypto.sign(server_pair, b"statement")
        assert crypto.verify(server_pair.public_key, b"statement", sig)

    def test_signature_is_64_bytes(self, server_pair):
        assert len(crypto.sign(server_pair, b"m").sig) == 64

    def test_mutation_fuzz(self, server_pair):
        # 1000 cases: flip one bit in message, signature, or verifying key;
        # every mutation must flip valid -> invalid
        rng = random.Random(77)
        for i in range(1000):
            message = rng.randbytes(rng.randrange(1, 128))
            sig = crypto.sign(server_pair, message)
            target = rng.randrange(3)
            if target == 0:
                mutated = bytearray(message)
                mutated[rng.randrange(len(mutated))] ^= 1 << rng.randrange(8)
                assert not crypto.verify(server_pair.public_key, bytes(mutated), sig)
            elif target == 1:
                raw = bytearray(sig.sig)
                raw[rng.randrange(len(raw))] ^= 1 << rng.randrange(8)
                assert not crypto.verify(
                    server_pair.public_key, message, Signature(bytes(raw), sig.signer)
                )
            else:
                key = bytearray(server_pair.public_key)
                key[32 + rng.randrange(32)] ^= 1 << rng.randrange(8)
                assert not crypto.verify(bytes(key), message, sig)

    def test_wrong_length_signature_invalid(self, server_pair):
        sig = crypto.sign(server_pair, b"m")
        assert not crypto.verify(server_pair.public_key, b"m", Signature(sig.sig[:-1], sig.signer))

    def test_signature_wire_round_trip(self, server_pair):
        sig = crypto.sign(server_pair, b"wire")
        assert Signature.from_bytes(sig.to_bytes()) == sig


class TestKeyboardPermutation:
    def test_is_bijection(self):
        perm = crypto.generate_permutation(fork(5, "p"))
        assert sorted(perm.mapping) == sorted(ALPHABET)

    def test_rejects_non_bijection(self):
        with pytest.raises(ValueError):
            KeyboardPermutation(tuple("a" * 36))

    def test_position_symbol_inverse(self):
        perm = crypto.generate_permutation(fork(6, "p"))
        for pos in range(36):
            assert perm.position_of(perm.symbol_at(pos)) == pos

    def test_resolve_composes_clicks(self):
        perm = crypto.generate_permutation(fork(7, "p"))
        positions = [perm.position_of(ch) for ch in "data99"]
        assert perm.resolve(positions) == "data99"

    def test_case_folds(self):
        perm = KeyboardPermutation.identity()
        assert perm.position_of("A") == perm.position_of("a")

    def test_non_alphabet_symbol_rejected(self):
        with pytest.raises(ValueError):
            KeyboardPermutation.identity().position_of("!")

    def test_serialize_round_trip(self):
        perm = crypto.generate_permutation(fork(8, "p"))
        assert KeyboardPermutation.from_serialized(perm.serialize()) == perm
        assert len(perm.serialize()) == 36

    def test_base64_round_trip(self):
        perm = crypto.generate_permutation(fork(9, "p"))
        assert KeyboardPermutation.from_base64(perm.to_base64()) == perm

    def test_uniformity_over_seeds(self):
        # symbol 'a' should land on each of the 36 positions with
        # frequency 1/36 within a +-5/36 band over 10,000 seeded draws
        counts = [0] * 36
        for seed in range(10_000):
            perm = crypto.generate_permutation(fork(seed, "uniformity"))
            counts[perm.position_of("a")] += 1
        low = 10_000 * (1 / 36 - 5 / 360)
        high = 10_000 * (1 / 36 + 5 / 360)
        assert all(low <= c <= high for c in counts), counts

    def test_identity_layout(self):
        ident = KeyboardPermutation.identity()
        assert ident.symbol_at(0) == "a"
        assert ident.position_of("9") == 35


class TestOtp:
    def test_alphabet_and_length(self):
        token = crypto.generate_otp(fork(1, "otp"), length=8)
        assert len(token.value) == 8
        assert all(ch in ALPHABET for ch in token.value)

    def test_no_duplicates_over_10000_draws(self):
        values = {crypto.generate_otp(fork(seed, "draws")).value for seed in range(10_000)}
        assert len(values) == 10_000

    def test_zero_length_rejected(self):
        with pytest.raises(ValueError):
            crypto.generate_otp(fork(2, "otp"), length=0)

    def test_consumption_state_machine(self):
        token = crypto.generate_otp(fork(3, "otp"))
        assert not token.consumed
        token.consume()
        assert token.consumed
        with pytest.raises(CryptoError):
            token.consume()

    def test_freshness_against_outstanding(self):
        rng = fork(4, "otp")
        first = crypto.generate_otp(rng)
        clone_rng = fork(4, "otp")
        second = crypto.generate_otp(clone_rng, outstanding=[first])
        # same rng state would have produced first again; freshness redraws
        assert second.value != first.value


class TestNonce:
    def test_length_and_determinism(self):
        a = crypto.fresh_nonce(fork(5, "n"), session_id=1)
        b = crypto.fresh_nonce(fork(5, "n"), session_id=1)
        assert a.value == b.value
        assert len(a.value) == crypto.NONCE_LEN

    def test_never_repeats_within_seen_set(self):
        seen: set[bytes] = set()
        values = [crypto.fresh_nonce(fork(6, "n", str(i)), i, seen).value for i in range(1000)]
        assert len(set(values)) == 1000

    def test_bad_length_rejected(self):
        with pytest.raises(ValueError):
            crypto.Nonce(b"short", 0)


class TestEntropyArithmetic:
    """The numbers that justify framing a whole layout in one barcode."""

    def test_log2_36_factorial(self):
        # independent route: lgamma, not the sum the package uses
        via_lgamma = math.lgamma(37) / math.log(2)
        assert abs(via_lgamma - 138.0) <= 0.5
        assert round(via_lgamma, 4) == 138.0943

    def test_naive_symbol_encoding_bits(self):
        assert abs(36 * math.log2(36) - 187.0) <= 1.0
