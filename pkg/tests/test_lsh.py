import itertools
import struct

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sampled_attention import (
    AttentionWorkload,
    DegenerateError,
    FormatError,
    LshConfig,
    build_index,
    center_keys,
    collision_prob,
    expected_budget,
    full_attention,
    load_index,
    mips_transform,
    query_candidates,
    relative_error,
    sampling_prob,
    save_index,
    simhash_encode,
)
from sampled_attention.errors import ArgumentError


def brute_codes(x, proj, K, L):
    """Sign pattern of each projection column, packed bit b -> 2**b, table by table."""
    codes = []
    for t in range(L):
        code = 0
        for b in range(K):
            if float(np.dot(x, proj[:, t * K + b])) >= 0:
                code |= 1 << b
        codes.append(code)
    return codes


def brute_candidates(index, q):
    qc = brute_codes(q, index.projections, index.config.K, index.config.L)
    out = []
    for row, tok in enumerate(index.token_ids):
        hits = sum(int(index.codes[row, t]) == qc[t] for t in range(index.config.L))
        if hits >= index.config.min_collisions:
            out.append((int(tok), hits))
    return out


def test_center_keys_examples():
    centered, c = center_keys([[1.0, 0.0], [3.0, 0.0]])
    np.testing.assert_array_equal(c, [2.0, 0.0])
    np.testing.assert_array_equal(centered, [[-1.0, 0.0], [1.0, 0.0]])
    centered, _ = center_keys([[4.0, -2.0]])
    np.testing.assert_array_equal(centered, [[0.0, 0.0]])
    zero_mean = np.array([[1.0, 2.0], [-1.0, -2.0]])
    np.testing.assert_array_equal(center_keys(zero_mean)[0], zero_mean)


def test_mips_transform_example():
    q_bar, k_bar = mips_transform([1.0, 0.0], [[0.0, 1.0], [2.0, 0.0]])
    np.testing.assert_allclose(k_bar, [[0.0, 1.0, np.sqrt(3.0)], [2.0, 0.0, 0.0]], atol=1e-15)
    np.testing.assert_array_equal(q_bar, [1.0, 0.0, 0.0])
    np.testing.assert_allclose(k_bar @ q_bar, [0.0, 2.0], atol=1e-15)


def test_mips_transform_equal_norms_and_zero_query():
    keys = np.array([[3.0, 4.0], [0.0, 5.0], [-5.0, 0.0]])
    q_bar, k_bar = mips_transform([0.0, 0.0], keys)
    np.testing.assert_array_equal(k_bar[:, 2], 0.0)
    np.testing.assert_array_equal(k_bar @ q_bar, 0.0)
    with pytest.raises(DegenerateError):
        mips_transform([1.0], [[0.0], [0.0]])


def test_mips_transform_exactness(rng):
    for _ in range(50):
        n, d = rng.integers(1, 40), rng.integers(1, 10)
        keys = rng.standard_normal((n, d)) * rng.uniform(0.1, 10, size=(n, 1))
        q = rng.standard_normal(d)
        q_bar, k_bar = mips_transform(q, keys)
        r = np.linalg.norm(keys, axis=1).max()
        assert np.max(np.abs(k_bar @ q_bar - keys @ q)) <= 1e-9
        assert np.max(np.abs(np.linalg.norm(k_bar, axis=1) - r)) <= 1e-9


def test_encode_seeded_example_against_brute_force():
    index = build_index(np.eye(4), LshConfig(K=2, L=1, min_collisions=1, seed=42))
    proj = np.random.default_rng(42).standard_normal((4, 2))
    x = np.array([1.0, 0.0, 0.0, 0.0])
    expected = int(proj[0, 0] >= 0) | (int(proj[0, 1] >= 0) << 1)
    assert simhash_encode(x, index).tolist() == [expected]


def test_encode_self_and_negation(rng):
    index = build_index(rng.standard_normal((5, 6)), LshConfig(K=8, L=12, seed=3))
    first = index.projections[:, 0]
    assert simhash_encode(first, index)[0] & 1 == 1
    x = rng.standard_normal(6)
    mask = (1 << 8) - 1
    np.testing.assert_array_equal(simhash_encode(-x, index), simhash_encode(x, index) ^ mask)
    assert simhash_encode(x, index).tolist() == brute_codes(x, index.projections, 8, 12)


def test_build_index_structure(rng):
    keys = rng.standard_normal((40, 5))
    keys[7] = keys[3]
    index = build_index(keys, LshConfig(K=4, L=9, seed=1))
    assert sum(len(b) for t in index.tables for _, b in t.items()) == 40 * 9
    for t, table in enumerate(index.tables):
        seen = np.concatenate([b for _, b in table.items()])
        np.testing.assert_array_equal(np.sort(seen), np.arange(40))
        for code, bucket in table.items():
            assert 0 <= code < 16
            assert np.all(np.diff(bucket) > 0)
            assert np.all(index.codes[bucket, t] == code)
    np.testing.assert_array_equal(index.codes[3], index.codes[7])


def test_single_key_index():
    index = build_index([[1.0, 2.0, 3.0]], LshConfig(K=3, L=4, seed=0))
    for table in index.tables:
        assert len(table) == 1
        assert [b.tolist() for _, b in table.items()] == [[0]]


def test_build_index_rejects_empty():
    with pytest.raises(DegenerateError):
        build_index(np.zeros((0, 3)), LshConfig())


def test_build_is_deterministic(rng):
    keys = rng.standard_normal((100, 8))
    a = build_index(keys, LshConfig(K=6, L=20, seed=77))
    b = build_index(keys, LshConfig(K=6, L=20, seed=77))
    assert a.tables == b.tables
    assert save_index(a) == save_index(b)


def test_query_with_indexed_key_hits_every_table(rng):
    keys = rng.standard_normal((30, 6))
    index = build_index(keys, LshConfig(K=8, L=25, seed=2))
    cand = query_candidates(index, index.centered_keys[11])
    pos = list(cand.indices).index(11)
    assert cand.collision_counts[pos] == 25
    assert cand.probs[pos] == pytest.approx(1.0)


def test_single_table_membership_is_exact_bucket_match(rng):
    for seed in range(10):
        keys = rng.standard_normal((60, 4))
        index = build_index(keys, LshConfig(K=3, L=1, min_collisions=1, seed=seed))
        q = rng.standard_normal(4)
        cand = query_candidates(index, q)
        assert [(int(i), int(c)) for i, c in zip(cand.indices, cand.collision_counts)] == brute_candidates(index, q)


def test_two_table_rule_matches_brute_force(rng):
    for seed in range(100):
        n, d = int(rng.integers(1, 80)), int(rng.integers(1, 9))
        cfg = LshConfig(K=int(rng.integers(1, 6)), L=int(rng.integers(2, 20)), seed=seed)
        index = build_index(rng.standard_normal((n, d)), cfg)
        q = rng.standard_normal(d)
        cand = query_candidates(index, q)
        assert [(int(i), int(c)) for i, c in zip(cand.indices, cand.collision_counts)] == brute_candidates(index, q)
        assert np.all(np.diff(cand.indices) > 0)
        assert np.all((cand.probs > 0) & (cand.probs <= 1))


def test_query_probs_use_centered_keys():
    keys = np.array([[5.0, 1.0], [5.0, -1.0]])
    index = build_index(keys, LshConfig(K=1, L=2, min_collisions=1, seed=0))
    q = np.array([0.0, 1.0])
    cand = query_candidates(index, q)
    for i, u in zip(cand.indices, cand.probs):
        p = collision_prob(q, index.centered_keys[i]).p
        assert u == pytest.approx(sampling_prob(p, 1, 2, 1))


def test_orthogonal_key_inclusion_rate():
    # Centered keys are +-e2, orthogonal to q = e1, so p = 0.5 exactly.
    keys = np.array([[0.0, 1.0, 0.0, 0.0], [0.0, -1.0, 0.0, 0.0]])
    q = np.array([1.0, 0.0, 0.0, 0.0])
    u = sampling_prob(0.5, 10, 150)
    hits = sum(0 in query_candidates(build_index(keys, LshConfig(10, 150, seed=s)), q).indices
               for s in range(1000))
    assert abs(hits - 1000 * u) <= 3 * np.sqrt(1000 * u * (1 - u))


def test_collision_prob_cases():
    q = np.array([1.0, 2.0])
    assert collision_prob(q, 3 * q) == (1.0, False)
    assert collision_prob(q, -q) == (0.0, False)
    assert collision_prob(q, np.array([-2.0, 1.0])).p == pytest.approx(0.5)
    assert collision_prob(q, np.zeros(2)) == (0.5, True)
    # Nearly parallel vectors whose cosine rounds above 1.
    assert collision_prob(np.array([1e-8, 1.0]), np.array([1e-8, 1.0 + 1e-16])).p == pytest.approx(1.0)


def test_simhash_law():
    gen = np.random.default_rng(123)
    m = 100_000
    proj = gen.standard_normal((2, m))
    for theta in (np.pi / 6, np.pi / 3, np.pi / 2, 2 * np.pi / 3):
        x, y = np.array([1.0, 0.0]), np.array([np.cos(theta), np.sin(theta)])
        freq = np.mean((x @ proj >= 0) == (y @ proj >= 0))
        p = 1 - theta / np.pi
        assert abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / m)


def test_sampling_prob_examples():
    assert sampling_prob(1.0, 10, 150) == 1.0
    assert sampling_prob(1.0, 3, 2) == 1.0
    assert sampling_prob(0.0, 10, 150) == 0.0
    assert sampling_prob(0.5, 1, 2) == pytest.approx(0.25, abs=1e-15)
    assert sampling_prob(0.5, 4, 10, min_collisions=1) == pytest.approx(1 - (1 - 0.5**4) ** 10)
    with pytest.raises(ArgumentError):
        sampling_prob(0.5, 10, 1)


@settings(max_examples=200, deadline=None)
@given(p=st.floats(0, 1), K=st.integers(1, 16), L=st.integers(2, 400))
def test_sampling_prob_matches_closed_form(p, K, L):
    s = mp.mpf(p) ** K
    mp.mp.dps = 60 + 3 * int(-mp.log10(s)) if 0 < s < 1 else 60
    s = mp.mpf(p) ** K
    exact = 1 - (1 - s) ** L - L * s * (1 - s) ** (L - 1)
    assert sampling_prob(p, K, L) == pytest.approx(float(exact), rel=1e-9, abs=1e-300)


def test_sampling_prob_monotone_on_grid():
    ps = np.linspace(0, 1, 41)
    Ks = range(1, 17)
    Ls = range(2, 302, 25)
    grid = np.array([[[sampling_prob(p, K, L) for p in ps] for L in Ls] for K in Ks])
    assert np.all(np.diff(grid, axis=2) >= -1e-15)  # p
    assert np.all(np.diff(grid, axis=1) >= -1e-15)  # L
    assert np.all(np.diff(grid, axis=0) <= 1e-15)  # K


def test_expected_budget_values():
    mp.mp.dps = 50
    s = mp.mpf(1) / 1024
    exact = 1 - (1 - s) ** 150 - 150 * s * (1 - s) ** 149
    assert expected_budget(10, 150) == pytest.approx(float(exact), rel=1e-12)
    assert expected_budget(10, 150) == pytest.approx(0.0097, abs=1e-4)
    assert expected_budget(1, 2) == pytest.approx(0.25)
    assert expected_budget(32, 2) < 1e-15


def test_expected_budget_matches_fair_coin_simulation():
    gen = np.random.default_rng(8)
    K, L, trials = 3, 6, 100_000
    bits_q = gen.integers(0, 2, size=(trials, L, K))
    bits_k = gen.integers(0, 2, size=(trials, L, K))
    hits = np.all(bits_q == bits_k, axis=2).sum(axis=1)
    freq = np.mean(hits >= 2)
    u = expected_budget(K, L)
    assert abs(freq - u) <= 3 * np.sqrt(u * (1 - u) / trials)


def test_centering_leaves_attention_unchanged(rng):
    for _ in range(50):
        n, d = int(rng.integers(1, 60)), int(rng.integers(1, 8))
        keys = rng.standard_normal((n, d)) + rng.standard_normal(d) * 3
        w = AttentionWorkload(rng.standard_normal(d), keys, rng.standard_normal((n, d)))
        centered = AttentionWorkload(w.q, center_keys(keys)[0], w.values)
        ref = full_attention(w).output
        assert relative_error(full_attention(centered).output, ref) <= 1e-6


def test_config_validation():
    with pytest.raises(ArgumentError):
        LshConfig(K=33)
    with pytest.raises(ArgumentError):
        LshConfig(L=1, min_collisions=2)
    with pytest.raises(ArgumentError):
        LshConfig(min_collisions=0)
    LshConfig(K=32, L=1, min_collisions=1)


class TestSerialization:
    def test_round_trip(self, rng):
        keys = rng.standard_normal((50, 6))
        index = build_index(keys, LshConfig(K=5, L=7, seed=2**63 + 5))
        blob = save_index(index)
        assert blob[:4] == b"MPLI"
        assert struct.unpack_from("<HIIHHQ", blob, 4) == (1, 50, 6, 5, 7, 2**63 + 5)
        loaded = load_index(blob, keys)
        assert loaded.tables == index.tables
        assert save_index(loaded) == blob
        q = rng.standard_normal(6)
        a, b = query_candidates(index, q), query_candidates(loaded, q)
        np.testing.assert_array_equal(a.indices, b.indices)

    def test_token_ids_survive(self, rng):
        keys = rng.standard_normal((5, 3))
        ids = np.array([4, 9, 10, 30, 31])
        index = build_index(keys, LshConfig(K=2, L=3, seed=1), token_ids=ids)
        loaded = load_index(save_index(index), keys)
        np.testing.assert_array_equal(loaded.token_ids, ids)

    def test_layout_is_explicit(self):
        index = build_index([[1.0, 0.0]], LshConfig(K=1, L=2, seed=0))
        blob = save_index(index)
        body = blob[26:]
        # Each table: one bucket holding token 0.
        code0 = int(index.codes[0, 0])
        code1 = int(index.codes[0, 1])
        assert body == struct.pack("<IIII", 1, code0, 1, 0) + struct.pack("<IIII", 1, code1, 1, 0)

    @pytest.mark.parametrize("cut", [3, 10, 26, 30])
    def test_truncation_reports_offset(self, rng, cut):
        keys = rng.standard_normal((6, 2))
        blob = save_index(build_index(keys, LshConfig(K=2, L=3, seed=0)))
        with pytest.raises(FormatError) as err:
            load_index(blob[:cut], keys)
        assert err.value.offset is not None

    def test_bad_magic_and_version(self, rng):
        keys = rng.standard_normal((6, 2))
        blob = save_index(build_index(keys, LshConfig(K=2, L=3, seed=0)))
        with pytest.raises(FormatError, match="magic"):
            load_index(b"XXXX" + blob[4:], keys)
        with pytest.raises(FormatError, match="version"):
            load_index(blob[:4] + struct.pack("<H", 9) + blob[6:], keys)

    def test_mismatched_keys_detected(self, rng):
        keys = rng.standard_normal((20, 3))
        blob = save_index(build_index(keys, LshConfig(K=4, L=5, seed=0)))
        with pytest.raises(FormatError, match="does not match"):
            load_index(blob, rng.standard_normal((20, 3)))
