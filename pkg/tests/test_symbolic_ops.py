import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockmps import block_mps as bm
from blockmps import dense_oracle as do
from blockmps import mps_full as mf
from blockmps import operator_mpo as om
from blockmps import symbolic_ops as so
from blockmps._validation import ValidationError


def _grid(m: so.SymMPO):
    out = []
    for core in m.cores:
        rows = []
        for a in range(core.rows):
            row = []
            for b in range(core.cols):
                entry = core.entries.get((a, b), {})
                row.append("Z" if not entry else "+".join(sorted(s.name for s in entry)))
            rows.append(row)
        out.append(rows)
    return out


def _dense(m):
    return mf.evaluate_mpo(so.sym_to_mpo(m))


def test_single_term_programs_use_named_symbols():
    assert _grid(so.sym_rank_one([2], [2], 1.0, 5)) == [[["I_l"]], [["A*A"]], [["I_r"]], [["I_r"]], [["I_r"]]]
    assert _grid(so.sym_rank_one([2], [4], 1.0, 5)) == [[["I_l"]], [["A_l*"]], [["S+"]], [["A_r"]], [["I_r"]]]
    assert _grid(so.sym_rank_one([4], [2], 1.0, 5)) == [[["I_l"]], [["A_l"]], [["S-"]], [["A_r*"]], [["I_r"]]]


def test_sum_then_compress_reduces_example():
    terms = [so.sym_rank_one([2], [2], 1.0, 5), so.sym_rank_one([2], [4], 1.0, 5), so.sym_rank_one([4], [2], 1.0, 5)]
    total = so.sym_sum(terms)
    assert total.ranks == [3, 3, 3, 3]
    packed = so.sym_compress(total)
    assert packed.ranks == [1, 3, 3, 1]
    assert _grid(packed) == [
        [["I_l"]],
        [["A*A", "A_l*", "A_l"]],
        [["I_r", "Z", "Z"], ["Z", "S+", "Z"], ["Z", "Z", "S-"]],
        [["I_r"], ["A_r"], ["A_r*"]],
        [["I_r"]],
    ]
    assert np.allclose(_dense(packed), _dense(total))


def test_symbol_flux_rules():
    with pytest.raises(ValidationError):
        so.Symbol("C", 0, 0)
    with pytest.raises(ValidationError):
        so.Symbol("I", 1, 1)
    with pytest.raises(ValidationError):
        so.Symbol("S", 0, 0)
    assert so.Symbol("S", 1, 1) == so.Symbol("S", 1, 1, "other-name")


def test_classify_signed_matrices():
    assert so.classify(-do.SIGN) == (-1.0, "S")
    assert so.classify(np.zeros((2, 2))) is None
    with pytest.raises(ValidationError):
        so.classify(np.ones((2, 2)))


@pytest.mark.parametrize("K", [2, 3, 4, 5])
def test_rank_one_matches_dense_oracle(K, rng):
    for p in range(0, min(2, K) + 1):
        cr = sorted(rng.choice(np.arange(1, K + 1), p, replace=False).tolist())
        an = sorted(rng.choice(np.arange(1, K + 1), p, replace=False).tolist())
        assert np.allclose(_dense(so.sym_rank_one(cr, an, 1.5, K)), 1.5 * do.rank_one_operator(cr, an, K))


@pytest.mark.parametrize("K", [4, 6])
def test_automaton_programs_match_dense(K, rng):
    T = om.random_one_body(K, rng)
    V = om.random_two_body(K, rng)
    assert np.abs(_dense(so.sym_from_onebody(T)) - do.brute_force_hamiltonian(T.T)).max() < 1e-12
    ref = do.brute_force_hamiltonian(np.zeros((K, K)), V.V)
    assert np.abs(_dense(so.sym_from_twobody(V)) - ref).max() < 1e-12 * np.abs(ref).max()


def test_symbolic_compression_profiles(rng):
    assert so.sym_compress(so.sym_from_onebody(om.random_one_body(8, rng))).ranks == [4, 6, 8, 10, 8, 6, 4]
    assert so.sym_compress(so.sym_from_twobody(om.random_two_body(8, rng))).ranks == [4, 16, 33, 46, 33, 16, 4]


programs = st.integers(2, 6).flatmap(
    lambda K: st.tuples(st.just(K), st.integers(0, K), st.integers(1, 2), st.integers(0, 2**31 - 1))
)


@settings(max_examples=60, deadline=None)
@given(programs)
def test_apply_matches_dense_and_flux_sizes(case):
    K, N, size, seed = case
    rng = np.random.default_rng(seed)
    x = bm.random_block_mps(K, N, size, rng)
    progs = []
    for _ in range(int(rng.integers(1, 4))):
        p = int(rng.integers(0, min(2, K) + 1))
        cr = rng.choice(np.arange(1, K + 1), p, replace=False)
        an = rng.choice(np.arange(1, K + 1), p, replace=False)
        progs.append(so.sym_rank_one(cr, an, float(rng.standard_normal()), K))
    m = so.sym_sum(progs)
    y = so.apply_sym(m, x)
    ref = _dense(m) @ bm.evaluate(x)
    assert np.abs(bm.evaluate(y) - ref).max() <= 1e-10 * max(1.0, np.abs(ref).max())
    assert y.rho == so.output_sizes(m, x)
    y2 = so.apply_sym(so.sym_compress(m), x)
    assert np.abs(bm.evaluate(y2) - ref).max() <= 1e-10 * max(1.0, np.abs(ref).max())


def test_output_sizes_flux_formula(rng):
    K, N = 6, 3
    x = bm.random_block_mps(K, N, 2, rng)
    m = so.sym_from_onebody(om.random_one_body(K, rng))
    sizes = so.output_sizes(m, x)
    for k in range(K + 1):
        for n in bm.sector_range(K, N, k):
            expected = sum(x.rho[k].get(n - f, 0) for f in m.fluxes[k])
            assert sizes[k][n] == expected


def test_particle_number_program_scales_state(rng):
    K, N = 6, 3
    x = bm.random_block_mps(K, N, 2, rng)
    P = so.sym_compress(so.sym_sum([so.sym_rank_one([i], [i], 1.0, K) for i in range(1, K + 1)]))
    assert P.ranks == [2] * (K - 1)
    assert np.allclose(bm.evaluate(so.apply_sym(P, x)), N * bm.evaluate(x))


def test_string_must_conserve_particles():
    with pytest.raises(ValidationError):
        so.sym_string([("C", 1)], 1.0, 3)


def test_dump_lists_every_core():
    text = so.dump(so.sym_rank_one([1], [2], 1.0, 3))
    assert text.count("core ") == 3
