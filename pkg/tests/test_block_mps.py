from math import comb

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from blockmps import block_mps as bm
from blockmps import dense_oracle as do
from blockmps import mps_full as mf
from blockmps._validation import SectorError, ValidationError

cases = st.integers(1, 6).flatmap(
    lambda K: st.tuples(
        st.just(K),
        st.integers(0, K),
        st.sampled_from([1, 2, 3, "max"]),
        st.integers(0, 2**31 - 1),
    )
)


def _close(a, b, scale, tol=1e-10):
    return np.abs(np.asarray(a) - np.asarray(b)).max(initial=0.0) <= tol * max(scale, 1e-300)


def test_sector_range_examples():
    assert list(bm.sector_range(5, 2, 0)) == [0]
    assert list(bm.sector_range(5, 2, 2)) == [0, 1, 2]
    assert list(bm.sector_range(5, 2, 4)) == [1, 2]


def test_sector_cap_example():
    assert bm.sector_cap(4, 2, 2, 1) == min(comb(2, 1), comb(2, 1)) == 2
    assert bm.sector_cap(4, 2, 2, 3) == 0


def test_constant_size_ranks():
    assert bm.random_block_mps(5, 2, 1, 0).ranks == [2, 3, 3, 2]


def test_max_size_rule():
    assert bm.random_block_mps(4, 2, "max", 0).rho[2][1] == 2


def test_paper_rounding_tensor_rank_at_most_seven():
    x = bm.random_block_mps(20, 6, 1, 0)
    assert max(x.ranks) <= 7


def test_explicit_table_over_cap_rejected():
    rho = bm.size_table(4, 2, "max")
    rho[2][1] = 3
    with pytest.raises(ValidationError):
        bm.size_table(4, 2, rho)


def test_constructor_rejects_wrong_block_shape():
    x = bm.random_block_mps(4, 2, 1, 0)
    x.cores[1].unocc[0] = np.zeros((3, 3))
    with pytest.raises(ValidationError):
        bm.BlockMPS(x.K, x.N, x.rho, x.cores)


def test_unit_determinant_evaluates_to_basis_vector():
    x = bm.unit_determinant(5, [2, 4])
    assert np.allclose(bm.evaluate(x), do.unit_vector(5, [2, 4]))


@settings(max_examples=60, deadline=None)
@given(cases)
def test_state_lies_in_sector(case):
    K, N, size, seed = case
    x = bm.random_block_mps(K, N, size, seed)
    v = bm.evaluate(x)
    assert np.allclose(v[do.occupation_counts(K) != N], 0)
    assert abs(bm.particle_expectation(x) - N) <= 1e-12
    for k in range(K + 1):
        assert bm.verify_block_eigen(x, k)


@settings(max_examples=60, deadline=None)
@given(cases)
def test_inner_and_add(case):
    K, N, size, seed = case
    x = bm.random_block_mps(K, N, size, seed)
    y = bm.random_block_mps(K, N, size, seed + 1)
    vx, vy = bm.evaluate(x), bm.evaluate(y)
    assert abs(bm.inner(x, y) - vx @ vy) <= 1e-10 * np.linalg.norm(vx) * np.linalg.norm(vy)
    assert _close(bm.evaluate(bm.add(x, y)), vx + vy, np.abs(vx).max() + np.abs(vy).max())
    assert _close(bm.evaluate(bm.scale(x, -3.0)), -3 * vx, np.abs(vx).max())


@pytest.mark.parametrize("side", ["left", "right"])
def test_orthogonalize_block_gram(rng, side):
    x = bm.random_block_mps(6, 3, 2, rng)
    y = bm.orthogonalize_block(x, side)
    assert _close(bm.evaluate(y), bm.evaluate(x), np.abs(bm.evaluate(x)).max())
    full = bm.to_full(y)
    cores = full.cores[:-1] if side == "left" else full.cores[1:]
    for c in cores:
        m = c.reshape(-1, c.shape[2]) if side == "left" else c.reshape(c.shape[0], -1).T
        assert np.allclose(m.T @ m, np.eye(m.shape[1]), atol=1e-12)
    bm.check_sector_caps(bm.minimal_ranks(y))


def test_orthogonalizing_twice_is_stable(rng):
    x = bm.orthogonalize_block(bm.random_block_mps(6, 3, 2, rng), "right")
    y = bm.orthogonalize_block(x, "right")
    assert np.abs(bm.evaluate(x) - bm.evaluate(y)).max() < 1e-13


def test_norm_equals_first_core_after_right_orth(rng):
    y = bm.orthogonalize_block(bm.random_block_mps(6, 3, 2, rng), "right")
    first = np.sqrt(sum(np.sum(b**2) for occ in (0, 1) for b in y.cores[0].blocks(occ).values()))
    assert np.isclose(first, bm.norm(y))


@settings(max_examples=60, deadline=None)
@given(cases)
def test_block_tt_svd_matches_full_spectrum(case):
    K, N, size, seed = case
    x = bm.random_block_mps(K, N, size, seed)
    v = bm.evaluate(x)
    scale = np.linalg.norm(v)
    form, spec = bm.tt_svd_block(bm.orthogonalize_block(x, "left"))
    assert _close(bm.evaluate(form), v, scale)
    bm.check_sector_caps(form)
    for k in range(1, K):
        ours = spec.bond(k)
        ref = np.linalg.svd(do.matricize(v, K, k), compute_uv=False)
        ref = ref[ref > 1e-12 * scale]
        ours = ours[ours > 1e-12 * scale]
        assert len(ours) == len(ref)
        assert _close(ours, ref, scale)


def test_rank_one_spectrum_consistent_with_norm():
    x = bm.unit_determinant(5, [1, 3])
    x = bm.scale(x, 2.5)
    _, spec = bm.tt_svd_block(bm.orthogonalize_block(x, "left"))
    for k in range(1, 5):
        assert np.allclose(spec.bond(k), [2.5])


@settings(max_examples=60, deadline=None)
@given(cases, st.floats(0.0, 0.9))
def test_truncation_error_and_particle_number(case, frac):
    K, N, size, seed = case
    if K < 2:
        return
    x = bm.random_block_mps(K, N, size, seed)
    v = bm.evaluate(x)
    form, spec = bm.tt_svd_block(bm.orthogonalize_block(x, "left"))
    eps = frac * spec.norm()
    y = bm.truncate_block(form, spec, eps=eps)
    drop = bm.select_block_discards(spec, eps)
    discarded = sum(float(np.sum(spec.values[key][len(spec.values[key]) - d :] ** 2)) for key, d in drop.items() if d)
    err = np.linalg.norm(bm.evaluate(y) - v)
    assert err <= np.sqrt(discarded) * (1 + 1e-10) + 1e-13 * np.linalg.norm(v)
    assert np.sqrt(discarded) <= eps + 1e-15
    assert abs(bm.particle_expectation(y) - N) <= 1e-12
    bm.check_sector_caps(y)


def test_truncate_eps_zero_is_identity(rng):
    x = bm.random_block_mps(5, 2, 2, rng)
    form, spec = bm.tt_svd_block(bm.orthogonalize_block(x, "left"))
    assert np.allclose(bm.evaluate(bm.truncate_block(form, spec, eps=0.0)), bm.evaluate(x))


def test_truncate_to_zero_raises(rng):
    x = bm.random_block_mps(5, 2, 2, rng)
    form, spec = bm.tt_svd_block(bm.orthogonalize_block(x, "left"))
    with pytest.raises(mf.TruncationError):
        bm.truncate_block(form, spec, eps=2 * bm.norm(x))


def test_truncate_needs_svd_form(rng):
    x = bm.random_block_mps(5, 2, 2, rng)
    _, spec = bm.tt_svd_block(bm.orthogonalize_block(x, "left"))
    with pytest.raises(ValidationError):
        bm.truncate_block(x, spec, eps=0.1)


@settings(max_examples=40, deadline=None)
@given(cases)
def test_from_full_round_trip(case):
    K, N, size, seed = case
    x = bm.random_block_mps(K, N, size, seed)
    v = bm.evaluate(x)
    y = bm.from_full(bm.to_full(x), N)
    assert _close(bm.evaluate(y), v, np.linalg.norm(v))
    bm.check_sector_caps(y)


def test_from_full_gauge_scrambled(rng):
    x = bm.random_block_mps(6, 3, 2, rng)
    cores = bm.to_full(x).cores
    for k in range(5):
        q, _ = np.linalg.qr(rng.standard_normal((cores[k].shape[2],) * 2))
        cores[k] = np.einsum("iaj,jk->iak", cores[k], q)
        cores[k + 1] = np.einsum("ji,jak->iak", q, cores[k + 1])
    y = bm.from_full(mf.FullMPS(cores), 3)
    assert _close(bm.evaluate(y), bm.evaluate(x), np.linalg.norm(bm.evaluate(x)))


def test_from_full_rejects_mixed_particle_number(rng):
    v = bm.evaluate(bm.random_block_mps(4, 1, 1, rng)) + bm.evaluate(bm.random_block_mps(4, 2, 1, rng))
    with pytest.raises(SectorError):
        bm.from_full(mf.from_dense(v, [2] * 4), 2)


def test_w_state_ranks():
    w = do.unit_vector(3, [1]) + do.unit_vector(3, [2]) + do.unit_vector(3, [3])
    y = bm.from_full(mf.from_dense(w, [2, 2, 2]), 1)
    assert y.ranks == [2, 2]


def test_round_block_respects_sector_caps(rng):
    x = bm.random_block_mps(6, 3, "max", rng)
    y = bm.round_block(x, sector_ranks={key: 1 for key in [(3, 1), (3, 2)]})
    assert y.rho[3][1] <= 1 and y.rho[3][2] <= 1
