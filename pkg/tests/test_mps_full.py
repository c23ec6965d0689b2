import numpy as np
import pytest

from blockmps import mps_full as mf
from blockmps._validation import ValidationError


def _rand(rng, K, r=3):
    return mf.random_mps([2] * K, [r] * (K - 1), rng)


def test_evaluate_rank_one_is_kronecker(rng):
    vs = [rng.standard_normal(2) for _ in range(4)]
    x = mf.FullMPS([v.reshape(1, 2, 1) for v in vs])
    expected = vs[0]
    for v in vs[1:]:
        expected = np.kron(expected, v)
    assert np.allclose(mf.evaluate(x), expected)


def test_constructor_rejects_rank_mismatch():
    with pytest.raises(ValidationError):
        mf.FullMPS([np.zeros((1, 2, 2)), np.zeros((3, 2, 1))])


@pytest.mark.parametrize("side", ["left", "right"])
def test_orthogonalize_preserves_tensor(rng, side):
    x = _rand(rng, 6)
    y = mf.orthogonalize(x, side)
    assert np.allclose(mf.evaluate(x), mf.evaluate(y))
    cores = y.cores[:-1] if side == "left" else y.cores[1:]
    for c in cores:
        m = c.reshape(-1, c.shape[2]) if side == "left" else c.reshape(c.shape[0], -1).T
        assert np.allclose(m.T @ m, np.eye(m.shape[1]))


def test_inner_and_norm_match_dense(rng):
    x, y = _rand(rng, 5), _rand(rng, 5, 2)
    assert np.isclose(mf.inner(x, y), mf.evaluate(x) @ mf.evaluate(y))
    assert np.isclose(mf.norm(x), np.linalg.norm(mf.evaluate(x)))


@pytest.mark.parametrize("K", [2, 4, 6])
def test_tt_svd_spectra_match_matricizations(rng, K):
    x = _rand(rng, K)
    dense = mf.evaluate(x)
    form, spec = mf.tt_svd(x)
    assert np.allclose(mf.evaluate(form), dense)
    for k in range(1, K):
        sv = np.linalg.svd(dense.reshape(2**k, -1), compute_uv=False)
        s = spec[k]
        assert np.allclose(s, sv[: len(s)], atol=1e-10)


@pytest.mark.parametrize("eps_frac", [0.01, 0.1, 0.5])
def test_truncation_error_bounded_by_discarded(rng, eps_frac):
    x = _rand(rng, 6, 4)
    form, spec = mf.tt_svd(x)
    eps = eps_frac * mf.norm(x)
    y = mf.truncate(form, spec, eps=eps)
    drop = mf.select_discarded(spec, eps)
    bound = np.sqrt(sum(np.sum(s[len(s) - d :] ** 2) for s, d in zip(spec.values, drop) if d))
    err = np.linalg.norm(mf.evaluate(y) - mf.evaluate(x))
    assert err <= bound * (1 + 1e-10) + 1e-14
    assert bound <= eps


def test_truncate_to_zero_raises(rng):
    x = _rand(rng, 4)
    form, spec = mf.tt_svd(x)
    with pytest.raises(mf.TruncationError):
        mf.truncate(form, spec, eps=2 * mf.norm(x))


def test_from_dense_round_trip(rng):
    v = rng.standard_normal(32)
    x = mf.from_dense(v, [2] * 5)
    assert np.allclose(mf.evaluate(x), v)


def test_add_and_scale(rng):
    x, y = _rand(rng, 4), _rand(rng, 4, 2)
    z = mf.add(x, mf.scale(y, -2.0))
    assert np.allclose(mf.evaluate(z), mf.evaluate(x) - 2 * mf.evaluate(y))


def test_mode_core_product_matches_dense(rng):
    K = 4
    m = mf.FullMPO([rng.standard_normal((1 if k == 0 else 2, 2, 2, 1 if k == K - 1 else 2)) for k in range(K)])
    x = _rand(rng, K, 2)
    y = mf.FullMPS([mf.mode_core_product(a, b) for a, b in zip(m.cores, x.cores)])
    assert np.allclose(mf.evaluate(y), mf.evaluate_mpo(m) @ mf.evaluate(x))


def test_strong_kronecker_chains_cores(rng):
    a, b = rng.standard_normal((1, 2, 3)), rng.standard_normal((3, 2, 1))
    chained = mf.strong_kronecker(a, b)
    assert np.allclose(chained.reshape(-1), mf.evaluate(mf.FullMPS([a, b])))
