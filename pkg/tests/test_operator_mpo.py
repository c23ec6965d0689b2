import numpy as np
import pytest

from blockmps import dense_oracle as do
from blockmps import mps_full as mf
from blockmps import operator_mpo as om
from blockmps._validation import ValidationError


def _rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


@pytest.mark.parametrize("K", [4, 6])
def test_one_body_mpo_matches_dense(K, rng):
    T = om.random_one_body(K, rng)
    assert _rel(mf.evaluate_mpo(om.build_S(T)), do.brute_force_hamiltonian(T.T)) <= 1e-12


@pytest.mark.parametrize("K", [4, 6])
def test_two_body_mpo_matches_dense(K, rng):
    V = om.random_two_body(K, rng)
    ref = do.brute_force_hamiltonian(np.zeros((K, K)), V.V)
    assert _rel(mf.evaluate_mpo(om.build_D(V)), ref) <= 1e-12


def test_number_like_mpo(rng):
    lam = rng.standard_normal(5)
    F = om.build_F(lam)
    assert F.ranks == [2, 2, 2, 2]
    assert np.allclose(mf.evaluate_mpo(F), do.brute_force_hamiltonian(np.diag(lam)))


@pytest.mark.parametrize(
    "K,profile",
    [(8, [4, 6, 8, 10, 8, 6, 4])],
)
def test_one_body_profile_small(K, profile, rng):
    assert om.build_S(om.random_one_body(K, rng)).ranks == profile


def test_two_body_profile_small(rng):
    D = om.build_D(om.random_two_body(8, rng))
    assert D.ranks == [4, 24, 33, 46, 33, 24, 4]
    assert om.mpo_compress(D).ranks == [4, 16, 33, 46, 33, 16, 4]


def test_compression_preserves_operator():
    K = 6
    raw = om.mpo_add(om.build_S(om.random_one_body(K, 3)), om.build_D(om.random_two_body(K, 4)))
    packed = om.mpo_compress(raw)
    assert _rel(mf.evaluate_mpo(packed), mf.evaluate_mpo(raw)) <= 1e-12
    assert all(a <= b for a, b in zip(packed.ranks, raw.ranks))


def test_zero_operator_compresses_to_rank_one():
    assert om.mpo_compress(om.build_D(np.zeros((6,) * 4))).ranks == [1] * 5


@pytest.mark.parametrize("d", [1, 2, 3])
def test_banded_bound(d, rng):
    c = om.mpo_compress(om.build_S(om.random_one_body(16, rng, bandwidth=d)))
    assert max(c.ranks) <= 2 * d + 2


def test_bandwidth_violation_rejected():
    T = np.ones((6, 6))
    with pytest.raises(ValidationError):
        om.OneBodyCoeffs(T, bandwidth=1)


def test_locality_mask_counts():
    mask = om.locality_mask(4, 0)
    assert mask.sum() == 4


def test_odd_order_rejected(rng):
    with pytest.raises(ValidationError):
        om.build_S(om.random_one_body(5, rng))


def test_hopping_chain_spectrum():
    T = om.hopping_chain(6).T
    assert np.allclose(np.sort(np.linalg.eigvalsh(T)), np.sort(-2 * np.cos(np.pi * np.arange(1, 7) / 7)))


def test_channel_flux_labels():
    created = ("m", ((0, 0),))
    assert om.channel_flux(om.ONE_BODY, created, True) == 1
    assert om.channel_flux(om.ONE_BODY, created, False) == -1
    assert om.channel_flux(om.ONE_BODY, ("e", 1, 4), True) == 1
    assert om.channel_flux(om.TWO_BODY, ("d",), True) == 0


def test_automaton_centre_coupling_shape():
    auto = om.channel_automaton(om.ONE_BODY, 6, lambda idx: 1.0)
    assert auto.coupling.shape == (len(auto.left[3]), len(auto.right[3]))


def test_apply_mpo_matches_dense(rng):
    K = 6
    m = om.build_S(om.random_one_body(K, rng))
    x = mf.random_mps([2] * K, [2] * (K - 1), rng)
    y = om.apply_mpo(m, x)
    assert np.allclose(mf.evaluate(y), mf.evaluate_mpo(m) @ mf.evaluate(x))
    assert y.ranks == [a * b for a, b in zip(m.ranks, x.ranks)]
