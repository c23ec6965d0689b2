import itertools

import numpy as np
import pytest

from blockmps import dense_oracle as do
from blockmps._validation import SectorError, ValidationError


@pytest.mark.parametrize("K", [1, 2, 3, 4, 5])
def test_canonical_anticommutation(K):
    a = [do.build_annihilation(i, K) for i in range(1, K + 1)]
    eye = np.eye(2**K)
    for i, j in itertools.product(range(K), repeat=2):
        assert np.allclose(a[i] @ a[j].T + a[j].T @ a[i], (i == j) * eye)
        assert np.allclose(a[i] @ a[j] + a[j] @ a[i], 0)


def test_particle_number_is_sum_of_number_operators():
    K = 4
    P = sum(do.build_creation(i, K) @ do.build_annihilation(i, K) for i in range(1, K + 1))
    assert np.allclose(P, do.build_particle_number(K))


@pytest.mark.parametrize("K,k", [(3, 1), (4, 2), (5, 4), (4, 4)])
def test_truncated_pn_splits_total(K, k):
    left = do.build_truncated_pn(K, k, "left")
    right = do.build_truncated_pn(K, k, "right")
    total = np.kron(left, np.eye(right.shape[0])) + np.kron(np.eye(left.shape[0]), right)
    assert np.allclose(total, do.build_particle_number(K))


def test_laplace_like_with_number_diagonals_is_pn():
    assert np.allclose(do.build_laplace_like([[0, 1]] * 3), do.build_particle_number(3))


def test_unit_vector_ordering_first_mode_slowest():
    e = do.unit_vector(3, [1])
    assert np.flatnonzero(e).tolist() == [4]


def test_creation_on_vacuum_gives_unit_vector():
    K = 4
    vac = do.unit_vector(K, [])
    ordered = do.build_creation(1, K) @ do.build_creation(3, K) @ vac
    swapped = do.build_creation(3, K) @ do.build_creation(1, K) @ vac
    assert np.allclose(ordered, do.unit_vector(K, [1, 3]))
    assert np.allclose(swapped, -ordered)


def test_hamiltonian_preserves_particle_number(rng):
    K = 4
    T = rng.standard_normal((K, K))
    T = T + T.T
    V = rng.standard_normal((K,) * 4)
    H = do.brute_force_hamiltonian(T, V)
    do.check_number_preserving(H, K)


def test_grouped_two_body_matches_raw(rng):
    K = 4
    V = rng.standard_normal((K,) * 4)
    raw = do.brute_force_hamiltonian(np.zeros((K, K)), V)
    grouped = do.brute_force_two_body(do.antisymmetrize_two_body(V))
    assert np.allclose(raw, grouped)


def test_check_number_preserving_rejects_creation():
    with pytest.raises(SectorError):
        do.check_number_preserving(do.build_creation(1, 3), 3)


def test_sector_diagonalize_of_pn():
    K, N = 4, 2
    vals, vecs = do.sector_diagonalize(do.build_particle_number(K), K, N)
    assert np.allclose(vals, N)
    assert vecs.shape == (2**K, 6)


@pytest.mark.parametrize("K", [2, 3, 4])
def test_decomposition_round_trip(K, rng):
    T = rng.standard_normal((K, K))
    T = T + T.T
    V = rng.standard_normal((K,) * 4)
    H = do.brute_force_hamiltonian(T, V if K > 1 else None)
    terms = do.decompose_pn_operator(H, K)
    assert np.abs(do.reassemble(terms, K) - H).max() <= 1e-10 * np.abs(H).max()


def test_decomposition_of_identity_is_single_term():
    terms = do.decompose_pn_operator(np.eye(8), 3)
    assert [(t.creators, t.annihilators, t.coefficient) for t in terms] == [((), (), 1.0)]


def test_rank_one_term_validates_ordering():
    with pytest.raises(ValidationError):
        do.RankOneTerm((2, 1), (1, 2), 1.0)


def test_tangent_projector_is_projector_containing_x(rng):
    K = 4
    x = rng.standard_normal(2**K)
    # keep x low rank so the projector is not the identity
    x = np.kron(rng.standard_normal(4), rng.standard_normal(4))
    Q = do.tangent_projector(x, K)
    assert np.allclose(Q @ Q, Q, atol=1e-10)
    assert np.allclose(Q, Q.T, atol=1e-10)
    assert np.allclose(Q @ x, x)


def test_two_site_projector_contains_x(rng):
    K = 5
    x = rng.standard_normal(2**K)
    for k in range(1, K):
        Pk = do.two_site_projector(x, K, k)
        assert np.allclose(Pk @ x, x)
