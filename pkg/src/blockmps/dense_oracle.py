"""Brute-force Fock-space reference implementation.

Every operator here is an explicit ``2**K x 2**K`` array and every state a
flat vector of length ``2**K``.  Basis index ``alpha = (alpha_1, ..., alpha_K)``
is row-major with ``alpha_1`` slowest, i.e. the order produced by
``np.kron(x_1, np.kron(x_2, ...))``.  Orbital indices in the public API are
1-based.  Intended for desk-scale checks (``K <= 10``).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import reduce

import numpy as np

from ._validation import (
    SectorError,
    ValidationError,
    as_symmetric,
    as_two_body,
    check_order,
    check_orbital,
    check_particle_count,
)

IDENTITY = np.eye(2)
SIGN = np.diag([1.0, -1.0])
ANNIHILATE = np.array([[0.0, 1.0], [0.0, 0.0]])
CREATE = ANNIHILATE.T.copy()
NUMBER = CREATE @ ANNIHILATE

PN_TOLERANCE = 1e-10


@dataclass(frozen=True)
class RankOneTerm:
    """Coefficient times ``a*_{creators} a_{annihilators}``."""

    creators: tuple[int, ...]
    annihilators: tuple[int, ...]
    coefficient: float

    def __post_init__(self):
        if len(self.creators) != len(self.annihilators):
            raise ValidationError("creator and annihilator sets must have equal size")
        for idx in (self.creators, self.annihilators):
            if any(b <= a for a, b in zip(idx, idx[1:])):
                raise ValidationError(f"index list {idx} must be strictly increasing")


def kron_all(factors) -> np.ndarray:
    return reduce(np.kron, factors, np.ones((1, 1)))


def build_annihilation(i: int, K: int) -> np.ndarray:
    check_order(K)
    check_orbital(i, K)
    return kron_all([SIGN] * (i - 1) + [ANNIHILATE] + [IDENTITY] * (K - i))


def build_creation(i: int, K: int) -> np.ndarray:
    return build_annihilation(i, K).T.copy()


def build_particle_number(K: int) -> np.ndarray:
    check_order(K)
    return np.diag(occupation_counts(K).astype(float))


def build_truncated_pn(K: int, k: int, side: str = "left") -> np.ndarray:
    """Particle number of modes ``1..k`` (left) or ``k+1..K`` (right).

    The left version acts on ``F^k`` and the right one on ``F^(K-k)``, so that
    ``kron(P_left, I) + kron(I, P_right) == P``.
    """
    check_order(K)
    if not 1 <= k <= K:
        raise ValidationError(f"split position k={k} out of range 1..{K}")
    if side == "left":
        return build_particle_number(k)
    if side == "right":
        if k == K:
            return np.zeros((1, 1))
        return build_particle_number(K - k)
    raise ValidationError(f"side must be 'left' or 'right', got {side!r}")


def occupation_counts(K: int) -> np.ndarray:
    """Hamming weight of every basis index in the fixed ordering."""
    counts = np.zeros(1, dtype=int)
    for _ in range(K):
        counts = (counts[:, None] + np.arange(2)[None, :]).ravel()
    return counts


def build_laplace_like(diagonals) -> np.ndarray:
    """Diagonal operator ``sum_k I x ... x L_k x ... x I`` with ``L_k = diag(diagonals[k])``."""
    diagonals = [np.asarray(d, dtype=float) for d in diagonals]
    if not diagonals:
        raise ValidationError("need at least one mode")
    total = np.zeros(1)
    for d in diagonals:
        if d.ndim != 1 or d.size == 0:
            raise ValidationError("each mode needs a non-empty 1-d list of eigenvalues")
        total = (total[:, None] + d[None, :]).ravel()
    return np.diag(total)


def _ladders(K: int):
    return [build_annihilation(i, K) for i in range(1, K + 1)]


def brute_force_hamiltonian(T, V=None) -> np.ndarray:
    """Dense ``sum t_ij a*_i a_j + sum v_ijkl a*_i a*_j a_k a_l``."""
    T = as_symmetric(T)
    K = T.shape[0]
    check_order(K)
    ann = _ladders(K)
    cre = [a.T for a in ann]
    H = np.zeros((2**K, 2**K))
    for i, j in zip(*np.nonzero(T)):
        H += T[i, j] * (cre[i] @ ann[j])
    if V is not None:
        V = as_two_body(V, K)
        for i, j, k, l in zip(*np.nonzero(V)):
            H += V[i, j, k, l] * (cre[i] @ cre[j] @ ann[k] @ ann[l])
    return H


def antisymmetrize_two_body(V) -> np.ndarray:
    """Grouped coefficients, nonzero only for ``i1 < i2`` and ``j1 < j2``."""
    V = np.asarray(V, dtype=float)
    grouped = V + V.transpose(1, 0, 3, 2) - V.transpose(1, 0, 2, 3) - V.transpose(0, 1, 3, 2)
    K = V.shape[0]
    upper = np.triu(np.ones((K, K), dtype=bool), 1)
    mask = upper[:, :, None, None] & upper[None, None, :, :]
    return np.where(mask, grouped, 0.0)


def brute_force_two_body(V_grouped) -> np.ndarray:
    """Dense ``sum_{i1<i2, j1<j2} w a*_{i1} a*_{i2} a_{j1} a_{j2}`` for grouped ``w``."""
    W = np.asarray(V_grouped, dtype=float)
    K = W.shape[0]
    ann = _ladders(K)
    cre = [a.T for a in ann]
    H = np.zeros((2**K, 2**K))
    for i1, i2, j1, j2 in zip(*np.nonzero(W)):
        H += W[i1, i2, j1, j2] * (cre[i1] @ cre[i2] @ ann[j1] @ ann[j2])
    return H


def sector_basis(K: int, N: int) -> list[tuple[int, ...]]:
    check_order(K)
    check_particle_count(N, K)
    return [alpha for alpha in itertools.product((0, 1), repeat=K) if sum(alpha) == N]


def sector_indices(K: int, N: int) -> np.ndarray:
    return np.flatnonzero(occupation_counts(K) == N)


def check_number_preserving(op: np.ndarray, K: int, tol: float = PN_TOLERANCE) -> None:
    counts = occupation_counts(K)
    off = counts[:, None] != counts[None, :]
    worst = np.abs(op[off]).max(initial=0.0)
    if worst > tol:
        raise SectorError(f"operator is not particle-number preserving (off-sector entry {worst:.3e})")


def sector_diagonalize(op: np.ndarray, K: int, N: int):
    """Eigenpairs of ``op`` restricted to the ``N``-particle sector, ascending."""
    check_particle_count(N, K)
    check_number_preserving(op, K)
    idx = sector_indices(K, N)
    block = op[np.ix_(idx, idx)]
    vals, vecs = np.linalg.eigh(0.5 * (block + block.T))
    full = np.zeros((2**K, vecs.shape[1]))
    full[idx] = vecs
    return vals, full


def unit_vector(K: int, occupied) -> np.ndarray:
    """Basis vector with the given 1-based orbitals occupied."""
    alpha = np.zeros(K, dtype=int)
    for i in occupied:
        alpha[check_orbital(i, K) - 1] = 1
    e = np.zeros(2**K)
    e[int("".join(map(str, alpha)), 2) if K else 0] = 1.0
    return e


def rank_one_operator(creators, annihilators, K: int) -> np.ndarray:
    """``a*_{D+} a_{D-}`` with ``a_D`` the increasing-index product of annihilators."""
    ann = _ladders(K)
    a_minus = np.eye(2**K)
    for i in annihilators:
        a_minus = a_minus @ ann[i - 1]
    a_plus = np.eye(2**K)
    for i in creators:
        a_plus = a_plus @ ann[i - 1]
    return a_plus.T @ a_minus


def decompose_pn_operator(op: np.ndarray, K: int, tol: float = PN_TOLERANCE) -> list[RankOneTerm]:
    """Inductive rank-one decomposition over the particle-number eigenspaces.

    Coefficients of level ``m`` are fixed by matching ``op`` on the ``m``-particle
    sector after the lower levels have been subtracted.  Signs are obtained by
    applying the explicit operator matrices, never from a parity formula.
    """
    check_order(K)
    if K > 5:
        raise ValidationError("decompose_pn_operator is limited to K <= 5")
    check_number_preserving(op, K, tol)
    terms: list[RankOneTerm] = []
    approx = np.zeros_like(op, dtype=float)
    orbitals = range(1, K + 1)
    for level in range(K + 1):
        residual = op - approx
        level_terms = []
        for plus in itertools.combinations(orbitals, level):
            e_plus = unit_vector(K, plus)
            for minus in itertools.combinations(orbitals, level):
                e_minus = unit_vector(K, minus)
                value = e_plus @ residual @ e_minus
                if abs(value) <= tol:
                    continue
                piece = rank_one_operator(plus, minus, K)
                sign = e_plus @ piece @ e_minus
                coeff = float(sign * value)
                level_terms.append(RankOneTerm(plus, minus, coeff))
                approx = approx + coeff * piece
        terms.extend(level_terms)
    return terms


def reassemble(terms, K: int) -> np.ndarray:
    out = np.zeros((2**K, 2**K))
    for t in terms:
        out += t.coefficient * rank_one_operator(t.creators, t.annihilators, K)
    return out


def matricize(x: np.ndarray, K: int, k: int) -> np.ndarray:
    """k-th matricization: rows indexed by modes ``1..k``."""
    return np.asarray(x).reshape(2**k, 2 ** (K - k))


def _range_projector(mat: np.ndarray, rel_tol: float = 1e-12) -> np.ndarray:
    u, s, _ = np.linalg.svd(mat, full_matrices=False)
    keep = s > rel_tol * (s[0] if s.size else 0.0)
    u = u[:, keep]
    return u @ u.T


def interface_projectors(x: np.ndarray, K: int, k: int):
    """Orthogonal projectors onto the left (modes ``1..k``) and right interface spaces."""
    mat = matricize(x, K, k)
    return _range_projector(mat), _range_projector(mat.T)


def tangent_projector(x: np.ndarray, K: int) -> np.ndarray:
    """Dense fixed-rank tangent projector ``sum_k Q^{k,1} - sum_{k<K} Q^{k,2}`` at ``x``.

    ``Q^{k,1} = P_{<k} (x) I (x) P_{>k}`` and ``Q^{k,2} = P_{<=k} (x) P_{>k}``; the
    projectors come from SVDs of the matricizations of ``x``.
    """
    x = np.asarray(x, dtype=float)
    left = [np.ones((1, 1))] + [interface_projectors(x, K, k)[0] for k in range(1, K)] + [None]
    right = [None] + [interface_projectors(x, K, k)[1] for k in range(1, K)] + [np.ones((1, 1))]
    Q = np.zeros((2**K, 2**K))
    for k in range(1, K + 1):
        Q += kron_all([left[k - 1], IDENTITY, right[k]])
        if k < K:
            Q -= np.kron(left[k], right[k])
    return Q


def two_site_projector(x: np.ndarray, K: int, k: int) -> np.ndarray:
    """``P_{<k} (x) I (x) I (x) P_{>k+1}``: the space optimised by a two-site step at ``k, k+1``."""
    if not 1 <= k < K:
        raise ValidationError(f"two-site position {k} out of range 1..{K - 1}")
    left = np.ones((1, 1)) if k == 1 else interface_projectors(x, K, k - 1)[0]
    right = np.ones((1, 1)) if k + 1 == K else interface_projectors(x, K, k + 1)[1]
    return kron_all([left, IDENTITY, IDENTITY, right])
