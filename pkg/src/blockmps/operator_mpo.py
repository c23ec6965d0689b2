"""Rank-compact MPOs for one- and two-particle operators.

Both constructions use the same bookkeeping.  A term is a product of
elementary ladder operators ``a*_{i1} a*_{i2} a_{j1} a_{j2}`` (or ``a*_i a_j``),
and because every ladder operator is a Kronecker product its product is the
Kronecker product of per-mode 2x2 factors: ``I`` for modes right of an
operator's orbital, the ladder matrix at the orbital and ``S`` to its left.

Left of the centre a bond index is a *channel* describing the partial
operator on the modes seen so far:

* ``("m", placed)``: the bare monomial of at most half the ladder operators,
  kept with its orbitals,
* ``("e", op, orbital)``: all but one operator placed, coefficients already
  summed, labelled by the orbital the missing operator will act on,
* ``("d",)``: completed terms.

Right of the centre the mirror image is used, and a coupling matrix pairs
left and right channels at the central bond.  It is absorbed into core
``K/2``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import mps_full
from ._validation import ValidationError, as_symmetric, as_two_body, check_even_order, check_order
from .dense_oracle import ANNIHILATE, CREATE, IDENTITY, NUMBER, SIGN, antisymmetrize_two_body
from .mps_full import FullMPO, FullMPS

COMPRESS_TOL = 1e-12
LADDER = {"C": CREATE, "A": ANNIHILATE}


@dataclass
class OneBodyCoeffs:
    """Symmetric one-body coefficients ``t_ij``; optional bandwidth ``d``."""

    T: np.ndarray
    bandwidth: int | None = None

    def __post_init__(self):
        self.T = as_symmetric(self.T)
        if self.bandwidth is not None:
            i, j = np.indices(self.T.shape)
            if np.any(self.T[np.abs(i - j) > self.bandwidth] != 0):
                raise ValidationError(f"coefficients violate bandwidth {self.bandwidth}")

    @property
    def K(self) -> int:
        return self.T.shape[0]


@dataclass
class TwoBodyCoeffs:
    """Raw two-body coefficients plus their grouped antisymmetric form."""

    V: np.ndarray
    locality: int | None = None
    grouped: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.V = as_two_body(self.V, np.asarray(self.V).shape[0])
        if self.locality is not None:
            mask = locality_mask(self.K, self.locality)
            if np.any(self.V[~mask] != 0):
                raise ValidationError(f"coefficients violate locality {self.locality}")
        self.grouped = antisymmetrize_two_body(self.V)

    @property
    def K(self) -> int:
        return self.V.shape[0]


def locality_mask(K: int, d: int) -> np.ndarray:
    """True where all pairwise index distances are at most ``d``."""
    idx = np.indices((K,) * 4)
    spread = idx.max(axis=0) - idx.min(axis=0)
    return spread <= d


def random_one_body(K: int, rng=None, bandwidth: int | None = None) -> OneBodyCoeffs:
    rng = np.random.default_rng(rng)
    A = rng.standard_normal((K, K))
    T = (A + A.T) / 2
    if bandwidth is not None:
        i, j = np.indices((K, K))
        T[np.abs(i - j) > bandwidth] = 0.0
    return OneBodyCoeffs(T, bandwidth)


def random_two_body(K: int, rng=None, locality: int | None = None, hermitian: bool = False) -> TwoBodyCoeffs:
    """Standard-normal ``v_ijkl``; ``hermitian`` imposes ``v_ijkl = v_lkji`` so the operator is symmetric."""
    rng = np.random.default_rng(rng)
    V = rng.standard_normal((K,) * 4)
    if hermitian:
        V = 0.5 * (V + V.transpose(3, 2, 1, 0))
    if locality is not None:
        V[~locality_mask(K, locality)] = 0.0
    return TwoBodyCoeffs(V, locality)


def hopping_chain(K: int, hopping: float = -1.0) -> OneBodyCoeffs:
    """Nearest-neighbour chain ``t_(i,i+1) = t_(i+1,i) = hopping``."""
    T = np.zeros((K, K))
    for i in range(K - 1):
        T[i, i + 1] = T[i + 1, i] = hopping
    return OneBodyCoeffs(T, 1)


# ---------------------------------------------------------------- term automaton


@dataclass(frozen=True)
class TermPattern:
    """Ordered ladder operators of one term family and their index orderings."""

    kinds: tuple[str, ...]
    before: tuple[tuple[int, int], ...]

    @property
    def size(self) -> int:
        return len(self.kinds)


ONE_BODY = TermPattern(("C", "A"), ())
TWO_BODY = TermPattern(("C", "C", "A", "A"), ((0, 1), (2, 3)))


def local_factor(pattern: TermPattern, behind, here) -> np.ndarray:
    """Per-mode factor: ``I`` for operators acting on orbitals in ``behind``-side,
    the ladder matrix for those in ``here``, ``S`` otherwise (left-sweep view)."""
    out = IDENTITY
    for op, kind in enumerate(pattern.kinds):
        if op in here:
            out = out @ LADDER[kind]
        elif op in behind:
            out = out @ IDENTITY
        else:
            out = out @ SIGN
    return out


def _channel_order(key):
    if key[0] == "m":
        return (0, len(key[1]), key[1])
    if key[0] == "e":
        return (1, key[1], key[2])
    return (2,)


def _moves(pattern: TermPattern, key, mode: int, K: int, coeff, from_left: bool):
    """Yield ``(target_key, local_matrix, coefficient)`` for one mode.

    ``from_left=True`` builds left partial operators (modes ``< centre``);
    otherwise right partial operators are grown from the right end.
    """
    n_ops = pattern.size
    half = n_ops // 2
    if key[0] == "d":
        yield key, np.eye(2), 1.0
        return
    if key[0] == "e":
        _, missing, orbital = key
        others = set(range(n_ops)) - {missing}
        if orbital == mode:
            if from_left:
                mat = local_factor(pattern, others, {missing})
            else:
                mat = _right_factor(pattern, others, {missing})
            yield ("d",), mat, 1.0
        else:
            if from_left:
                mat = local_factor(pattern, others, set())
            else:
                mat = _right_factor(pattern, others, set())
            yield key, mat, 1.0
        return
    placed = dict(key[1])
    free = [op for op in range(n_ops) if op not in placed]
    for count in range(0, 3):
        for here in itertools.combinations(free, count):
            here = set(here)
            if not _order_ok(pattern, placed, here, from_left):
                continue
            if from_left:
                mat = local_factor(pattern, set(placed), here)
            else:
                mat = _right_factor(pattern, set(placed), here)
            if not np.any(mat):
                continue
            new = dict(placed)
            new.update({op: mode for op in here})
            if len(new) <= half:
                yield ("m", tuple(sorted(new.items()))), mat, 1.0
            elif len(new) == n_ops:
                yield ("d",), mat, coeff(tuple(new[op] for op in range(n_ops)))
            elif len(new) == n_ops - 1:
                (missing,) = set(range(n_ops)) - set(new)
                others = range(mode + 1, K) if from_left else range(0, mode)
                for orbital in others:
                    full = dict(new)
                    full[missing] = orbital
                    if not _indices_ordered(pattern, full):
                        continue
                    yield ("e", missing, orbital), mat, coeff(tuple(full[op] for op in range(n_ops)))
            else:
                raise ValidationError("term families with more than four ladder operators are unsupported")


def _right_factor(pattern: TermPattern, placed, here) -> np.ndarray:
    """Right-sweep view: operators already placed (further right) give ``S``,
    operators not yet placed (further left) give ``I``."""
    out = IDENTITY
    for op, kind in enumerate(pattern.kinds):
        if op in here:
            out = out @ LADDER[kind]
        elif op in placed:
            out = out @ SIGN
        else:
            out = out @ IDENTITY
    return out


def _order_ok(pattern: TermPattern, placed: dict, here: set, from_left: bool) -> bool:
    for first, second in pattern.before:
        if first in here and second in here:
            return False
        if from_left and second in here and first not in placed:
            return False
        if not from_left and first in here and second not in placed:
            return False
    return True


def _indices_ordered(pattern: TermPattern, indices: dict) -> bool:
    return all(indices[a] < indices[b] for a, b in pattern.before)


def _grow(pattern: TermPattern, K: int, coeff, modes, from_left: bool):
    """Channel lists per bond and the core entries between them."""
    chans = [{("m", ()): 0}]
    entries_per_mode = []
    for mode in modes:
        entries = []
        for key, row in chans[-1].items():
            for target, mat, c in _moves(pattern, key, mode, K, coeff, from_left):
                entries.append((row, target, mat, c))
        keys = sorted({t for _, t, _, _ in entries}, key=_channel_order)
        index = {k: j for j, k in enumerate(keys)}
        chans.append(index)
        entries_per_mode.append([(row, index[t], mat, c) for row, t, mat, c in entries if c != 0.0])
    return chans, entries_per_mode


def _coupling(pattern: TermPattern, left: dict, right: dict, coeff) -> np.ndarray:
    n_ops = pattern.size
    M = np.zeros((len(left), len(right)))
    for lkey, li in left.items():
        for rkey, ri in right.items():
            value = _pair_value(pattern, lkey, rkey, coeff, n_ops)
            if value:
                M[li, ri] = value
    return M


def _pair_value(pattern, lkey, rkey, coeff, n_ops) -> float:
    if lkey == ("m", ()) and rkey == ("d",):
        return 1.0
    if lkey == ("d",) and rkey == ("m", ()):
        return 1.0
    if lkey[0] == "m" and rkey[0] == "m":
        left, right = dict(lkey[1]), dict(rkey[1])
        if set(left) & set(right) or len(left) + len(right) != n_ops:
            return 0.0
        full = {**left, **right}
        if not _indices_ordered(pattern, full):
            return 0.0
        return coeff(tuple(full[op] for op in range(n_ops)))
    if lkey[0] == "e" and rkey[0] == "m":
        right = dict(rkey[1])
        return 1.0 if right == {lkey[1]: lkey[2]} else 0.0
    if lkey[0] == "m" and rkey[0] == "e":
        left = dict(lkey[1])
        return 1.0 if left == {rkey[1]: rkey[2]} else 0.0
    return 0.0


@dataclass
class ChannelAutomaton:
    """Channels per bond and the moves between them for one term family.

    ``left[b]`` maps channel keys to indices at bond ``b <= K/2``; ``right[t]``
    does the same for bond ``K - t``.  Moves are ``(source, target, local, c)``
    with source/target channel indices; ``coupling`` pairs the two halves at
    the centre bond.
    """

    K: int
    pattern: TermPattern
    left: list
    left_moves: list
    right: list
    right_moves: list
    coupling: np.ndarray

    @property
    def centre(self) -> int:
        return self.K // 2


def channel_automaton(pattern: TermPattern, K: int, coeff) -> ChannelAutomaton:
    check_even_order(K)
    centre = K // 2
    left, lmoves = _grow(pattern, K, coeff, range(centre), True)
    right, rmoves = _grow(pattern, K, coeff, range(K - 1, centre - 1, -1), False)
    M = _coupling(pattern, left[centre], right[K - centre], coeff)
    return ChannelAutomaton(K, pattern, left, lmoves, right, rmoves, M)


def channel_flux(pattern: TermPattern, key, from_left: bool) -> int:
    """Particle-number change of the partial operator left of the bond."""
    charge = [1 if kind == "C" else -1 for kind in pattern.kinds]
    if key[0] == "d":
        return 0
    if key[0] == "e":
        c = charge[key[1]]
        return -c if from_left else c
    placed = sum(charge[op] for op, _ in key[1])
    return placed if from_left else -placed


def _assemble(pattern: TermPattern, K: int, coeff) -> FullMPO:
    auto = channel_automaton(pattern, K, coeff)
    centre = auto.centre
    cores = []
    for mode in range(centre):
        core = np.zeros((len(auto.left[mode]), 2, 2, len(auto.left[mode + 1])))
        for row, col, mat, c in auto.left_moves[mode]:
            core[row, :, :, col] += c * mat
        cores.append(core)
    cores[-1] = np.einsum("iabj,jk->iabk", cores[-1], auto.coupling)
    # right channels: right[t] lives on bond K - t
    for mode in range(centre, K):
        t = K - mode - 1
        core = np.zeros((len(auto.right[t + 1]), 2, 2, len(auto.right[t])))
        for col, row, mat, c in auto.right_moves[t]:
            core[row, :, :, col] += c * mat
        cores.append(core)
    return FullMPO(cores)


# ---------------------------------------------------------------- public builders


def build_F(lam, K: int | None = None) -> FullMPO:
    """Rank-2 MPO of ``sum_i lam_i a*_i a_i``."""
    lam = np.asarray(lam, dtype=float)
    K = len(lam) if K is None else K
    check_order(K, 2)
    if lam.shape != (K,):
        raise ValidationError(f"need {K} coefficients")
    first = np.zeros((1, 2, 2, 2))
    first[0, :, :, 0] = IDENTITY
    first[0, :, :, 1] = lam[0] * NUMBER
    cores = [first]
    for k in range(1, K - 1):
        mid = np.zeros((2, 2, 2, 2))
        mid[0, :, :, 0] = IDENTITY
        mid[0, :, :, 1] = lam[k] * NUMBER
        mid[1, :, :, 1] = IDENTITY
        cores.append(mid)
    last = np.zeros((2, 2, 2, 1))
    last[0, :, :, 0] = lam[K - 1] * NUMBER
    last[1, :, :, 0] = IDENTITY
    cores.append(last)
    return FullMPO(cores)


def build_S(T) -> FullMPO:
    """One-particle operator ``sum_ij t_ij a*_i a_j``; bond ranks at most ``K + 2``."""
    coeffs = T if isinstance(T, OneBodyCoeffs) else OneBodyCoeffs(T)
    K = coeffs.K
    check_even_order(K)
    if K < 4:
        raise ValidationError("build_S needs K >= 4")
    table = coeffs.T
    return _assemble(ONE_BODY, K, lambda idx: float(table[idx[0], idx[1]]))


def build_D(V) -> FullMPO:
    """Two-particle operator ``sum_{i1<i2, j1<j2} w a*_{i1} a*_{i2} a_{j1} a_{j2}``.

    ``w`` is the grouped antisymmetric combination of the raw coefficients.
    """
    coeffs = V if isinstance(V, TwoBodyCoeffs) else TwoBodyCoeffs(V)
    K = coeffs.K
    check_even_order(K)
    if K < 4:
        raise ValidationError("build_D needs K >= 4")
    W = coeffs.grouped
    return _assemble(TWO_BODY, K, lambda idx: float(W[idx]))


def build_hamiltonian(T, V=None) -> FullMPO:
    """Compressed MPO of the one-body plus (optional) two-body operator."""
    one = build_S(T)
    if V is None:
        return mpo_compress(one)
    return mpo_compress(mpo_add(one, build_D(V)))


def mpo_add(a: FullMPO, b: FullMPO) -> FullMPO:
    if a.order != b.order:
        raise ValidationError("orders differ")
    K = a.order
    cores = []
    for k, (x, y) in enumerate(zip(a.cores, b.cores)):
        if k == 0:
            cores.append(np.concatenate([x, y], axis=3))
        elif k == K - 1:
            cores.append(np.concatenate([x, y], axis=0))
        else:
            c = np.zeros((x.shape[0] + y.shape[0], 2, 2, x.shape[3] + y.shape[3]))
            c[: x.shape[0], :, :, : x.shape[3]] = x
            c[x.shape[0]:, :, :, x.shape[3]:] = y
            cores.append(c)
    return FullMPO(cores)


def mpo_rank_profile(m: FullMPO) -> list[int]:
    return m.ranks


def _column_basis(mat: np.ndarray, tol: float):
    """Pivoted elimination: ``mat ~= mat[:, keep] @ mix`` with ``mix[:, keep] = I``."""
    if mat.shape[1] == 0:
        return np.zeros(0, dtype=int), np.zeros((0, 0))
    _, R, piv = scipy.linalg.qr(mat, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return np.zeros(0, dtype=int), np.zeros((0, mat.shape[1]))
    rank = int(np.sum(diag > tol * diag[0]))
    keep = np.sort(piv[:rank])
    mix = np.linalg.lstsq(mat[:, keep], mat, rcond=None)[0]
    mix[:, keep] = np.eye(rank)
    return keep, mix


def mpo_compress(m: FullMPO, tol: float = COMPRESS_TOL) -> FullMPO:
    """Exact rank reduction by pivoted column (then row) elimination sweeps.

    The kept columns are original columns; dependent ones are expressed through
    them and the mixing matrix is pushed into the neighbouring core.  No rank
    ever increases.
    """
    cores = [c.copy() for c in m.cores]
    K = len(cores)
    for k in range(K - 1):
        r0, a, b, r1 = cores[k].shape
        keep, mix = _column_basis(cores[k].reshape(r0 * a * b, r1), tol)
        if keep.size == 0:
            keep, mix = np.array([0]), np.zeros((1, r1))
        cores[k] = cores[k][..., keep]
        cores[k + 1] = np.einsum("ij,jabk->iabk", mix, cores[k + 1])
    for k in range(K - 1, 0, -1):
        r0, a, b, r1 = cores[k].shape
        keep, mix = _column_basis(cores[k].reshape(r0, a * b * r1).T, tol)
        if keep.size == 0:
            keep, mix = np.array([0]), np.zeros((1, r0))
        cores[k] = cores[k][keep]
        cores[k - 1] = np.einsum("iabj,kj->iabk", cores[k - 1], mix)
    return FullMPO(cores)


def apply_mpo(m: FullMPO, x: FullMPS) -> FullMPS:
    """Core-wise mode core products; output ranks are products of ranks."""
    if m.order != x.order:
        raise ValidationError(f"orders differ: MPO {m.order}, MPS {x.order}")
    return FullMPS([mps_full.mode_core_product(a, b) for a, b in zip(m.cores, x.cores)])
