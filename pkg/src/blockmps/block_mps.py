"""Block-sparse MPS with an exactly conserved particle number.

Bond ``k`` (``0 <= k <= K``) carries sectors ``n`` from
:func:`sector_range`; ``rho[k][n]`` is the number of bond indices in sector
``n``, i.e. the particle count of the modes left of the bond.  Core ``i``
(0-based, orbital ``i + 1``) stores

* ``unocc[n]``: rows in sector ``n`` of bond ``i``, columns in sector ``n`` of bond ``i + 1``
  (orbital unoccupied), and
* ``occ[n]``: rows in sector ``n`` of bond ``i``, columns in sector ``n + 1`` of bond ``i + 1``
  (orbital occupied).

Blocks with a zero dimension are never stored; every other admissible block is.
In the full representation sector index ranges are contiguous and ascending in ``n``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from . import mps_full
from ._validation import SectorError, ValidationError, check_order, check_particle_count
from .mps_full import FullMPS, TruncationError, _qr, _svd

GRAM_FLOOR = 1e-14


def sector_range(K: int, N: int, k: int) -> range:
    """Admissible left particle counts at bond ``k``."""
    return range(max(0, N - K + k), min(N, k) + 1)


def sector_cap(K: int, N: int, k: int, n: int) -> int:
    """Upper bound on ``rho[k][n]``: dimensions of the left and right eigenspaces."""
    if n < 0 or n > k or N - n < 0 or N - n > K - k:
        return 0
    return min(comb(k, n), comb(K - k, N - n))


@dataclass
class BlockCore:
    unocc: dict[int, np.ndarray] = field(default_factory=dict)
    occ: dict[int, np.ndarray] = field(default_factory=dict)

    def copy(self) -> "BlockCore":
        return BlockCore({n: b.copy() for n, b in self.unocc.items()}, {n: b.copy() for n, b in self.occ.items()})

    def blocks(self, occupied: int) -> dict[int, np.ndarray]:
        return self.occ if occupied else self.unocc


@dataclass
class BlockSpectrum:
    """Descending singular values per bond ``k`` (1..K-1) and sector ``n``."""

    values: dict[tuple[int, int], np.ndarray] = field(default_factory=dict)

    def bond(self, k: int) -> np.ndarray:
        parts = [v for (b, _), v in sorted(self.values.items()) if b == k]
        return np.sort(np.concatenate(parts))[::-1] if parts else np.zeros(0)

    def norm(self) -> float:
        first = [v for (b, _), v in self.values.items() if b == 1]
        return float(np.sqrt(sum(float(np.sum(v**2)) for v in first)))


@dataclass
class BlockMPS:
    K: int
    N: int
    rho: list[dict[int, int]]
    cores: list[BlockCore]
    orth: str | None = None

    def __post_init__(self):
        check_order(self.K)
        check_particle_count(self.N, self.K)
        if len(self.rho) != self.K + 1 or len(self.cores) != self.K:
            raise ValidationError("need K+1 bond tables and K cores")
        rho = []
        for k, table in enumerate(self.rho):
            allowed = sector_range(self.K, self.N, k)
            bad = [n for n in table if n not in allowed]
            if bad:
                raise ValidationError(f"bond {k}: sector keys {bad} outside admissible range {list(allowed)}")
            rho.append({n: int(table.get(n, 0)) for n in allowed})
        self.rho = rho
        if self.rho[0][0] != 1 or self.rho[self.K][self.N] != 1:
            raise ValidationError("boundary sector sizes must be 1")
        for k, table in enumerate(self.rho):
            for n, size in table.items():
                if size < 0:
                    raise ValidationError(f"bond {k}, sector {n}: negative size {size}")
        for i, core in enumerate(self.cores):
            for occupied in (0, 1):
                blocks = core.blocks(occupied)
                for n in list(blocks):
                    if n not in self.rho[i] or n + occupied not in self.rho[i + 1]:
                        raise ValidationError(f"core {i + 1}: inadmissible block key {n} (occupied={occupied})")
                for n, rows in self.rho[i].items():
                    cols = self.rho[i + 1].get(n + occupied, 0)
                    if rows == 0 or cols == 0:
                        blocks.pop(n, None)
                        continue
                    if n not in blocks:
                        blocks[n] = np.zeros((rows, cols))
                    blk = np.asarray(blocks[n], dtype=float)
                    if blk.shape != (rows, cols):
                        raise ValidationError(
                            f"core {i + 1}, sector {n}, occupied={occupied}: shape {blk.shape} != {(rows, cols)}"
                        )
                    blocks[n] = blk

    def copy(self) -> "BlockMPS":
        return BlockMPS(self.K, self.N, [dict(t) for t in self.rho], [c.copy() for c in self.cores], self.orth)

    @property
    def ranks(self) -> list[int]:
        return [sum(t.values()) for t in self.rho[1:-1]]

    def block(self, i: int, occupied: int, n: int) -> np.ndarray | None:
        return self.cores[i].blocks(occupied).get(n)


def _rebuild(K, N, rho, cores, orth=None) -> BlockMPS:
    return BlockMPS(K, N, rho, cores, orth)


def _same_space(x: BlockMPS, y: BlockMPS) -> None:
    if x.K != y.K or x.N != y.N:
        raise ValidationError(f"incompatible tensors: (K,N)=({x.K},{x.N}) vs ({y.K},{y.N})")


def check_sector_caps(x: BlockMPS) -> None:
    """Sizes of a minimal-rank representation never exceed the eigenspace dimensions.

    Sums and operator images are allowed to be redundant, so this is checked on
    the outputs of the rank-revealing operations rather than in the constructor.
    """
    for k, table in enumerate(x.rho):
        for n, size in table.items():
            if size > sector_cap(x.K, x.N, k, n):
                raise ValidationError(f"bond {k}, sector {n}: size {size} exceeds sector cap")


# ---------------------------------------------------------------- construction


def _consistent_sizes(K: int, N: int, rho: list[dict[int, int]]) -> list[dict[int, int]]:
    """Shrink sizes that could never be reached from the neighbouring bonds."""
    rho = [dict(t) for t in rho]
    for k in range(1, K + 1):
        for n in rho[k]:
            rho[k][n] = min(rho[k][n], rho[k - 1].get(n, 0) + rho[k - 1].get(n - 1, 0))
    for k in range(K - 1, -1, -1):
        for n in rho[k]:
            rho[k][n] = min(rho[k][n], rho[k + 1].get(n, 0) + rho[k + 1].get(n + 1, 0))
    return rho


def size_table(K: int, N: int, size) -> list[dict[int, int]]:
    """Sector sizes from a constant, ``"max"``, or an explicit table (validated)."""
    if isinstance(size, str):
        if size != "max":
            raise ValidationError(f"unknown size rule {size!r}")
        rho = [{n: sector_cap(K, N, k, n) for n in sector_range(K, N, k)} for k in range(K + 1)]
        return _consistent_sizes(K, N, rho)
    if isinstance(size, (int, np.integer)):
        if size < 1:
            raise ValidationError("constant sector size must be >= 1")
        rho = [{n: min(int(size), sector_cap(K, N, k, n)) for n in sector_range(K, N, k)} for k in range(K + 1)]
        return _consistent_sizes(K, N, rho)
    rho = [dict(t) for t in size]
    if len(rho) != K + 1:
        raise ValidationError(f"explicit table needs {K + 1} bonds")
    for k, t in enumerate(rho):
        for n, s in t.items():
            if s > sector_cap(K, N, k, n):
                raise ValidationError(f"bond {k}, sector {n}: requested size {s} exceeds cap {sector_cap(K, N, k, n)}")
    return rho


def random_block_mps(K: int, N: int, size=1, rng=None) -> BlockMPS:
    """Standard-normal blocks; ``rng`` may be a seed or a ``numpy.random.Generator``."""
    check_order(K)
    check_particle_count(N, K)
    rng = np.random.default_rng(rng)
    rho = size_table(K, N, size)
    cores = []
    for i in range(K):
        core = BlockCore()
        for occupied in (0, 1):
            for n, rows in rho[i].items():
                cols = rho[i + 1].get(n + occupied, 0)
                if rows and cols:
                    core.blocks(occupied)[n] = rng.standard_normal((rows, cols))
        cores.append(core)
    return BlockMPS(K, N, rho, cores)


def unit_determinant(K: int, occupied) -> BlockMPS:
    """Basis tensor with the given 1-based orbitals occupied."""
    occ_set = set(int(i) for i in occupied)
    N = len(occ_set)
    counts = [0]
    for i in range(1, K + 1):
        counts.append(counts[-1] + (i in occ_set))
    rho = [{n: int(n == counts[k]) for n in sector_range(K, N, k)} for k in range(K + 1)]
    cores = []
    for i in range(K):
        core = BlockCore()
        core.blocks(int(i + 1 in occ_set))[counts[i]] = np.ones((1, 1))
        cores.append(core)
    return BlockMPS(K, N, rho, cores)


def zeros_like(x: BlockMPS) -> BlockMPS:
    out = x.copy()
    for core in out.cores:
        for blocks in (core.unocc, core.occ):
            for n in blocks:
                blocks[n] = np.zeros_like(blocks[n])
    return out


# ---------------------------------------------------------------- full format


def offsets(table: dict[int, int]) -> dict[int, int]:
    out, pos = {}, 0
    for n in sorted(table):
        out[n] = pos
        pos += table[n]
    return out


def to_full(x: BlockMPS) -> FullMPS:
    cores = []
    for i, core in enumerate(x.cores):
        left, right = x.rho[i], x.rho[i + 1]
        lo, ro = offsets(left), offsets(right)
        full = np.zeros((max(1, sum(left.values())), 2, max(1, sum(right.values()))))
        for occupied in (0, 1):
            for n, blk in core.blocks(occupied).items():
                r0, c0 = lo[n], ro[n + occupied]
                full[r0 : r0 + blk.shape[0], occupied, c0 : c0 + blk.shape[1]] = blk
        cores.append(full)
    return FullMPS(cores)


def evaluate(x: BlockMPS) -> np.ndarray:
    return mps_full.evaluate(to_full(x))


def _right_grams(cores: list[np.ndarray]) -> list[np.ndarray]:
    """Gram matrices of the right partial tensors at every bond."""
    K = len(cores)
    grams = [None] * (K + 1)
    grams[K] = np.ones((1, 1))
    for k in range(K - 1, -1, -1):
        c = cores[k]
        grams[k] = np.einsum("iaj,jl,kal->ik", c, grams[k + 1], c, optimize=True)
    return grams


def _sym_sqrt(g: np.ndarray):
    vals, vecs = np.linalg.eigh(0.5 * (g + g.T))
    floor = GRAM_FLOOR * max(vals.max(initial=0.0), 1e-300)
    if vals.min(initial=1.0) <= floor:
        raise SectorError("Gram matrix is singular: ranks are not minimal")
    root = np.sqrt(vals)
    return (vecs * root) @ vecs.T, (vecs / root) @ vecs.T


def from_full(y: FullMPS, N: int, tol: float = 1e-10) -> BlockMPS:
    """Recover the block structure of an ``N``-particle tensor in full format.

    Follows the constructive argument for the block theorem: ranks are first made
    minimal, then bond by bond the right Gram matrix ``G`` is used to make the
    per-sector row spaces orthogonal (``X_k <- X_k G^(1/2) Q``,
    ``X_(k+1) <- Q^T G^(-1/2) X_(k+1)``) and ``Q`` sorts the bond indices by
    sector.  Mass outside admissible blocks above ``tol * ||y||`` raises
    :class:`SectorError`.
    """
    K = y.order
    check_particle_count(N, K)
    if any(n != 2 for n in y.dims):
        raise ValidationError("from_full needs mode size 2 everywhere")
    total = mps_full.norm(y)
    if total == 0.0:
        raise SectorError("cannot assign a sector to the zero tensor")
    form, spectrum = mps_full.tt_svd(y, "left")
    keep = [max(1, int(np.sum(s > GRAM_FLOOR * total))) for s in spectrum.values]
    cores = mps_full.truncate(form, spectrum, ranks=keep).cores
    grams = _right_grams(cores)
    labels: list[np.ndarray] = [np.zeros(1, dtype=int)]
    for i in range(K - 1):
        core = cores[i]
        r1 = core.shape[2]
        root, inv_root = _sym_sqrt(grams[i + 1])
        core = np.einsum("iaj,jk->iak", core, root)
        bases, new_labels = [], []
        for mu in sorted(set((labels[i][:, None] + np.arange(2)[None, :]).ravel().tolist())):
            rows = [core[labels[i] == mu - a, a, :] for a in (0, 1)]
            stack = np.vstack(rows)
            if stack.size == 0:
                continue
            u, s, vt = np.linalg.svd(stack, full_matrices=False)
            dim = int(np.sum(s > tol * max(total, s.max(initial=0.0))))
            if dim == 0:
                continue
            if mu not in sector_range(K, N, i + 1):
                raise SectorError(f"bond {i + 1}: component with {mu} left particles is incompatible with N={N}")
            bases.append(vt[:dim])
            new_labels += [mu] * dim
        q = np.vstack(bases).T if bases else np.zeros((r1, 0))
        if q.shape[1] != r1 or np.abs(q.T @ q - np.eye(r1)).max(initial=0.0) > 1e-8:
            raise SectorError(f"bond {i + 1}: partial tensors do not separate into particle-number sectors")
        cores[i] = np.einsum("iaj,jk->iak", core, q)
        cores[i + 1] = np.einsum("ij,jk,kal->ial", q.T, inv_root, cores[i + 1], optimize=True)
        labels.append(np.array(new_labels, dtype=int))
    labels.append(np.array([N]))
    rho = []
    for k in range(K + 1):
        rho.append({n: int(np.sum(labels[k] == n)) for n in sector_range(K, N, k)})
    out_cores = []
    scale = max(total, 1e-300)
    for i in range(K):
        core = cores[i]
        mask = np.zeros(core.shape, dtype=bool)
        bc = BlockCore()
        for occupied in (0, 1):
            for n in rho[i]:
                rows = np.flatnonzero(labels[i] == n)
                cols = np.flatnonzero(labels[i + 1] == n + occupied)
                if rows.size and cols.size:
                    bc.blocks(occupied)[n] = core[np.ix_(rows, [occupied], cols)][:, 0, :]
                    mask[np.ix_(rows, [occupied], cols)] = True
        stray = np.abs(core[~mask]).max(initial=0.0)
        if stray > tol * scale:
            raise SectorError(f"core {i + 1}: entries of size {stray:.3e} outside the admissible blocks")
        out_cores.append(bc)
    return BlockMPS(K, N, rho, out_cores)


# ---------------------------------------------------------------- linear structure


def add(x: BlockMPS, y: BlockMPS) -> BlockMPS:
    """Sectorwise block-diagonal concatenation (boundary bonds stay of size 1)."""
    _same_space(x, y)
    K = x.K
    if K == 1:
        core = BlockCore()
        for occupied in (0, 1):
            for n, b in x.cores[0].blocks(occupied).items():
                core.blocks(occupied)[n] = b + y.cores[0].blocks(occupied)[n]
        return _rebuild(K, x.N, x.rho, [core])
    rho = [dict(x.rho[0])]
    for k in range(1, K):
        rho.append({n: x.rho[k][n] + y.rho[k][n] for n in x.rho[k]})
    rho.append(dict(x.rho[K]))
    cores = []
    for i in range(K):
        core = BlockCore()
        for occupied in (0, 1):
            for n in rho[i]:
                m = n + occupied
                if m not in rho[i + 1] or rho[i][n] == 0 or rho[i + 1][m] == 0:
                    continue
                a = x.block(i, occupied, n)
                b = y.block(i, occupied, n)
                a = np.zeros((x.rho[i][n], x.rho[i + 1][m])) if a is None else a
                b = np.zeros((y.rho[i][n], y.rho[i + 1][m])) if b is None else b
                if i == 0:
                    blk = np.hstack([a, b])
                elif i == K - 1:
                    blk = np.vstack([a, b])
                else:
                    blk = np.block([[a, np.zeros((a.shape[0], b.shape[1]))], [np.zeros((b.shape[0], a.shape[1])), b]])
                core.blocks(occupied)[n] = blk
        cores.append(core)
    return _rebuild(K, x.N, rho, cores)


def scale(x: BlockMPS, c: float) -> BlockMPS:
    out = x.copy()
    for blocks in (out.cores[0].unocc, out.cores[0].occ):
        for n in blocks:
            blocks[n] = blocks[n] * c
    out.orth = None
    return out


def inner(x: BlockMPS, y: BlockMPS) -> float:
    """Right-to-left sector recursion.

    A sector contributes through its unoccupied block, its occupied block, or
    both, depending on which of them is admissible at this core; absent blocks
    simply contribute nothing.
    """
    _same_space(x, y)
    R = {x.N: np.ones((1, 1))}
    for i in range(x.K - 1, -1, -1):
        L = {}
        for n in sector_range(x.K, x.N, i):
            acc = np.zeros((x.rho[i][n], y.rho[i][n]))
            for occupied in (0, 1):
                a = x.block(i, occupied, n)
                b = y.block(i, occupied, n)
                if a is not None and b is not None:
                    acc += a @ R[n + occupied] @ b.T
            L[n] = acc
        R = L
    return float(R[0][0, 0])


def norm(x: BlockMPS) -> float:
    return float(np.sqrt(max(inner(x, x), 0.0)))


def number_mask(x: BlockMPS, orbital: int) -> BlockMPS:
    """``a*_k a_k x``: keeps only the occupied blocks of core ``k`` (1-based)."""
    out = x.copy()
    core = out.cores[orbital - 1]
    for n in core.unocc:
        core.unocc[n] = np.zeros_like(core.unocc[n])
    out.orth = None
    return out


def particle_expectation(x: BlockMPS) -> float:
    """``<x, P x> / <x, x>`` evaluated blockwise."""
    denom = inner(x, x)
    if denom == 0.0:
        raise ValidationError("particle expectation of the zero tensor is undefined")
    return sum(inner(x, number_mask(x, k)) for k in range(1, x.K + 1)) / denom


# ---------------------------------------------------------------- orthogonalization


def _drop_empty(x: BlockMPS) -> BlockMPS:
    return BlockMPS(x.K, x.N, x.rho, x.cores, x.orth)


def _absorb_left(cores, rho, i: int, n: int, mat: np.ndarray) -> None:
    """Right-multiply the columns of core ``i - 1`` that belong to sector ``n`` of bond ``i``."""
    prev = cores[i - 1]
    if n in prev.unocc:
        prev.unocc[n] = prev.unocc[n] @ mat
    if n - 1 in prev.occ:
        prev.occ[n - 1] = prev.occ[n - 1] @ mat


def _absorb_right(cores, i: int, n: int, mat: np.ndarray) -> None:
    """Left-multiply the rows of core ``i + 1`` that belong to sector ``n`` of bond ``i + 1``."""
    nxt = cores[i + 1]
    if n in nxt.unocc:
        nxt.unocc[n] = mat @ nxt.unocc[n]
    if n in nxt.occ:
        nxt.occ[n] = mat @ nxt.occ[n]


def _row_pair(core: BlockCore, n: int, rows: int, cols0: int, cols1: int) -> np.ndarray:
    a = core.unocc.get(n, np.zeros((rows, cols0)))
    b = core.occ.get(n, np.zeros((rows, cols1)))
    return np.hstack([a, b])


def _col_pair(core: BlockCore, n: int, rows0: int, rows1: int, cols: int) -> np.ndarray:
    a = core.unocc.get(n, np.zeros((rows0, cols)))
    b = core.occ.get(n - 1, np.zeros((rows1, cols)))
    return np.vstack([a, b])


def _sweep_right_to_left(x: BlockMPS, factorize, spectrum=None) -> BlockMPS:
    K, N = x.K, x.N
    cores = [c.copy() for c in x.cores]
    rho = [dict(t) for t in x.rho]
    for i in range(K - 1, 0, -1):
        for n in sector_range(K, N, i):
            rows = rho[i][n]
            if rows == 0:
                continue
            c0 = rho[i + 1].get(n, 0)
            c1 = rho[i + 1].get(n + 1, 0)
            joined = _row_pair(cores[i], n, rows, c0, c1)
            right, left, s = factorize(joined)
            m = right.shape[0]
            for occupied, cols in ((0, slice(0, c0)), (1, slice(c0, c0 + c1))):
                blk = right[:, cols]
                if blk.shape[0] and blk.shape[1]:
                    cores[i].blocks(occupied)[n] = blk
                else:
                    cores[i].blocks(occupied).pop(n, None)
            _absorb_left(cores, rho, i, n, left)
            rho[i][n] = m
            if spectrum is not None:
                spectrum.values[(i, n)] = s
    return _drop_empty(_rebuild(K, N, rho, cores))


def _sweep_left_to_right(x: BlockMPS, factorize, spectrum=None) -> BlockMPS:
    K, N = x.K, x.N
    cores = [c.copy() for c in x.cores]
    rho = [dict(t) for t in x.rho]
    for i in range(K - 1):
        for n in sector_range(K, N, i + 1):
            cols = rho[i + 1][n]
            if cols == 0:
                continue
            r0 = rho[i].get(n, 0)
            r1 = rho[i].get(n - 1, 0)
            joined = _col_pair(cores[i], n, r0, r1, cols)
            left, right, s = factorize(joined)
            for occupied, key, rows in ((0, n, slice(0, r0)), (1, n - 1, slice(r0, r0 + r1))):
                blk = left[rows]
                if blk.shape[0] and blk.shape[1]:
                    cores[i].blocks(occupied)[key] = blk
                else:
                    cores[i].blocks(occupied).pop(key, None)
            _absorb_right(cores, i, n, right)
            rho[i + 1][n] = left.shape[1]
            if spectrum is not None:
                spectrum.values[(i + 1, n)] = s
    return _drop_empty(_rebuild(K, N, rho, cores))


def _empty_factors(joined, rows_side: bool):
    rows, cols = joined.shape
    if rows_side:
        return np.zeros((0, cols)), np.zeros((rows, 0)), np.zeros(0)
    return np.zeros((rows, 0)), np.zeros((0, cols)), np.zeros(0)


def _qr_rows(joined):
    if joined.size == 0:
        return _empty_factors(joined, True)
    q, r = _qr(joined.T)
    return q.T, r.T, None


def _qr_cols(joined):
    if joined.size == 0:
        return _empty_factors(joined, False)
    q, r = _qr(joined)
    return q, r, None


def _svd_rows(joined):
    if joined.size == 0:
        return _empty_factors(joined, True)
    u, s, vt = _svd(joined)
    return vt, u * s, s


def _svd_cols(joined):
    if joined.size == 0:
        return _empty_factors(joined, False)
    u, s, vt = _svd(joined)
    return u, s[:, None] * vt, s


def orthogonalize_block(x: BlockMPS, side: str = "right") -> BlockMPS:
    """Per-sector QR sweep; the R factors are pushed into the neighbouring core."""
    if side == "right":
        out = _sweep_right_to_left(x, _qr_rows)
    elif side == "left":
        out = _sweep_left_to_right(x, _qr_cols)
    else:
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    out.orth = side
    return out


def tt_svd_block(x: BlockMPS, side: str = "right") -> tuple[BlockMPS, BlockSpectrum]:
    """Sector-wise TT-SVD.

    ``side="right"`` expects a left-orthogonal input (it is orthogonalized first
    otherwise) and returns the right-orthogonal TT-SVD form; ``side="left"`` is
    the mirror image.
    """
    spectrum = BlockSpectrum()
    if side == "right":
        if x.orth != "left":
            x = orthogonalize_block(x, "left")
        out = _sweep_right_to_left(x, _svd_rows, spectrum)
        out.orth = "right-svd"
    elif side == "left":
        if x.orth != "right":
            x = orthogonalize_block(x, "right")
        out = _sweep_left_to_right(x, _svd_cols, spectrum)
        out.orth = "left-svd"
    else:
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    return out, spectrum


def select_block_discards(spectrum: BlockSpectrum, eps: float) -> dict[tuple[int, int], int]:
    """Global smallest-first selection with squared sum at most ``eps**2``."""
    pool = []
    for (k, n), s in spectrum.values.items():
        for j, value in enumerate(s):
            pool.append((float(value), k, n, -j))
    pool.sort()
    drop = {key: 0 for key in spectrum.values}
    budget, used = eps * eps, 0.0
    for value, k, n, _ in pool:
        if used + value * value > budget:
            break
        used += value * value
        drop[(k, n)] += 1
    return drop


def _keep_largest_per_bond(spectrum: BlockSpectrum, ranks) -> dict[tuple[int, int], int]:
    keep = {key: 0 for key in spectrum.values}
    by_bond: dict[int, list] = {}
    for (k, n), s in spectrum.values.items():
        for j, value in enumerate(s):
            by_bond.setdefault(k, []).append((-float(value), n, j))
    for k, items in by_bond.items():
        items.sort()
        for _, n, _ in items[: ranks[k - 1]]:
            keep[(k, n)] += 1
    return keep


def truncate_block(x: BlockMPS, spectrum: BlockSpectrum, eps: float | None = None, ranks=None, sector_ranks=None) -> BlockMPS:
    """Delete trailing singular directions per sector.

    Exactly one mode applies: ``eps`` (global budget), ``ranks`` (largest values
    per bond) or ``sector_ranks`` (mapping ``(k, n) -> cap``).  For each removed
    value at bond ``k``, sector ``n`` the last column of the unoccupied block
    ``(k, n)`` and of the occupied block ``(k, n - 1)`` go, together with the
    last row of both blocks ``(k + 1, n)``.
    """
    if x.orth not in ("right-svd", "left-svd"):
        raise ValidationError("truncate_block needs a TT-SVD form (call tt_svd_block first)")
    sizes = {key: len(s) for key, s in spectrum.values.items()}
    if eps is not None:
        total = spectrum.norm() if x.K > 1 else norm(x)
        if eps >= total:
            raise TruncationError(f"eps={eps:g} >= norm {total:g}: would truncate to zero")
        drop = select_block_discards(spectrum, eps)
        keep = {key: sizes[key] - drop[key] for key in sizes}
    elif ranks is not None:
        ranks = list(ranks)
        if len(ranks) != x.K - 1 or min(ranks, default=1) < 1:
            raise TruncationError("need K-1 positive target ranks")
        keep = _keep_largest_per_bond(spectrum, ranks)
    elif sector_ranks is not None:
        keep = {key: min(sizes[key], int(sector_ranks.get(key, sizes[key]))) for key in sizes}
    else:
        return x.copy()
    cores = [c.copy() for c in x.cores]
    rho = [dict(t) for t in x.rho]
    for (k, n), m in keep.items():
        if m >= rho[k][n]:
            continue
        rho[k][n] = m
        left, right = cores[k - 1], cores[k]
        if n in left.unocc:
            left.unocc[n] = left.unocc[n][:, :m]
        if n - 1 in left.occ:
            left.occ[n - 1] = left.occ[n - 1][:, :m]
        if n in right.unocc:
            right.unocc[n] = right.unocc[n][:m]
        if n in right.occ:
            right.occ[n] = right.occ[n][:m]
    return _rebuild(x.K, x.N, rho, cores)


def round_block(x: BlockMPS, eps: float | None = None, ranks=None, sector_ranks=None, relative: bool = False) -> BlockMPS:
    form, spectrum = tt_svd_block(orthogonalize_block(x, "left"), "right")
    if eps is not None and relative:
        eps = eps * spectrum.norm()
    return truncate_block(form, spectrum, eps=eps, ranks=ranks, sector_ranks=sector_ranks)


def minimal_ranks(x: BlockMPS, rel_tol: float = 1e-14) -> BlockMPS:
    """Drop numerically zero singular directions in every sector."""
    form, spectrum = tt_svd_block(orthogonalize_block(x, "left"), "right")
    total = spectrum.norm()
    caps = {key: max(int(np.sum(s > rel_tol * total)), 0) for key, s in spectrum.values.items()}
    return truncate_block(form, spectrum, sector_ranks=caps)


# ---------------------------------------------------------------- dense checks


def left_interfaces(x: FullMPS, k: int) -> np.ndarray:
    """Matrix whose columns are the partial tensors of modes ``1..k``."""
    out = np.ones((1, 1))
    for core in x.cores[:k]:
        r0, n, r1 = core.shape
        out = (out @ core.reshape(r0, n * r1)).reshape(-1, r1)
    return out


def right_interfaces(x: FullMPS, k: int) -> np.ndarray:
    """Matrix whose rows are the partial tensors of modes ``k+1..K``."""
    out = np.ones((1, 1))
    for core in reversed(x.cores[k:]):
        r0, n, r1 = core.shape
        out = (core.reshape(r0 * n, r1) @ out).reshape(r0, -1)
    return out


def verify_block_eigen(x: BlockMPS, k: int, tol: float = 1e-10) -> bool:
    """Dense check that every left partial tensor of sector ``n`` has ``n`` particles."""
    if x.K > 10:
        raise ValidationError("dense verification is limited to K <= 10")
    from .dense_oracle import occupation_counts

    full = to_full(x)
    tau = left_interfaces(full, k)
    counts = occupation_counts(k).astype(float)
    start = 0
    for n in sorted(x.rho[k]):
        size = x.rho[k][n]
        cols = tau[:, start : start + size]
        start += size
        scale = max(np.abs(cols).max(initial=0.0), 1e-300)
        if np.abs(counts[:, None] * cols - n * cols).max(initial=0.0) > tol * scale:
            return False
    return True
