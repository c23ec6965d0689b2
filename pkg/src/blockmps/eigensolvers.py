"""Ground-state solvers that keep the block structure of the iterate.

All solvers take a symbolic operator (:class:`SymMPO`) and a :class:`BlockMPS`
start vector, so every iterate lies in the start vector's particle-number
sector by construction.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

from . import block_mps as bm
from ._validation import SectorError, ValidationError
from .block_mps import BlockCore, BlockMPS
from .mps_full import TruncationError, _qr, _svd
from .symbolic_ops import SymMPO, apply_sym


@dataclass
class SolverConfig:
    max_iter: int = 200  # iterations (gradient methods) or sweeps (ALS/DMRG)
    tol: float = 1e-8  # on ||Hx - rho x|| / ||x||
    eps: float | None = 1e-10  # truncation threshold relative to ||x||
    max_rank: int | None = None
    armijo: float = 1e-4
    max_halvings: int = 60
    seed: int | None = 0
    sector_floor: int = 1
    dense_limit: int = 512
    lanczos_tol: float = 1e-10
    lanczos_maxiter: int = 200

    def __post_init__(self):
        if self.tol <= 0 or (self.eps is not None and self.eps <= 0):
            raise ValidationError("tolerances must be positive")
        if self.sector_floor < 1:
            raise ValidationError("sector floor must be at least 1")


@dataclass
class TraceRow:
    iteration: int
    energy: float
    residual: float
    max_rank: int
    particle_expectation: float


def trace_csv(trace) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    names = list(TraceRow.__dataclass_fields__)
    writer.writerow(names)
    for row in trace:
        d = asdict(row)
        writer.writerow([repr(d[n]) if isinstance(d[n], float) else d[n] for n in names])
    return buf.getvalue()


# ---------------------------------------------------------------- basic quantities


def stable_norm(x: BlockMPS) -> float:
    """Norm from the last core after a left QR sweep; accurate for nearly cancelling sums."""
    orth = bm.orthogonalize_block(x, "left")
    last = orth.cores[-1]
    return float(math.sqrt(sum(float(np.sum(b * b)) for blocks in (last.unocc, last.occ) for b in blocks.values())))


def normalize(x: BlockMPS) -> BlockMPS:
    nrm = stable_norm(x)
    if nrm == 0.0:
        raise ValidationError("cannot normalize the zero tensor")
    out = bm.scale(x, 1.0 / nrm)
    out.orth = None
    return out


def rayleigh_quotient(H: SymMPO, x: BlockMPS) -> float:
    denom = bm.inner(x, x)
    if denom == 0.0:
        raise ValidationError("Rayleigh quotient of the zero tensor")
    return bm.inner(x, apply_sym(H, x)) / denom


def _residual(H: SymMPO, x: BlockMPS):
    y = apply_sym(H, x)
    n2 = bm.inner(x, x)
    if n2 == 0.0:
        raise ValidationError("residual of the zero tensor")
    rho = bm.inner(x, y) / n2
    g = bm.add(y, bm.scale(x, -rho))
    return rho, g, y


def residual_norm(H: SymMPO, x: BlockMPS) -> float:
    """``||H x - rho(x) x||`` computed blockwise."""
    _, g, _ = _residual(H, x)
    return stable_norm(g)


def _row(it, energy, residual, x) -> TraceRow:
    return TraceRow(it, float(energy), float(residual), max(x.ranks, default=1), bm.particle_expectation(x))


def _round(x: BlockMPS, cfg: SolverConfig) -> BlockMPS:
    """Relative ``eps`` rounding; on a truncation-to-zero refusal retry with a smaller ``eps``."""
    eps = cfg.eps
    while True:
        try:
            ranks = None if cfg.max_rank is None else [cfg.max_rank] * (x.K - 1)
            out = bm.round_block(x, eps=eps, relative=True) if eps is not None else bm.minimal_ranks(x)
            if ranks is not None:
                out = bm.round_block(out, ranks=ranks)
            return out
        except TruncationError:
            if eps is None or eps < 1e-300:
                raise
            eps = eps / 10


# ---------------------------------------------------------------- gradient descent


def _line_quotient(a, b, c, n0, d, e, alpha) -> float:
    """Rayleigh quotient of ``x - alpha g`` from the six inner products."""
    return (a - 2 * alpha * b + alpha * alpha * c) / (n0 - 2 * alpha * d + alpha * alpha * e)


def gradient_descent(H: SymMPO, x0: BlockMPS, cfg: SolverConfig | None = None):
    """``x <- trunc(x - alpha (Hx - rho x))`` with Armijo backtracking from ``alpha = 1``."""
    cfg = cfg or SolverConfig()
    x = normalize(x0)
    trace = []
    for it in range(cfg.max_iter + 1):
        rho, g, y = _residual(H, x)
        g = bm.round_block(g, eps=1e-14, relative=True) if bm.inner(g, g) > 0 else g
        res = stable_norm(g)
        trace.append(_row(it, rho, res, x))
        if res <= cfg.tol or it == cfg.max_iter:
            break
        Hg = apply_sym(H, g)
        a, b, c = bm.inner(x, y), bm.inner(x, Hg), bm.inner(g, Hg)
        n0, d, e = bm.inner(x, x), bm.inner(x, g), bm.inner(g, g)
        alpha, slope = 1.0, 2 * e / n0
        for _ in range(cfg.max_halvings):
            if _line_quotient(a, b, c, n0, d, e, alpha) <= rho - cfg.armijo * alpha * slope:
                break
            alpha /= 2
        x = normalize(_round(bm.add(x, bm.scale(g, -alpha)), cfg))
    return x, trace


# ---------------------------------------------------------------- tangent space


@dataclass
class TangentVector:
    """``sum_k U_1..U_{k-1} dY_k V_{k+1}..V_K`` with left gauge on ``dY_k``, ``k < K``."""

    U: BlockMPS
    V: BlockMPS
    dY: list


def gauge_pair(x: BlockMPS):
    """Left- and right-orthogonal representations of ``x`` with identical block sizes."""
    U = bm.orthogonalize_block(x, "left")
    for _ in range(2 * x.K + 2):
        V = bm.orthogonalize_block(U, "right")
        U2 = bm.orthogonalize_block(V, "left")
        if U2.rho == V.rho == U.rho:
            return U2, V
        U = U2
    raise SectorError("could not find consistent block sizes for the gauge pair")


def _interface_envs(U: BlockMPS, V: BlockMPS, z: BlockMPS):
    K, N = z.K, z.N
    left = [{0: np.ones((1, 1))}]
    for i in range(K - 1):
        nxt = {}
        for n, Lm in left[-1].items():
            for alpha in (0, 1):
                Ub, Zb = U.block(i, alpha, n), z.block(i, alpha, n)
                if Ub is None or Zb is None:
                    continue
                m = n + alpha
                contrib = Ub.T @ Lm @ Zb
                nxt[m] = nxt[m] + contrib if m in nxt else contrib
        left.append(nxt)
    right = [None] * (K + 1)
    right[K] = {N: np.ones((1, 1))}
    for i in range(K - 1, 0, -1):
        cur = {}
        for n in bm.sector_range(K, N, i):
            for alpha in (0, 1):
                Vb, Zb = V.block(i, alpha, n), z.block(i, alpha, n)
                Rm = right[i + 1].get(n + alpha)
                if Vb is None or Zb is None or Rm is None:
                    continue
                contrib = Vb @ Rm @ Zb.T
                cur[n] = cur[n] + contrib if n in cur else contrib
        right[i] = cur
    return left, right


def tangent_project(x: BlockMPS, z: BlockMPS, pair=None) -> TangentVector:
    """Orthogonal projection of ``z`` onto the tangent space at ``x``."""
    if x.K != z.K or x.N != z.N:
        raise ValidationError("x and z live in different spaces")
    if bm.inner(x, x) == 0.0:
        raise ValidationError("tangent space at the zero tensor is undefined")
    U, V = pair if pair is not None else gauge_pair(x)
    K = x.K
    left, right = _interface_envs(U, V, z)
    dY = []
    for i in range(K):
        C = BlockCore()
        for alpha in (0, 1):
            for n, Zb in z.cores[i].blocks(alpha).items():
                Lm, Rm = left[i].get(n), right[i + 1].get(n + alpha)
                if Lm is None or Rm is None or U.block(i, alpha, n) is None:
                    continue
                C.blocks(alpha)[n] = Lm @ Zb @ Rm.T
        for alpha in (0, 1):
            for n in U.cores[i].blocks(alpha):
                C.blocks(alpha).setdefault(n, np.zeros_like(U.block(i, alpha, n)))
        if i < K - 1:
            # remove the component along U_i: dY = C - U_i (U_i^T C) per right sector
            overlap = {}
            for alpha in (0, 1):
                for n, Ub in U.cores[i].blocks(alpha).items():
                    m = n + alpha
                    t = Ub.T @ C.blocks(alpha)[n]
                    overlap[m] = overlap[m] + t if m in overlap else t
            for alpha in (0, 1):
                for n, Ub in U.cores[i].blocks(alpha).items():
                    C.blocks(alpha)[n] = C.blocks(alpha)[n] - Ub @ overlap[n + alpha]
        dY.append(C)
    return TangentVector(U, V, dY)


def tangent_combine(s: TangentVector, a: float, t: TangentVector, b: float) -> TangentVector:
    """``a s + b t`` for tangent vectors at the same base point."""
    dY = []
    for cs, ct in zip(s.dY, t.dY):
        core = BlockCore()
        for alpha in (0, 1):
            for n, blk in cs.blocks(alpha).items():
                core.blocks(alpha)[n] = a * blk + b * ct.blocks(alpha)[n]
        dY.append(core)
    return TangentVector(s.U, s.V, dY)


def tangent_to_mps(t: TangentVector) -> BlockMPS:
    """Block MPS ``[U_1 dY_1] [[U_k dY_k],[0 V_k]] ... [dY_K; V_K]``; ranks at most doubled."""
    U, V = t.U, t.V
    K, N = U.K, U.N
    rho = [dict(U.rho[0])] + [{n: 2 * s for n, s in U.rho[k].items()} for k in range(1, K)] + [dict(U.rho[K])]
    cores = []
    for i in range(K):
        core = BlockCore()
        for alpha in (0, 1):
            for n, Ub in U.cores[i].blocks(alpha).items():
                D = t.dY[i].blocks(alpha)[n]
                if K == 1:
                    blk = D
                elif i == 0:
                    blk = np.hstack([Ub, D])
                elif i == K - 1:
                    blk = np.vstack([D, V.block(i, alpha, n)])
                else:
                    Vb = V.block(i, alpha, n)
                    blk = np.block([[Ub, D], [np.zeros_like(Vb), Vb]])
                core.blocks(alpha)[n] = blk
        cores.append(core)
    return BlockMPS(K, N, rho, cores)


def _sector_table(x: BlockMPS) -> dict:
    return {(k, n): s for k in range(1, x.K) for n, s in x.rho[k].items()}


def riemannian_gd(H: SymMPO, x0: BlockMPS, cfg: SolverConfig | None = None):
    """``x <- trunc_r(x - alpha Q_x(Hx - rho x))`` with the block sizes of ``x0`` as fixed ranks.

    The retraction keeps every sector of ``x0``; backtracking is done on the
    retracted Rayleigh quotient, so accepted energies never increase.
    """
    cfg = cfg or SolverConfig()
    x = normalize(x0)
    U, V = gauge_pair(x)
    x = U
    table = _sector_table(x)
    for (k, n), s in table.items():
        if s < cfg.sector_floor:
            raise SectorError(f"start vector has sector size {s} < floor {cfg.sector_floor} at bond {k}, sector {n}")
    trace = []
    for it in range(cfg.max_iter + 1):
        rho, g, _ = _residual(H, x)
        res = stable_norm(g)
        trace.append(_row(it, rho, res, x))
        if res <= cfg.tol or it == cfg.max_iter:
            break
        pair = gauge_pair(x)
        tg = tangent_project(x, g, pair)
        tx = tangent_project(x, x, pair)
        xi = tangent_to_mps(tg)
        slope = 2 * bm.inner(xi, xi) / bm.inner(x, x)
        alpha = 1.0
        accepted = None
        for _ in range(cfg.max_halvings):
            cand = _retract(tangent_to_mps(tangent_combine(tx, 1.0, tg, -alpha)), table)
            energy = rayleigh_quotient(H, cand)
            if energy <= rho - cfg.armijo * alpha * slope:
                accepted = cand
                break
            alpha /= 2
        if accepted is None:
            break
        x = normalize(accepted)
        x = gauge_pair(x)[0]
    return x, trace


def _retract(y: BlockMPS, table: dict) -> BlockMPS:
    out = bm.round_block(y, sector_ranks=table)
    for (k, n), s in table.items():
        if s >= 1 and out.rho[k].get(n, 0) == 0:
            raise SectorError(f"retraction collapsed bond {k}, sector {n}")
    return out


# ---------------------------------------------------------------- environments


def _env_left_step(Lenv: dict, core, fin, fout, bra: BlockCore, ket: BlockCore) -> dict:
    """``L_{i+1}[b][n+alpha] += c E[beta, alpha] B^T L_i[a][n] X``."""
    out: dict = {}
    for (a, b), entry in core.entries.items():
        La = Lenv.get(a)
        if not La:
            continue
        fa = fin[a]
        for n, Lm in La.items():
            for alpha in (0, 1):
                X = ket.blocks(alpha).get(n)
                if X is None:
                    continue
                for sym, c in entry.items():
                    E = sym.matrix
                    for beta in (0, 1):
                        w = E[beta, alpha]
                        if w == 0.0:
                            continue
                        B = bra.blocks(beta).get(n + fa)
                        if B is None:
                            continue
                        slot = out.setdefault(b, {})
                        contrib = (c * w) * (B.T @ Lm @ X)
                        m = n + alpha
                        slot[m] = slot[m] + contrib if m in slot else contrib
    return out


def _env_right_step(Renv: dict, core, fin, fout, bra: BlockCore, ket: BlockCore) -> dict:
    """``R_i[a][n] += c E[beta, alpha] B R_{i+1}[b][n+alpha] X^T``."""
    out: dict = {}
    for (a, b), entry in core.entries.items():
        Rb = Renv.get(b)
        if not Rb:
            continue
        fa = fin[a]
        for alpha in (0, 1):
            for n, X in ket.blocks(alpha).items():
                Rm = Rb.get(n + alpha)
                if Rm is None:
                    continue
                for sym, c in entry.items():
                    E = sym.matrix
                    for beta in (0, 1):
                        w = E[beta, alpha]
                        if w == 0.0:
                            continue
                        B = bra.blocks(beta).get(n + fa)
                        if B is None:
                            continue
                        slot = out.setdefault(a, {})
                        contrib = (c * w) * (B @ Rm @ X.T)
                        slot[n] = slot[n] + contrib if n in slot else contrib
    return out


def left_environments(H: SymMPO, x: BlockMPS, upto: int | None = None) -> list:
    """``L[i]`` for bonds ``0..upto``: keyed by operator bond index, then ket sector."""
    upto = x.K if upto is None else upto
    envs = [{0: {0: np.ones((1, 1))}}]
    for i in range(upto):
        envs.append(_env_left_step(envs[-1], H.cores[i], H.fluxes[i], H.fluxes[i + 1], x.cores[i], x.cores[i]))
    return envs


def right_environments(H: SymMPO, x: BlockMPS, downto: int = 0) -> list:
    """``R[i]`` for bonds ``downto..K`` (entries below ``downto`` are None)."""
    K = x.K
    envs: list = [None] * (K + 1)
    envs[K] = {0: {x.N: np.ones((1, 1))}}
    for i in range(K - 1, downto - 1, -1):
        envs[i] = _env_right_step(envs[i + 1], H.cores[i], H.fluxes[i], H.fluxes[i + 1], x.cores[i], x.cores[i])
    return envs


# ---------------------------------------------------------------- local problems


def _site_terms(H: SymMPO, start: int, width: int) -> dict:
    """``(a, c) -> E`` for the product of ``width`` symbolic cores from ``start``."""
    terms = {(a, b): sum(c * s.matrix for s, c in e.items()) for (a, b), e in H.cores[start].entries.items()}
    for i in range(start + 1, start + width):
        by_row: dict = {}
        for (b, c), e in H.cores[i].entries.items():
            by_row.setdefault(b, []).append((c, sum(v * s.matrix for s, v in e.items())))
        nxt: dict = {}
        for (a, b), E in terms.items():
            for c, F in by_row.get(b, []):
                M = _kron(E, F)
                nxt[(a, c)] = nxt[(a, c)] + M if (a, c) in nxt else M
        terms = nxt
    return terms


def _kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a[:, None, :, None] * b[None, :, None, :]).reshape(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1])


def _popcount(p: int) -> int:
    return bin(p).count("1")


class LocalProblem:
    """Effective operator on ``width`` neighbouring cores, block-diagonal in sectors."""

    def __init__(self, H: SymMPO, rho_left: dict, rho_right: dict, Lenv: dict, Renv: dict, start: int, width: int):
        self.width = width
        self.fin = H.fluxes[start]
        self.terms = _site_terms(H, start, width)
        self.Lenv, self.Renv = Lenv, Renv
        self.keys = []
        self.shapes = {}
        self.offsets = {}
        pos = 0
        for p in range(2**width):
            for n, rows in rho_left.items():
                cols = rho_right.get(n + _popcount(p), 0)
                if rows and cols:
                    key = (p, n)
                    self.keys.append(key)
                    self.shapes[key] = (rows, cols)
                    self.offsets[key] = pos
                    pos += rows * cols
        self.dim = pos

    def _pieces(self):
        for (a, c), E in self.terms.items():
            La, Rc = self.Lenv.get(a), self.Renv.get(c)
            if not La or not Rc:
                continue
            fa = self.fin[a]
            for (p, n) in self.keys:
                Lm = La.get(n)
                Rm = Rc.get(n + _popcount(p))
                if Lm is None or Rm is None:
                    continue
                for q in np.flatnonzero(E[:, p]):
                    out = (int(q), n + fa)
                    if out in self.offsets:
                        yield out, (p, n), E[q, p], Lm, Rm

    def dense(self) -> np.ndarray:
        M = np.zeros((self.dim, self.dim))
        for out, inp, w, Lm, Rm in self._pieces():
            r0, c0 = self.offsets[out], self.offsets[inp]
            ro, co = self.shapes[out]
            ri, ci = self.shapes[inp]
            M[r0 : r0 + ro * co, c0 : c0 + ri * ci] += w * _kron(Lm, Rm)
        return M

    def matvec(self, v: np.ndarray) -> np.ndarray:
        blocks = self.unpack(v)
        out = np.zeros(self.dim)
        for o, inp, w, Lm, Rm in self._pieces():
            r0 = self.offsets[o]
            ro, co = self.shapes[o]
            out[r0 : r0 + ro * co] += (w * (Lm @ blocks[inp] @ Rm.T)).ravel()
        return out

    def pack(self, blocks: dict) -> np.ndarray:
        v = np.zeros(self.dim)
        for key in self.keys:
            if key in blocks:
                r0 = self.offsets[key]
                v[r0 : r0 + blocks[key].size] = blocks[key].ravel()
        return v

    def unpack(self, v: np.ndarray) -> dict:
        return {k: v[self.offsets[k] : self.offsets[k] + np.prod(self.shapes[k])].reshape(self.shapes[k]) for k in self.keys}

    def lowest(self, cfg: SolverConfig, guess: np.ndarray | None = None):
        if self.dim == 0:
            raise SectorError("empty local space")
        if self.dim <= cfg.dense_limit:
            M = self.dense()
            vals, vecs = scipy.linalg.eigh(0.5 * (M + M.T))
            return float(vals[0]), vecs[:, 0]
        op = scipy.sparse.linalg.LinearOperator((self.dim, self.dim), matvec=self.matvec, dtype=float)
        vals, vecs = scipy.sparse.linalg.eigsh(
            op, k=1, which="SA", v0=guess, tol=cfg.lanczos_tol, maxiter=cfg.lanczos_maxiter * self.dim
        )
        return float(vals[0]), vecs[:, 0]


def _site_blocks(x: BlockMPS, i: int) -> dict:
    return {(alpha, n): b for alpha in (0, 1) for n, b in x.cores[i].blocks(alpha).items()}


def _two_site_blocks(x: BlockMPS, i: int) -> dict:
    out = {}
    for alpha in (0, 1):
        for n, A in x.cores[i].blocks(alpha).items():
            for beta in (0, 1):
                B = x.cores[i + 1].blocks(beta).get(n + alpha)
                if B is not None:
                    key = (2 * alpha + beta, n)
                    out[key] = out[key] + A @ B if key in out else A @ B
    return out


def _set_site(x: BlockMPS, i: int, blocks: dict) -> None:
    core = BlockCore()
    for (alpha, n), b in blocks.items():
        core.blocks(alpha)[n] = b
    x.cores[i] = core


def _move_right(x: BlockMPS, i: int) -> None:
    """QR of core ``i`` per right sector; ``R`` goes into core ``i + 1``."""
    core, nxt = x.cores[i], x.cores[i + 1]
    for m, cols in x.rho[i + 1].items():
        if cols == 0:
            continue
        r0, r1 = x.rho[i].get(m, 0), x.rho[i].get(m - 1, 0)
        stacked = np.vstack([core.unocc.get(m, np.zeros((r0, cols))), core.occ.get(m - 1, np.zeros((r1, cols)))])
        if stacked.shape[0] < cols:
            raise SectorError(f"bond {i + 1}, sector {m}: {cols} columns but only {stacked.shape[0]} rows")
        q, r = _qr(stacked)
        if m in core.unocc:
            core.unocc[m] = q[:r0]
        if m - 1 in core.occ:
            core.occ[m - 1] = q[r0:]
        for blocks in (nxt.unocc, nxt.occ):
            if m in blocks:
                blocks[m] = r @ blocks[m]


def _move_left(x: BlockMPS, i: int) -> None:
    """LQ of core ``i`` per left sector; ``L`` goes into core ``i - 1``."""
    core, prev = x.cores[i], x.cores[i - 1]
    for n, rows in x.rho[i].items():
        if rows == 0:
            continue
        c0, c1 = x.rho[i + 1].get(n, 0), x.rho[i + 1].get(n + 1, 0)
        joined = np.hstack([core.unocc.get(n, np.zeros((rows, c0))), core.occ.get(n, np.zeros((rows, c1)))])
        if joined.shape[1] < rows:
            raise SectorError(f"bond {i}, sector {n}: {rows} rows but only {joined.shape[1]} columns")
        q, r = _qr(joined.T)
        if n in core.unocc:
            core.unocc[n] = q.T[:, :c0]
        if n in core.occ:
            core.occ[n] = q.T[:, c0:]
        if n in prev.unocc:
            prev.unocc[n] = prev.unocc[n] @ r.T
        if n - 1 in prev.occ:
            prev.occ[n - 1] = prev.occ[n - 1] @ r.T


def _prepare(x0: BlockMPS) -> BlockMPS:
    """Normalized, right-orthogonal start vector with two-sided consistent sizes."""
    _, V = gauge_pair(normalize(x0))
    V = V.copy()
    V.orth = None
    return V


def _sweep_finish(H, x, it, trace, cfg) -> bool:
    rho, g, _ = _residual(H, x)
    res = stable_norm(g) / stable_norm(x)
    trace.append(_row(it, rho, res, x))
    return res <= cfg.tol


def _als_step(H, x, i, L, R, cfg) -> float:
    prob = LocalProblem(H, x.rho[i], x.rho[i + 1], L[i], R[i + 1], i, 1)
    energy, vec = prob.lowest(cfg, prob.pack(_site_blocks(x, i)))
    _set_site(x, i, prob.unpack(vec))
    return energy


def als_one_site(H: SymMPO, x0: BlockMPS, cfg: SolverConfig | None = None):
    """One-site sweeps with fixed block sizes.

    Returns ``(x, trace, local_energies)``; ``local_energies`` holds every
    sub-step eigenvalue, which is non-increasing up to solver tolerance.
    """
    cfg = cfg or SolverConfig()
    x = _prepare(x0)
    K = x.K
    R = right_environments(H, x)
    L = left_environments(H, x, 0) + [None] * K
    local_energies = []
    trace = []
    if _sweep_finish(H, x, 0, trace, cfg):
        return x, trace, local_energies
    for sweep in range(1, cfg.max_iter + 1):
        for i in range(K - 1):
            local_energies.append(_als_step(H, x, i, L, R, cfg))
            _move_right(x, i)
            L[i + 1] = _env_left_step(L[i], H.cores[i], H.fluxes[i], H.fluxes[i + 1], x.cores[i], x.cores[i])
        for i in range(K - 1, 0, -1):
            local_energies.append(_als_step(H, x, i, L, R, cfg))
            _move_left(x, i)
            R[i] = _env_right_step(R[i + 1], H.cores[i], H.fluxes[i], H.fluxes[i + 1], x.cores[i], x.cores[i])
        if K == 1:
            local_energies.append(_als_step(H, x, 0, L, R, cfg))
        x = BlockMPS(x.K, x.N, x.rho, x.cores)
        if _sweep_finish(H, x, sweep, trace, cfg):
            break
    return x, trace, local_energies


def _split(theta: dict, rho_left: dict, rho_right: dict, rho_mid_range, cfg: SolverConfig, left_orth: bool):
    """Sector SVDs of the merged two-site blocks with global ``eps`` / rank truncation."""
    mats, spectra, factors = {}, {}, {}
    for m in rho_mid_range:
        r0, r1 = rho_left.get(m, 0), rho_left.get(m - 1, 0)
        c0, c1 = rho_right.get(m, 0), rho_right.get(m + 1, 0)
        if (r0 + r1) == 0 or (c0 + c1) == 0:
            continue
        M = np.zeros((r0 + r1, c0 + c1))
        for alpha, rows, n in ((0, slice(0, r0), m), (1, slice(r0, r0 + r1), m - 1)):
            for beta, cols in ((0, slice(0, c0)), (1, slice(c0, c0 + c1))):
                blk = theta.get((2 * alpha + beta, n))
                if blk is not None:
                    M[rows, cols] = blk
        u, s, vt = _svd(M)
        mats[m] = (r0, r1, c0, c1)
        spectra[m] = s
        factors[m] = (u, s, vt)
    pool = sorted(((float(v), m, j) for m, s in spectra.items() for j, v in enumerate(s)), reverse=True)
    total = math.sqrt(sum(v * v for v, _, _ in pool))
    keep_count = len(pool)
    if cfg.eps is not None:
        tail = 0.0
        budget = (cfg.eps * total) ** 2
        while keep_count > 1 and tail + pool[keep_count - 1][0] ** 2 <= budget:
            tail += pool[keep_count - 1][0] ** 2
            keep_count -= 1
    if cfg.max_rank is not None:
        keep_count = min(keep_count, cfg.max_rank)
    kept = {m: 0 for m in spectra}
    for _, m, _ in pool[:keep_count]:
        kept[m] += 1
    left, right, mid = {}, {}, {}
    for m, (u, s, vt) in factors.items():
        k = kept[m]
        mid[m] = k
        if k == 0:
            continue
        r0, r1, c0, c1 = mats[m]
        u, s, vt = u[:, :k], s[:k], vt[:k]
        if left_orth:
            a, b = u, s[:, None] * vt
        else:
            a, b = u * s, vt
        if r0:
            left[(0, m)] = a[:r0]
        if r1:
            left[(1, m - 1)] = a[r0:]
        if c0:
            right[(0, m)] = b[:, :c0]
        if c1:
            right[(1, m)] = b[:, c0:]
    return left, right, mid


def dmrg_two_site(H: SymMPO, x0: BlockMPS, cfg: SolverConfig | None = None):
    """Two-site sweeps; bond sectors between the pair adapt through the truncated split.

    Returns ``(x, trace, local_energies)``.
    """
    cfg = cfg or SolverConfig()
    x = _prepare(x0)
    K, N = x.K, x.N
    if K < 2:
        return als_one_site(H, x0, cfg)
    R = right_environments(H, x)
    L = left_environments(H, x, 0) + [None] * K
    local_energies = []
    trace = []
    if _sweep_finish(H, x, 0, trace, cfg):
        return x, trace, local_energies
    positions = list(range(K - 1)) + list(range(K - 2, -1, -1))
    for sweep in range(1, cfg.max_iter + 1):
        for step, i in enumerate(positions):
            forward = step < K - 1
            prob = LocalProblem(H, x.rho[i], x.rho[i + 2], L[i], R[i + 2], i, 2)
            energy, vec = prob.lowest(cfg, prob.pack(_two_site_blocks(x, i)))
            local_energies.append(energy)
            theta = prob.unpack(vec)
            left, right, mid = _split(theta, x.rho[i], x.rho[i + 2], bm.sector_range(K, N, i + 1), cfg, forward)
            rho = [dict(t) for t in x.rho]
            rho[i + 1] = {n: mid.get(n, 0) for n in bm.sector_range(K, N, i + 1)}
            cores = list(x.cores)
            cores[i] = BlockCore({n: b for (a, n), b in left.items() if a == 0}, {n: b for (a, n), b in left.items() if a == 1})
            cores[i + 1] = BlockCore(
                {m: b for (a, m), b in right.items() if a == 0}, {m: b for (a, m), b in right.items() if a == 1}
            )
            x = BlockMPS(K, N, rho, cores)
            if forward:
                L[i + 1] = _env_left_step(L[i], H.cores[i], H.fluxes[i], H.fluxes[i + 1], x.cores[i], x.cores[i])
            else:
                R[i + 1] = _env_right_step(R[i + 2], H.cores[i + 1], H.fluxes[i + 1], H.fluxes[i + 2], x.cores[i + 1], x.cores[i + 1])
        if _sweep_finish(H, x, sweep, trace, cfg):
            break
    return x, trace, local_energies
