"""Reproducible experiments behind the command-line driver.

Each ``run_*`` function returns an :class:`ExperimentReport` whose rows depend
only on the parameters and the seed.  Wall time is kept out of the rows.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field

import numpy as np

from . import block_mps as bm
from . import dense_oracle as do
from . import eigensolvers as es
from . import mps_full as mf
from . import operator_mpo as om
from . import symbolic_ops as so
from . import serialization
from ._validation import SectorError, ValidationError, check_even_order, check_particle_count
from .block_mps import BlockMPS
from .mps_full import FullMPS

RNG_ALGORITHM = "numpy.random.PCG64"
APPLY_EPS = (1e-16, 1e-14, 1e-12, 1e-10, 1e-8, 1e-6)
ROUNDING_EXPONENTS = tuple(range(0, 51))
SOLVERS = ("gd", "rgd", "als", "dmrg2")


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


@dataclass
class ExperimentReport:
    name: str
    params: dict
    columns: list
    rows: list = field(default_factory=list)
    seed: int | None = None
    summary: dict = field(default_factory=dict)
    wall_time: float = 0.0

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for row in self.rows:
            writer.writerow([_cell(v) for v in row])
        return buf.getvalue()

    def to_json(self) -> str:
        doc = {
            "experiment": self.name,
            "params": self.params,
            "seed": self.seed,
            "rng": RNG_ALGORITHM,
            "columns": self.columns,
            "rows": [[_plain(v) for v in row] for row in self.rows],
            "summary": {k: _plain(v) for k, v in self.summary.items()},
            "wall_time": self.wall_time,
        }
        return json.dumps(doc, indent=1)


def _plain(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (list, tuple)):
        return [_plain(a) for a in v]
    return v


def _cell(v) -> str:
    v = _plain(v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _timed(fn):
    def wrapper(*args, **kwargs):
        start = time.perf_counter()
        report = fn(*args, **kwargs)
        report.wall_time = time.perf_counter() - start
        return report

    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


# ---------------------------------------------------------------- operator ranks


def constructed_bound(op: str, K: int) -> int:
    return K + 2 if op == "one" else K * K // 2 + 3 * K // 2 + 2


@_timed
def run_ranks(K: int, seed: int = 0, banded: int | None = None, local: int | None = None) -> ExperimentReport:
    """Rank profiles of the one- and two-particle MPOs.

    ``banded`` restricts the one-body coefficients to bandwidth ``d`` and
    ``local`` the two-body ones to index spread ``d``.
    """
    check_even_order(K)
    if not 4 <= K <= 40:
        raise ValidationError(f"ranks experiment needs 4 <= K <= 40, got {K}")
    rng = make_rng(seed)
    T = om.random_one_body(K, rng, bandwidth=banded)
    V = om.random_two_body(K, rng, locality=local)
    report = ExperimentReport(
        "ranks",
        {"K": K, "banded": banded, "local": local},
        ["operator", "k", "r_constructed", "r_compressed", "r_symbolic"],
        seed=seed,
    )
    for op, mpo, program in (("one", om.build_S(T), so.sym_from_onebody(T)), ("two", om.build_D(V), so.sym_from_twobody(V))):
        built = mpo.ranks
        compressed = om.mpo_compress(mpo).ranks
        symbolic = so.sym_compress(program).ranks
        if max(built) > constructed_bound(op, K):
            raise ValidationError(f"{op}-particle construction exceeds its rank bound")
        if any(c > b for c, b in zip(compressed, built)) or any(s > b for s, b in zip(symbolic, built)):
            raise ValidationError(f"{op}-particle compression increased a rank")
        for k, (b, c, s) in enumerate(zip(built, compressed, symbolic), start=1):
            report.rows.append([op, k, b, c, s])
        report.summary[f"{op}_center_constructed"] = built[K // 2 - 1]
        report.summary[f"{op}_center_compressed"] = compressed[K // 2 - 1]
    return report


# ---------------------------------------------------------------- rounding stability


def _random_orthogonal(r: int, rng) -> np.ndarray:
    q, rr = np.linalg.qr(rng.standard_normal((r, r)))
    return q * np.sign(np.diag(rr))


def rounding_tensor(K: int, N: int, eps: float, rng_seed: int):
    """Size-1-block tensor with centre singular values ``6, 5, ..., 1, 1 - eps``.

    Returns the block form and a full-format copy in a random orthogonal
    gauge, which hides the sector structure from the full-format SVD.
    """
    check_even_order(K)
    check_particle_count(N, K)
    rng = make_rng(rng_seed)
    x = bm.random_block_mps(K, N, 1, rng)
    half = K // 2
    left = bm.orthogonalize_block(x, "left")
    right = bm.orthogonalize_block(x, "right")
    if left.rho != right.rho:
        raise SectorError("orthogonalization changed sector sizes")
    sectors = sorted(n for n, s in left.rho[half].items() if s)
    sigma = list(range(len(sectors) - 1, 0, -1)) + [1.0 - eps]
    sigma = [float(s) for s in sigma]
    cores = [c.copy() for c in left.cores[:half]] + [c.copy() for c in right.cores[half:]]
    centre = cores[half - 1]
    for n, s in zip(sectors, sigma):
        for occupied in (0, 1):
            blocks = centre.blocks(occupied)
            if n - occupied in blocks:
                blocks[n - occupied] = blocks[n - occupied] * s
    block = BlockMPS(K, N, left.rho, cores)
    full = bm.to_full(block).cores
    for k in range(K - 1):
        q = _random_orthogonal(full[k].shape[2], rng)
        full[k] = np.einsum("iaj,jk->iak", full[k], q)
        full[k + 1] = np.einsum("ji,jak->iak", q, full[k + 1])
    return block, FullMPS(full), sorted(sigma, reverse=True)


def full_particle_expectation(x: FullMPS) -> float:
    denom = mf.inner(x, x)
    if denom == 0.0:
        raise ValidationError("particle expectation of the zero tensor is undefined")
    total = 0.0
    for i in range(x.order):
        cores = list(x.cores)
        masked = cores[i].copy()
        masked[:, 0, :] = 0.0
        cores[i] = masked
        total += mf.inner(x, FullMPS(cores))
    return total / denom


@_timed
def run_rounding(K: int = 20, N: int = 6, seed: int = 0, exponents=ROUNDING_EXPONENTS) -> ExperimentReport:
    """Particle-number drift after truncating one rank, block vs full format."""
    report = ExperimentReport(
        "rounding",
        {"K": K, "N": N, "exponents": list(exponents)},
        ["exponent", "eps", "sigma_gap", "block_deviation", "full_deviation"],
        seed=seed,
    )
    target = None
    for e in exponents:
        eps = 2.0 ** (-e)
        block, full, sigma = rounding_tensor(K, N, eps, seed)
        rank = len(sigma) - 1
        target = [rank] * (K - 1)
        yb = bm.round_block(block, ranks=target)
        bm.check_sector_caps(yb)
        yf = mf.round_mps(full, ranks=target)
        gap = abs(sigma[-2] - sigma[-1])
        report.rows.append([e, eps, gap, abs(bm.particle_expectation(yb) - N), abs(full_particle_expectation(yf) - N)])
    report.summary["block_max_deviation"] = max(r[3] for r in report.rows)
    report.summary["full_max_deviation"] = max(r[4] for r in report.rows)
    report.summary["target_rank"] = target[0] if target else None
    return report


# ---------------------------------------------------------------- output ranks after application


@_timed
def run_apply(K: int = 32, op: str = "one", eps_list=APPLY_EPS, seed: int = 0) -> ExperimentReport:
    """Apply the constructed MPO to a random normalized rank-1 MPS and round."""
    check_even_order(K)
    if op not in ("one", "two"):
        raise ValidationError(f"operator must be 'one' or 'two', got {op!r}")
    rng = make_rng(seed)
    mpo = om.build_S(om.random_one_body(K, rng)) if op == "one" else om.build_D(om.random_two_body(K, rng))
    x = mf.random_mps([2] * K, [1] * (K - 1), rng)
    x = mf.scale(x, 1.0 / mf.norm(x))
    y = om.apply_mpo(mpo, x)
    report = ExperimentReport(
        "apply",
        {"K": K, "op": op, "eps": [float(e) for e in eps_list]},
        ["eps", "k", "rank"],
        seed=seed,
    )
    for k, r in enumerate(y.ranks, start=1):
        report.rows.append(["none", k, r])
    form, spectrum = mf.tt_svd(y)
    total = float(np.sqrt(np.sum(spectrum[1] ** 2)))
    profiles = {}
    for eps in eps_list:
        z = mf.truncate(form, spectrum, eps=eps * total)
        profiles[float(eps)] = z.ranks
        for k, r in enumerate(z.ranks, start=1):
            report.rows.append([float(eps), k, r])
    report.summary["center_untruncated"] = y.ranks[K // 2 - 1]
    report.summary.update({f"center_{eps:g}": p[K // 2 - 1] for eps, p in profiles.items()})
    return report


# ---------------------------------------------------------------- ground states


def load_problem(path=None, preset: str | None = None, K: int = 8):
    """``(T, V)`` from a coefficient file or a named preset."""
    from .coefficients import read_coefficients

    if path is not None:
        coeffs = read_coefficients(path)
        return coeffs.T(), coeffs.V()
    if preset == "hopping-chain":
        return om.hopping_chain(K).T, None
    raise ValidationError(f"unknown preset {preset!r}")


def build_program(T, V=None) -> so.SymMPO:
    program = so.sym_from_onebody(T)
    if V is not None:
        program = so.sym_add(program, so.sym_from_twobody(V))
    return so.sym_compress(program)


def run_solver(name: str, H, x0: BlockMPS, cfg: es.SolverConfig):
    if name == "gd":
        return es.gradient_descent(H, x0, cfg)
    if name == "rgd":
        return es.riemannian_gd(H, x0, cfg)
    if name == "als":
        return es.als_one_site(H, x0, cfg)[:2]
    if name == "dmrg2":
        return es.dmrg_two_site(H, x0, cfg)[:2]
    raise ValidationError(f"unknown solver {name!r}; choose from {SOLVERS}")


def single_particle_energy(T, N: int) -> float:
    return float(np.sum(np.linalg.eigvalsh(T)[:N]))


@_timed
def run_groundstate(
    T,
    V,
    N: int,
    solver: str = "als",
    seed: int = 0,
    check: bool = False,
    max_iter: int = 200,
    tol: float = 1e-8,
    init_size=None,
    check_tol: float = 1e-6,
) -> ExperimentReport:
    """Ground-state solve with an optional dense (or single-particle) cross-check."""
    T = np.asarray(T, dtype=float)
    K = T.shape[0]
    check_particle_count(N, K)
    if solver not in SOLVERS:
        raise ValidationError(f"unknown solver {solver!r}; choose from {SOLVERS}")
    H = build_program(T, V)
    if init_size is None:
        init_size = 1 if solver == "dmrg2" else "max"
    x0 = bm.random_block_mps(K, N, init_size, make_rng(seed))
    cfg = es.SolverConfig(max_iter=max_iter, tol=tol, seed=seed)
    x, trace = run_solver(solver, H, x0, cfg)
    energy = es.rayleigh_quotient(H, x)
    drift = abs(bm.particle_expectation(x) - N)
    if drift > 1e-10:
        raise SectorError(f"final state has particle expectation off by {drift:.3e}")
    report = ExperimentReport(
        "groundstate",
        {"K": K, "N": N, "solver": solver, "max_iter": max_iter, "tol": tol, "two_body": V is not None},
        ["iteration", "energy", "residual", "max_rank", "particle_expectation"],
        seed=seed,
    )
    for row in trace:
        report.rows.append([row.iteration, row.energy, row.residual, row.max_rank, row.particle_expectation])
    report.summary.update(energy=energy, ranks=x.ranks, iterations=len(trace))
    if check:
        if V is None:
            reference = single_particle_energy(T, N)
        else:
            if K > 10:
                raise ValidationError("dense cross-check is limited to K <= 10")
            dense = do.brute_force_hamiltonian(T, V)
            reference = float(do.sector_diagonalize(dense, K, N)[0][0])
        report.summary.update(reference=reference, error=abs(energy - reference), passed=abs(energy - reference) <= check_tol)
    return report


# ---------------------------------------------------------------- format conversion


def stable_distance(a: FullMPS, b: FullMPS) -> float:
    diff = mf.orthogonalize(mf.add(a, mf.scale(b, -1.0)), "left")
    return float(np.linalg.norm(diff.cores[-1]))


def infer_particle_count(x: FullMPS) -> int:
    value = full_particle_expectation(x)
    return int(round(value))


@_timed
def run_convert(src, dst, to: str, N: int | None = None, tol: float = 1e-12) -> ExperimentReport:
    """Container conversion with a round-trip agreement check."""
    if to not in ("block", "full"):
        raise ValidationError(f"target must be 'block' or 'full', got {to!r}")
    x = serialization.load(src)
    if to == "block":
        if isinstance(x, BlockMPS):
            out = x
        else:
            n = infer_particle_count(x) if N is None else N
            out = bm.from_full(x, n)
        bm.check_sector_caps(out)
        reference = x if isinstance(x, FullMPS) else bm.to_full(x)
        image = bm.to_full(out)
    else:
        out = bm.to_full(x) if isinstance(x, BlockMPS) else x
        reference = out
        image = out
    scale = mf.norm(reference)
    error = stable_distance(image, reference) / scale if scale else 0.0
    if error > tol:
        raise ValidationError(f"conversion changed the tensor: relative error {error:.3e}")
    serialization.save(out, dst)
    report = ExperimentReport("convert", {"to": to}, ["k", "rank"], seed=None)
    for k, r in enumerate(out.ranks, start=1):
        report.rows.append([k, r])
    report.summary.update(kind=to, relative_error=error)
    if isinstance(out, BlockMPS):
        report.summary["N"] = out.N
        report.summary["sectors"] = [{str(n): s for n, s in t.items()} for t in out.rho]
    return report
