"""Plain (non-block) matrix product states and operators.

MPS cores have shape ``(r_left, n, r_right)`` and MPO cores
``(r_left, n_out, n_in, r_right)``.  Chain ends have rank 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from ._validation import ValidationError

MAX_EVALUATE_ORDER = 12
ORTH_FLAGS = (None, "left", "right", "left-svd", "right-svd")


class TruncationError(ValidationError):
    """Raised when a requested truncation would remove the whole tensor."""


@dataclass
class FullMPS:
    cores: list[np.ndarray]
    orth: str | None = None

    def __post_init__(self):
        self.cores = [np.asarray(c, dtype=float) for c in self.cores]
        if not self.cores:
            raise ValidationError("an MPS needs at least one core")
        if self.orth not in ORTH_FLAGS:
            raise ValidationError(f"unknown orthogonality flag {self.orth!r}")
        for c in self.cores:
            if c.ndim != 3:
                raise ValidationError(f"MPS cores must be order 3, got shape {c.shape}")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[2] != 1:
            raise ValidationError("boundary ranks must be 1")
        for a, b in zip(self.cores, self.cores[1:]):
            if a.shape[2] != b.shape[0]:
                raise ValidationError(f"rank mismatch between cores: {a.shape} then {b.shape}")

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> list[int]:
        return [c.shape[2] for c in self.cores[:-1]]

    @property
    def dims(self) -> list[int]:
        return [c.shape[1] for c in self.cores]

    def copy(self) -> "FullMPS":
        return FullMPS([c.copy() for c in self.cores], self.orth)


@dataclass
class FullMPO:
    cores: list[np.ndarray]

    def __post_init__(self):
        self.cores = [np.asarray(c, dtype=float) for c in self.cores]
        for c in self.cores:
            if c.ndim != 4:
                raise ValidationError(f"MPO cores must be order 4, got shape {c.shape}")
        if self.cores[0].shape[0] != 1 or self.cores[-1].shape[3] != 1:
            raise ValidationError("boundary ranks must be 1")
        for a, b in zip(self.cores, self.cores[1:]):
            if a.shape[3] != b.shape[0]:
                raise ValidationError(f"rank mismatch between MPO cores: {a.shape} then {b.shape}")

    @property
    def order(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> list[int]:
        return [c.shape[3] for c in self.cores[:-1]]


@dataclass
class SingularSpectrum:
    """Descending singular values for bonds ``1..K-1``."""

    values: list[np.ndarray] = field(default_factory=list)

    def __getitem__(self, bond: int) -> np.ndarray:
        return self.values[bond - 1]

    def __len__(self):
        return len(self.values)


def evaluate(mps: FullMPS) -> np.ndarray:
    """Dense vector ``tau(X_1, ..., X_K)`` in the row-major basis ordering."""
    if mps.order > MAX_EVALUATE_ORDER:
        raise ValidationError(f"refusing to evaluate K={mps.order} > {MAX_EVALUATE_ORDER} densely")
    out = np.ones((1, 1))
    for core in mps.cores:
        r0, n, r1 = core.shape
        out = (out @ core.reshape(r0, n * r1)).reshape(-1, r1)
    return out.ravel()


def evaluate_mpo(mpo: FullMPO) -> np.ndarray:
    if mpo.order > MAX_EVALUATE_ORDER // 2 + 1:
        raise ValidationError(f"refusing to evaluate an MPO with K={mpo.order} densely")
    out = np.ones((1, 1, 1))
    for core in mpo.cores:
        # out: (rows, cols, r) -> contract r with core
        rows, cols, r = out.shape
        _, na, nb, r1 = core.shape
        nxt = np.einsum("xyr,rabs->xaybs", out, core)
        out = nxt.reshape(rows * na, cols * nb, r1)
    return out[:, :, 0]


def strong_kronecker(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Chain two cores: slice ``(alpha_1, alpha_2)`` is ``a[:, alpha_1, :] @ b[:, alpha_2, :]``.

    Works for MPS cores (order 3) and for MPO cores (order 4, mode pairs merged).
    """
    if a.shape[-1] != b.shape[0]:
        raise ValidationError(f"inner ranks differ: {a.shape[-1]} vs {b.shape[0]}")
    if a.ndim == 3 and b.ndim == 3:
        out = np.einsum("iaj,jbk->iabk", a, b)
        return out.reshape(a.shape[0], a.shape[1] * b.shape[1], b.shape[2])
    if a.ndim == 4 and b.ndim == 4:
        out = np.einsum("iabj,jcdk->iacbdk", a, b)
        return out.reshape(a.shape[0], a.shape[1] * b.shape[1], a.shape[2] * b.shape[2], b.shape[3])
    raise ValidationError("strong_kronecker needs two order-3 or two order-4 cores")


def mode_core_product(m: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Operator core applied to state core.

    The output bond index is ``j_x * r_m + j_m``: the state index is the slow one.
    """
    if m.ndim != 4 or x.ndim != 3:
        raise ValidationError("mode_core_product needs an order-4 and an order-3 core")
    if m.shape[2] != x.shape[1]:
        raise ValidationError(f"mode sizes differ: {m.shape[2]} vs {x.shape[1]}")
    out = np.einsum("pabq,ibj->ipajq", m, x)
    rx0, rm0, n, rx1, rm1 = out.shape
    return out.reshape(rx0 * rm0, n, rx1 * rm1)


def _qr(a: np.ndarray):
    """Householder QR (LAPACK geqrf) with the economic shape."""
    return scipy.linalg.qr(a, mode="economic")


def _svd(a: np.ndarray):
    """SVD with each left singular vector's largest-magnitude entry made positive."""
    u, s, vt = scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesdd")
    if u.size:
        pivots = np.argmax(np.abs(u), axis=0)
        signs = np.sign(u[pivots, np.arange(u.shape[1])])
        signs[signs == 0] = 1.0
        u = u * signs
        vt = vt * signs[:, None]
    order = np.argsort(-s, kind="stable")
    return u[:, order], s[order], vt[order]


def orthogonalize(mps: FullMPS, side: str = "left") -> FullMPS:
    """QR sweep producing a left- or right-orthogonal representation."""
    cores = [c.copy() for c in mps.cores]
    K = len(cores)
    if side == "left":
        for k in range(K - 1):
            r0, n, r1 = cores[k].shape
            q, r = _qr(cores[k].reshape(r0 * n, r1))
            cores[k] = q.reshape(r0, n, q.shape[1])
            cores[k + 1] = np.einsum("ij,jbk->ibk", r, cores[k + 1])
    elif side == "right":
        for k in range(K - 1, 0, -1):
            r0, n, r1 = cores[k].shape
            q, r = _qr(cores[k].reshape(r0, n * r1).T)
            cores[k] = q.T.reshape(q.shape[1], n, r1)
            cores[k - 1] = np.einsum("ibj,jk->ibk", cores[k - 1], r.T)
    else:
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    return FullMPS(cores, side)


def norm(mps: FullMPS) -> float:
    return float(np.sqrt(max(inner(mps, mps), 0.0)))


def inner(x: FullMPS, y: FullMPS) -> float:
    if x.order != y.order:
        raise ValidationError("orders differ")
    env = np.ones((1, 1))
    for a, b in zip(x.cores, y.cores):
        env = np.einsum("ij,iak,jal->kl", env, a, b, optimize=True)
    return float(env[0, 0])


def zero_mps(dims) -> FullMPS:
    return FullMPS([np.zeros((1, n, 1)) for n in dims])


def tt_svd(mps: FullMPS, side: str = "right") -> tuple[FullMPS, SingularSpectrum]:
    """TT-SVD form.

    ``side="right"``: cores right of every bond are orthonormal and the left
    partial tensors are orthogonal with norms equal to the singular values.
    ``side="left"`` is the mirror image.
    """
    if side not in ("left", "right"):
        raise ValidationError(f"side must be 'left' or 'right', got {side!r}")
    if norm(mps) == 0.0:
        return zero_mps(mps.dims), SingularSpectrum([np.zeros(0) for _ in range(mps.order - 1)])
    K = mps.order
    spectrum: list[np.ndarray] = [np.zeros(0)] * (K - 1)
    if side == "right":
        cores = orthogonalize(mps, "left").cores
        for k in range(K - 1, 0, -1):
            r0, n, r1 = cores[k].shape
            u, s, vt = _svd(cores[k].reshape(r0, n * r1))
            cores[k] = vt.reshape(len(s), n, r1)
            cores[k - 1] = np.einsum("ibj,jk->ibk", cores[k - 1], u * s)
            spectrum[k - 1] = s
        return FullMPS(cores, "right-svd"), SingularSpectrum(spectrum)
    cores = orthogonalize(mps, "right").cores
    for k in range(K - 1):
        r0, n, r1 = cores[k].shape
        u, s, vt = _svd(cores[k].reshape(r0 * n, r1))
        cores[k] = u.reshape(r0, n, len(s))
        cores[k + 1] = np.einsum("ij,jbk->ibk", s[:, None] * vt, cores[k + 1])
        spectrum[k] = s
    return FullMPS(cores, "left-svd"), SingularSpectrum(spectrum)


def select_discarded(spectrum: SingularSpectrum, eps: float) -> list[int]:
    """Number of trailing singular values removed per bond, chosen globally.

    The smallest values over all bonds are taken while their squared sum stays
    within ``eps**2``; ties are broken by bond and then in-bond position.
    """
    pool = []
    for bond, s in enumerate(spectrum.values):
        for j, value in enumerate(s):
            pool.append((float(value), bond, j))
    pool.sort(key=lambda t: (t[0], t[1], -t[2]))
    drop = [0] * len(spectrum.values)
    budget = eps * eps
    used = 0.0
    for value, bond, j in pool:
        if used + value * value > budget:
            break
        # only the current last remaining value of a bond may go
        if j != len(spectrum.values[bond]) - 1 - drop[bond]:
            continue
        used += value * value
        drop[bond] += 1
    return drop


def truncate(mps: FullMPS, spectrum: SingularSpectrum, eps: float | None = None, ranks=None) -> FullMPS:
    """Drop trailing singular directions of a TT-SVD form simultaneously at all bonds."""
    if mps.orth not in ("right-svd", "left-svd"):
        raise ValidationError("truncate needs a TT-SVD form (call tt_svd first)")
    K = mps.order
    sizes = [len(s) for s in spectrum.values]
    if eps is not None:
        total = float(np.sqrt(np.sum(spectrum.values[0] ** 2))) if K > 1 else norm(mps)
        if eps >= total:
            raise TruncationError(f"eps={eps:g} >= norm {total:g}: would truncate to zero")
        drop = select_discarded(spectrum, eps)
        keep = [n - d for n, d in zip(sizes, drop)]
    elif ranks is not None:
        ranks = list(ranks)
        if len(ranks) != K - 1:
            raise ValidationError(f"need {K - 1} target ranks, got {len(ranks)}")
        if min(ranks, default=1) < 1:
            raise TruncationError("target ranks must be positive")
        keep = [min(n, r) for n, r in zip(sizes, ranks)]
    else:
        return mps.copy()
    cores = [c.copy() for c in mps.cores]
    for b, r in enumerate(keep):
        cores[b] = cores[b][:, :, :r]
        cores[b + 1] = cores[b + 1][:r]
    return FullMPS(cores, None)


def round_mps(mps: FullMPS, eps: float = 0.0, ranks=None, relative: bool = False) -> FullMPS:
    """TT-SVD followed by truncation (convenience wrapper)."""
    form, spectrum = tt_svd(mps, "right")
    if relative and eps:
        eps = eps * norm(mps)
    return truncate(form, spectrum, eps=eps if ranks is None else None, ranks=ranks)


def from_dense(x: np.ndarray, dims) -> FullMPS:
    """Exact TT-SVD of a dense tensor (zero singular values removed)."""
    dims = list(dims)
    x = np.asarray(x, dtype=float).reshape(dims)
    cores = []
    rest = x.reshape(1, -1)
    r = 1
    scale = np.abs(x).max(initial=0.0)
    for n in dims[:-1]:
        mat = rest.reshape(r * n, -1)
        u, s, vt = _svd(mat)
        keep = max(1, int(np.sum(s > 1e-14 * max(scale, 1e-300))))
        cores.append(u[:, :keep].reshape(r, n, keep))
        rest = s[:keep, None] * vt[:keep]
        r = keep
    cores.append(rest.reshape(r, dims[-1], 1))
    return FullMPS(cores)


def random_mps(dims, ranks, rng: np.random.Generator) -> FullMPS:
    full = [1, *ranks, 1]
    return FullMPS([rng.standard_normal((full[k], n, full[k + 1])) for k, n in enumerate(dims)])


def add(x: FullMPS, y: FullMPS) -> FullMPS:
    if x.dims != y.dims:
        raise ValidationError("mode sizes differ")
    K = x.order
    if K == 1:
        return FullMPS([x.cores[0] + y.cores[0]])
    cores = []
    for k, (a, b) in enumerate(zip(x.cores, y.cores)):
        if k == 0:
            cores.append(np.concatenate([a, b], axis=2))
        elif k == K - 1:
            cores.append(np.concatenate([a, b], axis=0))
        else:
            c = np.zeros((a.shape[0] + b.shape[0], a.shape[1], a.shape[2] + b.shape[2]))
            c[: a.shape[0], :, : a.shape[2]] = a
            c[a.shape[0]:, :, a.shape[2]:] = b
            cores.append(c)
    return FullMPS(cores)


def scale(x: FullMPS, c: float) -> FullMPS:
    out = x.copy()
    out.cores[0] = out.cores[0] * c
    out.orth = None
    return out
