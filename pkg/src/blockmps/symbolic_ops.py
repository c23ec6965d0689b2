"""Matrix-free operator programs acting directly on block-sparse MPS.

A program is an MPO whose entries are linear combinations of *symbols*.  A
symbol is an elementary 2x2 matrix kind together with the particle-number
change (flux) of the partial operator left of its row and column bond.  The
flux fixes which sector an output block lands in, so applying a program to a
:class:`BlockMPS` never forms a dense core: each symbol moves, negates or
drops the blocks of one core.

Absent entries are the zero symbol.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import block_mps as bm
from ._validation import ValidationError, check_order, check_orbital
from .block_mps import BlockCore, BlockMPS
from .dense_oracle import ANNIHILATE, CREATE, IDENTITY, NUMBER, SIGN
from .mps_full import FullMPO
from .operator_mpo import (
    COMPRESS_TOL,
    ONE_BODY,
    TWO_BODY,
    OneBodyCoeffs,
    TwoBodyCoeffs,
    _column_basis,
    channel_automaton,
    channel_flux,
)

# "H" (a a*, the hole count) only arises in strings that are not normal ordered
KIND_MATRIX = {"I": IDENTITY, "S": SIGN, "N": NUMBER, "H": ANNIHILATE @ CREATE, "C": CREATE, "A": ANNIHILATE}
KIND_STEP = {"I": 0, "S": 0, "N": 0, "H": 0, "C": 1, "A": -1}


@dataclass(frozen=True)
class Symbol:
    kind: str
    f_in: int
    f_out: int
    name: str = field(default="", compare=False)

    def __post_init__(self):
        if self.kind not in KIND_MATRIX:
            raise ValidationError(f"unknown symbol kind {self.kind!r}")
        if self.f_out - self.f_in != KIND_STEP[self.kind]:
            raise ValidationError(f"{self.kind} cannot change flux {self.f_in} -> {self.f_out}")
        # an odd number of pending Jordan-Wigner strings is carried by S, an even one by I
        if self.kind == "I" and self.f_in % 2:
            raise ValidationError(f"identity carry with odd flux {self.f_in}")
        if self.kind == "S" and not self.f_in % 2:
            raise ValidationError(f"sign carry with even flux {self.f_in}")
        if not self.name:
            object.__setattr__(self, "name", _default_name(self.kind, self.f_in, self.f_out))

    @property
    def matrix(self) -> np.ndarray:
        return KIND_MATRIX[self.kind]


def _default_name(kind, f_in, f_out, position="mid") -> str:
    named = {
        ("N", 0, 0): "A*A",
        ("C", 0, 1): "A_l*",
        ("C", -1, 0): "A_r*",
        ("A", 0, -1): "A_l",
        ("A", 1, 0): "A_r",
        ("S", 1, 1): "S+",
        ("S", -1, -1): "S-",
    }
    if (kind, f_in, f_out) in named:
        return named[(kind, f_in, f_out)]
    if kind == "I" and f_in == 0:
        return {"left": "I_l", "right": "I_r"}.get(position, "I_m")
    sign = lambda f: f"{f:+d}"
    return f"{kind}[{sign(f_in)}>{sign(f_out)}]"


def make_symbol(kind: str, f_in: int, f_out: int, position: str = "mid") -> Symbol:
    return Symbol(kind, f_in, f_out, _default_name(kind, f_in, f_out, position))


# the alphabet used for one-particle programs
ALPHABET = {
    "I_l": make_symbol("I", 0, 0, "left"),
    "I_r": make_symbol("I", 0, 0, "right"),
    "A*A": make_symbol("N", 0, 0),
    "A_l*": make_symbol("C", 0, 1),
    "A_r*": make_symbol("C", -1, 0),
    "A_l": make_symbol("A", 0, -1),
    "A_r": make_symbol("A", 1, 0),
    "S+": make_symbol("S", 1, 1),
    "S-": make_symbol("S", -1, -1),
}


def classify(mat: np.ndarray, tol: float = 0.0):
    """``(sign, kind)`` with ``mat == sign * KIND_MATRIX[kind]``, or None for zero."""
    if not np.any(np.abs(mat) > tol):
        return None
    for kind, ref in KIND_MATRIX.items():
        for sign in (1.0, -1.0):
            if np.allclose(mat, sign * ref, atol=tol, rtol=0):
                return sign, kind
    raise ValidationError(f"local factor {mat.tolist()} is not a signed elementary matrix")


Entry = dict  # Symbol -> coefficient


@dataclass
class SymCore:
    rows: int
    cols: int
    entries: dict = field(default_factory=dict)  # (row, col) -> Entry

    def add(self, row: int, col: int, symbol: Symbol, coeff: float) -> None:
        if coeff == 0.0:
            return
        entry = self.entries.setdefault((row, col), {})
        entry[symbol] = entry.get(symbol, 0.0) + coeff
        if entry[symbol] == 0.0:
            del entry[symbol]
            if not entry:
                del self.entries[(row, col)]

    def symbols(self) -> set:
        return {s for e in self.entries.values() for s in e}


@dataclass
class SymMPO:
    """Symbolic cores plus flux labels for bonds ``0..K``."""

    cores: list
    fluxes: list

    def __post_init__(self):
        K = len(self.cores)
        check_order(K)
        if len(self.fluxes) != K + 1:
            raise ValidationError("need K+1 flux label lists")
        if list(self.fluxes[0]) != [0] or list(self.fluxes[K]) != [0]:
            raise ValidationError(f"terminal fluxes must be [0], got {self.fluxes[0]} and {self.fluxes[K]}")
        for k, core in enumerate(self.cores):
            if core.rows != len(self.fluxes[k]) or core.cols != len(self.fluxes[k + 1]):
                raise ValidationError(f"core {k + 1}: shape {(core.rows, core.cols)} does not match flux labels")
            for (a, b), entry in core.entries.items():
                for sym in entry:
                    if (sym.f_in, sym.f_out) != (self.fluxes[k][a], self.fluxes[k + 1][b]):
                        raise ValidationError(
                            f"core {k + 1}, entry {(a, b)}: symbol {sym.name} has flux "
                            f"{sym.f_in}->{sym.f_out}, bonds carry {self.fluxes[k][a]}->{self.fluxes[k + 1][b]}"
                        )

    @property
    def K(self) -> int:
        return len(self.cores)

    @property
    def ranks(self) -> list[int]:
        return [len(f) for f in self.fluxes[1:-1]]

    def copy(self) -> "SymMPO":
        cores = [SymCore(c.rows, c.cols, {k: dict(e) for k, e in c.entries.items()}) for c in self.cores]
        return SymMPO(cores, [list(f) for f in self.fluxes])


# ---------------------------------------------------------------- construction


def sym_string(ops, coeff: float, K: int) -> SymMPO:
    """Bond-dimension-1 program for ``coeff * op_1 op_2 ... op_m``.

    ``ops`` is a sequence of ``("C", i)`` / ``("A", i)`` with 1-based orbitals,
    applied right to left like an ordinary operator product.
    """
    check_order(K)
    ops = [(kind, check_orbital(i, K) - 1) for kind, i in ops]
    if any(kind not in ("C", "A") for kind, _ in ops):
        raise ValidationError("ladder operators are 'C' or 'A'")
    if sum(1 if kind == "C" else -1 for kind, _ in ops) != 0:
        raise ValidationError("operator string must preserve particle number")
    first_op = min((p for _, p in ops), default=K)
    last_op = max((p for _, p in ops), default=-1)
    cores, fluxes = [], [[0]]
    flux, total = 0, float(coeff)
    for m in range(K):
        local = IDENTITY
        for kind, p in ops:
            local = local @ (SIGN if m < p else KIND_MATRIX[kind] if m == p else IDENTITY)
        new_flux = flux + sum((1 if kind == "C" else -1) for kind, p in ops if p == m)
        fluxes.append([new_flux])
        found = classify(local)
        core = SymCore(1, 1)
        if found is None:
            total = 0.0
        else:
            sign, kind = found
            total *= sign
            position = "left" if m < first_op else "right" if m > last_op else "mid"
            core.add(0, 0, make_symbol(kind, flux, new_flux, position), 1.0)
        cores.append(core)
        flux = new_flux
    if total == 0.0:
        cores = [SymCore(1, 1) for _ in range(K)]
    else:
        cores[0].entries = {key: {s: c * total for s, c in e.items()} for key, e in cores[0].entries.items()}
    return SymMPO(cores, fluxes)


def sym_rank_one(creators, annihilators, coeff: float, K: int) -> SymMPO:
    """``coeff * a*_{D+} a_{D-}`` with ``a_D`` the increasing-index annihilator product.

    The creator part is the adjoint of ``a_{D+}``, i.e. creators in decreasing
    index order, matching :func:`dense_oracle.rank_one_operator`.
    """
    creators, annihilators = list(creators), list(annihilators)
    if len(creators) != len(annihilators) or len(creators) > 2:
        raise ValidationError("need equally many creators and annihilators, at most two each")
    for idx in (creators, annihilators):
        if len(set(idx)) != len(idx):
            raise ValidationError(f"repeated orbital in {idx}")
        for i in idx:
            check_orbital(i, K)
    ops = [("C", i) for i in sorted(creators, reverse=True)] + [("A", j) for j in sorted(annihilators)]
    return sym_string(ops, coeff, K)


def sym_identity(K: int, coeff: float = 1.0) -> SymMPO:
    return sym_string([], coeff, K)


def sym_add(a: SymMPO, b: SymMPO) -> SymMPO:
    if a.K != b.K:
        raise ValidationError(f"orders differ: {a.K} vs {b.K}")
    K = a.K
    cores = []
    for k, (x, y) in enumerate(zip(a.cores, b.cores)):
        row_shift = 0 if k == 0 else x.rows
        col_shift = 0 if k == K - 1 else x.cols
        rows = 1 if k == 0 else x.rows + y.rows
        cols = 1 if k == K - 1 else x.cols + y.cols
        core = SymCore(rows, cols)
        for (r, c), e in x.entries.items():
            for s, v in e.items():
                core.add(r, c, s, v)
        for (r, c), e in y.entries.items():
            for s, v in e.items():
                core.add(r + row_shift, c + col_shift, s, v)
        cores.append(core)
    fluxes = [[0]] + [list(a.fluxes[k]) + list(b.fluxes[k]) for k in range(1, K)] + [[0]]
    return SymMPO(cores, fluxes)


def sym_sum(programs) -> SymMPO:
    programs = list(programs)
    if not programs:
        raise ValidationError("empty sum")
    out = programs[0]
    for p in programs[1:]:
        out = sym_add(out, p)
    return out


def _automaton_program(pattern, K: int, coeff) -> SymMPO:
    auto = channel_automaton(pattern, K, coeff)
    centre = auto.centre
    lflux = [[channel_flux(pattern, key, True) for key in sorted(ch, key=ch.get)] for ch in auto.left]
    rflux = [[channel_flux(pattern, key, False) for key in sorted(ch, key=ch.get)] for ch in auto.right]
    lkeys = [sorted(ch, key=ch.get) for ch in auto.left]
    rkeys = [sorted(ch, key=ch.get) for ch in auto.right]

    def position(src, dst, outer):
        if src == dst == ("m", ()):
            return outer
        if src == dst == ("d",):
            return "right" if outer == "left" else "left"
        return "mid"

    cores = []
    for mode in range(centre):
        core = SymCore(len(lflux[mode]), len(lflux[mode + 1]))
        for row, col, mat, c in auto.left_moves[mode]:
            sign, kind = classify(mat)
            pos = position(lkeys[mode][row], lkeys[mode + 1][col], "left")
            core.add(row, col, make_symbol(kind, lflux[mode][row], lflux[mode + 1][col], pos), sign * c)
        cores.append(core)
    # absorb the coupling into the last left core
    last = cores[-1]
    mixed = SymCore(last.rows, auto.coupling.shape[1])
    rcentre = rflux[K - centre]
    for (row, col), entry in last.entries.items():
        for target in np.flatnonzero(auto.coupling[col]):
            weight = auto.coupling[col, target]
            for sym, v in entry.items():
                if sym.f_out != rcentre[target]:
                    raise ValidationError("coupling pairs channels of different flux")
                mixed.add(row, int(target), sym, v * weight)
    cores[-1] = mixed
    for mode in range(centre, K):
        t = K - mode - 1
        core = SymCore(len(rflux[t + 1]), len(rflux[t]))
        for col, row, mat, c in auto.right_moves[t]:
            sign, kind = classify(mat)
            pos = position(rkeys[t][col], rkeys[t + 1][row], "right")
            core.add(row, col, make_symbol(kind, rflux[t + 1][row], rflux[t][col], pos), sign * c)
        cores.append(core)
    fluxes = [lflux[b] for b in range(centre)] + [rflux[K - b] for b in range(centre, K + 1)]
    return SymMPO(cores, fluxes)


def sym_from_onebody(T) -> SymMPO:
    """Program for ``sum_ij t_ij a*_i a_j`` with the one-particle channel layout."""
    coeffs = T if isinstance(T, OneBodyCoeffs) else OneBodyCoeffs(T)
    if coeffs.K < 4:
        raise ValidationError("need K >= 4")
    table = coeffs.T
    return _automaton_program(ONE_BODY, coeffs.K, lambda idx: float(table[idx]))


def sym_from_twobody(V) -> SymMPO:
    """Program for the grouped two-particle sum over ``i1 < i2``, ``j1 < j2``."""
    coeffs = V if isinstance(V, TwoBodyCoeffs) else TwoBodyCoeffs(V)
    if coeffs.K < 4:
        raise ValidationError("need K >= 4")
    W = coeffs.grouped
    return _automaton_program(TWO_BODY, coeffs.K, lambda idx: float(W[idx]))


# ---------------------------------------------------------------- compression


def _features(core: SymCore, positions, by_column: bool):
    """Matrix with one column per bond index in ``positions`` over (other index, symbol)."""
    where = {p: j for j, p in enumerate(positions)}
    keys: dict = {}
    data = []
    for (r, c), entry in core.entries.items():
        mine, other = (c, r) if by_column else (r, c)
        if mine not in where:
            continue
        for sym, v in entry.items():
            key = keys.setdefault((other, sym), len(keys))
            data.append((key, where[mine], v))
    F = np.zeros((len(keys), len(positions)))
    for key, j, v in data:
        F[key, j] += v
    return F


def _reduce_bond(left: SymCore, right: SymCore, flux: list, tol: float, by_column: bool):
    """Keep an independent subset of bond indices and push the mixing onward."""
    groups: dict = {}
    for j, f in enumerate(flux):
        groups.setdefault(f, []).append(j)
    kept, mixing = [], {}
    for f, members in groups.items():
        F = _features(left if by_column else right, members, by_column)
        keep, mix = _column_basis(F, tol)
        for i, local in enumerate(keep):
            kept.append(members[local])
            mixing[members[local]] = {members[j]: mix[i, j] for j in np.flatnonzero(mix[i])}
    if not kept:
        kept, mixing = [0], {0: {}}
    kept.sort()
    index = {old: new for new, old in enumerate(kept)}
    r = len(kept)
    if by_column:
        new_left = SymCore(left.rows, r)
        for (a, b), e in left.entries.items():
            if b in index:
                for s, v in e.items():
                    new_left.add(a, index[b], s, v)
        new_right = SymCore(r, right.cols)
        by_row: dict = {}
        for (a, b), e in right.entries.items():
            by_row.setdefault(a, []).append((b, e))
        for old, weights in mixing.items():
            for j, w in weights.items():
                for b, e in by_row.get(j, []):
                    for s, v in e.items():
                        new_right.add(index[old], b, s, w * v)
    else:
        new_right = SymCore(r, right.cols)
        for (a, b), e in right.entries.items():
            if a in index:
                for s, v in e.items():
                    new_right.add(index[a], b, s, v)
        new_left = SymCore(left.rows, r)
        by_col: dict = {}
        for (a, b), e in left.entries.items():
            by_col.setdefault(b, []).append((a, e))
        for old, weights in mixing.items():
            for j, w in weights.items():
                for a, e in by_col.get(j, []):
                    for s, v in e.items():
                        new_left.add(a, index[old], s, w * v)
    return new_left, new_right, [flux[j] for j in kept]


def sym_compress(m: SymMPO, tol: float = COMPRESS_TOL) -> SymMPO:
    """Merge dependent columns left to right, then dependent rows right to left.

    Only bond indices with equal flux are ever combined, so the result stays
    flux-valid.  Kept indices are original ones, hence a program that is
    already independent comes back unchanged.
    """
    out = m.copy()
    cores, fluxes = out.cores, out.fluxes
    for k in range(1, m.K):
        cores[k - 1], cores[k], fluxes[k] = _reduce_bond(cores[k - 1], cores[k], fluxes[k], tol, True)
    for k in range(m.K - 1, 0, -1):
        cores[k - 1], cores[k], fluxes[k] = _reduce_bond(cores[k - 1], cores[k], fluxes[k], tol, False)
    return SymMPO(cores, fluxes)


# ---------------------------------------------------------------- evaluation and application


def sym_to_mpo(m: SymMPO) -> FullMPO:
    """Dense cores, for checks only."""
    cores = []
    for core in m.cores:
        dense = np.zeros((core.rows, 2, 2, core.cols))
        for (a, b), e in core.entries.items():
            for s, v in e.items():
                dense[a, :, :, b] += v * s.matrix
        cores.append(dense)
    return FullMPO(cores)


def output_sizes(m: SymMPO, x: BlockMPS) -> list[dict[int, int]]:
    """``rho_y[k][n] = sum_j rho_x[k][n - f_j]`` over admissible input sectors."""
    return [_row_layout(m.fluxes[k], x.rho[k], x.K, x.N, k)[1] for k in range(x.K + 1)]


def _row_layout(flux, rho_x, K, N, k):
    allowed = bm.sector_range(K, N, k)
    offsets, sizes = {}, {n: 0 for n in allowed}
    for j, f in enumerate(flux):
        for n, size in rho_x.items():
            target = n + f
            if size == 0 or target not in allowed:
                continue
            offsets[(j, n)] = sizes[target]
            sizes[target] += size
    return offsets, sizes


def apply_sym(m: SymMPO, x: BlockMPS) -> BlockMPS:
    """Blockwise ``M x``: each symbol entry routes the blocks of one core.

    An input block ``X[alpha]`` with left sector ``n`` and symbol entry
    ``(a, b)`` contributes ``c * E[beta, alpha] * X[alpha]`` to output block
    ``beta`` at left sector ``n + f_a``; contributions whose sectors are not
    admissible are dropped.
    """
    if m.K != x.K:
        raise ValidationError(f"orders differ: program {m.K}, state {x.K}")
    K, N = x.K, x.N
    layouts = [_row_layout(m.fluxes[k], x.rho[k], K, N, k) for k in range(K + 1)]
    rho = [sizes for _, sizes in layouts]
    cores = []
    for i, core in enumerate(m.cores):
        row_off, _ = layouts[i]
        col_off, _ = layouts[i + 1]
        blocks = [{}, {}]
        for n, rows in rho[i].items():
            for beta in (0, 1):
                cols = rho[i + 1].get(n + beta, 0)
                if rows and cols:
                    blocks[beta][n] = np.zeros((rows, cols))
        for (a, b), entry in core.entries.items():
            fa = m.fluxes[i][a]
            for alpha in (0, 1):
                for n, X in x.cores[i].blocks(alpha).items():
                    r0 = row_off.get((a, n))
                    c0 = col_off.get((b, n + alpha))
                    if r0 is None or c0 is None:
                        continue
                    for sym, v in entry.items():
                        E = sym.matrix
                        for beta in (0, 1):
                            w = E[beta, alpha]
                            if w == 0.0:
                                continue
                            target = blocks[beta].get(n + fa)
                            if target is None:
                                continue
                            target[r0 : r0 + X.shape[0], c0 : c0 + X.shape[1]] += (v * w) * X
        cores.append(BlockCore(blocks[0], blocks[1]))
    return BlockMPS(K, N, rho, cores)


# ---------------------------------------------------------------- text dump


def dump(m: SymMPO) -> str:
    """Symbol grid of every core with the bond flux labels; for inspection only."""
    lines = []
    for k, core in enumerate(m.cores):
        lines.append(f"core {k + 1}: {core.rows}x{core.cols}  flux in {m.fluxes[k]} out {m.fluxes[k + 1]}")
        for a in range(core.rows):
            cells = []
            for b in range(core.cols):
                entry = core.entries.get((a, b))
                if not entry:
                    cells.append("Z")
                    continue
                terms = [s.name if v == 1.0 else f"{v:.6g}*{s.name}" for s, v in entry.items()]
                cells.append(" + ".join(terms))
            lines.append("  [ " + " | ".join(cells) + " ]")
    return "\n".join(lines)
