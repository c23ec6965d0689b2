"""Text format for one- and two-body coefficients.

::

    # comment
    K 6
    1B 1 2 -1.0          # t_12 (the lower triangle is filled in)
    2B 1 2 3 4 0.25      # v_1234

Indices are 1-based.  Repeated entries are summed.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ._validation import ValidationError


class CoefficientParseError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class CoefficientFile:
    K: int
    one_body: list  # (i, j, t) with 1-based indices
    two_body: list  # (i1, i2, j1, j2, v)

    def T(self) -> np.ndarray:
        T = np.zeros((self.K, self.K))
        upper = {}
        for i, j, t in self.one_body:
            key = (min(i, j), max(i, j))
            upper[key] = upper.get(key, 0.0) + t
        for (i, j), t in upper.items():
            T[i - 1, j - 1] = T[j - 1, i - 1] = t
        return T

    def V(self) -> np.ndarray | None:
        if not self.two_body:
            return None
        V = np.zeros((self.K,) * 4)
        for i1, i2, j1, j2, v in self.two_body:
            V[i1 - 1, i2 - 1, j1 - 1, j2 - 1] += v
        return V


def _ints(tokens, lineno, K):
    out = []
    for tok in tokens:
        try:
            i = int(tok)
        except ValueError:
            raise CoefficientParseError(lineno, f"index {tok!r} is not an integer") from None
        if not 1 <= i <= K:
            raise CoefficientParseError(lineno, f"index {i} outside 1..{K}")
        out.append(i)
    return out


def _value(tok, lineno) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise CoefficientParseError(lineno, f"value {tok!r} is not a number") from None
    if not np.isfinite(v):
        raise CoefficientParseError(lineno, "value is not finite")
    return v


def parse_coefficients(text: str) -> CoefficientFile:
    """Parse the format above.

    The one-body entries ``(i, j)`` and ``(j, i)`` are the same coefficient:
    both feed the upper triangle and the matrix is mirrored afterwards.
    """
    K = None
    one, two = [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        tokens = raw.split("#", 1)[0].split()
        if not tokens:
            continue
        tag = tokens[0]
        if K is None:
            if tag != "K" or len(tokens) != 2:
                raise CoefficientParseError(lineno, "first entry must be 'K <int>'")
            try:
                K = int(tokens[1])
            except ValueError:
                raise CoefficientParseError(lineno, f"K {tokens[1]!r} is not an integer") from None
            if K < 1:
                raise CoefficientParseError(lineno, "K must be positive")
            continue
        if tag == "1B":
            if len(tokens) != 4:
                raise CoefficientParseError(lineno, "expected '1B i j value'")
            i, j = _ints(tokens[1:3], lineno, K)
            one.append((i, j, _value(tokens[3], lineno)))
        elif tag == "2B":
            if len(tokens) != 6:
                raise CoefficientParseError(lineno, "expected '2B i1 i2 j1 j2 value'")
            idx = _ints(tokens[1:5], lineno, K)
            two.append((*idx, _value(tokens[5], lineno)))
        elif tag == "K":
            raise CoefficientParseError(lineno, "K given twice")
        else:
            raise CoefficientParseError(lineno, f"unknown record {tag!r}")
    if K is None:
        raise CoefficientParseError(0, "no 'K <int>' line")
    return CoefficientFile(K, one, two)


def read_coefficients(path) -> CoefficientFile:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from None
    return parse_coefficients(text)


def format_coefficients(T, V=None) -> str:
    T = np.asarray(T, dtype=float)
    K = T.shape[0]
    lines = [f"K {K}"]
    for i in range(K):
        for j in range(i, K):
            if T[i, j] != 0.0:
                lines.append(f"1B {i + 1} {j + 1} {float(T[i, j])!r}")
    if V is not None:
        for idx in zip(*np.nonzero(V)):
            lines.append("2B " + " ".join(str(int(a) + 1) for a in idx) + f" {float(V[idx])!r}")
    return "\n".join(lines) + "\n"
