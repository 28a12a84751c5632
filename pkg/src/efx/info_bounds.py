"""Fano-type bounds on finite joints, with the MAP decoder as the constructive witness."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import DomainError, PreconditionError
from .prob_core import (
    INFO_TOL,
    RandomVariable,
    binary_entropy,
    entropy,
    joint_table,
    mutual_information,
)


@dataclass(frozen=True)
class Decoder:
    """Table decoder from source symbols to predicted symbols under 0-1 loss."""

    table: dict
    error_rate: float

    def __call__(self, symbol: Any) -> Any:
        return self.table[symbol]

    def to_dict(self) -> dict:
        return {"table": [[k, v] for k, v in self.table.items()], "error_rate": self.error_rate}


@dataclass(frozen=True)
class BoundReport:
    bound_name: str
    lhs: float
    rhs: float
    relation: str
    satisfied: bool
    witness: Decoder | None = None
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "bound_name": self.bound_name,
            "lhs": self.lhs,
            "rhs": self.rhs,
            "relation": self.relation,
            "satisfied": self.satisfied,
        }
        if self.witness is not None:
            out["witness"] = self.witness.to_dict()
        out.update(self.extra)
        return out


def _holds(lhs: float, relation: str, rhs: float) -> bool:
    if relation == "<=":
        return lhs <= rhs + INFO_TOL
    return lhs >= rhs - INFO_TOL


def map_decoder(y: RandomVariable, x: RandomVariable) -> Decoder:
    """Best 0-1 decoder of ``x`` from ``y``: predict argmax_x P(x, y) per symbol of y.

    Ties go to the smallest canonical symbol of x. Symbols of y carrying no
    mass are unreachable and left out of the table.
    """
    jt = joint_table(x, y)
    table = {}
    for col, ysym in enumerate(jt.col_symbols):
        if jt.col_marginal[col] <= 0:
            continue
        table[ysym] = jt.row_symbols[int(np.argmax(jt.probs[:, col]))]
    success = float(jt.probs.max(axis=0).sum())
    return Decoder(table, max(0.0, 1.0 - success))


def decoder_error(decoder: Decoder, y: RandomVariable, x: RandomVariable) -> float:
    """P[X != t(Y)] recomputed point by point; unmapped symbols count as errors."""
    w = y.space.weights
    wrong = 0.0
    for k in range(y.space.size):
        ysym = y.symbols[y.codes[k]]
        if ysym not in decoder.table or decoder.table[ysym] != x.symbols[x.codes[k]]:
            wrong += w[k]
    return float(wrong)


def check_fano_lower(x: RandomVariable, y: RandomVariable, decoder: Decoder) -> BoundReport:
    """I(X;Y) >= q H(X) - H(q) where q is the decoder's success probability."""
    q = 1.0 - decoder.error_rate
    if q < 0.5 - 1e-12:
        raise PreconditionError(f"success probability q={q!r} is below 1/2")
    q = min(q, 1.0)
    lhs = mutual_information(x, y)
    rhs = q * entropy(x) - binary_entropy(q)
    return BoundReport("fano_lower", lhs, rhs, ">=", _holds(lhs, ">=", rhs), decoder, {"q": q})


def _is_binary_pair(y: RandomVariable, z: RandomVariable) -> bool:
    return len(set(y.symbols) | set(z.symbols)) <= 2


def check_mi_stability(x: RandomVariable, y: RandomVariable, z: RandomVariable) -> BoundReport:
    """|I(X;Y) - I(X;Z)| <= H(P[Y != Z]) for binary Y, Z over a common 2-letter alphabet."""
    if not _is_binary_pair(y, z):
        raise PreconditionError("Y and Z must take values in a shared binary alphabet")
    yv, zv = y.values, z.values
    p_diff = float(sum(w for w, a, b in zip(y.space.weights, yv, zv) if a != b))
    p_diff = min(max(p_diff, 0.0), 1.0)
    lhs = abs(mutual_information(x, y) - mutual_information(x, z))
    rhs = binary_entropy(p_diff)
    return BoundReport("mi_stability", lhs, rhs, "<=", _holds(lhs, "<=", rhs), extra={"p_differ": p_diff})


def check_entropy_upper(p: float) -> BoundReport:
    """H(p) <= 2 sqrt(p(1-p))."""
    if not (0.0 <= p <= 1.0):
        raise DomainError(f"p must lie in [0, 1], got {p!r}")
    lhs = binary_entropy(p)
    rhs = 2.0 * math.sqrt(p * (1.0 - p))
    return BoundReport("entropy_upper", lhs, rhs, "<=", _holds(lhs, "<=", rhs), extra={"p": p})


def check_fano_converse(x: RandomVariable, y: RandomVariable) -> tuple[Decoder, BoundReport]:
    """Build the MAP decoder t and check P[X != t(Y)] <= 1 - 2^(I(X;Y) - H(X))."""
    t = map_decoder(y, x)
    rhs = 1.0 - 2.0 ** (mutual_information(x, y) - entropy(x))
    report = BoundReport("fano_converse", t.error_rate, rhs, "<=", _holds(t.error_rate, "<=", rhs), t)
    return t, report
