"""Shapley bounds and minimum-norm Shapley values when some utilities are missing.

Only the missing utilities are decision variables.  Observed utilities are
substituted as constants, so the Shapley vector is an affine function
``phi = L_miss @ x + phi_obs`` of the missing block ``x``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Literal, Sequence

import numpy as np

from .coalition import CoalitionMask, UtilityTable, full_mask, mask_from_indices, mask_key
from .errors import DomainError, UnsupportedPatternError
from .numsolve import (
    INFEASIBLE,
    OPTIMAL,
    LinearProgram,
    QuadraticProgram,
    SolveStatus,
    solve_lp,
    solve_qp,
)
from .shapley import AffineShapleyMap, ShapleyResult, affine_shapley_map, cls_shapley


@dataclass(frozen=True)
class ConstraintRow:
    """``sum(coef * g(mask) for mask, coef in terms) <= rhs``."""

    terms: tuple[tuple[CoalitionMask, float], ...]
    rhs: float

    def lhs(self, values) -> float:
        return sum(c * values[m] for m, c in self.terms)


@dataclass(frozen=True)
class LinearConstraintSet:
    n_groups: int
    rows: tuple[ConstraintRow, ...] = ()

    def __post_init__(self):
        full = full_mask(self.n_groups)
        rows = []
        for row in self.rows:
            terms = tuple((int(m), float(c)) for m, c in row.terms)
            for m, c in terms:
                if not 0 < m < full:
                    raise DomainError(f"constraint references mask {m}, not a proper non-empty coalition")
                if not math.isfinite(c):
                    raise DomainError("constraint coefficients must be finite")
            rhs = float(row.rhs)
            if not math.isfinite(rhs):
                raise DomainError("constraint right-hand side must be finite")
            rows.append(ConstraintRow(terms, rhs))
        object.__setattr__(self, "rows", tuple(rows))

    def add(self, terms: Iterable[tuple[CoalitionMask, float]], rhs: float) -> "LinearConstraintSet":
        return LinearConstraintSet(self.n_groups, self.rows + (ConstraintRow(tuple(terms), rhs),))

    def extend(self, other: "LinearConstraintSet") -> "LinearConstraintSet":
        if other.n_groups != self.n_groups:
            raise DomainError("constraint sets are over different partitions")
        return LinearConstraintSet(self.n_groups, self.rows + other.rows)

    def pin(self, mask: CoalitionMask, lo: float, hi: float) -> "LinearConstraintSet":
        """Add ``lo <= g(mask) <= hi``."""
        return self.add([(mask, 1.0)], hi).add([(mask, -1.0)], -lo)

    def is_satisfied(self, values, tol: float = 1e-9) -> bool:
        return all(row.lhs(values) <= row.rhs + tol for row in self.rows)

    def __len__(self):
        return len(self.rows)


@dataclass(frozen=True)
class ReducedProblem:
    """Constraints and Shapley map restricted to the missing utilities."""

    missing: tuple[CoalitionMask, ...]
    G: np.ndarray
    h: np.ndarray
    L_miss: np.ndarray
    phi_obs: np.ndarray

    def phi(self, x) -> np.ndarray:
        return self.L_miss @ np.asarray(x, dtype=float) + self.phi_obs


def reduce_problem(table: UtilityTable, constraints: LinearConstraintSet,
                   amap: AffineShapleyMap | None = None) -> ReducedProblem:
    if constraints.n_groups != table.n_groups:
        raise DomainError("constraint set and table have different group counts")
    amap = amap or affine_shapley_map(table.partition)
    missing = tuple(sorted(table.missing))
    col = {m: i for i, m in enumerate(amap.masks)}
    miss_idx = [col[m] for m in missing]
    obs_idx = [col[m] for m in table.entries]
    g_obs = np.array(list(table.entries.values()))
    L_miss = amap.L[:, miss_idx]
    phi_obs = amap.m * table.grand
    if obs_idx:
        phi_obs = phi_obs + amap.L[:, obs_idx] @ g_obs
    pos = {m: i for i, m in enumerate(missing)}
    G = np.zeros((len(constraints), len(missing)))
    h = np.zeros(len(constraints))
    for r, row in enumerate(constraints.rows):
        rhs = row.rhs
        for m, c in row.terms:
            if m in pos:
                G[r, pos[m]] += c
            else:
                rhs -= c * table.entries[m]
        h[r] = rhs
    return ReducedProblem(missing, G, h, L_miss, phi_obs)


def _constant_feasible(reduced: ReducedProblem) -> bool:
    # rows without any missing variable must already hold
    empty = ~np.any(reduced.G != 0.0, axis=1)
    return bool(np.all(reduced.h[empty] >= -1e-9 * (1.0 + np.abs(reduced.h[empty]))))


def shapley_bound(table: UtilityTable, constraints: LinearConstraintSet, group: int,
                  direction: Literal["lower", "upper"], *, amap: AffineShapleyMap | None = None,
                  reduced: ReducedProblem | None = None) -> SolveStatus:
    """Extreme value of ``phi[group]`` over constraint-feasible completions.

    ``objective`` of the returned status is the bound; ``x`` is the extremal
    completion of the missing block.  Infeasible or unbounded programs are
    reported, not raised.
    """
    if direction not in ("lower", "upper"):
        raise DomainError(f"direction must be 'lower' or 'upper', got {direction!r}")
    if not 0 <= group < table.n_groups:
        raise DomainError(f"group index {group} out of range")
    red = reduced or reduce_problem(table, constraints, amap)
    if not _constant_feasible(red):
        return SolveStatus(INFEASIBLE)
    if not red.missing:
        return SolveStatus(OPTIMAL, np.zeros(0), float(red.phi_obs[group]), 0)
    sense = "max" if direction == "upper" else "min"
    res = solve_lp(LinearProgram(red.L_miss[group], red.G, red.h, sense=sense))
    if not res.optimal:
        return res
    return SolveStatus(OPTIMAL, res.x, float(red.phi(res.x)[group]), res.iterations)


@dataclass(frozen=True)
class PartialInferenceResult:
    status: str
    lower: np.ndarray
    upper: np.ndarray
    lower_status: tuple[str, ...]
    upper_status: tuple[str, ...]
    smns: ShapleyResult | None
    completion: dict[CoalitionMask, float] | None = field(default=None)

    @property
    def feasible(self) -> bool:
        return self.status != INFEASIBLE


def shapley_minimum_norm(table: UtilityTable, constraints: LinearConstraintSet, *,
                         with_bounds: bool = True) -> PartialInferenceResult:
    """Completion whose Shapley vector is closest (l2) to the equal split ``g(P)/N``.

    Also computes the lower and upper Shapley bounds of every group unless
    ``with_bounds`` is false.
    """
    n = table.n_groups
    amap = affine_shapley_map(table.partition)
    red = reduce_problem(table, constraints, amap)
    nan = np.full(n, np.nan)
    if not _constant_feasible(red):
        return PartialInferenceResult(INFEASIBLE, nan, nan.copy(), (INFEASIBLE,) * n, (INFEASIBLE,) * n, None)

    target = np.full(n, table.grand / n)
    if red.missing:
        res = solve_qp(QuadraticProgram(red.L_miss, red.phi_obs - target, red.G, red.h))
    else:
        res = SolveStatus(OPTIMAL, np.zeros(0), float(np.sum((red.phi_obs - target) ** 2)), 0)
    if not res.optimal:
        return PartialInferenceResult(res.status, nan, nan.copy(), (res.status,) * n, (res.status,) * n, None)

    completion = dict(zip(red.missing, res.x.tolist()))
    smns = cls_shapley(table.with_values(completion))
    smns = ShapleyResult(table.partition, smns.values, table.grand, "smns")

    lower, upper = nan.copy(), nan.copy()
    lo_st, up_st = [], []
    if with_bounds:
        for j in range(n):
            for direction, out, st in (("lower", lower, lo_st), ("upper", upper, up_st)):
                b = shapley_bound(table, constraints, j, direction, reduced=red)
                st.append(b.status)
                if b.optimal:
                    out[j] = b.objective
    return PartialInferenceResult(OPTIMAL, lower, upper, tuple(lo_st), tuple(up_st), smns, completion)


def phi_of_completion(table: UtilityTable, completion, amap: AffineShapleyMap | None = None) -> np.ndarray:
    """Shapley vector of ``table`` with its missing block filled from ``completion``."""
    amap = amap or affine_shapley_map(table.partition)
    filled = table.with_values(dict(completion))
    return amap.apply(filled.vector(), table.grand)


# ---------------------------------------------------------------------------
# globalization-style constraint families


def _sgn(x: float) -> float:
    return float(np.sign(x))


def build_globalization_constraints(table: UtilityTable, box: tuple[float | None, float | None] | None = None,
                                    box_mode: Literal["difference", "level"] = "difference") -> LinearConstraintSet:
    """Sign-consistency constraints for a three-group table missing both pairs with one group.

    For each missing pair ``{i, k}`` (``k`` the group shared by both missing
    pairs, ``l`` the remaining group)::

        g(i) * sgn(g(k)) <= g(i, k)
        g(k) * sgn(g(i)) <= g(i, k)
        g(i, k) * sgn(g(l)) <= g(P)

    plus, when ``box`` is given, ``lo <= g(i, k) <= hi`` (either side may be
    ``None``).  In ``level`` mode the box is read on baseline-normalized levels,
    i.e. shifted down by one.
    """
    if box_mode not in ("difference", "level"):
        raise DomainError(f"box_mode must be 'difference' or 'level', got {box_mode!r}")
    n = table.n_groups
    missing = sorted(table.missing)
    shared = None
    if n == 3 and len(missing) == 2 and all(bin(m).count("1") == 2 for m in missing):
        common = missing[0] & missing[1]
        if bin(common).count("1") == 1:
            shared = common.bit_length() - 1
    if shared is None:
        raise UnsupportedPatternError(
            "globalization constraints need 3 groups with exactly the two pairs containing one "
            "common group missing; supply a constraint file instead"
        )
    cs = LinearConstraintSet(n)
    g_k = table.value(1 << shared)
    for pair in missing:
        i = (pair & ~(1 << shared)).bit_length() - 1
        l = ({0, 1, 2} - {i, shared}).pop()
        g_i = table.value(1 << i)
        g_l = table.value(1 << l)
        cs = cs.add([(pair, -1.0)], -g_i * _sgn(g_k))
        cs = cs.add([(pair, -1.0)], -g_k * _sgn(g_i))
        cs = cs.add([(pair, _sgn(g_l))], table.grand)
    if box is not None:
        shift = 1.0 if box_mode == "level" else 0.0
        lo, hi = box
        for pair in missing:
            if hi is not None:
                cs = cs.add([(pair, 1.0)], float(hi) - shift)
            if lo is not None:
                cs = cs.add([(pair, -1.0)], -(float(lo) - shift))
    return cs


def missing_interval(constraints: LinearConstraintSet, table: UtilityTable, mask: CoalitionMask) -> tuple[float, float]:
    """Range of ``g(mask)`` over the constraint-feasible completions (nan if infeasible)."""
    red = reduce_problem(table, constraints)
    if mask not in red.missing:
        v = table.value(mask)
        return v, v
    c = np.zeros(len(red.missing))
    c[red.missing.index(mask)] = 1.0
    lo = solve_lp(LinearProgram(c, red.G, red.h, sense="min"))
    hi = solve_lp(LinearProgram(c, red.G, red.h, sense="max"))
    if lo.status == INFEASIBLE or hi.status == INFEASIBLE or not _constant_feasible(red):
        return math.nan, math.nan
    return (lo.objective if lo.optimal else -math.inf, hi.objective if hi.optimal else math.inf)


def describe_row(row: ConstraintRow) -> str:
    lhs = " + ".join(f"{c:g}*g({{{mask_key(m)}}})" for m, c in row.terms) or "0"
    return f"{lhs} <= {row.rhs:g}"


def pair_mask(i: int, k: int) -> CoalitionMask:
    return mask_from_indices((i, k))


def masks_in(rows: Sequence[ConstraintRow]) -> set[CoalitionMask]:
    return {m for row in rows for m, _ in row.terms}
