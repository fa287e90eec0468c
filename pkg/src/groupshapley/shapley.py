"""Group Shapley values: closed forms, brute-force oracle, CLS solve, sampling.

Every routine takes a :class:`~groupshapley.coalition.UtilityTable` (or a
:class:`ValueFunction`) over a fixed partition and returns a
:class:`ShapleyResult` whose values sum to the grand value.
"""

from __future__ import annotations

import itertools
import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .coalition import (
    MAX_ENUMERATION_GROUPS,
    CoalitionMask,
    GroupPartition,
    UtilityTable,
    build_design_system,
    design_matrix,
    enumerate_proper_coalitions,
    full_mask,
    kernel_weight,
    kernel_weights,
    mask_from_indices,
)
from .errors import CapacityError, ContractViolation, DomainError
from .numsolve import solve_linear_system

log = logging.getLogger(__name__)

MAX_ORACLE_GROUPS = 8
MAX_AFFINE_GROUPS = 12
SHARE_EPS = 1e-12

METHODS = (
    "exact-subtractive",
    "exact-additive",
    "permutation-oracle",
    "cls",
    "sampled",
    "smns",
)


@dataclass(frozen=True)
class ShapleyResult:
    partition: GroupPartition
    values: np.ndarray
    grand: float
    method: str
    n_evaluations: int | None = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown method tag {self.method!r}")
        values = np.asarray(self.values, dtype=float).copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shares_defined(self) -> bool:
        return abs(self.grand) > SHARE_EPS

    @property
    def shares(self) -> np.ndarray:
        """``values / grand``; all NaN when the grand value is (numerically) zero."""
        if not self.shares_defined:
            return np.full_like(self.values, np.nan)
        return self.values / self.grand

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.partition.groups, self.values.tolist()))


# ---------------------------------------------------------------------------
# value functions


class ValueFunction:
    """Callable ``mask -> float`` with per-instance memoization.

    ``pure`` declares that evaluations have no side effects and are safe to run
    concurrently; ``cost_hint`` is a free-form relative cost (1.0 = cheap).
    """

    def __init__(self, fn: Callable[[CoalitionMask], float], n_groups: int, *, pure: bool = True,
                 cost_hint: float = 1.0):
        self._fn = fn
        self.n_groups = n_groups
        self.pure = pure
        self.cost_hint = cost_hint
        self._cache: dict[CoalitionMask, float] = {}
        self._lock = threading.Lock()

    def __call__(self, mask: CoalitionMask) -> float:
        mask = int(mask)
        with self._lock:
            if mask in self._cache:
                return self._cache[mask]
        value = float(self._fn(mask))
        with self._lock:
            self._cache.setdefault(mask, value)
        return value

    @property
    def n_evaluated(self) -> int:
        return len(self._cache)

    def clear_cache(self) -> None:
        with self._lock:
            self._cache.clear()

    def evaluate_many(self, masks: Iterable[CoalitionMask], n_jobs: int = 1) -> dict[CoalitionMask, float]:
        masks = list(dict.fromkeys(int(m) for m in masks))
        if n_jobs > 1 and self.pure and len(masks) > 1:
            with ThreadPoolExecutor(max_workers=n_jobs) as pool:
                values = list(pool.map(self, masks))
        else:
            values = [self(m) for m in masks]
        return dict(zip(masks, values))

    def tabulate(self, partition: GroupPartition, n_jobs: int = 1) -> UtilityTable:
        n = partition.n_groups
        masks = enumerate_proper_coalitions(partition) + [full_mask(n)]
        vals = self.evaluate_many(masks, n_jobs)
        grand = vals.pop(full_mask(n))
        return UtilityTable(partition, vals, grand)

    @classmethod
    def from_table(cls, table: UtilityTable) -> "ValueFunction":
        return cls(table.value, table.n_groups)


def _check_empty(vf: ValueFunction) -> None:
    v0 = vf(0)
    if v0 != 0.0:
        raise ContractViolation(f"value function returned {v0!r} for the empty coalition")


# ---------------------------------------------------------------------------
# exact formulas


def _popcounts(n: int) -> np.ndarray:
    masks = np.arange(1 << n, dtype=np.int64)
    counts = np.zeros_like(masks)
    for j in range(n):
        counts += (masks >> j) & 1
    return counts


def exact_shapley_subtractive(table: UtilityTable) -> ShapleyResult:
    """Weighted average of ``g(S) - g(S minus M)`` over coalitions ``S`` containing ``M``.

    Weight for ``|S| = s`` is ``(s-1)! (n-s)! / n!``.
    """
    g = table.dense()
    n = table.n_groups
    sizes = _popcounts(n)
    w_by_size = np.array(
        [0.0] + [math.factorial(s - 1) * math.factorial(n - s) / math.factorial(n) for s in range(1, n + 1)]
    )
    masks = np.arange(1 << n, dtype=np.int64)
    phi = np.empty(n)
    for j in range(n):
        with_j = masks[(masks >> j) & 1 == 1]
        phi[j] = np.sum(w_by_size[sizes[with_j]] * (g[with_j] - g[with_j ^ (1 << j)]))
    return ShapleyResult(table.partition, phi, table.grand, "exact-subtractive")


def exact_shapley_additive(table: UtilityTable) -> ShapleyResult:
    """Weighted average of ``g(S + M) - g(S)`` over coalitions ``S`` not containing ``M``."""
    g = table.dense()
    n = table.n_groups
    sizes = _popcounts(n)
    w_by_size = np.array(
        [math.factorial(s) * math.factorial(n - s - 1) / math.factorial(n) for s in range(n)] + [0.0]
    )
    masks = np.arange(1 << n, dtype=np.int64)
    phi = np.empty(n)
    for j in range(n):
        without_j = masks[(masks >> j) & 1 == 0]
        phi[j] = np.sum(w_by_size[sizes[without_j]] * (g[without_j | (1 << j)] - g[without_j]))
    return ShapleyResult(table.partition, phi, table.grand, "exact-additive")


def permutation_oracle(table: UtilityTable) -> ShapleyResult:
    """Average marginal contribution over all orderings of the groups.

    Brute force, independent of every weighted formula; limited to 8 groups.
    """
    n = table.n_groups
    if n > MAX_ORACLE_GROUPS:
        raise CapacityError(f"permutation oracle is limited to {MAX_ORACLE_GROUPS} groups, got {n}")
    g = table.dense().tolist()
    totals = [0.0] * n
    count = 0
    for order in itertools.permutations(range(n)):
        before = 0
        g_before = 0.0
        for j in order:
            after = before | (1 << j)
            g_after = g[after]
            totals[j] += g_after - g_before
            before, g_before = after, g_after
        count += 1
    return ShapleyResult(table.partition, np.array(totals) / count, table.grand, "permutation-oracle")


# ---------------------------------------------------------------------------
# constrained least squares


def constrained_ls(D: np.ndarray, weights: np.ndarray, g_vec, grand: float) -> np.ndarray:
    """Minimize ``(g - D phi)' K (g - D phi)`` subject to ``sum(phi) = grand``.

    Closed form ``A^-1 (b - 1 (1'A^-1 b - grand) / (1'A^-1 1))`` with
    ``A = D'KD`` and ``b = D'Kg``.  ``g_vec`` may hold several right-hand sides
    as columns, in which case ``grand`` is a matching row vector.
    """
    DK = D.T * weights
    A = DK @ D
    b = DK @ np.asarray(g_vec, dtype=float)
    n = A.shape[0]
    ones = np.ones(n)
    sol = solve_linear_system(A, np.column_stack([ones, b.reshape(n, -1)]))
    a_inv_1, a_inv_b = sol[:, 0], sol[:, 1:]
    correction = (ones @ a_inv_b - np.atleast_1d(grand)) / (ones @ a_inv_1)
    phi = a_inv_b - np.outer(a_inv_1, correction)
    return phi.ravel() if np.ndim(g_vec) == 1 else phi


def cls_shapley(table: UtilityTable) -> ShapleyResult:
    """Shapley values as the solution of the kernel-weighted constrained least squares."""
    n = table.n_groups
    if n < 2:
        table.require_complete()
        return ShapleyResult(table.partition, np.array([table.grand]), table.grand, "cls")
    system = build_design_system(table)
    phi = constrained_ls(system.D, system.weights, system.g_vec, table.grand)
    return ShapleyResult(table.partition, phi, table.grand, "cls")


@dataclass(frozen=True)
class AffineShapleyMap:
    """``phi = L @ g_vec + m * grand`` for any utility vector in canonical order."""

    partition: GroupPartition
    masks: tuple[CoalitionMask, ...]
    L: np.ndarray
    m: np.ndarray

    def apply(self, g_vec, grand: float) -> np.ndarray:
        return self.L @ np.asarray(g_vec, dtype=float) + self.m * grand

    def column(self, mask: CoalitionMask) -> np.ndarray:
        return self.L[:, self.masks.index(mask)]


def affine_shapley_map(partition: GroupPartition) -> AffineShapleyMap:
    """Tabulate the linear map from utilities to CLS Shapley values.

    Each column of ``L`` is the CLS solution for a unit utility vector with a
    zero grand value; ``m`` is the solution for a zero vector with unit grand.
    """
    n = partition.n_groups
    if not 2 <= n <= MAX_AFFINE_GROUPS:
        raise CapacityError(f"affine map needs 2 <= groups <= {MAX_AFFINE_GROUPS}, got {n}")
    masks = tuple(enumerate_proper_coalitions(partition))
    D = design_matrix(masks, n)
    w = kernel_weights(n, masks)
    k = len(masks)
    rhs = np.hstack([np.eye(k), np.zeros((k, 1))])
    grand = np.append(np.zeros(k), 1.0)
    sol = constrained_ls(D, w, rhs, grand)
    L, m = sol[:, :k].copy(), sol[:, k].copy()
    L.setflags(write=False)
    m.setflags(write=False)
    return AffineShapleyMap(partition, masks, L, m)


# ---------------------------------------------------------------------------
# sampling


def _size_distribution(n: int) -> np.ndarray:
    sizes = np.arange(1, n)
    p = np.array([math.comb(n, s) * kernel_weight(n, s) for s in sizes], dtype=float)
    return p / p.sum()


def draw_coalitions(n: int, q: int, rng: np.random.Generator) -> list[CoalitionMask]:
    """``q`` i.i.d. proper coalitions with probability proportional to the kernel weight."""
    sizes = rng.choice(np.arange(1, n), size=q, p=_size_distribution(n))
    return [mask_from_indices(rng.choice(n, size=int(s), replace=False)) for s in sizes]


def sampled_shapley(vf: ValueFunction, partition: GroupPartition, q: int, seed: int, *,
                    exhaustive: bool = False, n_jobs: int = 1) -> ShapleyResult:
    """Kernel-sampled constrained least squares estimate.

    Coalitions are drawn with replacement, duplicates collapsed, and each
    distinct row weighted by its draw count.  With ``exhaustive=True`` and
    ``q >= 2**n - 2`` every proper coalition is used once with its exact kernel
    weight, which reproduces :func:`cls_shapley`.
    """
    n = partition.n_groups
    if q < n:
        raise DomainError(f"q must be at least the number of groups ({n}), got {q}")
    _check_empty(vf)
    full = full_mask(n)
    if n == 1:
        grand = vf(full)
        return ShapleyResult(partition, np.array([grand]), grand, "sampled", 1)
    if exhaustive and n <= MAX_ENUMERATION_GROUPS and q >= full - 1:
        masks = enumerate_proper_coalitions(partition)
        weights = kernel_weights(n, masks)
    else:
        rng = np.random.default_rng(seed)
        drawn = draw_coalitions(n, q, rng)
        counts: dict[CoalitionMask, int] = {}
        for mk in drawn:
            counts[mk] = counts.get(mk, 0) + 1
        masks = sorted(counts)
        weights = np.array([counts[mk] for mk in masks], dtype=float)
    values = vf.evaluate_many(list(masks) + [full], n_jobs=n_jobs)
    grand = values[full]
    g_vec = np.array([values[mk] for mk in masks])
    phi = constrained_ls(design_matrix(masks, n), weights, g_vec, grand)
    log.debug("sampled_shapley: %d distinct coalitions from q=%d", len(masks), q)
    return ShapleyResult(partition, phi, grand, "sampled", len(masks) + 1)


# ---------------------------------------------------------------------------
# value-function adapters


def _resolve_columns(partition: GroupPartition, feature_names, n_features):
    if partition.members is None:
        if partition.n_groups != n_features:
            raise DomainError("partition without member lists must have one group per feature")
        return [[j] for j in range(n_features)]
    lookup = {name: j for j, name in enumerate(feature_names)} if feature_names is not None else None
    cols, seen = [], set()
    for g in partition.groups:
        idx = []
        for name in partition.members[g]:
            if lookup is not None:
                if name not in lookup:
                    raise DomainError(f"feature {name!r} not among the feature names")
                j = lookup[name]
            else:
                try:
                    j = int(name)
                except (TypeError, ValueError):
                    raise DomainError(f"feature {name!r} is not a column index; pass feature_names") from None
            if not 0 <= j < n_features:
                raise DomainError(f"feature column {j} out of range")
            idx.append(j)
            seen.add(j)
        cols.append(idx)
    if len(seen) != n_features:
        raise DomainError("partition member lists must cover every feature exactly once")
    return cols


def marginal_value_function(predictor, background, x_star, partition: GroupPartition, *,
                            feature_names=None, vectorized: bool = False) -> ValueFunction:
    """Sample analog of ``E[f(x*_A, X_rest)] - E[f(X)]`` over a background sample.

    ``predictor`` maps one row to a float, or a 2-D array to a vector of floats
    when ``vectorized`` is set.
    """
    X = np.atleast_2d(np.asarray(background, dtype=float))
    x_star = np.asarray(x_star, dtype=float).ravel()
    if X.shape[0] == 0:
        raise DomainError("background sample is empty")
    if x_star.shape[0] != X.shape[1]:
        raise DomainError(f"x_star has {x_star.shape[0]} features, background has {X.shape[1]}")
    cols = _resolve_columns(partition, feature_names, X.shape[1])

    def predict(rows):
        if vectorized:
            return np.asarray(predictor(rows), dtype=float).ravel()
        return np.array([float(predictor(r)) for r in rows])

    base = float(np.mean(predict(X)))

    def g(mask):
        if mask == 0:
            return 0.0
        replaced = X.copy()
        for j in (j for gi, c in enumerate(cols) if mask >> gi & 1 for j in c):
            replaced[:, j] = x_star[j]
        return float(np.mean(predict(replaced))) - base

    return ValueFunction(g, partition.n_groups, pure=True)


@dataclass(frozen=True)
class CeterisParibusResult:
    partition: GroupPartition
    values: np.ndarray
    grand: float
    efficiency_holds: bool


def ceteris_paribus_decomposition(vf_from_zero: ValueFunction, partition: GroupPartition) -> CeterisParibusResult:
    """One-at-a-time contributions ``g({M})``; does not enforce Efficiency."""
    _check_empty(vf_from_zero)
    n = partition.n_groups
    values = np.array([vf_from_zero(1 << j) for j in range(n)])
    grand = vf_from_zero(full_mask(n))
    holds = abs(values.sum() - grand) <= 1e-8 * (1.0 + abs(grand))
    return CeterisParibusResult(partition, values, grand, bool(holds))

