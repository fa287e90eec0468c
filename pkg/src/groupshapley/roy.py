"""Two-period, two-sector Roy model and its counterfactual value function.

Covariates are ``x_si = (1, z_si)`` with ``z_si`` i.i.d. standard normal per
sector and worker; this law is an assumption of the package, not something
the model pins down.  Shocks are drawn from counter-based (Philox) streams in
fixed-size blocks, so a given seed produces the same panel regardless of how
blocks are scheduled, and every coalition of a counterfactual decomposition
sees identical standard-normal draws (common random numbers).
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy.special import ndtr

from .coalition import CoalitionMask, GroupPartition
from .errors import ConfigError
from .shapley import ValueFunction

BLOCK_SIZE = 1 << 18
FREE_PARAMETERS = ("beta1", "beta2", "gamma1", "gamma2", "sigma1_sq", "sigma2_sq")
FIXED_PARAMETERS = ("tau", "rho")


@dataclass(frozen=True)
class RoyParams:
    beta1: tuple[float, float]
    beta2: tuple[float, float]
    gamma1: float
    gamma2: float
    sigma1_sq: float
    sigma2_sq: float
    tau: float = 0.0
    rho: float = 0.95

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            beta = tuple(float(b) for b in getattr(self, name))
            if len(beta) != 2:
                raise ConfigError(f"{name} must have two coefficients")
            object.__setattr__(self, name, beta)
        for name in ("gamma1", "gamma2", "sigma1_sq", "sigma2_sq", "tau", "rho"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.sigma1_sq > 0 and self.sigma2_sq > 0):
            raise ConfigError("error variances must be positive")
        if not -1 < self.tau < 1:
            raise ConfigError("tau must lie in (-1, 1)")
        if not 0 <= self.rho <= 1:
            raise ConfigError("rho must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d) -> "RoyParams":
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta1"], d["beta2"] = list(self.beta1), list(self.beta2)
        return d


@dataclass(frozen=True)
class SimConfig:
    n_draws: int = 1_000_000
    seed: int = 0
    quantiles: tuple[float, float] = (0.1, 0.9)
    n_jobs: int = 1

    def __post_init__(self):
        if not isinstance(self.n_draws, (int, np.integer)) or self.n_draws < 1:
            raise ConfigError(f"n_draws must be a positive integer, got {self.n_draws!r}")
        lo, hi = (float(q) for q in self.quantiles)
        if not 0 < lo < hi < 1:
            raise ConfigError(f"quantile levels must satisfy 0 < low < high < 1, got {self.quantiles}")
        object.__setattr__(self, "quantiles", (lo, hi))


@dataclass(frozen=True)
class Panel:
    """Realized wages ``w[:, t]`` and sector choices ``d[:, t]`` (1 or 2), t = 0, 1."""

    wages: np.ndarray
    choices: np.ndarray
    potential2: np.ndarray | None = field(default=None, repr=False)

    def __len__(self):
        return self.wages.shape[0]


def expected_max_lognormal(m1, v1, m2, v2):
    """``E[max(exp(X1), exp(X2))]`` for independent normals ``Xi ~ N(mi, vi)``."""
    s = np.sqrt(v1 + v2)
    return np.exp(m1 + v1 / 2) * ndtr((m1 - m2 + v1) / s) + np.exp(m2 + v2 / 2) * ndtr((m2 - m1 + v2) / s)


def _block_normals(seed: int, block: int, size: int) -> np.ndarray:
    """Standard normals for one block: rows z1, z2, e11, e21, e12, e22."""
    bitgen = np.random.Philox(key=np.array([seed & 0xFFFFFFFFFFFFFFFF, block], dtype=np.uint64))
    return np.random.Generator(bitgen).standard_normal((6, size))


def _simulate_block(params: RoyParams, normals: np.ndarray, keep_potential: bool):
    z1, z2, e11, e21, e12, e22 = normals
    s1, s2 = math.sqrt(params.sigma1_sq), math.sqrt(params.sigma2_sq)
    xb1 = params.beta1[0] + params.beta1[1] * z1
    xb2 = params.beta2[0] + params.beta2[1] * z2
    w11 = np.exp(xb1 + s1 * e11)
    w21 = np.exp(xb2 + s2 * e21)
    v1, v2 = params.sigma1_sq, params.sigma2_sq
    cont1 = expected_max_lognormal(xb1 + params.gamma1, v1, xb2, v2)
    cont2 = expected_max_lognormal(xb1, v1, xb2 + params.gamma2, v2)
    pick1 = w11 + params.rho * cont1 > w21 + params.rho * cont2
    lw12 = xb1 + np.where(pick1, params.gamma1, 0.0) + s1 * e12
    lw22 = xb2 + np.where(pick1, 0.0, params.gamma2) + s2 * e22
    stay1 = lw12 > lw22
    wages = np.empty((z1.shape[0], 2))
    wages[:, 0] = np.where(pick1, w11, w21)
    wages[:, 1] = np.exp(np.where(stay1, lw12, lw22))
    choices = np.empty((z1.shape[0], 2), dtype=np.int8)
    choices[:, 0] = np.where(pick1, 1, 2)
    choices[:, 1] = np.where(stay1, 1, 2)
    potential = np.exp(np.column_stack([lw12, lw22])) if keep_potential else None
    return wages, choices, potential


def simulate_panel(params: RoyParams, config: SimConfig, *, keep_potential: bool = False) -> Panel:
    """Simulate ``config.n_draws`` workers over two periods.

    Period-1 choice compares realized wage plus discounted expected best
    period-2 wage (closed form, requires ``tau == 0``); period 2 picks the
    sector with the larger realized log wage.
    """
    if params.tau != 0.0:
        raise ConfigError("only tau = 0 is supported: the continuation value needs independent shocks")
    n = int(config.n_draws)
    starts = list(range(0, n, BLOCK_SIZE))

    def run(b):
        size = min(BLOCK_SIZE, n - starts[b])
        return _simulate_block(params, _block_normals(config.seed, b, size), keep_potential)

    if config.n_jobs > 1 and len(starts) > 1:
        with ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            parts = list(pool.map(run, range(len(starts))))
    else:
        parts = [run(b) for b in range(len(starts))]
    wages = np.concatenate([p[0] for p in parts])
    choices = np.concatenate([p[1] for p in parts])
    potential = np.concatenate([p[2] for p in parts]) if keep_potential else None
    return Panel(wages, choices, potential)


def order_statistic_index(level: float, n: int) -> int:
    """1-based index ``ceil(level * n)`` in exact decimal arithmetic."""
    k = math.ceil(Fraction(repr(float(level))) * n)
    return min(max(k, 1), n)


def quantile_spread(values: np.ndarray, levels: tuple[float, float]) -> float:
    """``Q(high) - Q(low)`` with ``Q(t)`` the order statistic at ``ceil(t * n)``."""
    values = np.asarray(values, dtype=float)
    n = values.shape[0]
    if n == 0:
        return math.nan
    k_lo, k_hi = (order_statistic_index(t, n) - 1 for t in levels)
    part = np.partition(values, (k_lo, k_hi))
    return float(part[k_hi] - part[k_lo])


@dataclass(frozen=True)
class InequalityMeasures:
    between: float
    within: tuple[float, float]
    overall: float

    @property
    def between_defined(self) -> bool:
        return not math.isnan(self.between)


def inequality_measures(panel: Panel, config: SimConfig) -> tuple[InequalityMeasures, InequalityMeasures]:
    """Between-sector mean gap, within-sector and overall quantile spreads, per period.

    Conditional measures of an empty sector are NaN.
    """
    if len(panel) == 0:
        raise ConfigError("panel is empty")
    out = []
    for t in range(2):
        w, d = panel.wages[:, t], panel.choices[:, t]
        in1, in2 = w[d == 1], w[d == 2]
        between = float(in1.mean() - in2.mean()) if in1.size and in2.size else math.nan
        within = (quantile_spread(in1, config.quantiles), quantile_spread(in2, config.quantiles))
        out.append(InequalityMeasures(between, within, quantile_spread(w, config.quantiles)))
    return out[0], out[1]


def overall_inequality_change(params: RoyParams, config: SimConfig) -> float:
    """Period-2 overall quantile spread minus period-1 overall spread."""
    panel = simulate_panel(params, config)
    return quantile_spread(panel.wages[:, 1], config.quantiles) - quantile_spread(
        panel.wages[:, 0], config.quantiles
    )


@dataclass(frozen=True)
class RoyScenario:
    benchmark: RoyParams
    counterfactual: RoyParams
    partition: GroupPartition

    def __post_init__(self):
        if self.partition.members is None:
            raise ConfigError("Roy scenarios need partition member lists")
        for p in self.partition.parameters:
            if p in FIXED_PARAMETERS:
                raise ConfigError(f"parameter {p!r} is fixed and cannot be in a group")
            if p not in FREE_PARAMETERS:
                raise ConfigError(f"unknown Roy parameter {p!r}")
        for p in FIXED_PARAMETERS:
            if getattr(self.benchmark, p) != getattr(self.counterfactual, p):
                raise ConfigError(f"fixed parameter {p!r} differs between benchmark and counterfactual")
        for p in FREE_PARAMETERS:
            differs = getattr(self.benchmark, p) != getattr(self.counterfactual, p)
            if differs and p not in self.partition.parameters:
                raise ConfigError(f"parameter {p!r} changes but is in no group")

    def spliced(self, mask: CoalitionMask) -> RoyParams:
        """Counterfactual values for the groups in ``mask``, benchmark elsewhere."""
        switch = {p: getattr(self.counterfactual, p) for p in self.partition.parameters_in(mask)}
        return replace(self.benchmark, **switch)

    @classmethod
    def from_dict(cls, d) -> "RoyScenario":
        try:
            groups = d["groups"]
            partition = GroupPartition(tuple(groups), {k: tuple(v) for k, v in groups.items()})
            return cls(RoyParams.from_dict(d["benchmark"]), RoyParams.from_dict(d["counterfactual"]), partition)
        except (KeyError, TypeError, AttributeError) as exc:
            raise ConfigError(f"invalid scenario: {exc}") from None

    def to_dict(self) -> dict:
        return {
            "benchmark": self.benchmark.to_dict(),
            "counterfactual": self.counterfactual.to_dict(),
            "groups": {g: list(self.partition.members[g]) for g in self.partition.groups},
        }


def load_scenario(path) -> tuple[RoyScenario, dict]:
    """Read a scenario JSON; returns the scenario and its optional ``config`` block."""
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ConfigError("scenario file must hold a JSON object")
    return RoyScenario.from_dict(doc), dict(doc.get("config", {}))


def roy_counterfactual_value_function(scenario: RoyScenario, config: SimConfig) -> ValueFunction:
    """``g(A) = f(theta_c on A, theta_b elsewhere) - f(theta_b)`` under common random numbers."""
    baseline = overall_inequality_change(scenario.benchmark, config)

    def g(mask):
        if mask == 0:
            return 0.0
        return overall_inequality_change(scenario.spliced(mask), config) - baseline

    return ValueFunction(g, scenario.partition.n_groups, pure=True, cost_hint=float(config.n_draws))


def inequality_scenario() -> RoyScenario:
    """Benchmark and counterfactual of the three-group inequality example."""
    benchmark = RoyParams((1, 1), (0.5, 1), 0, 1, 2, 3, tau=0.0, rho=0.95)
    counterfactual = RoyParams((1, 2), (0.5, 2), 0, 2, 2, 6, tau=0.0, rho=0.95)
    partition = GroupPartition(
        ("beta", "gamma", "sigma_sq"),
        {"beta": ("beta1", "beta2"), "gamma": ("gamma1", "gamma2"), "sigma_sq": ("sigma1_sq", "sigma2_sq")},
    )
    return RoyScenario(benchmark, counterfactual, partition)
