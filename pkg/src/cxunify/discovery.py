"""Per-partition causal discovery over activity timestamps.

The default backend is a DirectLiNGAM-style procedure: z-score the partition's
timestamp columns, find a causal order by repeatedly extracting the most
exogenous variable (pairwise likelihood-ratio score built from Hyvarinen's
maximum-entropy approximation of differential entropy), then estimate edge
coefficients by ordinary least squares of each variable on its predecessors,
dropping coefficients below a prune threshold.

Before discovery runs, precedence statistics over the partition's traces
build a blacklist: if activity B precedes activity A in at most a fraction
theta of the traces, the edge B -> A is forbidden.  The blacklist is enforced
as a hard constraint, both on the causal-order search and on the regressor
sets, so a forbidden edge can never be emitted.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .cx_model import CXGraph, Edge
from .event_log import Partition, REPEAT_POLICIES, timestamp_rows

Blacklist = frozenset[Edge]


class SkippedPartition(Exception):
    """Partition is too small for discovery; caller may keep its nodes edge-free."""

    def __init__(self, activity_set: frozenset[str], n_traces: int, needed: int):
        super().__init__(f"{n_traces} traces, need at least {needed}")
        self.activity_set = activity_set
        self.n_traces = n_traces
        self.needed = needed


@dataclass(frozen=True)
class DiscoveryConfig:
    theta: float = 0.05
    coeff_prune: float = 0.05
    min_traces: int = 10
    backend: str = "direct-lingam"
    repeat_policy: str = "first"

    def __post_init__(self) -> None:
        if not 0.0 <= self.theta <= 0.5:
            raise ValueError(f"theta must be in [0, 0.5], got {self.theta}")
        if self.coeff_prune < 0.0:
            raise ValueError(f"coeff_prune must be >= 0, got {self.coeff_prune}")
        if self.min_traces < 1:
            raise ValueError(f"min_traces must be >= 1, got {self.min_traces}")
        if self.repeat_policy not in REPEAT_POLICIES:
            raise ValueError(f"unknown repeat policy {self.repeat_policy!r}")


@dataclass(frozen=True)
class PrecedenceStats:
    """Share of traces in which one activity strictly precedes another.

    ``proportions[(b, a)]`` is the fraction of traces where b's timestamp is
    strictly smaller than a's; ties count towards neither direction, so the
    two orientations of a pair sum to at most 1.
    """

    activities: tuple[str, ...]
    n_traces: int
    proportions: Mapping[Edge, float]

    def proportion(self, first: str, then: str) -> float:
        return self.proportions[(first, then)]


def precedence_stats(
    part: Partition, repeat_policy: str = "first"
) -> PrecedenceStats:
    """Exact precedence counts over the partition's member traces."""
    if not part.traces:
        raise ValueError("partition has no traces")
    activities, _, rows, _ = timestamp_rows(part, repeat_policy)
    table = np.asarray(rows, dtype=np.int64)
    n = table.shape[0]
    proportions: dict[Edge, float] = {}
    for i, first in enumerate(activities):
        for j, then in enumerate(activities):
            if i == j:
                continue
            count = int(np.count_nonzero(table[:, i] < table[:, j]))
            proportions[(first, then)] = count / n
    return PrecedenceStats(activities, n, proportions)


def build_blacklist(stats: PrecedenceStats, theta: float) -> Blacklist:
    """Forbid every edge whose cause precedes its effect in at most theta of traces."""
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must be in [0, 1], got {theta}")
    return frozenset(
        pair for pair, proportion in stats.proportions.items() if proportion <= theta
    )


def discover_cx(part: Partition, config: DiscoveryConfig = DiscoveryConfig()) -> CXGraph:
    """Discover the causal execution DAG of one partition.

    Raises SkippedPartition when fewer than ``config.min_traces`` traces are
    available.  Zero-variance activity columns stay in the graph as isolated
    nodes and are reported as warnings.
    """
    if len(part.traces) < config.min_traces:
        raise SkippedPartition(part.activity_set, len(part.traces), config.min_traces)
    activities, _, rows, flagged = timestamp_rows(part, config.repeat_policy)
    if flagged:
        warnings.warn(
            f"{len(flagged)} trace(s) with repeated activities handled by "
            f"policy {config.repeat_policy!r}: {sorted(flagged)[:5]}...",
            stacklevel=2,
        )
    if len(rows) < config.min_traces:
        raise SkippedPartition(part.activity_set, len(rows), config.min_traces)
    if len(activities) <= 1:
        return CXGraph.build(part.activity_set)

    table = np.asarray(rows, dtype=np.float64)
    stds = table.std(axis=0)
    degenerate = [activities[i] for i in np.flatnonzero(stds <= 0.0)]
    if degenerate:
        warnings.warn(
            f"zero-variance activity column(s) {degenerate}: kept as isolated "
            "nodes, incident edges undetermined",
            stacklevel=2,
        )
    active = [i for i, name in enumerate(activities) if name not in degenerate]
    if len(active) < 2:
        return CXGraph.build(part.activity_set)

    names = tuple(activities[i] for i in active)
    data = table[:, active]
    data = (data - data.mean(axis=0)) / data.std(axis=0)

    stats = precedence_stats(part, config.repeat_policy)
    forbidden = build_blacklist(stats, config.theta)
    forbidden_active = frozenset(
        (cause, effect)
        for cause, effect in forbidden
        if cause in names and effect in names
    )

    backend = get_backend(config.backend)
    coefficients = backend(data, names, forbidden_active, config)
    leaked = set(coefficients) & forbidden
    if leaked:
        raise RuntimeError(f"backend {config.backend!r} emitted blacklisted edges {leaked}")
    return CXGraph.build(part.activity_set, coefficients.keys(), coefficients)


# --- backends ----------------------------------------------------------------

DiscoveryBackend = Callable[
    [np.ndarray, tuple[str, ...], Blacklist, DiscoveryConfig], dict[Edge, float]
]

_BACKENDS: dict[str, DiscoveryBackend] = {}


def register_backend(name: str, backend: DiscoveryBackend) -> None:
    _BACKENDS[name] = backend


def get_backend(name: str) -> DiscoveryBackend:
    try:
        return _BACKENDS[name]
    except KeyError:
        known = ", ".join(sorted(_BACKENDS))
        raise ValueError(f"unknown discovery backend {name!r} (known: {known})") from None


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BACKENDS))


def _entropy(u: np.ndarray) -> float:
    # Hyvarinen's maximum-entropy approximation of differential entropy.
    k1, k2, gamma = 79.047, 7.4129, 0.37457
    return (
        (1.0 + np.log(2.0 * np.pi)) / 2.0
        - k1 * (np.mean(np.log(np.cosh(u))) - gamma) ** 2
        - k2 * np.mean(u * np.exp(-(u**2) / 2.0)) ** 2
    )


def _residual(xi: np.ndarray, xj: np.ndarray) -> np.ndarray:
    var = np.var(xj)
    if var <= 1e-24:
        return xi.copy()
    cov = np.mean(xi * xj) - np.mean(xi) * np.mean(xj)
    return xi - (cov / var) * xj


def _standardized(x: np.ndarray) -> np.ndarray:
    std = np.std(x)
    if std <= 1e-12:
        return x - np.mean(x)
    return (x - np.mean(x)) / std


def _pairwise_score(xi: np.ndarray, xj: np.ndarray) -> float:
    """Negative evidence against xi being upstream of xj (0 is best for xi)."""
    xi_std = _standardized(xi)
    xj_std = _standardized(xj)
    ri_j = _standardized(_residual(xi_std, xj_std))
    rj_i = _standardized(_residual(xj_std, xi_std))
    diff = (_entropy(xj_std) + _entropy(ri_j)) - (_entropy(xi_std) + _entropy(rj_i))
    return min(0.0, diff) ** 2


def _causal_order(
    data: np.ndarray, precede: set[tuple[int, int]]
) -> list[int]:
    """DirectLiNGAM order search with hard (from, to) precedence constraints."""
    k = data.shape[1]
    remaining = list(range(k))
    working = data.copy()
    order: list[int] = []
    while remaining:
        in_play = set(remaining)
        blocked = {
            after for before, after in precede if before in in_play and after in in_play
        }
        candidates = [i for i in remaining if i not in blocked] or list(remaining)
        if len(candidates) == 1:
            chosen = candidates[0]
        else:
            scores = []
            for i in candidates:
                total = 0.0
                for j in remaining:
                    if j != i:
                        total += _pairwise_score(working[:, i], working[:, j])
                scores.append(total)
            chosen = candidates[int(np.argmin(scores))]
        order.append(chosen)
        remaining.remove(chosen)
        for i in remaining:
            working[:, i] = _residual(working[:, i], working[:, chosen])
    return order


def _direct_lingam_backend(
    data: np.ndarray,
    names: tuple[str, ...],
    forbidden: Blacklist,
    config: DiscoveryConfig,
) -> dict[Edge, float]:
    index = {name: i for i, name in enumerate(names)}
    forbidden_idx = {(index[c], index[e]) for c, e in forbidden}
    # An asymmetric ban of cause -> effect is also enforced on the order:
    # the effect may only be placed before the banned cause.
    precede = {
        (effect, cause)
        for cause, effect in forbidden_idx
        if (effect, cause) not in forbidden_idx
    }
    order = _causal_order(data, precede)

    coefficients: dict[Edge, float] = {}
    for position, effect in enumerate(order):
        regressors = [
            cause for cause in order[:position] if (cause, effect) not in forbidden_idx
        ]
        if not regressors:
            continue
        beta, *_ = np.linalg.lstsq(data[:, regressors], data[:, effect], rcond=None)
        for cause, coefficient in zip(regressors, beta):
            if abs(coefficient) >= config.coeff_prune:
                coefficients[(names[cause], names[effect])] = float(coefficient)
    return coefficients


register_backend("direct-lingam", _direct_lingam_backend)
