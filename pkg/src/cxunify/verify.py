"""Executable correctness oracles for unified graphs, plus synthetic inputs.

``check_soundness`` enumerates, per source node of a unified graph, every
dependency group its gateways admit (XOR picks one target, an exhaustive OR
any non-empty combination, a non-exhaustive OR one of its recorded
alternatives, AND groups fire whole) and demands that each group equals the
full out-set of that node in some input graph.  ``check_completeness`` is the
converse: every input graph's out-set at a node must be one of the admitted
groups.  Join-direction graphs are checked on their mirror image.

Both checkers are exact enumerations and refuse inputs beyond a node bound
rather than sampling.  ``classify_oracle`` re-derives the row classification
of the unification algorithm by brute force (explicit powerset enumeration),
and ``gen_synthetic_log`` produces event logs with known ground-truth causal
structure for discovery tests.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .cx_model import (
    JOIN,
    CXGraph,
    GatewayKind,
    UCXGraph,
    topological_order,
)
from .event_log import ActivityEvent, EventLog, Trace
from .unification import RowAnnotation

DEFAULT_NODE_BOUND = 12
DEFAULT_UNION_BOUND = 16
_MAX_GROUPS = 100_000


class EnumerationBoundExceeded(Exception):
    """The instance is too large for exact enumeration; refusing to sample."""


class _ExpansionProblem(Exception):
    """The graph's gateway structure cannot be given a meaning at this node."""


@dataclass(frozen=True)
class Violation:
    node: str
    narrative: str
    group: tuple[str, ...] | None = None
    graph_id: str | None = None


@dataclass(frozen=True)
class VerificationReport:
    sound: bool | None
    complete: bool | None
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return self.sound is not False and self.complete is not False

    def merged(self, other: "VerificationReport") -> "VerificationReport":
        def pick(a, b):
            return a if b is None else b if a is None else (a and b)

        return VerificationReport(
            pick(self.sound, other.sound),
            pick(self.complete, other.complete),
            self.violations + other.violations,
        )


# --- admissible dependency groups --------------------------------------------

def _cross_union(option_lists: Sequence[list[frozenset[str]]]) -> list[frozenset[str]]:
    combos: list[frozenset[str]] = [frozenset()]
    for options in option_lists:
        if not options:
            return []
        combos = [prior | extra for prior in combos for extra in options]
        if len(combos) > _MAX_GROUPS:
            raise EnumerationBoundExceeded("admissible-group expansion too large")
        combos = list(dict.fromkeys(combos))
    return combos


def _options(u: UCXGraph, node: str, stack: frozenset[str]) -> list[frozenset[str]]:
    """All activity sets that firing ``node`` can bring about."""
    if not u.is_gateway(node):
        return [frozenset({node})]
    if node in stack:
        raise _ExpansionProblem(f"cycle through gateway {node}")
    gateway = u.gateways[node]
    children = sorted(u.successors(node))
    if not children:
        raise _ExpansionProblem(f"gateway {node} has no targets")
    deeper = stack | {node}
    per_child = {child: _options(u, child, deeper) for child in children}

    if gateway.kind is GatewayKind.AND:
        return _cross_union([per_child[c] for c in children])
    if gateway.kind is GatewayKind.XOR:
        merged: list[frozenset[str]] = []
        for child in children:
            merged.extend(per_child[child])
        return list(dict.fromkeys(merged))
    if gateway.kind is GatewayKind.OR_EXHAUSTIVE:
        merged = []
        for size in range(1, len(children) + 1):
            for subset in itertools.combinations(children, size):
                merged.extend(_cross_union([per_child[c] for c in subset]))
        if len(merged) > _MAX_GROUPS:
            raise EnumerationBoundExceeded("admissible-group expansion too large")
        return list(dict.fromkeys(merged))
    # non-exhaustive OR: only the recorded alternatives are admissible
    family = u.or_alternatives.get(node)
    if family is None:
        raise _ExpansionProblem(
            f"non-exhaustive OR gateway {node} has no recorded alternatives"
        )
    merged = []
    child_set = set(children)
    for group in family:
        missing = sorted(set(group) - child_set)
        if missing:
            raise _ExpansionProblem(
                f"alternative {sorted(group)} of {node} references non-targets {missing}"
            )
        merged.extend(_cross_union([per_child[member] for member in sorted(group)]))
    return list(dict.fromkeys(merged))


def admissible_groups(u: UCXGraph, source: str) -> set[frozenset[str]]:
    """Dependency groups the unified graph admits for one source activity."""
    targets = sorted(u.successors(source))
    if not targets:
        return set()
    return set(_cross_union([_options(u, t, frozenset()) for t in targets]))


def _oriented(u: UCXGraph, inputs: Sequence[CXGraph]) -> tuple[UCXGraph, list[CXGraph]]:
    if u.direction == JOIN:
        return u.reversed(), [g.reversed() for g in inputs]
    return u, list(inputs)


def _graph_ids(inputs: Sequence[CXGraph]) -> list[str]:
    return [f"g{i}" for i in range(1, len(inputs) + 1)]


def check_soundness(
    u: UCXGraph,
    inputs: Sequence[CXGraph],
    node_bound: int = DEFAULT_NODE_BOUND,
) -> VerificationReport:
    """Every admitted dependency group must be realized by some input graph."""
    if len(u.activity_nodes) > node_bound:
        raise EnumerationBoundExceeded(
            f"{len(u.activity_nodes)} activity nodes exceed the bound of {node_bound}"
        )
    u, inputs = _oriented(u, inputs)
    violations: list[Violation] = []

    for gid, gateway in sorted(u.gateways.items()):
        if gateway.kind is not GatewayKind.OR:
            continue
        family = u.or_alternatives.get(gid)
        fan = u.successors(gid)
        if family is None:
            violations.append(
                Violation(gid, f"OR gateway {gid} lacks its alternatives annotation")
            )
        else:
            union = frozenset().union(*family) if family else frozenset()
            if union != fan:
                violations.append(
                    Violation(
                        gid,
                        f"alternatives of {gid} cover {sorted(union)} but the "
                        f"gateway targets {sorted(fan)}",
                    )
                )

    for node in sorted(u.activity_nodes):
        try:
            groups = admissible_groups(u, node)
        except _ExpansionProblem as problem:
            violations.append(Violation(node, str(problem)))
            continue
        for group in sorted(groups, key=sorted):
            if not group:
                continue
            if not any(
                node in g.nodes and g.out_set(node) == group for g in inputs
            ):
                violations.append(
                    Violation(
                        node,
                        f"node {node} admits dependency group {sorted(group)} "
                        "that no input graph realizes",
                        group=tuple(sorted(group)),
                    )
                )
    return VerificationReport(
        sound=not violations, complete=None, violations=tuple(violations)
    )


def check_completeness(
    u: UCXGraph,
    inputs: Sequence[CXGraph],
    node_bound: int = DEFAULT_NODE_BOUND,
) -> VerificationReport:
    """Every input graph's dependency group must be admitted by the unified graph."""
    all_nodes = u.activity_nodes.union(*(g.nodes for g in inputs)) if inputs else u.activity_nodes
    if len(all_nodes) > node_bound:
        raise EnumerationBoundExceeded(
            f"{len(all_nodes)} activity nodes exceed the bound of {node_bound}"
        )
    u, inputs = _oriented(u, inputs)
    violations: list[Violation] = []
    for graph_id, graph in zip(_graph_ids(inputs), inputs):
        for node in sorted(graph.nodes):
            out_set = graph.out_set(node)
            if not out_set:
                continue
            if node not in u.activity_nodes:
                violations.append(
                    Violation(
                        node,
                        f"node {node} of {graph_id} is absent from the unified graph",
                        graph_id=graph_id,
                    )
                )
                continue
            try:
                groups = admissible_groups(u, node)
            except _ExpansionProblem as problem:
                violations.append(Violation(node, str(problem), graph_id=graph_id))
                continue
            if out_set in groups:
                continue
            reachable = frozenset().union(*groups) if groups else frozenset()
            lost = sorted(out_set - reachable)
            if lost:
                detail = ", ".join(f"({node}, {target})" for target in lost)
                narrative = f"missing edge(s) {detail} of {graph_id}"
            else:
                narrative = (
                    f"dependency group {sorted(out_set)} of {graph_id} at {node} "
                    "is not admitted as a whole"
                )
            violations.append(
                Violation(node, narrative, group=tuple(sorted(out_set)), graph_id=graph_id)
            )
    return VerificationReport(
        sound=None, complete=not violations, violations=tuple(violations)
    )


def verify_unification(
    u: UCXGraph,
    inputs: Sequence[CXGraph],
    node_bound: int = DEFAULT_NODE_BOUND,
) -> VerificationReport:
    """Run both checks and merge the reports."""
    return check_soundness(u, inputs, node_bound).merged(
        check_completeness(u, inputs, node_bound)
    )


# --- brute-force classification oracle ----------------------------------------

def classify_oracle(
    family: Iterable[Iterable[str]],
    union_bound: int = DEFAULT_UNION_BOUND,
) -> RowAnnotation | None:
    """Independent re-derivation of the row classification.

    Promotion candidates are tested with the literal partial-intersection
    predicate, exclusivity with an explicit pairwise loop, and the exhaustive
    OR by materializing every non-empty subset of the union and comparing
    set-for-set.
    """
    cells = {frozenset(cell) for cell in family if cell}
    if not cells:
        return None
    universe = frozenset().union(*cells)
    if len(universe) > union_bound:
        raise EnumerationBoundExceeded(
            f"union of {len(universe)} members exceeds the bound of {union_bound}"
        )

    promoted = []
    for candidate in cells:
        if len(candidate) < 2:
            continue
        intersects_partially = False
        for other in cells:
            if other == candidate:
                continue
            if candidate & other and candidate - other:
                intersects_partially = True
                break
        if not intersects_partially:
            promoted.append(candidate)

    def rewrite(cell: frozenset[str]) -> frozenset:
        elements: set = set(cell)
        for group in promoted:
            if group <= cell:
                elements -= group
                elements.add(("and-group", tuple(sorted(group))))
        return frozenset(elements)

    rewritten = {rewrite(cell) for cell in cells}
    if len(rewritten) < 2:
        return None

    exclusive = True
    for a, b in itertools.combinations(rewritten, 2):
        if a & b:
            exclusive = False
            break
    if exclusive:
        return RowAnnotation.XOR

    union = frozenset().union(*rewritten)
    powerset_nonempty = {
        frozenset(subset)
        for size in range(1, len(union) + 1)
        for subset in itertools.combinations(sorted(union, key=repr), size)
    }
    if rewritten == powerset_nonempty:
        return RowAnnotation.OR_EXHAUSTIVE
    return RowAnnotation.OR


# --- synthetic event logs -------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSpec:
    """Ground-truth causal structure for a generated event log.

    Every activity of every trace receives a timestamp: roots draw
    ``base_time`` plus noise, every other activity is the coefficient-weighted
    sum of its parents' timestamps plus the edge delay plus independent
    non-Gaussian noise.  With probability ``order_flip_prob`` per trace and
    edge, the two endpoint timestamps are swapped to emulate recording noise.
    """

    activities: tuple[str, ...]
    edges: tuple[tuple[str, str], ...]
    n_traces: int
    seed: int
    coefficients: Mapping[tuple[str, str], float] = field(default_factory=dict)
    delays: Mapping[tuple[str, str], float] = field(default_factory=dict)
    default_delay: float = 5.0
    noise: str = "uniform"
    noise_scale: float = 0.25
    base_time: float = 0.0
    order_flip_prob: float = 0.0

    def __post_init__(self) -> None:
        if not self.activities:
            raise ValueError("need at least one activity")
        if len(set(self.activities)) != len(self.activities):
            raise ValueError("activity names must be unique")
        known = set(self.activities)
        for edge in self.edges:
            if edge[0] not in known or edge[1] not in known:
                raise ValueError(f"edge {edge} references unknown activity")
        if topological_order(self.activities, self.edges) is None:
            raise ValueError("ground-truth graph must be acyclic")
        if self.noise not in ("uniform", "laplace"):
            raise ValueError(f"noise must be non-Gaussian (uniform/laplace), got {self.noise!r}")
        if not 0.0 <= self.order_flip_prob <= 0.5:
            raise ValueError("order_flip_prob must be in [0, 0.5]")
        if self.n_traces < 1:
            raise ValueError("n_traces must be >= 1")

    def graph(self) -> CXGraph:
        return CXGraph.build(self.activities, self.edges)


def gen_synthetic_log(spec: SyntheticSpec) -> EventLog:
    """Generate a reproducible event log realizing the spec's causal structure."""
    rng = np.random.default_rng(spec.seed)
    order = topological_order(spec.activities, spec.edges)
    assert order is not None
    parents: dict[str, list[tuple[str, str]]] = {name: [] for name in spec.activities}
    for cause, effect in spec.edges:
        parents[effect].append((cause, effect))

    def noise() -> float:
        if spec.noise == "uniform":
            return float(rng.uniform(-spec.noise_scale, spec.noise_scale))
        return float(rng.laplace(0.0, spec.noise_scale))

    width = len(str(spec.n_traces))
    traces = []
    for i in range(spec.n_traces):
        case_id = f"t{i + 1:0{width}d}"
        seconds: dict[str, float] = {}
        for name in order:
            incoming = parents[name]
            if not incoming:
                seconds[name] = spec.base_time + noise()
            else:
                value = 0.0
                for cause, effect in incoming:
                    coefficient = spec.coefficients.get((cause, effect), 1.0)
                    value += coefficient * seconds[cause]
                    value += spec.delays.get((cause, effect), spec.default_delay)
                seconds[name] = value + noise()
        for cause, effect in spec.edges:
            if rng.random() < spec.order_flip_prob:
                seconds[cause], seconds[effect] = seconds[effect], seconds[cause]
        events = tuple(
            ActivityEvent(case_id, name, int(round(seconds[name] * 1000.0)))
            for name in sorted(spec.activities, key=lambda a: (seconds[a], a))
        )
        traces.append(Trace(case_id, events))
    return EventLog(tuple(traces))


def random_synthetic_spec(
    seed: int,
    n_activities: int = 5,
    n_traces: int = 2000,
    order_flip_prob: float = 0.0,
    edge_prob: float = 0.45,
) -> SyntheticSpec:
    """Random ground-truth DAG with per-edge random delays."""
    rng = random.Random(seed)
    names = tuple(chr(ord("A") + i) for i in range(n_activities))
    edges = []
    delays = {}
    for i, j in itertools.combinations(range(n_activities), 2):
        if rng.random() < edge_prob:
            edge = (names[i], names[j])
            edges.append(edge)
            delays[edge] = rng.uniform(2.0, 8.0)
    return SyntheticSpec(
        activities=names,
        edges=tuple(edges),
        n_traces=n_traces,
        seed=seed,
        delays=delays,
        noise="uniform",
        noise_scale=0.25,
        order_flip_prob=order_flip_prob,
    )


def random_graph_set(
    seed: int, max_nodes: int = 8, max_graphs: int = 5
) -> list[CXGraph]:
    """Random family of small DAGs over a shared activity pool."""
    rng = random.Random(seed)
    pool = [chr(ord("a") + i) for i in range(max_nodes)]
    graphs = []
    for _ in range(rng.randint(1, max_graphs)):
        nodes = rng.sample(pool, rng.randint(1, len(pool)))
        rng.shuffle(nodes)
        density = rng.uniform(0.1, 0.7)
        edges = {
            (nodes[i], nodes[j])
            for i in range(len(nodes))
            for j in range(i + 1, len(nodes))
            if rng.random() < density
        }
        graphs.append(CXGraph.build(nodes, edges))
    return graphs
