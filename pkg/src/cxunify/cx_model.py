"""Graph model for causal execution (CX) graphs and their unified, gateway-annotated form.

A CX graph is a plain DAG over activity names where an edge (cause, effect)
states that executing the cause brings about the effect.  The unified form
adds gateway nodes (AND / XOR / OR / exhaustive OR, in split or join
orientation) that make the alternation of causal flow across process
variants explicit.  Non-exhaustive OR gateways additionally carry the
observed families of targets ("alternatives") without which they would be
ambiguous.

Both graph kinds serialize to a canonical JSON form (stable bytes for equal
graphs) and to Graphviz DOT.
"""

from __future__ import annotations

import graphlib
import json
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping

Edge = tuple[str, str]


class GraphError(Exception):
    """A graph value violates its structural invariants."""


class GatewayKind(Enum):
    AND = "and"
    XOR = "xor"
    OR = "or"
    OR_EXHAUSTIVE = "or_exhaustive"


SPLIT = "split"
JOIN = "join"

GATEWAY_ID_PREFIX = {
    GatewayKind.AND: "AND_C",
    GatewayKind.XOR: "XOR_C",
    GatewayKind.OR: "OR_C",
    GatewayKind.OR_EXHAUSTIVE: "ORE_C",
}

_DOT_GATEWAY_LABEL = {
    GatewayKind.AND: "&",
    GatewayKind.XOR: "×",
    GatewayKind.OR: "O",
    GatewayKind.OR_EXHAUSTIVE: "O*",
}


@dataclass(frozen=True)
class GatewayNode:
    """A gateway occurrence; ``id`` is unique within one unified graph."""

    id: str
    kind: GatewayKind
    direction: str = SPLIT


@dataclass(frozen=True)
class CXGraph:
    """Causal execution DAG over activity names, with optional edge coefficients."""

    nodes: frozenset[str]
    edges: frozenset[Edge]
    coefficients: Mapping[Edge, float] = field(default_factory=dict)

    @classmethod
    def build(
        cls,
        nodes: Iterable[str],
        edges: Iterable[Edge] = (),
        coefficients: Mapping[Edge, float] | None = None,
    ) -> "CXGraph":
        graph = cls(frozenset(nodes), frozenset(edges), dict(coefficients or {}))
        graph.validate()
        return graph

    def validate(self) -> None:
        for cause, effect in self.edges:
            if cause not in self.nodes or effect not in self.nodes:
                raise GraphError(f"unknown node in edge ({cause!r}, {effect!r})")
            if cause == effect:
                raise GraphError(f"self-loop on {cause!r}")
        for edge in self.coefficients:
            if edge not in self.edges:
                raise GraphError(f"coefficient for absent edge {edge!r}")
        if topological_order(self.nodes, self.edges) is None:
            raise GraphError("graph contains a cycle")

    def out_set(self, node: str) -> frozenset[str]:
        return frozenset(effect for cause, effect in self.edges if cause == node)

    def in_set(self, node: str) -> frozenset[str]:
        return frozenset(cause for cause, effect in self.edges if effect == node)

    def reversed(self) -> "CXGraph":
        return CXGraph(
            self.nodes,
            frozenset((b, a) for a, b in self.edges),
            {(b, a): c for (a, b), c in self.coefficients.items()},
        )


@dataclass(frozen=True)
class UCXGraph:
    """Unified causal execution graph: activity nodes plus gateway nodes.

    ``or_alternatives`` maps each non-exhaustive OR gateway id to the family
    of target groups that were actually observed; group members are node ids
    (activities, or AND gateway ids standing for a promoted group).
    """

    direction: str
    activity_nodes: frozenset[str]
    gateways: Mapping[str, GatewayNode]
    edges: frozenset[Edge]
    or_alternatives: Mapping[str, tuple[frozenset[str], ...]]

    def all_nodes(self) -> frozenset[str]:
        return self.activity_nodes | frozenset(self.gateways)

    def successors(self, node: str) -> frozenset[str]:
        return frozenset(t for s, t in self.edges if s == node)

    def predecessors(self, node: str) -> frozenset[str]:
        return frozenset(s for s, t in self.edges if t == node)

    def is_gateway(self, node: str) -> bool:
        return node in self.gateways

    def reversed(self) -> "UCXGraph":
        """Mirror the graph: reverse edges and flip the gateway direction."""
        flipped = JOIN if self.direction == SPLIT else SPLIT
        return UCXGraph(
            direction=flipped,
            activity_nodes=self.activity_nodes,
            gateways={
                gid: GatewayNode(gid, gw.kind, flipped)
                for gid, gw in self.gateways.items()
            },
            edges=frozenset((t, s) for s, t in self.edges),
            or_alternatives=dict(self.or_alternatives),
        )

    def validate(self) -> None:
        if self.direction not in (SPLIT, JOIN):
            raise GraphError(f"unknown direction {self.direction!r}")
        overlap = self.activity_nodes & frozenset(self.gateways)
        if overlap:
            raise GraphError(f"activity and gateway ids overlap: {sorted(overlap)}")
        known = self.all_nodes()
        for source, target in self.edges:
            if source not in known or target not in known:
                raise GraphError(f"unknown node in edge ({source!r}, {target!r})")
            if source == target:
                raise GraphError(f"self-loop on {source!r}")
        if topological_order(known, self.edges) is None:
            raise GraphError("graph contains a cycle")
        for gid, gateway in self.gateways.items():
            if gateway.direction != self.direction:
                raise GraphError(f"gateway {gid} direction differs from graph direction")
            fan_in, fan_out = len(self.predecessors(gid)), len(self.successors(gid))
            if self.direction == SPLIT:
                ok = fan_in == 1 and fan_out >= 2
            else:
                ok = fan_in >= 2 and fan_out == 1
            if not ok:
                raise GraphError(
                    f"gateway {gid} has fan-in {fan_in} / fan-out {fan_out}, "
                    f"invalid for a {self.direction} gateway"
                )
            if gateway.kind is GatewayKind.OR and gid not in self.or_alternatives:
                raise GraphError(f"OR gateway {gid} lacks an alternatives entry")
        for gid, family in self.or_alternatives.items():
            gateway = self.gateways.get(gid)
            if gateway is None or gateway.kind is not GatewayKind.OR:
                raise GraphError(f"alternatives recorded for non-OR node {gid!r}")
            fan = (
                self.successors(gid) if self.direction == SPLIT else self.predecessors(gid)
            )
            union = frozenset().union(*family) if family else frozenset()
            if union != fan:
                raise GraphError(
                    f"alternatives of {gid} cover {sorted(union)} "
                    f"but the gateway links {sorted(fan)}"
                )


def topological_order(nodes: Iterable[str], edges: Iterable[Edge]) -> list[str] | None:
    """Topological order of the graph, or None if it contains a cycle."""
    sorter = graphlib.TopologicalSorter({node: set() for node in nodes})
    for cause, effect in edges:
        sorter.add(effect, cause)
    try:
        return list(sorter.static_order())
    except graphlib.CycleError:
        return None


def canonical_alternatives(family: Iterable[Iterable[str]]) -> tuple[frozenset[str], ...]:
    """Deterministic ordering for a family of alternative target groups."""
    groups = {frozenset(group) for group in family}
    return tuple(sorted(groups, key=lambda g: (len(g), sorted(g))))


# --- JSON serialization -----------------------------------------------------

def _sorted_edges(edges: Iterable[Edge]) -> list[Edge]:
    return sorted(edges)


def to_json(graph: CXGraph | UCXGraph) -> str:
    """Canonical JSON text; equal graphs always serialize to identical bytes."""
    if isinstance(graph, CXGraph):
        payload = {
            "kind": "cx",
            "nodes": sorted(graph.nodes),
            "edges": [
                _edge_obj(edge, graph.coefficients.get(edge))
                for edge in _sorted_edges(graph.edges)
            ],
        }
    elif isinstance(graph, UCXGraph):
        payload = {
            "kind": "ucx",
            "direction": graph.direction,
            "activity_nodes": sorted(graph.activity_nodes),
            "gateways": [
                {"id": gid, "kind": graph.gateways[gid].kind.value}
                for gid in sorted(graph.gateways)
            ],
            "edges": [_edge_obj(edge, None) for edge in _sorted_edges(graph.edges)],
            "or_alternatives": {
                gid: [sorted(group) for group in canonical_alternatives(family)]
                for gid, family in sorted(graph.or_alternatives.items())
            },
        }
    else:
        raise TypeError(f"not a graph: {type(graph).__name__}")
    return json.dumps(payload, indent=2, sort_keys=False) + "\n"


def _edge_obj(edge: Edge, coefficient: float | None) -> dict:
    obj: dict = {"source": edge[0], "target": edge[1]}
    if coefficient is not None:
        obj["coefficient"] = coefficient
    return obj


def from_json(text: str | bytes) -> CXGraph | UCXGraph:
    """Parse a graph from its JSON form, checking structural integrity."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(f"invalid JSON: {exc}") from exc
    if not isinstance(payload, dict) or "kind" not in payload:
        raise GraphError("missing 'kind' field")
    kind = payload["kind"]
    if kind == "cx":
        return _cx_from_payload(payload)
    if kind == "ucx":
        return _ucx_from_payload(payload)
    raise GraphError(f"unknown graph kind {kind!r}")


def _parse_edges(payload: dict, known: frozenset[str]) -> tuple[frozenset[Edge], dict[Edge, float]]:
    edges: set[Edge] = set()
    coefficients: dict[Edge, float] = {}
    for obj in payload.get("edges", []):
        try:
            edge = (obj["source"], obj["target"])
        except (TypeError, KeyError) as exc:
            raise GraphError(f"malformed edge object {obj!r}") from exc
        for endpoint in edge:
            if endpoint not in known:
                raise GraphError(f"unknown node {endpoint!r} in edge {edge!r}")
        edges.add(edge)
        if "coefficient" in obj:
            coefficients[edge] = float(obj["coefficient"])
    return frozenset(edges), coefficients


def _cx_from_payload(payload: dict) -> CXGraph:
    nodes = frozenset(payload.get("nodes", []))
    edges, coefficients = _parse_edges(payload, nodes)
    graph = CXGraph(nodes, edges, coefficients)
    graph.validate()
    return graph


def _ucx_from_payload(payload: dict) -> UCXGraph:
    direction = payload.get("direction", SPLIT)
    activity_nodes = frozenset(payload.get("activity_nodes", []))
    gateways: dict[str, GatewayNode] = {}
    for obj in payload.get("gateways", []):
        try:
            gateway = GatewayNode(obj["id"], GatewayKind(obj["kind"]), direction)
        except (TypeError, KeyError, ValueError) as exc:
            raise GraphError(f"malformed gateway object {obj!r}") from exc
        if gateway.id in gateways or gateway.id in activity_nodes:
            raise GraphError(f"duplicate node id {gateway.id!r}")
        gateways[gateway.id] = gateway
    known = activity_nodes | frozenset(gateways)
    edges, _ = _parse_edges(payload, known)
    alternatives: dict[str, tuple[frozenset[str], ...]] = {}
    for gid, family in payload.get("or_alternatives", {}).items():
        if gid not in gateways:
            raise GraphError(f"alternatives for unknown gateway {gid!r}")
        for group in family:
            for member in group:
                if member not in known:
                    raise GraphError(f"unknown node {member!r} in alternatives of {gid}")
        alternatives[gid] = canonical_alternatives(family)
    # Deliberately no validate() here: the verification tooling must be able
    # to load structurally suspect unified graphs in order to judge them.
    return UCXGraph(direction, activity_nodes, gateways, edges, alternatives)


# --- DOT rendering ----------------------------------------------------------

def to_dot(graph: CXGraph | UCXGraph) -> str:
    """Graphviz DOT text with lexicographically sorted, quoted node ids."""
    lines = ["digraph cx {", "  rankdir=LR;"]
    if isinstance(graph, CXGraph):
        for node in sorted(graph.nodes):
            lines.append(f'  {_quote(node)} [shape=box];')
        for edge in _sorted_edges(graph.edges):
            attr = ""
            coefficient = graph.coefficients.get(edge)
            if coefficient is not None:
                attr = f' [label="{coefficient:.3g}"]'
            lines.append(f"  {_quote(edge[0])} -> {_quote(edge[1])}{attr};")
    elif isinstance(graph, UCXGraph):
        for node in sorted(graph.activity_nodes):
            lines.append(f'  {_quote(node)} [shape=box];')
        for gid in sorted(graph.gateways):
            gateway = graph.gateways[gid]
            label = _DOT_GATEWAY_LABEL[gateway.kind]
            if gateway.kind is GatewayKind.OR:
                groups = " | ".join(
                    "{" + ",".join(sorted(group)) + "}"
                    for group in graph.or_alternatives.get(gid, ())
                )
                label = f"{label} {groups}" if groups else label
            lines.append(f"  {_quote(gid)} [shape=diamond, label={_quote(label)}];")
        for edge in _sorted_edges(graph.edges):
            lines.append(f"  {_quote(edge[0])} -> {_quote(edge[1])};")
    else:
        raise TypeError(f"not a graph: {type(graph).__name__}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def _quote(name: str) -> str:
    escaped = name.replace("\\", "\\\\").replace('"', '\\"')
    return f'"{escaped}"'
