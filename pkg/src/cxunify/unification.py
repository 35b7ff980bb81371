"""Unify per-partition causal execution graphs into one gateway-annotated graph.

The pipeline has three pure stages.  ``build_matrix`` lays the input graphs
out as a matrix: one row per node of the union, one column per graph, each
cell holding that node's children (split) or parents (join) in that graph.
``classify`` reads each row's family of distinct non-empty cells and decides
how the node's targets alternate across graphs: groups that never partially
overlap another cell are promoted to composite AND groups; a family of
mutually disjoint cells is an exclusive choice (XOR); a family forming the
full non-empty powerset of its union is an exhaustive OR; anything else is a
non-exhaustive OR whose observed alternatives must be recorded to keep the
result unambiguous.  ``reconstruct`` then emits the unified graph, routing
each annotated row through a fresh gateway node.

``unify`` composes the stages, either over pre-built graphs or over an event
log via partitioning and per-partition discovery.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Mapping, Sequence

from .cx_model import (
    JOIN,
    SPLIT,
    CXGraph,
    GATEWAY_ID_PREFIX,
    GatewayKind,
    GatewayNode,
    UCXGraph,
    canonical_alternatives,
)
from .event_log import EventLog, Variant, partition as split_into_partitions


class UnificationError(Exception):
    """Unification cannot proceed on the given input."""


class InternalInvariantError(Exception):
    """A matrix/annotation combination that the pipeline can never produce."""


@dataclass(frozen=True)
class AndGroup:
    """A child set promoted to a single composite element (fires as a whole)."""

    members: tuple[str, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "members", tuple(sorted(self.members)))


Element = str | AndGroup
Cell = frozenset  # frozenset[Element]


class RowAnnotation(Enum):
    XOR = "xor"
    OR_EXHAUSTIVE = "or_exhaustive"
    OR = "or"


_ANNOTATION_KIND = {
    RowAnnotation.XOR: GatewayKind.XOR,
    RowAnnotation.OR_EXHAUSTIVE: GatewayKind.OR_EXHAUSTIVE,
    RowAnnotation.OR: GatewayKind.OR,
}


@dataclass(frozen=True)
class FamilyMatrix:
    """Neighbor-set matrix: rows = union of nodes, columns = input graphs."""

    direction: str
    row_nodes: tuple[str, ...]
    graph_ids: tuple[str, ...]
    cells: Mapping[str, tuple[frozenset[str], ...]]

    def row(self, node: str) -> tuple[frozenset[str], ...]:
        return self.cells[node]


@dataclass(frozen=True)
class ClassifiedRow:
    node: str
    index: int  # 1-based row number
    family: tuple[Cell, ...]  # rewritten distinct non-empty cells
    promotions: tuple[AndGroup, ...]
    annotation: RowAnnotation | None


@dataclass(frozen=True)
class ClassifiedMatrix:
    direction: str
    graph_ids: tuple[str, ...]
    rows: tuple[ClassifiedRow, ...]


ORAlternativesMap = dict[str, tuple[Cell, ...]]  # row node -> rewritten family


def element_sort_key(element: Element):
    if isinstance(element, AndGroup):
        return (1, element.members)
    return (0, (element,))


def cell_sort_key(cell: Cell):
    return (len(cell), tuple(sorted(element_sort_key(e) for e in cell)))


def sort_family(family: Iterable[Cell]) -> tuple[Cell, ...]:
    return tuple(sorted(set(family), key=cell_sort_key))


def build_matrix(
    graphs: Sequence[CXGraph],
    direction: str = SPLIT,
    graph_ids: Sequence[str] | None = None,
) -> FamilyMatrix:
    """Lay out the input graphs as a family matrix for the given direction."""
    if not graphs:
        raise UnificationError("need at least one input graph")
    if direction not in (SPLIT, JOIN):
        raise UnificationError(f"unknown direction {direction!r}")
    if graph_ids is None:
        graph_ids = tuple(f"g{i}" for i in range(1, len(graphs) + 1))
    else:
        graph_ids = tuple(graph_ids)
        if len(graph_ids) != len(graphs) or len(set(graph_ids)) != len(graph_ids):
            raise UnificationError("graph ids must be unique and match the graph count")

    row_nodes = tuple(sorted(frozenset().union(*(g.nodes for g in graphs))))
    cells: dict[str, tuple[frozenset[str], ...]] = {}
    for node in row_nodes:
        row = []
        for graph in graphs:
            if node not in graph.nodes:
                row.append(frozenset())
            elif direction == SPLIT:
                row.append(graph.out_set(node))
            else:
                row.append(graph.in_set(node))
        cells[node] = tuple(row)
    return FamilyMatrix(direction, row_nodes, graph_ids, cells)


def classify_family(
    cells: Iterable[frozenset[str]],
) -> tuple[tuple[Cell, ...], tuple[AndGroup, ...], RowAnnotation | None]:
    """Classify one row: AND promotion, then XOR / exhaustive-OR / OR checks.

    Returns the rewritten family (composites substituted), the promoted
    groups, and the row annotation (None for plain-edge and pure-AND rows).
    """
    family = {frozenset(cell) for cell in cells if cell}
    if not family:
        return (), (), None

    # A multi-element set is promotable when it never partially intersects
    # another family member, i.e. it meets every other cell as a subset or
    # not at all.  Distinct promotable sets are necessarily disjoint, so the
    # substitution below is order-independent.
    promotable = [
        candidate
        for candidate in family
        if len(candidate) >= 2
        and all(
            not (candidate & other) or candidate <= other
            for other in family
            if other != candidate
        )
    ]
    groups = tuple(
        AndGroup(tuple(group)) for group in sorted(promotable, key=sorted)
    )

    rewritten: set[Cell] = set()
    for cell in family:
        elements: set[Element] = set(cell)
        for group in groups:
            members = set(group.members)
            if members <= cell:
                elements -= members
                elements.add(group)
        rewritten.add(frozenset(elements))
    ordered = sort_family(rewritten)

    annotation: RowAnnotation | None = None
    if len(ordered) >= 2:
        if _pairwise_disjoint(ordered):
            annotation = RowAnnotation.XOR
        else:
            union: set[Element] = set().union(*ordered)
            if len(ordered) == 2 ** len(union) - 1:
                annotation = RowAnnotation.OR_EXHAUSTIVE
            else:
                annotation = RowAnnotation.OR
    return ordered, groups, annotation


def _pairwise_disjoint(cells: Sequence[Cell]) -> bool:
    seen: set[Element] = set()
    for cell in cells:
        if seen & cell:
            return False
        seen |= cell
    return True


def classify(matrix: FamilyMatrix) -> tuple[ClassifiedMatrix, ORAlternativesMap]:
    """Classify every row of the matrix; OR rows also land in the alternatives map."""
    rows: list[ClassifiedRow] = []
    alternatives: ORAlternativesMap = {}
    for index, node in enumerate(matrix.row_nodes, start=1):
        family, promotions, annotation = classify_family(matrix.row(node))
        rows.append(ClassifiedRow(node, index, family, promotions, annotation))
        if annotation is RowAnnotation.OR:
            alternatives[node] = family
    return ClassifiedMatrix(matrix.direction, matrix.graph_ids, rows), alternatives


class _GatewayIds:
    """Sequential per-kind gateway numbering (AND_C1, AND_C2, ..., XOR_C1, ...)."""

    def __init__(self, reserved: frozenset[str]):
        self._reserved = set(reserved)
        self._counters = {kind: 0 for kind in GatewayKind}

    def fresh(self, kind: GatewayKind) -> str:
        self._counters[kind] += 1
        gateway_id = f"{GATEWAY_ID_PREFIX[kind]}{self._counters[kind]}"
        while gateway_id in self._reserved:
            gateway_id += "_g"
        self._reserved.add(gateway_id)
        return gateway_id


def reconstruct(
    classified: ClassifiedMatrix,
    alternatives: ORAlternativesMap,
    input_nodes: Iterable[str],
) -> UCXGraph:
    """Build the unified graph from a classified matrix.

    Singleton rows become direct edges; composite groups fan out through a
    fresh AND gateway; annotated rows route all their targets through an
    outer XOR / exhaustive-OR / OR gateway.  For the join direction every
    edge is mirrored.
    """
    activity_nodes = frozenset(input_nodes)
    ids = _GatewayIds(activity_nodes)
    gateways: dict[str, GatewayNode] = {}
    edges: set[tuple[str, str]] = set()
    ucx_alternatives: dict[str, tuple[frozenset[str], ...]] = {}

    def add_gateway(kind: GatewayKind) -> str:
        gid = ids.fresh(kind)
        gateways[gid] = GatewayNode(gid, kind, classified.direction)
        return gid

    for row in classified.rows:
        if not row.family:
            continue
        union_elements = sorted(set().union(*row.family), key=element_sort_key)
        target_of: dict[Element, str] = {}
        for element in union_elements:
            if isinstance(element, AndGroup):
                and_id = add_gateway(GatewayKind.AND)
                for member in element.members:
                    edges.add((and_id, member))
                target_of[element] = and_id
            else:
                target_of[element] = element

        if row.annotation is None:
            if len(row.family) != 1 or len(row.family[0]) != 1:
                raise InternalInvariantError(
                    f"unannotated row {row.node!r} with family {row.family!r}"
                )
            (element,) = row.family[0]
            edges.add((row.node, target_of[element]))
            continue

        outer_id = add_gateway(_ANNOTATION_KIND[row.annotation])
        edges.add((row.node, outer_id))
        for element in union_elements:
            edges.add((outer_id, target_of[element]))
        if row.annotation is RowAnnotation.OR:
            family = alternatives.get(row.node)
            if family is None:
                raise InternalInvariantError(
                    f"OR row {row.node!r} missing from the alternatives map"
                )
            ucx_alternatives[outer_id] = canonical_alternatives(
                frozenset(target_of[element] for element in cell) for cell in family
            )

    if classified.direction == JOIN:
        edges = {(target, source) for source, target in edges}
    graph = UCXGraph(
        direction=classified.direction,
        activity_nodes=activity_nodes,
        gateways=gateways,
        edges=frozenset(edges),
        or_alternatives=ucx_alternatives,
    )
    graph.validate()
    return graph


def unify(
    inputs: EventLog | Sequence[CXGraph],
    direction: str = SPLIT,
    *,
    selected: Iterable[Variant | Sequence[str]] | None = None,
    split_by_variants: bool = False,
    config=None,
    graph_ids: Sequence[str] | None = None,
) -> UCXGraph:
    """Unify pre-built graphs, or an event log end to end.

    For an event log the traces are partitioned, each partition runs causal
    discovery, and the resulting graphs are unified.  Partitions too small to
    discover still contribute their activities as edge-free graphs so no node
    is lost.
    """
    if isinstance(inputs, EventLog):
        graphs, graph_ids = _discover_partition_graphs(
            inputs, selected, split_by_variants, config
        )
    else:
        graphs = list(inputs)
        if not graphs:
            raise UnificationError("need at least one input graph")
        for graph in graphs:
            graph.validate()
    matrix = build_matrix(graphs, direction, graph_ids)
    classified, alternatives = classify(matrix)
    input_nodes = frozenset().union(*(g.nodes for g in graphs))
    return reconstruct(classified, alternatives, input_nodes)


def _discover_partition_graphs(
    log: EventLog,
    selected,
    split_by_variants: bool,
    config,
) -> tuple[list[CXGraph], tuple[str, ...]]:
    from .discovery import DiscoveryConfig, SkippedPartition, discover_cx

    config = config or DiscoveryConfig()
    parts = split_into_partitions(log, selected, split_by_variants)
    if not parts:
        raise UnificationError("no usable partitions in the event log")
    graphs: list[CXGraph] = []
    ids: list[str] = []
    for number, part in enumerate(parts, start=1):
        try:
            graphs.append(discover_cx(part, config))
        except SkippedPartition as skip:
            warnings.warn(
                f"partition p{number} {sorted(part.activity_set)} skipped: {skip}; "
                "its activities join the unified graph without edges",
                stacklevel=2,
            )
            graphs.append(CXGraph.build(part.activity_set))
        ids.append(f"p{number}")
    return graphs, tuple(ids)
