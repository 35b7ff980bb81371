"""Boolean view of non-exhaustive OR gateways and common-factor extraction.

A non-exhaustive OR gateway fires exactly one of its recorded alternatives,
so its consequence is an exclusive disjunction with one conjunctive clause
per alternative, e.g. {(a,b),(a,c)} reads (a AND b) XOR (a AND c).
``factor`` pulls literals shared by all clauses in front of the XOR,
(a AND b) XOR (a AND c) becoming a AND (b XOR c), without ever introducing
negation or constants; rewrites that would need them are left alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Union

from .cx_model import JOIN, GatewayKind, UCXGraph


@dataclass(frozen=True)
class Literal:
    name: str


@dataclass(frozen=True)
class And:
    terms: tuple["BooleanExpr", ...]


@dataclass(frozen=True)
class Xor:
    branches: tuple["BooleanExpr", ...]


BooleanExpr = Union[Literal, And, Xor]


def or_formula(alternatives: Iterable[Iterable[str]]) -> BooleanExpr:
    """Exclusive disjunction with one conjunction per alternative."""
    groups = sorted(
        {frozenset(group) for group in alternatives}, key=lambda g: (len(g), sorted(g))
    )
    if not groups:
        raise ValueError("need at least one alternative")
    if any(not group for group in groups):
        raise ValueError("alternatives must be non-empty")
    clauses = [_clause(group) for group in groups]
    if len(clauses) == 1:
        return clauses[0]
    return Xor(tuple(clauses))


def _clause(group: frozenset[str]) -> BooleanExpr:
    literals = tuple(Literal(name) for name in sorted(group))
    return literals[0] if len(literals) == 1 else And(literals)


def _flat_conjunction(expr: BooleanExpr) -> frozenset[str] | None:
    """Literal set of a negation-free conjunction, or None for other shapes."""
    if isinstance(expr, Literal):
        return frozenset({expr.name})
    if isinstance(expr, And) and all(isinstance(t, Literal) for t in expr.terms):
        return frozenset(t.name for t in expr.terms)
    return None


def factor(expr: BooleanExpr) -> BooleanExpr:
    """Extract literals common to all XOR branches into a conjunctive prefix.

    Truth-table preserving and idempotent.  The rewrite is skipped when a
    branch would lose all its literals, since expressing that remainder would
    require a constant.
    """
    if isinstance(expr, And):
        xors = [t for t in expr.terms if isinstance(t, Xor)]
        others = [t for t in expr.terms if not isinstance(t, Xor)]
        if len(xors) != 1 or not all(isinstance(t, Literal) for t in others):
            return expr
        inner = factor(xors[0])
        if isinstance(inner, And):
            merged = others + [
                t for t in inner.terms if isinstance(t, Literal)
            ] + [t for t in inner.terms if not isinstance(t, Literal)]
            return _ordered_and(merged)
        return _ordered_and(others + [inner])
    if not isinstance(expr, Xor):
        return expr

    branch_sets = [_flat_conjunction(branch) for branch in expr.branches]
    if any(branch is None for branch in branch_sets):
        return expr
    common = frozenset.intersection(*branch_sets)  # type: ignore[arg-type]
    if not common:
        return expr
    reduced = [branch - common for branch in branch_sets]  # type: ignore[operator]
    if any(not branch for branch in reduced):
        return expr
    prefix = [Literal(name) for name in sorted(common)]
    return _ordered_and(prefix + [Xor(tuple(_clause(branch) for branch in reduced))])


def _ordered_and(terms: list[BooleanExpr]) -> And:
    literals = sorted(
        (t for t in terms if isinstance(t, Literal)), key=lambda t: t.name
    )
    rest = [t for t in terms if not isinstance(t, Literal)]
    return And(tuple(literals) + tuple(rest))


def variables(expr: BooleanExpr) -> frozenset[str]:
    if isinstance(expr, Literal):
        return frozenset({expr.name})
    parts = expr.terms if isinstance(expr, And) else expr.branches
    return frozenset().union(*(variables(part) for part in parts))


def evaluate(expr: BooleanExpr, assignment: Mapping[str, bool]) -> bool:
    if isinstance(expr, Literal):
        return bool(assignment[expr.name])
    if isinstance(expr, And):
        return all(evaluate(term, assignment) for term in expr.terms)
    return sum(evaluate(branch, assignment) for branch in expr.branches) % 2 == 1


def format_expr(expr: BooleanExpr, ascii_symbols: bool = False) -> str:
    """Render with ∧/⊕ (or &/^ when ascii_symbols is set)."""
    conj, xor = ("&", "^") if ascii_symbols else ("∧", "⊕")

    def render(node: BooleanExpr, parenthesize: bool) -> str:
        if isinstance(node, Literal):
            return node.name
        if isinstance(node, And):
            text = f" {conj} ".join(render(t, True) for t in node.terms)
        else:
            text = f" {xor} ".join(render(b, True) for b in node.branches)
        return f"({text})" if parenthesize else text

    return render(expr, False)


def gateway_formulas(
    graph: UCXGraph, factored: bool = True
) -> dict[str, BooleanExpr]:
    """Per non-exhaustive-OR-gateway formula over activity names.

    Alternative members that are AND gateways are expanded to the activities
    they fan out to (fan in, for join-direction graphs).
    """
    neighbors = (
        graph.predecessors if graph.direction == JOIN else graph.successors
    )

    def expand(member: str) -> frozenset[str]:
        if not graph.is_gateway(member):
            return frozenset({member})
        if graph.gateways[member].kind is not GatewayKind.AND:
            raise ValueError(f"unexpected nested gateway {member} in alternatives")
        return frozenset().union(*(expand(inner) for inner in neighbors(member)))

    formulas: dict[str, BooleanExpr] = {}
    for gid in sorted(graph.or_alternatives):
        family = [
            frozenset().union(*(expand(member) for member in group))
            for group in graph.or_alternatives[gid]
        ]
        expr = or_formula(family)
        formulas[gid] = factor(expr) if factored else expr
    return formulas


def formula_dot(formulas: Mapping[str, BooleanExpr]) -> str:
    """Rendering option: each formula as a small XOR/AND gateway subtree."""
    lines = ["digraph simplified {", "  rankdir=LR;"]
    for gid in sorted(formulas):
        counter = 0
        prefix = gid.replace('"', "")

        def emit(node: BooleanExpr) -> str:
            nonlocal counter
            if isinstance(node, Literal):
                name = f"{prefix}.{node.name}"
                lines.append(f'  "{name}" [shape=box, label="{node.name}"];')
                return name
            counter += 1
            if isinstance(node, And):
                me, label, parts = f"{prefix}.and{counter}", "&", node.terms
            else:
                me, label, parts = f"{prefix}.xor{counter}", "×", node.branches
            lines.append(f'  "{me}" [shape=diamond, label="{label}"];')
            for part in parts:
                lines.append(f'  "{me}" -> "{emit(part)}";')
            return me

        root = emit(formulas[gid])
        lines.append(f'  "{prefix}" [shape=ellipse, label="{gid}"];')
        lines.append(f'  "{prefix}" -> "{root}";')
    lines.append("}")
    return "\n".join(lines) + "\n"
