"""Bi-typed market graph: companies, executives, and hybrid relations.

Static relations (explicit company links, executive social links,
company-executive links) are validated once at build time; the
executive-mediated company pairs (shared-executive and linked-executive
relations) are derived from them. Per-day implicit company edges are
inferred from learned embeddings inside each forward pass and replace the
previous day's set.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DataError, DimensionError


class EntityKind(Enum):
    COMPANY = "company"
    EXECUTIVE = "executive"


@dataclass(frozen=True)
class EntityId:
    kind: EntityKind
    index: int


class RelationKind(Enum):
    # explicit company-company
    INDUSTRY_CATEGORY = "industry_category"
    SUPPLY_CHAIN = "supply_chain"
    BUSINESS_PARTNERSHIP = "business_partnership"
    INVESTMENT = "investment"
    # derived company-company (executive-mediated)
    SHARED_EXECUTIVE = "shared_executive"        # one executive serving both companies
    LINKED_EXECUTIVES = "linked_executives"      # two socially linked executives
    # dynamic company-company
    IMPLICIT = "implicit"
    # executive-executive
    CLASSMATE = "classmate"
    COLLEAGUE = "colleague"
    # company-executive
    MANAGEMENT = "management"
    EXEC_INVESTMENT = "exec_investment"


EXPLICIT_RELATIONS = (
    RelationKind.INDUSTRY_CATEGORY,
    RelationKind.SUPPLY_CHAIN,
    RelationKind.BUSINESS_PARTNERSHIP,
    RelationKind.INVESTMENT,
)
META_RELATIONS = (RelationKind.SHARED_EXECUTIVE, RelationKind.LINKED_EXECUTIVES)
EXECUTIVE_RELATIONS = (RelationKind.CLASSMATE, RelationKind.COLLEAGUE)
INTER_CLASS_RELATIONS = (RelationKind.MANAGEMENT, RelationKind.EXEC_INVESTMENT)

COMPANY_COMPANY = EXPLICIT_RELATIONS + META_RELATIONS + (RelationKind.IMPLICIT,)


def endpoint_kinds(kind: RelationKind) -> tuple[EntityKind, EntityKind]:
    if kind in COMPANY_COMPANY:
        return (EntityKind.COMPANY, EntityKind.COMPANY)
    if kind in EXECUTIVE_RELATIONS:
        return (EntityKind.EXECUTIVE, EntityKind.EXECUTIVE)
    return (EntityKind.COMPANY, EntityKind.EXECUTIVE)


Edge = tuple[int, int]


@dataclass
class MarketGraph:
    """Entity counts plus per-relation edge sets.

    Same-type edges are stored as unordered (min, max) index pairs;
    company-executive edges as (company, executive). Implicit edges are the
    exception: they are directed, dated, and live in ``ImplicitEdges``
    values produced per forward pass (``edges[IMPLICIT]`` holds the most
    recently attached set for inspection).
    """

    company_count: int
    executive_count: int
    edges: dict[RelationKind, set[Edge]] = field(default_factory=dict)

    def __post_init__(self):
        for kind in RelationKind:
            self.edges.setdefault(kind, set())

    def edge_count(self, kind: RelationKind) -> int:
        return len(self.edges[kind])

    def entity_count(self, kind: EntityKind) -> int:
        return self.company_count if kind is EntityKind.COMPANY else self.executive_count


@dataclass
class ImplicitEdges:
    """One day's inferred company edges with their scores.

    ``pairs`` are directed (i, j) meaning j is a neighbor of i. ``gate`` is
    the sigmoid of the full score matrix and carries gradients back to the
    scoring vector; ``alpha`` is the plain score matrix for reporting.
    """

    day: str
    pairs: list[Edge]
    alpha: np.ndarray
    gate: ad.Tensor


@dataclass
class ImplicitRelationParams:
    """Scoring vector over two stacked embeddings plus the edge threshold."""

    u: ad.Tensor
    threshold: float = 0.0054


def _check_endpoint(entity: EntityId, counts: Mapping[EntityKind, int], context: str) -> None:
    limit = counts[entity.kind]
    if not 0 <= entity.index < limit:
        raise DataError(f"{context}: {entity.kind.value} index {entity.index} outside [0, {limit})")


def build_graph(company_count: int, executive_count: int,
                typed_edges: Iterable[tuple[RelationKind, EntityId, EntityId]]) -> MarketGraph:
    """Validate and store typed edges; rejects dangling endpoints, kind and
    endpoint-type mismatches, self-loops, and duplicates within a kind."""
    if company_count < 0 or executive_count < 0:
        raise DataError("entity counts must be non-negative")
    counts = {EntityKind.COMPANY: company_count, EntityKind.EXECUTIVE: executive_count}
    graph = MarketGraph(company_count, executive_count)
    for row, (kind, a, b) in enumerate(typed_edges):
        context = f"edge row {row} ({kind.value})"
        if kind is RelationKind.IMPLICIT or kind in META_RELATIONS:
            raise DataError(f"{context}: derived/dynamic relations cannot be loaded as static edges")
        want = endpoint_kinds(kind)
        if {a.kind, b.kind} != set(want) or (a.kind == b.kind and want[0] != want[1]):
            raise DataError(
                f"{context}: endpoint kinds ({a.kind.value}, {b.kind.value}) "
                f"do not match signature ({want[0].value}, {want[1].value})"
            )
        _check_endpoint(a, counts, context)
        _check_endpoint(b, counts, context)
        if want[0] == want[1]:
            if a.index == b.index:
                raise DataError(f"{context}: self-loop on index {a.index}")
            pair = (min(a.index, b.index), max(a.index, b.index))
        else:
            company, executive = (a, b) if a.kind is EntityKind.COMPANY else (b, a)
            pair = (company.index, executive.index)
        if pair in graph.edges[kind]:
            raise DataError(f"{context}: duplicate edge {pair}")
        graph.edges[kind].add(pair)
    return graph


def derive_meta_relations(graph: MarketGraph) -> MarketGraph:
    """Populate the two executive-mediated company relations.

    Shared-executive pairs: distinct companies both linked (by any
    company-executive edge) to one executive. Linked-executive pairs:
    distinct companies linked to two distinct, socially connected
    executives. Idempotent; recomputes both sets from scratch.
    """
    execs_of: dict[int, set[int]] = {}
    for kind in INTER_CLASS_RELATIONS:
        for company, executive in graph.edges[kind]:
            execs_of.setdefault(company, set()).add(executive)

    shared: set[Edge] = set()
    companies = sorted(execs_of)
    for i, c1 in enumerate(companies):
        for c2 in companies[i + 1:]:
            if execs_of[c1] & execs_of[c2]:
                shared.add((c1, c2))

    social: set[Edge] = set()
    for kind in EXECUTIVE_RELATIONS:
        for e1, e2 in graph.edges[kind]:
            social.add((e1, e2))
            social.add((e2, e1))

    linked: set[Edge] = set()
    for i, c1 in enumerate(companies):
        for c2 in companies[i + 1:]:
            if any((e1, e2) in social and e1 != e2
                   for e1 in execs_of[c1] for e2 in execs_of[c2]):
                linked.add((c1, c2))

    graph.edges[RelationKind.SHARED_EXECUTIVE] = shared
    graph.edges[RelationKind.LINKED_EXECUTIVES] = linked
    return graph


def infer_implicit_edges(embeddings: ad.Tensor, params: ImplicitRelationParams,
                         day: str = "") -> ImplicitEdges:
    """Score every ordered company pair and keep those above the threshold.

    The score for (i, j) is leaky_relu(u . [s_i, s_j]), which splits into a
    sender part and a receiver part of u. Thresholding is hard (no
    gradient); the returned gate matrix sigmoid(score) is the
    differentiable path back to u.
    """
    n, width = embeddings.data.shape
    u = params.u
    if u.data.ndim != 1 or u.data.shape[0] != 2 * width:
        raise DimensionError(
            f"scoring vector length {u.data.shape} does not match twice the embedding width {width}"
        )
    u_self = ad.narrow(u, 0, 0, width)
    u_other = ad.narrow(u, 0, width, width)
    self_scores = ad.matmul(embeddings, u_self)      # (n,)
    other_scores = ad.matmul(embeddings, u_other)    # (n,)
    raw = ad.add(ad.reshape(self_scores, (n, 1)), ad.reshape(other_scores, (1, n)))
    alpha = ad.leaky_relu(raw)
    gate = ad.sigmoid(alpha)
    above = alpha.data > params.threshold
    np.fill_diagonal(above, False)
    pairs = [(int(i), int(j)) for i, j in np.argwhere(above)]
    return ImplicitEdges(day=day, pairs=pairs, alpha=alpha.data, gate=gate)


def neighbors(graph: MarketGraph, entity: EntityId, kind: RelationKind) -> list[int]:
    """Neighbor indices of ``entity`` under ``kind``, ascending. For the
    implicit relation an edge (i, j) makes j a neighbor of i only."""
    want = endpoint_kinds(kind)
    if entity.kind not in want:
        raise ContractError(
            f"relation {kind.value} does not touch {entity.kind.value} entities"
        )
    found: set[int] = set()
    if kind is RelationKind.IMPLICIT:
        for i, j in graph.edges[kind]:
            if i == entity.index:
                found.add(j)
    elif want[0] == want[1]:
        for a, b in graph.edges[kind]:
            if a == entity.index:
                found.add(b)
            elif b == entity.index:
                found.add(a)
    else:
        pos = 0 if entity.kind is EntityKind.COMPANY else 1
        for pair in graph.edges[kind]:
            if pair[pos] == entity.index:
                found.add(pair[1 - pos])
    return sorted(found)


def adjacency_matrix(graph: MarketGraph, kind: RelationKind) -> np.ndarray:
    """Boolean adjacency with rows indexed by the relation's first endpoint
    type; mask[i, j] means j is a neighbor of i."""
    want = endpoint_kinds(kind)
    rows = graph.entity_count(want[0])
    cols = graph.entity_count(want[1])
    mask = np.zeros((rows, cols), dtype=bool)
    if kind is RelationKind.IMPLICIT:
        for i, j in graph.edges[kind]:
            mask[i, j] = True
    elif want[0] == want[1]:
        for a, b in graph.edges[kind]:
            mask[a, b] = True
            mask[b, a] = True
    else:
        for company, executive in graph.edges[kind]:
            mask[company, executive] = True
    return mask
