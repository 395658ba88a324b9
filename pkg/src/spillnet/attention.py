"""Relational embeddings via two-stage attention over the market graph.

Stage one (inter-class) lets companies and executives exchange signals
through company-executive relations; stage two (intra-class) propagates
within each entity type across its own relation kinds, including the
derived executive-mediated pairs and the day's implicit edges. Each stage
attends twice: over neighbors within a relation, then over relations,
where relation importance is a population-level score shared by all
entities. Entities with no neighbors under a relation contribute a zero
embedding and drop that relation from their own relation softmax; an
entity excluded everywhere falls back to its stage input.

The flat variant replaces both stages with one conventional attention pass
over the union of every relation's neighbors, without any relation typing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError
from .graph import (
    EXECUTIVE_RELATIONS,
    EXPLICIT_RELATIONS,
    INTER_CLASS_RELATIONS,
    META_RELATIONS,
    ImplicitEdges,
    MarketGraph,
    RelationKind,
    adjacency_matrix,
)


@dataclass
class InterClassParams:
    """Type projections into the shared space, per-relation attention
    vectors, and per-type relation-importance vectors. The executive-side
    fields are absent when executives are ablated; the company projection
    is always present."""

    project_company: ad.Tensor                             # (F', F)
    project_executive: ad.Tensor | None = None             # (F', F)
    attn: dict[RelationKind, ad.Tensor] = field(default_factory=dict)  # each (2F',)
    importance_company: ad.Tensor | None = None            # (F',)
    importance_executive: ad.Tensor | None = None          # (F',)


@dataclass
class IntraClassParams:
    """Shared per-type transform, per-relation attention vectors, and
    per-type relation-importance vectors."""

    transform_company: ad.Tensor        # (F', F')
    transform_executive: ad.Tensor | None
    attn: dict[RelationKind, ad.Tensor]  # each (2F',)
    importance_company: ad.Tensor       # (F',)
    importance_executive: ad.Tensor | None


@dataclass
class FlatParams:
    """Single attention vector for the conventional (non-dual) variant."""

    project_company: ad.Tensor
    project_executive: ad.Tensor | None
    attn: ad.Tensor                     # (2F',)


@dataclass
class AttentionTrace:
    """Softmax outputs captured during a forward pass, for inspection and
    property checks. Arrays are detached copies."""

    entity_softmax: list[tuple[str, np.ndarray, np.ndarray]] = field(default_factory=list)
    relation_softmax: list[tuple[str, np.ndarray, np.ndarray]] = field(default_factory=list)


def init_entity_features(graph: MarketGraph, s: ad.Tensor) -> ad.Tensor:
    """Executive features: unweighted mean of the embeddings of companies
    linked by any company-executive edge."""
    n_exec = graph.executive_count
    weights = np.zeros((n_exec, graph.company_count))
    for kind in INTER_CLASS_RELATIONS:
        for company, executive in graph.edges[kind]:
            weights[executive, company] = 1.0
    degree = weights.sum(axis=1)
    if (degree == 0).any():
        orphan = int(np.argwhere(degree == 0)[0][0])
        raise ContractError(f"executive {orphan} has no company link; rejected at ingestion")
    return ad.matmul(ad.Tensor(weights / degree[:, None]), s)


def project(h: ad.Tensor, projection: ad.Tensor) -> ad.Tensor:
    """Map features into the shared attention space: rows of h times W^T."""
    if projection.data.shape[1] != h.data.shape[-1]:
        raise DimensionError(
            f"projection {projection.data.shape} does not accept features {h.data.shape}"
        )
    if h.data.ndim == 1:
        return ad.matmul(projection, h)
    return ad.matmul(h, ad.transpose(projection))


def _split_halves(vec: ad.Tensor) -> tuple[ad.Tensor, ad.Tensor]:
    width = vec.data.shape[0]
    if width % 2:
        raise DimensionError(f"attention vector length {width} is odd")
    half = width // 2
    return ad.narrow(vec, 0, 0, half), ad.narrow(vec, 0, half, half)


def attend(targets: ad.Tensor, neighbors: ad.Tensor, attn_vec: ad.Tensor,
           mask: np.ndarray, gate: ad.Tensor | None = None,
           trace: AttentionTrace | None = None, label: str = "") -> tuple[ad.Tensor, np.ndarray]:
    """Neighbor attention under one relation.

    Scores are leaky_relu(a . [target, neighbor]) masked to the relation's
    adjacency, softmax-normalized per target, optionally gated per edge,
    then used to average neighbor vectors through tanh. Targets without
    neighbors yield a zero row. Returns the aggregate and the per-target
    support flags.
    """
    n_targets = targets.data.shape[0]
    n_neighbors = neighbors.data.shape[0]
    if mask.shape != (n_targets, n_neighbors):
        raise DimensionError(f"mask shape {mask.shape} is not ({n_targets}, {n_neighbors})")
    a_self, a_other = _split_halves(attn_vec)
    own = ad.matmul(targets, a_self)
    other = ad.matmul(neighbors, a_other)
    raw = ad.leaky_relu(ad.add(ad.reshape(own, (n_targets, 1)), ad.reshape(other, (1, n_neighbors))))
    gamma, has_support = ad.masked_softmax(raw, mask)
    if trace is not None:
        trace.entity_softmax.append((label, gamma.data.copy(), mask.copy()))
    weights = gamma if gate is None else ad.mul(gamma, gate)
    return ad.tanh(ad.matmul(weights, neighbors)), np.asarray(has_support)


def _population_mean(embeddings: ad.Tensor, importance: ad.Tensor) -> ad.Tensor:
    """Mean over the whole population of importance-weighted embeddings."""
    return ad.matmul(embeddings, importance).mean()


def fuse_relations(per_relation: Sequence[ad.Tensor], scores: Sequence[ad.Tensor],
                   available: np.ndarray, fallback: ad.Tensor,
                   trace: AttentionTrace | None = None, label: str = "") -> ad.Tensor:
    """Combine per-relation embeddings with a softmax over each entity's
    available relations; entities with none take the fallback rows."""
    n = fallback.data.shape[0]
    k = len(per_relation)
    if available.shape != (n, k):
        raise DimensionError(f"availability shape {available.shape} is not ({n}, {k})")
    stacked = ad.concat([ad.reshape(w, (1,)) for w in scores], axis=0)
    broadcast = ad.add(ad.reshape(stacked, (1, k)), ad.Tensor(np.zeros((n, 1))))
    eps, _ = ad.masked_softmax(broadcast, available)
    if trace is not None:
        trace.relation_softmax.append((label, eps.data.copy(), available.copy()))
    fused = ad.Tensor(np.zeros(fallback.data.shape))
    for idx, h_rel in enumerate(per_relation):
        fused = fused + ad.mul(ad.narrow(eps, 1, idx, 1), h_rel)
    orphan_rows = ~available.any(axis=1)
    if orphan_rows.any():
        fused = fused + ad.mul(fallback, ad.Tensor(orphan_rows[:, None].astype(float)))
    return fused


def inter_class_pass(company_proj: ad.Tensor, executive_proj: ad.Tensor,
                     masks: Mapping[RelationKind, np.ndarray], params: InterClassParams,
                     trace: AttentionTrace | None = None) -> tuple[ad.Tensor, ad.Tensor]:
    """One company<->executive exchange; returns updated representations for
    both types in the shared space."""
    kinds = [k for k in INTER_CLASS_RELATIONS if k in masks]
    if not kinds:
        return company_proj, executive_proj
    n_c = company_proj.data.shape[0]
    n_e = executive_proj.data.shape[0]
    comp_embeds, exec_embeds, rel_scores = [], [], []
    comp_avail = np.zeros((n_c, len(kinds)), dtype=bool)
    exec_avail = np.zeros((n_e, len(kinds)), dtype=bool)
    for idx, kind in enumerate(kinds):
        mask = masks[kind]
        h_c, sup_c = attend(company_proj, executive_proj, params.attn[kind], mask,
                            trace=trace, label=f"inter/{kind.value}/company")
        h_e, sup_e = attend(executive_proj, company_proj, params.attn[kind], mask.T,
                            trace=trace, label=f"inter/{kind.value}/executive")
        comp_embeds.append(h_c)
        exec_embeds.append(h_e)
        comp_avail[:, idx] = sup_c
        exec_avail[:, idx] = sup_e
        rel_scores.append(_population_mean(h_c, params.importance_company)
                          + _population_mean(h_e, params.importance_executive))
    z_c = fuse_relations(comp_embeds, rel_scores, comp_avail, company_proj,
                         trace=trace, label="inter/company")
    z_e = fuse_relations(exec_embeds, rel_scores, exec_avail, executive_proj,
                         trace=trace, label="inter/executive")
    return z_c, z_e


def intra_class_pass(z: ad.Tensor, relations: Sequence[tuple[RelationKind, np.ndarray, ad.Tensor | None]],
                     transform: ad.Tensor, attn: Mapping[RelationKind, ad.Tensor],
                     importance: ad.Tensor, trace: AttentionTrace | None = None,
                     type_label: str = "company") -> ad.Tensor:
    """Propagation within one entity type across its relation kinds."""
    if not relations:
        return z
    transformed = ad.matmul(z, ad.transpose(transform))
    n = z.data.shape[0]
    embeds, scores = [], []
    avail = np.zeros((n, len(relations)), dtype=bool)
    for idx, (kind, mask, gate) in enumerate(relations):
        h_rel, support = attend(transformed, transformed, attn[kind], mask, gate=gate,
                                trace=trace, label=f"intra/{kind.value}/{type_label}")
        embeds.append(h_rel)
        avail[:, idx] = support
        scores.append(_population_mean(h_rel, importance))
    return fuse_relations(embeds, scores, avail, z, trace=trace, label=f"intra/{type_label}")


def company_relation_list(graph: MarketGraph, implicit: ImplicitEdges | None,
                          use_explicit: bool, use_executives: bool, use_implicit: bool,
                          implicit_gate: bool = True) -> list[tuple[RelationKind, np.ndarray, ad.Tensor | None]]:
    """Ordered (kind, adjacency, gate) triples for the company intra pass."""
    relations: list[tuple[RelationKind, np.ndarray, ad.Tensor | None]] = []
    if use_explicit:
        for kind in EXPLICIT_RELATIONS:
            relations.append((kind, adjacency_matrix(graph, kind), None))
    if use_executives:
        for kind in META_RELATIONS:
            relations.append((kind, adjacency_matrix(graph, kind), None))
    if use_implicit and implicit is not None:
        mask = np.zeros((graph.company_count, graph.company_count), dtype=bool)
        for i, j in implicit.pairs:
            mask[i, j] = True
        relations.append((RelationKind.IMPLICIT, mask, implicit.gate if implicit_gate else None))
    return relations


def executive_relation_list(graph: MarketGraph) -> list[tuple[RelationKind, np.ndarray, ad.Tensor | None]]:
    return [(kind, adjacency_matrix(graph, kind), None) for kind in EXECUTIVE_RELATIONS]


def dual_forward(graph: MarketGraph, s: ad.Tensor, inter: InterClassParams,
                 intra: IntraClassParams, implicit: ImplicitEdges | None = None,
                 use_explicit: bool = True, use_executives: bool = True,
                 use_implicit: bool = True, implicit_gate: bool = True,
                 dual_layers: int = 1,
                 trace: AttentionTrace | None = None) -> ad.Tensor:
    """Full dual pass: inter-class exchange, then per-type intra-class
    propagation; returns the companies' relational embeddings."""
    if dual_layers < 1:
        raise ContractError(f"dual_layers must be >= 1, got {dual_layers}")
    use_executives = use_executives and graph.executive_count > 0
    if use_executives and inter.project_executive is None:
        raise ContractError("executive-side parameters required when executives are in play")

    company_repr = project(s, inter.project_company)
    executive_repr = None
    if use_executives:
        exec_feats = init_entity_features(graph, s)
        executive_repr = project(exec_feats, inter.project_executive)

    company_rels = company_relation_list(graph, implicit, use_explicit, use_executives,
                                         use_implicit, implicit_gate)
    inter_masks = {kind: adjacency_matrix(graph, kind) for kind in INTER_CLASS_RELATIONS}

    h_c = company_repr
    h_e = executive_repr
    for _ in range(dual_layers):
        if use_executives:
            z_c, z_e = inter_class_pass(h_c, h_e, inter_masks, inter, trace=trace)
        else:
            z_c, z_e = h_c, h_e
        h_c = intra_class_pass(z_c, company_rels, intra.transform_company, intra.attn,
                               intra.importance_company, trace=trace, type_label="company")
        if use_executives:
            h_e = intra_class_pass(z_e, executive_relation_list(graph), intra.transform_executive,
                                   intra.attn, intra.importance_executive, trace=trace,
                                   type_label="executive")
    return h_c


def flat_forward(graph: MarketGraph, s: ad.Tensor, params: FlatParams,
                 implicit: ImplicitEdges | None = None, use_explicit: bool = True,
                 use_executives: bool = True, use_implicit: bool = True,
                 implicit_gate: bool = True,
                 trace: AttentionTrace | None = None) -> ad.Tensor:
    """Conventional single-pass attention over the union of all relations.

    Companies attend once over every neighbor they have under any enabled
    relation (companies and executives pooled together); no per-relation
    weighting. Messages over pairs connected only implicitly keep the
    implicit gate so the edge scorer still trains.
    """
    use_executives = use_executives and graph.executive_count > 0
    n_c = graph.company_count
    company_proj = project(s, params.project_company)

    static = np.zeros((n_c, n_c), dtype=bool)
    if use_explicit:
        for kind in EXPLICIT_RELATIONS:
            static |= adjacency_matrix(graph, kind)
    if use_executives:
        for kind in META_RELATIONS:
            static |= adjacency_matrix(graph, kind)
    implicit_mask = np.zeros((n_c, n_c), dtype=bool)
    if use_implicit and implicit is not None:
        for i, j in implicit.pairs:
            implicit_mask[i, j] = True

    company_mask = static | implicit_mask
    if use_executives:
        exec_feats = init_entity_features(graph, s)
        executive_proj = project(exec_feats, params.project_executive)
        exec_mask = np.zeros((n_c, graph.executive_count), dtype=bool)
        for kind in INTER_CLASS_RELATIONS:
            exec_mask |= adjacency_matrix(graph, kind)
        pool = ad.concat([company_proj, executive_proj], axis=0)
        mask = np.concatenate([company_mask, exec_mask], axis=1)
    else:
        pool = company_proj
        mask = company_mask

    gate = None
    if use_implicit and implicit is not None and implicit_gate:
        implicit_only = implicit_mask & ~static
        if implicit_only.any():
            # gate applies only where the implicit edge is the sole connection
            mult = ad.add(
                ad.Tensor(np.ones((n_c, n_c))),
                ad.mul(ad.sub(implicit.gate, 1.0), ad.Tensor(implicit_only.astype(float))),
            )
            if use_executives:
                pad = ad.Tensor(np.ones((n_c, graph.executive_count)))
                gate = ad.concat([mult, pad], axis=1)
            else:
                gate = mult

    h, _ = attend(company_proj, pool, params.attn, mask, gate=gate,
                  trace=trace, label="flat/union/company")
    orphan_rows = ~mask.any(axis=1)
    if orphan_rows.any():
        h = h + ad.mul(company_proj, ad.Tensor(orphan_rows[:, None].astype(float)))
    return h
