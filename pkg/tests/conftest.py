"""Shared builders and straight-line oracles for the test suite.

The oracles re-evaluate the model math with explicit loops and plain
numpy, independently of the taped tensor library.
"""

import numpy as np

from spillnet import graph as mg
from spillnet import signals as sig


def company(i):
    return mg.EntityId(mg.EntityKind.COMPANY, i)


def executive(i):
    return mg.EntityId(mg.EntityKind.EXECUTIVE, i)


def small_graph():
    """4 companies, 2 executives, mixed relations."""
    edges = [
        (mg.RelationKind.MANAGEMENT, company(0), executive(0)),
        (mg.RelationKind.MANAGEMENT, company(1), executive(0)),
        (mg.RelationKind.MANAGEMENT, company(2), executive(1)),
        (mg.RelationKind.EXEC_INVESTMENT, company(3), executive(1)),
        (mg.RelationKind.CLASSMATE, executive(0), executive(1)),
        (mg.RelationKind.INDUSTRY_CATEGORY, company(0), company(1)),
        (mg.RelationKind.INDUSTRY_CATEGORY, company(2), company(3)),
        (mg.RelationKind.SUPPLY_CHAIN, company(1), company(2)),
    ]
    return mg.derive_meta_relations(mg.build_graph(4, 2, edges))


def tiny_graph():
    """3 companies, 2 executives; smallest end-to-end configuration."""
    edges = [
        (mg.RelationKind.MANAGEMENT, company(0), executive(0)),
        (mg.RelationKind.MANAGEMENT, company(1), executive(0)),
        (mg.RelationKind.MANAGEMENT, company(2), executive(1)),
        (mg.RelationKind.COLLEAGUE, executive(0), executive(1)),
        (mg.RelationKind.SUPPLY_CHAIN, company(0), company(2)),
        (mg.RelationKind.INVESTMENT, company(1), company(2)),
    ]
    return mg.derive_meta_relations(mg.build_graph(3, 2, edges))


def attention_values(rng, f, fp):
    inter_attn = {k: rng.normal(size=2 * fp) for k in mg.INTER_CLASS_RELATIONS}
    intra_kinds = (mg.EXPLICIT_RELATIONS + mg.META_RELATIONS
                   + (mg.RelationKind.IMPLICIT,) + mg.EXECUTIVE_RELATIONS)
    intra_attn = {k: rng.normal(size=2 * fp) for k in intra_kinds}
    return {
        "project.company": rng.normal(size=(fp, f)),
        "project.executive": rng.normal(size=(fp, f)),
        "inter.importance.company": rng.normal(size=fp),
        "inter.importance.executive": rng.normal(size=fp),
        "intra.transform.company": rng.normal(size=(fp, fp)),
        "intra.transform.executive": rng.normal(size=(fp, fp)),
        "intra.importance.company": rng.normal(size=fp),
        "intra.importance.executive": rng.normal(size=fp),
        **{f"inter.attn.{k.value}": v for k, v in inter_attn.items()},
        **{f"intra.attn.{k.value}": v for k, v in intra_attn.items()},
    }


def bind_attention(values, tape=None):
    from spillnet import attention as att
    from spillnet import autodiff as ad

    wrap = (lambda k: tape.parameter(k, values[k])) if tape is not None else (lambda k: ad.Tensor(values[k]))
    inter = att.InterClassParams(
        project_company=wrap("project.company"),
        project_executive=wrap("project.executive"),
        attn={k: wrap(f"inter.attn.{k.value}") for k in mg.INTER_CLASS_RELATIONS},
        importance_company=wrap("inter.importance.company"),
        importance_executive=wrap("inter.importance.executive"),
    )
    intra_kinds = (mg.EXPLICIT_RELATIONS + mg.META_RELATIONS
                   + (mg.RelationKind.IMPLICIT,) + mg.EXECUTIVE_RELATIONS)
    intra = att.IntraClassParams(
        transform_company=wrap("intra.transform.company"),
        transform_executive=wrap("intra.transform.executive"),
        attn={k: wrap(f"intra.attn.{k.value}") for k in intra_kinds},
        importance_company=wrap("intra.importance.company"),
        importance_executive=wrap("intra.importance.executive"),
    )
    return inter, intra


# ---------------------------------------------------------------------------
# oracles
# ---------------------------------------------------------------------------


def leaky_oracle(x):
    return np.where(x > 0, x, 0.2 * x)


def attend_oracle(targets, nbrs, a, mask, gate=None):
    half = len(a) // 2
    out = np.zeros((targets.shape[0], nbrs.shape[1]))
    support = np.zeros(targets.shape[0], dtype=bool)
    for u in range(targets.shape[0]):
        idx = np.flatnonzero(mask[u])
        if idx.size == 0:
            continue
        support[u] = True
        e = np.array([leaky_oracle(a[:half] @ targets[u] + a[half:] @ nbrs[v]) for v in idx])
        w = np.exp(e - e.max())
        w = w / w.sum()
        if gate is not None:
            w = w * np.array([gate[u, v] for v in idx])
        out[u] = np.tanh(sum(wi * nbrs[v] for wi, v in zip(w, idx)))
    return out, support


def fuse_relations_oracle(h_list, w_list, avail, fallback):
    out = np.zeros_like(fallback)
    for u in range(fallback.shape[0]):
        ks = [k for k in range(len(h_list)) if avail[u, k]]
        if not ks:
            out[u] = fallback[u]
            continue
        w = np.array([w_list[k] for k in ks])
        e = np.exp(w - w.max())
        e = e / e.sum()
        out[u] = sum(ei * h_list[k][u] for ei, k in zip(e, ks))
    return out


def dual_oracle(graph, s, values, implicit_mask=None, gate_vals=None):
    """Independent re-evaluation of the dual attention pass."""
    hc = s @ values["project.company"].T
    weights = np.zeros((graph.executive_count, graph.company_count))
    for kind in mg.INTER_CLASS_RELATIONS:
        for c, e in graph.edges[kind]:
            weights[e, c] = 1.0
    exec_feats = weights / weights.sum(axis=1, keepdims=True) @ s
    he = exec_feats @ values["project.executive"].T

    comp_h, exec_h, rel_scores, comp_avail, exec_avail = [], [], [], [], []
    for kind in mg.INTER_CLASS_RELATIONS:
        mask = mg.adjacency_matrix(graph, kind)
        a = values[f"inter.attn.{kind.value}"]
        h_c, sup_c = attend_oracle(hc, he, a, mask)
        h_e, sup_e = attend_oracle(he, hc, a, mask.T)
        comp_h.append(h_c)
        exec_h.append(h_e)
        comp_avail.append(sup_c)
        exec_avail.append(sup_e)
        rel_scores.append(
            (h_c @ values["inter.importance.company"]).mean()
            + (h_e @ values["inter.importance.executive"]).mean()
        )
    z_c = fuse_relations_oracle(comp_h, rel_scores, np.stack(comp_avail, axis=1), hc)

    wz = z_c @ values["intra.transform.company"].T
    h_list, g_list, avail = [], [], []
    for kind in mg.EXPLICIT_RELATIONS + mg.META_RELATIONS:
        mask = mg.adjacency_matrix(graph, kind)
        h_rel, sup = attend_oracle(wz, wz, values[f"intra.attn.{kind.value}"], mask)
        h_list.append(h_rel)
        avail.append(sup)
        g_list.append((h_rel @ values["intra.importance.company"]).mean())
    if implicit_mask is not None:
        h_rel, sup = attend_oracle(wz, wz, values["intra.attn.implicit"], implicit_mask, gate=gate_vals)
        h_list.append(h_rel)
        avail.append(sup)
        g_list.append((h_rel @ values["intra.importance.company"]).mean())
    return fuse_relations_oracle(h_list, g_list, np.stack(avail, axis=1), z_c)


def gru_oracle(xs, values):
    """Loop evaluation of the gated recurrent cell."""
    sigm = lambda v: 1.0 / (1.0 + np.exp(-v))
    f = values["gru.update.input"].shape[0]
    h = np.zeros((xs[0].shape[0], f))
    for x in xs:
        z = sigm(x @ values["gru.update.input"].T + h @ values["gru.update.recurrent"].T
                 + values["gru.update.bias"])
        r = sigm(x @ values["gru.reset.input"].T + h @ values["gru.reset.recurrent"].T
                 + values["gru.reset.bias"])
        c = np.tanh(x @ values["gru.candidate.input"].T + (r * h) @ values["gru.candidate.recurrent"].T
                    + values["gru.candidate.bias"])
        h = (1 - z) * c + z * h
    return h


def fuse_oracle(p, q, values):
    return np.tanh(
        np.einsum("na,abk,nb->nk", p, values["fusion.tensor"], q)
        + np.concatenate([p, q], axis=1) @ values["fusion.linear"].T
        + values["fusion.bias"]
    )


# ---------------------------------------------------------------------------
# panels
# ---------------------------------------------------------------------------


def random_panel(rng, n_stocks, n_days, train_days, valid_days):
    """Panel with random finite features and labels tied to price moves."""
    dates = [f"2021-{1 + d // 28:02d}-{1 + d % 28:02d}" for d in range(n_days)]
    cal = sig.TradingCalendar(dates, train_end=dates[train_days - 1],
                              valid_end=dates[train_days + valid_days - 1])
    closes = 100 * np.cumprod(1 + rng.normal(0, 0.02, size=(n_stocks, n_days)), axis=1)
    returns = np.full((n_stocks, n_days), np.nan)
    returns[:, 1:] = (closes[:, 1:] - closes[:, :-1]) / closes[:, :-1]
    indicators = np.full((n_stocks, n_days, 5), np.nan)
    indicators[:, 1:] = rng.normal(0, 0.05, size=(n_stocks, n_days - 1, 5))
    indicators[:, 1:, 1] = returns[:, 1:]
    labels = np.zeros((n_stocks, n_days), dtype=int)
    labels[:, 1:] = (returns[:, 1:] > 0).astype(int)
    sentiment = rng.normal(0, 0.3, size=(n_stocks, n_days, 3))
    return sig.SignalPanel(
        calendar=cal,
        stocks=[f"S{i:03d}" for i in range(n_stocks)],
        indicators=indicators,
        sentiment=sentiment,
        labels=labels,
        closes=closes,
        returns=returns,
    )
