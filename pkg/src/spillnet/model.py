"""End-to-end model: parameter registry, per-day forward pass, loss,
training loop with validation-based early stopping, and checkpoints.

A training batch is one trading day: the graph couples all stocks, so the
day's predictions, loss, and gradient form one optimizer step. Ablation
flags reshape the parameter registry itself; every learnable array lives
in a flat name->array mapping that binds onto a fresh tape per pass.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from . import attention as att
from . import autodiff as ad
from . import encoder as enc
from . import evaluation as ev
from . import graph as mg
from .errors import ConfigError, ContractError, TrainingDivergedError
from .signals import SignalPanel

CHECKPOINT_FORMAT = "spillnet/checkpoint/v1"

ABLATION_NAMES = ("executives", "implicit", "explicit", "dual")


@dataclass
class TrainConfig:
    """Model sizes, optimizer settings, and ablation switches."""

    lookback: int = 20            # window length T
    fusion_slices: int = 10       # bilinear slices M
    gru_hidden: int = 78          # sequential embedding width F
    attn_hidden: int = 39         # attention space width F'
    learning_rate: float = 0.0008
    implicit_threshold: float = 0.0054
    max_epochs: int = 400
    patience: int = 20
    seed: int = 0
    dual_layers: int = 1
    implicit_gate: bool = True
    early_stop_metric: str = "pr_auc"
    use_executives: bool = True
    use_implicit: bool = True
    use_explicit: bool = True
    use_dual: bool = True
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        for name in ("lookback", "fusion_slices", "gru_hidden", "attn_hidden",
                     "dual_layers"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.max_epochs < 0 or self.patience < 0:
            raise ConfigError("max_epochs and patience must be non-negative")
        if self.early_stop_metric not in ("pr_auc", "roc_auc"):
            raise ConfigError(f"early_stop_metric must be pr_auc or roc_auc, got {self.early_stop_metric!r}")

    def ablate(self, names: Iterable[str]) -> "TrainConfig":
        """A copy with the listed components switched off."""
        updates = {}
        for name in names:
            name = name.strip()
            if name not in ABLATION_NAMES:
                raise ConfigError(f"unknown ablation {name!r}; valid: {', '.join(ABLATION_NAMES)}")
            updates[f"use_{name if name != 'dual' else 'dual'}"] = False
        return dataclasses.replace(self, **updates)


@dataclass
class Prediction:
    stock: str
    date: str
    probabilities: np.ndarray  # (down, up), sums to 1
    label: int

    @property
    def score(self) -> float:
        """Ranking score: probability of an up move."""
        return float(self.probabilities[1])


def company_intra_kinds(config: TrainConfig) -> list[mg.RelationKind]:
    kinds: list[mg.RelationKind] = []
    if config.use_explicit:
        kinds.extend(mg.EXPLICIT_RELATIONS)
    if config.use_executives:
        kinds.extend(mg.META_RELATIONS)
    if config.use_implicit:
        kinds.append(mg.RelationKind.IMPLICIT)
    return kinds


def init_params(config: TrainConfig, rng: np.random.Generator) -> dict[str, np.ndarray]:
    """Freshly initialized registry; creation order is fixed so a seeded
    generator yields identical values run to run."""
    m, f, fp = config.fusion_slices, config.gru_hidden, config.attn_hidden
    g = lambda shape: ad.glorot_uniform(rng, shape)
    values: dict[str, np.ndarray] = {}
    values["fusion.tensor"] = g((enc.INDICATOR_DIM, enc.SENTIMENT_DIM, m))
    values["fusion.linear"] = g((m, enc.FUSED_INPUT))
    values["fusion.bias"] = np.zeros(m)
    for gate in ("update", "reset", "candidate"):
        values[f"gru.{gate}.input"] = g((f, m))
        values[f"gru.{gate}.recurrent"] = g((f, f))
        values[f"gru.{gate}.bias"] = np.zeros(f)
    if config.use_implicit:
        values["implicit.u"] = g((2 * f,))
    values["project.company"] = g((fp, f))
    if config.use_executives:
        values["project.executive"] = g((fp, f))
    if config.use_dual:
        if config.use_executives:
            for kind in mg.INTER_CLASS_RELATIONS:
                values[f"inter.attn.{kind.value}"] = g((2 * fp,))
            values["inter.importance.company"] = g((fp,))
            values["inter.importance.executive"] = g((fp,))
        company_kinds = company_intra_kinds(config)
        if company_kinds:
            values["intra.transform.company"] = g((fp, fp))
            values["intra.importance.company"] = g((fp,))
            for kind in company_kinds:
                values[f"intra.attn.{kind.value}"] = g((2 * fp,))
        if config.use_executives:
            values["intra.transform.executive"] = g((fp, fp))
            values["intra.importance.executive"] = g((fp,))
            for kind in mg.EXECUTIVE_RELATIONS:
                values[f"intra.attn.{kind.value}"] = g((2 * fp,))
    else:
        values["flat.attn"] = g((2 * fp,))
    values["head.weight"] = g((2, f + fp))
    values["head.bias"] = np.zeros(2)
    return values


@dataclass
class BoundModel:
    fusion: enc.FusionParams
    gru: enc.GruParams
    implicit: mg.ImplicitRelationParams | None
    inter: att.InterClassParams | None
    intra: att.IntraClassParams | None
    flat: att.FlatParams | None
    head_weight: ad.Tensor
    head_bias: ad.Tensor


def bind_params(values: Mapping[str, np.ndarray], config: TrainConfig,
                tape: ad.Tape | None = None) -> BoundModel:
    """Wrap registry arrays as tensors, registering them when a tape is given."""
    if tape is not None:
        wrap = lambda name: tape.parameter(name, values[name])
    else:
        wrap = lambda name: ad.Tensor(values[name])
    fusion = enc.FusionParams(wrap("fusion.tensor"), wrap("fusion.linear"), wrap("fusion.bias"))
    gru = enc.GruParams(*[wrap(f"gru.{gate}.{part}")
                          for gate in ("update", "reset", "candidate")
                          for part in ("input", "recurrent", "bias")])
    implicit = None
    if config.use_implicit:
        implicit = mg.ImplicitRelationParams(wrap("implicit.u"), config.implicit_threshold)
    inter = intra = flat = None
    if config.use_dual:
        inter = att.InterClassParams(
            project_company=wrap("project.company"),
            project_executive=wrap("project.executive") if config.use_executives else None,
            attn={k: wrap(f"inter.attn.{k.value}") for k in mg.INTER_CLASS_RELATIONS}
            if config.use_executives else {},
            importance_company=wrap("inter.importance.company") if config.use_executives else None,
            importance_executive=wrap("inter.importance.executive") if config.use_executives else None,
        )
        company_kinds = company_intra_kinds(config)
        attn_map = {k: wrap(f"intra.attn.{k.value}") for k in company_kinds}
        if config.use_executives:
            attn_map.update({k: wrap(f"intra.attn.{k.value}") for k in mg.EXECUTIVE_RELATIONS})
        intra = att.IntraClassParams(
            transform_company=wrap("intra.transform.company") if company_kinds else ad.Tensor(np.eye(config.attn_hidden)),
            transform_executive=wrap("intra.transform.executive") if config.use_executives else None,
            attn=attn_map,
            importance_company=wrap("intra.importance.company") if company_kinds else ad.Tensor(np.zeros(config.attn_hidden)),
            importance_executive=wrap("intra.importance.executive") if config.use_executives else None,
        )
    else:
        flat = att.FlatParams(
            project_company=wrap("project.company"),
            project_executive=wrap("project.executive") if config.use_executives else None,
            attn=wrap("flat.attn"),
        )
    return BoundModel(fusion, gru, implicit, inter, intra, flat,
                      wrap("head.weight"), wrap("head.bias"))


@dataclass
class DayOutput:
    probabilities: ad.Tensor            # (stocks, 2)
    sequential: ad.Tensor               # (stocks, F)
    relational: ad.Tensor               # (stocks, F')
    implicit: mg.ImplicitEdges | None


def forward_day(panel: SignalPanel, graph: mg.MarketGraph, t: int,
                values: Mapping[str, np.ndarray], config: TrainConfig,
                tape: ad.Tape | None = None,
                trace: att.AttentionTrace | None = None) -> DayOutput:
    """Windows -> fused signals -> sequence encoding -> implicit edges ->
    graph attention -> per-stock movement probabilities for day ``t``."""
    n = panel.n_stocks
    lookback = config.lookback
    model = bind_params(values, config, tape)

    days = range(t - lookback, t)
    big_p = np.concatenate([panel.indicators[:, d, :] for d in days], axis=0)
    big_q = np.concatenate([panel.sentiment[:, d, :] for d in days], axis=0)
    if np.isnan(big_p).any():
        raise ContractError(f"day {t} lacks a full {lookback}-day window")
    fused = enc.fuse(ad.Tensor(big_p), ad.Tensor(big_q), model.fusion)
    steps = [ad.narrow(fused, 0, k * n, n) for k in range(lookback)]
    seq = enc.encode_sequence(steps, model.gru)

    implicit_edges = None
    if config.use_implicit and model.implicit is not None and n > 1:
        implicit_edges = mg.infer_implicit_edges(seq, model.implicit,
                                                 day=panel.calendar.dates[t])

    if config.use_dual:
        relational = att.dual_forward(
            graph, seq, model.inter, model.intra, implicit=implicit_edges,
            use_explicit=config.use_explicit, use_executives=config.use_executives,
            use_implicit=config.use_implicit, implicit_gate=config.implicit_gate,
            dual_layers=config.dual_layers, trace=trace)
    else:
        relational = att.flat_forward(
            graph, seq, model.flat, implicit=implicit_edges,
            use_explicit=config.use_explicit, use_executives=config.use_executives,
            use_implicit=config.use_implicit, implicit_gate=config.implicit_gate,
            trace=trace)

    logits = ad.matmul(ad.concat([seq, relational], axis=1), ad.transpose(model.head_weight))
    logits = logits + model.head_bias
    probs, _ = ad.masked_softmax(logits, np.ones((n, 2), dtype=bool))
    return DayOutput(probs, seq, relational, implicit_edges)


def day_predictions(panel: SignalPanel, out: DayOutput, t: int) -> list[Prediction]:
    date = panel.calendar.dates[t]
    return [Prediction(stock, date, out.probabilities.data[i].copy(), int(panel.labels[i, t]))
            for i, stock in enumerate(panel.stocks)]


def loss(probabilities: ad.Tensor, labels: np.ndarray) -> ad.Tensor:
    """Summed cross entropy over the day's stocks; probabilities are
    clamped at 1e-12 before the log."""
    n = probabilities.data.shape[0]
    if labels.shape != (n,):
        raise ContractError(f"labels shape {labels.shape} does not match {n} predictions")
    onehot = np.zeros((n, 2))
    onehot[np.arange(n), labels] = 1.0
    logp = ad.log(ad.clamp_min(probabilities, 1e-12))
    return ad.neg(ad.mul(logp, ad.Tensor(onehot)).sum())


def collect_predictions(panel: SignalPanel, graph: mg.MarketGraph,
                        values: Mapping[str, np.ndarray], config: TrainConfig,
                        split: str) -> list[Prediction]:
    """Inference over every eligible day of a split."""
    preds: list[Prediction] = []
    for t in panel.eligible_days(config.lookback, split):
        out = forward_day(panel, graph, t, values, config)
        preds.extend(day_predictions(panel, out, t))
    return preds


def _validation_metric(preds: list[Prediction], which: str) -> float:
    scores = np.array([p.score for p in preds])
    labels = np.array([p.label for p in preds])
    try:
        if which == "roc_auc":
            return ev.auc_roc(scores, labels)
        return ev.auc_pr(scores, labels)
    except Exception:
        return float("nan")


@dataclass
class TrainResult:
    values: dict[str, np.ndarray]
    history: list[dict]
    best_epoch: int
    config: TrainConfig


def train(panel: SignalPanel, graph: mg.MarketGraph, config: TrainConfig,
          log=None) -> TrainResult:
    """Adam over per-day cross entropy; keeps the parameters with the best
    validation metric and stops after ``patience`` epochs without a new best."""
    rng = np.random.default_rng(config.seed)
    values = init_params(config, rng)
    state = ad.AdamState.initial(values, config.learning_rate,
                                 config.adam_beta1, config.adam_beta2, config.adam_eps)
    train_days = panel.eligible_days(config.lookback, "train")
    if not train_days and config.max_epochs > 0:
        raise ContractError("no eligible training days: lookback exceeds the train span")

    best_values = {k: v.copy() for k, v in values.items()}
    best_metric = -np.inf
    best_epoch = 0
    history: list[dict] = []
    stale = 0
    for epoch in range(1, config.max_epochs + 1):
        total_loss = 0.0
        total_preds = 0
        for t in train_days:
            tape = ad.Tape()
            out = forward_day(panel, graph, t, values, config, tape=tape)
            day_loss = loss(out.probabilities, panel.labels[:, t])
            value = day_loss.item()
            if not np.isfinite(value):
                raise TrainingDivergedError(
                    f"non-finite loss {value} at epoch {epoch}, day {panel.calendar.dates[t]}")
            grads = ad.backward(day_loss)
            values, state = ad.adam_step(values, grads, state)
            total_loss += value
            total_preds += panel.n_stocks
        valid_preds = collect_predictions(panel, graph, values, config, "valid")
        metric = _validation_metric(valid_preds, config.early_stop_metric) if valid_preds else float("nan")
        improved = np.isfinite(metric) and metric > best_metric
        if improved:
            best_metric = metric
            best_values = {k: v.copy() for k, v in values.items()}
            best_epoch = epoch
            stale = 0
        else:
            stale += 1
        row = {
            "epoch": epoch,
            "train_loss": total_loss / max(total_preds, 1),
            "valid_metric": float(metric) if np.isfinite(metric) else None,
            "best": int(improved),
        }
        history.append(row)
        if log is not None:
            log(row)
        if stale >= config.patience:
            break
    return TrainResult(best_values, history, best_epoch, config)


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_checkpoint(path, values: Mapping[str, np.ndarray], config: TrainConfig) -> None:
    """Stable JSON layout: version tag, config echo, then each parameter's
    shape and flat row-major float data."""
    payload = {
        "format": CHECKPOINT_FORMAT,
        "config": dataclasses.asdict(config),
        "params": {
            name: {"shape": list(arr.shape), "data": arr.reshape(-1).tolist()}
            for name, arr in values.items()
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_checkpoint(path) -> tuple[dict[str, np.ndarray], TrainConfig]:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ConfigError(f"unsupported checkpoint format {payload.get('format')!r}")
    config = TrainConfig(**payload["config"])
    values = {
        name: np.array(entry["data"], dtype=np.float64).reshape(entry["shape"])
        for name, entry in payload["params"].items()
    }
    expected = set(init_params(config, np.random.default_rng(0)))
    if set(values) != expected:
        missing = sorted(expected ^ set(values))
        raise ConfigError(f"checkpoint parameter names do not match its config: {missing}")
    return values, config
