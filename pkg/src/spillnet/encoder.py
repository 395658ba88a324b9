"""Sequential embedding: bilinear tensor fusion of daily signals, then a
gated recurrent pass over the lookback window.

The fusion layer relates the 5-component indicator vector and 3-component
sentiment vector across M bilinear slices, with a linear term over their
concatenation. All parameters are shared across stocks. The recurrent cell
is the standard gated unit (sigmoid update/reset gates, tanh candidate
with the reset gate applied to the previous state); only the final hidden
state is returned.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import autodiff as ad
from .errors import ContractError, DimensionError

INDICATOR_DIM = 5
SENTIMENT_DIM = 3
FUSED_INPUT = INDICATOR_DIM + SENTIMENT_DIM


@dataclass
class FusionParams:
    """Bilinear slices (5, 3, M), linear map (M, 8), bias (M,)."""

    tensor: ad.Tensor
    linear: ad.Tensor
    bias: ad.Tensor

    @property
    def slices(self) -> int:
        return self.tensor.data.shape[2]

    def check(self) -> None:
        m = self.slices
        if self.tensor.data.shape != (INDICATOR_DIM, SENTIMENT_DIM, m):
            raise DimensionError(f"fusion tensor shape {self.tensor.data.shape} is not (5, 3, M)")
        if self.linear.data.shape != (m, FUSED_INPUT):
            raise DimensionError(f"fusion linear shape {self.linear.data.shape} is not ({m}, 8)")
        if self.bias.data.shape != (m,):
            raise DimensionError(f"fusion bias shape {self.bias.data.shape} is not ({m},)")


@dataclass
class GruParams:
    """Gate weights: input parts (F, M), recurrent parts (F, F), biases (F,)."""

    update_input: ad.Tensor
    update_recurrent: ad.Tensor
    update_bias: ad.Tensor
    reset_input: ad.Tensor
    reset_recurrent: ad.Tensor
    reset_bias: ad.Tensor
    candidate_input: ad.Tensor
    candidate_recurrent: ad.Tensor
    candidate_bias: ad.Tensor

    @property
    def hidden(self) -> int:
        return self.update_input.data.shape[0]


def fuse(p: ad.Tensor, q: ad.Tensor, fp: FusionParams) -> ad.Tensor:
    """Fused daily signal x in (-1, 1)^M; accepts single vectors or
    (rows, 5)/(rows, 3) batches."""
    fp.check()
    single = p.data.ndim == 1
    if p.data.shape[-1:] != (INDICATOR_DIM,) or q.data.shape[-1:] != (SENTIMENT_DIM,):
        raise DimensionError(
            f"fuse expects trailing dims (5,) and (3,), got {p.data.shape} and {q.data.shape}"
        )
    if single:
        p = ad.reshape(p, (1, INDICATOR_DIM))
        q = ad.reshape(q, (1, SENTIMENT_DIM))
    rows = p.data.shape[0]
    m = fp.slices
    # bilinear term: sum_ab p_a W[a, b, k] q_b for each slice k
    flat = ad.reshape(fp.tensor, (INDICATOR_DIM, SENTIMENT_DIM * m))
    mixed = ad.reshape(ad.matmul(p, flat), (rows, SENTIMENT_DIM, m))
    bilinear = ad.mul(mixed, ad.reshape(q, (rows, SENTIMENT_DIM, 1))).sum(axis=1)
    affine = ad.matmul(ad.concat([p, q], axis=1), ad.transpose(fp.linear)) + fp.bias
    out = ad.tanh(bilinear + affine)
    return ad.reshape(out, (m,)) if single else out


def encode_sequence(xs: Sequence[ad.Tensor], gp: GruParams) -> ad.Tensor:
    """Run the gated recurrent cell over fused inputs, oldest first, from a
    zero initial state; returns the final hidden state."""
    if len(xs) == 0:
        raise ContractError("encode_sequence needs at least one input step")
    single = xs[0].data.ndim == 1
    rows = 1 if single else xs[0].data.shape[0]
    f = gp.hidden

    w_z = ad.transpose(gp.update_input)
    u_z = ad.transpose(gp.update_recurrent)
    w_r = ad.transpose(gp.reset_input)
    u_r = ad.transpose(gp.reset_recurrent)
    w_c = ad.transpose(gp.candidate_input)
    u_c = ad.transpose(gp.candidate_recurrent)

    h = ad.Tensor(np.zeros((rows, f)))
    for x in xs:
        if single:
            x = ad.reshape(x, (1, x.data.shape[0]))
        z = ad.sigmoid(ad.matmul(x, w_z) + ad.matmul(h, u_z) + gp.update_bias)
        r = ad.sigmoid(ad.matmul(x, w_r) + ad.matmul(h, u_r) + gp.reset_bias)
        c = ad.tanh(ad.matmul(x, w_c) + ad.matmul(ad.mul(r, h), u_c) + gp.candidate_bias)
        h = ad.mul(ad.sub(1.0, z), c) + ad.mul(z, h)
    return ad.reshape(h, (f,)) if single else h
