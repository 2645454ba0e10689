"""Attentive ensembling of per-type syntax memories with the context states.

For each token i and syntax type c, a key-value memory holds m parallel
(key id, value id) entries. The memory read weights each entry by the dot
product of the context state h_i with the key embedding:

    p_j = softmax_j(h_i . k_j)        s_c = sum_j p_j v_j

The per-type summaries are then fused either by plain concatenation in fixed
type order, or by syntax attention: a sigmoid-squashed score per type,

    q_c = sigmoid(w_c . (h_i ++ s_c) + b_c)      a = softmax_c(q_c)
    s = sum_c a_c s_c

and finally combined with h_i through a reset gate,

    r = sigmoid(W1 h + W2 s + b)     o = (r * h) ++ ((1 - r) * s)

before a linear map to the label-score space. The intermediate weights
(p per memory entry, a per type, and r) are part of the forward contract so
that trained models can be inspected.

Because q_c lies in (0, 1), the attention over |C| types is confined to the
open interval (1 / (1 + (|C|-1) e), e / (e + |C|-1)).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import ParamRegistry, Tensor

TYPE_ORDER = ("pos", "con", "dep")


@dataclass
class KvmnParams:
    """Key and value embedding tables for one syntax type; both dim d so the
    key dot product and the value sum line up with the context states."""

    keys: Tensor  # [n_keys, d]
    values: Tensor  # [n_values, d]


def make_kvmn_params(registry: ParamRegistry, c: str, n_keys: int, n_values: int,
                     d: int) -> KvmnParams:
    return KvmnParams(
        keys=registry.table(f"kvmn.{c}.keys", (n_keys, d)),
        values=registry.table(f"kvmn.{c}.values", (n_values, d)),
    )


def kvmn_forward(h: Tensor, key_ids, value_ids,
                 params: KvmnParams) -> tuple[Tensor, Tensor]:
    """Memory read for one token: returns (summary s [d], weights p [m])."""
    if len(key_ids) == 0:
        raise ValueError("empty syntax memory (extraction must guarantee m >= 1)")
    if len(key_ids) != len(value_ids):
        raise ValueError(f"{len(key_ids)} keys vs {len(value_ids)} values")
    ke = ad.gather_rows(params.keys, key_ids)  # [m, d]
    ve = ad.gather_rows(params.values, value_ids)  # [m, d]
    p = ad.softmax(ad.matmul(ke, h), axis=-1)  # [m]
    s = ad.matmul(p, ve)  # [d]
    return s, p


@dataclass
class SyntaxAttnParams:
    weight: dict[str, Tensor]  # per type: [2d]
    bias: dict[str, Tensor]  # per type: scalar


def make_syntax_attn_params(registry: ParamRegistry, types: tuple[str, ...],
                            d: int) -> SyntaxAttnParams:
    weight = {c: registry.matrix(f"sa.{c}.w", (2 * d,)) for c in types}
    bias = {c: registry.bias(f"sa.{c}.b", ()) for c in types}
    return SyntaxAttnParams(weight, bias)


def active_order(summaries: dict[str, Tensor]) -> list[str]:
    return [c for c in TYPE_ORDER if c in summaries]


def direct_concat(summaries: dict[str, Tensor]) -> Tensor:
    """Fixed-order concatenation of the active per-type summaries."""
    order = active_order(summaries)
    if not order:
        raise ValueError("no active syntax types")
    return ad.concat([summaries[c] for c in order], axis=0)


def syntax_attention(h: Tensor, summaries: dict[str, Tensor],
                     params: SyntaxAttnParams) -> tuple[Tensor, Tensor]:
    """Weight the per-type summaries; returns (s [d], attention a [|C|]).

    a follows the active-type order pos, con, dep.
    """
    order = active_order(summaries)
    if not order:
        raise ValueError("no active syntax types")
    q = []
    for c in order:
        hs = ad.concat([h, summaries[c]], axis=0)
        q.append(ad.sigmoid(ad.add(ad.matmul(params.weight[c], hs), params.bias[c])))
    a = ad.softmax(ad.concat([ad.reshape(x, (1,)) for x in q], axis=0), axis=-1)
    parts = []
    for k, c in enumerate(order):
        parts.append(ad.mul(ad.narrow(a, k, 1), summaries[c]))
    s = parts[0]
    for part in parts[1:]:
        s = ad.add(s, part)
    return s, a


@dataclass
class GateParams:
    w_h: Tensor  # [d, d]
    w_s: Tensor  # [d, d]
    b: Tensor  # [d]


def make_gate_params(registry: ParamRegistry, d: int) -> GateParams:
    return GateParams(
        w_h=registry.matrix("gate.wh", (d, d)),
        w_s=registry.matrix("gate.ws", (d, d)),
        b=registry.bias("gate.b", (d,)),
    )


def gate_fuse(h: Tensor, s: Tensor, params: GateParams) -> tuple[Tensor, Tensor]:
    """Reset-gated mix of context state and syntax summary.

    Returns (o [2d], r [d]); the norm of r is the inspection signal for how
    much the gate leans on the context side.
    """
    if h.shape != s.shape:
        raise ad.ShapeError(f"gate inputs differ: h {h.shape} vs s {s.shape}")
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(h, params.w_h), ad.matmul(s, params.w_s)),
                          params.b))
    one = Tensor(np.ones(r.shape))
    o = ad.concat([ad.mul(r, h), ad.mul(ad.sub(one, r), s)], axis=0)
    return o, r


def project(o: Tensor, w_out: Tensor) -> Tensor:
    """Linear map o [k] -> label scores u [n_labels]; w_out is [k, n_labels]."""
    if o.shape[0] != w_out.shape[0]:
        raise ad.ShapeError(f"projection input {o.shape} vs weight {w_out.shape}")
    return ad.matmul(o, w_out)


def attention_band(n_types: int) -> tuple[float, float]:
    """Open interval containing every attention weight for n active types."""
    e = float(np.e)
    return 1.0 / (1.0 + (n_types - 1) * e), e / (e + n_types - 1)


# ---------------------------------------------------------------------------
# Batched twins of the per-token operations. Same math, one graph node instead
# of one per token; the per-token forms above stay the reference (and feed the
# inspection path). Equality of the two forms is unit-tested.
# ---------------------------------------------------------------------------


def kvmn_forward_batch(H: Tensor, flat_key_ids: np.ndarray,
                       flat_value_ids: np.ndarray, seg: np.ndarray,
                       params: KvmnParams) -> tuple[Tensor, Tensor]:
    """Memory read for all tokens at once.

    ``seg[k]`` maps flat memory entry k to its token; returns (S [n, d],
    flat weights p [N]) with the weights normalized within each token.
    """
    n = H.shape[0]
    ke = ad.gather_rows(params.keys, flat_key_ids)  # [N, d]
    ve = ad.gather_rows(params.values, flat_value_ids)  # [N, d]
    h_rep = ad.gather_rows(H, seg)  # [N, d]
    ones = Tensor(np.ones(H.shape[1]))
    logits = ad.matmul(ad.mul(ke, h_rep), ones)  # row dots -> [N]
    p = ad.segment_softmax(logits, seg, n)
    s = ad.segment_sum_rows(ad.mul(ve, ad.reshape(p, (p.shape[0], 1))), seg, n)
    return s, p


def syntax_attention_batch(H: Tensor, summaries: dict[str, Tensor],
                           params: SyntaxAttnParams) -> tuple[Tensor, Tensor]:
    """Syntax attention over [n, d] summaries; returns (S [n, d], A [n, |C|])."""
    order = active_order(summaries)
    if not order:
        raise ValueError("no active syntax types")
    qs = []
    for c in order:
        q_in = ad.concat([H, summaries[c]], axis=1)  # [n, 2d]
        qs.append(ad.sigmoid(ad.add(ad.matmul(q_in, params.weight[c]), params.bias[c])))
    a_cn = ad.softmax(ad.stack_rows(qs), axis=0)  # [|C|, n], softmax over types
    s = None
    for k, c in enumerate(order):
        n = H.shape[0]
        part = ad.mul(ad.reshape(ad.row(a_cn, k), (n, 1)), summaries[c])
        s = part if s is None else ad.add(s, part)
    return s, ad.transpose(a_cn)


def gate_fuse_batch(H: Tensor, S: Tensor, params: GateParams) -> tuple[Tensor, Tensor]:
    """Gate over [n, d] matrices; returns (O [n, 2d], R [n, d])."""
    if H.shape != S.shape:
        raise ad.ShapeError(f"gate inputs differ: h {H.shape} vs s {S.shape}")
    r = ad.sigmoid(ad.add(ad.add(ad.matmul(H, params.w_h), ad.matmul(S, params.w_s)),
                          params.b))
    one = Tensor(np.ones(r.shape))
    o = ad.concat([ad.mul(r, H), ad.mul(ad.sub(one, r), S)], axis=1)
    return o, r
