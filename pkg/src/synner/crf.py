"""Globally normalized linear-chain CRF.

Score of a label sequence y for emissions U ([n, T]):

    score(y) = sum_i (U[i, y_i] + b[y_i])
             + W[START, y_1] + sum_i W[y_{i-1}, y_i] + W[y_n, STOP]

Training minimizes logZ - score(gold) with logZ from the forward algorithm in
log space; decoding is Viterbi over the same score. START/STOP are synthetic
states appended after the real labels, giving a (T+2, T+2) transition matrix
whose START column and STOP row are never used. Brute-force enumeration twins
(`brute_logz`, `brute_best`) cover small instances for verification.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor


@dataclass
class CrfParams:
    transitions: Tensor  # [T+2, T+2]
    bias: Tensor  # [T], per-label emission bias

    @property
    def n_labels(self) -> int:
        return self.bias.shape[0]

    @property
    def start(self) -> int:
        return self.n_labels

    @property
    def stop(self) -> int:
        return self.n_labels + 1


def make_crf_params(registry: ad.ParamRegistry, n_labels: int,
                    prefix: str = "crf") -> CrfParams:
    trans = registry.matrix(f"{prefix}.trans", (n_labels + 2, n_labels + 2))
    bias = registry.bias(f"{prefix}.bias", (n_labels,))
    return CrfParams(trans, bias)


def _check_gold(gold: list[int], n_labels: int) -> None:
    for y in gold:
        if not 0 <= y < n_labels:
            raise ValueError(f"gold label id {y} out of range [0, {n_labels})")


def nll(U: Tensor, params: CrfParams, gold: list[int],
        mask: np.ndarray | None = None) -> Tensor:
    """Negative log-likelihood logZ - score(gold); differentiable in U and params.

    ``mask`` is an optional constant (T+2, T+2) additive penalty on
    transitions (scheme constraints); it is not trained.
    """
    n, T = U.shape
    if n < 1:
        raise ValueError("empty sentence")
    if T != params.n_labels:
        raise ad.ShapeError(f"emissions have {T} labels, params have {params.n_labels}")
    _check_gold(gold, T)
    start, stop = params.start, params.stop

    trans = params.transitions
    if mask is not None:
        trans = ad.add(trans, Tensor(mask))
    emit = ad.add(U, params.bias)  # [n, T] broadcast bias over rows

    # trans restricted to real labels, oriented [to, from] for the recursion.
    trans_to_from = ad.narrow(ad.transpose(ad.narrow(trans, 0, T)), 0, T)
    from_start = ad.narrow(ad.row(trans, start), 0, T)  # [T]

    # Forward recursion in log space.
    alpha = ad.add(ad.row(emit, 0), from_start)
    for i in range(1, n):
        scores = ad.add(trans_to_from, ad.reshape(alpha, (1, T)))  # [to, from]
        alpha = ad.add(ad.logsumexp(scores, axis=1), ad.row(emit, i))
    to_stop = ad.take_pairs(trans, list(range(T)), [stop] * T)
    log_z = ad.logsumexp(ad.add(alpha, to_stop), axis=None)

    # Gold path score.
    emit_gold = ad.tsum(ad.take_pairs(emit, list(range(n)), gold))
    trans_rows = [start] + gold
    trans_cols = gold + [stop]
    trans_gold = ad.tsum(ad.take_pairs(trans, trans_rows, trans_cols))
    return ad.sub(log_z, ad.add(emit_gold, trans_gold))


def viterbi(U: np.ndarray, params: CrfParams,
            mask: np.ndarray | None = None) -> tuple[list[int], float]:
    """Highest-scoring path; ties go to the lowest label id at each backpointer."""
    U = np.asarray(U, dtype=np.float64)
    n, T = U.shape
    trans = params.transitions.data.copy()
    if mask is not None:
        trans = trans + mask
    emit = U + params.bias.data
    start, stop = params.start, params.stop

    delta = emit[0] + trans[start, :T]
    back = np.zeros((n, T), dtype=np.intp)
    for i in range(1, n):
        scores = delta[:, None] + trans[:T, :T]  # [from, to]
        back[i] = scores.argmax(axis=0)  # argmax picks the lowest id on ties
        delta = scores.max(axis=0) + emit[i]
    final = delta + trans[:T, stop]
    last = int(final.argmax())
    best = float(final[last])
    path = [last]
    for i in range(n - 1, 0, -1):
        last = int(back[i, last])
        path.append(last)
    path.reverse()
    return path, best


BRUTE_LIMIT = 1_000_000


def _path_score(U: np.ndarray, trans: np.ndarray, bias: np.ndarray,
                start: int, stop: int, path: tuple[int, ...]) -> float:
    s = trans[start, path[0]]
    for i, y in enumerate(path):
        s += U[i, y] + bias[y]
        if i > 0:
            s += trans[path[i - 1], y]
    s += trans[path[-1], stop]
    return float(s)


def _enumerate(U: np.ndarray, params: CrfParams, mask: np.ndarray | None):
    U = np.asarray(U, dtype=np.float64)
    n, T = U.shape
    if T ** n > BRUTE_LIMIT:
        raise ValueError(f"instance too large to enumerate: {T}^{n} paths")
    trans = params.transitions.data.copy()
    if mask is not None:
        trans = trans + mask
    for path in itertools.product(range(T), repeat=n):
        yield path, _path_score(U, trans, params.bias.data, params.start, params.stop, path)


def brute_logz(U: np.ndarray, params: CrfParams,
               mask: np.ndarray | None = None) -> float:
    """Exhaustive log partition function (test oracle)."""
    scores = [s for _, s in _enumerate(U, params, mask)]
    m = max(scores)
    return m + math.log(sum(math.exp(s - m) for s in scores))


def brute_best(U: np.ndarray, params: CrfParams,
               mask: np.ndarray | None = None) -> tuple[list[int], float]:
    """Exhaustive argmax with Viterbi's tie rule: among equal-scoring paths
    prefer the one whose labels are smallest read from the end (that is what
    lowest-id backpointers produce)."""
    best_path: tuple[int, ...] | None = None
    best_score = -math.inf
    for path, s in _enumerate(U, params, mask):
        key = tuple(reversed(path))
        if s > best_score or (s == best_score and key < tuple(reversed(best_path))):
            best_path, best_score = path, s
    return list(best_path), best_score


def brute_path_prob_total(U: np.ndarray, params: CrfParams,
                          mask: np.ndarray | None = None) -> float:
    """sum over paths of exp(score - logZ); equals 1 on a correct model."""
    lz = brute_logz(U, params, mask)
    return float(sum(math.exp(s - lz) for _, s in _enumerate(U, params, mask)))


def bioes_transition_mask(labels: list[str], penalty: float = -1e4) -> np.ndarray:
    """Additive penalty matrix forbidding scheme-invalid BIOES transitions.

    Valid continuations: B-X/I-X may only be followed by I-X/E-X of the same
    type; O, E-X and S-X may be followed by O, B-Y or S-Y. START behaves like
    O for outgoing arcs; STOP is reachable only from O, E-X and S-X.
    """
    T = len(labels)
    mask = np.zeros((T + 2, T + 2))
    start, stop = T, T + 1

    def parts(lab: str) -> tuple[str, str | None]:
        if lab == "O":
            return "O", None
        p, _, t = lab.partition("-")
        return p, t

    def allowed(frm: tuple[str, str | None], to: tuple[str, str | None]) -> bool:
        fp, ft = frm
        tp, tt = to
        if fp in ("B", "I"):
            return tp in ("I", "E") and tt == ft
        return tp in ("O", "B", "S")

    for i, li in enumerate(labels):
        for j, lj in enumerate(labels):
            if not allowed(parts(li), parts(lj)):
                mask[i, j] = penalty
    for j, lj in enumerate(labels):
        if parts(lj)[0] not in ("O", "B", "S"):
            mask[start, j] = penalty
    for i, li in enumerate(labels):
        if parts(li)[0] in ("B", "I"):
            mask[i, stop] = penalty
    return mask
