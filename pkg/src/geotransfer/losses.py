"""Objective terms of geometry-aware transfer, with analytic gradients.

Feature matrices are ``d x n`` (columns are samples).  Every nuclear-norm
term is differentiated through ``U V^T``; the concatenation's subgradient is
split back onto its column blocks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .spectral import DEFAULT_SV_FLOOR, ContractError, as_matrix, nuclear_norm_and_subgradient

PROB_EPS = 1e-12


class ConfigError(ValueError):
    """Invalid loss weights or training configuration."""


@dataclass
class ClassPartition:
    """Per-class column indices into a batch feature matrix.

    ``source[i]`` holds labeled source columns of class ``i`` and
    ``target[i]`` the selected (pseudo-labeled) target columns.
    """

    source: list[np.ndarray]
    target: list[np.ndarray]

    def __post_init__(self):
        if len(self.source) != len(self.target):
            raise ContractError("source and target lists must have one entry per class")
        self.source = [np.asarray(ix, dtype=int).ravel() for ix in self.source]
        self.target = [np.asarray(ix, dtype=int).ravel() for ix in self.target]
        allix = np.concatenate(self.source + self.target) if self.k else np.zeros(0, int)
        if np.unique(allix).size != allix.size:
            raise ContractError("class index lists overlap")

    @property
    def k(self) -> int:
        return len(self.source)

    def joint(self, i: int) -> np.ndarray:
        return np.concatenate([self.source[i], self.target[i]])

    def columns(self) -> np.ndarray:
        """All columns that belong to some class, in class order."""
        return np.concatenate([self.joint(i) for i in range(self.k)])

    @classmethod
    def from_labels(cls, source_labels, target_labels, k: int, n_source: int | None = None):
        """Build from label vectors; target label ``-1`` means not selected.

        Source columns are ``0..n_s-1``; target columns follow at offset
        ``n_source`` (defaults to ``len(source_labels)``).
        """
        ys = np.asarray(source_labels, dtype=int)
        yt = np.asarray(target_labels if target_labels is not None else [], dtype=int)
        off = len(ys) if n_source is None else n_source
        if ys.size and (ys.min() < 0 or ys.max() >= k):
            raise ContractError("source label out of range")
        if yt.size and yt.max() >= k:
            raise ContractError("target label out of range")
        src = [np.flatnonzero(ys == i) for i in range(k)]
        tgt = [np.flatnonzero(yt == i) + off for i in range(k)]
        return cls(src, tgt)


@dataclass
class LossWeights:
    lambda_t: float = 1e-3
    lambda_dc: float = 1.0
    lambda_co: float = 1.0

    def __post_init__(self):
        for name in ("lambda_t", "lambda_dc", "lambda_co"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be non-negative")


@dataclass
class LossBreakdown:
    l_src_ce: float
    l_tgt_ent: float
    l_dc: float
    l_co: float
    l_ga: float
    total: float
    grad_features: np.ndarray
    grad_logits: np.ndarray
    extras: dict = field(default_factory=dict)


def _nuc(M, sv_floor):
    if M.shape[1] == 0:
        return 0.0, np.zeros_like(M)
    return nuclear_norm_and_subgradient(M, sv_floor)


def domain_coherence_global(Zs, Zt, sv_floor: float = DEFAULT_SV_FLOOR):
    """``||Zs||_* + ||Zt||_* - ||[Zs, Zt]||_*`` and its gradients.

    Either side empty gives value 0 with zero gradients.
    """
    Zs, Zt = as_matrix(Zs), as_matrix(Zt)
    if Zs.shape[0] != Zt.shape[0]:
        raise ContractError("Zs and Zt must have the same row count")
    if Zs.shape[1] == 0 or Zt.shape[1] == 0:
        return 0.0, np.zeros_like(Zs), np.zeros_like(Zt)
    ns = Zs.shape[1]
    vs, gs = _nuc(Zs, sv_floor)
    vt, gt = _nuc(Zt, sv_floor)
    vj, gj = _nuc(np.hstack([Zs, Zt]), sv_floor)
    return vs + vt - vj, gs - gj[:, :ns], gt - gj[:, ns:]


def _class_terms(Z, partition: ClassPartition, sv_floor):
    # per class: (||Zs_i||, grad), (||Zt_i||, grad), (||Z_i||, grad)
    out = []
    for i in range(partition.k):
        si, ti = partition.source[i], partition.target[i]
        ji = np.concatenate([si, ti])
        vs, gs = _nuc(Z[:, si], sv_floor)
        vt, gt = _nuc(Z[:, ti], sv_floor)
        vj, gj = _nuc(Z[:, ji], sv_floor)
        out.append((vs, gs, vt, gt, vj, gj))
    return out


def _dc_from_terms(Z, partition, terms):
    value, grad = 0.0, np.zeros_like(Z)
    for i, (vs, gs, vt, gt, vj, gj) in enumerate(terms):
        si, ti = partition.source[i], partition.target[i]
        if si.size == 0 or ti.size == 0:
            continue
        value += vs + vt - vj
        grad[:, si] += gs - gj[:, : si.size]
        grad[:, ti] += gt - gj[:, si.size :]
    return value, grad


def _co_from_terms(Z, partition, terms, sv_floor):
    cols = partition.columns()
    if cols.size == 0:
        return 0.0, np.zeros_like(Z)
    value, grad = 0.0, np.zeros_like(Z)
    for i, (_, _, _, _, vj, gj) in enumerate(terms):
        value += vj
        grad[:, partition.joint(i)] += gj
    vz, gz = _nuc(Z[:, cols], sv_floor)
    grad[:, cols] -= gz
    return value - vz, grad


def domain_coherence_classwise(Z, partition: ClassPartition, sv_floor: float = DEFAULT_SV_FLOOR):
    """Sum over classes of the coherence deficit between source and target.

    Classes missing either domain contribute nothing.
    """
    Z = as_matrix(Z)
    return _dc_from_terms(Z, partition, _class_terms(Z, partition, sv_floor))


def class_orthogonality(Z, partition: ClassPartition, sv_floor: float = DEFAULT_SV_FLOOR):
    """``sum_i ||Z_i||_* - ||Z||_*`` over the columns owned by the partition.

    Non-negative, and zero when the class column spaces are mutually
    orthogonal.
    """
    Z = as_matrix(Z)
    return _co_from_terms(Z, partition, _class_terms(Z, partition, sv_floor), sv_floor)


def geometry_aware(Z, partition: ClassPartition, lambda_dc: float, lambda_co: float,
                   sv_floor: float = DEFAULT_SV_FLOOR):
    """``lambda_co * L_CO - lambda_dc * L_DC`` (both weights strictly positive)."""
    if lambda_dc <= 0 or lambda_co <= 0:
        raise ConfigError("geometry-aware weights must be positive")
    Z = as_matrix(Z)
    terms = _class_terms(Z, partition, sv_floor)
    dc, gdc = _dc_from_terms(Z, partition, terms)
    co, gco = _co_from_terms(Z, partition, terms, sv_floor)
    return lambda_co * co - lambda_dc * dc, lambda_co * gco - lambda_dc * gdc


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=0, keepdims=True)


def source_cross_entropy(probs_s, labels_s):
    """Summed cross-entropy; the gradient is with respect to the logits."""
    P = np.asarray(probs_s, dtype=np.float64)
    y = np.asarray(labels_s, dtype=int)
    if P.shape[1] == 0:
        return 0.0, np.zeros_like(P)
    cols = np.arange(P.shape[1])
    value = -np.sum(np.log(np.maximum(P[y, cols], PROB_EPS)))
    grad = P.copy()
    grad[y, cols] -= 1.0
    return float(value), grad


def target_entropy(probs_t):
    """Summed prediction entropy; gradient with respect to the logits."""
    P = np.asarray(probs_t, dtype=np.float64)
    if P.shape[1] == 0:
        return 0.0, np.zeros_like(P)
    logp = np.log(np.maximum(P, PROB_EPS))
    H = -np.sum(P * logp, axis=0)
    grad = -P * (logp + H)
    return float(H.sum()), grad


def total_objective(Z, logits, source_labels, target_labels=None, weights: LossWeights | None = None,
                    stage: str = "get", sv_floor: float = DEFAULT_SV_FLOOR) -> LossBreakdown:
    """Full batch objective.

    ``Z`` and ``logits`` hold source columns first, then target columns.
    ``target_labels`` carries pseudo-labels with ``-1`` for unselected
    samples; it is ignored in the warm-up stage.

    stage="warmup": source cross-entropy, global coherence between all
    source and all target columns, orthogonality over source classes only.
    stage="get": cross-entropy + weighted target entropy + class-wise
    coherence and orthogonality over source truth and selected targets.
    """
    w = weights or LossWeights()
    Z = as_matrix(Z)
    logits = np.asarray(logits, dtype=np.float64)
    ys = np.asarray(source_labels, dtype=int)
    ns = ys.size
    n = Z.shape[1]
    k = logits.shape[0]
    if logits.shape[1] != n:
        raise ContractError("features and logits disagree on sample count")
    probs = softmax(logits)
    grad_logits = np.zeros_like(logits)
    grad_Z = np.zeros_like(Z)

    l_ce, g = source_cross_entropy(probs[:, :ns], ys)
    grad_logits[:, :ns] += g

    if stage == "warmup":
        l_ent = 0.0
        l_dc, gs, gt = domain_coherence_global(Z[:, :ns], Z[:, ns:], sv_floor) if w.lambda_dc else (0.0, 0, 0)
        if w.lambda_dc:
            grad_Z[:, :ns] -= w.lambda_dc * gs
            grad_Z[:, ns:] -= w.lambda_dc * gt
        part = ClassPartition.from_labels(ys, None, k)
        l_co, gco = class_orthogonality(Z, part, sv_floor) if w.lambda_co else (0.0, 0)
        grad_Z += w.lambda_co * gco
    elif stage == "get":
        l_ent, g = target_entropy(probs[:, ns:])
        grad_logits[:, ns:] += w.lambda_t * g
        yt = np.full(n - ns, -1) if target_labels is None else np.asarray(target_labels, dtype=int)
        part = ClassPartition.from_labels(ys, yt, k)
        terms = _class_terms(Z, part, sv_floor) if (w.lambda_dc or w.lambda_co) else None
        l_dc, gdc = _dc_from_terms(Z, part, terms) if w.lambda_dc else (0.0, 0)
        l_co, gco = _co_from_terms(Z, part, terms, sv_floor) if w.lambda_co else (0.0, 0)
        grad_Z += w.lambda_co * gco - w.lambda_dc * gdc
    else:
        raise ConfigError(f"unknown stage {stage!r}")

    l_ga = w.lambda_co * l_co - w.lambda_dc * l_dc
    total = l_ce + w.lambda_t * l_ent + l_ga
    return LossBreakdown(
        l_src_ce=float(l_ce), l_tgt_ent=float(l_ent), l_dc=float(l_dc), l_co=float(l_co),
        l_ga=float(l_ga), total=float(total), grad_features=grad_Z, grad_logits=grad_logits,
        extras={"probs": probs},
    )
