"""Subspace geometry of learned features: per-class norms, ranks and angles."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from itertools import combinations

import numpy as np

from .spectral import DEFAULT_RANK_TOL, nuclear_norm, numerical_rank, orthonormal_basis, principal_angles

# Subspace bases for angle measurements drop directions below this fraction
# of the leading singular value.  Noisy per-class feature clouds are
# numerically full rank, and full-rank bases in a d-dimensional space make
# every angle zero.
DIAG_BASIS_TOL = 0.3


@dataclass
class GeometryDiagnostics:
    classes: list[int]
    nuclear_source: list[float]
    nuclear_target: list[float]
    nuclear_joint: list[float]
    rank_joint: list[int]
    subspace_dim: list[int]
    crossdomain_mean: list[float]
    crossdomain_max: list[float]
    interclass_mean: float
    interclass_min: float
    global_nuclear: float
    skipped: list[int] = field(default_factory=list)

    @property
    def crossdomain_mean_overall(self) -> float:
        vals = [v for v in self.crossdomain_mean if not np.isnan(v)]
        return float(np.mean(vals)) if vals else float("nan")

    def summary(self) -> dict:
        return {
            "interclass_mean_angle_deg": float(np.degrees(self.interclass_mean)),
            "interclass_min_angle_deg": float(np.degrees(self.interclass_min)),
            "crossdomain_mean_angle_deg": float(np.degrees(self.crossdomain_mean_overall)),
        }

    def to_dict(self) -> dict:
        d = asdict(self)
        d.update(self.summary())
        return _jsonable(d)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, float) and np.isnan(obj):
        return None
    if isinstance(obj, np.generic):
        return _jsonable(obj.item())
    return obj


def _basis(M, tol):
    if M.shape[1] == 0 or not np.any(M):
        return None
    return orthonormal_basis(M, tol)


def geometry_diagnostics(Z, labels, is_target, k: int | None = None,
                         basis_tol: float = DIAG_BASIS_TOL,
                         rank_tol: float = DEFAULT_RANK_TOL) -> GeometryDiagnostics:
    """Measure how well classes are aligned across domains and separated.

    Parameters
    ----------
    Z : (d, n) features.
    labels : (n,) class per column; negative entries are ignored.
    is_target : (n,) boolean domain tag.
    basis_tol : relative singular-value cutoff for the bases that enter the
        principal angles.
    rank_tol : cutoff for the reported numerical ranks.

    Classes with no columns are skipped and listed in ``skipped``.  Angles
    are in radians; a missing domain gives NaN cross-domain angles.
    """
    Z = np.asarray(Z, dtype=np.float64)
    labels = np.asarray(labels, dtype=int)
    is_target = np.asarray(is_target, dtype=bool)
    k = int(labels.max()) + 1 if k is None else k
    out = dict(classes=[], nuclear_source=[], nuclear_target=[], nuclear_joint=[], rank_joint=[],
               subspace_dim=[], crossdomain_mean=[], crossdomain_max=[])
    skipped, bases = [], []
    for i in range(k):
        mask = labels == i
        if not mask.any():
            skipped.append(i)
            continue
        Zs, Zt, Zi = Z[:, mask & ~is_target], Z[:, mask & is_target], Z[:, mask]
        out["classes"].append(i)
        out["nuclear_source"].append(nuclear_norm(Zs) if Zs.shape[1] else 0.0)
        out["nuclear_target"].append(nuclear_norm(Zt) if Zt.shape[1] else 0.0)
        out["nuclear_joint"].append(nuclear_norm(Zi))
        out["rank_joint"].append(numerical_rank(Zi, rank_tol))
        Bi, Bs, Bt = _basis(Zi, basis_tol), _basis(Zs, basis_tol), _basis(Zt, basis_tol)
        out["subspace_dim"].append(0 if Bi is None else Bi.shape[1])
        bases.append(Bi)
        if Bs is None or Bt is None:
            out["crossdomain_mean"].append(float("nan"))
            out["crossdomain_max"].append(float("nan"))
        else:
            ang = principal_angles(Bs, Bt)
            out["crossdomain_mean"].append(float(ang.mean()))
            out["crossdomain_max"].append(float(ang.max()))
    pair_angles = [principal_angles(a, b) for a, b in combinations([b for b in bases if b is not None], 2)]
    flat = np.concatenate(pair_angles) if pair_angles else np.zeros(0)
    columns = labels >= 0
    return GeometryDiagnostics(
        **out,
        interclass_mean=float(flat.mean()) if flat.size else float("nan"),
        interclass_min=float(flat.min()) if flat.size else float("nan"),
        global_nuclear=nuclear_norm(Z[:, columns]) if columns.any() else 0.0,
        skipped=skipped,
    )
