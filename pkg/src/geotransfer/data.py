"""Synthetic domain-shift benchmark and the dataset CSV format.

CSV layout: header ``domain,label,f0,...,f{D-1}``, one sample per row,
``domain`` in {source, target}, ``label`` an integer class or -1.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

DOMAINS = ("source", "target")


class DataFormatError(ValueError):
    pass


@dataclass
class DomainDataset:
    """``X`` is ``D x n`` (columns are samples)."""

    X: np.ndarray
    labels: np.ndarray
    domain: str
    k: int

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=int)
        if self.domain not in DOMAINS:
            raise DataFormatError(f"unknown domain {self.domain!r}")
        if self.k < 2:
            raise DataFormatError("need at least two classes")
        if self.X.ndim != 2 or self.labels.shape != (self.X.shape[1],):
            raise DataFormatError("one label per column of X required")
        if self.labels.size and (self.labels.min() < -1 or self.labels.max() >= self.k):
            raise DataFormatError("label out of range")
        if self.domain == "source" and np.any(self.labels < 0):
            raise DataFormatError("source samples must be labeled")

    @property
    def n(self) -> int:
        return self.X.shape[1]

    @property
    def dim(self) -> int:
        return self.X.shape[0]

    @property
    def has_truth(self) -> bool:
        return self.n > 0 and bool(np.all(self.labels >= 0))


@dataclass
class SyntheticConfig:
    k: int = 3
    dim: int = 10
    samples_per_class: int = 100
    separation: float = 4.0
    rotation: float = np.pi / 6
    translation: float = 2.0
    noise: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.k < 2 or self.dim < 2:
            raise ValueError("need k >= 2 and dim >= 2")
        if self.k > self.dim:
            raise ValueError("class centers need k <= dim")
        if self.samples_per_class < 1:
            raise ValueError("samples_per_class must be positive")
        for name in ("separation", "rotation", "translation", "noise"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


def givens_rotation(dim: int, angle: float, rng: np.random.Generator) -> np.ndarray:
    """Product of Givens rotations by ``angle`` on a random pairing of coordinates.

    The planes are disjoint, so for even ``dim`` every vector is turned by
    exactly ``angle``; for odd ``dim`` one coordinate stays fixed.
    """
    R = np.eye(dim)
    perm = rng.permutation(dim)
    c, s = np.cos(angle), np.sin(angle)
    for a, b in zip(perm[0::2], perm[1::2]):
        G = np.eye(dim)
        G[a, a], G[a, b], G[b, a], G[b, b] = c, -s, s, c
        R = G @ R
    return R


def _draw(cfg: SyntheticConfig, centers, rng):
    labels = np.repeat(np.arange(cfg.k), cfg.samples_per_class)
    X = centers[:, labels] + cfg.noise * rng.standard_normal((cfg.dim, labels.size))
    return X, labels


def generate_synthetic_shift(cfg: SyntheticConfig, return_shift: bool = False):
    """Source clusters and a rigidly moved target copy.

    Class centers sit on a seeded random orthonormal frame, scaled so that
    every pair of centers is ``separation`` apart.  The target is an
    independent draw from the same clusters pushed through a fixed rotation
    about the origin plus a translation of length ``translation`` along a
    random direction in the span of the centers.
    """
    rng = np.random.default_rng(cfg.seed)
    frame, _ = np.linalg.qr(rng.standard_normal((cfg.dim, cfg.k)))
    centers = frame * (cfg.separation / np.sqrt(2.0))
    Xs, ys = _draw(cfg, centers, rng)
    Xpre, yt = _draw(cfg, centers, rng)
    R = givens_rotation(cfg.dim, cfg.rotation, rng)
    # translate inside the span of the centers so the shift length maps
    # directly onto class confusion
    u = frame @ rng.standard_normal(cfg.k)
    shift = cfg.translation * u / np.linalg.norm(u)
    Xt = R @ Xpre + shift[:, None]
    source = DomainDataset(Xs, ys, "source", cfg.k)
    target = DomainDataset(Xt, yt, "target", cfg.k)
    if return_shift:
        return source, target, {"pre_shift": Xpre, "rotation": R, "translation": shift}
    return source, target


def save_dataset_csv(dataset: DomainDataset, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["domain", "label"] + [f"f{j}" for j in range(dataset.dim)])
        for j in range(dataset.n):
            w.writerow([dataset.domain, int(dataset.labels[j])] + [repr(float(x)) for x in dataset.X[:, j]])


def _read_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or not any(cell.strip() for cell in rows[0]):
        raise DataFormatError(f"{path}: missing header")
    header = [h.strip() for h in rows[0]]
    D = len(header) - 2
    if header[:2] != ["domain", "label"] or D < 1 or header[2:] != [f"f{j}" for j in range(D)]:
        raise DataFormatError(f"{path}: line 1: malformed header")
    return header, rows[1:]


def load_dataset_csv(path, k: int | None = None, domain: str | None = None) -> DomainDataset:
    """Read a dataset file.

    ``k`` fixes the class count (inferred as ``max label + 1`` otherwise).
    Files holding both domains need ``domain`` to pick one; see
    :func:`load_domains_csv` to get both.
    """
    parts = load_domains_csv(path, k)
    if domain is not None:
        if domain not in parts:
            raise DataFormatError(f"{path}: no {domain} rows")
        return parts[domain]
    if len(parts) != 1:
        raise DataFormatError(f"{path}: file mixes domains; pass domain=")
    return next(iter(parts.values()))


def load_domains_csv(path, k: int | None = None) -> dict[str, DomainDataset]:
    header, rows = _read_rows(path)
    D = len(header) - 2
    feats: dict[str, list] = {}
    labs: dict[str, list] = {}
    for lineno, row in enumerate(rows, start=2):
        if not row:
            continue
        if len(row) != D + 2:
            raise DataFormatError(f"{path}: line {lineno}: expected {D + 2} fields, got {len(row)}")
        dom = row[0].strip()
        if dom not in DOMAINS:
            raise DataFormatError(f"{path}: line {lineno}: unknown domain {dom!r}")
        try:
            label = int(row[1])
            x = [float(v) for v in row[2:]]
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {lineno}: {exc}") from None
        if not np.all(np.isfinite(x)):
            raise DataFormatError(f"{path}: line {lineno}: non-finite feature")
        if label < -1 or (k is not None and label >= k):
            raise DataFormatError(f"{path}: line {lineno}: label {label} out of range")
        if dom == "source" and label < 0:
            raise DataFormatError(f"{path}: line {lineno}: unlabeled source sample")
        feats.setdefault(dom, []).append(x)
        labs.setdefault(dom, []).append(label)
    if not feats:
        raise DataFormatError(f"{path}: no data rows")
    if k is None:
        k = max(2, max(max(v) for v in labs.values()) + 1)
    return {
        dom: DomainDataset(np.asarray(feats[dom]).T, np.asarray(labs[dom]), dom, k)
        for dom in DOMAINS if dom in feats
    }
