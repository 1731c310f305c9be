"""Two-stage training: source warm-up, then pseudo-labeled geometry-aware
adaptation."""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field

import numpy as np

from .data import DomainDataset
from .diagnostics import geometry_diagnostics
from .losses import ConfigError, LossWeights, total_objective
from .model import AdamState, Model, adam_step, backward, classifier_logits, forward_features, init_model

HISTORY_COLUMNS = (
    "epoch", "l_src_ce", "l_tgt_ent", "l_dc", "l_co", "total", "pseudo_count", "pseudo_acc",
    "target_acc", "interclass_mean_angle_deg", "crossdomain_mean_angle_deg",
)


@dataclass
class TrainingConfig:
    t_warm: int = 20
    t_adapt: int = 80
    batch_size: int = 64
    lr: float = 1e-3
    weight_decay: float = 0.01
    lambda_dc: float = 1.0
    lambda_co: float = 1.0
    lambda_t: float = 1e-3
    tau: float = 0.8
    seed: int = 0
    normalize: bool = True
    hidden: tuple[int, ...] = (64,)
    feature_dim: int = 3
    activation: str = "tanh"
    output_activation: str = "linear"

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.t_warm < 0 or self.t_adapt < 0:
            raise ConfigError("epoch counts must be non-negative")
        if not 0 < self.tau <= 1:
            raise ConfigError("tau must lie in (0, 1]")
        if self.batch_size < 2:
            raise ConfigError("batch_size must be at least 2")
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if self.feature_dim < 1:
            raise ConfigError("feature_dim must be positive")
        # zero weights are allowed for ablations and the source-only baseline
        self.weights()

    def weights(self) -> LossWeights:
        return LossWeights(self.lambda_t, self.lambda_dc, self.lambda_co)


@dataclass
class EpochRecord:
    epoch: int
    stage: str
    l_src_ce: float
    l_tgt_ent: float
    l_dc: float
    l_co: float
    total: float
    pseudo_count: int
    pseudo_acc: float
    target_acc: float
    source_acc: float
    interclass_mean_angle_deg: float
    crossdomain_mean_angle_deg: float


@dataclass
class TrainingHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def append(self, rec: EpochRecord) -> None:
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise ValueError("epoch index must increase")
        self.records.append(rec)

    @property
    def last(self) -> EpochRecord | None:
        return self.records[-1] if self.records else None

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(HISTORY_COLUMNS)
            for rec in self.records:
                d = asdict(rec)
                w.writerow([_fmt(d[c]) for c in HISTORY_COLUMNS])


def _fmt(v):
    if isinstance(v, float):
        return "" if np.isnan(v) else repr(v)
    return v


def assign_pseudo_labels(probs_t, tau: float):
    """Argmax labels and the mask of columns whose top probability exceeds tau.

    ``np.argmax`` resolves ties toward the lowest class index.
    """
    P = np.asarray(probs_t, dtype=np.float64)
    labels = np.argmax(P, axis=0)
    selected = P.max(axis=0) > tau if P.shape[1] else np.zeros(0, dtype=bool)
    return labels, selected


def predict(model: Model, X):
    Z, _ = forward_features(model.projector, X)
    logits = classifier_logits(model.classifier, Z)
    e = np.exp(logits - logits.max(axis=0, keepdims=True))
    return Z, e / e.sum(axis=0, keepdims=True)


def evaluate(model: Model, dataset: DomainDataset) -> dict:
    """Argmax accuracy overall and per class (NaN for absent classes)."""
    if not dataset.has_truth:
        raise ConfigError("evaluation needs ground-truth labels for every sample")
    if dataset.labels.max() >= model.n_classes:
        raise ConfigError("dataset labels exceed the model's class count")
    _, P = predict(model, dataset.X)
    pred = np.argmax(P, axis=0)
    hit = pred == dataset.labels
    per_class = [float(hit[dataset.labels == i].mean()) if np.any(dataset.labels == i) else float("nan")
                 for i in range(model.n_classes)]
    return {"accuracy": float(hit.mean()), "per_class_accuracy": per_class, "n": int(dataset.n)}


class Trainer:
    """Owns the model and optimizer state for one run."""

    def __init__(self, config: TrainingConfig, input_dim: int, n_classes: int, model: Model | None = None):
        self.config = config
        seeds = np.random.SeedSequence(config.seed).spawn(2)
        self.rng = np.random.default_rng(seeds[1])
        self.model = model or init_model(
            input_dim, n_classes, config.hidden, config.feature_dim, config.activation,
            config.normalize, seed=int(seeds[0].generate_state(1)[0]),
            output_activation=config.output_activation,
        )
        self.opt = AdamState(lr=config.lr, weight_decay=config.weight_decay)
        self.epoch = 0

    def _batches(self, ns: int, nt: int):
        half = max(1, self.config.batch_size // 2)
        src = self.rng.permutation(ns)
        n_batches = -(-ns // half)
        reps = -(-(n_batches * half) // nt) if nt else 0
        tgt = np.concatenate([self.rng.permutation(nt) for _ in range(reps)]) if reps else np.zeros(0, int)
        for b in range(n_batches):
            yield src[b * half:(b + 1) * half], tgt[b * half:(b + 1) * half]

    def _step(self, Xs, ys, Xt, stage: str):
        cfg = self.config
        X = np.hstack([Xs, Xt])
        ns = Xs.shape[1]
        Z, cache = forward_features(self.model.projector, X)
        logits = classifier_logits(self.model.classifier, Z)
        pseudo = None
        n_sel = 0
        if stage == "get":
            e = np.exp(logits[:, ns:] - logits[:, ns:].max(axis=0, keepdims=True))
            lab, sel = assign_pseudo_labels(e / e.sum(axis=0, keepdims=True), cfg.tau)
            pseudo = np.where(sel, lab, -1)
            n_sel = int(sel.sum())
        br = total_objective(Z, logits, ys, pseudo, cfg.weights(), stage=stage)
        grads = backward(self.model, cache, br.grad_features, br.grad_logits)
        new, self.opt = adam_step(self.opt, self.model.params(), grads)
        self.model = self.model.with_params(new)
        return br, X.shape[1], n_sel

    def run_epoch(self, source: DomainDataset, target: DomainDataset, stage: str):
        """One pass over the shuffled source, each half-batch paired with target columns.

        Only ``target.X`` is read here; target labels never enter training.
        """
        if source.n == 0:
            raise ConfigError("empty source dataset")
        if stage == "get" and target.n == 0:
            raise ConfigError("empty target dataset")
        sums = dict.fromkeys(("l_src_ce", "l_tgt_ent", "l_dc", "l_co", "total"), 0.0)
        count = 0
        Xs_all, ys_all, Xt_all = source.X, source.labels, target.X
        for si, ti in self._batches(source.n, target.n):
            br, size, _ = self._step(Xs_all[:, si], ys_all[si], Xt_all[:, ti], stage)
            for key in sums:
                sums[key] += size * getattr(br, key)
            count += size
        self.epoch += 1
        return {key: v / count for key, v in sums.items()}

    def record(self, losses: dict, stage: str, source: DomainDataset, target: DomainDataset) -> EpochRecord:
        m = model_metrics(self.model, source, target, self.config.tau)
        return EpochRecord(
            epoch=self.epoch, stage=stage, **losses, pseudo_count=m["pseudo_count"],
            pseudo_acc=m["pseudo_acc"], target_acc=m["target_acc"], source_acc=m["source_acc"],
            interclass_mean_angle_deg=m["interclass_mean_angle_deg"],
            crossdomain_mean_angle_deg=m["crossdomain_mean_angle_deg"],
        )


def model_metrics(model: Model, source: DomainDataset, target: DomainDataset, tau: float) -> dict:
    """Accuracies, pseudo-label statistics and mean angles for the current model.

    Target truth (when present) sets the class partition for the angles;
    otherwise the confident pseudo-labels do.  Missing truth yields NaN
    accuracies.
    """
    Zs, Ps = predict(model, source.X)
    Zt, Pt = predict(model, target.X)
    lab, sel = assign_pseudo_labels(Pt, tau)
    src_acc = float(np.mean(np.argmax(Ps, axis=0) == source.labels))
    if target.has_truth:
        truth = target.labels
        tgt_acc = float(np.mean(lab == truth))
        pseudo_acc = float(np.mean(lab[sel] == truth[sel])) if sel.any() else float("nan")
        tgt_lab = truth
    else:
        tgt_acc = pseudo_acc = float("nan")
        tgt_lab = np.where(sel, lab, -1)
    diag = geometry_diagnostics(
        np.hstack([Zs, Zt]), np.concatenate([source.labels, tgt_lab]),
        np.r_[np.zeros(source.n, bool), np.ones(target.n, bool)], k=model.n_classes,
    ).summary()
    return {
        "source_acc": src_acc, "target_acc": tgt_acc, "pseudo_count": int(sel.sum()),
        "pseudo_acc": pseudo_acc,
        "interclass_mean_angle_deg": diag["interclass_mean_angle_deg"],
        "crossdomain_mean_angle_deg": diag["crossdomain_mean_angle_deg"],
    }


def warm_up_epoch(trainer: Trainer, source: DomainDataset, target: DomainDataset) -> dict:
    """Source cross-entropy + global coherence + source-only orthogonality.

    Returns the epoch's batch-size-weighted mean losses.
    """
    return trainer.run_epoch(source, target, "warmup")


def get_epoch(trainer: Trainer, source: DomainDataset, target: DomainDataset) -> dict:
    """Full objective with pseudo-labels recomputed from the live model per batch."""
    return trainer.run_epoch(source, target, "get")


def train(config: TrainingConfig, source: DomainDataset, target: DomainDataset,
          record: bool = True) -> tuple[Model, TrainingHistory]:
    """Run ``t_warm`` warm-up epochs followed by ``t_adapt`` adaptation epochs.

    Target labels, when present, are read only for the per-epoch metrics.
    """
    if source.dim != target.dim or source.k != target.k:
        raise ConfigError("source and target must share input dimension and class count")
    trainer = Trainer(config, source.dim, source.k)
    history = TrainingHistory()
    for stage, epochs in (("warmup", config.t_warm), ("get", config.t_adapt)):
        for _ in range(epochs):
            losses = trainer.run_epoch(source, target, stage)
            if record:
                history.append(trainer.record(losses, stage, source, target))
    return trainer.model, history
