"""The seeded toy benchmark used by the acceptance checks and scripts.

Three classes in ten input dimensions, a 3-D feature space, and a target
domain rotated by pi/6 and translated by twice the noise scale.  Training
differs from the library defaults only in its learning rate (1e-2).
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .data import SyntheticConfig
from .pipeline import TrainingConfig

BENCHMARK_SEEDS = tuple(range(10))
NOISE = 0.7

DATA_DEFAULTS = dict(k=3, dim=10, samples_per_class=100, separation=4.0,
                     rotation=np.pi / 6, translation=2 * NOISE, noise=NOISE)
TRAIN_DEFAULTS = dict(t_warm=20, t_adapt=80, batch_size=64, lr=1e-2, lambda_dc=1.0, lambda_co=1.0,
                      lambda_t=1e-3, tau=0.8, feature_dim=3, hidden=(64,))


def benchmark_data(seed: int, **overrides) -> SyntheticConfig:
    return SyntheticConfig(seed=seed, **{**DATA_DEFAULTS, **overrides})


def benchmark_training(seed: int, **overrides) -> TrainingConfig:
    return TrainingConfig(seed=seed, **{**TRAIN_DEFAULTS, **overrides})


def source_only(cfg: TrainingConfig) -> TrainingConfig:
    """Same budget and seed with every adaptation term switched off."""
    return dataclasses.replace(cfg, lambda_dc=0.0, lambda_co=0.0, lambda_t=0.0)


def run_config_dict(seed: int = 0) -> dict:
    """Flat RunConfig document for the CLI."""
    doc = {**DATA_DEFAULTS, **TRAIN_DEFAULTS, "seed": seed}
    doc["hidden"] = list(doc["hidden"])
    return doc


# Training arms compared on the benchmark: name -> overrides of TRAIN_DEFAULTS.
ARMS = {
    "source_only": dict(lambda_dc=0.0, lambda_co=0.0, lambda_t=0.0),
    "balanced": {},
    "dc_heavy": dict(lambda_dc=3.0, lambda_co=1.0),
    "no_dc": dict(lambda_dc=0.0),
    "no_co": dict(lambda_co=0.0),
}


def run_arm(seed: int, arm: str) -> dict:
    """Final target accuracy and mean angles for one arm on one seed."""
    from .data import generate_synthetic_shift
    from .pipeline import model_metrics, train

    cfg = benchmark_training(seed, **ARMS[arm])
    source, target = generate_synthetic_shift(benchmark_data(seed))
    model, _ = train(cfg, source, target, record=False)
    out = model_metrics(model, source, target, cfg.tau)
    out.update(seed=seed, arm=arm)
    return out


def run_arms(seeds=BENCHMARK_SEEDS, arms=tuple(ARMS)) -> dict[str, list[dict]]:
    return {arm: [run_arm(s, arm) for s in seeds] for arm in arms}
