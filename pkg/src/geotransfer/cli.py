"""Command-line entry point: ``geotransfer <subcommand>`` or ``python -m geotransfer``.

Exit codes: 0 success, 1 validation failure (bad input, config, or a
violated bound), 2 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import DataFormatError, SyntheticConfig, generate_synthetic_shift, load_domains_csv, save_dataset_csv
from .diagnostics import geometry_diagnostics, _jsonable
from .losses import ConfigError
from .model import load_checkpoint, save_checkpoint
from .pipeline import TrainingConfig, evaluate, model_metrics, predict, train
from .spectral import ContractError, NumericalError
from .theory import reports_to_json, run_theory_suite

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2

_DATA_FIELDS = [f for f in fields(SyntheticConfig) if f.name != "seed"]
_TRAIN_FIELDS = [f for f in fields(TrainingConfig) if f.name != "seed"]


class UsageError(ValueError):
    pass


@dataclass
class RunConfig:
    """Flat run description: data generation, training, and output paths.

    ``source``/``target`` point at CSV files; when both are empty the
    synthetic generator is used with the data fields below.
    """

    data: SyntheticConfig = field(default_factory=SyntheticConfig)
    training: TrainingConfig = field(default_factory=TrainingConfig)
    seed: int = 0
    out_dir: str = "run"
    source: str = ""
    target: str = ""

    def to_dict(self) -> dict:
        d = {f.name: getattr(self.data, f.name) for f in _DATA_FIELDS}
        d.update({f.name: getattr(self.training, f.name) for f in _TRAIN_FIELDS})
        d["hidden"] = list(self.training.hidden)
        d.update(seed=self.seed, out_dir=self.out_dir, source=self.source, target=self.target)
        return d

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        data_keys = {f.name for f in _DATA_FIELDS}
        train_keys = {f.name for f in _TRAIN_FIELDS}
        top_keys = {"seed", "out_dir", "source", "target"}
        unknown = sorted(set(doc) - data_keys - train_keys - top_keys)
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        seed = int(doc.get("seed", 0))
        try:
            data = SyntheticConfig(seed=seed, **{k: v for k, v in doc.items() if k in data_keys})
            training = TrainingConfig(seed=seed, **{k: v for k, v in doc.items() if k in train_keys})
        except (TypeError, ValueError) as exc:
            raise UsageError(f"invalid config: {exc}") from None
        return cls(data, training, seed, str(doc.get("out_dir", "run")),
                   str(doc.get("source", "")), str(doc.get("target", "")))

    def with_seed(self, seed: int) -> "RunConfig":
        doc = self.to_dict()
        doc["seed"] = seed
        return RunConfig.from_dict(doc)


def _hidden(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip()]


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def _add_field_flags(parser, flds, defaults) -> None:
    for f in flds:
        default = getattr(defaults, f.name)
        kind = type(default)
        if f.name == "hidden":
            conv, shown = _hidden, ",".join(map(str, default))
        elif kind is bool:
            conv, shown = _bool, default
        else:
            conv, shown = kind, default
        parser.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, type=conv, default=None,
                            help=f"(default: {shown})")


def _add_common(parser, data=True, training=False) -> None:
    parser.add_argument("--config", help="RunConfig JSON; flags override its values")
    parser.add_argument("--seed", type=int, default=None, help="(default: 0)")
    parser.add_argument("--out-dir", dest="out_dir", default=None, help="(default: run)")
    if data:
        _add_field_flags(parser.add_argument_group("data"), _DATA_FIELDS, SyntheticConfig())
    if training:
        _add_field_flags(parser.add_argument_group("training"), _TRAIN_FIELDS, TrainingConfig())


def resolve_config(args) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    doc: dict = {}
    if getattr(args, "config", None):
        path = Path(args.config)
        try:
            doc = json.loads(path.read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise UsageError(f"{path}: malformed JSON ({exc})") from None
        if not isinstance(doc, dict):
            raise UsageError(f"{path}: expected a JSON object")
    flag_keys = {f.name for f in _DATA_FIELDS + _TRAIN_FIELDS} | {"seed", "out_dir", "source", "target"}
    for key in flag_keys:
        value = getattr(args, key, None)
        if value is not None:
            doc[key] = value
    return RunConfig.from_dict(doc)


def _load_pair(cfg: RunConfig):
    if bool(cfg.source) != bool(cfg.target):
        raise UsageError("give both source and target files, or neither")
    if cfg.source:
        k = cfg.data.k
        src = load_domains_csv(_existing(cfg.source), k).get("source")
        tgt = load_domains_csv(_existing(cfg.target), k).get("target")
        if src is None or tgt is None:
            raise UsageError("source file needs source rows and target file needs target rows")
        return src, tgt
    return generate_synthetic_shift(cfg.data)


def _existing(path) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"file not found: {p}")
    return p


def _write_json(path: Path, doc) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")


def cmd_gen_data(args) -> int:
    cfg = resolve_config(args)
    source, target = generate_synthetic_shift(cfg.data)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(source, out / "source.csv")
    save_dataset_csv(target, out / "target.csv")
    print(f"wrote {out / 'source.csv'} and {out / 'target.csv'}")
    return EXIT_OK


def _run_once(cfg: RunConfig):
    source, target = _load_pair(cfg)
    model, history = train(cfg.training, source, target)
    metrics = model_metrics(model, source, target, cfg.training.tau)
    last = history.last
    # final-epoch losses mirror the history columns; null before any epoch
    for key in ("l_src_ce", "l_tgt_ent", "l_dc", "l_co", "total"):
        metrics[key] = getattr(last, key) if last else None
    metrics["seed"] = cfg.seed
    metrics["epochs"] = len(history)
    return model, history, metrics


def _summary(runs: list[dict]) -> dict:
    out = {}
    for key in ("source_acc", "target_acc", "interclass_mean_angle_deg", "crossdomain_mean_angle_deg"):
        vals = np.array([r[key] for r in runs], dtype=float)
        vals = vals[~np.isnan(vals)]
        out[key] = {"mean": float(vals.mean()) if vals.size else None,
                    "std": float(vals.std()) if vals.size else None}
    return out


def _metrics_only(cfg_dict: dict) -> dict:
    return _run_once(RunConfig.from_dict(cfg_dict))[2]


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    if args.repeats < 1:
        raise UsageError("--repeats must be at least 1")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    model, history, first = _run_once(cfg)
    save_checkpoint(model, out / "model.json")
    history.to_csv(out / "history.csv")
    rest = [cfg.with_seed(cfg.seed + r).to_dict() for r in range(1, args.repeats)]
    if args.jobs > 1 and rest:
        with ProcessPoolExecutor(args.jobs) as pool:
            runs = [first, *pool.map(_metrics_only, rest)]
    else:
        runs = [first, *map(_metrics_only, rest)]
    doc = {"config": cfg.to_dict(), "repeats": args.repeats, "runs": runs, "summary": _summary(runs)}
    _write_json(out / "metrics.json", doc)
    s = doc["summary"]["target_acc"]
    if s["mean"] is not None:
        print(f"target accuracy {s['mean']:.4f} +/- {s['std']:.4f} over {args.repeats} run(s)")
    print(f"wrote {out}")
    return EXIT_OK


def cmd_eval(args) -> int:
    model = load_checkpoint(_existing(args.model))
    parts = load_domains_csv(_existing(args.data), model.n_classes)
    doc = {"model": str(args.model), "data": str(args.data), "domains": {}}
    for dom, ds in parts.items():
        if ds.has_truth:
            doc["domains"][dom] = evaluate(model, ds)
    if not doc["domains"]:
        raise UsageError(f"{args.data}: no fully labeled domain to evaluate")
    text = json.dumps(_jsonable(doc), indent=2, sort_keys=True)
    print(text)
    if args.out:
        _write_json(Path(args.out), doc)
    return EXIT_OK


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    reports = run_theory_suite(args.seed, args.trials)
    doc = reports_to_json(reports)
    text = json.dumps(doc, indent=2, sort_keys=True)
    if args.out:
        _write_json(Path(args.out), doc)
    print(text)
    bad = [r.name for r in reports if not r.passed]
    if bad:
        print(f"violated: {', '.join(bad)}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK


def cmd_diag(args) -> int:
    model = load_checkpoint(_existing(args.model))
    parts = load_domains_csv(_existing(args.data), model.n_classes)
    blocks, labels, is_t, rows = [], [], [], []
    for dom, ds in parts.items():
        Z, P = predict(model, ds.X)
        pred = np.argmax(P, axis=0)
        # unlabeled columns fall back to confident predictions
        lab = ds.labels if ds.has_truth else np.where(P.max(axis=0) > args.tau, pred, -1)
        blocks.append(Z)
        labels.append(lab)
        is_t.append(np.full(ds.n, dom == "target"))
        rows += [[dom, int(ds.labels[j]), int(pred[j]), *map(repr, map(float, Z[:, j]))] for j in range(ds.n)]
    diag = geometry_diagnostics(np.hstack(blocks), np.concatenate(labels), np.concatenate(is_t),
                                k=model.n_classes)
    out = Path(args.out_dir)
    _write_json(out / "diag.json", diag.to_dict())
    d = blocks[0].shape[0]
    with open(out / "coords.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["domain", "label", "pred", *[f"z{j}" for j in range(d)]])
        w.writerows(rows)
    print(json.dumps(diag.summary(), indent=2))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="geotransfer", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-data", help="write source.csv and target.csv from the synthetic generator")
    _add_common(g)
    g.set_defaults(func=cmd_gen_data)

    t = sub.add_parser("train", help="train and write model.json, history.csv, metrics.json")
    _add_common(t, training=True)
    t.add_argument("--source", default=None, help="source CSV (default: generate)")
    t.add_argument("--target", default=None, help="target CSV (default: generate)")
    t.add_argument("--repeats", type=int, default=1, help="runs with seeds seed..seed+R-1 (default: 1)")
    t.add_argument("--jobs", type=int, default=1, help="worker processes for repeats (default: 1)")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="accuracy of a checkpoint on a labeled CSV")
    e.add_argument("--model", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--out", default=None, help="also write the JSON here")
    e.set_defaults(func=cmd_eval)

    v = sub.add_parser("verify", help="Monte-Carlo check of every bound; exit 1 on a violation")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--trials", type=int, default=1000)
    v.add_argument("--out", default=None, help="also write the JSON here")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("diag", help="geometry diagnostics plus per-sample feature coordinates")
    d.add_argument("--model", required=True)
    d.add_argument("--data", required=True)
    d.add_argument("--out-dir", dest="out_dir", default="diag")
    d.add_argument("--tau", type=float, default=TrainingConfig.tau,
                   help="confidence cut for unlabeled rows (default: %(default)s)")
    d.set_defaults(func=cmd_diag)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (UsageError, ConfigError, DataFormatError, ContractError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
