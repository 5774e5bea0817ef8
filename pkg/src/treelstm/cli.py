"""Command-line front end: ``treelstm {synth,mask,train,eval,cv,profile}``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import checkpoint
from .baselines import BaselineModel, baseline_forward, impute
from .checkpoint import CheckpointError
from .complexity import (PROFILE_COLUMNS, MultCounter, contiguous_block_layout,
                         crossover_scan, profile_row)
from .data import (CsvSchema, DataError, MaskedSequence, apply_scaler, fit_scaler,
                   inject_missingness, load_csv, make_next_value_targets, save_csv,
                   split_60_40, synth_sine)
from .model import TreeLstmConfig, TreeLstmModel, sequence_forward
from .trainer import (NumericError, TrainConfig, cross_validate, predict, sequence_mse,
                      train, write_epoch_csv)

log = logging.getLogger("treelstm")

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4


class UsageError(Exception):
    pass


@dataclass
class RunConfig:
    data: str | None = None
    arch: str = "tree"
    L: int = 2
    q: int = 8
    lr: float = 1e-3
    epochs: int = 10
    ratio: float = 0.0
    seed: int = 0
    out: str | None = None
    bptt: int = 64
    leaf_set: list | None = None
    shared_wtilde: bool = False
    leaf_init: str = "after"
    init_variance: float = 1e-2
    update_every: int | None = None
    clip: float | None = 5.0
    features: list = field(default_factory=lambda: [0])
    target: str | int | None = None
    scale: bool = True
    record_time: bool = False
    folds: int = 5
    q_grid: list = field(default_factory=lambda: [3, 10])
    lr_grid: list = field(default_factory=lambda: [1e-1, 1e-2, 1e-3, 1e-4, 1e-5])

    def validate(self):
        if self.arch not in ("tree", "zi", "fi"):
            raise UsageError(f"--arch must be tree, zi or fi, not {self.arch!r}")
        if not 0.0 <= self.ratio <= 1.0:
            raise UsageError(f"--ratio must be in [0, 1], got {self.ratio}")
        if self.lr <= 0:
            raise UsageError(f"--lr must be positive, got {self.lr}")
        try:
            self.tree_config()
            self.train_config()
        except ValueError as exc:
            raise UsageError(str(exc)) from None

    def tree_config(self) -> TreeLstmConfig:
        return TreeLstmConfig(L=self.L, q=self.q, m=len(self.features),
                              leaf_selection=self.leaf_set,
                              shared_combination=self.shared_wtilde,
                              bptt_horizon=self.bptt, leaf_init=self.leaf_init,
                              init_variance=self.init_variance, seed=self.seed)

    def train_config(self) -> TrainConfig:
        return TrainConfig(learning_rate=self.lr, epochs=self.epochs, seed=self.seed,
                           q_grid=list(self.q_grid), lr_grid=list(self.lr_grid),
                           folds=self.folds, bptt_horizon=self.bptt,
                           update_every=self.update_every, clip_norm=self.clip)

    def schema(self) -> CsvSchema:
        return CsvSchema(features=list(self.features), target=self.target)


def merge_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the ``--config`` JSON file, then explicit flags."""
    values = asdict(RunConfig())
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise UsageError(f"cannot read config {args.config}: {exc}") from None
        unknown = set(loaded) - set(values)
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for f in fields(RunConfig):
        v = getattr(args, f.name, None)
        if v is not None:
            values[f.name] = v
    if getattr(args, "clip_disabled", False):
        values["clip"] = None
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def build_model(cfg: RunConfig, q: int | None = None):
    if cfg.arch == "tree":
        tc = cfg.tree_config()
        if q is not None:
            tc.q = q
        return TreeLstmModel.init(tc)
    return BaselineModel.init(cfg.arch, cfg.q if q is None else q, len(cfg.features),
                              cfg.seed, cfg.init_variance, cfg.bptt, score_from=cfg.L)


def load_sequence(cfg: RunConfig) -> MaskedSequence:
    if not cfg.data:
        raise UsageError("--data is required")
    seq = load_csv(cfg.data, cfg.schema())
    if len(seq) == 0:
        raise DataError(f"{cfg.data} holds no rows")
    if cfg.ratio > 0:
        seq = inject_missingness(seq, cfg.ratio, cfg.seed)
    if cfg.target is None:
        seq = make_next_value_targets(seq)
    return seq


def prepare(cfg: RunConfig, scaler=None):
    """Load, mask, split 60/40 and scale; returns ``(train, test, scaler)``."""
    seq = load_sequence(cfg)
    try:
        tr, te = split_60_40(seq)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if cfg.scale:
        if scaler is None:
            try:
                scaler = fit_scaler(tr)
            except ValueError as exc:
                raise DataError(str(exc)) from None
        tr, te = apply_scaler(tr, scaler), apply_scaler(te, scaler)
    return tr, te, scaler


def _out_dir(cfg: RunConfig) -> Path:
    if not cfg.out:
        raise UsageError("--out is required")
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_config(cfg: RunConfig, out: Path):
    (out / "config.json").write_text(json.dumps(asdict(cfg), indent=2, sort_keys=True) + "\n",
                                     encoding="utf-8")


def cmd_synth(args) -> int:
    if args.n < 1:
        raise UsageError(f"--n must be >= 1, got {args.n}")
    if args.noise < 0:
        raise UsageError(f"--noise must be >= 0, got {args.noise}")
    if not args.out:
        raise UsageError("--out is required")
    save_csv(synth_sine(args.n, args.noise, args.seed), args.out)
    return EXIT_OK


def cmd_mask(args) -> int:
    if args.ratio is None or not 0.0 <= args.ratio <= 1.0:
        raise UsageError(f"--ratio must be in [0, 1], got {args.ratio}")
    if not args.data or not args.out:
        raise UsageError("--data and --out are required")
    seq = load_csv(args.data, CsvSchema(features=args.features or [0]))
    save_csv(inject_missingness(seq, args.ratio, args.seed or 0), args.out)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = merge_config(args)
    out = _out_dir(cfg)
    tr, te, scaler = prepare(cfg)
    model = build_model(cfg)
    reports = train(model, tr, te, cfg.train_config(), record_time=cfg.record_time,
                    on_epoch=lambda r: log.info("epoch %d train %.6g test %.6g",
                                                r.epoch, r.train_mse, r.test_mse))
    checkpoint.save(model, out / "model.ckpt", scaler)
    write_epoch_csv(reports, out / "epochs.csv")
    _write_config(cfg, out)
    last = reports[-1]
    print(f"final train_mse={last.train_mse!r} test_mse={last.test_mse!r}")
    return EXIT_OK


def _load_run(args):
    """Run config of a training directory (``--run``), overridden by flags."""
    if args.run:
        args.config = args.config or str(Path(args.run) / "config.json")
        args.ckpt = args.ckpt or str(Path(args.run) / "model.ckpt")
    if not args.ckpt:
        raise UsageError("--ckpt or --run is required")
    cfg = merge_config(args)
    model, scaler = checkpoint.load(args.ckpt)
    return cfg, model, scaler


def cmd_eval(args) -> int:
    cfg, model, scaler = _load_run(args)
    tr, te, _ = prepare(cfg, scaler)
    seq = {"test": te, "train": tr}[args.split]
    want_m = model.config.m if isinstance(model, TreeLstmModel) else model.m
    if seq.m != want_m:
        raise DataError(f"data has {seq.m} feature(s), checkpoint expects {want_m}")
    cache = predict(model, seq)
    mse = sequence_mse(cache.d_hat, cache.targets, cache.has_target)
    metrics = {"split": args.split, "mse": mse, "steps": int(len(cache.steps)),
               "scored_steps": int(cache.has_target.sum())}
    # files land in --out, or next to the checkpoint when scoring a run directory
    out = Path(args.out) if args.out else (Path(args.run) if args.run else None)
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2) + "\n", encoding="utf-8")
        if args.dump_predictions:
            with open(out / "predictions.csv", "w", newline="", encoding="utf-8") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["step", "prediction", "target"])
                for t, p, d, h in zip(cache.steps, cache.d_hat, cache.targets, cache.has_target):
                    w.writerow([int(t), repr(float(p)), repr(float(d)) if h else ""])
    print(json.dumps(metrics))
    return EXIT_OK


def cmd_cv(args) -> int:
    cfg = merge_config(args)
    tr, _, _ = prepare(cfg)
    tcfg = cfg.train_config()

    def family(q, lr, blocks, val, seed):
        model = build_model(cfg, q)
        run = TrainConfig(**{**asdict(tcfg), "learning_rate": lr})
        train(model, blocks, None, run)
        cache = predict(model, val)
        if not cache.has_target.any():
            raise DataError("validation fold has no scored steps")
        return sequence_mse(cache.d_hat, cache.targets, cache.has_target)

    try:
        res = cross_validate(tr, family, cfg.q_grid, cfg.lr_grid, cfg.folds, cfg.seed,
                             min_fold=cfg.L + 2)
    except ValueError as exc:
        raise DataError(str(exc)) from None
    if cfg.out:
        out = _out_dir(cfg)
        with open(out / "cv.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["q", "lr", "fold", "val_mse"])
            for q, lr, k, s in res.table:
                w.writerow([q, repr(lr), k, repr(s)])
        _write_config(cfg, out)
    print(json.dumps({"best_q": res.best_q, "best_lr": res.best_lr}))
    return EXIT_OK


def cmd_profile(args) -> int:
    L = args.L or 2
    q = args.q or 8
    m = args.m
    out = Path(args.out) if args.out else None
    rows = []
    if args.measure:
        arch = args.arch or "tree"
        if args.data:
            seq = load_csv(args.data, CsvSchema(features=args.features or [0]))
            if args.ratio:
                seq = inject_missingness(seq, args.ratio, args.seed or 0)
        else:
            ratio = args.ratio or 0.0
            seq = synth_sine(args.n, 0.0, args.seed or 0)
            if args.layout == "block":
                M = int(np.floor(ratio * args.n + 0.5))
                seq.present = contiguous_block_layout(args.n, M)
            else:
                seq = inject_missingness(seq, ratio, args.seed or 0)
        m = seq.m
        if arch == "tree":
            model = TreeLstmModel.init(TreeLstmConfig(L=L, q=q, m=m, seed=args.seed or 0))
        else:
            model = BaselineModel.init(arch, q, m, args.seed or 0)
        counter = MultCounter()
        if arch == "tree":
            sequence_forward(model, seq, counter)
        else:
            baseline_forward(model, impute(arch, seq), counter)
        rows.append(profile_row(arch, len(seq), seq.n_missing, L, q, m, counter))
    else:
        scan = crossover_scan(q, m, L, args.n)
        for r, tmin, tmax, zi, fi in scan.rows:
            rows.append({"arch": "scan", "N": args.n, "M": int(round(r * args.n)), "r": r,
                         "L": L, "q": q, "m": m, "measured_cells": "",
                         "measured_combination": "", "formula_min": tmin,
                         "formula_max": tmax, "zi": zi, "fi": fi})
        print(json.dumps({"L": L, "first_grid_r": scan.first_grid_r,
                          "crossover_r": scan.crossover_r}))
    columns = list(PROFILE_COLUMNS) + ([] if args.measure else ["zi", "fi"])
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "profile.csv", "w", newline="", encoding="utf-8") as fh:
            w = csv.DictWriter(fh, columns, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    if args.measure:
        print(json.dumps(rows[0]))
    return EXIT_OK


def _int_list(text: str) -> list:
    try:
        return [int(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _float_list(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _clip(text: str):
    if text.lower() in ("none", "off"):
        return float("inf")
    return float(text)


def _add_model_flags(p):
    p.add_argument("--data")
    p.add_argument("--config", help="JSON file of run settings; flags take precedence")
    p.add_argument("--arch", choices=["tree", "zi", "fi"])
    p.add_argument("--L", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--epochs", type=int)
    p.add_argument("--ratio", type=float, help="extra missingness injected after loading")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--bptt", type=int, help="main-network truncation horizon")
    p.add_argument("--leaf-set", dest="leaf_set", type=_int_list,
                   help="comma-separated leaf indices; empty string for none")
    p.add_argument("--shared-wtilde", dest="shared_wtilde", action="store_const", const=True)
    p.add_argument("--leaf-init", dest="leaf_init", choices=["after", "before"])
    p.add_argument("--init-variance", dest="init_variance", type=float)
    p.add_argument("--update-every", dest="update_every", type=int)
    p.add_argument("--clip", type=_clip, help="global gradient-norm clip; 'none' disables")
    p.add_argument("--features", type=_feature_list)
    p.add_argument("--target")
    p.add_argument("--no-scale", dest="scale", action="store_const", const=False)
    p.add_argument("--record-time", dest="record_time", action="store_const", const=True)


def _feature_list(text: str) -> list:
    return [int(v) if v.strip().lstrip("-").isdigit() else v.strip() for v in text.split(",")]


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="treelstm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a noisy sine CSV")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("mask", help="blank a fraction of rows uniformly at random")
    p.add_argument("--data", required=True)
    p.add_argument("--ratio", type=float, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--features", type=_feature_list)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mask)

    p = sub.add_parser("train", help="split 60/40, train, write run artifacts")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="score a checkpoint")
    _add_model_flags(p)
    p.add_argument("--run", help="training output directory")
    p.add_argument("--ckpt")
    p.add_argument("--split", choices=["test", "train"], default="test")
    p.add_argument("--dump-predictions", dest="dump_predictions", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("cv", help="contiguous-fold grid search over q and learning rate")
    _add_model_flags(p)
    p.add_argument("--q-grid", dest="q_grid", type=_int_list)
    p.add_argument("--lr-grid", dest="lr_grid", type=_float_list)
    p.add_argument("--folds", type=int)
    p.set_defaults(func=cmd_cv)

    p = sub.add_parser("profile", help="cost-model scan or measured multiplication count")
    p.add_argument("--L", type=int)
    p.add_argument("--q", type=int)
    p.add_argument("--m", type=int, default=1)
    p.add_argument("--n", type=int, default=1000)
    p.add_argument("--measure", action="store_true")
    p.add_argument("--arch", choices=["tree", "zi", "fi"])
    p.add_argument("--data")
    p.add_argument("--features", type=_feature_list)
    p.add_argument("--ratio", type=float)
    p.add_argument("--layout", choices=["uniform", "block"], default="uniform")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.set_defaults(func=cmd_profile)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "clip", None) == float("inf"):
        args.clip = None
        args.clip_disabled = True
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, CheckpointError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
