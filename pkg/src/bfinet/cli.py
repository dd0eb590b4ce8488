"""Command line: ``bfinet {train,sweep,cost,gradcheck}``.

Experiments are described by an INI file with sections ``[data]``,
``[model]``, ``[train]`` and ``[output]``::

    [data]
    path = covtype.data
    delimiter = ,
    label_column = last        ; first, last, or a column index
    label_base = 1
    train_fraction = 0.5
    split_seed = 0
    train_rows = 0             ; cap on each side after the split, 0 = all
    test_rows = 0

    [model]
    D = 54                     ; optional for train/sweep, inferred from data
    M = 7                      ; likewise
    C = 3
    K = 3
    L = 2
    hidden = 256
    variant = P                ; Baseline, P, Q, T or S
    seed = 0

    [train]
    optimizer = adam           ; adam or sgd
    lr = 0.001
    momentum = 0.0
    beta1 = 0.9
    beta2 = 0.999
    eps = 1e-8
    batch = 256
    epochs = 30
    seed = 0

    [output]
    dir = runs/example
    timing = true              ; false writes 0.000 wall_seconds

Any key can be overridden with ``--set section.key=value``. Failures print
one line ``bfinet: error=<kind> <message>`` to stderr and exit with
1 (config), 2 (data), 3 (divergence) or 4 (gradient check).
"""

from __future__ import annotations

import argparse
import configparser
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from pathlib import Path

from .data import DataError
from .gradcheck import TINY, check_variants
from .linalg import ContractError
from .model import VARIANTS, ModelConfig, param_count, variant
from .train import DataConfig, DivergenceError, TrainConfig, metrics_filename, prepare_data, run_experiment

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_DIVERGED, EXIT_GRADCHECK = 0, 1, 2, 3, 4

SCHEMA = {
    "data": {"path": str, "delimiter": str, "label_column": str, "label_base": int,
             "train_fraction": float, "split_seed": int, "train_rows": int, "test_rows": int},
    "model": {"D": int, "C": int, "K": int, "L": int, "hidden": int, "M": int,
              "variant": str, "seed": int},
    "train": {"optimizer": str, "lr": float, "momentum": float, "beta1": float, "beta2": float,
              "eps": float, "batch": int, "epochs": int, "seed": int},
    "output": {"dir": str, "timing": bool},
}


class ConfigError(ValueError):
    pass


def _convert(section: str, key: str, raw: str):
    typ = SCHEMA[section][key]
    raw = raw.strip()
    try:
        if typ is bool:
            if raw.lower() in ("1", "true", "yes", "on"):
                return True
            if raw.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if typ is str:
            return {r"\t": "\t", "tab": "\t"}.get(raw, raw) if key == "delimiter" else raw
        return typ(raw)
    except ValueError:
        raise ConfigError(f"{section}.{key}: cannot read {raw!r} as {typ.__name__}") from None


def read_config(path, overrides=()) -> dict:
    """Parse and type-check an experiment file; unknown sections or keys are errors."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    parser = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path, encoding="utf-8")
    except configparser.Error as exc:
        raise ConfigError(f"{path}: {exc}".replace("\n", " ")) from None
    cfg: dict = {s: {} for s in SCHEMA}
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
            cfg[section][key] = _convert(section, key, raw)
    for item in overrides:
        name, sep, raw = item.partition("=")
        section, dot, key = name.strip().partition(".")
        if not sep or not dot or section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(f"bad override {item!r}; expected section.key=value")
        cfg[section][key] = _convert(section, key, raw)
    return cfg


def _model_config(m: dict, D=None, M=None) -> ModelConfig:
    D = m.get("D", D)
    M = m.get("M", M)
    if D is None:
        raise ConfigError("model.D is required")
    try:
        return ModelConfig(D=D, M=M if M is not None else 2, C=m.get("C", 1), K=m.get("K", 1),
                           L=m.get("L", 2), hidden=m.get("hidden", 256),
                           variant=m.get("variant", "Baseline"), seed=m.get("seed", 0))
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def _train_config(t: dict) -> TrainConfig:
    kw = dict(t)
    if "batch" in kw:
        kw["batch_size"] = kw.pop("batch")
    try:
        return TrainConfig(**kw)
    except ContractError as exc:
        raise ConfigError(str(exc)) from None


def _data_config(d: dict) -> DataConfig:
    if "path" not in d:
        raise ConfigError("data.path is required")
    dc = DataConfig(**d)
    if not 0 < dc.train_fraction < 1:
        raise ConfigError(f"data.train_fraction must be in (0, 1), got {dc.train_fraction}")
    if dc.label_column not in ("first", "last"):
        try:
            int(dc.label_column)
        except ValueError:
            raise ConfigError(f"data.label_column must be first, last or an index") from None
    return dc


def _output(cfg: dict) -> tuple[Path, bool]:
    if "dir" not in cfg["output"]:
        raise ConfigError("output.dir is required")
    return Path(cfg["output"]["dir"]), cfg["output"].get("timing", True)


def _fail(kind: str, msg) -> None:
    print(f"bfinet: error={kind} {msg}".replace("\n", " "), file=sys.stderr)


def _run(fn):
    try:
        return fn()
    except ConfigError as exc:
        _fail("config", exc)
        return EXIT_CONFIG
    except (DataError, OSError) as exc:
        _fail("data", exc)
        return EXIT_DATA
    except DivergenceError as exc:
        _fail("divergence", exc)
        return EXIT_DIVERGED


def cmd_train(config, overrides=()) -> int:
    def go():
        cfg = read_config(config, overrides)
        dc, tc = _data_config(cfg["data"]), _train_config(cfg["train"])
        out, timing = _output(cfg)
        _model_config(cfg["model"], D=cfg["model"].get("K", 1), M=2)  # validate before loading data
        train, test = prepare_data(dc)
        mc = _model_config(cfg["model"], train.n_features,
                           max(train.n_classes, test.n_classes))
        log, _, ckpt = run_experiment(mc, tc, (train, test), out, timing)
        print(f"{metrics_filename(mc)} test_acc={log.final_test_accuracy:.4f} checkpoint={ckpt}")
        return EXIT_OK
    return _run(go)


def _parse_list(text: str, conv=int) -> list:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part and conv is int:
            lo, hi = part.split("-")
            out += list(range(int(lo), int(hi) + 1))
        elif part:
            out.append(conv(part))
    return out


def sweep_grid(base: ModelConfig, variants, Ks, Cs, Ls) -> list[ModelConfig]:
    """All grid points in a fixed order; Baseline ignores K and appears once per (C, L)."""
    points, seen = [], set()
    for v in variants:
        for K in Ks:
            for C in Cs:
                for L in Ls:
                    kind = variant(v).kind
                    key = (kind, 1 if kind == "Baseline" else K, C, L)
                    if key in seen:
                        continue
                    seen.add(key)
                    try:
                        points.append(replace(base, variant=kind, K=key[1], C=C, L=L))
                    except ContractError as exc:
                        raise ConfigError(f"grid point {key}: {exc}") from None
    return points


def _sweep_point(args):
    mc, tc, data, out, timing = args
    try:
        log, _, _ = run_experiment(mc, tc, data, out, timing)
        r = log.rows[-1]
        return "ok", r["test_acc"], r["train_acc"], r["train_loss"]
    except DivergenceError as exc:
        return f"diverged: {exc}", None, None, None


def cmd_sweep(config, variants=None, Ks=None, Cs=None, Ls=None, jobs=1, overrides=()) -> int:
    def go():
        cfg = read_config(config, overrides)
        m = cfg["model"]
        dc, tc = _data_config(cfg["data"]), _train_config(cfg["train"])
        out, timing = _output(cfg)
        try:
            grid_args = (variants or [m.get("variant", "Baseline")], Ks or [m.get("K", 1)],
                         Cs or [m.get("C", 1)], Ls or [m.get("L", 2)])
            sweep_grid(_model_config(m, D=max([*grid_args[1], 1]), M=2), *grid_args)
        except ContractError as exc:
            raise ConfigError(str(exc)) from None
        train, test = prepare_data(dc)
        base = _model_config(m, train.n_features, max(train.n_classes, test.n_classes))
        points = sweep_grid(base, *grid_args)
        work = [(p, tc, (train, test), out, timing) for p in points]
        if jobs > 1:
            with ProcessPoolExecutor(max_workers=jobs) as pool:
                results = list(pool.map(_sweep_point, work))
        else:
            results = [_sweep_point(w) for w in work]
        out.mkdir(parents=True, exist_ok=True)
        lines = ["variant,K,C,L,final_test_acc,final_train_acc,final_train_loss,status"]
        failed = 0
        for p, (status, te, tr, loss) in zip(points, results):
            K = p.K if p.spec.blockwise else 1
            if status != "ok":
                failed += 1
                _fail("divergence", f"{metrics_filename(p)} {status}")
                lines.append(f"{p.variant},{K},{p.C},{p.L},,,,diverged")
            else:
                lines.append(f"{p.variant},{K},{p.C},{p.L},{te!r},{tr!r},{loss!r},ok")
        (out / "summary.csv").write_text("\n".join(lines) + "\n")
        print(f"{len(points)} points, {failed} failed, summary at {out / 'summary.csv'}")
        return EXIT_DIVERGED if failed else EXIT_OK
    return _run(go)


COST_COLUMNS = ["variant", "D", "K", "C", "cross_weight_params_per_layer", "cross_params_per_layer",
                "cross_params", "cross_flops_per_layer", "cross_flops_per_instance",
                "dense_params", "total_params", "memory_bytes"]


def cost_rows(mc: ModelConfig, all_variants: bool = False) -> list:
    kinds = list(VARIANTS) if all_variants else [mc.variant]
    return [param_count(replace(mc, variant=k)) for k in kinds]


def format_cost_table(reports) -> str:
    rows = [COST_COLUMNS] + [[str(getattr(r, c)) for c in COST_COLUMNS] for r in reports]
    widths = [max(len(r[i]) for r in rows) for i in range(len(COST_COLUMNS))]
    return "\n".join("  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows)


def cmd_cost(config, all_variants=False, overrides=()) -> int:
    def go():
        cfg = read_config(config, overrides)
        mc = _model_config(cfg["model"])
        print(format_cost_table(cost_rows(mc, all_variants)))
        return EXIT_OK
    return _run(go)


def cmd_gradcheck(seed=0, variants=None, n_seeds=1, csv_path=None) -> int:
    variants = variants or list(VARIANTS)
    try:
        variants = [variant(v).kind for v in variants]
    except ContractError as exc:
        _fail("config", exc)
        return EXIT_CONFIG
    reports = check_variants(variants, range(seed, seed + n_seeds), TINY)
    for r in reports:
        print(r.table())
    if csv_path:
        rows = ["model,buffer,max_relative_error,max_absolute_error,pass"]
        rows += [line for r in reports for line in r.csv_rows()]
        Path(csv_path).write_text("\n".join(rows) + "\n")
    bad = [r for r in reports if not r.passed]
    if bad:
        worst = ", ".join(f"{r.label}:{b.name}" for r in bad for b in r.failing())
        _fail("gradcheck", f"failing buffers {worst}")
        return EXIT_GRADCHECK
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="bfinet", description="Cross-network and blockwise "
                                 "feature-interaction experiments.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def with_config(p):
        p.add_argument("config")
        p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
        return p

    with_config(sub.add_parser("train", help="train one configuration"))
    sw = with_config(sub.add_parser("sweep", help="train a variant x K x C x L grid"))
    sw.add_argument("--variants", help="comma list, e.g. Baseline,P,T")
    sw.add_argument("--K", help="comma list or range, e.g. 3,6,9")
    sw.add_argument("--C", help="e.g. 1-3")
    sw.add_argument("--L", help="e.g. 1,2")
    sw.add_argument("--jobs", type=int, default=1)
    co = with_config(sub.add_parser("cost", help="closed-form parameter and multiply counts"))
    co.add_argument("--all-variants", action="store_true")
    gc = sub.add_parser("gradcheck", help="finite-difference check of the backward passes")
    gc.add_argument("--seed", type=int, default=0)
    gc.add_argument("--seeds", type=int, default=1, help="number of consecutive seeds")
    gc.add_argument("--variant", action="append", help="repeatable; default all five")
    gc.add_argument("--csv", help="also write the report as CSV")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(message)s")
    if args.command == "train":
        return cmd_train(args.config, args.set)
    if args.command == "sweep":
        try:
            grid = [_parse_list(args.variants, str) if args.variants else None,
                    _parse_list(args.K) if args.K else None,
                    _parse_list(args.C) if args.C else None,
                    _parse_list(args.L) if args.L else None]
        except ValueError as exc:
            _fail("config", f"bad grid: {exc}")
            return EXIT_CONFIG
        return cmd_sweep(args.config, *grid, jobs=args.jobs, overrides=args.set)
    if args.command == "cost":
        return cmd_cost(args.config, args.all_variants, args.set)
    return cmd_gradcheck(args.seed, args.variant, args.seeds, args.csv)


if __name__ == "__main__":
    sys.exit(main())
