"""Command line entry point: ``run``, ``compare`` and ``export-data``.

Output directory precedence: ``--output-dir``, then the ``output_dir`` config
key, then ``$STRUCTFL_OUTPUT_DIR/<name>``, then ``./runs/<name>``.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import datagen
from .config import ExperimentConfig, format_config, parse_config, parse_override, parse_pairs
from .errors import StructFLError
from .flcore import ExperimentResult, build_data, run_experiment
from .graph import dump_adjacency
from .numerics import RngStream

log = logging.getLogger("structfl")

ENV_OUTPUT_DIR = "STRUCTFL_OUTPUT_DIR"
ROUNDS_HEADER = "round,client_id,split,metric,value"


def fmt(x) -> str:
    """9 significant digits; ``nan`` for missing values."""
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{float(x):.9g}"


def rounds_csv(result: ExperimentResult) -> str:
    lines = [ROUNDS_HEADER]
    for rec in result.records:
        for i in range(len(rec.train_loss)):
            lines.append(f"{rec.round},{i},train,loss,{fmt(rec.train_loss[i])}")
            for split, rows in rec.metrics.items():
                for name, value in rows[i].as_dict().items():
                    lines.append(f"{rec.round},{i},{split},{name},{fmt(value)}")
    return "\n".join(lines) + "\n"


def _json_float(x):
    return None if x is None or (isinstance(x, float) and math.isnan(x)) else x


def _summaries_json(sums) -> dict:
    return {split: {name: {k: _json_float(v) for k, v in vars(s).items()}
                    for name, s in per.items()} for split, per in sums.items()}


def summary_dict(result: ExperimentResult) -> dict:
    cfg = result.config
    return {
        "name": cfg.name,
        "strategy": cfg.strategy.kind,
        "seed": cfg.seed,
        "rounds": cfg.rounds,
        "backend": result.backend,
        "dataset_hash": result.dataset_hash,
        "primary_metric": result.primary_metric(),
        "config": {k: v for k, v in cfg.as_flat().items()},
        "initial": _summaries_json(result.summaries(result.initial)),
        "final": _summaries_json(result.summaries()),
        "lambda_per_round": [r.lam for r in result.records],
        "timing": {
            "total_seconds": result.wall_time,
            "round_seconds": [r.wall_time for r in result.records],
        },
    }


def resolve_output_dir(cfg: ExperimentConfig, flag: str | None) -> Path:
    if flag:
        return Path(flag)
    if cfg.output_dir:
        return Path(cfg.output_dir)
    base = os.environ.get(ENV_OUTPUT_DIR)
    return Path(base or "runs") / cfg.name


def write_outputs(files: dict[str, str], out_dir: Path) -> None:
    """Write every file into a scratch directory first, then move them in, so a
    failure leaves no partial outputs behind."""
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=".structfl-", dir=out_dir.parent))
    try:
        for rel, text in files.items():
            path = tmp / rel
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text(text, encoding="utf-8")
        out_dir.mkdir(parents=True, exist_ok=True)
        for rel in files:
            dest = out_dir / rel
            dest.parent.mkdir(parents=True, exist_ok=True)
            os.replace(tmp / rel, dest)
    finally:
        shutil.rmtree(tmp, ignore_errors=True)


def run_files(result: ExperimentResult, prefix: str = "") -> dict[str, str]:
    return {
        prefix + "rounds.csv": rounds_csv(result),
        prefix + "summary.json": json.dumps(summary_dict(result), indent=2) + "\n",
        prefix + "graph_initial.txt": dump_adjacency(result.graph_initial),
        prefix + "graph_learned.txt": dump_adjacency(result.graph_final),
        prefix + "config.txt": format_config(result.config),
    }


def load_config(path: str, overrides: list[str]) -> ExperimentConfig:
    cfg = parse_config(path)
    if overrides:
        cfg = parse_pairs(dict(parse_override(o) for o in overrides), cfg)
    return cfg.validate()


def cmd_run(config: str, overrides: list[str] | None = None, output_dir: str | None = None,
            workers: int | None = None) -> int:
    cfg = load_config(config, overrides or [])
    result = run_experiment(cfg, workers=workers)
    out = resolve_output_dir(cfg, output_dir)
    write_outputs(run_files(result), out)
    metric = result.primary_metric()
    s = result.summaries()["test"].get(metric)
    if s is not None:
        log.info("%s test %s: mean %.4f  best5 %.4f  worst5 %.4f", cfg.strategy.kind, metric,
                 s.mean, s.best5, s.worst5)
    log.info("wrote %s", out)
    return 0


STATS = (("mean", "Mean"), ("best5", "Best 5%"), ("worst5", "Worst 5%"))


def compare_rows(results: dict[tuple[str, int], ExperimentResult], strategies, seeds):
    """Per strategy: mean and std over seeds of each cohort statistic of the
    final test primary metric."""
    rows = []
    for s in strategies:
        row = {"strategy": s, "n_seeds": len(seeds)}
        for key, _ in STATS:
            vals = []
            for seed in seeds:
                res = results[(s, seed)]
                vals.append(getattr(res.summaries()["test"][res.primary_metric()], key))
            row[key] = (float(np.mean(vals)), float(np.std(vals)))
        rows.append(row)
    return rows


def compare_table(rows, metric: str) -> str:
    header = ["strategy"] + [label for _, label in STATS]
    body = [[r["strategy"]] + [f"{r[k][0]:.2f} ± {r[k][1]:.2f}" for k, _ in STATS] for r in rows]
    widths = [max(len(x) for x in col) for col in zip(header, *body)]
    line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()  # noqa: E731
    title = f"test {metric}, mean ± std over seeds (std over clients is in each summary.json)"
    return "\n".join([title, line(header), line(["-" * w for w in widths])] +
                     [line(b) for b in body]) + "\n"


def compare_csv(rows) -> str:
    cols = ["strategy"] + [f"{k}_{p}" for k, _ in STATS for p in ("mean", "std_over_seeds")] + ["n_seeds"]
    lines = [",".join(cols)]
    for r in rows:
        vals = [r["strategy"]] + [fmt(x) for k, _ in STATS for x in r[k]] + [str(r["n_seeds"])]
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def cmd_compare(config: str, strategies: list[str], seeds: list[int],
                overrides: list[str] | None = None, output_dir: str | None = None,
                workers: int | None = None) -> int:
    if not strategies or not seeds:
        raise StructFLError("compare needs at least one strategy and one seed")
    base = load_config(config, overrides or [])
    cells = {}
    for s in strategies:
        for seed in seeds:
            cells[(s, seed)] = base.replace(**{"strategy.kind": s, "seed": seed}).validate()
    results, files, hashes = {}, {}, []
    for (s, seed), cfg in cells.items():
        res = run_experiment(cfg, workers=workers)
        results[(s, seed)] = res
        files.update(run_files(res, prefix=f"{s}_seed{seed}/"))
        hashes.append(f"{s},{seed},{res.dataset_hash}")
        log.info("%s seed %d done (data %s)", s, seed, res.dataset_hash)
    for seed in seeds:
        if len({results[(s, seed)].dataset_hash for s in strategies}) != 1:
            raise StructFLError(f"strategies saw different data for seed {seed}")
    metric = results[(strategies[0], seeds[0])].primary_metric()
    rows = compare_rows(results, strategies, seeds)
    table = compare_table(rows, metric)
    files["compare.txt"] = table
    files["compare.csv"] = compare_csv(rows)
    files["datasets.csv"] = "strategy,seed,dataset_hash\n" + "\n".join(hashes) + "\n"
    out = resolve_output_dir(base, output_dir)
    write_outputs(files, out)
    log.info("\n%s", table)
    return 0


def cmd_export_data(config: str, path: str, overrides: list[str] | None = None) -> int:
    cfg = load_config(config, overrides or [])
    if cfg.task == "classification":
        pool = datagen.gen_classification(cfg.n_classes, cfg.dim, cfg.samples_per_class,
                                          cfg.cluster_spread, RngStream(cfg.seed, "data"))
    else:
        data = build_data(cfg)
        field = datagen.SensorField(data.field_coords)
        pool = datagen.gen_traffic_series(field, data.true_graph, cfg.t_len, cfg.noise,
                                          RngStream(cfg.seed, "series"), alpha=cfg.alpha,
                                          beta=cfg.beta, period=cfg.period)
    write_outputs({Path(path).name: datagen.export_pool(pool)}, Path(path).resolve().parent)
    return 0


def _split_list(text: str) -> list[str]:
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="structfl", description=__doc__.splitlines()[0])
    parser.add_argument("--quiet", action="store_true", help="only print errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="flat key = value configuration file")
        p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key (repeatable), e.g. strategy.kind=sfl_star")
        p.add_argument("--output-dir", default=None)
        p.add_argument("--workers", type=int, default=None,
                       help="threads for client updates (results are identical for any value)")
        p.add_argument("--quiet", action="store_true", help=argparse.SUPPRESS)

    common(sub.add_parser("run", help="run one experiment"))
    p = sub.add_parser("compare", help="strategies x seeds comparison table")
    common(p)
    p.add_argument("--strategies", required=True, type=_split_list)
    p.add_argument("--seeds", required=True, type=lambda s: [int(x) for x in _split_list(s)])
    p = sub.add_parser("export-data", help="write the generated data pool as a table")
    p.add_argument("config")
    p.add_argument("path")
    p.add_argument("--override", action="append", default=[], metavar="KEY=VALUE")
    p.add_argument("--quiet", action="store_true", help=argparse.SUPPRESS)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.ERROR if args.quiet else logging.INFO,
                        format="%(message)s", stream=sys.stderr)
    try:
        if args.command == "run":
            return cmd_run(args.config, args.override, args.output_dir, args.workers)
        if args.command == "compare":
            return cmd_compare(args.config, args.strategies, args.seeds, args.override,
                               args.output_dir, args.workers)
        return cmd_export_data(args.config, args.path, args.override)
    except (StructFLError, FloatingPointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
