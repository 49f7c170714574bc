"""Command-line entry point: ``sparsevb run`` and ``sparsevb selftest``."""
from __future__ import annotations

import json
import sys
import time
from pathlib import Path

import click
import numpy as np

from . import __version__
from .config import ConfigError, bundled_configs, load_config
from .harness import ExperimentResult, SweepResult, run_experiment, run_sweep

EXIT_CONFIG = 2
EXIT_IO = 3


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _write_csv(path: Path, header, columns) -> None:
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(str(v) if isinstance(v, (int, np.integer)) else _fmt(v)
                              for v in row))
    path.write_text("\n".join(lines) + "\n", encoding="ascii")


def _safe(label: str) -> str:
    return "".join(ch if ch.isalnum() or ch in "-_" else "_" for ch in label)


def write_experiment(result: ExperimentResult, out: Path) -> dict:
    """Write per-estimator CSVs and ``summary.json``; returns label -> path."""
    paths = {}
    n = np.arange(1, result.config.packet_len + 1)
    for c in result.curves:
        p = out / f"nmse_{_safe(c.label)}.csv"
        if c.noise_var is None:
            _write_csv(p, ["n", "nmse_db"], [n, c.nmse_db])
        else:
            _write_csv(p, ["n", "nmse_db", "noise_var_est"], [n, c.nmse_db, c.noise_var])
        paths[c.label] = str(p)
    for tr in result.tap_traces:
        p = out / f"tap_{_safe(tr.label)}.csv"
        _write_csv(p, ["n", "tap_mse", "true_tap", "est_tap"],
                   [n, tr.tap_mse, tr.true_tap, tr.est_tap])
        paths[f"tap:{tr.label}"] = str(p)
    p = out / "summary.json"
    p.write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    paths["summary"] = str(p)
    return paths


def write_sweep(result: SweepResult, out: Path) -> dict:
    paths = {}
    for label, vals in result.steady_db.items():
        p = out / f"sweep_{_safe(label)}.csv"
        col = [float("nan") if v is None else v for v in vals]
        _write_csv(p, [result.key, "nmse_db"], [result.values, col])
        paths[label] = str(p)
    p = out / "summary.json"
    p.write_text(json.dumps(result.summary, indent=2, sort_keys=True) + "\n")
    paths["summary"] = str(p)
    return paths


@click.group()
@click.version_option(__version__, prog_name="sparsevb")
def main():
    """Sparse variational Bayes adaptive estimation benchmarks."""


@main.command()
@click.option("--config", "config_path", required=True, envvar="SPARSEVB_CONFIG",
              help="TOML recipe, or a bundled name: " + ", ".join(bundled_configs()))
@click.option("--out", "out_dir", required=True, envvar="SPARSEVB_OUT",
              type=click.Path(file_okay=False), help="Output directory.")
@click.option("--seed", type=click.IntRange(0, 2**64 - 1), envvar="SPARSEVB_SEED",
              help="Override the recipe's seed.")
@click.option("--set", "overrides", multiple=True, envvar="SPARSEVB_SET", metavar="KEY=VALUE",
              help="Override a recipe key (repeatable).")
@click.option("--threads", type=click.IntRange(1), default=1, envvar="SPARSEVB_THREADS",
              show_default=True, help="Worker threads over realizations.")
def run(config_path, out_dir, seed, overrides, threads):
    """Run one experiment recipe and write curves, summary and manifest."""
    overrides = list(overrides)
    if seed is not None:
        overrides.append(f"seed={seed}")
    try:
        cfg = load_config(config_path, overrides)
    except ConfigError as exc:
        click.echo(f"config error: {exc}", err=True)
        sys.exit(EXIT_CONFIG)
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        sys.exit(EXIT_IO)

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        sys.exit(EXIT_IO)

    t0 = time.perf_counter()
    if cfg.sweep_key:
        result = run_sweep(cfg, threads)
        writer = write_sweep
    else:
        result = run_experiment(cfg, threads)
        writer = write_experiment
    try:
        paths = writer(result, out)
        manifest = {
            "config_digest": cfg.digest(),
            "code_version": __version__,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "outputs": paths,
            "wall_seconds": time.perf_counter() - t0,
        }
        mpath = out / "manifest.json"
        mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        click.echo(f"io error: {exc}", err=True)
        sys.exit(EXIT_IO)

    if not cfg.sweep_key:
        for label, info in result.summary["estimators"].items():
            ss = info["steady_state_nmse_db"]
            shown = "diverged" if ss is None else f"{ss:8.2f} dB"
            click.echo(f"{label:12s} steady-state NMSE {shown}")
    click.echo(f"wrote {len(paths) + 1} files to {out}")


@main.command()
def selftest():
    """Run the fast oracle suite; exit status 1 if any oracle fails."""
    from .selftest import run_all

    results = run_all()
    width = max(len(r.name) for r in results)
    for r in results:
        mark = "PASS" if r.passed else "FAIL"
        click.echo(f"{mark}  {r.name:{width}s}  err={r.error:.3e}  tol={r.tol:.0e}")
    sys.exit(0 if all(r.passed for r in results) else 1)


if __name__ == "__main__":
    main()
