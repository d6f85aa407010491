"""Batch command-line front-end.

Subcommands
-----------
simulate        run one scenario, emit iterations.csv and nodes.csv
sweep-snr       run a scenario across an SNR range, emit sweep.csv
validate-stats  Monte Carlo vs closed-form link statistics, exit 3 on breach
decode-bench    synthetic decoder benchmark, emit bench.csv

Exit codes: 0 success, 2 configuration/usage error, 3 tolerance failure.
Every flag picks up a default from an environment variable named
``RODD_<FLAG>`` (e.g. RODD_SEED, RODD_OUT_DIR); explicit flags win.  CSV
floats are printed with 6 significant digits; files are written to a
temporary name and atomically renamed, so a failed run never leaves a
partial file behind.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import tempfile
from dataclasses import replace

import jsonschema
import numpy as np
from scipy import stats as spstats

from . import __version__
from .decoder import decode_bp, synthesize_observation
from .netmodel import (
    interference_variance,
    mean_neighbor_count,
    neighbor_amplitude_cdf,
    sample_interference_power,
    sample_interior_degrees,
)
from .sim import SimConfig, run_simulation, sim_config_from_dict

__all__ = ["main", "build_parser", "SCENARIO_SCHEMA"]


SCENARIO_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "roddloc scenario",
    "type": "object",
    "additionalProperties": False,
    "required": ["network"],
    "properties": {
        "network": {
            "type": "object",
            "additionalProperties": False,
            "required": ["area_side", "node_count", "anchor_layout"],
            "properties": {
                "area_side": {"type": "number", "exclusiveMinimum": 0},
                "node_count": {"type": "integer", "minimum": 1},
                "anchor_layout": {
                    "type": "object",
                    "additionalProperties": False,
                    "required": ["kind"],
                    "properties": {
                        "kind": {"enum": ["lattice", "random"]},
                        "rows": {"type": "integer", "minimum": 1},
                        "cols": {"type": "integer", "minimum": 1},
                        "count": {"type": "integer", "minimum": 0},
                    },
                },
                "path_loss_exponent": {"type": "number", "exclusiveMinimum": 2},
                "neighbor_threshold": {"type": "number", "exclusiveMinimum": 0},
                # accepted for completeness; the runner overrides it from snr_db
                "nominal_snr": {"type": "number", "minimum": 0},
                "geometry_seed": {"type": "integer"},
            },
        },
        "bits_per_coord": {"type": "integer", "minimum": 1, "maximum": 16},
        "frame_length": {"type": "integer", "minimum": 1},
        "duty_cycle": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
        "bp_iterations": {"type": "integer", "minimum": 1},
        "stage_one_iterations": {"type": "integer", "minimum": 0},
        "total_iterations": {"type": "integer", "minimum": 1},
        "snr_db": {"type": "number"},
        "noise_mode": {"enum": ["analytic", "empirical"]},
        "heard_threshold": {"type": "number", "minimum": 0},
        "run_seed": {"type": "integer"},
        "codebook_salt": {"type": "integer"},
        "force_underdetermined_solve": {"type": "boolean"},
        "output_dir": {"type": "string"},
        "repetitions": {"type": "integer", "minimum": 1},
    },
}


class ConfigError(Exception):
    """User-facing configuration problem (exit code 2)."""


def _fmt(x: float) -> str:
    """6 significant digits, round-half-even (python's float formatting)."""
    return format(float(x), ".6g")


def _env_default(name: str, fallback=None):
    return os.environ.get(f"RODD_{name}", fallback)


def _env_int(name: str, fallback=None):
    raw = os.environ.get(f"RODD_{name}")
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"environment variable RODD_{name}={raw!r} is not an integer") from exc


def _write_csv(path: str, header: list, rows: list) -> None:
    """Write atomically: temp file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(row) + "\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_scenario(path: str) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read scenario {path!r}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"scenario {path!r} is not valid JSON: {exc}") from exc
    try:
        jsonschema.validate(doc, SCENARIO_SCHEMA)
    except jsonschema.ValidationError as exc:
        location = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"scenario {path!r} invalid at {location}: {exc.message}") from exc
    return doc


def _scenario_to_config(doc: dict) -> SimConfig:
    try:
        return sim_config_from_dict(doc)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"scenario rejected: {exc}") from exc


def _parse_range(spec: str) -> list:
    """Parse START:STOP:STEP (inclusive of STOP up to float slack)."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ConfigError(f"range {spec!r} must look like START:STOP:STEP")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"range {spec!r} has non-numeric parts") from exc
    if step <= 0:
        raise ConfigError("range step must be positive")
    if start > stop:
        raise ConfigError("range start must not exceed stop")
    values = []
    k = 0
    while True:
        v = start + k * step
        if v > stop + 1e-9:
            break
        values.append(v)
        k += 1
    return values


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    doc = load_scenario(args.config)
    config = _scenario_to_config(doc)
    if args.seed is not None:
        config = replace(config, run_seed=int(args.seed))
    out_dir = args.out_dir or doc.get("output_dir")
    if not out_dir:
        raise ConfigError("no output directory: pass --out-dir or set output_dir")
    repetitions = int(doc.get("repetitions", 1))

    for rep in range(repetitions):
        if repetitions == 1:
            rep_dir = out_dir
            cfg = config
        else:
            rep_dir = os.path.join(out_dir, f"rep{rep:03d}")
            cfg = replace(
                config,
                run_seed=config.run_seed + rep,
                network=replace(
                    config.network, geometry_seed=config.network.geometry_seed + rep
                ),
            )
        result = run_simulation(cfg, threads=args.threads)
        it_rows = [
            [
                str(rec.iteration),
                str(rec.transmitter_count),
                _fmt(rec.average_error),
                str(rec.count_within_1m),
            ]
            for rec in result.records
        ]
        _write_csv(
            os.path.join(rep_dir, "iterations.csv"),
            ["iteration", "transmitters", "avg_error_m", "count_within_1m"],
            it_rows,
        )
        final = result.records[-1]
        node_rows = []
        for idx, nid in enumerate(final.node_ids):
            true_pos = result.network.positions[nid]
            node_rows.append(
                [
                    str(int(nid)),
                    result.network.role(int(nid)),
                    _fmt(true_pos[0]),
                    _fmt(true_pos[1]),
                    _fmt(final.estimates[idx, 0]),
                    _fmt(final.estimates[idx, 1]),
                    _fmt(final.errors[idx]),
                ]
            )
        _write_csv(
            os.path.join(rep_dir, "nodes.csv"),
            ["id", "role", "true_x", "true_y", "est_x", "est_y", "error_m"],
            node_rows,
        )
    return 0


def cmd_sweep_snr(args) -> int:
    doc = load_scenario(args.config)
    config = _scenario_to_config(doc)
    if args.seed is not None:
        config = replace(config, run_seed=int(args.seed))
    out_dir = args.out_dir or doc.get("output_dir")
    if not out_dir:
        raise ConfigError("no output directory: pass --out-dir or set output_dir")
    if args.snr_db is None:
        raise ConfigError("sweep-snr requires --snr-db START:STOP:STEP")
    values = _parse_range(args.snr_db)
    seeds = int(args.seeds)
    if seeds < 1:
        raise ConfigError("--seeds must be >= 1")

    rows = []
    for v in values:
        for j in range(seeds):
            cfg = replace(
                config,
                snr_db=v,
                run_seed=config.run_seed + j,
                network=replace(
                    config.network, geometry_seed=config.network.geometry_seed + j
                ),
            )
            result = run_simulation(cfg, threads=args.threads)
            rows.append([_fmt(v), str(cfg.run_seed), _fmt(result.final_average_error)])
    _write_csv(
        os.path.join(out_dir, "sweep.csv"),
        ["snr_db", "seed", "final_avg_error_m"],
        rows,
    )
    return 0


DEGREE_TOL = 0.03
INTERFERENCE_TOL = 0.05
KS_TOL = 0.01


def cmd_validate_stats(args) -> int:
    intensity = float(args.intensity)
    theta = float(args.theta)
    alpha = float(args.alpha)
    duty = float(args.duty_cycle)
    snr = float(args.snr)
    samples = int(args.samples)
    if samples < 1:
        raise ConfigError("--samples must be >= 1")

    closed_degree = mean_neighbor_count(intensity, theta, alpha)
    sigma2 = interference_variance(intensity, duty, snr, theta, alpha)
    failures = []

    if intensity == 0.0:
        print("interior degree: closed-form 0, empty process (trivially exact)")
        print(f"interference power: closed-form {_fmt(sigma2 - 1.0)} (trivially exact)")
        print("amplitude KS: skipped (no neighbors at zero intensity)")
        return 0

    degrees, amplitudes = sample_interior_degrees(
        intensity, theta, alpha, samples, seed=int(args.seed or 0), collect_amplitudes=True
    )
    mc_degree = float(np.mean(degrees))
    rel = abs(mc_degree - closed_degree) / closed_degree
    print(
        f"interior degree: closed-form {_fmt(closed_degree)} monte-carlo {_fmt(mc_degree)} "
        f"rel-err {_fmt(100 * rel)}% (tol {_fmt(100 * DEGREE_TOL)}%)"
    )
    if rel > DEGREE_TOL:
        failures.append("degree")

    int_samples = max(100, samples // 25)
    powers = sample_interference_power(
        intensity, duty, snr, theta, alpha, int_samples, seed=int(args.seed or 0)
    )
    mc_power = float(np.mean(powers))
    target = sigma2 - 1.0
    rel = abs(mc_power - target) / target
    print(
        f"interference power: closed-form {_fmt(target)} monte-carlo {_fmt(mc_power)} "
        f"rel-err {_fmt(100 * rel)}% (tol {_fmt(100 * INTERFERENCE_TOL)}%)"
    )
    if rel > INTERFERENCE_TOL:
        failures.append("interference")

    ks = float(
        spstats.kstest(amplitudes, lambda u: neighbor_amplitude_cdf(u, theta, alpha)).statistic
    )
    print(f"amplitude KS: {_fmt(ks)} over {amplitudes.size} samples (tol {_fmt(KS_TOL)})")
    if ks > KS_TOL:
        failures.append("amplitude-ks")

    if failures:
        print("TOLERANCE FAILURE: " + ", ".join(failures), file=sys.stderr)
        return 3
    return 0


def cmd_decode_bench(args) -> int:
    out_dir = args.out_dir
    if not out_dir:
        raise ConfigError("no output directory: pass --out-dir")
    trials = int(args.trials)
    if trials < 1:
        raise ConfigError("--trials must be >= 1")
    blocks = int(args.blocks)
    bits = int(args.bits)
    frame = int(args.frame_length)
    duty = float(args.duty_cycle)
    noiseless = bool(args.noiseless)
    if noiseless:
        gamma_s = 1e9  # finite stand-in scale; the noise draw itself is skipped
    else:
        gamma_s = 10.0 ** (float(args.snr_db) / 10.0)

    rng = np.random.default_rng(np.random.SeedSequence([6, int(args.seed or 0)]))
    rows = []
    err_total = 0
    rmse_vals = []
    for t in range(trials):
        obs, messages, x = synthesize_observation(
            rng,
            blocks,
            bits,
            frame,
            duty,
            gamma_s=gamma_s,
            noiseless=noiseless,
            amplitude_mode=args.amplitude_mode,
        )
        out = decode_bp(obs, bp_iterations=args.bp_iterations)
        errors = int(np.sum(out.message_index != messages))
        err_total += errors
        correct = out.message_index == messages
        if np.any(correct):
            block = 1 << bits
            truth = x[np.arange(blocks) * block + messages]
            diff = out.refined_amplitude[correct] - truth[correct]
            rmse = float(np.sqrt(np.mean(np.abs(diff) ** 2)))
        else:
            rmse = float("nan")
        rmse_vals.append(rmse)
        rows.append([str(t), str(errors), _fmt(rmse)])

    _write_csv(
        os.path.join(out_dir, "bench.csv"),
        ["trial", "support_errors", "amplitude_rmse"],
        rows,
    )
    rate = err_total / (trials * blocks)
    finite = [v for v in rmse_vals if not math.isnan(v)]
    mean_rmse = float(np.mean(finite)) if finite else float("nan")
    print(
        f"decode-bench: {trials} trials, support error rate {_fmt(rate)}, "
        f"mean amplitude rmse {_fmt(mean_rmse)}"
    )
    return 0


# ---------------------------------------------------------------------------
# parser / entry point


def _add_common(sub: argparse.ArgumentParser, *, config: bool) -> None:
    if config:
        sub.add_argument(
            "--config", default=_env_default("CONFIG"), help="scenario JSON path"
        )
    sub.add_argument(
        "--out-dir", default=_env_default("OUT_DIR"), help="output directory for CSV files"
    )
    sub.add_argument(
        "--seed",
        type=int,
        default=_env_int("SEED"),
        help="override the scenario run seed",
    )
    sub.add_argument(
        "--threads",
        type=int,
        default=_env_int("THREADS", 1),
        help="worker threads (results never depend on this)",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="roddloc",
        description="distributed ranging/localization simulator and validators",
    )
    parser.add_argument("--version", action="version", version=f"roddloc {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run one scenario, write iterations/nodes CSVs")
    _add_common(p_sim, config=True)
    p_sim.set_defaults(func=cmd_simulate)

    p_sweep = sub.add_parser("sweep-snr", help="run a scenario across an SNR range")
    _add_common(p_sweep, config=True)
    p_sweep.add_argument(
        "--snr-db",
        default=_env_default("SNR_DB"),
        help="sweep range START:STOP:STEP in dB (inclusive)",
    )
    p_sweep.add_argument(
        "--seeds",
        type=int,
        default=_env_int("SEEDS", 1),
        help="independent repetitions per sweep point",
    )
    p_sweep.set_defaults(func=cmd_sweep_snr)

    p_val = sub.add_parser(
        "validate-stats", help="Monte Carlo validation of the link statistics"
    )
    p_val.add_argument("--intensity", type=float, default=0.04, help="nodes per m^2")
    p_val.add_argument("--theta", type=float, default=1e-3, help="neighbor gain threshold")
    p_val.add_argument("--alpha", type=float, default=3.0, help="path-loss exponent")
    p_val.add_argument("--duty-cycle", type=float, default=0.5)
    p_val.add_argument("--snr", type=float, default=1000.0, help="nominal linear SNR")
    p_val.add_argument(
        "--samples",
        type=int,
        default=_env_int("SAMPLES", 10000),
        help="Monte Carlo probe count for the degree statistic",
    )
    p_val.add_argument("--seed", type=int, default=_env_int("SEED", 0))
    p_val.set_defaults(func=cmd_validate_stats)

    p_bench = sub.add_parser("decode-bench", help="synthetic decoder benchmark")
    p_bench.add_argument("--blocks", type=int, default=11, help="neighbor block count")
    p_bench.add_argument("--bits", type=int, default=8, help="bits per coordinate")
    p_bench.add_argument("--frame-length", type=int, default=600)
    p_bench.add_argument("--duty-cycle", type=float, default=0.5)
    p_bench.add_argument(
        "--snr-db",
        type=float,
        default=float(_env_default("SNR_DB", 30.0)),
        help="decoder-side effective SNR in dB",
    )
    p_bench.add_argument("--noiseless", action="store_true")
    p_bench.add_argument(
        "--amplitude-mode",
        choices=("binary", "faded"),
        default="binary",
        help="active-entry amplitudes: exactly 1, or drawn from the fading law",
    )
    p_bench.add_argument("--bp-iterations", type=int, default=10)
    p_bench.add_argument("--trials", type=int, default=_env_int("TRIALS", 100))
    p_bench.add_argument("--seed", type=int, default=_env_int("SEED", 0))
    p_bench.add_argument(
        "--out-dir", default=_env_default("OUT_DIR"), help="output directory"
    )
    p_bench.set_defaults(func=cmd_decode_bench)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
