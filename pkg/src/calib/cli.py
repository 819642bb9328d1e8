"""Command-line front end.

    calib simulate   --config cfg.json --out DIR [--seed N] [--theta-grid 0:180:10]
                     [--duration S] [--repeats K] [--pc on|off]
    calib background --config cfg.json --out DIR ...
    calib estimate   --config cfg.json --out DIR [--counts CSV] [--background-csv CSV]
                     [--visibility V:U] [--delta V:U] [--epsilon V:U]
    calib compare    --config cfg.json --out DIR ...

Exit codes: 0 success, 2 input or schema error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from calib import analytic, estimate, simulate
from calib.model import (
    ConfigError,
    CountRecord,
    ExperimentConfig,
    Quantity,
    config_to_dict,
    load_config,
)

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_NUMERIC = 3

COUNTS_HEADER = ("theta_deg", "duration_s", "n1", "n2", "nc", "pc_enabled", "seed", "run_idx")
ORACLE_HEADER = ("theta_deg", "d2_rate_pc_on", "d2_rate_pc_off", "coinc_rate_pc_on", "coinc_rate_pc_off")
CURVES_HEADER = ("theta_deg", "n2_rate", "n2_rate_u", "nc_rate", "nc_rate_u", "oracle_d2_rate", "oracle_coinc_rate")

# seed streams, so that auxiliary acquisitions never share noise with the sweep
STREAM_SWEEP, STREAM_BACKGROUND, STREAM_KLYSHKO = 0, 1, 2


class SchemaError(ValueError):
    pass


class ConfigMismatch(ValueError):
    pass


@dataclass(frozen=True)
class RunManifest:
    config_path: Optional[Path]
    theta_grid: tuple[float, ...] = tuple(float(t) for t in range(0, 181, 10))
    duration: float = 10.0
    repeats: int = 1
    base_seed: int = 0
    output_dir: Path = field(default_factory=lambda: Path("."))

    def __post_init__(self):
        if self.repeats < 1:
            raise SchemaError("repeats must be >= 1")
        if not self.theta_grid:
            raise SchemaError("theta grid is empty")
        if any(not 0.0 <= t <= 180.0 for t in self.theta_grid):
            raise SchemaError("theta grid must lie within [0, 180] degrees")
        if not self.duration > 0:
            raise SchemaError("duration must be positive")
        if self.base_seed < 0:
            raise SchemaError("seed must be non-negative")


def parse_theta_grid(text: str) -> tuple[float, ...]:
    """``a:b:step`` inclusive of ``b``, or a comma-separated list."""
    try:
        if ":" in text:
            a, b, step = (float(x) for x in text.split(":"))
            if step <= 0 or b < a:
                raise ValueError
            n = int(math.floor((b - a) / step + 1e-9)) + 1
            return tuple(round(a + i * step, 9) for i in range(n))
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise SchemaError(f"bad theta grid {text!r}; expected a:b:step") from None


def parse_quantity(text: str) -> Quantity:
    """``value:u`` or ``value+-u``."""
    for sep in (":", "+-", "±"):
        if sep in text:
            v, u = text.split(sep, 1)
            try:
                return Quantity(float(v), float(u))
            except ValueError:
                break
    raise SchemaError(f"bad quantity {text!r}; expected value:uncertainty")


# ---------------------------------------------------------------- CSV I/O

def _fmt_theta(t: float) -> str:
    return f"{t:.6f}"


def write_counts(records: Sequence[CountRecord], run_idx: Sequence[int], path: Path) -> None:
    rows = sorted(zip(records, run_idx), key=lambda x: (x[0].theta_deg, x[1]))
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COUNTS_HEADER)
    for r, i in rows:
        w.writerow([_fmt_theta(r.theta_deg), repr(r.duration), r.n1, r.n2, r.nc,
                    "on" if r.pc_enabled else "off", r.seed, i])
    Path(path).write_text(buf.getvalue())


def read_counts(path: Path) -> tuple[list[CountRecord], list[int]]:
    text = Path(path).read_text()
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or tuple(rows[0]) != COUNTS_HEADER:
        raise SchemaError(f"{path}: expected header {','.join(COUNTS_HEADER)}")
    if len(rows) == 1:
        raise SchemaError(f"{path}: no data rows")
    records, idx = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(COUNTS_HEADER) or row[5] not in ("on", "off"):
            raise SchemaError(f"{path}:{lineno}: malformed row")
        try:
            records.append(CountRecord(float(row[0]), float(row[1]), int(row[2]), int(row[3]),
                                       int(row[4]), row[5] == "on", int(row[6])))
            idx.append(int(row[7]))
        except ValueError as e:
            raise SchemaError(f"{path}:{lineno}: {e}") from None
    return records, idx


def _write_table(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    Path(path).write_text(buf.getvalue())


def write_oracle(cfg: ExperimentConfig, thetas, path: Path) -> None:
    p = analytic.RateParams.from_config(cfg)
    rows = []
    for t in thetas:
        rows.append([
            _fmt_theta(t),
            repr(analytic.expected_rate_d2(t, p, True)),
            repr(analytic.expected_rate_d2(t, p, False)),
            repr(analytic.expected_coincidence_rate(t, p, True)),
            repr(analytic.expected_coincidence_rate(t, p, False)),
        ])
    _write_table(path, ORACLE_HEADER, rows)


def write_curves(cfg: ExperimentConfig, records: Sequence[CountRecord], path: Path) -> None:
    """Observed mean rates per angle next to the analytic curves."""
    p = analytic.RateParams.from_config(cfg)
    rows = []
    for t in sorted({r.theta_deg for r in records}):
        sel = [r for r in records if r.theta_deg == t]
        dur = sum(r.duration for r in sel)
        n2 = sum(r.n2 for r in sel)
        nc = sum(r.nc for r in sel)
        pc = sel[0].pc_enabled
        rows.append([
            _fmt_theta(t), repr(n2 / dur), repr(math.sqrt(n2) / dur), repr(nc / dur), repr(math.sqrt(nc) / dur),
            repr(analytic.expected_rate_d2(t, p, pc)), repr(analytic.expected_coincidence_rate(t, p, pc)),
        ])
    _write_table(path, CURVES_HEADER, rows)


def write_json(obj, path: Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------- commands

def _load(manifest: RunManifest, pc: Optional[bool] = None) -> ExperimentConfig:
    if manifest.config_path is None:
        cfg = ExperimentConfig()
    else:
        cfg = load_config(manifest.config_path)
    if pc is not None:
        cfg = cfg.replace(pockels__enabled=pc)
    return cfg


def _acquire(cfg, thetas, manifest, stream):
    records = simulate.sweep(cfg, thetas, manifest.duration, manifest.base_seed, manifest.repeats, stream)
    run_idx = [i % manifest.repeats for i in range(len(records))]
    return records, run_idx


def cmd_simulate(manifest: RunManifest, pc: Optional[bool] = None) -> Path:
    """Sweep the polarizer; writes counts.csv, oracle.csv and curves.csv."""
    cfg = _load(manifest, pc)
    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    records, idx = _acquire(cfg, manifest.theta_grid, manifest, STREAM_SWEEP)
    write_counts(records, idx, out / "counts.csv")
    write_oracle(cfg, manifest.theta_grid, out / "oracle.csv")
    write_curves(cfg, records, out / "curves.csv")
    return out / "counts.csv"


def cmd_background(manifest: RunManifest) -> tuple[Path, Quantity]:
    """Pump-off acquisition: ``repeats`` records at the first grid angle."""
    cfg = _load(manifest).replace(source__pair_rate_W0=0.0)
    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)
    records, idx = _acquire(cfg, manifest.theta_grid[:1], manifest, STREAM_BACKGROUND)
    write_counts(records, idx, out / "background.csv")
    bg = estimate.estimate_background(records)
    write_json({"background_rate": bg.to_dict()}, out / "background.json")
    return out / "background.csv", bg


def conditioned_estimate(
    cfg: ExperimentConfig,
    records: Sequence[CountRecord],
    background: Optional[Quantity] = None,
    delta: Optional[Quantity] = None,
    eps: Optional[Quantity] = None,
    drift_normalize: bool = False,
    extra: Sequence[tuple[str, Quantity]] = (),
) -> estimate.EfficiencyEstimate:
    """Full conditioned chain from records to efficiency."""
    recs = [r for r in records if r.pc_enabled]
    if not recs:
        raise SchemaError("no records with the Pockels cell enabled")
    W1 = sum(r.n1 for r in recs) / sum(r.duration for r in recs)
    if drift_normalize:
        recs = estimate.pump_drift_normalize(recs, W1, background)
    fit = estimate.fit_records(recs, background)
    V = estimate.visibility_from_fit(fit)
    trail = list(extra)
    if delta is None:
        delta = estimate.dead_time_correction_factor(W1, cfg.pockels.driver_dead_time)
        if cfg.d1.dead_time > 0:
            trail.append(("d1_dead_time", estimate.detector_live_fraction(W1, cfg.d1.dead_time)))
    if eps is None:
        eps = Quantity(cfg.channel.epsilon_signal_transmittance, 0.0)
    return estimate.eta_from_visibility(V, delta, eps, trail, fit)


def klyshko_estimate(
    cfg: ExperimentConfig,
    records: Sequence[CountRecord],
    background: Optional[Quantity] = None,
    eps: Optional[Quantity] = None,
) -> estimate.EfficiencyEstimate:
    if eps is None:
        eps = Quantity(cfg.channel.epsilon_signal_transmittance, 0.0)
    W1 = sum(r.n1 for r in records) / sum(r.duration for r in records)
    corr = []
    if cfg.d1.dead_time > 0:
        corr.append(("d1_dead_time", estimate.detector_live_fraction(W1, cfg.d1.dead_time)))
    return estimate.eta_klyshko(records, eps, corr, background)


def cmd_estimate(
    config: Optional[ExperimentConfig],
    counts_csv: Optional[Path],
    bg_csv: Optional[Path],
    out_dir: Path,
    visibility: Optional[Quantity] = None,
    delta: Optional[Quantity] = None,
    eps: Optional[Quantity] = None,
    drift_normalize: bool = False,
) -> dict:
    """Estimate eta1 from CSVs (or from injected values) and write estimate.json."""
    cfg = config if config is not None else ExperimentConfig()
    out_dir.mkdir(parents=True, exist_ok=True)
    if visibility is not None:
        # regression mode: the chain starts from a given visibility
        if delta is None:
            raise SchemaError("--visibility requires --delta")
        if eps is None:
            eps = Quantity(cfg.channel.epsilon_signal_transmittance, 0.0)
        est = estimate.eta_from_visibility(visibility, delta, eps)
        result = estimate.report([est])
    else:
        if counts_csv is None:
            raise SchemaError("no counts file given")
        records, _ = read_counts(counts_csv)
        bg = None
        if bg_csv is not None:
            bg_records, _ = read_counts(bg_csv)
            bg = estimate.estimate_background(bg_records)
        ests = [conditioned_estimate(cfg, records, bg, delta, eps, drift_normalize)]
        klyshko_recs = [r for r in records if not r.pc_enabled and math.remainder(r.theta_deg, 180.0) == 0]
        if klyshko_recs:
            ests.append(klyshko_estimate(cfg, klyshko_recs, bg, eps))
        result = estimate.report(ests, bg)
    write_json(result, out_dir / "estimate.json")
    return result


def check_same_setup(a: ExperimentConfig, b: ExperimentConfig) -> None:
    """Both protocols must run on one physical setup; only the Pockels
    switch may differ."""
    da, db = config_to_dict(a), config_to_dict(b)
    da["pockels"].pop("enabled")
    db["pockels"].pop("enabled")
    if da != db:
        diffs = [f"{s}.{k}" for s in da if isinstance(da[s], dict)
                 for k in da[s] if da[s][k] != db[s].get(k)]
        if da.get("coincidence_window") != db.get("coincidence_window"):
            diffs.append("coincidence_window")
        raise ConfigMismatch(f"configs differ in {', '.join(diffs)}")


def cmd_compare(manifest: RunManifest, klyshko_config: Optional[Path] = None) -> dict:
    """Run both protocols on one setup and compare the two estimates."""
    cfg = _load(manifest, True)
    k_cfg = cfg if klyshko_config is None else load_config(klyshko_config)
    check_same_setup(cfg, k_cfg)
    k_cfg = k_cfg.replace(pockels__enabled=False)
    out = manifest.output_dir
    out.mkdir(parents=True, exist_ok=True)

    records, idx = _acquire(cfg, manifest.theta_grid, manifest, STREAM_SWEEP)
    write_counts(records, idx, out / "counts.csv")
    k_records, k_idx = _acquire(k_cfg, (0.0,), manifest, STREAM_KLYSHKO)
    write_counts(k_records, k_idx, out / "klyshko_counts.csv")

    bg = None
    src = cfg.source
    if src.background_rate_D2 > 0 or src.dark_rate_D2 > 0:
        _, bg = cmd_background(manifest)

    extra = []
    if cfg.d2.dead_time > 0:
        extra.append(("d2_dead_time",
                      estimate.d2_dead_time_bound(cfg, manifest.theta_grid, manifest.duration, manifest.base_seed)))
    cond = conditioned_estimate(cfg, records, bg, extra=extra)
    kly = klyshko_estimate(k_cfg, k_records, bg)
    result = estimate.report([cond, kly], bg)
    write_json(result, out / "compare.json")
    return result


def compare_published(a: Quantity, b: Quantity) -> dict:
    """Comparison block for two externally given efficiencies."""
    # the published value already carries its own corrections
    trail = (("published", estimate.CorrectionFactor(1.0, 0.0, source="external")),)
    ea = estimate.EfficiencyEstimate(estimate.Method.CONDITIONED_VISIBILITY, a, corrections=trail)
    eb = estimate.EfficiencyEstimate(estimate.Method.KLYSHKO, b)
    return estimate.report([ea, eb])


# ---------------------------------------------------------------- argparse

def _on_off(text: str) -> bool:
    if text not in ("on", "off"):
        raise argparse.ArgumentTypeError("expected on or off")
    return text == "on"


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="experiment config JSON")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--theta-grid", default="0:180:10", help="a:b:step in degrees")
    common.add_argument("--duration", type=float, default=10.0, help="seconds per record")
    common.add_argument("--repeats", type=int, default=1)
    common.add_argument("--pc", type=_on_off, default=None, help="override pockels.enabled")

    parser = argparse.ArgumentParser(prog="calib", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a polarizer sweep")
    sub.add_parser("background", parents=[common], help="simulate pump-off background records")
    p_est = sub.add_parser("estimate", parents=[common], help="estimate eta1 from counts")
    p_est.add_argument("--counts", type=Path, help="counts CSV (default OUT/counts.csv)")
    p_est.add_argument("--background-csv", type=Path, help="pump-off counts CSV")
    p_est.add_argument("--visibility", type=parse_quantity, help="inject a visibility V:U")
    p_est.add_argument("--delta", type=parse_quantity, help="measured dead-time factor V:U")
    p_est.add_argument("--epsilon", type=parse_quantity, help="polarizer transmittance V:U")
    p_est.add_argument("--drift-normalize", action="store_true", help="normalize counts to the D1 rate")
    p_cmp = sub.add_parser("compare", parents=[common], help="compare conditioned and Klyshko estimates")
    p_cmp.add_argument("--klyshko-config", type=Path, help="config for the coincidence arm")
    p_cmp.add_argument("--published", nargs=2, type=parse_quantity, metavar="V:U",
                       help="compare two given efficiencies instead of simulating")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INPUT
    try:
        manifest = RunManifest(
            config_path=args.config,
            theta_grid=parse_theta_grid(args.theta_grid),
            duration=args.duration,
            repeats=args.repeats,
            base_seed=args.seed,
            output_dir=args.out,
        )
        if args.command == "simulate":
            path = cmd_simulate(manifest, args.pc)
            print(path)
        elif args.command == "background":
            path, bg = cmd_background(manifest)
            print(f"{path}\nbackground rate: {bg} counts/s")
        elif args.command == "estimate":
            cfg = load_config(args.config) if args.config else None
            counts = args.counts
            if counts is None and args.visibility is None:
                counts = args.out / "counts.csv"
            result = cmd_estimate(cfg, counts, args.background_csv, args.out,
                                  args.visibility, args.delta, args.epsilon, args.drift_normalize)
            print(json.dumps(result["estimates"][0]["eta1"]))
        elif args.command == "compare":
            if args.published:
                args.out.mkdir(parents=True, exist_ok=True)
                result = compare_published(*args.published)
                write_json(result, args.out / "compare.json")
            else:
                result = cmd_compare(manifest, args.klyshko_config)
            print(json.dumps(result["comparison"]))
    except (SchemaError, ConfigError, ConfigMismatch, FileNotFoundError, json.JSONDecodeError) as e:
        print(f"calib: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except (estimate.FitError, ZeroDivisionError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"calib: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as e:
        print(f"calib: error: {e}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
