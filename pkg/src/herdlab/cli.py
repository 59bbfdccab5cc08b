"""``herdlab`` command line: calibrate, simulate, analyze, pipeline, fixtures.

Exit codes
----------
0  success, every output written
1  unexpected internal error
2  usage error (bad or missing flags)
3  input error (unreadable or malformed file)
4  calibration error (parameters outside the model's valid range)
5  numerical error (eigen-solver did not converge)

Flag values beat params-file values, which beat built-in defaults.  The
default output directory can be set with ``HERDLAB_OUT``.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import shutil
import sys
import tempfile
import time
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from herdlab import __version__
from herdlab import calibration as cal
from herdlab import data, engine, fixtures, spectral

log = logging.getLogger("herdlab")

EXIT_OK, EXIT_INTERNAL, EXIT_USAGE, EXIT_INPUT, EXIT_CALIBRATION, EXIT_NUMERIC = range(6)


class UsageError(Exception):
    pass


class StageError(Exception):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


def file_digest(path: str | Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


@contextmanager
def atomic_dir(target: str | Path):
    """Write into a temporary sibling directory, then move it into place."""
    target = Path(target)
    target.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(prefix=f".{target.name}.", dir=target.parent))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if target.exists():
        shutil.rmtree(target)
    os.replace(tmp, target)


def write_manifest(out_dir: Path, final_dir: Path, *, command: str, config: dict,
                   inputs: dict, seed: int | None, wall: float, extra: dict | None = None) -> None:
    outputs = {p.name: file_digest(p) for p in sorted(out_dir.iterdir()) if p.is_file()}
    manifest = {
        "tool": "herdlab",
        "version": __version__,
        "command": command,
        "config": config,
        "inputs": {k: {"path": str(v), "sha256": file_digest(v)} for k, v in inputs.items()},
        "seed": seed,
        "wall_time_seconds": round(wall, 3),
        "outputs": outputs,
        "output_dir": str(final_dir),
    }
    if extra:
        manifest.update(extra)
    (out_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _require(path: str | Path | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise data.LoadError(f"{what} file not found: {p}")
    return p


def _default_out(name: str) -> Path:
    return Path(os.environ.get("HERDLAB_OUT", ".")) / name


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------

def _p_from_args(args) -> float:
    if args.p is not None:
        return args.p
    if args.institutional is not None or args.turnover is not None:
        return cal.individual_probability(
            args.institutional if args.institutional is not None else 0.603,
            args.turnover if args.turnover is not None else 1.64,
            args.days_per_year,
        )
    return cal.NYSE_P


def cmd_calibrate(args) -> Path:
    prices = _require(args.prices, "prices")
    sectors = _require(args.sectors, "sectors")
    out = Path(args.out) if args.out else _default_out("params.json")
    panel = data.load_price_panel(prices, sectors, intersect_dates=args.intersect_dates)
    normed = data.normalize(data.log_returns(panel))
    params = cal.calibrate(normed, p=_p_from_args(args), N=args.N, L=args.L,
                           burn_in=args.burn_in,
                           T_out=args.T_out if args.T_out is not None else panel.T)
    out.parent.mkdir(parents=True, exist_ok=True)
    cal.save_params(params, out)
    summary = cal.calibration_summary(params, panel.sector_names)
    out.with_suffix(".summary.txt").write_text(summary + "\n")
    print(summary)
    return out


def _load_sim_params(args) -> cal.ModelParams:
    if args.params:
        params = cal.load_params(_require(args.params, "params"))
    elif args.preset:
        params = cal.preset(args.preset)
    else:
        raise UsageError("either --params or --preset is required")
    changes = {}
    if args.days is not None:
        if args.days < 1:
            raise UsageError("--days must be >= 1")
        changes["T_out"] = args.days
    if args.burn_in is not None:
        if args.burn_in < 0:
            raise UsageError("--burn-in must be >= 0")
        changes["burn_in"] = args.burn_in
    if args.N is not None:
        changes["N"] = args.N
    if args.L is not None:
        changes["L"] = args.L
    return params.replace(**changes) if changes else params


def simulate_into(params: cal.ModelParams, seed: int, out_dir: Path, final_dir: Path,
                  args, inputs: dict) -> engine.SimOutput:
    t0 = time.perf_counter()
    sim = engine.run_simulation(params, seed, mode=args.population_mode,
                                dispersion=args.dispersion, threads=args.threads)
    data.write_returns(sim.panel, out_dir / "returns.csv")
    data.write_sectors(sim.panel.tickers, sim.panel.sector_of, sim.panel.sector_names,
                       out_dir / "sectors.csv")
    cal.save_params(params, out_dir / "params.json")
    write_manifest(out_dir, final_dir, command="simulate",
                   config={**params.to_dict(), "population_mode": args.population_mode,
                           "dispersion": args.dispersion},
                   inputs=inputs, seed=seed, wall=time.perf_counter() - t0,
                   extra={"params_digest": sim.manifest["params_digest"],
                          "threads": sim.manifest["threads"]})
    return sim


def cmd_simulate(args) -> Path:
    params = _load_sim_params(args)
    out = Path(args.out) if args.out else _default_out(f"sim_seed{args.seed}")
    inputs = {"params": args.params} if args.params else {}
    with atomic_dir(out) as tmp:
        simulate_into(params, args.seed, tmp, out, args, inputs)
    log.info("simulation written to %s", out)
    return out


def analyze_into(returns: Path, sectors: Path, out_dir: Path, args) -> spectral.SpectralReport:
    panel = data.read_returns(returns, sectors)
    report = spectral.analyze(data.normalize(panel), max_lag=args.max_lag, bins=args.bins)
    report.meta["source"] = str(returns)
    files = report.write(out_dir)
    if args.format == "json":
        for f in files:
            if f.suffix == ".csv":
                f.unlink()
    elif args.format == "csv":
        (out_dir / "report.json").unlink()
    return report


def _print_report(report: spectral.SpectralReport, label: str = "") -> None:
    v = report.spectrum.values
    names = report.sector_names or tuple(str(j) for j in range(len(report.sector_scores[0].scores)))
    top = ", ".join(f"{x:.3f}" for x in v[:3])
    print(f"{label}lambda_0..{min(3, v.size) - 1} = {top}   (sum = {v.sum():.3f})")
    for k, s in enumerate(report.sector_scores):
        print(f"{label}  u(lambda_{k}): top sector {names[s.top_sector]} ratio {s.ratio:.2f}")
    lags = [t for t in (1, 10, 50, 100) if t < report.A.size]
    print(f"{label}A(t): " + ", ".join(f"A({t})={report.A[t]:.3f}" for t in lags))


def cmd_analyze(args) -> Path:
    returns = _require(args.returns, "returns")
    sectors = _require(args.sectors, "sectors")
    out = Path(args.out) if args.out else _default_out("analysis")
    t0 = time.perf_counter()
    with atomic_dir(out) as tmp:
        report = analyze_into(returns, sectors, tmp, args)
        write_manifest(tmp, out, command="analyze",
                       config={"max_lag": args.max_lag, "bins": args.bins, "format": args.format},
                       inputs={"returns": returns, "sectors": sectors}, seed=None,
                       wall=time.perf_counter() - t0)
    _print_report(report)
    return out


def parse_seeds(text: str) -> list[int]:
    """``"1..5"`` -> [1, 2, 3, 4, 5]; ``"1,4,9"`` -> [1, 4, 9]."""
    seeds: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        elif part:
            seeds.append(int(part))
    if not seeds:
        raise UsageError(f"no seeds in {text!r}")
    return seeds


def summary_stats(report: spectral.SpectralReport) -> dict:
    v = report.spectrum.values
    stats = {f"lambda_{k}": float(v[k]) for k in range(min(3, v.size))}
    for k, s in enumerate(report.sector_scores):
        stats[f"ratio_{k}"] = s.ratio
    for t in (1, 10, 50):
        if t < report.A.size:
            stats[f"A_{t}"] = float(report.A[t])
    return stats


def aggregate(reports: list[dict]) -> dict:
    keys = reports[0].keys()
    agg = {}
    for k in keys:
        vals = np.array([r[k] for r in reports], dtype=float)
        agg[k] = {"mean": float(vals.mean()),
                  "std": float(vals.std(ddof=1)) if vals.size > 1 else 0.0,
                  "values": vals.tolist()}
    return agg


def cmd_pipeline(args) -> Path:
    out = Path(args.out) if args.out else _default_out("pipeline")
    seeds = parse_seeds(args.seeds)
    t0 = time.perf_counter()
    with atomic_dir(out) as tmp:
        try:
            prices = _require(args.prices, "prices")
            sectors = _require(args.sectors, "sectors")
            panel = data.load_price_panel(prices, sectors, intersect_dates=args.intersect_dates)
            normed = data.normalize(data.log_returns(panel))
            params = cal.calibrate(normed, p=_p_from_args(args), N=args.N or cal.DEFAULT_N_AGENTS,
                                   L=args.L or cal.DEFAULT_L,
                                   burn_in=args.burn_in if args.burn_in is not None else cal.DEFAULT_BURN_IN,
                                   T_out=args.days or normed.T)
            cal.save_params(params, tmp / "params.json")
            (tmp / "calibration.txt").write_text(
                cal.calibration_summary(params, panel.sector_names) + "\n")
        except (data.LoadError, cal.CalibrationError, UsageError, ValueError) as e:
            raise StageError("1:calibrate", e) from e

        try:
            emp_dir = tmp / "empirical"
            emp_dir.mkdir()
            data.write_returns(data.log_returns(panel), emp_dir / "returns.csv")
            data.write_sectors(panel.tickers, panel.sector_of, panel.sector_names,
                               emp_dir / "sectors.csv")
            emp = analyze_into(emp_dir / "returns.csv", emp_dir / "sectors.csv", emp_dir, args)
        except (ValueError, spectral.ConvergenceError) as e:
            raise StageError("2:analyze-empirical", e) from e

        sim_stats = []
        for seed in seeds:
            sim_dir = tmp / f"sim_seed{seed}"
            sim_dir.mkdir()
            try:
                simulate_into(params, seed, sim_dir, out / sim_dir.name, args,
                              {"params": tmp / "params.json"})
            except (ValueError, cal.CalibrationError) as e:
                raise StageError(f"3:simulate(seed={seed})", e) from e
            try:
                rep = analyze_into(sim_dir / "returns.csv", sim_dir / "sectors.csv",
                                   sim_dir / "analysis", args)
            except (ValueError, spectral.ConvergenceError) as e:
                raise StageError(f"4:analyze(seed={seed})", e) from e
            sim_stats.append(summary_stats(rep))

        agg = {"empirical": summary_stats(emp), "seeds": seeds,
               "simulated": aggregate(sim_stats)}
        (tmp / "aggregate.json").write_text(json.dumps(agg, indent=2) + "\n")
        write_manifest(tmp, out, command="pipeline",
                       config={**params.to_dict(), "seeds": seeds,
                               "population_mode": args.population_mode,
                               "dispersion": args.dispersion},
                       inputs={"prices": prices, "sectors": sectors}, seed=None,
                       wall=time.perf_counter() - t0)
    _print_report(emp, "empirical  ")
    for k, v in agg["simulated"].items():
        print(f"simulated  {k:<10s} {v['mean']:.3f} +/- {v['std']:.3f}")
    return out


def cmd_fixtures(args) -> Path:
    out = Path(args.out) if args.out else _default_out(f"fixture_{args.kind}")
    panel = fixtures.make_fixture(args.kind, args.seed, args.rows)
    t0 = time.perf_counter()
    with atomic_dir(out) as tmp:
        data.write_prices(panel, tmp / "prices.csv")
        data.write_sectors(panel.tickers, panel.sector_of, panel.sector_names, tmp / "sectors.csv")
        write_manifest(tmp, out, command="fixtures",
                       config={"kind": args.kind, "rows": panel.T}, inputs={},
                       seed=args.seed, wall=time.perf_counter() - t0)
    print(f"wrote {panel.T} x {panel.n} {args.kind} panel to {out}")
    return out


# --------------------------------------------------------------------------
# argument parsing
# --------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _add_probability_flags(p):
    g = p.add_argument_group("individual trade probability")
    g.add_argument("--p", type=float, help=f"daily buy (= sell) probability (default {cal.NYSE_P})")
    g.add_argument("--institutional", type=float, help="institutional holding fraction")
    g.add_argument("--turnover", type=float, help="yearly turnover ratio")
    g.add_argument("--days-per-year", type=int, default=250)


def _add_engine_flags(p):
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--days", type=int, help="output length T_out")
    p.add_argument("--burn-in", type=int)
    p.add_argument("--N", type=int, help="number of agents")
    p.add_argument("--L", type=int, help="maximum investment horizon")
    p.add_argument("--population-mode", choices=("random", "uniform"), default="random")
    p.add_argument("--dispersion", choices=engine.DISPERSION_POLICIES, default="market",
                   help="where groups of one origin are spread over distinct targets")


def _add_analysis_flags(p):
    p.add_argument("--max-lag", type=int, default=100)
    p.add_argument("--bins", type=int, default=50)
    p.add_argument("--format", choices=("csv", "json", "both"), default="both")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="herdlab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"herdlab {__version__}")
    parser.add_argument("--threads", type=int, default=None, help="worker threads for the engine")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("calibrate", help="estimate model parameters from a price panel")
    p.add_argument("--prices")
    p.add_argument("--sectors")
    p.add_argument("--out")
    p.add_argument("--intersect-dates", action="store_true")
    p.add_argument("--N", type=int, default=cal.DEFAULT_N_AGENTS)
    p.add_argument("--L", type=int, default=cal.DEFAULT_L)
    p.add_argument("--burn-in", type=int, default=cal.DEFAULT_BURN_IN)
    p.add_argument("--T-out", dest="T_out", type=int)
    _add_probability_flags(p)

    p = sub.add_parser("simulate", help="run the herding model")
    p.add_argument("--params")
    p.add_argument("--preset", choices=("nyse", "hkse"))
    p.add_argument("--out")
    _add_engine_flags(p)

    p = sub.add_parser("analyze", help="volatility autocorrelation and correlation spectrum")
    p.add_argument("--returns")
    p.add_argument("--sectors")
    p.add_argument("--out")
    _add_analysis_flags(p)

    p = sub.add_parser("pipeline", help="calibrate, simulate and analyze end to end")
    p.add_argument("--prices")
    p.add_argument("--sectors")
    p.add_argument("--out")
    p.add_argument("--seeds", default="1")
    p.add_argument("--intersect-dates", action="store_true")
    _add_engine_flags(p)
    _add_probability_flags(p)
    _add_analysis_flags(p)

    p = sub.add_parser("fixtures", help="write a synthetic price panel")
    p.add_argument("--kind", choices=sorted(fixtures.KINDS), default="nyse-like")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--rows", type=int, help="number of price rows")
    p.add_argument("--out")
    return parser


COMMANDS = {
    "calibrate": cmd_calibrate,
    "simulate": cmd_simulate,
    "analyze": cmd_analyze,
    "pipeline": cmd_pipeline,
    "fixtures": cmd_fixtures,
}


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args = build_parser().parse_args(argv)
        if args.verbose:
            log.setLevel(logging.INFO)
        COMMANDS[args.command](args)
    except UsageError as e:
        print(f"herdlab: usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except StageError as e:
        print(f"herdlab: {e}", file=sys.stderr)
        return _code_for(e.cause)
    except Exception as e:  # noqa: BLE001
        code = _code_for(e)
        print(f"herdlab: {_describe(e)}", file=sys.stderr)
        return code
    return EXIT_OK


def _code_for(e: Exception) -> int:
    if isinstance(e, UsageError):
        return EXIT_USAGE
    if isinstance(e, cal.CalibrationError):
        return EXIT_CALIBRATION
    if isinstance(e, spectral.ConvergenceError):
        return EXIT_NUMERIC
    if isinstance(e, (data.LoadError, ValueError, OSError)):
        return EXIT_INPUT
    return EXIT_INTERNAL


def _describe(e: Exception) -> str:
    if isinstance(e, cal.CalibrationError):
        return (f"calibration error: {e}\n  hint: check the sector manifest; every sector needs "
                "stocks that co-move more strongly with each other than with the market")
    if isinstance(e, data.LoadError):
        return f"input error: {e}"
    return f"{type(e).__name__}: {e}"


if __name__ == "__main__":
    sys.exit(main())
