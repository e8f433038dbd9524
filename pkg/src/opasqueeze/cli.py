"""Command-line interface.

Subcommands::

    opasqueeze simulate sweep|trace ...
    opasqueeze fit sweep|trace FILE ...
    opasqueeze budget ...
    opasqueeze report ...

Physical inputs are accepted in laboratory units (mW, % W^-1, dB).
Exit codes: 0 success, 1 validation or parse error (or a failed report
row), 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import detection
from ._io import atomic_write_text
from .errors import NonIdentifiableError, ParseError
from .estimation import Grid, PumpSweep, agrees_with_oracle, fit_pump_sweep, fit_trace, oracle_fit_pump_sweep, simulate_sweep
from .gaussian import from_db
from .report import ReportConfig, run_report
from .squeezer import noise_levels, pct_per_w_to_si
from .traces import ScanConfig, read_trace, shot_reference, synthesize, write_trace

OUTPUT_DIR_ENV = "OPASQUEEZE_OUTPUT_DIR"

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 1, 2


class NumericalFailure(RuntimeError):
    pass


def output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_DIR_ENV, "."))


def _resolve_output(path, default_name):
    return Path(path) if path else output_dir() / default_name


# ---------------------------------------------------------------------------
# argument parsing helpers
# ---------------------------------------------------------------------------

def parse_range(text: str) -> np.ndarray:
    """``start:stop:step`` (stop included when on the grid) or a comma list."""
    text = text.strip()
    if ":" in text:
        parts = [float(x) for x in text.split(":")]
        if len(parts) != 3 or parts[2] <= 0:
            raise argparse.ArgumentTypeError(f"bad range {text!r}; use start:stop:step with step > 0")
        start, stop, step = parts
        n = int(math.floor((stop - start) / step + 1e-9))
        if n < 0:
            raise argparse.ArgumentTypeError(f"empty range {text!r}")
        return np.round(start + step * np.arange(n + 1), 12)
    try:
        return np.array([float(x) for x in text.split(",") if x.strip()])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


class _BudgetElement(argparse.Action):
    """Collect loss elements in command-line order."""

    def __call__(self, parser, namespace, values, option_string=None):
        items = getattr(namespace, "elements", None) or []
        items.append((self.const, values))
        namespace.elements = items


def _build_element(kind: str, value: str) -> detection.LossElement:
    try:
        if kind == "module":
            return detection.module_element(float(value))
        if kind == "coupler":
            measured, _, nominal = value.partition("/")
            return detection.coupler_element(float(measured), float(nominal) if nominal else 0.5)
        if kind == "responsivity":
            resp, sep, wl = value.partition("@")
            if not sep:
                raise ValueError("expected RESPONSIVITY@WAVELENGTH_NM")
            return detection.detector_element(float(resp), float(wl))
        if kind == "electronic":
            return detection.electronic_element(loss=float(value))
        if kind == "electronic-db":
            return detection.electronic_element(clearance_db=float(value))
        if kind == "element":
            name, sep, loss = value.partition("=")
            if not sep:
                raise ValueError("expected NAME=LOSS")
            return detection.LossElement(name, float(loss), "assumed")
    except ValueError as exc:
        raise ValueError(f"invalid {kind} element {value!r}: {exc}") from None
    raise ValueError(f"unknown element kind {kind!r}")


def _scan_args(p):
    g = p.add_argument_group("scan")
    g.add_argument("--scan-frequency", type=float, default=1.0, help="triangle-wave frequency, Hz")
    g.add_argument("--duration", type=float, default=2.0, help="s")
    g.add_argument("--sample-rate", type=float, default=1000.0, help="samples/s")
    g.add_argument("--phase-span", type=float, default=2 * math.pi, help="peak-to-peak LO phase, rad")
    g.add_argument("--phase-offset", type=float, default=0.0, help="rad")
    g.add_argument("--vbw", type=float, default=510.0, help="video bandwidth, Hz (0 disables smoothing)")
    g.add_argument("--rbw", type=float, default=3e6, help="resolution bandwidth, Hz (metadata)")
    g.add_argument("--jitter-db", type=float, default=0.1, help="per-sample jitter before smoothing, dB")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="opasqueeze", description=__doc__.split("\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    # simulate
    sim = sub.add_parser("simulate", help="forward-model sweeps and traces")
    simsub = sim.add_subparsers(dest="what", required=True)

    ss = simsub.add_parser("sweep", help="pump-power sweep CSV")
    ss.add_argument("--a-pct-per-w", type=float, required=True, help="SHG efficiency, %%/W")
    ss.add_argument("--loss", type=float, required=True, help="total detection loss, fraction")
    pw = ss.add_mutually_exclusive_group(required=True)
    pw.add_argument("--powers", type=parse_range, help="incident pump powers in W (start:stop:step or list)")
    pw.add_argument("--powers-mw", type=parse_range, help="incident pump powers in mW")
    ss.add_argument("--jitter-db", type=float, default=0.0)
    ss.add_argument("--seed", type=int, default=0)
    ss.add_argument("-o", "--output", help="CSV path (default: $%s/sweep.csv)" % OUTPUT_DIR_ENV)

    st = simsub.add_parser("trace", help="scanned noise trace CSV + JSON sidecar")
    lv = st.add_argument_group("noise levels (dB, or derive from the OPA model)")
    lv.add_argument("--r-plus-db", type=float)
    lv.add_argument("--r-minus-db", type=float)
    lv.add_argument("--a-pct-per-w", type=float)
    lv.add_argument("--loss", type=float)
    lv.add_argument("--pump-mw", type=float)
    st.add_argument("--shot", action="store_true", help="emit a flat shot-noise reference")
    st.add_argument("--seed", type=int, default=0)
    _scan_args(st)
    st.add_argument("-o", "--output", help="CSV path (default: $%s/trace.csv)" % OUTPUT_DIR_ENV)

    # fit
    fit = sub.add_parser("fit", help="fit sweep or trace files")
    fitsub = fit.add_subparsers(dest="what", required=True)
    fs = fitsub.add_parser("sweep", help="fit (L, a) to pump-sweep CSVs")
    fs.add_argument("files", nargs="+")
    fs.add_argument("--fixed-loss", type=float, help="hold L fixed and fit a only")
    fs.add_argument("--oracle", action="store_true", help="cross-check against exhaustive grid search")
    fs.add_argument("--l-step", type=float, default=0.001)
    fs.add_argument("--a-step-pct-per-w", type=float, default=1.0, help="oracle a step, %%/W")
    fs.add_argument("--a-max-pct-per-w", type=float, default=5000.0, help="oracle a upper bound, %%/W")
    fs.add_argument("--refine-levels", type=int, default=2)
    fs.add_argument("--strict", action="store_true", help="exit 2 if the fit does not converge")
    fs.add_argument("--jobs", type=int, default=1, help="fit several files concurrently")
    fs.add_argument("-o", "--output", help="JSON path (single input); several inputs write STEM.fit.json")

    ft = fitsub.add_parser("trace", help="fit (R+, R-, offset) to a trace CSV with sidecar")
    ft.add_argument("files", nargs="+")
    ft.add_argument("--strict", action="store_true")
    ft.add_argument("--jobs", type=int, default=1)
    ft.add_argument("-o", "--output")

    # budget
    b = sub.add_parser("budget", help="compose a detection-loss budget")
    b.add_argument("--from", dest="budget_file", help="JSON array of {name, loss, provenance}")
    b.add_argument("--module-t", action=_BudgetElement, const="module", metavar="T",
                   help="module transmittance; contributes 1 - sqrt(T)")
    b.add_argument("--coupler", action=_BudgetElement, const="coupler", metavar="MEAS/NOM")
    b.add_argument("--responsivity", action=_BudgetElement, const="responsivity", metavar="A_PER_W@NM")
    b.add_argument("--electronic", action=_BudgetElement, const="electronic", metavar="LOSS")
    b.add_argument("--electronic-db", action=_BudgetElement, const="electronic-db", metavar="CLEARANCE_DB")
    b.add_argument("--element", action=_BudgetElement, const="element", metavar="NAME=LOSS")
    b.add_argument("--save", help="write the element list as budget JSON")
    b.add_argument("-o", "--output", help="write the result JSON here instead of stdout")

    # report
    r = sub.add_parser("report", help="reproduce the published operating point")
    r.add_argument("--loss", type=float, default=0.386)
    r.add_argument("--a-pct-per-w", type=float, default=1034.0)
    r.add_argument("--pump-mw", type=float, default=330.0)
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--format", choices=("table", "json"), default="table")
    r.add_argument("-o", "--output")
    return parser


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _emit(text: str, path=None) -> None:
    if path:
        atomic_write_text(path, text if text.endswith("\n") else text + "\n")
    else:
        print(text)


def cmd_simulate(args) -> int:
    if args.what == "sweep":
        powers = args.powers if args.powers is not None else args.powers_mw / 1000.0
        sweep = simulate_sweep(pct_per_w_to_si(args.a_pct_per_w), args.loss, powers,
                               jitter_db=args.jitter_db, seed=args.seed)
        out = _resolve_output(args.output, "sweep.csv")
        sweep.save(out)
        print(out, file=sys.stderr)
        return EXIT_OK

    config = ScanConfig(
        scan_frequency=args.scan_frequency, duration=args.duration, sample_rate=args.sample_rate,
        phase_span=args.phase_span, phase_offset=args.phase_offset,
        vbw=args.vbw if args.vbw > 0 else None, rbw=args.rbw,
        noise_sigma_db=args.jitter_db, rng_seed=args.seed,
    )
    if args.shot:
        trace = shot_reference(config)
    else:
        if args.r_plus_db is not None and args.r_minus_db is not None:
            r_plus, r_minus = from_db(args.r_plus_db), from_db(args.r_minus_db)
        elif None not in (args.a_pct_per_w, args.loss, args.pump_mw):
            r_minus, r_plus = noise_levels(pct_per_w_to_si(args.a_pct_per_w), args.pump_mw / 1000.0, args.loss)
        else:
            raise ValueError("give --r-plus-db and --r-minus-db, or --a-pct-per-w, --loss and --pump-mw")
        trace = synthesize(config, r_plus, r_minus)
    out = _resolve_output(args.output, "trace.csv")
    csv_path, sidecar = write_trace(trace, out)
    print(csv_path, file=sys.stderr)
    print(sidecar, file=sys.stderr)
    return EXIT_OK


def _fit_one_sweep(path, args) -> dict:
    sweep = PumpSweep.load(path)
    result = fit_pump_sweep(sweep, fixed_loss=args.fixed_loss)
    out = result.to_dict()
    out["source"] = str(path)
    if args.strict and not result.converged:
        raise NumericalFailure(f"{path}: fit did not converge after {result.iterations} iterations")
    if args.oracle:
        grid = Grid(l_step=args.l_step, a_step=pct_per_w_to_si(args.a_step_pct_per_w),
                    a_max=pct_per_w_to_si(args.a_max_pct_per_w), refine_levels=args.refine_levels)
        oracle = oracle_fit_pump_sweep(sweep, grid)
        agree = agrees_with_oracle(result, oracle, grid)
        out["oracle"] = {**oracle.to_dict(), "agrees": agree}
        if not agree:
            raise NumericalFailure(
                f"{path}: fit (L={result['L']:.6g}, a={result['a']:.6g}) disagrees with grid search "
                f"(L={oracle['L']:.6g}, a={oracle['a']:.6g}) by more than one grid step"
            )
    return out


def _fit_one_trace(path, args) -> dict:
    result = fit_trace(read_trace(path))
    if args.strict and not result.converged:
        raise NumericalFailure(f"{path}: trace fit did not converge")
    return {**result.to_dict(), "source": str(path)}


def cmd_fit(args) -> int:
    worker = _fit_one_sweep if args.what == "sweep" else _fit_one_trace
    files = [Path(f) for f in args.files]
    for f in files:
        if not f.exists():
            raise ParseError(f"{f}: no such file")
    if len(files) == 1:
        _emit(json.dumps(worker(files[0], args), indent=2), args.output)
        return EXIT_OK

    outdir = Path(args.output) if args.output else output_dir()

    def job(path):
        result = worker(path, args)
        atomic_write_text(outdir / f"{path.stem}.fit.json", json.dumps(result, indent=2) + "\n")
        return path

    with ThreadPoolExecutor(max_workers=max(1, args.jobs)) as pool:
        for path in pool.map(job, files):
            print(outdir / f"{path.stem}.fit.json", file=sys.stderr)
    return EXIT_OK


def cmd_budget(args) -> int:
    elements = []
    if args.budget_file:
        elements.extend(detection.LossBudget.load(args.budget_file).elements)
    for kind, value in getattr(args, "elements", None) or []:
        elements.append(_build_element(kind, value))
    budget = detection.LossBudget(tuple(elements))
    if args.save:
        budget.save(args.save)
    total = budget.total()
    result = {
        "elements": [{"name": e.name, "loss": e.loss, "provenance": e.provenance,
                      "loss_4dp": round(e.loss, 4)} for e in budget.elements],
        "total": total,
        "total_4dp": round(total, 4),
    }
    _emit(json.dumps(result, indent=2), args.output)
    return EXIT_OK


def cmd_report(args) -> int:
    cfg = ReportConfig(a_pct_per_w=args.a_pct_per_w, loss=args.loss, pump_mw=args.pump_mw,
                       seed=args.seed, scan=ScanConfig(rng_seed=args.seed))
    report = run_report(cfg)
    text = report.to_json() if args.format == "json" else report.to_table()
    _emit(text, args.output)
    if report.error is not None:
        print(f"error: {report.error}", file=sys.stderr)
        return EXIT_NUMERICAL
    return EXIT_OK if report.all_pass else EXIT_INVALID


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "budget": cmd_budget, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except NumericalFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except NonIdentifiableError as exc:
        print(f"error: non-identifiable: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ParseError as exc:
        print(f"error: parse error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
