"""Command-line entry point: ``bellfam <command> ...``.

Every command prints its JSON result, writes it (or a CSV) to ``--out``
and records a manifest with SHA-256 digests at ``<out>.manifest.json``.
Exit status is 0 only when the command's own checks pass.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classical import classical_maximum, default_threads
from .family import (
    APPENDIX_C,
    ConstructionError,
    generate_family,
    preset_333,
    preset_appendix_ch,
)
from .inequality import BellInequality, InputError, ResourceError, format_fraction, load_inequality
from .optimize import (
    NoViolationError,
    critical_efficiency_numeric,
    default_scaling_grid,
    entanglement_entropy,
    extrapolate_start,
    fit_symmetric_family,
    optimize_angles,
    scaling_exponents,
    seesaw_best,
)
from .quantum import (
    eta_crit_closed_form,
    massar_pironio_lower_bound,
    robustness,
)

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_VERIFY = 0, 1, 2, 3
PRESETS = {"333": preset_333, "appendix": preset_appendix_ch}


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


class Run:
    """Collects output files and writes the manifest for one command."""

    def __init__(self, command: str, args: argparse.Namespace):
        self.command = command
        self.params = {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}
        self.started = time.time()
        self.files: list[Path] = []

    def write(self, path, text: str) -> Path:
        path = Path(path)
        if path.parent != Path(""):
            path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.files.append(path)
        return path

    def finish(self, manifest_path) -> None:
        manifest = {
            "command": self.command,
            "parameters": self.params,
            "seed": self.params.get("seed"),
            "version": __version__,
            "started": _dt.datetime.fromtimestamp(self.started, _dt.timezone.utc).isoformat(),
            "wall_time_s": round(time.time() - self.started, 3),
            "outputs": {str(p): sha256(p) for p in self.files},
        }
        Path(manifest_path).write_text(dump_json(manifest), encoding="utf-8")


def _emit(run: Run, args, result: dict, default_out: str) -> None:
    out = args.out or default_out
    text = dump_json(result)
    sys.stdout.write(text)
    run.write(out, text)
    run.finish(f"{out}.manifest.json")


def _load(args):
    if getattr(args, "preset", None):
        return PRESETS[args.preset]()
    if getattr(args, "ineq", None):
        return load_inequality(args.ineq)
    raise InputError("one of --ineq or --preset is required")


# -- commands -------------------------------------------------------------------

def cmd_gen(args) -> int:
    run = Run("gen", args)
    fam = generate_family(args.n, args.m, cap=args.cap)
    check = classical_maximum(fam.inequality, cap=args.cap, threads=args.threads)
    if check.maximum != 0:
        print(f"verification failed: classical maximum {check.maximum} != 0", file=sys.stderr)
        return EXIT_VERIFY
    out = args.out or f"family_{args.n}_{args.m}.json"
    text = fam.inequality.dumps() + "\n"
    sys.stdout.write(text)
    run.write(out, text)
    meta = fam.metadata()
    meta["classical_maximum"] = format_fraction(check.maximum)
    run.write(f"{out}.meta.json", dump_json(meta))
    run.finish(f"{out}.manifest.json")
    return EXIT_OK


def cmd_classical(args) -> int:
    run = Run("classical", args)
    ineq = _load(args)
    res = classical_maximum(ineq, cap=args.cap, max_argmax=args.max_argmax, threads=args.threads)
    exact = isinstance(ineq, BellInequality)
    if exact:
        ok = res.maximum <= ineq.classical_bound
        shown_max, shown_bound = format_fraction(res.maximum), format_fraction(ineq.classical_bound)
    else:
        ok = res.maximum <= ineq.classical_bound + 1e-12
        shown_max, shown_bound = float(res.maximum), float(ineq.classical_bound)
    result = {
        "max": shown_max,
        "classical_bound": shown_bound,
        "exact": bool(exact),
        "n_argmax": res.n_argmax,
        "sample_argmax_bitmask": res.argmax[0].to_bits() if res.argmax else None,
        "within_bound": bool(ok),
    }
    _emit(run, args, result, "classical.json")
    return EXIT_OK if ok else EXIT_FAIL


def _report(n, m):
    closed = eta_crit_closed_form(n, m)
    return closed, massar_pironio_lower_bound(n, m), robustness(closed)


def cmd_report(args) -> int:
    run = Run("report", args)
    closed, lower, rob = _report(args.n, args.m)
    result = {"eta_closed": format_fraction(closed), "lower_bound": format_fraction(lower),
              "robustness": format_fraction(rob)}
    _emit(run, args, result, "report.json")
    return EXIT_OK


def cmd_eta_crit(args) -> int:
    run = Run("eta-crit", args)
    closed, lower, rob = _report(args.n, args.m)
    result = {"closed_form": format_fraction(closed), "lower_bound": format_fraction(lower),
              "robustness": float(rob)}
    _emit(run, args, result, "eta_crit.json")
    return EXIT_OK


def cmd_scan(args) -> int:
    run = Run("scan", args)
    ineq = _load(args)
    if not isinstance(ineq, BellInequality):
        raise InputError("scan needs a permutation-symmetric inequality")
    etas = np.linspace(args.eta_min, args.eta_max, args.steps)
    history, rows = [], []
    for eta in sorted(etas, reverse=True):
        warm = extrapolate_start(history, eta, args.eta_crit_guess)
        r = optimize_angles(ineq, float(eta), restarts=args.restarts, seed=args.seed, warm_starts=warm)
        history.append((float(eta), r))
        rows.append(r)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["eta", "alpha"] + [f"phi_{j + 1}" for j in range(ineq.m)] + ["violation"])
    for r in sorted(rows, key=lambda r: r.eta):
        writer.writerow([repr(r.eta), repr(r.alpha)] + [repr(float(p)) for p in r.phis] + [repr(r.value)])
    out = args.out or "scan.csv"
    sys.stdout.write(buf.getvalue())
    run.write(out, buf.getvalue())
    run.finish(f"{out}.manifest.json")
    return EXIT_OK


def cmd_eta_crit_numeric(args) -> int:
    run = Run("eta-crit-numeric", args)
    ineq = _load(args)
    try:
        th = critical_efficiency_numeric(ineq, tol=args.tol, restarts=args.restarts, seed=args.seed)
    except NoViolationError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAIL
    result = {"eta_crit": th.eta_crit, "lower": th.lower, "upper": th.upper, "tol": args.tol,
              "steps": [{"eta": e, "violates": v} for e, v in th.steps]}
    if isinstance(ineq, BellInequality) and 2 <= ineq.m <= ineq.n:
        result["closed_form"] = format_fraction(eta_crit_closed_form(ineq.n, ineq.m))
    _emit(run, args, result, "eta_crit_numeric.json")
    return EXIT_OK


def cmd_seesaw(args) -> int:
    run = Run("seesaw", args)
    ineq = _load(args)
    r = seesaw_best(ineq, args.eta, seeds=range(args.seed, args.seed + args.seeds))
    overlap, alpha = fit_symmetric_family(r.state, r.measurements)
    result = {
        "eta": args.eta, "value": r.value, "converged": r.converged, "rounds": r.rounds,
        "state": [float(x) for x in r.state],
        "measurements": np.asarray(r.measurements).tolist(),
        "family_overlap": overlap, "family_alpha": alpha,
        "entanglement_entropy": entanglement_entropy(r.state),
    }
    _emit(run, args, result, "seesaw.json")
    return EXIT_OK


def cmd_scaling(args) -> int:
    run = Run("scaling", args)
    ineq = _load(args) if (args.ineq or args.preset) else preset_333()
    grid = default_scaling_grid(args.eta_crit, num=args.num, lo=args.delta_min, hi=args.delta_max)
    fit = scaling_exponents(ineq, grid, eta_crit=args.eta_crit, restarts=args.restarts, seed=args.seed)
    _emit(run, args, fit.to_dict(), "slopes.json")
    return EXIT_FAIL if fit.partial else EXIT_OK


def appendix_report(seed: int = 0, tol: float = 1e-3, seeds: int = 10) -> dict:
    ineq = preset_appendix_ch()
    c = APPENDIX_C
    th = critical_efficiency_numeric(ineq, tol=tol, seed=seed)
    bound_at_c = (2 - 2 * c) / c ** 2
    tsirelson_ch = (math.sqrt(2) - 1) / 2
    above = seesaw_best(ineq, c + 0.01, seeds=range(seed, seed + seeds))
    grid = [float(e) for e in np.linspace(c - 0.02, c + 0.02, 5)]
    scan = [{"eta": e, "value": seesaw_best(ineq, e, seeds=range(seed, seed + seeds)).value} for e in grid]
    entropy = entanglement_entropy(above.state)
    return {
        "c": c,
        "threshold": th.eta_crit,
        "threshold_ok": abs(th.eta_crit - c) <= tol,
        "bound_at_c": bound_at_c,
        "tsirelson_ch": tsirelson_ch,
        "bound_ok": abs(bound_at_c - tsirelson_ch) <= 1e-9,
        "entropy_above_c": entropy,
        "entropy_ok": entropy > 0.95,
        "value_above_c": above.value,
        "scan": scan,
    }


def cmd_appendix(args) -> int:
    run = Run("appendix", args)
    result = appendix_report(seed=args.seed, tol=args.tol)
    _emit(run, args, result, "appendix.json")
    ok = result["threshold_ok"] and result["bound_ok"] and result["entropy_ok"]
    return EXIT_OK if ok else EXIT_FAIL


# -- parser -----------------------------------------------------------------------

def _ineq_args(p, required=True):
    g = p.add_mutually_exclusive_group(required=required)
    g.add_argument("--ineq", help="inequality JSON file")
    g.add_argument("--preset", choices=sorted(PRESETS), help="built-in inequality")


def build_parser() -> argparse.ArgumentParser:
    env_threads = default_threads()
    p = argparse.ArgumentParser(prog="bellfam", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        sp.set_defaults(func=func)
        sp.add_argument("--out", help="output file")
        sp.add_argument("--threads", type=int, default=env_threads,
                        help="worker cap (default: $BELLFAM_THREADS or 1)")
        return sp

    sp = add("gen", cmd_gen, "generate a family inequality and verify its zero bound")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--cap", type=int, default=None, help="max n*m for enumeration")

    sp = add("classical", cmd_classical, "exact classical maximum by enumeration")
    _ineq_args(sp)
    sp.add_argument("--cap", type=int, default=None)
    sp.add_argument("--max-argmax", type=int, default=16)

    for name, func in (("report", cmd_report), ("eta-crit", cmd_eta_crit)):
        sp = add(name, func, "closed-form threshold, lower bound, robustness")
        sp.add_argument("--n", type=int, required=True)
        sp.add_argument("--m", type=int, required=True)

    sp = add("scan", cmd_scan, "optimized violation over an efficiency grid (CSV)")
    _ineq_args(sp)
    sp.add_argument("--eta-min", type=float, required=True)
    sp.add_argument("--eta-max", type=float, default=1.0)
    sp.add_argument("--steps", type=int, default=11)
    sp.add_argument("--eta-crit-guess", type=float, default=0.0,
                    help="anchor for warm-start extrapolation along the grid")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--restarts", type=int, default=20)

    sp = add("eta-crit-numeric", cmd_eta_crit_numeric, "bisect for the numeric threshold")
    _ineq_args(sp)
    sp.add_argument("--tol", type=float, default=1e-3)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--restarts", type=int, default=20)

    sp = add("seesaw", cmd_seesaw, "see-saw over general states and projectors")
    _ineq_args(sp)
    sp.add_argument("--eta", type=float, default=1.0)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--seeds", type=int, default=10, help="number of random starts")

    sp = add("scaling", cmd_scaling, "fit near-threshold power laws")
    _ineq_args(sp, required=False)
    sp.add_argument("--eta-crit", type=float, default=0.5)
    sp.add_argument("--num", type=int, default=10)
    sp.add_argument("--delta-min", type=float, default=1e-4)
    sp.add_argument("--delta-max", type=float, default=0.05)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--restarts", type=int, default=20)

    sp = add("appendix", cmd_appendix, "check the CH-type two-party inequality")
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--tol", type=float, default=1e-3)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads:
        os.environ.setdefault("BELLFAM_THREADS", str(args.threads))
    try:
        return args.func(args)
    except (InputError, ResourceError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ConstructionError as exc:
        print(f"verification failed: {exc}", file=sys.stderr)
        return EXIT_VERIFY


if __name__ == "__main__":
    sys.exit(main())
