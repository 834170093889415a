"""Command line front end.

    bloch-homog run CONFIG.toml [--task NAME] [--key value ...]
    bloch-homog gallery list
    bloch-homog gallery NAME --emit-config [--task NAME] [--out FILE]

Exit status: 0 success, 2 invalid input (config or model validation),
3 numerical-quality failure (cell residual or conditioning beyond tolerance).
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from . import gallery
from .bloch import band_functions
from .effective import IllConditionedCellProblem, compute_effective
from .germ import condition_check
from .io import loglog_svg, write_csv, write_json, write_svg
from .lattice import k_grid
from .model import ModelValidationError, validate
from .propagate import cauchy_error, error_sweep, sharpness_probe, worker_count

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL = 0, 2, 3
log = logging.getLogger("bloch_homog")


class NumericalQualityError(RuntimeError):
    pass


def _auto(value, default: bool) -> bool:
    return default if value == "auto" else bool(value)


def _effective(model, K, tol):
    try:
        eff = compute_effective(model, int(K))
    except IllConditionedCellProblem as err:
        raise NumericalQualityError(str(err)) from None
    if eff.residual > tol["residual"] or eff.condition > tol["condition"]:
        raise NumericalQualityError(
            f"cell problem residual {eff.residual:.3e} / condition {eff.condition:.3e} beyond tolerance")
    return eff


def _sweep_outputs(outdir: Path, stem: str, sweep, svg: bool, label: str) -> dict:
    write_csv(outdir / f"{stem}.csv", ["epsilon", "eta", "bound_shape"], sweep.rows())
    if svg and not sweep.identically_small:
        ref = [r[2] for r in sweep.rows()]
        write_svg(outdir / "plot.svg", loglog_svg({label: (sweep.eps, sweep.eta), "slope 1": (sweep.eps, ref)},
                                                  title=f"{label}, slope {sweep.slope:.3f}"))
    return sweep.to_dict()


def run_task(rc: cfgmod.RunConfig) -> dict:
    t = rc.task
    outdir = Path(rc.output["dir"])
    outdir.mkdir(parents=True, exist_ok=True)
    workers = worker_count(rc.output["workers"])
    if rc.kind == "gallery":
        entry = gallery.get(t["entry"], **t["params"])
        model = entry.model
    else:
        model, entry = cfgmod.build_model(rc.model)
    if rc.kind == "validate":
        if model.dim > 1 and int(t["n_theta"]) < 64:
            raise cfgmod.ConfigError("task.n_theta must be at least 64 for d > 1")
        model = dataclasses.replace(model, n_theta=int(t["n_theta"]))
    report = validate(model)
    summary: dict = {"task": rc.kind, "model": model.to_dict() if report.passed else {"name": model.name},
                     "validation": report.to_dict()}
    if not report.passed:
        raise ModelValidationError(report)
    if rc.kind == "validate":
        return summary
    eff = _effective(model, t["K"], rc.tolerances)
    summary["effective"] = {"g0": eff.g0, "residual": eff.residual, "condition": eff.condition,
                            "cutoff": eff.cutoff}
    if rc.kind == "effective":
        write_json(outdir / "effective.json", eff.to_dict())
    elif rc.kind == "germ-sweep":
        rep = condition_check(model, eff, n_theta=int(t["n_theta"]), weighted=_auto(t["weighted"], model.has_f),
                              cluster_tol=float(t["cluster_tol"]), zero_tol=float(t["zero_tol"]))
        write_csv(outdir / "germ.csv", rep.table_header(), rep.table_rows())
        summary["conditions"] = rep.to_dict()
    elif rc.kind == "bands":
        pts, _ = k_grid(model.lattice, int(t["n_k"]))
        E = band_functions(model, pts, int(t["K"]), int(t["count"]))
        header = [f"k_{i + 1}" for i in range(model.dim)] + [f"E_{j + 1}" for j in range(E.shape[1])]
        write_csv(outdir / "bands.csv", header, [list(k) + list(e) for k, e in zip(pts, E)])
        summary["bands"] = {"n_points": len(pts), "min_lowest": float(E[:, 0].min())}
    elif rc.kind == "error-sweep":
        sw = error_sweep(model, eff, eps_ladder=t["eps"], tau=float(t["tau"]), s=float(t["s"]),
                         n_k=int(t["n_k"]), n_dirs=int(t["n_dirs"]), radial_points=int(t["radial_points"]),
                         refine=bool(t["refine"]), sandwiched=_auto(t["sandwiched"], model.has_f),
                         workers=workers)
        summary["sweep"] = _sweep_outputs(outdir, "sweep", sw, rc.output["svg"], f"eta_{t['s']:g}")
        summary["slope"], summary["intercept"] = sw.slope, sw.intercept
        summary["verdict"] = "identically small" if sw.identically_small else (
            "pass" if sw.verdict() else "fail")
    elif rc.kind == "sharpness":
        theta0 = t["theta0"] or [0.0] * (model.dim - 1) + [1.0]
        rep = sharpness_probe(model, eff, theta0, tau=float(t["tau"]), s=float(t["s"]),
                              eps_ladder=t["eps"] or None, sandwiched=_auto(t["sandwiched"], model.has_f))
        write_csv(outdir / "sharpness.csv", ["epsilon", "t", "eta", "ratio"],
                  [[e, tt, v, v / e] for e, tt, v in zip(rep.eps, rep.t, rep.eta)])
        summary["sharpness"] = rep.to_dict()
        summary["verdict"] = "pass" if abs(rep.exponent - rep.expected) <= 0.1 else "fail"
    elif rc.kind == "cauchy":
        rep = cauchy_error(model, eff, eps_ladder=t["eps"], tau=float(t["tau"]), s=float(t["s"]),
                           sigma=float(t["sigma"]), n_xi=int(t["n_xi"]), sandwiched=bool(t["sandwiched"]))
        write_csv(outdir / "cauchy.csv", ["epsilon", "error", "normalized"],
                  [[e, v, q] for e, v, q in zip(rep.eps, rep.error, rep.normalized)])
        summary["cauchy"] = rep.to_dict()
        if rc.output["svg"]:
            write_svg(outdir / "plot.svg", loglog_svg({"error": (rep.eps, rep.error)}, title="Cauchy error",
                                                      ylabel="L2 error"))
    elif rc.kind == "gallery":
        checks = {}
        if "g0" in entry.references:
            ref = np.atleast_2d(np.asarray(entry.references["g0"], dtype=complex))
            checks["g0"] = float(np.abs(eff.g0 - ref).max())
        summary["gallery"] = {"name": entry.name, "g0": eff.g0, "references": entry.references,
                              "deviations": checks}
        write_json(outdir / "gallery.json", summary["gallery"])
    return summary


def cmd_run(args) -> int:
    try:
        rc = cfgmod.load(args.config, args.overrides)
    except cfgmod.ConfigError as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    outdir = Path(rc.output["dir"])
    try:
        summary = run_task(rc)
        status = EXIT_OK
    except (ModelValidationError, cfgmod.ConfigError) as err:
        summary, status = {"task": rc.kind, "error": str(err)}, EXIT_INVALID
        print(f"invalid input: {err}", file=sys.stderr)
    except NumericalQualityError as err:
        summary, status = {"task": rc.kind, "error": str(err)}, EXIT_NUMERICAL
        print(f"numerical quality failure: {err}", file=sys.stderr)
    summary["exit_status"] = status
    summary["config"] = rc.to_dict()
    write_json(outdir / "summary.json", summary)
    if status == EXIT_OK:
        print(f"wrote {outdir / 'summary.json'}")
    return status


def cmd_gallery(args) -> int:
    if args.name in (None, "list"):
        for name in gallery.list_entries() + ["magnetic_schrodinger"]:
            print(f"{name:24s} {gallery.DESCRIPTIONS.get(name, '')}")
        return EXIT_OK
    if not args.emit_config:
        print("nothing to do: pass --emit-config", file=sys.stderr)
        return EXIT_INVALID
    try:
        text = cfgmod.emit_gallery_config(args.name, task=args.task)
    except (KeyError, NotImplementedError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_INVALID
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bloch-homog", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the task described by a config file")
    r.add_argument("config")
    r.add_argument("overrides", nargs=argparse.REMAINDER,
                   help="--key value pairs overriding task parameters (dotted keys address other sections)")
    g = sub.add_parser("gallery", help="list gallery entries or export one as a config")
    g.add_argument("name", nargs="?")
    g.add_argument("--emit-config", action="store_true")
    g.add_argument("--task", default="effective", choices=cfgmod.TASKS)
    g.add_argument("--out")
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return cmd_run(args)
    return cmd_gallery(args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
