"""Command-line entry point.

Exit codes: 0 success, 1 invariant violation detected, 2 invalid input,
3 resource limit reached.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .engine import InvariantViolation, PassageRecord, ResourceLimitError
from .experiments import check_records, execute
from .manifest import ManifestError, validate_manifest

EXIT_OK, EXIT_VIOLATION, EXIT_INVALID, EXIT_RESOURCE = 0, 1, 2, 3

SUBCOMMAND_KIND = {
    "run": "run",
    "mu": "mu",
    "shape": "shape",
    "diamond": "full_diamond",
    "mgood": "m_good",
    "probe": "growth_probe",
    "tails": "tail_curve",
    "oracle": "oracle",
    "check": "check",
}


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.replace(" ", "").split(",") if v]


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.replace(" ", "").split(",") if v]


def _param(text: str) -> tuple[str, float]:
    key, _, value = text.partition("=")
    if not key or not value:
        raise argparse.ArgumentTypeError(f"expected NAME=VALUE, got {text!r}")
    v = float(value)
    return key, int(v) if v.is_integer() else v


def _add_common(p: argparse.ArgumentParser, kind: str) -> None:
    p.add_argument("--manifest", type=Path, help="JSON manifest; flags override its fields")
    p.add_argument("--seed", type=int, help="master seed (overrides spec.master_seed)")
    p.add_argument("--workers", type=int, default=1, help="replica worker processes (0 = all cores)")
    p.add_argument("--output-dir", dest="output_dir", help="output directory (relative paths resolve "
                   "against $FROGMODEL_OUTPUT_ROOT when set)")
    if kind == "oracle":
        return
    g = p.add_argument_group("initial configuration")
    g.add_argument("--dim", type=int, dest="dimension")
    g.add_argument("--family", choices=["constant", "bernoulli", "geometric", "poisson", "heavy_tail"])
    g.add_argument("--param", type=_param, action="append", help="family parameter NAME=VALUE (repeatable)")
    g.add_argument("--no-condition-origin", dest="condition_origin", action="store_false", default=None)
    p.add_argument("--mode", choices=["identity", "aggregate"])
    p.add_argument("--horizon", type=int)
    if kind not in ("run", "m_good", "check"):
        p.add_argument("--replicas", type=int)
    if kind in ("mu", "shape", "full_diamond", "growth_probe"):
        p.add_argument("--n-schedule", dest="n_schedule", type=_ints, help="comma-separated n values")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="frogmodel", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("exec", help="execute a manifest")
    p.add_argument("manifest", type=Path)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--seed", type=int)
    p.add_argument("--output-dir", dest="output_dir")

    p = sub.add_parser("run", help="simulate one realisation and write its passage record")
    _add_common(p, "run")
    p.add_argument("--source", type=_ints)

    p = sub.add_parser("mu", help="estimate the time constant along directions")
    _add_common(p, "mu")
    p.add_argument("--direction", dest="directions", type=_ints, action="append")
    p.add_argument("--no-ray", dest="ray", action="store_false", default=None)

    p = sub.add_parser("shape", help="shape-convergence experiment")
    _add_common(p, "shape")
    p.add_argument("--direction", dest="directions", type=_ints, action="append")
    p.add_argument("--mu-schedule", dest="mu_schedule", type=_ints)

    p = sub.add_parser("diamond", help="heavy-tailed versus baseline diamond coverage")
    _add_common(p, "full_diamond")
    p.add_argument("--tail-delta", dest="tail_delta", type=float)
    p.add_argument("--heavy-cap", dest="heavy_cap", type=int)

    p = sub.add_parser("mgood", help="m-good occupancy diagnostic")
    _add_common(p, "m_good")
    p.add_argument("--m", type=_ints)
    p.add_argument("--h-d", dest="h_d", type=float)
    p.add_argument("--window", type=int)
    p.add_argument("--replicas", type=int)

    p = sub.add_parser("probe", help="linear growth probe")
    _add_common(p, "growth_probe")
    p.add_argument("--probe-point", dest="probe_points", type=_ints, action="append")
    p.add_argument("--delta-grid", dest="delta_grid", type=_floats)
    p.add_argument("--threshold", type=float)

    p = sub.add_parser("tails", help="empirical survival curve of T(0, x0)")
    _add_common(p, "tail_curve")
    p.add_argument("--x0", type=_ints)
    p.add_argument("--m-grid", dest="m_grid", type=_ints)

    p = sub.add_parser("oracle", help="exact first-passage probabilities of a finite configuration")
    _add_common(p, "oracle")
    p.add_argument("--site", dest="occupancy", type=_ints, action="append",
                   help="x1,...,xd,count (repeatable)")
    p.add_argument("--interval", type=_ints, help="lo,hi: one particle per site on [lo, hi] in d = 1")
    p.add_argument("--source", type=_ints)
    p.add_argument("--horizon", type=int)
    p.add_argument("--budget", type=int)

    p = sub.add_parser("check", help="invariant suite, or validation of saved passage records")
    _add_common(p, "check")
    p.add_argument("--triples", type=int)
    p.add_argument("--pairs", type=int)
    p.add_argument("--records", type=Path, nargs="+", help="record CSV files to validate instead")
    return parser


SPEC_FLAGS = ("dimension", "family", "condition_origin")
MANIFEST_FLAGS = ("output_dir", "mode", "horizon", "replicas", "n_schedule", "mu_schedule", "directions",
                  "source", "ray", "tail_delta", "heavy_cap", "m", "h_d", "window", "probe_points",
                  "delta_grid", "threshold", "x0", "m_grid", "occupancy", "budget", "triples", "pairs")


def manifest_from_args(args, kind: str) -> dict:
    data = {}
    if getattr(args, "manifest", None):
        data = json.loads(Path(args.manifest).read_text())
    data["kind"] = kind
    spec = dict(data.get("spec") or {})
    for key in SPEC_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            spec[key] = v
    if getattr(args, "param", None):
        spec["params"] = dict(args.param)
    if getattr(args, "seed", None) is not None:
        spec["master_seed"] = args.seed
    if spec and kind != "oracle":
        data["spec"] = spec
    for key in MANIFEST_FLAGS:
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    if getattr(args, "interval", None):
        lo, hi = args.interval
        data["occupancy"] = [[x, 1] for x in range(lo, hi + 1)]
    return data


def _report(rep) -> None:
    for line in rep.lines:
        print(line)
    if rep.output_dir is not None:
        print(f"outputs: {rep.output_dir}")


def _check_records(paths) -> int:
    records = [PassageRecord.from_csv(p) for p in paths]
    res = check_records(records)
    for err in res["record_errors"]:
        print(f"record from {err['source']}: {err['error']}")
    for v in res["subadditivity_violations"]:
        print(f"subadditivity violated: x={v['x']} y={v['y']} z={v['z']} "
              f"T(x,z)={v['t_xz']} > T(x,y)+T(y,z)={v['t_xy']}+{v['t_yz']}")
    bad = bool(res["record_errors"] or res["subadditivity_violations"])
    print(f"{len(records)} records checked: {'VIOLATION' if bad else 'ok'}")
    return EXIT_VIOLATION if bad else EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "check" and args.records:
            return _check_records(args.records)
        if args.command == "exec":
            data = json.loads(Path(args.manifest).read_text())
            if args.seed is not None:
                data.setdefault("spec", {})["master_seed"] = args.seed
            if args.output_dir:
                data["output_dir"] = args.output_dir
        else:
            data = manifest_from_args(args, SUBCOMMAND_KIND[args.command])
        manifest = validate_manifest(data)
        rep = execute(manifest, workers=args.workers)
        _report(rep)
        if rep.violated:
            print("invariant violation detected", file=sys.stderr)
            return EXIT_VIOLATION
        return EXIT_OK
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_VIOLATION
    except ResourceLimitError as exc:
        msg = f"resource limit: {exc}"
        if getattr(exc, "snapshot_path", None):
            msg += f" (partial state in {exc.snapshot_path})"
        print(msg, file=sys.stderr)
        return EXIT_RESOURCE
    except (ManifestError, ValueError, KeyError, OSError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
