"""Command line entry point.

Exit codes: 0 success (including reported non-separation), 1 validation
failure, 2 resource limit, 3 I/O or parse failure.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .corona import (
    CoronaParams,
    build_top,
    build_tree,
    j_mass_bound,
    lf_mass_bound,
    tree_to_json,
)
from .curvature import curvature_exact, curvature_sampled
from .errors import ParseError, ResourceError, ValidationError
from .harness import (
    ExperimentConfig,
    build_measure,
    run_comparability,
    run_discrimination,
    write_manifest,
)
from .lattice import (
    LatticeParams,
    build_lattice,
    lattice_invariant_report,
    lattice_to_json,
)
from .measures import Ball, save_measure
from .multiscale import ScaleGrid, beta_p, dump_profiles_csv


def _add_measure_args(sub):
    sub.add_argument("--gen", choices=["segment", "circle", "graph", "cantor"])
    sub.add_argument("--in", dest="infile", help="measure file (csv or json)")
    sub.add_argument("--count", type=int, default=256)
    sub.add_argument("--length", type=float, default=1.0)
    sub.add_argument("--radius", type=float, default=1.0)
    sub.add_argument("--mass", type=float, default=1.0)
    sub.add_argument("--lip", type=float, default=0.5)
    sub.add_argument("--generation", type=int, default=4)


def _measure_spec(args) -> dict:
    if args.infile:
        return {"gen": "file", "path": args.infile}
    if not args.gen:
        raise ValidationError("pass --gen or --in")
    spec = {"gen": args.gen}
    if args.gen == "segment":
        spec.update(count=args.count, length=args.length, mass=args.mass)
    elif args.gen == "circle":
        spec.update(count=args.count, radius=args.radius, mass=args.mass)
    elif args.gen == "graph":
        spec.update(count=args.count, lip=args.lip, mass=args.mass)
    elif args.gen == "cantor":
        spec.update(generation=args.generation, mass=args.mass)
    return spec


def _grid_for(args, measure) -> ScaleGrid:
    r_max = args.r_max if args.r_max else measure.support_diameter()
    return ScaleGrid(r_max, args.scales, args.ratio)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _emit(args, config: ExperimentConfig, summary: str) -> None:
    out = _out_dir(args)
    write_manifest(config, str(out / "manifest.json"))
    print(summary)


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get("RECTIFY_THREADS", "1"))


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rectify",
        description="Multiscale flatness and curvature diagnostics for point measures",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--out", default="rectify-out")
    parser.add_argument("--threads", type=int, default=None, help="defaults to RECTIFY_THREADS or 1")
    parser.add_argument("--format", dest="fmt", choices=["csv", "json"], default="csv")
    subs = parser.add_subparsers(dest="command", required=True)

    sub = subs.add_parser("generate", help="write a benchmark measure to disk")
    _add_measure_args(sub)

    sub = subs.add_parser("beta", help="flatness of one ball")
    _add_measure_args(sub)
    sub.add_argument("--r", type=float, required=True)
    sub.add_argument("--center-atom", type=int, default=0)
    sub.add_argument("--p", type=float, default=2.0)

    sub = subs.add_parser("squarefn", help="per-atom profiles over a scale grid")
    _add_measure_args(sub)
    sub.add_argument("--r-max", type=float, default=None)
    sub.add_argument("--scales", type=int, default=12)
    sub.add_argument("--ratio", type=float, default=0.5)
    sub.add_argument("--p", type=float, default=1.0)

    sub = subs.add_parser("curvature", help="triple-integral curvature")
    _add_measure_args(sub)
    sub.add_argument("--mode", choices=["exact", "sampled"], default="exact")
    sub.add_argument("--samples", type=int, default=100_000)

    sub = subs.add_parser("lattice", help="build the cell hierarchy and check invariants")
    _add_measure_args(sub)
    sub.add_argument("--a0", type=float, default=2.0)
    sub.add_argument("--c0", type=float, default=1.0)
    sub.add_argument("--levels", type=int, default=8)

    sub = subs.add_parser("corona", help="stopping-time tree from the root cube")
    _add_measure_args(sub)
    sub.add_argument("--a0", type=float, default=2.0)
    sub.add_argument("--c0", type=float, default=125.0)
    sub.add_argument("--levels", type=int, default=10)
    sub.add_argument("--a-hi", type=float, default=150.0)
    sub.add_argument("--tau", type=float, default=0.005)
    sub.add_argument("--alpha", type=float, default=0.25)
    sub.add_argument("--delta", type=float, default=0.25)
    sub.add_argument("--top", action="store_true", help="iterate generations")

    sub = subs.add_parser("comparability", help="curvature vs energy ratio table")
    sub.add_argument("--sizes", default="256,512,1024")
    sub.add_argument("--scales", type=int, default=12)

    sub = subs.add_parser("discriminate", help="rectifiable vs unrectifiable medians")
    sub.add_argument("--rect-count", type=int, default=4096)
    sub.add_argument("--unrect-generation", type=int, default=6)
    sub.add_argument("--scales", type=int, default=12)

    args = parser.parse_args(argv)
    try:
        return _dispatch(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ResourceError as exc:
        print(f"resource error: {exc}", file=sys.stderr)
        return 2
    except (ParseError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


def _dispatch(args) -> int:
    threads = _threads(args)
    if args.command == "generate":
        spec = _measure_spec(args)
        measure = build_measure(spec, args.seed)
        config = ExperimentConfig("generate", measure=spec, seed=args.seed, threads=threads, fmt=args.fmt)
        out = _out_dir(args)
        path = out / f"measure.{args.fmt}"
        save_measure(measure, str(path), args.fmt)
        _emit(args, config, f"wrote {measure.count} atoms to {path}")
        return 0

    if args.command == "beta":
        spec = _measure_spec(args)
        measure = build_measure(spec, args.seed)
        config = ExperimentConfig(
            "beta",
            measure=spec,
            options={"r": args.r, "center_atom": args.center_atom, "p": args.p},
            seed=args.seed,
            threads=threads,
            fmt=args.fmt,
        )
        ball = Ball(measure.positions[args.center_atom], args.r)
        est = beta_p(measure, ball, args.p)
        _emit(args, config, f"beta_{args.p:g} = {est.beta:.6e} (mass {est.mass_in_ball:.6g}, {est.mode})")
        return 0

    if args.command == "squarefn":
        spec = _measure_spec(args)
        measure = build_measure(spec, args.seed)
        grid = _grid_for(args, measure)
        config = ExperimentConfig(
            "squarefn",
            measure=spec,
            grid={"r_max": grid.r_max, "count": grid.count, "ratio": grid.ratio},
            options={"p": args.p},
            seed=args.seed,
            threads=threads,
            fmt=args.fmt,
        )
        out = _out_dir(args)
        dump_profiles_csv(measure, grid, args.p, str(out / "profiles.csv"), str(out / "summary.csv"))
        _emit(args, config, f"wrote profiles for {measure.count} atoms x {grid.count} scales")
        return 0

    if args.command == "curvature":
        spec = _measure_spec(args)
        measure = build_measure(spec, args.seed)
        config = ExperimentConfig(
            "curvature",
            measure=spec,
            options={"mode": args.mode, "samples": args.samples},
            seed=args.seed,
            threads=threads,
            fmt=args.fmt,
        )
        if args.mode == "exact":
            result = curvature_exact(measure)
        else:
            result = curvature_sampled(measure, args.samples, args.seed)
        out = _out_dir(args)
        with open(out / "curvature.json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "value": result.value,
                    "mode": result.mode,
                    "triples": result.triples_evaluated,
                    "stderr": result.stderr,
                    "seed": result.seed,
                },
                fh,
                sort_keys=True,
            )
        _emit(args, config, f"c2 = {result.value:.10g} ({result.mode})")
        return 0

    if args.command == "lattice":
        spec = _measure_spec(args)
        measure = build_measure(spec, args.seed)
        params = LatticeParams(a0=args.a0, c0=args.c0, max_levels=args.levels)
        lattice = build_lattice(measure, params)
        report = lattice_invariant_report(lattice, measure)
        config = ExperimentConfig(
            "lattice",
            measure=spec,
            options={"a0": args.a0, "c0": args.c0, "levels": args.levels},
            seed=args.seed,
            threads=threads,
            fmt=args.fmt,
        )
        out = _out_dir(args)
        with open(out / "lattice.json", "w", encoding="utf-8") as fh:
            fh.write(lattice_to_json(lattice))
        _emit(args, config, f"{len(lattice.cubes)} cubes, {report.total} invariant violations")
        return 0 if report.total == 0 else 1

    if args.command == "corona":
        spec = _measure_spec(args)
        measure = build_measure(spec, args.seed)
        lattice = build_lattice(measure, LatticeParams(a0=args.a0, c0=args.c0, max_levels=args.levels))
        params = CoronaParams(a_hi=args.a_hi, tau=args.tau, alpha=args.alpha, delta=args.delta)
        config = ExperimentConfig(
            "corona",
            measure=spec,
            options={
                "a0": args.a0,
                "c0": args.c0,
                "levels": args.levels,
                "a_hi": args.a_hi,
                "tau": args.tau,
                "alpha": args.alpha,
                "delta": args.delta,
                "top": args.top,
            },
            seed=args.seed,
            threads=threads,
            fmt=args.fmt,
        )
        out = _out_dir(args)
        tree = build_tree(lattice, measure, lattice.root_id, params)
        with open(out / "tree.json", "w", encoding="utf-8") as fh:
            fh.write(tree_to_json(tree, lattice))
        lf_lhs, lf_rhs = lf_mass_bound(tree, measure, lattice)
        j_lhs, j_rhs = j_mass_bound(tree, lattice)
        summary = (
            f"tree: {len(tree.tree)} cubes, {len(tree.stop)} stopped; "
            f"LF bound {lf_lhs:.3g} <= {lf_rhs:.3g}; J bound {j_lhs:.3g} <= {j_rhs:.3g}"
        )
        if args.top:
            top = build_top(lattice, measure, lattice.root_id, params)
            with open(out / "top.json", "w", encoding="utf-8") as fh:
                json.dump(
                    {
                        "generations": top.generations,
                        "id_h": sorted(top.id_h),
                        "id_u": sorted(top.id_u),
                        "b_class": sorted(top.b_class),
                    },
                    fh,
                    sort_keys=True,
                )
            summary += f"; top: {len(top.generations)} generations"
        _emit(args, config, summary)
        return 0

    if args.command == "comparability":
        sizes = tuple(int(s) for s in args.sizes.split(","))
        config = ExperimentConfig(
            "comparability",
            options={"sizes": list(sizes), "scales": args.scales},
            seed=args.seed,
            threads=threads,
            fmt=args.fmt,
        )
        result = run_comparability(sizes=sizes, scales=args.scales, seed=args.seed, threads=threads)
        out = _out_dir(args)
        with open(out / "comparability.csv", "w", encoding="utf-8") as fh:
            fh.write(result.csv() + "\n")
        write_manifest(config, str(out / "manifest.json"))
        print(result.csv())
        if not result.ok:
            for v in result.violations:
                print(f"violation: {v}", file=sys.stderr)
            return 1
        print(f"band {result.band:.3g}, max drift {result.max_drift:.3g}")
        return 0

    if args.command == "discriminate":
        config = ExperimentConfig(
            "discriminate",
            options={
                "rect_count": args.rect_count,
                "unrect_generation": args.unrect_generation,
                "scales": args.scales,
            },
            seed=args.seed,
            threads=threads,
            fmt=args.fmt,
        )
        result = run_discrimination(
            {"gen": "segment", "count": args.rect_count, "label": "segment"},
            {"gen": "cantor", "generation": args.unrect_generation, "label": "cantor"},
            scales=args.scales,
            seed=args.seed,
        )
        out = _out_dir(args)
        with open(out / "discrimination.json", "w", encoding="utf-8") as fh:
            json.dump(
                {
                    "rectifiable": {
                        "label": result.rectifiable.label,
                        "medians": {str(k): v for k, v in result.rectifiable.medians.items()},
                        "increment_per_scale": result.rectifiable.increment_per_scale,
                        "tail_fraction": result.rectifiable.tail_fraction,
                        "slope": result.rectifiable.slope,
                    },
                    "unrectifiable": {
                        "label": result.unrectifiable.label,
                        "medians": {str(k): v for k, v in result.unrectifiable.medians.items()},
                        "increment_per_scale": result.unrectifiable.increment_per_scale,
                        "tail_fraction": result.unrectifiable.tail_fraction,
                        "slope": result.unrectifiable.slope,
                    },
                    "separated": result.separated,
                },
                fh,
                sort_keys=True,
            )
        write_manifest(config, str(out / "manifest.json"))
        if not result.separated and not result.violations:
            print("no separation")
        else:
            print(f"separated: {result.separated}")
        if result.violations:
            for v in result.violations:
                print(f"violation: {v}", file=sys.stderr)
            return 1
        return 0

    raise ValidationError(f"unknown command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
