"""Command-line front door: build, embed, certify, sweep, doubling, envelope.

Exit codes: 0 success, 2 precondition failure, 3 hard invariant violation,
4 I/O or schema error. Errors are emitted as JSON on stderr. All output files
are stable-ordered and embed the run configuration that produced them, so a
rerun with identical flags is byte-identical.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ProcessPoolExecutor

from . import certifier, doubling, embedlab, metric
from .errors import (EXIT_OK, EXIT_PRECONDITION, EXIT_SCHEMA, EXIT_VIOLATION,
                     InvariantViolation, LaaksoLabError, PreconditionError,
                     SchemaError)
from .instance import Params, build_instance, instance_from_dict, instance_to_dict
from .serialize import FORMAT_VERSION, dumps_stable, loads_file, require_keys

SEED_ENV_VAR = "LAAKSO_LAB_SEED"


def _default_seed() -> int:
    raw = os.environ.get(SEED_ENV_VAR)
    return int(raw) if raw else 0


def _write(path: str, text: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(text)


def _emit_error(exc: Exception, code: int) -> int:
    doc = {"error": {"type": type(exc).__name__, "message": str(exc), "exit_code": code}}
    sys.stderr.write(dumps_stable(doc))
    return code


def _load_instance(path: str):
    return instance_from_dict(loads_file(path))


def _load_embedding(path: str):
    return metric.embedding_from_dict(loads_file(path))


def _run_config(command: str, options: dict) -> dict:
    return {"command": command, "options": options}


# ---------------------------------------------------------------- build


def _cmd_build(args) -> int:
    if args.eps_for is not None:
        d, D, p_formula = args.eps_for
        if p_formula != args.p:
            raise PreconditionError(
                f"--eps-for exponent {p_formula} disagrees with --p {args.p}")
        eps = certifier.epsilon_for(int(d), D, p_formula)
    elif args.eps is not None:
        eps = args.eps
    else:
        raise PreconditionError("one of --eps or --eps-for is required")
    try:
        params = Params(p=args.p, eps=eps, k=args.k)
    except ValueError as exc:
        raise PreconditionError(str(exc)) from exc
    inst = build_instance(params, max_points=args.max_points)
    rc = _run_config("build", {"p": args.p, "eps": eps, "k": args.k,
                               "max_points": args.max_points})
    _write(args.out, dumps_stable(instance_to_dict(inst, run_config=rc)))
    leaf = inst.edge_lengths[list(inst.edges_by_level[params.k])]
    print(f"n={inst.n} points, edges per level="
          f"{[len(lv) for lv in inst.edges_by_level]}, "
          f"level-{params.k} lengths in [{leaf.min()}, {leaf.max()}]")
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- embed


def _optimizer_config(args, seed: int) -> embedlab.OptimizerConfig:
    try:
        return embedlab.OptimizerConfig(
            seed=seed,
            restarts=args.restarts,
            iterations=args.iterations,
            step_size=args.step_size,
            temperature=args.temperature,
            init=args.init,
        )
    except ValueError as exc:
        raise PreconditionError(str(exc)) from exc


def _cmd_embed(args) -> int:
    inst = _load_instance(args.instance)
    seed = args.seed if args.seed is not None else _default_seed()
    if args.method == "projection":
        emb = embedlab.gaussian_projection(inst, args.d, seed, q=args.q)
    else:
        cfg = _optimizer_config(args, seed)
        emb = embedlab.stress_minimize(inst, args.d, cfg)
    report = metric.distortion(inst, emb, source_q=args.q)
    rc = _run_config("embed", {
        "instance": os.path.basename(args.instance), "method": args.method,
        "d": args.d, "seed": seed, "q": args.q, "restarts": args.restarts,
        "iterations": args.iterations, "step_size": args.step_size,
        "temperature": args.temperature, "init": args.init,
    })
    _write(args.out, dumps_stable(metric.embedding_to_dict(emb, run_config=rc)))
    print(metric.REPORT_CSV_HEADER)
    print(metric.report_csv_row(report, inst, args.d, args.method, seed))
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- certify


def _cmd_certify(args) -> int:
    inst = _load_instance(args.instance)
    emb = _load_embedding(args.embedding)
    if emb.q != inst.params.p:
        raise PreconditionError(
            f"embedding exponent q={emb.q} differs from instance p={inst.params.p}")
    report = metric.distortion(inst, emb)
    if report.max_expansion > 1.0 + certifier.NONEXPANSIVE_TOL:
        if not args.normalize:
            raise PreconditionError(
                f"embedding is expansive (max_expansion={report.max_expansion}); "
                "rerun with --normalize")
        emb = metric.normalize_nonexpansive(inst, emb)
        report = metric.distortion(inst, emb)
    measured = max(1.0, report.distortion)
    cp = certifier.certifier_params(inst, emb.d, measured)
    cap = certifier.potential_cap(emb.d, inst.params.p)
    audit = certifier.cap_audit(inst, emb)
    doc = {
        "params": inst.params.to_dict(),
        "cp": cp.to_dict(),
        "cap": cap,
        "cap_audit": audit.to_dict(),
        "certified_lower_bound": certifier.certified_lower_bound(inst, emb.d),
        "measured_distortion": report.distortion,
        "witness": None,
        "run_config": _run_config("certify", {
            "instance": os.path.basename(args.instance),
            "embedding": os.path.basename(args.embedding),
            "normalize": bool(args.normalize), "verbose": bool(args.verbose),
        }),
    }
    code = EXIT_OK
    if not cp.lemma_applicable:
        doc["note"] = ("width eps exceeds the threshold for the measured distortion; "
                       "growth audit not applicable")
        code = EXIT_PRECONDITION
    else:
        witness = certifier.witness_chain(inst, emb, cp)
        doc["witness"] = witness.to_dict()
        if args.verbose:
            doc["trace"] = [
                certifier.growth_step_trace(inst, emb, inst.edges[eid])
                for eid, _ in witness.chain[:-1]
            ]
        if witness.violated or not audit.ok:
            code = EXIT_VIOLATION
    _write(args.out, dumps_stable(doc))
    print(f"measured distortion {report.distortion}, "
          f"certified lower bound {doc['certified_lower_bound']}, "
          f"lemma applicable: {cp.lemma_applicable}")
    print(f"wrote {args.out}")
    return code


# ---------------------------------------------------------------- sweep


def _parse_grid(doc: dict):
    require_keys(doc, ("p", "eps", "k", "d", "seeds"), "sweep grid")

    def as_list(value, name):
        if not isinstance(value, list) or not value:
            raise SchemaError(f"grid field {name!r} must be a non-empty list")
        return value

    try:
        params_list = [
            Params(p=float(p), eps=float(eps), k=int(k))
            for p in as_list(doc["p"], "p")
            for eps in as_list(doc["eps"], "eps")
            for k in as_list(doc["k"], "k")
        ]
    except ValueError as exc:
        raise SchemaError(f"invalid grid params: {exc}") from exc
    d_list = [int(d) for d in as_list(doc["d"], "d")]
    seeds = [int(s) for s in as_list(doc["seeds"], "seeds")]
    methods = doc.get("methods", ["projection", "stress"])
    if not isinstance(methods, list) or not methods:
        raise SchemaError("grid field 'methods' must be a non-empty list")
    opt = doc.get("optimizer", {})
    if not isinstance(opt, dict):
        raise SchemaError("grid field 'optimizer' must be an object")
    try:
        cfg = embedlab.OptimizerConfig(**opt)
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"invalid optimizer config: {exc}") from exc
    return params_list, d_list, cfg, seeds, methods


def _sweep_cell_star(cell_args):
    return embedlab.sweep_cell(*cell_args)


def _cmd_sweep(args) -> int:
    grid_doc = loads_file(args.grid)
    params_list, d_list, cfg, seeds, methods = _parse_grid(grid_doc)
    cells = [(params, d, cfg, seeds, methods) for params in params_list for d in d_list]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            outcomes = list(pool.map(_sweep_cell_star, cells))
    else:
        outcomes = [_sweep_cell_star(c) for c in cells]
    rows: list[embedlab.SweepRow] = []
    errors: list[str] = []
    for cell_rows, cell_errors in outcomes:
        rows.extend(cell_rows)
        errors.extend(cell_errors)
    result = embedlab.SweepResult(rows, errors)
    _write(args.out_csv, result.to_csv(include_timings=args.timings))
    if args.out_json:
        doc = result.to_dict(include_timings=args.timings)
        doc["run_config"] = _run_config("sweep", {
            "grid": os.path.basename(args.grid), "jobs_independent_output": True,
            "timings": bool(args.timings),
        })
        doc["format"] = FORMAT_VERSION
        _write(args.out_json, dumps_stable(doc))
    print(f"{len(result.rows)} rows, {len(result.errors)} cell errors")
    print(f"wrote {args.out_csv}")
    if result.errors:
        for line in result.errors:
            print(f"cell error: {line}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


# ---------------------------------------------------------------- doubling


def _cmd_doubling(args) -> int:
    inst = _load_instance(args.instance)
    grid = "auto" if args.radii == "auto" else [float(r) for r in args.radii.split(",")]
    est = doubling.doubling_estimate(inst, grid)
    doc = est.to_dict()
    doc["run_config"] = _run_config("doubling", {
        "instance": os.path.basename(args.instance), "radii": args.radii,
    })
    _write(args.out, dumps_stable(doc))
    if args.out_csv:
        lines = ["radius,worst_point,packing_size"]
        lines += [f"{s.radius},{s.worst_point},{s.packing_size}" for s in est.per_scale]
        _write(args.out_csv, "\n".join(lines) + "\n")
    print(f"lambda_hat={est.lambda_hat} (surrogate doubling bound {est.lambda_hat_squared})")
    print(f"wrote {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- envelope


def _cmd_envelope(args) -> int:
    inst = _load_instance(args.instance)
    report = doubling.envelope_check(inst)
    doc = report.to_dict()
    doc["run_config"] = _run_config("envelope", {
        "instance": os.path.basename(args.instance),
    })
    _write(args.out, dumps_stable(doc))
    if args.out_csv:
        lines = ["edge,level,length,max_descendant_distance,bound,passed"]
        lines += [
            f"{r.edge},{r.level},{r.length},{r.max_descendant_distance},{r.bound},{r.passed}"
            for r in report.rows
        ]
        _write(args.out_csv, "\n".join(lines) + "\n")
    print(f"{len(report.rows)} edges checked, passed={report.passed}")
    print(f"wrote {args.out}")
    return EXIT_OK if report.passed else EXIT_VIOLATION


# ---------------------------------------------------------------- parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="laakso-lab",
        description="Recursive l_p gadget sets, embedding experiments, "
                    "and distortion certificates.")
    sub = parser.add_subparsers(dest="command", required=True)

    b = sub.add_parser("build", help="construct an instance and write it as JSON")
    b.add_argument("--p", type=float, required=True)
    b.add_argument("--eps", type=float, default=None)
    b.add_argument("--eps-for", type=float, nargs=3, metavar=("D_DIM", "D", "P"),
                   default=None, help="derive eps from (target dimension, distortion, p)")
    b.add_argument("--k", type=int, required=True)
    b.add_argument("--max-points", type=int, default=100_000)
    b.add_argument("--out", required=True)
    b.set_defaults(func=_cmd_build)

    e = sub.add_parser("embed", help="produce an embedding of an instance")
    e.add_argument("--instance", required=True)
    e.add_argument("--method", choices=("projection", "stress"), required=True)
    e.add_argument("--d", type=int, required=True)
    e.add_argument("--seed", type=int, default=None,
                   help=f"defaults to ${SEED_ENV_VAR} or 0")
    e.add_argument("--q", type=float, default=None,
                   help="override the evaluation exponent (projection sanity mode)")
    e.add_argument("--restarts", type=int, default=5)
    e.add_argument("--iterations", type=int, default=300)
    e.add_argument("--step-size", type=float, default=0.1)
    e.add_argument("--temperature", type=float, default=0.05)
    e.add_argument("--init", choices=("gaussian", "projection-warm-start"),
                   default="gaussian")
    e.add_argument("--out", required=True)
    e.set_defaults(func=_cmd_embed)

    c = sub.add_parser("certify", help="audit an embedding's potential growth")
    c.add_argument("--instance", required=True)
    c.add_argument("--embedding", required=True)
    c.add_argument("--normalize", action="store_true",
                   help="rescale an expansive embedding before auditing")
    c.add_argument("--verbose", action="store_true",
                   help="include per-level diagnostic traces in the output")
    c.add_argument("--out", required=True)
    c.set_defaults(func=_cmd_certify)

    s = sub.add_parser("sweep", help="grid run over instances and dimensions")
    s.add_argument("--grid", required=True, help="JSON grid specification")
    s.add_argument("--out-csv", required=True)
    s.add_argument("--out-json", default=None)
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--timings", action="store_true",
                   help="record wall times (makes output non-reproducible)")
    s.set_defaults(func=_cmd_sweep)

    g = sub.add_parser("doubling", help="estimate the doubling constant empirically")
    g.add_argument("--instance", required=True)
    g.add_argument("--radii", default="auto", help='"auto" or comma-separated radii')
    g.add_argument("--out", required=True)
    g.add_argument("--out-csv", default=None)
    g.set_defaults(func=_cmd_doubling)

    v = sub.add_parser("envelope", help="check descendants stay near their edge segment")
    v.add_argument("--instance", required=True)
    v.add_argument("--out", required=True)
    v.add_argument("--out-csv", default=None)
    v.set_defaults(func=_cmd_envelope)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SchemaError as exc:
        return _emit_error(exc, EXIT_SCHEMA)
    except InvariantViolation as exc:
        return _emit_error(exc, EXIT_VIOLATION)
    except (PreconditionError, ValueError) as exc:
        return _emit_error(exc, EXIT_PRECONDITION)
    except LaaksoLabError as exc:
        return _emit_error(exc, exc.exit_code)


if __name__ == "__main__":
    sys.exit(main())
