"""Command-line front end.

Exit codes: 0 success, 1 input or usage error, 2 analysis produced no
certificate / no retained sample. All numeric output is printed with 10
significant digits and every output file carries a schema_version marker,
so identical inputs and seed reproduce byte-identical files.

The SDP backend can be overridden with the VOLTBOUND_SDP_BACKEND
environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import bounds as bounds_mod
from . import sdp as sdp_mod
from .errors import (
    EnvelopeError,
    ModelError,
    NoCertificate,
    SolverError,
    VerificationError,
    VoltboundError,
)
from .linkcatalog import enumerate_links, link_count, prune
from .network import load_network
from .oracle import evaluate_samples, sample_ellipsoid, write_envelope_csv
from .quadratics import constraint_set
from .network import build_admittance


def _round_floats(obj):
    if isinstance(obj, float):
        return float(format(obj, ".10g"))
    if isinstance(obj, dict):
        return {k: _round_floats(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_round_floats(v) for v in obj]
    return obj


def write_json(path: str, doc: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_round_floats(doc), fh, indent=1, sort_keys=True)
        fh.write("\n")


def _options_from_args(args) -> bounds_mod.BoundsOptions:
    return bounds_mod.BoundsOptions(
        epsilon=args.epsilon,
        vartheta=args.vartheta,
        prune_links=not args.no_prune,
        decoupled=args.decoupled,
    )


def cmd_analyze(args) -> int:
    model = load_network(args.input)
    result = bounds_mod.solve_bounds(model, _options_from_args(args))
    write_json(args.output, bounds_mod.result_to_dict(result))
    for k in range(result.n):
        print(
            f"bus {k + 1}: |v| in [{result.vmin[k]:.10g}, {result.vmax[k]:.10g}]",
            file=sys.stderr,
        )
    print(f"perimeter bound: {result.perimeter_bound:.10g}", file=sys.stderr)
    return 0


def cmd_sample(args) -> int:
    model = load_network(args.input)
    if args.samples < 1:
        raise ModelError(f"--samples must be >= 1, got {args.samples}")
    draws = sample_ellipsoid(
        model.nominal_injections,
        model.ellipsoid_shape,
        args.samples,
        args.seed,
        real_only=model.reactive_fixed,
    )
    outcomes = evaluate_samples(model, draws)
    write_envelope_csv(args.output, outcomes, model.n_buses)
    retained = [o for o in outcomes if o.retained]
    if not retained:
        raise EnvelopeError("no sample survived the power-flow and current filters")
    stack = np.vstack([o.vsq for o in retained])
    print(
        f"{len(retained)}/{len(outcomes)} samples retained "
        f"({sum(1 for o in outcomes if not o.converged)} non-convergent)",
        file=sys.stderr,
    )
    for k in range(model.n_buses):
        print(
            f"bus {k + 1}: |v|^2 in [{stack[:, k].min():.10g}, {stack[:, k].max():.10g}]",
            file=sys.stderr,
        )
    return 0


def cmd_verify(args) -> int:
    model = load_network(args.input)
    try:
        with open(args.result) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelError(f"cannot read {args.result}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"{args.result}: invalid JSON: {exc.msg}") from exc
    result = bounds_mod.result_from_dict(doc)
    report = bounds_mod.verify_result(model, result, samples=args.samples, seed=args.seed)
    worst_cert = min(report.certificate_margins.values())
    worst_contain = min(report.containment_margins.values())
    print(
        f"verified: {len(report.certificate_margins)} certificates "
        f"(worst margin {worst_cert:.10g}), containment margin {worst_contain:.10g} "
        f"over {report.samples_retained} retained samples",
        file=sys.stderr,
    )
    return 0


def cmd_links(args) -> int:
    if args.n is not None:
        n = args.n
    elif args.input:
        n = load_network(args.input).n_buses
    else:
        raise ModelError("links: need --n or --input")
    if n < 1:
        raise ModelError(f"links: n must be >= 1, got {n}")
    raw = enumerate_links(n)
    pruned = prune(raw)
    print(f"n={n} raw count {link_count(n)}")
    for fam, count in raw.family_counts().items():
        print(f"  family {fam}: {count} raw, {pruned.family_counts()[fam]} pruned")
    print(f"pruned count {len(pruned)}")
    if args.output:
        from .linkcatalog import catalog_to_dict

        write_json(args.output, catalog_to_dict(raw if args.no_prune else pruned))
    return 0


def cmd_export_sdp(args) -> int:
    model = load_network(args.input)
    y = build_admittance(model)
    qs = constraint_set(y, model)
    catalog = enumerate_links(model.n_buses)
    if not args.no_prune:
        catalog = prune(catalog)
    options = _options_from_args(args)
    n = model.n_buses
    variables: list[str] = []
    objective: dict[str, float] = {}
    lower: dict[str, float] = {}
    blocks = []
    gaps = []
    for k in range(1, n + 1):
        vmin_id, vmax_id = f"vmin_sq[{k}]", f"vmax_sq[{k}]"
        variables += [vmin_id, vmax_id]
        objective[vmin_id] = -1.0
        objective[vmax_id] = 1.0
        lower[vmin_id] = options.epsilon
        lower[vmax_id] = options.epsilon
        gaps.append(
            sdp_mod.ScalarInequality(
                coeffs=((vmax_id, 1.0), (vmin_id, -1.0)), bound=options.epsilon
            )
        )
        for side in ("min", "max"):
            for i in range(len(qs)):
                tid = f"tau_{side}[{k}][{i}]"
                variables.append(tid)
                lower[tid] = options.tau_floor
            variables += [f"lt_{side}[{k}][{l}]" for l in range(len(catalog.links))]
        bmin, bmax = bounds_mod._bound_blocks(qs, catalog, n, k)
        blocks += [bmin, bmax]
    problem = sdp_mod.SdpProblem(
        variables=tuple(variables),
        objective=objective,
        psd_blocks=tuple(blocks),
        lower_bounds=lower,
        scalar_constraints=tuple(gaps),
        epsilon=options.epsilon,
    )
    sdp_mod.export_sdpa(problem, args.output)
    print(f"wrote {len(variables)} variables, {len(blocks)} PSD blocks", file=sys.stderr)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="voltbound",
        description="Certified worst-case voltage bounds under ellipsoidal injection uncertainty",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, output_required=True):
        p.add_argument("--input", required=True, help="network JSON file")
        p.add_argument("--output", required=output_required, help="output file")

    def solver_opts(p):
        p.add_argument("--epsilon", type=float, default=sdp_mod.DEFAULT_EPSILON)
        p.add_argument("--vartheta", type=float, default=None)
        p.add_argument("--no-prune", action="store_true", help="keep the raw link catalog")
        p.add_argument("--decoupled", action="store_true", help="solve 2N separate programs")

    p = sub.add_parser("analyze", help="solve the bounds LMI and write the result JSON")
    common(p)
    solver_opts(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sample", help="Monte-Carlo envelope, written as CSV")
    common(p)
    p.add_argument("--samples", type=int, default=10_000)
    p.add_argument("--seed", type=int, default=42)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("verify", help="re-check a result file against the model")
    common(p, output_required=False)
    p.add_argument("--result", required=True, help="result JSON from analyze")
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--seed", type=int, default=20_240_001)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("links", help="link catalog counts (and optional dump)")
    p.add_argument("--n", type=int, default=None, help="number of non-slack buses")
    p.add_argument("--input", default=None, help="network JSON file (alternative to --n)")
    p.add_argument("--output", default=None, help="optional catalog dump path")
    p.add_argument("--no-prune", action="store_true")
    p.set_defaults(func=cmd_links)

    p = sub.add_parser("export-sdp", help="write the assembled bounds SDP in SDPA format")
    common(p)
    solver_opts(p)
    p.add_argument("--tau-floor", dest="tau_floor", type=float, default=bounds_mod.TAU_FLOOR)
    p.set_defaults(func=cmd_export_sdp)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    if getattr(args, "epsilon", 1.0) <= 0:
        print("error: --epsilon must be positive", file=sys.stderr)
        return 1
    try:
        return args.func(args)
    except (NoCertificate, EnvelopeError) as exc:
        print(f"no certificate: {exc}", file=sys.stderr)
        return 2
    except (ModelError, VerificationError, SolverError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except VoltboundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
