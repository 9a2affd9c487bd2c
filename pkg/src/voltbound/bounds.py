"""Certified per-bus voltage magnitude bounds via one LMI optimization.

Minimizes the perimeter-style objective sum_k (vmax_sq_k - vmin_sq_k)
subject to, for every bus k, a lower-bound certificate block and an
upper-bound certificate block (each affine in the bound variable plus its
own positive constraint multipliers and sign-free link multipliers), with
positivity of all bound squares and of every gap. The reported perimeter
upper bound is vartheta times the trace optimum; vartheta scales the
objective only and cannot move the argmin.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NoCertificate, SolverError, VerificationError, ModelError
from .feasibility import FeasibilityQuery, Multipliers, evaluate_certificate
from .linkcatalog import LinkCatalog, enumerate_links, prune
from .network import NetworkModel, build_admittance, validate
from .oracle import build_envelope, sample_ellipsoid
from .quadratics import (
    QuadraticForm,
    build_q_vmax,
    build_q_vmin,
    constraint_set,
)
from .sdp import (
    AffineMatrixExpr,
    DEFAULT_EPSILON,
    ScalarInequality,
    SdpProblem,
    SolveSettings,
    solve,
)

TAU_FLOOR = 1e-9


@dataclass(frozen=True)
class BoundsOptions:
    epsilon: float = DEFAULT_EPSILON
    tau_floor: float = TAU_FLOOR
    vartheta: float | None = None  # defaults to 2**(N-1), recorded in the result
    prune_links: bool = True
    decoupled: bool = False
    backend: str | None = None
    settings: SolveSettings = SolveSettings()


@dataclass
class BoundsResult:
    n: int
    vmin_sq: np.ndarray
    vmax_sq: np.ndarray
    perimeter_bound: float
    vartheta: float
    epsilon: float
    multipliers_min: tuple[Multipliers, ...]
    multipliers_max: tuple[Multipliers, ...]
    pruned: bool
    n_links: int
    solver_status: str
    solver_iterations: int
    decoupled: bool = False

    @property
    def vmin(self) -> np.ndarray:
        return np.sqrt(self.vmin_sq)

    @property
    def vmax(self) -> np.ndarray:
        return np.sqrt(self.vmax_sq)


def _bound_blocks(
    qs: list[QuadraticForm], catalog: LinkCatalog, n: int, k: int
) -> tuple[AffineMatrixExpr, AffineMatrixExpr]:
    """Certificate blocks for bus k, affine in the bound-square variables."""
    base_min = build_q_vmin(n, k, 0.0).matrix
    base_max = build_q_vmax(n, k, 0.0).matrix
    unit = np.zeros_like(base_min)
    unit[-1, -1] = 1.0

    def terms(side: str):
        out = [(f"tau_{side}[{k}][{i}]", q.matrix) for i, q in enumerate(qs)]
        out += [
            (f"lt_{side}[{k}][{l}]", link.to_dense())
            for l, link in enumerate(catalog.links)
        ]
        return out

    block_min = AffineMatrixExpr(
        constant=base_min,
        terms=tuple([(f"vmin_sq[{k}]", -unit)] + terms("min")),
    )
    block_max = AffineMatrixExpr(
        constant=base_max,
        terms=tuple([(f"vmax_sq[{k}]", unit)] + terms("max")),
    )
    return block_min, block_max


def _collect_multipliers(values, side: str, k: int, n_con: int, n_link: int) -> Multipliers:
    return Multipliers(
        tau=np.array([values[f"tau_{side}[{k}][{i}]"] for i in range(n_con)]),
        tau_tilde=np.array([values[f"lt_{side}[{k}][{l}]"] for l in range(n_link)]),
    )


def _joint_problem(qs, catalog: LinkCatalog, n: int, options: BoundsOptions) -> SdpProblem:
    n_con, n_link = len(qs), len(catalog.links)
    variables: list[str] = []
    objective: dict[str, float] = {}
    lower: dict[str, float] = {}
    blocks: list[AffineMatrixExpr] = []
    gaps: list[ScalarInequality] = []

    for k in range(1, n + 1):
        vmin_id, vmax_id = f"vmin_sq[{k}]", f"vmax_sq[{k}]"
        variables += [vmin_id, vmax_id]
        objective[vmin_id] = -1.0
        objective[vmax_id] = 1.0
        lower[vmin_id] = options.epsilon
        lower[vmax_id] = options.epsilon
        gaps.append(
            ScalarInequality(coeffs=((vmax_id, 1.0), (vmin_id, -1.0)), bound=options.epsilon)
        )
        for side in ("min", "max"):
            for i in range(n_con):
                tid = f"tau_{side}[{k}][{i}]"
                variables.append(tid)
                lower[tid] = options.tau_floor
            variables += [f"lt_{side}[{k}][{l}]" for l in range(n_link)]
        bmin, bmax = _bound_blocks(qs, catalog, n, k)
        blocks += [bmin, bmax]

    return SdpProblem(
        variables=tuple(variables),
        objective=objective,
        psd_blocks=tuple(blocks),
        lower_bounds=lower,
        scalar_constraints=tuple(gaps),
        epsilon=options.epsilon,
    )


def assemble_bounds_problem(
    model: NetworkModel, options: BoundsOptions | None = None
) -> SdpProblem:
    """The joint LMI as a plain SDP, for export or external solving."""
    options = options or BoundsOptions()
    y = build_admittance(model)
    qs = constraint_set(y, model)
    catalog = enumerate_links(model.n_buses)
    if options.prune_links:
        catalog = prune(catalog)
    return _joint_problem(qs, catalog, model.n_buses, options)


def solve_bounds(model: NetworkModel, options: BoundsOptions | None = None) -> BoundsResult:
    """Solve the joint bounds LMI (or 2N decoupled ones) for a valid model.

    Raises NoCertificate when the LMI is infeasible at the requested margin,
    naming the first failing per-bus block.
    """
    options = options or BoundsOptions()
    violations = validate(model)
    if violations:
        raise ModelError("invalid model: " + "; ".join(violations))

    n = model.n_buses
    y = build_admittance(model)
    qs = constraint_set(y, model)
    catalog = enumerate_links(n)
    if options.prune_links:
        catalog = prune(catalog)
    vartheta = options.vartheta if options.vartheta is not None else float(2 ** (n - 1))
    if vartheta <= 0:
        raise ModelError(f"vartheta must be positive, got {vartheta}")

    if options.decoupled:
        return _solve_decoupled(model, qs, catalog, vartheta, options)

    n_con, n_link = len(qs), len(catalog.links)
    problem = _joint_problem(qs, catalog, n, options)
    solution = solve(problem, backend=options.backend, settings=options.settings)

    if solution.status == "infeasible":
        raise NoCertificate(
            "bounds LMI infeasible at margin "
            f"{options.epsilon:g}: {_probe_failures(model, qs, catalog, options)}"
        )
    if solution.status != "optimal":
        raise SolverError(f"bounds solve: {solution.message}", solution=solution)

    vmin_sq = np.array([solution.values[f"vmin_sq[{k}]"] for k in range(1, n + 1)])
    vmax_sq = np.array([solution.values[f"vmax_sq[{k}]"] for k in range(1, n + 1)])
    mins = tuple(
        _collect_multipliers(solution.values, "min", k, n_con, n_link) for k in range(1, n + 1)
    )
    maxs = tuple(
        _collect_multipliers(solution.values, "max", k, n_con, n_link) for k in range(1, n + 1)
    )
    result = BoundsResult(
        n=n,
        vmin_sq=vmin_sq,
        vmax_sq=vmax_sq,
        perimeter_bound=vartheta * float(np.sum(vmax_sq - vmin_sq)),
        vartheta=vartheta,
        epsilon=options.epsilon,
        multipliers_min=mins,
        multipliers_max=maxs,
        pruned=catalog.pruned,
        n_links=n_link,
        solver_status=solution.status,
        solver_iterations=solution.iterations,
    )
    _check_certificates(model, result, options.settings.tol_feas)
    return result


def _side_problem(
    qs, catalog, n, k, side, options
) -> tuple[SdpProblem, str]:
    n_con, n_link = len(qs), len(catalog.links)
    bound_id = f"v{side}_sq[{k}]"
    variables = [bound_id]
    lower = {bound_id: options.epsilon}
    for i in range(n_con):
        tid = f"tau_{side}[{k}][{i}]"
        variables.append(tid)
        lower[tid] = options.tau_floor
    variables += [f"lt_{side}[{k}][{l}]" for l in range(n_link)]
    bmin, bmax = _bound_blocks(qs, catalog, n, k)
    block = bmin if side == "min" else bmax
    objective = {bound_id: -1.0 if side == "min" else 1.0}
    return (
        SdpProblem(
            variables=tuple(variables),
            objective=objective,
            psd_blocks=(block,),
            lower_bounds=lower,
            epsilon=options.epsilon,
        ),
        bound_id,
    )


def _solve_decoupled(model, qs, catalog, vartheta, options) -> BoundsResult:
    n = model.n_buses
    n_con, n_link = len(qs), len(catalog.links)
    vmin_sq = np.zeros(n)
    vmax_sq = np.zeros(n)
    mins, maxs = [], []
    iterations = 0
    for k in range(1, n + 1):
        for side in ("min", "max"):
            problem, bound_id = _side_problem(qs, catalog, n, k, side, options)
            solution = solve(problem, backend=options.backend, settings=options.settings)
            if solution.status == "infeasible":
                raise NoCertificate(f"block ({side}, bus {k}) infeasible at the margin")
            if solution.status != "optimal":
                raise SolverError(
                    f"decoupled block ({side}, bus {k}): {solution.message}",
                    solution=solution,
                )
            iterations += solution.iterations
            if side == "min":
                vmin_sq[k - 1] = solution.values[bound_id]
                mins.append(_collect_multipliers(solution.values, side, k, n_con, n_link))
            else:
                vmax_sq[k - 1] = solution.values[bound_id]
                maxs.append(_collect_multipliers(solution.values, side, k, n_con, n_link))
    if np.any(vmax_sq - vmin_sq <= 0):
        raise NoCertificate("decoupled solve produced an empty interval")
    result = BoundsResult(
        n=n,
        vmin_sq=vmin_sq,
        vmax_sq=vmax_sq,
        perimeter_bound=vartheta * float(np.sum(vmax_sq - vmin_sq)),
        vartheta=vartheta,
        epsilon=options.epsilon,
        multipliers_min=tuple(mins),
        multipliers_max=tuple(maxs),
        pruned=catalog.pruned,
        n_links=n_link,
        solver_status="optimal",
        solver_iterations=iterations,
        decoupled=True,
    )
    _check_certificates(model, result, options.settings.tol_feas)
    return result


def _probe_failures(model, qs, catalog, options) -> str:
    """Name the per-bus blocks that are individually infeasible."""
    failing = []
    for k in range(1, model.n_buses + 1):
        for side in ("min", "max"):
            problem, _ = _side_problem(qs, catalog, model.n_buses, k, side, options)
            try:
                probe = solve(problem, backend=options.backend, settings=options.settings)
            except SolverError:
                failing.append(f"({side}, bus {k}): solver trouble")
                continue
            if probe.status != "optimal":
                failing.append(f"({side}, bus {k})")
    return "failing blocks: " + (", ".join(failing) if failing else "none individually")


def _certificate_queries(model: NetworkModel, result: BoundsResult):
    y = build_admittance(model)
    qs = constraint_set(y, model)
    catalog = enumerate_links(model.n_buses)
    if result.pruned:
        catalog = prune(catalog)
    if len(catalog.links) != result.n_links:
        raise VerificationError(
            f"catalog mismatch: rebuilt {len(catalog.links)} links, result has {result.n_links}"
        )
    n = model.n_buses
    for k in range(1, n + 1):
        q0_min = build_q_vmin(n, k, float(result.vmin_sq[k - 1]))
        q0_max = build_q_vmax(n, k, float(result.vmax_sq[k - 1]))
        yield (
            k,
            FeasibilityQuery(q0_min, tuple(qs), catalog),
            result.multipliers_min[k - 1],
            FeasibilityQuery(q0_max, tuple(qs), catalog),
            result.multipliers_max[k - 1],
        )


def _check_certificates(model: NetworkModel, result: BoundsResult, tol_feas: float) -> None:
    threshold = result.epsilon - tol_feas
    for k, qmin, m_min, qmax, m_max in _certificate_queries(model, result):
        for tag, query, mult in (("min", qmin, m_min), ("max", qmax, m_max)):
            eig = evaluate_certificate(query, mult)
            if eig < threshold:
                raise VerificationError(
                    f"certificate ({tag}, bus {k}): min eigenvalue {eig:.3e} < {threshold:.3e}"
                )


@dataclass
class VerificationReport:
    certificate_margins: dict[str, float]
    containment_margins: dict[str, float]
    samples_retained: int


def verify_result(
    model: NetworkModel,
    result: BoundsResult,
    samples: int = 2000,
    seed: int = 20_240_001,
    tol_feas: float = 1e-8,
) -> VerificationReport:
    """Re-check every invariant of a solved result against the model.

    Re-verifies the 2N certificates by direct eigensolve, the interval and
    perimeter identities, then runs the Monte-Carlo oracle and asserts the
    sampled envelope lies inside the certified intervals (tolerance 1e-9).
    """
    n = model.n_buses
    if result.n != n:
        raise VerificationError(f"result is for {result.n} buses, model has {n}")
    if np.any(result.vmin_sq <= 0) or np.any(result.vmax_sq - result.vmin_sq <= 0):
        raise VerificationError("intervals: need vmax_sq > vmin_sq > 0 for every bus")
    expected = result.vartheta * float(np.sum(result.vmax_sq - result.vmin_sq))
    if abs(expected - result.perimeter_bound) > 1e-9 * max(1.0, abs(expected)):
        raise VerificationError(
            f"perimeter: recorded {result.perimeter_bound!r} != vartheta * trace {expected!r}"
        )

    cert_margins: dict[str, float] = {}
    threshold = result.epsilon - tol_feas
    for k, qmin, m_min, qmax, m_max in _certificate_queries(model, result):
        for tag, query, mult in (("min", qmin, m_min), ("max", qmax, m_max)):
            eig = evaluate_certificate(query, mult)
            cert_margins[f"{tag}[{k}]"] = eig
            if eig < threshold:
                raise VerificationError(
                    f"certificate ({tag}, bus {k}): min eigenvalue {eig:.3e} < {threshold:.3e}"
                )

    draws = sample_ellipsoid(
        model.nominal_injections,
        model.ellipsoid_shape,
        samples,
        seed,
        real_only=model.reactive_fixed,
    )
    envelope = build_envelope(model, draws)
    contain: dict[str, float] = {}
    for k in range(n):
        low_margin = envelope.vsq_min[k] - result.vmin_sq[k]
        high_margin = result.vmax_sq[k] - envelope.vsq_max[k]
        contain[f"low[{k + 1}]"] = low_margin
        contain[f"high[{k + 1}]"] = high_margin
        if low_margin < -1e-9 or high_margin < -1e-9:
            raise VerificationError(
                f"containment: bus {k + 1} envelope "
                f"[{envelope.vsq_min[k]:.10g}, {envelope.vsq_max[k]:.10g}] escapes "
                f"[{result.vmin_sq[k]:.10g}, {result.vmax_sq[k]:.10g}]"
            )
    return VerificationReport(
        certificate_margins=cert_margins,
        containment_margins=contain,
        samples_retained=envelope.n_retained,
    )


# ---------------------------------------------------------------------------
# Result file schema
# ---------------------------------------------------------------------------

RESULT_SCHEMA_VERSION = 1


def result_to_dict(result: BoundsResult) -> dict:
    return {
        "schema_version": RESULT_SCHEMA_VERSION,
        "buses": [
            {
                "k": k + 1,
                "vmin": float(result.vmin[k]),
                "vmax": float(result.vmax[k]),
                "vmin_sq": float(result.vmin_sq[k]),
                "vmax_sq": float(result.vmax_sq[k]),
            }
            for k in range(result.n)
        ],
        "perimeter_bound": float(result.perimeter_bound),
        "vartheta": float(result.vartheta),
        "epsilon": float(result.epsilon),
        "solver": {
            "status": result.solver_status,
            "iterations": result.solver_iterations,
            "decoupled": result.decoupled,
        },
        "links": {"pruned": result.pruned, "count": result.n_links},
        "multipliers": {
            side: [
                {"tau": [float(t) for t in m.tau], "tau_tilde": [float(t) for t in m.tau_tilde]}
                for m in mults
            ]
            for side, mults in (
                ("min", result.multipliers_min),
                ("max", result.multipliers_max),
            )
        },
    }


def result_from_dict(doc: dict) -> BoundsResult:
    try:
        buses = doc["buses"]
        n = len(buses)
        mults = doc["multipliers"]
        return BoundsResult(
            n=n,
            vmin_sq=np.array([b["vmin_sq"] for b in buses], dtype=float),
            vmax_sq=np.array([b["vmax_sq"] for b in buses], dtype=float),
            perimeter_bound=float(doc["perimeter_bound"]),
            vartheta=float(doc["vartheta"]),
            epsilon=float(doc["epsilon"]),
            multipliers_min=tuple(
                Multipliers(np.array(m["tau"]), np.array(m["tau_tilde"])) for m in mults["min"]
            ),
            multipliers_max=tuple(
                Multipliers(np.array(m["tau"]), np.array(m["tau_tilde"])) for m in mults["max"]
            ),
            pruned=bool(doc["links"]["pruned"]),
            n_links=int(doc["links"]["count"]),
            solver_status=str(doc["solver"]["status"]),
            solver_iterations=int(doc["solver"]["iterations"]),
            decoupled=bool(doc["solver"].get("decoupled", False)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise VerificationError(f"malformed result document: {exc}") from exc
