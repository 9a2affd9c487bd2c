"""S-procedure style feasibility test for quadratic constraints on the monomial manifold.

Certifies that X* Q0 X > 0 holds for every voltage vector V whose monomial
vector X satisfies X* Q_i X < 0 for all constraint forms, by finding
positive multipliers tau_i and sign-free link multipliers such that

    Q0 + sum_i tau_i Q_i + sum_l taut_l Qt_l >= epsilon * I.

The test is sufficient only: "not certified" means the LMI with the given
margin is infeasible, never that the underlying property is false.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import QueryError, SolverError
from .linkcatalog import LinkCatalog
from .quadratics import QuadraticForm, monomial_vector
from .sdp import AffineMatrixExpr, SdpProblem, SdpSolution, SolveSettings, solve

TAU_FLOOR = 1e-9


@dataclass(frozen=True)
class FeasibilityQuery:
    q0: QuadraticForm
    constraints: tuple[QuadraticForm, ...]
    catalog: LinkCatalog

    def __post_init__(self):
        object.__setattr__(self, "constraints", tuple(self.constraints))
        dim = self.q0.dim
        for q in self.constraints:
            if q.dim != dim:
                raise QueryError(f"constraint {q.label}: dim {q.dim} != {dim}")
        for link in self.catalog.links:
            if link.dim != dim:
                raise QueryError(f"{link.label}: dim {link.dim} != {dim}")


@dataclass(frozen=True)
class Multipliers:
    tau: np.ndarray        # one per constraint form, all >= the positivity floor
    tau_tilde: np.ndarray  # one per catalog link, sign-free

    def __post_init__(self):
        object.__setattr__(self, "tau", np.asarray(self.tau, dtype=float))
        object.__setattr__(self, "tau_tilde", np.asarray(self.tau_tilde, dtype=float))


@dataclass
class FeasibilityResult:
    certified: bool
    multipliers: Multipliers | None
    min_eig: float
    solution: SdpSolution


def _certificate_block(query: FeasibilityQuery) -> AffineMatrixExpr:
    terms = [(f"tau[{i}]", q.matrix) for i, q in enumerate(query.constraints)]
    terms += [
        (f"lt[{l}]", link.to_dense()) for l, link in enumerate(query.catalog.links)
    ]
    return AffineMatrixExpr(constant=query.q0.matrix, terms=tuple(terms))


def test_feasibility(
    query: FeasibilityQuery,
    epsilon: float = 1e-7,
    tau_floor: float = TAU_FLOOR,
    backend: str | None = None,
    settings: SolveSettings = SolveSettings(),
) -> FeasibilityResult:
    """Run the multiplier search; certified results are re-verified by eigensolve.

    Solver numerical trouble propagates as SolverError (it is neither a
    certificate nor evidence of infeasibility).
    """
    n_con = len(query.constraints)
    n_link = len(query.catalog.links)
    tau_ids = tuple(f"tau[{i}]" for i in range(n_con))
    link_ids = tuple(f"lt[{l}]" for l in range(n_link))

    problem = SdpProblem(
        variables=tau_ids + link_ids,
        objective={v: 1.0 for v in tau_ids},
        psd_blocks=(_certificate_block(query),),
        lower_bounds={v: tau_floor for v in tau_ids},
        epsilon=epsilon,
    )
    solution = solve(problem, backend=backend, settings=settings)

    if solution.status == "optimal":
        m = Multipliers(
            tau=np.array([solution.values[v] for v in tau_ids]),
            tau_tilde=np.array([solution.values[v] for v in link_ids]),
        )
        min_eig = evaluate_certificate(query, m)
        if min_eig < epsilon - settings.tol_feas:
            raise SolverError(
                f"certificate re-verification failed (min eig {min_eig:.3e})",
                solution=solution,
            )
        return FeasibilityResult(True, m, min_eig, solution)
    if solution.status == "infeasible":
        return FeasibilityResult(False, None, float("nan"), solution)
    raise SolverError(f"numerical trouble: {solution.message}", solution=solution)


def evaluate_certificate(query: FeasibilityQuery, m: Multipliers) -> float:
    """Minimum eigenvalue of Q0 + sum tau_i Q_i + sum taut_l Qt_l."""
    if m.tau.size != len(query.constraints) or m.tau_tilde.size != len(query.catalog.links):
        raise QueryError(
            f"multiplier sizes ({m.tau.size}, {m.tau_tilde.size}) do not match the query"
        )
    total = np.array(query.q0.matrix, dtype=complex)
    for t, q in zip(m.tau, query.constraints):
        total += t * q.matrix
    for t, link in zip(m.tau_tilde, query.catalog.links):
        if t != 0.0:
            total += t * link.to_dense()
    return float(np.linalg.eigvalsh(total)[0])


@dataclass
class SoundnessReport:
    checked: int
    in_region: int
    violations: list[int]
    worst_q0: float

    @property
    def clean(self) -> bool:
        return not self.violations


def check_region_soundness(query: FeasibilityQuery, voltages) -> SoundnessReport:
    """Spot-check a certificate: on sampled V inside the constraint region,
    the certified form must be strictly positive.

    ``voltages`` is any iterable of length-N complex vectors; samples
    outside the region (some X* Q_i X >= 0) are skipped, the rest must give
    X* Q0 X > 0 with zero exceptions.
    """
    checked = in_region = 0
    violations: list[int] = []
    worst = float("inf")
    for idx, v in enumerate(voltages):
        checked += 1
        x = monomial_vector(np.asarray(v, dtype=complex))
        if any(q.evaluate(x) >= 0.0 for q in query.constraints):
            continue
        in_region += 1
        value = query.q0.evaluate(x)
        worst = min(worst, value)
        if value <= 0.0:
            violations.append(idx)
    return SoundnessReport(checked, in_region, violations, worst)


def certificate_to_dict(query: FeasibilityQuery, m: Multipliers) -> dict:
    return {
        "tau": [float(t) for t in m.tau],
        "tau_tilde": [
            {"family": link.family, "indices": list(link.indices), "value": float(t)}
            for link, t in zip(query.catalog.links, m.tau_tilde)
        ],
        "min_eig": evaluate_certificate(query, m),
    }
