"""Monte-Carlo validation: sample injections, solve power flow, build the envelope.

The envelope is the empirical per-bus min/max of |v_k|^2 over samples drawn
from the injection ellipsoid, keeping only samples whose power-flow solution
converged and respects every current limit. It is the independent check the
certified intervals must contain.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import EnvelopeError, PfError, SamplerError
from .network import NetworkModel, build_admittance

PF_TOL = 1e-10
PF_MAX_ITER = 50

# Samples are kept strictly inside the unit shape-norm ball; the small gap
# dominates power-flow round-off so retained samples are unambiguously
# interior points of the uncertainty set.
RADIUS_MARGIN = 1e-6


def sample_ellipsoid(
    center: np.ndarray,
    shape: np.ndarray,
    count: int,
    seed: int,
    boundary_fraction: float = 0.3,
    real_only: bool = False,
) -> np.ndarray:
    """Draw ``count`` injection vectors from {S : (S-c)* Psi (S-c) < 1}.

    Uniform in the shape metric (Gaussian direction, radius ~ U^(1/d)),
    except that ``boundary_fraction`` of the draws are forced onto the
    shell of shape-norm in [0.99, 1): worst cases live near the boundary.
    With ``real_only`` the draw is restricted to the real section of the
    ellipsoid (injections that never carry reactive power).

    Raises SamplerError unless Psi is positive definite.
    """
    center = np.asarray(center, dtype=complex).reshape(-1)
    n = center.size
    shape = np.asarray(shape, dtype=complex)
    if shape.shape != (n, n):
        raise SamplerError(f"shape matrix {shape.shape} does not match center length {n}")
    if count < 1:
        raise SamplerError(f"count must be >= 1, got {count}")
    if not 0.0 <= boundary_fraction <= 1.0:
        raise SamplerError(f"boundary_fraction must be in [0, 1], got {boundary_fraction}")

    rng = np.random.default_rng(seed)
    n_shell = int(round(boundary_fraction * count))

    if real_only:
        psi_r = shape.real
        try:
            chol = np.linalg.cholesky(psi_r)
        except np.linalg.LinAlgError as exc:
            raise SamplerError("shape matrix real section is not positive definite") from exc
        d = n
        direction = rng.standard_normal((count, n))
    else:
        try:
            chol = np.linalg.cholesky(shape)
        except np.linalg.LinAlgError as exc:
            raise SamplerError("shape matrix is not positive definite") from exc
        d = 2 * n
        direction = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))

    norms = np.linalg.norm(direction, axis=1)
    norms[norms == 0.0] = 1.0
    direction /= norms[:, None]

    radius = np.empty(count)
    radius[:n_shell] = 0.99 + 0.01 * rng.uniform(0.0, 1.0 - RADIUS_MARGIN, n_shell)
    radius[n_shell:] = rng.uniform(0.0, 1.0, count - n_shell) ** (1.0 / d) * (
        1.0 - RADIUS_MARGIN
    )

    # (S-c)* Psi (S-c) = ||L* (S-c)||^2 for Psi = L L*, so map the unit-ball
    # draw w through S = c + L^-* w.
    w = radius[:, None] * direction
    deltas = np.linalg.solve(chol.conj().T, w.T).T
    return center[None, :] + deltas


@dataclass
class PowerFlowSolution:
    v: np.ndarray
    iterations: int
    residual: float


def _reduced_system(y: np.ndarray, model: NetworkModel) -> tuple[np.ndarray, np.ndarray]:
    return y[1:, 1:], y[1:, 0] * model.slack_voltage


def injection_currents(y: np.ndarray, model: NetworkModel, v: np.ndarray) -> np.ndarray:
    """Bus injection currents i_k = sum_j Y[k, j] v_j (slack included)."""
    ybus, c = _reduced_system(y, model)
    return ybus @ v + c


def injected_power(y: np.ndarray, model: NetworkModel, v: np.ndarray) -> np.ndarray:
    """Generated power implied by a voltage profile: s_g = s_load + v conj(i)."""
    return model.load_powers + v * np.conj(injection_currents(y, model, v))


def solve_power_flow(
    y: np.ndarray,
    model: NetworkModel,
    s_g: np.ndarray,
    v_init: np.ndarray | None = None,
    tol: float = PF_TOL,
    max_iter: int = PF_MAX_ITER,
) -> PowerFlowSolution:
    """Newton iteration in rectangular coordinates on the balance residual.

    Residual f_k = s_g_k - s_load_k - v_k conj(i_k); the solve targets
    max_k |f_k| <= tol. Raises PfError on a singular Jacobian or when the
    iteration cap is reached.
    """
    n = model.n_buses
    ybus, c = _reduced_system(y, model)
    s = np.asarray(s_g, dtype=complex).reshape(-1) - model.load_powers
    v = (
        np.full(n, model.slack_voltage, dtype=complex)
        if v_init is None
        else np.array(v_init, dtype=complex).reshape(-1)
    )

    for iteration in range(1, max_iter + 1):
        i_inj = ybus @ v + c
        f = s - v * np.conj(i_inj)
        residual = float(np.max(np.abs(f)))
        if not np.isfinite(residual) or np.max(np.abs(v)) > 1e6:
            raise PfError(f"no-convergence: iterate diverged at iteration {iteration}")
        if residual <= tol:
            return PowerFlowSolution(v=v, iterations=iteration - 1, residual=residual)

        # Wirtinger blocks of f: df/dv = -diag(conj(i)), df/dconj(v) = -diag(v) conj(Ybus)
        a = -np.diag(np.conj(i_inj))
        b = -v[:, None] * np.conj(ybus)
        jac = np.block(
            [
                [np.real(a + b), -np.imag(a - b)],
                [np.imag(a + b), np.real(a - b)],
            ]
        )
        rhs = np.concatenate([f.real, f.imag])
        try:
            step = np.linalg.solve(jac, -rhs)
        except np.linalg.LinAlgError as exc:
            raise PfError(f"singular Jacobian at iteration {iteration}") from exc
        v = v + step[:n] + 1j * step[n:]

    raise PfError(f"no-convergence: residual {residual:.3e} after {max_iter} iterations")


@dataclass
class SampleOutcome:
    index: int
    converged: bool
    current_ok: bool
    vsq: np.ndarray | None

    @property
    def retained(self) -> bool:
        return self.converged and self.current_ok


@dataclass
class Envelope:
    vsq_min: np.ndarray
    vsq_max: np.ndarray
    n_samples: int
    n_retained: int
    n_nonconvergent: int
    n_current_violations: int


def evaluate_samples(
    model: NetworkModel,
    samples: np.ndarray,
    y: np.ndarray | None = None,
    tol: float = PF_TOL,
) -> list[SampleOutcome]:
    """Solve each sampled injection; filter on the exact constraint forms at V.

    Retained samples satisfy the power balance to ``tol``, keep the implied
    injection strictly inside the ellipsoid, and respect every current limit
    strictly — evaluated on the solved voltages, so each retained V is a
    genuine interior point of the constraint region.
    """
    if y is None:
        y = build_admittance(model)
    ybus, c = _reduced_system(y, model)
    limits = model.current_limits
    psi = model.ellipsoid_shape
    center = model.nominal_injections

    outcomes: list[SampleOutcome] = []
    warm: np.ndarray | None = None
    for idx, s_g in enumerate(np.atleast_2d(samples)):
        try:
            sol = solve_power_flow(y, model, s_g, v_init=warm, tol=tol)
        except PfError:
            outcomes.append(SampleOutcome(idx, False, False, None))
            warm = None  # do not chain a diverged iterate into the next start
            continue
        warm = sol.v
        currents = ybus @ sol.v + c
        delta = injected_power(y, model, sol.v) - center
        in_ellipsoid = float(np.real(np.vdot(delta, psi @ delta))) < 1.0
        current_ok = bool(np.all(np.abs(currents) < limits)) and in_ellipsoid
        outcomes.append(SampleOutcome(idx, True, current_ok, np.abs(sol.v) ** 2))
    return outcomes


def build_envelope(
    model: NetworkModel,
    samples: np.ndarray,
    y: np.ndarray | None = None,
    tol: float = PF_TOL,
) -> Envelope:
    """Empirical per-bus min/max of |v_k|^2 over the retained samples."""
    outcomes = evaluate_samples(model, samples, y=y, tol=tol)
    retained = [o.vsq for o in outcomes if o.retained]
    n_nonconv = sum(1 for o in outcomes if not o.converged)
    n_current = sum(1 for o in outcomes if o.converged and not o.current_ok)
    if not retained:
        raise EnvelopeError(
            f"no retained samples ({n_nonconv} non-convergent, {n_current} filtered)"
        )
    stack = np.vstack(retained)
    return Envelope(
        vsq_min=stack.min(axis=0),
        vsq_max=stack.max(axis=0),
        n_samples=len(outcomes),
        n_retained=len(retained),
        n_nonconvergent=n_nonconv,
        n_current_violations=n_current,
    )


ENVELOPE_SCHEMA_VERSION = 1


def write_envelope_csv(path: str | Path, outcomes: list[SampleOutcome], n: int) -> None:
    """Per-sample record behind the envelope: id, flags, |v_k|^2 columns."""
    with open(path, "w", newline="") as fh:
        fh.write(f"# voltbound envelope schema_version={ENVELOPE_SCHEMA_VERSION}\n")
        writer = csv.writer(fh)
        writer.writerow(["sample_id", "converged", "current_ok"] + [f"vsq_{k}" for k in range(1, n + 1)])
        for o in outcomes:
            vals = (
                [format(x, ".10g") for x in o.vsq] if o.vsq is not None else [""] * n
            )
            writer.writerow([o.index, int(o.converged), int(o.current_ok)] + vals)
