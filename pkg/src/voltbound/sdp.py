"""Hermitian LMI systems solved as real semidefinite programs.

Problems are stated over named real variables: minimize a linear cost
subject to affine Hermitian blocks constrained >= epsilon * I plus scalar
linear inequalities. Hermitian blocks are embedded as real symmetric
matrices of doubled dimension before being handed to the conic backend
(cvxopt's interior-point solver by default, selected via the
VOLTBOUND_SDP_BACKEND environment variable).

Every optimal point returned by a backend is re-verified here by direct
eigenvalue computation; a solve never reports "optimal" on the backend's
word alone.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import EmbeddingError, SolverError

DEFAULT_EPSILON = 1e-7
TOL_FEAS = 1e-8
TOL_OBJ = 1e-8
MAX_ITERS = 200

# Uniform box on the scaled variables: keeps the stacked constraint matrix
# full column rank even when link multipliers are linearly dependent, and
# bounds the optimal face in null directions. Far above any multiplier
# magnitude that occurs at desk scale.
SCALED_VAR_BOX = 1e8

HERMITIAN_TOL = 1e-10


def realify(h: np.ndarray) -> np.ndarray:
    """Embed a Hermitian matrix as [[Re H, -Im H], [Im H, Re H]].

    The result is real symmetric, positive semidefinite iff H is, and its
    spectrum is that of H with every eigenvalue doubled in multiplicity.
    """
    h = np.asarray(h, dtype=complex)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise EmbeddingError(f"realify: expected a square matrix, got shape {h.shape}")
    asym = float(np.max(np.abs(h - h.conj().T)))
    scale = max(1.0, float(np.max(np.abs(h))))
    if asym > HERMITIAN_TOL * scale:
        raise EmbeddingError(f"realify: input not Hermitian (asymmetry {asym:.3e})")
    re, im = h.real, h.imag
    return np.block([[re, -im], [im, re]])


@dataclass(frozen=True)
class AffineMatrixExpr:
    """constant + sum_v x_v * coeff_v, all Hermitian of one dimension."""

    constant: np.ndarray
    terms: tuple[tuple[str, np.ndarray], ...]

    @property
    def dim(self) -> int:
        return self.constant.shape[0]

    def evaluate(self, values: dict[str, float]) -> np.ndarray:
        m = np.array(self.constant, dtype=complex)
        for var, coeff in self.terms:
            m += values[var] * coeff
        return m

    def min_eig(self, values: dict[str, float]) -> float:
        return float(np.linalg.eigvalsh(self.evaluate(values))[0])


@dataclass(frozen=True)
class ScalarInequality:
    """sum_v coeffs[v] * x_v >= bound."""

    coeffs: tuple[tuple[str, float], ...]
    bound: float

    def evaluate(self, values: dict[str, float]) -> float:
        return sum(c * values[v] for v, c in self.coeffs)


@dataclass
class SdpProblem:
    variables: tuple[str, ...]
    objective: dict[str, float]
    psd_blocks: tuple[AffineMatrixExpr, ...]
    lower_bounds: dict[str, float] = field(default_factory=dict)
    scalar_constraints: tuple[ScalarInequality, ...] = ()
    epsilon: float = DEFAULT_EPSILON

    def check(self) -> None:
        if self.epsilon <= 0:
            raise SolverError(f"epsilon must be positive, got {self.epsilon}")
        declared = set(self.variables)
        if len(declared) != len(self.variables):
            raise SolverError("duplicate variable ids")
        for block in self.psd_blocks:
            for var, _ in block.terms:
                if var not in declared:
                    raise SolverError(f"block references undeclared variable {var!r}")
        for con in self.scalar_constraints:
            for var, _ in con.coeffs:
                if var not in declared:
                    raise SolverError(f"constraint references undeclared variable {var!r}")
        for var in list(self.objective) + list(self.lower_bounds):
            if var not in declared:
                raise SolverError(f"undeclared variable {var!r}")


@dataclass
class SdpSolution:
    status: str  # "optimal" | "infeasible" | "numerical-trouble"
    values: dict[str, float]
    objective: float
    min_block_eig: float
    iterations: int
    message: str = ""


@dataclass(frozen=True)
class SolveSettings:
    tol_feas: float = TOL_FEAS
    tol_obj: float = TOL_OBJ
    max_iters: int = MAX_ITERS


def _variable_scales(problem: SdpProblem) -> dict[str, float]:
    # Frobenius normalization of the coefficient matrices: solve in
    # y = scale * x, so each matrix the backend sees has unit norm.
    scales = {v: 1.0 for v in problem.variables}
    for block in problem.psd_blocks:
        for var, coeff in block.terms:
            scales[var] = max(scales[var], float(np.linalg.norm(coeff)))
    return scales


def _solve_cvxopt(problem: SdpProblem, settings: SolveSettings):
    from cvxopt import matrix as cvx_matrix
    from cvxopt import solvers, spmatrix

    nvar = len(problem.variables)
    index = {v: i for i, v in enumerate(problem.variables)}
    scales = _variable_scales(problem)
    s = np.array([scales[v] for v in problem.variables])

    c = np.zeros(nvar)
    for var, coeff in problem.objective.items():
        c[index[var]] = coeff / scales[var]

    # Componentwise rows: lower bounds, scalar constraints, and the +-box.
    gl_rows: list[dict[int, float]] = []
    hl: list[float] = []
    for var, lb in problem.lower_bounds.items():
        gl_rows.append({index[var]: -1.0})
        hl.append(-lb * scales[var])
    for con in problem.scalar_constraints:
        row = {}
        for var, coeff in con.coeffs:
            row[index[var]] = row.get(index[var], 0.0) - coeff / scales[var]
        gl_rows.append(row)
        hl.append(-con.bound)
    for j in range(nvar):
        gl_rows.append({j: 1.0})
        hl.append(SCALED_VAR_BOX)
        gl_rows.append({j: -1.0})
        hl.append(SCALED_VAR_BOX)

    gl_vals, gl_i, gl_j = [], [], []
    for r, row in enumerate(gl_rows):
        for j, val in row.items():
            gl_vals.append(val)
            gl_i.append(r)
            gl_j.append(j)
    gl = spmatrix(gl_vals, gl_i, gl_j, (len(gl_rows), nvar))
    hl_m = cvx_matrix(np.array(hl))

    gs, hs = [], []
    for block in problem.psd_blocks:
        dim = block.dim
        rdim = 2 * dim
        const = realify(np.asarray(block.constant, dtype=complex) - problem.epsilon * np.eye(dim))
        hs.append(cvx_matrix(const))
        vals, rows, cols = [], [], []
        for var, coeff in block.terms:
            col = index[var]
            rc = realify(-np.asarray(coeff, dtype=complex) / scales[var])
            nz_i, nz_j = np.nonzero(rc)
            for i, j in zip(nz_i, nz_j):
                vals.append(float(rc[i, j]))
                rows.append(int(j * rdim + i))  # column-major position
                cols.append(col)
        gs.append(spmatrix(vals, rows, cols, (rdim * rdim, nvar)))

    options = {
        "show_progress": False,
        "maxiters": settings.max_iters,
        "abstol": settings.tol_obj,
        "reltol": settings.tol_obj,
        "feastol": settings.tol_feas,
    }
    try:
        sol = solvers.sdp(
            cvx_matrix(c), Gl=gl, hl=hl_m, Gs=gs, hs=hs, options=options
        )
    except (ValueError, ArithmeticError) as exc:
        raise SolverError(f"cvxopt backend failed: {exc}") from exc

    x = None
    if sol["x"] is not None:
        y = np.array(sol["x"]).reshape(-1)
        x = y / s
    return sol["status"], x, int(sol.get("iterations", 0))


BACKENDS = {"cvxopt": _solve_cvxopt}


def solve(
    problem: SdpProblem,
    backend: str | None = None,
    settings: SolveSettings = SolveSettings(),
) -> SdpSolution:
    """Solve the SDP and re-verify the returned point against the blocks.

    Status "optimal" guarantees every PSD block has minimum eigenvalue
    >= epsilon - tol_feas and every scalar constraint holds within
    tol_feas, checked here by direct eigenvalue computation. "infeasible"
    means no strictly feasible point with margin epsilon exists. An
    unbounded objective raises SolverError.
    """
    problem.check()
    name = backend or os.environ.get("VOLTBOUND_SDP_BACKEND", "cvxopt")
    if name not in BACKENDS:
        raise SolverError(f"unknown SDP backend {name!r}; available: {sorted(BACKENDS)}")

    status, x, iterations = BACKENDS[name](problem, settings)

    values = (
        {v: float(x[i]) for i, v in enumerate(problem.variables)} if x is not None else {}
    )
    objective = (
        sum(problem.objective.get(v, 0.0) * values[v] for v in problem.variables)
        if values
        else float("nan")
    )

    if status == "optimal":
        min_eig = min(
            (block.min_eig(values) for block in problem.psd_blocks), default=float("inf")
        )
        feas_ok = min_eig >= problem.epsilon - settings.tol_feas
        for var, lb in problem.lower_bounds.items():
            feas_ok &= values[var] >= lb - settings.tol_feas
        for con in problem.scalar_constraints:
            feas_ok &= con.evaluate(values) >= con.bound - settings.tol_feas
        if not feas_ok:
            return SdpSolution(
                status="numerical-trouble",
                values=values,
                objective=objective,
                min_block_eig=min_eig,
                iterations=iterations,
                message="backend reported optimal but re-verification failed",
            )
        return SdpSolution(
            status="optimal",
            values=values,
            objective=objective,
            min_block_eig=min_eig,
            iterations=iterations,
        )

    if status == "primal infeasible":
        return SdpSolution(
            status="infeasible",
            values={},
            objective=float("nan"),
            min_block_eig=float("nan"),
            iterations=iterations,
            message="no strictly feasible point at the requested margin",
        )
    if status == "dual infeasible":
        raise SolverError("objective is unbounded below")

    min_eig = (
        min((block.min_eig(values) for block in problem.psd_blocks), default=float("nan"))
        if values
        else float("nan")
    )
    return SdpSolution(
        status="numerical-trouble",
        values=values,
        objective=objective,
        min_block_eig=min_eig,
        iterations=iterations,
        message=f"backend stopped with status {status!r}",
    )


# ---------------------------------------------------------------------------
# SDPA-style sparse export / import (cross-checking path)
# ---------------------------------------------------------------------------


def export_sdpa(problem: SdpProblem, path) -> None:
    """Write the realified problem in SDPA sparse format.

    Convention: minimize c^T x subject to sum_i x_i F_i - F0 >= 0 per block.
    PSD blocks come first (already containing the epsilon shift); a final
    diagonal block carries the scalar inequalities and lower bounds.
    """
    problem.check()
    nvar = len(problem.variables)
    index = {v: i for i, v in enumerate(problem.variables)}

    diag: list[tuple[dict[int, float], float]] = []
    for var, lb in problem.lower_bounds.items():
        diag.append(({index[var]: 1.0}, lb))
    for con in problem.scalar_constraints:
        row: dict[int, float] = {}
        for var, coeff in con.coeffs:
            row[index[var]] = row.get(index[var], 0.0) + coeff
        diag.append((row, con.bound))

    block_sizes = [2 * b.dim for b in problem.psd_blocks]
    if diag:
        block_sizes.append(-len(diag))

    lines = [
        '"voltbound sdpa export: min c^T x s.t. sum_i x_i F_i - F0 >= 0"',
        f"{nvar} = mDIM",
        f"{len(block_sizes)} = nBLOCK",
        "(" + ", ".join(str(sz) for sz in block_sizes) + ") = bLOCKsTRUCT",
    ]
    lines.append(
        "{" + ", ".join(repr(problem.objective.get(v, 0.0)) for v in problem.variables) + "}"
    )

    entries: list[str] = []

    def emit(mat_no: int, blk_no: int, i: int, j: int, val: float) -> None:
        if val != 0.0:
            entries.append(f"{mat_no} {blk_no} {i + 1} {j + 1} {val!r}")

    for b, block in enumerate(problem.psd_blocks, start=1):
        f0 = -realify(
            np.asarray(block.constant, dtype=complex) - problem.epsilon * np.eye(block.dim)
        )
        for i, j in zip(*np.nonzero(np.triu(f0))):
            emit(0, b, int(i), int(j), float(f0[i, j]))
        for var, coeff in block.terms:
            fm = realify(np.asarray(coeff, dtype=complex))
            for i, j in zip(*np.nonzero(np.triu(fm))):
                emit(index[var] + 1, b, int(i), int(j), float(fm[i, j]))

    if diag:
        blk = len(block_sizes)
        for d, (row, bound) in enumerate(diag):
            emit(0, blk, d, d, bound)
            for col, coeff in row.items():
                emit(col + 1, blk, d, d, coeff)

    with open(path, "w") as fh:
        fh.write("\n".join(lines + entries) + "\n")


def read_sdpa(path) -> tuple[np.ndarray, list[int], list[np.ndarray]]:
    """Parse an SDPA sparse file back into (c, block sizes, [F0, F1, ...])."""
    raw = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith(('"', "*")):
                raw.append(line)
    nvar = int(raw[0].split()[0])
    nblock = int(raw[1].split()[0])
    sizes = [int(tok) for tok in raw[2].strip("(){} =bLOCKsTRUCT").replace(",", " ").split()]
    if len(sizes) != nblock:
        raise SolverError(f"read_sdpa: expected {nblock} block sizes, got {len(sizes)}")
    c = np.array(
        [float(tok) for tok in raw[3].strip("{}").replace(",", " ").split()]
    )
    if c.size != nvar:
        raise SolverError(f"read_sdpa: expected {nvar} objective entries, got {c.size}")

    mats = [
        [np.zeros((abs(sz), abs(sz))) for sz in sizes] for _ in range(nvar + 1)
    ]
    for line in raw[4:]:
        mat_no_s, blk_s, i_s, j_s, val_s = line.split()
        mat_no, blk, i, j = int(mat_no_s), int(blk_s) - 1, int(i_s) - 1, int(j_s) - 1
        val = float(val_s)
        mats[mat_no][blk][i, j] = val
        mats[mat_no][blk][j, i] = val
    stacked = [
        np.block(
            [
                [m[b] if a == b else np.zeros((abs(sizes[a]), abs(sizes[b]))) for b in range(nblock)]
                for a in range(nblock)
            ]
        )
        if nblock > 1
        else m[0]
        for m in mats
    ]
    return c, sizes, stacked


def solve_sdpa(path, settings: SolveSettings = SolveSettings()) -> SdpSolution:
    """Solve an exported SDPA file directly (the re-import cross-check)."""
    c, _, mats = read_sdpa(path)
    nvar = c.size
    names = tuple(f"x{i}" for i in range(nvar))
    # One merged real block: sum_i x_i F_i - F0 >= 0. The epsilon shift is
    # already baked into F0, so solve with a margin small enough not to
    # tighten the problem further.
    block = AffineMatrixExpr(
        constant=-mats[0] + 0j, terms=tuple((names[i], mats[i + 1] + 0j) for i in range(nvar))
    )
    problem = SdpProblem(
        variables=names,
        objective={names[i]: float(c[i]) for i in range(nvar)},
        psd_blocks=(block,),
        epsilon=1e-12,
    )
    return solve(problem, settings=settings)
