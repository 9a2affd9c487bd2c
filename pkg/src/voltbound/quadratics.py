"""Hermitian quadratic forms on the monomial vector X = (V (x) V*^T; V; 1).

Every network constraint (ellipsoid membership of the injected power,
current magnitude limits, voltage magnitude bounds) becomes a quadratic
form X* Q X on the length N^2+N+1 monomial vector. Bus indices in the
public functions are 1-based (bus k in 1..N); storage is 0-based with the
mapping handled by the position helpers below.

Monomial layout (0-based positions):
  kron_pos(n, a, b) = (a-1)*n + (b-1)   holds v_a * conj(v_b)
  lin_pos(n, a)     = n*n + (a-1)       holds v_a
  const_pos(n)      = n*n + n           holds 1
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AssemblyError
from .network import NetworkModel

HERMITIAN_TOL = 1e-12


def monomial_dim(n: int) -> int:
    return n * n + n + 1


def kron_pos(n: int, a: int, b: int) -> int:
    """Position of v_a * conj(v_b) in the V (x) V*^T block (a, b 1-based)."""
    return (a - 1) * n + (b - 1)


def lin_pos(n: int, a: int) -> int:
    """Position of v_a in the linear block (a 1-based)."""
    return n * n + (a - 1)


def const_pos(n: int) -> int:
    """Position of the constant 1 entry."""
    return n * n + n


def monomial_vector(v: np.ndarray) -> np.ndarray:
    """Stack (V (x) V*^T; V; 1) for a length-N complex voltage vector."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    n = v.size
    if n < 1:
        raise AssemblyError("monomial_vector: need at least one bus voltage")
    x = np.empty(monomial_dim(n), dtype=complex)
    x[: n * n] = np.kron(v, v.conj())
    x[n * n : n * n + n] = v
    x[-1] = 1.0
    return x


@dataclass(frozen=True)
class QuadraticForm:
    """Hermitian matrix acting on the monomial vector, tagged by its role."""

    matrix: np.ndarray
    label: str

    def __post_init__(self):
        m = np.array(self.matrix, dtype=complex)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise AssemblyError(f"{self.label}: matrix must be square, got {m.shape}")
        asym = float(np.max(np.abs(m - m.conj().T)))
        scale = max(1.0, float(np.max(np.abs(m))))
        if asym > HERMITIAN_TOL * scale:
            raise AssemblyError(
                f"{self.label}: not Hermitian (asymmetry {asym:.3e}, scale {scale:.3e})"
            )
        m = (m + m.conj().T) / 2.0
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    def evaluate(self, x: np.ndarray) -> float:
        """Real value of X* Q X (the imaginary part vanishes for Hermitian Q)."""
        return float(np.real(np.vdot(x, self.matrix @ x)))


def _check_y(y: np.ndarray, n: int, who: str) -> np.ndarray:
    y = np.asarray(y, dtype=complex)
    if y.shape != (n + 1, n + 1):
        raise AssemblyError(f"{who}: admittance matrix shape {y.shape} != {(n + 1, n + 1)}")
    return y


def build_m_sg(y: np.ndarray, model: NetworkModel) -> np.ndarray:
    """N x (N^2+N+1) map with M_Sg @ X = S_g - S_g^0 for every voltage V.

    Row k carries conj(Y)[k, 1:] on the k-th block of the kron section,
    conj(Y[k, 0]) * conj(v0) on the k-th linear position, and the load
    minus nominal-injection offset in the constant column.
    """
    n = model.n_buses
    y = _check_y(y, n, "build_m_sg")
    yc = y.conj()
    v0c = np.conj(model.slack_voltage)
    m = np.zeros((n, monomial_dim(n)), dtype=complex)
    for k in range(1, n + 1):
        row = k - 1
        m[row, (k - 1) * n : k * n] = yc[k, 1:]
        m[row, lin_pos(n, k)] = yc[k, 0] * v0c
        m[row, const_pos(n)] = model.load_powers[row] - model.nominal_injections[row]
    return m


def build_q_sg(y: np.ndarray, model: NetworkModel) -> QuadraticForm:
    """Injection-ellipsoid form: X* Q X = (S_g - S0)* Psi (S_g - S0) - 1.

    Negative exactly when the injected power implied by V lies inside the
    uncertainty ellipsoid.
    """
    m = build_m_sg(y, model)
    q = m.conj().T @ model.ellipsoid_shape @ m
    c = const_pos(model.n_buses)
    q[c, c] -= 1.0
    return QuadraticForm(q, "injection")


def build_m_i(y: np.ndarray, model: NetworkModel) -> np.ndarray:
    """N x (N^2+N+1) map with M_I @ X = (i_1, ..., i_N)^T."""
    n = model.n_buses
    y = _check_y(y, n, "build_m_i")
    m = np.zeros((n, monomial_dim(n)), dtype=complex)
    m[:, n * n : n * n + n] = y[1:, 1:]
    m[:, const_pos(n)] = y[1:, 0] * model.slack_voltage
    return m


def build_q_current(y: np.ndarray, model: NetworkModel, k: int) -> QuadraticForm:
    """Current-limit form for bus k: X* Q X = |i_k|^2 - (I_k^max)^2."""
    n = model.n_buses
    if not 1 <= k <= n:
        raise AssemblyError(f"build_q_current: bus index {k} outside 1..{n}")
    row = build_m_i(y, model)[k - 1]
    q = np.outer(row.conj(), row)
    c = const_pos(n)
    q[c, c] -= float(model.current_limits[k - 1]) ** 2
    return QuadraticForm(q, f"current[{k}]")


def build_q_vmin(n: int, k: int, vmin_sq: float) -> QuadraticForm:
    """Lower-bound form for bus k: X* Q X = |v_k|^2 - vmin_sq.

    The |v_k|^2 term reads the linear block (position N^2+k); the link
    family tying it to the kron diagonal is supplied by the catalog.
    """
    if not 1 <= k <= n:
        raise AssemblyError(f"build_q_vmin: bus index {k} outside 1..{n}")
    if vmin_sq < 0.0:
        raise AssemblyError(f"build_q_vmin: negative bound squared {vmin_sq}")
    q = np.zeros((monomial_dim(n), monomial_dim(n)), dtype=complex)
    q[lin_pos(n, k), lin_pos(n, k)] = 1.0
    q[const_pos(n), const_pos(n)] = -float(vmin_sq)
    return QuadraticForm(q, f"vmin[{k}]")


def build_q_vmax(n: int, k: int, vmax_sq: float) -> QuadraticForm:
    """Upper-bound form for bus k: X* Q X = vmax_sq - |v_k|^2."""
    if not 1 <= k <= n:
        raise AssemblyError(f"build_q_vmax: bus index {k} outside 1..{n}")
    if vmax_sq < 0.0:
        raise AssemblyError(f"build_q_vmax: negative bound squared {vmax_sq}")
    q = np.zeros((monomial_dim(n), monomial_dim(n)), dtype=complex)
    q[lin_pos(n, k), lin_pos(n, k)] = -1.0
    q[const_pos(n), const_pos(n)] = float(vmax_sq)
    return QuadraticForm(q, f"vmax[{k}]")


def constraint_set(y: np.ndarray, model: NetworkModel) -> list[QuadraticForm]:
    """The N+1 constraint forms {Q_Sg, Q_I_1, ..., Q_I_N} in that order."""
    return [build_q_sg(y, model)] + [
        build_q_current(y, model, k) for k in range(1, model.n_buses + 1)
    ]


# ---------------------------------------------------------------------------
# Debug dump: sparse triplets for cross-implementation diffing
# ---------------------------------------------------------------------------


def form_to_dict(q: QuadraticForm, zero_tol: float = 0.0) -> dict:
    rows, cols = np.nonzero(np.abs(q.matrix) > zero_tol)
    entries = [
        {
            "i": int(i),
            "j": int(j),
            "re": float(q.matrix[i, j].real),
            "im": float(q.matrix[i, j].imag),
        }
        for i, j in zip(rows, cols)
    ]
    return {"n": q.dim, "label": q.label, "entries": entries}


def form_from_dict(doc: dict) -> QuadraticForm:
    dim = int(doc["n"])
    m = np.zeros((dim, dim), dtype=complex)
    for e in doc["entries"]:
        m[int(e["i"]), int(e["j"])] = complex(float(e["re"]), float(e["im"]))
    return QuadraticForm(m, str(doc["label"]))


def dump_form(q: QuadraticForm, path: str | Path) -> None:
    with open(path, "w") as fh:
        json.dump(form_to_dict(q), fh, indent=1, sort_keys=True)
        fh.write("\n")
