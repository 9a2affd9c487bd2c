"""Distribution network model and admittance matrix construction.

Buses are numbered 0..N with bus 0 the slack bus (known voltage, no load
power, no uncertain injection). All quantities are per-unit; the package
performs no base conversion. Complex numbers cross the JSON boundary as
{"re": ..., "im": ...} objects.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ModelError

# Shape matrices with asymmetry below this are silently symmetrized;
# anything larger is rejected rather than repaired.
PSI_ASYMMETRY_TOL = 1e-10


@dataclass(frozen=True)
class LineSpec:
    """One line between two buses, given by its series admittance (p.u. siemens)."""

    from_bus: int
    to_bus: int
    admittance: complex


@dataclass(frozen=True)
class NetworkModel:
    """Immutable network description.

    ``n_buses`` is N, the number of non-slack buses. Arrays indexed by bus
    use 0-based storage: ``load_powers[k-1]`` belongs to bus k. Shunt loads
    cover all N+1 buses including the slack. ``ellipsoid_shape`` is the
    Hermitian matrix of the injected-power uncertainty set
    {S : (S - center)* Psi (S - center) < 1}. ``reactive_fixed`` marks
    scenarios where injections vary in real power only (the sampler then
    draws from the real section of the ellipsoid).
    """

    n_buses: int
    lines: tuple[LineSpec, ...]
    slack_voltage: complex
    shunt_loads: np.ndarray
    load_powers: np.ndarray
    nominal_injections: np.ndarray
    ellipsoid_shape: np.ndarray
    current_limits: np.ndarray
    reactive_fixed: bool = False

    def __post_init__(self):
        n = self.n_buses
        if not isinstance(n, int) or n < 1:
            raise ModelError(f"n_buses must be a positive integer, got {n!r}")
        object.__setattr__(self, "lines", tuple(self.lines))
        object.__setattr__(self, "slack_voltage", complex(self.slack_voltage))

        def coerce(name, value, shape, dtype):
            arr = np.array(value, dtype=dtype)
            if arr.shape != shape:
                raise ModelError(f"{name}: expected shape {shape}, got {arr.shape}")
            arr.flags.writeable = False
            return arr

        object.__setattr__(
            self, "shunt_loads", coerce("shunt_loads", self.shunt_loads, (n + 1,), complex)
        )
        object.__setattr__(
            self, "load_powers", coerce("load_powers", self.load_powers, (n,), complex)
        )
        object.__setattr__(
            self,
            "nominal_injections",
            coerce("nominal_injections", self.nominal_injections, (n,), complex),
        )
        object.__setattr__(
            self,
            "current_limits",
            coerce("current_limits", self.current_limits, (n,), float),
        )

        psi = np.array(self.ellipsoid_shape, dtype=complex)
        if psi.shape != (n, n):
            raise ModelError(f"ellipsoid_shape: expected shape {(n, n)}, got {psi.shape}")
        asym = float(np.max(np.abs(psi - psi.conj().T))) if n else 0.0
        scale = max(1.0, float(np.max(np.abs(psi))))
        if asym > PSI_ASYMMETRY_TOL * scale:
            raise ModelError(
                f"ellipsoid_shape: asymmetry {asym:.3e} exceeds the repair tolerance"
            )
        psi = (psi + psi.conj().T) / 2.0
        psi.flags.writeable = False
        object.__setattr__(self, "ellipsoid_shape", psi)


def _line_problems(model: NetworkModel) -> list[str]:
    n = model.n_buses
    problems = []
    seen: set[tuple[int, int]] = set()
    for line in model.lines:
        i, j = line.from_bus, line.to_bus
        if not (0 <= i <= n and 0 <= j <= n):
            problems.append(f"lines: bus index out of range in {i}-{j}")
            continue
        if i == j:
            problems.append(f"lines: self-loop at bus {i}")
            continue
        key = (min(i, j), max(i, j))
        if key in seen:
            problems.append(f"lines: duplicate line between buses {key[0]} and {key[1]}")
        seen.add(key)
    return problems


def _is_connected(model: NetworkModel) -> bool:
    n = model.n_buses
    adj: dict[int, list[int]] = {k: [] for k in range(n + 1)}
    for line in model.lines:
        if 0 <= line.from_bus <= n and 0 <= line.to_bus <= n:
            adj[line.from_bus].append(line.to_bus)
            adj[line.to_bus].append(line.from_bus)
    seen = {0}
    stack = [0]
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in seen:
                seen.add(nb)
                stack.append(nb)
    return len(seen) == n + 1


def build_admittance(model: NetworkModel) -> np.ndarray:
    """Construct the (N+1)x(N+1) symmetric admittance matrix Y.

    Off-diagonal (i, j) is -y_ij for connected pairs, 0 otherwise; diagonal
    i is the bus shunt admittance plus the sum of incident line admittances.
    Raises ModelError for duplicate lines or a graph that does not connect
    every bus to the slack.
    """
    problems = _line_problems(model)
    if problems:
        raise ModelError("; ".join(problems))
    if not _is_connected(model):
        raise ModelError("disconnected: not every bus is reachable from bus 0")

    n = model.n_buses
    y = np.zeros((n + 1, n + 1), dtype=complex)
    for line in model.lines:
        i, j = line.from_bus, line.to_bus
        adm = complex(line.admittance)
        y[i, j] -= adm
        y[j, i] -= adm
        y[i, i] += adm
        y[j, j] += adm
    y[np.diag_indices(n + 1)] += model.shunt_loads
    y.flags.writeable = False
    return y


def validate(model: NetworkModel) -> list[str]:
    """Return a list of invariant violations; empty iff the model is sound."""
    violations = []
    violations.extend(_line_problems(model))
    if not _is_connected(model):
        violations.append("lines: graph including bus 0 is not connected")

    eigs = np.linalg.eigvalsh(model.ellipsoid_shape)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    if eigs[0] < -1e-10 * scale:
        violations.append(
            f"ellipsoid_shape: not positive semidefinite (min eigenvalue {eigs[0]:.3e})"
        )

    if np.any(model.current_limits <= 0.0):
        bad = int(np.argmin(model.current_limits))
        violations.append(f"current_limits: bus {bad + 1} limit must be > 0")

    for name in ("slack_voltage",):
        if not np.isfinite(getattr(model, name)):
            violations.append(f"{name}: not finite")
    for name in ("shunt_loads", "load_powers", "nominal_injections", "current_limits"):
        if not np.all(np.isfinite(getattr(model, name))):
            violations.append(f"{name}: contains non-finite entries")

    if not violations:
        y = build_admittance(model)
        if float(np.max(np.abs(y - y.T))) > 1e-12 * max(1.0, float(np.max(np.abs(y)))):
            violations.append("admittance: Y is not symmetric")
    return violations


# ---------------------------------------------------------------------------
# JSON interface
# ---------------------------------------------------------------------------

SCHEMA_VERSION = 1


def _c2d(z: complex) -> dict:
    return {"re": float(z.real), "im": float(z.imag)}


def _d2c(obj, where: str) -> complex:
    try:
        return complex(float(obj["re"]), float(obj["im"]))
    except (TypeError, KeyError, ValueError) as exc:
        raise ModelError(f"{where}: expected a {{re, im}} object, got {obj!r}") from exc


def network_to_dict(model: NetworkModel) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "n_buses": model.n_buses,
        "slack_voltage": _c2d(model.slack_voltage),
        "lines": [
            {"from": ln.from_bus, "to": ln.to_bus, "y": _c2d(ln.admittance)}
            for ln in model.lines
        ],
        "shunt_loads": [_c2d(z) for z in model.shunt_loads],
        "load_powers": [_c2d(z) for z in model.load_powers],
        "nominal_injections": [_c2d(z) for z in model.nominal_injections],
        "psi": [[_c2d(z) for z in row] for row in model.ellipsoid_shape],
        "current_limits": [float(x) for x in model.current_limits],
        "reactive_injection_fixed": bool(model.reactive_fixed),
    }


def network_from_dict(doc: dict) -> NetworkModel:
    if not isinstance(doc, dict):
        raise ModelError("network document must be a JSON object")
    missing = [
        key
        for key in (
            "n_buses",
            "slack_voltage",
            "lines",
            "shunt_loads",
            "load_powers",
            "nominal_injections",
            "psi",
            "current_limits",
        )
        if key not in doc
    ]
    if missing:
        raise ModelError(f"missing fields: {', '.join(missing)}")

    n = doc["n_buses"]
    if not isinstance(n, int) or n < 1:
        raise ModelError(f"n_buses: must be a positive integer, got {n!r}")

    lines = []
    for idx, entry in enumerate(doc["lines"]):
        try:
            lines.append(
                LineSpec(int(entry["from"]), int(entry["to"]), _d2c(entry["y"], f"lines[{idx}].y"))
            )
        except (TypeError, KeyError, ValueError) as exc:
            raise ModelError(f"lines[{idx}]: expected {{from, to, y}}") from exc

    psi_doc = doc["psi"]
    if psi_doc and isinstance(psi_doc[0], dict):
        # flat row-major list of N*N entries
        if len(psi_doc) != n * n:
            raise ModelError(f"psi: expected {n * n} flat entries, got {len(psi_doc)}")
        flat = [_d2c(z, f"psi[{i}]") for i, z in enumerate(psi_doc)]
        psi = np.array(flat, dtype=complex).reshape(n, n)
    else:
        psi = np.array(
            [[_d2c(z, f"psi[{i}][{j}]") for j, z in enumerate(row)] for i, row in enumerate(psi_doc)],
            dtype=complex,
        )

    return NetworkModel(
        n_buses=n,
        lines=tuple(lines),
        slack_voltage=_d2c(doc["slack_voltage"], "slack_voltage"),
        shunt_loads=[_d2c(z, f"shunt_loads[{i}]") for i, z in enumerate(doc["shunt_loads"])],
        load_powers=[_d2c(z, f"load_powers[{i}]") for i, z in enumerate(doc["load_powers"])],
        nominal_injections=[
            _d2c(z, f"nominal_injections[{i}]") for i, z in enumerate(doc["nominal_injections"])
        ],
        ellipsoid_shape=psi,
        current_limits=doc["current_limits"],
        reactive_fixed=bool(doc.get("reactive_injection_fixed", False)),
    )


def load_network(path: str | Path) -> NetworkModel:
    """Read a network JSON file; raises ModelError with field diagnostics."""
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ModelError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ModelError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return network_from_dict(doc)


def with_updates(model: NetworkModel, **changes) -> NetworkModel:
    """Copy of the model with selected fields replaced."""
    return replace(model, **changes)
