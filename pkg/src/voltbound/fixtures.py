"""Built-in study networks.

The three-bus feeder reproduces a published benchmark scenario whose line
data lives in an external reference: the loads, current limits, slack
voltage, uncertainty ellipsoid and nominal operating voltages are known,
but not the admittances. The feeder here is a surrogate: a radial chain
0-1-2-3 whose three line admittances are solved exactly so that the stated
nominal voltages satisfy the power balance at the nominal injections. Any
power-flow solve at the nominal injections therefore lands on the stated
operating point to solver precision.
"""

from __future__ import annotations

import numpy as np

from .network import LineSpec, NetworkModel

# Nominal operating point of the benchmark scenario (per-unit magnitude,
# angle in degrees).
THREE_BUS_NOMINAL_MAG = (0.987, 0.972, 0.965)
THREE_BUS_NOMINAL_ANGLE_DEG = (-0.124, -0.273, -0.302)

THREE_BUS_SLACK = 0.995 + 0.0j
THREE_BUS_LOADS = (0.8 + 0.25j, 0.5 + 0.1j, 0.9 + 0.5j)
THREE_BUS_CENTER = (0.4 + 0.0j, 0.3 + 0.0j, 0.5 + 0.0j)
THREE_BUS_LIMITS = (0.48, 0.23, 0.66)
THREE_BUS_AXES = (0.08, 0.06, 0.1)  # real-power half-axes of the ellipsoid


def three_bus_nominal_voltages() -> np.ndarray:
    mags = np.array(THREE_BUS_NOMINAL_MAG)
    angles = np.deg2rad(np.array(THREE_BUS_NOMINAL_ANGLE_DEG))
    return mags * np.exp(1j * angles)


def _chain_admittances(v0: complex, v: np.ndarray, net_power: np.ndarray) -> list[complex]:
    """Line admittances of a radial chain that make (v0, v) an exact solution.

    Walks the feeder from the leaf: the injection current at bus k must be
    carried by its incident lines, which pins each admittance in turn.
    """
    n = v.size
    i_inj = np.conj(net_power / v)
    ys: list[complex] = [0j] * n
    downstream = 0j  # sum of injection currents strictly below the current bus
    for k in range(n - 1, -1, -1):
        upstream_v = v0 if k == 0 else v[k - 1]
        ys[k] = (i_inj[k] + downstream) / (v[k] - upstream_v)
        downstream += i_inj[k]
    return ys


def three_bus_feeder() -> NetworkModel:
    """Benchmark scenario on the calibrated surrogate feeder.

    Injections carry no reactive power, so the ellipsoid is sampled in its
    real section; its shape matrix is the inverse of diag(axes^2).
    """
    v = three_bus_nominal_voltages()
    net = np.array(THREE_BUS_CENTER) - np.array(THREE_BUS_LOADS)
    ys = _chain_admittances(THREE_BUS_SLACK, v, net)
    psi = np.diag(1.0 / np.array(THREE_BUS_AXES) ** 2).astype(complex)
    return NetworkModel(
        n_buses=3,
        lines=(
            LineSpec(0, 1, ys[0]),
            LineSpec(1, 2, ys[1]),
            LineSpec(2, 3, ys[2]),
        ),
        slack_voltage=THREE_BUS_SLACK,
        shunt_loads=np.zeros(4, dtype=complex),
        load_powers=np.array(THREE_BUS_LOADS),
        nominal_injections=np.array(THREE_BUS_CENTER),
        ellipsoid_shape=psi,
        current_limits=np.array(THREE_BUS_LIMITS),
        reactive_fixed=True,
    )


def one_bus_toy(radius: float = 0.05) -> NetworkModel:
    """Single load bus behind one line; scalar complex injection ellipsoid.

    Small enough for dense brute-force sweeps of the uncertainty set, with
    a current limit far from active.
    """
    return NetworkModel(
        n_buses=1,
        lines=(LineSpec(0, 1, 2.0 - 6.0j),),
        slack_voltage=1.0 + 0.0j,
        shunt_loads=np.zeros(2, dtype=complex),
        load_powers=np.array([0.3 + 0.1j]),
        nominal_injections=np.array([0.2 + 0.0j]),
        ellipsoid_shape=np.array([[1.0 / radius**2]], dtype=complex),
        current_limits=np.array([10.0]),
        reactive_fixed=False,
    )
