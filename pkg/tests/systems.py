"""Small hand-built systems with known optima."""

import numpy as np

from rpsae.datamodel import CostParams, Line, OperationalParams, Resource, SystemSpec, Zone

THERMAL_COSTS = CostParams(invest_power=100.0, fixed_om=10.0, var_om=2.0, fuel=3.0)


def thermal_1bus(load=10.0, hours=2, voll=1e4, costs=THERMAL_COSTS):
    loads = np.full(hours, float(load)) if np.isscalar(load) else np.asarray(load, float)
    return SystemSpec([Zone("Z1")], [], [Resource("gas", "thermal", "Z1", costs, OperationalParams(unit_size=1.0))],
                      {"Z1": loads}, {}, voll, hours=loads.size)


def storage_1bus(hours=24, seed=0):
    rng = np.random.default_rng(seed)
    t = np.arange(hours)
    solar = np.clip(np.sin(np.pi * ((t % 24) - 6) / 12), 0, 1)
    load = 50 + 20 * rng.random(hours)
    res = [
        Resource("gas", "thermal", "Z1", CostParams(invest_power=300, var_om=1, fuel=40, startup=5),
                 OperationalParams(unit_size=10, rho_min=0.2, ramp_up=0.3, ramp_down=0.3)),
        Resource("pv", "vre", "Z1", CostParams(invest_power=60), availability_column="solar"),
        Resource("bat", "storage", "Z1", CostParams(invest_energy=10, invest_charge=20, var_om_charge=0.1),
                 OperationalParams(eta_charge=0.9, eta_discharge=0.95, depth_of_discharge=0.8)),
    ]
    return SystemSpec([Zone("Z1")], [], res, {"Z1": load}, {"solar": solar}, 1000.0, hours=hours)


def three_bus(hours=12, seed=1):
    rng = np.random.default_rng(seed)
    zones = [Zone("A"), Zone("B"), Zone("C")]
    res = [
        Resource("gasA", "thermal", "A", CostParams(invest_power=50, fuel=10), OperationalParams(unit_size=5)),
        Resource("gasB", "thermal", "B", CostParams(invest_power=200, fuel=30), OperationalParams(unit_size=5)),
        Resource("windC", "vre", "C", CostParams(invest_power=80), availability_column="wind"),
    ]
    lines = [Line("A", "B", 5.0, 15.0), Line("B", "C", 5.0, 15.0), Line("A", "C", 2.0, 10.0)]
    load = {z.id: 20 + 10 * rng.random(hours) for z in zones}
    return SystemSpec(zones, lines, res, load, {"wind": rng.random(hours)}, 500.0,
                      theta_bounds=(-0.5, 0.5), hours=hours)
