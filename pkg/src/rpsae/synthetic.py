"""Deterministic synthetic systems for tests, demos and trend checks."""

from __future__ import annotations

import numpy as np

from .datamodel import CostParams, Line, OperationalParams, Resource, SystemSpec, Zone

HOURS_PER_YEAR = 8760


def _load_profile(hours, rng, peak=1000.0, phase=0.0):
    t = np.arange(hours)
    day = 0.5 - 0.5 * np.cos(2 * np.pi * (t % 24 - 4) / 24)
    week = np.where((t // 24) % 7 >= 5, 0.88, 1.0)
    season = 1.0 + 0.15 * np.cos(2 * np.pi * (t / HOURS_PER_YEAR) * 2 + phase)
    noise = 1.0 + 0.03 * rng.standard_normal(hours)
    return peak * (0.6 + 0.4 * day) * week * season * noise / 1.25


def _solar(hours, rng):
    t = np.arange(hours)
    sun = np.clip(np.sin(np.pi * ((t % 24) - 6) / 12), 0.0, None)
    cloud = np.repeat(np.clip(0.75 + 0.25 * rng.standard_normal(hours // 24 + 1), 0.2, 1.0), 24)[:hours]
    return np.clip(sun * cloud, 0.0, 1.0)


def _wind(hours, rng):
    x = np.empty(hours)
    v = 0.0
    for t in range(hours):
        v = 0.95 * v + 0.3 * rng.standard_normal()
        x[t] = v
    return np.clip(0.4 + 0.25 * x, 0.0, 1.0)


def make_system(hours: int = 1680, seed: int = 0, zones: int = 1, thermal: bool = True, solar: bool = True,
                wind: bool = True, storage: bool = True, unit_commitment: bool = True,
                voll: float = 5000.0) -> SystemSpec:
    """A small system whose capital costs are scaled to the ``hours / 8760`` horizon.

    ``unit_commitment=False`` removes minimum output, startup costs and ramp
    limits so that periods do not interact through thermal operations.
    """
    rng = np.random.default_rng(seed)
    f = hours / HOURS_PER_YEAR
    zone_ids = ["z1"] if zones == 1 else [f"z{i + 1}" for i in range(zones)]
    load, avail, resources = {}, {}, []
    for i, z in enumerate(zone_ids):
        load[z] = _load_profile(hours, rng, peak=1000.0 / zones * (1 + 0.2 * i), phase=0.7 * i)
        if thermal:
            ops = OperationalParams(unit_size=50.0, rho_min=0.3, ramp_up=0.5, ramp_down=0.5) if unit_commitment \
                else OperationalParams(unit_size=50.0)
            resources.append(Resource(f"gas_{z}", "thermal", z,
                                      CostParams(invest_power=80000 * f, fixed_om=10000 * f, var_om=3.0,
                                                 fuel=30.0 + 2.0 * i, startup=60.0 if unit_commitment else 0.0),
                                      ops))
        if solar:
            avail[f"solar_{z}"] = _solar(hours, rng)
            resources.append(Resource(f"solar_{z}", "vre", z,
                                      CostParams(invest_power=45000 * f, fixed_om=10000 * f),
                                      availability_column=f"solar_{z}"))
        if wind:
            avail[f"wind_{z}"] = _wind(hours, rng)
            resources.append(Resource(f"wind_{z}", "vre", z,
                                      CostParams(invest_power=70000 * f, fixed_om=15000 * f, var_om=0.5),
                                      availability_column=f"wind_{z}"))
        if storage:
            resources.append(Resource(f"battery_{z}", "storage", z,
                                      CostParams(invest_energy=12000 * f, invest_charge=25000 * f,
                                                 fixed_om_charge=5000 * f, var_om_charge=0.5),
                                      OperationalParams(eta_charge=0.92, eta_discharge=0.92)))
    lines = []
    if zones > 1:
        pairs = [(zone_ids[i], zone_ids[i + 1]) for i in range(zones - 1)]
        if zones > 2:
            pairs.append((zone_ids[-1], zone_ids[0]))
        lines = [Line(a, b, susceptance=10.0, max_flow=300.0) for a, b in pairs]
    return SystemSpec(zones=[Zone(z) for z in zone_ids], lines=lines, resources=resources, load=load,
                      availability=avail, voll=voll, hours=hours)


def two_regime_year(seed: int = 0, weeks: int = 52, q: int = 168, shuffle: bool = True):
    """A year of ``weeks`` periods, half "summer" and half "winter", with distinct shapes.

    Returns ``(spec, labels)`` where ``labels[i]`` is 0 for summer and 1 for winter weeks.
    """
    if weeks % 2:
        raise ValueError("weeks must be even")
    rng = np.random.default_rng(seed)
    labels = np.array([0] * (weeks // 2) + [1] * (weeks // 2))
    if shuffle:
        labels = rng.permutation(labels)
    h = np.arange(q) % 24
    summer = 900 + 500 * np.clip(np.sin(np.pi * (h - 8) / 12), 0, None)
    winter = 1100 + 250 * (np.exp(-((h - 8) ** 2) / 4) + np.exp(-((h - 19) ** 2) / 4))
    sun_s = np.clip(np.sin(np.pi * (h - 5) / 14), 0, None)
    sun_w = 0.5 * np.clip(np.sin(np.pi * (h - 8) / 8), 0, None)
    load, sol = [], []
    for lab in labels:
        base, sun = (summer, sun_s) if lab == 0 else (winter, sun_w)
        load.append(base * (1 + 0.02 * rng.standard_normal(q)))
        sol.append(np.clip(sun * (1 + 0.05 * rng.standard_normal(q)), 0, 1))
    hours = weeks * q
    f = hours / HOURS_PER_YEAR
    resources = [
        Resource("gas", "thermal", "z1", CostParams(invest_power=80000 * f, fixed_om=10000 * f, fuel=30.0),
                 OperationalParams(unit_size=50.0)),
        Resource("solar", "vre", "z1", CostParams(invest_power=60000 * f), availability_column="solar"),
    ]
    spec = SystemSpec(zones=[Zone("z1")], lines=[], resources=resources,
                      load={"z1": np.concatenate(load)}, availability={"solar": np.concatenate(sol)},
                      voll=5000.0, hours=hours)
    return spec, labels
