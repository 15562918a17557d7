"""Preset experiments: dephasing sweeps and their parameter variations.

A sweep runs one observable set per grid value of a single parameter. Rows
are computed independently from the base graph, so any row can be
re-run on its own and reproduce the same numbers.

Sweepable parameters: ``mu32`` (dephasing probability per step),
``q32`` (dephasing rate), ``omega3``, ``k21``, ``k42`` and ``eta`` (the
crossing threshold; it leaves the graph untouched).
"""

from __future__ import annotations

import csv
import dataclasses
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import Trajectory, crossing_time, evolve
from .errors import WalkError
from .hitting import HittingResult, hitting_stats, mean_hitting_steps
from .reaction import COUPLING32, K42, OMEGA3, ReactionGraph, compile_graph, cryptochrome_preset

PARAMETERS = ("mu32", "q32", "omega3", "k21", "k42", "eta")
OUTPUTS = ("t41", "tc", "f41", "trajectory")

#: Decade ladder for the omega_3 sweeps, topped with a rung at 1000 x the coupling.
OMEGA3_LADDER = (OMEGA3, 10 * OMEGA3, 100 * OMEGA3, 1000 * OMEGA3, 1000 * COUPLING32)


def mu_grid(n_log: int = 25, lo: float = 1e-9, hi: float = 1.0) -> tuple:
    """``0`` followed by ``n_log`` log-spaced dephasing probabilities."""
    return (0.0,) + tuple(float(x) for x in np.logspace(math.log10(lo), math.log10(hi), n_log))


@dataclass(frozen=True)
class SweepSpec:
    name: str
    base: ReactionGraph
    parameter: str
    grid: tuple
    outputs: tuple = ("t41",)
    eta: float = 0.2
    mu32: float | None = None
    n_steps: int = 100_000_000
    stride: int = 1000
    max_steps: int = 2_000_000_000
    f_every: int = 1000
    description: str = ""

    def __post_init__(self):
        object.__setattr__(self, "grid", tuple(float(x) for x in self.grid))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if self.parameter not in PARAMETERS:
            raise ValueError(f"unknown sweep parameter {self.parameter!r}")
        bad = set(self.outputs) - set(OUTPUTS)
        if bad:
            raise ValueError(f"unknown outputs {sorted(bad)}")
        if not self.grid:
            raise ValueError("sweep grid is empty")

    def graph_at(self, value: float) -> ReactionGraph:
        g = self.base
        if self.mu32 is not None:
            g = g.with_mu(3, 2, self.mu32)
        p = self.parameter
        if p == "mu32":
            g = g.with_mu(3, 2, value)
        elif p == "q32":
            g = g.with_dephasing_rate(3, 2, value)
        elif p == "omega3":
            g = g.with_coherent(3, 2, omega_j=value)
        elif p == "k21":
            g = g.with_damping_rate(2, 1, value)
        elif p == "k42":
            g = g.with_damping_rate(4, 2, value)
        g.validate()
        return g

    def eta_at(self, value: float) -> float:
        return value if self.parameter == "eta" else self.eta


@dataclass(frozen=True)
class SweepRow:
    param_name: str
    param_value: float
    n41: float
    t41_s: float
    tc_s: float | None = None
    tail_mass: float | None = None
    n_mp: int | None = None
    distribution: HittingResult | None = field(default=None, repr=False)
    trajectory: Trajectory | None = field(default=None, repr=False)


class SweepPointError(WalkError):
    """A grid point failed; carries the offending value."""

    def __init__(self, parameter, value, cause):
        super().__init__(f"{parameter}={value:g}: {cause}")
        self.parameter = parameter
        self.value = value
        self.cause = cause


def run_point(spec: SweepSpec, value: float) -> SweepRow:
    try:
        g = spec.graph_at(value)
        k = compile_graph(g)
        rho0 = g.initial_state()
        n41 = mean_hitting_steps(k, rho0)
        tc = tail = n_mp = dist = traj = None
        if "tc" in spec.outputs:
            tc = crossing_time(k, rho0, spec.eta_at(value), spec.max_steps, stride=spec.stride).t_c
        if "f41" in spec.outputs:
            dist = hitting_stats(k, rho0, keep_every=spec.f_every)
            tail, n_mp = dist.tail_mass, dist.n_mp
        if "trajectory" in spec.outputs:
            traj = evolve(k, rho0, spec.n_steps, spec.stride, keep_states=False)
    except WalkError as exc:
        raise SweepPointError(spec.parameter, value, exc) from exc
    return SweepRow(spec.parameter, value, n41, n41 * g.dt, tc, tail, n_mp, dist, traj)


def run_sweep(spec: SweepSpec, workers: int = 1) -> list:
    """One :class:`SweepRow` per grid value, in grid order."""
    if workers > 1 and len(spec.grid) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(run_point, [spec] * len(spec.grid), spec.grid))
    return [run_point(spec, v) for v in spec.grid]


def write_sweep_csv(rows, path) -> None:
    """Columns ``param_name, param_value, t41_s, n41, tc_s, tail_mass``; empty cells for skipped outputs."""

    def fmt(x):
        return "" if x is None else f"{x:.11e}"

    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["param_name", "param_value", "t41_s", "n41", "tc_s", "tail_mass"])
        for r in rows:
            w.writerow([r.param_name, fmt(r.param_value), fmt(r.t41_s), fmt(r.n41), fmt(r.tc_s), fmt(r.tail_mass)])


def scenario_presets() -> dict:
    """Named presets; each maps to the list of sweeps it runs."""
    base = cryptochrome_preset()
    grid = mu_grid()
    fast = base.with_damping_rate(4, 2, 10 * K42)
    presets = {
        "fig5a": [SweepSpec("fig5a", base, "mu32", grid, ("t41",), description="mean hitting time vs dephasing")],
        "fig5b": [
            SweepSpec("fig5b", base, "mu32", grid, ("t41", "tc"), eta=0.2, description="time for rho44 to reach 0.2 vs dephasing")
        ],
        "fig6": [
            SweepSpec("fig6", base, "mu32", (0.0, 1.0), ("t41", "f41"), description="hitting-time distributions, quantum and classical limits")
        ],
        "fig8": [
            SweepSpec("fig8", base, "mu32", (1e-7, 1e-6, 1e-5), ("t41", "trajectory"), description="populations and |rho32| for three dephasing strengths")
        ],
        "fig9a": [
            SweepSpec(f"fig9a_omega3_{w:.3g}", base.with_coherent(3, 2, omega_j=w), "mu32", grid, ("t41",),
                      description=f"t41 vs dephasing at omega3={w:.3g}")
            for w in OMEGA3_LADDER
        ],
        "fig9b": [
            SweepSpec(f"fig9b_omega3_{w:.3g}", fast.with_coherent(3, 2, omega_j=w), "mu32", grid, ("t41",),
                      description=f"t41 vs dephasing at k42=10*k43, omega3={w:.3g}")
            for w in OMEGA3_LADDER
        ],
        "k21_sensitivity": [
            SweepSpec(f"k21_sensitivity_k21_{k:.0e}", base.with_damping_rate(2, 1, k), "mu32", grid, ("t41",),
                      description=f"t41 vs dephasing at k21={k:.0e}")
            for k in (1e7, 1e8, 1e9)
        ],
    }
    return presets


def with_dt(spec: SweepSpec, dt: float) -> SweepSpec:
    return dataclasses.replace(spec, base=spec.base.with_dt(dt))
