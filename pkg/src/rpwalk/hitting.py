"""Hitting-time statistics of a reaction walk.

The probability of first reaching ``target`` at step ``n`` is

    f(n) = Tr[ Q K (P K)^(n-1) rho0 ],   f(0) = 0,

where ``P`` and ``Q`` are the superoperators ``rho -> P rho P`` and
``rho -> Q rho Q`` for the projector ``Q = |target><target|`` and
``P = 1 - Q``. Its mean has the closed resolvent form

    n_mean = Tr[ Q K (1 - P K)^(-2) rho0 ],

evaluated here with two linear solves.

The distribution is produced in blocks: with ``A = P K`` and row vectors
``c A^i`` precomputed for ``i < block``, one block of ``f`` costs a single
``(block, dim**2)`` matrix-vector product, and the conditioned state is
advanced with ``A**block``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .channels import projector
from .errors import ConvergenceError, TailTooHeavy
from .linalg import SINGULAR_FLOOR, Superoperator, check_invertible, superop_from_sandwich, trace_row, vectorize
from .reaction import StepMap

TAIL_BOUND = 1e-6
MAX_STEPS = 2**31
DEFAULT_BLOCK = 8192


@dataclass(frozen=True)
class MeasurementMaps:
    target: int
    q_map: Superoperator
    p_map: Superoperator


def measurement_maps(dim: int, target: int) -> MeasurementMaps:
    q = projector(dim, target)
    p = np.eye(dim) - q
    return MeasurementMaps(target, superop_from_sandwich(q), superop_from_sandwich(p))


@dataclass(frozen=True)
class HittingResult:
    """Hitting statistics.

    ``f`` holds ``f(n)`` at the step counts ``n`` (``f[i]`` belongs to
    ``n[i]``); it is ``None`` when only summary numbers were kept.
    ``tail_mass`` is the probability of not having hit by ``n_max``.
    """

    dt: float
    n_max: int
    tail_mass: float
    n_mp: int | None
    n41: float | None = None
    f: np.ndarray | None = None
    n: np.ndarray | None = None

    @property
    def t41(self) -> float | None:
        return None if self.n41 is None else self.n41 * self.dt

    def write_csv(self, path) -> None:
        if self.f is None:
            raise ValueError("no distribution stored")
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["n", "f41"])
            for n, f in zip(self.n, self.f):
                w.writerow([int(n), f"{f:.11e}"])


def _operators(step_map: StepMap, target: int | None):
    dim = step_map.dim
    target = dim if target is None else target
    mm = measurement_maps(dim, target)
    k = step_map.superop.matrix
    a = mm.p_map.matrix @ k
    c = trace_row(dim) @ mm.q_map.matrix @ k
    return a, c, trace_row(dim)


def conditioned_map(step_map: StepMap, target: int | None = None) -> np.ndarray:
    """Matrix of ``P K``: one step followed by a null measurement."""
    return _operators(step_map, target)[0]


def spectral_radius(a: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(a))))


def _row_powers(row: np.ndarray, a: np.ndarray, count: int) -> np.ndarray:
    # rows[i] = row @ a**i by doubling
    rows = row[None, :].astype(np.complex128)
    p = a
    while rows.shape[0] < count:
        rows = np.vstack([rows, rows @ p])
        p = p @ p
    return rows[:count]


def iter_hitting_blocks(step_map: StepMap, rho0, target: int | None = None, block: int = DEFAULT_BLOCK):
    """Yield ``(n_first, f_block, survival_block)`` for consecutive step ranges.

    ``survival_block[i]`` is the probability of not having hit by step
    ``n_first + i``.
    """
    a, c, tr = _operators(step_map, target)
    f_rows = _row_powers(c, a, block)
    s_rows = _row_powers(tr @ a, a, block)
    jump = np.linalg.matrix_power(a, block)
    v = vectorize(np.asarray(rho0, dtype=np.complex128)).copy()
    n0 = 1
    while True:
        yield n0, (f_rows @ v).real, (s_rows @ v).real
        v = jump @ v
        n0 += block


def hitting_stats(
    step_map: StepMap,
    rho0,
    target: int | None = None,
    n_max: int | None = None,
    *,
    tail_bound: float = TAIL_BOUND,
    keep_every: int | None = None,
    block: int = DEFAULT_BLOCK,
) -> HittingResult:
    """Stream the hitting distribution up to ``n_max`` steps.

    Without ``n_max`` the stream stops at the first ``n`` whose tail mass is
    below ``tail_bound`` and raises :class:`TailTooHeavy` past ``2**31`` steps.
    ``keep_every=k`` stores ``f(n)`` at ``n = 0, k, 2k, ...``; ``None`` keeps
    nothing. ``n41`` in the result is the truncated weighted sum and
    ``tail_mass`` is ``1 - sum f``.
    """
    if n_max is not None and n_max < 1:
        raise ValueError("n_max must be at least 1")
    if n_max is None:
        radius = spectral_radius(conditioned_map(step_map, target))
        if radius >= 1.0 - 1e-15:
            raise TailTooHeavy(
                "conditioned map has spectral radius 1: probability can avoid the target forever",
                tail_mass=1.0,
            )
    limit = MAX_STEPS if n_max is None else n_max
    kept_f, kept_n = ([0.0], [0]) if keep_every else ([], [])
    weighted, mass = [], []
    best_f, best_n = 0.0, None
    stop = None
    for n0, fb, _ in iter_hitting_blocks(step_map, rho0, target, block):
        ns = np.arange(n0, n0 + fb.size, dtype=np.int64)
        cut = fb.size
        if n0 + fb.size - 1 >= limit:
            cut = limit - n0 + 1
        if n_max is None:
            tail_run = (1.0 - math.fsum(mass)) - np.cumsum(fb[:cut])
            below = np.nonzero(tail_run < tail_bound)[0]
            if below.size:
                cut = int(below[0]) + 1
                stop = n0 + cut - 1
        fb, ns = fb[:cut], ns[:cut]
        # pairwise sums inside a block, exact accumulation across blocks
        weighted.append(float(np.dot(ns.astype(np.float64), fb)))
        mass.append(float(fb.sum()))
        i = int(np.argmax(fb))
        if fb[i] > best_f:
            best_f, best_n = float(fb[i]), int(ns[i])
        if keep_every:
            sel = (ns % keep_every) == 0
            kept_f.extend(fb[sel].tolist())
            kept_n.extend(ns[sel].tolist())
        last = int(ns[-1])
        if stop is not None or last >= limit:
            break
    tail = 1.0 - math.fsum(mass)
    if n_max is None and stop is None:
        raise TailTooHeavy(f"tail mass {tail:.3e} still above {tail_bound:g} after {MAX_STEPS} steps", tail)
    return HittingResult(
        dt=step_map.dt,
        n_max=last,
        tail_mass=max(tail, 0.0),
        n_mp=best_n,
        n41=math.fsum(weighted),
        f=np.asarray(kept_f) if keep_every else None,
        n=np.asarray(kept_n, dtype=np.int64) if keep_every else None,
    )


def hitting_distribution(step_map: StepMap, rho0, target: int | None = None, n_max: int | None = None, **kw) -> HittingResult:
    """Full-resolution ``f(n)`` for ``n = 0..n_max`` (``f(0) = 0``)."""
    return hitting_stats(step_map, rho0, target, n_max, keep_every=1, **kw)


def most_probable_step(f) -> int:
    """Smallest ``n`` at which ``f`` attains its maximum."""
    return int(np.argmax(np.asarray(f)))


def mean_hitting_steps(step_map: StepMap, rho0, target: int | None = None, floor: float = SINGULAR_FLOOR) -> float:
    """Exact expected number of steps to first reach ``target``.

    Raises :class:`~rpwalk.errors.SingularOperator` when ``1 - P K`` is
    singular, i.e. some other state traps probability forever.
    """
    a, c, _ = _operators(step_map, target)
    m = np.eye(a.shape[0]) - a
    check_invertible(m, floor)
    v = vectorize(np.asarray(rho0, dtype=np.complex128))
    x = np.linalg.solve(m, v)
    y = np.linalg.solve(m, x)
    return float((c @ y).real)


def mean_hitting_time(step_map: StepMap, rho0, target: int | None = None) -> float:
    return mean_hitting_steps(step_map, rho0, target) * step_map.dt


def mean_from_distribution(f, dt: float, tail_bound: float = TAIL_BOUND, tail_mass: float | None = None):
    """Truncated mean ``sum n f(n)`` and the matching time; ``f[n]`` is indexed by step count."""
    f = np.asarray(f, dtype=np.float64)
    tail = 1.0 - math.fsum(f) if tail_mass is None else tail_mass
    if tail > tail_bound:
        raise TailTooHeavy(f"tail mass {tail:.3e} exceeds {tail_bound:g}; extend n_max", tail)
    n41 = math.fsum(np.arange(f.size) * f)
    return n41, n41 * dt


def convergence_radius(step_map: StepMap, target: int | None = None) -> float:
    """Radius of convergence of the generating function, ``1 / spectral_radius(P K)``."""
    r = spectral_radius(conditioned_map(step_map, target))
    return math.inf if r == 0 else 1.0 / r


def generating_function(step_map: StepMap, rho0, target: int | None = None, z: complex = 1.0) -> complex:
    """``F(z) = sum f(n) z^n = Tr[ Q K z (1 - z P K)^(-1) rho0 ]`` inside its disc of convergence."""
    a, c, _ = _operators(step_map, target)
    radius = convergence_radius(step_map, target)
    if abs(z) >= radius:
        raise ConvergenceError(f"|z| = {abs(z):.6g} is outside the radius of convergence {radius:.6g}")
    v = vectorize(np.asarray(rho0, dtype=np.complex128))
    m = np.eye(a.shape[0]) - z * a
    return complex(z * (c @ np.linalg.solve(m, v)))
