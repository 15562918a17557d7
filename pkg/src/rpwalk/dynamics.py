"""Time evolution of the walk, threshold-crossing times and classical oracles."""

from __future__ import annotations

import csv
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channels import transition_probability
from .errors import NoArrival, ThresholdNotReached
from .linalg import devectorize, vectorize
from .reaction import ReactionGraph, StepMap

DEFAULT_STRIDE = 1000


@dataclass(frozen=True)
class Trajectory:
    """Recorded populations and one coherence of a walk.

    ``populations[r, i]`` is the occupation of node ``i + 1`` at ``times[r]``.
    ``states`` holds the vectorized density matrices when they were kept.
    """

    times: np.ndarray
    steps: np.ndarray
    populations: np.ndarray
    coherence_32: np.ndarray
    stride: int
    states: np.ndarray | None = None

    def population(self, node: int) -> np.ndarray:
        return self.populations[:, node - 1]

    def state(self, r: int) -> np.ndarray:
        if self.states is None:
            raise ValueError("trajectory was recorded without full states")
        n = self.populations.shape[1]
        return devectorize(self.states[r], n)

    def write_csv(self, path) -> None:
        """Write ``t, rho11, rho22, ..., re_rho32, im_rho32, abs_rho32`` with 12 significant digits."""
        n = self.populations.shape[1]
        header = ["t"] + [f"rho{i}{i}" for i in range(1, n + 1)] + ["re_rho32", "im_rho32", "abs_rho32"]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for r in range(len(self.times)):
                c = self.coherence_32[r]
                vals = [self.times[r], *self.populations[r], c.real, c.imag, abs(c)]
                w.writerow([f"{v:.11e}" for v in vals])


@dataclass(frozen=True)
class CrossingResult:
    eta: float
    t_c: float
    step_before: int
    step_after: int


def _coherence_index(dim: int, row: int = 3, col: int = 2) -> int | None:
    if dim < max(row, col):
        return None
    return (col - 1) * dim + (row - 1)


def _hermitian_part(vecs: np.ndarray, dim: int) -> np.ndarray:
    # (a + conj(b)) / 2 and conj((b + conj(a)) / 2) are bit-identical in IEEE arithmetic
    m = vecs.reshape(-1, dim, dim)
    return (0.5 * (m + m.conj().swapaxes(1, 2))).reshape(vecs.shape)


def _record(vecs: np.ndarray, steps: np.ndarray, dt: float, stride: int, dim: int, keep_states: bool) -> Trajectory:
    """Package recorded states; only the stored copies are symmetrized, never the propagated vector."""
    vecs = _hermitian_part(vecs, dim)
    diag = [i * (dim + 1) for i in range(dim)]
    pops = vecs[:, diag].real.copy()
    ci = _coherence_index(dim)
    coh = vecs[:, ci].copy() if ci is not None else np.zeros(len(steps), dtype=np.complex128)
    return Trajectory(
        times=steps * dt,
        steps=steps,
        populations=pops,
        coherence_32=coh,
        stride=stride,
        states=vecs if keep_states else None,
    )


def record_steps(n_steps: int, stride: int) -> np.ndarray:
    """Step indices recorded for a run: ``0, stride, 2*stride, ...`` plus ``n_steps``."""
    steps = np.arange(0, n_steps + 1, stride, dtype=np.int64)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return steps


def evolve(
    step_map: StepMap,
    rho0,
    n_steps: int,
    stride: int = DEFAULT_STRIDE,
    *,
    powered: bool = True,
    keep_states: bool = True,
) -> Trajectory:
    """Propagate ``rho(t_n) = K^n rho(0)`` and record every ``stride``-th state.

    With ``powered=True`` the recorder jumps between samples with the
    precomputed matrix ``K**stride``; otherwise it performs one matvec per
    step. Both give the same states up to rounding.
    """
    if n_steps < 0:
        raise ValueError("n_steps must be non-negative")
    if stride < 1:
        raise ValueError("stride must be at least 1")
    dim = step_map.dim
    a = step_map.superop.matrix
    steps = record_steps(n_steps, stride)
    vecs = np.empty((len(steps), dim * dim), dtype=np.complex128)
    v = vectorize(np.asarray(rho0, dtype=np.complex128)).copy()
    vecs[0] = v
    jump = np.linalg.matrix_power(a, stride) if powered else None
    for r in range(1, len(steps)):
        gap = int(steps[r] - steps[r - 1])
        if powered:
            v = (jump if gap == stride else np.linalg.matrix_power(a, gap)) @ v
        else:
            for _ in range(gap):
                v = a @ v
        vecs[r] = v
    return _record(vecs, steps, step_map.dt, stride, dim, keep_states)


def crossing_time(
    step_map: StepMap,
    rho0,
    eta: float,
    max_steps: int,
    target: int | None = None,
    stride: int = DEFAULT_STRIDE,
) -> CrossingResult:
    """Time at which the target population first reaches ``eta``.

    A coarse scan with ``K**stride`` brackets the crossing, a step-by-step scan
    inside the bracket finds the first step at or above ``eta``, and the
    crossing time is interpolated linearly between that step and the previous
    one.
    """
    if not 0.0 < eta < 1.0:
        raise ValueError("eta must lie strictly between 0 and 1")
    dim = step_map.dim
    target = dim if target is None else target
    idx = (target - 1) * (dim + 1)
    a = step_map.superop.matrix
    jump = np.linalg.matrix_power(a, stride)
    v = vectorize(np.asarray(rho0, dtype=np.complex128)).copy()
    if v[idx].real >= eta:
        return CrossingResult(eta, 0.0, 0, 0)
    n = 0
    while True:
        if n >= max_steps:
            raise ThresholdNotReached(
                f"target population {v[idx].real:.3e} below eta={eta} after {max_steps} steps"
            )
        block = min(stride, max_steps - n)
        nxt = (jump if block == stride else np.linalg.matrix_power(a, block)) @ v
        if nxt[idx].real >= eta:
            break
        v = nxt
        n += block
    prev = v[idx].real
    for _ in range(block):
        w = a @ v
        n += 1
        if w[idx].real >= eta:
            cur = w[idx].real
            frac = (eta - prev) / (cur - prev)
            t_c = (n - 1 + frac) * step_map.dt
            return CrossingResult(eta, t_c, n - 1, n)
        v, prev = w, w[idx].real
    # rounding between K**stride and stepwise propagation put the crossing just past the bracket
    while n < max_steps:
        w = a @ v
        n += 1
        if w[idx].real >= eta:
            cur = w[idx].real
            return CrossingResult(eta, (n - 1 + (eta - prev) / (cur - prev)) * step_map.dt, n - 1, n)
        v, prev = w, w[idx].real
    raise ThresholdNotReached(f"target population below eta={eta} after {max_steps} steps")


def count_local_maxima(x) -> int:
    """Number of strict interior local maxima of a sampled series."""
    x = np.asarray(x)
    if x.size < 3:
        return 0
    return int(np.count_nonzero((x[1:-1] > x[:-2]) & (x[1:-1] > x[2:])))


def count_inflections(x, rel_floor: float = 1e-6) -> int:
    """Sign changes of the second difference, ignoring entries below ``rel_floor`` times the largest.

    A smooth unimodal curve has one; superposed oscillations add more.
    """
    d2 = np.diff(np.asarray(x, dtype=np.float64), 2)
    if d2.size == 0:
        return 0
    s = np.sign(d2[np.abs(d2) > rel_floor * np.abs(d2).max()])
    return int(np.count_nonzero(s[1:] != s[:-1]))


# -- classical oracles ---------------------------------------------------------


def classical_step_matrix(g: ReactionGraph) -> np.ndarray:
    """Column-stochastic one-step matrix of the fully dephased walk.

    Each damping edge moves probability ``k dt`` from source to target; each
    coherent edge swaps probability ``alpha(dt)`` symmetrically, which is what
    the unitary does to a state with no coherence left. Edges are applied in
    the same canonical order as the quantum step map.
    """
    g.validate()
    n = g.n_nodes
    sinks = g.sinks()
    feeding = [e for e in g.damping_edges if e.target not in sinks]
    draining = [e for e in g.damping_edges if e.target in sinks]

    def damp(e):
        t = np.eye(n)
        p = e.probability(g.dt)
        t[e.source - 1, e.source - 1] = 1.0 - p
        t[e.target - 1, e.source - 1] = p
        return t

    def swap(e):
        t = np.eye(n)
        p = transition_probability(e, g.dt)
        j, k = e.j - 1, e.k - 1
        t[j, j] = t[k, k] = 1.0 - p
        t[j, k] = t[k, j] = p
        return t

    mats = [damp(e) for e in feeding] + [swap(e) for e in g.coherent_edges] + [damp(e) for e in draining]
    total = np.eye(n)
    for m in mats:
        total = m @ total
    return total


def classical_evolve(g: ReactionGraph, n_steps: int, stride: int = DEFAULT_STRIDE) -> Trajectory:
    """Population-only evolution under :func:`classical_step_matrix`."""
    if n_steps < 0 or stride < 1:
        raise ValueError("need n_steps >= 0 and stride >= 1")
    t = classical_step_matrix(g)
    steps = record_steps(n_steps, stride)
    p = np.zeros(g.n_nodes)
    p[g.initial_node - 1] = 1.0
    pops = np.empty((len(steps), g.n_nodes))
    pops[0] = p
    jump = np.linalg.matrix_power(t, stride)
    for r in range(1, len(steps)):
        gap = int(steps[r] - steps[r - 1])
        p = (jump if gap == stride else np.linalg.matrix_power(t, gap)) @ p
        pops[r] = p
    return Trajectory(
        times=steps * g.dt,
        steps=steps,
        populations=pops,
        coherence_32=np.zeros(len(steps), dtype=np.complex128),
        stride=stride,
    )


def jump_rates(g: ReactionGraph) -> np.ndarray:
    """Rate matrix ``R[i, j]`` (1/s) for jumps from node ``i+1`` to ``j+1`` in the classical limit."""
    n = g.n_nodes
    r = np.zeros((n, n))
    for e in g.damping_edges:
        r[e.source - 1, e.target - 1] += e.rate
    for e in g.coherent_edges:
        x = transition_probability(e, g.dt) / g.dt
        r[e.j - 1, e.k - 1] += x
        r[e.k - 1, e.j - 1] += x
    return r


def _require_classical(g: ReactionGraph) -> None:
    for e in g.coherent_edges:
        mu = g.dephasing_probability(e.j, e.k)
        if mu != 1.0:
            raise ValueError(
                f"Monte Carlo sampling needs full dephasing on {e.j}-{e.k} (mu=1), got mu={mu:g}"
            )


def _reachable(r: np.ndarray, start: int) -> set:
    seen, todo = {start}, [start]
    while todo:
        i = todo.pop()
        for j in np.nonzero(r[i] > 0)[0]:
            if j not in seen:
                seen.add(int(j))
                todo.append(int(j))
    return seen


def _sample_chunk(rates: np.ndarray, start: int, target: int, n: int, seed_seq) -> np.ndarray:
    rng = np.random.default_rng(seed_seq)
    out_rate = rates.sum(axis=1)
    safe = np.where(out_rate > 0, out_rate, 1.0)
    cum = np.cumsum(rates / safe[:, None], axis=1)
    state = np.full(n, start)
    t = np.zeros(n)
    active = np.nonzero(state != target)[0]
    while active.size:
        s = state[active]
        if np.any(out_rate[s] == 0):
            raise NoArrival("a trajectory reached a trap with no exit before the target")
        t[active] += rng.exponential(1.0 / out_rate[s])
        u = rng.random(active.size)
        nxt = (u[:, None] >= cum[s]).sum(axis=1)
        state[active] = np.minimum(nxt, rates.shape[0] - 1)
        active = active[state[active] != target]
    return t


def mc_sample_hitting(
    g: ReactionGraph,
    n_trials: int,
    seed: int,
    target: int | None = None,
    workers: int = 1,
    chunk: int = 10_000,
) -> np.ndarray:
    """First-arrival times (s) of the classical jump process, one per trial.

    Only valid in the fully dephased regime, where trajectories are ordinary
    continuous-time jump processes: damping edges jump at their rates and each
    coherent pair exchanges at ``alpha(dt) / dt``. Trials are split into
    fixed-size chunks with seeds spawned from ``seed``, so the output does not
    depend on ``workers``.
    """
    g.validate()
    _require_classical(g)
    target = g.n_nodes if target is None else target
    rates = jump_rates(g)
    start, tgt = g.initial_node - 1, target - 1
    if tgt not in _reachable(rates, start):
        raise NoArrival(f"node {target} cannot be reached from node {g.initial_node}")
    sizes = [min(chunk, n_trials - i) for i in range(0, n_trials, chunk)]
    seeds = np.random.SeedSequence(seed).spawn(len(sizes))
    args = [(rates, start, tgt, m, s) for m, s in zip(sizes, seeds)]
    if workers > 1 and len(args) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            parts = list(ex.map(_sample_chunk, *zip(*args)))
    else:
        parts = [_sample_chunk(*a) for a in args]
    return np.concatenate(parts) if parts else np.empty(0)

