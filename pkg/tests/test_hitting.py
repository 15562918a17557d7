import math

import numpy as np
import pytest

from rpwalk.channels import DampingParams
from rpwalk.dynamics import count_inflections
from rpwalk.errors import ConvergenceError, SingularOperator, TailTooHeavy
from rpwalk.hitting import (
    conditioned_map,
    convergence_radius,
    generating_function,
    hitting_distribution,
    hitting_stats,
    iter_hitting_blocks,
    mean_from_distribution,
    mean_hitting_steps,
    mean_hitting_time,
    measurement_maps,
    most_probable_step,
    spectral_radius,
)
from rpwalk.linalg import vectorize
from rpwalk.reaction import K12, K21, K42, K43, OMEGA3, COUPLING32, ReactionGraph, compile_graph, cryptochrome_preset

from .conftest import random_density


def geometric_graph(gamma=1e-3):
    return ReactionGraph(n_nodes=2, damping_edges=(DampingParams(2, 1, gamma),), dt=1.0)


def lindblad_mean_time(q):
    """Continuous-time mean arrival time at node 4 from the equivalent master equation.

    Independent of the Kraus machinery: jump operators sqrt(k) |t><s|, dephasing
    sqrt(q) |2><2| (coherence decay q/2, the small-step limit of the per-step
    factor sqrt(1 - q dt)), and the survival integral -tr L_P^-1 rho0 on the
    block that excludes node 4.
    """
    n = 4

    def e(a, b):
        m = np.zeros((n, n), complex)
        m[a - 1, b - 1] = 1
        return m

    eye = np.eye(n)
    h = OMEGA3 * e(3, 3) + COUPLING32 * (e(3, 2) + e(2, 3))
    gen = -1j * (np.kron(eye, h) - np.kron(h.T, eye))
    jumps = [math.sqrt(k) * e(t, s) for t, s, k in [(2, 1, K21), (1, 2, K12), (4, 2, K42), (4, 3, K43)]]
    jumps.append(math.sqrt(q) * e(2, 2))
    for j in jumps:
        jj = j.conj().T @ j
        gen += np.kron(j.conj(), j) - 0.5 * np.kron(eye, jj) - 0.5 * np.kron(jj.T, eye)
    keep = [c * n + r for c in range(n) for r in range(n) if r != 3 and c != 3]
    tr = np.eye(n).reshape(-1, order="F")[keep]
    v0 = e(1, 1).reshape(-1, order="F")[keep]
    return float(-(tr @ np.linalg.solve(gen[np.ix_(keep, keep)], v0)).real)


# -- measurement maps --------------------------------------------------------------


def test_measurement_maps(rng):
    mm = measurement_maps(4, 4)
    rho = random_density(rng, 4)
    q, p = mm.q_map.apply(rho), mm.p_map.apply(rho)
    assert q[3, 3] == rho[3, 3]
    np.testing.assert_array_equal(p[:3, :3], rho[:3, :3])
    assert np.trace(q).real + np.trace(p).real <= 1 + 1e-15
    diag = np.diag(np.diag(rho))
    assert np.trace(mm.q_map.apply(diag) + mm.p_map.apply(diag)).real == pytest.approx(1.0, abs=1e-15)


# -- distribution -------------------------------------------------------------------


def test_geometric_distribution():
    g = geometric_graph(0.01)
    res = hitting_distribution(compile_graph(g), g.initial_state(), 2, n_max=400)
    n = np.arange(401)
    expected = np.where(n > 0, 0.01 * 0.99 ** (n - 1.0), 0.0)
    np.testing.assert_allclose(res.f, expected, atol=1e-15)
    assert res.n_mp == 1
    assert res.tail_mass == pytest.approx(0.99**400, rel=1e-10)


def test_geometric_mean():
    g = geometric_graph(1e-3)
    assert mean_hitting_steps(compile_graph(g), g.initial_state(), 2) == pytest.approx(1e3, rel=1e-10)


def test_unreachable_target():
    g = ReactionGraph(n_nodes=3, damping_edges=(DampingParams(2, 1, 0.1),), dt=1.0)
    res = hitting_distribution(compile_graph(g), g.initial_state(), 3, n_max=50)
    assert not np.any(res.f) and res.tail_mass == 1.0
    with pytest.raises(TailTooHeavy):
        hitting_stats(compile_graph(g), g.initial_state(), 3)


def test_trap_is_singular():
    g = ReactionGraph(n_nodes=3, damping_edges=(DampingParams(2, 1, 0.1), DampingParams(3, 1, 0.1)), dt=1.0)
    with pytest.raises(SingularOperator):
        mean_hitting_steps(compile_graph(g), g.initial_state(), 2)


def test_blocked_stream_matches_naive_iteration():
    g = cryptochrome_preset(dt=1e-12).with_mu(3, 2, 1e-5)
    k = compile_graph(g)
    res = hitting_distribution(k, g.initial_state(), n_max=20_000, block=512)
    a = conditioned_map(k)
    c = vectorize(np.eye(4)).conj() @ measurement_maps(4, 4).q_map.matrix @ k.superop.matrix
    v = vectorize(g.initial_state().astype(complex))
    f = [0.0]
    for _ in range(20_000):
        f.append((c @ v).real)
        v = a @ v
    np.testing.assert_allclose(res.f, f, atol=1e-14)
    assert res.tail_mass == pytest.approx(1 - math.fsum(f), abs=1e-11)


def test_block_iterator_first_block():
    g = geometric_graph(0.5)
    n0, f, s = next(iter_hitting_blocks(compile_graph(g), g.initial_state(), 2, block=4))
    assert n0 == 1
    np.testing.assert_allclose(f, [0.5, 0.25, 0.125, 0.0625])
    np.testing.assert_allclose(s, [0.5, 0.25, 0.125, 0.0625])


def test_tail_is_one_minus_mass():
    g = cryptochrome_preset(dt=1e-12)
    res = hitting_distribution(compile_graph(g), g.initial_state(), n_max=100_000)
    assert res.tail_mass == pytest.approx(1 - math.fsum(res.f), abs=1e-14)


@pytest.mark.parametrize("mu", [0.0, 1e-5, 1.0])
def test_distribution_invariants(mu):
    g = cryptochrome_preset(dt=1e-12).with_mu(3, 2, mu)
    res = hitting_distribution(compile_graph(g), g.initial_state(), n_max=3_000_000)
    assert res.f[0] == 0
    assert res.f.min() >= -1e-15 and res.f.max() <= 1
    assert math.fsum(res.f) <= 1 + 1e-12
    assert res.tail_mass >= 0
    assert res.n_mp == most_probable_step(res.f)


def test_most_probable_tie_break():
    assert most_probable_step([0.0, 0.2, 0.3, 0.3, 0.1]) == 2


@pytest.mark.parametrize("mu, oscillating", [(0.0, True), (1e-7, True), (1e-5, False), (1e-3, False), (1.0, False)])
def test_oscillation_onset(mu, oscillating):
    # fixed dephasing rate, coarse step: mu refers to the 1e-14 s step
    g = cryptochrome_preset(dt=1e-12)
    g = g.with_mu(3, 2, 1.0) if mu == 1.0 else g.with_dephasing_rate(3, 2, mu / 1e-14)
    res = hitting_stats(compile_graph(g), g.initial_state(), n_max=2_000_000, keep_every=100)
    n = count_inflections(res.f)
    assert (n >= 3) if oscillating else (n <= 1)


# -- means -------------------------------------------------------------------------------


def test_mean_from_distribution_delta():
    f = np.zeros(10)
    f[5] = 1
    assert mean_from_distribution(f, 2.0) == (5.0, 10.0)


def test_mean_from_distribution_tail_check():
    with pytest.raises(TailTooHeavy):
        mean_from_distribution([0, 0.5, 0.25], 1.0)


@pytest.mark.parametrize("mu", [0.0, 1e-6, 1e-5, 1e-3, 1.0])
def test_resolvent_matches_truncated_sum(mu):
    g = cryptochrome_preset(dt=1e-12).with_mu(3, 2, mu)
    k = compile_graph(g)
    exact = mean_hitting_steps(k, g.initial_state())
    res = hitting_stats(k, g.initial_state())
    assert res.tail_mass < 1e-6
    assert abs(res.n41 - exact) / exact < 1e-4


def test_resolvent_matches_mean_from_full_distribution():
    g = cryptochrome_preset(dt=1e-11)
    k = compile_graph(g)
    res = hitting_distribution(k, g.initial_state(), n_max=2_000_000)
    n41, t41 = mean_from_distribution(res.f, g.dt, tail_mass=res.tail_mass)
    assert n41 == pytest.approx(mean_hitting_steps(k, g.initial_state()), rel=1e-4)
    assert t41 == pytest.approx(n41 * 1e-11)


@pytest.mark.parametrize("mu", [0.0, 1e-7, 1e-6, 1e-5, 1e-4])
def test_mean_matches_continuous_time_oracle(mu):
    g = cryptochrome_preset().with_mu(3, 2, mu)
    t41 = mean_hitting_time(compile_graph(g), g.initial_state())
    assert t41 == pytest.approx(lindblad_mean_time(mu / 1e-14), rel=1e-4)


def test_mean_exceeds_ballpark(crypto_map, crypto):
    assert mean_hitting_time(crypto_map, crypto.initial_state()) > 1 / 3.3e6


# -- generating function ---------------------------------------------------------------


def test_generating_function_origin(crypto_map, crypto):
    assert generating_function(crypto_map, crypto.initial_state(), z=0.0) == 0


def test_generating_function_normalised(crypto_map, crypto):
    assert abs(generating_function(crypto_map, crypto.initial_state(), z=1.0) - 1) < 1e-9


def test_generating_function_outside_radius(crypto_map, crypto):
    r = convergence_radius(crypto_map)
    assert r > 1
    with pytest.raises(ConvergenceError):
        generating_function(crypto_map, crypto.initial_state(), z=r * 1.01)


def test_generating_function_series():
    g = cryptochrome_preset(dt=1e-9)
    k = compile_graph(g)
    res = hitting_distribution(k, g.initial_state(), n_max=20_000)
    z = 0.999
    series = math.fsum(res.f * z ** np.arange(res.f.size))
    assert generating_function(k, g.initial_state(), z=z).real == pytest.approx(series, rel=1e-12)


def test_generating_function_derivative_is_mean():
    g = cryptochrome_preset(dt=1e-9)
    k = compile_graph(g)
    h = 1e-6
    rho0 = g.initial_state()
    d = (generating_function(k, rho0, z=1 + h) - generating_function(k, rho0, z=1 - h)).real / (2 * h)
    assert d == pytest.approx(mean_hitting_steps(k, rho0), rel=1e-5)


def test_spectral_radius_below_one(crypto_map):
    assert spectral_radius(conditioned_map(crypto_map)) < 1
