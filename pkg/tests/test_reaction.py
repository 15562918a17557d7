from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rpwalk.channels import DampingParams
from rpwalk.errors import ConfigError, TimeStepTooLarge
from rpwalk.linalg import Superoperator, devectorize, vectorize
from rpwalk.reaction import (
    ReactionGraph,
    compile_graph,
    cryptochrome_preset,
    format_config,
    load_config,
    ordered_channels,
    parse_config,
)

from .conftest import random_density

CONFIG = Path(__file__).resolve().parents[1] / "configs" / "cryptochrome.cfg"


def test_preset_values(crypto):
    rates = {e.name: e.rate for e in crypto.damping_edges}
    assert rates == {"k21": 1e8, "k12": 1e7, "k42": 3.3e6, "k43": 3.3e6}
    (c,) = crypto.coherent_edges
    assert (c.j, c.k, c.omega_j, c.omega_k, c.coupling) == (3, 2, 1.76e7, 0.0, 4.06e7)
    assert crypto.dt == 1e-14 and crypto.initial_node == 1
    assert crypto.dephasing_probability(3, 2) == 0.0


def test_preset_gamma21(crypto):
    assert crypto.damping_edges[0].probability(crypto.dt) == pytest.approx(1e-6)


def test_classical_limit_rate():
    g = cryptochrome_preset(q32=1e14)
    assert g.dephasing_probability(3, 2) == 1.0


def test_with_mu_hits_one_exactly():
    for dt in (1e-12, 1e-13, 5e-14, 1e-14, 3e-15):
        assert cryptochrome_preset(dt=dt).with_mu(3, 2, 1.0).dephasing_probability(3, 2) <= 1.0


def test_signed_preset():
    (c,) = cryptochrome_preset(signed=True).coherent_edges
    assert c.omega_j < 0 and c.coupling < 0


def test_canonical_order(crypto):
    names = [ch.params.name for ch in ordered_channels(crypto)]
    assert names == ["k21", "k12", "U32", "q32", "k42", "k43"]
    assert [ch.params.name for ch in ordered_channels(crypto, "reversed")] == names[::-1]
    with pytest.raises(ValueError):
        ordered_channels(crypto, "sideways")


def test_empty_graph_is_identity():
    k = compile_graph(ReactionGraph(n_nodes=3))
    np.testing.assert_array_equal(k.superop.matrix, np.eye(9))


def test_first_step_population(crypto_map):
    out = crypto_map.apply(np.diag([1.0, 0, 0, 0]))
    assert out[1, 1].real == pytest.approx(1e-6, rel=1e-5)
    assert np.trace(out).real == pytest.approx(1.0, abs=1e-12)


def test_superop_matches_sequential(crypto_map, rng):
    for _ in range(20):
        rho = random_density(rng, 4)
        np.testing.assert_allclose(crypto_map.apply(rho), crypto_map.apply_sequential(rho), atol=1e-12)


def test_compile_deterministic(crypto):
    a, b = compile_graph(crypto), compile_graph(cryptochrome_preset())
    np.testing.assert_array_equal(a.superop.matrix, b.superop.matrix)


def test_compile_rejects_large_step(crypto):
    with pytest.raises(TimeStepTooLarge) as info:
        compile_graph(crypto.with_dt(1e-6))
    assert info.value.parameter == "k21"


@pytest.mark.parametrize("mu", [0.0, 1e-6, 1.0])
def test_coherences_confined_to_32(crypto, mu):
    k = compile_graph(crypto.with_mu(3, 2, mu)).superop
    jump = k.power(10_000).matrix
    v = vectorize(np.diag([1.0, 0, 0, 0]).astype(complex))
    mask = np.ones((4, 4), bool)
    np.fill_diagonal(mask, False)
    mask[2, 1] = mask[1, 2] = False
    for _ in range(200):
        v = jump @ v
        rho = devectorize(v)
        assert np.max(np.abs(rho[mask])) < 1e-14
        # cumulative over 2e6 steps; the per-step bound is checked separately
        assert abs(np.trace(rho) - 1) < 1e-9
        assert np.max(np.abs(rho - rho.conj().T)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(rates=st.lists(st.floats(0, 1e9), min_size=4, max_size=4), q=st.floats(0, 1e12), seed=st.integers(0, 2**31))
def test_step_map_trace_preserving(rates, q, seed):
    g = cryptochrome_preset(q32=q)
    for e, r in zip(list(g.damping_edges), rates):
        g = g.with_damping_rate(e.target, e.source, r)
    k = compile_graph(g)
    rho = random_density(np.random.default_rng(seed), 4)
    assert abs(np.trace(k.apply(rho)) - 1) < 1e-12


def test_general_graph_compiles():
    g = ReactionGraph(
        n_nodes=5,
        damping_edges=(DampingParams(2, 1, 1e8), DampingParams(5, 4, 1e7), DampingParams(4, 3, 1e6)),
        dt=1e-12,
    )
    k = compile_graph(g)
    assert k.dim == 5
    assert g.sinks() == {2, 5}
    assert [ch.params.name for ch in k.channels][-1] == "k54"


def test_with_damping_rate_adds_edge(crypto):
    g = crypto.with_damping_rate(3, 1, 5.0)
    assert g.damping_edges[-1] == DampingParams(3, 1, 5.0)
    assert len(crypto.damping_edges) == 4


# -- config files ----------------------------------------------------------------


def test_config_file_matches_preset(crypto):
    g = load_config(CONFIG)
    np.testing.assert_array_equal(compile_graph(g).superop.matrix, compile_graph(crypto).superop.matrix)


def test_config_round_trip(crypto):
    assert parse_config(format_config(crypto)) == crypto
    g = crypto.with_dt(1e-13).with_mu(3, 2, 0.3)
    assert parse_config(format_config(g)) == g


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[graph]\nnodes=2 dt=1e-14 initial=1 colour=red\n", "unknown key"),
        ("[graph]\nnodes=2 dt=1e-14 initial=1\n[extras]\n", "unknown section"),
        ("[graph]\nnodes=2 dt=1e-14 initial=1\n[damping]\n2<-1 rate=1 speed=2\n", "unknown key"),
        ("[graph]\nnodes=2 dt=1e-14 initial=1\n[damping]\n2->1 rate=1\n", "bad damping edge"),
        ("[graph]\nnodes=2 dt=1e-14\n", "missing"),
        ("nodes=2\n", "outside"),
        ("[graph]\nnodes=2 dt=abc initial=1\n", "number"),
        ("[graph]\nnodes=2 dt=1e-14 initial=3\n", "outside 1..2"),
        ("[graph]\nnodes=2.5 dt=1e-14 initial=1\n", "integer"),
        ("[graph]\nnodes=2 dt=1e-14 initial=1\n[coherent]\n1=2 omega_j=0 coupling=1\n", "missing"),
    ],
)
def test_config_errors(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_config_step_too_large_names_rate():
    with pytest.raises(TimeStepTooLarge, match="k21"):
        parse_config("[graph]\nnodes=2 dt=1e-6 initial=1\n[damping]\n2<-1 rate=1e8\n")


def test_config_comments_and_spacing():
    g = parse_config("# header\n[graph]\nnodes = 2   # two\ndt = 1e-12\ninitial = 2\n\n[damping]\n1 <- 2 rate=3e6\n")
    assert g.initial_node == 2 and g.damping_edges == (DampingParams(1, 2, 3e6),)


def test_superop_type(crypto_map):
    assert isinstance(crypto_map.superop, Superoperator) and crypto_map.dim == 4
