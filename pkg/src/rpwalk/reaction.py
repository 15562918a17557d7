"""Reaction graphs and their compilation into the one-step evolution map.

A :class:`ReactionGraph` lists damping, dephasing and coherent edges between
1-based nodes together with the time step. :func:`compile_graph` turns it
into a :class:`StepMap`: the ordered channels and the product of their
superoperators.

Canonical channel order (first applied first):

1. damping edges feeding non-sink nodes, in listed order;
2. coherent edges;
3. dephasing edges;
4. damping edges into sink nodes (nodes with no way out), in listed order.

For the four-node cryptochrome graph this is
``K = M43 M42 V32 U32 M12 M21`` read right to left.

Config file grammar (``#`` starts a comment, blank lines ignored)::

    [graph]
    nodes = 4
    dt = 1e-14
    initial = 1

    [damping]
    2<-1 rate=1e8          # target<-source
    1<-2 rate=1e7

    [dephasing]
    3~2 rate=0

    [coherent]
    3=2 omega_j=1.76e7 omega_k=0 coupling=4.06e7

Every key is mandatory where shown and unknown keys or sections are errors.
"""

from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .channels import (
    Channel,
    CoherentParams,
    DampingParams,
    DephasingParams,
    basis_state,
    make_damping,
    make_dephasing,
    make_unitary,
)
from .errors import ConfigError, DimensionError, TimeStepTooLarge
from .linalg import Superoperator

# Literature rates for the cryptochrome walk (1/s) and the default time step (s).
K21 = 1e8
K12 = 1e7
K42 = 3.3e6
K43 = 3.3e6
OMEGA3 = 1.76e7
OMEGA2 = 0.0
COUPLING32 = 4.06e7
DT = 1e-14


@dataclass(frozen=True)
class ReactionGraph:
    n_nodes: int
    damping_edges: tuple = ()
    dephasing_edges: tuple = ()
    coherent_edges: tuple = ()
    dt: float = DT
    initial_node: int = 1

    def __post_init__(self):
        for name in ("damping_edges", "dephasing_edges", "coherent_edges"):
            object.__setattr__(self, name, tuple(getattr(self, name)))

    def validate(self) -> None:
        """Check node labels and that every per-step probability lies in [0, 1]."""
        if self.n_nodes < 1:
            raise DimensionError("a graph needs at least one node")
        if not self.dt > 0:
            raise ValueError(f"time step must be positive, got {self.dt}")
        nodes = [self.initial_node]
        for e in self.damping_edges:
            nodes += [e.target, e.source]
        for e in self.dephasing_edges + self.coherent_edges:
            nodes += [e.j, e.k]
        for n in nodes:
            if not 1 <= n <= self.n_nodes:
                raise DimensionError(f"node {n} outside 1..{self.n_nodes}")
        for e in self.damping_edges + self.dephasing_edges:
            p = e.probability(self.dt)
            if not 0.0 <= p <= 1.0:
                raise TimeStepTooLarge(
                    f"{e.name} * dt = {p:g} is outside [0, 1]; reduce dt or the rate",
                    parameter=e.name,
                    value=p,
                )

    def initial_state(self) -> np.ndarray:
        return basis_state(self.n_nodes, self.initial_node)

    def sinks(self) -> set:
        """Nodes with no outgoing damping edge and no coherent or dephasing coupling."""
        busy = {e.source for e in self.damping_edges}
        for e in self.dephasing_edges + self.coherent_edges:
            busy |= {e.j, e.k}
        return set(range(1, self.n_nodes + 1)) - busy

    # -- functional updates -------------------------------------------------

    def with_dt(self, dt: float) -> ReactionGraph:
        return dataclasses.replace(self, dt=dt)

    def with_damping_rate(self, target: int, source: int, rate: float) -> ReactionGraph:
        edges = list(self.damping_edges)
        for i, e in enumerate(edges):
            if (e.target, e.source) == (target, source):
                edges[i] = DampingParams(target, source, rate)
                break
        else:
            edges.append(DampingParams(target, source, rate))
        return dataclasses.replace(self, damping_edges=tuple(edges))

    def with_dephasing_rate(self, j: int, k: int, rate: float) -> ReactionGraph:
        edges = list(self.dephasing_edges)
        for i, e in enumerate(edges):
            if {e.j, e.k} == {j, k}:
                edges[i] = DephasingParams(e.j, e.k, rate)
                break
        else:
            edges.append(DephasingParams(j, k, rate))
        return dataclasses.replace(self, dephasing_edges=tuple(edges))

    def with_mu(self, j: int, k: int, mu: float) -> ReactionGraph:
        """Set the dephasing rate so that ``rate * dt == mu`` (``mu = 1`` maps exactly to 1)."""
        g = self.with_dephasing_rate(j, k, mu / self.dt)
        return g

    def with_coherent(self, j: int, k: int, **changes) -> ReactionGraph:
        edges = list(self.coherent_edges)
        for i, e in enumerate(edges):
            if {e.j, e.k} == {j, k}:
                edges[i] = dataclasses.replace(e, **changes)
                break
        else:
            raise KeyError(f"no coherent edge between {j} and {k}")
        return dataclasses.replace(self, coherent_edges=tuple(edges))

    def dephasing_probability(self, j: int, k: int) -> float:
        for e in self.dephasing_edges:
            if {e.j, e.k} == {j, k}:
                return e.probability(self.dt)
        return 0.0


@dataclass(frozen=True, eq=False)
class StepMap:
    """One time step ``K(dt)``: channels in application order plus their combined superoperator."""

    channels: tuple
    superop: Superoperator
    dt: float
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dim", self.superop.dim)

    def apply(self, rho) -> np.ndarray:
        return self.superop.apply(rho)

    def apply_sequential(self, rho) -> np.ndarray:
        """Apply the channels one by one through their Kraus operators."""
        for ch in self.channels:
            rho = ch.apply_kraus(rho)
        return rho


def ordered_channels(g: ReactionGraph, order: str = "canonical") -> list:
    """Channels of ``g`` in application order.

    ``order="reversed"`` flips the canonical sequence; it exists to probe the
    small-step order insensitivity and is not meant for production runs.
    """
    dim = g.n_nodes
    sinks = g.sinks()
    feeding = [e for e in g.damping_edges if e.target not in sinks]
    draining = [e for e in g.damping_edges if e.target in sinks]
    chans: list[Channel] = []
    chans += [make_damping(e, dim, g.dt) for e in feeding]
    chans += [make_unitary(e, dim, g.dt) for e in g.coherent_edges]
    chans += [make_dephasing(e, dim, g.dt) for e in g.dephasing_edges]
    chans += [make_damping(e, dim, g.dt) for e in draining]
    if order == "reversed":
        chans.reverse()
    elif order != "canonical":
        raise ValueError(f"unknown channel order {order!r}")
    return chans


def compile_graph(g: ReactionGraph, order: str = "canonical") -> StepMap:
    """Build the one-step map ``K(dt)`` of a reaction graph."""
    g.validate()
    chans = ordered_channels(g, order)
    s = Superoperator.identity(g.n_nodes)
    for ch in chans:
        s = ch.superop @ s
    return StepMap(tuple(chans), s, g.dt)


def cryptochrome_preset(q32: float = 0.0, dt: float = DT, signed: bool = False) -> ReactionGraph:
    """Four-node cryptochrome radical-pair walk with literature rates.

    Nodes: 1 precursor/singlet product, 2 singlet radical pair, 3 triplet
    radical pair, 4 triplet (signalling) product. ``signed=True`` keeps the
    negative literature signs of ``omega_3`` and the coupling.
    """
    sign = -1.0 if signed else 1.0
    return ReactionGraph(
        n_nodes=4,
        damping_edges=(
            DampingParams(2, 1, K21),
            DampingParams(1, 2, K12),
            DampingParams(4, 2, K42),
            DampingParams(4, 3, K43),
        ),
        dephasing_edges=(DephasingParams(3, 2, q32),),
        coherent_edges=(CoherentParams(3, 2, sign * OMEGA3, OMEGA2, sign * COUPLING32),),
        dt=dt,
        initial_node=1,
    )


# -- config files ------------------------------------------------------------

_SECTIONS = ("graph", "damping", "dephasing", "coherent")
_EDGE_PATTERNS = {
    "damping": re.compile(r"^(\d+)\s*<-\s*(\d+)(?:\s+(.*))?$"),
    "dephasing": re.compile(r"^(\d+)\s*~\s*(\d+)(?:\s+(.*))?$"),
    "coherent": re.compile(r"^(\d+)\s*=\s*(\d+)(?:\s+(.*))?$"),
}
_EDGE_KEYS = {
    "damping": {"rate"},
    "dephasing": {"rate"},
    "coherent": {"omega_j", "omega_k", "coupling"},
}
_GRAPH_KEYS = {"nodes", "dt", "initial"}


def _number(text: str, where: str) -> float:
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{where}: {text!r} is not a number") from None


def _key_values(tokens: list, allowed: set, where: str) -> dict:
    out = {}
    for tok in tokens:
        if "=" not in tok:
            raise ConfigError(f"{where}: expected key=value, got {tok!r}")
        key, _, value = tok.partition("=")
        key = key.strip()
        if key not in allowed:
            raise ConfigError(f"{where}: unknown key {key!r} (allowed: {', '.join(sorted(allowed))})")
        if key in out:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        out[key] = _number(value.strip(), where)
    missing = allowed - set(out)
    if missing:
        raise ConfigError(f"{where}: missing key(s) {', '.join(sorted(missing))}")
    return out


def parse_config(text: str) -> ReactionGraph:
    """Parse the key-value reaction-graph format described in the module docstring."""
    section = None
    graph_kv: dict = {}
    damping, dephasing, coherent = [], [], []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"line {lineno}"
        m = re.fullmatch(r"\[(\w+)\]", line)
        if m:
            section = m.group(1)
            if section not in _SECTIONS:
                raise ConfigError(f"{where}: unknown section [{section}]")
            continue
        if section is None:
            raise ConfigError(f"{where}: entry outside of any section")
        if section == "graph":
            for tok in line.replace(" = ", "=").split():
                key, sep, value = tok.partition("=")
                if not sep:
                    raise ConfigError(f"{where}: expected key=value, got {tok!r}")
                if key not in _GRAPH_KEYS:
                    raise ConfigError(f"{where}: unknown key {key!r} in [graph]")
                if key in graph_kv:
                    raise ConfigError(f"{where}: duplicate key {key!r}")
                graph_kv[key] = _number(value, where)
            continue
        m = _EDGE_PATTERNS[section].match(line)
        if not m:
            raise ConfigError(f"{where}: bad {section} edge {line!r}")
        a, b = int(m.group(1)), int(m.group(2))
        kv = _key_values((m.group(3) or "").split(), _EDGE_KEYS[section], where)
        try:
            if section == "damping":
                damping.append(DampingParams(a, b, kv["rate"]))
            elif section == "dephasing":
                dephasing.append(DephasingParams(a, b, kv["rate"]))
            else:
                coherent.append(CoherentParams(a, b, kv["omega_j"], kv["omega_k"], kv["coupling"]))
        except ValueError as exc:
            raise ConfigError(f"{where}: {exc}") from None
    missing = _GRAPH_KEYS - set(graph_kv)
    if missing:
        raise ConfigError(f"[graph] is missing {', '.join(sorted(missing))}")
    for key in ("nodes", "initial"):
        if graph_kv[key] != int(graph_kv[key]):
            raise ConfigError(f"[graph] {key} must be an integer")
    g = ReactionGraph(
        n_nodes=int(graph_kv["nodes"]),
        damping_edges=tuple(damping),
        dephasing_edges=tuple(dephasing),
        coherent_edges=tuple(coherent),
        dt=graph_kv["dt"],
        initial_node=int(graph_kv["initial"]),
    )
    try:
        g.validate()
    except DimensionError as exc:
        raise ConfigError(str(exc)) from None
    return g


def load_config(path) -> ReactionGraph:
    return parse_config(Path(path).read_text())


def format_config(g: ReactionGraph) -> str:
    """Serialize a graph back to the config grammar (round-trips through :func:`parse_config`)."""
    lines = ["[graph]", f"nodes = {g.n_nodes}", f"dt = {g.dt!r}", f"initial = {g.initial_node}", ""]
    lines.append("[damping]")
    lines += [f"{e.target}<-{e.source} rate={e.rate!r}" for e in g.damping_edges]
    lines += ["", "[dephasing]"]
    lines += [f"{e.j}~{e.k} rate={e.rate!r}" for e in g.dephasing_edges]
    lines += ["", "[coherent]"]
    lines += [
        f"{e.j}={e.k} omega_j={e.omega_j!r} omega_k={e.omega_k!r} coupling={e.coupling!r}"
        for e in g.coherent_edges
    ]
    return "\n".join(lines) + "\n"
