"""Kraus channels for the three elementary processes of a reaction walk.

Node labels are 1-based throughout the public API (node 1 is ``|psi_1>``),
matching the usual ``rho_11 ... rho_44`` naming. Internally matrices are
0-indexed.

* amplitude damping ``M_jk``: irreversible transfer of population from node
  ``k`` (source) into node ``j`` (target) with probability ``gamma = k_jk dt``;
* dephasing ``V_jk``: shrinks every coherence of node ``k`` by
  ``sqrt(1 - mu)`` per application, ``mu = q_jk dt``; populations untouched;
* coherent exchange ``U_jk = exp(-i H_jk dt)`` with
  ``H_jk = w_j |j><j| + w_k |k><k| + W (|j><k| + |k><j|)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Union

import numpy as np

from .errors import DimensionError, TimeStepTooLarge
from .linalg import Superoperator, superop_from_kraus


def _check_nodes(dim: int, *nodes: int) -> None:
    for n in nodes:
        if not 1 <= n <= dim:
            raise DimensionError(f"node {n} outside 1..{dim}")


def ket_bra(dim: int, a: int, b: int) -> np.ndarray:
    """``|psi_a><psi_b|`` for 1-based node labels."""
    m = np.zeros((dim, dim), dtype=np.complex128)
    m[a - 1, b - 1] = 1.0
    return m


def projector(dim: int, k: int) -> np.ndarray:
    return ket_bra(dim, k, k)


def basis_state(dim: int, k: int) -> np.ndarray:
    """Density matrix ``|psi_k><psi_k|``."""
    return projector(dim, k)


@dataclass(frozen=True)
class DampingParams:
    """Incoherent transfer ``source -> target`` at ``rate`` (1/s).

    In the two-index rate name ``k_jk`` the first index is the target.
    """

    target: int
    source: int
    rate: float

    def __post_init__(self):
        if self.target == self.source:
            raise ValueError("damping edge needs distinct target and source")
        if not self.rate >= 0:
            raise ValueError(f"damping rate must be non-negative, got {self.rate}")

    @property
    def name(self) -> str:
        return f"k{self.target}{self.source}"

    def probability(self, dt: float) -> float:
        return self.rate * dt


@dataclass(frozen=True)
class DephasingParams:
    """Dephasing of the ``j``-``k`` pair at ``rate`` (1/s); the Kraus operators act on node ``k``."""

    j: int
    k: int
    rate: float

    def __post_init__(self):
        if self.j == self.k:
            raise ValueError("dephasing edge needs two distinct nodes")
        if not self.rate >= 0:
            raise ValueError(f"dephasing rate must be non-negative, got {self.rate}")

    @property
    def name(self) -> str:
        return f"q{self.j}{self.k}"

    def probability(self, dt: float) -> float:
        return self.rate * dt


@dataclass(frozen=True)
class CoherentParams:
    """Two-level Hamiltonian block between nodes ``j`` and ``k`` (angular frequencies, hbar = 1)."""

    j: int
    k: int
    omega_j: float
    omega_k: float
    coupling: float

    def __post_init__(self):
        if self.j == self.k:
            raise ValueError("coherent edge needs two distinct nodes")
        if isinstance(self.coupling, complex):
            raise TypeError("complex couplings are not supported; the coupling must be real")

    @property
    def name(self) -> str:
        return f"U{self.j}{self.k}"

    @property
    def sigma(self) -> float:
        return 0.5 * (self.omega_k + self.omega_j)

    @property
    def delta(self) -> float:
        return 0.5 * (self.omega_k - self.omega_j)

    @property
    def zeta(self) -> float:
        return float(np.hypot(self.delta, self.coupling))

    def hamiltonian(self, dim: int) -> np.ndarray:
        _check_nodes(dim, self.j, self.k)
        return (
            self.omega_j * projector(dim, self.j)
            + self.omega_k * projector(dim, self.k)
            + self.coupling * (ket_bra(dim, self.j, self.k) + ket_bra(dim, self.k, self.j))
        )


Params = Union[DampingParams, DephasingParams, CoherentParams]


@dataclass(frozen=True, eq=False)
class Channel:
    """A Kraus map tagged with the process that produced it."""

    kind: str
    kraus_ops: tuple
    params: Params
    dt: float
    dim: int = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "dim", self.kraus_ops[0].shape[0])
        for k in self.kraus_ops:
            k.setflags(write=False)

    @cached_property
    def superop(self) -> Superoperator:
        return superop_from_kraus(self.kraus_ops)

    def completeness_defect(self) -> float:
        """Max entrywise ``|sum K^dagger K - 1|``."""
        s = sum(k.conj().T @ k for k in self.kraus_ops)
        return float(np.max(np.abs(s - np.eye(self.dim))))

    def apply_kraus(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=np.complex128)
        return sum(k @ rho @ k.conj().T for k in self.kraus_ops)

    def apply(self, rho) -> np.ndarray:
        if self.kind == "dephasing":
            return _dephase_exact(rho, self.params.k, self.params.probability(self.dt))
        return self.apply_kraus(rho)


def _dephase_exact(rho, k: int, mu: float) -> np.ndarray:
    # Populations are copied, never recomputed, so they stay bit-identical.
    out = np.array(rho, dtype=np.complex128)
    s = np.sqrt(1.0 - mu)
    i = k - 1
    diag = out[i, i]
    out[i, :] *= s
    out[:, i] *= s
    out[i, i] = diag
    return out


def _check_probability(p: float, name: str, kind: str) -> None:
    if not 0.0 <= p <= 1.0:
        raise TimeStepTooLarge(
            f"{kind} probability for {name} is {p:g}, outside [0, 1]; reduce the time step",
            parameter=name,
            value=p,
        )


def make_damping(p: DampingParams, dim: int, dt: float) -> Channel:
    """Amplitude-damping channel moving population from ``p.source`` to ``p.target``."""
    _check_nodes(dim, p.target, p.source)
    gamma = p.probability(dt)
    _check_probability(gamma, p.name, "damping")
    q_src = projector(dim, p.source)
    m1 = np.sqrt(gamma) * ket_bra(dim, p.target, p.source)
    m2 = (np.eye(dim) - q_src) + np.sqrt(1.0 - gamma) * q_src
    return Channel("damping", (m1, m2), p, dt)


def make_dephasing(p: DephasingParams, dim: int, dt: float) -> Channel:
    _check_nodes(dim, p.j, p.k)
    mu = p.probability(dt)
    _check_probability(mu, p.name, "dephasing")
    q_k = projector(dim, p.k)
    v1 = np.sqrt(mu) * q_k
    v2 = (np.eye(dim) - q_k) + np.sqrt(1.0 - mu) * q_k
    return Channel("dephasing", (v1, v2), p, dt)


def closed_form_unitary(p: CoherentParams, dim: int, t: float) -> np.ndarray:
    """``exp(-i H_jk t)`` from its closed form.

    Identity on the complement of ``span{|j>, |k>}``; inside the block the
    two eigenphases are ``exp(-i (sigma -+ zeta) t)``.
    """
    _check_nodes(dim, p.j, p.k)
    sigma, delta, omega, zeta = p.sigma, p.delta, p.coupling, p.zeta
    q_j, q_k = projector(dim, p.j), projector(dim, p.k)
    hop = ket_bra(dim, p.j, p.k) + ket_bra(dim, p.k, p.j)
    u = np.eye(dim, dtype=np.complex128) - q_j - q_k
    if zeta == 0.0:
        return u + np.exp(-1j * sigma * t) * (q_j + q_k)
    e_minus = np.exp(-1j * (sigma - zeta) * t)
    e_plus = np.exp(-1j * (sigma + zeta) * t)
    r = delta / zeta
    u = u + 0.5 * ((1 + r) * e_minus + (1 - r) * e_plus) * q_j
    u = u + 0.5 * ((1 - r) * e_minus + (1 + r) * e_plus) * q_k
    u = u - (omega / (2 * zeta)) * (e_minus - e_plus) * hop
    return u


def make_unitary(p: CoherentParams, dim: int, dt: float) -> Channel:
    return Channel("unitary", (closed_form_unitary(p, dim, dt),), p, dt)


def transition_probability(p: CoherentParams, t: float) -> float:
    """Probability that ``U_jk(t)`` takes ``|k>`` to ``|j>``.

    Written as ``(W/zeta)^2 sin^2(zeta t)``, which equals
    ``(W^2 / 2 zeta^2)(1 - cos 2 zeta t)`` but keeps full relative precision
    for ``zeta t << 1``. Zero when ``zeta = 0``.
    """
    zeta = p.zeta
    if zeta == 0.0:
        return 0.0
    return float((p.coupling / zeta) ** 2 * np.sin(zeta * t) ** 2)


def parity(n: int) -> int:
    """1 for odd ``n``, 0 for even."""
    return (1 + (-1) ** (n + 1)) // 2


def power_identity_check(p: CoherentParams, n: int) -> float:
    """Max deviation between ``A^n`` and its odd/even closed form, both scaled by ``zeta^-n``.

    ``A = delta (Q_k - Q_j) + W (Q_jk + Q_kj)`` on the two-level block. The
    left side is built by repeated multiplication of the scaled matrix.
    """
    if not 1 <= n <= 64:
        raise ValueError("n must lie in 1..64")
    zeta = p.zeta
    if zeta == 0.0:
        return 0.0
    # local block: index 0 = j, index 1 = k
    a = np.array([[-p.delta, p.coupling], [p.coupling, p.delta]], dtype=np.float64) / zeta
    lhs = np.eye(2)
    for _ in range(n):
        lhs = lhs @ a
    # scaled identity: A^n / zeta^n = 1 on the block for even n, A / zeta for odd n
    f = parity(n)
    rhs = (1 - f) * np.eye(2) + f * a
    return float(np.max(np.abs(lhs - rhs)))
