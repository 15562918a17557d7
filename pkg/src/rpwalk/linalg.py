"""Dense complex linear algebra and Liouville-space vectorization.

States are plain ``(N, N)`` complex numpy arrays. A :class:`Superoperator`
acts on the column-stacked vector of such a state, so that

    vec(A rho B) = (B^T kron A) vec(rho)

with ``vec`` stacking columns (Fortran order). Every superoperator built in
this package follows that one convention.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionError, NotHermitianError, SingularOperator

#: Relative singular-value floor below which a superoperator is singular.
SINGULAR_FLOOR = 1e-12


def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a square, finite complex128 array."""
    a = np.asarray(m, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return a


def vectorize(m) -> np.ndarray:
    """Column-stack a square matrix into a vector of length ``dim**2``."""
    return np.asarray(m).reshape(-1, order="F")


def devectorize(v, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    v = np.asarray(v)
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise DimensionError(f"vector of length {v.size} is not a vectorized {dim}x{dim} matrix")
    return v.reshape((dim, dim), order="F")


def trace_row(dim: int) -> np.ndarray:
    """Row vector ``t`` with ``t @ vectorize(rho) == trace(rho)``."""
    return vectorize(np.eye(dim, dtype=np.complex128))


class Superoperator:
    """Linear map on ``dim x dim`` matrices stored as a ``dim**2`` square matrix.

    Instances are treated as immutable; the backing array is flagged
    read-only. Composition follows operator order: ``(a @ b)(rho)`` applies
    ``b`` first.
    """

    __slots__ = ("matrix", "dim")

    def __init__(self, matrix, dim: int | None = None):
        m = np.array(matrix, dtype=np.complex128)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionError(f"superoperator must be square, got {m.shape}")
        if dim is None:
            dim = int(round(np.sqrt(m.shape[0])))
        if dim * dim != m.shape[0]:
            raise DimensionError(f"superoperator size {m.shape[0]} is not a square of an integer")
        m.setflags(write=False)
        self.matrix = m
        self.dim = dim

    @classmethod
    def identity(cls, dim: int) -> Superoperator:
        return cls(np.eye(dim * dim, dtype=np.complex128), dim)

    def apply(self, rho) -> np.ndarray:
        rho = np.asarray(rho, dtype=np.complex128)
        if rho.shape != (self.dim, self.dim):
            raise DimensionError(f"state shape {rho.shape} does not match dim {self.dim}")
        return devectorize(self.matrix @ vectorize(rho), self.dim)

    def __call__(self, rho) -> np.ndarray:
        return self.apply(rho)

    def __matmul__(self, other: Superoperator) -> Superoperator:
        if not isinstance(other, Superoperator):
            return NotImplemented
        if other.dim != self.dim:
            raise DimensionError(f"cannot compose dims {self.dim} and {other.dim}")
        return Superoperator(self.matrix @ other.matrix, self.dim)

    def __add__(self, other: Superoperator) -> Superoperator:
        if other.dim != self.dim:
            raise DimensionError(f"cannot add dims {self.dim} and {other.dim}")
        return Superoperator(self.matrix + other.matrix, self.dim)

    def __sub__(self, other: Superoperator) -> Superoperator:
        if other.dim != self.dim:
            raise DimensionError(f"cannot subtract dims {self.dim} and {other.dim}")
        return Superoperator(self.matrix - other.matrix, self.dim)

    def scale(self, c: complex) -> Superoperator:
        return Superoperator(c * self.matrix, self.dim)

    def power(self, n: int) -> Superoperator:
        return Superoperator(np.linalg.matrix_power(self.matrix, n), self.dim)

    def __repr__(self):
        return f"Superoperator(dim={self.dim})"


def superop_from_kraus(ops) -> Superoperator:
    """Superoperator of ``rho -> sum_i K_i rho K_i^dagger``."""
    ops = [as_matrix(k) for k in ops]
    if not ops:
        raise DimensionError("need at least one Kraus operator")
    n = ops[0].shape[0]
    for k in ops:
        if k.shape != (n, n):
            raise DimensionError(f"Kraus operators of mixed shapes {ops[0].shape} and {k.shape}")
    s = np.zeros((n * n, n * n), dtype=np.complex128)
    for k in ops:
        s += np.kron(k.conj(), k)
    return Superoperator(s, n)


def superop_from_sandwich(a, b=None) -> Superoperator:
    """Superoperator of ``rho -> a rho b`` (``b`` defaults to ``a^dagger``)."""
    a = as_matrix(a)
    b = a.conj().T if b is None else as_matrix(b)
    return Superoperator(np.kron(b.T, a), a.shape[0])


def check_invertible(m: np.ndarray, floor: float = SINGULAR_FLOOR) -> None:
    """Raise :class:`SingularOperator` if ``m`` has relative smallest singular value below ``floor``."""
    sv = np.linalg.svd(m, compute_uv=False)
    if sv[0] == 0.0 or sv[-1] / sv[0] < floor:
        ratio = 0.0 if sv[0] == 0.0 else sv[-1] / sv[0]
        raise SingularOperator(
            f"operator is singular (relative smallest singular value {ratio:.3e} < {floor:g}); "
            "an absorbing state other than the target makes the expected hitting time infinite"
        )


def invert(s: Superoperator, floor: float = SINGULAR_FLOOR) -> Superoperator:
    check_invertible(s.matrix, floor)
    return Superoperator(np.linalg.inv(s.matrix), s.dim)


def solve(s: Superoperator, v, floor: float = SINGULAR_FLOOR) -> np.ndarray:
    """Solve ``s x = v`` for a vectorized state, with the same singularity guard as :func:`invert`."""
    check_invertible(s.matrix, floor)
    return np.linalg.solve(s.matrix, v)


def is_hermitian(h, atol: float = 1e-12) -> bool:
    h = np.asarray(h)
    scale = max(1.0, float(np.max(np.abs(h)))) if h.size else 1.0
    return bool(np.allclose(h, h.conj().T, rtol=0.0, atol=atol * scale))


def mat_exp(h, t: float) -> np.ndarray:
    """Unitary propagator ``exp(-i h t)`` for Hermitian ``h`` via eigendecomposition."""
    h = as_matrix(h)
    if not is_hermitian(h):
        raise NotHermitianError("mat_exp requires a Hermitian generator")
    h = 0.5 * (h + h.conj().T)
    w, v = np.linalg.eigh(h)
    return (v * np.exp(-1j * w * t)) @ v.conj().T
