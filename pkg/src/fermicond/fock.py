"""Dense matrix representation of the CAR algebra on N lattice sites.

The Fock space is (C^2)^{tensor N} with the occupation basis ordered so that
site_order[0] is the most significant bit.  Annihilators are built with the
usual fermionic string construction (Z x ... x Z x s- x 1 x ... x 1), which
makes every generator a real matrix; the antilinear time-reversal map that
fixes all a_x is then entry-wise complex conjugation in this basis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

DEFAULT_SITE_CAP = 14

_SZ = np.array([[1.0, 0.0], [0.0, -1.0]])
_SMINUS = np.array([[0.0, 1.0], [0.0, 0.0]])  # a|1> = |0>
_I2 = np.eye(2)


class DimensionCapError(Exception):
    """Fock dimension would exceed the configured site cap."""


class UnknownSiteError(KeyError):
    pass


class ShapeMismatchError(ValueError):
    pass


def _combine_parity(p1: str, p2: str) -> str:
    if "mixed" in (p1, p2):
        return "mixed"
    return "even" if p1 == p2 else "odd"


@dataclass(frozen=True)
class OperatorMatrix:
    """Dense complex matrix on the Fock space, tagged with fermionic parity."""

    mat: np.ndarray
    parity: str = "mixed"

    def __post_init__(self):
        object.__setattr__(self, "mat", np.asarray(self.mat, dtype=complex))
        if self.mat.ndim != 2 or self.mat.shape[0] != self.mat.shape[1]:
            raise ShapeMismatchError(f"expected square matrix, got {self.mat.shape}")

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def _check(self, other: "OperatorMatrix"):
        if self.dim != other.dim:
            raise ShapeMismatchError(f"{self.dim} != {other.dim}")

    def __add__(self, other):
        self._check(other)
        par = self.parity if self.parity == other.parity else "mixed"
        return OperatorMatrix(self.mat + other.mat, par)

    def __sub__(self, other):
        self._check(other)
        par = self.parity if self.parity == other.parity else "mixed"
        return OperatorMatrix(self.mat - other.mat, par)

    def __neg__(self):
        return OperatorMatrix(-self.mat, self.parity)

    def __mul__(self, c):
        return OperatorMatrix(c * self.mat, self.parity)

    __rmul__ = __mul__

    def __matmul__(self, other):
        self._check(other)
        return OperatorMatrix(self.mat @ other.mat, _combine_parity(self.parity, other.parity))

    @property
    def H(self) -> "OperatorMatrix":
        return OperatorMatrix(self.mat.conj().T, self.parity)

    def is_selfadjoint(self, tol: float = 1e-12) -> bool:
        return opnorm_mat(self.mat - self.mat.conj().T) <= tol * max(1.0, opnorm_mat(self.mat))


def adjoint(a: OperatorMatrix) -> OperatorMatrix:
    return a.H


def commutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    if a.dim != b.dim:
        raise ShapeMismatchError(f"{a.dim} != {b.dim}")
    return OperatorMatrix(a.mat @ b.mat - b.mat @ a.mat, _combine_parity(a.parity, b.parity))


def anticommutator(a: OperatorMatrix, b: OperatorMatrix) -> OperatorMatrix:
    if a.dim != b.dim:
        raise ShapeMismatchError(f"{a.dim} != {b.dim}")
    return OperatorMatrix(a.mat @ b.mat + b.mat @ a.mat, _combine_parity(a.parity, b.parity))


def opnorm_mat(m: np.ndarray) -> float:
    """Spectral norm; trivial shapes short-circuited."""
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def opnorm(a: OperatorMatrix) -> float:
    return opnorm_mat(a.mat)


class FockRep:
    """Concrete CAR representation for an ordered tuple of sites."""

    def __init__(self, site_order, cap: int = DEFAULT_SITE_CAP):
        self.site_order = tuple(site_order)
        self.n_sites = len(self.site_order)
        if self.n_sites > cap:
            raise DimensionCapError(
                f"{self.n_sites} sites exceeds cap {cap} (dim 2^{self.n_sites})"
            )
        self.dim = 2 ** self.n_sites
        self.site_index = {s: i for i, s in enumerate(self.site_order)}

    @classmethod
    def of_box(cls, box, cap: int = DEFAULT_SITE_CAP) -> "FockRep":
        return cls(box.sites, cap)

    def mode(self, site) -> int:
        try:
            return self.site_index[site]
        except KeyError:
            raise UnknownSiteError(f"site {site} not in representation")

    @cached_property
    def _annihilator_mats(self) -> list[np.ndarray]:
        ops = []
        for j in range(self.n_sites):
            m = np.array([[1.0]])
            for k in range(self.n_sites):
                if k < j:
                    m = np.kron(m, _SZ)
                elif k == j:
                    m = np.kron(m, _SMINUS)
                else:
                    m = np.kron(m, _I2)
            ops.append(m.astype(complex))
        return ops

    def annihilator(self, site) -> OperatorMatrix:
        return OperatorMatrix(self._annihilator_mats[self.mode(site)], "odd")

    def creator(self, site) -> OperatorMatrix:
        return OperatorMatrix(self._annihilator_mats[self.mode(site)].conj().T, "odd")

    def identity(self) -> OperatorMatrix:
        return OperatorMatrix(np.eye(self.dim), "even")

    def zero(self) -> OperatorMatrix:
        return OperatorMatrix(np.zeros((self.dim, self.dim)), "even")

    def number(self, site) -> OperatorMatrix:
        a = self._annihilator_mats[self.mode(site)]
        return OperatorMatrix(a.conj().T @ a, "even")

    def total_number(self) -> OperatorMatrix:
        n = sum(m.conj().T @ m for m in self._annihilator_mats)
        return OperatorMatrix(n, "even")

    def parity_operator(self) -> OperatorMatrix:
        """(-1)^N as a diagonal matrix."""
        m = np.array([[1.0]])
        for _ in range(self.n_sites):
            m = np.kron(m, _SZ)
        return OperatorMatrix(m, "even")

    def parity_of(self, mat: np.ndarray, tol: float = 1e-12) -> str:
        """Classify a matrix as even/odd/mixed against (-1)^N."""
        p = self.parity_operator().mat
        scale = max(1.0, opnorm_mat(mat))
        comm = opnorm_mat(mat @ p - p @ mat)
        anti = opnorm_mat(mat @ p + p @ mat)
        if comm <= tol * scale:
            return "even"
        if anti <= tol * scale:
            return "odd"
        return "mixed"


def build_annihilators(rep: FockRep) -> list[OperatorMatrix]:
    return [rep.annihilator(s) for s in rep.site_order]


def bilinear(rep: FockRep, x, y, c: complex) -> OperatorMatrix:
    """c * a_x^dagger a_y (even for every coefficient)."""
    ax = rep._annihilator_mats[rep.mode(x)]
    ay = rep._annihilator_mats[rep.mode(y)]
    return OperatorMatrix(c * (ax.conj().T @ ay), "even")


def time_reversal(rep: FockRep, a: OperatorMatrix) -> OperatorMatrix:
    """Antilinear morphism with T(a_x) = a_x: conjugation in the occupation basis."""
    return OperatorMatrix(a.mat.conj(), a.parity)


def dump_matrix(a: OperatorMatrix, path) -> None:
    """Debug dump: 8-byte little-endian dims header, then row-major
    little-endian float64 (re, im) pairs."""
    with open(path, "wb") as fh:
        fh.write(np.array(a.mat.shape, dtype="<i4").tobytes())
        inter = np.empty(a.mat.shape + (2,))
        inter[..., 0] = a.mat.real
        inter[..., 1] = a.mat.imag
        fh.write(inter.astype("<f8").tobytes())


def load_matrix(path) -> OperatorMatrix:
    with open(path, "rb") as fh:
        rows, cols = np.frombuffer(fh.read(8), dtype="<i4")
        flat = np.frombuffer(fh.read(), dtype="<f8").reshape(rows, cols, 2)
    return OperatorMatrix(flat[..., 0] + 1j * flat[..., 1])
