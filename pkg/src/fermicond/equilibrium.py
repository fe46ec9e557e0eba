"""Gibbs/KMS states, Heisenberg and imaginary-time evolution, the driven
propagator, the work functional and the Lieb-Robinson empirical check.

Everything equilibrium-side is evaluated in the eigenbasis of H, which makes
the KMS identity, the Duhamel pairing and all autonomous evolutions exact up
to diagonalization error; time quadrature survives only as an oracle in the
test suite.
"""

from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .fock import OperatorMatrix, opnorm_mat

CONDITIONING_LIMIT = 1e12


class DiagonalizationError(Exception):
    pass


class StepSizeError(Exception):
    """Halving dt still changes drive observables beyond tolerance."""


class OverlappingSupportsError(Exception):
    pass


class ConditioningWarning(UserWarning):
    pass


def _hash_matrix(m: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(m).tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class SpectralData:
    """Eigendecomposition H = U diag(E) U^dagger, eigenvalues ascending."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    source_hash: str

    @classmethod
    def from_hamiltonian(cls, h: OperatorMatrix | np.ndarray) -> "SpectralData":
        mat = h.mat if isinstance(h, OperatorMatrix) else np.asarray(h)
        herm_defect = opnorm_mat(mat - mat.conj().T)
        if herm_defect > 1e-10 * max(1.0, opnorm_mat(mat)):
            raise DiagonalizationError(f"matrix not self-adjoint (defect {herm_defect})")
        try:
            evals, evecs = np.linalg.eigh(mat)
        except np.linalg.LinAlgError as exc:
            raise DiagonalizationError(str(exc)) from exc
        return cls(evals, evecs, _hash_matrix(mat))

    @property
    def dim(self) -> int:
        return len(self.eigenvalues)

    def to_eigenbasis(self, mat: np.ndarray) -> np.ndarray:
        u = self.eigenvectors
        return u.conj().T @ mat @ u

    def from_eigenbasis(self, mat: np.ndarray) -> np.ndarray:
        u = self.eigenvectors
        return u @ mat @ u.conj().T

    def verify(self, h: np.ndarray, tol: float = 1e-10) -> bool:
        rec = self.from_eigenbasis(np.diag(self.eigenvalues))
        return opnorm_mat(rec - h) <= tol * max(1.0, opnorm_mat(h))


@dataclass(frozen=True)
class GibbsState:
    """rho = exp(-beta H)/Z, stored as Boltzmann weights in the eigenbasis.

    beta = 0 (the trace state) is admitted as a test fixture only.
    """

    beta: float
    spectral: SpectralData
    weights: np.ndarray  # probabilities p_m, ascending-energy order

    @classmethod
    def of(cls, spectral: SpectralData, beta: float) -> "GibbsState":
        if beta < 0:
            raise ValueError("beta must be >= 0")
        e = spectral.eigenvalues
        w = np.exp(-beta * (e - e.min()))  # max-shift for overflow safety
        return cls(beta, spectral, w / w.sum())

    @property
    def density(self) -> np.ndarray:
        return self.spectral.from_eigenbasis(np.diag(self.weights.astype(complex)))

    def expect(self, b: OperatorMatrix | np.ndarray) -> complex:
        mat = b.mat if isinstance(b, OperatorMatrix) else np.asarray(b)
        bt = self.spectral.to_eigenbasis(mat)
        return complex(np.sum(self.weights * np.diag(bt)))

    def expect_eig(self, bt: np.ndarray) -> complex:
        """Expectation of a matrix already expressed in the eigenbasis."""
        return complex(np.sum(self.weights * np.diag(bt)))

    def kms_defect(self, b1: OperatorMatrix, b2: OperatorMatrix) -> float:
        """|rho(B1 tau_{i beta}(B2)) - rho(B2 B1)|, the two sides taken through
        different exponential routes in the eigenbasis."""
        sd = self.spectral
        b1t, b2t = sd.to_eigenbasis(b1.mat), sd.to_eigenbasis(b2.mat)
        e, p = sd.eigenvalues, self.weights
        # lhs multiplies the Boltzmann weight by the analytic continuation factor
        # e^{-beta(E_n - E_m)} entry-wise; rhs uses the weight vector directly.
        factor = np.exp(-self.beta * (e[None, :] - e[:, None]))
        lhs = np.einsum("mn,nm,mn,m->", b1t, b2t, factor, p)
        rhs = np.einsum("mn,nm,m->", b2t, b1t, p)
        return abs(complex(lhs - rhs))


def gibbs(h: OperatorMatrix | np.ndarray, beta: float) -> GibbsState:
    return GibbsState.of(SpectralData.from_hamiltonian(h), beta)


def heisenberg(b: OperatorMatrix, t: float, spectral: SpectralData) -> OperatorMatrix:
    """tau_t(B) = e^{itH} B e^{-itH}."""
    bt = spectral.to_eigenbasis(b.mat)
    phase = np.exp(1j * t * spectral.eigenvalues)
    evolved = phase[:, None] * bt * phase.conj()[None, :]
    return OperatorMatrix(spectral.from_eigenbasis(evolved), b.parity)


def imaginary_time(b: OperatorMatrix, alpha: float, spectral: SpectralData) -> OperatorMatrix:
    """tau_{i alpha}(B) = e^{-alpha H} B e^{alpha H} with spectrum-centered shift."""
    e = spectral.eigenvalues
    c = 0.5 * (e.max() + e.min())
    growth = np.exp(abs(alpha) * (e.max() - e.min()) / 2)
    if growth > CONDITIONING_LIMIT:
        warnings.warn(
            f"imaginary-time factor e^(alpha dE/2) = {growth:.2e} exceeds 1e12",
            ConditioningWarning, stacklevel=2)
    bt = spectral.to_eigenbasis(b.mat)
    wl = np.exp(-alpha * (e - c))
    evolved = wl[:, None] * bt * (1.0 / wl)[None, :]
    return OperatorMatrix(spectral.from_eigenbasis(evolved), b.parity)


def duhamel(b1: OperatorMatrix, b2: OperatorMatrix, state: GibbsState) -> complex:
    """(B1, B2)_~ = int_0^beta rho(B1^* tau_{i alpha}(B2)) d alpha, in closed form.

    Weight for matrix elements (m, n): (p_m - p_n)/(Z-normalized)/(E_n - E_m),
    with the degenerate limit beta * p_m.
    """
    sd = state.spectral
    return duhamel_pair_eig(sd.to_eigenbasis(b1.mat), sd.to_eigenbasis(b2.mat), state)


def duhamel_kernel(state: GibbsState) -> np.ndarray:
    """Matrix K_{mn} = (p_n - p_m)/(E_m - E_n), beta*p_m on the diagonal limit."""
    e = state.spectral.eigenvalues
    p = state.weights
    de = e[:, None] - e[None, :]  # E_m - E_n
    dp = p[None, :] - p[:, None]  # p_n - p_m
    small = np.abs(de) < 1e-12 * max(1.0, np.abs(e).max())
    kern = np.where(small, state.beta * p[:, None], dp / np.where(small, 1.0, de))
    return kern


def duhamel_pair_eig(b1t: np.ndarray, b2t: np.ndarray, state: GibbsState) -> complex:
    """(B1, B2)_~ for eigenbasis matrices: sum_mn (B1^*)_{mn} (B2)_{nm} K_{mn}."""
    kern = duhamel_kernel(state)
    b1dag = b1t.conj().T
    return complex(np.einsum("mn,nm,mn->", b1dag, b2t, kern))


# ---------------------------------------------------------------------------
# driven (non-autonomous) evolution
# ---------------------------------------------------------------------------

_CF4_C = (0.5 - np.sqrt(3) / 6, 0.5 + np.sqrt(3) / 6)
_CF4_A = ((3 - 2 * np.sqrt(3)) / 12, (3 + 2 * np.sqrt(3)) / 12)


def _expm_herm(h: np.ndarray, dt: float) -> np.ndarray:
    """exp(-i dt H) for self-adjoint H via its eigendecomposition."""
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.exp(-1j * dt * evals)[None, :]) @ evecs.conj().T


def step_unitary(h_of_t: Callable[[float], np.ndarray], t: float, dt: float,
                 method: str) -> np.ndarray:
    if method == "midpoint-exponential":
        return _expm_herm(h_of_t(t + dt / 2), dt)
    if method == "fourth-order-commutator-free":
        h1 = h_of_t(t + _CF4_C[0] * dt)
        h2 = h_of_t(t + _CF4_C[1] * dt)
        a1, a2 = _CF4_A
        u2 = _expm_herm(a2 * h1 + a1 * h2, dt)
        u1 = _expm_herm(a1 * h1 + a2 * h2, dt)
        return u1 @ u2
    raise ValueError(f"unknown propagator method {method!r}")


@dataclass
class DrivenPropagator:
    """Piecewise product of step unitaries for i d/dt psi = H(t) psi."""

    times: np.ndarray
    unitaries: list  # unitaries[i] = U(times[i+1], times[i])
    method: str

    @classmethod
    def build(cls, h_of_t, t0: float, t: float, dt: float,
              method: str = "fourth-order-commutator-free") -> "DrivenPropagator":
        if t < t0:
            raise ValueError("t must be >= t0")
        n = max(1, int(np.ceil((t - t0) / dt - 1e-12)))
        times = np.linspace(t0, t, n + 1)
        step = times[1] - times[0] if n else 0.0
        us = [step_unitary(h_of_t, times[i], step, method) for i in range(n)]
        return cls(times, us, method)

    def total(self, upto: int | None = None) -> np.ndarray:
        u = np.eye(len(self.unitaries[0]) if self.unitaries else 1, dtype=complex)
        for v in self.unitaries[:upto]:
            u = v @ u
        return u


def drive(state: GibbsState, h_of_t: Callable[[float], np.ndarray], t0: float,
          t: float, dt: float, method: str = "fourth-order-commutator-free"):
    """Evolve the Gibbs density matrix: rho_t = U(t, t0) rho U(t, t0)^dagger.

    Returns (times, rhos) with rho sampled at every grid point.
    """
    prop = DrivenPropagator.build(h_of_t, t0, t, dt, method)
    rho = state.density
    rhos = [rho]
    for u in prop.unitaries:
        rho = u @ rho @ u.conj().T
        rhos.append(rho)
    return prop.times, rhos


def drive_observable(state: GibbsState, h_of_t, t0: float, t: float, dt: float,
                     obs: Callable[[float, np.ndarray], complex],
                     method: str = "fourth-order-commutator-free"):
    """Stream obs(time, rho_time) along the drive without storing all rhos."""
    prop = DrivenPropagator.build(h_of_t, t0, t, dt, method)
    rho = state.density
    out = [obs(prop.times[0], rho)]
    for i, u in enumerate(prop.unitaries):
        rho = u @ rho @ u.conj().T
        out.append(obs(prop.times[i + 1], rho))
    return prop.times, out


def richardson_drive_check(state: GibbsState, h_of_t, t0: float, t: float, dt: float,
                           obs_mat: np.ndarray, tol: float,
                           method: str = "fourth-order-commutator-free") -> float:
    """|obs(dt) - obs(dt/2)| at the final time; raises StepSizeError above tol."""
    vals = []
    for step in (dt, dt / 2):
        times, rhos = drive(state, h_of_t, t0, t, step, method)
        vals.append(np.trace(rhos[-1] @ obs_mat))
    diff = abs(vals[0] - vals[1])
    if diff > tol:
        raise StepSizeError(f"halving dt moves observable by {diff} > {tol}")
    return float(diff)


def _simpson_weights(n: int, h: float) -> np.ndarray:
    """Composite Simpson weights on n+1 equispaced points (trapezoid patch
    on the last interval when n is odd)."""
    w = np.zeros(n + 1)
    if n == 0:
        return w
    m = n if n % 2 == 0 else n - 1
    if m >= 2:
        w[0:m + 1:2] += 2.0
        w[1:m:2] += 4.0
        w[0] -= 1.0
        w[m] -= 1.0
        w[:m + 1] *= h / 3.0
    if n != m:
        w[n - 1] += h / 2.0
        w[n] += h / 2.0
    return w


def work_functional(state: GibbsState, a_of_t: Callable[[float], np.ndarray],
                    t0: float, t: float, dt: float,
                    da_of_t: Callable[[float], np.ndarray] | None = None,
                    method: str = "fourth-order-commutator-free",
                    h_unperturbed: np.ndarray | None = None) -> float:
    """L_t^A(rho) = int_{t0}^t rho_s(dA_s/ds) ds by composite Simpson.

    The driven generator is H + A_t; dA/dt defaults to a central finite
    difference of the perturbation family.
    """
    h0 = (state.spectral.from_eigenbasis(np.diag(state.spectral.eigenvalues.astype(complex)))
          if h_unperturbed is None else h_unperturbed)

    def h_of_t(s):
        return h0 + a_of_t(s)

    if da_of_t is None:
        fd = 1e-6 * max(1.0, t - t0)

        def da_of_t(s, a_of_t=a_of_t, fd=fd):
            return (a_of_t(s + fd) - a_of_t(s - fd)) / (2 * fd)

    times, vals = drive_observable(
        state, h_of_t, t0, t, dt,
        lambda s, rho: np.trace(rho @ da_of_t(s)).real, method)
    h = times[1] - times[0] if len(times) > 1 else 0.0
    w = _simpson_weights(len(times) - 1, h)
    return float(np.dot(w, np.asarray(vals)))


# ---------------------------------------------------------------------------
# Lieb-Robinson empirical check
# ---------------------------------------------------------------------------

def lieb_robinson_check(b1: OperatorMatrix, supp1, b2: OperatorMatrix, supp2,
                        t: float, spectral: SpectralData, decay, conv_const: float,
                        interaction_sup: float) -> dict:
    """Compare ||[tau_t(B1), B2]|| against the standard bound
    2 D^-1 ||B1|| ||B2|| (e^{2 D |t| D_theta0} - 1) sum_{x in S1, y in S2} F(|x-y|).
    """
    s1, s2 = set(supp1), set(supp2)
    if s1 & s2:
        raise OverlappingSupportsError(f"supports intersect: {s1 & s2}")
    if b1.parity != "even":
        raise ValueError("B1 must be even for the Lieb-Robinson bound")
    evolved = heisenberg(b1, t, spectral)
    lhs = opnorm_mat(evolved.mat @ b2.mat - b2.mat @ evolved.mat)
    geom = sum(decay(np.linalg.norm(np.array(x) - np.array(y)))
               for x in s1 for y in s2)
    with np.errstate(over="ignore"):
        rhs = (2.0 / conv_const) * opnorm_mat(b1.mat) * opnorm_mat(b2.mat) \
            * np.expm1(2 * conv_const * abs(t) * interaction_sup) * geom
    return {"lhs": float(lhs), "rhs_bound": float(rhs),
            "satisfied": bool(lhs <= rhs + 1e-10)}
