"""Hopping matrices, electromagnetic fields, interactions and Hamiltonians.

One-particle hoppings follow the positive-definite convention: diagonal 2d,
bond entries -(1 + theta*omega2).  Peierls phases multiply bond entries by
exp(i * line integral of A along the bond).  Many-body observables are
assembled on a FockRep as H = sum <e_x,(Delta + lambda V) e_y> a_x* a_y plus
the interparticle terms, and W_t = sum <e_x,(Delta^A - Delta) e_y> a_x* a_y.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import quad

from .fock import FockRep, OperatorMatrix
from .lattice import Box, DisorderSample, Site


class QuadratureError(Exception):
    """Adaptive line-integral quadrature failed to reach tolerance."""


class RangeExceedsBoxError(Exception):
    pass


class BoundaryProximityWarning(UserWarning):
    """Field support closer to the box boundary than the safe margin."""


# ---------------------------------------------------------------------------
# decay functions and interaction norms
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DecayFunction:
    """Positive non-increasing F(r); polynomial (1+r)^-(d+eps) or
    exponential exp(-sigma r) (1+r)^-(d+eps)."""

    d: int
    form: str = "polynomial"  # "polynomial" | "exponential"
    epsilon: float = 2.0
    sigma: float = 1.0

    def __post_init__(self):
        if self.form not in ("polynomial", "exponential"):
            raise ValueError(f"unknown decay form {self.form!r}")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")

    def __call__(self, r) -> float:
        r = np.asarray(r, dtype=float)
        val = (1.0 + r) ** (-(self.d + self.epsilon))
        if self.form == "exponential":
            val = np.exp(-self.sigma * r) * val
        return val if val.ndim else float(val)

    def norm_1L(self, box: Box) -> float:
        """Finite-box estimate of sup_y sum_x F(|x-y|) = sum_x F(|x|)."""
        return float(sum(self(np.linalg.norm(s)) for s in box.sites))

    def convolution_constant(self, box: Box) -> float:
        """Finite-box estimate of sup_{x,y} sum_z F(|x-z|)F(|z-y|)/F(|x-y|)."""
        pts = np.array(box.sites, dtype=float)
        dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
        f = self(dist)
        best = 0.0
        for i in range(len(pts)):
            for j in range(len(pts)):
                best = max(best, float(np.sum(f[i] * f[:, j]) / f[i, j]))
        return best


def decay_checks(f: DecayFunction, box: Box) -> dict:
    """Report the summability/convolution constants and the polynomial-decay
    margin: for which zeta the (1+n)^zeta-weighted shell sums stay summable."""
    if f.form == "exponential":
        zeta_max = float("inf")
    else:
        # shell sums scale like n^(-1-eps) * n^zeta; summable iff zeta < eps
        zeta_max = f.epsilon
    d = f.d
    shells = []
    l_max = max(abs(c) for s in box.sites for c in s)
    for n in range(1, int(l_max) + 1):
        shell = [s for s in box.sites if max(abs(c) for c in s) == n]
        inner = [s for s in box.sites if max(abs(c) for c in s) <= max(1, n // 2)]
        if not shell or not inner:
            continue
        val = len(shell) * sum(
            max(f(np.linalg.norm(np.array(z) - np.array(y))) for y in shell) for z in inner
        )
        shells.append((n, val))
    return {
        "norm_1L": f.norm_1L(box),
        "convolution_constant": f.convolution_constant(box),
        "zeta_max": zeta_max,
        "meets_2d": zeta_max > 2 * d,
        "meets_3d": zeta_max > 3 * d,
        "shell_sums": shells,
    }


@dataclass(frozen=True)
class InterparticleInteraction:
    """Translation-covariant even interaction.

    kind "none": no terms.
    kind "hubbard": on-site U n_x (the v(0) singleton; spinless n_x^2 = n_x).
    kind "density-density": v(|x-y|) n_x n_y for 0 < |x-y| <= range_, plus an
    optional on-site v(0) n_x term.
    """

    kind: str = "none"
    U: float = 0.0
    v: Optional[Callable[[float], float]] = None
    range_: int = 1

    def __post_init__(self):
        if self.kind not in ("none", "hubbard", "density-density"):
            raise ValueError(f"unknown interaction kind {self.kind!r}")
        if self.kind == "density-density" and self.v is None:
            raise ValueError("density-density interaction needs a radial profile v")

    def pair_terms(self, box: Box):
        """Yield ({x}, coeff) and ({x,y}, coeff) with coeff multiplying n-products."""
        if self.kind == "none":
            return
        if self.kind == "hubbard":
            for s in box.sites:
                yield (s,), self.U
            return
        v0 = self.v(0.0)
        if v0 != 0.0:
            for s in box.sites:
                yield (s,), v0
        sites = box.sites
        for i, x in enumerate(sites):
            for y in sites[i + 1:]:
                r = float(np.linalg.norm(np.array(x) - np.array(y)))
                if 0 < r <= self.range_ + 1e-12:
                    c = self.v(r)
                    if c != 0.0:
                        yield (x, y), c

    def term_norms(self):
        """(separation, coeff-norm) pairs of the translation-invariant family."""
        if self.kind == "none":
            return []
        if self.kind == "hubbard":
            return [(0.0, abs(self.U))]
        out = []
        v0 = self.v(0.0)
        if v0 != 0.0:
            out.append((0.0, abs(v0)))
        for r in range(1, self.range_ + 1):
            out.append((float(r), abs(self.v(float(r)))))
        return out


def interaction_norm(ip: InterparticleInteraction, f: DecayFunction, box: Box) -> float:
    """Finite-box ||Psi_IP||_W = sup_{x,y} sum_{Lambda containing x,y} |coeff| / F(|x-y|).

    Uses |coeff| = operator norm of each v(r) n n term (n-products have norm 1).
    """
    terms = {}
    for supp, c in ip.pair_terms(box):
        terms.setdefault(frozenset(supp), 0.0)
        terms[frozenset(supp)] += abs(c)
    best = 0.0
    for x in box.sites:
        for y in box.sites:
            tot = sum(c for supp, c in terms.items() if x in supp and y in supp)
            if tot:
                r = float(np.linalg.norm(np.array(x) - np.array(y)))
                best = max(best, tot / f(r))
    return best


def full_interaction_norm(theta0: float, ip: InterparticleInteraction,
                          f: DecayFunction, box: Box) -> float:
    """sup over disorder of ||Psi^(omega,theta)||_W on the finite box.

    Hopping pair terms have norm sup_omega |1 + theta*omega2| = 1 + theta0;
    singletons carry the Laplacian diagonal 2d.
    """
    d = box.dim
    norms = {}  # frozenset support -> summed norm
    for s in box.sites:
        norms[frozenset((s,))] = 2.0 * d
    for b in box.bonds:
        norms[frozenset(b)] = 1.0 + theta0
    for supp, c in ip.pair_terms(box):
        key = frozenset(supp)
        norms[key] = norms.get(key, 0.0) + abs(c)
    best = 0.0
    for x in box.sites:
        for y in box.sites:
            tot = sum(c for supp, c in norms.items() if x in supp and y in supp)
            if tot:
                r = float(np.linalg.norm(np.array(x) - np.array(y)))
                best = max(best, tot / f(r))
    return best


# ---------------------------------------------------------------------------
# vector potentials and electric fields
# ---------------------------------------------------------------------------

@dataclass
class VectorPotential:
    """Compactly supported A(t, x) in the Weyl gauge (E = -dA/dt).

    evaluator(t, x) returns the covector A(t, x) as an ndarray of length d;
    analytic_e, when provided, is the exact -dA/dt used by high-precision
    paths (the finite-difference route stays available as an oracle).
    """

    dim: int
    evaluator: Callable[[float, np.ndarray], np.ndarray]
    t0: float
    t1: float
    spatial_halfwidth: float
    analytic_e: Optional[Callable[[float, np.ndarray], np.ndarray]] = None
    fd_step: float = 1e-5

    def __call__(self, t: float, x) -> np.ndarray:
        if t <= self.t0 or t >= self.t1:
            return np.zeros(self.dim)
        return np.asarray(self.evaluator(t, np.asarray(x, dtype=float)), dtype=float)

    def electric_fd(self, t: float, x, h: Optional[float] = None) -> np.ndarray:
        h = self.fd_step if h is None else h
        return -(self(t + h, x) - self(t - h, x)) / (2 * h)

    def electric(self, t: float, x) -> np.ndarray:
        if self.analytic_e is not None:
            if t <= self.t0 or t >= self.t1:
                return np.zeros(self.dim)
            return np.asarray(self.analytic_e(t, np.asarray(x, dtype=float)), dtype=float)
        return self.electric_fd(t, x)

    def is_off(self, t: float) -> bool:
        return t <= self.t0 or t >= self.t1


def electric_field(a: VectorPotential, t: float, x) -> np.ndarray:
    return a.electric(t, x)


def _line_integral(fx: Callable[[float], float], tol: float = 1e-10) -> float:
    val, err = quad(fx, 0.0, 1.0, epsabs=tol, epsrel=1e-12, limit=200)
    if err > 10 * tol + 1e-13 * abs(val):
        raise QuadratureError(f"line integral error estimate {err} above tolerance")
    return val


def integrated_field(a: VectorPotential, t: float, bond) -> float:
    """E_t^A(x) = int_0^1 [E(t, alpha x2 + (1-alpha) x1)](x2 - x1) dalpha."""
    x1 = np.asarray(bond[0], dtype=float)
    x2 = np.asarray(bond[1], dtype=float)
    dx = x2 - x1
    return _line_integral(lambda al: float(np.dot(a.electric(t, al * x2 + (1 - al) * x1), dx)))


def bond_phase(a: VectorPotential, t: float, x: Site, y: Site) -> float:
    """int_0^1 [A(t, alpha y + (1-alpha) x)](y - x) dalpha (Peierls argument)."""
    if a.is_off(t):
        return 0.0
    xv = np.asarray(x, dtype=float)
    yv = np.asarray(y, dtype=float)
    dx = yv - xv
    return _line_integral(lambda al: float(np.dot(a(t, al * yv + (1 - al) * xv), dx)))


def _sin2_envelope(t, t0, t1):
    if t <= t0 or t >= t1:
        return 0.0
    return np.sin(np.pi * (t - t0) / (t1 - t0)) ** 2


def _sin2_envelope_dt(t, t0, t1):
    if t <= t0 or t >= t1:
        return 0.0
    w = np.pi / (t1 - t0)
    return w * np.sin(2 * w * (t - t0))


def flat_pulse(dim: int, w, t0: float = 0.0, t1: float = 1.0,
               halfwidth: float = 1.0, envelope: str = "sin2") -> VectorPotential:
    """Space-homogeneous pulse: A(t,x) = env(t) * w inside [-hw, hw]^d, 0 outside.

    The electric field is E(t,x) = -env'(t) * w on the plateau, satisfying the
    AC-condition because env(t0) = env(t1) = 0.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (dim,):
        raise ValueError(f"direction must have shape ({dim},)")

    if envelope == "sin2":
        def env(t, t0=t0, t1=t1):
            return _sin2_envelope(t, t0, t1)

        def denv(t, t0=t0, t1=t1):
            return _sin2_envelope_dt(t, t0, t1)
    elif envelope == "gauss":
        tc, tau = 0.5 * (t0 + t1), (t1 - t0) / 8.0

        def env(t, t0=t0, t1=t1, tc=tc, tau=tau):
            if t <= t0 or t >= t1:
                return 0.0
            return float(np.exp(-((t - tc) / tau) ** 2) - np.exp(-16.0))

        def denv(t, t0=t0, t1=t1, tc=tc, tau=tau):
            if t <= t0 or t >= t1:
                return 0.0
            return float(-2 * (t - tc) / tau ** 2 * np.exp(-((t - tc) / tau) ** 2))
    else:
        raise ValueError(f"unknown envelope {envelope!r}")

    def inside(x):
        return np.all(np.abs(x) <= halfwidth + 1e-12)

    def evaluator(t, x):
        return env(t) * w if inside(x) else np.zeros(dim)

    def analytic_e(t, x):
        return -denv(t) * w if inside(x) else np.zeros(dim)

    return VectorPotential(dim, evaluator, t0, t1, halfwidth, analytic_e)


def scalar_envelope(a: VectorPotential):
    """(caligraphic A_t, E_t) of a flat pulse, sampled at the spatial origin."""
    origin = np.zeros(a.dim)

    def amp(t):
        return a(t, origin)

    def efield(t):
        return a.electric(t, origin)

    return amp, efield


def rescale(a: VectorPotential, l: float, eta: float) -> VectorPotential:
    """A_l(t, x) = eta * A(t, x / l): spatial dilation plus strength scaling."""
    if l <= 0:
        raise ValueError("rescale needs l > 0")

    def evaluator(t, x, a=a, l=l, eta=eta):
        return eta * a(t, np.asarray(x, dtype=float) / l)

    analytic = None
    if a.analytic_e is not None:
        def analytic(t, x, a=a, l=l, eta=eta):
            return eta * a.analytic_e(t, np.asarray(x, dtype=float) / l)

    return VectorPotential(a.dim, evaluator, a.t0, a.t1,
                           a.spatial_halfwidth * l, analytic, a.fd_step)


def check_field_margin(a: VectorPotential, box: Box, ip: InterparticleInteraction) -> None:
    """Warn when the field support comes within (interaction range + 2) sites
    of the box boundary; finite-volume surrogates assume that margin."""
    l_box = max(abs(c) for s in box.sites for c in s)
    margin = l_box - a.spatial_halfwidth
    needed = (ip.range_ if ip.kind == "density-density" else 0) + 2
    if margin < needed:
        warnings.warn(
            f"field halfwidth {a.spatial_halfwidth} within {margin} sites of the "
            f"box boundary (safe margin {needed})",
            BoundaryProximityWarning,
            stacklevel=2,
        )


# ---------------------------------------------------------------------------
# one-particle matrices
# ---------------------------------------------------------------------------

def build_hopping(box: Box, omega: DisorderSample, theta: float) -> np.ndarray:
    """Discrete Laplacian with hopping disorder: diagonal 2d, bond entries
    -(1 + theta*omega2) (entry row x, column x+e_j carries omega2 unconjugated)."""
    if theta < 0:
        raise ValueError("theta must be >= 0")
    n = len(box)
    h = np.zeros((n, n), dtype=complex)
    d = box.dim
    np.fill_diagonal(h, 2.0 * d)
    for (x, y) in box.bonds:  # y = x + e_j by canonical ordering
        z = omega.bond(x, y)
        i, j = box.index[x], box.index[y]
        h[i, j] = -(1.0 + theta * z)
        h[j, i] = np.conj(h[i, j])
    return h


def potential_diagonal(box: Box, omega: DisorderSample) -> np.ndarray:
    return np.array([omega.site(s) for s in box.sites], dtype=float)


def peierls_hopping(hop: np.ndarray, box: Box, a: VectorPotential, t: float) -> np.ndarray:
    """Multiply each bond entry by exp(i * bond phase); diagonal unchanged.

    Phases along the two orientations are exact negatives, so hermiticity is
    preserved identically.
    """
    out = hop.astype(complex).copy()
    if a.is_off(t):
        return out
    for (x, y) in box.bonds:
        phi = bond_phase(a, t, x, y)
        i, j = box.index[x], box.index[y]
        out[i, j] = hop[i, j] * np.exp(1j * phi)
        out[j, i] = np.conj(out[i, j])
    return out


# ---------------------------------------------------------------------------
# many-body observables
# ---------------------------------------------------------------------------

def _quadratic(rep: FockRep, box: Box, one_particle: np.ndarray) -> np.ndarray:
    """sum_{x,y} M_{xy} a_x^dagger a_y over the nonzero entries of M."""
    h = np.zeros((rep.dim, rep.dim), dtype=complex)
    mats = rep._annihilator_mats
    n = len(box.sites)
    for i in range(n):
        ai = mats[rep.mode(box.sites[i])]
        for j in range(n):
            c = one_particle[i, j]
            if c != 0:
                aj = mats[rep.mode(box.sites[j])]
                h += c * (ai.conj().T @ aj)
    return h


def interaction_matrix(rep: FockRep, box: Box, ip: InterparticleInteraction) -> np.ndarray:
    """Sum of the interparticle terms (diagonal in the occupation basis)."""
    h = np.zeros((rep.dim, rep.dim), dtype=complex)
    if ip.kind == "density-density":
        l_box = max(abs(c) for s in box.sites for c in s)
        if ip.range_ > 2 * l_box + 1:
            raise RangeExceedsBoxError(
                f"interaction range {ip.range_} exceeds box extent {2 * l_box + 1}")
    for supp, c in ip.pair_terms(box):
        term = np.eye(rep.dim, dtype=complex)
        for s in supp:
            term = term @ rep.number(s).mat
        h += c * term
    return h


def build_hamiltonian(rep: FockRep, box: Box, omega: DisorderSample, theta: float,
                      lam: float, ip: InterparticleInteraction) -> OperatorMatrix:
    """H_L = sum <e_x,(Delta + lambda V) e_y> a_x* a_y + interparticle terms."""
    one = build_hopping(box, omega, theta) + lam * np.diag(potential_diagonal(box, omega))
    h = _quadratic(rep, box, one) + interaction_matrix(rep, box, ip)
    return OperatorMatrix(h, "even")


def build_w(rep: FockRep, box: Box, omega: DisorderSample, theta: float,
            a: VectorPotential, t: float) -> OperatorMatrix:
    """W_t = sum <e_x,(Delta^A - Delta) e_y> a_x* a_y; zero outside [t0, t1]."""
    if a.is_off(t):
        return rep.zero()
    hop = build_hopping(box, omega, theta)
    diff = peierls_hopping(hop, box, a, t) - hop
    return OperatorMatrix(_quadratic(rep, box, diff), "even")


def w_time_derivative(rep: FockRep, box: Box, omega: DisorderSample, theta: float,
                      a: VectorPotential, t: float, h: float = 1e-6) -> OperatorMatrix:
    """Central finite difference of t -> W_t on the drive grid."""
    wp = build_w(rep, box, omega, theta, a, t + h).mat
    wm = build_w(rep, box, omega, theta, a, t - h).mat
    return OperatorMatrix((wp - wm) / (2 * h), "even")
