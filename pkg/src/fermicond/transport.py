"""Current observables, transport coefficients, driven currents, Ohm's law,
Duhamel fluctuations and the finite-volume Green-Kubo residual.

The paramagnetic coefficient sigma_p(x, y, t) = int_0^t rho(i[I_y, tau_s(I_x)]) ds
is evaluated in closed form over Bohr frequencies: with J in the eigenbasis,

    sigma_p = sum_{m,n} (I_y)_{mn} (I_x)_{nm} (p_m - p_n) (e^{i t nu} - 1)/nu,

nu = E_n - E_m (degenerate pairs drop out since p_m = p_n).  The literal time
quadrature of the defining integral is kept in the tests as an oracle.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .equilibrium import GibbsState, duhamel_pair_eig
from .fock import FockRep, OperatorMatrix
from .lattice import Box, DisorderSample, Site, shift
from .model import VectorPotential, bond_phase, build_hamiltonian, build_w, \
    InterparticleInteraction


class NotABondError(Exception):
    pass


class SupportOverflowError(Exception):
    pass


def _hopping_entry(box: Box, omega: DisorderSample, theta: float, x: Site, y: Site) -> complex:
    """Entry <e_x, Delta e_y> without building the full matrix."""
    if not box.has_bond(x, y):
        raise NotABondError(f"({x}, {y}) is not a nearest-neighbor bond of the box")
    z = omega.bond(x, y)
    lo, hi = (x, y) if x <= y else (y, x)
    val = -(1.0 + theta * z)  # row lo, column hi
    return val if (x, y) == (lo, hi) else np.conj(val)


def current_obs(rep: FockRep, box: Box, bond, omega: DisorderSample, theta: float) -> OperatorMatrix:
    """I_x = -2 Im(<e_x1, Delta e_x2> a_x1^* a_x2) = i(c a1* a2 - conj(c) a2* a1)."""
    x1, x2 = bond
    c = _hopping_entry(box, omega, theta, x1, x2)
    a1 = rep._annihilator_mats[rep.mode(x1)]
    a2 = rep._annihilator_mats[rep.mode(x2)]
    m = c * (a1.conj().T @ a2)
    return OperatorMatrix(1j * (m - m.conj().T), "even")


def paramagnetic_partner_obs(rep: FockRep, box: Box, bond, omega: DisorderSample,
                             theta: float) -> OperatorMatrix:
    """P_x = 2 Re(<e_x1, Delta e_x2> a_x1^* a_x2)."""
    x1, x2 = bond
    c = _hopping_entry(box, omega, theta, x1, x2)
    a1 = rep._annihilator_mats[rep.mode(x1)]
    a2 = rep._annihilator_mats[rep.mode(x2)]
    m = c * (a1.conj().T @ a2)
    return OperatorMatrix(m + m.conj().T, "even")


def diamagnetic_obs(rep: FockRep, box: Box, bond, omega: DisorderSample, theta: float,
                    a: VectorPotential, t: float) -> OperatorMatrix:
    """Field correction to the bond current: the Peierls factor appears with a
    conjugated phase, (e^{-i arg} - 1), so that the eta-derivative reproduces
    the diamagnetic Ohm coefficient."""
    x1, x2 = bond
    if a.is_off(t):
        return rep.zero()
    c = _hopping_entry(box, omega, theta, x1, x2)
    arg = bond_phase(a, t, x1, x2)
    a1 = rep._annihilator_mats[rep.mode(x1)]
    a2 = rep._annihilator_mats[rep.mode(x2)]
    m = (np.exp(-1j * arg) - 1.0) * c * (a1.conj().T @ a2)
    return OperatorMatrix(1j * (m - m.conj().T), "even")


@dataclass
class TransportSeries:
    """Sampled Xi_p(t) (d x d per time) plus the constant diagonal Xi_d."""

    times: np.ndarray
    xi_p: np.ndarray  # shape (nt, d, d)
    xi_d: np.ndarray  # shape (d, d), diagonal
    provenance: dict = field(default_factory=dict)
    stderr_p: Optional[np.ndarray] = None
    stderr_d: Optional[np.ndarray] = None

    @property
    def dim(self) -> int:
        return self.xi_d.shape[0]

    def to_csv(self, path) -> None:
        d = self.dim
        with open(path, "w") as fh:
            head = ",".join(f"{k}={v}" for k, v in sorted(self.provenance.items()))
            fh.write(f"# {head}\n")
            cols = ["t"] + [f"xi_p[{k}][{q}]" for k in range(d) for q in range(d)]
            fh.write(",".join(cols) + "\n")
            for i, t in enumerate(self.times):
                row = [repr(float(t))] + [repr(float(v)) for v in self.xi_p[i].ravel()]
                fh.write(",".join(row) + "\n")
            row = ["xi_d"] + [repr(float(v)) for v in self.xi_d.ravel()]
            fh.write(",".join(row) + "\n")


class TransportKernel:
    """Bohr-frequency representation of the space-averaged coefficients.

    avg_box selects the sites entering the space average; bonds (x, x+e_k)
    are included only when both endpoints lie in the underlying box.
    """

    def __init__(self, rep: FockRep, box: Box, omega: DisorderSample, theta: float,
                 state: GibbsState, avg_box: Optional[Box] = None,
                 bin_tol: Optional[float] = None):
        self.rep, self.box, self.omega, self.theta, self.state = rep, box, omega, theta, state
        self.avg_box = avg_box if avg_box is not None else box
        self.dim_space = box.dim
        sd = state.spectral
        e = sd.eigenvalues

        unit = np.eye(box.dim, dtype=int)
        self._avg_sites = [s for s in self.avg_box.sites if s in box.index]
        self.volume = len(self._avg_sites)

        # summed directional currents J_k and kinetic partners over the average box
        self._bond_cache: dict = {}
        j_ops, p_ops = [], []
        for k in range(box.dim):
            jm = np.zeros((rep.dim, rep.dim), dtype=complex)
            pm = np.zeros_like(jm)
            for x in self._avg_sites:
                y = shift(x, unit[k])
                if y in box.index:
                    jm += current_obs(rep, box, (y, x), omega, theta).mat
                    pm += paramagnetic_partner_obs(rep, box, (y, x), omega, theta).mat
            j_ops.append(sd.to_eigenbasis(jm))
            p_ops.append(pm)
        self._j_eig = j_ops
        self._p_sum = p_ops

        # pair data
        self.bohr = e[None, :] - e[:, None]  # nu_{mn} = E_n - E_m at [m, n]
        scale = max(1.0, float(np.abs(e).max()))
        p = state.weights
        dp = p[:, None] - p[None, :]  # p_m - p_n
        tiny = np.abs(self.bohr) < 1e-12 * scale
        self.pair_weight = np.where(tiny, state.beta * p[:, None],
                                    dp / np.where(tiny, 1.0, self.bohr))
        self._tiny = tiny
        self._scale = scale

        # one-sided atoms of the space-averaged coefficient
        tol = bin_tol if bin_tol is not None else 1e-9 * scale
        self._build_atoms(tol)

    # -- atom assembly ------------------------------------------------------

    def _build_atoms(self, tol: float) -> None:
        d = self.dim_space
        mask = (self.bohr > 1e-12 * self._scale)
        nus = self.bohr[mask]
        order = np.argsort(nus)
        nus = nus[order]
        coeffs = np.empty((d, d, len(nus)), dtype=complex)
        g = self.pair_weight[mask][order]
        for k in range(d):
            for q in range(d):
                c = self._j_eig[k] * self._j_eig[q].T  # (J_k)_{mn} (J_q)_{nm}
                coeffs[k, q] = c[mask][order] * g
        # merge frequencies closer than tol; drop weightless atoms
        if len(nus):
            edges = np.concatenate(([0], np.nonzero(np.diff(nus) > tol)[0] + 1, [len(nus)]))
            merged_nu, merged_c = [], []
            for a, b in zip(edges[:-1], edges[1:]):
                c = coeffs[:, :, a:b].sum(axis=2)
                if np.abs(c).max() > 1e-14:
                    merged_nu.append(nus[a:b].mean())
                    merged_c.append(c)
            self.atom_nu = np.array(merged_nu)
            catoms = (np.stack(merged_c, axis=0) / self.volume
                      if merged_c else np.zeros((0, d, d), dtype=complex))
        else:
            self.atom_nu = np.zeros(0)
            catoms = np.zeros((0, d, d), dtype=complex)
        # Xi(t) = sum_nu 2[Re C (cos - 1) - Im C sin]
        self.atom_sym = catoms.real  # PSD micro-measure weights at +nu (and mirrored)
        self.atom_asym = catoms.imag
        # numerically-degenerate (|nu| ~ 0) residual weight, reported not asserted
        zmask = self._tiny & ~np.eye(len(self.state.weights), dtype=bool)
        self.zero_weight = np.zeros((d, d))
        self.zero_weight_nu2 = np.zeros((d, d))  # nu^2-weighted view for mu({0})
        for k in range(d):
            for q in range(d):
                c = (self._j_eig[k] * self._j_eig[q].T)[zmask] * self.pair_weight[zmask]
                self.zero_weight[k, q] = c.sum().real / self.volume
                self.zero_weight_nu2[k, q] = (c * self.bohr[zmask] ** 2).sum().real / self.volume

    # -- coefficient evaluation ---------------------------------------------

    def xi_p(self, t) -> np.ndarray:
        """Xi_{p,l}(t), exactly zero matrix at t = 0."""
        t = np.asarray(t, dtype=float)
        cosm1 = np.cos(np.multiply.outer(t, self.atom_nu)) - 1.0
        sin = np.sin(np.multiply.outer(t, self.atom_nu))
        sym = 2.0 * np.tensordot(cosm1, self.atom_sym, axes=([-1], [0]))
        asym = -2.0 * np.tensordot(sin, self.atom_asym, axes=([-1], [0]))
        return sym + asym

    def xi_plus(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        cosm1 = np.cos(np.multiply.outer(t, self.atom_nu)) - 1.0
        return 2.0 * np.tensordot(cosm1, self.atom_sym, axes=([-1], [0]))

    def xi_minus(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        sin = np.sin(np.multiply.outer(t, self.atom_nu))
        return -2.0 * np.tensordot(sin, self.atom_asym, axes=([-1], [0]))

    def xi_minus_sup(self) -> float:
        """Upper bound sup_t ||[Xi_p(t)]_-||_2 <= 2 sum_nu ||Im C(nu)||_2."""
        return float(sum(2.0 * np.linalg.norm(a, 2) for a in self.atom_asym))

    def xi_d(self) -> np.ndarray:
        d = self.dim_space
        out = np.zeros((d, d))
        for k in range(d):
            out[k, k] = self.state.expect(self._p_sum[k]).real / self.volume
        return out

    def series(self, times, provenance: Optional[dict] = None) -> TransportSeries:
        times = np.asarray(times, dtype=float)
        return TransportSeries(times, self.xi_p(times), self.xi_d(),
                               dict(provenance or {}))

    # -- per-bond coefficients ----------------------------------------------

    def bond_current_eig(self, bond) -> np.ndarray:
        key = ("I", bond)
        if key not in self._bond_cache:
            mat = current_obs(self.rep, self.box, bond, self.omega, self.theta).mat
            self._bond_cache[key] = self.state.spectral.to_eigenbasis(mat)
        return self._bond_cache[key]

    def sigma_p(self, bx, by, t) -> np.ndarray:
        """sigma_p(bx, by, t) for oriented bonds; t scalar or grid."""
        ix = self.bond_current_eig(bx)
        iy = self.bond_current_eig(by)
        c = (iy * ix.T) * self.pair_weight  # over (m, n)
        return self._pair_series(c, t)

    def _pair_series(self, c: np.ndarray, t) -> np.ndarray:
        """sum_{mn} c_{mn} (e^{i t nu_{mn}} - 1) with the degenerate t-linear limit."""
        t = np.asarray(t, dtype=float)
        nu = self.bohr
        reg = ~self._tiny
        cr, nur = c[reg], nu[reg]
        phases = np.exp(1j * np.multiply.outer(t, nur)) - 1.0
        out = phases @ cr
        # |nu| ~ 0 pairs: (e^{i t nu} - 1) -> i t nu; with the g-weight convention
        # used here the full degenerate contribution is i * t * c (c already has
        # the beta p limit folded in via pair_weight * nu -> 0 ... it vanishes
        # for exact Gibbs weights, kept for near-degenerate robustness)
        ct = c[self._tiny]
        if ct.size:
            out = out + np.multiply.outer(t, 1j * (ct * nu[self._tiny]).sum())
        return out.real if out.ndim else float(out.real)

    def sigma_d(self, bond) -> float:
        mat = paramagnetic_partner_obs(self.rep, self.box, bond, self.omega, self.theta).mat
        return float(self.state.expect(mat).real)


def xi_p_l(kernel: TransportKernel, times, provenance: Optional[dict] = None) -> TransportSeries:
    return kernel.series(times, provenance)


def xi_d_l(kernel: TransportKernel) -> np.ndarray:
    return kernel.xi_d()


def thermal_current(kernel: TransportKernel) -> np.ndarray:
    """J_th[k] = |Lambda|^-1 sum_x rho(I_(x+e_k, x))."""
    box, rep = kernel.box, kernel.rep
    unit = np.eye(box.dim, dtype=int)
    out = np.zeros(box.dim)
    for k in range(box.dim):
        tot = 0.0
        for x in kernel._avg_sites:
            y = shift(x, unit[k])
            if y in box.index:
                tot += kernel.state.expect(
                    current_obs(rep, box, (y, x), kernel.omega, kernel.theta).mat).real
        out[k] = tot / kernel.volume
    return out


# ---------------------------------------------------------------------------
# disorder averaging
# ---------------------------------------------------------------------------

def disorder_average(builder: Callable[[int], TransportSeries], n_samples: int) -> TransportSeries:
    """Monte Carlo mean and standard error over derived disorder streams.

    builder(i) must return the TransportSeries of realization i; the reduction
    order is fixed (ascending i), so results are reproducible and independent
    of any parallel execution of the builders.
    """
    if n_samples < 2:
        raise ValueError("need n_samples >= 2 for a standard error")
    series = [builder(i) for i in range(n_samples)]
    xi_p = np.stack([s.xi_p for s in series])
    xi_d = np.stack([s.xi_d for s in series])
    mean = TransportSeries(
        series[0].times, xi_p.mean(axis=0), xi_d.mean(axis=0),
        {"provenance": f"disorder-averaged over {n_samples} samples"})
    mean.stderr_p = xi_p.std(axis=0, ddof=1) / np.sqrt(n_samples)
    mean.stderr_d = xi_d.std(axis=0, ddof=1) / np.sqrt(n_samples)
    return mean


# ---------------------------------------------------------------------------
# driven current densities
# ---------------------------------------------------------------------------

@dataclass
class CurrentDensityTrace:
    times: np.ndarray
    j_th: np.ndarray   # (d,)
    j_p: np.ndarray    # (nt, d)
    j_d: np.ndarray    # (nt, d)
    eta: float

    def to_csv(self, path, provenance: Optional[dict] = None) -> None:
        d = len(self.j_th)
        with open(path, "w") as fh:
            if provenance:
                fh.write("# " + ",".join(f"{k}={v}" for k, v in sorted(provenance.items())) + "\n")
            cols = ["t"] + [f"J_p[{k}]" for k in range(d)] + [f"J_d[{k}]" for k in range(d)]
            fh.write(",".join(cols) + "\n")
            for i, t in enumerate(self.times):
                row = [repr(float(t))] + [repr(float(v)) for v in self.j_p[i]] \
                    + [repr(float(v)) for v in self.j_d[i]]
                fh.write(",".join(row) + "\n")


def driven_currents(rep: FockRep, box: Box, omega: DisorderSample, theta: float,
                    lam: float, ip: InterparticleInteraction, state: GibbsState,
                    a_scaled: VectorPotential, eta: float, times, dt: float,
                    avg_box: Optional[Box] = None,
                    method: str = "fourth-order-commutator-free") -> CurrentDensityTrace:
    """J_p and J_d along the driven evolution generated by H + W_t(eta * A_l)."""
    avg_box = avg_box if avg_box is not None else box
    times = np.asarray(times, dtype=float)
    h0 = build_hamiltonian(rep, box, omega, theta, lam, ip).mat
    unit = np.eye(box.dim, dtype=int)
    avg_sites = [s for s in avg_box.sites if s in box.index]
    vol = len(avg_sites)

    bonds_per_axis = []
    para_ops = []
    for k in range(box.dim):
        bonds = [(shift(x, unit[k]), x) for x in avg_sites
                 if shift(x, unit[k]) in box.index]
        bonds_per_axis.append(bonds)
        para_ops.append(sum(current_obs(rep, box, b, omega, theta).mat for b in bonds))

    j_th = np.array([state.expect(op).real / vol for op in para_ops])

    if eta == 0.0:
        nt = len(times)
        return CurrentDensityTrace(times, j_th, np.zeros((nt, box.dim)),
                                   np.zeros((nt, box.dim)), 0.0)

    def h_of_t(t):
        return h0 + build_w(rep, box, omega, theta, a_scaled, t).mat

    # integrate segment by segment so each requested time is hit exactly
    from .equilibrium import step_unitary
    rho = state.density
    j_p = np.zeros((len(times), box.dim))
    j_d = np.zeros((len(times), box.dim))

    def record(it, t, rho):
        for k in range(box.dim):
            j_p[it, k] = np.trace(rho @ para_ops[k]).real / vol - j_th[k]
            dia = sum(diamagnetic_obs(rep, box, b, omega, theta, a_scaled, t).mat
                      for b in bonds_per_axis[k])
            if isinstance(dia, np.ndarray):
                j_d[it, k] = np.trace(rho @ dia).real / vol

    record(0, times[0], rho)
    for it in range(1, len(times)):
        ta, tb = times[it - 1], times[it]
        n = max(1, int(np.ceil((tb - ta) / dt - 1e-12)))
        step = (tb - ta) / n
        for j in range(n):
            u = step_unitary(h_of_t, ta + j * step, step, method)
            rho = u @ rho @ u.conj().T
        record(it, tb, rho)
    return CurrentDensityTrace(times, j_th, j_p, j_d, eta)


def _cumulative_simpson(vals: np.ndarray, h: float) -> np.ndarray:
    """Cumulative integral on a uniform grid (Simpson on even prefixes,
    trapezoid patch on odd ones)."""
    n = len(vals)
    out = np.zeros(n)
    for i in range(1, n):
        if i % 2 == 0:
            out[i] = out[i - 2] + h / 3.0 * (vals[i - 2] + 4 * vals[i - 1] + vals[i])
        else:
            out[i] = out[i - 1] + h / 2.0 * (vals[i - 1] + vals[i])
    return out


def ohm_linear(kernel: TransportKernel, efield: Callable[[float], float], w,
               times, efield_integral: Optional[Callable[[float], float]] = None,
               transpose_kernel: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Linear-response coefficients of Ohm's law on the grid:
    J_p(t) = int_{t0}^t (Xi_p(t-s) w) E_s ds,   J_d(t) = (Xi_d w) int_{t0}^t E_s ds.

    In the Weyl gauge int E = -amplitude(t) is known in closed form; pass it
    as efield_integral so the AC-condition (J_d = 0 after the pulse) holds
    exactly instead of to quadrature error.

    transpose_kernel=True convolves with Xi_p(t-s)^T instead.  A first-order
    Dyson expansion shows the measured response of the driven system follows
    the transposed kernel; the two coincide for d=1 and whenever the
    antisymmetric part [Xi_p]_- vanishes (time-reversal symmetric ensembles),
    which is where the plain convolution form is quoted.
    """
    times = np.asarray(times, dtype=float)
    w = np.asarray(w, dtype=float)
    d = kernel.dim_space
    h = times[1] - times[0]
    if not np.allclose(np.diff(times), h):
        raise ValueError("ohm_linear expects a uniform time grid")
    evals = np.array([efield(s) for s in times])
    # all differences t_i - t_j live on the same uniform grid
    xi_series = kernel.xi_p(times - times[0])
    if transpose_kernel:
        xi_series = np.transpose(xi_series, (0, 2, 1))
    xi_diff = xi_series @ w  # (nt, d)
    j_p = np.zeros((len(times), d))
    from .equilibrium import _simpson_weights
    for i in range(1, len(times)):
        kernel_vals = xi_diff[i::-1]  # Xi((t_i - t_j)) w for j = 0..i
        wts = _simpson_weights(i, h)
        j_p[i] = wts @ (kernel_vals * evals[:i + 1, None])
    if efield_integral is not None:
        cum = np.array([efield_integral(t) for t in times])
    else:
        cum = _cumulative_simpson(evals, h)
    j_d = np.outer(cum, kernel.xi_d() @ w)
    return j_p, j_d


def pulse_efield_and_integral(a_base, w):
    """(E_s, int_{t0}^t E) of a flat pulse in direction w, taken at the origin;
    the integral is -amplitude(t) exactly (Weyl gauge, A(t0) = 0)."""
    w = np.asarray(w, dtype=float)
    origin = np.zeros(a_base.dim)
    wn = w / np.dot(w, w)

    def efield(s):
        return float(np.dot(a_base.electric(s, origin), wn))

    def integral(t):
        return -float(np.dot(a_base(t, origin), wn))

    return efield, integral


# ---------------------------------------------------------------------------
# fluctuation observables and Green-Kubo residual
# ---------------------------------------------------------------------------

def fluctuation(builder: Callable[[Site], OperatorMatrix], xs, state: GibbsState) -> np.ndarray:
    """F^(l)(B) = |Lambda|^{-1/2} sum_x (chi_x(B) - rho(chi_x(B)) 1).

    builder(x) realizes the translate chi_x(B); xs lists the translates that
    fit inside the box (interior-restricted sum).
    """
    xs = list(xs)
    if not xs:
        raise SupportOverflowError("no translate of the observable fits in the box")
    dim = builder(xs[0]).dim
    tot = np.zeros((dim, dim), dtype=complex)
    for x in xs:
        mat = builder(x).mat
        tot += mat - state.expect(mat) * np.eye(dim)
    return tot / np.sqrt(len(xs))


def green_kubo_residual(kernel: TransportKernel, times) -> dict:
    """Duhamel fluctuation increment vs Xi_p,l, entry-wise max over the grid.

    increment(t)_{kq} = (F(I_k), tau_t(F(I_q)))_~ - (F(I_k), F(I_q))_~ with the
    translates of the unit-bond currents summed over the averaging box.
    """
    box, rep, state = kernel.box, kernel.rep, kernel.state
    sd = state.spectral
    unit = np.eye(box.dim, dtype=int)
    d = box.dim
    flucts = []
    for k in range(d):
        xs = [x for x in kernel._avg_sites if shift(x, unit[k]) in box.index]
        fk = fluctuation(
            lambda x, k=k: current_obs(rep, box, (shift(x, unit[k]), x),
                                       kernel.omega, kernel.theta), xs, state)
        flucts.append(sd.to_eigenbasis(fk))
    times = np.asarray(times, dtype=float)
    inc = np.zeros((len(times), d, d))
    base = np.array([[duhamel_pair_eig(flucts[k], flucts[q], state).real
                      for q in range(d)] for k in range(d)])
    e = sd.eigenvalues
    for it, t in enumerate(times):
        phase = np.exp(1j * t * e)
        for q in range(d):
            fq_t = phase[:, None] * flucts[q] * phase.conj()[None, :]
            for k in range(d):
                inc[it, k, q] = duhamel_pair_eig(flucts[k], fq_t, state).real - base[k, q]
    xi = kernel.xi_p(times)
    resid = np.abs(inc - xi)
    return {"times": times, "increment": inc, "xi_p": xi,
            "max_residual": float(resid.max()), "residual": resid}
