import numpy as np
import pytest

from fermicond.equilibrium import (ConditioningWarning, DiagonalizationError,
                                   DrivenPropagator, GibbsState, OverlappingSupportsError,
                                   SpectralData, StepSizeError, drive, duhamel,
                                   gibbs, heisenberg, imaginary_time,
                                   lieb_robinson_check, richardson_drive_check,
                                   work_functional, _simpson_weights)
from fermicond.fock import OperatorMatrix, opnorm
from fermicond.model import DecayFunction, InterparticleInteraction, full_interaction_norm

from conftest import make_system, nn_interaction, random_local


def test_spectral_data_verify():
    sys = make_system(4, "iid-uniform", seed=2, theta=0.3, lam=0.7)
    assert sys["spectral"].verify(sys["h"].mat)
    u = sys["spectral"].eigenvectors
    assert np.linalg.norm(u.conj().T @ u - np.eye(len(u)), 2) <= 1e-12
    assert np.all(np.diff(sys["spectral"].eigenvalues) >= 0)


def test_spectral_rejects_nonhermitian():
    with pytest.raises(DiagonalizationError):
        SpectralData.from_hamiltonian(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_gibbs_trace_state():
    st = gibbs(np.zeros((8, 8)), 1.0)
    assert np.allclose(st.density, np.eye(8) / 8)
    # beta = 0 fixture: maximally mixed regardless of H
    sys = make_system(3, "iid-uniform", seed=3)
    st0 = GibbsState.of(sys["spectral"], 0.0)
    assert np.allclose(st0.density, np.eye(8) / 8)


def test_gibbs_properties():
    sys = make_system(5, "iid-uniform", seed=4, theta=0.2, lam=1.0, beta=2.0)
    rho = sys["state"].density
    assert abs(np.trace(rho).real - 1.0) <= 1e-13
    assert np.linalg.eigvalsh(rho).min() >= -1e-15
    comm = rho @ sys["h"].mat - sys["h"].mat @ rho
    assert np.linalg.norm(comm, 2) <= 1e-12


def test_gibbs_ground_state_projector():
    sys = make_system(4, "iid-uniform", seed=5, lam=1.0)
    e = sys["spectral"].eigenvalues
    gap = e[1] - e[0]
    st = GibbsState.of(sys["spectral"], 50.0 / gap)
    g = sys["spectral"].eigenvectors[:, 0]
    fidelity = float(np.real(g.conj() @ st.density @ g))
    assert fidelity > 1 - 1e-8


def test_kms_identity_random_pairs(rng):
    sys = make_system(6, "iid-uniform", seed=6, theta=0.5, lam=1.0,
                      ip=nn_interaction(1.0))
    for beta in (0.5, 1.0, 2.0):
        st = GibbsState.of(sys["spectral"], beta)
        for _ in range(10):
            b1, b2 = random_local(rng, sys["rep"]), random_local(rng, sys["rep"])
            assert st.kms_defect(b1, b2) <= 1e-9 * opnorm(b1) * opnorm(b2)


def test_kms_via_matrix_route(rng):
    # full-pipeline route: rho(B1 tau_{i beta}(B2)) with explicit matrices
    sys = make_system(4, "iid-uniform", seed=7, beta=0.5)
    st = sys["state"]
    b1, b2 = random_local(rng, sys["rep"]), random_local(rng, sys["rep"])
    tau_b2 = imaginary_time(b2, st.beta, sys["spectral"])
    lhs = np.trace(st.density @ b1.mat @ tau_b2.mat)
    rhs = np.trace(st.density @ b2.mat @ b1.mat)
    assert abs(lhs - rhs) <= 1e-9 * opnorm(b1) * opnorm(b2)


def test_heisenberg_group_law(rng):
    sys = make_system(4, "iid-uniform", seed=8, theta=0.4)
    sd = sys["spectral"]
    b = random_local(rng, sys["rep"])
    assert opnorm(heisenberg(b, 0.0, sd) - b) <= 1e-13
    h_op = OperatorMatrix(sys["h"].mat, "even")
    assert opnorm(heisenberg(h_op, 1.3, sd) - h_op) <= 1e-11
    lhs = heisenberg(heisenberg(b, 0.7, sd), 0.5, sd)
    rhs = heisenberg(b, 1.2, sd)
    assert opnorm(lhs - rhs) <= 1e-11 * max(1.0, opnorm(b))


def test_kms_stationarity(rng):
    sys = make_system(5, "iid-uniform", seed=9, beta=1.0)
    st, sd = sys["state"], sys["spectral"]
    for t in (0.1, 1.0, 10.0):
        b = random_local(rng, sys["rep"])
        drift = abs(st.expect(heisenberg(b, t, sd).mat) - st.expect(b.mat))
        assert drift <= 1e-10 * opnorm(b)


def test_imaginary_time_conditioning_warning():
    h = np.diag([0.0, 80.0])
    sd = SpectralData.from_hamiltonian(h)
    with pytest.warns(ConditioningWarning):
        imaginary_time(OperatorMatrix(np.ones((2, 2))), 1.0, sd)


def test_duhamel_identity_and_positivity(rng):
    sys = make_system(5, "iid-uniform", seed=10, beta=1.7)
    st = sys["state"]
    eye = sys["rep"].identity()
    assert abs(duhamel(eye, eye, st) - st.beta) <= 1e-12
    for _ in range(5):
        b = random_local(rng, sys["rep"])
        val = duhamel(b, b, st)
        assert abs(val.imag) <= 1e-10
        assert val.real >= -1e-12


def test_duhamel_vs_gauss_quadrature(rng):
    # oracle: 64-point Gauss-Legendre quadrature of the alpha-integral
    sys = make_system(4, "iid-uniform", seed=11, beta=1.0)
    st, sd = sys["state"], sys["spectral"]
    b1, b2 = random_local(rng, sys["rep"]), random_local(rng, sys["rep"])
    nodes, weights = np.polynomial.legendre.leggauss(64)
    alphas = 0.5 * st.beta * (nodes + 1.0)
    total = 0.0
    for alpha, w in zip(alphas, weights):
        tau_b2 = imaginary_time(b2, alpha, sd)
        total += w * np.trace(st.density @ b1.H.mat @ tau_b2.mat)
    oracle = 0.5 * st.beta * total
    assert abs(duhamel(b1, b2, st) - oracle) <= 1e-9 * max(1.0, abs(oracle))


# -- driven propagator --------------------------------------------------------

def test_drive_stationary_without_field():
    sys = make_system(4, "iid-uniform", seed=12, beta=1.0)
    h0 = sys["h"].mat
    times, rhos = drive(sys["state"], lambda t: h0, 0.0, 1.0, 0.05)
    assert np.linalg.norm(rhos[-1] - sys["state"].density, 2) <= 1e-10
    for rho in rhos:
        assert abs(np.trace(rho).real - 1.0) <= 1e-10
        assert np.linalg.eigvalsh(rho).min() >= -1e-10


def test_drive_autonomous_matches_exponential(rng):
    sys = make_system(4, "iid-uniform", seed=13)
    pert = random_local(rng, sys["rep"], hermitian=True).mat
    h = sys["h"].mat + pert
    times, rhos = drive(sys["state"], lambda t: h, 0.0, 0.8, 0.01)
    evals, evecs = np.linalg.eigh(h)
    u = (evecs * np.exp(-1j * 0.8 * evals)[None, :]) @ evecs.conj().T
    oracle = u @ sys["state"].density @ u.conj().T
    assert np.linalg.norm(rhos[-1] - oracle, 2) <= 1e-10


def test_propagator_composition():
    sys = make_system(3, "iid-uniform", seed=14)
    h0 = sys["h"].mat

    def h_of_t(t):
        return h0 * (1.0 + 0.2 * np.sin(t))

    prop = DrivenPropagator.build(h_of_t, 0.0, 1.0, 0.05)
    u_full = prop.total()
    for u in prop.unitaries:
        assert np.linalg.norm(u @ u.conj().T - np.eye(len(u)), 2) <= 1e-12
    half = prop.total(upto=10)
    rest = np.eye(len(u_full), dtype=complex)
    for v in prop.unitaries[10:]:
        rest = v @ rest
    assert np.linalg.norm(rest @ half - u_full, 2) <= 1e-12


@pytest.mark.parametrize("method,order", [("midpoint-exponential", 2),
                                          ("fourth-order-commutator-free", 4)])
def test_propagator_order(method, order, rng):
    sys = make_system(3, "iid-uniform", seed=15)
    h0 = sys["h"].mat
    pert = random_local(rng, sys["rep"], hermitian=True).mat

    def h_of_t(t):
        return h0 + np.sin(2.1 * t) * pert

    obs = random_local(rng, sys["rep"], hermitian=True).mat
    ref_times, ref = drive(sys["state"], h_of_t, 0.0, 1.0, 1.0 / 512)
    ref_val = np.trace(ref[-1] @ obs).real
    errs = []
    dts = [1.0 / 8, 1.0 / 16, 1.0 / 32]
    for dt in dts:
        _, rhos = drive(sys["state"], h_of_t, 0.0, 1.0, dt, method)
        errs.append(abs(np.trace(rhos[-1] @ obs).real - ref_val))
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    assert abs(slope - order) < 0.6


def test_richardson_check(rng):
    sys = make_system(3, "iid-uniform", seed=16)
    h0 = sys["h"].mat
    pert = random_local(rng, sys["rep"], hermitian=True).mat
    obs = np.diag(np.arange(8.0))

    def h_of_t(t):  # non-commuting drive so the state actually moves
        return h0 + np.sin(7 * t) * pert

    diff = richardson_drive_check(sys["state"], h_of_t, 0.0, 1.0, 0.02, obs, tol=1e-6)
    assert diff < 1e-6
    with pytest.raises(StepSizeError):
        richardson_drive_check(sys["state"], h_of_t, 0.0, 1.0, 0.5, obs, tol=1e-14)


def test_simpson_weights_polynomial():
    # integrates cubics exactly on even grids
    n, h = 10, 0.1
    w = _simpson_weights(n, h)
    xs = np.arange(n + 1) * h
    assert abs(np.dot(w, xs ** 3) - 0.25) <= 1e-14


# -- work functional and passivity ---------------------------------------------

def test_work_functional_zero_field():
    sys = make_system(3, "iid-uniform", seed=17)
    val = work_functional(sys["state"], lambda t: np.zeros((8, 8)), 0.0, 1.0, 0.05)
    assert abs(val) <= 1e-12


def test_passivity_random_cyclic(rng):
    for beta in (0.5, 1.0, 2.0):
        sys = make_system(4, "iid-uniform", seed=18, beta=beta, ip=nn_interaction(0.7))
        for _ in range(4):
            b = random_local(rng, sys["rep"], hermitian=True).mat

            def a_of_t(s, b=b):
                if s <= 0.0 or s >= 1.0:
                    return np.zeros_like(b)
                return np.sin(np.pi * s) ** 2 * b

            val = work_functional(sys["state"], a_of_t, 0.0, 1.0, 0.02)
            assert val >= -1e-9


def test_work_equals_total_energy_increment(rng):
    # cross-module oracle: L_t = Ip(t) + Id(t) from the energy-increments route
    from fermicond.joule import energy_increments
    from fermicond.model import build_w, flat_pulse, rescale
    sys = make_system(4, "iid-real-hopping", seed=19, theta=0.4, beta=1.0)
    a_base = flat_pulse(1, [1.0], 0.0, 1.0, halfwidth=4.0)
    eta, l = 0.3, 1.0
    a_sc = rescale(a_base, l, eta)

    def a_of_t(s):
        return build_w(sys["rep"], sys["box"], sys["omega"], 0.4, a_sc, s).mat

    t_end = 1.25
    val = work_functional(sys["state"], a_of_t, 0.0, t_end, 0.01)
    times = np.linspace(0.0, t_end, 26)
    tr = energy_increments(sys["rep"], sys["box"], sys["omega"], 0.4, 0.0,
                           InterparticleInteraction("none"), sys["state"],
                           a_base, eta, l, times, 0.01, warn_margin=False)
    assert abs(val - (tr.Ip[-1] + tr.Id[-1])) <= 1e-6


# -- Lieb-Robinson ------------------------------------------------------------

def test_lieb_robinson_basics(rng):
    from fermicond.transport import current_obs
    sys = make_system(8, "deterministic-zero", seed=20)
    f = DecayFunction(1, "polynomial", epsilon=2.0)
    conv = f.convolution_constant(sys["box"])
    dsup = full_interaction_norm(0.0, InterparticleInteraction("none"), f, sys["box"])
    b1 = current_obs(sys["rep"], sys["box"], ((-2,), (-3,)), sys["omega"], 0.0)
    b2 = current_obs(sys["rep"], sys["box"], ((4,), (3,)), sys["omega"], 0.0)
    res0 = lieb_robinson_check(b1, ((-3,), (-2,)), b2, ((3,), (4,)), 0.0,
                               sys["spectral"], f, conv, dsup)
    assert res0["lhs"] <= 1e-12 and res0["satisfied"]
    res1 = lieb_robinson_check(b1, ((-3,), (-2,)), b2, ((3,), (4,)), 1.0,
                               sys["spectral"], f, conv, dsup)
    assert res1["satisfied"] and res1["lhs"] > 0.0
    with pytest.raises(OverlappingSupportsError):
        lieb_robinson_check(b1, ((-3,), (-2,)), b2, ((-2,), (0,)), 1.0,
                            sys["spectral"], f, conv, dsup)
    odd = sys["rep"].annihilator((-3,))
    with pytest.raises(ValueError):
        lieb_robinson_check(odd, ((-3,),), b2, ((3,), (4,)), 1.0,
                            sys["spectral"], f, conv, dsup)


def test_gibbs_overflow_safety():
    # max-shift keeps huge beta finite: weights collapse to the ground sector
    sys = make_system(4, "iid-uniform", seed=25, lam=1.0)
    st = GibbsState.of(sys["spectral"], 1e4)
    assert np.isfinite(st.weights).all()
    assert abs(st.weights.sum() - 1.0) <= 1e-13
    assert st.weights[0] > 1 - 1e-12
