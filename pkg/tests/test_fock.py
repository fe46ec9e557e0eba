import numpy as np
import pytest

from fermicond.fock import (DimensionCapError, FockRep, OperatorMatrix,
                            ShapeMismatchError, UnknownSiteError, adjoint,
                            anticommutator, bilinear, build_annihilators,
                            commutator, opnorm, time_reversal)
from fermicond.lattice import Box

from conftest import random_local


def test_single_mode_matrix():
    rep = FockRep.of_box(Box.chain(1))
    a = rep.annihilator((0,))
    assert np.array_equal(a.mat, np.array([[0, 1], [0, 0]], dtype=complex))


def test_nilpotency_exact():
    rep = FockRep.of_box(Box.chain(2))
    a1 = rep.annihilator(rep.site_order[0])
    assert np.all((a1 @ a1).mat == 0)


@pytest.mark.parametrize("n", [2, 3, 5])
def test_car_relations(n):
    rep = FockRep.of_box(Box.chain(n))
    ann = build_annihilators(rep)
    eye = np.eye(rep.dim)
    for i in range(n):
        for j in range(n):
            assert opnorm(anticommutator(ann[i], ann[j])) <= 1e-12
            d = anticommutator(ann[i], adjoint(ann[j])).mat - (i == j) * eye
            assert np.linalg.norm(d, 2) <= 1e-12


def test_dimension_cap():
    with pytest.raises(DimensionCapError):
        FockRep.of_box(Box.chain(15))
    FockRep.of_box(Box.chain(15), cap=15)  # override allowed


def test_bilinear_number_operator():
    rep = FockRep.of_box(Box.chain(3))
    n0 = bilinear(rep, (0,), (0,), 1.0)
    evals = np.linalg.eigvalsh(n0.mat)
    assert set(np.round(evals, 12)) == {0.0, 1.0}
    assert n0.parity == "even"


def test_bilinear_zero_and_trace():
    rep = FockRep.of_box(Box.chain(2))
    assert np.all(bilinear(rep, (0,), (1,), 0.0).mat == 0)
    # brute force: trace of a_x^dag a_y over the Fock basis vanishes off-diagonal
    b = bilinear(rep, (0,), (1,), 1.0)
    assert abs(np.trace(b.mat)) == 0.0


def test_bilinear_unknown_site():
    rep = FockRep.of_box(Box.chain(2))
    with pytest.raises(UnknownSiteError):
        bilinear(rep, (7,), (0,), 1.0)


def test_commutator_identities():
    rep = FockRep.of_box(Box.chain(2))
    a = rep.annihilator((0,))
    n = rep.number((0,))
    assert opnorm(commutator(a, a)) == 0.0
    # [n_x, a_x] = -a_x
    assert opnorm(commutator(n, a) + a) <= 1e-13
    assert opnorm(rep.identity()) == 1.0


def test_shape_mismatch():
    a = OperatorMatrix(np.eye(2))
    b = OperatorMatrix(np.eye(4))
    with pytest.raises(ShapeMismatchError):
        commutator(a, b)


def test_parity_classification(rng):
    rep = FockRep.of_box(Box.chain(3))
    a = rep.annihilator((0,))
    assert rep.parity_of(a.mat) == "odd"
    assert rep.parity_of(rep.number((1,)).mat) == "even"
    # product of two odd operators is even
    b = rep.annihilator((1,))
    assert rep.parity_of((a @ b).mat) == "even"
    assert (a @ b).parity == "even"
    assert rep.parity_of((a.mat + rep.number((0,)).mat)) == "mixed"


def test_parity_tag_algebra():
    rep = FockRep.of_box(Box.chain(2))
    a = rep.annihilator((0,))
    n = rep.number((0,))
    assert (a + a).parity == "odd"
    assert (a + n).parity == "mixed"
    assert (2.0 * n).parity == "even"
    assert (n @ a).parity == "odd"


def test_time_reversal_antilinearity():
    rep = FockRep.of_box(Box.chain(2))
    i_op = 1j * rep.identity()
    assert np.allclose(time_reversal(rep, i_op).mat, -1j * np.eye(rep.dim))


def test_time_reversal_fixes_generators():
    rep = FockRep.of_box(Box.chain(3))
    for s in rep.site_order:
        a = rep.annihilator(s)
        assert opnorm(time_reversal(rep, a) - a) == 0.0
    # real bilinears are fixed points
    b = bilinear(rep, (-1,), (0,), 1.0) + bilinear(rep, (0,), (-1,), 1.0)
    assert opnorm(time_reversal(rep, b) - b) == 0.0


def test_time_reversal_morphism_properties(rng):
    rep = FockRep.of_box(Box.chain(3))
    for _ in range(5):
        b1 = random_local(rng, rep)
        b2 = random_local(rng, rep)
        lhs = time_reversal(rep, b1 @ b2)
        rhs = time_reversal(rep, b1) @ time_reversal(rep, b2)
        assert opnorm(lhs - rhs) <= 1e-12 * max(1.0, opnorm(b1) * opnorm(b2))
        # T(B*) = T(B)*
        assert opnorm(time_reversal(rep, b1.H) - time_reversal(rep, b1).H) <= 1e-13
        # involution
        assert opnorm(time_reversal(rep, time_reversal(rep, b1)) - b1) == 0.0


def test_adjoint_involution(rng):
    rep = FockRep.of_box(Box.chain(2))
    b = random_local(rng, rep)
    assert opnorm(b.H.H - b) == 0.0


def test_binary_dump_round_trip(tmp_path, rng):
    from fermicond.fock import dump_matrix, load_matrix
    rep = FockRep.of_box(Box.chain(2))
    b = random_local(rng, rep)
    path = tmp_path / "op.bin"
    dump_matrix(b, path)
    back = load_matrix(path)
    assert np.array_equal(back.mat, b.mat)
    # header carries the dims, payload is little-endian float64 pairs
    assert path.stat().st_size == 8 + 16 * b.dim ** 2
