from __future__ import annotations

import numpy as np
import pytest

from qdil.dilation import induced_instrument_mp
from qdil.instrument import apply_dual, luders_instrument
from qdil.operator_core import dagger, is_unitary, proj, spectral_norm
from qdil.vn_model import (
    DiscreteVNModel,
    build,
    dft_matrix,
    fixture_names,
    fixtures,
    load_fixture,
    momentum_operator,
    position_operator,
)

P0 = np.diag([1.0, 0.0]).astype(complex)
P1 = np.diag([0.0, 1.0]).astype(complex)


def instrument_distance(a, b):
    worst = 0.0
    for s in a.outcomes.labels:
        for i in range(a.dim_h):
            for j in range(a.dim_h):
                e = np.zeros((a.dim_h, a.dim_h), dtype=complex)
                e[i, j] = 1.0
                worst = max(worst, spectral_norm(
                    apply_dual(a, e, (s,)) - apply_dual(b, e, (s,))))
    return worst


def test_dft_is_unitary_and_diagonalizes_shift():
    f = dft_matrix(5)
    assert is_unitary(f)
    shift = np.roll(np.eye(5), 1, axis=0).astype(complex)
    d = dagger(f) @ shift @ f
    off = d - np.diag(np.diag(d))
    assert spectral_norm(off) <= 1e-12


def test_momentum_is_fourier_conjugate_of_position():
    d = 6
    f = dft_matrix(d)
    assert np.allclose(momentum_operator(d),
                       f @ position_operator(d) @ dagger(f))


def test_model_defaults():
    m = DiscreteVNModel(np.diag([0.0, 1.0]))
    assert m.meter_dim == 8
    assert m.coupling == pytest.approx(2 * np.pi / 8)
    assert np.allclose(m.pointer_state, np.eye(8)[0])


def test_model_rejects_bad_inputs():
    with pytest.raises(ValueError, match="Hermitian"):
        DiscreteVNModel(np.array([[0.0, 1.0], [0.0, 0.0]]))
    with pytest.raises(ValueError, match="normalized"):
        DiscreteVNModel(np.diag([0.0, 1.0]), pointer_state=[1.0, 1.0] + [0.0] * 6)
    with pytest.raises(ValueError, match="dimension"):
        DiscreteVNModel(np.diag([0.0, 1.0]), meter_dim=4,
                        pointer_state=[1.0, 0.0])


def test_build_produces_valid_measuring_process():
    mp = build(DiscreteVNModel(np.diag([0.0, 1.0]), meter_dim=4))
    assert mp.dim_k == 4
    assert mp.outcomes.labels == ("0", "1", "2", "3")
    assert is_unitary(mp.u)


def test_integer_observable_with_ground_pointer_is_luders():
    """At coupling 2π/d a sharp pointer reads off the spectral atoms."""
    mp = build(DiscreteVNModel(np.diag([0.0, 1.0]), meter_dim=8))
    induced = induced_instrument_mp(mp)
    target = luders_instrument([P0, P1])
    worst = 0.0
    for q, want in (("0", P0), ("1", P1)):
        for i in range(2):
            for j in range(2):
                e = np.zeros((2, 2), dtype=complex)
                e[i, j] = 1.0
                got = apply_dual(induced, e, (q,))
                worst = max(worst, spectral_norm(got - want @ e @ want))
    assert worst <= 1e-9
    # All other pointer values never fire.
    for q in ("2", "3", "4", "5", "6", "7"):
        assert spectral_norm(apply_dual(induced, np.eye(2), (q,))) <= 1e-12


def test_shifted_pointer_translates_outcomes():
    """Starting the pointer at |1> shifts every outcome label by one."""
    d = 8
    pointer = np.eye(d)[1]
    mp = build(DiscreteVNModel(np.diag([0.0, 1.0]), meter_dim=d,
                               pointer_state=pointer))
    induced = induced_instrument_mp(mp)
    assert spectral_norm(
        apply_dual(induced, np.eye(2), ("1",)) - P0) <= 1e-9
    assert spectral_norm(
        apply_dual(induced, np.eye(2), ("2",)) - P1) <= 1e-9


def test_meter_kraus_is_translated_pointer_amplitude():
    """K_q = Σ_a ψ[(q-a) mod d] P_a for an integer spectrum."""
    d = 4
    rng = np.random.default_rng(90)
    psi = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    psi = psi / np.linalg.norm(psi)
    a_op = np.diag([0.0, 1.0, 3.0])
    mp = build(DiscreteVNModel(a_op, meter_dim=d, pointer_state=psi))
    induced = induced_instrument_mp(mp)
    projs = {0.0: np.diag([1.0, 0.0, 0.0]),
             1.0: np.diag([0.0, 1.0, 0.0]),
             3.0: np.diag([0.0, 0.0, 1.0])}
    m = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    for q in range(d):
        k_q = sum(psi[(q - int(a)) % d] * p for a, p in projs.items())
        want = dagger(k_q) @ m @ k_q
        got = apply_dual(induced, m, (str(q),))
        assert np.allclose(got, want, atol=1e-9)


def test_degenerate_spectrum_clusters_into_one_projection():
    a_op = np.diag([0.0, 1.0, 1.0])
    mp = build(DiscreteVNModel(a_op, meter_dim=4))
    induced = induced_instrument_mp(mp)
    p1 = np.diag([0.0, 1.0, 1.0]).astype(complex)
    got = apply_dual(induced, np.eye(3), ("1",))
    assert spectral_norm(got - p1) <= 1e-9


def test_weak_coupling_is_not_projective():
    """Halving the coupling leaves the pointer distribution spread out."""
    d = 8
    mp = build(DiscreteVNModel(np.diag([0.0, 1.0]), meter_dim=d,
                               coupling=np.pi / d))
    induced = induced_instrument_mp(mp)
    effect0 = apply_dual(induced, np.eye(2), ("0",))
    assert spectral_norm(effect0 - P0) > 1e-2


def test_fixture_catalog_names_and_loading():
    names = fixture_names()
    assert set(names) >= {"identity", "luders-z", "amp-damp-0.5",
                          "unitary-conjugation", "trine-povm",
                          "diag-luders-z", "diag-amp-damp", "diag-identity"}
    cat = fixtures()
    assert set(cat) == set(names)
    lz = load_fixture("luders-z")
    assert instrument_distance(lz, luders_instrument([P0, P1])) <= 1e-12


def test_unknown_fixture_lists_available():
    with pytest.raises(ValueError, match="luders-z"):
        load_fixture("definitely-not-a-fixture")


def test_diag_fixtures_use_diagonal_algebra():
    assert load_fixture("diag-luders-z").algebra.blocks == ((1, 1), (1, 1))
    assert load_fixture("luders-z").algebra.blocks == ((2, 1),)
