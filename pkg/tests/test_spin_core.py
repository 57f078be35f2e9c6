import numpy as np
import pytest
from hypothesis import given, strategies as st

from nvramsey.exceptions import InvalidArgumentError
from nvramsey.spin_core import (MINUS, PLUS, ZERO, NVConstants, StressTerms, build_hamiltonian,
                                effective_rabi, eigenenergies, eigenenergies_numeric,
                                second_order_transverse_shift, transition_frequencies,
                                transition_shifts, transverse_stress_shift,
                                transverse_stress_suppression)

C = NVConstants()


def test_default_constants():
    assert C.zero_field_splitting == 2.87e9
    assert C.gyromagnetic_ratio == 28.03e9
    assert C.hyperfine_splitting == 2.2e6
    assert np.isclose(C.gamma_angular, 2 * np.pi * 28.03e9)


def test_matrix_layout():
    h = build_hamiltonian(C, StressTerms(1e5, 3e4, -2e4), 5e-3).matrix
    assert np.allclose(h[ZERO], 0)
    assert np.allclose(h[:, ZERO], 0)
    assert np.isclose(h[PLUS, PLUS].real, 2.87e9 + 1e5 + 28.03e9 * 5e-3)
    assert np.isclose(h[MINUS, MINUS].real, 2.87e9 + 1e5 - 28.03e9 * 5e-3)
    assert np.isclose(h[PLUS, MINUS], -(3e4 - 2e4j))
    assert np.isclose(h[MINUS, PLUS], np.conj(h[PLUS, MINUS]))


def test_zero_field_no_stress():
    lv = eigenenergies(build_hamiltonian(C, StressTerms(), 0.0))
    assert lv.e_plus == lv.e_minus == 2.87e9
    assert lv.e_zero == 0.0


def test_sq_lines_at_bias():
    f = transition_frequencies(eigenenergies(build_hamiltonian(C, StressTerms(), 5e-3)))
    assert np.isclose(f.f_sq_plus, 2.87e9 + 140.15e6)
    assert np.isclose(f.f_sq_minus, 2.87e9 - 140.15e6)
    assert np.isclose(f.f_dq, 2 * 140.15e6)


@given(st.floats(-1e6, 1e6), st.floats(-1e6, 1e6), st.floats(-1e6, 1e6),
       st.floats(-0.02, 0.02))
def test_closed_form_matches_numeric(mz, mx, my, b):
    h = build_hamiltonian(C, StressTerms(mz, mx, my), b)
    a, n = eigenenergies(h), eigenenergies_numeric(h)
    for x, y in ((a.e_plus, n.e_plus), (a.e_minus, n.e_minus)):
        assert abs(x - y) <= 1e-9 * abs(x)
    assert abs(n.e_zero) < 1e-3


@given(st.floats(-1e6, 1e6), st.floats(-1e7, 1e7))
def test_dq_line_ignores_common_shifts(mz, dd):
    base = transition_frequencies(eigenenergies(build_hamiltonian(C, StressTerms(), 5e-3)))
    c2 = NVConstants(delta_d=dd)
    f = transition_frequencies(eigenenergies(build_hamiltonian(c2, StressTerms(mz), 5e-3)))
    assert abs(f.f_dq - base.f_dq) <= 1e-12 * base.f_dq


def test_negative_field_labels_follow_zeeman():
    lv = eigenenergies(build_hamiltonian(C, StressTerms(), -5e-3))
    assert lv.e_plus < lv.e_minus


def test_effective_rabi_value():
    assert np.isclose(effective_rabi(5e6, 2.2e6), 5.4626e6, rtol=1e-4)
    assert effective_rabi(5e6, 0.0) == 5e6
    with pytest.raises(InvalidArgumentError):
        effective_rabi(-1.0, 0.0)


def test_transverse_suppression_figures():
    s = transverse_stress_suppression(1e5, 5e-3)
    assert np.isclose(s, 446.1, rtol=1e-3)
    assert np.isclose(transverse_stress_shift(1e5, 5e-3), 1e5 / s)


def test_second_order_shift_matches_eigenvalues():
    h = build_hamiltonian(C, StressTerms(0.0, 1e5, 0.0), 5e-3)
    lv = eigenenergies(h)
    exact = lv.e_plus - (2.87e9 + 28.03e9 * 5e-3)
    assert np.isclose(exact, second_order_transverse_shift(1e5, 5e-3), rtol=1e-4)


def test_transition_shifts_vectorized():
    sp, sm = transition_shifts(C, np.array([0.0, 1e5]), np.array([0.0, 0.0]),
                               np.array([5e-3, 5e-3 + 1e-6]), 5e-3)
    assert np.allclose(sp, [0.0, 1e5 + 28.03e3])
    assert np.allclose(sm, [0.0, 1e5 - 28.03e3])


def test_invalid_inputs():
    with pytest.raises(InvalidArgumentError):
        NVConstants(gyromagnetic_ratio=0.0)
    with pytest.raises(InvalidArgumentError):
        StressTerms(np.nan)
    with pytest.raises(InvalidArgumentError):
        build_hamiltonian(C, StressTerms(), np.inf)
