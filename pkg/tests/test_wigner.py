import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbs_sim.dynamics import HardwareParams
from qbs_sim.errors import IllConditionedError, NumericalInvariantError, ValidationError
from qbs_sim.hilbert import DensityOperator, PureState, SpaceLayout, coherent_amplitudes, fock_state
from qbs_sim.stateprep import CatSpec, cat_amplitudes
from qbs_sim.wigner import (
    W_BOUND,
    RabiSignal,
    default_tau_axis,
    displaced_populations,
    populations_from_rabi,
    rabi_tomography_signal,
    thread_count,
    tomography_wigner,
    wigner_from_populations,
    wigner_grid,
    wigner_min,
    wigner_point,
)

PARAMS = HardwareParams()
RES = SpaceLayout.resonator_only(20)


def coherent(alpha, n=20):
    return PureState(SpaceLayout.resonator_only(n), coherent_amplitudes(alpha, n))


def cat(phi=math.pi / 4, alpha=2.0):
    return PureState(RES, cat_amplitudes(CatSpec(phi, alpha), 20))


def cat_wigner_exact(phi, alpha, chi):
    """Closed form for N(cos phi |alpha> - sin phi |0>) with real alpha."""
    n2 = CatSpec(phi, alpha).norm_N ** 2
    w_coh = math.exp(-2 * abs(chi - alpha) ** 2)
    w_vac = math.exp(-2 * abs(chi) ** 2)
    # (2/pi) Tr[P D(-chi) |alpha><0| D(chi)] for the cross term
    cross = math.exp(-alpha ** 2 / 2) * np.exp(-2 * abs(chi) ** 2 + 2 * chi * alpha)
    w = math.cos(phi) ** 2 * w_coh + math.sin(phi) ** 2 * w_vac
    w -= math.sin(2 * phi) * cross.real
    return W_BOUND * n2 * w


def test_vacuum_origin():
    assert abs(wigner_point(fock_state(RES), 0) - 2 / math.pi) < 1e-12


def test_single_photon_origin():
    assert abs(wigner_point(fock_state(RES, n=1), 0) + 2 / math.pi) < 1e-12


@pytest.mark.parametrize("alpha", [0.5, 1.0 + 1.0j, 2.0])
def test_coherent_gaussian(alpha):
    psi = coherent(alpha, 30)
    for chi in (alpha, alpha + 0.3, 0.0, -0.4j):
        expected = W_BOUND * math.exp(-2 * abs(chi - alpha) ** 2)
        assert abs(wigner_point(psi, chi) - expected) < 1e-9


@settings(max_examples=20, deadline=None)
@given(st.floats(-1.5, 3.5), st.floats(-1.5, 1.5), st.floats(0.05, math.pi / 2 - 0.05))
def test_cat_closed_form(x, y, phi):
    psi = PureState(SpaceLayout.resonator_only(40), cat_amplitudes(CatSpec(phi, 2.0), 40))
    chi = complex(x, y)
    assert abs(wigner_point(psi, chi) - cat_wigner_exact(phi, 2.0, chi)) < 1e-9


def test_values_within_bound():
    grid = wigner_grid(cat(), resolution=(21, 13))
    assert np.all(np.abs(grid.values) <= W_BOUND + 1e-12)


def test_grid_integral_normalized():
    grid = wigner_grid(cat(), bounds=((-3.0, 5.0), (-3.0, 3.0)), resolution=(81, 61))
    assert abs(grid.integral() - 1) < 2e-2


def test_grid_layout_and_rows():
    grid = wigner_grid(coherent(1.0), bounds=((0.0, 1.0), (-0.5, 0.5)), resolution=(3, 2))
    assert grid.values.shape == (2, 3)
    rows = list(grid.to_rows())
    assert rows[0][:2] == (0.0, -0.5) and rows[1][:2] == (0.5, -0.5)
    assert grid.to_csv().splitlines()[0] == "re,im,w"


def test_grid_resolution_checked():
    with pytest.raises(ValidationError):
        wigner_grid(cat(), resolution=(1, 5))


def test_qubits_must_be_traced_out():
    with pytest.raises(ValidationError, match="trace out"):
        wigner_point(fock_state(SpaceLayout(3)), 0)


def test_linearity():
    a, b = coherent(1.0).to_density(), fock_state(RES, n=2).to_density()
    mix = DensityOperator(RES, 0.3 * a.matrix + 0.7 * b.matrix)
    for chi in (0.0, 0.4 + 0.2j, 1.1):
        expected = 0.3 * wigner_point(a, chi) + 0.7 * wigner_point(b, chi)
        assert abs(wigner_point(mix, chi) - expected) < 1e-12


def test_classical_mixture_nonnegative():
    coh = coherent_amplitudes(2.0, 20)
    m = 0.5 * np.outer(coh, coh.conj())
    m[0, 0] += 0.5
    grid = wigner_grid(DensityOperator(RES, m), resolution=(26, 16))
    assert grid.values.min() >= -1e-9


def test_threads_give_same_grid(monkeypatch):
    a = wigner_grid(cat(), resolution=(11, 7), threads=1)
    b = wigner_grid(cat(), resolution=(11, 7), threads=3)
    assert np.array_equal(a.values, b.values)
    monkeypatch.setenv("QBS_SIM_THREADS", "x")
    with pytest.raises(ValidationError):
        thread_count()


def test_cat_negative_minimum():
    psi = cat()
    grid = wigner_grid(psi, resolution=(51, 31))
    chi, w = wigner_min(grid)
    chi_r, w_r = wigner_min(grid, refine=True, rho=psi)
    assert w < 0 and w_r <= w
    exact = min(cat_wigner_exact(math.pi / 4, 2.0, complex(x, 0)) for x in np.linspace(0.5, 1.5, 2001))
    assert abs(w_r - exact) < 1e-6
    with pytest.raises(ValidationError):
        wigner_min(grid, refine=True)


def test_displaced_populations_sum_to_one():
    pops = displaced_populations(cat(), 3.0 - 1.0j)
    assert abs(pops.sum() - 1) < 1e-10 and pops.min() > -1e-12


def test_rabi_signal_single_photon():
    tau = np.linspace(0, 50, 11)
    sig = rabi_tomography_signal(fock_state(RES, n=1), 0, PARAMS, tau)
    assert np.allclose(sig.pe_values, np.sin(PARAMS.omega_ancilla * tau) ** 2)
    vac = rabi_tomography_signal(fock_state(RES), 0, PARAMS, tau)
    assert np.allclose(vac.pe_values, 0)


@pytest.mark.parametrize("chi", [0.0, 0.9, 1.0 + 0.5j, -0.5j])
def test_tomography_round_trip(chi):
    psi = cat()
    assert abs(tomography_wigner(psi, chi, PARAMS) - wigner_point(psi, chi)) < 1e-3


def test_tomography_with_noise():
    psi = cat()
    chi = 0.92
    w = tomography_wigner(psi, chi, PARAMS, noise=0.05, seed=7)
    assert abs(w - wigner_point(psi, chi)) < 0.05
    assert w == tomography_wigner(psi, chi, PARAMS, noise=0.05, seed=7)
    with pytest.raises(ValidationError, match="seed"):
        tomography_wigner(psi, chi, PARAMS, noise=0.05)


def test_ill_conditioned_design():
    sig = RabiSignal(np.linspace(0, 1, 3), np.zeros(3))
    with pytest.raises(IllConditionedError):
        populations_from_rabi(sig, PARAMS, 10)


def test_default_tau_axis_well_conditioned():
    tau = default_tau_axis(PARAMS, 12)
    sig = rabi_tomography_signal(fock_state(RES, n=3), 0, PARAMS, tau)
    pops = populations_from_rabi(sig, PARAMS, 12)
    assert abs(pops[3] - 1) < 1e-6


def test_populations_must_normalize():
    assert abs(wigner_from_populations([0, 1]) + W_BOUND) < 1e-15
    with pytest.raises(NumericalInvariantError):
        wigner_from_populations([0.5, 0.2])
