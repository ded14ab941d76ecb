import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qbs_sim.errors import (
    CutoffExceededError,
    LayoutMismatchError,
    NumericalInvariantError,
    TruncationError,
    ValidationError,
)
from qbs_sim.hilbert import (
    DensityOperator,
    LinearOperator,
    PureState,
    SpaceLayout,
    annihilation,
    coherent_amplitudes,
    coherent_state,
    displacement_columns,
    displacement_operator,
    fidelity,
    fock_state,
    overlap,
    pad_resonator,
    parity_operator,
    partial_trace,
    product_with_qubits,
    resonator_vector,
    save_state,
    load_state,
    state_from_dict,
    state_to_dict,
    trace_distance,
    unitarity_error,
)


def test_default_layout_dimension():
    layout = SpaceLayout()
    assert layout.n_cutoff == 20
    assert layout.dims == (2, 2, 21)
    assert layout.dim == 84


@pytest.mark.parametrize(
    "levels, expected",
    [((0, 0, 0), 0), ((0, 1, 2), 7), ((1, 0, 0), 10), ((1, 1, 4), 19)],
)
def test_index_row_major(levels, expected):
    layout = SpaceLayout(4)
    assert layout.index(*levels) == expected
    psi = fock_state(layout, *levels)
    assert psi.amplitudes[expected] == 1


def test_index_out_of_range():
    with pytest.raises(CutoffExceededError):
        fock_state(SpaceLayout(4), 0, 0, 5)


def test_layout_order_enforced():
    with pytest.raises(ValidationError):
        SpaceLayout(4, ("test", "ancilla"))
    with pytest.raises(ValidationError):
        SpaceLayout(0)


def test_embed_matches_kron():
    layout = SpaceLayout(3)
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    expected = np.kron(np.kron(np.eye(2), x), np.eye(4))
    assert np.allclose(layout.embed("test", x), expected)
    with pytest.raises(LayoutMismatchError):
        layout.embed("resonator", x)


def test_layouts_do_not_mix():
    a = fock_state(SpaceLayout(3))
    b = fock_state(SpaceLayout(4))
    with pytest.raises(LayoutMismatchError):
        overlap(a, b)


def test_coherent_vacuum_limit():
    c = coherent_amplitudes(0.0, 10)
    assert c[0] == 1 and np.all(c[1:] == 0)


def test_coherent_mean_photon_number():
    c = coherent_amplitudes(2.0, 20)
    n = np.arange(21)
    assert abs(np.sum(n * np.abs(c) ** 2) - 4.0) < 1e-4


@pytest.mark.parametrize("alpha, expected", [(2.0, math.exp(-4)), (3.0, math.exp(-9))])
def test_coherent_vacuum_overlap(alpha, expected):
    layout = SpaceLayout(30)
    coh = coherent_state(layout, alpha)
    vac = fock_state(layout)
    assert abs(abs(overlap(coh, vac)) ** 2 - expected) < 1e-12


def test_overlap_magnitudes():
    assert round(math.exp(-4), 4) == 0.0183
    assert round(math.exp(-9), 6) == 0.000123


def test_truncation_reports_captured_weight():
    with pytest.raises(TruncationError) as info:
        coherent_state(SpaceLayout(8), 2.0)
    assert 0.9 < info.value.captured < 1 - 1e-6


def test_poisson_law():
    c = coherent_amplitudes(1.5, 30)
    n = np.arange(31)
    poisson = np.exp(-2.25) * 2.25 ** n / np.array([math.factorial(k) for k in n], dtype=float)
    assert np.allclose(np.abs(c) ** 2, poisson, atol=1e-12)


def test_displacement_identity_at_zero():
    d = displacement_operator(SpaceLayout(10), 0.0)
    assert np.allclose(d.matrix, np.eye(d.layout.dim))


def test_displacement_of_vacuum_is_coherent():
    layout = SpaceLayout(20)
    d = displacement_operator(layout, 1.0)
    out = d.apply(fock_state(layout))
    assert np.max(np.abs(out.amplitudes - coherent_state(layout, 1.0).amplitudes)) < 1e-8


def test_displacement_inverse():
    layout = SpaceLayout.resonator_only(20)
    chi = 0.84 - 0.03j
    prod = displacement_operator(layout, -chi).matrix @ displacement_operator(layout, chi).matrix
    assert np.max(np.abs(prod - np.eye(layout.dim))) < 1e-9


@settings(max_examples=25, deadline=None)
@given(
    st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False),
    st.complex_numbers(max_magnitude=2.0, allow_nan=False, allow_infinity=False),
)
def test_displacement_group_law_on_low_fock_states(a, b):
    # truncated expm is only faithful far below the cutoff: compare the low block
    layout = SpaceLayout.resonator_only(40)
    lhs = displacement_operator(layout, a).matrix @ displacement_operator(layout, b).matrix
    rhs = np.exp(1j * (a * np.conj(b)).imag) * displacement_operator(layout, a + b).matrix
    assert np.max(np.abs(lhs[:21, :4] - rhs[:21, :4])) < 1e-7


@pytest.mark.parametrize("beta", [0.5, 1.2 - 0.7j, -2.0 + 1.0j])
def test_displacement_columns_exact(beta):
    layout = SpaceLayout.resonator_only(60)
    full = displacement_operator(layout, beta).matrix
    cols = displacement_columns(beta, 6, 30)
    assert np.max(np.abs(cols - full[:30, :6])) < 1e-10


@pytest.mark.parametrize("n, sign", [(0, 1), (3, -1), (4, 1)])
def test_parity_eigenvalues(n, sign):
    layout = SpaceLayout(6)
    psi = fock_state(layout, n=n)
    out = parity_operator(layout).apply(psi)
    assert np.allclose(out.amplitudes, sign * psi.amplitudes)


def test_parity_of_coherent_state():
    layout = SpaceLayout(30)
    coh = coherent_state(layout, 2.0)
    val = np.vdot(coh.amplitudes, parity_operator(layout).apply(coh).amplitudes).real
    series = sum((-1) ** n * abs(c) ** 2 for n, c in enumerate(coherent_amplitudes(2.0, 30)))
    assert abs(val - series) < 1e-14
    assert abs(val - math.exp(-8)) < 1e-10


def test_partial_trace_of_product():
    layout = SpaceLayout(4)
    rho_r = np.diag([0.5, 0.2, 0.2, 0.1, 0.0]).astype(complex)
    rho_q = np.array([[0.7, 0.1j], [-0.1j, 0.3]])
    full = np.kron(np.kron(np.array([[1, 0], [0, 0]]), rho_q), rho_r)
    rho = DensityOperator(layout, full)
    assert np.max(np.abs(partial_trace(rho, "resonator").matrix - rho_r)) < 1e-12
    assert np.max(np.abs(partial_trace(rho, "test").matrix - rho_q)) < 1e-12


def test_partial_trace_bell_pair():
    layout = SpaceLayout(1, ("ancilla", "test"), resonator=False)
    vec = np.zeros(4, dtype=complex)
    vec[0] = vec[3] = 1 / math.sqrt(2)
    red = partial_trace(PureState(layout, vec), "test")
    assert np.allclose(red.matrix, np.eye(2) / 2)


def test_partial_trace_keeps_trace():
    rng = np.random.default_rng(5)
    layout = SpaceLayout(5)
    v = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    psi = PureState(layout, v).normalized()
    assert abs(partial_trace(psi, "resonator").trace - 1) < 1e-10
    assert abs(partial_trace(psi, ["ancilla", "test"]).trace - 1) < 1e-10


def test_fidelity_limits():
    layout = SpaceLayout.resonator_only(5)
    psi = PureState(layout, coherent_amplitudes(0.7, 5))
    assert abs(fidelity(psi.to_density(), psi) - 1) < 1e-12
    mixed = DensityOperator(layout, np.eye(6) / 6)
    assert abs(fidelity(mixed, psi) - 1 / 6) < 1e-12


def test_trace_distance_orthogonal():
    layout = SpaceLayout.resonator_only(3)
    a = fock_state(layout, n=0)
    b = fock_state(layout, n=1)
    assert abs(trace_distance(a, b) - 1) < 1e-12


def test_density_validation():
    layout = SpaceLayout.resonator_only(1)
    with pytest.raises(NumericalInvariantError, match="Hermitian"):
        DensityOperator(layout, np.array([[0.5, 0.3], [0.0, 0.5]]))
    with pytest.raises(NumericalInvariantError, match="trace"):
        DensityOperator(layout, np.diag([0.6, 0.3]))
    with pytest.raises(NumericalInvariantError):
        DensityOperator(layout, np.diag([1.2, -0.2]))


def test_unitary_flag_checked():
    layout = SpaceLayout.resonator_only(2)
    with pytest.raises(NumericalInvariantError):
        LinearOperator(layout, 2 * np.eye(3), unitary=True)
    assert unitarity_error(np.eye(3)) == 0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_unitary_preserves_norm(seed):
    rng = np.random.default_rng(seed)
    layout = SpaceLayout(4)
    h = rng.normal(size=(layout.dim,) * 2) + 1j * rng.normal(size=(layout.dim,) * 2)
    q, _ = np.linalg.qr(h)
    u = LinearOperator(layout, q, unitary=True)
    v = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    psi = PureState(layout, v).normalized()
    assert abs(u.apply(psi).norm - 1) < 1e-9


def test_pad_and_product():
    small = PureState(SpaceLayout.resonator_only(3), np.array([0, 1, 0, 0], dtype=complex))
    padded = pad_resonator(small, 6)
    assert padded.layout.n_cutoff == 6 and padded.amplitudes[1] == 1
    full = product_with_qubits(small.to_density(), SpaceLayout(6), test=1)
    idx = SpaceLayout(6).index(0, 1, 1)
    assert full.matrix[idx, idx] == 1
    with pytest.raises(CutoffExceededError):
        pad_resonator(padded, 3)


def test_annihilation_lowers():
    a = annihilation(4)
    v = np.zeros(5)
    v[3] = 1
    assert np.allclose(a @ v, math.sqrt(3) * np.eye(5)[2])


def test_state_json_round_trip(tmp_path):
    layout = SpaceLayout(3)
    rng = np.random.default_rng(1)
    v = rng.normal(size=layout.dim) + 1j * rng.normal(size=layout.dim)
    rho = PureState(layout, v).normalized().to_density()
    path = tmp_path / "rho.json"
    save_state(rho, path, metadata={"note": "x"})
    back = load_state(path)
    assert back.layout == layout
    assert np.max(np.abs(back.matrix - rho.matrix)) < 1e-14


def test_state_json_rejects_bad_trace():
    layout = SpaceLayout.resonator_only(1)
    doc = state_to_dict(DensityOperator(layout, np.diag([1.0, 0.0]).astype(complex)))
    doc["entries"][0] = [0.98, 0.0]
    with pytest.raises(ValidationError, match="trace"):
        state_from_dict(doc)


def test_state_json_rejects_non_hermitian():
    layout = SpaceLayout.resonator_only(1)
    doc = state_to_dict(DensityOperator(layout, np.diag([0.5, 0.5]).astype(complex)))
    doc["entries"][1] = [0.1, 0.0]
    with pytest.raises(ValidationError, match="Hermitian"):
        state_from_dict(doc)


def test_state_json_malformed(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"kind": "density",\n "layout": }')
    with pytest.raises(ValidationError, match="line 2"):
        load_state(path)
    doc = json.loads('{"kind": "density"}')
    with pytest.raises(ValidationError):
        state_from_dict(doc)


def test_resonator_vector_length_checked():
    with pytest.raises(LayoutMismatchError):
        resonator_vector(SpaceLayout(3), np.ones(3))
