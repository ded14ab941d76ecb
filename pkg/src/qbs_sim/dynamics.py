"""Qubit-resonator time evolution.

Times are in ns and rates in rad/ns. The coupling of qubit ``j`` is
``H_j = Omega_j (sigma_j^+ a + sigma_j^- a^dag)``, so on each invariant pair
``{|g, n+1>, |e, n>}`` the amplitudes rotate at ``sqrt(n+1) Omega_j``. Qubit
drives are instantaneous; a decoupled (far-detuned) qubit is left untouched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh

from .errors import ImpossibleBranchError, NumericalInvariantError, ValidationError
from .hilbert import (
    PROJ_E,
    PROJ_G,
    SIGMA_MINUS,
    SIGMA_PLUS,
    DensityOperator,
    LinearOperator,
    PureState,
    SpaceLayout,
    annihilation,
)

TWO_PI = 2 * math.pi


@dataclass(frozen=True)
class HardwareParams:
    """Coupling strengths (rad/ns) and per-qubit detunings (rad/ns)."""

    omega_test: float = TWO_PI * 0.0175
    omega_ancilla: float = TWO_PI * 0.0177
    detunings: tuple[tuple[str, float], ...] = (("ancilla", 0.0), ("test", 0.0))

    def __post_init__(self):
        if not (self.omega_test > 0 and self.omega_ancilla > 0):
            raise ValidationError("coupling strengths must be positive")
        if isinstance(self.detunings, dict):
            object.__setattr__(self, "detunings", tuple(sorted(self.detunings.items())))

    def coupling(self, qubit: str) -> float:
        if qubit == "test":
            return self.omega_test
        if qubit == "ancilla":
            return self.omega_ancilla
        raise ValidationError(f"unknown qubit label {qubit!r}")

    def detuning(self, qubit: str) -> float:
        self.coupling(qubit)
        return dict(self.detunings).get(qubit, 0.0)

    def to_dict(self) -> dict:
        return {
            "omega_test": self.omega_test,
            "omega_ancilla": self.omega_ancilla,
            "detunings": dict(self.detunings),
        }


@dataclass(frozen=True)
class RotationSpec:
    """Drive rotation by ``angle`` with phase ``theta``; pi/2 is the Ramsey pulse."""

    theta: float
    angle: float = math.pi / 2

    def __post_init__(self):
        if not 0 < self.angle <= TWO_PI:
            raise ValidationError(f"rotation angle {self.angle} outside (0, 2pi]")


def _check_qubit(layout: SpaceLayout, qubit: str):
    if qubit not in layout.qubits:
        raise ValidationError(f"qubit {qubit!r} not in layout {layout.qubits}")


def xy_rotation(angle: float, phase: float) -> np.ndarray:
    """``exp(-i angle/2 (cos(phase) X + sin(phase) Y))`` in the (g, e) basis."""
    c, s = math.cos(angle / 2), math.sin(angle / 2)
    return np.array(
        [[c, -1j * s * np.exp(-1j * phase)], [-1j * s * np.exp(1j * phase), c]], dtype=complex
    )


def ramsey_matrix(theta: float, angle: float = math.pi / 2) -> np.ndarray:
    """R2 pulse; at angle pi/2 this is ``[[1, -i e^{i theta}], [-i e^{-i theta}, 1]] / sqrt 2``."""
    return xy_rotation(angle, -theta)


def qubit_operator(layout: SpaceLayout, qubit: str, mat: np.ndarray, unitary: bool = True) -> LinearOperator:
    _check_qubit(layout, qubit)
    return LinearOperator(layout, layout.embed(qubit, mat), unitary=unitary)


def jc_hamiltonian(params: HardwareParams, qubit: str, layout: SpaceLayout, delta: float = 0.0) -> LinearOperator:
    """Resonant JC coupling of ``qubit``, plus ``delta |e><e|`` in the rotating frame."""
    _check_qubit(layout, qubit)
    omega = params.coupling(qubit)
    a = layout.embed("resonator", annihilation(layout.n_cutoff))
    sp = layout.embed(qubit, SIGMA_PLUS)
    sm = layout.embed(qubit, SIGMA_MINUS)
    h = omega * (sp @ a + sm @ a.conj().T)
    if delta:
        h = h + delta * layout.embed(qubit, PROJ_E)
    return LinearOperator(layout, h)


def jc_propagator(params: HardwareParams, qubit: str, t: float, layout: SpaceLayout) -> LinearOperator:
    """Closed-form resonant JC propagator, built block by block."""
    _check_qubit(layout, qubit)
    if t < 0:
        raise ValidationError("evolution time must be non-negative")
    omega = params.coupling(qubit)
    u = np.eye(layout.dim, dtype=complex)
    other = [q for q in layout.qubits if q != qubit]
    for other_level in (0, 1) if other else (0,):
        levels = {other[0]: other_level} if other else {}
        for n in range(layout.n_cutoff):
            g_idx = layout.index(**{**levels, qubit: 0, "n": n + 1})
            e_idx = layout.index(**{**levels, qubit: 1, "n": n})
            x = math.sqrt(n + 1) * omega * t
            c, s = math.cos(x), math.sin(x)
            u[g_idx, g_idx] = c
            u[e_idx, e_idx] = c
            u[g_idx, e_idx] = -1j * s
            u[e_idx, g_idx] = -1j * s
    return LinearOperator(layout, u, unitary=True)


def expm_oracle(hamiltonian: LinearOperator, t: float) -> LinearOperator:
    """``exp(-i H t)`` from the eigendecomposition of a Hermitian ``H``."""
    if not hamiltonian.is_hermitian(1e-10):
        raise ValidationError("expm_oracle requires a Hermitian generator")
    h = hamiltonian.matrix
    w, v = eigh((h + h.conj().T) / 2)
    u = (v * np.exp(-1j * w * t)) @ v.conj().T
    return LinearOperator(hamiltonian.layout, u, unitary=True)


def jc_propagator_detuned(params: HardwareParams, qubit: str, delta: float, t: float, layout: SpaceLayout) -> LinearOperator:
    """Interaction-picture propagator of a detuned coupling.

    The rotating-frame generator ``delta |e><e| + H_JC`` is exponentiated and the
    frame phase ``exp(i delta t |e><e|)`` is put back, so ``delta = 0`` matches
    :func:`jc_propagator`.
    """
    if t < 0:
        raise ValidationError("evolution time must be non-negative")
    u_rot = expm_oracle(jc_hamiltonian(params, qubit, layout, delta), t).matrix
    frame = layout.embed(qubit, np.diag([1.0, np.exp(1j * delta * t)]))
    return LinearOperator(layout, frame @ u_rot, unitary=True)


def coupling_propagator(params: HardwareParams, qubit: str, t: float, layout: SpaceLayout) -> LinearOperator:
    delta = params.detuning(qubit)
    if delta:
        return jc_propagator_detuned(params, qubit, delta, t, layout)
    return jc_propagator(params, qubit, t, layout)


def beamsplitter_time(alpha: float, params: HardwareParams) -> float:
    """``t_alpha = pi / (4 alpha Omega)``: a pi/2 rotation for a field of amplitude alpha."""
    if not alpha > 0:
        raise ValidationError("alpha must be positive")
    return math.pi / (4 * alpha * params.omega_test)


def readout_time(alpha: float, params: HardwareParams) -> float:
    if not alpha > 0:
        raise ValidationError("alpha must be positive")
    return math.pi / (2 * alpha * params.omega_ancilla)


def iswap_time(params: HardwareParams, qubit: str = "ancilla") -> float:
    return math.pi / (2 * params.coupling(qubit))


def r1_beamsplitter(state, alpha: float, params: HardwareParams):
    t = beamsplitter_time(alpha, params)
    return coupling_propagator(params, "test", t, state.layout).apply(state)


def r2_rotation(state, spec: RotationSpec, qubit: str = "test"):
    return qubit_operator(state.layout, qubit, ramsey_matrix(spec.theta, spec.angle)).apply(state)


def readout_coupling(state, alpha: float, params: HardwareParams):
    _check_qubit(state.layout, "ancilla")
    t = readout_time(alpha, params)
    return coupling_propagator(params, "ancilla", t, state.layout).apply(state)


def iswap_vacuum(state, params: HardwareParams, qubit: str = "ancilla"):
    return coupling_propagator(params, qubit, iswap_time(params, qubit), state.layout).apply(state)


# ---------------------------------------------------------------------------
# measurement

@dataclass(frozen=True)
class ImpossibleBranch:
    """Returned instead of a state when the requested outcome has probability < 1e-12."""

    qubit: str
    outcome: int
    probability: float

    def require(self):
        raise ImpossibleBranchError(
            f"post-selection on {self.qubit}={'ge'[self.outcome]} has probability {self.probability:.3e}"
        )


def _outcome_index(outcome) -> int:
    if outcome in (0, "g", "ground"):
        return 0
    if outcome in (1, "e", "excited"):
        return 1
    raise ValidationError(f"unknown measurement outcome {outcome!r}")


def projector(layout: SpaceLayout, qubit: str, outcome) -> np.ndarray:
    _check_qubit(layout, qubit)
    return layout.embed(qubit, PROJ_E if _outcome_index(outcome) else PROJ_G)


def outcome_probability(state, proj: np.ndarray) -> float:
    if isinstance(state, PureState):
        v = state.amplitudes
        return float(np.real(np.vdot(v, proj @ v)))
    return float(np.real(np.trace(proj @ state.matrix)))


def measure_qubit(state, qubit: str, outcome):
    """Born probability of ``outcome`` and the renormalized post-measurement state.

    Returns ``(p, ImpossibleBranch)`` when ``p < 1e-12``.
    """
    k = _outcome_index(outcome)
    proj = projector(state.layout, qubit, k)
    p = outcome_probability(state, proj)
    p = min(max(p, 0.0), 1.0)
    if p < 1e-12:
        return p, ImpossibleBranch(qubit, k, p)
    if isinstance(state, PureState):
        return p, PureState(state.layout, proj @ state.amplitudes / math.sqrt(p))
    m = proj @ state.matrix @ proj / p
    return p, DensityOperator(state.layout, m, validate=False)


def excitation_number(layout: SpaceLayout) -> np.ndarray:
    """Diagonal of (qubit excitations + photon number)."""
    total = np.zeros(layout.dim)
    for q in layout.qubits:
        total += np.real(np.diag(layout.embed(q, PROJ_E)))
    if layout.resonator:
        n = np.arange(layout.res_dim, dtype=float)
        total += np.real(np.diag(layout.embed("resonator", np.diag(n).astype(complex))))
    return total


def check_norm(state, tol=1e-9):
    nrm = state.norm if isinstance(state, PureState) else state.trace
    if abs(nrm - 1) > tol:
        raise NumericalInvariantError(f"norm drifted to {nrm:.12f}")
