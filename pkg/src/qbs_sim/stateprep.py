"""Cat-state preparation: analytic targets, Law-Eberly pumping, pulse programs."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence, Union

import numpy as np

from .decoherence import DecoherenceRates, lindblad_evolve
from .dynamics import (
    HardwareParams,
    coupling_propagator,
    projector,
    qubit_operator,
    xy_rotation,
)
from .errors import TruncationError, ValidationError
from .hilbert import (
    DensityOperator,
    PureState,
    SpaceLayout,
    coherent_amplitudes,
    displacement_operator,
    load_state,
    resonator_vector,
)

SYNTHESIS_CUTOFF = 4


@dataclass(frozen=True)
class CatSpec:
    """Target ``N (cos phi |alpha> - sin phi |0>)``."""

    phi: float
    alpha: float = 2.0
    cutoff: int = SYNTHESIS_CUTOFF

    def __post_init__(self):
        if not -1e-12 <= self.phi <= math.pi / 2 + 1e-12:
            raise ValidationError(f"phi={self.phi} outside [0, pi/2]")
        if not self.alpha > 0:
            raise ValidationError("alpha must be positive")
        if self.cutoff < 1:
            raise ValidationError("synthesis cutoff must be >= 1")

    @property
    def norm_N(self) -> float:
        return (1.0 - math.exp(-self.alpha ** 2 / 2) * math.sin(2 * self.phi)) ** -0.5

    def to_dict(self) -> dict:
        return {"phi": self.phi, "alpha": self.alpha, "cutoff": self.cutoff}


# ---------------------------------------------------------------------------
# pulse programs

@dataclass(frozen=True)
class Drive:
    """Instantaneous qubit rotation ``R(angle, phase) @ diag(1, e^{i z_phase})``.

    ``z_phase`` is a frame update applied before the rotation.
    """

    qubit: str
    angle: float
    phase: float = 0.0
    z_phase: float = 0.0
    kind = "drive"

    def matrix(self) -> np.ndarray:
        return xy_rotation(self.angle, self.phase) @ np.diag([1.0, np.exp(1j * self.z_phase)])


@dataclass(frozen=True)
class Swap:
    qubit: str
    duration: float
    kind = "swap"


@dataclass(frozen=True)
class Displace:
    amplitude: complex
    kind = "displace"


@dataclass(frozen=True)
class Delay:
    duration: float
    kind = "delay"


@dataclass(frozen=True)
class Measure:
    qubit: str
    kind = "measure"


Step = Union[Drive, Swap, Displace, Delay, Measure]
STEP_KINDS = {"drive": Drive, "swap": Swap, "displace": Displace, "delay": Delay, "measure": Measure}


def step_to_dict(step: Step) -> dict:
    if isinstance(step, Drive):
        return {"kind": "drive", "qubit": step.qubit, "angle": step.angle, "phase": step.phase,
                "z_phase": step.z_phase}
    if isinstance(step, Swap):
        return {"kind": "swap", "qubit": step.qubit, "duration": step.duration}
    if isinstance(step, Displace):
        z = complex(step.amplitude)
        return {"kind": "displace", "amplitude": [z.real, z.imag]}
    if isinstance(step, Delay):
        return {"kind": "delay", "duration": step.duration}
    if isinstance(step, Measure):
        return {"kind": "measure", "qubit": step.qubit}
    raise TypeError(f"not a program step: {step!r}")


def step_from_dict(d: dict, index: int = 0) -> Step:
    where = f"step {index}"
    if not isinstance(d, dict):
        raise ValidationError(f"{where}: expected an object, got {type(d).__name__}")
    kind = d.get("kind")
    if kind not in STEP_KINDS:
        raise ValidationError(f"{where}: unknown step kind {kind!r} (expected one of {sorted(STEP_KINDS)})")
    allowed = {
        "drive": {"qubit", "angle", "phase", "z_phase"},
        "swap": {"qubit", "duration"},
        "displace": {"amplitude"},
        "delay": {"duration"},
        "measure": {"qubit"},
    }[kind]
    extra = set(d) - allowed - {"kind", "comment"}
    if extra:
        raise ValidationError(f"{where} ({kind}): unexpected field(s) {sorted(extra)}")
    try:
        if kind == "drive":
            step = Drive(d["qubit"], float(d["angle"]), float(d.get("phase", 0.0)), float(d.get("z_phase", 0.0)))
        elif kind == "swap":
            step = Swap(d["qubit"], float(d["duration"]))
        elif kind == "displace":
            re, im = d["amplitude"]
            step = Displace(complex(float(re), float(im)))
        elif kind == "delay":
            step = Delay(float(d["duration"]))
        else:
            step = Measure(d["qubit"])
    except KeyError as exc:
        raise ValidationError(f"{where} ({kind}): missing field {exc.args[0]!r}") from None
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where} ({kind}): bad value ({exc})") from None
    duration = getattr(step, "duration", 0.0)
    if duration < 0:
        raise ValidationError(f"{where} ({kind}): negative duration {duration}")
    if not all(math.isfinite(v) for v in _numbers(step)):
        raise ValidationError(f"{where} ({kind}): non-finite value")
    return step


def _numbers(step: Step):
    if isinstance(step, Drive):
        return (step.angle, step.phase, step.z_phase)
    if isinstance(step, (Swap, Delay)):
        return (step.duration,)
    if isinstance(step, Displace):
        return (step.amplitude.real, step.amplitude.imag)
    return ()


@dataclass(frozen=True)
class PulseProgram:
    steps: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    def __len__(self):
        return len(self.steps)

    def __add__(self, other: "PulseProgram") -> "PulseProgram":
        return PulseProgram(self.steps + tuple(other.steps))

    def validate(self, layout: SpaceLayout) -> "PulseProgram":
        for i, step in enumerate(self.steps):
            q = getattr(step, "qubit", None)
            if q is not None and q not in layout.qubits:
                raise ValidationError(f"step {i} ({step.kind}): qubit {q!r} not in layout {layout.qubits}")
            if isinstance(step, (Swap, Displace)) and not layout.resonator:
                raise ValidationError(f"step {i} ({step.kind}): layout has no resonator")
            if getattr(step, "duration", 0.0) < 0:
                raise ValidationError(f"step {i} ({step.kind}): negative duration")
        return self

    def to_dict(self) -> dict:
        return {"steps": [step_to_dict(s) for s in self.steps]}

    @classmethod
    def from_dict(cls, d: dict) -> "PulseProgram":
        if not isinstance(d, dict) or not isinstance(d.get("steps"), list):
            raise ValidationError("program document must be an object with a 'steps' list")
        return cls(tuple(step_from_dict(s, i) for i, s in enumerate(d["steps"])))

    @property
    def measured(self) -> tuple[str, ...]:
        seen = []
        for s in self.steps:
            if isinstance(s, Measure) and s.qubit not in seen:
                seen.append(s.qubit)
        return tuple(seen)


@dataclass(frozen=True, eq=False)
class ProgramResult:
    """Final state plus joint outcome probabilities of the measured qubits.

    ``outcomes`` maps tuples of levels (one per entry of ``measured``) to
    probabilities.
    """

    state: object
    measured: tuple[str, ...] = ()
    outcomes: dict = field(default_factory=dict)


def run_program(program: PulseProgram, layout: SpaceLayout, params: HardwareParams, initial=None,
                rates: DecoherenceRates | None = None, dt: float = 0.1) -> ProgramResult:
    """Execute a program step by step.

    Pure states are propagated when possible; a Measure step, or a Delay with
    nonzero ``rates``, switches to density matrices. Measure dephases the
    qubit, so outcome statistics are read from the final state.
    """
    program.validate(layout)
    state = initial if initial is not None else resonator_vector(layout, _vacuum(layout))
    if state.layout != layout:
        raise ValidationError("initial state layout does not match the program layout")
    decohere = rates is not None and any(v > 0 for v in rates.to_dict().values())
    for step in program.steps:
        if isinstance(step, Drive):
            state = qubit_operator(layout, step.qubit, step.matrix()).apply(state)
        elif isinstance(step, Swap):
            if step.duration:
                state = coupling_propagator(params, step.qubit, step.duration, layout).apply(state)
        elif isinstance(step, Displace):
            if step.amplitude:
                state = displacement_operator(layout, step.amplitude).apply(state)
        elif isinstance(step, Delay):
            if decohere and step.duration:
                rho = state.to_density() if isinstance(state, PureState) else state
                state = lindblad_evolve(rho, rates, None, step.duration, dt)
        elif isinstance(step, Measure):
            rho = state.to_density() if isinstance(state, PureState) else state
            p0 = projector(layout, step.qubit, 0)
            p1 = projector(layout, step.qubit, 1)
            m = rho.matrix
            state = DensityOperator(layout, p0 @ m @ p0 + p1 @ m @ p1, validate=False)
    measured = program.measured
    return ProgramResult(state, measured, joint_outcomes(state, measured))


def joint_outcomes(state, qubits: Sequence[str]) -> dict:
    if not qubits:
        return {}
    layout = state.layout
    if isinstance(state, PureState):
        diag = np.abs(state.amplitudes) ** 2
    else:
        diag = np.real(np.diag(state.matrix))
    t = diag.reshape(layout.dims)
    axes = [layout.axis(q) for q in qubits]
    others = tuple(i for i in range(t.ndim) if i not in axes)
    marg = t.sum(axis=others)
    # marginal axes come out in layout order; reorder to the requested order
    order = np.argsort(np.argsort(axes))
    marg = np.transpose(marg, order)
    out = {}
    for idx in np.ndindex(*marg.shape):
        out[tuple(int(i) for i in idx)] = float(marg[idx])
    return out


def _vacuum(layout: SpaceLayout) -> np.ndarray:
    v = np.zeros(layout.res_dim, dtype=complex)
    v[0] = 1.0
    return v


# ---------------------------------------------------------------------------
# targets

def cat_amplitudes(spec: CatSpec, n_cutoff: int) -> np.ndarray:
    coh = coherent_amplitudes(spec.alpha, n_cutoff)
    vec = math.cos(spec.phi) * coh
    vec[0] -= math.sin(spec.phi)
    return vec / np.linalg.norm(vec)


def ideal_cat(spec: CatSpec, layout: SpaceLayout) -> PureState:
    """Analytic cat on the resonator, both qubits in ``|g>``."""
    from .hilbert import poisson_weight

    captured = poisson_weight(spec.alpha ** 2, layout.n_cutoff)
    if captured < 1 - 1e-6:
        raise TruncationError(f"cutoff {layout.n_cutoff} too small for alpha={spec.alpha}", captured)
    return resonator_vector(layout, cat_amplitudes(spec, layout.n_cutoff))


def predisplacement_target(spec: CatSpec) -> np.ndarray:
    """``cos phi |alpha/2> - sin phi |-alpha/2>`` truncated at ``spec.cutoff`` and renormalized."""
    half = spec.alpha / 2
    plus = coherent_amplitudes(half, spec.cutoff, renormalize=False)
    minus = coherent_amplitudes(-half, spec.cutoff, renormalize=False)
    vec = math.cos(spec.phi) * plus - math.sin(spec.phi) * minus
    return vec / np.linalg.norm(vec)


# ---------------------------------------------------------------------------
# Law-Eberly synthesis

def _apply_swap_backward(g: np.ndarray, e: np.ndarray, omega: float, t: float):
    """Undo a resonant swap of duration ``t`` on arrays indexed by photon number."""
    n_top = g.size - 1
    g2, e2 = g.copy(), e.copy()
    for k in range(1, n_top + 1):
        x = math.sqrt(k) * omega * t
        c, s = math.cos(x), math.sin(x)
        g2[k] = c * g[k] + 1j * s * e[k - 1]
        e2[k - 1] = 1j * s * g[k] + c * e[k - 1]
    return g2, e2


def law_eberly_program(target: Sequence[complex], params: HardwareParams, qubit: str = "ancilla",
                       tol: float = 1e-9) -> PulseProgram:
    """Drive/Swap sequence pumping ``|g'>|0>`` into ``|g'> sum_n c_n |n>``.

    The sequence is found by running the preparation backwards from the
    target: at level ``n`` a frame phase lines up the pair
    ``(|g,n>, |e,n-1>)``, an inverse swap empties ``|g,n>`` and an inverse
    drive empties ``|e,n-1>``. The forward program is the reversed list of
    inverses, one Drive/Swap pair per level, zero-length steps included.
    """
    c = np.asarray(target, dtype=complex)
    if c.ndim != 1 or c.size < 2:
        raise ValidationError("target must list at least two Fock amplitudes")
    nrm = np.linalg.norm(c)
    if abs(nrm - 1) > 1e-6:
        raise ValidationError(f"target is not normalized (norm {nrm:.9f})")
    omega = params.coupling(qubit)
    n_top = c.size - 1
    g = c / nrm
    e = np.zeros_like(g)

    swaps, drives, zphases = {}, {}, {}
    for n in range(n_top, 0, -1):
        gn, em = g[n], e[n - 1]
        beta = 0.0
        if abs(gn) > tol and abs(em) > tol:
            beta = np.angle(gn) + math.pi / 2 - np.angle(em)
            e = e * np.exp(1j * beta)
        zphases[n] = beta
        if abs(gn) <= tol:
            x = 0.0
        else:
            x = math.atan2(abs(gn), abs(e[n - 1]))
        t = x / (math.sqrt(n) * omega)
        swaps[n] = t
        g, e = _apply_swap_backward(g, e, omega, t)
        g[n] = 0.0

        gl, el = g[n - 1], e[n - 1]
        if abs(el) <= tol:
            angle, phase = 0.0, 0.0
        else:
            angle = 2 * math.atan2(abs(el), abs(gl))
            ref = np.angle(gl) if abs(gl) > tol else 0.0
            phase = np.angle(el) - ref - math.pi / 2
        drives[n] = (angle, phase)
        rot = xy_rotation(angle, phase)
        g, e = rot[0, 0] * g + rot[0, 1] * e, rot[1, 0] * g + rot[1, 1] * e
        e[n - 1] = 0.0

    steps = []
    for n in range(1, n_top + 1):
        angle, phase = drives[n]
        z_prev = zphases.get(n - 1, 0.0)
        steps.append(Drive(qubit, angle, _wrap(phase + math.pi), _wrap(-z_prev)))
        steps.append(Swap(qubit, swaps[n]))
    return PulseProgram(tuple(steps))


def _wrap(x: float) -> float:
    return float((x + math.pi) % (2 * math.pi) - math.pi)


def cat_synthesis_program(spec: CatSpec, params: HardwareParams) -> PulseProgram:
    """Full preparation sequence for ``spec`` on the ancilla and resonator."""
    half = spec.alpha / 2
    if spec.phi <= 1e-12:
        return PulseProgram((Displace(complex(spec.alpha)),))
    if spec.phi >= math.pi / 2 - 1e-12:
        return PulseProgram((Displace(complex(-half)), Displace(complex(half))))
    body = law_eberly_program(predisplacement_target(spec), params)
    return body + PulseProgram((Displace(complex(half)),))


def synthesize_cat(spec: CatSpec, params: HardwareParams, layout: SpaceLayout) -> PureState:
    program = cat_synthesis_program(spec, params)
    result = run_program(program, layout, params)
    return result.state


def load_initial_state(path) -> DensityOperator:
    """Read a density-matrix file (see :func:`qbs_sim.hilbert.state_from_dict`)."""
    state = load_state(path)
    if isinstance(state, PureState):
        return DensityOperator(state.layout, state.to_density().matrix)
    return state


def dephased_cat(spec: CatSpec, fidelity_target: float, n_cutoff: int = 20) -> DensityOperator:
    """Resonator-only stand-in for an imperfectly prepared cat.

    Mixes the ideal cat with its fully dephased counterpart
    ``cos^2 phi |alpha><alpha| + sin^2 phi |0><0|`` (renormalized) so that the
    fidelity to the ideal cat equals ``fidelity_target``.
    """
    layout = SpaceLayout.resonator_only(n_cutoff)
    psi = cat_amplitudes(spec, n_cutoff)
    coh = coherent_amplitudes(spec.alpha, n_cutoff)
    vac = np.zeros(n_cutoff + 1, dtype=complex)
    vac[0] = 1.0
    mix = math.cos(spec.phi) ** 2 * np.outer(coh, coh.conj()) + math.sin(spec.phi) ** 2 * np.outer(vac, vac)
    mix /= np.trace(mix).real
    f_mix = float(np.real(np.vdot(psi, mix @ psi)))
    if not f_mix <= fidelity_target <= 1.0:
        raise ValidationError(f"fidelity must lie in [{f_mix:.4f}, 1] for this model")
    p = (fidelity_target - f_mix) / (1.0 - f_mix)
    rho = p * np.outer(psi, psi.conj()) + (1 - p) * mix
    return DensityOperator(layout, rho)
