"""End-to-end delayed-choice pipelines.

Protocol per point: prepare the resonator (ideal cat, synthesized cat, or a
loaded density matrix), optionally let it decay for a delay ``T``, couple the
test qubit for ``t_alpha`` (R1), apply the Ramsey pulse R2(theta), and
discriminate the resonator with the ancilla. Conditional probabilities are
exact functions of the joint state; finite statistics come from
:func:`sample_shots`.

Ancilla discrimination models:

``coupling``
    the ancilla interacts for ``pi / (2 alpha Omega')`` and is read out.
``projective``
    ideal photon-presence discrimination: ``g'`` means zero photons.
``none``
    no discrimination; only unconditional quantities are filled in.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .decoherence import (
    DecoherenceRates,
    DelaySpec,
    analytic_decohered_cat,
    coherence_sum,
    lindblad_evolve,
)
from .dynamics import (
    HardwareParams,
    beamsplitter_time,
    coupling_propagator,
    jc_hamiltonian,
    outcome_probability,
    projector,
    qubit_operator,
    ramsey_matrix,
    readout_time,
)
from .errors import ImpossibleBranchError, ValidationError
from .hilbert import (
    DensityOperator,
    PureState,
    SpaceLayout,
    coherent_amplitudes,
    pad_resonator,
    partial_trace,
    poisson_weight,
    product_with_qubits,
)
from .stateprep import CatSpec, ideal_cat, synthesize_cat
from .wigner import DEFAULT_BOUNDS, DEFAULT_RESOLUTION, WignerGrid, wigner_grid, wigner_min

READOUT_MODELS = ("coupling", "projective", "none")
PREP_MODES = ("ideal", "synthesized", "file")
CSV_COLUMNS = ("theta", "pe", "pe_e", "pe_g", "p_branch_e", "p_branch_g")


def auto_cutoff(alpha: float, minimum: int = 20, tail: float = 1e-8) -> int:
    n = minimum
    while 1.0 - poisson_weight(alpha ** 2, n) > tail:
        n += 1
    return n


@dataclass(frozen=True)
class RunOptions:
    """Knobs shared by every pipeline.

    ``delay_model`` chooses how the resonator decays during ``delay``:
    ``analytic`` (damped-cat formula, ideal preparation only), ``lindblad``,
    or ``auto`` (analytic when possible).
    """

    params: HardwareParams = field(default_factory=HardwareParams)
    prep: str = "ideal"
    initial_state: object = None
    decoherence: bool = False
    delay: DelaySpec | None = None
    rates: DecoherenceRates | None = None
    readout: str = "coupling"
    n_cutoff: int | None = None
    delay_model: str = "auto"
    qubit_decoherence: bool = False
    retune: bool = True
    dt: float = 0.1

    def __post_init__(self):
        if self.prep not in PREP_MODES:
            raise ValidationError(f"prep must be one of {PREP_MODES}")
        if self.readout not in READOUT_MODELS:
            raise ValidationError(f"readout must be one of {READOUT_MODELS}")
        if self.delay_model not in ("auto", "analytic", "lindblad"):
            raise ValidationError("delay_model must be auto, analytic or lindblad")
        if self.prep == "file" and self.initial_state is None:
            raise ValidationError("prep='file' needs initial_state")

    def effective_rates(self) -> DecoherenceRates:
        if self.rates is not None:
            return self.rates
        if self.delay is not None:
            return DecoherenceRates.resonator_only(self.delay.gamma)
        return DecoherenceRates()

    def metadata(self) -> dict:
        d = {
            "params": self.params.to_dict(),
            "prep": self.prep,
            "decoherence": self.decoherence,
            "delay_ns": None if self.delay is None else self.delay.T,
            "rates": self.effective_rates().to_dict() if self.decoherence else None,
            "readout": self.readout,
            "n_cutoff": self.n_cutoff,
            "delay_model": self.delay_model,
            "qubit_decoherence": self.qubit_decoherence,
            "dt": self.dt,
        }
        return d


# ---------------------------------------------------------------------------
# closed forms

def norm_Nt(spec: CatSpec) -> float:
    return (1.0 - math.exp(-spec.alpha ** 2 / 2) * math.sin(2 * spec.phi) / math.sqrt(2)) ** -0.5


def pe_analytic(spec: CatSpec, theta: float) -> float:
    """``N_t^2 [sin^2(phi)/2 + cos^2(phi) cos^2(theta/2)]``."""
    phi = spec.phi
    return norm_Nt(spec) ** 2 * (0.5 * math.sin(phi) ** 2 + math.cos(phi) ** 2 * math.cos(theta / 2) ** 2)


def pe_entangled_exact(spec: CatSpec, theta: float) -> float:
    """Excited probability of the ideal entangled state, keeping the
    coherent/vacuum cross term that :func:`pe_analytic` drops."""
    phi = spec.phi
    cross = math.sin(2 * phi) * math.exp(-spec.alpha ** 2 / 2) * math.cos(theta / 2) ** 2 / math.sqrt(2)
    return pe_analytic(spec, theta) - norm_Nt(spec) ** 2 * cross


def wave_state(theta: float) -> np.ndarray:
    """Test qubit after R1 (ideal) and R2: ``-i[sin(t/2)e^{it/2}|g> + cos(t/2)e^{-it/2}|e>]``."""
    return -1j * np.array([math.sin(theta / 2) * np.exp(1j * theta / 2), math.cos(theta / 2) * np.exp(-1j * theta / 2)])


def particle_state(theta: float) -> np.ndarray:
    return np.array([1.0, -1j * np.exp(-1j * theta)]) / math.sqrt(2)


def entangled_state(spec: CatSpec, theta: float, layout: SpaceLayout, alpha: float | None = None) -> PureState:
    """``N_t (cos phi |psi_w>|alpha> - sin phi |psi_p>|0>)`` with the ancilla in ``|g'>``."""
    alpha = spec.alpha if alpha is None else alpha
    coh = coherent_amplitudes(alpha, layout.n_cutoff)
    vac = np.zeros(layout.res_dim, dtype=complex)
    vac[0] = 1.0
    joint = math.cos(spec.phi) * np.kron(wave_state(theta), coh) - math.sin(spec.phi) * np.kron(particle_state(theta), vac)
    vec = np.zeros(layout.dim, dtype=complex)
    start = layout.index(0, 0, 0)
    vec[start:start + joint.size] = joint
    return PureState(layout, vec).normalized()


def contrast(values) -> float:
    v = np.asarray(values, dtype=float)
    if v.size == 0 or np.any(np.isnan(v)):
        return float("nan")
    hi, lo = v.max(), v.min()
    return float((hi - lo) / (hi + lo)) if hi + lo > 0 else 0.0


# ---------------------------------------------------------------------------
# pipeline pieces

@dataclass(frozen=True, eq=False)
class Prepared:
    """State right after R1, with the amplitude used to time the couplings."""

    state: object
    alpha_eff: float
    layout: SpaceLayout
    resonator_before_r1: DensityOperator


def _layout_for(spec: CatSpec, options: RunOptions) -> SpaceLayout:
    n = options.n_cutoff or auto_cutoff(spec.alpha)
    if options.prep == "file":
        n = max(n, options.initial_state.layout.n_cutoff)
    return SpaceLayout(n, ("ancilla", "test"))


def _initial_state(spec: CatSpec, options: RunOptions, layout: SpaceLayout):
    if options.prep == "ideal":
        return ideal_cat(spec, layout)
    if options.prep == "synthesized":
        return synthesize_cat(spec, options.params, layout)
    rho = options.initial_state
    if not rho.layout.qubits:
        return product_with_qubits(rho, layout)
    if rho.layout.qubits != layout.qubits:
        raise ValidationError("loaded state must be resonator-only or span (ancilla, test, resonator)")
    return pad_resonator(rho, layout.n_cutoff)


def _qubits_in_ground(state, layout: SpaceLayout, tol=1e-9) -> bool:
    p = projector(layout, "ancilla", 0) @ projector(layout, "test", 0)
    return outcome_probability(state, p) > 1 - tol


def _evolve_coupling(state, qubit: str, t: float, options: RunOptions):
    layout = state.layout
    if options.decoherence and options.qubit_decoherence:
        rho = state.to_density() if isinstance(state, PureState) else state
        h = jc_hamiltonian(options.params, qubit, layout, options.params.detuning(qubit))
        return lindblad_evolve(rho, options.effective_rates(), h, t, options.dt)
    return coupling_propagator(options.params, qubit, t, layout).apply(state)


def _apply_delay(spec: CatSpec, state, options: RunOptions, layout: SpaceLayout):
    delay = options.delay
    rates = options.effective_rates()
    gamma = rates.gamma_res
    model = options.delay_model
    if model == "auto":
        model = "analytic" if options.prep == "ideal" and not options.qubit_decoherence else "lindblad"
    if model == "analytic":
        if options.prep != "ideal":
            raise ValidationError("the analytic delay model assumes an ideal cat; use delay_model='lindblad'")
        rho_res = analytic_decohered_cat(spec, replace(delay, gamma=gamma), gamma, layout.n_cutoff)
        return product_with_qubits(rho_res, layout)
    if _qubits_in_ground(state, layout) and not options.qubit_decoherence:
        rho_res = partial_trace(state, "resonator")
        rho_res = lindblad_evolve(rho_res, DecoherenceRates.resonator_only(gamma), None, delay.T, options.dt)
        return product_with_qubits(rho_res, layout)
    rho = state.to_density() if isinstance(state, PureState) else state
    return lindblad_evolve(rho, rates, None, delay.T, options.dt)


def prepare(spec: CatSpec, options: RunOptions = RunOptions()) -> Prepared:
    """Preparation, optional delay and R1."""
    layout = _layout_for(spec, options)
    state = _initial_state(spec, options, layout)
    alpha_eff = spec.alpha
    if options.decoherence and options.delay is not None and options.delay.T > 0:
        state = _apply_delay(spec, state, options, layout)
        if options.retune:
            alpha_eff = spec.alpha * math.exp(-options.effective_rates().gamma_res * options.delay.T / 2)
    rho_res = partial_trace(state, "resonator")
    state = _evolve_coupling(state, "test", beamsplitter_time(alpha_eff, options.params), options)
    return Prepared(state, alpha_eff, layout, rho_res)


def _branch_projectors(layout: SpaceLayout, readout: str):
    if readout == "coupling":
        return projector(layout, "ancilla", 0), projector(layout, "ancilla", 1)
    vac = np.zeros(layout.res_dim)
    vac[0] = 1.0
    p_vac = layout.embed("resonator", np.diag(vac).astype(complex))
    return p_vac, np.eye(layout.dim) - p_vac


def _joint_probabilities(state, layout: SpaceLayout, readout: str) -> np.ndarray:
    """``joint[test_level, branch]`` with branch 0 = g', 1 = e'."""
    branches = _branch_projectors(layout, "projective" if readout == "none" else readout)
    joint = np.zeros((2, 2))
    for t in (0, 1):
        pt = projector(layout, "test", t)
        for b, pb in enumerate(branches):
            joint[t, b] = outcome_probability(state, pt @ pb)
    return np.clip(joint, 0.0, 1.0)


@dataclass(frozen=True, eq=False)
class RunPoint:
    theta: float
    pe: float
    pe_e: float
    pe_g: float
    p_branch_e: float
    p_branch_g: float
    joint: np.ndarray
    ideal_overlap: float = float("nan")
    state: object = None

    @property
    def ideal_fidelity(self) -> float:
        return self.ideal_overlap ** 2


def _point_from_joint(theta: float, joint: np.ndarray, readout: str, **extra) -> RunPoint:
    pe = float(joint[1].sum())
    if readout == "none":
        nan = float("nan")
        return RunPoint(theta, pe, nan, nan, nan, nan, joint, **extra)
    pb_g, pb_e = float(joint[:, 0].sum()), float(joint[:, 1].sum())
    pe_e = float(joint[1, 1] / pb_e) if pb_e > 1e-12 else float("nan")
    pe_g = float(joint[1, 0] / pb_g) if pb_g > 1e-12 else float("nan")
    return RunPoint(theta, pe, pe_e, pe_g, pb_e, pb_g, joint, **extra)


def _after_r2(prepared: Prepared, theta: float, options: RunOptions):
    return qubit_operator(prepared.layout, "test", ramsey_matrix(theta)).apply(prepared.state)


def _after_readout(state, alpha_eff: float, options: RunOptions):
    if options.readout != "coupling":
        return state
    return _evolve_coupling(state, "ancilla", readout_time(alpha_eff, options.params), options)


def _overlap_with(state, target: PureState) -> float:
    if isinstance(state, PureState):
        return abs(np.vdot(target.amplitudes, state.amplitudes))
    v = target.amplitudes
    return math.sqrt(max(np.real(np.vdot(v, state.matrix @ v)), 0.0))


def delayed_choice_run(spec: CatSpec, theta: float, options: RunOptions = RunOptions(),
                       prepared: Prepared | None = None) -> RunPoint:
    """One protocol point. ``ideal_overlap`` is ``|<psi_ideal|psi>|`` before readout."""
    prepared = prepared or prepare(spec, options)
    after_r2 = _after_r2(prepared, theta, options)
    target = entangled_state(spec, theta, prepared.layout, prepared.alpha_eff)
    ov = _overlap_with(after_r2, target)
    final = _after_readout(after_r2, prepared.alpha_eff, options)
    joint = _joint_probabilities(final, prepared.layout, options.readout)
    return _point_from_joint(theta, joint, options.readout, ideal_overlap=ov, state=after_r2)


@dataclass(frozen=True, eq=False)
class ExperimentRecord:
    theta_axis: np.ndarray
    pe: np.ndarray
    pe_given_ancilla_e: np.ndarray
    pe_given_ancilla_g: np.ndarray
    p_branch_e: np.ndarray
    p_branch_g: np.ndarray
    contrast_wave: float
    contrast_particle: float
    contrast_pe: float
    norm_Nt: float
    ideal_overlap: np.ndarray
    metadata: dict = field(default_factory=dict)
    points: tuple = ()

    @property
    def ancilla_branch_probs(self) -> np.ndarray:
        """``(n_theta, 2)`` array of ``(p(g'), p(e'))``."""
        return np.column_stack([self.p_branch_g, self.p_branch_e])

    def rows(self):
        for k in range(self.theta_axis.size):
            yield (
                self.theta_axis[k], self.pe[k], self.pe_given_ancilla_e[k], self.pe_given_ancilla_g[k],
                self.p_branch_e[k], self.p_branch_g[k],
            )

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for row in self.rows():
            w.writerow([_fmt(x) for x in row])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "columns": list(CSV_COLUMNS),
            "rows": [[_num(x) for x in row] for row in self.rows()],
            "contrast_wave": _num(self.contrast_wave),
            "contrast_particle": _num(self.contrast_particle),
            "contrast_pe": _num(self.contrast_pe),
            "norm_Nt": _num(self.norm_Nt),
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _num(x: float):
    x = float(x)
    if math.isnan(x):
        return None
    return float(f"{x:.9g}")


def theta_grid(resolution: int) -> np.ndarray:
    return 2 * math.pi * np.arange(resolution) / resolution


def fringe_scan(spec: CatSpec, theta_resolution: int = 64, options: RunOptions = RunOptions()) -> ExperimentRecord:
    """Sweep theta over ``[0, 2 pi)`` at fixed phi."""
    if theta_resolution < 8:
        raise ValidationError("theta_resolution must be >= 8")
    thetas = theta_grid(theta_resolution)
    prepared = prepare(spec, options)
    shared = options.readout != "coupling" or not (options.decoherence and options.qubit_decoherence)
    if shared:
        # readout acts on ancilla+resonator and commutes with R2 on the test qubit
        base = _after_readout(prepared.state, prepared.alpha_eff, options)
        base_prepared = replace(prepared, state=base)
    points = []
    for th in thetas:
        if shared:
            final = _after_r2(base_prepared, th, options)
            joint = _joint_probabilities(final, prepared.layout, options.readout)
            points.append(_point_from_joint(float(th), joint, options.readout))
        else:
            points.append(delayed_choice_run(spec, float(th), options, prepared))
    return _record(spec, thetas, points, options)


def _record(spec: CatSpec, thetas, points, options: RunOptions) -> ExperimentRecord:
    arr = lambda name: np.array([getattr(p, name) for p in points], dtype=float)
    pe_e, pe_g = arr("pe_e"), arr("pe_g")
    meta = {"cat": spec.to_dict(), "theta_resolution": len(thetas), **options.metadata()}
    return ExperimentRecord(
        theta_axis=np.asarray(thetas, dtype=float),
        pe=arr("pe"),
        pe_given_ancilla_e=pe_e,
        pe_given_ancilla_g=pe_g,
        p_branch_e=arr("p_branch_e"),
        p_branch_g=arr("p_branch_g"),
        contrast_wave=contrast(pe_e),
        contrast_particle=contrast(pe_g),
        contrast_pe=contrast(arr("pe")),
        norm_Nt=norm_Nt(spec),
        ideal_overlap=arr("ideal_overlap"),
        metadata=meta,
        points=tuple(points),
    )


def fringe_surface(alpha: float, phis, theta_resolution: int = 64, options: RunOptions = RunOptions()):
    """One record per mixing angle: the wave-to-particle morphing surface."""
    return [fringe_scan(CatSpec(float(phi), alpha), theta_resolution, options) for phi in phis]


def conditional_fringe_scan(spec: CatSpec, theta_resolution: int = 64, options: RunOptions = RunOptions()) -> ExperimentRecord:
    if options.readout == "none":
        raise ValidationError("conditional fringes need an ancilla readout model")
    return fringe_scan(spec, theta_resolution, options)


# ---------------------------------------------------------------------------
# Wigner functions of the beam splitter

def conditioned_resonator_state(spec: CatSpec, theta: float = math.pi / 2, condition: str = "none",
                                options: RunOptions = RunOptions()):
    """Resonator state after R2; ``condition`` is ``none``, ``test_g`` or ``test_e``.

    Returns ``(rho_resonator, branch_probability)``.
    """
    prepared = prepare(spec, options)
    state = _after_r2(prepared, theta, options)
    if condition == "none":
        return partial_trace(state, "resonator").normalized(), 1.0
    if condition not in ("test_g", "test_e"):
        raise ValidationError(f"unknown condition {condition!r}")
    proj = projector(prepared.layout, "test", 1 if condition == "test_e" else 0)
    p = outcome_probability(state, proj)
    if p < 1e-12:
        raise ImpossibleBranchError(f"test qubit outcome {condition} has probability {p:.2e}")
    if isinstance(state, PureState):
        cond = PureState(prepared.layout, proj @ state.amplitudes)
    else:
        cond = DensityOperator(prepared.layout, proj @ state.matrix @ proj, validate=False)
    rho = partial_trace(cond, "resonator")
    return DensityOperator(rho.layout, rho.matrix / rho.trace), p


def conditioned_wigner(spec: CatSpec, theta: float = math.pi / 2, condition: str = "none",
                       options: RunOptions = RunOptions(), bounds=DEFAULT_BOUNDS,
                       resolution=DEFAULT_RESOLUTION) -> WignerGrid:
    rho, p = conditioned_resonator_state(spec, theta, condition, options)
    grid = wigner_grid(rho, bounds, resolution)
    meta = {"cat": spec.to_dict(), "theta": theta, "condition": condition, "branch_probability": p,
            **options.metadata()}
    return WignerGrid(grid.re_axis, grid.im_axis, grid.values, meta)


# ---------------------------------------------------------------------------
# quantum-to-classical transition

@dataclass(frozen=True)
class DecayPoint:
    T: float
    gamma_T: float
    alpha_prime: float
    contrast_pe: float
    contrast_wave: float
    contrast_particle: float
    min_w: float
    chi_min: complex
    coherence: float
    coherence_ratio: float

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in self.__dataclass_fields__}
        d["chi_min"] = [self.chi_min.real, self.chi_min.imag]
        return d


def quantum_to_classical_scan(spec: CatSpec, delays, options: RunOptions | None = None,
                              theta_resolution: int = 64, bounds=DEFAULT_BOUNDS,
                              resolution=DEFAULT_RESOLUTION, refine: bool = True) -> list[DecayPoint]:
    """Fringe contrasts, unread-case Wigner minimum and cross-term coherence versus delay.

    ``delays`` holds DelaySpec objects or delay times in ns. Only the
    resonator decays during the delay; coupling times are retuned to the
    decayed amplitude.
    """
    options = options or RunOptions(decoherence=True, rates=DecoherenceRates.resonator_only())
    gamma = options.effective_rates().gamma_res
    out = []
    reference = None
    for d in delays:
        T = d.T if isinstance(d, DelaySpec) else float(d)
        delay = DelaySpec(T, spec.alpha, gamma)
        opts = replace(options, decoherence=True, delay=delay)
        record = fringe_scan(spec, theta_resolution, opts)
        prepared = prepare(spec, opts)
        coh = coherence_sum(prepared.resonator_before_r1, alpha_prime=prepared.alpha_eff if opts.retune else delay.alpha_prime)
        if reference is None:
            ref_opts = replace(options, decoherence=False, delay=None)
            reference = coherence_sum(prepare(spec, ref_opts).resonator_before_r1, alpha_prime=spec.alpha)
        state = _after_r2(prepared, math.pi / 2, opts)
        rho = partial_trace(state, "resonator").normalized()
        grid = wigner_grid(rho, bounds, resolution)
        chi, w = wigner_min(grid, refine, rho)
        out.append(DecayPoint(T, gamma * T, delay.alpha_prime, record.contrast_pe, record.contrast_wave,
                              record.contrast_particle, w, chi, coh, coh / reference if reference else float("nan")))
    return out


# ---------------------------------------------------------------------------
# finite statistics

SHOT_BINS = (("g", "g'"), ("g", "e'"), ("e", "g'"), ("e", "e'"))


@dataclass(frozen=True)
class ShotSample:
    counts: tuple[int, ...]
    shots: int
    seed: int
    bins: tuple = SHOT_BINS

    def as_dict(self) -> dict:
        return {f"{t},{b}": c for (t, b), c in zip(self.bins, self.counts)}


def sample_shots(point, shots: int, seed: int) -> ShotSample:
    """Multinomial draw over the joint (test, ancilla) outcomes of ``point``.

    ``point`` is a RunPoint or a sequence of four probabilities ordered as
    ``SHOT_BINS``.
    """
    if shots <= 0:
        raise ValidationError("shots must be positive")
    if isinstance(point, RunPoint):
        probs = np.array([point.joint[0, 0], point.joint[0, 1], point.joint[1, 0], point.joint[1, 1]])
    else:
        probs = np.asarray(point, dtype=float)
    if probs.size != 4 or np.any(probs < -1e-12) or abs(probs.sum() - 1) > 1e-9:
        raise ValidationError("joint probabilities must be four non-negative numbers summing to 1")
    probs = np.clip(probs, 0.0, None)
    probs = probs / probs.sum()
    counts = np.random.default_rng(seed).multinomial(shots, probs)
    return ShotSample(tuple(int(c) for c in counts), int(shots), int(seed))
