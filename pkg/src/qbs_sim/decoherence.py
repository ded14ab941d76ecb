"""Open-system evolution and the damped cat state.

Rates are in 1/ns. The master equation uses the jump operators
``sqrt(gamma) a``, ``sqrt(gamma1) sigma^-`` and ``sqrt(gamma_phi / 2) sigma_z``
per qubit, integrated with fixed-step RK4.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NumericalInvariantError, ValidationError
from .hilbert import (
    SIGMA_MINUS,
    SIGMA_Z,
    DensityOperator,
    LinearOperator,
    SpaceLayout,
    annihilation,
    coherent_amplitudes,
)

DEFAULT_DT = 0.1

RESONATOR_T1_NS = 3000.0
TEST_T1_NS = 520.0
ANCILLA_T1_NS = 560.0
RAMSEY_T2_NS = 150.0


def dephasing_rate(t1: float, t2: float) -> float:
    """Pure dephasing ``1/T2 - 1/(2 T1)``, clipped at zero."""
    return max(1.0 / t2 - 1.0 / (2.0 * t1), 0.0)


@dataclass(frozen=True)
class DecoherenceRates:
    gamma_res: float = 1.0 / RESONATOR_T1_NS
    gamma1_test: float = 1.0 / TEST_T1_NS
    gamma1_anc: float = 1.0 / ANCILLA_T1_NS
    gamma_phi_test: float = dephasing_rate(TEST_T1_NS, RAMSEY_T2_NS)
    gamma_phi_anc: float = dephasing_rate(ANCILLA_T1_NS, RAMSEY_T2_NS)

    def __post_init__(self):
        for name, val in self.to_dict().items():
            if not val >= 0:
                raise ValidationError(f"{name} must be non-negative, got {val}")

    @classmethod
    def resonator_only(cls, gamma: float = 1.0 / RESONATOR_T1_NS) -> "DecoherenceRates":
        return cls(gamma, 0.0, 0.0, 0.0, 0.0)

    @classmethod
    def none(cls) -> "DecoherenceRates":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0)

    def to_dict(self) -> dict:
        return {
            "gamma_res": self.gamma_res,
            "gamma1_test": self.gamma1_test,
            "gamma1_anc": self.gamma1_anc,
            "gamma_phi_test": self.gamma_phi_test,
            "gamma_phi_anc": self.gamma_phi_anc,
        }


@dataclass(frozen=True)
class DelaySpec:
    """Idle time ``T`` (ns) between cat preparation and the first coupling."""

    T: float
    alpha: float = 2.0
    gamma: float = 1.0 / RESONATOR_T1_NS

    def __post_init__(self):
        if self.T < 0:
            raise ValidationError("delay must be non-negative")

    @property
    def alpha_prime(self) -> float:
        return self.alpha * math.exp(-self.gamma * self.T / 2)

    @property
    def gamma_T(self) -> float:
        return self.gamma * self.T


def collapse_operators(layout: SpaceLayout, rates: DecoherenceRates) -> list[np.ndarray]:
    ops = []
    if layout.resonator and rates.gamma_res:
        ops.append(math.sqrt(rates.gamma_res) * layout.embed("resonator", annihilation(layout.n_cutoff)))
    per_qubit = {
        "test": (rates.gamma1_test, rates.gamma_phi_test),
        "ancilla": (rates.gamma1_anc, rates.gamma_phi_anc),
    }
    for q in layout.qubits:
        g1, gphi = per_qubit[q]
        if g1:
            ops.append(math.sqrt(g1) * layout.embed(q, SIGMA_MINUS))
        if gphi:
            ops.append(math.sqrt(gphi / 2) * layout.embed(q, SIGMA_Z))
    return ops


def lindblad_evolve(
    rho: DensityOperator,
    rates: DecoherenceRates,
    hamiltonian: LinearOperator | None,
    t: float,
    dt: float = DEFAULT_DT,
) -> DensityOperator:
    """Integrate the master equation for a time ``t`` with RK4.

    The step is ``t / ceil(t / dt)`` so the run ends exactly at ``t``. Raises
    NumericalInvariantError on trace drift above 1e-9 or an eigenvalue below
    -1e-6 (a smaller ``dt`` is then required).
    """
    if not dt > 0:
        raise ValidationError("dt must be positive")
    if t < 0:
        raise ValidationError("evolution time must be non-negative")
    layout = rho.layout
    r = np.array(rho.matrix, dtype=complex)
    tr0 = np.trace(r).real
    if t == 0:
        return DensityOperator(layout, r, validate=False)

    ls = collapse_operators(layout, rates)
    h = np.zeros((layout.dim, layout.dim), dtype=complex)
    if hamiltonian is not None:
        if hamiltonian.layout != layout:
            raise ValidationError("Hamiltonian layout does not match the state")
        h = np.array(hamiltonian.matrix)
    h_eff = h - 0.5j * sum((l.conj().T @ l for l in ls), np.zeros_like(h))
    k_eff = -1j * h_eff
    ls_dag = [l.conj().T for l in ls]

    def deriv(x):
        out = k_eff @ x
        out = out + out.conj().T
        for l, ld in zip(ls, ls_dag):
            out += l @ x @ ld
        return out

    steps = max(1, math.ceil(t / dt - 1e-12))
    step = t / steps
    for _ in range(steps):
        k1 = deriv(r)
        k2 = deriv(r + 0.5 * step * k1)
        k3 = deriv(r + 0.5 * step * k2)
        k4 = deriv(r + step * k3)
        r = r + (step / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)

    drift = abs(np.trace(r).real - tr0)
    if drift > 1e-9:
        raise NumericalInvariantError(f"trace drifted by {drift:.2e}")
    r = (r + r.conj().T) / 2
    lam = np.linalg.eigvalsh(r).min()
    if lam < -1e-6:
        raise NumericalInvariantError(f"positivity lost (eigenvalue {lam:.2e}); reduce dt below {dt}")
    return DensityOperator(layout, r, validate=False)


def _cat_parts(alpha: float, n_cutoff: int):
    vac = np.zeros(n_cutoff + 1, dtype=complex)
    vac[0] = 1.0
    return coherent_amplitudes(alpha, n_cutoff), vac


def cross_term_factor(alpha: float, gamma_T: float, exponent: str = "standard") -> float:
    """Decay of the coherent/vacuum cross term after a delay.

    ``standard``: ``exp(-|alpha|^2 (1 - e^{-gamma T}) / 2)``.
    ``printed``: the same with ``alpha`` replaced by the decayed amplitude.
    """
    loss = 1.0 - math.exp(-gamma_T)
    if exponent == "standard":
        return math.exp(-(alpha ** 2) * loss / 2)
    if exponent == "printed":
        a_p = alpha * math.exp(-gamma_T / 2)
        return math.exp(-(a_p ** 2) * loss / 2)
    raise ValidationError(f"unknown exponent variant {exponent!r}")


def analytic_decohered_cat(spec, delay: DelaySpec, gamma: float | None = None, n_cutoff: int = 20,
                           exponent: str = "standard") -> DensityOperator:
    """Resonator state of an ideal cat after photon loss for ``delay.T``.

    ``N^2 [cos^2 phi |a'><a'| + sin^2 phi |0><0|
    - 1/2 f sin 2phi (|a'><0| + |0><a'|)]`` with ``a' = alpha e^{-gamma T/2}``
    and ``f`` from :func:`cross_term_factor`.
    """
    gamma = delay.gamma if gamma is None else gamma
    g_t = gamma * delay.T
    alpha, phi = spec.alpha, spec.phi
    a_p = alpha * math.exp(-g_t / 2)
    coh, vac = _cat_parts(a_p, n_cutoff)
    f = cross_term_factor(alpha, g_t, exponent)
    cross = np.outer(coh, vac.conj())
    rho = spec.norm_N ** 2 * (
        math.cos(phi) ** 2 * np.outer(coh, coh.conj())
        + math.sin(phi) ** 2 * np.outer(vac, vac)
        - 0.5 * f * math.sin(2 * phi) * (cross + cross.conj().T)
    )
    layout = SpaceLayout.resonator_only(n_cutoff)
    return DensityOperator(layout, rho, validate=(exponent == "standard"))


def cat_components(rho: DensityOperator, alpha_prime: float) -> dict:
    """Least-squares decomposition of a resonator state on
    ``{|a'><a'|, |0><0|, |a'><0|, |0><a'|}``.
    """
    if rho.layout.qubits:
        raise ValidationError("coherence analysis needs a resonator-only state")
    n_cut = rho.layout.n_cutoff
    coh, vac = _cat_parts(alpha_prime, n_cut)
    basis = [
        np.outer(coh, coh.conj()),
        np.outer(vac, vac.conj()),
        np.outer(coh, vac.conj()),
        np.outer(vac, coh.conj()),
    ]
    gram = np.array([[np.vdot(b1, b2) for b2 in basis] for b1 in basis])
    rhs = np.array([np.vdot(b, rho.matrix) for b in basis])
    coeffs = np.linalg.solve(gram, rhs)
    residual = rho.matrix - sum(c * b for c, b in zip(coeffs, basis))
    return {
        "coherent": coeffs[0],
        "vacuum": coeffs[1],
        "cross": coeffs[2:],
        "cross_matrix": coeffs[2] * basis[2] + coeffs[3] * basis[3],
        "residual": float(np.max(np.abs(residual))),
    }


def coherence_sum(rho: DensityOperator, spec=None, delay: DelaySpec | None = None,
                  alpha_prime: float | None = None) -> float:
    """Sum of |off-diagonal| Fock elements of the coherent/vacuum cross term."""
    if alpha_prime is None:
        if delay is not None:
            alpha_prime = delay.alpha_prime
        elif spec is not None:
            alpha_prime = spec.alpha
        else:
            raise ValidationError("need alpha_prime, a delay or a cat spec")
    cross = cat_components(rho, alpha_prime)["cross_matrix"]
    off = cross - np.diag(np.diag(cross))
    return float(np.sum(np.abs(off)))


def decay_resonator(rho: DensityOperator, gamma: float, T: float, dt: float = DEFAULT_DT) -> DensityOperator:
    """Photon loss only, no Hamiltonian."""
    return lindblad_evolve(rho, DecoherenceRates.resonator_only(gamma), None, T, dt)
