"""Wigner functions via displaced parity, and the ancilla-Rabi tomography chain.

``W(chi) = (2/pi) Tr[P D(-chi) rho D(chi)]`` with ``P = exp(i pi a^dag a)``.
The displaced populations ``p_n = <n|D(-chi) rho D(chi)|n>`` are built from
exact displacement matrix elements, padding the photon axis until the lost
weight is below 1e-12, so the result does not depend on the state's cutoff.
"""
from __future__ import annotations

import csv
import io
import json
import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .dynamics import HardwareParams
from .errors import IllConditionedError, NumericalInvariantError, TruncationWarning, ValidationError
from .hilbert import PureState, displacement_columns, parity_mask

W_BOUND = 2 / math.pi
DEFAULT_BOUNDS = ((-1.5, 3.5), (-1.5, 1.5))
DEFAULT_RESOLUTION = (101, 61)
PHASE_BOUND = 3.5


def _resonator_matrix(rho) -> np.ndarray:
    if isinstance(rho, PureState):
        rho = rho.to_density()
    if rho.layout.qubits or not rho.layout.resonator:
        raise ValidationError("Wigner functions need a resonator-only state; trace out the qubits first")
    return rho.matrix


def displaced_populations(rho, chi: complex, max_extra: int = 400) -> np.ndarray:
    """Diagonal of ``D(-chi) rho D(chi)`` on as many Fock levels as needed."""
    m = _resonator_matrix(rho)
    d = m.shape[0]
    r = abs(chi)
    n_rows = d + int(math.ceil(r * r + 12 * r + 30))
    tr = float(np.real(np.trace(m)))
    while True:
        cols = displacement_columns(-chi, d, n_rows)
        pops = np.real(np.einsum("ij,jk,ik->i", cols, m, cols.conj()))
        lost = tr - pops.sum()
        if abs(lost) < 1e-12 or n_rows >= d + max_extra:
            break
        n_rows += 40
    if abs(lost) > 1e-6:
        warnings.warn(f"displaced state at chi={chi:.4g} loses {lost:.2e} of its weight", TruncationWarning)
    return pops


def wigner_point(rho, chi: complex) -> float:
    pops = displaced_populations(rho, chi)
    return float(W_BOUND * np.dot(parity_mask(pops.size - 1), pops))


@dataclass(frozen=True, eq=False)
class WignerGrid:
    """``values[i, j]`` is W at ``re_axis[j] + 1j * im_axis[i]``."""

    re_axis: np.ndarray
    im_axis: np.ndarray
    values: np.ndarray
    metadata: dict = field(default_factory=dict)

    @property
    def spacing(self) -> tuple[float, float]:
        dre = float(self.re_axis[1] - self.re_axis[0]) if self.re_axis.size > 1 else 0.0
        dim = float(self.im_axis[1] - self.im_axis[0]) if self.im_axis.size > 1 else 0.0
        return dre, dim

    def integral(self) -> float:
        dre, dim = self.spacing
        return float(self.values.sum() * dre * dim)

    def chi(self, i: int, j: int) -> complex:
        return complex(self.re_axis[j], self.im_axis[i])

    def to_rows(self):
        for i, im in enumerate(self.im_axis):
            for j, re in enumerate(self.re_axis):
                yield float(re), float(im), float(self.values[i, j])

    def to_csv(self) -> str:
        buf = io.StringIO(newline="")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["re", "im", "w"])
        for re, im, val in self.to_rows():
            w.writerow([f"{re:.9g}", f"{im:.9g}", f"{val:.9g}"])
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "re": [float(f"{x:.9g}") for x in self.re_axis],
            "im": [float(f"{x:.9g}") for x in self.im_axis],
            "w": [[float(f"{v:.9g}") for v in row] for row in self.values],
            "metadata": self.metadata,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"


def thread_count() -> int:
    raw = os.environ.get("QBS_SIM_THREADS", "1").strip() or "1"
    try:
        n = int(raw)
    except ValueError:
        raise ValidationError(f"QBS_SIM_THREADS must be an integer, got {raw!r}") from None
    if n < 0:
        raise ValidationError("QBS_SIM_THREADS must be >= 0")
    return n if n else (os.cpu_count() or 1)


def wigner_grid(rho, bounds=DEFAULT_BOUNDS, resolution=DEFAULT_RESOLUTION, threads: int | None = None) -> WignerGrid:
    """Sample W on a rectangular lattice ``bounds = ((re0, re1), (im0, im1))``."""
    if isinstance(resolution, int):
        resolution = (resolution, resolution)
    n_re, n_im = resolution
    if n_re < 2 or n_im < 2:
        raise ValidationError("grid resolution must be at least 2 per axis")
    (re0, re1), (im0, im1) = bounds
    re_axis = np.linspace(re0, re1, n_re)
    im_axis = np.linspace(im0, im1, n_im)
    _resonator_matrix(rho)
    values = np.empty((n_im, n_re))

    def row(i):
        values[i] = [wigner_point(rho, complex(x, im_axis[i])) for x in re_axis]

    threads = thread_count() if threads is None else threads
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(row, range(n_im)))
    else:
        for i in range(n_im):
            row(i)
    return WignerGrid(re_axis, im_axis, values)


def wigner_min(grid: WignerGrid, refine: bool = False, rho=None, tol: float = 1e-4):
    """Smallest sampled value, optionally polished by coordinate descent.

    Refinement needs ``rho``; the search stays inside the grid bounds.
    Returns ``(chi, w)``.
    """
    if grid.values.size == 0:
        raise ValidationError("empty grid")
    flat = int(np.argmin(grid.values))
    i, j = np.unravel_index(flat, grid.values.shape)
    chi, w = grid.chi(i, j), float(grid.values[i, j])
    if not refine:
        return chi, w
    if rho is None:
        raise ValidationError("refinement needs the state")
    lo = complex(grid.re_axis[0], grid.im_axis[0])
    hi = complex(grid.re_axis[-1], grid.im_axis[-1])
    dre, dim = grid.spacing
    step = 0.5 * max(dre, dim)
    while step >= tol:
        moved = False
        for d in (step, -step, 1j * step, -1j * step):
            cand = chi + d
            if not (lo.real <= cand.real <= hi.real and lo.imag <= cand.imag <= hi.imag):
                continue
            wc = wigner_point(rho, cand)
            if wc < w:
                chi, w, moved = cand, wc, True
                break
        if not moved:
            step /= 2
    return chi, w


# ---------------------------------------------------------------------------
# tomography

@dataclass(frozen=True, eq=False)
class RabiSignal:
    tau_axis: np.ndarray
    pe_values: np.ndarray


def default_tau_axis(params: HardwareParams, n_max: int = 40) -> np.ndarray:
    """Time samples resolving sqrt(n) frequencies up to ``n_max``."""
    w_max = 2 * math.sqrt(n_max) * params.omega_ancilla
    dt = 0.4 * math.pi / w_max
    gap = params.omega_ancilla * (math.sqrt(n_max) - math.sqrt(n_max - 1))
    t_end = 16 * math.pi / gap
    return np.arange(0.0, t_end, dt)


def rabi_tomography_signal(rho, chi: complex, params: HardwareParams, tau_axis) -> RabiSignal:
    """Ancilla excitation ``sum_n p_n sin^2(sqrt(n) Omega' tau)`` after ``D(-chi)``."""
    pops = displaced_populations(rho, chi)
    tau = np.asarray(tau_axis, dtype=float)
    if np.any(tau < 0):
        raise ValidationError("tau values must be non-negative")
    n = np.arange(pops.size)
    basis = np.sin(np.sqrt(n)[None, :] * params.omega_ancilla * tau[:, None]) ** 2
    pe = np.clip(basis @ pops, 0.0, 1.0)
    return RabiSignal(tau, pe)


def rabi_design_matrix(tau_axis, params: HardwareParams, n_max: int) -> np.ndarray:
    n = np.arange(1, n_max + 1)
    return np.sin(np.sqrt(n)[None, :] * params.omega_ancilla * np.asarray(tau_axis)[:, None]) ** 2


def _project_simplex(v: np.ndarray) -> np.ndarray:
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    k = np.arange(1, v.size + 1)
    rho = np.nonzero(u - css / k > 0)[0][-1]
    return np.maximum(v - css[rho] / (rho + 1), 0.0)


def populations_from_rabi(signal: RabiSignal, params: HardwareParams, n_max: int,
                          max_condition: float = 1e6) -> np.ndarray:
    """Non-negative least-squares inversion of a Rabi signal into ``p_0..p_n_max``."""
    if n_max < 1:
        raise ValidationError("n_max must be >= 1")
    a = rabi_design_matrix(signal.tau_axis, params, n_max)
    cond = np.linalg.cond(a)
    if not cond < max_condition:
        raise IllConditionedError(f"Rabi design matrix condition number {cond:.3e} >= {max_condition:.0e}")
    p_rest, _ = nnls(a, np.asarray(signal.pe_values, dtype=float), maxiter=50 * n_max)
    pops = np.concatenate([[1.0 - p_rest.sum()], p_rest])
    if pops[0] < 0:
        pops = _project_simplex(pops)
    return pops


def wigner_from_populations(populations) -> float:
    p = np.asarray(populations, dtype=float)
    total = p.sum()
    if abs(total - 1) > 1e-6:
        raise NumericalInvariantError(f"populations sum to {total:.9f}, not 1")
    return float(W_BOUND * np.dot(parity_mask(p.size - 1), p))


def tomography_wigner(rho, chi: complex, params: HardwareParams, n_max: int | None = None,
                      tau_axis=None, noise: float = 0.0, seed: int | None = None) -> float:
    """W(chi) through the simulated measurement chain (signal, noise, inversion)."""
    if n_max is None:
        pops = displaced_populations(rho, chi)
        above = np.nonzero(pops > 1e-10)[0]
        n_max = max(int(above[-1]) + 2 if above.size else 1, 2)
    if tau_axis is None:
        tau_axis = default_tau_axis(params, n_max)
    signal = rabi_tomography_signal(rho, chi, params, tau_axis)
    if noise:
        if seed is None:
            raise ValidationError("noisy tomography requires an explicit seed")
        rng = np.random.default_rng(seed)
        signal = RabiSignal(signal.tau_axis, signal.pe_values + rng.normal(0.0, noise, signal.pe_values.size))
    pops = populations_from_rabi(signal, params, n_max)
    return wigner_from_populations(pops)
