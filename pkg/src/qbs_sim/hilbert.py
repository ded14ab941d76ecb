"""Truncated Fock-space linear algebra.

The joint space is ``ancilla (x) test (x) resonator`` with row-major indexing::

    index = ((ancilla_level * 2) + test_level) * (n_cutoff + 1) + n

Qubit level 0 is the ground state ``|g>`` and 1 the excited state ``|e>``.
Layouts may drop either qubit or the resonator; the remaining factors keep the
same relative order.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, InitVar
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.linalg import expm
from scipy.stats import poisson

from .errors import (
    CutoffExceededError,
    LayoutMismatchError,
    NumericalInvariantError,
    TruncationError,
    TruncationWarning,
    ValidationError,
)

QUBIT_ORDER = ("ancilla", "test")
RESONATOR = "resonator"
TRUNCATION_TOL = 1e-6

SIGMA_MINUS = np.array([[0, 1], [0, 0]], dtype=complex)  # |g><e|
SIGMA_PLUS = SIGMA_MINUS.T.copy()
SIGMA_Z = np.diag([-1.0, 1.0]).astype(complex)  # +1 on |e>
PROJ_G = np.diag([1.0, 0.0]).astype(complex)
PROJ_E = np.diag([0.0, 1.0]).astype(complex)


@dataclass(frozen=True)
class SpaceLayout:
    """Tensor structure of the simulated Hilbert space."""

    n_cutoff: int = 20
    qubits: tuple[str, ...] = QUBIT_ORDER
    resonator: bool = True

    def __post_init__(self):
        qubits = tuple(self.qubits)
        object.__setattr__(self, "qubits", qubits)
        for q in qubits:
            if q not in QUBIT_ORDER:
                raise ValidationError(f"unknown qubit label {q!r}")
        if list(qubits) != [q for q in QUBIT_ORDER if q in qubits]:
            raise ValidationError(f"qubits must follow the order {QUBIT_ORDER}, got {qubits}")
        if self.resonator and int(self.n_cutoff) < 1:
            raise ValidationError("n_cutoff must be >= 1")
        if not self.resonator and not qubits:
            raise ValidationError("layout has no subsystems")

    @classmethod
    def resonator_only(cls, n_cutoff: int) -> "SpaceLayout":
        return cls(n_cutoff, ())

    @property
    def res_dim(self) -> int:
        return self.n_cutoff + 1 if self.resonator else 1

    @property
    def labels(self) -> tuple[str, ...]:
        return self.qubits + ((RESONATOR,) if self.resonator else ())

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(2 for _ in self.qubits) + ((self.res_dim,) if self.resonator else ())

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims))

    def axis(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ValidationError(f"subsystem {label!r} not in layout {self.labels}") from None

    def index(self, ancilla: int = 0, test: int = 0, n: int = 0) -> int:
        levels = {"ancilla": ancilla, "test": test}
        idx = 0
        for q in QUBIT_ORDER:
            lvl = levels[q]
            if lvl not in (0, 1):
                raise ValidationError(f"{q} level must be 0 or 1, got {lvl}")
            if q in self.qubits:
                idx = idx * 2 + lvl
            elif lvl:
                raise ValidationError(f"layout has no {q} qubit")
        if self.resonator:
            if not 0 <= n <= self.n_cutoff:
                raise CutoffExceededError(f"photon number {n} outside [0, {self.n_cutoff}]")
            idx = idx * self.res_dim + n
        elif n:
            raise ValidationError("layout has no resonator")
        return idx

    def with_cutoff(self, n_cutoff: int) -> "SpaceLayout":
        return SpaceLayout(n_cutoff, self.qubits, self.resonator)

    def keep(self, labels: Iterable[str]) -> "SpaceLayout":
        labels = set(labels)
        for lab in labels:
            self.axis(lab)
        qubits = tuple(q for q in self.qubits if q in labels)
        return SpaceLayout(self.n_cutoff, qubits, RESONATOR in labels and self.resonator)

    def embed(self, label: str, op: np.ndarray) -> np.ndarray:
        """Lift a single-factor operator to the full space."""
        ax = self.axis(label)
        mats = [np.eye(d, dtype=complex) for d in self.dims]
        op = np.asarray(op, dtype=complex)
        if op.shape != (self.dims[ax],) * 2:
            raise LayoutMismatchError(f"operator shape {op.shape} does not fit {label}")
        mats[ax] = op
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        return out

    def to_dict(self) -> dict:
        return {"n_cutoff": self.n_cutoff, "qubits": list(self.qubits), "resonator": self.resonator}

    @classmethod
    def from_dict(cls, d: dict) -> "SpaceLayout":
        return cls(int(d["n_cutoff"]), tuple(d.get("qubits", QUBIT_ORDER)), bool(d.get("resonator", True)))


def _check_layout(a: SpaceLayout, b: SpaceLayout):
    if a != b:
        raise LayoutMismatchError(f"layout mismatch: {a} vs {b}")


@dataclass(frozen=True, eq=False)
class PureState:
    layout: SpaceLayout
    amplitudes: np.ndarray

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex).reshape(-1)
        if amps.shape != (self.layout.dim,):
            raise LayoutMismatchError(f"amplitude length {amps.size} != layout dim {self.layout.dim}")
        amps.flags.writeable = False
        object.__setattr__(self, "amplitudes", amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalized(self) -> "PureState":
        nrm = self.norm
        if nrm == 0:
            raise NumericalInvariantError("cannot normalize the zero vector")
        return PureState(self.layout, self.amplitudes / nrm)

    def tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)

    def to_density(self) -> "DensityOperator":
        psi = self.amplitudes
        return DensityOperator(self.layout, np.outer(psi, psi.conj()), validate=False)


@dataclass(frozen=True, eq=False)
class DensityOperator:
    """Hermitian, unit-trace, positive semidefinite matrix on a layout.

    Pass ``validate=False`` for intermediate, possibly unnormalized, results.
    """

    layout: SpaceLayout
    matrix: np.ndarray
    validate: InitVar[bool] = True

    def __post_init__(self, validate):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.layout.dim
        if mat.shape != (d, d):
            raise LayoutMismatchError(f"matrix shape {mat.shape} != ({d}, {d})")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)
        if validate:
            check_density_matrix(mat)

    @property
    def trace(self) -> float:
        return float(np.real(np.trace(self.matrix)))

    def normalized(self) -> "DensityOperator":
        tr = self.trace
        if tr <= 0:
            raise NumericalInvariantError("cannot normalize a zero-trace operator")
        return DensityOperator(self.layout, self.matrix / tr)

    def tensor(self) -> np.ndarray:
        return self.matrix.reshape(self.layout.dims * 2)

    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix.T, self.matrix)))


def check_density_matrix(mat: np.ndarray, herm_tol=1e-10, trace_tol=1e-9, eig_tol=1e-8):
    herm = np.max(np.abs(mat - mat.conj().T)) if mat.size else 0.0
    if herm > herm_tol:
        raise NumericalInvariantError(f"density matrix not Hermitian (deviation {herm:.2e})")
    tr = np.trace(mat).real
    if abs(tr - 1) > trace_tol:
        raise NumericalInvariantError(f"density matrix trace {tr:.12f} != 1")
    lam = np.linalg.eigvalsh((mat + mat.conj().T) / 2).min()
    if lam < -eig_tol:
        raise NumericalInvariantError(f"density matrix has negative eigenvalue {lam:.3e}")


@dataclass(frozen=True, eq=False)
class LinearOperator:
    layout: SpaceLayout
    matrix: np.ndarray
    unitary: bool = False

    def __post_init__(self):
        mat = np.asarray(self.matrix, dtype=complex)
        d = self.layout.dim
        if mat.shape != (d, d):
            raise LayoutMismatchError(f"operator shape {mat.shape} != ({d}, {d})")
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "matrix", mat)
        if self.unitary:
            err = unitarity_error(mat)
            if err >= 1e-9:
                raise NumericalInvariantError(f"operator flagged unitary but |U^dag U - I| = {err:.2e}")

    def apply(self, state):
        """``U psi`` for pure states, ``U rho U^dag`` for density operators."""
        _check_layout(self.layout, state.layout)
        if isinstance(state, PureState):
            return PureState(self.layout, self.matrix @ state.amplitudes)
        if isinstance(state, DensityOperator):
            m = self.matrix
            return DensityOperator(self.layout, m @ state.matrix @ m.conj().T, validate=False)
        raise TypeError(f"cannot apply operator to {type(state).__name__}")

    def __matmul__(self, other: "LinearOperator") -> "LinearOperator":
        _check_layout(self.layout, other.layout)
        return LinearOperator(self.layout, self.matrix @ other.matrix, self.unitary and other.unitary)

    @property
    def dagger(self) -> "LinearOperator":
        return LinearOperator(self.layout, self.matrix.conj().T, self.unitary)

    def is_hermitian(self, tol=1e-10) -> bool:
        return bool(np.max(np.abs(self.matrix - self.matrix.conj().T)) <= tol)


def unitarity_error(mat: np.ndarray) -> float:
    return float(np.max(np.abs(mat.conj().T @ mat - np.eye(mat.shape[0]))))


# ---------------------------------------------------------------------------
# resonator building blocks

def annihilation(n_cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, n_cutoff + 1, dtype=float)), 1).astype(complex)


def poisson_weight(mean: float, n_cutoff: int) -> float:
    """Probability that a Poisson(mean) variable is <= n_cutoff."""
    return float(poisson.cdf(n_cutoff, mean))


def coherent_amplitudes(alpha: complex, n_cutoff: int, renormalize: bool = True) -> np.ndarray:
    """Fock amplitudes ``C_n = exp(-|a|^2/2) a^n / sqrt(n!)`` for n <= n_cutoff."""
    c = np.empty(n_cutoff + 1, dtype=complex)
    c[0] = math.exp(-abs(alpha) ** 2 / 2)
    for n in range(1, n_cutoff + 1):
        c[n] = c[n - 1] * alpha / math.sqrt(n)
    if renormalize:
        c /= np.linalg.norm(c)
    return c


def resonator_vector(layout: SpaceLayout, res_amps: np.ndarray, ancilla: int = 0, test: int = 0) -> PureState:
    """Product state with the given resonator amplitudes and qubit levels."""
    res_amps = np.asarray(res_amps, dtype=complex)
    if res_amps.size != layout.res_dim:
        raise LayoutMismatchError(f"resonator vector length {res_amps.size} != {layout.res_dim}")
    vec = np.zeros(layout.dim, dtype=complex)
    start = layout.index(ancilla, test, 0)
    vec[start:start + layout.res_dim] = res_amps
    return PureState(layout, vec)


def fock_state(layout: SpaceLayout, ancilla_level: int = 0, test_level: int = 0, n: int = 0) -> PureState:
    vec = np.zeros(layout.dim, dtype=complex)
    vec[layout.index(ancilla_level, test_level, n)] = 1.0
    return PureState(layout, vec)


def coherent_state(layout: SpaceLayout, alpha: complex) -> PureState:
    """Coherent resonator state with both qubits in ``|g>``.

    Raises TruncationError when the cutoff retains less than ``1 - 1e-6`` of
    the Poisson weight.
    """
    captured = poisson_weight(abs(alpha) ** 2, layout.n_cutoff)
    if captured < 1 - TRUNCATION_TOL:
        raise TruncationError(
            f"cutoff {layout.n_cutoff} captures only {captured:.9f} of |alpha={alpha}>", captured
        )
    return resonator_vector(layout, coherent_amplitudes(alpha, layout.n_cutoff))


def displacement_generator(n_cutoff: int, chi: complex) -> np.ndarray:
    a = annihilation(n_cutoff)
    return chi * a.conj().T - np.conj(chi) * a


def displacement_operator(layout: SpaceLayout, chi: complex) -> LinearOperator:
    """``D(chi) = exp(chi a^dag - chi^* a)`` on the truncated space."""
    captured = poisson_weight(abs(chi) ** 2, layout.n_cutoff)
    if captured < 1 - TRUNCATION_TOL:
        warnings.warn(
            f"D({chi:.4g})|0> keeps only {captured:.9f} of its weight below n={layout.n_cutoff}",
            TruncationWarning,
            stacklevel=2,
        )
    d = expm(displacement_generator(layout.n_cutoff, chi))
    return LinearOperator(layout, layout.embed(RESONATOR, d), unitary=True)


def displacement_columns(beta: complex, n_cols: int, n_rows: int) -> np.ndarray:
    """Exact matrix elements ``<m|D(beta)|n>`` for m < n_rows, n < n_cols.

    Uses ``D a^dag = (a^dag - beta^*) D`` column by column, so no truncation
    enters the retained rows.
    """
    m = np.arange(n_rows)
    out = np.empty((n_rows, n_cols), dtype=complex)
    col = np.empty(n_rows, dtype=complex)
    col[0] = math.exp(-abs(beta) ** 2 / 2)
    for k in range(1, n_rows):
        col[k] = col[k - 1] * beta / math.sqrt(k)
    out[:, 0] = col
    sqrt_m = np.sqrt(m)
    for n in range(1, n_cols):
        prev = out[:, n - 1]
        nxt = -np.conj(beta) * prev
        nxt[1:] += sqrt_m[1:] * prev[:-1]
        out[:, n] = nxt / math.sqrt(n)
    return out


def parity_operator(layout: SpaceLayout) -> LinearOperator:
    signs = parity_mask(layout.n_cutoff)
    return LinearOperator(layout, layout.embed(RESONATOR, np.diag(signs)), unitary=True)


def parity_mask(n_cutoff: int) -> np.ndarray:
    return np.where(np.arange(n_cutoff + 1) % 2 == 0, 1.0, -1.0)


# ---------------------------------------------------------------------------
# reductions and figures of merit

def _as_density(state) -> DensityOperator:
    if isinstance(state, PureState):
        return state.to_density()
    return state


def partial_trace(rho, keep) -> DensityOperator:
    """Reduce onto the subsystems named in ``keep``.

    ``keep`` is a label (``"resonator"``, ``"test"``, ``"ancilla"``) or an
    iterable of labels.
    """
    rho = _as_density(rho)
    layout = rho.layout
    keep = {keep} if isinstance(keep, str) else set(keep)
    for lab in keep:
        layout.axis(lab)
    labels = layout.labels
    k = len(labels)
    letters = "abcdefgh"
    row = list(letters[:k])
    col = list(letters[k:2 * k])
    out_row, out_col = [], []
    for i, lab in enumerate(labels):
        if lab in keep:
            out_row.append(row[i])
            out_col.append(col[i])
        else:
            col[i] = row[i]
    spec = "".join(row) + "".join(col) + "->" + "".join(out_row) + "".join(out_col)
    reduced = np.einsum(spec, rho.tensor())
    new_layout = layout.keep(keep)
    d = new_layout.dim
    return DensityOperator(new_layout, reduced.reshape(d, d), validate=False)


def overlap(a: PureState, b: PureState) -> complex:
    """Inner product ``<a|b>``."""
    _check_layout(a.layout, b.layout)
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def fidelity(rho, psi: PureState) -> float:
    """``<psi|rho|psi>`` for a density operator (or pure state) and a pure target."""
    if isinstance(rho, PureState):
        return abs(overlap(psi, rho)) ** 2
    _check_layout(rho.layout, psi.layout)
    v = psi.amplitudes
    val = np.vdot(v, rho.matrix @ v)
    if abs(val.imag) > 1e-10:
        raise NumericalInvariantError(f"fidelity has imaginary part {val.imag:.2e}")
    return float(min(max(val.real, 0.0), 1.0 + 1e-12))


def trace_distance(rho, sigma) -> float:
    rho, sigma = _as_density(rho), _as_density(sigma)
    _check_layout(rho.layout, sigma.layout)
    diff = rho.matrix - sigma.matrix
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh((diff + diff.conj().T) / 2))))


def pad_resonator(rho, n_cutoff: int):
    """Embed a state into a layout with a larger cutoff (zero padding)."""
    layout = rho.layout
    if n_cutoff == layout.n_cutoff:
        return rho
    if n_cutoff < layout.n_cutoff:
        raise CutoffExceededError(f"cannot shrink cutoff {layout.n_cutoff} -> {n_cutoff}")
    new = layout.with_cutoff(n_cutoff)
    nq = len(layout.qubits)
    if isinstance(rho, PureState):
        t = rho.tensor()
        out = np.zeros(new.dims, dtype=complex)
        out[(slice(None),) * nq + (slice(0, layout.res_dim),)] = t
        return PureState(new, out.reshape(-1))
    t = rho.tensor()
    out = np.zeros(new.dims * 2, dtype=complex)
    sl = (slice(None),) * nq + (slice(0, layout.res_dim),)
    out[sl + sl] = t
    return DensityOperator(new, out.reshape(new.dim, new.dim), validate=False)


def product_with_qubits(res_state, layout: SpaceLayout, ancilla: int = 0, test: int = 0):
    """Tensor a resonator-only state with qubit basis states on ``layout``."""
    if res_state.layout.qubits:
        raise ValidationError("expected a resonator-only state")
    if res_state.layout.n_cutoff != layout.n_cutoff:
        res_state = pad_resonator(res_state, layout.n_cutoff)
    if isinstance(res_state, PureState):
        return resonator_vector(layout, res_state.amplitudes, ancilla, test)
    q = np.zeros(layout.dim // layout.res_dim)
    q_idx = layout.index(ancilla, test, 0) // layout.res_dim
    q[q_idx] = 1.0
    mat = np.kron(np.diag(q), res_state.matrix)
    return DensityOperator(layout, mat, validate=False)


# ---------------------------------------------------------------------------
# JSON I/O: layout descriptor + row-major [re, im] pairs

def state_to_dict(state, metadata: dict | None = None) -> dict:
    if isinstance(state, PureState):
        kind, flat = "pure", state.amplitudes
    else:
        kind, flat = "density", state.matrix.reshape(-1)
    d = {
        "kind": kind,
        "layout": state.layout.to_dict(),
        "entries": [[float(z.real), float(z.imag)] for z in flat],
    }
    if metadata:
        d["metadata"] = metadata
    return d


def state_from_dict(d: dict, trace_tol: float = 1e-6):
    """Parse a state document; density matrices are validated then renormalized."""
    try:
        kind = d["kind"]
        layout = SpaceLayout.from_dict(d["layout"])
        entries = np.asarray(d["entries"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise ValidationError(f"malformed state document: {exc}") from None
    if entries.ndim != 2 or entries.shape[1] != 2:
        raise ValidationError("entries must be a list of [re, im] pairs")
    flat = entries[:, 0] + 1j * entries[:, 1]
    if kind == "pure":
        psi = PureState(layout, flat)
        if abs(psi.norm - 1) > trace_tol:
            raise ValidationError(f"pure state norm {psi.norm:.9f} != 1")
        return psi.normalized()
    if kind != "density":
        raise ValidationError(f"unknown state kind {kind!r}")
    dim = layout.dim
    if flat.size != dim * dim:
        raise ValidationError(f"expected {dim * dim} entries for layout {layout}, got {flat.size}")
    mat = flat.reshape(dim, dim)
    herm = np.max(np.abs(mat - mat.conj().T))
    if herm > 1e-8:
        raise ValidationError(f"density matrix not Hermitian (deviation {herm:.2e})")
    tr = np.trace(mat).real
    if abs(tr - 1) > trace_tol:
        raise ValidationError(f"density matrix trace {tr:.9f} deviates from 1 by more than {trace_tol}")
    mat = (mat + mat.conj().T) / 2 / tr
    lam = np.linalg.eigvalsh(mat).min()
    if lam < -1e-8:
        raise ValidationError(f"density matrix has negative eigenvalue {lam:.3e}")
    return DensityOperator(layout, mat)


def save_state(state, path, metadata: dict | None = None):
    Path(path).write_text(json.dumps(state_to_dict(state, metadata), indent=1) + "\n")


def load_state(path):
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return state_from_dict(doc)
