"""Simulator of a delayed-choice Ramsey experiment whose first beam splitter is
a resonator prepared in a superposition of a coherent state and vacuum."""

from .decoherence import DecoherenceRates, DelaySpec
from .dynamics import HardwareParams, RotationSpec
from .errors import (
    ImpossibleBranchError,
    NumericalInvariantError,
    QbsError,
    TruncationError,
    ValidationError,
)
from .experiments import (
    ExperimentRecord,
    RunOptions,
    conditional_fringe_scan,
    conditioned_wigner,
    delayed_choice_run,
    fringe_scan,
    pe_analytic,
    quantum_to_classical_scan,
    sample_shots,
)
from .hilbert import DensityOperator, PureState, SpaceLayout
from .stateprep import CatSpec, PulseProgram, law_eberly_program, run_program, synthesize_cat
from .wigner import WignerGrid, wigner_grid, wigner_point

__version__ = "0.1.0"

__all__ = [
    "CatSpec",
    "DecoherenceRates",
    "DelaySpec",
    "DensityOperator",
    "ExperimentRecord",
    "HardwareParams",
    "ImpossibleBranchError",
    "NumericalInvariantError",
    "PulseProgram",
    "PureState",
    "QbsError",
    "RotationSpec",
    "RunOptions",
    "SpaceLayout",
    "TruncationError",
    "ValidationError",
    "WignerGrid",
    "conditional_fringe_scan",
    "conditioned_wigner",
    "delayed_choice_run",
    "fringe_scan",
    "law_eberly_program",
    "pe_analytic",
    "quantum_to_classical_scan",
    "run_program",
    "sample_shots",
    "synthesize_cat",
    "wigner_grid",
    "wigner_point",
]
