"""File formats: pulse programs, run configurations and result emitters.

All text output uses 9 significant digits, a fixed column order and LF line
endings, so fixed inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import io
import json
import math
import re
from dataclasses import dataclass, field, replace
from functools import lru_cache
from importlib import resources
from pathlib import Path

import jsonschema

from .decoherence import DecoherenceRates, DelaySpec
from .dynamics import HardwareParams
from .errors import CutoffExceededError, OutputError, ValidationError
from .experiments import DecayPoint, ExperimentRecord, RunOptions
from .hilbert import SpaceLayout
from .stateprep import CatSpec, PulseProgram, Swap, load_initial_state, step_from_dict
from .wigner import DEFAULT_BOUNDS, DEFAULT_RESOLUTION, WignerGrid

SCHEMAS = ("pulse_program", "run_config", "density_matrix", "experiment_record", "wigner_grid", "decay_scan")


@lru_cache(maxsize=None)
def load_schema(name: str) -> dict:
    if name not in SCHEMAS:
        raise ValidationError(f"unknown schema {name!r}")
    text = resources.files("qbs_sim").joinpath("schemas", f"{name}.schema.json").read_text()
    return json.loads(text)


def _path_str(path) -> str:
    out = ""
    for p in path:
        out += f"[{p}]" if isinstance(p, int) else (f".{p}" if out else str(p))
    return out or "<root>"


def validate_document(doc, schema: str, source: str = "document"):
    validator = jsonschema.Draft202012Validator(load_schema(schema))
    err = jsonschema.exceptions.best_match(validator.iter_errors(doc))
    if err is not None:
        raise ValidationError(f"{source}: {_path_str(err.absolute_path)}: {err.message}")
    return doc


def _read_json(path, what: str):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise OutputError(f"{path}: cannot read {what}: {exc.strerror}") from None
    try:
        return text, json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


# ---------------------------------------------------------------------------
# pulse programs

def _step_lines(text: str) -> list[int]:
    """Line numbers of the ``"kind"`` keys inside the steps array (best effort)."""
    start = text.find('"steps"')
    if start < 0:
        return []
    return [text.count("\n", 0, start + m.start()) + 1 for m in re.finditer(r'"kind"\s*:', text[start:])]


def max_photons_after(program: PulseProgram, initial_photons: int = 0) -> int:
    """Worst-case photon number: each positive-duration swap adds at most one excitation."""
    return initial_photons + sum(1 for s in program.steps if isinstance(s, Swap) and s.duration > 0)


def check_swap_budget(program: PulseProgram, n_cutoff: int, initial_photons: int = 0):
    worst = max_photons_after(program, initial_photons)
    if worst > n_cutoff:
        raise CutoffExceededError(
            f"program can load up to {worst} photons through swaps, above the cutoff {n_cutoff}"
        )


def program_from_document(doc, source: str = "program", lines: list[int] | None = None) -> PulseProgram:
    validate_document(doc, "pulse_program", source)
    steps = []
    for i, d in enumerate(doc["steps"]):
        try:
            steps.append(step_from_dict(d, i))
        except ValidationError as exc:
            where = f" (line {lines[i]})" if lines and i < len(lines) else ""
            raise ValidationError(f"{source}{where}: {exc}") from None
    return PulseProgram(tuple(steps))


def parse_program(path, layout: SpaceLayout | None = None) -> PulseProgram:
    """Read, schema-check and validate a program file.

    With ``layout`` the qubit labels are checked against it and the static
    swap budget against its cutoff.
    """
    text, doc = _read_json(path, "program")
    program = program_from_document(doc, str(path), _step_lines(text))
    if layout is not None:
        try:
            program.validate(layout)
        except ValidationError as exc:
            raise ValidationError(f"{path}: {exc}") from None
        check_swap_budget(program, layout.n_cutoff)
    return program


def program_to_json(program: PulseProgram, metadata: dict | None = None) -> str:
    doc = program.to_dict()
    if metadata:
        doc["metadata"] = metadata
    return json.dumps(doc, indent=1, sort_keys=True) + "\n"


def write_program(program: PulseProgram, path, metadata: dict | None = None):
    write_text(path, program_to_json(program, metadata))


# ---------------------------------------------------------------------------
# run configuration

@dataclass(frozen=True)
class RunConfig:
    """Everything needed to reproduce one CLI invocation."""

    cat: CatSpec = field(default_factory=lambda: CatSpec(math.pi / 4, 2.0))
    hardware: HardwareParams = field(default_factory=HardwareParams)
    rates: DecoherenceRates = field(default_factory=DecoherenceRates)
    cutoff: int | None = None
    theta_steps: int = 64
    theta: float = math.pi / 2
    phis: tuple | None = None
    grid_bounds: tuple = DEFAULT_BOUNDS
    grid_resolution: tuple = DEFAULT_RESOLUTION
    seed: int = 0
    out: str | None = None
    format: str = "csv"
    decoherence: bool = False
    qubit_decoherence: bool = False
    delay_ns: float = 0.0
    delays: tuple = (0.0, 250.0, 500.0, 1000.0)
    readout: str = "coupling"
    prep: str = "ideal"
    initial_state: str | None = None
    condition: str = "none"
    chi: tuple = (1.0, 0.0)
    noise: float = 0.0
    shots: int | None = None
    dt: float = 0.1

    def to_dict(self) -> dict:
        return {
            "cat": {"phi": self.cat.phi, "alpha": self.cat.alpha, "cutoff": self.cat.cutoff},
            "hardware": self.hardware.to_dict(),
            "rates": self.rates.to_dict(),
            "cutoff": self.cutoff,
            "theta_steps": self.theta_steps,
            "theta": self.theta,
            "phis": None if self.phis is None else list(self.phis),
            "grid": {"bounds": [list(b) for b in self.grid_bounds], "resolution": list(self.grid_resolution)},
            "seed": self.seed,
            "out": self.out,
            "format": self.format,
            "decoherence": self.decoherence,
            "qubit_decoherence": self.qubit_decoherence,
            "delay_ns": self.delay_ns,
            "delays": list(self.delays),
            "readout": self.readout,
            "prep": self.prep,
            "initial_state": self.initial_state,
            "condition": self.condition,
            "chi": list(self.chi),
            "noise": self.noise,
            "shots": self.shots,
            "dt": self.dt,
        }

    @classmethod
    def from_dict(cls, d: dict, base: "RunConfig | None" = None, source: str = "config") -> "RunConfig":
        """Overlay ``d`` on ``base`` (defaults when omitted); unknown keys are rejected."""
        validate_document(d, "run_config", source)
        base = base or cls()
        kw = {}
        if "cat" in d:
            c = {"phi": base.cat.phi, "alpha": base.cat.alpha, "cutoff": base.cat.cutoff, **d["cat"]}
            kw["cat"] = CatSpec(c["phi"], c["alpha"], c["cutoff"])
        if "hardware" in d:
            h = {**base.hardware.to_dict(), **d["hardware"]}
            det = {**base.hardware.to_dict()["detunings"], **h.get("detunings", {})}
            kw["hardware"] = HardwareParams(h["omega_test"], h["omega_ancilla"], det)
        if "rates" in d:
            kw["rates"] = DecoherenceRates(**{**base.rates.to_dict(), **d["rates"]})
        if "grid" in d:
            g = d["grid"]
            if "bounds" in g:
                kw["grid_bounds"] = tuple(tuple(b) for b in g["bounds"])
            if "resolution" in g:
                kw["grid_resolution"] = tuple(g["resolution"])
        for key in ("phis", "delays", "chi"):
            if key in d:
                kw[key] = None if d[key] is None else tuple(float(x) for x in d[key])
        for key in ("cutoff", "theta_steps", "theta", "seed", "out", "format", "decoherence", "qubit_decoherence",
                    "delay_ns", "readout", "prep", "initial_state", "condition", "noise", "shots", "dt"):
            if key in d:
                kw[key] = d[key]
        return replace(base, **kw)

    @classmethod
    def load(cls, path) -> "RunConfig":
        _, doc = _read_json(path, "config")
        return cls.from_dict(doc, source=str(path))

    def layout(self) -> SpaceLayout:
        from .experiments import auto_cutoff

        return SpaceLayout(self.cutoff or auto_cutoff(self.cat.alpha), ("ancilla", "test"))

    def run_options(self) -> RunOptions:
        delay = DelaySpec(self.delay_ns, self.cat.alpha, self.rates.gamma_res) if self.delay_ns else None
        initial = load_initial_state(self.initial_state) if self.prep == "file" else None
        return RunOptions(
            params=self.hardware,
            prep=self.prep,
            initial_state=initial,
            decoherence=self.decoherence,
            delay=delay,
            rates=self.rates,
            readout=self.readout,
            n_cutoff=self.cutoff,
            qubit_decoherence=self.qubit_decoherence,
            dt=self.dt,
        )


# ---------------------------------------------------------------------------
# emitters

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    if isinstance(x, (int,)) and not isinstance(x, bool):
        return str(x)
    return f"{float(x):.9g}"


def csv_text(header, rows) -> str:
    buf = io.StringIO(newline="")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def json_text(doc) -> str:
    return json.dumps(_clean(doc), indent=1, sort_keys=True, allow_nan=False) + "\n"


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, complex):
        return [_clean(x.real), _clean(x.imag)]
    if isinstance(x, bool) or x is None or isinstance(x, (str, int)):
        return x
    try:
        v = float(x)
    except (TypeError, ValueError):
        return str(x)
    return None if math.isnan(v) or math.isinf(v) else float(f"{v:.9g}")


DECAY_COLUMNS = ("T", "gamma_T", "alpha_prime", "contrast_pe", "contrast_wave", "contrast_particle",
                 "min_w", "chi_min_re", "chi_min_im", "coherence", "coherence_ratio")


def decay_rows(points):
    for p in points:
        yield (p.T, p.gamma_T, p.alpha_prime, p.contrast_pe, p.contrast_wave, p.contrast_particle, p.min_w,
               p.chi_min.real, p.chi_min.imag, p.coherence, p.coherence_ratio)


def render(obj, fmt: str, metadata: dict | None = None) -> str:
    """Serialize a record, grid, decay scan or plain table to text."""
    if fmt not in ("csv", "json"):
        raise ValidationError(f"unknown output format {fmt!r}")
    if isinstance(obj, ExperimentRecord):
        if fmt == "csv":
            return obj.to_csv()
        doc = obj.to_dict()
        if metadata:
            doc["metadata"] = {**doc["metadata"], **metadata}
        return json_text(validate_document(_clean(doc), "experiment_record"))
    if isinstance(obj, WignerGrid):
        if fmt == "csv":
            return obj.to_csv()
        doc = obj.to_dict()
        if metadata:
            doc["metadata"] = {**doc["metadata"], **metadata}
        return json_text(validate_document(_clean(doc), "wigner_grid"))
    if isinstance(obj, (list, tuple)) and obj and isinstance(obj[0], DecayPoint):
        if fmt == "csv":
            return csv_text(DECAY_COLUMNS, decay_rows(obj))
        doc = {"points": [p.to_dict() for p in obj], "metadata": metadata or {}}
        return json_text(validate_document(_clean(doc), "decay_scan"))
    if isinstance(obj, Table):
        if fmt == "csv":
            return csv_text(obj.header, obj.rows)
        return json_text({"columns": list(obj.header), "rows": [list(r) for r in obj.rows],
                          "metadata": {**obj.metadata, **(metadata or {})}})
    raise ValidationError(f"cannot render {type(obj).__name__}")


@dataclass(frozen=True)
class Table:
    header: tuple
    rows: tuple
    metadata: dict = field(default_factory=dict)


def write_text(path, text: str):
    try:
        with open(path, "w", newline="\n", encoding="utf-8") as fh:
            fh.write(text)
    except OSError as exc:
        raise OutputError(f"{path}: cannot write output: {exc.strerror}") from None


def emit(obj, fmt: str, path=None, metadata: dict | None = None) -> str:
    """Render ``obj`` and write it to ``path`` (if given); returns the text."""
    text = render(obj, fmt, metadata)
    if path is not None:
        write_text(path, text)
    return text


def sidecar_path(path) -> Path:
    return Path(f"{path}.meta.json")
