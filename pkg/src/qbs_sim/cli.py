"""Command-line interface: ``qbs-sim <subcommand> [flags]``.

Exit status: 0 on success, 1 on invalid input or I/O failure, 2 when a
numerical invariant (trace, positivity) is violated. Errors go to stderr as
``qbs-sim: error[CODE]: message``.
"""
from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from .decoherence import DecoherenceRates
from .errors import NumericalInvariantError, QbsError, ValidationError
from .experiments import (
    CSV_COLUMNS,
    conditional_fringe_scan,
    conditioned_resonator_state,
    conditioned_wigner,
    fringe_scan,
    quantum_to_classical_scan,
    sample_shots,
)
from .hilbert import DensityOperator, SpaceLayout, fidelity, load_state, pad_resonator, product_with_qubits
from .io import RunConfig, Table, emit, parse_program, sidecar_path, write_text, _read_json, json_text
from .stateprep import (
    CatSpec,
    Displace,
    Drive,
    cat_synthesis_program,
    ideal_cat,
    run_program,
    step_to_dict,
)
from .wigner import tomography_wigner, wigner_point

VERSION = "0.1.0"
COMMANDS = ("fringe", "conditional", "wigner", "decay", "prep", "run", "tomography")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ValidationError(message)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _common_flags() -> argparse.ArgumentParser:
    p = _Parser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--config", help="RunConfig JSON file; explicit flags override it")
    g.add_argument("--alpha", type=float, help="coherent amplitude of the cat (default 2)")
    g.add_argument("--phi", type=float, help="cat mixing angle in radians (default pi/4)")
    g.add_argument("--theta-steps", type=int, help="theta samples over [0, 2pi) (default 64)")
    g.add_argument("--cutoff", type=int, help="Fock cutoff (default: automatic, at least 20)")
    g.add_argument("--decoherence", action="store_true", default=None, help="enable resonator decay during the delay")
    g.add_argument("--delay-ns", type=float, help="delay between preparation and R1 in ns")
    g.add_argument("--seed", type=int, help="seed for sampled quantities")
    g.add_argument("--out", help="output file (default: stdout, no sidecar)")
    g.add_argument("--format", choices=("csv", "json"), help="output format (default csv)")
    g.add_argument("--readout", choices=("coupling", "projective", "none"), help="ancilla discrimination model")
    g.add_argument("--prep", choices=("ideal", "synthesized", "file"), help="cat preparation")
    g.add_argument("--initial-state", help="state file used with --prep file")
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common_flags()
    parser = _Parser(prog="qbs-sim", description="Delayed-choice Ramsey experiment with a resonator beam splitter.")
    parser.add_argument("--version", action="version", version=f"qbs-sim {VERSION}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("fringe", parents=[common], help="P_e versus theta (and phi)")
    p.add_argument("--phis", type=_floats, help="comma-separated phi values for a morphing surface")

    p = sub.add_parser("conditional", parents=[common], help="P_e conditioned on the ancilla outcome")
    p.add_argument("--shots", type=int, help="also draw this many single shots per theta")

    p = sub.add_parser("wigner", parents=[common], help="resonator Wigner function after R2")
    p.add_argument("--theta", type=float, help="R2 phase in radians (default pi/2)")
    p.add_argument("--condition", choices=("none", "test_g", "test_e"))
    p.add_argument("--bounds", type=_floats, help="re0,re1,im0,im1")
    p.add_argument("--resolution", type=_floats, help="n_re,n_im")

    p = sub.add_parser("decay", parents=[common], help="fringe contrast and Wigner negativity versus delay")
    p.add_argument("--delays", type=_floats, help="comma-separated delays in ns")
    p.add_argument("--bounds", type=_floats, help="re0,re1,im0,im1")
    p.add_argument("--resolution", type=_floats, help="n_re,n_im")

    p = sub.add_parser("prep", parents=[common], help="emit a cat synthesis program, or verify one")
    p.add_argument("--verify", metavar="PROGRAM", help="run PROGRAM and report its fidelity to the target cat")

    p = sub.add_parser("run", parents=[common], help="execute a pulse program file")
    p.add_argument("program")

    p = sub.add_parser("tomography", parents=[common], help="Wigner value at one point via simulated ancilla Rabi data")
    p.add_argument("--chi", type=_floats, help="re,im of the phase-space point (default 1,0)")
    p.add_argument("--theta", type=float)
    p.add_argument("--condition", choices=("none", "test_g", "test_e"))
    p.add_argument("--noise", type=float, help="Gaussian noise on the Rabi signal (needs --seed)")

    p = sub.add_parser("replay", help="rerun a command from its metadata sidecar")
    p.add_argument("sidecar")
    p.add_argument("--out", help="output file (default: stdout)")
    return parser


def config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if getattr(args, "config", None) else RunConfig()
    over: dict = {}
    cat = {}
    if args.alpha is not None:
        cat["alpha"] = args.alpha
    if args.phi is not None:
        cat["phi"] = args.phi
    if cat:
        over["cat"] = cat
    simple = {
        "theta_steps": "theta_steps", "cutoff": "cutoff", "decoherence": "decoherence", "delay_ns": "delay_ns",
        "seed": "seed", "out": "out", "format": "format", "readout": "readout", "prep": "prep",
        "initial_state": "initial_state", "theta": "theta", "condition": "condition", "noise": "noise",
        "shots": "shots",
    }
    for attr, key in simple.items():
        val = getattr(args, attr, None)
        if val is not None:
            over[key] = val
    for attr in ("phis", "delays"):
        val = getattr(args, attr, None)
        if val is not None:
            over[attr] = list(val)
    if getattr(args, "chi", None) is not None:
        if len(args.chi) != 2:
            raise ValidationError("--chi takes two numbers: re,im")
        over["chi"] = list(args.chi)
    grid = {}
    if getattr(args, "bounds", None) is not None:
        if len(args.bounds) != 4:
            raise ValidationError("--bounds takes four numbers: re0,re1,im0,im1")
        b = args.bounds
        grid["bounds"] = [[b[0], b[1]], [b[2], b[3]]]
    if getattr(args, "resolution", None) is not None:
        if len(args.resolution) != 2 or any(r != int(r) for r in args.resolution):
            raise ValidationError("--resolution takes two integers: n_re,n_im")
        grid["resolution"] = [int(r) for r in args.resolution]
    if grid:
        over["grid"] = grid
    return RunConfig.from_dict(over, base=cfg, source="command line")


def _output_metadata(command: str, cfg: RunConfig, extra: dict | None = None) -> dict:
    d = cfg.to_dict()
    d.pop("out")
    return {"command": command, "config": d, "seed": cfg.seed, **(extra or {})}


# ---------------------------------------------------------------------------
# commands; each returns (object to emit, extra metadata)

def _cmd_fringe(cfg: RunConfig, args):
    opts = cfg.run_options()
    if cfg.phis:
        rows = []
        contrasts = []
        for phi in cfg.phis:
            rec = fringe_scan(CatSpec(phi, cfg.cat.alpha, cfg.cat.cutoff), cfg.theta_steps, opts)
            rows.extend((phi, *row) for row in rec.rows())
            contrasts.append(rec.contrast_pe)
        return Table(("phi",) + CSV_COLUMNS, tuple(rows), {"contrast_pe": contrasts}), {}
    return fringe_scan(cfg.cat, cfg.theta_steps, opts), {}


def _cmd_conditional(cfg: RunConfig, args):
    rec = conditional_fringe_scan(cfg.cat, cfg.theta_steps, cfg.run_options())
    if not cfg.shots:
        return rec, {}
    rows = []
    for k, (point, row) in enumerate(zip(rec.points, rec.rows())):
        s = sample_shots(point, cfg.shots, cfg.seed + k)
        rows.append((*row, *s.counts))
    header = CSV_COLUMNS + ("n_g_g", "n_g_e", "n_e_g", "n_e_e")
    meta = {"contrast_wave": rec.contrast_wave, "contrast_particle": rec.contrast_particle,
            "shot_seeds": "seed + theta index"}
    return Table(header, tuple(rows), meta), {}


def _cmd_wigner(cfg: RunConfig, args):
    grid = conditioned_wigner(cfg.cat, cfg.theta, cfg.condition, cfg.run_options(), cfg.grid_bounds,
                              cfg.grid_resolution)
    return grid, {}


def _cmd_decay(cfg: RunConfig, args):
    opts = replace(cfg.run_options(), decoherence=True, delay=None,
                   rates=DecoherenceRates.resonator_only(cfg.rates.gamma_res))
    points = quantum_to_classical_scan(cfg.cat, cfg.delays, opts, cfg.theta_steps, cfg.grid_bounds,
                                       cfg.grid_resolution)
    return list(points), {}


def _program_table(program) -> Table:
    header = ("index", "kind", "qubit", "angle", "phase", "z_phase", "duration", "amp_re", "amp_im")
    rows = []
    for i, step in enumerate(program.steps):
        amp = complex(step.amplitude) if isinstance(step, Displace) else None
        rows.append((
            i, step.kind, getattr(step, "qubit", ""),
            step.angle if isinstance(step, Drive) else "",
            step.phase if isinstance(step, Drive) else "",
            step.z_phase if isinstance(step, Drive) else "",
            getattr(step, "duration", ""),
            amp.real if amp is not None else "",
            amp.imag if amp is not None else "",
        ))
    return Table(header, tuple(rows))


def _prep_layout(cfg: RunConfig) -> SpaceLayout:
    return cfg.layout()


def _cmd_prep(cfg: RunConfig, args):
    layout = _prep_layout(cfg)
    target = ideal_cat(cfg.cat, layout)
    if getattr(args, "verify", None):
        program = parse_program(args.verify, layout)
        result = run_program(program, layout, cfg.hardware)
        f = fidelity(result.state, target)
        table = Table(("phi", "alpha", "fidelity"), ((cfg.cat.phi, cfg.cat.alpha, f),), {"program": args.verify})
        return table, {"program": args.verify}
    program = cat_synthesis_program(cfg.cat, cfg.hardware)
    f = fidelity(run_program(program, layout, cfg.hardware).state, target)
    if cfg.format == "json":
        doc = {"steps": [step_to_dict(s) for s in program.steps],
               "metadata": {"phi": cfg.cat.phi, "alpha": cfg.cat.alpha, "fidelity": f}}
        return _Raw(json_text(doc)), {"fidelity": f}
    table = _program_table(program)
    return Table(table.header, table.rows, {"fidelity": f}), {"fidelity": f}


class _Raw:
    def __init__(self, text: str):
        self.text = text


def _cmd_run(cfg: RunConfig, args):
    layout = SpaceLayout(cfg.cutoff or 20, ("ancilla", "test"))
    program = parse_program(args.program, layout)
    initial = None
    if cfg.initial_state:
        state = load_state(cfg.initial_state)
        if not state.layout.qubits:
            rho = state if isinstance(state, DensityOperator) else state.to_density()
            initial = product_with_qubits(pad_resonator(rho, layout.n_cutoff), layout)
        else:
            initial = pad_resonator(state, layout.n_cutoff)
    rates = cfg.rates if cfg.decoherence else None
    result = run_program(program, layout, cfg.hardware, initial, rates, cfg.dt)
    if result.measured:
        rows = tuple((*("ge"[i] for i in k), p) for k, p in sorted(result.outcomes.items()))
        return Table(result.measured + ("probability",), rows), {"program": args.program}
    from .hilbert import partial_trace

    pops = partial_trace(result.state, "resonator").matrix.diagonal().real
    return Table(("n", "population"), tuple((n, p) for n, p in enumerate(pops))), {"program": args.program}


def _cmd_tomography(cfg: RunConfig, args):
    rho, p = conditioned_resonator_state(cfg.cat, cfg.theta, cfg.condition, cfg.run_options())
    chi = complex(*cfg.chi)
    direct = wigner_point(rho, chi)
    measured = tomography_wigner(rho, chi, cfg.hardware, noise=cfg.noise, seed=cfg.seed if cfg.noise else None)
    table = Table(("re", "im", "w_direct", "w_tomography"), ((chi.real, chi.imag, direct, measured),),
                  {"branch_probability": p})
    return table, {}


HANDLERS = {
    "fringe": _cmd_fringe,
    "conditional": _cmd_conditional,
    "wigner": _cmd_wigner,
    "decay": _cmd_decay,
    "prep": _cmd_prep,
    "run": _cmd_run,
    "tomography": _cmd_tomography,
}


def execute(command: str, cfg: RunConfig, args, out=None) -> str:
    """Run ``command`` and write its output (plus a sidecar when ``out`` is a path)."""
    obj, extra = HANDLERS[command](cfg, args)
    meta = _output_metadata(command, cfg, extra)
    if isinstance(obj, _Raw):
        text = obj.text
        if out:
            write_text(out, text)
    else:
        text = emit(obj, cfg.format, out, meta)
    if out:
        side = {**meta, "version": VERSION}
        for key in ("program", "verify"):
            if getattr(args, key, None):
                side[key] = getattr(args, key)
        write_text(sidecar_path(out), json.dumps(side, indent=1, sort_keys=True) + "\n")
    return text


def _replay(args) -> str:
    _, side = _read_json(args.sidecar, "sidecar")
    try:
        command, cfg_doc = side["command"], side["config"]
    except (KeyError, TypeError):
        raise ValidationError(f"{args.sidecar}: not a qbs-sim metadata sidecar") from None
    if command not in HANDLERS:
        raise ValidationError(f"{args.sidecar}: unknown command {command!r}")
    cfg = RunConfig.from_dict(cfg_doc, source=args.sidecar)
    ns = argparse.Namespace(program=side.get("program"), verify=side.get("verify"))
    return execute(command, replace(cfg, out=args.out), ns, args.out)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "replay":
            text = _replay(args)
            out = args.out
        else:
            cfg = config_from_args(args)
            text = execute(args.command, cfg, args, cfg.out)
            out = cfg.out
        if not out:
            sys.stdout.write(text)
        return 0
    except NumericalInvariantError as exc:
        print(f"qbs-sim: error[{exc.code}]: {exc}", file=sys.stderr)
        return 2
    except QbsError as exc:
        print(f"qbs-sim: error[{exc.code}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
