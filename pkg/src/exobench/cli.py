"""Command-line front end: ``exobench <validate|synth|ik|id|decode|report>``.

Exit status: 0 success, 1 domain or validation failure, 2 I/O failure.
Every command except ``validate`` writes into ``<out>/<run-name>/`` and
leaves a ``manifest.json`` (inputs with hashes, options, outputs) there.
``EXOBENCH_LOG`` sets the log level (default WARNING).
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from datetime import datetime, timezone
from importlib import resources
from pathlib import Path

import numpy as np

from . import __version__, kernels
from . import io as xio
from .analysis import range_stats
from .dynamics import energy_terms, inverse_dynamics, inverse_dynamics_series, joint_power
from .errors import ExobenchError
from .kinematics import (
    IkSolution,
    SweepSpec,
    default_partition,
    differentiate,
    inverse_kinematics_trajectory,
    loop_constraints,
    solve_closure,
    synth_ps_trajectory,
)
from .model import (
    GeneralizedState,
    coordinate_index,
    default_model,
    default_model_text,
    load_model,
    load_model_file,
    validate_chain,
)
from .report import build_report, load_exp_dirs, load_sim_dir, DECODE_SUMMARY, ID_SUMMARY
from .servo import (
    DEFAULT_NEUTRAL,
    ServoFeedbackRecord,
    decode_position,
    decode_trial,
    encode_position,
    encode_torque,
    format_trial_log,
    parse_trial_log,
)

log = logging.getLogger("exobench")

PS_COORD = "RU.pronation_supination"
PUBLISHED = "published"


# ---------------------------------------------------------------- helpers

def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump_json(path: Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n")


class Run:
    """Per-run output directory plus manifest bookkeeping."""

    def __init__(self, args, command: str):
        base = Path(args.out)
        name = args.run_name or datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%SZ")
        path = base / name
        if args.run_name is None:
            k = 2
            while path.exists():
                path = base / f"{name}-{k}"
                k += 1
        path.mkdir(parents=True, exist_ok=True)
        self.path = path
        self.command = command
        self.inputs: list[Path] = []
        self.options: dict = {}
        self.outputs: list[str] = []

    def file(self, name: str) -> Path:
        self.outputs.append(name)
        return self.path / name

    def finish(self, seed: int | None = None) -> None:
        manifest = {
            "command": self.command,
            "tool": "exobench",
            "version": __version__,
            "backend": kernels.BACKEND,
            "seed": seed,
            "options": self.options,
            "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in self.inputs if Path(p).is_file()],
            "outputs": [{"file": n, "sha256": _sha256(self.path / n)} for n in sorted(set(self.outputs))],
        }
        _dump_json(self.path / "manifest.json", manifest)
        print(f"outputs: {self.path}")


def _model(args):
    if args.model is None:
        return default_model(), None
    path = Path(args.model)
    return load_model_file(path), path


def _ps_index(chain) -> int:
    return coordinate_index(chain, PS_COORD) - 1


def _range_dict(series, units) -> dict:
    return range_stats(series, units).as_dict()


# ---------------------------------------------------------------- commands

def cmd_validate(args) -> int:
    path = Path(args.model) if args.model else None
    text = path.read_text() if path else default_model_text()
    chain = load_model(text, validate=False)
    violations = validate_chain(chain)
    for v in violations:
        print(v)
    if violations:
        return 1
    print(f"{chain.name}: valid ({len(chain.segments)} segments, {chain.n_coords} coordinates)")
    return 0


def cmd_synth(args) -> int:
    chain, model_path = _model(args)
    spec = SweepSpec(amplitude_pron=args.amplitude_pron, amplitude_sup=args.amplitude_sup,
                     speed=args.speed, duration=args.duration, sample_rate=args.sample_rate,
                     noise_sd=args.noise_sd, seed=args.seed)
    synth = synth_ps_trajectory(chain, spec)
    run = Run(args, "synth")
    if model_path:
        run.inputs.append(model_path)
    run.options = {k: getattr(spec, k) for k in ("amplitude_pron", "amplitude_sup", "speed", "duration",
                                                 "sample_rate", "noise_sd", "ramp_time", "dwell")}
    xio.write_markers(run.file("markers.csv"), synth.trajectory, chain.marker_names)
    xio.write_q(run.file("q_truth.csv"), chain, synth.t, synth.q)
    ps = _ps_index(chain)
    angle = np.degrees(synth.q[:, ps])
    if args.servo_log:
        torque = np.array([
            inverse_dynamics(chain, GeneralizedState(float(t), q, qd, qdd))[0][ps]
            for t, q, qd, qdd in zip(synth.t, synth.q, synth.qd, synth.qdd)])
        neutral_deg = decode_position(DEFAULT_NEUTRAL)
        # servo convention: counter-clockwise (pronation, negative coordinate) is positive
        records = [ServoFeedbackRecord(float(t), 1, encode_position(neutral_deg + a), encode_torque(-tau))
                   for t, a, tau in zip(synth.t, angle, torque)]
        meta = {"session_id": "synthetic", "trial_label": "synthetic",
                "speed_rpm": spec.speed, "joint_name": "pronation_supination",
                "neutral_raw": DEFAULT_NEUTRAL}
        run.file("servo_log.csv").write_text(format_trial_log(records, meta))
    rom = range_stats(angle, "deg")
    print(f"frames: {len(synth.t)}  duration: {synth.t[-1]:.2f} s")
    print(f"ground-truth PS ROM: {rom.range:.2f} deg ({rom.min:.2f} to {rom.max:.2f})")
    run.finish(args.seed)
    return 0


def cmd_ik(args) -> int:
    chain, model_path = _model(args)
    traj = xio.read_markers(args.markers)
    run = Run(args, "ik")
    run.inputs += [p for p in (model_path, Path(args.markers), args.truth and Path(args.truth)) if p]
    run.options = {"policy": args.policy, "cold_start": args.cold_start}
    sol = inverse_kinematics_trajectory(chain, traj, policy=args.policy,
                                        warm_start=not args.cold_start, workers=args.workers)
    xio.write_q(run.file("q.csv"), chain, sol.t, sol.q)
    summary = {
        "frames": len(sol),
        "max_residual": float(np.max(sol.residual)),
        "max_constraint_norm": float(np.max(sol.constraint_norm)),
        "failed_frames": sol.failed_frames,
        "frames_with_missing_markers": sorted(sol.missing_markers),
    }
    print(f"frames: {len(sol)}  max residual: {summary['max_residual']:.3e} m^2  "
          f"max |h|: {summary['max_constraint_norm']:.3e} m")
    if sol.missing_markers:
        print(f"frames with missing markers (dropped from the fit): {len(sol.missing_markers)}")
    if sol.failed_frames:
        print(f"failed frames (interpolated): {sol.failed_frames}")
    if args.truth:
        t_true, q_true = xio.read_q(args.truth, chain)
        if len(t_true) != len(sol):
            raise ExobenchError("ground-truth file has a different number of frames")
        ps = _ps_index(chain)
        err = float(np.abs(sol.q[:, ps] - q_true[:, ps]).max())
        summary["max_ps_error_rad"] = err
        print(f"max PS error vs ground truth: {err:.3e} rad")
    _dump_json(run.file("ik_summary.json"), summary)
    run.finish()
    return 0


def cmd_id(args) -> int:
    chain, model_path = _model(args)
    t, q = xio.read_q(args.q_file, chain)
    run = Run(args, "id")
    run.inputs += [p for p in (model_path, Path(args.q_file)) if p]
    run.options = {"smoothing_window": args.smoothing_window}
    part = default_partition(chain)
    # file values are rounded through degrees; re-close before differentiating
    q = np.array([solve_closure(chain, qk, part) for qk in q])
    rate = args.sample_rate
    sol = IkSolution(t, q, np.zeros(len(t)), np.zeros(len(t)))
    sol = differentiate(chain, sol, rate, smoothing_window=args.smoothing_window, partition=part)
    series = inverse_dynamics_series(chain, sol, partition=part)
    power = joint_power(series, sol.qd)
    ps = _ps_index(chain)
    xio.write_torques(run.file("torques.csv"), series.t, series.Q, series.lam)
    xio.write_power(run.file("power.csv"), power.t, power.P, power.total)
    angle = np.degrees(sol.q[:, ps])
    torque = -series.Q[:, ps]  # pronation-positive, as reported by the servos
    xio.write_series(run.file("ps_series.csv"), ["t", "angle_deg", "torque_nm", "power_w"],
                     [series.t, angle, torque, power.P[:, ps]])
    e_total = energy_terms(power)
    e_ps = energy_terms(power, ps + 1)
    summary = {
        "label": args.label,
        "frames": len(t),
        "ps_angle_deg": _range_dict(angle, "deg"),
        "ps_torque_nm": _range_dict(torque, "N.m"),
        "ps_peak_power_w": float(np.abs(power.P[:, ps]).max()),
        "energy_j": {"total_abs": e_total.absolute, "total_signed": e_total.signed,
                     "ps_abs": e_ps.absolute, "ps_signed": e_ps.signed},
        "max_constraint_norm": float(max(np.abs(loop_constraints(chain, qk)).max() for qk in sol.q)),
    }
    _dump_json(run.file(ID_SUMMARY), summary)
    tr = summary["ps_torque_nm"]
    print(f"PS torque: min {tr['min']:.4f}  max {tr['max']:.4f}  range {tr['range']:.4f} N.m")
    print(f"PS energy: {e_ps.absolute:.4f} J (|P| integral), net work {e_ps.signed:.4f} J")
    run.finish()
    return 0


def split_repetitions(angle: np.ndarray) -> list[slice]:
    """Cycles between successive upward zero crossings; the whole trial if fewer than two."""
    up = [k for k in range(1, len(angle)) if angle[k - 1] < 0.0 <= angle[k]]
    if len(up) < 2:
        return [slice(0, len(angle))]
    return [slice(a, b) for a, b in zip(up[:-1], up[1:])]


def cmd_decode(args) -> int:
    trial = parse_trial_log(args.log_file)
    samples = decode_trial(trial)
    run = Run(args, "decode")
    run.inputs.append(Path(args.log_file))
    xio.write_decoded(run.file("decoded.csv"), samples)
    if not samples:
        _dump_json(run.file(DECODE_SUMMARY), {"metadata": trial.metadata, "samples": 0, "repetitions": []})
        print("no samples")
        run.finish()
        return 0
    angle = np.array([s.angle for s in samples])
    torque = np.array([s.torque for s in samples])
    reps = []
    for sl in split_repetitions(angle):
        reps.append({"angle_min": float(angle[sl].min()), "angle_max": float(angle[sl].max()),
                     "angle_range": float(angle[sl].max() - angle[sl].min()),
                     "torque_min": float(torque[sl].min()), "torque_max": float(torque[sl].max())})
    summary = {
        "metadata": trial.metadata,
        "samples": len(samples),
        "angle_deg": _range_dict(angle, "deg"),
        "torque_nm": _range_dict(torque, "N.m"),
        "over_range_samples": sum(s.over_range for s in samples),
        "repetitions": reps,
    }
    _dump_json(run.file(DECODE_SUMMARY), summary)
    a, tq = summary["angle_deg"], summary["torque_nm"]
    print(f"ROM: {a['range']:.2f} deg ({a['min']:.2f} to {a['max']:.2f})")
    print(f"torque: min {tq['min']:.4f}  max {tq['max']:.4f}  range {tq['range']:.4f} N.m")
    run.finish()
    return 0


def _fixture_dir(kind: str) -> Path:
    return Path(str(resources.files("exobench").joinpath("data", "fixtures", f"published_{kind}")))


def cmd_report(args) -> int:
    sim_dir = _fixture_dir("sim") if args.sim == PUBLISHED else Path(args.sim)
    exp_dirs = [_fixture_dir("exp") if e == PUBLISHED else Path(e) for e in args.exp]
    for d in [sim_dir, *exp_dirs]:
        if not d.is_dir():
            raise FileNotFoundError(f"{d}: not a directory")
    sim = load_sim_dir(sim_dir)
    exp = load_exp_dirs(exp_dirs)
    rep = build_report(sim, exp, reference=args.reference, precision=args.precision)
    run = Run(args, "report")
    for d in [sim_dir, *exp_dirs]:
        run.inputs += sorted(p for p in d.iterdir() if p.suffix in (".csv", ".json") and p.name != "manifest.json")
    run.options = {"reference": args.reference, "precision": args.precision}
    run.file("report.json").write_text(rep.to_json())
    text = rep.render_text()
    run.file("report.txt").write_text(text)
    print(text, end="")
    run.finish()
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="exobench", description="Upper-limb prosthesis test-bench toolkit")
    p.add_argument("--version", action="version", version=f"exobench {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, outputs=True):
        sp.add_argument("--model", help="model config (YAML); default: bundled model")
        if outputs:
            sp.add_argument("--out", default="runs", help="base output directory")
            sp.add_argument("--run-name", help="run directory name (default: UTC timestamp)")

    sp = sub.add_parser("validate", help="validate a model config")
    common(sp, outputs=False)
    sp.set_defaults(func=cmd_validate)

    sp = sub.add_parser("synth", help="synthesize a PS sweep (markers + ground truth)")
    common(sp)
    sp.add_argument("--amplitude-pron", type=float, default=71.05, help="deg")
    sp.add_argument("--amplitude-sup", type=float, default=85.26, help="deg")
    sp.add_argument("--speed", type=float, default=11.1, help="RPM")
    sp.add_argument("--duration", type=float, help="s (default: one cycle)")
    sp.add_argument("--sample-rate", type=float, default=100.0, help="Hz")
    sp.add_argument("--noise-sd", type=float, default=0.0, help="marker noise SD, m")
    sp.add_argument("--seed", type=int, default=42)
    sp.add_argument("--servo-log", action="store_true", help="also emit an encoded servo log")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("ik", help="inverse kinematics of a marker file")
    common(sp)
    sp.add_argument("markers")
    sp.add_argument("--truth", help="ground-truth q file for an error summary")
    sp.add_argument("--policy", choices=("abort", "interpolate"), default="abort")
    sp.add_argument("--cold-start", action="store_true", help="solve frames independently")
    sp.add_argument("--workers", type=int, default=1)
    sp.set_defaults(func=cmd_ik)

    sp = sub.add_parser("id", help="inverse dynamics, power and energy from a q file")
    common(sp)
    sp.add_argument("q_file")
    sp.add_argument("--smoothing-window", type=int, default=None, help="odd moving-average window")
    sp.add_argument("--sample-rate", type=float, default=None, help="Hz (default: from file)")
    sp.add_argument("--label", default="sim", help="subject label used in reports")
    sp.set_defaults(func=cmd_id)

    sp = sub.add_parser("decode", help="decode a servo trial log")
    sp.add_argument("log_file")
    sp.add_argument("--out", default="runs")
    sp.add_argument("--run-name")
    sp.set_defaults(func=cmd_decode)

    sp = sub.add_parser("report", help="evaluation report from result directories")
    sp.add_argument("sim", help=f"simulated results directory or '{PUBLISHED}'")
    sp.add_argument("exp", nargs="*", help=f"experimental result directories or '{PUBLISHED}'")
    sp.add_argument("--reference", choices=("simulated", "experimental", "both"), default="both")
    sp.add_argument("--precision", type=int, default=2, help="decimals used for comparisons")
    sp.add_argument("--out", default="runs")
    sp.add_argument("--run-name")
    sp.set_defaults(func=cmd_report)
    return p


def main(argv=None) -> int:
    level = os.environ.get("EXOBENCH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ExobenchError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
