"""Evaluation report: simulated vs experimental ROM and PS torque.

Inputs are either the bundled transcribed tables or summaries written by
the ``id`` and ``decode`` commands. Everything is computed at full
precision; comparisons between rounded published figures use the rounded
values (``precision`` decimals), and both numbers are kept in the JSON.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path

from . import __version__
from .analysis import (
    AggregateStats,
    RangeStats,
    UncertaintyInterval,
    aggregate,
    band,
    interval_overlap,
    percent_difference,
    reliability_alpha,
)
from .errors import AnalysisError

REFERENCES = ("simulated", "experimental", "both")
SIZING_GAP_PCT = 5.0  # a max-vs-average gap below this favours max-based sizing
ID_SUMMARY = "id_summary.json"
DECODE_SUMMARY = "decode_summary.json"


@dataclass(frozen=True)
class SubjectResult:
    label: str
    angle: RangeStats | None
    torque: RangeStats | None


@dataclass(frozen=True)
class SimResults:
    subjects: tuple[SubjectResult, ...]
    source: str = "computed"
    published: dict = field(default_factory=dict)  # column -> AggregateStats


@dataclass(frozen=True)
class TrialResult:
    label: str
    session: str
    minimum: AggregateStats
    maximum: AggregateStats
    range: AggregateStats
    repetitions: dict | None = None  # {"minimum": [...], "maximum": [...]}
    note: str = ""


@dataclass(frozen=True)
class ExpResults:
    trials: tuple[TrialResult, ...]
    rom: AggregateStats | None = None
    source: str = "computed"
    published_alpha: dict = field(default_factory=dict)  # (row, label_a, label_b) -> float
    published_average_range: AggregateStats | None = None


# -------------------------------------------------------------- loaders

TABLE_COLUMNS = ("table", "row", "column", "cell", "value", "unit", "note")


def _cells(text: str) -> list[dict]:
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.startswith("#")]
    rows = list(csv.DictReader(io.StringIO("\n".join(lines))))
    if not rows:
        raise AnalysisError("transcribed table is empty")
    missing = [c for c in ("row", "column", "value") if c not in rows[0]]
    if missing:
        raise AnalysisError(f"transcribed table lacks column(s) {missing}; expected {','.join(TABLE_COLUMNS)}")
    for k, r in enumerate(rows, start=2):
        try:
            r["value"] = float(r["value"])
        except (TypeError, ValueError):
            raise AnalysisError(f"transcribed table row {k}: value {r['value']!r} is not a number") from None
    return rows


def _fixture_text(name: str) -> str:
    return resources.files("exobench").joinpath("data", "fixtures", name).read_text()


def sim_from_table(text: str) -> SimResults:
    """Simulated per-subject extremes from a transcribed long-format table."""
    subjects: dict[str, dict] = {}
    summary: dict[str, dict] = {}
    for c in _cells(text):
        value = c["value"]
        if c["row"] == "mean_sd":
            col, stat = c["column"].rsplit(".", 1)
            summary.setdefault(col, {})[stat] = value
        else:
            subjects.setdefault(c["row"], {})[c["column"]] = value
    out = []
    for label, cols in subjects.items():
        angle = torque = None
        if {"angle_min", "angle_max"} <= cols.keys():
            angle = RangeStats(cols["angle_min"], cols["angle_max"],
                               cols.get("angle_range", cols["angle_max"] - cols["angle_min"]), "deg")
        if {"torque_min", "torque_max"} <= cols.keys():
            torque = RangeStats(cols["torque_min"], cols["torque_max"],
                                cols.get("torque_range", cols["torque_max"] - cols["torque_min"]), "N.m")
        out.append(SubjectResult(label, angle, torque))
    published = {col: AggregateStats(v["mean"], v.get("sd"), len(out), "transcribed")
                 for col, v in summary.items()}
    return SimResults(tuple(out), "transcribed", published)


def exp_from_tables(trials_text: str, rom_text: str | None = None) -> ExpResults:
    """Experimental trials and reliability coefficients from transcribed tables."""
    per_trial: dict[str, dict] = {}
    notes: dict[str, str] = {}
    alpha: dict = {}
    avg: dict = {}
    row_key = {"minimum_supination": "minimum", "maximum_pronation": "maximum", "range": "range"}
    for c in _cells(trials_text):
        value = c["value"]
        if c["row"] == "average_range":
            avg[c["column"]] = value
            continue
        row = row_key[c["row"]]
        head, stat = c["column"].split(".", 1)
        if head == "alpha":
            a, b = stat.split("&")
            alpha[(row, a, b)] = value
            continue
        per_trial.setdefault(head, {}).setdefault(row, {})[stat] = value
        if c.get("note"):
            notes[head] = c["note"]
    trials = []
    for label, rows in per_trial.items():
        stats = {r: AggregateStats(v["mean"], v.get("sd"), None, "transcribed") for r, v in rows.items()}
        # trials 1 and 2 share a day, trial 3 is a later session
        session = "session2" if label == "trial3" else "session1"
        trials.append(TrialResult(label, session, stats["minimum"], stats["maximum"], stats["range"],
                                  None, notes.get(label, "")))
    rom = None
    if rom_text is not None:
        r = {c["column"]: c["value"] for c in _cells(rom_text) if c["row"] == "rom"}
        rom = AggregateStats(r["mean"], r.get("sd"), None, "transcribed")
    average = AggregateStats(avg["mean"], avg.get("sd"), None, "transcribed") if avg else None
    return ExpResults(tuple(trials), rom, "transcribed", alpha, average)


def published_sim() -> SimResults:
    return sim_from_table(_fixture_text("published_sim/subjects.csv"))


def published_exp() -> ExpResults:
    return exp_from_tables(_fixture_text("published_exp/trials.csv"),
                           _fixture_text("published_exp/rom.csv"))


def _range_from(d: dict | None, units: str) -> RangeStats | None:
    if d is None:
        return None
    return RangeStats(d["min"], d["max"], d["range"], units)


def subject_from_id_summary(summary: dict, label: str) -> SubjectResult:
    return SubjectResult(label, _range_from(summary.get("ps_angle_deg"), "deg"),
                         _range_from(summary.get("ps_torque_nm"), "N.m"))


def _agg_or_single(values: list[float]) -> AggregateStats:
    if len(values) >= 2:
        return aggregate(values)
    if len(values) == 1:
        return AggregateStats(values[0], None, 1)
    raise AnalysisError("trial has no repetitions")


def trial_from_decode_summary(summary: dict, label: str) -> tuple[TrialResult, list[float]]:
    reps = summary["repetitions"]
    mins = [r["torque_min"] for r in reps]
    maxs = [r["torque_max"] for r in reps]
    rngs = [r["torque_max"] - r["torque_min"] for r in reps]
    roms = [r["angle_range"] for r in reps]
    meta = summary.get("metadata", {})
    trial = TrialResult(str(meta.get("trial_label", label)), str(meta.get("session_id", label)),
                        _agg_or_single(mins), _agg_or_single(maxs), _agg_or_single(rngs),
                        {"minimum": mins, "maximum": maxs})
    return trial, roms


def load_sim_dir(path: Path) -> SimResults:
    path = Path(path)
    if (path / "subjects.csv").exists():
        return sim_from_table((path / "subjects.csv").read_text())
    if (path / ID_SUMMARY).exists():
        summary = json.loads((path / ID_SUMMARY).read_text())
        return SimResults((subject_from_id_summary(summary, str(summary.get("label", "sim"))),))
    raise FileNotFoundError(f"{path}: no subjects.csv or {ID_SUMMARY}")


def load_exp_dirs(paths: list[Path]) -> ExpResults | None:
    if not paths:
        return None
    paths = [Path(p) for p in paths]
    if len(paths) == 1 and (paths[0] / "trials.csv").exists():
        rom = paths[0] / "rom.csv"
        return exp_from_tables((paths[0] / "trials.csv").read_text(),
                               rom.read_text() if rom.exists() else None)
    trials, roms = [], []
    for p in paths:
        f = p / DECODE_SUMMARY
        if not f.exists():
            raise FileNotFoundError(f"{p}: no {DECODE_SUMMARY}")
        trial, rep_roms = trial_from_decode_summary(json.loads(f.read_text()), p.name)
        trials.append(trial)
        roms.extend(rep_roms)
    return ExpResults(tuple(trials), _agg_or_single(roms) if roms else None)


# --------------------------------------------------------------- report

def _r(x: float | None, precision: int) -> float | None:
    return None if x is None else round(x, precision)


def _pct_entry(name: str, sim_label: str, sim_value: float, exp_label: str, exp_value: float,
               reference: str, precision: int) -> list[dict]:
    out = []
    conventions = ("simulated", "experimental") if reference == "both" else (reference,)
    for conv in conventions:
        ref, val = (sim_value, exp_value) if conv == "simulated" else (exp_value, sim_value)
        ref_label, val_label = (sim_label, exp_label) if conv == "simulated" else (exp_label, sim_label)
        out.append({
            "name": name,
            "reference_convention": conv,
            "reference": {"label": ref_label, "value": ref, "compared": _r(ref, precision)},
            "value": {"label": val_label, "value": val, "compared": _r(val, precision)},
            "percent": percent_difference(_r(ref, precision), _r(val, precision)),
            "percent_full_precision": percent_difference(ref, val),
        })
    return out


def _aggregate_block(values: list[float]) -> dict:
    if len(values) < 2:
        return {"status": f"unavailable (n<2, n={len(values)})"}
    return aggregate(values).as_dict()


@dataclass
class EvaluationReport:
    data: dict

    def to_json(self) -> str:
        return json.dumps(self.data, indent=2, sort_keys=True, allow_nan=False) + "\n"

    def render_text(self) -> str:
        return render_text(self.data)


def build_report(sim: SimResults | None, exp: ExpResults | None = None, *,
                 reference: str = "both", precision: int = 2) -> EvaluationReport:
    if reference not in REFERENCES:
        raise AnalysisError(f"reference must be one of {REFERENCES}")
    if sim is None and exp is None:
        raise AnalysisError("report needs at least one result set")
    data: dict = {
        "header": {
            "tool": "exobench",
            "version": __version__,
            "alpha_method": "two-item Cronbach coefficient (interpretation of the reliability coefficient)",
            "sd_denominator": "n-1",
            "reference_convention": reference,
            "comparison_precision": precision,
        },
    }

    sim_block = None
    if sim is not None:
        angles = [s.angle for s in sim.subjects if s.angle is not None]
        torques = [s.torque for s in sim.subjects if s.torque is not None]
        if angles and torques and len(angles) != len(torques):
            raise AnalysisError(f"inconsistent subject counts: {len(angles)} with angles, "
                                f"{len(torques)} with torques")
        sim_block = {
            "provenance": sim.source,
            "n_subjects": len(sim.subjects),
            "subjects": [{"label": s.label,
                          "angle": None if s.angle is None else s.angle.as_dict(),
                          "torque": None if s.torque is None else s.torque.as_dict()}
                         for s in sim.subjects],
            "aggregate": {},
        }
        cols = {"angle_min": [a.min for a in angles], "angle_max": [a.max for a in angles],
                "angle_range": [a.range for a in angles], "torque_min": [t.min for t in torques],
                "torque_max": [t.max for t in torques], "torque_range": [t.range for t in torques]}
        for col, vals in cols.items():
            if vals:
                sim_block["aggregate"][col] = _aggregate_block(vals)
        if sim.published:
            sim_block["published_summary"] = {}
            for col, stats in sorted(sim.published.items()):
                entry = stats.as_dict()
                got = sim_block["aggregate"].get(col, {})
                if "mean" in got:
                    entry["delta_mean"] = got["mean"] - stats.mean
                    if stats.sd is not None:
                        entry["delta_sd"] = got["sd"] - stats.sd
                sim_block["published_summary"][col] = entry
        data["simulated"] = sim_block

    exp_block = None
    if exp is not None:
        exp_block = {
            "provenance": exp.source,
            "trials": [{"label": t.label, "session": t.session, "minimum": t.minimum.as_dict(),
                        "maximum": t.maximum.as_dict(), "range": t.range.as_dict(),
                        "note": t.note}
                       for t in exp.trials],
            "rom": None if exp.rom is None else exp.rom.as_dict(),
            "reliability": _reliability(exp),
        }
        if exp.trials:
            means = [t.range.mean for t in exp.trials]
            exp_block["average_range"] = {"mean": sum(means) / len(means), "n_trials": len(means),
                                          "provenance": "computed"}
        if exp.published_average_range is not None:
            exp_block["published_average_range"] = exp.published_average_range.as_dict()
        data["experimental"] = exp_block

    data["comparisons"] = _comparisons(sim, sim_block, exp, exp_block, reference, precision)
    return EvaluationReport(data)


def _reliability(exp: ExpResults) -> list[dict]:
    out = []
    for a, b in combinations(exp.trials, 2):
        kind = "intra-session" if a.session == b.session else "inter-session"
        for row in ("minimum", "maximum"):
            entry = {"row": row, "pair": [a.label, b.label], "kind": kind}
            reps_a = (a.repetitions or {}).get(row)
            reps_b = (b.repetitions or {}).get(row)
            published = exp.published_alpha.get((row, a.label, b.label))
            if reps_a and reps_b and len(reps_a) == len(reps_b) and len(reps_a) >= 3:
                try:
                    res = reliability_alpha(reps_a, reps_b, (a.label, b.label))
                    entry.update(alpha=res.alpha, band=res.band, provenance="computed")
                except AnalysisError as exc:
                    entry.update(alpha=None, band=None, provenance=f"unavailable ({exc})")
            elif published is not None:
                entry.update(alpha=published, band=band(published), provenance="transcribed")
            else:
                entry.update(alpha=None, band=None,
                             provenance="unavailable (needs >= 3 paired repetitions)")
            out.append(entry)
    return out


def _comparisons(sim, sim_block, exp, exp_block, reference, precision) -> dict:
    if sim_block is None or exp_block is None:
        return {"status": "unavailable (needs both simulated and experimental results)"}
    out: dict = {"percent_differences": [], "interval_overlap": None, "sizing": None}
    pct = out["percent_differences"]
    agg = sim_block["aggregate"]
    torque_ranges = [s.torque.range for s in sim.subjects if s.torque is not None]
    angle_ranges = [s.angle.range for s in sim.subjects if s.angle is not None]

    sim_torque_mean = sum(torque_ranges) / len(torque_ranges) if torque_ranges else None
    exp_avg = exp_block.get("average_range", {}).get("mean")
    if sim_torque_mean is not None and exp_avg is not None:
        pct += _pct_entry("torque_range_mean", "simulated mean torque range", sim_torque_mean,
                          "experimental average torque range", exp_avg, reference, precision)
        sim_max = max(torque_ranges)
        pct += _pct_entry("torque_range_max_vs_average", "simulated maximum torque range", sim_max,
                          "experimental average torque range", exp_avg, reference, precision)
        for t in exp.trials:
            pct += _pct_entry(f"torque_range_{t.label}", "simulated mean torque range", sim_torque_mean,
                              f"{t.label} torque range", t.range.mean, reference, precision)
        gap = percent_difference(round(sim_max, precision), round(exp_avg, precision))
        out["sizing"] = {
            "joint": "pronation_supination",
            "peak_vs_average_ratio": sim_max / sim_torque_mean,
            "max_simulated_range": sim_max,
            "mean_simulated_range": sim_torque_mean,
            "experimental_average_range": exp_avg,
            "max_vs_experimental_gap_percent": gap,
            "max_based_sizing": gap <= SIZING_GAP_PCT,
        }

    if angle_ranges and exp.rom is not None:
        sim_rom = sum(angle_ranges) / len(angle_ranges)
        pct += _pct_entry("rom", "simulated mean ROM", sim_rom, "experimental mean ROM",
                          exp.rom.mean, reference, precision)
        sim_rom_agg = agg.get("angle_range", {})
        if "sd" in sim_rom_agg and exp.rom.sd is not None:
            a = UncertaintyInterval.from_mean_sd(sim_rom_agg["mean"], sim_rom_agg["sd"])
            b = UncertaintyInterval.from_mean_sd(exp.rom.mean, exp.rom.sd)
            ov = interval_overlap(a, b)
            out["interval_overlap"] = {
                "simulated": [a.lo, a.hi],
                "experimental": [b.lo, b.hi],
                "overlap": None if ov is None else [ov.lo, ov.hi],
                "overlap_rounded": None if ov is None else [round(ov.lo, precision), round(ov.hi, precision)],
            }
        else:
            out["interval_overlap"] = {"status": "unavailable (standard deviation missing)"}
    return out


# ------------------------------------------------------------ rendering

def _f(x, precision=2) -> str:
    return "n/a" if x is None else f"{x:.{precision}f}"


def _msd(d: dict | None, precision=2) -> str:
    if not d or "mean" not in d:
        return (d or {}).get("status", "n/a")
    sd = d.get("sd")
    return f"{_f(d['mean'], precision)} ± {_f(sd, precision)}" if sd is not None else _f(d["mean"], precision)


def render_text(data: dict) -> str:
    p = data["header"]["comparison_precision"]
    lines = [f"exobench evaluation report (v{data['header']['version']})",
             f"alpha: {data['header']['alpha_method']}; SD denominator n-1", ""]
    sim = data.get("simulated")
    if sim:
        lines.append(f"Simulated PS task ({sim['n_subjects']} subject(s), {sim['provenance']})")
        lines.append(f"{'Subject':>8} {'Min':>9} {'Max':>9} {'Range':>9} | {'Min':>7} {'Max':>7} {'Range':>7}")
        lines.append(f"{'':>8} {'[deg]':>9} {'[deg]':>9} {'[deg]':>9} | {'[N.m]':>7} {'[N.m]':>7} {'[N.m]':>7}")
        for s in sim["subjects"]:
            a = s["angle"] or {}
            t = s["torque"] or {}
            lines.append(f"{s['label']:>8} {_f(a.get('min'), p):>9} {_f(a.get('max'), p):>9} "
                         f"{_f(a.get('range'), p):>9} | {_f(t.get('min'), p):>7} {_f(t.get('max'), p):>7} "
                         f"{_f(t.get('range'), p):>7}")
        agg = sim["aggregate"]
        lines.append("Mean ± SD: " + "; ".join(f"{k} {_msd(v, p)}" for k, v in agg.items()))
        lines.append("")
    exp = data.get("experimental")
    if exp:
        lines.append(f"Experimental PS torque ({exp['provenance']})")
        labels = [t["label"] for t in exp["trials"]]
        lines.append(f"{'':>10} " + " ".join(f"{lab:>16}" for lab in labels))
        for row in ("minimum", "maximum", "range"):
            lines.append(f"{row:>10} " + " ".join(f"{_msd(t[row], p):>16}" for t in exp["trials"]))
        if "average_range" in exp:
            lines.append(f"average range {_f(exp['average_range']['mean'], p)} N.m")
        if exp.get("rom"):
            lines.append(f"ROM {_msd(exp['rom'], p)} deg")
        for t in exp["trials"]:
            if t.get("note"):
                lines.append(f"note ({t['label']}): {t['note']}")
        lines.append("Reliability (alpha)")
        if not exp["reliability"]:
            lines.append("  unavailable (needs at least two trials)")
        for r in exp["reliability"]:
            lines.append(f"  {r['row']:>8} {r['pair'][0]} & {r['pair'][1]} [{r['kind']}]: "
                         f"{_f(r['alpha'], p)} {r['band'] or ''} ({r['provenance']})")
        lines.append("")
    comp = data["comparisons"]
    if "status" in comp:
        lines.append(f"Comparisons: {comp['status']}")
    else:
        lines.append("Percent differences")
        for e in comp["percent_differences"]:
            lines.append(f"  {e['name']} [ref={e['reference_convention']}]: "
                         f"{_f(e['value']['compared'], p)} vs {_f(e['reference']['compared'], p)} -> "
                         f"{e['percent']:.2f}% (full precision {e['percent_full_precision']:.2f}%)")
        ov = comp.get("interval_overlap")
        if ov and "status" not in ov:
            o = ov["overlap_rounded"]
            lines.append(f"ROM uncertainty overlap: {'none' if o is None else f'[{o[0]:.2f}, {o[1]:.2f}]'} deg")
        elif ov:
            lines.append(f"ROM uncertainty overlap: {ov['status']}")
        sz = comp.get("sizing")
        if sz:
            lines.append(f"Sizing: peak/average torque range {sz['peak_vs_average_ratio']:.2f}; "
                         f"max vs experimental gap {sz['max_vs_experimental_gap_percent']:.2f}%"
                         + ("; size on the maximum simulated torque" if sz["max_based_sizing"] else ""))
    return "\n".join(lines) + "\n"
