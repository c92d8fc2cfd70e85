"""Kinematic-chain description, inertial parameters and model config I/O.

Coordinates are numbered 1..n_coords in the config and in
:func:`coordinate_index`; every array in the package is 0-based, so
coordinate ``q19`` lives at ``q[18]``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from itertools import combinations
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .errors import ModelConfigError, ModelValidationError, UnknownCoordinateError

AXES = ("X", "Y", "Z")
KINDS = ("rotation", "translation")
BASE = "base"

EXPECTED_SEGMENTS = 7
EXPECTED_COORDS = 23
EXPECTED_JOINT_COUNT = 9  # including the cut HR joint
PROTOTYPE_MASS = 3.5  # kg, physical prototype
PROTOTYPE_SEGMENTS = ("humerus", "ulna", "radius", "hand")

Vec3 = tuple[float, float, float]
Mat3 = tuple[Vec3, Vec3, Vec3]


def _vec3(value, what: str) -> Vec3:
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ModelConfigError(f"{what}: expected 3 numbers, got {value!r}") from exc
    if len(out) != 3:
        raise ModelConfigError(f"{what}: expected 3 numbers, got {len(out)}")
    return out


def _inertia(value, what: str) -> Mat3:
    try:
        flat = [float(v) for v in np.asarray(value, dtype=float).ravel()]
    except (TypeError, ValueError) as exc:
        raise ModelConfigError(f"{what}: bad inertia {value!r}") from exc
    if len(flat) == 6:
        ixx, iyy, izz, ixy, ixz, iyz = flat
        return ((ixx, ixy, ixz), (ixy, iyy, iyz), (ixz, iyz, izz))
    if len(flat) == 9:
        return (tuple(flat[0:3]), tuple(flat[3:6]), tuple(flat[6:9]))
    raise ModelConfigError(f"{what}: inertia needs 6 or 9 entries, got {len(flat)}")


@dataclass(frozen=True)
class SegmentInertia:
    name: str
    mass: float
    com: Vec3 = (0.0, 0.0, 0.0)
    inertia: Mat3 = ((0.0, 0.0, 0.0), (0.0, 0.0, 0.0), (0.0, 0.0, 0.0))
    provenance: str = "assumed"

    @property
    def inertia_matrix(self) -> np.ndarray:
        return np.array(self.inertia, dtype=float)


@dataclass(frozen=True)
class Dof:
    q: int
    axis: str
    kind: str
    label: str
    limits: tuple[float, float] | None = None  # SI: rad or m


@dataclass(frozen=True)
class JointSpec:
    name: str
    parent: str
    child: str
    dofs: tuple[Dof, ...]
    anchor: Vec3 = (0.0, 0.0, 0.0)
    provenance: str = "assumed"


@dataclass(frozen=True)
class LoopCut:
    name: str
    body_a: str
    body_b: str
    anchor_a: Vec3
    anchor_b: Vec3
    n_constraints: int = 3
    candidate_dependents: tuple[int, ...] = ()


@dataclass(frozen=True)
class MarkerAttachment:
    name: str
    segment: str
    local_position: Vec3


@dataclass(frozen=True)
class KinematicChain:
    segments: tuple[SegmentInertia, ...]
    joints: tuple[JointSpec, ...]
    loop_cuts: tuple[LoopCut, ...] = ()
    markers: tuple[MarkerAttachment, ...] = ()
    gravity: Vec3 = (0.0, -9.81, 0.0)
    n_coords: int = EXPECTED_COORDS
    name: str = "model"
    provenance: str = "assumed"

    def segment(self, name: str) -> SegmentInertia:
        for seg in self.segments:
            if seg.name == name:
                return seg
        raise KeyError(name)

    @property
    def segment_names(self) -> list[str]:
        return [s.name for s in self.segments]

    @property
    def marker_names(self) -> list[str]:
        return [m.name for m in self.markers]

    def dofs(self) -> list[tuple[JointSpec, Dof]]:
        return [(j, d) for j in self.joints for d in j.dofs]

    def dof(self, q: int) -> Dof:
        for _, d in self.dofs():
            if d.q == q:
                return d
        raise UnknownCoordinateError(f"no coordinate q{q}")

    def rotational_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_coords, dtype=bool)
        for _, d in self.dofs():
            if 1 <= d.q <= self.n_coords:
                mask[d.q - 1] = d.kind == "rotation"
        return mask

    def with_scaled_masses(self, factor: float) -> "KinematicChain":
        """Scale every mass and inertia (the dynamic parameters) by ``factor``."""
        segs = tuple(
            SegmentInertia(
                s.name,
                s.mass * factor,
                s.com,
                tuple(tuple(v * factor for v in row) for row in s.inertia),
                s.provenance,
            )
            for s in self.segments
        )
        return KinematicChain(segs, self.joints, self.loop_cuts, self.markers,
                              self.gravity, self.n_coords, self.name, self.provenance)

    def with_gravity(self, gravity: Sequence[float]) -> "KinematicChain":
        return KinematicChain(self.segments, self.joints, self.loop_cuts, self.markers,
                              _vec3(gravity, "gravity"), self.n_coords, self.name,
                              self.provenance)


def _readonly(a) -> np.ndarray:
    arr = np.array(a, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class GeneralizedState:
    """q, q-dot and q-double-dot at one instant (SI units, 0-based arrays)."""

    t: float
    q: np.ndarray
    qd: np.ndarray = None
    qdd: np.ndarray = None

    def __post_init__(self):
        q = _readonly(self.q)
        n = q.shape[0]
        qd = _readonly(np.zeros(n) if self.qd is None else self.qd)
        qdd = _readonly(np.zeros(n) if self.qdd is None else self.qdd)
        if q.ndim != 1 or qd.shape != q.shape or qdd.shape != q.shape:
            raise ValueError("q, qd and qdd must be vectors of equal length")
        if not (np.all(np.isfinite(q)) and np.all(np.isfinite(qd))
                and np.all(np.isfinite(qdd)) and math.isfinite(self.t)):
            raise ValueError("state contains non-finite values")
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "qd", qd)
        object.__setattr__(self, "qdd", qdd)


@dataclass(frozen=True)
class ExternalLoads:
    """Per-segment force (at the centre of mass) and torque, world frame."""

    forces: dict = field(default_factory=dict)
    torques: dict = field(default_factory=dict)

    def __post_init__(self):
        for table in (self.forces, self.torques):
            for name, vec in table.items():
                v = np.asarray(vec, dtype=float)
                if v.shape != (3,) or not np.all(np.isfinite(v)):
                    raise ValueError(f"load on {name!r} must be a finite 3-vector")


# ---------------------------------------------------------------- validation

@dataclass(frozen=True)
class Violation:
    location: str
    message: str

    def __str__(self):
        return f"{self.location}: {self.message}"


def _check_inertia(seg: SegmentInertia, out: list[Violation]) -> None:
    loc = f"segments[{seg.name}]"
    if not math.isfinite(seg.mass) or seg.mass < 0:
        out.append(Violation(loc, f"mass must be >= 0, got {seg.mass}"))
    inertia = seg.inertia_matrix
    if not np.all(np.isfinite(inertia)) or not np.all(np.isfinite(seg.com)):
        out.append(Violation(loc, "non-finite inertial parameters"))
        return
    scale = max(1.0, float(np.abs(inertia).max()))
    if np.abs(inertia - inertia.T).max() > 1e-12 * scale:
        out.append(Violation(loc, "inertia tensor not symmetric"))
        return
    moments = np.linalg.eigvalsh(inertia)
    tol = 1e-12 * scale
    if moments.min() < -tol:
        out.append(Violation(loc, "inertia tensor not positive semi-definite"))
    a, b, c = moments
    for (i, j, k), (x, y, z) in zip(("123", "231", "312"), ((a, b, c), (b, c, a), (c, a, b))):
        if x + y < z - tol:
            out.append(Violation(loc, f"triangle inequality violated: I{i}+I{j} < I{k}"))


def validate_chain(chain: KinematicChain, *, expect_reference_topology: bool = True) -> list[Violation]:
    """Check every chain invariant; an empty list means the chain is valid.

    ``expect_reference_topology`` adds the 7-segment / 23-coordinate / single
    3-constraint cut checks on top of the generic structural ones.
    """
    out: list[Violation] = []
    names = [s.name for s in chain.segments]
    seg_set = set(names)

    for name in {n for n in names if names.count(n) > 1}:
        out.append(Violation(f"segments[{name}]", "duplicate segment name"))
    if BASE in seg_set:
        out.append(Violation("segments", f"'{BASE}' is reserved for the fixed world"))
    for seg in chain.segments:
        _check_inertia(seg, out)

    seen: dict[int, str] = {}
    incoming: dict[str, list[int]] = {}
    for ji, joint in enumerate(chain.joints):
        loc = f"joints[{joint.name}]"
        if joint.parent != BASE and joint.parent not in seg_set:
            out.append(Violation(loc, f"unknown parent segment {joint.parent!r}"))
        if joint.child not in seg_set:
            out.append(Violation(loc, f"unknown child segment {joint.child!r}"))
        if not joint.dofs:
            out.append(Violation(loc, "joint has no degrees of freedom"))
        for dof in joint.dofs:
            if dof.axis not in AXES:
                out.append(Violation(loc, f"q{dof.q}: unknown axis {dof.axis!r}"))
            if dof.kind not in KINDS:
                out.append(Violation(loc, f"q{dof.q}: unknown kind {dof.kind!r}"))
            if dof.q in seen:
                out.append(Violation(loc, f"duplicate coordinate index q{dof.q} (also in {seen[dof.q]})"))
            else:
                seen[dof.q] = joint.name
            if dof.limits is not None and dof.limits[0] > dof.limits[1]:
                out.append(Violation(loc, f"q{dof.q}: lower limit above upper limit"))
        incoming.setdefault(joint.child, []).append(ji)
        # within a joint, dof order must follow the coordinate numbering
        qs = [d.q for d in joint.dofs]
        if qs != sorted(qs):
            out.append(Violation(loc, "dof order does not follow coordinate numbering"))

    expected = set(range(1, chain.n_coords + 1))
    if set(seen) != expected:
        missing = sorted(expected - set(seen))
        extra = sorted(set(seen) - expected)
        out.append(Violation(
            "joints",
            f"n_coords mismatch: declared {chain.n_coords}, joints define {len(seen)} "
            f"(missing {missing}, unexpected {extra})",
        ))

    # tree structure: every joint group into a child is contiguous; no cycles
    for child, idx in incoming.items():
        if idx != list(range(idx[0], idx[-1] + 1)):
            out.append(Violation(f"joints[{child}]", "joints into the same child must be consecutive"))
    for seg in names:
        if seg not in incoming:
            out.append(Violation(f"segments[{seg}]", "segment is not reached by any joint"))
    parent_of = {}
    for joint in chain.joints:
        parent_of.setdefault(joint.child, joint.parent)
    for seg in names:
        cur, steps = seg, 0
        while cur in parent_of and steps <= len(names):
            cur = parent_of[cur]
            steps += 1
        if steps > len(names):
            out.append(Violation(f"segments[{seg}]", "joint graph has a cycle"))
        elif cur != BASE and seg in parent_of:
            out.append(Violation(f"segments[{seg}]", "segment is not connected to the base"))
    order = {}
    for i, joint in enumerate(chain.joints):
        order.setdefault(joint.child, i)
    for i, joint in enumerate(chain.joints):
        if joint.parent != BASE and joint.parent in order and order[joint.parent] > i:
            out.append(Violation(f"joints[{joint.name}]", "parent segment is defined after its child"))

    for cut in chain.loop_cuts:
        loc = f"loop_cuts[{cut.name}]"
        for body in (cut.body_a, cut.body_b):
            if body not in seg_set:
                out.append(Violation(loc, f"unknown segment {body!r}"))
        if cut.n_constraints != 3:
            out.append(Violation(loc, f"n_constraints must be 3 for a cut ball joint, got {cut.n_constraints}"))
        for q in cut.candidate_dependents:
            if q not in seen:
                out.append(Violation(loc, f"candidate dependent q{q} is not a coordinate"))

    mnames = [m.name for m in chain.markers]
    for name in {n for n in mnames if mnames.count(n) > 1}:
        out.append(Violation(f"markers[{name}]", "duplicate marker name"))
    for m in chain.markers:
        if m.segment not in seg_set:
            out.append(Violation(f"markers[{m.name}]", f"unknown segment {m.segment!r}"))

    if not all(math.isfinite(g) for g in chain.gravity):
        out.append(Violation("gravity", "non-finite gravity"))

    if expect_reference_topology:
        if len(chain.segments) != EXPECTED_SEGMENTS:
            out.append(Violation("segments", f"expected {EXPECTED_SEGMENTS} segments, got {len(chain.segments)}"))
        if chain.n_coords != EXPECTED_COORDS:
            out.append(Violation("n_coords", f"n_coords mismatch: expected {EXPECTED_COORDS}, got {chain.n_coords}"))
        if len(chain.loop_cuts) != 1:
            out.append(Violation("loop_cuts", f"expected exactly 1 loop cut, got {len(chain.loop_cuts)}"))
        if len(chain.joints) + len(chain.loop_cuts) != EXPECTED_JOINT_COUNT:
            out.append(Violation(
                "joints",
                f"expected {EXPECTED_JOINT_COUNT} joints including cuts, got "
                f"{len(chain.joints) + len(chain.loop_cuts)}",
            ))
    return out


# ------------------------------------------------------------ config parsing

def _parse_dof(raw: dict, where: str) -> Dof:
    try:
        q = int(raw["q"])
        axis = str(raw["axis"]).upper()
        kind = str(raw.get("kind", "rotation")).lower()
        label = str(raw.get("label", f"q{q}"))
    except (KeyError, TypeError, ValueError) as exc:
        raise ModelConfigError(f"{where}: malformed dof entry {raw!r}") from exc
    if axis not in AXES:
        raise ModelConfigError(f"{where}: q{q} has unknown axis {raw['axis']!r}")
    if kind not in KINDS:
        raise ModelConfigError(f"{where}: q{q} has unknown kind {kind!r}")
    limits = raw.get("limits")
    if limits is not None:
        lo, hi = (float(v) for v in limits)
        if kind == "rotation":
            lo, hi = math.radians(lo), math.radians(hi)
        limits = (lo, hi)
    return Dof(q, axis, kind, label, limits)


def parse_model(doc: dict) -> KinematicChain:
    """Build a chain from an already-decoded config mapping (no validation)."""
    if not isinstance(doc, dict):
        raise ModelConfigError("model document must be a mapping")
    for key in ("segments", "joints"):
        if key not in doc:
            raise ModelConfigError(f"missing section {key!r}")
    try:
        segments = tuple(
            SegmentInertia(
                name=str(s["name"]),
                mass=float(s["mass"]),
                com=_vec3(s.get("com", (0, 0, 0)), f"segment {s.get('name')} com"),
                inertia=_inertia(s.get("inertia", (0, 0, 0, 0, 0, 0)), f"segment {s.get('name')}"),
                provenance=str(s.get("provenance", "assumed")),
            )
            for s in doc["segments"]
        )
        joints = []
        for j in doc["joints"]:
            where = f"joint {j.get('name')}"
            joints.append(JointSpec(
                name=str(j["name"]),
                parent=str(j["parent"]),
                child=str(j["child"]),
                dofs=tuple(_parse_dof(d, where) for d in j["dofs"]),
                anchor=_vec3(j.get("anchor", (0, 0, 0)), f"{where} anchor"),
                provenance=str(j.get("provenance", "assumed")),
            ))
        cuts = tuple(
            LoopCut(
                name=str(c["name"]),
                body_a=str(c["body_a"]),
                body_b=str(c["body_b"]),
                anchor_a=_vec3(c["anchor_a"], f"cut {c.get('name')} anchor_a"),
                anchor_b=_vec3(c["anchor_b"], f"cut {c.get('name')} anchor_b"),
                n_constraints=int(c.get("n_constraints", 3)),
                candidate_dependents=tuple(int(v) for v in c.get("candidate_dependents", ())),
            )
            for c in doc.get("loop_cuts") or ()
        )
        markers = tuple(
            MarkerAttachment(str(m["name"]), str(m["segment"]),
                             _vec3(m["position"], f"marker {m.get('name')}"))
            for m in doc.get("markers") or ()
        )
    except (KeyError, TypeError) as exc:
        raise ModelConfigError(f"malformed model document: missing or bad field {exc}") from exc
    except ValueError as exc:
        raise ModelConfigError(f"malformed model document: {exc}") from exc

    n_coords = doc.get("n_coords")
    if n_coords is None:
        n_coords = sum(len(j.dofs) for j in joints)
    return KinematicChain(
        segments=segments,
        joints=tuple(joints),
        loop_cuts=cuts,
        markers=markers,
        gravity=_vec3(doc.get("gravity", (0.0, -9.81, 0.0)), "gravity"),
        n_coords=int(n_coords),
        name=str(doc.get("name", "model")),
        provenance=str(doc.get("provenance", "assumed")),
    )


def load_model(config_text: str, *, validate: bool = True,
               expect_reference_topology: bool = True) -> KinematicChain:
    """Parse a YAML model document into a validated chain."""
    try:
        doc = yaml.safe_load(config_text)
    except yaml.YAMLError as exc:
        raise ModelConfigError(f"cannot parse model document: {exc}") from exc
    chain = parse_model(doc)
    if validate:
        violations = validate_chain(chain, expect_reference_topology=expect_reference_topology)
        if violations:
            raise ModelValidationError(violations)
    return chain


def load_model_file(path, **kwargs) -> KinematicChain:
    return load_model(Path(path).read_text(), **kwargs)


def default_model_text() -> str:
    return resources.files("exobench").joinpath("data/default_model.yaml").read_text()


def default_model() -> KinematicChain:
    return load_model(default_model_text())


def dump_model(chain: KinematicChain) -> str:
    """Serialize a chain back to the YAML config format (degrees for limits)."""

    def dof_doc(d: Dof):
        out = {"q": d.q, "axis": d.axis, "kind": d.kind, "label": d.label}
        if d.limits is not None:
            lo, hi = d.limits
            if d.kind == "rotation":
                lo, hi = math.degrees(lo), math.degrees(hi)
            out["limits"] = [lo, hi]
        return out

    doc = {
        "name": chain.name,
        "provenance": chain.provenance,
        "n_coords": chain.n_coords,
        "gravity": list(chain.gravity),
        "segments": [
            {
                "name": s.name,
                "mass": s.mass,
                "com": list(s.com),
                "inertia": [list(row) for row in s.inertia],
                "provenance": s.provenance,
            }
            for s in chain.segments
        ],
        "joints": [
            {
                "name": j.name,
                "parent": j.parent,
                "child": j.child,
                "anchor": list(j.anchor),
                "provenance": j.provenance,
                "dofs": [dof_doc(d) for d in j.dofs],
            }
            for j in chain.joints
        ],
        "loop_cuts": [
            {
                "name": c.name,
                "body_a": c.body_a,
                "body_b": c.body_b,
                "anchor_a": list(c.anchor_a),
                "anchor_b": list(c.anchor_b),
                "n_constraints": c.n_constraints,
                "candidate_dependents": list(c.candidate_dependents),
            }
            for c in chain.loop_cuts
        ],
        "markers": [
            {"name": m.name, "segment": m.segment, "position": list(m.local_position)}
            for m in chain.markers
        ],
    }
    return yaml.safe_dump(doc, sort_keys=False)


def coordinate_index(chain: KinematicChain, name: str) -> int:
    """Map ``"<joint>.<label>"`` (e.g. ``"RU.pronation_supination"``) to its 1-based q index."""
    joint_name, _, label = name.partition(".")
    for joint in chain.joints:
        if joint.name != joint_name:
            continue
        for dof in joint.dofs:
            if dof.label == label:
                return dof.q
    raise UnknownCoordinateError(f"unknown coordinate name {name!r}")


def coordinate_names(chain: KinematicChain) -> list[str]:
    """Qualified names ordered by coordinate index."""
    names = [""] * chain.n_coords
    for joint, dof in chain.dofs():
        if 1 <= dof.q <= chain.n_coords:
            names[dof.q - 1] = f"{joint.name}.{dof.label}"
    return names


def dependent_candidates(chain: KinematicChain) -> list[tuple[int, ...]]:
    """All 3-subsets of the cut's candidate dependents (1-based)."""
    if not chain.loop_cuts:
        return []
    cut = chain.loop_cuts[0]
    return list(combinations(cut.candidate_dependents, cut.n_constraints))
