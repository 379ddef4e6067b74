"""Hand description files: parsing, validation, serialization.

A hand file (``*.hand.json``) describes one robot hand as a kinematic tree:

* ``links``: named rigid bodies, each with an optional visual primitive
  (sphere / box / capsule) used for surface sampling and display.
* ``joints``: revolute joints (axis + limits, optional mimic coupling) and
  fixed joints.  Fixed joints are folded into ``Weld`` records at parse time
  and re-emitted as fixed joints named ``<link>_weld`` when serializing.
* ``fingertips``: 1..5 link names ordered thumb, index, middle, ring, little.
* ``faas_map``: joint name -> slot index in the 32-slot per-hand joint layout
  (thumb 0-4, index 5-9, middle 10-14, ring 15-19, little 20-24, extra wrist
  25-26, extras 27-31).

Parsing validates the tree and precomputes ``KinStructure``: flat numpy
arrays over the revolute joints that the kinematics kernels consume.  Joints
keep their authored ``(xyz, rpy)`` tuples so serialize -> parse round trips
are bit-exact.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ParseError, ValidationError
from .geometry import Pose

N_SLOTS = 32
FINGER_NAMES = ("thumb", "index", "middle", "ring", "little")
FINGER_SLOT_SPAN = 5  # slots per finger: finger f owns [5f, 5f+4]
EXTRA_WRIST_SLOTS = (25, 26)
EXTRA_SLOTS_LO = 27


@dataclass(frozen=True)
class Visual:
    """Display / sampling primitive attached to a link, in the link frame."""

    kind: str  # "sphere" | "box" | "capsule"
    radius: float = 0.0
    length: float = 0.0  # capsule cylinder length (along local z)
    size: tuple[float, float, float] = (0.0, 0.0, 0.0)  # box full extents
    color: tuple[float, float, float] = (0.6, 0.6, 0.6)


@dataclass(frozen=True)
class Link:
    name: str
    visual: Visual | None = None


@dataclass(frozen=True)
class Mimic:
    """q_self = multiplier * q_master + offset, enforced after every solve step."""

    master: str
    multiplier: float
    offset: float


@dataclass(frozen=True)
class Joint:
    """Revolute joint.  Child link frame = parent frame * origin * Rot(axis, q)."""

    name: str
    parent: str
    child: str
    xyz: tuple[float, float, float]
    rpy: tuple[float, float, float]
    axis: tuple[float, float, float]
    lower: float
    upper: float
    mimic: Mimic | None = None

    @property
    def origin(self) -> Pose:
        return Pose.from_xyz_rpy(self.xyz, self.rpy)


@dataclass(frozen=True)
class Weld:
    """Folded fixed joint: child link rigidly offset from its parent link."""

    link: str
    parent_link: str
    xyz: tuple[float, float, float]
    rpy: tuple[float, float, float]


@dataclass
class KinStructure:
    """Flat arrays over revolute joints, in hand-file order.

    ``parent_joint[j]`` is the nearest ancestor revolute joint (-1 = hand
    base); ``pre_rot/pre_trans[j]`` is the fixed transform from that frame to
    joint j's zero-angle frame (welds and the joint origin folded together).
    Fingertip m sits at a fixed offset (``tip_rot/tip_trans``) from joint
    ``tip_parent[m]``; ``reach[m, j]`` marks the joints that move it.
    """

    parent_joint: np.ndarray  # (J,) int32
    pre_rot: np.ndarray  # (J, 3, 3)
    pre_trans: np.ndarray  # (J, 3)
    axis: np.ndarray  # (J, 3)
    lower: np.ndarray  # (J,)
    upper: np.ndarray  # (J,)
    mimic_master: np.ndarray  # (J,) int32, -1 = independent
    mimic_k: np.ndarray  # (J,)
    mimic_c: np.ndarray  # (J,)
    topo_order: np.ndarray  # (J,) int32, parents before children
    active_idx: np.ndarray  # (A,) int32, joints solved for directly
    slot: np.ndarray  # (J,) int32, FAAS slot per joint
    tip_parent: np.ndarray  # (M,) int32
    tip_rot: np.ndarray  # (M, 3, 3)
    tip_trans: np.ndarray  # (M, 3)
    reach: np.ndarray  # (M, J) bool
    link_names: tuple[str, ...]
    link_parent_joint: np.ndarray  # (L,) int32
    link_rot: np.ndarray  # (L, 3, 3)
    link_trans: np.ndarray  # (L, 3)
    joint_index: dict[str, int]

    @property
    def full_dof(self) -> int:
        return int(self.axis.shape[0])

    @property
    def active_dof(self) -> int:
        return int(self.active_idx.shape[0])

    @property
    def mid_q(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)


@dataclass(frozen=True)
class HandModel:
    name: str
    side: str  # "left" | "right"
    links: tuple[Link, ...]
    joints: tuple[Joint, ...]  # revolute only, file order
    welds: tuple[Weld, ...]
    fingertips: tuple[str, ...]  # link names, thumb first
    faas_map: dict[str, int]
    kin: KinStructure = field(compare=False, repr=False)

    @property
    def joint_names(self) -> tuple[str, ...]:
        return tuple(j.name for j in self.joints)

    @property
    def full_dof(self) -> int:
        return len(self.joints)

    @property
    def active_dof(self) -> int:
        return self.kin.active_dof

    @property
    def n_fingertips(self) -> int:
        return len(self.fingertips)


@dataclass(frozen=True)
class HandSummary:
    name: str
    side: str
    active_dof: int
    full_dof: int
    finger_joint_counts: tuple[int, int, int, int, int]
    slots: frozenset[int]
    occupancy_bitmap: int


def _require(doc: dict, key: str, where: str):
    if key not in doc:
        raise ValidationError(f"{where}: missing required key '{key}'")
    return doc[key]


def _vec3(value, where: str) -> tuple[float, float, float]:
    try:
        x, y, z = (float(v) for v in value)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{where}: expected a 3-vector, got {value!r}") from exc
    return (x, y, z)


def _parse_visual(doc, link_name: str) -> Visual | None:
    if doc is None:
        return None
    kind = _require(doc, "type", f"link '{link_name}' visual")
    color = tuple(float(c) for c in doc.get("color", (0.6, 0.6, 0.6)))
    if len(color) != 3:
        raise ValidationError(f"link '{link_name}': color must have 3 components")
    if kind == "sphere":
        return Visual("sphere", radius=float(_require(doc, "radius", f"link '{link_name}' sphere")), color=color)
    if kind == "box":
        return Visual("box", size=_vec3(_require(doc, "size", f"link '{link_name}' box"), f"link '{link_name}' box size"), color=color)
    if kind == "capsule":
        return Visual(
            "capsule",
            radius=float(_require(doc, "radius", f"link '{link_name}' capsule")),
            length=float(_require(doc, "length", f"link '{link_name}' capsule")),
            color=color,
        )
    raise ValidationError(f"link '{link_name}': unknown visual type '{kind}'")


def parse_hand(source) -> HandModel:
    """Parse a hand description from a path, JSON string, or decoded dict.

    Raises ParseError for malformed JSON and ValidationError for documents
    that decode fine but violate a structural rule (the message names the
    offending joint/link/slot).
    """
    if isinstance(source, (str, Path)) and not (isinstance(source, str) and source.lstrip().startswith("{")):
        try:
            text = Path(source).read_text()
        except OSError as exc:
            raise ParseError(f"cannot read hand file: {exc}") from exc
        doc = _loads(text)
    elif isinstance(source, str):
        doc = _loads(source)
    elif isinstance(source, dict):
        doc = source
    else:
        raise ParseError(f"unsupported hand source type {type(source).__name__}")
    return _build_model(doc)


def _loads(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("hand document must be a JSON object")
    return doc


def load_hand(path) -> HandModel:
    return parse_hand(Path(path))


def _build_model(doc: dict) -> HandModel:
    name = str(_require(doc, "name", "hand"))
    side = _require(doc, "side", "hand")
    if side not in ("left", "right"):
        raise ValidationError(f"hand side must be 'left' or 'right', got {side!r}")

    links: list[Link] = []
    seen_links: set[str] = set()
    for ldoc in _require(doc, "links", "hand"):
        lname = str(_require(ldoc, "name", "link"))
        if lname in seen_links:
            raise ValidationError(f"duplicate link name '{lname}'")
        seen_links.add(lname)
        links.append(Link(lname, _parse_visual(ldoc.get("visual"), lname)))
    if not links:
        raise ValidationError("hand has no links")

    joints: list[Joint] = []
    welds: list[Weld] = []
    mimic_raw: dict[str, Mimic] = {}
    seen_joints: set[str] = set()
    parent_of: dict[str, tuple[str, str]] = {}  # child link -> (kind, parent link)
    for jdoc in _require(doc, "joints", "hand"):
        jname = str(_require(jdoc, "name", "joint"))
        if jname in seen_joints:
            raise ValidationError(f"duplicate joint name '{jname}'")
        seen_joints.add(jname)
        jtype = _require(jdoc, "type", f"joint '{jname}'")
        parent = str(_require(jdoc, "parent", f"joint '{jname}'"))
        child = str(_require(jdoc, "child", f"joint '{jname}'"))
        for link_ref in (parent, child):
            if link_ref not in seen_links:
                raise ValidationError(f"joint '{jname}' references unknown link '{link_ref}'")
        if child in parent_of:
            raise ValidationError(f"link '{child}' has multiple parent joints")
        origin = jdoc.get("origin", {})
        xyz = _vec3(origin.get("xyz", (0.0, 0.0, 0.0)), f"joint '{jname}' origin xyz")
        rpy = _vec3(origin.get("rpy", (0.0, 0.0, 0.0)), f"joint '{jname}' origin rpy")
        if jtype == "fixed":
            parent_of[child] = ("weld", parent)
            welds.append(Weld(child, parent, xyz, rpy))
            continue
        if jtype != "revolute":
            raise ValidationError(f"joint '{jname}': unsupported type '{jtype}'")
        parent_of[child] = ("joint", parent)
        axis = _vec3(_require(jdoc, "axis", f"joint '{jname}'"), f"joint '{jname}' axis")
        if abs(float(np.linalg.norm(axis)) - 1.0) > 1e-9:
            raise ValidationError(f"joint '{jname}' axis is not unit length")
        limit = _require(jdoc, "limit", f"joint '{jname}'")
        lower = float(_require(limit, "lower", f"joint '{jname}' limit"))
        upper = float(_require(limit, "upper", f"joint '{jname}' limit"))
        if lower > upper:
            raise ValidationError(f"joint '{jname}': limit lower {lower} > upper {upper}")
        mimic = None
        if jdoc.get("mimic") is not None:
            mdoc = jdoc["mimic"]
            mimic = Mimic(
                master=str(_require(mdoc, "joint", f"joint '{jname}' mimic")),
                multiplier=float(mdoc.get("multiplier", 1.0)),
                offset=float(mdoc.get("offset", 0.0)),
            )
            mimic_raw[jname] = mimic
        joints.append(Joint(jname, parent, child, xyz, rpy, axis, lower, upper, mimic))

    joint_index = {j.name: i for i, j in enumerate(joints)}
    for jname, mimic in mimic_raw.items():
        if mimic.master not in joint_index:
            raise ValidationError(f"joint '{jname}' mimics unknown joint '{mimic.master}'")
        if mimic.master == jname:
            raise ValidationError(f"joint '{jname}' cannot mimic itself")
        if joints[joint_index[mimic.master]].mimic is not None:
            raise ValidationError(
                f"mimic chains are not supported: '{jname}' -> '{mimic.master}' -> "
                f"'{joints[joint_index[mimic.master]].mimic.master}'"
            )
    active = [i for i, j in enumerate(joints) if j.mimic is None]
    if not active:
        raise ValidationError("hand must have active_dof ≥ 1 (every revolute joint is a mimic)")

    # Tree checks: single root, no cycles (each link already has <= 1 parent).
    roots = [l.name for l in links if l.name not in parent_of]
    if len(roots) != 1:
        raise ValidationError(f"expected exactly one root link, found {len(roots)}: {roots}")
    for link in links:
        cursor, hops = link.name, 0
        while cursor in parent_of:
            cursor = parent_of[cursor][1]
            hops += 1
            if hops > len(links):
                raise ValidationError(f"kinematic cycle involving link '{link.name}'")

    fingertips = tuple(str(t) for t in _require(doc, "fingertips", "hand"))
    if not 1 <= len(fingertips) <= 5:
        raise ValidationError(f"expected 1..5 fingertips, got {len(fingertips)}")
    for tip in fingertips:
        if tip not in seen_links:
            raise ValidationError(f"fingertip references unknown link '{tip}'")
    if len(set(fingertips)) != len(fingertips):
        raise ValidationError("duplicate fingertip link")

    faas_map = {str(k): int(v) for k, v in _require(doc, "faas_map", "hand").items()}
    for jname in faas_map:
        if jname not in joint_index:
            raise ValidationError(f"faas_map references unknown joint '{jname}'")
    for j in joints:
        if j.name not in faas_map:
            raise ValidationError(f"faas_map missing joint '{j.name}'")
    used_slots: set[int] = set()
    for jname, slot in faas_map.items():
        if not 0 <= slot < N_SLOTS:
            raise ValidationError(f"FAAS slot {slot} out of range [0, {N_SLOTS - 1}] (joint '{jname}')")
        if slot in used_slots:
            raise ValidationError(f"duplicate FAAS slot {slot}")
        used_slots.add(slot)

    kin = _build_kin(links, joints, welds, fingertips, faas_map, joint_index, roots[0])

    # Slot placement must match the kinematic role of each joint: a joint that
    # moves exactly one fingertip belongs to that finger's slot range, one
    # that moves several is wrist-like (25-31), one that moves none is an
    # extra (27-31).
    for jidx, j in enumerate(joints):
        slot = faas_map[j.name]
        reached = np.nonzero(kin.reach[:, jidx])[0]
        if len(reached) == 1:
            f = int(reached[0])
            lo = f * FINGER_SLOT_SPAN
            if not lo <= slot <= lo + FINGER_SLOT_SPAN - 1:
                raise ValidationError(
                    f"joint '{j.name}' drives the {FINGER_NAMES[f]} fingertip but has slot "
                    f"{slot}, expected [{lo}, {lo + FINGER_SLOT_SPAN - 1}]"
                )
        elif len(reached) > 1:
            if not EXTRA_WRIST_SLOTS[0] <= slot < N_SLOTS:
                raise ValidationError(
                    f"joint '{j.name}' drives {len(reached)} fingertips but has slot {slot}, "
                    f"expected [{EXTRA_WRIST_SLOTS[0]}, {N_SLOTS - 1}]"
                )
        else:
            if not EXTRA_SLOTS_LO <= slot < N_SLOTS:
                raise ValidationError(
                    f"joint '{j.name}' drives no fingertip but has slot {slot}, "
                    f"expected [{EXTRA_SLOTS_LO}, {N_SLOTS - 1}]"
                )

    return HandModel(
        name=name,
        side=side,
        links=tuple(links),
        joints=tuple(joints),
        welds=tuple(welds),
        fingertips=fingertips,
        faas_map=faas_map,
        kin=kin,
    )


def _build_kin(links, joints, welds, fingertips, faas_map, joint_index, root) -> KinStructure:
    nj = len(joints)
    parent_joint = np.full(nj, -1, dtype=np.int32)
    pre_rot = np.zeros((nj, 3, 3))
    pre_trans = np.zeros((nj, 3))
    axis = np.array([j.axis for j in joints], dtype=float)
    lower = np.array([j.lower for j in joints], dtype=float)
    upper = np.array([j.upper for j in joints], dtype=float)
    mimic_master = np.full(nj, -1, dtype=np.int32)
    mimic_k = np.zeros(nj)
    mimic_c = np.zeros(nj)
    for i, j in enumerate(joints):
        if j.mimic is not None:
            mimic_master[i] = joint_index[j.mimic.master]
            mimic_k[i] = j.mimic.multiplier
            mimic_c[i] = j.mimic.offset
    active_idx = np.array([i for i in range(nj) if mimic_master[i] < 0], dtype=np.int32)
    slot = np.array([faas_map[j.name] for j in joints], dtype=np.int32)

    # Anchor every link to its nearest ancestor revolute joint by walking the
    # tree outward from the root, folding welds into fixed offsets.
    anchor: dict[str, tuple[int, Pose]] = {root: (-1, Pose.identity())}
    topo: list[int] = []
    pending = [("joint", i) for i in range(nj)] + [("weld", w) for w in welds]
    while pending:
        progressed = False
        remaining = []
        for kind, item in pending:
            parent_link = joints[item].parent if kind == "joint" else item.parent_link
            if parent_link not in anchor:
                remaining.append((kind, item))
                continue
            progressed = True
            pidx, offset = anchor[parent_link]
            if kind == "joint":
                j = joints[item]
                pre = offset.compose(j.origin)
                parent_joint[item] = pidx
                pre_rot[item] = pre.rot
                pre_trans[item] = pre.trans
                anchor[j.child] = (item, Pose.identity())
                topo.append(item)
            else:
                anchor[item.link] = (pidx, offset.compose(Pose.from_xyz_rpy(item.xyz, item.rpy)))
        pending = remaining
        if pending and not progressed:  # unreachable after tree validation
            raise ValidationError(f"disconnected kinematic elements: {pending!r}")
    topo_order = np.array(topo, dtype=np.int32)

    m = len(fingertips)
    tip_parent = np.zeros(m, dtype=np.int32)
    tip_rot = np.zeros((m, 3, 3))
    tip_trans = np.zeros((m, 3))
    reach = np.zeros((m, nj), dtype=bool)
    for i, tip in enumerate(fingertips):
        pidx, offset = anchor[tip]
        tip_parent[i] = pidx
        tip_rot[i] = offset.rot
        tip_trans[i] = offset.trans
        cursor = pidx
        while cursor >= 0:
            reach[i, cursor] = True
            cursor = int(parent_joint[cursor])

    link_names = tuple(l.name for l in links)
    link_parent_joint = np.zeros(len(links), dtype=np.int32)
    link_rot = np.zeros((len(links), 3, 3))
    link_trans = np.zeros((len(links), 3))
    for i, lname in enumerate(link_names):
        pidx, offset = anchor[lname]
        link_parent_joint[i] = pidx
        link_rot[i] = offset.rot
        link_trans[i] = offset.trans

    return KinStructure(
        parent_joint=parent_joint,
        pre_rot=pre_rot,
        pre_trans=pre_trans,
        axis=axis,
        lower=lower,
        upper=upper,
        mimic_master=mimic_master,
        mimic_k=mimic_k,
        mimic_c=mimic_c,
        topo_order=topo_order,
        active_idx=active_idx,
        slot=slot,
        tip_parent=tip_parent,
        tip_rot=tip_rot,
        tip_trans=tip_trans,
        reach=reach,
        link_names=link_names,
        link_parent_joint=link_parent_joint,
        link_rot=link_rot,
        link_trans=link_trans,
        joint_index=dict(joint_index),
    )


def serialize_hand(model: HandModel) -> dict:
    """Inverse of parse_hand; folded welds come back as '<link>_weld' fixed joints."""
    links = []
    for link in model.links:
        ldoc: dict = {"name": link.name}
        if link.visual is not None:
            v = link.visual
            vdoc: dict = {"type": v.kind, "color": list(v.color)}
            if v.kind == "sphere":
                vdoc["radius"] = v.radius
            elif v.kind == "box":
                vdoc["size"] = list(v.size)
            else:
                vdoc["radius"] = v.radius
                vdoc["length"] = v.length
            ldoc["visual"] = vdoc
        links.append(ldoc)
    joints = []
    for j in model.joints:
        jdoc = {
            "name": j.name,
            "type": "revolute",
            "parent": j.parent,
            "child": j.child,
            "origin": {"xyz": list(j.xyz), "rpy": list(j.rpy)},
            "axis": list(j.axis),
            "limit": {"lower": j.lower, "upper": j.upper},
        }
        if j.mimic is not None:
            jdoc["mimic"] = {
                "joint": j.mimic.master,
                "multiplier": j.mimic.multiplier,
                "offset": j.mimic.offset,
            }
        joints.append(jdoc)
    for w in model.welds:
        joints.append(
            {
                "name": f"{w.link}_weld",
                "type": "fixed",
                "parent": w.parent_link,
                "child": w.link,
                "origin": {"xyz": list(w.xyz), "rpy": list(w.rpy)},
            }
        )
    return {
        "name": model.name,
        "side": model.side,
        "links": links,
        "joints": joints,
        "fingertips": list(model.fingertips),
        "faas_map": dict(model.faas_map),
    }


def save_hand(model: HandModel, path) -> None:
    Path(path).write_text(json.dumps(serialize_hand(model), indent=2) + "\n")


def hand_summary(model: HandModel) -> HandSummary:
    slots = frozenset(int(s) for s in model.kin.slot)
    counts = [0, 0, 0, 0, 0]
    for s in slots:
        if s < FINGER_SLOT_SPAN * len(FINGER_NAMES):
            counts[s // FINGER_SLOT_SPAN] += 1
    bitmap = 0
    for s in slots:
        bitmap |= 1 << s
    return HandSummary(
        name=model.name,
        side=model.side,
        active_dof=model.active_dof,
        full_dof=model.full_dof,
        finger_joint_counts=tuple(counts),
        slots=slots,
        occupancy_bitmap=bitmap,
    )
