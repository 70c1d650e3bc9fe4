"""Layout data model and the CSS-style layout DSL.

One object per line::

    desk {length: 60px; width: 30px; center_x: 128px; center_y: 40px; orientation: 90 degrees;}

3D lines additionally carry ``height`` (after ``width``) and ``center_z``
(after ``center_y``). All quantities are layout pixels; orientation is in
degrees and is normalized to ``[0, 360)``.
"""

from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field, fields, replace
from typing import Any, Iterable, Mapping, Sequence

from layoutforge.errors import (
    AnswerUnparseable,
    EmptyLayout,
    LengthMismatch,
    MalformedLine,
    MissingField,
    ParseError,
)

MAX_ROOM_DIM = 256

BEV_KEYS = ("length", "width", "center_x", "center_y", "orientation")
SCENE3D_KEYS = ("length", "width", "height", "center_x", "center_y", "center_z", "orientation")
ROOM_KEYS = ("length", "width", "height")

_NUMBER = r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?"
_VALUE_RE = re.compile(rf"^({_NUMBER})\s*(px|degrees|degree)$")
_KEY_RE = re.compile(r"^[A-Za-z_]+$")


def normalize_orientation(degrees: float) -> float:
    o = math.fmod(degrees, 360.0)
    if o < 0:
        o += 360.0
    # fmod of a tiny negative lands on 360.0 after the shift
    if o >= 360.0:
        o = 0.0
    return o + 0.0  # folds -0.0 into 0.0


def format_number(value: float) -> str:
    """Shortest exact rendering: integers without a decimal point, no trailing zeros."""
    if value == 0:
        return "0"
    if float(value).is_integer() and abs(value) < 1e16:
        return str(int(value))
    return repr(float(value))


@dataclass(frozen=True)
class Room:
    max_length: int
    max_width: int
    max_height: int

    def __post_init__(self):
        for name in ("max_length", "max_width", "max_height"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, int) or not 1 <= v <= MAX_ROOM_DIM:
                raise ValueError(f"room {name} must be an integer in [1, {MAX_ROOM_DIM}], got {v!r}")

    @classmethod
    def parse_dims(cls, text: str) -> "Room":
        """Parse ``LxWxH`` (e.g. ``256x171x160``)."""
        parts = text.lower().split("x")
        if len(parts) != 3:
            raise ValueError(f"room dims must look like LxWxH, got {text!r}")
        try:
            return cls(*(int(p) for p in parts))
        except ValueError as exc:
            raise ValueError(f"bad room dims {text!r}: {exc}") from None

    def header(self) -> str:
        return (f"room {{length: {self.max_length}px; width: {self.max_width}px; "
                f"height: {self.max_height}px;}}")

    def to_dict(self) -> dict[str, int]:
        return {"length": self.max_length, "width": self.max_width, "height": self.max_height}


def _check_label(label: str) -> None:
    if not label or not label.strip():
        raise ValueError("object label must be nonempty")
    if "{" in label or ";" in label or "\n" in label:
        raise ValueError(f"object label may not contain '{{', ';' or newlines: {label!r}")


@dataclass(frozen=True)
class BevObject:
    label: str
    length: float
    width: float
    center_x: float
    center_y: float
    orientation: float

    def __post_init__(self):
        _check_label(self.label)
        for f in fields(self):
            if f.name == "label" or f.name == "asset_prompt":
                continue
            v = getattr(self, f.name)
            if not math.isfinite(v):
                raise ValueError(f"{f.name} must be finite, got {v!r}")
            object.__setattr__(self, f.name, float(v))
        if self.length <= 0 or self.width <= 0:
            raise ValueError(f"length and width must be positive ({self.label})")
        object.__setattr__(self, "orientation", normalize_orientation(self.orientation))

    @property
    def footprint_key(self) -> tuple[str, float, float, float, float, float]:
        return (self.label, self.length, self.width, self.center_x, self.center_y, self.orientation)

    def to_bev(self) -> "BevObject":
        return BevObject(self.label, self.length, self.width, self.center_x, self.center_y, self.orientation)


@dataclass(frozen=True)
class SceneObject3D(BevObject):
    height: float = 0.0
    center_z: float = 0.0
    asset_prompt: str = ""

    def __post_init__(self):
        super().__post_init__()
        if self.height <= 0:
            raise ValueError(f"height must be positive ({self.label})")

    @property
    def z_lo(self) -> float:
        return self.center_z - self.height / 2

    @property
    def z_hi(self) -> float:
        return self.center_z + self.height / 2

    def within_height(self, room: Room) -> bool:
        return self.z_lo >= 0 and self.z_hi <= room.max_height


@dataclass(frozen=True)
class BevLayout:
    objects: tuple[BevObject, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects)

    def class_counts(self) -> Counter:
        return Counter(normalize_class(o.label) for o in self.objects)


@dataclass(frozen=True)
class Scene3D:
    room: Room
    objects: tuple[SceneObject3D, ...]

    def __post_init__(self):
        object.__setattr__(self, "objects", tuple(self.objects))

    def __len__(self) -> int:
        return len(self.objects)

    def bev_layout(self) -> BevLayout:
        return BevLayout(tuple(o.to_bev() for o in self.objects))

    def with_objects(self, objects: Iterable[SceneObject3D]) -> "Scene3D":
        return replace(self, objects=tuple(objects))


def normalize_class(label: str) -> str:
    return " ".join(label.lower().split())


# -- line grammar -------------------------------------------------------------

def _parse_line(line: str, line_no: int, keys: Sequence[str]) -> tuple[str, dict[str, float]]:
    brace = line.find("{")
    if brace < 0:
        raise MalformedLine(line_no, "no '{'")
    label = line[:brace].strip()
    rest = line[brace + 1:].rstrip()
    if not label:
        raise MalformedLine(line_no, "empty label")
    if ";" in label:
        raise MalformedLine(line_no, "';' in label")
    if not rest.endswith("}"):
        raise MalformedLine(line_no, "missing closing '}'")
    body = rest[:-1].strip()
    if not body.endswith(";"):
        raise MalformedLine(line_no, "last field not terminated by ';'")
    values: dict[str, float] = {}
    for segment in body[:-1].split(";"):
        key, sep, raw = segment.partition(":")
        key = key.strip()
        if not sep or not _KEY_RE.match(key):
            raise MalformedLine(line_no, f"bad field {segment.strip()!r}")
        if key not in keys:
            raise MalformedLine(line_no, f"unknown key {key!r}")
        if key in values:
            raise MalformedLine(line_no, f"duplicate key {key!r}")
        m = _VALUE_RE.match(raw.strip())
        if m is None:
            raise MalformedLine(line_no, f"unparseable value for {key!r}: {raw.strip()!r}")
        unit = m.group(2)
        if (key == "orientation") != unit.startswith("degree"):
            raise MalformedLine(line_no, f"wrong unit {unit!r} for {key!r}")
        number = float(m.group(1))
        if not math.isfinite(number):
            raise MalformedLine(line_no, f"non-finite value for {key!r}")
        values[key] = number
    missing = [k for k in keys if k not in values]
    if missing:
        raise MalformedLine(line_no, f"missing {', '.join(missing)}")
    return label, values


def _make(cls, line_no: int, label: str, values: Mapping[str, float], **extra):
    try:
        return cls(label=label, **values, **extra)
    except ValueError as exc:
        raise MalformedLine(line_no, str(exc)) from None


def _iter_lines(text: str):
    for i, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if line:
            yield i, line


def parse_bev_line(line: str, line_no: int = 1) -> BevObject:
    label, values = _parse_line(line.strip(), line_no, BEV_KEYS)
    return _make(BevObject, line_no, label, values)


def parse_scene3d_line(line: str, line_no: int = 1, asset_prompt: str = "") -> SceneObject3D:
    label, values = _parse_line(line.strip(), line_no, SCENE3D_KEYS)
    return _make(SceneObject3D, line_no, label, values, asset_prompt=asset_prompt)


def parse_bev_layout(text: str) -> BevLayout:
    objects = [parse_bev_line(line, n) for n, line in _iter_lines(text)]
    if not objects:
        raise EmptyLayout()
    return BevLayout(tuple(objects))


def serialize_bev_object(obj: BevObject) -> str:
    return (f"{obj.label} {{length: {format_number(obj.length)}px; width: {format_number(obj.width)}px; "
            f"center_x: {format_number(obj.center_x)}px; center_y: {format_number(obj.center_y)}px; "
            f"orientation: {format_number(obj.orientation)} degrees;}}")


def serialize_scene3d_object(obj: SceneObject3D) -> str:
    return (f"{obj.label} {{length: {format_number(obj.length)}px; width: {format_number(obj.width)}px; "
            f"height: {format_number(obj.height)}px; "
            f"center_x: {format_number(obj.center_x)}px; center_y: {format_number(obj.center_y)}px; "
            f"center_z: {format_number(obj.center_z)}px; "
            f"orientation: {format_number(obj.orientation)} degrees;}}")


def serialize_bev_layout(layout: BevLayout) -> str:
    return "\n".join(serialize_bev_object(o) for o in layout.objects)


def serialize_scene3d(scene: Scene3D) -> str:
    """Serialize the 3D layout lines; asset prompts travel separately."""
    if not scene.objects:
        raise EmptyLayout("scene has no objects")
    return "\n".join(serialize_scene3d_object(o) for o in scene.objects)


def scene3d_payload(scene: Scene3D) -> dict[str, list[str]]:
    """The lifting-response shape: layout lines plus parallel asset prompts."""
    return {
        "3D_layout": serialize_scene3d(scene).split("\n"),
        "object_prompts": [o.asset_prompt for o in scene.objects],
    }


# -- structured payloads -------------------------------------------------------

def normalize_key(key: str) -> str:
    return " ".join(key.replace("_", " ").replace("-", " ").lower().split())


def _as_mapping(payload: Any) -> Mapping[str, Any]:
    if isinstance(payload, str):
        from layoutforge.llm.jsonx import extract_json

        payload = extract_json(payload)
    if not isinstance(payload, Mapping):
        raise ParseError(f"expected a JSON object, got {type(payload).__name__}")
    return payload


def lookup(payload: Mapping[str, Any], name: str) -> Any:
    """Case/underscore-insensitive key lookup; raises MissingField."""
    want = normalize_key(name)
    for key, value in payload.items():
        if isinstance(key, str) and normalize_key(key) == want:
            return value
    raise MissingField(name)


def _lines_of(value: Any) -> str:
    if isinstance(value, str):
        return value
    if isinstance(value, list) and all(isinstance(v, str) for v in value):
        return "\n".join(value)
    raise ParseError(f"expected layout lines, got {type(value).__name__}")


def parse_scene3d(payload: Any, room: Room) -> Scene3D:
    data = _as_mapping(payload)
    text = _lines_of(lookup(data, "3D_layout"))
    prompts = lookup(data, "object_prompts")
    if not isinstance(prompts, list) or not all(isinstance(p, str) for p in prompts):
        raise ParseError("object_prompts must be a list of strings")
    lines = list(_iter_lines(text))
    if not lines:
        raise EmptyLayout()
    if len(lines) != len(prompts):
        raise LengthMismatch(len(lines), len(prompts))
    objects = [parse_scene3d_line(line, n, p.strip()) for (n, line), p in zip(lines, prompts)]
    return Scene3D(room, tuple(objects))


COT_STEPS = ("Entity Extraction", "Order Decision", "Spatial Reasoning", "Answer Organization")


@dataclass(frozen=True)
class CotRecord:
    prompt: str
    entity_extraction: str
    order_decision: str
    spatial_reasoning: str
    answer_organization: str

    def __post_init__(self):
        for f in fields(self):
            if not isinstance(getattr(self, f.name), str) or not getattr(self, f.name).strip():
                raise MissingField(f.name)

    def layout(self) -> BevLayout:
        return parse_bev_layout(self.answer_organization)

    def steps(self) -> tuple[str, str, str, str]:
        return (self.entity_extraction, self.order_decision, self.spatial_reasoning, self.answer_organization)

    def to_payload(self) -> dict[str, Any]:
        return {"prompt": self.prompt, "response": dict(zip(COT_STEPS, self.steps()))}

    def response_json(self) -> str:
        return json.dumps(self.to_payload()["response"], ensure_ascii=False)

    def text(self) -> str:
        """Human-readable transcript used as evaluator context."""
        return "\n".join(f"{name}: {body}" for name, body in zip(COT_STEPS, self.steps()))


def parse_cot_record(payload: Any) -> CotRecord:
    data = _as_mapping(payload)
    prompt = lookup(data, "prompt")
    try:
        steps = lookup(data, "response")
    except MissingField:
        steps = data
    if not isinstance(steps, Mapping):
        raise ParseError("response must be a JSON object")
    values = []
    for name in COT_STEPS:
        v = lookup(steps, name)
        if isinstance(v, list) and all(isinstance(x, str) for x in v):
            v = "\n".join(v)
        if not isinstance(v, str) or not v.strip():
            raise MissingField(name)
        values.append(v)
    if not isinstance(prompt, str) or not prompt.strip():
        raise MissingField("prompt")
    record = CotRecord(prompt, *values)
    try:
        record.layout()
    except ParseError as exc:
        raise AnswerUnparseable(exc) from exc
    return record


# -- CoT consistency ------------------------------------------------------------

_NUMBER_WORDS = {
    "one": 1, "two": 2, "three": 3, "four": 4, "five": 5, "six": 6, "seven": 7,
    "eight": 8, "nine": 9, "ten": 10, "eleven": 11, "twelve": 12, "thirteen": 13,
    "fourteen": 14, "fifteen": 15, "sixteen": 16, "seventeen": 17, "eighteen": 18,
    "nineteen": 19, "twenty": 20, "single": 1, "pair of": 2,
}


@dataclass(frozen=True)
class UnmentionedLabel:
    label: str


@dataclass(frozen=True)
class CountMismatch:
    label: str
    expected: int
    got: int


@dataclass
class ConsistencyReport:
    findings: list = field(default_factory=list)

    def __bool__(self) -> bool:
        return bool(self.findings)

    def __len__(self) -> int:
        return len(self.findings)


def mentioned_count(text: str, label: str) -> int | None:
    """Count stated right before ``label`` (digits or number words), if any."""
    words = "|".join(sorted(map(re.escape, _NUMBER_WORDS), key=len, reverse=True))
    pattern = re.compile(
        rf"\b(\d+|{words})\s+{re.escape(label)}(?:s|es)?\b", re.IGNORECASE)
    m = pattern.search(text)
    if m is None:
        return None
    token = m.group(1).lower()
    return int(token) if token.isdigit() else _NUMBER_WORDS[token]


def check_cot_consistency(record: CotRecord) -> ConsistencyReport:
    counts = record.layout().class_counts()
    entities = record.entity_extraction.lower()
    report = ConsistencyReport()
    for label, got in counts.items():
        if label not in entities:
            report.findings.append(UnmentionedLabel(label))
            continue
        expected = mentioned_count(entities, label)
        if expected is not None and expected != got:
            report.findings.append(CountMismatch(label, expected, got))
    return report


# -- ground-truth scene files -----------------------------------------------------

def parse_room_header(line: str, line_no: int = 1) -> Room:
    label, values = _parse_line(line.strip(), line_no, ROOM_KEYS)
    if label.lower() != "room":
        raise MalformedLine(line_no, "expected a 'room {...}' header")
    try:
        dims = [int(values[k]) if float(values[k]).is_integer() else values[k] for k in ROOM_KEYS]
        return Room(*dims)
    except ValueError as exc:
        raise MalformedLine(line_no, str(exc)) from None


def parse_scene_file(text: str) -> tuple[Room, BevLayout | Scene3D]:
    """Parse a scene file: ``room {...}`` header, then BEV or 3D DSL lines.

    Returns a Scene3D when every object line carries the 3D fields, a
    BevLayout when none does. Mixed files are rejected.
    """
    lines = list(_iter_lines(text))
    if not lines:
        raise EmptyLayout("scene file is empty")
    (n0, header), body = lines[0], lines[1:]
    room = parse_room_header(header, n0)
    if not body:
        raise EmptyLayout()
    is_3d = ["height:" in line for _, line in body]
    if all(is_3d):
        return room, Scene3D(room, tuple(parse_scene3d_line(line, n) for n, line in body))
    if not any(is_3d):
        return room, BevLayout(tuple(parse_bev_line(line, n) for n, line in body))
    n_bad = body[is_3d.index(not is_3d[0])][0]
    raise MalformedLine(n_bad, "scene file mixes BEV and 3D lines")


def serialize_scene_file(room: Room, layout: BevLayout | Scene3D) -> str:
    if isinstance(layout, Scene3D):
        body = serialize_scene3d(layout)
    else:
        body = serialize_bev_layout(layout)
    return room.header() + "\n" + body + "\n"
