"""Text -> BEV layout -> 3D layout -> evaluator-driven refinement -> scene manifest.

Every model call goes through an *oracle*: any object with
``complete(OracleRequest) -> str``. :class:`layoutforge.llm.Gateway` is the
production oracle; tests pass scripted fakes.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

from layoutforge.errors import (
    AlignmentAborted,
    AssetCountMismatch,
    FootprintMutated,
    GenerationRejected,
    LayoutForgeError,
    LengthMismatch,
    NoStructureFound,
    NonpositiveExtent,
    ParseError,
    SchemaError,
    UnbalancedStructure,
)
from layoutforge.layout import (
    BevLayout,
    CotRecord,
    Room,
    Scene3D,
    check_cot_consistency,
    format_number,
    normalize_class,
    parse_cot_record,
    parse_scene3d,
    serialize_bev_layout,
    serialize_scene3d,
)
from layoutforge.llm.gateway import DecodeParams, OracleRequest
from layoutforge.llm.jsonx import extract_json
from layoutforge.llm.templates import get_fragment, render_prompt
from layoutforge.render import rasterize_bev
from layoutforge.reward import (
    QUANT_ORDER,
    SPATIAL_ORDER,
    Criterion,
    VerdictMatrix,
    parse_quant_verdicts,
    parse_spatial_verdicts,
)

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1
GENERATION_ATTEMPTS = 3
ASPECTS = ("position", "size", "orientation", "height", "count")
FOOTPRINT_ASPECTS = frozenset({"position", "size", "orientation", "count"})
_DEFAULT_ASPECT = {
    Criterion.C1: "position", Criterion.C2: "position", Criterion.C3: "position",
    Criterion.C4: "position", Criterion.C5: "size", Criterion.C6: "orientation",
    Criterion.C7: "count",
}
_PROPOSABLE = ("length", "width", "height", "center_x", "center_y", "center_z", "orientation")
_VERTICAL_KEYS = frozenset({"height", "center_z"})

_RETRY_NOTE = ("\n\nYour previous answer could not be used ({error}). "
               "Answer again with legal JSON in exactly the required format.")
_LIFT_FIX_NOTE = ("\n\nYour previous answer changed the BEV footprint ({error}). Copy the object description, "
                  "length, width, center_x, center_y and orientation of every object unchanged and in the same "
                  "order; only add height and center_z.")

_PARSE_FAILURES = (ParseError, NoStructureFound, UnbalancedStructure, ValueError)


def _decode(oracle, role: str, seed: int) -> DecodeParams:
    make = getattr(oracle, "decode", None)
    if make is not None:
        return make(role, seed)
    return DecodeParams(temperature=1.0 if role == "bev_generator" else 0.0, seed=seed)


def _ask(oracle, role: str, prompt: str, seed: int = 0, image: bytes | None = None) -> str:
    return oracle.complete(OracleRequest(role, prompt, image, _decode(oracle, role, seed)))


# -- feedback ----------------------------------------------------------------------

@dataclass(frozen=True)
class Suggestion:
    object_index: int
    criterion: Criterion
    aspect: str
    instruction: str
    proposed: dict[str, float] | None = None

    @property
    def vertical(self) -> bool:
        if self.aspect == "height":
            return True
        return bool(self.proposed) and set(self.proposed) <= _VERTICAL_KEYS

    def to_dict(self) -> dict[str, Any]:
        return {"object_index": self.object_index, "criterion": self.criterion.name,
                "aspect": self.aspect, "instruction": self.instruction, "proposed": self.proposed}


@dataclass(frozen=True)
class Feedback:
    suggestions: tuple[Suggestion, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.suggestions)

    def __len__(self) -> int:
        return len(self.suggestions)

    @property
    def affects_footprint(self) -> bool:
        return any(not s.vertical for s in self.suggestions)

    @property
    def vertical(self) -> "Feedback":
        return Feedback(tuple(s for s in self.suggestions if s.vertical))

    @property
    def footprint(self) -> "Feedback":
        return Feedback(tuple(s for s in self.suggestions if not s.vertical))

    def render(self, scene: Scene3D) -> str:
        lines = []
        for s in self.suggestions:
            label = scene.objects[s.object_index].label
            line = f"- object {s.object_index} ({label}), {s.criterion.name} {s.criterion.value}, {s.aspect}: {s.instruction}"
            if s.proposed:
                line += "; proposed " + ", ".join(f"{k}={format_number(v)}" for k, v in s.proposed.items())
            lines.append(line)
        return "\n".join(lines)

    def to_list(self) -> list[dict[str, Any]]:
        return [s.to_dict() for s in self.suggestions]


def _parse_suggestions(payload: Any, scene: Scene3D, verdicts: VerdictMatrix,
                       owned: Sequence[Criterion]) -> list[Suggestion]:
    raw = None
    if isinstance(payload, dict):
        raw = next((v for k, v in payload.items() if isinstance(k, str) and k.lower() == "suggestions"), None)
    if raw is None:
        return []
    if not isinstance(raw, list):
        raise SchemaError("suggestions must be a list")
    classes = [normalize_class(o.label) for o in scene.objects]
    out: list[Suggestion] = []
    for item in raw:
        try:
            if not isinstance(item, dict):
                raise SchemaError("suggestion must be an object")
            crit = Criterion.parse(str(item.get("criterion", "")))
            if crit not in owned:
                raise SchemaError(f"{crit.name} is not judged by this evaluator")
            if "object_index" in item and isinstance(item["object_index"], int) and not isinstance(item["object_index"], bool):
                idx = item["object_index"]
                if not 0 <= idx < len(scene.objects):
                    raise SchemaError(f"object_index {idx} out of range")
                indices = [idx]
            else:
                name = normalize_class(str(item.get("object", "")))
                indices = [i for i, c in enumerate(classes) if c == name]
                if not indices:
                    raise SchemaError(f"suggestion names unknown object {name!r}")
            aspect = str(item.get("aspect", _DEFAULT_ASPECT[crit])).lower()
            if aspect not in ASPECTS:
                aspect = _DEFAULT_ASPECT[crit]
            proposed = item.get("proposed") or None
            if proposed is not None:
                if not isinstance(proposed, dict):
                    raise SchemaError("proposed must be an object")
                proposed = {k: float(v) for k, v in proposed.items()
                            if k in _PROPOSABLE and isinstance(v, (int, float)) and not isinstance(v, bool)}
                proposed = proposed or None
            instruction = str(item.get("instruction", "")).strip() or f"revise {aspect}"
        except (SchemaError, TypeError, ValueError) as exc:
            log.warning("ignoring malformed suggestion %r: %s", item, exc)
            continue
        for idx in indices:
            if verdicts.get(classes[idx], crit):
                log.warning("ignoring suggestion for %s on %s: judged Yes", classes[idx], crit.name)
                continue
            out.append(Suggestion(idx, crit, aspect, instruction, proposed))
    return out


# -- generation ----------------------------------------------------------------------

@dataclass(frozen=True)
class Revision:
    """Context for re-invoking a generator with evaluator feedback."""

    iteration: int
    current: str
    feedback: str

    def wrap(self, base_prompt: str) -> str:
        return render_prompt("alignment_feedback", {
            "base_prompt": base_prompt, "iteration": self.iteration,
            "current_layout": self.current, "feedback": self.feedback,
        })


def bev_prompt(description: str, room: Room) -> str:
    return render_prompt("bev_generate", {
        "description": description, "max_length": room.max_length, "max_width": room.max_width,
    })


def generate_bev(description: str, room: Room, oracle, *, seed: int = 0,
                 revision: Revision | None = None,
                 attempts: int = GENERATION_ATTEMPTS) -> tuple[CotRecord, BevLayout]:
    if not description.strip():
        raise ValueError("description must be nonempty")
    prompt = bev_prompt(description, room)
    if revision is not None:
        prompt = revision.wrap(prompt)
    last: Exception | None = None
    for attempt in range(attempts):
        ask = prompt if last is None else prompt + _RETRY_NOTE.format(error=last)
        response = _ask(oracle, "bev_generator", ask, seed)
        try:
            record = parse_cot_record(extract_json(response))
        except _PARSE_FAILURES as exc:
            log.info("bev attempt %d rejected: %s", attempt + 1, exc)
            last = exc
            continue
        for finding in check_cot_consistency(record).findings:
            log.warning("CoT consistency: %s", finding)
        return record, record.layout()
    raise GenerationRejected(attempts, last)


def lift_prompt(description: str, bev: BevLayout, room: Room) -> str:
    return render_prompt("lifting", {
        "text_description": description, "bev_layout": serialize_bev_layout(bev),
        "max_length": room.max_length, "max_width": room.max_width, "max_height": room.max_height,
    })


def _check_footprints(bev: BevLayout, scene: Scene3D) -> None:
    if len(scene.objects) != len(bev.objects):
        raise LengthMismatch(len(bev.objects), len(scene.objects))
    for i, (a, b) in enumerate(zip(bev.objects, scene.objects)):
        if a.footprint_key != b.footprint_key:
            raise FootprintMutated(i)


def lift_to_3d(description: str, bev: BevLayout, room: Room, oracle, *, seed: int = 0,
               revision: Revision | None = None) -> Scene3D:
    """Add heights and asset prompts; the BEV footprint must come back untouched.

    One corrective re-prompt is allowed before the error propagates.
    """
    prompt = lift_prompt(description, bev, room)
    if revision is not None:
        prompt = revision.wrap(prompt)
    last: Exception | None = None
    for _ in range(2):
        if last is None:
            ask = prompt
        elif isinstance(last, (FootprintMutated, LengthMismatch)):
            ask = prompt + _LIFT_FIX_NOTE.format(error=last)
        else:
            ask = prompt + _RETRY_NOTE.format(error=last)
        response = _ask(oracle, "layout_lifter", ask, seed)
        try:
            scene = parse_scene3d(extract_json(response), room)
            _check_footprints(bev, scene)
        except (FootprintMutated, LengthMismatch) + _PARSE_FAILURES as exc:
            log.info("lift rejected: %s", exc)
            last = exc
            continue
        for i, obj in enumerate(scene.objects):
            if not obj.within_height(room):
                log.warning("object %d (%s) spans z [%s, %s] outside [0, %d]", i, obj.label,
                            format_number(obj.z_lo), format_number(obj.z_hi), room.max_height)
        return scene
    assert last is not None
    raise last


# -- assets & manifest -----------------------------------------------------------------

@dataclass(frozen=True)
class AssetRecord:
    asset_id: str
    source_prompt: str
    native_extents: tuple[float, float, float]
    front_axis: str = "+y"

    def __post_init__(self):
        if not all(e > 0 for e in self.native_extents):
            raise NonpositiveExtent(f"asset {self.asset_id} has extents {self.native_extents}")

    def to_dict(self) -> dict[str, Any]:
        return {"asset_id": self.asset_id, "source_prompt": self.source_prompt,
                "native_extents": list(self.native_extents), "front_axis": self.front_axis}

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "AssetRecord":
        return cls(d["asset_id"], d.get("source_prompt", ""), tuple(float(x) for x in d["native_extents"]),
                   d.get("front_axis", "+y"))


def placeholder_assets(scene: Scene3D, scene_id: str = "scene") -> list[AssetRecord]:
    """Unit-cube stand-ins for when no asset generator is attached."""
    return [AssetRecord(f"{scene_id}-{i:02d}", o.asset_prompt, (1.0, 1.0, 1.0))
            for i, o in enumerate(scene.objects)]


@dataclass(frozen=True)
class ManifestEntry:
    label: str
    asset_id: str
    scale: tuple[float, float, float]
    translation: tuple[float, float, float]
    yaw: float
    asset_prompt: str


@dataclass(frozen=True)
class SceneManifest:
    room: Room
    objects: tuple[ManifestEntry, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": MANIFEST_VERSION,
            "room": self.room.to_dict(),
            "objects": [
                {"index": i, "label": e.label, "asset_id": e.asset_id, "scale": list(e.scale),
                 "translation": list(e.translation), "yaw": e.yaw, "asset_prompt": e.asset_prompt}
                for i, e in enumerate(self.objects)
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n"


def assemble_scene(scene: Scene3D, assets: Sequence[AssetRecord]) -> SceneManifest:
    if len(assets) != len(scene.objects):
        raise AssetCountMismatch(len(scene.objects), len(assets))
    entries = []
    for obj, asset in zip(scene.objects, assets):
        target = (obj.length, obj.width, obj.height)
        if not all(t > 0 for t in target):
            raise NonpositiveExtent(f"object {obj.label} has extents {target}")
        scale = tuple(t / n for t, n in zip(target, asset.native_extents))
        entries.append(ManifestEntry(obj.label, asset.asset_id, scale,
                                     (obj.center_x, obj.center_y, obj.center_z), obj.orientation,
                                     obj.asset_prompt))
    return SceneManifest(scene.room, tuple(entries))


# -- evaluation ----------------------------------------------------------------------

_CRITERIA_LEGEND = {
    "spatial": ", ".join(f"{c.name} ({c.value})" for c in SPATIAL_ORDER),
    "quant": ", ".join(f"{c.name} ({c.value})" for c in QUANT_ORDER),
}


def asset_metadata(scene: Scene3D, assets: Sequence[AssetRecord] | None) -> str:
    if not assets or len(assets) != len(scene.objects):
        counts = scene.bev_layout().class_counts()
        return "object counts: " + ", ".join(f"{c} x{n}" for c, n in sorted(counts.items()))
    lines = ["generated assets (index: label, native extents x*y*z, front axis, target l*w*h):"]
    for i, (o, a) in enumerate(zip(scene.objects, assets)):
        nx, ny, nz = (format_number(v) for v in a.native_extents)
        lines.append(f"{i}: {o.label}, {nx}*{ny}*{nz}, {a.front_axis}, "
                     f"{format_number(o.length)}*{format_number(o.width)}*{format_number(o.height)}")
    return "\n".join(lines)


def spatial_prompt(description: str, room: Room, layout_text: str, cot: CotRecord | None,
                   suggestions: bool) -> str:
    prompt = render_prompt("spatial_eval", {
        "scene_description": description, "max_length": room.max_length, "max_width": room.max_width,
        "bev_layout": layout_text, "CoT": cot.text() if cot is not None else "(not provided)",
    })
    if suggestions:
        prompt += get_fragment("eval_suggestions").render({"criteria": _CRITERIA_LEGEND["spatial"]})
    return prompt


def quant_prompt(description: str, room: Room, layout_text: str, metadata: str, suggestions: bool) -> str:
    prompt = render_prompt("quant_eval", {
        "scene_description": description, "max_length": room.max_length, "max_width": room.max_width,
        "bev_layout": layout_text, "metadata": metadata,
    })
    prompt += get_fragment("quant_expected_counts").render({})
    if suggestions:
        prompt += get_fragment("eval_suggestions").render({"criteria": _CRITERIA_LEGEND["quant"]})
    return prompt


@dataclass
class Evaluation:
    verdicts: VerdictMatrix
    feedback: Feedback
    errors: list[str] = field(default_factory=list)

    def __iter__(self):
        return iter((self.verdicts, self.feedback))


def evaluate_scene(scene: Scene3D, cot: CotRecord | None, render: bytes, oracle, *,
                   description: str, assets: Sequence[AssetRecord] | None = None) -> Evaluation:
    """Run both evaluators in suggestion mode and merge their verdicts.

    A malformed answer from one evaluator is recorded in ``errors`` while the
    other evaluator's verdicts and suggestions are kept.
    """
    room = scene.room
    bev = scene.bev_layout()
    layout_text = serialize_scene3d(scene)
    calls = (
        ("spatial_evaluator", spatial_prompt(description, room, layout_text, cot, True), render,
         parse_spatial_verdicts, SPATIAL_ORDER),
        ("quant_evaluator", quant_prompt(description, room, layout_text, asset_metadata(scene, assets), True),
         None, parse_quant_verdicts, QUANT_ORDER),
    )
    merged = VerdictMatrix(instance_counts=dict(bev.class_counts()))
    suggestions: list[Suggestion] = []
    errors: list[str] = []
    failures: list[Exception] = []
    for role, prompt, image, parse, owned in calls:
        response = _ask(oracle, role, prompt, 0, image)
        try:
            payload = extract_json(response)
            verdicts = parse(payload, bev)
            found = _parse_suggestions(payload, scene, verdicts, owned)
        except (SchemaError, NoStructureFound, UnbalancedStructure) as exc:
            errors.append(f"{role}: {type(exc).__name__}: {exc}")
            failures.append(exc)
            log.warning("%s answer unusable: %s", role, exc)
            continue
        merged = merged.merge(verdicts)
        suggestions.extend(found)
    if len(failures) == len(calls):
        raise SchemaError("both evaluators returned unusable answers: " + "; ".join(errors))
    return Evaluation(merged, Feedback(tuple(suggestions)), errors)


# -- alignment loop ---------------------------------------------------------------------

@dataclass
class AlignmentState:
    scene: Scene3D
    cot: CotRecord | None
    max_iters: int
    iteration: int = 0
    history: list[tuple[Feedback, Scene3D]] = field(default_factory=list)
    evaluations: list[Evaluation] = field(default_factory=list)


def _update(state: AlignmentState, feedback: Feedback, oracle, description: str) -> tuple[CotRecord | None, Scene3D]:
    """Re-invoke the generators with feedback appended as context.

    Footprint suggestions (position, size, orientation, count) go back to the
    BEV generator; height suggestions go to the lifter.
    """
    scene, room = state.scene, state.scene.room
    t = state.iteration + 1
    cot = state.cot
    if feedback.affects_footprint:
        current = cot.response_json() if cot is not None else serialize_bev_layout(scene.bev_layout())
        cot, bev = generate_bev(description, room, oracle,
                                revision=Revision(t, current, feedback.render(scene)))
        vertical = feedback.vertical
        lift_rev = None
        if vertical and len(bev.objects) == len(scene.objects):
            lift_rev = Revision(t, serialize_scene3d(scene), vertical.render(scene))
        return cot, lift_to_3d(description, bev, room, oracle, revision=lift_rev)
    revision = Revision(t, serialize_scene3d(scene), feedback.render(scene))
    return cot, lift_to_3d(description, scene.bev_layout(), room, oracle, revision=revision)


def run_alignment_loop(initial: Scene3D, cot: CotRecord | None, assets: Sequence[AssetRecord] | None,
                       oracle, max_iters: int = 3, *, description: str = "",
                       render_fn: Callable[[Scene3D], bytes] | None = None,
                       image_override: Callable[[Scene3D], bytes] | None = None) -> AlignmentState:
    """Evaluate, update, repeat until no suggestions remain or ``max_iters`` updates ran.

    Evaluators see the BEV rasterization unless ``image_override`` supplies
    another picture (e.g. a render of the assembled 3D scene).
    """
    if max_iters < 0:
        raise ValueError("max_iters must be >= 0")
    description = description or (cot.prompt if cot is not None else "")
    render_fn = image_override or render_fn or (lambda s: rasterize_bev(s, s.room))
    state = AlignmentState(initial, cot, max_iters)
    while state.iteration < max_iters:
        evaluation = evaluate_scene(state.scene, state.cot, render_fn(state.scene), oracle,
                                    description=description, assets=assets)
        state.evaluations.append(evaluation)
        if not evaluation.feedback:
            break
        try:
            new_cot, new_scene = _update(state, evaluation.feedback, oracle, description)
        except LayoutForgeError as exc:
            raise AlignmentAborted(exc, state.scene, state.history) from exc
        state.history.append((evaluation.feedback, new_scene))
        state.scene, state.cot = new_scene, new_cot
        state.iteration += 1
    return state
