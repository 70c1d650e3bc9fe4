"""A deterministic, rule-based stand-in for the chat models.

It answers every prompt template this package sends with well-formed JSON
computed from simple heuristics (an object vocabulary with typical sizes,
shelf packing, geometric checks). It is not a model and makes no claim to
layout quality; it exists so that record mode, cassettes and the whole
pipeline can be exercised offline. ``scripts/record_fixtures.py`` uses it
to produce the committed replay cassettes.
"""

from __future__ import annotations

import json
import random
import re
from collections import Counter

import httpx

from layoutforge.geometry import Box3D, Footprint, boxes_collide_3d, footprints_overlap, is_out_of_bound
from layoutforge.layout import (
    BevLayout,
    BevObject,
    Room,
    Scene3D,
    SceneObject3D,
    format_number,
    mentioned_count,
    normalize_class,
    parse_bev_line,
    parse_scene3d_line,
    serialize_bev_layout,
    serialize_scene3d_object,
)
from layoutforge.llm import wire

# name -> (length, width, height, base elevation); layout pixels
VOCABULARY = {
    "washing machine": (30, 30, 40, 0),
    "dryer": (30, 30, 40, 0),
    "laundry basket": (20, 16, 20, 0),
    "ironing board": (50, 14, 36, 0),
    "utility sink": (30, 24, 36, 0),
    "shelf": (44, 14, 70, 0),
    "shelves": (44, 14, 70, 0),
    "cabinet": (40, 20, 80, 0),
    "drying rack": (40, 20, 50, 0),
    "detergent bottle": (6, 6, 12, 70),
    "bed": (88, 40, 36, 0),
    "nightstand": (18, 18, 24, 0),
    "desk": (60, 30, 30, 0),
    "chair": (18, 18, 36, 0),
    "table": (60, 40, 30, 0),
    "sofa": (80, 34, 34, 0),
    "lamp": (10, 10, 20, 30),
    "bookshelf": (40, 14, 80, 0),
    "treadmill": (70, 34, 50, 0),
    "mirror": (40, 4, 60, 30),
    "yoga mat": (70, 25, 2, 0),
    "dumbbell rack": (50, 20, 30, 0),
    "water dispenser": (14, 14, 45, 0),
    "toy shelf": (44, 14, 40, 0),
    "bean bag": (30, 30, 24, 0),
    "play mat": (60, 60, 2, 0),
    "workbench": (80, 30, 36, 0),
    "toolbox": (20, 10, 10, 36),
    "stool": (14, 14, 24, 0),
}
_ORDERED_NAMES = sorted(VOCABULARY, key=len, reverse=True)
GAP = 6


def extract_objects(description: str) -> list[tuple[str, int]]:
    """Vocabulary objects mentioned in ``description`` with their stated counts."""
    text = description.lower()
    found: list[tuple[int, str, int]] = []
    taken: list[tuple[int, int]] = []
    for name in _ORDERED_NAMES:
        for m in re.finditer(rf"\b{re.escape(name)}(?:s|es)?\b", text):
            span = (m.start(), m.end())
            if any(a < span[1] and span[0] < b for a, b in taken):
                continue
            taken.append(span)
            canonical = "shelf" if name == "shelves" else name
            if any(n == canonical for _, n, _ in found):
                continue
            count = mentioned_count(text, name) or (2 if m.group(0) != name and canonical != "shelf" else 1)
            found.append((m.start(), canonical, count))
    found.sort()
    return [(name, count) for _, name, count in found]


def plan_layout(description: str, room: Room, seed: int = 0) -> BevLayout:
    """Shelf-pack the mentioned objects row by row; odd seeds add placement noise."""
    rng = random.Random(seed)
    items = [name for name, n in extract_objects(description) for _ in range(n)]
    if not items:
        items = ["table", "chair"]
    items.sort(key=lambda n: -VOCABULARY[n][0] * VOCABULARY[n][1])
    objects = []
    x, y, row_depth = GAP, GAP, 0
    for name in items:
        l, w, _, _ = VOCABULARY[name]
        if x + l + GAP > room.max_length:
            x, y, row_depth = GAP, y + row_depth + GAP, 0
        cx, cy = x + l / 2, y + w / 2
        if seed % 2:
            cx += rng.choice([-1, 1]) * rng.randint(0, 14)
            cy += rng.choice([-1, 1]) * rng.randint(0, 10)
        objects.append(BevObject(name, l, w, cx, cy, 0))
        x += l + GAP
        row_depth = max(row_depth, w)
    return BevLayout(tuple(objects))


_STOPS = ("\n\nRevision round", "\n\nYour previous answer", "\nchain of thought:")


def _section(prompt: str, start: str, stops: tuple[str, ...] = _STOPS) -> str:
    i = prompt.find(start)
    if i < 0:
        return ""
    body = prompt[i + len(start):]
    for marker in stops:
        if marker in body:
            body = body[:body.index(marker)]
    return body


def _room_from_prompt(prompt: str) -> Room:
    m = re.search(r"(\d+)px long.*?(\d+)px wide", prompt, re.S)
    h = re.search(r"between 0 and (\d+)", prompt)
    if m is None:
        m = re.search(r"max_length: (\d+) px.*?max_width: (\d+) px", prompt, re.S)
    return Room(int(m.group(1)), int(m.group(2)), int(h.group(1)) if h else 160)


def _layout_lines(block: str) -> list[str]:
    lines = (ln.strip() for ln in block.split("\n"))
    return [ln for ln in lines if "{" in ln and "length:" in ln and not ln.startswith("room {")]


def _summary(layout: BevLayout) -> str:
    counts = layout.class_counts()
    words = {1: "one", 2: "two", 3: "three", 4: "four", 5: "five", 6: "six"}
    parts = [f"{words.get(n, n)} {c}{'s' if n > 1 else ''}" for c, n in counts.items()]
    return ", ".join(parts)


def _cot(prompt_text: str, layout: BevLayout) -> dict:
    order = sorted(set(o.label for o in layout.objects),
                   key=lambda lb: -max(o.length * o.width for o in layout.objects if o.label == lb))
    reasoning = " ".join(
        f"The {o.label} measures {format_number(o.length)}x{format_number(o.width)}px at "
        f"{format_number(o.orientation)} degrees and goes at ({format_number(o.center_x)}, "
        f"{format_number(o.center_y)}), leaving a walkway to its neighbours."
        for o in layout.objects)
    return {
        "prompt": prompt_text,
        "response": {
            "Entity Extraction": f"The scene needs {_summary(layout)}.",
            "Order Decision": "Place " + ", then ".join(order) + ".",
            "Spatial Reasoning": reasoning,
            "Answer Organization": serialize_bev_layout(layout),
        },
    }


class StandInModel:
    """Answers layoutforge prompts with heuristic JSON. See module docstring."""

    def __init__(self, mutate_lift: bool = False):
        self.mutate_lift = mutate_lift
        self.calls: Counter = Counter()

    def respond(self, prompt: str, image: bytes | None = None, seed: int = 0) -> str:
        if "Plan a top-down 2D layout" in prompt:
            kind = "bev"
        elif "lifting a 2D layout to a 3D layout" in prompt:
            kind = "lift"
        elif "four judgments correspond" in prompt:
            kind = "quant"
        elif "three judgments correspond" in prompt:
            kind = "spatial"
        elif "three levels of granularity" in prompt:
            kind = "describe"
        elif "write a logical thought process" in prompt:
            kind = "cot"
        elif '"score": 1-100' in prompt:
            kind = "score"
        else:
            return "I can only help with layout prompts."
        self.calls[kind] += 1
        return getattr(self, f"_{kind}")(prompt, image, seed)

    # generators
    def _bev(self, prompt, image, seed):
        description = _section(prompt, "Scene description:\n").strip()
        room = _room_from_prompt(prompt)
        layout = plan_layout(description, room, seed)
        return "```json\n" + json.dumps(_cot(description, layout), indent=2) + "\n```"

    def _lift(self, prompt, image, seed):
        bev_lines = _layout_lines(_section(prompt, "BEV layout:\n"))
        layout, prompts = [], []
        for n, line in enumerate(bev_lines, start=1):
            obj = parse_bev_line(line, n)
            _, _, h, base = VOCABULARY.get(normalize_class(obj.label), (0, 0, 30, 0))
            x = obj.center_x + (3 if self.mutate_lift and n == 1 else 0)
            o3 = SceneObject3D(obj.label, obj.length, obj.width, x, obj.center_y, obj.orientation,
                               height=h, center_z=base + h / 2)
            layout.append(serialize_scene3d_object(o3))
            prompts.append(f"A plain {obj.label} with simple rectangular lines and a neutral finish.")
        return json.dumps({"3D_layout": layout, "object_prompts": prompts}, indent=2)

    # evaluators
    def _scene_objects(self, prompt):
        block = _section(prompt, "BEV layout:\n")
        objs = []
        for n, line in enumerate(_layout_lines(block), start=1):
            objs.append(parse_scene3d_line(line, n) if "height:" in line else parse_bev_line(line, n))
        return objs

    def _quant(self, prompt, image, seed):
        objs = self._scene_objects(prompt)
        description = _section(prompt, "scene description: ", ("\n",))
        expected = dict(extract_objects(description))
        counts = Counter(normalize_class(o.label) for o in objs)
        bad_dist, bad_size = set(), set()
        for i, a in enumerate(objs):
            la = normalize_class(a.label)
            ref = VOCABULARY.get(la)
            if ref and not (0.5 <= a.length / ref[0] <= 2 and 0.5 <= a.width / ref[1] <= 2):
                bad_size.add(i)
            for j, b in enumerate(objs):
                if j <= i:
                    continue
                if isinstance(a, SceneObject3D) and isinstance(b, SceneObject3D):
                    hit = boxes_collide_3d(Box3D.from_object(a), Box3D.from_object(b))
                else:
                    hit = footprints_overlap(Footprint.from_object(a), Footprint.from_object(b))
                if hit:
                    bad_dist.update((i, j))
        verdicts, suggestions = {}, []
        for cls in counts:
            idx = [i for i, o in enumerate(objs) if normalize_class(o.label) == cls]
            dist_ok = not any(i in bad_dist for i in idx)
            qty_ok = cls not in expected or expected[cls] == counts[cls]
            size_ok = not any(i in bad_size for i in idx)
            verdicts[cls] = ["Yes" if ok else "No" for ok in (dist_ok, qty_ok, size_ok, True)]
            for i in idx:
                if i in bad_dist:
                    suggestions.append({"object_index": i, "criterion": "C4", "aspect": "position",
                                        "instruction": f"move the {cls} so it no longer overlaps its neighbour"})
                if i in bad_size:
                    l, w = VOCABULARY[cls][:2]
                    suggestions.append({"object_index": i, "criterion": "C5", "aspect": "size",
                                        "instruction": f"resize the {cls} to a typical footprint",
                                        "proposed": {"length": l, "width": w}})
        out: dict = verdicts
        if '"expected_counts"' in prompt:
            out = dict(verdicts)
            out["expected_counts"] = expected or dict(counts)
        if '"suggestions": [' in prompt:
            out = {"verdicts": verdicts, "suggestions": suggestions}
            if '"expected_counts"' in prompt:
                out["expected_counts"] = expected or dict(counts)
        return "Dimension checks done.\n" + json.dumps(out, indent=2)

    def _spatial(self, prompt, image, seed):
        objs = self._scene_objects(prompt)
        room = _room_from_prompt(prompt)
        cot_text = _section(prompt, "chain of thought:\n", _STOPS[:2]).lower()
        verdicts, suggestions = {}, []
        for i, o in enumerate(objs):
            cls = normalize_class(o.label)
            oob = is_out_of_bound(Footprint.from_object(o), room)
            row = verdicts.setdefault(cls, ["Yes", "Yes", "Yes"])
            if oob:
                row[1] = "No"
                suggestions.append({"object_index": i, "criterion": "C2", "aspect": "position",
                                    "instruction": f"pull the {cls} back inside the room"})
            if "(not provided)" not in cot_text and cls not in cot_text:
                row[2] = "No"
        out = verdicts
        if '"suggestions": [' in prompt:
            out = {"verdicts": verdicts, "suggestions": suggestions}
        return json.dumps(out, indent=2)

    def _score(self, prompt, image, seed):
        objs = self._scene_objects(prompt)
        room = _room_from_prompt(prompt)
        oob = sum(is_out_of_bound(Footprint.from_object(o), room) for o in objs)
        return json.dumps({"score": max(1, 100 - 20 * oob)})

    # corpora
    def _describe(self, prompt, image, seed):
        n_types = int(re.search(r"for (\d+) different", prompt).group(1))
        quotas = {g: int(re.search(rf"(\d+) (?:descriptions )?at {g}", prompt).group(1))
                  for g in ("coarse", "medium", "fine-grained")}
        scenes = [
            ("laundry room", ["washing machine", "dryer", "laundry basket", "shelf"]),
            ("home gym", ["treadmill", "yoga mat", "dumbbell rack", "mirror", "water dispenser"]),
            ("playroom", ["toy shelf", "bean bag", "play mat"]),
            ("workshop", ["workbench", "toolbox", "stool", "cabinet"]),
        ]
        out = []
        for k in range(n_types):
            scene_type, objs = scenes[k % len(scenes)]
            if k >= len(scenes):
                scene_type = f"{scene_type} {k // len(scenes) + 1}"
            for g, n in quotas.items():
                for j in range(n):
                    if g == "coarse":
                        text = f"A {scene_type} with " + ", ".join(objs[:-1]) + f", and a {objs[-1]}."
                    elif g == "medium":
                        text = (f"In a {scene_type}, a {objs[0]} stands against the back wall, "
                                f"a {objs[1]} sits beside it, and a {objs[-1]} is near the door.")
                    else:
                        text = (f"A {objs[0]} is placed against the left wall of the {scene_type}. "
                                f"A {objs[1]} sits 10px to its right, and a {objs[-1]} stands in the corner.")
                    out.append({"scene_type": scene_type, "granularity": g, "description": text,
                                "room_size": {"length": 256 - 8 * j, "width": 171, "height": 160}})
        return json.dumps(out, indent=2)

    def _cot(self, prompt, image, seed):
        lines = _layout_lines(_section(prompt, "BEV layout:\n"))
        layout = BevLayout(tuple(parse_bev_line(ln, n) for n, ln in enumerate(lines, start=1)))
        text = f"A room with {_summary(layout)}."
        return json.dumps(_cot(text, layout), indent=2)

    # transport
    def handler(self, request: httpx.Request) -> httpx.Response:
        body = json.loads(request.content)
        prompt, image = wire.request_prompt(body)
        return httpx.Response(200, json=wire.chat_response(self.respond(prompt, image, body.get("seed", 0))))

    def client(self) -> httpx.Client:
        return httpx.Client(transport=httpx.MockTransport(self.handler))

    def complete(self, request) -> str:
        """Direct oracle use, bypassing HTTP."""
        return self.respond(request.prompt, request.image, request.decode.seed)


def scene_for(description: str, room: Room, seed: int = 0) -> Scene3D:
    """Convenience: the 3D scene the stand-in would produce end to end."""
    model = StandInModel()
    bev = plan_layout(description, room, seed)
    lifted = json.loads(model._lift("BEV layout:\n" + serialize_bev_layout(bev), None, seed))
    from layoutforge.layout import parse_scene3d

    return parse_scene3d(lifted, room)
