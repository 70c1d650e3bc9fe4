"""Training corpora: scene descriptions, CoT SFT records, sampled batches, DPO pairs."""

from __future__ import annotations

import json
import logging
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np

from layoutforge.errors import (
    AnswerMismatch,
    LayoutForgeError,
    QuotaViolation,
    RoomBoundViolation,
    SchemaError,
)
from layoutforge.layout import (
    MAX_ROOM_DIM,
    BevLayout,
    CotRecord,
    Room,
    normalize_class,
    parse_cot_record,
    serialize_bev_layout,
)
from layoutforge.llm.jsonx import extract_json
from layoutforge.llm.templates import get_fragment, render_prompt
from layoutforge.pipeline import _ask, bev_prompt, generate_bev, quant_prompt, spatial_prompt
from layoutforge.render import rasterize_bev
from layoutforge.reward import (
    RewardReport,
    VerdictMatrix,
    parse_quant_verdicts,
    parse_spatial_verdicts,
    ratio_vector,
    reward_report,
)

log = logging.getLogger(__name__)

SFT_VERSION = 1
BATCH_VERSION = 1
GRANULARITIES = ("coarse", "medium", "fine")


# -- scene descriptions -----------------------------------------------------------

@dataclass(frozen=True)
class DescriptionQuota:
    num_scene_types: int = 40
    coarse: int = 2
    medium: int = 2
    fine: int = 1

    def __post_init__(self):
        if min(self.num_scene_types, self.coarse, self.medium, self.fine) < 1:
            raise ValueError("quotas must be positive")

    @classmethod
    def parse(cls, text: str) -> "DescriptionQuota":
        """``TYPES:COARSE:MEDIUM:FINE``, e.g. ``40:2:2:1``."""
        parts = [int(p) for p in text.split(":")]
        if len(parts) != 4:
            raise ValueError("quotas look like TYPES:COARSE:MEDIUM:FINE")
        return cls(*parts)

    def per_type(self) -> dict[str, int]:
        return {"coarse": self.coarse, "medium": self.medium, "fine": self.fine}


@dataclass(frozen=True)
class DescriptionRecord:
    scene_type: str
    granularity: str
    description: str
    room: Room

    def to_dict(self) -> dict[str, Any]:
        return {"scene_type": self.scene_type, "granularity": self.granularity,
                "description": self.description, "room_size": self.room.to_dict()}


def _granularity(raw: Any) -> str:
    g = str(raw).strip().lower().replace("_", "-")
    if g in ("fine-grained", "fine grained"):
        g = "fine"
    if g not in GRANULARITIES:
        raise SchemaError(f"unknown granularity {raw!r}")
    return g


def _room_from(raw: Any) -> Room:
    if not isinstance(raw, dict):
        raise SchemaError("room_size must be an object")
    dims = []
    for key in ("length", "width", "height"):
        v = raw.get(key)
        if isinstance(v, bool) or not isinstance(v, int):
            raise RoomBoundViolation(f"room {key} must be an integer, got {v!r}")
        if not 1 <= v <= MAX_ROOM_DIM:
            raise RoomBoundViolation(f"room {key} = {v} outside [1, {MAX_ROOM_DIM}]")
        dims.append(v)
    return Room(*dims)


def parse_descriptions(payload: Any, quota: DescriptionQuota) -> list[DescriptionRecord]:
    if not isinstance(payload, list):
        raise SchemaError("description payload must be a JSON list")
    records = []
    for item in payload:
        if not isinstance(item, dict):
            raise SchemaError("each description must be a JSON object")
        text = str(item.get("description", "")).strip()
        scene_type = " ".join(str(item.get("scene_type", "")).lower().split())
        if not text or not scene_type:
            raise SchemaError("description and scene_type are required")
        records.append(DescriptionRecord(scene_type, _granularity(item.get("granularity")), text,
                                         _room_from(item.get("room_size"))))
    by_type: dict[str, Counter] = defaultdict(Counter)
    for r in records:
        by_type[r.scene_type][r.granularity] += 1
    want = quota.per_type()
    for scene_type, got in by_type.items():
        if any(got[g] != n for g, n in want.items()):
            detail = ", ".join(f"{g} {got[g]}/{n}" for g, n in want.items())
            raise QuotaViolation(scene_type, detail)
    if len(by_type) != quota.num_scene_types:
        log.warning("asked for %d scene types, got %d", quota.num_scene_types, len(by_type))
    return records


def generate_descriptions(quota: DescriptionQuota, oracle, seed: int = 0) -> list[DescriptionRecord]:
    prompt = render_prompt("description_gen", {
        "num_scene_types": quota.num_scene_types, "num_coarse_per_type": quota.coarse,
        "num_medium_per_type": quota.medium, "num_fine_per_type": quota.fine,
    })
    return parse_descriptions(extract_json(_ask(oracle, "descriptor", prompt, seed)), quota)


# -- CoT SFT records --------------------------------------------------------------------

def _footprint_multiset(layout: BevLayout) -> Counter:
    return Counter((normalize_class(o.label), round(o.length), round(o.width), round(o.center_x),
                    round(o.center_y), round(o.orientation) % 360) for o in layout.objects)


def cot_datagen_prompt(gt_layout: BevLayout, room: Room) -> str:
    prompt = render_prompt("cot_datagen", {"max_length": room.max_length, "max_width": room.max_width})
    return prompt + get_fragment("cot_datagen_layout").render({"bev_layout": serialize_bev_layout(gt_layout)})


def build_cot_sft_record(gt_layout: BevLayout, room: Room, oracle, seed: int = 0) -> tuple[str, CotRecord]:
    """Annotate a ground-truth layout with a CoT transcript; reject answers that drift."""
    response = _ask(oracle, "descriptor", cot_datagen_prompt(gt_layout, room), seed)
    record = parse_cot_record(extract_json(response))
    want, got = _footprint_multiset(gt_layout), _footprint_multiset(record.layout())
    if want != got:
        missing = sorted((want - got).elements())
        extra = sorted((got - want).elements())
        raise AnswerMismatch(f"answer differs from ground truth: missing {missing}, extra {extra}")
    return record.prompt, record


def sft_line(record: CotRecord, room: Room) -> str:
    """One trainer-agnostic record: the generator's prompt in, the CoT JSON out."""
    return json.dumps({
        "version": SFT_VERSION,
        "instruction": bev_prompt(record.prompt, room),
        "input": "",
        "output": record.response_json(),
    }, ensure_ascii=False, sort_keys=True)


@dataclass
class SftStatus:
    source: str
    status: str
    detail: str = ""


def build_sft_corpus(scenes: Iterable[tuple[str, Room, BevLayout]], oracle) -> tuple[list[str], list[SftStatus]]:
    lines, report = [], []
    for source, room, layout in scenes:
        try:
            _, record = build_cot_sft_record(layout, room, oracle)
        except (LayoutForgeError, ValueError) as exc:
            report.append(SftStatus(source, "rejected", f"{type(exc).__name__}: {exc}"))
            continue
        lines.append(sft_line(record, room))
        report.append(SftStatus(source, "accepted"))
    return lines, report


# -- sampled batches --------------------------------------------------------------------

def score_layout(description: str, room: Room, layout: BevLayout, cot: CotRecord | None, oracle,
                 seed: int = 0) -> tuple[VerdictMatrix, list[float]]:
    """Both evaluators in reward mode (verdicts only) -> merged verdicts and r_1..r_7."""
    text = serialize_bev_layout(layout)
    counts = layout.class_counts()
    metadata = "object counts: " + ", ".join(f"{c} x{n}" for c, n in sorted(counts.items()))
    png = rasterize_bev(layout, room)
    spatial = parse_spatial_verdicts(
        _ask(oracle, "spatial_evaluator", spatial_prompt(description, room, text, cot, False), seed, png), layout)
    quant = parse_quant_verdicts(
        _ask(oracle, "quant_evaluator", quant_prompt(description, room, text, metadata, False), seed), layout)
    verdicts = spatial.merge(quant)
    return verdicts, ratio_vector(verdicts, layout)


@dataclass
class Sample:
    seed: int
    cot: CotRecord
    ratios: list[float]

    @property
    def layout(self) -> BevLayout:
        return self.cot.layout()


@dataclass
class SampleBatch:
    prompt_id: str
    description: str
    room: Room
    samples: list[Sample]
    failures: list[dict[str, Any]] = field(default_factory=list)

    @property
    def ratio_matrix(self) -> np.ndarray:
        return np.array([s.ratios for s in self.samples], dtype=float)

    def report(self) -> RewardReport:
        """Entropy weights pooled over this batch only."""
        return reward_report(self.ratio_matrix)

    def to_dict(self) -> dict[str, Any]:
        return {
            "version": BATCH_VERSION,
            "prompt_id": self.prompt_id,
            "description": self.description,
            "room": self.room.to_dict(),
            "samples": [{"seed": s.seed, "cot": s.cot.to_payload(), "ratios": s.ratios} for s in self.samples],
            "failures": self.failures,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "SampleBatch":
        room = Room(d["room"]["length"], d["room"]["width"], d["room"]["height"])
        samples = [Sample(s["seed"], parse_cot_record(s["cot"]), [float(x) for x in s["ratios"]])
                   for s in d["samples"]]
        return cls(d["prompt_id"], d["description"], room, samples, list(d.get("failures", [])))

    def dump(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True, ensure_ascii=False) + "\n",
                              encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> "SampleBatch":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class BatchTooSmall(LayoutForgeError):
    pass


def sample_layout_batch(description: str, room: Room, T: int, oracle, *, prompt_id: str = "prompt",
                        parallel: int = 1, seeds: Sequence[int] | None = None) -> SampleBatch:
    if T < 2:
        raise ValueError("a batch needs T >= 2 samples")
    seeds = list(seeds) if seeds is not None else list(range(T))

    def one(seed: int):
        try:
            cot, layout = generate_bev(description, room, oracle, seed=seed)
            _, ratios = score_layout(description, room, layout, cot, oracle, seed)
            return Sample(seed, cot, ratios)
        except (LayoutForgeError, ValueError) as exc:
            return {"seed": seed, "error": f"{type(exc).__name__}: {exc}"}

    if parallel > 1:
        with ThreadPoolExecutor(max_workers=parallel) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    samples = [r for r in results if isinstance(r, Sample)]
    failures = [r for r in results if not isinstance(r, Sample)]
    for f in failures:
        log.warning("sample with seed %s failed: %s", f["seed"], f["error"])
    if len(samples) < 2:
        raise BatchTooSmall(f"only {len(samples)} of {T} samples survived")
    return SampleBatch(prompt_id, description, room, samples, failures)


# -- preference pairs ----------------------------------------------------------------------

@dataclass(frozen=True)
class PreferencePair:
    prompt: str
    chosen: str
    rejected: str
    reward_chosen: float
    reward_rejected: float

    def to_json(self) -> str:
        return json.dumps({"prompt": self.prompt, "chosen": self.chosen, "rejected": self.rejected,
                           "reward_chosen": self.reward_chosen, "reward_rejected": self.reward_rejected},
                          ensure_ascii=False, sort_keys=True)


def preference_indices(rewards: Sequence[float], threshold: float) -> list[tuple[int, int]]:
    """Every ordered (i, j) with rewards[i] - rewards[j] > threshold."""
    r = [float(x) for x in rewards]
    return [(i, j) for i in range(len(r)) for j in range(len(r)) if i != j and r[i] - r[j] > threshold]


def build_dpo_pairs(batch: SampleBatch, threshold: float = 0.20,
                    max_pairs: int | None = None) -> list[PreferencePair]:
    rewards = batch.report().rewards.tolist()
    idx = preference_indices(rewards, threshold)
    if max_pairs is not None:
        idx = sorted(idx, key=lambda ij: (-(rewards[ij[0]] - rewards[ij[1]]), ij))[:max_pairs]
    prompt = bev_prompt(batch.description, batch.room)
    return [PreferencePair(prompt, batch.samples[i].cot.response_json(), batch.samples[j].cot.response_json(),
                           rewards[i], rewards[j]) for i, j in idx]


def write_dpo_jsonl(pairs: Iterable[PreferencePair], path: str | Path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for p in pairs:
            fh.write(p.to_json() + "\n")
            n += 1
    return n


def read_dpo_jsonl(path: str | Path, threshold: float) -> list[PreferencePair]:
    """Load pairs and re-check the reward gap of every one."""
    pairs = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            d = json.loads(line)
            pair = PreferencePair(d["prompt"], d["chosen"], d["rejected"],
                                  float(d["reward_chosen"]), float(d["reward_rejected"]))
            if not pair.reward_chosen - pair.reward_rejected > threshold:
                raise SchemaError(f"line {n}: reward gap does not exceed {threshold}")
            pairs.append(pair)
    return pairs


__all__ = [
    "DescriptionQuota", "DescriptionRecord", "generate_descriptions", "parse_descriptions",
    "build_cot_sft_record", "build_sft_corpus", "sft_line", "score_layout", "Sample", "SampleBatch",
    "sample_layout_batch", "PreferencePair", "build_dpo_pairs", "preference_indices",
    "write_dpo_jsonl", "read_dpo_jsonl", "BatchTooSmall",
]
