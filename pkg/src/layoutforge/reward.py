"""CoT-grounded layout reward: verdict parsing, validity ratios, entropy weighting.

The evaluators answer per object *class*; a class verdict applies to every
instance of that class when counting satisfied objects.
"""

from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Mapping, Sequence

import numpy as np

from layoutforge.errors import (
    EmptyLayout,
    SchemaError,
    SingleSample,
    WeightSumError,
    ZeroExpectedTotal,
)
from layoutforge.layout import BevLayout, normalize_class, normalize_key

log = logging.getLogger(__name__)


class Criterion(enum.Enum):
    C1 = "relative alignment"
    C2 = "global positioning"
    C3 = "CoT consistency"
    C4 = "inter-object distance"
    C5 = "size proportion"
    C6 = "orientation validity"
    C7 = "quantity alignment"

    @property
    def index(self) -> int:
        return int(self.name[1:]) - 1

    @property
    def owner(self) -> str:
        return "spatial_evaluator" if self.index < 3 else "quant_evaluator"

    @classmethod
    def parse(cls, text: str) -> "Criterion":
        t = text.strip().upper()
        if t in cls.__members__:
            return cls[t]
        for c in cls:
            if normalize_key(c.value) == normalize_key(text):
                return c
        raise SchemaError(f"unknown criterion {text!r}")


CRITERIA = tuple(Criterion)
SPATIAL_ORDER = (Criterion.C1, Criterion.C2, Criterion.C3)
# the quantitative prompt lists distance, quantity, size, orientation
QUANT_ORDER = (Criterion.C4, Criterion.C7, Criterion.C5, Criterion.C6)

_RESERVED_KEYS = {"expected counts", "suggestions", "verdicts", "explanation", "reasoning"}


@dataclass
class VerdictMatrix:
    verdicts: dict[str, dict[Criterion, bool]] = field(default_factory=dict)
    instance_counts: dict[str, int] = field(default_factory=dict)
    expected_counts: dict[str, int] | None = None
    warnings: list[str] = field(default_factory=list)

    def get(self, cls_name: str, criterion: Criterion) -> bool:
        return self.verdicts.get(cls_name, {}).get(criterion, False)

    def merge(self, other: "VerdictMatrix") -> "VerdictMatrix":
        merged = {k: dict(v) for k, v in self.verdicts.items()}
        for k, v in other.verdicts.items():
            merged.setdefault(k, {}).update(v)
        counts = dict(self.instance_counts)
        counts.update(other.instance_counts)
        expected = other.expected_counts if other.expected_counts is not None else self.expected_counts
        return VerdictMatrix(merged, counts, expected, self.warnings + other.warnings)

    def failing(self) -> list[tuple[str, Criterion]]:
        return [(c, k) for c, row in self.verdicts.items() for k, ok in row.items() if not ok]

    def to_dict(self) -> dict[str, Any]:
        return {
            "verdicts": {c: {k.name: v for k, v in sorted(row.items(), key=lambda kv: kv[0].index)}
                         for c, row in sorted(self.verdicts.items())},
            "instance_counts": dict(sorted(self.instance_counts.items())),
            "expected_counts": None if self.expected_counts is None else dict(sorted(self.expected_counts.items())),
            "warnings": list(self.warnings),
        }


def _outer_mapping(payload: Any) -> Mapping[str, Any]:
    if isinstance(payload, str):
        from layoutforge.llm.jsonx import extract_json

        payload = extract_json(payload)
    if not isinstance(payload, Mapping):
        raise SchemaError("verdict payload must be a JSON object")
    return payload


def _payload_mapping(payload: Any) -> Mapping[str, Any]:
    """The class -> verdicts mapping, unwrapping an inference-mode ``verdicts`` key."""
    outer = _outer_mapping(payload)
    for key, value in outer.items():
        if isinstance(key, str) and normalize_key(key) == "verdicts" and isinstance(value, Mapping):
            return value
    return outer


def _yes_no(token: Any, cls_name: str) -> bool:
    if isinstance(token, str):
        t = token.strip().lower()
        if t == "yes":
            return True
        if t == "no":
            return False
    raise SchemaError(f"verdict for {cls_name!r} must be 'Yes' or 'No', got {token!r}")


def _parse_verdicts(payload: Any, layout: BevLayout, order: Sequence[Criterion]) -> VerdictMatrix:
    data = _payload_mapping(payload)
    counts = dict(layout.class_counts())
    out = VerdictMatrix(instance_counts=counts)
    for key, value in data.items():
        if not isinstance(key, str):
            raise SchemaError(f"class name must be a string, got {key!r}")
        if normalize_key(key) in _RESERVED_KEYS:
            continue
        if not isinstance(value, list) or len(value) != len(order):
            n = len(value) if isinstance(value, list) else type(value).__name__
            raise SchemaError(f"{key!r}: expected {len(order)} verdicts, got {n}")
        row = {crit: _yes_no(tok, key) for crit, tok in zip(order, value)}
        cls_name = normalize_class(key)
        if cls_name not in counts:
            out.warnings.append(f"dropped verdicts for {cls_name!r}: not in layout")
            continue
        if cls_name in out.verdicts:
            out.warnings.append(f"duplicate verdicts for {cls_name!r}; keeping the last")
        out.verdicts[cls_name] = row
    for cls_name in counts:
        if cls_name not in out.verdicts:
            out.warnings.append(f"no verdicts for {cls_name!r}; defaulting to No")
            out.verdicts[cls_name] = {crit: False for crit in order}
    for w in out.warnings:
        log.warning(w)
    return out


def parse_spatial_verdicts(payload: Any, layout: BevLayout) -> VerdictMatrix:
    return _parse_verdicts(payload, layout, SPATIAL_ORDER)


def parse_quant_verdicts(payload: Any, layout: BevLayout) -> VerdictMatrix:
    outer = _outer_mapping(payload)
    out = _parse_verdicts(outer, layout, QUANT_ORDER)
    raw = None
    for scope in (outer, _payload_mapping(outer)):
        for key, value in scope.items():
            if isinstance(key, str) and normalize_key(key) == "expected counts":
                raw = value
    if raw is not None:
        if not isinstance(raw, Mapping):
            raise SchemaError("expected_counts must map class names to integers")
        expected = {}
        for k, v in raw.items():
            if isinstance(v, bool) or not isinstance(v, int) or v < 0:
                raise SchemaError(f"expected count for {k!r} must be a non-negative integer, got {v!r}")
            expected[normalize_class(k)] = expected.get(normalize_class(k), 0) + v
        out.expected_counts = expected
    return out


def criterion_ratios(verdicts: VerdictMatrix, layout: BevLayout) -> list[float]:
    """r_1..r_6: fraction of objects whose class passes each criterion."""
    n = len(layout.objects)
    if n == 0:
        raise EmptyLayout()
    classes = [normalize_class(o.label) for o in layout.objects]
    return [sum(verdicts.get(c, crit) for c in classes) / n for crit in CRITERIA[:6]]


def quantity_alignment_ratio(expected: Mapping[str, int], actual: Mapping[str, int]) -> float:
    total = sum(expected.values())
    if total <= 0:
        raise ZeroExpectedTotal()
    classes = set(expected) | set(actual)
    deviation = sum(abs(actual.get(c, 0) - expected.get(c, 0)) for c in classes)
    # rational arithmetic so the result is the correctly rounded value (2/3, not 1 - 1/3)
    return float(max(Fraction(0), 1 - Fraction(deviation, total)))


def ratio_vector(verdicts: VerdictMatrix, layout: BevLayout) -> list[float]:
    """Full r_1..r_7 for one sample.

    r_7 uses the count formula when the quantitative evaluator returned
    expected counts; otherwise the share of classes judged Yes on quantity.
    """
    r = criterion_ratios(verdicts, layout)
    actual = dict(layout.class_counts())
    if verdicts.expected_counts and sum(verdicts.expected_counts.values()) > 0:
        r7 = quantity_alignment_ratio(verdicts.expected_counts, actual)
    else:
        r7 = sum(verdicts.get(c, Criterion.C7) for c in actual) / len(actual)
    return r + [r7]


def entropy_weights(ratios: Sequence[Sequence[float]] | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-criterion entropy H_k over T samples and weights w_k ∝ 1 − H_k."""
    r = np.asarray(ratios, dtype=float)
    if r.ndim != 2:
        raise ValueError("ratios must be a T x K matrix")
    t, k = r.shape
    if t < 2:
        raise SingleSample()
    if np.any(r < 0) or np.any(r > 1):
        raise ValueError("ratios must lie in [0, 1]")
    col = r.sum(axis=0)
    entropies = np.ones(k)
    for j in range(k):
        if col[j] == 0:
            continue  # all-zero criterion carries no information
        p = r[:, j] / col[j]
        nz = p[p > 0]
        entropies[j] = -(nz * np.log(nz)).sum() / math.log(t)
    entropies = np.clip(entropies, 0.0, 1.0)
    spread = 1.0 - entropies
    total = spread.sum()
    if total <= 0:
        weights = np.full(k, 1.0 / k)
    else:
        weights = spread / total
    return entropies, weights


def uniform_weights(k: int = 7) -> np.ndarray:
    return np.full(k, 1.0 / k)


def aggregate_rewards(ratios: Sequence[Sequence[float]] | np.ndarray, weights: Sequence[float] | np.ndarray) -> np.ndarray:
    r = np.asarray(ratios, dtype=float)
    w = np.asarray(weights, dtype=float)
    if abs(w.sum() - 1.0) > 1e-6:
        raise WeightSumError(f"weights sum to {w.sum()!r}, not 1")
    if r.ndim != 2 or r.shape[1] != w.shape[0]:
        raise ValueError(f"ratios {r.shape} do not match {w.shape[0]} weights")
    return np.clip(r @ w, 0.0, 1.0)


@dataclass(frozen=True)
class RewardReport:
    ratios: np.ndarray
    entropies: np.ndarray
    weights: np.ndarray
    rewards: np.ndarray

    def to_dict(self) -> dict[str, Any]:
        return {
            "ratios": self.ratios.tolist(),
            "entropies": self.entropies.tolist(),
            "weights": self.weights.tolist(),
            "rewards": self.rewards.tolist(),
        }


def reward_report(ratios: Sequence[Sequence[float]] | np.ndarray) -> RewardReport:
    r = np.asarray(ratios, dtype=float)
    entropies, weights = entropy_weights(r)
    return RewardReport(r, entropies, weights, aggregate_rewards(r, weights))
