import json
from pathlib import Path

import pytest

from layoutforge.layout import BevLayout, BevObject, Room, SceneObject3D

FIXTURES = Path(__file__).parent / "fixtures"
GOLDEN = Path(__file__).parent / "golden"

LAUNDRY = "A laundry room with a washing machine, a dryer, two laundry baskets, shelves, and an ironing board."
LAUNDRY_ROOM = "256x171x160"
LAUNDRY_SEED = 1


def bev(*objs) -> BevLayout:
    return BevLayout(tuple(BevObject(*o) for o in objs))


def obj3d(label, l, w, h, x, y, z, o=0.0, prompt="") -> SceneObject3D:
    return SceneObject3D(label, l, w, x, y, o, height=h, center_z=z, asset_prompt=prompt)


def cot_payload(layout_text: str, entities: str = "", prompt: str = "a room") -> dict:
    return {
        "prompt": prompt,
        "response": {
            "Entity Extraction": entities or "objects as listed",
            "Order Decision": "largest first",
            "Spatial Reasoning": "each object goes along a wall",
            "Answer Organization": layout_text,
        },
    }


class ScriptedOracle:
    """Role-keyed queues of canned responses; records every request."""

    def __init__(self, **scripts):
        self.scripts = {role: list(v) for role, v in scripts.items()}
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        queue = self.scripts[request.model_role]
        item = queue.pop(0) if len(queue) > 1 else queue[0]
        out = item(request) if callable(item) else item
        return out if isinstance(out, str) else json.dumps(out)

    def count(self, role):
        return sum(r.model_role == role for r in self.requests)


@pytest.fixture
def room():
    return Room(256, 171, 160)


# -- acceptance summary ---------------------------------------------------------------
# Tests in test_acceptance.py tag themselves with record_property("criterion", ...);
# the summary prints one PASS/FAIL line per tagged criterion.

_CRITERIA: dict[str, str] = {}


def pytest_runtest_logreport(report):
    name = dict(report.user_properties).get("criterion")
    if name is None:
        return
    if report.when == "call" or report.failed:
        if _CRITERIA.get(name) != "failed":
            _CRITERIA[name] = report.outcome


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for name in sorted(_CRITERIA, key=lambda n: int(n.split()[0])):
        verdict = "PASS" if _CRITERIA[name] == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  criterion {name}")
