"""Regenerate the committed test fixtures.

Everything here is deterministic. Oracle responses come from the rule-based
stand-in (``layoutforge.llm.standin``) reached through the real record-mode
HTTP path, so the cassettes exercise the same code a live recording would.

    python3 scripts/make_fixtures.py
"""

import json
import random
import shutil
import tempfile
from pathlib import Path

from layoutforge.cli import main
from layoutforge.layout import (
    BevLayout,
    BevObject,
    Room,
    Scene3D,
    SceneObject3D,
    parse_bev_line,
    serialize_scene_file,
)
from layoutforge.llm.standin import StandInModel, _layout_lines, _section, plan_layout

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "tests" / "fixtures"

LAUNDRY = "A laundry room with a washing machine, a dryer, two laundry baskets, shelves, and an ironing board."
GYM = "A home gym with a treadmill, a yoga mat, a dumbbell rack, and a water dispenser."
ROOM = "256x171x160"
GENERATE_SEED = 1

GT_SCENES = [
    ("A bedroom with a bed and two nightstands.", Room(200, 160, 160)),
    ("An office with a desk, a chair, and a bookshelf.", Room(180, 140, 160)),
    ("A living room with a sofa, a table, and a lamp.", Room(220, 180, 160)),
    ("A study with a desk, a chair, a lamp, and a bookshelf.", Room(200, 150, 160)),
    ("A laundry room with a washing machine, a dryer, and a utility sink.", Room(160, 120, 160)),
    ("A workshop with a workbench, a stool, and a cabinet.", Room(200, 140, 160)),
    ("A playroom with a toy shelf, a bean bag, and a play mat.", Room(180, 160, 160)),
    ("A dining area with a table and four chairs.", Room(180, 160, 160)),
    ("A home gym with a treadmill, a mirror, and a yoga mat.", Room(220, 160, 160)),
    ("A guest room with a bed, two nightstands, and a lamp.", Room(220, 170, 160)),
]
DROP_NIGHTSTAND_IN = 9  # this ground-truth scene gets an annotation that loses one nightstand


class DroppingStandIn(StandInModel):
    """Annotates like the stand-in but drops a nightstand when a lamp is present."""

    def _cot(self, prompt, image, seed):
        lines = _layout_lines(_section(prompt, "BEV layout:\n"))
        labels = [parse_bev_line(ln, i).label for i, ln in enumerate(lines, 1)]
        payload = json.loads(super()._cot(prompt, image, seed))
        if "lamp" in labels and labels.count("nightstand") == 2:
            answer = payload["response"]["Answer Organization"].split("\n")
            answer.remove(next(ln for ln in answer if ln.startswith("nightstand")))
            payload["response"]["Answer Organization"] = "\n".join(answer)
        return json.dumps(payload, indent=2)


def _number(rng: random.Random, lo: float, hi: float) -> float:
    v = rng.uniform(lo, hi)
    return float(round(v, rng.choice([0, 0, 1, 2, 3])))


def write_corpus() -> None:
    out = FIX / "corpus"
    shutil.rmtree(out, ignore_errors=True)
    out.mkdir(parents=True)
    rng = random.Random(20240611)
    labels = ["bed", "nightstand", "desk", "office chair", "floor lamp", "sofa", "coffee table",
              "washing machine", "tv stand", "bookshelf", "rug", "ceiling lamp"]
    for k in range(50):
        room = Room(rng.randint(64, 256), rng.randint(64, 256), rng.randint(100, 256))
        objs = []
        for _ in range(rng.randint(1, 9)):
            label = rng.choice(labels)
            l, w = _number(rng, 2, 90), _number(rng, 2, 60)
            x, y = _number(rng, 0, room.max_length), _number(rng, 0, room.max_width)
            o = rng.choice([0.0, 90.0, 180.0, 270.0, _number(rng, 0, 359.9)])
            if k % 2:
                h = _number(rng, 1, 80)
                objs.append(SceneObject3D(label, l, w, x, y, o, height=h, center_z=_number(rng, 0, 120)))
            else:
                objs.append(BevObject(label, l, w, x, y, o))
        layout = Scene3D(room, tuple(objs)) if k % 2 else BevLayout(tuple(objs))
        (out / f"layout_{k:02d}.scene").write_text(serialize_scene_file(room, layout), encoding="utf-8")


def write_metric_fixtures() -> None:
    room = Room(100, 100, 100)
    three = Scene3D(room, (
        SceneObject3D("cabinet", 20, 20, 30, 30, 0, height=40, center_z=20),
        SceneObject3D("cabinet", 20, 20, 40, 35, 0, height=40, center_z=20),
        SceneObject3D("stool", 10, 10, 80, 80, 0, height=20, center_z=10),
    ))
    four = Scene3D(room, (
        SceneObject3D("shelf", 10, 10, 2, 50, 0, height=40, center_z=20),  # x extent starts at -3
        SceneObject3D("desk", 30, 20, 50, 50, 0, height=30, center_z=15),
        SceneObject3D("chair", 10, 10, 50, 80, 90, height=20, center_z=10),
        SceneObject3D("lamp", 6, 6, 90, 10, 0, height=20, center_z=10),
    ))
    (FIX / "three_obj.scene").write_text(serialize_scene_file(room, three), encoding="utf-8")
    (FIX / "four_obj.scene").write_text(serialize_scene_file(room, four), encoding="utf-8")


def write_gt() -> None:
    out = FIX / "gt"
    shutil.rmtree(out, ignore_errors=True)
    out.mkdir(parents=True)
    for k, (text, room) in enumerate(GT_SCENES):
        extra = text.replace("four chairs", "4 chairs")
        layout = plan_layout(extra, room, seed=0)
        (out / f"gt_{k:02d}.scene").write_text(serialize_scene_file(room, layout), encoding="utf-8")


def _run(argv, model) -> None:
    code = main(argv, client=model.client())
    if code != 0:
        raise SystemExit(f"{argv} exited {code}")


def record_cassettes() -> None:
    cas = FIX / "laundry.cas"
    mutated = FIX / "laundry_mutated.cas"
    batches = FIX / "batches"
    for p in (cas, mutated):
        p.unlink(missing_ok=True)
    shutil.rmtree(batches, ignore_errors=True)
    model = StandInModel()
    with tempfile.TemporaryDirectory() as tmp:
        _run(["--seed", str(GENERATE_SEED), "generate", LAUNDRY, "--room", ROOM, "--mode", "record",
              "--cassette", str(cas), "--out", tmp], model)
        _run(["--seed", "0", "sample", LAUNDRY, "--room", ROOM, "--T", "3", "--prompt-id", "laundry",
              "--out-dir", str(batches), "--mode", "record", "--cassette", str(cas)], model)
        _run(["--seed", "0", "sample", GYM, "--room", ROOM, "--T", "4", "--prompt-id", "gym",
              "--out-dir", str(batches), "--mode", "record", "--cassette", str(cas)], model)
        _run(["describe", "--quotas", "1:2:2:1", "--mode", "record", "--cassette", str(cas)], model)
        _run(["score", str(FIX / "three_obj.scene"), "--description", "A small storage room with two cabinets "
              "and a stool.", "--mode", "record", "--cassette", str(cas)], model)
        _run(["sft-build", str(FIX / "gt"), "-o", str(Path(tmp) / "gt.sft.jsonl"), "--mode", "record",
              "--cassette", str(cas)], DroppingStandIn())
        code = main(["--seed", str(GENERATE_SEED), "generate", LAUNDRY, "--room", ROOM, "--mode", "record",
                     "--cassette", str(mutated), "--out", tmp], client=StandInModel(mutate_lift=True).client())
        if code != 1:
            raise SystemExit("the mutated recording should fail at the lift stage")


if __name__ == "__main__":
    write_corpus()
    write_metric_fixtures()
    write_gt()
    record_cassettes()
    for p in sorted(FIX.rglob("*")):
        if p.is_file():
            print(p.relative_to(ROOT), p.stat().st_size)
