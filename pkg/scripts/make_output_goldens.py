"""Write the digest goldens under tests/golden/.

renders.sha256   PNG digests of every corpus render
generate.sha256  digests of the replayed ``generate`` outputs

Run after a deliberate change to the rasterizer, the PNG writer, the
manifest or the run report.

    python3 scripts/make_output_goldens.py
"""

import hashlib
import sys
import tempfile
from pathlib import Path

from layoutforge.cli import main as cli
from layoutforge.layout import parse_scene_file
from layoutforge.render import rasterize_bev

ROOT = Path(__file__).resolve().parent.parent
FIX = ROOT / "tests" / "fixtures"
GOLDEN = ROOT / "tests" / "golden"
sys.path.insert(0, str(ROOT / "scripts"))
from make_fixtures import GENERATE_SEED, LAUNDRY, ROOM  # noqa: E402

GENERATE_OUTPUTS = ("manifest.json", "scene.bev.png", "scene.scene", "scene.cot.json",
                    "run_report.json", "run_report.txt")


def sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def main() -> None:
    lines = []
    for path in sorted((FIX / "corpus").glob("*.scene")):
        room, layout = parse_scene_file(path.read_text())
        lines.append(f"{path.name} {sha(rasterize_bev(layout, room))}\n")
    (GOLDEN / "renders.sha256").write_text("".join(lines))

    with tempfile.TemporaryDirectory() as tmp:
        code = cli(["--seed", str(GENERATE_SEED), "generate", LAUNDRY, "--room", ROOM,
                    "--cassette", str(FIX / "laundry.cas"), "--out", tmp])
        if code != 0:
            raise SystemExit(f"generate exited {code}")
        digests = [f"{name} {sha((Path(tmp) / name).read_bytes())}\n" for name in GENERATE_OUTPUTS]
    (GOLDEN / "generate.sha256").write_text("".join(digests))
    print(f"wrote {len(lines)} render digests and {len(digests)} generate digests")


if __name__ == "__main__":
    main()
