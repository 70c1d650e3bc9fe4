"""Write tests/golden/*.txt: the six published prompts with fixed bindings.

Deliberately independent of ``layoutforge.llm.templates``: the listings are
cut straight out of the source document and bound with plain ``str.replace``
so the golden files can catch drift in the packaged templates or the
renderer.

    python3 scripts/make_golden_prompts.py [path/to/source.md]
"""

import re
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
ORDER = ("cot_datagen", "lifting", "quant_eval", "spatial_eval", "description_gen", "simple_reward")

LAYOUT = ("bed {length: 88px; width: 40px; center_x: 120px; center_y: 60px; orientation: 0 degrees;}\n"
          "nightstand {length: 18px; width: 18px; center_x: 60px; center_y: 30px; orientation: 0 degrees;}")
BINDINGS = {
    "max_length": "256",
    "max_width": "171",
    "max_height": "160",
    "text_description": "A compact bedroom with a single bed and one nightstand.",
    "scene_description": "A compact bedroom with a single bed and one nightstand.",
    "bev_layout": LAYOUT,
    "metadata": "object counts: bed x1, nightstand x1",
    "CoT": "Entity Extraction: one bed, one nightstand.",
    "num_scene_types": "40",
    "num_coarse_per_type": "2",
    "num_medium_per_type": "2",
    "num_fine_per_type": "1",
}


def listings(text: str) -> list[str]:
    pattern = r"\\begin\{lstlisting\}\[breaklines=true\]\n(.*?)\n\\end\{lstlisting\}"
    return re.findall(pattern, text, re.S)


def main(source: Path) -> None:
    found = listings(source.read_text(encoding="utf-8"))
    if len(found) != len(ORDER):
        raise SystemExit(f"expected {len(ORDER)} listings, found {len(found)}")
    out = ROOT / "tests" / "golden"
    out.mkdir(parents=True, exist_ok=True)
    for name, body in zip(ORDER, found):
        for key, value in BINDINGS.items():
            body = body.replace("{" + key + "}", value)
        (out / f"{name}.txt").write_text(body, encoding="utf-8")
        print(out / f"{name}.txt")


if __name__ == "__main__":
    main(Path(sys.argv[1]) if len(sys.argv) > 1 else ROOT / "paper.md")
