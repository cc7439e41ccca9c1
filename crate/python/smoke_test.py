"""Smoke test for the Python bindings. Run after
`pip install --no-build-isolation -e crates/py`."""

import json
import math
from pathlib import Path

import forkcode

DATA = Path(__file__).resolve().parent.parent / "crates" / "core" / "tests" / "data"


def binary_entropy(p):
    return -p * math.log2(p) - (1 - p) * math.log2(1 - p)


def test_region():
    src = forkcode.JointSource([2, 2], [0.375, 0.125, 0.125, 0.375])
    h = binary_entropy(0.25)
    assert abs(src.conditional_entropy([0]) - h) < 1e-9
    region = src.region()
    assert abs(region.min_sum_rate() - (1 + h)) < 1e-9
    assert region.contains([1.0, 1.0])
    assert not region.contains([0.5, 1.0])
    assert region.contains([h, float("inf")], closed=False) is False
    assert region.contains([h + 1e-3, float("inf")], closed=False)
    corners = sorted(region.corner_points())
    assert len(corners) == 2 and abs(corners[0][0] - h) < 1e-9


def test_sampling_and_hashing():
    src = forkcode.JointSource.from_json((DATA / "dsbs.json").read_text())
    blocks = src.sample(16, 7, 2)
    assert len(blocks) == 2 and all(len(s) == 16 for s in blocks[0])
    assert blocks == src.sample(16, 7, 2)
    x, y = "10110010", "01100111"
    xor = "".join("1" if a != b else "0" for a, b in zip(x, y))
    hx, hy, hxy = (forkcode.hash_bits(v, 3, 42) for v in (x, y, xor))
    assert hx == "110"
    assert hxy == "".join("1" if a != b else "0" for a, b in zip(hx, hy))


def test_experiments():
    plan = json.loads((DATA / "plan_strong.json").read_text())
    plan.update(n_list=[32], trials=20)
    rows = json.loads(forkcode.achievability(json.dumps(plan)))
    assert rows[0]["n"] == 32

    report = json.loads(forkcode.simulate((DATA / "session.json").read_text(), seed=3))
    assert report["success"] and report["links"][0]["bits"] == 43

    rel = json.loads((DATA / "ball32.json").read_text())
    fp = json.loads(forkcode.fingerprint(json.dumps(rel), [16, 22], 5, slack=16.0))
    assert fp["star"]["passed"] and fp["necessity"]["passed"]
    assert all(len(c) <= r for c, r in zip(fp["codewords"], [16, 22]))


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_"):
            fn()
            print(f"{name}: ok")
