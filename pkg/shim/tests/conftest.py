import csv
import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from framecast import synth
from framecast.ir import FrameType, PixelFormat


@pytest.fixture(scope="session")
def media(tmp_path_factory):
    """Synthetic source containers plus a per-frame annotation CSV."""
    d = tmp_path_factory.mktemp("media")
    specs = {
        "a": (PixelFormat.RGB8, 0),
        "b": (PixelFormat.YUV420P, 7),
        "c": (PixelFormat.GRAY8, 13),
        "m": (PixelFormat.GRAY8, 99),
    }
    paths = {}
    for name, (fmt, seed) in specs.items():
        p = d / f"{name}.tvc"
        p.write_bytes(synth.make_synthetic_tvc(
            FrameType(64, 64, fmt), 20, gop_size=4,
            b_frames=(name in ("b", "m")), seed=seed))
        paths[name] = str(p)
    csv_path = d / "objects.csv"
    with open(csv_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["frame", "x1", "y1", "x2", "y2", "flag"])
        for i in range(20):
            w.writerow([i, (3 * i) % 40, (5 * i) % 40,
                        (3 * i) % 40 + 18, (5 * i) % 40 + 12, i % 3 == 0])
    paths["csv"] = str(csv_path)
    return paths
