"""Deterministic synthetic test content.

Frame f, pixel (x, y), channel c has byte value (x + 2*y + 3*f + 37*c +
seed) mod 256.  For planar yuv420p the chroma planes use their own
subsampled (x, y) coordinates with channel indices 1 (U) and 2 (V).  The
formula is frozen: fixtures are bit-reproducible across platforms and
golden tests depend on it.
"""

from __future__ import annotations

import numpy as np

from .codec import Raster, encode_tvc
from .ir import FrameType, PixelFormat


def synthetic_raster(ftype: FrameType, frame_index: int, seed: int = 0) -> Raster:
    w, h = ftype.width, ftype.height
    base = frame_index * 3 + seed

    def plane(pw: int, ph: int, channel: int) -> np.ndarray:
        xs = np.arange(pw, dtype=np.int64)
        ys = np.arange(ph, dtype=np.int64)
        return ((xs[None, :] + 2 * ys[:, None] + 37 * channel + base) % 256).astype(np.uint8)

    if ftype.pixfmt is PixelFormat.GRAY8:
        data = plane(w, h, 0).tobytes()
    elif ftype.pixfmt.interleaved:
        channels = [plane(w, h, c) for c in range(3)]
        data = np.stack(channels, axis=2).tobytes()
    else:
        data = (plane(w, h, 0).tobytes()
                + plane(w // 2, h // 2, 1).tobytes()
                + plane(w // 2, h // 2, 2).tobytes())
    return Raster(ftype, data)


def synthetic_frames(ftype: FrameType, count: int, seed: int = 0) -> list:
    return [synthetic_raster(ftype, f, seed) for f in range(count)]


def make_synthetic_tvc(ftype: FrameType, count: int, fps=(30, 1),
                       gop_size: int = 30, b_frames: bool = False,
                       seed: int = 0) -> bytes:
    return encode_tvc(synthetic_frames(ftype, count, seed), fps, gop_size, b_frames)
