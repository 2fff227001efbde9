"""TVC container header probe.

Reads exactly the 25-byte fixed header — never the GOP index or any frame
payload — which is all a symbolic client needs: geometry, pixel format,
frame rate, and frame count.
"""

from __future__ import annotations

import struct

HEADER_FMT = "<4sHHBIIII"
HEADER_SIZE = struct.calcsize(HEADER_FMT)  # 25
MAGIC = b"TVC1"

CODE_PIXFMT = {0: "gray8", 1: "rgb8", 2: "bgr8", 3: "yuv420p"}


class ProbeError(Exception):
    pass


def probe_header(path: str) -> dict:
    with open(path, "rb") as f:
        head = f.read(HEADER_SIZE)
    if len(head) < HEADER_SIZE:
        raise ProbeError(f"{path}: truncated container header")
    magic, width, height, fmt_code, fps_num, fps_den, frame_count, _ = \
        struct.unpack(HEADER_FMT, head)
    if magic != MAGIC:
        raise ProbeError(f"{path}: not a TVC container")
    if fmt_code not in CODE_PIXFMT:
        raise ProbeError(f"{path}: unknown pixel format code {fmt_code}")
    return {
        "width": width,
        "height": height,
        "pixfmt": CODE_PIXFMT[fmt_code],
        "fps_num": fps_num,
        "fps_den": fps_den,
        "frame_count": frame_count,
    }
