"""Hot byte-level loops for the TVC codec, compiled with numba.

These kernels run with the GIL released so decoder threads can overlap on
real CPU work.  All of them operate on uint8 arrays and implement the
bit-exact RLE used by the container: a sequence of (run_length >= 1, value)
byte pairs with maximal runs capped at 255.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def rle_encode(data: np.ndarray, out: np.ndarray) -> int:
    """Encode `data` into `out`; returns bytes written, -1 if out is full."""
    n = data.size
    cap = out.size
    pos = 0
    i = 0
    while i < n:
        v = data[i]
        run = 1
        while i + run < n and run < 255 and data[i + run] == v:
            run += 1
        if pos + 2 > cap:
            return -1
        out[pos] = run
        out[pos + 1] = v
        pos += 2
        i += run
    return pos


@njit(cache=True, nogil=True)
def rle_decode(payload: np.ndarray, out: np.ndarray) -> int:
    """Decode raw RLE bytes; returns bytes produced, -1 on length mismatch."""
    m = payload.size
    n = out.size
    if m % 2 != 0:
        return -1
    pos = 0
    for i in range(0, m, 2):
        run = payload[i]
        v = payload[i + 1]
        if run == 0 or pos + run > n:
            return -1
        for k in range(run):
            out[pos + k] = v
        pos += run
    if pos != n:
        return -1
    return pos


@njit(cache=True, nogil=True)
def rle_decode_add(payload: np.ndarray, base: np.ndarray, out: np.ndarray) -> int:
    """Decode an RLE delta and add it (mod 256) onto `base`."""
    m = payload.size
    n = out.size
    if m % 2 != 0 or base.size != n:
        return -1
    pos = 0
    for i in range(0, m, 2):
        run = payload[i]
        v = payload[i + 1]
        if run == 0 or pos + run > n:
            return -1
        for k in range(run):
            out[pos + k] = base[pos + k] + v  # uint8 wraparound
        pos += run
    if pos != n:
        return -1
    return pos


@njit(cache=True, nogil=True)
def scan_records(span: np.ndarray, max_n: int, stops: np.ndarray,
                 kinds: np.ndarray, press: np.ndarray, offs: np.ndarray,
                 lens: np.ndarray) -> int:
    """Walk <kind u8, presentation u32, length u32> record headers in `span`,
    filling the metadata arrays, until a presentation index in `stops` has
    been collected or `max_n` records are seen.  Returns the record count,
    -1 for a truncated header, or -2 for a payload overrunning the span."""
    size = span.size
    pos = 0
    n = 0
    while n < max_n:
        if pos + 9 > size:
            return -1
        pres = (np.int64(span[pos + 1]) | (np.int64(span[pos + 2]) << 8)
                | (np.int64(span[pos + 3]) << 16)
                | (np.int64(span[pos + 4]) << 24))
        ln = (np.int64(span[pos + 5]) | (np.int64(span[pos + 6]) << 8)
              | (np.int64(span[pos + 7]) << 16)
              | (np.int64(span[pos + 8]) << 24))
        if pos + 9 + ln > size:
            return -2
        kinds[n] = span[pos]
        press[n] = pres
        offs[n] = pos + 9
        lens[n] = ln
        pos += 9 + ln
        n += 1
        for i in range(stops.size):
            if stops[i] == pres:
                return n
    return n


@njit(cache=True, nogil=True)
def decode_records(kinds: np.ndarray, press: np.ndarray, offs: np.ndarray,
                   lens: np.ndarray, payload: np.ndarray, n: int,
                   ra: int, rb: int, pa: int, pb: int, out: np.ndarray) -> int:
    """Decode `n` sequential frame records in one GIL-free pass.

    `out` has n + 2 rows: rows 0 and 1 may hold carried-in reference frames
    (row indices `ra` older / `rb` newer, -1 if absent, with presentation
    indices `pa` / `pb`); record r decodes into row r + 2.  Kinds are
    0=intra, 1=forward delta, 2=bidirectional delta.  Returns the index of
    the first malformed record, or -1 on success.
    """
    for r in range(n):
        k = kinds[r]
        pl = payload[offs[r]:offs[r] + lens[r]]
        row = out[r + 2]
        if k == 0:
            res = rle_decode(pl, row)
        elif k == 1:
            if rb < 0:
                return r
            res = rle_decode_add(pl, out[rb], row)
        elif k == 2:
            if ra < 0 or rb < 0 or not (pa < press[r] < pb):
                return r
            res = rle_decode_avg_add(pl, out[ra], out[rb], row)
        else:
            return r
        if res < 0:
            return r
        if k != 2:
            ra = rb
            pa = pb
            rb = r + 2
            pb = press[r]
    return -1


@njit(cache=True, nogil=True)
def rle_decode_avg_add(payload: np.ndarray, a: np.ndarray, b: np.ndarray,
                       out: np.ndarray) -> int:
    """Decode an RLE delta and add it onto the per-byte floor average of
    `a` and `b` (the bi-directional reference)."""
    m = payload.size
    n = out.size
    if m % 2 != 0 or a.size != n or b.size != n:
        return -1
    pos = 0
    for i in range(0, m, 2):
        run = payload[i]
        v = payload[i + 1]
        if run == 0 or pos + run > n:
            return -1
        for k in range(run):
            avg = (np.uint16(a[pos + k]) + np.uint16(b[pos + k])) >> 1
            out[pos + k] = np.uint8(avg) + v
        pos += run
    if pos != n:
        return -1
    return pos
