"""TVC: a bit-exact toy video container with keyframe-led GOPs.

Layout (all integers little-endian):

    header     magic "TVC1", width u16, height u16, pixfmt u8
               (0=gray8, 1=rgb8, 2=bgr8, 3=yuv420p), fps_num u32,
               fps_den u32, frame_count u32, gop_count u32
    gop index  gop_count x { byte_offset u64, first_presentation_index u32,
               frames_in_gop u32 }
    payload    per GOP, frame records in decode order:
               { frame_kind u8 (0=I, 1=P, 2=B), presentation_index u32,
                 payload_len u32, payload bytes }

Frame payloads are RLE ((u8 run 1..255, u8 value) pairs, maximal runs) over
either the raw plane bytes (I), the byte-wise mod-256 difference against the
previous I/P frame in presentation order (P), or the difference against the
per-byte floor average of the surrounding I/P frames (B).  B frames are
stored before the B-preceding P, so decode order differs from presentation
order; this is what makes out-of-order access genuinely expensive.
"""

from __future__ import annotations

import os
import struct
import threading
from bisect import bisect_right
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .ir import FrameType, PixelFormat

MAGIC = b"TVC1"
HEADER_FMT = "<4sHHBIIII"
HEADER_SIZE = struct.calcsize(HEADER_FMT)  # 25
GOP_FMT = "<QII"
GOP_SIZE = struct.calcsize(GOP_FMT)  # 16
RECORD_FMT = "<BII"
RECORD_SIZE = struct.calcsize(RECORD_FMT)  # 9

KIND_I, KIND_P, KIND_B = 0, 1, 2

PIXFMT_CODE = {
    PixelFormat.GRAY8: 0,
    PixelFormat.RGB8: 1,
    PixelFormat.BGR8: 2,
    PixelFormat.YUV420P: 3,
}
CODE_PIXFMT = {v: k for k, v in PIXFMT_CODE.items()}


class CodecError(Exception):
    pass


class CorruptContainer(CodecError):
    pass


@dataclass(frozen=True)
class Raster:
    """An uncompressed frame: plane bytes with no padding (row stride equals
    width, times 3 for interleaved formats; yuv420p is Y then U then V)."""

    ftype: FrameType
    data: bytes

    def __post_init__(self):
        if len(self.data) != self.ftype.nbytes:
            raise ValueError(
                f"raster for {self.ftype} must be {self.ftype.nbytes} bytes, "
                f"got {len(self.data)}")

    def as_array(self) -> np.ndarray:
        """Read-only flat uint8 view of the plane bytes."""
        return np.frombuffer(self.data, dtype=np.uint8)


def raster_from_array(ftype: FrameType, arr: np.ndarray) -> Raster:
    return Raster(ftype, np.ascontiguousarray(arr, dtype=np.uint8).tobytes())


# ---------------------------------------------------------------------------
# Byte sources (the reader never assumes it holds the whole file)
# ---------------------------------------------------------------------------

class BytesSource:
    def __init__(self, data: bytes):
        self._data = data

    @property
    def size(self) -> int:
        return len(self._data)

    def read_at(self, offset: int, length: int) -> bytes:
        return self._data[offset:offset + length]


class FileSource:
    """Reads via pread so one handle is safe across decoder threads."""

    def __init__(self, path: str):
        self.path = path
        self._closed = True  # stays True if open() raises, for __del__
        self._fd = os.open(path, os.O_RDONLY)
        self._size = os.fstat(self._fd).st_size
        self._closed = False

    @property
    def size(self) -> int:
        return self._size

    def read_at(self, offset: int, length: int) -> bytes:
        return os.pread(self._fd, length, offset)

    def close(self):
        if not self._closed:
            os.close(self._fd)
            self._closed = True

    def __del__(self):
        try:
            self.close()
        except OSError:
            pass


class CountingSource:
    """Wraps a source and records every (offset, length) access."""

    def __init__(self, inner):
        self.inner = inner
        self.accesses: list[tuple[int, int]] = []
        self._lock = threading.Lock()

    @property
    def size(self) -> int:
        return self.inner.size

    def read_at(self, offset: int, length: int) -> bytes:
        with self._lock:
            self.accesses.append((offset, length))
        return self.inner.read_at(offset, length)

    @property
    def max_offset_read(self) -> int:
        return max((o + n for o, n in self.accesses), default=0)


def _as_source(container):
    if isinstance(container, (bytes, bytearray, memoryview)):
        return BytesSource(bytes(container))
    return container


# ---------------------------------------------------------------------------
# GOP structure
# ---------------------------------------------------------------------------

def gop_frame_kinds(count: int, b_frames: bool) -> list:
    """Presentation-order frame kinds for a GOP of `count` frames.

    Without B frames: I then P chain.  With B frames: I,B,P,B,P,...; a
    trailing frame that would be a dangling B (no following reference)
    becomes a P instead.
    """
    if count < 1:
        raise ValueError("GOP must contain at least one frame")
    kinds = [KIND_I]
    for i in range(1, count):
        if b_frames and i % 2 == 1 and i != count - 1:
            kinds.append(KIND_B)
        else:
            kinds.append(KIND_P)
    return kinds


def gop_decode_order(count: int, b_frames: bool) -> list:
    """Decode-order positions (offsets within the GOP) with their kinds.

    Each P is stored before the B that precedes it in presentation, e.g.
    presentation <I,B,P> is stored <I,P,B> and decodes as frames <0,2,1>.
    """
    kinds = gop_frame_kinds(count, b_frames)
    order = [0]
    i = 1
    while i < count:
        if kinds[i] == KIND_B:
            order.append(i + 1)  # the P that the B references
            order.append(i)
            i += 2
        else:
            order.append(i)
            i += 1
    return [(pos, kinds[pos]) for pos in order]


# ---------------------------------------------------------------------------
# Encoding
# ---------------------------------------------------------------------------

def _rle(data: np.ndarray) -> bytes:
    out = np.empty(2 * max(data.size, 1), dtype=np.uint8)
    n = _kernels.rle_encode(data, out)
    assert n >= 0
    return out[:n].tobytes()


def _floor_avg(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return ((a.astype(np.uint16) + b.astype(np.uint16)) >> 1).astype(np.uint8)


def encode_tvc(frames, fps, gop_size: int, b_frames: bool) -> bytes:
    """Losslessly encode a sequence of same-typed rasters.

    `fps` is an (fps_num, fps_den) pair.  Each GOP covers `gop_size`
    consecutive presentation frames; the last GOP may be short.
    """
    frames = list(frames)
    if not frames:
        raise CodecError("cannot encode an empty frame sequence")
    ftype = frames[0].ftype
    for f in frames:
        if f.ftype != ftype:
            raise CodecError(f"mixed frame types: {f.ftype} vs {ftype}")
    if gop_size < 1:
        raise CodecError("gop_size must be >= 1")
    fps_num, fps_den = fps

    arrays = [f.as_array() for f in frames]
    n = len(frames)
    gop_starts = list(range(0, n, gop_size))

    gop_payloads = []
    for start in gop_starts:
        count = min(gop_size, n - start)
        kinds = gop_frame_kinds(count, b_frames)
        records = []
        for pos, kind in gop_decode_order(count, b_frames):
            cur = arrays[start + pos]
            if kind == KIND_I:
                payload = _rle(cur)
            elif kind == KIND_P:
                ref_pos = max(j for j in range(pos) if kinds[j] != KIND_B)
                payload = _rle(cur - arrays[start + ref_pos])
            else:
                prev_pos = max(j for j in range(pos) if kinds[j] != KIND_B)
                next_pos = min(j for j in range(pos + 1, count) if kinds[j] != KIND_B)
                ref = _floor_avg(arrays[start + prev_pos], arrays[start + next_pos])
                payload = _rle(cur - ref)
            records.append(struct.pack(RECORD_FMT, kind, start + pos, len(payload)) + payload)
        gop_payloads.append(b"".join(records))

    header = struct.pack(HEADER_FMT, MAGIC, ftype.width, ftype.height,
                         PIXFMT_CODE[ftype.pixfmt], fps_num, fps_den,
                         n, len(gop_starts))
    index = bytearray()
    offset = HEADER_SIZE + GOP_SIZE * len(gop_starts)
    for start, payload in zip(gop_starts, gop_payloads):
        count = min(gop_size, n - start)
        index += struct.pack(GOP_FMT, offset, start, count)
        offset += len(payload)
    return header + bytes(index) + b"".join(gop_payloads)


def pack_masks(masks, fps, gop_size: int = 30, allow_gray: bool = False) -> bytes:
    """Pack binary gray8 masks (one object mask per frame) into a lossless
    TVC stream so specs can reference them as source frames."""
    masks = list(masks)
    if not masks:
        raise CodecError("no masks to pack")
    for i, m in enumerate(masks):
        if m.ftype.pixfmt is not PixelFormat.GRAY8:
            raise CodecError(f"mask {i} must be gray8, got {m.ftype.pixfmt.value}")
        if not allow_gray:
            vals = np.unique(m.as_array())
            if not np.isin(vals, (0, 255)).all():
                raise CodecError(f"mask {i} has non-binary values")
    return encode_tvc(masks, fps, gop_size, b_frames=False)


# ---------------------------------------------------------------------------
# Reading and decoding
# ---------------------------------------------------------------------------

def probe(container) -> dict:
    """Header and per-GOP summary, without touching any frame payloads."""
    source = _as_source(container)
    raw = source.read_at(0, HEADER_SIZE)
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise CorruptContainer("bad magic")
    if len(raw) < HEADER_SIZE:
        raise CorruptContainer("truncated header")
    _, width, height, fmt_code, fps_num, fps_den, frame_count, gop_count = \
        struct.unpack(HEADER_FMT, raw)
    if fmt_code not in CODE_PIXFMT:
        raise CorruptContainer(f"unknown pixfmt code {fmt_code}")
    index_raw = source.read_at(HEADER_SIZE, GOP_SIZE * gop_count)
    if len(index_raw) < GOP_SIZE * gop_count:
        raise CorruptContainer("truncated gop index")
    gops = []
    prev_offset = -1
    for i in range(gop_count):
        offset, first, count = struct.unpack_from(GOP_FMT, index_raw, i * GOP_SIZE)
        if offset <= prev_offset:
            raise CorruptContainer("gop offsets not strictly increasing")
        prev_offset = offset
        gops.append({"byte_offset": offset, "first_presentation_index": first,
                     "frames_in_gop": count})
    return {
        "width": width,
        "height": height,
        "pixfmt": CODE_PIXFMT[fmt_code].value,
        "fps_num": fps_num,
        "fps_den": fps_den,
        "frame_count": frame_count,
        "gop_count": gop_count,
        "gops": gops,
    }


class TvcReader:
    """Parsed header + GOP index over a byte source; payloads read lazily."""

    def __init__(self, container):
        self.source = _as_source(container)
        info = probe(self.source)
        self.frame_type = FrameType(info["width"], info["height"],
                                    PixelFormat(info["pixfmt"]))
        self.fps_num = info["fps_num"]
        self.fps_den = info["fps_den"]
        self.frame_count = info["frame_count"]
        self.gop_count = info["gop_count"]
        self._offsets = [g["byte_offset"] for g in info["gops"]]
        self._firsts = [g["first_presentation_index"] for g in info["gops"]]
        self._counts = [g["frames_in_gop"] for g in info["gops"]]

    def gop_of_frame(self, presentation_index: int) -> int:
        if not 0 <= presentation_index < self.frame_count:
            raise CodecError(f"frame {presentation_index} out of range "
                             f"(container has {self.frame_count})")
        return bisect_right(self._firsts, presentation_index) - 1

    def gop_first(self, ordinal: int) -> int:
        return self._firsts[ordinal]

    def gop_frame_count(self, ordinal: int) -> int:
        return self._counts[ordinal]

    def gop_frames(self, ordinal: int) -> range:
        return range(self._firsts[ordinal], self._firsts[ordinal] + self._counts[ordinal])

    def gop_byte_range(self, ordinal: int) -> tuple:
        start = self._offsets[ordinal]
        end = self._offsets[ordinal + 1] if ordinal + 1 < self.gop_count else self.source.size
        return start, end


class GopDecoder:
    """Iterator over the frames of a single GOP, in decode order.

    The FutureSet starts as every presentation index in the GOP and shrinks
    with each step; step() returns (presentation_index, Raster).
    """

    def __init__(self, reader: TvcReader, ordinal: int):
        if not 0 <= ordinal < reader.gop_count:
            raise CodecError(f"gop {ordinal} out of range")
        self.reader = reader
        self.ordinal = ordinal
        self.future_set = set(reader.gop_frames(ordinal))
        self._cursor, self._end = reader.gop_byte_range(ordinal)
        self._remaining = reader.gop_frame_count(ordinal)
        self._nbytes = reader.frame_type.nbytes
        # Last two decoded reference (I/P) frames, oldest first.
        self._refs: list[tuple[int, np.ndarray]] = []

    @property
    def done(self) -> bool:
        return self._remaining == 0

    def step(self):
        """Decode the next frame record; returns (presentation_index, Raster)."""
        if self.done:
            raise CodecError("GOP fully decoded")
        if self._cursor + RECORD_SIZE > self._end:
            raise CorruptContainer("truncated frame record")
        head = self.reader.source.read_at(self._cursor, RECORD_SIZE)
        if len(head) < RECORD_SIZE:
            raise CorruptContainer("truncated frame record")
        kind, pres, payload_len = struct.unpack(RECORD_FMT, head)
        if self._cursor + RECORD_SIZE + payload_len > self._end:
            raise CorruptContainer("frame payload overruns GOP byte range")
        payload = np.frombuffer(
            self.reader.source.read_at(self._cursor + RECORD_SIZE, payload_len),
            dtype=np.uint8)
        if payload.size < payload_len:
            raise CorruptContainer("truncated frame payload")
        self._cursor += RECORD_SIZE + payload_len

        out = np.empty(self._nbytes, dtype=np.uint8)
        if kind == KIND_I:
            ok = _kernels.rle_decode(payload, out)
        elif kind == KIND_P:
            if not self._refs:
                raise CorruptContainer("P frame with no reference")
            ok = _kernels.rle_decode_add(payload, self._refs[-1][1], out)
        elif kind == KIND_B:
            if len(self._refs) < 2:
                raise CorruptContainer("B frame with fewer than two references")
            (p0, a), (p1, b) = self._refs[-2], self._refs[-1]
            if not p0 < pres < p1:
                raise CorruptContainer("B frame references do not bracket it")
            ok = _kernels.rle_decode_avg_add(payload, a, b, out)
        else:
            raise CorruptContainer(f"bad frame kind {kind}")
        if ok < 0:
            raise CorruptContainer(f"RLE length mismatch in frame {pres}")
        if pres not in self.future_set:
            raise CorruptContainer(f"unexpected presentation index {pres}")
        self.future_set.discard(pres)
        self._remaining -= 1
        if kind != KIND_B:
            self._refs = (self._refs + [(pres, out)])[-2:]
        return pres, Raster(self.reader.frame_type, out.tobytes())

    def run_until(self, stop_indices) -> list:
        """Decode forward until some stop index (or the GOP end) is produced,
        in two GIL-free kernel passes; returns [(presentation, plane_array)].

        Equivalent to repeated step() but with per-record Python overhead
        hoisted out of the loop, which is what lets decoder threads scale.
        Rows are views into a shared batch buffer; callers copy (e.g. into a
        Raster) only the frames they keep.
        """
        if self.done:
            raise CodecError("GOP fully decoded")
        span = np.frombuffer(
            self.reader.source.read_at(self._cursor, self._end - self._cursor),
            dtype=np.uint8)
        m = self._remaining
        kinds = np.empty(m, dtype=np.int64)
        press = np.empty(m, dtype=np.int64)
        offs = np.empty(m, dtype=np.int64)
        lens = np.empty(m, dtype=np.int64)
        stops = np.fromiter(stop_indices, dtype=np.int64,
                            count=len(stop_indices))
        n = _kernels.scan_records(span, m, stops, kinds, press, offs, lens)
        if n == -1:
            raise CorruptContainer("truncated frame record")
        if n == -2:
            raise CorruptContainer("frame payload overruns GOP byte range")
        batch = press[:n].tolist()
        if len(set(batch)) != n or not self.future_set.issuperset(batch):
            raise CorruptContainer("unexpected presentation index")

        out = np.empty((n + 2, self._nbytes), dtype=np.uint8)
        ra = rb = pa = pb = -1
        for i, (rp, rdata) in enumerate(self._refs[-2:]):
            out[i] = rdata
            ra, pa = rb, pb
            rb, pb = i, rp
        bad = _kernels.decode_records(kinds, press, offs, lens, span, n,
                                      ra, rb, pa, pb, out)
        if bad >= 0:
            raise CorruptContainer(
                f"malformed record for frame {batch[bad]}")

        self._cursor += int(offs[n - 1] + lens[n - 1])
        self._remaining -= n
        self.future_set.difference_update(batch)
        refs = [(batch[r], out[r + 2]) for r in range(n) if kinds[r] != KIND_B]
        if refs:
            self._refs = (self._refs + refs)[-2:]
        return [(batch[r], out[r + 2]) for r in range(n)]


def decode_all(container) -> list:
    """Decode every frame, returned in presentation order."""
    reader = TvcReader(container)
    out: dict[int, Raster] = {}
    for g in range(reader.gop_count):
        dec = GopDecoder(reader, g)
        while not dec.done:
            pres, raster = dec.step()
            out[pres] = raster
    return [out[i] for i in range(reader.frame_count)]


def decode_frame_naive(reader: TvcReader, presentation_index: int) -> Raster:
    """Seek to the containing GOP and decode forward to the target frame."""
    dec = GopDecoder(reader, reader.gop_of_frame(presentation_index))
    while True:
        pres, raster = dec.step()
        if pres == presentation_index:
            return raster


# ---------------------------------------------------------------------------
# Pixel format conversion
# ---------------------------------------------------------------------------

def _clamp_u8(a: np.ndarray) -> np.ndarray:
    return np.clip(a, 0, 255).astype(np.uint8)


def _planes_yuv(raster: Raster):
    w, h = raster.ftype.width, raster.ftype.height
    flat = raster.as_array()
    y = flat[:w * h].reshape(h, w)
    cw, ch = w // 2, h // 2
    u = flat[w * h:w * h + cw * ch].reshape(ch, cw)
    v = flat[w * h + cw * ch:].reshape(ch, cw)
    return y, u, v


def _to_rgb(raster: Raster) -> np.ndarray:
    """(h, w, 3) uint8 RGB pixels."""
    ft = raster.ftype
    w, h = ft.width, ft.height
    if ft.pixfmt is PixelFormat.RGB8:
        return raster.as_array().reshape(h, w, 3)
    if ft.pixfmt is PixelFormat.BGR8:
        return raster.as_array().reshape(h, w, 3)[:, :, ::-1]
    if ft.pixfmt is PixelFormat.GRAY8:
        g = raster.as_array().reshape(h, w)
        return np.repeat(g[:, :, None], 3, axis=2)
    y, u, v = _planes_yuv(raster)
    y = y.astype(np.int32)
    # Nearest-neighbor upsample: each chroma sample covers its 2x2 block.
    u = u.repeat(2, axis=0).repeat(2, axis=1).astype(np.int32) - 128
    v = v.repeat(2, axis=0).repeat(2, axis=1).astype(np.int32) - 128
    r = y + ((359 * v) >> 8)
    g = y - ((88 * u + 183 * v) >> 8)
    b = y + ((454 * u) >> 8)
    return np.stack([_clamp_u8(r), _clamp_u8(g), _clamp_u8(b)], axis=2)


def _from_rgb(rgb: np.ndarray, to: PixelFormat) -> bytes:
    if to is PixelFormat.RGB8:
        return np.ascontiguousarray(rgb).tobytes()
    if to is PixelFormat.BGR8:
        return np.ascontiguousarray(rgb[:, :, ::-1]).tobytes()
    r = rgb[:, :, 0].astype(np.int32)
    g = rgb[:, :, 1].astype(np.int32)
    b = rgb[:, :, 2].astype(np.int32)
    y = _clamp_u8((77 * r + 150 * g + 29 * b) >> 8)
    if to is PixelFormat.GRAY8:
        return y.tobytes()
    u = _clamp_u8(((-43 * r - 85 * g + 128 * b) >> 8) + 128)
    v = _clamp_u8(((128 * r - 107 * g - 21 * b) >> 8) + 128)
    # Chroma subsampling keeps the top-left pixel of each 2x2 block.
    return y.tobytes() + u[0::2, 0::2].tobytes() + v[0::2, 0::2].tobytes()


def convert_pixfmt(frame: Raster, to: PixelFormat) -> Raster:
    """Bit-exact pixel format conversion (fixed integer formulas)."""
    ft = frame.ftype
    if ft.pixfmt is to:
        return frame
    yuv_involved = PixelFormat.YUV420P in (ft.pixfmt, to)
    if yuv_involved and (ft.width % 2 or ft.height % 2):
        raise CodecError(f"yuv420p conversion requires even dimensions, got "
                         f"{ft.width}x{ft.height}")
    out_type = FrameType(ft.width, ft.height, to)
    return Raster(out_type, _from_rgb(_to_rgb(frame), to))
