"""Pure raster filters and their signature registry.

Every filter is a pure function: it never mutates its inputs and returns a
new frame, so expressions can be evaluated in any topological order by any
number of workers with byte-identical results.  Drawing filters accept only
single-byte-per-channel interleaved or gray frames (gray8/rgb8/bgr8);
yuv420p frames must be run through the `pixfmt` filter first.  All
coordinates are integer pixels with the origin at the top-left, and drawing
clips silently at the frame boundary.  There is no anti-aliasing anywhere:
bit-exactness is the test oracle.
"""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from . import font
from .codec import Raster, convert_pixfmt, raster_from_array
from .ir import (ArgKindMismatch, FilterSignature, FrameType,
                 FrameTypeMismatch, PixelFormat, SourceRef, Const, FilterCall,
                 NodeTable, UnknownFilter, Value, value_to_py)

DRAWABLE = (PixelFormat.GRAY8, PixelFormat.RGB8, PixelFormat.BGR8)


def _require_drawable(ft: FrameType, name: str) -> None:
    if ft.pixfmt not in DRAWABLE:
        raise FrameTypeMismatch(
            f"{name} requires gray8/rgb8/bgr8 input, got {ft.pixfmt.value}")


def _channels(ft: FrameType) -> int:
    return 3 if ft.pixfmt.interleaved else 1


def _pixels(frame: Raster) -> np.ndarray:
    """(h, w, c) writable copy of an interleaved or gray frame."""
    ft = frame.ftype
    c = _channels(ft)
    return frame.as_array().reshape(ft.height, ft.width, c).copy()


def _color_for(ft: FrameType, color) -> tuple:
    # Color channel order follows the frame's own channel order; gray frames
    # use the first channel only.
    return tuple(color[:_channels(ft)])


# ---------------------------------------------------------------------------
# Implementations
# ---------------------------------------------------------------------------

def draw_rectangle(frame: Raster, pt1, pt2, color, thickness: int) -> Raster:
    if thickness == 0 or thickness < -1:
        raise ValueError(f"thickness must be >= 1 or -1, got {thickness}")
    ft = frame.ftype
    x0, x1 = sorted((pt1[0], pt2[0]))
    y0, y1 = sorted((pt1[1], pt2[1]))
    cx0, cx1 = max(x0, 0), min(x1, ft.width - 1)
    cy0, cy1 = max(y0, 0), min(y1, ft.height - 1)
    if cx0 > cx1 or cy0 > cy1:
        return frame
    px = _pixels(frame)
    xs = np.arange(cx0, cx1 + 1)
    ys = np.arange(cy0, cy1 + 1)
    if thickness == -1:
        mask = np.ones((ys.size, xs.size), dtype=bool)
    else:
        # Border of width `thickness` growing inward from the closed rect.
        dx = np.minimum(xs - x0, x1 - xs)
        dy = np.minimum(ys - y0, y1 - ys)
        mask = np.minimum(dx[None, :], dy[:, None]) < thickness
    region = px[cy0:cy1 + 1, cx0:cx1 + 1]
    region[mask] = _color_for(ft, color)
    return raster_from_array(ft, px)


def draw_text(frame: Raster, text: str, org, scale: int, color) -> Raster:
    if scale < 1:
        raise ValueError(f"scale must be >= 1, got {scale}")
    ft = frame.ftype
    if not text:
        return frame
    px = _pixels(frame)
    col = _color_for(ft, color)
    ox, oy = org
    top = oy - font.GLYPH_HEIGHT * scale + 1
    for k, ch in enumerate(text):
        if not 32 <= ord(ch) <= 126:
            ch = font.REPLACEMENT
        rows = font.glyph_rows(ch)
        gx = ox + k * font.ADVANCE * scale
        for r, bits in enumerate(rows):
            if not bits:
                continue
            for c in range(font.GLYPH_WIDTH):
                if not bits & (1 << (font.GLYPH_WIDTH - 1 - c)):
                    continue
                y0 = top + r * scale
                x0 = gx + c * scale
                yy0, yy1 = max(y0, 0), min(y0 + scale, ft.height)
                xx0, xx1 = max(x0, 0), min(x0 + scale, ft.width)
                if yy0 < yy1 and xx0 < xx1:
                    px[yy0:yy1, xx0:xx1] = col
    return raster_from_array(ft, px)


def crop(frame: Raster, x: int, y: int, w: int, h: int) -> Raster:
    ft = frame.ftype
    _check_crop(ft, x, y, w, h)
    out_type = FrameType(w, h, ft.pixfmt)
    if ft.pixfmt is PixelFormat.YUV420P:
        from .codec import _planes_yuv
        yp, up, vp = _planes_yuv(frame)
        data = (yp[y:y + h, x:x + w].tobytes()
                + up[y // 2:(y + h) // 2, x // 2:(x + w) // 2].tobytes()
                + vp[y // 2:(y + h) // 2, x // 2:(x + w) // 2].tobytes())
        return Raster(out_type, data)
    px = frame.as_array().reshape(ft.height, ft.width, _channels(ft))
    return raster_from_array(out_type, px[y:y + h, x:x + w])


def scale_nearest(frame: Raster, w: int, h: int) -> Raster:
    ft = frame.ftype
    _check_scale(ft, w, h)
    out_type = FrameType(w, h, ft.pixfmt)

    def resample(plane: np.ndarray, ow: int, oh: int) -> np.ndarray:
        ih, iw = plane.shape[:2]
        ys = (np.arange(oh) * ih) // oh
        xs = (np.arange(ow) * iw) // ow
        return plane[ys[:, None], xs[None, :]]

    if ft.pixfmt is PixelFormat.YUV420P:
        from .codec import _planes_yuv
        yp, up, vp = _planes_yuv(frame)
        data = (resample(yp, w, h).tobytes()
                + resample(up, w // 2, h // 2).tobytes()
                + resample(vp, w // 2, h // 2).tobytes())
        return Raster(out_type, data)
    px = frame.as_array().reshape(ft.height, ft.width, _channels(ft))
    return raster_from_array(out_type, resample(px, w, h))


def hstack(a: Raster, b: Raster) -> Raster:
    _check_stack(a.ftype, b.ftype, horizontal=True)
    out_type = FrameType(a.ftype.width + b.ftype.width, a.ftype.height, a.ftype.pixfmt)
    return _stack(a, b, out_type, axis=1)


def vstack(a: Raster, b: Raster) -> Raster:
    _check_stack(a.ftype, b.ftype, horizontal=False)
    out_type = FrameType(a.ftype.width, a.ftype.height + b.ftype.height, a.ftype.pixfmt)
    return _stack(a, b, out_type, axis=0)


def _stack(a: Raster, b: Raster, out_type: FrameType, axis: int) -> Raster:
    if a.ftype.pixfmt is PixelFormat.YUV420P:
        from .codec import _planes_yuv
        pa, pb = _planes_yuv(a), _planes_yuv(b)
        data = b"".join(np.concatenate([pa[i], pb[i]], axis=axis).tobytes()
                        for i in range(3))
        return Raster(out_type, data)
    c = _channels(a.ftype)
    pa = a.as_array().reshape(a.ftype.height, a.ftype.width, c)
    pb = b.as_array().reshape(b.ftype.height, b.ftype.width, c)
    return raster_from_array(out_type, np.concatenate([pa, pb], axis=axis))


def overlay_mask(frame: Raster, mask: Raster, color, alpha: int) -> Raster:
    ft = frame.ftype
    _check_overlay(ft, mask.ftype, alpha)
    px = _pixels(frame)
    m = mask.as_array().reshape(ft.height, ft.width) > 0
    col = np.array(_color_for(ft, color), dtype=np.int32)
    blended = (alpha * col[None, None, :] + (255 - alpha) * px.astype(np.int32) + 127) // 255
    px[m] = blended.astype(np.uint8)[m]
    return raster_from_array(ft, px)


def solid(width: int, height: int, pixfmt: str, color) -> Raster:
    out_type = _solid_type(width, height, pixfmt)
    fmt = out_type.pixfmt
    if fmt is PixelFormat.GRAY8:
        data = bytes([color[0]]) * (width * height)
    elif fmt.interleaved:
        data = bytes(color[:3]) * (width * height)
    else:
        # yuv420p: color is interpreted as (Y, U, V).
        data = (bytes([color[0]]) * (width * height)
                + bytes([color[1]]) * ((width // 2) * (height // 2))
                + bytes([color[2]]) * ((width // 2) * (height // 2)))
    return Raster(out_type, data)


def pixfmt(frame: Raster, from_fmt: str, to_fmt: str) -> Raster:
    if frame.ftype.pixfmt.value != from_fmt:
        raise ValueError(f"pixfmt 'from' is {from_fmt} but frame is "
                         f"{frame.ftype.pixfmt.value}")
    return convert_pixfmt(frame, PixelFormat(to_fmt))


# ---------------------------------------------------------------------------
# Static checks shared by type derivation and runtime validation
# ---------------------------------------------------------------------------

def _parse_pixfmt(name) -> PixelFormat:
    try:
        return PixelFormat(name)
    except ValueError:
        raise ArgKindMismatch(f"unknown pixel format {name!r}") from None


def _check_crop(ft: FrameType, x, y, w, h) -> None:
    if w < 1 or h < 1:
        raise FrameTypeMismatch(f"crop output must be non-empty, got {w}x{h}")
    if x < 0 or y < 0 or x + w > ft.width or y + h > ft.height:
        raise FrameTypeMismatch(
            f"crop window ({x},{y},{w},{h}) outside {ft.width}x{ft.height} frame")
    if ft.pixfmt is PixelFormat.YUV420P and (x % 2 or y % 2 or w % 2 or h % 2):
        raise FrameTypeMismatch("yuv420p crop requires even window geometry")


def _check_scale(ft: FrameType, w, h) -> None:
    if w < 1 or h < 1:
        raise FrameTypeMismatch(f"scale output must be non-empty, got {w}x{h}")
    if ft.pixfmt is PixelFormat.YUV420P and (w % 2 or h % 2):
        raise FrameTypeMismatch("yuv420p scale requires even output dimensions")


def _check_stack(a: FrameType, b: FrameType, horizontal: bool) -> None:
    if a.pixfmt is not b.pixfmt:
        raise FrameTypeMismatch(
            f"stack inputs must share a pixel format: {a.pixfmt.value} vs {b.pixfmt.value}")
    if horizontal and a.height != b.height:
        raise FrameTypeMismatch(f"hstack inputs must share height: {a} vs {b}")
    if not horizontal and a.width != b.width:
        raise FrameTypeMismatch(f"vstack inputs must share width: {a} vs {b}")


def _check_overlay(ft: FrameType, mt: FrameType, alpha) -> None:
    if not ft.pixfmt.interleaved:
        raise FrameTypeMismatch(
            f"overlay_mask requires an interleaved frame, got {ft.pixfmt.value}")
    if mt.pixfmt is not PixelFormat.GRAY8:
        raise FrameTypeMismatch(f"mask must be gray8, got {mt.pixfmt.value}")
    if (mt.width, mt.height) != (ft.width, ft.height):
        raise FrameTypeMismatch(
            f"mask resolution {mt.width}x{mt.height} != frame {ft.width}x{ft.height}")
    if not 0 <= alpha <= 255:
        raise ArgKindMismatch(f"alpha must be in 0..255, got {alpha}")


def _solid_type(w, h, fmt_name) -> FrameType:
    fmt = _parse_pixfmt(fmt_name)
    try:
        return FrameType(w, h, fmt)
    except ValueError as e:
        raise FrameTypeMismatch(str(e)) from None


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

def _sig_rect(args):
    ft, pt1, pt2, color, thickness = args
    _require_drawable(ft, "draw_rectangle")
    if thickness == 0 or thickness < -1:
        raise ArgKindMismatch(f"thickness must be >= 1 or -1, got {thickness}")
    return ft


def _sig_text(args):
    ft, text, org, scale, color = args
    _require_drawable(ft, "draw_text")
    if scale < 1:
        raise ArgKindMismatch(f"text scale must be >= 1, got {scale}")
    return ft


def _sig_crop(args):
    ft, x, y, w, h = args
    _check_crop(ft, x, y, w, h)
    return FrameType(w, h, ft.pixfmt)


def _sig_scale(args):
    ft, w, h = args
    _check_scale(ft, w, h)
    return FrameType(w, h, ft.pixfmt)


def _sig_hstack(args):
    a, b = args
    _check_stack(a, b, horizontal=True)
    return FrameType(a.width + b.width, a.height, a.pixfmt)


def _sig_vstack(args):
    a, b = args
    _check_stack(a, b, horizontal=False)
    return FrameType(a.width, a.height + b.height, a.pixfmt)


def _sig_overlay(args):
    ft, mt, color, alpha = args
    _check_overlay(ft, mt, alpha)
    return ft


def _sig_solid(args):
    w, h, fmt_name, color = args
    return _solid_type(w, h, fmt_name)


def _sig_pixfmt(args):
    ft, from_name, to_name = args
    src = _parse_pixfmt(from_name)
    dst = _parse_pixfmt(to_name)
    if ft.pixfmt is not src:
        raise FrameTypeMismatch(
            f"pixfmt 'from' is {from_name} but input is {ft.pixfmt.value}")
    try:
        return FrameType(ft.width, ft.height, dst)
    except ValueError as e:
        raise FrameTypeMismatch(str(e)) from None


_TABLE = [
    # name, param kinds, type derivation, implementation
    ("draw_rectangle", ("frame", "intpair", "intpair", "color", "int"), _sig_rect, draw_rectangle),
    ("draw_text", ("frame", "str", "intpair", "int", "color"), _sig_text, draw_text),
    ("crop", ("frame", "int", "int", "int", "int"), _sig_crop, crop),
    ("scale_nearest", ("frame", "int", "int"), _sig_scale, scale_nearest),
    ("hstack", ("frame", "frame"), _sig_hstack, hstack),
    ("vstack", ("frame", "frame"), _sig_vstack, vstack),
    ("overlay_mask", ("frame", "frame", "color", "int"), _sig_overlay, overlay_mask),
    ("solid", ("int", "int", "str", "color"), _sig_solid, solid),
    ("pixfmt", ("frame", "str", "str"), _sig_pixfmt, pixfmt),
]

REGISTRY: Mapping[str, FilterSignature] = {
    name: FilterSignature(name, kinds, derive) for name, kinds, derive, _ in _TABLE
}

IMPLS: Mapping[str, Callable] = {name: impl for name, _, _, impl in _TABLE}


# ---------------------------------------------------------------------------
# Expression evaluation
# ---------------------------------------------------------------------------

def evaluate_expr(table: NodeTable, node_id: int,
                  fetch: Callable[[str, int], Raster]) -> Raster:
    """Evaluate a frame expression; `fetch` supplies decoded source frames.

    Evaluation order within the DAG is topological with memoization, so the
    result is byte-identical no matter how callers schedule it.
    """
    memo: dict[int, object] = {}

    def ev(nid: int):
        if nid in memo:
            return memo[nid]
        node = table.node(nid)
        if isinstance(node, SourceRef):
            out = fetch(node.source_id, node.frame_index)
        elif isinstance(node, Const):
            out = value_to_py(node.value)
        else:
            impl = IMPLS.get(node.name)
            if impl is None:
                raise UnknownFilter(f"unknown filter {node.name!r}", nid)
            args = [value_to_py(a) if isinstance(a, Value) else ev(a)
                    for a in node.args]
            out = impl(*args)
        memo[nid] = out
        return out

    result = ev(node_id)
    if not isinstance(result, Raster):
        raise ValueError("expression root did not evaluate to a frame")
    return result
