"""A cv2-style surface whose frames are symbolic expressions.

Supported subset (anything else raises immediately):

* ``VideoCapture`` / ``VideoWriter`` over TVC containers and spec JSON
  (or a framecast server URL for live streaming),
* ``rectangle``, ``putText`` (in-place drawing),
* ``resize``, ``cvtColor``, ``hconcat``, ``vconcat`` (new frames),
* ``overlayMask`` (extension: colored mask blend, in-place),
* ``getTextSize``, ``VideoWriter_fourcc`` (local utilities).

Frames present the interleaved format drawing expects while lazily
retaining the source's true format: the first drawing call on a planar
frame inserts a conversion node, and the writer closes the sandwich by
converting back on write.  No pixel data ever exists client-side —
indexing a frame raises.
"""

from __future__ import annotations

import pathlib
from fractions import Fraction

from . import _client, _probe, _spec

# Values mirror common cv2 constants where they are stable, but scripts
# should always use the names.
CAP_PROP_FRAME_WIDTH = 3
CAP_PROP_FRAME_HEIGHT = 4
CAP_PROP_FPS = 5
CAP_PROP_FRAME_COUNT = 7

FONT_HERSHEY_SIMPLEX = 0
INTER_NEAREST = 0
FILLED = -1

COLOR_BGR2GRAY = 10
COLOR_RGB2GRAY = 11
COLOR_GRAY2BGR = 12
COLOR_GRAY2RGB = 13
COLOR_BGR2RGB = 14
COLOR_RGB2BGR = 15
COLOR_YUV2BGR_I420 = 16
COLOR_BGR2YUV_I420 = 17
COLOR_YUV2RGB_I420 = 18
COLOR_RGB2YUV_I420 = 19

_CVT = {
    COLOR_BGR2GRAY: ("bgr8", "gray8"),
    COLOR_RGB2GRAY: ("rgb8", "gray8"),
    COLOR_GRAY2BGR: ("gray8", "bgr8"),
    COLOR_GRAY2RGB: ("gray8", "rgb8"),
    COLOR_BGR2RGB: ("bgr8", "rgb8"),
    COLOR_RGB2BGR: ("rgb8", "bgr8"),
    COLOR_YUV2BGR_I420: ("yuv420p", "bgr8"),
    COLOR_BGR2YUV_I420: ("bgr8", "yuv420p"),
    COLOR_YUV2RGB_I420: ("yuv420p", "rgb8"),
    COLOR_RGB2YUV_I420: ("rgb8", "yuv420p"),
}

_DRAWABLE = ("gray8", "rgb8", "bgr8")
_GLYPH_WIDTH, _GLYPH_HEIGHT, _ADVANCE = 5, 7, 6

_BATCH_SIZE = 30

# One shared expression table: frames from any capture can be combined.
_TABLE = _spec.ExprTable()

ServerRejection = _client.ServerRejection


class SymbolicPixelError(TypeError):
    """Raised on any attempt to observe pixel data of a symbolic frame."""


class Frame:
    """A symbolic frame: an expression node plus format bookkeeping.

    `presented` is the format the expression currently evaluates to (the
    one drawing operates on); `true_fmt` is the lazily retained source
    format the writer converts back to.
    """

    def __init__(self, expr: int, width: int, height: int,
                 presented: str, true_fmt: str):
        self.expr = expr
        self.width = width
        self.height = height
        self.presented = presented
        self.true_fmt = true_fmt

    def copy(self) -> "Frame":
        return Frame(self.expr, self.width, self.height,
                     self.presented, self.true_fmt)

    def _open_sandwich(self) -> None:
        """Present a drawable interleaved format, converting if needed."""
        if self.presented not in _DRAWABLE:
            self.expr = _pixfmt(self.expr, self.presented, "bgr8")
            self.presented = "bgr8"

    # Symbolic frames have no pixels; fail fast instead of diverging.
    def _no_pixels(self, *_a, **_k):
        raise SymbolicPixelError(
            "symbolic frames carry no pixel data; this script reads or "
            "writes pixels, which is outside the supported subset")

    __getitem__ = __setitem__ = __iter__ = __len__ = __array__ = _no_pixels


def _pixfmt(expr: int, src: str, dst: str) -> int:
    return _TABLE.call("pixfmt", expr,
                       _TABLE.const(_spec.value("str", src)),
                       _TABLE.const(_spec.value("str", dst)))


def _require_frame(obj, what: str) -> Frame:
    if not isinstance(obj, Frame):
        raise TypeError(f"{what} must be a symbolic Frame, got {type(obj)!r}")
    return obj


def _color_value(color) -> dict:
    if isinstance(color, (int, float)):
        color = (color,)
    chans = [int(c) for c in color]
    if len(chans) > 3 or any(c != float(o) for c, o in zip(chans, color)):
        raise ValueError(f"color must be up to 3 integer channels, got {color!r}")
    chans += [0] * (3 - len(chans))
    if any(not 0 <= c <= 255 for c in chans):
        raise ValueError(f"color channels must be in 0..255, got {color!r}")
    return _spec.value("color", chans)


def _intpair(p) -> dict:
    x, y = p
    return _spec.value("intpair", [int(x), int(y)])


# ---------------------------------------------------------------------------
# Capture / writer
# ---------------------------------------------------------------------------

class VideoCapture:
    """Reads a TVC container symbolically: only the header is probed, and
    successive read() calls yield frames referencing indices 0, 1, 2, …"""

    def __init__(self, path: str):
        self._path = str(path)
        self._info = _probe.probe_header(self._path)
        self._cursor = 0
        self._open = True

    def isOpened(self) -> bool:
        return self._open

    def get(self, prop: int) -> float:
        info = self._info
        if prop == CAP_PROP_FRAME_WIDTH:
            return float(info["width"])
        if prop == CAP_PROP_FRAME_HEIGHT:
            return float(info["height"])
        if prop == CAP_PROP_FPS:
            return info["fps_num"] / info["fps_den"]
        if prop == CAP_PROP_FRAME_COUNT:
            return float(info["frame_count"])
        raise ValueError(f"unsupported capture property {prop}")

    def read(self):
        if not self._open or self._cursor >= self._info["frame_count"]:
            return False, None
        expr = _TABLE.source(self._path, self._cursor)
        self._cursor += 1
        fmt = self._info["pixfmt"]
        return True, Frame(expr, self._info["width"], self._info["height"],
                           fmt, fmt)

    def release(self) -> None:
        self._open = False


class VideoWriter:
    """Collects written frame expressions into a spec.

    `dest` is either a filesystem path (the terminated spec is written as
    canonical JSON on release) or a framecast server base URL (frames are
    pushed in batches of 30 and on release, with the terminal flag sent
    exactly once).
    """

    def __init__(self, dest: str, fourcc: int, fps, frame_size,
                 isColor: bool = True, pixelFormat: str = None):
        del fourcc  # codec selection is meaningless for a symbolic writer
        self._dest = str(dest)
        self._server = self._dest.startswith(("http://", "https://"))
        self._fps = (Fraction(str(fps)).numerator,
                     Fraction(str(fps)).denominator) \
            if not isinstance(fps, tuple) else (int(fps[0]), int(fps[1]))
        self._frame_size = (int(frame_size[0]), int(frame_size[1]))
        self._default_fmt = "bgr8" if isColor else "gray8"
        self._out_fmt = pixelFormat
        self._roots: list = []       # local mode: every root so far
        self._pending: list = []     # server mode: roots not yet pushed
        self._pushed = 0
        self._released = False
        self.spec_id = None
        self.playlist_url = None

    def isOpened(self) -> bool:
        return not self._released

    def write(self, frame: Frame) -> None:
        if self._released:
            raise RuntimeError("writer is released")
        _require_frame(frame, "written frame")
        if (frame.width, frame.height) != self._frame_size:
            raise ValueError(
                f"frame is {frame.width}x{frame.height}, writer expects "
                f"{self._frame_size[0]}x{self._frame_size[1]}")
        if self._out_fmt is None:
            self._out_fmt = frame.true_fmt  # first frame fixes the output
        expr = frame.expr
        if frame.presented != self._out_fmt:
            expr = _pixfmt(expr, frame.presented, self._out_fmt)
        if self._server:
            self._pending.append(expr)
            if len(self._pending) >= _BATCH_SIZE:
                self._flush(terminal=False)
        else:
            self._roots.append(expr)

    def release(self) -> None:
        if self._released:
            return
        self._released = True
        if self._out_fmt is None:
            self._out_fmt = self._default_fmt  # nothing written
        if self._server:
            self._flush(terminal=True)
        else:
            doc = _TABLE.spec_document(
                pathlib.Path(self._dest).stem, self._fps,
                self._output_type(), self._roots)
            with open(self._dest, "wb") as f:
                f.write(doc)

    def _output_type(self) -> dict:
        return {"width": self._frame_size[0],
                "height": self._frame_size[1],
                "pixfmt": self._out_fmt}

    def _flush(self, terminal: bool) -> None:
        if self.spec_id is None:
            # Source bindings are fixed at creation time from the first
            # batch; frames referencing new sources later are rejected by
            # the server's type check.
            sources = _TABLE.source_bindings(self._pending)
            created = _client.request_json(
                "POST", f"{self._dest}/v1/spec",
                {"fps": list(self._fps), "output_type": self._output_type(),
                 "sources": sources})
            self.spec_id = created["spec_id"]
            self.playlist_url = f"{self._dest}{created['playlist_url']}"
        part = _TABLE.part(self._pending)
        try:
            _client.request_json(
                "POST", f"{self._dest}/v1/spec/{self.spec_id}/part",
                {"part": part, "terminal": terminal})
        except _client.ServerRejection as e:
            if e.frame is not None:
                # Part-local index -> absolute output frame index.
                raise _client.ServerRejection(
                    e.status, {"error": e.error, "frame": e.frame + self._pushed,
                               "limit": e.limit, "detail": e.detail}) from None
            raise
        self._pushed += len(self._pending)
        self._pending = []


def VideoWriter_fourcc(*_chars) -> int:
    return 0


# ---------------------------------------------------------------------------
# Drawing (in place) and frame transforms (new frames)
# ---------------------------------------------------------------------------

def rectangle(img: Frame, pt1, pt2, color, thickness: int = 1) -> None:
    _require_frame(img, "img")
    img._open_sandwich()
    img.expr = _TABLE.call(
        "draw_rectangle", img.expr,
        _TABLE.const(_intpair(pt1)), _TABLE.const(_intpair(pt2)),
        _TABLE.const(_color_value(color)),
        _TABLE.const(_spec.value("int", int(thickness))))


def putText(img: Frame, text: str, org, fontFace: int, fontScale,
            color, thickness: int = 1) -> None:
    _require_frame(img, "img")
    if fontFace != FONT_HERSHEY_SIMPLEX:
        raise ValueError("only FONT_HERSHEY_SIMPLEX is supported")
    if thickness != 1:
        raise ValueError("only thickness=1 text is supported")
    scale = int(fontScale)
    if scale != fontScale or scale < 1:
        raise ValueError(f"fontScale must be a positive integer, got {fontScale!r}")
    img._open_sandwich()
    img.expr = _TABLE.call(
        "draw_text", img.expr,
        _TABLE.const(_spec.value("str", str(text))),
        _TABLE.const(_intpair(org)),
        _TABLE.const(_spec.value("int", scale)),
        _TABLE.const(_color_value(color)))


def overlayMask(img: Frame, mask: Frame, color, alpha: int) -> None:
    """Extension: blend `color` into `img` where the gray8 `mask` is set,
    weighted by the mask value scaled with `alpha` (0..255)."""
    _require_frame(img, "img")
    _require_frame(mask, "mask")
    img._open_sandwich()
    if img.presented == "gray8":  # mask blending needs an interleaved base
        img.expr = _pixfmt(img.expr, "gray8", "bgr8")
        img.presented = "bgr8"
    mask_expr = mask.expr
    if mask.presented != "gray8":
        mask_expr = _pixfmt(mask_expr, mask.presented, "gray8")
    img.expr = _TABLE.call(
        "overlay_mask", img.expr, mask_expr,
        _TABLE.const(_color_value(color)),
        _TABLE.const(_spec.value("int", int(alpha))))


def resize(src: Frame, dsize, interpolation: int = INTER_NEAREST) -> Frame:
    _require_frame(src, "src")
    if interpolation != INTER_NEAREST:
        raise ValueError("only INTER_NEAREST resizing is supported")
    w, h = int(dsize[0]), int(dsize[1])
    expr = _TABLE.call("scale_nearest", src.expr,
                       _TABLE.const(_spec.value("int", w)),
                       _TABLE.const(_spec.value("int", h)))
    return Frame(expr, w, h, src.presented, src.true_fmt)


def cvtColor(src: Frame, code: int) -> Frame:
    _require_frame(src, "src")
    if code not in _CVT:
        raise ValueError(f"unsupported color conversion code {code}")
    from_fmt, to_fmt = _CVT[code]
    if src.presented != from_fmt:
        raise ValueError(
            f"conversion expects a {from_fmt} frame, got {src.presented}")
    expr = _pixfmt(src.expr, from_fmt, to_fmt)
    # An explicit conversion is user-visible: it resets the true format.
    return Frame(expr, src.width, src.height, to_fmt, to_fmt)


def _concat(frames, axis: str) -> Frame:
    frames = [_require_frame(f, "concatenated frame") for f in frames]
    if len(frames) < 2:
        raise ValueError("concatenation needs at least two frames")
    out = frames[0]
    for nxt in frames[1:]:
        if nxt.presented != out.presented:
            raise ValueError(
                f"cannot concatenate {out.presented} with {nxt.presented}; "
                "convert explicitly first")
        if axis == "h":
            expr = _TABLE.call("hstack", out.expr, nxt.expr)
            w, h = out.width + nxt.width, out.height
        else:
            expr = _TABLE.call("vstack", out.expr, nxt.expr)
            w, h = out.width, out.height + nxt.height
        true_fmt = out.true_fmt if out.true_fmt == nxt.true_fmt \
            else out.presented
        out = Frame(expr, w, h, out.presented, true_fmt)
    return out


def hconcat(frames) -> Frame:
    return _concat(frames, "h")


def vconcat(frames) -> Frame:
    return _concat(frames, "v")


def getTextSize(text: str, fontFace: int, fontScale, thickness: int = 1):
    """Text extent from the engine's fixed 5x7 font: glyph cells advance 6
    columns, the last cell is 5 wide.  Returns ((width, height), baseline)."""
    if fontFace != FONT_HERSHEY_SIMPLEX:
        raise ValueError("only FONT_HERSHEY_SIMPLEX is supported")
    scale = int(fontScale)
    if scale != fontScale or scale < 1:
        raise ValueError(f"fontScale must be a positive integer, got {fontScale!r}")
    if not text:
        return (0, 0), 0
    width = scale * (_ADVANCE * len(text) - (_ADVANCE - _GLYPH_WIDTH))
    return (width, scale * _GLYPH_HEIGHT), 0


_SUPPORTED = sorted(n for n in globals() if not n.startswith("_"))


def __getattr__(name: str):
    raise AttributeError(
        f"cv2.{name} is not part of the symbolic subset; supported names: "
        + ", ".join(_SUPPORTED))
