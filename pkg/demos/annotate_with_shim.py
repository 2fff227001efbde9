"""
Lifting an annotation script with the cv2-style shim
====================================================

The same loop you would write against OpenCV, run against the symbolic
shim: frames record expressions instead of pixels, the writer emits a
spec, and the engine renders it afterwards — byte-identical, but the
script itself never decodes a frame.
"""

import pathlib
import tempfile

from framecast import synth, codec
from framecast.ir import FrameType, PixelFormat

work = pathlib.Path(tempfile.mkdtemp())
src = work / "in.tvc"
src.write_bytes(synth.make_synthetic_tvc(
    FrameType(64, 64, PixelFormat.YUV420P), 90, gop_size=30, b_frames=True))

# The one-line lift: import the shim instead of cv2.
import framecast_shim.cv2 as cv2

cap = cv2.VideoCapture(str(src))
print(f"{cap.get(cv2.CAP_PROP_FRAME_COUNT):.0f} frames @ "
      f"{cap.get(cv2.CAP_PROP_FPS):.0f} fps")

out = work / "annotated.json"
writer = cv2.VideoWriter(str(out), cv2.VideoWriter_fourcc(*"mp4v"), 30,
                         (64, 64))
i = 0
while True:
    ret, frame = cap.read()
    if not ret:
        break
    # Drawing on a planar source silently inserts one conversion to an
    # interleaved format; the writer converts back on write.
    cv2.putText(frame, f"t={i}", (2, 12), cv2.FONT_HERSHEY_SIMPLEX, 1,
                (235, 235, 235))
    if i % 30 == 0:
        cv2.rectangle(frame, (4, 20), (60, 60), (0, 200, 255), 2)
    writer.write(frame)
    i += 1
cap.release()
writer.release()
print(f"spec written to {out}")

# Render the spec with the engine and check one frame's bytes arrived.
from framecast.engine import render, CollectSink
from framecast.ir import deserialize_spec

spec = deserialize_spec(out.read_bytes())
sink = CollectSink()
counters = render(spec, {str(src): codec.TvcReader(codec.FileSource(str(src)))},
                  sink)
print(f"rendered {len(sink.frames)} frames, "
      f"decoded {counters.frames_decoded} source frames")

# Equivalently from a shell:
#   framecast render annotated.json <source dir> out.tvc --stats
