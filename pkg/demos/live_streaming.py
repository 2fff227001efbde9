"""
Live event streaming against the VOD server
===========================================

Start the HTTP server in-process, stream a script's frames to it with the
shim, and watch the playlist grow segment by segment until the end marker
appears.  Segments are rendered just-in-time when first fetched.
"""

import pathlib
import tempfile

from framecast import synth
from framecast.ir import FrameType, PixelFormat
from framecast.server import ServerConfig, VodHttpServer, VodService

work = pathlib.Path(tempfile.mkdtemp())
src = work / "cam.tvc"
src.write_bytes(synth.make_synthetic_tvc(
    FrameType(64, 64, PixelFormat.RGB8), 150, gop_size=30))

server = VodHttpServer(VodService(ServerConfig(data_dir=str(work / "data"))),
                       port=0)
server.start_background()
base = f"http://127.0.0.1:{server.port}"
print(f"serving on {base}")

import framecast_shim.cv2 as cv2
from framecast_shim._client import request_bytes

cap = cv2.VideoCapture(str(src))
writer = cv2.VideoWriter(base, 0, 30, (64, 64))
last_seen = -1
for i in range(150):
    ret, frame = cap.read()
    cv2.putText(frame, f"LIVE {i}", (2, 12), cv2.FONT_HERSHEY_SIMPLEX, 1,
                (255, 255, 255))
    writer.write(frame)
    # The writer pushes in 30-frame batches; a 2 s segment needs 60 frames,
    # so the playlist gains an entry every other batch.
    if writer.spec_id is not None:
        playlist = request_bytes(writer.playlist_url).decode()
        n = playlist.count("#EXTINF")
        if n != last_seen:
            print(f"after frame {i}: {n} segment(s) listed")
            last_seen = n
writer.release()

final = request_bytes(writer.playlist_url).decode()
print(final)

# Fetch and decode the segments: 60 + 60 + 30 frames.
from framecast import codec

total = 0
for n in range(final.count("#EXTINF")):
    blob = request_bytes(f"{base}/vod/{writer.spec_id}/segment-{n}.tvc")
    total += len(codec.decode_all(blob))
print(f"{total} frames across all segments")
server.shutdown()
