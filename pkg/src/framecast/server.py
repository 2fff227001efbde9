"""Just-in-time VOD server.

Specs are registered empty and appended to incrementally through a push
endpoint that type- and policy-checks every frame expression before it is
accepted.  Playback goes through an HLS-style event playlist: the manifest
is available the moment a spec is created, grows one entry per fully
covered 2-second segment, and gains the end marker exactly once when the
spec terminates.  Segments are rendered on request (only the requested
window is ever evaluated), cached, and deduplicated so concurrent requests
for one segment share a single render.  Source container I/O goes through
a shared 64 KiB block cache so repeated GOP reads across segment requests
do not hit the backing file again.

Endpoints (HTTP/1.1, JSON bodies for management, binary for segments):

    POST   /v1/spec                   create; returns spec_id + playlist URL
    POST   /v1/spec/{id}/part         push frame expressions (atomic)
    DELETE /v1/spec/{id}              remove spec and cached segments
    GET    /v1/spec/{id}/status
    GET    /vod/{id}/playlist.m3u8
    GET    /vod/{id}/segment-{n}.tvc
"""

from __future__ import annotations

import json
import math
import os
import re
import threading
import uuid
from collections import OrderedDict
from dataclasses import dataclass, field, fields
from fractions import Fraction
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Optional

from . import codec
from .engine import CollectSink, Counters, EngineConfig, render
from .ir import (FrameType, PixelFormat, SecurityPolicy, SpecParseError,
                 TypeCheckError, VideoSpec, check_policy,
                 frame_type_from_json, frame_type_to_json, intern_part,
                 type_check)
from .filters import REGISTRY

BLOCK_SIZE = 64 * 1024


class ServerError(Exception):
    status = 500
    name = "ServerError"

    def to_json(self) -> dict:
        return {"error": self.name, "detail": str(self)}


class UnknownSpec(ServerError):
    status = 404
    name = "UnknownSpec"


class SpecTerminated(ServerError):
    status = 409
    name = "SpecTerminated"


class PushTypeError(ServerError):
    status = 400
    name = "TypeError"

    def __init__(self, frame: int, detail: str):
        super().__init__(detail)
        self.frame = frame

    def to_json(self) -> dict:
        return {"error": self.name, "frame": self.frame, "detail": str(self)}


class PushPolicyError(ServerError):
    status = 400
    name = "PolicyViolation"

    def __init__(self, frame: int, limit: str, detail: str):
        super().__init__(detail)
        self.frame = frame
        self.limit = limit

    def to_json(self) -> dict:
        return {"error": self.name, "frame": self.frame, "limit": self.limit,
                "detail": str(self)}


class BadRequest(ServerError):
    status = 400
    name = "BadRequest"


class SegmentNotAvailable(ServerError):
    status = 404
    name = "SegmentNotAvailable"

    def to_json(self) -> dict:
        return {"error": self.name, "detail": str(self), "retry": True}


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass
class ServerConfig:
    port: int = 8080
    data_dir: str = "framecast-data"
    segment_duration: float = 2.0
    segment_gop_size: int = 1  # all-I segments by default
    segment_b_frames: bool = False
    segment_cache_bytes: int = 256 * 1024 * 1024
    block_cache_bytes: int = 64 * 1024 * 1024
    decode_workers: int = 4
    filter_workers: int = 4
    pool_capacity: int = 100
    prefetch_window: int = 80
    max_intermediate_width: int = 8192
    max_intermediate_height: int = 8192
    max_value_bytes: int = 1 << 20
    max_expr_depth: int = 64

    def policy(self) -> SecurityPolicy:
        return SecurityPolicy(self.max_intermediate_width,
                              self.max_intermediate_height,
                              self.max_value_bytes, self.max_expr_depth)

    def engine_config(self) -> EngineConfig:
        return EngineConfig(self.decode_workers, self.filter_workers,
                            self.pool_capacity, self.prefetch_window)


class ConfigError(Exception):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def parse_config(text: str) -> ServerConfig:
    """Parse the `key = value` config format (one pair per line, # comments)."""
    types = {f.name: f.type for f in fields(ServerConfig)}
    casts = {"int": int, "float": float, "str": str,
             "bool": lambda s: {"true": True, "false": False}[s.lower()]}
    cfg = ServerConfig()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'key = value', got {line!r}", lineno)
        key, _, value = (p.strip() for p in line.partition("="))
        if key not in types:
            raise ConfigError(f"unknown option {key!r}", lineno)
        try:
            setattr(cfg, key, casts[types[key]](value))
        except (ValueError, KeyError):
            raise ConfigError(f"bad {types[key]} value {value!r} for {key}",
                              lineno) from None
    return cfg


def load_config(path: str) -> ServerConfig:
    with open(path) as f:
        return parse_config(f.read())


# ---------------------------------------------------------------------------
# Caches
# ---------------------------------------------------------------------------

class LruByteCache:
    """Byte-budgeted LRU map; values are bytes objects."""

    def __init__(self, budget: int):
        self.budget = budget
        self._map: OrderedDict = OrderedDict()
        self._bytes = 0
        self._lock = threading.Lock()
        self.hits = 0
        self.misses = 0

    def get(self, key) -> Optional[bytes]:
        with self._lock:
            data = self._map.get(key)
            if data is None:
                self.misses += 1
                return None
            self._map.move_to_end(key)
            self.hits += 1
            return data

    def put(self, key, data: bytes) -> None:
        with self._lock:
            old = self._map.pop(key, None)
            if old is not None:
                self._bytes -= len(old)
            self._map[key] = data
            self._bytes += len(data)
            while self._bytes > self.budget and len(self._map) > 1:
                _, evicted = self._map.popitem(last=False)
                self._bytes -= len(evicted)

    def drop(self, predicate) -> None:
        with self._lock:
            for key in [k for k in self._map if predicate(k)]:
                self._bytes -= len(self._map.pop(key))


class BlockCache(LruByteCache):
    """Shared I/O cache of 64 KiB file blocks, keyed by (path, block index)."""

    def __init__(self, budget: int):
        super().__init__(budget)
        self.backend_reads = 0

    def read(self, path: str, file_source, offset: int, length: int) -> bytes:
        if length <= 0:
            return b""
        first = offset // BLOCK_SIZE
        last = (offset + length - 1) // BLOCK_SIZE
        chunks = []
        for b in range(first, last + 1):
            block = self.get((path, b))
            if block is None:
                block = file_source.read_at(b * BLOCK_SIZE, BLOCK_SIZE)
                with self._lock:
                    self.backend_reads += 1
                self.put((path, b), block)
            chunks.append(block)
        blob = b"".join(chunks)
        start = offset - first * BLOCK_SIZE
        return blob[start:start + length]


class BlockCachedSource:
    """codec byte source that routes reads through a shared BlockCache;
    reads are byte-equal to direct file reads."""

    def __init__(self, path: str, cache: BlockCache):
        self.path = path
        self._file = codec.FileSource(path)
        self._cache = cache

    @property
    def size(self) -> int:
        return self._file.size

    def read_at(self, offset: int, length: int) -> bytes:
        # Clamp like a plain file read would.
        length = max(0, min(length, self.size - offset))
        return self._cache.read(self.path, self._file, offset, length)


def read_blocks(path: str, ranges, cache: BlockCache) -> list:
    """Read byte ranges [(offset, length), ...] through the block cache."""
    src = BlockCachedSource(path, cache)
    return [src.read_at(off, n) for off, n in ranges]


# ---------------------------------------------------------------------------
# Spec store
# ---------------------------------------------------------------------------

@dataclass
class SpecRecord:
    spec: VideoSpec
    bindings: dict  # source_id -> path
    source_types: dict  # source_id -> FrameType
    policy: SecurityPolicy
    lock: threading.Lock = field(default_factory=threading.Lock)
    readers: dict = field(default_factory=dict)


class SpecStore:
    """In-memory spec map with an append-only on-disk record log per spec,
    replayed at startup."""

    def __init__(self, data_dir: Optional[str], default_policy: SecurityPolicy):
        self._specs: dict[str, SpecRecord] = {}
        self._lock = threading.Lock()
        self._default_policy = default_policy
        self._dir = None
        if data_dir is not None:
            self._dir = os.path.join(data_dir, "specs")
            os.makedirs(self._dir, exist_ok=True)
            self._replay()

    def _log_path(self, spec_id: str) -> str:
        return os.path.join(self._dir, f"{spec_id}.log")

    def _append_log(self, spec_id: str, record: dict) -> None:
        if self._dir is None:
            return
        with open(self._log_path(spec_id), "a") as f:
            f.write(json.dumps(record, separators=(",", ":")) + "\n")

    def _replay(self) -> None:
        for name in sorted(os.listdir(self._dir)):
            if not name.endswith(".log"):
                continue
            with open(os.path.join(self._dir, name)) as f:
                for line in f:
                    rec = json.loads(line)
                    if rec["op"] == "create":
                        self._create_in_memory(
                            rec["spec_id"], tuple(rec["fps"]),
                            frame_type_from_json(rec["output_type"]),
                            rec["sources"],
                            {s: frame_type_from_json(t)
                             for s, t in rec["source_types"].items()},
                            SecurityPolicy(**rec["policy"]))
                    elif rec["op"] == "part":
                        record = self._specs[rec["spec_id"]]
                        roots = intern_part(record.spec.table, rec["part"])
                        for nid in roots:
                            record.spec.frames.append(nid)
                        if rec["terminal"]:
                            record.spec.terminate()

    def _create_in_memory(self, spec_id, fps, output_type, bindings,
                          source_types, policy) -> SpecRecord:
        spec = VideoSpec(spec_id, fps[0], fps[1], output_type)
        record = SpecRecord(spec, dict(bindings), dict(source_types), policy)
        self._specs[spec_id] = record
        return record

    def create(self, fps, output_type: FrameType, bindings: dict,
               source_types: dict, policy: Optional[SecurityPolicy]) -> SpecRecord:
        policy = policy or self._default_policy
        spec_id = uuid.uuid4().hex[:12]
        with self._lock:
            record = self._create_in_memory(spec_id, fps, output_type,
                                            bindings, source_types, policy)
        self._append_log(spec_id, {
            "op": "create", "spec_id": spec_id, "fps": list(fps),
            "output_type": frame_type_to_json(output_type),
            "sources": bindings,
            "source_types": {s: frame_type_to_json(t)
                             for s, t in source_types.items()},
            "policy": {"max_intermediate_width": policy.max_intermediate_width,
                       "max_intermediate_height": policy.max_intermediate_height,
                       "max_value_bytes": policy.max_value_bytes,
                       "max_expr_depth": policy.max_expr_depth},
        })
        return record

    def get(self, spec_id: str) -> SpecRecord:
        with self._lock:
            record = self._specs.get(spec_id)
        if record is None:
            raise UnknownSpec(f"no spec {spec_id!r}")
        return record

    def log_part(self, spec_id: str, part: dict, terminal: bool) -> None:
        self._append_log(spec_id, {"op": "part", "spec_id": spec_id,
                                   "part": part, "terminal": terminal})

    def delete(self, spec_id: str) -> None:
        with self._lock:
            if spec_id not in self._specs:
                raise UnknownSpec(f"no spec {spec_id!r}")
            del self._specs[spec_id]
        if self._dir is not None:
            try:
                os.remove(self._log_path(spec_id))
            except FileNotFoundError:
                pass


# ---------------------------------------------------------------------------
# Service
# ---------------------------------------------------------------------------

class VodService:
    def __init__(self, config: Optional[ServerConfig] = None,
                 persist: bool = True):
        self.config = config or ServerConfig()
        data_dir = self.config.data_dir if persist else None
        self.store = SpecStore(data_dir, self.config.policy())
        self.segment_cache = LruByteCache(self.config.segment_cache_bytes)
        self.block_cache = BlockCache(self.config.block_cache_bytes)
        self._segment_flights: dict = {}
        self._flight_lock = threading.Lock()
        self.render_count = 0  # segment renders actually executed
        self.last_render_counters: Optional[Counters] = None

    # -- layout --------------------------------------------------------------

    def frames_per_segment(self, record: SpecRecord) -> int:
        spec = record.spec
        exact = Fraction(str(self.config.segment_duration)) * spec.fps_num / spec.fps_den
        return max(1, math.ceil(exact))

    def segments_available(self, record: SpecRecord) -> int:
        fps_seg = self.frames_per_segment(record)
        written = len(record.spec.frames)
        full = written // fps_seg
        if record.spec.terminated and written % fps_seg:
            return full + 1
        return full

    def segment_frame_range(self, record: SpecRecord, n: int) -> tuple:
        fps_seg = self.frames_per_segment(record)
        first = n * fps_seg
        last = min(first + fps_seg, len(record.spec.frames))
        return first, last

    # -- management operations ------------------------------------------------

    def create_spec(self, fps, output_type: FrameType, sources: dict,
                    policy: Optional[SecurityPolicy] = None) -> dict:
        source_types = {}
        for src, path in sources.items():
            try:
                info = codec.probe(codec.FileSource(path))
            except FileNotFoundError:
                raise BadRequest(f"source {src!r}: no such file {path!r}") from None
            except codec.CodecError as e:
                raise BadRequest(f"source {src!r}: {e}") from None
            source_types[src] = FrameType(
                info["width"], info["height"], PixelFormat(info["pixfmt"]))
        record = self.store.create(fps, output_type, dict(sources),
                                   source_types, policy)
        return {"spec_id": record.spec.spec_id,
                "playlist_url": f"/vod/{record.spec.spec_id}/playlist.m3u8"}

    def push_part(self, spec_id: str, part: dict, terminal: bool) -> int:
        record = self.store.get(spec_id)
        with record.lock:
            spec = record.spec
            if spec.terminated:
                raise SpecTerminated(f"spec {spec_id} is terminated")
            try:
                roots = intern_part(spec.table, part)
            except SpecParseError as e:
                raise BadRequest(str(e)) from None
            # Validate everything before appending anything: a rejected part
            # leaves frames_written unchanged.
            for i, nid in enumerate(roots):
                try:
                    got = type_check(spec.table, nid, record.source_types, REGISTRY)
                except TypeCheckError as e:
                    raise PushTypeError(i, str(e)) from None
                if got != spec.output_type:
                    raise PushTypeError(
                        i, f"frame type {got} != output type {spec.output_type}")
                violation = check_policy(spec.table, nid, record.policy,
                                         record.source_types, REGISTRY)
                if violation is not None:
                    raise PushPolicyError(i, violation.limit, violation.detail)
            for nid in roots:
                spec.frames.append(nid)
            if terminal:
                spec.terminate()
            self.store.log_part(spec_id, part, terminal)
            return len(roots)

    def delete_spec(self, spec_id: str) -> None:
        self.store.delete(spec_id)
        self.segment_cache.drop(lambda key: key[0] == spec_id)

    def status(self, spec_id: str) -> dict:
        record = self.store.get(spec_id)
        return {
            "spec_id": spec_id,
            "frames_written": len(record.spec.frames),
            "terminated": record.spec.terminated,
            "segments_available": self.segments_available(record),
            "playlist_url": f"/vod/{spec_id}/playlist.m3u8",
        }

    # -- VOD operations --------------------------------------------------------

    def playlist(self, spec_id: str) -> str:
        record = self.store.get(spec_id)
        with record.lock:
            available = self.segments_available(record)
            terminated = record.spec.terminated
            fps_num, fps_den = record.spec.fps_num, record.spec.fps_den
            ranges = [self.segment_frame_range(record, n) for n in range(available)]
        lines = [
            "#EXTM3U",
            "#EXT-X-VERSION:3",
            "#EXT-X-PLAYLIST-TYPE:EVENT",
            f"#EXT-X-TARGETDURATION:{math.ceil(self.config.segment_duration)}",
            "#EXT-X-MEDIA-SEQUENCE:0",
        ]
        for n, (first, last) in enumerate(ranges):
            duration = (last - first) * fps_den / fps_num
            lines.append(f"#EXTINF:{duration:.6f},")
            lines.append(f"segment-{n}.tvc")
        if terminated:
            lines.append("#EXT-X-ENDLIST")
        return "\n".join(lines) + "\n"

    def _reader_for(self, record: SpecRecord, src: str):
        reader = record.readers.get(src)
        if reader is None:
            reader = codec.TvcReader(
                BlockCachedSource(record.bindings[src], self.block_cache))
            record.readers[src] = reader
        return reader

    def segment(self, spec_id: str, n: int) -> bytes:
        record = self.store.get(spec_id)
        with record.lock:
            if n < 0 or n >= self.segments_available(record):
                raise SegmentNotAvailable(
                    f"segment {n} of spec {spec_id} is not yet covered")
        cached = self.segment_cache.get((spec_id, n))
        if cached is not None:
            return cached
        # Single-flight: concurrent requests for one segment share a render.
        with self._flight_lock:
            flight = self._segment_flights.setdefault((spec_id, n), threading.Lock())
        with flight:
            cached = self.segment_cache.get((spec_id, n))
            if cached is not None:
                return cached
            data = self._render_segment(record, n)
            self.segment_cache.put((spec_id, n), data)
            with self._flight_lock:
                self._segment_flights.pop((spec_id, n), None)
            return data

    def _render_segment(self, record: SpecRecord, n: int) -> bytes:
        with record.lock:
            first, last = self.segment_frame_range(record, n)
            readers = {src: self._reader_for(record, src)
                       for src in record.bindings}
        sink = CollectSink()
        counters = render(record.spec, readers, sink, first=first, last=last,
                          config=self.config.engine_config())
        self.render_count += 1
        self.last_render_counters = counters
        return codec.encode_tvc(
            sink.frames, (record.spec.fps_num, record.spec.fps_den),
            gop_size=self.config.segment_gop_size or (last - first),
            b_frames=self.config.segment_b_frames)


# ---------------------------------------------------------------------------
# HTTP layer
# ---------------------------------------------------------------------------

_ROUTES = [
    ("POST", re.compile(r"^/v1/spec$"), "create"),
    ("POST", re.compile(r"^/v1/spec/(?P<id>[0-9a-f]+)/part$"), "part"),
    ("DELETE", re.compile(r"^/v1/spec/(?P<id>[0-9a-f]+)$"), "delete"),
    ("GET", re.compile(r"^/v1/spec/(?P<id>[0-9a-f]+)/status$"), "status"),
    ("GET", re.compile(r"^/vod/(?P<id>[0-9a-f]+)/playlist\.m3u8$"), "playlist"),
    ("GET", re.compile(r"^/vod/(?P<id>[0-9a-f]+)/segment-(?P<n>\d+)\.tvc$"), "segment"),
]


class _Handler(BaseHTTPRequestHandler):
    service: VodService  # set on the server class
    protocol_version = "HTTP/1.1"

    def log_message(self, fmt, *args):
        pass

    def _send(self, status: int, body: bytes, content_type: str) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_json(self, status: int, obj) -> None:
        self._send(status, json.dumps(obj).encode(), "application/json")

    def _body_json(self):
        length = int(self.headers.get("Content-Length", "0"))
        raw = self.rfile.read(length)
        try:
            return json.loads(raw)
        except json.JSONDecodeError as e:
            raise BadRequest(f"invalid JSON body: {e.msg}") from None

    def _dispatch(self, method: str) -> None:
        for verb, pattern, action in _ROUTES:
            if verb != method:
                continue
            m = pattern.match(self.path)
            if not m:
                continue
            try:
                self._handle(action, m)
            except ServerError as e:
                self._send_json(e.status, e.to_json())
            except Exception as e:
                self._send_json(500, {"error": "RenderError", "detail": str(e)})
            return
        self._send_json(404, {"error": "NotFound", "detail": self.path})

    def _handle(self, action: str, m) -> None:
        service = self.service
        if action == "create":
            body = self._body_json()
            try:
                fps = (int(body["fps"][0]), int(body["fps"][1]))
                output_type = frame_type_from_json(body["output_type"])
                sources = {str(k): str(v) for k, v in body["sources"].items()}
                policy = SecurityPolicy(**body["policy"]) if "policy" in body else None
            except (KeyError, TypeError, ValueError, IndexError, SpecParseError) as e:
                raise BadRequest(f"bad create request: {e}") from None
            self._send_json(200, service.create_spec(fps, output_type, sources, policy))
        elif action == "part":
            body = self._body_json()
            part = body.get("part")
            if part is None:
                raise BadRequest("missing 'part'")
            n = service.push_part(m["id"], part, bool(body.get("terminal", False)))
            self._send_json(200, {"accepted": n})
        elif action == "delete":
            service.delete_spec(m["id"])
            self._send_json(200, {"deleted": m["id"]})
        elif action == "status":
            self._send_json(200, service.status(m["id"]))
        elif action == "playlist":
            text = service.playlist(m["id"])
            self._send(200, text.encode(), "application/vnd.apple.mpegurl")
        elif action == "segment":
            data = service.segment(m["id"], int(m["n"]))
            self._send(200, data, "application/octet-stream")

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def do_DELETE(self):
        self._dispatch("DELETE")


class VodHttpServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, service: VodService, port: Optional[int] = None):
        handler = type("BoundHandler", (_Handler,), {"service": service})
        super().__init__(("127.0.0.1", service.config.port if port is None else port),
                         handler)
        self.service = service

    @property
    def port(self) -> int:
        return self.server_address[1]

    def start_background(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread


def serve(config: ServerConfig) -> None:
    service = VodService(config)
    server = VodHttpServer(service)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
