"""End-to-end acceptance gate.

One test per criterion; each prints a single PASS line on success (visible
with -s or in failure output).  All tests here treat the library's public
surface the way an operator would: canonical spec files, the render entry
point, the bundled CLI, and the VOD service.
"""

import hashlib
import json
import os
import random
import threading
import time

import numpy as np
import pytest

from specgen import (Builder, access_order, random_spec,
                     stride_decode_oracle)
from framecast import codec, synth
from framecast.cli import main as cli_main
from framecast.engine import (CallbackSink, CollectSink, EngineConfig,
                              render, reference_render)
from framecast.ir import (Color, FrameType, Int, IntPair, PixelFormat,
                          SecurityPolicy, Str, VideoSpec, serialize_part,
                          serialize_spec)
from framecast.server import (PushPolicyError, PushTypeError, ServerConfig,
                              VodService)

GRAY = FrameType(64, 64, PixelFormat.GRAY8)
WORKER_CONFIGS = [(1, 1), (4, 4), (8, 8)]


def _collect(spec, sources, **kw):
    sink = CollectSink()
    counters = render(spec, sources, sink, **kw)
    return sink.frames, counters


def _simple_spec(order, source_count=None, annotate=False):
    spec = VideoSpec("acc", 30, 1, GRAY)
    b = Builder(spec)
    for f in order:
        node = b.src("in", f)
        if annotate:
            node = b.call("draw_rectangle", node,
                          b.const(IntPair(4, 4)), b.const(IntPair(60, 60)),
                          b.const(Color(255, 255, 255)), b.const(Int(1)))
        spec.frames.append(node)
    spec.terminate()
    return spec


def test_acceptance_01_oracle_parity_200_random_specs():
    start = time.perf_counter()
    rng = random.Random(20260824)
    for i in range(200):
        spec, sources = random_spec(rng)
        ref = [f.data for f in reference_render(spec, sources)]
        for workers in WORKER_CONFIGS:
            got, _ = _collect(spec, sources,
                              config=EngineConfig(*workers, 100, 80))
            assert [f.data for f in got] == ref, (i, workers)
    elapsed = time.perf_counter() - start
    assert elapsed < 300, f"took {elapsed:.0f}s, target < 5 min"
    print(f"ACCEPTANCE 1 oracle parity (200 specs x 3 configs, "
          f"{elapsed:.0f}s): PASS")


def test_acceptance_02_cmd_render_hash_invariant(tmp_path):
    srcs = tmp_path / "srcs"
    srcs.mkdir()
    (srcs / "in.tvc").write_bytes(synth.make_synthetic_tvc(
        GRAY, 120, gop_size=30, b_frames=True))
    spec = _simple_spec(access_order("shuffle", 120, random.Random(1)),
                        annotate=True)
    (tmp_path / "spec.json").write_bytes(serialize_spec(spec))
    hashes = set()
    for run in range(5):
        for i, flags in enumerate((["--threads", "1"], ["--threads", "2"],
                                   ["--threads", "8"],
                                   ["--decoders", "4", "--filters", "1"])):
            out = tmp_path / f"out-{run}-{i}.tvc"
            assert cli_main(["render", str(tmp_path / "spec.json"), str(srcs),
                             str(out)] + flags) == 0
            hashes.add(hashlib.sha256(out.read_bytes()).hexdigest())
    assert len(hashes) == 1
    print("ACCEPTANCE 2 cmd_render hash invariant (5 runs x 4 configs): PASS")


def test_acceptance_03_belady_monotonicity():
    reader = codec.TvcReader(synth.make_synthetic_tvc(
        GRAY, 500, gop_size=30, b_frames=False))
    # Fixed prefetch window <= smallest pool: the request stream is then
    # identical across the sweep and only cache size varies.
    for pattern in ("shuffle", "reverse"):
        spec = _simple_spec(access_order(pattern, 500, random.Random(0)))
        decoded = {}
        for pool in range(10, 101, 10):
            _, c = _collect(spec, {"in": reader}, deterministic=True,
                            config=EngineConfig(1, 1, pool, 10))
            decoded[pool] = c.frames_decoded
        seq = [decoded[p] for p in range(10, 101, 10)]
        assert seq == sorted(seq, reverse=True), (pattern, seq)
        if pattern == "reverse":
            for pool in range(60, 101, 10):  # pool >= 2 x gop_size
                assert decoded[pool] == 500, (pool, decoded[pool])
    print("ACCEPTANCE 3 Belady monotonicity + reverse single-decode: PASS")


def test_acceptance_04_decode_amplification_law():
    for b_frames in (False, True):
        reader = codec.TvcReader(synth.make_synthetic_tvc(
            GRAY, 1200, gop_size=30, b_frames=b_frames))
        for stride in (30, 47, 64, 128):
            targets = list(range(0, 1200, stride))
            spec = _simple_spec(targets)
            _, c = _collect(spec, {"in": reader}, deterministic=True,
                            config=EngineConfig(1, 1, 100, 80))
            assert c.frames_decoded == stride_decode_oracle(reader, targets), \
                (b_frames, stride)
    print("ACCEPTANCE 4 decode amplification == per-GOP prefix oracle: PASS")


def test_acceptance_05_sparse_stride_scaling():
    big = FrameType(128, 128, PixelFormat.GRAY8)
    blob = synth.make_synthetic_tvc(big, 50_000, gop_size=30, b_frames=False)
    reader = codec.TvcReader(blob)

    def run(order, decoders, out_type=big):
        spec = VideoSpec("s", 30, 1, out_type)
        b = Builder(spec)
        for f in order:
            spec.frames.append(b.src("in", f))
        spec.terminate()
        sink = CallbackSink(lambda gen, raster: None)
        start = time.perf_counter()
        counters = render(spec, {"in": reader}, sink,
                          config=EngineConfig(decoders, 2, 100, 80))
        return time.perf_counter() - start, counters

    stride_order = list(range(0, 50_000, 128))
    run(stride_order[:40], 1)  # warm numba/caches
    t1, c1 = min((run(stride_order, 1) for _ in range(2)), key=lambda r: r[0])
    t4, c4 = min((run(stride_order, 4) for _ in range(2)), key=lambda r: r[0])

    # The mechanism behind the multi-decoder trend must hold everywhere:
    # the GOP prefixes are divided across decoder threads (several record
    # busy time) without any duplicated decode work.
    assert c4.frames_decoded == c1.frames_decoded, \
        (c1.frames_decoded, c4.frames_decoded)
    busy_decoders = sum(1 for name, ms in c4.worker_busy_ms.items()
                        if name.startswith("decode") and ms > 0)
    assert busy_decoders >= 3, c4.worker_busy_ms

    # The wall-clock ratio additionally needs hardware that can run the
    # decoders concurrently; on fewer than 4 cores the threads timeshare
    # one of them and no timing claim is meaningful.
    cores = os.cpu_count() or 1
    if cores >= 4:
        assert t4 <= 0.6 * t1, \
            f"stride-128: 4 decoders {t4:.2f}s vs 1 {t1:.2f}s"
        ratio_note = f"128: {t1:.2f}s->{t4:.2f}s"
    else:
        ratio_note = f"128: wall ratio untestable on {cores} core(s)"

    dense_order = list(range(10_000))
    d1, _ = min((run(dense_order, 1) for _ in range(2)), key=lambda r: r[0])
    d4, _ = min((run(dense_order, 4) for _ in range(2)), key=lambda r: r[0])
    assert abs(d4 - d1) < 0.25 * d1, \
        f"stride-1: 1 decoder {d1:.2f}s vs 4 {d4:.2f}s"
    print(f"ACCEPTANCE 5 stride scaling ({ratio_note}; "
          f"1: {d1:.2f}s->{d4:.2f}s): PASS")


def test_acceptance_06_constant_time_to_first_segment(tmp_path):
    src = tmp_path / "in.tvc"
    src.write_bytes(synth.make_synthetic_tvc(GRAY, 200, gop_size=30,
                                             b_frames=False))
    cfg = ServerConfig(data_dir=str(tmp_path / "data"),
                       decode_workers=1, filter_workers=1)

    def first_segment_stats(total_frames):
        service = VodService(cfg, persist=False)
        sid = service.create_spec((30, 1), GRAY, {"in": str(src)})["spec_id"]
        spec = VideoSpec("m", 30, 1, GRAY)
        b = Builder(spec)
        roots = [b.src("in", f % 200) for f in range(total_frames)]
        spec.frames.extend(roots)
        service.push_part(sid, serialize_part(spec.table, roots), True)
        walls = []
        for _ in range(3):
            service.segment_cache.drop(lambda k: True)
            start = time.perf_counter()
            service.segment(sid, 0)
            walls.append(time.perf_counter() - start)
        c = service.last_render_counters
        return c.frames_evaluated + c.frames_decoded, min(walls)

    work_small, wall_small = first_segment_stats(300)
    work_large, wall_large = first_segment_stats(30_000)
    assert work_small == work_large
    assert abs(wall_large - wall_small) <= 0.2 * max(wall_small, wall_large), \
        (wall_small, wall_large)
    print(f"ACCEPTANCE 6 first-segment work {work_small}=={work_large}, "
          f"wall {wall_small * 1e3:.1f}ms vs {wall_large * 1e3:.1f}ms: PASS")


def test_acceptance_07_event_stream_protocol(tmp_path):
    src = tmp_path / "in.tvc"
    src.write_bytes(synth.make_synthetic_tvc(GRAY, 200, gop_size=30))
    service = VodService(ServerConfig(), persist=False)

    def fresh_spec():
        sid = service.create_spec((30, 1), GRAY, {"in": str(src)})["spec_id"]
        return sid, VideoSpec("m", 30, 1, GRAY)

    def push(sid, spec, n, terminal=False):
        b = Builder(spec)
        roots = [b.src("in", f % 200)
                 for f in range(len(spec.frames), len(spec.frames) + n)]
        part = serialize_part(spec.table, roots)
        spec.frames.extend(roots)
        service.push_part(sid, part, terminal)

    # Golden: 59 frames -> no segments; 60 -> exactly segment 0.
    sid, spec = fresh_spec()
    push(sid, spec, 59)
    assert service.playlist(sid) == (
        "#EXTM3U\n#EXT-X-VERSION:3\n#EXT-X-PLAYLIST-TYPE:EVENT\n"
        "#EXT-X-TARGETDURATION:2\n#EXT-X-MEDIA-SEQUENCE:0\n")
    push(sid, spec, 1)
    assert service.playlist(sid) == (
        "#EXTM3U\n#EXT-X-VERSION:3\n#EXT-X-PLAYLIST-TYPE:EVENT\n"
        "#EXT-X-TARGETDURATION:2\n#EXT-X-MEDIA-SEQUENCE:0\n"
        "#EXTINF:2.000000,\nsegment-0.tvc\n")
    push(sid, spec, 0, terminal=True)
    final = service.playlist(sid)
    assert final.count("#EXT-X-ENDLIST") == 1 and final.endswith(
        "#EXT-X-ENDLIST\n")
    assert service.playlist(sid) == final  # termination marker appears once

    # Monotonicity across 100 randomized push/poll interleavings.
    rng = random.Random(7)
    for _ in range(100):
        sid, spec = fresh_spec()
        previous = ""
        pushed = 0
        total = rng.randint(1, 200)
        while pushed < total:
            n = rng.randint(1, 45)
            n = min(n, total - pushed)
            push(sid, spec, n, terminal=(pushed + n == total))
            pushed += n
            if rng.random() < 0.8:
                pl = service.playlist(sid)
                assert pl.startswith(previous)
                previous = pl.replace("#EXT-X-ENDLIST\n", "")
    print("ACCEPTANCE 7 event-stream manifests + monotonic playlists: PASS")


def test_acceptance_08_push_policy_rejections(tmp_path):
    src = tmp_path / "in.tvc"
    src.write_bytes(synth.make_synthetic_tvc(GRAY, 10, gop_size=10))
    service = VodService(ServerConfig(), persist=False)
    policy = SecurityPolicy(max_value_bytes=256, max_expr_depth=4)
    sid = service.create_spec((30, 1), GRAY, {"in": str(src)}, policy)["spec_id"]
    spec = VideoSpec("m", 30, 1, GRAY)
    b = Builder(spec)
    good = b.src("in", 0)

    # type mismatch (wrong output geometry), mid-part
    bad_type = b.call("crop", good, b.const(Int(0)), b.const(Int(0)),
                      b.const(Int(32)), b.const(Int(32)))
    with pytest.raises(PushTypeError) as ei:
        service.push_part(sid, serialize_part(spec.table, [good, bad_type]),
                          False)
    assert ei.value.frame == 1
    assert service.status(sid)["frames_written"] == 0

    # oversize constant
    big = b.call("draw_text", good, b.const(Str("y" * 2000)),
                 b.const(IntPair(0, 30)), b.const(Int(1)),
                 b.const(Color(0, 0, 0)))
    with pytest.raises(PushPolicyError) as ei:
        service.push_part(sid, serialize_part(spec.table, [big]), False)
    assert ei.value.limit == "value_bytes"
    assert service.status(sid)["frames_written"] == 0

    # over-deep expression
    deep = good
    for _ in range(5):
        deep = b.call("draw_rectangle", deep, b.const(IntPair(0, 0)),
                      b.const(IntPair(5, 5)), b.const(Color(1, 1, 1)),
                      b.const(Int(1)))
    with pytest.raises(PushPolicyError) as ei:
        service.push_part(sid, serialize_part(spec.table, [deep]), False)
    assert ei.value.limit == "depth"
    assert service.status(sid)["frames_written"] == 0
    print("ACCEPTANCE 8 push rejections atomic with correct error class: PASS")


def test_acceptance_09_liveness_no_deadlock():
    rng = random.Random(99)
    readers = {
        (gop, b): codec.TvcReader(synth.make_synthetic_tvc(
            GRAY, 240, gop_size=gop, b_frames=b, seed=gop))
        for gop in (1, 30) for b in (False, True)
    }
    configs = [(1, 1), (2, 8), (8, 2), (16, 16)]
    for i in range(100):
        gop, b = rng.choice(list(readers))
        reader = readers[(gop, b)]
        kind = i % 3
        spec = VideoSpec("adv", 30, 1, GRAY)
        bld = Builder(spec)
        if kind == 0:  # reverse
            for f in range(239, -1, -1):
                spec.frames.append(bld.src("in", f))
        elif kind == 1:  # interleaved multi-source
            for f in range(120):
                left = bld.call("crop", bld.src("in", 239 - f),
                                bld.const(Int(0)), bld.const(Int(0)),
                                bld.const(Int(32)), bld.const(Int(64)))
                right = bld.call("crop", bld.src("in2", f),
                                 bld.const(Int(32)), bld.const(Int(0)),
                                 bld.const(Int(32)), bld.const(Int(64)))
                spec.frames.append(bld.call("hstack", left, right))
        else:  # worst-case stride: adjacent gens always in different GOPs
            for f in access_order("stride", 240, rng, stride=gop + 29):
                spec.frames.append(bld.src("in", f))
        spec.terminate()
        sources = {"in": reader, "in2": readers[(gop, not b)]}
        workers = configs[i % len(configs)]
        pool = rng.choice([8, 40, 100])
        result = {}

        def target():
            result["frames"], result["c"] = _collect(
                spec, sources,
                config=EngineConfig(*workers, pool,
                                    min(pool, rng.choice([4, 30, 80]))))

        t = threading.Thread(target=target, daemon=True)
        t.start()
        t.join(60)
        assert not t.is_alive(), f"spec {i} did not finish within 60s"
        assert len(result["frames"]) == len(spec.frames)

    # Constructed three-condition abandonment scenario: a stalled decoder,
    # a more critical uncovered frame, and this decoder the least needed.
    reader = codec.TvcReader(synth.make_synthetic_tvc(
        GRAY, 300, gop_size=30, b_frames=False, seed=2))
    spec = _simple_spec(access_order("shuffle", 300, random.Random(7)))
    _, c = _collect(spec, {"in": reader}, deterministic=True,
                    config=EngineConfig(1, 1, 40, 30))
    assert c.abandonments > 0
    print(f"ACCEPTANCE 9 liveness (100 adversarial specs; "
          f"abandonments={c.abandonments}): PASS")


def test_acceptance_10_codec_round_trip():
    rng = np.random.default_rng(2468)
    pyrng = random.Random(2468)
    for i in range(1000):
        pixfmt = pyrng.choice(list(PixelFormat))
        w = 2 * pyrng.randint(1, 6)
        h = 2 * pyrng.randint(1, 6)
        ftype = FrameType(w, h, pixfmt)
        count = pyrng.randint(1, 12)
        frames = [codec.Raster(ftype, rng.integers(
            0, 256, size=ftype.nbytes, dtype=np.int64).astype(np.uint8)
            .tobytes()) for _ in range(count)]
        gop = pyrng.randint(1, count + 2)
        b = pyrng.random() < 0.5
        back = codec.decode_all(codec.encode_tvc(frames, (30, 1), gop, b))
        assert [f.data for f in back] == [f.data for f in frames], i

    # presentation <I,B,P> decodes in order <1,3,2> (frames 0,2,1)
    assert codec.gop_decode_order(3, True) == [
        (0, codec.KIND_I), (2, codec.KIND_P), (1, codec.KIND_B)]
    reader = codec.TvcReader(synth.make_synthetic_tvc(
        FrameType(8, 8, PixelFormat.GRAY8), 3, gop_size=3, b_frames=True))
    dec = codec.GopDecoder(reader, 0)
    emitted = []
    while not dec.done:
        emitted.append(dec.step()[0])
    assert emitted == [0, 2, 1]
    print("ACCEPTANCE 10 codec round-trip (1000 sequences) + "
          "<I,B,P> -> <1,3,2>: PASS")
