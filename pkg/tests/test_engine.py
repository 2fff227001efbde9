"""Scheduling engine: parity with the naive oracle, Belady eviction,
decode amplification, determinism, and failure modes."""

import random

import pytest

from specgen import (access_order, random_spec, stride_decode_oracle,
                     Builder)
from framecast import codec, synth
from framecast.engine import (CollectSink, Counters, EngineConfig,
                              RenderError, render, reference_render)
from framecast.ir import (Color, Const, FilterCall, FrameType, Int, IntPair,
                          PixelFormat, SourceRef, VideoSpec)

GRAY = FrameType(64, 64, PixelFormat.GRAY8)


def make_reader(count=120, gop=30, b=True, seed=0, ftype=GRAY):
    return codec.TvcReader(synth.make_synthetic_tvc(
        ftype, count, gop_size=gop, b_frames=b, seed=seed))


def spec_over(order, annotate=True):
    spec = VideoSpec("t", 30, 1, GRAY)
    b = Builder(spec)
    for f in order:
        node = b.src("in", f)
        if annotate:
            node = b.call("draw_rectangle", node,
                          b.const(IntPair(2, 2)), b.const(IntPair(60, 60)),
                          b.const(Color(255, 255, 255)), b.const(Int(1)))
        spec.frames.append(node)
    spec.terminate()
    return spec


def collect(spec, sources, **kw):
    sink = CollectSink()
    counters = render(spec, sources, sink, **kw)
    return sink.frames, counters


# ---------------------------------------------------------------------------
# Oracle parity
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("pattern", ["sequential", "reverse", "shuffle", "stride"])
@pytest.mark.parametrize("workers", [(1, 1), (4, 4)])
def test_parity_access_patterns(pattern, workers):
    rng = random.Random(hash(pattern) % 1000)
    reader = make_reader()
    order = access_order(pattern, 120, rng)
    spec = spec_over(order)
    got, _ = collect(spec, {"in": reader},
                     config=EngineConfig(*workers, 60, 40))
    ref = reference_render(spec, {"in": reader})
    assert [f.data for f in got] == [f.data for f in ref]


def test_parity_randomized_specs_small():
    for seed in range(6):
        rng = random.Random(1000 + seed)
        spec, sources = random_spec(rng, frame_count=80)
        ref = reference_render(spec, sources)
        for workers in ((1, 1), (4, 4)):
            got, _ = collect(spec, sources,
                             config=EngineConfig(*workers, 60, 40))
            assert [f.data for f in got] == [f.data for f in ref], \
                (seed, workers)


def test_render_window_matches_full_render():
    reader = make_reader()
    spec = spec_over(range(120))
    full = reference_render(spec, {"in": reader})
    got, _ = collect(spec, {"in": reader}, first=35, last=70)
    assert [f.data for f in got] == [f.data for f in full[35:70]]


def test_deterministic_driver_equals_threaded_output():
    reader = make_reader()
    spec = spec_over(access_order("shuffle", 120, random.Random(5)))
    sim, _ = collect(spec, {"in": reader}, deterministic=True,
                     config=EngineConfig(4, 4, 60, 40))
    thr, _ = collect(spec, {"in": reader}, deterministic=False,
                     config=EngineConfig(4, 4, 60, 40))
    assert [f.data for f in sim] == [f.data for f in thr]


# ---------------------------------------------------------------------------
# Counters and determinism
# ---------------------------------------------------------------------------

def test_sequential_decode_counts_are_exact():
    reader = make_reader()
    spec = spec_over(range(120))
    _, c = collect(spec, {"in": reader}, deterministic=True)
    assert c.frames_evaluated == 120
    assert c.frames_decoded == 120  # every source frame used exactly once
    assert c.unforced_drops == 0


def test_single_worker_counters_are_reproducible():
    reader = make_reader()
    spec = spec_over(access_order("shuffle", 120, random.Random(9)))
    runs = [collect(spec, {"in": reader}, deterministic=True,
                    config=EngineConfig(1, 1, 40, 30))[1] for _ in range(3)]
    assert len({(c.frames_decoded, c.evictions, c.abandonments,
                 c.stalls, c.gops_assigned) for c in runs}) == 1


def test_counters_json_shape():
    reader = make_reader()
    _, c = collect(spec_over(range(30)), {"in": reader})
    d = c.to_json()
    for key in ("frames_decoded", "frames_evaluated", "evictions",
                "unforced_drops", "abandonments", "stalls", "gops_assigned",
                "wall_ms", "worker_busy_ms"):
        assert key in d


# ---------------------------------------------------------------------------
# Belady eviction
# ---------------------------------------------------------------------------

def test_reversed_access_with_ample_pool_decodes_each_frame_once():
    # pool >= 2 x gop: every decoded frame survives until its (only) use.
    reader = make_reader(count=240, gop=30, b=False)
    spec = spec_over(range(239, -1, -1), annotate=False)
    _, c = collect(spec, {"in": reader}, deterministic=True,
                   config=EngineConfig(1, 1, 60, 40))
    assert c.frames_decoded == 240


def test_shuffled_pool_sweep_is_monotone_small():
    reader = make_reader(count=120, gop=30, b=False)
    spec = spec_over(access_order("shuffle", 120, random.Random(3)),
                     annotate=False)
    decoded = []
    for pool in (10, 30, 60, 90):
        _, c = collect(spec, {"in": reader}, deterministic=True,
                       config=EngineConfig(1, 1, pool, 40))
        decoded.append(c.frames_decoded)
    assert decoded == sorted(decoded, reverse=True)


def test_tiny_pool_still_renders_correctly():
    reader = make_reader(count=60, gop=30, b=True)
    spec = spec_over(access_order("shuffle", 60, random.Random(11)))
    got, c = collect(spec, {"in": reader}, deterministic=True,
                     config=EngineConfig(1, 1, 4, 3))
    ref = reference_render(spec, {"in": reader})
    assert [f.data for f in got] == [f.data for f in ref]
    assert c.evictions > 0


# ---------------------------------------------------------------------------
# Decode amplification
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("b_frames", [False, True])
@pytest.mark.parametrize("stride", [30, 47, 64])
def test_stride_decode_amplification_matches_oracle(stride, b_frames):
    reader = make_reader(count=600, gop=30, b=b_frames)
    targets = list(range(0, 600, stride))
    spec = spec_over(targets, annotate=False)
    _, c = collect(spec, {"in": reader}, deterministic=True,
                   config=EngineConfig(1, 1, 100, 80))
    assert c.frames_decoded == stride_decode_oracle(reader, targets)


def test_decode_order_prefix_oracle_value():
    # b-frame GOP of 30: presentation 1 is stored third (<I,P,B> order),
    # so requesting frame 1 alone decodes exactly 3 records.
    reader = make_reader(count=30, gop=30, b=True)
    spec = spec_over([1], annotate=False)
    _, c = collect(spec, {"in": reader}, deterministic=True)
    assert c.frames_decoded == 3
    assert stride_decode_oracle(reader, [1]) == 3


# ---------------------------------------------------------------------------
# Failure modes
# ---------------------------------------------------------------------------

def test_unknown_source_fails_fast():
    spec = spec_over(range(10))
    with pytest.raises(RenderError):
        render(spec, {"other": make_reader()}, CollectSink())


def test_frame_index_beyond_source_fails_fast():
    spec = spec_over([0, 500])
    with pytest.raises(RenderError):
        render(spec, {"in": make_reader(count=120)}, CollectSink())


def test_output_type_mismatch_fails_fast():
    spec = VideoSpec("t", 30, 1, FrameType(32, 32, PixelFormat.GRAY8))
    spec.append_frame(spec.table.intern(SourceRef("in", 0)))  # 64x64 source
    with pytest.raises(RenderError):
        render(spec, {"in": make_reader()}, CollectSink())


def test_empty_window_renders_nothing():
    spec = spec_over(range(10))
    frames, c = collect(spec, {"in": make_reader()}, first=4, last=4)
    assert frames == [] and c.frames_evaluated == 0


def test_abandonment_counter_can_fire():
    # Shuffled access over many GOPs with a single decoder forces mid-GOP
    # reassignment: the decoder abandons a GOP when a more urgent frame is
    # uncovered.
    reader = make_reader(count=300, gop=30, b=False, seed=2)
    spec = spec_over(access_order("shuffle", 300, random.Random(7)),
                     annotate=False)
    _, c = collect(spec, {"in": reader}, deterministic=True,
                   config=EngineConfig(1, 1, 40, 30))
    assert c.abandonments > 0
