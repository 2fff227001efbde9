"""Expression table, type checking, policy, and canonical JSON."""

import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from framecast.filters import REGISTRY
from framecast.ir import (ArgKindMismatch, ArityMismatch, Bool, Color, Const,
                          FilterCall, Float, FrameType, FrameTypeMismatch,
                          Int, IntPair, NodeIdError, NodeTable, PixelFormat,
                          SecurityPolicy, SourceRef, SpecParseError,
                          SpecTerminatedError, Str, UnknownFilter,
                          UnknownSource, Value, ValueList, VideoSpec,
                          check_policy, deserialize_spec, expr_depth,
                          extract_schedule, intern_part, node_source_refs,
                          serialize_part, serialize_spec, type_check,
                          value_serialized_size, value_to_py)

GRAY = FrameType(64, 64, PixelFormat.GRAY8)
RGB = FrameType(64, 64, PixelFormat.RGB8)
SOURCES = {"a": GRAY, "rgb": RGB}


def _simple_spec(n_frames=4):
    spec = VideoSpec("t", 30, 1, GRAY)
    for f in range(n_frames):
        spec.append_frame(spec.table.intern(SourceRef("a", f)))
    return spec


# ---------------------------------------------------------------------------
# Frame types and values
# ---------------------------------------------------------------------------

def test_frame_type_validation():
    with pytest.raises(ValueError):
        FrameType(0, 10, PixelFormat.GRAY8)
    with pytest.raises(ValueError):
        FrameType(10, -1, PixelFormat.RGB8)
    with pytest.raises(ValueError):
        FrameType(63, 64, PixelFormat.YUV420P)
    assert FrameType(64, 64, PixelFormat.YUV420P).nbytes == 64 * 64 * 3 // 2
    assert GRAY.nbytes == 64 * 64
    assert RGB.nbytes == 64 * 64 * 3


def test_value_factories():
    assert value_to_py(Int(7)) == 7
    assert value_to_py(Float(1.5)) == 1.5
    assert value_to_py(Bool(True)) is True
    assert value_to_py(Str("hi")) == "hi"
    assert value_to_py(IntPair(3, 4)) == (3, 4)
    assert value_to_py(Color(1, 2, 3)) == (1, 2, 3)
    assert value_to_py(ValueList([Int(1), Str("x")])) == [1, "x"]
    with pytest.raises(ValueError):
        Int(2**63)
    with pytest.raises(ValueError):
        Color(0, 256, 0)
    with pytest.raises(ValueError):
        Color(-1, 0, 0)


def test_value_list_depth_limit():
    v = Int(0)
    for _ in range(8):
        v = ValueList([v])
    assert v.depth() == 8
    with pytest.raises(ValueError):
        ValueList([v])


# ---------------------------------------------------------------------------
# Node table
# ---------------------------------------------------------------------------

def test_interning_dedupes_structurally_equal_nodes():
    t = NodeTable()
    a = t.intern(SourceRef("a", 0))
    b = t.intern(SourceRef("a", 0))
    c = t.intern(SourceRef("a", 1))
    assert a == b != c
    assert len(t) == 2
    f1 = t.intern(FilterCall("draw_rectangle", (a, Int(1))))
    f2 = t.intern(FilterCall("draw_rectangle", (b, Int(1))))
    assert f1 == f2


def test_children_must_precede_parents():
    t = NodeTable()
    with pytest.raises(NodeIdError):
        t.intern(FilterCall("solid", (5,)))
    nid = t.intern(SourceRef("a", 0))
    t.intern(FilterCall("f", (nid,)))  # in range: fine
    with pytest.raises(NodeIdError):
        t.intern(FilterCall("f", (-1,)))


def test_node_lookup_range():
    t = NodeTable()
    t.intern(Const(Int(1)))
    with pytest.raises(NodeIdError):
        t.node(1)
    with pytest.raises(NodeIdError):
        t.node(-1)


def test_source_ref_rejects_negative_index():
    with pytest.raises(ValueError):
        SourceRef("a", -1)


# ---------------------------------------------------------------------------
# VideoSpec
# ---------------------------------------------------------------------------

def test_spec_append_and_terminate():
    spec = _simple_spec(2)
    assert len(spec.frames) == 2
    spec.terminate()
    with pytest.raises(SpecTerminatedError):
        spec.append_frame(spec.frames[0])


def test_spec_append_validates_node_id():
    spec = VideoSpec("t", 30, 1, GRAY)
    with pytest.raises(NodeIdError):
        spec.append_frame(0)


def test_spec_fps_positive():
    with pytest.raises(ValueError):
        VideoSpec("t", 0, 1, GRAY)
    with pytest.raises(ValueError):
        VideoSpec("t", 30, -1, GRAY)


# ---------------------------------------------------------------------------
# Type checking
# ---------------------------------------------------------------------------

def _rect(t, child):
    return t.intern(FilterCall("draw_rectangle", (
        child, t.intern(Const(IntPair(0, 0))), t.intern(Const(IntPair(9, 9))),
        t.intern(Const(Color(1, 2, 3))), t.intern(Const(Int(1))))))


def test_type_check_source_and_filter():
    t = NodeTable()
    s = t.intern(SourceRef("a", 0))
    assert type_check(t, s, SOURCES, REGISTRY) == GRAY
    assert type_check(t, _rect(t, s), SOURCES, REGISTRY) == GRAY


def test_type_check_unknown_source():
    t = NodeTable()
    s = t.intern(SourceRef("nope", 0))
    with pytest.raises(UnknownSource):
        type_check(t, s, SOURCES, REGISTRY)


def test_type_check_unknown_filter():
    t = NodeTable()
    s = t.intern(SourceRef("a", 0))
    n = t.intern(FilterCall("gaussian_blur", (s,)))
    with pytest.raises(UnknownFilter):
        type_check(t, n, SOURCES, REGISTRY)


def test_type_check_arity():
    t = NodeTable()
    s = t.intern(SourceRef("a", 0))
    n = t.intern(FilterCall("crop", (s, t.intern(Const(Int(0))))))
    with pytest.raises(ArityMismatch):
        type_check(t, n, SOURCES, REGISTRY)


def test_type_check_arg_kind():
    t = NodeTable()
    s = t.intern(SourceRef("a", 0))
    # color argument given an int
    n = t.intern(FilterCall("draw_rectangle", (
        s, t.intern(Const(IntPair(0, 0))), t.intern(Const(IntPair(9, 9))),
        t.intern(Const(Int(255))), t.intern(Const(Int(1))))))
    with pytest.raises(ArgKindMismatch):
        type_check(t, n, SOURCES, REGISTRY)


def test_type_check_frame_passed_where_const_expected():
    t = NodeTable()
    s = t.intern(SourceRef("a", 0))
    n = t.intern(FilterCall("crop", (s, s, s, s, s)))
    with pytest.raises(ArgKindMismatch):
        type_check(t, n, SOURCES, REGISTRY)


def test_type_check_frame_type_mismatch():
    t = NodeTable()
    a = t.intern(SourceRef("a", 0))     # gray8
    r = t.intern(SourceRef("rgb", 0))   # rgb8
    n = t.intern(FilterCall("hstack", (a, r)))
    with pytest.raises(FrameTypeMismatch):
        type_check(t, n, SOURCES, REGISTRY)


def test_type_check_derives_new_geometry():
    t = NodeTable()
    s = t.intern(SourceRef("a", 0))
    c = t.intern(FilterCall("crop", (
        s, t.intern(Const(Int(4))), t.intern(Const(Int(8))),
        t.intern(Const(Int(20))), t.intern(Const(Int(10))))))
    assert type_check(t, c, SOURCES, REGISTRY) == FrameType(
        20, 10, PixelFormat.GRAY8)
    st_ = t.intern(FilterCall("vstack", (c, c)))
    assert type_check(t, st_, SOURCES, REGISTRY) == FrameType(
        20, 20, PixelFormat.GRAY8)


def test_type_check_reports_failing_node_id():
    t = NodeTable()
    s = t.intern(SourceRef("nope", 0))
    n = _rect(t, s)
    with pytest.raises(UnknownSource) as ei:
        type_check(t, n, SOURCES, REGISTRY)
    assert ei.value.node_id == s


# ---------------------------------------------------------------------------
# Policy
# ---------------------------------------------------------------------------

def _policy(**kw):
    base = dict(max_intermediate_width=8192, max_intermediate_height=8192,
                max_value_bytes=1 << 20, max_expr_depth=64)
    base.update(kw)
    return SecurityPolicy(**base)


def test_policy_resolution_limit_counts_intermediates():
    t = NodeTable()
    s = t.intern(SourceRef("a", 0))
    big = t.intern(FilterCall("scale_nearest", (
        s, t.intern(Const(Int(500))), t.intern(Const(Int(500))))))
    back = t.intern(FilterCall("scale_nearest", (
        big, t.intern(Const(Int(64))), t.intern(Const(Int(64))))))
    v = check_policy(t, back, _policy(max_intermediate_width=256), SOURCES, REGISTRY)
    assert v is not None and v.limit == "resolution" and v.node_id == big
    assert check_policy(t, back, _policy(), SOURCES, REGISTRY) is None


def test_policy_value_bytes_uses_canonical_json_size():
    big = Str("x" * 100)
    assert value_serialized_size(big) == len(
        json.dumps({"type": "str", "v": "x" * 100}, separators=(",", ":")))
    t = NodeTable()
    s = t.intern(SourceRef("a", 0))
    n = t.intern(FilterCall("draw_text", (
        s, t.intern(Const(big)), t.intern(Const(IntPair(0, 0))),
        t.intern(Const(Int(1))), t.intern(Const(Color(0, 0, 0))))))
    v = check_policy(t, n, _policy(max_value_bytes=50), SOURCES, REGISTRY)
    assert v is not None and v.limit == "value_bytes"
    assert check_policy(t, n, _policy(), SOURCES, REGISTRY) is None


def test_policy_depth_counts_filter_calls_only():
    t = NodeTable()
    node = t.intern(SourceRef("a", 0))
    assert expr_depth(t, node) == 0
    for _ in range(3):
        node = _rect(t, node)
    assert expr_depth(t, node) == 3
    v = check_policy(t, node, _policy(max_expr_depth=2), SOURCES, REGISTRY)
    assert v is not None and v.limit == "depth"
    assert check_policy(t, node, _policy(max_expr_depth=3), SOURCES, REGISTRY) is None


def test_policy_rejects_nonpositive_limits():
    with pytest.raises(ValueError):
        SecurityPolicy(max_expr_depth=0)


# ---------------------------------------------------------------------------
# Schedule extraction
# ---------------------------------------------------------------------------

def test_schedule_lists_reachable_source_frames():
    spec = VideoSpec("t", 30, 1, GRAY)
    t = spec.table
    a0 = t.intern(SourceRef("a", 0))
    a5 = t.intern(SourceRef("a", 5))
    half = t.intern(FilterCall("crop", (
        a5, t.intern(Const(Int(0))), t.intern(Const(Int(0))),
        t.intern(Const(Int(64))), t.intern(Const(Int(32))))))
    half0 = t.intern(FilterCall("crop", (
        a0, t.intern(Const(Int(0))), t.intern(Const(Int(0))),
        t.intern(Const(Int(64))), t.intern(Const(Int(32))))))
    spec.append_frame(t.intern(FilterCall("vstack", (half0, half))))
    spec.append_frame(a0)
    assert extract_schedule(spec) == [
        frozenset({("a", 0), ("a", 5)}), frozenset({("a", 0)})]
    assert node_source_refs(t, half) == frozenset({("a", 5)})


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------

def _chain_spec():
    spec = VideoSpec("round", 24, 1, GRAY)
    t = spec.table
    node = t.intern(SourceRef("a", 3))
    node = _rect(t, node)
    spec.append_frame(node)
    spec.append_frame(t.intern(SourceRef("a", 0)))
    spec.terminate()
    return spec


def test_spec_json_round_trip():
    spec = _chain_spec()
    blob = serialize_spec(spec)
    back = deserialize_spec(blob)
    assert back.spec_id == spec.spec_id
    assert (back.fps_num, back.fps_den) == (24, 1)
    assert back.output_type == spec.output_type
    assert back.terminated
    assert extract_schedule(back) == extract_schedule(spec)
    # Round-tripping again is byte-stable.
    assert serialize_spec(back) == blob


def test_spec_json_is_versioned():
    doc = json.loads(serialize_spec(_chain_spec()))
    assert doc["format"] == "framecast-spec-v1"
    doc["format"] = "framecast-spec-v2"
    with pytest.raises(SpecParseError):
        deserialize_spec(json.dumps(doc).encode())


@pytest.mark.parametrize("mutate", [
    lambda d: d.pop("frames"),
    lambda d: d["nodes"].__setitem__(0, {"kind": "wat"}),
    lambda d: d["frames"].append(10**6),
    lambda d: d.__setitem__("fps", [30]),
])
def test_spec_json_rejects_malformed_documents(mutate):
    doc = json.loads(serialize_spec(_chain_spec()))
    mutate(doc)
    with pytest.raises(SpecParseError):
        deserialize_spec(json.dumps(doc).encode())


def test_spec_json_rejects_garbage_bytes():
    with pytest.raises(SpecParseError):
        deserialize_spec(b"\xff\xfe not json")
    with pytest.raises(SpecParseError):
        deserialize_spec(b"{not json}")


def test_part_round_trip_remaps_node_ids():
    spec = _chain_spec()
    part = serialize_part(spec.table, list(spec.frames))
    # Interning into a table that already holds other nodes must remap ids.
    dest = VideoSpec("dest", 24, 1, GRAY)
    dest.table.intern(SourceRef("padding", 9))
    roots = intern_part(dest.table, part)
    assert len(roots) == 2
    for nid in roots:
        dest.append_frame(nid)
    assert extract_schedule(dest) == extract_schedule(spec)


def test_part_wire_form_is_json_serializable():
    spec = _chain_spec()
    part = serialize_part(spec.table, list(spec.frames))
    json.dumps(part)  # must not raise
    assert set(part) == {"nodes", "frames"}


def test_intern_part_rejects_bad_parts():
    t = NodeTable()
    with pytest.raises(SpecParseError):
        intern_part(t, {"nodes": []})
    with pytest.raises(SpecParseError):
        intern_part(t, {"nodes": [{"kind": "source"}], "frames": [0]})
    with pytest.raises(SpecParseError):
        intern_part(t, {"nodes": [], "frames": [0]})


# ---------------------------------------------------------------------------
# Properties
# ---------------------------------------------------------------------------

_value = st.deferred(lambda: st.one_of(
    st.integers(-2**63, 2**63 - 1).map(Int),
    st.floats(allow_nan=False, allow_infinity=False).map(Float),
    st.booleans().map(Bool),
    st.text(max_size=20).map(Str),
    st.tuples(st.integers(-1000, 1000), st.integers(-1000, 1000)).map(
        lambda p: IntPair(*p)),
    st.tuples(*[st.integers(0, 255)] * 3).map(lambda c: Color(*c)),
    st.lists(_value, max_size=3).map(ValueList),
))


@settings(max_examples=200, deadline=None)
@given(_value)
def test_value_json_round_trip(v):
    from framecast.ir import value_from_json, value_to_json
    assert value_from_json(value_to_json(v)) == v


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_interning_is_idempotent_and_append_only(data):
    t = NodeTable()
    ids = []
    for _ in range(data.draw(st.integers(1, 30))):
        kind = data.draw(st.sampled_from(["src", "const", "call"]))
        if kind == "src":
            node = SourceRef(data.draw(st.sampled_from("ab")),
                             data.draw(st.integers(0, 3)))
        elif kind == "const":
            node = Const(Int(data.draw(st.integers(0, 5))))
        else:
            args = tuple(data.draw(st.sampled_from(ids))
                         for _ in range(data.draw(st.integers(1, 3)))) if ids else ()
            if not args:
                node = Const(Int(0))
            else:
                node = FilterCall(data.draw(st.sampled_from(["f", "g"])), args)
        before = len(t)
        nid = t.intern(node)
        assert t.intern(node) == nid  # idempotent
        assert len(t) in (before, before + 1)
        assert t.node(nid) == node
        ids.append(nid)
    # ids are dense and stable
    assert sorted(set(ids)) == list(range(len(t)))
