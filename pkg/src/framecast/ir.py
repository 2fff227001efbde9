"""Frame-expression IR: interned expression DAGs, frame types, type checking,
security policy checks, and schedule extraction.

A video spec is an append-only sequence of frame expressions, one per output
frame.  Expressions are stored flattened in an interned node table: inserting
a structurally identical node twice yields the same node id, and node-id
references always point at earlier table entries, so the DAG is stored in
topological order and cannot contain cycles.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field
from typing import Callable, Iterator, Mapping, Optional, Union

MAX_LIST_DEPTH = 8
_I64_MIN = -(2**63)
_I64_MAX = 2**63 - 1


class SpecError(Exception):
    """Base class for spec construction and validation errors."""


class NodeIdError(SpecError):
    """A node references an id that is not (yet) in the table."""


class SpecParseError(SpecError):
    """Spec bytes are malformed; carries the byte offset of the failure."""

    def __init__(self, message: str, offset: int = 0):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class SpecTerminatedError(SpecError):
    """Frames may not be appended to a terminated spec."""


class TypeCheckError(SpecError):
    def __init__(self, message: str, node_id: Optional[int] = None):
        if node_id is not None:
            message = f"node {node_id}: {message}"
        super().__init__(message)
        self.node_id = node_id


class UnknownFilter(TypeCheckError):
    pass


class UnknownSource(TypeCheckError):
    pass


class ArityMismatch(TypeCheckError):
    pass


class ArgKindMismatch(TypeCheckError):
    pass


class FrameTypeMismatch(TypeCheckError):
    pass


class PixelFormat(enum.Enum):
    GRAY8 = "gray8"
    RGB8 = "rgb8"
    BGR8 = "bgr8"
    YUV420P = "yuv420p"

    @property
    def interleaved(self) -> bool:
        return self in (PixelFormat.RGB8, PixelFormat.BGR8)

    def frame_bytes(self, width: int, height: int) -> int:
        if self is PixelFormat.GRAY8:
            return width * height
        if self in (PixelFormat.RGB8, PixelFormat.BGR8):
            return 3 * width * height
        # YUV420P: full-res Y plane plus two half-res chroma planes.
        return width * height + 2 * (width // 2) * (height // 2)


@dataclass(frozen=True)
class FrameType:
    width: int
    height: int
    pixfmt: PixelFormat

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"frame dimensions must be positive, got {self.width}x{self.height}")
        if self.pixfmt is PixelFormat.YUV420P and (self.width % 2 or self.height % 2):
            raise ValueError(f"yuv420p requires even dimensions, got {self.width}x{self.height}")

    @property
    def nbytes(self) -> int:
        return self.pixfmt.frame_bytes(self.width, self.height)

    def __str__(self) -> str:
        return f"<{self.width}x{self.height}, {self.pixfmt.value}>"


@dataclass(frozen=True)
class Value:
    """Immutable constant value: one of int, float, bool, str, intpair,
    color, or list (nested at most MAX_LIST_DEPTH deep)."""

    kind: str
    data: object

    def depth(self) -> int:
        if self.kind != "list":
            return 0
        return 1 + max((v.depth() for v in self.data), default=0)


def Int(n: int) -> Value:
    n = int(n)
    if not _I64_MIN <= n <= _I64_MAX:
        raise ValueError(f"int value out of 64-bit range: {n}")
    return Value("int", n)


def Float(x: float) -> Value:
    return Value("float", float(x))


def Bool(b: bool) -> Value:
    return Value("bool", bool(b))


def Str(s: str) -> Value:
    return Value("str", str(s))


def IntPair(a: int, b: int) -> Value:
    return Value("intpair", (int(a), int(b)))


def Color(c0: int, c1: int, c2: int) -> Value:
    """3-byte color; channel order matches the frame it is applied to."""
    channels = (int(c0), int(c1), int(c2))
    for c in channels:
        if not 0 <= c <= 255:
            raise ValueError(f"color channel out of range: {c}")
    return Value("color", channels)


def ValueList(items) -> Value:
    items = tuple(items)
    for v in items:
        if not isinstance(v, Value):
            raise TypeError("list values must contain Value instances")
    v = Value("list", items)
    if v.depth() > MAX_LIST_DEPTH:
        raise ValueError(f"value list nesting exceeds {MAX_LIST_DEPTH}")
    return v


def value_to_py(v: Value):
    """Unwrap a Value to the plain Python object filter functions take."""
    if v.kind == "list":
        return [value_to_py(x) for x in v.data]
    return v.data


@dataclass(frozen=True)
class SourceRef:
    source_id: str
    frame_index: int

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be non-negative, got {self.frame_index}")


@dataclass(frozen=True)
class FilterCall:
    name: str
    args: tuple  # each element a Value or an int node id


@dataclass(frozen=True)
class Const:
    value: Value


ExprNode = Union[SourceRef, FilterCall, Const]


class NodeTable:
    """Append-only interned store of expression nodes.

    Node ids are dense ints; children always precede parents.
    """

    def __init__(self):
        self._nodes: list[ExprNode] = []
        self._index: dict[ExprNode, int] = {}

    def __len__(self) -> int:
        return len(self._nodes)

    def intern(self, node: ExprNode) -> int:
        if isinstance(node, FilterCall):
            for a in node.args:
                if isinstance(a, int) and not 0 <= a < len(self._nodes):
                    raise NodeIdError(f"child node id {a} out of range (table size {len(self._nodes)})")
                if not isinstance(a, (int, Value)):
                    raise TypeError(f"filter arg must be Value or node id, got {type(a).__name__}")
        existing = self._index.get(node)
        if existing is not None:
            return existing
        nid = len(self._nodes)
        self._nodes.append(node)
        self._index[node] = nid
        return nid

    def node(self, node_id: int) -> ExprNode:
        if not 0 <= node_id < len(self._nodes):
            raise NodeIdError(f"node id {node_id} out of range")
        return self._nodes[node_id]

    def nodes(self) -> Iterator[ExprNode]:
        return iter(self._nodes)


@dataclass(frozen=True)
class SecurityPolicy:
    max_intermediate_width: int = 8192
    max_intermediate_height: int = 8192
    max_value_bytes: int = 1 << 20
    max_expr_depth: int = 64

    def __post_init__(self):
        for name in ("max_intermediate_width", "max_intermediate_height",
                     "max_value_bytes", "max_expr_depth"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class PolicyViolation:
    node_id: int
    limit: str  # "resolution" | "value_bytes" | "depth"
    detail: str


@dataclass
class VideoSpec:
    spec_id: str
    fps_num: int
    fps_den: int
    output_type: FrameType
    table: NodeTable = field(default_factory=NodeTable)
    frames: list[int] = field(default_factory=list)
    terminated: bool = False

    def __post_init__(self):
        if self.fps_num <= 0 or self.fps_den <= 0:
            raise ValueError("fps numerator and denominator must be positive")

    def append_frame(self, node_id: int) -> None:
        if self.terminated:
            raise SpecTerminatedError(f"spec {self.spec_id} is terminated")
        self.table.node(node_id)  # range check
        self.frames.append(node_id)

    def terminate(self) -> None:
        self.terminated = True


# ---------------------------------------------------------------------------
# Filter signatures and type checking
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FilterSignature:
    """Declared signature of a filter: ordered argument kinds plus a pure
    derivation from (frame types, constant args) to the output frame type.

    `derive` receives one resolved entry per argument: a FrameType for frame
    arguments and the unwrapped Python value for constants.  It raises
    FrameTypeMismatch for inputs the filter does not accept.
    """

    name: str
    param_kinds: tuple  # per-arg kind: "frame" or a Value kind string
    derive: Callable[[list], FrameType]


def type_check(table: NodeTable, node_id: int,
               sources: Mapping[str, FrameType],
               registry: Mapping[str, FilterSignature]) -> FrameType:
    """Return the FrameType of a frame-valued expression, or raise a
    TypeCheckError subclass describing the first failure."""
    memo: dict[int, object] = {}

    def describe(nid: int):
        # -> ("frame", FrameType) | ("value", kind, Value)
        if nid in memo:
            return memo[nid]
        node = table.node(nid)
        if isinstance(node, Const):
            desc = ("value", node.value.kind, node.value)
        elif isinstance(node, SourceRef):
            ftype = sources.get(node.source_id)
            if ftype is None:
                raise UnknownSource(f"unknown source {node.source_id!r}", nid)
            desc = ("frame", ftype)
        else:
            sig = registry.get(node.name)
            if sig is None:
                raise UnknownFilter(f"unknown filter {node.name!r}", nid)
            if len(node.args) != len(sig.param_kinds):
                raise ArityMismatch(
                    f"{node.name} expects {len(sig.param_kinds)} args, got {len(node.args)}", nid)
            resolved = []
            for i, (arg, want) in enumerate(zip(node.args, sig.param_kinds)):
                if isinstance(arg, Value):
                    got = ("value", arg.kind, arg)
                else:
                    got = describe(arg)
                if want == "frame":
                    if got[0] != "frame":
                        raise ArgKindMismatch(
                            f"{node.name} arg {i} must be a frame, got {got[1]}", nid)
                    resolved.append(got[1])
                else:
                    if got[0] != "value" or got[1] != want:
                        have = "frame" if got[0] == "frame" else got[1]
                        raise ArgKindMismatch(
                            f"{node.name} arg {i} must be {want}, got {have}", nid)
                    resolved.append(value_to_py(got[2]))
            try:
                desc = ("frame", sig.derive(resolved))
            except TypeCheckError as e:
                raise type(e)(str(e), nid) from None
        memo[nid] = desc
        return desc

    desc = describe(node_id)
    if desc[0] != "frame":
        raise ArgKindMismatch("expression root must be frame-valued", node_id)
    return desc[1]


def value_serialized_size(v: Value) -> int:
    """Size of a constant as stored on the wire (canonical JSON encoding)."""
    return len(json.dumps(value_to_json(v), separators=(",", ":")).encode())


def expr_depth(table: NodeTable, node_id: int) -> int:
    """Longest root-to-leaf path counting FilterCall nodes only."""
    memo: dict[int, int] = {}

    def depth(nid: int) -> int:
        if nid in memo:
            return memo[nid]
        node = table.node(nid)
        if isinstance(node, FilterCall):
            d = 1 + max((depth(a) for a in node.args if isinstance(a, int)), default=0)
        else:
            d = 0
        memo[nid] = d
        return d

    return depth(node_id)


def check_policy(table: NodeTable, node_id: int, policy: SecurityPolicy,
                 sources: Mapping[str, FrameType],
                 registry: Mapping[str, FilterSignature]) -> Optional[PolicyViolation]:
    """Return None if the (already type-checking) expression satisfies the
    policy, else the first violation found: intermediate resolutions within
    limits, every constant within the serialized-size limit, and filter
    nesting within the depth limit."""
    type_memo: dict[int, FrameType] = {}

    def frame_type_of(nid: int) -> Optional[FrameType]:
        if nid in type_memo:
            return type_memo[nid]
        try:
            ft = type_check(table, nid, sources, registry)
        except TypeCheckError:
            ft = None  # value-typed node
        type_memo[nid] = ft
        return ft

    def check_value(nid: int, v: Value) -> Optional[PolicyViolation]:
        size = value_serialized_size(v)
        if size > policy.max_value_bytes:
            return PolicyViolation(nid, "value_bytes",
                                   f"constant is {size} bytes, limit {policy.max_value_bytes}")
        return None

    seen: set[int] = set()

    def walk(nid: int) -> Optional[PolicyViolation]:
        if nid in seen:
            return None
        seen.add(nid)
        node = table.node(nid)
        if isinstance(node, Const):
            return check_value(nid, node.value)
        if isinstance(node, SourceRef):
            return None
        for arg in node.args:
            if isinstance(arg, Value):
                bad = check_value(nid, arg)
            else:
                bad = walk(arg)
            if bad is not None:
                return bad
        ft = frame_type_of(nid)
        if ft is not None and (ft.width > policy.max_intermediate_width
                               or ft.height > policy.max_intermediate_height):
            return PolicyViolation(
                nid, "resolution",
                f"intermediate frame {ft.width}x{ft.height} exceeds "
                f"{policy.max_intermediate_width}x{policy.max_intermediate_height}")
        return None

    bad = walk(node_id)
    if bad is not None:
        return bad
    depth = expr_depth(table, node_id)
    if depth > policy.max_expr_depth:
        return PolicyViolation(node_id, "depth",
                               f"expression depth {depth} exceeds {policy.max_expr_depth}")
    return None


# ---------------------------------------------------------------------------
# Schedule extraction
# ---------------------------------------------------------------------------

FrameId = tuple  # (source_id, frame_index)


def node_source_refs(table: NodeTable, node_id: int,
                     _memo: Optional[dict] = None) -> frozenset:
    """Set of (source_id, frame_index) pairs reachable from a node."""
    memo = _memo if _memo is not None else {}

    def refs(nid: int) -> frozenset:
        if nid in memo:
            return memo[nid]
        node = table.node(nid)
        if isinstance(node, SourceRef):
            r = frozenset([(node.source_id, node.frame_index)])
        elif isinstance(node, Const):
            r = frozenset()
        else:
            r = frozenset().union(*(refs(a) for a in node.args if isinstance(a, int))) \
                if any(isinstance(a, int) for a in node.args) else frozenset()
        memo[nid] = r
        return r

    return refs(node_id)


def extract_schedule(spec: VideoSpec) -> list:
    """Per output frame, the set of source frames its expression reads."""
    memo: dict[int, frozenset] = {}
    return [node_source_refs(spec.table, nid, memo) for nid in spec.frames]


# ---------------------------------------------------------------------------
# Canonical JSON serialization
# ---------------------------------------------------------------------------

def value_to_json(v: Value):
    if v.kind == "list":
        return {"type": "list", "v": [value_to_json(x) for x in v.data]}
    if v.kind in ("intpair", "color"):
        return {"type": v.kind, "v": list(v.data)}
    return {"type": v.kind, "v": v.data}


def value_from_json(obj) -> Value:
    if not isinstance(obj, dict) or "type" not in obj or "v" not in obj:
        raise SpecParseError(f"malformed value: {obj!r}")
    t, v = obj["type"], obj["v"]
    try:
        if t == "int":
            return Int(v)
        if t == "float":
            return Float(v)
        if t == "bool":
            if not isinstance(v, bool):
                raise ValueError("bool value must be a JSON boolean")
            return Bool(v)
        if t == "str":
            if not isinstance(v, str):
                raise ValueError("str value must be a JSON string")
            return Str(v)
        if t == "intpair":
            return IntPair(v[0], v[1])
        if t == "color":
            return Color(v[0], v[1], v[2])
        if t == "list":
            return ValueList([value_from_json(x) for x in v])
    except SpecParseError:
        raise
    except (TypeError, ValueError, IndexError, KeyError) as e:
        raise SpecParseError(f"bad {t} value: {e}") from None
    raise SpecParseError(f"unknown value type {t!r}")


def node_to_json(node: ExprNode):
    if isinstance(node, SourceRef):
        return {"kind": "source", "source": node.source_id, "frame": node.frame_index}
    if isinstance(node, Const):
        return {"kind": "const", "value": value_to_json(node.value)}
    args = []
    for a in node.args:
        if isinstance(a, int):
            args.append({"node": a})
        else:
            args.append(value_to_json(a))
    return {"kind": "filter", "name": node.name, "args": args}


def node_from_json(obj, id_map=None) -> ExprNode:
    """Parse one node; `id_map` remaps embedded node ids (for part wire
    payloads whose ids are local to the part)."""
    if not isinstance(obj, dict) or "kind" not in obj:
        raise SpecParseError(f"malformed node: {obj!r}")
    kind = obj["kind"]
    try:
        if kind == "source":
            return SourceRef(str(obj["source"]), int(obj["frame"]))
        if kind == "const":
            return Const(value_from_json(obj["value"]))
        if kind == "filter":
            args = []
            for a in obj["args"]:
                if isinstance(a, dict) and set(a) == {"node"}:
                    nid = int(a["node"])
                    args.append(id_map[nid] if id_map is not None else nid)
                else:
                    args.append(value_from_json(a))
            return FilterCall(str(obj["name"]), tuple(args))
    except SpecParseError:
        raise
    except (TypeError, ValueError, KeyError, IndexError) as e:
        raise SpecParseError(f"bad {kind} node: {e}") from None
    raise SpecParseError(f"unknown node kind {kind!r}")


def frame_type_to_json(ft: FrameType):
    return {"width": ft.width, "height": ft.height, "pixfmt": ft.pixfmt.value}


def frame_type_from_json(obj) -> FrameType:
    try:
        return FrameType(int(obj["width"]), int(obj["height"]), PixelFormat(obj["pixfmt"]))
    except (TypeError, ValueError, KeyError) as e:
        raise SpecParseError(f"bad frame type: {e}") from None


def serialize_spec(spec: VideoSpec) -> bytes:
    doc = {
        "format": "framecast-spec-v1",
        "spec_id": spec.spec_id,
        "fps": [spec.fps_num, spec.fps_den],
        "output_type": frame_type_to_json(spec.output_type),
        "terminated": spec.terminated,
        "nodes": [node_to_json(n) for n in spec.table.nodes()],
        "frames": list(spec.frames),
    }
    return json.dumps(doc, separators=(",", ":")).encode()


def deserialize_spec(data: bytes) -> VideoSpec:
    try:
        doc = json.loads(data.decode("utf-8"))
    except UnicodeDecodeError as e:
        raise SpecParseError("spec is not valid UTF-8", e.start) from None
    except json.JSONDecodeError as e:
        raise SpecParseError(f"invalid JSON: {e.msg}", e.pos) from None
    if not isinstance(doc, dict) or doc.get("format") != "framecast-spec-v1":
        raise SpecParseError("missing or unknown format marker")
    try:
        fps = doc["fps"]
        spec = VideoSpec(
            spec_id=str(doc["spec_id"]),
            fps_num=int(fps[0]),
            fps_den=int(fps[1]),
            output_type=frame_type_from_json(doc["output_type"]),
        )
        nodes = doc["nodes"]
        frames = doc["frames"]
    except (TypeError, ValueError, KeyError, IndexError) as e:
        raise SpecParseError(f"bad spec document: {e}") from None
    # Re-intern: ids may collapse if the input was not fully deduplicated.
    id_map: dict[int, int] = {}
    for old_id, obj in enumerate(nodes):
        node = node_from_json(obj, id_map)
        try:
            id_map[old_id] = spec.table.intern(node)
        except NodeIdError as e:
            raise SpecParseError(str(e)) from None
    for f in frames:
        try:
            spec.frames.append(id_map[int(f)])
        except (KeyError, TypeError, ValueError):
            raise SpecParseError(f"frame references unknown node {f!r}") from None
    spec.terminated = bool(doc.get("terminated", False))
    return spec


def serialize_part(table: NodeTable, frame_ids: list) -> dict:
    """Wire form of a batch of frame expressions: the reachable nodes with
    part-local ids plus the frame roots, in the canonical JSON node form."""
    order: list[int] = []
    seen: set[int] = set()

    def visit(nid: int):
        if nid in seen:
            return
        seen.add(nid)
        node = table.node(nid)
        if isinstance(node, FilterCall):
            for a in node.args:
                if isinstance(a, int):
                    visit(a)
        order.append(nid)

    for f in frame_ids:
        visit(f)
    local = {nid: i for i, nid in enumerate(order)}
    nodes = []
    for nid in order:
        node = table.node(nid)
        if isinstance(node, FilterCall):
            node = FilterCall(node.name, tuple(
                local[a] if isinstance(a, int) else a for a in node.args))
        nodes.append(node_to_json(node))
    return {"nodes": nodes, "frames": [local[f] for f in frame_ids]}


def intern_part(table: NodeTable, part: dict) -> list:
    """Intern a wire part into `table`; returns the frame root node ids."""
    try:
        nodes = part["nodes"]
        frames = part["frames"]
    except (TypeError, KeyError):
        raise SpecParseError("part must contain 'nodes' and 'frames'") from None
    id_map: dict[int, int] = {}
    for old_id, obj in enumerate(nodes):
        try:
            id_map[old_id] = table.intern(node_from_json(obj, id_map))
        except NodeIdError as e:
            raise SpecParseError(str(e)) from None
    try:
        return [id_map[int(f)] for f in frames]
    except (KeyError, TypeError, ValueError):
        raise SpecParseError("part frame references unknown node") from None
