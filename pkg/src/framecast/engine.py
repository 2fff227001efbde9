"""Coordinated multi-worker rendering engine.

Output frame indices are called generations (gens).  Gens are planned in
order into an active window, bounded by both the prefetch window and the
decode pool capacity (the NeedSet, the union of source frames needed by
active gens, must always fit in the pool).  Decoder workers own one GOP at
a time, exposed as a shrinking FutureSet, and feed a shared decode pool
that doubles as a reservation area for the NeedSet and an optimal
(next-needed-generation) cache for everything else.  Filter workers
evaluate ready gens and an output reorder pool releases frames to the sink
strictly in order; a gen is Done only once the sink has consumed it.

The same scheduling core runs under two drivers: a deterministic
round-robin simulation (used by golden tests and counter-exact benches)
and a threaded driver where decoding and filtering overlap for real.
"""

from __future__ import annotations

import math
import threading
import time
from bisect import bisect_left
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

from .codec import GopDecoder, Raster, TvcReader
from .filters import REGISTRY, evaluate_expr
from .ir import VideoSpec, node_source_refs, type_check

INF = math.inf
_WAIT = 0.05  # condvar wait timeout; insurance against lost wakeups


class RenderError(Exception):
    def __init__(self, message: str, gen: Optional[int] = None):
        if gen is not None:
            message = f"gen {gen}: {message}"
        super().__init__(message)
        self.gen = gen


@dataclass
class EngineConfig:
    decode_workers: int = 1
    filter_workers: int = 1
    pool_capacity: int = 100
    prefetch_window: int = 80
    reorder_capacity: Optional[int] = None

    def __post_init__(self):
        if self.decode_workers < 1 or self.filter_workers < 1:
            raise ValueError("worker counts must be >= 1")
        if self.pool_capacity < 1 or self.prefetch_window < 1:
            raise ValueError("pool_capacity and prefetch_window must be >= 1")
        if self.reorder_capacity is None:
            self.reorder_capacity = self.prefetch_window
        if self.reorder_capacity < 1:
            raise ValueError("reorder_capacity must be >= 1")


@dataclass
class Counters:
    frames_decoded: int = 0
    frames_evaluated: int = 0
    evictions: int = 0
    unforced_drops: int = 0
    abandonments: int = 0
    stalls: int = 0
    gops_assigned: int = 0
    wall_ms: float = 0.0
    worker_busy_ms: dict = field(default_factory=dict)

    def add_busy(self, worker: str, seconds: float) -> None:
        self.worker_busy_ms[worker] = self.worker_busy_ms.get(worker, 0.0) + seconds * 1e3

    def to_json(self) -> dict:
        return {
            "frames_decoded": self.frames_decoded,
            "frames_evaluated": self.frames_evaluated,
            "evictions": self.evictions,
            "unforced_drops": self.unforced_drops,
            "abandonments": self.abandonments,
            "stalls": self.stalls,
            "gops_assigned": self.gops_assigned,
            "wall_ms": round(self.wall_ms, 3),
            "worker_busy_ms": {k: round(v, 3) for k, v in sorted(self.worker_busy_ms.items())},
        }


# ---------------------------------------------------------------------------
# Sinks
# ---------------------------------------------------------------------------

class CollectSink:
    """Accumulates output rasters in order."""

    def __init__(self):
        self.frames = []

    def write(self, gen: int, raster) -> None:
        self.frames.append(raster)

    def close(self) -> None:
        pass


class CallbackSink:
    def __init__(self, fn: Callable):
        self.fn = fn

    def write(self, gen: int, raster) -> None:
        self.fn(gen, raster)

    def close(self) -> None:
        pass


class TvcFileSink(CollectSink):
    """Encodes the ordered output stream into a TVC container on close."""

    def __init__(self, path: str, fps, gop_size: int = 30, b_frames: bool = False):
        super().__init__()
        self.path = path
        self.fps = fps
        self.gop_size = gop_size
        self.b_frames = b_frames

    def close(self) -> None:
        from .codec import encode_tvc
        data = encode_tvc(self.frames, self.fps, self.gop_size, self.b_frames)
        with open(self.path, "wb") as f:
            f.write(data)


# ---------------------------------------------------------------------------
# Scheduling core (single-owner state; drivers serialize access)
# ---------------------------------------------------------------------------

@dataclass
class DecoderSlot:
    index: int
    gop: Optional[tuple] = None  # (source_id, gop_ordinal)
    decoder: Optional[GopDecoder] = None
    future: set = field(default_factory=set)  # FrameIds left to decode
    stalled: bool = False

    def clear(self) -> None:
        self.gop = None
        self.decoder = None
        self.future = set()
        self.stalled = False


def need_set(active_gens, schedule) -> frozenset:
    """NeedSet: the union of source frames needed by the active gens."""
    return frozenset().union(*(schedule[g] for g in active_gens)) \
        if active_gens else frozenset()


class EngineCore:
    def __init__(self, spec: VideoSpec, sources: Mapping[str, TvcReader],
                 first: int, last: int, config: EngineConfig, sink,
                 counters: Optional[Counters] = None):
        if not 0 <= first <= last <= len(spec.frames):
            raise RenderError(f"render range [{first},{last}) outside spec "
                              f"of {len(spec.frames)} frames")
        self.spec = spec
        self.sources = sources
        self.first = first
        self.last = last
        self.config = config
        self.sink = sink
        self.counters = counters if counters is not None else Counters()

        # Only the requested window is analyzed: setup cost must not grow
        # with total spec length, or time-to-first-segment would too.
        memo: dict = {}
        self.schedule = {g: node_source_refs(spec.table, spec.frames[g], memo)
                         for g in range(first, last)}
        self._validate_sources()

        max_need = max((len(s) for s in self.schedule.values()), default=0)
        if max_need > config.pool_capacity:
            raise RenderError(
                f"pool_capacity {config.pool_capacity} is smaller than the "
                f"largest per-gen need set ({max_need} frames)")

        # uses[f]: sorted gens needing frame f; NextNeededGen is a bisect.
        self.uses: dict = {}
        for g in range(first, last):
            for f in self.schedule[g]:
                self.uses.setdefault(f, []).append(g)

        self.next_unplanned = first
        self.next_emit = first  # gens < next_emit are Done
        self.need_count: dict = {}  # frame -> active gens needing it
        self.pool: dict = {}
        self.reorder: dict = {}
        self.dispatched: set = set()
        self.slots = [DecoderSlot(i) for i in range(config.decode_workers)]
        self.failed: Optional[Exception] = None
        self.plan()

    def _validate_sources(self) -> None:
        for g, needs in self.schedule.items():
            for src, idx in needs:
                reader = self.sources.get(src)
                if reader is None:
                    raise RenderError(f"unknown source {src!r}", g)
                if idx >= reader.frame_count:
                    raise RenderError(
                        f"source {src!r} has {reader.frame_count} frames, "
                        f"expression reads frame {idx}", g)

    # -- generation lifecycle ------------------------------------------------

    @property
    def finished(self) -> bool:
        return self.next_emit >= self.last

    def active_count(self) -> int:
        return self.next_unplanned - self.next_emit

    def active_gens(self) -> range:
        return range(self.next_emit, self.next_unplanned)

    def plan(self) -> None:
        """Admit gens in order until the NeedSet would outgrow the pool or
        the active window is full; the lowest unplanned gen is always
        admitted when nothing is active."""
        while self.next_unplanned < self.last:
            if self.active_count() >= self.config.prefetch_window:
                break
            need = self.schedule[self.next_unplanned]
            new = sum(1 for f in need if f not in self.need_count)
            if self.active_count() > 0 and len(self.need_count) + new > self.config.pool_capacity:
                break
            for f in need:
                self.need_count[f] = self.need_count.get(f, 0) + 1
            self.next_unplanned += 1

    def next_needed_gen(self, frame) -> float:
        """Lowest not-Done gen whose schedule contains the frame, else inf."""
        gens = self.uses.get(frame)
        if not gens:
            return INF
        i = bisect_left(gens, self.next_emit)
        return gens[i] if i < len(gens) else INF

    # -- decode pool ---------------------------------------------------------

    def pool_insert(self, frame, plane_array, forced: bool) -> bool:
        """Offer a decoded frame (a plane byte array, possibly a view into a
        decoder batch buffer); it is copied into a Raster only on acceptance,
        so rejected offers cost nothing."""
        if frame in self.pool:
            return True
        nng = self.next_needed_gen(frame)
        if nng == INF:
            return False  # needed by no remaining gen
        if len(self.pool) >= self.config.pool_capacity:
            victim = max(self.pool, key=lambda f: (self.next_needed_gen(f), f))
            if not forced and self.next_needed_gen(victim) <= nng:
                return False
            del self.pool[victim]
            self.counters.evictions += 1
        self.pool[frame] = Raster(self.sources[frame[0]].frame_type,
                                  plane_array.tobytes())
        return True

    # -- decoder scheduling --------------------------------------------------

    def assign_slot(self, slot: DecoderSlot) -> bool:
        """Assign the GOP containing the soonest-needed uncovered frame."""
        covered = set().union(*(s.future for s in self.slots)) if self.slots else set()
        candidates = [f for f in self.need_count
                      if f not in self.pool and f not in covered]
        if not candidates:
            return False
        src, idx = min(candidates, key=lambda f: (self.next_needed_gen(f), f))
        reader = self.sources[src]
        ordinal = reader.gop_of_frame(idx)
        slot.gop = (src, ordinal)
        slot.decoder = GopDecoder(reader, ordinal)
        slot.future = {(src, i) for i in reader.gop_frames(ordinal)}
        slot.stalled = False
        self.counters.gops_assigned += 1
        return True

    def decoder_action(self, slot: DecoderSlot):
        """Decide the slot's next move.

        Returns ("decode", stop_indices) when a FutureSet frame is needed
        and missing; "finished" / "abandoned" (slot cleared as a side
        effect); or "stalled".
        """
        assert slot.gop is not None
        if not slot.future:
            slot.clear()
            return ("finished", None)
        targets = {f for f in slot.future
                   if f in self.need_count and f not in self.pool}
        if targets:
            slot.stalled = False
            return ("decode", {idx for (_, idx) in targets})
        # A slot's usefulness is the soonest gen its *not yet pooled* future
        # frames serve; pooled frames don't need this decoder again.
        def soonest(s):
            return min((self.next_needed_gen(f) for f in s.future
                        if f not in self.pool), default=INF)

        my_soonest = soonest(slot)
        if not slot.stalled:
            slot.stalled = True
            self.counters.stalls += 1
        covered = set().union(*(s.future for s in self.slots))
        more_critical = any(
            f not in self.pool and f not in covered
            and self.next_needed_gen(f) < my_soonest
            for f in self.need_count)
        least_needed = all(
            my_soonest >= soonest(s)
            for s in self.slots if s is not slot and s.gop is not None)
        if more_critical and least_needed:
            slot.clear()
            self.counters.abandonments += 1
            return ("abandoned", None)
        return ("stalled", None)

    def deliver(self, slot: DecoderSlot, decoded) -> None:
        """Insert a batch of decoded frames; NeedSet members force their way
        in, the rest are cache offers."""
        if slot.gop is None:
            return  # abandoned concurrently; frames are still cache offers
        src = slot.gop[0]
        for idx, planes in decoded:
            frame = (src, idx)
            slot.future.discard(frame)
            self.counters.frames_decoded += 1
            forced = frame in self.need_count
            if not self.pool_insert(frame, planes, forced) and not forced:
                self.counters.unforced_drops += 1

    # -- filter dispatch and ordered emission --------------------------------

    def take_ready_gen(self):
        """Lowest active gen whose need set is fully pooled and whose output
        can be buffered; returns (gen, inputs) and marks it in flight."""
        limit = min(self.next_unplanned, self.next_emit + self.config.reorder_capacity)
        for g in range(self.next_emit, limit):
            if g in self.dispatched:
                continue
            need = self.schedule[g]
            if all(f in self.pool for f in need):
                self.dispatched.add(g)
                return g, {f: self.pool[f] for f in need}
        return None

    def complete(self, gen: int, raster) -> None:
        self.counters.frames_evaluated += 1
        self.reorder[gen] = raster
        while self.next_emit in self.reorder:
            out = self.reorder.pop(self.next_emit)
            self.sink.write(self.next_emit, out)
            self._mark_done(self.next_emit)
        self.plan()

    def _mark_done(self, gen: int) -> None:
        for f in self.schedule[gen]:
            n = self.need_count[f] - 1
            if n:
                self.need_count[f] = n
            else:
                del self.need_count[f]
        self.next_emit = gen + 1


def _decode_until(decoder: GopDecoder, stop_indices) -> list:
    """Decode until one of stop_indices is produced."""
    return decoder.run_until(stop_indices)


def _evaluate_gen(core: EngineCore, gen: int, inputs) -> object:
    node_id = core.spec.frames[gen]

    def fetch(src, idx):
        return inputs[(src, idx)]

    try:
        return evaluate_expr(core.spec.table, node_id, fetch)
    except KeyError as e:
        raise RenderError(f"expression read unscheduled frame {e}", gen) from None


# ---------------------------------------------------------------------------
# Deterministic round-robin driver
# ---------------------------------------------------------------------------

def run_simulated(core: EngineCore) -> None:
    """Step decode and filter workers round-robin until done.

    Fully deterministic: counter values depend only on the spec, sources,
    and config.  A round with no progress anywhere means the scheduler is
    wedged, which the abandonment policy is supposed to prevent.
    """
    while not core.finished:
        progress = False
        for slot in core.slots:
            if slot.gop is None:
                progress |= core.assign_slot(slot)
                if slot.gop is None:
                    continue
            action, detail = core.decoder_action(slot)
            if action == "decode":
                core.deliver(slot, _decode_until(slot.decoder, detail))
                progress = True
            elif action in ("finished", "abandoned"):
                progress = True
        for _ in range(core.config.filter_workers):
            item = core.take_ready_gen()
            if item is None:
                break
            gen, inputs = item
            core.complete(gen, _evaluate_gen(core, gen, inputs))
            progress = True
        if not progress:
            raise RenderError(
                f"engine stalled: emitted {core.next_emit - core.first} of "
                f"{core.last - core.first} gens")


# ---------------------------------------------------------------------------
# Threaded driver
# ---------------------------------------------------------------------------

class _ThreadedDriver:
    def __init__(self, core: EngineCore):
        self.core = core
        self.cond = threading.Condition()

    def run(self) -> None:
        threads = [
            threading.Thread(target=self._decode_loop, args=(i,),
                             name=f"decode-{i}", daemon=True)
            for i in range(self.core.config.decode_workers)
        ] + [
            threading.Thread(target=self._filter_loop, args=(i,),
                             name=f"filter-{i}", daemon=True)
            for i in range(self.core.config.filter_workers)
        ]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        if self.core.failed is not None:
            raise self.core.failed

    def _fail(self, exc: Exception) -> None:
        with self.cond:
            if self.core.failed is None:
                self.core.failed = exc if isinstance(exc, RenderError) \
                    else RenderError(str(exc))
            self.cond.notify_all()

    def _decode_loop(self, i: int) -> None:
        core, cond = self.core, self.cond
        name = f"decode-{i}"
        try:
            while True:
                with cond:
                    decoder = None
                    while decoder is None:
                        if core.failed is not None or core.finished:
                            cond.notify_all()
                            return
                        slot = core.slots[i]
                        if slot.gop is None:
                            if not core.assign_slot(slot):
                                cond.wait(_WAIT)
                                continue
                            cond.notify_all()
                        action, detail = core.decoder_action(slot)
                        if action == "decode":
                            decoder, stop = slot.decoder, detail
                        elif action == "stalled":
                            cond.wait(_WAIT)
                        else:  # finished / abandoned
                            cond.notify_all()
                t0 = time.perf_counter()
                decoded = _decode_until(decoder, stop)
                core.counters.add_busy(name, time.perf_counter() - t0)
                with cond:
                    core.deliver(core.slots[i], decoded)
                    cond.notify_all()
        except Exception as e:  # codec errors propagate with context
            self._fail(e)

    def _filter_loop(self, i: int) -> None:
        core, cond = self.core, self.cond
        name = f"filter-{i}"
        try:
            while True:
                with cond:
                    item = None
                    while item is None:
                        if core.failed is not None or core.finished:
                            cond.notify_all()
                            return
                        item = core.take_ready_gen()
                        if item is None:
                            cond.wait(_WAIT)
                gen, inputs = item
                t0 = time.perf_counter()
                raster = _evaluate_gen(core, gen, inputs)
                core.counters.add_busy(name, time.perf_counter() - t0)
                with cond:
                    core.complete(gen, raster)
                    cond.notify_all()
        except Exception as e:
            self._fail(e)


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------

def open_sources(bindings: Mapping[str, object]) -> dict:
    """Normalize {source_id: TvcReader | bytes | path} into TvcReaders."""
    from .codec import FileSource
    readers = {}
    for src, obj in bindings.items():
        if isinstance(obj, TvcReader):
            readers[src] = obj
        elif isinstance(obj, (bytes, bytearray)):
            readers[src] = TvcReader(bytes(obj))
        else:
            readers[src] = TvcReader(FileSource(str(obj)))
    return readers


def _check_spec_types(spec: VideoSpec, sources: Mapping[str, TvcReader],
                      first: int, last: int) -> None:
    source_types = {src: r.frame_type for src, r in sources.items()}
    for g in range(first, last):
        nid = spec.frames[g]
        try:
            got = type_check(spec.table, nid, source_types, REGISTRY)
        except Exception as e:
            raise RenderError(f"type check failed: {e}", g) from e
        if got != spec.output_type:
            raise RenderError(
                f"frame type {got} != spec output type {spec.output_type}", g)


def render(spec: VideoSpec, sources: Mapping[str, object], sink,
           first: int = 0, last: Optional[int] = None,
           config: Optional[EngineConfig] = None,
           deterministic: bool = False,
           counters: Optional[Counters] = None) -> Counters:
    """Render spec frames [first, last) into the sink.

    Output bytes are a pure function of the spec and sources: identical for
    any worker counts, pool size (above the validated minimum), prefetch
    window, and scheduling interleavings.
    """
    if last is None:
        last = len(spec.frames)
    config = config or EngineConfig()
    readers = open_sources(sources)
    _check_spec_types(spec, readers, first, last)
    core = EngineCore(spec, readers, first, last, config, sink, counters)
    t0 = time.perf_counter()
    try:
        if deterministic or (config.decode_workers == 1 and config.filter_workers == 1):
            run_simulated(core)
        else:
            _ThreadedDriver(core).run()
    finally:
        sink.close()
    core.counters.wall_ms += (time.perf_counter() - t0) * 1e3
    return core.counters


def reference_render(spec: VideoSpec, sources: Mapping[str, object],
                     first: int = 0, last: Optional[int] = None) -> list:
    """Single-worker oracle: evaluate each frame expression in sequence,
    naively re-seeking and decoding each needed source frame from its GOP
    start.  No pooling, no concurrency."""
    from .codec import decode_frame_naive
    if last is None:
        last = len(spec.frames)
    readers = open_sources(sources)
    _check_spec_types(spec, readers, first, last)
    out = []
    for g in range(first, last):
        def fetch(src, idx):
            reader = readers.get(src)
            if reader is None:
                raise RenderError(f"unknown source {src!r}", g)
            return decode_frame_naive(reader, idx)

        out.append(evaluate_expr(spec.table, spec.frames[g], fetch))
    return out
