"""Operator command line: render, serve, make-synthetic, probe, bench.

`render` consumes a canonical JSON spec file plus a directory of TVC
sources named `<source_id>.tvc` and writes a TVC output container.
`bench` reruns the desk-scale scheduling experiments (thread scaling,
decode-pool sweep, sparse stride access) over synthetic fixtures and
emits CSV with a fixed header row.

Exit codes: 0 success, 1 failure (invalid config reports the offending
line number), 2 missing source (message names the source_id).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import random
import sys
import time

from . import codec, synth
from .engine import (CollectSink, EngineConfig, TvcFileSink, render,
                     RenderError)
from .ir import (Color, Const, FilterCall, FrameType, Int, IntPair,
                 PixelFormat, SourceRef, SpecParseError, VideoSpec,
                 deserialize_spec, extract_schedule)
from .server import ConfigError, ServerConfig, load_config, serve

CSV_HEADER = ["param", "wall_ms", "frames_decoded", "evictions", "abandonments"]


def _engine_config(args) -> EngineConfig:
    decoders = args.decoders if args.decoders is not None else args.threads
    filters = args.filters if args.filters is not None else args.threads
    return EngineConfig(decode_workers=decoders, filter_workers=filters,
                        pool_capacity=args.pool, prefetch_window=args.window)


def _add_engine_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--threads", type=int, default=4,
                   help="worker count for both decode and filter stages")
    p.add_argument("--decoders", type=int, default=None,
                   help="decode worker count (overrides --threads)")
    p.add_argument("--filters", type=int, default=None,
                   help="filter worker count (overrides --threads)")
    p.add_argument("--pool", type=int, default=100, help="decode pool capacity")
    p.add_argument("--window", type=int, default=80, help="prefetch window")


def cmd_render(args) -> int:
    try:
        with open(args.spec, "rb") as f:
            spec = deserialize_spec(f.read())
    except (OSError, SpecParseError) as e:
        print(f"error: cannot load spec {args.spec!r}: {e}", file=sys.stderr)
        return 1
    source_ids = sorted({src for frame in extract_schedule(spec)
                         for src, _ in frame})
    sources = {}
    for src in source_ids:
        path = os.path.join(args.sources, f"{src}.tvc")
        if not os.path.exists(path):
            print(f"error: missing source {src!r}: no file at {path}",
                  file=sys.stderr)
            return 2
        sources[src] = path
    sink = TvcFileSink(args.out, (spec.fps_num, spec.fps_den),
                       gop_size=args.gop, b_frames=args.b_frames)
    try:
        counters = render(spec, sources, sink, config=_engine_config(args))
    except (RenderError, codec.CodecError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    if args.stats:
        print(json.dumps(counters.to_json(), indent=2))
    return 0


def cmd_make_synthetic(args) -> int:
    try:
        ftype = FrameType(args.width, args.height, PixelFormat(args.pixfmt))
        data = synth.make_synthetic_tvc(ftype, args.frames,
                                        gop_size=args.gop,
                                        b_frames=args.b_frames,
                                        seed=args.seed)
    except (ValueError, codec.CodecError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    with open(args.out, "wb") as f:
        f.write(data)
    return 0


def cmd_probe(args) -> int:
    try:
        info = codec.probe(codec.FileSource(args.path))
    except (OSError, codec.CodecError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    print(json.dumps(info, indent=2))
    return 0


def cmd_serve(args) -> int:
    try:
        config = load_config(args.config) if args.config else ServerConfig()
    except OSError as e:
        print(f"error: cannot read config: {e}", file=sys.stderr)
        return 1
    except ConfigError as e:
        print(f"error: invalid config: {e}", file=sys.stderr)
        return 1
    if os.environ.get("FRAMECAST_PORT"):
        config.port = int(os.environ["FRAMECAST_PORT"])
    if os.environ.get("FRAMECAST_DATA_DIR"):
        config.data_dir = os.environ["FRAMECAST_DATA_DIR"]
    print(f"serving on 127.0.0.1:{config.port}, data dir {config.data_dir!r}")
    serve(config)
    return 0


# ---------------------------------------------------------------------------
# Benchmarks
# ---------------------------------------------------------------------------

def _bench_spec(ftype: FrameType, order, annotate: bool = True) -> VideoSpec:
    """One output frame per entry of `order` (source frame indices)."""
    spec = VideoSpec("bench", 30, 1, ftype)
    color = spec.table.intern(Const(Color(255, 255, 255)))
    p0 = spec.table.intern(Const(IntPair(4, 4)))
    p1 = spec.table.intern(Const(IntPair(ftype.width - 4, ftype.height - 4)))
    one = spec.table.intern(Const(Int(1)))
    for f in order:
        node = spec.table.intern(SourceRef("in", f))
        if annotate:
            node = spec.table.intern(
                FilterCall("draw_rectangle", (node, p0, p1, color, one)))
        spec.frames.append(node)
    spec.terminate()
    return spec


def _access_order(pattern: str, count: int, stride: int, seed: int) -> list:
    if pattern == "sequential":
        return list(range(count))
    if pattern == "reverse":
        return list(range(count - 1, -1, -1))
    if pattern == "shuffle":
        order = list(range(count))
        random.Random(seed).shuffle(order)
        return order
    if pattern == "stride":
        return list(range(0, count, stride))
    raise ValueError(f"unknown access pattern {pattern!r}")


def _run_once(spec, reader, config, deterministic=False):
    sink = CollectSink()
    start = time.perf_counter()
    counters = render(spec, {"in": reader}, sink, config=config,
                      deterministic=deterministic)
    wall_ms = (time.perf_counter() - start) * 1e3
    return wall_ms, counters


def _bench_rows(args):
    ftype = FrameType(128, 128, PixelFormat.GRAY8)
    scenario = args.scenario
    if scenario == "threads":
        count = 2000
        reader = codec.TvcReader(synth.make_synthetic_tvc(
            ftype, count, gop_size=args.gop, b_frames=args.b_frames,
            seed=args.seed))
        spec = _bench_spec(ftype, range(count))
        for t in (1, 2, 4, 8):
            wall, c = _run_once(spec, reader,
                                EngineConfig(t, t, args.pool, args.window))
            yield t, wall, c
    elif scenario == "pool-size":
        count = 500
        reader = codec.TvcReader(synth.make_synthetic_tvc(
            ftype, count, gop_size=args.gop, b_frames=args.b_frames,
            seed=args.seed))
        order = _access_order("shuffle", count, 0, args.seed)
        spec = _bench_spec(ftype, order)
        # The prefetch window stays at the smallest pool in the sweep so the
        # decode request stream is identical for every pool size; only then
        # is the eviction policy's cache-size monotonicity observable.
        window = min(args.window, 10)
        for pool in range(10, 101, 10):
            wall, c = _run_once(spec, reader,
                                EngineConfig(1, 1, pool, window),
                                deterministic=True)
            yield pool, wall, c
    elif scenario == "stride":
        count = 20000
        stride = max(args.stride, 1)
        reader = codec.TvcReader(synth.make_synthetic_tvc(
            ftype, count, gop_size=args.gop, b_frames=args.b_frames,
            seed=args.seed))
        spec = _bench_spec(ftype, range(0, count, stride), annotate=False)
        for decoders in (1, 2, 4):
            wall, c = _run_once(spec, reader,
                                EngineConfig(decoders, 2, args.pool, args.window))
            yield decoders, wall, c
    elif scenario == "access-pattern":
        count = 1000
        reader = codec.TvcReader(synth.make_synthetic_tvc(
            ftype, count, gop_size=args.gop, b_frames=args.b_frames,
            seed=args.seed))
        for pattern in ("sequential", "reverse", "shuffle", "stride"):
            order = _access_order(pattern, count, args.stride, args.seed)
            spec = _bench_spec(ftype, order)
            wall, c = _run_once(spec, reader,
                                EngineConfig(1, 1, args.pool, args.window),
                                deterministic=True)
            yield pattern, wall, c
    else:
        raise ValueError(f"unknown scenario {scenario!r}")


def cmd_bench(args) -> int:
    out = open(args.csv, "w", newline="") if args.csv else sys.stdout
    try:
        writer = csv.writer(out)
        writer.writerow(CSV_HEADER)
        for param, wall_ms, counters in _bench_rows(args):
            writer.writerow([param, f"{wall_ms:.3f}", counters.frames_decoded,
                             counters.evictions, counters.abandonments])
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    finally:
        if out is not sys.stdout:
            out.close()
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="framecast",
        description="Declarative frame-expression video rendering.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a JSON spec to a TVC container")
    p.add_argument("spec", help="canonical JSON spec file")
    p.add_argument("sources", help="directory containing <source_id>.tvc files")
    p.add_argument("out", help="output TVC path")
    _add_engine_flags(p)
    p.add_argument("--gop", type=int, default=30, help="output GOP size")
    p.add_argument("--b-frames", action="store_true", help="emit B records")
    p.add_argument("--stats", action="store_true",
                   help="print instrumentation JSON after rendering")
    p.set_defaults(fn=cmd_render)

    p = sub.add_parser("make-synthetic", help="write a deterministic fixture")
    p.add_argument("out", help="output TVC path")
    p.add_argument("--width", type=int, default=64)
    p.add_argument("--height", type=int, default=64)
    p.add_argument("--pixfmt", default="gray8",
                   choices=[f.value for f in PixelFormat])
    p.add_argument("--frames", type=int, default=300)
    p.add_argument("--gop", type=int, default=30)
    p.add_argument("--b-frames", action="store_true")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_make_synthetic)

    p = sub.add_parser("probe", help="print a container's header summary")
    p.add_argument("path")
    p.set_defaults(fn=cmd_probe)

    p = sub.add_parser("serve", help="run the VOD server")
    p.add_argument("config", nargs="?", default=None,
                   help="config file of 'key = value' lines")
    p.set_defaults(fn=cmd_serve)

    p = sub.add_parser("bench", help="run a scheduling experiment, emit CSV")
    p.add_argument("scenario",
                   choices=["threads", "pool-size", "stride", "access-pattern"])
    p.add_argument("--csv", default=None, help="output CSV path (default stdout)")
    _add_engine_flags(p)
    p.add_argument("--gop", type=int, default=30)
    p.add_argument("--b-frames", action="store_true")
    p.add_argument("--stride", type=int, default=128)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=cmd_bench)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
