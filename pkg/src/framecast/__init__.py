"""framecast: declarative frame-expression video rendering.

Imperative annotation scripts are lifted (by clients) into interned frame
expressions; this package stores and checks those expressions, renders
them with a GOP-aware multi-worker engine using optimal cache eviction,
and serves results just-in-time over an HLS-style event-stream VOD
protocol with a bespoke lossless container standing in for a real codec.
"""

from .ir import (FrameType, PixelFormat, SecurityPolicy, VideoSpec,
                 SourceRef, FilterCall, Const,
                 Int, Float, Bool, Str, IntPair, Color, ValueList,
                 type_check, check_policy, extract_schedule,
                 serialize_spec, deserialize_spec)
from .codec import (Raster, encode_tvc, probe, pack_masks, convert_pixfmt,
                    TvcReader, GopDecoder, decode_all)
from .filters import REGISTRY, evaluate_expr
from . import synth
from .engine import (EngineConfig, Counters, CollectSink, TvcFileSink,
                     render, reference_render)

__version__ = "0.1.0"
