import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import pytest

from framecast import codec, synth
from framecast.ir import FrameType, PixelFormat


@pytest.fixture(scope="session")
def gray64():
    return FrameType(64, 64, PixelFormat.GRAY8)


@pytest.fixture(scope="session")
def gray_reader(gray64):
    """120-frame gray8 synthetic source, gop 30, with B records."""
    return codec.TvcReader(synth.make_synthetic_tvc(
        gray64, 120, gop_size=30, b_frames=True))
