"""Symbolic cv2-style client for framecast.

`framecast_shim.cv2` mirrors a small OpenCV surface whose frames record
expressions instead of holding pixels.  Scripts written against it produce
canonical spec JSON (local mode) or stream frame expressions to a running
framecast VOD server (server mode) without ever decoding a payload byte.

The package deliberately does not import `framecast`: it talks only the
documented external surfaces (the spec JSON format, the TVC container
header, and the HTTP API).
"""

from . import cv2

__all__ = ["cv2"]
__version__ = "0.1.0"
