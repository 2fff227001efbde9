"""Minimal HTTP client for the framecast VOD server API."""

from __future__ import annotations

import json
import urllib.error
import urllib.request


class ServerRejection(Exception):
    """A non-2xx response from the server.

    Carries the decoded error body; push rejections include the offending
    part-local frame index (`frame`) and, for policy errors, the limit name.
    """

    def __init__(self, status: int, body: dict):
        self.status = status
        self.error = body.get("error", "ServerError")
        self.frame = body.get("frame")
        self.limit = body.get("limit")
        self.detail = body.get("detail", "")
        at = f" at frame {self.frame}" if self.frame is not None else ""
        super().__init__(f"{self.error}{at}: {self.detail}")


def request_json(method: str, url: str, body: dict = None) -> dict:
    data = None
    headers = {}
    if body is not None:
        data = json.dumps(body).encode()
        headers["Content-Type"] = "application/json"
    req = urllib.request.Request(url, data=data, headers=headers,
                                 method=method)
    try:
        with urllib.request.urlopen(req) as resp:
            return json.loads(resp.read().decode())
    except urllib.error.HTTPError as e:
        payload = e.read().decode(errors="replace")
        try:
            parsed = json.loads(payload)
        except json.JSONDecodeError:
            parsed = {"error": "ServerError", "detail": payload}
        raise ServerRejection(e.code, parsed) from None


def request_bytes(url: str) -> bytes:
    try:
        with urllib.request.urlopen(url) as resp:
            return resp.read()
    except urllib.error.HTTPError as e:
        payload = e.read().decode(errors="replace")
        try:
            parsed = json.loads(payload)
        except json.JSONDecodeError:
            parsed = {"error": "ServerError", "detail": payload}
        raise ServerRejection(e.code, parsed) from None
