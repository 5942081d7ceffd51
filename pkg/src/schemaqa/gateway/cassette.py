"""Replay recorded HTTP interactions through an ``httpx`` transport."""
from __future__ import annotations

import json

import httpx


class CassetteMiss(LookupError):
    pass


def _normalize_body(raw: bytes):
    if not raw:
        return None
    try:
        return json.loads(raw)
    except ValueError:
        return raw.decode("utf-8", "replace")


class CassetteTransport(httpx.MockTransport):
    """Serves responses from a cassette file.

    The file is a JSON list of ``{"request": {"method", "path", "json"},
    "response": {"status", "json"}}``. Requests match on method, URL path and
    decoded JSON body; an unmatched request raises :class:`CassetteMiss`.
    """

    def __init__(self, interactions):
        self.interactions = list(interactions)
        self.calls: list[dict] = []
        super().__init__(self._handle)

    @classmethod
    def from_file(cls, path) -> "CassetteTransport":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    def _handle(self, request: httpx.Request) -> httpx.Response:
        body = _normalize_body(request.content)
        seen = {"method": request.method, "path": request.url.path, "json": body,
                "authorization": request.headers.get("authorization")}
        self.calls.append(seen)
        for item in self.interactions:
            req = item["request"]
            if req["method"] != request.method or not request.url.path.endswith(req["path"]):
                continue
            if "json" in req and req["json"] != body:
                continue
            if "authorization" in req and req["authorization"] != seen["authorization"]:
                continue
            resp = item["response"]
            return httpx.Response(resp["status"], json=resp.get("json"))
        raise CassetteMiss(f"no recorded interaction for {request.method} {request.url.path}")
