"""Newline-delimited JSON frame logs and the length-prefixed wire encoding.

Episode logs hold one frame per line (the same JSON objects the live
server broadcasts). Wire messages are a 4-byte big-endian unsigned length
followed by that many bytes of UTF-8 JSON.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path


class FrameLogError(Exception):
    """Raised with the 1-based line number of the first unreadable record."""

    def __init__(self, line_number: int, message: str):
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


def write_frames(path: str | Path, frames, header: dict | None = None) -> int:
    """Write frames as NDJSON; returns the number of records written.

    An optional header record (e.g. schema + arena metadata, making the
    log self-describing) is written first with a ``type`` field.
    """
    count = 0
    with open(path, "w") as fh:
        if header is not None:
            fh.write(json.dumps({"type": "log_header", **header}, sort_keys=True) + "\n")
            count += 1
        for frame in frames:
            fh.write(json.dumps(frame, sort_keys=True) + "\n")
            count += 1
    return count


def read_frames(path: str | Path):
    """Yield records (frames, plus any header) from an NDJSON log; corrupt
    records raise FrameLogError with their line number."""
    with open(path) as fh:
        for i, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                frame = json.loads(line)
            except json.JSONDecodeError as err:
                raise FrameLogError(i, str(err)) from err
            if not isinstance(frame, dict) or ("t" not in frame and "type" not in frame):
                raise FrameLogError(i, "record is not a frame object")
            yield frame


def encode_message(obj: dict) -> bytes:
    payload = json.dumps(obj, sort_keys=True).encode("utf-8")
    return struct.pack(">I", len(payload)) + payload


class MessageDecoder:
    """Incremental decoder for length-prefixed JSON messages."""

    def __init__(self, max_message: int = 16 * 1024 * 1024):
        self._buf = bytearray()
        self._max = max_message

    def feed(self, data: bytes):
        """Append raw bytes and yield every complete decoded message."""
        self._buf.extend(data)
        while True:
            if len(self._buf) < 4:
                return
            (length,) = struct.unpack(">I", self._buf[:4])
            if length > self._max:
                raise ValueError(f"message of {length} bytes exceeds the limit")
            if len(self._buf) < 4 + length:
                return
            payload = bytes(self._buf[4 : 4 + length])
            del self._buf[: 4 + length]
            yield json.loads(payload.decode("utf-8"))
