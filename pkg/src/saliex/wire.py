"""Binary wire protocol for out-of-process embedding models.

All integers are little-endian u32, all pixel/embedding payloads are
little-endian float32 in C order.

    request:  ``SXE1`` | batch | H | W | C | batch*H*W*C pixels
    response: ``SXR1`` | batch | d | batch*d embeddings
    error:    ``SXE!`` | byte-length | UTF-8 message

The response embeddings need not be normalized; the client adapter
normalizes.  An error frame may be sent in place of any response.
"""

from __future__ import annotations

import socket
import struct
from typing import BinaryIO, Callable

import numpy as np

from .errors import TransportError

MAGIC_REQUEST = b"SXE1"
MAGIC_RESPONSE = b"SXR1"
MAGIC_ERROR = b"SXE!"

MAX_BATCH = 4096
MAX_DIM = 1 << 16
MAX_MESSAGE = 1 << 20


def _read_exact(read: Callable[[int], bytes], n: int, what: str) -> bytes:
    chunks = []
    remaining = n
    while remaining > 0:
        chunk = read(remaining)
        if not chunk:
            raise TransportError(f"connection closed mid-frame while reading {what} "
                                 f"({n - remaining} of {n} bytes received)")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def encode_request(pixels: np.ndarray) -> bytes:
    """Frame a (batch, H, W, C) float32 pixel block as a request."""
    pixels = np.ascontiguousarray(pixels, dtype="<f4")
    if pixels.ndim != 4:
        raise TransportError(f"request payload must be (batch, H, W, C), got shape {pixels.shape}")
    b, h, w, c = pixels.shape
    return MAGIC_REQUEST + struct.pack("<4I", b, h, w, c) + pixels.tobytes()


def encode_response(embeddings: np.ndarray) -> bytes:
    """Frame a (batch, d) float32 embedding block as a response."""
    emb = np.ascontiguousarray(embeddings, dtype="<f4")
    if emb.ndim != 2:
        raise TransportError(f"response payload must be (batch, d), got shape {emb.shape}")
    b, d = emb.shape
    return MAGIC_RESPONSE + struct.pack("<2I", b, d) + emb.tobytes()


def encode_error(message: str) -> bytes:
    payload = message.encode("utf-8")[:MAX_MESSAGE]
    return MAGIC_ERROR + struct.pack("<I", len(payload)) + payload


def read_request(read: Callable[[int], bytes]) -> np.ndarray | None:
    """Read one request frame; None on clean EOF before any byte."""
    first = read(1)
    if not first:
        return None
    magic = first + _read_exact(read, 3, "request magic")
    if magic != MAGIC_REQUEST:
        raise TransportError(f"bad request magic {magic!r}")
    b, h, w, c = struct.unpack("<4I", _read_exact(read, 16, "request header"))
    if not (1 <= b <= MAX_BATCH) or not (1 <= h <= MAX_DIM) or not (1 <= w <= MAX_DIM) \
            or c not in (1, 3):
        raise TransportError(f"implausible request header: batch={b} H={h} W={w} C={c}")
    body = _read_exact(read, 4 * b * h * w * c, "request pixels")
    return np.frombuffer(body, dtype="<f4").reshape(b, h, w, c)


def read_response(read: Callable[[int], bytes], expected_batch: int) -> np.ndarray:
    """Read one response frame; raises TransportError on an error frame."""
    magic = _read_exact(read, 4, "response magic")
    if magic == MAGIC_ERROR:
        (length,) = struct.unpack("<I", _read_exact(read, 4, "error length"))
        if length > MAX_MESSAGE:
            raise TransportError(f"implausible error-frame length {length}")
        message = _read_exact(read, length, "error message").decode("utf-8", "replace")
        raise TransportError(f"embedding service reported an error: {message}")
    if magic != MAGIC_RESPONSE:
        raise TransportError(f"bad response magic {magic!r}")
    b, d = struct.unpack("<2I", _read_exact(read, 8, "response header"))
    if b != expected_batch:
        raise TransportError(f"response batch {b} does not match request batch {expected_batch}")
    if not (1 <= d <= MAX_DIM):
        raise TransportError(f"implausible embedding dimension {d}")
    body = _read_exact(read, 4 * b * d, "response embeddings")
    return np.frombuffer(body, dtype="<f4").reshape(b, d).astype(np.float32)


def serve_stream(rfile: BinaryIO, wfile: BinaryIO,
                 embed_fn: Callable[[np.ndarray], np.ndarray]) -> None:
    """Serve requests from a byte stream until EOF.

    ``embed_fn`` maps (batch, H, W, C) float32 pixels to (batch, d)
    embeddings.  Exceptions it raises are sent back as error frames and
    the loop continues.
    """
    while True:
        try:
            pixels = read_request(rfile.read)
        except TransportError:
            return
        if pixels is None:
            return
        try:
            emb = np.asarray(embed_fn(pixels))
            frame = encode_response(emb)
        except Exception as exc:  # report to the peer instead of dying
            frame = encode_error(f"{type(exc).__name__}: {exc}")
        wfile.write(frame)
        wfile.flush()


def serve_stdio(embed_fn: Callable[[np.ndarray], np.ndarray]) -> None:
    """Serve the protocol over this process's stdin/stdout."""
    import sys

    serve_stream(sys.stdin.buffer, sys.stdout.buffer, embed_fn)


def serve_tcp(host: str, port: int, embed_fn: Callable[[np.ndarray], np.ndarray],
              ready_callback: Callable[[int], None] | None = None) -> None:
    """Accept TCP connections forever, one protocol stream per client."""
    import threading

    with socket.create_server((host, port)) as server:
        if ready_callback is not None:
            ready_callback(server.getsockname()[1])
        while True:
            conn, _ = server.accept()

            def handle(sock: socket.socket) -> None:
                with sock, sock.makefile("rb") as rf, sock.makefile("wb") as wf:
                    serve_stream(rf, wf, embed_fn)

            threading.Thread(target=handle, args=(conn,), daemon=True).start()
