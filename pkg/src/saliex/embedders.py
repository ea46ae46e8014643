"""Black-box embedding interface: built-in toy models plus an adapter
for external model processes speaking the wire protocol.

Every embedder maps a (batch, H, W, C) float32 pixel block to unit-norm
(batch, d) embeddings, so cosine similarity is exactly the dot product.
Built-in embedders are stateless and safe to call concurrently; the
external adapter serializes per connection and pools connections.
"""

from __future__ import annotations

import queue
import socket
import subprocess
import tempfile
import threading
from typing import Sequence

import numpy as np

from . import wire
from .errors import ConfigError, DegenerateEmbeddingError, TransportError
from .types import Image


def normalize_rows(emb: np.ndarray, degenerate: str = "raise") -> np.ndarray:
    """L2-normalize each row; zero rows are degenerate.

    ``degenerate`` picks the policy: "raise" (default) or "zero", which
    leaves the row all-zero so downstream cosine scores become 0.
    """
    if degenerate not in ("raise", "zero"):
        raise ConfigError(f"degenerate policy must be 'raise' or 'zero', got {degenerate!r}")
    emb = np.asarray(emb, dtype=np.float64)
    norms = np.linalg.norm(emb, axis=1)
    dead = norms == 0.0
    if dead.any():
        if degenerate == "raise":
            raise DegenerateEmbeddingError(
                f"degenerate embedding: {int(dead.sum())} of {emb.shape[0]} inputs "
                "produced a zero vector before normalization (all-black input?)"
            )
        norms = np.where(dead, 1.0, norms)
    out = (emb / norms[:, None]).astype(np.float32)
    if dead.any():
        out[dead] = 0.0
    return out


class Embedder:
    """Interface: deterministic pixels-to-unit-embedding function."""

    name = "embedder"

    def embed_batch(self, pixels: np.ndarray, degenerate: str = "raise") -> np.ndarray:
        raise NotImplementedError

    def close(self) -> None:
        pass

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()
        return False


def _as_batch(pixels: np.ndarray) -> np.ndarray:
    pixels = np.asarray(pixels, dtype=np.float32)
    if pixels.ndim != 4:
        raise ConfigError(f"embedder input must be (batch, H, W, C), got shape {pixels.shape}")
    if pixels.shape[0] < 1:
        raise ConfigError("embedder batch must be non-empty")
    return pixels


class BlockAveragePool(Embedder):
    """Mean-pool each channel to a g-by-g grid, flatten, L2-normalize.

    Pixel changes confined to one pooling cell touch only that cell's
    feature components (before normalization), which makes this the
    structured reference model for localization tests.
    """

    def __init__(self, grid: int = 8):
        if grid < 1:
            raise ConfigError(f"block-average grid must be >= 1, got {grid}")
        self.grid = grid
        self.name = f"block-avg:g={grid}"

    def embed_batch(self, pixels: np.ndarray, degenerate: str = "raise") -> np.ndarray:
        px = _as_batch(pixels)
        b, h, w, c = px.shape
        g = self.grid
        if g > min(h, w):
            raise ConfigError(f"grid {g} exceeds min image dimension {min(h, w)}")
        rb = (np.arange(g + 1) * h) // g
        cb = (np.arange(g + 1) * w) // g
        sums = np.add.reduceat(px.astype(np.float64), rb[:-1], axis=1)
        sums = np.add.reduceat(sums, cb[:-1], axis=2)
        areas = np.diff(rb)[:, None] * np.diff(cb)[None, :]
        feats = sums / areas[None, :, :, None]
        return normalize_rows(feats.reshape(b, g * g * c), degenerate)


_PROJECTION_CACHE: dict[tuple[int, int, int], np.ndarray] = {}
_PROJECTION_LOCK = threading.Lock()


def _projection_matrix(weight_seed: int, dim: int, input_dim: int) -> np.ndarray:
    key = (weight_seed, dim, input_dim)
    with _PROJECTION_LOCK:
        mat = _PROJECTION_CACHE.get(key)
        if mat is None:
            rng = np.random.default_rng(weight_seed)
            mat = rng.standard_normal((dim, input_dim))
            _PROJECTION_CACHE[key] = mat
    return mat


class RandomProjection(Embedder):
    """Project flattened pixels through a fixed Normal(0, 1) matrix.

    The matrix is drawn once from the weight seed and cached, standing
    in for an untrained (randomly initialized) recognition backbone.
    """

    def __init__(self, dim: int = 128, weight_seed: int = 0):
        if dim < 2:
            raise ConfigError(f"projection dim must be >= 2, got {dim}")
        self.dim = dim
        self.weight_seed = weight_seed
        self.name = f"rand-proj:d={dim},seed={weight_seed}"

    def embed_batch(self, pixels: np.ndarray, degenerate: str = "raise") -> np.ndarray:
        px = _as_batch(pixels)
        b = px.shape[0]
        flat = px.reshape(b, -1).astype(np.float64)
        mat = _projection_matrix(self.weight_seed, self.dim, flat.shape[1])
        return normalize_rows(flat @ mat.T, degenerate)


class _Channel:
    """One serial protocol stream (subprocess pipes or TCP socket)."""

    def __init__(self, command: str | None, address: tuple[str, int] | None):
        self.command = command
        self.address = address
        self.proc = None
        self.sock = None
        if command is not None:
            self.stderr = tempfile.TemporaryFile()
            self.proc = subprocess.Popen(
                command, shell=True,
                stdin=subprocess.PIPE, stdout=subprocess.PIPE, stderr=self.stderr,
            )
            self._rfile = self.proc.stdout
            self._wfile = self.proc.stdin
        else:
            self.sock = socket.create_connection(address, timeout=60.0)
            self._rfile = self.sock.makefile("rb")
            self._wfile = self.sock.makefile("wb")

    def diagnostics(self) -> str:
        if self.proc is None:
            return f"tcp {self.address[0]}:{self.address[1]}"
        parts = [f"command {self.command!r}"]
        code = self.proc.poll()
        if code is not None:
            parts.append(f"exited with code {code}")
        try:
            self.stderr.seek(0, 2)
            size = self.stderr.tell()
            self.stderr.seek(max(0, size - 2048))
            tail = self.stderr.read().decode("utf-8", "replace").strip()
            if tail:
                parts.append(f"stderr tail: {tail}")
        except (OSError, ValueError):
            pass
        return "; ".join(parts)

    def round_trip(self, pixels: np.ndarray) -> np.ndarray:
        try:
            self._wfile.write(wire.encode_request(pixels))
            self._wfile.flush()
            return wire.read_response(self._rfile.read, pixels.shape[0])
        except (OSError, ValueError, BrokenPipeError) as exc:
            raise TransportError(f"embedding transport failed ({self.diagnostics()}): {exc}") from exc
        except TransportError as exc:
            raise TransportError(f"{exc} ({self.diagnostics()})") from exc

    def close(self) -> None:
        for fh in (self._wfile, self._rfile):
            try:
                fh.close()
            except OSError:
                pass
        if self.proc is not None:
            try:
                self.proc.terminate()
                self.proc.wait(timeout=5)
            except (OSError, subprocess.TimeoutExpired):
                self.proc.kill()
            self.stderr.close()
        if self.sock is not None:
            try:
                self.sock.close()
            except OSError:
                pass


class ExternalEmbedder(Embedder):
    """Adapter around an external model process or service.

    Each request carries up to ``max_batch`` images to amortize
    round-trips.  A connection is a serial channel; ``connections``
    channels are pooled so concurrent workers do not interleave frames.
    """

    def __init__(self, command: str | None = None, address: tuple[str, int] | None = None,
                 max_batch: int = 64, connections: int = 1):
        if (command is None) == (address is None):
            raise ConfigError("external embedder needs exactly one of command or address")
        if max_batch < 1:
            raise ConfigError(f"max_batch must be >= 1, got {max_batch}")
        if connections < 1:
            raise ConfigError(f"connections must be >= 1, got {connections}")
        self.command = command
        self.address = address
        self.max_batch = max_batch
        self.connections = connections
        self.name = f"ext:cmd={command}" if command else f"ext:tcp={address[0]}:{address[1]}"
        self._pool: queue.SimpleQueue[_Channel] = queue.SimpleQueue()
        self._spawned = 0
        self._spawn_lock = threading.Lock()
        self._closed = False
        self._all: list[_Channel] = []

    def _checkout(self) -> _Channel:
        try:
            return self._pool.get_nowait()
        except queue.Empty:
            pass
        with self._spawn_lock:
            if self._closed:
                raise TransportError("external embedder is closed")
            if self._spawned < self.connections:
                try:
                    chan = _Channel(self.command, self.address)
                except OSError as exc:
                    raise TransportError(
                        f"cannot open embedding transport ({self.name}): {exc}"
                    ) from exc
                self._spawned += 1
                self._all.append(chan)
                return chan
        return self._pool.get()

    def embed_batch(self, pixels: np.ndarray, degenerate: str = "raise") -> np.ndarray:
        px = _as_batch(pixels)
        outputs = []
        for start in range(0, px.shape[0], self.max_batch):
            chunk = px[start:start + self.max_batch]
            chan = self._checkout()
            try:
                raw = chan.round_trip(chunk)
            except TransportError:
                # channel state is unknown after a failure; retire it
                with self._spawn_lock:
                    self._spawned -= 1
                    if chan in self._all:
                        self._all.remove(chan)
                chan.close()
                raise
            self._pool.put(chan)
            outputs.append(raw)
        return normalize_rows(np.concatenate(outputs, axis=0), degenerate)

    def close(self) -> None:
        with self._spawn_lock:
            self._closed = True
            chans = list(self._all)
            self._all.clear()
        for chan in chans:
            chan.close()


def embed(embedder: Embedder, images: Sequence[Image], degenerate: str = "raise") -> np.ndarray:
    """Embed a non-empty, uniformly sized list of images, order-preserving."""
    if len(images) == 0:
        raise ConfigError("embed requires a non-empty batch")
    dims = {(im.height, im.width, im.channels) for im in images}
    if len(dims) != 1:
        raise ConfigError(f"batch mixes image dimensions: {sorted(dims)}")
    batch = np.stack([im.pixels for im in images])
    return embedder.embed_batch(batch, degenerate)


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Dot product of two unit-norm embeddings, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ConfigError(f"embedding dimensions differ: {a.shape[0]} vs {b.shape[0]}")
    return float(np.clip(np.dot(a, b), -1.0, 1.0))


def _parse_params(text: str, defaults: dict[str, int]) -> dict[str, int]:
    params = dict(defaults)
    if not text:
        return params
    for piece in text.split(","):
        if "=" not in piece:
            raise ConfigError(f"malformed embedder parameter {piece!r} (expected key=value)")
        key, _, value = piece.partition("=")
        key = key.strip()
        if key not in params:
            raise ConfigError(f"unknown embedder parameter {key!r} (expected one of {sorted(defaults)})")
        try:
            params[key] = int(value)
        except ValueError as exc:
            raise ConfigError(f"embedder parameter {key} must be an integer, got {value!r}") from exc
    return params


def make_embedder(spec: str, connections: int = 1, max_batch: int = 64) -> Embedder:
    """Build an embedder from its selection string.

    Grammar: ``toy:block-avg:g=8``, ``toy:rand-proj:d=128,seed=7``,
    ``ext:cmd=<shell command>``, ``ext:tcp=<host:port>``.
    """
    family, _, rest = spec.partition(":")
    if family == "toy":
        model, _, params_text = rest.partition(":")
        if model == "block-avg":
            params = _parse_params(params_text, {"g": 8})
            return BlockAveragePool(grid=params["g"])
        if model == "rand-proj":
            params = _parse_params(params_text, {"d": 128, "seed": 0})
            return RandomProjection(dim=params["d"], weight_seed=params["seed"])
        raise ConfigError(f"unknown toy embedder {model!r} (expected block-avg or rand-proj)")
    if family == "ext":
        if rest.startswith("cmd="):
            command = rest[len("cmd="):]
            if not command.strip():
                raise ConfigError("ext:cmd= requires a shell command")
            return ExternalEmbedder(command=command, max_batch=max_batch, connections=connections)
        if rest.startswith("tcp="):
            addr = rest[len("tcp="):]
            host, sep, port_text = addr.rpartition(":")
            if not sep or not host:
                raise ConfigError(f"ext:tcp= requires host:port, got {addr!r}")
            try:
                port = int(port_text)
            except ValueError as exc:
                raise ConfigError(f"invalid port {port_text!r} in {addr!r}") from exc
            return ExternalEmbedder(address=(host, port), max_batch=max_batch,
                                    connections=connections)
        raise ConfigError(f"unknown external transport in {spec!r} (expected cmd= or tcp=)")
    raise ConfigError(f"unknown embedder family {family!r} (expected toy or ext)")
