import io
import struct
import subprocess
import sys
import threading
import time

import numpy as np
import pytest

from saliex import RandomProjection, TransportError, make_embedder
from saliex.wire import (MAGIC_ERROR, MAGIC_REQUEST, MAGIC_RESPONSE, encode_error,
                         encode_request, encode_response, read_request,
                         read_response, serve_stream)

from conftest import rand_image


def reader(data: bytes):
    return io.BytesIO(data).read


class TestFrames:
    def test_request_layout(self):
        px = np.arange(24, dtype=np.float32).reshape(1, 2, 4, 3) / 24.0
        frame = encode_request(px)
        assert frame[:4] == MAGIC_REQUEST
        assert struct.unpack("<4I", frame[4:20]) == (1, 2, 4, 3)
        body = np.frombuffer(frame[20:], dtype="<f4").reshape(px.shape)
        np.testing.assert_array_equal(body, px)

    def test_request_round_trip(self):
        px = np.random.default_rng(0).random((3, 5, 4, 3)).astype(np.float32)
        back = read_request(reader(encode_request(px)))
        np.testing.assert_array_equal(back, px)

    def test_response_round_trip(self):
        emb = np.random.default_rng(1).normal(size=(4, 6)).astype(np.float32)
        back = read_response(reader(encode_response(emb)), expected_batch=4)
        np.testing.assert_array_equal(back, emb)

    def test_error_frame_raises_with_message(self):
        frame = encode_error("model exploded")
        with pytest.raises(TransportError, match="model exploded"):
            read_response(reader(frame), expected_batch=1)

    def test_clean_eof_is_none(self):
        assert read_request(reader(b"")) is None

    def test_truncated_request_raises(self):
        px = np.zeros((1, 2, 2, 1), dtype=np.float32)
        frame = encode_request(px)[:-3]
        with pytest.raises(TransportError, match="mid-frame"):
            read_request(reader(frame))

    def test_bad_magic_raises(self):
        with pytest.raises(TransportError, match="magic"):
            read_request(reader(b"XXXX" + b"\0" * 16))
        with pytest.raises(TransportError, match="magic"):
            read_response(reader(b"YYYY" + b"\0" * 8), expected_batch=1)

    def test_batch_mismatch_raises(self):
        frame = encode_response(np.zeros((2, 3), dtype=np.float32))
        with pytest.raises(TransportError, match="batch"):
            read_response(reader(frame), expected_batch=5)

    def test_implausible_header_raises(self):
        frame = MAGIC_REQUEST + struct.pack("<4I", 1, 4, 4, 7) + b"\0" * 448
        with pytest.raises(TransportError, match="implausible"):
            read_request(reader(frame))


class TestServeStream:
    def test_serves_multiple_then_eof(self):
        px = np.random.default_rng(2).random((2, 3, 3, 1)).astype(np.float32)
        rbuf = io.BytesIO(encode_request(px) + encode_request(px))
        wbuf = io.BytesIO()
        serve_stream(rbuf, wbuf, lambda p: p.reshape(p.shape[0], -1) * 2.0)
        wbuf.seek(0)
        for _ in range(2):
            out = read_response(wbuf.read, expected_batch=2)
            np.testing.assert_allclose(out, px.reshape(2, -1) * 2.0, atol=1e-7)

    def test_embed_exception_becomes_error_frame(self):
        px = np.zeros((1, 2, 2, 1), dtype=np.float32)
        rbuf = io.BytesIO(encode_request(px))
        wbuf = io.BytesIO()

        def boom(_):
            raise RuntimeError("cannot embed that")

        serve_stream(rbuf, wbuf, boom)
        wbuf.seek(0)
        with pytest.raises(TransportError, match="cannot embed that"):
            read_response(wbuf.read, expected_batch=1)


class TestExternalAdapter:
    def imgs(self, n, seed=0):
        return np.stack([rand_image(8, 8, seed=seed + i).pixels for i in range(n)])

    def test_subprocess_matches_in_process(self, ext_server_cmd):
        px = self.imgs(5)
        spec = f"ext:cmd={ext_server_cmd} --dim 12 --weight-seed 3 --input-dim 192"
        with make_embedder(spec) as ext:
            got = ext.embed_batch(px)
        want = RandomProjection(dim=12, weight_seed=3).embed_batch(px)
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_multi_chunk_batches(self, ext_server_cmd):
        px = self.imgs(7, seed=50)
        spec = f"ext:cmd={ext_server_cmd} --dim 6 --weight-seed 1 --input-dim 192"
        with make_embedder(spec, max_batch=3) as ext:
            got = ext.embed_batch(px)
        want = RandomProjection(dim=6, weight_seed=1).embed_batch(px)
        np.testing.assert_allclose(got, want, atol=1e-6)

    def test_error_frame_surfaces_as_transport_error(self, ext_server_cmd):
        px = self.imgs(2)
        spec = f"ext:cmd={ext_server_cmd} --dim 4 --weight-seed 0 --input-dim 192 --fail-after 0"
        with make_embedder(spec) as ext:
            with pytest.raises(TransportError, match="synthetic failure"):
                ext.embed_batch(px)

    def test_dead_command_raises(self):
        with make_embedder("ext:cmd=false") as ext:
            with pytest.raises(TransportError):
                ext.embed_batch(self.imgs(1))

    def test_tcp_matches_in_process(self, ext_server_cmd):
        proc = subprocess.Popen(
            [*ext_server_cmd.split(), "--dim", "9", "--weight-seed", "4",
             "--input-dim", "192", "--tcp", "0"],
            stdout=subprocess.PIPE, text=True,
        )
        try:
            line = proc.stdout.readline()
            port = int(line.split()[1])
            px = self.imgs(4, seed=9)
            with make_embedder(f"ext:tcp=127.0.0.1:{port}") as ext:
                got = ext.embed_batch(px)
            want = RandomProjection(dim=9, weight_seed=4).embed_batch(px)
            np.testing.assert_allclose(got, want, atol=1e-6)
        finally:
            proc.terminate()
            proc.wait(timeout=5)
