import struct

import numpy as np
import pytest

from slad import checkpoint as ck
from slad.network import NetConfig, init_params


@pytest.fixture
def ckpt():
    p = init_params(NetConfig(n_labels=3, width=8), 0)
    tm = {k: v * 0.5 for k, v in p.items()}
    return ck.Checkpoint({"kind": "student", "config_hash": "abc", "embedding": "e1"}, p, tm)


def test_round_trip_is_exact_at_single_precision(ckpt, tmp_path):
    path = tmp_path / "a.ckpt"
    ck.save(path, ckpt)
    back = ck.load(path)
    assert back.meta == ckpt.meta
    for src, dst in ((ckpt.theta, back.theta), (ckpt.theta_minus, back.theta_minus)):
        assert set(src) == set(dst)
        for k in src:
            assert dst[k].dtype == np.float64
            assert np.array_equal(dst[k], src[k].astype(np.float32).astype(np.float64))
    again = tmp_path / "b.ckpt"
    ck.save(again, back)
    assert again.read_bytes() == path.read_bytes()


def test_layout_starts_with_magic_and_version(ckpt):
    blob = ck.to_bytes(ckpt)
    assert blob[:4] == b"SLAD"
    assert struct.unpack("<II", blob[4:12]) == (ck.VERSION, 3)


def test_theta_minus_is_optional(ckpt):
    back = ck.from_bytes(ck.to_bytes(ck.Checkpoint(ckpt.meta, ckpt.theta)))
    assert back.theta_minus == {}


def test_corrupt_files_are_rejected(ckpt):
    blob = ck.to_bytes(ckpt)
    with pytest.raises(ck.CheckpointError, match="magic"):
        ck.from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(ck.CheckpointError, match="version"):
        ck.from_bytes(blob[:4] + struct.pack("<I", 99) + blob[8:])
    for cut in (6, 20, len(blob) // 2, len(blob) - 1):
        with pytest.raises(ck.CheckpointError):
            ck.from_bytes(blob[:cut])
    with pytest.raises(ck.CheckpointError, match="trailing"):
        ck.from_bytes(blob + b"\0")


def test_refusals(ckpt, tmp_path):
    path = tmp_path / "a.ckpt"
    ck.save(path, ckpt)
    assert ck.load(path, expect_hash="abc", expect_embedding="e1").config_hash == "abc"
    with pytest.raises(ck.CheckpointError, match="hash"):
        ck.load(path, expect_hash="abd")
    with pytest.raises(ck.CheckpointError, match="embedding"):
        ck.load(path, expect_embedding="e0")
    with pytest.raises(FileNotFoundError):
        ck.load(tmp_path / "none.ckpt")
