import struct

import numpy as np
import pytest

from lgq.codebook import (Adam, CheckpointShapeError, CheckpointTruncatedError, CheckpointVersionError, Codebook,
                          SGD, apply_update, drift_report, init_codebook, load_checkpoint, save_checkpoint,
                          write_drift_csv)
from lgq.numerics import NonFiniteError, make_rng


def test_uniform_box_init():
    a = init_codebook(4, 2, make_rng(7), "uniform_box", -1, 1)
    b = init_codebook(4, 2, make_rng(7), "uniform_box", -1, 1)
    assert a.centers.shape == (4, 2)
    assert np.array_equal(a.centers, b.centers)
    assert (a.centers >= -1).all() and (a.centers <= 1).all()
    assert np.array_equal(a.init_snapshot, a.centers)


def test_data_sample_is_permutation():
    batch = np.arange(12.0).reshape(4, 3)
    cb = init_codebook(4, 3, make_rng(1), "data_sample", batch=batch)
    assert sorted(map(tuple, cb.centers)) == sorted(map(tuple, batch))


def test_data_sample_needs_enough_tokens():
    with pytest.raises(ValueError):
        init_codebook(5, 3, make_rng(1), "data_sample", batch=np.zeros((4, 3)))


def test_gaussian_zero_sigma():
    cb = init_codebook(3, 2, make_rng(0), "gaussian", sigma=0.0)
    assert np.array_equal(cb.centers, np.zeros((3, 2)))


def test_init_snapshot_frozen():
    cb = init_codebook(3, 2, make_rng(0))
    with pytest.raises(ValueError):
        cb.init_snapshot[0, 0] = 5.0


def test_zero_grad_is_identity():
    cb = init_codebook(3, 2, make_rng(0))
    before = cb.centers.copy()
    apply_update(cb, np.zeros((3, 2)), SGD(0.1))
    apply_update(cb, np.zeros((3, 2)), Adam(0.1))
    assert np.array_equal(cb.centers, before)


def test_sgd_step():
    cb = Codebook(np.zeros((2, 2)))
    apply_update(cb, np.ones((2, 2)), SGD(0.1))
    assert np.allclose(cb.centers, -0.1, atol=0, rtol=1e-15)


def test_adam_matches_hand_recursion():
    # Hand-run Adam on f(x) = (x - 3)^2 starting at x = 0.
    lr, b1, b2, eps = 0.1, 0.9, 0.999, 1e-8
    x, m, v = 0.0, 0.0, 0.0
    expected = []
    for t in range(1, 4):
        g = 2 * (x - 3)
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        x = x - lr * (m / (1 - b1**t)) / ((v / (1 - b2**t)) ** 0.5 + eps)
        expected.append(x)
    cb = Codebook(np.zeros((1, 1)))
    opt = Adam(lr, b1, b2, eps)
    got = []
    for _ in range(3):
        apply_update(cb, 2 * (cb.centers - 3), opt)
        got.append(cb.centers[0, 0])
    assert np.allclose(got, expected, rtol=1e-14, atol=0)


def test_nonfinite_grad_names_index():
    cb = Codebook(np.zeros((3, 2)))
    g = np.zeros((3, 2))
    g[2, 1] = np.nan
    with pytest.raises(NonFiniteError) as err:
        apply_update(cb, g, SGD(0.1))
    assert err.value.index == (2, 1)


def test_drift_zero_and_pythagorean():
    cb = Codebook(np.zeros((2, 2)))
    assert np.array_equal(drift_report(cb).per_code_drift, np.zeros(2))
    cb.centers[1] += (3.0, 4.0)
    assert drift_report(cb).per_code_drift[1] == 5.0


def test_drift_epoch_steps_and_noop_snapshot():
    cb = Codebook(np.zeros((2, 1)))
    cb.snapshot()
    cb.centers += 1.0
    cb.snapshot()
    cb.centers[0] += 0.5
    cb.snapshot()
    steps = drift_report(cb).per_epoch_mean_step
    assert np.allclose(steps, [1.0, 0.25])
    cb.snapshot()  # no-op epoch
    steps2 = drift_report(cb).per_epoch_mean_step
    assert np.array_equal(steps2[:2], steps) and steps2[2] == 0.0


def test_incremental_drift_matches_snapshots(rng):
    cb = Codebook(rng.standard_normal((5, 3)))
    cb.snapshot()
    for _ in range(6):
        apply_update(cb, rng.standard_normal((5, 3)), SGD(0.05))
        cb.snapshot()
    rep = drift_report(cb)
    direct = np.linalg.norm(cb.epoch_snapshots[-1] - cb.epoch_snapshots[0], axis=1)
    assert np.allclose(rep.per_code_drift, direct, atol=1e-12, rtol=0)


def test_checkpoint_roundtrip(tmp_path, rng):
    cb = Codebook(rng.standard_normal((4, 3)))
    cb.snapshot()
    cb.centers += 0.25
    path = tmp_path / "cb.lgqc"
    save_checkpoint(cb, path)
    back = load_checkpoint(path)
    assert back.centers.tobytes() == cb.centers.tobytes()
    assert back.init_snapshot.tobytes() == cb.init_snapshot.tobytes()
    assert (back.K, back.C) == (4, 3)
    assert len(back.epoch_snapshots) == 1


def _patch_header(path, offset, fmt, value):
    raw = bytearray(path.read_bytes())
    struct.pack_into(fmt, raw, offset, value)
    path.write_bytes(bytes(raw))


def test_checkpoint_errors(tmp_path):
    cb = Codebook(np.ones((3, 2)))
    p = tmp_path / "cb.lgqc"
    save_checkpoint(cb, p)
    _patch_header(p, 12, "<I", 5)  # K header no longer matches the payload
    with pytest.raises(CheckpointShapeError):
        load_checkpoint(p)
    save_checkpoint(cb, p)
    _patch_header(p, 8, "<I", 99)
    with pytest.raises(CheckpointVersionError):
        load_checkpoint(p)
    save_checkpoint(cb, p)
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(CheckpointTruncatedError):
        load_checkpoint(p)


def test_drift_csv(tmp_path):
    cb = Codebook(np.zeros((2, 2)))
    cb.snapshot()
    cb.centers += (3.0, 4.0)
    cb.snapshot()
    write_drift_csv(drift_report(cb), tmp_path / "c.csv", tmp_path / "e.csv")
    assert (tmp_path / "c.csv").read_text().splitlines() == ["code_index,drift", "0,5", "1,5"]
    assert (tmp_path / "e.csv").read_text().splitlines()[0] == "epoch,mean_step"
