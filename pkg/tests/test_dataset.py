"""Dataset assembly, splits, normalization, noise, serialization."""

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from uavclass.dataset import (
    Dataset,
    add_noise,
    build_dataset,
    dataset_hashes,
    fit_normalizer,
    load_dataset,
    load_trajectory,
    save_dataset,
    save_trajectory,
    signal_std,
    split_dataset,
    split_labels,
)
from uavclass.errors import (
    HashMismatchError,
    TruncatedFileError,
    VersionMismatchError,
)
from uavclass.scenarios import Scenario, ScenarioKind, Trajectory


def _dummy_trajectory(class_id: int, seed: int, rows: int = 4) -> Trajectory:
    rng = np.random.default_rng(seed)
    return Trajectory(
        class_id=class_id,
        scenario=Scenario(ScenarioKind.HOVER, seed),
        dt=0.01,
        states=rng.normal(size=(rows, 12)),
        derivs=rng.normal(size=(rows, 12)),
        controls=rng.normal(size=(rows, 4)),
    )


def _dummy_dataset(n_per_class: int, rows: int = 4) -> Dataset:
    trajs = [
        _dummy_trajectory(c, 100 * c + i, rows)
        for c in range(3)
        for i in range(n_per_class)
    ]
    return Dataset(trajs, duration=rows * 0.01, dt=0.01, master_seed=0)


def _same_dataset(a: Dataset, b: Dataset) -> bool:
    return len(a) == len(b) and all(
        x.class_id == y.class_id
        and x.scenario == y.scenario
        and np.array_equal(x.states, y.states)
        and np.array_equal(x.derivs, y.derivs)
        and np.array_equal(x.controls, y.controls)
        for x, y in zip(a.trajectories, b.trajectories)
    )


# ---------------------------------------------------------------------------
# Building
# ---------------------------------------------------------------------------

def test_build_one_per_class():
    ds = build_dataset(1, duration=0.5, dt=0.01, master_seed=1)
    assert len(ds) == 3
    assert ds.per_class_counts() == [1, 1, 1]


def test_build_counts_and_steps():
    ds = build_dataset(4, duration=0.5, dt=0.01, master_seed=2)
    assert len(ds) == 12
    assert all(t.steps == 50 for t in ds.trajectories)
    assert all(t.states.shape == (51, 12) for t in ds.trajectories)
    # scenario kinds cycle over the per-class catalog
    kinds = [t.scenario.kind for t in ds.trajectories if t.class_id == 0]
    assert len(set(kinds)) == 4


def test_build_deterministic_in_master_seed():
    a = build_dataset(2, duration=0.3, dt=0.01, master_seed=7)
    b = build_dataset(2, duration=0.3, dt=0.01, master_seed=7)
    assert _same_dataset(a, b)
    c = build_dataset(2, duration=0.3, dt=0.01, master_seed=8)
    assert not _same_dataset(a, c)


def test_build_worker_count_does_not_change_data():
    a = build_dataset(2, duration=0.3, dt=0.01, master_seed=3, workers=1)
    b = build_dataset(2, duration=0.3, dt=0.01, master_seed=3, workers=2)
    assert _same_dataset(a, b)


def test_build_rejects_zero_count():
    with pytest.raises(ValueError):
        build_dataset(0)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def test_split_sizes_paper_scale():
    ds = _dummy_dataset(1000, rows=2)
    labels = split_labels(ds, (0.8, 0.1, 0.1), seed=0)
    assert labels.count("train") == 2400
    assert labels.count("val") == 300
    assert labels.count("test") == 300


def test_split_sizes_exact_small():
    ds = _dummy_dataset(10, rows=2)
    train, val, test = split_dataset(ds, (0.8, 0.1, 0.1), seed=1)
    assert (len(train), len(val), len(test)) == (24, 3, 3)
    for subset in (train, val, test):
        counts = [sum(t.class_id == c for t in subset) for c in range(3)]
        assert counts == [len(subset) // 3] * 3  # stratified


def test_split_membership_deterministic():
    ds = _dummy_dataset(20, rows=2)
    a = split_labels(ds, (0.8, 0.1, 0.1), seed=9)
    b = split_labels(ds, (0.8, 0.1, 0.1), seed=9)
    assert a == b
    c = split_labels(ds, (0.8, 0.1, 0.1), seed=10)
    assert a != c


def test_split_no_trajectory_straddles():
    ds = _dummy_dataset(10, rows=2)
    split_dataset(ds, seed=2)
    assert sorted(ds.split_labels.count(n) for n in ("train", "val", "test")) == [3, 3, 24]
    assert len(ds.split_labels) == len(ds)


def test_split_rejects_empty_class_split():
    ds = _dummy_dataset(5, rows=2)
    with pytest.raises(ValueError):
        split_labels(ds, (0.8, 0.1, 0.1), seed=0)


def test_split_rejects_bad_fractions():
    ds = _dummy_dataset(10, rows=2)
    with pytest.raises(ValueError):
        split_labels(ds, (0.7, 0.1, 0.1), seed=0)


@given(st.integers(0, 2 ** 31 - 1))
@settings(max_examples=15, deadline=None)
def test_split_stratification_property(seed):
    ds = _dummy_dataset(20, rows=2)
    labels = split_labels(ds, (0.8, 0.1, 0.1), seed=seed)
    for name, expect in (("train", 16), ("val", 2), ("test", 2)):
        for c in range(3):
            got = sum(
                1 for t, s in zip(ds.trajectories, labels)
                if s == name and t.class_id == c
            )
            assert got == expect


# ---------------------------------------------------------------------------
# Normalization
# ---------------------------------------------------------------------------

def test_normalizer_constant_column_floored():
    t = _dummy_trajectory(0, 1, rows=50)
    t.states[:, 3] = 7.5  # constant column
    stats = fit_normalizer([t])
    assert stats.std_x[3] == 1e-8
    normed = stats.normalize_states(t.states)
    assert np.allclose(normed[:, 3], 0.0)


def test_normalizer_two_point_column():
    t = _dummy_trajectory(0, 1, rows=2)
    t.states[:] = 0.0
    t.states[0, 0], t.states[1, 0] = -1.0, 1.0
    stats = fit_normalizer([t])
    assert stats.mean_x[0] == 0.0
    assert stats.std_x[0] == 1.0  # population std
    assert np.array_equal(stats.normalize_states(t.states)[:, 0], [-1.0, 1.0])


def test_normalizer_round_trip():
    trajs = [_dummy_trajectory(c, c, rows=30) for c in range(3)]
    stats = fit_normalizer(trajs)
    x = trajs[0].states
    assert np.allclose(stats.denormalize_states(stats.normalize_states(x)), x,
                       atol=1e-12)
    y = trajs[0].derivs
    assert np.allclose(stats.denormalize_derivs(stats.normalize_derivs(y)), y,
                       atol=1e-12)


def test_normalizer_rejects_empty_split():
    with pytest.raises(ValueError):
        fit_normalizer([])


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------

def test_zero_noise_is_identity():
    t = _dummy_trajectory(1, 5, rows=20)
    ref_x, ref_y = signal_std([t])
    noisy = add_noise(t, 0.0, 0.0, 3, ref_x, ref_y)
    assert np.array_equal(noisy.states, t.states)
    assert np.array_equal(noisy.derivs, t.derivs)


def test_noise_deterministic_and_label_preserving():
    t = _dummy_trajectory(2, 6, rows=20)
    ref_x, ref_y = signal_std([t])
    a = add_noise(t, 10.0, 15.0, 42, ref_x, ref_y)
    b = add_noise(t, 10.0, 15.0, 42, ref_x, ref_y)
    assert np.array_equal(a.states, b.states)
    assert a.class_id == t.class_id
    assert a.states.shape == t.states.shape
    assert np.array_equal(a.controls, t.controls)


def test_noise_magnitude_law_of_large_numbers():
    rows = 100_000
    t = _dummy_trajectory(0, 7, rows=rows)
    ref_x = np.full(12, 2.0)
    ref_y = np.full(12, 0.5)
    noisy = add_noise(t, 10.0, 15.0, 11, ref_x, ref_y)
    added_x = (noisy.states - t.states).std(axis=0)
    added_y = (noisy.derivs - t.derivs).std(axis=0)
    assert np.all(np.abs(added_x - 0.10 * 2.0) < 0.05 * 0.10 * 2.0)
    assert np.all(np.abs(added_y - 0.15 * 0.5) < 0.05 * 0.15 * 0.5)


def test_noise_rejects_negative_percentage():
    t = _dummy_trajectory(0, 8, rows=4)
    with pytest.raises(ValueError):
        add_noise(t, -1.0, 0.0, 0, np.ones(12), np.ones(12))


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def test_dataset_round_trip_bitwise(tmp_path):
    ds = build_dataset(4, duration=0.2, dt=0.01, master_seed=4)
    split_dataset(ds, (0.5, 0.25, 0.25), seed=1)
    ds.norm = fit_normalizer(ds.subset("train"))
    save_dataset(ds, tmp_path / "ds")
    loaded = load_dataset(tmp_path / "ds")
    assert _same_dataset(ds, loaded)
    assert loaded.split_labels == ds.split_labels
    assert loaded.split_fractions == (0.5, 0.25, 0.25)
    assert np.array_equal(loaded.norm.mean_x, ds.norm.mean_x)
    assert loaded.master_seed == ds.master_seed
    assert loaded.param_hashes == ds.param_hashes


def test_dataset_hashes_reproducible(tmp_path):
    for name in ("a", "b"):
        ds = build_dataset(1, duration=0.2, dt=0.01, master_seed=5)
        save_dataset(ds, tmp_path / name)
    assert dataset_hashes(tmp_path / "a") == dataset_hashes(tmp_path / "b")


def test_dataset_truncated_file(tmp_path):
    ds = _dummy_dataset(1, rows=3)
    save_dataset(ds, tmp_path / "ds")
    payload = (tmp_path / "ds" / "states.bin").read_bytes()
    (tmp_path / "ds" / "states.bin").write_bytes(payload[:-8])
    with pytest.raises(TruncatedFileError):
        load_dataset(tmp_path / "ds")


def test_dataset_hash_mismatch(tmp_path):
    ds = _dummy_dataset(1, rows=3)
    save_dataset(ds, tmp_path / "ds")
    path = tmp_path / "ds" / "derivs.bin"
    payload = bytearray(path.read_bytes())
    payload[0] ^= 0xFF
    path.write_bytes(bytes(payload))
    with pytest.raises(HashMismatchError):
        load_dataset(tmp_path / "ds")


def test_dataset_version_mismatch(tmp_path):
    ds = _dummy_dataset(1, rows=3)
    save_dataset(ds, tmp_path / "ds")
    manifest_path = tmp_path / "ds" / "manifest.json"
    manifest = json.loads(manifest_path.read_text())
    manifest["version"] += 1
    manifest_path.write_text(json.dumps(manifest))
    with pytest.raises(VersionMismatchError):
        load_dataset(tmp_path / "ds")


def test_trajectory_file_round_trip(tmp_path):
    t = _dummy_trajectory(2, 9, rows=7)
    save_trajectory(t, tmp_path / "t.bin")
    loaded = load_trajectory(tmp_path / "t.bin")
    assert loaded.class_id == t.class_id
    assert loaded.scenario == t.scenario
    assert loaded.dt == t.dt
    assert np.array_equal(loaded.states, t.states)
    assert np.array_equal(loaded.derivs, t.derivs)
    assert np.array_equal(loaded.controls, t.controls)


def test_trajectory_file_truncated(tmp_path):
    t = _dummy_trajectory(0, 10, rows=7)
    save_trajectory(t, tmp_path / "t.bin")
    raw = (tmp_path / "t.bin").read_bytes()
    Path(tmp_path / "t.bin").write_bytes(raw[:-4])
    with pytest.raises(TruncatedFileError):
        load_trajectory(tmp_path / "t.bin")


def test_binary_files_little_endian_layout(tmp_path):
    ds = _dummy_dataset(2, rows=3)
    save_dataset(ds, tmp_path / "ds")
    raw = np.frombuffer((tmp_path / "ds" / "states.bin").read_bytes(), dtype="<f8")
    stacked = np.stack([t.states for t in ds.trajectories]).ravel()
    assert np.array_equal(raw, stacked)
    labels = np.frombuffer((tmp_path / "ds" / "labels.bin").read_bytes(), dtype="<i8")
    assert np.array_equal(labels, [t.class_id for t in ds.trajectories])
