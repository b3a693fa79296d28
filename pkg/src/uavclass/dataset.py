"""Dataset assembly, normalization, splitting, noise injection, and disk I/O.

On-disk layout of a dataset directory:
  manifest.json  - structured metadata incl. shapes and SHA-256 per array file
  states.bin     - float64 little-endian, C order, shape (N, T+1, 12)
  derivs.bin     - float64 little-endian, C order, shape (N, T+1, 12)
  controls.bin   - float64 little-endian, C order, shape (N, T+1, 4)
  labels.bin     - int64 little-endian, shape (N,)

A single trajectory file is one JSON header line followed by the raw states,
derivs, and controls bytes in that order (same dtypes as above).
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import (
    DataFormatError,
    HashMismatchError,
    TruncatedFileError,
    VersionMismatchError,
)
from .scenarios import (
    Scenario,
    ScenarioKind,
    Trajectory,
    VALID_KINDS,
    simulate_trajectory,
)
from .vehicles import UavClass, default_params, params_file_hash

DATASET_FORMAT = "uavclass-dataset"
TRAJECTORY_FORMAT = "uavclass-trajectory"
FORMAT_VERSION = 1

STD_FLOOR = 1e-8

SPLIT_NAMES = ("train", "val", "test")


@dataclass
class NormStats:
    """Per-dimension z-score statistics fit on the training split only."""

    mean_x: np.ndarray
    std_x: np.ndarray
    mean_y: np.ndarray
    std_y: np.ndarray

    def normalize_states(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean_x) / self.std_x

    def denormalize_states(self, x: np.ndarray) -> np.ndarray:
        return x * self.std_x + self.mean_x

    def normalize_derivs(self, y: np.ndarray) -> np.ndarray:
        return (y - self.mean_y) / self.std_y

    def denormalize_derivs(self, y: np.ndarray) -> np.ndarray:
        return y * self.std_y + self.mean_y

    def to_dict(self) -> dict:
        return {
            "mean_x": self.mean_x.tolist(),
            "std_x": self.std_x.tolist(),
            "mean_y": self.mean_y.tolist(),
            "std_y": self.std_y.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "NormStats":
        return cls(*(np.asarray(d[k], dtype=float)
                     for k in ("mean_x", "std_x", "mean_y", "std_y")))


@dataclass
class Dataset:
    """A collection of trajectories plus build provenance.

    split_labels (one of "train"/"val"/"test" per trajectory) and norm are
    populated by the preparation pipeline and persisted with the dataset.
    """

    trajectories: list[Trajectory]
    duration: float
    dt: float
    master_seed: int
    param_hashes: dict[str, str] = field(default_factory=dict)
    split_fractions: tuple[float, float, float] | None = None
    split_seed: int | None = None
    split_labels: list[str] | None = None
    norm: NormStats | None = None

    def __len__(self) -> int:
        return len(self.trajectories)

    def per_class_counts(self) -> list[int]:
        counts = [0, 0, 0]
        for t in self.trajectories:
            counts[t.class_id] += 1
        return counts

    def subset(self, split: str) -> list[Trajectory]:
        if self.split_labels is None:
            raise ValueError("dataset has no split assignment")
        return [t for t, s in zip(self.trajectories, self.split_labels)
                if s == split]


# ---------------------------------------------------------------------------
# Building
# ---------------------------------------------------------------------------

def _trajectory_seed(master_seed: int, class_id: int, index: int) -> int:
    ss = np.random.SeedSequence([master_seed, class_id, index])
    return int(ss.generate_state(1, np.uint32)[0])


def _build_one(job) -> Trajectory:
    class_id, kind_value, seed, duration, dt, init_scale = job
    uav_class = UavClass(class_id)
    params = default_params(uav_class)
    scenario = Scenario(ScenarioKind(kind_value), seed)
    return simulate_trajectory(uav_class, params, scenario, duration, dt,
                               init_scale=init_scale)


def build_dataset(
    n_per_class: int,
    duration: float = 10.0,
    dt: float = 0.01,
    master_seed: int = 0,
    workers: int = 1,
    init_scale: float = 1.0,
) -> Dataset:
    """Simulate n_per_class trajectories per class, cycling scenario kinds.

    Deterministic in master_seed regardless of worker count: every trajectory
    is seeded independently from (master_seed, class, index).
    """
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    jobs = []
    for uav_class in UavClass:
        kinds = VALID_KINDS[uav_class]
        for i in range(n_per_class):
            seed = _trajectory_seed(master_seed, int(uav_class), i)
            jobs.append((int(uav_class), kinds[i % len(kinds)].value,
                         seed, duration, dt, init_scale))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            trajectories = list(pool.map(_build_one, jobs, chunksize=4))
    else:
        trajectories = [_build_one(job) for job in jobs]
    hashes = {UavClass(c).name.lower(): params_file_hash(UavClass(c))
              for c in UavClass}
    return Dataset(trajectories, duration, dt, master_seed, hashes)


# ---------------------------------------------------------------------------
# Splitting
# ---------------------------------------------------------------------------

def split_labels(ds: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0) -> list[str]:
    """Per-trajectory split assignment, stratified by class, seeded shuffle.

    No trajectory straddles splits; raises ValueError if any split would be
    empty for any class or the fractions do not sum to 1.
    """
    fractions = tuple(float(f) for f in fractions)
    if len(fractions) != 3 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("fractions must be three values summing to 1")
    labels = [""] * len(ds.trajectories)
    rng = np.random.default_rng(seed)
    for class_id in range(3):
        idx = [i for i, t in enumerate(ds.trajectories) if t.class_id == class_id]
        if not idx:
            continue
        order = rng.permutation(len(idx))
        n = len(idx)
        bounds = np.round(np.cumsum(fractions) * n).astype(int)
        sizes = np.diff(np.concatenate([[0], bounds]))
        if np.any(sizes <= 0):
            raise ValueError(
                f"class {class_id}: {n} trajectories cannot fill splits {fractions}"
            )
        start = 0
        for name, size in zip(SPLIT_NAMES, sizes):
            for j in order[start:start + size]:
                labels[idx[j]] = name
            start += size
    return labels


def split_dataset(ds: Dataset, fractions=(0.8, 0.1, 0.1), seed: int = 0):
    """Assign splits on ds and return (train, val, test) trajectory lists."""
    labels = split_labels(ds, fractions, seed)
    ds.split_fractions = tuple(float(f) for f in fractions)
    ds.split_seed = seed
    ds.split_labels = labels
    return tuple(ds.subset(name) for name in SPLIT_NAMES)


# ---------------------------------------------------------------------------
# Normalization and noise
# ---------------------------------------------------------------------------

def stack_states(trajectories) -> np.ndarray:
    return np.concatenate([t.states for t in trajectories], axis=0)


def stack_derivs(trajectories) -> np.ndarray:
    return np.concatenate([t.derivs for t in trajectories], axis=0)


def fit_normalizer(train_trajectories) -> NormStats:
    """Z-score stats (population std, floored at 1e-8) from the train split."""
    train_trajectories = list(train_trajectories)
    if not train_trajectories:
        raise ValueError("empty training split")
    x = stack_states(train_trajectories)
    y = stack_derivs(train_trajectories)
    return NormStats(
        mean_x=x.mean(axis=0),
        std_x=np.maximum(x.std(axis=0), STD_FLOOR),
        mean_y=y.mean(axis=0),
        std_y=np.maximum(y.std(axis=0), STD_FLOOR),
    )


def signal_std(trajectories) -> tuple[np.ndarray, np.ndarray]:
    """Per-dimension std of states and derivs over all rows (noise baseline)."""
    trajectories = list(trajectories)
    return (stack_states(trajectories).std(axis=0),
            stack_derivs(trajectories).std(axis=0))


def add_noise(
    traj: Trajectory,
    sigma_x_pct: float,
    sigma_xdot_pct: float,
    seed,
    ref_std_x: np.ndarray,
    ref_std_y: np.ndarray,
) -> Trajectory:
    """Gaussian noise on states and derivs, independently per dimension.

    Noise std per dimension is (pct / 100) times the clean per-dimension
    signal std of the reference set (normally the full test split). Labels,
    controls, and shapes are untouched; deterministic in seed.
    """
    if sigma_x_pct < 0.0 or sigma_xdot_pct < 0.0:
        raise ValueError("noise percentages must be >= 0")
    rng = np.random.default_rng(seed)
    x_noise = rng.standard_normal(traj.states.shape) * (sigma_x_pct / 100.0) * ref_std_x
    y_noise = rng.standard_normal(traj.derivs.shape) * (sigma_xdot_pct / 100.0) * ref_std_y
    return replace(traj, states=traj.states + x_noise, derivs=traj.derivs + y_noise)


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

_ARRAY_FILES = ("states.bin", "derivs.bin", "controls.bin", "labels.bin")


def _write_array(path: Path, arr: np.ndarray, dtype: str) -> dict:
    data = np.ascontiguousarray(arr, dtype=dtype).tobytes()
    path.write_bytes(data)
    return {
        "dtype": dtype,
        "shape": list(arr.shape),
        "sha256": hashlib.sha256(data).hexdigest(),
    }


def _read_array(path: Path, meta: dict) -> np.ndarray:
    expected = int(np.prod(meta["shape"])) * np.dtype(meta["dtype"]).itemsize
    data = path.read_bytes()
    if len(data) != expected:
        raise TruncatedFileError(
            f"{path.name}: expected {expected} bytes, found {len(data)}"
        )
    if hashlib.sha256(data).hexdigest() != meta["sha256"]:
        raise HashMismatchError(f"{path.name}: checksum mismatch")
    return np.frombuffer(data, dtype=meta["dtype"]).reshape(meta["shape"]).copy()


def save_dataset(ds: Dataset, path) -> None:
    """Write a dataset directory (manifest + binary arrays)."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    states = np.stack([t.states for t in ds.trajectories])
    derivs = np.stack([t.derivs for t in ds.trajectories])
    controls = np.stack([t.controls for t in ds.trajectories])
    labels = np.array([t.class_id for t in ds.trajectories], dtype=np.int64)

    files = {
        "states.bin": _write_array(path / "states.bin", states, "<f8"),
        "derivs.bin": _write_array(path / "derivs.bin", derivs, "<f8"),
        "controls.bin": _write_array(path / "controls.bin", controls, "<f8"),
        "labels.bin": _write_array(path / "labels.bin", labels, "<i8"),
    }
    manifest = {
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "n_trajectories": len(ds.trajectories),
        "steps": ds.trajectories[0].steps if ds.trajectories else 0,
        "duration": ds.duration,
        "dt": ds.dt,
        "master_seed": ds.master_seed,
        "per_class_counts": ds.per_class_counts(),
        "scenarios": [
            {"kind": t.scenario.kind.value, "seed": t.scenario.seed}
            for t in ds.trajectories
        ],
        "split": None if ds.split_labels is None else {
            "fractions": list(ds.split_fractions),
            "seed": ds.split_seed,
            "labels": ds.split_labels,
        },
        "norm_stats": None if ds.norm is None else ds.norm.to_dict(),
        "param_file_hashes": ds.param_hashes,
        "files": files,
    }
    (path / "manifest.json").write_text(json.dumps(manifest, indent=1))


def load_dataset(path) -> Dataset:
    """Read a dataset directory; verifies version, sizes, and checksums."""
    path = Path(path)
    manifest_path = path / "manifest.json"
    if not manifest_path.exists():
        raise DataFormatError(f"no manifest.json under {path}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"unreadable manifest: {exc}") from exc
    if manifest.get("format") != DATASET_FORMAT:
        raise DataFormatError("not a dataset manifest")
    if manifest.get("version") != FORMAT_VERSION:
        raise VersionMismatchError(
            f"dataset version {manifest.get('version')}, expected {FORMAT_VERSION}"
        )
    arrays = {}
    for name in _ARRAY_FILES:
        arrays[name] = _read_array(path / name, manifest["files"][name])

    trajectories = []
    for i, sc in enumerate(manifest["scenarios"]):
        trajectories.append(
            Trajectory(
                class_id=int(arrays["labels.bin"][i]),
                scenario=Scenario(ScenarioKind(sc["kind"]), sc["seed"]),
                dt=manifest["dt"],
                states=arrays["states.bin"][i],
                derivs=arrays["derivs.bin"][i],
                controls=arrays["controls.bin"][i],
            )
        )
    ds = Dataset(
        trajectories=trajectories,
        duration=manifest["duration"],
        dt=manifest["dt"],
        master_seed=manifest["master_seed"],
        param_hashes=manifest["param_file_hashes"],
    )
    split = manifest.get("split")
    if split is not None:
        ds.split_fractions = tuple(split["fractions"])
        ds.split_seed = split["seed"]
        ds.split_labels = list(split["labels"])
    if manifest.get("norm_stats") is not None:
        ds.norm = NormStats.from_dict(manifest["norm_stats"])
    return ds


def dataset_hashes(path) -> dict[str, str]:
    """Array-file checksums from a saved dataset's manifest."""
    manifest = json.loads((Path(path) / "manifest.json").read_text())
    return {name: meta["sha256"] for name, meta in manifest["files"].items()}


def save_trajectory(traj: Trajectory, path) -> None:
    """Single-file trajectory: one JSON header line + raw f64 payload."""
    header = {
        "format": TRAJECTORY_FORMAT,
        "version": FORMAT_VERSION,
        "class_id": traj.class_id,
        "kind": traj.scenario.kind.value,
        "seed": traj.scenario.seed,
        "dt": traj.dt,
        "steps": traj.steps,
    }
    with open(path, "wb") as fh:
        fh.write((json.dumps(header) + "\n").encode())
        for arr in (traj.states, traj.derivs, traj.controls):
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_trajectory(path) -> Trajectory:
    with open(path, "rb") as fh:
        line = fh.readline()
        try:
            header = json.loads(line.decode())
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataFormatError(f"unreadable trajectory header: {exc}") from exc
        if header.get("format") != TRAJECTORY_FORMAT:
            raise DataFormatError("not a trajectory file")
        if header.get("version") != FORMAT_VERSION:
            raise VersionMismatchError(
                f"trajectory version {header.get('version')}, expected {FORMAT_VERSION}"
            )
        rows = header["steps"] + 1
        payload = fh.read()
    expected = (rows * 12 + rows * 12 + rows * 4) * 8
    if len(payload) != expected:
        raise TruncatedFileError(
            f"trajectory payload: expected {expected} bytes, found {len(payload)}"
        )
    flat = np.frombuffer(payload, dtype="<f8")
    states = flat[: rows * 12].reshape(rows, 12).copy()
    derivs = flat[rows * 12: 2 * rows * 12].reshape(rows, 12).copy()
    controls = flat[2 * rows * 12:].reshape(rows, 4).copy()
    return Trajectory(
        class_id=header["class_id"],
        scenario=Scenario(ScenarioKind(header["kind"]), header["seed"]),
        dt=header["dt"],
        states=states,
        derivs=derivs,
        controls=controls,
    )
