"""Reader for exported channel datasets.

A dataset directory holds manifest.json plus raw little-endian tensor files:
per split h (whole channels), h0 (observed channels), mask (pilot pattern),
and an eb_store subdirectory with one orthonormal basis per map cell. All
files are sha256-checksummed by their manifests. Complex tensors are '<c16',
real tensors '<f8', C-order, shapes recorded in the manifests.

Channels are (m_t, n_sc) complex matrices; their flattened form used by the
bases is column-major (antenna index fastest), so basis column j reshapes to
a channel matrix with order='F'.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataFormatError

DATASET_FORMAT = "ebcast-dataset-v1"
STORE_FORMAT = "ebcast-ebstore-v1"
_DTYPES = {"c16": np.dtype("<c16"), "f8": np.dtype("<f8")}


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _read_tensor(path: Path, shape, code: str, sha256: str) -> np.ndarray:
    if code not in _DTYPES:
        raise DataFormatError(f"{path}: unknown dtype code {code!r}")
    if not path.is_file():
        raise DataFormatError(f"missing tensor file {path}")
    if _sha256(path) != sha256:
        raise DataFormatError(f"{path}: checksum mismatch")
    raw = path.read_bytes()
    dtype = _DTYPES[code]
    expected = int(np.prod(shape)) * dtype.itemsize
    if len(raw) != expected:
        raise DataFormatError(
            f"{path}: expected {expected} bytes for shape {tuple(shape)}, "
            f"found {len(raw)}")
    return np.frombuffer(raw, dtype=dtype).reshape(tuple(shape)).copy()


@dataclass
class Split:
    """Arrays of one dataset split."""

    name: str
    h: np.ndarray      # (n, steps, m_t, n_sc) complex
    h0: np.ndarray     # (n, steps, m_t, n_sc) complex
    mask: np.ndarray   # (n, m_t, n_sc) float
    records: list


class DatasetDir:
    """Lazy view over an exported dataset directory."""

    def __init__(self, root):
        self.root = Path(root)
        manifest_path = self.root / "manifest.json"
        if not manifest_path.is_file():
            raise DataFormatError(f"{self.root}: missing manifest.json")
        self.manifest = json.loads(manifest_path.read_text(encoding="utf-8"))
        if self.manifest.get("format") != DATASET_FORMAT:
            raise DataFormatError(
                f"{self.root}: unexpected dataset format "
                f"{self.manifest.get('format')!r}")
        self.m_t = (self.manifest["array"]["m_rows"]
                    * self.manifest["array"]["m_cols"])
        self.n_sc = self.manifest["ofdm"]["n_subcarriers"]
        self.time_steps = self.manifest["time"]["steps"]
        self.time_step_s = self.manifest["time"]["step_s"]
        store_rel = self.manifest["eb_store"]["path"]
        self._store_root = self.root / store_rel
        store_manifest = self._store_root / "manifest.json"
        if not store_manifest.is_file():
            raise DataFormatError(f"{self._store_root}: missing manifest.json")
        self._store = json.loads(store_manifest.read_text(encoding="utf-8"))
        if self._store.get("format") != STORE_FORMAT:
            raise DataFormatError(
                f"{self._store_root}: unexpected store format "
                f"{self._store.get('format')!r}")
        self._bases: dict[tuple[int, int], np.ndarray] = {}

    @property
    def split_names(self) -> tuple:
        return tuple(self.manifest["splits"])

    def split(self, name: str) -> Split:
        if name not in self.manifest["splits"]:
            raise DataFormatError(f"{self.root}: no split named {name!r}")
        entry = self.manifest["splits"][name]
        arrays = {}
        for key, f in entry["files"].items():
            arrays[key] = _read_tensor(self.root / f["file"], f["shape"],
                                       f["dtype"], f["sha256"])
        for key in ("h", "h0", "mask"):
            if key not in arrays:
                raise DataFormatError(f"{self.root}: split {name!r} lacks {key}")
        if arrays["h"].shape[0] != entry["count"]:
            raise DataFormatError(
                f"{self.root}: split {name!r} count disagrees with tensors")
        return Split(name, arrays["h"], arrays["h0"], arrays["mask"],
                     entry["records"])

    def basis(self, cell: tuple[int, int]) -> np.ndarray:
        """(N_H, n_b) complex orthonormal basis of one cell, cached."""
        cell = (int(cell[0]), int(cell[1]))
        if cell not in self._bases:
            key = f"{cell[0]},{cell[1]}"
            cells = self._store["cells"]
            if key not in cells:
                raise DataFormatError(f"{self._store_root}: no basis for cell {key}")
            entry = cells[key]
            self._bases[cell] = _read_tensor(
                self._store_root / entry["file"], entry["shape"], "c16",
                entry["sha256"])
        return self._bases[cell]

    @property
    def n_basis(self) -> int:
        entry = next(iter(self._store["cells"].values()))
        return int(entry["shape"][1])


def complex_to_planes(x: np.ndarray) -> np.ndarray:
    """(..., m, n) complex -> (..., 2, m, n) float32 real/imag planes."""
    return np.stack([x.real, x.imag], axis=-3).astype(np.float32)


def planes_to_complex(x: np.ndarray) -> np.ndarray:
    """Inverse of complex_to_planes along the plane axis."""
    if x.shape[-3] != 2:
        raise DataFormatError(f"expected a 2-plane axis, got shape {x.shape}")
    return x[..., 0, :, :] + 1j * x[..., 1, :, :]


def basis_planes(basis: np.ndarray, m_t: int, n_sc: int) -> np.ndarray:
    """(N_H, n_b) complex basis -> (2*n_b, m_t, n_sc) float32 planes.

    Column j unflattens column-major to planes 2j (real) and 2j+1 (imag).
    """
    n_flat, n_b = basis.shape
    if n_flat != m_t * n_sc:
        raise DataFormatError(
            f"basis rows {n_flat} do not match m_t*n_sc = {m_t * n_sc}")
    planes = np.empty((2 * n_b, m_t, n_sc), dtype=np.float32)
    for j in range(n_b):
        mat = basis[:, j].reshape((m_t, n_sc), order="F")
        planes[2 * j] = mat.real
        planes[2 * j + 1] = mat.imag
    return planes


@dataclass
class PresentArrays:
    """Stacked tensors for the present-CSI task, ready for batching.

    eb_bank holds one plane tensor per distinct cell; cell_index maps each
    record into it.
    """

    h0: np.ndarray          # (n, 2, m_t, n_sc) float32
    mask: np.ndarray        # (n, 1, m_t, n_sc) float32
    target: np.ndarray      # (n, 2, m_t, n_sc) float32, whole channel
    target_complex: np.ndarray  # (n, m_t, n_sc) complex
    cell_index: np.ndarray  # (n,) int64 into eb_bank
    eb_bank: np.ndarray     # (n_cells, 2*n_b, m_t, n_sc) float32

    def __len__(self):
        return self.h0.shape[0]


@dataclass
class SequenceArrays:
    """Stacked tensors for the future-CSI task: a T-step observation history
    plus whole-channel targets at the last history step and one step after."""

    h0_seq: np.ndarray          # (n, T, 2, m_t, n_sc) float32
    mask: np.ndarray            # (n, 1, m_t, n_sc) float32
    target_present: np.ndarray  # (n, 2, m_t, n_sc) float32
    target_future: np.ndarray   # (n, 2, m_t, n_sc) float32
    present_complex: np.ndarray
    future_complex: np.ndarray
    cell_index: np.ndarray
    eb_bank: np.ndarray

    def __len__(self):
        return self.h0_seq.shape[0]


def _eb_bank(ds: DatasetDir, records) -> tuple[np.ndarray, np.ndarray]:
    cells = []
    index_of = {}
    cell_index = np.empty(len(records), dtype=np.int64)
    for i, rec in enumerate(records):
        cell = (int(rec["cell"][0]), int(rec["cell"][1]))
        if cell not in index_of:
            index_of[cell] = len(cells)
            cells.append(cell)
        cell_index[i] = index_of[cell]
    bank = np.stack([basis_planes(ds.basis(c), ds.m_t, ds.n_sc)
                     for c in cells])
    return cell_index, bank


def present_arrays(ds: DatasetDir, split_name: str) -> PresentArrays:
    """Present-task view of a split: the last exported time step."""
    split = ds.split(split_name)
    step = ds.time_steps - 1
    cell_index, bank = _eb_bank(ds, split.records)
    return PresentArrays(
        h0=complex_to_planes(split.h0[:, step]),
        mask=split.mask[:, None, :, :].astype(np.float32),
        target=complex_to_planes(split.h[:, step]),
        target_complex=split.h[:, step],
        cell_index=cell_index,
        eb_bank=bank,
    )


def sequence_arrays(ds: DatasetDir, split_name: str, history: int) -> SequenceArrays:
    """Future-task view: steps [0, history) observed, whole channels at
    steps history-1 (present) and history (future)."""
    if ds.time_steps < history + 1:
        raise DataFormatError(
            f"future task needs {history + 1} exported time steps, dataset "
            f"has {ds.time_steps}")
    split = ds.split(split_name)
    cell_index, bank = _eb_bank(ds, split.records)
    h0_seq = complex_to_planes(split.h0[:, :history])
    return SequenceArrays(
        h0_seq=h0_seq,
        mask=split.mask[:, None, :, :].astype(np.float32),
        target_present=complex_to_planes(split.h[:, history - 1]),
        target_future=complex_to_planes(split.h[:, history]),
        present_complex=split.h[:, history - 1],
        future_complex=split.h[:, history],
        cell_index=cell_index,
        eb_bank=bank,
    )
