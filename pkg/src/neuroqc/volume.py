"""3D microscope volumes, reconstruction rasterization, and patch cropping.

Volumes are dense unsigned 8- or 16-bit grids stored as numpy arrays of
shape (nz, ny, nx), so the raw on-disk layout (x fastest, then y, then z)
maps directly onto a C-order array. A volume's `origin` places it in the
global SWC coordinate space; all point-to-voxel conversions round
half-away-from-zero.

Raw volumes pair a `.raw` file with a `.json` sidecar:

    {"dims": [nx, ny, nz], "dtype": "u8"|"u16",
     "origin": [x0, y0, z0], "endianness": "little"}

Multi-page grayscale TIFF stacks (pages = z slices) are also readable; an
optional sidecar of the same stem supplies the origin, which otherwise
defaults to (0, 0, 0).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import tifffile

from . import _kernels
from .errors import VolumeFormatError
from .swc import NeuronPoint, NeuronReconstruction

logger = logging.getLogger(__name__)

PATCH_SIZE = 32

_DTYPES = {"u8": np.uint8, "u16": np.uint16}
_DTYPE_TAGS = {np.dtype(np.uint8): "u8", np.dtype(np.uint16): "u16"}
_DTYPE_MAX = {"u8": 255, "u16": 65535}


def _iround(values: np.ndarray) -> np.ndarray:
    """Half-away-from-zero rounding to int64."""
    v = np.asarray(values, dtype=np.float64)
    return (np.sign(v) * np.floor(np.abs(v) + 0.5)).astype(np.int64)


@dataclass
class Volume:
    """A dense scalar grid with its placement in global coordinate space."""

    voxels: np.ndarray  # (nz, ny, nx)
    origin: tuple[int, int, int] = (0, 0, 0)
    volume_id: str = ""

    def __post_init__(self):
        if self.voxels.ndim != 3:
            raise VolumeFormatError("volume grid must be 3-dimensional")
        if self.voxels.dtype not in _DTYPE_TAGS:
            raise VolumeFormatError(
                f"unsupported voxel dtype {self.voxels.dtype} (need uint8/uint16)"
            )
        self.origin = tuple(int(v) for v in self.origin)

    @property
    def dims(self) -> tuple[int, int, int]:
        """(nx, ny, nz)."""
        nz, ny, nx = self.voxels.shape
        return (nx, ny, nz)

    @property
    def dtype_tag(self) -> str:
        return _DTYPE_TAGS[self.voxels.dtype]

    @property
    def dtype_max(self) -> int:
        return _DTYPE_MAX[self.dtype_tag]

    def voxel(self, x: int, y: int, z: int) -> int:
        return int(self.voxels[z, y, x])


def _sidecar_path(path: Path) -> Path:
    return path.with_suffix(".json")


def _read_sidecar(path: Path) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            meta = json.load(fh)
    except FileNotFoundError:
        raise VolumeFormatError(f"missing volume sidecar {path}") from None
    except json.JSONDecodeError as exc:
        raise VolumeFormatError(f"unreadable volume sidecar {path}: {exc}") from None
    return meta


def load_volume(path) -> Volume:
    """Load a raw+sidecar or TIFF volume.

    `path` may name the raw file, its sidecar, or a .tif/.tiff stack.
    """
    path = Path(path)
    if path.suffix.lower() in (".tif", ".tiff"):
        return _load_tiff(path)
    return _load_raw(path)


def _load_raw(path: Path) -> Volume:
    sidecar = _sidecar_path(path)
    raw_path = path.with_suffix(".raw")
    meta = _read_sidecar(sidecar)
    for key in ("dims", "dtype", "origin"):
        if key not in meta:
            raise VolumeFormatError(f"sidecar {sidecar} lacks required key '{key}'")
    if meta.get("endianness", "little") != "little":
        raise VolumeFormatError("only little-endian raw volumes are supported")
    tag = meta["dtype"]
    if tag not in _DTYPES:
        raise VolumeFormatError(f"unsupported dtype tag '{tag}' (need u8/u16)")
    nx, ny, nz = (int(v) for v in meta["dims"])
    dtype = np.dtype(_DTYPES[tag]).newbyteorder("<")
    try:
        data = np.fromfile(raw_path, dtype=dtype)
    except FileNotFoundError:
        raise VolumeFormatError(f"missing raw volume file {raw_path}") from None
    if data.size != nx * ny * nz:
        raise VolumeFormatError(
            f"{raw_path}: file holds {data.size} voxels but sidecar "
            f"declares dims {nx}x{ny}x{nz} = {nx * ny * nz}"
        )
    voxels = data.astype(_DTYPES[tag]).reshape(nz, ny, nx)
    return Volume(voxels, origin=tuple(meta["origin"]), volume_id=path.stem)


def _load_tiff(path: Path) -> Volume:
    try:
        data = tifffile.imread(path)
    except FileNotFoundError:
        raise VolumeFormatError(f"missing TIFF volume {path}") from None
    if data.ndim == 2:
        data = data[None, :, :]
    if data.ndim != 3:
        raise VolumeFormatError(
            f"{path}: expected grayscale z-stack, got shape {data.shape}"
        )
    if data.dtype not in (np.uint8, np.uint16):
        raise VolumeFormatError(
            f"{path}: unsupported bit depth {data.dtype} (need uint8/uint16)"
        )
    origin = (0, 0, 0)
    sidecar = _sidecar_path(path)
    if sidecar.exists():
        meta = _read_sidecar(sidecar)
        origin = tuple(meta.get("origin", origin))
    return Volume(np.ascontiguousarray(data), origin=origin, volume_id=path.stem)


def save_volume(vol: Volume, path) -> tuple[Path, Path]:
    """Write a volume as raw bytes plus sidecar; returns (raw, sidecar) paths."""
    path = Path(path)
    raw_path = path.with_suffix(".raw")
    sidecar = _sidecar_path(path)
    vol.voxels.astype(vol.voxels.dtype.newbyteorder("<")).tofile(raw_path)
    meta = {
        "dims": list(vol.dims),
        "dtype": vol.dtype_tag,
        "origin": list(vol.origin),
        "endianness": "little",
    }
    with open(sidecar, "w", encoding="utf-8") as fh:
        json.dump(meta, fh)
        fh.write("\n")
    return raw_path, sidecar


def rasterize(r: NeuronReconstruction, vol: Volume) -> np.ndarray:
    """Binary map of the reconstruction on the volume grid.

    Every point's voxel and every voxel on the 26-connected walk between a
    point and its parent is set to 1. Voxels falling outside the grid are
    clipped; points whose own voxel is out of bounds are counted and
    reported via a warning.
    """
    nz, ny, nx = vol.voxels.shape
    grid = np.zeros((nz, ny, nx), dtype=np.uint8)
    vox = _iround(r.xyz - np.asarray(vol.origin, dtype=np.float64))
    inside = (
        (vox[:, 0] >= 0) & (vox[:, 0] < nx)
        & (vox[:, 1] >= 0) & (vox[:, 1] < ny)
        & (vox[:, 2] >= 0) & (vox[:, 2] < nz)
    )
    n_outside = int(len(r) - inside.sum())
    if n_outside:
        logger.warning(
            "rasterize: %d of %d points of %s fall outside volume %s",
            n_outside, len(r), r.key, vol.volume_id or "<unnamed>",
        )
    has_parent = r.parents >= 0
    parent_rows = np.array(
        [r.row_of(int(p)) for p in r.parents[has_parent]], dtype=np.intp
    )
    seg_a = np.concatenate([vox[has_parent], vox[~has_parent]])
    seg_b = np.concatenate([vox[parent_rows], vox[~has_parent]])
    if len(seg_a):
        _kernels.paint_segments(grid, seg_a, seg_b)
    return grid


@dataclass
class Patch:
    """A two-channel cube around one point: intensity (0) and binary map (1).

    `data` has shape (size, size, size, 2) with axes (z, y, x, channel) and
    float32 values; `corner` is the global (x, y, z) coordinate of the
    data[0, 0, 0] voxel.
    """

    data: np.ndarray
    center: tuple[str, int] = ("", 0)  # (reconstruction key, point id)
    label: int = 0
    volume_id: str = ""
    corner: tuple[int, int, int] = (0, 0, 0)

    def validate(self) -> None:
        size = self.data.shape[0]
        if self.data.shape != (size, size, size, 2):
            raise ValueError(f"bad patch shape {self.data.shape}")
        if self.data.dtype != np.float32:
            raise ValueError(f"patch data must be float32, got {self.data.dtype}")
        ch0 = self.data[..., 0]
        ch1 = self.data[..., 1]
        if ch0.min() < 0.0 or ch0.max() > 1.0:
            raise ValueError("intensity channel outside [0, 1]")
        if not np.isin(ch1, (0.0, 1.0)).all():
            raise ValueError("binary channel contains values other than 0/1")


def crop_patch(
    vol: Volume,
    binary_map: np.ndarray,
    center: NeuronPoint,
    size: int = PATCH_SIZE,
    recon_key: str = "",
    label: int = 0,
) -> Patch:
    """Crop the two-channel cube of side `size` centered on a point.

    The crop corner is round(center - origin) - size/2 on each axis;
    out-of-volume voxels are zero-padded. Intensity is normalized by the
    dtype maximum (float32 division).
    """
    if size % 2 != 0:
        raise ValueError(f"patch size must be even, got {size}")
    if binary_map.shape != vol.voxels.shape:
        raise ValueError("binary map dims differ from volume dims")
    nz, ny, nx = vol.voxels.shape
    c_local = _iround(
        np.array([center.x, center.y, center.z]) - np.asarray(vol.origin, float)
    )
    corner = c_local - size // 2  # (x, y, z) in volume-local coords
    lo = np.maximum(corner, 0)
    hi = np.minimum(corner + size, np.array([nx, ny, nz]))
    data = np.zeros((size, size, size, 2), dtype=np.float32)
    if np.all(lo < hi):
        sz = slice(int(lo[2]), int(hi[2]))
        sy = slice(int(lo[1]), int(hi[1]))
        sx = slice(int(lo[0]), int(hi[0]))
        dst = tuple(
            slice(int(l - c), int(l - c + (h - l)))
            for l, h, c in ((lo[2], hi[2], corner[2]),
                            (lo[1], hi[1], corner[1]),
                            (lo[0], hi[0], corner[0]))
        )
        intensity = vol.voxels[sz, sy, sx].astype(np.float32)
        intensity /= np.float32(vol.dtype_max)
        data[dst[0], dst[1], dst[2], 0] = intensity
        data[dst[0], dst[1], dst[2], 1] = binary_map[sz, sy, sx].astype(np.float32)
    else:
        logger.warning(
            "crop_patch: point %d of %s lies entirely outside volume %s; "
            "emitting an all-zero patch",
            center.id, recon_key or "<recon>", vol.volume_id or "<unnamed>",
        )
    global_corner = corner + np.asarray(vol.origin, dtype=np.int64)
    return Patch(
        data=data,
        center=(recon_key, center.id),
        label=label,
        volume_id=vol.volume_id,
        corner=tuple(int(v) for v in global_corner),
    )
