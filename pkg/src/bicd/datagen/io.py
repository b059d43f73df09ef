"""On-disk dataset layout.

``manifest.json`` lists splits, per-skeleton sizes and a CRC32 for every other
file. Each skeleton ``m`` has ``skeleton_<m>.json`` (A and B, row-major) and
four raw little-endian float32 tensors: ``samples_<m>.f32`` [n,N,D],
``confounders_<m>.f32`` [n,K,D], ``ctrue_<m>.f32`` [n,N,D], ``etrue_<m>.f32``
[n,N,D]. Tensors are held as float64 in memory and rounded once on write.
"""

from __future__ import annotations

import hashlib
import json
import zlib
from pathlib import Path

import numpy as np

from bicd.datagen.dataset import FORMAT_VERSION, DatasetBundle
from bicd.datagen.generator import SampleRecord, SkeletonSpec
from bicd.errors import DataError

_F32 = np.dtype("<f4")
# file prefix -> (SampleRecord field, row extent key)
_TENSORS = {
    "samples": ("X", "N"),
    "confounders": ("L_true", "K"),
    "ctrue": ("C_true", "N"),
    "etrue": ("E_true", "N"),
}


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8")


def _crc(data: bytes) -> str:
    return f"{zlib.crc32(data) & 0xFFFFFFFF:08x}"


def manifest_hash(directory: str | Path) -> str:
    """SHA-256 of the manifest bytes (which embed every file's CRC)."""
    return hashlib.sha256((Path(directory) / "manifest.json").read_bytes()).hexdigest()


def write_dataset(bundle: DatasetBundle, directory: str | Path) -> Path:
    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {}
    for info in bundle.manifest["skeleton_info"]:
        m = info["id"]
        spec = bundle.skeletons[m]
        skel = {
            "id": m,
            "A": spec.A.tolist(),
            "B": spec.B.tolist(),
            "noise_sigma": spec.noise_sigma,
            "confounder_parent": spec.confounder_parent.tolist(),
            "confounder_parent_weight": spec.confounder_parent_weight.tolist(),
        }
        payloads = {f"skeleton_{m}.json": _dump_json(skel)}
        recs = bundle.samples[m]
        for prefix, (attr, _) in _TENSORS.items():
            arr = np.stack([getattr(r, attr) for r in recs]).astype(_F32)
            payloads[f"{prefix}_{m}.f32"] = arr.tobytes(order="C")
        for fname, data in payloads.items():
            (out / fname).write_bytes(data)
            files[fname] = _crc(data)
    manifest = dict(bundle.manifest)
    manifest["files"] = files
    (out / "manifest.json").write_bytes(_dump_json(manifest))
    return out


def _read_checked(path: Path, crc: str | None, expected_size: int | None = None) -> bytes:
    if not path.is_file():
        raise DataError(f"missing dataset file {path.name}")
    data = path.read_bytes()
    if expected_size is not None and len(data) != expected_size:
        raise DataError(
            f"shape mismatch in {path.name}: expected {expected_size} bytes from the manifest, found {len(data)}"
        )
    if crc is None:
        raise DataError(f"{path.name} is not listed in the manifest")
    if _crc(data) != crc:
        raise DataError(f"checksum mismatch in {path.name}")
    return data


def read_dataset(directory: str | Path) -> DatasetBundle:
    root = Path(directory)
    mpath = root / "manifest.json"
    if not mpath.is_file():
        raise DataError(f"no manifest.json in {root}")
    try:
        manifest = json.loads(mpath.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise DataError(f"unreadable manifest: {exc}") from exc
    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise DataError(f"unsupported dataset format version {version!r} (this reader supports {FORMAT_VERSION!r})")
    files = manifest.get("files", {})
    D = int(manifest["D"])
    skeletons, samples = {}, {}
    for info in manifest["skeleton_info"]:
        m, n = info["id"], info["n_samples"]
        name = f"skeleton_{m}.json"
        skel = json.loads(_read_checked(root / name, files.get(name)))
        A = np.array(skel["A"], dtype=np.float64).reshape(info["N"], info["N"])
        B = np.array(skel["B"], dtype=np.float64).reshape(info["N"], info["K"])
        spec = SkeletonSpec(
            m,
            A,
            B,
            float(skel["noise_sigma"]),
            np.array(skel["confounder_parent"], dtype=np.int64).reshape(info["K"]),
            np.array(skel["confounder_parent_weight"], dtype=np.float64).reshape(info["K"]),
        )
        tensors = {}
        for prefix, (attr, rows) in _TENSORS.items():
            fname = f"{prefix}_{m}.f32"
            shape = (n, info[rows], D)
            raw = _read_checked(root / fname, files.get(fname), int(np.prod(shape)) * _F32.itemsize)
            tensors[attr] = np.frombuffer(raw, dtype=_F32).reshape(shape).astype(np.float64)
        skeletons[m] = spec
        samples[m] = [SampleRecord(*(tensors[a][i] for a in ("X", "L_true", "E_true", "C_true"))) for i in range(n)]
    manifest.pop("files", None)
    return DatasetBundle(manifest, skeletons, samples)
