"""Trainable weights and their checkpoint format.

No parameter depends on the node count N, so one instance serves skeletons
of any size. Per-skeleton posterior offsets live in :class:`SkeletonOffsets`
and are never part of a checkpoint.

Checkpoint layout: an 8-byte little-endian header length, a UTF-8 JSON
header (format_version, hyperparameters, ordered name/shape list), the
parameter blocks as little-endian float64 in header order, then a 4-byte
CRC32 of everything before it.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from pathlib import Path

import numpy as np

from bicd.errors import ConfigError, DataError
from bicd.numerics.rng import RngStream

CHECKPOINT_VERSION = "1"
_F64 = np.dtype("<f8")


def _shapes(dim: int, hidden: int, hidden_att: int, noise_latent: bool) -> dict[str, tuple[int, ...]]:
    D, H, Ha = dim, hidden, hidden_att
    shapes = {
        "W_Q": (D, Ha),
        "W_K": (D, Ha),
        "W_S": (D, Ha),
        "edge_bias": (),
        "W_enc": (D, H),
        "E_W1": (H, H),
        "E_b1": (H,),
        "E_W2": (H, D),
        "E_b2": (D,),
        "L_W1": (H, H),
        "L_b1": (H,),
        "L_W2": (H, D),
        "L_b2": (D,),
        "W_dec1": (D, H),
        "W_dec2": (H, D),
        "u": (D,),
        "b_u": (),
        "v": (2 * D,),
        "b_v": (),
    }
    if noise_latent:
        # Mean and log-variance heads of the Gaussian noise latent.
        shapes.update(
            {
                "M_W1": (H, H),
                "M_b1": (H,),
                "M_W2": (H, D),
                "M_b2": (D,),
                "V_W1": (H, H),
                "V_b1": (H,),
                "V_W2": (H, D),
                "V_b2": (D,),
            }
        )
    return shapes


class ModelParams:
    """Ordered mapping of parameter name to float64 array, plus sizes."""

    def __init__(self, arrays: dict[str, np.ndarray], dim: int, hidden: int, hidden_att: int, noise_latent: bool = False):
        expected = _shapes(dim, hidden, hidden_att, noise_latent)
        if set(arrays) != set(expected):
            raise ConfigError(f"parameter names do not match: {sorted(set(arrays) ^ set(expected))}")
        for name, shape in expected.items():
            if np.shape(arrays[name]) != shape:
                raise ConfigError(f"parameter {name!r} has shape {np.shape(arrays[name])}, expected {shape}")
        self.arrays = {k: np.array(arrays[k], dtype=np.float64) for k in expected}
        self.dim, self.hidden, self.hidden_att, self.noise_latent = dim, hidden, hidden_att, noise_latent

    @classmethod
    def init(
        cls,
        dim: int,
        hidden: int = 64,
        hidden_att: int = 16,
        seed: int = 0,
        noise_latent: bool = False,
        enc_init: float = 0.1,
        p0: float = 0.3,
    ) -> "ModelParams":
        """Gaussian weights with variance 1/fan_in; zero biases.

        The attention projections are further scaled by ``enc_init`` and the
        edge bias starts at logit(p0), so an untrained model sits at the prior.
        """
        if min(dim, hidden, hidden_att) < 1:
            raise ConfigError("dim, hidden and hidden_att must be positive")
        rng = RngStream(seed, (0xC0DE,))
        arrays = {}
        for name, shape in _shapes(dim, hidden, hidden_att, noise_latent).items():
            if len(shape) == 2:
                arrays[name] = rng.normal(shape, scale=1.0 / math.sqrt(shape[0]))
            elif name in ("u", "v"):
                arrays[name] = rng.normal(shape, scale=1.0 / math.sqrt(shape[0]))
            else:
                arrays[name] = np.zeros(shape)
        for name in ("W_Q", "W_K", "W_S"):
            arrays[name] *= enc_init
        arrays["edge_bias"] = np.array(math.log(p0 / (1.0 - p0)))
        return cls(arrays, dim, hidden, hidden_att, noise_latent)

    def names(self) -> list[str]:
        return list(self.arrays)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.arrays[name]

    def copy(self) -> "ModelParams":
        return ModelParams({k: v.copy() for k, v in self.arrays.items()}, self.dim, self.hidden, self.hidden_att, self.noise_latent)

    def sizes(self) -> dict:
        return {"dim": self.dim, "hidden": self.hidden, "hidden_att": self.hidden_att, "noise_latent": self.noise_latent}

    def equals(self, other: "ModelParams") -> bool:
        return self.sizes() == other.sizes() and all(
            self.arrays[k].tobytes() == other.arrays[k].tobytes() for k in self.arrays
        )

    # ------------------------------------------------------------ checkpoint

    def to_bytes(self, hyper: dict | None = None) -> bytes:
        header = {
            "format_version": CHECKPOINT_VERSION,
            "sizes": self.sizes(),
            "hyper": hyper or {},
            "params": [[k, list(v.shape)] for k, v in self.arrays.items()],
        }
        head = json.dumps(header, sort_keys=True).encode("utf-8")
        body = struct.pack("<Q", len(head)) + head + b"".join(v.astype(_F64).tobytes() for v in self.arrays.values())
        return body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)

    @classmethod
    def from_bytes(cls, data: bytes, source: str = "checkpoint") -> tuple["ModelParams", dict]:
        if len(data) < 12:
            raise DataError(f"{source}: file too short to be a checkpoint")
        body, (crc,) = data[:-4], struct.unpack("<I", data[-4:])
        if zlib.crc32(body) & 0xFFFFFFFF != crc:
            raise DataError(f"{source}: checksum mismatch")
        (hlen,) = struct.unpack("<Q", body[:8])
        header = json.loads(body[8 : 8 + hlen].decode("utf-8"))
        if header.get("format_version") != CHECKPOINT_VERSION:
            raise DataError(f"{source}: unsupported checkpoint version {header.get('format_version')!r}")
        offset = 8 + hlen
        arrays = {}
        for name, shape in header["params"]:
            count = int(np.prod(shape)) if shape else 1
            end = offset + count * _F64.itemsize
            if end > len(body):
                raise DataError(f"{source}: truncated parameter block {name!r}")
            arrays[name] = np.frombuffer(body[offset:end], dtype=_F64).reshape(shape).copy()
            offset = end
        if offset != len(body):
            raise DataError(f"{source}: {len(body) - offset} trailing bytes after parameter blocks")
        sizes = header["sizes"]
        return cls(arrays, sizes["dim"], sizes["hidden"], sizes["hidden_att"], sizes["noise_latent"]), header["hyper"]

    def save(self, path: str | Path, hyper: dict | None = None) -> None:
        Path(path).write_bytes(self.to_bytes(hyper))

    @classmethod
    def load(cls, path: str | Path) -> tuple["ModelParams", dict]:
        p = Path(path)
        if not p.is_file():
            raise DataError(f"checkpoint not found: {p}")
        return cls.from_bytes(p.read_bytes(), source=p.name)


class SkeletonOffsets:
    """Per-skeleton additive corrections to edge logits and strengths."""

    def __init__(self, n_nodes: int):
        self.arrays = {"d_logit": np.zeros((n_nodes, n_nodes)), "d_strength": np.zeros((n_nodes, n_nodes))}

    @property
    def n_nodes(self) -> int:
        return self.arrays["d_logit"].shape[0]
