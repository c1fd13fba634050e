"""Binary policy checkpoints.

Layout (little endian): 8-byte magic, uint32 format version, uint32 flags
(bit 0: shared trunk, bit 1: trained with the inductive bias), uint32 act_dim, uint32 count + uint32 policy layer
sizes, uint32 count + uint32 value layer sizes, then float64 observation
shift and scale (obs_dim each) and the flat parameter vector, row-major.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .network import ActorCritic

MAGIC = b"GRIPFRC\x00"
VERSION = 1


class CheckpointError(ValueError):
    pass


def _sizes_bytes(sizes) -> bytes:
    return struct.pack(f"<I{len(sizes)}I", len(sizes), *sizes)


def checkpoint_save(path, model: ActorCritic) -> None:
    flags = int(model.shared_trunk) | (int(model.inductive_bias) << 1)
    header = MAGIC + struct.pack("<III", VERSION, flags, model.act_dim)
    header += _sizes_bytes(model.policy_sizes) + _sizes_bytes(model.value_sizes)
    body = (np.asarray(model.obs_shift, "<f8").tobytes() + np.asarray(model.obs_scale, "<f8").tobytes()
            + np.asarray(model.theta, "<f8").tobytes())
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(header + body)
    tmp.replace(path)


class _Reader:
    def __init__(self, data: bytes, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint "
                                  f"(need {self.pos + n} bytes, file has {len(self.data)})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def uint(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def sizes(self) -> list[int]:
        n = self.uint()
        return list(struct.unpack(f"<{n}I", self.take(4 * n)))

    def floats(self, n: int) -> np.ndarray:
        return np.frombuffer(self.take(8 * n), dtype="<f8").astype(float)


def checkpoint_load(path, obs_dim: int | None = None) -> ActorCritic:
    """Load a checkpoint; ``obs_dim`` (if given) must match the stored input size."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    r = _Reader(data, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise CheckpointError(f"{path}: not a policy checkpoint")
    version = r.uint()
    if version != VERSION:
        raise CheckpointError(f"{path}: format version {version}, expected {VERSION}")
    flags, act_dim = r.uint(), r.uint()
    if flags & ~0b11:
        raise CheckpointError(f"{path}: unknown flag bits {flags:#x}")
    shared, ib = bool(flags & 1), bool(flags & 2)
    policy_sizes, value_sizes = r.sizes(), r.sizes()
    if len(policy_sizes) < 2:
        raise CheckpointError(f"{path}: invalid layer sizes {policy_sizes}")
    found = policy_sizes[0]
    if obs_dim is not None and found != obs_dim:
        raise CheckpointError(f"{path}: observation dimension mismatch, "
                              f"expected {obs_dim}, found {found}")
    hidden = policy_sizes[1:-1]
    model = ActorCritic(found, act_dim, hidden, shared)
    if model.policy_sizes != policy_sizes or model.value_sizes != value_sizes:
        raise CheckpointError(f"{path}: inconsistent layer sizes {policy_sizes} / {value_sizes}")
    shift, scale = r.floats(found), r.floats(found)
    theta = r.floats(model.size)
    if r.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - r.pos} trailing bytes")
    return ActorCritic(found, act_dim, hidden, shared, theta, shift, scale, inductive_bias=ib)
