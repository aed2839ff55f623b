"""Binary checkpoint format: magic/version, JSON header, float32 blobs.

Layout: `UWEC` + u32 version + u64 header length + UTF-8 JSON header +
payload. The header carries the config snapshot (canonical JSON text),
epoch, seed, the parameter index (name, shape, offsets) and a SHA-256 of
the payload. Parameter values and their RMSProp accumulators are stored as
little-endian float32; loading verifies the checksum and fails closed on
any mismatch.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError

MAGIC = b"UWEC"
VERSION = 1


@dataclass
class Checkpoint:
    version: int
    epoch: int
    seed: int
    config_text: str
    params: dict  # name -> (values float32 array, opt_state float32 array)


def save_checkpoint(path, bundle, epoch, seed, config_text):
    params = bundle.parameters()
    index = []
    blobs = []
    offset = 0
    for p in params:
        values = np.ascontiguousarray(p.t.data, dtype="<f4")
        state = (np.ascontiguousarray(p.state, dtype="<f4")
                 if p.state is not None else np.zeros_like(values))
        entry = {"name": p.name, "shape": list(values.shape),
                 "offset": offset, "state_offset": offset + values.nbytes}
        index.append(entry)
        blobs.append(values.tobytes())
        blobs.append(state.tobytes())
        offset += values.nbytes + state.nbytes
    payload = b"".join(blobs)
    header = {
        "epoch": int(epoch),
        "seed": int(seed),
        "config": config_text,
        "config_sha256": hashlib.sha256(config_text.encode()).hexdigest(),
        "params": index,
        "payload_sha256": hashlib.sha256(payload).hexdigest(),
    }
    header_bytes = json.dumps(header, sort_keys=True).encode()
    with open(Path(path), "wb") as f:
        f.write(MAGIC)
        f.write(VERSION.to_bytes(4, "little"))
        f.write(len(header_bytes).to_bytes(8, "little"))
        f.write(header_bytes)
        f.write(payload)


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise DataError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 16 or raw[:4] != MAGIC:
        raise DataError(f"{path} is not a checkpoint (bad magic)")
    version = int.from_bytes(raw[4:8], "little")
    if version != VERSION:
        raise DataError(f"{path}: unsupported checkpoint version {version}")
    hlen = int.from_bytes(raw[8:16], "little")
    try:
        header = json.loads(raw[16:16 + hlen].decode())
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise DataError(f"{path}: corrupt checkpoint header: {exc}") from exc
    payload = raw[16 + hlen:]
    digest = hashlib.sha256(payload).hexdigest()
    if digest != header.get("payload_sha256"):
        raise DataError(f"{path}: checksum mismatch, refusing to load")
    params = {}
    for entry in header["params"]:
        shape = tuple(entry["shape"])
        n = int(np.prod(shape)) if shape else 1
        nbytes = 4 * n
        values = np.frombuffer(
            payload, dtype="<f4", count=n, offset=entry["offset"]).reshape(shape)
        state = np.frombuffer(
            payload, dtype="<f4", count=n, offset=entry["state_offset"]).reshape(shape)
        params[entry["name"]] = (values.copy(), state.copy())
    return Checkpoint(version=version, epoch=header["epoch"],
                      seed=header["seed"], config_text=header["config"],
                      params=params)


def restore_bundle(bundle, ckpt: Checkpoint):
    """Copy checkpoint values and optimizer state into a matching bundle."""
    own = {p.name: p for p in bundle.parameters()}
    missing = sorted(set(own) - set(ckpt.params))
    extra = sorted(set(ckpt.params) - set(own))
    if missing or extra:
        raise DataError(
            f"checkpoint/bundle mismatch; missing {missing[:3]}, extra {extra[:3]}")
    for name, (values, state) in ckpt.params.items():
        p = own[name]
        if tuple(values.shape) != tuple(p.t.shape):
            raise DataError(
                f"parameter {name}: checkpoint shape {values.shape} != {p.t.shape}")
        p.t.data = values.astype(np.float32)
        p.state = state.astype(np.float32)
    return bundle
