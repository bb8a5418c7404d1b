# kdda/nets/checkpoint.py
"""
Single-file network checkpoints.

Byte layout:
    4 bytes   magic b"KDDA"
    4 bytes   little-endian uint32 header length H
    H bytes   UTF-8 JSON header {"format_version": 1, "seed": int|null, "spec": {...}}
    rest      little-endian float64 parameters in layer order; per layer the
              weight (row-major in_dim x out_dim) then the bias (out_dim)
"""
import json
import struct
from pathlib import Path
from typing import Optional, Union

import numpy as np
from aws_lambda_powertools import Logger

from kdda.nets.models import LayerParams, NetworkSpec, NetworkState, SpecError
from kdda.tensor_ad import DiffTensor

logger = Logger(service="kdda", child=True)

MAGIC = b"KDDA"
FORMAT_VERSION = 1
_HEADER_LEN = struct.Struct("<I")


class CheckpointError(ValueError):
    """A checkpoint is corrupt or does not match the expected network."""
    pass


def save_state(state: NetworkState, spec: NetworkSpec, path: Union[str, Path]) -> Path:
    path = Path(path)
    if set(state.params) != set(range(len(spec.layers))):
        raise CheckpointError(f"state holds layers {sorted(state.params)} but spec has {len(spec.layers)}")

    header = json.dumps(
        {"format_version": FORMAT_VERSION, "seed": state.init_seed, "spec": spec.to_dict()},
        sort_keys=True,
    ).encode("utf-8")
    chunks = []
    for i, layer in enumerate(spec.layers):
        p = state.params[i]
        if p.weight.shape != (layer.in_dim, layer.out_dim) or p.bias.shape != (layer.out_dim,):
            raise CheckpointError(f"layer {i}: parameter shapes do not match {layer.describe()}")
        chunks.append(np.ascontiguousarray(p.weight.data, dtype="<f8").tobytes())
        chunks.append(np.ascontiguousarray(p.bias.data, dtype="<f8").tobytes())

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(MAGIC + _HEADER_LEN.pack(len(header)) + header + b"".join(chunks))
    logger.info("Checkpoint written", extra={"path": str(path), "layers": len(spec.layers)})
    return path


def _first_mismatch(found: NetworkSpec, expected: NetworkSpec) -> Optional[str]:
    for i in range(max(len(found.layers), len(expected.layers))):
        have = found.layers[i].describe() if i < len(found.layers) else "missing"
        want = expected.layers[i].describe() if i < len(expected.layers) else "missing"
        if have != want:
            return f"layer {i}: checkpoint has {have}, expected {want}"
    if found.tap_layers != expected.tap_layers:
        return f"tap layers differ: checkpoint {list(found.tap_layers)}, expected {list(expected.tap_layers)}"
    if found.class_count != expected.class_count:
        return f"class count differs: checkpoint {found.class_count}, expected {expected.class_count}"
    return None


def load_state(path: Union[str, Path], expected_spec: Optional[NetworkSpec] = None) -> tuple[NetworkSpec, NetworkState]:
    """
    Reads a checkpoint. When `expected_spec` is given, the stored architecture
    must match it exactly.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except FileNotFoundError:
        raise CheckpointError(f"checkpoint not found: {path}")

    if len(raw) < 8 or raw[:4] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint (bad magic)")
    (header_len,) = _HEADER_LEN.unpack(raw[4:8])
    if 8 + header_len > len(raw):
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(raw[8:8 + header_len].decode("utf-8"))
        spec = NetworkSpec.from_dict(header["spec"])
    except (UnicodeDecodeError, json.JSONDecodeError, KeyError, TypeError, SpecError) as e:
        raise CheckpointError(f"{path}: corrupt header ({e})") from e
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {header.get('format_version')}")

    if expected_spec is not None:
        mismatch = _first_mismatch(spec, expected_spec)
        if mismatch:
            raise CheckpointError(f"{path}: {mismatch}")

    payload = raw[8 + header_len:]
    expected_bytes = spec.param_count() * 8
    if len(payload) != expected_bytes:
        raise CheckpointError(f"{path}: payload has {len(payload)} bytes, expected {expected_bytes}")
    values = np.frombuffer(payload, dtype="<f8").astype(np.float64)
    if not np.all(np.isfinite(values)):
        raise CheckpointError(f"{path}: payload contains non-finite values")

    params = {}
    offset = 0
    for i, layer in enumerate(spec.layers):
        w_size = layer.in_dim * layer.out_dim
        weight = values[offset:offset + w_size].reshape(layer.in_dim, layer.out_dim).copy()
        offset += w_size
        bias = values[offset:offset + layer.out_dim].copy()
        offset += layer.out_dim
        params[i] = LayerParams(DiffTensor(weight, requires_grad=True), DiffTensor(bias, requires_grad=True))

    return spec, NetworkState(params, header.get("seed"))
