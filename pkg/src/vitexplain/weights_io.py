"""Weight container file: readable header, raw float32 payload.

Layout:

    VITEXPLAIN-WEIGHTS v1\n
    config image_size=32 patch_size=8 n_layers=2 n_heads=2 embed_dim=32 mlp_dim=64 n_classes=3\n
    <name> <dtype-tag> <comma-separated-shape> <byte-offset> <byte-length>\n
    ...one line per tensor...
    \n
    <raw little-endian float32 values, row-major, concatenated>

Offsets are relative to the first payload byte (right after the blank line).
Only the ``f32`` dtype tag exists in v1. Anything else in the header
(unknown magic, unknown config key, a record line with extra fields) is
rejected as a version mismatch rather than guessed at.
"""

from __future__ import annotations

import numpy as np

from .model import ViTConfig, ViTWeights, param_shapes

MAGIC = "VITEXPLAIN-WEIGHTS v1"
_CONFIG_KEYS = ("image_size", "patch_size", "n_layers", "n_heads",
                "embed_dim", "mlp_dim", "n_classes")


class WeightFormatError(ValueError):
    """Raised for any malformed, truncated or mismatched weight container."""


def save_weights(weights: ViTWeights, path: str) -> None:
    """Write the container; float64 weights are stored as float32."""
    cfg = weights.config
    records = []
    payload = bytearray()
    for name, arr in weights.params.items():
        data = np.ascontiguousarray(arr, dtype="<f4").tobytes()
        shape = ",".join(str(s) for s in arr.shape)
        records.append(f"{name} f32 {shape} {len(payload)} {len(data)}")
        payload.extend(data)

    config_line = "config " + " ".join(
        f"{k}={getattr(cfg, k)}" for k in _CONFIG_KEYS)
    header = "\n".join([MAGIC, config_line, *records, "", ""])
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(bytes(payload))


def _parse_config(line: str) -> ViTConfig:
    parts = line.split()
    if not parts or parts[0] != "config":
        raise WeightFormatError(f"expected config line, got {line!r}")
    kv: dict[str, int] = {}
    for item in parts[1:]:
        key, _, value = item.partition("=")
        if key not in _CONFIG_KEYS:
            raise WeightFormatError(
                f"unknown config field {key!r}; file needs a newer reader "
                f"than format version 1")
        try:
            kv[key] = int(value)
        except ValueError:
            raise WeightFormatError(f"config field {key!r} has non-integer "
                                    f"value {value!r}") from None
    missing = [k for k in _CONFIG_KEYS if k not in kv]
    if missing:
        raise WeightFormatError(f"config line missing fields: {missing}")
    return ViTConfig(**kv)


def load_weights(path: str) -> ViTWeights:
    """Read a container back; round-trips :func:`save_weights` bit-exactly."""
    with open(path, "rb") as fh:
        blob = fh.read()

    sep = blob.find(b"\n\n")
    if sep < 0:
        raise WeightFormatError("no blank line terminating the header")
    try:
        header_lines = blob[:sep].decode("ascii").split("\n")
    except UnicodeDecodeError:
        raise WeightFormatError("header is not ASCII text") from None
    payload = blob[sep + 2:]

    if not header_lines or header_lines[0] != MAGIC:
        raise WeightFormatError(
            f"bad magic line {header_lines[0] if header_lines else ''!r}; "
            f"expected {MAGIC!r}")
    if len(header_lines) < 2:
        raise WeightFormatError("header ends before the config line")
    config = _parse_config(header_lines[1])

    params: dict[str, np.ndarray] = {}
    for line in header_lines[2:]:
        fields = line.split()
        if len(fields) != 5:
            raise WeightFormatError(
                f"tensor record {line!r} has {len(fields)} fields, expected "
                f"5; file needs a newer reader than format version 1")
        name, dtag, shape_s, off_s, length_s = fields
        if dtag != "f32":
            raise WeightFormatError(f"tensor {name!r}: unknown dtype tag "
                                    f"{dtag!r} (v1 supports f32 only)")
        try:
            shape = tuple(int(s) for s in shape_s.split(","))
            offset, length = int(off_s), int(length_s)
        except ValueError:
            raise WeightFormatError(
                f"tensor {name!r}: non-numeric shape/offset/length") from None
        if length != int(np.prod(shape)) * 4:
            raise WeightFormatError(
                f"tensor {name!r}: length {length} does not match shape "
                f"{shape}")
        if offset + length > len(payload):
            raise WeightFormatError(
                f"tensor {name!r}: record spans bytes "
                f"[{offset}, {offset + length}) but payload has only "
                f"{len(payload)} bytes (truncated file?)")
        arr = np.frombuffer(payload[offset:offset + length],
                            dtype="<f4").reshape(shape).copy()
        if not np.all(np.isfinite(arr)):
            raise WeightFormatError(f"tensor {name!r} contains non-finite "
                                    f"values")
        params[name] = arr

    expected = param_shapes(config)
    if set(params) != set(expected):
        missing = sorted(set(expected) - set(params))
        extra = sorted(set(params) - set(expected))
        raise WeightFormatError(f"tensor set does not match config: "
                                f"missing={missing} extra={extra}")
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise WeightFormatError(
                f"tensor {name!r} has shape {params[name].shape}, config "
                f"requires {shape}")
    return ViTWeights(config, params)
