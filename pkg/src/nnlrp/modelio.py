"""Binary container files for models, raw tensors and dataset fixtures.

Layout (all integers little-endian)::

    magic      8 bytes   b"NNLRPM01" (model) or b"NNLRPT01" (tensor)
    length     uint64    byte count of the manifest
    manifest   UTF-8 JSON
    payload    float32 values, row-major
    crc        uint32    CRC-32 of the payload

Model manifests list nodes with their kind, predecessors, hyperparameters
and, per parameter tensor, ``offset``/``length`` (in float32 elements) and
``shape``.  Convolution weights are (out, in, kh, kw); inner-product weights
are (in, out).
"""
import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .graph import GraphError, NetworkGraph, Node
from .layers import LAYER_TYPES, LayerError

MODEL_MAGIC = b"NNLRPM01"
TENSOR_MAGIC = b"NNLRPT01"
FORMAT_VERSION = 1


class ModelFileError(ValueError):
    code = "model"


class MagicError(ModelFileError):
    code = "magic"


class VersionError(ModelFileError):
    code = "version"


class TruncatedError(ModelFileError):
    code = "truncated"


class ChecksumError(ModelFileError):
    code = "checksum"


class ShapeInconsistencyError(ModelFileError):
    code = "shape"


def _pack(magic, manifest, payload):
    head = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode("utf-8")
    body = np.ascontiguousarray(payload, dtype="<f4").tobytes()
    crc = zlib.crc32(body) & 0xFFFFFFFF
    return magic + struct.pack("<Q", len(head)) + head + body + struct.pack("<I", crc)


def _unpack(blob, magic):
    if len(blob) < 8 or blob[:8] != magic:
        raise MagicError(f"bad magic {blob[:8]!r}, expected {magic!r}")
    if len(blob) < 16:
        raise TruncatedError("file ends inside the manifest length")
    (n,) = struct.unpack_from("<Q", blob, 8)
    if 16 + n > len(blob):
        raise TruncatedError(f"manifest declares {n} bytes, file has {len(blob) - 16}")
    try:
        manifest = json.loads(blob[16:16 + n].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ModelFileError(f"unreadable manifest: {exc}") from None
    if manifest.get("format_version") != FORMAT_VERSION:
        raise VersionError(f"format version {manifest.get('format_version')!r} unsupported")
    count = manifest.get("payload_length")
    if not isinstance(count, int) or count < 0:
        raise ModelFileError("manifest lacks a payload_length")
    body = blob[16 + n:-4] if len(blob) >= 16 + n + 4 else b""
    if len(body) != 4 * count or len(blob) != 16 + n + 4 * count + 4:
        raise TruncatedError(f"manifest declares {count} floats, payload holds "
                             f"{max(len(blob) - 16 - n - 4, 0) / 4:g}")
    (crc,) = struct.unpack_from("<I", blob, len(blob) - 4)
    if zlib.crc32(body) & 0xFFFFFFFF != crc:
        raise ChecksumError("payload CRC-32 mismatch")
    return manifest, np.frombuffer(body, dtype="<f4").astype(np.float64)


def model_to_bytes(net):
    nodes, chunks, offset = [], [], 0
    for node in net.node_list:
        tensors = {}
        for pname, arr in node.layer.params().items():
            tensors[pname] = {"offset": offset, "length": int(arr.size), "shape": list(arr.shape)}
            chunks.append(arr.ravel())
            offset += arr.size
        nodes.append({"name": node.name, "kind": node.layer.kind, "inputs": list(node.inputs),
                      "config": node.layer.config(), "tensors": tensors})
    pre = net.preprocessing
    manifest = {
        "format_version": FORMAT_VERSION,
        "input_shape": list(net.input_shape),
        "nodes": nodes,
        "payload_length": int(offset),
        "preprocessing": {"scale": pre.get("scale"),
                          "mean": None if pre.get("mean") is None else [float(m) for m in pre["mean"]]},
    }
    payload = np.concatenate(chunks) if chunks else np.zeros(0)
    return _pack(MODEL_MAGIC, manifest, payload)


def _build_layer(spec, payload):
    kind = spec.get("kind")
    if kind not in LAYER_TYPES:
        raise ModelFileError(f"unsupported layer kind {kind!r}")
    tensors = {}
    for pname, t in spec.get("tensors", {}).items():
        lo, n, shape = t["offset"], t["length"], tuple(t["shape"])
        if int(np.prod(shape)) != n:
            raise ShapeInconsistencyError(f"{spec['name']}.{pname}: shape {shape} vs length {n}")
        if lo < 0 or lo + n > payload.size:
            raise TruncatedError(f"{spec['name']}.{pname} lies outside the payload")
        tensors[pname] = payload[lo:lo + n].reshape(shape)
    cfg = spec.get("config", {})
    try:
        if kind == "Convolution":
            layer = LAYER_TYPES[kind](tensors["weight"], tensors["bias"], cfg["stride"], cfg["padding"])
            declared = (cfg["out_channels"], cfg["in_channels"], *cfg["kernel"])
            if tuple(layer.weight.shape) != declared:
                raise ShapeInconsistencyError(f"{spec['name']}: weight {layer.weight.shape} vs declared {declared}")
        elif kind == "InnerProduct":
            layer = LAYER_TYPES[kind](tensors["weight"], tensors["bias"])
            declared = (cfg["in_features"], cfg["out_features"])
            if tuple(layer.weight.shape) != declared:
                raise ShapeInconsistencyError(f"{spec['name']}: weight {layer.weight.shape} vs declared {declared}")
        elif kind in ("MaxPool", "AvgPool"):
            layer = LAYER_TYPES[kind](cfg["window"], cfg["stride"])
        elif kind == "Concat":
            layer = LAYER_TYPES[kind](cfg["axis"], cfg["arity"])
        else:
            layer = LAYER_TYPES[kind]()
    except LayerError as exc:
        raise ShapeInconsistencyError(f"{spec['name']}: {exc}") from None
    except KeyError as exc:
        raise ModelFileError(f"{spec['name']}: missing field {exc}") from None
    return layer


def model_from_bytes(blob):
    manifest, payload = _unpack(blob, MODEL_MAGIC)
    try:
        nodes = [Node(spec["name"], _build_layer(spec, payload), tuple(spec["inputs"]))
                 for spec in manifest["nodes"]]
        return NetworkGraph(manifest["input_shape"], nodes, manifest.get("preprocessing"))
    except GraphError as exc:
        raise ShapeInconsistencyError(str(exc)) from None
    except (KeyError, TypeError) as exc:
        raise ModelFileError(f"malformed manifest: {exc!r}") from None


def save_model(net, path):
    Path(path).write_bytes(model_to_bytes(net))


def load_model(path):
    return model_from_bytes(Path(path).read_bytes())


def tensor_to_bytes(arr, meta=None):
    arr = np.asarray(arr, dtype=np.float64)
    manifest = {"format_version": FORMAT_VERSION, "shape": list(arr.shape),
                "payload_length": int(arr.size)}
    if meta:
        manifest["meta"] = meta
    return _pack(TENSOR_MAGIC, manifest, arr.ravel())


def tensor_from_bytes(blob):
    manifest, payload = _unpack(blob, TENSOR_MAGIC)
    shape = tuple(manifest.get("shape", ()))
    if int(np.prod(shape)) != payload.size:
        raise ShapeInconsistencyError(f"shape {shape} vs {payload.size} values")
    return payload.reshape(shape)


def save_tensor(arr, path, meta=None):
    Path(path).write_bytes(tensor_to_bytes(arr, meta))


def load_tensor(path):
    return tensor_from_bytes(Path(path).read_bytes())


def save_dataset(samples, directory):
    """Write ``[(tensor, class_index), ...]`` as a fixture directory."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (x, label) in enumerate(samples):
        fname = f"sample_{i:05d}.nnt"
        save_tensor(x, directory / fname)
        entries.append({"file": fname, "class": int(label)})
    (directory / "manifest.json").write_text(json.dumps({"samples": entries}, indent=1) + "\n")


def load_dataset(directory):
    directory = Path(directory)
    entries = json.loads((directory / "manifest.json").read_text())["samples"]
    return [(load_tensor(directory / e["file"]), int(e["class"])) for e in entries]
