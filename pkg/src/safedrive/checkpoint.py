"""Bit-exact binary checkpoint format.

Layout: the magic string ``SRPL1``, a u32 network count, then for each
network its name, head code, layer sizes (u32 little-endian) and parameters
(row-major float32 little-endian), and finally a u64 length-prefixed UTF-8
metadata text block (config echo, seed, step count as JSON).
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .nets import HEADS, DenseNet

MAGIC = b"SRPL1"


class CheckpointError(ValueError):
    pass


def _param_shapes(layer_sizes: list[int], head: str) -> list[tuple[int, ...]]:
    shapes: list[tuple[int, ...]] = []
    for i in range(len(layer_sizes) - 1):
        shapes.append((layer_sizes[i], layer_sizes[i + 1]))
        shapes.append((layer_sizes[i + 1],))
    if head == "gaussian":
        shapes.append((layer_sizes[-1],))
    return shapes


def save_checkpoint(path, nets: dict[str, DenseNet], metadata: dict) -> None:
    """Write networks and a metadata echo to ``path``.

    Iteration order of ``nets`` is preserved, so pass the same ordering on
    every save to keep byte-identical outputs for identical runs.
    """
    blob = bytearray()
    blob += MAGIC
    blob += struct.pack("<I", len(nets))
    for name, net in nets.items():
        name_b = name.encode("utf-8")
        blob += struct.pack("<I", len(name_b))
        blob += name_b
        blob += struct.pack("<I", HEADS.index(net.head))
        blob += struct.pack("<I", len(net.layer_sizes))
        blob += struct.pack(f"<{len(net.layer_sizes)}I", *net.layer_sizes)
        flat = np.concatenate([p.astype("<f4").ravel() for p in net.params])
        blob += struct.pack("<Q", flat.size)
        blob += flat.tobytes()
    meta_b = json.dumps(metadata, sort_keys=True).encode("utf-8")
    blob += struct.pack("<Q", len(meta_b))
    blob += meta_b
    with open(path, "wb") as fh:
        fh.write(blob)


def load_checkpoint(path) -> tuple[dict[str, DenseNet], dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != MAGIC:
        raise CheckpointError(f"{path}: bad magic, not a checkpoint file")
    off = 5
    (n_nets,) = struct.unpack_from("<I", blob, off)
    off += 4
    nets: dict[str, DenseNet] = {}
    for _ in range(n_nets):
        (name_len,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + name_len].decode("utf-8")
        off += name_len
        (head_code,) = struct.unpack_from("<I", blob, off)
        off += 4
        (n_sizes,) = struct.unpack_from("<I", blob, off)
        off += 4
        sizes = list(struct.unpack_from(f"<{n_sizes}I", blob, off))
        off += 4 * n_sizes
        head = HEADS[head_code]
        (n_params,) = struct.unpack_from("<Q", blob, off)
        off += 8
        flat = np.frombuffer(blob, dtype="<f4", count=n_params, offset=off).copy()
        off += 4 * n_params
        params = []
        i = 0
        for shape in _param_shapes(sizes, head):
            size = int(np.prod(shape))
            params.append(flat[i : i + size].reshape(shape))
            i += size
        if i != n_params:
            raise CheckpointError(f"{path}: parameter payload size mismatch for {name!r}")
        nets[name] = DenseNet(sizes, head, params)
    (meta_len,) = struct.unpack_from("<Q", blob, off)
    off += 8
    metadata = json.loads(blob[off : off + meta_len].decode("utf-8"))
    return nets, metadata


def checkpoint_hash(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        h.update(fh.read())
    return h.hexdigest()
