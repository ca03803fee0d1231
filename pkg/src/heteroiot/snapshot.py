"""Versioned binary container for named weight arrays.

Layout: a magic header line, a JSON index line (names, shapes), then the
raw row-major float64 buffers concatenated in index order, little-endian.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

MAGIC = b"#heteroiot-weights-v1\n"


def save_weights(path, state: dict[str, np.ndarray]) -> None:
    path = Path(path)
    index = {name: list(arr.shape) for name, arr in state.items()}
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(index).encode("utf-8"))
        fh.write(b"\n")
        for name in index:
            arr = np.ascontiguousarray(state[name], dtype="<f8")
            fh.write(arr.tobytes())


def load_weights(path) -> dict[str, np.ndarray]:
    path = Path(path)
    with open(path, "rb") as fh:
        magic = fh.readline()
        if magic != MAGIC:
            raise ValueError(f"{path}: not a weight snapshot (bad magic header)")
        index = json.loads(fh.readline().decode("utf-8"))
        state = {}
        for name, shape in index.items():
            count = int(np.prod(shape)) if shape else 1
            buf = fh.read(count * 8)
            if len(buf) != count * 8:
                raise ValueError(f"{path}: truncated buffer for '{name}'")
            state[name] = np.frombuffer(buf, dtype="<f8").reshape(shape).copy()
        if fh.read(1):
            raise ValueError(f"{path}: trailing bytes after last buffer")
    return state
