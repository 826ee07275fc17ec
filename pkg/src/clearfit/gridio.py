"""File formats for grids and run manifests.

Two grid formats are supported:

* PGM, magics P2 (ascii) and P5 (binary), maxval at most 255.  Written
  as P5 with values rounded to nearest and clamped to [0, 255], so the
  on-disk image is lossy with respect to the float64 pipeline.
* F64 text grid: a first line ``rows cols`` followed by one line per
  row of whitespace-separated decimal values.  Values round-trip
  exactly (shortest repr), which the reproducibility checks rely on.

Manifests are flat ``key=value`` text files, one pair per line, in
writing order.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "read_pgm",
    "write_pgm",
    "read_f64",
    "write_f64",
    "load_grid",
    "write_manifest",
    "read_manifest",
]


def _pgm_tokens(data: bytes):
    """Header tokens, skipping '#' comments, plus offset past the header."""
    pos = 0
    tokens = []
    while len(tokens) < 4 and pos < len(data):
        c = data[pos:pos + 1]
        if c == b"#":
            while pos < len(data) and data[pos:pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            start = pos
            while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
                pos += 1
            tokens.append(data[start:pos])
    if len(tokens) < 4:
        raise ValueError("truncated PGM header")
    # exactly one whitespace byte separates maxval from P5 raster data
    return tokens, pos + 1


def read_pgm(path) -> np.ndarray:
    """Read a P2 or P5 grayscale image as a float64 grid."""
    with open(path, "rb") as fh:
        data = fh.read()
    tokens, offset = _pgm_tokens(data)
    magic = tokens[0]
    if magic not in (b"P2", b"P5"):
        raise ValueError(f"not a P2/P5 PGM file: magic {magic!r}")
    cols, rows, maxval = (int(t) for t in tokens[1:4])
    if not 0 < maxval <= 255:
        raise ValueError(f"unsupported maxval {maxval}")
    count = rows * cols
    if magic == b"P5":
        raster = np.frombuffer(data, dtype=np.uint8, count=count, offset=offset)
    else:
        vals = data[offset - 1:].split()
        if len(vals) < count:
            raise ValueError("truncated P2 raster")
        raster = np.array([int(v) for v in vals[:count]], dtype=np.uint8)
    return raster.reshape(rows, cols).astype(np.float64)


def write_pgm(path, grid: np.ndarray) -> None:
    """Write a grid as binary PGM, rounding and clamping to [0, 255]."""
    grid = np.asarray(grid)
    if grid.ndim != 2:
        raise ValueError("grid must be 2-d")
    q = np.clip(np.rint(grid), 0, 255).astype(np.uint8)
    rows, cols = q.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{cols} {rows}\n255\n".encode("ascii"))
        fh.write(q.tobytes())


def read_f64(path) -> np.ndarray:
    with open(path, "r", encoding="ascii") as fh:
        first = fh.readline().split()
        if len(first) != 2:
            raise ValueError("F64 grid must start with 'rows cols'")
        rows, cols = int(first[0]), int(first[1])
        vals = fh.read().split()
    if len(vals) != rows * cols:
        raise ValueError(f"expected {rows * cols} values, found {len(vals)}")
    return np.array([float(v) for v in vals], dtype=np.float64).reshape(rows, cols)


def write_f64(path, grid: np.ndarray) -> None:
    grid = np.asarray(grid, dtype=np.float64)
    if grid.ndim != 2:
        raise ValueError("grid must be 2-d")
    rows, cols = grid.shape
    with open(path, "w", encoding="ascii") as fh:
        fh.write(f"{rows} {cols}\n")
        for r in range(rows):
            fh.write(" ".join(repr(float(v)) for v in grid[r]))
            fh.write("\n")


def load_grid(path) -> np.ndarray:
    """Read either format, sniffing the PGM magic."""
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic in (b"P2", b"P5"):
        return read_pgm(path)
    return read_f64(path)


def write_manifest(path, entries: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, value in entries.items():
            if "=" in str(key) or "\n" in str(key) or "\n" in str(value):
                raise ValueError(f"manifest entry not flat: {key!r}")
            fh.write(f"{key}={value}\n")


def read_manifest(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.rstrip("\n")
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise ValueError(f"bad manifest line: {line!r}")
            out[key] = value
    return out
