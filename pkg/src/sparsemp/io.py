"""Readers and writers for the data formats the harness consumes."""

from __future__ import annotations

from pathlib import Path
from typing import Optional, Tuple

import numpy as np
import scipy.sparse as sp
from sklearn.datasets import load_svmlight_file

__all__ = [
    "DataParseError",
    "read_libsvm",
    "read_series",
    "read_pgm",
    "write_pgm",
    "read_matrix_csv",
]


class DataParseError(ValueError):
    """Malformed input; the message carries the offending line number."""


def read_libsvm(path, n_features: Optional[int] = None) -> Tuple[sp.csr_matrix, np.ndarray]:
    """LIBSVM ``label idx:val ...`` file with 1-based indices.

    Labels are mapped to ``{-1, +1}``: positive values become ``+1`` and
    everything else ``-1``.
    """
    path = Path(path)
    # surface line numbers for the common malformations before delegating
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].split()
            if not body:
                continue
            try:
                float(body[0])
                for tok in body[1:]:
                    idx, val = tok.split(":")
                    if int(idx) < 1:
                        raise ValueError("index must be >= 1")
                    float(val)
            except ValueError as exc:
                raise DataParseError(f"{path}:{lineno}: {exc}") from exc
    X, y = load_svmlight_file(str(path), n_features=n_features, zero_based=False)
    return sp.csr_matrix(X), np.where(y > 0, 1.0, -1.0)


def read_series(path) -> np.ndarray:
    """One value per line; blank lines and ``#`` comments are skipped."""
    path = Path(path)
    vals = []
    with path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            body = line.split("#", 1)[0].strip()
            if not body:
                continue
            try:
                vals.append(float(body.split()[-1]))
            except ValueError as exc:
                raise DataParseError(f"{path}:{lineno}: not a number: {body!r}") from exc
    return np.array(vals)


def _pgm_tokens(data: bytes):
    """Yield ``(token, end_offset)`` over a PGM header, skipping comments."""
    i = 0
    while i < len(data):
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] not in (b"\n", b"\r"):
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace() and data[j:j + 1] != b"#":
                j += 1
            yield data[i:j], j
            i = j


def read_pgm(path) -> np.ndarray:
    """Read a P2 (ASCII) or P5 (binary) greymap, scaled to ``[0, 1]``."""
    path = Path(path)
    data = path.read_bytes()
    tokens = _pgm_tokens(data)
    try:
        magic, _ = next(tokens)
        w_tok, _ = next(tokens)
        h_tok, _ = next(tokens)
        mx_tok, end = next(tokens)
        width, height, maxval = int(w_tok), int(h_tok), int(mx_tok)
    except (StopIteration, ValueError) as exc:
        raise DataParseError(f"{path}: bad PGM header") from exc
    if magic not in (b"P2", b"P5") or not 0 < maxval < 65536:
        raise DataParseError(f"{path}: unsupported PGM ({magic!r}, maxval={maxval})")
    count = width * height
    if magic == b"P5":
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = np.frombuffer(data, dtype=dtype, count=count, offset=end + 1)
    else:
        vals = [int(t) for t, _ in tokens]
        if len(vals) < count:
            raise DataParseError(f"{path}: expected {count} pixels, got {len(vals)}")
        raw = np.array(vals[:count])
    return raw.reshape(height, width).astype(float) / maxval


def write_pgm(path, image, binary: bool = True, maxval: int = 255) -> None:
    """Write ``image`` (values in ``[0, 1]``, clipped) as P5 or P2."""
    img = np.clip(np.asarray(image, dtype=float), 0.0, 1.0)
    q = np.rint(img * maxval).astype(int)
    h, w = q.shape
    path = Path(path)
    if binary:
        dtype = ">u2" if maxval > 255 else "u1"
        path.write_bytes(f"P5\n{w} {h}\n{maxval}\n".encode() + q.astype(dtype).tobytes())
    else:
        rows = "\n".join(" ".join(str(v) for v in row) for row in q)
        path.write_text(f"P2\n{w} {h}\n{maxval}\n{rows}\n")


def read_matrix_csv(path) -> np.ndarray:
    """Comma-separated, row-major, no header."""
    path = Path(path)
    try:
        return np.loadtxt(path, delimiter=",", ndmin=2)
    except ValueError as exc:
        raise DataParseError(f"{path}: {exc}") from exc
