"""Text formats for point sets, distance matrices and mappings."""

from __future__ import annotations

from pathlib import Path

import numpy as np

__all__ = ["ParseError", "parse_mapping", "parse_matrix", "parse_points", "read_mapping",
           "read_matrix", "read_points"]


class ParseError(ValueError):
    """Malformed input; ``line`` is 1-based."""

    def __init__(self, line: int, message: str) -> None:
        super().__init__(f"line {line}: {message}")
        self.line = line


def _floats(tokens: list[str], lineno: int) -> list[float]:
    out = []
    for tok in tokens:
        try:
            out.append(float(tok))
        except ValueError:
            raise ParseError(lineno, f"not a number: {tok!r}") from None
    return out


def _content_lines(text: str):
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        yield lineno, line


def parse_points(text: str) -> np.ndarray:
    """One point per line, whitespace separated; ``#`` lines are comments."""
    rows: list[list[float]] = []
    arity = None
    for lineno, line in _content_lines(text):
        vals = _floats(line.split(), lineno)
        if arity is None:
            arity = len(vals)
        elif len(vals) != arity:
            raise ParseError(lineno, f"expected {arity} coordinates, found {len(vals)}")
        rows.append(vals)
    if not rows:
        raise ParseError(1, "no points")
    arr = np.asarray(rows, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ParseError(1, "coordinates must be finite")
    return arr


def parse_matrix(text: str) -> np.ndarray:
    """First line ``n``; then ``n`` rows of ``n`` nonnegative numbers."""
    lines = list(_content_lines(text))
    if not lines:
        raise ParseError(1, "empty matrix file")
    head_no, head = lines[0]
    try:
        n = int(head)
    except ValueError:
        raise ParseError(head_no, f"expected point count, found {head!r}") from None
    if n < 1:
        raise ParseError(head_no, "point count must be positive")
    body = lines[1:]
    if len(body) != n:
        where = body[-1][0] + 1 if body else head_no + 1
        raise ParseError(where, f"expected {n} rows, found {len(body)}")
    mat = np.empty((n, n))
    for r, (lineno, line) in enumerate(body):
        vals = _floats(line.split(), lineno)
        if len(vals) != n:
            raise ParseError(lineno, f"expected {n} entries, found {len(vals)}")
        if any(v < 0 or v != v or v == float("inf") for v in vals):
            raise ParseError(lineno, "entries must be finite and nonnegative")
        mat[r] = vals
    return mat


def parse_mapping(text: str) -> tuple[np.ndarray, np.ndarray]:
    """Lines ``coords | values``; returns domain coordinates and codomain values."""
    dom: list[list[float]] = []
    cod: list[list[float]] = []
    for lineno, line in _content_lines(text):
        if line.count("|") != 1:
            raise ParseError(lineno, "expected exactly one '|' separator")
        left, right = line.split("|")
        a = _floats(left.split(), lineno)
        b = _floats(right.split(), lineno)
        if not a or not b:
            raise ParseError(lineno, "both sides of '|' need values")
        if dom and (len(a) != len(dom[0]) or len(b) != len(cod[0])):
            raise ParseError(lineno, "row arity differs from the first row")
        dom.append(a)
        cod.append(b)
    if not dom:
        raise ParseError(1, "no mapping rows")
    return np.asarray(dom, dtype=float), np.asarray(cod, dtype=float)


def read_points(path: str | Path) -> np.ndarray:
    return parse_points(Path(path).read_text(encoding="utf-8"))


def read_matrix(path: str | Path) -> np.ndarray:
    return parse_matrix(Path(path).read_text(encoding="utf-8"))


def read_mapping(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    return parse_mapping(Path(path).read_text(encoding="utf-8"))
