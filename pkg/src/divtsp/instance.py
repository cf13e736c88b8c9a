"""Euclidean TSP instances: TSPLIB parsing, generation and normalization.

Distances are plain Euclidean and are NOT rounded to integers the way
TSPLIB's ``nint`` convention does; coordinates are usually normalized to the
unit square first, where integer rounding would destroy the metric.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, TextIO, Tuple, Union

import numpy as np

# Dense distance matrices are cached only below this size.
DENSE_LIMIT = 2048


class InstanceError(ValueError):
    """Base class for invalid or unreadable instances."""


class TSPLIBParseError(InstanceError):
    def __init__(self, message: str, line_no: Optional[int] = None, line: str = ""):
        self.line_no = line_no
        self.line = line
        where = f" (line {line_no}: {line.strip()!r})" if line_no is not None else ""
        super().__init__(message + where)


class MalformedHeaderError(TSPLIBParseError):
    pass


class DimensionMismatchError(TSPLIBParseError):
    pass


class UnsupportedEdgeWeightTypeError(TSPLIBParseError):
    pass


class DegenerateInstanceError(InstanceError):
    pass


class InvalidSizeError(InstanceError):
    pass


EdgeId = Tuple[int, int]


def canonical_edge(u: int, v: int) -> EdgeId:
    """Return the edge ``(min, max)``; self-loops are rejected."""
    u, v = int(u), int(v)
    if u == v:
        raise ValueError(f"self-loop ({u}, {v}) is not an edge")
    return (u, v) if u < v else (v, u)


def edge_index(u: int, v: int, n: int) -> int:
    """Position of canonical edge ``(u, v)`` in lexicographic order of ``triu_indices(n, 1)``."""
    u, v = canonical_edge(u, v)
    return u * n - u * (u + 1) // 2 + (v - u - 1)


def edge_endpoints(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """All canonical edges of K_n as two index arrays, in lexicographic order."""
    return np.triu_indices(n, k=1)


@dataclass(frozen=True, eq=False)
class Instance:
    """A complete Euclidean graph given by vertex coordinates.

    ``coords`` is stored as a read-only ``(n, 2)`` float64 array.
    """

    name: str
    coords: np.ndarray
    best_known_cost: Optional[float] = None
    normalized: bool = field(default=False)

    def __post_init__(self):
        coords = np.array(self.coords, dtype=np.float64)
        if coords.ndim != 2 or coords.shape[1] != 2:
            raise InstanceError(f"coords must have shape (n, 2), got {coords.shape}")
        if coords.shape[0] < 3:
            raise InvalidSizeError(f"an instance needs n >= 3 vertices, got {coords.shape[0]}")
        if not np.all(np.isfinite(coords)):
            raise InstanceError("coords contain non-finite values")
        if self.best_known_cost is not None and not self.best_known_cost > 0:
            raise InstanceError("best_known_cost must be positive")
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @cached_property
    def distances(self) -> np.ndarray:
        """Dense ``(n, n)`` distance matrix (only for ``n <= DENSE_LIMIT``)."""
        if self.n > DENSE_LIMIT:
            raise MemoryError(f"dense distance matrix disabled above n={DENSE_LIMIT}")
        diff = self.coords[:, None, :] - self.coords[None, :, :]
        d = np.sqrt((diff ** 2).sum(-1))
        d.setflags(write=False)
        return d

    def weight(self, u: int, v: int) -> float:
        if not (0 <= u < self.n and 0 <= v < self.n):
            raise IndexError(f"edge ({u}, {v}) out of range for n={self.n}")
        if self.n <= DENSE_LIMIT:
            return float(self.distances[u, v])
        dx, dy = self.coords[u] - self.coords[v]
        return math.hypot(dx, dy)

    def edge_weights(self) -> np.ndarray:
        """Weights of all canonical edges in lexicographic order."""
        iu, iv = edge_endpoints(self.n)
        return np.sqrt(((self.coords[iu] - self.coords[iv]) ** 2).sum(-1))

    def __repr__(self):
        return f"Instance(name={self.name!r}, n={self.n})"


def edge_weight(inst: Instance, e: EdgeId) -> float:
    u, v = canonical_edge(*e)
    return inst.weight(u, v)


def normalize(inst: Instance) -> Instance:
    """Shift to the origin and divide by the larger bounding-box side.

    One global factor is used for both axes, so the geometry is preserved.
    """
    lo = inst.coords.min(axis=0)
    span = float((inst.coords.max(axis=0) - lo).max())
    if span == 0.0:
        raise DegenerateInstanceError(f"all {inst.n} points of {inst.name!r} coincide")
    coords = (inst.coords - lo) / span
    best = inst.best_known_cost
    return Instance(inst.name, coords, best_known_cost=best, normalized=True)


def random_instance(n: int, rng: Union[np.random.Generator, int, None] = None, name: Optional[str] = None) -> Instance:
    """Uniform random points in the unit square."""
    if n < 3:
        raise InvalidSizeError(f"random instances need n >= 3, got {n}")
    rng = np.random.default_rng(rng)
    coords = rng.random((n, 2))
    return Instance(name or f"random{n}", coords, normalized=True)


_SUPPORTED_KEYS = {"NAME", "TYPE", "COMMENT", "DIMENSION", "EDGE_WEIGHT_TYPE", "EOF", "NODE_COORD_SECTION"}


def parse_tsplib(source: Union[str, TextIO]) -> Instance:
    """Parse a TSPLIB ``TYPE: TSP`` / ``EDGE_WEIGHT_TYPE: EUC_2D`` file.

    ``source`` is the file text or an open text stream. Coordinates are
    returned raw; vertex ids are remapped from 1-based to 0-based.
    """
    stream = io.StringIO(source) if isinstance(source, str) else source
    header = {}
    records = []
    in_coords = False
    coord_start = None
    for line_no, raw in enumerate(stream, start=1):
        line = raw.strip()
        if not line:
            continue
        if line == "EOF":
            break
        if in_coords:
            parts = line.split()
            if len(parts) != 3:
                if ":" in line or parts[0].isalpha():
                    # another section starts; coordinates are over
                    raise MalformedHeaderError("unexpected section after NODE_COORD_SECTION", line_no, raw)
                raise TSPLIBParseError("coordinate record must be 'index x y'", line_no, raw)
            try:
                idx = int(parts[0])
                x, y = float(parts[1]), float(parts[2])
            except ValueError:
                raise TSPLIBParseError("non-numeric coordinate record", line_no, raw) from None
            records.append((idx, x, y, line_no, raw))
            continue
        if line.startswith("NODE_COORD_SECTION"):
            in_coords = True
            coord_start = (line_no, raw)
            continue
        if ":" not in line:
            raise MalformedHeaderError("header line must be 'KEY : value'", line_no, raw)
        key, value = (s.strip() for s in line.split(":", 1))
        key = key.upper()
        if key not in _SUPPORTED_KEYS:
            raise MalformedHeaderError(f"unsupported keyword {key!r}", line_no, raw)
        header[key] = (value, line_no, raw)

    if "DIMENSION" not in header:
        raise MalformedHeaderError("missing DIMENSION")
    dim_value, dim_line, dim_raw = header["DIMENSION"]
    try:
        n = int(dim_value)
    except ValueError:
        raise MalformedHeaderError("DIMENSION is not an integer", dim_line, dim_raw) from None
    if "TYPE" in header and header["TYPE"][0].upper() != "TSP":
        value, ln, raw = header["TYPE"]
        raise MalformedHeaderError(f"unsupported TYPE {value!r}", ln, raw)
    if "EDGE_WEIGHT_TYPE" not in header:
        raise MalformedHeaderError("missing EDGE_WEIGHT_TYPE")
    ewt, ewt_line, ewt_raw = header["EDGE_WEIGHT_TYPE"]
    if ewt.upper() != "EUC_2D":
        raise UnsupportedEdgeWeightTypeError(f"EDGE_WEIGHT_TYPE {ewt!r} is not supported", ewt_line, ewt_raw)
    if coord_start is None:
        raise MalformedHeaderError("missing NODE_COORD_SECTION")
    if len(records) != n:
        ln, raw = (records[-1][3], records[-1][4]) if records else coord_start
        raise DimensionMismatchError(f"DIMENSION is {n} but {len(records)} coordinate records were found", ln, raw)

    coords = np.empty((n, 2))
    seen = set()
    for idx, x, y, ln, raw in records:
        if not 1 <= idx <= n or idx in seen:
            raise TSPLIBParseError(f"vertex id {idx} is out of range or repeated", ln, raw)
        seen.add(idx)
        coords[idx - 1] = (x, y)
    name = header.get("NAME", ("unnamed",))[0]
    return Instance(name, coords)


def load_tsplib(path: Union[str, Path]) -> Instance:
    with open(path, encoding="utf-8") as fh:
        return parse_tsplib(fh)


def bundled_instance(name: str) -> Instance:
    """Load a TSPLIB file shipped with the package (currently ``berlin52``)."""
    text = resources.files("divtsp.data").joinpath(f"{name}.tsp").read_text(encoding="utf-8")
    return parse_tsplib(text)


def parse_registry(lines: Iterable[str]) -> dict:
    """Parse ``name cost`` lines; ``#`` starts a comment."""
    registry = {}
    for line_no, raw in enumerate(lines, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise InstanceError(f"registry line {line_no} must be 'name cost': {raw!r}")
        cost = float(parts[1])
        if not cost > 0:
            raise InstanceError(f"registry cost must be positive on line {line_no}")
        registry[parts[0]] = cost
    return registry


def load_registry(path: Union[str, Path, None] = None) -> dict:
    """Read a best-known registry; ``None`` loads the bundled one."""
    if path is None:
        text = resources.files("divtsp.data").joinpath("best_known.txt").read_text(encoding="utf-8")
        return parse_registry(text.splitlines())
    with open(path, encoding="utf-8") as fh:
        return parse_registry(fh)


def with_best_known(inst: Instance, registry: Mapping[str, float]) -> Instance:
    if inst.name in registry:
        return Instance(inst.name, inst.coords, best_known_cost=registry[inst.name], normalized=inst.normalized)
    return inst


def load_instance(spec: str) -> Instance:
    """Resolve an instance spec: a ``.tsp`` path, a bundled name, or ``random:N:SEED``.

    File and bundled instances are normalized to the unit square.
    """
    if spec.startswith("random:"):
        parts = spec.split(":")
        if len(parts) != 3:
            raise InstanceError(f"random instance spec must be 'random:N:SEED', got {spec!r}")
        n, seed = int(parts[1]), int(parts[2])
        return random_instance(n, np.random.default_rng(seed), name=f"random{n}s{seed}")
    path = Path(spec)
    if path.exists():
        return normalize(load_tsplib(path))
    return normalize(bundled_instance(spec))
