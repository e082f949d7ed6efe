"""Immutable CSR graphs, ingestion, the binary CSR format and synthetic generators."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ParameterError, ParseError, RangeError

MAGIC = b"VCSR"
VERSION = 1
_HEADER = struct.Struct("<4sIQQ")

TRAIN, VALID, TEST, NONE = 0, 1, 2, 3


def _frozen(a, dtype=np.int64):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


def _csr_from_sorted_pairs(src, dst, n):
    offsets = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=offsets[1:])
    return offsets, dst


def _sort_dedup(src, dst, n):
    """Sort pairs by (src, dst) and drop duplicates."""
    if src.size == 0:
        return src, dst
    order = np.lexsort((dst, src))
    src, dst = src[order], dst[order]
    keep = np.ones(src.size, dtype=bool)
    keep[1:] = (src[1:] != src[:-1]) | (dst[1:] != dst[:-1])
    return src[keep], dst[keep]


@dataclass(frozen=True, eq=False)
class Graph:
    """Simple graph in compressed-sparse-row form, with its transpose.

    ``forward_targets[forward_offsets[v]:forward_offsets[v+1]]`` are the
    out-neighbours of ``v`` in increasing id order; the reverse arrays hold
    in-neighbours the same way.
    """

    num_vertices: int
    forward_offsets: np.ndarray
    forward_targets: np.ndarray
    reverse_offsets: np.ndarray
    reverse_targets: np.ndarray

    @property
    def num_edges(self) -> int:
        return int(self.forward_targets.size)

    @property
    def out_degree(self) -> np.ndarray:
        return np.diff(self.forward_offsets)

    @property
    def in_degree(self) -> np.ndarray:
        return np.diff(self.reverse_offsets)

    def neighbors(self, v: int) -> np.ndarray:
        return self.forward_targets[self.forward_offsets[v]:self.forward_offsets[v + 1]]

    def in_neighbors(self, v: int) -> np.ndarray:
        return self.reverse_targets[self.reverse_offsets[v]:self.reverse_offsets[v + 1]]

    def sources(self) -> np.ndarray:
        """Source id of every forward edge slot."""
        return np.repeat(np.arange(self.num_vertices, dtype=np.int64), self.out_degree)

    @property
    def is_symmetric(self) -> bool:
        return np.array_equal(self.forward_offsets, self.reverse_offsets) and np.array_equal(
            self.forward_targets, self.reverse_targets
        )

    @classmethod
    def from_edges(cls, src, dst, num_vertices=None, make_undirected=False) -> "Graph":
        """Build a graph from edge endpoint arrays.

        Self-loops and duplicates are dropped; with ``make_undirected`` every
        edge gets its mirror before deduplication.
        """
        src = np.asarray(src, dtype=np.int64).ravel()
        dst = np.asarray(dst, dtype=np.int64).ravel()
        if src.shape != dst.shape:
            raise ParameterError("src and dst must have the same length")
        if src.size and min(src.min(), dst.min()) < 0:
            raise RangeError("negative vertex id")
        inferred = int(max(src.max(), dst.max())) + 1 if src.size else 0
        n = inferred if num_vertices is None else int(num_vertices)
        if inferred > n:
            raise RangeError(f"vertex id {inferred - 1} out of range for n={n}")
        keep = src != dst
        src, dst = src[keep], dst[keep]
        if make_undirected:
            src, dst = np.concatenate([src, dst]), np.concatenate([dst, src])
        src, dst = _sort_dedup(src, dst, n)
        offsets, targets = _csr_from_sorted_pairs(src, dst, n)
        return cls._assemble(n, offsets, targets)

    @classmethod
    def from_csr(cls, offsets, targets) -> "Graph":
        """Wrap existing CSR arrays after validating them."""
        offsets = np.asarray(offsets, dtype=np.int64)
        targets = np.asarray(targets, dtype=np.int64)
        n = offsets.size - 1
        if n < 0 or offsets[0] != 0 or offsets[-1] != targets.size or np.any(np.diff(offsets) < 0):
            raise FormatError("malformed CSR offsets")
        if targets.size and (targets.min() < 0 or targets.max() >= n):
            raise RangeError("CSR target out of range")
        src = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))
        if targets.size:
            same_row = src[1:] == src[:-1]
            if np.any(same_row & (targets[1:] <= targets[:-1])):
                raise FormatError("CSR rows must be strictly increasing")
            if np.any(src == targets):
                raise FormatError("CSR contains self-loops")
        return cls._assemble(n, offsets, targets)

    @classmethod
    def _assemble(cls, n, offsets, targets):
        src = np.repeat(np.arange(n, dtype=np.int64), np.diff(offsets))
        rsrc, rdst = _sort_dedup(targets, src, n)
        roffsets, rtargets = _csr_from_sorted_pairs(rsrc, rdst, n)
        if np.array_equal(roffsets, offsets) and np.array_equal(rtargets, targets):
            # undirected: share storage
            f_off, f_tgt = _frozen(offsets), _frozen(targets)
            return cls(n, f_off, f_tgt, f_off, f_tgt)
        return cls(n, _frozen(offsets), _frozen(targets), _frozen(roffsets), _frozen(rtargets))

    def relabel(self, new_of_old) -> "Graph":
        """Return the isomorphic graph with vertex ``v`` renamed ``new_of_old[v]``."""
        new_of_old = np.asarray(new_of_old, dtype=np.int64)
        src = new_of_old[self.sources()]
        dst = new_of_old[self.forward_targets]
        src, dst = _sort_dedup(src, dst, self.num_vertices)
        offsets, targets = _csr_from_sorted_pairs(src, dst, self.num_vertices)
        return Graph._assemble(self.num_vertices, offsets, targets)

    def edge_digest(self) -> str:
        """SHA-256 over the canonical (sorted) forward edge list."""
        h = hashlib.sha256()
        h.update(np.int64(self.num_vertices).tobytes())
        h.update(self.forward_offsets.astype("<u8").tobytes())
        h.update(self.forward_targets.astype("<u8").tobytes())
        return h.hexdigest()


def load_edge_list(path, make_undirected: bool = True, num_vertices: int | None = None) -> Graph:
    """Read a whitespace separated ``u v`` edge list; ``#`` starts a comment line."""
    src, dst = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ParseError(f"{path}:{lineno}: expected two vertex ids, got {line!r}")
            try:
                u, v = int(parts[0]), int(parts[1])
            except ValueError:
                raise ParseError(f"{path}:{lineno}: non-integer vertex id in {line!r}") from None
            if u < 0 or v < 0 or u >= 2**63 or v >= 2**63:
                raise RangeError(f"{path}:{lineno}: vertex id out of range")
            if num_vertices is not None and max(u, v) >= num_vertices:
                raise RangeError(f"{path}:{lineno}: vertex id {max(u, v)} >= n={num_vertices}")
            src.append(u)
            dst.append(v)
    return Graph.from_edges(np.array(src, dtype=np.int64), np.array(dst, dtype=np.int64),
                            num_vertices, make_undirected)


def write_binary_csr(g: Graph, path) -> None:
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, g.num_vertices, g.num_edges))
        fh.write(g.forward_offsets.astype("<u8").tobytes())
        fh.write(g.forward_targets.astype("<u8").tobytes())


def read_binary_csr(path) -> Graph:
    data = Path(path).read_bytes()
    if len(data) < _HEADER.size:
        raise FormatError(f"{path}: truncated header")
    magic, version, n, m = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}")
    if version != VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    expected = _HEADER.size + 8 * (n + 1 + m)
    if len(data) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(data)}")
    body = np.frombuffer(data, dtype="<u8", offset=_HEADER.size)
    return Graph.from_csr(body[: n + 1].astype(np.int64), body[n + 1:].astype(np.int64))


# -- vertex roles ---------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VertexRoles:
    """Per-vertex split code: 0 train, 1 valid, 2 test, 3 none."""

    role: np.ndarray

    def __post_init__(self):
        role = _frozen(self.role, dtype=np.int8)
        if role.size and (role.min() < 0 or role.max() > 3):
            raise RangeError("role codes must be in 0..3")
        object.__setattr__(self, "role", role)

    def __len__(self):
        return self.role.size

    @property
    def train_mask(self) -> np.ndarray:
        return self.role == TRAIN

    @property
    def train_vertices(self) -> np.ndarray:
        return np.flatnonzero(self.role == TRAIN)

    def relabel(self, new_of_old) -> "VertexRoles":
        out = np.empty_like(self.role)
        out[np.asarray(new_of_old)] = self.role
        return VertexRoles(out)

    @classmethod
    def all_train(cls, n: int) -> "VertexRoles":
        return cls(np.zeros(n, dtype=np.int8))


def random_roles(n: int, train: float = 0.1, valid: float = 0.0, test: float = 0.0,
                 seed: int = 0) -> VertexRoles:
    """Assign exact role counts (rounded fractions of n) to a seeded random subset."""
    if min(train, valid, test) < 0 or train + valid + test > 1 + 1e-12:
        raise ParameterError("role fractions must be non-negative and sum to at most 1")
    counts = [int(round(f * n)) for f in (train, valid, test)]
    if sum(counts) > n:
        counts[2] = n - counts[0] - counts[1]
    perm = np.random.default_rng(seed).permutation(n)
    role = np.full(n, NONE, dtype=np.int8)
    start = 0
    for code, c in zip((TRAIN, VALID, TEST), counts):
        role[perm[start:start + c]] = code
        start += c
    return VertexRoles(role)


def _read_int_lines(path, what):
    vals = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                vals.append(int(line))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad {what} {line!r}") from None
    return np.array(vals, dtype=np.int64)


def read_roles(path, num_vertices: int | None = None) -> VertexRoles:
    codes = _read_int_lines(path, "role code")
    if num_vertices is not None and codes.size != num_vertices:
        raise FormatError(f"{path}: expected {num_vertices} role lines, found {codes.size}")
    if codes.size and (codes.min() < 0 or codes.max() > 3):
        raise FormatError(f"{path}: role codes must be in 0..3")
    return VertexRoles(codes.astype(np.int8))


def write_roles(roles: VertexRoles, path, header: str | None = None) -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write("\n".join(map(str, roles.role.tolist())))
        fh.write("\n")


# -- synthetic generators -------------------------------------------------


def path_graph(n: int) -> Graph:
    if n < 1:
        raise ParameterError("path needs n >= 1")
    v = np.arange(n - 1)
    return Graph.from_edges(v, v + 1, n, make_undirected=True)


def star_graph(n: int) -> Graph:
    if n < 1:
        raise ParameterError("star needs n >= 1")
    leaves = np.arange(1, n)
    return Graph.from_edges(np.zeros_like(leaves), leaves, n, make_undirected=True)


def random_tree(n: int, seed: int = 0, directed: bool = False) -> Graph:
    """Random recursive tree: vertex i attaches to a uniform earlier vertex.

    With ``directed`` the edges point from parent to child.
    """
    if n < 1:
        raise ParameterError("tree needs n >= 1")
    rng = np.random.default_rng(seed)
    child = np.arange(1, n)
    parent = np.floor(rng.random(n - 1) * child).astype(np.int64)
    return Graph.from_edges(parent, child, n, make_undirected=not directed)


def grid_graph(rows: int, cols: int) -> Graph:
    if rows < 1 or cols < 1:
        raise ParameterError("grid needs rows, cols >= 1")
    ids = np.arange(rows * cols).reshape(rows, cols)
    src = np.concatenate([ids[:, :-1].ravel(), ids[:-1, :].ravel()])
    dst = np.concatenate([ids[:, 1:].ravel(), ids[1:, :].ravel()])
    return Graph.from_edges(src, dst, rows * cols, make_undirected=True)


def preferential_attachment(n: int, d: int, seed: int = 0) -> Graph:
    """Barabasi-Albert style graph via the Batagelj-Brandes edge-copy scheme.

    Each new vertex emits ``d`` edges whose far endpoint copies a uniformly
    chosen earlier edge endpoint, i.e. is degree-proportional. Duplicates and
    self-loops are dropped, so realised degrees can fall slightly below ``d``.
    """
    if n < 1 or d < 1:
        raise ParameterError("preferential_attachment needs n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    slots = n * d
    j = np.arange(slots, dtype=np.int64)
    # slot 2j holds the new vertex j // d; slot 2j+1 copies a uniform earlier slot in [0, 2j]
    ptr = np.empty(2 * slots, dtype=np.int64)
    ptr[0::2] = 2 * j
    ptr[1::2] = np.floor(rng.random(slots) * (2 * j + 1)).astype(np.int64)
    while True:
        odd = (ptr & 1).astype(bool)
        if not odd.any():
            break
        ptr = ptr[ptr]
    endpoint = (ptr // 2) // d
    return Graph.from_edges(endpoint[0::2], endpoint[1::2], n, make_undirected=True)


def uniform_random(n: int, m: int, seed: int = 0) -> Graph:
    """Erdos-Renyi style multigraph draw of ``m`` edges, simplified."""
    if n < 1 or m < 0:
        raise ParameterError("uniform_random needs n >= 1 and m >= 0")
    rng = np.random.default_rng(seed)
    return Graph.from_edges(rng.integers(0, n, m), rng.integers(0, n, m), n, make_undirected=True)


_KINDS = {
    "path": path_graph,
    "star": star_graph,
    "tree": random_tree,
    "grid": grid_graph,
    "preferential_attachment": preferential_attachment,
    "pa": preferential_attachment,
    "uniform_random": uniform_random,
    "er": uniform_random,
}


def generate_synthetic(kind: str, seed: int = 0, **params) -> Graph:
    """Dispatch to a named generator; ``seed`` is ignored by deterministic kinds."""
    try:
        fn = _KINDS[kind]
    except KeyError:
        raise ParameterError(f"unknown graph kind {kind!r}; choose from {sorted(_KINDS)}") from None
    if fn in (random_tree, preferential_attachment, uniform_random):
        params["seed"] = seed
    try:
        return fn(**params)
    except TypeError as exc:
        raise ParameterError(f"bad parameters for {kind}: {exc}") from None
