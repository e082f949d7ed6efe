"""Experiment specifications, provenance hashing and artifact manifests."""

from __future__ import annotations

import copy
import hashlib
import json
from pathlib import Path

from .errors import ConfigError
from .graph import (Graph, VertexRoles, generate_synthetic, load_edge_list, random_roles, read_binary_csr,
                    read_roles)
from .partition import PartitionMap, partition_graph
from .pipesim import ClusterConfig
from .policies import POLICIES
from .sampling import check_fanouts

DEFAULTS = {
    "graph": {"kind": "preferential_attachment", "n": 5000, "d": 8, "seed": 7},
    "roles": {"train": 0.1, "valid": 0.05, "test": 0.05, "seed": 7},
    "K": 4,
    "partition": {"method": "bfs_greedy", "seed": 7},
    "fanouts": [[5, 5, 5], [15, 10, 5]],
    "batch_size": 1,
    "epochs": 20,
    "sim_epochs": 2,
    "alphas": [0.0, 0.05, 0.1, 0.2, 0.5],
    "policies": list(POLICIES),
    "gammas": [0.0, 0.1, 0.25, 0.5, 1.0],
    "seed": 1,
    "pipeline_policy": "vip",
    "cluster": {},
    "output_dir": "out",
}

# keys that do not influence any output value
_NON_PROVENANCE = ("output_dir",)

MANIFEST = "manifest.json"


def load_spec(path=None, overrides: dict | None = None) -> dict:
    """Merge defaults, the JSON file at ``path`` and ``overrides`` (flags win), then validate."""
    spec = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                user = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from None
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: spec must be a JSON object")
        unknown = set(user) - set(DEFAULTS)
        if unknown:
            raise ConfigError(f"{path}: unknown spec keys {sorted(unknown)}")
        spec.update(user)
    for k, v in (overrides or {}).items():
        if v is not None:
            spec[k] = v
    validate(spec)
    return spec


def validate(spec: dict) -> None:
    if not isinstance(spec["K"], int) or spec["K"] < 1:
        raise ConfigError("K must be a positive integer")
    try:
        spec["fanouts"] = [list(check_fanouts(f)) for f in spec["fanouts"]]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad fanouts: {exc}") from None
    if not spec["fanouts"]:
        raise ConfigError("fanouts list is empty")
    for key in ("batch_size", "epochs", "sim_epochs"):
        if not isinstance(spec[key], int) or spec[key] < 1:
            raise ConfigError(f"{key} must be a positive integer")
    alphas = [float(a) for a in spec["alphas"]]
    if not alphas or min(alphas) < 0:
        raise ConfigError("alphas must be a non-empty list of non-negative numbers")
    spec["alphas"] = alphas
    gammas = [float(x) for x in spec["gammas"]]
    if any(not 0 <= x <= 1 for x in gammas):
        raise ConfigError("gammas must lie in [0, 1]")
    spec["gammas"] = gammas
    bad = [p for p in spec["policies"] if p not in POLICIES]
    if bad or not spec["policies"]:
        raise ConfigError(f"unknown policies {bad}; choose from {list(POLICIES)}")
    if spec["pipeline_policy"] not in POLICIES:
        raise ConfigError(f"unknown pipeline_policy {spec['pipeline_policy']!r}")
    if spec["partition"].get("method") not in ("random", "bfs_greedy", "from_file"):
        raise ConfigError(f"unknown partition method {spec['partition'].get('method')!r}")
    ClusterConfig.from_dict(dict(spec["cluster"], K=spec["K"]))


def spec_hash(spec: dict) -> str:
    prov = {k: v for k, v in spec.items() if k not in _NON_PROVENANCE}
    blob = json.dumps(prov, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def header(spec: dict) -> str:
    return f"vipkit spec_hash={spec_hash(spec)}"


def claim_dir(directory, spec: dict) -> Path:
    """Create ``directory`` and bind it to ``spec``; refuse a directory owned by another spec."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    h = spec_hash(spec)
    m = d / MANIFEST
    if m.exists():
        found = json.loads(m.read_text()).get("spec_hash")
        if found != h:
            raise ConfigError(f"{d} holds artifacts of spec {found}, refusing to mix with spec {h}")
        return d
    prov = {k: v for k, v in spec.items() if k not in _NON_PROVENANCE}
    m.write_text(json.dumps({"spec_hash": h, "spec": prov}, indent=2, sort_keys=True) + "\n")
    return d


def check_csv_header(path, expected: str | None = None) -> str:
    """Return the spec hash in a CSV's first comment line; raise if it differs from ``expected``."""
    with open(path) as fh:
        first = fh.readline().strip()
    if not first.startswith("# vipkit spec_hash="):
        raise ConfigError(f"{path}: missing provenance header")
    h = first.split("=", 1)[1]
    if expected is not None and h != expected:
        raise ConfigError(f"{path}: produced by spec {h}, expected {expected}")
    return h


def build_graph(spec: dict, base: Path | None = None) -> Graph:
    gs = dict(spec["graph"])
    if "binary" in gs:
        return read_binary_csr(gs["binary"])
    if "edge_list" in gs:
        return load_edge_list(gs["edge_list"], gs.get("undirected", True), gs.get("n"))
    kind = gs.pop("kind")
    seed = gs.pop("seed", 0)
    return generate_synthetic(kind, seed=seed, **gs)


def build_roles(spec: dict, n: int) -> VertexRoles:
    rs = spec["roles"]
    if "path" in rs:
        return read_roles(rs["path"], n)
    return random_roles(n, rs.get("train", 0.1), rs.get("valid", 0.0), rs.get("test", 0.0),
                        rs.get("seed", 0))


def build_partition(spec: dict, g: Graph, roles: VertexRoles) -> PartitionMap:
    ps = spec["partition"]
    return partition_graph(g, roles, spec["K"], ps["method"], ps.get("seed", 0), ps.get("path"))


def cluster_config(spec: dict) -> ClusterConfig:
    return ClusterConfig.from_dict(dict(spec["cluster"], K=spec["K"]))
