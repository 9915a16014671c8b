"""Network topology generation and graph statistics.

Generators are fully seeded and draw from separate structure/latency/placement
streams so that, for example, attaching observers to a miner backbone never
perturbs the backbone's own edges or latencies.
"""
from __future__ import annotations

import hashlib
import heapq
import random
from collections import deque
from dataclasses import dataclass, field

MINER = "miner"
OBSERVER = "observer-spv"

VALID_KINDS = ("watts-strogatz", "erdos-renyi", "star", "path", "full-mesh", "miner-backbone")
VALID_LATENCY_KINDS = ("constant", "uniform", "lognormal")


class TopologyError(ValueError):
    """Invalid topology parameters."""


@dataclass(frozen=True)
class LatencySpec:
    kind: str = "constant"
    ms: float = 10.0
    lo_ms: float = 5.0
    hi_ms: float = 50.0
    mu: float = 3.0
    sigma: float = 0.5

    def draw_us(self, rng: random.Random) -> int:
        if self.kind == "constant":
            return max(1, int(self.ms * 1000))
        if self.kind == "uniform":
            return max(1, int(rng.uniform(self.lo_ms, self.hi_ms) * 1000))
        if self.kind == "lognormal":
            return max(1, int(rng.lognormvariate(self.mu, self.sigma) * 1000))
        raise TopologyError(f"unknown latency model {self.kind!r}")


@dataclass(frozen=True)
class TopologySpec:
    kind: str
    n: int = 0
    k: int = 4
    beta: float = 0.1
    p: float = 0.1
    m: int = 0
    o: int = 0
    # Direct peering among miners: adds any missing miner-miner edges so the
    # block overlay is connected regardless of where miners land.
    miner_mesh: bool = False
    latency: LatencySpec = field(default_factory=LatencySpec)
    seed: int = 0

    def validate(self) -> None:
        if self.kind not in VALID_KINDS:
            raise TopologyError(f"unknown topology kind {self.kind!r}")
        if self.kind == "miner-backbone":
            if self.m < 1 or self.o < 0:
                raise TopologyError("miner-backbone requires m >= 1 and o >= 0")
        elif self.n < 1:
            raise TopologyError("node count must be positive")
        if self.kind == "watts-strogatz":
            if self.k % 2 != 0 or self.k < 2:
                raise TopologyError("watts-strogatz k must be even and >= 2")
            if self.k >= self.n:
                raise TopologyError("watts-strogatz requires k < n")
            if not 0.0 <= self.beta <= 1.0:
                raise TopologyError("watts-strogatz beta must lie in [0, 1]")
        if self.kind == "erdos-renyi" and not 0.0 < self.p <= 1.0:
            raise TopologyError("erdos-renyi p must lie in (0, 1]")
        if self.latency.kind not in VALID_LATENCY_KINDS:
            raise TopologyError(f"unknown latency model {self.latency.kind!r}")


class NetworkGraph:
    def __init__(self, roles: list[str], edges: list[tuple[int, int, int]]):
        self.n = len(roles)
        self.roles = list(roles)
        self.edges = [(min(a, b), max(a, b), lat) for a, b, lat in edges]
        self.neighbors: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for a, b, lat in self.edges:
            self.neighbors[a].append((b, lat))
            self.neighbors[b].append((a, lat))
        for adj in self.neighbors:
            adj.sort()

    @property
    def miner_nodes(self) -> list[int]:
        return [i for i, role in enumerate(self.roles) if role == MINER]

    def adjacency(self) -> list[list[int]]:
        return [[peer for peer, _ in adj] for adj in self.neighbors]

    def edge_list_text(self) -> str:
        lines = [f"{a} {b} {lat}" for a, b, lat in sorted(self.edges)]
        return "\n".join(lines) + "\n"


def _sub_seed(seed: int, label: str) -> int:
    digest = hashlib.sha256(f"{seed}:{label}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _ring_lattice(n: int, k: int) -> list[tuple[int, int]]:
    edges = []
    for i in range(n):
        for j in range(1, k // 2 + 1):
            edges.append((i, (i + j) % n))
    return edges


def _watts_strogatz(n: int, k: int, beta: float, rng: random.Random) -> set[tuple[int, int]]:
    adj: set[tuple[int, int]] = set()

    def norm(a: int, b: int) -> tuple[int, int]:
        return (a, b) if a < b else (b, a)

    for a, b in _ring_lattice(n, k):
        adj.add(norm(a, b))
    # Rewire ring edges lane by lane, as in the classic construction.
    for j in range(1, k // 2 + 1):
        for i in range(n):
            edge = norm(i, (i + j) % n)
            if edge not in adj:
                continue
            if rng.random() >= beta:
                continue
            candidates = [t for t in range(n) if t != i and norm(i, t) not in adj]
            if not candidates:
                continue
            adj.discard(edge)
            adj.add(norm(i, rng.choice(candidates)))
    return adj


def _erdos_renyi(n: int, p: float, rng: random.Random) -> set[tuple[int, int]]:
    return {(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p}


def _components(n: int, adj_pairs: set[tuple[int, int]]) -> list[list[int]]:
    neighbors: list[list[int]] = [[] for _ in range(n)]
    for a, b in adj_pairs:
        neighbors[a].append(b)
        neighbors[b].append(a)
    seen = [False] * n
    comps = []
    for start in range(n):
        if seen[start]:
            continue
        comp = []
        queue = deque([start])
        seen[start] = True
        while queue:
            v = queue.popleft()
            comp.append(v)
            for w in neighbors[v]:
                if not seen[w]:
                    seen[w] = True
                    queue.append(w)
        comps.append(sorted(comp))
    return comps


def _connect_components(n: int, adj_pairs: set[tuple[int, int]], rng: random.Random) -> None:
    """Join components with the minimum number of added edges (c - 1)."""
    comps = _components(n, adj_pairs)
    if len(comps) <= 1:
        return
    connected = comps[0]
    for comp in comps[1:]:
        a = rng.choice(connected)
        b = rng.choice(comp)
        adj_pairs.add((min(a, b), max(a, b)))
        connected = connected + comp


def generate_topology(spec: TopologySpec, miner_count: int | None = None) -> NetworkGraph:
    """Build the graph named by the spec; same seed, same edge set."""
    spec.validate()
    rng_structure = random.Random(_sub_seed(spec.seed, "structure"))
    rng_latency = random.Random(_sub_seed(spec.seed, "latency"))
    rng_placement = random.Random(_sub_seed(spec.seed, "placement"))

    if spec.kind == "miner-backbone":
        n = spec.m + spec.o
        roles = [MINER] * spec.m + [OBSERVER] * spec.o
        backbone = [(i, j) for i in range(spec.m) for j in range(i + 1, spec.m)]
        attach: list[tuple[int, int]] = []
        for obs in range(spec.m, n):
            fanout = min(2, spec.m)
            for target in sorted(rng_structure.sample(range(spec.m), fanout)):
                attach.append((target, obs))
        ordered_edges = backbone + attach
    else:
        n = spec.n
        if spec.kind == "star":
            pairs = {(0, i) for i in range(1, n)}
        elif spec.kind == "path":
            pairs = {(i, i + 1) for i in range(n - 1)}
        elif spec.kind == "full-mesh":
            pairs = {(i, j) for i in range(n) for j in range(i + 1, n)}
        elif spec.kind == "watts-strogatz":
            pairs = _watts_strogatz(n, spec.k, spec.beta, rng_structure)
        elif spec.kind == "erdos-renyi":
            pairs = _erdos_renyi(n, spec.p, rng_structure)
        else:  # pragma: no cover
            raise TopologyError(spec.kind)
        _connect_components(n, pairs, rng_structure)
        ordered_edges = sorted(pairs)
        count = miner_count or 0
        if count > n:
            raise TopologyError(f"cannot place {count} miners on {n} nodes")
        miner_ids = sorted(rng_placement.sample(range(n), count)) if count else []
        roles = [MINER if i in set(miner_ids) else OBSERVER for i in range(n)]
        if spec.miner_mesh and len(miner_ids) >= 2:
            existing = set(pairs)
            overlay = [
                (a, b)
                for i, a in enumerate(miner_ids)
                for b in miner_ids[i + 1 :]
                if (a, b) not in existing
            ]
            ordered_edges = ordered_edges + overlay

    if spec.kind == "miner-backbone" and miner_count is not None and miner_count != spec.m:
        raise TopologyError(f"roster has {miner_count} miners but backbone declares {spec.m}")

    edges = [(a, b, spec.latency.draw_us(rng_latency)) for a, b in ordered_edges]
    return NetworkGraph(roles, edges)


def _bfs_distances(adjacency: list[list[int]], start: int) -> list[int]:
    dist = [-1] * len(adjacency)
    dist[start] = 0
    queue = deque([start])
    while queue:
        v = queue.popleft()
        for w in adjacency[v]:
            if dist[w] < 0:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def avg_path_length(graph: NetworkGraph) -> float:
    """Mean BFS hop distance over ordered node pairs; errors if disconnected."""
    if graph.n < 2:
        return 0.0
    adjacency = graph.adjacency()
    total = 0
    for start in range(graph.n):
        dist = _bfs_distances(adjacency, start)
        if any(d < 0 for d in dist):
            raise TopologyError("graph is disconnected")
        total += sum(dist)
    return total / (graph.n * (graph.n - 1))


def clustering_coefficient(graph: NetworkGraph) -> float:
    """Average local clustering; nodes with degree < 2 contribute zero."""
    if graph.n == 0:
        return 0.0
    neighbor_sets = [set(peers) for peers in graph.adjacency()]
    total = 0.0
    for v in range(graph.n):
        peers = sorted(neighbor_sets[v])
        d = len(peers)
        if d < 2:
            continue
        links = 0
        for i in range(d):
            for j in range(i + 1, d):
                if peers[j] in neighbor_sets[peers[i]]:
                    links += 1
        total += 2.0 * links / (d * (d - 1))
    return total / graph.n


def miner_hop_diameter(graph: NetworkGraph) -> int:
    """Maximum pairwise hop distance within the miner subset."""
    miners = graph.miner_nodes
    if not miners:
        raise TopologyError("graph has no miner nodes")
    if len(miners) == 1:
        return 0
    adjacency = graph.adjacency()
    worst = 0
    miner_set = set(miners)
    for start in miners:
        dist = _bfs_distances(adjacency, start)
        for m in miner_set:
            if dist[m] < 0:
                raise TopologyError("miners are not mutually reachable")
            worst = max(worst, dist[m])
    return worst


def shortest_delay_us(
    graph: NetworkGraph,
    start: int,
    edge_cost,
) -> list[int | None]:
    """Dijkstra over per-edge costs given by edge_cost(a, b, latency_us)."""
    dist: list[int | None] = [None] * graph.n
    heap = [(0, start)]
    while heap:
        d, v = heapq.heappop(heap)
        if dist[v] is not None:
            continue
        dist[v] = d
        for w, lat in graph.neighbors[v]:
            if dist[w] is None:
                heapq.heappush(heap, (d + edge_cost(v, w, lat), w))
    return dist
