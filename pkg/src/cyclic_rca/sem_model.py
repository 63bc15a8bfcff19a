"""Population-level machinery for linear (possibly cyclic) SEMs.

A linear SEM over ``P`` nodes is ``Z = A Z + N`` with ``A[i, j]`` the direct
effect of node ``j`` on node ``i``. Some nodes may be latent; the observed
nodes keep their relative order.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple

import numpy as np

NOISE_FAMILIES = ("gaussian", "uniform", "exponential", "lognormal")

#: relative singular-value threshold below which ``I - A`` counts as singular
INVERTIBILITY_RTOL = 1e-10

#: the combinatorial oracle refuses graphs larger than this
ORACLE_MAX_NODES = 10


class NonInvertibleSEMError(ValueError):
    """``I - A`` is numerically singular."""


class LatentProjectionError(ValueError):
    """Latent nodes cannot be marginalized out."""


class OracleScaleError(ValueError):
    """Graph too large for the path-enumeration oracle."""


# ---------------------------------------------------------------------------
# Types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DirectedGraph:
    """Directed graph with edges stored as ``(source, target)`` pairs."""

    node_count: int
    edges: FrozenSet[Tuple[int, int]]
    node_labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        if self.node_count < 1:
            raise ValueError("node_count must be positive")
        object.__setattr__(self, "edges", frozenset((int(j), int(i)) for j, i in self.edges))
        for j, i in self.edges:
            if j == i:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= j < self.node_count and 0 <= i < self.node_count):
                raise ValueError(f"edge {j}->{i} out of range")
        if self.node_labels is not None:
            labels = tuple(self.node_labels)
            if len(labels) != self.node_count:
                raise ValueError("node_labels length mismatch")
            object.__setattr__(self, "node_labels", labels)

    @classmethod
    def from_matrix(cls, A, labels=None) -> "DirectedGraph":
        A = np.asarray(A)
        targets, sources = np.nonzero(A)
        return cls(A.shape[0], frozenset(zip(sources.tolist(), targets.tolist())), labels)

    def parents(self, i: int) -> FrozenSet[int]:
        return frozenset(j for j, t in self.edges if t == i)

    def children(self, j: int) -> FrozenSet[int]:
        return frozenset(t for s, t in self.edges if s == j)

    def successors(self) -> List[List[int]]:
        out: List[List[int]] = [[] for _ in range(self.node_count)]
        for j, i in sorted(self.edges):
            out[j].append(i)
        return out

    def predecessors(self) -> List[List[int]]:
        out: List[List[int]] = [[] for _ in range(self.node_count)]
        for j, i in sorted(self.edges):
            out[i].append(j)
        return out


@dataclass(frozen=True)
class NoiseSpec:
    """Mean-zero noise for one node; ``scale`` is the standard deviation.

    ``shape`` is the log-space sigma of the lognormal family and is ignored
    for the other families.
    """

    family: str = "gaussian"
    scale: float = 1.0
    shape: float = 1.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise ValueError(f"unknown noise family {self.family!r}")
        if not self.scale > 0:
            raise ValueError("noise scale must be positive")

    @property
    def variance(self) -> float:
        return self.scale ** 2

    def sample(self, rng: np.random.Generator, size) -> np.ndarray:
        s = self.scale
        if self.family == "gaussian":
            return rng.normal(0.0, s, size)
        if self.family == "uniform":
            half = s * math.sqrt(3.0)
            return rng.uniform(-half, half, size)
        if self.family == "exponential":
            return rng.exponential(s, size) - s
        # lognormal standardized by its analytic mean and std
        sig = self.shape
        mean = math.exp(sig ** 2 / 2)
        std = math.sqrt((math.exp(sig ** 2) - 1) * math.exp(sig ** 2))
        return s * (rng.lognormal(0.0, sig, size) - mean) / std

    def to_dict(self) -> dict:
        d = {"family": self.family, "scale": self.scale}
        if self.family == "lognormal":
            d["shape"] = self.shape
        return d


@dataclass(frozen=True)
class PerturbationSpec:
    """Additive shift ``Delta``: strengths ``deltas`` at ``root_causes``.

    Indices refer to the full node set of the SEM (observed and latent).
    """

    root_causes: Tuple[int, ...]
    deltas: Tuple[float, ...]

    def __post_init__(self):
        roots = tuple(int(r) for r in self.root_causes)
        deltas = tuple(float(d) for d in self.deltas)
        if not roots:
            raise ValueError("perturbation needs at least one root cause")
        if len(roots) != len(deltas):
            raise ValueError("root_causes and deltas differ in length")
        if len(set(roots)) != len(roots):
            raise ValueError("duplicate root cause")
        if any(d == 0.0 for d in deltas):
            raise ValueError("perturbation strengths must be non-zero")
        object.__setattr__(self, "root_causes", roots)
        object.__setattr__(self, "deltas", deltas)

    def vector(self, size: int) -> np.ndarray:
        delta = np.zeros(size)
        for r, d in zip(self.root_causes, self.deltas):
            if not 0 <= r < size:
                raise ValueError(f"root cause {r} out of range")
            delta[r] = d
        return delta


@dataclass(frozen=True, eq=False)
class LinearSem:
    """Linear SEM ``Z = A Z + N`` with an optional latent subset."""

    A: np.ndarray
    noise: Tuple[NoiseSpec, ...]
    latent: Tuple[int, ...] = ()
    labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        A = np.array(self.A, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("A must be square")
        if np.any(np.diag(A) != 0):
            raise ValueError("A must have a zero diagonal")
        A.setflags(write=False)
        object.__setattr__(self, "A", A)
        noise = tuple(self.noise)
        if len(noise) != A.shape[0]:
            raise ValueError("need one NoiseSpec per node")
        object.__setattr__(self, "noise", noise)
        latent = tuple(sorted(int(l) for l in self.latent))
        if len(set(latent)) != len(latent) or any(not 0 <= l < A.shape[0] for l in latent):
            raise ValueError("invalid latent index set")
        object.__setattr__(self, "latent", latent)
        if self.labels is None:
            object.__setattr__(self, "labels", default_labels(A.shape[0], latent))
        elif len(self.labels) != A.shape[0]:
            raise ValueError("labels length mismatch")
        else:
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def size(self) -> int:
        return self.A.shape[0]

    @property
    def observed(self) -> Tuple[int, ...]:
        lat = set(self.latent)
        return tuple(i for i in range(self.size) if i not in lat)

    @property
    def observed_labels(self) -> Tuple[str, ...]:
        return tuple(self.labels[i] for i in self.observed)

    @property
    def noise_cov(self) -> np.ndarray:
        return np.diag([n.variance for n in self.noise])

    @property
    def graph(self) -> DirectedGraph:
        return DirectedGraph.from_matrix(self.A, self.labels)

    def to_dict(self) -> dict:
        targets, sources = np.nonzero(self.A)
        return {
            "p": len(self.observed),
            "latent": list(self.latent),
            "labels": list(self.labels),
            "edges": [
                {"from": int(j), "to": int(i), "w": float(self.A[i, j])}
                for i, j in sorted(zip(targets.tolist(), sources.tolist()), key=lambda e: (e[1], e[0]))
            ],
            "noise": [n.to_dict() for n in self.noise],
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "LinearSem":
        latent = tuple(d.get("latent", ()))
        size = int(d["p"]) + len(latent)
        A = np.zeros((size, size))
        for e in d.get("edges", ()):
            A[int(e["to"]), int(e["from"])] = float(e["w"])
        noise = tuple(
            NoiseSpec(n.get("family", "gaussian"), float(n.get("scale", 1.0)), float(n.get("shape", 1.0)))
            for n in d["noise"]
        )
        labels = d.get("labels")
        return cls(A, noise, latent, tuple(labels) if labels else None)

    def to_json(self, path=None, **kw) -> str:
        text = json.dumps(self.to_dict(), indent=kw.pop("indent", 2), **kw)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "LinearSem":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def default_labels(size: int, latent: Iterable[int] = ()) -> Tuple[str, ...]:
    lat = set(latent)
    labels, nx, nl = [], 0, 0
    for i in range(size):
        if i in lat:
            nl += 1
            labels.append(f"L{nl}")
        else:
            nx += 1
            labels.append(f"X{nx}")
    return tuple(labels)


@dataclass(frozen=True, eq=False)
class ProjectedSem:
    """Observed-only SEM ``X = A_bar X + N_bar`` with correlated noise."""

    A_bar: np.ndarray
    noise_cov_bar: np.ndarray
    delta_bar: np.ndarray
    scaling: np.ndarray = field(repr=False, default=None)

    @property
    def noise_precision(self) -> np.ndarray:
        return np.linalg.inv(self.noise_cov_bar)

    def covariance(self) -> np.ndarray:
        P = _checked_inverse(np.eye(self.A_bar.shape[0]) - self.A_bar)
        return P @ self.noise_cov_bar @ P.T

    def precision(self) -> np.ndarray:
        M = np.eye(self.A_bar.shape[0]) - self.A_bar
        return M.T @ self.noise_precision @ M


# ---------------------------------------------------------------------------
# Exact linear algebra
# ---------------------------------------------------------------------------


def check_invertible(M: np.ndarray, what: str = "I - A") -> None:
    sv = np.linalg.svd(M, compute_uv=False)
    if sv.size and not sv[-1] > INVERTIBILITY_RTOL * sv[0]:
        raise NonInvertibleSEMError(
            f"non-invertible SEM: smallest singular value of {what} is {sv[-1]:.3e} "
            f"(largest {sv[0]:.3e})"
        )


def _checked_inverse(M: np.ndarray, what: str = "I - A") -> np.ndarray:
    check_invertible(M, what)
    return np.linalg.inv(M)


def path_matrix(sem: LinearSem) -> np.ndarray:
    """Total-effect matrix ``(I - A)^{-1}`` over all nodes."""
    return _checked_inverse(np.eye(sem.size) - sem.A)


def population_covariance(sem: LinearSem) -> np.ndarray:
    P = path_matrix(sem)
    return P @ sem.noise_cov @ P.T


def population_precision(sem: LinearSem) -> np.ndarray:
    """Precision over all nodes in product form ``(I-A)^T Theta_NN (I-A)``."""
    M = np.eye(sem.size) - sem.A
    check_invertible(M)
    theta_noise = np.diag([1.0 / n.variance for n in sem.noise])
    return M.T @ theta_noise @ M


def observed_covariance(sem: LinearSem) -> np.ndarray:
    obs = list(sem.observed)
    return population_covariance(sem)[np.ix_(obs, obs)]


def observed_precision(sem: LinearSem) -> np.ndarray:
    """Precision of the observed marginal.

    Without latents this is the product form; otherwise the inverse of the
    observed covariance block.
    """
    if not sem.latent:
        return population_precision(sem)
    return np.linalg.inv(observed_covariance(sem))


def marginalize_latents(sem: LinearSem, perturbation: Optional[PerturbationSpec] = None) -> ProjectedSem:
    """Project the SEM onto its observed nodes via the Schur complement.

    Returns the projected coefficients (zero diagonal), the covariance of the
    projected noise and the projected perturbation (zero when
    ``perturbation`` is None).
    """
    obs, lat = list(sem.observed), list(sem.latent)
    A = sem.A
    delta = perturbation.vector(sem.size) if perturbation is not None else np.zeros(sem.size)
    sig = np.array([n.variance for n in sem.noise])
    if not lat:
        return ProjectedSem(A.copy(), np.diag(sig), delta.copy(), np.ones(len(obs)))

    A_xx = A[np.ix_(obs, obs)]
    A_xl = A[np.ix_(obs, lat)]
    A_lx = A[np.ix_(lat, obs)]
    A_ll = A[np.ix_(lat, lat)]
    try:
        inner = _checked_inverse(np.eye(len(lat)) - A_ll, "I - A_LL")
    except NonInvertibleSEMError as exc:
        raise LatentProjectionError(f"latent projection degenerate: {exc}") from None
    B = A_xl @ inner
    S = A_xx + B @ A_lx
    denom = 1.0 - np.diag(S)
    if np.any(np.abs(denom) <= INVERTIBILITY_RTOL):
        raise LatentProjectionError("latent projection degenerate: s_ii = 1 for some observed node")
    d = 1.0 / denom
    A_bar = d[:, None] * S
    np.fill_diagonal(A_bar, 0.0)
    M_cov = np.diag(sig[obs]) + B @ np.diag(sig[lat]) @ B.T
    noise_cov = d[:, None] * M_cov * d[None, :]
    noise_cov = 0.5 * (noise_cov + noise_cov.T)
    delta_bar = d * (delta[obs] + B @ delta[lat])
    return ProjectedSem(A_bar, noise_cov, delta_bar, d)


# ---------------------------------------------------------------------------
# Graph queries
# ---------------------------------------------------------------------------


class Relatives(NamedTuple):
    parents: FrozenSet[int]
    children: FrozenSet[int]
    ancestors: FrozenSet[int]
    descendants: FrozenSet[int]


def _reach(adj: Sequence[Sequence[int]], start: int) -> FrozenSet[int]:
    # nodes reachable by paths of length >= 1; start included only via a cycle
    seen = set()
    stack = list(adj[start])
    while stack:
        v = stack.pop()
        if v in seen:
            continue
        seen.add(v)
        stack.extend(adj[v])
    return frozenset(seen)


def relatives(graph: DirectedGraph, node: int) -> Relatives:
    if not 0 <= node < graph.node_count:
        raise ValueError(f"node {node} out of range")
    succ, pred = graph.successors(), graph.predecessors()
    return Relatives(
        parents=frozenset(pred[node]),
        children=frozenset(succ[node]),
        ancestors=_reach(pred, node),
        descendants=_reach(succ, node),
    )


def latent_sources(graph: DirectedGraph, latent: Iterable[int]) -> Dict[int, FrozenSet[int]]:
    """Map each observed node to the latents reaching it through latent-only paths."""
    lat = frozenset(latent)
    succ = graph.successors()
    out: Dict[int, set] = {i: set() for i in range(graph.node_count) if i not in lat}
    for l in lat:
        stack, seen = [l], {l}
        while stack:
            v = stack.pop()
            for w in succ[v]:
                if w in lat:
                    if w not in seen:
                        seen.add(w)
                        stack.append(w)
                else:
                    out[w].add(l)
    return {i: frozenset(s) for i, s in out.items()}


def zigzag_reachable(graph: DirectedGraph, latent: Iterable[int], i: int, j: int) -> bool:
    """Whether observed ``i`` and ``j`` are joined by a zig-zag of latent paths.

    A zig-zag alternates ``X <~ L ~> X <~ L ~> ...`` where each ``L ~> X`` is
    a directed path whose interior nodes are all latent. ``i == j`` is
    reported as reachable (diagonal entries never vanish).
    """
    lat = frozenset(latent)
    if i in lat or j in lat:
        raise ValueError("zigzag endpoints must be observed")
    if i == j:
        return True
    sources = latent_sources(graph, lat)
    # BFS over observed nodes; two observed nodes are adjacent when they share a latent source
    frontier, seen_obs, seen_lat = [i], {i}, set()
    while frontier:
        nxt = []
        for x in frontier:
            for l in sources[x] - seen_lat:
                seen_lat.add(l)
                for y, srcs in sources.items():
                    if l in srcs and y not in seen_obs:
                        if y == j:
                            return True
                        seen_obs.add(y)
                        nxt.append(y)
        frontier = nxt
    return False


def observable_root_causes(sem: LinearSem, perturbation: PerturbationSpec) -> Tuple[int, ...]:
    """Observed column indices that carry the perturbation after projection.

    Observed roots map to themselves; a latent root maps to the first
    observed nodes reached from it along latent-only paths.
    """
    obs = sem.observed
    col = {v: k for k, v in enumerate(obs)}
    graph = sem.graph
    lat = set(sem.latent)
    sources = latent_sources(graph, lat)
    out = set()
    for r in perturbation.root_causes:
        if r in col:
            out.add(col[r])
        else:
            out.update(col[x] for x, srcs in sources.items() if r in srcs)
    return tuple(sorted(out))


# ---------------------------------------------------------------------------
# Combinatorial oracle for the path matrix
# ---------------------------------------------------------------------------


def _simple_cycles(succ: Sequence[Sequence[int]], n: int) -> List[Tuple[int, ...]]:
    """Simple cycles in canonical rotation (smallest node first)."""
    cycles = []
    for start in range(n):
        stack = [(start, [start])]
        while stack:
            v, path = stack.pop()
            for w in sorted(succ[v], reverse=True):
                if w == start:
                    cycles.append(tuple(path))
                elif w > start and w not in path:
                    stack.append((w, path + [w]))
    return sorted(cycles)


def _simple_paths(succ: Sequence[Sequence[int]], src: int, dst: int) -> List[Tuple[int, ...]]:
    if src == dst:
        return [(src,)]
    out = []
    stack = [(src, [src])]
    while stack:
        v, path = stack.pop()
        for w in sorted(succ[v], reverse=True):
            if w == dst:
                out.append(tuple(path + [w]))
            elif w not in path:
                stack.append((w, path + [w]))
    return out


def _cycle_expansion(graph: DirectedGraph, weights: Mapping[Tuple[int, int], float]):
    """Edge weights plus a memoized signed cycle sum over node bitmasks.

    ``cycle_sum(mask)`` sums, over collections of vertex-disjoint simple
    cycles inside ``mask``, ``(-1)^q`` times the product of their weights.
    Every collection either avoids the lowest node of ``mask`` or uses exactly
    one cycle through it, which gives the recursion.
    """
    n = graph.node_count
    if n > ORACLE_MAX_NODES:
        raise OracleScaleError(f"oracle scale exceeded: {n} nodes > {ORACLE_MAX_NODES}")
    w = {(int(j), int(i)): float(weights[(j, i)]) for j, i in graph.edges}
    succ = graph.successors()
    cyc_info = []
    for c in _simple_cycles(succ, n):
        mask = 0
        for v in c:
            mask |= 1 << v
        prod = 1.0
        for a, b in zip(c, c[1:] + c[:1]):
            prod *= w[(a, b)]
        cyc_info.append((mask, prod))

    @lru_cache(maxsize=None)
    def cycle_sum(mask: int) -> float:
        if mask == 0:
            return 1.0
        low = mask & -mask
        total = cycle_sum(mask & ~low)
        for cmask, prod in cyc_info:
            if cmask & low and cmask & mask == cmask:
                total -= prod * cycle_sum(mask & ~cmask)
        return total

    return w, succ, cycle_sum


def cycle_determinant(graph: DirectedGraph, weights: Mapping[Tuple[int, int], float]) -> float:
    """``det(I - A)`` from the signed disjoint-cycle expansion."""
    _, _, cycle_sum = _cycle_expansion(graph, weights)
    return cycle_sum((1 << graph.node_count) - 1)


def path_matrix_oracle(graph: DirectedGraph, weights: Mapping[Tuple[int, int], float]) -> np.ndarray:
    """Path matrix by explicit enumeration of paths and disjoint cycles.

    Entry ``(i, j)`` sums, over simple paths ``j ~> i``, the product of edge
    weights times the signed sum over collections of vertex-disjoint cycles
    avoiding the path; the result is divided by the same signed cycle sum
    over all nodes, which equals ``det(I - A)``. Nothing here inverts a
    matrix. Limited to ``ORACLE_MAX_NODES`` nodes.
    """
    n = graph.node_count
    w, succ, cycle_sum = _cycle_expansion(graph, weights)
    full = (1 << n) - 1
    det = cycle_sum(full)
    if det == 0.0:
        raise NonInvertibleSEMError("non-invertible SEM: cycle expansion of det(I - A) is zero")
    out = np.zeros((n, n))
    for j in range(n):
        for i in range(n):
            total = 0.0
            for path in _simple_paths(succ, j, i):
                pmask = 0
                prod = 1.0
                for v in path:
                    pmask |= 1 << v
                for a, b in zip(path, path[1:]):
                    prod *= w[(a, b)]
                total += prod * cycle_sum(full & ~pmask)
            out[i, j] = total / det
    return out


def weights_from_matrix(A: np.ndarray) -> Dict[Tuple[int, int], float]:
    targets, sources = np.nonzero(A)
    return {(int(j), int(i)): float(A[i, j]) for i, j in zip(targets, sources)}
