"""Random SEM generation and sampling of normal and anomalous data."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .sem_model import (
    LinearSem,
    NoiseSpec,
    PerturbationSpec,
    observable_root_causes,
    path_matrix,
)

logger = logging.getLogger(__name__)

#: spectral radius above which cyclic coefficient matrices are rescaled
RESCALE_TRIGGER = 0.95
#: spectral radius after rescaling
RESCALE_TARGET = 0.9


@dataclass(frozen=True)
class GraphGenConfig:
    """Random graph/SEM generation settings.

    ``expected_degree`` is the expected total (in + out) degree per node,
    counted over observed and latent nodes alike. Noise standard deviations
    are drawn uniformly from ``noise_scale_range`` for every family.
    """

    p: int
    n_latent: int = 0
    expected_degree: float = 3.0
    cyclic: bool = False
    weight_range: Tuple[Tuple[float, float], Tuple[float, float]] = ((-2.0, -0.5), (0.5, 2.0))
    noise_family: str = "gaussian"
    noise_scale_range: Tuple[float, float] = (0.5, 2.0)
    seed: Optional[int] = None

    def __post_init__(self):
        if self.p < 2:
            raise ValueError("need p >= 2 observed nodes")
        if self.n_latent < 0:
            raise ValueError("n_latent must be non-negative")
        if not self.expected_degree > 0:
            raise ValueError("expected_degree must be positive")
        (lo1, hi1), (lo2, hi2) = self.weight_range
        if not (lo1 < hi1 < 0 < lo2 < hi2):
            raise ValueError("weight intervals must exclude a neighborhood of zero")

    @property
    def total_nodes(self) -> int:
        return self.p + self.n_latent

    def edge_probability(self) -> float:
        P = self.total_nodes
        if self.cyclic:
            prob = self.expected_degree / (2 * (P - 1))
        else:
            prob = self.expected_degree / (P - 1)
        return min(prob, 1.0)


@dataclass(eq=False)
class Dataset:
    """``m x p`` data matrix with column labels. May hold NaN after ingest."""

    values: np.ndarray
    column_labels: Tuple[str, ...] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim == 1:
            self.values = self.values[None, :]
        if self.values.ndim != 2:
            raise ValueError("Dataset values must be a 2-d array")
        if self.column_labels is None:
            self.column_labels = tuple(f"X{i + 1}" for i in range(self.values.shape[1]))
        self.column_labels = tuple(str(c) for c in self.column_labels)
        if len(self.column_labels) != self.values.shape[1]:
            raise ValueError("column_labels length does not match data width")

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def p(self) -> int:
        return self.values.shape[1]

    def drop_column(self, k: int) -> "Dataset":
        keep = [i for i in range(self.p) if i != k]
        return Dataset(self.values[:, keep], tuple(self.column_labels[i] for i in keep))

    def to_csv(self, path) -> None:
        import pandas as pd

        pd.DataFrame(self.values, columns=list(self.column_labels)).to_csv(path, index=False)


@dataclass(eq=False)
class AnomalousSample:
    """One outlier ``x_tilde`` over the observed columns.

    ``observable_roots`` are the observed column indices carrying the
    perturbation (latent roots mapped to their first observed descendants).
    """

    values: np.ndarray
    ground_truth: Optional[PerturbationSpec] = None
    observable_roots: Tuple[int, ...] = ()
    column_labels: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float).reshape(-1)

    def drop_column(self, k: int) -> "AnomalousSample":
        keep = [i for i in range(self.values.size) if i != k]
        roots = tuple(r - (r > k) for r in self.observable_roots if r != k)
        labels = None if self.column_labels is None else tuple(self.column_labels[i] for i in keep)
        return AnomalousSample(self.values[keep], self.ground_truth, roots, labels)


def _sample_weights(rng: np.random.Generator, size: int, weight_range) -> np.ndarray:
    (lo1, hi1), (lo2, hi2) = weight_range
    len1, len2 = hi1 - lo1, hi2 - lo2
    u = rng.uniform(0.0, len1 + len2, size)
    return np.where(u < len1, lo1 + u, lo2 + (u - len1))


def generate_graph(config: GraphGenConfig, rng: Optional[np.random.Generator] = None) -> LinearSem:
    """Random linear SEM with ``config.p`` observed and ``config.n_latent`` latent nodes.

    Cyclic mode includes every ordered pair independently with probability
    ``d / (2(P-1))``; acyclic mode draws a random order and includes each
    forward pair with probability ``d / (P-1)``. Latent nodes take the last
    indices and are wired like any other node. Cyclic coefficient matrices
    with spectral radius above 0.95 are rescaled to radius 0.9.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    P = config.total_nodes
    prob = config.edge_probability()
    mask = rng.random((P, P)) < prob
    np.fill_diagonal(mask, False)
    if not config.cyclic:
        order = rng.permutation(P)
        rank = np.empty(P, dtype=int)
        rank[order] = np.arange(P)
        # edge j -> i allowed only when j precedes i
        mask &= rank[None, :] < rank[:, None]
    A = np.zeros((P, P))
    A[mask] = _sample_weights(rng, int(mask.sum()), config.weight_range)
    if config.cyclic:
        radius = np.max(np.abs(np.linalg.eigvals(A))) if P else 0.0
        if radius > RESCALE_TRIGGER:
            logger.info("rescaling cyclic SEM: spectral radius %.3f -> %.2f", radius, RESCALE_TARGET)
            A *= RESCALE_TARGET / radius
    lo, hi = config.noise_scale_range
    scales = rng.uniform(lo, hi, P)
    noise = tuple(NoiseSpec(config.noise_family, float(s)) for s in scales)
    latent = tuple(range(config.p, P))
    return LinearSem(A, noise, latent)


def _draw_noise(sem: LinearSem, m: int, rng: np.random.Generator) -> np.ndarray:
    return np.column_stack([spec.sample(rng, m) for spec in sem.noise])


def sample_normal(sem: LinearSem, m: int, rng: Optional[np.random.Generator] = None) -> Dataset:
    """``m`` i.i.d. normal-regime rows ``X = (I-A)^{-1} N`` on the observed columns."""
    if m < 1:
        raise ValueError("m must be positive")
    rng = np.random.default_rng() if rng is None else rng
    P = path_matrix(sem)
    N = _draw_noise(sem, m, rng)
    Z = N @ P.T
    return Dataset(Z[:, list(sem.observed)], sem.observed_labels)


def sample_anomalous(
    sem: LinearSem,
    perturbation: PerturbationSpec,
    rng: Optional[np.random.Generator] = None,
    zero_noise: bool = False,
) -> AnomalousSample:
    """Outlier ``x_tilde = (I-A)^{-1}(n + Delta)`` on the observed columns.

    ``zero_noise`` freezes ``n`` at zero, leaving the pure propagation of
    ``Delta``.
    """
    if perturbation is None:
        raise ValueError("an anomalous sample needs a non-empty perturbation")
    rng = np.random.default_rng() if rng is None else rng
    P = path_matrix(sem)
    delta = perturbation.vector(sem.size)
    n = np.zeros(sem.size) if zero_noise else _draw_noise(sem, 1, rng)[0]
    z = P @ (n + delta)
    return AnomalousSample(
        z[list(sem.observed)],
        perturbation,
        observable_root_causes(sem, perturbation),
        sem.observed_labels,
    )


def random_perturbation(
    sem: LinearSem,
    n_root_causes: int,
    delta: float,
    rng: np.random.Generator,
    include_latent: bool = True,
    scale_by_noise: bool = False,
) -> PerturbationSpec:
    """Random distinct root causes, each shifted by ``delta``.

    With ``scale_by_noise`` each strength is multiplied by the root's noise
    standard deviation; by default ``delta`` is an absolute shift.
    """
    pool = np.arange(sem.size) if include_latent else np.asarray(sem.observed)
    roots = rng.choice(pool, size=n_root_causes, replace=False)
    deltas = [delta * (sem.noise[r].scale if scale_by_noise else 1.0) for r in roots]
    return PerturbationSpec(tuple(int(r) for r in roots), tuple(deltas))


# ---------------------------------------------------------------------------
# Semisynthetic microservice scenario
# ---------------------------------------------------------------------------

#: node order follows the call graph bottom-up
SCENARIO_NODES = (
    "Product DB",
    "Customer DB",
    "Order DB",
    "Shipping Cost Service",
    "Caching Service",
    "Product Service",
    "Auth Service",
    "Order Service",
    "API",
    "www",
    "Website",
)

#: (callee, caller) latency edges
SCENARIO_EDGES = (
    ("Product DB", "Caching Service"),
    ("Caching Service", "Product Service"),
    ("Shipping Cost Service", "Product Service"),
    ("Customer DB", "Product Service"),
    ("Customer DB", "Auth Service"),
    ("Order DB", "Order Service"),
    ("Product Service", "API"),
    ("Customer DB", "API"),
    ("Auth Service", "API"),
    ("Order Service", "API"),
    ("API", "www"),
    ("Auth Service", "www"),
    ("www", "Website"),
)

# Truncated exponential: (upper truncation in units of scale, scale).
# Half-normal: (location, scale). Constants follow the public microservice
# latency example the scenario is modeled on.
SCENARIO_NOISE = {
    "Website": ("truncexpon", 3.0, 0.2),
    "www": ("truncexpon", 2.0, 0.2),
    "API": ("halfnorm", 0.5, 0.2),
    "Auth Service": ("halfnorm", 0.1, 0.2),
    "Product Service": ("halfnorm", 0.1, 0.2),
    "Order Service": ("halfnorm", 0.5, 0.2),
    "Shipping Cost Service": ("halfnorm", 0.1, 0.2),
    "Caching Service": ("halfnorm", 0.1, 0.1),
    "Order DB": ("truncexpon", 5.0, 0.2),
    "Customer DB": ("truncexpon", 6.0, 0.2),
    "Product DB": ("truncexpon", 10.0, 0.2),
}

SCENARIO_SHIFT = 2.0


def scenario_noise(rng: np.random.Generator, m: int) -> dict:
    out = {}
    for name in SCENARIO_NODES:
        kind, a, scale = SCENARIO_NOISE[name]
        if kind == "truncexpon":
            out[name] = stats.truncexpon.rvs(b=a, scale=scale, size=m, random_state=rng)
        else:
            out[name] = stats.halfnorm.rvs(loc=a, scale=scale, size=m, random_state=rng)
    return out


def scenario_modal_noise() -> dict:
    """Modes of the scenario noise families (0 for truncated exponential, loc for half-normal)."""
    return {
        name: (0.0 if kind == "truncexpon" else a) for name, (kind, a, _) in SCENARIO_NOISE.items()
    }


def scenario_forward(noise: dict, gate, shift: Optional[dict] = None) -> np.ndarray:
    """Evaluate the scenario mechanisms given noise and the Bernoulli cache gate.

    ``shift`` maps node names to additive shifts that enter with the node's
    noise and propagate downstream. Returns rows in ``SCENARIO_NODES`` order.
    """
    shift = shift or {}
    eps = {k: np.asarray(v, dtype=float) + shift.get(k, 0.0) for k, v in noise.items()}
    gate = np.asarray(gate, dtype=float)
    x = {}
    x["Product DB"] = eps["Product DB"]
    x["Customer DB"] = eps["Customer DB"]
    x["Order DB"] = eps["Order DB"]
    x["Shipping Cost Service"] = eps["Shipping Cost Service"]
    x["Caching Service"] = gate * x["Product DB"] + eps["Caching Service"]
    x["Product Service"] = (
        np.maximum(np.maximum(x["Shipping Cost Service"], x["Caching Service"]), x["Customer DB"])
        + eps["Product Service"]
    )
    x["Auth Service"] = x["Customer DB"] + eps["Auth Service"]
    x["Order Service"] = x["Order DB"] + eps["Order Service"]
    x["API"] = x["Product Service"] + x["Customer DB"] + x["Auth Service"] + x["Order Service"] + eps["API"]
    x["www"] = x["API"] + x["Auth Service"] + eps["www"]
    x["Website"] = x["www"] + eps["Website"]
    return np.column_stack(np.broadcast_arrays(*(x[n] for n in SCENARIO_NODES)))


def semisynthetic_scenario(
    target: str,
    rng: Optional[np.random.Generator] = None,
    m: int = 1000,
    shift: float = SCENARIO_SHIFT,
) -> Tuple[Dataset, AnomalousSample]:
    """Normal data and one shifted outlier from the nonlinear microservice scenario."""
    if target not in SCENARIO_NODES:
        raise ValueError(f"unknown scenario target {target!r}; expected one of {SCENARIO_NODES}")
    rng = np.random.default_rng() if rng is None else rng
    normal = scenario_forward(scenario_noise(rng, m), rng.integers(0, 2, m))
    anomalous = scenario_forward(scenario_noise(rng, 1), rng.integers(0, 2, 1), {target: shift})[0]
    k = SCENARIO_NODES.index(target)
    pert = PerturbationSpec((k,), (shift,))
    return (
        Dataset(normal, SCENARIO_NODES),
        AnomalousSample(anomalous, pert, (k,), SCENARIO_NODES),
    )


def scenario_sem_dict() -> dict:
    """Scenario graph in the SEM JSON schema (unit weights of the linear part)."""
    col = {n: i for i, n in enumerate(SCENARIO_NODES)}
    return {
        "p": len(SCENARIO_NODES),
        "latent": [],
        "labels": list(SCENARIO_NODES),
        "edges": [{"from": col[a], "to": col[b], "w": 1.0} for a, b in SCENARIO_EDGES],
        "noise": [
            {"family": SCENARIO_NOISE[n][0], "loc_or_bound": SCENARIO_NOISE[n][1], "scale": SCENARIO_NOISE[n][2]}
            for n in SCENARIO_NODES
        ],
    }
