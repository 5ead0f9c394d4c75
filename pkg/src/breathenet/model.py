"""Static network description, algorithm configuration and power-unit helpers.

All power arithmetic in this package is carried out in dBm; configuration
files may declare powers in watts or dBm with an explicit unit tag and are
converted on load.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

import numpy as np


class ConfigError(ValueError):
    """Raised when a topology / scenario / config description is invalid."""


def watts_to_dbm(p: float) -> float:
    """Convert transmit power in watts to dBm. Rejects non-positive input."""
    if p <= 0:
        raise ValueError(f"power must be positive, got {p} W")
    return 10.0 * math.log10(p * 1000.0)


def dbm_to_watts(p: float) -> float:
    return 10.0 ** (p / 10.0) / 1000.0


def _power_to_dbm(obj) -> float:
    """Read a power entry from a config dict: {"value": x, "unit": "watts"|"dbm"}."""
    if isinstance(obj, (int, float)):
        raise ConfigError("power entries need an explicit unit tag, e.g. "
                          '{"value": 20, "unit": "watts"}')
    try:
        value = float(obj["value"])
        unit = str(obj["unit"]).lower()
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed power entry: {obj!r}") from exc
    if unit == "watts":
        return watts_to_dbm(value)
    if unit == "dbm":
        return value
    raise ConfigError(f"unknown power unit {unit!r} (want 'watts' or 'dbm')")


@dataclass(frozen=True)
class Antenna:
    """One antenna: pilot power, rated ceiling, PRB capacity, planar position.

    Powers are dBm. ``r`` is the PRB capacity used as the busy-degree
    denominator and must be a positive integer.
    """

    id: int
    p: float
    p_max: float
    r: int
    position: tuple[float, float] | None = None

    def __post_init__(self):
        if self.id < 1:
            raise ConfigError(f"antenna ids start at 1, got {self.id}")
        if not self.p <= self.p_max:
            raise ConfigError(
                f"antenna {self.id}: pilot power {self.p} dBm above rated "
                f"maximum {self.p_max} dBm")
        if int(self.r) != self.r or self.r < 1:
            raise ConfigError(f"antenna {self.id}: PRB capacity must be a "
                              f"positive integer, got {self.r}")


@dataclass(frozen=True)
class NetworkTopology:
    """Immutable antenna set plus the declared neighbour relation.

    Antenna ids must be dense 1..n. ``neighbours[k]`` holds the neighbour ids
    of antenna k+1. The relation is expected to be symmetric and free of
    self-loops; ``validate_topology`` reports violations instead of fixing
    them, ``symmetrize`` repairs them.
    """

    antennas: tuple[Antenna, ...]
    neighbours: tuple[frozenset[int], ...]

    def __post_init__(self):
        n = len(self.antennas)
        if n == 0:
            raise ConfigError("topology needs at least one antenna")
        ids = [a.id for a in self.antennas]
        if ids != list(range(1, n + 1)):
            raise ConfigError(f"antenna ids must be dense 1..{n}, got {ids}")
        if len(self.neighbours) != n:
            raise ConfigError("neighbour list length does not match antenna count")
        for i, peers in enumerate(self.neighbours, start=1):
            for j in peers:
                if not 1 <= j <= n:
                    raise ConfigError(f"antenna {i}: neighbour id {j} out of range")
                if j == i:
                    raise ConfigError(f"antenna {i}: self-loop in neighbour set")

    @property
    def n(self) -> int:
        return len(self.antennas)

    def initial_powers(self) -> np.ndarray:
        return np.array([a.p for a in self.antennas], dtype=float)

    def p_max_vector(self) -> np.ndarray:
        return np.array([a.p_max for a in self.antennas], dtype=float)

    def prb_vector(self) -> np.ndarray:
        return np.array([a.r for a in self.antennas], dtype=float)

    def positions(self) -> np.ndarray:
        if any(a.position is None for a in self.antennas):
            raise ConfigError("topology has antennas without positions")
        return np.array([a.position for a in self.antennas], dtype=float)


@dataclass(frozen=True)
class SimulationClock:
    """Sampling-period bookkeeping: period index k, period length T, slot H.

    The balancing loop operates once per period; slot-level averaging inside a
    period is collapsed by the simulator, but T must still be an integer
    multiple of H so that imported traces line up.
    """

    k: int = 1
    T: float = 3600.0
    H: float = 1.0

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"period index starts at 1, got {self.k}")
        if self.T <= 0 or self.H <= 0:
            raise ConfigError("T and H must be positive")
        ratio = self.T / self.H
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError(f"T={self.T} is not an integer multiple of H={self.H}")


@dataclass(frozen=True)
class AlgorithmConfig:
    """Tuning knobs of the balancing loop.

    epsilon   relative perturbation used by the Jacobian estimator
    gamma     smoothing factor applied to the adjustment, in (0, 1]
    tau       power-decay weight of the fast balancer (per dBm)
    delta_p   increment of the minimum-power search, dB
    n_s       per-antenna record sample cap for the Jacobian estimator
    f_con     required neighbourhood coverage rate
    r_c       coverage signal threshold, dBm
    target_mode  'global' or 'local' busy-degree targets
    top_m     antennas listed per measurement record
    over_busy_threshold  busy-degree at or above which an antenna counts as over-busy
    coverage_mode  'exact' or 'surrogate' coverage evaluation inside the step
    coverage_sample  cap on records fed to the coverage pipeline (0 = all)
    svd_cutoff  relative singular-value floor of the least-squares solve;
                directions weaker than this fraction of the largest are
                treated as sampling noise and dropped
    """

    epsilon: float = 0.1
    gamma: float = 1.0
    tau: float = 0.01
    delta_p: float = 1.0
    n_s: int = 5000
    f_con: float = 0.999
    r_c: float = -90.0
    target_mode: str = "global"
    top_m: int = 6
    over_busy_threshold: float = 0.7
    coverage_mode: str = "exact"
    coverage_sample: int = 0
    svd_cutoff: float = 0.05

    def __post_init__(self):
        if not 0 < self.epsilon:
            raise ConfigError("epsilon must be positive")
        if not 0 < self.gamma <= 1:
            raise ConfigError("gamma must lie in (0, 1]")
        if self.tau < 0:
            raise ConfigError("tau must be non-negative")
        if self.delta_p <= 0:
            raise ConfigError("delta_p must be positive")
        if self.n_s < 1:
            raise ConfigError("n_s must be at least 1")
        if not 0 < self.f_con <= 1:
            raise ConfigError("f_con must lie in (0, 1]")
        if self.target_mode not in ("global", "local"):
            raise ConfigError(f"unknown target_mode {self.target_mode!r}")
        if self.top_m < 1:
            raise ConfigError("top_m must be at least 1")
        if self.coverage_mode not in ("exact", "surrogate"):
            raise ConfigError(f"unknown coverage_mode {self.coverage_mode!r}")
        if self.coverage_sample < 0:
            raise ConfigError("coverage_sample must be >= 0")
        if not 0 <= self.svd_cutoff < 1:
            raise ConfigError("svd_cutoff must lie in [0, 1)")

    def with_overrides(self, **kwargs) -> "AlgorithmConfig":
        return replace(self, **kwargs)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of validate_topology."""

    symmetry_violations: tuple[tuple[int, int], ...]
    isolated: tuple[int, ...]
    strongly_connected: bool

    @property
    def ok(self) -> bool:
        return not self.symmetry_violations and not self.isolated and self.strongly_connected


def validate_topology(topo: NetworkTopology) -> ValidationReport:
    """Check neighbour symmetry, isolation and connectivity of the topology.

    The neighbour relation is treated as a directed graph (edge i->j when j is
    declared a neighbour of i); connectivity is strong connectivity of that
    graph, which for a symmetric relation coincides with plain connectivity.
    """
    n = topo.n
    violations = []
    for i, peers in enumerate(topo.neighbours, start=1):
        for j in sorted(peers):
            if i not in topo.neighbours[j - 1]:
                violations.append((i, j))
    isolated = tuple(i for i, peers in enumerate(topo.neighbours, start=1)
                     if not peers) if n > 1 else ()

    forward = _reachable(topo.neighbours, 0)
    backward = _reachable(_reverse(topo.neighbours), 0)
    connected = bool(forward.all() and backward.all())
    return ValidationReport(tuple(violations), isolated, connected)


def _reachable(adj: tuple[frozenset[int], ...], start: int) -> np.ndarray:
    n = len(adj)
    seen = np.zeros(n, dtype=bool)
    seen[start] = True
    stack = [start]
    while stack:
        v = stack.pop()
        for j in adj[v]:
            if not seen[j - 1]:
                seen[j - 1] = True
                stack.append(j - 1)
    return seen


def _reverse(adj: tuple[frozenset[int], ...]) -> tuple[frozenset[int], ...]:
    rev = [set() for _ in adj]
    for i, peers in enumerate(adj, start=1):
        for j in peers:
            rev[j - 1].add(i)
    return tuple(frozenset(s) for s in rev)


def symmetrize(topo: NetworkTopology) -> NetworkTopology:
    """Return a copy whose neighbour relation is the symmetric closure."""
    closed = [set(s) for s in topo.neighbours]
    for i, peers in enumerate(topo.neighbours, start=1):
        for j in peers:
            closed[j - 1].add(i)
    return NetworkTopology(topo.antennas, tuple(frozenset(s) for s in closed))


def topology_from_dict(d: dict) -> NetworkTopology:
    try:
        raw_antennas = d["antennas"]
    except KeyError as exc:
        raise ConfigError("topology dict needs an 'antennas' list") from exc
    antennas = []
    for a in raw_antennas:
        pos = tuple(float(c) for c in a["position"]) if "position" in a else None
        antennas.append(Antenna(
            id=int(a["id"]),
            p=_power_to_dbm(a["power"]),
            p_max=_power_to_dbm(a["p_max"]),
            r=int(a["prb"]),
            position=pos,
        ))
    antennas.sort(key=lambda a: a.id)
    n = len(antennas)
    raw_neigh = d.get("neighbours", {})
    neighbours = [frozenset(int(j) for j in raw_neigh.get(str(i), ())) for i in range(1, n + 1)]
    return NetworkTopology(tuple(antennas), tuple(neighbours))


def topology_to_dict(topo: NetworkTopology) -> dict:
    return {
        "antennas": [
            {
                "id": a.id,
                "power": {"value": a.p, "unit": "dbm"},
                "p_max": {"value": a.p_max, "unit": "dbm"},
                "prb": int(a.r),
                **({"position": list(a.position)} if a.position is not None else {}),
            }
            for a in topo.antennas
        ],
        "neighbours": {str(i): sorted(peers)
                       for i, peers in enumerate(topo.neighbours, start=1)},
    }


def topology_from_json(path) -> NetworkTopology:
    with open(path) as fh:
        return topology_from_dict(json.load(fh))
