"""Coverage evaluation and the coverage-constrained minimum-power floor.

A deduplicated attenuation batch with per-antenna tables is the working
representation: record l is covered under powers p iff some listed antenna i
has attenuation a <= p_i - r_c, i.e. its received pilot clears the threshold
r_c. Because attenuation is power-independent, the same tables answer
coverage queries for any hypothetical power vector by shifting each antenna's
cutoff, which is what the minimum-power search exploits.

The monotone surrogate replaces exact evaluation where it is too slow: a
small fully-connected net whose effective weights are squares of the stored
parameters, making the output provably non-decreasing in every input power.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model import NetworkTopology
from .mrdata import MrDataset, co_neighbours


class InfeasibleCoverage(RuntimeError):
    """The coverage requirement cannot be met within rated powers."""

    def __init__(self, antennas, reason: str):
        self.antennas = tuple(int(a) for a in antennas)
        self.reason = reason
        super().__init__(f"{reason} (antennas {self.antennas})")


@dataclass(frozen=True)
class CoverageReport:
    F: float
    uncovered_count: int
    k_prime: int
    F_i: dict[int, float] | None = None


def _require_tables(ds: MrDataset) -> None:
    if ds.domain != "attenuation":
        raise ValueError("coverage needs an attenuation-domain batch")
    if ds.per_antenna is None:
        raise ValueError("build per-antenna tables before evaluating coverage")


def _check_staleness(ds: MrDataset, powers: np.ndarray) -> None:
    if ds.recorded_powers is not None:
        drift = float(np.abs(powers - ds.recorded_powers).max())
        if drift > 6.0:
            warnings.warn(f"coverage batch recorded {drift:.1f} dB away from "
                          "the queried powers; rates may be stale")


def exact_coverage(ds: MrDataset, powers: np.ndarray, r_c: float) -> CoverageReport:
    """Network coverage rate F = 1 - uncovered / K' over the whole batch.

    Scans each antenna's ranked table only up to the first attenuation above
    that antenna's cutoff p_i - r_c. An empty batch counts as fully covered
    (with a warning).
    """
    _require_tables(ds)
    powers = np.asarray(powers, dtype=float)
    if powers.shape != (ds.n_antennas,):
        raise ValueError("power vector length does not match antenna count")
    k_prime = len(ds)
    if k_prime == 0:
        warnings.warn("coverage requested for an empty batch; reporting 1.0")
        return CoverageReport(F=1.0, uncovered_count=0, k_prime=0)
    _check_staleness(ds, powers)
    covered = np.zeros(k_prime, dtype=bool)
    for aid, (idx, avals) in ds.per_antenna.items():
        stop = np.searchsorted(avals, powers[aid - 1] - r_c, side="right")
        covered[idx[:stop]] = True
    uncovered = int(k_prime - covered.sum())
    return CoverageReport(F=1.0 - uncovered / k_prime,
                          uncovered_count=uncovered, k_prime=k_prime)


def neighbourhood_coverage(ds: MrDataset, powers: np.ndarray, i: int,
                           r_c: float, neighbours: list[set[int]] | None = None) -> float:
    """Coverage rate of antenna i's neighbourhood.

    Relevant records are those listing antenna i among their entries; the
    rate is the fraction of them reachable by at least one of their listed
    antennas at the candidate powers. Every listed antenna of such a record
    co-occurs with i, so the coverers are exactly the neighbourhood members
    present in the record, and an uncovered record drags down the rate of
    every antenna it lists. That keeps the minimum-power search
    self-correcting: whichever listed antenna is best placed to cover the
    record is itself failing, hence raisable. Antennas mentioned by no
    record report 1.0.

    The ``neighbours`` argument only affects which antennas count as
    members for reporting purposes; the rate itself is determined by the
    records' own entry lists.
    """
    _require_tables(ds)
    del neighbours  # rates depend on the records' listed antennas only
    powers = np.asarray(powers, dtype=float)
    table = ds.per_antenna.get(i)
    if table is None or len(table[0]) == 0:
        warnings.warn(f"antenna {i}: mentioned by no record in this batch")
        return 1.0
    relevant = table[0]
    covered = np.zeros(len(ds), dtype=bool)
    for m, (idx, avals) in ds.per_antenna.items():
        stop = np.searchsorted(avals, powers[m - 1] - r_c, side="right")
        covered[idx[:stop]] = True
    return float(covered[relevant].mean())


class ExactNeighbourhoodEvaluator:
    """Per-antenna neighbourhood rates from one batch, fast to re-query.

    Built once per period; ``rates(powers)`` re-evaluates every
    neighbourhood's coverage rate for a hypothetical power vector in one
    O(total table size) pass: mark which records any listed antenna still
    reaches, then average those flags over each antenna's mention list.
    """

    def __init__(self, ds: MrDataset, r_c: float,
                 neighbours: list[set[int]] | None = None):
        _require_tables(ds)
        self.ds = ds
        self.r_c = r_c
        self.n = ds.n_antennas
        self.neighbours = co_neighbours(ds) if neighbours is None else neighbours
        self.members = [sorted({i} | set(self.neighbours[i - 1]))
                        for i in range(1, self.n + 1)]
        # relevant rows of neighbourhood i: the records listing i; their
        # coverers are their own entries, so one covered-flag pass over the
        # tables prices every neighbourhood at once
        self._relevant = [ds.per_antenna.get(i, (np.zeros(0, dtype=np.int64),))[0]
                          for i in range(1, self.n + 1)]
        self._covered = np.zeros(len(ds), dtype=bool)

    def rates(self, powers: np.ndarray) -> np.ndarray:
        powers = np.asarray(powers, dtype=float)
        covered = self._covered
        covered[:] = False
        for m, (idx, avals) in self.ds.per_antenna.items():
            stop = np.searchsorted(avals, powers[m - 1] - self.r_c, side="right")
            covered[idx[:stop]] = True
        out = np.ones(self.n)
        for i in range(self.n):
            relevant = self._relevant[i]
            if len(relevant):
                out[i] = covered[relevant].mean()
        return out


@dataclass(frozen=True)
class FailGraph:
    """Antennas failing the coverage requirement, linked when neighbours."""

    vertices: tuple[int, ...]
    edges: tuple[tuple[int, int], ...]
    components: tuple[tuple[int, ...], ...]


def build_fail_graph(rates: np.ndarray, f_con: float,
                     neighbours: list[set[int]]) -> FailGraph:
    failing = [i + 1 for i in range(len(rates)) if rates[i] < f_con]
    fail_set = set(failing)
    edges = []
    for i in failing:
        for j in sorted(neighbours[i - 1]):
            if j in fail_set and i < j:
                edges.append((i, j))
    components = []
    seen: set[int] = set()
    for start in failing:
        if start in seen:
            continue
        comp = []
        stack = [start]
        seen.add(start)
        while stack:
            v = stack.pop()
            comp.append(v)
            for w in neighbours[v - 1]:
                if w in fail_set and w not in seen:
                    seen.add(w)
                    stack.append(w)
        components.append(tuple(sorted(comp)))
    return FailGraph(tuple(failing), tuple(edges), tuple(components))


def min_power_search(powers: np.ndarray, topo: NetworkTopology, evaluator,
                     f_con: float, delta_p: float) -> np.ndarray:
    """Smallest per-antenna powers (>= the given start) meeting the coverage
    requirement in every neighbourhood.

    Per round, each connected component of failing antennas has its
    minimum-rate member still below rated power raised by delta_p (ties by
    lowest id). Raises InfeasibleCoverage when a failing component has every
    member pinned at p_max. Rounds are bounded by
    sum_i ceil((p_max_i - start_i) / delta_p).
    """
    p = np.asarray(powers, dtype=float).copy()
    p_max = topo.p_max_vector()
    if p.shape != p_max.shape:
        raise ValueError("power vector length does not match antenna count")
    if (p > p_max).any():
        raise ValueError("search start above rated power")
    bound = int(np.ceil(np.maximum(p_max - p, 0.0) / delta_p).sum())
    for _ in range(bound + 1):
        rates = evaluator.rates(p)
        graph = build_fail_graph(rates, f_con, evaluator.neighbours)
        if not graph.vertices:
            return p
        for comp in graph.components:
            open_members = [a for a in comp if p[a - 1] < p_max[a - 1]]
            if not open_members:
                raise InfeasibleCoverage(
                    comp, "component still failing with all members at rated power")
            target = min(open_members, key=lambda a: (rates[a - 1], a))
            p[target - 1] = min(p[target - 1] + delta_p, p_max[target - 1])
    rates = evaluator.rates(p)
    if build_fail_graph(rates, f_con, evaluator.neighbours).vertices:
        raise InfeasibleCoverage(build_fail_graph(rates, f_con, evaluator.neighbours).vertices,
                                 "round bound exhausted")
    return p


# ---------------------------------------------------------------------------
# monotone surrogate


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass
class MonotoneMlp:
    """Coverage surrogate, non-decreasing in every input by construction.

    Effective weights are the squares of the stored parameters ``omegas`` and
    hidden activations are logistic, so every path from input to output is a
    composition of non-decreasing maps. Inputs are powers normalized with the
    training bounds; the raw network output is linear (clip to [0, 1] happens
    in ``surrogate_coverage``).
    """

    omegas: list[np.ndarray]
    biases: list[np.ndarray]
    input_min: np.ndarray
    input_max: np.ndarray
    training_mse: float
    seed: int

    @property
    def sizes(self) -> tuple[int, ...]:
        return (self.omegas[0].shape[1],) + tuple(w.shape[0] for w in self.omegas)

    def forward01(self, x01: np.ndarray) -> np.ndarray:
        h = np.atleast_2d(np.asarray(x01, dtype=float))
        last = len(self.omegas) - 1
        for layer, (w, b) in enumerate(zip(self.omegas, self.biases)):
            z = h @ (w * w).T + b
            h = z if layer == last else _sigmoid(z)
        return h[:, 0]

    def predict(self, powers: np.ndarray) -> np.ndarray:
        """Evaluate at raw power vectors (dBm), normalizing with the training
        bounds; warns (but still evaluates) outside the trained box."""
        x = np.atleast_2d(np.asarray(powers, dtype=float))
        if x.shape[1] != len(self.input_min):
            raise ValueError(f"expected {len(self.input_min)} member powers, "
                             f"got {x.shape[1]}")
        span = self.input_max - self.input_min
        x01 = (x - self.input_min) / span
        if (x01 < 0).any() or (x01 > 1).any():
            warnings.warn("surrogate queried outside its training power box")
        return self.forward01(x01)


def surrogate_coverage(mlp: MonotoneMlp, powers: np.ndarray) -> np.ndarray:
    """Surrogate neighbourhood rate(s), clipped to [0, 1]."""
    return np.clip(mlp.predict(powers), 0.0, 1.0)


def default_hidden_sizes(d: int) -> tuple[int, int, int]:
    """Three hidden layers sized to the neighbourhood: (4d, 2d, d)."""
    return (4 * d, 2 * d, d)


# per-parameter step bounds for resilient backprop; inputs are normalized to
# [0, 1] so a unit step already crosses the whole box
STEP_MIN = 1e-9
STEP_MAX = 1.0


def train_surrogate(x: np.ndarray, y: np.ndarray,
                    hidden_sizes: tuple[int, ...] | None = None,
                    epochs: int = 4000, lr: float = 0.02, seed: int = 0,
                    input_min: np.ndarray | None = None,
                    input_max: np.ndarray | None = None) -> MonotoneMlp:
    """Fit the monotone net to (power vector, coverage rate) samples by
    full-batch resilient backpropagation on the mean squared error.

    Gradients flow through the squaring, d(w^2)/dw = 2w. Each parameter keeps
    its own step size, grown 1.2x while the gradient sign holds and halved on
    a flip with the update skipped for that epoch (the iRprop- rule), so the
    loss settles within an epoch or two of any overshoot. lr sets the initial
    step. Training aborts with a RuntimeError when the MSE rises or goes
    non-finite for 10 consecutive epochs; the step adaptation recovers from
    any finite overshoot, so a streak that long means the loss surface itself
    is poisoned (non-finite inputs). Deterministic for a fixed seed. Requires
    at least 100 samples and targets inside [0, 1].
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if x.ndim != 2 or len(x) != len(y):
        raise ValueError("x must be (N, d) with matching targets")
    if len(x) < 100:
        raise ValueError(f"need at least 100 training samples, got {len(x)}")
    if (y < 0).any() or (y > 1).any():
        raise ValueError("coverage targets must lie in [0, 1]")
    d = x.shape[1]
    lo = x.min(axis=0) if input_min is None else np.asarray(input_min, float)
    hi = x.max(axis=0) if input_max is None else np.asarray(input_max, float)
    if ((hi - lo) <= 0).any():
        raise ValueError("degenerate normalization bounds")
    x01 = (x - lo) / (hi - lo)

    sizes = (d,) + tuple(hidden_sizes if hidden_sizes is not None
                         else default_hidden_sizes(d)) + (1,)
    rng = np.random.default_rng(seed)
    omegas = [rng.normal(0.0, 0.5 / np.sqrt(sizes[l]), size=(sizes[l + 1], sizes[l]))
              for l in range(len(sizes) - 1)]
    biases = [rng.normal(0.0, 0.1, size=sizes[l + 1]) for l in range(len(sizes) - 1)]
    biases[-1][:] = y.mean()

    params = omegas + biases
    steps = [np.full_like(p, lr) for p in params]
    prev_grad = [np.zeros_like(p) for p in params]
    n_samples = len(x01)
    last = len(omegas) - 1

    mse = np.inf
    best = np.inf
    rising = 0
    for epoch in range(1, epochs + 1):
        acts = [x01]
        h = x01
        for layer in range(last + 1):
            z = h @ (omegas[layer] ** 2).T + biases[layer]
            h = z if layer == last else _sigmoid(z)
            acts.append(h)
        pred = acts[-1][:, 0]
        new_mse = float(np.mean((pred - y) ** 2))
        # a non-finite loss can never improve, so it counts as a rise
        if not np.isfinite(new_mse) or new_mse > mse:
            rising += 1
            if rising >= 10:
                raise RuntimeError(
                    f"surrogate training diverged at epoch {epoch}: "
                    f"mse rose 10 epochs straight to {new_mse:.3e} "
                    f"(best was {best:.3e})")
        else:
            rising = 0
        mse = new_mse
        best = min(best, new_mse)

        grads: list = [None] * len(params)
        delta = (2.0 / n_samples) * (pred - y)[:, None]
        for layer in range(last, -1, -1):
            h_in = acts[layer]
            grads[layer] = (delta.T @ h_in) * 2.0 * omegas[layer]
            grads[last + 1 + layer] = delta.sum(axis=0)
            if layer > 0:
                back = delta @ (omegas[layer] ** 2)
                delta = back * h_in * (1.0 - h_in)
        for param, g, st, pg in zip(params, grads, steps, prev_grad):
            same = pg * g > 0
            flip = pg * g < 0
            st[same] = np.minimum(st[same] * 1.2, STEP_MAX)
            st[flip] = np.maximum(st[flip] * 0.5, STEP_MIN)
            g = g.copy()
            g[flip] = 0.0
            param -= np.sign(g) * st
            pg[:] = g

    mlp = MonotoneMlp(omegas=omegas, biases=biases, input_min=lo, input_max=hi,
                      training_mse=0.0, seed=seed)
    # recorded MSE belongs to the returned parameters, not the epoch before
    mlp.training_mse = float(np.mean((mlp.forward01(x01) - y) ** 2))
    return mlp


def save_surrogate(mlp: MonotoneMlp, path) -> None:
    """Flat binary layout, little-endian: [L, sizes(L)] as int64, then the
    normalization bounds and per layer the row-major pre-square weights and
    biases as float64. A JSON manifest alongside records MSE and seed."""
    path = str(path)
    sizes = np.asarray(mlp.sizes, dtype="<i8")
    with open(path, "wb") as fh:
        np.asarray([len(sizes)], dtype="<i8").tofile(fh)
        sizes.tofile(fh)
        mlp.input_min.astype("<f8").tofile(fh)
        mlp.input_max.astype("<f8").tofile(fh)
        for w, b in zip(mlp.omegas, mlp.biases):
            np.ascontiguousarray(w, dtype="<f8").tofile(fh)
            np.ascontiguousarray(b, dtype="<f8").tofile(fh)
    with open(path + ".manifest.json", "w") as fh:
        json.dump({"training_mse": mlp.training_mse, "seed": mlp.seed,
                   "sizes": [int(s) for s in mlp.sizes]}, fh, indent=2)


def load_surrogate(path) -> MonotoneMlp:
    path = str(path)
    with open(path, "rb") as fh:
        (n_sizes,) = np.fromfile(fh, dtype="<i8", count=1)
        sizes = np.fromfile(fh, dtype="<i8", count=int(n_sizes))
        d = int(sizes[0])
        lo = np.fromfile(fh, dtype="<f8", count=d)
        hi = np.fromfile(fh, dtype="<f8", count=d)
        omegas, biases = [], []
        for layer in range(len(sizes) - 1):
            rows, cols = int(sizes[layer + 1]), int(sizes[layer])
            omegas.append(np.fromfile(fh, dtype="<f8", count=rows * cols)
                          .reshape(rows, cols))
            biases.append(np.fromfile(fh, dtype="<f8", count=rows))
    with open(path + ".manifest.json") as fh:
        manifest = json.load(fh)
    return MonotoneMlp(omegas=omegas, biases=biases, input_min=lo, input_max=hi,
                       training_mse=float(manifest["training_mse"]),
                       seed=int(manifest["seed"]))


class SurrogateNeighbourhoodEvaluator:
    """Drop-in for ExactNeighbourhoodEvaluator backed by per-antenna nets."""

    def __init__(self, mlps: dict[int, MonotoneMlp],
                 members: dict[int, list[int]], n: int,
                 neighbours: list[set[int]]):
        self.mlps = mlps
        self.members = members
        self.n = n
        self.neighbours = neighbours

    def rates(self, powers: np.ndarray) -> np.ndarray:
        powers = np.asarray(powers, dtype=float)
        out = np.ones(self.n)
        for i, mlp in self.mlps.items():
            x = powers[np.asarray(self.members[i]) - 1]
            out[i - 1] = surrogate_coverage(mlp, x)[0]
        return out


def train_neighbourhood_surrogates(ds: MrDataset, topo: NetworkTopology,
                                   r_c: float, n_samples: int = 300,
                                   span: float = 10.0, epochs: int = 3000,
                                   lr: float = 0.02, seed: int = 0
                                   ) -> SurrogateNeighbourhoodEvaluator:
    """Train one monotone net per antenna on exact neighbourhood rates.

    Sample power vectors are drawn uniformly in [p_max - span, p_max] per
    member; labels come from the exact evaluator on ``ds``. The nets carry
    an absolute error around sqrt(training MSE), so searches driven by them
    need coverage margins comfortably above that; knife-edge requirements
    belong to the exact evaluator.
    """
    exact = ExactNeighbourhoodEvaluator(ds, r_c)
    p_max = topo.p_max_vector()
    rng = np.random.default_rng(seed)
    base = np.empty((n_samples, topo.n))
    for col in range(topo.n):
        base[:, col] = rng.uniform(p_max[col] - span, p_max[col], size=n_samples)
    labels = np.empty((n_samples, topo.n))
    for s in range(n_samples):
        labels[s] = exact.rates(base[s])
    mlps: dict[int, MonotoneMlp] = {}
    members: dict[int, list[int]] = {}
    for i in range(1, topo.n + 1):
        mem = exact.members[i - 1]
        members[i] = mem
        cols = np.asarray(mem) - 1
        mlps[i] = train_surrogate(base[:, cols], labels[:, i - 1],
                                  epochs=epochs, lr=lr, seed=seed + i,
                                  input_min=p_max[cols] - span,
                                  input_max=p_max[cols])
    return SurrogateNeighbourhoodEvaluator(mlps, members, topo.n, exact.neighbours)


def save_surrogate_set(evaluator: SurrogateNeighbourhoodEvaluator,
                       dirpath) -> None:
    """Persist a whole per-antenna surrogate family: one binary net per
    antenna plus an index with membership and neighbour lists."""
    out = Path(dirpath)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for i, mlp in sorted(evaluator.mlps.items()):
        name = f"antenna_{i:04d}.mlp.bin"
        save_surrogate(mlp, out / name)
        files[str(i)] = name
    index = {
        "n": evaluator.n,
        "members": {str(i): list(map(int, m)) for i, m in evaluator.members.items()},
        "neighbours": [sorted(map(int, s)) for s in evaluator.neighbours],
        "files": files,
    }
    with open(out / "index.json", "w") as fh:
        json.dump(index, fh, indent=2, sort_keys=True)


def load_surrogate_set(dirpath) -> SurrogateNeighbourhoodEvaluator:
    src = Path(dirpath)
    with open(src / "index.json") as fh:
        index = json.load(fh)
    mlps = {int(i): load_surrogate(src / name)
            for i, name in index["files"].items()}
    members = {int(i): list(map(int, m)) for i, m in index["members"].items()}
    neighbours = [set(s) for s in index["neighbours"]]
    return SurrogateNeighbourhoodEvaluator(mlps, members, int(index["n"]),
                                           neighbours)
