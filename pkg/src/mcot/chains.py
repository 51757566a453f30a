"""Finite Markov chains, benchmark chain generators, and occupancy access.

A chain is a row-stochastic transition matrix plus a Dirac initial state.
The discounted state-transition occupancy measure over (state, next-state)
pairs is available two ways: exactly, through a dense linear solve, or by
sampling, either with geometric stopping-time rollouts (kernel known) or by
uniform resampling from an ingested transition buffer (kernel unknown).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
import yaml

ROW_SUM_TOL = 1e-12
FILE_ROW_SUM_TOL = 1e-9

# Chunk size for sampler prefetch.  Fixed so that the random stream depends
# only on the seed, never on the caller's batching pattern.
_SAMPLE_CHUNK = 4096


class ChainFormatError(ValueError):
    """Raised for malformed chain files or transition dumps."""


class TransitionPair(NamedTuple):
    from_state: int
    to_state: int


@dataclass(frozen=True)
class MarkovChain:
    """A finite Markov chain with a Dirac initial distribution.

    Attributes:
        transition: (n, n) row-stochastic matrix, rows sum to 1 within 1e-12.
        initial_state: index of the starting state.
        rewards: optional per-state reward values (used to build cost matrices).
        labels: optional per-state display names.
    """

    transition: np.ndarray
    initial_state: int
    rewards: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        P = np.array(self.transition, dtype=np.float64, order="C")
        if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] < 1:
            raise ValueError(f"transition matrix must be square, got shape {P.shape}")
        if np.any(P < 0.0):
            raise ValueError("transition probabilities must be nonnegative")
        err = np.max(np.abs(P.sum(axis=1) - 1.0))
        if err > ROW_SUM_TOL:
            raise ValueError(f"transition rows must sum to 1 (max deviation {err:.3e})")
        if not (0 <= int(self.initial_state) < P.shape[0]):
            raise ValueError(f"initial_state {self.initial_state} out of range for {P.shape[0]} states")
        P.flags.writeable = False
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "initial_state", int(self.initial_state))
        if self.rewards is not None:
            r = np.array(self.rewards, dtype=np.float64)
            if r.shape != (P.shape[0],):
                raise ValueError("rewards must have one entry per state")
            r.flags.writeable = False
            object.__setattr__(self, "rewards", r)
        if self.labels is not None:
            labels = tuple(str(s) for s in self.labels)
            if len(labels) != P.shape[0]:
                raise ValueError("labels must have one entry per state")
            object.__setattr__(self, "labels", labels)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    def initial_distribution(self) -> np.ndarray:
        nu0 = np.zeros(self.num_states)
        nu0[self.initial_state] = 1.0
        return nu0


@dataclass(frozen=True)
class OccupancyTable:
    """Discounted (state, next-state) occupancy measure of a single chain.

    Entries live in [0, 1] and sum to 1; ``state_marginal`` gives the
    per-state mass obtained by summing out the next state.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("occupancy table must be square")
        if abs(float(v.sum()) - 1.0) > 1e-10:
            raise ValueError("occupancy table must sum to 1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    def state_marginal(self) -> np.ndarray:
        return self.values.sum(axis=1)


@dataclass(frozen=True)
class CostMatrix:
    """Nonnegative ground cost between the states of two chains.

    ``values`` holds the cost as given.  The solver requires costs bounded
    by 1, so ``scaled_values`` divides by ``scale = max(1, max entry)``;
    reported distances are multiplied back by ``scale``.
    """

    values: np.ndarray

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise ValueError("cost matrix must be 2-dimensional")
        if np.any(v < 0.0):
            raise ValueError("cost entries must be nonnegative")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def scale(self) -> float:
        m = float(self.values.max()) if self.values.size else 0.0
        return m if m > 1.0 else 1.0

    @property
    def scaled_values(self) -> np.ndarray:
        return self.values / self.scale


def cost_from_rewards(chain_x: MarkovChain, chain_y: MarkovChain, kind: str = "reward-abs-diff") -> CostMatrix:
    """Build a cost matrix from per-state rewards.

    ``reward-abs-diff`` gives |r(x) - r(y)|; ``indicator`` gives
    1{r(x) != r(y)}.
    """
    if chain_x.rewards is None or chain_y.rewards is None:
        raise ValueError("both chains need rewards to build a reward-based cost")
    rx = chain_x.rewards[:, None]
    ry = chain_y.rewards[None, :]
    if kind == "reward-abs-diff":
        return CostMatrix(np.abs(rx - ry))
    if kind == "indicator":
        return CostMatrix((rx != ry).astype(np.float64))
    raise ValueError(f"unknown cost kind {kind!r}")


def exact_occupancy(chain: MarkovChain, gamma: float) -> OccupancyTable:
    """Exact discounted occupancy over (state, next-state) pairs.

    Solves (I - gamma P^T) xi = (1 - gamma) nu0 for the per-state mass xi
    and sets nu(x, x') = P(x'|x) xi(x).  The system is nonsingular for any
    row-stochastic P and gamma < 1.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    P = chain.transition
    n = chain.num_states
    A = np.eye(n) - gamma * P.T
    xi = np.linalg.solve(A, (1.0 - gamma) * chain.initial_distribution())
    return OccupancyTable(P * xi[:, None])


def make_random_walk(n: int, theta: float) -> MarkovChain:
    """Biased random walk on n states with sticky walls.

    Interior state x steps to x+1 with probability theta and to x-1 with
    probability 1-theta.  The two wall states stay put with probability 0.9
    and move inward with probability 0.1.  Starts at state 0; rewards are
    +1 at state 0, -1 at state n-1, 0 elsewhere.
    """
    if n < 2:
        raise ValueError("random walk needs at least 2 states")
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0, 1]")
    P = np.zeros((n, n))
    P[0, 0], P[0, 1] = 0.9, 0.1
    P[n - 1, n - 1], P[n - 1, n - 2] = 0.9, 0.1
    for x in range(1, n - 1):
        P[x, x + 1] = theta
        P[x, x - 1] = 1.0 - theta
    rewards = np.zeros(n)
    rewards[0] = 1.0
    rewards[n - 1] = -1.0
    return MarkovChain(P, initial_state=0, rewards=rewards)


def make_block_lift(base: MarkovChain, B: int) -> MarkovChain:
    """Lift a chain by attaching a uniformly random block index in {0..B-1}.

    State (x, b) maps to index x*B + b; the transition to (x', b') has
    probability P(x'|x)/B.  The lifted chain starts in block 0 of the base
    initial state and copies the base state's reward.
    """
    if B < 1:
        raise ValueError("block count must be positive")
    n = base.num_states
    P = np.kron(base.transition / B, np.ones((B, B)))
    rewards = np.repeat(base.rewards, B) if base.rewards is not None else None
    labels = None
    if base.labels is not None:
        labels = tuple(f"{lab}/{b}" for lab in base.labels for b in range(B))
    return MarkovChain(P, initial_state=base.initial_state * B, rewards=rewards, labels=labels)


class TransitionSampler:
    """Source of (state, next-state) samples from a chain's occupancy measure.

    Two modes:

    * ``exact-geometric``: draws a stopping time G with P(G=t) =
      (1-gamma) gamma^t by inverse CDF, rolls the chain G+1 steps from its
      initial state, and returns the last pair (X_G, X_{G+1}).  The pairs
      are i.i.d. with the exact occupancy law.
    * ``buffer``: draws uniformly with replacement from an ingested list of
      transitions (an i.i.d. proxy for trajectory data).

    Samples are prefetched in fixed-size chunks so a given seed yields one
    reproducible stream regardless of how calls are batched.  A sampler
    holds mutable generator state; use one sampler per concurrent run.
    """

    def __init__(self, mode: str, rng: np.random.Generator, chain: MarkovChain | None = None,
                 buffer: np.ndarray | None = None):
        if mode not in ("exact-geometric", "buffer"):
            raise ValueError(f"unknown sampler mode {mode!r}")
        if mode == "exact-geometric" and chain is None:
            raise ValueError("exact-geometric mode requires the owning chain")
        if mode == "buffer" and (buffer is None or len(buffer) == 0):
            raise ValueError("buffer mode requires a nonempty transition buffer")
        self.mode = mode
        self.rng = rng
        self.chain = chain
        self.buffer = None if buffer is None else np.asarray(buffer, dtype=np.int64)
        self.num_states_hint = None if self.buffer is None else int(self.buffer.max()) + 1
        self._cum = None if chain is None else np.cumsum(chain.transition, axis=1)
        self._cache_from = np.empty(0, dtype=np.int64)
        self._cache_to = np.empty(0, dtype=np.int64)
        self._cursor = 0
        self._cache_gamma = None

    @classmethod
    def exact_geometric(cls, chain: MarkovChain, seed_or_rng) -> "TransitionSampler":
        return cls("exact-geometric", _as_rng(seed_or_rng), chain=chain)

    @classmethod
    def from_buffer(cls, pairs, seed_or_rng) -> "TransitionSampler":
        return cls("buffer", _as_rng(seed_or_rng), buffer=np.asarray(pairs, dtype=np.int64))

    def _refill(self, gamma: float) -> None:
        m = _SAMPLE_CHUNK
        if self.mode == "buffer":
            idx = self.rng.integers(0, len(self.buffer), size=m)
            self._cache_from = self.buffer[idx, 0].copy()
            self._cache_to = self.buffer[idx, 1].copy()
        else:
            self._cache_from, self._cache_to = self._rollout_chunk(m, gamma)
        self._cursor = 0
        self._cache_gamma = gamma

    def _rollout_chunk(self, m: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
        rng = self.rng
        u = rng.random(m)
        if gamma == 0.0:
            G = np.zeros(m, dtype=np.int64)
        else:
            G = np.floor(np.log1p(-u) / np.log(gamma)).astype(np.int64)
        n = self.chain.num_states
        cum = self._cum
        frm = np.empty(m, dtype=np.int64)
        to = np.empty(m, dtype=np.int64)
        state = np.full(m, self.chain.initial_state, dtype=np.int64)
        alive = np.arange(m)
        t = 0
        while alive.size:
            cur = state[alive]
            comp = rng.random(alive.size)[:, None] < cum[cur]
            nxt = np.where(comp.any(axis=1), comp.argmax(axis=1), n - 1)
            done = G[alive] == t
            frm[alive[done]] = cur[done]
            to[alive[done]] = nxt[done]
            state[alive] = nxt
            alive = alive[~done]
            t += 1
        return frm, to

    def draw(self, count: int, gamma: float) -> tuple[np.ndarray, np.ndarray]:
        """Draw ``count`` pairs; returns (from_states, to_states)."""
        if not 0.0 <= gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")
        if gamma != self._cache_gamma:
            self._cache_from = self._cache_from[:0]
            self._cursor = 0
        frm = np.empty(count, dtype=np.int64)
        to = np.empty(count, dtype=np.int64)
        filled = 0
        while filled < count:
            if self._cursor >= len(self._cache_from):
                self._refill(gamma)
            take = min(count - filled, len(self._cache_from) - self._cursor)
            frm[filled:filled + take] = self._cache_from[self._cursor:self._cursor + take]
            to[filled:filled + take] = self._cache_to[self._cursor:self._cursor + take]
            self._cursor += take
            filled += take
        return frm, to


def _as_rng(seed_or_rng) -> np.random.Generator:
    if isinstance(seed_or_rng, np.random.Generator):
        return seed_or_rng
    return np.random.Generator(np.random.PCG64(seed_or_rng))


def sample_transition(sampler: TransitionSampler, gamma: float) -> TransitionPair:
    """Draw one (state, next-state) pair from the sampler."""
    frm, to = sampler.draw(1, gamma)
    return TransitionPair(int(frm[0]), int(to[0]))


def ingest_transitions(path, seed_or_rng=0) -> TransitionSampler:
    """Load a transition dump (one ``from,to`` pair per line) into a buffer sampler.

    Raises ChainFormatError with the offending line number for malformed or
    negative entries, and for an empty file.  The sampler reports the
    inferred state-index range via ``num_states_hint``.
    """
    pairs = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ChainFormatError(f"{path}:{lineno}: expected 'from,to', got {line!r}")
            try:
                a, b = int(parts[0]), int(parts[1])
            except ValueError:
                raise ChainFormatError(f"{path}:{lineno}: non-integer state index in {line!r}") from None
            if a < 0 or b < 0:
                raise ChainFormatError(f"{path}:{lineno}: negative state index in {line!r}")
            pairs.append((a, b))
    if not pairs:
        raise ChainFormatError(f"{path}: transition dump is empty")
    return TransitionSampler.from_buffer(np.asarray(pairs, dtype=np.int64), seed_or_rng)


def write_transition_dump(path, from_states, to_states) -> None:
    """Write transitions as ``from,to`` lines (the ingest format)."""
    with open(path, "w") as fh:
        for a, b in zip(from_states, to_states):
            fh.write(f"{int(a)},{int(b)}\n")


def load_chain(path) -> MarkovChain:
    """Load a chain from a YAML file with fields n, initial, rows, optional rewards/labels.

    Rows must sum to 1 within 1e-9 and are renormalized to machine precision.
    Only Dirac initial distributions (a single state index) are accepted.
    """
    with open(path) as fh:
        try:
            doc = yaml.safe_load(fh)
        except yaml.YAMLError as e:
            raise ChainFormatError(f"{path}: not parseable: {e}") from None
    if not isinstance(doc, dict):
        raise ChainFormatError(f"{path}: expected a mapping with fields n, initial, rows")
    for field in ("n", "initial", "rows"):
        if field not in doc:
            raise ChainFormatError(f"{path}: missing field {field!r}")
    n = int(doc["n"])
    if not isinstance(doc["initial"], int):
        raise ChainFormatError(f"{path}: initial must be a single state index (Dirac); "
                               f"general initial distributions are not supported")
    rows = np.asarray(doc["rows"], dtype=np.float64)
    if rows.shape != (n, n):
        raise ChainFormatError(f"{path}: rows must be an {n}x{n} matrix, got {rows.shape}")
    sums = rows.sum(axis=1)
    bad = np.where(np.abs(sums - 1.0) > FILE_ROW_SUM_TOL)[0]
    if bad.size:
        raise ChainFormatError(f"{path}: row {bad[0]} sums to {sums[bad[0]]!r}, not 1 within {FILE_ROW_SUM_TOL}")
    rows = rows / sums[:, None]
    rewards = None
    if doc.get("rewards") is not None:
        rewards = np.asarray(doc["rewards"], dtype=np.float64)
        if rewards.shape != (n,):
            raise ChainFormatError(f"{path}: rewards must list {n} values")
    labels = doc.get("labels")
    return MarkovChain(rows, initial_state=int(doc["initial"]), rewards=rewards,
                       labels=None if labels is None else tuple(labels))


def save_chain(chain: MarkovChain, path) -> None:
    doc = {
        "n": chain.num_states,
        "initial": chain.initial_state,
        "rows": [[float(v) for v in row] for row in chain.transition],
    }
    if chain.rewards is not None:
        doc["rewards"] = [float(r) for r in chain.rewards]
    if chain.labels is not None:
        doc["labels"] = list(chain.labels)
    with open(path, "w") as fh:
        yaml.safe_dump(doc, fh, sort_keys=False)
