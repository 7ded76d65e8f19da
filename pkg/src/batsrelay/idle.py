"""Relay idling-time analysis.

Between consecutive batches the relay may go idle waiting for the source.
With ``Q_b`` = (time the source finishes batch b+1) - (time the relay
finishes batch b), the chain is

    Q_{b+1} = min(Q_b, 0) + omega*M - i,      i ~ tbar,

where ``tbar`` is the distribution of the number of recoded packets sent
per batch.  The idle period after batch b is ``max(Q_b, 0)`` and the
expected total idling time over B batches is

    D = omega*M + E[ sum_{b=1}^{B-1} max(Q_b, 0) ],

the leading term being the one-off initial delay while the source sends
the first batch.  The transient sum must be evaluated term by term: the
chain's transition matrix is stochastic, so the geometric series of its
powers has no limit to shortcut through.
"""

from dataclasses import dataclass
from math import floor

import numpy as np

from .channel import ChannelSpec, DomainError


@dataclass(frozen=True)
class SendCountDistribution:
    """Distribution of the per-batch send count at the relay."""

    tbar: np.ndarray  # tbar[i] = P(relay sends exactly i recoded packets)

    def __post_init__(self):
        tb = self.tbar
        if np.any(tb < -1e-15) or abs(tb.sum() - 1.0) > 1e-9:
            raise DomainError("tbar must be a probability vector")
        self.tbar.setflags(write=False)

    @property
    def mean(self) -> float:
        return float(self.tbar @ np.arange(len(self.tbar)))


@dataclass(frozen=True)
class IdleModel:
    """Expected total idling time D for B batches under one send-count law."""

    spec: ChannelSpec
    tbar: SendCountDistribution
    B: int
    D: float
    stderr: float
    method: str


def send_count_distribution(h: np.ndarray, t: np.ndarray) -> SendCountDistribution:
    """Send-count law induced by an allocation: floor(t_r) packets plus one
    more with probability frac(t_r), mixed over the rank distribution h."""
    h = np.asarray(h, dtype=float)
    t = np.asarray(t, dtype=float)
    if h.shape != t.shape:
        raise DomainError("h and t must have the same length")
    if np.any(h < 0) or abs(h.sum() - 1.0) > 1e-9:
        raise DomainError("h must be a probability vector")
    if np.any(t < 0):
        raise DomainError("t must be nonnegative")
    n = int(floor(t.max() + 1e-12)) + 2
    tbar = np.zeros(n)
    for r in range(len(h)):
        if h[r] == 0.0:
            continue
        k = int(floor(t[r] + 1e-12))
        frac = t[r] - k
        if frac < 1e-12:
            frac = 0.0
        tbar[k] += h[r] * (1.0 - frac)
        tbar[k + 1] += h[r] * frac
    return SendCountDistribution(tbar=tbar)


def q_step(q: float, i: int, spec: ChannelSpec) -> float:
    """One transition of the slack process."""
    if i < 0:
        raise DomainError(f"send count must be >= 0, got {i}")
    return min(q, 0.0) + spec.omega * spec.M - i


def idle_time_markov(
    tbar: SendCountDistribution, spec: ChannelSpec, B: int, gaps: int | None = None
) -> IdleModel:
    """Exact D by transient summation of the truncated slack chain.

    Requires integer omega so the chain lives on an integer lattice.  The
    state space is clamped at q = -B*omega*M: a state that deep needs more
    than the remaining B steps to climb back above zero (it gains at most
    omega*M per step), so clamping never changes any positive excursion.

    ``gaps`` is the number of inter-batch gaps accumulated; it defaults to
    the physical B - 1 (no idling after the last batch).  The efficiency
    optimizer passes ``gaps=B`` to match the reference evaluation, which
    counts a trailing gap.
    """
    if B < 1:
        raise DomainError(f"B must be >= 1, got {B}")
    if gaps is None:
        gaps = B - 1
    omega_M = spec.omega * spec.M
    if abs(omega_M - round(omega_M)) > 1e-9 or abs(spec.omega - round(spec.omega)) > 1e-9:
        raise DomainError(
            f"exact chain needs integer omega, got omega={spec.omega}; use Monte Carlo"
        )
    omega_M = int(round(omega_M))
    tb = tbar.tbar
    imax = len(tb) - 1
    q_min = -(gaps + 1) * omega_M
    n = omega_M - q_min + 1
    off = -q_min  # index of state q = 0
    dist = np.zeros(n)
    dist[off] = 1.0
    g = tb[::-1]  # distribution of omega_M - i over omega_M-imax .. omega_M
    pos = np.clip(np.arange(q_min, omega_M + 1), 0, None).astype(float)
    D = float(omega_M)
    for _ in range(gaps):
        # collapse positive slack (relay idled, restarts in sync) into q = 0
        dist[off] += dist[off + 1 :].sum()
        dist[off + 1 :] = 0.0
        full = np.convolve(dist[: off + 1], g)
        low = q_min + omega_M - imax
        new = np.zeros(n)
        if low >= q_min:
            new[low - q_min : low - q_min + len(full)] = full
        else:
            cut = q_min - low
            new[0] = full[: cut + 1].sum()
            new[1 : len(full) - cut] = full[cut + 1 :]
        dist = new
        D += float(dist @ pos)
    return IdleModel(spec=spec, tbar=tbar, B=B, D=D, stderr=0.0, method="markov")


def idle_time_monte_carlo(
    tbar: SendCountDistribution,
    spec: ChannelSpec,
    B: int,
    trials: int = 100_000,
    seed: int | None = None,
    workers: int = 1,
    gaps: int | None = None,
) -> IdleModel:
    """Monte Carlo estimate of D; works for any positive omega.

    Trials are partitioned across ``workers`` logical streams with seeds
    derived from (seed, worker index), so results are reproducible for a
    fixed (seed, workers) pair regardless of how the chunks are executed.
    ``gaps`` as in :func:`idle_time_markov`.
    """
    if B < 1:
        raise DomainError(f"B must be >= 1, got {B}")
    if gaps is None:
        gaps = B - 1
    if trials < 1:
        raise DomainError(f"trials must be >= 1, got {trials}")
    if seed is None:
        raise DomainError("seed is required (no ambient randomness)")
    omega_M = spec.omega * spec.M
    cdf = np.cumsum(tbar.tbar)
    per_trial = []
    base = trials // workers
    sizes = [base + (1 if w < trials % workers else 0) for w in range(workers)]
    for w, size in enumerate(sizes):
        if size == 0:
            continue
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(w,)))
        q = np.zeros(size)
        idle = np.zeros(size)
        for _ in range(gaps):
            i = np.searchsorted(cdf, rng.random(size), side="right")
            q = np.minimum(q, 0.0) + omega_M - i
            idle += np.maximum(q, 0.0)
        per_trial.append(omega_M + idle)
    d = np.concatenate(per_trial)
    stderr = float(d.std(ddof=1) / np.sqrt(len(d))) if len(d) > 1 else 0.0
    return IdleModel(
        spec=spec, tbar=tbar, B=B, D=float(d.mean()), stderr=stderr, method="monte_carlo"
    )
