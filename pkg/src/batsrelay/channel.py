"""Channel parameters and rank statistics for the two-hop relay network.

A source broadcasts batches of ``M`` coded packets; the relay hears each
packet with probability ``1 - p_sr`` and the sink overhears it with
probability ``1 - p_sd``.  Recoded packets from the relay reach the sink
with probability ``1 - p_rd``.  All losses are independent and the field
is assumed large enough that distinct received packets of a batch stay
linearly independent.
"""

from dataclasses import dataclass, field
from math import floor

import numpy as np
from scipy.stats import binom


class DomainError(ValueError):
    """Raised when an argument falls outside an operation's domain."""


@dataclass(frozen=True)
class ChannelSpec:
    """Network parameters.

    M      batch size (packets per batch)
    omega  time units per source transmission; a relay transmission takes 1
    p_sr   source->relay per-packet loss probability
    p_rd   relay->sink per-packet loss probability
    p_sd   source->sink (overhearing) per-packet loss probability
    """

    M: int
    omega: float
    p_sr: float
    p_rd: float
    p_sd: float

    def __post_init__(self):
        if self.M < 1:
            raise DomainError(f"M must be >= 1, got {self.M}")
        if self.omega <= 0:
            raise DomainError(f"omega must be > 0, got {self.omega}")
        for name in ("p_sr", "p_rd", "p_sd"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise DomainError(f"{name} must be in [0, 1], got {p}")


@dataclass(frozen=True)
class RankEnvironment:
    """Tabulated rank statistics for one :class:`ChannelSpec`.

    h        innovative rank distribution, length M+1
    R        expected rank at the sink from overhearing alone
    E_table  (M+1, t_max+1) table of the expected-rank function E(r, t)
    delta    (M+1, t_max) marginal gains E(r, t+1) - E(r, t)
    """

    spec: ChannelSpec
    h: np.ndarray
    R: float
    E_table: np.ndarray
    t_max: int
    delta: np.ndarray = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "delta", np.diff(self.E_table, axis=1))
        # freeze the arrays so the environment can be shared across threads
        self.h.setflags(write=False)
        self.E_table.setflags(write=False)
        self.delta.setflags(write=False)

    @property
    def M(self) -> int:
        return self.spec.M

    @property
    def max_rank_gain(self) -> float:
        """Largest achievable E - R, i.e. sum_r h_r * r."""
        return float(self.h @ np.arange(self.M + 1))


def expected_rank_exact(r: int, t: int, p_rd: float) -> float:
    """E(r, t) at integer t: expected min(received, r) over t Bernoulli sends."""
    if t == 0 or r == 0:
        return 0.0
    i = np.arange(t + 1)
    pmf = binom.pmf(i, t, 1.0 - p_rd)
    return float(pmf @ np.minimum(i, r))


def expected_rank(env: RankEnvironment, r: int, t: float) -> float:
    """Expected sink-rank contribution of a rank-``r`` batch given ``t``
    recoded transmissions, linearly interpolated for fractional ``t``.

    Integer parts beyond the tabulation cap are clamped; the table is flat
    there (the per-send gain has decayed below 1e-12 by construction).
    """
    if t < 0:
        raise DomainError(f"t must be >= 0, got {t}")
    if not 0 <= r <= env.M:
        raise DomainError(f"r must be in 0..{env.M}, got {r}")
    k = int(floor(t))
    frac = t - k
    k = min(k, env.t_max)
    k1 = min(k + 1, env.t_max)
    row = env.E_table[r]
    return float((1.0 - frac) * row[k] + frac * row[k1])


def marginal_gain(env: RankEnvironment, r: int, t: int) -> float:
    """Per-packet gain E(r, t+1) - E(r, t) for integer ``t``."""
    if not 0 <= r <= env.M:
        raise DomainError(f"r must be in 0..{env.M}, got {r}")
    if not 0 <= t <= env.t_max - 1:
        raise DomainError(f"t must be in 0..{env.t_max - 1}, got {t}")
    return float(env.delta[r, t])


def innovative_rank_distribution(spec: ChannelSpec) -> np.ndarray:
    """Distribution of the rank the relay can still add for the sink.

    A packet counts iff the relay received it and the sink did not overhear
    it, which happens independently per packet with probability
    ``(1 - p_sr) * p_sd``; fresh packets are linearly independent, so the
    innovative rank is binomial.
    """
    q = (1.0 - spec.p_sr) * spec.p_sd
    return binom.pmf(np.arange(spec.M + 1), spec.M, q)


def overheard_rank_mean(spec: ChannelSpec) -> float:
    """Expected sink rank per batch from overhearing alone."""
    return spec.M * (1.0 - spec.p_sd)


def build_environment(spec: ChannelSpec, t_max: int | None = None) -> RankEnvironment:
    """Tabulate E(r, t) and the rank statistics for ``spec``.

    ``t_max`` defaults to ``4 * M``, beyond which the marginal gain of one
    more recoded packet is negligible for any loss rate of interest.
    """
    if t_max is None:
        t_max = 4 * spec.M
    if t_max < 1:
        raise DomainError(f"t_max must be >= 1, got {t_max}")
    M = spec.M
    table = np.zeros((M + 1, t_max + 1))
    # E(r, t) = sum_i P(Bin(t, 1-p) = i) * min(i, r); vectorized over i
    for t in range(1, t_max + 1):
        i = np.arange(t + 1)
        pmf = binom.pmf(i, t, 1.0 - spec.p_rd)
        for r in range(1, M + 1):
            table[r, t] = pmf @ np.minimum(i, r)
    h = innovative_rank_distribution(spec)
    R = overheard_rank_mean(spec)
    return RankEnvironment(spec=spec, h=h, R=R, E_table=table, t_max=t_max)
