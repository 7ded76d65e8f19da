"""Adaptive recoding: how many recoded packets to send per innovative rank.

Solves  max R + sum_r h_r E(r, t_r)  s.t.  h . t = t_avg,  t >= 0
by greedy water-filling on the marginal gains, which is optimal because
every E(r, .) is concave in t.  Fractional t_r means sending floor(t_r)
packets plus one more with probability frac(t_r).
"""

from dataclasses import dataclass
from math import floor

import numpy as np

from .channel import DomainError, RankEnvironment, expected_rank

# snap tolerance: kill float drift when an allocation lands on an integer
_SNAP = 1e-9
_MASS_EPS = 1e-15
# marginal gains at or below this are treated as saturated (flat objective)
_GAIN_FLOOR = 1e-15


@dataclass(frozen=True)
class RecodingScheme:
    """An allocation t = (t_0..t_M) with its mean and objective value."""

    t: np.ndarray
    t_avg: float
    sink_rank_mean: float

    def __post_init__(self):
        self.t.setflags(write=False)


def sink_rank(env: RankEnvironment, t: np.ndarray) -> float:
    """Expected per-batch rank at the sink: R + sum_r h_r E(r, t_r)."""
    t = np.asarray(t, dtype=float)
    if t.shape != (env.M + 1,):
        raise DomainError(f"t must have length {env.M + 1}, got shape {t.shape}")
    if np.any(t < 0):
        raise DomainError("t must be componentwise nonnegative")
    acc = env.R
    for r in range(env.M + 1):
        if env.h[r] > 0.0:
            acc += env.h[r] * expected_rank(env, r, float(t[r]))
    return acc


class GreedyState:
    """Incremental greedy allocator over the marginal-gain table.

    Mass is probability-weighted: assigning mass ``s`` to rank ``r`` raises
    ``t_r`` by ``s / h_r`` and ``t_avg`` by ``s``.  Two stepping modes are
    provided:

    * :meth:`add_mass` splits steps at integer boundaries of ``t_r`` and
      re-selects the best rank after each split, so the state is always the
      exact optimum for its current ``t_avg``.
    * :meth:`add_mass_quantum` assigns whole ``h_r`` quanta (or the final
      remainder) to the currently best rank without splitting at integer
      boundaries.  Its objective differs from the exact optimum only by
      O(step^2) per boundary crossing, but the fractional structure of
      ``t`` (and hence the send-count distribution) can differ; it is kept
      as a cheaper alternative stepping mode and for cross-checks.
    """

    def __init__(self, env: RankEnvironment):
        self.env = env
        self.t = np.zeros(env.M + 1)
        self.t_avg = 0.0
        self.E = env.R
        self.support = np.nonzero(env.h > 0.0)[0]
        if self.support.size == 0:
            raise DomainError("h has empty support")

    def clone(self) -> "GreedyState":
        other = GreedyState.__new__(GreedyState)
        other.env = self.env
        other.t = self.t.copy()
        other.t_avg = self.t_avg
        other.E = self.E
        other.support = self.support
        return other

    def _gain(self, r: int) -> float:
        k = int(floor(self.t[r] + _SNAP))
        if k >= self.env.t_max:
            return 0.0
        return float(self.env.delta[r, k])

    def best_rank(self) -> tuple[int, float]:
        """Rank with the largest current marginal gain; lowest index wins ties."""
        best_r, best_d = self.support[0], -1.0
        for r in self.support:
            d = self._gain(r)
            if d > best_d:  # strict: first (lowest-rank) max kept
                best_r, best_d = r, d
        return int(best_r), best_d

    def _apply(self, r: int, mass: float, gain: float):
        self.t[r] += mass / self.env.h[r]
        if abs(self.t[r] - round(self.t[r])) < _SNAP:
            self.t[r] = round(self.t[r])
        self.t_avg += mass
        self.E += mass * gain

    def add_mass(self, s: float):
        """Exact greedy: allocate mass ``s``, splitting at integer boundaries.

        Once every marginal gain has decayed to zero the objective is flat,
        so the remaining mass is spread uniformly (t_r + s for every rank)
        in one step; boundary splitting would place it one h_r quantum at a
        time, which for a low-probability rank means astronomically many
        steps and an unbounded t_r.
        """
        if s < 0:
            raise DomainError(f"mass must be >= 0, got {s}")
        while s > _MASS_EPS:
            r, d = self.best_rank()
            if d <= _GAIN_FLOOR:
                self.t += s  # h sums to 1, so t_avg rises by exactly s
                self.t_avg += s
                return
            frac = self.t[r] - floor(self.t[r] + _SNAP)
            cap = self.env.h[r] * (1.0 - frac)
            take = min(s, cap)
            self._apply(r, take, d)
            s -= take

    def add_mass_quantum(self, s: float):
        """Grid-refinement stepping: whole h_r quanta, no boundary split."""
        if s < 0:
            raise DomainError(f"mass must be >= 0, got {s}")
        while s > _MASS_EPS:
            r, d = self.best_rank()
            if d <= _GAIN_FLOOR:
                self.t += s
                self.t_avg += s
                return
            h_r = self.env.h[r]
            if h_r >= s:
                self._apply(r, s, d)
                s = 0.0
            else:
                self._apply(r, h_r, d)
                s -= h_r

    def add_until_rank(self, target_E: float):
        """Exact greedy until the objective reaches ``target_E``.

        The final step is partial: s = (target_E - E) / gain.  Raises if the
        target exceeds the saturation value.
        """
        while self.E < target_E - 1e-13:
            r, d = self.best_rank()
            if d <= 1e-13:
                raise DomainError(
                    f"target sink rank {target_E} unreachable (saturates at {self.E})"
                )
            s = (target_E - self.E) / d
            frac = self.t[r] - floor(self.t[r] + _SNAP)
            cap = self.env.h[r] * (1.0 - frac)
            if s <= cap:
                self._apply(r, s, d)
                self.E = target_E  # exact by construction of s
                return
            self._apply(r, cap, d)

    def scheme(self) -> RecodingScheme:
        return RecodingScheme(t=self.t.copy(), t_avg=self.t_avg, sink_rank_mean=self.E)


def solve_recoding(env: RankEnvironment, t_avg: float) -> RecodingScheme:
    """Optimal allocation for a given mean number of recoded packets.

    Mass beyond the saturated table is still allocated (at zero gain) so
    that h . t = t_avg always holds; t_avg above the tabulation cap is
    clamped.
    """
    if t_avg < 0:
        raise DomainError(f"t_avg must be >= 0, got {t_avg}")
    if t_avg > env.t_max:
        import warnings

        warnings.warn(f"t_avg={t_avg} clamped to t_max={env.t_max}")
        t_avg = float(env.t_max)
    state = GreedyState(env)
    state.add_mass(t_avg)
    return state.scheme()


def brute_force_recoding(
    env: RankEnvironment, t_avg: float, grid_step: float
) -> RecodingScheme:
    """Exhaustive grid search oracle for small M; not for production use.

    Enumerates allocations on the grid {0, step, 2*step, ...} for ranks with
    h_r > 0 and returns the best one with |h . t - t_avg| <= step.
    """
    if grid_step <= 0:
        raise DomainError(f"grid_step must be > 0, got {grid_step}")
    if t_avg < 0:
        raise DomainError(f"t_avg must be >= 0, got {t_avg}")
    support = [r for r in range(env.M + 1) if env.h[r] > 0.0]
    # per-axis bound: t_r beyond t_avg/h_r (or the table cap) cannot occur
    axes = []
    for r in support:
        cap = min(t_avg / env.h[r] + grid_step, float(env.t_max))
        axes.append(np.arange(0.0, cap + grid_step / 2, grid_step))
    n_points = 1
    for ax in axes:
        n_points *= len(ax)
    if n_points > 10**8:
        raise ResourceWarning("brute-force grid exceeds 10^8 points")
    # broadcast objective and mass over the full grid
    ndim = len(axes)
    obj = np.full((1,) * ndim, env.R)
    mass = np.zeros((1,) * ndim)
    for i, (r, ax) in enumerate(zip(support, axes)):
        shape = [1] * ndim
        shape[i] = len(ax)
        contrib = env.h[r] * np.array([expected_rank(env, r, v) for v in ax])
        obj = obj + contrib.reshape(shape)
        mass = mass + (env.h[r] * ax).reshape(shape)
    feasible = np.abs(mass - t_avg) <= grid_step
    if not feasible.any():
        raise DomainError("no feasible grid point; decrease grid_step")
    idx = np.unravel_index(np.argmax(np.where(feasible, obj, -np.inf)), obj.shape)
    best_t = np.zeros(env.M + 1)
    for i, r in enumerate(support):
        best_t[r] = axes[i][idx[i]]
    return RecodingScheme(
        t=best_t,
        t_avg=float(env.h @ best_t),
        sink_rank_mean=float(obj[idx]),
    )
