"""Discrete-event simulation of the source -> relay -> sink pipeline.

The source broadcasts batch after batch, each taking omega*M time units;
the relay recodes what it heard and forwards over unit-time slots while
the sink also overhears the source directly.  The simulation realizes
per-packet losses, the relay's randomized send count, and the resulting
timeline, so every analytic quantity (sink rank E, idling time D, time
efficiency) can be checked against its empirical counterpart.

Rank bookkeeping uses the generic-rank rule: packets of a batch are
linearly independent wherever they land (large-field assumption), so a
received recoded packet raises the sink's rank by one until the rank
reaches the span of what relay and sink jointly hold.
"""

from dataclasses import dataclass
from math import ceil, floor

import numpy as np

from .channel import ChannelSpec, DomainError, build_environment
from .recoding import RecodingScheme, sink_rank


@dataclass(frozen=True)
class BatchTrace:
    """Everything the simulation recorded about one batch."""

    batch_index: int
    relay_received: int  # bitmask over the M packet slots
    sink_overheard: int  # bitmask over the M packet slots
    innovative_rank: int  # packets at the relay the sink does not have
    recoded_sent: int
    recoded_received: int
    sink_rank: int
    relay_start_time: float
    relay_finish_time: float
    idle_before: float


@dataclass(frozen=True)
class TransferReport:
    traces: tuple
    total_idle: float
    finish_time_relay: float
    finish_time_source: float
    decoding_time: float
    cumulative_sink_rank: int
    empirical_efficiency: float


def _simulate_batches(spec, scheme, n_batches, rng, start_index=0, prev_finish=None):
    """Core batch loop; yields BatchTrace objects."""
    M = spec.M
    omega_M = spec.omega * M
    t = scheme.t
    if prev_finish is None:
        prev_finish = 0.0
    traces = []
    for b in range(start_index, start_index + n_batches):
        relay_mask = 0
        sink_mask = 0
        for j in range(M):
            if rng.random() >= spec.p_sr:
                relay_mask |= 1 << j
            if rng.random() >= spec.p_sd:
                sink_mask |= 1 << j
        innovative = bin(relay_mask & ~sink_mask).count("1")
        t_r = float(t[innovative])
        sent = int(floor(t_r + 1e-12))
        frac = t_r - sent
        if frac > 1e-12 and rng.random() < frac:
            sent += 1
        received = int(rng.binomial(sent, 1.0 - spec.p_rd)) if sent else 0
        source_finish = (b + 1) * omega_M
        start = max(prev_finish, source_finish)
        finish = start + sent
        # uniform: for the very first batch prev_finish is 0, so this is
        # the initial delay omega*M while the source sends batch 0
        idle = start - prev_finish
        srank = bin(sink_mask).count("1") + min(received, innovative)
        traces.append(
            BatchTrace(
                batch_index=b,
                relay_received=relay_mask,
                sink_overheard=sink_mask,
                innovative_rank=innovative,
                recoded_sent=sent,
                recoded_received=received,
                sink_rank=srank,
                relay_start_time=start,
                relay_finish_time=finish,
                idle_before=idle,
            )
        )
        prev_finish = finish
    return traces


def simulate_transfer(
    spec: ChannelSpec, scheme: RecodingScheme, B: int, seed
) -> TransferReport:
    """Simulate one B-batch transfer; deterministic for a fixed seed.

    The relay cannot start forwarding a batch before the source finishes
    broadcasting it, so batch b's relay slot opens at max((b+1)*omega*M,
    previous relay finish); the difference to the previous finish is idle
    time.  The transfer is decoded once both the source and the relay are
    done: decoding_time = max(B*omega*M, last relay finish).
    """
    if B < 1:
        raise DomainError(f"B must be >= 1, got {B}")
    if scheme.t.shape != (spec.M + 1,):
        raise DomainError("scheme allocation does not match spec's M")
    rng = np.random.default_rng(seed)
    traces = _simulate_batches(spec, scheme, B, rng)
    finish_relay = traces[-1].relay_finish_time
    finish_source = B * spec.omega * spec.M
    decoding = max(finish_relay, finish_source)
    total_idle = sum(tr.idle_before for tr in traces)
    cum = sum(tr.sink_rank for tr in traces)
    return TransferReport(
        traces=tuple(traces),
        total_idle=total_idle,
        finish_time_relay=finish_relay,
        finish_time_source=finish_source,
        decoding_time=decoding,
        cumulative_sink_rank=cum,
        empirical_efficiency=cum / decoding,
    )


@dataclass(frozen=True)
class EfficiencySummary:
    """Empirical efficiency over repeated transfers of F input packets."""

    runs: int
    mean: float
    stderr: float
    analytic_E: float
    analytic_B: int
    mean_batches: float
    mean_decoding_time: float


def transfer_until_rank(
    spec: ChannelSpec, scheme: RecodingScheme, F: int, rng, guard: int
):
    """Generate batches until the sink's cumulative rank reaches F.

    Returns (traces, decoding_time).  Raises after ``guard`` batches: the
    scheme's sink rank is too low to ever finish in reasonable time.
    """
    omega_M = spec.omega * spec.M
    cum = 0
    prev_finish = 0.0
    traces = []
    b = 0
    while cum < F:
        if b >= guard:
            raise DomainError(
                f"exceeded {guard} batches without reaching rank {F}"
            )
        trace = _simulate_batches(
            spec, scheme, 1, rng, start_index=b, prev_finish=prev_finish
        )[0]
        traces.append(trace)
        cum += trace.sink_rank
        prev_finish = trace.relay_finish_time
        b += 1
    decoding = max(b * omega_M, prev_finish)
    return traces, decoding


def empirical_efficiency_batch(
    spec: ChannelSpec,
    scheme: RecodingScheme,
    F: int,
    runs: int,
    seed,
) -> EfficiencySummary:
    """Simulate transfers until the sink holds rank F; report F/decoding_time.

    Each run keeps generating batches until the cumulative sink rank
    reaches F, then records F divided by the decoding time.  Run r uses an
    independent stream derived from (seed, r), so the summary is
    reproducible and runs may be distributed.  A run exceeding ten times
    the expected batch count aborts with an error: the scheme's sink rank
    is too low to ever finish in reasonable time.
    """
    if runs < 1:
        raise DomainError(f"runs must be >= 1, got {runs}")
    if F < 1:
        raise DomainError(f"F must be >= 1, got {F}")
    env = build_environment(spec)
    E = sink_rank(env, scheme.t)
    if E <= 0.0:
        raise DomainError("scheme has zero expected sink rank; cannot finish")
    B_expect = ceil(F / E)
    guard = 10 * B_expect
    effs = np.empty(runs)
    n_batches = np.empty(runs)
    times = np.empty(runs)
    for run in range(runs):
        rng = np.random.default_rng(
            np.random.SeedSequence(entropy=seed, spawn_key=(run,))
        )
        traces, decoding = transfer_until_rank(spec, scheme, F, rng, guard)
        effs[run] = F / decoding
        n_batches[run] = len(traces)
        times[run] = decoding
    stderr = float(effs.std(ddof=1) / np.sqrt(runs)) if runs > 1 else 0.0
    return EfficiencySummary(
        runs=runs,
        mean=float(effs.mean()),
        stderr=stderr,
        analytic_E=E,
        analytic_B=B_expect,
        mean_batches=float(n_batches.mean()),
        mean_decoding_time=float(times.mean()),
    )
