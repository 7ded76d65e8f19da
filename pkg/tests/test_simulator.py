"""Packet-level simulation against deterministic timelines and the model."""

import numpy as np
import pytest

from batsrelay.channel import ChannelSpec, DomainError, build_environment
from batsrelay.idle import idle_time_markov, send_count_distribution
from batsrelay.optimizer import optimize
from batsrelay.recoding import RecodingScheme, solve_recoding
from batsrelay.simulator import (
    empirical_efficiency_batch,
    simulate_transfer,
    transfer_until_rank,
)


def flat_scheme(M, t):
    vec = np.full(M + 1, float(t))
    return RecodingScheme(t=vec, t_avg=float(t), sink_rank_mean=float("nan"))


class TestDeterministicTimelines:
    def test_lossless_pipeline(self):
        # no losses, no overhearing, relay forwards M packets per batch:
        # every batch delivers rank M and the relay trails the source by one
        # batch slot with only the initial delay as idle time
        spec = ChannelSpec(M=4, omega=1, p_sr=0.0, p_rd=0.0, p_sd=1.0)
        report = simulate_transfer(spec, flat_scheme(4, 4), B=5, seed=0)
        assert [t.sink_rank for t in report.traces] == [4] * 5
        assert report.decoding_time == 4 * (5 + 1)
        assert report.total_idle == pytest.approx(4.0)

    def test_silent_relay(self):
        spec = ChannelSpec(M=4, omega=1, p_sr=0.0, p_rd=0.0, p_sd=0.0)
        report = simulate_transfer(spec, flat_scheme(4, 0), B=3, seed=0)
        assert report.cumulative_sink_rank == 12  # overhearing only
        assert report.decoding_time == 3 * 4
        # the relay idles one full source slot per batch: D = B * omega * M
        assert report.total_idle == pytest.approx(12.0)

    def test_timing_invariants(self):
        spec = ChannelSpec(M=8, omega=1, p_sr=0.2, p_rd=0.2, p_sd=0.8)
        env = build_environment(spec)
        scheme = solve_recoding(env, 7.0)
        report = simulate_transfer(spec, scheme, B=30, seed=42)
        prev_finish = 0.0
        for tr in report.traces:
            assert tr.relay_start_time >= (tr.batch_index + 1) * 8
            assert tr.relay_start_time >= prev_finish
            assert tr.relay_finish_time == tr.relay_start_time + tr.recoded_sent
            assert tr.idle_before == pytest.approx(
                tr.relay_start_time - prev_finish
            )
            assert tr.sink_rank <= spec.M
            assert tr.innovative_rank <= bin(tr.relay_received).count("1")
            prev_finish = tr.relay_finish_time
        assert report.total_idle == pytest.approx(
            sum(t.idle_before for t in report.traces)
        )

    def test_deterministic_under_seed(self):
        spec = ChannelSpec(M=8, omega=1, p_sr=0.2, p_rd=0.2, p_sd=0.8)
        env = build_environment(spec)
        scheme = solve_recoding(env, 7.0)
        a = simulate_transfer(spec, scheme, B=10, seed=7)
        b = simulate_transfer(spec, scheme, B=10, seed=7)
        assert a == b

    def test_rejects_bad_arguments(self):
        spec = ChannelSpec(M=4, omega=1, p_sr=0.2, p_rd=0.2, p_sd=0.8)
        with pytest.raises(DomainError):
            simulate_transfer(spec, flat_scheme(4, 2), B=0, seed=0)
        with pytest.raises(DomainError):
            simulate_transfer(spec, flat_scheme(5, 2), B=2, seed=0)


class TestStatisticalAgreement:
    def test_sink_rank_and_idle_match_model(self):
        spec = ChannelSpec(M=8, omega=1, p_sr=0.2, p_rd=0.2, p_sd=0.8)
        env = build_environment(spec)
        scheme = solve_recoding(env, 7.0)
        B = 20
        tbar = send_count_distribution(env.h, scheme.t)
        D_model = idle_time_markov(tbar, spec, B).D
        runs = 150
        ranks = np.empty(runs)
        idles = np.empty(runs)
        for run in range(runs):
            rep = simulate_transfer(
                spec,
                scheme,
                B,
                np.random.SeedSequence(entropy=314, spawn_key=(run,)),
            )
            ranks[run] = rep.cumulative_sink_rank / B
            idles[run] = rep.total_idle
        for sim, model in ((ranks, scheme.sink_rank_mean), (idles, D_model)):
            se = sim.std(ddof=1) / np.sqrt(runs)
            assert abs(sim.mean() - model) <= 3.0 * se

    def test_mean_send_count_matches_budget(self):
        spec = ChannelSpec(M=8, omega=1, p_sr=0.2, p_rd=0.2, p_sd=0.8)
        env = build_environment(spec)
        scheme = solve_recoding(env, 7.03)
        rep = simulate_transfer(spec, scheme, B=400, seed=8)
        sent = np.array([t.recoded_sent for t in rep.traces], dtype=float)
        se = sent.std(ddof=1) / np.sqrt(len(sent))
        assert abs(sent.mean() - 7.03) <= 3.0 * se


class TestStochasticStopping:
    def test_summary_is_reproducible(self):
        spec = ChannelSpec(M=8, omega=1, p_sr=0.2, p_rd=0.2, p_sd=0.8)
        env = build_environment(spec)
        scheme = solve_recoding(env, 7.0)
        a = empirical_efficiency_batch(spec, scheme, F=100, runs=20, seed=6)
        b = empirical_efficiency_batch(spec, scheme, F=100, runs=20, seed=6)
        assert a == b
        assert a.mean_batches == pytest.approx(a.analytic_B, rel=0.2)

    def test_efficiency_near_analytic_optimum(self):
        spec = ChannelSpec(M=8, omega=1, p_sr=0.2, p_rd=0.2, p_sd=0.8)
        env = build_environment(spec)
        result = optimize(100, spec, env)
        scheme = RecodingScheme(
            t=result.best.t.copy(),
            t_avg=result.best.t_avg,
            sink_rank_mean=result.best.E,
        )
        summary = empirical_efficiency_batch(spec, scheme, F=100, runs=100, seed=12)
        assert abs(summary.mean - result.best.f) <= 0.02

    def test_zero_rank_scheme_rejected(self):
        spec = ChannelSpec(M=4, omega=1, p_sr=0.0, p_rd=0.0, p_sd=1.0)
        with pytest.raises(DomainError):
            empirical_efficiency_batch(spec, flat_scheme(4, 0), F=10, runs=1, seed=0)

    def test_nontermination_guard(self):
        spec = ChannelSpec(M=4, omega=1, p_sr=0.2, p_rd=0.2, p_sd=0.8)
        env = build_environment(spec)
        scheme = solve_recoding(env, 1.0)
        rng = np.random.default_rng(0)
        with pytest.raises(DomainError):
            transfer_until_rank(spec, scheme, F=100, rng=rng, guard=3)
