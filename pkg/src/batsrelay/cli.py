"""Command-line front end.

Subcommands::

    optimize     best recoding budget and its time efficiency
    sweep        efficiency objectives on a t_avg grid (CSV, for plotting)
    idle         expected idling time of a scheme, exact chain vs Monte Carlo
    upper-bound  efficiency limit as the idling overhead vanishes
    simulate     packet-level transfers with per-batch trace output

Values come from flags, then from an optional ``key=value`` config file,
then from defaults.  Human-readable tables use 4 decimals; CSV output is
full precision with dot decimal separators and LF line endings.  Exit
codes: 0 success, 1 runtime or infeasibility error, 2 usage error.
"""

import argparse
import sys
from dataclasses import dataclass, fields
from math import ceil

import numpy as np

from .channel import ChannelSpec, DomainError, build_environment
from .idle import (
    idle_time_markov,
    idle_time_monte_carlo,
    send_count_distribution,
)
from .optimizer import (
    efficiency_e1,
    efficiency_e2,
    optimize,
    solve_upper_bound,
)
from .recoding import GreedyState, RecodingScheme, sink_rank
from .simulator import empirical_efficiency_batch, transfer_until_rank


@dataclass
class RunConfig:
    """Resolved parameters for one CLI invocation."""

    F: int = 100
    M: int = 8
    omega: float = 1.0
    p_sr: float = 0.2
    p_rd: float = 0.2
    p_sd: float = 0.8
    t_max: int | None = None  # None -> 4*M
    grid_step: float = 0.01
    epsilon_edge: float = 1e-6
    trials: int = 100_000
    seed: int | None = None
    d_method: str | None = None  # None -> markov if omega integral else mc
    output_path: str | None = None

    def resolved_d_method(self) -> str:
        if self.d_method is not None:
            return self.d_method
        return "markov" if float(self.omega).is_integer() else "monte_carlo"

    def channel_spec(self) -> ChannelSpec:
        return ChannelSpec(
            M=self.M,
            omega=self.omega,
            p_sr=self.p_sr,
            p_rd=self.p_rd,
            p_sd=self.p_sd,
        )


_CONFIG_CASTS = {
    "F": int,
    "M": int,
    "omega": float,
    "p_sr": float,
    "p_rd": float,
    "p_sd": float,
    "t_max": int,
    "grid_step": float,
    "epsilon_edge": float,
    "trials": int,
    "seed": int,
    "d_method": str,
    "output_path": str,
}


class UsageError(Exception):
    """Bad flags or config; maps to exit code 2."""


def load_config_file(path: str) -> dict:
    """Parse a flat key=value file; '#' starts a comment, blanks ignored."""
    values = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected key=value")
                key, _, value = line.partition("=")
                key = key.strip()
                if key not in _CONFIG_CASTS:
                    raise UsageError(f"{path}:{lineno}: unknown key {key!r}")
                try:
                    values[key] = _CONFIG_CASTS[key](value.strip())
                except ValueError as exc:
                    raise UsageError(f"{path}:{lineno}: {exc}") from exc
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return values


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """Merge precedence: flags > config file > defaults."""
    cfg = RunConfig()
    if getattr(args, "config", None):
        for key, value in load_config_file(args.config).items():
            setattr(cfg, key, value)
    flag_names = {
        "F": "F",
        "M": "M",
        "omega": "omega",
        "p_sr": "p_sr",
        "p_rd": "p_rd",
        "p_sd": "p_sd",
        "step": "grid_step",
        "trials": "trials",
        "seed": "seed",
        "d_method": "d_method",
        "out": "output_path",
        "t_max": "t_max",
        "epsilon_edge": "epsilon_edge",
    }
    for flag, field in flag_names.items():
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, field, value)
    if cfg.d_method == "mc":
        cfg.d_method = "monte_carlo"
    if cfg.d_method not in (None, "markov", "monte_carlo"):
        raise UsageError(f"unknown d_method {cfg.d_method!r}")
    return cfg


def _require_seed(cfg: RunConfig, what: str):
    if cfg.seed is None:
        raise UsageError(f"--seed is required for {what}")


def _csv_open(path: str | None):
    if path is None or path == "-":
        return sys.stdout, False
    try:
        return open(path, "w", encoding="utf-8", newline="\n"), True
    except OSError as exc:
        raise DomainError(f"cannot write {path}: {exc}") from exc


def _fmt(x: float) -> str:
    """Full-precision, locale-independent CSV float."""
    return repr(float(x))


def _optimal(cfg: RunConfig):
    spec = cfg.channel_spec()
    env = build_environment(spec, t_max=cfg.t_max)
    if cfg.resolved_d_method() != "markov":
        _require_seed(cfg, "Monte Carlo idle-time estimation")
    result = optimize(
        cfg.F,
        spec,
        env,
        d_method=cfg.resolved_d_method(),
        step=cfg.grid_step,
        epsilon_edge=cfg.epsilon_edge,
        trials=cfg.trials,
        seed=cfg.seed,
    )
    return spec, env, result


def cmd_optimize(args) -> int:
    cfg = build_run_config(args)
    spec, env, result = _optimal(cfg)
    best = result.best
    if spec.p_sd == 0.0:
        print(
            "warning: p_sd=0, the sink overhears every packet; "
            "recoding is unnecessary",
            file=sys.stderr,
        )
    print("F     M   B     D/B      t_avg    efficiency  upper_bound")
    print(
        "%-5d %-3d %-5d %-8.4f %-8.4f %-11.4f %-11.4f"
        % (cfg.F, cfg.M, best.B, best.D / best.B, best.t_avg, best.f, result.upper_bound)
    )
    if cfg.output_path:
        fh, close = _csv_open(cfg.output_path)
        fh.write("F,M,B,D_over_B,tavg,efficiency,upper_bound\n")
        fh.write(
            "%d,%d,%d,%s,%s,%s,%s\n"
            % (
                cfg.F,
                cfg.M,
                best.B,
                _fmt(best.D / best.B),
                _fmt(best.t_avg),
                _fmt(best.f),
                _fmt(result.upper_bound),
            )
        )
        if close:
            fh.close()
    return 0


def cmd_sweep(args) -> int:
    cfg = build_run_config(args)
    spec = cfg.channel_spec()
    env = build_environment(spec, t_max=cfg.t_max)
    d_method = cfg.resolved_d_method()
    if d_method != "markov":
        _require_seed(cfg, "Monte Carlo idle-time estimation")
    lo, hi = args.t_from, args.t_to
    if lo is None or hi is None:
        raise UsageError("sweep needs --t-from and --t-to")
    if not (0.0 <= lo <= hi <= env.t_max):
        raise UsageError(f"sweep range [{lo}, {hi}] outside [0, {env.t_max}]")
    omega_M = spec.omega * spec.M
    fh, close = _csv_open(cfg.output_path)
    fh.write("tavg,eff1,eff2,E,B,D_over_B\n")
    state = GreedyState(env)
    state.add_mass(lo)
    while True:
        E = state.E
        B = max(1, ceil(cfg.F / E - 1e-12))
        tbar = send_count_distribution(env.h, state.t)
        if d_method == "markov":
            D = idle_time_markov(tbar, spec, B, gaps=B).D
        else:
            D = idle_time_monte_carlo(
                tbar, spec, B, trials=cfg.trials, seed=cfg.seed, gaps=B
            ).D
        eff1 = efficiency_e2(E, state.t_avg, D, B)
        eff2 = efficiency_e1(E, spec)
        fh.write(
            "%s,%s,%s,%s,%d,%s\n"
            % (_fmt(state.t_avg), _fmt(eff1), _fmt(eff2), _fmt(E), B, _fmt(D / B))
        )
        if state.t_avg + cfg.grid_step > hi + 1e-12:
            break
        state.add_mass(cfg.grid_step)
    if close:
        fh.close()
    return 0


def _load_t_vector(path: str, M: int) -> np.ndarray:
    try:
        raw = open(path, encoding="utf-8").read()
    except OSError as exc:
        raise UsageError(f"cannot read t-vector file {path}: {exc}") from exc
    parts = raw.replace(",", " ").split()
    try:
        t = np.array([float(p) for p in parts])
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from exc
    if t.shape != (M + 1,):
        raise UsageError(
            f"{path}: expected {M + 1} values (ranks 0..{M}), got {len(t)}"
        )
    return t


def cmd_idle(args) -> int:
    cfg = build_run_config(args)
    spec = cfg.channel_spec()
    env = build_environment(spec, t_max=cfg.t_max)
    omega_is_int = float(spec.omega).is_integer()
    if args.scheme == "optimal":
        _, _, result = _optimal(cfg)
        t = result.best.t
        B = result.best.B
    else:
        t = _load_t_vector(args.scheme, cfg.M)
        E = sink_rank(env, t)
        B = args.B if args.B is not None else max(1, ceil(cfg.F / E - 1e-12))
    if args.B is not None:
        B = args.B
    tbar = send_count_distribution(env.h, t)
    print("method        D            D/B          stderr")
    rows = []
    if omega_is_int:
        exact = idle_time_markov(tbar, spec, B)
        reported = idle_time_markov(tbar, spec, B, gaps=B)
        rows.append(("markov", exact.D, reported.D / B, 0.0))
    _require_seed(cfg, "the Monte Carlo idle-time estimate")
    mc = idle_time_monte_carlo(tbar, spec, B, trials=cfg.trials, seed=cfg.seed)
    mc_rep = idle_time_monte_carlo(
        tbar, spec, B, trials=cfg.trials, seed=cfg.seed, gaps=B
    )
    rows.append(("monte_carlo", mc.D, mc_rep.D / B, mc.stderr))
    for name, D, DB, se in rows:
        print("%-13s %-12.4f %-12.4f %-12.4f" % (name, D, DB, se))
    if cfg.output_path:
        fh, close = _csv_open(cfg.output_path)
        fh.write("method,D,D_over_B,stderr\n")
        for name, D, DB, se in rows:
            fh.write("%s,%s,%s,%s\n" % (name, _fmt(D), _fmt(DB), _fmt(se)))
        if close:
            fh.close()
    return 0


def cmd_upper_bound(args) -> int:
    cfg = build_run_config(args)
    spec = cfg.channel_spec()
    env = build_environment(spec, t_max=cfg.t_max)
    ub = solve_upper_bound(spec, env)
    print("M     omega   upper_bound")
    print("%-5d %-7.4g %-11.4f" % (cfg.M, cfg.omega, ub))
    if cfg.output_path:
        fh, close = _csv_open(cfg.output_path)
        fh.write("M,omega,upper_bound\n")
        fh.write("%d,%s,%s\n" % (cfg.M, _fmt(cfg.omega), _fmt(ub)))
        if close:
            fh.close()
    return 0


def cmd_simulate(args) -> int:
    cfg = build_run_config(args)
    _require_seed(cfg, "simulation")
    runs = args.runs
    if runs < 1:
        raise UsageError(f"--runs must be >= 1, got {runs}")
    spec, env, result = _optimal(cfg)
    best = result.best
    scheme = RecodingScheme(
        t=best.t.copy(), t_avg=best.t_avg, sink_rank_mean=best.E
    )
    guard = 10 * best.B
    fh, close = _csv_open(cfg.output_path)
    fh.write(
        "run,batch,innov_rank,sent,received,sink_rank,"
        "idle_before,relay_start,relay_finish\n"
    )
    effs = np.empty(runs)
    try:
        for run in range(runs):
            rng = np.random.default_rng(
                np.random.SeedSequence(entropy=cfg.seed, spawn_key=(run,))
            )
            traces, decoding = transfer_until_rank(
                spec, scheme, cfg.F, rng, guard
            )
            effs[run] = cfg.F / decoding
            for tr in traces:
                fh.write(
                    "%d,%d,%d,%d,%d,%d,%s,%s,%s\n"
                    % (
                        run,
                        tr.batch_index,
                        tr.innovative_rank,
                        tr.recoded_sent,
                        tr.recoded_received,
                        tr.sink_rank,
                        _fmt(tr.idle_before),
                        _fmt(tr.relay_start_time),
                        _fmt(tr.relay_finish_time),
                    )
                )
    finally:
        if close:
            fh.close()
    stderr = float(effs.std(ddof=1) / np.sqrt(runs)) if runs > 1 else 0.0
    print("runs  analytic_eff  empirical_eff  stderr")
    print("%-5d %-13.4f %-14.4f %-7.4f" % (runs, best.f, effs.mean(), stderr))
    return 0


def _add_common_flags(p: argparse.ArgumentParser):
    p.add_argument("--F", type=int, help="number of input packets")
    p.add_argument("--M", type=int, help="batch size")
    p.add_argument("--omega", type=float, help="source slot duration")
    p.add_argument("--p-sr", dest="p_sr", type=float, help="source->relay loss")
    p.add_argument("--p-rd", dest="p_rd", type=float, help="relay->sink loss")
    p.add_argument("--p-sd", dest="p_sd", type=float, help="overhearing loss")
    p.add_argument("--step", type=float, help="t_avg grid step (default 0.01)")
    p.add_argument("--t-max", dest="t_max", type=int, help="tabulation cap")
    p.add_argument(
        "--epsilon-edge",
        dest="epsilon_edge",
        type=float,
        help="segment right-edge backoff mass",
    )
    p.add_argument("--trials", type=int, help="Monte Carlo trials")
    p.add_argument("--seed", type=int, help="RNG seed")
    p.add_argument(
        "--d-method",
        dest="d_method",
        choices=["markov", "mc"],
        help="idle-time method (default: markov when omega is integral)",
    )
    p.add_argument("--out", help="CSV output path ('-' for stdout)")
    p.add_argument("--config", help="key=value config file")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="batsrelay",
        description="Recoding optimization for a two-hop relay with overhearing",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("optimize", help="best recoding budget and efficiency")
    _add_common_flags(p)
    p.set_defaults(func=cmd_optimize)

    p = sub.add_parser("sweep", help="efficiency objectives over a t_avg grid")
    _add_common_flags(p)
    p.add_argument("--t-from", dest="t_from", type=float, help="grid start")
    p.add_argument("--t-to", dest="t_to", type=float, help="grid end")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("idle", help="expected idling time of a scheme")
    _add_common_flags(p)
    p.add_argument(
        "--scheme",
        default="optimal",
        help="'optimal' or a file with M+1 per-rank send counts",
    )
    p.add_argument("--B", type=int, help="number of batches (default ceil(F/E))")
    p.set_defaults(func=cmd_idle)

    p = sub.add_parser("upper-bound", help="efficiency limit without idling")
    _add_common_flags(p)
    p.set_defaults(func=cmd_upper_bound)

    p = sub.add_parser("simulate", help="packet-level transfer simulation")
    _add_common_flags(p)
    p.add_argument("--runs", type=int, default=200, help="independent transfers")
    p.set_defaults(func=cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (DomainError, ResourceWarning) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
