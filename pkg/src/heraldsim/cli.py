"""``heraldsim`` command line: analytic, simulate, sweep and validate.

Every command that writes files writes a CSV table and a JSON run record
with the same base name (``--out results/run.csv`` also writes
``results/run.json``).  Files are written only after the whole run has
succeeded.
"""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path
from typing import Sequence

from scipy.optimize import brentq

from . import __version__, analytic
from . import experiments as ex
from .config import config_digest, flatten, is_known_key, load_config, set_param
from .model import PROFILES, ConfigError, SystemConfig, validate_config
from .records import RunRecord, assumptions, table_text, write_atomic


def _add_config_args(p: argparse.ArgumentParser) -> None:
    src = p.add_mutually_exclusive_group()
    src.add_argument("--config", metavar="PATH", help="flat key = value config file")
    src.add_argument("--profile", choices=sorted(PROFILES), default=None,
                     help="built-in profile (default paper-default)")
    p.add_argument("--set", metavar="KEY=VALUE", action="append", default=[],
                   help="override one dotted parameter; may be repeated")
    p.add_argument("--seed", type=int, help="master seed")
    p.add_argument("--slots", type=float, help="clock slots per simulation")


def _add_out(p: argparse.ArgumentParser, default: str | None) -> None:
    p.add_argument("--out", metavar="PATH", default=default,
                   help="output table (.csv); the run record goes next to it as .json")


def _load(args) -> SystemConfig:
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = PROFILES[args.profile or "paper-default"]()
    for item in args.set:
        key, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key = key.strip()
        if not is_known_key(key, cfg):
            raise ConfigError(f"unknown config key {key!r}")
        cfg = set_param(cfg, key, value.strip())
    if args.seed is not None:
        cfg = set_param(cfg, "seed", args.seed)
    if args.slots is not None:
        cfg = set_param(cfg, "n_slots", args.slots)
    return validate_config(cfg)


def _paths(out: str) -> tuple[Path, Path]:
    table = Path(out)
    if table.suffix != ".csv":
        table = table.with_name(table.name + ".csv")
    return table, table.with_suffix(".json")


def _write(out: str, cfg: SystemConfig, scenario: str, rows, t0: float, counters=None,
           inputs: Sequence[str] = ()) -> None:
    digest = config_digest(cfg)
    dicts = [r.to_dict() for r in rows]
    meta = assumptions(cfg)
    table = table_text(dicts, scenario=scenario, digest=digest, seed=cfg.seed,
                       extra_meta=[f"assumption: {a}" for a in meta] + [f"input: {i}" for i in inputs])
    record = RunRecord(digest=digest, seed=cfg.seed, version=__version__, scenario=scenario, rows=dicts,
                       wall_time_s=time.perf_counter() - t0, config=flatten(cfg), assumptions=meta,
                       counters=counters)
    table_path, json_path = _paths(out)
    write_atomic(table_path, table)
    write_atomic(json_path, record.to_json())
    print(f"wrote {table_path} and {json_path}")


# ---------------------------------------------------------------- analytic

def _fmt(x: float) -> str:
    return f"{x:.12g}"


def _cmd_analytic(args) -> int:
    cfg = _load(args)
    her = cfg.heralding
    F = args.clock if args.clock is not None else cfg.source.clock_rate_hz
    mu = args.mu if args.mu is not None else cfg.source.mu
    beta = args.beta if args.beta is not None else sum(her.collection_efficiencies)
    dark = args.dark if args.dark is not None else her.detectors[0].dark_prob
    tau = args.tau if args.tau is not None else her.detectors[0].deadtime_s
    m = args.m if args.m is not None else her.m
    out: dict[str, float] = {}
    echo: list[str] = []

    if args.eq2:
        echo.append(f"eq2: mu={_fmt(mu)} beta={_fmt(beta)} dark={_fmt(dark)} clock={_fmt(F)}")
        out["N_t"] = analytic.triggering_rate(mu, beta, dark, F)
    if args.eq3:
        nt = args.nt if args.nt is not None else analytic.triggering_rate(mu, beta, dark, F)
        echo.append(f"eq3: N_t={_fmt(nt)} tau={_fmt(tau)}")
        out["N_d"] = analytic.deadtime_limited_rate(nt, tau)
    if args.eq4:
        if args.nt is not None:
            # the pair number that gives the requested total trigger rate
            mu4 = brentq(lambda x: analytic.triggering_rate(x, beta, dark, F) - args.nt, 0.0, 1e3 / max(beta, 1e-12))
        else:
            mu4 = mu
        echo.append(f"eq4: mu={_fmt(mu4)} beta={_fmt(beta)} dark={_fmt(dark)} clock={_fmt(F)} m={m} tau={_fmt(tau)}")
        out[f"N_d_m{m}"] = analytic.psm_heralding_rate(mu4, beta, dark, F, m, tau)
    if args.chi:
        alpha = args.alpha_s if args.alpha_s is not None else cfg.receiver.channel_transmittance
        echo.append(f"chi: alpha_s={_fmt(alpha)} mu={_fmt(mu)}")
        out["chi"] = analytic.chi_improvement(alpha, mu)
    if args.qber:
        if args.psnr is None:
            raise ConfigError("--qber needs --psnr")
        echo.append(f"qber: psnr={_fmt(args.psnr)}")
        out["qber"] = analytic.qber_from_psnr(args.psnr)
    if args.noisy_fraction:
        if args.n_qkd is None or args.n_noise is None:
            raise ConfigError("--noisy-fraction needs --n-qkd and --n-noise")
        tau_r = args.tau_receiver if args.tau_receiver is not None else cfg.receiver.detector3.deadtime_s
        chi = args.chi_value if args.chi_value is not None else 1.0
        echo.append(f"noisy-fraction: n_qkd={_fmt(args.n_qkd)} n_noise={_fmt(args.n_noise)} "
                    f"tau_receiver={_fmt(tau_r)} chi={_fmt(chi)}")
        rep = analytic.noisy_fraction(args.n_qkd, args.n_noise, tau_r, chi)
        out["n_qkd_noisy"] = rep.n_qkd_noisy
        out["f"] = rep.f
        out["f_improved"] = rep.f_improved
    if args.appendix_a:
        if her.m > 2:
            raise ConfigError("heralding.m: the two-detector pipeline needs m <= 2")
        alpha = args.alpha_s if args.alpha_s is not None else ex.heralded_clicks(cfg).clicks_per_herald
        betas = list(her.collection_efficiencies) + [0.0]
        darks = [d.dark_prob for d in her.detectors] + [0.0]
        tau_r = args.tau_receiver if args.tau_receiver is not None else cfg.receiver.detector3.deadtime_s
        echo.append(f"appendix-a: mu={_fmt(mu)} beta1={_fmt(betas[0])} beta2={_fmt(betas[1])} clock={_fmt(F)} "
                    f"tau={_fmt(tau)} tau_receiver={_fmt(tau_r)} alpha_s={_fmt(alpha)}")
        rep = analytic.appendix_a_pipeline(mu, betas[0], betas[1], F, tau, tau_r, alpha, (darks[0], darks[1]))
        out.update(rep.as_dict())
    if args.car:
        rx = cfg.receiver
        b_s = rx.photon_click_probs[0] + rx.photon_click_probs[1]
        b_i = her.collection_efficiencies[0]
        echo.append(f"car: mu={_fmt(mu)} beta_signal={_fmt(b_s)} beta_idler={_fmt(b_i)} "
                    f"dark_signal={_fmt(rx.detector3.dark_prob)} dark_idler={_fmt(her.detectors[0].dark_prob)} "
                    f"tau={_fmt(rx.detector3.deadtime_s)} clock={_fmt(F)}")
        car, (s, i) = analytic.analytic_car(mu, b_s, b_i, rx.detector3.dark_prob, her.detectors[0].dark_prob,
                                            rx.detector3.deadtime_s, F)
        out["car"] = car
    if not out:
        raise ConfigError("no quantity requested; pass e.g. --eq3, --eq4, --chi, --qber")

    for line in echo:
        print(f"# {line}")
    for k, v in out.items():
        print(f"{k} = {_fmt(v)}")
    if args.out:
        row = ex.SweepRow("analytic", "source.mu", mu, 0, cfg.seed, config_digest(cfg), {}, {}, out, {})
        _write(args.out, cfg, "analytic", [row], time.perf_counter(), inputs=echo)
    return 0


# ---------------------------------------------------------------- simulate / sweep / validate

def _cmd_simulate(args) -> int:
    cfg = _load(args)
    t0 = time.perf_counter()
    row, counters = ex.simulate_row(cfg, workers=args.workers)
    for k, v in row.metrics.items():
        a = row.analytic.get(k)
        mc = "undefined" if v is None else f"{_fmt(v.value)} +- {v.std_error:.3g}"
        print(f"{k:22s} {mc:32s} analytic {_fmt(a) if a is not None else '-'}")
    _write(args.out, cfg, "simulate", [row], t0, counters=counters.to_dict())
    return 0


def _validation(cfg: SystemConfig, args, t0: float) -> int:
    rep = ex.run_validation_matrix(cfg, min_slots=int(args.min_slots), max_slots=int(args.max_slots))
    for k, v in rep.max_deviation().items():
        print(f"max |deviation| {k}: {v:.4f}")
    for c in rep.flagged:
        print(f"FLAGGED mu={c.mu} tau={c.deadtime_s} m={c.m}: "
              + ", ".join(f"{k} {d.rel_dev:+.4f}" for k, d in c.deviations.items() if not d.within))
    print("all cells within tolerance" if rep.all_within else f"{len(rep.flagged)} cell(s) flagged")
    _write(args.out, cfg, "validate", ex.validation_rows(rep, cfg), t0)
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load(args)
    t0 = time.perf_counter()
    out = args.out or f"{args.scenario}.csv"
    args.out = out
    if args.scenario == ex.Scenario.VALIDATION_MATRIX.value:
        return _validation(cfg, args, t0)
    spec = ex.default_spec(args.scenario, cfg, replicates=args.replicates)
    rows = ex.run_sweep(spec, workers=args.workers)
    print(f"{len(rows)} rows")
    _write(out, cfg, args.scenario, rows, t0)
    return 0


def _cmd_validate(args) -> int:
    cfg = _load(args)
    return _validation(cfg, args, time.perf_counter())


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="heraldsim", description="Heralded single-photon source simulator.")
    parser.add_argument("--version", action="version", version=f"heraldsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("analytic", help="closed-form rates and figures of merit")
    _add_config_args(p)
    for flag, text in [("--eq2", "deadtime-free trigger rate"), ("--eq3", "deadtime-limited rate"),
                       ("--eq4", "m-detector heralding rate"), ("--chi", "receiver-rate improvement factor"),
                       ("--qber", "QBER from --psnr"), ("--noisy-fraction", "usable fraction under noise"),
                       ("--appendix-a", "two-detector receiver pipeline"), ("--car", "coincidence-to-accidental")]:
        p.add_argument(flag, action="store_true", help=text)
    for flag in ("--nt", "--tau", "--mu", "--beta", "--dark", "--clock", "--alpha-s", "--psnr", "--n-qkd",
                 "--n-noise", "--tau-receiver"):
        p.add_argument(flag, type=float)
    p.add_argument("--chi-value", type=float, help="improvement factor used by --noisy-fraction")
    p.add_argument("--m", type=int)
    _add_out(p, None)
    p.set_defaults(func=_cmd_analytic)

    p = sub.add_parser("simulate", help="one Monte Carlo run")
    _add_config_args(p)
    p.add_argument("--workers", type=int, default=1)
    _add_out(p, "simulate.csv")
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("sweep", help="one figure scenario")
    _add_config_args(p)
    p.add_argument("--scenario", required=True, choices=[s.value for s in ex.Scenario])
    p.add_argument("--replicates", type=int, default=3)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--min-slots", type=float, default=1e8, help="validate only")
    p.add_argument("--max-slots", type=float, default=2e9, help="validate only")
    _add_out(p, None)
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("validate", help="Monte Carlo against closed forms on the validation lattice")
    _add_config_args(p)
    p.add_argument("--min-slots", type=float, default=1e8)
    p.add_argument("--max-slots", type=float, default=2e9)
    _add_out(p, "validate.csv")
    p.set_defaults(func=_cmd_validate)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ValueError, OSError) as exc:
        print(f"heraldsim: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
