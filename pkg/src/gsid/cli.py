"""Command-line interface.

Subcommands: simulate, estimate, ensemble, excitation-scan, spectral-verify,
density, counterexample.  Run configurations live in INI-style files (see
``config_schema`` below and the README); command-line flags override config
keys.  Outputs are written atomically (temp file + rename).  Exit codes:
0 success, 2 configuration error, 3 runtime error (instability, size caps),
4 verification failure in the verify-style modes.
"""

from __future__ import annotations

import argparse
import configparser
import math
import os
import re
import sys
import tempfile
from contextlib import contextmanager

import numpy as np

from .boxes import Box
from .density import DensityQuery, lower_density, m_sym_lower_density
from .estimator import (EstimatorConfig, ResidualData, SigmaScenario,
                        records_to_csv, run_estimation)
from .excitation import scan_betas, write_report_json
from .harness import (EnsembleConfig, counterexample_demo, run_ensemble,
                      write_runs_jsonl, write_summary_csv)
from .inputs import policy_from_name
from .models import SystemSpec, model_from_name
from .noise import NoiseSpec
from .simulate import simulate, write_jsonl
from .spectral import (HierarchySizeError, verify_random_instances,
                       write_verification_jsonl)
from .validation import ConfigurationError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_VERIFY = 4


def _fmt(x) -> str:
    return f"{float(x):.17g}"


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"config error at [{key}]: {message}")


# section -> allowed keys; unknown sections or keys are rejected
CONFIG_SCHEMA = {
    "system": {"model", "theta_box", "b1", "b2", "width", "expression", "n", "m",
               "gradient_mode"},
    "noise": {"family", "c_w", "sigma_w", "df", "scale", "kappa"},
    "estimator": {"lambda", "gamma", "c", "scenario", "sigma_known", "sigma_bound",
                  "schedule"},
    "experiment": {"theta", "policy", "value", "amplitude", "period", "playback_file",
                   "c_u", "y_init", "t", "seed", "checkpoints"},
    "ensemble": {"base_seed", "num_runs", "t_max", "checkpoints"},
    "excitation": {"betas", "theta_grid_density", "tol", "search_box"},
    "output": {"trajectory", "records", "summary", "runs", "report"},
}


def load_config(path: str) -> dict[str, dict[str, str]]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str.lower
    read = parser.read(path)
    if not read:
        raise ConfigError(path, "file not found or unreadable")
    out: dict[str, dict[str, str]] = {}
    for section in parser.sections():
        key = section.lower()
        if key not in CONFIG_SCHEMA:
            raise ConfigError(section, f"unknown section; expected one of {sorted(CONFIG_SCHEMA)}")
        out[key] = {}
        for name, value in parser.items(section):
            if name not in CONFIG_SCHEMA[key]:
                raise ConfigError(f"{section}.{name}",
                                  f"unknown key; allowed: {sorted(CONFIG_SCHEMA[key])}")
            out[key][name] = value
    return out


def _get(cfg, section, key, default=None, required=False):
    value = cfg.get(section, {}).get(key, default)
    if required and value is None:
        raise ConfigError(f"{section}.{key}", "required key missing")
    return value


def _get_float(cfg, section, key, default=None, required=False):
    value = _get(cfg, section, key, default=default, required=required)
    if value is None:
        return None
    try:
        return float(value)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"not a number: {value!r}") from None


def _get_int(cfg, section, key, default=None, required=False):
    value = _get(cfg, section, key, default=default, required=required)
    if value is None:
        return None
    try:
        return int(value)
    except ValueError:
        raise ConfigError(f"{section}.{key}", f"not an integer: {value!r}") from None


def parse_interval(text: str) -> tuple[float, float]:
    m = re.fullmatch(r"\s*\[\s*([^,\]]+)\s*,\s*([^,\]]+)\s*\]\s*", text)
    if m is None:
        raise ValueError(f"expected an interval like [a,b], got {text!r}")
    return float(m.group(1)), float(m.group(2))


def parse_box(text: str) -> Box:
    """Parse "[a,b]" or "[a,b]x[c,d]x..." into a Box."""
    parts = re.split(r"\s*x\s*", text.strip())
    los, his = [], []
    for part in parts:
        lo, hi = parse_interval(part)
        los.append(lo)
        his.append(hi)
    return Box(np.array(los), np.array(his))


def _parse_floats(text: str) -> np.ndarray:
    return np.array([float(v) for v in text.split(",") if v.strip() != ""])


def build_system(cfg) -> SystemSpec:
    name = _get(cfg, "system", "model", required=True)
    kwargs = {}
    if name == "power_basis":
        kwargs["b1"] = _get_int(cfg, "system", "b1", required=True)
        kwargs["b2"] = _get_int(cfg, "system", "b2", required=True)
    elif name == "dead_zone":
        kwargs["width"] = _get_float(cfg, "system", "width", required=True)
    elif name == "expression":
        kwargs["source"] = _get(cfg, "system", "expression", required=True)
        kwargs["n"] = _get_int(cfg, "system", "n", required=True)
        kwargs["m"] = _get_int(cfg, "system", "m", required=True)
    try:
        model = model_from_name(name, **kwargs)
        box = parse_box(_get(cfg, "system", "theta_box", required=True))
        mode = _get(cfg, "system", "gradient_mode", default="analytic")
        return SystemSpec(model=model, theta_box=box, gradient_mode=mode)
    except (ValueError, ConfigurationError) as exc:
        raise ConfigError("system", str(exc)) from None


def build_noise(cfg) -> NoiseSpec:
    family = _get(cfg, "noise", "family", required=True)
    kappa = _get_float(cfg, "noise", "kappa", default="8")
    try:
        if family == "uniform":
            return NoiseSpec(family="uniform", c_w=_get_float(cfg, "noise", "c_w", required=True),
                             kappa=kappa)
        if family == "gaussian":
            return NoiseSpec(family="gaussian",
                             sigma_w=_get_float(cfg, "noise", "sigma_w", required=True),
                             kappa=kappa)
        if family == "student_t":
            return NoiseSpec(family="student_t", df=_get_float(cfg, "noise", "df", required=True),
                             scale=_get_float(cfg, "noise", "scale", required=True), kappa=kappa)
    except (ValueError, ConfigurationError) as exc:
        raise ConfigError("noise", str(exc)) from None
    raise ConfigError("noise.family", f"unknown family {family!r}")


def build_estimator_config(cfg, noise: NoiseSpec) -> EstimatorConfig:
    scen_name = _get(cfg, "estimator", "scenario", default="unbounded")
    try:
        if scen_name == "known":
            value = _get_float(cfg, "estimator", "sigma_known")
            scen = SigmaScenario.known(noise.variance if value is None else value)
        elif scen_name == "bounded":
            scen = SigmaScenario.bounded(_get_float(cfg, "estimator", "sigma_bound", required=True))
        elif scen_name == "unbounded":
            scen = SigmaScenario.unbounded()
        else:
            raise ConfigError("estimator.scenario", f"unknown scenario {scen_name!r}")
        return EstimatorConfig(
            lambda_=_get_float(cfg, "estimator", "lambda", required=True),
            gamma=_get_float(cfg, "estimator", "gamma", required=True),
            kappa=_get_float(cfg, "noise", "kappa", default="8"),
            C=_get_float(cfg, "estimator", "c", default="inf"),
            scenario=scen,
            schedule=_get(cfg, "estimator", "schedule", default="auto"),
        )
    except (ValueError, ConfigurationError) as exc:
        raise ConfigError("estimator", str(exc)) from None


def build_policy(cfg):
    name = _get(cfg, "experiment", "policy", default="zero")
    kwargs = {}
    c_u = _get_float(cfg, "experiment", "c_u")
    try:
        if name == "constant":
            kwargs["value"] = _get_float(cfg, "experiment", "value", required=True)
        elif name == "sine_sweep":
            kwargs["amplitude"] = _get_float(cfg, "experiment", "amplitude", required=True)
            kwargs["period"] = _get_float(cfg, "experiment", "period", required=True)
        elif name == "playback":
            path = _get(cfg, "experiment", "playback_file", required=True)
            kwargs["values"] = np.loadtxt(path, ndmin=1)
        if c_u is not None:
            kwargs["c_u"] = c_u
        return policy_from_name(name, **kwargs)
    except (ValueError, ConfigurationError) as exc:
        raise ConfigError("experiment.policy", str(exc)) from None


@contextmanager
def atomic_output(path: str):
    """Yield a temporary path in the target directory; rename over on success.

    The temporary name keeps the target's suffix so writers that key off the
    extension (e.g. gzip for .gz) behave identically.
    """
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-gsid-",
                               suffix=os.path.splitext(path)[1])
    os.close(fd)
    try:
        yield tmp
        os.replace(tmp, path)
    finally:
        if os.path.exists(tmp):
            os.unlink(tmp)


def _simulate_from_config(cfg, seed_override=None, t_override=None):
    spec = build_system(cfg)
    noise = build_noise(cfg)
    policy = build_policy(cfg)
    theta = _parse_floats(_get(cfg, "experiment", "theta", required=True))
    y_init_text = _get(cfg, "experiment", "y_init")
    y_init = None if y_init_text is None else _parse_floats(y_init_text)
    T = t_override if t_override is not None else _get_int(cfg, "experiment", "t", required=True)
    seed = seed_override if seed_override is not None else _get_int(cfg, "experiment", "seed", default="0")
    traj = simulate(spec, noise, theta, policy, y_init=y_init, T=T, seed=seed)
    return spec, noise, theta, traj


def cmd_simulate(args) -> int:
    cfg = load_config(args.config)
    spec, noise, theta, traj = _simulate_from_config(cfg, args.seed, args.T)
    out = args.out or _get(cfg, "output", "trajectory")
    if out:
        with atomic_output(out) as tmp:
            write_jsonl(traj, tmp)
    if not traj.stable:
        print(f"simulate: UNSTABLE after {traj.T} steps (blow-up guard)")
        return EXIT_RUNTIME
    print(f"simulate: T={traj.T} seed={traj.seed} stable={traj.stable} "
          f"y_last={_fmt(traj.y[-1])}" + (f" wrote {out}" if out else ""))
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = load_config(args.config)
    spec, noise, theta, traj = _simulate_from_config(cfg, args.seed, args.T)
    if not traj.stable:
        print(f"estimate: UNSTABLE simulation after {traj.T} steps")
        return EXIT_RUNTIME
    config = build_estimator_config(cfg, noise)
    cps_text = _get(cfg, "experiment", "checkpoints")
    checkpoints = [] if cps_text is None else [int(v) for v in _parse_floats(cps_text)]
    data = ResidualData(spec, traj, gamma=config.gamma, C=config.C)
    records = run_estimation(spec, data, config, true_theta=theta, checkpoints=checkpoints)
    out = args.out or _get(cfg, "output", "records")
    if out:
        with atomic_output(out) as tmp:
            records_to_csv(records, tmp, spec.n)
    report_at = set(checkpoints) if checkpoints else {records[-1].t}
    for rec in records:
        if rec.t in report_at:
            theta_txt = ",".join(_fmt(v) for v in rec.theta_hat)
            print(f"t={rec.t} theta_hat={theta_txt} sigma2_hat={_fmt(rec.sigma2_hat)} "
                  f"error={_fmt(rec.error_norm)} feasible={rec.feasible_count}")
    if out:
        print(f"estimate: wrote {out}")
    return EXIT_OK


def cmd_ensemble(args) -> int:
    cfg = load_config(args.config)
    spec = build_system(cfg)
    noise = build_noise(cfg)
    policy = build_policy(cfg)
    estimator = build_estimator_config(cfg, noise)
    theta = _parse_floats(_get(cfg, "experiment", "theta", required=True))
    y_init_text = _get(cfg, "experiment", "y_init")
    checkpoints = tuple(int(v) for v in _parse_floats(_get(cfg, "ensemble", "checkpoints", required=True)))
    ens = EnsembleConfig(
        spec=spec, noise=noise, estimator=estimator, true_theta=theta, policy=policy,
        y_init=None if y_init_text is None else _parse_floats(y_init_text),
        base_seed=args.seed if args.seed is not None else _get_int(cfg, "ensemble", "base_seed", default="0"),
        num_runs=_get_int(cfg, "ensemble", "num_runs", required=True),
        T_max=_get_int(cfg, "ensemble", "t_max", required=True),
        checkpoints=checkpoints,
    )
    try:
        result = run_ensemble(ens, jobs=args.jobs)
    except RuntimeError as exc:
        print(f"ensemble: {exc}")
        return EXIT_RUNTIME
    out_summary = args.out_summary or _get(cfg, "output", "summary")
    if out_summary:
        with atomic_output(out_summary) as tmp:
            write_summary_csv(result, tmp)
    out_runs = args.out_runs or _get(cfg, "output", "runs")
    if out_runs:
        with atomic_output(out_runs) as tmp:
            write_runs_jsonl(result, tmp)
    for k, t in enumerate(result.checkpoints):
        print(f"t={t} error_q50={_fmt(result.error_q50[k])} "
              f"sigma2_q50={_fmt(result.sigma2_q50[k])} "
              f"unstable={len(result.unstable_runs)}")
    return EXIT_OK


def cmd_excitation_scan(args) -> int:
    cfg = load_config(args.config)
    spec = build_system(cfg)
    betas_text = args.betas or _get(cfg, "excitation", "betas", required=True)
    betas = _parse_floats(betas_text)
    copies = 2 ** (spec.n - 1)
    width = copies * spec.m
    if width > 1:
        if betas.shape[0] % width:
            raise ConfigError("excitation.betas",
                              f"need multiples of {width} values per block")
        betas = betas.reshape(-1, width)
    density = args.density or _get_int(cfg, "excitation", "theta_grid_density", default="33")
    tol = _get_float(cfg, "excitation", "tol", default="1e-6")
    search_text = _get(cfg, "excitation", "search_box")
    if search_text is None:
        lo, hi = float(np.min(betas)), float(np.max(betas))
        search = Box(np.full(width, lo), np.full(width, hi))
    else:
        search = parse_box(search_text)
    report = scan_betas(spec, betas, search, theta_grid_density=density, tol=tol)
    out = args.out or _get(cfg, "output", "report")
    if out:
        with atomic_output(out) as tmp:
            write_report_json(report, tmp)
    for i in range(report.beta_samples.shape[0]):
        beta_txt = ",".join(_fmt(v) for v in report.beta_samples[i])
        print(f"beta={beta_txt} min_abs_g={_fmt(report.min_abs_g[i])} "
              f"verdict={report.verdicts[i].value}")
    print(f"members={int(report.member_mask().sum())} "
          f"density={_fmt(report.density_estimate)}")
    return EXIT_OK


def cmd_spectral_verify(args) -> int:
    records = verify_random_instances(args.instances, args.seed, jobs=args.jobs)
    if args.out:
        with atomic_output(args.out) as tmp:
            write_verification_jsonl(records, tmp)
    holds = sum(1 for r in records if r["holds"])
    print(f"spectral-verify: {holds}/{len(records)} bound checks hold")
    return EXIT_OK if holds == len(records) else EXIT_VERIFY


def cmd_density(args) -> int:
    factors = re.split(r"\s*x\s*", args.Z.strip())
    if args.Zprime is not None:
        if len(factors) != 1:
            raise ConfigError("density", "--Zprime takes a single-factor region; "
                                         "use --Zprime-product with a product region")
        lo, hi = parse_interval(factors[0])
        value = lower_density(DensityQuery(Box.interval(lo, hi), _parse_floats(args.Zprime)))
    else:
        if args.Zprime_product is None:
            raise ConfigError("density", "one of --Zprime / --Zprime-product is required")
        point_sets = [_parse_floats(part) for part in args.Zprime_product.split(";")]
        if len(point_sets) != len(factors):
            raise ConfigError("density", f"{len(factors)} region factors but "
                                         f"{len(point_sets)} point factors")
        boxes = []
        for factor in factors:
            lo, hi = parse_interval(factor)
            boxes.append(Box.interval(lo, hi))
        value = m_sym_lower_density(boxes, point_sets)
    print(_fmt(value) if math.isfinite(value) else "inf")
    return EXIT_OK


def cmd_counterexample(args) -> int:
    report = counterexample_demo(c_w=args.c_w, T=args.T, seed=args.seed)
    print(f"trajectories_identical={report.trajectories_identical}")
    print(f"records_identical={report.records_identical}")
    print(f"theta_hat_final={_fmt(report.theta_hat_final)}")
    print(f"dist_to_one={_fmt(report.dist_to_one)} dist_to_two={_fmt(report.dist_to_two)} "
          f"max_dist={_fmt(report.max_dist)}")
    print(f"reproduced={report.reproduced}")
    return EXIT_OK if report.reproduced else EXIT_VERIFY


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gsid",
        description="Grid-searching identification of nonlinearly parameterized "
                    "stochastic control systems.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate a closed-loop trajectory")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="trajectory JSONL path (overrides [output] trajectory)")
    p.add_argument("--seed", type=int, help="overrides [experiment] seed")
    p.add_argument("--T", type=int, help="overrides [experiment] t")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("estimate", help="simulate and run the grid-searching estimator")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="records CSV path (overrides [output] records)")
    p.add_argument("--seed", type=int)
    p.add_argument("--T", type=int)
    p.set_defaults(func=cmd_estimate)

    p = sub.add_parser("ensemble", help="seeded Monte Carlo ensemble with error quantiles")
    p.add_argument("--config", required=True)
    p.add_argument("--out-summary", help="summary CSV path (overrides [output] summary)")
    p.add_argument("--out-runs", help="per-run JSONL(.gz) path (overrides [output] runs)")
    p.add_argument("--seed", type=int, help="overrides [ensemble] base_seed")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_ensemble)

    p = sub.add_parser("excitation-scan", help="scan regressor blocks for excitation")
    p.add_argument("--config", required=True)
    p.add_argument("--betas", help="comma-separated candidate values (overrides config)")
    p.add_argument("--density", type=int, help="parameter lattice density per axis")
    p.add_argument("--out", help="report JSON path (overrides [output] report)")
    p.set_defaults(func=cmd_excitation_scan)

    p = sub.add_parser("spectral-verify",
                       help="randomized eigenvalue-bound verification suite")
    p.add_argument("--instances", type=int, default=200)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", help="JSONL report path")
    p.set_defaults(func=cmd_spectral_verify)

    p = sub.add_parser("density", help="lower density of a finite set in a box")
    p.add_argument("--Z", required=True, help='region, e.g. "[-1,1]" or "[-1,1]x[0,1]"')
    p.add_argument("--Zprime", help='comma-separated points, e.g. "-0.5,0.5"')
    p.add_argument("--Zprime-product", dest="Zprime_product",
                   help='per-factor point lists separated by ";"')
    p.set_defaults(func=cmd_density)

    p = sub.add_parser("counterexample",
                       help="dead-zone non-identifiability demonstration")
    p.add_argument("--c-w", dest="c_w", type=float, default=1.0)
    p.add_argument("--T", type=int, default=4096)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_counterexample)
    return parser


# flags whose values may start with '-' (point lists, boxes); joined with '='
# before parsing so argparse does not mistake the value for an option
_VALUE_FLAGS = {"--Z", "--Zprime", "--Zprime-product", "--betas"}


def _join_value_flags(argv):
    out = []
    i = 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_FLAGS and i + 1 < len(argv):
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
        else:
            out.append(tok)
            i += 1
    return out


def dispatch(argv) -> int:
    parser = build_parser()
    args = parser.parse_args(_join_value_flags(list(argv)))
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except HierarchySizeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


def main() -> None:
    sys.exit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
