"""Command-line surface.

Subcommands: estimate, sweep, tail, subsample, simulate, limitlaw, plus a
fixture generator for CI.  Every run requires an explicit --seed and
writes a manifest.json listing each output file with its content hash.

Exit codes: 0 ok, 2 schema, 3 estimation, 4 numerical, 5 config.
"""

from __future__ import annotations

import argparse
import json
import re
import sys
import warnings
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ConfigError, TailQteError
from .estimators import (
    default_C_grid,
    estimate_arm_quantile,
    estimate_qte,
    truncation_sweep,
)
from .io import Manifest, ingest_csv, make_nsw_fixture, write_csv
from .limitlaw import (
    FixedLimitSpec,
    IntermediateLimitSpec,
    eval_cf_intermediate,
    sample_fixed_limit,
    sample_intermediate_limit,
)
from .propensity import ObservationSet, fit_logistic
from .simlab import DgpSpec, run_mse_experiment
from .subsampling import subsample_size, subsample_statistic
from .tails import (
    TailCdf,
    check_key_limits,
    compute_h_fixed,
    select_order_mindist,
    truncation_from_theta,
)

__all__ = ["main", "build_parser"]


def _parse_floats(text: str) -> list[float]:
    return [float(tok) for tok in text.split(",") if tok.strip()]


def _check_taus(taus):
    if not taus or any(not 0.0 < t < 1.0 for t in taus):
        raise ConfigError(f"taus must lie strictly in (0, 1), got {taus}")
    return taus


def _resolve_scores(obs, source: str, manifest: Manifest):
    """Exactly one score source: a supplied column or a logistic fit."""
    if source == "column":
        if obs.scores is None:
            raise ConfigError("score source 'column' requires an 'e' column")
        return obs.scores
    if source == "logistic":
        if obs.covariates is None:
            raise ConfigError("score source 'logistic' requires covariate columns")
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            model = fit_logistic(obs.covariates, obs.d)
            for w in caught:
                manifest.warn(str(w.message))
        return model.predict(obs.covariates)
    raise ConfigError(f"unknown score source {source!r}")


def _arm_scaling(obs, scores, arm: str, theta: float) -> tuple[float, float]:
    """(b_n, h_n) for one arm: h_n from the empirical score CDF."""
    tail_scores = scores if arm == "treated" else 1.0 - scores
    h_n = compute_h_fixed(TailCdf.empirical(tail_scores), obs.n)
    return truncation_from_theta(h_n, theta, "fixed"), h_n


def _cmd_estimate(args, manifest: Manifest, out: Path) -> None:
    obs = ingest_csv(args.input, schema=args.schema)
    manifest.stage("ingest")
    scores = _resolve_scores(obs, args.score_source, manifest)
    taus = _check_taus(_parse_floats(args.taus))
    bn1, h1 = _arm_scaling(obs, scores, "treated", args.theta)
    bn0, h0 = _arm_scaling(obs, scores, "control", args.theta)
    if args.bn_treated is not None:
        bn1 = args.bn_treated
    if args.bn_control is not None:
        bn0 = args.bn_control
    rows = []
    for tau in taus:
        result = estimate_qte(obs, scores, tau, bn1, bn0)
        for est, h_n in ((result.treated, h1), (result.control, h0)):
            if est.boundary_flag:
                manifest.warn(f"tau={tau} arm={est.arm}: estimate at support boundary")
            rows.append((tau, est.arm, est.q_hat, est.b_n, h_n, est.boundary_flag))
        rows.append((tau, "qte", result.delta_hat, np.nan, np.nan, False))
    manifest.stage("estimate")
    df = pd.DataFrame(rows, columns=["tau", "arm", "q_hat", "b_n", "h_n", "boundary_flag"])
    manifest.add_output(write_csv(df, out / "estimates.csv"))


def _tail_fit(scores, side: str, k_at: int | None):
    inv = 1.0 / scores if side == "treated" else 1.0 / (1.0 - scores)
    return select_order_mindist(inv, k_max=k_at)


def _cmd_tail(args, manifest: Manifest, out: Path) -> None:
    obs = ingest_csv(args.input, schema=args.schema)
    scores = _resolve_scores(obs, args.score_source, manifest)
    manifest.stage("ingest")
    sides = ("treated", "control") if args.side == "both" else (args.side,)
    gammas = {}
    for side in sides:
        fit = _tail_fit(scores, side, args.k_max)
        gammas[side] = {"gamma_hat": fit.gamma_hat, "k_selected": fit.k_selected}
        df = pd.DataFrame(
            {
                "k": fit.hill_curve[:, 0].astype(int),
                "xi_hat": fit.hill_curve[:, 1],
                "ks_dist": fit.ks_distances[:, 1],
            }
        )
        name = "hill.csv" if len(sides) == 1 else f"hill_{side}.csv"
        manifest.add_output(write_csv(df, out / name))
        if args.key_limits:
            # pure-power surrogate with the fitted index; reports the two
            # scaling limits and the Karamata ratios
            gamma = fit.gamma_hat
            report = check_key_limits(
                TailCdf.power(gamma - 1.0),
                gamma,
                args.theta,
                n_grid=[10**3, 10**4, 10**5, 10**6],
            )
            kl = pd.DataFrame(
                {k: report[k] for k in ("n", "h_n", "b_n", "n_over_h_F_b", "n_b_F_b")}
            )
            kl["target_n_over_h_F_b"] = report["target_n_over_h_F_b"]
            kl["target_n_b_F_b"] = report["target_n_b_F_b"]
            suffix = "" if len(sides) == 1 else f"_{side}"
            manifest.add_output(write_csv(kl, out / f"key_limits{suffix}.csv"))
            kr = pd.DataFrame(
                {
                    "u": report["u"],
                    "karamata_ratio_small": report["karamata_ratio_small"],
                    "karamata_ratio_large": report["karamata_ratio_large"],
                }
            )
            manifest.add_output(write_csv(kr, out / f"karamata{suffix}.csv"))
    manifest.config["tail_estimates"] = gammas
    manifest.stage("tail")


def _cmd_sweep(args, manifest: Manifest, out: Path) -> None:
    obs = ingest_csv(args.input, schema=args.schema)
    scores = _resolve_scores(obs, args.score_source, manifest)
    manifest.stage("ingest")
    taus = _check_taus(_parse_floats(args.taus))
    if args.gamma is not None:
        gamma = args.gamma
    else:
        gamma = _tail_fit(scores, args.arm, args.k_max).gamma_hat
    manifest.config["gamma_used"] = gamma
    C_grid = (
        np.asarray(_parse_floats(args.c_grid))
        if args.c_grid
        else default_C_grid(scores, obs.n, gamma, args.arm)
    )
    rows = []
    for tau in taus:
        for C, b_n, est in truncation_sweep(
            obs, scores, args.arm, tau, gamma, C_grid, bn_exponent=args.bn_exponent
        ):
            rows.append((C, b_n, tau, est.q_hat))
    manifest.stage("sweep")
    df = pd.DataFrame(rows, columns=["C", "b_n", "tau", "q_hat"])
    manifest.add_output(write_csv(df, out / "sweep.csv"))


def _cmd_subsample(args, manifest: Manifest, out: Path) -> None:
    obs = ingest_csv(args.input, schema=args.schema)
    scores_full = _resolve_scores(obs, args.score_source, manifest)
    if obs.scores is None:
        # carry fitted scores with the rows so subsamples reuse them
        obs = ObservationSet(y=obs.y, d=obs.d, scores=scores_full)
    manifest.stage("ingest")
    tau = args.tau
    _check_taus([tau])
    bn1, bn0 = args.bn_treated or 0.0, args.bn_control or 0.0

    def statistic(sub):
        if args.statistic == "q1":
            return estimate_arm_quantile(sub, sub.scores, "treated", tau, bn1).q_hat
        if args.statistic == "q0":
            return estimate_arm_quantile(sub, sub.scores, "control", tau, bn0).q_hat
        return estimate_qte(sub, sub.scores, tau, bn1, bn0).delta_hat

    n_B = args.n_b if args.n_b is not None else subsample_size(obs.n)
    dist = subsample_statistic(
        obs,
        statistic,
        B=args.B,
        n_B=n_B,
        seed=args.seed,
        replacement=args.with_replacement,
        name=args.statistic,
    )
    if dist.failures:
        manifest.warn(f"{dist.failures} of {dist.B} replicates failed")
    manifest.config["n_B"] = dist.n_B
    manifest.stage("subsample")
    df = pd.DataFrame(
        {
            "replicate": np.arange(dist.B),
            "statistic": dist.statistic,
            "value": dist.replicates,
        }
    )
    manifest.add_output(write_csv(df, out / "subsample.csv"))


_PRESET_RE = re.compile(r"fig(?P<fig>[12])-alpha(?P<alpha>02|05|1)-n(?P<n>\d+)")


def _spec_from_preset(preset: str, seed: int) -> tuple[DgpSpec, int]:
    m = _PRESET_RE.fullmatch(preset)
    if not m:
        raise ConfigError(f"unknown preset {preset!r} (expected e.g. fig1-alpha02-n2000)")
    kind = "model-a" if m.group("fig") == "1" else "model-b"
    alpha = {"02": 0.2, "05": 0.5, "1": 1.0}[m.group("alpha")]
    return DgpSpec(kind=kind, score_alpha=alpha, score_beta=2.0, seed=seed), int(m.group("n"))


def _cmd_simulate(args, manifest: Manifest, out: Path) -> None:
    if args.preset:
        spec, n = _spec_from_preset(args.preset, args.seed)
    else:
        kind = {"a": "model-a", "b": "model-b"}[args.model]
        spec = DgpSpec(kind=kind, score_alpha=args.alpha, score_beta=2.0, seed=args.seed)
        n = args.n
    taus = _check_taus(_parse_floats(args.taus))
    if args.c_grid:
        C_grid = np.asarray(_parse_floats(args.c_grid))
    else:
        # C_max gives b_n = 1, which clamps every score regardless of draw
        c_max = float(n) ** (1.0 / spec.gamma1)
        C_grid = np.concatenate([[0.0], np.geomspace(c_max / 1e3, c_max, args.c_grid_size)])
    result = run_mse_experiment(
        spec,
        taus,
        [n],
        C_grid,
        replications=args.reps,
        seed=args.seed,
        score_mode=args.score_mode,
        bn_exponent=args.bn_exponent,
    )
    manifest.stage("simulate")
    manifest.add_output(write_csv(result.replicates, out / "replicates.csv"))
    manifest.add_output(write_csv(result.summary, out / "summary.csv"))
    manifest.add_output(write_csv(result.best_truncation, out / "best_truncation.csv"))


def _cmd_limitlaw(args, manifest: Manifest, out: Path) -> None:
    if args.law == "fixed":
        taus = _check_taus(_parse_floats(args.taus))
        p0 = _parse_floats(args.p0) if args.p0 else list(taus)
        spec = FixedLimitSpec(gamma=args.gamma, theta=args.theta, taus=tuple(taus), p0=tuple(p0))
        draws = sample_fixed_limit(spec, args.count, seed=args.seed)
        df = pd.DataFrame(draws, columns=[f"z_tau_{t}" for t in taus])
        spec_dict = {
            "law": "fixed",
            "gamma": spec.gamma,
            "theta": spec.theta,
            "taus": list(spec.taus),
            "p0": list(spec.p0),
            "drift": list(spec.drift),
        }
    else:
        spec = IntermediateLimitSpec(gamma=args.gamma, theta=args.theta, beta=args.beta)
        draws = sample_intermediate_limit(spec, args.count, seed=args.seed)
        df = pd.DataFrame({"z": draws})
        a_grid = np.linspace(-5.0, 5.0, 41)
        cf = np.array([eval_cf_intermediate(spec, a) for a in a_grid])
        cf_df = pd.DataFrame({"a": a_grid, "cf_real": cf.real, "cf_imag": cf.imag})
        manifest.add_output(write_csv(cf_df, out / "cf.csv"))
        spec_dict = {
            "law": "intermediate",
            "gamma": spec.gamma,
            "theta": spec.theta,
            "beta": spec.beta,
            "atom_mass": spec.atom_mass,
            "drift": spec.drift,
        }
    manifest.stage("limitlaw")
    manifest.add_output(write_csv(df, out / "draws.csv"))
    spec_path = out / "spec.json"
    spec_path.write_text(json.dumps(spec_dict, indent=2, sort_keys=True))
    manifest.add_output(spec_path)


def _cmd_fixture(args, manifest: Manifest, out: Path) -> None:
    df = make_nsw_fixture(n=args.n, n_treated=args.n_treated, seed=args.seed)
    manifest.stage("generate")
    manifest.add_output(write_csv(df, out / "nsw_fixture.csv"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tailqte", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_input=True):
        if needs_input:
            p.add_argument("--input", required=True, help="input CSV path")
            p.add_argument("--schema", default="auto", choices=("auto", "generic", "nsw"))
            p.add_argument(
                "--score-source",
                default="column",
                choices=("column", "logistic"),
                help="exactly one source of propensity scores",
            )
        p.add_argument("--seed", type=int, required=True, help="RNG seed (mandatory)")
        p.add_argument("--out-dir", default="tailqte_out", help="output directory")

    p = sub.add_parser("estimate", help="QTE and per-arm quantiles at given taus")
    common(p)
    p.add_argument("--taus", default="0.5", help="comma-separated quantile levels")
    p.add_argument("--theta", type=float, default=0.0, help="truncation intensity; b_n = theta/h_n")
    p.add_argument("--bn-treated", type=float, default=None, help="explicit treated-arm b_n")
    p.add_argument("--bn-control", type=float, default=None, help="explicit control-arm b_n")
    p.set_defaults(func=_cmd_estimate)

    p = sub.add_parser("tail", help="Hill curve and minimum-distance order selection")
    common(p)
    p.add_argument("--side", default="both", choices=("treated", "control", "both"))
    p.add_argument("--k-max", type=int, default=None, help="largest order-statistic count")
    p.add_argument(
        "--key-limits",
        action="store_true",
        help="also emit scaling-limit and Karamata reports for the fitted index",
    )
    p.add_argument("--theta", type=float, default=1.0, help="theta for --key-limits")
    p.set_defaults(func=_cmd_tail)

    p = sub.add_parser("sweep", help="truncation sweep over C in b_n = C n^(-1/gamma)")
    common(p)
    p.add_argument("--taus", default="0.5")
    p.add_argument("--arm", default="treated", choices=("treated", "control"))
    p.add_argument("--gamma", type=float, default=None, help="fixed tail index; default: hill-mindist")
    p.add_argument("--k-max", type=int, default=None, help="k_max for hill-mindist gamma")
    p.add_argument("--c-grid", default=None, help="comma-separated C values")
    p.add_argument("--bn-exponent", default="inv_gamma", choices=("inv_gamma", "gamma_literal"))
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("subsample", help="subsampling distribution of an estimator")
    common(p)
    p.add_argument("--statistic", default="qte", choices=("qte", "q1", "q0"))
    p.add_argument("--tau", type=float, default=0.5)
    p.add_argument("--B", type=int, default=2000, help="number of subsamples")
    p.add_argument("--n-b", type=int, default=None, help="override n_B (default floor(n/log n))")
    p.add_argument("--bn-treated", type=float, default=None)
    p.add_argument("--bn-control", type=float, default=None)
    p.add_argument("--with-replacement", action="store_true", help="m-out-of-n bootstrap variant")
    p.set_defaults(func=_cmd_subsample)

    p = sub.add_parser("simulate", help="Monte-Carlo truncation/MSE experiment")
    common(p, needs_input=False)
    p.add_argument("--preset", default=None, help="e.g. fig1-alpha02-n2000")
    p.add_argument("--model", default="a", choices=("a", "b"))
    p.add_argument("--alpha", type=float, default=1.0, help="Beta(alpha, 2) score parameter")
    p.add_argument("--n", type=int, default=2000)
    p.add_argument("--reps", type=int, default=100)
    p.add_argument("--taus", default="0.9")
    p.add_argument("--c-grid", default=None)
    p.add_argument("--c-grid-size", type=int, default=20)
    p.add_argument("--score-mode", default="true", choices=("true", "estimated"))
    p.add_argument("--bn-exponent", default="inv_gamma", choices=("inv_gamma", "gamma_literal"))
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("limitlaw", help="limit-law draws and characteristic functions")
    common(p, needs_input=False)
    p.add_argument("--law", default="intermediate", choices=("fixed", "intermediate"))
    p.add_argument("--gamma", type=float, default=1.5)
    p.add_argument("--theta", type=float, default=1.0)
    p.add_argument("--beta", type=float, default=1.0, help="conditional-tail constant (intermediate)")
    p.add_argument("--taus", default="0.5", help="levels of the fixed law")
    p.add_argument("--p0", default=None, help="G0 partition probabilities (default: taus)")
    p.add_argument("--count", type=int, default=10000)
    p.set_defaults(func=_cmd_limitlaw)

    p = sub.add_parser("fixture", help="synthetic NSW-shaped CSV for CI")
    common(p, needs_input=False)
    p.add_argument("--n", type=int, default=1342)
    p.add_argument("--n-treated", type=int, default=185)
    p.set_defaults(func=_cmd_fixture)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    config = {k: v for k, v in vars(args).items() if k != "func" and not callable(v)}
    manifest = Manifest(config)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    try:
        args.func(args, manifest, out)
    except TailQteError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    manifest.write(out / "manifest.json")
    return 0


if __name__ == "__main__":
    sys.exit(main())
