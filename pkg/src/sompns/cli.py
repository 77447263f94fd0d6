"""Command-line entry point: ``sompns <subcommand> [options]``.

Exit status is 0 on success, 1 on domain errors (rank deficiency,
enumeration budget, a vacuous bound when ``--require-valid`` is given) and
2 on usage or input errors. Data goes to ``--out`` or standard output;
diagnostics go to standard error. Atom indices are 1-based on the command
line and in every CSV.
"""

from __future__ import annotations

import argparse
import math
import os
import sys

import numpy as np

from . import __version__
from ._common import BudgetExceededError, RankDeficiencyError, WeightVector, as_support
from .bounds import (
    ConjecturedBoundParams,
    NoiseSpec,
    b2_bound,
    combinatorial_c,
    conjectured_bound,
    epsilon_threshold,
    theorem5_bound,
)
from .dictionary import (
    Dictionary,
    coherence,
    dict_metrics,
    erc_constant,
    exact_ric,
    generate_gaussian_dictionary,
    generate_rademacher_dictionary,
    ric_coherence_bound,
)
from .experiments import (
    FORMAT_VERSION,
    calibrate_mu_x,
    estimate_snr_in,
    generate_sparse_signal,
    load_config,
    run_angle_sweep,
    run_k_sweep,
)
from .io import format_matrix, load_matrix
from .recovery import somp_ns, somp_ns_prescaled


class UsageError(Exception):
    """Bad arguments or unreadable inputs (exit status 2)."""


class DomainError(Exception):
    """A well-formed request the mathematics refuses (exit status 1)."""


# -- argument helpers --------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def _ints(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        v = 0
    if v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return v


def _load(fn, *args):
    try:
        return fn(*args)
    except (OSError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _support(one_based, n: int) -> np.ndarray:
    try:
        return as_support([i - 1 for i in one_based], n)
    except ValueError:
        raise UsageError(f"support indices must be unique and lie in [1, {n}]") from None


def _emit(args, text: str) -> None:
    if args.out:
        try:
            with open(args.out, "w", encoding="ascii", newline="\n") as fh:
                fh.write(text)
        except OSError as exc:
            raise UsageError(f"cannot write {args.out}: {exc}") from exc
    else:
        sys.stdout.write(text)


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _g(v) -> str:
    if v is None:
        return ""
    if isinstance(v, str):
        return v
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.10g}"


def _csv(header, rows) -> str:
    lines = [",".join(header)] + [",".join(_g(v) for v in r) for r in rows]
    return "\n".join(lines) + "\n"


def _noise(args, K: int | None = None) -> NoiseSpec:
    try:
        if args.sigma is not None:
            spec = NoiseSpec(args.sigma)
        elif args.theta_sigma is not None:
            spec = NoiseSpec.from_angle(args.theta_sigma)
        else:
            return None
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if K is not None and spec.K != K:
        raise UsageError(f"expected {K} noise deviations, got {spec.K}")
    return spec


def _weights(args, K: int) -> WeightVector:
    try:
        if args.weights is not None:
            w = WeightVector(args.weights)
        elif getattr(args, "theta_q", None) is not None:
            w = WeightVector.from_angle(args.theta_q)
        else:
            w = WeightVector(np.ones(K))
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if w.K != K:
        raise UsageError(f"expected {K} weights, got {w.K}")
    return w


# -- subcommands -------------------------------------------------------------

def cmd_gen_dict(args) -> None:
    gen = {"gaussian": generate_gaussian_dictionary,
           "rademacher": generate_rademacher_dictionary}[args.kind]
    d = gen(args.m, args.n, args.seed)
    _emit(args, format_matrix(d.entries, [f"kind={args.kind} seed={args.seed}"]))


def cmd_dict_metrics(args) -> None:
    d = _load(Dictionary.load, args.dict)
    if d.n < 2:
        raise UsageError("dictionary metrics need at least two atoms")
    support = _support(args.support, d.n) if args.support else None
    p_max = args.p_max or 1
    if p_max > d.n - 1:
        raise UsageError(f"--p-max must not exceed {d.n - 1}")
    rep = dict_metrics(d, p_max, support=support, s=args.s, use_babel=args.use_babel)
    rows = [("coherence", rep.coherence), ("spark_lower_bound", rep.spark_lower_bound)]
    rows += [(f"babel_{p}", v) for p, v in rep.babel.items()]
    if rep.erc_norm is not None:
        rows.append(("erc_norm", rep.erc_norm))
    if rep.ric_coherence_bound is not None:
        rows.append(("ric_coherence_bound", rep.ric_coherence_bound))
        rows.append(("ric_bound_vacuous", not rep.ric_coherence_bound < 1.0))
    if args.exact_ric:
        rows.append((f"exact_ric_{args.exact_ric}", exact_ric(d, args.exact_ric)))
    _emit(args, f"# dict_sha={d.checksum[:16]}\n" + _csv(["metric", "value"], rows))


def cmd_recover(args) -> None:
    d = _load(Dictionary.load, args.dict)
    y = _load(load_matrix, args.y)
    if y.shape[0] != d.m:
        raise UsageError(f"measurements have {y.shape[0]} rows, dictionary has {d.m}")
    if args.iters > min(d.m, d.n):
        raise UsageError(f"--iters must not exceed {min(d.m, d.n)}")
    w = _weights(args, y.shape[1])
    run = somp_ns if args.form == 1 else somp_ns_prescaled
    try:
        trace = run(d, y, w, args.iters, precision=args.precision)
    except RankDeficiencyError as exc:
        if exc.partial is not None and len(exc.partial):
            _log("partial selection (1-based): "
                 + ",".join(str(int(j) + 1) for j in exc.partial.selected))
        raise DomainError(str(exc)) from exc
    rows = [
        (t + 1, int(j) + 1, v, r)
        for t, (j, v, r) in enumerate(zip(trace.selected, trace.metric_values,
                                          trace.residual_norms))
    ]
    _emit(args, _csv(["t", "selected_index", "metric_value", "residual_fro"], rows))
    if args.coef_out:
        with open(args.coef_out, "w", encoding="ascii", newline="\n") as fh:
            fh.write(format_matrix(trace.coefficients,
                                   ["rows follow selected_index order"]))


def _signal(args, d: Dictionary, support: np.ndarray):
    if args.x is not None:
        x = _load(load_matrix, args.x)
        if x.shape[0] != d.n:
            raise UsageError(f"signal has {x.shape[0]} rows, dictionary has {d.n} atoms")
        mags = np.abs(x[support])
        mu_x = args.mu_x
        if mu_x is None and mags.size and np.allclose(mags, mags.flat[0]):
            mu_x = float(mags.flat[0])
        return x, mu_x
    if args.mu_x is None or args.sign_pattern is None or args.K is None:
        raise UsageError("give --x, or --mu-x with --sign-pattern and --K")
    try:
        x = generate_sparse_signal(d.n, support, args.mu_x, args.sign_pattern, args.K, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return x, args.mu_x


def _ric_surrogate(args, d: Dictionary, size: int) -> tuple[float, str]:
    if args.ric is not None:
        return args.ric, "given"
    if args.ric_source in ("auto", "exact"):
        try:
            return exact_ric(d, size), "exact"
        except BudgetExceededError:
            if args.ric_source == "exact":
                raise
            _log("exact RIC enumeration too large; using the Babel bound")
    return ric_coherence_bound(d, size, use_babel=True).value, "babel"


def cmd_bound(args) -> None:
    d = _load(Dictionary.load, args.dict)
    support = _support(args.support, d.n)
    if support.size == 0:
        raise UsageError("--support must be nonempty")
    x, mu_x = _signal(args, d, support)
    K = x.shape[1]
    w = _weights(args, K)
    noise = _noise(args, K)
    if noise is None:
        raise UsageError("give --sigma or --theta-sigma")
    size = support.size
    s = size - 1 if args.s is None else args.s
    if not 0 <= s <= size - 1:
        raise UsageError(f"--s must lie in [0, {size - 1}]")

    if args.mode == "ric":
        erc = erc_constant(d, support)
        ric, source = _ric_surrogate(args, d, size)
        eps = epsilon_threshold(x, support, w, "ric", erc_norm=erc, ric=ric)
        eps_prime = 0.5 * (1.0 - erc) * (1.0 - ric)
    else:
        mu = coherence(d)
        source = "coherence"
        eps = epsilon_threshold(x, support, w, "coherence", mu=mu)
        eps_prime = 0.5 * (1.0 - mu * (2 * size - 1))

    rep = theorem5_bound(eps.value, w, noise, d.n, size, s)
    valid = rep.valid and not eps.vacuous
    prob, epsilon, eps_bar = rep.prob_lower_bound, eps.value, rep.epsilon_bar
    if args.bound == "b1":
        if args.n_bar is None and args.alpha is None:
            if s < 1:
                raise UsageError("--s must be at least 1 for the conjectured bound")
            params = ConjecturedBoundParams.degenerate(d.n, size, s)
            params = ConjecturedBoundParams(params.n_bar, params.alpha, args.drop_bias)
        elif args.n_bar is None or args.alpha is None:
            raise UsageError("give both --n-bar and --alpha, or neither")
        else:
            params = ConjecturedBoundParams(args.n_bar, args.alpha, args.drop_bias)
        b1 = conjectured_bound(params, eps.value, w, noise, max(s, 1))
        prob = b1.value
        valid = not b1.vacuous and not eps.vacuous
        eps_bar = eps.value if args.drop_bias else rep.epsilon_bar
    elif args.bound == "b2":
        if mu_x is None:
            raise UsageError("the b2 bound needs --mu-x or a signal with equal magnitudes")
        epsilon, eps_bar = eps_prime, None
        valid = eps_prime > 0.0
        prob = b2_bound(mu_x, w, noise, d.n, size, eps_prime) if valid else None
    elif not valid:
        prob = None

    c_s = rep.c_s if args.bound != "b2" else combinatorial_c(size, size - 1)
    clamped = None if prob is None else min(1.0, max(0.0, prob))
    header = ["mode", "bound", "conditioning_source", "kappa", "b", "epsilon",
              "epsilon_bar", "c_s", "prob_lower_bound", "prob_clamped", "valid"]
    row = [args.mode, args.bound, source, rep.kappa, rep.b, epsilon, eps_bar, c_s,
           prob, clamped, valid]
    _emit(args, _csv(header, [row]))
    if args.require_valid and not valid:
        raise DomainError("bound is vacuous for this instance")


def _config(args):
    cfg = _load(load_config, args.config)
    base_dir = os.path.dirname(os.path.abspath(args.config))
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.precision is not None:
        changes["precision"] = args.precision
    if args.trials is not None:
        changes["trials"] = args.trials
    if changes:
        cfg = _load(lambda: cfg.replace(**changes))
    d = _load(cfg.load_dictionary, base_dir)
    return cfg, d


def cmd_experiment(args) -> None:
    cfg, d = _config(args)
    workers = args.threads or os.cpu_count() or 1
    if args.kind == "angles":
        try:
            summary = run_angle_sweep(cfg, dictionary=d, workers=workers,
                                      noise_scale=args.noise_scale)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        _emit(args, summary.to_csv())
    elif args.kind == "ksweep":
        if not args.k_list:
            raise UsageError("ksweep needs --k-list")
        try:
            summary = run_k_sweep(cfg, args.k_list, dictionary=d, workers=workers,
                                  noise_level=args.noise_level)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        _emit(args, summary.to_csv())
    else:
        mu = calibrate_mu_x(cfg, args.target, dictionary=d, workers=workers)
        _log(f"calibrated mu_x for success {args.target} at (45, 45)")
        _emit(args, f"# dict_sha={d.checksum[:16]} config_sha={cfg.checksum[:16]}\n"
                    f"mu_x\n{mu:.10g}\n")


def cmd_snr_estimate(args) -> None:
    cfg, d = _config(args)
    noise = _noise(args, cfg.K)
    try:
        snr = estimate_snr_in(cfg, args.cases, noise=noise, dictionary=d)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    _emit(args, f"# dict_sha={d.checksum[:16]} config_sha={cfg.checksum[:16]}\n"
                f"snr_in_db\n{snr:.10g}\n")


# -- parser ------------------------------------------------------------------

def _common(seed_default=0, precision_default=None) -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("common options")
    g.add_argument("--seed", type=int, default=seed_default, help="master seed")
    g.add_argument("--out", help="output file (default: standard output)")
    g.add_argument("--precision", type=int, choices=(32, 64), default=precision_default,
                   help="floating point width of recovery runs")
    g.add_argument("--threads", type=_positive_int, default=None,
                   help="worker processes (default: available CPUs)")
    return p


def _noise_args(p):
    p.add_argument("--sigma", type=_floats, help="noise deviations s1,s2,...")
    p.add_argument("--theta-sigma", type=float, help="K=2 noise angle in degrees")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sompns", description="Weighted SOMP recovery, bounds and experiments.")
    parser.add_argument("--version", action="version",
                        version=f"sompns {__version__} (format {FORMAT_VERSION})")
    sub = parser.add_subparsers(dest="command", required=True, metavar="SUBCOMMAND")

    p = sub.add_parser("gen-dict", parents=[_common()], help="generate a random dictionary")
    p.add_argument("--kind", choices=("gaussian", "rademacher"), default="gaussian")
    p.add_argument("--m", type=_positive_int, required=True)
    p.add_argument("--n", type=_positive_int, required=True)
    p.set_defaults(func=cmd_gen_dict)

    p = sub.add_parser("dict-metrics", parents=[_common()], help="coherence, Babel, ERC, RIC")
    p.add_argument("--dict", required=True)
    p.add_argument("--p-max", type=_positive_int, help="largest Babel order to report")
    p.add_argument("--support", type=_ints, help="1-based atom indices i1,i2,...")
    p.add_argument("--s", type=_positive_int, help="order of the RIC coherence bound")
    p.add_argument("--use-babel", action="store_true")
    p.add_argument("--exact-ric", type=_positive_int, metavar="S",
                   help="also enumerate the exact RIC of order S (tiny dictionaries)")
    p.set_defaults(func=cmd_dict_metrics)

    p = sub.add_parser("recover", parents=[_common(precision_default=64)],
                       help="run SOMP-NS and print its trace")
    p.add_argument("--dict", required=True)
    p.add_argument("--y", required=True, help="measurement matrix file (m x K)")
    p.add_argument("--weights", type=_floats, help="q1,q2,... (default all ones)")
    p.add_argument("--theta-q", type=float, help="K=2 weight angle in degrees")
    p.add_argument("--iters", type=_positive_int, required=True)
    p.add_argument("--form", type=int, choices=(1, 2), default=1,
                   help="1: weights in the metric, 2: prescaled measurements")
    p.add_argument("--coef-out", help="also write the coefficient estimates here")
    p.set_defaults(func=cmd_recover)

    p = sub.add_parser("bound", parents=[_common()], help="evaluate a recovery bound")
    p.add_argument("--dict", required=True)
    p.add_argument("--support", type=_ints, required=True, help="1-based atom indices")
    p.add_argument("--x", help="signal matrix file (n x K)")
    p.add_argument("--mu-x", type=float)
    p.add_argument("--sign-pattern", type=int, choices=(1, 2))
    p.add_argument("--K", type=_positive_int)
    p.add_argument("--weights", type=_floats)
    p.add_argument("--theta-q", type=float)
    _noise_args(p)
    p.add_argument("--mode", choices=("ric", "coherence"), default="ric")
    p.add_argument("--bound", choices=("theorem5", "b1", "b2"), default="theorem5")
    p.add_argument("--s", type=int, help="last guaranteed iteration (default |S|-1)")
    p.add_argument("--ric", type=float, help="use this value for the RIC of order |S|")
    p.add_argument("--ric-source", choices=("auto", "exact", "babel"), default="auto")
    p.add_argument("--n-bar", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--drop-bias", action="store_true")
    p.add_argument("--require-valid", action="store_true",
                   help="exit with status 1 when the bound is vacuous")
    p.set_defaults(func=cmd_bound)

    p = sub.add_parser("experiment", parents=[_common(seed_default=None)],
                       help="Monte Carlo campaigns")
    p.add_argument("kind", choices=("angles", "ksweep", "calibrate"))
    p.add_argument("--config", required=True, help="TOML or JSON experiment config")
    p.add_argument("--trials", type=_positive_int, help="override the config trial count")
    p.add_argument("--k-list", type=_ints, help="K values for ksweep")
    p.add_argument("--noise-scale", type=float, default=1.0,
                   help="multiply noise deviations (0 gives the noiseless variant)")
    p.add_argument("--noise-level", type=float, default=math.sqrt(2) / 2,
                   help="per-vector noise deviation for ksweep")
    p.add_argument("--target", type=float, default=0.2,
                   help="success rate targeted by calibrate")
    p.set_defaults(func=cmd_experiment)

    p = sub.add_parser("snr-estimate", parents=[_common(seed_default=None)],
                       help="average input SNR in dB")
    p.add_argument("--config", required=True)
    p.add_argument("--cases", type=_positive_int, default=10_000)
    p.add_argument("--trials", type=_positive_int, help=argparse.SUPPRESS)
    _noise_args(p)
    p.set_defaults(func=cmd_snr_estimate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args.func(args)
    except UsageError as exc:
        _log(f"sompns {args.command}: error: {exc}")
        return 2
    except (DomainError, RankDeficiencyError, BudgetExceededError) as exc:
        _log(f"sompns {args.command}: {exc}")
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
