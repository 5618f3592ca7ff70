import sys
import os
import json
import logging
import argparse
from collections import OrderedDict
from dataclasses import replace
import warnings

import numpy as np
import pandas as pd
import pkg_resources

from ._artifacts import ArtifactPlan
from .special import RngStream, Simplex
from .model import (ModelParams, GptcmPoint, point_for_subject, evaluate_curves,
                    birnbaum_importance)
from .dataset import read_csv, format_csv, censoring_rate
from .simulate import SimConfig, simulate_dataset
from .estimate import FitOptions, FitError, ConvergenceWarning, fit, multi_start_fit
from .study import StudyConfig, StudyError, run_study, report_table
from .reliability import (SystemSpec, UnsupportedSchemeError, system_survival,
                          monte_carlo_survival, importance_ranking)


__all__ = ["main"]


logger = logging.getLogger(__name__)


EXIT_OK          = 0
EXIT_INPUT       = 2
EXIT_IO          = 3
EXIT_NONCONVERGE = 4
EXIT_STUDY       = 5


class InputError(Exception):
    pass


def parse_grid(spec):
    """Parse ``"start:stop:num"`` into an evenly spaced time grid."""
    try:
        start, stop, num = spec.split(":")
        start, stop, num = float(start), float(stop), int(num)
    except ValueError:
        raise InputError("Grid must have the form start:stop:num, not {!r}"
                         .format(spec)) from None
    if not 0 <= start < stop or num < 2:
        raise InputError("Grid {!r} must satisfy 0 <= start < stop and num >= 2"
                         .format(spec))
    return np.linspace(start, stop, num)


def _load_json(path, bundled):
    if path is None:
        source = pkg_resources.resource_string(__package__, "configs/{}".format(bundled))
        return json.loads(source)
    with open(path, encoding="utf-8") as f:
        try:
            return json.load(f)
        except json.JSONDecodeError as error:
            raise InputError("{} is not valid JSON: {}".format(path, error)) from None


def _check_output(path):
    if os.path.isdir(path):
        raise IsADirectoryError("Output {!r} is a directory".format(path))


def _write(plan, out, *, directory=False):
    root = out if directory else os.path.dirname(out) or "."
    for path in plan.write(root):
        logger.info("%s: wrote %s", plan.name, path)


def _csv_text(columns):
    return pd.DataFrame(columns).to_csv(index=False, float_format="%.17g", lineterminator="\n")


def _load_params(path):
    obj = _load_json(path, None)
    if "params" in obj:
        obj = obj["params"]
    return ModelParams.from_json(obj)


def main_parser(parser=None):
    if parser is None:
        parser = argparse.ArgumentParser(prog="gptcm", description=r"""
        Simulate, fit and evaluate promotion time cure models with several cell clusters, and
        systems with a Poisson number of units.
        """)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose",
        action="count", default=0,
        help="log progress to standard error (repeat for debug output)")
    common.add_argument("--threads",
        metavar="COUNT", type=int, default=None,
        help="use COUNT worker processes (default: $GPTCM_THREADS or all cores)")
    common.add_argument("--seed",
        metavar="SEED", type=int, default=None,
        help="override the seed of the configuration")

    p_action = parser.add_subparsers(dest="action", metavar="COMMAND")
    p_action.required = True

    p_simulate = p_action.add_parser("simulate", parents=[common],
        help="simulate a dataset")
    p_simulate.add_argument("--config",
        metavar="CONFIG",
        help="read simulation design from CONFIG (default: bundled table design)")
    p_simulate.add_argument("--out",
        metavar="CSV", required=True,
        help="write the dataset to CSV and its dimensions next to it")

    p_fit = p_action.add_parser("fit", parents=[common],
        help="fit model parameters to a dataset")
    p_fit.add_argument("--data",
        metavar="CSV", required=True,
        help="read the dataset from CSV")
    p_fit.add_argument("--out",
        metavar="JSON", required=True,
        help="write the fit report to JSON")
    p_fit.add_argument("--init",
        metavar="JSON",
        help="start from the parameters in JSON (a fit report or parameters)")
    p_fit.add_argument("--starts",
        metavar="COUNT", type=int, default=1,
        help="keep the best of COUNT starting points (default: %(default)s)")
    p_fit.add_argument("--max-iter",
        metavar="COUNT", type=int, default=FitOptions.max_iter,
        help="stop after COUNT iterations (default: %(default)s)")

    p_curves = p_action.add_parser("curves", parents=[common],
        help="tabulate survival, density and hazard curves")
    p_curves.add_argument("--config",
        metavar="CONFIG",
        help="read the subject from CONFIG (default: bundled two-cluster example)")
    p_curves.add_argument("--params",
        metavar="JSON",
        help="use the parameters in JSON (a fit report or parameters) with the subject "
             "covariates of CONFIG")
    p_curves.add_argument("--kappa",
        metavar="SHAPE", type=float,
        help="override the Weibull shape")
    p_curves.add_argument("--grid",
        metavar="START:STOP:NUM",
        help="evaluate at NUM points from START to STOP")
    p_curves.add_argument("--scheme",
        choices=["first", "last"],
        help="activation scheme (default: from CONFIG, or first)")
    p_curves.add_argument("--out",
        metavar="CSV", required=True,
        help="write the curves to CSV")

    p_importance = p_action.add_parser("importance", parents=[common],
        help="rank the clusters of a series system by importance")
    p_importance.add_argument("--config",
        metavar="CONFIG",
        help="read the system from CONFIG (default: bundled two-cluster system)")
    p_importance.add_argument("--grid",
        metavar="START:STOP:NUM", default="0:10:21",
        help="evaluate at NUM points from START to STOP (default: %(default)s)")
    p_importance.add_argument("--out",
        metavar="CSV", required=True,
        help="write importances and rankings to CSV")

    p_study = p_action.add_parser("mc-study", parents=[common],
        help="run a Monte Carlo simulate-and-fit study")
    p_study.add_argument("--config",
        metavar="CONFIG",
        help="read the study design from CONFIG (default: bundled desk-scale study)")
    p_study.add_argument("--full-scale",
        action="store_true", default=False,
        help="use 1000 replications per sample size (about ten times slower)")
    p_study.add_argument("--out",
        metavar="DIR", required=True,
        help="write the report and tables to DIR")

    p_reliability = p_action.add_parser("reliability", parents=[common],
        help="compare analytic and Monte Carlo system survival")
    p_reliability.add_argument("--config",
        metavar="CONFIG",
        help="read the system from CONFIG (default: bundled two-cluster system)")
    p_reliability.add_argument("--scheme",
        choices=["series", "parallel", "parallel_series", "series_parallel"],
        help="override the system topology")
    p_reliability.add_argument("--grid",
        metavar="START:STOP:NUM", default="0:10:20",
        help="evaluate at NUM points from START to STOP (default: %(default)s)")
    p_reliability.add_argument("--draws",
        metavar="COUNT", type=int, default=100_000,
        help="simulate COUNT systems (default: %(default)s)")
    p_reliability.add_argument("--out",
        metavar="CSV", required=True,
        help="write analytic and Monte Carlo survival to CSV")

    return parser


def cmd_simulate(args):
    config = SimConfig.from_json(_load_json(args.config, "simulate.json"))
    if args.seed is not None:
        config = replace(config, seed=args.seed)
    _check_output(args.out)

    ds = simulate_dataset(config)
    text, sidecar = format_csv(ds)
    filename = os.path.basename(args.out)
    plan = ArtifactPlan("simulate")
    plan.add_file(filename, text)
    plan.add_file(os.path.basename(os.path.splitext(args.out)[0] + ".json"), sidecar)
    _write(plan, args.out)
    print("subjects: {}".format(ds.n))
    print("censoring rate: {:.4f}".format(censoring_rate(ds)))
    return EXIT_OK


def cmd_fit(args):
    _check_output(args.out)
    ds = read_csv(args.data)
    init = "default" if args.init is None else _load_params(args.init)
    options = FitOptions(max_iter=args.max_iter)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        if args.starts == 1:
            report = fit(ds, init, options)
        else:
            rng = RngStream(args.seed if args.seed is not None else 0)
            report = multi_start_fit(ds, args.starts, rng, init=init, options=options)

    plan = ArtifactPlan("fit")
    plan.add_file(os.path.basename(args.out), json.dumps(report.to_json(), indent=2) + "\n")
    _write(plan, args.out)

    params = report.params_hat
    for label, value in zip(params.labels(), params.to_vector()):
        print("{:<12} {: .6f}".format(label, value))
    print("loglik       {: .6f}".format(report.loglik_at_opt))
    print("converged: {} ({} iterations, gradient norm {:.3g})"
          .format("yes" if report.converged else "no", report.iterations, report.grad_norm))
    return EXIT_OK if report.converged else EXIT_NONCONVERGE


def _curve_point(config, args):
    if args.params is not None or "params" in config:
        if "subject" not in config:
            raise InputError("Curve configuration needs a 'subject' to go with parameters")
        params = _load_params(args.params) if args.params is not None \
            else ModelParams.from_json(config["params"])
        if args.kappa is not None:
            params = replace(params, log_kappa=np.log(args.kappa))
        subject = config["subject"]
        return point_for_subject(params, subject["x0"], subject["x_clusters"],
                                 Simplex(subject["proportions"]))
    try:
        point = config["point"]
        kappa = args.kappa if args.kappa is not None else point["kappa"]
        log_mu = point["log_mu"] if "log_mu" in point else np.log(point["mu"])
        return GptcmPoint.from_log_mu(point["theta"], kappa, log_mu, point["proportions"])
    except KeyError as error:
        raise InputError("Curve configuration lacks the {!r} field"
                         .format(error.args[0])) from None


def cmd_curves(args):
    config = _load_json(args.config, "curves.json")
    _check_output(args.out)
    gp = _curve_point(config, args)
    scheme = args.scheme or config.get("scheme", "first")
    grid = args.grid or config.get("grid")
    if grid is not None:
        t = parse_grid(grid)
    else:
        t_min = 1e-6 * float(np.median(gp.scales))
        t = np.linspace(t_min, float(config.get("t_max", 10.0)), int(config.get("points", 200)))

    curves = evaluate_curves(gp, t, scheme)
    plan = ArtifactPlan("curves")
    plan.add_file(os.path.basename(args.out), _csv_text(curves.columns))
    _write(plan, args.out)
    print("{} points, {} activation".format(len(t), scheme))
    return EXIT_OK


def _load_system(args):
    obj = _load_json(args.config, "reliability.json")
    if getattr(args, "scheme", None) is not None:
        obj = dict(obj, scheme=args.scheme)
    seed = args.seed if args.seed is not None else obj.get("seed", 0)
    return SystemSpec.from_json(obj), seed


def cmd_importance(args):
    spec, _ = _load_system(args)
    _check_output(args.out)
    t = parse_grid(args.grid)
    rankings = [importance_ranking(spec, float(t_k)) for t_k in t]

    columns = OrderedDict(t=t)
    importance = birnbaum_importance(spec.point, t)
    for l in range(len(spec.clusters)):
        columns["importance_{}".format(l + 1)] = importance[:, l]
    columns["ranking"] = [" ".join(map(str, ranking)) for ranking in rankings]

    plan = ArtifactPlan("importance")
    plan.add_file(os.path.basename(args.out), _csv_text(columns))
    _write(plan, args.out)
    print("ranking: {}".format(" ".join(map(str, rankings[0]))))
    return EXIT_OK


def cmd_mc_study(args):
    cfg = StudyConfig.from_json(_load_json(args.config, "study.json"))
    if args.seed is not None:
        cfg = replace(cfg, seed=args.seed)
    if args.full_scale:
        cfg = cfg.full_scale()
    if os.path.isfile(args.out):
        raise NotADirectoryError("Output {!r} is a file".format(args.out))

    report = run_study(cfg, threads=args.threads)
    plan = ArtifactPlan("mc-study")
    plan.add_file("report.json", report_table(report, "json"))
    plan.add_file("table.md",    report_table(report, "markdown"))
    plan.add_file("table.csv",   report_table(report, "csv"))
    _write(plan, args.out, directory=True)
    print(report_table(report, "markdown"), end="")
    return EXIT_OK


def cmd_reliability(args):
    spec, seed = _load_system(args)
    _check_output(args.out)
    t = parse_grid(args.grid)
    analytic = system_survival(spec, t)
    estimate, stderr = monte_carlo_survival(spec, t, args.draws, RngStream(seed))

    difference = np.abs(analytic - estimate)
    discrepancy = np.divide(difference, stderr, out=np.where(difference > 0, np.inf, 0.0),
                            where=stderr > 0)
    columns = OrderedDict([("t", t), ("survival", analytic),
                           ("mc_estimate", estimate), ("mc_se", stderr)])
    plan = ArtifactPlan("reliability")
    plan.add_file(os.path.basename(args.out), _csv_text(columns))
    _write(plan, args.out)
    print("max |analytic - MC| / SE: {:.3f}".format(float(discrepancy.max())))
    return EXIT_OK


COMMANDS = {
    "simulate":    cmd_simulate,
    "fit":         cmd_fit,
    "curves":      cmd_curves,
    "importance":  cmd_importance,
    "mc-study":    cmd_mc_study,
    "reliability": cmd_reliability,
}


def main_runner(parser, args):
    if args.verbose:
        logging.basicConfig(level=logging.DEBUG if args.verbose > 1 else logging.INFO,
                            format="%(name)s: %(message)s")
    try:
        if args.threads is not None and args.threads < 1:
            raise InputError("Thread count must be a positive integer, not {!r}"
                             .format(args.threads))
        return COMMANDS[args.action](args)
    except StudyError as error:
        print("gptcm: study failed: {}".format(error), file=sys.stderr)
        return EXIT_STUDY
    except FitError as error:
        print("gptcm: fit failed: {}".format(error), file=sys.stderr)
        return EXIT_INPUT
    except UnsupportedSchemeError as error:
        print("gptcm: error: {}".format(error), file=sys.stderr)
        return EXIT_INPUT
    except OSError as error:
        print("gptcm: error: {}".format(error), file=sys.stderr)
        return EXIT_IO
    except (InputError, ValueError, TypeError, KeyError) as error:
        print("gptcm: error: {}".format(error), file=sys.stderr)
        return EXIT_INPUT


def main(argv=None):
    parser = main_parser()
    sys.exit(main_runner(parser, parser.parse_args(argv)))
