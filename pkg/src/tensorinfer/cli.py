"""Command line interface.

Exit codes: 0 success, 2 argument or file-format problems, 3 numeric
failures (ill-conditioned solves, divergence, too many failed
replicates).  Error lines on stderr are prefixed E_ARGUMENT, E_FORMAT
or E_NUMERIC accordingly.  JSON summaries are emitted with sorted keys
and validated against the schema shipped with the package.
"""

import argparse
import json
import math
import struct
import sys
from importlib import resources

import numpy as np

from .exceptions import ArgumentError, FormatError, NumericError
from .tenalg import check_ranks
from .subspace import sin_theta  # noqa: F401 - re-exported for scripting
from .estimators import spectral_init, pca_refine, orth_refine, deflation_init, rank1_power
from .regression import RegressionDataset, regression_two_step, sgd_init
from .inference import (
    lambda_norms,
    estimate_lambda_sigma_pca,
    noise_adjusted_singular_values,
    pca_confidence_region_radius,
    regression_statistic_and_region,
    orth_component_statistic,
    sigma_split_estimate,
)
from .io import TENSOR_MAGIC, read_tensor, read_dataset, sniff_format
from .simlab import EXPERIMENT_KINDS, GENERATOR_ID, SimConfig, run_monte_carlo

__all__ = ["run", "main"]


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="tensorinfer",
        description="Low-rank tensor estimation, inference and Monte Carlo studies.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("sim", help="run a Monte Carlo experiment cell")
    sim.add_argument("kind", choices=EXPERIMENT_KINDS)
    sim.add_argument("--p", type=int, required=True, help="dimension per mode")
    sim.add_argument("--r", type=int, default=1, help="rank per mode")
    sim.add_argument("--gamma", type=float, required=True,
                     help="signal exponent, smallest value is p**gamma")
    sim.add_argument("--reps", type=int, required=True, help="number of replicates")
    sim.add_argument("--sigma", type=float, default=1.0, help="noise level")
    sim.add_argument("--n", type=int, default=None,
                     help="regression sample size (default 5*ceil(p**1.5))")
    sim.add_argument("--alpha", type=float, default=0.05, help="miscoverage level")
    sim.add_argument("--seed", type=int, default=0, help="master seed")
    sim.add_argument("--init", default="spectral",
                     help="'spectral' or 'oracle-perturbed[:eps]'")
    sim.add_argument("--noise", choices=("gaussian", "rademacher"),
                     default="gaussian")
    sim.add_argument("--fix-truth", action="store_true",
                     help="draw the truth once and reuse it in every replicate")
    sim.add_argument("--threads", type=int, default=1,
                     help="worker threads; has no effect on the output")
    sim.add_argument("--out", default=None, help="write to this path instead of stdout")
    sim.add_argument("--format", choices=("json", "csv"), default="json")

    fit = sub.add_parser("fit", help="fit a single file and report inference")
    fit.add_argument("model", choices=("pca", "orth", "rank1", "regression"))
    fit.add_argument("path", help="tensor file (.tnsr) or regression dataset")
    fit.add_argument("--r", type=int, default=1, help="rank per mode")
    fit.add_argument("--alpha", type=float, default=0.05, help="miscoverage level")
    fit.add_argument("--out", default=None, help="write to this path instead of stdout")

    info = sub.add_parser("info", help="describe a data file")
    info.add_argument("path")
    return parser


def _parse_init(arg):
    if ":" not in arg:
        return arg, 1.0
    name, _, eps = arg.partition(":")
    try:
        return name, float(eps)
    except ValueError:
        raise ArgumentError(f"bad init epsilon {eps!r} in --init {arg!r}") from None


def _load_schema():
    text = resources.files("tensorinfer").joinpath("summary.schema.json").read_text()
    return json.loads(text)


def _validate(payload):
    try:
        import jsonschema
    except ImportError:
        return
    try:
        jsonschema.validate(payload, _load_schema())
    except jsonschema.ValidationError as exc:
        raise FormatError(f"internal: summary failed schema validation: {exc.message}")


def _emit(text, out):
    if out is None:
        sys.stdout.write(text)
        if not text.endswith("\n"):
            sys.stdout.write("\n")
    else:
        with open(out, "w") as fh:
            fh.write(text)


def _fit_payload(command, result):
    payload = {"schema": "tensorinfer-fit-v1", "command": command, "result": result}
    _validate(payload)
    return json.dumps(payload, sort_keys=True, indent=2)


def _cmd_sim(args):
    init, init_eps = _parse_init(args.init)
    config = SimConfig(
        kind=args.kind,
        p=args.p,
        r=args.r,
        gamma=args.gamma,
        sigma=args.sigma,
        n=args.n,
        reps=args.reps,
        alpha=args.alpha,
        seed=args.seed,
        init=init,
        init_eps=init_eps,
        noise=args.noise,
        fix_truth=args.fix_truth,
    )
    summary = run_monte_carlo(config, threads=args.threads)
    if args.format == "csv":
        return summary.to_csv()
    payload = summary.to_json_dict()
    _validate(payload)
    return json.dumps(payload, sort_keys=True, indent=2)


def _cmd_fit_pca(args):
    a = read_tensor(args.path)
    ranks = (args.r, args.r, args.r)
    check_ranks(a.shape, ranks)
    fit = pca_refine(a, spectral_init(a, ranks))
    lam_hats, sigma_hat = estimate_lambda_sigma_pca(a, fit)
    radii = []
    for j in range(3):
        if sigma_hat > 0:
            lam_adj = noise_adjusted_singular_values(
                lam_hats[j], fit.core, j + 1, a.shape, sigma_hat)
            l1, l2 = lambda_norms(lam_adj)
            # effective complement dimension: leading error lives in
            # the orthogonal complement of the estimated subspace
            radii.append(pca_confidence_region_radius(
                a.shape[j] - ranks[j], sigma_hat, l1, l2, args.alpha))
        else:
            radii.append(0.0)
    result = {
        "dims": list(a.shape),
        "ranks": list(ranks),
        "alpha": args.alpha,
        "sigma_hat": sigma_hat,
        "lambda_hat": [list(map(float, lam_hats[j])) for j in range(3)],
        "radius": radii,
        "degenerate": bool(fit.degenerate),
        "core": fit.core.tolist(),
        "factors": [u.tolist() for u in fit.factors],
    }
    return _fit_payload("pca", result)


def _orth_sigma_hat(a, fit):
    # residual after projecting on orthonormalized factor spans
    from .tenalg import _mode_dot

    recon = a
    bases = []
    for m in (fit.u, fit.v, fit.w):
        q, rr = np.linalg.qr(m)
        d = np.sign(np.diag(rr))
        d[d == 0] = 1.0
        bases.append(q * d)
    for j, b in enumerate(bases):
        recon = _mode_dot(recon, b.T, j + 1)
    for j, b in enumerate(bases):
        recon = _mode_dot(recon, b, j + 1)
    return float(np.linalg.norm(a - recon) / math.sqrt(a.size))


def _cmd_fit_orth(args):
    a = read_tensor(args.path)
    fit = orth_refine(a, deflation_init(a, args.r))
    sigma_hat = _orth_sigma_hat(a, fit)
    thresholds = []
    for j in range(fit.r):
        lam = float(fit.lambdas[j])
        if sigma_hat > 0 and lam > 0:
            _, thr = orth_component_statistic(
                1.0, a.shape[0] - 1, sigma_hat, lam, args.alpha)
            thresholds.append(float(thr))
        else:
            thresholds.append(1.0)
    result = {
        "dims": list(a.shape),
        "r": fit.r,
        "alpha": args.alpha,
        "lambda_hat": list(map(float, fit.lambdas)),
        "sigma_hat": sigma_hat,
        "overlap_thresholds": thresholds,
        "u": fit.u.tolist(),
        "v": fit.v.tolist(),
        "w": fit.w.tolist(),
    }
    return _fit_payload("orth", result)


def _cmd_fit_rank1(args):
    a = read_tensor(args.path)
    fit = rank1_power(a)
    sigma_hat = float(np.linalg.norm(a - fit.t_hat) / math.sqrt(a.size))
    result = {
        "dims": list(a.shape),
        "lambda_hat": fit.lambda_hat,
        "sigma_hat": sigma_hat,
        "u": list(map(float, fit.u)),
        "v": list(map(float, fit.v)),
        "w": list(map(float, fit.w)),
    }
    return _fit_payload("rank1", result)


def _cmd_fit_regression(args):
    data = read_dataset(args.path)
    ranks = (args.r, args.r, args.r)
    check_ranks(data.dims, ranks)
    if data.sigma is not None:
        sigma, source = float(data.sigma), "header"
        fit_data = data
    else:
        holdout = math.ceil(max(data.dims) ** 1.5)
        if data.n <= holdout:
            raise ArgumentError(
                f"dataset has n={data.n} records but sigma estimation holds out "
                f"{holdout}; provide sigma in the header or more records"
            )
        fit_data = RegressionDataset(
            covariates=data.covariates[holdout:],
            responses=data.responses[holdout:],
            sigma=None,
        )
        source = "split"
    fit = regression_two_step(fit_data, sgd_init(fit_data, ranks))
    if source == "split":
        sigma = sigma_split_estimate(data, holdout=holdout, t_tilde=fit.reconstruct())
    radii = []
    lam_hat = []
    for j in range(3):
        svals = fit.mode_singular_values(j + 1)[: args.r]
        lam_hat.append(list(map(float, svals)))
        if sigma > 0:
            l1, l2 = lambda_norms(svals)
            # least-squares degrees of freedom: p*r coefficients per factor solve
            n_eff = fit_data.n - data.dims[j] * args.r - 1
            if n_eff <= 0:
                raise ArgumentError("too few observations for the requested rank")
            radii.append(regression_statistic_and_region(
                0.0, data.dims[j] - args.r, n_eff, sigma, l1, l2, args.alpha
            ).radius)
        else:
            radii.append(0.0)
    result = {
        "dims": list(data.dims),
        "n": data.n,
        "n_used": fit_data.n,
        "ranks": list(ranks),
        "alpha": args.alpha,
        "sigma_hat": float(sigma),
        "sigma_source": source,
        "lambda_hat": lam_hat,
        "radius": radii,
        "degenerate": bool(fit.degenerate),
        "core": fit.core.tolist(),
        "factors": [u.tolist() for u in fit.factors],
    }
    return _fit_payload("regression", result)


def _cmd_info(args):
    kind = sniff_format(args.path)
    if kind == "tensor":
        with open(args.path, "rb") as fh:
            magic = fh.read(len(TENSOR_MAGIC))
            head = fh.read(24)
        if magic != TENSOR_MAGIC or len(head) != 24:
            raise FormatError(f"{args.path}: truncated tensor header")
        dims = struct.unpack("<3Q", head)
        return (f"format: tensor\n"
                f"dims: {dims[0]} x {dims[1]} x {dims[2]}\n"
                f"entries: {dims[0] * dims[1] * dims[2]}\n")
    if kind == "dataset":
        with open(args.path, "rb") as fh:
            header = json.loads(fh.readline().decode("utf-8"))
        dims = header["dims"]
        sigma = header.get("sigma")
        return (f"format: dataset\n"
                f"records: {header['n']}\n"
                f"dims: {dims[0]} x {dims[1]} x {dims[2]}\n"
                f"sigma: {'unknown' if sigma is None else sigma}\n")
    raise FormatError(f"{args.path}: unrecognized file format")


def run(argv=None):
    """Parse and execute; return the process exit code."""
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    try:
        if args.command == "sim":
            text = _cmd_sim(args)
        elif args.command == "fit":
            handler = {
                "pca": _cmd_fit_pca,
                "orth": _cmd_fit_orth,
                "rank1": _cmd_fit_rank1,
                "regression": _cmd_fit_regression,
            }[args.model]
            text = handler(args)
        else:
            text = _cmd_info(args)
        _emit(text, getattr(args, "out", None))
        return 0
    except ArgumentError as exc:
        print(f"E_ARGUMENT: {exc}", file=sys.stderr)
        return 2
    except FormatError as exc:
        print(f"E_FORMAT: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"E_NUMERIC: {exc}", file=sys.stderr)
        return 3
    except OSError as exc:
        print(f"E_ARGUMENT: {exc}", file=sys.stderr)
        return 2


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
