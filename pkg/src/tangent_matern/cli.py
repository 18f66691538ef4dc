"""Command-line front end.

    tangent-matern COMMAND [--config FILE] [--set section.key=value ...]
                   [--out DIR] [--seed N] [--threads N] [--likelihood METHOD]

Commands: simulate, fit, bootstrap, predict, empirical, veof.

A config file holds ``section.key = value`` lines (``#`` starts a comment).
Flags override the file.  Every run writes ``config.echo`` to the output
directory; passing it back with ``--config`` reproduces the run exactly.

Exit codes: 0 success, 1 invalid input, 2 numerical failure,
3 optimiser did not converge.
"""

import argparse
import os
import sys
from dataclasses import fields, replace

import numpy as np

from . import csvio, empirical, inference, predict, sphere
from .covariance import FAMILIES, build_model
from .exceptions import (EstimationError, GridError, NotPositiveDefiniteError,
                         ParameterError, PoleError)
from .observations import ObservationSet
from .simulate import simulate_values

EXIT_OK, EXIT_INVALID, EXIT_NUMERICAL, EXIT_NOT_CONVERGED = 0, 1, 2, 3
THREADS_ENV = "TANGENT_MATERN_THREADS"

# sub-seed purposes: derive_seed(run.seed, command, purpose, index)
_CMD = {"simulate": 1, "fit": 2, "bootstrap": 3, "predict": 4, "empirical": 5, "veof": 6}
_LHS, _DATA, _SPLIT, _BOOT = 1, 2, 3, 4

_FIT_KEYS = [f.name for f in fields(inference.FitConfig) if f.name != "threads"]


def _fit_default(name):
    v = getattr(inference.FitConfig(), name)
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, dict):
        return ""
    if isinstance(v, bool):
        return str(v).lower()
    return "none" if v is None else str(v)


DEFAULTS = {
    "run.seed": "0",
    "run.out": "out",
    "model.family": "tmm",
    "model.sigma1": "1.0", "model.sigma2": "1.0", "model.rho12": "0.5",
    "model.nu1": "3.0", "model.nu2": "4.0", "model.inv_a": "0.5",
    "model.tau1": "0.1", "model.tau2": "0.1",
    "model.sigma": "1.0", "model.nu": "3.0",
    "grid.type": "regular",
    "grid.n_lat": "10", "grid.n_lon": "20",
    "grid.lat_min": "-50.0", "grid.lat_max": "50.0",
    "grid.n": "768", "grid.file": "",
    "sim.n_reps": "1",
    "data.file": "",
    "fit.result": "",
    "fit.trace_file": "",
    "bootstrap.B": "30",
    "predict.models": "tmm,parsbm",
    "predict.repetitions": "1",
    "predict.band_width_deg": "30.0",
    "predict.train_fraction": "0.5",
    "predict.refit": "true",
    "predict.fit_files": "",
    "predict.observation_noise": "true",
    "empirical.n_bins": "40",
    "empirical.frac": "0.5",
    "empirical.lat_s": "",
    "empirical.lat_t": "",
    "veof.target_fraction": "0.95",
    "veof.K": "",
}
DEFAULTS.update({f"fit.{k}": _fit_default(k) for k in _FIT_KEYS})


class ConfigError(ValueError):
    pass


def parse_config_text(text, source="<config>"):
    out = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}, line {lineno}: expected 'section.key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"{source}, line {lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(args):
    cfg = dict(DEFAULTS)
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {args.config}") from None
        cfg.update(parse_config_text(text, args.config))
    for item in args.set or []:
        cfg.update(parse_config_text(item, "--set"))
    if args.out is not None:
        cfg["run.out"] = args.out
    if args.seed is not None:
        cfg["run.seed"] = str(args.seed)
    if args.likelihood is not None:
        cfg["fit.likelihood"] = args.likelihood
    return cfg


def echo_text(cfg):
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


def _threads(args):
    if args.threads is not None:
        n = args.threads
    else:
        raw = os.environ.get(THREADS_ENV, "1")
        try:
            n = int(raw)
        except ValueError:
            raise ConfigError(f"{THREADS_ENV}={raw!r} is not an integer") from None
    if n < 1:
        raise ConfigError("thread count must be at least 1")
    return n


def _num(cfg, key, kind=float):
    try:
        return kind(cfg[key])
    except ValueError:
        raise ConfigError(f"{key} = {cfg[key]!r} is not a valid {kind.__name__}") from None


def _bool(cfg, key):
    v = cfg[key].strip().lower()
    if v not in ("true", "false", "1", "0", "yes", "no"):
        raise ConfigError(f"{key} must be true or false, got {cfg[key]!r}")
    return v in ("true", "1", "yes")


def _seed(cfg, *key):
    return inference.derive_seed(_num(cfg, "run.seed", int), *key)


def model_from_config(cfg):
    family = cfg["model.family"]
    if family not in FAMILIES:
        raise ConfigError(f"model.family = {family!r}; choose from {sorted(FAMILIES)}")
    vec = [_num(cfg, f"model.{name}") for name in FAMILIES[family].param_names]
    return build_model(family, vec)


def locations_from_config(cfg):
    kind = cfg["grid.type"]
    if kind == "regular":
        g = sphere.regular_grid(_num(cfg, "grid.n_lat", int), _num(cfg, "grid.n_lon", int),
                                _num(cfg, "grid.lat_min"), _num(cfg, "grid.lat_max"))
        return g.locations()
    if kind == "fibonacci":
        return sphere.fibonacci_grid(_num(cfg, "grid.n", int))
    if kind == "file":
        if not cfg["grid.file"]:
            raise ConfigError("grid.type = file needs grid.file")
        return csvio.read_locations(cfg["grid.file"])
    raise ConfigError(f"grid.type = {kind!r}; choose regular, fibonacci or file")


def fit_config_from(cfg, threads):
    values = {k: cfg[f"fit.{k}"] for k in _FIT_KEYS if cfg[f"fit.{k}"] != ""}
    try:
        fc = inference.config_from_mapping(values)
    except ValueError as exc:
        raise ConfigError(f"fit options: {exc}") from None
    return replace(fc, threads=threads)


def _load_data(cfg):
    if not cfg["data.file"]:
        raise ConfigError("data.file is required for this command")
    return csvio.read_observations(cfg["data.file"])


def _out(cfg, name):
    return os.path.join(cfg["run.out"], name)


def _write_estimates(path, result, se=None):
    rows = []
    for i, name in enumerate(result.param_names):
        rows.append([name, csvio.fmt(result.theta_hat[i]),
                     "" if se is None else csvio.fmt(se[i])])
    csvio.write_rows(path, ["parameter", "estimate", "se"], rows)


# --- commands --------------------------------------------------------------


def cmd_simulate(cfg, threads):
    m = model_from_config(cfg)
    locs = locations_from_config(cfg)
    n_reps = _num(cfg, "sim.n_reps", int)
    vals = simulate_values(locs, m, n_reps, _seed(cfg, _CMD["simulate"], _DATA))
    obs = ObservationSet(locs, vals)
    csvio.write_observations(_out(cfg, "samples.csv"), obs, time_label="rep")
    return EXIT_OK


def _fit(cfg, data, threads, purpose_cmd):
    fc = fit_config_from(cfg, threads)
    return inference.fit_mle(data, cfg["model.family"], fc,
                             seed=_seed(cfg, _CMD[purpose_cmd], _LHS))


def cmd_fit(cfg, threads):
    data = _load_data(cfg)
    if cfg["model.family"] not in FAMILIES:
        raise ConfigError(f"model.family = {cfg['model.family']!r}")
    if cfg["fit.trace_file"]:
        cfg = dict(cfg, **{"fit.record_trace": "true"})
    res = _fit(cfg, data, threads, "fit")
    csvio.atomic_write(_out(cfg, "fit.txt"), res.to_text())
    _write_estimates(_out(cfg, "estimates.csv"), res)
    if cfg["fit.trace_file"] and res.trace is not None:
        rows = [[k, csvio.fmt(f)] + [csvio.fmt(v) for v in th]
                for k, (th, f) in enumerate(res.trace)]
        csvio.write_rows(_out(cfg, cfg["fit.trace_file"]), ["iteration", "nll"]
                         + list(res.param_names), rows)
    if not res.converged:
        print(f"warning: optimiser did not converge ({res.message})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _read_fit(path):
    try:
        with open(path) as fh:
            return inference.FitResult.from_text(fh.read())
    except FileNotFoundError:
        raise ConfigError(f"fit result file not found: {path}") from None
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: malformed fit result ({exc})") from None


def cmd_bootstrap(cfg, threads):
    data = _load_data(cfg)
    if cfg["fit.result"]:
        fitted = _read_fit(cfg["fit.result"])
    else:
        fitted = _fit(cfg, data, threads, "bootstrap")
    B = _num(cfg, "bootstrap.B", int)
    fc = fit_config_from(cfg, threads)
    boot = inference.bootstrap_se(fitted, data, B, _seed(cfg, _CMD["bootstrap"], _BOOT), fc)
    _write_estimates(_out(cfg, "bootstrap_se.csv"), fitted, boot.se)
    csvio.write_matrix(_out(cfg, "bootstrap_estimates.csv"), list(fitted.param_names),
                       boot.estimates)
    csvio.atomic_write(_out(cfg, "bootstrap.txt"), fitted.to_text(boot.se)
                       + f"bootstrap.B = {B}\nbootstrap.failed = {boot.n_failed}\n")
    return EXIT_OK


def _fit_files(cfg):
    out = {}
    for item in cfg["predict.fit_files"].split(","):
        if item.strip():
            if ":" not in item:
                raise ConfigError("predict.fit_files entries must be family:path")
            fam, path = item.split(":", 1)
            out[fam.strip()] = _read_fit(path.strip())
    return out


def cmd_predict(cfg, threads):
    data = _load_data(cfg)
    models = [m.strip() for m in cfg["predict.models"].split(",") if m.strip()]
    for fam in models:
        if fam not in FAMILIES:
            raise ConfigError(f"predict.models: unknown family {fam!r}")
    refit = _bool(cfg, "predict.refit")
    fixed = _fit_files(cfg)
    if not refit and set(models) - set(fixed):
        raise ConfigError("predict.refit = false needs predict.fit_files for every model")
    reps = _num(cfg, "predict.repetitions", int)
    width = _num(cfg, "predict.band_width_deg")
    frac = _num(cfg, "predict.train_fraction")
    noise = _bool(cfg, "predict.observation_noise")
    fc = fit_config_from(cfg, threads)
    per_rep = []
    not_converged = False
    for k in range(reps):
        tr, te = predict.band_holdout(data.locations, _seed(cfg, _CMD["predict"], _SPLIT, k),
                                      width, frac)
        train = data.subset(tr)
        targets = [data.locations[i] for i in te]
        truth = data.values[:, te]
        for j, fam in enumerate(models):
            if refit:
                res = inference.fit_mle(train, fam, fc,
                                        seed=_seed(cfg, _CMD["predict"], _LHS, k, j))
                not_converged |= not res.converged
                model = res.model
            else:
                model = fixed[fam].model
            pred = predict.cokrige(train, model, targets)
            sc = predict.scores(pred, truth, observation_noise=noise)
            for var in ("u", "v", "pooled"):
                per_rep.append((k, fam, var, sc[var]))
            if k == 0:
                _write_predictions(_out(cfg, f"predictions_{fam}.csv"), pred, data.times)
    keys = ("MSPE", "MAE", "LogS", "CRPS")
    csvio.write_rows(_out(cfg, "scores_by_repetition.csv"),
                     ["repetition", "model", "variable", *keys],
                     [[k, fam, var, *(csvio.fmt(s[q]) for q in keys)]
                      for k, fam, var, s in per_rep])
    rows = []
    for fam in models:
        for var in ("u", "v", "pooled"):
            vals = np.array([[s[q] for q in keys] for _, f, v, s in per_rep
                             if f == fam and v == var])
            sd = vals.std(axis=0, ddof=1) if len(vals) > 1 else np.zeros(len(keys))
            rows.append([fam, var, "mean", *(csvio.fmt(x) for x in vals.mean(axis=0))])
            rows.append([fam, var, "sd", *(csvio.fmt(x) for x in sd)])
    csvio.write_rows(_out(cfg, "scores.csv"), ["model", "variable", "statistic", *keys], rows)
    return EXIT_NOT_CONVERGED if not_converged else EXIT_OK


def _write_predictions(path, pred, times):
    header = ["lat_deg", "lon_deg", "u_mean", "v_mean", "u_sd", "v_sd"]
    multi = pred.mean.shape[0] > 1
    rows = []
    for r in range(pred.mean.shape[0]):
        for i, p in enumerate(pred.locations):
            row = [csvio.fmt_loc(p.lat_deg), csvio.fmt_loc(p.lon_deg),
                   csvio.fmt(pred.mean[r, i, 0]), csvio.fmt(pred.mean[r, i, 1]),
                   csvio.fmt(pred.sd[i, 0]), csvio.fmt(pred.sd[i, 1])]
            rows.append(([times[r]] if multi else []) + row)
    csvio.write_rows(path, (["time"] if multi else []) + header, rows)


def cmd_empirical(cfg, threads):
    data = _load_data(cfg)
    bins = empirical.empirical_cov_gcd(data, n_bins=_num(cfg, "empirical.n_bins", int))
    for (a, b), bc in bins.items():
        rows = [[csvio.fmt(bc.lo[k]), csvio.fmt(bc.hi[k]), int(bc.count[k]),
                 csvio.fmt(bc.mean[k]), csvio.fmt(bc.median[k])] for k in range(bc.lo.size)]
        csvio.write_rows(_out(cfg, f"empirical_{a}{b}.csv"),
                         ["bin_lo", "bin_hi", "count", "mean", "median"], rows)
    if data.n_reps >= 3:
        cc = empirical.colocated_crosscorr(data, _num(cfg, "empirical.frac"))
        csvio.write_rows(_out(cfg, "colocated.csv"), ["lat_deg", "lon_deg", "corr"],
                         [[csvio.fmt_loc(la), csvio.fmt_loc(lo), csvio.fmt(c)]
                          for la, lo, c in zip(cc.lat_deg, cc.lon_deg, cc.corr)])
        csvio.write_matrix(_out(cfg, "colocated_lat_profile.csv"), ["lat_deg", "corr"],
                           cc.lat_profile.reshape(-1, 2))
        csvio.write_matrix(_out(cfg, "colocated_lon_profile.csv"), ["lon_deg", "corr"],
                           cc.lon_profile.reshape(-1, 2))
    if cfg["empirical.lat_s"] and cfg["empirical.lat_t"]:
        ax = empirical.empirical_cov_axial(data, _num(cfg, "empirical.lat_s"),
                                           _num(cfg, "empirical.lat_t"))
        rows = [[csvio.fmt(ax.lags[k])] + [csvio.fmt(v) for v in ax.cov[k].ravel()]
                for k in range(ax.lags.size)]
        csvio.write_rows(_out(cfg, "axial.csv"), ["dphi", "uu", "uv", "vu", "vv"], rows)
    return EXIT_OK


def cmd_veof(cfg, threads):
    data = _load_data(cfg)
    field = empirical.field_from_observations(data)
    if cfg["veof.K"]:
        resid, dec = empirical.veof_detrend(field, K=_num(cfg, "veof.K", int))
    else:
        resid, dec = empirical.veof_detrend(field, target_fraction=_num(cfg,
                                                                       "veof.target_fraction"))
    res_obs = empirical.observations_from_field(resid, data.locations, data.times)
    csvio.write_observations(_out(cfg, "residuals.csv"), res_obs)
    k = dec.K
    csvio.write_matrix(_out(cfg, "veof_spatial.csv"),
                       ["lat_deg", "lon_deg"] + [f"u{j}" for j in range(k)]
                       + [f"v{j}" for j in range(k)],
                       np.column_stack([[p.lat_deg for p in data.locations],
                                        [p.lon_deg for p in data.locations],
                                        dec.spatial_u[:, :k], dec.spatial_v[:, :k]]))
    csvio.write_matrix(_out(cfg, "veof_temporal.csv"), [f"mode{j}" for j in range(k)],
                       dec.temporal[:, :k] if k else np.zeros((data.n_reps, 0)))
    csvio.write_rows(_out(cfg, "veof_explained.csv"), ["mode", "singular_value", "fraction"],
                     [[j, csvio.fmt(d), csvio.fmt(f)]
                      for j, (d, f) in enumerate(zip(dec.singular_values, dec.explained))])
    csvio.atomic_write(_out(cfg, "veof.txt"), f"K = {k}\n"
                       f"explained = {float(np.sum(dec.explained[:k]))!r}\n")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "bootstrap": cmd_bootstrap,
    "predict": cmd_predict,
    "empirical": cmd_empirical,
    "veof": cmd_veof,
}


def build_parser():
    p = argparse.ArgumentParser(prog="tangent-matern",
                                description="Tangent Matérn models for vector fields on the sphere")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("--config", help="file of 'section.key = value' lines")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config entry (repeatable)")
    p.add_argument("--out", help="output directory (run.out)")
    p.add_argument("--seed", type=int, help="top-level seed (run.seed)")
    p.add_argument("--threads", type=int,
                   help=f"worker threads (default ${THREADS_ENV} or 1)")
    p.add_argument("--likelihood", choices=["auto", "dense", "spectral"],
                   help="likelihood path (fit.likelihood)")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
        threads = _threads(args)
        os.makedirs(cfg["run.out"], exist_ok=True)
        csvio.atomic_write(_out(cfg, "config.echo"), echo_text(cfg))
        return COMMANDS[args.command](cfg, threads)
    except (NotPositiveDefiniteError, EstimationError, np.linalg.LinAlgError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ConfigError, ParameterError, PoleError, GridError, FileNotFoundError,
            ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
