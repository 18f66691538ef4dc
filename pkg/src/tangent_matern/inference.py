"""Maximum-likelihood fitting with Latin-hypercube multi-start and
parametric-bootstrap standard errors.

Parameters are optimised in an unconstrained space:

* sigma, 1/a, tau: log
* nu: ``lo + (hi - lo) * logistic(z)``, so nu stays in (lo, hi)
* rho12: ``rho_bound(nu1, nu2) * tanh(z)``, valid by construction

The gradient is a central difference with step ``fd_step * max(|z|, 1)``
and its components can be evaluated on a thread pool; results are reduced
in a fixed order so fits do not depend on the thread count.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, fields, replace

import numpy as np
from scipy import optimize
from scipy.special import expit, logit
from scipy.stats import qmc

from . import simulate as sim
from .covariance import FAMILIES, build_model
from .exceptions import (EstimationError, NotPositiveDefiniteError, ParameterError,
                         TangentMaternError)
from .kernels import rho_bound
from .likelihood import LikelihoodProblem
from .observations import GridObservations, ObservationSet

# objective value reported for invalid or non-positive-definite parameters
PENALTY = 1e12


@dataclass(frozen=True)
class FitConfig:
    """Options for :func:`fit_mle`.

    The ``*_box`` ranges are where Latin-hypercube starting points are
    drawn; the optimiser itself is unbounded apart from the smoothness
    range ``(nu_lower, nu_upper)``.  ``nu_lower=None`` means 1 for the
    derivative-based families and 0 for the direct baseline.
    ``fixed`` maps parameter names to values held constant.
    """

    n_lhs: int = 100
    fixed_init_inverse_scale: float = 5.0
    init_taus: tuple = (0.05, 0.05)
    nu_lower: float = None
    nu_upper: float = 5.0
    sigma_box: tuple = (0.05, 5.0)
    inv_a_box: tuple = (0.05, 5.0)
    tau_box: tuple = (0.01, 1.0)
    max_iters: int = 500
    ftol: float = 1e-10
    gtol: float = 1e-6
    fd_step: float = 1e-5
    threads: int = 1
    likelihood: str = "auto"
    covariates: bool = False
    record_trace: bool = False
    fixed: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_lhs < 1:
            raise ValueError("n_lhs must be at least 1")
        for name in ("sigma_box", "inv_a_box", "tau_box"):
            lo, hi = getattr(self, name)
            if not 0 < lo < hi:
                raise ValueError(f"{name} must satisfy 0 < low < high, got {(lo, hi)}")
        if self.nu_lower is not None and not 0 <= self.nu_lower < self.nu_upper:
            raise ValueError("need 0 <= nu_lower < nu_upper")
        if self.likelihood not in ("auto", "dense", "spectral"):
            raise ValueError(f"unknown likelihood method {self.likelihood!r}")
        if self.threads < 1:
            raise ValueError("threads must be at least 1")

    def nu_range(self, family):
        lo = self.nu_lower
        if lo is None:
            lo = 0.0 if family == "parsbm" else 1.0
        return lo, self.nu_upper


class Reparam:
    """Bijection between a family's parameter vector and R^p."""

    def __init__(self, family, cfg):
        if family not in FAMILIES:
            raise ParameterError(f"unknown model family {family!r}")
        self.family = family
        self.names = FAMILIES[family].param_names
        self.nu_lo, self.nu_hi = cfg.nu_range(family)
        self._nu_idx = [i for i, n in enumerate(self.names) if n.startswith("nu")]

    def _rho_bound(self, vec):
        i, j = self._nu_idx
        return rho_bound(vec[i], vec[j])

    def to_unconstrained(self, vec):
        vec = np.asarray(vec, dtype=float)
        z = np.empty_like(vec)
        width = self.nu_hi - self.nu_lo
        for i, name in enumerate(self.names):
            if name.startswith("nu"):
                z[i] = logit((vec[i] - self.nu_lo) / width)
            elif name == "rho12":
                z[i] = math.atanh(vec[i] / self._rho_bound(vec))
            else:
                z[i] = math.log(vec[i])
        return z

    def to_constrained(self, z):
        z = np.asarray(z, dtype=float)
        vec = np.empty_like(z)
        width = self.nu_hi - self.nu_lo
        rho_at = None
        for i, name in enumerate(self.names):
            if name.startswith("nu"):
                vec[i] = self.nu_lo + width * expit(z[i])
            elif name == "rho12":
                rho_at = i
            else:
                vec[i] = math.exp(z[i])
        if rho_at is not None:
            vec[rho_at] = self._rho_bound(vec) * math.tanh(z[rho_at])
        return vec

    def neutral(self, i):
        """A valid placeholder for coordinate ``i`` (used for held-fixed ones)."""
        name = self.names[i]
        if name.startswith("nu"):
            return 0.5 * (self.nu_lo + self.nu_hi)
        return 0.0 if name == "rho12" else 1.0


def lhs_candidates(cfg, seed, family="tmm"):
    """``cfg.n_lhs`` Latin-hypercube parameter vectors for ``family``.

    Every coordinate of the unit-cube design hits each of the ``n_lhs``
    strata once; rho12 is placed at ``(2u - 1) * rho_bound(nu1, nu2)``.
    """
    names = FAMILIES[family].param_names
    nu_lo, nu_hi = cfg.nu_range(family)
    sampler = qmc.LatinHypercube(d=len(names), rng=sim.make_rng(seed, 1))
    u = sampler.random(cfg.n_lhs)
    out = np.empty_like(u)
    for i, name in enumerate(names):
        if name.startswith("sigma"):
            lo, hi = cfg.sigma_box
        elif name == "inv_a":
            lo, hi = cfg.inv_a_box
        elif name.startswith("tau"):
            lo, hi = cfg.tau_box
        elif name.startswith("nu"):
            lo, hi = nu_lo, nu_hi
        else:
            continue
        out[:, i] = lo + (hi - lo) * u[:, i]
    if "rho12" in names:
        k = names.index("rho12")
        i1, i2 = names.index("nu1"), names.index("nu2")
        bounds = np.array([rho_bound(a, b) for a, b in zip(out[:, i1], out[:, i2])])
        out[:, k] = (2.0 * u[:, k] - 1.0) * bounds
    return out


@dataclass
class FitResult:
    """Outcome of :func:`fit_mle`."""

    family: str
    theta_hat: np.ndarray
    nll: float
    iterations: int
    converged: bool
    message: str
    lhs_candidates_evaluated: int
    start: np.ndarray
    beta: np.ndarray = None
    trace: list = None
    likelihood: str = "auto"

    @property
    def param_names(self):
        return FAMILIES[self.family].param_names

    @property
    def model(self):
        return build_model(self.family, self.theta_hat)

    def as_dict(self):
        return dict(zip(self.param_names, (float(v) for v in self.theta_hat)))

    def to_text(self, se=None):
        """``key = value`` lines; ``se`` adds a ``se.<name>`` line per parameter."""
        lines = [f"family = {self.family}"]
        for i, name in enumerate(self.param_names):
            lines.append(f"{name} = {float(self.theta_hat[i])!r}")
        if se is not None:
            for i, name in enumerate(self.param_names):
                lines.append(f"se.{name} = {float(se[i])!r}")
        if self.beta is not None:
            for i, b in enumerate(self.beta):
                lines.append(f"beta{i} = {float(b)!r}")
        lines += [f"nll = {self.nll!r}",
                  f"iterations = {self.iterations}",
                  f"converged = {str(self.converged).lower()}",
                  f"lhs_candidates_evaluated = {self.lhs_candidates_evaluated}",
                  f"likelihood = {self.likelihood}",
                  f"message = {self.message}"]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text):
        kv = {}
        for line in text.splitlines():
            if "=" in line:
                k, v = line.split("=", 1)
                kv[k.strip()] = v.strip()
        family = kv["family"]
        names = FAMILIES[family].param_names
        theta = np.array([float(kv[n]) for n in names])
        betas = sorted((k for k in kv if k.startswith("beta")), key=lambda k: int(k[4:]))
        return cls(family=family, theta_hat=theta, nll=float(kv["nll"]),
                   iterations=int(kv["iterations"]),
                   converged=kv["converged"] == "true", message=kv.get("message", ""),
                   lhs_candidates_evaluated=int(kv["lhs_candidates_evaluated"]),
                   start=theta.copy(),
                   beta=np.array([float(kv[k]) for k in betas]) if betas else None,
                   likelihood=kv.get("likelihood", "auto"))


class _Objective:
    """nll as a function of the free unconstrained coordinates."""

    def __init__(self, problem, reparam, template, free, cfg, fixed=None):
        self.problem = problem
        self.fixed = fixed or {}
        self.reparam = reparam
        self.template = template
        self.free = free
        self.cfg = cfg
        self.family = reparam.family
        self._touches_kernel = np.array(
            [reparam.names[i].startswith("nu") or reparam.names[i] == "inv_a" for i in free])
        self._pool = ThreadPoolExecutor(cfg.threads) if cfg.threads > 1 else None
        self.evaluations = 0

    def close(self):
        if self._pool is not None:
            self._pool.shutdown()

    def vector(self, zf):
        z = self.template.copy()
        z[self.free] = zf
        vec = self.reparam.to_constrained(z)
        for i, v in self.fixed.items():
            vec[i] = v
        return vec

    def value(self, zf):
        self.evaluations += 1
        try:
            vec = self.vector(zf)
            out = self.problem(build_model(self.family, vec))
        except (NotPositiveDefiniteError, ParameterError, OverflowError, ValueError):
            return PENALTY
        return out if np.isfinite(out) else PENALTY

    def value_and_grad(self, zf):
        zf = np.asarray(zf, dtype=float)
        steps = self.cfg.fd_step * np.maximum(np.abs(zf), 1.0)
        points = [zf]
        for i in range(zf.size):
            for sign in (1.0, -1.0):
                p = zf.copy()
                p[i] += sign * steps[i]
                points.append(p)
        # shape/scale perturbations last, so the kernel cache still holds
        # the base point's Bessel arrays for every other coordinate
        order = [0] + [1 + 2 * i + k for i in np.argsort(self._touches_kernel, kind="stable")
                       for k in (0, 1)]
        if self._pool is None:
            done = {j: self.value(points[j]) for j in order}
        else:
            done = dict(zip(order, self._pool.map(self.value, [points[j] for j in order])))
        vals = [done[j] for j in range(len(points))]
        f0 = vals[0]
        grad = np.empty(zf.size)
        for i in range(zf.size):
            fp, fm = vals[1 + 2 * i], vals[2 + 2 * i]
            if fp < PENALTY and fm < PENALTY:
                grad[i] = (fp - fm) / (2 * steps[i])
            elif fp < PENALTY:
                grad[i] = (fp - f0) / steps[i]
            elif fm < PENALTY:
                grad[i] = (f0 - fm) / steps[i]
            else:
                grad[i] = 0.0
        return f0, grad


def _evaluate_candidates(objective, starts):
    if objective._pool is None:
        return np.array([objective.value(z) for z in starts])
    return np.array(list(objective._pool.map(objective.value, starts)))


def fit_mle(data, family="tmm", cfg=None, seed=0, start=None):
    """Maximum-likelihood estimate of a family's parameters.

    Parameters
    ----------
    data : ObservationSet or GridObservations
    family : {"tmm", "curl", "div", "parsbm"}
    cfg : FitConfig
    seed : int
        Seeds the Latin-hypercube design.
    start : array_like, optional
        Explicit starting vector; skips the multi-start search.

    Returns
    -------
    FitResult
        Non-convergence is reported through ``converged``, not raised.
    """
    cfg = cfg or FitConfig()
    if not isinstance(data, (ObservationSet, GridObservations)):
        raise TypeError("data must be an ObservationSet or GridObservations")
    problem = LikelihoodProblem(data, cfg.likelihood, cfg.covariates)
    reparam = Reparam(family, cfg)
    names = reparam.names
    unknown = set(cfg.fixed) - set(names)
    if unknown:
        raise ParameterError(f"cannot fix unknown parameters {sorted(unknown)}")

    if start is not None:
        starts = np.atleast_2d(np.asarray(start, dtype=float))
    else:
        starts = lhs_candidates(cfg, seed, family)
        if cfg.fixed_init_inverse_scale is not None:
            starts[:, names.index("inv_a")] = cfg.fixed_init_inverse_scale
        starts[:, names.index("tau1")] = cfg.init_taus[0]
        starts[:, names.index("tau2")] = cfg.init_taus[1]
    for name, v in cfg.fixed.items():
        starts[:, names.index(name)] = v

    fixed_idx = [names.index(n) for n in cfg.fixed]
    free = np.array([i for i in range(len(names)) if i not in fixed_idx], dtype=int)
    placeholders = starts.copy()
    for i in fixed_idx:
        placeholders[:, i] = reparam.neutral(i)
    z_starts = np.array([reparam.to_unconstrained(s) for s in placeholders])
    objective = _Objective(problem, reparam, z_starts[0].copy(), free, cfg,
                           {names.index(n): float(v) for n, v in cfg.fixed.items()})
    try:
        values = _evaluate_candidates(objective, z_starts[:, free])
        if np.all(values >= PENALTY):
            raise EstimationError("every starting candidate gives a non-positive-definite "
                                  "covariance; widen or change the starting box")
        best = int(np.argmin(values))  # first index wins ties
        objective.template = z_starts[best].copy()
        trace = [] if cfg.record_trace else None
        cache = {}

        def fun(zf):
            f, g = objective.value_and_grad(zf)
            cache[zf.tobytes()] = f
            return f, g

        def callback(zf):
            if trace is not None:
                trace.append((objective.vector(zf), cache.get(zf.tobytes(), math.nan)))

        if trace is not None:
            trace.append((starts[best].copy(), float(values[best])))
        res = optimize.minimize(fun, z_starts[best, free], jac=True, method="L-BFGS-B",
                                callback=callback,
                                options={"maxiter": cfg.max_iters, "ftol": cfg.ftol,
                                         "gtol": cfg.gtol})
        theta = objective.vector(res.x)
        nll, beta = problem(build_model(family, theta), return_beta=True)
    finally:
        objective.close()
    return FitResult(family=family, theta_hat=theta, nll=float(nll),
                     iterations=int(res.nit), converged=bool(res.success),
                     message=str(res.message), lhs_candidates_evaluated=len(starts),
                     start=starts[best].copy(), beta=beta, trace=trace,
                     likelihood=problem.method)


def simulate_like(data, model, seed):
    """A new dataset with the same locations and replicate count as ``data``."""
    if isinstance(data, GridObservations):
        vals = sim.simulate_values(data.grid.locations(), model, data.n_reps, seed)
        return GridObservations(data.grid, vals.reshape(data.values.shape))
    vals = sim.simulate_values(data.locations, model, data.n_reps, seed)
    return ObservationSet(data.locations, vals)


def derive_seed(seed, *key):
    """Integer sub-seed for (seed, key...), stable across runs."""
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key))
    return int(ss.generate_state(1, dtype=np.uint32)[0])


@dataclass
class BootstrapResult:
    se: np.ndarray
    estimates: np.ndarray
    n_failed: int
    param_names: tuple


def bootstrap_se(fitted, data, B, seed, cfg=None, replicate_seeds=None, max_fail=0.2):
    """Parametric-bootstrap standard errors of ``fitted``.

    ``B`` datasets shaped like ``data`` are simulated from the fitted
    model and refitted.  Replicate ``b`` uses ``replicate_seeds[b]`` when
    given, else a sub-seed of ``seed``.  Failed refits are skipped;
    more than ``max_fail * B`` failures raise :class:`EstimationError`.
    """
    if B < 2:
        raise ValueError("bootstrap needs B >= 2")
    cfg = cfg or FitConfig()
    if replicate_seeds is None:
        replicate_seeds = [derive_seed(seed, b) for b in range(B)]
    elif len(replicate_seeds) != B:
        raise ValueError("replicate_seeds must have length B")
    model = fitted.model
    estimates = []
    failed = 0
    for b in range(B):
        s = replicate_seeds[b]
        try:
            boot = simulate_like(data, model, s)
            res = fit_mle(boot, fitted.family, cfg, seed=s)
        except (TangentMaternError, np.linalg.LinAlgError):
            failed += 1
            continue
        estimates.append(res.theta_hat)
    if failed > max_fail * B:
        raise EstimationError(f"{failed} of {B} bootstrap refits failed")
    est = np.array(estimates)
    return BootstrapResult(se=est.std(axis=0, ddof=1), estimates=est, n_failed=failed,
                           param_names=fitted.param_names)


def config_from_mapping(values):
    """FitConfig from string values (as read from a config file)."""
    kwargs = {}
    types = {f.name: f.type for f in fields(FitConfig)}
    for key, raw in values.items():
        if key not in types:
            raise ValueError(f"unknown fit option {key!r}")
        default = getattr(FitConfig(), key)
        if key == "fixed":
            kwargs[key] = {k.strip(): float(v) for k, v in
                           (item.split(":") for item in raw.split(",") if item.strip())}
        elif isinstance(default, bool):
            kwargs[key] = raw.strip().lower() in ("1", "true", "yes")
        elif isinstance(default, tuple):
            kwargs[key] = tuple(float(v) for v in raw.split(","))
        elif isinstance(default, int):
            kwargs[key] = int(raw)
        elif key == "likelihood":
            kwargs[key] = raw.strip()
        elif raw.strip().lower() == "none":
            kwargs[key] = None
        else:
            kwargs[key] = float(raw)
    return replace(FitConfig(), **kwargs)
