"""Local maximum-likelihood (or MAP) fits of mixture models over sliding windows."""
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, Optional, Tuple

import numdifftools as ndt
import numpy as np
import pandas as pd
from scipy.optimize import minimize

from config import Config
from allelix.errors import AllelixError, DomainError, MissingEstimate, SingularInformation
from allelix.models.distributions import ModelKind
from allelix.models.mixture import LinearBias, bad_to_p, mixture_logpmf_array
from allelix.models.window import Orientation, build_window

logger = logging.getLogger(__name__)

SENTINEL = -1e18
KAPPA_MAX = 1e7
_STEP = np.finfo(float).eps ** (1.0 / 3.0)


@dataclass(frozen=True)
class FitSettings:
    model_kind: ModelKind = ModelKind.NB
    m: int = Config.WINDOW_SIZE
    alpha: float = Config.ALPHA
    l: int = Config.TRUNCATION
    optimizer_tol: float = Config.OPTIMIZER_TOL
    max_evals: int = Config.MAX_EVALS
    estimate_se: bool = False

    def __post_init__(self):
        object.__setattr__(self, 'model_kind', ModelKind.parse(self.model_kind))
        if not self.optimizer_tol > 0:
            raise DomainError(f"optimizer_tol must be positive, got {self.optimizer_tol}")
        if self.alpha < 0:
            raise DomainError(f"alpha must be >= 0, got {self.alpha}")
        if self.m < 1:
            raise DomainError(f"window size must be positive, got {self.m}")


@dataclass(frozen=True)
class ParameterVector:
    b: float
    a: float
    mu_or_p: float
    kappa: Optional[float] = None
    w: float = 1.0

    @classmethod
    def initial(cls, settings, bad):
        kappa = 100.0 if settings.model_kind is ModelKind.BETANB else None
        return cls(b=1.0, a=0.5 * settings.l, mu_or_p=bad_to_p(bad), kappa=kappa, w=0.8)

    def values(self, names):
        return np.array([getattr(self, name) for name in names], dtype=float)

    def with_values(self, names, values):
        return replace(self, **{name: float(v) for name, v in zip(names, values)})

    @property
    def bias(self):
        return LinearBias(self.b, self.a)


@dataclass
class WindowEstimate:
    orientation: Orientation
    bad: float
    fixed_value: int
    lo: int
    hi: int
    n_obs: int
    theta: ParameterVector
    loglik: float
    converged: bool
    std_errors: Optional[Dict[str, Optional[float]]] = None
    se_reliable: bool = True
    message: str = ''

    @property
    def usable(self):
        return math.isfinite(self.loglik)


def free_parameters(kind, p):
    """Names optimized in a standard fit. w is not identified when p = 0.5."""
    names = ['b', 'a']
    if ModelKind.parse(kind) is ModelKind.BETANB:
        names.append('kappa')
    if p != 0.5:
        names.append('w')
    return names


def kappa_lower_bound(p):
    """Keeps (1 - q) kappa > 1 for both mixture components q in {p, 1 - p}"""
    return max(1.01, 1.01 / (1.0 - max(p, 1.0 - p)))


def parameter_bounds(names, p):
    table = {
        'b': (0.01, 100.0),
        'a': (0.0, 1000.0),
        'kappa': (kappa_lower_bound(p), KAPPA_MAX),
        'w': (0.0, 1.0),
        'mu_or_p': (0.01, 0.99),
    }
    return [table[name] for name in names]


def window_loglik(theta, window, settings):
    """Multiplicity-weighted truncated mixture log-likelihood of a window"""
    if window.weight.size == 0:
        return 0.0
    try:
        values = mixture_logpmf_array(
            window.variable, window.fixed, theta.bias, settings.model_kind,
            theta.mu_or_p, theta.w, theta.kappa, settings.l
        )
    except (AllelixError, FloatingPointError, ValueError) as exc:
        logger.debug(f"log-likelihood undefined at {theta}: {exc}")
        return SENTINEL
    total = float(np.dot(window.weight, values))
    return total if math.isfinite(total) else SENTINEL


def map_penalty(kappa, alpha, y_fixed, n_obs):
    """n (ln 2b + 1/(kappa b) + 2 ln kappa), b = alpha n y, from a Laplace prior on 1/kappa"""
    if alpha == 0:
        return 0.0
    if not kappa > 0:
        raise DomainError(f"kappa must be positive, got {kappa}")
    if y_fixed == 0:
        raise DomainError("the MAP penalty is undefined at a fixed count of 0")
    scale = alpha * n_obs * y_fixed
    return n_obs * (math.log(2.0 * scale) + 1.0 / (kappa * scale) + 2.0 * math.log(kappa))


def numeric_gradient(fun, x, bounds=None):
    """Fourth-order central differences, one-sided near box bounds"""
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for i in range(x.size):
        h = _STEP * max(1.0, abs(x[i]))
        lo, hi = bounds[i] if bounds is not None else (-np.inf, np.inf)

        def at(step):
            shifted = x.copy()
            shifted[i] += step
            return fun(shifted)

        if x[i] - 2 * h >= lo and x[i] + 2 * h <= hi:
            grad[i] = (-at(2 * h) + 8 * at(h) - 8 * at(-h) + at(-2 * h)) / (12 * h)
        elif x[i] + 2 * h <= hi:
            grad[i] = (-3 * at(0.0) + 4 * at(h) - at(2 * h)) / (2 * h)
        else:
            grad[i] = (3 * at(0.0) - 4 * at(-h) + at(-2 * h)) / (2 * h)
    return grad


def numeric_hessian(fun, x):
    """Central-difference Hessian with base steps eps^(1/3) max(1, |x_i|), taken on scaled coordinates"""
    x = np.asarray(x, dtype=float)
    scale = np.maximum(1.0, np.abs(x))
    hess = ndt.Hessian(lambda u: fun(x + scale * u), step=_STEP, method='central')(np.zeros_like(x))
    return np.atleast_2d(hess) / np.outer(scale, scale)


def standard_errors_from_hessian(hess):
    """sqrt(diag((-H)^-1)); raises SingularInformation unless -H is positive definite"""
    info = -np.asarray(hess, dtype=float)
    try:
        chol = np.linalg.cholesky(info)
    except np.linalg.LinAlgError:
        raise SingularInformation("observed information is not positive definite")
    inv_chol = np.linalg.inv(chol)
    return np.sqrt(np.sum(inv_chol ** 2, axis=0))


def loglik_gradient(theta, window, settings, names):
    """Gradient of window_loglik with respect to ``names``"""
    p = bad_to_p(window.bad)
    bounds = parameter_bounds(names, p)
    return numeric_gradient(
        lambda v: window_loglik(theta.with_values(names, v), window, settings),
        theta.values(names), bounds
    )


def std_errors(theta_hat, window, settings, names=None):
    """Standard errors of the unpenalized fit; parameters on a bound get None"""
    p = bad_to_p(window.bad)
    names = names or free_parameters(settings.model_kind, p)
    bounds = dict(zip(names, parameter_bounds(names, p)))
    interior = []
    for name in names:
        value = getattr(theta_hat, name)
        lo, hi = bounds[name]
        h = _STEP * max(1.0, abs(value))
        if value - 8 * h > lo and value + 8 * h < hi:
            interior.append(name)
    result = {name: None for name in names}
    if not interior:
        return result
    hess = numeric_hessian(
        lambda v: window_loglik(theta_hat.with_values(interior, v), window, settings),
        theta_hat.values(interior)
    )
    for name, se in zip(interior, standard_errors_from_hessian(hess)):
        result[name] = float(se)
    return result


def _to_search(names, values):
    out = np.array(values, dtype=float)
    for i, name in enumerate(names):
        if name == 'kappa':
            out[i] = math.log(out[i])
    return out


def _from_search(names, values):
    out = np.array(values, dtype=float)
    for i, name in enumerate(names):
        if name == 'kappa':
            out[i] = math.exp(out[i])
    return out


def fit_window(window, settings, init, p=None):
    """Maximize the (penalized) window log-likelihood with SLSQP.

    kappa is searched on the log scale; p stays fixed at the BAD value
    unless given explicitly.

    Returns:
        WindowEstimate; failures are reported in it rather than raised
    """
    p = bad_to_p(window.bad) if p is None else p
    names = free_parameters(settings.model_kind, p)
    bounds = parameter_bounds(names, p)
    search_bounds = [(math.log(lo), math.log(hi)) if n == 'kappa' else (lo, hi)
                     for n, (lo, hi) in zip(names, bounds)]
    start = replace(init, mu_or_p=p)
    if settings.model_kind is not ModelKind.BETANB:
        start = replace(start, kappa=None)
    elif start.kappa is None:
        start = replace(start, kappa=100.0)
    if p == 0.5:
        start = replace(start, w=1.0)
    x0 = np.clip(_to_search(names, start.values(names)),
                 [lo for lo, _ in search_bounds], [hi for _, hi in search_bounds])
    x_min = float(window.fixed.min())
    n_obs = max(window.n_obs, 1)

    def objective(v):
        theta = start.with_values(names, _from_search(names, v))
        value = window_loglik(theta, window, settings)
        if settings.alpha > 0 and theta.kappa is not None:
            value -= map_penalty(theta.kappa, settings.alpha, window.fixed_value, window.n_obs)
        return -value / n_obs

    def gradient(v):
        return numeric_gradient(objective, v, search_bounds)

    constraint = {'type': 'ineq', 'fun': lambda v: v[0] * x_min + v[1] - 1e-8}
    try:
        res = minimize(objective, x0, jac=gradient, method='SLSQP', bounds=search_bounds,
                       constraints=[constraint],
                       options={'ftol': settings.optimizer_tol, 'maxiter': settings.max_evals})
        theta = start.with_values(names, _from_search(names, res.x))
        converged, message = bool(res.success), str(res.message)
    except (ValueError, FloatingPointError) as exc:
        theta, converged, message = start, False, f"optimizer failed: {exc}"
    loglik = window_loglik(theta, window, settings)
    if loglik <= SENTINEL:
        loglik, converged = float('nan'), False
    if window.n_unique < 2:
        converged = False
        message = 'single unique count: parameters not identified'
    estimate = WindowEstimate(
        orientation=window.orientation, bad=window.bad, fixed_value=window.fixed_value,
        lo=window.lo, hi=window.hi, n_obs=window.n_obs, theta=theta, loglik=loglik,
        converged=converged, message=message,
        se_reliable=not (settings.alpha > 0 and settings.model_kind is ModelKind.BETANB),
    )
    if settings.estimate_se and estimate.usable:
        try:
            estimate.std_errors = std_errors(theta, window, settings, names)
        except SingularInformation as exc:
            estimate.message = f"{estimate.message}; {exc}".strip('; ')
    return estimate


@dataclass
class EstimateTable:
    kind: ModelKind
    l: int
    estimates: Dict[Tuple[str, float, int], WindowEstimate] = field(default_factory=dict)

    COLUMNS = ['orientation', 'bad', 'fixed_value', 'lo', 'hi', 'n_obs', 'b', 'a', 'p', 'kappa',
               'w', 'loglik', 'converged', 'se_b', 'se_a', 'se_kappa', 'se_w', 'se_reliable', 'message']

    def add(self, estimate):
        key = (Orientation(estimate.orientation).value, float(estimate.bad), int(estimate.fixed_value))
        self.estimates[key] = estimate

    def __len__(self):
        return len(self.estimates)

    def get(self, orientation, bad, fixed_value):
        return self.estimates.get((Orientation(orientation).value, float(bad), int(fixed_value)))

    def lookup(self, orientation, bad, fixed_value):
        """Exact estimate if usable, else the nearest usable one whose window covers fixed_value"""
        exact = self.get(orientation, bad, fixed_value)
        if exact is not None and exact.usable:
            return exact
        orientation = Orientation(orientation).value
        covering = [
            est for (o, b, _), est in self.estimates.items()
            if o == orientation and b == float(bad) and est.usable and est.lo <= fixed_value <= est.hi
        ]
        if not covering:
            raise MissingEstimate(f"no fitted window covers {orientation} fixed count {fixed_value} at BAD {bad}")
        return min(covering, key=lambda est: (abs(est.fixed_value - fixed_value), est.fixed_value))

    def to_frame(self):
        rows = []
        for key in sorted(self.estimates):
            est = self.estimates[key]
            se = est.std_errors or {}
            rows.append({
                'orientation': key[0], 'bad': key[1], 'fixed_value': key[2],
                'lo': est.lo, 'hi': est.hi, 'n_obs': est.n_obs,
                'b': est.theta.b, 'a': est.theta.a, 'p': est.theta.mu_or_p,
                'kappa': est.theta.kappa if est.theta.kappa is not None else np.nan,
                'w': est.theta.w, 'loglik': est.loglik, 'converged': bool(est.converged),
                'se_b': se.get('b'), 'se_a': se.get('a'), 'se_kappa': se.get('kappa'), 'se_w': se.get('w'),
                'se_reliable': bool(est.se_reliable), 'message': est.message,
            })
        floats = ['bad', 'b', 'a', 'p', 'kappa', 'w', 'loglik', 'se_b', 'se_a', 'se_kappa', 'se_w']
        ints = ['fixed_value', 'lo', 'hi', 'n_obs']
        return (pd.DataFrame(rows, columns=self.COLUMNS)
                .astype({**{c: 'float64' for c in floats}, **{c: 'int64' for c in ints},
                         'converged': 'bool', 'se_reliable': 'bool', 'message': 'object'}))

    @classmethod
    def from_frame(cls, frame, kind, l):
        table = cls(ModelKind.parse(kind), int(l))
        for row in frame.itertuples(index=False):
            kappa = None if pd.isna(row.kappa) else float(row.kappa)
            ses = {name: (None if pd.isna(getattr(row, f'se_{name}')) else float(getattr(row, f'se_{name}')))
                   for name in ('b', 'a', 'kappa', 'w')}
            table.add(WindowEstimate(
                orientation=Orientation(row.orientation), bad=float(row.bad),
                fixed_value=int(row.fixed_value), lo=int(row.lo), hi=int(row.hi), n_obs=int(row.n_obs),
                theta=ParameterVector(float(row.b), float(row.a), float(row.p), kappa, float(row.w)),
                loglik=float(row.loglik), converged=bool(row.converged),
                std_errors=ses if any(v is not None for v in ses.values()) else None,
                se_reliable=bool(row.se_reliable),
                message='' if pd.isna(row.message) else str(row.message),
            ))
        return table


def fit_global(table, settings):
    """Fit every (orientation, BAD, fixed count) window from l up to the largest fixed count.

    Each fit is warm-started from the previous fixed count's estimate.
    When the window's observations did not change and alpha is 0 the
    previous estimate is reused.
    """
    table = table.filtered(settings.l)
    result = EstimateTable(settings.model_kind, settings.l)
    failures = 0
    for orientation in (Orientation.REF, Orientation.ALT):
        for bad in table.bads:
            sub = table.for_bad(bad)
            _, top = sub.fixed_range(orientation)
            previous, previous_signature = None, None
            for fixed_value in range(settings.l, top + 1):
                try:
                    window = build_window(sub, orientation, fixed_value, settings.m, settings.l)
                except AllelixError as exc:
                    failures += 1
                    logger.warning(f"{orientation.value} BAD={bad} fixed={fixed_value}: {exc}")
                    continue
                signature = window.signature()
                if (previous is not None and settings.alpha == 0
                        and signature == previous_signature and previous.usable):
                    estimate = replace(previous, fixed_value=fixed_value)
                else:
                    init = (previous.theta if previous is not None and previous.usable
                            else ParameterVector.initial(settings, bad))
                    estimate = fit_window(window, settings, init)
                if not estimate.converged:
                    failures += 1
                    logger.debug(f"{orientation.value} BAD={bad} fixed={fixed_value} "
                                 f"did not converge: {estimate.message}")
                result.add(estimate)
                previous, previous_signature = estimate, signature
    logger.info(f"Fitted {len(result)} windows ({failures} flagged) with {settings.model_kind.value}")
    return result
