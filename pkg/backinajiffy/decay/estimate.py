"""
Decay regressions.

Every specification regresses the log outcome on distance terms::

    linear            log y = α + β₁ d
    quadratic         log y = α + β₁ d + β₂ d²
    both              log y = α + β₁ d + γ log d
    log_linear        log y + log d = α + β₁ d
    geometric         log y + 2 log d = α + β₁ d
    asymmetric        log y = α + β_down d·1[θ < π/2] + β_up d·1[θ ≥ π/2]
    wind_interaction  log y = α + β₁ d + β_w d·wind_speed

plus optional pass-through covariates. The decay parameter is κ_s = −β₁ (asymmetric: −β_down).
"""
import enum
import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence, Dict, Tuple, List, Optional, Mapping, Any, Union

import numpy as np
import pandas as pd
import statsmodels.api as sm

from .const import PROJECT_LOGGER_NAME, Z_CRIT
from .exc import ConfigurationError, InputError, SingularDesignError, InsufficientDataError, EstimationError

DECAY_COLUMNS = ('distance', 'distance_down')

MAX_GN_ITER = 200
GN_TOL = 1e-10
EXACT_FIT_RTOL = 1e-24
"""Objective below this fraction of Σ (log y)² counts as an exact fit."""


def module_logger():
    return logging.getLogger(PROJECT_LOGGER_NAME + '.' + __name__)


class SpecKind(str, enum.Enum):
    LINEAR = 'linear'
    QUADRATIC = 'quadratic'
    BOTH = 'both'
    LOG_LINEAR = 'log_linear'
    GEOMETRIC = 'geometric'
    ASYMMETRIC = 'asymmetric'
    WIND_INTERACTION = 'wind_interaction'

    @classmethod
    def parse(cls, s: Union[str, 'SpecKind']) -> 'SpecKind':
        try:
            return cls(str(s.value if isinstance(s, SpecKind) else s).strip().lower())
        except ValueError as exc:
            raise ConfigurationError(f"Unknown specification '{s}'") from exc

    @property
    def n_coefficients(self) -> int:
        """Coefficients including the constant, without covariates."""
        return 3 if self in (SpecKind.QUADRATIC, SpecKind.BOTH, SpecKind.ASYMMETRIC, SpecKind.WIND_INTERACTION) else 2

    @classmethod
    def parse_list(cls, ss: Sequence[str]) -> Tuple['SpecKind', ...]:
        return tuple(cls.parse(s) for s in ss)


@dataclass(frozen=True)
class Design:
    """
    :ivar y: Log outcome, offset already subtracted
    :ivar X: Regressors including the constant
    :ivar dropped_nonpositive: Rows dropped because the outcome cannot be logged
    """
    y: np.ndarray
    X: pd.DataFrame
    spec: SpecKind
    dropped_nonpositive: int = 0


@dataclass(frozen=True)
class RegressionFit:
    coefficients: Dict[str, float]
    robust_se: Dict[str, float]
    cov: np.ndarray = field(repr=False)
    n: int
    rss: float
    r2: float
    aic: float
    spec: SpecKind
    residuals: np.ndarray = field(repr=False, default=None, compare=False)

    @property
    def columns(self) -> Tuple[str, ...]:
        return tuple(self.coefficients)

    def as_record(self) -> Dict:
        return fit_result_record(self)


@dataclass(frozen=True)
class DecayEstimate:
    kappa_s: float
    se: float
    t_stat: float
    n: int
    stratum: str = 'pooled'
    spec: str = ''

    @property
    def significant(self) -> bool:
        return abs(self.t_stat) >= Z_CRIT

    @property
    def applies(self) -> bool:
        """Positive and significant decay; the diffusion framework is not rejected."""
        return self.kappa_s > 0 and self.significant

    def as_record(self) -> Dict:
        return {'kappa_s': self.kappa_s, 'se': self.se, 't_stat': self.t_stat, 'n': self.n,
                'stratum': self.stratum, 'spec': self.spec, 'significant': self.significant,
                'applies': self.applies}

    @classmethod
    def from_record(cls, d: Mapping[str, Any]) -> 'DecayEstimate':
        """
        Builds an estimate from a mapping with ``kappa_s`` and ``se``; ``t_stat`` is recomputed when absent.
        """
        try:
            kappa = float(d['kappa_s'])
            se = float(d['se'])
        except (KeyError, TypeError, ValueError) as exc:
            raise InputError('Decay record needs numeric kappa_s and se') from exc
        if se < 0:
            raise InputError('Decay record has negative se')
        return cls(kappa_s=kappa, se=se, t_stat=_t(kappa, se), n=int(d.get('n') or 0),
                   stratum=str(d.get('stratum') or 'pooled'), spec=str(d.get('spec') or ''))


@dataclass(frozen=True)
class AttEstimate:
    att: float
    se: float
    threshold_km: float
    scale: str
    n_near: int = 0
    n_far: int = 0
    near_mean: float = math.nan
    far_mean: float = math.nan

    def __post_init__(self):
        if not self.threshold_km > 0:
            raise ConfigurationError('threshold_km must be positive')


@dataclass(frozen=True)
class RankedFit:
    fit: RegressionFit
    rank: int
    delta_aic: float

    def as_record(self) -> Dict:
        return {'rank': self.rank, 'spec': self.fit.spec.value, 'aic': self.fit.aic, 'delta_aic': self.delta_aic}


@dataclass(frozen=True)
class SuperpositionFit:
    kappa_s: float
    scales: Dict[str, float]
    objective: float
    iterations: int
    converged: bool
    n: int
    kappa0: float
    stalled: bool = False


@dataclass(frozen=True)
class StratifiedDecay:
    """
    :ivar skipped: Reason per stratum that could not be fitted
    """
    estimates: Tuple[DecayEstimate, ...]
    skipped: Dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class TemporalStability:
    per_period: Tuple[DecayEstimate, ...]
    pooled: DecayEstimate
    max_pairwise_diff: float
    skipped: Dict[str, str] = field(default_factory=dict)


def _t(kappa: float, se: float) -> float:
    if math.isnan(se):
        return math.nan
    if se > 0:
        return kappa / se
    if kappa == 0:
        return 0.0
    return math.copysign(math.inf, kappa)


def _regressors(frame: pd.DataFrame, spec: SpecKind) -> Tuple[Dict[str, np.ndarray], np.ndarray]:
    d = frame['distance'].to_numpy(dtype=float)
    offset = np.zeros_like(d)
    if spec == SpecKind.LINEAR:
        cols = {'distance': d}
    elif spec == SpecKind.QUADRATIC:
        cols = {'distance': d, 'distance_sq': d ** 2}
    elif spec == SpecKind.BOTH:
        cols = {'distance': d, 'log_distance': np.log(d)}
    elif spec == SpecKind.LOG_LINEAR:
        cols = {'distance': d}
        offset = -np.log(d)
    elif spec == SpecKind.GEOMETRIC:
        cols = {'distance': d}
        offset = -2.0 * np.log(d)
    elif spec == SpecKind.ASYMMETRIC:
        if 'theta' not in frame.columns:
            raise InputError('The asymmetric specification needs a theta column (set a wind bearing)')
        down = frame['theta'].to_numpy(dtype=float) < math.pi / 2
        cols = {'distance_down': d * down, 'distance_up': d * ~down}
    else:
        if 'wind_speed' not in frame.columns:
            raise InputError('The wind_interaction specification needs a wind_speed column')
        cols = {'distance': d, 'distance_wind': d * frame['wind_speed'].to_numpy(dtype=float)}
    return cols, offset


def build_design(frame: pd.DataFrame, spec: Union[SpecKind, str], covariates: Sequence[str] = ()) -> Design:
    """
    Builds the regression design for a spec from a frame with ``value`` and ``distance`` columns.

    Rows with a non-positive outcome cannot be logged and are dropped with a warning.
    """
    spec = SpecKind.parse(spec)
    for c in ('value', 'distance', *covariates):
        if c not in frame.columns:
            raise InputError(f"Column '{c}' missing for the {spec.value} specification")
    if (frame['distance'] <= 0).any():
        raise InputError('Distances must be positive')
    pos = frame['value'] > 0
    n_drop = int((~pos).sum())
    if n_drop:
        module_logger().warning('Dropped observations with non-positive outcome',
                                extra={'data': {'count': n_drop, 'spec': spec.value}})
        frame = frame[pos]
    cols, offset = _regressors(frame, spec)
    X = pd.DataFrame({'const': np.ones(len(frame))})
    for k, v in cols.items():
        X[k] = v
    for c in covariates:
        X[c] = frame[c].to_numpy(dtype=float)
    y = np.log(frame['value'].to_numpy(dtype=float)) - offset
    return Design(y=y, X=X, spec=spec, dropped_nonpositive=n_drop)


def _collinear_columns(X: np.ndarray, names: Sequence[str]) -> List[str]:
    out = []
    rank = 0
    for i in range(X.shape[1]):
        r = np.linalg.matrix_rank(X[:, :i + 1])
        if r == rank:
            out.append(names[i])
        rank = r
    return out


def aic(n: int, rss: float, k: int) -> float:
    """
    n·ln(RSS/n) + 2(k+1); the error variance counts as a parameter. RSS is floored at the smallest positive double.
    """
    return n * math.log(max(rss, np.finfo(float).tiny) / n) + 2.0 * (k + 1)


def fit_ols(design: Design, spec: Optional[SpecKind] = None) -> RegressionFit:
    """
    Least squares with HC1 covariance, (n/(n−k))·(X'X)⁻¹ X' diag(e²) X (X'X)⁻¹.

    :raises InsufficientDataError: if n does not exceed the number of coefficients
    :raises SingularDesignError: if the design is rank deficient
    """
    spec = SpecKind.parse(spec or design.spec)
    X = design.X.to_numpy(dtype=float)
    names = list(design.X.columns)
    n, k = X.shape
    if n <= k:
        raise InsufficientDataError(f'{spec.value}: {n} observations for {k} coefficients')
    if np.linalg.matrix_rank(X) < k:
        cc = _collinear_columns(X, names)
        raise SingularDesignError(f"{spec.value}: design is rank deficient, collinear columns: {', '.join(cc)}",
                                  columns=cc)
    res = sm.OLS(design.y, X).fit(cov_type='HC1')
    params = np.asarray(res.params, dtype=float)
    cov = np.asarray(res.cov_params(), dtype=float)
    resid = np.asarray(res.resid, dtype=float)
    rss = float(resid @ resid)
    return RegressionFit(
        coefficients=dict(zip(names, params.tolist())),
        robust_se=dict(zip(names, np.sqrt(np.clip(np.diag(cov), 0.0, None)).tolist())),
        cov=cov,
        n=n,
        rss=rss,
        r2=float(res.rsquared),
        aic=aic(n, rss, k),
        spec=spec,
        residuals=resid,
    )


def fit_spec(frame: pd.DataFrame, spec: Union[SpecKind, str], covariates: Sequence[str] = ()) -> RegressionFit:
    return fit_ols(build_design(frame, spec, covariates))


def extract_decay(fit: RegressionFit, stratum: str = 'pooled') -> DecayEstimate:
    """
    κ_s = −β on the distance column (``distance_down`` for the asymmetric spec).
    """
    for c in DECAY_COLUMNS:
        if c in fit.coefficients:
            kappa = -fit.coefficients[c]
            # −0.0 reads badly in reports
            kappa = 0.0 if kappa == 0 else kappa
            se = fit.robust_se[c]
            return DecayEstimate(kappa_s=kappa, se=se, t_stat=_t(kappa, se), n=fit.n, stratum=stratum,
                                 spec=fit.spec.value)
    raise EstimationError(f'Fit of {fit.spec.value} has no distance coefficient')


def compare_specs(frame: pd.DataFrame, specs: Sequence[Union[SpecKind, str]],
                  covariates: Sequence[str] = ()) -> List[RankedFit]:
    """
    Fits every spec and ranks by AIC, ascending. Ties keep the given spec order.
    """
    specs = [SpecKind.parse(s) for s in specs]
    if len(specs) < 2:
        raise ConfigurationError('Comparing specifications needs at least two of them')
    fits = [fit_spec(frame, s, covariates) for s in specs]
    order = sorted(range(len(fits)), key=lambda i: (fits[i].aic, i))
    best = fits[order[0]].aic
    return [RankedFit(fit=fits[i], rank=r + 1, delta_aic=fits[i].aic - best) for r, i in enumerate(order)]


def fit_result_record(fit: RegressionFit) -> Dict:
    return {
        'spec': fit.spec.value,
        'n': fit.n,
        'coefficients': {k: {'estimate': v, 'se': fit.robust_se[k]} for k, v in fit.coefficients.items()},
        'rss': fit.rss,
        'r2': fit.r2,
        'aic': fit.aic,
    }


def _initial_kappa(dist: np.ndarray, y: np.ndarray) -> float:
    d = dist.min(axis=1)
    A = np.column_stack([np.ones_like(d), d])
    coef = np.linalg.lstsq(A, y + np.log(d), rcond=None)[0]
    return float(-coef[1])


def fit_superposition(dist: np.ndarray, values: Sequence[float], source_ids: Sequence[str],
                      kappa0: Optional[float] = None, max_iter: int = MAX_GN_ITER,
                      tol: float = GN_TOL) -> SuperpositionFit:
    """
    Fits log y_i ≈ log Σ_j s_j·exp(−κ d_ij)/d_ij over κ and scales s_j ≥ 0.

    Damped Gauss-Newton with an analytic Jacobian and Armijo backtracking; a step that would make a scale
    negative is projected to zero. Stops when the objective changes by less than `tol` relative after a full
    step, when the fit is exact to rounding, when the line search finds no descent (``stalled``; converged only if
    the predicted decrease is below `tol` relative), or after `max_iter` iterations. If not converged the best
    iterate is returned.

    :param dist: Distances in km, shape (n, m), one column per source
    :param kappa0: Starting κ; by default from a log-linear fit on the nearest-source distance
    """
    dist = np.asarray(dist, dtype=float)
    values = np.asarray(values, dtype=float)
    if dist.ndim != 2 or dist.shape[0] != values.size or dist.shape[1] != len(source_ids):
        raise ConfigurationError('Need one distance row per observation and one column per source')
    n, m = dist.shape
    if n <= m + 1:
        raise InsufficientDataError(f'Superposition fit: {n} observations for {m + 1} parameters')
    if (values <= 0).any():
        raise InputError('Superposition fit needs positive outcomes')
    if (dist <= 0).any():
        raise InputError('Distances must be positive')
    lgg = module_logger()
    y = np.log(values)

    if kappa0 is None:
        kappa0 = _initial_kappa(dist, y)
        if not kappa0 > 0:
            kappa0 = 1.0 / float(np.median(dist.min(axis=1)))
            lgg.warning('Nearest-source fit gives no positive decay, starting from 1/median distance',
                        extra={'data': {'kappa0': kappa0}})
    elif not kappa0 > 0:
        raise ConfigurationError('Initial kappa must be positive')

    def _model(x):
        g = np.exp(-x[0] * dist) / dist
        return g, g @ x[1:]

    def _objective(x):
        _, s = _model(x)
        if (s <= 0).any():
            return math.inf
        r = y - np.log(s)
        return float(r @ r)

    g0 = np.exp(-kappa0 * dist) / dist
    s_common = math.exp(float(np.mean(y - np.log(g0.sum(axis=1)))))
    x = np.concatenate([[kappa0], np.full(m, s_common)])
    f = _objective(x)
    exact = EXACT_FIT_RTOL * float(y @ y)
    converged = stalled = False
    it = 0
    for it in range(1, max_iter + 1):
        g, s = _model(x)
        r = y - np.log(s)
        # Jacobian of the model log S w.r.t. (κ, s_1..s_m)
        J = np.empty((n, m + 1))
        J[:, 0] = -(g * dist) @ x[1:] / s
        J[:, 1:] = g / s[:, None]
        norms = np.linalg.norm(J, axis=0)
        norms[norms == 0] = 1.0
        p = np.linalg.lstsq(J / norms, r, rcond=None)[0] / norms
        grad = -2.0 * J.T @ r
        alpha = 1.0
        while True:
            x_new = x + alpha * p
            x_new[1:] = np.maximum(x_new[1:], 0.0)
            f_new = _objective(x_new)
            if f_new <= f + 1e-4 * grad @ (x_new - x):
                break
            alpha *= 0.5
            if alpha < 1e-16:
                x_new, f_new = x, f
                stalled = True
                break
        change = abs(f - f_new) / max(f, np.finfo(float).tiny)
        x, f = x_new, f_new
        if stalled:
            # No descent along the Gauss-Newton direction: fine at a stationary point, a failure elsewhere
            converged = f <= exact or abs(float(grad @ p)) <= tol * f
            break
        # A heavily damped step may change little without being near the optimum
        if f <= exact or (change < tol and alpha == 1.0):
            converged = True
            break
    if not converged:
        lgg.warning('Superposition fit did not converge, reporting the best iterate',
                    extra={'data': {'iterations': it, 'objective': f}})
    return SuperpositionFit(kappa_s=float(x[0]), scales=dict(zip(source_ids, x[1:].tolist())), objective=f,
                            iterations=it, converged=converged, n=n, kappa0=float(kappa0), stalled=stalled)


def att_stage1(frame: pd.DataFrame, threshold_km: float, scale: str = 'log') -> AttEstimate:
    """
    Near (d < threshold) minus far mean outcome, in levels or logs, with a Welch standard error.

    A side with a single observation contributes no variance.
    """
    if not threshold_km > 0:
        raise ConfigurationError('threshold_km must be positive')
    if scale not in ('level', 'log'):
        raise ConfigurationError(f"Unknown ATT scale '{scale}'")
    v = frame['value'].to_numpy(dtype=float)
    d = frame['distance'].to_numpy(dtype=float)
    if scale == 'log':
        keep = v > 0
        v, d = np.log(v[keep]), d[keep]
    near = v[d < threshold_km]
    far = v[d >= threshold_km]
    if near.size == 0 or far.size == 0:
        raise InsufficientDataError(f'ATT needs observations on both sides of {threshold_km:g} km')

    def _var(a):
        return float(np.var(a, ddof=1)) / a.size if a.size > 1 else 0.0

    return AttEstimate(att=float(near.mean() - far.mean()), se=math.sqrt(_var(near) + _var(far)),
                       threshold_km=float(threshold_km), scale=scale, n_near=int(near.size), n_far=int(far.size),
                       near_mean=float(near.mean()), far_mean=float(far.mean()))


def define_treatment(distances: Sequence[float], d_star: float) -> np.ndarray:
    """
    1 where distance < d* (strict), else 0.
    """
    if not d_star > 0:
        raise ConfigurationError('d* must be positive')
    return (np.asarray(distances, dtype=float) < d_star).astype(int)


def control_indicator(distances: Sequence[float], d_star: float, buffer: float = 2.0) -> np.ndarray:
    """
    1 where distance > buffer·d*; units between d* and buffer·d* are neither treated nor control.
    """
    if not d_star > 0:
        raise ConfigurationError('d* must be positive')
    if buffer < 1:
        raise ConfigurationError('Control buffer must be >= 1')
    return (np.asarray(distances, dtype=float) > buffer * d_star).astype(int)


def stratified_decay(frame: pd.DataFrame, strata: Union[str, pd.Series], spec: Union[SpecKind, str],
                     covariates: Sequence[str] = (), labels: Optional[Sequence[str]] = None) -> StratifiedDecay:
    """
    Independent decay fits per stratum, in sorted label order.

    :param strata: Column name or a series of labels aligned with `frame`
    :param labels: Expected labels; those without observations are reported as skipped
    """
    spec = SpecKind.parse(spec)
    lab = frame[strata] if isinstance(strata, str) else pd.Series(strata, index=frame.index)
    lab = lab.fillna('unassigned').astype(str)
    present = sorted(lab.unique())
    skipped = {}
    estimates = []
    for label in sorted(set(present) | set(labels or ())):
        if label not in present:
            skipped[label] = 'no observations'
            continue
        try:
            fit = fit_spec(frame[lab == label], spec, covariates)
        except EstimationError as exc:
            skipped[label] = str(exc)
            continue
        estimates.append(extract_decay(fit, stratum=label))
    if skipped:
        module_logger().warning('Skipped strata', extra={'data': skipped})
    return StratifiedDecay(estimates=tuple(estimates), skipped=skipped)


def temporal_splits(frame: pd.DataFrame, spec: Union[SpecKind, str], periods: Optional[Sequence[int]] = None,
                    covariates: Sequence[str] = ()) -> TemporalStability:
    """
    Decay per year (column ``year``) and pooled over the selected years.
    """
    spec = SpecKind.parse(spec)
    if 'year' not in frame.columns:
        raise InputError("Temporal splits need a 'year' column")
    years = sorted(int(y) for y in (periods if periods is not None else frame['year'].unique()))
    sel = frame[frame['year'].isin(years)]
    res = stratified_decay(sel, sel['year'].astype(int).map(lambda y: f'{y:04d}'), spec, covariates,
                           labels=[f'{y:04d}' for y in years])
    if not res.estimates:
        raise InsufficientDataError('No period has enough observations')
    pooled = extract_decay(fit_spec(sel, spec, covariates), stratum='pooled')
    kk = [e.kappa_s for e in res.estimates]
    diff = max((abs(a - b) for a, b in itertools.combinations(kk, 2)), default=0.0)
    return TemporalStability(per_period=res.estimates, pooled=pooled, max_pairwise_diff=diff, skipped=res.skipped)
