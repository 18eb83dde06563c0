"""
Closed-form concentration fields of a point source and the dimensionless numbers deciding whether they apply.

Units are km, days and source mass units throughout, so the decay parameter κ_s is per km.
"""
import enum
import logging
import math
from dataclasses import dataclass
from typing import Sequence, List, Dict, Optional

import numpy as np
import scipy.integrate
import scipy.sparse
import scipy.sparse.linalg
from scipy import special

from .const import PROJECT_LOGGER_NAME, PECLET_MAX, REYNOLDS_MAX, DAMKOHLER_MAX, REFERENCE_DISTANCE_KM
from .exc import DomainError, ConfigurationError, OracleError

MIN_FD_NODES = 200


def module_logger():
    return logging.getLogger(PROJECT_LOGGER_NAME + '.' + __name__)


class Regime(str, enum.Enum):
    DIFFUSIVE = 'diffusive'
    ADVECTIVE = 'advective'
    TURBULENT = 'turbulent'
    REACTIVE = 'reactive'
    MIXED = 'mixed'


@dataclass(frozen=True)
class PhysicalParams:
    """
    Transport parameters.

    :ivar diffusivity: Molecular diffusivity D, km²/day
    :ivar decay_rate: First-order decay λ₀ (≡ λ₁), 1/day
    :ivar wind_speed: U, km/day
    :ivar length_scale: L, km
    :ivar viscosity: ν, km²/day
    :ivar quad_decay: λ₂ of λ(C) = λ₁ + λ₂C; enters only as the quadratic regression term
    :ivar eddy_diffusivity: D_turb; the fields use D_eff = D + D_turb
    """
    diffusivity: float
    decay_rate: float = 0.0
    wind_speed: float = 0.0
    length_scale: float = 1.0
    viscosity: float = 1.0
    quad_decay: float = 0.0
    eddy_diffusivity: float = 0.0

    def __post_init__(self):
        for k in ('diffusivity', 'decay_rate', 'wind_speed', 'length_scale', 'viscosity', 'quad_decay',
                  'eddy_diffusivity'):
            if not math.isfinite(getattr(self, k)):
                raise ConfigurationError(f'{k} must be finite')
        if self.diffusivity <= 0 or self.length_scale <= 0 or self.viscosity <= 0:
            raise ConfigurationError('diffusivity, length_scale and viscosity must be positive')
        if self.decay_rate < 0 or self.wind_speed < 0 or self.quad_decay < 0 or self.eddy_diffusivity < 0:
            raise ConfigurationError('decay_rate, wind_speed, quad_decay and eddy_diffusivity must be >= 0')

    @property
    def effective_diffusivity(self) -> float:
        return self.diffusivity + self.eddy_diffusivity

    @property
    def kappa(self) -> float:
        """Spatial decay parameter κ_s = √(λ₀/D_eff), 1/km."""
        return math.sqrt(self.decay_rate / self.effective_diffusivity)


@dataclass(frozen=True)
class RegimeNumbers:
    reynolds: float
    peclet: float
    schmidt: float
    damkohler: float
    verdict: Regime

    @property
    def diffusive(self) -> bool:
        return self.verdict is Regime.DIFFUSIVE


@dataclass(frozen=True)
class FieldSample:
    r: float
    value: float
    theta: float = 0.0
    t: Optional[float] = None


def dimensionless(params: PhysicalParams) -> RegimeNumbers:
    """
    Reynolds, Péclet, Schmidt and Damköhler numbers and the regime they imply.

    The point-source decay model is valid iff Pe < 1, Re < 2000 and Da < 1 (strict). Otherwise the verdict names
    the single violated condition, or 'mixed' if several are violated. Diffusion enters as D_eff, the same as in
    κ_s and the fields, so Da = (κ_s·L)².
    """
    p = params
    d_eff = p.effective_diffusivity
    re_ = p.wind_speed * p.length_scale / p.viscosity
    pe = p.wind_speed * p.length_scale / d_eff
    sc = p.viscosity / d_eff
    da = p.decay_rate * p.length_scale ** 2 / d_eff
    failed = []
    if not pe < PECLET_MAX:
        failed.append(Regime.ADVECTIVE)
    if not re_ < REYNOLDS_MAX:
        failed.append(Regime.TURBULENT)
    if not da < DAMKOHLER_MAX:
        failed.append(Regime.REACTIVE)
    if not failed:
        verdict = Regime.DIFFUSIVE
    elif len(failed) == 1:
        verdict = failed[0]
    else:
        verdict = Regime.MIXED
    return RegimeNumbers(reynolds=re_, peclet=pe, schmidt=sc, damkohler=da, verdict=verdict)


def _check_r(r):
    r = np.asarray(r, dtype=float)
    if np.any(~(r > 0)):
        raise DomainError('Distance r must be > 0')
    return r


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def helmholtz_field(q: float, params: PhysicalParams, r):
    """
    Steady point-source concentration C(r) = Q/(4πDr)·exp(−κ_s r).

    :param q: Source strength Q ≥ 0
    :param r: Distance(s) in km, > 0
    """
    r = _check_r(r)
    d = params.effective_diffusivity
    return _out(q / (4.0 * math.pi * d * r) * np.exp(-params.kappa * r))


def geometric_field(q: float, params: PhysicalParams, r):
    """
    Point source with geometric spreading, C ∝ exp(−κ_s r)/r², normalized as helmholtz_field·(r₀/r), r₀ = 1 km.
    """
    r = _check_r(r)
    return _out(helmholtz_field(q, params, r) * (REFERENCE_DISTANCE_KM / r))


def bessel_k0(x):
    """
    Modified Bessel function of the second kind K₀.
    """
    return special.k0(x)


def bessel_k0_quadrature(x: float) -> float:
    """
    K₀(x) = ∫₀^∞ exp(−x cosh t) dt, evaluated by adaptive quadrature.
    """
    if x <= 0:
        raise DomainError('K0 needs x > 0')
    # exp(x) scaling keeps the integrand O(1) for large x
    val, _ = scipy.integrate.quad(lambda t: math.exp(-x * (math.cosh(t) - 1.0)), 0.0, np.inf,
                                  epsabs=0.0, epsrel=1e-12, limit=200)
    return val * math.exp(-x)


def advection_field(q: float, params: PhysicalParams, r, theta):
    """
    Two-dimensional steady plume in uniform wind:

    C = Q/(2πD)·exp(U r cosθ / 2D)·K₀(αr),  α = √((U/2D)² + λ₀/D)

    θ is the angle from the downwind axis. Evaluated with the exponentially scaled K₀ so large αr does not
    underflow before the prefactor is applied.
    """
    r = _check_r(r)
    theta = np.asarray(theta, dtype=float)
    d = params.effective_diffusivity
    u = params.wind_speed
    alpha = math.sqrt((u / (2.0 * d)) ** 2 + params.decay_rate / d)
    if alpha == 0.0:
        raise DomainError('advection_field needs wind or decay (alpha > 0)')
    ar = alpha * r
    val = q / (2.0 * math.pi * d) * special.k0e(ar) * np.exp(u * r * np.cos(theta) / (2.0 * d) - ar)
    return _out(val)


def pulse_field(q: float, params: PhysicalParams, r, t):
    """
    Instantaneous release of mass Q at t = 0:

    C(r, t) = Q·(4πDt)^(−3/2)·exp(−r²/4Dt − λ₀t)
    """
    r = _check_r(r)
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError('Time t must be > 0')
    d = params.effective_diffusivity
    return _out(q * (4.0 * math.pi * d * t) ** -1.5 * np.exp(-r ** 2 / (4.0 * d * t) - params.decay_rate * t))


def pulse_mass(q: float, params: PhysicalParams, t: float) -> float:
    """
    ∫₀^∞ 4πr² C(r, t) dr by quadrature; equals Q·exp(−λ₀t).
    """
    width = math.sqrt(4.0 * params.effective_diffusivity * t)
    val, _ = scipy.integrate.quad(lambda r: 4.0 * math.pi * r * r * pulse_field(q, params, r, t),
                                  1e-12 * width, 40.0 * width, epsabs=0.0, epsrel=1e-10, limit=200)
    return val


def pulse_peak_time(params: PhysicalParams, r: float) -> float:
    """
    Time of maximum concentration at distance r after a pulse.

    Solves λ₀t² + 3t/2 − r²/4D = 0; for λ₀ = 0 this is r²/(6D).
    """
    _check_r(r)
    d = params.effective_diffusivity
    lam = params.decay_rate
    c = r * r / (4.0 * d)
    if lam == 0.0:
        return c / 1.5
    # Citardauq form, stable for small lam
    return 2.0 * c / (1.5 + math.sqrt(2.25 + 4.0 * lam * c))


def step_field(q: float, params: PhysicalParams, r, t):
    """
    Continuous source of rate Q switched on at t = 0:

    C = Q/(8πDr)·[e^(−κr)·erfc(r/√(4Dt) − √(λ₀t)) + e^(κr)·erfc(r/√(4Dt) + √(λ₀t))]

    Tends to :func:`helmholtz_field` as t → ∞.
    """
    r = _check_r(r)
    t = np.asarray(t, dtype=float)
    if np.any(~(t > 0)):
        raise DomainError('Time t must be > 0')
    d = params.effective_diffusivity
    k = params.kappa
    a = r / np.sqrt(4.0 * d * t)
    b = np.sqrt(params.decay_rate * t)
    # e^{kr} erfc(a + b) = erfcx(a + b) e^{kr - (a + b)^2}
    second = special.erfcx(a + b) * np.exp(k * r - (a + b) ** 2)
    val = q / (8.0 * math.pi * d * r) * (np.exp(-k * r) * special.erfc(a - b) + second)
    return _out(val)


def superposed_field(sources: Sequence, params: PhysicalParams, distances):
    """
    Σ_j Q_j/(4πD d_j)·exp(−κ_s d_j) over the given sources.

    :param sources: Source records; their ``emission_rate`` is Q_j
    :param distances: Distances to each source, shape (m,) or (n, m)
    """
    d = _check_r(distances)
    q = np.array([s.emission_rate for s in sources], dtype=float)
    if d.shape[-1] != q.size:
        raise ConfigurationError('Need one distance per source')
    return _out(np.sum(helmholtz_field(1.0, params, d) * q, axis=-1))


def field_samples(q: float, params: PhysicalParams, r: Sequence[float], mode: str = 'helmholtz',
                  theta: float = 0.0, t: Optional[float] = None) -> List[FieldSample]:
    """
    Radial profile of one source field.

    :param mode: 'helmholtz', 'geometric', 'advection' (at angle `theta`), 'pulse' or 'step' (at time `t`)
    """
    r = _check_r(r)
    if mode == 'helmholtz':
        vals = helmholtz_field(q, params, r)
    elif mode == 'geometric':
        vals = geometric_field(q, params, r)
    elif mode == 'advection':
        vals = advection_field(q, params, r, np.full(r.shape, theta))
    elif mode in ('pulse', 'step'):
        if t is None:
            raise ConfigurationError(f'The {mode} field needs a time t')
        vals = (pulse_field if mode == 'pulse' else step_field)(q, params, r, np.full(r.shape, t))
    else:
        raise ConfigurationError(f"Unknown field mode '{mode}'")
    vals = np.atleast_1d(vals)
    return [FieldSample(r=float(a), value=float(v), theta=theta, t=t) for a, v in zip(np.atleast_1d(r), vals)]


@dataclass(frozen=True)
class OracleProfile:
    r: np.ndarray
    fd: np.ndarray
    exact: np.ndarray

    @property
    def max_rel_error(self) -> float:
        """Largest relative deviation over the interior nodes."""
        return float(np.max(np.abs(self.fd[1:-1] - self.exact[1:-1]) / self.exact[1:-1]))


def helmholtz_fd_oracle(q: float, params: PhysicalParams, r_grid: Sequence[float]) -> OracleProfile:
    """
    Finite-difference solution of D(C'' + 2C'/r) − λ₀C = 0 on a uniform grid.

    Central second-order differences. Inner boundary: C(r_min) equals the closed form. Outer boundary: the
    decaying-mode condition (rC)' = −κ_s·rC, which is C → 0 at infinity with the growing solution excluded,
    imposed with a ghost node. The tridiagonal system is solved with a sparse direct solver.

    :raises OracleError: for fewer than 200 nodes, a non-uniform grid or κ_s·h ≥ 0.5
    """
    r = np.asarray(r_grid, dtype=float)
    n = r.size
    if n < MIN_FD_NODES:
        raise OracleError(f'Grid too coarse: {n} nodes, need at least {MIN_FD_NODES}')
    if r[0] <= 0 or np.any(np.diff(r) <= 0):
        raise OracleError('Grid must be positive and strictly ascending')
    h = (r[-1] - r[0]) / (n - 1)
    if not np.allclose(np.diff(r), h, rtol=1e-6, atol=0.0):
        raise OracleError('Grid must be uniform')
    d = params.effective_diffusivity
    lam = params.decay_rate
    k = params.kappa
    if k * h >= 0.5:
        raise OracleError(f'Grid too coarse for kappa: kappa*h = {k * h:.3g}')

    lower = d * (1.0 / h ** 2 - 1.0 / (r * h))
    main = np.full(n, -2.0 * d / h ** 2 - lam)
    upper = d * (1.0 / h ** 2 + 1.0 / (r * h))
    rhs = np.zeros(n)
    exact = helmholtz_field(q, params, r)

    # Dirichlet at r_min
    main[0], upper[0], rhs[0] = 1.0, 0.0, exact[0]
    # Ghost node C_{n} = C_{n-2} - 2h (κ + 1/r) C_{n-1}
    rn = r[-1]
    lower_n = lower[-1] + upper[-1]
    main[-1] = main[-1] - upper[-1] * 2.0 * h * (k + 1.0 / rn)

    a = scipy.sparse.diags(
        [np.r_[lower[1:-1], lower_n], main, upper[:-1]],
        offsets=[-1, 0, 1], shape=(n, n), format='csc'
    )
    fd = scipy.sparse.linalg.spsolve(a, rhs)
    return OracleProfile(r=r, fd=np.asarray(fd), exact=np.asarray(exact))


def oracle_grid(params: PhysicalParams, nodes: int = 1000, lo: float = 0.01, hi: float = 10.0) -> np.ndarray:
    """
    Uniform grid on [lo/κ_s, hi/κ_s].
    """
    k = params.kappa
    if k <= 0:
        raise OracleError('Grid in units of 1/kappa needs kappa > 0')
    return np.linspace(lo / k, hi / k, nodes)


def fd_convergence(q: float, params: PhysicalParams, nodes: Sequence[int] = (250, 499, 997, 1993)) -> Dict:
    """
    Grid-doubling study of :func:`helmholtz_fd_oracle`.

    The error is measured on the nodes common to all grids (every node of the coarsest grid), so the ratios
    compare like with like.

    :return: Dict with the node counts, max relative errors, successive error ratios and observed orders
    """
    nodes = sorted(nodes)
    errors: List[float] = []
    for n in nodes:
        if (n - 1) % (nodes[0] - 1):
            raise OracleError('Node counts must refine the coarsest grid, n-1 multiples of n0-1')
        prof = helmholtz_fd_oracle(q, params, oracle_grid(params, n))
        step = (n - 1) // (nodes[0] - 1)
        fd = prof.fd[::step]
        ex = prof.exact[::step]
        errors.append(float(np.max(np.abs(fd[1:-1] - ex[1:-1]) / ex[1:-1])))
    ratios = [errors[i] / errors[i + 1] for i in range(len(errors) - 1)]
    orders = [math.log2(x) for x in ratios]
    module_logger().debug('Finite-difference convergence', extra={'data': {'nodes': nodes, 'errors': errors}})
    return {'nodes': nodes, 'errors': errors, 'ratios': ratios, 'orders': orders}
