"""
Spatial and temporal treatment boundaries from a decay estimate.
"""
import math
from dataclasses import dataclass
from typing import Optional, Sequence, List, Dict

from .const import Z_CRIT, DEFAULT_EPSILON, BOUNDARY_RATIO_CONSTANT
from .estimate import DecayEstimate
from .exc import ConfigurationError, EstimationError


@dataclass(frozen=True)
class BoundaryEstimate:
    """
    d* = ln(1/ε)/κ_s with a delta-method interval.

    ``d_star`` is None when κ_s ≤ 0. ``valid`` additionally requires κ_s to be significant.
    """
    d_star: Optional[float]
    ci_low: Optional[float]
    ci_high: Optional[float]
    epsilon: float
    kappa_source: DecayEstimate
    valid: bool

    @property
    def verdict(self) -> str:
        if self.valid:
            return 'applies'
        if self.kappa_source.kappa_s <= 0:
            return 'reject: no positive decay'
        return 'reject: decay not significant'

    def as_record(self) -> Dict:
        return {'d_star': self.d_star, 'ci_low': self.ci_low, 'ci_high': self.ci_high, 'epsilon': self.epsilon,
                'valid': self.valid, 'verdict': self.verdict, 'decay': self.kappa_source.as_record()}


@dataclass(frozen=True)
class SensitivityPoint:
    epsilon: float
    d_star: Optional[float]


@dataclass(frozen=True)
class BoundaryRatioInputs:
    """
    :ivar treatment_intensity: λ, per unit time
    :ivar diffusion: δ, km² per unit time
    """
    treatment_intensity: float
    diffusion: float
    constant: float = BOUNDARY_RATIO_CONSTANT

    def __post_init__(self):
        if not (self.treatment_intensity > 0 and math.isfinite(self.treatment_intensity)):
            raise ConfigurationError('Treatment intensity must be positive')
        if not (self.diffusion > 0 and math.isfinite(self.diffusion)):
            raise ConfigurationError('Diffusion must be positive')


@dataclass(frozen=True)
class TreatmentRegions:
    treated_km: float
    control_km: float


def _check_epsilon(epsilon: float):
    if not 0.0 < epsilon < 1.0:
        raise ConfigurationError(f'epsilon must be in (0, 1), got {epsilon}')


def _d_star(kappa: float, epsilon: float) -> Optional[float]:
    return math.log(1.0 / epsilon) / kappa if kappa > 0 else None


def spatial_boundary(decay: DecayEstimate, epsilon: float = DEFAULT_EPSILON, z: float = Z_CRIT) -> BoundaryEstimate:
    """
    Distance at which the effect has fallen to fraction `epsilon` of its near-source level.

    The interval d*·(1 ∓ z·se/κ_s) is clipped at 0.

    :raises EstimationError: if the standard error is not positive
    """
    _check_epsilon(epsilon)
    if not decay.se > 0:
        raise EstimationError(f"Decay estimate '{decay.stratum}' has no positive standard error: {decay.se}")
    d = _d_star(decay.kappa_s, epsilon)
    if d is None:
        return BoundaryEstimate(d_star=None, ci_low=None, ci_high=None, epsilon=epsilon, kappa_source=decay,
                                valid=False)
    rel = z * decay.se / decay.kappa_s
    return BoundaryEstimate(d_star=d, ci_low=max(d * (1.0 - rel), 0.0), ci_high=d * (1.0 + rel), epsilon=epsilon,
                            kappa_source=decay, valid=decay.applies)


def epsilon_sensitivity(decay: DecayEstimate, epsilons: Sequence[float]) -> List[SensitivityPoint]:
    """
    d* for every ε, in the given order.
    """
    if not epsilons:
        raise ConfigurationError('Need at least one epsilon')
    for e in epsilons:
        _check_epsilon(e)
    return [SensitivityPoint(epsilon=float(e), d_star=_d_star(decay.kappa_s, e)) for e in epsilons]


def boundary_ratio(inputs: BoundaryRatioInputs, d_star: float) -> float:
    """
    Temporal boundary τ* from d*/τ* = 3.32·λ·√δ.
    """
    if not (d_star > 0 and math.isfinite(d_star)):
        raise ConfigurationError('d* must be positive')
    return d_star / (inputs.constant * inputs.treatment_intensity * math.sqrt(inputs.diffusion))


def treatment_regions(d_star: float, buffer: float = 2.0) -> TreatmentRegions:
    """
    Treated within d*; clean controls beyond buffer·d*.
    """
    if not d_star > 0:
        raise ConfigurationError('d* must be positive')
    if buffer < 1:
        raise ConfigurationError('Control buffer must be >= 1')
    return TreatmentRegions(treated_km=d_star, control_km=buffer * d_star)
