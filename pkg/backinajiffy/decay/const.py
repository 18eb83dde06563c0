PROJECT_NAME = 'Backinajiffy-Decay'
"""Name of the project. Also used in `setup.py`."""
PROJECT_VERSION = '1.0.0'
"""Version of the project. Also used in `setup.py`."""
PROJECT_LOGGER_NAME = 'decay'
"""Name of the project's root logger"""

EARTH_RADIUS_KM = 6371.0
"""Sphere radius of the haversine formula."""
MIN_DISTANCE_KM = 0.1
"""Distances below this are clamped; the point-source field diverges at r = 0."""
NEAR_FIELD_KM = 100.0
"""Near/far cut of the regional classification. Near iff distance < NEAR_FIELD_KM."""
COAL_STATES = frozenset(('WV', 'WY', 'KY', 'IN', 'PA', 'ND', 'MT', 'OH', 'TX', 'IL'))
"""Top 10 coal-generating states."""
EXCLUDED_STATES = ('AK', 'HI', 'PR', 'GU', 'VI', 'AS', 'MP')
"""Alaska, Hawaii and territories, dropped from monitor data."""

Z_CRIT = 1.96
"""Two-sided 5% critical value used for significance and confidence intervals."""
DEFAULT_EPSILON = 0.1
"""Default detection threshold."""
BOUNDARY_RATIO_CONSTANT = 3.32
"""Constant of d*/tau* = 3.32 lambda sqrt(delta)."""

PECLET_MAX = 1.0
REYNOLDS_MAX = 2000.0
DAMKOHLER_MAX = 1.0

REFERENCE_DISTANCE_KM = 1.0
"""r0 of the geometric spreading field, geometric = helmholtz * r0 / r."""
URBAN_SCALE_KM = 50.0
"""Length scale of the synthetic urban background."""

MIN_STRATUM_EXTRA = 10
"""A stratum needs at least k + MIN_STRATUM_EXTRA observations."""
MIN_PLACEBO_SEEDS = 20
