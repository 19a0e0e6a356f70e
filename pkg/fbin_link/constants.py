"""Physical constants and unit conversions shared across modules."""

import math

#: Speed of light in vacuum (m/s), exact.
SPEED_OF_LIGHT = 299_792_458.0

#: Ratio between the FWHM and the standard deviation of a Gaussian.
FWHM_PER_SIGMA = 2.0 * math.sqrt(2.0 * math.log(2.0))

PS_PER_S = 10**12
