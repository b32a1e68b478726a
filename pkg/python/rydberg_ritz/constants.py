# This file is part of rydberg_ritz.
#
# See the COPYRIGHT file at the top-level directory of this distribution
# for details of code ownership.
#
# This program is free software: you can redistribute it and/or modify
# it under the terms of the GNU General Public License as published by
# the Free Software Foundation, either version 3 of the License, or
# (at your option) any later version.
#
# This program is distributed in the hope that it will be useful,
# but WITHOUT ANY WARRANTY; without even the implied warranty of
# MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
# GNU General Public License for more details.
#
# You should have received a copy of the GNU General Public License
# along with this program.  If not, see <https://www.gnu.org/licenses/>.

"""Physical constants shared by every reduction and fit.

All frequencies and energies in this package are in MHz.
"""

__all__ = ["PhysicalConstants", "PhysicalConstantsConfig", "RYDBERG_RB85_MHZ", "GROUND_OFFSET_MHZ",
           "DEFAULT_SIGMA_MHZ", "checkFrequency"]

import dataclasses
import math

import lsst.pex.config as pexConfig

# R_Rb = 10 973 660.672 249 m^-1 times the defined speed of light.
RYDBERG_RB85_MHZ = 3289820706.19146

# 5S1/2 centre of mass to 5D5/2, added to third-step frequencies.
GROUND_OFFSET_MHZ = 770571549.6

# Total accumulated error of a level measurement.
DEFAULT_SIGMA_MHZ = 8.0


def checkFrequency(value, name="frequency"):
    """Return ``value`` as a `float`, rejecting NaN and infinities.

    Raises
    ------
    ValueError
        Raised if ``value`` is not finite.
    """
    value = float(value)
    if not math.isfinite(value):
        raise ValueError(f"{name} must be finite, got {value}")
    return value


@dataclasses.dataclass(frozen=True)
class PhysicalConstants:
    """Rydberg constant for 85Rb and the ground-state chain offset, in MHz.
    """

    rydbergRb85: float = RYDBERG_RB85_MHZ
    groundOffset: float = GROUND_OFFSET_MHZ

    def __post_init__(self):
        checkFrequency(self.rydbergRb85, "rydbergRb85")
        checkFrequency(self.groundOffset, "groundOffset")
        if self.rydbergRb85 <= 0:
            raise ValueError(f"rydbergRb85 must be positive, got {self.rydbergRb85}")

    def toDict(self):
        return {"rydberg_rb85_mhz": self.rydbergRb85, "ground_offset_mhz": self.groundOffset}

    @classmethod
    def fromDict(cls, data):
        """Build from a mapping using the report keys of `toDict`; missing
        keys take the default values.
        """
        return cls(rydbergRb85=float(data.get("rydberg_rb85_mhz", RYDBERG_RB85_MHZ)),
                   groundOffset=float(data.get("ground_offset_mhz", GROUND_OFFSET_MHZ)))


class PhysicalConstantsConfig(pexConfig.Config):
    """Overridable values of `PhysicalConstants`.
    """

    rydbergRb85 = pexConfig.Field(
        doc="Rydberg constant for 85Rb times c (MHz)",
        dtype=float,
        default=RYDBERG_RB85_MHZ,
        check=lambda x: x > 0,
    )
    groundOffset = pexConfig.Field(
        doc="5S1/2 centre of mass to 5D5/2 frequency added to third-step frequencies (MHz)",
        dtype=float,
        default=GROUND_OFFSET_MHZ,
        check=math.isfinite,
    )

    def makeConstants(self):
        """Return the configured `PhysicalConstants`.
        """
        return PhysicalConstants(rydbergRb85=self.rydbergRb85, groundOffset=self.groundOffset)
