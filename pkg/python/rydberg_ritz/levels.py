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

"""Absolute level energies and the level-table file format.

A level table is a CSV file with header ``n,energy_mhz,sigma_mhz``; the
``sigma_mhz`` column may be omitted, in which case every level takes the
default uncertainty.
"""

__all__ = ["DatasetError", "MeasuredLevel", "LevelDataset", "validateDataset", "mergeDatasets",
           "readLevelTable", "writeLevelTable"]

import dataclasses

import numpy as np

from .constants import DEFAULT_SIGMA_MHZ, checkFrequency
from .tables import readTable, writeTable
from .task import TaskError


class DatasetError(TaskError, ValueError):
    """A set of levels violates the dataset rules (empty, duplicate n,
    non-positive energy or uncertainty).
    """
    pass


@dataclasses.dataclass(frozen=True)
class MeasuredLevel:
    """One absolute level energy, 5S1/2 centre of mass to nF7/2.

    Parameters
    ----------
    n : `int`
        Principal quantum number.
    energy : `float`
        Level energy (MHz).
    sigma : `float`
        One-sigma uncertainty of ``energy`` (MHz).
    """

    n: int
    energy: float
    sigma: float = DEFAULT_SIGMA_MHZ

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise DatasetError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))
        try:
            object.__setattr__(self, "energy", checkFrequency(self.energy, f"energy of n={self.n}"))
            object.__setattr__(self, "sigma", checkFrequency(self.sigma, f"sigma of n={self.n}"))
        except ValueError as e:
            raise DatasetError(str(e)) from None
        if self.energy <= 0:
            raise DatasetError(f"energy of n={self.n} must be positive, got {self.energy}")
        if self.sigma <= 0:
            raise DatasetError(f"sigma of n={self.n} must be positive, got {self.sigma}")


@dataclasses.dataclass(frozen=True)
class LevelDataset:
    """Levels ordered by strictly increasing n.

    Use `validateDataset` to build one from unsorted raw values.
    """

    levels: tuple

    def __post_init__(self):
        levels = tuple(self.levels)
        if not levels:
            raise DatasetError("a level dataset needs at least one level")
        for previous, level in zip(levels, levels[1:]):
            if level.n == previous.n:
                raise DatasetError(f"duplicate level n={level.n}")
            if level.n < previous.n:
                raise DatasetError(f"levels out of order: n={previous.n} before n={level.n}")
        object.__setattr__(self, "levels", levels)

    def __len__(self):
        return len(self.levels)

    def __iter__(self):
        return iter(self.levels)

    @property
    def n(self):
        """Principal quantum numbers as an `int` array."""
        return np.array([level.n for level in self.levels], dtype=int)

    @property
    def energies(self):
        return np.array([level.energy for level in self.levels], dtype=float)

    @property
    def sigmas(self):
        return np.array([level.sigma for level in self.levels], dtype=float)

    def select(self, minN=None, maxN=None):
        """Return the levels with ``minN <= n <= maxN``; either bound may be
        `None`.

        Raises
        ------
        DatasetError
            Raised if no level survives the selection.
        """
        kept = [level for level in self.levels
                if (minN is None or level.n >= minN) and (maxN is None or level.n <= maxN)]
        if not kept:
            raise DatasetError(f"no levels with {minN} <= n <= {maxN}")
        return LevelDataset(tuple(kept))

    def shifted(self, offset):
        """Return a copy with ``offset`` (MHz) added to every energy."""
        return LevelDataset(tuple(dataclasses.replace(level, energy=level.energy + offset)
                                  for level in self.levels))


def validateDataset(raw, defaultSigma=DEFAULT_SIGMA_MHZ):
    """Build a `LevelDataset` from ``(n, energy)`` or ``(n, energy, sigma)``
    tuples in any order.

    Parameters
    ----------
    raw : iterable of `tuple`
        Raw level values; a missing or `None` sigma takes ``defaultSigma``.
    defaultSigma : `float`, optional
        Uncertainty used when a row has none (MHz).

    Returns
    -------
    dataset : `LevelDataset`
        Levels sorted by n.

    Raises
    ------
    DatasetError
        Raised if ``raw`` is empty, lists an n twice, or holds a
        non-positive sigma or energy.
    """
    levels = []
    for row in raw:
        n, energy, *rest = row
        sigma = rest[0] if rest and rest[0] is not None else defaultSigma
        levels.append(MeasuredLevel(n=n, energy=energy, sigma=sigma))
    if not levels:
        raise DatasetError("a level dataset needs at least one level")
    seen = set()
    for level in levels:
        if level.n in seen:
            raise DatasetError(f"duplicate level n={level.n}")
        seen.add(level.n)
    return LevelDataset(tuple(sorted(levels, key=lambda level: level.n)))


def mergeDatasets(*datasets):
    """Combine datasets, e.g. an external low-n table with measured levels.

    Raises
    ------
    DatasetError
        Raised if the same n appears in more than one dataset.
    """
    return validateDataset([(level.n, level.energy, level.sigma)
                            for dataset in datasets for level in dataset])


def readLevelTable(path, defaultSigma=DEFAULT_SIGMA_MHZ):
    """Read a level table (``n,energy_mhz[,sigma_mhz]``).

    Raises
    ------
    rydberg_ritz.tables.TableFormatError
        Raised if the file is malformed; the message names the line.
    DatasetError
        Raised if the rows violate the dataset rules.
    """
    table = readTable(path, required=["n", "energy_mhz"], optional=["sigma_mhz"], integer=["n"])
    if "sigma_mhz" in table:
        rows = zip(table["n"], table["energy_mhz"], table["sigma_mhz"])
    else:
        rows = zip(table["n"], table["energy_mhz"])
    try:
        return validateDataset(rows, defaultSigma=defaultSigma)
    except DatasetError as e:
        raise DatasetError(f"{path}: {e}") from None


def writeLevelTable(dataset, output, decimals=3):
    """Write ``dataset`` as a level table with ``decimals`` digits after the
    point for energies and uncertainties.
    """
    spec = f".{decimals}f"
    writeTable(((level.n, level.energy, level.sigma) for level in dataset),
               columns=["n", "energy_mhz", "sigma_mhz"], formats=["d", spec, spec], output=output)
