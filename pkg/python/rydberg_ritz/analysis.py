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

"""Measurement bookkeeping: scan-set aggregation, conversion of third-step
frequencies to total level energies and the error budget.
"""

__all__ = ["ScanSetError", "BudgetError", "ErrorBudget", "ScanSet", "PUBLISHED_BUDGET",
           "thirdStepToTotal", "totalToThirdStep", "aggregateScanSet", "quadratureSum", "roundHalfUp",
           "totalError", "readBudget", "readScanSets", "ScanReduction", "ReduceScansConfig",
           "ReduceScansTask"]

import dataclasses
import decimal
import math

import numpy as np

import lsst.pex.config as pexConfig
from lsst.utils.timer import timeMethod

from .constants import PhysicalConstants, checkFrequency
from .levels import MeasuredLevel, LevelDataset
from .tables import readTable
from .task import Task, TaskError


class ScanSetError(TaskError, ValueError):
    """A scan set has too few traces to estimate a scatter."""
    pass


class BudgetError(TaskError, ValueError):
    """An error budget is empty or holds a negative or duplicate entry."""
    pass


@dataclasses.dataclass(frozen=True)
class ErrorBudget:
    """Independent uncertainty contributions, ``(label, value in MHz)``.
    """

    components: tuple

    def __post_init__(self):
        components = tuple((str(label), float(value)) for label, value in self.components)
        if not components:
            raise BudgetError("an error budget needs at least one component")
        labels = [label for label, _ in components]
        for label, value in components:
            if not math.isfinite(value) or value < 0:
                raise BudgetError(f"component {label!r} must be a non-negative finite value, got {value}")
            if labels.count(label) > 1:
                raise BudgetError(f"duplicate component {label!r}")
        object.__setattr__(self, "components", components)

    @property
    def labels(self):
        return tuple(label for label, _ in self.components)

    @property
    def values(self):
        return np.array([value for _, value in self.components])


PUBLISHED_BUDGET = ErrorBudget((
    ("wavemeter calibration", 6.2),
    ("first step frequency", 0.75),
    ("second step frequency", 1.0),
    ("pressure shifts", 2.7),
    ("power shifts", 4.0),
))


@dataclasses.dataclass(frozen=True)
class ScanSet:
    """Fitted line centres (MHz) of repeated scans across level ``n``."""

    n: int
    centers: tuple

    def __post_init__(self):
        object.__setattr__(self, "centers", tuple(checkFrequency(c, f"centre of n={self.n}")
                                                  for c in self.centers))


def thirdStepToTotal(nu3, constants=None):
    """Total 5S1/2 to nF7/2 frequency for a third-step frequency ``nu3``.

    Raises
    ------
    ValueError
        Raised if ``nu3`` is negative or not finite.
    """
    nu3 = checkFrequency(nu3, "third-step frequency")
    if nu3 < 0:
        raise ValueError(f"third-step frequency must not be negative, got {nu3}")
    return nu3 + (constants or PhysicalConstants()).groundOffset


def totalToThirdStep(energy, constants=None):
    """Inverse of `thirdStepToTotal`."""
    return checkFrequency(energy, "level energy") - (constants or PhysicalConstants()).groundOffset


def aggregateScanSet(scanSet):
    """Mean and sample (N - 1) standard deviation of the scan centres.

    Raises
    ------
    ScanSetError
        Raised if the set has fewer than two centres.
    """
    if len(scanSet.centers) < 2:
        raise ScanSetError(f"scan set for n={scanSet.n} has {len(scanSet.centers)} scan(s); "
                           "at least 2 are needed")
    centers = np.array(scanSet.centers)
    return float(np.mean(centers)), float(np.std(centers, ddof=1))


def quadratureSum(budget):
    """Unrounded root-sum-square of the budget components."""
    return float(np.sqrt(np.sum(np.square(budget.values))))


def roundHalfUp(value, step):
    """Round ``value`` to a multiple of ``step``, halves away from zero."""
    quantum = decimal.Decimal(repr(step))
    rounded = (decimal.Decimal(repr(value))/quantum).quantize(decimal.Decimal(1), decimal.ROUND_HALF_UP)
    return float(rounded*quantum)


def totalError(budget, roundTo=0.1):
    """Total uncertainty of ``budget``: components added in quadrature and
    rounded half-up to ``roundTo`` (MHz). ``roundTo=None`` disables
    rounding.
    """
    raw = quadratureSum(budget)
    return raw if roundTo is None else roundHalfUp(raw, roundTo)


def readBudget(path):
    """Read an error budget CSV file (``label,value_mhz``).

    Raises
    ------
    rydberg_ritz.tables.TableFormatError
        Raised if the file is malformed.
    BudgetError
        Raised if the budget is empty, negative or has duplicate labels.
    """
    table = readTable(path, required=["label", "value_mhz"], text=["label"])
    try:
        return ErrorBudget(tuple(zip(table["label"], table["value_mhz"])))
    except BudgetError as e:
        raise BudgetError(f"{path}: {e}") from None


def readScanSets(path):
    """Read scan centres (``n,center_mhz``) grouped into `ScanSet` objects
    by n, in ascending n.
    """
    table = readTable(path, required=["n", "center_mhz"], integer=["n"])
    return [ScanSet(n=int(n), centers=tuple(group["center_mhz"]))
            for n, group in table.groupby("n", sort=True)]


@dataclasses.dataclass(frozen=True)
class ScanReduction:
    """Result of `ReduceScansTask.run`.

    ``thirdStep`` holds ``(n, mean, std)`` of each scan set in MHz;
    ``dataset`` the corresponding total level energies, each carrying the
    budget total as its uncertainty.
    """

    dataset: LevelDataset
    thirdStep: tuple
    sigma: float


class ReduceScansConfig(pexConfig.Config):
    roundTo = pexConfig.Field(
        doc="Resolution to which the budget total is rounded (MHz)",
        dtype=float,
        default=0.1,
        check=lambda x: x > 0,
    )


class ReduceScansTask(Task):
    """Turn repeated third-step scan centres into a level dataset.
    """

    ConfigClass = ReduceScansConfig
    _DefaultName = "reduceScans"

    @timeMethod
    def run(self, scanSets, budget, constants=None):
        """Aggregate ``scanSets`` and convert them to total energies.

        Parameters
        ----------
        scanSets : iterable of `ScanSet`
            One set per level.
        budget : `ErrorBudget`
            Uncertainty contributions common to all levels.
        constants : `~rydberg_ritz.constants.PhysicalConstants`, optional
            Supplies the ground-state offset.

        Returns
        -------
        reduction : `ScanReduction`

        Raises
        ------
        ScanSetError
            Raised if a set has fewer than two centres.
        """
        sigma = totalError(budget, self.config.roundTo)
        self.log.debug("Budget total %.4f MHz reported as %s MHz", quadratureSum(budget), sigma)
        rows = []
        levels = []
        for scanSet in sorted(scanSets, key=lambda s: s.n):
            mean, std = aggregateScanSet(scanSet)
            rows.append((scanSet.n, mean, std))
            levels.append(MeasuredLevel(n=scanSet.n, energy=thirdStepToTotal(mean, constants), sigma=sigma))
        dataset = LevelDataset(tuple(levels))
        scatter = [std for _, _, std in rows]
        self.log.info("Reduced %d scan sets; mean scan scatter %.2f MHz", len(rows), np.mean(scatter))
        self.metadata.add("nLevels", len(rows))
        return ScanReduction(dataset=dataset, thirdStep=tuple(rows), sigma=sigma)
