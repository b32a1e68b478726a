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

"""Synthetic traces and level datasets with known parameters, for tests
and for checking a configuration before it is used on real data.
"""

__all__ = ["makeSyntheticTrace", "makeSyntheticLevels", "MEASURED_N"]

import numpy as np

from ..levels import validateDataset
from ..lineshape import ScanTrace, evaluateModel
from ..ritz import predictLevel

# Principal quantum numbers of the measured 85Rb nF7/2 levels.
MEASURED_N = tuple(range(33, 51)) + tuple(range(55, 101, 5))


def makeSyntheticTrace(params, modelKind, frequencies, noise=0.0, seed=0):
    """Scan trace of a known line.

    Parameters
    ----------
    params : `~rydberg_ritz.lineshape.LineShapeParams`
        Line to sample.
    modelKind : `str`
        ``"lorentzian"`` or ``"wahlquist"``.
    frequencies : array-like
        Sample frequencies (MHz), strictly increasing.
    noise : `float`, optional
        Gaussian noise sigma as a fraction of the largest excursion of the
        model from its baseline.
    seed : `int`, optional
        Seed of the `numpy.random.default_rng` generator.

    Returns
    -------
    trace : `~rydberg_ritz.lineshape.ScanTrace`
    """
    frequencies = np.asarray(frequencies, dtype=float)
    signals = np.asarray(evaluateModel(modelKind, frequencies, params), dtype=float)
    if noise > 0:
        scale = noise*np.max(np.abs(signals - params.baseline))
        signals = signals + np.random.default_rng(seed).normal(0.0, scale, size=signals.shape)
    return ScanTrace(frequencies, signals)


def makeSyntheticLevels(params, nValues, sigma=8.0, noise=0.0, seed=0, constants=None):
    """Level dataset generated from series parameters.

    Parameters
    ----------
    params : `~rydberg_ritz.ritz.RitzParameters`
        Generating series; energies come from `~rydberg_ritz.ritz.predictLevel`.
    nValues : iterable of `int`
        Levels to generate.
    sigma : `float`, optional
        Uncertainty recorded for every level (MHz).
    noise : `float`, optional
        Gaussian noise sigma added to the energies (MHz).
    seed : `int`, optional
        Seed of the `numpy.random.default_rng` generator.
    constants : `~rydberg_ritz.constants.PhysicalConstants`, optional
        Physical constants.

    Returns
    -------
    dataset : `~rydberg_ritz.levels.LevelDataset`
    """
    nValues = list(nValues)
    energies = np.array([predictLevel(params, n, constants) for n in nValues])
    if noise > 0:
        energies = energies + np.random.default_rng(seed).normal(0.0, noise, size=energies.shape)
    return validateDataset([(n, energy, sigma) for n, energy in zip(nValues, energies)])
