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

"""Fits of the measured 85Rb nF7/2 levels compared with the published
series parameters.
"""

import os
import unittest

import numpy as np

import lsst.utils.tests

from rydberg_ritz import (REFERENCE_INTERVAL_FIT, PUBLISHED_METHOD3, FitRitzSeriesConfig, RitzParameters,
                          compareParameters, effectiveN, fitMethod1, fitMethod2, fitMethod3, predictLevel,
                          readLevelTable, residualStats)

TESTDIR = os.path.abspath(os.path.dirname(__file__))


def readMeasuredLevels():
    return readLevelTable(os.path.join(TESTDIR, "data", "measured_levels.csv"))


class Method3ReproductionTestCase(lsst.utils.tests.TestCase):

    @classmethod
    def setUpClass(cls):
        cls.dataset = readMeasuredLevels()
        cls.result = fitMethod3(cls.dataset)

    def testDataset(self):
        self.assertEqual(len(self.dataset), 28)
        self.assertTrue(np.all(self.dataset.sigmas == 8.0))

    def testParameters(self):
        self.assertTrue(self.result.converged, self.result.report.message)
        eIonisation, _ = self.result.report.getParam("eIonisation")
        delta0, _ = self.result.report.getParam("delta0")
        a, _ = self.result.report.getParam("a")
        self.assertFloatsAlmostEqual(eIonisation, 1010024717.0, atol=8.0, rtol=0)
        self.assertFloatsAlmostEqual(delta0, 0.01640, atol=0.00016, rtol=0)
        self.assertFloatsAlmostEqual(a, 0.0, atol=0.18, rtol=0)
        for name, (difference, nSigma) in compareParameters(self.result, PUBLISHED_METHOD3).items():
            self.assertLess(abs(nSigma), 2.0, msg=name)

    def testReferenceDefect(self):
        value, _ = REFERENCE_INTERVAL_FIT["delta0"]
        self.assertLess(abs(self.result.params.coefficients[0] - value), 2.0*PUBLISHED_METHOD3["delta0"][1])

    def testResiduals(self):
        mean, std, maxAbs = residualStats(self.result)
        self.assertLess(abs(mean), 2.0)
        self.assertLessEqual(std, 6.0)
        self.assertLess(maxAbs, 16.0)

    def testUncertaintyScaling(self):
        """Both covariance conventions are available; they differ by the
        square root of the reduced chi-square.
        """
        config = FitRitzSeriesConfig()
        config.fitter.scaleByReducedChi2 = False
        unscaled = fitMethod3(self.dataset, config=config)
        self.assertFloatsAlmostEqual(unscaled.params.eIonisation, self.result.params.eIonisation,
                                     atol=1e-3, rtol=0)
        ratio = np.array(self.result.report.sigmas)/np.array(unscaled.report.sigmas)
        self.assertFloatsAlmostEqual(ratio, np.full(3, np.sqrt(self.result.report.reducedChi2)), rtol=1e-3)
        # The measured levels scatter less than their quoted 8 MHz, so the reduced chi-square is below one.
        self.assertLess(self.result.getSigma("eIonisation"), unscaled.getSigma("eIonisation"))

    def testHoldOut(self):
        training = fitMethod3(self.dataset.select(maxN=80))
        for level in self.dataset.select(minN=85):
            predicted = predictLevel(training.params, level.n, training.constants)
            self.assertLess(abs(predicted - level.energy), 16.0, msg=f"n={level.n}")


class PublishedParametersTestCase(lsst.utils.tests.TestCase):

    def setUp(self):
        self.dataset = readMeasuredLevels()
        self.params = RitzParameters(eIonisation=1010024717.0, method=3, coefficients=(0.01640, 0.0))
        self.energies = dict(zip(self.dataset.n.tolist(), self.dataset.energies.tolist()))

    def testPredictions(self):
        self.assertLess(abs(predictLevel(self.params, 50) - self.energies[50]), 10.0)
        self.assertLess(abs(predictLevel(self.params, 33) - self.energies[33]), 16.0)
        for n, energy in self.energies.items():
            self.assertLess(abs(predictLevel(self.params, n) - energy), 16.0, msg=f"n={n}")

    def testEffectiveQuantumNumber(self):
        nStar = effectiveN(self.energies[100], self.params.eIonisation)
        self.assertFloatsAlmostEqual(nStar, 99.983, atol=0.002, rtol=0)
        self.assertFloatsAlmostEqual(100 - nStar, 0.017, atol=0.002, rtol=0)


class RitzExpansionTestCase(lsst.utils.tests.TestCase):
    """Method 1 and 2 fits of levels with n >= 33 only."""

    @classmethod
    def setUpClass(cls):
        cls.dataset = readMeasuredLevels()

    def testTwoTermIonisationEnergy(self):
        result = fitMethod1(self.dataset, order=2)
        self.assertTrue(result.converged, result.report.message)
        self.assertFloatsAlmostEqual(result.params.eIonisation, 1010024717.0, atol=10.0, rtol=0)

    def testMethodsAgree(self):
        method1 = fitMethod1(self.dataset)
        method2 = fitMethod2(self.dataset)
        self.assertLessEqual(abs(method1.params.eIonisation - method2.params.eIonisation), 1.0)
        for name1, name2 in (("delta0", "delta0"), ("delta2", "a"), ("delta4", "b")):
            value1, sigma1 = method1.report.getParam(name1)
            value2, sigma2 = method2.report.getParam(name2)
            self.assertLessEqual(abs(value1 - value2), np.hypot(sigma1, sigma2), msg=name1)


class MyMemoryTestCase(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
