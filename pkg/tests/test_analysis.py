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

import os
import unittest

import numpy as np

import lsst.utils.tests

from rydberg_ritz import (GROUND_OFFSET_MHZ, PUBLISHED_BUDGET, BudgetError, ErrorBudget, PhysicalConstants,
                          ReduceScansTask, ScanSet, ScanSetError, aggregateScanSet, quadratureSum,
                          readBudget, readLevelTable, readScanSets, readTable, roundHalfUp,
                          thirdStepToTotal, totalError, totalToThirdStep)

TESTDIR = os.path.abspath(os.path.dirname(__file__))


class FrequencyConversionTestCase(lsst.utils.tests.TestCase):

    def testExample(self):
        self.assertFloatsAlmostEqual(thirdStepToTotal(236429214.0), 1007000763.6, atol=1e-6, rtol=0)
        self.assertFloatsAlmostEqual(totalToThirdStep(1007000763.6), 236429214.0, atol=1e-6, rtol=0)
        self.assertEqual(thirdStepToTotal(0.0), GROUND_OFFSET_MHZ)

    def testMeasuredLevels(self):
        """Third-step frequencies convert to the tabulated level energies.

        The tabulated energies differ from the converted values by up to
        0.6 MHz, so the comparison allows 1 MHz.
        """
        thirdStep = readTable(os.path.join(TESTDIR, "data", "measured_third_step.csv"),
                              required=["n", "nu3_mhz"], integer=["n"])
        levels = readLevelTable(os.path.join(TESTDIR, "data", "measured_levels.csv"))
        self.assertEqual(thirdStep["n"].tolist(), levels.n.tolist())
        converted = np.array([thirdStepToTotal(nu3) for nu3 in thirdStep["nu3_mhz"]])
        self.assertFloatsAlmostEqual(converted, levels.energies, atol=1.0, rtol=0)
        for energy in levels.energies:
            self.assertFloatsAlmostEqual(thirdStepToTotal(totalToThirdStep(energy)), energy,
                                         atol=1e-6, rtol=0)

    def testConstantsOverride(self):
        constants = PhysicalConstants(groundOffset=770571500.0)
        self.assertEqual(thirdStepToTotal(100.0, constants), 770571600.0)

    def testInvalid(self):
        for value in (-1.0, float("nan"), float("inf")):
            with self.assertRaises(ValueError):
                thirdStepToTotal(value)


class ScanSetTestCase(lsst.utils.tests.TestCase):

    def testIdenticalCenters(self):
        mean, std = aggregateScanSet(ScanSet(n=33, centers=(236429214.0,)*5))
        self.assertEqual(mean, 236429214.0)
        self.assertEqual(std, 0.0)

    def testTwoCenters(self):
        mean, std = aggregateScanSet(ScanSet(n=33, centers=(236429213.0, 236429215.0)))
        self.assertEqual(mean, 236429214.0)
        self.assertFloatsAlmostEqual(std, np.sqrt(2.0), rtol=1e-12)

    def testTooFew(self):
        with self.assertRaisesRegex(ScanSetError, "n=41"):
            aggregateScanSet(ScanSet(n=41, centers=(236429214.0,)))
        with self.assertRaises(ValueError):
            ScanSet(n=41, centers=(float("nan"), 1.0))

    def testScatter(self):
        centers = 236429214.0 + np.random.default_rng(0).normal(0.0, 2.0, size=10)
        _, std = aggregateScanSet(ScanSet(n=33, centers=tuple(centers)))
        self.assertGreaterEqual(std, 0.9)
        self.assertLessEqual(std, 3.7)

    def testReadScanSets(self):
        scanSets = readScanSets(os.path.join(TESTDIR, "data", "scan_sets.csv"))
        self.assertEqual([scanSet.n for scanSet in scanSets], [33, 34])
        self.assertEqual([len(scanSet.centers) for scanSet in scanSets], [10, 10])
        self.assertFloatsAlmostEqual(aggregateScanSet(scanSets[0])[0], 236429214.0, atol=1e-6, rtol=0)
        self.assertFloatsAlmostEqual(aggregateScanSet(scanSets[1])[0], 236604549.0, atol=1e-6, rtol=0)


class ErrorBudgetTestCase(lsst.utils.tests.TestCase):

    def testPublishedBudget(self):
        self.assertFloatsAlmostEqual(quadratureSum(PUBLISHED_BUDGET), 7.955658, atol=1e-6, rtol=0)
        self.assertEqual(totalError(PUBLISHED_BUDGET), 8.0)
        self.assertEqual(totalError(PUBLISHED_BUDGET, roundTo=None), quadratureSum(PUBLISHED_BUDGET))
        self.assertEqual(totalError(PUBLISHED_BUDGET, roundTo=0.01), 7.96)

    def testSimpleBudgets(self):
        self.assertEqual(totalError(ErrorBudget((("a", 3.0), ("b", 4.0)))), 5.0)
        self.assertEqual(totalError(ErrorBudget((("only", 2.35),))), 2.4)
        self.assertEqual(totalError(ErrorBudget((("zero", 0.0),))), 0.0)

    def testRoundHalfUp(self):
        self.assertEqual(roundHalfUp(0.25, 0.1), 0.3)
        self.assertEqual(roundHalfUp(-0.25, 0.1), -0.3)
        self.assertEqual(roundHalfUp(7.955658, 0.1), 8.0)
        self.assertEqual(roundHalfUp(7.5, 1.0), 8.0)

    def testBounds(self):
        rng = np.random.default_rng(3)
        for _ in range(50):
            values = rng.uniform(0.0, 10.0, size=int(rng.integers(1, 8)))
            budget = ErrorBudget(tuple((f"c{i}", v) for i, v in enumerate(values)))
            total = quadratureSum(budget)
            self.assertGreaterEqual(total, values.max())
            self.assertLessEqual(total, values.sum() + 1e-12)
            reverse = ErrorBudget(budget.components[::-1])
            self.assertFloatsAlmostEqual(quadratureSum(reverse), total, rtol=1e-15)

    def testInvalid(self):
        with self.assertRaises(BudgetError):
            ErrorBudget(())
        with self.assertRaises(BudgetError):
            ErrorBudget((("a", -1.0),))
        with self.assertRaises(BudgetError):
            ErrorBudget((("a", float("nan")),))
        with self.assertRaisesRegex(BudgetError, "duplicate"):
            ErrorBudget((("a", 1.0), ("a", 2.0)))

    def testReadBudget(self):
        budget = readBudget(os.path.join(TESTDIR, "data", "published_budget.csv"))
        self.assertEqual(budget, PUBLISHED_BUDGET)
        self.assertEqual(budget.labels[0], "wavemeter calibration")
        with lsst.utils.tests.getTempFilePath(".csv") as path:
            with open(path, "w") as f:
                f.write("label,value_mhz\n")
            with self.assertRaisesRegex(BudgetError, "at least one"):
                readBudget(path)


class ReduceScansTaskTestCase(lsst.utils.tests.TestCase):

    def setUp(self):
        self.scanSets = readScanSets(os.path.join(TESTDIR, "data", "scan_sets.csv"))

    def testReduce(self):
        task = ReduceScansTask()
        reduction = task.run(self.scanSets[::-1], PUBLISHED_BUDGET)
        self.assertEqual(reduction.sigma, 8.0)
        self.assertEqual(reduction.dataset.n.tolist(), [33, 34])
        self.assertTrue(np.all(reduction.dataset.sigmas == 8.0))
        self.assertFloatsAlmostEqual(reduction.dataset.energies, np.array([1007000763.6, 1007176098.6]),
                                     atol=1e-6, rtol=0)
        self.assertLessEqual(abs(reduction.dataset.energies[0] - 1007000764.0), 0.5)
        self.assertEqual([row[0] for row in reduction.thirdStep], [33, 34])
        self.assertGreater(reduction.thirdStep[0][2], 0.0)
        self.assertEqual(task.metadata["nLevels"], [2])

    def testRounding(self):
        config = ReduceScansTask.ConfigClass()
        config.roundTo = 1.0
        self.assertEqual(ReduceScansTask(config=config).run(self.scanSets, PUBLISHED_BUDGET).sigma, 8.0)
        config.roundTo = 0.01
        self.assertEqual(ReduceScansTask(config=config).run(self.scanSets, PUBLISHED_BUDGET).sigma, 7.96)

    def testTooFewScans(self):
        scanSets = self.scanSets + [ScanSet(n=35, centers=(236752000.0,))]
        with self.assertRaisesRegex(ScanSetError, "n=35"):
            ReduceScansTask().run(scanSets, PUBLISHED_BUDGET)


class MyMemoryTestCase(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
