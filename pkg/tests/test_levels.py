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

import io
import os
import unittest

import numpy as np

import lsst.utils.tests

from rydberg_ritz import (DEFAULT_SIGMA_MHZ, GROUND_OFFSET_MHZ, RYDBERG_RB85_MHZ, DatasetError,
                          LevelDataset, MeasuredLevel, PhysicalConstants, PhysicalConstantsConfig,
                          TableFormatError, mergeDatasets, readLevelTable, validateDataset,
                          writeLevelTable)

TESTDIR = os.path.abspath(os.path.dirname(__file__))


class ConstantsTestCase(lsst.utils.tests.TestCase):

    def testRydbergConstant(self):
        # R_Rb in m^-1 times the defined speed of light, in MHz
        expected = 10973660.672249*299792458.0/1e6
        self.assertFloatsAlmostEqual(RYDBERG_RB85_MHZ, expected, atol=1e-3, rtol=0)
        self.assertFloatsAlmostEqual(RYDBERG_RB85_MHZ, 3289820706.2, atol=0.1, rtol=0)

    def testDefaults(self):
        constants = PhysicalConstants()
        self.assertEqual(constants.rydbergRb85, RYDBERG_RB85_MHZ)
        self.assertEqual(constants.groundOffset, 770571549.6)
        self.assertEqual(GROUND_OFFSET_MHZ, 770571549.6)
        self.assertEqual(DEFAULT_SIGMA_MHZ, 8.0)
        self.assertEqual(PhysicalConstantsConfig().makeConstants(), constants)

    def testDictRoundTrip(self):
        constants = PhysicalConstants(rydbergRb85=3289820700.0, groundOffset=1.5)
        self.assertEqual(PhysicalConstants.fromDict(constants.toDict()), constants)
        self.assertEqual(PhysicalConstants.fromDict({}), PhysicalConstants())

    def testInvalid(self):
        with self.assertRaises(ValueError):
            PhysicalConstants(rydbergRb85=float("nan"))
        with self.assertRaises(ValueError):
            PhysicalConstants(rydbergRb85=-1.0)
        config = PhysicalConstantsConfig()
        with self.assertRaises(Exception):
            config.rydbergRb85 = -5.0
            config.validate()


class LevelDatasetTestCase(lsst.utils.tests.TestCase):

    def testSingleLevel(self):
        dataset = validateDataset([(33, 1007000764, 8.0)])
        self.assertEqual(len(dataset), 1)
        self.assertEqual(dataset.levels[0], MeasuredLevel(33, 1007000764.0, 8.0))

    def testDuplicate(self):
        with self.assertRaisesRegex(DatasetError, "n=33"):
            validateDataset([(33, 1007000764, 8.0), (33, 1007000765, 8.0)])

    def testSorted(self):
        dataset = validateDataset([(40, 1007966892, 8.0), (33, 1007000764, 8.0)])
        np.testing.assert_array_equal(dataset.n, [33, 40])
        np.testing.assert_array_equal(dataset.energies, [1007000764.0, 1007966892.0])

    def testDefaultSigma(self):
        dataset = validateDataset([(33, 1007000764), (34, 1007176099, None)], defaultSigma=5.0)
        np.testing.assert_array_equal(dataset.sigmas, [5.0, 5.0])

    def testRejectedValues(self):
        for raw in ([(33, 1007000764, 0.0)],
                    [(33, 1007000764, -8.0)],
                    [(33, -1.0, 8.0)],
                    [(0, 1007000764, 8.0)],
                    [(33.5, 1007000764, 8.0)],
                    [(33, float("nan"), 8.0)],
                    []):
            with self.subTest(raw=raw):
                with self.assertRaises(DatasetError):
                    validateDataset(raw)

    def testUnorderedConstruction(self):
        with self.assertRaises(DatasetError):
            LevelDataset((MeasuredLevel(40, 2.0), MeasuredLevel(33, 1.0)))

    def testImmutable(self):
        dataset = validateDataset([(33, 1007000764, 8.0)])
        with self.assertRaises(Exception):
            dataset.levels = ()
        with self.assertRaises(Exception):
            dataset.levels[0].energy = 1.0

    def testSelectAndShift(self):
        dataset = readLevelTable(os.path.join(TESTDIR, "data", "measured_levels.csv"))
        selected = dataset.select(minN=40, maxN=60)
        self.assertEqual(selected.n[0], 40)
        self.assertEqual(selected.n[-1], 60)
        self.assertEqual(len(selected), 13)
        with self.assertRaises(DatasetError):
            dataset.select(minN=101)
        shifted = dataset.shifted(10.0)
        np.testing.assert_array_equal(shifted.energies, dataset.energies + 10.0)

    def testMerge(self):
        low = validateDataset([(5, 900000000.0, 100.0), (4, 800000000.0, 100.0)])
        high = validateDataset([(33, 1007000764, 8.0)])
        merged = mergeDatasets(high, low)
        np.testing.assert_array_equal(merged.n, [4, 5, 33])
        np.testing.assert_array_equal(merged.sigmas, [100.0, 100.0, 8.0])
        with self.assertRaisesRegex(DatasetError, "n=33"):
            mergeDatasets(high, high)


class LevelTableTestCase(lsst.utils.tests.TestCase):

    def testReadMeasuredLevels(self):
        dataset = readLevelTable(os.path.join(TESTDIR, "data", "measured_levels.csv"))
        self.assertEqual(len(dataset), 28)
        self.assertEqual(dataset.levels[0], MeasuredLevel(33, 1007000764.0, 8.0))
        self.assertEqual(dataset.levels[-1], MeasuredLevel(100, 1009695624.0, 8.0))

    def testRoundTrip(self):
        dataset = validateDataset([(33, 1007000763.625, 8.0), (34, 1007176099.125, 7.5),
                                   (50, 1008707917.5, 12.25)])
        with lsst.utils.tests.getTempFilePath(".csv") as path:
            writeLevelTable(dataset, path, decimals=3)
            self.assertEqual(readLevelTable(path), dataset)

    def testWrittenText(self):
        dataset = validateDataset([(33, 1007000763.6, 8.0)])
        buffer = io.StringIO()
        writeLevelTable(dataset, buffer, decimals=1)
        self.assertEqual(buffer.getvalue(), "n,energy_mhz,sigma_mhz\n33,1007000763.6,8.0\n")

    def testMissingSigmaColumn(self):
        with lsst.utils.tests.getTempFilePath(".csv") as path:
            with open(path, "w") as f:
                f.write("n,energy_mhz\n34,1007176099\n33,1007000764\n")
            dataset = readLevelTable(path, defaultSigma=6.0)
        np.testing.assert_array_equal(dataset.n, [33, 34])
        np.testing.assert_array_equal(dataset.sigmas, [6.0, 6.0])

    def testMalformed(self):
        cases = {
            "n,energy_mhz,sigma_mhz\n33,1007000764,8.0\n34,abc,8.0\n": "line 3",
            "n,energy_mhz,sigma_mhz\n33,1007000764,8.0\n\n  \n34,abc,8.0\n": "line 5: bad 'energy_mhz'",
            "n,energy_mhz,sigma_mhz\n33.5,1007000764,8.0\n": "line 2",
            "n,sigma_mhz\n33,8.0\n": "energy_mhz",
            "": "empty",
        }
        for text, message in cases.items():
            with self.subTest(text=text):
                with lsst.utils.tests.getTempFilePath(".csv") as path:
                    with open(path, "w") as f:
                        f.write(text)
                    with self.assertRaisesRegex(TableFormatError, message):
                        readLevelTable(path)

    def testBlankLines(self):
        with lsst.utils.tests.getTempFilePath(".csv") as path:
            with open(path, "w") as f:
                f.write("n,energy_mhz,sigma_mhz\n\n33,1007000764,8.0\n\n34,1007176099,8.0\n\n")
            dataset = readLevelTable(path)
        self.assertEqual(dataset.n.tolist(), [33, 34])
        np.testing.assert_array_equal(dataset.energies, [1007000764.0, 1007176099.0])

    def testMissingFile(self):
        path = os.path.join(TESTDIR, "data", "no_such_table.csv")
        with self.assertRaisesRegex(TableFormatError, "no_such_table.csv"):
            readLevelTable(path)

    def testDuplicateInFile(self):
        with lsst.utils.tests.getTempFilePath(".csv") as path:
            with open(path, "w") as f:
                f.write("n,energy_mhz,sigma_mhz\n33,1007000764,8.0\n33,1007000765,8.0\n")
            with self.assertRaisesRegex(DatasetError, "n=33"):
                readLevelTable(path)


class MyMemoryTestCase(lsst.utils.tests.MemoryTestCase):
    pass


def setup_module(module):
    lsst.utils.tests.init()


if __name__ == "__main__":
    lsst.utils.tests.init()
    unittest.main()
