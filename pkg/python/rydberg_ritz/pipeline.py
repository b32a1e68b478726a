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

"""Top-level task tying line fitting, scan reduction and series fitting
together, and the loaders for its configuration overrides.
"""

__all__ = ["ConfigOverrideError", "CONFIG_ALIASES", "RydbergPipelineConfig", "RydbergPipelineTask",
           "applyConfigOverrides", "loadConfigOverrides"]

import ast

import lsst.pex.config as pexConfig
from lsst.pex.config.configurableField import ConfigurableInstance
from lsst.utils.timer import timeMethod

from .analysis import ReduceScansTask
from .constants import DEFAULT_SIGMA_MHZ, PhysicalConstantsConfig
from .lineshape import FitLineCenterTask
from .ritz import FitRitzSeriesTask, predictLevel
from .task import Task, TaskError

# Report-style names accepted as configuration keys.
CONFIG_ALIASES = {
    "rydberg_rb85_mhz": "constants.rydbergRb85",
    "ground_offset_mhz": "constants.groundOffset",
}


class ConfigOverrideError(TaskError, ValueError):
    """A configuration override names an unknown field or has a bad value.
    """
    pass


class RydbergPipelineConfig(pexConfig.Config):
    constants = pexConfig.ConfigField(
        dtype=PhysicalConstantsConfig,
        doc="Physical constants",
    )
    defaultSigma = pexConfig.Field(
        doc="Uncertainty assigned to levels whose table gives none (MHz)",
        dtype=float,
        default=DEFAULT_SIGMA_MHZ,
        check=lambda x: x > 0,
    )
    outputDir = pexConfig.Field(
        doc="Directory in which relative output paths are created; current directory if None",
        dtype=str,
        default=None,
        optional=True,
    )
    lineFit = FitLineCenterTask.makeField("Line-centre extraction from scan traces")
    reduce = ReduceScansTask.makeField("Scan-set reduction to level energies")
    fitSeries = FitRitzSeriesTask.makeField("Rydberg-Ritz series fit")


class RydbergPipelineTask(Task):
    """Run the analysis steps with one configuration and one set of
    physical constants.

    Each step is a subtask and can be used on its own: trace to line
    centre (``lineFit``), scan centres to level energies (``reduce``) and
    levels to series parameters (``fitSeries``).
    """

    ConfigClass = RydbergPipelineConfig
    _DefaultName = "rydbergRitz"

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.makeSubtask("lineFit")
        self.makeSubtask("reduce")
        self.makeSubtask("fitSeries")
        self.constants = self.config.constants.makeConstants()

    def fitLine(self, trace, init=None):
        """Fit one scan trace; see `FitLineCenterTask.run`."""
        return self.lineFit.run(trace, init)

    def reduceScans(self, scanSets, budget):
        """Reduce scan sets to a level dataset; see `ReduceScansTask.run`."""
        return self.reduce.run(scanSets, budget, self.constants)

    @timeMethod
    def run(self, dataset):
        """Fit the series model configured in ``fitSeries`` to ``dataset``.

        Returns
        -------
        result : `~rydberg_ritz.ritz.RitzFitResult`
        """
        return self.fitSeries.run(dataset, self.constants)

    def predict(self, params, nValues, constants=None):
        """Predicted energies ``[(n, E)]`` of the levels ``nValues``.

        ``constants`` defaults to the configured ones; pass the constants a
        fit was made with to reproduce its model energies.
        """
        constants = constants or self.constants
        return [(int(n), predictLevel(params, int(n), constants)) for n in nValues]


def _parseValue(text):
    text = text.strip()
    lowered = text.lower()
    if lowered in ("true", "false"):
        return lowered == "true"
    if lowered == "none":
        return None
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def applyConfigOverrides(config, overrides, source="override"):
    """Set fields of ``config`` from ``(key, value-text)`` pairs.

    Keys are dotted field paths relative to ``config``
    (``fitSeries.method``) or one of `CONFIG_ALIASES`. Values are parsed
    as Python literals, with ``true``/``false``/``none`` accepted in any
    case; anything else is taken as a string.

    Raises
    ------
    ConfigOverrideError
        Raised for an unknown key or a value the field rejects.
    """
    for key, text in overrides:
        path = CONFIG_ALIASES.get(key, key)
        *parents, name = path.split(".")
        target = config
        try:
            for parent in parents:
                target = getattr(target, parent)
                if isinstance(target, ConfigurableInstance):
                    target = target.value
            if not isinstance(target, pexConfig.Config) or name not in target:
                raise AttributeError(name)
            setattr(target, name, _parseValue(text))
        except AttributeError:
            raise ConfigOverrideError(f"{source}: unknown configuration key {key!r}") from None
        except (TypeError, ValueError, pexConfig.FieldValidationError) as e:
            raise ConfigOverrideError(f"{source}: bad value {text!r} for {key!r}: {e}") from None


def loadConfigOverrides(config, path):
    """Apply a ``key=value`` override file to ``config``.

    Blank lines and ``#`` comments are ignored.

    Raises
    ------
    ConfigOverrideError
        Raised for a malformed line, an unknown key or a bad value; the
        message names the file and line.
    OSError
        Raised if the file cannot be read.
    """
    with open(path) as f:
        lines = f.readlines()
    for lineNumber, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ConfigOverrideError(f"{path}, line {lineNumber}: expected key=value, got {line!r}")
        applyConfigOverrides(config, [(key.strip(), value)], source=f"{path}, line {lineNumber}")
