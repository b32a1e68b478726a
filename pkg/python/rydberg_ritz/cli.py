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

"""Command-line front end, ``rydberg-ritz <command> ...``.

Exit status is 0 on success, 1 for bad input (unreadable or malformed
files, invalid configuration, domain errors) and 2 when a fit did not
converge. Logging goes to stderr; reports go to ``--out`` or stdout.

The common options (``--config``, ``--out``, ``--json`` ...) may be given
before or after the command name. Given after it, they replace any value
given before. ``-L`` takes several values, so before the command it must
be followed by another option.
"""

__all__ = ["EXIT_OK", "EXIT_INPUT_ERROR", "EXIT_NOT_CONVERGED", "makeParser", "main"]

import argparse
import io
import json
import logging
import os
import sys

from lsst.utils.logging import TRACE, VERBOSE, getLogger

from .analysis import quadratureSum, readBudget, readScanSets, totalError
from .constants import PhysicalConstants
from .levels import mergeDatasets, readLevelTable, writeLevelTable
from .lineshape import MODEL_KINDS, LineGuessError, LineShapeParams, autoInitGuess, readTrace
from .pipeline import RydbergPipelineConfig, RydbergPipelineTask, loadConfigOverrides
from .ritz import CLOSURES, METHODS, RitzParameters, residualStats
from .tables import writeTable
from .task import TaskError

EXIT_OK = 0
EXIT_INPUT_ERROR = 1
EXIT_NOT_CONVERGED = 2

SHORT_LOG_FORMAT = "%(levelname)s %(name)s: %(message)s"
LONG_LOG_FORMAT = "%(levelname)-5s %(asctime)s %(name)s (%(filename)s:%(lineno)d) - %(message)s"

PER_LEVEL_COLUMNS = ["n", "E_meas_mhz", "E_model_mhz", "residual_mhz", "effective_n", "defect"]

_log = getLogger("rydberg_ritz.cli")


class LogLevelAction(argparse.Action):
    """argparse action to set log levels: ``level`` sets the root logger,
    ``name=level`` a named one.
    """

    permittedLevels = ("TRACE", "DEBUG", "VERBOSE", "INFO", "WARN", "WARNING", "ERROR", "FATAL",
                       "CRITICAL")

    def __call__(self, parser, namespace, values, option_string):
        levels = list(getattr(namespace, self.dest, None) or [])
        for value in values:
            name, sep, level = value.rpartition("=")
            if level.upper() not in self.permittedLevels:
                parser.error(f"loglevel={level!r} not one of {self.permittedLevels}")
            levels.append((name if sep else None, level.upper()))
        setattr(namespace, self.dest, levels)


def _addCommonArguments(parser, suppress=False):
    """Add the options shared by every command; with ``suppress`` unset
    options leave the namespace untouched.
    """
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--config", dest="configPath", metavar="PATH", default=default(None),
                        help="key=value configuration override file")
    parser.add_argument("--config-file", dest="configFiles", action="append", default=default([]),
                        metavar="PATH",
                        help="pex_config override file (``config.fitSeries.order = 2``); may be repeated")
    parser.add_argument("--out", metavar="PATH", default=default(None),
                        help="write the report here instead of stdout")
    parser.add_argument("--json", action="store_true", default=default(False),
                        help="machine-readable JSON output for commands whose default is text")
    parser.add_argument("-L", "--loglevel", nargs="+", action=LogLevelAction, default=default([]),
                        help="logging level, or logger=level pairs (e.g. rydbergRitz.fitSeries.fitter=debug)",
                        metavar="LEVEL|COMPONENT=LEVEL")
    parser.add_argument("--longlog", action="store_true", default=default(False),
                        help="use a more verbose logging format")
    parser.add_argument("--show-config", action="store_true", default=default(False),
                        help="print the final configuration and exit")


def makeParser():
    """Build the `argparse.ArgumentParser` for all subcommands."""
    parser = argparse.ArgumentParser(
        prog="rydberg-ritz",
        description="Fit Rydberg level line shapes and Rydberg-Ritz series to absolute level energies.",
    )
    _addCommonArguments(parser)
    subparsers = parser.add_subparsers(dest="command", metavar="COMMAND")
    subparsers.required = True

    fitLine = subparsers.add_parser("fit-line", help="fit a line-shape model to one scan trace")
    fitLine.add_argument("trace", help="CSV trace file, columns freq_mhz,signal")
    fitLine.add_argument("--model", choices=MODEL_KINDS, help="line-shape model (default from config)")
    fitLine.add_argument("--center", type=float, help="initial line centre (MHz)")
    fitLine.add_argument("--fwhm", type=float, help="initial FWHM (MHz)")
    fitLine.add_argument("--amplitude", type=float, help="initial amplitude")
    fitLine.add_argument("--baseline", type=float, help="initial baseline")
    fitLine.add_argument("--mod-amplitude", dest="modAmplitude", type=float,
                         help="initial (or pinned) modulation amplitude (MHz)")
    fitLine.add_argument("--pin-mod", dest="pinMod", action="store_true",
                         help="hold the modulation amplitude fixed")
    fitLine.add_argument("--plot-csv", dest="plotCsv", metavar="PATH",
                         help="write freq_mhz,signal,model columns here")
    _addCommonArguments(fitLine, suppress=True)

    reduce = subparsers.add_parser("reduce", help="reduce scan centres to a level table")
    reduce.add_argument("scanSets", help="CSV file, columns n,center_mhz (third-step frequencies)")
    reduce.add_argument("budget", help="CSV error budget, columns label,value_mhz")
    _addCommonArguments(reduce, suppress=True)

    fitSeries = subparsers.add_parser("fit-series", help="fit a Rydberg-Ritz series to a level table")
    fitSeries.add_argument("levels", help="CSV level table, columns n,energy_mhz[,sigma_mhz]")
    fitSeries.add_argument("--method", type=int, choices=METHODS, help="series model (default from config)")
    fitSeries.add_argument("--order", type=int, help="number of defect coefficients")
    fitSeries.add_argument("--closure", choices=CLOSURES, help="method 1 closure of t_n")
    fitSeries.add_argument("--no-scale", dest="noScale", action="store_true",
                           help="do not scale the covariance by the reduced chi-square")
    fitSeries.add_argument("--extra-levels", dest="extraLevels", action="append", default=[],
                           metavar="PATH", help="additional level table merged into the fit (e.g. low n)")
    fitSeries.add_argument("--min-n", dest="minN", type=int, help="drop levels below this n")
    fitSeries.add_argument("--max-n", dest="maxN", type=int, help="drop levels above this n")
    fitSeries.add_argument("--plot-csv", dest="plotCsv", metavar="PATH",
                           help="write the per-level residual table here")
    _addCommonArguments(fitSeries, suppress=True)

    predict = subparsers.add_parser("predict", help="predict level energies from fitted parameters")
    predict.add_argument("params", help="JSON report written by fit-series")
    group = predict.add_mutually_exclusive_group(required=True)
    group.add_argument("--n", dest="nValues", type=int, nargs="+", metavar="N", help="levels to predict")
    group.add_argument("--n-range", dest="nRange", type=int, nargs=2, metavar=("START", "STOP"),
                       help="predict every n from START to STOP inclusive")
    _addCommonArguments(predict, suppress=True)

    budget = subparsers.add_parser("budget", help="combine an error budget in quadrature")
    budget.add_argument("budget", help="CSV error budget, columns label,value_mhz")
    _addCommonArguments(budget, suppress=True)
    return parser


def _configureLogging(args):
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter(LONG_LOG_FORMAT if args.longlog else SHORT_LOG_FORMAT))
    root = logging.getLogger()
    for existing in list(root.handlers):
        if getattr(existing, "_rydbergRitz", False):
            root.removeHandler(existing)
    handler._rydbergRitz = True
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    for name, level in args.loglevel:
        level = {"WARN": "WARNING", "FATAL": "CRITICAL"}.get(level, level)
        logging.getLogger(name).setLevel({"TRACE": TRACE, "VERBOSE": VERBOSE}.get(level)
                                         or logging.getLevelName(level))


def _makeConfig(args):
    config = RydbergPipelineConfig()
    for path in args.configFiles:
        config.load(path)
    if args.configPath:
        loadConfigOverrides(config, args.configPath)
    if args.command == "fit-line":
        if args.model:
            config.lineFit.modelKind = args.model
        if args.pinMod:
            config.lineFit.pinModAmplitude = True
        if args.modAmplitude is not None:
            config.lineFit.defaultModAmplitude = args.modAmplitude
    elif args.command == "fit-series":
        if args.method is not None and args.method != config.fitSeries.method:
            config.fitSeries.method = args.method
            config.fitSeries.order = None
        if args.order is not None:
            config.fitSeries.order = args.order
        if args.closure:
            config.fitSeries.closure = args.closure
        if args.noScale:
            config.fitSeries.fitter.scaleByReducedChi2 = False
    config.validate()
    return config


def _outputPath(config, path):
    if path is None or config.outputDir is None or os.path.isabs(path):
        return path
    os.makedirs(config.outputDir, exist_ok=True)
    return os.path.join(config.outputDir, path)


def _emit(config, args, text):
    path = _outputPath(config, args.out)
    if path is None:
        sys.stdout.write(text)
    else:
        with open(path, "w") as f:
            f.write(text)


def _toJson(data):
    return json.dumps(data, indent=2) + "\n"


def _csvText(rows, columns, formats):
    buffer = io.StringIO()
    writeTable(rows, columns, formats, buffer)
    return buffer.getvalue()


def runFitLine(task, config, args):
    trace = readTrace(args.trace)
    modelKind = config.lineFit.modelKind
    given = {name: getattr(args, name) for name in ("center", "fwhm", "amplitude", "baseline")}
    init = None
    if any(value is not None for value in given.values()):
        try:
            guess = autoInitGuess(trace, modelKind, modAmplitude=config.lineFit.defaultModAmplitude)
            base = {"center": guess.center, "fwhm": guess.fwhm, "amplitude": guess.amplitude,
                    "baseline": guess.baseline}
        except LineGuessError:
            if given["center"] is None or given["fwhm"] is None or given["amplitude"] is None:
                raise
            base = {"baseline": 0.0}
        base.update({name: value for name, value in given.items() if value is not None})
        init = LineShapeParams(modAmplitude=config.lineFit.defaultModAmplitude
                               if modelKind == "wahlquist" else 0.0, **base)
    lineFit = task.fitLine(trace, init)
    _emit(config, args, _toJson(lineFit.toDict()))
    if args.plotCsv:
        rows = task.lineFit.makePlotRows(trace, lineFit)
        with open(_outputPath(config, args.plotCsv), "w") as f:
            f.write(_csvText(rows, ["freq_mhz", "signal", "model"], [".6f", ".9g", ".9g"]))
    return EXIT_OK if lineFit.converged else EXIT_NOT_CONVERGED


def runReduce(task, config, args):
    scanSets = readScanSets(args.scanSets)
    budget = readBudget(args.budget)
    reduction = task.reduceScans(scanSets, budget)
    buffer = io.StringIO()
    writeLevelTable(reduction.dataset, buffer, decimals=1)
    _emit(config, args, buffer.getvalue())
    return EXIT_OK


def runFitSeries(task, config, args):
    dataset = readLevelTable(args.levels, defaultSigma=config.defaultSigma)
    extras = [readLevelTable(path, defaultSigma=config.defaultSigma) for path in args.extraLevels]
    if extras:
        dataset = mergeDatasets(dataset, *extras)
    if args.minN is not None or args.maxN is not None:
        dataset = dataset.select(args.minN, args.maxN)
    result = task.run(dataset)
    report = result.toDict()
    mean, std, maxAbs = residualStats(result)
    report["residual_stats"] = {"mean_mhz": mean, "std_mhz": std, "max_abs_mhz": maxAbs}
    _emit(config, args, _toJson(report))
    if args.plotCsv:
        rows = [(row.n, row.energy, row.modelEnergy, row.residual, row.effectiveN, row.defect)
                for row in result.perLevel]
        with open(_outputPath(config, args.plotCsv), "w") as f:
            f.write(_csvText(rows, PER_LEVEL_COLUMNS, ["d", ".3f", ".3f", ".3f", ".9f", ".9f"]))
    return EXIT_OK if result.converged else EXIT_NOT_CONVERGED


def runPredict(task, config, args):
    try:
        with open(args.params) as f:
            data = json.load(f)
    except json.JSONDecodeError as e:
        raise ValueError(f"{args.params}: not a JSON report ({e})") from None
    try:
        params = RitzParameters.fromDict(data["params"])
    except (KeyError, TypeError) as e:
        raise ValueError(f"{args.params}: missing series parameters ({e})") from None
    constants = PhysicalConstants.fromDict(data.get("constants", {}))
    if args.nRange:
        start, stop = args.nRange
        if stop < start:
            raise ValueError(f"--n-range stop {stop} is below start {start}")
        nValues = range(start, stop + 1)
    else:
        nValues = args.nValues
    rows = task.predict(params, nValues, constants)
    _emit(config, args, _csvText(rows, ["n", "E_pred_mhz"], ["d", ".3f"]))
    return EXIT_OK


def runBudget(task, config, args):
    budget = readBudget(args.budget)
    roundTo = config.reduce.roundTo
    total = totalError(budget, roundTo)
    if args.json:
        components = [{"label": label, "value_mhz": value} for label, value in budget.components]
        text = _toJson({"components": components, "raw_total_mhz": quadratureSum(budget),
                        "total_mhz": total})
    else:
        rows = list(budget.components) + [("total", total)]
        text = _csvText(rows, ["label", "value_mhz"], ["s", ""])
    _emit(config, args, text)
    return EXIT_OK


_COMMANDS = {
    "fit-line": runFitLine,
    "reduce": runReduce,
    "fit-series": runFitSeries,
    "predict": runPredict,
    "budget": runBudget,
}


def main(argv=None):
    """Run the command line ``argv`` (default `sys.argv`) and return the
    exit status.
    """
    args = makeParser().parse_args(argv)
    _configureLogging(args)
    try:
        config = _makeConfig(args)
        if args.show_config:
            config.saveToStream(sys.stdout)
            return EXIT_OK
        task = RydbergPipelineTask(config=config)
        return _COMMANDS[args.command](task, config, args)
    except LineGuessError as e:
        print(f"error: {e}", file=sys.stderr)
        if args.command == "fit-line":
            _emit(config, args, _toJson({"converged": False, "message": str(e)}))
            return EXIT_NOT_CONVERGED
        return EXIT_INPUT_ERROR
    except (TaskError, OSError, ValueError, KeyError) as e:
        _log.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT_ERROR


if __name__ == "__main__":
    sys.exit(main())
