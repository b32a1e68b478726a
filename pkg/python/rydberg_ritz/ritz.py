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

"""Rydberg-Ritz series: quantum defects, series fits and level prediction.

Three series models are fitted to absolute level energies ``E_n``:

method 1
    ``E_n = E_i - R/[n - d0 - d2 t - d4 t^2 - ...]^2`` with the Ritz
    expansion variable ``t = 1/(n - d(n))^2`` closed either from the data,
    ``t = (E_i - E_n)/R`` (``closure="balanced"``), or by solving the
    defect self-consistently (``closure="selfConsistent"``).
method 2
    ``E_n = E_i - R/[m - a/m^2 - b/m^4 - ...]^2`` with ``m = n - d0``.
method 3
    method 2 truncated after ``a``; accurate for ``n >= 20``.
"""

__all__ = ["METHODS", "CLOSURES", "RydbergDomainError", "DefectConvergenceError", "SeriesArityError",
           "RitzParameters", "LevelResidual", "RitzFitResult", "coefficientNames", "defaultOrder",
           "rydbergEnergy", "effectiveN", "solveDefect", "predictLevel", "residualStats",
           "RitzSeriesModel", "FitRitzSeriesConfig", "FitRitzSeriesTask",
           "fitMethod1", "fitMethod2", "fitMethod3", "compareParameters",
           "PUBLISHED_METHOD1", "PUBLISHED_METHOD2", "PUBLISHED_METHOD3", "REFERENCE_INTERVAL_FIT"]

import dataclasses
import math

import numpy as np

import lsst.pex.config as pexConfig
from lsst.utils.timer import timeMethod

from .constants import PhysicalConstants
from .optimize import FitReport, LevenbergMarquardtTask, ModelDomainError, ResidualModel
from .task import Task, TaskError

METHODS = (1, 2, 3)
CLOSURES = ("balanced", "selfConsistent")

# Published series parameters for the 85Rb nF7/2 levels, as (value, sigma).
PUBLISHED_METHOD1 = {"eIonisation": (1010024719.0, 8.0), "delta0": (0.016473, 0.000014),
                     "delta2": (-0.0783, 0.0007), "delta4": (0.028, 0.007)}
PUBLISHED_METHOD2 = {"eIonisation": (1010024719.0, 8.0), "delta0": (0.016473, 0.000014),
                     "a": (-0.0784, 0.0007), "b": (0.032, 0.007)}
PUBLISHED_METHOD3 = {"eIonisation": (1010024717.0, 8.0), "delta0": (0.01640, 0.00008),
                     "a": (0.00, 0.09)}
# Microwave interval measurements of the same series.
REFERENCE_INTERVAL_FIT = {"delta0": (0.0165437, 0.0000007), "a": (-0.086, 0.007)}

_EXTENDED_NAMES = ("a", "b", "c", "d", "e")


class RydbergDomainError(TaskError, ValueError):
    """A level lies outside the domain of the Rydberg formula (``n* <= 0``
    or an unbound energy).
    """
    pass


class DefectConvergenceError(TaskError, ArithmeticError):
    """The self-consistent quantum defect iteration did not converge.

    Parameters
    ----------
    message : `str`
        Description.
    lastIterates : `tuple` of `float`
        The last two defect iterates.
    """

    def __init__(self, message, lastIterates):
        super().__init__(message)
        self.lastIterates = tuple(lastIterates)


class SeriesArityError(TaskError, ValueError):
    """Too few levels for the requested number of series parameters.
    """
    pass


def defaultOrder(method):
    """Number of defect coefficients fitted by default for ``method``."""
    return 2 if method == 3 else 3


def coefficientNames(method, order):
    """Names of the defect coefficients of ``method`` truncated at ``order``.

    Method 1 uses ``delta0, delta2, delta4, ...``; methods 2 and 3 use
    ``delta0, a, b, ...``.
    """
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}, got {method}")
    if method == 1:
        return tuple(f"delta{2*k}" for k in range(order))
    if order - 1 > len(_EXTENDED_NAMES):
        raise ValueError(f"order {order} is too high for method {method}")
    return ("delta0",) + _EXTENDED_NAMES[:order - 1]


def _rydberg(constants):
    return (constants or PhysicalConstants()).rydbergRb85


def rydbergEnergy(n, defect, eIonisation, constants=None):
    """Level energy ``E_i - R/(n - defect)^2`` (MHz).

    Raises
    ------
    RydbergDomainError
        Raised if ``n - defect <= 0``.
    """
    nStar = n - defect
    if not nStar > 0:
        raise RydbergDomainError(f"n - defect must be positive, got {n} - {defect}")
    return eIonisation - _rydberg(constants)/(nStar*nStar)


def effectiveN(energy, eIonisation, constants=None):
    """Effective quantum number ``sqrt(R/(E_i - E_n))`` of a bound level.

    Raises
    ------
    RydbergDomainError
        Raised if ``energy >= eIonisation``.
    """
    binding = eIonisation - energy
    if not binding > 0:
        raise RydbergDomainError(f"level at {energy} MHz is not bound below E_i = {eIonisation} MHz")
    return math.sqrt(_rydberg(constants)/binding)


def solveDefect(n, coefficients, tol=1e-14, maxIterations=100):
    """Self-consistent quantum defect of level ``n``.

    Iterates ``d = d0 + d2 t + d4 t^2 + ...`` with ``t = 1/(n - d)^2``,
    starting from ``d = d0``.

    Parameters
    ----------
    n : `int`
        Principal quantum number, ``>= 1``.
    coefficients : sequence of `float`
        ``[d0, d2, d4, ...]``.
    tol : `float`, optional
        Convergence threshold on successive iterates, relative to
        ``max(1, |d|)``.
    maxIterations : `int`, optional
        Iteration bound.

    Returns
    -------
    defect : `float`
        Self-consistent quantum defect.
    t : `float`
        ``1/(n - defect)^2``.

    Raises
    ------
    RydbergDomainError
        Raised if ``n < 1`` or an iterate reaches ``n - d <= 0``.
    DefectConvergenceError
        Raised if the iteration has not converged after ``maxIterations``.
    """
    if n < 1:
        raise RydbergDomainError(f"n must be at least 1, got {n}")
    if not tol > 0:
        raise ValueError(f"tol must be positive, got {tol}")
    coefficients = np.asarray(coefficients, dtype=float)
    defect = float(coefficients[0])
    previous = defect
    for _ in range(maxIterations):
        nStar = n - defect
        if not nStar > 0:
            raise RydbergDomainError(f"n - defect reached {nStar} for n={n}")
        updated = float(np.polynomial.polynomial.polyval(1.0/(nStar*nStar), coefficients))
        previous, defect = defect, updated
        if abs(defect - previous) <= tol*max(1.0, abs(defect)):
            nStar = n - defect
            if not nStar > 0:
                raise RydbergDomainError(f"n - defect reached {nStar} for n={n}")
            return defect, 1.0/(nStar*nStar)
    raise DefectConvergenceError(f"quantum defect of n={n} not converged after {maxIterations} "
                                 f"iterations; last iterates {previous!r}, {defect!r}",
                                 (previous, defect))


def _extendedNStar(n, coefficients):
    """``m - a/m^2 - b/m^4 - ...`` with ``m = n - d0``, for an array of n.

    Only products and quotients are used, so the result for one level does
    not depend on the other entries of ``n``.
    """
    m = np.asarray(n, dtype=float) - coefficients[0]
    if np.any(m <= 0):
        raise RydbergDomainError(f"n - delta0 must be positive; delta0 = {coefficients[0]}")
    inverse2 = 1.0/(m*m)
    power = np.ones_like(m)
    nStar = m.copy()
    for coefficient in coefficients[1:]:
        power = power*inverse2
        nStar = nStar - coefficient*power
    return nStar


@dataclasses.dataclass(frozen=True)
class RitzParameters:
    """Fitted series parameters.

    Parameters
    ----------
    eIonisation : `float`
        Ionisation energy E_i (MHz).
    method : `int`
        Series model, 1, 2 or 3.
    coefficients : `tuple` of `float`
        Defect coefficients named by ``names``.
    """

    eIonisation: float
    method: int
    coefficients: tuple

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method}")
        coefficients = tuple(float(c) for c in self.coefficients)
        if not coefficients:
            raise ValueError("at least the constant defect delta0 is required")
        if not all(math.isfinite(c) for c in coefficients) or not math.isfinite(self.eIonisation):
            raise ValueError("series parameters must be finite")
        if not abs(coefficients[0]) < 1:
            raise ValueError(f"delta0 must satisfy |delta0| < 1, got {coefficients[0]}")
        object.__setattr__(self, "coefficients", coefficients)
        object.__setattr__(self, "eIonisation", float(self.eIonisation))
        object.__setattr__(self, "method", int(self.method))

    @property
    def order(self):
        return len(self.coefficients)

    @property
    def names(self):
        return coefficientNames(self.method, self.order)

    def asDict(self):
        """Mapping of parameter name to value, E_i first."""
        return {"eIonisation": self.eIonisation, **dict(zip(self.names, self.coefficients))}

    def toDict(self):
        return {"method": self.method, "e_ionisation_mhz": self.eIonisation,
                "coefficients": dict(zip(self.names, self.coefficients))}

    @classmethod
    def fromDict(cls, data):
        """Inverse of `toDict`.

        Raises
        ------
        KeyError
            Raised if a required key is missing.
        ValueError
            Raised if the coefficient names do not match the method.
        """
        method = int(data["method"])
        coefficients = data["coefficients"]
        names = coefficientNames(method, len(coefficients))
        if set(names) != set(coefficients):
            raise ValueError(f"method {method} expects coefficients {names}, got {sorted(coefficients)}")
        return cls(eIonisation=float(data["e_ionisation_mhz"]), method=method,
                   coefficients=tuple(float(coefficients[name]) for name in names))


def predictLevel(params, n, constants=None):
    """Energy of level ``n`` from the series formula of ``params.method``.

    Method 1 solves the defect self-consistently (`solveDefect`); methods 2
    and 3 evaluate the extended formula directly. The per-level model
    energies of a `RitzFitResult` are this function at the fitted n.

    Raises
    ------
    RydbergDomainError
        Raised if ``n < 1`` or ``n* <= 0``.
    """
    if int(n) != n or n < 1:
        raise RydbergDomainError(f"n must be a positive integer, got {n}")
    R = _rydberg(constants)
    if params.method == 1:
        defect, t = solveDefect(int(n), params.coefficients)
        return params.eIonisation - R*t
    nStar = _extendedNStar(np.array([n]), params.coefficients)
    if not nStar[0] > 0:
        raise RydbergDomainError(f"n* = {nStar[0]} is not positive for n={n}")
    return float((params.eIonisation - R/(nStar*nStar))[0])


@dataclasses.dataclass(frozen=True)
class LevelResidual:
    """Per-level fit diagnostics; ``effectiveN`` and ``defect`` are
    derived from the measured energy and the fitted E_i.
    """

    n: int
    energy: float
    modelEnergy: float
    residual: float
    effectiveN: float
    defect: float


@dataclasses.dataclass(frozen=True)
class RitzFitResult:
    """Outcome of a series fit.

    ``perLevel`` holds one `LevelResidual` per dataset level with
    ``residual = energy - modelEnergy`` and ``modelEnergy`` from
    `predictLevel`. For method 1 with the balanced closure the fit itself
    evaluates t from the measured energies, so these residuals can differ
    from the solver's own by up to about 1e-4 MHz.
    """

    params: RitzParameters
    report: FitReport
    perLevel: tuple
    closure: str = "balanced"
    constants: PhysicalConstants = PhysicalConstants()

    @property
    def converged(self):
        return self.report.converged

    def getSigma(self, name):
        """One-sigma uncertainty of the parameter ``name``."""
        return self.report.getParam(name)[1]

    def toDict(self):
        """JSON-serialisable report; the ``params`` and ``constants``
        entries are what `predictLevel` needs.
        """
        return {
            "method": self.params.method,
            "order": self.params.order,
            "closure": self.closure if self.params.method == 1 else None,
            "params": self.params.toDict(),
            "param_names": list(self.report.paramNames),
            "sigmas": {name: float(s) for name, s in zip(self.report.paramNames, self.report.sigmas)},
            "covariance": [[float(v) for v in row] for row in self.report.covariance],
            "chi2": float(self.report.chi2),
            "reduced_chi2": float(self.report.reducedChi2),
            "dof": self.report.dof,
            "n_iterations": self.report.nIterations,
            "converged": bool(self.report.converged),
            "message": self.report.message,
            "constants": self.constants.toDict(),
            "per_level": [dataclasses.asdict(row) for row in self.perLevel],
        }


def residualStats(result):
    """Mean, sample standard deviation and largest absolute value of the
    residuals of ``result`` (MHz).

    The standard deviation of a single residual is reported as 0.
    """
    residuals = np.array([row.residual for row in result.perLevel])
    std = float(np.std(residuals, ddof=1)) if len(residuals) > 1 else 0.0
    return float(np.mean(residuals)), std, float(np.max(np.abs(residuals)))


class RitzSeriesModel(ResidualModel):
    """Weighted residuals ``(E_model - E_n)/sigma_n`` of a series model.

    The parameter vector is ``[eIonisationOffset, coefficients...]`` with
    ``E_i = referenceEnergy + eIonisationOffset`` and ``referenceEnergy =
    E_max + R/n_max^2``. Residuals are formed from the binding energies
    ``referenceEnergy - E_n``, computed once, so neither the residuals nor
    the numerical Jacobian see the 1e9 MHz scale of E_i.

    Parameters
    ----------
    dataset : `~rydberg_ritz.levels.LevelDataset`
        Levels to fit.
    method : `int`
        Series model, 1, 2 or 3.
    order : `int`
        Number of defect coefficients.
    constants : `~rydberg_ritz.constants.PhysicalConstants`, optional
        Physical constants.
    closure : `str`, optional
        Method 1 only: ``"balanced"`` or ``"selfConsistent"``.
    """

    def __init__(self, dataset, method, order, constants=None, closure="balanced"):
        if closure not in CLOSURES:
            raise ValueError(f"closure must be one of {CLOSURES}, got {closure!r}")
        self.dataset = dataset
        self.method = method
        self.order = order
        self.closure = closure
        self.rydberg = _rydberg(constants)
        self._n = dataset.n
        self._sigmas = dataset.sigmas
        nMax = float(self._n[-1])
        self.referenceEnergy = float(dataset.energies[-1]) + self.rydberg/(nMax*nMax)
        self._referenceBinding = self.referenceEnergy - dataset.energies
        self._paramNames = ("eIonisationOffset",) + coefficientNames(method, order)

    @property
    def paramNames(self):
        return self._paramNames

    @property
    def nData(self):
        return len(self._n)

    def toVector(self, params):
        """Parameter vector for ``params`` (a `RitzParameters`)."""
        return np.array((params.eIonisation - self.referenceEnergy,) + params.coefficients)

    def fromVector(self, vector):
        """`RitzParameters` for a parameter vector."""
        return RitzParameters(eIonisation=self.referenceEnergy + vector[0], method=self.method,
                              coefficients=tuple(vector[1:]))

    def effectiveQuantumNumbers(self, binding, coefficients):
        """Model ``n*`` of every level.

        Parameters
        ----------
        binding : `numpy.ndarray`
            Measured binding energies ``E_i - E_n``; used by the balanced
            method 1 closure only.
        coefficients : sequence of `float`
            Defect coefficients.

        Raises
        ------
        ModelDomainError
            Raised if a level would have ``n* <= 0``.
        """
        if self.method == 1:
            if self.closure == "balanced":
                defects = np.polynomial.polynomial.polyval(binding/self.rydberg, coefficients)
                nStar = self._n - defects
            else:
                try:
                    defects = np.array([solveDefect(int(n), coefficients)[0] for n in self._n])
                except (RydbergDomainError, DefectConvergenceError) as e:
                    raise ModelDomainError(str(e)) from None
                nStar = self._n - defects
        else:
            try:
                nStar = _extendedNStar(self._n, coefficients)
            except RydbergDomainError as e:
                raise ModelDomainError(str(e)) from None
        if np.any(nStar <= 0):
            raise ModelDomainError(f"non-positive effective quantum number for coefficients {coefficients}")
        return nStar

    def residuals(self, params):
        binding = self._referenceBinding + params[0]
        if np.any(binding <= 0):
            raise ModelDomainError(f"E_i = {self.referenceEnergy + params[0]} MHz does not lie above "
                                   f"every level")
        nStar = self.effectiveQuantumNumbers(binding, params[1:])
        return (binding - self.rydberg/(nStar*nStar))/self._sigmas


class FitRitzSeriesConfig(pexConfig.Config):
    method = pexConfig.ChoiceField(
        doc="Series model to fit",
        dtype=int,
        allowed={
            1: "Ritz expansion in t = 1/(n - d(n))^2 (E_i, delta0, delta2, delta4, ...)",
            2: "Extended formula in m = n - delta0 (E_i, delta0, a, b, ...)",
            3: "Extended formula truncated after a (E_i, delta0, a); valid for n >= 20",
        },
        default=1,
    )
    order = pexConfig.Field(
        doc="Number of defect coefficients; None selects 3 for methods 1 and 2 and 2 for method 3",
        dtype=int,
        default=None,
        optional=True,
        check=lambda x: 1 <= x <= 3,
    )
    closure = pexConfig.ChoiceField(
        doc="How method 1 evaluates the expansion variable t",
        dtype=str,
        allowed={
            "balanced": "t = (E_i - E_n)/R from the measured energy and current E_i",
            "selfConsistent": "t from the self-consistent defect of the current coefficients",
        },
        default="balanced",
    )
    initialDefect = pexConfig.Field(
        doc="Starting value of delta0",
        dtype=float,
        default=0.016,
        check=lambda x: abs(x) < 1,
    )
    method3MinN = pexConfig.Field(
        doc="Method 3 warns about levels below this n",
        dtype=int,
        default=20,
    )
    fitter = LevenbergMarquardtTask.makeField("Solver for the series fit")

    def validate(self):
        super().validate()
        if self.method == 3 and self.order not in (None, 2):
            raise pexConfig.FieldValidationError(FitRitzSeriesConfig.order, self,
                                                 "method 3 fits exactly two defect coefficients")

    def getOrder(self):
        """Number of coefficients that will be fitted."""
        return defaultOrder(self.method) if self.order is None else self.order


class FitRitzSeriesTask(Task):
    """Fit a Rydberg-Ritz series model to a level dataset.

    The fit is weighted by the level uncertainties and starts from
    ``E_i = E_max + R/n_max^2``, ``delta0 = config.initialDefect`` and zero
    higher coefficients.
    """

    ConfigClass = FitRitzSeriesConfig
    _DefaultName = "fitRitzSeries"

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.makeSubtask("fitter")

    @timeMethod
    def run(self, dataset, constants=None):
        """Fit ``dataset``.

        Parameters
        ----------
        dataset : `~rydberg_ritz.levels.LevelDataset`
            Levels to fit.
        constants : `~rydberg_ritz.constants.PhysicalConstants`, optional
            Physical constants; defaults if `None`.

        Returns
        -------
        result : `RitzFitResult`
            Parameters, solver report and per-level residuals.

        Raises
        ------
        SeriesArityError
            Raised if the dataset has fewer than ``order + 2`` levels.
        """
        constants = constants or PhysicalConstants()
        method = self.config.method
        order = self.config.getOrder()
        if len(dataset) < order + 2:
            raise SeriesArityError(f"method {method} with {order} defect coefficients needs at least "
                                   f"{order + 2} levels, got {len(dataset)}")
        if method == 3:
            low = [int(n) for n in dataset.n if n < self.config.method3MinN]
            if low:
                self.log.warning("Method 3 is accurate for n >= %d; dataset includes n = %s",
                                 self.config.method3MinN, low)

        model = RitzSeriesModel(dataset, method, order, constants=constants, closure=self.config.closure)
        initial = [0.0, self.config.initialDefect] + [0.0]*(order - 1)
        self.log.info("Fitting method %d (%d coefficients) to %d levels, n = %d..%d", method, order,
                      len(dataset), dataset.n[0], dataset.n[-1])
        fitted = self.fitter.run(model, initial)

        params = model.fromVector(fitted.params)
        vector = np.array((params.eIonisation,) + params.coefficients)
        vector.setflags(write=False)
        # The offset differs from E_i by a constant: sigmas and covariance carry over.
        report = dataclasses.replace(fitted, paramNames=("eIonisation",) + params.names, params=vector)
        with self.timer("residuals"):
            perLevel = self.computeResiduals(dataset, params, constants)
        self.metadata.add("eIonisation", params.eIonisation)
        self.metadata.add("chi2", report.chi2)
        self.log.info("E_i = %.1f +/- %.1f MHz, delta0 = %.6f", params.eIonisation, report.sigmas[0],
                      params.coefficients[0])
        return RitzFitResult(params=params, report=report, perLevel=perLevel,
                             closure=self.config.closure, constants=constants)

    def computeResiduals(self, dataset, params, constants):
        """Per-level diagnostics of ``params`` against ``dataset``.

        The model energy of each level is `predictLevel` at that n.
        """
        rows = []
        for level in dataset:
            modelEnergy = predictLevel(params, level.n, constants)
            nStar = effectiveN(level.energy, params.eIonisation, constants)
            rows.append(LevelResidual(n=level.n, energy=level.energy, modelEnergy=modelEnergy,
                                      residual=level.energy - modelEnergy,
                                      effectiveN=nStar, defect=level.n - nStar))
        return tuple(rows)


def _fitWithMethod(method, dataset, order, config, constants, closure):
    template, config = config, FitRitzSeriesConfig()
    if template is not None:
        config.loadFromString(template.saveToString())
    config.method = method
    if order is not None:
        config.order = order
    elif method == 3:
        config.order = None
    if closure is not None:
        config.closure = closure
    config.validate()
    return FitRitzSeriesTask(config=config).run(dataset, constants)


def fitMethod1(dataset, order=3, config=None, constants=None, closure=None):
    """Fit the Ritz-expansion series (method 1); see `FitRitzSeriesTask`."""
    return _fitWithMethod(1, dataset, order, config, constants, closure)


def fitMethod2(dataset, order=3, config=None, constants=None):
    """Fit the extended series in ``m = n - delta0`` (method 2)."""
    return _fitWithMethod(2, dataset, order, config, constants, None)


def fitMethod3(dataset, config=None, constants=None):
    """Fit the extended series truncated after ``a`` (method 3)."""
    return _fitWithMethod(3, dataset, None, config, constants, None)


def compareParameters(result, reference):
    """Compare fitted parameters with reference values.

    Parameters
    ----------
    result : `RitzFitResult`
        Fit to compare.
    reference : `dict`
        Parameter name to ``(value, sigma)``, e.g. `PUBLISHED_METHOD3`.

    Returns
    -------
    comparison : `dict`
        For every name present in both, ``(difference, nSigma)`` where the
        difference is fitted minus reference and ``nSigma`` divides it by
        the two sigmas added in quadrature.
    """
    comparison = {}
    for name, (value, sigma) in reference.items():
        if name not in result.report.paramNames:
            continue
        fitted, fittedSigma = result.report.getParam(name)
        difference = fitted - value
        combined = math.hypot(fittedSigma, sigma)
        comparison[name] = (difference, difference/combined if combined > 0 else math.inf)
    return comparison
