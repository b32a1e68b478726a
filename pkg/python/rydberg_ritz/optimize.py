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

"""Weighted nonlinear least squares by the Levenberg-Marquardt method.

Every fit in the package goes through `LevenbergMarquardtTask`: line
centres from scan traces and Rydberg-Ritz series from level tables.
Models supply weighted residuals ``(model - datum) / sigma``; Jacobians are
computed numerically by central differences.
"""

__all__ = ["ModelDomainError", "NonFiniteResidualError", "RankDeficientError", "ResidualModel",
           "CurveModel", "FitReport", "numericJacobian", "computeCovariance",
           "LevenbergMarquardtConfig", "LevenbergMarquardtTask", "lmFit"]

import abc
import dataclasses

import numpy as np

import lsst.pex.config as pexConfig
from lsst.utils.timer import timeMethod

from .task import Task, TaskError

_EPS = np.finfo(float).eps


class ModelDomainError(TaskError, ValueError):
    """Parameters lie outside the region where a model is defined.

    Raised by `ResidualModel.residuals`. Inside `LevenbergMarquardtTask` a
    trial step that raises this is rejected and the damping increased.
    """
    pass


class NonFiniteResidualError(TaskError, FloatingPointError):
    """A model returned NaN or an infinite residual.
    """
    pass


class RankDeficientError(TaskError, ValueError):
    """The Jacobian does not constrain every parameter.

    Parameters
    ----------
    index : `int`
        Index of the parameter that is unconstrained, or the one dominating
        the degenerate combination.
    message : `str`
        Description of the failure.
    """

    def __init__(self, index, message):
        super().__init__(message)
        self.index = index


class ResidualModel(abc.ABC):
    """A model and its data, seen by the solver as weighted residuals.
    """

    @property
    @abc.abstractmethod
    def paramNames(self):
        """Names of the fit parameters, in parameter-vector order."""
        raise NotImplementedError()

    @property
    @abc.abstractmethod
    def nData(self):
        """Number of data points (length of the residual vector)."""
        raise NotImplementedError()

    @abc.abstractmethod
    def residuals(self, params):
        """Return the weighted residuals ``(model - datum) / sigma``.

        Parameters
        ----------
        params : `numpy.ndarray`
            Parameter vector.

        Returns
        -------
        residuals : `numpy.ndarray`
            Array of length `nData`.

        Raises
        ------
        ModelDomainError
            Raised if ``params`` is infeasible for the model.
        """
        raise NotImplementedError()

    @property
    def nParams(self):
        return len(self.paramNames)


class CurveModel(ResidualModel):
    """Residuals of ``y = function(x, *params)`` with optional uncertainties.

    Parameters
    ----------
    function : callable
        ``function(x, *params)`` returning an array shaped like ``x``.
    x, y : array-like
        Independent variable and data.
    paramNames : `list` [`str`]
        Parameter names.
    sigma : array-like or `float`, optional
        Data uncertainties; unit weights if `None`.
    """

    def __init__(self, function, x, y, paramNames, sigma=None):
        self.function = function
        self.x = np.asarray(x, dtype=float)
        self.y = np.asarray(y, dtype=float)
        self.sigma = np.ones_like(self.y) if sigma is None else np.broadcast_to(
            np.asarray(sigma, dtype=float), self.y.shape)
        if np.any(self.sigma <= 0):
            raise ValueError("data uncertainties must be positive")
        self._paramNames = tuple(paramNames)

    @property
    def paramNames(self):
        return self._paramNames

    @property
    def nData(self):
        return len(self.y)

    def residuals(self, params):
        return (self.function(self.x, *params) - self.y)/self.sigma


@dataclasses.dataclass(frozen=True)
class FitReport:
    """Outcome of a least-squares fit.

    ``sigmas`` are the square roots of the ``covariance`` diagonal; they are
    NaN when the covariance could not be computed, in which case
    ``converged`` is `False` and ``message`` says why.
    """

    paramNames: tuple
    params: np.ndarray
    sigmas: np.ndarray
    covariance: np.ndarray
    chi2: float
    reducedChi2: float
    residuals: np.ndarray
    nIterations: int
    converged: bool
    message: str = ""
    chi2History: tuple = ()

    @property
    def dof(self):
        return len(self.residuals) - len(self.params)

    def getParam(self, name):
        """Return ``(value, sigma)`` of the parameter called ``name``."""
        index = self.paramNames.index(name)
        return float(self.params[index]), float(self.sigmas[index])

    def toDict(self):
        """Return a JSON-serialisable summary."""
        return {
            "param_names": list(self.paramNames),
            "params": [float(v) for v in self.params],
            "sigmas": [float(v) for v in self.sigmas],
            "covariance": [[float(v) for v in row] for row in self.covariance],
            "chi2": float(self.chi2),
            "reduced_chi2": float(self.reducedChi2),
            "dof": self.dof,
            "n_iterations": self.nIterations,
            "converged": bool(self.converged),
            "message": self.message,
        }


def numericJacobian(model, params, stepRel=1e-6):
    """Central-difference Jacobian of the weighted residuals.

    Parameters
    ----------
    model : `ResidualModel`
        Model to differentiate.
    params : array-like
        Feasible parameter vector.
    stepRel : `float`, optional
        Step relative to ``max(|param|, 1)``, the scale the solver uses.

    Returns
    -------
    jacobian : `numpy.ndarray`
        ``(nData, nParams)`` array, entry ``(i, j)`` is
        d residual_i / d param_j.
    fallback : `numpy.ndarray`
        Boolean flag per parameter, `True` where ``|param| < 1`` and the
        absolute step ``stepRel`` was used.
    """
    params = np.array(params, dtype=float)
    jacobian = np.empty((model.nData, len(params)))
    fallback = np.abs(params) < 1.0
    for j, value in enumerate(params):
        step = stepRel*max(abs(value), 1.0)
        upper = params.copy()
        lower = params.copy()
        upper[j] = value + step
        lower[j] = value - step
        jacobian[:, j] = (np.asarray(model.residuals(upper)) - np.asarray(model.residuals(lower))) \
            / (upper[j] - lower[j])
    return jacobian, fallback


def computeCovariance(jacobian, chi2, dof, scaleByReducedChi2=True, paramNames=None):
    """Parameter covariance and uncertainties from the weighted Jacobian.

    Parameters
    ----------
    jacobian : `numpy.ndarray`
        Jacobian of the weighted residuals at the best fit.
    chi2 : `float`
        Chi-square at the best fit.
    dof : `int`
        Degrees of freedom, data count minus parameter count.
    scaleByReducedChi2 : `bool`, optional
        Multiply the covariance by ``chi2 / dof``.
    paramNames : `list` [`str`], optional
        Used in error messages.

    Returns
    -------
    covariance : `numpy.ndarray`
        ``(J^T J)^-1``, scaled if requested.
    sigmas : `numpy.ndarray`
        Square root of the covariance diagonal.

    Raises
    ------
    RankDeficientError
        Raised if a parameter, or a combination of parameters, is not
        constrained by the data.
    ValueError
        Raised if scaling is requested with ``dof < 1``.
    """
    jacobian = np.asarray(jacobian, dtype=float)
    nParams = jacobian.shape[1]
    names = list(paramNames) if paramNames is not None else [f"p{j}" for j in range(nParams)]
    if scaleByReducedChi2 and dof < 1:
        raise ValueError(f"cannot scale covariance with {dof} degrees of freedom")
    alpha = jacobian.T @ jacobian
    norm = np.sqrt(np.diag(alpha))
    for j in range(nParams):
        if not norm[j] > 0:
            raise RankDeficientError(j, f"parameter {j} ({names[j]}) does not affect any residual")
    # Invert the correlation-like normalised matrix; raw parameter scales
    # span many orders of magnitude.
    normalised = alpha/np.outer(norm, norm)
    eigenvalues, eigenvectors = np.linalg.eigh(normalised)
    if eigenvalues[0] <= _EPS*nParams*eigenvalues[-1]:
        j = int(np.argmax(np.abs(eigenvectors[:, 0])))
        raise RankDeficientError(j, f"parameter {j} ({names[j]}) is degenerate with the others; "
                                    f"normal matrix condition {eigenvalues[-1]/max(eigenvalues[0], 0):.3g}")
    covariance = (eigenvectors/eigenvalues) @ eigenvectors.T/np.outer(norm, norm)
    covariance = 0.5*(covariance + covariance.T)
    if scaleByReducedChi2:
        covariance *= chi2/dof
    return covariance, np.sqrt(np.diag(covariance))


class LevenbergMarquardtConfig(pexConfig.Config):
    """Solver options for `LevenbergMarquardtTask`.
    """

    maxIterations = pexConfig.RangeField(
        doc="Maximum number of trial steps, accepted or rejected",
        dtype=int,
        default=200,
        min=1,
    )
    paramTol = pexConfig.RangeField(
        doc="Convergence when the largest scaled parameter step is below this, relative to the "
            "largest scaled parameter",
        dtype=float,
        default=1e-10,
        min=0.0,
        inclusiveMin=False,
    )
    chi2Tol = pexConfig.RangeField(
        doc="Convergence when an accepted step lowers chi-square by less than this fraction",
        dtype=float,
        default=1e-12,
        min=0.0,
        inclusiveMin=False,
    )
    initialDamping = pexConfig.RangeField(
        doc="Initial Marquardt damping factor",
        dtype=float,
        default=1e-3,
        min=0.0,
        inclusiveMin=False,
    )
    maxDamping = pexConfig.RangeField(
        doc="Give up (not converged) once the damping exceeds this",
        dtype=float,
        default=1e10,
        min=0.0,
        inclusiveMin=False,
    )
    jacobianStepRel = pexConfig.RangeField(
        doc="Relative step of the central-difference Jacobian",
        dtype=float,
        default=1e-6,
        min=0.0,
        inclusiveMin=False,
    )
    scaleByReducedChi2 = pexConfig.Field(
        doc="Scale the parameter covariance by chi2/dof",
        dtype=bool,
        default=True,
    )


class LevenbergMarquardtTask(Task):
    """Minimise the sum of squared weighted residuals of a `ResidualModel`.

    Notes
    -----
    Each parameter is divided by ``max(|initial value|, 1)`` before the
    normal equations are formed, so that an ionisation energy near 1e9 MHz
    and a quantum defect near 1e-2 can be fitted together. The damping
    follows Marquardt's schedule: times 10 after a rejected step, divided by
    10 after an accepted one; the damping term is proportional to the
    diagonal of the normal matrix. A step is accepted only if it lowers
    chi-square.
    """

    ConfigClass = LevenbergMarquardtConfig
    _DefaultName = "fitter"

    @timeMethod
    def run(self, model, initialParams):
        """Fit ``model`` starting from ``initialParams``.

        Parameters
        ----------
        model : `ResidualModel`
            Model and data to fit.
        initialParams : array-like
            Starting parameter vector, length ``model.nParams``.

        Returns
        -------
        report : `FitReport`
            Best-fit parameters with covariance. Non-convergence is reported
            through ``report.converged``, not raised.

        Raises
        ------
        ModelDomainError
            Raised if ``initialParams`` is infeasible.
        NonFiniteResidualError
            Raised as soon as the model returns a non-finite residual.
        ValueError
            Raised if the parameter vector has the wrong length or the model
            has fewer data than parameters.
        """
        params = np.array(initialParams, dtype=float)
        names = tuple(model.paramNames)
        if params.shape != (len(names),):
            raise ValueError(f"expected {len(names)} initial parameters {names}, got {params.shape}")
        if model.nData < len(names):
            raise ValueError(f"{model.nData} data points cannot constrain {len(names)} parameters")
        scale = np.maximum(np.abs(params), 1.0)
        stepRel = self.config.jacobianStepRel

        residuals = self._evaluate(model, params)
        chi2 = float(residuals @ residuals)
        history = [chi2]
        damping = self.config.initialDamping
        converged = False
        message = "maximum iterations reached"
        jacobian, fallback = numericJacobian(model, params, stepRel)
        if fallback.any():
            self.log.debug("Absolute Jacobian step used for %s", [n for n, f in zip(names, fallback) if f])

        nIterations = 0
        while nIterations < self.config.maxIterations:
            nIterations += 1
            scaledJacobian = jacobian*scale
            gradient = scaledJacobian.T @ residuals
            if not gradient.any():
                converged, message = True, "gradient vanished"
                break
            alpha = scaledJacobian.T @ scaledJacobian
            diagonal = np.diag(alpha)
            diagonal = np.where(diagonal > 0, diagonal, 1.0)
            try:
                step = np.linalg.solve(alpha + damping*np.diag(diagonal), -gradient)
            except np.linalg.LinAlgError:
                step = None
                trialChi2 = np.inf
            else:
                trial = params + step*scale
                try:
                    trialResiduals = self._evaluate(model, trial)
                    trialChi2 = float(trialResiduals @ trialResiduals)
                except ModelDomainError as e:
                    self.log.debug("Iteration %d: trial step infeasible (%s)", nIterations, e)
                    trialChi2 = np.inf

            stepTol = self.config.paramTol*(np.max(np.abs(params/scale)) + self.config.paramTol)
            small = step is not None and np.max(np.abs(step)) <= stepTol
            if trialChi2 < chi2:
                decrease = chi2 - trialChi2
                self.log.debug("Iteration %d: chi2 %.10g -> %.10g, damping %.3g", nIterations, chi2,
                               trialChi2, damping)
                params, residuals, previous, chi2 = trial, trialResiduals, chi2, trialChi2
                history.append(chi2)
                damping = max(damping/10.0, _EPS)
                if small:
                    converged, message = True, "parameter step below paramTol"
                    break
                if decrease <= self.config.chi2Tol*previous or chi2 == 0.0:
                    converged, message = True, "chi2 decrease below chi2Tol"
                    break
                jacobian, _ = numericJacobian(model, params, stepRel)
            else:
                # Rejected: converged only if the undamped step is negligible too.
                if small:
                    stationary = self._stationaryMessage(scaledJacobian, residuals, gradient, chi2, stepTol)
                    if stationary:
                        converged, message = True, stationary
                        break
                damping *= 10.0
                self.log.debug("Iteration %d: step rejected, damping raised to %.3g", nIterations, damping)
                if damping > self.config.maxDamping:
                    message = "damping exhausted without lowering chi2"
                    break

        jacobian, _ = numericJacobian(model, params, stepRel)
        dof = model.nData - len(names)
        scaled = self.config.scaleByReducedChi2 and dof >= 1
        try:
            covariance, sigmas = computeCovariance(jacobian, chi2, dof, scaleByReducedChi2=scaled,
                                                   paramNames=names)
        except RankDeficientError as e:
            converged = False
            message = f"{message}; covariance unavailable: {e}"
            covariance = np.full((len(names), len(names)), np.nan)
            sigmas = np.full(len(names), np.nan)

        reducedChi2 = chi2/dof if dof >= 1 else np.nan
        self.metadata.add("nIterations", nIterations)
        self.metadata.add("chi2", chi2)
        if converged:
            self.log.info("Converged after %d iterations (%s): chi2=%.6g, reduced chi2=%.4g",
                          nIterations, message, chi2, reducedChi2)
        else:
            self.log.warning("Not converged after %d iterations: %s", nIterations, message)
        for array in (params, sigmas, covariance, residuals):
            array.setflags(write=False)
        return FitReport(paramNames=names, params=params, sigmas=sigmas, covariance=covariance,
                         chi2=chi2, reducedChi2=reducedChi2, residuals=residuals,
                         nIterations=nIterations, converged=converged, message=message,
                         chi2History=tuple(history))

    def _stationaryMessage(self, scaledJacobian, residuals, gradient, chi2, stepTol):
        """Convergence message if the Gauss-Newton step at the current
        point is below ``stepTol`` or promises a chi-square decrease below
        ``chi2Tol``; an empty string otherwise.
        """
        gaussNewton = np.linalg.lstsq(scaledJacobian, -residuals, rcond=None)[0]
        if np.max(np.abs(gaussNewton)) <= stepTol:
            return "Gauss-Newton step below paramTol"
        # For the Gauss-Newton step the linearised decrease is -gradient.step.
        if -float(gradient @ gaussNewton) <= self.config.chi2Tol*chi2:
            return "predicted chi2 decrease below chi2Tol"
        return ""

    def _evaluate(self, model, params):
        residuals = np.asarray(model.residuals(params), dtype=float)
        if residuals.shape != (model.nData,):
            raise ValueError(f"model returned {residuals.shape} residuals, expected ({model.nData},)")
        if not np.all(np.isfinite(residuals)):
            raise NonFiniteResidualError(f"non-finite residual at parameters "
                                         f"{dict(zip(model.paramNames, params.tolist()))}")
        return residuals


def lmFit(model, initialParams, config=None):
    """Fit ``model`` with a default-named `LevenbergMarquardtTask`.
    """
    return LevenbergMarquardtTask(config=config).run(model, initialParams)
