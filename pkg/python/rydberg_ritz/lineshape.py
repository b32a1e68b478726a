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

"""Line-shape models and line-centre extraction from laser scan traces.

Two models are provided: a Lorentzian for direct absorption traces and the
Wahlquist first-harmonic profile of a frequency-modulated Lorentzian for
lock-in (derivative) traces. Both are written as
``baseline + amplitude * profile(frequency - center)``.
"""

__all__ = ["MODEL_KINDS", "TraceError", "LineGuessError", "LineShapeEvaluationError", "ScanTrace",
           "LineShapeParams", "LineFit", "lorentzianProfile", "wahlquistProfile", "lorentzian",
           "wahlquist", "evaluateModel", "autoInitGuess", "LineShapeModel", "readTrace",
           "FitLineCenterConfig", "FitLineCenterTask"]

import dataclasses
import math

import numpy as np

import lsst.pex.config as pexConfig
from lsst.utils.timer import timeMethod

from .optimize import LevenbergMarquardtTask, ModelDomainError, ResidualModel
from .tables import readTable
from .task import Task, TaskError

MODEL_KINDS = ("lorentzian", "wahlquist")

DEFAULT_MOD_AMPLITUDE_MHZ = 15.0

# A trace needs a few points either side of the line.
MIN_TRACE_POINTS = 8


class TraceError(TaskError, ValueError):
    """A scan trace is too short, unordered or holds non-finite values.
    """
    pass


class LineGuessError(TaskError, ValueError):
    """No line feature could be found to start a fit from.
    """
    pass


class LineShapeEvaluationError(TaskError, ArithmeticError):
    """The Wahlquist profile is undefined for the given arguments.

    Parameters
    ----------
    message : `str`
        Description.
    freq : `float` or `numpy.ndarray`, optional
        Frequency (or detuning) at which evaluation failed.
    params : `LineShapeParams`, optional
        Line-shape parameters in use.
    """

    def __init__(self, message, freq=None, params=None):
        super().__init__(message)
        self.freq = freq
        self.params = params


@dataclasses.dataclass(frozen=True)
class ScanTrace:
    """Signal recorded during one laser sweep.

    Parameters
    ----------
    frequencies : array-like
        Laser frequency of each sample (MHz), strictly increasing.
    signals : array-like
        Detector or lock-in signal (arbitrary units).
    """

    frequencies: np.ndarray
    signals: np.ndarray

    def __post_init__(self):
        frequencies = np.array(self.frequencies, dtype=float)
        signals = np.array(self.signals, dtype=float)
        if frequencies.ndim != 1 or frequencies.shape != signals.shape:
            raise TraceError(f"frequencies {frequencies.shape} and signals {signals.shape} "
                             "must be 1-d arrays of equal length")
        if len(frequencies) < MIN_TRACE_POINTS:
            raise TraceError(f"a trace needs at least {MIN_TRACE_POINTS} points, got {len(frequencies)}")
        if not (np.all(np.isfinite(frequencies)) and np.all(np.isfinite(signals))):
            raise TraceError("trace holds non-finite values")
        if np.any(np.diff(frequencies) <= 0):
            index = int(np.argmax(np.diff(frequencies) <= 0)) + 1
            raise TraceError(f"frequencies must increase strictly; sample {index} is at "
                             f"{frequencies[index]} after {frequencies[index - 1]}")
        frequencies.setflags(write=False)
        signals.setflags(write=False)
        object.__setattr__(self, "frequencies", frequencies)
        object.__setattr__(self, "signals", signals)

    @classmethod
    def fromPoints(cls, points):
        """Build a trace from ``(frequency, signal)`` pairs."""
        points = np.asarray(list(points), dtype=float).reshape(-1, 2)
        return cls(points[:, 0], points[:, 1])

    def __len__(self):
        return len(self.frequencies)

    def shifted(self, offset):
        """Return a copy with ``offset`` (MHz) added to every frequency."""
        return ScanTrace(self.frequencies + offset, self.signals)

    def scaled(self, factor):
        """Return a copy with every signal multiplied by ``factor``."""
        return ScanTrace(self.frequencies, self.signals*factor)


@dataclasses.dataclass(frozen=True)
class LineShapeParams:
    """Parameters of a line-shape model.

    Parameters
    ----------
    center : `float`
        Line centre (MHz).
    fwhm : `float`
        Full width at half maximum of the underlying Lorentzian (MHz).
    amplitude : `float`
        Scale of the profile; non-zero.
    baseline : `float`, optional
        Constant signal offset.
    modAmplitude : `float`, optional
        Peak frequency excursion of the modulation (MHz); required positive
        by the Wahlquist model, ignored by the Lorentzian.
    """

    center: float
    fwhm: float
    amplitude: float
    baseline: float = 0.0
    modAmplitude: float = 0.0

    def __post_init__(self):
        for field in dataclasses.fields(self):
            value = float(getattr(self, field.name))
            if not math.isfinite(value):
                raise ValueError(f"{field.name} must be finite, got {value}")
            object.__setattr__(self, field.name, value)
        if self.fwhm <= 0:
            raise ValueError(f"fwhm must be positive, got {self.fwhm}")
        if self.modAmplitude < 0:
            raise ValueError(f"modAmplitude must not be negative, got {self.modAmplitude}")
        if self.amplitude == 0:
            raise ValueError("amplitude must be non-zero")


def lorentzianProfile(detuning, fwhm):
    """Unit-height Lorentzian at ``detuning`` from line centre."""
    halfWidth2 = (0.5*fwhm)**2
    detuning = np.asarray(detuning, dtype=float)
    return halfWidth2/(detuning*detuning + halfWidth2)


def wahlquistProfile(detuning, fwhm, modAmplitude):
    """First-harmonic lock-in profile of a frequency-modulated Lorentzian.

    Parameters
    ----------
    detuning : `float` or array-like
        Laser frequency minus line centre (MHz).
    fwhm : `float`
        FWHM of the Lorentzian, H_1/2 (MHz).
    modAmplitude : `float`
        Modulation amplitude, H_w (MHz).

    Returns
    -------
    profile : `numpy.ndarray`
        ``sign(d) (2/H_w)^2 sqrt(2g - u) / (2 sqrt(u - 2) (u - g))`` with
        ``a = d/H_w``, ``b = H_1/2/(2 H_w)``, ``g = 1 + b^2 + a^2`` and
        ``u = g + sqrt(g^2 - 4 a^2)``. Zero at ``d = 0``.

    Raises
    ------
    LineShapeEvaluationError
        Raised if ``u - 2`` or ``u - g`` is not positive for some detuning.

    Notes
    -----
    ``sqrt(2g - u) = 2|a|/sqrt(u)`` and ``g^2 - 4a^2 = ((|a| - 1)^2 + b^2)(g + 2|a|)``
    are used so that the profile is exactly odd in ``d`` and free of
    cancellation near the centre. ``u - 2`` is likewise evaluated as
    ``4 b^2/(sqrt(g^2 - 4a^2) + 2 - g)`` where ``g < 2``.
    """
    if not (fwhm > 0 and modAmplitude > 0):
        raise LineShapeEvaluationError(f"fwhm ({fwhm}) and modAmplitude ({modAmplitude}) must be positive")
    detuning = np.asarray(detuning, dtype=float)
    alpha = detuning/modAmplitude
    beta2 = (0.5*fwhm/modAmplitude)**2
    absAlpha = np.abs(alpha)
    gamma = 1.0 + beta2 + alpha*alpha
    root = np.sqrt(((absAlpha - 1.0)**2 + beta2)*(gamma + 2.0*absAlpha))
    u = gamma + root
    with np.errstate(divide="ignore", invalid="ignore"):
        uMinus2 = np.where(gamma < 2.0, 4.0*beta2/(root + 2.0 - gamma), gamma - 2.0 + root)
    bad = ~((uMinus2 > 0) & (root > 0) & np.isfinite(u))
    if np.any(bad):
        raise LineShapeEvaluationError("Wahlquist profile undefined (u - 2 or u - gamma not positive)",
                                       freq=detuning[bad] if detuning.ndim else float(detuning))
    return (2.0/modAmplitude)**2*alpha/(np.sqrt(u)*np.sqrt(uMinus2)*root)


def lorentzian(freq, params):
    """Evaluate the Lorentzian model of ``params`` at ``freq`` (MHz).
    """
    return params.baseline + params.amplitude*lorentzianProfile(np.asarray(freq) - params.center,
                                                                  params.fwhm)


def wahlquist(freq, params):
    """Evaluate the Wahlquist derivative model of ``params`` at ``freq``.

    The value at ``freq == params.center`` is ``params.baseline``.

    Raises
    ------
    LineShapeEvaluationError
        Raised if ``params.modAmplitude`` is zero or the profile is undefined;
        the exception carries ``freq`` and ``params``.
    """
    try:
        profile = wahlquistProfile(np.asarray(freq) - params.center, params.fwhm, params.modAmplitude)
    except LineShapeEvaluationError as e:
        raise LineShapeEvaluationError(f"{e} for {params}", freq=freq, params=params) from None
    return params.baseline + params.amplitude*profile


def evaluateModel(modelKind, freq, params):
    """Evaluate the model named ``modelKind`` (one of `MODEL_KINDS`)."""
    if modelKind == "lorentzian":
        return lorentzian(freq, params)
    if modelKind == "wahlquist":
        return wahlquist(freq, params)
    raise ValueError(f"unknown line model {modelKind!r}; expected one of {MODEL_KINDS}")


def _crossing(f, y, i, j, level):
    """Frequency where ``y`` crosses ``level`` between samples i and j."""
    return f[i] + (level - y[i])/(y[j] - y[i])*(f[j] - f[i])


def autoInitGuess(trace, modelKind, modAmplitude=DEFAULT_MOD_AMPLITUDE_MHZ):
    """Starting parameters for a line fit, read off the trace.

    Parameters
    ----------
    trace : `ScanTrace`
        Trace to inspect.
    modelKind : `str`
        ``"lorentzian"`` or ``"wahlquist"``.
    modAmplitude : `float`, optional
        Modulation amplitude to start the Wahlquist model from (MHz).

    Returns
    -------
    params : `LineShapeParams`
        Lorentzian: centre at the largest excursion from the median, height
        from that excursion, width from the half-maximum crossings.
        Wahlquist: centre at the baseline crossing between the signal
        extrema, width from the extrema separation, amplitude from the
        peak-to-peak signal.

    Raises
    ------
    LineGuessError
        Raised if the trace is flat or, for the Wahlquist model, the signal
        does not change sign between its extrema.
    """
    f = trace.frequencies
    s = trace.signals
    baseline = float(np.median(s))
    if np.ptp(s) <= 0:
        raise LineGuessError("trace is flat; no line to fit")
    minWidth = float(np.min(np.diff(f)))

    if modelKind == "lorentzian":
        deviation = s - baseline
        peak = int(np.argmax(np.abs(deviation)))
        amplitude = float(deviation[peak])
        if amplitude == 0:
            raise LineGuessError("trace has no excursion from its median")
        y = deviation/amplitude
        left = peak
        while left > 0 and y[left - 1] >= 0.5:
            left -= 1
        right = peak
        while right < len(y) - 1 and y[right + 1] >= 0.5:
            right += 1
        halfWidths = []
        if left > 0:
            halfWidths.append(f[peak] - _crossing(f, y, left - 1, left, 0.5))
        if right < len(y) - 1:
            halfWidths.append(_crossing(f, y, right, right + 1, 0.5) - f[peak])
        if halfWidths:
            fwhm = 2.0*float(np.mean(halfWidths)) if len(halfWidths) == 1 else float(sum(halfWidths))
        else:
            fwhm = 0.5*float(f[-1] - f[0])
        return LineShapeParams(center=float(f[peak]), fwhm=max(fwhm, minWidth), amplitude=amplitude,
                               baseline=baseline)

    if modelKind != "wahlquist":
        raise ValueError(f"unknown line model {modelKind!r}; expected one of {MODEL_KINDS}")
    iMax = int(np.argmax(s))
    iMin = int(np.argmin(s))
    lo, hi = sorted((iMax, iMin))
    deviation = s - baseline
    center = None
    for k in range(lo, hi):
        if deviation[k] == 0:
            center = float(f[k])
            break
        if deviation[k]*deviation[k + 1] < 0:
            center = float(_crossing(f, deviation, k, k + 1, 0.0))
            break
    if center is None:
        raise LineGuessError("signal does not cross its baseline between the extrema; "
                             "supply initial parameters")
    # Extrema of a Lorentzian derivative sit at +-fwhm/(2 sqrt(3)).
    fwhm = max(math.sqrt(3.0)*float(f[hi] - f[lo]), minWidth)
    grid = np.linspace(-5.0*(fwhm + modAmplitude), 5.0*(fwhm + modAmplitude), 2001)
    unit = wahlquistProfile(grid, fwhm, modAmplitude)
    amplitude = float(s[iMax] - s[iMin])/float(np.ptp(unit))
    if iMax < iMin:
        amplitude = -amplitude
    return LineShapeParams(center=center, fwhm=fwhm, amplitude=amplitude, baseline=baseline,
                           modAmplitude=modAmplitude)


class LineShapeModel(ResidualModel):
    """Unit-weight residuals of a line-shape model against a trace.

    The centre is fitted as an offset from ``referenceFrequency`` (the
    middle of the trace), so absolute laser frequencies near 2e8 MHz do not
    limit the numerical Jacobian.

    Parameters
    ----------
    trace : `ScanTrace`
        Data.
    modelKind : `str`
        ``"lorentzian"`` or ``"wahlquist"``.
    pinnedModAmplitude : `float`, optional
        If given, the Wahlquist modulation amplitude is held at this value
        instead of being fitted.
    """

    def __init__(self, trace, modelKind, pinnedModAmplitude=None):
        if modelKind not in MODEL_KINDS:
            raise ValueError(f"unknown line model {modelKind!r}; expected one of {MODEL_KINDS}")
        self.trace = trace
        self.modelKind = modelKind
        self.referenceFrequency = 0.5*(float(trace.frequencies[0]) + float(trace.frequencies[-1]))
        self._offsets = trace.frequencies - self.referenceFrequency
        self.pinnedModAmplitude = pinnedModAmplitude
        names = ["centerOffset", "fwhm", "amplitude", "baseline"]
        if modelKind == "wahlquist" and pinnedModAmplitude is None:
            names.append("modAmplitude")
        self._paramNames = tuple(names)

    @property
    def paramNames(self):
        return self._paramNames

    @property
    def nData(self):
        return len(self.trace)

    def toVector(self, params):
        """Parameter vector for ``params`` (a `LineShapeParams`)."""
        vector = [params.center - self.referenceFrequency, params.fwhm, params.amplitude, params.baseline]
        if len(self._paramNames) == 5:
            vector.append(params.modAmplitude)
        return np.array(vector)

    def fromVector(self, vector):
        """`LineShapeParams` for a parameter vector."""
        modAmplitude = 0.0
        if self.modelKind == "wahlquist":
            modAmplitude = vector[4] if self.pinnedModAmplitude is None else self.pinnedModAmplitude
        return LineShapeParams(center=self.referenceFrequency + vector[0], fwhm=vector[1],
                               amplitude=vector[2], baseline=vector[3], modAmplitude=modAmplitude)

    def modelSignal(self, vector):
        centerOffset, fwhm, amplitude, baseline = vector[:4]
        if not fwhm > 0:
            raise ModelDomainError(f"fwhm must be positive, got {fwhm}")
        detuning = self._offsets - centerOffset
        if self.modelKind == "lorentzian":
            return baseline + amplitude*lorentzianProfile(detuning, fwhm)
        modAmplitude = vector[4] if self.pinnedModAmplitude is None else self.pinnedModAmplitude
        if not modAmplitude > 0:
            raise ModelDomainError(f"modAmplitude must be positive, got {modAmplitude}")
        try:
            return baseline + amplitude*wahlquistProfile(detuning, fwhm, modAmplitude)
        except LineShapeEvaluationError as e:
            raise ModelDomainError(str(e)) from None

    def residuals(self, params):
        return self.modelSignal(params) - self.trace.signals


@dataclasses.dataclass(frozen=True)
class LineFit:
    """Result of `FitLineCenterTask.run`.

    ``sigmas`` maps parameter names of `LineShapeParams` to their fitted
    one-sigma uncertainties; a pinned modulation amplitude has none.
    """

    modelKind: str
    params: LineShapeParams
    sigmas: dict
    report: object

    @property
    def center(self):
        return self.params.center

    @property
    def converged(self):
        return self.report.converged

    def toDict(self):
        """JSON-serialisable summary."""
        result = {"model": self.modelKind,
                  "center_mhz": self.params.center,
                  "fwhm_mhz": self.params.fwhm,
                  "amplitude": self.params.amplitude,
                  "baseline": self.params.baseline}
        if self.modelKind == "wahlquist":
            result["mod_amplitude_mhz"] = self.params.modAmplitude
        result["sigmas"] = {name: float(value) for name, value in self.sigmas.items()}
        result["chi2"] = float(self.report.chi2)
        result["reduced_chi2"] = float(self.report.reducedChi2)
        result["n_iterations"] = self.report.nIterations
        result["converged"] = bool(self.report.converged)
        result["message"] = self.report.message
        return result


def readTrace(path):
    """Read a scan trace CSV file with header ``freq_mhz,signal``.

    Raises
    ------
    rydberg_ritz.tables.TableFormatError
        Raised if the file is malformed; the message names the line.
    TraceError
        Raised if the samples do not form a valid trace.
    """
    table = readTable(path, required=["freq_mhz", "signal"])
    try:
        return ScanTrace(table["freq_mhz"].to_numpy(), table["signal"].to_numpy())
    except TraceError as e:
        raise TraceError(f"{path}: {e}") from None


class FitLineCenterConfig(pexConfig.Config):
    modelKind = pexConfig.ChoiceField(
        doc="Line-shape model fitted to the trace",
        dtype=str,
        allowed={
            "lorentzian": "Lorentzian absorption line (direct detection)",
            "wahlquist": "First-harmonic lock-in profile of a modulated Lorentzian",
        },
        default="wahlquist",
    )
    defaultModAmplitude = pexConfig.Field(
        doc="Modulation amplitude used to start (or pin) the Wahlquist model (MHz)",
        dtype=float,
        default=DEFAULT_MOD_AMPLITUDE_MHZ,
        check=lambda x: x > 0,
    )
    pinModAmplitude = pexConfig.Field(
        doc="Hold the Wahlquist modulation amplitude fixed instead of fitting it",
        dtype=bool,
        default=False,
    )
    fitter = LevenbergMarquardtTask.makeField("Solver for the line-shape fit")


class FitLineCenterTask(Task):
    """Fit a line-shape model to one scan trace and report its centre.

    The starting point comes from `autoInitGuess` unless one is passed to
    `run`. With ``config.pinModAmplitude`` the Wahlquist modulation
    amplitude is held at the initial value (``config.defaultModAmplitude``
    for an automatic guess).
    """

    ConfigClass = FitLineCenterConfig
    _DefaultName = "fitLineCenter"

    def __init__(self, **kwargs):
        super().__init__(**kwargs)
        self.makeSubtask("fitter")

    @timeMethod
    def run(self, trace, init=None):
        """Fit ``trace``.

        Parameters
        ----------
        trace : `ScanTrace`
            Trace to fit.
        init : `LineShapeParams`, optional
            Starting parameters; guessed from the trace if `None`.

        Returns
        -------
        lineFit : `LineFit`
            Fitted parameters and the solver report.

        Raises
        ------
        LineGuessError
            Raised if ``init`` is `None` and no starting point can be found.
        """
        modelKind = self.config.modelKind
        if init is None:
            init = autoInitGuess(trace, modelKind, modAmplitude=self.config.defaultModAmplitude)
            self.log.debug("Initial guess from trace: %s", init)
        elif modelKind == "wahlquist" and init.modAmplitude <= 0:
            init = dataclasses.replace(init, modAmplitude=self.config.defaultModAmplitude)

        pinned = init.modAmplitude if modelKind == "wahlquist" and self.config.pinModAmplitude else None
        model = LineShapeModel(trace, modelKind, pinnedModAmplitude=pinned)
        report = self.fitter.run(model, model.toVector(init))

        try:
            params = model.fromVector(report.params)
        except ValueError as e:
            # e.g. a fitted amplitude of exactly zero
            raise ModelDomainError(f"fit ended on invalid line parameters: {e}") from None
        names = {"centerOffset": "center"}
        sigmas = {names.get(name, name): float(sigma) for name, sigma in zip(model.paramNames, report.sigmas)}
        self.metadata.add("center", params.center)
        self.log.info("%s line centre %.3f +/- %.3f MHz", modelKind, params.center, sigmas["center"])
        return LineFit(modelKind=modelKind, params=params, sigmas=sigmas, report=report)

    def makePlotRows(self, trace, lineFit):
        """Rows ``(freq_mhz, signal, model)`` comparing ``trace`` with a fit.
        """
        model = evaluateModel(lineFit.modelKind, trace.frequencies, lineFit.params)
        return list(zip(trace.frequencies.tolist(), trace.signals.tolist(), np.asarray(model).tolist()))
