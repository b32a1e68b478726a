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

__all__ = ["Task", "TaskError", "TaskMetadata"]

import contextlib
import logging

from lsst.pex.config import ConfigurableField
from lsst.utils.logging import getLogger
from lsst.utils.timer import logInfo


class TaskError(Exception):
    """Use to report errors for which a traceback is not useful.

    Notes
    -----
    Examples of such errors:

    - a level table lists the same principal quantum number twice.
    - a scan trace has no feature from which a line center can be guessed.
    """
    pass


class TaskMetadata(dict):
    """Metadata collected by a task while it runs.

    Values added with `add` accumulate in a list under their name, so a
    timed method that runs twice leaves two entries. Plain item assignment
    stores a scalar.
    """

    def add(self, name, value):
        """Append ``value`` to the list stored under ``name``.
        """
        self.setdefault(name, []).append(value)

    def names(self):
        """Return the names of all items, as a `list`.
        """
        return list(self.keys())

    def exists(self, name):
        return name in self

    def getScalar(self, name):
        """Return the most recently added value for ``name``.

        Raises
        ------
        KeyError
            Raised if ``name`` has never been set.
        """
        value = self[name]
        if isinstance(value, list):
            return value[-1]
        return value


class Task:
    r"""Base class for the data reduction and fitting tasks.

    Parameters
    ----------
    config : `Task.ConfigClass` instance, optional
        Configuration for this task (an instance of ``Task.ConfigClass``, a
        task-specific subclass of `lsst.pex.config.Config`), or `None`.
        If `None`:

        - If ``parentTask`` is specified then defaults to
          ``parentTask.config.<name>``.
        - If ``parentTask`` is `None` then defaults to
          ``self.ConfigClass()``.

    name : `str`, optional
        Brief name of task, or `None`; if `None` then defaults to
        ``Task._DefaultName``.
    parentTask : `Task`-type, optional
        The parent task of this subtask, if any.
    log : `logging.Logger` or `lsst.utils.logging.LsstLogAdapter`, optional
        Log whose name is used as a log name prefix, or `None` for no prefix.
        Ignored if ``parentTask`` is specified, in which case the task log
        is a child of ``parentTask.log``.

    Raises
    ------
    RuntimeError
        Raised if ``parentTask`` is not `None` and ``name`` is `None`, or if
        ``name`` is `None` and ``_DefaultName`` does not exist.

    Notes
    -----
    Useful attributes include:

    - ``log``: an `lsst.utils.logging.LsstLogAdapter`.
    - ``config``: task-specific configuration; an instance of
      ``ConfigClass``.
    - ``metadata``: a `TaskMetadata` collecting timing and fit summaries.
      It is only meant to be persisted or inspected, never used by the
      task itself.

    Subclasses have a ``run()`` method that takes Python-domain objects
    (a `~rydberg_ritz.levels.LevelDataset`, a
    `~rydberg_ritz.lineshape.ScanTrace`, ...), performs the computation and
    returns an immutable result. ``run()`` performs no file I/O; reading
    tables and writing reports is done by `rydberg_ritz.cli`.
    """

    def __init__(self, config=None, name=None, parentTask=None, log=None):
        self.metadata = TaskMetadata()
        self._parentTask = parentTask

        if parentTask is not None:
            if name is None:
                raise RuntimeError("name is required for a subtask")
            self._name = name
            self._fullName = parentTask._computeFullName(name)
            if config is None:
                config = getattr(parentTask.config, name)
            self._taskDict = parentTask._taskDict
            loggerName = parentTask.log.name + '.' + name
        else:
            if name is None:
                name = getattr(self, "_DefaultName", None)
                if name is None:
                    raise RuntimeError("name is required for a task unless it has attribute _DefaultName")
            self._name = name
            self._fullName = self._name
            if config is None:
                config = self.ConfigClass()
            self._taskDict = dict()
            loggerName = self._fullName
            if log is not None and log.name:
                loggerName = log.name + '.' + loggerName

        self.log = getLogger(loggerName)
        self.config = config
        self._taskDict[self._fullName] = self

    def emptyMetadata(self):
        """Empty (clear) the metadata for this Task and all sub-Tasks.
        """
        for subtask in self._taskDict.values():
            subtask.metadata = TaskMetadata()

    def getFullMetadata(self):
        """Get metadata for all tasks.

        Returns
        -------
        metadata : `dict`
            Keys are the full task name with ``.`` replaced by ``:``; values
            are the `TaskMetadata` of the top-level task and all subtasks.
        """
        return {fullName.replace(".", ":"): task.metadata
                for fullName, task in self.getTaskDict().items()}

    def getFullName(self):
        """Get the task name as a hierarchical name including parent task
        names, e.g. ``"pipeline.fitSeries.fitter"``.
        """
        return self._fullName

    def getName(self):
        """Get the brief name of the task.
        """
        return self._name

    def getTaskDict(self):
        """Get a dictionary of all tasks as a shallow copy.

        Returns
        -------
        taskDict : `dict`
            Dictionary containing full task name: task object for the
            top-level task and all subtasks, sub-subtasks, etc.
        """
        return self._taskDict.copy()

    def makeSubtask(self, name, **keyArgs):
        """Create a subtask as a new instance as the ``name`` attribute of this
        task.

        Parameters
        ----------
        name : `str`
            Brief name of the subtask.
        keyArgs
            Extra keyword arguments used to construct the task. ``config``
            and ``parentTask`` are provided automatically.

        Notes
        -----
        The subtask must be defined by ``Task.config.name``, an instance of
        `~lsst.pex.config.ConfigurableField`.
        """
        taskField = getattr(self.config, name, None)
        if taskField is None:
            raise KeyError(f"{self.getFullName()}'s config does not have field {name!r}")
        subtask = taskField.apply(name=name, parentTask=self, **keyArgs)
        setattr(self, name, subtask)

    @contextlib.contextmanager
    def timer(self, name, logLevel=logging.DEBUG):
        """Context manager to log performance data for an arbitrary block of
        code.

        Parameters
        ----------
        name : `str`
            Name of code being timed; data will be logged using item name:
            ``Start`` and ``End``.
        logLevel : `int`
            A `logging` level constant.

        Examples
        --------
        .. code-block:: python

            with self.timer("covariance"):
                pass  # code to time
        """
        logInfo(obj=self, prefix=name + "Start", logLevel=logLevel)
        try:
            yield
        finally:
            logInfo(obj=self, prefix=name + "End", logLevel=logLevel)

    @classmethod
    def makeField(cls, doc):
        """Make a `lsst.pex.config.ConfigurableField` for this task.

        Examples
        --------
        .. code-block:: python

            class FitRitzSeriesConfig(lsst.pex.config.Config):
                fitter = LevenbergMarquardtTask.makeField("series solver")
        """
        return ConfigurableField(doc=doc, target=cls)

    def _computeFullName(self, name):
        """Compute the full name of a subtask given its brief name, e.g.
        ``"pipeline.fitSeries"`` for subtask ``fitSeries`` of ``pipeline``.
        """
        return f"{self._fullName}.{name}"
