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

"""Reading and writing the CSV tables exchanged by the command-line tools.

Every table has a header row. Errors name the file and the 1-based line
of the offending row, counting the header as line 1.
"""

__all__ = ["TableFormatError", "readTable", "writeTable"]

import pandas as pd

from .task import TaskError


class TableFormatError(TaskError, ValueError):
    """A table is missing, malformed or holds a value of the wrong type.
    """
    pass


def readTable(path, required, optional=(), integer=(), text=()):
    """Read a CSV table into a `pandas.DataFrame` of checked columns.

    Parameters
    ----------
    path : `str` or path-like
        File to read.
    required : `list` [`str`]
        Columns that must be present.
    optional : `list` [`str`], optional
        Columns that may be absent; missing ones are not added.
    integer : `list` [`str`], optional
        Columns whose values must be integers.
    text : `list` [`str`], optional
        Columns kept as stripped strings; all other columns must parse as
        finite floats.

    Returns
    -------
    table : `pandas.DataFrame`
        Only the ``required`` and present ``optional`` columns, in that
        order.

    Raises
    ------
    TableFormatError
        Raised if the file cannot be read, a required column is missing,
        a row has the wrong number of fields or a value does not parse.
    """
    try:
        raw = pd.read_csv(path, dtype=str, skipinitialspace=True, keep_default_na=False,
                          skip_blank_lines=False)
    except FileNotFoundError:
        raise TableFormatError(f"{path}: no such file") from None
    except pd.errors.EmptyDataError:
        raise TableFormatError(f"{path}: file is empty") from None
    except pd.errors.ParserError as e:
        raise TableFormatError(f"{path}: {e}") from None
    raw.columns = [c.strip() for c in raw.columns]
    # Blank rows are dropped only here, so the index still maps to file lines.
    blank = raw.fillna("").apply(lambda column: column.str.strip() == "").all(axis=1)
    raw = raw[~blank]
    lineNumbers = raw.index.to_numpy() + 2
    missing = [c for c in required if c not in raw.columns]
    if missing:
        raise TableFormatError(f"{path}: missing column(s) {', '.join(missing)}; "
                               f"header is {','.join(raw.columns)}")
    columns = list(required) + [c for c in optional if c in raw.columns]
    table = pd.DataFrame(index=raw.index)
    for column in columns:
        values = raw[column].fillna("").str.strip()
        if column in text:
            bad = values == ""
            if bad.any():
                row = int(bad.to_numpy().nonzero()[0][0])
                raise TableFormatError(f"{path}, line {lineNumbers[row]}: empty {column!r}")
            table[column] = values
            continue
        numbers = pd.to_numeric(values, errors="coerce")
        bad = ~numbers.apply(lambda v: pd.notna(v) and abs(v) != float("inf"))
        if column in integer:
            bad |= numbers.notna() & (numbers != numbers.round())
        if bad.any():
            row = int(bad.to_numpy().nonzero()[0][0])
            raise TableFormatError(f"{path}, line {lineNumbers[row]}: bad {column!r} value "
                                   f"{raw[column].iloc[row]!r}")
        table[column] = numbers.astype(int) if column in integer else numbers.astype(float)
    return table.reset_index(drop=True)


def writeTable(rows, columns, formats, output):
    """Write rows as CSV with a fixed text format per column.

    Parameters
    ----------
    rows : iterable of `tuple`
        Row values in ``columns`` order.
    columns : `list` [`str`]
        Header names.
    formats : `list` [`str`]
        Format spec per column, e.g. ``"d"`` or ``".3f"``.
    output : `str`, path-like or file-like
        Destination passed to `pandas.DataFrame.to_csv`.
    """
    formatted = [[format(value, spec) for value, spec in zip(row, formats)] for row in rows]
    frame = pd.DataFrame(formatted, columns=columns, dtype=str)
    frame.to_csv(output, index=False, lineterminator="\n")
