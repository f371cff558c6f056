import os
import glob
import logging

import numpy as np
import pandas as pd

from diagnostics import DIAGNOSTICS_COLUMNS, RATES_COLUMNS, DiagnosticsRow
from exceptions import CSVParseError, InputError
from spectral_core import GridField

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"
FLOAT_FORMAT = "%.17g"


def setup_logging(verbosity=0):
    '''Configure the root logger once per script; -v switches to DEBUG'''
    level = logging.DEBUG if verbosity > 0 else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, force=True)
    # matplotlib is chatty at DEBUG
    logging.getLogger("matplotlib").setLevel(logging.WARNING)


def collect_csv_paths(patterns, file_pattern="*.csv"):
    '''Expand files, directories (searched for file_pattern) and glob patterns into a sorted list of csv paths'''
    if isinstance(patterns, (str, os.PathLike)):
        patterns = [patterns]

    csv_paths = []
    for pattern in patterns:
        matches = glob.glob(str(pattern)) or [str(pattern)]
        for path in matches:
            if os.path.isfile(path):
                csv_paths.append(path)
            elif os.path.isdir(path):
                csv_paths.extend(glob.glob(os.path.join(path, file_pattern)))
            else:
                raise FileNotFoundError(f"no csv file or directory at {path}")

    #sort so that plots and summaries come out in the same order every time
    return sorted(set(csv_paths))


def read_checked_csv(path, columns, numeric_columns=None):
    '''
    Read a csv whose header must equal `columns`. Numeric columns may hold
    empty fields; anything else that does not parse as a number is reported
    with its 1-based line number (the header is line 1).
    '''
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise CSVParseError(path, 1, "file is empty") from None
    except pd.errors.ParserError as e:
        line = _line_from_parser_error(str(e))
        raise CSVParseError(path, line, str(e)) from None

    if list(frame.columns) != list(columns):
        raise CSVParseError(path, 1, f"expected header {','.join(columns)}, got {','.join(frame.columns)}")
    if frame.empty:
        raise CSVParseError(path, 2, "no data rows")

    numeric_columns = columns if numeric_columns is None else numeric_columns
    for column in numeric_columns:
        raw = frame[column].str.strip()
        parsed = pd.to_numeric(raw.replace("", np.nan), errors="coerce")
        bad = parsed.isna() & (raw != "")
        if bad.any():
            row = int(np.argmax(bad.to_numpy()))
            raise CSVParseError(path, row + 2, f"column {column}: {raw.iloc[row]!r} is not a number")
        frame[column] = parsed
    return frame


def _line_from_parser_error(message):
    # pandas reports "Expected 8 fields in line 12, saw 9"
    words = message.replace(",", " ").split()
    for i, word in enumerate(words[:-1]):
        if word == "line" and words[i + 1].isdigit():
            return int(words[i + 1])
    return 0


def write_frame_csv(frame, path):
    '''Full-precision csv with empty fields for missing values and \n line endings'''
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT, na_rep="", lineterminator="\n")
    logger.info(f"wrote {path}")


def write_table_csv(records, columns, path):
    '''List of dicts to a numeric csv; missing entries are written as empty fields'''
    frame = pd.DataFrame.from_records(records, columns=columns).astype(np.float64)
    write_frame_csv(frame, path)


def write_diagnostics_csv(rows, path):
    write_table_csv([row.as_dict() for row in rows], DIAGNOSTICS_COLUMNS, path)


def read_diagnostics_csv(path):
    frame = read_checked_csv(path, DIAGNOSTICS_COLUMNS)
    rows = []
    for line, record in enumerate(frame.to_dict("records"), start=2):
        values = {k: (None if pd.isna(v) else float(v)) for k, v in record.items()}
        try:
            rows.append(DiagnosticsRow(**values))
        except (InputError, TypeError) as e:
            raise CSVParseError(path, line, str(e)) from None
    return rows


def write_rates_csv(records, path):
    frame = pd.DataFrame.from_records(records, columns=RATES_COLUMNS)
    numeric = [c for c in RATES_COLUMNS if c != "run_id"]
    frame[numeric] = frame[numeric].astype(np.float64)
    write_frame_csv(frame, path)


def read_rates_csv(path):
    return read_checked_csv(path, RATES_COLUMNS, numeric_columns=RATES_COLUMNS[1:])


def write_grid_csv(field: GridField, path):
    '''One value per grid cell, row-major, under a single `value` header'''
    write_frame_csv(pd.DataFrame({"value": field.values.ravel(order="C")}), path)


def read_grid_csv(path, dim=1):
    frame = read_checked_csv(path, ["value"])
    values = frame["value"].to_numpy(dtype=np.float64)
    if np.isnan(values).any():
        raise CSVParseError(path, int(np.argmax(np.isnan(values))) + 2, "empty grid value")
    n = int(round(len(values) ** (1.0 / dim)))
    if n ** dim != len(values):
        raise CSVParseError(path, len(values) + 1, f"{len(values)} values do not fill an n^{dim} grid")
    return GridField(values.reshape((n,) * dim))


def write_particles_csv(positions, path):
    positions = np.atleast_2d(positions)
    columns = [f"x{a}" for a in range(positions.shape[1])]
    write_frame_csv(pd.DataFrame(positions, columns=columns), path)


def read_particles_csv(path, dim):
    columns = [f"x{a}" for a in range(dim)]
    return read_checked_csv(path, columns).to_numpy(dtype=np.float64)


def write_text(text, path):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "w", newline="\n") as f:
        f.write(text)
    logger.info(f"wrote {path}")
