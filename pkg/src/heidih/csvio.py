"""CSV emission for study outputs.

Floats are written with 17 significant digits so a parse of the file
recovers them bit-exactly; rows keep their given order, making output
files byte-comparable across runs and worker counts.
"""

import csv
from dataclasses import astuple, fields

ERRORS_HEADER = ("study", "param", "resolution", "error", "stderr", "wall_s")
RATES_HEADER = ("study", "param", "slope", "intercept", "residual", "points_used")
TIMING_HEADER = ("study", "param", "resolution", "wall_s", "noise_s")
SURFACE_HEADER = ("t", "x", "value")


def format_value(v) -> str:
    if isinstance(v, bool):
        return str(v)
    if isinstance(v, float):
        return f"{v:.17g}"
    return str(v)


def emit_csv(rows, path, header) -> None:
    """Write rows (dataclasses or tuples) under the given header."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            values = astuple(row) if hasattr(row, "__dataclass_fields__") else tuple(row)
            if len(values) != len(header):
                raise ValueError(f"row width {len(values)} does not match header {header}")
            writer.writerow([format_value(v) for v in values])


def read_csv(path):
    """Read back an emitted file: (header tuple, list of row tuples) with
    numeric fields converted to float/int."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = tuple(next(reader))
        rows = []
        for raw in reader:
            row = []
            for cell in raw:
                try:
                    num = float(cell)
                except ValueError:
                    row.append(cell)
                    continue
                if num.is_integer() and "." not in cell and "e" not in cell.lower():
                    row.append(int(cell))
                else:
                    row.append(num)
            rows.append(tuple(row))
    return header, rows


def surface_rows(values, k, h=None):
    """Flatten a (time x space) array into (t, x, value) tuples, row-major."""
    h = k if h is None else h
    rows = []
    for i in range(values.shape[0]):
        for j in range(values.shape[1]):
            rows.append((i * k, j * h, float(values[i, j])))
    return rows
