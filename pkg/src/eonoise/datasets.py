"""Plain-text dataset files.

Layout::

    # eonoise-dataset
    # format_version: "1.0"
    # kind: "noise_heatmap"
    # axes: [["time", "s", 3], ["frequency", "rad/s", 121]]
    # fields: [["power_on", "W", false], ["power_off", "W", false]]
    # config_hash: "..."
    # seed: 0
    time,frequency,power_on,power_off
    0,4.1387e10,...

Every header line after the magic line is ``key: <JSON value>``. The payload
is long-format CSV (one row per grid cell, C order over the axes). Complex
fields are written as ``name.re`` and ``name.im`` columns. Floats use 17
significant digits, which round-trips IEEE doubles exactly.
"""

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DatasetError, MalformedHeaderError, ShapeMismatchError, VersionMismatchError

__all__ = [
    "FORMAT_VERSION",
    "Dataset",
    "save_dataset",
    "load_dataset",
    "read_header",
    "FutureFormatWarning",
]

MAGIC = "# eonoise-dataset"
FORMAT_VERSION = (1, 0)
_RESERVED = ("format_version", "kind", "axes", "fields")


class FutureFormatWarning(UserWarning):
    """File was written by a newer minor format revision."""


@dataclass
class Dataset:
    """Named axes plus fields defined on the grid they span.

    ``axes`` and ``fields`` are ordered dicts of name -> array; ``units`` maps
    any axis or field name to a unit string. ``header`` carries the remaining
    header keys (``config_hash``, ``seed`` and anything unrecognised).
    """

    kind: str
    axes: dict
    fields: dict
    units: dict = field(default_factory=dict)
    header: dict = field(default_factory=dict)

    def __post_init__(self):
        self.axes = {k: np.asarray(v) for k, v in self.axes.items()}
        self.fields = {k: np.asarray(v) for k, v in self.fields.items()}
        shape = self.shape
        for name, ax in self.axes.items():
            if ax.ndim != 1:
                raise ShapeMismatchError(f"axis '{name}' must be 1-D")
        for name, arr in self.fields.items():
            if arr.shape != shape:
                raise ShapeMismatchError(f"field '{name}' has shape {arr.shape}, axes imply {shape}")
        names = list(self.axes) + list(self.fields)
        if len(set(names)) != len(names):
            raise DatasetError("axis and field names must be unique")
        for name in names:
            if "," in name or name.endswith((".re", ".im")):
                raise DatasetError(f"invalid column name '{name}'")

    @property
    def shape(self):
        return tuple(a.size for a in self.axes.values())

    @property
    def config_hash(self):
        return self.header.get("config_hash")

    @property
    def seed(self):
        return self.header.get("seed")


def _parse_version(value):
    try:
        major, minor = (int(x) for x in str(value).split("."))
    except ValueError as exc:
        raise MalformedHeaderError(f"unreadable format_version {value!r}") from exc
    return major, minor


def _read_header_lines(fh, path):
    first = fh.readline()
    if first.rstrip("\r\n") != MAGIC:
        raise MalformedHeaderError(f"{path}: missing '{MAGIC}' marker")
    header = {}
    n_lines = 1
    while True:
        pos = fh.tell()
        line = fh.readline()
        if not line.startswith("#"):
            fh.seek(pos)
            break
        n_lines += 1
        body = line[1:].strip()
        key, sep, raw = body.partition(":")
        if not sep or not key.strip():
            raise MalformedHeaderError(f"{path}: header line {n_lines} is not 'key: value'")
        try:
            header[key.strip()] = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise MalformedHeaderError(f"{path}: header key '{key.strip()}' is not valid JSON") from exc
    for key in _RESERVED:
        if key not in header:
            raise MalformedHeaderError(f"{path}: header lacks '{key}'")
    major, minor = _parse_version(header["format_version"])
    if major != FORMAT_VERSION[0]:
        raise VersionMismatchError(f"{path}: format {major}.{minor} is not readable (supported {FORMAT_VERSION[0]}.x)")
    if minor > FORMAT_VERSION[1]:
        warnings.warn(f"{path}: written by newer format {major}.{minor}; unknown features ignored",
                      FutureFormatWarning, stacklevel=3)
    try:
        axes = [(str(n), str(u), int(s)) for n, u, s in header["axes"]]
        fields = [(str(n), str(u), bool(c)) for n, u, c in header["fields"]]
    except (TypeError, ValueError) as exc:
        raise MalformedHeaderError(f"{path}: axes/fields entries are malformed") from exc
    if any(s < 1 for _, _, s in axes):
        raise MalformedHeaderError(f"{path}: axis lengths must be positive")
    return header, axes, fields


def read_header(path):
    """Header dict of a dataset file, without reading the payload."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header, _, _ = _read_header_lines(fh, path)
    return header


def _columns(ds):
    names = list(ds.axes)
    for name, arr in ds.fields.items():
        names.extend([f"{name}.re", f"{name}.im"] if np.iscomplexobj(arr) else [name])
    return names


def save_dataset(path, dataset):
    """Write ``dataset`` to ``path``; returns the path."""
    path = Path(path)
    ds = dataset
    header = {
        "format_version": f"{FORMAT_VERSION[0]}.{FORMAT_VERSION[1]}",
        "kind": ds.kind,
        "axes": [[n, ds.units.get(n, ""), int(a.size)] for n, a in ds.axes.items()],
        "fields": [[n, ds.units.get(n, ""), bool(np.iscomplexobj(a))] for n, a in ds.fields.items()],
    }
    for key, val in ds.header.items():
        if key not in _RESERVED:
            header[key] = val
    grids = np.meshgrid(*ds.axes.values(), indexing="ij") if ds.axes else []
    cols = [np.asarray(g, dtype=float).ravel() for g in grids]
    for arr in ds.fields.values():
        if np.iscomplexobj(arr):
            cols.extend([arr.real.ravel(), arr.imag.ravel()])
        else:
            cols.append(np.asarray(arr, dtype=float).ravel())
    table = np.column_stack(cols) if cols else np.empty((0, 0))
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(MAGIC + "\n")
        for key, val in header.items():
            fh.write(f"# {key}: {json.dumps(val, sort_keys=True)}\n")
        fh.write(",".join(_columns(ds)) + "\n")
        if table.size:
            np.savetxt(fh, table, fmt="%.17g", delimiter=",")
    return path


def load_dataset(path):
    """Read a dataset file written by :func:`save_dataset`."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        header, axes, fields = _read_header_lines(fh, path)
        column_line = fh.readline().rstrip("\r\n")
        shape = tuple(s for _, _, s in axes)
        expected = [n for n, _, _ in axes]
        for n, _, cplx in fields:
            expected.extend([f"{n}.re", f"{n}.im"] if cplx else [n])
        if column_line.split(",") != expected:
            raise MalformedHeaderError(f"{path}: column line does not match axes/fields declaration")
        n_rows = int(np.prod(shape))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # empty payload warning; handled as a shape error below
            try:
                table = np.loadtxt(fh, delimiter=",", ndmin=2)
            except ValueError as exc:
                raise ShapeMismatchError(f"{path}: payload rows are ragged or truncated") from exc
    if table.shape != (n_rows, len(expected)):
        raise ShapeMismatchError(
            f"{path}: payload is {table.shape[0]}x{table.shape[1] if table.ndim == 2 else 0}, "
            f"header implies {n_rows}x{len(expected)}"
        )
    col = 0
    axis_arrays = {}
    for i, (name, _, size) in enumerate(axes):
        # the axis value varies along dimension i of the C-ordered grid
        grid = table[:, col].reshape(shape)
        index = [0] * len(shape)
        index[i] = slice(None)
        axis_arrays[name] = np.ascontiguousarray(grid[tuple(index)])
        col += 1
    field_arrays = {}
    for name, _, cplx in fields:
        if cplx:
            arr = np.empty(n_rows, dtype=complex)
            arr.real = table[:, col]
            arr.imag = table[:, col + 1]
            col += 2
        else:
            arr = table[:, col].copy()
            col += 1
        field_arrays[name] = arr.reshape(shape)
    units = {n: u for n, u, _ in axes}
    units.update({n: u for n, u, _ in fields})
    extra = {k: v for k, v in header.items() if k not in _RESERVED}
    return Dataset(str(header["kind"]), axis_arrays, field_arrays, units, extra)
