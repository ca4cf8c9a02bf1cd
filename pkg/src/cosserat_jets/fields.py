"""Grid-sampled fields with multilinear interpolation and their CSV format.

CSV layout: header row, then one row per grid node: ``n`` coordinates followed by the
row-major entries of each stored array (``P`` then ``Q`` then ``R`` for parallelisms).
"""

from __future__ import annotations

import csv
import io
from typing import Sequence

import numpy as np
from scipy.interpolate import RegularGridInterpolator


class GridField:
    """Array-valued field known on a tensor grid, evaluated by multilinear interpolation."""

    def __init__(self, axes: Sequence[np.ndarray], values: np.ndarray, shape: tuple):
        self.axes = [np.asarray(a, dtype=float) for a in axes]
        self.shape = tuple(shape)
        grid_shape = tuple(a.size for a in self.axes)
        values = np.asarray(values, dtype=float).reshape(grid_shape + (int(np.prod(self.shape)),))
        self._interp = RegularGridInterpolator(self.axes, values, method="linear", bounds_error=True)

    @property
    def box(self):
        return [(float(a[0]), float(a[-1])) for a in self.axes]

    def __call__(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return self._interp(x[None, :])[0].reshape(self.shape)


def _axes_from_points(coords: np.ndarray):
    axes = [np.unique(coords[:, i]) for i in range(coords.shape[1])]
    if int(np.prod([a.size for a in axes])) != coords.shape[0]:
        raise ValueError("CSV rows do not form a complete tensor grid")
    return axes


def read_grid_csv(path_or_text, n: int, shapes: Sequence[tuple]) -> list[GridField]:
    """Read a grid CSV into one :class:`GridField` per entry of ``shapes``."""
    if isinstance(path_or_text, str) and "\n" in path_or_text:
        handle = io.StringIO(path_or_text)
    else:
        handle = open(path_or_text, newline="")
    with handle:
        rows = list(csv.reader(handle))
    if len(rows) < 2:
        raise ValueError("CSV needs a header row and at least one data row")
    data = np.array([[float(v) for v in row] for row in rows[1:]])
    widths = [int(np.prod(s)) for s in shapes]
    if data.shape[1] != n + sum(widths):
        raise ValueError(f"expected {n + sum(widths)} columns, found {data.shape[1]}")
    coords = data[:, :n]
    axes = _axes_from_points(coords)
    # sort rows into C order of the tensor grid
    idx = np.stack([np.searchsorted(axes[i], coords[:, i]) for i in range(n)], axis=-1)
    order = np.ravel_multi_index(idx.T, [a.size for a in axes])
    sorted_data = np.empty_like(data)
    sorted_data[order] = data
    fields = []
    col = n
    for shape, w in zip(shapes, widths):
        fields.append(GridField(axes, sorted_data[:, col : col + w], shape))
        col += w
    return fields


def write_grid_csv(path, header: Sequence[str], rows) -> None:
    """Comma-separated, header row, '.' decimal, LF line endings."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) for v in row])


def component_names(prefix: str, shape: tuple) -> list[str]:
    return [prefix + "".join(str(i + 1) for i in idx) for idx in np.ndindex(*shape)]
