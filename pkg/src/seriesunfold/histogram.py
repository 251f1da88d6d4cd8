"""Uniformly binned 1-D and 2-D histograms.

Bins are right-open, ``[lo + i*w, lo + (i+1)*w)``, except that a value equal
to the upper edge of an axis is assigned to the last bin.  Two-dimensional
histograms are stored flat in row-major order with axis 0 varying slowest, so
bin ``(i, j)`` lives at index ``i * axes[1].nbins + j``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateInputError,
    FileFormatError,
    KindMismatchError,
)

KINDS = ("counts", "density")


@dataclass(frozen=True)
class Axis:
    """A uniform binning of the interval ``[lo, hi]``."""

    lo: float
    hi: float
    nbins: int

    def __post_init__(self):
        if not (math.isfinite(self.lo) and math.isfinite(self.hi)):
            raise ConfigurationError(f"axis limits must be finite: {self}")
        if not self.lo < self.hi:
            raise ConfigurationError(f"axis needs lo < hi, got {self.lo}, {self.hi}")
        if int(self.nbins) != self.nbins or self.nbins < 1:
            raise ConfigurationError(f"nbins must be a positive integer, got {self.nbins}")
        object.__setattr__(self, "lo", float(self.lo))
        object.__setattr__(self, "hi", float(self.hi))
        object.__setattr__(self, "nbins", int(self.nbins))

    @property
    def width(self) -> float:
        return (self.hi - self.lo) / self.nbins

    @property
    def edges(self) -> np.ndarray:
        e = self.lo + np.arange(self.nbins + 1) * self.width
        e[-1] = self.hi
        return e

    @property
    def centers(self) -> np.ndarray:
        return self.lo + (np.arange(self.nbins) + 0.5) * self.width

    def index(self, x) -> np.ndarray:
        """Bin index of each value, ``-1`` where the value is out of range."""
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.edges, x, side="right") - 1
        idx = np.where(x == self.hi, self.nbins - 1, idx)
        bad = (idx < 0) | (idx >= self.nbins) | ~np.isfinite(x)
        return np.where(bad, -1, idx)

    def is_symmetric(self, rtol: float = 1e-12) -> bool:
        return abs(self.lo + self.hi) <= rtol * max(abs(self.lo), abs(self.hi))


def _as_axes(axes) -> tuple[Axis, ...]:
    if isinstance(axes, Axis):
        axes = (axes,)
    axes = tuple(axes)
    if not axes:
        raise ConfigurationError("at least one axis is required")
    if len(axes) > 2:
        raise ConfigurationError("only 1-D and 2-D histograms are supported")
    for a in axes:
        if not isinstance(a, Axis):
            raise ConfigurationError(f"expected Axis, got {type(a).__name__}")
    return axes


def grid_size(axes) -> int:
    return int(np.prod([a.nbins for a in _as_axes(axes)]))


def bin_volume(axes) -> float:
    return float(np.prod([a.width for a in _as_axes(axes)]))


def flat_centers(axes) -> np.ndarray:
    """Bin centers in storage order: shape ``(M,)`` in 1-D, ``(M, 2)`` in 2-D."""
    axes = _as_axes(axes)
    if len(axes) == 1:
        return axes[0].centers
    c0, c1 = np.meshgrid(axes[0].centers, axes[1].centers, indexing="ij")
    return np.column_stack([c0.ravel(), c1.ravel()])


@dataclass(frozen=True, eq=False)
class GridHistogram:
    """Binned counts or densities over one or two uniform axes.

    ``overflow`` records how many entries fell outside the grid when the
    histogram was filled from samples; it is not part of ``values``.
    """

    axes: tuple
    values: np.ndarray
    kind: str = "counts"
    overflow: float = 0.0
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        axes = _as_axes(self.axes)
        object.__setattr__(self, "axes", axes)
        if self.kind not in KINDS:
            raise ConfigurationError(f"kind must be one of {KINDS}, got {self.kind!r}")
        values = np.array(self.values, dtype=float).ravel()
        if values.size != grid_size(axes):
            raise ConfigurationError(
                f"{values.size} values do not fit a grid of {grid_size(axes)} bins"
            )
        if self.kind == "counts" and np.any(values < 0):
            raise ConfigurationError("counts must be nonnegative")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(a.nbins for a in self.axes)

    @property
    def binvolume(self) -> float:
        return bin_volume(self.axes)

    @property
    def total(self) -> float:
        return float(self.values.sum())

    def integral(self) -> float:
        """Sum of values weighted by the bin volume."""
        return float(self.values.sum() * self.binvolume)

    def as_array(self) -> np.ndarray:
        return self.values.reshape(self.shape)

    def with_values(self, values, kind=None) -> "GridHistogram":
        return GridHistogram(self.axes, values, kind or self.kind, meta=dict(self.meta))

    # -- serialization -----------------------------------------------------

    def to_csv(self, path) -> None:
        Path(path).write_text(histogram_to_csv(self))

    def to_json(self, path) -> None:
        Path(path).write_text(histogram_to_json(self))


def from_samples(samples, *axes) -> GridHistogram:
    """Histogram sample points; out-of-range points go to ``overflow``."""
    if len(axes) == 1 and not isinstance(axes[0], Axis):
        axes = tuple(axes[0])
    axes = _as_axes(axes)
    pts = np.asarray(samples, dtype=float)
    if len(axes) == 1:
        pts = pts.reshape(-1, 1)
    elif pts.ndim != 2 or pts.shape[1] != len(axes):
        raise ConfigurationError(f"expected samples of shape (n, {len(axes)})")
    n = pts.shape[0]
    flat = np.zeros(n, dtype=np.int64)
    ok = np.ones(n, dtype=bool)
    for d, ax in enumerate(axes):
        idx = ax.index(pts[:, d])
        ok &= idx >= 0
        flat = flat * ax.nbins + np.maximum(idx, 0)
    counts = np.bincount(flat[ok], minlength=grid_size(axes)).astype(float)
    return GridHistogram(axes, counts, "counts", overflow=float(n - ok.sum()))


def normalize(h: GridHistogram) -> GridHistogram:
    """Scale to a density whose integral over the grid is one."""
    mass = h.values.sum() * h.binvolume
    if not mass > 0:
        raise DegenerateInputError("cannot normalize a histogram with zero total")
    return GridHistogram(h.axes, h.values / mass, "density", meta=dict(h.meta))


def poisson_covariance(h: GridHistogram) -> np.ndarray:
    """Independent-Poisson covariance estimate ``diag(N_1, ..., N_M)``."""
    if h.kind != "counts":
        raise KindMismatchError("Poisson covariance needs a counts histogram")
    return np.diag(np.array(h.values, dtype=float))


# -- text formats ------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def _axes_header(axes) -> str:
    return " ".join(
        f"axis{d} {_fmt(a.lo)} {_fmt(a.hi)} {a.nbins}" for d, a in enumerate(axes)
    )


def histogram_to_csv(h: GridHistogram) -> str:
    meta = "".join(f" {k}={v}" for k, v in sorted(h.meta.items()))
    lines = [f"# {_axes_header(h.axes)} kind={h.kind}{meta}"]
    centers = flat_centers(h.axes)
    if h.ndim == 1:
        centers = centers[:, None]
    for i, (c, v) in enumerate(zip(centers, h.values)):
        lines.append(",".join([str(i), *(_fmt(x) for x in c), _fmt(v)]))
    return "\n".join(lines) + "\n"


def _parse_header(line: str):
    if not line.startswith("#"):
        raise FileFormatError("histogram file must start with a '#' header line")
    tokens = line[1:].split()
    axes, kind, meta = [], None, {}
    i = 0
    try:
        while i < len(tokens):
            tok = tokens[i]
            if tok.startswith("axis"):
                axes.append(Axis(float(tokens[i + 1]), float(tokens[i + 2]), int(tokens[i + 3])))
                i += 4
            elif "=" in tok:
                key, value = tok.split("=", 1)
                if key == "kind":
                    kind = value
                else:
                    meta[key] = value
                i += 1
            else:
                raise FileFormatError(f"unexpected header token {tok!r}")
    except (IndexError, ValueError) as exc:
        if isinstance(exc, FileFormatError):
            raise
        raise FileFormatError(f"malformed histogram header: {line!r}") from exc
    if not axes or kind is None:
        raise FileFormatError("histogram header needs axes and kind=")
    return axes, kind, meta


def histogram_from_csv_text(text: str) -> GridHistogram:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise FileFormatError("empty histogram file")
    axes, kind, meta = _parse_header(lines[0])
    m = grid_size(axes)
    if len(lines) - 1 != m:
        raise FileFormatError(f"expected {m} bin lines, found {len(lines) - 1}")
    values = np.empty(m)
    for line in lines[1:]:
        parts = line.split(",")
        if len(parts) != len(axes) + 2:
            raise FileFormatError(f"malformed bin line: {line!r}")
        try:
            values[int(parts[0])] = float(parts[-1])
        except (ValueError, IndexError) as exc:
            raise FileFormatError(f"malformed bin line: {line!r}") from exc
    try:
        return GridHistogram(axes, values, kind, meta=meta)
    except ConfigurationError as exc:
        raise FileFormatError(str(exc)) from exc


def histogram_to_json(h: GridHistogram) -> str:
    doc = {
        "axes": [{"lo": a.lo, "hi": a.hi, "nbins": a.nbins} for a in h.axes],
        "kind": h.kind,
        "meta": dict(sorted(h.meta.items())),
        "values": [float(v) for v in h.values],
    }
    return json.dumps(doc, indent=1) + "\n"


def histogram_from_json_text(text: str) -> GridHistogram:
    try:
        doc = json.loads(text)
        axes = [Axis(a["lo"], a["hi"], a["nbins"]) for a in doc["axes"]]
        return GridHistogram(axes, doc["values"], doc["kind"], meta=doc.get("meta", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise FileFormatError(f"malformed histogram JSON: {exc}") from exc


def load_histogram(path) -> GridHistogram:
    """Read a histogram written by :meth:`GridHistogram.to_csv` or ``to_json``."""
    path = Path(path)
    text = path.read_text()
    if path.suffix.lower() == ".json":
        return histogram_from_json_text(text)
    return histogram_from_csv_text(text)
