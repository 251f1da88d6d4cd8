"""Discrete folding operators.

A :class:`FoldingMatrix` is the binned form of a conditional density
``rho(y|x)``: entry ``(i, j)`` is the probability that an input in bin ``j``
is observed in output bin ``i``.  Columns are probability vectors up to the
mass that leaves the output grid, which is kept in ``leakage`` so that
``column_sum + leakage == 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import numpy as np
from scipy.special import ndtr

from .errors import (
    ConfigurationError,
    DimensionMismatchError,
    FileFormatError,
    InvalidCpdfError,
)
from .histogram import Axis, GridHistogram, _as_axes, _fmt, bin_volume, grid_size

COLUMN_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class FoldingMatrix:
    entries: np.ndarray
    in_axes: tuple
    out_axes: tuple
    leakage: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        in_axes, out_axes = _as_axes(self.in_axes), _as_axes(self.out_axes)
        object.__setattr__(self, "in_axes", in_axes)
        object.__setattr__(self, "out_axes", out_axes)
        a = np.array(self.entries, dtype=float)
        shape = (grid_size(out_axes), grid_size(in_axes))
        if a.shape != shape:
            raise DimensionMismatchError(f"matrix shape {a.shape} does not match axes {shape}")
        if np.any(a < 0) or not np.all(np.isfinite(a)):
            raise ConfigurationError("folding matrix entries must be finite and nonnegative")
        leak = np.array(self.leakage, dtype=float).ravel()
        if leak.shape != (shape[1],):
            raise DimensionMismatchError("leakage needs one entry per column")
        if np.any(leak < 0) or np.any(leak > 1):
            raise ConfigurationError("leakage must lie in [0, 1]")
        bad = np.abs(a.sum(axis=0) + leak - 1.0) > COLUMN_TOL
        if np.any(bad):
            j = int(np.argmax(bad))
            raise ConfigurationError(
                f"column {j} sums to {a[:, j].sum()!r} with leakage {leak[j]!r}"
            )
        a.flags.writeable = False
        leak.flags.writeable = False
        object.__setattr__(self, "entries", a)
        object.__setattr__(self, "leakage", leak)

    @property
    def shape(self) -> tuple[int, int]:
        return self.entries.shape

    @classmethod
    def from_columns(cls, entries, in_axes, out_axes, meta=None) -> "FoldingMatrix":
        """Build from entries, deriving leakage as the column deficit.

        Columns whose mass exceeds one by quadrature error are rescaled.
        """
        a = np.array(entries, dtype=float)
        s = a.sum(axis=0)
        over = s > 1.0
        if np.any(over):
            a[:, over] /= s[over]
            s = a.sum(axis=0)
        return cls(a, in_axes, out_axes, np.clip(1.0 - s, 0.0, 1.0), dict(meta or {}))

    @classmethod
    def identity(cls, axes) -> "FoldingMatrix":
        m = grid_size(axes)
        return cls(np.eye(m), axes, axes, np.zeros(m))

    def save(self, path) -> None:
        save_matrix(self, path)


# -- kernels -------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelPdf:
    """A translation-invariant smearing density sampled on a symmetric axis."""

    axis: Axis
    values: np.ndarray

    def __post_init__(self):
        if not self.axis.is_symmetric():
            raise ConfigurationError("kernel axis must be centered at zero")
        v = np.array(self.values, dtype=float).ravel()
        if v.size != self.axis.nbins:
            raise ConfigurationError("kernel values do not match its axis")
        if np.any(v < 0) or not np.all(np.isfinite(v)):
            raise ConfigurationError("kernel values must be finite and nonnegative")
        mass = v.sum() * self.axis.width
        if abs(mass - 1.0) > 1e-6:
            raise ConfigurationError(f"kernel integrates to {mass}, expected 1")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @property
    def width(self) -> float:
        return self.axis.width

    @property
    def centers(self) -> np.ndarray:
        return self.axis.centers

    @property
    def half(self) -> int:
        """Index of the zero-offset bin; requires an odd number of bins."""
        if self.axis.nbins % 2 == 0:
            raise ConfigurationError("kernel needs an odd number of bins to have a center bin")
        return self.axis.nbins // 2

    @classmethod
    def from_values(cls, values, width: float, symmetrize: bool = False) -> "KernelPdf":
        """Normalize raw nonnegative samples placed at offsets ``k*width``."""
        v = np.array(values, dtype=float)
        if v.size % 2 == 0:
            raise ConfigurationError("kernel samples need an odd length")
        if symmetrize:
            v = 0.5 * (v + v[::-1])
        mass = v.sum() * width
        if not mass > 0:
            raise ConfigurationError("kernel has no mass")
        half = v.size // 2
        return cls(Axis(-(half + 0.5) * width, (half + 0.5) * width, v.size), v / mass)

    @classmethod
    def from_cdf(cls, cdf: Callable, support: float, width: float,
                 quadrature_order: int = 4, symmetric: bool = False) -> "KernelPdf":
        """Bin-to-bin smearing kernel of a distribution given by its CDF.

        The value at offset ``k`` is the probability that a point spread
        uniformly over one bin (midpoint rule, ``quadrature_order`` nodes) is
        moved into the bin ``k`` positions away, divided by the bin width.
        """
        if quadrature_order < 1:
            raise ConfigurationError("quadrature_order must be >= 1")
        half = int(math.ceil(support / width)) + 1
        k = np.arange(-half, half + 1)
        nodes = ((np.arange(quadrature_order) + 0.5) / quadrature_order - 0.5) * width
        hi = (k[:, None] + 0.5) * width - nodes[None, :]
        lo = (k[:, None] - 0.5) * width - nodes[None, :]
        p = np.clip(cdf(hi) - cdf(lo), 0.0, None).mean(axis=1)
        return cls.from_values(p / width, width, symmetrize=symmetric)

    @classmethod
    def gaussian(cls, sigma: float, width: float, n_sigma: float = 8.0,
                 quadrature_order: int = 4) -> "KernelPdf":
        if not sigma > 0:
            raise ConfigurationError("sigma must be positive")
        return cls.from_cdf(lambda u: ndtr(u / sigma), n_sigma * sigma, width,
                            quadrature_order, symmetric=True)

    @classmethod
    def triangle(cls, half_width: float, width: float,
                 quadrature_order: int = 4) -> "KernelPdf":
        """Triangle density ``(W - |x|) / W**2`` on ``[-W, W]``."""
        W = float(half_width)
        if not W > 0:
            raise ConfigurationError("triangle half-width must be positive")

        def cdf(u):
            u = np.clip(u, -W, W)
            return np.where(u < 0, (W + u) ** 2 / (2 * W * W), 1 - (W - u) ** 2 / (2 * W * W))

        return cls.from_cdf(cdf, W, width, quadrature_order, symmetric=True)

    @classmethod
    def uniform(cls, half_width: float, width: float,
                quadrature_order: int = 4) -> "KernelPdf":
        """Uniform density on ``[-a, a]``."""
        a = float(half_width)
        if not a > 0:
            raise ConfigurationError("uniform half-width must be positive")
        return cls.from_cdf(lambda u: np.clip((u + a) / (2 * a), 0.0, 1.0), a, width,
                            quadrature_order, symmetric=True)


def parity_reflect(eta: KernelPdf) -> KernelPdf:
    """The mirrored kernel ``x -> eta(-x)``."""
    return KernelPdf(eta.axis, eta.values[::-1].copy())


def matrix_from_kernel(eta: KernelPdf, axes) -> FoldingMatrix:
    """Toeplitz convolution matrix, truncated at the grid boundary.

    Kernel mass that would land outside the grid is booked as leakage rather
    than wrapped around.
    """
    axes = _as_axes(axes)
    if len(axes) != 1:
        raise ConfigurationError("kernel convolution is 1-D only")
    ax = axes[0]
    if not math.isclose(eta.width, ax.width, rel_tol=1e-9):
        raise ConfigurationError(
            f"kernel bin width {eta.width} differs from histogram bin width {ax.width}"
        )
    K, M = eta.half, ax.nbins
    taps = eta.values * eta.width
    taps = taps / taps.sum()
    offset = np.subtract.outer(np.arange(M), np.arange(M))
    inside = np.abs(offset) <= K
    entries = np.where(inside, taps[np.clip(offset + K, 0, 2 * K)], 0.0)
    # taps k < K - j and k > K + M - 1 - j fall off the grid in column j
    csum = np.concatenate([[0.0], np.cumsum(taps)])
    j = np.arange(M)
    below = csum[np.clip(K - j, 0, 2 * K + 1)]
    above = csum[-1] - csum[np.clip(K + M - j, 0, 2 * K + 1)]
    leak = np.clip(below + above + (1.0 - csum[-1]), 0.0, 1.0)
    return FoldingMatrix(entries, axes, axes, leak)


# -- general cpdfs ---------------------------------------------------------------


class GaussianCpdf:
    """``rho(y|x)`` = normal density of ``y`` with mean ``x + shift``.

    Exposes ``cdf`` so bin integrals are exact rather than quadrature.
    """

    def __init__(self, sigma: float, shift: float = 0.0):
        if not sigma > 0:
            raise ConfigurationError("sigma must be positive")
        self.sigma = float(sigma)
        self.shift = float(shift)

    def __call__(self, y, x):
        z = (y - x - self.shift) / self.sigma
        return np.exp(-0.5 * z * z) / (math.sqrt(2 * math.pi) * self.sigma)

    def cdf(self, y, x):
        return ndtr((y - x - self.shift) / self.sigma)


def _cell_nodes(axes, order: int) -> np.ndarray:
    """Midpoint offsets inside a unit cell, scaled to bin widths: (order**d, d)."""
    u = (np.arange(order) + 0.5) / order
    grids = np.meshgrid(*[u * a.width for a in axes], indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def _lower_corners(axes) -> np.ndarray:
    grids = np.meshgrid(*[a.edges[:-1] for a in axes], indexing="ij")
    return np.column_stack([g.ravel() for g in grids])


def matrix_from_cpdf(rho, in_axes, out_axes, quadrature_order: int = 4) -> FoldingMatrix:
    """Discretize a conditional density into a folding matrix.

    Entry ``(i, j)`` is the mean, over ``quadrature_order**d`` midpoint nodes
    ``x`` in input bin ``j``, of the integral of ``rho(y|x)`` over output bin
    ``i``.  In 1-D, if ``rho`` has a ``cdf(y, x)`` method the integral over
    ``y`` is taken from it exactly; otherwise it is a midpoint sum as well.

    ``rho(y, x)`` receives broadcastable arrays; in 2-D the last axis of each
    holds the two coordinates.
    """
    in_axes, out_axes = _as_axes(in_axes), _as_axes(out_axes)
    if quadrature_order < 1:
        raise ConfigurationError("quadrature_order must be >= 1")
    d = len(in_axes)
    if len(out_axes) != d:
        raise ConfigurationError("input and output grids need the same dimension")
    x_nodes = _cell_nodes(in_axes, quadrature_order)
    x_corner = _lower_corners(in_axes)
    m_out, m_in = grid_size(out_axes), grid_size(in_axes)
    entries = np.empty((m_out, m_in))
    exact = d == 1 and hasattr(rho, "cdf")

    if exact:
        edges = out_axes[0].edges
        for j in range(m_in):
            xs = x_corner[j, 0] + x_nodes[:, 0]
            c = rho.cdf(edges[:, None], xs[None, :])
            if np.any(np.diff(c, axis=0) < -1e-15):
                raise InvalidCpdfError("cdf is decreasing: density takes negative values")
            entries[:, j] = np.diff(c, axis=0).mean(axis=1)
        np.clip(entries, 0.0, None, out=entries)
    else:
        y_pts = (_lower_corners(out_axes)[:, None, :] + _cell_nodes(out_axes, quadrature_order)[None])
        vol = bin_volume(out_axes)
        for j in range(m_in):
            xs = x_corner[j] + x_nodes
            if d == 1:
                vals = rho(y_pts[:, :, 0][:, :, None], xs[:, 0][None, None, :])
            else:
                vals = rho(y_pts[:, :, None, :], xs[None, None, :, :])
            vals = np.asarray(vals, dtype=float)
            if np.any(vals < 0) or not np.all(np.isfinite(vals)):
                raise InvalidCpdfError(f"rho is negative or non-finite in column {j}")
            entries[:, j] = vals.mean(axis=(1, 2)) * vol
    return FoldingMatrix.from_columns(entries, in_axes, out_axes)


# -- Monte Carlo responses --------------------------------------------------------


class ResponseSampler(Protocol):
    """Maps input points ``x`` (shape ``(n,)`` or ``(n, d)``) to output points.

    Must be deterministic given ``x`` and the state of ``rng``.  A sampler may
    emit several outputs per input; it then sets ``multiplicity`` and returns
    ``n * multiplicity`` points.
    """

    def __call__(self, x: np.ndarray, rng: np.random.Generator) -> np.ndarray: ...


def column_seeds(seed, n: int) -> list:
    """Independent per-column seed sequences derived from one seed."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    return ss.spawn(n)


def _uniform_in_bin(axes, multi_index, n, rng) -> np.ndarray:
    cols = []
    for ax, i in zip(axes, multi_index):
        e = ax.edges
        x = e[i] + rng.random(n) * (e[i + 1] - e[i])
        cols.append(np.minimum(x, np.nextafter(e[i + 1], -np.inf)))
    return np.column_stack(cols)


def _flat_index(axes, pts) -> np.ndarray:
    flat = np.zeros(pts.shape[0], dtype=np.int64)
    ok = np.ones(pts.shape[0], dtype=bool)
    for d, ax in enumerate(axes):
        idx = ax.index(pts[:, d])
        ok &= idx >= 0
        flat = flat * ax.nbins + np.maximum(idx, 0)
    return np.where(ok, flat, -1)


def mc_estimate_matrix(sampler: ResponseSampler, in_axes, out_axes, n_per_bin: int,
                       seed) -> FoldingMatrix:
    """Estimate a folding matrix column by column by simulation.

    Column ``j`` uses ``n_per_bin`` inputs drawn uniformly inside input bin
    ``j`` from its own seed-derived stream, so the result does not depend on
    the order in which columns are computed.
    """
    in_axes, out_axes = _as_axes(in_axes), _as_axes(out_axes)
    if int(n_per_bin) < 1:
        raise ConfigurationError("n_per_bin must be >= 1")
    n = int(n_per_bin)
    mult = int(getattr(sampler, "multiplicity", 1))
    m_out, m_in = grid_size(out_axes), grid_size(in_axes)
    shape_in = tuple(a.nbins for a in in_axes)
    entries = np.zeros((m_out, m_in))
    for j, ss in enumerate(column_seeds(seed, m_in)):
        rng = np.random.default_rng(ss)
        x = _uniform_in_bin(in_axes, np.unravel_index(j, shape_in), n, rng)
        y = np.asarray(sampler(x[:, 0] if len(in_axes) == 1 else x, rng), dtype=float)
        y = y.reshape(-1, len(out_axes))
        if y.shape[0] != n * mult:
            raise ConfigurationError(
                f"sampler returned {y.shape[0]} points for {n} inputs (multiplicity {mult})"
            )
        idx = _flat_index(out_axes, y)
        entries[:, j] = np.bincount(idx[idx >= 0], minlength=m_out) / (n * mult)
    meta = {"n_per_bin": n}
    if not isinstance(seed, np.random.SeedSequence):
        meta["seed"] = seed
    return FoldingMatrix.from_columns(entries, in_axes, out_axes, meta)


# -- algebra -----------------------------------------------------------------------


def _same_axes(a, b) -> bool:
    return len(a) == len(b) and all(x == y for x, y in zip(a, b))


def compose(a: FoldingMatrix, b: FoldingMatrix) -> FoldingMatrix:
    """The folding ``a`` applied after ``b``."""
    if not _same_axes(a.in_axes, b.out_axes) or a.shape[1] != b.shape[0]:
        raise DimensionMismatchError(
            f"cannot compose {a.shape} after {b.shape}: axes do not chain"
        )
    return FoldingMatrix.from_columns(a.entries @ b.entries, b.in_axes, a.out_axes)


def apply(a: FoldingMatrix, h: GridHistogram) -> GridHistogram:
    if h.values.size != a.shape[1]:
        raise DimensionMismatchError(
            f"histogram with {h.values.size} bins does not match matrix {a.shape}"
        )
    return GridHistogram(a.out_axes, a.entries @ h.values, h.kind, meta=dict(h.meta))


def adjoint_smoother(a: FoldingMatrix) -> FoldingMatrix:
    """Row-normalized transpose of a square response, as a folding matrix.

    For a convolution this is the parity-reflected kernel (away from the
    boundaries).  ``adjoint_smoother(a) @ a`` is similar to a symmetric
    positive semidefinite matrix with spectrum in ``[0, 1]``.
    """
    r = a.entries
    rows = r.sum(axis=1)
    g = np.where(rows[:, None] > 0, r / np.where(rows > 0, rows, 1.0)[:, None], 0.0).T
    return FoldingMatrix.from_columns(g, a.out_axes, a.in_axes)


# -- file formats --------------------------------------------------------------------


def _axes_tokens(axes) -> str:
    return " ".join(f"{_fmt(a.lo)} {_fmt(a.hi)} {a.nbins}" for a in axes)


def _parse_axes(tokens) -> tuple:
    if len(tokens) % 3 or not tokens:
        raise FileFormatError("axis description needs lo hi nbins triples")
    return tuple(Axis(float(tokens[i]), float(tokens[i + 1]), int(tokens[i + 2]))
                 for i in range(0, len(tokens), 3))


def save_matrix(a: FoldingMatrix, path) -> None:
    """Write ``.npz`` (binary) or CSV; both round-trip bitwise."""
    path = Path(path)
    if path.suffix.lower() == ".npz":
        np.savez(
            path,
            entries=a.entries,
            leakage=a.leakage,
            in_axes=np.array([[x.lo, x.hi, x.nbins] for x in a.in_axes]),
            out_axes=np.array([[x.lo, x.hi, x.nbins] for x in a.out_axes]),
            seed=np.array(a.meta.get("seed", -1)),
            n_per_bin=np.array(a.meta.get("n_per_bin", -1)),
        )
        return
    rows, cols = a.shape
    lines = [
        f"# folding-matrix rows={rows} cols={cols}",
        f"# in_axes {_axes_tokens(a.in_axes)}",
        f"# out_axes {_axes_tokens(a.out_axes)}",
        f"# seed={a.meta.get('seed', 'none')} n_per_bin={a.meta.get('n_per_bin', 'none')}",
        "# leakage " + ",".join(_fmt(v) for v in a.leakage),
    ]
    lines += [",".join(_fmt(v) for v in row) for row in a.entries]
    path.write_text("\n".join(lines) + "\n")


def load_matrix(path) -> FoldingMatrix:
    path = Path(path)
    try:
        if path.suffix.lower() == ".npz":
            with np.load(path) as z:
                in_axes = tuple(Axis(lo, hi, int(n)) for lo, hi, n in z["in_axes"])
                out_axes = tuple(Axis(lo, hi, int(n)) for lo, hi, n in z["out_axes"])
                meta = {k: int(z[k]) for k in ("seed", "n_per_bin") if int(z[k]) >= 0}
                return FoldingMatrix(z["entries"], in_axes, out_axes, z["leakage"], meta)
        lines = path.read_text().splitlines()
        head = [ln for ln in lines[:5]]
        if len(head) < 5 or not head[0].startswith("# folding-matrix"):
            raise FileFormatError(f"{path} is not a folding-matrix file")
        dims = dict(t.split("=") for t in head[0].split()[2:])
        rows, cols = int(dims["rows"]), int(dims["cols"])
        in_axes = _parse_axes(head[1].split()[2:])
        out_axes = _parse_axes(head[2].split()[2:])
        meta = {}
        for tok in head[3].split()[1:]:
            k, v = tok.split("=")
            if v != "none":
                meta[k] = int(v)
        leak = np.array([float(v) for v in head[4].split(None, 2)[2].split(",")])
        body = [ln for ln in lines[5:] if ln.strip()]
        if len(body) != rows:
            raise FileFormatError(f"expected {rows} matrix rows, found {len(body)}")
        entries = np.array([[float(v) for v in ln.split(",")] for ln in body])
        if entries.shape != (rows, cols):
            raise FileFormatError(f"matrix body has shape {entries.shape}, header says {(rows, cols)}")
        return FoldingMatrix(entries, in_axes, out_axes, leak, meta)
    except FileFormatError:
        raise
    except (KeyError, ValueError, IndexError, OSError, ConfigurationError) as exc:
        if isinstance(exc, FileNotFoundError):
            raise
        raise FileFormatError(f"cannot read folding matrix {path}: {exc}") from exc
