"""Fourier transforms of kernels and histograms, and convergence diagnostics.

Convention: for values ``v`` on bin centers ``x_0 + n*w`` the transform is

    F(omega_k) = w * sum_n v_n exp(-i omega_k (x_0 + n*w)),
    omega_k = 2*pi * fftfreq(M, w),

so the zero-frequency value is the integral ``sum(v) * w`` and a unit-mass
spike in the bin centered on zero transforms to one everywhere.

The series iteration with a convolution ``A`` converges on every frequency
where ``|1 - F(A)| < 1``; frequencies where the transform vanishes are never
updated by the iteration.  All checks here are made on a finite frequency
grid and are advisory: a violation between grid frequencies can be missed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DimensionMismatchError, DivisionBlowupError
from .folding import KernelPdf
from .histogram import Axis, GridHistogram

TINY = 1e-300


@dataclass(frozen=True, eq=False)
class Spectrum:
    """Complex transform values with their angular frequencies.

    ``axis`` and ``kind`` describe the source histogram, when there is one,
    so that :func:`idft` can rebuild it.
    """

    values: np.ndarray
    omega: np.ndarray
    width: float
    x0: float
    axis: Axis | None = None
    kind: str = "density"

    @property
    def modulus(self) -> np.ndarray:
        return np.abs(self.values)


def frequencies(n: int, width: float) -> np.ndarray:
    return 2 * np.pi * np.fft.fftfreq(n, width)


def dft(h: GridHistogram) -> Spectrum:
    if h.ndim != 1:
        raise ConfigurationError("Fourier diagnostics support 1-D histograms only")
    ax = h.axes[0]
    w, x0 = ax.width, ax.centers[0]
    omega = frequencies(ax.nbins, w)
    values = w * np.exp(-1j * omega * x0) * np.fft.fft(h.values)
    return Spectrum(values, omega, w, x0, ax, h.kind)


def idft(s: Spectrum) -> GridHistogram:
    """Inverse of :func:`dft`.

    Returns the source kind unless roundoff made a counts histogram negative,
    in which case the result is a density.
    """
    if s.axis is None:
        raise ConfigurationError("spectrum has no source axis to invert onto")
    v = np.fft.ifft(s.values * np.exp(1j * s.omega * s.x0)).real / s.width
    kind = s.kind if (s.kind != "counts" or np.all(v >= 0)) else "density"
    return GridHistogram((s.axis,), v, kind)


def kernel_transform(eta: KernelPdf, omega) -> np.ndarray:
    """Transform of the kernel at arbitrary frequencies, by direct summation."""
    omega = np.asarray(omega, dtype=float)
    phase = np.exp(-1j * np.multiply.outer(omega, eta.centers))
    return phase @ (eta.values * eta.width)


def diagnosis_frequencies(eta: KernelPdf, axis: Axis | None = None, pad: int = 8) -> np.ndarray:
    """Default grid: the kernel zero-padded to ``pad`` times its length."""
    if axis is None:
        return frequencies(pad * eta.axis.nbins, eta.width)
    if not math.isclose(axis.width, eta.width, rel_tol=1e-9):
        raise ConfigurationError(
            f"kernel bin width {eta.width} differs from grid bin width {axis.width}"
        )
    return frequencies(axis.nbins, axis.width)


@dataclass(frozen=True)
class KernelDiagnosis:
    """Outcome of checking ``|1 - F| < 1`` outside the zero set.

    Attributes
    ----------
    condition_holds : bool
        True iff ``max_excursion < 1``.
    max_excursion : float
        Largest ``|1 - F(omega)|`` over frequencies not in the zero set.
    zero_set_bins : list of int
        Indices into ``omega`` where ``|F| <= zero_tol * peak``.
    omega : tuple of float
        The frequency grid that was examined.
    """

    condition_holds: bool
    max_excursion: float
    zero_set_bins: list
    omega: tuple = ()
    max_imag: float = 0.0

    def to_dict(self) -> dict:
        return {
            "condition_holds": bool(self.condition_holds),
            "max_excursion": float(self.max_excursion),
            "zero_set_bins": [int(i) for i in self.zero_set_bins],
            "zero_set_omega": [float(self.omega[i]) for i in self.zero_set_bins],
            "max_imag": float(self.max_imag),
        }


def _diagnose(F: np.ndarray, omega: np.ndarray, zero_tol: float) -> KernelDiagnosis:
    if not zero_tol > 0:
        raise ConfigurationError("zero_tol must be positive")
    mod = np.abs(F)
    peak = mod.max()
    zero = mod <= zero_tol * peak
    exc = np.abs(1.0 - F)[~zero]
    max_exc = float(exc.max()) if exc.size else 0.0
    return KernelDiagnosis(
        condition_holds=bool(max_exc < 1.0),
        max_excursion=max_exc,
        zero_set_bins=[int(i) for i in np.flatnonzero(zero)],
        omega=tuple(float(o) for o in omega),
        max_imag=float(np.abs(F.imag).max()),
    )


def diagnose_kernel(eta: KernelPdf, zero_tol: float = 1e-9, axis: Axis | None = None) -> KernelDiagnosis:
    """Check the single-kernel convergence condition on a frequency grid.

    ``zero_tol`` is relative to the peak modulus.  With ``axis`` given the
    grid is that of a histogram with the kernel's bin width.
    """
    omega = diagnosis_frequencies(eta, axis)
    return _diagnose(kernel_transform(eta, omega), omega, zero_tol)


def double_kernel(eta: KernelPdf) -> KernelPdf:
    """Autocorrelation ``(P eta) * eta``: an even kernel with transform ``|F eta|**2``."""
    v = np.convolve(eta.values[::-1], eta.values) * eta.width
    return KernelPdf.from_values(v, eta.width, symmetrize=True)


def diagnose_double_kernel(eta: KernelPdf, zero_tol: float = 1e-9,
                           axis: Axis | None = None) -> KernelDiagnosis:
    """Diagnosis of the parity-reflected double kernel.

    The transform is real and nonnegative, so away from its zeros it lies in
    ``(0, 1]`` and the condition holds up to roundoff.
    """
    d = double_kernel(eta)
    omega = diagnosis_frequencies(eta, axis)
    return _diagnose(kernel_transform(d, omega), omega, zero_tol)


# -- naive Fourier division -------------------------------------------------------


@dataclass(frozen=True)
class LowPass:
    """Discard frequencies with ``|omega| > cutoff``."""

    cutoff: float


@dataclass(frozen=True)
class Floor:
    """Clamp ``|F eta|`` from below at ``eps * peak`` keeping its phase."""

    eps: float


def naive_deconvolve(g: GridHistogram, eta: KernelPdf, regulator=None,
                     zero_tol: float = 1e-9) -> GridHistogram:
    """Divide the spectrum of ``g`` by the kernel transform and invert.

    Without a regulator (or for frequencies a :class:`LowPass` keeps) a
    :class:`DivisionBlowupError` is raised when the kernel transform has a
    zero among the retained frequencies: either ``|F| < 1e-300`` outright, or
    ``|F| <= zero_tol * peak`` at a frequency below the highest one where
    ``|F|`` is still above that level.  The second rule catches zeros that
    roundoff lifts to ~1e-17 while leaving the smooth high-frequency decay of
    e.g. a Gaussian alone.

    Counts input gives a density of counts per unit length; density input
    keeps its scale.
    """
    if g.ndim != 1:
        raise ConfigurationError("naive deconvolution supports 1-D histograms only")
    ax = g.axes[0]
    if not math.isclose(ax.width, eta.width, rel_tol=1e-9):
        raise DimensionMismatchError(
            f"kernel bin width {eta.width} differs from histogram bin width {ax.width}"
        )
    G = dft(g)
    F = kernel_transform(eta, G.omega)
    mod = np.abs(F)
    peak = mod.max()
    keep = np.ones(F.size, dtype=bool)
    if isinstance(regulator, LowPass):
        keep = np.abs(G.omega) <= regulator.cutoff
    elif isinstance(regulator, Floor):
        floor = regulator.eps * peak
        F = np.where(mod >= floor, F, floor * np.where(mod > 0, F / np.where(mod > 0, mod, 1), 1.0))
    elif regulator is not None:
        raise ConfigurationError(f"unknown regulator {regulator!r}")

    if not isinstance(regulator, Floor):
        small = mod <= zero_tol * peak
        big = np.abs(G.omega)[~small]
        top = big.max() if big.size else 0.0
        bad = keep & ((mod < TINY) | (small & (np.abs(G.omega) < top)))
        if np.any(bad):
            k = int(np.flatnonzero(bad)[0])
            raise DivisionBlowupError(
                f"kernel transform vanishes at omega={G.omega[k]:.6g} (|F|={mod[k]:.3g})",
                omega=float(G.omega[k]),
            )

    Q = np.zeros_like(G.values)
    Q[keep] = G.values[keep] / F[keep]
    v = idft(Spectrum(Q, G.omega, G.width, G.x0, ax, "density")).values
    if g.kind == "counts":
        v = v / ax.width
    return GridHistogram((ax,), v, "density", meta=dict(g.meta))
