"""Iterative series-expansion unfolding.

With a response ``A_Q`` (truth grid -> measured grid) and a smoother
``A_G`` (measured grid -> truth grid) the iteration is

    f_0     = A_G H
    f_{N+1} = f_N + f_0 - A f_N,        A = A_G A_Q,

so ``f_N = S_N f_0`` with ``S_N = sum_{n<=N} (I - A)**n``, the truncated
Neumann series for ``A**-1``.  The statistical covariance of ``f_N`` is
``S_N C_0 S_N^T`` with ``C_0 = A_G Cov(H) A_G^T``; it is carried exactly
through the auxiliary ``P_N = S_N C_0``:

    P_{N+1} = P_N + C_0 - A P_N
    C_{N+1} = (I - A) C_N (I - A)^T + P_N^T (I - A)^T + P_{N+1}.

The run stops once the integrated relative noise exceeds a threshold, or
when the Cauchy root index ``max|(I - A)**N f_0|**(1/N)`` stays at or above
a limit, i.e. the series is not converging.
"""

from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DimensionMismatchError,
    DivergenceError,
)
from .folding import (
    FoldingMatrix,
    GaussianCpdf,
    KernelPdf,
    adjoint_smoother,
    matrix_from_cpdf,
    matrix_from_kernel,
    parity_reflect,
)
from .histogram import GridHistogram, _as_axes, bin_volume

ERROR_MODES = ("exact", "gaussian")
STOP_REASONS = ("noise_threshold", "max_iters", "cauchy_violation")


def _entries(a) -> np.ndarray:
    return a.entries if isinstance(a, FoldingMatrix) else np.asarray(a, dtype=float)


# -- configuration -----------------------------------------------------------------


@dataclass(frozen=True)
class StoppingPolicy:
    """When to truncate the series.

    ``max_iters`` counts iterates including ``f_0``, so ``max_iters=1``
    returns ``f_0``.  The Cauchy test fires when the median index over the
    last ``window`` iterations is ``>= cauchy_limit``.
    """

    noise_threshold: float = 0.5
    max_iters: int = 100
    cauchy_limit: float = 1.0
    error_mode: str = "exact"
    window: int = 8

    def __post_init__(self):
        if not self.noise_threshold > 0:
            raise ConfigurationError("noise_threshold must be positive")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ConfigurationError("max_iters must be an integer >= 1")
        if not 0 < self.cauchy_limit <= 1:
            raise ConfigurationError("cauchy_limit must lie in (0, 1]")
        if self.error_mode not in ERROR_MODES:
            raise ConfigurationError(f"error_mode must be one of {ERROR_MODES}")
        if self.window < 1:
            raise ConfigurationError("window must be >= 1")


@dataclass(frozen=True)
class Smoother:
    """Choice of the pre-smoothing operator ``A_G``.

    ``identity``
        No smoothing.
    ``parity``
        The mirrored response.  For a convolution with kernel ``eta`` this
        is the convolution with ``eta(-x)``; without a kernel it falls back
        to ``adjoint``.
    ``adjoint``
        The transpose of the response with rows renormalized.  Keeps the
        spectrum of ``A_G A_Q`` in ``[0, 1]`` for any response.
    ``gaussian``
        Gaussian blur of width ``sigma`` in axis units (per axis in 2-D).
    """

    name: str = "identity"
    sigma: float | None = None

    def __post_init__(self):
        if self.name not in ("identity", "parity", "adjoint", "gaussian"):
            raise ConfigurationError(f"unknown smoother {self.name!r}")
        if self.name == "gaussian" and not (self.sigma and self.sigma > 0):
            raise ConfigurationError("gaussian smoother needs sigma > 0")

    @classmethod
    def parse(cls, text: str) -> "Smoother":
        """``identity``, ``parity``, ``adjoint`` or ``gaussian:SIGMA``."""
        text = text.strip()
        if text.startswith("gaussian"):
            _, _, s = text.partition(":")
            try:
                return cls("gaussian", float(s))
            except ValueError as exc:
                raise ConfigurationError(f"bad smoother spec {text!r}") from exc
        return cls(text)

    def __str__(self) -> str:
        return f"gaussian:{self.sigma!r}" if self.name == "gaussian" else self.name

    def matrix(self, response: FoldingMatrix, kernel: KernelPdf | None = None) -> FoldingMatrix:
        """``A_G`` mapping the response's output grid back to its input grid."""
        out_axes, in_axes = response.out_axes, response.in_axes
        if self.name == "parity" and kernel is not None:
            return matrix_from_kernel(parity_reflect(kernel), out_axes)
        if self.name in ("parity", "adjoint"):
            return adjoint_smoother(response)
        if in_axes != out_axes:
            raise ConfigurationError(f"{self.name} smoother needs equal input and output grids")
        if self.name == "identity":
            return FoldingMatrix.identity(in_axes)
        mats = [matrix_from_cpdf(GaussianCpdf(self.sigma), (a,), (a,)).entries for a in in_axes]
        g = mats[0] if len(mats) == 1 else np.kron(mats[0], mats[1])
        return FoldingMatrix.from_columns(g, in_axes, in_axes, {"smoother": str(self)})


# -- state and primitive steps --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class IterationState:
    """One iterate of the series.

    In exact mode ``cov`` is ``C_N`` and ``c_hat`` is ``P_N``; in Gaussian
    mode both are None and ``variance`` holds per-bin variances.
    ``residual`` is ``(I - A)**n f_0``.
    """

    n: int
    f: np.ndarray
    c_hat: np.ndarray | None
    cov: np.ndarray | None
    variance: np.ndarray
    noise_content: float
    cauchy_index: float | None
    residual: np.ndarray
    total: float


def noise_content(cov, total: float) -> float:
    """Integrated relative error ``sum_i sqrt(cov_ii) / total``.

    ``cov`` may be a covariance matrix or a vector of variances.
    """
    if not total > 0:
        raise DegenerateInputError("noise content needs a positive total")
    c = np.asarray(cov, dtype=float)
    var = np.diag(c) if c.ndim == 2 else c
    return float(np.sqrt(np.clip(var, 0.0, None)).sum() / total)


def gaussian_error_step(sigma, a) -> np.ndarray:
    """Standard deviations of ``a @ v`` for independent components of ``v``."""
    s = np.asarray(sigma, dtype=float)
    if np.any(s < 0):
        raise ConfigurationError("sigma must be nonnegative")
    m = _entries(a)
    return np.sqrt((m * m) @ (s * s))


def cauchy_index(residual, n: int) -> float:
    """Root test value ``max_i |residual_i| ** (1/n)``."""
    if n < 1:
        raise ConfigurationError("the Cauchy index needs n >= 1")
    return float(np.max(np.abs(residual)) ** (1.0 / n))


def input_covariance(H: GridHistogram) -> np.ndarray:
    """Poisson variances for counts; density input is treated as noiseless."""
    if H.kind == "counts":
        return np.array(H.values, dtype=float)
    return np.zeros(H.values.size)


def init_state(H: GridHistogram, A_G, error_mode: str = "exact") -> IterationState:
    g = _entries(A_G)
    if g.shape[1] != H.values.size:
        raise DimensionMismatchError(
            f"smoother of shape {g.shape} cannot act on {H.values.size} bins"
        )
    total = float(H.values.sum())
    if not total > 0:
        raise DegenerateInputError("measured histogram has zero total")
    var_h = input_covariance(H)
    f0 = g @ H.values
    if error_mode == "exact":
        c0 = (g * var_h) @ g.T
        c0 = 0.5 * (c0 + c0.T)
        var = np.diag(c0).copy()
        return IterationState(0, f0, c0, c0, var, noise_content(var, total), None, f0.copy(), total)
    if error_mode == "gaussian":
        var = (g * g) @ var_h
        return IterationState(0, f0, None, None, var, noise_content(var, total), None, f0.copy(), total)
    raise ConfigurationError(f"error_mode must be one of {ERROR_MODES}")


def initial_terms(state: IterationState) -> tuple:
    """``(f_0, C_0 or sigma_0**2)`` from an initial state."""
    return state.f, (state.cov if state.cov is not None else state.variance)


def iterate_step(state: IterationState, A, f0, c0) -> IterationState:
    """Advance one term of the series.

    ``A`` is the composed operator ``A_G A_Q``; ``f0`` and ``c0`` are the
    initial estimate and its covariance (or its variances in Gaussian mode).
    """
    a = _entries(A)
    n = state.n + 1
    with np.errstate(over="ignore", invalid="ignore"):
        f = state.f + f0 - a @ state.f
        residual = state.residual - a @ state.residual
        if state.cov is not None:
            p = state.c_hat
            p_next = p + c0 - a @ p
            x = state.cov - a @ state.cov + p.T
            cov = x - x @ a.T + p_next
            cov = 0.5 * (cov + cov.T)
            var = np.diag(cov).copy()
            c_hat = p_next
        else:
            b = np.eye(a.shape[0]) - a
            var = (b * b) @ state.variance + c0
            cov = c_hat = None
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(var))):
        raise DivergenceError(f"non-finite values at iteration {n}", n)
    return IterationState(
        n, f, c_hat, cov, var,
        noise_content(var, state.total),
        cauchy_index(residual / state.total, n),
        residual, state.total,
    )


# -- driver ------------------------------------------------------------------------------


@dataclass(frozen=True)
class IterationRecord:
    n: int
    noise_content: float
    cauchy_index: float | None
    l1_change: float


@dataclass(frozen=True, eq=False)
class UnfoldReport:
    """Result of :func:`run_unfold`.

    ``estimate`` is a density over the truth grid: counts per unit bin
    volume when the input was counts, the input's scale otherwise.
    ``f`` and ``cov`` (or ``variance``) are the raw selected iterate.
    """

    estimate: GridHistogram
    f: np.ndarray
    cov: np.ndarray | None
    variance: np.ndarray
    n: int
    stop_reason: str
    trace: tuple
    smoother: str = "identity"

    def to_dict(self, estimate_ref: str | None = None) -> dict:
        return {
            "stop_reason": self.stop_reason,
            "selected_iteration": self.n,
            "smoother": self.smoother,
            "iterations": [
                {
                    "n": r.n,
                    "noise_content": r.noise_content,
                    "cauchy_index": r.cauchy_index,
                    "l1_change": r.l1_change,
                }
                for r in self.trace
            ],
            "estimate": estimate_ref,
        }

    def to_json(self, path, estimate_ref: str | None = None) -> None:
        Path(path).write_text(json.dumps(self.to_dict(estimate_ref), indent=1) + "\n")


def _record(state: IterationState, prev: IterationState | None) -> IterationRecord:
    change = 0.0 if prev is None else float(np.abs(state.f - prev.f).sum() / state.total)
    return IterationRecord(state.n, state.noise_content, state.cauchy_index, change)


def _report(state: IterationState, H: GridHistogram, axes, reason, trace, smoother) -> UnfoldReport:
    vals = state.f / bin_volume(axes) if H.kind == "counts" else state.f.copy()
    est = GridHistogram(axes, vals, "density", meta={"iteration": state.n})
    return UnfoldReport(est, state.f, state.cov, state.variance, state.n, reason,
                        tuple(trace), str(smoother))


def run_unfold(H: GridHistogram, A_Q: FoldingMatrix, smoother=Smoother(),
               policy: StoppingPolicy = StoppingPolicy(),
               kernel: KernelPdf | None = None) -> UnfoldReport:
    """Unfold ``H`` measured through ``A_Q``.

    Stop rules in order of precedence: the noise content exceeds
    ``policy.noise_threshold``; the Cauchy test fails; ``max_iters``
    iterates have been produced.  On a noise stop the previous iterate is
    returned; if even ``f_0`` is over budget, ``f_0`` is returned.

    Raises
    ------
    DivergenceError
        If values become non-finite; ``trace`` carries the records so far.
    """
    if isinstance(smoother, str):
        smoother = Smoother.parse(smoother)
    if H.values.size != A_Q.shape[0]:
        raise DimensionMismatchError(
            f"histogram with {H.values.size} bins does not match response of shape {A_Q.shape}"
        )
    if tuple(_as_axes(H.axes)) != A_Q.out_axes:
        raise DimensionMismatchError("histogram axes differ from the response output axes")
    g = smoother.matrix(A_Q, kernel) if isinstance(smoother, Smoother) else smoother
    if isinstance(g, FoldingMatrix) and g.shape != A_Q.shape[::-1]:
        raise DimensionMismatchError(f"smoother {g.shape} does not invert response {A_Q.shape}")
    ge = _entries(g)
    a = ge @ A_Q.entries

    state = init_state(H, ge, policy.error_mode)
    f0, c0 = initial_terms(state)
    trace = [_record(state, None)]
    if state.noise_content > policy.noise_threshold:
        return _report(state, H, A_Q.in_axes, "noise_threshold", trace, smoother)
    indices = []
    reason = "max_iters"
    while len(trace) < policy.max_iters:
        try:
            nxt = iterate_step(state, a, f0, c0)
        except DivergenceError as exc:
            raise DivergenceError(str(exc), exc.iteration, tuple(trace)) from None
        trace.append(_record(nxt, state))
        if nxt.noise_content > policy.noise_threshold:
            reason = "noise_threshold"
            break
        state = nxt
        indices.append(nxt.cauchy_index)
        if len(indices) >= policy.window and statistics.median(indices[-policy.window:]) >= policy.cauchy_limit:
            reason = "cauchy_violation"
            break
    return _report(state, H, A_Q.in_axes, reason, trace, smoother)


# -- sufficient-condition sweep -----------------------------------------------------------


@dataclass(frozen=True)
class ConditionSweep:
    """``sup`` over bins and unit inputs of ``|(I - A)**(N+1) e_x|`` for ``N = 0..n_max``.

    ``appears_bounded`` only says that the second half of the range never
    exceeds the largest value seen in the first half; it is not a proof.
    """

    n_values: tuple
    sup: tuple
    max_sup: float
    appears_bounded: bool

    def to_dict(self) -> dict:
        return {
            "n_values": list(self.n_values),
            "sup": list(self.sup),
            "max_sup": self.max_sup,
            "appears_bounded": self.appears_bounded,
        }


def verify_condition(A_Q: FoldingMatrix, smoother=Smoother(), n_max: int = 50,
                     kernel: KernelPdf | None = None) -> ConditionSweep:
    """Push every unit vector through ``(I - A)`` up to ``n_max + 1`` times."""
    if n_max < 1:
        raise ConfigurationError("n_max must be >= 1")
    if isinstance(smoother, str):
        smoother = Smoother.parse(smoother)
    a = smoother.matrix(A_Q, kernel).entries @ A_Q.entries
    b = np.eye(a.shape[0]) - a
    p = b.copy()
    sups = []
    for _ in range(n_max + 1):
        sups.append(float(np.abs(p).max()))
        p = b @ p
    ns = tuple(range(len(sups)))
    half = max(1, len(sups) // 2)
    bounded = bool(np.all(np.isfinite(sups)) and max(sups[half:] or [0.0]) <= max(sups[:half]) * (1 + 1e-12))
    return ConditionSweep(ns, tuple(sups), float(max(sups)), bounded)
