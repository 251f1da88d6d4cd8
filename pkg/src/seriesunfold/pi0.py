"""Toy pi0 -> gamma gamma generator, photon response and unfolding experiment.

Particles are generated in ``(y, E_T, phi)``: Gaussian rapidity, exponential
transverse energy above the mass, uniform azimuth.  Each pi0 decays
isotropically in its rest frame into two photons of energy ``m/2``, which
are boosted to the lab.  Spectra are histogrammed in pseudorapidity and
transverse momentum; azimuth is integrated out.

All arrays are in GeV with metric signature (+, -, -, -).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .engine import Smoother, StoppingPolicy, UnfoldReport, run_unfold
from .errors import ConfigurationError, KinematicsError, UndefinedPseudorapidityError
from .folding import FoldingMatrix, mc_estimate_matrix
from .histogram import Axis, GridHistogram, bin_volume, grid_size

PI0_MASS = 0.1349766
SHELL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class FourMomentum:
    """Energy and momentum components; scalars or equal-length arrays."""

    e: np.ndarray
    px: np.ndarray
    py: np.ndarray
    pz: np.ndarray

    @property
    def p2(self):
        return self.px**2 + self.py**2 + self.pz**2

    @property
    def mass2(self):
        return self.e**2 - self.p2

    @property
    def pt(self):
        return np.hypot(self.px, self.py)

    def __add__(self, other: "FourMomentum") -> "FourMomentum":
        return FourMomentum(self.e + other.e, self.px + other.px,
                            self.py + other.py, self.pz + other.pz)

    def as_array(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.e, self.px, self.py, self.pz))


@dataclass(frozen=True)
class DecayConfig:
    m: float = PI0_MASS
    sigma_y: float = 0.5
    t_slope: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if not (self.m > 0 and self.sigma_y > 0 and self.t_slope > 0):
            raise ConfigurationError("m, sigma_y and t_slope must be positive")


@dataclass(frozen=True)
class MomentumBinning:
    eta_axis: Axis = Axis(-2.0, 2.0, 40)
    pt_axis: Axis = Axis(0.0, 2.0, 40)

    @property
    def axes(self) -> tuple:
        return (self.eta_axis, self.pt_axis)


@dataclass(frozen=True)
class ResolutionModel:
    """Gaussian photon smearing; all zero means off.

    ``energy`` is the relative width of a multiplicative energy factor,
    ``angle`` the width in radians of a rotation about a random axis
    perpendicular to the photon direction.
    """

    energy: float = 0.0
    angle: float = 0.0

    def __post_init__(self):
        if self.energy < 0 or self.angle < 0:
            raise ConfigurationError("resolutions must be nonnegative")

    @property
    def enabled(self) -> bool:
        return self.energy > 0 or self.angle > 0


# -- kinematics -------------------------------------------------------------------


def from_rapidity(y, et, phi, m: float) -> FourMomentum:
    """Four-momentum from rapidity, transverse energy and azimuth."""
    pt = np.sqrt(np.maximum(et * et - m * m, 0.0))
    return FourMomentum(et * np.cosh(y), pt * np.cos(phi), pt * np.sin(phi), et * np.sinh(y))


def from_eta_pt(eta, pt, phi, m: float) -> FourMomentum:
    pz = pt * np.sinh(eta)
    e = np.sqrt(m * m + pt * pt + pz * pz)
    return FourMomentum(e, pt * np.cos(phi), pt * np.sin(phi), pz)


def sample_pi0(cfg: DecayConfig, rng: np.random.Generator, n: int | None = None) -> FourMomentum:
    """Draw ``n`` pi0 momenta (a single one when ``n`` is None)."""
    y = rng.normal(0.0, cfg.sigma_y, n)
    et = cfg.m + rng.exponential(cfg.t_slope, n)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    return from_rapidity(y, et, phi, cfg.m)


def isotropic_axes(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Unit vectors uniform on the sphere, shape ``(3,)`` or ``(3, n)``."""
    cos_t = rng.uniform(-1.0, 1.0, n)
    phi = rng.uniform(0.0, 2 * np.pi, n)
    sin_t = np.sqrt(1.0 - cos_t * cos_t)
    return np.array([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])


def boost_from_rest(p: FourMomentum, m: float, e_star, k_star) -> FourMomentum:
    """Boost ``(e_star, k_star)`` from the rest frame of ``p`` (mass ``m``) to the lab.

    Written in terms of ``p`` itself rather than the velocity, which keeps it
    accurate for slow parents.
    """
    pv = np.array([p.px, p.py, p.pz])
    pk = (pv * k_star).sum(axis=0)
    e_lab = (p.e * e_star + pk) / m
    c = pk / (m * (p.e + m)) + e_star / m
    k = k_star + pv * c
    return FourMomentum(e_lab, k[0], k[1], k[2])


def check_shell(p: FourMomentum, m: float, tol: float = SHELL_TOL) -> None:
    e2 = np.asarray(p.e, dtype=float) ** 2
    dev = np.abs(p.mass2 - m * m)
    if np.any(np.asarray(p.e) <= 0) or np.any(dev > tol * np.maximum(1.0, e2)):
        raise KinematicsError(f"momentum is off the mass shell m={m}")


def decay_to_gammas(p: FourMomentum, m: float, rng: np.random.Generator,
                    axis: np.ndarray | None = None) -> tuple[FourMomentum, FourMomentum]:
    """Two-photon decay with an isotropic rest-frame axis.

    ``axis`` may be given to fix the decay direction (shape ``(3,)`` or
    ``(3, n)``); otherwise it is drawn from ``rng``.
    """
    check_shell(p, m)
    n = None if np.ndim(p.e) == 0 else np.shape(p.e)[0]
    u = isotropic_axes(rng, n) if axis is None else np.asarray(axis, dtype=float)
    half = 0.5 * m
    k1 = boost_from_rest(p, m, half, half * u)
    k2 = boost_from_rest(p, m, half, -half * u)
    return k1, k2


def to_eta_pt(k: FourMomentum) -> tuple:
    """Pseudorapidity and transverse momentum."""
    pt = k.pt
    if np.any(pt == 0):
        raise UndefinedPseudorapidityError("pseudorapidity is undefined for pt = 0")
    return np.arcsinh(k.pz / pt), pt


def _eta_pt_lenient(k: FourMomentum) -> np.ndarray:
    """Like :func:`to_eta_pt` but maps pt = 0 to NaN; shape ``(n, 2)``."""
    pt = np.atleast_1d(k.pt)
    with np.errstate(divide="ignore", invalid="ignore"):
        eta = np.where(pt > 0, np.arcsinh(np.atleast_1d(k.pz) / pt), np.nan)
    return np.column_stack([eta, pt])


def smear(k: FourMomentum, res: ResolutionModel, rng: np.random.Generator) -> FourMomentum:
    """Apply photon energy and direction resolution (identity when disabled)."""
    if not res.enabled:
        return k
    e = np.atleast_1d(k.e)
    v = np.array([np.atleast_1d(k.px), np.atleast_1d(k.py), np.atleast_1d(k.pz)]) / e
    n = e.size
    scale = np.maximum(rng.normal(1.0, res.energy, n), 0.0) if res.energy > 0 else np.ones(n)
    if res.angle > 0:
        # random unit axis perpendicular to v, then Rodrigues rotation
        r = isotropic_axes(rng, n)
        a = np.cross(v, r, axis=0)
        a /= np.linalg.norm(a, axis=0)
        theta = rng.normal(0.0, res.angle, n)
        v = v * np.cos(theta) + np.cross(a, v, axis=0) * np.sin(theta)
    e2 = e * scale
    return FourMomentum(e2, e2 * v[0], e2 * v[1], e2 * v[2])


# -- response -------------------------------------------------------------------------


class GammaSampler:
    """Response sampler: pi0 ``(eta, pt)`` points to their two photons' ``(eta, pt)``."""

    multiplicity = 2

    def __init__(self, m: float = PI0_MASS, res: ResolutionModel = ResolutionModel()):
        self.m = m
        self.res = res

    def __call__(self, x, rng):
        x = np.asarray(x, dtype=float)
        phi = rng.uniform(0.0, 2 * np.pi, x.shape[0])
        p = from_eta_pt(x[:, 0], x[:, 1], phi, self.m)
        k1, k2 = decay_to_gammas(p, self.m, rng)
        k1, k2 = smear(k1, self.res, rng), smear(k2, self.res, rng)
        return np.concatenate([_eta_pt_lenient(k1), _eta_pt_lenient(k2)])


def build_gamma_response(pi0_binning: MomentumBinning, gamma_binning: MomentumBinning,
                         m: float = PI0_MASS, res: ResolutionModel = ResolutionModel(),
                         n_per_bin: int = 2000, seed: int = 0) -> FoldingMatrix:
    """Per-photon response: column j is the photon ``(eta, pt)`` distribution of
    a pi0 drawn uniformly in bin j, normalized by two photons per pi0."""
    return mc_estimate_matrix(GammaSampler(m, res), pi0_binning.axes, gamma_binning.axes,
                              n_per_bin, seed)


# -- event generation -------------------------------------------------------------------


def _fill(axes, pts) -> np.ndarray:
    m = grid_size(axes)
    flat = np.zeros(pts.shape[0], dtype=np.int64)
    ok = np.ones(pts.shape[0], dtype=bool)
    for d, ax in enumerate(axes):
        idx = ax.index(pts[:, d])
        ok &= idx >= 0
        flat = flat * ax.nbins + np.maximum(idx, 0)
    return np.bincount(flat[ok], minlength=m)


def generate_events(cfg: DecayConfig, n_events: int, binning: MomentumBinning,
                    gamma_binning: MomentumBinning | None = None,
                    res: ResolutionModel = ResolutionModel(), chunk: int = 1 << 17):
    """Simulate ``n_events`` decays; return (pi0 counts, photon counts) histograms.

    Chunks draw from independent substreams of ``cfg.seed``, so results do
    not depend on how chunks are scheduled.
    """
    if n_events < 1:
        raise ConfigurationError("n_events must be >= 1")
    gamma_binning = gamma_binning or binning
    n_chunks = -(-n_events // chunk)
    truth = np.zeros(grid_size(binning.axes), dtype=np.int64)
    gamma = np.zeros(grid_size(gamma_binning.axes), dtype=np.int64)
    for c, ss in enumerate(np.random.SeedSequence(cfg.seed).spawn(n_chunks)):
        rng = np.random.default_rng(ss)
        n = min(chunk, n_events - c * chunk)
        p = sample_pi0(cfg, rng, n)
        truth += _fill(binning.axes, _eta_pt_lenient(p))
        k1, k2 = decay_to_gammas(p, cfg.m, rng)
        for k in (smear(k1, res, rng), smear(k2, res, rng)):
            gamma += _fill(gamma_binning.axes, _eta_pt_lenient(k))
    return (GridHistogram(binning.axes, truth, "counts"),
            GridHistogram(gamma_binning.axes, gamma, "counts"))


# -- experiment -----------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Pi0Result:
    """Outputs of :func:`run_pi0_experiment`.

    ``truth``, ``measured`` and ``unfolded`` are densities per generated
    particle (per pi0, per photon, per pi0) over their ``(eta, pt)`` grids.
    ``slices`` maps each requested eta to ``(truth, unfolded)`` pt spectra of
    the eta bin containing it.
    """

    truth: GridHistogram
    measured: GridHistogram
    unfolded: GridHistogram
    slices: dict
    cauchy_trace: tuple
    cauchy_saturation: float
    l1: float
    report: UnfoldReport
    response: FoldingMatrix
    truth_counts: GridHistogram = field(repr=False, default=None)
    measured_counts: GridHistogram = field(repr=False, default=None)


def _density(axes, values, per: float) -> GridHistogram:
    return GridHistogram(axes, np.asarray(values, dtype=float) / (per * bin_volume(axes)), "density")


def eta_slice(h: GridHistogram, eta: float) -> GridHistogram:
    """The pt spectrum in the eta bin containing ``eta``."""
    i = int(h.axes[0].index(eta))
    if i < 0:
        raise ConfigurationError(f"eta={eta} lies outside the eta axis")
    return GridHistogram((h.axes[1],), h.as_array()[i], h.kind, meta={"eta": eta})


def run_pi0_experiment(cfg: DecayConfig = DecayConfig(), n_events: int = 100_000,
                       binning: MomentumBinning = MomentumBinning(),
                       res: ResolutionModel = ResolutionModel(),
                       policy: StoppingPolicy = StoppingPolicy(max_iters=40),
                       n_per_bin: int = 2000, response_seed: int | None = None,
                       smoother="adjoint", slices=(0.0, 0.4),
                       gamma_binning: MomentumBinning | None = None,
                       response: FoldingMatrix | None = None) -> Pi0Result:
    """Generate, measure and unfold the pi0 spectrum from single photons.

    The response is simulated with ``response_seed`` (default ``cfg.seed + 1``)
    unless one is passed in.  The unfolded pi0 count is half the unfolded
    photon-source count, since the response is normalized per photon.
    ``l1`` is ``sum|unfolded - truth| / sum(truth)`` in counts.
    """
    gamma_binning = gamma_binning or binning
    truth, measured = generate_events(cfg, n_events, binning, gamma_binning, res)
    if response is None:
        seed = cfg.seed + 1 if response_seed is None else response_seed
        response = build_gamma_response(binning, gamma_binning, cfg.m, res, n_per_bin, seed)
    report = run_unfold(measured, response, smoother, policy)
    pi0_counts = 0.5 * report.f
    l1 = float(np.abs(pi0_counts - truth.values).sum() / max(truth.total, 1.0))
    unfolded = _density(binning.axes, pi0_counts, n_events)
    truth_d = _density(binning.axes, truth.values, n_events)
    measured_d = _density(gamma_binning.axes, measured.values, 2 * n_events)
    cuts = {float(e): (eta_slice(truth_d, e), eta_slice(unfolded, e)) for e in slices}
    trace = tuple(r.cauchy_index for r in report.trace if r.cauchy_index is not None)
    w = policy.window
    sat = float(np.median(trace[-w:])) if trace else float("nan")
    return Pi0Result(truth_d, measured_d, unfolded, cuts, trace, sat, l1, report, response,
                     truth, measured)
