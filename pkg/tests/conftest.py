import math
import re

import numpy as np
import pytest
from scipy.special import ndtr

from seriesunfold.folding import KernelPdf

ACCEPTANCE_LINES = []


def cauchy_bins(axis, gamma=1.0):
    """Bin-averaged Cauchy density, from the arctangent CDF."""
    e = axis.edges
    return (np.arctan(e[1:] / gamma) - np.arctan(e[:-1] / gamma)) / (math.pi * axis.width)


def normal_cdf(x, mu=0.0, sigma=1.0):
    return 0.5 * (1.0 + math.erf((x - mu) / (sigma * math.sqrt(2.0))))


def random_stochastic(rng, m, alpha=None):
    """``alpha I + (1 - alpha) S`` with ``S`` a random column-stochastic matrix."""
    s = rng.random((m, m)) ** 3
    s /= s.sum(axis=0)
    if alpha is None:
        return s
    return alpha * np.eye(m) + (1 - alpha) * s


def mixture_kernel(rng, width=0.1):
    """Random mixture of shifted uniforms, triangles and Gaussians."""
    comps = []
    for _ in range(rng.integers(1, 4)):
        kind = rng.integers(3)
        shift = rng.uniform(-1.5, 1.5)
        scale = rng.uniform(0.2, 1.0)
        comps.append((kind, shift, scale, rng.uniform(0.2, 1.0)))
    total = sum(c[3] for c in comps)
    def cdf(u):
        out = 0.0
        for kind, s, a, wgt in comps:
            z = u - s
            if kind == 0:
                c = np.clip((z + a) / (2 * a), 0, 1)
            elif kind == 1:
                zc = np.clip(z, -a, a)
                c = np.where(zc < 0, (a + zc) ** 2 / (2 * a * a), 1 - (a - zc) ** 2 / (2 * a * a))
            else:
                c = ndtr(z / a)
            out = out + wgt / total * c
        return out

    return KernelPdf.from_cdf(cdf, 6.0, width)


@pytest.fixture
def record_acceptance():
    def record(criterion, passed, detail):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)

    return record


def _criterion_key(line):
    num, tag = re.match(r"criterion (\d+)(\w*)", line).groups()
    return int(num), tag


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=_criterion_key):
            terminalreporter.write_line(line)
