"""Grid histograms, response matrices and the ways to build them.

Run: python3 demos/histograms_and_folding.py
"""

import numpy as np

from seriesunfold import (
    Axis,
    FoldingMatrix,
    GaussianCpdf,
    KernelPdf,
    apply,
    from_samples,
    matrix_from_cpdf,
    matrix_from_kernel,
    mc_estimate_matrix,
    poisson_covariance,
)

# %% a histogram from samples
rng = np.random.default_rng(0)
ax = Axis(-4, 4, 16)
h = from_samples(rng.standard_cauchy(5000), ax)
print("counts:", h.values.astype(int))
print("in range:", h.total, "of 5000; overflow", h.overflow)
print("relative error of the peak bin:", np.sqrt(poisson_covariance(h)[8, 8]) / h.values[8])

# %% a Gaussian kernel gives a Toeplitz matrix; truncation shows up as leakage
k = KernelPdf.gaussian(0.5, ax.width)
A = matrix_from_kernel(k, ax)
print("\nkernel taps:", np.round(k.values * k.width, 4))
print("leakage at the edges vs the middle:", A.leakage[[0, 8, 15]].round(4))

# %% the same response from a conditional density, and by Monte Carlo
B = matrix_from_cpdf(GaussianCpdf(0.5), (ax,), (ax,))
print("\nkernel vs cpdf matrix, max difference:", np.abs(A.entries - B.entries).max())


def smear(x, rng):
    return x + rng.normal(0, 0.5, len(x))


C = mc_estimate_matrix(smear, (ax,), (ax,), n_per_bin=20000, seed=1)
print("kernel vs Monte Carlo matrix, max difference:", np.abs(A.entries - C.entries).max())

# %% folding a histogram
g = apply(A, h)
print("\nfolded total", round(g.total, 1), "= input total minus leaked", round(h.total - A.leakage @ h.values, 1))
print("identity leaves it alone:", np.array_equal(apply(FoldingMatrix.identity((ax,)), h).values, h.values))
