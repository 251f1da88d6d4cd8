"""When does the plain iteration converge, and why the double kernel always does.

Run: python3 demos/fourier_diagnostics.py
"""

import numpy as np

from seriesunfold import (
    Axis,
    DivisionBlowupError,
    GridHistogram,
    KernelPdf,
    LowPass,
    apply,
    diagnose_double_kernel,
    diagnose_kernel,
    matrix_from_kernel,
    naive_deconvolve,
)

w = 0.1
for name, k in [("gauss(1)", KernelPdf.gaussian(1.0, w)),
                ("triangle(2)", KernelPdf.triangle(2.0, w)),
                ("uniform(1)", KernelPdf.uniform(1.0, w))]:
    d, dd = diagnose_kernel(k), diagnose_double_kernel(k)
    print(f"{name:12s} |1-F| max {d.max_excursion:.3f} -> holds={d.condition_holds}, "
          f"zeros on grid {len(d.zero_set_bins)};  double kernel holds={dd.condition_holds}")

# %% naive division treats the grid as periodic.  The data here were folded with a
# truncated matrix, so even the noiseless case carries an edge mismatch, and the
# division amplifies it by 1/|F| (e^(omega^2/2) for this kernel).  Only a hard
# low-pass keeps the result bounded, at the price of ringing.
ax = Axis(-15, 15, 300)
e = ax.edges
truth = (np.arctan(e[1:]) - np.arctan(e[:-1])) / np.pi
k = KernelPdf.gaussian(1.0, ax.width)
lam = 1e6 * (matrix_from_kernel(k, ax).entries @ truth)
rng = np.random.default_rng(0)
for label, g in [("noiseless", GridHistogram((ax,), lam, "counts")),
                 ("Poisson", GridHistogram((ax,), rng.poisson(lam), "counts"))]:
    est = naive_deconvolve(g, k).values / 1e6
    cuts = {c: naive_deconvolve(g, k, LowPass(c)).values / 1e6 for c in (4.0, 6.0, 8.0, 12.0)}
    print(f"\n{label}: naive L1 {np.abs(est * ax.width - truth).sum():.3g}")
    for c, v in cuts.items():
        print(f"  low-pass |omega|<={c:g}: L1 {np.abs(v * ax.width - truth).sum():.3g}")

try:
    naive_deconvolve(apply(matrix_from_kernel(KernelPdf.triangle(2.0, ax.width), ax),
                           GridHistogram((ax,), 1e6 * truth, "counts")), KernelPdf.triangle(2.0, ax.width))
except DivisionBlowupError as exc:
    print("\ntriangle kernel:", exc)
