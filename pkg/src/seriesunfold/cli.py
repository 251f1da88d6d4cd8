"""Command-line front end.

Every command reads an optional INI file whose section is named after the
command, applies command-line overrides, writes the effective configuration
to ``<out>/config.ini`` and then its artifacts.  Running again with
``--config <out>/config.ini`` reproduces every file bitwise.

Exit codes: 0 success, 2 configuration error, 3 I/O or file-format error,
4 divergence or division blow-up, 5 degenerate input.
"""

from __future__ import annotations

import argparse
import configparser
import json
import re
import sys
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .engine import Smoother, StoppingPolicy, run_unfold, verify_condition
from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DivergenceError,
    DivisionBlowupError,
    FileFormatError,
    UnfoldError,
)
from .folding import (
    FoldingMatrix,
    GaussianCpdf,
    KernelPdf,
    load_matrix,
    matrix_from_cpdf,
    matrix_from_kernel,
)
from .histogram import Axis, GridHistogram, _fmt, load_histogram
from .pi0 import DecayConfig, MomentumBinning, ResolutionModel, run_pi0_experiment
from .spectral import diagnose_double_kernel, diagnose_kernel, double_kernel, kernel_transform

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_DIVERGENCE, EXIT_DEGENERATE = 0, 2, 3, 4, 5

POLICY_DEFAULTS = {
    "noise_threshold": "0.5",
    "max_iters": "100",
    "cauchy_limit": "1.0",
    "error_mode": "exact",
}

PI0_DEFAULTS = {
    "seed": "0",
    "n_events": "100000",
    "m": "0.1349766",
    "sigma_y": "0.5",
    "t_slope": "0.5",
    "eta": "-2, 2, 40",
    "pt": "0, 2, 40",
    "n_per_bin": "2000",
    "response_seed": "1",
    "energy_resolution": "0",
    "angle_resolution": "0",
    "smoother": "adjoint",
    **POLICY_DEFAULTS,
    "max_iters": "40",
    "slices": "0.0, 0.4",
}

DEFAULTS = {
    "deconvolve": {
        "kernel": "gauss(1)",
        "truth": "cauchy(1)",
        "grid": "-15, 15, 300",
        "counts": "1000000",
        "noiseless": "false",
        "seed": "0",
        "smoother": "parity",
        **POLICY_DEFAULTS,
        "max_iters": "500",
    },
    "unfold": {
        "measured": "",
        "response": "",
        "smoother": "identity",
        **POLICY_DEFAULTS,
    },
    "diagnose": {
        "kernel": "gauss(1)",
        "width": "0.5",
        "zero_tol": "1e-9",
        "grid": "",
    },
    "cauchy-test": dict(PI0_DEFAULTS),
    "simulate-pi0": dict(PI0_DEFAULTS),
    "verify-condition": {
        "response": "",
        "kernel": "gauss(1)",
        "grid": "-5, 5, 50",
        "smoother": "identity",
        "n_max": "50",
    },
}

# command-line flag -> config key
OVERRIDES = {
    "seed": "seed",
    "max_iters": "max_iters",
    "noise_threshold": "noise_threshold",
    "error_mode": "error_mode",
    "smoother": "smoother",
}


# -- parsing helpers ----------------------------------------------------------------


def _float(cfg, key) -> float:
    try:
        return float(cfg[key])
    except ValueError as exc:
        raise ConfigurationError(f"{key} must be a number, got {cfg[key]!r}") from exc


def _int(cfg, key) -> int:
    try:
        return int(cfg[key])
    except ValueError as exc:
        raise ConfigurationError(f"{key} must be an integer, got {cfg[key]!r}") from exc


def _bool(cfg, key) -> bool:
    v = cfg[key].strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ConfigurationError(f"{key} must be a boolean, got {cfg[key]!r}")


def _floats(text: str) -> list[float]:
    try:
        return [float(t) for t in re.split(r"[,\s]+", text.strip()) if t]
    except ValueError as exc:
        raise ConfigurationError(f"expected numbers, got {text!r}") from exc


def parse_axis(text: str) -> Axis:
    """``lo, hi, nbins``."""
    vals = _floats(text)
    if len(vals) != 3 or vals[2] != int(vals[2]):
        raise ConfigurationError(f"axis must be 'lo, hi, nbins', got {text!r}")
    return Axis(vals[0], vals[1], int(vals[2]))


_SPEC = re.compile(r"^\s*([a-z_]+)\s*(?:\(\s*([^)]*?)\s*\)|:\s*(.+?))?\s*$")


def parse_spec(text: str) -> tuple[str, str | None]:
    """Split ``name(arg)``, ``name:arg`` or ``name`` into ``(name, arg)``."""
    if text.strip().startswith("file:"):
        return "file", text.strip()[5:]
    m = _SPEC.match(text)
    if not m:
        raise ConfigurationError(f"cannot parse {text!r}")
    return m.group(1), m.group(2) if m.group(2) is not None else m.group(3)


def parse_kernel(text: str, width: float) -> KernelPdf:
    """``gauss(S)``, ``triangle(W)``, ``uniform(A)`` or ``file:PATH``."""
    name, arg = parse_spec(text)
    if name == "file":
        h = load_histogram(arg)
        if h.ndim != 1 or abs(h.axes[0].width - width) > 1e-9 * width:
            raise ConfigurationError(f"kernel file {arg} must be 1-D with bin width {width}")
        return KernelPdf.from_values(h.values, width)
    if arg is None:
        raise ConfigurationError(f"kernel {name!r} needs a parameter")
    p = _floats(arg)
    if len(p) != 1:
        raise ConfigurationError(f"kernel {name!r} takes one parameter")
    makers = {"gauss": KernelPdf.gaussian, "gaussian": KernelPdf.gaussian,
              "triangle": KernelPdf.triangle, "uniform": KernelPdf.uniform}
    if name not in makers:
        raise ConfigurationError(f"unknown kernel {name!r}")
    return makers[name](p[0], width)


def truth_density(text: str, axis: Axis) -> np.ndarray:
    """Bin-averaged truth density: ``cauchy(G)`` or ``file:PATH``."""
    name, arg = parse_spec(text)
    e = axis.edges
    if name == "cauchy":
        g = _floats(arg or "1")[0]
        if not g > 0:
            raise ConfigurationError("Cauchy width must be positive")
        return (np.arctan(e[1:] / g) - np.arctan(e[:-1] / g)) / (np.pi * axis.width)
    if name in ("gauss", "gaussian"):
        s = _floats(arg or "1")[0]
        return (ndtr(e[1:] / s) - ndtr(e[:-1] / s)) / axis.width
    if name == "file":
        h = load_histogram(arg)
        if h.ndim != 1 or h.axes[0] != axis:
            raise ConfigurationError(f"truth file {arg} does not match the grid {axis}")
        return np.array(h.values, dtype=float)
    raise ConfigurationError(f"unknown truth {name!r}")


def policy_from(cfg) -> StoppingPolicy:
    return StoppingPolicy(
        noise_threshold=_float(cfg, "noise_threshold"),
        max_iters=_int(cfg, "max_iters"),
        cauchy_limit=_float(cfg, "cauchy_limit"),
        error_mode=cfg["error_mode"],
    )


# -- output helpers --------------------------------------------------------------------


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1) + "\n")


def _write_columns(path: Path, header: list[str], cols) -> None:
    lines = ["# " + " ".join(header)]
    for row in zip(*cols):
        lines.append(",".join(str(v) if isinstance(v, (int, np.integer)) else _fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


# -- commands ---------------------------------------------------------------------------


def cmd_deconvolve(cfg, out: Path) -> int:
    axis = parse_axis(cfg["grid"])
    kernel = parse_kernel(cfg["kernel"], axis.width)
    truth = truth_density(cfg["truth"], axis)
    counts = _float(cfg, "counts")
    if not counts > 0:
        raise DegenerateInputError("counts must be positive")
    A = matrix_from_kernel(kernel, axis)
    lam = counts * (A.entries @ truth) * axis.width
    if _bool(cfg, "noiseless"):
        H = GridHistogram((axis,), lam, "density")
    else:
        rng = np.random.default_rng(_int(cfg, "seed"))
        H = GridHistogram((axis,), rng.poisson(lam), "counts")
    report = run_unfold(H, A, Smoother.parse(cfg["smoother"]), policy_from(cfg), kernel=kernel)
    recovered = report.f / (counts * axis.width)
    l1 = float(np.abs(recovered - truth).sum() * axis.width)

    GridHistogram((axis,), truth, "density").to_csv(out / "truth.csv")
    H.to_csv(out / "measured.csv")
    GridHistogram((axis,), recovered, "density").to_csv(out / "recovered.csv")
    report.to_json(out / "report.json", "recovered.csv")
    _write_json(out / "summary.json", {
        "l1_distance": l1,
        "stop_reason": report.stop_reason,
        "selected_iteration": report.n,
    })
    print(f"stop={report.stop_reason} n={report.n} l1={l1:.6g}")
    return EXIT_OK


def _load_response(text: str, H: GridHistogram) -> FoldingMatrix:
    name, arg = parse_spec(text) if text.startswith(("cpdf", "identity")) else ("path", text)
    if name == "identity":
        return FoldingMatrix.identity(H.axes)
    if name == "cpdf":
        kname, karg = parse_spec(arg)
        if kname not in ("gauss", "gaussian") or karg is None:
            raise ConfigurationError(f"unsupported cpdf {arg!r}")
        return matrix_from_cpdf(GaussianCpdf(_floats(karg)[0]), H.axes, H.axes)
    if not text:
        raise ConfigurationError("unfold needs a response")
    return load_matrix(text)


def cmd_unfold(cfg, out: Path) -> int:
    if not cfg["measured"]:
        raise ConfigurationError("unfold needs a measured histogram")
    H = load_histogram(cfg["measured"])
    A = _load_response(cfg["response"].strip(), H)
    report = run_unfold(H, A, Smoother.parse(cfg["smoother"]), policy_from(cfg))
    report.estimate.to_csv(out / "unfolded.csv")
    report.to_json(out / "report.json", "unfolded.csv")
    print(f"stop={report.stop_reason} n={report.n}")
    return EXIT_OK


def cmd_diagnose(cfg, out: Path) -> int:
    width = _float(cfg, "width")
    kernel = parse_kernel(cfg["kernel"], width)
    tol = _float(cfg, "zero_tol")
    axis = parse_axis(cfg["grid"]) if cfg["grid"].strip() else None
    single = diagnose_kernel(kernel, tol, axis)
    double = diagnose_double_kernel(kernel, tol, axis)
    doc = {**single.to_dict(), "double_kernel": double.to_dict()}
    _write_json(out / "diagnosis.json", doc)
    omega = np.array(single.omega)
    order = np.argsort(omega, kind="stable")
    F = kernel_transform(kernel, omega[order])
    D = kernel_transform(double_kernel(kernel), omega[order])
    _write_columns(out / "spectrum.csv", ["omega", "re", "im", "double_re", "double_im"],
                   [omega[order], F.real, F.imag, D.real, D.imag])
    print(json.dumps(doc, indent=1))
    return EXIT_OK


def _pi0_run(cfg):
    decay = DecayConfig(_float(cfg, "m"), _float(cfg, "sigma_y"), _float(cfg, "t_slope"),
                        _int(cfg, "seed"))
    binning = MomentumBinning(parse_axis(cfg["eta"]), parse_axis(cfg["pt"]))
    res = ResolutionModel(_float(cfg, "energy_resolution"), _float(cfg, "angle_resolution"))
    return run_pi0_experiment(
        decay, _int(cfg, "n_events"), binning, res, policy_from(cfg),
        n_per_bin=_int(cfg, "n_per_bin"), response_seed=_int(cfg, "response_seed"),
        smoother=Smoother.parse(cfg["smoother"]), slices=tuple(_floats(cfg["slices"])),
    )


def _write_trace(path: Path, trace) -> None:
    _write_columns(path, ["n", "cauchy_index"], [list(range(1, len(trace) + 1)), trace])


def cmd_cauchy_test(cfg, out: Path) -> int:
    r = _pi0_run(cfg)
    _write_trace(out / "cauchy_trace.csv", r.cauchy_trace)
    doc = {"saturation": r.cauchy_saturation, "trace": list(r.cauchy_trace),
           "stop_reason": r.report.stop_reason}
    _write_json(out / "cauchy.json", doc)
    print(f"saturation={r.cauchy_saturation:.6g} iterations={len(r.cauchy_trace)}")
    return EXIT_OK


def cmd_simulate_pi0(cfg, out: Path) -> int:
    r = _pi0_run(cfg)
    r.truth.to_csv(out / "truth.csv")
    r.measured.to_csv(out / "measured.csv")
    r.unfolded.to_csv(out / "unfolded.csv")
    for eta, (t, u) in r.slices.items():
        t.to_csv(out / f"slice_eta_{eta:g}_truth.csv")
        u.to_csv(out / f"slice_eta_{eta:g}_unfolded.csv")
    _write_trace(out / "cauchy_trace.csv", r.cauchy_trace)
    r.report.to_json(out / "report.json", "unfolded.csv")
    _write_json(out / "summary.json", {
        "l1_distance": r.l1,
        "cauchy_saturation": r.cauchy_saturation,
        "stop_reason": r.report.stop_reason,
        "selected_iteration": r.report.n,
    })
    print(f"stop={r.report.stop_reason} n={r.report.n} l1={r.l1:.6g} "
          f"saturation={r.cauchy_saturation:.6g}")
    return EXIT_OK


def cmd_verify_condition(cfg, out: Path) -> int:
    kernel = None
    if cfg["response"].strip():
        A = load_matrix(cfg["response"].strip())
    else:
        axis = parse_axis(cfg["grid"])
        kernel = parse_kernel(cfg["kernel"], axis.width)
        A = matrix_from_kernel(kernel, axis)
    sweep = verify_condition(A, Smoother.parse(cfg["smoother"]), _int(cfg, "n_max"), kernel)
    _write_json(out / "condition.json", sweep.to_dict())
    print(f"max_sup={sweep.max_sup:.6g} appears_bounded={sweep.appears_bounded}")
    return EXIT_OK


COMMANDS = {
    "deconvolve": cmd_deconvolve,
    "unfold": cmd_unfold,
    "diagnose": cmd_diagnose,
    "cauchy-test": cmd_cauchy_test,
    "simulate-pi0": cmd_simulate_pi0,
    "verify-condition": cmd_verify_condition,
}


# -- config assembly ----------------------------------------------------------------------


def effective_config(command: str, path: str | None, overrides: dict) -> dict:
    """Defaults, then the file's section for ``command``, then flags."""
    cfg = dict(DEFAULTS[command])
    if path:
        parser = configparser.ConfigParser(interpolation=None)
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except configparser.Error as exc:
            raise ConfigurationError(f"cannot parse {path}: {exc}") from exc
        for section in parser.sections():
            if section not in DEFAULTS:
                raise ConfigurationError(f"unknown section [{section}] in {path}")
        if parser.has_section(command):
            for key, value in parser.items(command):
                if key not in cfg:
                    raise ConfigurationError(f"unknown key {key!r} in [{command}]")
                cfg[key] = value
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in cfg:
            raise ConfigurationError(f"--{key.replace('_', '-')} does not apply to {command}")
        cfg[key] = str(value)
    return cfg


def write_config(command: str, cfg: dict, path: Path) -> None:
    parser = configparser.ConfigParser(interpolation=None)
    parser[command] = cfg
    with open(path, "w") as fh:
        parser.write(fh)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="seriesunfold",
                                description="Series-expansion deconvolution and unfolding.")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="INI file with a [%s] section" % name)
        s.add_argument("--out", default="out", help="output directory (default: out)")
        s.add_argument("--seed", type=int)
        s.add_argument("--max-iters", type=int)
        s.add_argument("--noise-threshold", type=float)
        s.add_argument("--error-mode", choices=("exact", "gaussian"))
        s.add_argument("--smoother", help="identity, parity, adjoint or gaussian:SIGMA")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {key: getattr(args, attr) for attr, key in OVERRIDES.items()}
    try:
        cfg = effective_config(args.command, args.config, overrides)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        write_config(args.command, cfg, out / "config.ini")
        return COMMANDS[args.command](cfg, out)
    except DegenerateInputError as exc:
        code, msg = EXIT_DEGENERATE, exc
    except (DivergenceError, DivisionBlowupError) as exc:
        code, msg = EXIT_DIVERGENCE, exc
    except (FileFormatError, OSError) as exc:
        code, msg = EXIT_IO, exc
    except (UnfoldError, ValueError) as exc:
        code, msg = EXIT_CONFIG, exc
    print(f"error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
