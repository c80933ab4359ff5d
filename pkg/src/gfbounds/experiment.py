"""Experiment orchestration: TOML configs, built-in benchmark models,
report JSON emission and density CSVs.

A config describes one model, one quadrature scheme and what to compute;
`run_experiment` drives the full pipeline (filter moments, covariance
sandwich, derivative sums, assembled bound, Gaussian distances, optional
empirical W1 and density histogram) and writes one JSON report
atomically. Reports are byte-stable for a fixed config: every random
stream is derived from configured seeds and the timing fields live in one
sub-object that consumers can mask.
"""

from __future__ import annotations

import csv
import json
import math
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Optional

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .bounds import (
    MODES,
    assemble_bound,
    covariance_sandwich,
    derivative_moment_sums,
    joint_output_moments,
    projection_distance_bound,
)
from .expressions import VectorFunction, eval_value_batch
from .linalg import Gaussian, SpdMatrix, chol_sample
from .moments import GaussHermite, MonteCarlo, QuadratureScheme, joint_approx, predict
from .statespace import NonlinearSSM, lift_transform, lifted_input
from .wasserstein import kl_joint, matched_distances, w1_centered_upper, w2_gaussian

SCHEMA_VERSION = "1"

# state dimension cap for Gauss-Hermite experiments; integrals over the
# (prior, process noise) block need tensor grids of dimension 2n
GH_MAX_STATE_DIM = 4

BUILTIN_MODELS = {
    "ungm-f1": "x1 + (1+x1)/(2*(1+x1^4))",
    "ungm-f2": "x1 + x1/(2*(1+x1^2))",
}


class StageError(RuntimeError):
    """Failure inside one pipeline stage; `stage` names it for the CLI."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class EmpiricalSpec:
    samples: int
    seed: int


@dataclass(frozen=True)
class DensitySpec:
    variable: str  # "X" or "Y"
    bins: int
    lo: float
    hi: float
    path: str


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    n: int
    m: int
    f_exprs: tuple[str, ...]
    h_exprs: tuple[str, ...]
    prior_mean: tuple[float, ...]
    prior_cov: tuple[float, ...]  # row-major n*n
    sigma_u: tuple[float, ...]  # row-major n*n
    sigma_v: tuple[float, ...]  # row-major m*m
    scheme: QuadratureScheme
    modes: tuple[str, ...]
    empirical: Optional[EmpiricalSpec]
    report_path: str
    density: Optional[DensitySpec]

    def build_model(self) -> NonlinearSSM:
        n, m = self.n, self.m
        return NonlinearSSM(
            f=VectorFunction.parse(self.f_exprs, n),
            h=VectorFunction.parse(self.h_exprs, n),
            sigma_u=SpdMatrix(np.asarray(self.sigma_u, float).reshape(n, n)),
            sigma_v=SpdMatrix(np.asarray(self.sigma_v, float).reshape(m, m)),
            prior=Gaussian(
                np.asarray(self.prior_mean, float),
                SpdMatrix(np.asarray(self.prior_cov, float).reshape(n, n)),
            ),
        )

    def validate(self) -> None:
        if len(self.f_exprs) != self.n or len(self.h_exprs) != self.m:
            raise ValueError("expression counts must match the declared dimensions")
        model = self.build_model()
        if isinstance(self.scheme, GaussHermite) and model.n > GH_MAX_STATE_DIM:
            raise ValueError(
                f"Gauss-Hermite experiments support state dimension <= {GH_MAX_STATE_DIM}; "
                f"got n={model.n} (use a Monte Carlo scheme)"
            )
        for mode in self.modes:
            if mode not in MODES:
                raise ValueError(f"unknown bound mode {mode!r}; choose from {MODES}")
        if not self.modes:
            raise ValueError("at least one bound mode is required")
        _check_writable(self.report_path)
        if self.density is not None:
            d = self.density
            if d.variable not in ("X", "Y"):
                raise ValueError("density variable must be 'X' or 'Y'")
            if d.bins < 10:
                raise ValueError("density needs at least 10 bins")
            if not (np.isfinite(d.lo) and np.isfinite(d.hi) and d.lo < d.hi):
                raise ValueError("density range must be a finite non-empty interval")
            dim = model.n if d.variable == "X" else model.m
            if dim != 1:
                raise ValueError("density emission requires a scalar variable")
            _check_writable(d.path)
        if self.empirical is not None and self.empirical.samples < 2:
            raise ValueError("empirical comparison needs at least 2 samples")


def _check_writable(path: str) -> None:
    parent = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(parent) or not os.access(parent, os.W_OK):
        raise ValueError(f"output path is not writable: {path}")


def builtin_model(name: str) -> ExperimentConfig:
    """Config for a built-in benchmark: scalar growth-model dynamics with a
    quadratic measurement, unit-variance prior at 0.2 and 0.05 noise."""
    if name not in BUILTIN_MODELS:
        known = ", ".join(sorted(BUILTIN_MODELS))
        raise KeyError(f"unknown builtin model {name!r}; available: {known}")
    return ExperimentConfig(
        name=name,
        n=1,
        m=1,
        f_exprs=(BUILTIN_MODELS[name],),
        h_exprs=("x1^2/2",),
        prior_mean=(0.2,),
        prior_cov=(1.0,),
        sigma_u=(0.05,),
        sigma_v=(0.05,),
        scheme=MonteCarlo(count=1_000_000, seed=1),
        modes=("as_stated",),
        # 2048 keeps the exact assignment solve fast on these skewed clouds;
        # validation studies can raise it (cap 4096 for the 2-D solver)
        empirical=EmpiricalSpec(samples=2048, seed=2),
        report_path=f"{name}-report.json",
        density=None,
    )


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, str):
        return json.dumps(value)
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def config_to_toml(config: ExperimentConfig) -> str:
    """Serialize a config to the sectioned TOML format `load_config` reads;
    serialization round-trips."""
    lines = [f"name = {_toml_value(config.name)}", ""]
    lines += [
        "[model]",
        f"n = {config.n}",
        f"m = {config.m}",
        f"f = {_toml_value(list(config.f_exprs))}",
        f"h = {_toml_value(list(config.h_exprs))}",
        "",
        "[prior]",
        f"mean = {_toml_value([float(v) for v in config.prior_mean])}",
        f"cov = {_toml_value([float(v) for v in config.prior_cov])}",
        "",
        "[noise]",
        f"sigma_u = {_toml_value([float(v) for v in config.sigma_u])}",
        f"sigma_v = {_toml_value([float(v) for v in config.sigma_v])}",
        "",
        "[scheme]",
    ]
    if isinstance(config.scheme, MonteCarlo):
        lines += [
            'kind = "mc"',
            f"samples = {config.scheme.count}",
            f"seed = {config.scheme.seed}",
        ]
    else:
        lines += ['kind = "gauss-hermite"', f"order = {config.scheme.order}"]
    lines += ["", "[bounds]", f"modes = {_toml_value(list(config.modes))}"]
    if config.empirical is not None:
        lines += [
            "",
            "[empirical]",
            f"samples = {config.empirical.samples}",
            f"seed = {config.empirical.seed}",
        ]
    lines += ["", "[output]", f"report = {_toml_value(config.report_path)}"]
    if config.density is not None:
        d = config.density
        lines += [
            "",
            "[output.density]",
            f"variable = {_toml_value(d.variable)}",
            f"bins = {d.bins}",
            f"range = {_toml_value([float(d.lo), float(d.hi)])}",
            f"path = {_toml_value(d.path)}",
        ]
    return "\n".join(lines) + "\n"


def _require(table: dict, key: str, section: str):
    if key not in table:
        raise ValueError(f"config section [{section}] is missing key {key!r}")
    return table[key]


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate a TOML config document."""
    raw = tomllib.loads(text)
    model = _require(raw, "model", "")
    prior = _require(raw, "prior", "")
    noise = _require(raw, "noise", "")
    scheme_tab = _require(raw, "scheme", "")
    output = _require(raw, "output", "")

    kind = _require(scheme_tab, "kind", "scheme")
    if kind == "mc":
        scheme: QuadratureScheme = MonteCarlo(
            count=int(_require(scheme_tab, "samples", "scheme")),
            seed=int(_require(scheme_tab, "seed", "scheme")),
        )
    elif kind == "gauss-hermite":
        scheme = GaussHermite(order=int(_require(scheme_tab, "order", "scheme")))
    else:
        raise ValueError(f"unknown scheme kind {kind!r}; use 'mc' or 'gauss-hermite'")

    empirical = None
    if "empirical" in raw:
        empirical = EmpiricalSpec(
            samples=int(_require(raw["empirical"], "samples", "empirical")),
            seed=int(_require(raw["empirical"], "seed", "empirical")),
        )

    density = None
    if "density" in output:
        dens = output["density"]
        lo, hi = (float(v) for v in _require(dens, "range", "output.density"))
        density = DensitySpec(
            variable=str(_require(dens, "variable", "output.density")),
            bins=int(_require(dens, "bins", "output.density")),
            lo=lo,
            hi=hi,
            path=str(_require(dens, "path", "output.density")),
        )

    config = ExperimentConfig(
        name=str(raw.get("name", "")),
        n=int(_require(model, "n", "model")),
        m=int(_require(model, "m", "model")),
        f_exprs=tuple(str(s) for s in _require(model, "f", "model")),
        h_exprs=tuple(str(s) for s in _require(model, "h", "model")),
        prior_mean=tuple(float(v) for v in _require(prior, "mean", "prior")),
        prior_cov=tuple(float(v) for v in _require(prior, "cov", "prior")),
        sigma_u=tuple(float(v) for v in _require(noise, "sigma_u", "noise")),
        sigma_v=tuple(float(v) for v in _require(noise, "sigma_v", "noise")),
        scheme=scheme,
        modes=tuple(str(s) for s in raw.get("bounds", {}).get("modes", ["as_stated"])),
        empirical=empirical,
        report_path=str(_require(output, "report", "output")),
        density=density,
    )
    config.validate()
    return config


def load_config(path: str) -> ExperimentConfig:
    with open(path, "rb") as fh:
        text = fh.read().decode("utf-8")
    return parse_config(text)


def emit_density_csv(samples, bins: int, lo: float, hi: float, path: str, overlay=None):
    """Write a histogram density CSV (`bin_center,density,gauss_density`).

    The density is normalized so that sum(density * width) = 1 over the
    requested range. `overlay` is the Gaussian whose pdf fills the third
    column; by default it is moment-matched to the samples."""
    samples = np.asarray(samples, dtype=float).reshape(-1)
    if bins < 10:
        raise ValueError("density needs at least 10 bins")
    if not (np.isfinite(lo) and np.isfinite(hi) and lo < hi):
        raise ValueError("density range must be a finite non-empty interval")
    counts, edges = np.histogram(samples, bins=bins, range=(lo, hi))
    total = counts.sum()
    if total == 0:
        raise ValueError("no samples fall inside the requested range")
    width = edges[1] - edges[0]
    density = counts / (total * width)
    centers = 0.5 * (edges[:-1] + edges[1:])
    if overlay is None:
        mean = float(samples.mean())
        var = float(samples.var(ddof=1))
    else:
        mean = float(overlay.mean[0])
        var = float(overlay.cov.mat[0, 0])
    if var <= 0.0:
        raise ValueError("overlay Gaussian is degenerate (zero variance)")
    gauss = np.exp(-0.5 * (centers - mean) ** 2 / var) / math.sqrt(2.0 * math.pi * var)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_center", "density", "gauss_density"])
        for c, d, g in zip(centers, density, gauss):
            writer.writerow([repr(float(c)), repr(float(d)), repr(float(g))])


def _matrix(a: np.ndarray) -> list:
    return [[float(v) for v in row] for row in np.atleast_2d(a)]


def _vector(a: np.ndarray) -> list:
    return [float(v) for v in np.atleast_1d(a)]


def _config_echo(config: ExperimentConfig) -> dict:
    scheme: dict = (
        {"kind": "mc", "samples": config.scheme.count, "seed": config.scheme.seed}
        if isinstance(config.scheme, MonteCarlo)
        else {"kind": "gauss-hermite", "order": config.scheme.order}
    )
    return {
        "name": config.name,
        "model": {
            "n": config.n,
            "m": config.m,
            "f": list(config.f_exprs),
            "h": list(config.h_exprs),
        },
        "prior": {"mean": list(config.prior_mean), "cov": list(config.prior_cov)},
        "noise": {"sigma_u": list(config.sigma_u), "sigma_v": list(config.sigma_v)},
        "scheme": scheme,
        "modes": list(config.modes),
        "empirical": (
            None
            if config.empirical is None
            else {"samples": config.empirical.samples, "seed": config.empirical.seed}
        ),
        "output": {
            "report": config.report_path,
            "density": (
                None
                if config.density is None
                else {
                    "variable": config.density.variable,
                    "bins": config.density.bins,
                    "range": [config.density.lo, config.density.hi],
                    "path": config.density.path,
                }
            ),
        },
    }


@contextmanager
def _stage(name: str, timings: dict):
    start = time.perf_counter()
    try:
        yield
    except StageError:
        raise
    except Exception as exc:
        raise StageError(name, exc) from exc
    timings[name] = time.perf_counter() - start


def _density_seed(config: ExperimentConfig) -> int:
    base = config.scheme.seed if isinstance(config.scheme, MonteCarlo) else 0
    return (base + 7919) % 2**64


def run_experiment(config: ExperimentConfig) -> dict:
    """Run the full pipeline for one config and write its JSON report
    atomically. Returns the report dictionary."""
    timings: dict = {}
    report: dict = {"schema_version": SCHEMA_VERSION, "config": _config_echo(config)}

    with _stage("config", timings):
        config.validate()
        model = config.build_model()
        scheme = config.scheme

    with _stage("predict", timings):
        x_tilde = predict(model, scheme)

    with _stage("joint", timings):
        joint = joint_approx(model, x_tilde, scheme)
    report["filter"] = {
        "mean_x": _vector(joint.mean_x),
        "cov_x": _matrix(joint.p_x.mat),
        "mean_y": _vector(joint.mean_y),
        "cov_y": _matrix(joint.p_y.mat),
        "cross_xy": _matrix(joint.c_xy),
    }

    with _stage("sandwich", timings):
        sandwich = covariance_sandwich(model, scheme)

    with _stage("derivative-sums", timings):
        sums = derivative_moment_sums(model, scheme)

    with _stage("bound", timings):
        bound = assemble_bound(model, scheme, config.modes[0], sandwich, sums, x_tilde, joint)
    bound_common = {
        "poincare_term": bound.poincare_term,
        "gauss_gap_term": bound.gauss_gap_term,
        "mean_gap": bound.mean_gap,
        "derivative_sums": {
            "grad_dynamics": sums.grad_dynamics,
            "hess_dynamics": sums.hess_dynamics,
            "grad_composite": sums.grad_composite,
            "hess_composite": sums.hess_composite,
        },
        "sandwich": {
            "prior_term": _matrix(sandwich.prior_term),
            "process_term": _matrix(sandwich.process_term),
            "product_term": _matrix(sandwich.product_term),
            "noise_term": _matrix(sandwich.noise_term),
            "lower": _matrix(sandwich.lower),
            "upper": _matrix(sandwich.upper),
        },
    }
    report["bounds"] = {
        mode: dict(
            bound_common,
            total=(bound.total_as_stated if mode == "as_stated" else bound.total_sqrt_variant),
        )
        for mode in config.modes
    }

    with _stage("projection-moments", timings):
        mean_z, cov_z = joint_output_moments(model, scheme)
        cov_z_spd = SpdMatrix(cov_z)
        projection = Gaussian(mean_z, cov_z_spd)
        filter_joint = Gaussian(
            np.concatenate([joint.mean_x, joint.mean_y]), SpdMatrix(joint.block_cov())
        )
        diag_bound = projection_distance_bound(model, cov_z_spd, scheme, sums=sums)
    report["projection"] = {
        "mean": _vector(mean_z),
        "cov": _matrix(cov_z),
        "distance_bound_with_cov_estimate": diag_bound,
    }

    with _stage("distances", timings):
        w2 = w2_gaussian(projection, filter_joint)
        centered = None
        if (
            np.linalg.norm(projection.mean) <= 1e-12
            and np.linalg.norm(filter_joint.mean) <= 1e-12
        ):
            centered = w1_centered_upper(projection, filter_joint)
        kl = kl_joint(joint.p_x, joint.p_y, joint.c_xy, model.sigma_v)
    report["distances"] = {
        "w2_exact": w2,
        "w1_upper": w2,
        "w1_centered": centered,
        "kl": kl,
    }

    if config.empirical is not None:
        with _stage("empirical", timings):
            count = config.empirical.samples
            seed = config.empirical.seed
            w_samples = chol_sample(lifted_input(model), count, seed)
            z_samples = eval_value_batch(lift_transform(model), w_samples)
            zt_samples = chol_sample(filter_joint, count, (seed + 1) % 2**64)
            dists = matched_distances(z_samples, zt_samples)
            estimate = float(dists.mean())
            stderr = float(dists.std(ddof=1) / math.sqrt(len(dists)))
        report["empirical_w1"] = {
            "estimate": estimate,
            "std_error": stderr,
            "samples": count,
            "seed": seed,
        }
    else:
        report["empirical_w1"] = None

    if config.density is not None:
        with _stage("density", timings):
            dens = config.density
            count = (
                min(config.scheme.count, 1_000_000)
                if isinstance(config.scheme, MonteCarlo)
                else 100_000
            )
            w_samples = chol_sample(lifted_input(model), count, _density_seed(config))
            z_samples = eval_value_batch(lift_transform(model), w_samples)
            if dens.variable == "X":
                column = z_samples[:, 0]
                overlay = x_tilde
            else:
                column = z_samples[:, model.n]
                overlay = Gaussian(joint.mean_y, joint.p_y)
            emit_density_csv(column, dens.bins, dens.lo, dens.hi, dens.path, overlay=overlay)
        report["density"] = {"path": dens.path, "variable": dens.variable, "samples": count}
    else:
        report["density"] = None

    report["timings"] = timings
    try:
        payload = json.dumps(report, indent=2, sort_keys=True) + "\n"
        tmp_path = config.report_path + ".tmp"
        with open(tmp_path, "w") as fh:
            fh.write(payload)
        os.replace(tmp_path, config.report_path)
    except Exception as exc:
        raise StageError("write-report", exc) from exc
    return report
