"""Problem data model, ingestion, validation, and group-coupling diagnostics.

The scattering matrix convention throughout is sigma_s[g][g'] =
cross section for scattering from group g' into group g (row = destination).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

C_TOLERANCE = 1e-4
C_UPPER_SLACK = 1e-12


class ProblemError(ValueError):
    """Raised for unparsable, inconsistent, or unphysical problem input."""


@dataclass(frozen=True)
class ProblemSpec:
    """Fixed-source multigroup slab problem.

    Immutable after construction; safe to share across concurrent group
    solves.
    """

    G: int
    sigma_t: np.ndarray        # (G,)   total cross section, > 0
    sigma_s: np.ndarray        # (G,G)  [g][g'] = sigma_{s, g' -> g}, >= 0
    Q: np.ndarray              # (G,)   external source density, >= 0
    width: float
    n_cells: int
    n_half: int
    bc_left: str = "vacuum"
    bc_right: str = "vacuum"
    name: str = ""

    def scattering_ratio(self) -> np.ndarray:
        """c_g = (total scattering out of g) / sigma_t,g (column sums)."""
        return self.sigma_s.sum(axis=0) / self.sigma_t

    def sigma_a(self) -> np.ndarray:
        """Absorption sigma_a,g = sigma_t,g - sum_g'' sigma_{s, g -> g''}."""
        return self.sigma_t - self.sigma_s.sum(axis=0)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def _check_spec(G, sigma_t, sigma_s, Q, width, n_cells, n_half, bc_left,
                bc_right) -> None:
    if G < 1:
        raise ProblemError("group count must be >= 1")
    if sigma_t.shape != (G,):
        raise ProblemError(f"sigma_t must have {G} entries, got {sigma_t.shape}")
    if sigma_s.shape != (G, G):
        raise ProblemError(
            f"sigma_s must be {G}x{G}, got {sigma_s.shape}")
    if Q.shape != (G,):
        raise ProblemError(f"source must have {G} entries, got {Q.shape}")
    if np.any(sigma_t <= 0):
        raise ProblemError("sigma_t entries must be positive")
    if np.any(sigma_s < 0):
        raise ProblemError("negative scattering cross section")
    if np.any(Q < 0):
        raise ProblemError("negative external source")
    if width <= 0:
        raise ProblemError("slab width must be positive")
    if n_cells < 1:
        raise ProblemError("cell count must be >= 1")
    if n_half < 1:
        raise ProblemError("quad_half_order must be >= 1")
    for side, bc in (("left", bc_left), ("right", bc_right)):
        if bc != "vacuum":
            raise ProblemError(
                f"unsupported {side} boundary condition {bc!r} (vacuum only)")
    c = sigma_s.sum(axis=0) / sigma_t
    if np.any(c > 1.0 + C_UPPER_SLACK):
        g = int(np.argmax(c))
        raise ProblemError(
            f"scattering ratio c_{g + 1} = {c[g]:.8f} exceeds 1 "
            "(supercritical medium)")


def make_problem(G, sigma_t, sigma_s, Q, width, n_cells, n_half,
                 bc_left="vacuum", bc_right="vacuum", name="") -> ProblemSpec:
    sigma_t = np.asarray(sigma_t, dtype=float)
    sigma_s = np.asarray(sigma_s, dtype=float)
    Q = np.asarray(Q, dtype=float)
    _check_spec(int(G), sigma_t, sigma_s, Q, float(width), int(n_cells),
                int(n_half), bc_left, bc_right)
    return ProblemSpec(G=int(G), sigma_t=_freeze(sigma_t),
                       sigma_s=_freeze(sigma_s), Q=_freeze(Q),
                       width=float(width), n_cells=int(n_cells),
                       n_half=int(n_half), bc_left=bc_left,
                       bc_right=bc_right, name=name)


_CONFIG_KEYS = ("groups", "sigma_t", "sigma_s", "source", "width", "cells",
                "quad_half_order")


def problem_from_dict(doc: dict, name: str = "") -> ProblemSpec:
    missing = [k for k in _CONFIG_KEYS if k not in doc]
    if missing:
        raise ProblemError(f"missing config keys: {', '.join(missing)}")
    try:
        return make_problem(
            G=doc["groups"],
            sigma_t=doc["sigma_t"],
            sigma_s=doc["sigma_s"],
            Q=doc["source"],
            width=doc["width"],
            n_cells=doc["cells"],
            n_half=doc["quad_half_order"],
            bc_left=doc.get("bc_left", "vacuum"),
            bc_right=doc.get("bc_right", "vacuum"),
            name=name,
        )
    except (TypeError, ValueError) as err:
        if isinstance(err, ProblemError):
            raise
        raise ProblemError(f"malformed config value: {err}") from err


def load_problem(source: str | Path) -> ProblemSpec:
    """Load a problem from a JSON config file (keys documented in README)."""
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as err:
        raise ProblemError(f"cannot read config {path}: {err}") from err
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise ProblemError(f"config parse failure: {err}") from err
    if not isinstance(doc, dict):
        raise ProblemError("config must be a JSON object")
    return problem_from_dict(doc, name=path.stem)


# ---------------------------------------------------------------------------
# Built-in problems.  Compiled-in constants so the test suite is hermetic.
#
# test1: 10-group slab, width 32, 128 cells, double S8, Q_g = 1, vacuum.
# Row 6 of the scattering matrix is ingested shifted one column right
# relative to the printed source data; with the shift every column sum
# matches sigma_t,g * c_g to < 1e-4 and the published connection-strength
# entries are reproduced (validate_scattering enforces this).
# ---------------------------------------------------------------------------

_TEST1_SIGMA_T = [2.49756, 2.01650, 1.51992, 1.67388, 2.36661,
                  1.50008, 2.37543, 2.36241, 2.04640, 1.59740]

_TEST1_C = [0.979581, 0.944816, 0.952295, 0.926035, 0.978471,
            0.9, 0.987210, 0.9999, 0.904252, 0.966192]

_TEST1_SIGMA_S = [
    [0.835282, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0.401686, 0.566521, 0, 0, 0, 0, 0, 0, 0, 0],
    [0.404298, 0.569454, 0.420634, 0, 0, 0, 0, 0, 0, 0],
    [0.498922, 0.264139, 0.179242, 0.0828011, 0, 0, 0, 0, 0, 0],
    [0.306376, 0.0657747, 0.148397, 0.307318, 1.30088, 0, 0, 0, 0, 0],
    [0, 0.439338, 0.362807, 0.564376, 0.456018, 0.0715262, 0, 0, 0, 0],
    [0, 0, 0.336331, 0.122044, 0.259295, 0.623241, 0.812409, 1.28728,
     0.278371, 0.301517],
    [0, 0, 0, 0.473528, 0.0566290, 0.128925, 0.0676741, 0.123057,
     0.518149, 0.457140],
    [0, 0, 0, 0, 0.242843, 0.180473, 0.622078, 0.485474, 0.483321,
     0.386770],
    [0, 0, 0, 0, 0, 0.345904, 0.842890, 0.466367, 0.570623, 0.397965],
]

# test2: 7-group slab (moderator data), same geometry and source as test1.
_TEST2_SIGMA_T = [0.159206, 0.412970, 0.590310, 0.584350, 0.718000,
                  1.25445, 2.65038]

_TEST2_C = [0.996225, 0.999961, 0.999429, 0.996679, 0.992003,
            0.988042, 0.985949]

_TEST2_SIGMA_S = [
    [4.44777e-2, 0, 0, 0, 0, 0, 0],
    [1.134e-1, 2.82334e-1, 0, 0, 0, 0, 0],
    [7.2347e-4, 1.2994e-1, 3.45256e-1, 0, 0, 0, 0],
    [3.7499e-6, 6.234e-4, 2.2457e-1, 9.10284e-2, 7.1437e-5, 0, 0],
    [5.3184e-8, 4.8002e-5, 1.6999e-2, 4.1551e-1, 1.39138e-1, 2.2157e-3, 0],
    [0, 7.4486e-6, 2.6443e-3, 6.3732e-2, 5.1182e-1, 6.99913e-1, 1.3244e-1],
    [0, 1.0455e-6, 5.0344e-4, 1.2139e-2, 6.1229e-2, 5.3732e-1, 2.4807],
]


def builtin_problem(name: str) -> ProblemSpec:
    key = name.strip().lower()
    if key == "test1":
        return make_problem(10, _TEST1_SIGMA_T, _TEST1_SIGMA_S, [1.0] * 10,
                            width=32.0, n_cells=128, n_half=8, name="test1")
    if key == "test2":
        return make_problem(7, _TEST2_SIGMA_T, _TEST2_SIGMA_S, [1.0] * 7,
                            width=32.0, n_cells=128, n_half=8, name="test2")
    raise ProblemError(f"unknown built-in problem {name!r} "
                       "(available: test1, test2)")


def builtin_reference_c(name: str) -> np.ndarray:
    key = name.strip().lower()
    if key == "test1":
        return np.array(_TEST1_C)
    if key == "test2":
        return np.array(_TEST2_C)
    raise ProblemError(f"no published c_g row for {name!r}")


BUILTIN_NAMES = ("test1", "test2")


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ValidationReport:
    """Comparison of derived scattering ratios against a reference row."""

    c_computed: np.ndarray
    c_reference: np.ndarray
    max_abs_dev: float
    tolerance: float
    passed: bool


def validate_scattering(spec: ProblemSpec, reference_c,
                        tolerance: float = C_TOLERANCE) -> ValidationReport:
    """Report-only check of column-sum scattering ratios vs a published row."""
    reference_c = np.asarray(reference_c, dtype=float)
    if reference_c.shape != (spec.G,):
        raise ProblemError(
            f"reference_c must have {spec.G} entries, got {reference_c.shape}")
    c = spec.scattering_ratio()
    dev = float(np.max(np.abs(c - reference_c)))
    return ValidationReport(c_computed=c, c_reference=reference_c,
                            max_abs_dev=dev, tolerance=tolerance,
                            passed=dev <= tolerance)


@dataclass(frozen=True)
class ConnectionStrengthMatrix:
    """Row-normalized group coupling strengths, diagonal defined 0."""

    S: np.ndarray

    def __getitem__(self, idx):
        return self.S[idx]


def connection_strength(spec: ProblemSpec) -> ConnectionStrengthMatrix:
    """S[g][g'] = sigma_{s,g'->g} / max_{g'' != g} sigma_{s,g''->g}.

    Rows with no nonzero off-diagonal entry come back all zero.
    """
    if spec.G < 2:
        raise ProblemError("connection strength requires G >= 2")
    G = spec.G
    S = np.zeros((G, G))
    for g in range(G):
        row = spec.sigma_s[g].copy()
        row[g] = 0.0
        peak = row.max()
        if peak > 0.0:
            S[g] = spec.sigma_s[g] / peak
        S[g, g] = 0.0
    return ConnectionStrengthMatrix(S=S)
