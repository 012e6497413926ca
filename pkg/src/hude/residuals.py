"""Residuals of a fitted model against an observed series.

Each admissible observation index ``j`` restarts the model from the observed
full state at ``t_j`` and asks: at which quantile level does the restarted
path hit the next observation ``x_{t_{j+1}}``?  That level is the residual
``eps_j``; for a well-fitted model the residuals behave like a sample of the
linear (uniform) uncertainty distribution on [0, 1].  The level is found by
bisection on the terminal value of the restarted path.

Derivative observations are rarely measured directly; they are reconstructed
from the raw series with forward (default) or central differences, producing
a staircase of derivative columns that lose one tail entry per order.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .alphapath import _spot_check
from .model import HudeModel, InitialState, _make_rhs, compile_model, phi_inv
from .odeint import DEFAULT_STEP, _terminal_state_batch

__all__ = [
    "ObservationSeries",
    "ResidualVector",
    "ResidualSaturationWarning",
    "DataFormatError",
    "estimate_derivatives",
    "compute_residual",
    "compute_residuals",
    "simulate_observations",
    "read_observations",
]

# Bisection probes stay this far inside (0, 1); observations beyond the
# reachable envelope saturate against these walls instead of erroring.
PROBE_CLAMP = 1e-6


class DataFormatError(Exception):
    """A data file does not have the expected layout."""


class ResidualSaturationWarning(UserWarning):
    """An observation sat at or beyond the reachable envelope; the residual
    was pinned near 0 or 1 and flagged."""


@dataclass(frozen=True)
class ObservationSeries:
    """Timestamped scalar observations with optional derivative columns.

    ``derivs[v-1]`` holds the order-``v`` derivative estimates aligned with
    ``t``; entries that cannot be formed are NaN (the staircase of a forward
    scheme leaves ``v`` trailing gaps in column ``v``).
    """

    t: np.ndarray
    x: np.ndarray
    derivs: np.ndarray | None = None

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float).reshape(-1)
        x = np.asarray(self.x, dtype=float).reshape(-1)
        if t.size != x.size:
            raise ValueError("times and values must have equal length")
        if t.size < 1:
            raise ValueError("series cannot be empty")
        if np.any(np.diff(t) <= 0):
            raise ValueError("observation times must be strictly increasing")
        if not np.all(np.isfinite(x)):
            raise ValueError("observations must be finite")
        t.flags.writeable = False
        x.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "x", x)
        if self.derivs is not None:
            d = np.asarray(self.derivs, dtype=float)
            if d.ndim != 2 or d.shape[1] != t.size:
                raise ValueError("derivative columns must be shaped (orders, len(t))")
            d.flags.writeable = False
            object.__setattr__(self, "derivs", d)

    def __len__(self) -> int:
        return self.t.size

    def state_at(self, j: int, n: int) -> np.ndarray:
        """Full state ``(x, x', ..., x^(n-1))`` at index ``j`` (NaN where unknown)."""
        if n == 1:
            return np.array([self.x[j]])
        if self.derivs is None or self.derivs.shape[0] < n - 1:
            raise ValueError(
                f"series lacks derivative columns up to order {n - 1}; "
                "run estimate_derivatives first"
            )
        return np.concatenate(([self.x[j]], self.derivs[: n - 1, j]))

    def with_derivatives(self, derivs: np.ndarray) -> "ObservationSeries":
        return ObservationSeries(self.t, self.x, derivs)

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("t,x\n")
            for ti, xi in zip(self.t, self.x):
                fh.write(f"{ti:.17g},{xi:.17g}\n")


def read_observations(path) -> ObservationSeries:
    """Read a ``t,x`` CSV into a series."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or [c.strip() for c in rows[0][:2]] != ["t", "x"]:
        raise DataFormatError(f"{path}: expected header 't,x'")
    try:
        data = [(float(r[0]), float(r[1])) for r in rows[1:] if r]
    except (ValueError, IndexError) as exc:
        raise DataFormatError(f"{path}: {exc}") from None
    if not data:
        raise DataFormatError(f"{path}: no observations")
    t, x = zip(*data)
    return ObservationSeries(np.array(t), np.array(x))


def estimate_derivatives(
    series: ObservationSeries, n: int, scheme: str = "forward"
) -> ObservationSeries:
    """Fill derivative columns ``x', ..., x^(n-1)`` by iterated differences.

    Forward: ``x^(v)(t_j) = (x^(v-1)(t_{j+1}) - x^(v-1)(t_j)) / (t_{j+1} - t_j)``.
    Central uses the two neighbours and is exact for quadratics but loses both
    ends of each column.
    """
    L = len(series)
    if L < n:
        raise ValueError(f"need at least {n} observations for order {n}")
    if scheme not in ("forward", "central"):
        raise ValueError(f"unknown scheme {scheme!r}")
    if scheme == "central" and L < 2 * n - 1:
        raise ValueError("central differences need interior points at every order")
    if n == 1:
        return series
    t = series.t
    derivs = np.full((n - 1, L), np.nan)
    prev = series.x
    for v in range(1, n):
        col = np.full(L, np.nan)
        if scheme == "forward":
            col[:-1] = (prev[1:] - prev[:-1]) / (t[1:] - t[:-1])
        else:
            col[1:-1] = (prev[2:] - prev[:-2]) / (t[2:] - t[:-2])
        derivs[v - 1] = col
        prev = col
    return series.with_derivatives(derivs)


@dataclass(frozen=True)
class ResidualVector:
    """Ordered residuals in (0, 1) with their originating indices.

    ``indices[k]`` is the 1-based observation index ``j`` whose step
    ``t_j -> t_{j+1}`` produced ``epsilons[k]``; ``saturated`` flags residuals
    whose observation sat at or beyond the reachable envelope.
    """

    epsilons: np.ndarray
    indices: np.ndarray | None = None
    theta: Mapping[str, float] | None = None
    saturated: np.ndarray | None = None

    def __post_init__(self):
        eps = np.asarray(self.epsilons, dtype=float).reshape(-1)
        if eps.size == 0:
            raise ValueError("residual vector cannot be empty")
        if not np.all((eps > 0.0) & (eps < 1.0)):
            raise ValueError("residuals must lie strictly inside (0, 1)")
        eps.flags.writeable = False
        object.__setattr__(self, "epsilons", eps)
        if self.indices is None:
            object.__setattr__(self, "indices", np.arange(1, eps.size + 1))
        else:
            idx = np.asarray(self.indices, dtype=int).reshape(-1)
            if idx.size != eps.size:
                raise ValueError("indices must match residuals in length")
            object.__setattr__(self, "indices", idx)
        if self.saturated is None:
            object.__setattr__(self, "saturated", np.zeros(eps.size, dtype=bool))
        else:
            sat = np.asarray(self.saturated, dtype=bool).reshape(-1)
            if sat.size != eps.size:
                raise ValueError("saturation flags must match residuals in length")
            object.__setattr__(self, "saturated", sat)

    def __len__(self) -> int:
        return self.epsilons.size

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("j,epsilon\n")
            for j, e in zip(self.indices, self.epsilons):
                fh.write(f"{j},{e:.17g}\n")

    @classmethod
    def from_csv(cls, path) -> "ResidualVector":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0][:2]] != ["j", "epsilon"]:
            raise DataFormatError(f"{path}: expected header 'j,epsilon'")
        try:
            pairs = [(int(r[0]), float(r[1])) for r in rows[1:] if r]
        except (ValueError, IndexError) as exc:
            raise DataFormatError(f"{path}: {exc}") from None
        if not pairs:
            raise DataFormatError(f"{path}: no residuals")
        j, eps = zip(*pairs)
        return cls(np.array(eps), indices=np.array(j))


def _bisect_levels(model, theta, t0s, y0s, t1s, x_next, delta, h, method):
    """Vectorised bisection: for each row find the level whose restarted path
    ends at the observed next value.  Returns (levels, saturated)."""
    if delta <= 0:
        raise ValueError("precision delta must be positive")
    drift, diffusions = compile_model(model, theta)
    B = len(x_next)
    lo = np.zeros(B)
    hi = np.ones(B)
    while float(np.max(hi - lo)) > delta:
        mid = 0.5 * (lo + hi)
        phi = phi_inv(np.clip(mid, PROBE_CLAMP, 1.0 - PROBE_CLAMP))
        raw = _make_rhs(model.order, drift, diffusions, phi)
        terminal = _terminal_state_batch(raw, t0s, y0s, t1s, h, method)
        below = terminal[:, 0] < x_next
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    eps = 0.5 * (lo + hi)
    saturated = (lo <= 0.0) | (hi >= 1.0)
    return eps, saturated


def compute_residual(
    model: HudeModel,
    theta,
    init_j: InitialState,
    t_next: float,
    x_next: float,
    delta: float = 1e-4,
    h: float = DEFAULT_STEP,
    method: str = "euler",
) -> float:
    """Residual of a single step: restart at ``init_j``, bisect the level at
    which the path reaches ``x_next`` at ``t_next``."""
    if not math.isfinite(x_next):
        raise ValueError("observation must be finite")
    if not t_next > init_j.t0:
        raise ValueError("t_next must exceed the restart time")
    resolved = model.resolved_theta(theta)
    eps, saturated = _bisect_levels(
        model,
        resolved,
        np.array([init_j.t0]),
        init_j.values[None, :],
        np.array([float(t_next)]),
        np.array([float(x_next)]),
        delta,
        h,
        method,
    )
    if saturated[0]:
        warnings.warn(
            "observation lies at or beyond the reachable envelope; "
            "residual saturated",
            ResidualSaturationWarning,
            stacklevel=2,
        )
    return float(eps[0])


def compute_residuals(
    model: HudeModel,
    theta,
    series: ObservationSeries,
    delta: float = 1e-4,
    h: float = DEFAULT_STEP,
    scheme: str = "forward",
    method: str = "euler",
    condition_check: bool = True,
) -> ResidualVector:
    """All residuals of ``series`` under ``model``/``theta``.

    ``scheme`` selects how derivative observations are reconstructed
    ("forward" or "central"); "given" trusts the columns already present,
    e.g. the exactly propagated states of :func:`simulate_observations`.
    A step is scored whenever its full restart state is known and the next
    observation exists, so 61 observations of an order-2 model yield 60
    residuals under the forward scheme.
    """
    n = model.order
    L = len(series)
    if L < n + 1:
        raise ValueError(
            f"need at least {n + 1} observations to score an order-{n} model"
        )
    if scheme == "given":
        if n > 1 and (series.derivs is None or series.derivs.shape[0] < n - 1):
            raise ValueError("scheme 'given' requires existing derivative columns")
        filled = series
    else:
        filled = estimate_derivatives(series, n, scheme)
    resolved = model.resolved_theta(theta)

    states = np.stack([filled.state_at(j, n) for j in range(L - 1)])
    admissible = np.where(np.isfinite(states).all(axis=1))[0]
    if admissible.size == 0:
        raise ValueError("no step has a complete restart state")
    t0s = filled.t[admissible]
    y0s = states[admissible]
    t1s = filled.t[admissible + 1]
    x_next = filled.x[admissible + 1]

    eps, saturated = _bisect_levels(
        model, resolved, t0s, y0s, t1s, x_next, delta, h, method
    )
    if condition_check and n >= 2:
        mins = y0s.min(axis=0)
        maxs = y0s.max(axis=0)
        mins[0] = min(mins[0], float(x_next.min()))
        maxs[0] = max(maxs[0], float(x_next.max()))
        _spot_check(
            model,
            resolved,
            (float(t0s.min()), float(t1s.max())),
            mins,
            maxs,
            (0.25, 0.75),
        )
    return ResidualVector(
        eps, indices=admissible + 1, theta=resolved, saturated=saturated
    )


def simulate_observations(
    model: HudeModel,
    theta,
    init: InitialState,
    times: Sequence[float],
    seed: int | None = None,
    eps: Sequence[float] | None = None,
    h: float = DEFAULT_STEP,
    method: str = "euler",
) -> ObservationSeries:
    """Generate a synthetic series by per-step quantile inversion.

    For each step a level ``eps_j`` is drawn uniformly (or taken from
    ``eps``), the path restarted from the current full state is integrated at
    that level, and its terminal state becomes the next observation.  The
    returned series carries the exactly propagated derivative columns, so
    residuals recomputed with ``scheme="given"`` and the same ``theta``
    recover the drawn levels up to the bisection precision.
    """
    times = np.asarray(times, dtype=float).reshape(-1)
    if times.size < 2:
        raise ValueError("need at least two observation times")
    if np.any(np.diff(times) <= 0):
        raise ValueError("observation times must be strictly increasing")
    if times[0] != init.t0:
        raise ValueError("first observation time must equal the initial time")
    n = model.order
    if init.values.size != n:
        raise ValueError(f"initial state must have {n} components")
    steps = times.size - 1
    if eps is None:
        rng = np.random.default_rng(seed)
        eps = rng.uniform(size=steps)
    else:
        eps = np.asarray(eps, dtype=float).reshape(-1)
        if eps.size != steps:
            raise ValueError(f"need {steps} levels, got {eps.size}")
        if not np.all((eps > 0.0) & (eps < 1.0)):
            raise ValueError("levels must lie strictly inside (0, 1)")
    resolved = model.resolved_theta(theta)
    drift, diffusions = compile_model(model, resolved)
    states = np.empty((times.size, n))
    states[0] = init.values
    for j in range(steps):
        phi = phi_inv(float(np.clip(eps[j], 1e-12, 1.0 - 1e-12)))
        raw = _make_rhs(n, drift, diffusions, phi)
        states[j + 1] = _terminal_state_batch(
            raw,
            times[j : j + 1],
            states[j : j + 1],
            times[j + 1 : j + 2],
            h,
            method,
        )[0]
    derivs = states[:, 1:].T.copy() if n > 1 else None
    return ObservationSeries(times, states[:, 0], derivs)
