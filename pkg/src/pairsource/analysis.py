"""Fringe fitting, correlation coefficients and Bell-parameter statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FitError, NumericalError, ValidationError

NONLOCAL_VISIBILITY = 1 / math.sqrt(2)


@dataclass(frozen=True)
class FringeFit:
    amplitude: float
    offset: float
    phase: float
    visibility: float
    sigma_V: float
    chi2_reduced: float
    sigma_offset: float = math.nan
    sigma_phase: float = math.nan
    n_points: int = 0
    iterations: int = 0

    FIELDS = ("visibility", "sigma_V", "offset", "sigma_offset", "phase",
              "sigma_phase", "amplitude", "chi2_reduced", "n_points")

    def as_record(self) -> dict:
        return {k: getattr(self, k) for k in self.FIELDS}

    def report(self, prefix: str = "") -> str:
        return "\n".join(f"{prefix}{k}={_fmt(v)}" for k, v in self.as_record().items())


def _fmt(v) -> str:
    return str(v) if isinstance(v, (int, np.integer)) else f"{v:.6g}"


def fit_sinusoid(x, y, sigma=None, frequency: float = 1.0, max_iter: int = 50, tol: float = 1e-12) -> FringeFit:
    """Weighted fit of ``y = offset * (1 - V cos(frequency * (x - x0)))``.

    ``sigma`` defaults to Poisson errors ``sqrt(max(y, 1))``. The period is
    fixed; offset, visibility and origin are free. A linear least-squares
    solve in the (1, cos, sin) basis seeds a Gauss-Newton refinement whose
    final normal matrix gives the parameter covariance.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError("x and y must be 1-D arrays of equal length")
    if x.size < 5:
        raise ValidationError("need at least 5 points")
    if (x.max() - x.min()) * frequency < math.pi - 1e-12:
        raise ValidationError("points must span at least half a period")
    if sigma is None:
        sigma = np.sqrt(np.maximum(y, 1.0))
    sigma = np.asarray(sigma, dtype=float)
    if np.any(sigma <= 0):
        raise ValidationError("uncertainties must be positive")
    w = 1.0 / sigma**2
    k = frequency

    basis = np.column_stack([np.ones_like(x), np.cos(k * x), np.sin(k * x)])
    c0, c1, c2 = np.linalg.solve(basis.T @ (w[:, None] * basis), basis.T @ (w * y))
    if not c0 > 0:
        raise FitError("fringe offset is not positive", {"linear_solution": (c0, c1, c2)})
    p = np.array([c0, math.hypot(c1, c2) / c0, math.atan2(-c2, -c1) / k])

    def jac(p):
        off, vis, x0 = p
        arg = k * (x - x0)
        cs, sn = np.cos(arg), np.sin(arg)
        model = off * (1 - vis * cs)
        J = np.column_stack([1 - vis * cs, -off * cs, -off * vis * k * sn])
        return model, J

    for it in range(1, max_iter + 1):
        model, J = jac(p)
        normal = J.T @ (w[:, None] * J)
        try:
            step = np.linalg.solve(normal, J.T @ (w * (y - model)))
        except np.linalg.LinAlgError as exc:
            raise FitError("singular normal matrix", {"params": p.tolist()}) from exc
        p = p + step
        if not np.all(np.isfinite(p)):
            raise FitError("fit diverged", {"iteration": it})
        if np.all(np.abs(step) <= tol * np.maximum(np.abs(p), 1.0)):
            break
    else:
        raise FitError("Gauss-Newton did not converge", {"iterations": max_iter, "last_step": step.tolist()})

    model, J = jac(p)
    cov = np.linalg.inv(J.T @ (w[:, None] * J))
    off, vis, x0 = p
    if vis < 0:
        vis, x0 = -vis, x0 + math.pi / k
    period = 2 * math.pi / k
    x0 = (x0 + period / 2) % period - period / 2
    dof = max(x.size - 3, 1)
    chi2 = float(np.sum(w * (y - model) ** 2)) / dof
    err = np.sqrt(np.clip(np.diag(cov), 0, None))
    return FringeFit(
        amplitude=float(off * vis),
        offset=float(off),
        phase=float(x0),
        visibility=float(vis),
        sigma_V=float(err[1]),
        chi2_reduced=chi2,
        sigma_offset=float(err[0]),
        sigma_phase=float(err[2]),
        n_points=int(x.size),
        iterations=it,
    )


def visibility_net(x, raw_counts, accidental_counts, frequency: float = 1.0) -> FringeFit:
    """Fit after pointwise accidental subtraction; variances add."""
    raw = np.asarray(raw_counts, dtype=float)
    acc = np.asarray(accidental_counts, dtype=float)
    sigma = np.sqrt(np.maximum(raw, 1.0) + acc)
    return fit_sinusoid(x, raw - acc, sigma=sigma, frequency=frequency)


def correlation_from_counts(n_tt, n_tr, n_rt, n_rr) -> tuple[float, float]:
    """Correlation coefficient and its multinomial standard error."""
    n = n_tt + n_tr + n_rt + n_rr
    if n <= 0:
        raise NumericalError("no coincidences recorded")
    e = (n_tt + n_rr - n_tr - n_rt) / n
    return float(e), float(math.sqrt(max(1 - e * e, 0.0) / n) if n > 0 else math.inf)


@dataclass(frozen=True)
class BellResult:
    S: float
    sigma_S: float
    n_sigma_violation: float

    def report(self) -> str:
        return f"S={self.S:.6g}\nsigma_S={self.sigma_S:.6g}\nn_sigma={self.n_sigma_violation:.6g}"


def bell_from_fringes(E_values, sigmas) -> BellResult:
    """S from correlations ordered (a,b), (a,b'), (a',b), (a',b')."""
    e = np.asarray(E_values, dtype=float)
    s = np.asarray(sigmas, dtype=float)
    if e.shape != (4,) or s.shape != (4,):
        raise ValidationError("need exactly four correlations and four uncertainties")
    if np.any(s <= 0):
        raise ValidationError("uncertainties must be positive")
    S = abs(e[0] - e[1] + e[2] + e[3])
    sigma_S = float(np.sqrt(np.sum(s**2)))
    return BellResult(float(S), sigma_S, (S - 2) / sigma_S)


def visibility_threshold_check(visibility: float) -> str:
    return "nonlocal" if visibility > NONLOCAL_VISIBILITY else "local"
