"""Small least-squares fitting helpers used by diagnostics and reports."""

from __future__ import annotations

import numpy as np


def fit_line(x, y) -> dict:
    """Least-squares line y = slope * x + intercept with slope stderr."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 3:
        raise ValueError("need at least 3 samples for a line fit")
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    dof = max(x.size - 2, 1)
    sigma2 = float(resid @ resid) / dof
    sxx = float(((x - x.mean()) ** 2).sum())
    stderr = np.sqrt(sigma2 / sxx) if sxx > 0 else np.inf
    return {"slope": float(coef[0]), "intercept": float(coef[1]),
            "stderr": float(stderr), "halfwidth": float(2.0 * stderr)}


def fit_loglog(x, y) -> dict:
    """Power-law exponent of y against x from a log-log line fit."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    out = fit_line(np.log(x), np.log(y))
    return {"exponent": out["slope"], "halfwidth": out["halfwidth"],
            "intercept": out["intercept"]}


def fit_exp_rate(tau, y) -> dict:
    """Exponential rate p of y ~ C e^{p tau} from a semilog line fit."""
    y = np.asarray(y, dtype=float)
    if np.any(y <= 0):
        raise ValueError("semilog fit needs positive data")
    out = fit_line(np.asarray(tau, dtype=float), np.log(y))
    return {"rate": out["slope"], "halfwidth": out["halfwidth"]}


def fit_rate_from_differences(tau, y) -> dict:
    """Rate p of y(tau) = y_inf + C e^{p tau} without knowing y_inf.

    Uses consecutive differences: y(tau_{i+1}) - y(tau_i) = C'(tau_i) e^{p tau_i}
    for equispaced tau, so the rate is read off a semilog fit of |diff|.
    """
    tau = np.asarray(tau, dtype=float)
    y = np.asarray(y, dtype=float)
    d = np.abs(np.diff(y))
    keep = d > 0
    if keep.sum() < 3:
        raise ValueError("differences vanish; no rate to fit")
    return fit_exp_rate(tau[:-1][keep], d[keep])


def observed_order(err_coarse: float, err_fine: float, ratio: float = 2.0) -> float:
    """Observed convergence order between two resolutions (fine = coarse*ratio)."""
    if err_fine <= 0 or err_coarse <= 0:
        return np.inf
    return float(np.log(err_coarse / err_fine) / np.log(ratio))


def richardson(coarse: float, fine: float, order: int = 2,
               ratio: float = 2.0) -> dict:
    """Richardson extrapolation assuming a known convergence order."""
    w = ratio ** order
    extrap = (w * fine - coarse) / (w - 1.0)
    return {"extrapolated": float(extrap),
            "error_estimate": float(abs(extrap - fine))}
