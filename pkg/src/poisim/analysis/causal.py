"""Propensity-weighted ATE of a binary treatment and three refuters."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import pandas as pd

from .table import BEHAVIORAL_FACTORS

REFUTERS = ("random_common_cause", "placebo_treatment", "data_subset")


class OverlapWarning(UserWarning):
    pass


def fit_logistic(X: np.ndarray, y: np.ndarray, tol: float = 1e-8, max_iter: int = 100) -> np.ndarray:
    """Logistic regression with intercept by iteratively reweighted least squares.

    Returns coefficients with the intercept first.
    """
    X = np.column_stack([np.ones(len(y)), np.asarray(X, dtype=float)])
    y = np.asarray(y, dtype=float)
    beta = np.zeros(X.shape[1])
    for _ in range(max_iter):
        eta = np.clip(X @ beta, -30, 30)
        p = 1.0 / (1.0 + np.exp(-eta))
        w = np.maximum(p * (1 - p), 1e-10)
        z = eta + (y - p) / w
        XtW = X.T * w
        new, *_ = np.linalg.lstsq(XtW @ X, XtW @ z, rcond=None)
        step = np.max(np.abs(new - beta))
        beta = new
        if step < tol:
            break
    else:
        warnings.warn(f"logistic fit did not converge in {max_iter} iterations", RuntimeWarning)
    return beta


def propensity(X: np.ndarray, t: np.ndarray, tol: float = 1e-8, max_iter: int = 100) -> np.ndarray:
    beta = fit_logistic(X, t, tol, max_iter)
    eta = np.clip(beta[0] + np.asarray(X, dtype=float) @ beta[1:], -30, 30)
    return 1.0 / (1.0 + np.exp(-eta))


@dataclass
class AteResult:
    ate: float
    treated: int
    control: int
    clipped: int
    propensity_range: tuple[float, float]


def _check_binary(x: np.ndarray, name: str) -> np.ndarray:
    x = np.asarray(x)
    if not np.isin(x, (0, 1)).all():
        raise ValueError(f"{name} must be binary 0/1")
    return x.astype(float)


def _ate(X, t, y, clip, tol, max_iter, warn=True) -> AteResult:
    if t.min() == t.max():
        raise ValueError("treatment has a single level; ATE undefined")
    e = propensity(X, t, tol, max_iter)
    clipped = int(np.sum((e < clip) | (e > 1 - clip)))
    if clipped and warn:
        warnings.warn(f"{clipped} propensity scores outside ({clip}, {1 - clip}) were clipped; "
                      f"range {e.min():.4f}..{e.max():.4f}", OverlapWarning)
    rng = (float(e.min()), float(e.max()))
    e = np.clip(e, clip, 1 - clip)
    w1 = t / e
    w0 = (1 - t) / (1 - e)
    ate = float(np.sum(w1 * y) / np.sum(w1) - np.sum(w0 * y) / np.sum(w0))
    return AteResult(ate, int(t.sum()), int(len(t) - t.sum()), clipped, rng)


def estimate_ate(table: pd.DataFrame, treatment: str, outcome: str,
                 confounders: Sequence[str] = BEHAVIORAL_FACTORS, clip: float = 0.01,
                 tol: float = 1e-8, max_iter: int = 100) -> AteResult:
    """Inverse-probability-weighted ATE with normalized (Hajek) weights.

    The propensity model is a logistic regression of the treatment on the
    confounders. Scores are clipped to ``[clip, 1 - clip]``.
    """
    if not 0 < clip < 0.5:
        raise ValueError("clip must lie in (0, 0.5)")
    t = _check_binary(table[treatment].to_numpy(), treatment)
    y = _check_binary(table[outcome].to_numpy(), outcome)
    X = table[list(confounders)].to_numpy(dtype=float)
    return _ate(X, t, y, clip, tol, max_iter)


@dataclass
class Refutation:
    method: str
    original: float
    new_effect: float
    p_value: float
    simulations: int

    @property
    def robust(self) -> bool:
        return self.p_value > 0.05


def _two_sided(draws: np.ndarray, null: float) -> float:
    return float(min(1.0, 2.0 * min(np.mean(draws <= null), np.mean(draws >= null))))


def refute(table: pd.DataFrame, ate_estimate: float, method: str, treatment: str, outcome: str,
           confounders: Sequence[str] = BEHAVIORAL_FACTORS, simulations: int = 100,
           subset_fraction: float = 0.8, seed: int | np.random.SeedSequence = 0,
           clip: float = 0.01, tol: float = 1e-8, max_iter: int = 100) -> Refutation:
    """Re-estimate the ATE under a perturbation of the data.

    ``random_common_cause`` adds an independent standard normal confounder,
    ``placebo_treatment`` permutes the treatment and ``data_subset`` keeps a
    random ``subset_fraction`` of rows. The new effect is the mean over
    ``simulations`` draws. The p-value is the two-sided share of draws on
    either side of the value expected under robustness: the original ATE,
    or zero for the placebo.
    """
    if method not in REFUTERS:
        raise ValueError(f"unknown refutation method {method!r}; choose from {REFUTERS}")
    if simulations < 1:
        raise ValueError("simulations must be positive")
    if not 0 < subset_fraction < 1:
        raise ValueError("subset_fraction must lie in (0, 1)")
    t = _check_binary(table[treatment].to_numpy(), treatment)
    y = _check_binary(table[outcome].to_numpy(), outcome)
    X = table[list(confounders)].to_numpy(dtype=float)
    n = len(t)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    draws = np.empty(simulations)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OverlapWarning)
        for k, child in enumerate(ss.spawn(simulations)):
            rng = np.random.default_rng(child)
            if method == "random_common_cause":
                res = _ate(np.column_stack([X, rng.standard_normal(n)]), t, y, clip, tol, max_iter)
            elif method == "placebo_treatment":
                res = _ate(X, rng.permutation(t), y, clip, tol, max_iter)
            else:
                idx = rng.choice(n, int(round(subset_fraction * n)), replace=False)
                res = _ate(X[idx], t[idx], y[idx], clip, tol, max_iter)
            draws[k] = res.ate
    null = 0.0 if method == "placebo_treatment" else ate_estimate
    return Refutation(method, ate_estimate, float(draws.mean()), _two_sided(draws, null), simulations)
