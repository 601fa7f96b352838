"""Recursive path models: equation-wise OLS, effect decomposition, BC bootstrap."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np
import pandas as pd
from scipy import stats


class PathModelError(ValueError):
    pass


class EstimationError(PathModelError):
    pass


@dataclass(frozen=True)
class PathModelSpec:
    """Regression equations ``dependent <- regressors`` of an acyclic model."""

    equations: tuple[tuple[str, tuple[str, ...]], ...]
    name: str = ""

    def __post_init__(self):
        deps = [d for d, _ in self.equations]
        if len(set(deps)) != len(deps):
            raise PathModelError("a variable appears as dependent in more than one equation")
        for d, regs in self.equations:
            if not regs:
                raise PathModelError(f"equation for {d} has no regressors")
            if d in regs:
                raise PathModelError(f"{d} regresses on itself")
        self.order()  # raises on cycles

    @classmethod
    def parse(cls, text: str, name: str = "") -> "PathModelSpec":
        """Parse lines of the form ``y ~ a + b``; ``#`` starts a comment."""
        eqs = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.count("~") != 1:
                raise PathModelError(f"line {lineno}: expected 'dependent ~ regressors'")
            lhs, rhs = (s.strip() for s in line.split("~"))
            regs = tuple(r.strip() for r in rhs.split("+") if r.strip())
            if not lhs or not regs:
                raise PathModelError(f"line {lineno}: empty side in {line!r}")
            eqs.append((lhs, regs))
        return cls(tuple(eqs), name)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "PathModelSpec":
        with open(path) as fh:
            return cls.parse(fh.read(), name=os.path.splitext(os.path.basename(path))[0])

    def to_text(self) -> str:
        return "\n".join(f"{d} ~ {' + '.join(r)}" for d, r in self.equations) + "\n"

    @property
    def dependents(self) -> list[str]:
        return [d for d, _ in self.equations]

    @property
    def variables(self) -> list[str]:
        seen = []
        for d, regs in self.equations:
            for v in (*regs, d):
                if v not in seen:
                    seen.append(v)
        return seen

    @property
    def exogenous(self) -> list[str]:
        deps = set(self.dependents)
        return [v for v in self.variables if v not in deps]

    @property
    def outcomes(self) -> list[str]:
        """Dependents that are not regressors anywhere."""
        used = {r for _, regs in self.equations for r in regs}
        return [d for d in self.dependents if d not in used]

    def arrows(self) -> list[tuple[str, str]]:
        return [(r, d) for d, regs in self.equations for r in regs]

    def order(self) -> list[str]:
        """Topological order of all variables; raises on a cycle."""
        parents = {v: set() for v in self.variables}
        for src, dst in self.arrows():
            parents[dst].add(src)
        out, done = [], set()
        while len(out) < len(parents):
            ready = [v for v in parents if v not in done and parents[v] <= done]
            if not ready:
                raise PathModelError("path model is not recursive (cycle among "
                                     f"{sorted(set(parents) - done)})")
            for v in ready:
                out.append(v)
                done.add(v)
        return out

    def paths(self, source: str, target: str) -> list[tuple[str, ...]]:
        """All directed paths from ``source`` to ``target``."""
        children: dict[str, list[str]] = {}
        for src, dst in self.arrows():
            children.setdefault(src, []).append(dst)
        found = []

        def walk(node, trail):
            if node == target:
                found.append(tuple(trail))
                return
            for nxt in children.get(node, ()):
                walk(nxt, trail + [nxt])

        walk(source, [source])
        return found


def default_model(which: str) -> PathModelSpec:
    """Bundled spec for model ``"A"`` (new cases) or ``"B"`` (average exposure)."""
    fname = {"A": "model_a.txt", "B": "model_b.txt"}.get(which.upper())
    if fname is None:
        raise PathModelError(f"unknown bundled model {which!r}")
    text = resources.files("poisim.data").joinpath(fname).read_text()
    return PathModelSpec.parse(text, name=f"Model {which.upper()}")


@dataclass
class PathFit:
    spec: PathModelSpec
    coefficients: dict[tuple[str, str], float]
    std_coefficients: dict[tuple[str, str], float]
    intercepts: dict[str, float]
    r_squared: dict[str, float]
    n: int
    fit_indices: dict[str, float] = field(default_factory=dict)


def _ols(y: np.ndarray, X: np.ndarray, names: Sequence[str], dependent: str):
    design = np.column_stack([np.ones(len(y)), X])
    rank = np.linalg.matrix_rank(design)
    if rank < design.shape[1]:
        collinear, basis = [], [np.ones(len(y))]
        for name, col in zip(names, X.T):
            trial = np.column_stack(basis + [col])
            if np.linalg.matrix_rank(trial) < trial.shape[1]:
                collinear.append(name)
            else:
                basis.append(col)
        raise EstimationError(f"rank-deficient design for {dependent}: collinear regressors {collinear}")
    beta, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ beta
    return beta, resid


def _eq_rss(table: pd.DataFrame, dep: str, regs: Sequence[str]) -> float:
    y = table[dep].to_numpy(dtype=float)
    if regs:
        _, r = _ols(y, table[list(regs)].to_numpy(dtype=float), regs, dep)
    else:
        r = y - y.mean()
    return float(r @ r)


def fit_indices(table: pd.DataFrame, spec: PathModelSpec) -> dict[str, float]:
    """ML fit indices of a recursive model with uncorrelated disturbances.

    For such models the likelihood-ratio statistic against the saturated
    model splits over equations: chi2 = n * sum log(RSS_model / RSS_full),
    where the full equation regresses on every predecessor in the causal
    order. A saturated model gives chi2 = 0, df = 0, GFI = CFI = 1, RMSEA = 0.
    """
    n = len(table)
    order = spec.order()
    exo = set(spec.exogenous)
    chi2 = chi2_base = 0.0
    df = df_base = 0
    for dep, regs in spec.equations:
        preds = [v for v in order[:order.index(dep)]]
        rss_full = _eq_rss(table, dep, preds)
        rss_model = _eq_rss(table, dep, regs)
        rss_null = _eq_rss(table, dep, [])
        chi2 += n * math.log(rss_model / rss_full)
        chi2_base += n * math.log(rss_null / rss_full)
        df += len(preds) - len(regs)
        df_base += len(preds)
    # the baseline also drops exogenous covariances
    ex = [v for v in order if v in exo]
    if len(ex) > 1:
        S = np.cov(table[ex].to_numpy(dtype=float), rowvar=False, bias=True)
        chi2_base += n * (np.sum(np.log(np.diag(S))) - np.linalg.slogdet(S)[1])
        df_base += len(ex) * (len(ex) - 1) // 2
    chi2 = max(chi2, 0.0)
    if df == 0:
        return {"chi2": 0.0, "df": 0, "p": 1.0, "chi2_df": 0.0, "gfi": 1.0, "cfi": 1.0, "rmsea": 0.0}
    p = float(stats.chi2.sf(chi2, df))
    rmsea = math.sqrt(max(chi2 - df, 0.0) / (df * (n - 1)))
    d_model = max(chi2 - df, 0.0)
    d_base = max(chi2_base - df_base, d_model)
    cfi = float(1.0 - d_model / d_base) if d_base > 0 else 1.0
    gfi = _gfi(table, spec)
    return {"chi2": chi2, "df": df, "p": p, "chi2_df": chi2 / df, "gfi": gfi, "cfi": cfi,
            "rmsea": rmsea}


def _gfi(table: pd.DataFrame, spec: PathModelSpec) -> float:
    order = spec.order()
    idx = {v: i for i, v in enumerate(order)}
    data = table[order].to_numpy(dtype=float)
    data = data - data.mean(axis=0)
    S = data.T @ data / len(data)
    k = len(order)
    B = np.zeros((k, k))
    psi = np.zeros((k, k))
    exo = [idx[v] for v in spec.exogenous]
    psi[np.ix_(exo, exo)] = S[np.ix_(exo, exo)]
    for dep, regs in spec.equations:
        y = data[:, idx[dep]]
        X = data[:, [idx[r] for r in regs]]
        b, *_ = np.linalg.lstsq(X, y, rcond=None)
        B[idx[dep], [idx[r] for r in regs]] = b
        r = y - X @ b
        psi[idx[dep], idx[dep]] = r @ r / len(r)
    inv = np.linalg.inv(np.eye(k) - B)
    sigma = inv @ psi @ inv.T
    M = np.linalg.solve(sigma, S)
    return float(1.0 - np.trace((M - np.eye(k)) @ (M - np.eye(k))) / np.trace(M @ M))


def _fit_core(data: np.ndarray, names: Sequence[str], spec: PathModelSpec):
    col = {v: i for i, v in enumerate(names)}
    sd = data.std(axis=0, ddof=1)
    coefs, std, icpt, r2 = {}, {}, {}, {}
    for dep, regs in spec.equations:
        y = data[:, col[dep]]
        beta, resid = _ols(y, data[:, [col[r] for r in regs]], regs, dep)
        icpt[dep] = float(beta[0])
        tss = float(((y - y.mean()) ** 2).sum())
        r2[dep] = 1.0 - float(resid @ resid) / tss if tss > 0 else float("nan")
        for r, b in zip(regs, beta[1:]):
            coefs[(r, dep)] = float(b)
            std[(r, dep)] = float(b * sd[col[r]] / sd[col[dep]])
    return coefs, std, icpt, r2


def fit_path_model(table: pd.DataFrame, spec: PathModelSpec, with_indices: bool = True) -> PathFit:
    """Fit each equation by OLS; standardized coefficients use sample SDs."""
    missing = [v for v in spec.variables if v not in table.columns]
    if missing:
        raise PathModelError(f"table lacks model variables {missing}")
    names = spec.variables
    coefs, std, icpt, r2 = _fit_core(table[names].to_numpy(dtype=float), names, spec)
    fit = PathFit(spec, coefs, std, icpt, r2, len(table))
    if with_indices:
        fit.fit_indices = fit_indices(table, spec)
    return fit


@dataclass(frozen=True)
class Effect:
    independent: str
    dependent: str
    kind: str  # direct, indirect or total
    path: tuple[str, ...]
    estimate: float
    std_estimate: float

    @property
    def label(self) -> str:
        return " -> ".join(self.path) if self.path else ""


def _path_product(coefs: dict, path: Sequence[str]) -> float:
    out = 1.0
    for a, b in zip(path[:-1], path[1:]):
        if (a, b) not in coefs:
            raise PathModelError(f"path segment {a} -> {b} is not in the model")
        out *= coefs[(a, b)]
    return out


def decompose_effects(fit: PathFit, independents: Sequence[str] | None = None,
                      dependent: str | None = None) -> list[Effect]:
    """Direct, indirect (one per directed path) and total effects."""
    spec = fit.spec
    outcomes = spec.outcomes
    if dependent is None:
        if len(outcomes) != 1:
            raise PathModelError(f"choose a dependent among {outcomes}")
        dependent = outcomes[0]
    if dependent not in spec.dependents:
        raise PathModelError(f"{dependent} is not a dependent of the model")
    if independents is None:
        independents = spec.exogenous
    effects = []
    for x in independents:
        if x not in spec.variables:
            raise PathModelError(f"{x} is not a model variable")
        paths = spec.paths(x, dependent)
        if not paths:
            raise PathModelError(f"no path from {x} to {dependent} in the model")
        direct = [p for p in paths if len(p) == 2]
        indirect = sorted((p for p in paths if len(p) > 2), key=lambda p: (len(p), p))
        tot = tot_std = 0.0
        for p in direct + indirect:
            e = _path_product(fit.coefficients, p)
            s = _path_product(fit.std_coefficients, p)
            tot += e
            tot_std += s
            effects.append(Effect(x, dependent, "direct" if len(p) == 2 else "indirect", p, e, s))
        effects.append(Effect(x, dependent, "total", (), tot, tot_std))
    return effects


def _effects_frame(effects: Sequence[Effect]) -> pd.DataFrame:
    return pd.DataFrame({
        "independent": [e.independent for e in effects],
        "dependent": [e.dependent for e in effects],
        "effect": [e.kind for e in effects],
        "path": [e.label for e in effects],
        "estimate": [e.estimate for e in effects],
        "std_estimate": [e.std_estimate for e in effects],
    })


def bc_interval(estimate: float, draws: np.ndarray, ci: float = 95.0) -> tuple[float, float]:
    """Bias-corrected percentile interval."""
    draws = np.asarray(draws, dtype=float)
    below = np.mean(draws < estimate) + 0.5 * np.mean(draws == estimate)
    below = min(max(below, 0.5 / len(draws)), 1 - 0.5 / len(draws))
    z0 = stats.norm.ppf(below)
    za = stats.norm.ppf(0.5 - ci / 200.0)
    lo = stats.norm.cdf(2 * z0 + za)
    hi = stats.norm.cdf(2 * z0 - za)
    return float(np.quantile(draws, lo)), float(np.quantile(draws, hi))


def bootstrap_p(draws: np.ndarray) -> float:
    """Two-sided share of bootstrap mass on the far side of zero."""
    draws = np.asarray(draws, dtype=float)
    p = 2.0 * min(np.mean(draws <= 0), np.mean(draws >= 0))
    return float(min(p, 1.0))


def stars(p: float) -> str:
    return "***" if p < 0.01 else "**" if p < 0.05 else "*" if p < 0.1 else ""


def bootstrap_effects(table: pd.DataFrame, spec: PathModelSpec, resamples: int = 1000,
                      ci: float = 95.0, seed: int | np.random.SeedSequence = 0,
                      dependent: str | None = None, max_retries: int = 20) -> pd.DataFrame:
    """Effect report with bias-corrected bootstrap CIs.

    Each resample draws from its own pre-spawned stream, so the report does
    not depend on evaluation order. A resample with a constant or collinear
    column is redrawn from the same stream, at most ``max_retries`` times.
    """
    if resamples < 100:
        raise ValueError("at least 100 resamples are required")
    if not 0 < ci < 100:
        raise ValueError("ci must be a percentage in (0, 100)")
    fit = fit_path_model(table, spec, with_indices=False)
    base = decompose_effects(fit, dependent=dependent)
    frame = _effects_frame(base)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    names = spec.variables
    data = table[names].to_numpy(dtype=float)
    n = len(data)
    est = np.empty((resamples, len(base)))
    std = np.empty((resamples, len(base)))
    for b, child in enumerate(ss.spawn(resamples)):
        rng = np.random.default_rng(child)
        for attempt in range(max_retries + 1):
            sample = data[rng.integers(0, n, n)]
            if (np.ptp(sample, axis=0) > 0).all():
                try:
                    core = _fit_core(sample, names, spec)
                    res = decompose_effects(PathFit(spec, *core, n), dependent=dependent)
                    break
                except EstimationError:
                    pass
        else:
            raise EstimationError(f"resample {b} stayed degenerate after {max_retries} redraws")
        est[b] = [e.estimate for e in res]
        std[b] = [e.std_estimate for e in res]
    cis = [bc_interval(e.estimate, est[:, k], ci) for k, e in enumerate(base)]
    scis = [bc_interval(e.std_estimate, std[:, k], ci) for k, e in enumerate(base)]
    frame["ci_low"] = [c[0] for c in cis]
    frame["ci_high"] = [c[1] for c in cis]
    frame["std_ci_low"] = [c[0] for c in scis]
    frame["std_ci_high"] = [c[1] for c in scis]
    frame["p_value"] = [bootstrap_p(est[:, k]) for k in range(len(base))]
    frame["stars"] = frame["p_value"].map(stars)
    significant = (frame["ci_low"] > 0) | (frame["ci_high"] < 0)
    sign = np.where(frame["estimate"] > 0, "positive", "negative")
    frame["decision"] = np.where(significant, np.char.add("significant ", sign), "not significant")
    frame.attrs["resamples"] = resamples
    frame.attrs["ci"] = ci
    return frame


def format_report(frame: pd.DataFrame, fit: PathFit | None = None, title: str = "") -> str:
    lines = []
    if title:
        lines += [title, "=" * len(title)]
    if fit is not None and fit.fit_indices:
        fi = fit.fit_indices
        lines.append("fit: chi2={chi2:.2f} df={df} p={p:.2f} chi2/df={chi2_df:.2f} "
                     "GFI={gfi:.2f} CFI={cfi:.2f} RMSEA={rmsea:.2f}".format(**fi))
    has_ci = "ci_low" in frame
    for r in frame.itertuples():
        s = r.stars if has_ci else ""
        row = (f"{r.independent:>14} -> {r.dependent:<8} {r.effect:<8} "
               f"{r.estimate:+.3f}{s:<3} std {r.std_estimate:+.3f}")
        if has_ci:
            row += f"  [{r.ci_low:+.3f}, {r.ci_high:+.3f}]  {r.decision}"
        if r.effect == "indirect":
            row += f"  via {r.path}"
        lines.append(row)
    return "\n".join(lines) + "\n"
