"""Statistical analysis of the scenario sample table."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .causal import (REFUTERS, AteResult, OverlapWarning, Refutation, estimate_ate, fit_logistic,
                     refute)
from .paths import (Effect, EstimationError, PathFit, PathModelError, PathModelSpec, bc_interval,
                    bootstrap_effects, decompose_effects, default_model, fit_path_model,
                    format_report, stars)
from .table import (BEHAVIORAL_FACTORS, SAMPLE_COLUMNS, ScalingError, binarize, min_max_scale,
                    read_sample_table, validate_table, write_sample_table)

__all__ = [
    "REFUTERS", "AteResult", "OverlapWarning", "Refutation", "estimate_ate", "fit_logistic", "refute",
    "Effect", "EstimationError", "PathFit", "PathModelError", "PathModelSpec", "bc_interval",
    "bootstrap_effects", "decompose_effects", "default_model", "fit_path_model", "format_report",
    "stars", "BEHAVIORAL_FACTORS", "SAMPLE_COLUMNS", "ScalingError", "binarize", "min_max_scale",
    "read_sample_table", "validate_table", "write_sample_table", "AnalysisResult", "analyze_table",
]


@dataclass
class AnalysisResult:
    effects: dict[str, pd.DataFrame] = field(default_factory=dict)
    fits: dict[str, PathFit] = field(default_factory=dict)
    ate: dict[str, AteResult] = field(default_factory=dict)
    refutations: dict[str, list[Refutation]] = field(default_factory=dict)

    def effects_frame(self) -> pd.DataFrame:
        parts = [f.assign(model=name) for name, f in self.effects.items()]
        return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame()

    def ate_frame(self) -> pd.DataFrame:
        rows = []
        for outcome, res in self.ate.items():
            row = {"outcome": outcome, "ate": res.ate, "treated": res.treated,
                   "control": res.control, "clipped": res.clipped}
            for r in self.refutations.get(outcome, []):
                row[f"{r.method}"] = r.new_effect
                row[f"{r.method}_p"] = r.p_value
            rows.append(row)
        return pd.DataFrame(rows)

    def text(self) -> str:
        out = []
        for name, frame in self.effects.items():
            out.append(format_report(frame, self.fits.get(name), title=name))
        if self.ate:
            out.append("Average treatment effect of sigma_spaces (binary)")
            for outcome, res in self.ate.items():
                out.append(f"  {outcome}: ATE {res.ate:+.3f} (treated {res.treated}, "
                           f"control {res.control})")
                for r in self.refutations.get(outcome, []):
                    out.append(f"    {r.method:<20} {r.new_effect:+.3f} (p={r.p_value:.3f})")
        return "\n".join(out) + "\n"


def analyze_table(table: pd.DataFrame, models: dict[str, PathModelSpec] | None = None,
                  resamples: int = 1000, ci: float = 95.0, seed: int = 0,
                  ate: bool = True, refutations: int = 100) -> AnalysisResult:
    """Scale the table, fit the path models and estimate the dispersion ATE.

    ``refutations`` is the number of simulations per refuter (0 skips them).
    """
    table = validate_table(table)
    scaled = min_max_scale(table)
    models = models if models is not None else {"Model A": default_model("A"),
                                                "Model B": default_model("B")}
    ss = np.random.SeedSequence(seed)
    boot_seeds = ss.spawn(len(models))
    result = AnalysisResult()
    for (name, spec), s in zip(models.items(), boot_seeds):
        result.fits[name] = fit_path_model(scaled, spec)
        result.effects[name] = bootstrap_effects(scaled, spec, resamples, ci, seed=s)
    if ate:
        binary = scaled[BEHAVIORAL_FACTORS].copy()
        binary["sigma_bin"] = binarize(scaled["sigma_spaces"])
        outcomes = {"c_new_bin": "c_new", "e_ave_bin": "e_ave"}
        for col, src in outcomes.items():
            binary[col] = binarize(scaled[src])
        ref_seeds = ss.spawn(len(outcomes))
        for (col, _), s in zip(outcomes.items(), ref_seeds):
            res = estimate_ate(binary, "sigma_bin", col)
            result.ate[col] = res
            if refutations:
                result.refutations[col] = [
                    refute(binary, res.ate, m, "sigma_bin", col, simulations=refutations, seed=k)
                    for m, k in zip(REFUTERS, s.spawn(len(REFUTERS)))]
    return result
