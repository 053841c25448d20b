"""Text-assisted causal analysis of tabular patient data.

Thin Python surface over the C++ core: text preprocessing, MNIR sufficient
reductions, optimal full matching, ATT estimation, multiple-imputation
pooling, subgroup scans, and the synthetic-data generator. The full file
pipeline is available through :func:`run_stage` / :func:`run_pipeline` with
the same JSON run configuration the CLI uses.
"""

from ._core import (
    __version__,
    att_estimate,
    bh_fdr,
    effective_sample_size,
    fit_propensity,
    full_match,
    generate_synth,
    pca_scores,
    rubin_pool,
    run_pipeline,
    run_stage,
    shrink,
    sr_scores,
    tokenize,
    youden_threshold,
)

__all__ = [
    "__version__",
    "att_estimate",
    "bh_fdr",
    "effective_sample_size",
    "fit_propensity",
    "full_match",
    "generate_synth",
    "pca_scores",
    "rubin_pool",
    "run_pipeline",
    "run_stage",
    "shrink",
    "sr_scores",
    "tokenize",
    "youden_threshold",
]
