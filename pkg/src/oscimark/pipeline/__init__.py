"""Modelling protocol: preparation, stability selection, stepwise SVR, nested CV, inference."""
from .artifacts import (ModelArtifact, cv_report_dict, read_cv_report, write_cv_report,
                        write_predictions, write_scatter_svg)
from .cv import (CvReport, FittedModel, FoldResult, PermutationResult, PipelineConfig,
                 fit_model, nested_cv, permutation_p, permutation_test)
from .endpoint import classify_responder, endpoint_pct
from .prep import PrepTransform, prep_apply, prep_fit
from .selection import (SelectionConfig, StabilityResult, child_seed, fold_indices,
                        stability_select)
from .stats import Score, pearson, score, spearman_perm
from .stepwise import GridConfig, StepwiseResult, best_cell, stepwise_svr

__all__ = [
    "ModelArtifact", "cv_report_dict", "read_cv_report", "write_cv_report",
    "write_predictions", "write_scatter_svg",
    "CvReport", "FittedModel", "FoldResult", "PermutationResult", "PipelineConfig",
    "fit_model", "nested_cv", "permutation_p", "permutation_test",
    "classify_responder", "endpoint_pct",
    "PrepTransform", "prep_apply", "prep_fit",
    "SelectionConfig", "StabilityResult", "child_seed", "fold_indices", "stability_select",
    "Score", "pearson", "score", "spearman_perm",
    "GridConfig", "StepwiseResult", "best_cell", "stepwise_svr",
]
