"""Average adjusted association: debiased estimation of the mean conditional log odds ratio."""

from .domain import (
    Dataset,
    DiscreteDGP,
    Estimate,
    NuisanceTriple,
    dr_efficient_score,
    dr_moment,
    log_or_prospective,
    log_or_retrospective,
    psi_prospective,
    psi_retrospective,
)
from .featurize import FeatureSpec, OneHot, Passthrough, Spline, bspline_basis, build_design
from .nuisance import (
    ConvergenceError,
    CvPlan,
    FoldDegenerate,
    LearnerConfig,
    LogitModel,
    cv_fit_logit_l1,
    fit_logit_irls,
    fit_logit_l1,
    fit_nuisance_triple,
    predict_proba,
)
from .crossfit import FoldPlan, dml_estimate, make_folds, plugin_estimate, subpop_average
from .oracle import (
    TheoremReport,
    check_double_robustness,
    check_eif_equality,
    check_orthogonality,
    exact_subpop_theta,
    exact_theta0,
    exact_v_eff,
    random_dgp,
)
from .simulate import EstimatorSpec, LogitDGP, McReport, run_mc, sample

__version__ = "0.1.0"
