"""Kernelized movement primitives with a soft null-space projector.

Core flow: demonstrations -> Gaussian mixture (refdist) -> reference
trajectory distribution -> kernel model (kmp) -> cheap trajectory modulation
through secondary targets (nullspace).  ProMP and GMM-mean baselines plus an
obstacle-avoidance replanning harness (planner, experiments) round out the
package; the CLI lives in nskmp.cli.
"""

from .kernel import KernelConfig, cross_vector, gram_matrix, kernel_eval
from .kmp import FactorizationError, KmpModel, ViaPoint, adapt_via_point, fit, predict, predict_many
from .nullspace import (
    GridNsPredictor,
    NullSpaceReference,
    equivalent_via_point,
    ns_predict,
    project_weights_primal,
)
from .promp import PrompModel, condition, fit_promp, promp_predict
from .refdist import (
    Demonstration,
    GaussianMixture,
    ReferenceTrajectoryDistribution,
    build_reference,
    em_fit,
    gmr,
    perturb_component_mean,
)

__all__ = [
    "KernelConfig",
    "kernel_eval",
    "gram_matrix",
    "cross_vector",
    "Demonstration",
    "GaussianMixture",
    "ReferenceTrajectoryDistribution",
    "em_fit",
    "gmr",
    "build_reference",
    "perturb_component_mean",
    "KmpModel",
    "ViaPoint",
    "FactorizationError",
    "fit",
    "predict",
    "predict_many",
    "adapt_via_point",
    "NullSpaceReference",
    "GridNsPredictor",
    "ns_predict",
    "equivalent_via_point",
    "project_weights_primal",
    "PrompModel",
    "fit_promp",
    "promp_predict",
    "condition",
]

__version__ = "0.1.0"
