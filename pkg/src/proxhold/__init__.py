"""Sample-and-hold stabilization with certified envelope-based feedback.

The package computes control actions from a Lyapunov candidate by solving a
quadratic-envelope problem with a certified accuracy gap, selects inputs
with a certified suboptimality bound, simulates the resulting sample-and-
hold closed loop, and derives the stability-margin constants that tell how
small the sampling period and both accuracy budgets must be.
"""

from .clf import Clf, DiniEstimate, SmoothBranch, check_decay, dini_derivative, get_clf, nonholonomic_clf, probe_uniformity, quadratic_clf
from .feedback import ControlDecision, FeedbackConfig, infc_feedback, select_control
from .infconv import (
    EnvelopeBudgetError,
    EnvelopeResult,
    EnvelopeSettings,
    check_eps_subgradient,
    check_taylor,
    envelope,
    verify_lemma1,
    verify_lemma2,
)
from .margins import (
    InfeasibleCertificateError,
    MarginCertificate,
    MarginConfig,
    build_certificate,
    check_eq26,
    modulus_of_continuity,
    rho_lambda,
)
from .sim import SampleHoldRun, StabilityVerdict, rk4_integrate, samplewise_decay_check, simulate, verdict
from .systems import ControlSystem, SystemConstants, estimate_constants, get_system, nonholonomic_integrator, scalar_integrator

__version__ = "0.1.0"
