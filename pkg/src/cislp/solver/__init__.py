"""Numerical backends: least-norm QP solvers and the multicast SDP."""
from .qp import (
    LeastNormProblem,
    QPResult,
    Status,
    kkt_residuals,
    least_norm_on_rows,
    solve_active_set,
    solve_enumerate,
)
from .sdp import SdpProblem, SdpResult, solve_multicast_sdp

__all__ = [
    "LeastNormProblem",
    "QPResult",
    "Status",
    "kkt_residuals",
    "least_norm_on_rows",
    "solve_active_set",
    "solve_enumerate",
    "SdpProblem",
    "SdpResult",
    "solve_multicast_sdp",
]
