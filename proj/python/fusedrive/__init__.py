"""Python access to the fusedrive C++ core."""

from ._core import (
    FusedriveError,
    Predictor,
    f1_report,
    fuse,
    generate_synthetic,
    gradcheck,
    read_bundle,
    refine_cam,
    run_cli,
    select_topk,
    topk_avg_pool,
)

__all__ = [
    "FusedriveError",
    "Predictor",
    "f1_report",
    "fuse",
    "generate_synthetic",
    "gradcheck",
    "read_bundle",
    "refine_cam",
    "run_cli",
    "select_topk",
    "topk_avg_pool",
]
__version__ = "0.1.0"
