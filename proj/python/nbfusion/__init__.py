# SPDX-License-Identifier: Apache-2.0
"""Confidence-gated multimodal fusion toolkit (python bindings).

The heavy lifting lives in the C++ extension ``nbfusion._core``; this package
re-exports its functions. See the project README for the CLI and file formats.
"""

from nbfusion._core import (
    NbfError,
    affine,
    auroc,
    compute_metrics,
    corrupt_text,
    cross_modal_attention,
    fuse,
    grad_check_full_model,
    lambda_at,
    load_embeddings,
    lora_apply,
    lora_param_count,
    merge_adapter,
    prmf_forward,
    relu,
    run_cli,
    sigmoid,
    softmax_cross_entropy,
    stage_for_epoch,
)

__all__ = [
    "NbfError",
    "affine",
    "auroc",
    "compute_metrics",
    "corrupt_text",
    "cross_modal_attention",
    "fuse",
    "grad_check_full_model",
    "lambda_at",
    "load_embeddings",
    "lora_apply",
    "lora_param_count",
    "merge_adapter",
    "prmf_forward",
    "relu",
    "run_cli",
    "sigmoid",
    "softmax_cross_entropy",
    "stage_for_epoch",
]

__version__ = "0.1.0"
