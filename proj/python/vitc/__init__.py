"""Vision transformer compression: VTP pruning, low-rank attention and reporting."""

from ._vitc import (
    ModelConfig,
    VitcError,
    VitModel,
    compression_percent,
    config_param_count,
    load_cifar10,
    lra_param_count,
    make_synthetic,
    mask_statistics,
    model_size_mib,
    reference_config,
    relative_error_increase,
    train,
)

__all__ = [
    "ModelConfig",
    "VitcError",
    "VitModel",
    "compression_percent",
    "config_param_count",
    "load_cifar10",
    "lra_param_count",
    "make_synthetic",
    "mask_statistics",
    "model_size_mib",
    "reference_config",
    "relative_error_increase",
    "train",
]
