"""Attention-distracting adversarial camouflage on a software renderer."""

from ._das import (
    Classifier,
    ConfigError,
    RenderCondition,
    RunConfig,
    Scene,
    canny,
    connected_components,
    distraction_loss,
    evasion_loss,
    load_config,
    read_png,
    run_attack,
    set_thread_count,
    smooth_loss,
    ssim,
    write_png,
)

__all__ = [
    "Classifier",
    "ConfigError",
    "RenderCondition",
    "RunConfig",
    "Scene",
    "canny",
    "connected_components",
    "distraction_loss",
    "evasion_loss",
    "load_config",
    "read_png",
    "run_attack",
    "set_thread_count",
    "smooth_loss",
    "ssim",
    "write_png",
]
