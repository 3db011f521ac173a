"""Frame-masked video autoencoder: compression by keeping the right frames."""

from ._core import (
    ArtifactError,
    ClipSpec,
    InvalidInput,
    Model,
    ModelConfig,
    Selector,
    VideoClip,
    combo_to_slots,
    compress,
    decompress,
    frrs_meta,
    make_frame_mask,
    make_planted_clip,
    make_planted_dataset,
    n_combos,
    patchify,
    pretrain,
    slots_to_combo,
    unpatchify,
)

__all__ = [
    "ArtifactError",
    "ClipSpec",
    "InvalidInput",
    "Model",
    "ModelConfig",
    "Selector",
    "VideoClip",
    "combo_to_slots",
    "compress",
    "decompress",
    "frrs_meta",
    "make_frame_mask",
    "make_planted_clip",
    "make_planted_dataset",
    "n_combos",
    "patchify",
    "pretrain",
    "slots_to_combo",
    "unpatchify",
]

__version__ = "0.1.0"
