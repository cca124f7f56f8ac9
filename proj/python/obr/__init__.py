"""Optical Braille recognition: character detector, codec and metrics."""

from ._obr import (
    Box,
    Detector,
    InputError,
    ModelError,
    decode,
    default_config,
    encode,
    evaluate,
    iou,
    mirror,
    nms,
    normalize,
    read_png,
    render_page,
    to_unicode,
    write_png,
)

__all__ = [
    "Box",
    "Detector",
    "InputError",
    "ModelError",
    "decode",
    "default_config",
    "encode",
    "evaluate",
    "iou",
    "mirror",
    "nms",
    "normalize",
    "read_png",
    "render_page",
    "to_unicode",
    "write_png",
]
