"""Fooling-image generation and spectral analysis."""

from foolforge.fooling.cppn import CPPNGenome, coordinate_map, cppn_render
from foolforge.fooling.generators import (
    GENERATORS,
    GRADIENT_METHODS,
    METHODS,
    FoolingConfig,
    FoolingError,
    FoolingImage,
    fool_cppn_ea,
    fool_cppn_grad,
    fool_dr,
    fool_naive,
    fool_tr,
    fool_trdr,
    generate,
)
from foolforge.fooling.io import export_png, load_fooling_image, save_fooling_image
from foolforge.fooling.spectrum import high_freq_energy, radial_power_spectrum

__all__ = [
    "GENERATORS",
    "GRADIENT_METHODS",
    "METHODS",
    "CPPNGenome",
    "FoolingConfig",
    "FoolingError",
    "FoolingImage",
    "coordinate_map",
    "cppn_render",
    "export_png",
    "fool_cppn_ea",
    "fool_cppn_grad",
    "fool_dr",
    "fool_naive",
    "fool_tr",
    "fool_trdr",
    "generate",
    "high_freq_energy",
    "load_fooling_image",
    "radial_power_spectrum",
    "save_fooling_image",
]
