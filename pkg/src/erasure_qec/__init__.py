"""Surface-code memory simulation under heralded erasure plus Pauli noise,
with the device-physics and gate models behind the erasure rates."""

from .layout import ParameterError, SurfaceCodeLayout, build_layout, syndrome_circuit
from .noise import NoiseParams

__all__ = ["ParameterError", "SurfaceCodeLayout", "build_layout", "syndrome_circuit", "NoiseParams"]
__version__ = "0.1.0"
