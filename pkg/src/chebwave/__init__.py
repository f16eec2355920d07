"""Chebyshev-decomposed graph wavelets, wavelet convolution layers and numerical checks."""
from .bank import ContractError, WaveletBank, build_bank, forward_transform, frame_operators, inverse_transform
from .conv import HybridParams, LayerParams, hybrid_block, wavegc_layer
from .graph import Graph, GraphError, Spectrum, from_edges, generate_graph, load_edge_list, spectrum
from .reports import VerifyReport

__version__ = "0.1.0"

__all__ = [
    "ContractError", "Graph", "GraphError", "HybridParams", "LayerParams", "Spectrum", "VerifyReport",
    "WaveletBank", "build_bank", "forward_transform", "frame_operators", "from_edges", "generate_graph",
    "hybrid_block", "inverse_transform", "load_edge_list", "spectrum", "wavegc_layer",
]
