"""Non-backtracking spectra of sparse random graphs.

Generators for Erdos-Renyi and stochastic block model graphs, matrix-free
non-backtracking operators with dense and walk-count oracles, eigensolvers
(dense, Ihara-Bass companion, Arnoldi, Lanczos), neighborhood functionals,
a multitype Poisson Galton-Watson engine with limit-law verification, and
the spectral community-detection pipeline with overlap scoring.
"""

from nbspectra.graphs import (
    DirectedEdgeIndex,
    LabeledGraph,
    build_edge_index,
    generate_er,
    generate_sbm,
    read_edge_list,
    write_edge_list,
)
from nbspectra.model import (
    SbmParams,
    SpectralData,
    derive_spectral_data,
    ks_detectable,
    preset,
    read_params,
    write_params,
)
from nbspectra.nbops import (
    apply_nb,
    apply_nb_transpose,
    block_signal_vector,
    count_nb_walks,
    dense_nb_matrix,
    reverse_edges,
)
from nbspectra.spectral import (
    SpectrumReport,
    alignment,
    candidate_vector,
    full_spectrum_companion,
    full_spectrum_dense,
    leading_eigenpairs,
    nb_power_singular_values,
)

__all__ = [
    "DirectedEdgeIndex",
    "LabeledGraph",
    "SbmParams",
    "SpectralData",
    "SpectrumReport",
    "alignment",
    "apply_nb",
    "apply_nb_transpose",
    "block_signal_vector",
    "build_edge_index",
    "candidate_vector",
    "count_nb_walks",
    "dense_nb_matrix",
    "derive_spectral_data",
    "full_spectrum_companion",
    "full_spectrum_dense",
    "generate_er",
    "generate_sbm",
    "ks_detectable",
    "leading_eigenpairs",
    "nb_power_singular_values",
    "preset",
    "read_edge_list",
    "read_params",
    "reverse_edges",
    "write_edge_list",
    "write_params",
]

__version__ = "0.1.0"
