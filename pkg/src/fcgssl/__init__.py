"""Frequency-corrupt graph self-supervised learning at desk scale.

Corrupt a graph where its low-frequency spectral contribution is highest,
train a position-aware masked autoencoder to reconstruct what was removed
while aligning the corrupted views, then probe the frozen encoder.
"""
from .config import RunConfig, load_config, parse_config
from .corruption import (CorruptedGraph, CorruptionPlan, ItemSet, build_plan, materialize,
                         rank_weights, sample_rank_based, sample_value_based)
from .evalkit import (ProbeResult, accuracy, embed, graph_probe, graph_readout, linear_probe,
                      rmse, roc_auc)
from .frequency import (ContributionScores, contributions, edge_contributions,
                        node_contributions)
from .graph import (Graph, LaplacianView, build_laplacian, disjoint_union, generate_synthetic,
                    load_graph, save_graph)
from .model import EncoderConfig, FCGSSLModel
from .spectral import (SpectralBundle, edge_features, eigensolve_smallest, position_matrix,
                       rbf_embed)
from .trainer import apply_ablation, preprocess, preprocess_batch, train

__version__ = "0.1.0"
