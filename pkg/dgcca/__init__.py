"""dgcca - common, distinctive and noise parts of multi-view data via generalized CCA."""

from dgcca.config import SelectionConfig, StudyConfig
from dgcca.dataset import Matrix, MultiViewDataset, assemble_dataset, load_dataset, load_matrix, save_matrix
from dgcca.decomposition import (
    DecompositionResult,
    HierarchyResult,
    PopulationDecomposition,
    decompose,
    decompose_hierarchical,
    decompose_signals,
    derive_population_params,
    population_decomposition,
    pve,
)
from dgcca.errors import DegenerateSpectrumWarning, DgccaError
from dgcca.evaluation import orthogonal_pair_rate, rank_quality, rho1, swiss
from dgcca.gcca import GccaModel, population_gcca, sample_gcca
from dgcca.nuisance import SelectionReport, select_all
from dgcca.params import NuisanceParams
from dgcca.signal import SignalEstimate, select_rank_ed, soft_threshold_svd
from dgcca.simulation import SetupSpec, generate, run_study
from dgcca.tracing import init_tracing

__all__ = [
    # Data
    "Matrix",
    "MultiViewDataset",
    "assemble_dataset",
    "load_dataset",
    "load_matrix",
    "save_matrix",
    # Signal recovery
    "SignalEstimate",
    "soft_threshold_svd",
    "select_rank_ed",
    # GCCA
    "GccaModel",
    "population_gcca",
    "sample_gcca",
    # Decomposition
    "NuisanceParams",
    "DecompositionResult",
    "HierarchyResult",
    "PopulationDecomposition",
    "decompose",
    "decompose_signals",
    "decompose_hierarchical",
    "derive_population_params",
    "population_decomposition",
    "pve",
    # Selection
    "SelectionConfig",
    "SelectionReport",
    "select_all",
    # Evaluation
    "swiss",
    "rho1",
    "orthogonal_pair_rate",
    "rank_quality",
    # Simulation
    "SetupSpec",
    "StudyConfig",
    "generate",
    "run_study",
    # Errors
    "DgccaError",
    "DegenerateSpectrumWarning",
    # Observability
    "init_tracing",
]
