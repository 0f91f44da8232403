"""Localized POD-Galerkin reduced-order models for steady bifurcation problems."""

from .assignment import ParameterClustering, assign, induce_parameter_clusters, switch_points
from .clustering import ClusterModel, ElbowScan, elbow_select, kmeans, variance
from .config import PipelineConfig, load_config, parse_config
from .errors import *  # noqa: F401,F403
from .fom import (ModalModel, OperatorDecomposition, PitchforkModel, SparseTensor, build_model,
                  laplacian_eigenvalue, make_modal_model, make_pitchfork_model, steady_solve)
from .linalg import ThinSvd, jacobi_eigh, lu_factor, lu_solve, thin_svd
from .pipeline import (BifurcationDiagram, ErrorReport, estimate_bifurcation, load_artifacts, run_errors,
                       run_offline, run_online)
from .podbasis import LocalBasis, TruncationRule, build_local_bases, pod_basis
from .rom import ReducedModel, build_global_roms, project_model, relative_error, solve_rom
from .sampling import ParameterSet, SamplingPlan, generate_samples
from .snapshots import SnapshotSet, generate_snapshots, load_snapshots, save_snapshots

__version__ = "0.1.0"
