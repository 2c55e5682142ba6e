"""Z2 lattice Higgs model: exact engines, expansions, Monte Carlo, decay fits."""

__version__ = "0.1.0"

from .dec import BoxSpec, Cell, Chain, Z2Form, boundary, coboundary, differential, evaluate, rho
from .lattice import Lattice, box_from_extents, lattice_for
from .polymers import (PathPolymer, SpanningSurface, VortexPolymer,
                       enumerate_closed_paths, enumerate_connecting_paths,
                       enumerate_vortices, iota, minimal_vortex, path_adjacent,
                       spanning_surface, vortex_adjacent, zeta)
from .exact import (CheckZEngine, ExactResult, ModelParams, exact_check_Z_ratio,
                    exact_partition, exact_Z_ratio, exact_Z_ratio_ising,
                    ising_chain_correlation, restricted_flat_ratio, wilson_line)
from .clusters import (Activities, Cluster, Expansion, ExpansionConfig,
                       bound_diagnostics, cluster_weight, ursell,
                       ursell_minimal_factorization)
from .mc import (RngSpec, SamplingPlan, ScanRow, WilsonEstimate, decay_scan,
                 dilute_schedule, jackknife_mean, mc_ising_correlation,
                 mc_wilson)
from .fits import CompareReport, FitResult, compare_c, fit_decay
