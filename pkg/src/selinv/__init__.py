"""Sparse selected inversion with an emulated distributed-memory runtime."""

from .sparse import (SparseMatrix, MatrixFormatError, read_matrix_market,
                     write_matrix_market, symmetrize_pattern,
                     gen_laplacian_2d, gen_tridiagonal, gen_arrow,
                     gen_random_diag_dominant)
from .symbolic import (EliminationTree, FillPattern, SupernodePartition,
                       elimination_tree, symbolic_fill, detect_supernodes)
from .factor import (SupFactorization, FactorizationError, supernodal_lu,
                     normalize_factors)
from .seqinv import (SelInvResult, SelectionError, selected_inversion,
                     dense_inverse_oracle, extract_selected)
from .comm import (ProcessGrid, BlockCyclicMap, CommTree, build_grid,
                   build_flat_tree, build_binary_tree,
                   build_shifted_binary_tree, tree_stats,
                   FLAT, BINARY, SHIFTED, TREE_KINDS)
from .runtime import (Message, CommLedger, DeadlockError, prepare,
                      run_parallel_selinv)
from .analysis import (VolumeStats, volume_stats, compare_schemes,
                       write_heatmap_csv, write_histogram_csv,
                       write_comparison_json, MB)

__version__ = "0.1.0"
