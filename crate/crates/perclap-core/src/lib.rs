//! Numerical laboratory for Laplacians on Bernoulli bond-percolation graphs.
//!
//! The crate samples edge configurations on finite boxes of the hypercubic
//! lattice, assembles the associated Neumann, Pseudo-Dirichlet and Dirichlet
//! Laplacians, and estimates their integrated density of states by Monte
//! Carlo over configurations.  A continuous-time random walk simulator and a
//! set of scaling/mechanism checks connect the low-energy behaviour of the
//! spectrum to cluster geometry: diffusive decay of the annealed return
//! probability on the percolating cluster and Lifshits-type smallness of the
//! spectral counting function below the lowest full-cube eigenvalue.
//!
//! Everything is deterministic given a master seed: per-sample seeds are
//! derived by counter, so results are independent of thread count.

pub mod asymptotics;
pub mod cluster;
pub mod error;
pub mod ids;
pub mod lattice;
pub mod operators;
pub mod rng;
pub mod spectral;
pub mod walk;

pub use asymptotics::{
    dirichlet_cube_scaling, finite_cluster_tail_check, fit_heat_decay, fit_lifshits,
    fit_van_hove, heaviside_envelope_check, linearization_check, monotonicity_check,
    slope_implication_check, slope_large_deviation, tauberian_check, FitReport, MechanismReport,
};
pub use cluster::{cluster_statistics, ClusterDecomposition, ClusterStatistics};
pub use error::{Error, Result};
pub use ids::{
    estimate_ids, estimate_ids_ensemble, estimate_ids_split, ids_infinite_part,
    ids_infinite_part_ensemble, laplace_from_eigenvalues, laplace_transform, mirrored_grid,
    symmetry_residual, zero_mode_density, IdsCurve, IdsEnsemble, IdsPart, IdsSplit, LaplaceCurve,
    ZeroModeReport,
};
pub use lattice::{sample_configuration, BoxGeometry, Configuration, Edge, Topology};
pub use operators::{
    assemble_laplacian, full_cube_operator, involution_conjugate, involution_dual_residual,
    perturbation_family, slope_at_zero, BoundaryCondition, OffDiagonal, RestrictionScheme,
    SparseSymmetricOperator,
};
pub use spectral::{
    count_below, full_spectrum, heat_kernel_diag, semigroup_diag, smallest_eigenvalue,
    spectral_gap, ExtremalPair, InertiaSolver,
};
pub use walk::{
    annealed_return, return_probability, return_series_csv, simulate_walk, simulate_walk_trace,
    walk_positions, ReturnEstimate, WalkParams, WalkTable,
};
