//! Spectral queries on sparse symmetric operators.
//!
//! Three access paths, chosen by what the caller needs and the operator
//! size: full dense diagonalization (small operators only), eigenvalue
//! counting through LDL^T inertia (any size, one factorization per energy),
//! and Krylov iterations for extremal pairs and heat-semigroup entries.
//! All tolerances live here as named constants; results never depend on
//! elimination order or thread count.

pub mod ldlt;
mod lanczos;
pub mod ordering;

use crate::error::{Error, Result};
use crate::lattice::BoxGeometry;
use crate::operators::{full_cube_operator, SparseSymmetricOperator};

/// Hard cap for dense diagonalization.
pub const DENSE_EIGEN_CAP: usize = 4096;
/// At or below this dimension extremal/semigroup queries go dense.
pub const DENSE_PATH_THRESHOLD: usize = 512;
/// Eigenpair acceptance: ||A x - lambda x|| <= this * (1 + |lambda|).
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Absolute tolerance of heat-semigroup diagonal entries.
pub const HEAT_TOL: f64 = 1e-8;
/// Iteration cap for Krylov loops.
pub const MAX_LANCZOS: usize = 300;
/// Pivots within this fraction of max(1, ||A|| + |shift|) count as zero.
pub const ZERO_PIVOT_REL: f64 = 1e-13;
/// Base retry nudge, as a fraction of max(1, |energy|), after a zero pivot.
/// Rung a of the retry ladder shifts by this times 2^(a-1).
pub const SHIFT_STEP_REL: f64 = 1e-12;
/// Shift rungs tried before giving up (largest offset ~2.6e-7 relative).
pub const MAX_SHIFT_ATTEMPTS: usize = 20;
/// Safety factor on the running-error bound that decides whether a pivot's
/// sign is trustworthy.
pub const PIVOT_ERROR_FACTOR: f64 = 4.0;

pub use ldlt::InertiaSolver;

/// An eigenvalue with its (unit) eigenvector and the explicitly recomputed
/// residual ||A x - lambda x||.
#[derive(Clone, Debug)]
pub struct ExtremalPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

/// Number of eigenvalues of `op` at most `energy` (right-continuous in the
/// counting convention: an eigenvalue exactly at `energy` is included).
pub fn count_below(op: &SparseSymmetricOperator, energy: f64) -> Result<usize> {
    InertiaSolver::new(op)?.count_below(energy)
}

/// All eigenvalues, ascending.  Dense diagonalization; refuses dimensions
/// above DENSE_EIGEN_CAP.
pub fn full_spectrum(op: &SparseSymmetricOperator) -> Result<Vec<f64>> {
    if op.n() > DENSE_EIGEN_CAP {
        return Err(Error::DenseCapExceeded {
            dim: op.n(),
            cap: DENSE_EIGEN_CAP,
        });
    }
    let mut ev: Vec<f64> = op
        .dense()
        .symmetric_eigen()
        .eigenvalues
        .iter()
        .copied()
        .collect();
    ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(ev)
}

/// Lowest `k` eigenpairs (k = 1 or 2), sorted by value, each verified
/// against RESIDUAL_TOL.
pub fn smallest_eigenvalue(op: &SparseSymmetricOperator, k: usize) -> Result<Vec<ExtremalPair>> {
    lanczos::smallest_pairs(op, k)
}

/// Numerically computed gap above the ground state of the fully connected
/// free cube: distance between its two lowest eigenvalues.
pub fn spectral_gap(geometry: BoxGeometry) -> Result<f64> {
    let op = full_cube_operator(geometry)?;
    if op.n() < 2 {
        return Err(Error::InvalidParameter(
            "a single-vertex box has no spectral gap".into(),
        ));
    }
    let pairs = smallest_eigenvalue(&op, 2)?;
    Ok(pairs[1].value - pairs[0].value)
}

/// <delta_x, exp(-s M) delta_x>.
pub fn semigroup_diag(op: &SparseSymmetricOperator, x: usize, s: f64) -> Result<f64> {
    lanczos::semigroup_diag(op, x, s)
}

/// Diagonal heat-kernel entry <delta_x, exp(-t M / (2d)) delta_x>, with 2d
/// taken from the operator's stored coordination.  This is the transition
/// probability of the continuous-time walk at physical time t when M is the
/// Neumann Laplacian.
pub fn heat_kernel_diag(op: &SparseSymmetricOperator, x: usize, t: f64) -> Result<f64> {
    if op.coordination() == 0 {
        return Err(Error::InvalidParameter(
            "operator has no recorded coordination number".into(),
        ));
    }
    semigroup_diag(op, x, t / op.coordination() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{sample_configuration, Configuration, Topology};
    use crate::operators::{assemble_laplacian, perturbation_family, BoundaryCondition, RestrictionScheme};

    fn neumann(config: &Configuration) -> SparseSymmetricOperator {
        assemble_laplacian(
            config,
            BoundaryCondition::Neumann,
            RestrictionScheme::GraphRestriction,
        )
        .unwrap()
    }

    #[test]
    fn torus_spectrum_matches_fourier_modes() {
        let l = 8usize;
        let g = BoxGeometry::new(2, l, Topology::Periodic).unwrap();
        let op = neumann(&Configuration::fully_open(g));
        let got = full_spectrum(&op).unwrap();
        let mut expect = Vec::new();
        for m0 in 0..l {
            for m1 in 0..l {
                let f = |m: usize| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * m as f64 / l as f64).cos();
                expect.push(f(m0) + f(m1));
            }
        }
        expect.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (a, b) in got.iter().zip(&expect) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }

    #[test]
    fn full_spectrum_respects_the_cap() {
        let g = BoxGeometry::new(2, 65, Topology::Free).unwrap();
        let op = neumann(&sample_configuration(g, 0.0, 0).unwrap());
        match full_spectrum(&op) {
            Err(Error::DenseCapExceeded { dim, cap }) => {
                assert_eq!(dim, 65 * 65);
                assert_eq!(cap, DENSE_EIGEN_CAP);
            }
            other => panic!("expected cap error, got {:?}", other.map(|v| v.len())),
        }
    }

    #[test]
    fn smallest_pair_of_a_laplacian_is_the_kernel() {
        let g = BoxGeometry::new(2, 6, Topology::Free).unwrap();
        let op = neumann(&sample_configuration(g, 0.5, 2).unwrap());
        let pairs = smallest_eigenvalue(&op, 1).unwrap();
        assert!(pairs[0].value.abs() < 1e-9);
        assert!(pairs[0].residual <= RESIDUAL_TOL * (1.0 + pairs[0].value.abs()));
    }

    #[test]
    fn sparse_path_agrees_with_dense_oracle() {
        // 24^2 = 576 vertices: above the dense-path threshold.
        let g = BoxGeometry::new(2, 24, Topology::Free).unwrap();
        let c = sample_configuration(g, 0.9, 5).unwrap();
        let op = perturbation_family(&c, 0.3).unwrap();
        assert!(op.n() > DENSE_PATH_THRESHOLD);
        let pairs = smallest_eigenvalue(&op, 2).unwrap();
        let mut oracle: Vec<f64> = op.dense().symmetric_eigen().eigenvalues.iter().copied().collect();
        oracle.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((pairs[0].value - oracle[0]).abs() < 1e-8, "{} vs {}", pairs[0].value, oracle[0]);
        assert!((pairs[1].value - oracle[1]).abs() < 1e-8, "{} vs {}", pairs[1].value, oracle[1]);
        assert!(pairs[0].residual <= RESIDUAL_TOL * (1.0 + pairs[0].value.abs()));
        assert!(pairs[1].residual <= RESIDUAL_TOL * (1.0 + pairs[1].value.abs()));
        // The two vectors are orthonormal.
        let d: f64 = pairs[0].vector.iter().zip(&pairs[1].vector).map(|(a, b)| a * b).sum();
        assert!(d.abs() < 1e-6, "eigenvectors not orthogonal: {d}");
    }

    #[test]
    fn degenerate_kernel_yields_two_zero_pairs() {
        // Subcritical box above the dense threshold: many components, so the
        // kernel has dimension well above two.
        let g = BoxGeometry::new(2, 24, Topology::Free).unwrap();
        let c = sample_configuration(g, 0.3, 8).unwrap();
        let op = neumann(&c);
        let pairs = smallest_eigenvalue(&op, 2).unwrap();
        assert!(pairs[0].value.abs() < 1e-9);
        assert!(pairs[1].value.abs() < 1e-9);
        let d: f64 = pairs[0].vector.iter().zip(&pairs[1].vector).map(|(a, b)| a * b).sum();
        assert!(d.abs() < 1e-6);
    }

    #[test]
    fn rejects_unsupported_pair_counts() {
        let g = BoxGeometry::new(2, 3, Topology::Free).unwrap();
        let op = neumann(&Configuration::fully_open(g));
        assert!(smallest_eigenvalue(&op, 0).is_err());
        assert!(smallest_eigenvalue(&op, 3).is_err());
    }

    #[test]
    fn gap_matches_cosine_closed_form() {
        for (d, l) in [(1, 10), (2, 8), (1, 33)] {
            let g = BoxGeometry::new(d, l, Topology::Free).unwrap();
            let gap = spectral_gap(g).unwrap();
            let expect = 2.0 - 2.0 * (std::f64::consts::PI / l as f64).cos();
            assert!((gap - expect).abs() < 1e-9, "d={d} L={l}: {gap} vs {expect}");
        }
    }

    #[test]
    fn dimer_heat_kernel_closed_form() {
        // Open edge {0,1} in the 2x2 free box; walk generator eigenvalues on
        // the dimer are {0, 2}/(2d), so P_00(t) = (1 + exp(-t/2)) / 2.
        let g = BoxGeometry::new(2, 2, Topology::Free).unwrap();
        let mut c = sample_configuration(g, 0.0, 0).unwrap();
        let idx = g.edges().iter().position(|e| e.endpoints() == (0, 1)).unwrap();
        c.set_open(idx, true);
        let op = neumann(&c);
        for &t in &[0.5, 1.0, 3.0, 10.0] {
            let got = heat_kernel_diag(&op, 0, t).unwrap();
            let expect = 0.5 * (1.0 + (-t / 2.0).exp());
            assert!((got - expect).abs() <= HEAT_TOL, "t={t}: {got} vs {expect}");
        }
        // An isolated vertex never moves.
        assert_eq!(heat_kernel_diag(&op, 3, 7.0).unwrap(), 1.0);
    }

    #[test]
    fn krylov_semigroup_matches_dense_oracle() {
        // A chain long enough to force the Krylov path.
        let l = 520usize;
        let g = BoxGeometry::new(1, l, Topology::Free).unwrap();
        let op = neumann(&Configuration::fully_open(g));
        assert!(op.n() > DENSE_PATH_THRESHOLD);
        let s = 2.0;
        let got = semigroup_diag(&op, l / 2, s).unwrap();
        let se = op.dense().symmetric_eigen();
        let mut expect = 0.0;
        for i in 0..op.n() {
            let c = se.eigenvectors[(l / 2, i)];
            expect += c * c * (-s * se.eigenvalues[i]).exp();
        }
        assert!((got - expect).abs() <= HEAT_TOL, "{got} vs {expect}");
    }

    #[test]
    fn semigroup_at_time_zero_is_one() {
        let g = BoxGeometry::new(2, 4, Topology::Free).unwrap();
        let op = neumann(&sample_configuration(g, 0.5, 1).unwrap());
        assert_eq!(semigroup_diag(&op, 5, 0.0).unwrap(), 1.0);
        assert!(semigroup_diag(&op, 99, 1.0).is_err());
        assert!(semigroup_diag(&op, 0, -1.0).is_err());
    }

    #[test]
    fn counting_duality_between_boundary_conditions() {
        // For each configuration the Dirichlet count at E and the Neumann
        // count just left of 4d - E partition the volume (checkerboard
        // conjugation mirrors the spectrum).
        let g = BoxGeometry::new(2, 4, Topology::Free).unwrap();
        for seed in 0..10 {
            let c = sample_configuration(g, 0.5, seed).unwrap();
            let op_n = neumann(&c);
            let op_d = assemble_laplacian(&c, BoundaryCondition::Dirichlet, RestrictionScheme::GraphRestriction)
                .unwrap();
            for j in 0..8 {
                let e = 0.37 + j as f64;
                let left = count_below(&op_d, e).unwrap();
                let right = count_below(&op_n, 8.0 - e - 1e-9).unwrap();
                assert_eq!(left + right, op_n.n(), "seed {seed} energy {e}");
            }
        }
    }

    #[test]
    fn counts_are_monotone_in_energy() {
        let g = BoxGeometry::new(2, 8, Topology::Periodic).unwrap();
        let c = sample_configuration(g, 0.6, 4).unwrap();
        let op = neumann(&c);
        let solver = InertiaSolver::new(&op).unwrap();
        let mut prev = 0;
        for j in 0..=32 {
            let e = -0.25 + 8.5 * j as f64 / 32.0;
            let here = solver.count_below(e).unwrap();
            assert!(here >= prev);
            prev = here;
        }
        assert_eq!(prev, op.n());
    }
}
