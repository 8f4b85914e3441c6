//! Sparse LDL^T factorization of shifted operators, up-looking over rows
//! with an elimination-tree symbolic phase.  No pivoting: for A - s*I the
//! sign pattern of D gives the inertia directly (Sylvester), and for shifts
//! left of the spectrum the factorization doubles as a positive-definite
//! solver for shift-inverted iterations.
//!
//! A pivot inside its zero band (a running-error bound on the row it came
//! from, floored by a global norm-based band) cannot be signed reliably and
//! aborts the attempt.  Counting retries deterministically, alternating
//! nudged shifts with a second elimination ordering: the inertia does not
//! depend on the ordering, but cancellation near a singular shift does.

use std::sync::OnceLock;

use crate::error::{Error, Result};
use crate::operators::SparseSymmetricOperator;

use super::{MAX_SHIFT_ATTEMPTS, PIVOT_ERROR_FACTOR, SHIFT_STEP_REL, ZERO_PIVOT_REL};

/// Pattern-side data reusable across shifts of the same operator.
pub struct SymbolicPlan {
    n: usize,
    /// original index -> position
    newpos: Vec<u32>,
    /// permuted diagonal of A
    pdiag: Vec<f64>,
    /// permuted strictly-upper pattern in compressed columns
    col_ptr: Vec<usize>,
    row_idx: Vec<u32>,
    values: Vec<f64>,
    /// elimination tree (usize::MAX for roots)
    parent: Vec<usize>,
    /// exact column pointers of L from the symbolic counts
    l_ptr: Vec<usize>,
    norm_inf: f64,
}

pub enum FactorStatus {
    Completed(NumericFactor),
    /// |pivot| fell inside the zero band at this column.
    ZeroPivot { column: usize },
}

pub struct NumericFactor {
    pub negative: usize,
    d: Vec<f64>,
    l_idx: Vec<u32>,
    l_val: Vec<f64>,
}

impl SymbolicPlan {
    /// Analyze `op` under the elimination order `perm` (position -> index).
    pub fn build(op: &SparseSymmetricOperator, perm: Vec<u32>) -> Result<Self> {
        let n = op.n();
        if perm.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "permutation length {} vs dimension {n}",
                perm.len()
            )));
        }
        let mut newpos = vec![u32::MAX; n];
        for (k, &v) in perm.iter().enumerate() {
            if (v as usize) >= n || newpos[v as usize] != u32::MAX {
                return Err(Error::InvalidParameter(
                    "elimination order is not a permutation".into(),
                ));
            }
            newpos[v as usize] = k as u32;
        }
        let mut pdiag = vec![0.0; n];
        for (v, &d) in op.diag().iter().enumerate() {
            pdiag[newpos[v] as usize] = d;
        }

        // Permuted strictly-upper triangle, compressed by column.
        let mut counts = vec![0usize; n];
        for e in op.off_diagonal() {
            let (a, b) = (newpos[e.i as usize], newpos[e.j as usize]);
            counts[a.max(b) as usize] += 1;
        }
        let mut col_ptr = vec![0usize; n + 1];
        for k in 0..n {
            col_ptr[k + 1] = col_ptr[k] + counts[k];
        }
        let mut fill = col_ptr.clone();
        let mut row_idx = vec![0u32; col_ptr[n]];
        let mut values = vec![0.0f64; col_ptr[n]];
        for e in op.off_diagonal() {
            let (a, b) = (newpos[e.i as usize], newpos[e.j as usize]);
            let (row, col) = (a.min(b), a.max(b) as usize);
            row_idx[fill[col]] = row;
            values[fill[col]] = e.value;
            fill[col] += 1;
        }
        for k in 0..n {
            let range = col_ptr[k]..col_ptr[k + 1];
            let mut pairs: Vec<(u32, f64)> = row_idx[range.clone()]
                .iter()
                .copied()
                .zip(values[range.clone()].iter().copied())
                .collect();
            pairs.sort_by_key(|&(r, _)| r);
            for (slot, (r, v)) in range.zip(pairs) {
                row_idx[slot] = r;
                values[slot] = v;
            }
        }

        // Elimination tree and exact per-column fill counts of L.
        let mut parent = vec![usize::MAX; n];
        let mut flag = vec![u32::MAX; n];
        let mut l_counts = vec![0usize; n];
        for k in 0..n {
            flag[k] = k as u32;
            for p in col_ptr[k]..col_ptr[k + 1] {
                let mut i = row_idx[p] as usize;
                while flag[i] != k as u32 {
                    if parent[i] == usize::MAX {
                        parent[i] = k;
                    }
                    l_counts[i] += 1;
                    flag[i] = k as u32;
                    i = parent[i];
                }
            }
        }
        let mut l_ptr = vec![0usize; n + 1];
        for i in 0..n {
            l_ptr[i + 1] = l_ptr[i] + l_counts[i];
        }

        Ok(Self {
            n,
            newpos,
            pdiag,
            col_ptr,
            row_idx,
            values,
            parent,
            l_ptr,
            norm_inf: op.infinity_norm(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Pivots within this fraction of the problem scale count as zero.
    pub fn zero_band(&self, shift: f64) -> f64 {
        ZERO_PIVOT_REL * (self.norm_inf + shift.abs()).max(1.0)
    }

    /// Factor A - shift * I.  Either every pivot is classified (negative or
    /// positive) or the first near-zero pivot aborts the attempt.
    pub fn factor(&self, shift: f64) -> FactorStatus {
        let n = self.n;
        let zero_band = self.zero_band(shift);
        let mut y = vec![0.0f64; n];
        let mut pattern = vec![0u32; n];
        let mut flag = vec![u32::MAX; n];
        let mut lnz = vec![0usize; n];
        let mut d = vec![0.0f64; n];
        let mut l_idx = vec![0u32; self.l_ptr[n]];
        let mut l_val = vec![0.0f64; self.l_ptr[n]];
        let mut negative = 0usize;

        for k in 0..n {
            let ku = k as u32;
            let mut top = n;
            flag[k] = ku;
            // Row pattern of L(k, :) in topological etree order.
            for p in self.col_ptr[k]..self.col_ptr[k + 1] {
                let entry_row = self.row_idx[p] as usize;
                y[entry_row] += self.values[p];
                let mut len = 0usize;
                let mut i = entry_row;
                while flag[i] != ku {
                    pattern[len] = i as u32;
                    len += 1;
                    flag[i] = ku;
                    i = self.parent[i];
                }
                while len > 0 {
                    len -= 1;
                    top -= 1;
                    pattern[top] = pattern[len];
                }
            }
            // Sparse triangular solve against the rows found above.  `mag`
            // accumulates the magnitudes entering dk; a computed pivot below
            // the roundoff of its own row has no trustworthy sign.
            let mut dk = self.pdiag[k] - shift;
            let mut mag = dk.abs();
            for t in top..n {
                let i = pattern[t] as usize;
                let yi = y[i];
                y[i] = 0.0;
                let pend = self.l_ptr[i] + lnz[i];
                for p in self.l_ptr[i]..pend {
                    y[l_idx[p] as usize] -= l_val[p] * yi;
                }
                let lki = yi / d[i];
                let update = lki * yi;
                dk -= update;
                mag += update.abs();
                l_idx[pend] = ku;
                l_val[pend] = lki;
                lnz[i] += 1;
            }
            let terms = (n - top + 2) as f64;
            let band = (PIVOT_ERROR_FACTOR * terms * f64::EPSILON * mag).max(zero_band);
            if dk < -band {
                negative += 1;
            } else if dk <= band {
                return FactorStatus::ZeroPivot { column: k };
            }
            d[k] = dk;
        }

        FactorStatus::Completed(NumericFactor {
            negative,
            d,
            l_idx,
            l_val,
        })
    }
}

/// Eigenvalue counter for one operator, reusable across energies.
pub struct InertiaSolver {
    op: SparseSymmetricOperator,
    plan: SymbolicPlan,
    /// Built on first use; RCM when the primary ordering came from a hint,
    /// natural order when the primary already was RCM.
    fallback: OnceLock<SymbolicPlan>,
    fallback_is_rcm: bool,
}

impl InertiaSolver {
    /// Uses the operator's elimination hint when present, otherwise reverse
    /// Cuthill-McKee on the pattern.
    pub fn new(op: &SparseSymmetricOperator) -> Result<Self> {
        let (perm, hinted) = match op.elimination_hint() {
            Some(hint) => (hint.to_vec(), true),
            None => (super::ordering::rcm_order(op), false),
        };
        Ok(Self {
            op: op.clone(),
            plan: SymbolicPlan::build(op, perm)?,
            fallback: OnceLock::new(),
            fallback_is_rcm: hinted,
        })
    }

    pub fn with_order(op: &SparseSymmetricOperator, perm: Vec<u32>) -> Result<Self> {
        Ok(Self {
            op: op.clone(),
            plan: SymbolicPlan::build(op, perm)?,
            fallback: OnceLock::new(),
            fallback_is_rcm: true,
        })
    }

    fn fallback_plan(&self) -> Result<&SymbolicPlan> {
        if let Some(plan) = self.fallback.get() {
            return Ok(plan);
        }
        let order = if self.fallback_is_rcm {
            super::ordering::rcm_order(&self.op)
        } else {
            (0..self.op.n() as u32).collect()
        };
        let plan = SymbolicPlan::build(&self.op, order)?;
        Ok(self.fallback.get_or_init(|| plan))
    }

    /// Number of eigenvalues <= `energy`.
    ///
    /// Factors A - energy * I and counts negative pivots.  An uncertifiable
    /// pivot signals an eigenvalue at (or cancellation near) the shift;
    /// retries run a deterministic rung ladder of right-nudged shifts with
    /// offsets SHIFT_STEP_REL * max(1, |energy|) * 2^a, trying both
    /// elimination orderings per rung, so eigenvalues sitting exactly at
    /// `energy` land on the counted side.  A query within roundoff of a
    /// high-multiplicity eigenvalue escalates until the factorization error
    /// (which grows like eps/distance) is beaten; eigenvalues inside the
    /// final nudge window above `energy` are then indistinguishable from
    /// ones at `energy`.  Exhaustion reports every attempted shift.
    pub fn count_below(&self, energy: f64) -> Result<usize> {
        if !energy.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "energy must be finite, got {energy}"
            )));
        }
        let step = SHIFT_STEP_REL * energy.abs().max(1.0);
        let mut shifts = Vec::with_capacity(MAX_SHIFT_ATTEMPTS);
        for rung in 0..MAX_SHIFT_ATTEMPTS {
            let offset = if rung == 0 {
                0.0
            } else {
                step * (1u64 << (rung - 1)) as f64
            };
            let shift = energy + offset;
            shifts.push(shift);
            if let FactorStatus::Completed(f) = self.plan.factor(shift) {
                return Ok(f.negative);
            }
            if let FactorStatus::Completed(f) = self.fallback_plan()?.factor(shift) {
                return Ok(f.negative);
            }
        }
        Err(Error::FactorizationBreakdown {
            attempts: MAX_SHIFT_ATTEMPTS,
            shifts,
        })
    }
}

/// A retained factorization of A - shift * I for repeated solves.
pub struct ShiftedFactor {
    plan: SymbolicPlan,
    numeric: NumericFactor,
    pub shift: f64,
}

impl ShiftedFactor {
    /// Factor A - shift * I keeping L and D.  A zero pivot is an error here
    /// (the shift was supposed to be safely off the spectrum).
    pub fn new(op: &SparseSymmetricOperator, shift: f64) -> Result<Self> {
        let perm = match op.elimination_hint() {
            Some(hint) => hint.to_vec(),
            None => super::ordering::rcm_order(op),
        };
        let plan = SymbolicPlan::build(op, perm)?;
        match plan.factor(shift) {
            FactorStatus::Completed(numeric) => Ok(Self {
                plan,
                numeric,
                shift,
            }),
            FactorStatus::ZeroPivot { .. } => Err(Error::FactorizationBreakdown {
                attempts: 1,
                shifts: vec![shift],
            }),
        }
    }

    pub fn negative_pivots(&self) -> usize {
        self.numeric.negative
    }

    /// Solve (A - shift * I) x = b.
    pub fn solve(&self, b: &[f64]) -> Result<Vec<f64>> {
        let n = self.plan.n;
        if b.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "rhs length {} vs dimension {n}",
                b.len()
            )));
        }
        let mut x = vec![0.0; n];
        for v in 0..n {
            x[self.plan.newpos[v] as usize] = b[v];
        }
        let lp = &self.plan.l_ptr;
        let (li, lv) = (&self.numeric.l_idx, &self.numeric.l_val);
        for i in 0..n {
            let xi = x[i];
            if xi != 0.0 {
                for p in lp[i]..lp[i + 1] {
                    x[li[p] as usize] -= lv[p] * xi;
                }
            }
        }
        for i in 0..n {
            x[i] /= self.numeric.d[i];
        }
        for i in (0..n).rev() {
            let mut xi = x[i];
            for p in lp[i]..lp[i + 1] {
                xi -= lv[p] * x[li[p] as usize];
            }
            x[i] = xi;
        }
        let mut out = vec![0.0; n];
        for v in 0..n {
            out[v] = x[self.plan.newpos[v] as usize];
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{sample_configuration, BoxGeometry, Topology};
    use crate::operators::{assemble_laplacian, BoundaryCondition, RestrictionScheme};

    fn dense_count(op: &SparseSymmetricOperator, energy: f64) -> usize {
        op.dense()
            .symmetric_eigen()
            .eigenvalues
            .iter()
            .filter(|&&l| l <= energy)
            .count()
    }

    #[test]
    fn inertia_matches_dense_counts_off_spectrum() {
        let g = BoxGeometry::new(2, 10, Topology::Periodic).unwrap();
        let c = sample_configuration(g, 0.55, 3).unwrap();
        for bc in [
            BoundaryCondition::Neumann,
            BoundaryCondition::PseudoDirichlet,
            BoundaryCondition::Dirichlet,
        ] {
            let op = assemble_laplacian(&c, bc, RestrictionScheme::GraphRestriction).unwrap();
            let solver = InertiaSolver::new(&op).unwrap();
            // Irrational-offset energies cannot collide with eigenvalues of
            // an integer matrix.
            for j in 0..50 {
                let e = -0.5 + 9.0 * (j as f64) / 49.0 + std::f64::consts::SQRT_2 * 1e-3;
                assert_eq!(
                    solver.count_below(e).unwrap(),
                    dense_count(&op, e),
                    "bc {bc} energy {e}"
                );
            }
            assert_eq!(solver.count_below(-1.0).unwrap(), 0);
            assert_eq!(solver.count_below(9.0).unwrap(), op.n());
        }
    }

    #[test]
    fn exact_eigenvalue_shifts_are_counted_on_the_left() {
        // Dimer + two isolated vertices: Neumann spectrum {0, 0, 0, 2}.
        let g = BoxGeometry::new(2, 2, Topology::Free).unwrap();
        let mut c = sample_configuration(g, 0.0, 0).unwrap();
        let idx = g.edges().iter().position(|e| e.endpoints() == (0, 1)).unwrap();
        c.set_open(idx, true);
        let op = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction)
            .unwrap();
        let solver = InertiaSolver::new(&op).unwrap();
        assert_eq!(solver.count_below(-1e-9).unwrap(), 0);
        assert_eq!(solver.count_below(0.0).unwrap(), 3);
        assert_eq!(solver.count_below(1e-9).unwrap(), 3);
        assert_eq!(solver.count_below(2.0 - 1e-9).unwrap(), 3);
        assert_eq!(solver.count_below(2.0).unwrap(), 4);
        assert_eq!(solver.count_below(2.0 + 1e-9).unwrap(), 4);
    }

    #[test]
    fn counts_are_ordering_independent() {
        let g = BoxGeometry::new(2, 8, Topology::Periodic).unwrap();
        let c = sample_configuration(g, 0.6, 11).unwrap();
        let op = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction)
            .unwrap();
        let hinted = InertiaSolver::new(&op).unwrap();
        let rcm = InertiaSolver::with_order(&op, super::super::ordering::rcm_order(&op)).unwrap();
        let identity = InertiaSolver::with_order(&op, (0..op.n() as u32).collect()).unwrap();
        for j in 0..20 {
            let e = 8.0 * (j as f64 + 0.5) / 20.0 + 1e-4 * std::f64::consts::E;
            let a = hinted.count_below(e).unwrap();
            assert_eq!(a, rcm.count_below(e).unwrap());
            assert_eq!(a, identity.count_below(e).unwrap());
        }
    }

    #[test]
    fn chain_counts_match_cosine_eigenvalues() {
        // Neumann chain of length L: eigenvalues 2 - 2 cos(pi m / L).
        let l = 12;
        let g = BoxGeometry::new(1, l, Topology::Free).unwrap();
        let c = crate::lattice::Configuration::fully_open(g);
        let op = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction)
            .unwrap();
        let solver = InertiaSolver::new(&op).unwrap();
        for m in 0..l {
            // Midpoint between consecutive eigenvalues.
            let here = 2.0 - 2.0 * (std::f64::consts::PI * m as f64 / l as f64).cos();
            let next = if m + 1 < l {
                2.0 - 2.0 * (std::f64::consts::PI * (m + 1) as f64 / l as f64).cos()
            } else {
                4.0
            };
            let mid = 0.5 * (here + next);
            assert_eq!(solver.count_below(mid).unwrap(), m + 1);
        }
    }

    #[test]
    fn shifted_solver_inverts_the_operator() {
        let g = BoxGeometry::new(2, 9, Topology::Free).unwrap();
        let c = sample_configuration(g, 0.5, 21).unwrap();
        let op = assemble_laplacian(&c, BoundaryCondition::PseudoDirichlet, RestrictionScheme::GraphRestriction)
            .unwrap();
        let shift = -0.7;
        let factor = ShiftedFactor::new(&op, shift).unwrap();
        assert_eq!(factor.negative_pivots(), 0);
        let mut rng = crate::rng::stream(4);
        use rand::Rng;
        for _ in 0..5 {
            let b: Vec<f64> = (0..op.n()).map(|_| rng.random::<f64>() - 0.5).collect();
            let x = factor.solve(&b).unwrap();
            let ax = op.apply(&x).unwrap();
            for v in 0..op.n() {
                let lhs = ax[v] - shift * x[v];
                assert!((lhs - b[v]).abs() < 1e-9, "residual {} at {v}", lhs - b[v]);
            }
        }
    }

    #[test]
    fn zero_matrix_is_rescued_by_the_shift_ladder() {
        // All eigenvalues sit exactly at 0; the first nudge moves the shift
        // off the spectrum and counts them on the left.
        let op = SparseSymmetricOperator::from_parts(3, 4, vec![0.0; 3], vec![]).unwrap();
        let solver = InertiaSolver::new(&op).unwrap();
        assert_eq!(solver.count_below(0.0).unwrap(), 3);
        assert_eq!(solver.count_below(-1e-6).unwrap(), 0);
    }

    #[test]
    fn integer_energies_on_star_heavy_graphs_match_dense_counts() {
        // Supercritical configurations grow pendant stars, putting exact
        // integer eigenvalues (1 with high multiplicity among them) into the
        // spectrum.  Under the dissection ordering those shifts cancel
        // catastrophically; the retry ladder must still deliver the exact
        // count.
        let g = BoxGeometry::new(2, 12, Topology::Periodic).unwrap();
        for i in 0..4u64 {
            let c = sample_configuration(g, 0.65, crate::rng::derive_seed(3, i)).unwrap();
            let op = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction)
                .unwrap();
            let solver = InertiaSolver::new(&op).unwrap();
            // The dense oracle needs a guard band: eigenvalues that are
            // exactly integral in exact arithmetic come back from the dense
            // solver with ~1e-15 roundoff on either side of the energy.
            let eigs = op.dense().symmetric_eigen().eigenvalues;
            for e in [0.0, 1.0, 2.0, 3.0, 4.0] {
                let expect = eigs.iter().filter(|&&l| l <= e + 1e-9).count();
                assert_eq!(
                    solver.count_below(e).unwrap(),
                    expect,
                    "sample {i} energy {e}"
                );
            }
        }
    }

    #[test]
    fn breakdown_reports_attempted_shifts() {
        // Diagonal matrix with an eigenvalue on every rung of the retry
        // ladder: each nudged shift is singular again, under any ordering.
        let mut diag = vec![0.0];
        for a in 0..MAX_SHIFT_ATTEMPTS - 1 {
            diag.push(SHIFT_STEP_REL * (1u64 << a) as f64);
        }
        let op = SparseSymmetricOperator::from_parts(diag.len(), 4, diag, vec![]).unwrap();
        let solver = InertiaSolver::new(&op).unwrap();
        match solver.count_below(0.0) {
            Err(Error::FactorizationBreakdown { attempts, shifts }) => {
                assert_eq!(attempts, MAX_SHIFT_ATTEMPTS);
                assert_eq!(shifts.len(), MAX_SHIFT_ATTEMPTS);
                assert_eq!(shifts[0], 0.0);
                assert!(shifts.windows(2).all(|w| w[1] > w[0]));
            }
            other => panic!("expected breakdown, got {other:?}"),
        }
    }
}
