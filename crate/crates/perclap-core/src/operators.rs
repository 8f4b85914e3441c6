//! Finite-volume Laplacians of bond-percolation graphs.
//!
//! Three boundary conditions at non-fully-connected vertices, assembled from
//! a configuration under one of two restriction schemes:
//!
//! * `graph_restriction`: keep in-box vertices and open in-box edges; the
//!   degree operator counts open in-box edges.  Neumann is `D - A`,
//!   Pseudo-Dirichlet `2d*I - A`, Dirichlet `4d*I - D - A`.
//! * `neumann_boundary`: the Pseudo-Dirichlet restriction with Neumann
//!   conditions along the box boundary: diagonal `2d - b(x)` with `b` the
//!   number of lattice edges leaving the box at `x`, off-diagonal -1 on open
//!   in-box edges.
//!
//! All entries are small integers (plus the affine perturbation parameter),
//! so assembly is exact in floating point.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{BoxGeometry, Configuration, Topology};

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryCondition {
    Neumann,
    PseudoDirichlet,
    Dirichlet,
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            BoundaryCondition::Neumann => write!(f, "neumann"),
            BoundaryCondition::PseudoDirichlet => write!(f, "pseudo_dirichlet"),
            BoundaryCondition::Dirichlet => write!(f, "dirichlet"),
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictionScheme {
    GraphRestriction,
    NeumannBoundary,
}

impl std::fmt::Display for RestrictionScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RestrictionScheme::GraphRestriction => write!(f, "graph_restriction"),
            RestrictionScheme::NeumannBoundary => write!(f, "neumann_boundary"),
        }
    }
}

/// One strictly-upper-triangular entry.
#[derive(Clone, Copy, PartialEq, Debug)]
pub struct OffDiagonal {
    pub i: u32,
    pub j: u32,
    pub value: f64,
}

/// A real symmetric matrix stored as a diagonal plus the strictly upper
/// triangle, entries sorted lexicographically by (i, j).  `coordination`
/// records 2d of the lattice the operator came from; the heat semigroup and
/// the spectral-range checks need it.  `elimination_hint` optionally carries
/// a fill-reducing elimination order (position -> vertex) computed from the
/// box geometry at assembly time; factorizations fall back to a
/// pattern-based ordering when it is absent, so it never affects results,
/// only speed.
#[derive(Clone, PartialEq, Debug)]
pub struct SparseSymmetricOperator {
    n: usize,
    coordination: usize,
    diag: Vec<f64>,
    off: Vec<OffDiagonal>,
    elimination_hint: Option<Vec<u32>>,
}

impl SparseSymmetricOperator {
    pub fn from_parts(
        n: usize,
        coordination: usize,
        diag: Vec<f64>,
        mut off: Vec<OffDiagonal>,
    ) -> Result<Self> {
        if diag.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "diagonal has {} entries for dimension {n}",
                diag.len()
            )));
        }
        if diag.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter("non-finite diagonal entry".into()));
        }
        for e in &off {
            if e.i >= e.j || (e.j as usize) >= n {
                return Err(Error::InvalidParameter(format!(
                    "off-diagonal entry ({}, {}) out of the strict upper triangle of dimension {n}",
                    e.i, e.j
                )));
            }
            if !e.value.is_finite() {
                return Err(Error::InvalidParameter("non-finite off-diagonal".into()));
            }
        }
        off.sort_by_key(|e| (e.i, e.j));
        if off.windows(2).any(|w| (w[0].i, w[0].j) == (w[1].i, w[1].j)) {
            return Err(Error::InvalidParameter(
                "duplicate off-diagonal position".into(),
            ));
        }
        Ok(Self {
            n,
            coordination,
            diag,
            off,
            elimination_hint: None,
        })
    }

    /// Attach a fill-reducing elimination order (position -> index, a
    /// permutation of 0..n).
    pub fn with_elimination_hint(mut self, hint: Vec<u32>) -> Result<Self> {
        if hint.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "hint length {} vs dimension {}",
                hint.len(),
                self.n
            )));
        }
        let mut seen = vec![false; self.n];
        for &v in &hint {
            if (v as usize) >= self.n || seen[v as usize] {
                return Err(Error::InvalidParameter(
                    "elimination hint is not a permutation".into(),
                ));
            }
            seen[v as usize] = true;
        }
        self.elimination_hint = Some(hint);
        Ok(self)
    }

    pub fn elimination_hint(&self) -> Option<&[u32]> {
        self.elimination_hint.as_deref()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// 2d of the originating lattice; the upper spectral edge is twice this.
    pub fn coordination(&self) -> usize {
        self.coordination
    }

    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diagonal(&self) -> &[OffDiagonal] {
        &self.off
    }

    pub fn nnz(&self) -> usize {
        self.n + 2 * self.off.len()
    }

    /// y = M x.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} vs operator dimension {}",
                x.len(),
                self.n
            )));
        }
        let mut y: Vec<f64> = self
            .diag
            .iter()
            .zip(x.iter())
            .map(|(d, xi)| d * xi)
            .collect();
        for e in &self.off {
            let (i, j) = (e.i as usize, e.j as usize);
            y[i] += e.value * x[j];
            y[j] += e.value * x[i];
        }
        Ok(y)
    }

    /// x . M x without materializing M x.
    pub fn quadratic_form(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "vector length {} vs operator dimension {}",
                x.len(),
                self.n
            )));
        }
        let mut q = 0.0;
        for (d, xi) in self.diag.iter().zip(x.iter()) {
            q += d * xi * xi;
        }
        for e in &self.off {
            q += 2.0 * e.value * x[e.i as usize] * x[e.j as usize];
        }
        Ok(q)
    }

    /// Row-sum norm; cheap upper bound for the spectral radius.
    pub fn infinity_norm(&self) -> f64 {
        let mut row: Vec<f64> = self.diag.iter().map(|d| d.abs()).collect();
        for e in &self.off {
            row[e.i as usize] += e.value.abs();
            row[e.j as usize] += e.value.abs();
        }
        row.into_iter().fold(0.0, f64::max)
    }

    pub fn dense(&self) -> nalgebra::DMatrix<f64> {
        let mut m = nalgebra::DMatrix::zeros(self.n, self.n);
        for (i, d) in self.diag.iter().enumerate() {
            m[(i, i)] = *d;
        }
        for e in &self.off {
            m[(e.i as usize, e.j as usize)] = e.value;
            m[(e.j as usize, e.i as usize)] = e.value;
        }
        m
    }

    /// Largest absolute entrywise difference, treating absent entries as 0.
    pub fn entrywise_distance(&self, other: &Self) -> Result<f64> {
        if self.n != other.n {
            return Err(Error::DimensionMismatch(format!(
                "dimensions {} vs {}",
                self.n, other.n
            )));
        }
        let mut worst = 0.0f64;
        for (a, b) in self.diag.iter().zip(other.diag.iter()) {
            worst = worst.max((a - b).abs());
        }
        let (mut ia, mut ib) = (0usize, 0usize);
        while ia < self.off.len() || ib < other.off.len() {
            let ka = self.off.get(ia).map(|e| (e.i, e.j));
            let kb = other.off.get(ib).map(|e| (e.i, e.j));
            match (ka, kb) {
                (Some(a), Some(b)) if a == b => {
                    worst = worst.max((self.off[ia].value - other.off[ib].value).abs());
                    ia += 1;
                    ib += 1;
                }
                (Some(a), Some(b)) if a < b => {
                    worst = worst.max(self.off[ia].value.abs());
                    ia += 1;
                }
                (Some(_), Some(_)) => {
                    worst = worst.max(other.off[ib].value.abs());
                    ib += 1;
                }
                (Some(_), None) => {
                    worst = worst.max(self.off[ia].value.abs());
                    ia += 1;
                }
                (None, Some(_)) => {
                    worst = worst.max(other.off[ib].value.abs());
                    ib += 1;
                }
                (None, None) => unreachable!(),
            }
        }
        Ok(worst)
    }

    /// Principal submatrix on `vertices` (sorted, distinct indices).  Row k
    /// of the result is row vertices[k] of `self`; entries with either
    /// endpoint outside the set are dropped.  When `vertices` is a union of
    /// connected components of the off-diagonal graph this is an exact
    /// direct summand.  An elimination hint is restricted along.
    pub fn restriction_to(&self, vertices: &[usize]) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidParameter(
                "restriction to an empty vertex set".into(),
            ));
        }
        if vertices.windows(2).any(|w| w[0] >= w[1]) || *vertices.last().unwrap() >= self.n {
            return Err(Error::InvalidParameter(
                "restriction vertices must be strictly increasing and in range".into(),
            ));
        }
        let mut map = vec![u32::MAX; self.n];
        for (new, &v) in vertices.iter().enumerate() {
            map[v] = new as u32;
        }
        let diag = vertices.iter().map(|&v| self.diag[v]).collect();
        let off = self
            .off
            .iter()
            .filter(|e| map[e.i as usize] != u32::MAX && map[e.j as usize] != u32::MAX)
            .map(|e| OffDiagonal {
                i: map[e.i as usize],
                j: map[e.j as usize],
                value: e.value,
            })
            .collect();
        let sub = Self::from_parts(vertices.len(), self.coordination, diag, off)?;
        match &self.elimination_hint {
            Some(hint) => {
                let induced: Vec<u32> = hint
                    .iter()
                    .filter(|&&v| map[v as usize] != u32::MAX)
                    .map(|&v| map[v as usize])
                    .collect();
                sub.with_elimination_hint(induced)
            }
            None => Ok(sub),
        }
    }

    /// Coordinate-triplet text: a version line, then one "i j value" per
    /// stored entry (diagonal first per row, then its upper off-diagonals);
    /// the lower triangle is implied by symmetry.
    pub fn to_triplets(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "# perclap-operator v1 symmetric-upper n={} coordination={}\n",
            self.n, self.coordination
        ));
        let mut by_row: Vec<Vec<&OffDiagonal>> = vec![Vec::new(); self.n];
        for e in &self.off {
            by_row[e.i as usize].push(e);
        }
        for i in 0..self.n {
            out.push_str(&format!("{} {} {}\n", i, i, self.diag[i]));
            for e in &by_row[i] {
                out.push_str(&format!("{} {} {}\n", e.i, e.j, e.value));
            }
        }
        out
    }
}

fn open_degrees(config: &Configuration) -> Vec<f64> {
    let n = config.geometry().vertices();
    let mut deg = vec![0.0; n];
    for (idx, e) in config.geometry().edges().iter().enumerate() {
        if config.is_open(idx) {
            deg[e.a] += 1.0;
            deg[e.b] += 1.0;
        }
    }
    deg
}

fn open_off_diagonals(config: &Configuration) -> Vec<OffDiagonal> {
    let mut off = Vec::with_capacity(config.open_count());
    for (idx, e) in config.geometry().edges().iter().enumerate() {
        if config.is_open(idx) {
            let (i, j) = e.endpoints();
            off.push(OffDiagonal {
                i: i as u32,
                j: j as u32,
                value: -1.0,
            });
        }
    }
    off
}

/// Assemble the Laplacian of `config` for the given boundary condition and
/// restriction scheme.
pub fn assemble_laplacian(
    config: &Configuration,
    bc: BoundaryCondition,
    scheme: RestrictionScheme,
) -> Result<SparseSymmetricOperator> {
    let geom = config.geometry();
    let n = geom.vertices();
    let two_d = geom.coordination() as f64;
    let diag = match scheme {
        RestrictionScheme::GraphRestriction => {
            let deg = open_degrees(config);
            match bc {
                BoundaryCondition::Neumann => deg,
                BoundaryCondition::PseudoDirichlet => vec![two_d; n],
                BoundaryCondition::Dirichlet => deg.iter().map(|d| 2.0 * two_d - d).collect(),
            }
        }
        RestrictionScheme::NeumannBoundary => {
            if bc != BoundaryCondition::PseudoDirichlet {
                return Err(Error::IncompatibleScheme {
                    bc: bc.to_string(),
                    scheme: scheme.to_string(),
                });
            }
            (0..n)
                .map(|v| two_d - geom.boundary_degree(v) as f64)
                .collect()
        }
    };
    SparseSymmetricOperator::from_parts(n, geom.coordination(), diag, open_off_diagonals(config))?
        .with_elimination_hint(crate::spectral::ordering::dissection_order(geom))
}

/// Neumann Laplacian of the fully connected free box: the unperturbed
/// operator of the eigenvalue-perturbation argument.  Row sums vanish and
/// the constant vector is the ground state.
pub fn full_cube_operator(geometry: BoxGeometry) -> Result<SparseSymmetricOperator> {
    if geometry.topology() != Topology::Free {
        return Err(Error::InvalidParameter(
            "the fully connected cube operator is defined on free boxes".into(),
        ));
    }
    let config = Configuration::fully_open(geometry);
    assemble_laplacian(
        &config,
        BoundaryCondition::PseudoDirichlet,
        RestrictionScheme::NeumannBoundary,
    )
}

/// The interpolating family H(t) = H0 + t W on a free box, where H0 is the
/// fully connected cube operator and W has a +1 entry at each closed in-box
/// edge.  H(0) = H0 and H(1) is the neumann_boundary assembly of `config`;
/// every entry is affine in t.
pub fn perturbation_family(config: &Configuration, t: f64) -> Result<SparseSymmetricOperator> {
    let geom = config.geometry();
    if geom.topology() != Topology::Free {
        return Err(Error::InvalidParameter(
            "the perturbation family is defined on free boxes".into(),
        ));
    }
    if !(0.0..=1.0).contains(&t) {
        return Err(Error::InvalidParameter(format!(
            "perturbation parameter must lie in [0, 1], got {t}"
        )));
    }
    let n = geom.vertices();
    let two_d = geom.coordination() as f64;
    let diag = (0..n)
        .map(|v| two_d - geom.boundary_degree(v) as f64)
        .collect();
    let mut off = Vec::with_capacity(geom.edge_count());
    for (idx, e) in geom.edges().iter().enumerate() {
        let value = if config.is_open(idx) { -1.0 } else { t - 1.0 };
        if value != 0.0 {
            let (i, j) = e.endpoints();
            off.push(OffDiagonal {
                i: i as u32,
                j: j as u32,
                value,
            });
        }
    }
    SparseSymmetricOperator::from_parts(n, geom.coordination(), diag, off)?
        .with_elimination_hint(crate::spectral::ordering::dissection_order(geom))
}

/// Derivative at t = 0 of the smallest eigenvalue of the perturbation
/// family: the ground state of H0 is constant, so the slope is the mean of
/// W, which counts closed edges: 2 * (closed in-box edges) / |box|.
pub fn slope_at_zero(config: &Configuration) -> Result<f64> {
    if config.geometry().topology() != Topology::Free {
        return Err(Error::InvalidParameter(
            "the eigenvalue slope is defined on free boxes".into(),
        ));
    }
    Ok(2.0 * config.closed_count() as f64 / config.geometry().vertices() as f64)
}

/// Signs (-1)^(sum of coordinates) of each vertex.  On periodic boxes the
/// side must be even, otherwise the parity is inconsistent across the wrap.
pub fn checkerboard_signs(geometry: &BoxGeometry) -> Result<Vec<f64>> {
    if geometry.topology() == Topology::Periodic && geometry.side() >= 2 && geometry.side() % 2 != 0
    {
        return Err(Error::InvalidParameter(format!(
            "checkerboard conjugation on a torus needs an even side, got {}",
            geometry.side()
        )));
    }
    Ok((0..geometry.vertices())
        .map(|v| {
            let parity: usize = geometry.coords(v).iter().sum();
            if parity % 2 == 0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect())
}

/// Conjugate `op` by the diagonal unitary of checkerboard signs: entries
/// (i, j) pick up the factor sign(i) * sign(j); the diagonal is unchanged.
pub fn involution_conjugate(
    geometry: &BoxGeometry,
    op: &SparseSymmetricOperator,
) -> Result<SparseSymmetricOperator> {
    if op.n() != geometry.vertices() {
        return Err(Error::DimensionMismatch(format!(
            "operator dimension {} vs box volume {}",
            op.n(),
            geometry.vertices()
        )));
    }
    let signs = checkerboard_signs(geometry)?;
    let off = op
        .off_diagonal()
        .iter()
        .map(|e| OffDiagonal {
            i: e.i,
            j: e.j,
            value: e.value * signs[e.i as usize] * signs[e.j as usize],
        })
        .collect();
    let conj =
        SparseSymmetricOperator::from_parts(op.n(), op.coordination(), op.diag().to_vec(), off)?;
    match op.elimination_hint() {
        Some(hint) => conj.with_elimination_hint(hint.to_vec()),
        None => Ok(conj),
    }
}

/// Largest absolute entry of U a U + b - (2 * coordination) * I.  Zero iff
/// the checkerboard conjugation maps `a` exactly onto the reflection of `b`
/// through the middle of the spectral interval.
pub fn involution_dual_residual(
    geometry: &BoxGeometry,
    a: &SparseSymmetricOperator,
    b: &SparseSymmetricOperator,
) -> Result<f64> {
    let conj = involution_conjugate(geometry, a)?;
    let four_d = 2.0 * geometry.coordination() as f64;
    // The mirror of b through the middle of the spectral interval:
    // diagonal 4d - diag(b), off-diagonal -b.
    let mirror = SparseSymmetricOperator::from_parts(
        b.n(),
        b.coordination(),
        b.diag().iter().map(|v| four_d - v).collect(),
        b.off_diagonal()
            .iter()
            .map(|e| OffDiagonal {
                i: e.i,
                j: e.j,
                value: -e.value,
            })
            .collect(),
    )?;
    conj.entrywise_distance(&mirror)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::{sample_configuration, BoxGeometry, Topology};

    fn dimer_config() -> Configuration {
        // 2x2 free box in d=2 with exactly the edge {0,1} open.
        let g = BoxGeometry::new(2, 2, Topology::Free).unwrap();
        let mut c = sample_configuration(g, 0.0, 0).unwrap();
        let idx = g
            .edges()
            .iter()
            .position(|e| e.endpoints() == (0, 1))
            .unwrap();
        c.set_open(idx, true);
        c
    }

    fn sorted_eigenvalues(op: &SparseSymmetricOperator) -> Vec<f64> {
        let mut ev: Vec<f64> = op.dense().symmetric_eigen().eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        ev
    }

    fn assert_close(actual: &[f64], expect: &[f64], tol: f64) {
        assert_eq!(actual.len(), expect.len());
        for (a, e) in actual.iter().zip(expect) {
            assert!((a - e).abs() < tol, "{actual:?} vs {expect:?}");
        }
    }

    #[test]
    fn empty_configuration_rows() {
        let g = BoxGeometry::new(2, 2, Topology::Free).unwrap();
        let c = sample_configuration(g, 0.0, 0).unwrap();
        let n = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction).unwrap();
        assert!(n.diag().iter().all(|&v| v == 0.0));
        assert!(n.off_diagonal().is_empty());
        let dt = assemble_laplacian(&c, BoundaryCondition::PseudoDirichlet, RestrictionScheme::GraphRestriction).unwrap();
        assert!(dt.diag().iter().all(|&v| v == 4.0));
        let d = assemble_laplacian(&c, BoundaryCondition::Dirichlet, RestrictionScheme::GraphRestriction).unwrap();
        assert!(d.diag().iter().all(|&v| v == 8.0));
    }

    #[test]
    fn dimer_spectra_match_closed_forms() {
        let c = dimer_config();
        let n = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction).unwrap();
        assert_close(&sorted_eigenvalues(&n), &[0.0, 0.0, 0.0, 2.0], 1e-12);
        let dt = assemble_laplacian(&c, BoundaryCondition::PseudoDirichlet, RestrictionScheme::GraphRestriction).unwrap();
        assert_close(&sorted_eigenvalues(&dt), &[3.0, 4.0, 4.0, 5.0], 1e-12);
        let d = assemble_laplacian(&c, BoundaryCondition::Dirichlet, RestrictionScheme::GraphRestriction).unwrap();
        assert_close(&sorted_eigenvalues(&d), &[6.0, 8.0, 8.0, 8.0], 1e-12);
    }

    #[test]
    fn full_lattice_operators_coincide() {
        let g = BoxGeometry::new(2, 8, Topology::Periodic).unwrap();
        let c = Configuration::fully_open(g);
        let n = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction).unwrap();
        let dt = assemble_laplacian(&c, BoundaryCondition::PseudoDirichlet, RestrictionScheme::GraphRestriction).unwrap();
        let d = assemble_laplacian(&c, BoundaryCondition::Dirichlet, RestrictionScheme::GraphRestriction).unwrap();
        assert_eq!(n.entrywise_distance(&dt).unwrap(), 0.0);
        assert_eq!(n.entrywise_distance(&d).unwrap(), 0.0);
    }

    #[test]
    fn scheme_compatibility_is_enforced() {
        let g = BoxGeometry::new(2, 3, Topology::Free).unwrap();
        let c = sample_configuration(g, 0.5, 1).unwrap();
        assert!(assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::NeumannBoundary).is_err());
        assert!(assemble_laplacian(&c, BoundaryCondition::Dirichlet, RestrictionScheme::NeumannBoundary).is_err());
        assert!(assemble_laplacian(&c, BoundaryCondition::PseudoDirichlet, RestrictionScheme::NeumannBoundary).is_ok());
    }

    #[test]
    fn full_cube_is_the_two_point_neumann_matrix() {
        let g = BoxGeometry::new(1, 2, Topology::Free).unwrap();
        let h0 = full_cube_operator(g).unwrap();
        let m = h0.dense();
        assert_eq!(m[(0, 0)], 1.0);
        assert_eq!(m[(1, 1)], 1.0);
        assert_eq!(m[(0, 1)], -1.0);
        assert_close(&sorted_eigenvalues(&h0), &[0.0, 2.0], 1e-12);
    }

    #[test]
    fn full_cube_rows_sum_to_zero() {
        for (d, l) in [(1, 5), (2, 4), (3, 3)] {
            let g = BoxGeometry::new(d, l, Topology::Free).unwrap();
            let h0 = full_cube_operator(g).unwrap();
            let ones = vec![1.0; g.vertices()];
            let y = h0.apply(&ones).unwrap();
            assert!(y.iter().all(|&v| v.abs() < 1e-12), "d={d} L={l}");
        }
    }

    #[test]
    fn full_cube_matches_all_open_neumann_boundary_assembly() {
        let g = BoxGeometry::new(2, 4, Topology::Free).unwrap();
        let h0 = full_cube_operator(g).unwrap();
        let via_assembly = assemble_laplacian(
            &Configuration::fully_open(g),
            BoundaryCondition::PseudoDirichlet,
            RestrictionScheme::NeumannBoundary,
        )
        .unwrap();
        assert_eq!(h0.entrywise_distance(&via_assembly).unwrap(), 0.0);
    }

    #[test]
    fn perturbation_family_is_affine() {
        let g = BoxGeometry::new(2, 4, Topology::Free).unwrap();
        let c = sample_configuration(g, 0.5, 3).unwrap();
        let h0 = perturbation_family(&c, 0.0).unwrap();
        assert_eq!(h0.entrywise_distance(&full_cube_operator(g).unwrap()).unwrap(), 0.0);
        let h1 = perturbation_family(&c, 1.0).unwrap();
        let direct = assemble_laplacian(&c, BoundaryCondition::PseudoDirichlet, RestrictionScheme::NeumannBoundary).unwrap();
        assert_eq!(h1.entrywise_distance(&direct).unwrap(), 0.0);
        let mid = perturbation_family(&c, 0.5).unwrap();
        let half_sum = SparseSymmetricOperator::from_parts(
            mid.n(),
            mid.coordination(),
            h0.diag().iter().zip(h1.diag()).map(|(a, b)| 0.5 * (a + b)).collect(),
            {
                // h0 has entries on every box edge, so merging against it
                // covers the pattern of h1 as well.
                let dense0 = h0.dense();
                let dense1 = direct.dense();
                let mut off = Vec::new();
                for i in 0..mid.n() {
                    for j in (i + 1)..mid.n() {
                        let v = 0.5 * (dense0[(i, j)] + dense1[(i, j)]);
                        if v != 0.0 {
                            off.push(OffDiagonal { i: i as u32, j: j as u32, value: v });
                        }
                    }
                }
                off
            },
        )
        .unwrap();
        assert!(mid.entrywise_distance(&half_sum).unwrap() < 1e-15);
        assert!(perturbation_family(&c, -0.1).is_err());
        assert!(perturbation_family(&c, 1.1).is_err());
    }

    #[test]
    fn slope_closed_forms() {
        let g = BoxGeometry::new(2, 4, Topology::Free).unwrap();
        let all_open = Configuration::fully_open(g);
        assert_eq!(slope_at_zero(&all_open).unwrap(), 0.0);
        let all_closed = sample_configuration(g, 0.0, 0).unwrap();
        let expect = 2.0 * g.edge_count() as f64 / g.vertices() as f64;
        assert_eq!(slope_at_zero(&all_closed).unwrap(), expect);
        // Exact integer arithmetic: 2 * closed / |box| for a sampled config.
        let c = sample_configuration(g, 0.4, 9).unwrap();
        assert_eq!(
            slope_at_zero(&c).unwrap(),
            2.0 * c.closed_count() as f64 / 16.0
        );
    }

    #[test]
    fn quadratic_form_is_the_edge_sum() {
        use rand::Rng;
        let g = BoxGeometry::new(2, 5, Topology::Periodic).unwrap();
        let c = sample_configuration(g, 0.55, 11).unwrap();
        let op = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction).unwrap();
        let mut rng = crate::rng::stream(99);
        for _ in 0..10 {
            let x: Vec<f64> = (0..g.vertices()).map(|_| rng.random::<f64>() - 0.5).collect();
            let q = op.quadratic_form(&x).unwrap();
            let mut direct = 0.0;
            for (idx, e) in g.edges().iter().enumerate() {
                if c.is_open(idx) {
                    let diff = x[e.a] - x[e.b];
                    direct += diff * diff;
                }
            }
            assert!((q - direct).abs() < 1e-10 * (1.0 + q.abs()));
        }
    }

    #[test]
    fn apply_matches_dense_and_is_symmetric() {
        use rand::Rng;
        let g = BoxGeometry::new(2, 4, Topology::Free).unwrap();
        let c = sample_configuration(g, 0.6, 2).unwrap();
        let op = assemble_laplacian(&c, BoundaryCondition::Dirichlet, RestrictionScheme::GraphRestriction).unwrap();
        let m = op.dense();
        let mut rng = crate::rng::stream(5);
        for _ in 0..5 {
            let x: Vec<f64> = (0..op.n()).map(|_| rng.random::<f64>() - 0.5).collect();
            let y: Vec<f64> = (0..op.n()).map(|_| rng.random::<f64>() - 0.5).collect();
            let ax = op.apply(&x).unwrap();
            let dx = &m * nalgebra::DVector::from_column_slice(&x);
            for i in 0..op.n() {
                assert!((ax[i] - dx[i]).abs() < 1e-12);
            }
            let ay = op.apply(&y).unwrap();
            let lhs: f64 = y.iter().zip(&ax).map(|(a, b)| a * b).sum();
            let rhs: f64 = x.iter().zip(&ay).map(|(a, b)| a * b).sum();
            assert!((lhs - rhs).abs() < 1e-10);
        }
        assert!(op.apply(&[1.0]).is_err());
    }

    #[test]
    fn operator_ordering_in_quadratic_form() {
        use rand::Rng;
        let g = BoxGeometry::new(2, 5, Topology::Free).unwrap();
        let mut rng = crate::rng::stream(17);
        for seed in 0..20 {
            let c = sample_configuration(g, 0.5, seed).unwrap();
            let n = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction).unwrap();
            let dt = assemble_laplacian(&c, BoundaryCondition::PseudoDirichlet, RestrictionScheme::GraphRestriction).unwrap();
            let d = assemble_laplacian(&c, BoundaryCondition::Dirichlet, RestrictionScheme::GraphRestriction).unwrap();
            for _ in 0..20 {
                let x: Vec<f64> = (0..g.vertices()).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
                let qn = n.quadratic_form(&x).unwrap();
                let qdt = dt.quadratic_form(&x).unwrap();
                let qd = d.quadratic_form(&x).unwrap();
                assert!(qn <= qdt + 1e-12, "N <= Dt violated: {qn} vs {qdt}");
                assert!(qdt <= qd + 1e-12, "Dt <= D violated: {qdt} vs {qd}");
            }
        }
    }

    #[test]
    fn involution_maps_dirichlet_onto_mirrored_neumann() {
        for topo in [Topology::Free, Topology::Periodic] {
            let g = BoxGeometry::new(2, 4, topo).unwrap();
            for seed in 0..10 {
                let c = sample_configuration(g, 0.5, seed).unwrap();
                let n = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction).unwrap();
                let dt = assemble_laplacian(&c, BoundaryCondition::PseudoDirichlet, RestrictionScheme::GraphRestriction).unwrap();
                let d = assemble_laplacian(&c, BoundaryCondition::Dirichlet, RestrictionScheme::GraphRestriction).unwrap();
                assert_eq!(involution_dual_residual(&g, &d, &n).unwrap(), 0.0);
                assert_eq!(involution_dual_residual(&g, &n, &d).unwrap(), 0.0);
                assert_eq!(involution_dual_residual(&g, &dt, &dt).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn involution_rejects_odd_torus() {
        let g = BoxGeometry::new(2, 5, Topology::Periodic).unwrap();
        let c = Configuration::fully_open(g);
        let op = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction).unwrap();
        assert!(involution_conjugate(&g, &op).is_err());
        let free = BoxGeometry::new(2, 5, Topology::Free).unwrap();
        let cf = Configuration::fully_open(free);
        let opf = assemble_laplacian(&cf, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction).unwrap();
        assert!(involution_conjugate(&free, &opf).is_ok());
    }

    #[test]
    fn tampered_assembly_breaks_the_duality() {
        let g = BoxGeometry::new(2, 4, Topology::Free).unwrap();
        let c = sample_configuration(g, 0.5, 23).unwrap();
        let n = assemble_laplacian(&c, BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction).unwrap();
        let d = assemble_laplacian(&c, BoundaryCondition::Dirichlet, RestrictionScheme::GraphRestriction).unwrap();
        let mut diag = d.diag().to_vec();
        diag[3] += 0.5;
        let tampered =
            SparseSymmetricOperator::from_parts(d.n(), d.coordination(), diag, d.off_diagonal().to_vec())
                .unwrap();
        let residual = involution_dual_residual(&g, &tampered, &n).unwrap();
        assert!((residual - 0.5).abs() < 1e-15);
    }

    #[test]
    fn reflected_family_has_nonnegative_entries() {
        // 2d*I - H(t) must have only non-negative entries for t in [0,1]:
        // the sign structure behind the ground-state positivity argument.
        let g = BoxGeometry::new(2, 4, Topology::Free).unwrap();
        let c = sample_configuration(g, 0.45, 31).unwrap();
        for &t in &[0.0, 0.25, 0.5, 0.75, 1.0] {
            let h = perturbation_family(&c, t).unwrap();
            let two_d = g.coordination() as f64;
            for (v, &diag) in h.diag().iter().enumerate() {
                assert!(two_d - diag >= -0.0, "vertex {v}");
            }
            for e in h.off_diagonal() {
                assert!(-e.value >= 0.0, "edge ({}, {}) value {}", e.i, e.j, e.value);
            }
        }
    }

    #[test]
    fn triplet_export_roundtrips_values() {
        let c = dimer_config();
        let op = assemble_laplacian(&c, BoundaryCondition::PseudoDirichlet, RestrictionScheme::GraphRestriction).unwrap();
        let text = op.to_triplets();
        assert!(text.starts_with("# perclap-operator v1"));
        assert!(text.contains("0 1 -1\n"));
        assert!(text.contains("0 0 4\n"));
        // Every line after the header parses as "i j value".
        for line in text.lines().skip(1) {
            let parts: Vec<&str> = line.split(' ').collect();
            assert_eq!(parts.len(), 3);
            parts[0].parse::<usize>().unwrap();
            parts[1].parse::<usize>().unwrap();
            parts[2].parse::<f64>().unwrap();
        }
    }
}
