//! Monte Carlo estimation of the integrated density of states (IDS).
//!
//! For each sample a configuration is drawn from the master seed by
//! counter, its Laplacian assembled, and the normalized eigenvalue count
//! N(E) = #{eigenvalues <= E} / |box| evaluated on an energy grid through
//! LDL^T inertia.  Ensembles retain per-sample curves so that derived
//! quantities (Laplace transforms, split identities) get honest sample
//! statistics instead of error propagation through the mean curve.
//!
//! The percolating/finite split restricts the Neumann Laplacian to the
//! vertices of the wrapping (or face-to-face spanning) cluster and to its
//! complement.  Components never straddle that cut, so per sample the two
//! restricted counts add up to the full count exactly, in integers.
//! Samples without a wrapping cluster are flagged and counted as excluded;
//! they still enter ensemble means with a zero percolating part, which is
//! the annealed convention the walk estimates use as well.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterDecomposition;
use crate::error::{Error, Result};
use crate::lattice::{sample_configuration, BoxGeometry};
use crate::operators::{assemble_laplacian, BoundaryCondition, RestrictionScheme};
use crate::rng::derive_seed;
use crate::spectral::InertiaSolver;

/// Proxy offset for left limits: the value "just below" E is read at
/// E - LEFT_LIMIT_OFFSET.
pub const LEFT_LIMIT_OFFSET: f64 = 1e-9;

/// Confidence multiplier of the reported half-widths (95%).
pub const CONFIDENCE_Z: f64 = 1.96;

/// Below 5 expected hits per sample the normal interval is replaced by a
/// Wilson interval on the pooled Bernoulli trials.
pub const WILSON_THRESHOLD_HITS: f64 = 5.0;

#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IdsPart {
    Full,
    Percolating,
    Finite,
}

impl std::fmt::Display for IdsPart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            IdsPart::Full => write!(f, "full"),
            IdsPart::Percolating => write!(f, "percolating"),
            IdsPart::Finite => write!(f, "finite"),
        }
    }
}

/// An estimated IDS curve: ensemble mean and a 95% half-width per grid
/// point, normalized by box volume.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdsCurve {
    pub bc: BoundaryCondition,
    pub scheme: RestrictionScheme,
    pub geometry: BoxGeometry,
    pub p: f64,
    pub part: IdsPart,
    pub energy_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub samples: usize,
    pub master_seed: u64,
    /// Samples without a wrapping cluster (zero percolating part).  They
    /// remain in the averages.
    pub excluded_samples: usize,
}

/// A Laplace transform estimate on a time grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LaplaceCurve {
    pub t_grid: Vec<f64>,
    pub values: Vec<f64>,
    pub half_widths: Vec<f64>,
    /// How the values were obtained (quadrature rule or simulation).
    pub method: String,
    pub samples: usize,
    pub excluded_samples: usize,
}

/// Per-sample IDS curves of one ensemble.
#[derive(Clone, Debug)]
pub struct IdsEnsemble {
    pub bc: BoundaryCondition,
    pub scheme: RestrictionScheme,
    pub geometry: BoxGeometry,
    pub p: f64,
    pub part: IdsPart,
    pub energy_grid: Vec<f64>,
    /// per_sample[i][j]: normalized count of sample i at energy_grid[j].
    pub per_sample: Vec<Vec<f64>>,
    /// Samples flagged for having no wrapping cluster.
    pub excluded: Vec<bool>,
    pub master_seed: u64,
}

fn validate_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::GridMismatch("empty energy grid".into()));
    }
    if grid.iter().any(|e| !e.is_finite()) {
        return Err(Error::GridMismatch("non-finite grid point".into()));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::GridMismatch(
            "grid points must be strictly increasing".into(),
        ));
    }
    Ok(())
}

fn validate_t_grid(grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(Error::GridMismatch("empty time grid".into()));
    }
    if grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::GridMismatch(
            "time grid points must be finite and non-negative".into(),
        ));
    }
    if grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::GridMismatch(
            "time grid points must be strictly increasing".into(),
        ));
    }
    Ok(())
}

/// Wilson score half-width for `successes` out of `trials` at CONFIDENCE_Z.
fn wilson_half_width(successes: f64, trials: f64) -> f64 {
    let z = CONFIDENCE_Z;
    let phat = successes / trials;
    let denom = 1.0 + z * z / trials;
    z / denom * (phat * (1.0 - phat) / trials + z * z / (4.0 * trials * trials)).sqrt()
}

/// Mean and 95% half-width of an ensemble of proportions, each averaging
/// `trials_per_sample` indicator variables.  `deterministic` marks
/// degenerate ensembles (p = 0 or 1): point-mass measures carry zero-width
/// intervals by construction.  Otherwise values below
/// WILSON_THRESHOLD_HITS / samples, and single-sample ensembles, use the
/// pooled Wilson interval; the rest the normal interval on the sample mean.
fn proportion_interval(values: &[f64], trials_per_sample: usize, deterministic: bool) -> (f64, f64) {
    let s = values.len();
    let mean = values.iter().sum::<f64>() / s as f64;
    if deterministic {
        return (mean, 0.0);
    }
    let rare = mean < WILSON_THRESHOLD_HITS / s as f64;
    if rare || s < 2 {
        let trials = (s * trials_per_sample) as f64;
        (mean, wilson_half_width(mean * trials, trials))
    } else {
        let var = values
            .iter()
            .map(|v| (v - mean) * (v - mean))
            .sum::<f64>()
            / (s - 1) as f64;
        (mean, CONFIDENCE_Z * (var / s as f64).sqrt())
    }
}

impl IdsEnsemble {
    fn reduce(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.geometry.vertices();
        let m = self.energy_grid.len();
        let deterministic = self.p == 0.0 || self.p == 1.0;
        let mut values = Vec::with_capacity(m);
        let mut half_widths = Vec::with_capacity(m);
        let mut column = vec![0.0; self.per_sample.len()];
        for j in 0..m {
            for (i, row) in self.per_sample.iter().enumerate() {
                column[i] = row[j];
            }
            let (mean, hw) = proportion_interval(&column, n, deterministic);
            values.push(mean);
            half_widths.push(hw);
        }
        (values, half_widths)
    }

    pub fn excluded_count(&self) -> usize {
        self.excluded.iter().filter(|&&x| x).count()
    }

    pub fn curve(&self) -> IdsCurve {
        let (values, half_widths) = self.reduce();
        IdsCurve {
            bc: self.bc,
            scheme: self.scheme,
            geometry: self.geometry,
            p: self.p,
            part: self.part,
            energy_grid: self.energy_grid.clone(),
            values,
            half_widths,
            samples: self.per_sample.len(),
            master_seed: self.master_seed,
            excluded_samples: self.excluded_count(),
        }
    }

    /// Laplace transform of the ensemble: each sample's step curve is
    /// transformed separately (atom at the first grid point, midpoint rule
    /// per bin), then averaged with a normal 95% interval.
    pub fn laplace(&self, t_grid: &[f64]) -> Result<LaplaceCurve> {
        validate_t_grid(t_grid)?;
        let per_sample_l: Vec<Vec<f64>> = self
            .per_sample
            .iter()
            .map(|row| step_curve_laplace(&self.energy_grid, row, t_grid))
            .collect();
        let s = per_sample_l.len();
        let mut values = Vec::with_capacity(t_grid.len());
        let mut half_widths = Vec::with_capacity(t_grid.len());
        for k in 0..t_grid.len() {
            let column: Vec<f64> = per_sample_l.iter().map(|row| row[k]).collect();
            let mean = column.iter().sum::<f64>() / s as f64;
            let hw = if s >= 2 {
                let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                    / (s - 1) as f64;
                CONFIDENCE_Z * (var / s as f64).sqrt()
            } else {
                f64::INFINITY
            };
            values.push(mean);
            half_widths.push(hw);
        }
        Ok(LaplaceCurve {
            t_grid: t_grid.to_vec(),
            values,
            half_widths,
            method: "per_sample_atom_plus_midpoint".into(),
            samples: s,
            excluded_samples: self.excluded_count(),
        })
    }
}

/// integral of exp(-t E) dN(E) for a non-decreasing step curve sampled on
/// `grid`: an atom of mass N(E_0) at E_0 plus the increment of each bin
/// placed at the bin midpoint.
fn step_curve_laplace(grid: &[f64], values: &[f64], t_grid: &[f64]) -> Vec<f64> {
    t_grid
        .iter()
        .map(|&t| {
            let mut acc = values[0] * (-t * grid[0]).exp();
            for k in 1..grid.len() {
                let mass = values[k] - values[k - 1];
                let mid = 0.5 * (grid[k] + grid[k - 1]);
                acc += mass * (-t * mid).exp();
            }
            acc
        })
        .collect()
}

/// Estimate the IDS of the given Laplacian flavour by Monte Carlo.
pub fn estimate_ids(
    bc: BoundaryCondition,
    scheme: RestrictionScheme,
    geometry: BoxGeometry,
    p: f64,
    energy_grid: &[f64],
    samples: usize,
    master_seed: u64,
) -> Result<IdsCurve> {
    Ok(estimate_ids_ensemble(bc, scheme, geometry, p, energy_grid, samples, master_seed)?.curve())
}

/// As estimate_ids, retaining per-sample curves.
pub fn estimate_ids_ensemble(
    bc: BoundaryCondition,
    scheme: RestrictionScheme,
    geometry: BoxGeometry,
    p: f64,
    energy_grid: &[f64],
    samples: usize,
    master_seed: u64,
) -> Result<IdsEnsemble> {
    validate_grid(energy_grid)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    // Fail early on incompatible bc/scheme instead of inside the pool.
    assemble_laplacian(&sample_configuration(geometry, p, 0)?, bc, scheme)?;
    let n = geometry.vertices() as f64;
    let per_sample: Vec<Vec<f64>> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let seed = derive_seed(master_seed, i as u64);
            let config = sample_configuration(geometry, p, seed)?;
            let op = assemble_laplacian(&config, bc, scheme)?;
            let solver = InertiaSolver::new(&op)?;
            energy_grid
                .iter()
                .map(|&e| Ok(solver.count_below(e)? as f64 / n))
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(IdsEnsemble {
        bc,
        scheme,
        geometry,
        p,
        part: IdsPart::Full,
        energy_grid: energy_grid.to_vec(),
        per_sample,
        excluded: vec![false; samples],
        master_seed,
    })
}

/// Full, percolating-cluster and finite-cluster ensembles of the Neumann
/// IDS, computed from block restrictions of the same sampled
/// configurations.  Per sample, percolating + finite = full exactly.
pub struct IdsSplit {
    pub full: IdsEnsemble,
    pub percolating: IdsEnsemble,
    pub finite: IdsEnsemble,
}

pub fn estimate_ids_split(
    geometry: BoxGeometry,
    p: f64,
    energy_grid: &[f64],
    samples: usize,
    master_seed: u64,
) -> Result<IdsSplit> {
    validate_grid(energy_grid)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    let n = geometry.vertices() as f64;
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, Vec<f64>, Vec<f64>, bool)> {
            let seed = derive_seed(master_seed, i as u64);
            let config = sample_configuration(geometry, p, seed)?;
            let op = assemble_laplacian(
                &config,
                BoundaryCondition::Neumann,
                RestrictionScheme::GraphRestriction,
            )?;
            let dec = ClusterDecomposition::new(&config);
            let (proxy_vertices, rest_vertices): (Vec<usize>, Vec<usize>) = match dec
                .percolating_proxy()
            {
                Some(c) => (0..op.n()).partition(|&v| dec.label(v) == c),
                None => (Vec::new(), (0..op.n()).collect()),
            };
            let excluded = proxy_vertices.is_empty();

            let full_solver = InertiaSolver::new(&op)?;
            let proxy_solver = if proxy_vertices.is_empty() {
                None
            } else {
                Some(InertiaSolver::new(&op.restriction_to(&proxy_vertices)?)?)
            };
            let rest_solver = if rest_vertices.is_empty() {
                None
            } else {
                Some(InertiaSolver::new(&op.restriction_to(&rest_vertices)?)?)
            };

            let mut full_row = Vec::with_capacity(energy_grid.len());
            let mut proxy_row = Vec::with_capacity(energy_grid.len());
            let mut rest_row = Vec::with_capacity(energy_grid.len());
            for &e in energy_grid {
                full_row.push(full_solver.count_below(e)? as f64 / n);
                proxy_row.push(match &proxy_solver {
                    Some(s) => s.count_below(e)? as f64 / n,
                    None => 0.0,
                });
                rest_row.push(match &rest_solver {
                    Some(s) => s.count_below(e)? as f64 / n,
                    None => 0.0,
                });
            }
            Ok((full_row, proxy_row, rest_row, excluded))
        })
        .collect::<Result<_>>()?;

    let make = |part: IdsPart, pick: fn(&(Vec<f64>, Vec<f64>, Vec<f64>, bool)) -> &Vec<f64>| {
        IdsEnsemble {
            bc: BoundaryCondition::Neumann,
            scheme: RestrictionScheme::GraphRestriction,
            geometry,
            p,
            part,
            energy_grid: energy_grid.to_vec(),
            per_sample: rows.iter().map(|r| pick(r).clone()).collect(),
            excluded: rows.iter().map(|r| r.3).collect(),
            master_seed,
        }
    };
    Ok(IdsSplit {
        full: make(IdsPart::Full, |r| &r.0),
        percolating: make(IdsPart::Percolating, |r| &r.1),
        finite: make(IdsPart::Finite, |r| &r.2),
    })
}

/// Neumann IDS restricted to the wrapping cluster, as a curve.
pub fn ids_infinite_part(
    geometry: BoxGeometry,
    p: f64,
    energy_grid: &[f64],
    samples: usize,
    master_seed: u64,
) -> Result<IdsCurve> {
    Ok(ids_infinite_part_ensemble(geometry, p, energy_grid, samples, master_seed)?.curve())
}

/// Per-sample version of ids_infinite_part (cheaper than the full split:
/// only the percolating block is factored).
pub fn ids_infinite_part_ensemble(
    geometry: BoxGeometry,
    p: f64,
    energy_grid: &[f64],
    samples: usize,
    master_seed: u64,
) -> Result<IdsEnsemble> {
    validate_grid(energy_grid)?;
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    let n = geometry.vertices() as f64;
    let rows: Vec<(Vec<f64>, bool)> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, bool)> {
            let seed = derive_seed(master_seed, i as u64);
            let config = sample_configuration(geometry, p, seed)?;
            let dec = ClusterDecomposition::new(&config);
            match dec.percolating_proxy() {
                None => Ok((vec![0.0; energy_grid.len()], true)),
                Some(c) => {
                    let op = assemble_laplacian(
                        &config,
                        BoundaryCondition::Neumann,
                        RestrictionScheme::GraphRestriction,
                    )?;
                    let solver = InertiaSolver::new(&op.restriction_to(&dec.members(c))?)?;
                    let row = energy_grid
                        .iter()
                        .map(|&e| Ok(solver.count_below(e)? as f64 / n))
                        .collect::<Result<Vec<f64>>>()?;
                    Ok((row, false))
                }
            }
        })
        .collect::<Result<_>>()?;
    Ok(IdsEnsemble {
        bc: BoundaryCondition::Neumann,
        scheme: RestrictionScheme::GraphRestriction,
        geometry,
        p,
        part: IdsPart::Percolating,
        energy_grid: energy_grid.to_vec(),
        per_sample: rows.iter().map(|r| r.0.clone()).collect(),
        excluded: rows.iter().map(|r| r.1).collect(),
        master_seed,
    })
}

/// Density of spectral mass at zero of the Neumann Laplacian, with the two
/// cluster statistics it must reproduce: the kernel dimension equals the
/// number of components (counted independently by union-find), and isolated
/// vertices are the simplest such components.
#[derive(Clone, Debug, Serialize)]
pub struct ZeroModeReport {
    pub nn_at_zero: f64,
    pub component_density: f64,
    pub isolated_density: f64,
    pub nn_half_width: f64,
    pub samples: usize,
    pub master_seed: u64,
}

pub fn zero_mode_density(
    geometry: BoxGeometry,
    p: f64,
    samples: usize,
    master_seed: u64,
) -> Result<ZeroModeReport> {
    if samples == 0 {
        return Err(Error::InvalidParameter("samples must be positive".into()));
    }
    let n = geometry.vertices() as f64;
    let rows: Vec<(f64, f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| -> Result<(f64, f64, f64)> {
            let seed = derive_seed(master_seed, i as u64);
            let config = sample_configuration(geometry, p, seed)?;
            let op = assemble_laplacian(
                &config,
                BoundaryCondition::Neumann,
                RestrictionScheme::GraphRestriction,
            )?;
            let kernel = InertiaSolver::new(&op)?.count_below(0.0)? as f64 / n;
            let dec = ClusterDecomposition::new(&config);
            let components = dec.cluster_count() as f64 / n;
            let isolated = dec.sizes().iter().filter(|&&s| s == 1).count() as f64 / n;
            Ok((kernel, components, isolated))
        })
        .collect::<Result<_>>()?;
    let kernel_col: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let (nn_at_zero, nn_half_width) =
        proportion_interval(&kernel_col, geometry.vertices(), p == 0.0 || p == 1.0);
    Ok(ZeroModeReport {
        nn_at_zero,
        component_density: rows.iter().map(|r| r.1).sum::<f64>() / samples as f64,
        isolated_density: rows.iter().map(|r| r.2).sum::<f64>() / samples as f64,
        nn_half_width,
        samples,
        master_seed,
    })
}

/// Laplace transform of a mean IDS curve (atom at the first grid point plus
/// midpoint rule).  Half-widths are propagated linearly through the same
/// quadrature, which overstates correlated errors; prefer
/// IdsEnsemble::laplace when per-sample curves are available.
pub fn laplace_transform(curve: &IdsCurve, t_grid: &[f64]) -> Result<LaplaceCurve> {
    validate_grid(&curve.energy_grid)?;
    validate_t_grid(t_grid)?;
    let values = step_curve_laplace(&curve.energy_grid, &curve.values, t_grid);
    let half_widths = t_grid
        .iter()
        .map(|&t| {
            let mut acc = curve.half_widths[0] * (-t * curve.energy_grid[0]).exp();
            for k in 1..curve.energy_grid.len() {
                let mid = 0.5 * (curve.energy_grid[k] + curve.energy_grid[k - 1]);
                acc += (curve.half_widths[k] + curve.half_widths[k - 1]) * (-t * mid).exp();
            }
            acc
        })
        .collect();
    Ok(LaplaceCurve {
        t_grid: t_grid.to_vec(),
        values,
        half_widths,
        method: "mean_curve_atom_plus_midpoint".into(),
        samples: curve.samples,
        excluded_samples: curve.excluded_samples,
    })
}

/// Exact Laplace transform of a finite spectrum normalized by `volume`:
/// sum of exp(-t lambda) / volume.  Quadrature-free oracle for small boxes.
pub fn laplace_from_eigenvalues(
    eigenvalues: &[f64],
    volume: usize,
    t_grid: &[f64],
) -> Result<LaplaceCurve> {
    validate_t_grid(t_grid)?;
    if volume == 0 {
        return Err(Error::InvalidParameter("volume must be positive".into()));
    }
    let values = t_grid
        .iter()
        .map(|&t| eigenvalues.iter().map(|&l| (-t * l).exp()).sum::<f64>() / volume as f64)
        .collect();
    Ok(LaplaceCurve {
        t_grid: t_grid.to_vec(),
        values,
        half_widths: vec![0.0; t_grid.len()],
        method: "exact_spectrum".into(),
        samples: 1,
        excluded_samples: 0,
    })
}

/// Grid for reading the mirrored curve: position j carries
/// (4d - E_{m-1-j}) - LEFT_LIMIT_OFFSET, ascending again.
pub fn mirrored_grid(energy_grid: &[f64], coordination: usize) -> Vec<f64> {
    let top = 2.0 * coordination as f64;
    energy_grid
        .iter()
        .rev()
        .map(|&e| top - e - LEFT_LIMIT_OFFSET)
        .collect()
}

/// Largest deviation from the spectral mirror identity between two curves:
/// curve `a` at E, plus curve `b` just below 4d - E, must equal one.  `b`
/// must be estimated on mirrored_grid(a.energy_grid).  Valid pairings are
/// (pseudo-Dirichlet, pseudo-Dirichlet), (Dirichlet, Neumann) and (Neumann,
/// Dirichlet).
pub fn symmetry_residual(a: &IdsCurve, b: &IdsCurve) -> Result<f64> {
    if a.geometry != b.geometry {
        return Err(Error::GridMismatch(
            "curves live on different geometries".into(),
        ));
    }
    let valid = matches!(
        (a.bc, b.bc),
        (BoundaryCondition::PseudoDirichlet, BoundaryCondition::PseudoDirichlet)
            | (BoundaryCondition::Dirichlet, BoundaryCondition::Neumann)
            | (BoundaryCondition::Neumann, BoundaryCondition::Dirichlet)
    );
    if !valid {
        return Err(Error::InvalidParameter(format!(
            "no mirror identity between {} and {}",
            a.bc, b.bc
        )));
    }
    let expect = mirrored_grid(&a.energy_grid, a.geometry.coordination());
    if b.energy_grid.len() != expect.len()
        || b.energy_grid
            .iter()
            .zip(&expect)
            .any(|(x, y)| (x - y).abs() > 1e-15 * (1.0 + y.abs()))
    {
        return Err(Error::GridMismatch(
            "second curve was not estimated on the mirrored grid".into(),
        ));
    }
    let m = a.values.len();
    let mut worst = 0.0f64;
    for j in 0..m {
        worst = worst.max((a.values[j] + b.values[m - 1 - j] - 1.0).abs());
    }
    Ok(worst)
}

fn csv_header(pairs: &[(&str, String)]) -> String {
    let mut line = String::from("# perclap-csv v1");
    for (k, v) in pairs {
        line.push(' ');
        line.push_str(k);
        line.push('=');
        line.push_str(v);
    }
    line.push('\n');
    line
}

impl IdsCurve {
    /// CSV with a versioned comment header; '.' decimal separator and '\n'
    /// line ends come from Rust's float formatting.
    pub fn to_csv(&self) -> String {
        let mut out = csv_header(&[
            ("kind", "ids".into()),
            ("bc", self.bc.to_string()),
            ("scheme", self.scheme.to_string()),
            ("d", self.geometry.d().to_string()),
            ("L", self.geometry.side().to_string()),
            ("topology", self.geometry.topology().to_string()),
            ("p", self.p.to_string()),
            ("part", self.part.to_string()),
            ("samples", self.samples.to_string()),
            ("master_seed", self.master_seed.to_string()),
            ("excluded_samples", self.excluded_samples.to_string()),
        ]);
        out.push_str("energy,value,half_width\n");
        for j in 0..self.energy_grid.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.energy_grid[j], self.values[j], self.half_widths[j]
            ));
        }
        out
    }
}

impl LaplaceCurve {
    pub fn to_csv(&self) -> String {
        let mut out = csv_header(&[
            ("kind", "laplace".into()),
            ("method", self.method.clone()),
            ("samples", self.samples.to_string()),
            ("excluded_samples", self.excluded_samples.to_string()),
        ]);
        out.push_str("t,value,half_width\n");
        for j in 0..self.t_grid.len() {
            out.push_str(&format!(
                "{},{},{}\n",
                self.t_grid[j], self.values[j], self.half_widths[j]
            ));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Topology;

    fn torus(l: usize) -> BoxGeometry {
        BoxGeometry::new(2, l, Topology::Periodic).unwrap()
    }

    #[test]
    fn full_lattice_curve_matches_fourier_counts() {
        let l = 8usize;
        let g = torus(l);
        let grid = [0.1, 0.9, 2.3, 4.0 + 1e-9, 7.47, 8.1];
        let curve = estimate_ids(
            BoundaryCondition::Neumann,
            RestrictionScheme::GraphRestriction,
            g,
            1.0,
            &grid,
            4,
            99,
        )
        .unwrap();
        let mut modes = Vec::new();
        for m0 in 0..l {
            for m1 in 0..l {
                let f = |m: usize| 2.0 - 2.0 * (2.0 * std::f64::consts::PI * m as f64 / l as f64).cos();
                modes.push(f(m0) + f(m1));
            }
        }
        for (j, &e) in grid.iter().enumerate() {
            let expect = modes.iter().filter(|&&x| x <= e + 1e-12).count() as f64 / 64.0;
            assert_eq!(curve.values[j], expect, "energy {e}");
            assert_eq!(curve.half_widths[j], 0.0);
        }
        assert_eq!(curve.excluded_samples, 0);
    }

    #[test]
    fn empty_lattice_curves_are_steps_at_the_diagonal() {
        let g = torus(4);
        let grid = [-0.5, 0.0, 3.5, 4.0, 7.5, 8.0];
        let expect_step = |step: f64| -> Vec<f64> {
            grid.iter().map(|&e| if e >= step { 1.0 } else { 0.0 }).collect::<Vec<_>>()
        };
        for (bc, step) in [
            (BoundaryCondition::Neumann, 0.0),
            (BoundaryCondition::PseudoDirichlet, 4.0),
            (BoundaryCondition::Dirichlet, 8.0),
        ] {
            let curve = estimate_ids(bc, RestrictionScheme::GraphRestriction, g, 0.0, &grid, 2, 1)
                .unwrap();
            assert_eq!(curve.values, expect_step(step), "bc {bc}");
        }
    }

    #[test]
    fn kernel_density_equals_component_density() {
        let report = zero_mode_density(torus(10), 0.5, 20, 7).unwrap();
        assert_eq!(report.nn_at_zero, report.component_density);
        assert!(report.isolated_density <= report.component_density);
        assert!(report.nn_half_width > 0.0);
    }

    #[test]
    fn split_counts_add_exactly_per_sample() {
        let g = torus(12);
        let grid = [0.0, 0.05, 0.31, 1.0, 3.7, 7.9];
        let split = estimate_ids_split(g, 0.65, &grid, 8, 3).unwrap();
        let n = g.vertices() as f64;
        for i in 0..8 {
            for j in 0..grid.len() {
                let full = (split.full.per_sample[i][j] * n).round() as i64;
                let perc = (split.percolating.per_sample[i][j] * n).round() as i64;
                let fin = (split.finite.per_sample[i][j] * n).round() as i64;
                assert_eq!(full, perc + fin, "sample {i} energy {}", grid[j]);
            }
        }
        // Supercritical boxes of this size wrap essentially always.
        assert_eq!(split.full.excluded_count(), split.percolating.excluded_count());
    }

    #[test]
    fn subcritical_infinite_part_is_zero_and_flagged() {
        let g = torus(8);
        let grid = [0.5, 2.0];
        let ens = ids_infinite_part_ensemble(g, 0.05, &grid, 10, 11).unwrap();
        assert_eq!(ens.excluded_count(), 10);
        assert!(ens.per_sample.iter().all(|row| row.iter().all(|&v| v == 0.0)));
        let curve = ens.curve();
        assert_eq!(curve.excluded_samples, 10);
        assert_eq!(curve.values, vec![0.0, 0.0]);
    }

    #[test]
    fn mirror_identity_is_exact_for_shared_seeds() {
        // Power-of-two sample count and volume keep all divisions exact, so
        // the per-configuration counting identity survives averaging intact.
        let g = BoxGeometry::new(2, 4, Topology::Free).unwrap();
        let grid = [0.37, 1.21, 2.9, 5.4];
        let mirror = mirrored_grid(&grid, g.coordination());
        let samples = 16;
        let seed = 5;
        let scheme = RestrictionScheme::GraphRestriction;
        let dt = estimate_ids(BoundaryCondition::PseudoDirichlet, scheme, g, 0.5, &grid, samples, seed).unwrap();
        let dt_m = estimate_ids(BoundaryCondition::PseudoDirichlet, scheme, g, 0.5, &mirror, samples, seed).unwrap();
        assert_eq!(symmetry_residual(&dt, &dt_m).unwrap(), 0.0);
        let d = estimate_ids(BoundaryCondition::Dirichlet, scheme, g, 0.5, &grid, samples, seed).unwrap();
        let n_m = estimate_ids(BoundaryCondition::Neumann, scheme, g, 0.5, &mirror, samples, seed).unwrap();
        assert_eq!(symmetry_residual(&d, &n_m).unwrap(), 0.0);
        // Mismatched grids are rejected.
        let off = estimate_ids(BoundaryCondition::Neumann, scheme, g, 0.5, &grid, samples, seed).unwrap();
        assert!(symmetry_residual(&d, &off).is_err());
        assert!(symmetry_residual(&d, &dt_m).is_err());
    }

    #[test]
    fn laplace_of_linear_curve_matches_integral() {
        // N(E) = E on [0, 10]: transform at t is (1 - exp(-10 t)) / t.
        let m = 2000;
        let grid: Vec<f64> = (0..m).map(|k| 10.0 * (k as f64 + 0.5) / m as f64).collect();
        let g = torus(2);
        let curve = IdsCurve {
            bc: BoundaryCondition::Neumann,
            scheme: RestrictionScheme::GraphRestriction,
            geometry: g,
            p: 1.0,
            part: IdsPart::Full,
            energy_grid: grid.clone(),
            values: grid.clone(),
            half_widths: vec![0.0; m],
            samples: 1,
            master_seed: 0,
            excluded_samples: 0,
        };
        for &t in &[0.3, 1.0, 4.0] {
            let l = laplace_transform(&curve, &[t]).unwrap();
            let expect = (1.0 - (-10.0 * t).exp()) / t;
            assert!(
                (l.values[0] - expect).abs() < 1e-2 * expect,
                "t={t}: {} vs {expect}",
                l.values[0]
            );
        }
    }

    #[test]
    fn curve_laplace_agrees_with_exact_spectrum_on_full_lattice() {
        let l = 8usize;
        let g = torus(l);
        // Fine grid over the whole interval so bin midpoints sit close to
        // the true eigenvalues.
        let m = 4000;
        let grid: Vec<f64> = (0..=m).map(|k| -1e-6 + 8.1 * k as f64 / m as f64).collect();
        let ens = estimate_ids_ensemble(
            BoundaryCondition::Neumann,
            RestrictionScheme::GraphRestriction,
            g,
            1.0,
            &grid,
            1,
            0,
        )
        .unwrap();
        let t_grid = [0.5, 1.0, 2.0];
        let from_curve = ens.laplace(&t_grid).unwrap();
        let op = assemble_laplacian(
            &crate::lattice::Configuration::fully_open(g),
            BoundaryCondition::Neumann,
            RestrictionScheme::GraphRestriction,
        )
        .unwrap();
        let spectrum = crate::spectral::full_spectrum(&op).unwrap();
        let exact = laplace_from_eigenvalues(&spectrum, g.vertices(), &t_grid).unwrap();
        for k in 0..t_grid.len() {
            assert!(
                (from_curve.values[k] - exact.values[k]).abs() < 2e-3,
                "t={}: {} vs {}",
                t_grid[k],
                from_curve.values[k],
                exact.values[k]
            );
        }
    }

    #[test]
    fn half_widths_shrink_like_root_samples() {
        // Doubling the ensemble should shrink half-widths by about 1/sqrt(2).
        let g = torus(8);
        let grid = [0.3, 1.5, 4.2];
        let a = estimate_ids(BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction, g, 0.5, &grid, 100, 17).unwrap();
        let b = estimate_ids(BoundaryCondition::Neumann, RestrictionScheme::GraphRestriction, g, 0.5, &grid, 200, 17).unwrap();
        for j in 0..grid.len() {
            let ratio = b.half_widths[j] / a.half_widths[j];
            assert!(
                (0.6..0.85).contains(&ratio),
                "half-width ratio {ratio} at energy {}",
                grid[j]
            );
        }
    }

    #[test]
    fn estimates_are_deterministic() {
        let g = torus(6);
        let grid = [0.2, 1.0, 3.3];
        let a = estimate_ids(BoundaryCondition::Dirichlet, RestrictionScheme::GraphRestriction, g, 0.45, &grid, 12, 23).unwrap();
        let b = estimate_ids(BoundaryCondition::Dirichlet, RestrictionScheme::GraphRestriction, g, 0.45, &grid, 12, 23).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn grid_validation_rejects_malformed_input() {
        let g = torus(4);
        let bc = BoundaryCondition::Neumann;
        let scheme = RestrictionScheme::GraphRestriction;
        assert!(estimate_ids(bc, scheme, g, 0.5, &[], 2, 0).is_err());
        assert!(estimate_ids(bc, scheme, g, 0.5, &[1.0, 1.0], 2, 0).is_err());
        assert!(estimate_ids(bc, scheme, g, 0.5, &[2.0, 1.0], 2, 0).is_err());
        assert!(estimate_ids(bc, scheme, g, 0.5, &[f64::NAN], 2, 0).is_err());
        assert!(estimate_ids(bc, scheme, g, 0.5, &[1.0], 0, 0).is_err());
        let curve = estimate_ids(bc, scheme, g, 0.5, &[1.0], 2, 0).unwrap();
        assert!(laplace_transform(&curve, &[]).is_err());
        assert!(laplace_transform(&curve, &[-1.0, 2.0]).is_err());
    }

    #[test]
    fn csv_output_shape() {
        let g = torus(4);
        let curve = estimate_ids(
            BoundaryCondition::Neumann,
            RestrictionScheme::GraphRestriction,
            g,
            0.7,
            &[0.5, 1.5],
            3,
            2,
        )
        .unwrap();
        let csv = curve.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[0].starts_with("# perclap-csv v1 kind=ids bc=neumann"));
        assert!(lines[0].contains("p=0.7"));
        assert!(lines[0].contains("topology=periodic"));
        assert_eq!(lines[1], "energy,value,half_width");
        assert_eq!(lines.len(), 4);
        assert!(!csv.contains(','.to_string().repeat(4).as_str()));
    }
}
