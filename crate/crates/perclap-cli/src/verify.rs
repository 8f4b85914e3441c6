//! Self-test suites.
//!
//! `quick` exercises every structural invariant on small boxes: spectral
//! duality under the checkerboard involution, operator ordering, kernel
//! counts against union-find, walk-versus-semigroup agreement and the
//! mechanism battery.  `full` adds production-size ensembles, the
//! d = 3 presets and the cross-validation between the spectral and walk
//! estimates.  Each check yields one verdict; a check that errors out
//! counts as failed rather than aborting the suite.

use perclap_core as core;
use perclap_core::rng::{derive_seed, stream};
use rand::Rng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Suite {
    Quick,
    Full,
}

impl Suite {
    pub fn name(self) -> &'static str {
        match self {
            Suite::Quick => "quick",
            Suite::Full => "full",
        }
    }
}

pub struct CheckOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

type CheckResult = Result<(bool, String), String>;

fn outcome(name: &'static str, r: CheckResult) -> CheckOutcome {
    match r {
        Ok((pass, detail)) => CheckOutcome { name, pass, detail },
        Err(e) => CheckOutcome {
            name,
            pass: false,
            detail: format!("error: {e}"),
        },
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

pub fn run_suite(suite: Suite, seed: u64, tamper: bool) -> Vec<CheckOutcome> {
    let mut out = vec![
        outcome("involution_duality", involution_duality(seed, tamper)),
        outcome("eigenvalue_range", eigenvalue_range(seed)),
        outcome("kernel_counts_components", kernel_counts_components(seed)),
        outcome("quadratic_form_ordering", quadratic_form_ordering(seed)),
        outcome("full_cube_gap", full_cube_gap()),
        outcome("mirror_symmetry", mirror_symmetry(seed)),
        outcome("split_additivity", split_additivity(seed)),
        outcome("walk_heat_kernel", walk_heat_kernel(seed)),
        outcome("zero_modes", zero_modes(seed)),
        outcome("ground_state_monotonicity", monotonicity(seed)),
        outcome("eigenvalue_linearization", linearization(seed)),
        outcome("heaviside_envelope", heaviside(seed)),
        outcome("tauberian_sandwich", tauberian()),
        outcome("slope_large_deviation", large_deviation(seed)),
        outcome("dirichlet_cube_scaling", cube_scaling()),
    ];
    if suite == Suite::Full {
        out.push(outcome("involution_duality_d3", involution_duality_d3(seed)));
        out.push(outcome("eigenvalue_range_d3", eigenvalue_range_d3(seed)));
        out.push(outcome(
            "van_hove_supercritical_d2",
            van_hove_supercritical_d2(seed),
        ));
        out.push(outcome(
            "heat_decay_supercritical_d2",
            heat_decay_supercritical_d2(seed),
        ));
        out.push(outcome(
            "transform_crossvalidation",
            transform_crossvalidation(seed),
        ));
        out.push(outcome("finite_cluster_tail", finite_cluster_tail(seed)));
        out.push(outcome(
            "heat_decay_supercritical_d3",
            heat_decay_supercritical_d3(seed),
        ));
        out.push(outcome(
            "d3_preset_crossvalidation",
            d3_preset_crossvalidation(seed),
        ));
        out.push(outcome("slope_implication", slope_implication(seed)));
    }
    out
}

fn assemble(
    config: &core::Configuration,
    bc: core::BoundaryCondition,
) -> Result<core::SparseSymmetricOperator, String> {
    core::assemble_laplacian(config, bc, core::RestrictionScheme::GraphRestriction).map_err(err)
}

/// The three operators of one configuration under the graph restriction.
fn operator_triple(
    config: &core::Configuration,
) -> Result<[core::SparseSymmetricOperator; 3], String> {
    Ok([
        assemble(config, core::BoundaryCondition::Neumann)?,
        assemble(config, core::BoundaryCondition::PseudoDirichlet)?,
        assemble(config, core::BoundaryCondition::Dirichlet)?,
    ])
}

/// Rebuild an operator with one diagonal entry nudged.  Used by --tamper to
/// demonstrate that the duality check can actually fail.
fn bump_diagonal(
    op: &core::SparseSymmetricOperator,
) -> Result<core::SparseSymmetricOperator, String> {
    let mut diag = op.diag().to_vec();
    diag[0] += 1e-3;
    core::SparseSymmetricOperator::from_parts(
        op.n(),
        op.coordination(),
        diag,
        op.off_diagonal().to_vec(),
    )
    .map_err(err)
}

fn duality_residuals(d: usize, l: usize, seed: u64, tamper: bool) -> Result<(f64, usize), String> {
    let mut worst = 0.0f64;
    let mut idx = 0u64;
    for topology in [core::Topology::Free, core::Topology::Periodic] {
        let geometry = core::BoxGeometry::new(d, l, topology).map_err(err)?;
        for i in 0..10u64 {
            let p = if i % 2 == 0 { 0.3 } else { 0.7 };
            let config = core::sample_configuration(geometry, p, derive_seed(seed, idx))
                .map_err(err)?;
            idx += 1;
            let [n, dt, mut dir] = operator_triple(&config)?;
            if tamper && idx == 1 {
                dir = bump_diagonal(&dir)?;
            }
            worst = worst.max(core::involution_dual_residual(&geometry, &dir, &n).map_err(err)?);
            worst = worst.max(core::involution_dual_residual(&geometry, &dt, &dt).map_err(err)?);
        }
    }
    Ok((worst, idx as usize))
}

/// Checkerboard conjugation maps the Dirichlet operator onto the spectral
/// mirror of the Neumann one, and the symmetrized operator onto its own
/// mirror.
fn involution_duality(seed: u64, tamper: bool) -> CheckResult {
    let (worst, configs) = duality_residuals(2, 8, seed, tamper)?;
    Ok((
        worst <= 1e-9,
        format!("max residual {worst:.3e} over {configs} configurations (tolerance 1e-9)"),
    ))
}

fn involution_duality_d3(seed: u64) -> CheckResult {
    let (worst, configs) = duality_residuals(3, 4, derive_seed(seed, 16_000), false)?;
    Ok((
        worst <= 1e-9,
        format!("max residual {worst:.3e} over {configs} configurations (tolerance 1e-9)"),
    ))
}

fn spectrum_bounds(d: usize, l: usize, seed: u64) -> Result<(f64, f64), String> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    let mut idx = 0u64;
    for topology in [core::Topology::Free, core::Topology::Periodic] {
        let geometry = core::BoxGeometry::new(d, l, topology).map_err(err)?;
        for i in 0..10u64 {
            let p = if i % 2 == 0 { 0.3 } else { 0.7 };
            let config = core::sample_configuration(geometry, p, derive_seed(seed, idx))
                .map_err(err)?;
            idx += 1;
            for op in operator_triple(&config)? {
                let ev = core::full_spectrum(&op).map_err(err)?;
                lo = lo.min(ev[0]);
                hi = hi.max(*ev.last().unwrap());
            }
        }
    }
    Ok((lo, hi))
}

/// Every eigenvalue of every boundary condition lies in [0, 4d].
fn eigenvalue_range(seed: u64) -> CheckResult {
    let (lo, hi) = spectrum_bounds(2, 8, seed)?;
    Ok((
        lo >= -1e-9 && hi <= 8.0 + 1e-9,
        format!("eigenvalues in [{lo:.3e}, {hi:.6}], expected within [0, 8]"),
    ))
}

fn eigenvalue_range_d3(seed: u64) -> CheckResult {
    let (lo, hi) = spectrum_bounds(3, 4, derive_seed(seed, 16_100))?;
    Ok((
        lo >= -1e-9 && hi <= 12.0 + 1e-9,
        format!("eigenvalues in [{lo:.3e}, {hi:.6}], expected within [0, 12]"),
    ))
}

/// dim ker of the Neumann operator equals the union-find component count.
fn kernel_counts_components(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 10, core::Topology::Periodic).map_err(err)?;
    let mut mismatches = 0usize;
    for i in 0..20u64 {
        let p = [0.2, 0.5, 0.8][(i % 3) as usize];
        let config =
            core::sample_configuration(geometry, p, derive_seed(seed, 100 + i)).map_err(err)?;
        let op = assemble(&config, core::BoundaryCondition::Neumann)?;
        let kernel = core::count_below(&op, 0.0).map_err(err)?;
        let components = core::ClusterDecomposition::new(&config).cluster_count();
        if kernel != components {
            mismatches += 1;
        }
    }
    Ok((
        mismatches == 0,
        format!("{mismatches} mismatches over 20 configurations (exact equality required)"),
    ))
}

/// Quadratic forms are ordered: Neumann <= symmetrized <= Dirichlet.
fn quadratic_form_ordering(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 8, core::Topology::Periodic).map_err(err)?;
    let n = geometry.vertices();
    let mut worst = f64::NEG_INFINITY;
    for i in 0..5u64 {
        let config =
            core::sample_configuration(geometry, 0.5, derive_seed(seed, 200 + i)).map_err(err)?;
        let [op_n, op_dt, op_d] = operator_triple(&config)?;
        let mut rng = stream(derive_seed(seed, 300 + i));
        for _ in 0..200 {
            let mut x: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in &mut x {
                *v /= norm;
            }
            let qn = op_n.quadratic_form(&x).map_err(err)?;
            let qdt = op_dt.quadratic_form(&x).map_err(err)?;
            let qd = op_d.quadratic_form(&x).map_err(err)?;
            worst = worst.max(qn - qdt).max(qdt - qd);
        }
    }
    Ok((
        worst <= 1e-12,
        format!(
            "max of (q_N - q_Dt, q_Dt - q_D) over 1000 unit vectors is {worst:.3e} \
             (must be <= 1e-12)"
        ),
    ))
}

/// The gap of the fully connected free cube matches 2 - 2 cos(pi / L).
fn full_cube_gap() -> CheckResult {
    let mut worst = 0.0f64;
    for l in [4usize, 8, 16] {
        let geometry = core::BoxGeometry::new(2, l, core::Topology::Free).map_err(err)?;
        let gap = core::spectral_gap(geometry).map_err(err)?;
        let expect = 2.0 - 2.0 * (std::f64::consts::PI / l as f64).cos();
        worst = worst.max((gap - expect).abs());
    }
    Ok((
        worst <= 1e-9,
        format!("max deviation from the cosine closed form {worst:.3e} (tolerance 1e-9)"),
    ))
}

/// Counting symmetry: the Dirichlet state count at E and the Neumann count
/// at 4d - E add to one; the symmetrized operator mirrors onto itself.
fn mirror_symmetry(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 4, core::Topology::Free).map_err(err)?;
    // Offset grid so no point sits exactly on an integer eigenvalue.
    let grid: Vec<f64> = (0..8).map(|k| 0.37 + k as f64).collect();
    let mirrored = core::mirrored_grid(&grid, geometry.coordination());
    let s = derive_seed(seed, 400);
    let a = core::estimate_ids(
        core::BoundaryCondition::Dirichlet,
        core::RestrictionScheme::GraphRestriction,
        geometry,
        0.5,
        &grid,
        8,
        s,
    )
    .map_err(err)?;
    let b = core::estimate_ids(
        core::BoundaryCondition::Neumann,
        core::RestrictionScheme::GraphRestriction,
        geometry,
        0.5,
        &mirrored,
        8,
        s,
    )
    .map_err(err)?;
    let mut worst = core::symmetry_residual(&a, &b).map_err(err)?;
    let at = core::estimate_ids(
        core::BoundaryCondition::PseudoDirichlet,
        core::RestrictionScheme::GraphRestriction,
        geometry,
        0.5,
        &grid,
        8,
        s,
    )
    .map_err(err)?;
    let bt = core::estimate_ids(
        core::BoundaryCondition::PseudoDirichlet,
        core::RestrictionScheme::GraphRestriction,
        geometry,
        0.5,
        &mirrored,
        8,
        s,
    )
    .map_err(err)?;
    worst = worst.max(core::symmetry_residual(&at, &bt).map_err(err)?);
    Ok((
        worst <= 1e-12,
        format!("max counting residual {worst:.3e} (tolerance 1e-12)"),
    ))
}

/// Percolating and finite restrictions add back to the full count, sample
/// for sample.
fn split_additivity(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 16, core::Topology::Periodic).map_err(err)?;
    let grid: Vec<f64> = (0..=8).map(|k| 0.25 + k as f64).collect();
    let split = core::estimate_ids_split(geometry, 0.6, &grid, 5, derive_seed(seed, 500))
        .map_err(err)?;
    let full = split.full.curve();
    let perc = split.percolating.curve();
    let fin = split.finite.curve();
    let mut worst = 0.0f64;
    for j in 0..grid.len() {
        worst = worst.max((full.values[j] - perc.values[j] - fin.values[j]).abs());
    }
    Ok((
        worst <= 1e-12,
        format!("max additivity residual {worst:.3e} (tolerance 1e-12)"),
    ))
}

/// Deterministic search for a small free box whose largest cluster has
/// exactly twenty vertices, plus a vertex on that cluster.
pub fn twenty_vertex_cluster() -> Result<(core::Configuration, usize), String> {
    let geometry = core::BoxGeometry::new(2, 5, core::Topology::Free).map_err(err)?;
    for s in 0..50_000u64 {
        let config = core::sample_configuration(geometry, 0.55, s).map_err(err)?;
        let dec = core::ClusterDecomposition::new(&config);
        let (label, size) = dec.largest_cluster();
        if size == 20 {
            let x = (0..geometry.vertices())
                .find(|&v| dec.label(v) == label)
                .expect("a 20-vertex cluster has a member");
            return Ok((config, x));
        }
    }
    Err("no 5x5 box with a 20-vertex cluster in the seed range".into())
}

/// Monte Carlo return frequencies agree with the heat-kernel diagonal.
fn walk_heat_kernel(seed: u64) -> CheckResult {
    let (config, x) = twenty_vertex_cluster()?;
    let op = assemble(&config, core::BoundaryCondition::Neumann)?;
    let mut worst_z = 0.0f64;
    for (k, t) in [1.0f64, 3.0].into_iter().enumerate() {
        let est = core::return_probability(&config, x, t, 20_000, derive_seed(seed, 600 + k as u64))
            .map_err(err)?;
        let exact = core::heat_kernel_diag(&op, x, t).map_err(err)?;
        let sigma = est.half_width / 1.96;
        worst_z = worst_z.max((est.probability - exact).abs() / sigma.max(1e-12));
    }
    Ok((
        worst_z <= 4.0,
        format!("max |simulation - semigroup| = {worst_z:.2} sigma (limit 4)"),
    ))
}

/// The estimated state density at zero matches the component density.
fn zero_modes(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 10, core::Topology::Periodic).map_err(err)?;
    let report = core::zero_mode_density(geometry, 0.5, 10, derive_seed(seed, 700)).map_err(err)?;
    let diff = (report.nn_at_zero - report.component_density).abs();
    Ok((
        diff <= 1e-12,
        format!("|N(0) - component density| = {diff:.3e} (tolerance 1e-12)"),
    ))
}

/// Ground-state energy of the coupling family never decreases in t.
fn monotonicity(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 5, core::Topology::Free).map_err(err)?;
    let grid: Vec<f64> = (0..=10).map(|k| k as f64 / 10.0).collect();
    let mut worst = 0.0f64;
    let mut failures = 0usize;
    for i in 0..20u64 {
        let config =
            core::sample_configuration(geometry, 0.5, derive_seed(seed, 800 + i)).map_err(err)?;
        let r = core::monotonicity_check(&config, &grid).map_err(err)?;
        if !r.pass {
            failures += 1;
        }
        worst = worst.max(r.violation);
    }
    Ok((
        failures == 0,
        format!("{failures} failing seeds of 20, max backward step {worst:.3e}"),
    ))
}

/// Residual of the linear eigenvalue approximation is quadratic in t.
fn linearization(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 5, core::Topology::Free).map_err(err)?;
    let mut passed = 0usize;
    for i in 0..20u64 {
        let config =
            core::sample_configuration(geometry, 0.5, derive_seed(seed, 900 + i)).map_err(err)?;
        if core::linearization_check(&config).map_err(err)?.pass {
            passed += 1;
        }
    }
    Ok((passed >= 19, format!("{passed}/20 seeds within order tolerance (need 19)")))
}

fn heaviside(seed: u64) -> CheckResult {
    let r = core::heaviside_envelope_check(10_000, derive_seed(seed, 1000));
    Ok((
        r.pass,
        format!("{} envelope violations over 10000 samples", r.violation as usize),
    ))
}

fn tauberian() -> CheckResult {
    let r = core::tauberian_check(1.0, 0.5).map_err(err)?;
    Ok((
        r.pass,
        format!("sandwich margin {:.3e} (must be <= 0)", r.violation),
    ))
}

fn large_deviation(seed: u64) -> CheckResult {
    let template = core::BoxGeometry::new(2, 2, core::Topology::Free).map_err(err)?;
    let r = core::slope_large_deviation(template, 0.5, 0.45, 4000, derive_seed(seed, 1100), &[2, 3])
        .map_err(err)?;
    Ok((
        r.pass,
        format!(
            "max log-frequency increase {:.3e}, frequencies {}",
            r.violation, r.parameters["frequencies"]
        ),
    ))
}

fn cube_scaling() -> CheckResult {
    let fit = core::dirichlet_cube_scaling(2, &[4, 6, 8, 12, 16]).map_err(err)?;
    Ok((
        (fit.slope + 2.0).abs() <= 0.1,
        format!("bottom eigenvalue slope {:.4} vs -2 (tolerance 0.1)", fit.slope),
    ))
}

fn geometric_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect()
}

/// Supercritical d = 2 state count grows like E^(d/2) above the kernel.
fn van_hove_supercritical_d2(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 128, core::Topology::Periodic).map_err(err)?;
    let grid = geometric_grid(0.015, 0.25, 12);
    let s = derive_seed(seed, 1200);
    let curve = core::estimate_ids(
        core::BoundaryCondition::Neumann,
        core::RestrictionScheme::GraphRestriction,
        geometry,
        0.7,
        &grid,
        30,
        s,
    )
    .map_err(err)?;
    let zeros = core::zero_mode_density(geometry, 0.7, 30, s).map_err(err)?;
    let fit = core::fit_van_hove(&curve, (0.02, 0.2), zeros.nn_at_zero).map_err(err)?;
    Ok((
        (0.7..=1.3).contains(&fit.slope),
        format!("growth exponent {:.3} (expected 1 within [0.7, 1.3])", fit.slope),
    ))
}

/// Annealed return probability decays like t^(-d/2) on the same ensemble.
fn heat_decay_supercritical_d2(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 128, core::Topology::Periodic).map_err(err)?;
    let t_grid = geometric_grid(8.0, 64.0, 7);
    let curve = core::annealed_return(geometry, 0.7, &t_grid, 12, 20_000, derive_seed(seed, 1300))
        .map_err(err)?;
    let fit = core::fit_heat_decay(&curve, (8.0, 64.0)).map_err(err)?;
    Ok((
        (-1.25..=-0.75).contains(&fit.slope),
        format!("decay exponent {:.3} (expected -1 within [-1.25, -0.75])", fit.slope),
    ))
}

/// Laplace transform of the percolating-part state count agrees with the
/// annealed walk estimate at matching times.
fn transform_crossvalidation(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 32, core::Topology::Periodic).map_err(err)?;
    let t_pts = [4.0f64, 8.0, 16.0];
    let grid = geometric_grid(1e-4, 8.0, 60);
    let ens = core::ids_infinite_part_ensemble(geometry, 0.7, &grid, 12, derive_seed(seed, 1400))
        .map_err(err)?;
    let lap = ens.laplace(&t_pts).map_err(err)?;
    let ann = core::annealed_return(geometry, 0.7, &t_pts, 12, 20_000, derive_seed(seed, 1401))
        .map_err(err)?;
    let mut worst_z = 0.0f64;
    for j in 0..t_pts.len() {
        let sigma = ((lap.half_widths[j] / 1.96).powi(2) + (ann.half_widths[j] / 1.96).powi(2))
            .sqrt()
            // Floor covers the midpoint-rule discretization of the
            // spectral side.
            .max(2e-3);
        worst_z = worst_z.max((lap.values[j] - ann.values[j]).abs() / sigma);
    }
    Ok((
        worst_z <= 3.0,
        format!("max spectral/walk discrepancy {worst_z:.2} sigma (limit 3)"),
    ))
}

/// State growth of the non-percolating rest stays below the mass of its
/// large clusters.
fn finite_cluster_tail(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(2, 64, core::Topology::Periodic).map_err(err)?;
    let r = core::finite_cluster_tail_check(geometry, 0.7, &[0.01, 0.05, 0.1], 25, derive_seed(seed, 1500))
        .map_err(err)?;
    Ok((
        r.pass,
        format!("max normalized excess {:.3e} (must be <= 0)", r.violation),
    ))
}

/// Diffusive return decay separates d = 3 from the d = 2 exponent.  The
/// walk side is the only desk-scale road to this number: on an L = 16 box
/// the spectral staircase is too coarse below the clean-torus gap for a
/// window fit at any edge density.  Short-time corrections steepen the
/// measured exponent to about -1.8 here (asymptotically -1.5), so the band
/// is centered on what the box can show while still excluding the d = 2
/// value of -1.
fn heat_decay_supercritical_d3(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(3, 16, core::Topology::Periodic).map_err(err)?;
    let t_grid = geometric_grid(4.0, 16.0, 7);
    // Config-to-config variance dominates the walk noise here, hence many
    // configurations with moderate walk counts.
    let curve = core::annealed_return(geometry, 0.7, &t_grid, 48, 20_000, derive_seed(seed, 1600))
        .map_err(err)?;
    let fit = core::fit_heat_decay(&curve, (4.0, 16.0)).map_err(err)?;
    Ok((
        (-2.0..=-1.2).contains(&fit.slope),
        format!(
            "decay exponent {:.3} (expected near -1.5 at this scale, within [-2.0, -1.2])",
            fit.slope
        ),
    ))
}

/// The d = 3 near-threshold preset parameters run through the whole
/// pipeline: exact operator duality, kernel counts against union-find, and
/// agreement between the spectral and walk sides of the Laplace transform.
fn d3_preset_crossvalidation(seed: u64) -> CheckResult {
    let geometry = core::BoxGeometry::new(3, 16, core::Topology::Periodic).map_err(err)?;
    let p = 0.35;
    let mut worst_residual = 0.0f64;
    let mut mismatches = 0usize;
    for i in 0..3u64 {
        let config =
            core::sample_configuration(geometry, p, derive_seed(seed, 1900 + i)).map_err(err)?;
        let [n, dt, dir] = operator_triple(&config)?;
        worst_residual = worst_residual
            .max(core::involution_dual_residual(&geometry, &dir, &n).map_err(err)?)
            .max(core::involution_dual_residual(&geometry, &dt, &dt).map_err(err)?);
        let kernel = core::count_below(&n, 0.0).map_err(err)?;
        if kernel != core::ClusterDecomposition::new(&config).cluster_count() {
            mismatches += 1;
        }
    }
    if worst_residual > 1e-9 || mismatches > 0 {
        return Ok((
            false,
            format!("duality residual {worst_residual:.3e}, {mismatches} kernel mismatches"),
        ));
    }
    let t_pts = [2.0f64, 4.0];
    let grid = geometric_grid(1e-3, 12.0, 30);
    let ens = core::ids_infinite_part_ensemble(geometry, p, &grid, 6, derive_seed(seed, 1950))
        .map_err(err)?;
    let lap = ens.laplace(&t_pts).map_err(err)?;
    let ann = core::annealed_return(geometry, p, &t_pts, 8, 20_000, derive_seed(seed, 1951))
        .map_err(err)?;
    let mut worst_z = 0.0f64;
    for j in 0..t_pts.len() {
        let sigma = ((lap.half_widths[j] / 1.96).powi(2) + (ann.half_widths[j] / 1.96).powi(2))
            .sqrt()
            .max(2e-3);
        worst_z = worst_z.max((lap.values[j] - ann.values[j]).abs() / sigma);
    }
    Ok((
        worst_z <= 3.0,
        format!(
            "duality exact, kernels exact, spectral/walk discrepancy {worst_z:.2} sigma (limit 3)"
        ),
    ))
}

/// Low ground-state energy of the coupling family forces a small closure
/// fraction.
fn slope_implication(seed: u64) -> CheckResult {
    let fit_box = core::BoxGeometry::new(2, 6, core::Topology::Free).map_err(err)?;
    let mut beta = 0.0f64;
    for i in 0..40u64 {
        let config =
            core::sample_configuration(fit_box, 0.5, derive_seed(seed, 1700 + i)).map_err(err)?;
        let r = core::linearization_check(&config).map_err(err)?;
        if let Some(b) = r.parameters["beta_hat"].as_f64() {
            beta = beta.max(b);
        }
    }
    if beta <= 0.0 {
        beta = 1.0;
    }
    let alpha = 0.08f64;
    let energies: Vec<f64> = [3.0f64, 4.0]
        .iter()
        .map(|s| {
            let root = alpha / (2.0 * s);
            root * root / beta * (1.0 - 1e-9)
        })
        .rev()
        .collect();
    let r = core::slope_implication_check(2, 0.9, alpha, beta, &energies, 300, derive_seed(seed, 1800))
        .map_err(err)?;
    let premise = r.parameters["premise_total"].clone();
    Ok((
        r.pass && r.parameters["vacuous"].as_bool() == Some(false),
        format!(
            "max slope excess {:.3e} over {premise} premise samples (must be <= 0, non-vacuous)",
            r.violation
        ),
    ))
}
