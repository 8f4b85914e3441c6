//! Continuous-time random walk generated by the Neumann Laplacian.
//!
//! The walker waits an exponential(1) time, proposes one of the 2d lattice
//! directions uniformly, and jumps iff the proposed edge is open; closed
//! edges and steps off a free box reject the proposal.  That dynamic has
//! generator Delta_N / (2d), so transition probabilities equal matrix
//! elements of exp(-t Delta_N / (2d)) and every estimate here can be
//! cross-checked against the spectral side.
//!
//! On side-2 tori the wrap edge and the direct edge between a pair are
//! identified, and only the canonical direction of the surviving edge is
//! open in the proposal table; the duplicate direction rejects.  This keeps
//! the walk generated by exactly the operator the assembly produces.
//!
//! The annealed return estimate averages the origin return frequency over
//! configurations, counting a configuration as zero when the origin misses
//! the percolating proxy cluster; the time parameter t is mapped to the
//! physical horizon 2d*t.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::ClusterDecomposition;
use crate::error::{Error, Result};
use crate::ids::{LaplaceCurve, CONFIDENCE_Z};
use crate::lattice::{sample_configuration, BoxGeometry, Configuration};
use crate::rng::{derive_seed, stream};

/// Parameters of one quenched walk simulation.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WalkParams {
    /// Physical time horizon (rate-1 clock); 0 returns the start vertex.
    pub t_max: f64,
    pub n_walks: usize,
    pub start: usize,
    pub seed: u64,
}

/// Monte Carlo return-probability estimate at one time.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ReturnEstimate {
    pub t: f64,
    pub probability: f64,
    /// Binomial normal-approximation half-width at 95%.
    pub half_width: f64,
    pub n_walks: usize,
    pub excluded_samples: usize,
}

/// Open-edge proposal table: slot v * 2d + 2 * axis + dir holds the target
/// vertex, or u32::MAX when the proposal rejects.
pub struct WalkTable {
    coordination: usize,
    targets: Vec<u32>,
}

impl WalkTable {
    pub fn new(config: &Configuration) -> Self {
        let geom = config.geometry();
        let coordination = geom.coordination();
        let mut targets = vec![u32::MAX; geom.vertices() * coordination];
        // A canonical edge steps in the + direction from its base `a` to
        // reach `b`, whether direct or wrapping, so each open edge opens
        // exactly two slots.
        for (idx, edge) in geom.edges().iter().enumerate() {
            if !config.is_open(idx) {
                continue;
            }
            targets[edge.a * coordination + 2 * edge.axis] = edge.b as u32;
            targets[edge.b * coordination + 2 * edge.axis + 1] = edge.a as u32;
        }
        Self {
            coordination,
            targets,
        }
    }

    pub fn coordination(&self) -> usize {
        self.coordination
    }

    fn target(&self, v: usize, slot: usize) -> Option<usize> {
        let t = self.targets[v * self.coordination + slot];
        (t != u32::MAX).then_some(t as usize)
    }
}

/// Positions of one walk at each of the (ascending) `times`, single pass.
/// Consumption order per event is fixed: one waiting-time draw, then one
/// proposal draw; the walk is right-continuous at jump instants.
pub fn walk_positions<R: Rng>(
    table: &WalkTable,
    start: usize,
    times: &[f64],
    rng: &mut R,
) -> Vec<usize> {
    let mut out = Vec::with_capacity(times.len());
    let mut pos = start;
    let mut clock = 0.0f64;
    let mut idx = 0usize;
    while idx < times.len() {
        // Inverse-CDF exponential: u in [0,1) makes the argument positive.
        let wait = -(1.0 - rng.random::<f64>()).ln();
        let event = clock + wait;
        while idx < times.len() && times[idx] < event {
            out.push(pos);
            idx += 1;
        }
        if idx == times.len() {
            break;
        }
        clock = event;
        let u: f64 = rng.random();
        let slot = ((u * table.coordination as f64) as usize).min(table.coordination - 1);
        if let Some(t) = table.target(pos, slot) {
            pos = t;
        }
    }
    out
}

fn validate_start(config: &Configuration, start: usize) -> Result<()> {
    if start >= config.geometry().vertices() {
        return Err(Error::InvalidParameter(format!(
            "start vertex {start} outside box of {} vertices",
            config.geometry().vertices()
        )));
    }
    Ok(())
}

fn validate_horizon(t: f64) -> Result<()> {
    if !t.is_finite() || t < 0.0 {
        return Err(Error::InvalidParameter(format!(
            "time horizon must be finite and non-negative, got {t}"
        )));
    }
    Ok(())
}

/// Final vertex of one walk.
pub fn simulate_walk(config: &Configuration, params: &WalkParams) -> Result<usize> {
    validate_start(config, params.start)?;
    validate_horizon(params.t_max)?;
    let table = WalkTable::new(config);
    let mut rng = stream(params.seed);
    Ok(walk_positions(&table, params.start, &[params.t_max], &mut rng)[0])
}

/// Jump trace of one walk: (event time, new position), beginning with
/// (0, start).  Rejected proposals do not appear.
pub fn simulate_walk_trace(config: &Configuration, params: &WalkParams) -> Result<Vec<(f64, usize)>> {
    validate_start(config, params.start)?;
    validate_horizon(params.t_max)?;
    let table = WalkTable::new(config);
    let mut rng = stream(params.seed);
    let mut trace = vec![(0.0, params.start)];
    let mut clock = 0.0f64;
    let mut pos = params.start;
    loop {
        let wait = -(1.0 - rng.random::<f64>()).ln();
        clock += wait;
        if clock > params.t_max {
            return Ok(trace);
        }
        let u: f64 = rng.random();
        let slot = ((u * table.coordination as f64) as usize).min(table.coordination - 1);
        if let Some(t) = table.target(pos, slot) {
            pos = t;
            trace.push((clock, pos));
        }
    }
}

fn binomial_half_width(hits: usize, n: usize) -> f64 {
    let phat = hits as f64 / n as f64;
    CONFIDENCE_Z * (phat * (1.0 - phat) / n as f64).sqrt()
}

/// Monte Carlo frequency of Z_t = x for the walk started at x, with
/// counter-derived per-walk seeds.
pub fn return_probability(
    config: &Configuration,
    x: usize,
    t: f64,
    n_walks: usize,
    seed: u64,
) -> Result<ReturnEstimate> {
    validate_start(config, x)?;
    validate_horizon(t)?;
    if n_walks == 0 {
        return Err(Error::InvalidParameter("n_walks must be positive".into()));
    }
    let table = WalkTable::new(config);
    let hits = (0..n_walks)
        .into_par_iter()
        .map(|w| {
            let mut rng = stream(derive_seed(seed, w as u64));
            usize::from(walk_positions(&table, x, &[t], &mut rng)[0] == x)
        })
        .sum::<usize>();
    Ok(ReturnEstimate {
        t,
        probability: hits as f64 / n_walks as f64,
        half_width: binomial_half_width(hits, n_walks),
        n_walks,
        excluded_samples: 0,
    })
}

/// Annealed return probability on the percolating cluster: mean over
/// configurations of the origin return frequency at physical time 2d*t,
/// zero for configurations whose proxy cluster misses the origin (those are
/// flagged as excluded but stay in the average).  The origin is the box
/// center.
pub fn annealed_return(
    geometry: BoxGeometry,
    p: f64,
    t_grid: &[f64],
    configs: usize,
    walks_per_config: usize,
    master_seed: u64,
) -> Result<LaplaceCurve> {
    if t_grid.is_empty() {
        return Err(Error::GridMismatch("empty time grid".into()));
    }
    if t_grid.iter().any(|t| !t.is_finite() || *t < 0.0) {
        return Err(Error::GridMismatch(
            "time grid points must be finite and non-negative".into(),
        ));
    }
    if t_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::GridMismatch(
            "time grid points must be strictly increasing".into(),
        ));
    }
    if configs == 0 || walks_per_config == 0 {
        return Err(Error::InvalidParameter(
            "configs and walks_per_config must be positive".into(),
        ));
    }
    let origin = geometry.center();
    let horizon: Vec<f64> = t_grid
        .iter()
        .map(|&t| geometry.coordination() as f64 * t)
        .collect();
    let rows: Vec<(Vec<f64>, bool)> = (0..configs)
        .into_par_iter()
        .map(|i| -> Result<(Vec<f64>, bool)> {
            let config_seed = derive_seed(master_seed, i as u64);
            let config = sample_configuration(geometry, p, config_seed)?;
            let dec = ClusterDecomposition::new(&config);
            let in_proxy = dec
                .percolating_proxy()
                .is_some_and(|c| dec.label(origin) == c);
            if !in_proxy {
                return Ok((vec![0.0; t_grid.len()], true));
            }
            let table = WalkTable::new(&config);
            let mut hits = vec![0usize; t_grid.len()];
            for w in 0..walks_per_config {
                let mut rng = stream(derive_seed(config_seed, w as u64));
                for (j, pos) in walk_positions(&table, origin, &horizon, &mut rng)
                    .into_iter()
                    .enumerate()
                {
                    hits[j] += usize::from(pos == origin);
                }
            }
            let freq = hits
                .into_iter()
                .map(|h| h as f64 / walks_per_config as f64)
                .collect();
            Ok((freq, false))
        })
        .collect::<Result<_>>()?;

    let excluded = rows.iter().filter(|r| r.1).count();
    let mut values = Vec::with_capacity(t_grid.len());
    let mut half_widths = Vec::with_capacity(t_grid.len());
    for j in 0..t_grid.len() {
        let column: Vec<f64> = rows.iter().map(|r| r.0[j]).collect();
        let mean = column.iter().sum::<f64>() / configs as f64;
        let hw = if configs >= 2 {
            let var = column.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (configs - 1) as f64;
            CONFIDENCE_Z * (var / configs as f64).sqrt()
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
        method: "from_walk".into(),
        samples: configs,
        excluded_samples: excluded,
    })
}

/// CSV export of a return-probability series.
pub fn return_series_csv(series: &[ReturnEstimate]) -> String {
    let mut out = String::from("# perclap-csv v1 kind=return_series\n");
    out.push_str("t,probability,half_width,n\n");
    for r in series {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.t, r.probability, r.half_width, r.n_walks
        ));
    }
    out
}
