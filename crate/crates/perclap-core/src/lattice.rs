//! Finite boxes of the hyper-cubic lattice and Bernoulli bond configurations.
//!
//! Vertices of a box of side `L` in dimension `d` are indexed row-major with
//! the last coordinate varying fastest.  Edges are enumerated in a canonical
//! order: axis-major, then ascending base vertex; each unordered pair appears
//! exactly once.  Everything downstream (occupation bitstrings, operator
//! assembly, walk tables) keys off this order, so it must never change.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Boundary identification of the box.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Topology {
    /// No identification; vertices on the faces have fewer lattice neighbors.
    Free,
    /// Opposite faces identified (torus).
    Periodic,
}

impl std::fmt::Display for Topology {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Topology::Free => write!(f, "free"),
            Topology::Periodic => write!(f, "periodic"),
        }
    }
}

/// An undirected lattice edge.  `a` is the base vertex, `b` its neighbor in
/// the positive `axis` direction (possibly across the periodic wrap).
#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub axis: usize,
}

impl Edge {
    /// Endpoints with the smaller index first.
    pub fn endpoints(&self) -> (usize, usize) {
        if self.a <= self.b {
            (self.a, self.b)
        } else {
            (self.b, self.a)
        }
    }
}

#[derive(Serialize, Deserialize)]
struct GeometryRepr {
    d: usize,
    #[serde(rename = "L")]
    side: usize,
    topology: Topology,
}

/// A box `{0, ..., L-1}^d` with free or periodic identification.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
#[serde(try_from = "GeometryRepr", into = "GeometryRepr")]
pub struct BoxGeometry {
    d: usize,
    side: usize,
    topology: Topology,
    vertices: usize,
}

impl TryFrom<GeometryRepr> for BoxGeometry {
    type Error = Error;
    fn try_from(r: GeometryRepr) -> Result<Self> {
        BoxGeometry::new(r.d, r.side, r.topology)
    }
}

impl From<BoxGeometry> for GeometryRepr {
    fn from(g: BoxGeometry) -> Self {
        GeometryRepr {
            d: g.d,
            side: g.side,
            topology: g.topology,
        }
    }
}

impl BoxGeometry {
    pub fn new(d: usize, side: usize, topology: Topology) -> Result<Self> {
        if d == 0 || d > 8 {
            return Err(Error::InvalidGeometry(format!(
                "dimension must be in 1..=8, got {d}"
            )));
        }
        if side == 0 {
            return Err(Error::InvalidGeometry("side must be positive".into()));
        }
        let vertices = side
            .checked_pow(d as u32)
            .filter(|&n| n <= (u32::MAX as usize))
            .ok_or_else(|| {
                Error::InvalidGeometry(format!("box {side}^{d} has too many vertices"))
            })?;
        Ok(Self {
            d,
            side,
            topology,
            vertices,
        })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn topology(&self) -> Topology {
        self.topology
    }

    pub fn vertices(&self) -> usize {
        self.vertices
    }

    /// Coordination number of the infinite lattice; spectra of all operator
    /// variants live in `[0, 2 * coordination()]`.
    pub fn coordination(&self) -> usize {
        2 * self.d
    }

    /// Index stride of one step along `axis`.
    pub fn stride(&self, axis: usize) -> usize {
        debug_assert!(axis < self.d);
        self.side.pow((self.d - 1 - axis) as u32)
    }

    pub fn coords(&self, mut v: usize) -> Vec<usize> {
        debug_assert!(v < self.vertices);
        let mut c = vec![0usize; self.d];
        for axis in (0..self.d).rev() {
            c[axis] = v % self.side;
            v /= self.side;
        }
        c
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        debug_assert_eq!(coords.len(), self.d);
        let mut v = 0usize;
        for &c in coords {
            debug_assert!(c < self.side);
            v = v * self.side + c;
        }
        v
    }

    /// Vertex closest to the middle of the box, used as the canonical walk
    /// origin.  On a torus every vertex is equivalent; on a free box the
    /// center keeps the boundary as far away as possible.
    pub fn center(&self) -> usize {
        let c = vec![self.side / 2; self.d];
        self.index(&c)
    }

    /// Number of box faces the vertex lies on, counting opposite faces
    /// separately.  Zero on periodic boxes.
    pub fn boundary_degree(&self, v: usize) -> usize {
        match self.topology {
            Topology::Periodic => 0,
            Topology::Free => {
                let mut b = 0;
                let mut rest = v;
                for _ in 0..self.d {
                    let c = rest % self.side;
                    rest /= self.side;
                    if c == 0 {
                        b += 1;
                    }
                    if c == self.side - 1 {
                        b += 1;
                    }
                }
                b
            }
        }
    }

    /// Neighbor of `v` one step along `axis` in direction `dir` (+1/-1).
    /// `None` when the step exits a free box.  On periodic boxes with side 1
    /// the neighbor is the vertex itself; no edge corresponds to it.
    pub fn neighbor(&self, v: usize, axis: usize, dir: i8) -> Option<usize> {
        let s = self.stride(axis);
        let c = (v / s) % self.side;
        match (self.topology, dir >= 0) {
            (Topology::Free, true) => (c + 1 < self.side).then(|| v + s),
            (Topology::Free, false) => (c > 0).then(|| v - s),
            (Topology::Periodic, true) => Some(if c + 1 < self.side {
                v + s
            } else {
                v - c * s
            }),
            (Topology::Periodic, false) => Some(if c > 0 {
                v - s
            } else {
                v + (self.side - 1) * s
            }),
        }
    }

    /// Total number of lattice edges, in closed form.
    pub fn edge_count(&self) -> usize {
        let d = self.d;
        let l = self.side;
        match self.topology {
            Topology::Free => d * (l - 1) * l.pow((d - 1) as u32),
            Topology::Periodic => match l {
                1 => 0,
                // A wrap edge and a direct edge between the same pair are
                // identified, so side 2 has one edge per adjacent pair.
                2 => d * l.pow((d - 1) as u32),
                _ => d * self.vertices,
            },
        }
    }

    /// Canonical edge enumeration: for each axis in order, all base vertices
    /// in ascending index order.  Periodic wrap edges are emitted at the base
    /// with the largest coordinate; on side-2 tori the wrap duplicate is
    /// dropped so each unordered pair appears once.
    pub fn edges(&self) -> Vec<Edge> {
        let mut out = Vec::with_capacity(self.edge_count());
        for axis in 0..self.d {
            let s = self.stride(axis);
            for v in 0..self.vertices {
                let c = (v / s) % self.side;
                match self.topology {
                    Topology::Free => {
                        if c + 1 < self.side {
                            out.push(Edge {
                                a: v,
                                b: v + s,
                                axis,
                            });
                        }
                    }
                    Topology::Periodic => {
                        if c + 1 < self.side {
                            out.push(Edge {
                                a: v,
                                b: v + s,
                                axis,
                            });
                        } else if self.side >= 3 {
                            out.push(Edge {
                                a: v,
                                b: v - c * s,
                                axis,
                            });
                        }
                    }
                }
            }
        }
        debug_assert_eq!(out.len(), self.edge_count());
        out
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigurationRepr {
    d: usize,
    #[serde(rename = "L")]
    side: usize,
    topology: Topology,
    p: f64,
    seed: u64,
    /// Occupation bits in canonical edge order, packed LSB-first into bytes
    /// and hex encoded.
    occupation: String,
}

/// A Bernoulli bond configuration on a box: one open/closed bit per edge in
/// canonical order, together with the parameters that produced it.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
#[serde(try_from = "ConfigurationRepr", into = "ConfigurationRepr")]
pub struct Configuration {
    geometry: BoxGeometry,
    p: f64,
    seed: u64,
    occupation: Vec<bool>,
}

impl Configuration {
    /// Rebuild a configuration from raw parts, validating the bit count.
    pub fn from_parts(
        geometry: BoxGeometry,
        p: f64,
        seed: u64,
        occupation: Vec<bool>,
    ) -> Result<Self> {
        if occupation.len() != geometry.edge_count() {
            return Err(Error::DimensionMismatch(format!(
                "occupation has {} bits, geometry has {} edges",
                occupation.len(),
                geometry.edge_count()
            )));
        }
        validate_probability(p)?;
        Ok(Self {
            geometry,
            p,
            seed,
            occupation,
        })
    }

    /// The configuration with every edge open (the full lattice).
    pub fn fully_open(geometry: BoxGeometry) -> Self {
        Self {
            geometry,
            p: 1.0,
            seed: 0,
            occupation: vec![true; geometry.edge_count()],
        }
    }

    pub fn geometry(&self) -> &BoxGeometry {
        &self.geometry
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn occupation(&self) -> &[bool] {
        &self.occupation
    }

    pub fn is_open(&self, edge_index: usize) -> bool {
        self.occupation[edge_index]
    }

    pub fn open_count(&self) -> usize {
        self.occupation.iter().filter(|&&b| b).count()
    }

    pub fn closed_count(&self) -> usize {
        self.occupation.len() - self.open_count()
    }

    /// Force the occupation bits of specific edges; used to build
    /// hand-constructed configurations in tests and diagnostics.
    pub fn set_open(&mut self, edge_index: usize, open: bool) {
        self.occupation[edge_index] = open;
    }
}

fn validate_probability(p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) || !p.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "probability must lie in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Draw a Bernoulli(p) configuration.  Bits are drawn in canonical edge
/// order from a dedicated stream, so a (geometry, p, seed) triple pins the
/// configuration exactly; `p = 0` and `p = 1` are reproduced without
/// randomness artifacts.
pub fn sample_configuration(geometry: BoxGeometry, p: f64, seed: u64) -> Result<Configuration> {
    validate_probability(p)?;
    use rand::Rng;
    let mut gen = rng::stream(seed);
    let occupation: Vec<bool> = (0..geometry.edge_count())
        .map(|_| gen.random::<f64>() < p)
        .collect();
    Ok(Configuration {
        geometry,
        p,
        seed,
        occupation,
    })
}

impl TryFrom<ConfigurationRepr> for Configuration {
    type Error = Error;
    fn try_from(r: ConfigurationRepr) -> Result<Self> {
        let geometry = BoxGeometry::new(r.d, r.side, r.topology)?;
        let bytes = hex::decode(&r.occupation)
            .map_err(|e| Error::Serialization(format!("occupation hex: {e}")))?;
        let m = geometry.edge_count();
        if bytes.len() != m.div_ceil(8) {
            return Err(Error::Serialization(format!(
                "occupation encodes {} bytes, expected {} for {} edges",
                bytes.len(),
                m.div_ceil(8),
                m
            )));
        }
        let mut occupation = Vec::with_capacity(m);
        for k in 0..m {
            occupation.push(bytes[k / 8] >> (k % 8) & 1 == 1);
        }
        // Reject nonzero padding so every configuration has one encoding.
        for k in m..bytes.len() * 8 {
            if bytes[k / 8] >> (k % 8) & 1 == 1 {
                return Err(Error::Serialization(
                    "occupation has nonzero padding bits".into(),
                ));
            }
        }
        validate_probability(r.p)?;
        Ok(Self {
            geometry,
            p: r.p,
            seed: r.seed,
            occupation,
        })
    }
}

impl From<Configuration> for ConfigurationRepr {
    fn from(c: Configuration) -> Self {
        let m = c.occupation.len();
        let mut bytes = vec![0u8; m.div_ceil(8)];
        for (k, &open) in c.occupation.iter().enumerate() {
            if open {
                bytes[k / 8] |= 1 << (k % 8);
            }
        }
        ConfigurationRepr {
            d: c.geometry.d,
            side: c.geometry.side,
            topology: c.geometry.topology,
            p: c.p,
            seed: c.seed,
            occupation: hex::encode(bytes),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn edge_counts_match_closed_forms() {
        let cases = [
            (1, 3, Topology::Free, 2),
            (2, 3, Topology::Free, 12),
            (2, 4, Topology::Periodic, 32),
            (3, 3, Topology::Periodic, 81),
            (2, 2, Topology::Periodic, 4),
            (2, 1, Topology::Periodic, 0),
            (2, 1, Topology::Free, 0),
            (3, 4, Topology::Free, 144),
        ];
        for (d, l, topo, expect) in cases {
            let g = BoxGeometry::new(d, l, topo).unwrap();
            assert_eq!(g.edge_count(), expect, "d={d} L={l} {topo}");
            assert_eq!(g.edges().len(), expect);
        }
    }

    #[test]
    fn path_graph_edges_are_canonical() {
        let g = BoxGeometry::new(1, 3, Topology::Free).unwrap();
        let e: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(e, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn square_free_edges_are_axis_major() {
        let g = BoxGeometry::new(2, 3, Topology::Free).unwrap();
        let e: Vec<(usize, usize, usize)> = g.edges().iter().map(|e| (e.a, e.b, e.axis)).collect();
        let expect = vec![
            (0, 3, 0),
            (1, 4, 0),
            (2, 5, 0),
            (3, 6, 0),
            (4, 7, 0),
            (5, 8, 0),
            (0, 1, 1),
            (1, 2, 1),
            (3, 4, 1),
            (4, 5, 1),
            (6, 7, 1),
            (7, 8, 1),
        ];
        assert_eq!(e, expect);
    }

    #[test]
    fn periodic_wrap_edges_close_each_ring() {
        let g = BoxGeometry::new(1, 4, Topology::Periodic).unwrap();
        let e: Vec<(usize, usize)> = g.edges().iter().map(|e| (e.a, e.b)).collect();
        assert_eq!(e, vec![(0, 1), (1, 2), (2, 3), (3, 0)]);
    }

    #[test]
    fn side_two_torus_has_single_edges() {
        let g = BoxGeometry::new(2, 2, Topology::Periodic).unwrap();
        let mut pairs: Vec<(usize, usize)> = g.edges().iter().map(|e| e.endpoints()).collect();
        pairs.sort();
        pairs.dedup();
        assert_eq!(pairs.len(), 4);
    }

    #[test]
    fn coords_index_roundtrip() {
        for (d, l, topo) in [
            (2, 5, Topology::Free),
            (3, 4, Topology::Periodic),
            (1, 7, Topology::Free),
        ] {
            let g = BoxGeometry::new(d, l, topo).unwrap();
            for v in 0..g.vertices() {
                assert_eq!(g.index(&g.coords(v)), v);
            }
        }
    }

    #[test]
    fn boundary_degree_counts_faces() {
        let g = BoxGeometry::new(2, 3, Topology::Free).unwrap();
        // corner, edge midpoint, center
        assert_eq!(g.boundary_degree(0), 2);
        assert_eq!(g.boundary_degree(1), 1);
        assert_eq!(g.boundary_degree(4), 0);
        let gp = BoxGeometry::new(2, 3, Topology::Periodic).unwrap();
        for v in 0..gp.vertices() {
            assert_eq!(gp.boundary_degree(v), 0);
        }
    }

    #[test]
    fn neighbor_agrees_with_edges() {
        for topo in [Topology::Free, Topology::Periodic] {
            let g = BoxGeometry::new(2, 4, topo).unwrap();
            for e in g.edges() {
                assert_eq!(g.neighbor(e.a, e.axis, 1), Some(e.b));
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_respects_extremes() {
        let g = BoxGeometry::new(2, 8, Topology::Periodic).unwrap();
        let a = sample_configuration(g, 0.5, 42).unwrap();
        let b = sample_configuration(g, 0.5, 42).unwrap();
        assert_eq!(a, b);
        let c = sample_configuration(g, 0.5, 43).unwrap();
        assert_ne!(a, c);

        let empty = sample_configuration(g, 0.0, 1).unwrap();
        assert_eq!(empty.open_count(), 0);
        let full = sample_configuration(g, 1.0, 1).unwrap();
        assert_eq!(full.open_count(), g.edge_count());
    }

    #[test]
    fn open_counts_track_binomial_mean() {
        // 100 fixed seeds on an 8064-edge box; the aggregate open count is a
        // Binomial(806400, 0.5) draw, checked to four standard deviations.
        let g = BoxGeometry::new(2, 64, Topology::Free).unwrap();
        assert_eq!(g.edge_count(), 8064);
        let mut total = 0usize;
        for seed in 0..100 {
            total += sample_configuration(g, 0.5, seed).unwrap().open_count();
        }
        let trials: f64 = 100.0 * 8064.0;
        let mean = 0.5 * trials;
        let sd = (trials * 0.25).sqrt();
        assert!(
            (total as f64 - mean).abs() < 4.0 * sd,
            "total {total} outside 4 sigma of {mean}"
        );
    }

    #[test]
    fn configuration_json_roundtrip() {
        let g = BoxGeometry::new(2, 3, Topology::Free).unwrap();
        let c = sample_configuration(g, 0.37, 7).unwrap();
        let json = serde_json::to_string(&c).unwrap();
        assert!(json.contains("\"L\":3"));
        assert!(json.contains("\"topology\":\"free\""));
        let back: Configuration = serde_json::from_str(&json).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn configuration_rejects_corrupt_padding() {
        let g = BoxGeometry::new(1, 3, Topology::Free).unwrap();
        // 2 edges need 1 byte; bit 2 is padding and must be zero.
        let json = r#"{"d":1,"L":3,"topology":"free","p":0.5,"seed":0,"occupation":"07"}"#;
        assert!(serde_json::from_str::<Configuration>(json).is_err());
        let ok = r#"{"d":1,"L":3,"topology":"free","p":0.5,"seed":0,"occupation":"03"}"#;
        let c: Configuration = serde_json::from_str(ok).unwrap();
        assert_eq!(c.open_count(), 2);
        let _ = g;
    }

    #[test]
    fn geometry_rejects_bad_parameters() {
        assert!(BoxGeometry::new(0, 4, Topology::Free).is_err());
        assert!(BoxGeometry::new(2, 0, Topology::Free).is_err());
        assert!(BoxGeometry::new(8, 1 << 12, Topology::Free).is_err());
        assert!(sample_configuration(
            BoxGeometry::new(1, 2, Topology::Free).unwrap(),
            1.5,
            0
        )
        .is_err());
    }
}
