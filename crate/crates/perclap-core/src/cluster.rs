//! Connected components of the open-edge graph.
//!
//! A weighted union-find carries, for each vertex, its displacement from the
//! current root measured in the universal cover of the box.  Merging two
//! vertices already in the same component with inconsistent displacements
//! certifies that the component wraps around the torus; this is the standard
//! way to detect wrapping without growing the box.  On free boxes a
//! component "spans" when it touches two opposite faces of the same axis.

use serde::Serialize;

use crate::lattice::{Configuration, Topology};

struct DisplacementUnionFind {
    parent: Vec<u32>,
    size: Vec<u32>,
    /// disp[v*d..(v+1)*d] = position(v) - position(parent(v)) in cover
    /// coordinates; maintained so that after `find` it is relative to the
    /// root.
    disp: Vec<i32>,
    d: usize,
    wrapped: Vec<bool>,
}

impl DisplacementUnionFind {
    fn new(n: usize, d: usize) -> Self {
        Self {
            parent: (0..n as u32).collect(),
            size: vec![1; n],
            disp: vec![0; n * d],
            d,
            wrapped: vec![false; n],
        }
    }

    /// Root of `v`, compressing the path and re-basing displacements onto
    /// the root.
    fn find(&mut self, v: usize) -> usize {
        let mut r = v;
        let mut path = Vec::new();
        while self.parent[r] as usize != r {
            path.push(r);
            r = self.parent[r] as usize;
        }
        // Walk back from the node nearest the root; its parent is already
        // the root, so displacements accumulate in one pass.
        for &u in path.iter().rev() {
            let p = self.parent[u] as usize;
            if p != r {
                for k in 0..self.d {
                    self.disp[u * self.d + k] += self.disp[p * self.d + k];
                }
            }
            self.parent[u] = r as u32;
        }
        r
    }

    /// Join the components of `a` and `b` through an edge whose cover
    /// displacement from `a` to `b` is `delta` (a lattice unit vector).
    fn union(&mut self, a: usize, b: usize, delta: &[i32]) {
        let ra = self.find(a);
        let rb = self.find(b);
        if ra == rb {
            // position(b) - position(a) must equal delta; otherwise the
            // component closes a nontrivial loop around the torus.
            for k in 0..self.d {
                if self.disp[a * self.d + k] + delta[k] != self.disp[b * self.d + k] {
                    self.wrapped[ra] = true;
                    break;
                }
            }
            return;
        }
        let (keep, drop) = if self.size[ra] >= self.size[rb] {
            (ra, rb)
        } else {
            (rb, ra)
        };
        // position(rb) - position(ra) = delta + disp[a] - disp[b]; negate
        // when the attachment goes the other way.
        for k in 0..self.d {
            let rel = delta[k] + self.disp[a * self.d + k] - self.disp[b * self.d + k];
            self.disp[drop * self.d + k] = if drop == rb { rel } else { -rel };
        }
        self.parent[drop] = keep as u32;
        self.size[keep] += self.size[drop];
        self.wrapped[keep] |= self.wrapped[drop];
    }
}

/// The components of a configuration, with dense labels `0..cluster_count`.
#[derive(Clone, Debug)]
pub struct ClusterDecomposition {
    labels: Vec<u32>,
    sizes: Vec<u32>,
    spanning: Vec<bool>,
    percolating_proxy: Option<u32>,
}

impl ClusterDecomposition {
    /// Decompose the open-edge graph of `config`.
    ///
    /// The percolating-cluster proxy is the largest wrapping component
    /// (periodic boxes) or the largest face-to-face spanning component (free
    /// boxes); ties break toward the smaller label.  When no component
    /// qualifies the proxy is absent: the box shows no candidate for the
    /// infinite cluster and callers must skip, not substitute.
    pub fn new(config: &Configuration) -> Self {
        let geom = config.geometry();
        let n = geom.vertices();
        let d = geom.d();
        let mut uf = DisplacementUnionFind::new(n, d);
        let mut delta = vec![0i32; d];
        for (idx, edge) in geom.edges().iter().enumerate() {
            if !config.is_open(idx) {
                continue;
            }
            for k in 0..d {
                delta[k] = if k == edge.axis { 1 } else { 0 };
            }
            uf.union(edge.a, edge.b, &delta);
        }

        // Dense labels in order of first appearance by vertex index.
        let mut labels = vec![u32::MAX; n];
        let mut sizes = Vec::new();
        let mut wrapped = Vec::new();
        let mut root_label = vec![u32::MAX; n];
        for v in 0..n {
            let r = uf.find(v);
            if root_label[r] == u32::MAX {
                root_label[r] = sizes.len() as u32;
                sizes.push(uf.size[r]);
                wrapped.push(uf.wrapped[r]);
            }
            labels[v] = root_label[r];
        }
        let k = sizes.len();

        let spanning = match geom.topology() {
            Topology::Periodic => wrapped,
            Topology::Free => {
                // A component spans iff along some axis it touches both the
                // coordinate-0 face and the coordinate-(L-1) face.
                let mut lo = vec![false; k];
                let mut hi = vec![false; k];
                let mut spanning = vec![false; k];
                let l = geom.side();
                for axis in 0..d {
                    lo.iter_mut().for_each(|b| *b = false);
                    hi.iter_mut().for_each(|b| *b = false);
                    let s = geom.stride(axis);
                    for v in 0..n {
                        let c = (v / s) % l;
                        if c == 0 {
                            lo[labels[v] as usize] = true;
                        }
                        if c == l - 1 {
                            hi[labels[v] as usize] = true;
                        }
                    }
                    for c in 0..k {
                        spanning[c] |= lo[c] && hi[c];
                    }
                }
                spanning
            }
        };

        let percolating_proxy = (0..k)
            .filter(|&c| spanning[c])
            .max_by_key(|&c| (sizes[c], std::cmp::Reverse(c)))
            .map(|c| c as u32);

        Self {
            labels,
            sizes,
            spanning,
            percolating_proxy,
        }
    }

    pub fn cluster_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn label(&self, v: usize) -> u32 {
        self.labels[v]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn size_of(&self, cluster: u32) -> usize {
        self.sizes[cluster as usize] as usize
    }

    pub fn sizes(&self) -> &[u32] {
        &self.sizes
    }

    pub fn is_spanning(&self, cluster: u32) -> bool {
        self.spanning[cluster as usize]
    }

    /// Largest wrapping/spanning component, if any.
    pub fn percolating_proxy(&self) -> Option<u32> {
        self.percolating_proxy
    }

    /// Vertices of `cluster` in ascending index order.
    pub fn members(&self, cluster: u32) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == cluster)
            .map(|(v, _)| v)
            .collect()
    }

    pub fn largest_cluster(&self) -> (u32, usize) {
        let mut best = 0u32;
        for c in 1..self.sizes.len() {
            if self.sizes[c] > self.sizes[best as usize] {
                best = c as u32;
            }
        }
        (best, self.sizes[best as usize] as usize)
    }

    /// (size, multiplicity) pairs in ascending size order.
    pub fn size_histogram(&self) -> Vec<(usize, usize)> {
        let mut map = std::collections::BTreeMap::new();
        for &s in &self.sizes {
            *map.entry(s as usize).or_insert(0usize) += 1;
        }
        map.into_iter().collect()
    }

    /// Fraction of box vertices lying in finite (non-proxy) components of
    /// size at least `min_size`.  With no proxy present every component
    /// counts as finite.
    pub fn finite_mass_at_least(&self, min_size: usize) -> f64 {
        let n = self.labels.len();
        let mut mass = 0usize;
        for (c, &s) in self.sizes.iter().enumerate() {
            if Some(c as u32) == self.percolating_proxy {
                continue;
            }
            if s as usize >= min_size {
                mass += s as usize;
            }
        }
        mass as f64 / n as f64
    }
}

/// Per-configuration summary used by the command line and by ensemble
/// averages.
#[derive(Clone, Debug, Serialize)]
pub struct ClusterStatistics {
    pub vertices: usize,
    pub cluster_count: usize,
    /// cluster_count / vertices
    pub component_density: f64,
    /// fraction of vertices with every incident edge closed
    pub isolated_density: f64,
    pub largest_size: usize,
    pub largest_fraction: f64,
    pub spanning_clusters: usize,
    /// 0 when no wrapping/spanning component exists
    pub proxy_fraction: f64,
    pub has_proxy: bool,
    pub size_histogram: Vec<(usize, usize)>,
}

pub fn cluster_statistics(config: &Configuration) -> ClusterStatistics {
    let dec = ClusterDecomposition::new(config);
    statistics_from(&dec, config)
}

pub fn statistics_from(dec: &ClusterDecomposition, config: &Configuration) -> ClusterStatistics {
    let n = config.geometry().vertices();
    let isolated = dec.sizes().iter().filter(|&&s| s == 1).count();
    let (_, largest) = dec.largest_cluster();
    let spanning = (0..dec.cluster_count() as u32)
        .filter(|&c| dec.is_spanning(c))
        .count();
    let proxy_fraction = dec
        .percolating_proxy()
        .map(|c| dec.size_of(c) as f64 / n as f64)
        .unwrap_or(0.0);
    ClusterStatistics {
        vertices: n,
        cluster_count: dec.cluster_count(),
        component_density: dec.cluster_count() as f64 / n as f64,
        isolated_density: isolated as f64 / n as f64,
        largest_size: largest,
        largest_fraction: largest as f64 / n as f64,
        spanning_clusters: spanning,
        proxy_fraction,
        has_proxy: dec.percolating_proxy().is_some(),
        size_histogram: dec.size_histogram(),
    }
}
