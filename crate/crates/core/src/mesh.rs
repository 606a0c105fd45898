//! Graph shortest paths on a surface of revolution `E(u) du² + G(u) dθ²`
//! with a pole at `u = 0`.
//!
//! Nodes sit on rings `u_i = i·u_max/n_u`, `θ_k = 2πk/n_θ`, plus one pole
//! node. Each node is joined to the neighbours in a 3×3-reach stencil of
//! primitive offsets; edge weights are the metric length of the straight
//! parameter segment (3-point Gauss). The pole is joined radially to the first
//! rings with exact lengths.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;
use std::f64::consts::PI;

const STENCIL_REACH: i64 = 3;
const POLE_RINGS: usize = 3;

// 3-point Gauss–Legendre on [0, 1]
const GL3: [(f64, f64); 3] = [
    (0.112_701_665_379_258_3, 5.0 / 18.0),
    (0.5, 8.0 / 18.0),
    (0.887_298_334_620_741_7, 5.0 / 18.0),
];

fn gcd(a: i64, b: i64) -> i64 {
    if b == 0 {
        a.abs()
    } else {
        gcd(b, a % b)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Dist(f64);

impl Eq for Dist {}

impl PartialOrd for Dist {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dist {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Debug, Clone)]
pub struct RevolutionMesh {
    u: Vec<f64>,
    n_theta: usize,
    /// Arc length from the pole along a meridian at each ring.
    rho: Vec<f64>,
    adj: Vec<Vec<(usize, f64)>>,
}

impl RevolutionMesh {
    /// `metric(u) = (E, G)`.
    pub fn new(u_max: f64, n_u: usize, n_theta: usize, metric: impl Fn(f64) -> (f64, f64)) -> Self {
        assert!(u_max > 0.0 && n_u >= 2 && n_theta >= 8);
        let du = u_max / n_u as f64;
        let u: Vec<f64> = (0..=n_u).map(|i| i as f64 * du).collect();
        let dth = 2.0 * PI / n_theta as f64;

        let seg = |u0: f64, u1: f64, dtheta: f64| -> f64 {
            GL3.iter()
                .map(|&(t, wt)| {
                    let (e, g) = metric(u0 + t * (u1 - u0));
                    wt * (e * (u1 - u0).powi(2) + g * dtheta * dtheta).sqrt()
                })
                .sum()
        };
        let mut rho = vec![0.0; n_u + 1];
        for i in 1..=n_u {
            rho[i] = rho[i - 1] + seg(u[i - 1], u[i], 0.0);
        }

        let n_nodes = 1 + n_u * n_theta;
        let mut adj = vec![Vec::new(); n_nodes];
        let idx = |ring: usize, k: usize| 1 + (ring - 1) * n_theta + k;

        for (ring, &d) in rho.iter().enumerate().take(POLE_RINGS.min(n_u) + 1).skip(1) {
            for k in 0..n_theta {
                let j = idx(ring, k);
                adj[0].push((j, d));
                adj[j].push((0, d));
            }
        }

        let mut offsets = vec![];
        for di in -STENCIL_REACH..=STENCIL_REACH {
            for dk in -STENCIL_REACH..=STENCIL_REACH {
                if (di, dk) != (0, 0) && gcd(di, dk) == 1 {
                    offsets.push((di, dk));
                }
            }
        }
        for ring in 1..=n_u {
            for k in 0..n_theta {
                let from = idx(ring, k);
                for &(di, dk) in &offsets {
                    let r2 = ring as i64 + di;
                    if r2 < 1 || r2 > n_u as i64 {
                        continue;
                    }
                    let k2 = (k as i64 + dk).rem_euclid(n_theta as i64) as usize;
                    let len = seg(u[ring], u[r2 as usize], dk as f64 * dth);
                    adj[from].push((idx(r2 as usize, k2), len));
                }
            }
        }
        Self {
            u,
            n_theta,
            rho,
            adj,
        }
    }

    pub fn len(&self) -> usize {
        self.adj.len()
    }

    pub fn is_empty(&self) -> bool {
        self.adj.is_empty()
    }

    pub fn rings(&self) -> usize {
        self.u.len() - 1
    }

    pub fn n_theta(&self) -> usize {
        self.n_theta
    }

    pub fn pole(&self) -> usize {
        0
    }

    /// Node on ring `ring ≥ 1` at angle index `k`.
    pub fn node(&self, ring: usize, k: usize) -> usize {
        assert!(ring >= 1 && ring <= self.rings());
        1 + (ring - 1) * self.n_theta + k % self.n_theta
    }

    /// `(u, θ)` of a node.
    pub fn coords(&self, node: usize) -> (f64, f64) {
        if node == 0 {
            return (0.0, 0.0);
        }
        let ring = 1 + (node - 1) / self.n_theta;
        let k = (node - 1) % self.n_theta;
        (self.u[ring], 2.0 * PI * k as f64 / self.n_theta as f64)
    }

    /// Meridian arc length from the pole to ring `ring`.
    pub fn meridian_length(&self, ring: usize) -> f64 {
        self.rho[ring]
    }

    pub fn distances_from(&self, src: usize) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.len()];
        let mut heap = BinaryHeap::new();
        dist[src] = 0.0;
        heap.push(Reverse((Dist(0.0), src)));
        while let Some(Reverse((Dist(d), v))) = heap.pop() {
            if d > dist[v] {
                continue;
            }
            for &(to, w) in &self.adj[v] {
                let nd = d + w;
                if nd < dist[to] {
                    dist[to] = nd;
                    heap.push(Reverse((Dist(nd), to)));
                }
            }
        }
        dist
    }

    pub fn eccentricity(&self, src: usize) -> f64 {
        self.distances_from(src).into_iter().fold(0.0, f64::max)
    }

    /// Diameter, taking eccentricities from the pole and from one node on
    /// every fourth ring and on the boundary ring. Rotational symmetry makes
    /// one node per ring representative.
    pub fn diameter(&self) -> f64 {
        let n = self.rings();
        let mut sources = vec![self.pole()];
        sources.extend((1..=n).filter(|i| i % 4 == 0 || *i == n).map(|i| self.node(i, 0)));
        sources
            .into_iter()
            .map(|s| self.eccentricity(s))
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodesic::{warped_geodesic, GeodesicOptions, WarpedPoint};
    use crate::warped::{CigarWarp, Dim, Warp, WarpedMetric};
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn cigar_mesh(n_u: usize, n_theta: usize) -> RevolutionMesh {
        let w = CigarWarp { scale: 1.0 };
        RevolutionMesh::new(4.0, n_u, n_theta, move |u| (1.0, w.jet(u).w.powi(2)))
    }

    #[test]
    fn tip_to_rho_three_is_three() {
        let m = cigar_mesh(40, 64);
        let d = m.distances_from(m.pole());
        assert_relative_eq!(d[m.node(30, 7)], 3.0, max_relative = 1e-12);
    }

    #[test]
    fn flat_disk_diameter() {
        let m = RevolutionMesh::new(1.0, 24, 96, |u| (1.0, u * u));
        assert_relative_eq!(m.diameter(), 2.0, max_relative = 1e-9);
    }

    #[test]
    fn agrees_with_shooting_on_cigar() {
        let metric = WarpedMetric::new(Dim::Two, Arc::new(CigarWarp { scale: 1.0 }));
        let coarse = cigar_mesh(40, 96);
        let fine = cigar_mesh(80, 192);
        let (r1, r2, t) = (1.0, 2.5, PI / 3.0);
        let exact = warped_geodesic(
            &metric,
            WarpedPoint::polar(r1, 0.0),
            WarpedPoint::polar(r2, t),
            GeodesicOptions::default(),
        )
        .unwrap()
        .length;
        let probe = |m: &RevolutionMesh, scale: usize| {
            let k = (t / (2.0 * PI) * m.n_theta() as f64).round() as usize;
            m.distances_from(m.node(10 * scale, 0))[m.node(25 * scale, k)]
        };
        let (dc, df) = (probe(&coarse, 1), probe(&fine, 2));
        assert!(dc >= exact * (1.0 - 1e-6) && df >= exact * (1.0 - 1e-6), "{dc} {df} {exact}");
        assert!((df - exact) / exact < 0.01, "mesh {df} vs shooting {exact}");
        assert!((dc - exact) / exact < 0.01, "mesh {dc} vs shooting {exact}");
    }

    #[test]
    fn dijkstra_is_symmetric() {
        let m = cigar_mesh(20, 32);
        let (a, b) = (m.node(5, 3), m.node(17, 20));
        assert_relative_eq!(m.distances_from(a)[b], m.distances_from(b)[a], max_relative = 1e-14);
    }
}
