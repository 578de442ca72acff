use std::f64::consts::TAU;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::rng::{substream, TOPOLOGY_STREAM};
use crate::geometry::{annulus_layout, GeometryConfig};

/// How stations are placed inside the AP's range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyMode {
    /// I.i.d. uniform over the disk (area-uniform).
    #[default]
    Sampled,
    /// Stations sit exactly on the representative distances, with the
    /// expected annulus populations rounded by largest remainder and uniform
    /// random bearings.
    Pinned,
}

/// Station positions around an AP at the origin. Station `k` is node `k + 1`
/// in the simulator; the AP never has hidden peers.
#[derive(Debug, Clone, PartialEq)]
pub struct Topology {
    pub radius: f64,
    pub positions: Vec<[f64; 2]>,
    /// Zero-based annulus of each station.
    pub annulus: Vec<usize>,
    /// `hidden[a][b]`: stations `a` and `b` are farther apart than the range.
    pub hidden: Vec<Vec<bool>>,
}

impl Topology {
    pub fn from_positions(geometry: &GeometryConfig, positions: Vec<[f64; 2]>) -> Self {
        let r = geometry.radius;
        let m = geometry.annuli;
        let annulus = positions
            .iter()
            .map(|p| {
                let dist = p[0].hypot(p[1]);
                ((dist / r * m as f64).ceil() as usize).clamp(1, m) - 1
            })
            .collect();
        let hidden = positions
            .iter()
            .map(|a| positions.iter().map(|b| (a[0] - b[0]).hypot(a[1] - b[1]) > r).collect())
            .collect();
        Self {
            radius: r,
            positions,
            annulus,
            hidden,
        }
    }

    pub fn stations(&self) -> usize {
        self.positions.len()
    }

    pub fn distance(&self, station: usize) -> f64 {
        let p = self.positions[station];
        p[0].hypot(p[1])
    }

    pub fn hidden_peers(&self, station: usize) -> Vec<usize> {
        self.hidden[station]
            .iter()
            .enumerate()
            .filter_map(|(k, &h)| h.then_some(k))
            .collect()
    }
}

/// Rounds fractional counts to integers summing to `total` (largest
/// remainder; ties go to the lower index).
pub fn apportion(counts: &[f64], total: usize) -> Vec<usize> {
    let mut out: Vec<usize> = counts.iter().map(|c| c.floor() as usize).collect();
    let assigned: usize = out.iter().sum();
    let mut order: Vec<usize> = (0..counts.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = counts[a] - counts[a].floor();
        let rb = counts[b] - counts[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &k in order.iter().cycle().take(total.saturating_sub(assigned)) {
        out[k] += 1;
    }
    out
}

pub fn sample_topology(geometry: &GeometryConfig, mode: TopologyMode, seed: u64) -> Topology {
    let mut rng = substream(seed, TOPOLOGY_STREAM);
    let r = geometry.radius;
    let positions = match mode {
        TopologyMode::Sampled => (0..geometry.stations)
            .map(|_| {
                let rho = r * rng.random::<f64>().sqrt();
                let theta = TAU * rng.random::<f64>();
                [rho * theta.cos(), rho * theta.sin()]
            })
            .collect(),
        TopologyMode::Pinned => {
            let layout = annulus_layout(geometry).expect("validated geometry");
            let counts = apportion(&layout.node_counts, geometry.stations);
            let mut positions = Vec::with_capacity(geometry.stations);
            for (&d, &count) in layout.distances.iter().zip(&counts) {
                for _ in 0..count {
                    let theta = TAU * rng.random::<f64>();
                    positions.push([d * theta.cos(), d * theta.sin()]);
                }
            }
            positions
        }
    };
    let mut topo = Topology::from_positions(geometry, positions);
    if mode == TopologyMode::Pinned {
        // Pinned stations sit on annulus mid-lines; recompute from the layout
        // so that boundary rounding cannot move them.
        let layout = annulus_layout(geometry).expect("validated geometry");
        let counts = apportion(&layout.node_counts, geometry.stations);
        topo.annulus = counts
            .iter()
            .enumerate()
            .flat_map(|(i, &c)| std::iter::repeat_n(i, c))
            .collect();
    }
    topo
}
