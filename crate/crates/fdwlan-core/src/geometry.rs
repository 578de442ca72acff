//! Circle-intersection and annulus mathematics.
//!
//! The AP sits at the origin of a disk of radius `r` (the common transmission
//! range). A station at distance `d` from the AP hides every point of the AP's
//! disk that lies farther than `r` from the station: the crescent left after
//! removing the lens shared by the two disks. Everything else here derives
//! from that crescent, either over the whole disk or restricted to one of `M`
//! equal-width concentric annuli.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of a basic service set: AP at the origin, `stations` STAs inside
/// the disk of radius `radius`, which is split into `annuli` rings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub radius: f64,
    pub annuli: usize,
    pub stations: usize,
}

impl GeometryConfig {
    pub fn new(radius: f64, annuli: usize, stations: usize) -> Result<Self> {
        let cfg = Self {
            radius,
            annuli,
            stations,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.radius.is_finite() && self.radius > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "radius must be positive, got {}",
                self.radius
            )));
        }
        if self.annuli == 0 {
            return Err(Error::InvalidConfig("annulus count must be >= 1".into()));
        }
        if self.stations == 0 {
            return Err(Error::InvalidConfig("station count must be >= 1".into()));
        }
        Ok(())
    }

    /// Outer radius of annulus `i` (1-based); `boundary(0) == 0`.
    pub fn boundary(&self, i: usize) -> f64 {
        if i == self.annuli {
            self.radius
        } else {
            i as f64 * self.radius / self.annuli as f64
        }
    }

    /// Representative distance of annulus `i` (1-based): its mid-width radius.
    pub fn representative_distance(&self, i: usize) -> f64 {
        (2 * i - 1) as f64 * self.radius / (2 * self.annuli) as f64
    }
}

/// Boundary radii, representative distances and expected station counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnulusLayout {
    /// `M + 1` boundaries, `radii[0] == 0`, `radii[M] == r`.
    pub radii: Vec<f64>,
    /// `M` representative distances `d_i`.
    pub distances: Vec<f64>,
    /// `M` expected (fractional) station counts `n_i`.
    pub node_counts: Vec<f64>,
    /// Total station count `n`.
    pub stations: usize,
}

impl AnnulusLayout {
    pub fn annuli(&self) -> usize {
        self.distances.len()
    }

    pub fn total_nodes(&self) -> f64 {
        self.node_counts.iter().sum()
    }
}

/// Expected hidden-station counts seen from each annulus.
#[derive(Debug, Clone, PartialEq)]
pub struct HiddenCounts {
    /// `h_i = (n - 1) p_h(d_i)`.
    pub h: Vec<f64>,
    /// `h_cond[i][j]`: expected hidden stations in annulus `j` as seen from
    /// annulus `i`.
    pub h_cond: Vec<Vec<f64>>,
    /// `p_h(d_i)`.
    pub p_h: Vec<f64>,
    /// `p_cond[i][j]`: probability that a station uniform in annulus `j` is
    /// hidden from a station at `d_i`.
    pub p_cond: Vec<Vec<f64>>,
}

impl HiddenCounts {
    /// All-zero counts for `annuli` rings (no hidden terminals at all).
    pub fn none(annuli: usize) -> Self {
        Self {
            h: vec![0.0; annuli],
            h_cond: vec![vec![0.0; annuli]; annuli],
            p_h: vec![0.0; annuli],
            p_cond: vec![vec![0.0; annuli]; annuli],
        }
    }
}

/// How the per-annulus hidden counts `h_{i|j}` are scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HiddenNormalization {
    /// `h_{i|j} = n_j p_{h(i|j)}`; sums over `j` to `n p_h(d_i)`.
    Literal,
    /// `h_{i|j} = (n-1)/n · n_j p_{h(i|j)}`; sums over `j` to `h_i` exactly,
    /// and vanishes for a single station.
    #[default]
    Rescaled,
}

fn check_length(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and >= 0, got {v}")))
    }
}

/// Area of the intersection of two disks of radii `ra`, `rb` whose centers
/// are `d` apart.
pub fn lens_area(ra: f64, rb: f64, d: f64) -> Result<f64> {
    check_length("radius", ra)?;
    check_length("radius", rb)?;
    check_length("distance", d)?;
    Ok(lens_area_unchecked(ra, rb, d))
}

fn lens_area_unchecked(ra: f64, rb: f64, d: f64) -> f64 {
    if ra == 0.0 || rb == 0.0 || d >= ra + rb {
        return 0.0;
    }
    if d <= (ra - rb).abs() {
        let small = ra.min(rb);
        return PI * small * small;
    }
    let ca = ((d * d + ra * ra - rb * rb) / (2.0 * d * ra)).clamp(-1.0, 1.0);
    let cb = ((d * d + rb * rb - ra * ra) / (2.0 * d * rb)).clamp(-1.0, 1.0);
    let kite = (-d + ra + rb) * (d + ra - rb) * (d - ra + rb) * (d + ra + rb);
    let area = ra * ra * ca.acos() + rb * rb * cb.acos() - 0.5 * kite.max(0.0).sqrt();
    area.clamp(0.0, PI * ra.min(rb).powi(2))
}

fn check_inside(r: f64, d: f64) -> Result<()> {
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::Domain(format!("radius must be positive, got {r}")));
    }
    check_length("distance", d)?;
    if d > r {
        return Err(Error::Domain(format!(
            "station at distance {d} lies outside the AP range {r}"
        )));
    }
    Ok(())
}

/// Area of the crescent hidden from a station at distance `d` from the AP.
pub fn hidden_area(r: f64, d: f64) -> Result<f64> {
    check_inside(r, d)?;
    Ok(hidden_area_unchecked(r, d))
}

fn hidden_area_unchecked(r: f64, d: f64) -> f64 {
    let c = (d / (2.0 * r)).clamp(-1.0, 1.0);
    let area = PI * r * r - 2.0 * r * r * c.acos() + 0.5 * d * (4.0 * r * r - d * d).max(0.0).sqrt();
    area.max(0.0)
}

/// Probability that a station uniform in the AP's disk is hidden from a
/// station at distance `d`.
pub fn hidden_prob(r: f64, d: f64) -> Result<f64> {
    check_inside(r, d)?;
    Ok(hidden_prob_unchecked(r, d))
}

fn hidden_prob_unchecked(r: f64, d: f64) -> f64 {
    (hidden_area_unchecked(r, d) / (PI * r * r)).clamp(0.0, 1.0)
}

/// Hidden probability at the outermost representative distance `d_M`.
pub fn max_hidden_prob(annuli: usize) -> f64 {
    let cfg = GeometryConfig {
        radius: 1.0,
        annuli,
        stations: 1,
    };
    hidden_prob_unchecked(1.0, cfg.representative_distance(annuli))
}

pub fn annulus_layout(cfg: &GeometryConfig) -> Result<AnnulusLayout> {
    cfg.validate()?;
    let m = cfg.annuli;
    let m2 = (m * m) as f64;
    let n = cfg.stations as f64;
    Ok(AnnulusLayout {
        radii: (0..=m).map(|i| cfg.boundary(i)).collect(),
        distances: (1..=m).map(|i| cfg.representative_distance(i)).collect(),
        node_counts: (1..=m).map(|i| n * (2 * i - 1) as f64 / m2).collect(),
        stations: cfg.stations,
    })
}

// Part of the disk of radius `rj` (centered on the AP) that lies outside the
// station's coverage disk.
fn uncovered_area(r: f64, rj: f64, d: f64) -> f64 {
    if rj == 0.0 || d + rj <= r {
        return 0.0;
    }
    (PI * rj * rj - lens_area_unchecked(r, rj, d)).max(0.0)
}

/// Probability that a station uniform in annulus `j` is hidden from a station
/// at the representative distance of annulus `i` (both 1-based).
pub fn cond_hidden_prob(cfg: &GeometryConfig, i: usize, j: usize) -> Result<f64> {
    cfg.validate()?;
    let m = cfg.annuli;
    if i == 0 || i > m || j == 0 || j > m {
        return Err(Error::IndexOutOfRange { i, j, annuli: m });
    }
    Ok(cond_hidden_prob_unchecked(cfg, i, j))
}

fn cond_hidden_prob_unchecked(cfg: &GeometryConfig, i: usize, j: usize) -> f64 {
    let r = cfg.radius;
    let d = cfg.representative_distance(i);
    let outer = cfg.boundary(j);
    let inner = cfg.boundary(j - 1);
    let ring = (uncovered_area(r, outer, d) - uncovered_area(r, inner, d)).max(0.0);
    (ring / (PI * (outer * outer - inner * inner))).clamp(0.0, 1.0)
}

pub fn hidden_counts(cfg: &GeometryConfig, normalization: HiddenNormalization) -> Result<HiddenCounts> {
    let layout = annulus_layout(cfg)?;
    let m = cfg.annuli;
    let n = cfg.stations as f64;
    let scale = match normalization {
        HiddenNormalization::Literal => 1.0,
        HiddenNormalization::Rescaled => (n - 1.0) / n,
    };
    let p_h: Vec<f64> = layout
        .distances
        .iter()
        .map(|&d| hidden_prob_unchecked(cfg.radius, d))
        .collect();
    let p_cond: Vec<Vec<f64>> = (1..=m)
        .map(|i| (1..=m).map(|j| cond_hidden_prob_unchecked(cfg, i, j)).collect())
        .collect();
    let h = p_h.iter().map(|p| (n - 1.0) * p).collect();
    let h_cond = p_cond
        .iter()
        .map(|row| {
            row.iter()
                .zip(&layout.node_counts)
                .map(|(p, nj)| scale * nj * p)
                .collect()
        })
        .collect();
    Ok(HiddenCounts { h, h_cond, p_h, p_cond })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn cfg(r: f64, m: usize, n: usize) -> GeometryConfig {
        GeometryConfig::new(r, m, n).unwrap()
    }

    #[test]
    fn lens_branches() {
        assert_eq!(lens_area(1.0, 1.0, 2.0).unwrap(), 0.0);
        assert_eq!(lens_area(1.0, 1.0, 3.5).unwrap(), 0.0);
        assert_relative_eq!(lens_area(1.0, 1.0, 0.0).unwrap(), PI);
        assert_relative_eq!(lens_area(1.0, 0.3, 0.5).unwrap(), PI * 0.09);
        let expected = 2.0 * 0.5f64.acos() - 3f64.sqrt() / 2.0;
        assert_relative_eq!(lens_area(1.0, 1.0, 1.0).unwrap(), expected, epsilon = 1e-14);
        assert_relative_eq!(expected, 1.228370, epsilon = 1e-6);
    }

    #[test]
    fn lens_rejects_negative() {
        assert!(matches!(lens_area(-1.0, 1.0, 0.5), Err(Error::Domain(_))));
        assert!(matches!(lens_area(1.0, 1.0, -0.1), Err(Error::Domain(_))));
        assert!(lens_area(1.0, f64::NAN, 0.1).is_err());
    }

    #[test]
    fn hidden_area_values() {
        assert_eq!(hidden_area(1.0, 0.0).unwrap(), 0.0);
        assert_relative_eq!(
            hidden_area(1.0, 1.0).unwrap(),
            PI / 3.0 + 3f64.sqrt() / 2.0,
            epsilon = 1e-14
        );
        assert_relative_eq!(
            hidden_area(1.0, 0.5).unwrap(),
            PI - lens_area(1.0, 1.0, 0.5).unwrap(),
            epsilon = 1e-14
        );
        assert!(matches!(hidden_area(1.0, 1.01), Err(Error::Domain(_))));
    }

    #[test]
    fn hidden_prob_values() {
        assert_eq!(hidden_prob(1.0, 0.0).unwrap(), 0.0);
        let max = hidden_prob(1.0, 1.0).unwrap();
        assert_relative_eq!(max, (PI / 3.0 + 3f64.sqrt() / 2.0) / PI, epsilon = 1e-15);
        assert!((max - 0.609).abs() < 5e-4);
        assert!((hidden_prob(1.0, 0.9).unwrap() - 0.5530).abs() < 5e-5);
        assert!(hidden_prob(1.0, 2.0).is_err());
    }

    #[test]
    fn layout_examples() {
        let l = annulus_layout(&cfg(1.0, 5, 10)).unwrap();
        for (got, want) in l.distances.iter().zip([0.1, 0.3, 0.5, 0.7, 0.9]) {
            assert_relative_eq!(*got, want, epsilon = 1e-15);
        }
        for (got, want) in l.node_counts.iter().zip([0.4, 1.2, 2.0, 2.8, 3.6]) {
            assert_relative_eq!(*got, want, epsilon = 1e-14);
        }
        assert_eq!(l.radii.len(), 6);
        assert_eq!(l.radii[0], 0.0);
        assert_eq!(l.radii[5], 1.0);

        let l = annulus_layout(&cfg(1.0, 1, 7)).unwrap();
        assert_eq!(l.distances, vec![0.5]);
        assert_eq!(l.node_counts, vec![7.0]);

        let l = annulus_layout(&cfg(2.0, 2, 4)).unwrap();
        assert_eq!(l.distances, vec![0.5, 1.5]);
        assert_eq!(l.node_counts, vec![1.0, 3.0]);
    }

    #[test]
    fn config_validation() {
        assert!(GeometryConfig::new(0.0, 1, 1).is_err());
        assert!(GeometryConfig::new(1.0, 0, 1).is_err());
        assert!(GeometryConfig::new(1.0, 1, 0).is_err());
    }

    #[test]
    fn covered_annulus_is_never_hidden() {
        // d_1 + r_1 = 0.1 + 0.2 <= 1
        assert_eq!(cond_hidden_prob(&cfg(1.0, 5, 10), 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn single_annulus_matches_whole_disk() {
        let c = cfg(1.0, 1, 3);
        assert_relative_eq!(
            cond_hidden_prob(&c, 1, 1).unwrap(),
            hidden_prob(1.0, 0.5).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn cond_index_range() {
        let c = cfg(1.0, 3, 3);
        assert!(matches!(cond_hidden_prob(&c, 0, 1), Err(Error::IndexOutOfRange { .. })));
        assert!(matches!(cond_hidden_prob(&c, 1, 4), Err(Error::IndexOutOfRange { .. })));
    }

    #[test]
    fn counts_examples() {
        let hc = hidden_counts(&cfg(1.0, 5, 1), HiddenNormalization::Literal).unwrap();
        assert!(hc.h.iter().all(|&h| h == 0.0));

        let hc = hidden_counts(&cfg(1.0, 1, 11), HiddenNormalization::Literal).unwrap();
        assert_relative_eq!(hc.h[0], 10.0 * hidden_prob(1.0, 0.5).unwrap(), epsilon = 1e-12);

        let hc = hidden_counts(&cfg(1.0, 5, 20), HiddenNormalization::Literal).unwrap();
        for w in hc.h.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn normalization_modes() {
        let c = cfg(1.0, 5, 20);
        let lit = hidden_counts(&c, HiddenNormalization::Literal).unwrap();
        let res = hidden_counts(&c, HiddenNormalization::Rescaled).unwrap();
        for i in 0..5 {
            let sum_lit: f64 = lit.h_cond[i].iter().sum();
            let sum_res: f64 = res.h_cond[i].iter().sum();
            assert_relative_eq!(sum_lit, 20.0 * lit.p_h[i], epsilon = 1e-9);
            assert_relative_eq!(sum_res, res.h[i], epsilon = 1e-9);
        }
        let single = hidden_counts(&cfg(1.0, 4, 1), HiddenNormalization::Rescaled).unwrap();
        assert!(single.h_cond.iter().flatten().all(|&h| h == 0.0));
    }

    #[test]
    fn fig4_curve_is_increasing() {
        let values: Vec<f64> = (1..=50).map(max_hidden_prob).collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
        assert!(values[49] < hidden_prob(1.0, 1.0).unwrap());
    }
}
