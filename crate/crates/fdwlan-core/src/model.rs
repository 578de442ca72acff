//! The coupled backoff/collision fixed point.
//!
//! Unknowns are the AP's transmission and conditional collision probabilities
//! plus one pair per annulus, `2M + 2` in total. Each transmission probability
//! follows from its collision probability through the binary exponential
//! backoff chain; each collision probability follows from everyone's
//! transmission probabilities, the hidden-station counts and, in the FD
//! regime, the extra success paths opened by simultaneous AP + STA access.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{
    annulus_layout, hidden_counts, AnnulusLayout, GeometryConfig, HiddenCounts, HiddenNormalization,
};

/// Whether nodes may complete a transmission while receiving.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    /// Full duplex: AP + exactly one STA accessing together may both succeed.
    Fd,
    /// Half duplex: any simultaneous access is a collision.
    Hd,
}

impl Regime {
    pub fn as_str(self) -> &'static str {
        match self {
            Regime::Fd => "fd",
            Regime::Hd => "hd",
        }
    }
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BackoffParams {
    /// Minimum contention window `W`; backoff is uniform on `[0, W - 1]`.
    pub cw_min: u32,
    /// Maximum backoff stage `m`; the largest window is `W * 2^m`.
    pub max_stage: u32,
    /// RTS airtime in slots; the hidden-station vulnerable window spans
    /// `2 * rho - 1` slots.
    pub rho: u32,
}

impl BackoffParams {
    pub fn new(cw_min: u32, max_stage: u32, rho: u32) -> Result<Self> {
        let bp = Self { cw_min, max_stage, rho };
        bp.validate()?;
        Ok(bp)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cw_min == 0 {
            return Err(Error::InvalidConfig("minimum contention window must be >= 1".into()));
        }
        if self.rho == 0 {
            return Err(Error::InvalidConfig("rho must be >= 1".into()));
        }
        if self.max_stage > 30 {
            return Err(Error::InvalidConfig(format!(
                "maximum backoff stage {} is unreasonably large",
                self.max_stage
            )));
        }
        Ok(())
    }

    /// Transmission probability of a node that never collides.
    pub fn collision_free_tau(&self) -> f64 {
        2.0 / (self.cw_min as f64 + 1.0)
    }

    pub fn vulnerable_slots(&self) -> f64 {
        (2 * self.rho - 1) as f64
    }
}

/// Form of the AP's FD success term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ApSuccessTerm {
    /// `sum_i (h_i + 1)/n * n_i * tau_i * pi_i`: the chance that exactly one
    /// STA transmits, it sits in annulus `i`, and the AP's destination is that
    /// STA or one hidden from it.
    #[default]
    Weighted,
    /// `sum_i (h_i + 1)/n * tau_i * pi_i`, without the per-annulus population.
    /// Can drive `p_ap` negative for small `n` with several annuli.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelOptions {
    pub h_normalization: HiddenNormalization,
    pub ap_term: ApSuccessTerm,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    pub damping: f64,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            damping: 0.5,
            tolerance: 1e-10,
            max_iterations: 100_000,
        }
    }
}

impl SolverSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(Error::InvalidConfig(format!(
                "damping must lie in (0, 1], got {}",
                self.damping
            )));
        }
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 || self.max_iterations == 0 {
            return Err(Error::InvalidConfig(
                "solver tolerance and iteration cap must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixedPointSolution {
    pub tau_ap: f64,
    pub tau_sta: Vec<f64>,
    pub p_ap: f64,
    pub p_sta: Vec<f64>,
    pub iterations: usize,
    /// Largest damped step the solver would still take from this point.
    pub residual: f64,
    pub regime: Regime,
}

/// Transmission probability of a saturated node whose attempts collide with
/// probability `p`.
///
/// Uses `2 / (W + 1 + p W sum_{k<m} (2p)^k)`, which equals the textbook
/// ratio everywhere and stays finite at `p = 1/2`.
pub fn tau_of_p(p: f64, bp: &BackoffParams) -> f64 {
    let p = p.clamp(0.0, 1.0);
    let w = bp.cw_min as f64;
    let mut geometric = 0.0;
    let mut term = 1.0;
    for _ in 0..bp.max_stage {
        geometric += term;
        term *= 2.0 * p;
    }
    2.0 / (w + 1.0 + p * w * geometric)
}

/// Probability that no STA other than one in annulus `i` (zero-based) starts
/// transmitting in the same slot.
///
/// The own-annulus exponent `n_i - 1` may be negative when `n_i < 1`; the
/// total exponent is always `n - 1`. The product is capped at 1.
pub fn pi_factor(i: usize, tau_sta: &[f64], layout: &AnnulusLayout) -> f64 {
    let mut acc = 1.0;
    for (j, (&tau, &nj)) in tau_sta.iter().zip(&layout.node_counts).enumerate() {
        let exponent = if j == i { nj - 1.0 } else { nj };
        acc *= (1.0 - tau).powf(exponent);
    }
    acc.clamp(0.0, 1.0)
}

fn hidden_silence(i: usize, tau_sta: &[f64], hidden: &HiddenCounts, bp: &BackoffParams) -> f64 {
    let window = bp.vulnerable_slots();
    tau_sta
        .iter()
        .zip(&hidden.h_cond[i])
        .map(|(&tau, &h)| (1.0 - tau).powf(h * window))
        .product()
}

fn all_stations_silent(tau_sta: &[f64], layout: &AnnulusLayout) -> f64 {
    tau_sta
        .iter()
        .zip(&layout.node_counts)
        .map(|(&tau, &n)| (1.0 - tau).powf(n))
        .product()
}

/// Conditional collision probability of an STA in annulus `i` (zero-based).
pub fn p_sta(
    i: usize,
    tau_ap: f64,
    tau_sta: &[f64],
    layout: &AnnulusLayout,
    hidden: &HiddenCounts,
    bp: &BackoffParams,
    regime: Regime,
) -> f64 {
    let pi = pi_factor(i, tau_sta, layout);
    let alone = (1.0 - tau_ap) * hidden_silence(i, tau_sta, hidden, bp);
    let with_ap = match regime {
        Regime::Fd => tau_ap,
        Regime::Hd => 0.0,
    };
    (1.0 - pi * (alone + with_ap)).clamp(0.0, 1.0)
}

pub fn p_sta_fd(
    i: usize,
    tau_ap: f64,
    tau_sta: &[f64],
    layout: &AnnulusLayout,
    hidden: &HiddenCounts,
    bp: &BackoffParams,
) -> f64 {
    p_sta(i, tau_ap, tau_sta, layout, hidden, bp, Regime::Fd)
}

pub fn p_sta_hd(
    i: usize,
    tau_ap: f64,
    tau_sta: &[f64],
    layout: &AnnulusLayout,
    hidden: &HiddenCounts,
    bp: &BackoffParams,
) -> f64 {
    p_sta(i, tau_ap, tau_sta, layout, hidden, bp, Regime::Hd)
}

/// Probability that the AP's transmission succeeds thanks to simultaneous
/// access by exactly one STA (symmetric or asymmetric FD).
pub fn ap_fd_success(tau_sta: &[f64], layout: &AnnulusLayout, hidden: &HiddenCounts, term: ApSuccessTerm) -> f64 {
    let n = layout.stations as f64;
    (0..tau_sta.len())
        .map(|i| {
            let weight = match term {
                ApSuccessTerm::Weighted => layout.node_counts[i],
                ApSuccessTerm::Literal => 1.0,
            };
            (hidden.h[i] + 1.0) / n * weight * tau_sta[i] * pi_factor(i, tau_sta, layout)
        })
        .sum()
}

/// Conditional collision probability of the AP.
pub fn p_ap(
    tau_sta: &[f64],
    layout: &AnnulusLayout,
    hidden: &HiddenCounts,
    regime: Regime,
    term: ApSuccessTerm,
) -> f64 {
    let alone = all_stations_silent(tau_sta, layout);
    let fd = match regime {
        Regime::Fd => ap_fd_success(tau_sta, layout, hidden, term),
        Regime::Hd => 0.0,
    };
    (1.0 - (alone + fd)).clamp(0.0, 1.0)
}

pub fn p_ap_fd(tau_sta: &[f64], layout: &AnnulusLayout, hidden: &HiddenCounts, term: ApSuccessTerm) -> f64 {
    p_ap(tau_sta, layout, hidden, Regime::Fd, term)
}

pub fn p_ap_hd(tau_sta: &[f64], layout: &AnnulusLayout, hidden: &HiddenCounts) -> f64 {
    p_ap(tau_sta, layout, hidden, Regime::Hd, ApSuccessTerm::Weighted)
}

/// A fully assembled instance of the fixed-point system.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub layout: AnnulusLayout,
    pub hidden: HiddenCounts,
    pub backoff: BackoffParams,
    pub regime: Regime,
    pub ap_term: ApSuccessTerm,
}

impl Model {
    pub fn new(
        geometry: &GeometryConfig,
        backoff: BackoffParams,
        regime: Regime,
        options: ModelOptions,
    ) -> Result<Self> {
        backoff.validate()?;
        let layout = annulus_layout(geometry)?;
        let hidden = hidden_counts(geometry, options.h_normalization)?;
        Ok(Self {
            layout,
            hidden,
            backoff,
            regime,
            ap_term: options.ap_term,
        })
    }

    /// Builds a model from explicit layout and hidden counts.
    pub fn from_parts(
        layout: AnnulusLayout,
        hidden: HiddenCounts,
        backoff: BackoffParams,
        regime: Regime,
        ap_term: ApSuccessTerm,
    ) -> Result<Self> {
        backoff.validate()?;
        let m = layout.annuli();
        if hidden.h.len() != m || hidden.h_cond.len() != m || hidden.h_cond.iter().any(|r| r.len() != m) {
            return Err(Error::InvalidConfig(
                "hidden counts do not match the annulus layout".into(),
            ));
        }
        Ok(Self {
            layout,
            hidden,
            backoff,
            regime,
            ap_term,
        })
    }

    pub fn annuli(&self) -> usize {
        self.layout.annuli()
    }

    /// One application of the fixed-point map to `(tau_ap, tau_sta, p_ap, p_sta)`.
    pub fn map(&self, tau_ap: f64, tau_sta: &[f64], p_ap_in: f64, p_sta_in: &[f64]) -> (f64, Vec<f64>, f64, Vec<f64>) {
        let bp = &self.backoff;
        let next_tau_ap = tau_of_p(p_ap_in, bp);
        let next_tau_sta = p_sta_in.iter().map(|&p| tau_of_p(p, bp)).collect();
        let next_p_ap = p_ap(tau_sta, &self.layout, &self.hidden, self.regime, self.ap_term);
        let next_p_sta = (0..self.annuli())
            .map(|i| p_sta(i, tau_ap, tau_sta, &self.layout, &self.hidden, bp, self.regime))
            .collect();
        (next_tau_ap, next_tau_sta, next_p_ap, next_p_sta)
    }

    /// Largest `|F(x) - x|` over all unknowns of `sol`.
    pub fn fixed_point_residual(&self, sol: &FixedPointSolution) -> f64 {
        let (ta, ts, pa, ps) = self.map(sol.tau_ap, &sol.tau_sta, sol.p_ap, &sol.p_sta);
        let mut worst = (ta - sol.tau_ap).abs().max((pa - sol.p_ap).abs());
        for (a, b) in ts.iter().zip(&sol.tau_sta).chain(ps.iter().zip(&sol.p_sta)) {
            worst = worst.max((a - b).abs());
        }
        worst
    }

    /// Damped fixed-point iteration `x <- (1 - lambda) x + lambda F(x)`,
    /// started from the collision-free point.
    pub fn solve(&self, settings: &SolverSettings) -> Result<FixedPointSolution> {
        settings.validate()?;
        let m = self.annuli();
        let lambda = settings.damping;
        let tau0 = self.backoff.collision_free_tau();
        let mut sol = FixedPointSolution {
            tau_ap: tau0,
            tau_sta: vec![tau0; m],
            p_ap: 0.0,
            p_sta: vec![0.0; m],
            iterations: 0,
            residual: f64::INFINITY,
            regime: self.regime,
        };
        let blend = |old: f64, new: f64| (1.0 - lambda) * old + lambda * new;

        for iteration in 1..=settings.max_iterations {
            let (ta, ts, pa, ps) = self.map(sol.tau_ap, &sol.tau_sta, sol.p_ap, &sol.p_sta);
            // The step that would be taken from the current iterate. When it
            // is small enough the current iterate is returned, so the map
            // residual at the result is bounded by tolerance / damping.
            let residual = std::iter::once((ta, sol.tau_ap))
                .chain(std::iter::once((pa, sol.p_ap)))
                .chain(ts.iter().copied().zip(sol.tau_sta.iter().copied()))
                .chain(ps.iter().copied().zip(sol.p_sta.iter().copied()))
                .map(|(target, old)| (blend(old, target) - old).abs())
                .fold(0.0f64, |acc, x| if x.is_nan() { f64::NAN } else { acc.max(x) });
            sol.iterations = iteration;
            sol.residual = residual;
            if !residual.is_finite() {
                break;
            }
            if residual <= settings.tolerance {
                return Ok(sol);
            }
            sol.tau_ap = blend(sol.tau_ap, ta);
            sol.p_ap = blend(sol.p_ap, pa);
            for (slot, target) in sol.tau_sta.iter_mut().zip(ts) {
                *slot = blend(*slot, target);
            }
            for (slot, target) in sol.p_sta.iter_mut().zip(ps) {
                *slot = blend(*slot, target);
            }
        }
        Err(Error::NotConverged {
            iterations: sol.iterations,
            residual: sol.residual,
            last: Box::new(sol),
        })
    }
}

/// Solves with default options and solver settings.
pub fn solve(geometry: &GeometryConfig, backoff: BackoffParams, regime: Regime) -> Result<FixedPointSolution> {
    Model::new(geometry, backoff, regime, ModelOptions::default())?.solve(&SolverSettings::default())
}
