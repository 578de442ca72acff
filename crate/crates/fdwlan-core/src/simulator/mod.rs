//! Slot-synchronised Monte Carlo of saturated DCF with hidden terminals.
//!
//! The simulator keeps the analytical model's virtual-slot abstraction but
//! replaces every mean-field quantity with an actual draw: stations have real
//! positions, real backoff chains and real AP destinations. What it shares
//! with the model is the rule set:
//!
//! * a lone AP always succeeds;
//! * a lone STA succeeds unless a hidden peer starts within the `2 rho - 1`
//!   slot vulnerable window (each peer at its running empirical attempt rate);
//! * AP plus exactly one STA: in FD the STA always succeeds and the AP
//!   succeeds if its destination is that STA or one hidden from it; in HD
//!   both collide;
//! * anything else is a collision.

mod engine;
pub mod rng;
pub mod topology;

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::GeometryConfig;
use crate::model::Regime;
use crate::throughput::{frame_durations, AnalysisOptions, MacPhyParams, PayloadMode};
use engine::RunTally;
pub use rng::replication_seed;
pub use topology::{apportion, sample_topology, Topology, TopologyMode};

pub const MIN_HORIZON: u64 = 10_000;

// Below this many attempts per batch a node's estimates get flagged.
const MIN_BATCH_ATTEMPTS: u64 = 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub geometry: GeometryConfig,
    pub mac_phy: MacPhyParams,
    pub regime: Regime,
    /// Number of virtual slots per run.
    pub horizon: u64,
    pub seed: u64,
    pub topology: TopologyMode,
    /// RTS length in slots; sets the hidden-station vulnerable window.
    pub rho: u32,
    pub payload: PayloadMode,
    /// Batches per run for within-run batch-means intervals.
    pub batches: usize,
}

impl SimConfig {
    pub fn new(geometry: GeometryConfig, mac_phy: MacPhyParams, regime: Regime) -> Self {
        Self::with_options(geometry, mac_phy, regime, &AnalysisOptions::default())
    }

    /// Takes `rho` and the payload accounting from analysis options so the
    /// simulator and the model describe the same network.
    pub fn with_options(
        geometry: GeometryConfig,
        mac_phy: MacPhyParams,
        regime: Regime,
        options: &AnalysisOptions,
    ) -> Self {
        Self {
            geometry,
            mac_phy,
            regime,
            horizon: 1_000_000,
            seed: 0,
            topology: TopologyMode::Sampled,
            rho: options.rho(&frame_durations(&mac_phy)),
            payload: options.payload,
            batches: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.mac_phy.validate()?;
        if self.horizon < MIN_HORIZON {
            return Err(Error::InvalidConfig(format!(
                "horizon must be at least {MIN_HORIZON} slots, got {}",
                self.horizon
            )));
        }
        if self.rho == 0 {
            return Err(Error::InvalidConfig("rho must be >= 1".into()));
        }
        if self.batches < 2 || self.batches as u64 > self.horizon {
            return Err(Error::InvalidConfig(format!(
                "batch count {} is out of range",
                self.batches
            )));
        }
        Ok(())
    }
}

/// Point estimate with its standard error and 95% half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub std_err: f64,
    pub ci95: f64,
}

impl Estimate {
    fn from_samples(mean: f64, samples: &[f64]) -> Self {
        let k = samples.len();
        let std_err = if k < 2 {
            f64::NAN
        } else {
            let avg = samples.iter().sum::<f64>() / k as f64;
            let var = samples.iter().map(|s| (s - avg).powi(2)).sum::<f64>() / (k - 1) as f64;
            (var / k as f64).sqrt()
        };
        Self {
            mean,
            std_err,
            ci95: 1.96 * std_err,
        }
    }

    fn across(samples: &[f64]) -> Self {
        let mean = samples.iter().sum::<f64>() / samples.len().max(1) as f64;
        Self::from_samples(mean, samples)
    }

    /// `|value - mean| <= sigmas * std_err`.
    pub fn covers(&self, value: f64, sigmas: f64) -> bool {
        (value - self.mean).abs() <= sigmas * self.std_err
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SlotCounters {
    pub idle: u64,
    /// Busy slots counted as a single half-duplex success.
    pub success_hd: u64,
    pub success_sfd: u64,
    pub success_afd: u64,
    pub collision: u64,
    pub ap_attempts: u64,
    /// Frames delivered; SFD/AFD slots deliver two.
    pub deliveries: u64,
}

impl SlotCounters {
    pub fn total(&self) -> u64 {
        self.idle + self.success_hd + self.success_sfd + self.success_afd + self.collision
    }

    pub fn successes(&self) -> u64 {
        self.success_hd + self.success_sfd + self.success_afd
    }

    fn add(&mut self, o: &SlotCounters) {
        self.idle += o.idle;
        self.success_hd += o.success_hd;
        self.success_sfd += o.success_sfd;
        self.success_afd += o.success_afd;
        self.collision += o.collision;
        self.ap_attempts += o.ap_attempts;
        self.deliveries += o.deliveries;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEstimate {
    /// Zero-based annulus; `None` for the AP.
    pub annulus: Option<usize>,
    pub tau: Estimate,
    pub p: Estimate,
    pub attempts: u64,
    pub failures: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub regime: Regime,
    pub slots: u64,
    /// Simulated channel time in seconds.
    pub elapsed: f64,
    /// Node 0 is the AP, node `k + 1` is station `k`.
    pub nodes: Vec<NodeEstimate>,
    pub tau_ap: Estimate,
    pub p_ap: Estimate,
    /// Per annulus; `None` where no station was placed.
    pub tau_sta: Vec<Option<Estimate>>,
    pub p_sta: Vec<Option<Estimate>>,
    /// Payload bits per second, one payload per successful slot.
    pub throughput: Estimate,
    /// Payload bits per second counting every delivered frame.
    pub delivered_throughput: Estimate,
    pub counters: SlotCounters,
    /// Set when some node made too few attempts per batch for a usable
    /// interval.
    pub low_sample_warning: bool,
    pub replications: usize,
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

fn summarize(cfg: &SimConfig, topology: &Topology, tally: &RunTally) -> SimResult {
    let payload = cfg.payload.bits(&cfg.mac_phy);
    let total_nodes = topology.stations() + 1;
    let total = |f: &dyn Fn(&engine::BatchTally) -> u64| tally.batches.iter().map(f).sum::<u64>();
    let slots = total(&|b| b.slots);
    let mut low = false;

    // Pooled estimate over `members`, with batch-means standard errors.
    let group = |members: &[usize], low: &mut bool| -> (Estimate, Estimate) {
        let mut tau_samples = Vec::new();
        let mut p_samples = Vec::new();
        let (mut att, mut fail) = (0u64, 0u64);
        for b in &tally.batches {
            let a: u64 = members.iter().map(|&k| b.attempts[k]).sum();
            let f: u64 = members.iter().map(|&k| b.failures[k]).sum();
            att += a;
            fail += f;
            if a < MIN_BATCH_ATTEMPTS * members.len() as u64 {
                *low = true;
            }
            if let Some(t) = ratio(a, b.slots * members.len() as u64) {
                tau_samples.push(t);
            }
            if let Some(p) = ratio(f, a) {
                p_samples.push(p);
            }
        }
        let tau_mean = ratio(att, slots * members.len() as u64).unwrap_or(0.0);
        let p_mean = ratio(fail, att).unwrap_or(0.0);
        (
            Estimate::from_samples(tau_mean, &tau_samples),
            Estimate::from_samples(p_mean, &p_samples),
        )
    };

    let nodes: Vec<NodeEstimate> = (0..total_nodes)
        .map(|k| {
            let mut ignore = false;
            let (tau, p) = group(&[k], &mut ignore);
            NodeEstimate {
                annulus: (k > 0).then(|| topology.annulus[k - 1]),
                tau,
                p,
                attempts: total(&|b| b.attempts[k]),
                failures: total(&|b| b.failures[k]),
            }
        })
        .collect();

    let (tau_ap, p_ap) = group(&[0], &mut low);
    let mut tau_sta = Vec::with_capacity(cfg.geometry.annuli);
    let mut p_sta = Vec::with_capacity(cfg.geometry.annuli);
    for i in 0..cfg.geometry.annuli {
        let members: Vec<usize> = (0..topology.stations())
            .filter(|&s| topology.annulus[s] == i)
            .map(|s| s + 1)
            .collect();
        if members.is_empty() {
            tau_sta.push(None);
            p_sta.push(None);
        } else {
            let (t, p) = group(&members, &mut low);
            tau_sta.push(Some(t));
            p_sta.push(Some(p));
        }
    }

    let rate = |count: &dyn Fn(&engine::BatchTally) -> u64| {
        let samples: Vec<f64> = tally
            .batches
            .iter()
            .filter(|b| b.time > 0.0)
            .map(|b| payload * count(b) as f64 / b.time)
            .collect();
        let mean = if tally.elapsed > 0.0 {
            payload * total(count) as f64 / tally.elapsed
        } else {
            0.0
        };
        Estimate::from_samples(mean, &samples)
    };

    SimResult {
        regime: cfg.regime,
        slots,
        elapsed: tally.elapsed,
        nodes,
        tau_ap,
        p_ap,
        tau_sta,
        p_sta,
        throughput: rate(&|b| b.success_slots),
        delivered_throughput: rate(&|b| b.deliveries),
        counters: SlotCounters {
            idle: tally.idle,
            success_hd: tally.success_hd,
            success_sfd: tally.success_sfd,
            success_afd: tally.success_afd,
            collision: tally.collision,
            ap_attempts: tally.ap_attempts,
            deliveries: tally.deliveries,
        },
        low_sample_warning: low,
        replications: 1,
    }
}

/// One run: sample a topology from `cfg.seed`, then simulate `cfg.horizon`
/// virtual slots.
pub fn run(cfg: &SimConfig) -> Result<SimResult> {
    cfg.validate()?;
    let topology = sample_topology(&cfg.geometry, cfg.topology, cfg.seed);
    run_on(cfg, &topology)
}

pub fn run_on(cfg: &SimConfig, topology: &Topology) -> Result<SimResult> {
    cfg.validate()?;
    let tally = engine::simulate(cfg, topology, cfg.seed, None).expect("no trace writer");
    Ok(summarize(cfg, topology, &tally))
}

/// Like [`run`], writing one `slot,kind,transmitters,outcome` line per virtual
/// slot to `trace`.
pub fn run_traced(cfg: &SimConfig, trace: &mut dyn Write) -> Result<SimResult> {
    cfg.validate()?;
    let topology = sample_topology(&cfg.geometry, cfg.topology, cfg.seed);
    writeln!(trace, "slot,kind,transmitters,outcome").map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let tally =
        engine::simulate(cfg, &topology, cfg.seed, Some(trace)).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    Ok(summarize(cfg, &topology, &tally))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub summary: SimResult,
    pub runs: Vec<SimResult>,
}

/// Independent replications, each with its own topology and seed derived from
/// `cfg.seed`; intervals come from the spread of the per-run means.
pub fn estimate(cfg: &SimConfig, replications: usize) -> Result<Aggregate> {
    cfg.validate()?;
    if replications < 2 {
        return Err(Error::InvalidConfig("at least two replications are required".into()));
    }
    let runs: Vec<SimResult> = (0..replications)
        .into_par_iter()
        .map(|r| {
            let seeded = SimConfig {
                seed: replication_seed(cfg.seed, r),
                ..*cfg
            };
            run(&seeded)
        })
        .collect::<Result<_>>()?;

    let across = |f: &dyn Fn(&SimResult) -> f64| Estimate::across(&runs.iter().map(f).collect::<Vec<_>>());
    let across_opt = |f: &dyn Fn(&SimResult) -> Option<f64>| {
        let samples: Vec<f64> = runs.iter().filter_map(f).collect();
        (!samples.is_empty()).then(|| Estimate::across(&samples))
    };

    let mut counters = SlotCounters::default();
    for r in &runs {
        counters.add(&r.counters);
    }
    let pinned = cfg.topology == TopologyMode::Pinned;
    let nodes = (0..runs[0].nodes.len())
        .map(|k| NodeEstimate {
            annulus: if k == 0 || !pinned {
                None
            } else {
                runs[0].nodes[k].annulus
            },
            tau: across(&|r| r.nodes[k].tau.mean),
            p: across(&|r| r.nodes[k].p.mean),
            attempts: runs.iter().map(|r| r.nodes[k].attempts).sum(),
            failures: runs.iter().map(|r| r.nodes[k].failures).sum(),
        })
        .collect();
    let annuli = cfg.geometry.annuli;
    let summary = SimResult {
        regime: cfg.regime,
        slots: runs.iter().map(|r| r.slots).sum(),
        elapsed: runs.iter().map(|r| r.elapsed).sum(),
        nodes,
        tau_ap: across(&|r| r.tau_ap.mean),
        p_ap: across(&|r| r.p_ap.mean),
        tau_sta: (0..annuli)
            .map(|i| across_opt(&|r| r.tau_sta[i].map(|e| e.mean)))
            .collect(),
        p_sta: (0..annuli)
            .map(|i| across_opt(&|r| r.p_sta[i].map(|e| e.mean)))
            .collect(),
        throughput: across(&|r| r.throughput.mean),
        delivered_throughput: across(&|r| r.delivered_throughput.mean),
        counters,
        low_sample_warning: runs.iter().any(|r| r.low_sample_warning),
        replications,
    };
    Ok(Aggregate { summary, runs })
}
