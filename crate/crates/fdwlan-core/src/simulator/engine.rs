//! The virtual-slot loop.
//!
//! A virtual slot is either an idle slot, a successful exchange or a
//! collision. Every node holds a backoff counter; nodes whose counter reads
//! zero at the start of a slot transmit in it, everyone else counts down by
//! one. After transmitting a node redraws its counter from the window of its
//! (possibly advanced) backoff stage.

use std::io::Write;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::rng::{station_stream, substream, AP_STREAM};
use super::topology::Topology;
use super::SimConfig;
use crate::model::Regime;
use crate::throughput::{frame_durations, SlotDurations};

// Weight, in slots, of the collision-free prior on a peer's attempt rate.
const PRIOR_SLOTS: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SlotKind {
    Success,
    Sfd,
    Afd,
    Collision,
}

impl SlotKind {
    fn label(self) -> &'static str {
        match self {
            SlotKind::Success => "success",
            SlotKind::Sfd => "sfd",
            SlotKind::Afd => "afd",
            SlotKind::Collision => "collision",
        }
    }
}

struct Node {
    stage: u32,
    counter: u64,
    rng: ChaCha8Rng,
    attempts: u64,
}

impl Node {
    fn draw_counter(&mut self, cw_min: u32) {
        let window = (cw_min as u64) << self.stage;
        self.counter = self.rng.random_range(0..window);
    }
}

/// Raw per-batch tallies of one run.
#[derive(Debug, Clone, Default)]
pub(crate) struct BatchTally {
    pub slots: u64,
    pub time: f64,
    pub success_slots: u64,
    pub deliveries: u64,
    pub attempts: Vec<u64>,
    pub failures: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct RunTally {
    pub batches: Vec<BatchTally>,
    pub idle: u64,
    pub success_hd: u64,
    pub success_sfd: u64,
    pub success_afd: u64,
    pub collision: u64,
    pub ap_attempts: u64,
    pub deliveries: u64,
    pub elapsed: f64,
}

pub(crate) fn simulate(
    cfg: &SimConfig,
    topology: &Topology,
    seed: u64,
    mut trace: Option<&mut dyn Write>,
) -> std::io::Result<RunTally> {
    let stations = topology.stations();
    let total_nodes = stations + 1;
    let cw_min = cfg.mac_phy.cw_min;
    let max_stage = cfg.mac_phy.max_stage;
    let window_slots = (2 * cfg.rho - 1) as f64;
    let durations: SlotDurations = frame_durations(&cfg.mac_phy);
    let prior_tau = 2.0 / (cw_min as f64 + 1.0);
    let hidden_peers: Vec<Vec<usize>> = (0..stations).map(|s| topology.hidden_peers(s)).collect();

    let mut nodes: Vec<Node> = (0..total_nodes)
        .map(|k| {
            let stream = if k == 0 { AP_STREAM } else { station_stream(k - 1) };
            let mut node = Node {
                stage: 0,
                counter: 0,
                rng: substream(seed, stream),
                attempts: 0,
            };
            node.draw_counter(cw_min);
            node
        })
        .collect();

    let batches = cfg.batches as u64;
    let boundary = |b: u64| cfg.horizon * b / batches;
    let mut tally = RunTally {
        batches: (0..batches)
            .map(|_| BatchTally {
                attempts: vec![0; total_nodes],
                failures: vec![0; total_nodes],
                ..BatchTally::default()
            })
            .collect(),
        ..RunTally::default()
    };

    let mut slot = 0u64;
    let mut batch = 0usize;
    let mut transmitters: Vec<usize> = Vec::with_capacity(total_nodes);
    let mut failed: Vec<bool> = Vec::with_capacity(total_nodes);

    while slot < cfg.horizon {
        while slot >= boundary(batch as u64 + 1) {
            batch += 1;
        }
        let soonest = nodes.iter().map(|n| n.counter).min().unwrap_or(0);
        if soonest > 0 {
            let run = soonest.min(boundary(batch as u64 + 1) - slot);
            for node in &mut nodes {
                node.counter -= run;
            }
            if let Some(w) = trace.as_deref_mut() {
                for k in 0..run {
                    writeln!(w, "{},idle,,", slot + k)?;
                }
            }
            let b = &mut tally.batches[batch];
            b.slots += run;
            b.time += run as f64 * durations.idle;
            tally.idle += run;
            slot += run;
            continue;
        }

        transmitters.clear();
        transmitters.extend(nodes.iter().enumerate().filter(|(_, n)| n.counter == 0).map(|(k, _)| k));
        failed.clear();
        failed.resize(transmitters.len(), true);

        let kind = match transmitters.as_slice() {
            [0] => {
                failed[0] = false;
                SlotKind::Success
            }
            [sta] => {
                let station = sta - 1;
                let clear: f64 = hidden_peers[station]
                    .iter()
                    .map(|&peer| {
                        let seen = nodes[peer + 1].attempts as f64;
                        let rate = (seen + prior_tau * PRIOR_SLOTS) / (slot as f64 + PRIOR_SLOTS);
                        (1.0 - rate.clamp(0.0, 1.0)).powf(window_slots)
                    })
                    .product();
                let draw: f64 = nodes[*sta].rng.random();
                if draw < clear {
                    failed[0] = false;
                    SlotKind::Success
                } else {
                    SlotKind::Collision
                }
            }
            [0, sta] if cfg.regime == Regime::Fd => {
                let station = sta - 1;
                failed[1] = false;
                let dest = nodes[0].rng.random_range(0..stations);
                if dest == station {
                    failed[0] = false;
                    SlotKind::Sfd
                } else if topology.hidden[station][dest] {
                    failed[0] = false;
                    SlotKind::Afd
                } else {
                    SlotKind::Success
                }
            }
            _ => SlotKind::Collision,
        };

        let duration = match kind {
            SlotKind::Collision => durations.collision,
            _ => durations.success,
        };
        let b = &mut tally.batches[batch];
        b.slots += 1;
        b.time += duration;
        match kind {
            SlotKind::Success => tally.success_hd += 1,
            SlotKind::Sfd => tally.success_sfd += 1,
            SlotKind::Afd => tally.success_afd += 1,
            SlotKind::Collision => tally.collision += 1,
        }
        if kind != SlotKind::Collision {
            b.success_slots += 1;
        }
        for (&k, &fail) in transmitters.iter().zip(&failed) {
            b.attempts[k] += 1;
            if fail {
                b.failures[k] += 1;
            } else {
                b.deliveries += 1;
                tally.deliveries += 1;
            }
            if k == 0 {
                tally.ap_attempts += 1;
            }
        }

        if let Some(w) = trace.as_deref_mut() {
            let who: Vec<String> = transmitters
                .iter()
                .map(|&k| if k == 0 { "ap".to_string() } else { (k - 1).to_string() })
                .collect();
            let outcome: Vec<&str> = failed.iter().map(|&f| if f { "fail" } else { "ok" }).collect();
            writeln!(w, "{slot},{},{},{}", kind.label(), who.join(";"), outcome.join(";"))?;
        }

        let mut next = 0;
        for (k, node) in nodes.iter_mut().enumerate() {
            if next < transmitters.len() && transmitters[next] == k {
                node.attempts += 1;
                node.stage = if failed[next] {
                    (node.stage + 1).min(max_stage)
                } else {
                    0
                };
                node.draw_counter(cw_min);
                next += 1;
            } else {
                node.counter -= 1;
            }
        }
        slot += 1;
    }

    tally.elapsed = tally.batches.iter().map(|b| b.time).sum();
    Ok(tally)
}
