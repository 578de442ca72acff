use anyhow::{bail, Context, Result};
use fdwlan_core::geometry::{hidden_prob, max_hidden_prob};
use fdwlan_core::simulator::{self, Estimate};
use fdwlan_core::{compare_regimes, evaluate, Error, GeometryConfig, Regime, ThroughputReport};
use rayon::prelude::*;

use crate::config::{RunConfig, SweepSpec, SweepVariable};
use crate::output::{mbps, num, opt, Table};

/// Evaluates every requested regime; the gain is filled in when both ran.
fn reports(cfg: &RunConfig, geometry: &GeometryConfig, regimes: &[Regime]) -> Result<Vec<ThroughputReport>> {
    let options = cfg.analysis();
    if regimes == [Regime::Fd, Regime::Hd] {
        let cmp = compare_regimes(geometry, &cfg.mac_phy, &options)?;
        return Ok(vec![cmp.fd, cmp.hd]);
    }
    regimes
        .iter()
        .map(|&r| Ok(evaluate(geometry, &cfg.mac_phy, r, &options)?))
        .collect()
}

fn describe(err: &Error) -> String {
    match err {
        Error::NotConverged {
            iterations, residual, ..
        } => {
            format!("not converged after {iterations} iterations (step {residual:.3e})")
        }
        other => other.to_string(),
    }
}

pub fn solve(cfg: &RunConfig, regimes: &[Regime]) -> Result<Table> {
    let geometry = cfg.geometry()?;
    let reports = reports(cfg, &geometry, regimes).map_err(|e| match e.downcast_ref::<Error>() {
        Some(err) => anyhow::anyhow!("solver failed: {}", describe(err)),
        None => e,
    })?;
    let mut table = Table::new(
        "fdwlan-solve/1",
        [
            "regime",
            "kind",
            "annulus",
            "distance",
            "stations",
            "hidden",
            "tau",
            "p",
            "p_t",
            "p_s",
            "throughput_mbps",
            "gain",
            "iterations",
            "residual",
        ],
    );
    let blank = String::new;
    for r in &reports {
        let s = &r.solution;
        let regime = r.regime.to_string();
        table.push(vec![
            regime.clone(),
            "ap".into(),
            blank(),
            num(0.0),
            num(1.0),
            num(0.0),
            num(s.tau_ap),
            num(s.p_ap),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
            blank(),
        ]);
        let layout = &r.model.layout;
        for i in 0..layout.annuli() {
            table.push(vec![
                regime.clone(),
                "annulus".into(),
                (i + 1).to_string(),
                num(layout.distances[i]),
                num(layout.node_counts[i]),
                num(r.model.hidden.h[i]),
                num(s.tau_sta[i]),
                num(s.p_sta[i]),
                blank(),
                blank(),
                blank(),
                blank(),
                blank(),
                blank(),
            ]);
        }
        // Node-weighted averages over the AP and all stations.
        let nodes = layout.stations as f64 + 1.0;
        let weighted =
            |ap: f64, sta: &[f64]| (ap + sta.iter().zip(&layout.node_counts).map(|(v, n)| v * n).sum::<f64>()) / nodes;
        table.push(vec![
            regime,
            "summary".into(),
            blank(),
            blank(),
            num(layout.stations as f64),
            num(r
                .model
                .hidden
                .h
                .iter()
                .zip(&layout.node_counts)
                .map(|(h, n)| h * n)
                .sum::<f64>()
                / layout.stations as f64),
            num(weighted(s.tau_ap, &s.tau_sta)),
            num(weighted(s.p_ap, &s.p_sta)),
            num(r.p_t),
            num(r.p_s),
            mbps(r.throughput),
            opt(r.gain),
            s.iterations.to_string(),
            num(s.residual),
        ]);
    }
    Ok(table)
}

fn sweep_point(cfg: &RunConfig, variable: SweepVariable, value: f64, regimes: &[Regime]) -> Vec<String> {
    let mut point = cfg.clone();
    match variable {
        SweepVariable::Stations => point.geometry.stations = value as usize,
        SweepVariable::Annuli => point.geometry.annuli = value as usize,
        SweepVariable::Distance => unreachable!("distance sweeps have their own table"),
    }
    let g = &point.geometry;
    let mut row = vec![
        variable.name().to_string(),
        num(value),
        g.stations.to_string(),
        g.annuli.to_string(),
        num(max_hidden_prob(g.annuli)),
    ];
    let result = point
        .geometry()
        .and_then(|geometry| reports(&point, &geometry, regimes));
    let mut cells = vec![String::new(); 7];
    let status = match result {
        Ok(reports) => {
            for r in &reports {
                let (s_col, t_col) = match r.regime {
                    Regime::Fd => (0, 3),
                    Regime::Hd => (1, 5),
                };
                cells[s_col] = mbps(r.throughput);
                cells[t_col] = num(r.solution.tau_ap);
                cells[t_col + 1] = num(r.solution.p_ap);
                if let Some(g) = r.gain {
                    cells[2] = num(g);
                }
            }
            "ok".to_string()
        }
        Err(e) => match e.downcast_ref::<Error>() {
            Some(err) => describe(err),
            None => format!("{e:#}"),
        },
    };
    row.extend(cells);
    row.push(status);
    row
}

pub fn sweep(cfg: &RunConfig, spec: &SweepSpec, regimes: &[Regime]) -> Result<Table> {
    let points = spec.points()?;
    if spec.variable == SweepVariable::Distance {
        let r = cfg.geometry.radius;
        let mut table = Table::new("fdwlan-sweep-d/1", ["variable", "value", "hidden_prob", "status"]);
        for d in points {
            let (p, status) = match hidden_prob(r, d) {
                Ok(p) => (num(p), "ok".to_string()),
                Err(e) => (String::new(), e.to_string()),
            };
            table.push(vec!["d".into(), num(d), p, status]);
        }
        return Ok(table);
    }
    let rows: Vec<Vec<String>> = points
        .par_iter()
        .map(|&v| sweep_point(cfg, spec.variable, v, regimes))
        .collect();
    let mut table = Table::new(
        "fdwlan-sweep/1",
        [
            "variable",
            "value",
            "stations",
            "annuli",
            "p_h_max",
            "throughput_fd_mbps",
            "throughput_hd_mbps",
            "gain",
            "tau_ap_fd",
            "p_ap_fd",
            "tau_ap_hd",
            "p_ap_hd",
            "status",
        ],
    );
    for row in rows {
        table.push(row);
    }
    Ok(table)
}

pub fn simulate(cfg: &RunConfig, regimes: &[Regime]) -> Result<(Table, bool)> {
    let geometry = cfg.geometry()?;
    let mut table = Table::new(
        "fdwlan-simulate/1",
        [
            "regime",
            "quantity",
            "node",
            "analytical",
            "empirical",
            "std_err",
            "ci95",
            "rel_error",
        ],
    );
    let mut low_samples = false;
    for &regime in regimes {
        let analytical = evaluate(&geometry, &cfg.mac_phy, regime, &cfg.analysis())
            .map_err(|e| anyhow::anyhow!("solver failed: {}", describe(&e)))?;
        let sim_cfg = cfg.sim_config(regime)?;
        let agg = simulator::estimate(&sim_cfg, cfg.simulation.replications).context("simulation failed")?;
        let s = &agg.summary;
        low_samples |= s.low_sample_warning;
        let mut push = |quantity: &str, node: String, model: Option<f64>, est: Option<Estimate>, scale: f64| {
            let rel = match (model, est) {
                (Some(m), Some(e)) if m != 0.0 => num((e.mean - m).abs() / m.abs()),
                _ => String::new(),
            };
            table.push(vec![
                regime.to_string(),
                quantity.into(),
                node,
                opt(model.map(|m| m / scale)),
                opt(est.map(|e| e.mean / scale)),
                opt(est.map(|e| e.std_err / scale)),
                opt(est.map(|e| e.ci95 / scale)),
                rel,
            ]);
        };
        let sol = &analytical.solution;
        push("tau", "ap".into(), Some(sol.tau_ap), Some(s.tau_ap), 1.0);
        for (i, est) in s.tau_sta.iter().enumerate() {
            push("tau", (i + 1).to_string(), Some(sol.tau_sta[i]), *est, 1.0);
        }
        push("p", "ap".into(), Some(sol.p_ap), Some(s.p_ap), 1.0);
        for (i, est) in s.p_sta.iter().enumerate() {
            push("p", (i + 1).to_string(), Some(sol.p_sta[i]), *est, 1.0);
        }
        push(
            "throughput_mbps",
            String::new(),
            Some(analytical.throughput),
            Some(s.throughput),
            1e6,
        );
        push(
            "delivered_throughput_mbps",
            String::new(),
            None,
            Some(s.delivered_throughput),
            1e6,
        );
        let c = &s.counters;
        for (name, count) in [
            ("idle_slots", c.idle),
            ("success_slots", c.success_hd),
            ("sfd_slots", c.success_sfd),
            ("afd_slots", c.success_afd),
            ("collision_slots", c.collision),
            ("ap_attempts", c.ap_attempts),
        ] {
            table.push(vec![
                regime.to_string(),
                name.into(),
                String::new(),
                String::new(),
                count.to_string(),
                String::new(),
                String::new(),
                String::new(),
            ]);
        }
    }
    Ok((table, low_samples))
}

pub fn trace(cfg: &RunConfig, regimes: &[Regime]) -> Result<Vec<u8>> {
    let [regime] = regimes else {
        bail!("--trace needs a single --regime (fd or hd)");
    };
    let mut buf = Vec::new();
    simulator::run_traced(&cfg.sim_config(*regime)?, &mut buf)?;
    Ok(buf)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Preset {
    /// Largest hidden probability against the number of annuli.
    Fig4,
    /// Transmission probabilities against the number of stations.
    Fig5,
    /// Collision probabilities against the number of stations.
    Fig6,
    /// FD and HD saturation throughput and their ratio.
    Fig7,
    /// All of the above, one file each in the `--out` directory.
    All,
}

impl Preset {
    pub fn file_name(self) -> &'static str {
        match self {
            Preset::Fig4 => "fig4.csv",
            Preset::Fig5 => "fig5.csv",
            Preset::Fig6 => "fig6.csv",
            Preset::Fig7 => "fig7.csv",
            Preset::All => "",
        }
    }
}

pub const FIG4_ANNULI: std::ops::RangeInclusive<usize> = 1..=50;
pub const FIG_STATIONS: std::ops::RangeInclusive<usize> = 5..=50;

pub fn figure(cfg: &RunConfig, preset: Preset, regimes: &[Regime]) -> Result<Table> {
    match preset {
        Preset::Fig4 => {
            let mut table = Table::new("fdwlan-fig4/1", ["annuli", "distance", "p_h_max"]);
            for m in FIG4_ANNULI {
                let d = (2 * m - 1) as f64 / (2 * m) as f64;
                table.push(vec![m.to_string(), num(d), num(max_hidden_prob(m))]);
            }
            Ok(table)
        }
        Preset::Fig5 | Preset::Fig6 => {
            let m = cfg.geometry.annuli;
            let (schema, prefix) = if preset == Preset::Fig5 {
                ("fdwlan-fig5/1", "tau")
            } else {
                ("fdwlan-fig6/1", "p")
            };
            let mut header = vec!["regime".to_string(), "stations".into(), format!("{prefix}_ap")];
            header.extend((1..=m).map(|i| format!("{prefix}_{i}")));
            let mut table = Table::new(schema, header);
            let rows: Vec<Result<Vec<Vec<String>>>> = FIG_STATIONS
                .into_par_iter()
                .map(|n| {
                    let mut point = cfg.clone();
                    point.geometry.stations = n;
                    let reports = reports(&point, &point.geometry()?, regimes).with_context(|| format!("n = {n}"))?;
                    Ok(reports
                        .iter()
                        .map(|r| {
                            let s = &r.solution;
                            let (ap, sta) = if preset == Preset::Fig5 {
                                (s.tau_ap, &s.tau_sta)
                            } else {
                                (s.p_ap, &s.p_sta)
                            };
                            let mut row = vec![r.regime.to_string(), n.to_string(), num(ap)];
                            row.extend(sta.iter().map(|&v| num(v)));
                            row
                        })
                        .collect())
                })
                .collect();
            for group in rows {
                for row in group? {
                    table.push(row);
                }
            }
            Ok(table)
        }
        Preset::Fig7 => {
            let rows: Vec<Result<Vec<String>>> = FIG_STATIONS
                .into_par_iter()
                .map(|n| {
                    let mut point = cfg.clone();
                    point.geometry.stations = n;
                    let cmp = compare_regimes(&point.geometry()?, &point.mac_phy, &point.analysis())
                        .with_context(|| format!("n = {n}"))?;
                    Ok(vec![
                        n.to_string(),
                        mbps(cmp.fd.throughput),
                        mbps(cmp.hd.throughput),
                        num(cmp.gain),
                    ])
                })
                .collect();
            let mut table = Table::new(
                "fdwlan-fig7/1",
                ["stations", "throughput_fd_mbps", "throughput_hd_mbps", "gain"],
            );
            for row in rows {
                table.push(row?);
            }
            Ok(table)
        }
        Preset::All => bail!("`all` expands to the individual presets"),
    }
}
