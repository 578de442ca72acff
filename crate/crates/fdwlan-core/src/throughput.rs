//! Slot-level event probabilities and system saturation throughput.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AnnulusLayout, GeometryConfig, HiddenCounts};
use crate::model::{BackoffParams, FixedPointSolution, Model, ModelOptions, Regime, SolverSettings};

/// PHY and MAC constants. Rates in bits/s, times in seconds, lengths in bytes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MacPhyParams {
    pub data_rate: f64,
    pub control_rate: f64,
    pub phy_header: f64,
    pub mac_header: u32,
    pub fcs: u32,
    pub ack_len: u32,
    pub rts_len: u32,
    pub cts_len: u32,
    pub mpdu_len: u32,
    pub sigma: f64,
    pub delta: f64,
    pub difs: f64,
    pub sifs: f64,
    pub cw_min: u32,
    pub max_stage: u32,
}

impl Default for MacPhyParams {
    /// 802.11ac, MCS 8, one spatial stream.
    fn default() -> Self {
        Self {
            data_rate: 780e6,
            control_rate: 6e6,
            phy_header: 44e-6,
            mac_header: 36,
            fcs: 4,
            ack_len: 14,
            rts_len: 20,
            cts_len: 14,
            mpdu_len: 11454,
            sigma: 9e-6,
            delta: 1e-6,
            difs: 34e-6,
            sifs: 16e-6,
            cw_min: 16,
            max_stage: 6,
        }
    }
}

impl MacPhyParams {
    pub fn validate(&self) -> Result<()> {
        let times = [
            ("data_rate", self.data_rate),
            ("control_rate", self.control_rate),
            ("phy_header", self.phy_header),
            ("sigma", self.sigma),
            ("delta", self.delta),
            ("difs", self.difs),
            ("sifs", self.sifs),
        ];
        for (name, v) in times {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        let lengths = [
            ("mac_header", self.mac_header),
            ("fcs", self.fcs),
            ("ack_len", self.ack_len),
            ("rts_len", self.rts_len),
            ("cts_len", self.cts_len),
            ("mpdu_len", self.mpdu_len),
            ("cw_min", self.cw_min),
        ];
        for (name, v) in lengths {
            if v == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        if self.sifs >= self.difs {
            return Err(Error::InvalidConfig("SIFS must be shorter than DIFS".into()));
        }
        if self.mac_header + self.fcs >= self.mpdu_len {
            return Err(Error::InvalidConfig(
                "MPDU must be longer than its header and FCS".into(),
            ));
        }
        Ok(())
    }

    /// Backoff parameters with the given RTS length in slots.
    pub fn backoff(&self, rho: u32) -> BackoffParams {
        BackoffParams {
            cw_min: self.cw_min,
            max_stage: self.max_stage,
            rho,
        }
    }
}

/// Which time unit turns the RTS airtime into a slot count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoSource {
    /// `ceil(T_RTS / sigma)`.
    #[default]
    Slot,
    /// `ceil(T_RTS / delta)`.
    Delay,
}

/// What `L` counts in the throughput numerator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PayloadMode {
    /// MPDU minus MAC header and FCS.
    #[default]
    Payload,
    /// The whole MPDU.
    Mpdu,
}

impl PayloadMode {
    pub fn bits(self, p: &MacPhyParams) -> f64 {
        let bytes = match self {
            PayloadMode::Payload => p.mpdu_len - p.mac_header - p.fcs,
            PayloadMode::Mpdu => p.mpdu_len,
        };
        8.0 * bytes as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlotDurations {
    pub t_rts: f64,
    pub t_cts: f64,
    pub t_data: f64,
    pub t_ack: f64,
    /// Idle slot `sigma`.
    pub idle: f64,
    /// Busy period of a successful RTS/CTS/DATA/ACK exchange.
    pub success: f64,
    /// Busy period of a failed RTS.
    pub collision: f64,
    /// RTS airtime in slots of `sigma`.
    pub rho: u32,
    /// RTS airtime in units of the propagation delay.
    pub rho_delay: u32,
}

impl SlotDurations {
    pub fn rho(&self, source: RhoSource) -> u32 {
        match source {
            RhoSource::Slot => self.rho,
            RhoSource::Delay => self.rho_delay,
        }
    }
}

// Tolerates airtimes that are an exact multiple up to rounding.
fn ceil_ratio(num: f64, den: f64) -> u32 {
    let ratio = num / den;
    let nearest = ratio.round();
    let slots = if (ratio - nearest).abs() < 1e-9 {
        nearest
    } else {
        ratio.ceil()
    };
    (slots as u32).max(1)
}

pub fn frame_durations(p: &MacPhyParams) -> SlotDurations {
    let control = |bytes: u32| p.phy_header + 8.0 * bytes as f64 / p.control_rate;
    let t_rts = control(p.rts_len);
    let t_cts = control(p.cts_len);
    let t_ack = control(p.ack_len);
    let t_data = p.phy_header + 8.0 * p.mpdu_len as f64 / p.data_rate;
    SlotDurations {
        t_rts,
        t_cts,
        t_data,
        t_ack,
        idle: p.sigma,
        success: p.difs + t_rts + t_cts + t_data + t_ack + 3.0 * p.sifs + 4.0 * p.delta,
        collision: p.difs + t_rts + p.delta,
        rho: ceil_ratio(t_rts, p.sigma),
        rho_delay: ceil_ratio(t_rts, p.delta),
    }
}

fn stations_silent(sol: &FixedPointSolution, layout: &AnnulusLayout) -> f64 {
    sol.tau_sta
        .iter()
        .zip(&layout.node_counts)
        .map(|(&tau, &n)| (1.0 - tau).powf(n))
        .product()
}

/// Probability that at least one node starts transmitting in a slot.
pub fn p_transmit(sol: &FixedPointSolution, layout: &AnnulusLayout) -> f64 {
    (1.0 - (1.0 - sol.tau_ap) * stations_silent(sol, layout)).clamp(0.0, 1.0)
}

/// Success probability of a busy slot, split into its HD and FD parts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuccessBreakdown {
    pub p_t: f64,
    pub p_s: f64,
    pub hd_part: f64,
    pub fd_part: f64,
}

pub fn p_success(
    sol: &FixedPointSolution,
    layout: &AnnulusLayout,
    hidden: &HiddenCounts,
    regime: Regime,
) -> Result<SuccessBreakdown> {
    let p_t = p_transmit(sol, layout);
    if p_t <= 0.0 {
        return Err(Error::UndefinedConditional);
    }
    let n = layout.stations as f64;
    let tau_ap = sol.tau_ap;
    // n_i * tau_i * pi_i: exactly one STA, located in annulus i, transmits.
    let lone: Vec<f64> = (0..layout.annuli())
        .map(|i| layout.node_counts[i] * sol.tau_sta[i] * crate::model::pi_factor(i, &sol.tau_sta, layout))
        .collect();

    let mut hd = tau_ap * stations_silent(sol, layout) + (1.0 - tau_ap) * lone.iter().sum::<f64>();
    let mut fd = 0.0;
    if regime == Regime::Fd {
        for (i, &one) in lone.iter().enumerate() {
            let h = hidden.h[i];
            hd += tau_ap * (n - h - 1.0) / n * one;
            fd += tau_ap * (h + 1.0) / n * one;
        }
    }
    let hd_part = hd / p_t;
    let fd_part = fd / p_t;
    Ok(SuccessBreakdown {
        p_t,
        p_s: hd_part + fd_part,
        hd_part,
        fd_part,
    })
}

/// Payload bits delivered per second of channel time.
pub fn saturation_throughput(p_t: f64, p_s: f64, durations: &SlotDurations, payload_bits: f64) -> f64 {
    let busy_success = p_t * p_s;
    let mean_slot =
        (1.0 - p_t) * durations.idle + busy_success * durations.success + p_t * (1.0 - p_s) * durations.collision;
    if busy_success == 0.0 {
        return 0.0;
    }
    busy_success * payload_bits / mean_slot
}

/// Every switch that selects between alternative readings of the model.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AnalysisOptions {
    pub model: ModelOptions,
    pub rho_source: RhoSource,
    /// Explicit RTS length in slots; wins over `rho_source`.
    pub rho_override: Option<u32>,
    pub payload: PayloadMode,
    pub solver: SolverSettings,
}

impl AnalysisOptions {
    pub fn rho(&self, durations: &SlotDurations) -> u32 {
        self.rho_override.unwrap_or_else(|| durations.rho(self.rho_source))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ThroughputReport {
    pub regime: Regime,
    pub p_t: f64,
    pub p_s: f64,
    pub p_s_hd_part: f64,
    pub p_s_fd_part: f64,
    /// bits/s
    pub throughput: f64,
    /// `S_FD / S_HD`, set when both regimes were evaluated.
    pub gain: Option<f64>,
    pub solution: FixedPointSolution,
    pub durations: SlotDurations,
    pub model: Model,
}

/// Solves the fixed point for one regime and converts it to throughput.
pub fn evaluate(
    geometry: &GeometryConfig,
    mac: &MacPhyParams,
    regime: Regime,
    options: &AnalysisOptions,
) -> Result<ThroughputReport> {
    mac.validate()?;
    let durations = frame_durations(mac);
    let backoff = mac.backoff(options.rho(&durations));
    let model = Model::new(geometry, backoff, regime, options.model)?;
    let solution = model.solve(&options.solver)?;
    let success = p_success(&solution, &model.layout, &model.hidden, regime)?;
    let throughput = saturation_throughput(success.p_t, success.p_s, &durations, options.payload.bits(mac));
    Ok(ThroughputReport {
        regime,
        p_t: success.p_t,
        p_s: success.p_s,
        p_s_hd_part: success.hd_part,
        p_s_fd_part: success.fd_part,
        throughput,
        gain: None,
        solution,
        durations,
        model,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeComparison {
    pub fd: ThroughputReport,
    pub hd: ThroughputReport,
    pub gain: f64,
}

pub fn compare_regimes(
    geometry: &GeometryConfig,
    mac: &MacPhyParams,
    options: &AnalysisOptions,
) -> Result<RegimeComparison> {
    let mut fd = evaluate(geometry, mac, Regime::Fd, options)?;
    let mut hd = evaluate(geometry, mac, Regime::Hd, options)?;
    let gain = fd.throughput / hd.throughput;
    fd.gain = Some(gain);
    hd.gain = Some(gain);
    Ok(RegimeComparison { fd, hd, gain })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::annulus_layout;
    use approx::assert_relative_eq;

    fn solution(tau_ap: f64, tau_sta: Vec<f64>) -> FixedPointSolution {
        let m = tau_sta.len();
        FixedPointSolution {
            tau_ap,
            tau_sta,
            p_ap: 0.0,
            p_sta: vec![0.0; m],
            iterations: 0,
            residual: 0.0,
            regime: Regime::Fd,
        }
    }

    #[test]
    fn table_durations() {
        let d = frame_durations(&MacPhyParams::default());
        assert_relative_eq!(d.t_rts, 44e-6 + 160.0 / 6e6, epsilon = 1e-15);
        assert_relative_eq!(d.t_rts * 1e6, 70.666_666_7, epsilon = 1e-6);
        assert_relative_eq!(d.t_data * 1e6, 44.0 + 91632.0 / 780.0, epsilon = 1e-9);
        assert_relative_eq!(d.t_data * 1e6, 161.477, epsilon = 1e-3);
        assert_eq!(d.rho, 8);
        assert_eq!(d.rho_delay, 71);
        assert!(d.success > d.collision && d.collision > d.idle);
        assert_relative_eq!(d.collision, 34e-6 + d.t_rts + 1e-6, epsilon = 1e-18);
    }

    #[test]
    fn fast_control_rate_leaves_only_phy_header() {
        let p = MacPhyParams {
            control_rate: 1e30,
            ..MacPhyParams::default()
        };
        assert_relative_eq!(frame_durations(&p).t_rts, 44e-6, epsilon = 1e-15);
    }

    #[test]
    fn exact_multiples_do_not_round_up() {
        assert_eq!(ceil_ratio(72e-6, 9e-6), 8);
        assert_eq!(ceil_ratio(72.1e-6, 9e-6), 9);
    }

    #[test]
    fn validation_catches_bad_params() {
        let bad = MacPhyParams {
            sifs: 40e-6,
            ..MacPhyParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = MacPhyParams {
            sigma: 0.0,
            ..MacPhyParams::default()
        };
        assert!(bad.validate().is_err());
        assert!(MacPhyParams::default().validate().is_ok());
    }

    #[test]
    fn payload_bits() {
        let p = MacPhyParams::default();
        assert_eq!(PayloadMode::Payload.bits(&p), 8.0 * 11414.0);
        assert_eq!(PayloadMode::Mpdu.bits(&p), 8.0 * 11454.0);
    }

    #[test]
    fn p_transmit_examples() {
        let layout = annulus_layout(&GeometryConfig::new(1.0, 1, 1).unwrap()).unwrap();
        assert_eq!(p_transmit(&solution(0.0, vec![0.0]), &layout), 0.0);
        assert_eq!(p_transmit(&solution(1.0, vec![0.3]), &layout), 1.0);
        let t = 2.0 / 17.0;
        let pt = p_transmit(&solution(t, vec![t]), &layout);
        assert_relative_eq!(pt, 1.0 - (15.0f64 / 17.0).powi(2), epsilon = 1e-15);
        assert_relative_eq!(pt, 0.2215, epsilon = 1e-4);
    }

    #[test]
    fn two_node_fd_always_succeeds() {
        let layout = annulus_layout(&GeometryConfig::new(1.0, 1, 1).unwrap()).unwrap();
        let t = 2.0 / 17.0;
        let s = p_success(&solution(t, vec![t]), &layout, &HiddenCounts::none(1), Regime::Fd).unwrap();
        assert_relative_eq!(s.p_s, 1.0, epsilon = 1e-15);
        assert!(s.fd_part > 0.0);
    }

    #[test]
    fn lone_ap_always_succeeds() {
        let cfg = GeometryConfig::new(1.0, 3, 10).unwrap();
        let layout = annulus_layout(&cfg).unwrap();
        let hidden = crate::geometry::hidden_counts(&cfg, Default::default()).unwrap();
        for regime in [Regime::Fd, Regime::Hd] {
            let s = p_success(&solution(0.2, vec![0.0; 3]), &layout, &hidden, regime).unwrap();
            assert_relative_eq!(s.p_s, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn fully_hidden_peers_remove_in_range_term() {
        // h = n - 1: every AP + STA overlap becomes an FD success.
        let layout = annulus_layout(&GeometryConfig::new(1.0, 1, 4).unwrap()).unwrap();
        let mut hidden = HiddenCounts::none(1);
        hidden.h[0] = 3.0;
        let sol = solution(0.1, vec![0.05]);
        let s = p_success(&sol, &layout, &hidden, Regime::Fd).unwrap();
        let pt = p_transmit(&sol, &layout);
        let silent = 0.95f64.powi(4);
        let lone = 4.0 * 0.05 * 0.95f64.powi(3);
        assert_relative_eq!(s.hd_part, (0.1 * silent + 0.9 * lone) / pt, epsilon = 1e-15);
        assert_relative_eq!(s.fd_part, 0.1 * lone / pt, epsilon = 1e-15);
    }

    #[test]
    fn no_transmission_mass_is_an_error() {
        let layout = annulus_layout(&GeometryConfig::new(1.0, 1, 2).unwrap()).unwrap();
        let r = p_success(&solution(0.0, vec![0.0]), &layout, &HiddenCounts::none(1), Regime::Fd);
        assert!(matches!(r, Err(Error::UndefinedConditional)));
    }

    #[test]
    fn throughput_limits() {
        let d = frame_durations(&MacPhyParams::default());
        assert_eq!(saturation_throughput(0.0, 0.7, &d, 1000.0), 0.0);
        assert_relative_eq!(
            saturation_throughput(1.0, 1.0, &d, 1000.0),
            1000.0 / d.success,
            epsilon = 1e-9
        );
        let one = saturation_throughput(0.3, 0.8, &d, 1000.0);
        let two = saturation_throughput(0.3, 0.8, &d, 2000.0);
        assert_relative_eq!(two, 2.0 * one, epsilon = 1e-12);
    }

    #[test]
    fn single_station_gain_exceeds_one() {
        // In HD the AP and the lone STA collide whenever both expire together.
        let cfg = GeometryConfig::new(1.0, 1, 1).unwrap();
        let cmp = compare_regimes(&cfg, &MacPhyParams::default(), &AnalysisOptions::default()).unwrap();
        assert_relative_eq!(cmp.fd.p_s, 1.0, epsilon = 1e-12);
        assert!(cmp.hd.p_s < 1.0);
        assert!(cmp.gain > 1.0);
    }

    #[test]
    fn fd_dominates_hd() {
        for n in [2, 5, 20, 50] {
            let cfg = GeometryConfig::new(1.0, 5, n).unwrap();
            let cmp = compare_regimes(&cfg, &MacPhyParams::default(), &AnalysisOptions::default()).unwrap();
            assert!(cmp.fd.throughput >= cmp.hd.throughput, "n={n}");
            assert!(cmp.fd.p_s_hd_part >= 0.0 && cmp.fd.p_s_fd_part >= 0.0);
            assert!(cmp.fd.p_s_hd_part + cmp.fd.p_s_fd_part <= 1.0 + 1e-12);
            assert_eq!(cmp.hd.p_s_fd_part, 0.0);
        }
    }
}
