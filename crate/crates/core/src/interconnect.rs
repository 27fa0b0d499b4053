//! Inter-node data rates of the daisy chain and of the star and fully
//! centralized baselines.
//!
//! All rates are average bits per second on the busiest link. Display values
//! use binary prefixes (MB = 2²⁰ bytes, GB = 2³⁰ bytes).

use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::Write;

/// OFDM frame and word-width parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameConfig {
    /// Slot duration in seconds.
    pub t_slot: f64,
    /// OFDM symbols per slot.
    pub n_slot: u32,
    /// Uplink data symbols per slot.
    pub n_ul: u32,
    /// Data subcarriers per OFDM symbol.
    pub n_u: u32,
    /// Resource elements per coherence block.
    pub s_cb: u32,
    /// Bits per estimate element.
    pub w_s: u32,
    /// Bits per `Γ` element.
    pub w_gamma: u32,
    /// Bits per raw received sample.
    pub w_sc: u32,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self {
            t_slot: 500e-6,
            n_slot: 7,
            n_ul: 6,
            n_u: 1200,
            s_cb: 400,
            w_s: 16,
            w_gamma: 24,
            w_sc: 24,
        }
    }
}

impl FrameConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.t_slot.is_finite() && self.t_slot > 0.0) || self.n_slot == 0 {
            return Err(Error::InvalidParameter(
                "frame needs t_slot > 0 and n_slot >= 1".into(),
            ));
        }
        if self.n_ul > self.n_slot {
            return Err(Error::InvalidParameter(format!(
                "n_ul = {} exceeds n_slot = {}",
                self.n_ul, self.n_slot
            )));
        }
        if self.s_cb == 0 || self.w_s == 0 || self.w_gamma == 0 {
            return Err(Error::InvalidParameter(
                "s_cb, w_s and w_gamma must be >= 1".into(),
            ));
        }
        Ok(())
    }

    pub fn t_ofdm(&self) -> f64 {
        self.t_slot / self.n_slot as f64
    }

    /// Fraction of the slot spent on uplink data, `N_UL / N_slot`.
    pub fn alpha(&self) -> f64 {
        self.n_ul as f64 / self.n_slot as f64
    }

    /// `w_γ / w_s`.
    pub fn beta(&self) -> f64 {
        self.w_gamma as f64 / self.w_s as f64
    }
}

/// Daisy-chain SGD: `α K w_s N_u / T_ofdm`.
pub fn rate_sgd(f: &FrameConfig, k: usize) -> f64 {
    f.alpha() * k as f64 * f.w_s as f64 * f.n_u as f64 / f.t_ofdm()
}

/// ASGD forwards the raw iterate as well: twice the SGD rate.
pub fn rate_asgd(f: &FrameConfig, k: usize) -> f64 {
    2.0 * rate_sgd(f, k)
}

/// RLS adds the per-coherence-block `Γ` transfer:
/// `R_SGD (1 + (β/α) K / S_CB)`.
pub fn rate_rls(f: &FrameConfig, k: usize) -> Result<f64> {
    if f.n_ul == 0 {
        return Err(Error::NoUplink);
    }
    if f.s_cb == 0 {
        return Err(Error::InvalidParameter("s_cb must be >= 1".into()));
    }
    let overhead = f.beta() / f.alpha() * k as f64 / f.s_cb as f64;
    Ok(rate_sgd(f, k) * (1.0 + overhead))
}

/// Star topology, aggregate per direction at the central node:
/// `C n_iter R_SGD`.
pub fn rate_star(f: &FrameConfig, k: usize, c: usize, n_iter: u32) -> f64 {
    c as f64 * n_iter as f64 * rate_sgd(f, k)
}

/// Fully centralized: every antenna ships raw samples, `α M N_u w_sc / T_ofdm`.
pub fn rate_central(f: &FrameConfig, m: usize) -> f64 {
    f.alpha() * m as f64 * f.n_u as f64 * f.w_sc as f64 / f.t_ofdm()
}

/// One column of the comparison table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateScenario {
    #[serde(default)]
    pub frame: FrameConfig,
    pub m: usize,
    pub k: usize,
    pub c: usize,
    pub b: usize,
    #[serde(default = "default_n_iter")]
    pub n_iter: u32,
}

fn default_n_iter() -> u32 {
    3
}

impl RateScenario {
    pub fn new(frame: FrameConfig, m: usize, k: usize, c: usize, n_iter: u32) -> Result<Self> {
        if c == 0 || !m.is_multiple_of(c) {
            return Err(Error::Partition { m, c });
        }
        let s = Self {
            frame,
            m,
            k,
            c,
            b: m / c,
            n_iter,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame.validate()?;
        if self.c == 0 || self.m != self.c * self.b {
            return Err(Error::InvalidParameter(format!(
                "scenario needs m = c * b, got m = {}, c = {}, b = {}",
                self.m, self.c, self.b
            )));
        }
        if self.k == 0 {
            return Err(Error::InvalidParameter("scenario needs k >= 1".into()));
        }
        Ok(())
    }
}

/// The four array configurations of the reference comparison.
pub fn reference_scenarios() -> Vec<RateScenario> {
    [(128, 16, 8), (256, 32, 8), (512, 64, 16), (1024, 128, 16)]
        .into_iter()
        .map(|(m, k, c)| RateScenario::new(FrameConfig::default(), m, k, c, 3).expect("valid"))
        .collect()
}

/// All five rates for one scenario, in bits per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateReport {
    pub scenario: RateScenario,
    pub sgd: f64,
    pub rls: f64,
    pub asgd: f64,
    pub star: f64,
    pub central: f64,
}

impl RateReport {
    pub fn rows(&self) -> [(&'static str, f64); 5] {
        [
            ("SGD", self.sgd),
            ("RLS", self.rls),
            ("ASGD", self.asgd),
            ("star", self.star),
            ("central", self.central),
        ]
    }
}

pub fn comparison_table(scenarios: &[RateScenario]) -> Result<Vec<RateReport>> {
    scenarios
        .iter()
        .map(|s| {
            s.validate()?;
            let f = &s.frame;
            Ok(RateReport {
                scenario: *s,
                sgd: rate_sgd(f, s.k),
                rls: rate_rls(f, s.k)?,
                asgd: rate_asgd(f, s.k),
                star: rate_star(f, s.k, s.c, s.n_iter),
                central: rate_central(f, s.m),
            })
        })
        .collect()
}

const MIB: f64 = (1u64 << 20) as f64;
const GIB: f64 = (1u64 << 30) as f64;

fn round_half_up(x: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (x * scale + 0.5).floor() / scale
}

fn round_sig_half_up(x: f64, digits: i32) -> f64 {
    if x == 0.0 {
        return 0.0;
    }
    let magnitude = x.abs().log10().floor() as i32;
    round_half_up(x, digits - 1 - magnitude)
}

/// Formats a rate as `NNNMB/s` (three significant figures) below 1000 MiB/s
/// and as `N.NGB/s` (one decimal) above.
pub fn format_rate(bits_per_second: f64) -> String {
    let bytes = bits_per_second / 8.0;
    let mib = round_sig_half_up(bytes / MIB, 3);
    if mib < 1000.0 {
        let decimals = if mib >= 100.0 {
            0
        } else if mib >= 10.0 {
            1
        } else {
            2
        };
        format!("{mib:.decimals$}MB/s")
    } else {
        format!("{:.1}GB/s", round_half_up(bytes / GIB, 1))
    }
}

/// Writes one CSV row per scenario with raw rates and display strings.
pub fn write_csv<W: Write>(reports: &[RateReport], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "m",
        "k",
        "c",
        "b",
        "n_iter",
        "sgd_bps",
        "rls_bps",
        "asgd_bps",
        "star_bps",
        "central_bps",
        "sgd",
        "rls",
        "asgd",
        "star",
        "central",
        "schema_version",
    ])?;
    for r in reports {
        let s = &r.scenario;
        let mut rec = vec![
            s.m.to_string(),
            s.k.to_string(),
            s.c.to_string(),
            s.b.to_string(),
            s.n_iter.to_string(),
        ];
        rec.extend(r.rows().iter().map(|(_, v)| format!("{v}")));
        rec.extend(r.rows().iter().map(|(_, v)| format_rate(*v)));
        rec.push("1".into());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Aligned text table: one column per scenario, one row per rate.
pub fn format_table(reports: &[RateReport]) -> String {
    let mut rows: Vec<(String, Vec<String>)> = vec![
        (
            "M".into(),
            reports.iter().map(|r| r.scenario.m.to_string()).collect(),
        ),
        (
            "K".into(),
            reports.iter().map(|r| r.scenario.k.to_string()).collect(),
        ),
        (
            "C".into(),
            reports.iter().map(|r| r.scenario.c.to_string()).collect(),
        ),
        (
            "B".into(),
            reports.iter().map(|r| r.scenario.b.to_string()).collect(),
        ),
    ];
    for i in 0..5 {
        let name = reports.first().map_or("", |r| r.rows()[i].0);
        rows.push((
            format!("R_{name}"),
            reports.iter().map(|r| format_rate(r.rows()[i].1)).collect(),
        ));
    }
    let label_w = rows.iter().map(|(l, _)| l.len()).max().unwrap_or(0);
    let cell_w = rows
        .iter()
        .flat_map(|(_, cells)| cells.iter().map(String::len))
        .max()
        .unwrap_or(0);
    let mut out = String::new();
    for (label, cells) in rows {
        out.push_str(&format!("{label:<label_w$}"));
        for cell in cells {
            out.push_str(&format!("  {cell:>cell_w$}"));
        }
        out.push('\n');
    }
    out
}
