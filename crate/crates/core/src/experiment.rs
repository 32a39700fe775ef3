//! Experiment descriptions, curve generation and the CSV format.
//!
//! A curve bundle is one QFI curve per control time plus the uncontrolled
//! curve, written as `t,tc,qfi` rows with `tc = inf` for the latter. Floats
//! are written with 17 significant digits so the file round-trips exactly.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control::{controlled_qfi_angle, controlled_qfi_strength};
use crate::dynamics::FamilyKind;
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 3] = ["t", "tc", "qfi"];
pub const FIGURE_GRID_POINTS: usize = 201;
pub const FIGURE_CONTROL_SPACING: f64 = 0.05;
pub const FIGURE_CONTROL_CURVES: usize = 11;
/// Upper bound on `t_steps`, to keep a typo from allocating gigabytes.
pub const MAX_T_STEPS: usize = 1_000_000;
pub const MAX_ORACLE_DIM: usize = 400;

fn default_t_max() -> f64 {
    1.0
}

fn default_t_steps() -> usize {
    FIGURE_GRID_POINTS
}

fn default_oracle_dim() -> usize {
    crate::fock::DEFAULT_DIM
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub family: FamilyKind,
    pub y: f64,
    #[serde(default)]
    pub theta_bar: f64,
    #[serde(rename = "N")]
    pub big_n: f64,
    #[serde(default)]
    pub t_c_list: Vec<f64>,
    #[serde(default = "default_t_max")]
    pub t_max: f64,
    #[serde(default = "default_t_steps")]
    pub t_steps: usize,
    #[serde(default)]
    pub oracle: bool,
    #[serde(default = "default_oracle_dim")]
    pub oracle_dim: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ExperimentConfig {
    pub fn new(family: FamilyKind, y: f64, big_n: f64) -> Self {
        Self {
            family,
            y,
            theta_bar: 0.0,
            big_n,
            t_c_list: Vec::new(),
            t_max: default_t_max(),
            t_steps: default_t_steps(),
            oracle: false,
            oracle_dim: default_oracle_dim(),
            seed: 0,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.family == FamilyKind::Custom {
            return bad("family must be angle or strength".into());
        }
        if !(self.y.is_finite() && self.y >= 1.0) {
            return bad(format!("y = {} must be >= 1", self.y));
        }
        if !self.theta_bar.is_finite() {
            return bad("theta_bar must be finite".into());
        }
        if !(self.big_n.is_finite() && self.big_n >= 1.0) {
            return bad(format!("N = {} must be >= 1", self.big_n));
        }
        if !(self.t_max.is_finite() && self.t_max > 0.0) {
            return bad(format!("t_max = {} must be positive", self.t_max));
        }
        if !(2..=MAX_T_STEPS).contains(&self.t_steps) {
            return bad(format!("t_steps = {} must be in [2, {MAX_T_STEPS}]", self.t_steps));
        }
        if let Some(tc) = self.t_c_list.iter().find(|&&tc| !(0.0..=self.t_max).contains(&tc)) {
            return bad(format!("control time {tc} outside [0, t_max]"));
        }
        if !(2..=MAX_ORACLE_DIM).contains(&self.oracle_dim) {
            return bad(format!("oracle_dim = {} must be in [2, {MAX_ORACLE_DIM}]", self.oracle_dim));
        }
        Ok(())
    }

    /// `t_steps` uniform points on `[0, t_max]`, endpoints included.
    pub fn t_grid(&self) -> Vec<f64> {
        let last = (self.t_steps - 1) as f64;
        (0..self.t_steps).map(|k| self.t_max * k as f64 / last).collect()
    }

    /// Control times in output order, the uncontrolled curve last.
    pub fn curve_labels(&self) -> Vec<f64> {
        let mut tcs = self.t_c_list.clone();
        tcs.sort_by(f64::total_cmp);
        tcs.dedup();
        tcs.push(f64::INFINITY);
        tcs
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Figure {
    Fig2,
    Fig3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Panel {
    Upper,
    Lower,
}

impl FromStr for Figure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fig2" | "2" => Ok(Figure::Fig2),
            "fig3" | "3" => Ok(Figure::Fig3),
            _ => Err(Error::InvalidConfig(format!("unknown figure '{s}' (expected fig2 or fig3)"))),
        }
    }
}

impl FromStr for Panel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "upper" => Ok(Panel::Upper),
            "lower" => Ok(Panel::Lower),
            _ => Err(Error::InvalidConfig(format!("unknown panel '{s}' (expected upper or lower)"))),
        }
    }
}

impl fmt::Display for Figure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Figure::Fig2 => "fig2",
            Figure::Fig3 => "fig3",
        })
    }
}

impl fmt::Display for Panel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Panel::Upper => "upper",
            Panel::Lower => "lower",
        })
    }
}

/// Control times `0, 0.05, …, 0.5`.
pub fn figure_control_times() -> Vec<f64> {
    (0..FIGURE_CONTROL_CURVES).map(|k| k as f64 / 20.0).collect()
}

/// Figure 2 is the squeezing angle, figure 3 the strength; the upper panels
/// use `y = 3, N = 1`, the lower ones `y = 10, N = 2`.
pub fn figure_config(figure: Figure, panel: Panel) -> ExperimentConfig {
    let family = match figure {
        Figure::Fig2 => FamilyKind::Angle,
        Figure::Fig3 => FamilyKind::Strength,
    };
    let (y, n) = match panel {
        Panel::Upper => (3.0, 1.0),
        Panel::Lower => (10.0, 2.0),
    };
    ExperimentConfig { t_c_list: figure_control_times(), ..ExperimentConfig::new(family, y, n) }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub t: f64,
    /// Control time, `inf` for the uncontrolled curve.
    pub tc: f64,
    pub qfi: f64,
}

/// Closed-form QFI for every `(tc, t)` pair, ordered by `tc` then `t`.
pub fn qfi_curve(cfg: &ExperimentConfig) -> Result<Vec<CurveRow>> {
    cfg.validate()?;
    let f = match cfg.family {
        FamilyKind::Angle => controlled_qfi_angle,
        _ => controlled_qfi_strength,
    };
    let grid = cfg.t_grid();
    let jobs: Vec<(f64, f64)> =
        cfg.curve_labels().into_iter().flat_map(|tc| grid.iter().map(move |&t| (tc, t))).collect();
    jobs.into_par_iter()
        .map(|(tc, t)| Ok(CurveRow { t, tc, qfi: f(cfg.y, cfg.big_n, tc, t)? }))
        .collect()
}

/// Groups rows into curves keyed by control time, preserving row order.
pub fn split_curves(rows: &[CurveRow]) -> Vec<(f64, Vec<CurveRow>)> {
    let mut out: Vec<(f64, Vec<CurveRow>)> = Vec::new();
    for row in rows {
        match out.iter_mut().find(|(tc, _)| tc.total_cmp(&row.tc).is_eq()) {
            Some((_, curve)) => curve.push(*row),
            None => out.push((row.tc, vec![*row])),
        }
    }
    out
}

pub fn format_float(x: f64) -> String {
    if x.is_infinite() && x > 0.0 {
        "inf".to_string()
    } else {
        format!("{x:.16e}")
    }
}

fn parse_float(field: &str, line: u64) -> Result<f64> {
    let v: f64 = field
        .trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("line {line}: '{field}' is not a number")))?;
    if v.is_nan() {
        return Err(Error::InvalidConfig(format!("line {line}: NaN is not allowed")));
    }
    Ok(v)
}

pub fn write_csv<W: Write>(rows: &[CurveRow], out: W) -> Result<()> {
    let io = |e: csv::Error| Error::InvalidConfig(format!("writing CSV: {e}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER).map_err(io)?;
    for r in rows {
        w.write_record([format_float(r.t), format_float(r.tc), format_float(r.qfi)]).map_err(io)?;
    }
    w.flush().map_err(|e| Error::InvalidConfig(format!("writing CSV: {e}")))
}

pub fn to_csv_string(rows: &[CurveRow]) -> String {
    let mut buf = Vec::new();
    write_csv(rows, &mut buf).expect("writing to memory");
    String::from_utf8(buf).expect("CSV output is ASCII")
}

/// Reads a `t,tc,qfi` file. Only `tc` may be `inf`.
pub fn read_csv<R: Read>(input: R) -> Result<Vec<CurveRow>> {
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header = r.headers().map_err(|e| Error::InvalidConfig(format!("reading CSV header: {e}")))?;
    if header.iter().map(str::trim).ne(CSV_HEADER) {
        return Err(Error::InvalidConfig(format!("expected header t,tc,qfi, got {:?}", header.iter().collect::<Vec<_>>())));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| Error::InvalidConfig(format!("reading CSV: {e}")))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != 3 {
            return Err(Error::InvalidConfig(format!("line {line}: expected 3 fields, got {}", rec.len())));
        }
        let t = parse_float(&rec[0], line)?;
        let tc = parse_float(&rec[1], line)?;
        let qfi = parse_float(&rec[2], line)?;
        if !t.is_finite() || !qfi.is_finite() || tc == f64::NEG_INFINITY {
            return Err(Error::InvalidConfig(format!("line {line}: only tc may be inf")));
        }
        rows.push(CurveRow { t, tc, qfi });
    }
    Ok(rows)
}

pub fn parse_csv(text: &str) -> Result<Vec<CurveRow>> {
    read_csv(text.as_bytes())
}
