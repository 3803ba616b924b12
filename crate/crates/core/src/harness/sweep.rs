//! Design-space sweeps over array size, device technology or partitioning.

use std::fmt::Write as _;

use serde::Serialize;

use super::{run_eval, EvalReport, HarnessError, SimOptions};
use crate::dataio::{Dataset, WeightsBundle};
use crate::params::{derive_partitions, HyperParams, Technology};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum SweepAxis {
    /// Square subarray sizes; partitions are derived per size.
    ArraySizes(Vec<usize>),
    /// Device presets; partitions stay as in the base configuration.
    Technologies(Vec<Technology>),
    /// Explicit `(h_p, v_p)` pairs.
    Partitions(Vec<(Vec<usize>, Vec<usize>)>),
}

impl SweepAxis {
    pub fn len(&self) -> usize {
        match self {
            SweepAxis::ArraySizes(v) => v.len(),
            SweepAxis::Technologies(v) => v.len(),
            SweepAxis::Partitions(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub config_id: usize,
    pub label: String,
    pub h_p: Vec<usize>,
    pub v_p: Vec<usize>,
    pub r_low: f64,
    pub r_high: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
    #[serde(rename = "p_average_watts", skip_serializing_if = "Option::is_none")]
    pub p_average: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<EvalReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sweep serializes")
    }

    pub fn to_table(&self) -> String {
        let fmt_list = |v: &[usize]| format!("{v:?}");
        let cells: Vec<[String; 6]> = self
            .rows
            .iter()
            .map(|r| {
                [
                    r.config_id.to_string(),
                    r.label.clone(),
                    fmt_list(&r.h_p),
                    fmt_list(&r.v_p),
                    r.accuracy.map_or_else(|| "-".into(), |a| format!("{:.2}", 100.0 * a)),
                    match (&r.p_average, &r.error) {
                        (Some(p), _) => format!("{p:.6e}"),
                        (None, Some(e)) => format!("error: {e}"),
                        _ => "-".into(),
                    },
                ]
            })
            .collect();
        let header = ["#", "config", "H_P", "V_P", "accuracy (%)", "P_average (W)"];
        let mut widths = header.map(str::len);
        for row in &cells {
            for (w, c) in widths.iter_mut().zip(row) {
                *w = (*w).max(c.chars().count());
            }
        }
        let mut out = String::new();
        let line = |out: &mut String, row: &[String]| {
            let parts: Vec<String> =
                row.iter().zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
            let _ = writeln!(out, "{}", parts.join("  ").trim_end());
        };
        line(&mut out, &header.map(String::from));
        for row in &cells {
            line(&mut out, row);
        }
        out
    }
}

/// Runs one evaluation per axis entry. A failing entry is recorded in its
/// row and the sweep moves on.
pub fn sweep<T: Scalar>(
    base: &HyperParams,
    axis: &SweepAxis,
    weights: &WeightsBundle,
    data: &Dataset,
    n_s: usize,
    opts: &SimOptions,
) -> Result<SweepResult, HarnessError> {
    if axis.is_empty() {
        return Err(HarnessError::EmptyAxis);
    }
    let configs: Vec<(String, Result<HyperParams, HarnessError>)> = match axis {
        SweepAxis::ArraySizes(sizes) => sizes
            .iter()
            .map(|&n| {
                let params = derive_partitions(&base.topology, n, n, true)
                    .map(|p| base.with_partitions(p.h_p, p.v_p))
                    .map_err(HarnessError::from);
                (format!("{n}x{n}"), params)
            })
            .collect(),
        SweepAxis::Technologies(techs) => {
            techs.iter().map(|&t| (t.to_string(), Ok(base.with_technology(t)))).collect()
        }
        SweepAxis::Partitions(parts) => parts
            .iter()
            .map(|(h, v)| (format!("H_P={h:?} V_P={v:?}"), Ok(base.with_partitions(h.clone(), v.clone()))))
            .collect(),
    };

    let rows = configs
        .into_iter()
        .enumerate()
        .map(|(config_id, (label, params))| {
            let shown = params.as_ref().unwrap_or(base);
            let mut row = SweepRow {
                config_id,
                label,
                h_p: shown.h_p.clone(),
                v_p: shown.v_p.clone(),
                r_low: shown.r_low,
                r_high: shown.r_high,
                accuracy: None,
                p_average: None,
                report: None,
                error: None,
            };
            match params.and_then(|p| run_eval::<T>(&p, weights, data, n_s, opts)) {
                Ok(mut report) => {
                    report.per_sample = None;
                    row.accuracy = Some(report.accuracy);
                    row.p_average = Some(report.p_average);
                    row.report = Some(report);
                }
                Err(e) => row.error = Some(e.to_string()),
            }
            row
        })
        .collect();
    Ok(SweepResult { rows })
}
