//! Aggregate performance figures of a closed-loop trace.

use serde::Serialize;

use crate::harness::Trace;
use crate::scenario::Law;
use crate::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveTimeStats {
    pub count: usize,
    pub min: f64,
    pub median: f64,
    pub mean: f64,
    pub max: f64,
}

impl SolveTimeStats {
    pub fn from_samples(samples: &[f64]) -> Self {
        if samples.is_empty() {
            return Self { count: 0, min: 0.0, median: 0.0, mean: 0.0, max: 0.0 };
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]) };
        Self {
            count: n,
            min: sorted[0],
            median,
            mean: sorted.iter().sum::<f64>() / n as f64,
            max: sorted[n - 1],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub law: Law,
    pub iae_x_e: f64,
    pub iae_y_e: f64,
    pub rms_x_e: f64,
    pub rms_y_e: f64,
    pub converge_band: f64,
    /// First time after which `|y_e|` stays inside the band; `None` if the
    /// run ends outside it.
    pub time_to_converge: Option<f64>,
    /// Guidance steps whose command leaves the input box or the rate set.
    pub violations: usize,
    pub guidance_steps: usize,
    pub solve_time: SolveTimeStats,
}

/// Condenses a trace. IAE uses the left rectangle rule at the plant step.
pub fn compute_metrics(tr: &Trace, converge_band: f64) -> Result<Report, SimError> {
    let recs = &tr.records;
    if recs.is_empty() {
        return Err(SimError::EmptyTrace);
    }
    let body = &recs[..recs.len() - 1];
    let iae = |f: fn(&crate::Record) -> f64| body.iter().map(|r| f(r).abs()).sum::<f64>() * tr.t_p;
    let rms = |f: fn(&crate::Record) -> f64| (recs.iter().map(|r| f(r) * f(r)).sum::<f64>() / recs.len() as f64).sqrt();

    let time_to_converge = match recs.iter().rposition(|r| r.y_e.abs() >= converge_band) {
        None => Some(recs[0].t),
        Some(i) if i + 1 < recs.len() => Some(recs[i + 1].t),
        Some(_) => None,
    };

    let mut prev = tr.initial_command;
    let mut violations = 0;
    let mut times = Vec::new();
    for r in tr.guidance_records() {
        let cmd = r.command();
        if !tr.constraints.admits(&prev, &cmd) {
            violations += 1;
        }
        prev = cmd;
        times.push(r.solve_time);
    }

    Ok(Report {
        scenario: tr.scenario.clone(),
        law: tr.law,
        iae_x_e: iae(|r| r.x_e),
        iae_y_e: iae(|r| r.y_e),
        rms_x_e: rms(|r| r.x_e),
        rms_y_e: rms(|r| r.y_e),
        converge_band,
        time_to_converge,
        violations,
        guidance_steps: times.len(),
        solve_time: SolveTimeStats::from_samples(&times),
    })
}
