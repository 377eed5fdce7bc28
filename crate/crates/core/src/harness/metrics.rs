use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pushsum::RoundTrace;

/// Outcome of a run, or of a trace row.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Converged,
    BudgetExhausted,
    Diverged,
    Completed,
}

impl fmt::Display for RunStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RunStatus::Running => "running",
            RunStatus::Converged => "converged",
            RunStatus::BudgetExhausted => "budget_exhausted",
            RunStatus::Diverged => "diverged",
            RunStatus::Completed => "completed",
        })
    }
}

impl FromStr for RunStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "running" => RunStatus::Running,
            "converged" => RunStatus::Converged,
            "budget_exhausted" => RunStatus::BudgetExhausted,
            "diverged" => RunStatus::Diverged,
            "completed" => RunStatus::Completed,
            _ => return Err(Error::parse("status", format!("unknown status `{s}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EpsOutcome {
    Converged(u64),
    BudgetExhausted,
}

impl EpsOutcome {
    pub fn rounds(self) -> Option<u64> {
        match self {
            EpsOutcome::Converged(t) => Some(t),
            EpsOutcome::BudgetExhausted => None,
        }
    }
}

/// First `t` with `psi_z(t) / psi_z(0) ≤ eps`. The first entry is taken as
/// round 0; a zero initial error counts as converged immediately.
pub fn rounds_to_epsilon(trace: &[RoundTrace], eps: f64) -> Result<EpsOutcome> {
    let first = trace
        .first()
        .ok_or_else(|| Error::invalid("trace is empty"))?;
    let mut tracker = EpsTracker::new(first.psi_z, eps)?;
    for r in trace {
        if tracker.observe(r.t, r.psi_z) {
            return Ok(EpsOutcome::Converged(r.t));
        }
    }
    Ok(EpsOutcome::BudgetExhausted)
}

/// Streaming form of [`rounds_to_epsilon`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpsTracker {
    psi0: f64,
    eps: f64,
    hit: Option<u64>,
}

impl EpsTracker {
    pub fn new(psi0: f64, eps: f64) -> Result<Self> {
        if !(eps > 0.0) {
            return Err(Error::invalid(format!("eps = {eps} must be positive")));
        }
        if !(psi0 >= 0.0 && psi0.is_finite()) {
            return Err(Error::invalid("initial error must be finite and nonnegative"));
        }
        Ok(Self { psi0, eps, hit: None })
    }

    /// Record round `t`; returns whether the target has been reached.
    pub fn observe(&mut self, t: u64, psi: f64) -> bool {
        if self.hit.is_none() && (self.psi0 == 0.0 || psi <= self.eps * self.psi0) {
            self.hit = Some(t);
        }
        self.hit.is_some()
    }

    pub fn hit(&self) -> Option<u64> {
        self.hit
    }
}

/// `Σ_{t<T} pᵗ x̄(T−t−1) / Σ_{t<T} pᵗ`: later iterates get the larger
/// weights. `iterates[k]` is `x̄(k)`.
pub fn weighted_average_iterate(iterates: &[Vec<f64>], p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::invalid(format!("p = {p} must lie in (0, 1)")));
    }
    let weights = averaging_weights(iterates.len(), p)?;
    combine(iterates, &weights)
}

/// Normalized weights `w_k` of `x̄(k)` in [`weighted_average_iterate`].
pub fn averaging_weights(len: usize, p: f64) -> Result<Vec<f64>> {
    if len == 0 {
        return Err(Error::invalid("no iterates to average"));
    }
    let raw: Vec<f64> = (0..len).map(|k| p.powi((len - 1 - k) as i32)).collect();
    let s: f64 = raw.iter().rev().sum();
    let mut w: Vec<f64> = raw.iter().map(|r| r / s).collect();
    // The largest weight absorbs the rounding residue so the sum is exactly 1.
    let rest: f64 = w[..len - 1].iter().sum();
    w[len - 1] = 1.0 - rest;
    Ok(w)
}

/// `(1/T) Σ_t x̄(t)`.
pub fn uniform_average_iterate(iterates: &[Vec<f64>]) -> Result<Vec<f64>> {
    if iterates.is_empty() {
        return Err(Error::invalid("no iterates to average"));
    }
    let w = vec![1.0 / iterates.len() as f64; iterates.len()];
    combine(iterates, &w)
}

fn combine(iterates: &[Vec<f64>], weights: &[f64]) -> Result<Vec<f64>> {
    let d = iterates[0].len();
    if iterates.iter().any(|v| v.len() != d) {
        return Err(Error::invalid("iterates have different lengths"));
    }
    let mut out = vec![0.0; d];
    for (v, w) in iterates.iter().zip(weights) {
        out.iter_mut().zip(v).for_each(|(o, x)| *o += w * x);
    }
    Ok(out)
}

/// Least-squares slope of `ln y` against `t` over the given points.
pub fn log_slope(points: &[(f64, f64)]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(_, y)| *y > 0.0 && y.is_finite())
        .map(|&(t, y)| (t, y.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mt = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mt).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(values: &[f64]) -> Vec<RoundTrace> {
        values
            .iter()
            .enumerate()
            .map(|(t, &psi_z)| RoundTrace {
                t: t as u64,
                psi_z,
                psi_x: psi_z * psi_z,
                bits_sent: 0,
                objective: None,
            })
            .collect()
    }

    #[test]
    fn geometric_trace() {
        let values: Vec<f64> = (0..500).map(|t| 0.9f64.powi(t)).collect();
        let expected = (1e-5f64.ln() / 0.9f64.ln()).ceil() as u64;
        assert_eq!(expected, 110);
        assert_eq!(
            rounds_to_epsilon(&trace(&values), 1e-5).unwrap(),
            EpsOutcome::Converged(110)
        );
    }

    #[test]
    fn zero_initial_error_and_diverging_trace() {
        assert_eq!(rounds_to_epsilon(&trace(&[0.0, 0.0]), 1e-5).unwrap(), EpsOutcome::Converged(0));
        let up: Vec<f64> = (0..50).map(|t| 1.5f64.powi(t)).collect();
        assert_eq!(rounds_to_epsilon(&trace(&up), 1e-5).unwrap(), EpsOutcome::BudgetExhausted);
        assert!(rounds_to_epsilon(&[], 1e-5).is_err());
        assert!(rounds_to_epsilon(&trace(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn weighted_average_hand_arithmetic() {
        let its = vec![vec![0.0], vec![1.0], vec![2.0]];
        let avg = weighted_average_iterate(&its, 0.5).unwrap();
        assert!((avg[0] - 10.0 / 7.0).abs() < 1e-15);
        let w = averaging_weights(3, 0.5).unwrap();
        assert_eq!(w.iter().sum::<f64>(), 1.0);
        assert!(weighted_average_iterate(&its, 1.0).is_err());
    }

    #[test]
    fn weighted_average_of_constant_is_constant() {
        let v = vec![0.3, -1.7, 2.0];
        let its = vec![v.clone(); 37];
        let avg = weighted_average_iterate(&its, 0.9).unwrap();
        for (a, b) in avg.iter().zip(&v) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn slope_of_geometric_sequence() {
        let pts: Vec<(f64, f64)> = (0..20).map(|t| (t as f64, 3.0 * 0.8f64.powi(t))).collect();
        assert!((log_slope(&pts).unwrap() - 0.8f64.ln()).abs() < 1e-12);
        assert!(log_slope(&pts[..1]).is_none());
    }

    #[test]
    fn status_strings() {
        for s in [
            RunStatus::Running,
            RunStatus::Converged,
            RunStatus::BudgetExhausted,
            RunStatus::Diverged,
            RunStatus::Completed,
        ] {
            assert_eq!(s.to_string().parse::<RunStatus>().unwrap(), s);
        }
    }
}
