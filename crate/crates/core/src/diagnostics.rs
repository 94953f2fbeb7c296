//! Invariant checks over the trace of an online run.
//!
//! Every check reports the worst margin over the run, signed so that a
//! margin at or above `-slack` passes.

use std::fmt;

use crate::online::{RunConfig, TraceRecord};
use crate::tensor::LoadingSet;

/// Window used by the iterate-stability check.
pub const STABILITY_WINDOW: usize = 50;
/// Required ratio of late to early mean displacement.
pub const STABILITY_RATIO: f64 = 0.2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Pass,
    Fail,
    NotApplicable,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Pass => "PASS",
            Status::Fail => "FAIL",
            Status::NotApplicable => "N/A",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub status: Status,
    /// Smallest margin seen; `None` when not applicable.
    pub worst_margin: Option<f64>,
    pub slack: f64,
    /// Step at which the worst margin occurred.
    pub worst_step: Option<usize>,
}

impl Check {
    fn from_margins(name: &'static str, slack: f64, margins: impl IntoIterator<Item = (usize, f64)>) -> Self {
        let worst = margins
            .into_iter()
            .fold(None, |acc: Option<(usize, f64)>, (t, m)| match acc {
                Some((_, w)) if !(m < w) && !m.is_nan() => acc,
                _ => Some((t, m)),
            });
        match worst {
            None => Self::not_applicable(name, slack),
            Some((t, m)) => Self {
                name,
                status: if m >= -slack { Status::Pass } else { Status::Fail },
                worst_margin: Some(m),
                slack,
                worst_step: Some(t),
            },
        }
    }

    fn not_applicable(name: &'static str, slack: f64) -> Self {
        Self {
            name,
            status: Status::NotApplicable,
            worst_margin: None,
            slack,
            worst_step: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.status != Status::Fail
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<4} {:<28}", self.status.to_string(), self.name)?;
        if let (Some(m), Some(t)) = (self.worst_margin, self.worst_step) {
            write!(f, " worst margin {m:+.3e} at t={t} (slack {:.0e})", self.slack)?;
        }
        Ok(())
    }
}

/// Evaluates every invariant of the online algorithm on a finished run.
/// Checks that need the empirical loss are not applicable unless the run
/// was in diagnostic mode; the aggregate bounds need `λ > 0`.
pub fn check_run(trace: &[TraceRecord], cfg: &RunConfig, loadings: &LoadingSet) -> Vec<Check> {
    let lambda = cfg.lambda;
    let mut checks = vec![
        Check::from_margins(
            "finite trace",
            0.0,
            trace.iter().map(|r| (r.t, if r.is_finite() { 0.0 } else { f64::NEG_INFINITY })),
        ),
        Check::from_margins(
            "surrogate dominance",
            1e-8,
            trace
                .iter()
                .filter_map(|r| r.empirical_loss.map(|f| (r.t, r.surrogate - f))),
        ),
        Check::from_margins(
            "sweep monotonicity",
            1e-9,
            trace.iter().map(|r| (r.t, r.surrogate_before - r.surrogate)),
        ),
        Check::from_margins(
            "second-order growth",
            1e-6,
            trace
                .iter()
                .map(|r| (r.t, r.surrogate_before - r.surrogate - r.growth_margin)),
        ),
        Check::from_margins(
            "one-step bound",
            1e-8,
            trace.windows(2).filter_map(|w| {
                let (prev, cur) = (&w[0], &w[1]);
                let f_prev = prev.empirical_loss?;
                let rhs = cur.weight * (cur.batch_loss - f_prev);
                Some((cur.t, rhs - (cur.surrogate - prev.surrogate)))
            }),
        ),
    ];
    checks.push(if lambda > 0.0 {
        Check::from_margins(
            "aggregate bounds",
            1e-9,
            trace.iter().map(|r| {
                let m = r.max_batch_norm;
                let code = r.batch_norm.powi(2) / lambda - r.code_norm;
                let a = m.powi(4) / lambda.powi(2) - r.a_norm;
                let b = m.powi(3) / lambda - r.b_norm;
                (r.t, code.min(a).min(b))
            }),
        )
    } else {
        Check::not_applicable("aggregate bounds", 1e-9)
    });
    checks.push(Check::from_margins(
        "A symmetric PSD",
        1e-10,
        trace.iter().map(|r| (r.t, r.a_min_eigenvalue.min(-r.a_asymmetry))),
    ));
    checks.push(if trace.len() >= 2 * STABILITY_WINDOW {
        let mean = |rs: &[TraceRecord]| rs.iter().map(|r| r.displacement).sum::<f64>() / rs.len() as f64;
        let early = mean(&trace[..STABILITY_WINDOW]);
        let late = mean(&trace[trace.len() - STABILITY_WINDOW..]);
        Check::from_margins(
            "iterate stability",
            0.0,
            [(trace.len(), STABILITY_RATIO * early - late)],
        )
    } else {
        Check::not_applicable("iterate stability", 0.0)
    });
    let t_last = trace.last().map_or(0, |r| r.t);
    checks.push(Check::from_margins(
        "loadings within box",
        0.0,
        [(t_last, if loadings.within_box(cfg.factor.u_max) { 0.0 } else { -1.0 })],
    ));
    checks
}

/// Mean displacement over the first and the last `window` steps.
pub fn displacement_windows(trace: &[TraceRecord], window: usize) -> Option<(f64, f64)> {
    if window == 0 || trace.len() < window {
        return None;
    }
    let mean = |rs: &[TraceRecord]| rs.iter().map(|r| r.displacement).sum::<f64>() / rs.len() as f64;
    Some((mean(&trace[..window]), mean(&trace[trace.len() - window..])))
}
