//! p-capacity of finite sets relative to exhausting balls, and the
//! parabolic/hyperbolic classification drawn from the capacity sequence.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::energy::{region_energy, ScalarField};
use crate::error::{Error, Result};
use crate::graph::{ball, FiniteRegion, Graph, Vertex};
use crate::solver::{solve_dirichlet, SolverConfig};

/// Capacity of `A` relative to one ball, with the solve diagnostics.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallCapacity {
    pub radius: usize,
    pub value: f64,
    /// Free vertices `B_n(o) ∖ A`.
    pub free_vertices: usize,
    pub sweeps: usize,
    pub max_residual: f64,
}

/// `Cap_p(A, B_n(o))`: the minimal `I_p(u, V)` over `u = 1` on `A`, `u = 0`
/// outside `B_n(o)`.
///
/// The extremal `u` is p-harmonic on `B_n(o) ∖ A`. The returned value is the
/// full Dirichlet sum of `u`, each edge counted from both endpoints.
pub fn capacity_on_ball(g: &Graph, a: &BTreeSet<Vertex>, n: usize, cfg: &SolverConfig) -> Result<BallCapacity> {
    if a.is_empty() {
        return Err(Error::EmptySet);
    }
    let b = ball(g, g.base(), n)?;
    if let Some(out) = a.iter().find(|v| !b.contains(v)) {
        return Err(Error::OutsideBall(out.clone()));
    }
    let free: BTreeSet<Vertex> = b.interior().difference(a).cloned().collect();
    let indicator = |v: &Vertex| if a.contains(v) { 1.0 } else { 0.0 };

    let (u, sweeps, max_residual) = if free.is_empty() {
        (ScalarField::from_fn(b.closure().iter(), indicator), 0, 0.0)
    } else {
        let region = FiniteRegion::new(g, free)?;
        let boundary = ScalarField::from_fn(region.boundary().iter(), indicator);
        let rep = solve_dirichlet(g, &region, &boundary, cfg)?;
        if !rep.converged {
            return Err(Error::NotConverged { residual: rep.max_residual, sweeps: rep.sweeps });
        }
        let mut u = rep.field;
        for v in b.closure() {
            if !u.contains(&v) {
                let x = indicator(&v);
                u.insert(v, x);
            }
        }
        (u, rep.sweeps, rep.max_residual)
    };
    let value = region_energy(g, &u, &b, cfg.p)?;
    Ok(BallCapacity { radius: n, value, free_vertices: b.interior().len() - a.len(), sweeps, max_residual })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Parabolic,
    Hyperbolic,
    Inconclusive,
}

/// Thresholds of the finite-data classifier. These are engineering choices,
/// reported alongside every verdict.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    /// Parabolic needs a log-log slope at most this.
    pub max_slope: f64,
    /// Parabolic needs `last < decay_ratio × first`.
    pub decay_ratio: f64,
    /// Hyperbolic needs the mean relative change per step across the tail
    /// below this.
    pub tail_change: f64,
    /// Hyperbolic needs the last value above this.
    pub floor: f64,
    pub tail_len: usize,
    /// Monotonicity slack between consecutive values.
    pub slack: f64,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig { max_slope: -0.1, decay_ratio: 0.5, tail_change: 0.02, floor: 1e-6, tail_len: 3, slack: 1e-9 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    /// Least-squares slope of `log value` against `log radius`.
    pub slope: f64,
    pub last_over_first: f64,
    /// `(max - min) / (last · (tail_len - 1))` over the tail: the mean
    /// relative change per step.
    pub tail_change: f64,
    pub message: String,
}

/// Capacities along an exhaustion by balls.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CapacitySequence {
    pub radii: Vec<usize>,
    pub values: Vec<f64>,
    pub set: Vec<String>,
    pub p: f64,
    pub classification: Classification,
    pub per_radius: Vec<BallCapacity>,
}

fn check_sequence(radii: &[usize], values: &[f64], slack: f64) -> Result<()> {
    if radii.len() != values.len() {
        return Err(Error::Config("radii and values differ in length".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("radii must be strictly increasing".into()));
    }
    if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::NotMonotone(format!("value {v} is not a nonnegative real")));
    }
    for (i, w) in values.windows(2).enumerate() {
        if w[1] > w[0] + slack {
            return Err(Error::NotMonotone(format!(
                "value at radius {} ({}) exceeds value at radius {} ({})",
                radii[i + 1],
                w[1],
                radii[i],
                w[0]
            )));
        }
    }
    Ok(())
}

/// Classifies a capacity sequence. Non-monotone or negative input is
/// rejected before any verdict is drawn.
pub fn classify(radii: &[usize], values: &[f64], cfg: &ClassifierConfig) -> Result<Classification> {
    check_sequence(radii, values, cfg.slack)?;
    let k = values.len();
    if cfg.tail_len < 2 {
        return Err(Error::Config("classifier tail needs at least 2 values".into()));
    }
    if k < 4 || k < cfg.tail_len {
        return Ok(Classification {
            verdict: Verdict::Inconclusive,
            slope: f64::NAN,
            last_over_first: f64::NAN,
            tail_change: f64::NAN,
            message: format!("need at least 4 radii, got {k}"),
        });
    }
    let xs: Vec<f64> = radii.iter().map(|&r| (r as f64).ln()).collect();
    let ys: Vec<f64> = values.iter().map(|&v| v.max(f64::MIN_POSITIVE).ln()).collect();
    let (mx, my) = (xs.iter().sum::<f64>() / k as f64, ys.iter().sum::<f64>() / k as f64);
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;

    let (first, last) = (values[0], values[k - 1]);
    let last_over_first = if first > 0.0 { last / first } else { f64::NAN };
    let tail = &values[k - cfg.tail_len..];
    let spread = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max) - tail.iter().copied().fold(f64::INFINITY, f64::min);
    let tail_change = if last > 0.0 { spread / (last * (cfg.tail_len - 1) as f64) } else { f64::INFINITY };

    let (verdict, message) = if slope <= cfg.max_slope && last < cfg.decay_ratio * first {
        (Verdict::Parabolic, format!("decaying: slope {slope:.4}, last/first {last_over_first:.4}"))
    } else if tail_change < cfg.tail_change && last > cfg.floor {
        (Verdict::Hyperbolic, format!("stable tail: relative change {tail_change:.4} above floor"))
    } else {
        (
            Verdict::Inconclusive,
            format!("slope {slope:.4}, last/first {last_over_first:.4}, tail change {tail_change:.4}"),
        )
    };
    Ok(Classification { verdict, slope, last_over_first, tail_change, message })
}

/// Capacities of `A` over the given radii, solved independently in parallel,
/// then classified.
pub fn capacity_sequence(
    g: &Graph,
    a: &BTreeSet<Vertex>,
    radii: &[usize],
    cfg: &SolverConfig,
    classifier: &ClassifierConfig,
) -> Result<CapacitySequence> {
    if radii.is_empty() {
        return Err(Error::Config("no radii given".into()));
    }
    if radii.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config("radii must be strictly increasing".into()));
    }
    let per_radius =
        radii.par_iter().map(|&n| capacity_on_ball(g, a, n, cfg)).collect::<Result<Vec<BallCapacity>>>()?;
    let values: Vec<f64> = per_radius.iter().map(|c| c.value).collect();
    let slack = classifier.slack.max(10.0 * cfg.tol);
    let classification = classify(radii, &values, &ClassifierConfig { slack, ..*classifier })?;
    Ok(CapacitySequence {
        radii: radii.to_vec(),
        values,
        set: a.iter().map(ToString::to_string).collect(),
        p: cfg.p.get(),
        classification,
        per_radius,
    })
}
