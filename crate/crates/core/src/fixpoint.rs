//! Averaging operators and the fixed-point driver with iteration traces.
//!
//! `Half` is `h ↦ (1/(2|K|)) Σ_k h(x + k·x)`, which serves both as the
//! quadratic-part operator and as the Jensen-part operator of the original
//! construction; `Full` is `l ↦ (1/|K|) Σ_k l(x + k·x)`.

use serde::Serialize;
use thiserror::Error;

use crate::domain::{GroupK, IntMatrix};
use crate::funcspace::{beta_norm, sup_weighted_distance, Beta, FuncError, FuncRep};

/// Slack allowed when comparing measured contraction ratios against a modulus.
pub const RATIO_SLACK: f64 = 1e-9;
pub const DEFAULT_TOL: f64 = 1e-10;
pub const DEFAULT_NMAX: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FixpointError {
    #[error("no finite step distance within {nmax} iterations")]
    NoFiniteStep { nmax: usize },
    #[error("no convergence within {nmax} iterations (last step distance {last_distance})")]
    MaxIterations { nmax: usize, last_distance: f64 },
    #[error("the expanded power formula needs a modular carrier")]
    NotModular,
    #[error("power formula supports 1 <= n <= 3, got {0}")]
    UnsupportedPower(usize),
    #[error(transparent)]
    Func(#[from] FuncError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OpKind {
    Half,
    Full,
}

#[derive(Debug, Clone)]
pub struct AveragingOp {
    kind: OpKind,
    group: GroupK,
    shifts: Vec<IntMatrix>,
}

impl AveragingOp {
    pub fn new(kind: OpKind, group: &GroupK) -> Self {
        let d = group.carrier().dim();
        let shifts = group
            .elements()
            .iter()
            .map(|k| IntMatrix::identity(d).add(k.matrix()))
            .collect();
        AveragingOp {
            kind,
            group: group.clone(),
            shifts,
        }
    }

    pub fn half(group: &GroupK) -> Self {
        Self::new(OpKind::Half, group)
    }

    pub fn full(group: &GroupK) -> Self {
        Self::new(OpKind::Full, group)
    }

    pub fn kind(&self) -> OpKind {
        self.kind
    }

    pub fn group(&self) -> &GroupK {
        &self.group
    }

    fn scale(&self) -> f64 {
        let k = self.group.order() as f64;
        match self.kind {
            OpKind::Half => 1.0 / (2.0 * k),
            OpKind::Full => 1.0 / k,
        }
    }

    pub fn apply(&self, f: &FuncRep) -> FuncRep {
        f.substitution_average(&self.shifts, self.scale())
    }
}

pub fn apply_op(op: &AveragingOp, f: &FuncRep) -> FuncRep {
    op.apply(f)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub distance: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IterationTrace {
    pub steps: Vec<TraceStep>,
    /// Index of the first iterate whose step distance was finite.
    pub first_finite: usize,
    pub step_count: usize,
    /// Modulus used by the stopping rule.
    pub modulus: f64,
    /// Upper bound on the distance from the returned iterate to the fixed point.
    pub terminal_bound: f64,
    /// True when the stopping rule demanded an exactly stationary iterate (modulus ≥ 1).
    pub exact_termination: bool,
    /// True when every measured ratio is within the modulus.
    pub certified: bool,
}

impl IterationTrace {
    pub fn distances(&self) -> Vec<f64> {
        self.steps.iter().map(|s| s.distance).collect()
    }

    pub fn max_ratio(&self) -> Option<f64> {
        self.steps.iter().filter_map(|s| s.ratio).reduce(f64::max)
    }
}

/// Iterates `op` from `start` until the weighted step distance drops below
/// `tol·(1 − L)`, which places the returned iterate within `tol` of the fixed point.
///
/// With `lipschitz ≥ 1` no tail bound exists and the iteration only stops on an
/// exactly stationary iterate.
pub fn iterate(
    op: &AveragingOp,
    start: &FuncRep,
    weight: &dyn Fn(&[i64]) -> f64,
    beta: Beta,
    lipschitz: f64,
    tol: f64,
    nmax: usize,
) -> Result<(FuncRep, IterationTrace), FixpointError> {
    let exact = lipschitz >= 1.0;
    let threshold = if exact { 0.0 } else { tol * (1.0 - lipschitz) };
    let mut trace = IterationTrace {
        steps: Vec::new(),
        first_finite: 0,
        step_count: 0,
        modulus: lipschitz,
        terminal_bound: f64::INFINITY,
        exact_termination: exact,
        certified: true,
    };
    let mut current = start.clone();
    let mut seen_finite = false;
    let mut last = f64::INFINITY;
    for n in 0..nmax {
        let next = op.apply(&current);
        let d = sup_weighted_distance(&next, &current, weight, beta)?;
        trace.step_count = n + 1;
        if !d.is_finite() && !seen_finite {
            current = next;
            continue;
        }
        if !seen_finite {
            seen_finite = true;
            trace.first_finite = n;
        }
        let ratio = match trace.steps.last() {
            Some(prev) if prev.distance > 0.0 && prev.distance.is_finite() && d.is_finite() => {
                Some(d / prev.distance)
            }
            _ => None,
        };
        if ratio.is_some_and(|r| r > lipschitz + RATIO_SLACK) {
            trace.certified = false;
        }
        trace.steps.push(TraceStep {
            step: n,
            distance: d,
            ratio,
        });
        last = d;
        if d <= threshold {
            trace.terminal_bound = if exact { 0.0 } else { lipschitz / (1.0 - lipschitz) * d };
            return Ok((next, trace));
        }
        current = next;
    }
    if !seen_finite {
        Err(FixpointError::NoFiniteStep { nmax })
    } else {
        Err(FixpointError::MaxIterations {
            nmax,
            last_distance: last,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiazMargolisCheck {
    /// d(start, fix)
    pub distance_to_fix: f64,
    /// d(start, op(start)) / (1 − L)
    pub bound: f64,
    pub margin: f64,
}

impl DiazMargolisCheck {
    pub fn holds(&self) -> bool {
        self.margin >= -RATIO_SLACK
    }
}

/// Checks `d(start, fix) ≤ d(start, op(start)) / (1 − L)`.
pub fn diaz_margolis_bound(
    start: &FuncRep,
    fix: &FuncRep,
    op: &AveragingOp,
    lipschitz: f64,
    weight: &dyn Fn(&[i64]) -> f64,
    beta: Beta,
) -> Result<DiazMargolisCheck, FixpointError> {
    let step = sup_weighted_distance(start, &op.apply(start), weight, beta)?;
    let distance_to_fix = sup_weighted_distance(start, fix, weight, beta)?;
    let bound = if step == 0.0 {
        0.0
    } else if lipschitz >= 1.0 {
        f64::INFINITY
    } else {
        step / (1.0 - lipschitz)
    };
    let margin = if bound.is_infinite() && distance_to_fix.is_infinite() {
        0.0
    } else {
        bound - distance_to_fix
    };
    Ok(DiazMargolisCheck {
        distance_to_fix,
        bound,
        margin,
    })
}

/// Max pointwise β-norm deviation between `n` compositions of `Half` and the
/// expanded sum over tuples `(k_1, …, k_n)` of `h(x + Σ_{∅≠S⊆{1..n}} (Π_{i∈S} k_i)·x)`.
pub fn power_formula_check(h: &FuncRep, group: &GroupK, n: usize, beta: Beta) -> Result<f64, FixpointError> {
    if !group.carrier().is_modular() {
        return Err(FixpointError::NotModular);
    }
    if !(1..=3).contains(&n) {
        return Err(FixpointError::UnsupportedPower(n));
    }
    let op = AveragingOp::half(group);
    let mut composed = h.clone();
    for _ in 0..n {
        composed = op.apply(&composed);
    }

    let d = group.carrier().dim();
    let elems = group.elements();
    let kk = elems.len();
    let mut expanded_mats = Vec::with_capacity(kk.pow(n as u32));
    for mut code in 0..kk.pow(n as u32) {
        let tuple: Vec<&IntMatrix> = (0..n)
            .map(|_| {
                let k = elems[code % kk].matrix();
                code /= kk;
                k
            })
            .collect();
        let mut m = IntMatrix::identity(d);
        for subset in 1u32..(1 << n) {
            let mut prod = IntMatrix::identity(d);
            for (i, k) in tuple.iter().enumerate() {
                if subset & (1 << i) != 0 {
                    prod = prod.mul(k);
                }
            }
            m = m.add(&prod);
        }
        expanded_mats.push(m);
    }
    let expanded = h.substitution_average(&expanded_mats, (2.0 * kk as f64).powi(-(n as i32)));

    let mut worst = 0.0f64;
    for x in group.carrier().points() {
        let dev = beta_norm(&composed.eval(&x)?.sub(&expanded.eval(&x)?), beta);
        worst = worst.max(dev);
    }
    Ok(worst)
}
