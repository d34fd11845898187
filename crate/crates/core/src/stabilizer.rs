//! The decomposition pipeline: a perturbed Pexider triple in, `f ≈ q + j + g(0) + h(0)` out,
//! with bound verification, law residuals and uniqueness probes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{
    derive_chi, derive_psi, eval_control, minimal_lipschitz, verify_hypothesis, ControlError, ControlFn,
    DerivedControl, DerivedKind,
};
use crate::domain::{Carrier, GroupK, Point};
use crate::fixpoint::{diaz_margolis_bound, iterate, AveragingOp, DiazMargolisCheck, FixpointError, IterationTrace, OpKind, TraceStep};
use crate::funcspace::{beta_norm, sup_weighted_distance, symmetrize, Beta, FuncError, FuncRep, Value};
use crate::oracle::{max_jensen_residual, max_quadratic_residual, max_side_defect};
use crate::scan;

/// Jensen residual above which a recovered `j` is flagged as not solving the Jensen equation.
pub const JENSEN_FLAG_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StabilizeError {
    #[error("hypothesis violated: margin {margin} at {pair:?}")]
    HypothesisViolated { margin: f64, pair: (Point, Point) },
    #[error("control is not contractive: L = {lipschitz} at {worst:?}")]
    NotContractive { lipschitz: f64, worst: (Point, Point) },
    #[error("Λ iteration has modulus 2^β·L = {modulus} and did not become stationary (last step {last_distance})")]
    LambdaNotContractive { modulus: f64, last_distance: f64 },
    #[error("requested L = {requested} must lie in [L̂, 1) with L̂ = {measured}")]
    InvalidLipschitz { requested: f64, measured: f64 },
    #[error("triple and group live on different carriers")]
    CarrierMismatch,
    #[error(transparent)]
    Fixpoint(#[from] FixpointError),
    #[error(transparent)]
    Control(ControlError),
    #[error(transparent)]
    Func(#[from] FuncError),
}

impl From<ControlError> for StabilizeError {
    fn from(e: ControlError) -> Self {
        match e {
            ControlError::NotContractive { lipschitz, worst } => StabilizeError::NotContractive { lipschitz, worst },
            other => StabilizeError::Control(other),
        }
    }
}

/// `f(x + k·y) ≈ g(x) + h(y)` on average over K.
#[derive(Debug, Clone, PartialEq)]
pub struct PexiderTriple {
    pub f: FuncRep,
    pub g: FuncRep,
    pub h: FuncRep,
}

impl PexiderTriple {
    pub fn new(f: FuncRep, g: FuncRep, h: FuncRep) -> Result<Self, FuncError> {
        if f.carrier() != g.carrier() || f.carrier() != h.carrier() {
            return Err(FuncError::Incompatible("triple members on different carriers".into()));
        }
        if f.r() != g.r() || f.r() != h.r() {
            return Err(FuncError::Incompatible("triple members with different target dimension".into()));
        }
        Ok(PexiderTriple { f, g, h })
    }

    pub fn carrier(&self) -> &Carrier {
        self.f.carrier()
    }

    pub fn r(&self) -> usize {
        self.f.r()
    }

    pub fn scale(&self, s: f64) -> PexiderTriple {
        PexiderTriple {
            f: self.f.scale(s),
            g: self.g.scale(s),
            h: self.h.scale(s),
        }
    }
}

/// Which operator produces the Jensen component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    /// Iterate the half-averaging operator on ω.
    PaperT,
    /// Iterate the full averaging operator Λ on ω.
    #[default]
    Lambda,
}

impl Strategy {
    pub fn other(self) -> Strategy {
        match self {
            Strategy::PaperT => Strategy::Lambda,
            Strategy::Lambda => Strategy::PaperT,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub q: FuncRep,
    pub j: FuncRep,
    pub g0: Value,
    pub h0: Value,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundCurve {
    /// Right side at each enumerated point.
    pub rhs: Vec<f64>,
    /// Measured left side at each enumerated point.
    pub lhs: Vec<f64>,
    pub min_margin: f64,
    pub worst_x: Option<Point>,
}

impl BoundCurve {
    fn from_sides(points: &[Point], rhs: Vec<f64>, lhs: Vec<f64>) -> Self {
        let mut min_margin = f64::INFINITY;
        let mut worst_x = None;
        for (i, (r, l)) in rhs.iter().zip(&lhs).enumerate() {
            let m = r - l;
            if m < min_margin {
                min_margin = m;
                worst_x = Some(points[i].clone());
            }
        }
        BoundCurve {
            rhs,
            lhs,
            min_margin,
            worst_x,
        }
    }

    pub fn max_lhs(&self) -> f64 {
        self.lhs.iter().copied().fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub points: Vec<Point>,
    pub f: BoundCurve,
    pub g: BoundCurve,
    pub h: BoundCurve,
}

impl BoundReport {
    pub fn min_margin(&self) -> f64 {
        self.f.min_margin.min(self.g.min_margin).min(self.h.min_margin)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LawResiduals {
    pub quadratic: f64,
    pub jensen: f64,
    pub side_condition: f64,
    /// ‖q(0)‖_β
    pub q_origin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceSummary {
    pub operator: OpKind,
    pub weight: DerivedKind,
    pub modulus: f64,
    pub step_count: usize,
    pub first_finite: usize,
    pub terminal_bound: f64,
    pub exact_termination: bool,
    pub certified: bool,
    pub max_ratio: Option<f64>,
    pub steps: Vec<TraceStep>,
    pub diaz_margolis: DiazMargolisCheck,
}

impl TraceSummary {
    fn new(trace: IterationTrace, operator: OpKind, weight: DerivedKind, dm: DiazMargolisCheck) -> Self {
        TraceSummary {
            operator,
            weight,
            modulus: trace.modulus,
            step_count: trace.step_count,
            first_finite: trace.first_finite,
            terminal_bound: trace.terminal_bound,
            exact_termination: trace.exact_termination,
            certified: trace.certified,
            max_ratio: trace.max_ratio(),
            steps: trace.steps,
            diaz_margolis: dm,
        }
    }

    /// True when every step ratio stays below `bound + 1e-9`.
    pub fn ratios_within(&self, bound: f64) -> bool {
        self.max_ratio.is_none_or(|r| r <= bound + crate::fixpoint::RATIO_SLACK)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Traces {
    pub q: TraceSummary,
    pub j: TraceSummary,
}

/// Outcome of running the other Jensen strategy on the same input.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub strategy: Strategy,
    /// `None` on success, otherwise the error message.
    pub failure: Option<String>,
    pub jensen_residual: Option<f64>,
    pub side_condition: Option<f64>,
    /// Jensen residual above [`JENSEN_FLAG_TOL`].
    pub violates_jensen: bool,
    pub f_bound_margin: Option<f64>,
    pub certified: Option<bool>,
    pub max_ratio: Option<f64>,
    /// χ-weighted distance between the two recovered Jensen components.
    pub distance_between: Option<f64>,
    /// Largest ‖j_selected − j_other‖_β over the enumeration.
    pub max_pointwise_gap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    #[serde(rename = "L")]
    pub lipschitz: f64,
    /// L̂ measured from φ.
    pub lipschitz_measured: f64,
    pub strategy: Strategy,
    pub bounds: BoundReport,
    pub laws: LawResiduals,
    pub traces: Traces,
    pub hypothesis_margin: f64,
    pub discrepancy: Option<Discrepancy>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilizeOptions {
    pub strategy: Strategy,
    pub tol: f64,
    pub nmax: usize,
    /// Use this L instead of L̂; must satisfy `L̂ ≤ L < 1`.
    pub lipschitz: Option<f64>,
    /// Also run the other strategy and report the disagreement.
    pub discrepancy: bool,
}

impl Default for StabilizeOptions {
    fn default() -> Self {
        StabilizeOptions {
            strategy: Strategy::Lambda,
            tol: crate::fixpoint::DEFAULT_TOL,
            nmax: crate::fixpoint::DEFAULT_NMAX,
            lipschitz: None,
            discrepancy: false,
        }
    }
}

fn weight_fn(w: &DerivedControl) -> impl Fn(&[i64]) -> f64 + '_ {
    move |x| w.diagonal(x)
}

struct JensenRun {
    j: FuncRep,
    summary: TraceSummary,
}

fn run_jensen(
    strategy: Strategy,
    omega: &FuncRep,
    group: &GroupK,
    chi: &DerivedControl,
    beta: Beta,
    lipschitz: f64,
    tol: f64,
    nmax: usize,
) -> Result<JensenRun, StabilizeError> {
    let w = weight_fn(chi);
    let (op, modulus) = match strategy {
        Strategy::PaperT => (AveragingOp::half(group), lipschitz),
        Strategy::Lambda => (AveragingOp::full(group), 2f64.powf(beta.get()) * lipschitz),
    };
    let (j, trace) = match iterate(&op, omega, &w, beta, modulus, tol, nmax) {
        Ok(r) => r,
        Err(FixpointError::MaxIterations { last_distance, .. }) if strategy == Strategy::Lambda && modulus >= 1.0 => {
            return Err(StabilizeError::LambdaNotContractive { modulus, last_distance });
        }
        Err(e) => return Err(e.into()),
    };
    let dm = diaz_margolis_bound(omega, &j, &op, modulus, &w, beta)?;
    Ok(JensenRun {
        j,
        summary: TraceSummary::new(trace, op.kind(), DerivedKind::Chi, dm),
    })
}

/// Runs the full pipeline.
pub fn stabilize(
    triple: &PexiderTriple,
    phi: &ControlFn,
    group: &GroupK,
    beta: Beta,
    opts: &StabilizeOptions,
) -> Result<(Decomposition, StabilityReport), StabilizeError> {
    if triple.carrier() != group.carrier() {
        return Err(StabilizeError::CarrierMismatch);
    }
    phi.validate()?;
    let hyp = verify_hypothesis(&triple.f, &triple.g, &triple.h, phi, group, beta)?;
    if !hyp.holds() {
        return Err(StabilizeError::HypothesisViolated {
            margin: hyp.min_margin,
            pair: hyp.worst_pair.unwrap_or_default(),
        });
    }
    let cert = minimal_lipschitz(phi, group, beta)?;
    let lipschitz = match opts.lipschitz {
        None => cert.lipschitz,
        Some(l) if l >= cert.lipschitz && l < 1.0 => l,
        Some(l) => {
            return Err(StabilizeError::InvalidLipschitz {
                requested: l,
                measured: cert.lipschitz,
            })
        }
    };

    let zero = group.carrier().zero();
    let g0 = triple.g.eval(&zero)?;
    let h0 = triple.h.eval(&zero)?;
    let psi = derive_psi(phi, group, beta);
    let chi = derive_chi(phi, group, beta);

    let phi_sym = symmetrize(&triple.f, group);
    let kappa = phi_sym.sub_constant(&g0)?.sub_constant(&h0)?;
    let half = AveragingOp::half(group);
    let psi_w = weight_fn(&psi);
    let (q, q_trace) = iterate(&half, &kappa, &psi_w, beta, lipschitz, opts.tol, opts.nmax)?;
    let q_dm = diaz_margolis_bound(&kappa, &q, &half, lipschitz, &psi_w, beta)?;

    let omega = triple.f.sub(&phi_sym)?;
    let run = run_jensen(opts.strategy, &omega, group, &chi, beta, lipschitz, opts.tol, opts.nmax)?;

    let decomp = Decomposition {
        q,
        j: run.j,
        g0,
        h0,
    };
    let bounds = verify_bounds(triple, &decomp, phi, group, beta, lipschitz)?;
    let laws = verify_laws(&decomp, group, beta)?;

    let discrepancy = if opts.discrepancy {
        let alt = opts.strategy.other();
        Some(
            match run_jensen(alt, &omega, group, &chi, beta, lipschitz, opts.tol, opts.nmax) {
                Ok(other) => {
                    let alt_decomp = Decomposition {
                        j: other.j.clone(),
                        ..decomp.clone()
                    };
                    let alt_laws = verify_laws(&alt_decomp, group, beta)?;
                    let alt_bounds = verify_bounds(triple, &alt_decomp, phi, group, beta, lipschitz)?;
                    let chi_w = weight_fn(&chi);
                    let mut gap = 0.0f64;
                    for x in group.carrier().points() {
                        gap = gap.max(beta_norm(&decomp.j.eval(&x)?.sub(&other.j.eval(&x)?), beta));
                    }
                    Discrepancy {
                        strategy: alt,
                        failure: None,
                        jensen_residual: Some(alt_laws.jensen),
                        side_condition: Some(alt_laws.side_condition),
                        violates_jensen: alt_laws.jensen > JENSEN_FLAG_TOL,
                        f_bound_margin: Some(alt_bounds.f.min_margin),
                        certified: Some(other.summary.certified),
                        max_ratio: other.summary.max_ratio,
                        distance_between: Some(sup_weighted_distance(&decomp.j, &other.j, &chi_w, beta)?),
                        max_pointwise_gap: Some(gap),
                    }
                }
                Err(e) => Discrepancy {
                    strategy: alt,
                    failure: Some(e.to_string()),
                    jensen_residual: None,
                    side_condition: None,
                    violates_jensen: false,
                    f_bound_margin: None,
                    certified: None,
                    max_ratio: None,
                    distance_between: None,
                    max_pointwise_gap: None,
                },
            },
        )
    } else {
        None
    };

    let report = StabilityReport {
        lipschitz,
        lipschitz_measured: cert.lipschitz,
        strategy: opts.strategy,
        bounds,
        laws,
        traces: Traces {
            q: TraceSummary::new(q_trace, OpKind::Half, DerivedKind::Psi, q_dm),
            j: run.summary,
        },
        hypothesis_margin: hyp.min_margin,
        discrepancy,
    };
    Ok((decomp, report))
}

/// Right side minus left side of the three decomposition bounds at every enumerated point.
pub fn verify_bounds(
    triple: &PexiderTriple,
    decomp: &Decomposition,
    phi: &ControlFn,
    group: &GroupK,
    beta: Beta,
    lipschitz: f64,
) -> Result<BoundReport, FuncError> {
    let carrier = group.carrier();
    let points = carrier.points();
    let zero = carrier.zero();
    let psi = derive_psi(phi, group, beta);
    let chi = derive_chi(phi, group, beta);
    let b = beta.get();
    let c = 1.0 / 2f64.powf(b) / (1.0 - lipschitz);
    let offset = decomp.g0.add(&decomp.h0);

    let rows: Vec<Result<[f64; 6], FuncError>> = {
        use rayon::prelude::*;
        points
            .par_iter()
            .map(|x| {
                let q = decomp.q.eval(x)?;
                let qj = q.add(&decomp.j.eval(x)?);
                let core = 2.0 * c * chi.diagonal(x) + c * psi.diagonal(x);
                let f_l = beta_norm(&triple.f.eval(x)?.sub(&qj).sub(&offset), beta);
                let g_l = beta_norm(&triple.g.eval(x)?.sub(&qj).sub(&decomp.g0), beta);
                let h_l = beta_norm(&triple.h.eval(x)?.sub(&q).sub(&decomp.h0), beta);
                let g_r = eval_control(phi, carrier, x, &zero) + core;
                let h_r = c * psi.diagonal(x) + eval_control(phi, carrier, &zero, x);
                Ok([core, f_l, g_r, g_l, h_r, h_l])
            })
            .collect()
    };
    let mut cols: [Vec<f64>; 6] = Default::default();
    for row in rows {
        for (col, v) in cols.iter_mut().zip(row?) {
            col.push(v);
        }
    }
    let [f_r, f_l, g_r, g_l, h_r, h_l] = cols;
    Ok(BoundReport {
        f: BoundCurve::from_sides(&points, f_r, f_l),
        g: BoundCurve::from_sides(&points, g_r, g_l),
        h: BoundCurve::from_sides(&points, h_r, h_l),
        points,
    })
}

/// Maximum quadratic residual of q, Jensen residual and side-condition defect of j.
pub fn verify_laws(decomp: &Decomposition, group: &GroupK, beta: Beta) -> Result<LawResiduals, FuncError> {
    Ok(LawResiduals {
        quadratic: max_quadratic_residual(&decomp.q, group, beta)?,
        jensen: max_jensen_residual(&decomp.j, group, beta)?,
        side_condition: max_side_defect(&decomp.j, group, beta)?,
        q_origin: beta_norm(&decomp.q.eval(&group.carrier().zero())?, beta),
    })
}

/// Decay of `J^n(h − h0)` towards q and `Λ^n(f − q − h0 − g0)` towards j.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UniquenessProbe {
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub lipschitz: f64,
    /// `2^β·L`; the b-envelope applies only when this is below 1.
    pub lambda_modulus: f64,
    /// `a_n ≤ L^n·a_0 + 1e-9` for every n.
    pub a_within_envelope: bool,
    /// `b_n ≤ (2^β L)^n·b_0 + 1e-9`, or `None` when the envelope does not apply.
    pub b_within_envelope: Option<bool>,
}

/// Slack for the decay envelopes.
pub const ENVELOPE_SLACK: f64 = 1e-9;

pub fn uniqueness_probe(
    triple: &PexiderTriple,
    decomp: &Decomposition,
    phi: &ControlFn,
    group: &GroupK,
    beta: Beta,
    lipschitz: f64,
    nmax: usize,
) -> Result<UniquenessProbe, FuncError> {
    let psi = derive_psi(phi, group, beta);
    let chi = derive_chi(phi, group, beta);
    let psi_w = weight_fn(&psi);
    let chi_w = weight_fn(&chi);
    let half = AveragingOp::half(group);
    let full = AveragingOp::full(group);

    let mut a = Vec::with_capacity(nmax + 1);
    let mut cur = triple.h.sub_constant(&decomp.h0)?;
    for n in 0..=nmax {
        if n > 0 {
            cur = half.apply(&cur);
        }
        a.push(sup_weighted_distance(&cur, &decomp.q, &psi_w, beta)?);
    }
    let mut b = Vec::with_capacity(nmax + 1);
    let mut cur = triple.f.sub(&decomp.q)?.sub_constant(&decomp.h0)?.sub_constant(&decomp.g0)?;
    for n in 0..=nmax {
        if n > 0 {
            cur = full.apply(&cur);
        }
        b.push(sup_weighted_distance(&cur, &decomp.j, &chi_w, beta)?);
    }
    let within = |seq: &[f64], rate: f64| {
        seq.iter()
            .enumerate()
            .all(|(n, v)| seq[0].is_infinite() || *v <= rate.powi(n as i32) * seq[0] + ENVELOPE_SLACK)
    };
    let lambda_modulus = 2f64.powf(beta.get()) * lipschitz;
    Ok(UniquenessProbe {
        a_within_envelope: within(&a, lipschitz),
        b_within_envelope: (lambda_modulus < 1.0).then(|| within(&b, lambda_modulus)),
        a,
        b,
        lipschitz,
        lambda_modulus,
    })
}

/// Largest pointwise β-distance between two functions on the enumeration.
pub fn max_pointwise_gap(a: &FuncRep, b: &FuncRep, beta: Beta) -> Result<f64, FuncError> {
    let pts = a.carrier().points();
    Ok(scan::max_over_points(&pts, |x| Ok::<_, FuncError>(beta_norm(&a.eval(x)?.sub(&b.eval(x)?), beta)))?
        .map_or(0.0, |m| m.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_group, generators};
    use crate::funcspace::tests::{lattice1, quad1};
    use crate::funcspace::{DenseTable, PolyPlusTable};
    use crate::oracle::{make_exact_triple, perturb, CertificateShape, NoiseTargets, PerturbSpec};

    fn neg(carrier: Carrier) -> GroupK {
        build_group(&[generators::negation(carrier.dim())], &carrier).unwrap()
    }

    fn exact(radius: i64) -> (PexiderTriple, GroupK) {
        let l = lattice1(radius);
        let k = neg(l);
        let t = make_exact_triple(
            &quad1(l, 2.0, 0.0, 0.0),
            &quad1(l, 0.0, 3.0, 0.0),
            &Value(vec![0.5]),
            &Value(vec![0.5]),
            &k,
        )
        .unwrap();
        (t, k)
    }

    fn coeffs(f: &FuncRep) -> (f64, f64, f64) {
        match f {
            FuncRep::Poly(p) => (p.quadratic()[0][0][0], p.linear()[0][0], p.constant().0[0]),
            FuncRep::Dense(_) => panic!("expected polynomial"),
        }
    }

    fn noisy() -> (PexiderTriple, GroupK) {
        let (t, k) = exact(32);
        let spec = PerturbSpec {
            delta: 1e-3,
            seed: 7,
            support_radius: 8.0,
            targets: NoiseTargets::F_ONLY,
            exclude_origin: true,
            shape: CertificateShape::Constant,
        };
        let (t, _) = perturb(&t, &spec, &k, Beta::new(1.0).unwrap()).unwrap();
        (t, k)
    }

    #[test]
    fn exact_recovery_under_lambda() {
        let (t, k) = exact(16);
        let beta = Beta::new(0.5).unwrap();
        let phi = ControlFn::power(1e-6, 0.25).unwrap();
        let (d, rep) = stabilize(&t, &phi, &k, beta, &StabilizeOptions::default()).unwrap();
        let (a, b, c) = coeffs(&d.q);
        assert!((a - 2.0).abs() < 1e-8 && b.abs() < 1e-8 && c.abs() < 1e-8);
        let (a, b, c) = coeffs(&d.j);
        assert!(a.abs() < 1e-8 && (b - 3.0).abs() < 1e-8 && c.abs() < 1e-8);
        assert!(rep.bounds.min_margin() >= 0.0);
        assert!(rep.bounds.f.max_lhs() <= 1e-10);
        assert!(rep.laws.quadratic <= 1e-9 && rep.laws.jensen <= 1e-9 && rep.laws.side_condition <= 1e-9);
    }

    #[test]
    fn noisy_bound_holds() {
        let (t, k) = noisy();
        let beta = Beta::new(1.0).unwrap();
        let phi = ControlFn::constant(1e-3).unwrap();
        let (d, rep) = stabilize(&t, &phi, &k, beta, &StabilizeOptions::default()).unwrap();
        assert_eq!(rep.lipschitz, 0.5);
        assert!(rep.bounds.f.max_lhs() <= 15e-3);
        assert!(rep.bounds.min_margin() >= 0.0);
        assert!(rep.laws.jensen <= 1e-9);
        // f bound right side is 12δ + 3δ everywhere
        assert!(rep.bounds.f.rhs.iter().all(|r| (r - 15e-3).abs() < 1e-15));

        let probe = uniqueness_probe(&t, &d, &phi, &k, beta, 0.5, 10).unwrap();
        assert!(probe.a_within_envelope);
        assert_eq!(probe.b_within_envelope, None);
    }

    #[test]
    fn wrong_decomposition_is_reported() {
        let (t, k) = noisy();
        let beta = Beta::new(1.0).unwrap();
        let phi = ControlFn::constant(1e-3).unwrap();
        let (mut d, _) = stabilize(&t, &phi, &k, beta, &StabilizeOptions::default()).unwrap();
        d.q = d.q.zero_like();
        let b = verify_bounds(&t, &d, &phi, &k, beta, 0.5).unwrap();
        assert!(b.f.min_margin < 0.0 && b.h.min_margin < 0.0);
    }

    #[test]
    fn constant_q_is_detected() {
        let (t, k) = exact(6);
        let d = Decomposition {
            q: FuncRep::constant(*t.carrier(), Value(vec![1.0])),
            j: t.f.zero_like(),
            g0: Value(vec![0.0]),
            h0: Value(vec![0.0]),
        };
        let laws = verify_laws(&d, &k, Beta::new(1.0).unwrap()).unwrap();
        assert!(laws.quadratic > 0.0);
    }

    #[test]
    fn fixed_point_identities() {
        let (t, k) = noisy();
        let beta = Beta::new(1.0).unwrap();
        let phi = ControlFn::constant(1e-3).unwrap();
        let (d, _) = stabilize(&t, &phi, &k, beta, &StabilizeOptions::default()).unwrap();
        let half = AveragingOp::half(&k);
        let full = AveragingOp::full(&k);
        assert!(max_pointwise_gap(&half.apply(&d.q), &d.q, beta).unwrap() <= 1e-10);
        assert!(max_pointwise_gap(&full.apply(&d.j), &d.j, beta).unwrap() <= 1e-10);
    }

    #[test]
    fn linearity() {
        let (t, k) = noisy();
        let beta = Beta::new(1.0).unwrap();
        let phi = ControlFn::constant(1e-3).unwrap();
        let opts = StabilizeOptions::default();
        let (d, _) = stabilize(&t, &phi, &k, beta, &opts).unwrap();
        for lambda in [2.0f64, -1.0] {
            let scaled_phi = phi.scaled(lambda.abs().powf(beta.get()));
            let (ds, _) = stabilize(&t.scale(lambda), &scaled_phi, &k, beta, &opts).unwrap();
            assert!(max_pointwise_gap(&ds.q, &d.q.scale(lambda), beta).unwrap() <= 1e-9);
            assert!(max_pointwise_gap(&ds.j, &d.j.scale(lambda), beta).unwrap() <= 1e-9);
            assert!(beta_norm(&ds.g0.sub(&d.g0.scale(lambda)), beta) <= 1e-9);
            assert!(beta_norm(&ds.h0.sub(&d.h0.scale(lambda)), beta) <= 1e-9);
        }
    }

    #[test]
    fn paper_t_loses_linear_part() {
        let (t, k) = exact(16);
        let beta = Beta::new(0.5).unwrap();
        let phi = ControlFn::power(1e-6, 0.25).unwrap();
        let opts = StabilizeOptions {
            discrepancy: true,
            ..Default::default()
        };
        let (_, rep) = stabilize(&t, &phi, &k, beta, &opts).unwrap();
        let disc = rep.discrepancy.unwrap();
        assert_eq!(disc.strategy, Strategy::PaperT);
        assert!(disc.failure.is_none());
        assert!(disc.max_pointwise_gap.unwrap() > 1.0);
        assert!(disc.f_bound_margin.unwrap() < 0.0);
        assert_eq!(disc.certified, Some(false));
    }

    #[test]
    fn modular_noisy_instance() {
        let z5 = Carrier::modular(5, 1).unwrap();
        let k = neg(z5);
        let zero = FuncRep::from(DenseTable::from_fn(z5, |_| Value(vec![0.0])).unwrap());
        let t = make_exact_triple(&zero, &zero, &Value(vec![1.0]), &Value(vec![-2.0]), &k).unwrap();
        let spec = PerturbSpec {
            delta: 1e-2,
            seed: 3,
            support_radius: 2.0,
            targets: NoiseTargets { f: true, g: true, h: true },
            exclude_origin: false,
            shape: CertificateShape::Constant,
        };
        let beta = Beta::new(1.0).unwrap();
        let (t, cert) = perturb(&t, &spec, &k, beta).unwrap();
        let phi = cert.control.unwrap();
        let opts = StabilizeOptions {
            strategy: Strategy::PaperT,
            ..Default::default()
        };
        let (_, rep) = stabilize(&t, &phi, &k, beta, &opts).unwrap();
        assert!(rep.bounds.min_margin() >= 0.0);
        assert!(rep.laws.quadratic <= 1e-9);
        assert!(rep.traces.q.ratios_within(rep.lipschitz));
    }

    #[test]
    fn rejects_bad_inputs() {
        let (t, k) = exact(6);
        let beta = Beta::new(1.0).unwrap();
        let opts = StabilizeOptions::default();
        let bad = PexiderTriple {
            f: t.f.scale(2.0),
            ..t.clone()
        };
        assert!(matches!(
            stabilize(&bad, &ControlFn::constant(1e-3).unwrap(), &k, beta, &opts),
            Err(StabilizeError::HypothesisViolated { .. })
        ));
        let swap_k = GroupK::trivial(*t.carrier());
        assert!(matches!(
            stabilize(&t, &ControlFn::power(1.0, 1.2).unwrap(), &swap_k, beta, &opts),
            Err(StabilizeError::HypothesisViolated { .. }) | Err(StabilizeError::NotContractive { .. })
        ));
        let l2 = Carrier::lattice(1, 7).unwrap();
        let other = neg(l2);
        assert_eq!(
            stabilize(&t, &ControlFn::constant(1.0).unwrap(), &other, beta, &opts).unwrap_err(),
            StabilizeError::CarrierMismatch
        );
        let opts = StabilizeOptions {
            lipschitz: Some(0.1),
            ..Default::default()
        };
        let zero = PolyPlusTable::zero(*t.carrier(), 1);
        let z = PexiderTriple::new(zero.clone().into(), zero.clone().into(), zero.into()).unwrap();
        assert!(matches!(
            stabilize(&z, &ControlFn::constant(1.0).unwrap(), &k, beta, &opts),
            Err(StabilizeError::InvalidLipschitz { .. })
        ));
    }
}
