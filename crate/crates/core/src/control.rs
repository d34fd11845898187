//! Control functions φ, the averaged contraction condition, the derived
//! weights ψ and χ, and the corollary coefficient calculator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Carrier, GroupK, Point};
use crate::funcspace::{residual_pexider, Beta, FuncError, FuncRep};
use crate::scan;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ControlError {
    #[error("invalid control: {0}")]
    InvalidControl(String),
    #[error("control is not contractive: L = {lipschitz} >= 1 at {worst:?}")]
    NotContractive { lipschitz: f64, worst: (Point, Point) },
    #[error("φ vanishes at {0:?} but the averaged control does not")]
    ZeroDenominatorViolation((Point, Point)),
    #[error("control is identically zero on the enumeration")]
    Degenerate,
    #[error("constraint violated: {0}")]
    ConstraintViolation(String),
    #[error(transparent)]
    Func(#[from] FuncError),
}

/// Entry of a tabulated control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableEntry {
    pub x: Point,
    pub y: Point,
    pub value: f64,
}

/// The control φ(x, y) bounding the Pexider defect.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ControlFn {
    Constant { theta: f64 },
    Power { theta: f64, p: f64 },
    /// Missing pairs read as zero.
    Table {
        #[serde(with = "table_serde")]
        entries: BTreeMap<(Point, Point), f64>,
    },
}

mod table_serde {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(m: &BTreeMap<(Point, Point), f64>, s: S) -> Result<S::Ok, S::Error> {
        let v: Vec<TableEntry> = m
            .iter()
            .map(|((x, y), &value)| TableEntry {
                x: x.clone(),
                y: y.clone(),
                value,
            })
            .collect();
        v.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(Point, Point), f64>, D::Error> {
        let v = Vec::<TableEntry>::deserialize(d)?;
        Ok(v.into_iter().map(|e| ((e.x, e.y), e.value)).collect())
    }
}

impl ControlFn {
    pub fn constant(theta: f64) -> Result<Self, ControlError> {
        let c = ControlFn::Constant { theta };
        c.validate()?;
        Ok(c)
    }

    pub fn power(theta: f64, p: f64) -> Result<Self, ControlError> {
        let c = ControlFn::Power { theta, p };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        match self {
            ControlFn::Constant { theta } | ControlFn::Power { theta, .. } if !(*theta > 0.0 && theta.is_finite()) => {
                Err(ControlError::InvalidControl(format!("θ must be positive, got {theta}")))
            }
            ControlFn::Power { p, .. } if !(*p > 0.0 && p.is_finite()) => {
                Err(ControlError::InvalidControl(format!("p must be positive, got {p}")))
            }
            ControlFn::Table { entries } => match entries.values().find(|v| !(**v >= 0.0 && v.is_finite())) {
                Some(v) => Err(ControlError::InvalidControl(format!("table entry {v} is not a finite nonnegative number"))),
                None => Ok(()),
            },
            _ => Ok(()),
        }
    }

    /// Returns the same control with θ multiplied by `s` (tables scale entrywise).
    pub fn scaled(&self, s: f64) -> ControlFn {
        match self {
            ControlFn::Constant { theta } => ControlFn::Constant { theta: theta * s },
            ControlFn::Power { theta, p } => ControlFn::Power { theta: theta * s, p: *p },
            ControlFn::Table { entries } => ControlFn::Table {
                entries: entries.iter().map(|(k, v)| (k.clone(), v * s)).collect(),
            },
        }
    }
}

/// φ(x, y).
pub fn eval_control(phi: &ControlFn, carrier: &Carrier, x: &[i64], y: &[i64]) -> f64 {
    match phi {
        ControlFn::Constant { theta } => *theta,
        ControlFn::Power { theta, p } => {
            let pw = |v: f64| if v == 0.0 { 0.0 } else { v.powf(*p) };
            theta * (pw(carrier.point_norm(x)) + pw(carrier.point_norm(y)))
        }
        ControlFn::Table { entries } => entries
            .get(&(carrier.reduce(x), carrier.reduce(y)))
            .copied()
            .unwrap_or(0.0),
    }
}

/// Measured constant of the averaged contraction condition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LipschitzCert {
    pub lipschitz: f64,
    pub worst_pair: Option<(Point, Point)>,
    pub ratio: f64,
}

/// `sup Σ_k φ(x+k·x, y+k·y) / ((2|K|)^β φ(x, y))` over pairs with φ > 0.
///
/// Pairs with φ(x, y) = 0 must have a zero numerator.
pub fn minimal_lipschitz(phi: &ControlFn, group: &GroupK, beta: Beta) -> Result<LipschitzCert, ControlError> {
    let cert = measure_lipschitz(phi, group, beta)?;
    if cert.lipschitz >= 1.0 {
        return Err(ControlError::NotContractive {
            lipschitz: cert.lipschitz,
            worst: cert.worst_pair.clone().unwrap_or_default(),
        });
    }
    Ok(cert)
}

/// Like [`minimal_lipschitz`] but reports `L̂ ≥ 1` instead of failing.
pub fn measure_lipschitz(phi: &ControlFn, group: &GroupK, beta: Beta) -> Result<LipschitzCert, ControlError> {
    let carrier = group.carrier();
    let points = carrier.points();
    let norm = (2.0 * group.order() as f64).powf(beta.get());
    let score = |x: &Point, y: &Point| -> Result<f64, ControlError> {
        let den = eval_control(phi, carrier, x, y);
        let num: f64 = group
            .elements()
            .iter()
            .map(|k| {
                let kx = carrier.add(x, &group.act(k, x));
                let ky = carrier.add(y, &group.act(k, y));
                eval_control(phi, carrier, &kx, &ky)
            })
            .sum();
        if den == 0.0 {
            if num > 0.0 {
                return Err(ControlError::ZeroDenominatorViolation((x.clone(), y.clone())));
            }
            return Ok(f64::NEG_INFINITY);
        }
        Ok(num / (norm * den))
    };
    match scan::max_over_pairs(&points, score)? {
        Some((ratio, i, j)) if ratio > f64::NEG_INFINITY => Ok(LipschitzCert {
            lipschitz: ratio,
            worst_pair: Some((points[i].clone(), points[j].clone())),
            ratio,
        }),
        _ => Err(ControlError::Degenerate),
    }
}

/// Which of the two derived weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DerivedKind {
    Psi,
    Chi,
}

/// ψ or χ built from φ, K and β.
#[derive(Debug, Clone)]
pub struct DerivedControl {
    phi: ControlFn,
    group: GroupK,
    beta: Beta,
    kind: DerivedKind,
}

impl DerivedControl {
    pub fn kind(&self) -> DerivedKind {
        self.kind
    }

    /// ψ(x,y) = |K|^{1-β} φ(0,y) + |K|^{-β} Σ_k [φ(k·x, y) + φ(k·x, 0)];
    /// χ adds φ(x,y) + φ(x,0) + φ(0,y).
    pub fn eval(&self, x: &[i64], y: &[i64]) -> f64 {
        let c = self.group.carrier();
        let zero = c.zero();
        let phi = |a: &[i64], b: &[i64]| eval_control(&self.phi, c, a, b);
        let kk = self.group.order() as f64;
        let b = self.beta.get();
        let orbit: f64 = self
            .group
            .elements()
            .iter()
            .map(|k| {
                let kx = self.group.act(k, x);
                phi(&kx, y) + phi(&kx, &zero)
            })
            .sum();
        let psi = kk.powf(1.0 - b) * phi(&zero, y) + kk.powf(-b) * orbit;
        match self.kind {
            DerivedKind::Psi => psi,
            DerivedKind::Chi => psi + phi(x, y) + phi(x, &zero) + phi(&zero, y),
        }
    }

    pub fn diagonal(&self, x: &[i64]) -> f64 {
        self.eval(x, x)
    }

    /// `max over pairs of Σ_k w(x+k·x, y+k·y) − (2|K|)^β L w(x, y)`; nonpositive when the
    /// weight inherits the contraction with constant `lipschitz`.
    pub fn contraction_excess(&self, lipschitz: f64) -> f64 {
        let c = self.group.carrier();
        let norm = (2.0 * self.group.order() as f64).powf(self.beta.get());
        let points = c.points();
        let best = scan::max_over_pairs::<()>(&points, |x, y| {
            let num: f64 = self
                .group
                .elements()
                .iter()
                .map(|k| {
                    let kx = c.add(x, &self.group.act(k, x));
                    let ky = c.add(y, &self.group.act(k, y));
                    self.eval(&kx, &ky)
                })
                .sum();
            Ok(num - norm * lipschitz * self.eval(x, y))
        })
        .expect("infallible");
        best.map(|b| b.0).unwrap_or(0.0)
    }
}

pub fn derive_psi(phi: &ControlFn, group: &GroupK, beta: Beta) -> DerivedControl {
    DerivedControl {
        phi: phi.clone(),
        group: group.clone(),
        beta,
        kind: DerivedKind::Psi,
    }
}

pub fn derive_chi(phi: &ControlFn, group: &GroupK, beta: Beta) -> DerivedControl {
    DerivedControl {
        phi: phi.clone(),
        group: group.clone(),
        beta,
        kind: DerivedKind::Chi,
    }
}

/// Minimum of φ − residual over the enumerated pairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub min_margin: f64,
    pub worst_pair: Option<(Point, Point)>,
    pub max_residual: f64,
}

impl HypothesisReport {
    pub fn holds(&self) -> bool {
        self.min_margin >= 0.0
    }
}

pub fn verify_hypothesis(
    f: &FuncRep,
    g: &FuncRep,
    h: &FuncRep,
    phi: &ControlFn,
    group: &GroupK,
    beta: Beta,
) -> Result<HypothesisReport, ControlError> {
    let c = group.carrier();
    let points = c.points();
    let margin = scan::min_over_pairs(&points, |x, y| {
        Ok::<_, FuncError>(eval_control(phi, c, x, y) - residual_pexider(f, g, h, group, x, y, beta)?)
    })?;
    let residual = scan::max_over_pairs(&points, |x, y| residual_pexider(f, g, h, group, x, y, beta))?;
    let (min_margin, i, j) = margin.expect("nonempty enumeration");
    Ok(HypothesisReport {
        min_margin,
        worst_pair: Some((points[i].clone(), points[j].clone())),
        max_residual: residual.map(|r| r.0).unwrap_or(0.0),
    })
}

/// Coefficients of `‖x‖^p` in the three power-control bounds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CorollaryCoefficients {
    pub f: f64,
    pub g: f64,
    pub h: f64,
    pub alpha: f64,
    /// `2^{p-β} |K|^{β-1}`, the constant the power-control corollary proposes.
    pub proposed_lipschitz: f64,
    /// `2^p |K| / (2|K|)^β`, the constant whose `1/(1−L)` the coefficients contain.
    pub implied_lipschitz: f64,
}

/// Evaluates the power-control bound coefficients after checking
/// `α/(α+1) < β < 1` and `0 < p < β + (β−1)α` with `α = log₂|K|`.
pub fn corollary_coefficients(theta: f64, p: f64, beta: f64, order: usize) -> Result<CorollaryCoefficients, ControlError> {
    if order == 0 {
        return Err(ControlError::ConstraintViolation("|K| must be at least 1".into()));
    }
    if !(theta >= 0.0 && theta.is_finite()) {
        return Err(ControlError::ConstraintViolation(format!("θ = {theta} must be nonnegative")));
    }
    let k = order as f64;
    let alpha = k.ln() / 2f64.ln();
    if !(alpha / (alpha + 1.0) < beta && beta < 1.0) {
        return Err(ControlError::ConstraintViolation(format!(
            "α/(α+1) < β < 1 fails: α/(α+1) = {}, β = {beta}",
            alpha / (alpha + 1.0)
        )));
    }
    let p_max = beta + (beta - 1.0) * alpha;
    if !(0.0 < p && p < p_max) {
        return Err(ControlError::ConstraintViolation(format!(
            "0 < p < β + (β−1)α fails: p = {p}, β + (β−1)α = {p_max}"
        )));
    }
    let two_k_beta = (2.0 * k).powf(beta);
    let lead = theta / 2f64.powf(beta) * two_k_beta / (two_k_beta - 2f64.powf(p) * k);
    let orbit = k.powf(1.0 - beta);
    let three_p = 3f64.powf(p);
    let f = lead * (orbit * (6.0 + 6.0 * three_p) + 8.0);
    let h = lead * (orbit * (2.0 + 2.0 * three_p)) + theta;
    Ok(CorollaryCoefficients {
        f,
        g: f + theta,
        h,
        alpha,
        proposed_lipschitz: 2f64.powf(p - beta) * k.powf(beta - 1.0),
        implied_lipschitz: 2f64.powf(p) * k / two_k_beta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{build_group, generators};

    fn b(x: f64) -> Beta {
        Beta::new(x).unwrap()
    }

    fn neg_group(carrier: Carrier) -> GroupK {
        build_group(&[generators::negation(carrier.dim())], &carrier).unwrap()
    }

    #[test]
    fn eval_control_examples() {
        let l = Carrier::lattice(1, 5).unwrap();
        let c = ControlFn::constant(0.3).unwrap();
        assert_eq!(eval_control(&c, &l, &[2], &[-4]), 0.3);
        let p = ControlFn::power(1.0, 0.5).unwrap();
        assert_eq!(eval_control(&p, &l, &[4], &[0]), 2.0);
        assert_eq!(eval_control(&p, &l, &[0], &[0]), 0.0);
        assert!(ControlFn::constant(0.0).is_err());
        assert!(ControlFn::power(1.0, -0.5).is_err());
    }

    #[test]
    fn lipschitz_constant_control() {
        let l = Carrier::lattice(1, 6).unwrap();
        let cert = minimal_lipschitz(&ControlFn::constant(2.0).unwrap(), &neg_group(l), b(1.0)).unwrap();
        assert!((cert.lipschitz - 0.5).abs() < 1e-15);
    }

    #[test]
    fn lipschitz_power_control_negation() {
        // Σ_k φ(x+kx, y+ky) = φ(2x, 2y) + φ(0, 0) = 2^p φ(x, y)
        let l = Carrier::lattice(1, 8).unwrap();
        let phi = ControlFn::power(1.0, 0.5).unwrap();
        let cert = minimal_lipschitz(&phi, &neg_group(l), b(1.0)).unwrap();
        assert!((cert.lipschitz - 2f64.powf(0.5 - 2.0)).abs() < 1e-12);
        let proposed = corollary_coefficients(1.0, 0.5, 0.9, 2).unwrap().proposed_lipschitz;
        assert!(cert.lipschitz <= 2f64.powf(0.5 - 1.0));
        assert!(proposed > 0.0);
    }

    #[test]
    fn lipschitz_power_control_swap_attains_corollary_constant() {
        let l = Carrier::lattice(2, 4).unwrap();
        let k = build_group(&[generators::swap(2, 0, 1)], &l).unwrap();
        let phi = ControlFn::power(1.0, 0.5).unwrap();
        let cert = minimal_lipschitz(&phi, &k, b(1.0)).unwrap();
        assert!((cert.lipschitz - 2f64.powf(0.5 - 1.0)).abs() < 1e-12);
        let err = minimal_lipschitz(&ControlFn::power(1.0, 1.2).unwrap(), &k, b(1.0)).unwrap_err();
        match err {
            ControlError::NotContractive { lipschitz, .. } => {
                assert!((lipschitz - 2f64.powf(0.2)).abs() < 1e-12)
            }
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn swap_attains_implied_not_proposed_constant() {
        let l = Carrier::lattice(2, 4).unwrap();
        let k = build_group(&[generators::swap(2, 0, 1)], &l).unwrap();
        let cert = minimal_lipschitz(&ControlFn::power(1.0, 0.5).unwrap(), &k, b(0.9)).unwrap();
        let c = corollary_coefficients(1.0, 0.5, 0.9, 2).unwrap();
        // 2^p |K| / (2|K|)^β = 2^{-0.3}, above the proposed 2^{p-β}|K|^{β-1} = 2^{-0.5}
        assert!((cert.lipschitz - 2f64.powf(-0.3)).abs() < 1e-12);
        assert!((c.implied_lipschitz - 2f64.powf(-0.3)).abs() < 1e-12);
        assert!((c.proposed_lipschitz - 2f64.powf(-0.5)).abs() < 1e-12);
    }

    #[test]
    fn lipschitz_invariant_under_theta_scaling() {
        let l = Carrier::lattice(1, 5).unwrap();
        let k = neg_group(l);
        let a = measure_lipschitz(&ControlFn::power(1.0, 0.3).unwrap(), &k, b(0.7)).unwrap();
        let c = measure_lipschitz(&ControlFn::power(17.0, 0.3).unwrap(), &k, b(0.7)).unwrap();
        assert!((a.lipschitz - c.lipschitz).abs() < 1e-12);
    }

    #[test]
    fn zero_denominator_violation() {
        let l = Carrier::lattice(1, 2).unwrap();
        let mut entries = BTreeMap::new();
        entries.insert((vec![0], vec![0]), 1.0);
        // φ(1,1) = 0 but φ(2,2)+φ(0,0) > 0 via the (0,0) entry
        let phi = ControlFn::Table { entries };
        assert!(matches!(
            minimal_lipschitz(&phi, &neg_group(l), b(1.0)),
            Err(ControlError::ZeroDenominatorViolation(_))
        ));
    }

    #[test]
    fn derived_weights_constant_control() {
        let theta = 0.25;
        let phi = ControlFn::constant(theta).unwrap();
        let l = Carrier::lattice(1, 3).unwrap();
        for group in [neg_group(l), GroupK::trivial(l)] {
            let psi = derive_psi(&phi, &group, b(1.0));
            let chi = derive_chi(&phi, &group, b(1.0));
            for x in l.points() {
                assert!((psi.diagonal(&x) - 3.0 * theta).abs() < 1e-15);
                assert!((chi.diagonal(&x) - 6.0 * theta).abs() < 1e-15);
            }
        }
        let zero = ControlFn::Table { entries: BTreeMap::new() };
        let psi = derive_psi(&zero, &neg_group(l), b(0.5));
        let chi = derive_chi(&zero, &neg_group(l), b(0.5));
        assert_eq!(psi.eval(&[1], &[2]), 0.0);
        assert_eq!(chi.eval(&[1], &[2]), 0.0);
    }

    #[test]
    fn derived_weights_inherit_contraction() {
        let l = Carrier::lattice(2, 3).unwrap();
        let k = build_group(&[generators::swap(2, 0, 1)], &l).unwrap();
        let phi = ControlFn::power(0.7, 0.3).unwrap();
        let beta = b(0.8);
        let cert = minimal_lipschitz(&phi, &k, beta).unwrap();
        for w in [derive_psi(&phi, &k, beta), derive_chi(&phi, &k, beta)] {
            assert!(w.contraction_excess(cert.lipschitz) <= 1e-12);
        }
    }

    #[test]
    fn hypothesis_detects_nonzero_residual_at_origin() {
        use crate::funcspace::{FuncRep, PolyPlusTable, Value};
        let l = Carrier::lattice(1, 3).unwrap();
        let k = neg_group(l);
        let zero: FuncRep = PolyPlusTable::zero(l, 1).into();
        let noisy: FuncRep = PolyPlusTable::zero(l, 1)
            .with_noise(BTreeMap::from([(vec![0], Value(vec![1e-3]))]))
            .unwrap()
            .into();
        let phi = ControlFn::power(1.0, 0.5).unwrap();
        let rep = verify_hypothesis(&noisy, &zero, &zero, &phi, &k, b(1.0)).unwrap();
        assert!(rep.min_margin < 0.0);
        assert_eq!(rep.worst_pair, Some((vec![0], vec![0])));
        let rep = verify_hypothesis(&zero, &zero, &zero, &phi, &k, b(1.0)).unwrap();
        assert!(rep.holds());
    }

    #[test]
    fn coefficients_match_high_precision_reference() {
        // 50-digit reference evaluations of the three bound coefficients
        let cases = [
            ((1.0, 0.5, 0.9, 2), [72.98096161808622938018077, 73.98096161808622938018077, 17.7155383478414904762843]),
            ((1.0, 0.25, 0.8, 1), [39.67508908938931754323013, 40.67508908938931754323013, 9.393184069100133923152342]),
            ((2.5, 0.1, 0.95, 4), [68.97579469097737265121737, 71.47579469097737265121737, 16.97956510528093975764404]),
        ];
        for ((theta, p, beta, k), want) in cases {
            let c = corollary_coefficients(theta, p, beta, k).unwrap();
            for (got, want) in [c.f, c.g, c.h].into_iter().zip(want) {
                assert!(((got - want) / want).abs() < 1e-10, "{got} vs {want}");
            }
        }
    }

    #[test]
    fn coefficients_constraints() {
        // |K| = 2: the constraint reduces to 0 < p < 2β − 1
        assert!(corollary_coefficients(1.0, 0.8, 0.9, 2).is_err());
        assert!(corollary_coefficients(1.0, 0.79, 0.9, 2).is_ok());
        assert!(corollary_coefficients(1.0, 0.1, 0.5, 2).is_err());
        assert!(corollary_coefficients(1.0, 0.1, 1.0, 2).is_err());
        let zero = corollary_coefficients(0.0, 0.5, 0.9, 2).unwrap();
        assert_eq!((zero.f, zero.g, zero.h), (0.0, 0.0, 0.0));
    }
}
