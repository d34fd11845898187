//! Function representations `E -> R^r`, the β-norm on the target, the
//! K-averaging expressions, functional-equation residuals, and the weighted
//! supremum distance.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{Carrier, GroupK, IntMatrix, Point};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FuncError {
    #[error("point {point:?} is outside the carrier {carrier}")]
    OutOfCarrier { point: Point, carrier: Carrier },
    #[error("β = {0} is outside (0, 1]")]
    InvalidBeta(f64),
    #[error("value has non-finite entries: {0:?}")]
    NonFinite(Vec<f64>),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("incompatible representations: {0}")]
    Incompatible(String),
    #[error("noise point {0:?} lies outside the lattice window")]
    NoiseOutsideWindow(Point),
    #[error("quadratic coefficient matrix {0} is not symmetric")]
    AsymmetricQuadratic(usize),
}

/// A point of the target space `R^r`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Value(pub Vec<f64>);

impl Value {
    pub fn zeros(r: usize) -> Self {
        Value(vec![0.0; r])
    }

    pub fn splat(r: usize, c: f64) -> Self {
        Value(vec![c; r])
    }

    pub fn checked(v: Vec<f64>) -> Result<Self, FuncError> {
        if v.is_empty() {
            return Err(FuncError::Shape("values need at least one component".into()));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(FuncError::NonFinite(v));
        }
        Ok(Value(v))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&x| x == 0.0)
    }

    pub fn add(&self, other: &Value) -> Value {
        Value(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &Value) -> Value {
        Value(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }

    pub fn scale(&self, s: f64) -> Value {
        Value(self.0.iter().map(|a| a * s).collect())
    }

    pub fn add_assign(&mut self, other: &Value) {
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += b;
        }
    }
}

/// The exponent β of the target β-norm, `0 < β ≤ 1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct Beta(f64);

impl Beta {
    pub fn new(beta: f64) -> Result<Self, FuncError> {
        if beta > 0.0 && beta <= 1.0 {
            Ok(Beta(beta))
        } else {
            Err(FuncError::InvalidBeta(beta))
        }
    }

    pub fn get(self) -> f64 {
        self.0
    }

    /// `|λ|^β`.
    pub fn scale_factor(self, lambda: f64) -> f64 {
        lambda.abs().powf(self.0)
    }
}

impl TryFrom<f64> for Beta {
    type Error = FuncError;
    fn try_from(b: f64) -> Result<Self, FuncError> {
        Beta::new(b)
    }
}

impl From<Beta> for f64 {
    fn from(b: Beta) -> f64 {
        b.0
    }
}

/// `Σ_i |v_i|^β`.
pub fn beta_norm(v: &Value, beta: Beta) -> f64 {
    power_sum(&v.0, beta.0)
}

/// `Σ_i |v_i|^e` for an unchecked exponent; used when probing the axioms themselves.
pub fn power_sum(v: &[f64], exponent: f64) -> f64 {
    if exponent == 1.0 {
        return v.iter().map(|x| x.abs()).sum();
    }
    v.iter()
        .map(|&x| if x == 0.0 { 0.0 } else { x.abs().powf(exponent) })
        .sum()
}

/// A table over every point of a modular carrier, in enumeration order.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseTable {
    carrier: Carrier,
    r: usize,
    values: Vec<Value>,
}

impl DenseTable {
    pub fn new(carrier: Carrier, values: Vec<Value>) -> Result<Self, FuncError> {
        if !carrier.is_modular() {
            return Err(FuncError::Incompatible(
                "dense tables live on modular carriers".into(),
            ));
        }
        if values.len() != carrier.len() {
            return Err(FuncError::Shape(format!(
                "dense table has {} entries, carrier has {}",
                values.len(),
                carrier.len()
            )));
        }
        let r = values.first().map(Value::dim).unwrap_or(1);
        for v in &values {
            if v.dim() != r {
                return Err(FuncError::Shape("ragged value dimensions".into()));
            }
            Value::checked(v.0.clone())?;
        }
        Ok(DenseTable { carrier, r, values })
    }

    pub fn from_fn(carrier: Carrier, mut f: impl FnMut(&[i64]) -> Value) -> Result<Self, FuncError> {
        let values = carrier.points().iter().map(|p| f(p)).collect();
        Self::new(carrier, values)
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }
}

/// A polynomial of degree at most two plus a finite-support noise table, on a lattice.
///
/// Component `i` evaluates as `c_i + V_i·x + xᵀ A_i x + n_i(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolyPlusTable {
    carrier: Carrier,
    constant: Value,
    linear: Vec<Vec<f64>>,
    quadratic: Vec<Vec<Vec<f64>>>,
    noise: BTreeMap<Point, Value>,
}

impl PolyPlusTable {
    pub fn new(
        carrier: Carrier,
        constant: Value,
        linear: Vec<Vec<f64>>,
        quadratic: Vec<Vec<Vec<f64>>>,
        noise: BTreeMap<Point, Value>,
    ) -> Result<Self, FuncError> {
        if carrier.is_modular() {
            return Err(FuncError::Incompatible(
                "polynomial tables live on lattice carriers".into(),
            ));
        }
        let d = carrier.dim();
        let r = constant.dim();
        Value::checked(constant.0.clone())?;
        if linear.len() != r || linear.iter().any(|row| row.len() != d) {
            return Err(FuncError::Shape(format!("linear part must be {r}x{d}")));
        }
        if quadratic.len() != r || quadratic.iter().any(|a| a.len() != d || a.iter().any(|row| row.len() != d)) {
            return Err(FuncError::Shape(format!("quadratic part must be {r} matrices of {d}x{d}")));
        }
        for (i, a) in quadratic.iter().enumerate() {
            for p in 0..d {
                for q in 0..d {
                    if (a[p][q] - a[q][p]).abs() > 1e-12 * (1.0 + a[p][q].abs()) {
                        return Err(FuncError::AsymmetricQuadratic(i));
                    }
                }
            }
        }
        let all: Vec<f64> = linear
            .iter()
            .flatten()
            .chain(quadratic.iter().flatten().flatten())
            .copied()
            .collect();
        if all.iter().any(|x| !x.is_finite()) {
            return Err(FuncError::NonFinite(all));
        }
        for (p, v) in &noise {
            if !carrier.in_enumeration(p) {
                return Err(FuncError::NoiseOutsideWindow(p.clone()));
            }
            if v.dim() != r {
                return Err(FuncError::Shape("noise value dimension".into()));
            }
            Value::checked(v.0.clone())?;
        }
        let noise = noise.into_iter().filter(|(_, v)| !v.is_zero()).collect();
        Ok(PolyPlusTable {
            carrier,
            constant,
            linear,
            quadratic,
            noise,
        })
    }

    pub fn zero(carrier: Carrier, r: usize) -> Self {
        let d = carrier.dim();
        PolyPlusTable {
            carrier,
            constant: Value::zeros(r),
            linear: vec![vec![0.0; d]; r],
            quadratic: vec![vec![vec![0.0; d]; d]; r],
            noise: BTreeMap::new(),
        }
    }

    pub fn constant(&self) -> &Value {
        &self.constant
    }

    pub fn linear(&self) -> &[Vec<f64>] {
        &self.linear
    }

    pub fn quadratic(&self) -> &[Vec<Vec<f64>>] {
        &self.quadratic
    }

    pub fn noise(&self) -> &BTreeMap<Point, Value> {
        &self.noise
    }

    pub fn with_noise(mut self, noise: BTreeMap<Point, Value>) -> Result<Self, FuncError> {
        let (c, l, q) = (self.constant.clone(), std::mem::take(&mut self.linear), std::mem::take(&mut self.quadratic));
        PolyPlusTable::new(self.carrier, c, l, q, noise)
    }

    fn poly_eval(&self, x: &[i64]) -> Value {
        let xf: Vec<f64> = x.iter().map(|&v| v as f64).collect();
        Value(
            (0..self.constant.dim())
                .map(|i| {
                    let lin: f64 = self.linear[i].iter().zip(&xf).map(|(a, b)| a * b).sum();
                    let quad: f64 = self.quadratic[i]
                        .iter()
                        .zip(&xf)
                        .map(|(row, xp)| xp * row.iter().zip(&xf).map(|(a, b)| a * b).sum::<f64>())
                        .sum();
                    self.constant.0[i] + lin + quad
                })
                .collect(),
        )
    }

    /// Polynomial part of `x ↦ p(Mx)`.
    fn substituted(&self, m: &IntMatrix) -> (Vec<Vec<f64>>, Vec<Vec<Vec<f64>>>) {
        let d = self.carrier.dim();
        let mf = m.to_f64_rows();
        let linear = self
            .linear
            .iter()
            .map(|v| (0..d).map(|j| (0..d).map(|i| v[i] * mf[i][j]).sum()).collect())
            .collect();
        let quadratic = self
            .quadratic
            .iter()
            .map(|a| {
                (0..d)
                    .map(|p| {
                        (0..d)
                            .map(|q| {
                                let mut s = 0.0;
                                for i in 0..d {
                                    for j in 0..d {
                                        s += mf[i][p] * a[i][j] * mf[j][q];
                                    }
                                }
                                s
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        (linear, quadratic)
    }
}

/// A function from the carrier to `R^r`.
#[derive(Debug, Clone, PartialEq)]
pub enum FuncRep {
    Dense(DenseTable),
    Poly(PolyPlusTable),
}

impl From<DenseTable> for FuncRep {
    fn from(t: DenseTable) -> Self {
        FuncRep::Dense(t)
    }
}

impl From<PolyPlusTable> for FuncRep {
    fn from(t: PolyPlusTable) -> Self {
        FuncRep::Poly(t)
    }
}

impl FuncRep {
    pub fn carrier(&self) -> &Carrier {
        match self {
            FuncRep::Dense(t) => &t.carrier,
            FuncRep::Poly(t) => &t.carrier,
        }
    }

    pub fn r(&self) -> usize {
        match self {
            FuncRep::Dense(t) => t.r,
            FuncRep::Poly(t) => t.constant.dim(),
        }
    }

    /// The zero function with the same carrier and target dimension.
    pub fn zero_like(&self) -> FuncRep {
        match self {
            FuncRep::Dense(t) => FuncRep::Dense(DenseTable {
                carrier: t.carrier,
                r: t.r,
                values: vec![Value::zeros(t.r); t.values.len()],
            }),
            FuncRep::Poly(t) => FuncRep::Poly(PolyPlusTable::zero(t.carrier, t.constant.dim())),
        }
    }

    pub fn constant(carrier: Carrier, c: Value) -> FuncRep {
        match carrier {
            Carrier::Modular { .. } => FuncRep::Dense(DenseTable {
                carrier,
                r: c.dim(),
                values: vec![c; carrier.len()],
            }),
            Carrier::Lattice { .. } => {
                let mut p = PolyPlusTable::zero(carrier, c.dim());
                p.constant = c;
                FuncRep::Poly(p)
            }
        }
    }

    pub fn eval(&self, x: &[i64]) -> Result<Value, FuncError> {
        match self {
            FuncRep::Dense(t) => {
                if !t.carrier.is_representative(x) {
                    return Err(FuncError::OutOfCarrier {
                        point: x.to_vec(),
                        carrier: t.carrier,
                    });
                }
                let idx = t.carrier.index_of(x).expect("representative has an index");
                Ok(t.values[idx].clone())
            }
            FuncRep::Poly(t) => {
                if x.len() != t.carrier.dim() {
                    return Err(FuncError::OutOfCarrier {
                        point: x.to_vec(),
                        carrier: t.carrier,
                    });
                }
                let mut v = t.poly_eval(x);
                if let Some(n) = t.noise.get(x) {
                    v.add_assign(n);
                }
                Ok(v)
            }
        }
    }

    fn combine(&self, other: &FuncRep, a: f64, b: f64) -> Result<FuncRep, FuncError> {
        if self.carrier() != other.carrier() || self.r() != other.r() {
            return Err(FuncError::Incompatible(format!(
                "{} (r={}) vs {} (r={})",
                self.carrier(),
                self.r(),
                other.carrier(),
                other.r()
            )));
        }
        match (self, other) {
            (FuncRep::Dense(s), FuncRep::Dense(o)) => Ok(FuncRep::Dense(DenseTable {
                carrier: s.carrier,
                r: s.r,
                values: s
                    .values
                    .iter()
                    .zip(&o.values)
                    .map(|(x, y)| x.scale(a).add(&y.scale(b)))
                    .collect(),
            })),
            (FuncRep::Poly(s), FuncRep::Poly(o)) => {
                let lin = |x: &[f64], y: &[f64]| -> Vec<f64> {
                    x.iter().zip(y).map(|(p, q)| a * p + b * q).collect()
                };
                let mut noise: BTreeMap<Point, Value> =
                    s.noise.iter().map(|(p, v)| (p.clone(), v.scale(a))).collect();
                for (p, v) in &o.noise {
                    let e = noise.entry(p.clone()).or_insert_with(|| Value::zeros(s.constant.dim()));
                    e.add_assign(&v.scale(b));
                }
                noise.retain(|_, v| !v.is_zero());
                Ok(FuncRep::Poly(PolyPlusTable {
                    carrier: s.carrier,
                    constant: Value(lin(&s.constant.0, &o.constant.0)),
                    linear: s.linear.iter().zip(&o.linear).map(|(x, y)| lin(x, y)).collect(),
                    quadratic: s
                        .quadratic
                        .iter()
                        .zip(&o.quadratic)
                        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| lin(p, q)).collect())
                        .collect(),
                    noise,
                }))
            }
            _ => Err(FuncError::Incompatible("dense vs polynomial".into())),
        }
    }

    pub fn add(&self, other: &FuncRep) -> Result<FuncRep, FuncError> {
        self.combine(other, 1.0, 1.0)
    }

    pub fn sub(&self, other: &FuncRep) -> Result<FuncRep, FuncError> {
        self.combine(other, 1.0, -1.0)
    }

    /// `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &FuncRep, b: f64) -> Result<FuncRep, FuncError> {
        self.combine(other, a, b)
    }

    pub fn scale(&self, s: f64) -> FuncRep {
        self.combine(self, s, 0.0).expect("self-compatible")
    }

    /// `x ↦ self(x) - c`.
    pub fn sub_constant(&self, c: &Value) -> Result<FuncRep, FuncError> {
        self.sub(&FuncRep::constant(*self.carrier(), c.clone()))
    }

    /// `x ↦ scale · Σ_M self(Mx)` over the given integer matrices.
    ///
    /// Polynomial parts transform exactly; noise is re-tabulated over the
    /// window with reads outside the window taken as zero.
    pub fn substitution_average(&self, mats: &[IntMatrix], scale: f64) -> FuncRep {
        match self {
            FuncRep::Dense(t) => {
                let values = t
                    .carrier
                    .points()
                    .iter()
                    .map(|x| {
                        let mut acc = Value::zeros(t.r);
                        for m in mats {
                            let y = t.carrier.reduce(&m.apply(x));
                            acc.add_assign(&t.values[t.carrier.index_of(&y).expect("reduced")]);
                        }
                        acc.scale(scale)
                    })
                    .collect();
                FuncRep::Dense(DenseTable {
                    carrier: t.carrier,
                    r: t.r,
                    values,
                })
            }
            FuncRep::Poly(t) => {
                let r = t.constant.dim();
                let d = t.carrier.dim();
                let mut out = PolyPlusTable::zero(t.carrier, r);
                out.constant = t.constant.scale(scale * mats.len() as f64);
                for m in mats {
                    let (lin, quad) = t.substituted(m);
                    for i in 0..r {
                        for p in 0..d {
                            out.linear[i][p] += scale * lin[i][p];
                            for q in 0..d {
                                out.quadratic[i][p][q] += scale * quad[i][p][q];
                            }
                        }
                    }
                }
                if !t.noise.is_empty() {
                    for x in t.carrier.points() {
                        let mut acc = Value::zeros(r);
                        let mut hit = false;
                        for m in mats {
                            if let Some(v) = t.noise.get(&m.apply(&x)) {
                                acc.add_assign(v);
                                hit = true;
                            }
                        }
                        if hit {
                            let v = acc.scale(scale);
                            if !v.is_zero() {
                                out.noise.insert(x, v);
                            }
                        }
                    }
                }
                FuncRep::Poly(out)
            }
        }
    }

    /// True if the finite noise support is closed under the action of `group`.
    pub fn support_closed_under(&self, group: &GroupK) -> bool {
        match self {
            FuncRep::Dense(_) => true,
            FuncRep::Poly(t) => t.noise.keys().all(|p| {
                group
                    .elements()
                    .iter()
                    .all(|k| t.noise.contains_key(&group.act(k, p)))
            }),
        }
    }
}

/// `(1/|K|) Σ_k f(x + k·y)`.
pub fn avg_translate(f: &FuncRep, group: &GroupK, x: &[i64], y: &[i64]) -> Result<Value, FuncError> {
    let carrier = group.carrier();
    let mut acc = Value::zeros(f.r());
    for k in group.elements() {
        acc.add_assign(&f.eval(&carrier.add(x, &group.act(k, y)))?);
    }
    Ok(acc.scale(1.0 / group.order() as f64))
}

/// The K-average `x ↦ (1/|K|) Σ_k f(k·x)`.
pub fn symmetrize(f: &FuncRep, group: &GroupK) -> FuncRep {
    let mats: Vec<IntMatrix> = group.elements().iter().map(|k| k.matrix().clone()).collect();
    f.substitution_average(&mats, 1.0 / group.order() as f64)
}

/// `‖ avg_k f(x + k·y) − g(x) − h(y) ‖_β`.
pub fn residual_pexider(
    f: &FuncRep,
    g: &FuncRep,
    h: &FuncRep,
    group: &GroupK,
    x: &[i64],
    y: &[i64],
    beta: Beta,
) -> Result<f64, FuncError> {
    let v = avg_translate(f, group, x, y)?.sub(&g.eval(x)?).sub(&h.eval(y)?);
    Ok(beta_norm(&v, beta))
}

/// Defect of `avg_k q(x + k·y) = q(x) + q(y)`.
pub fn residual_quadratic(q: &FuncRep, group: &GroupK, x: &[i64], y: &[i64], beta: Beta) -> Result<f64, FuncError> {
    residual_pexider(q, q, q, group, x, y, beta)
}

/// Defect of `avg_k j(x + k·y) = j(x)`.
pub fn residual_jensen(j: &FuncRep, group: &GroupK, x: &[i64], y: &[i64], beta: Beta) -> Result<f64, FuncError> {
    let v = avg_translate(j, group, x, y)?.sub(&j.eval(x)?);
    Ok(beta_norm(&v, beta))
}

/// `‖ (1/|K|) Σ_k j(k·x) ‖_β`, the defect of the odd-part side condition.
pub fn side_condition_defect(j: &FuncRep, group: &GroupK, x: &[i64], beta: Beta) -> Result<f64, FuncError> {
    let mut acc = Value::zeros(j.r());
    for k in group.elements() {
        acc.add_assign(&j.eval(&group.act(k, x))?);
    }
    Ok(beta_norm(&acc.scale(1.0 / group.order() as f64), beta))
}

/// Result of a weighted supremum scan.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedSup {
    pub value: f64,
    pub worst: Option<Point>,
}

/// `sup_x ‖g(x) − h(x)‖_β / w(x)` over the enumeration, with `0/0 = 0` and `c/0 = ∞`.
pub fn sup_weighted_distance(
    g: &FuncRep,
    h: &FuncRep,
    weight: &dyn Fn(&[i64]) -> f64,
    beta: Beta,
) -> Result<f64, FuncError> {
    Ok(sup_weighted_distance_detail(g, h, weight, beta)?.value)
}

pub fn sup_weighted_distance_detail(
    g: &FuncRep,
    h: &FuncRep,
    weight: &dyn Fn(&[i64]) -> f64,
    beta: Beta,
) -> Result<WeightedSup, FuncError> {
    let mut best = WeightedSup {
        value: 0.0,
        worst: None,
    };
    for x in g.carrier().points() {
        let diff = beta_norm(&g.eval(&x)?.sub(&h.eval(&x)?), beta);
        let ratio = weighted_ratio(diff, weight(&x));
        if ratio > best.value {
            best.value = ratio;
            best.worst = Some(x);
        }
    }
    Ok(best)
}

/// `num / den` under the infimum convention: `0/0 = 0`, positive`/0 = ∞`.
pub fn weighted_ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else if den <= 0.0 {
        f64::INFINITY
    } else {
        num / den
    }
}

/// `sup_x ‖g(x) − h(x)‖_β` over the enumeration.
pub fn sup_beta_distance(g: &FuncRep, h: &FuncRep, beta: Beta) -> Result<f64, FuncError> {
    sup_weighted_distance(g, h, &|_| 1.0, beta)
}

/// JSON shape of a function: a dense array in enumeration order, or polynomial coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FuncJson {
    Dense(Vec<Vec<f64>>),
    Poly {
        constant: Vec<f64>,
        linear: Vec<Vec<f64>>,
        quadratic: Vec<Vec<Vec<f64>>>,
        #[serde(default)]
        noise: Vec<NoiseEntry>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseEntry {
    pub point: Point,
    pub value: Vec<f64>,
}

impl FuncJson {
    pub fn into_func(self, carrier: Carrier) -> Result<FuncRep, FuncError> {
        match self {
            FuncJson::Dense(rows) => {
                let values = rows.into_iter().map(Value::checked).collect::<Result<_, _>>()?;
                Ok(DenseTable::new(carrier, values)?.into())
            }
            FuncJson::Poly {
                constant,
                linear,
                quadratic,
                noise,
            } => {
                let noise = noise
                    .into_iter()
                    .map(|e| Ok((e.point, Value::checked(e.value)?)))
                    .collect::<Result<BTreeMap<_, _>, FuncError>>()?;
                Ok(PolyPlusTable::new(carrier, Value::checked(constant)?, linear, quadratic, noise)?.into())
            }
        }
    }

    pub fn from_func(f: &FuncRep) -> FuncJson {
        match f {
            FuncRep::Dense(t) => FuncJson::Dense(t.values.iter().map(|v| v.0.clone()).collect()),
            FuncRep::Poly(t) => FuncJson::Poly {
                constant: t.constant.0.clone(),
                linear: t.linear.clone(),
                quadratic: t.quadratic.clone(),
                noise: t
                    .noise
                    .iter()
                    .map(|(p, v)| NoiseEntry {
                        point: p.clone(),
                        value: v.0.clone(),
                    })
                    .collect(),
            },
        }
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use crate::domain::{build_group, generators};

    pub(crate) fn lattice1(radius: i64) -> Carrier {
        Carrier::lattice(1, radius).unwrap()
    }

    /// Scalar polynomial `a x² + b x + c` on a 1-d lattice.
    pub(crate) fn quad1(carrier: Carrier, a: f64, b: f64, c: f64) -> FuncRep {
        PolyPlusTable::new(
            carrier,
            Value(vec![c]),
            vec![vec![b]],
            vec![vec![vec![a]]],
            BTreeMap::new(),
        )
        .unwrap()
        .into()
    }

    fn b(x: f64) -> Beta {
        Beta::new(x).unwrap()
    }

    fn z5() -> Carrier {
        Carrier::modular(5, 1).unwrap()
    }

    fn indicator(carrier: Carrier, at: i64) -> FuncRep {
        DenseTable::from_fn(carrier, |p| Value(vec![if p[0] == at { 1.0 } else { 0.0 }]))
            .unwrap()
            .into()
    }

    #[test]
    fn beta_norm_examples() {
        assert_eq!(beta_norm(&Value(vec![3.0, -4.0]), b(1.0)), 7.0);
        assert_eq!(beta_norm(&Value(vec![4.0]), b(0.5)), 2.0);
        let v = Value(vec![0.3, -1.7, 2.2]);
        let beta = b(0.6);
        let lhs = beta_norm(&v.scale(2.0), beta);
        assert!((lhs - 2f64.powf(0.6) * beta_norm(&v, beta)).abs() < 1e-12);
        assert!(Beta::new(0.0).is_err());
        assert!(Beta::new(1.5).is_err());
    }

    #[test]
    fn eval_examples() {
        let l = lattice1(5);
        assert_eq!(quad1(l, 2.0, 3.0, 1.0).eval(&[1]).unwrap(), Value(vec![6.0]));
        let l10 = lattice1(10);
        let noise = BTreeMap::from([(vec![2], Value(vec![0.5]))]);
        let n: FuncRep = PolyPlusTable::zero(l10, 1).with_noise(noise).unwrap().into();
        assert_eq!(n.eval(&[7]).unwrap(), Value(vec![0.0]));
        assert_eq!(n.eval(&[2]).unwrap(), Value(vec![0.5]));
        assert_eq!(indicator(z5(), 0).eval(&[0]).unwrap(), Value(vec![1.0]));
        assert!(matches!(
            indicator(z5(), 0).eval(&[4]),
            Err(FuncError::OutOfCarrier { .. })
        ));
    }

    #[test]
    fn avg_translate_examples() {
        let l = lattice1(5);
        let k = build_group(&[generators::negation(1)], &l).unwrap();
        let c = FuncRep::constant(l, Value(vec![2.5, -1.0]));
        assert_eq!(avg_translate(&c, &k, &[3], &[-2]).unwrap(), Value(vec![2.5, -1.0]));
        let sq = quad1(l, 1.0, 0.0, 0.0);
        assert_eq!(avg_translate(&sq, &k, &[1], &[2]).unwrap(), Value(vec![5.0]));
        let kz = build_group(&[generators::negation(1)], &z5()).unwrap();
        let ind = indicator(z5(), 0);
        assert_eq!(avg_translate(&ind, &kz, &[1], &[1]).unwrap(), Value(vec![0.5]));
    }

    #[test]
    fn symmetrize_examples() {
        let l = lattice1(5);
        let k = build_group(&[generators::negation(1)], &l).unwrap();
        let f = quad1(l, 2.0, 3.0, 1.0);
        assert_eq!(symmetrize(&f, &k), quad1(l, 2.0, 0.0, 1.0));
        assert_eq!(symmetrize(&f, &GroupK::trivial(l)), f);

        let kz = build_group(&[generators::negation(1)], &z5()).unwrap();
        let s = symmetrize(&indicator(z5(), 1), &kz);
        for p in z5().points() {
            let want = if p[0] == 1 || p[0] == -1 { 0.5 } else { 0.0 };
            assert_eq!(s.eval(&p).unwrap(), Value(vec![want]));
        }
    }

    #[test]
    fn residual_examples() {
        let l = lattice1(6);
        let k = build_group(&[generators::negation(1)], &l).unwrap();
        let beta = b(1.0);
        let q = quad1(l, 2.0, 0.0, 0.0);
        let j = quad1(l, 0.0, 3.0, 0.0);
        let one = quad1(l, 0.0, 0.0, 1.0);
        for x in -3..=3 {
            for y in -3..=3 {
                assert_eq!(residual_quadratic(&q, &k, &[x], &[y], beta).unwrap(), 0.0);
                assert_eq!(residual_jensen(&j, &k, &[x], &[y], beta).unwrap(), 0.0);
                assert_eq!(residual_jensen(&one, &k, &[x], &[y], beta).unwrap(), 0.0);
            }
            assert_eq!(side_condition_defect(&one, &k, &[x], beta).unwrap(), 1.0);
            assert_eq!(side_condition_defect(&j, &k, &[x], beta).unwrap(), 0.0);
        }
        // g shifted by a constant
        let f = quad1(l, 2.0, 3.0, 1.0);
        let g = quad1(l, 2.0, 3.0, 0.5);
        let h = quad1(l, 2.0, 0.0, 0.5);
        let g_shift = g.sub_constant(&Value(vec![-0.25])).unwrap();
        let half = b(0.5);
        for (x, y) in [(0, 0), (2, -3), (5, 1)] {
            assert_eq!(residual_pexider(&f, &g, &h, &k, &[x], &[y], half).unwrap(), 0.0);
            let r = residual_pexider(&f, &g_shift, &h, &k, &[x], &[y], half).unwrap();
            assert!((r - 0.25f64.sqrt()).abs() < 1e-15);
        }
    }

    #[test]
    fn weighted_distance_examples() {
        let l = lattice1(4);
        let beta = b(1.0);
        let f = quad1(l, 1.0, -2.0, 0.5);
        assert_eq!(sup_weighted_distance(&f, &f, &|_| 0.0, beta).unwrap(), 0.0);
        let theta = 0.01;
        let g = f.sub_constant(&Value(vec![3.0 * theta])).unwrap();
        let d = sup_weighted_distance(&f, &g, &|_| 3.0 * theta, beta).unwrap();
        assert!((d - 1.0).abs() < 1e-12);
        let w = |x: &[i64]| if x[0] == 0 { 0.0 } else { 1.0 };
        assert_eq!(sup_weighted_distance(&f, &g, &w, beta).unwrap(), f64::INFINITY);
    }

    #[test]
    fn substitution_transforms_coefficients_exactly() {
        let l = Carrier::lattice(2, 3).unwrap();
        let p: FuncRep = PolyPlusTable::new(
            l,
            Value(vec![1.0]),
            vec![vec![2.0, -1.0]],
            vec![vec![vec![1.0, 0.5], vec![0.5, -2.0]]],
            BTreeMap::new(),
        )
        .unwrap()
        .into();
        let m = IntMatrix::new(2, vec![1, 2, -1, 0]).unwrap();
        let s = p.substitution_average(&[m.clone()], 1.0);
        for x in l.points() {
            let direct = p.eval(&m.apply(&x)).unwrap();
            assert!((s.eval(&x).unwrap().0[0] - direct.0[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn json_roundtrip() {
        let l = lattice1(5);
        let noise = BTreeMap::from([(vec![2], Value(vec![0.5])), (vec![-2], Value(vec![-0.25]))]);
        let f: FuncRep = PolyPlusTable::zero(l, 1).with_noise(noise).unwrap().into();
        let f = f.add(&quad1(l, 2.0, 3.0, 1.0)).unwrap();
        let text = serde_json::to_string(&FuncJson::from_func(&f)).unwrap();
        let back: FuncJson = serde_json::from_str(&text).unwrap();
        assert_eq!(back.into_func(l).unwrap(), f);
        let d = indicator(z5(), 2);
        let text = serde_json::to_string(&FuncJson::from_func(&d)).unwrap();
        assert_eq!(text, "[[0.0],[0.0],[1.0],[0.0],[0.0]]");
    }

    #[test]
    fn noise_outside_window_is_rejected() {
        let l = lattice1(3);
        let noise = BTreeMap::from([(vec![4], Value(vec![0.5]))]);
        assert!(matches!(
            PolyPlusTable::zero(l, 1).with_noise(noise),
            Err(FuncError::NoiseOutsideWindow(_))
        ));
    }
}
