//! Ground truth: solution spaces of the quadratic and Jensen equations by
//! brute-force nullspace computation, exact triple construction, and seeded
//! perturbation with a constructive control certificate.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::Serialize;
use thiserror::Error;

use crate::control::{eval_control, ControlError, ControlFn};
use crate::domain::{Carrier, GroupK, IntMatrix, Point};
use crate::funcspace::{
    residual_jensen, residual_pexider, residual_quadratic, side_condition_defect, Beta, DenseTable, FuncError,
    FuncRep, PolyPlusTable, Value,
};
use crate::scan;
use crate::stabilizer::PexiderTriple;

/// Pivot tolerance for the rank-revealing elimination.
pub const PIVOT_TOL: f64 = 1e-9;
/// Largest law residual accepted for basis elements and exact triples.
pub const LAW_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("{which} violates its law (max residual {residual})")]
    LawViolation { which: &'static str, residual: f64 },
    #[error("a power certificate needs zero residual where the control vanishes; residual {residual} at {pair:?}")]
    CertificateImpossible { pair: (Point, Point), residual: f64 },
    #[error("noise amplitude must be a finite nonnegative number, got {0}")]
    InvalidAmplitude(f64),
    #[error(transparent)]
    Func(#[from] FuncError),
    #[error(transparent)]
    Control(#[from] ControlError),
}

/// Basis of the null space of `rows` (each of length `ncols`) by Gauss–Jordan
/// elimination with partial pivoting; pivots below `tol·max(1, max|a_ij|)` count as zero.
pub fn nullspace(rows: &[Vec<f64>], ncols: usize, tol: f64) -> Vec<Vec<f64>> {
    let mut a: Vec<Vec<f64>> = rows.to_vec();
    let scale = a.iter().flatten().fold(1.0f64, |m, v| m.max(v.abs()));
    let tol = tol * scale;
    let mut pivots = Vec::new();
    let mut r = 0;
    for c in 0..ncols {
        if r == a.len() {
            break;
        }
        let (p, best) = (r..a.len())
            .map(|i| (i, a[i][c].abs()))
            .fold((r, -1.0), |acc, cur| if cur.1 > acc.1 { cur } else { acc });
        if best < tol {
            continue;
        }
        a.swap(r, p);
        let piv = a[r][c];
        for v in a[r].iter_mut() {
            *v /= piv;
        }
        let pivot_row = a[r].clone();
        for (i, row) in a.iter_mut().enumerate() {
            if i == r || row[c] == 0.0 {
                continue;
            }
            let factor = row[c];
            for (v, pv) in row.iter_mut().zip(&pivot_row) {
                *v -= factor * pv;
            }
        }
        pivots.push(c);
        r += 1;
    }
    (0..ncols)
        .filter(|c| !pivots.contains(c))
        .map(|free| {
            let mut v = vec![0.0; ncols];
            v[free] = 1.0;
            for (i, &pc) in pivots.iter().enumerate() {
                v[pc] = -a[i][free];
            }
            v
        })
        .collect()
}

/// A spanning set for a solution space, with its verification residuals.
#[derive(Debug, Clone)]
pub struct SolutionBasis {
    pub elements: Vec<FuncRep>,
    /// Largest `|A v|` over basis vectors of the constraint system.
    pub system_residual: f64,
    /// Largest law residual of any basis element over the enumerated pairs.
    pub law_residual: f64,
}

impl SolutionBasis {
    pub fn dimension(&self) -> usize {
        self.elements.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Law {
    Quadratic,
    Jensen { side_condition: bool },
}

pub fn quadratic_solution_space(group: &GroupK) -> Result<SolutionBasis, OracleError> {
    solution_space(group, Law::Quadratic, None)
}

pub fn jensen_solution_space(group: &GroupK, with_side_condition: bool) -> Result<SolutionBasis, OracleError> {
    solution_space(
        group,
        Law::Jensen {
            side_condition: with_side_condition,
        },
        None,
    )
}

/// Same as [`quadratic_solution_space`] / [`jensen_solution_space`] on a modular
/// carrier, but with unknowns ordered by `perm` (a permutation of enumeration indices).
pub fn modular_dimension_permuted(group: &GroupK, quadratic: bool, side_condition: bool, perm: &[usize]) -> usize {
    let law = if quadratic {
        Law::Quadratic
    } else {
        Law::Jensen { side_condition }
    };
    let (rows, n) = modular_system(group, law, Some(perm));
    nullspace(&rows, n, PIVOT_TOL).len()
}

fn solution_space(group: &GroupK, law: Law, perm: Option<&[usize]>) -> Result<SolutionBasis, OracleError> {
    let carrier = *group.carrier();
    let (rows, n) = match carrier {
        Carrier::Modular { .. } => modular_system(group, law, perm),
        Carrier::Lattice { .. } => polynomial_system(group, law),
    };
    let basis = nullspace(&rows, n, PIVOT_TOL);
    let system_residual = basis
        .iter()
        .flat_map(|v| rows.iter().map(move |row| row.iter().zip(v).map(|(a, b)| a * b).sum::<f64>().abs()))
        .fold(0.0, f64::max);
    let elements = basis
        .iter()
        .map(|v| match carrier {
            Carrier::Modular { .. } => {
                DenseTable::new(carrier, v.iter().map(|&x| Value(vec![x])).collect()).map(FuncRep::from)
            }
            Carrier::Lattice { .. } => poly_from_params(carrier, v).map(FuncRep::from),
        })
        .collect::<Result<Vec<_>, _>>()?;
    let beta = Beta::new(1.0).expect("valid");
    let mut law_residual = 0.0f64;
    for e in &elements {
        law_residual = law_residual.max(match law {
            Law::Quadratic => max_quadratic_residual(e, group, beta)?,
            Law::Jensen { side_condition } => {
                let r = max_jensen_residual(e, group, beta)?;
                if side_condition {
                    r.max(max_side_defect(e, group, beta)?)
                } else {
                    r
                }
            }
        });
    }
    Ok(SolutionBasis {
        elements,
        system_residual,
        law_residual,
    })
}

fn modular_system(group: &GroupK, law: Law, perm: Option<&[usize]>) -> (Vec<Vec<f64>>, usize) {
    let c = group.carrier();
    let pts = c.points();
    let n = pts.len();
    let col = |p: &Point| {
        let i = c.index_of(p).expect("representative");
        perm.map_or(i, |pm| pm[i])
    };
    let kk = group.order() as f64;
    let mut rows = Vec::new();
    for x in &pts {
        for y in &pts {
            let mut row = vec![0.0; n];
            for k in group.elements() {
                row[col(&c.add(x, &group.act(k, y)))] += 1.0;
            }
            row[col(x)] -= kk;
            if law == Law::Quadratic {
                row[col(y)] -= kk;
            }
            rows.push(row);
        }
    }
    if law == (Law::Jensen { side_condition: true }) {
        for x in &pts {
            let mut row = vec![0.0; n];
            for k in group.elements() {
                row[col(&group.act(k, x))] += 1.0;
            }
            rows.push(row);
        }
    }
    (rows, n)
}

/// A scalar polynomial of degree ≤ 2 in `n` variables.
#[derive(Debug, Clone)]
struct QuadPoly {
    c: f64,
    lin: Vec<f64>,
    quad: Vec<Vec<f64>>,
}

impl QuadPoly {
    fn zero(n: usize) -> Self {
        QuadPoly {
            c: 0.0,
            lin: vec![0.0; n],
            quad: vec![vec![0.0; n]; n],
        }
    }

    /// `z ↦ c + v·(Mz) + (Mz)ᵀA(Mz)` for a `d×n` matrix `m`.
    fn substitute(c: f64, v: &[f64], a: &[Vec<f64>], m: &[Vec<f64>]) -> Self {
        let d = m.len();
        let n = m[0].len();
        let lin = (0..n).map(|j| (0..d).map(|i| v[i] * m[i][j]).sum()).collect();
        let quad = (0..n)
            .map(|p| {
                (0..n)
                    .map(|q| {
                        let mut s = 0.0;
                        for i in 0..d {
                            for j in 0..d {
                                s += m[i][p] * a[i][j] * m[j][q];
                            }
                        }
                        s
                    })
                    .collect()
            })
            .collect();
        QuadPoly { c, lin, quad }
    }

    fn axpy(&mut self, s: f64, other: &QuadPoly) {
        self.c += s * other.c;
        for (a, b) in self.lin.iter_mut().zip(&other.lin) {
            *a += s * b;
        }
        for (ra, rb) in self.quad.iter_mut().zip(&other.quad) {
            for (a, b) in ra.iter_mut().zip(rb) {
                *a += s * b;
            }
        }
    }

    /// Monomial coefficients: constant, linear, then `z_p z_q` for `p ≤ q`.
    fn monomials(&self) -> Vec<f64> {
        let n = self.lin.len();
        let mut out = vec![self.c];
        out.extend(&self.lin);
        for p in 0..n {
            for q in p..n {
                out.push(if p == q {
                    self.quad[p][p]
                } else {
                    self.quad[p][q] + self.quad[q][p]
                });
            }
        }
        out
    }
}

fn param_count(d: usize) -> usize {
    1 + d + d * (d + 1) / 2
}

/// Unpacks `[c, v_1..v_d, a_pq (p ≤ q)]` into constant, linear and symmetric quadratic parts.
fn unpack_params(d: usize, v: &[f64]) -> (f64, Vec<f64>, Vec<Vec<f64>>) {
    let mut a = vec![vec![0.0; d]; d];
    let mut idx = 1 + d;
    for p in 0..d {
        for q in p..d {
            a[p][q] = v[idx];
            a[q][p] = v[idx];
            idx += 1;
        }
    }
    (v[0], v[1..=d].to_vec(), a)
}

fn poly_from_params(carrier: Carrier, v: &[f64]) -> Result<PolyPlusTable, FuncError> {
    let (c, lin, a) = unpack_params(carrier.dim(), v);
    PolyPlusTable::new(carrier, Value(vec![c]), vec![lin], vec![a], BTreeMap::new())
}

fn block(d: usize, left: &IntMatrix, right: Option<&IntMatrix>) -> Vec<Vec<f64>> {
    let l = left.to_f64_rows();
    let r = right.map(IntMatrix::to_f64_rows);
    (0..d)
        .map(|i| {
            let mut row = l[i].clone();
            match &r {
                Some(r) => row.extend(&r[i]),
                None => row.extend(vec![0.0; d]),
            }
            row
        })
        .collect()
}

fn polynomial_system(group: &GroupK, law: Law) -> (Vec<Vec<f64>>, usize) {
    let d = group.carrier().dim();
    let n = param_count(d);
    let kk = group.order() as f64;
    let id = IntMatrix::identity(d);
    let zero = IntMatrix::zero(d);
    let x_only = block(d, &id, None);
    let y_only = block(d, &zero, Some(&id));

    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(n);
    for u in 0..n {
        let mut e = vec![0.0; n];
        e[u] = 1.0;
        let (c, v, a) = unpack_params(d, &e);
        let mut poly = QuadPoly::zero(2 * d);
        for k in group.elements() {
            poly.axpy(1.0, &QuadPoly::substitute(c, &v, &a, &block(d, &id, Some(k.matrix()))));
        }
        poly.axpy(-kk, &QuadPoly::substitute(c, &v, &a, &x_only));
        if law == Law::Quadratic {
            poly.axpy(-kk, &QuadPoly::substitute(c, &v, &a, &y_only));
        }
        let mut col = poly.monomials();
        if law == (Law::Jensen { side_condition: true }) {
            let mut side = QuadPoly::zero(d);
            for k in group.elements() {
                side.axpy(1.0, &QuadPoly::substitute(c, &v, &a, &k.matrix().to_f64_rows()));
            }
            col.extend(side.monomials());
        }
        columns.push(col);
    }
    let m = columns[0].len();
    let rows = (0..m).map(|i| columns.iter().map(|col| col[i]).collect()).collect();
    (rows, n)
}

pub fn max_quadratic_residual(q: &FuncRep, group: &GroupK, beta: Beta) -> Result<f64, FuncError> {
    let pts = group.carrier().points();
    Ok(scan::max_over_pairs(&pts, |x, y| residual_quadratic(q, group, x, y, beta))?.map_or(0.0, |b| b.0))
}

pub fn max_jensen_residual(j: &FuncRep, group: &GroupK, beta: Beta) -> Result<f64, FuncError> {
    let pts = group.carrier().points();
    Ok(scan::max_over_pairs(&pts, |x, y| residual_jensen(j, group, x, y, beta))?.map_or(0.0, |b| b.0))
}

pub fn max_side_defect(j: &FuncRep, group: &GroupK, beta: Beta) -> Result<f64, FuncError> {
    let pts = group.carrier().points();
    Ok(scan::max_over_points(&pts, |x| side_condition_defect(j, group, x, beta))?.map_or(0.0, |b| b.0))
}

pub fn max_pexider_residual(triple: &PexiderTriple, group: &GroupK, beta: Beta) -> Result<f64, FuncError> {
    let pts = group.carrier().points();
    Ok(scan::max_over_pairs(&pts, |x, y| {
        residual_pexider(&triple.f, &triple.g, &triple.h, group, x, y, beta)
    })?
    .map_or(0.0, |b| b.0))
}

/// `f = q + j + a + b`, `g = q + j + a`, `h = q + b`.
pub fn make_exact_triple(
    q: &FuncRep,
    j: &FuncRep,
    a: &Value,
    b: &Value,
    group: &GroupK,
) -> Result<PexiderTriple, OracleError> {
    let beta = Beta::new(1.0).expect("valid");
    let scale = |f: &FuncRep| -> Result<f64, FuncError> {
        let mut m = 1.0f64;
        for x in f.carrier().points() {
            m = m.max(f.eval(&x)?.0.iter().fold(0.0, |acc, v| acc.max(v.abs())));
        }
        Ok(m)
    };
    let rq = max_quadratic_residual(q, group, beta)?;
    if rq > LAW_TOL * scale(q)? {
        return Err(OracleError::LawViolation {
            which: "quadratic component",
            residual: rq,
        });
    }
    let rj = max_jensen_residual(j, group, beta)?.max(max_side_defect(j, group, beta)?);
    if rj > LAW_TOL * scale(j)? {
        return Err(OracleError::LawViolation {
            which: "Jensen component",
            residual: rj,
        });
    }
    let qj = q.add(j)?;
    let triple = PexiderTriple::new(
        qj.sub_constant(&a.scale(-1.0))?.sub_constant(&b.scale(-1.0))?,
        qj.sub_constant(&a.scale(-1.0))?,
        q.sub_constant(&b.scale(-1.0))?,
    )?;
    let r = max_pexider_residual(&triple, group, beta)?;
    if r > LAW_TOL * scale(&triple.f)? {
        return Err(OracleError::LawViolation {
            which: "composed triple",
            residual: r,
        });
    }
    Ok(triple)
}

/// Which of `f`, `g`, `h` receive noise.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
pub struct NoiseTargets {
    #[serde(default)]
    pub f: bool,
    #[serde(default)]
    pub g: bool,
    #[serde(default)]
    pub h: bool,
}

impl NoiseTargets {
    pub const F_ONLY: NoiseTargets = NoiseTargets {
        f: true,
        g: false,
        h: false,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum CertificateShape {
    Constant,
    Power { p: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbSpec {
    pub delta: f64,
    pub seed: u64,
    pub support_radius: f64,
    pub targets: NoiseTargets,
    /// Keep the noise zero at the origin.
    pub exclude_origin: bool,
    pub shape: CertificateShape,
}

/// Smallest control of the requested shape under which the hypothesis holds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Certificate {
    pub theta: f64,
    /// `None` when θ* = 0: no positive control is certified.
    pub control: Option<ControlFn>,
    pub degenerate: bool,
}

/// Points of the enumeration with norm ≤ radius whose whole K-orbit stays in that set.
pub fn noise_support(group: &GroupK, radius: f64, exclude_origin: bool) -> Vec<Point> {
    let c = group.carrier();
    let inside = |p: &[i64]| c.in_enumeration(p) && c.point_norm(p) <= radius && !(exclude_origin && c.point_norm(p) == 0.0);
    c.points()
        .into_iter()
        .filter(|p| inside(p) && group.elements().iter().all(|k| inside(&group.act(k, p))))
        .collect()
}

/// Adds seeded uniform noise in `[−δ, δ]^r` on the support and certifies a control.
pub fn perturb(
    triple: &PexiderTriple,
    spec: &PerturbSpec,
    group: &GroupK,
    beta: Beta,
) -> Result<(PexiderTriple, Certificate), OracleError> {
    if !(spec.delta >= 0.0 && spec.delta.is_finite()) {
        return Err(OracleError::InvalidAmplitude(spec.delta));
    }
    let carrier = *group.carrier();
    let support = noise_support(group, spec.support_radius, spec.exclude_origin);
    let r = triple.r();
    let mut rng = SplitMix64::seed_from_u64(spec.seed);
    let mut sample = |func: &FuncRep| -> Result<FuncRep, FuncError> {
        let noise: BTreeMap<Point, Value> = support
            .iter()
            .map(|p| {
                let v = (0..r)
                    .map(|_| if spec.delta > 0.0 { rng.random_range(-spec.delta..=spec.delta) } else { 0.0 })
                    .collect();
                (p.clone(), Value(v))
            })
            .collect();
        let table: FuncRep = match carrier {
            Carrier::Modular { .. } => DenseTable::from_fn(carrier, |x| {
                noise.get(x).cloned().unwrap_or_else(|| Value::zeros(r))
            })?
            .into(),
            Carrier::Lattice { .. } => PolyPlusTable::zero(carrier, r).with_noise(noise)?.into(),
        };
        func.add(&table)
    };
    let mut out = triple.clone();
    if spec.targets.f {
        out.f = sample(&triple.f)?;
    }
    if spec.targets.g {
        out.g = sample(&triple.g)?;
    }
    if spec.targets.h {
        out.h = sample(&triple.h)?;
    }

    let pts = carrier.points();
    let theta = match spec.shape {
        CertificateShape::Constant => max_pexider_residual(&out, group, beta)?,
        CertificateShape::Power { p } => {
            let shape = ControlFn::Power { theta: 1.0, p };
            let best = scan::max_over_pairs(&pts, |x, y| -> Result<f64, OracleError> {
                let res = residual_pexider(&out.f, &out.g, &out.h, group, x, y, beta)?;
                let s = eval_control(&shape, &carrier, x, y);
                if s == 0.0 {
                    if res > 0.0 {
                        return Err(OracleError::CertificateImpossible {
                            pair: (x.clone(), y.clone()),
                            residual: res,
                        });
                    }
                    return Ok(0.0);
                }
                Ok(res / s)
            })?;
            best.map_or(0.0, |b| b.0)
        }
    };
    let control = if theta > 0.0 {
        Some(match spec.shape {
            CertificateShape::Constant => ControlFn::constant(theta)?,
            CertificateShape::Power { p } => ControlFn::power(theta, p)?,
        })
    } else {
        None
    };
    Ok((
        out,
        Certificate {
            theta,
            control,
            degenerate: theta == 0.0,
        },
    ))
}
