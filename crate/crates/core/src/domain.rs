//! Carrier groups and finite abelian automorphism groups acting on them.
//!
//! The carrier is either the finite group `Z_m^d` (points stored as centered
//! representatives in `(-m/2, m/2]`) or the integer lattice `Z^d` observed
//! through the cube window `[-R, R]^d`. Automorphisms are integer matrices;
//! all group actions are exact integer arithmetic.

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A point of the carrier: an integer `d`-tuple.
pub type Point = Vec<i64>;

/// Default cap on `|K|` during closure construction.
pub const DEFAULT_CLOSURE_CAP: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DomainError {
    #[error("invalid carrier: {0}")]
    InvalidCarrier(String),
    #[error("matrix has {got} entries, expected {expected} for dimension {dim}")]
    DimensionMismatch {
        dim: usize,
        expected: usize,
        got: usize,
    },
    #[error("generator {index} is not invertible on {carrier} (determinant {det})")]
    NonInvertible {
        index: usize,
        det: i128,
        carrier: Carrier,
    },
    #[error("generators {a} and {b} do not commute")]
    NonAbelian { a: usize, b: usize },
    #[error("closure exceeded the cap of {cap} elements")]
    ClosureOverflow { cap: usize },
}

/// The concrete abelian group standing in for the abstract domain space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Carrier {
    Modular { modulus: i64, dim: usize },
    Lattice { dim: usize, radius: i64 },
}

impl fmt::Display for Carrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Carrier::Modular { modulus, dim } => write!(f, "Z_{modulus}^{dim}"),
            Carrier::Lattice { dim, radius } => write!(f, "Z^{dim} (window radius {radius})"),
        }
    }
}

impl Carrier {
    pub fn modular(modulus: i64, dim: usize) -> Result<Self, DomainError> {
        let c = Carrier::Modular { modulus, dim };
        c.validate()?;
        Ok(c)
    }

    pub fn lattice(dim: usize, radius: i64) -> Result<Self, DomainError> {
        let c = Carrier::Lattice { dim, radius };
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<(), DomainError> {
        match *self {
            Carrier::Modular { modulus, dim } => {
                if modulus < 2 {
                    return Err(DomainError::InvalidCarrier(format!("modulus {modulus} < 2")));
                }
                if dim < 1 {
                    return Err(DomainError::InvalidCarrier("dimension must be >= 1".into()));
                }
                let size = (modulus as u128).checked_pow(dim as u32);
                if size.is_none_or(|s| s > 1 << 20) {
                    return Err(DomainError::InvalidCarrier(format!(
                        "Z_{modulus}^{dim} is too large to enumerate"
                    )));
                }
            }
            Carrier::Lattice { dim, radius } => {
                if dim < 1 {
                    return Err(DomainError::InvalidCarrier("dimension must be >= 1".into()));
                }
                if radius < 1 {
                    return Err(DomainError::InvalidCarrier(format!("window radius {radius} < 1")));
                }
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        match *self {
            Carrier::Modular { dim, .. } | Carrier::Lattice { dim, .. } => dim,
        }
    }

    pub fn is_modular(&self) -> bool {
        matches!(self, Carrier::Modular { .. })
    }

    pub fn zero(&self) -> Point {
        vec![0; self.dim()]
    }

    /// Reduces an arbitrary integer tuple to the carrier's representative.
    pub fn reduce(&self, x: &[i64]) -> Point {
        match *self {
            Carrier::Modular { modulus, .. } => x.iter().map(|&v| center(v, modulus)).collect(),
            Carrier::Lattice { .. } => x.to_vec(),
        }
    }

    /// True if `x` is a stored representative of the carrier.
    pub fn is_representative(&self, x: &[i64]) -> bool {
        x.len() == self.dim()
            && match *self {
                Carrier::Modular { modulus, .. } => x.iter().all(|&v| center(v, modulus) == v),
                Carrier::Lattice { .. } => true,
            }
    }

    /// True if `x` belongs to the enumerated set (whole modular carrier, or lattice window).
    pub fn in_enumeration(&self, x: &[i64]) -> bool {
        match *self {
            Carrier::Modular { .. } => self.is_representative(x),
            Carrier::Lattice { dim, radius } => {
                x.len() == dim && x.iter().all(|v| v.abs() <= radius)
            }
        }
    }

    /// Number of enumerated points.
    pub fn len(&self) -> usize {
        match *self {
            Carrier::Modular { modulus, dim } => (modulus as usize).pow(dim as u32),
            Carrier::Lattice { dim, radius } => (2 * radius as usize + 1).pow(dim as u32),
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Enumeration index of a point, row-major with the first coordinate most significant.
    ///
    /// Modular digits are residues in `[0, m)`; lattice digits are `x_i + R`.
    pub fn index_of(&self, x: &[i64]) -> Option<usize> {
        if x.len() != self.dim() {
            return None;
        }
        match *self {
            Carrier::Modular { modulus, .. } => Some(x.iter().fold(0usize, |acc, &v| {
                acc * modulus as usize + v.rem_euclid(modulus) as usize
            })),
            Carrier::Lattice { radius, .. } => {
                if !self.in_enumeration(x) {
                    return None;
                }
                let base = 2 * radius as usize + 1;
                Some(x.iter().fold(0usize, |acc, &v| acc * base + (v + radius) as usize))
            }
        }
    }

    /// Points in enumeration order.
    pub fn points(&self) -> Vec<Point> {
        let d = self.dim();
        let (base, digit): (usize, Box<dyn Fn(usize) -> i64>) = match *self {
            Carrier::Modular { modulus, .. } => {
                (modulus as usize, Box::new(move |r| center(r as i64, modulus)))
            }
            Carrier::Lattice { radius, .. } => {
                (2 * radius as usize + 1, Box::new(move |r| r as i64 - radius))
            }
        };
        (0..self.len())
            .map(|mut idx| {
                let mut p = vec![0; d];
                for slot in p.iter_mut().rev() {
                    *slot = digit(idx % base);
                    idx /= base;
                }
                p
            })
            .collect()
    }

    pub fn add(&self, x: &[i64], y: &[i64]) -> Point {
        let s: Vec<i64> = x.iter().zip(y).map(|(a, b)| a + b).collect();
        self.reduce(&s)
    }

    pub fn sub(&self, x: &[i64], y: &[i64]) -> Point {
        let s: Vec<i64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
        self.reduce(&s)
    }

    /// Euclidean norm of the (centered) representative.
    pub fn point_norm(&self, x: &[i64]) -> f64 {
        self.reduce(x)
            .iter()
            .map(|&v| (v as f64) * (v as f64))
            .sum::<f64>()
            .sqrt()
    }
}

fn center(v: i64, m: i64) -> i64 {
    let r = v.rem_euclid(m);
    if 2 * r > m {
        r - m
    } else {
        r
    }
}

/// Square integer matrix, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct IntMatrix {
    dim: usize,
    entries: Vec<i64>,
}

impl IntMatrix {
    pub fn new(dim: usize, entries: Vec<i64>) -> Result<Self, DomainError> {
        if entries.len() != dim * dim {
            return Err(DomainError::DimensionMismatch {
                dim,
                expected: dim * dim,
                got: entries.len(),
            });
        }
        Ok(IntMatrix { dim, entries })
    }

    pub fn identity(dim: usize) -> Self {
        Self::scalar(dim, 1)
    }

    pub fn scalar(dim: usize, s: i64) -> Self {
        let mut entries = vec![0; dim * dim];
        for i in 0..dim {
            entries[i * dim + i] = s;
        }
        IntMatrix { dim, entries }
    }

    pub fn zero(dim: usize) -> Self {
        Self::scalar(dim, 0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> &[i64] {
        &self.entries
    }

    pub fn get(&self, i: usize, j: usize) -> i64 {
        self.entries[i * self.dim + j]
    }

    pub fn mul(&self, other: &IntMatrix) -> IntMatrix {
        let d = self.dim;
        let mut entries = vec![0; d * d];
        for i in 0..d {
            for k in 0..d {
                let a = self.get(i, k);
                if a == 0 {
                    continue;
                }
                for j in 0..d {
                    entries[i * d + j] += a * other.get(k, j);
                }
            }
        }
        IntMatrix { dim: d, entries }
    }

    pub fn add(&self, other: &IntMatrix) -> IntMatrix {
        IntMatrix {
            dim: self.dim,
            entries: self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect(),
        }
    }

    pub fn apply(&self, x: &[i64]) -> Vec<i64> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) * x[j]).sum())
            .collect()
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.dim)
            .map(|i| (0..self.dim).map(|j| self.get(i, j) as f64).collect())
            .collect()
    }

    /// Exact determinant by fraction-free (Bareiss) elimination.
    pub fn determinant(&self) -> i128 {
        let n = self.dim;
        let mut a: Vec<i128> = self.entries.iter().map(|&v| v as i128).collect();
        let mut sign = 1i128;
        let mut prev = 1i128;
        for k in 0..n {
            if a[k * n + k] == 0 {
                let Some(swap) = (k + 1..n).find(|&r| a[r * n + k] != 0) else {
                    return 0;
                };
                for j in 0..n {
                    a.swap(k * n + j, swap * n + j);
                }
                sign = -sign;
            }
            for i in k + 1..n {
                for j in k + 1..n {
                    a[i * n + j] = (a[i * n + j] * a[k * n + k] - a[i * n + k] * a[k * n + j]) / prev;
                }
            }
            prev = a[k * n + k];
        }
        sign * a[n * n - 1]
    }

    fn canonical(&self, carrier: &Carrier) -> IntMatrix {
        match *carrier {
            Carrier::Modular { modulus, .. } => IntMatrix {
                dim: self.dim,
                entries: self.entries.iter().map(|v| v.rem_euclid(modulus)).collect(),
            },
            Carrier::Lattice { .. } => self.clone(),
        }
    }
}

/// An automorphism of the carrier given by an integer matrix.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Automorphism(IntMatrix);

impl Automorphism {
    /// Wraps a matrix after checking it is invertible on `carrier`.
    pub fn new(matrix: IntMatrix, carrier: &Carrier) -> Result<Self, DomainError> {
        Self::checked(matrix, carrier, 0)
    }

    pub fn from_row_major(
        entries: Vec<i64>,
        carrier: &Carrier,
    ) -> Result<Self, DomainError> {
        Self::new(IntMatrix::new(carrier.dim(), entries)?, carrier)
    }

    fn checked(matrix: IntMatrix, carrier: &Carrier, index: usize) -> Result<Self, DomainError> {
        if matrix.dim() != carrier.dim() {
            return Err(DomainError::DimensionMismatch {
                dim: carrier.dim(),
                expected: carrier.dim() * carrier.dim(),
                got: matrix.entries().len(),
            });
        }
        let det = matrix.determinant();
        let ok = match *carrier {
            Carrier::Modular { modulus, .. } => gcd(det.rem_euclid(modulus as i128), modulus as i128) == 1,
            Carrier::Lattice { .. } => det == 1 || det == -1,
        };
        if !ok {
            return Err(DomainError::NonInvertible {
                index,
                det,
                carrier: *carrier,
            });
        }
        Ok(Automorphism(matrix.canonical(carrier)))
    }

    pub fn identity(dim: usize) -> Self {
        Automorphism(IntMatrix::identity(dim))
    }

    pub fn matrix(&self) -> &IntMatrix {
        &self.0
    }

    /// `self ∘ other`, canonicalized for the carrier.
    pub fn compose(&self, other: &Automorphism, carrier: &Carrier) -> Automorphism {
        Automorphism(self.0.mul(&other.0).canonical(carrier))
    }

    /// `k·x`, reduced to the carrier's representative.
    pub fn act(&self, carrier: &Carrier, x: &[i64]) -> Point {
        carrier.reduce(&self.0.apply(x))
    }
}

fn gcd(mut a: i128, mut b: i128) -> i128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a.abs()
}

/// A finite abelian group of automorphisms together with the carrier it acts on.
///
/// The identity is always the first element.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupK {
    carrier: Carrier,
    elements: Vec<Automorphism>,
}

impl GroupK {
    /// The trivial group `{I}`.
    pub fn trivial(carrier: Carrier) -> Self {
        GroupK {
            carrier,
            elements: vec![Automorphism::identity(carrier.dim())],
        }
    }

    pub fn carrier(&self) -> &Carrier {
        &self.carrier
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn elements(&self) -> &[Automorphism] {
        &self.elements
    }

    pub fn act(&self, k: &Automorphism, x: &[i64]) -> Point {
        k.act(&self.carrier, x)
    }

    /// `x + k·x` for every `k`, in element order.
    pub fn doubled_images(&self, x: &[i64]) -> Vec<Point> {
        self.elements
            .iter()
            .map(|k| self.carrier.add(x, &self.act(k, x)))
            .collect()
    }

    /// Element set as canonical matrices (for order-independent comparison).
    pub fn element_set(&self) -> BTreeSet<IntMatrix> {
        self.elements.iter().map(|k| k.0.clone()).collect()
    }

    fn verify(&self) -> Result<(), DomainError> {
        let id = Automorphism::identity(self.carrier.dim());
        for (a, ka) in self.elements.iter().enumerate() {
            for (b, kb) in self.elements.iter().enumerate().skip(a + 1) {
                if ka.compose(kb, &self.carrier) != kb.compose(ka, &self.carrier) {
                    return Err(DomainError::NonAbelian { a, b });
                }
            }
            debug_assert!(self
                .elements
                .iter()
                .any(|kb| ka.compose(kb, &self.carrier) == id));
        }
        Ok(())
    }
}

/// Closure of `generators` under composition, with the default cap.
pub fn build_group(generators: &[IntMatrix], carrier: &Carrier) -> Result<GroupK, DomainError> {
    build_group_capped(generators, carrier, DEFAULT_CLOSURE_CAP)
}

pub fn build_group_capped(
    generators: &[IntMatrix],
    carrier: &Carrier,
    cap: usize,
) -> Result<GroupK, DomainError> {
    carrier.validate()?;
    let gens = generators
        .iter()
        .enumerate()
        .map(|(i, m)| Automorphism::checked(m.clone(), carrier, i))
        .collect::<Result<Vec<_>, _>>()?;
    for a in 0..gens.len() {
        for b in a + 1..gens.len() {
            if gens[a].compose(&gens[b], carrier) != gens[b].compose(&gens[a], carrier) {
                return Err(DomainError::NonAbelian { a, b });
            }
        }
    }

    let id = Automorphism::identity(carrier.dim());
    let mut seen: HashSet<Automorphism> = HashSet::from([id.clone()]);
    let mut queue = VecDeque::from([id.clone()]);
    while let Some(k) = queue.pop_front() {
        for g in &gens {
            let next = k.compose(g, carrier);
            if seen.insert(next.clone()) {
                if seen.len() > cap {
                    return Err(DomainError::ClosureOverflow { cap });
                }
                queue.push_back(next);
            }
        }
    }

    let mut rest: Vec<Automorphism> = seen.into_iter().filter(|k| *k != id).collect();
    rest.sort();
    let mut elements = vec![id];
    elements.extend(rest);
    let group = GroupK {
        carrier: *carrier,
        elements,
    };
    group.verify()?;
    Ok(group)
}

/// Outcome of the `‖x + k·x‖ ≤ 2‖x‖` scan.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoublingReport {
    pub holds: bool,
    pub max_ratio: f64,
    pub worst_point: Option<Point>,
    pub worst_element: Option<usize>,
}

/// Exhaustively checks `‖x + k·x‖ ≤ 2‖x‖` over the enumerated nonzero points.
pub fn check_doubling(group: &GroupK) -> DoublingReport {
    let carrier = group.carrier();
    let mut report = DoublingReport {
        holds: true,
        max_ratio: 0.0,
        worst_point: None,
        worst_element: None,
    };
    for x in carrier.points() {
        let nx = carrier.point_norm(&x);
        if nx == 0.0 {
            continue;
        }
        for (i, y) in group.doubled_images(&x).iter().enumerate() {
            let ratio = carrier.point_norm(y) / nx;
            if ratio > report.max_ratio {
                report.max_ratio = ratio;
                report.worst_point = Some(x.clone());
                report.worst_element = Some(i);
            }
        }
    }
    report.holds = report.max_ratio <= 2.0 + 1e-12;
    report
}

/// Common generator matrices.
pub mod generators {
    use super::IntMatrix;

    pub fn negation(dim: usize) -> IntMatrix {
        IntMatrix::scalar(dim, -1)
    }

    /// Transposition of coordinates `i` and `j`.
    pub fn swap(dim: usize, i: usize, j: usize) -> IntMatrix {
        let mut e = IntMatrix::identity(dim).entries().to_vec();
        e[i * dim + i] = 0;
        e[j * dim + j] = 0;
        e[i * dim + j] = 1;
        e[j * dim + i] = 1;
        IntMatrix::new(dim, e).expect("square")
    }

    /// Permutation matrix sending basis vector `j` to `perm[j]`.
    pub fn permutation(perm: &[usize]) -> IntMatrix {
        let d = perm.len();
        let mut e = vec![0; d * d];
        for (j, &i) in perm.iter().enumerate() {
            e[i * d + j] = 1;
        }
        IntMatrix::new(d, e).expect("square")
    }
}

#[cfg(test)]
mod tests {
    use super::generators::*;
    use super::*;

    fn z5_2() -> Carrier {
        Carrier::modular(5, 2).unwrap()
    }

    #[test]
    fn negation_closes_to_order_two() {
        let k = build_group(&[negation(2)], &z5_2()).unwrap();
        assert_eq!(k.order(), 2);
    }

    #[test]
    fn empty_generators_give_trivial_group() {
        let k = build_group(&[], &z5_2()).unwrap();
        assert_eq!(k.order(), 1);
        assert_eq!(k, GroupK::trivial(z5_2()));
    }

    #[test]
    fn non_commuting_permutations_rejected() {
        let c = Carrier::lattice(3, 2).unwrap();
        // (0 1) and (1 2): the commutator is a 3-cycle
        let a = permutation(&[1, 0, 2]);
        let b = permutation(&[0, 2, 1]);
        assert_ne!(a.mul(&b), b.mul(&a));
        assert!(matches!(
            build_group(&[a, b], &c),
            Err(DomainError::NonAbelian { .. })
        ));
    }

    #[test]
    fn singular_generators_rejected() {
        let c = Carrier::modular(5, 1).unwrap();
        let zero = IntMatrix::new(1, vec![5]).unwrap();
        assert!(matches!(
            build_group(&[zero], &c),
            Err(DomainError::NonInvertible { .. })
        ));
        let l = Carrier::lattice(1, 4).unwrap();
        let two = IntMatrix::new(1, vec![2]).unwrap();
        assert!(matches!(
            build_group(&[two], &l),
            Err(DomainError::NonInvertible { det: 2, .. })
        ));
    }

    #[test]
    fn shear_overflows_the_cap() {
        let c = Carrier::lattice(2, 3).unwrap();
        let shear = IntMatrix::new(2, vec![1, 1, 0, 1]).unwrap();
        assert_eq!(
            build_group(&[shear], &c),
            Err(DomainError::ClosureOverflow { cap: 64 })
        );
    }

    #[test]
    fn cyclic_generator_on_modular_carrier() {
        let c = Carrier::modular(5, 1).unwrap();
        let k = build_group(&[IntMatrix::new(1, vec![2]).unwrap()], &c).unwrap();
        assert_eq!(k.order(), 4);
    }

    #[test]
    fn act_examples() {
        let c = z5_2();
        let k = build_group(&[swap(2, 0, 1)], &c).unwrap();
        assert_eq!(k.act(&k.elements()[1], &[1, 2]), vec![2, 1]);
        let neg = Automorphism::new(negation(2), &c).unwrap();
        assert_eq!(neg.act(&c, &[2, 3]), c.reduce(&[3, 2]));
        assert_eq!(neg.act(&c, &[2, 3]), vec![-2, 2]);
        let id = Automorphism::identity(2);
        assert_eq!(id.act(&c, &[1, -2]), vec![1, -2]);
    }

    #[test]
    fn point_norm_examples() {
        let l = Carrier::lattice(2, 5).unwrap();
        assert_eq!(l.point_norm(&[0, 0]), 0.0);
        assert_eq!(l.point_norm(&[3, 4]), 5.0);
        let z = Carrier::modular(5, 1).unwrap();
        assert_eq!(z.point_norm(&[4]), 1.0);
    }

    #[test]
    fn centered_representatives() {
        let z4 = Carrier::modular(4, 1).unwrap();
        let pts: Vec<i64> = z4.points().into_iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0, 1, 2, -1]);
        let z5 = Carrier::modular(5, 1).unwrap();
        let pts: Vec<i64> = z5.points().into_iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0, 1, 2, -2, -1]);
        for (i, p) in z5_2().points().iter().enumerate() {
            assert_eq!(z5_2().index_of(p), Some(i));
        }
        let l = Carrier::lattice(2, 2).unwrap();
        for (i, p) in l.points().iter().enumerate() {
            assert_eq!(l.index_of(p), Some(i));
        }
        assert_eq!(l.index_of(&[3, 0]), None);
    }

    #[test]
    fn doubling_examples() {
        let l1 = Carrier::lattice(1, 10).unwrap();
        let k = build_group(&[negation(1)], &l1).unwrap();
        let rep = check_doubling(&k);
        assert!(rep.holds);
        assert_eq!(rep.max_ratio, 2.0);
        assert_eq!(rep.worst_element, Some(0));

        let l2 = Carrier::lattice(2, 6).unwrap();
        let k = build_group(&[swap(2, 0, 1)], &l2).unwrap();
        let rep = check_doubling(&k);
        assert!(rep.holds);
        assert!((rep.max_ratio - 2.0).abs() < 1e-12);

        let z5 = Carrier::modular(5, 1).unwrap();
        let rep = check_doubling(&GroupK::trivial(z5));
        assert!(rep.holds);
        // 2·2 = 4 ≡ -1: wraparound shrinks the image
        assert!(rep.max_ratio <= 2.0);
    }

    #[test]
    fn doubling_fails_for_expanding_automorphism() {
        let z7 = Carrier::modular(7, 1).unwrap();
        let k = build_group(&[IntMatrix::new(1, vec![2]).unwrap()], &z7).unwrap();
        // x = 1, k = 2: 1 + 2 = 3 > 2
        assert!(!check_doubling(&k).holds);
    }

    #[test]
    fn determinant_matches_cofactor_expansion() {
        let m = IntMatrix::new(3, vec![2, -1, 0, 3, 4, 1, -2, 5, 7]).unwrap();
        let cofactor = 2 * (4 * 7 - 5) - (-1) * (3 * 7 - (-2)) + 0;
        assert_eq!(m.determinant(), cofactor as i128);
        let p = permutation(&[2, 0, 1]);
        assert_eq!(p.determinant(), 1);
        assert_eq!(swap(3, 0, 2).determinant(), -1);
    }
}
