//! Invariant suite plus the acceptance scenarios.

use rand::{Rng, SeedableRng};
use rand_xoshiro::SplitMix64;

use super::acceptance::{self, noisy_scenario, CriterionResult};
use crate::control::{derive_chi, derive_psi, measure_lipschitz, ControlFn};
use crate::domain::{build_group, generators, Carrier, GroupK};
use crate::fixpoint::{power_formula_check, AveragingOp};
use crate::funcspace::{power_sum, sup_beta_distance, Beta, DenseTable, FuncRep, Value};
use crate::oracle::{jensen_solution_space, quadratic_solution_space};
use crate::stabilizer::{max_pointwise_gap, stabilize};

#[derive(Debug, Clone)]
pub struct SelftestOptions {
    /// Exponent used by the β-norm axiom check; `None` checks 0.25, 0.5, 0.75 and 1.
    pub norm_exponent: Option<f64>,
    pub seed: u64,
    /// Skip the acceptance scenarios.
    pub invariants_only: bool,
}

impl Default for SelftestOptions {
    fn default() -> Self {
        SelftestOptions {
            norm_exponent: None,
            seed: 1,
            invariants_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl std::fmt::Display for CheckResult {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}] {}: {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

#[derive(Debug, Clone)]
pub struct SelftestSummary {
    pub checks: Vec<CheckResult>,
    pub criteria: Vec<CriterionResult>,
}

impl SelftestSummary {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed) && self.criteria.iter().all(|c| c.passed)
    }

    pub fn lines(&self) -> Vec<String> {
        self.checks
            .iter()
            .map(ToString::to_string)
            .chain(self.criteria.iter().map(ToString::to_string))
            .collect()
    }
}

fn check(name: impl Into<String>, body: impl FnOnce() -> Result<(bool, String), String>) -> CheckResult {
    let (passed, detail) = body().unwrap_or_else(|e| (false, format!("error: {e}")));
    CheckResult {
        name: name.into(),
        passed,
        detail,
    }
}

fn neg(carrier: Carrier) -> GroupK {
    build_group(&[generators::negation(carrier.dim())], &carrier).expect("negation generates a group")
}

fn random_table(carrier: Carrier, r: usize, rng: &mut SplitMix64) -> FuncRep {
    DenseTable::from_fn(carrier, |_| Value((0..r).map(|_| rng.random_range(-1.0..=1.0)).collect()))
        .expect("finite")
        .into()
}

/// Searches random vectors for a violation of the β-norm axioms at `exponent`.
pub fn norm_axioms(exponent: f64, seed: u64) -> CheckResult {
    check(format!("β-norm axioms (exponent {exponent})"), || {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let vec3 = |rng: &mut SplitMix64| -> Vec<f64> { (0..3).map(|_| rng.random_range(-2.0..=2.0)).collect() };
        for _ in 0..2000 {
            let a = vec3(&mut rng);
            let b = vec3(&mut rng);
            let lambda: f64 = rng.random_range(-3.0..=3.0);
            let na = power_sum(&a, exponent);
            let nb = power_sum(&b, exponent);
            let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
            let scaled: Vec<f64> = a.iter().map(|x| lambda * x).collect();
            if na < 0.0 || power_sum(&[0.0; 3], exponent) != 0.0 {
                return Ok((false, format!("positivity fails at {a:?}")));
            }
            let hom = power_sum(&scaled, exponent);
            if (hom - lambda.abs().powf(exponent) * na).abs() > 1e-12 * (1.0 + hom.abs()) {
                return Ok((false, format!("homogeneity fails at λ={lambda}, v={a:?}")));
            }
            let ns = power_sum(&sum, exponent);
            if ns > na + nb + 1e-12 * (1.0 + na + nb) {
                return Ok((false, format!("triangle inequality fails: ‖{a:?} + {b:?}‖ = {ns} > {}", na + nb)));
            }
        }
        Ok((true, "2000 random triples".into()))
    })
}

fn metric_axioms(seed: u64) -> CheckResult {
    check("sup β-distance metric axioms", || {
        let z7 = Carrier::modular(7, 1).map_err(|e| e.to_string())?;
        let mut rng = SplitMix64::seed_from_u64(seed);
        for b in [0.3, 0.5, 1.0] {
            let beta = Beta::new(b).map_err(|e| e.to_string())?;
            for _ in 0..50 {
                let f = random_table(z7, 2, &mut rng);
                let g = random_table(z7, 2, &mut rng);
                let h = random_table(z7, 2, &mut rng);
                let d = |a: &FuncRep, c: &FuncRep| sup_beta_distance(a, c, beta).map_err(|e| e.to_string());
                let (fg, gf, fh, gh) = (d(&f, &g)?, d(&g, &f)?, d(&f, &h)?, d(&g, &h)?);
                if d(&f, &f)? != 0.0 || fg != gf || fh > fg + gh + 1e-12 {
                    return Ok((false, format!("violation at β = {b}")));
                }
            }
        }
        Ok((true, "identity, symmetry, triangle on 150 random triples".into()))
    })
}

fn contraction_laws(seed: u64) -> CheckResult {
    check("contraction laws", || {
        let l = Carrier::lattice(1, 16).map_err(|e| e.to_string())?;
        let k = neg(l);
        let mut worst_excess = f64::NEG_INFINITY;
        for (phi, b) in [
            (ControlFn::constant(1.0), 1.0),
            (ControlFn::power(1.0, 0.25), 0.5),
            (ControlFn::power(2.0, 0.5), 0.9),
        ] {
            let phi = phi.map_err(|e| e.to_string())?;
            let beta = Beta::new(b).map_err(|e| e.to_string())?;
            let cert = measure_lipschitz(&phi, &k, beta).map_err(|e| e.to_string())?;
            for w in [derive_psi(&phi, &k, beta), derive_chi(&phi, &k, beta)] {
                worst_excess = worst_excess.max(w.contraction_excess(cert.lipschitz));
            }
        }
        // d(Tg, Th) ≤ L d(g, h) for a constant control (weights are constant)
        let z7 = Carrier::modular(7, 1).map_err(|e| e.to_string())?;
        let k7 = neg(z7);
        let beta = Beta::new(1.0).map_err(|e| e.to_string())?;
        let mut rng = SplitMix64::seed_from_u64(seed);
        let half = AveragingOp::half(&k7);
        let mut worst_ratio = 0.0f64;
        for _ in 0..50 {
            let g = random_table(z7, 1, &mut rng);
            let h = random_table(z7, 1, &mut rng);
            let before = sup_beta_distance(&g, &h, beta).map_err(|e| e.to_string())?;
            let after = sup_beta_distance(&half.apply(&g), &half.apply(&h), beta).map_err(|e| e.to_string())?;
            worst_ratio = worst_ratio.max(after / before);
        }
        Ok((
            worst_excess <= 1e-12 && worst_ratio <= 0.5 + 1e-12,
            format!("max weight excess {worst_excess:.3e}; max half-operator ratio {worst_ratio:.4}"),
        ))
    })
}

fn power_formula(seed: u64) -> CheckResult {
    check("power formula n ≤ 3", || {
        let mut rng = SplitMix64::seed_from_u64(seed);
        let beta = Beta::new(1.0).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        let z52 = Carrier::modular(5, 2).map_err(|e| e.to_string())?;
        let swap = build_group(&[generators::swap(2, 0, 1)], &z52).map_err(|e| e.to_string())?;
        for k in [neg(Carrier::modular(7, 1).map_err(|e| e.to_string())?), neg(z52), swap] {
            for _ in 0..5 {
                let h = random_table(*k.carrier(), 1, &mut rng);
                for n in 1..=3 {
                    worst = worst.max(power_formula_check(&h, &k, n, beta).map_err(|e| e.to_string())?);
                }
            }
        }
        Ok((worst <= 1e-12, format!("max deviation {worst:.3e}")))
    })
}

fn oracle_fixed_points() -> CheckResult {
    check("oracle fixed-point identities", || {
        let beta = Beta::new(1.0).map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        let mut count = 0;
        for carrier in [
            Carrier::lattice(1, 8),
            Carrier::lattice(2, 4),
            Carrier::modular(5, 1),
            Carrier::modular(3, 2),
        ] {
            let k = neg(carrier.map_err(|e| e.to_string())?);
            let half = AveragingOp::half(&k);
            let full = AveragingOp::full(&k);
            for e in quadratic_solution_space(&k).map_err(|e| e.to_string())?.elements {
                worst = worst.max(max_pointwise_gap(&half.apply(&e), &e, beta).map_err(|e| e.to_string())?);
                count += 1;
            }
            for side in [false, true] {
                for e in jensen_solution_space(&k, side).map_err(|e| e.to_string())?.elements {
                    worst = worst.max(max_pointwise_gap(&full.apply(&e), &e, beta).map_err(|e| e.to_string())?);
                    count += 1;
                }
            }
        }
        Ok((worst <= 1e-9, format!("{count} basis elements, max gap {worst:.3e}")))
    })
}

fn linearity() -> CheckResult {
    check("pipeline linearity", || {
        let s = noisy_scenario(acceptance::SEEDS[0]);
        let (d, _) = s.run().map_err(|e| e.to_string())?;
        let mut worst = 0.0f64;
        for lambda in [2.0f64, -1.0] {
            let phi = s.phi.scaled(lambda.abs().powf(s.beta.get()));
            let (ds, _) = stabilize(&s.triple.scale(lambda), &phi, &s.group, s.beta, &s.opts).map_err(|e| e.to_string())?;
            let gap = |a: &FuncRep, b: &FuncRep| max_pointwise_gap(a, b, s.beta).map_err(|e| e.to_string());
            worst = worst
                .max(gap(&ds.q, &d.q.scale(lambda))?)
                .max(gap(&ds.j, &d.j.scale(lambda))?)
                .max(ds.g0.sub(&d.g0.scale(lambda)).0.iter().fold(0.0, |m, v| m.max(v.abs())))
                .max(ds.h0.sub(&d.h0.scale(lambda)).0.iter().fold(0.0, |m, v| m.max(v.abs())));
        }
        Ok((worst <= 1e-9, format!("λ ∈ {{2, −1}}, max deviation {worst:.3e}")))
    })
}

pub fn selftest(opts: &SelftestOptions) -> SelftestSummary {
    let exponents = match opts.norm_exponent {
        Some(e) => vec![e],
        None => vec![0.25, 0.5, 0.75, 1.0],
    };
    let mut checks: Vec<CheckResult> = exponents.iter().map(|&e| norm_axioms(e, opts.seed)).collect();
    checks.push(metric_axioms(opts.seed));
    checks.push(contraction_laws(opts.seed));
    checks.push(power_formula(opts.seed));
    checks.push(oracle_fixed_points());
    checks.push(linearity());
    let criteria = if opts.invariants_only {
        Vec::new()
    } else {
        acceptance::run_all()
    };
    SelftestSummary { checks, criteria }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn invariants_pass() {
        let s = selftest(&SelftestOptions {
            invariants_only: true,
            ..Default::default()
        });
        for line in s.lines() {
            assert!(line.starts_with("[PASS]"), "{line}");
        }
        assert!(s.passed());
    }

    #[test]
    fn injected_exponent_breaks_triangle() {
        let c = norm_axioms(1.5, 1);
        assert!(!c.passed);
        assert!(c.detail.contains("triangle"), "{}", c.detail);
    }

    #[test]
    fn verdicts_do_not_depend_on_seed() {
        let verdicts = |seed| {
            selftest(&SelftestOptions {
                seed,
                invariants_only: true,
                ..Default::default()
            })
            .checks
            .iter()
            .map(|c| c.passed)
            .collect::<Vec<_>>()
        };
        assert_eq!(verdicts(1), verdicts(99));
    }
}
