//! Experiment configuration, the end-to-end runner, report emission, the
//! oracle dump and the self-test.

pub mod acceptance;
pub mod selftest;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::control::{corollary_coefficients, ControlError, ControlFn, CorollaryCoefficients, LipschitzCert};
use crate::domain::{build_group, Carrier, DomainError, GroupK, IntMatrix};
use crate::fixpoint::{FixpointError, DEFAULT_NMAX, DEFAULT_TOL};
use crate::funcspace::{Beta, DenseTable, FuncError, FuncJson, FuncRep, PolyPlusTable, Value};
use crate::oracle::{
    jensen_solution_space, make_exact_triple, perturb, quadratic_solution_space, Certificate, CertificateShape,
    NoiseTargets, OracleError, PerturbSpec, SolutionBasis,
};
use crate::stabilizer::{
    max_pointwise_gap, stabilize, uniqueness_probe, PexiderTriple, StabilityReport, StabilizeError, StabilizeOptions,
    Strategy, UniquenessProbe,
};

pub const SCHEMA_VERSION: u32 = 1;

pub const EXIT_OK: i32 = 0;
pub const EXIT_SELFTEST_FAILED: i32 = 1;
pub const EXIT_HYPOTHESIS: i32 = 2;
pub const EXIT_NONCONVERGENCE: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HarnessError {
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
    #[error(transparent)]
    Domain(#[from] DomainError),
    #[error(transparent)]
    Func(#[from] FuncError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Stabilize(#[from] StabilizeError),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io(_) | HarnessError::Domain(_) | HarnessError::Func(_) => {
                EXIT_CONFIG
            }
            HarnessError::Control(e) => control_code(e),
            HarnessError::Oracle(e) => match e {
                OracleError::CertificateImpossible { .. } => EXIT_HYPOTHESIS,
                OracleError::Control(c) => control_code(c),
                OracleError::LawViolation { .. } | OracleError::InvalidAmplitude(_) | OracleError::Func(_) => {
                    EXIT_CONFIG
                }
            },
            HarnessError::Stabilize(e) => match e {
                StabilizeError::HypothesisViolated { .. } => EXIT_HYPOTHESIS,
                StabilizeError::NotContractive { .. } | StabilizeError::LambdaNotContractive { .. } => {
                    EXIT_NONCONVERGENCE
                }
                StabilizeError::Fixpoint(FixpointError::NoFiniteStep { .. } | FixpointError::MaxIterations { .. }) => {
                    EXIT_NONCONVERGENCE
                }
                StabilizeError::Control(c) => control_code(c),
                StabilizeError::Fixpoint(_)
                | StabilizeError::InvalidLipschitz { .. }
                | StabilizeError::CarrierMismatch
                | StabilizeError::Func(_) => EXIT_CONFIG,
            },
        }
    }
}

fn control_code(e: &ControlError) -> i32 {
    match e {
        ControlError::NotContractive { .. } | ControlError::ZeroDenominatorViolation(_) => EXIT_NONCONVERGENCE,
        _ => EXIT_CONFIG,
    }
}

/// Named corollary setups.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    /// K = {I}.
    Cauchy,
    /// K = {I, σ} for an involution σ (−I when no generator is given).
    Sigma,
    /// Any K; power-control constraints are enforced.
    General,
}

/// Where the exact solution comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum TruthSpec {
    /// Coefficients (one r-vector per basis element) in the oracle bases of the
    /// quadratic and side-conditioned Jensen solution spaces.
    Oracle {
        #[serde(default)]
        q: Vec<Vec<f64>>,
        #[serde(default)]
        j: Vec<Vec<f64>>,
        a: Vec<f64>,
        b: Vec<f64>,
    },
    /// Explicit quadratic and Jensen components.
    Components { q: FuncJson, j: FuncJson, a: Vec<f64>, b: Vec<f64> },
    /// An explicit triple with no known decomposition.
    Triple { f: FuncJson, g: FuncJson, h: FuncJson },
}

fn default_r() -> usize {
    1
}
fn default_tol() -> f64 {
    DEFAULT_TOL
}
fn default_nmax() -> usize {
    DEFAULT_NMAX
}
fn default_true() -> bool {
    true
}
fn default_targets() -> NoiseTargets {
    NoiseTargets::F_ONLY
}
fn default_probe() -> usize {
    10
}
fn default_shape() -> CertificateShape {
    CertificateShape::Constant
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    pub carrier: Carrier,
    /// Generator matrices of K, each row-major.
    #[serde(default)]
    pub generators: Vec<Vec<i64>>,
    #[serde(default = "default_r")]
    pub r: usize,
    pub beta: f64,
    /// Control to use; when absent the perturbation certificate is used.
    #[serde(default)]
    pub control: Option<ControlFn>,
    /// Certificate shape computed by the perturbation step.
    #[serde(default = "default_shape")]
    pub certificate: CertificateShape,
    #[serde(default)]
    pub strategy: Strategy,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_nmax")]
    pub nmax: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default)]
    pub support_radius: f64,
    #[serde(default = "default_targets")]
    pub noise_targets: NoiseTargets,
    #[serde(default = "default_true")]
    pub exclude_origin: bool,
    pub truth: TruthSpec,
    #[serde(default)]
    pub preset: Option<Preset>,
    #[serde(default)]
    pub lipschitz: Option<f64>,
    /// Also run the other Jensen strategy and report the disagreement.
    #[serde(default = "default_true")]
    pub discrepancy: bool,
    #[serde(default = "default_probe")]
    pub probe_steps: usize,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        if cfg.version != SCHEMA_VERSION {
            return Err(HarnessError::Config(format!(
                "unsupported version {} (expected {SCHEMA_VERSION})",
                cfg.version
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// Builds K after applying the preset's constraints on the generators.
    pub fn group(&self) -> Result<GroupK, HarnessError> {
        self.carrier.validate()?;
        let d = self.carrier.dim();
        let mut gens = self
            .generators
            .iter()
            .map(|g| IntMatrix::new(d, g.clone()))
            .collect::<Result<Vec<_>, _>>()?;
        if self.preset == Some(Preset::Sigma) && gens.is_empty() {
            gens.push(IntMatrix::scalar(d, -1));
        }
        let group = build_group(&gens, &self.carrier)?;
        match self.preset {
            Some(Preset::Cauchy) if group.order() != 1 => {
                Err(HarnessError::Config("cauchy preset requires K = {I}".into()))
            }
            Some(Preset::Sigma) if group.order() != 2 => Err(HarnessError::Config(format!(
                "sigma preset requires K = {{I, σ}} with σ² = I; generators give |K| = {}",
                group.order()
            ))),
            _ => Ok(group),
        }
    }

    fn beta(&self) -> Result<Beta, HarnessError> {
        Ok(Beta::new(self.beta)?)
    }
}

/// Recovered-versus-truth comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleComparison {
    pub quadratic_dimension: usize,
    pub jensen_dimension: usize,
    pub q_gap: f64,
    pub j_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunStatus {
    pub exit_code: i32,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunReport {
    pub version: u32,
    pub config: ExperimentConfig,
    pub status: RunStatus,
    pub group_order: Option<usize>,
    pub control: Option<ControlFn>,
    pub certificate: Option<Certificate>,
    pub lipschitz: Option<LipschitzCert>,
    pub stability: Option<StabilityReport>,
    pub uniqueness: Option<UniquenessProbe>,
    pub oracle: Option<OracleComparison>,
    pub corollary: Option<CorollaryCoefficients>,
}

impl RunReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

/// Scalar basis element times an r-vector coefficient.
fn outer(e: &FuncRep, c: &[f64]) -> Result<FuncRep, FuncError> {
    match e {
        FuncRep::Dense(t) => Ok(DenseTable::new(
            *e.carrier(),
            t.values().iter().map(|v| Value(c.iter().map(|ci| ci * v.0[0]).collect())).collect(),
        )?
        .into()),
        FuncRep::Poly(p) => {
            let lin = c.iter().map(|ci| p.linear()[0].iter().map(|v| ci * v).collect()).collect();
            let quad = c
                .iter()
                .map(|ci| p.quadratic()[0].iter().map(|row| row.iter().map(|v| ci * v).collect()).collect())
                .collect();
            Ok(PolyPlusTable::new(
                *e.carrier(),
                Value(c.iter().map(|ci| ci * p.constant().0[0]).collect()),
                lin,
                quad,
                Default::default(),
            )?
            .into())
        }
    }
}

fn combine(basis: &SolutionBasis, coeffs: &[Vec<f64>], carrier: Carrier, r: usize, what: &str) -> Result<FuncRep, HarnessError> {
    if coeffs.len() != basis.dimension() {
        return Err(HarnessError::Config(format!(
            "{what}: {} coefficients given for a solution space of dimension {}",
            coeffs.len(),
            basis.dimension()
        )));
    }
    let mut acc = match carrier {
        Carrier::Modular { .. } => DenseTable::from_fn(carrier, |_| Value::zeros(r))?.into(),
        Carrier::Lattice { .. } => PolyPlusTable::zero(carrier, r).into(),
    };
    for (e, c) in basis.elements.iter().zip(coeffs) {
        if c.len() != r {
            return Err(HarnessError::Config(format!("{what}: coefficient of length {} for r = {r}", c.len())));
        }
        acc = FuncRep::add(&acc, &outer(e, c)?)?;
    }
    Ok(acc)
}

struct Truth {
    triple: PexiderTriple,
    components: Option<(FuncRep, FuncRep)>,
    dims: Option<(usize, usize)>,
}

fn check_len(v: &[f64], r: usize, what: &str) -> Result<Value, HarnessError> {
    if v.len() != r {
        return Err(HarnessError::Config(format!("{what} has length {} for r = {r}", v.len())));
    }
    Ok(Value::checked(v.to_vec())?)
}

fn build_truth(cfg: &ExperimentConfig, group: &GroupK) -> Result<Truth, HarnessError> {
    let carrier = cfg.carrier;
    let r = cfg.r;
    let check_r = |f: &FuncRep, what: &str| {
        if f.r() != r {
            Err(HarnessError::Config(format!("{what} has target dimension {} but r = {r}", f.r())))
        } else {
            Ok(())
        }
    };
    match &cfg.truth {
        TruthSpec::Oracle { q, j, a, b } => {
            let qb = quadratic_solution_space(group)?;
            let jb = jensen_solution_space(group, true)?;
            let qf = combine(&qb, q, carrier, r, "q")?;
            let jf = combine(&jb, j, carrier, r, "j")?;
            let triple = make_exact_triple(&qf, &jf, &check_len(a, r, "a")?, &check_len(b, r, "b")?, group)?;
            Ok(Truth {
                triple,
                components: Some((qf, jf)),
                dims: Some((qb.dimension(), jb.dimension())),
            })
        }
        TruthSpec::Components { q, j, a, b } => {
            let qf = q.clone().into_func(carrier)?;
            let jf = j.clone().into_func(carrier)?;
            check_r(&qf, "q")?;
            check_r(&jf, "j")?;
            let triple = make_exact_triple(&qf, &jf, &check_len(a, r, "a")?, &check_len(b, r, "b")?, group)?;
            Ok(Truth {
                triple,
                components: Some((qf, jf)),
                dims: None,
            })
        }
        TruthSpec::Triple { f, g, h } => {
            let f = f.clone().into_func(carrier)?;
            check_r(&f, "f")?;
            let triple = PexiderTriple::new(f, g.clone().into_func(carrier)?, h.clone().into_func(carrier)?)?;
            Ok(Truth {
                triple,
                components: None,
                dims: None,
            })
        }
    }
}

/// Runs a configuration end to end; the report carries the exit status.
pub fn run(cfg: &ExperimentConfig) -> RunReport {
    let mut report = RunReport {
        version: SCHEMA_VERSION,
        config: cfg.clone(),
        status: RunStatus {
            exit_code: EXIT_OK,
            error: None,
        },
        group_order: None,
        control: None,
        certificate: None,
        lipschitz: None,
        stability: None,
        uniqueness: None,
        oracle: None,
        corollary: None,
    };
    if let Err(e) = execute(cfg, &mut report) {
        report.status = RunStatus {
            exit_code: e.exit_code(),
            error: Some(e.to_string()),
        };
    }
    report
}

fn execute(cfg: &ExperimentConfig, report: &mut RunReport) -> Result<(), HarnessError> {
    let beta = cfg.beta()?;
    let group = cfg.group()?;
    report.group_order = Some(group.order());
    if let Some(c) = &cfg.control {
        c.validate()?;
    }
    if let Some(ControlFn::Power { theta, p }) = &cfg.control {
        match (cfg.preset, corollary_coefficients(*theta, *p, cfg.beta, group.order())) {
            (_, Ok(c)) => report.corollary = Some(c),
            (Some(_), Err(e)) => return Err(e.into()),
            (None, Err(_)) => {}
        }
    }
    if !(cfg.tol > 0.0 && cfg.tol.is_finite()) || cfg.nmax == 0 {
        return Err(HarnessError::Config("tol must be positive and nmax at least 1".into()));
    }

    let truth = build_truth(cfg, &group)?;
    let spec = PerturbSpec {
        delta: cfg.delta,
        seed: cfg.seed,
        support_radius: cfg.support_radius,
        targets: cfg.noise_targets,
        exclude_origin: cfg.exclude_origin,
        shape: cfg.certificate,
    };
    let (triple, cert) = perturb(&truth.triple, &spec, &group, beta)?;
    let control = match (&cfg.control, &cert.control) {
        (Some(c), _) => c.clone(),
        (None, Some(c)) => c.clone(),
        (None, None) => {
            return Err(HarnessError::Config(
                "certificate is degenerate (zero residual); supply a positive control".into(),
            ))
        }
    };
    report.certificate = Some(cert);
    report.control = Some(control.clone());
    report.lipschitz = crate::control::measure_lipschitz(&control, &group, beta).ok();

    let opts = StabilizeOptions {
        strategy: cfg.strategy,
        tol: cfg.tol,
        nmax: cfg.nmax,
        lipschitz: cfg.lipschitz,
        discrepancy: cfg.discrepancy,
    };
    let (decomp, stab) = stabilize(&triple, &control, &group, beta, &opts)?;
    report.uniqueness = Some(uniqueness_probe(
        &triple,
        &decomp,
        &control,
        &group,
        beta,
        stab.lipschitz,
        cfg.probe_steps,
    )?);
    report.stability = Some(stab);
    if let Some((q, j)) = &truth.components {
        let (qd, jd) = match truth.dims {
            Some(d) => d,
            None => (
                quadratic_solution_space(&group)?.dimension(),
                jensen_solution_space(&group, true)?.dimension(),
            ),
        };
        report.oracle = Some(OracleComparison {
            quadratic_dimension: qd,
            jensen_dimension: jd,
            q_gap: max_pointwise_gap(&decomp.q, q, beta)?,
            j_gap: max_pointwise_gap(&decomp.j, j, beta)?,
        });
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BasisDump {
    pub dimension: usize,
    pub system_residual: f64,
    pub law_residual: f64,
    pub basis: Vec<FuncJson>,
}

impl From<SolutionBasis> for BasisDump {
    fn from(b: SolutionBasis) -> Self {
        BasisDump {
            dimension: b.dimension(),
            system_residual: b.system_residual,
            law_residual: b.law_residual,
            basis: b.elements.iter().map(FuncJson::from_func).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleDump {
    pub version: u32,
    pub carrier: Carrier,
    pub group_order: usize,
    pub quadratic: BasisDump,
    pub jensen: BasisDump,
    pub jensen_with_side_condition: BasisDump,
}

/// Solution spaces for the carrier and K of a config.
pub fn oracle_dump(cfg: &ExperimentConfig) -> Result<OracleDump, HarnessError> {
    let group = cfg.group()?;
    Ok(OracleDump {
        version: SCHEMA_VERSION,
        carrier: cfg.carrier,
        group_order: group.order(),
        quadratic: quadratic_solution_space(&group)?.into(),
        jensen: jensen_solution_space(&group, false)?.into(),
        jensen_with_side_condition: jensen_solution_space(&group, true)?.into(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn noisy_config() -> ExperimentConfig {
        ExperimentConfig::from_json(
            r#"{
                "version": 1,
                "carrier": {"kind": "lattice", "dim": 1, "radius": 32},
                "generators": [[-1]],
                "beta": 1.0,
                "control": {"kind": "constant", "theta": 0.001},
                "seed": 7,
                "delta": 0.001,
                "support_radius": 8.0,
                "truth": {
                    "kind": "components",
                    "q": {"constant": [0.0], "linear": [[0.0]], "quadratic": [[[2.0]]]},
                    "j": {"constant": [0.0], "linear": [[3.0]], "quadratic": [[[0.0]]]},
                    "a": [0.5], "b": [0.5]
                }
            }"#,
        )
        .unwrap()
    }

    #[test]
    fn noisy_run_succeeds() {
        let rep = run(&noisy_config());
        assert_eq!(rep.status.exit_code, EXIT_OK, "{:?}", rep.status.error);
        let stab = rep.stability.as_ref().unwrap();
        assert!(stab.bounds.min_margin() >= 0.0);
        let oracle = rep.oracle.as_ref().unwrap();
        assert_eq!((oracle.quadratic_dimension, oracle.jensen_dimension), (1, 1));
        assert!(oracle.q_gap <= 1e-9 && oracle.j_gap <= 1e-9);
        assert!(rep.certificate.as_ref().unwrap().theta <= 1e-3);
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = noisy_config();
        assert_eq!(run(&cfg).to_json(), run(&cfg).to_json());
    }

    #[test]
    fn exit_codes() {
        let mut cfg = noisy_config();
        cfg.generators = vec![vec![1, 0, 0, 1]];
        assert_eq!(run(&cfg).status.exit_code, EXIT_CONFIG);

        let mut cfg = noisy_config();
        cfg.control = Some(ControlFn::constant(1e-5).unwrap());
        assert_eq!(run(&cfg).status.exit_code, EXIT_HYPOTHESIS);

        // on K = {I} the power control with p > β has L̂ = 2^{p−β} > 1
        let mut cfg = noisy_config();
        cfg.generators.clear();
        cfg.control = Some(ControlFn::power(1.0, 1.2).unwrap());
        // on K = {I} the quadratic space is the additive maps
        cfg.truth = TruthSpec::Oracle {
            q: vec![vec![1.0]],
            j: vec![],
            a: vec![0.0],
            b: vec![0.0],
        };
        cfg.delta = 0.0;
        let rep = run(&cfg);
        assert_eq!(rep.status.exit_code, EXIT_NONCONVERGENCE, "{:?}", rep.status.error);

        let mut cfg = noisy_config();
        cfg.carrier = Carrier::Modular { modulus: 4, dim: 1 };
        cfg.generators = vec![vec![2]];
        assert_eq!(run(&cfg).status.exit_code, EXIT_CONFIG);
    }

    #[test]
    fn presets_enforce_group_and_constraints() {
        let mut cfg = noisy_config();
        cfg.preset = Some(Preset::Cauchy);
        assert_eq!(run(&cfg).status.exit_code, EXIT_CONFIG);

        let mut cfg = noisy_config();
        cfg.preset = Some(Preset::Sigma);
        cfg.generators.clear();
        assert_eq!(cfg.group().unwrap().order(), 2);
        cfg.control = Some(ControlFn::power(1e-3, 0.8).unwrap());
        cfg.beta = 0.9;
        let rep = run(&cfg);
        assert_eq!(rep.status.exit_code, EXIT_CONFIG);
        assert!(rep.status.error.unwrap().contains("β + (β−1)α"));
    }

    #[test]
    fn rejects_unknown_version_and_fields() {
        let text = serde_json::to_string(&noisy_config()).unwrap();
        assert!(ExperimentConfig::from_json(&text.replacen("\"version\":1", "\"version\":2", 1)).is_err());
        assert!(ExperimentConfig::from_json(&text.replacen("{", "{\"bogus\":0,", 1)).is_err());
        assert!(ExperimentConfig::from_json(&text).is_ok());
    }

    #[test]
    fn oracle_dump_for_z5() {
        let mut cfg = noisy_config();
        cfg.carrier = Carrier::Modular { modulus: 5, dim: 1 };
        let d = oracle_dump(&cfg).unwrap();
        assert_eq!(
            (d.quadratic.dimension, d.jensen.dimension, d.jensen_with_side_condition.dimension),
            (0, 1, 0)
        );
    }
}
