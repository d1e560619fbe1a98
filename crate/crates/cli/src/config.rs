//! Run configuration and family loading.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use hedge_core::lp::{TOL_FEAS, TOL_GAP};
use hedge_core::tree::{
    build_binomial, load_document, ClaimFamily, Kernel, ModelFamily, PriceField, ScenarioTree, Transform,
};
use serde::Deserialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Solve,
    Generate,
    DetectArbitrage,
    CheckCps,
    FitSandwich,
}

impl Mode {
    pub fn name(self) -> &'static str {
        match self {
            Mode::Solve => "solve",
            Mode::Generate => "generate",
            Mode::DetectArbitrage => "detect-arbitrage",
            Mode::CheckCps => "check-cps",
            Mode::FitSandwich => "fit-sandwich",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Family JSON, relative to the config file.
    pub input: Option<PathBuf>,
    pub generator: Option<GeneratorSpec>,
    pub mode: Option<Mode>,
    pub lambda: Option<f64>,
    /// Replaces any claims carried by the input document.
    pub claim: Option<ClaimSpec>,
    pub output: Option<PathBuf>,
    pub tol_gap: Option<f64>,
    pub tol_feas: Option<f64>,
    /// Admissibility floor imposed on the superhedging strategy.
    pub floor: Option<f64>,
    /// Consistent price system or dual certificate to check.
    pub cps: Option<PathBuf>,
    /// Primal certificate to re-check alongside `cps`.
    pub primal_cert: Option<PathBuf>,
    pub corridor: Option<CorridorSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum GeneratorSpec {
    Binomial {
        levels: usize,
        #[serde(default = "half")]
        p_up: f64,
        models: Vec<BinomialModel>,
    },
    Kernel {
        levels: usize,
        increment: f64,
        #[serde(default = "exp_transform")]
        transform: Transform,
        models: Vec<KernelModel>,
    },
}

fn half() -> f64 {
    0.5
}

fn exp_transform() -> Transform {
    Transform::Exp
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinomialModel {
    pub theta: String,
    pub s0: f64,
    pub up: f64,
    pub down: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelModel {
    pub theta: String,
    pub kernel: Kernel,
    /// Drift per level; zero when absent.
    #[serde(default)]
    pub mu: Option<Vec<f64>>,
    /// Multiplies every price of the model.
    #[serde(default = "one")]
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ClaimSpec {
    Call { strike: f64 },
    Put { strike: f64 },
}

impl ClaimSpec {
    pub fn payoff(self, s: f64) -> f64 {
        match self {
            ClaimSpec::Call { strike } => (s - strike).max(0.0),
            ClaimSpec::Put { strike } => (strike - s).max(0.0),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum CorridorSpec {
    Inline {
        lower: BTreeMap<String, f64>,
        upper: BTreeMap<String, f64>,
    },
    File(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct CorridorFile {
    lower: BTreeMap<String, f64>,
    upper: BTreeMap<String, f64>,
}

/// Corridor bounds keyed by node id.
pub type Bounds = BTreeMap<String, f64>;

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub lambda: Option<f64>,
    pub tol_gap: Option<f64>,
}

/// A validated configuration with paths resolved.
#[derive(Debug, Clone)]
pub struct Run {
    pub mode: Mode,
    pub config: RunConfig,
    pub base: PathBuf,
    pub out_dir: PathBuf,
    pub lambda: Option<f64>,
    pub tol_gap: f64,
    pub tol_feas: f64,
}

pub fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::io(path, e))
}

fn positive_tolerance(name: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(CliError::Schema(format!("{name} = {v}, need a positive number")))
    }
}

impl Run {
    pub fn load(path: &Path, mode: Mode, overrides: Overrides) -> Result<Self, CliError> {
        let bytes = read_file(path)?;
        let config: RunConfig = serde_json::from_slice(&bytes)
            .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        if let Some(declared) = config.mode {
            if declared != mode {
                return Err(CliError::Schema(format!(
                    "config declares mode {:?} but {:?} was requested",
                    declared.name(),
                    mode.name()
                )));
            }
        }
        match (&config.input, &config.generator) {
            (Some(_), Some(_)) => {
                return Err(CliError::Schema("config gives both \"input\" and \"generator\"".into()))
            }
            (None, None) => return Err(CliError::Schema("config needs \"input\" or \"generator\"".into())),
            _ => {}
        }
        let missing = |field: &str| CliError::Schema(format!("mode {:?} needs {field:?}", mode.name()));
        match mode {
            Mode::Generate if config.generator.is_none() => return Err(missing("generator")),
            Mode::CheckCps if config.cps.is_none() => return Err(missing("cps")),
            Mode::FitSandwich if config.corridor.is_none() => return Err(missing("corridor")),
            _ => {}
        }
        let out_dir = match (overrides.out, &config.output) {
            (Some(o), _) => o,
            (None, Some(o)) => base.join(o),
            (None, None) => PathBuf::from("."),
        };
        let tol_gap = positive_tolerance("tol_gap", overrides.tol_gap.or(config.tol_gap).unwrap_or(TOL_GAP))?;
        let tol_feas = positive_tolerance("tol_feas", config.tol_feas.unwrap_or(TOL_FEAS))?;
        let lambda = overrides.lambda.or(config.lambda);
        Ok(Run {
            mode,
            base,
            out_dir,
            lambda,
            tol_gap,
            tol_feas,
            config,
        })
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.base.join(path)
    }

    /// The family and its claims, with any lambda override applied.
    pub fn family(&self) -> Result<(ModelFamily, Option<ClaimFamily>), CliError> {
        let (family, claims) = match (&self.config.input, &self.config.generator) {
            (Some(input), _) => {
                let path = self.resolve(input);
                let doc = load_document(&read_file(&path)?)
                    .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
                let family = match self.lambda {
                    Some(l) => doc.family.with_lambda(l)?,
                    None => doc.family,
                };
                (family, doc.claims)
            }
            (None, Some(spec)) => (generate(spec, self.lambda.unwrap_or(0.0))?, None),
            (None, None) => unreachable!("checked when loading"),
        };
        let claims = match self.config.claim {
            Some(spec) => Some(ClaimFamily::payoff(&family, |s| spec.payoff(s))?),
            None => claims,
        };
        Ok((family, claims))
    }

    pub fn corridor(&self) -> Result<(Bounds, Bounds), CliError> {
        match &self.config.corridor {
            Some(CorridorSpec::Inline { lower, upper }) => Ok((lower.clone(), upper.clone())),
            Some(CorridorSpec::File(path)) => {
                let path = self.resolve(path);
                let doc: CorridorFile = serde_json::from_slice(&read_file(&path)?)
                    .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
                Ok((doc.lower, doc.upper))
            }
            None => Err(CliError::Schema("config lacks \"corridor\"".into())),
        }
    }
}

/// Builds every model of the spec on one shared tree.
pub fn generate(spec: &GeneratorSpec, lambda: f64) -> Result<ModelFamily, CliError> {
    let built: Vec<(ScenarioTree, PriceField)> = match spec {
        GeneratorSpec::Binomial { levels, p_up, models } => models
            .iter()
            .map(|m| {
                let (tree, field) = build_binomial(*levels, m.s0, m.up, m.down, *p_up)?;
                Ok((tree, field.renamed(m.theta.clone())))
            })
            .collect::<Result<_, CliError>>()?,
        GeneratorSpec::Kernel {
            levels,
            increment,
            transform,
            models,
        } => models
            .iter()
            .map(|m| {
                let zero = vec![0.0; *levels];
                let mu = m.mu.as_deref().unwrap_or(&zero);
                let (tree, field) = m.kernel.build(*levels, mu, *increment, *transform)?;
                let prices = field.prices().iter().map(|p| p * m.scale).collect();
                let field = PriceField::new(&tree, m.theta.clone(), prices)?;
                Ok((tree, field))
            })
            .collect::<Result<_, CliError>>()?,
    };
    let mut built = built.into_iter();
    let (tree, first) = built
        .next()
        .ok_or_else(|| CliError::Schema("generator lists no models".into()))?;
    let mut fields = vec![first];
    for (other, field) in built {
        if other != tree {
            return Err(CliError::Schema(format!(
                "model {:?} is built on a different tree",
                field.theta
            )));
        }
        fields.push(field);
    }
    Ok(ModelFamily::new(tree, fields, lambda)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(text: &str) -> GeneratorSpec {
        serde_json::from_str(text).unwrap()
    }

    #[test]
    fn payoffs() {
        assert_eq!(ClaimSpec::Call { strike: 100.0 }.payoff(120.0), 20.0);
        assert_eq!(ClaimSpec::Call { strike: 100.0 }.payoff(80.0), 0.0);
        assert_eq!(ClaimSpec::Put { strike: 100.0 }.payoff(80.0), 20.0);
    }

    #[test]
    fn models_must_share_a_tree() {
        let mixed = spec(
            r#"{"type": "binomial", "levels": 2, "models": [
                {"theta": "a", "s0": 100, "up": 1.2, "down": 0.8},
                {"theta": "b", "s0": 90, "up": 1.1, "down": 0.9}]}"#,
        );
        let fam = generate(&mixed, 0.01).unwrap();
        assert_eq!(fam.fields().len(), 2);
        assert_eq!(fam.lambda(), 0.01);

        let uneven = spec(
            r#"{"type": "kernel", "levels": 2, "increment": 0.1, "models": [
                {"theta": "a", "kernel": {"type": "matrix", "values": [[1], [1, 2]]}},
                {"theta": "b", "kernel": {"type": "matrix", "values": [[1]]}}]}"#,
        );
        assert!(matches!(generate(&uneven, 0.0), Err(CliError::Schema(_))));
    }

    #[test]
    fn empty_generator_is_rejected() {
        let empty = spec(r#"{"type": "binomial", "levels": 1, "models": []}"#);
        assert!(matches!(generate(&empty, 0.0), Err(CliError::Schema(_))));
    }

    #[test]
    fn declared_mode_must_match() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(&path, r#"{"mode": "solve", "input": "x.json"}"#).unwrap();
        assert!(Run::load(&path, Mode::Solve, Overrides::default()).is_ok());
        assert!(Run::load(&path, Mode::CheckCps, Overrides::default()).is_err());
        let run = Run::load(
            &path,
            Mode::Solve,
            Overrides {
                tol_gap: Some(1e-4),
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(run.tol_gap, 1e-4);
        assert_eq!(run.resolve(Path::new("x.json")), dir.path().join("x.json"));
    }
}
