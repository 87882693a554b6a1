//! Run configuration: a TOML file with one section per command.

use std::path::{Path, PathBuf};

use biharm_core::fields::{FieldPair, ScalarField, ScalarPreset, VectorField, VectorPreset};
use biharm_core::inversion::{LambdaRule, LatticeSpec, PhysicalGrid};
use biharm_core::vec3::{self, Vec3};
use serde::{Deserialize, Serialize};
use toml::Spanned;

use crate::error::CliError;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seed for every random draw in the run.
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    pub pair: PairConfig,
    /// Ground truth for reconstruction error summaries.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<PairConfig>,
    #[serde(default)]
    pub oracle: OracleConfig,
    #[serde(default)]
    pub forward: ForwardConfig,
    #[serde(default)]
    pub invert: InvertConfig,
    #[serde(default)]
    pub gauge: GaugeConfig,
    #[serde(default)]
    pub stability: StabilityConfig,
    #[serde(default)]
    pub scaling: ScalingConfig,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

/// Field pair as lists of presets; `A` and `V` are the sums of their entries.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairConfig {
    #[serde(default)]
    pub a: Vec<Spanned<VectorPreset>>,
    #[serde(default)]
    pub v: Vec<Spanned<ScalarPreset>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Born,
    Asymptotic,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleConfig {
    pub kind: OracleKind,
    /// Relative noise level; zero for clean data.
    pub noise_level: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            kind: OracleKind::Born,
            noise_level: 0.0,
        }
    }
}

/// Outgoing/incoming direction pair, normalized when used.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Directions {
    pub omega: Vec3,
    pub theta: Vec3,
}

impl Directions {
    /// `(ω, θ)` scaled to unit length.
    pub fn unit(&self) -> Option<(Vec3, Vec3)> {
        Some((vec3::normalize(self.omega)?, vec3::normalize(self.theta)?))
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ForwardConfig {
    pub directions: Vec<Directions>,
    pub lambdas: Vec<f64>,
}

impl Default for ForwardConfig {
    fn default() -> Self {
        ForwardConfig {
            directions: vec![
                Directions {
                    omega: [0.0, 0.0, 1.0],
                    theta: [0.0, 0.0, 1.0],
                },
                Directions {
                    omega: [0.0, 1.0, 0.0],
                    theta: [1.0, 0.0, 0.0],
                },
            ],
            lambdas: vec![8.0, 16.0, 32.0, 64.0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InvertConfig {
    /// Half-width `K` of the spectral lattice.
    pub k: f64,
    /// Points `N` per lattice axis.
    pub n: usize,
    pub lambda_floor: f64,
    pub lambda_factor: f64,
    pub grid_half_extent: f64,
    pub grid_points: usize,
}

impl Default for InvertConfig {
    fn default() -> Self {
        InvertConfig {
            k: 8.0,
            n: 33,
            lambda_floor: 16.0,
            lambda_factor: 4.0,
            grid_half_extent: 3.0,
            grid_points: 25,
        }
    }
}

impl InvertConfig {
    pub fn rule(&self) -> LambdaRule {
        LambdaRule {
            floor: self.lambda_floor,
            factor: self.lambda_factor,
        }
    }

    pub fn grid(&self) -> PhysicalGrid {
        PhysicalGrid {
            half_extent: self.grid_half_extent,
            points: self.grid_points,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GaugeConfig {
    pub generators: Vec<Spanned<ScalarPreset>>,
    pub theta: Vec3,
    /// Distance of the trace plane beyond the gauged pair's support.
    pub clearance: f64,
    pub lambdas: Vec<f64>,
}

impl Default for GaugeConfig {
    fn default() -> Self {
        GaugeConfig {
            generators: Vec::new(),
            theta: [0.0, 0.0, 1.0],
            clearance: 0.25,
            lambdas: vec![8.0, 16.0, 32.0, 64.0],
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StabilityConfig {
    pub xis: Vec<Vec3>,
    pub epsilons: Vec<f64>,
    /// Sweep frequencies as multiples of `ε^{-1/2}`.
    pub factors: Vec<f64>,
    /// Noise draws averaged per sweep point; seeds follow the run seed.
    pub draws: u64,
}

impl Default for StabilityConfig {
    fn default() -> Self {
        StabilityConfig {
            xis: vec![
                [0.5, 0.0, 0.0],
                [0.0, 1.0, 0.5],
                [1.0, -1.0, 0.5],
                [-0.5, 1.5, 1.0],
                [2.0, 0.5, -1.0],
                [0.3, 0.3, 0.3],
            ],
            epsilons: vec![1e-2, 1e-3, 1e-4],
            factors: vec![0.25, 0.5, 1.0, 2.0, 4.0],
            draws: 4,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScalingConfig {
    pub directions: Vec<Directions>,
    pub lambdas: Vec<f64>,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            directions: vec![
                Directions {
                    omega: [0.012, 0.2, 1.0],
                    theta: [0.0, 0.2, 1.0],
                },
                Directions {
                    omega: [1.0, 0.015, 0.1],
                    theta: [1.0, 0.0, 0.1],
                },
            ],
            lambdas: vec![8.0, 16.0, 32.0, 64.0],
        }
    }
}

/// Pass/fail thresholds for the verdicts.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Largest relative L² reconstruction error.
    pub reconstruction_l2: f64,
    /// Largest admissible near-field decay exponent.
    pub gauge_exponent: f64,
    /// Pointwise agreement of the gauge invariants.
    pub gauge_agreement: f64,
    pub scaling_slope: [f64; 2],
    pub sqrt_exponent: f64,
    pub sqrt_exponent_tolerance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            reconstruction_l2: 0.1,
            gauge_exponent: -2.7,
            gauge_agreement: 1e-9,
            scaling_slope: [-1.6, -0.7],
            sqrt_exponent: 0.5,
            sqrt_exponent_tolerance: 0.15,
        }
    }
}

/// A parsed configuration together with its source, for error locations.
pub struct LoadedConfig {
    pub config: RunConfig,
    source: String,
    path: PathBuf,
}

impl LoadedConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig, CliError> {
        let source = std::fs::read_to_string(path).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: format!("cannot read file: {e}"),
        })?;
        Self::parse(source, path)
    }

    pub fn parse(source: String, path: &Path) -> Result<LoadedConfig, CliError> {
        let config: RunConfig = toml::from_str(&source).map_err(|e| CliError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        let loaded = LoadedConfig {
            config,
            source,
            path: path.to_path_buf(),
        };
        loaded.validate()?;
        Ok(loaded)
    }

    fn error_at(
        &self,
        offset: Option<usize>,
        field: &str,
        message: impl std::fmt::Display,
    ) -> CliError {
        let location = match offset {
            Some(o) => {
                let line = self.source[..o.min(self.source.len())]
                    .matches('\n')
                    .count()
                    + 1;
                format!("line {line}, field `{field}`")
            }
            None => format!("field `{field}`"),
        };
        CliError::Config {
            path: self.path.clone(),
            message: format!("{location}: {message}"),
        }
    }

    /// Byte offset of `key = ...` inside `[section]`.
    fn locate(&self, section: &str, key: &str) -> Option<usize> {
        let mut current = String::new();
        let mut offset = 0;
        for line in self.source.split_inclusive('\n') {
            let t = line.trim();
            if t.starts_with('[') {
                current = t.trim_matches(|c| c == '[' || c == ']').trim().to_string();
            } else if current == section {
                if let Some((k, _)) = t.split_once('=') {
                    if k.trim() == key {
                        return Some(offset + line.find(key).unwrap_or(0));
                    }
                }
            }
            offset += line.len();
        }
        None
    }

    pub fn check(&self, ok: bool, section: &str, key: &str, message: &str) -> Result<(), CliError> {
        if ok {
            Ok(())
        } else {
            let field = if section.is_empty() {
                key.to_string()
            } else {
                format!("{section}.{key}")
            };
            Err(self.error_at(self.locate(section, key), &field, message))
        }
    }

    fn validate(&self) -> Result<(), CliError> {
        let c = &self.config;
        self.build_pair(&c.pair, "pair")?;
        if let Some(t) = &c.truth {
            self.build_pair(t, "truth")?;
        }
        for (i, g) in c.gauge.generators.iter().enumerate() {
            self.build_scalar(g, &format!("gauge.generators[{i}]"))?;
        }
        let positive = |v: &[f64]| !v.is_empty() && v.iter().all(|x| *x > 0.0 && x.is_finite());
        self.check(
            c.oracle.noise_level >= 0.0 && c.oracle.noise_level.is_finite(),
            "oracle",
            "noise_level",
            "must be a finite non-negative number",
        )?;
        self.check(
            positive(&c.forward.lambdas),
            "forward",
            "lambdas",
            "needs positive frequencies",
        )?;
        self.check(
            !c.forward.directions.is_empty(),
            "forward",
            "directions",
            "needs at least one direction pair",
        )?;
        let inv = &c.invert;
        self.check(
            LatticeSpec::new(inv.k, inv.n).is_ok(),
            "invert",
            "n",
            "lattice needs k > 0 and an odd point count of at least 3",
        )?;
        self.check(
            inv.lambda_floor > 0.0,
            "invert",
            "lambda_floor",
            "must be positive",
        )?;
        self.check(
            inv.lambda_factor >= 1.0,
            "invert",
            "lambda_factor",
            "must be at least 1",
        )?;
        self.check(
            inv.grid_half_extent > 0.0,
            "invert",
            "grid_half_extent",
            "must be positive",
        )?;
        self.check(
            inv.grid_points >= 2,
            "invert",
            "grid_points",
            "must be at least 2",
        )?;
        self.check(
            vec3::normalize(c.gauge.theta).is_some(),
            "gauge",
            "theta",
            "must be nonzero",
        )?;
        self.check(
            c.gauge.clearance > 0.0,
            "gauge",
            "clearance",
            "must be positive",
        )?;
        self.check(
            positive(&c.gauge.lambdas) && c.gauge.lambdas.len() >= 2,
            "gauge",
            "lambdas",
            "needs at least two positive frequencies",
        )?;
        let st = &c.stability;
        self.check(
            !st.xis.is_empty() && st.xis.iter().all(|x| vec3::norm(*x) > 0.0),
            "stability",
            "xis",
            "needs nonzero samples",
        )?;
        self.check(
            positive(&st.epsilons),
            "stability",
            "epsilons",
            "needs positive noise targets",
        )?;
        self.check(
            positive(&st.factors),
            "stability",
            "factors",
            "needs positive factors",
        )?;
        self.check(st.draws >= 1, "stability", "draws", "must be at least 1")?;
        self.check(
            c.scaling.lambdas.len() >= 4 && positive(&c.scaling.lambdas),
            "scaling",
            "lambdas",
            "needs at least four positive frequencies",
        )?;
        self.check(
            !c.scaling.directions.is_empty(),
            "scaling",
            "directions",
            "needs at least one direction pair",
        )?;
        for (section, dirs) in [
            ("forward", &c.forward.directions),
            ("scaling", &c.scaling.directions),
        ] {
            self.check(
                dirs.iter().all(|d| d.unit().is_some()),
                section,
                "directions",
                "directions must be nonzero",
            )?;
        }
        Ok(())
    }

    fn build_scalar(
        &self,
        p: &Spanned<ScalarPreset>,
        field: &str,
    ) -> Result<ScalarField, CliError> {
        p.get_ref()
            .build()
            .map_err(|e| self.error_at(Some(p.span().start), field, e))
    }

    fn build_vector(
        &self,
        p: &Spanned<VectorPreset>,
        field: &str,
    ) -> Result<VectorField, CliError> {
        p.get_ref()
            .build()
            .map_err(|e| self.error_at(Some(p.span().start), field, e))
    }

    pub fn build_pair(&self, pair: &PairConfig, name: &str) -> Result<FieldPair, CliError> {
        let mut a = VectorField::zero();
        for (i, p) in pair.a.iter().enumerate() {
            a = a.plus(self.build_vector(p, &format!("{name}.a[{i}]"))?);
        }
        let v = pair
            .v
            .iter()
            .enumerate()
            .map(|(i, p)| self.build_scalar(p, &format!("{name}.v[{i}]")))
            .collect::<Result<_, _>>()?;
        Ok(FieldPair::new(a, ScalarField::Sum(v)))
    }

    pub fn generators(&self) -> Result<Vec<ScalarField>, CliError> {
        self.config
            .gauge
            .generators
            .iter()
            .enumerate()
            .map(|(i, g)| self.build_scalar(g, &format!("gauge.generators[{i}]")))
            .collect()
    }
}
