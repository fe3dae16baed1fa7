use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::geometry::ManifoldKind;
use crate::solver::SolveMethod;

/// Environment variable that overrides the configured output directory.
pub const OUT_ENV: &str = "GFD_OUT";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeVariant {
    /// Identity row at x₀ in place of the PDE row.
    Naive,
    /// Proper system everywhere, then subtract the value at x₀.
    TwoStep,
    /// Identity rows on the cap of radius 2h^γ.
    Cap,
    /// Auxiliary system with unit right-hand side.
    W,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExactSolution {
    /// `u ≡ 0` on the circle with the constant forcing `f^h = h` and proper
    /// weights `h(1 + x)`.
    CircleZero,
    /// `u = z − z(x₀)` on the sphere with `f = −2z`.
    SphereZ,
    /// `u = sin 2πx · sin 2πy` on the flat torus with `f = −8π² u`.
    TorusSine,
}

impl ExactSolution {
    pub fn manifold(self) -> ManifoldKind {
        match self {
            ExactSolution::CircleZero => ManifoldKind::Circle1,
            ExactSolution::SphereZ => ManifoldKind::Sphere2,
            ExactSolution::TorusSine => ManifoldKind::FlatTorus2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilChoice {
    /// Closed-form wide stencil on circle grids of size 4^k, synthesized
    /// otherwise.
    Auto,
    ClosedForm,
    Synthesized,
}

/// Orders for the gradient measurements on the circle: a narrow stencil with
/// `r = h` and a wide one with `r = h^{p/(β+1)}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradientSettings {
    pub p: f64,
    pub beta: f64,
    /// Prefactor `C` in the wide radius `C h^{p/(β+1)}`.
    #[serde(default = "unit")]
    pub radius_scale: f64,
}

fn unit() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub manifold: ManifoldKind,
    pub resolutions: Vec<usize>,
    pub scheme: SchemeVariant,
    /// Cap exponent; `α/3` when absent.
    #[serde(default)]
    pub gamma: Option<f64>,
    /// Consistency order; fitted from the stencil truncation when absent.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default)]
    pub gradient: Option<GradientSettings>,
    pub exact: ExactSolution,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Compute barrier diagnostics at every resolution.
    #[serde(default)]
    pub barrier: bool,
    #[serde(default = "default_stencil")]
    pub stencil: StencilChoice,
    #[serde(default = "default_solver")]
    pub solver: SolveMethod,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("gfd-out")
}

fn default_stencil() -> StencilChoice {
    StencilChoice::Auto
}

fn default_solver() -> SolveMethod {
    SolveMethod::Auto
}

pub const BUILTINS: [&str; 4] = ["torus1d-twostep", "torus1d-naive", "torus1d-w", "sphere-laplace"];

fn powers_of_four(lo: u32, hi: u32) -> Vec<usize> {
    (lo..=hi).map(|k| 4usize.pow(k)).collect()
}

impl ExperimentConfig {
    fn circle(name: &str, scheme: SchemeVariant, resolutions: Vec<usize>) -> Self {
        ExperimentConfig {
            name: name.into(),
            manifold: ManifoldKind::Circle1,
            resolutions,
            scheme,
            gamma: None,
            alpha: None,
            gradient: None,
            exact: ExactSolution::CircleZero,
            output_dir: default_output_dir(),
            seed: 0,
            barrier: false,
            stencil: StencilChoice::Auto,
            solver: SolveMethod::Auto,
        }
    }

    /// One of [`BUILTINS`].
    pub fn builtin(name: &str) -> Result<Self> {
        let cfg = match name {
            "torus1d-twostep" => ExperimentConfig {
                gradient: Some(GradientSettings { p: 0.5, beta: 2.0, radius_scale: 1.0 }),
                ..Self::circle(name, SchemeVariant::TwoStep, powers_of_four(2, 7))
            },
            "torus1d-naive" => Self::circle(name, SchemeVariant::Naive, powers_of_four(2, 7)),
            "torus1d-w" => Self::circle(name, SchemeVariant::W, powers_of_four(2, 6)),
            "sphere-laplace" => ExperimentConfig {
                name: name.into(),
                manifold: ManifoldKind::Sphere2,
                resolutions: vec![500, 1000, 2000, 4000],
                scheme: SchemeVariant::Cap,
                gamma: None,
                alpha: None,
                gradient: None,
                exact: ExactSolution::SphereZ,
                output_dir: default_output_dir(),
                seed: 0,
                barrier: true,
                stencil: StencilChoice::Synthesized,
                solver: SolveMethod::Auto,
            },
            other => return invalid(format!("unknown builtin `{other}`; known: {}", BUILTINS.join(", "))),
        };
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.resolutions.is_empty() {
            return invalid("no resolutions given");
        }
        if self.resolutions.windows(2).any(|w| w[0] >= w[1]) {
            return invalid("resolutions must be strictly increasing");
        }
        if self.exact.manifold() != self.manifold {
            return invalid(format!(
                "exact solution `{:?}` lives on {}, config names {}",
                self.exact,
                self.exact.manifold().name(),
                self.manifold.name()
            ));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) {
                return invalid("γ must be positive");
            }
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0 && a <= 2.0) {
                return invalid("α must lie in (0, 2]");
            }
        }
        if let Some(g) = self.gradient {
            if !(g.p > 0.0 && g.beta > 0.0 && g.radius_scale > 0.0) {
                return invalid("gradient orders must be positive");
            }
        }
        Ok(())
    }

    /// `GFD_OUT` if set, the configured directory otherwise.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        for name in BUILTINS {
            ExperimentConfig::builtin(name).unwrap().validate().unwrap();
        }
        assert!(ExperimentConfig::builtin("nope").is_err());
    }

    #[test]
    fn json_roundtrip_and_defaults() {
        let cfg = ExperimentConfig::builtin("sphere-laplace").unwrap();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
        let minimal = r#"{"name":"m","manifold":"circle1","resolutions":[16,64,256],
            "scheme":"two_step","exact":"circle-zero"}"#;
        let m = ExperimentConfig::from_json(minimal).unwrap();
        assert_eq!(m.seed, 0);
        assert_eq!(m.solver, SolveMethod::Auto);
        assert!(!m.barrier);
    }

    #[test]
    fn rejects_bad_configs() {
        let unordered = r#"{"name":"m","manifold":"circle1","resolutions":[64,16],
            "scheme":"naive","exact":"circle-zero"}"#;
        assert!(ExperimentConfig::from_json(unordered).is_err());
        let mismatch = r#"{"name":"m","manifold":"sphere2","resolutions":[500],
            "scheme":"cap","exact":"circle-zero"}"#;
        assert!(ExperimentConfig::from_json(mismatch).is_err());
        let unknown = r#"{"name":"m","manifold":"circle1","resolutions":[16],
            "scheme":"cap","exact":"circle-zero","colour":1}"#;
        assert!(ExperimentConfig::from_json(unknown).is_err());
    }
}
