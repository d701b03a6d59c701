//! JSON scenario documents and the built-in catalogue.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::catalog;
use crate::constraints::{CertifyOptions, ConstraintFamily};
use crate::oracles::Oracle;
use crate::solver::{Perturbation, Refinement, SolverOptions};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PerturbationSpec {
    Zero,
    Gravity { g0: f64 },
    Affine { c: Vec<f64>, s: Vec<f64> },
}

impl PerturbationSpec {
    pub fn build(&self) -> Perturbation {
        match self {
            PerturbationSpec::Zero => Perturbation::Zero,
            PerturbationSpec::Gravity { g0 } => Perturbation::Gravity { g0: *g0 },
            PerturbationSpec::Affine { c, s } => Perturbation::Affine {
                c: c.clone(),
                s: s.clone(),
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplerSpec {
    /// Number of quasi-random initial values drawn from `C(0)`.
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Point(Vec<f64>),
    Sampler(SamplerSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RefineSpec {
    pub breakpoints: Vec<f64>,
    pub levels: usize,
}

fn default_budget() -> usize {
    SolverOptions::default().certify_budget
}

fn default_gamma() -> f64 {
    CertifyOptions::default().gamma
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    pub n_steps: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tol: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_budget")]
    pub certify_budget: usize,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heal_radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<RefineSpec>,
}

impl SolverSpec {
    pub fn options(&self) -> SolverOptions {
        SolverOptions {
            n_steps: self.n_steps,
            tol: self.tol,
            seed: self.seed,
            refine: self.refine.as_ref().map(|r| Refinement {
                breakpoints: r.breakpoints.clone(),
                levels: r.levels,
            }),
            certify_budget: self.certify_budget,
            gamma: self.gamma,
            heal_radius: self.heal_radius,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputKind {
    Trajectory,
    Residuals,
    Metadata,
    Endpoints,
    Convergence,
}

/// A complete run description.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub family: ConstraintFamily,
    pub perturbation: PerturbationSpec,
    pub x0: InitialSpec,
    pub solver: SolverSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oracle: Option<Oracle>,
    /// Grid sizes for `converge`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<usize>>,
    #[serde(default = "all_outputs")]
    pub outputs: Vec<OutputKind>,
}

fn all_outputs() -> Vec<OutputKind> {
    vec![
        OutputKind::Trajectory,
        OutputKind::Residuals,
        OutputKind::Metadata,
        OutputKind::Endpoints,
        OutputKind::Convergence,
    ]
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("invalid scenario: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("no scenario file or built-in named {0:?} (built-ins: {list})", list = BUILTIN_NAMES.join(", "))]
    Unknown(String),
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serialises")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        self.family
            .validate()
            .map_err(|e| ScenarioError::Invalid(e.to_string()))?;
        match &self.x0 {
            InitialSpec::Point(p) if p.len() != self.family.dim => {
                return bad(format!(
                    "x0 has dimension {}, family has {}",
                    p.len(),
                    self.family.dim
                ))
            }
            InitialSpec::Point(p) if p.iter().any(|v| !v.is_finite()) => {
                return bad("x0 is not finite".into())
            }
            InitialSpec::Sampler(s) if s.count == 0 => {
                return bad("sampler count must be positive".into())
            }
            _ => {}
        }
        if self.solver.n_steps < 2 {
            return bad(format!("n_steps must be at least 2, got {}", self.solver.n_steps));
        }
        if let Some(tol) = self.solver.tol {
            if !(tol > 0.0 && tol.is_finite()) {
                return bad(format!("tol must be positive, got {tol}"));
            }
        }
        if !(self.solver.gamma > 0.0 && self.solver.gamma.is_finite()) {
            return bad(format!("gamma must be positive, got {}", self.solver.gamma));
        }
        Ok(())
    }

    /// Reads `arg` as a file if it exists, otherwise as a built-in name.
    pub fn load(arg: &str) -> Result<Self, ScenarioError> {
        let path = Path::new(arg);
        if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
                path: arg.to_string(),
                source,
            })?;
            return Self::from_json(&text);
        }
        builtin(arg).ok_or_else(|| ScenarioError::Unknown(arg.to_string()))
    }

    pub fn horizon(&self) -> f64 {
        self.family.horizon
    }

    pub fn wants(&self, kind: OutputKind) -> bool {
        self.outputs.contains(&kind)
    }
}

pub const BUILTIN_NAMES: [&str; 6] = [
    "example1",
    "example2-interior",
    "example3",
    "example4",
    "shell",
    "static-square",
];

fn solver(n_steps: usize) -> SolverSpec {
    SolverSpec {
        n_steps,
        tol: None,
        seed: 0,
        certify_budget: default_budget(),
        gamma: default_gamma(),
        heal_radius: None,
        refine: None,
    }
}

const N_LIST: [usize; 4] = [250, 500, 1000, 2000];

pub fn builtin(name: &str) -> Option<Scenario> {
    let base = |family, perturbation, x0, solver, oracle, n_list: Option<Vec<usize>>| Scenario {
        name: name.to_string(),
        family,
        perturbation,
        x0,
        solver,
        oracle,
        n_list,
        outputs: all_outputs(),
    };
    Some(match name {
        "example1" => base(
            catalog::corner_family(3.0),
            PerturbationSpec::Zero,
            InitialSpec::Point(vec![0.0, 0.0]),
            solver(1000),
            Some(Oracle::Example1),
            Some(N_LIST.to_vec()),
        ),
        "example2-interior" => base(
            catalog::corner_family(3.0),
            PerturbationSpec::Zero,
            InitialSpec::Point(vec![0.5, 1.0]),
            solver(3000),
            Some(Oracle::Example2 { x0: [0.5, 1.0] }),
            Some(N_LIST.to_vec()),
        ),
        "example3" => base(
            catalog::corner_family(1.0),
            PerturbationSpec::Gravity { g0: 9.8 },
            InitialSpec::Point(vec![0.0, 1.0]),
            solver(3000),
            Some(Oracle::Example3 {
                x0: [0.0, 1.0],
                g0: 9.8,
            }),
            Some(N_LIST.to_vec()),
        ),
        "example4" => base(
            catalog::capped_corner_family(),
            PerturbationSpec::Zero,
            InitialSpec::Sampler(SamplerSpec { count: 100, seed: 0 }),
            solver(3000),
            None,
            None,
        ),
        "shell" => base(
            catalog::shell_family(),
            PerturbationSpec::Zero,
            InitialSpec::Point(vec![1.5, 0.0]),
            SolverSpec {
                gamma: 1.0,
                ..solver(100)
            },
            None,
            None,
        ),
        "static-square" => base(
            catalog::unit_square_family(1.0),
            PerturbationSpec::Zero,
            InitialSpec::Point(vec![0.3, -0.4]),
            solver(100),
            None,
            None,
        ),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_round_trip() {
        for name in BUILTIN_NAMES {
            let s = builtin(name).unwrap();
            s.validate().unwrap();
            let json = s.to_json();
            let back = Scenario::from_json(&json).unwrap();
            assert_eq!(back, s);
            assert_eq!(back.to_json(), json);
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut v: serde_json::Value =
            serde_json::from_str(&builtin("example1").unwrap().to_json()).unwrap();
        v["colour"] = serde_json::json!("red");
        assert!(Scenario::from_json(&v.to_string()).is_err());

        let mut v: serde_json::Value =
            serde_json::from_str(&builtin("example1").unwrap().to_json()).unwrap();
        v["solver"]["n_step"] = serde_json::json!(3);
        assert!(Scenario::from_json(&v.to_string()).is_err());

        let mut v: serde_json::Value =
            serde_json::from_str(&builtin("example1").unwrap().to_json()).unwrap();
        v["family"]["constraints"][0]["pieces"][0]["affine"]["slope"] = serde_json::json!(1.0);
        assert!(Scenario::from_json(&v.to_string()).is_err());

        let mut v: serde_json::Value =
            serde_json::from_str(&builtin("example3").unwrap().to_json()).unwrap();
        v["perturbation"]["g1"] = serde_json::json!(1.0);
        assert!(Scenario::from_json(&v.to_string()).is_err());
    }

    #[test]
    fn full_precision_numbers_survive() {
        let mut s = builtin("example2-interior").unwrap();
        s.x0 = InitialSpec::Point(vec![0.1 + 0.2, 1.0 / 3.0]);
        s.solver.tol = Some(1.234_567_890_123_456_7e-9);
        let back = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn validation() {
        let mut s = builtin("example1").unwrap();
        s.x0 = InitialSpec::Point(vec![0.0]);
        assert!(s.validate().is_err());
        let mut s = builtin("example1").unwrap();
        s.solver.n_steps = 1;
        assert!(s.validate().is_err());
        assert!(matches!(Scenario::load("no-such-scenario"), Err(ScenarioError::Unknown(_))));
        assert!(Scenario::load("example4").is_ok());
    }
}
