//! On-disk formats: model configuration files and property files.
//!
//! # Model configuration (TOML)
//!
//! ```toml
//! name = "demo"
//!
//! [[parameters]]
//! name = "k1"
//! bounds = [0.0, 5.0]
//! proposal_sigma = 0.02      # optional
//!
//! [[states]]
//! name = "x"
//! initial = 1.0
//! equation = "-k1*x + u"     # states, parameters, inputs, `t`
//!
//! inputs = ["u"]             # optional; omit for autonomous systems
//!
//! [[observables]]
//! name = "y"
//! scale = 1.0                # optional, defaults to 1
//! coefficients = { x = 1.0 }
//!
//! [[conditions]]             # one entry per named input course
//! name = "pulse"
//! [conditions.signals.u]
//! interpolation = "linear"   # or "constant"
//! points = [[0.0, 0.0], [5.0, 2.0]]
//!
//! [grid]
//! times = [0.0, 1.0, 2.0]
//! ```
//!
//! Parsing, building and re-serializing a configuration is lossless.
//!
//! # Property files
//!
//! One property per line, `#` comments allowed:
//!
//! ```text
//! name: r, delta, condition, formula-text
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bltl::{self, Formula};
use crate::model::{
    CompiledField, Condition, ExprError, InputSignal, Interpolation, ModelError, Observable,
    OdeSystem, ParameterSpace, TimeGrid,
};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("reading {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("parsing {path}: {source}")]
    Toml { path: String, source: Box<toml::de::Error> },
    #[error("serializing configuration: {0}")]
    TomlSer(#[from] toml::ser::Error),
    #[error("state {state:?} equation: {source}")]
    Equation { state: String, source: ExprError },
    #[error("observable {observable:?} references unknown state {state:?}")]
    UnknownObservableState { observable: String, state: String },
    #[error("condition {condition:?} is missing a signal for input {input:?}")]
    MissingSignal { condition: String, input: String },
    #[error("condition {condition:?} has a signal for unknown input {input:?}")]
    UnknownSignalInput { condition: String, input: String },
    #[error("signal interpolation must be \"linear\" or \"constant\", got {0:?}")]
    BadInterpolation(String),
    #[error("duplicate name {0:?}")]
    DuplicateName(String),
    #[error("a model with inputs needs at least one condition")]
    NoConditions,
    #[error("{path}:{line}: property entry needs `name: r, delta, condition, formula`")]
    PropertyShape { path: String, line: usize },
    #[error("{path}:{line}: {field} is not a number: {value:?}")]
    PropertyNumber { path: String, line: usize, field: &'static str, value: String },
    #[error("property {name:?}: {source}")]
    PropertyFormula { name: String, source: bltl::ParseError },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParameterEntry {
    pub name: String,
    pub bounds: [f64; 2],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub proposal_sigma: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateEntry {
    pub name: String,
    pub initial: f64,
    pub equation: String,
}

fn default_scale() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObservableEntry {
    pub name: String,
    #[serde(default = "default_scale")]
    pub scale: f64,
    pub coefficients: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalEntry {
    pub interpolation: String,
    pub points: Vec<[f64; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionEntry {
    pub name: String,
    pub signals: BTreeMap<String, SignalEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridEntry {
    pub times: Vec<f64>,
}

/// Complete model description as stored on disk. Top-level scalars (`name`,
/// `inputs`) come before the table arrays so the serialized form is valid
/// TOML; unknown keys are rejected, since a misplaced key silently attaching
/// to the preceding table is the easiest configuration mistake to make.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub name: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub inputs: Vec<String>,
    pub parameters: Vec<ParameterEntry>,
    pub states: Vec<StateEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub observables: Vec<ObservableEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub conditions: Vec<ConditionEntry>,
    pub grid: GridEntry,
}

/// A model configuration compiled into runnable pieces.
pub struct BuiltModel {
    pub system: OdeSystem,
    pub space: ParameterSpace,
    pub parameter_names: Vec<String>,
    /// Per-parameter proposal sigmas, if the file provides all of them.
    pub proposal_sigmas: Option<Vec<f64>>,
    pub grid: TimeGrid,
}

fn check_distinct<'a>(names: impl Iterator<Item = &'a str>) -> Result<(), ConfigError> {
    let mut seen = Vec::new();
    for name in names {
        if seen.contains(&name) {
            return Err(ConfigError::DuplicateName(name.to_string()));
        }
        seen.push(name);
    }
    Ok(())
}

impl ModelConfig {
    pub fn from_toml_str(text: &str, path: &str) -> Result<Self, ConfigError> {
        toml::from_str(text)
            .map_err(|source| ConfigError::Toml { path: path.to_string(), source: Box::new(source) })
    }

    pub fn to_toml_string(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string_pretty(self)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ConfigError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ConfigError> {
        let path = path.as_ref();
        fs::write(path, self.to_toml_string()?).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })
    }

    /// Compile the configuration into a runnable system, parameter box and
    /// grid. Equations are compiled once here.
    pub fn build(&self) -> Result<BuiltModel, ConfigError> {
        let state_names: Vec<String> = self.states.iter().map(|s| s.name.clone()).collect();
        let parameter_names: Vec<String> =
            self.parameters.iter().map(|p| p.name.clone()).collect();
        check_distinct(
            state_names
                .iter()
                .chain(&parameter_names)
                .chain(&self.inputs)
                .map(String::as_str),
        )?;

        let space = ParameterSpace::new(
            self.parameters.iter().map(|p| (p.bounds[0], p.bounds[1])).collect(),
        )?;
        let proposal_sigmas: Option<Vec<f64>> =
            self.parameters.iter().map(|p| p.proposal_sigma).collect();

        let equations: Vec<String> = self.states.iter().map(|s| s.equation.clone()).collect();
        let field =
            CompiledField::compile(&equations, &state_names, &parameter_names, &self.inputs)
                .map_err(|source| {
                    // Recompile one-by-one to name the offending state.
                    let scope =
                        crate::model::Scope::new(&state_names, &parameter_names, &self.inputs);
                    for state in &self.states {
                        if let Err(e) = crate::model::compile_expression(&state.equation, &scope) {
                            return ConfigError::Equation { state: state.name.clone(), source: e };
                        }
                    }
                    ConfigError::Equation { state: String::new(), source }
                })?;

        let mut observables = Vec::with_capacity(self.observables.len());
        for entry in &self.observables {
            let mut coeffs = Vec::with_capacity(entry.coefficients.len());
            for (state, &value) in &entry.coefficients {
                let index = state_names.iter().position(|n| n == state).ok_or_else(|| {
                    ConfigError::UnknownObservableState {
                        observable: entry.name.clone(),
                        state: state.clone(),
                    }
                })?;
                coeffs.push((index, value));
            }
            observables.push(Observable { name: entry.name.clone(), scale: entry.scale, coeffs });
        }

        if !self.inputs.is_empty() && self.conditions.is_empty() {
            return Err(ConfigError::NoConditions);
        }
        let mut conditions = Vec::with_capacity(self.conditions.len());
        for entry in &self.conditions {
            for input in entry.signals.keys() {
                if !self.inputs.contains(input) {
                    return Err(ConfigError::UnknownSignalInput {
                        condition: entry.name.clone(),
                        input: input.clone(),
                    });
                }
            }
            let mut signals = Vec::with_capacity(self.inputs.len());
            for input in &self.inputs {
                let signal = entry.signals.get(input).ok_or_else(|| {
                    ConfigError::MissingSignal {
                        condition: entry.name.clone(),
                        input: input.clone(),
                    }
                })?;
                let interpolation = match signal.interpolation.as_str() {
                    "linear" => Interpolation::Linear,
                    "constant" => Interpolation::Constant,
                    other => return Err(ConfigError::BadInterpolation(other.to_string())),
                };
                signals.push(InputSignal::new(
                    signal.points.iter().map(|p| (p[0], p[1])).collect(),
                    interpolation,
                )?);
            }
            conditions.push(Condition { name: entry.name.clone(), signals });
        }

        let initial_state: Vec<f64> = self.states.iter().map(|s| s.initial).collect();
        let system = OdeSystem::new(
            state_names,
            initial_state,
            self.parameters.len(),
            self.inputs.clone(),
            Arc::new(field),
            observables,
            conditions,
        )?;
        let grid = TimeGrid::new(self.grid.times.clone())?;
        Ok(BuiltModel { system, space, parameter_names, proposal_sigmas, grid })
    }
}

/// One entry of a property file.
#[derive(Debug, Clone, PartialEq)]
pub struct PropertyEntry {
    pub name: String,
    pub r: f64,
    pub delta: f64,
    /// Input condition the property is verified under.
    pub condition: String,
    pub formula_text: String,
}

impl PropertyEntry {
    pub fn compile(&self, state_names: &[String]) -> Result<Formula, ConfigError> {
        bltl::parse(&self.formula_text, state_names).map_err(|source| {
            ConfigError::PropertyFormula { name: self.name.clone(), source }
        })
    }
}

/// Parse a property file: `name: r, delta, condition, formula` per line.
pub fn parse_properties(text: &str, path: &str) -> Result<Vec<PropertyEntry>, ConfigError> {
    let mut entries = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let shape_err = || ConfigError::PropertyShape { path: path.to_string(), line: line_no };
        let (name, rest) = line.split_once(':').ok_or_else(shape_err)?;
        let mut fields = rest.splitn(4, ',').map(str::trim);
        let r_text = fields.next().ok_or_else(shape_err)?;
        let delta_text = fields.next().ok_or_else(shape_err)?;
        let condition = fields.next().ok_or_else(shape_err)?;
        let formula_text = fields.next().ok_or_else(shape_err)?;
        if condition.is_empty() || formula_text.is_empty() {
            return Err(shape_err());
        }
        let number = |field: &'static str, value: &str| -> Result<f64, ConfigError> {
            value.parse::<f64>().map_err(|_| ConfigError::PropertyNumber {
                path: path.to_string(),
                line: line_no,
                field,
                value: value.to_string(),
            })
        };
        entries.push(PropertyEntry {
            name: name.trim().to_string(),
            r: number("r", r_text)?,
            delta: number("delta", delta_text)?,
            condition: condition.to_string(),
            formula_text: formula_text.to_string(),
        });
    }
    Ok(entries)
}

/// Load a property file from disk.
pub fn load_properties(path: impl AsRef<Path>) -> Result<Vec<PropertyEntry>, ConfigError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_properties(&text, &path.display().to_string())
}
