//! JSON problem files for the command line.
//!
//! ```json
//! {
//!   "version": 1,
//!   "loss": {"loss": "huber", "delta": 1.0},
//!   "task": "regression",
//!   "target": "price",
//!   "features": ["x0", "x1"],
//!   "sets": {"kind": "ball", "norm": "L2", "radius": 0.1},
//!   "common": [{"type": "box", "l": [0, 0], "u": [1, 1]}],
//!   "theta": {"dim": 2, "constraints": []}
//! }
//! ```
//!
//! Schema errors carry a JSON pointer to the offending value.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::data::{load_csv, Dataset};
use crate::error::{RermError, Result};
use crate::loss::LossSpec;
use crate::rerm::RermProblem;
use crate::set::{Norm, Primitive, SetExpr};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Regression,
    /// Targets are labels in {-1, +1}.
    Classification,
}

/// How each datapoint's uncertainty set is built from its row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SetTemplate {
    /// `{x_i}`.
    Point,
    /// `|x - x_i| <= radius`.
    Ball { norm: Norm, radius: f64 },
    /// `|x_j - x_ij| <= half_width[j]`; a single width applies to all.
    Box { half_width: Vec<f64> },
    /// Observed coordinates fixed, missing coordinate `j` in
    /// `[lower[j], upper[j]]`.
    MissingBox { lower: Vec<f64>, upper: Vec<f64> },
    /// One set per datapoint.
    Explicit { sets: Vec<SetExpr> },
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub version: u32,
    pub loss: LossSpec,
    pub task: Task,
    pub target: String,
    pub features: Vec<String>,
    pub sets: SetTemplate,
    /// Constraints added to every datapoint's set.
    pub common: Vec<Primitive>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<SetExpr>,
}

const FIELDS: [&str; 8] = ["version", "loss", "task", "target", "features", "sets", "common", "theta"];

fn schema(pointer: impl Into<String>, message: impl Into<String>) -> RermError {
    RermError::Schema {
        pointer: pointer.into(),
        message: message.into(),
    }
}

fn field<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str) -> Result<Option<T>> {
    obj.get(key)
        .map(|v| serde_json::from_value(v.clone()).map_err(|e| schema(format!("/{key}"), e.to_string())))
        .transpose()
}

fn required<T: DeserializeOwned>(obj: &Map<String, Value>, key: &str) -> Result<T> {
    field(obj, key)?.ok_or_else(|| schema(format!("/{key}"), "required field is missing"))
}

impl ProblemSpec {
    pub fn from_json(s: &str) -> Result<Self> {
        let value: Value = serde_json::from_str(s).map_err(|e| schema("", e.to_string()))?;
        let obj = value.as_object().ok_or_else(|| schema("", "expected a JSON object"))?;
        if let Some(k) = obj.keys().find(|k| !FIELDS.contains(&k.as_str())) {
            return Err(schema(format!("/{k}"), "unknown field"));
        }
        let version: u32 = required(obj, "version")?;
        if version != 1 {
            return Err(schema("/version", format!("unsupported version {version}")));
        }
        let loss: LossSpec = required(obj, "loss")?;
        loss.validate().map_err(|e| schema("/loss", e.to_string()))?;

        // explicit lists are decoded one set at a time for precise pointers
        let sets = match obj.get("sets") {
            None => return Err(schema("/sets", "required field is missing")),
            Some(Value::Object(m)) if m.get("kind") == Some(&Value::from("explicit")) => {
                let list = m
                    .get("sets")
                    .and_then(Value::as_array)
                    .ok_or_else(|| schema("/sets/sets", "expected an array of sets"))?;
                let sets = list
                    .iter()
                    .enumerate()
                    .map(|(i, v)| {
                        serde_json::from_value(v.clone()).map_err(|e| schema(format!("/sets/sets/{i}"), e.to_string()))
                    })
                    .collect::<Result<Vec<SetExpr>>>()?;
                SetTemplate::Explicit { sets }
            }
            Some(_) => required(obj, "sets")?,
        };
        let common: Vec<Primitive> = match obj.get("common").and_then(Value::as_array) {
            Some(list) => list
                .iter()
                .enumerate()
                .map(|(i, v)| serde_json::from_value(v.clone()).map_err(|e| schema(format!("/common/{i}"), e.to_string())))
                .collect::<Result<_>>()?,
            None => field(obj, "common")?.unwrap_or_default(),
        };

        let spec = ProblemSpec {
            version,
            loss,
            task: field(obj, "task")?.unwrap_or_default(),
            target: required(obj, "target")?,
            features: field(obj, "features")?.unwrap_or_default(),
            sets,
            common,
            theta: field(obj, "theta")?,
        };
        spec.check_template()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("problem spec serializes")
    }

    fn check_template(&self) -> Result<()> {
        match &self.sets {
            SetTemplate::Ball { radius, .. } if !(*radius >= 0.0 && radius.is_finite()) => {
                Err(schema("/sets/radius", format!("radius {radius} must be finite and non-negative")))
            }
            SetTemplate::Box { half_width } => match half_width.iter().position(|w| !(*w >= 0.0 && w.is_finite())) {
                Some(j) => Err(schema(format!("/sets/half_width/{j}"), "width must be finite and non-negative")),
                None if half_width.is_empty() => Err(schema("/sets/half_width", "at least one width is required")),
                None => Ok(()),
            },
            SetTemplate::MissingBox { lower, upper } if lower.len() != upper.len() => {
                Err(schema("/sets/upper", "lower and upper must have the same length"))
            }
            _ => Ok(()),
        }
    }

    /// Read the columns this problem uses from a CSV file.
    pub fn load_data(&self, path: impl AsRef<Path>) -> Result<Dataset> {
        load_csv(path, &self.target, &self.features)
    }

    /// Assemble the robust problem for `data`.
    pub fn to_problem(&self, data: &Dataset) -> Result<RermProblem> {
        let d = data.features.len();
        let mut sets = Vec::with_capacity(data.n());
        for i in 0..data.n() {
            let mut set = self.set_for(data, i)?;
            set.constraints.extend(self.common.iter().cloned());
            set.validate().map_err(|e| schema(self.set_pointer(i), format!("datapoint {i}: {e}")))?;
            sets.push(set);
        }
        let theta = match &self.theta {
            Some(t) if t.dim != d => return Err(schema("/theta/dim", format!("expected {d}, found {}", t.dim))),
            Some(t) => t.clone(),
            None => SetExpr::whole(d),
        };
        // missing cells are only read through their sets; any finite nominal works
        let x: Vec<Vec<f64>> = data
            .x
            .iter()
            .map(|r| r.iter().map(|v| if v.is_nan() { 0.0 } else { *v }).collect())
            .collect();
        match self.task {
            Task::Regression => RermProblem::new(x, data.y.clone(), sets, self.loss, theta),
            Task::Classification => RermProblem::classification(x, &data.y, sets, self.loss, theta),
        }
    }

    fn set_pointer(&self, i: usize) -> String {
        match self.sets {
            SetTemplate::Explicit { .. } => format!("/sets/sets/{i}"),
            _ => "/sets".into(),
        }
    }

    fn set_for(&self, data: &Dataset, i: usize) -> Result<SetExpr> {
        let d = data.features.len();
        let row = &data.x[i];
        let observed = |what: &str| -> Result<()> {
            match data.missing[i].iter().position(|&m| m) {
                Some(j) => Err(schema(
                    "/sets/kind",
                    format!("row {i} is missing feature '{}', which {what} cannot represent", data.features[j]),
                )),
                None => Ok(()),
            }
        };
        Ok(match &self.sets {
            SetTemplate::Point => {
                observed("a point set")?;
                SetExpr::point(row)
            }
            SetTemplate::Ball { norm, radius } => {
                observed("a ball")?;
                SetExpr::ball(*norm, row.clone(), *radius)
            }
            SetTemplate::Box { half_width } => {
                observed("a box")?;
                let w = |j: usize| if half_width.len() == 1 { half_width[0] } else { half_width[j] };
                if half_width.len() != 1 && half_width.len() != d {
                    return Err(schema("/sets/half_width", format!("expected 1 or {d} widths, found {}", half_width.len())));
                }
                SetExpr::boxed((0..d).map(|j| row[j] - w(j)).collect(), (0..d).map(|j| row[j] + w(j)).collect())
            }
            SetTemplate::MissingBox { lower, upper } => {
                if lower.len() != d {
                    return Err(schema("/sets/lower", format!("expected {d} bounds, found {}", lower.len())));
                }
                let (fixed, free): (Vec<usize>, Vec<usize>) = (0..d).partition(|&j| !data.missing[i][j]);
                let mut set = SetExpr::whole(d);
                if !fixed.is_empty() {
                    let values = fixed.iter().map(|&j| row[j]).collect();
                    set = set.with(Primitive::fix(fixed, values));
                }
                if !free.is_empty() {
                    let mut l = vec![f64::NEG_INFINITY; d];
                    let mut u = vec![f64::INFINITY; d];
                    for j in free {
                        l[j] = lower[j];
                        u[j] = upper[j];
                    }
                    set = set.with(Primitive::Box { lower: l, upper: u });
                }
                set
            }
            SetTemplate::Explicit { sets } => {
                if sets.len() != data.n() {
                    return Err(schema("/sets/sets", format!("expected {} sets, found {}", data.n(), sets.len())));
                }
                if sets[i].dim != d {
                    return Err(schema(format!("/sets/sets/{i}/dim"), format!("expected {d}, found {}", sets[i].dim)));
                }
                sets[i].clone()
            }
        })
    }
}
