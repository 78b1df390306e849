//! Regression-scenario files.
//!
//! Line-oriented text with `#` comments. Global defaults apply to every
//! following scenario and can be overridden per scenario line:
//!
//! ```text
//! theta 3
//! eta 3
//! step 1e-3
//! steps 3000
//! tol 0.25
//! kinds ciou,siou,finesiou
//! scenario <name> init <cx> <cy> <w> <h> target <cx> <cy> <w> <h> [kinds ...] [step x] [steps n] [tol x]
//! ```

use crate::error::{CoreError, Result};

use super::{BBox, LossKind};

/// One regression race: an initial box descending toward a target under
/// one or more loss kinds.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub init: BBox<f64>,
    pub target: BBox<f64>,
    pub kinds: Vec<LossKind>,
    pub theta: f64,
    pub eta: f64,
    pub step_size: f64,
    pub max_steps: usize,
    pub tol: f64,
}

impl Scenario {
    /// Prediction strictly oversized relative to the target on both axes.
    pub fn is_oversized_pred(&self) -> bool {
        self.init.w > self.target.w && self.init.h > self.target.h
    }
}

#[derive(Debug, Clone)]
pub struct Suite {
    pub scenarios: Vec<Scenario>,
}

struct Defaults {
    theta: f64,
    eta: f64,
    step: f64,
    steps: usize,
    tol: f64,
    kinds: Vec<LossKind>,
}

fn parse_kinds(s: &str) -> Result<Vec<LossKind>> {
    s.split(',').map(|k| LossKind::parse(k.trim())).collect()
}

/// Parse a scenario file.
pub fn parse_suite(text: &str) -> Result<Suite> {
    let mut defaults = Defaults {
        theta: 3.0,
        eta: 3.0,
        step: 1e-3,
        steps: 2000,
        tol: 0.25,
        kinds: vec![LossKind::Siou, LossKind::FineSiou],
    };
    let mut scenarios = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |msg: String| CoreError::Parse {
            line: lineno + 1,
            msg,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        let num = |s: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| err(format!("bad number `{s}`")))
        };
        let value = |tokens: &[&str]| -> Result<String> {
            tokens
                .get(1)
                .map(|s| s.to_string())
                .ok_or_else(|| err("missing value".to_string()))
        };
        match tokens[0] {
            "theta" => defaults.theta = num(&value(&tokens)?)?,
            "eta" => defaults.eta = num(&value(&tokens)?)?,
            "step" => defaults.step = num(&value(&tokens)?)?,
            "steps" => {
                defaults.steps = value(&tokens)?
                    .parse()
                    .map_err(|_| err("bad step count".to_string()))?
            }
            "tol" => defaults.tol = num(&value(&tokens)?)?,
            "kinds" => defaults.kinds = parse_kinds(&value(&tokens)?)?,
            "scenario" => {
                if tokens.len() < 12 || tokens[2] != "init" || tokens[7] != "target" {
                    return Err(err(
                        "expected `scenario <name> init cx cy w h target cx cy w h [overrides]`"
                            .to_string(),
                    ));
                }
                let init = BBox::new(
                    num(tokens[3])?,
                    num(tokens[4])?,
                    num(tokens[5])?,
                    num(tokens[6])?,
                );
                let target = BBox::new(
                    num(tokens[8])?,
                    num(tokens[9])?,
                    num(tokens[10])?,
                    num(tokens[11])?,
                );
                if !init.is_valid() || !target.is_valid() {
                    return Err(err("box extents must be positive".to_string()));
                }
                let mut sc = Scenario {
                    name: tokens[1].to_string(),
                    init,
                    target,
                    kinds: defaults.kinds.clone(),
                    theta: defaults.theta,
                    eta: defaults.eta,
                    step_size: defaults.step,
                    max_steps: defaults.steps,
                    tol: defaults.tol,
                };
                let mut it = tokens[12..].iter();
                while let Some(key) = it.next() {
                    let v = it
                        .next()
                        .ok_or_else(|| err(format!("override `{key}` missing value")))?;
                    match *key {
                        "kinds" => sc.kinds = parse_kinds(v)?,
                        "step" => sc.step_size = num(v)?,
                        "steps" => {
                            sc.max_steps = v.parse().map_err(|_| err("bad steps".to_string()))?
                        }
                        "tol" => sc.tol = num(v)?,
                        "theta" => sc.theta = num(v)?,
                        "eta" => sc.eta = num(v)?,
                        other => return Err(err(format!("unknown override `{other}`"))),
                    }
                }
                scenarios.push(sc);
            }
            other => return Err(err(format!("unknown directive `{other}`"))),
        }
    }
    if scenarios.is_empty() {
        return Err(CoreError::Parse {
            line: 0,
            msg: "scenario file defines no scenarios".to_string(),
        });
    }
    Ok(Suite { scenarios })
}
