//! Instance configuration files.
//!
//! ```json
//! {"C": 3,
//!  "classes": [{"Lambda": 3600, "mu": 0.001,
//!               "demand": {"kind": "linear", "a": 0.05, "b": 180}}],
//!  "seed": 1, "tolerances": {"tol": 1e-9, "max_iter": 1000000}}
//! ```
//!
//! Demand parameters may sit next to `kind` or inside a `params` object.
//! `Lambda` (market size) may be omitted for linear and exponential curves,
//! where it defaults to the curve's admissible maximum.

use crate::error::{Error, Result};
use crate::model::{CustomerClass, Instance};
use crate::Demand;
use serde_json::{json, Map, Value};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Tolerances {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { tol: crate::dynamic_solver::DEFAULT_TOL, max_iter: crate::dynamic_solver::DEFAULT_MAX_ITER }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstanceConfig {
    pub instance: Instance,
    pub seed: Option<u64>,
    pub tolerances: Tolerances,
    /// Fields that were absent and took default values.
    pub defaulted: Vec<String>,
    /// Unknown fields, ignored.
    pub warnings: Vec<String>,
}

fn invalid<T>(path: &str, message: impl Into<String>) -> Result<T> {
    Err(Error::Validation { path: path.to_string(), message: message.into() })
}

fn object<'a>(v: &'a Value, path: &str) -> Result<&'a Map<String, Value>> {
    v.as_object().ok_or_else(|| Error::Validation { path: path.to_string(), message: "expected an object".into() })
}

fn number(obj: &Map<String, Value>, key: &str, path: &str) -> Result<Option<f64>> {
    let p = format!("{path}.{key}");
    match obj.get(key) {
        None => Ok(None),
        Some(v) => match v.as_f64() {
            Some(x) if x.is_finite() => Ok(Some(x)),
            _ => invalid(&p, "expected a finite number"),
        },
    }
}

fn required(obj: &Map<String, Value>, key: &str, path: &str) -> Result<f64> {
    number(obj, key, path)?.ok_or_else(|| Error::Validation {
        path: format!("{path}.{key}"),
        message: "missing required field".into(),
    })
}

fn positive(obj: &Map<String, Value>, key: &str, path: &str) -> Result<f64> {
    let v = required(obj, key, path)?;
    if v <= 0.0 {
        return invalid(&format!("{path}.{key}"), format!("must be positive, got {v}"));
    }
    Ok(v)
}

fn unknown(obj: &Map<String, Value>, known: &[&str], path: &str, warnings: &mut Vec<String>) {
    for k in obj.keys() {
        if !known.contains(&k.as_str()) {
            let p = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
            log::warn!("ignoring unknown field {p}");
            warnings.push(p);
        }
    }
}

fn parse_demand(v: &Value, path: &str, lambda: Option<f64>, warnings: &mut Vec<String>) -> Result<Demand> {
    let obj = object(v, path)?;
    let kind = match obj.get("kind") {
        Some(Value::String(s)) => s.as_str(),
        Some(_) => return invalid(&format!("{path}.kind"), "expected a string"),
        None => return invalid(&format!("{path}.kind"), "missing required field"),
    };
    let (params, ppath) = match obj.get("params") {
        Some(p) => (object(p, &format!("{path}.params"))?, format!("{path}.params")),
        None => (obj, path.to_string()),
    };
    let known: &[&str] = match kind {
        "uniform_valuation" => &["kind", "params", "lo", "hi"],
        _ => &["kind", "params", "a", "b"],
    };
    unknown(obj, known, path, warnings);
    if obj.contains_key("params") {
        unknown(params, &known[2..], &ppath, warnings);
    }
    let need_lambda = |what: &str| {
        lambda.ok_or_else(|| Error::Validation {
            path: path.trim_end_matches(".demand").to_string() + ".Lambda",
            message: format!("{what} demand needs a market size"),
        })
    };
    let wrap = |r: Result<Demand>| r.map_err(|e| Error::Validation { path: path.to_string(), message: e.to_string() });
    match kind {
        "linear" => wrap(Demand::linear(positive(params, "a", &ppath)?, positive(params, "b", &ppath)?)),
        "exponential" => wrap(Demand::exponential(positive(params, "a", &ppath)?, positive(params, "b", &ppath)?)),
        "reciprocal_tight" => {
            let (a, b) = (positive(params, "a", &ppath)?, required(params, "b", &ppath)?);
            wrap(Demand::reciprocal_tight(a, b, need_lambda(kind)?))
        }
        "uniform_valuation" => {
            let (lo, hi) = (required(params, "lo", &ppath)?, required(params, "hi", &ppath)?);
            wrap(Demand::uniform_valuation(lo, hi, need_lambda(kind)?))
        }
        other => invalid(
            &format!("{path}.kind"),
            format!("unknown demand kind {other:?} (expected linear, exponential, reciprocal_tight or uniform_valuation)"),
        ),
    }
}

/// Parses and validates a configuration document.
pub fn parse_instance_config(doc: &Value) -> Result<InstanceConfig> {
    let mut warnings = Vec::new();
    let mut defaulted = Vec::new();
    let root = object(doc, "$")?;
    unknown(root, &["C", "classes", "seed", "tolerances"], "", &mut warnings);
    let c = match root.get("C") {
        None => return invalid("C", "missing required field"),
        Some(v) => match v.as_u64() {
            Some(c) if c >= 1 => c as usize,
            _ => return invalid("C", "expected a positive integer"),
        },
    };
    let classes_v = match root.get("classes") {
        None => return invalid("classes", "missing required field"),
        Some(Value::Array(a)) if !a.is_empty() => a,
        Some(_) => return invalid("classes", "expected a nonempty array"),
    };
    let mut classes = Vec::with_capacity(classes_v.len());
    for (i, cv) in classes_v.iter().enumerate() {
        let path = format!("classes[{i}]");
        let obj = object(cv, &path)?;
        unknown(obj, &["Lambda", "mu", "demand"], &path, &mut warnings);
        let mu = positive(obj, "mu", &path)?;
        let lambda = number(obj, "Lambda", &path)?;
        if let Some(l) = lambda {
            if l <= 0.0 {
                return invalid(&format!("{path}.Lambda"), format!("must be positive, got {l}"));
            }
        }
        let demand_v = obj.get("demand").ok_or_else(|| Error::Validation {
            path: format!("{path}.demand"),
            message: "missing required field".into(),
        })?;
        let demand = parse_demand(demand_v, &format!("{path}.demand"), lambda, &mut warnings)?;
        let market = match lambda {
            Some(l) => l,
            None => {
                defaulted.push(format!("{path}.Lambda"));
                demand.max_rate()
            }
        };
        let class = CustomerClass::with_market_size(market, mu, demand)
            .map_err(|e| Error::Validation { path: path.clone(), message: e.to_string() })?;
        classes.push(class);
    }
    let seed = match root.get("seed") {
        None => None,
        Some(v) => Some(v.as_u64().ok_or_else(|| Error::Validation {
            path: "seed".into(),
            message: "expected a nonnegative integer".into(),
        })?),
    };
    let mut tolerances = Tolerances::default();
    match root.get("tolerances") {
        None => defaulted.push("tolerances".into()),
        Some(t) => {
            let obj = object(t, "tolerances")?;
            unknown(obj, &["tol", "max_iter"], "tolerances", &mut warnings);
            match number(obj, "tol", "tolerances")? {
                Some(v) if v > 0.0 => tolerances.tol = v,
                Some(v) => return invalid("tolerances.tol", format!("must be positive, got {v}")),
                None => defaulted.push("tolerances.tol".into()),
            }
            match obj.get("max_iter") {
                None => defaulted.push("tolerances.max_iter".into()),
                Some(v) => match v.as_u64() {
                    Some(n) if n >= 1 => tolerances.max_iter = n as usize,
                    _ => return invalid("tolerances.max_iter", "expected a positive integer"),
                },
            }
        }
    }
    let instance = Instance::new(c, classes).map_err(|e| Error::Validation { path: "$".into(), message: e.to_string() })?;
    Ok(InstanceConfig { instance, seed, tolerances, defaulted, warnings })
}

/// Reads and validates a configuration file.
pub fn load_instance(path: impl AsRef<Path>) -> Result<InstanceConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Validation { path: path.display().to_string(), message: e.to_string() })?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| Error::Validation { path: path.display().to_string(), message: format!("invalid JSON: {e}") })?;
    let cfg = parse_instance_config(&doc)?;
    if !cfg.defaulted.is_empty() {
        log::info!("defaulted: {}", cfg.defaulted.join(", "));
    }
    Ok(cfg)
}

fn demand_json(d: &Demand) -> Value {
    match *d {
        Demand::Linear { a, b, .. } => json!({"kind": "linear", "a": a, "b": b}),
        Demand::Exponential { a, b, .. } => json!({"kind": "exponential", "a": a, "b": b}),
        Demand::ReciprocalTight { a, b, .. } => json!({"kind": "reciprocal_tight", "a": a, "b": b}),
        Demand::UniformValuation { lo, hi, .. } => json!({"kind": "uniform_valuation", "lo": lo, "hi": hi}),
    }
}

/// Serializes a configuration in the canonical flat layout.
pub fn instance_config_json(cfg: &InstanceConfig) -> Value {
    let classes: Vec<Value> = cfg
        .instance
        .classes
        .iter()
        .map(|k| json!({"Lambda": k.market_size, "mu": k.mu, "demand": demand_json(&k.demand)}))
        .collect();
    let mut doc = json!({
        "C": cfg.instance.c,
        "classes": classes,
        "tolerances": {"tol": cfg.tolerances.tol, "max_iter": cfg.tolerances.max_iter},
    });
    if let Some(s) = cfg.seed {
        doc["seed"] = json!(s);
    }
    doc
}
