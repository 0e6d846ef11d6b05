//! Grid sweeps over config keys, with a collated CSV of final metrics.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use toml::Value;

use crate::config::{parse_value, RunConfig};
use crate::runner::{execute, run_dir, RunSummary};

/// `key=v1,v2,...` or, for integers, `key=lo..hi` (inclusive).
#[derive(Clone, Debug, PartialEq)]
pub struct Axis {
    pub key: String,
    pub values: Vec<Value>,
}

impl std::str::FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, rest) = s.split_once('=').ok_or_else(|| format!("axis '{s}' must look like key=v1,v2"))?;
        let key = key.trim().to_string();
        if key.is_empty() {
            return Err(format!("axis '{s}' has an empty key"));
        }
        let values = match rest.split_once("..") {
            Some((lo, hi)) if lo.trim().parse::<i64>().is_ok() && hi.trim().parse::<i64>().is_ok() => {
                let (lo, hi): (i64, i64) = (lo.trim().parse().unwrap(), hi.trim().parse().unwrap());
                if lo > hi {
                    return Err(format!("axis '{s}': empty range"));
                }
                (lo..=hi).map(Value::Integer).collect()
            }
            _ => rest.split(',').map(|v| parse_value(v.trim())).collect(),
        };
        Ok(Axis { key, values })
    }
}

/// `label:key=v;key=v`, a named bundle of overrides.
#[derive(Clone, Debug, PartialEq)]
pub struct Variant {
    pub label: String,
    pub overrides: Vec<(String, Value)>,
}

impl std::str::FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (label, rest) =
            s.split_once(':').ok_or_else(|| format!("variant '{s}' must look like label:key=v;key=v"))?;
        let overrides = rest
            .split(';')
            .filter(|p| !p.trim().is_empty())
            .map(|p| {
                let (k, v) = p.split_once('=').ok_or_else(|| format!("variant '{s}': '{p}' is not key=value"))?;
                Ok((k.trim().to_string(), parse_value(v.trim())))
            })
            .collect::<Result<_, String>>()?;
        Ok(Variant { label: label.trim().to_string(), overrides })
    }
}

/// One row of the collated sweep table.
#[derive(Clone, Debug, Serialize)]
pub struct SweepRow {
    pub variant: String,
    pub point: String,
    pub seed: u64,
    pub run_id: String,
    pub complete: bool,
    pub evaluations: u64,
    pub qd_score: Option<f64>,
    pub coverage: Option<f64>,
    pub max_fitness: Option<f64>,
    pub occupied_cells: Option<usize>,
    pub lifespan_exploit: Option<f64>,
    pub lifespan_explore: Option<f64>,
    pub run_dir: PathBuf,
}

fn show(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Every combination of variant x axis values, in order.
pub fn expand(
    src: &str,
    origin: &str,
    axes: &[Axis],
    variants: &[Variant],
) -> Result<Vec<(String, String, RunConfig)>> {
    let base = [Variant { label: String::new(), overrides: Vec::new() }];
    let variants = if variants.is_empty() { &base[..] } else { variants };
    let mut points: Vec<Vec<(String, Value)>> = vec![Vec::new()];
    for axis in axes {
        points = points
            .into_iter()
            .flat_map(|p| {
                axis.values.iter().map(move |v| {
                    let mut q = p.clone();
                    q.push((axis.key.clone(), v.clone()));
                    q
                })
            })
            .collect();
    }
    let mut out = Vec::new();
    for variant in variants {
        for point in &points {
            let mut overrides = variant.overrides.clone();
            overrides.extend(point.iter().cloned());
            let desc: Vec<String> = point.iter().map(|(k, v)| format!("{k}={}", show(v))).collect();
            let mut label_parts: Vec<String> = Vec::new();
            if !variant.label.is_empty() {
                label_parts.push(variant.label.clone());
            }
            label_parts.extend(point.iter().filter(|(k, _)| k != "seed").map(|(k, v)| {
                let leaf = k.rsplit('.').next().unwrap_or(k);
                format!("{leaf}{}", show(v)).replace([':', '/', ' ', '"', '[', ']', ','], "")
            }));
            if !label_parts.is_empty() {
                overrides.push(("label".into(), Value::String(label_parts.join("_"))));
            }
            let cfg = RunConfig::from_toml_str(src, origin, &overrides).with_context(|| {
                format!("sweep point {}{}", if variant.label.is_empty() { "" } else { &variant.label }, desc.join(" "))
            })?;
            out.push((variant.label.clone(), desc.join(" "), cfg));
        }
    }
    if out.is_empty() {
        bail!("sweep has no points");
    }
    Ok(out)
}

/// Runs every point and writes the collated table to `collated`. Failed
/// runs appear with `complete = false`; the sweep continues past them.
pub fn run_sweep(config: &Path, axes: &[Axis], variants: &[Variant], collated: &Path) -> Result<Vec<SweepRow>> {
    let src = std::fs::read_to_string(config).with_context(|| format!("reading {}", config.display()))?;
    let points = expand(&src, &config.display().to_string(), axes, variants)?;
    let mut rows = Vec::new();
    for (variant, point, cfg) in points {
        let summary = match execute(&cfg) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("{e:#}");
                crate::runner::read_json::<RunSummary>(&run_dir(&cfg).join("summary.json"))?
            }
        };
        let lifespans = summary.lifespans.unwrap_or_default();
        rows.push(SweepRow {
            variant,
            point,
            seed: summary.seed,
            run_id: summary.run_id,
            complete: summary.complete,
            evaluations: summary.evaluations,
            qd_score: summary.qd_score,
            coverage: summary.coverage,
            max_fitness: summary.max_fitness,
            occupied_cells: summary.occupied_cells,
            lifespan_exploit: lifespans.exploit,
            lifespan_explore: lifespans.explore,
            run_dir: run_dir(&cfg),
        });
    }
    if let Some(parent) = collated.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut w = csv::Writer::from_path(collated).with_context(|| format!("creating {}", collated.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn axis_syntax() {
        let a: Axis = "algorithm.reset=fixed:10,adaptive".parse().unwrap();
        assert_eq!(a.values, vec![Value::String("fixed:10".into()), Value::String("adaptive".into())]);
        let s: Axis = "seed=1..5".parse().unwrap();
        assert_eq!(s.values.len(), 5);
        assert!("seed".parse::<Axis>().is_err());
        assert!("seed=5..1".parse::<Axis>().is_err());
    }

    #[test]
    fn variant_syntax() {
        let v: Variant = "all:algorithm.add_all_samples=true;algorithm.n_emitters=4".parse().unwrap();
        assert_eq!(v.label, "all");
        assert_eq!(v.overrides[0], ("algorithm.add_all_samples".into(), Value::Boolean(true)));
        assert_eq!(v.overrides[1].1, Value::Integer(4));
        assert!("noval".parse::<Variant>().is_err());
    }

    #[test]
    fn expansion_is_a_product() {
        let src = "generations = 2\n[task]\nname = \"point_trap\"\n[algorithm]\nname = \"memes\"\nn_emitters = 2\n";
        let axes = vec!["algorithm.reset=fixed:10,fixed:50,adaptive".parse().unwrap(), "seed=1..2".parse().unwrap()];
        let variants = vec!["a:algorithm.p_exploit=1.0".parse().unwrap(), "b:algorithm.p_exploit=0.0".parse().unwrap()];
        let pts = expand(src, "s", &axes, &variants).unwrap();
        assert_eq!(pts.len(), 12);
        let ids: std::collections::HashSet<_> = pts.iter().map(|p| p.2.run_id()).collect();
        assert_eq!(ids.len(), 12);
        assert_eq!(pts[0].2.label.as_deref(), Some("a_resetfixed10"));
        let bad = vec!["algorithm.p_exploit=2.0".parse().unwrap()];
        assert!(expand(src, "s", &bad, &[]).is_err());
    }
}
