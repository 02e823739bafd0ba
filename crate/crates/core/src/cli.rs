//! Scenario runner: flat `key=value` configuration, task dispatch and
//! reproducible JSON/CSV output.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Arg, ArgAction, Command};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::decomposition::{check_qp_relation, decompose, uncertainty_check, DecompositionReport, McOptions};
use crate::error::{Error, Result};
use crate::fields::{csv_err, local_terms};
use crate::nodal::{self, NodalDiagnostics, NodalOptions};
use crate::operators::OperatorRequest;
use crate::quadrature::{CoordinateChoice, Convergence, EquilibriumSampler, IntegrationScheme, Rule};
use crate::states::{parse_state, WaveFunction};
use crate::trajectories::{
    equivariance_series, equivariance_threshold, integrate_trajectory, propagate_ensemble, weak_value_series,
    write_paths_csv, EnsembleOptions,
};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub const TASKS: [&str; 7] = [
    "decompose",
    "pointwise-check",
    "nodal",
    "trajectories",
    "uncertainty",
    "qp-relation",
    "sweep",
];

/// Every accepted key with its default. `auto` and `none` mark derived or
/// absent values.
pub const KEYS: &[(&str, &str)] = &[
    ("task", "none"),
    ("state", "none"),
    ("op", "none"),
    ("out", "out"),
    ("seed", "20240601"),
    ("workers", "0"),
    ("quad.rule", "gauss_legendre"),
    ("quad.points", "32"),
    ("quad.panels", "4"),
    ("quad.tail", "1e-12"),
    ("quad.half_width", "auto"),
    ("quad.eps0", "1e-3"),
    ("quad.eps_ratio", "0.5"),
    ("quad.eps_count", "13"),
    ("quad.tol_conv", "1e-6"),
    ("quad.coordinates", "auto"),
    ("quad.error_estimate", "true"),
    ("mc.n", "0"),
    ("mc.seed", "auto"),
    ("mc.burn_in", "10000"),
    ("mc.thin", "5"),
    ("mc.chains", "4"),
    ("mc.step", "auto"),
    ("mc.tune", "true"),
    ("nodal.resolution", "auto"),
    ("nodal.radii", "0.1,0.05,0.025"),
    ("nodal.samples", "100000"),
    ("nodal.orders", "0,1,2"),
    ("pointwise.n", "1000"),
    ("traj.n", "1000"),
    ("traj.horizon", "10"),
    ("traj.dt", "auto"),
    ("traj.records", "10"),
    ("traj.x0", "none"),
    ("traj.op", "none"),
    ("sweep.param", "n"),
    ("sweep.values", "0..4"),
];

/// Fully resolved configuration.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ScenarioConfig {
    values: BTreeMap<String, String>,
}

fn config_err(m: impl Into<String>) -> Error {
    Error::Config(m.into())
}

fn is_unset(v: &str) -> bool {
    v == "none" || v == "auto"
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            values: KEYS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

impl ScenarioConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                *slot = value.trim().to_string();
                Ok(())
            }
            None => Err(config_err(format!("unknown key `{key}`"))),
        }
    }

    /// Applies a flat `key=value` text; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| config_err(format!("line {}: expected key=value", i + 1)))?;
            let k = k.trim();
            if !seen.insert(k.to_string()) {
                return Err(config_err(format!("line {}: duplicate key `{k}`", i + 1)));
            }
            self.set(k, v)?;
        }
        Ok(())
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).expect("known key")
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.raw(key);
        v.parse()
            .map_err(|_| config_err(format!("cannot parse `{key}={v}`")))
    }

    pub fn optional<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        if is_unset(self.raw(key)) {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn required(&self, key: &str) -> Result<&str> {
        let v = self.raw(key);
        if is_unset(v) || v.is_empty() {
            Err(config_err(format!("`{key}` is required for task {}", self.raw("task"))))
        } else {
            Ok(v)
        }
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Vec<T>> {
        let v = self.raw(key);
        if is_unset(v) {
            return Ok(vec![]);
        }
        v.split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| config_err(format!("cannot parse `{s}` in `{key}`")))
            })
            .collect()
    }

    pub fn task(&self) -> Result<&str> {
        let t = self.raw("task");
        if TASKS.contains(&t) {
            Ok(t)
        } else {
            Err(config_err(format!("unknown task `{t}`; expected one of {}", TASKS.join(", "))))
        }
    }

    pub fn scheme(&self) -> Result<IntegrationScheme> {
        let rule = self.raw("quad.rule");
        let s = IntegrationScheme {
            rule: Rule::parse(rule).ok_or_else(|| config_err(format!("unknown quadrature rule `{rule}`")))?,
            points: self.get("quad.points")?,
            panels: self.get("quad.panels")?,
            tail: self.get("quad.tail")?,
            half_width: self.optional("quad.half_width")?,
            bounds: None,
            eps0: self.get("quad.eps0")?,
            eps_ratio: self.get("quad.eps_ratio")?,
            eps_count: self.get("quad.eps_count")?,
            tol_conv: self.get("quad.tol_conv")?,
            coordinates: match self.raw("quad.coordinates") {
                "auto" => CoordinateChoice::Auto,
                "cartesian" => CoordinateChoice::Cartesian,
                other => return Err(config_err(format!("unknown coordinates `{other}`"))),
            },
            error_estimate: self.get("quad.error_estimate")?,
            workers: self.get("workers")?,
        };
        s.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(s)
    }

    pub fn mc_seed(&self) -> Result<u64> {
        match self.optional("mc.seed")? {
            Some(s) => Ok(s),
            None => self.get("seed"),
        }
    }

    pub fn sampler(&self) -> Result<EquilibriumSampler> {
        let s = EquilibriumSampler {
            seed: self.mc_seed()?,
            step: self.optional("mc.step")?,
            burn_in: self.get("mc.burn_in")?,
            thin: self.get("mc.thin")?,
            chains: self.get("mc.chains")?,
            tune: self.get("mc.tune")?,
            workers: self.get("workers")?,
        };
        s.validate().map_err(|e| config_err(e.to_string()))?;
        Ok(s)
    }

    /// Resolved values as written to the manifest.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let mut out = self.values.clone();
        if let Ok(seed) = self.mc_seed() {
            out.insert("mc.seed".into(), seed.to_string());
        }
        out
    }
}

/// `serde_json` formatter writing every float with 17 significant digits.
pub struct FullPrecision;

impl serde_json::ser::Formatter for FullPrecision {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()> {
        write!(writer, "{value:.16e}")
    }
}

/// Compact JSON with 17-digit floats and `null` for non-finite values.
pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, FullPrecision);
    value
        .serialize(&mut ser)
        .map_err(|e| Error::Io(e.to_string()))?;
    let mut s = String::from_utf8(buf).expect("json is utf-8");
    s.push('\n');
    Ok(s)
}

fn error_entry(e: &Error) -> Value {
    json!({ "kind": e.kind(), "message": e.to_string() })
}

fn value_of<T: Serialize>(v: &T) -> Result<Value> {
    serde_json::to_value(v).map_err(|e| Error::Io(e.to_string()))
}

/// Report of a task: result fields plus `task`, `status` and `errors`.
#[derive(Debug)]
pub struct Outcome {
    pub exit_code: i32,
    pub report: Value,
    pub files: BTreeMap<String, Vec<u8>>,
}

fn outcome(task: &str, status: &str, exit_code: i32, result: Value, errors: Vec<Value>) -> Outcome {
    let mut map = match result {
        Value::Object(m) => m,
        Value::Null => Map::new(),
        other => {
            let mut m = Map::new();
            m.insert("result".into(), other);
            m
        }
    };
    map.insert("task".into(), json!(task));
    map.insert("status".into(), json!(status));
    map.insert("errors".into(), Value::Array(errors));
    Outcome {
        exit_code,
        report: Value::Object(map),
        files: BTreeMap::new(),
    }
}

fn failure(task: &str, e: &Error) -> Outcome {
    let (status, code) = match e {
        Error::Divergence { .. } => ("divergence", 3),
        e if e.is_config() => ("config_error", 1),
        _ => ("error", 1),
    };
    outcome(task, status, code, Value::Null, vec![error_entry(e)])
}

fn state_and_op(cfg: &ScenarioConfig, state: &str, op: &str) -> Result<(WaveFunction, crate::operators::DiffOperator)> {
    let psi = parse_state(state)?;
    let op = OperatorRequest::parse(op, psi.units())?.build_for(&psi)?;
    let _ = cfg;
    Ok((psi, op))
}

fn mc_options(cfg: &ScenarioConfig) -> Result<Option<McOptions>> {
    let n: usize = cfg.get("mc.n")?;
    Ok(if n == 0 {
        None
    } else {
        Some(McOptions {
            n,
            sampler: cfg.sampler()?,
        })
    })
}

fn decomposition_status(r: &DecompositionReport) -> (&'static str, i32) {
    if r.method.divergent {
        ("divergence", 3)
    } else if !r.identity_holds {
        ("residual_failure", 2)
    } else {
        ("ok", 0)
    }
}

fn csv_bytes(header: &[String], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(r).map_err(csv_err)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.to_string()))
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn run_decompose(cfg: &ScenarioConfig) -> Result<Outcome> {
    let (psi, op) = state_and_op(cfg, cfg.required("state")?, cfg.required("op")?)?;
    let scheme = cfg.scheme()?;
    let mc = mc_options(cfg)?;
    let r = decompose(&op, &psi, &scheme, mc.as_ref())?;
    let (status, code) = decomposition_status(&r);
    let eps = &r.method.eps;
    let rows: Vec<Vec<String>> = (0..eps.var_b.eps.len())
        .map(|j| {
            vec![
                num(eps.var_b.eps[j]),
                num(eps.var_b.values[j] - r.mean * r.mean),
                num(eps.q_term.values[j]),
                num(eps.deficit.values[j]),
            ]
        })
        .collect();
    let header = ["eps", "var_b", "q_term", "deficit"].map(String::from);
    let mut o = outcome("decompose", status, code, value_of(&r)?, vec![]);
    o.files.insert("eps_sequence.csv".into(), csv_bytes(&header, &rows)?);
    Ok(o)
}

#[derive(Serialize)]
struct PointwiseReport {
    state: String,
    operator: String,
    points: usize,
    seed: u64,
    box_half_width: f64,
    max_relative_deficit: f64,
    tolerance: f64,
    scalar: bool,
    holds: bool,
}

/// Relative tolerance of the pointwise identity for scalar states.
pub const POINTWISE_TOLERANCE: f64 = 1e-10;

fn run_pointwise(cfg: &ScenarioConfig) -> Result<Outcome> {
    let (psi, op) = state_and_op(cfg, cfg.required("state")?, cfg.required("op")?)?;
    let n: usize = cfg.get("pointwise.n")?;
    let seed: u64 = cfg.get("seed")?;
    let half = 3.0 / psi.decay_rate() + psi.reach();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut worst: f64 = 0.0;
    let mut tries = 0usize;
    while rows.len() < n {
        tries += 1;
        if tries > 100 * n.max(1) {
            return Err(Error::InsufficientSamples("too many sample points fell on nodes".into()));
        }
        let x: Vec<f64> = (0..psi.dim()).map(|_| rng.gen_range(-half..half)).collect();
        if psi.is_at_node(&x) {
            continue;
        }
        let d = psi.derivatives(&x, op.order())?;
        let t = local_terms(&op, &d, &x)?;
        let aw = t.inner.re / t.density;
        let lhs = t.apsi_norm2;
        let scalar_rhs = t.density * aw * aw + t.inner.im * t.inner.im / t.density;
        let deficit = lhs - scalar_rhs;
        worst = worst.max(deficit.abs() / lhs.max(1.0));
        let mut row: Vec<String> = x.iter().map(|v| num(*v)).collect();
        row.extend([num(aw), num(lhs), num(scalar_rhs), num(deficit)]);
        rows.push(row);
    }
    let scalar = psi.components() == 1;
    let holds = !scalar || worst < POINTWISE_TOLERANCE;
    let report = PointwiseReport {
        state: psi.label().into(),
        operator: op.label().into(),
        points: n,
        seed,
        box_half_width: half,
        max_relative_deficit: worst,
        tolerance: POINTWISE_TOLERANCE,
        scalar,
        holds,
    };
    let mut header: Vec<String> = (1..=psi.dim()).map(|k| format!("x{k}")).collect();
    header.extend(["a_w", "lhs", "scalar_rhs", "deficit"].map(String::from));
    let (status, code) = if holds { ("ok", 0) } else { ("residual_failure", 2) };
    let mut o = outcome("pointwise-check", status, code, value_of(&report)?, vec![]);
    o.files.insert("pointwise.csv".into(), csv_bytes(&header, &rows)?);
    Ok(o)
}

#[derive(Serialize)]
struct SyntheticCheck {
    m: usize,
    k: u32,
    exponent: f64,
    verdict: bool,
    status: Convergence,
    /// Verdict true exactly when the sequence does not diverge.
    agrees: bool,
}

#[derive(Serialize)]
struct NodalReport {
    #[serde(flatten)]
    diagnostics: NodalDiagnostics,
    synthetic: Vec<SyntheticCheck>,
}

fn run_nodal(cfg: &ScenarioConfig) -> Result<Outcome> {
    let psi = parse_state(cfg.required("state")?)?;
    let orders: Vec<usize> = cfg.list("nodal.orders")?;
    let opts = NodalOptions {
        resolution: cfg.optional("nodal.resolution")?,
        radii: cfg.list("nodal.radii")?,
        samples: cfg.get("nodal.samples")?,
        seed: cfg.get("seed")?,
        ..Default::default()
    };
    let diag = nodal::diagnose(&psi, &orders, &opts)?;
    let scheme = IntegrationScheme {
        error_estimate: false,
        ..cfg.scheme()?
    };
    let mut synthetic = Vec::new();
    if let (Some(k), Some(node)) = (diag.k, nodal::declared_node_points(&psi).first()) {
        for &m in &orders {
            let exponent = 2.0 * (k as f64 - m as f64);
            let seq = nodal::synthetic_sequence(&psi, node, exponent, &scheme)?;
            let verdict = nodal::h6_verdict(k, m, psi.dim());
            synthetic.push(SyntheticCheck {
                m,
                k,
                exponent,
                verdict,
                status: seq.sequence.status,
                agrees: verdict == (seq.sequence.status != Convergence::Diverging),
            });
        }
    }
    let node_rows: Vec<Vec<String>> = diag
        .nodes
        .iter()
        .map(|c| {
            let mut r: Vec<String> = c.center.iter().map(|v| num(*v)).collect();
            r.extend(c.point.iter().map(|v| num(*v)));
            r.push(num(c.width));
            r
        })
        .collect();
    let d = psi.dim();
    let mut header: Vec<String> = (1..=d).map(|k| format!("center{k}")).collect();
    header.extend((1..=d).map(|k| format!("point{k}")));
    header.push("width".into());
    let volume_rows: Vec<Vec<String>> = diag.volume.pairs.iter().map(|(r, v)| vec![num(*r), num(*v)]).collect();
    let mut o = outcome(
        "nodal",
        "ok",
        0,
        value_of(&NodalReport {
            diagnostics: diag,
            synthetic,
        })?,
        vec![],
    );
    o.files.insert("nodes.csv".into(), csv_bytes(&header, &node_rows)?);
    o.files.insert(
        "volume.csv".into(),
        csv_bytes(&["r".to_string(), "volume".to_string()], &volume_rows)?,
    );
    Ok(o)
}

fn run_trajectories(cfg: &ScenarioConfig) -> Result<Outcome> {
    let psi = parse_state(cfg.required("state")?)?;
    let horizon: f64 = cfg.get("traj.horizon")?;
    let dt: Option<f64> = cfg.optional("traj.dt")?;
    let x0: Vec<f64> = cfg.list("traj.x0")?;
    let weak_op = match cfg.optional::<String>("traj.op")? {
        Some(text) => Some(OperatorRequest::parse(&text, psi.units())?.build_for(&psi)?),
        None => None,
    };
    let mut files = BTreeMap::new();
    let result = if !x0.is_empty() {
        let step = dt.unwrap_or_else(|| crate::trajectories::default_dt(&psi));
        let path = integrate_trajectory(&psi, &x0, horizon, step)?;
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, std::slice::from_ref(&path), psi.dim())?;
        files.insert("paths.csv".to_string(), buf);
        let mut extra = Map::new();
        if let Some(op) = &weak_op {
            let series = weak_value_series(op, &psi, &path)?;
            let rows: Vec<Vec<String>> = path.times().zip(&series).map(|(t, a)| vec![num(t), num(*a)]).collect();
            files.insert(
                "weak_values.csv".into(),
                csv_bytes(&["t".to_string(), "a_w".to_string()], &rows)?,
            );
            extra.insert("operator".into(), json!(op.label()));
        }
        extra.insert("state".into(), json!(psi.label()));
        extra.insert("x0".into(), value_of(&x0)?);
        extra.insert("horizon".into(), value_of(&horizon)?);
        extra.insert("dt".into(), value_of(&path.dt)?);
        extra.insert("steps".into(), json!(path.points.len() - 1));
        extra.insert("end".into(), value_of(&path.last())?);
        extra.insert("halted".into(), value_of(&path.halted)?);
        extra.insert("order".into(), json!(4));
        Value::Object(extra)
    } else {
        let n: usize = cfg.get("traj.n")?;
        let opts = EnsembleOptions {
            horizon,
            dt,
            records: cfg.get("traj.records")?,
            workers: cfg.get("workers")?,
        };
        let ens = propagate_ensemble(&psi, n, &cfg.sampler()?, &opts)?;
        let series = equivariance_series(&ens, &psi)?;
        let threshold = equivariance_threshold(n);
        let max = series.iter().map(|s| s.distance).fold(0.0, f64::max);
        let mut buf = Vec::new();
        write_paths_csv(&mut buf, &ens.paths, psi.dim())?;
        files.insert("paths.csv".to_string(), buf);
        let rows: Vec<Vec<String>> = series.iter().map(|s| vec![num(s.t), num(s.distance)]).collect();
        files.insert(
            "equivariance.csv".into(),
            csv_bytes(&["t".to_string(), "distance".to_string()], &rows)?,
        );
        json!({
            "state": psi.label(),
            "n": n,
            "seed": ens.seed,
            "initial": ens.initial,
            "horizon": ens.horizon,
            "dt": ens.dt,
            "record_dt": ens.record_dt,
            "order": ens.order,
            "halted": ens.halted,
            "equivariance": value_of(&series)?,
            "threshold": threshold,
            "max_distance": max,
            "equivariant": max <= threshold,
        })
    };
    let mut o = outcome("trajectories", "ok", 0, result, vec![]);
    o.files = files;
    Ok(o)
}

fn run_uncertainty(cfg: &ScenarioConfig) -> Result<Outcome> {
    let psi = parse_state(cfg.required("state")?)?;
    let r = uncertainty_check(&psi, &cfg.scheme()?)?;
    let rows: Vec<Vec<String>> = r
        .axes
        .iter()
        .map(|a| vec![a.axis.to_string(), num(a.dx2), num(a.dp2), num(a.q_p), num(a.product), a.holds.to_string()])
        .collect();
    let header = ["axis", "dx2", "dp2", "q_p", "product", "holds"].map(String::from);
    let (status, code) = if r.holds { ("ok", 0) } else { ("residual_failure", 2) };
    let mut o = outcome("uncertainty", status, code, value_of(&r)?, vec![]);
    o.files.insert("uncertainty.csv".into(), csv_bytes(&header, &rows)?);
    Ok(o)
}

/// Absolute tolerance on `Q_p − 2m⟨Q⟩` and on the route difference.
pub const QP_TOLERANCE: f64 = 1e-6;

fn run_qp(cfg: &ScenarioConfig) -> Result<Outcome> {
    let psi = parse_state(cfg.required("state")?)?;
    let r = check_qp_relation(&psi, &cfg.scheme()?)?;
    let holds = r.gap.abs() <= QP_TOLERANCE && r.route_gap.abs() <= QP_TOLERANCE;
    let mut v = value_of(&r)?;
    v["tolerance"] = value_of(&QP_TOLERANCE)?;
    v["holds"] = json!(holds);
    let (status, code) = if holds { ("ok", 0) } else { ("residual_failure", 2) };
    Ok(outcome("qp-relation", status, code, v, vec![]))
}

/// `a..b` (integers, inclusive), `a..b:k` (k evenly spaced values) or a
/// comma list.
pub fn parse_values(text: &str) -> Result<Vec<String>> {
    let bad = || config_err(format!("cannot parse sweep values `{text}`"));
    if let Some((lo, hi)) = text.split_once("..") {
        if let Some((hi, count)) = hi.split_once(':') {
            let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
            let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
            let count: usize = count.trim().parse().map_err(|_| bad())?;
            if count < 2 {
                return Err(bad());
            }
            return Ok((0..count)
                .map(|i| {
                    let v = lo + (hi - lo) * i as f64 / (count - 1) as f64;
                    format!("{v:?}")
                })
                .collect());
        }
        let lo: i64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: i64 = hi.trim().parse().map_err(|_| bad())?;
        if hi < lo {
            return Err(bad());
        }
        return Ok((lo..=hi).map(|v| v.to_string()).collect());
    }
    let v: Vec<String> = text.split(',').map(|s| s.trim().to_string()).filter(|s| !s.is_empty()).collect();
    if v.is_empty() {
        return Err(bad());
    }
    Ok(v)
}

pub const SWEEP_COLUMNS: [&str; 18] = [
    "param",
    "value",
    "state",
    "op",
    "status",
    "mean",
    "var_q",
    "var_b",
    "q_term",
    "deficit",
    "residual",
    "tol_identity",
    "second_moment",
    "identity_holds",
    "h6_satisfied",
    "converged",
    "exclusion_radius",
    "message",
];

fn run_sweep(cfg: &ScenarioConfig) -> Result<Outcome> {
    let template = cfg.required("state")?;
    let ops: Vec<&str> = cfg.required("op")?.split('|').map(str::trim).collect();
    let param = cfg.raw("sweep.param");
    let placeholder = format!("{{{param}}}");
    if !template.contains(&placeholder) && !ops.iter().any(|o| o.contains(&placeholder)) {
        return Err(config_err(format!("sweep needs `{placeholder}` in the state or op descriptor")));
    }
    let values = parse_values(cfg.raw("sweep.values"))?;
    let scheme = cfg.scheme()?;
    let mut rows = Vec::new();
    let mut entries = Vec::new();
    for value in &values {
        for op_template in &ops {
            let state = template.replace(&placeholder, value);
            let op_text = op_template.replace(&placeholder, value);
            let result = state_and_op(cfg, &state, &op_text).and_then(|(psi, op)| decompose(&op, &psi, &scheme, None));
            let mut row = vec![param.to_string(), value.clone(), state.clone(), op_text.clone()];
            match result {
                Ok(r) => {
                    let (status, _) = decomposition_status(&r);
                    row.push(status.into());
                    row.extend(
                        [r.mean, r.var_q, r.var_b, r.q_term, r.deficit, r.residual, r.tol_identity, r.second_moment]
                            .map(num),
                    );
                    row.push(r.identity_holds.to_string());
                    row.push(r.h6.satisfied.map(|b| b.to_string()).unwrap_or_default());
                    row.push(r.method.converged.to_string());
                    row.push(num(r.method.exclusion_radius));
                    row.push(String::new());
                    entries.push(json!({
                        "value": value, "state": state, "op": op_text, "status": status,
                        "mean": r.mean, "var_q": r.var_q, "var_b": r.var_b, "q_term": r.q_term,
                        "deficit": r.deficit, "residual": r.residual, "tol_identity": r.tol_identity,
                        "second_moment": r.second_moment, "identity_holds": r.identity_holds,
                        "h6": value_of(&r.h6)?, "converged": r.method.converged,
                    }));
                }
                Err(e) => {
                    row.push(e.kind().into());
                    row.extend(std::iter::repeat_n(String::new(), SWEEP_COLUMNS.len() - 6));
                    row.push(e.to_string());
                    entries.push(json!({
                        "value": value, "state": state, "op": op_text, "status": e.kind(),
                        "error": error_entry(&e),
                    }));
                }
            }
            rows.push(row);
        }
    }
    let header = SWEEP_COLUMNS.map(String::from);
    let mut o = outcome(
        "sweep",
        "ok",
        0,
        json!({ "param": param, "values": values, "rows": entries, "scheme": value_of(&scheme)? }),
        vec![],
    );
    o.files.insert("sweep.csv".into(), csv_bytes(&header, &rows)?);
    Ok(o)
}

/// Runs the task of `cfg` without touching the file system.
pub fn run_scenario(cfg: &ScenarioConfig) -> Outcome {
    let task = match cfg.task() {
        Ok(t) => t,
        Err(e) => return failure(cfg.raw("task"), &e),
    };
    let r = match task {
        "decompose" => run_decompose(cfg),
        "pointwise-check" => run_pointwise(cfg),
        "nodal" => run_nodal(cfg),
        "trajectories" => run_trajectories(cfg),
        "uncertainty" => run_uncertainty(cfg),
        "qp-relation" => run_qp(cfg),
        _ => run_sweep(cfg),
    };
    r.unwrap_or_else(|e| failure(task, &e))
}

#[derive(Serialize)]
struct Manifest<'a> {
    artifact: &'static str,
    version: &'static str,
    task: &'a str,
    status: &'a str,
    exit_code: i32,
    config: BTreeMap<String, String>,
    outputs: Vec<String>,
}

/// Writes `report.json`, `manifest.json` and the task's CSV files.
pub fn write_outputs(dir: &Path, cfg: &ScenarioConfig, o: &Outcome) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut outputs: Vec<String> = vec!["report.json".into()];
    outputs.extend(o.files.keys().cloned());
    let report = dir.join("report.json");
    fs::write(&report, to_json(&o.report)?)?;
    written.push(report);
    for (name, bytes) in &o.files {
        let p = dir.join(name);
        fs::write(&p, bytes)?;
        written.push(p);
    }
    let manifest = Manifest {
        artifact: "bohmvar",
        version: VERSION,
        task: cfg.raw("task"),
        status: o.report["status"].as_str().unwrap_or("error"),
        exit_code: o.exit_code,
        config: cfg.resolved(),
        outputs,
    };
    let p = dir.join("manifest.json");
    fs::write(&p, to_json(&manifest)?)?;
    written.push(p);
    Ok(written)
}

pub fn command() -> Command {
    let mut cmd = Command::new("bohmvar")
        .version(VERSION)
        .about("Bohmian variance decomposition laboratory")
        .subcommand_required(true)
        .arg(
            Arg::new("config")
                .long("config")
                .global(true)
                .value_name("FILE")
                .help("flat key=value configuration file"),
        );
    for (key, default) in KEYS {
        if *key == "task" {
            continue;
        }
        cmd = cmd.arg(
            Arg::new(*key)
                .long(*key)
                .global(true)
                .value_name("VALUE")
                .action(ArgAction::Set)
                .help(format!("default: {default}")),
        );
    }
    for t in TASKS {
        cmd = cmd.subcommand(Command::new(t));
    }
    cmd
}

/// Defaults, then the config file, then flags.
pub fn config_from_args<I, T>(args: I) -> std::result::Result<ScenarioConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let m = command().try_get_matches_from(args)?;
    let (task, sub) = m.subcommand().expect("subcommand required");
    let mut cfg = ScenarioConfig::default();
    let fail = |e: Error| command().error(clap::error::ErrorKind::InvalidValue, e.to_string());
    if let Some(path) = sub.get_one::<String>("config") {
        let text = fs::read_to_string(path).map_err(|e| fail(Error::Config(format!("{path}: {e}"))))?;
        cfg.apply_text(&text).map_err(fail)?;
    }
    cfg.set("task", task).map_err(fail)?;
    for (key, _) in KEYS.iter().filter(|(k, _)| *k != "task") {
        if let Some(v) = sub.get_one::<String>(key) {
            cfg.set(key, v).map_err(fail)?;
        }
    }
    Ok(cfg)
}

/// Entry point of the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cfg = match config_from_args(args) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return code;
        }
    };
    let o = run_scenario(&cfg);
    let dir = PathBuf::from(cfg.raw("out"));
    match write_outputs(&dir, &cfg, &o) {
        Ok(_) => {
            if let Some(errors) = o.report["errors"].as_array() {
                for e in errors {
                    eprintln!("error: {}", e["message"].as_str().unwrap_or(""));
                }
            }
            if let Some(w) = o.report.get("warnings").and_then(Value::as_array) {
                for w in w {
                    eprintln!("warning: {}", w.as_str().unwrap_or(""));
                }
            }
            println!("{}: {} -> {}", cfg.raw("task"), o.report["status"].as_str().unwrap_or(""), dir.display());
            o.exit_code
        }
        Err(e) => {
            eprintln!("error: cannot write outputs to {}: {e}", dir.display());
            1
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(pairs: &[(&str, &str)]) -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        for (k, v) in pairs {
            c.set(k, v).unwrap();
        }
        c
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut c = ScenarioConfig::default();
        assert!(matches!(c.set("quad.pionts", "3"), Err(Error::Config(_))));
        assert!(c.apply_text("quad.points=64\n# comment\n\nmc.n = 10").is_ok());
        assert_eq!(c.raw("quad.points"), "64");
        assert!(c.apply_text("a=1").is_err());
        assert!(c.apply_text("seed=1\nseed=2").is_err());
    }

    #[test]
    fn floats_keep_seventeen_digits() {
        let s = to_json(&json!({ "a": 0.1, "b": f64::NAN, "c": 3 })).unwrap();
        assert!(s.contains("1.0000000000000001e-1"), "{s}");
        assert!(s.contains("null"));
        assert!(s.contains("\"c\":3"));
        let back: Value = serde_json::from_str(&s).unwrap();
        assert_eq!(back["a"].as_f64().unwrap(), 0.1);
    }

    #[test]
    fn sweep_values() {
        assert_eq!(parse_values("0..3").unwrap(), vec!["0", "1", "2", "3"]);
        assert_eq!(parse_values("0..1:3").unwrap(), vec!["0.0", "0.5", "1.0"]);
        assert_eq!(parse_values("1, 4").unwrap(), vec!["1", "4"]);
        assert!(parse_values("3..1").is_err());
    }

    #[test]
    fn decompose_exit_codes() {
        let o = run_scenario(&cfg(&[("task", "decompose"), ("state", "ho1d:n=0"), ("op", "momentum")]));
        assert_eq!(o.exit_code, 0);
        assert_eq!(o.report["status"], "ok");
        let o = run_scenario(&cfg(&[("task", "decompose"), ("state", "ho1d:n=9x"), ("op", "momentum")]));
        assert_eq!(o.exit_code, 1);
        assert_eq!(o.report["errors"][0]["kind"], "descriptor");
        let o = run_scenario(&cfg(&[("task", "decompose"), ("op", "momentum")]));
        assert_eq!(o.exit_code, 1);
    }

    #[test]
    fn flags_override_file_values() {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("run.cfg");
        fs::write(&file, "state=ho1d:n=1\nquad.points=40\n").unwrap();
        let c = config_from_args([
            "bohmvar",
            "decompose",
            "--config",
            file.to_str().unwrap(),
            "--quad.points",
            "48",
            "--op",
            "momentum",
        ])
        .unwrap();
        assert_eq!(c.raw("state"), "ho1d:n=1");
        assert_eq!(c.raw("quad.points"), "48");
        assert_eq!(c.raw("task"), "decompose");
        assert!(config_from_args(["bohmvar", "decompose", "--bogus", "1"]).is_err());
    }
}
