//! CSV tables, problem JSON and run metadata.
//!
//! Floats are written with 17 significant digits (`{:.16e}`) so every
//! value round-trips and identical runs give identical bytes.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::value::RawValue;
use sha2::{Digest, Sha256};
use shufflelab_core::chung::IntegralReport;
use shufflelab_core::optimizer::{IterateSelector, Trajectory};
use shufflelab_core::problems::Problem;
use shufflelab_core::rates::{Comparison, Method, MethodFit, RateFit, RunRecord, SweepRow};
use shufflelab_core::verifier::CheckRow;
use shufflelab_core::FiniteSum;

use crate::error::{LabError, Result};

pub fn fmt_f(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f(s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .map_err(|_| LabError::Config(format!("not a number: {s:?}")))
}

fn parse_u(s: &str) -> Result<usize> {
    s.trim()
        .parse()
        .map_err(|_| LabError::Config(format!("not a count: {s:?}")))
}

/// Opens `path` for writing, creating parent directories.
pub fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn csv_writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(w)
}

/// `# key: value` lines written above a trajectory table.
pub type HeaderBlock = Vec<(&'static str, String)>;

fn write_header<W: Write>(w: &mut W, header: &HeaderBlock) -> Result<()> {
    for (k, v) in header {
        writeln!(w, "# {k}: {v}")?;
    }
    Ok(())
}

pub fn write_trajectory<W: Write>(mut w: W, header: &HeaderBlock, t: &Trajectory) -> Result<()> {
    let d = t.iterates[0].len();
    write_header(&mut w, header)?;
    let mut out = csv_writer(w);
    let mut header = vec!["epoch".to_string(), "subopt".into(), "dist2".into(), "status".into()];
    header.extend((0..d).map(|j| format!("x{j}")));
    out.write_record(&header)?;
    for (k, x) in t.iterates.iter().enumerate() {
        let mut rec = vec![(k + 1).to_string(), fmt_f(t.subopt[k]), fmt_f(t.dist2[k]), "ok".into()];
        rec.extend(x.iter().map(|v| fmt_f(*v)));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}

/// A trajectory file holding only the divergence marker.
pub fn write_divergence<W: Write>(
    mut w: W,
    header: &HeaderBlock,
    epoch: usize,
    iteration: usize,
    d: usize,
) -> Result<()> {
    write_header(&mut w, header)?;
    let mut out = csv_writer(w);
    let mut header = vec!["epoch".to_string(), "subopt".into(), "dist2".into(), "status".into()];
    header.extend((0..d).map(|j| format!("x{j}")));
    out.write_record(&header)?;
    let mut rec = vec![
        epoch.to_string(),
        fmt_f(f64::NAN),
        fmt_f(f64::NAN),
        format!("nonfinite@{iteration}"),
    ];
    rec.extend((0..d).map(|_| fmt_f(f64::NAN)));
    out.write_record(&rec)?;
    out.flush()?;
    Ok(())
}

pub const SWEEP_HEADER: [&str; 12] = [
    "family",
    "method",
    "schedule",
    "selector",
    "n",
    "K",
    "trials",
    "mean",
    "stderr",
    "requirement_met",
    "seed",
    "nonfinite",
];

pub fn write_sweep<W: Write>(
    w: W,
    family: &str,
    method: &Method,
    selector: IterateSelector,
    rows: &[SweepRow],
) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(SWEEP_HEADER)?;
    for r in rows {
        out.write_record([
            family.to_string(),
            method.sampling.name().to_string(),
            method.schedule.name().to_string(),
            selector.name().to_string(),
            r.n.to_string(),
            r.k.to_string(),
            r.trials.to_string(),
            fmt_f(r.mean),
            fmt_f(r.stderr),
            r.requirement_met.to_string(),
            r.seed.to_string(),
            r.nonfinite.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// A sweep table read back from CSV, labelled `strategy+schedule`.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepFile {
    pub label: String,
    pub rows: Vec<SweepRow>,
}

pub fn read_sweep(path: &Path) -> Result<SweepFile> {
    let file = File::open(path).map_err(|e| LabError::Config(format!("{}: {e}", path.display())))?;
    let mut rdr = csv::Reader::from_reader(file);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| LabError::Config(format!("{}: missing column {name}", path.display())))
    };
    let (c_method, c_sched, c_n, c_k) = (col("method")?, col("schedule")?, col("n")?, col("K")?);
    let (c_trials, c_mean, c_se) = (col("trials")?, col("mean")?, col("stderr")?);
    let c_req = col("requirement_met").ok();
    let c_seed = col("seed").ok();
    let c_nf = col("nonfinite").ok();
    let mut label = String::new();
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        if label.is_empty() {
            label = format!("{}+{}", &rec[c_method], &rec[c_sched]);
        }
        rows.push(SweepRow {
            n: parse_u(&rec[c_n])?,
            k: parse_u(&rec[c_k])?,
            trials: parse_u(&rec[c_trials])?,
            mean: parse_f(&rec[c_mean])?,
            stderr: parse_f(&rec[c_se])?,
            requirement_met: c_req.map(|c| &rec[c] == "true").unwrap_or(false),
            nonfinite: match c_nf {
                Some(c) => parse_u(&rec[c])?,
                None => 0,
            },
            seed: match c_seed {
                Some(c) => rec[c].trim().parse().unwrap_or(0),
                None => 0,
            },
        });
    }
    Ok(SweepFile { label, rows })
}

pub fn write_runs<W: Write>(w: W, runs: &[RunRecord]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["n", "K", "trial", "seed", "last", "best", "tail_average", "max_iterate_norm", "nonfinite"])?;
    for r in runs {
        out.write_record([
            r.n.to_string(),
            r.k.to_string(),
            r.trial.to_string(),
            r.seed.to_string(),
            fmt_f(r.last),
            fmt_f(r.best),
            fmt_f(r.tail),
            fmt_f(r.max_iterate_norm),
            r.nonfinite.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_checks<W: Write>(w: W, rows: &[CheckRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["lemma", "n", "d", "eta", "lhs", "rhs", "margin", "mode", "samples", "stderr", "holds"])?;
    for r in rows {
        out.write_record([
            r.lemma.to_string(),
            r.n.to_string(),
            r.d.to_string(),
            fmt_f(r.eta),
            fmt_f(r.lhs),
            fmt_f(r.rhs),
            fmt_f(r.margin),
            r.mode.to_string(),
            r.samples.to_string(),
            r.std_error.map(fmt_f).unwrap_or_default(),
            r.holds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One Hoeffding–Serfling grid cell.
#[derive(Debug, Clone, PartialEq)]
pub struct HsRow {
    pub family: &'static str,
    pub n: usize,
    pub i: usize,
    pub delta: f64,
    pub big_g: f64,
    pub trials: usize,
    pub rate: f64,
    pub bound: f64,
    /// Largest rate accepted (`delta` plus three binomial standard deviations).
    pub allowance: f64,
    pub holds: bool,
}

pub fn write_concentration<W: Write>(w: W, rows: &[HsRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["family", "n", "i", "delta", "G", "trials", "rate", "bound", "allowance", "holds"])?;
    for r in rows {
        out.write_record([
            r.family.to_string(),
            r.n.to_string(),
            r.i.to_string(),
            fmt_f(r.delta),
            fmt_f(r.big_g),
            r.trials.to_string(),
            fmt_f(r.rate),
            fmt_f(r.bound),
            fmt_f(r.allowance),
            r.holds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// One Chung bound evaluated against its extremal sequence. Parameters a
/// lemma does not use are `None`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ChungRow {
    pub lemma: &'static str,
    pub k0: f64,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: Option<f64>,
    pub xi0: f64,
    pub a: Option<f64>,
    pub a1: Option<f64>,
    pub a2: Option<f64>,
    pub a3: Option<f64>,
    pub n: Option<u64>,
    pub eps: Option<f64>,
    pub epochs: u64,
    pub xi_k: f64,
    pub bound: f64,
    pub margin: f64,
    pub holds: bool,
}

pub fn write_chung<W: Write>(w: W, rows: &[ChungRow]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record([
        "lemma", "k0", "alpha", "beta", "gamma", "xi0", "A", "A1", "A2", "A3", "n", "eps", "K", "xi_K", "bound",
        "margin", "holds",
    ])?;
    let opt = |v: Option<f64>| v.map(fmt_f).unwrap_or_default();
    for r in rows {
        out.write_record([
            r.lemma.to_string(),
            fmt_f(r.k0),
            fmt_f(r.alpha),
            fmt_f(r.beta),
            opt(r.gamma),
            fmt_f(r.xi0),
            opt(r.a),
            opt(r.a1),
            opt(r.a2),
            opt(r.a3),
            r.n.map(|v| v.to_string()).unwrap_or_default(),
            opt(r.eps),
            r.epochs.to_string(),
            fmt_f(r.xi_k),
            fmt_f(r.bound),
            fmt_f(r.margin),
            r.holds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_integral<W: Write>(w: W, rows: &[(&'static str, IntegralReport)]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["function", "m", "n", "sum", "integral", "lower", "upper", "increasing", "holds"])?;
    for (name, r) in rows {
        out.write_record([
            name.to_string(),
            r.m.to_string(),
            r.n.to_string(),
            fmt_f(r.sum),
            fmt_f(r.integral),
            fmt_f(r.lower),
            fmt_f(r.upper),
            r.increasing.to_string(),
            r.holds.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_fits<W: Write>(w: W, fits: &[MethodFit]) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["method", "axis", "fixed", "slope", "intercept", "r_squared", "points"])?;
    for f in fits {
        let RateFit {
            axis,
            fixed,
            slope,
            intercept,
            r_squared,
            points,
        } = f.fit;
        out.write_record([
            f.method.clone(),
            axis.name().to_string(),
            fixed.to_string(),
            fmt_f(slope),
            fmt_f(intercept),
            fmt_f(r_squared),
            points.to_string(),
        ])?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_comparison<W: Write>(w: W, c: &Comparison) -> Result<()> {
    let mut out = csv_writer(w);
    out.write_record(["method", "n", "K", "budget", "mean", "stderr", "ratio"])?;
    for r in &c.rows {
        out.write_record([
            r.method.clone(),
            r.n.to_string(),
            r.k.to_string(),
            r.budget.to_string(),
            fmt_f(r.mean),
            fmt_f(r.stderr),
            fmt_f(r.ratio),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn raw(x: f64) -> Box<RawValue> {
    let s = if x.is_finite() { fmt_f(x) } else { "null".into() };
    RawValue::from_string(s).expect("formatted float is valid JSON")
}

#[derive(Serialize)]
struct ConstantsJson {
    mu: Box<RawValue>,
    ell: Box<RawValue>,
    #[serde(rename = "G")]
    big_g: Box<RawValue>,
    kappa: Box<RawValue>,
}

#[derive(Serialize)]
struct ProblemJson {
    family: &'static str,
    n: usize,
    d: usize,
    /// Row-major `A_i`; empty for PŁ problems.
    matrices: Vec<Vec<Box<RawValue>>>,
    /// `b_i` for quadratics, `[c_i]` for PŁ problems.
    vectors: Vec<Vec<Box<RawValue>>>,
    constants: ConstantsJson,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    start: Option<Box<RawValue>>,
}

pub fn problem_json(problem: &Problem) -> Result<String> {
    let k = problem.constants();
    let mut doc = ProblemJson {
        family: problem.family(),
        n: problem.n(),
        d: problem.dim(),
        matrices: Vec::new(),
        vectors: Vec::new(),
        constants: ConstantsJson {
            mu: raw(k.mu),
            ell: raw(k.ell),
            big_g: raw(k.big_g),
            kappa: raw(k.kappa),
        },
        seed: problem.seed(),
        start: None,
    };
    match problem {
        Problem::Quadratic(q) => {
            for c in &q.components {
                doc.matrices.push(c.a.as_slice().iter().map(|v| raw(*v)).collect());
                doc.vectors.push(c.b.iter().map(|v| raw(*v)).collect());
            }
        }
        Problem::Pl(p) => {
            doc.vectors = p.c.iter().map(|v| vec![raw(*v)]).collect();
            doc.start = Some(raw(p.start));
        }
    }
    let mut s = serde_json::to_string_pretty(&doc)?;
    s.push('\n');
    Ok(s)
}

/// SHA-256 of the problem document, hex encoded.
pub fn problem_hash(problem: &Problem) -> Result<String> {
    Ok(hex::encode(Sha256::digest(problem_json(problem)?.as_bytes())))
}

#[derive(Debug, Serialize)]
pub struct Metadata {
    pub command: String,
    pub config_hash: String,
    pub tool_version: &'static str,
    pub seed: u64,
    pub timestamp: u64,
}

impl Metadata {
    pub fn new(command: &str, config_bytes: &[u8], seed: u64) -> Self {
        let timestamp = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        Self {
            command: command.to_string(),
            config_hash: hex::encode(Sha256::digest(config_bytes)),
            tool_version: env!("CARGO_PKG_VERSION"),
            seed,
            timestamp,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut w = create(path)?;
        serde_json::to_writer_pretty(&mut w, self)?;
        w.write_all(b"\n")?;
        w.flush()?;
        Ok(())
    }
}
