//! Command implementations. Each writes its CSV/JSON outputs under the
//! configured directory and a short human summary to `out`.

use std::collections::BTreeSet;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use shufflelab_core::optimizer::{run as run_epochs, select};
use shufflelab_core::rates::{
    compare_tables, fit_exponent, make_problem, problem_seed, run_seed, sweep, Axis, MethodFit, SweepTable,
};
use shufflelab_core::verifier::CheckRow;
use shufflelab_core::{Error as CoreError, FiniteSum, Problem, Schedule};

use crate::config::RunConfig;
use crate::error::{LabError, Result};
use crate::exec::Pool;
use crate::formats::{self, HeaderBlock, Metadata};
use crate::suites;

/// Everything a command needs besides its own arguments.
pub struct Context {
    pub cfg: RunConfig,
    /// Config file bytes, hashed into the metadata.
    pub raw: Vec<u8>,
    pub pool: Pool,
}

impl Context {
    pub fn new(cfg: RunConfig, raw: Vec<u8>) -> Result<Self> {
        let pool = Pool::new(cfg.threads)?;
        Ok(Self { cfg, raw, pool })
    }

    pub fn output(&self, file: &str) -> PathBuf {
        self.cfg.output.join(file)
    }

    fn metadata(&self, command: &str) -> Result<()> {
        Metadata::new(command, &self.raw, self.cfg.seed).write(&self.output(&format!("metadata_{command}.json")))
    }
}

/// The problem a single run or `gen` uses: trial 0 of the configured size.
pub fn configured_problem(cfg: &RunConfig) -> Result<Problem> {
    let n = cfg.problem.n;
    Ok(make_problem(&cfg.family()?, n, problem_seed(cfg.seed, n, 0, true), None)?)
}

fn start_point(cfg: &RunConfig, problem: &Problem) -> Result<Vec<f64>> {
    let x0 = match (&cfg.problem.x0, problem) {
        (Some(x), _) => x.clone(),
        (None, Problem::Pl(p)) => vec![p.start],
        (None, Problem::Quadratic(q)) => vec![1.0; q.d],
    };
    if x0.len() != problem.dim() {
        return Err(LabError::Config(format!(
            "x0 has {} entries, problem dimension is {}",
            x0.len(),
            problem.dim()
        )));
    }
    Ok(x0)
}

pub fn gen(ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let problem = configured_problem(&ctx.cfg)?;
    std::fs::create_dir_all(&ctx.cfg.output)?;
    std::fs::write(ctx.output("problem.json"), formats::problem_json(&problem)?)?;
    ctx.metadata("gen")?;
    let c = problem.constants();
    writeln!(
        out,
        "{} problem n={} d={}: mu={:.6e} L={:.6e} G={:.6e} kappa={:.4}",
        problem.family(),
        problem.n(),
        problem.dim(),
        c.mu,
        c.ell,
        c.big_g,
        c.kappa
    )?;
    Ok(())
}

/// One run of the configured method. A non-finite iterate writes a
/// flagged trajectory row and fails with a numerical error.
pub fn run(ctx: &Context, out: &mut dyn Write) -> Result<()> {
    let cfg = &ctx.cfg;
    let problem = configured_problem(cfg)?;
    let strategy = cfg.strategy()?;
    let c = problem.constants();
    let n = problem.n();
    let epochs = cfg.method.epochs;
    let kind = cfg.schedule_kind()?;
    let schedule = Schedule::build(kind, c.mu, c.ell, n, epochs, cfg.method.alpha, cfg.method.eta)?;
    let selector = cfg.selector()?;
    let x0 = start_point(cfg, &problem)?;
    let seed = run_seed(cfg.seed, n, epochs, 0);

    std::fs::create_dir_all(&cfg.output)?;
    std::fs::write(ctx.output("problem.json"), formats::problem_json(&problem)?)?;
    let header: HeaderBlock = vec![
        ("problem_hash", formats::problem_hash(&problem)?),
        ("schedule", kind.name().to_string()),
        ("strategy", strategy.name().to_string()),
        ("seed", seed.to_string()),
        ("requirement_met", schedule.requirement_met().to_string()),
    ];
    let path = ctx.output("trajectory.csv");
    let result = run_epochs(&problem, &strategy, &schedule, epochs, &x0, seed);
    ctx.metadata("run")?;
    match result {
        Ok(t) => {
            formats::write_trajectory(formats::create(&path)?, &header, &t)?;
            let pick = select(&t, selector, &problem);
            writeln!(
                out,
                "{} epochs of {}+{} on n={}: final subopt {:.6e}, {} {:.6e}, max |x| {:.4e}, requirement met: {}",
                epochs,
                strategy.name(),
                kind.name(),
                n,
                t.subopt[epochs],
                selector.name(),
                pick.value,
                t.max_iterate_norm,
                schedule.requirement_met()
            )?;
            Ok(())
        }
        Err(CoreError::NonFinite { epoch, iteration }) => {
            formats::write_divergence(formats::create(&path)?, &header, epoch, iteration, problem.dim())?;
            writeln!(out, "diverged at epoch {epoch}, iteration {iteration}")?;
            Err(CoreError::NonFinite { epoch, iteration }.into())
        }
        Err(e) => Err(e.into()),
    }
}

fn write_sweep_files(ctx: &Context, table: &SweepTable, stem: &str) -> Result<()> {
    formats::write_sweep(
        formats::create(&ctx.output(&format!("{stem}.csv")))?,
        table.family,
        &table.method,
        table.selector,
        &table.rows,
    )?;
    formats::write_runs(formats::create(&ctx.output(&format!("{stem}_runs.csv")))?, &table.runs)
}

/// Runs the configured grid. Rows with diverged trials are written and then
/// reported as a numerical failure.
pub fn sweep_cmd(ctx: &Context, out: &mut dyn Write) -> Result<SweepTable> {
    let grid = ctx.cfg.grid()?;
    let table = sweep(&grid, ctx.cfg.seed, &ctx.pool)?;
    write_sweep_files(ctx, &table, "sweep")?;
    ctx.metadata("sweep")?;
    writeln!(out, "{} on {} ({}):", table.method.label(), table.family, table.selector.name())?;
    for r in &table.rows {
        writeln!(
            out,
            "  n={:<5} K={:<5} mean {:.4e} +- {:.2e}  requirement {}{}",
            r.n,
            r.k,
            r.mean,
            r.stderr,
            if r.requirement_met { "met" } else { "unmet" },
            if r.nonfinite > 0 {
                format!("  ({} diverged)", r.nonfinite)
            } else {
                String::new()
            }
        )?;
    }
    let diverged: usize = table.rows.iter().map(|r| r.nonfinite).sum();
    if diverged > 0 {
        return Err(LabError::Numerical(format!("{diverged} sweep run(s) diverged")));
    }
    Ok(table)
}

/// Fits along the configured axis at each requested value of the other
/// variable (every value present when none are listed).
pub fn fit(ctx: &Context, out: &mut dyn Write) -> Result<Vec<MethodFit>> {
    let cfg = &ctx.cfg;
    let axis = cfg.fit_axis()?;
    let table = formats::read_sweep(&cfg.fit.input)?;
    let fixed: Vec<usize> = if cfg.fit.fixed.is_empty() {
        let set: BTreeSet<usize> = table
            .rows
            .iter()
            .map(|r| match axis {
                Axis::K => r.n,
                Axis::N => r.k,
            })
            .collect();
        set.into_iter().collect()
    } else {
        cfg.fit.fixed.clone()
    };
    let mut fits = Vec::new();
    let mut first_err = None;
    for &v in &fixed {
        match fit_exponent(&table.rows, axis, v) {
            Ok(f) => fits.push(MethodFit {
                method: table.label.clone(),
                fit: f,
            }),
            Err(e) if cfg.fit.fixed.is_empty() => {
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e.into()),
        }
    }
    if fits.is_empty() {
        return Err(first_err
            .unwrap_or(CoreError::TooFewPoints { need: 4, got: 0 })
            .into());
    }
    formats::write_fits(formats::create(&ctx.output("fits.csv"))?, &fits)?;
    ctx.metadata("fit")?;
    for f in &fits {
        writeln!(
            out,
            "{}: {}-slope {:.4} at {}={} (r^2 {:.4}, {} points)",
            f.method,
            axis.name(),
            f.fit.slope,
            match axis {
                Axis::K => "n",
                Axis::N => "K",
            },
            f.fit.fixed,
            f.fit.r_squared,
            f.fit.points
        )?;
    }
    Ok(fits)
}

/// Joins sweep tables at equal budget `nK`; the first input is the reference.
pub fn report(ctx: &Context, inputs: &[PathBuf], out: &mut dyn Write) -> Result<()> {
    let inputs: Vec<PathBuf> = if inputs.is_empty() {
        ctx.cfg.report.inputs.clone()
    } else {
        inputs.to_vec()
    };
    if inputs.is_empty() {
        return Err(LabError::Config("report needs at least one sweep table".into()));
    }
    let mut tables = Vec::with_capacity(inputs.len());
    for p in &inputs {
        let t = formats::read_sweep(p)?;
        tables.push((t.label, t.rows));
    }
    let cmp = compare_tables(&tables);
    formats::write_comparison(formats::create(&ctx.output("comparison.csv"))?, &cmp)?;
    formats::write_fits(formats::create(&ctx.output("comparison_fits.csv"))?, &cmp.fits)?;
    ctx.metadata("report")?;
    for r in &cmp.rows {
        writeln!(
            out,
            "{:<40} n={:<5} K={:<5} mean {:.4e}  ratio {:.4}",
            r.method, r.n, r.k, r.mean, r.ratio
        )?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    All,
    Contraction,
    Concentration,
    Chung,
    Progress,
}

impl FromStr for Suite {
    type Err = LabError;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "contraction" => Suite::Contraction,
            "concentration" => Suite::Concentration,
            "chung" => Suite::Chung,
            "progress" => Suite::Progress,
            other => return Err(LabError::Config(format!("unknown suite {other:?}"))),
        })
    }
}

/// Violations found by one verify invocation, per suite.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct VerifySummary {
    pub suites: Vec<(&'static str, usize, usize)>,
}

impl VerifySummary {
    pub fn violations(&self) -> usize {
        self.suites.iter().map(|s| s.2).sum()
    }
}

fn check_summary(out: &mut dyn Write, name: &str, rows: &[CheckRow]) -> Result<usize> {
    let bad = rows.iter().filter(|r| !r.holds).count();
    let min = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
    writeln!(out, "{name}: {} checks, {bad} violations, min margin {min:.3e}", rows.len())?;
    for r in rows.iter().filter(|r| !r.holds).take(5) {
        writeln!(
            out,
            "  {} n={} d={} eta={:.4e}: lhs {:.6e} > rhs {:.6e}",
            r.lemma, r.n, r.d, r.eta, r.lhs, r.rhs
        )?;
    }
    Ok(bad)
}

/// Runs a verification suite. With `probe`, runs the exploratory AM-GM
/// probe instead of the contraction checks and never reports violations.
pub fn verify(ctx: &Context, suite: Suite, probe: bool, out: &mut dyn Write) -> Result<VerifySummary> {
    let cfg = &ctx.cfg.verify;
    let seed = ctx.cfg.seed;
    suites::validate(cfg)?;
    if probe && suite != Suite::Contraction {
        return Err(LabError::Config(
            "--eta-beyond-threshold only applies to the contraction suite".into(),
        ));
    }
    std::fs::create_dir_all(&ctx.cfg.output)?;
    let mut summary = VerifySummary::default();

    if probe {
        let rows = suites::probe(cfg, seed, &ctx.pool)?;
        formats::write_checks(formats::create(&ctx.output("probe.csv"))?, &rows)?;
        let worst = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        writeln!(out, "amgm probe: {} rows, smallest margin {worst:.3e} (exploratory)", rows.len())?;
        summary.suites.push(("probe", rows.len(), 0));
        ctx.metadata("verify")?;
        return Ok(summary);
    }

    let wants = |s: Suite| suite == Suite::All || suite == s;
    if wants(Suite::Contraction) {
        let rows = suites::contraction(cfg, seed, &ctx.pool)?;
        formats::write_checks(formats::create(&ctx.output("checks_contraction.csv"))?, &rows)?;
        let bad = check_summary(out, "contraction", &rows)?;
        summary.suites.push(("contraction", rows.len(), bad));
    }
    if wants(Suite::Progress) {
        let rows = suites::progress(cfg, seed, &ctx.pool)?;
        formats::write_checks(formats::create(&ctx.output("checks_progress.csv"))?, &rows)?;
        let bad = check_summary(out, "progress", &rows)?;
        summary.suites.push(("progress", rows.len(), bad));
    }
    if wants(Suite::Chung) {
        let rows = suites::chung(cfg, seed)?;
        let integrals = suites::integral(cfg, seed)?;
        formats::write_chung(formats::create(&ctx.output("chung.csv"))?, &rows)?;
        formats::write_integral(formats::create(&ctx.output("integral.csv"))?, &integrals)?;
        let bad = rows.iter().filter(|r| !r.holds).count() + integrals.iter().filter(|(_, r)| !r.holds).count();
        let min = rows.iter().map(|r| r.margin).fold(f64::INFINITY, f64::min);
        writeln!(
            out,
            "chung: {} recursions and {} integral checks, {bad} violations, min margin {min:.3e}",
            rows.len(),
            integrals.len()
        )?;
        summary.suites.push(("chung", rows.len() + integrals.len(), bad));
    }
    if wants(Suite::Concentration) {
        let rows = suites::concentration(cfg, seed, &ctx.pool)?;
        formats::write_concentration(formats::create(&ctx.output("concentration.csv"))?, &rows)?;
        let bad = rows.iter().filter(|r| !r.holds).count();
        let worst = rows.iter().map(|r| r.rate - r.allowance).fold(f64::NEG_INFINITY, f64::max);
        writeln!(
            out,
            "concentration: {} cells, {bad} violations, worst rate - allowance {worst:.3e}",
            rows.len()
        )?;
        summary.suites.push(("concentration", rows.len(), bad));
    }
    ctx.metadata("verify")?;
    let bad = summary.violations();
    if bad > 0 {
        return Err(LabError::Violation(bad));
    }
    Ok(summary)
}

/// Loads a config, applying command-line overrides.
pub fn load_context(config: Option<&Path>, output: Option<PathBuf>, threads: Option<usize>) -> Result<Context> {
    let (mut cfg, raw) = RunConfig::load(config)?;
    if let Some(o) = output {
        cfg.output = o;
    }
    if let Some(t) = threads {
        cfg.threads = t;
    }
    Context::new(cfg, raw)
}
