//! Batch front end: configuration files, subcommands and report files.
//!
//! Exit codes: 0 when the run passes (or runs ungated), 2 when the ratio
//! ladder is unstable, 3 when hypotheses are rejected, 4 for configuration
//! errors and 1 for anything else.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::corpus::{check_gradient, CorpusSpec, SmoothField, CORPUS_NAMES};
use crate::error::{Error, Result};
use crate::harness::{
    derive_exponents, validate_hypotheses, Experiment, ExperimentId, ExperimentKind,
    HypothesisSet, RatioReport, RunSettings,
};
use crate::quadrature::QuadratureBudget;
use crate::weights::{
    check_doubling, estimate_lower_ahlfors, muckenhoupt_refinement, BallMassTable, FamilySpec,
    Weight,
};

pub const EXIT_PASS: i32 = 0;
pub const EXIT_OTHER: i32 = 1;
pub const EXIT_UNSTABLE: i32 = 2;
pub const EXIT_REJECTED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

/// Environment variable fixing the worker thread count.
pub const THREADS_ENV: &str = "SUBREP_THREADS";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    CsvJson,
    Csv,
    Json,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    /// File stem; the experiment id when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stem: Option<String>,
    pub format: OutputFormat,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("."),
            stem: None,
            format: OutputFormat::CsvJson,
        }
    }
}

/// One experiment as read from a JSON config file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentId,
    pub hypotheses: HypothesisSet,
    #[serde(default = "default_corpus")]
    pub corpus: Vec<CorpusSpec>,
    #[serde(default)]
    pub settings: RunSettings,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_corpus() -> Vec<CorpusSpec> {
    CORPUS_NAMES.iter().map(|n| CorpusSpec::named(n)).collect()
}

impl ExperimentConfig {
    pub fn new(experiment: ExperimentId, hypotheses: HypothesisSet) -> Self {
        Self {
            experiment,
            hypotheses,
            corpus: default_corpus(),
            settings: RunSettings::default(),
            output: OutputSpec::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.check_catalog()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Every referenced catalog name resolves.
    pub fn check_catalog(&self) -> Result<()> {
        self.build_corpus()?;
        let n = self.hypotheses.n;
        crate::kernels::KernelOnSphere::from_spec(&self.hypotheses.kernel, n)
            .map_err(|e| Error::Config(e.to_string()))?;
        Weight::from_spec(&self.hypotheses.weight, n).map_err(|e| Error::Config(e.to_string()))?;
        Ok(())
    }

    pub fn build_corpus(&self) -> Result<Vec<SmoothField>> {
        self.corpus
            .iter()
            .map(|c| c.build(self.hypotheses.n).map_err(|e| Error::Config(e.to_string())))
            .collect()
    }

    fn stem(&self) -> String {
        self.output.stem.clone().unwrap_or_else(|| self.experiment.to_string())
    }

    pub fn csv_path(&self) -> PathBuf {
        self.output.dir.join(format!("{}.csv", self.stem()))
    }

    pub fn json_path(&self) -> PathBuf {
        self.output.dir.join(format!("{}.json", self.stem()))
    }
}

/// Writes one row per record: experiment, function, level, x coordinates
/// (blank for norm records), lhs, rhs, ratio, excluded.
pub fn write_report_csv<W: Write>(report: &RatioReport, out: W) -> Result<()> {
    let n = report.hypotheses.n;
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["experiment".to_string(), "function".into(), "level".into()];
    header.extend((0..n).map(|i| format!("x{i}")));
    header.extend(["lhs", "rhs", "ratio", "excluded"].map(String::from));
    w.write_record(&header)?;
    for r in &report.records {
        let mut row = vec![report.experiment.to_string(), r.function.clone(), r.level.to_string()];
        match &r.x {
            Some(x) => row.extend(x.coords().iter().map(|c| c.to_string())),
            None => row.extend((0..n).map(|_| String::new())),
        }
        row.push(r.lhs.to_string());
        row.push(r.rhs.to_string());
        row.push(r.ratio.map(|v| v.to_string()).unwrap_or_default());
        row.push(r.excluded.to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report_json<W: Write>(report: &RatioReport, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &report.summary())?;
    writeln!(out)?;
    Ok(())
}

/// Runs a configured experiment and writes its report files.
pub fn run_config(cfg: &ExperimentConfig) -> Result<RatioReport> {
    let exp = Experiment::new(
        cfg.experiment,
        cfg.hypotheses.clone(),
        cfg.build_corpus()?,
        cfg.settings.clone(),
    )?;
    let report = exp.run()?;
    fs::create_dir_all(&cfg.output.dir)?;
    if cfg.output.format != OutputFormat::Json {
        write_report_csv(&report, fs::File::create(cfg.csv_path())?)?;
    }
    if cfg.output.format != OutputFormat::Csv {
        write_report_json(&report, fs::File::create(cfg.json_path())?)?;
    }
    Ok(report)
}

pub fn exit_code_for(result: &Result<RatioReport>) -> i32 {
    match result {
        Ok(r) => match r.pass {
            Some(false) => EXIT_UNSTABLE,
            _ => EXIT_PASS,
        },
        Err(e) => error_exit_code(e),
    }
}

pub fn error_exit_code(e: &Error) -> i32 {
    match e {
        Error::HypothesesRejected(_) => EXIT_REJECTED,
        Error::Config(_) | Error::Catalog(_) | Error::UnknownExperiment(_) => EXIT_CONFIG,
        _ => EXIT_OTHER,
    }
}

/// Parses a decimal or a fraction such as `4/3`.
pub fn parse_number(s: &str) -> std::result::Result<f64, String> {
    let parse = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("`{s}`: {e}"));
    match s.split_once('/') {
        Some((a, b)) => {
            let den = parse(b)?;
            if den == 0.0 {
                return Err(format!("`{s}`: zero denominator"));
            }
            Ok(parse(a)? / den)
        }
        None => parse(s),
    }
}

#[derive(Debug, Parser)]
#[command(name = "subrep", version, about = "Weighted subrepresentation inequality experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print derived exponents and the hypotheses each experiment checks.
    Derive(ParamArgs),
    /// Check the hypotheses of a config file or of command-line parameters.
    Validate(ValidateArgs),
    /// Run a pointwise experiment from a config file.
    Pointwise(RunArgs),
    /// Run a norm (Sobolev) experiment from a config file.
    Sobolev(RunArgs),
    /// Run any experiment from a config file.
    Run(RunArgs),
    /// Estimate Muckenhoupt, doubling and Ahlfors constants of a weight.
    WeightsProbe(ProbeArgs),
    /// Check analytic corpus gradients against finite differences.
    CorpusCheck(CorpusArgs),
}

#[derive(Debug, Clone, Args)]
pub struct ParamArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, value_parser = parse_number)]
    pub rho: Option<f64>,
    #[arg(long, value_parser = parse_number)]
    pub delta: Option<f64>,
    /// Poincaré exponent.
    #[arg(long = "s", value_parser = parse_number)]
    pub frak_s: Option<f64>,
    #[arg(long, value_parser = parse_number)]
    pub alpha: Option<f64>,
    #[arg(long, value_parser = parse_number)]
    pub q: Option<f64>,
    #[arg(long, value_parser = parse_number)]
    pub a: Option<f64>,
    #[arg(long, value_parser = parse_number)]
    pub b: Option<f64>,
    #[arg(long = "p-frak", value_parser = parse_number)]
    pub frak_p: Option<f64>,
    #[arg(long = "q-frak", value_parser = parse_number)]
    pub frak_q: Option<f64>,
    #[arg(long = "a-frak", value_parser = parse_number)]
    pub frak_a: Option<f64>,
    #[arg(long = "b-frak", value_parser = parse_number)]
    pub frak_b: Option<f64>,
    #[arg(long, value_parser = parse_number)]
    pub d: Option<f64>,
    #[arg(long, value_parser = parse_number)]
    pub beta: Option<f64>,
    #[arg(long, default_value = "const:1")]
    pub weight: String,
    #[arg(long, default_value = "cosine")]
    pub kernel: String,
    /// Restrict the hypothesis report to one experiment id.
    #[arg(long)]
    pub theorem: Option<String>,
}

impl ParamArgs {
    pub fn hypotheses(&self) -> HypothesisSet {
        HypothesisSet {
            n: self.n,
            rho: self.rho,
            delta: self.delta,
            frak_s: self.frak_s,
            alpha: self.alpha,
            q: self.q,
            a: self.a,
            b: self.b,
            frak_p: self.frak_p,
            frak_q: self.frak_q,
            frak_a: self.frak_a,
            frak_b: self.frak_b,
            d: self.d,
            beta: self.beta,
            weight: self.weight.clone(),
            kernel: self.kernel.clone(),
        }
    }
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub params: ParamArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Override the number of refinement levels.
    #[arg(long)]
    pub levels: Option<usize>,
    /// Override the output directory.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Run even when hypotheses fail, without a verdict.
    #[arg(long)]
    pub no_gate: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub weight: String,
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, value_parser = parse_number, default_value = "1")]
    pub delta: f64,
    #[arg(long, default_value_t = 3)]
    pub levels: usize,
    /// Write the base ball-mass table as CSV.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CorpusArgs {
    #[arg(long, default_value_t = 2)]
    pub n: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// Maximum accepted relative gradient error.
    #[arg(long, default_value_t = 1e-5)]
    pub tolerance: f64,
}

/// Executes a parsed command, writing human-readable output to `out`, and
/// returns the process exit code.
pub fn execute<W: Write>(cli: Cli, out: &mut W) -> i32 {
    let result = match cli.command {
        Command::Derive(p) => derive(&p, out),
        Command::Validate(v) => validate(&v, out),
        Command::Pointwise(r) => run(&r, Some(ExperimentKind::Pointwise), out),
        Command::Sobolev(r) => run(&r, Some(ExperimentKind::Sobolev), out),
        Command::Run(r) => run(&r, None, out),
        Command::WeightsProbe(p) => probe(&p, out),
        Command::CorpusCheck(c) => corpus_check(&c, out),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(out, "error: {e}");
            if let Error::HypothesesRejected(v) = &e {
                let _ = write!(out, "{v}");
            }
            error_exit_code(&e)
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| {
        let r = (x * 1e10).round() / 1e10;
        format!("{}", if r == 0.0 { 0.0 } else { r })
    })
    .unwrap_or_else(|| "-".into())
}

fn derive<W: Write>(p: &ParamArgs, out: &mut W) -> Result<i32> {
    let h = p.hypotheses();
    let d = derive_exponents(&h)?;
    writeln!(out, "derived exponents (n = {}):", h.n)?;
    for (name, v) in [
        ("rho_bar", d.rho_bar),
        ("rho'", d.rho_prime),
        ("theta", d.theta),
        ("vartheta", d.vartheta),
        ("vartheta (Sobolev)", d.vartheta_sobolev),
        ("r", d.r),
        ("s", d.s),
        ("d(delta, beta)", d.d_of_beta),
    ] {
        if v.is_some() {
            writeln!(out, "  {name} = {}", fmt_opt(v))?;
        }
    }
    let ids: Vec<ExperimentId> = match &p.theorem {
        Some(t) => vec![t.parse()?],
        None => ExperimentId::ALL.to_vec(),
    };
    for id in ids {
        let v = validate_hypotheses(&h, id.as_str())?;
        let incomplete = v.constraints.iter().any(|c| c.name.ends_with(" is given"));
        if p.theorem.is_some() || (!incomplete && !v.constraints.is_empty()) {
            write!(out, "{v}")?;
        }
    }
    Ok(EXIT_PASS)
}

fn validate<W: Write>(v: &ValidateArgs, out: &mut W) -> Result<i32> {
    let (h, theorem) = match &v.config {
        Some(path) => {
            let cfg = ExperimentConfig::load(path)?;
            (cfg.hypotheses, cfg.experiment.to_string())
        }
        None => {
            let t = v
                .params
                .theorem
                .clone()
                .ok_or_else(|| Error::Config("validate needs --config or --theorem".into()))?;
            (v.params.hypotheses(), t)
        }
    };
    let val = validate_hypotheses(&h, &theorem)?;
    write!(out, "{val}")?;
    Ok(if val.pass { EXIT_PASS } else { EXIT_REJECTED })
}

fn run<W: Write>(args: &RunArgs, kind: Option<ExperimentKind>, out: &mut W) -> Result<i32> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(k) = kind {
        if cfg.experiment.kind() != k {
            return Err(Error::Config(format!(
                "experiment {} is not a {} experiment",
                cfg.experiment,
                if k == ExperimentKind::Pointwise { "pointwise" } else { "norm" }
            )));
        }
    }
    if let Some(l) = args.levels {
        cfg.settings.levels = l;
    }
    if let Some(d) = &args.out_dir {
        cfg.output.dir = d.clone();
    }
    cfg.settings.no_gate |= args.no_gate;
    let result = run_config(&cfg);
    if let Ok(r) = &result {
        writeln!(out, "{}: ladder {:?}", r.experiment, r.ladder)?;
        writeln!(out, "  max ratio {:.6}, median {:.6}, excluded {}", r.max_ratio, r.median_ratio, r.exclusions)?;
        let verdict = match r.pass {
            Some(true) => "stable",
            Some(false) => "UNSTABLE",
            None => "no verdict (hypotheses not satisfied; growth reported)",
        };
        writeln!(out, "  {verdict}; growth {:?}", r.growth)?;
        if r.pass.is_none() {
            write!(out, "{}", r.validation)?;
        }
    }
    let code = exit_code_for(&result);
    result?;
    Ok(code)
}

fn probe<W: Write>(p: &ProbeArgs, out: &mut W) -> Result<i32> {
    let w = Weight::from_spec(&p.weight, p.n)?;
    let budget = QuadratureBudget::for_dim(p.n);
    let spec = FamilySpec::standard(p.n);
    writeln!(out, "weight {} in n = {}", w.label(), p.n)?;
    writeln!(out, "  catalog class A_{}: {}", p.delta, w.in_muckenhoupt_class(p.delta))?;
    let est = muckenhoupt_refinement(&w, p.delta, &spec, p.levels.max(1), &budget)?;
    writeln!(out, "  A_{} estimates by refinement: {:?}", p.delta, est.history)?;
    if let Some(g) = est.last_growth() {
        writeln!(out, "  last relative growth {g:.4}")?;
    }
    let table = BallMassTable::build(&w, &spec.build()?, &budget)?;
    let samples: Vec<_> = table.entries().map(|(b, _)| (b, 2.0)).collect();
    let doubling = check_doubling(&w, p.delta, est.value, &samples, &budget)?;
    writeln!(
        out,
        "  doubling with lambda = 2: {} samples, {} violations, max ratio {:.6}",
        doubling.samples.len(),
        doubling.violations.len(),
        doubling.max_ratio
    )?;
    match w.lower_ahlfors_exponent() {
        Some(d) if d > 1.0 => {
            let c = estimate_lower_ahlfors(d, &table)?;
            writeln!(out, "  lower Ahlfors exponent {d}, constant estimate {c:.6}")?;
        }
        _ => writeln!(out, "  no global lower Ahlfors exponent")?,
    }
    if let Some(path) = &p.table_out {
        table.write_csv(fs::File::create(path)?)?;
    }
    Ok(EXIT_PASS)
}

fn corpus_check<W: Write>(c: &CorpusArgs, out: &mut W) -> Result<i32> {
    let mut ok = true;
    for name in CORPUS_NAMES {
        let f = CorpusSpec::named(name).build(c.n)?;
        let g = check_gradient(&f, c.seed)?;
        let pass = g.max_relative_error <= c.tolerance;
        ok &= pass;
        writeln!(
            out,
            "  {name:<10} {} points, max relative error {:.3e} {}",
            g.points,
            g.max_relative_error,
            if pass { "ok" } else { "FAIL" }
        )?;
    }
    Ok(if ok { EXIT_PASS } else { EXIT_OTHER })
}
