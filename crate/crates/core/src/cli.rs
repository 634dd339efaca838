//! Command-line front end.
//!
//! Without `--case` the bundled IEEE 39-bus case is used together with the
//! bundled modified load profile; `--loads` overrides per-bus loads of
//! whichever case is in use.

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::case::{fixtures, load_case_file, read_load_profile_file, Network};
use crate::contingency::{
    bilevel_row, run_baselines, run_full_pipeline, scenario_a, scenario_b, scenario_c, screen_n1, ContingencySpec,
    ScreeningRow,
};
use crate::error::{Error, Result};
use crate::report::{emit_table, OutputFormat};
use crate::sensitivity::{compute_lodf, compute_ptdf};
use crate::switching::{run_bilevel, BilevelConfig, LodfBasis};

#[derive(Debug, Parser)]
#[command(name = "gridswitch", version, about = "Post-contingency transmission switching on DC network models")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: RunOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Bi-level switching selection for one contingency.
    Bilevel,
    /// CBCE, CBVE and complete enumeration with fixed generation.
    Baseline,
    /// Load shedding with generation held at the pre-contingency dispatch.
    ScenarioA,
    /// Load shedding with re-dispatch.
    ScenarioB,
    /// Re-dispatch plus switching by complete enumeration.
    ScenarioC,
    /// Scenarios A, B, C and the bi-level selector side by side.
    Pipeline,
    /// Level-1 screening of every branch and generator outage.
    Screen,
    /// Line outage distribution factors as a matrix.
    Lodf,
    /// Power transfer distribution factors as a matrix.
    Ptdf,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Bilevel => "bilevel",
            Command::Baseline => "baseline",
            Command::ScenarioA => "scenario-a",
            Command::ScenarioB => "scenario-b",
            Command::ScenarioC => "scenario-c",
            Command::Pipeline => "pipeline",
            Command::Screen => "screen",
            Command::Lodf => "lodf",
            Command::Ptdf => "ptdf",
        }
    }
}

#[derive(Clone, Debug, clap::Args)]
pub struct RunOptions {
    /// Case file (JSON). Defaults to the bundled 39-bus case with its modified loads.
    #[arg(long, global = true, value_name = "PATH")]
    pub case: Option<PathBuf>,
    /// Per-bus load overrides (CSV with columns bus,load_mw).
    #[arg(long, global = true, value_name = "PATH")]
    pub loads: Option<PathBuf>,
    /// Outaged element, `branch:N` or `gen:N`.
    #[arg(long, global = true, value_name = "branch:N|gen:N", value_parser = parse_contingency)]
    pub contingency: Option<ContingencySpec>,
    /// Number of LODF-ranked candidates to evaluate (and baseline list length).
    #[arg(long, global = true, default_value_t = 10)]
    pub top_k: usize,
    /// Loading fraction at which a branch next to a shedding bus is a limit branch.
    #[arg(long, global = true, default_value_t = 0.95)]
    pub lbr_threshold: f64,
    /// Penalty per MW of shed load.
    #[arg(long, global = true, default_value_t = crate::dispatch::DEFAULT_SHED_WEIGHT)]
    pub shed_weight: f64,
    /// Topology the LODF matrix is computed on.
    #[arg(long, global = true, value_enum, default_value_t = LodfBasis::Post)]
    pub lodf_basis: LodfBasis,
    /// Stop evaluating candidates after the first one that sheds nothing.
    #[arg(long, global = true)]
    pub stop_at_zero_shed: bool,
    /// Output format (default: csv for lodf/ptdf, json otherwise).
    #[arg(long, global = true, value_enum)]
    pub output: Option<OutputFormat>,
    /// Write output to a file instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Report every timing as zero, for reproducible output.
    #[arg(long, global = true)]
    pub no_timing: bool,
}

fn parse_contingency(s: &str) -> std::result::Result<ContingencySpec, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Everything a run needs, resolved from the command line.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub command: Command,
    pub case_path: Option<PathBuf>,
    pub load_override_path: Option<PathBuf>,
    pub contingency: Option<ContingencySpec>,
    pub bilevel: BilevelConfig,
    pub output: OutputFormat,
    pub out_path: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<RunConfig> {
        let o = cli.opts;
        if o.top_k == 0 {
            return Err(Error::Config("--top-k must be at least 1".into()));
        }
        if !(o.lbr_threshold > 0.0 && o.lbr_threshold <= 1.0) {
            return Err(Error::Config(format!("--lbr-threshold {} must lie in (0, 1]", o.lbr_threshold)));
        }
        if !(o.shed_weight.is_finite() && o.shed_weight > 0.0) {
            return Err(Error::Config(format!("--shed-weight {} must be positive", o.shed_weight)));
        }
        let needs_contingency = !matches!(cli.command, Command::Screen | Command::Lodf | Command::Ptdf);
        if needs_contingency && o.contingency.is_none() {
            return Err(Error::Config(format!("--contingency is required for {}", cli.command.name())));
        }
        let default_output = match cli.command {
            Command::Lodf | Command::Ptdf => OutputFormat::Csv,
            _ => OutputFormat::Json,
        };
        Ok(RunConfig {
            command: cli.command,
            case_path: o.case,
            load_override_path: o.loads,
            contingency: o.contingency,
            bilevel: BilevelConfig {
                lbr_loading_frac: o.lbr_threshold,
                top_k: o.top_k,
                lodf_basis: o.lodf_basis,
                stop_at_zero_shed: o.stop_at_zero_shed,
                shed_weight: o.shed_weight,
                timing: !o.no_timing,
                ..Default::default()
            },
            output: o.output.unwrap_or(default_output),
            out_path: o.out,
        })
    }

    pub fn network(&self) -> Result<Network> {
        let net = match &self.case_path {
            Some(path) => load_case_file(path)?,
            None => fixtures::ieee39_modified(),
        };
        match &self.load_override_path {
            Some(path) => net.apply_load_profile(&read_load_profile_file(path)?),
            None => Ok(net),
        }
    }
}

fn write_json<T: Serialize + ?Sized, W: Write>(value: &T, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    Ok(())
}

fn write_screening<W: Write>(rows: &[ScreeningRow], format: OutputFormat, out: W) -> Result<()> {
    if format == OutputFormat::Json {
        return write_json(rows, out);
    }
    let mut w =
        csv::WriterBuilder::new().delimiter(if format == OutputFormat::Table { b'\t' } else { b',' }).from_writer(out);
    w.write_record(["contingency", "islanded", "level1_shed_mw", "violation_count_fixed", "needs_level2"])?;
    for r in rows {
        w.write_record([
            r.contingency.to_string(),
            r.islanded.to_string(),
            r.level1_shed_mw.map_or("-".into(), |s| format!("{:.3}", if s.abs() < 5e-4 { 0.0 } else { s })),
            r.violation_count_fixed.map_or("-".into(), |v| v.to_string()),
            r.needs_level2.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct MatrixDoc<'a> {
    rows: &'a [usize],
    columns: &'a [usize],
    values: Vec<Vec<Option<f64>>>,
}

fn matrix_doc<'a>(rows: &'a [usize], columns: &'a [usize], m: &nalgebra::DMatrix<f64>) -> MatrixDoc<'a> {
    let values =
        (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| Some(m[(i, j)]).filter(|v| v.is_finite())).collect()).collect();
    MatrixDoc { rows, columns, values }
}

/// Executes a resolved run, writing the document to `out`. Warnings go to `err`.
pub fn execute(cfg: &RunConfig, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    let net = cfg.network()?;
    let bl = &cfg.bilevel;
    let contingency = || cfg.contingency.ok_or_else(|| Error::Config("--contingency is required".into()));
    match cfg.command {
        Command::Bilevel => {
            let report = run_bilevel(&net, &contingency()?, bl)?;
            match cfg.output {
                OutputFormat::Json => write_json(&report, out),
                f => emit_table(&[bilevel_row(&report)], f, out),
            }
        }
        Command::Baseline => {
            let report = run_baselines(&net, &contingency()?, bl.top_k, bl)?;
            for m in report.methods.iter().filter(|m| !m.cleared_by.is_empty()) {
                writeln!(
                    err,
                    "warning: {} candidate(s) {:?} clear all violations in the DC model without shedding",
                    m.method, m.cleared_by
                )?;
            }
            match cfg.output {
                OutputFormat::Json => write_json(&report, out),
                f => emit_table(&report.rows(), f, out),
            }
        }
        Command::ScenarioA => emit_table(&[scenario_a(&net, &contingency()?, bl)?], cfg.output, out),
        Command::ScenarioB => emit_table(&[scenario_b(&net, &contingency()?, bl)?], cfg.output, out),
        Command::ScenarioC => emit_table(&[scenario_c(&net, &contingency()?, bl)?], cfg.output, out),
        Command::Pipeline => {
            let report = run_full_pipeline(&net, &contingency()?, bl)?;
            match cfg.output {
                OutputFormat::Json => write_json(&report, out),
                f => emit_table(&report.rows, f, out),
            }
        }
        Command::Screen => write_screening(&screen_n1(&net, bl)?, cfg.output, out),
        Command::Lodf | Command::Ptdf => {
            let target = match cfg.contingency {
                Some(c) => c.apply(&net)?,
                None => net,
            };
            let ptdf = compute_ptdf(&target)?;
            if cfg.command == Command::Ptdf {
                match cfg.output {
                    OutputFormat::Json => write_json(&matrix_doc(&ptdf.branch_ids, &ptdf.bus_ids, &ptdf.values), out),
                    _ => ptdf.write_csv(out),
                }
            } else {
                let lodf = compute_lodf(&ptdf, &target)?;
                match cfg.output {
                    OutputFormat::Json => {
                        write_json(&matrix_doc(&lodf.branch_ids, &lodf.branch_ids, &lodf.values), out)
                    }
                    _ => lodf.write_csv(out),
                }
            }
        }
    }
}

/// A closed downstream pipe (e.g. `| head`) is not a failure.
fn is_broken_pipe(e: &Error) -> bool {
    let kind = match e {
        Error::Io(e) => Some(e.kind()),
        Error::Json(e) => e.io_error_kind(),
        Error::Csv(e) => match e.kind() {
            csv::ErrorKind::Io(e) => Some(e.kind()),
            _ => None,
        },
        _ => None,
    };
    kind == Some(std::io::ErrorKind::BrokenPipe)
}

/// Parses `args` (including the program name), runs, and returns the exit
/// code: 0 on success, 1 on usage or input errors, 2 when the analysis
/// itself fails (islanding, infeasibility, singular network).
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            let _ = if code == 0 { write!(stdout, "{text}") } else { write!(stderr, "{text}") };
            return code;
        }
    };
    let result = RunConfig::from_cli(cli).and_then(|cfg| match &cfg.out_path {
        Some(path) => {
            let mut file = BufWriter::new(File::create(path)?);
            execute(&cfg, &mut file, stderr)?;
            file.flush()?;
            Ok(())
        }
        None => execute(&cfg, stdout, stderr),
    });
    match result {
        Ok(()) => 0,
        Err(e) if is_broken_pipe(&e) => 0,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            if e.is_analysis_failure() {
                2
            } else {
                1
            }
        }
    }
}
