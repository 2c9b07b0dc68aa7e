//! The `permlab` command line.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use serde::Serialize;

use crate::config::{DensityConfig, ExperimentConfig, SampleConfig, VerifyConfig, DEFAULT_SEED};
use crate::density::density_quadrature;
use crate::error::{Error, Result};
use crate::kernel::{classify, DEFAULT_TOL};
use crate::matrix::SquareMatrix;
use crate::verify::Report;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Parser)]
#[command(name = "permlab", version, about = "Permanental vectors of finite Markov chains")]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true, env = "PERMLAB_THREADS")]
    pub threads: Option<usize>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file; stdout if absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Report the structural properties of a kernel given as CSV or JSON.
    Classify {
        file: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOL)]
        tol: f64,
    },
    /// Evaluate the density on a grid of points.
    Density {
        #[arg(long)]
        config: PathBuf,
    },
    /// Draw a batch of samples.
    Sample {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run one verification experiment or a suite.
    Verify {
        #[arg(long)]
        config: PathBuf,
    },
}

/// What a command writes, plus the exit code.
pub struct Outcome {
    pub output: String,
    pub code: i32,
    pub summary: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentRecord {
    pub config: ExperimentConfig,
    pub report: Report,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultRecord {
    pub tool: &'static str,
    pub version: &'static str,
    pub wall_time_s: f64,
    pub experiments: Vec<ExperimentRecord>,
    pub pass: bool,
    pub max_z: f64,
    pub summary: Vec<String>,
}

impl ResultRecord {
    /// Comparison table for plotting.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("experiment,kind,label,lhs,lhs_stderr,rhs,rhs_stderr,z,one_sided,pass\n");
        for (i, e) in self.experiments.iter().enumerate() {
            let name = e.config.name.clone().unwrap_or_else(|| format!("#{i}"));
            for c in &e.report.comparisons {
                s.push_str(&format!(
                    "{},{},{},{:?},{:?},{:?},{:?},{:?},{},{}\n",
                    csv_field(&name),
                    e.report.kind,
                    csv_field(&c.label),
                    c.lhs,
                    c.lhs_stderr,
                    c.rhs,
                    c.rhs_stderr,
                    c.z,
                    c.one_sided,
                    c.pass
                ));
            }
        }
        s
    }
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn read_config(path: &Path) -> Result<(String, PathBuf)> {
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((text, base))
}

fn header_comment(config: &impl Serialize) -> Result<String> {
    Ok(format!("# config={}\n", serde_json::to_string(config)?))
}

pub fn cmd_classify(file: &Path, tol: f64) -> Result<Outcome> {
    let g = SquareMatrix::load(file)?;
    let report = classify(&g, tol)?;
    Ok(Outcome { output: serde_json::to_string_pretty(&report)? + "\n", code: 0, summary: None })
}

pub fn cmd_density(path: &Path) -> Result<Outcome> {
    let (text, base) = read_config(path)?;
    let mut cfg: DensityConfig = serde_json::from_str(&text)?;
    let g = cfg.kernel.resolve(&base)?;
    cfg.materialize(&g)?;
    let n = g.n();
    let points = cfg.points(n)?;
    let grid = cfg.grid()?;
    let plan = match cfg.series_degree {
        Some(d) => Some(crate::density::SeriesPlan::new(n, d)?),
        None => None,
    };
    let mut out = header_comment(&cfg)?;
    let cols: Vec<String> = (0..n).map(|i| format!("l{i}")).collect();
    out.push_str(&format!("{},rho_quad,rho_series,residue\n", cols.join(",")));
    for l in &points {
        let quad = density_quadrature(&g, l, grid)?;
        let series = match &plan {
            Some(p) => format!("{:?}", p.evaluate(&g, l)?.value),
            None => String::new(),
        };
        let coords: Vec<String> = l.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&format!("{},{:?},{},{:?}\n", coords.join(","), quad.value, series, quad.imag_residue));
    }
    Ok(Outcome { output: out, code: 0, summary: None })
}

pub fn cmd_sample(path: &Path, seed: Option<u64>) -> Result<Outcome> {
    let (text, base) = read_config(path)?;
    let mut cfg: SampleConfig = serde_json::from_str(&text)?;
    cfg.seed = Some(seed.or(cfg.seed).unwrap_or(DEFAULT_SEED));
    let resolved = cfg.setup.resolve(&base)?;
    if let Some(rej) = &resolved.rejection {
        cfg.setup.band = Some(rej.band);
    }
    let (samples, acceptance) = resolved.draw(cfg.n, cfg.seed.unwrap_or(DEFAULT_SEED), "sample")?;
    let provenance = resolved.provenance().as_str();
    let mut out = header_comment(&cfg)?;
    let cols: Vec<String> = (0..resolved.dim).map(|i| format!("l{i}")).collect();
    out.push_str(&format!("replicate,provenance,{}\n", cols.join(",")));
    for (i, v) in samples.iter().enumerate() {
        let coords: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
        out.push_str(&format!("{i},{provenance},{}\n", coords.join(",")));
    }
    let summary = acceptance.map(|a| format!("acceptance rate {:.5} (predicted {:.5})", a.rate, a.predicted));
    Ok(Outcome { output: out, code: 0, summary })
}

pub fn cmd_verify(path: &Path, seed: Option<u64>) -> Result<(ResultRecord, i32)> {
    let (text, base) = read_config(path)?;
    let exps = VerifyConfig::parse(&text)?.materialize(&base, seed)?;
    let start = Instant::now();
    let mut records = Vec::with_capacity(exps.len());
    for cfg in exps {
        let report = cfg.experiment.run(&base, cfg.seed.unwrap_or(DEFAULT_SEED))?;
        records.push(ExperimentRecord { config: cfg, report });
    }
    let pass = records.iter().all(|r| r.report.pass);
    let max_z = records.iter().map(|r| r.report.max_z).fold(0.0, f64::max);
    let summary = records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let name = r.config.name.clone().unwrap_or_else(|| format!("#{i}"));
            format!(
                "{} {name} ({}): max z {:.2}",
                if r.report.pass { "PASS" } else { "FAIL" },
                r.report.kind,
                r.report.max_z
            )
        })
        .collect();
    let record = ResultRecord {
        tool: "permlab",
        version: VERSION,
        wall_time_s: start.elapsed().as_secs_f64(),
        experiments: records,
        pass,
        max_z,
        summary,
    };
    Ok((record, if pass { 0 } else { 1 }))
}

fn dispatch(cli: &Cli) -> Result<Outcome> {
    match &cli.command {
        Command::Classify { file, tol } => cmd_classify(file, *tol),
        Command::Density { config } => cmd_density(config),
        Command::Sample { config } => cmd_sample(config, cli.seed),
        Command::Verify { config } => {
            let (record, code) = cmd_verify(config, cli.seed)?;
            if let Some(out) = &cli.out {
                std::fs::write(out.with_extension("csv"), record.to_csv())?;
            }
            Ok(Outcome {
                output: serde_json::to_string_pretty(&record)? + "\n",
                code,
                summary: Some(record.summary.join("\n")),
            })
        }
    }
}

/// Parses `args`, runs the command and returns the exit code. Output goes to
/// `--out` or `stdout`; diagnostics to `stderr`.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = if code == 0 { write!(stdout, "{e}") } else { write!(stderr, "{e}") };
            return code;
        }
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(t) = cli.threads {
        if t == 0 {
            let _ = writeln!(stderr, "error: --threads must be positive");
            return 2;
        }
        builder = builder.num_threads(t);
    }
    let pool = match builder.build() {
        Ok(p) => p,
        Err(e) => {
            let _ = writeln!(stderr, "error: cannot start worker pool: {e}");
            return 3;
        }
    };
    let result = pool.install(|| dispatch(&cli));
    match result {
        Ok(outcome) => {
            let written = match &cli.out {
                Some(path) => std::fs::write(path, &outcome.output).map_err(Error::from),
                None => stdout.write_all(outcome.output.as_bytes()).map_err(Error::from),
            };
            if let Err(e) = written {
                let _ = writeln!(stderr, "error: {e}");
                return 2;
            }
            if let Some(s) = outcome.summary {
                let _ = writeln!(stderr, "{s}");
            }
            outcome.code
        }
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            e.exit_code()
        }
    }
}
