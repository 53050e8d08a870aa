//! Command-line surface: argument parsing, configuration loading, suite
//! orchestration and report emission.
//!
//! Exit codes: `0` when the certificate or suite passes, `1` when it does
//! not, `2` for usage, configuration and I/O errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::blocks::CertStatus;
use crate::error::{Error, Result};
use crate::estimates::{check_block_estimate, curvature_profile, random_blocks, BlockRecipe, Direction, Profile};
use crate::funcspace::{SpaceKind, SpaceSpec};
use crate::game::{factorize, replay, run_default_game, GameConfig, Transcript};
use crate::operators::random_large_diagonal;
use crate::rng;
use crate::sumspace::ZTrunc;

/// Version of the [`SuiteReport`] layout, JSON and CSV alike.
pub const SCHEMA_VERSION: u32 = 1;

/// Worst acceptable margin of an inequality check.
pub const MARGIN_TOL: f64 = 1e-9;

/// Named suites and what they check.
pub const SUITES: [(&str, &str); 2] = [
    ("r-estimates", "lower max(2,p,q)- and upper min(2,p,q)-estimates with constant 1 on random H^p(H^q) blocks"),
    ("haar-norms", "exact H^p norms of single Haar functions against |I|^(1/p)"),
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseResult {
    pub name: String,
    pub passed: bool,
    /// Signed so that negative is bad; the case passes when `margin >= -tolerance`.
    pub margin: f64,
    pub tolerance: f64,
    /// Number of random instances aggregated into the case.
    pub samples: usize,
    pub seed: u64,
}

impl CaseResult {
    pub fn new(name: impl Into<String>, margin: f64, tolerance: f64, samples: usize, seed: u64) -> Self {
        Self { name: name.into(), passed: margin >= -tolerance, margin, tolerance, samples, seed }
    }
}

/// Run-dependent data kept apart from the reproducible payload.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    pub wall_clock_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub schema_version: u32,
    pub suite: String,
    pub passed: bool,
    pub seeds: Vec<u64>,
    pub cases: Vec<CaseResult>,
    pub metadata: Metadata,
}

impl SuiteReport {
    pub fn new(suite: impl Into<String>, seeds: Vec<u64>, cases: Vec<CaseResult>) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            suite: suite.into(),
            passed: cases.iter().all(|c| c.passed),
            seeds,
            cases,
            metadata: Metadata::default(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        if r.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!("unsupported report schema version {}", r.schema_version)));
        }
        Ok(r)
    }

    /// One row per case; the suite name, seeds and metadata are not part of
    /// the CSV layout.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        if self.cases.is_empty() {
            w.write_record(CSV_HEADER)?;
        }
        for c in &self.cases {
            w.serialize(c)?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
        Ok(String::from_utf8(bytes).expect("csv output is UTF-8"))
    }

    pub fn cases_from_csv(s: &str) -> Result<Vec<CaseResult>> {
        let mut r = csv::Reader::from_reader(s.as_bytes());
        let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
        if header != CSV_HEADER {
            return Err(Error::Config(format!("unexpected CSV header {header:?}")));
        }
        Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
    }
}

/// Column layout of schema version 1.
pub const CSV_HEADER: [&str; 6] = ["name", "passed", "margin", "tolerance", "samples", "seed"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Write `contents` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, contents: &str) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

pub fn emit_report(report: &SuiteReport, format: Format, path: &Path) -> Result<()> {
    let body = match format {
        Format::Json => report.to_json()?,
        Format::Csv => report.to_csv()?,
    };
    write_atomic(path, &body)
}

/// Grid of `(p, q)` pairs covering every ordering of `p`, `q` relative to 2.
pub fn default_grid() -> Vec<(f64, f64)> {
    vec![(1.0, 3.0), (1.0, 5.0), (1.5, 3.0), (1.5, 5.0), (3.0, 1.5), (1.5, 1.5), (3.0, 5.0)]
}

/// Random block sequences in `H^p(H^q)` at `depth`, checked against the
/// lower `max(2,p,q)`- and upper `min(2,p,q)`-estimates with constant 1.
/// One case per `(p, q, direction)`, carrying the worst margin over samples.
pub fn r_estimate_suite(grid: &[(f64, f64)], depth: u32, samples: usize, seed: u64) -> Result<SuiteReport> {
    let profiles = [Profile::Flat, Profile::Gaussian, Profile::Spike];
    let mut cases = Vec::with_capacity(2 * grid.len());
    for (g, &(p, q)) in grid.iter().enumerate() {
        let spec = SpaceSpec::new(SpaceKind::HpHq { p, q }, depth)?;
        let dim = spec.dimension();
        let lower_r = p.max(q).max(2.0);
        let upper_r = p.min(q).min(2.0);
        let margins: Vec<(f64, f64)> = (0..samples)
            .into_par_iter()
            .map(|s| {
                let mut r = rng::substream(seed, (g * samples + s) as u64);
                let count = r.random_range(1..=dim.min(12));
                let width = r.random_range(1..=(dim / count).min(16));
                let recipe = BlockRecipe { count, width, profile: profiles[s % 3], normalize: s % 2 == 0 };
                let seq = random_blocks(&spec, &recipe, r.random())?;
                let lo = check_block_estimate(&seq, Direction::Lower, lower_r, 1.0)?.worst_margin;
                let up = check_block_estimate(&seq, Direction::Upper, upper_r, 1.0)?.worst_margin;
                Ok((lo, up))
            })
            .collect::<Result<_>>()?;
        let worst = |f: fn(&(f64, f64)) -> f64| margins.iter().map(f).fold(f64::INFINITY, f64::min);
        let label = format!("p={p},q={q}");
        cases.push(CaseResult::new(format!("{label} lower r={lower_r}"), worst(|m| m.0), MARGIN_TOL, samples, seed));
        cases.push(CaseResult::new(format!("{label} upper r={upper_r}"), worst(|m| m.1), MARGIN_TOL, samples, seed));
    }
    Ok(SuiteReport::new("r-estimates", vec![seed], cases))
}

/// `‖h_I‖_{H^p}` computed through the square function, against `|I|^{1/p}`,
/// for every `I` up to `depth`.
pub fn haar_norm_suite(ps: &[f64], depth: u32) -> Result<SuiteReport> {
    let cases = ps
        .iter()
        .map(|&p| {
            let spec = SpaceSpec::hp(p, depth)?;
            let dim = spec.dimension();
            let err = (0..dim)
                .into_par_iter()
                .map(|i| {
                    let mut a = vec![0.0; dim];
                    a[i] = 1.0;
                    // ordinal i + 1 = 2^level + position
                    let level = usize::BITS - 1 - (i + 1).leading_zeros();
                    let expect = (-f64::from(level) / p).exp2();
                    (spec.eval_norm(&a) - expect).abs()
                })
                .reduce(|| 0.0, f64::max);
            Ok(CaseResult::new(format!("p={p}"), -err, 1e-12, dim, 0))
        })
        .collect::<Result<_>>()?;
    Ok(SuiteReport::new("haar-norms", vec![0], cases))
}

#[derive(Debug, Parser)]
#[command(name = "haarfactor", version, about = "Haar-basis norms, block estimates and factorization certificates")]
struct Cli {
    /// Print the available suites and exit.
    #[arg(long)]
    list_suites: bool,
    /// Print the report schema version and exit.
    #[arg(long)]
    schema_version: bool,
    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Play the game, verify the hypotheses and assemble `I = B̃ T Ã`.
    Factorize {
        #[arg(long)]
        config: PathBuf,
        /// Certificate output (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Transcript output (JSON).
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Play the game from a config, or replay a saved transcript.
    Game {
        #[arg(long, conflicts_with = "replay", required_unless_present = "replay")]
        config: Option<PathBuf>,
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Transcript output (JSON).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run an estimate suite.
    Estimates {
        #[arg(long, default_value = "r-estimates")]
        suite: String,
        /// A `p,q` pair; repeat for several. Defaults to a grid covering every
        /// ordering relative to 2.
        #[arg(long, value_parser = parse_pair)]
        grid: Vec<(f64, f64)>,
        /// Exponents for the haar-norms suite.
        #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.5, 2.0, 3.0, 5.0])]
        p: Vec<f64>,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 4)]
        depth: u32,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Sampled decay of normalized block averages in H^p components.
    Curvature {
        #[arg(long, default_value_t = 64)]
        nmax: usize,
        /// One H^p component per exponent.
        #[arg(long, value_delimiter = ',', default_values_t = [2.0])]
        p: Vec<f64>,
        /// Component depth; must leave a level with `nmax` Haar functions.
        #[arg(long)]
        depth: Option<u32>,
        #[arg(long, default_value_t = 8)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Decay table output (CSV: n, value, bound, margin).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Pass/fail report output.
        #[arg(long)]
        report: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Generate a random operator with a large diagonal.
    GenOp {
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        offdiag: f64,
        #[arg(long)]
        seed: u64,
        /// Take the ambient space from this game config instead of the default.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
}

fn parse_pair(s: &str) -> std::result::Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected p,q, got {s:?}"))?;
    let num = |t: &str| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}"));
    Ok((num(a)?, num(b)?))
}

/// Two 1D H^p components at depth 6 and one H^3(H^2) component at depth 3.
pub fn default_ambient() -> ZTrunc {
    ZTrunc::new(vec![
        SpaceSpec::hp(2.0, 6).expect("valid"),
        SpaceSpec::hp(3.0, 6).expect("valid"),
        SpaceSpec::new(SpaceKind::HpHq { p: 3.0, q: 2.0 }, 3).expect("valid"),
    ])
    .expect("valid")
}

pub fn load_config(path: &Path) -> Result<GameConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: GameConfig = serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}

enum Failure {
    Usage(Error),
    Failed(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e)
    }
}

/// Parse `argv` (including the program name) and run the command.
pub fn run_command<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    if cli.schema_version {
        println!("{SCHEMA_VERSION}");
        return 0;
    }
    if cli.list_suites {
        for (name, what) in SUITES {
            println!("{name}\t{what}");
        }
        return 0;
    }
    let Some(cmd) = cli.command else {
        eprintln!("no command given; see --help");
        return 2;
    };
    match dispatch(cmd) {
        Ok(()) => 0,
        Err(Failure::Failed(msg)) => {
            eprintln!("FAILED: {msg}");
            1
        }
        Err(Failure::Usage(e)) => {
            eprintln!("error: {e}");
            2
        }
    }
}

fn finish(report: SuiteReport, started: Instant, out: Option<&Path>, format: Format) -> std::result::Result<(), Failure> {
    let mut report = report;
    report.metadata.wall_clock_seconds = started.elapsed().as_secs_f64();
    for c in &report.cases {
        println!("{} {} margin {:e}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.margin);
    }
    if let Some(path) = out {
        emit_report(&report, format, path)?;
    }
    if report.passed {
        Ok(())
    } else {
        let bad = report.cases.iter().filter(|c| !c.passed).count();
        Err(Failure::Failed(format!("{bad} of {} cases in suite {}", report.cases.len(), report.suite)))
    }
}

fn dispatch(cmd: Command) -> std::result::Result<(), Failure> {
    match cmd {
        Command::Factorize { config, out, transcript } => {
            let cfg = load_config(&config)?;
            let t = cfg.operator.build(&cfg.big)?;
            let f = factorize(&t, &cfg)?;
            let cert = &f.certificate;
            if let Some(path) = out {
                write_atomic(&path, &(serde_json::to_string_pretty(cert).map_err(Error::from)? + "\n"))?;
            }
            if let Some(path) = transcript {
                write_atomic(&path, &f.transcript.to_json()?)?;
            }
            println!("branch {} stage {}", cert.branch.label(), cert.stage);
            if let Some(r) = cert.residual_max {
                println!("residual_max {r:e}");
            }
            if let Some(n) = cert.norm_product_lower {
                println!("norm_product_lower {n:e}");
            }
            match cert.status {
                CertStatus::Ok => Ok(()),
                CertStatus::Failed => {
                    Err(Failure::Failed(format!("{}: {}", cert.stage, cert.message.clone().unwrap_or_default())))
                }
            }
        }
        Command::Game { config, replay: Some(path), out } => {
            debug_assert!(config.is_none());
            let text = std::fs::read_to_string(&path).map_err(Error::from)?;
            let tr: Transcript =
                serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            let (again, same) = replay(&tr)?;
            if let Some(out) = out {
                write_atomic(&out, &again.to_json()?)?;
            }
            // byte identity against the file as written, not only the re-serialized parse
            let same = same && again.to_json()? == text;
            println!("replay {}", if same { "identical" } else { "differs" });
            if same {
                Ok(())
            } else {
                Err(Failure::Failed("replayed transcript differs".into()))
            }
        }
        Command::Game { config, replay: None, out } => {
            let cfg = load_config(&config.expect("required by clap"))?;
            let t = cfg.operator.build(&cfg.big)?;
            let (tr, aborted) = match run_default_game(&t, &cfg) {
                Ok((tr, _)) => (tr, None),
                Err(a) => (a.transcript, Some(a.error)),
            };
            if let Some(path) = out {
                write_atomic(&path, &tr.to_json()?)?;
            }
            println!("turns {}", tr.turns.len());
            if let Some(p) = &tr.postgame {
                println!("relaxed_turns {} incomplete_turns {}", p.relaxed_turns, p.incomplete_turns);
            }
            match aborted {
                None => Ok(()),
                Some(e) => Err(Failure::Failed(e.to_string())),
            }
        }
        Command::Estimates { suite, grid, p, samples, depth, seed, out, format } => {
            let started = Instant::now();
            let report = match suite.as_str() {
                "r-estimates" => {
                    let grid = if grid.is_empty() { default_grid() } else { grid };
                    r_estimate_suite(&grid, depth, samples, seed)?
                }
                "haar-norms" => haar_norm_suite(&p, depth)?,
                other => return Err(Error::Config(format!("unknown suite {other:?}; see --list-suites")).into()),
            };
            finish(report, started, out.as_deref(), format)
        }
        Command::Curvature { nmax, p, depth, samples, seed, out, report, format } => {
            let started = Instant::now();
            if nmax == 0 {
                return Err(Error::InvalidArgument("--nmax must be positive".into()).into());
            }
            // the deepest level must hold nmax Haar functions
            let depth = depth.unwrap_or(nmax.next_power_of_two().trailing_zeros());
            let comps = p.iter().map(|&p| SpaceSpec::hp(p, depth)).collect::<Result<Vec<_>>>()?;
            let array = ZTrunc::new(comps)?;
            let table = curvature_profile(&array, nmax, samples, seed)?;
            if let Some(path) = out {
                write_atomic(&path, &table.to_csv())?;
            }
            let target = p.iter().map(|&p| 1.0 - 1.0 / p.min(2.0)).fold(f64::INFINITY, f64::min);
            let worst = table.rows.iter().filter_map(|r| r.margin).fold(f64::INFINITY, f64::min);
            println!("fitted exponent {:.4} target {target:.4}", table.exponent);
            let cases = vec![
                CaseResult::new("exponent", 0.05 - (table.exponent - target).abs(), 0.0, samples, seed),
                CaseResult::new("upper bound", worst, MARGIN_TOL, samples, seed),
            ];
            finish(SuiteReport::new("curvature", vec![seed], cases), started, report.as_deref(), format)
        }
        Command::GenOp { delta, offdiag, seed, config, out, format } => {
            let big = match config {
                Some(path) => load_config(&path)?.big,
                None => default_ambient(),
            };
            let t = random_large_diagonal(&big, delta, offdiag, seed)?;
            let body = match format {
                Format::Json => serde_json::to_string_pretty(&t).map_err(Error::from)? + "\n",
                Format::Csv => t.to_csv(),
            };
            match out {
                Some(path) => write_atomic(&path, &body)?,
                None => {
                    // a closed pipe (`| head`) is not an error worth reporting
                    let _ = std::io::stdout().lock().write_all(body.as_bytes());
                }
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_report_round_trips() {
        let r = SuiteReport::new("empty", vec![], vec![]);
        assert!(r.passed);
        assert_eq!(SuiteReport::from_json(&r.to_json().unwrap()).unwrap(), r);
        let csv = r.to_csv().unwrap();
        assert_eq!(csv.trim_end(), CSV_HEADER.join(","));
        assert!(SuiteReport::cases_from_csv(&csv).unwrap().is_empty());
    }

    #[test]
    fn csv_round_trips_with_fixed_columns() {
        let cases = vec![
            CaseResult::new("a, quoted \"name\"", -0.25, 1e-9, 3, 7),
            CaseResult::new("b", 1e-300, 0.0, 1, 0),
        ];
        let r = SuiteReport::new("s", vec![7], cases.clone());
        assert!(!r.passed);
        let csv = r.to_csv().unwrap();
        let mut reader = csv::Reader::from_reader(csv.as_bytes());
        for rec in reader.records() {
            assert_eq!(rec.unwrap().len(), CSV_HEADER.len());
        }
        assert_eq!(SuiteReport::cases_from_csv(&csv).unwrap(), cases);
    }

    #[test]
    fn pair_parser() {
        assert_eq!(parse_pair("1.5, 3").unwrap(), (1.5, 3.0));
        assert!(parse_pair("2").is_err());
    }

    #[test]
    fn small_r_estimate_suite_passes_and_is_deterministic() {
        let a = r_estimate_suite(&[(1.5, 3.0)], 3, 20, 5).unwrap();
        let b = r_estimate_suite(&[(1.5, 3.0)], 3, 20, 5).unwrap();
        assert!(a.passed, "{a:?}");
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    }

    #[test]
    fn unknown_flag_is_a_usage_error() {
        assert_eq!(run_command(["haarfactor", "--bogus"]), 2);
        assert_eq!(run_command(["haarfactor", "estimates", "--suite", "nope"]), 2);
        assert_eq!(run_command(["haarfactor", "--schema-version"]), 0);
    }
}
