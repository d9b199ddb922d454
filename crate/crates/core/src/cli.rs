//! Command-line front end.
//!
//! Exit codes: 0 success, 1 scenario or validation error, 2 I/O error.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::metrics::{self, CsvRecord, Metric, StatsSummary, Thresholds};
use crate::runner::{self, Execution, Preset, RunResults, ScenarioSpec, SuiteSamples, SweepKind};
use crate::suites::{Catalog, MockProvider};

const AFTER_HELP: &str = "\
Presets:     ideal (0 ms, 0 %), normal (100 ms, 1.5 %), congested (200 ms, 2.5 %)
Sweep kinds: file-size (244 B doubling, 200 ms, 2.5 %), latency (0-400 ms by 50, 2.5 %),
             loss (0-5 % by 0.5, 200 ms)
Latency is one-way unless --latency-is-rtt is given.";

#[derive(Debug, Parser)]
#[command(name = "qsc-bench", version, about = "Classical vs hybrid post-quantum TLS response-time simulator", after_help = AFTER_HELP)]
pub struct Cli {
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    pub quiet: bool,

    /// Worker threads for scenario execution (default: all cores).
    #[arg(long, global = true, env = "QSC_BENCH_WORKERS")]
    pub workers: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct ScenarioOpts {
    /// Base seed for per-run seed derivation.
    #[arg(long)]
    pub seed: Option<u64>,

    /// Runs per suite (per point for sweeps).
    #[arg(long)]
    pub runs: Option<u32>,

    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,

    /// Treat configured latency as round-trip time instead of one-way delay.
    #[arg(long)]
    pub latency_is_rtt: bool,

    /// TOML file overriding suite sizes and crypto costs.
    #[arg(long)]
    pub suite_overrides: Option<PathBuf>,

    /// Acknowledge every handshake flight separately instead of piggybacking.
    #[arg(long)]
    pub per_flight_acks: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a preset (ideal, normal, congested) or a scenario file.
    Run {
        /// Preset name or path to a TOML scenario file.
        scenario: String,

        #[command(flatten)]
        opts: ScenarioOpts,

        /// Suite used as the comparison baseline in the printed summary.
        #[arg(long, default_value = "classical")]
        baseline: String,
    },
    /// Run a sensitivity sweep (file-size, latency, loss).
    Sweep {
        kind: String,

        /// Largest file size for the file-size sweep.
        #[arg(long, default_value_t = runner::SWEEP_DEFAULT_MAX_BYTES)]
        max_bytes: u64,

        /// Sweep file sizes up to 16 GB (overrides --max-bytes).
        #[arg(long)]
        full: bool,

        #[command(flatten)]
        opts: ScenarioOpts,
    },
    /// Summaries and box plots for an existing results CSV.
    Report {
        csv: PathBuf,

        #[arg(long, default_value = "out")]
        out_dir: PathBuf,
    },
    /// Percent deltas and threshold verdicts against a baseline suite.
    Compare {
        csv: PathBuf,

        #[arg(long, default_value = "classical")]
        baseline: String,

        #[arg(long, default_value_t = 10.0)]
        low_threshold: f64,

        #[arg(long, default_value_t = 20.0)]
        high_threshold: f64,

        /// Exit 1 if any delta reaches the high threshold.
        #[arg(long)]
        fail_over_threshold: bool,
    },
    /// List the suite catalog and handshake flight sizes.
    Suites {
        #[arg(long)]
        suite_overrides: Option<PathBuf>,
    },
}

struct Ctx<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
    quiet: bool,
    execution: Execution,
}

impl Ctx<'_> {
    fn progress(&mut self, msg: &str) {
        if !self.quiet {
            let _ = writeln!(self.err, "{msg}");
        }
    }

    fn print(&mut self, text: &str) -> Result<()> {
        self.out
            .write_all(text.as_bytes())
            .map_err(|e| Error::io("<stdout>", e))
    }
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_cli<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
            } else {
                let _ = out.write_all(text.as_bytes());
            }
            return code;
        }
    };
    let mut ctx = Ctx {
        out,
        err,
        quiet: cli.quiet,
        execution: Execution::Parallel { workers: cli.workers },
    };
    match dispatch(cli.command, &mut ctx) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(ctx.err, "error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(command: Command, ctx: &mut Ctx) -> Result<i32> {
    match command {
        Command::Run {
            scenario,
            opts,
            baseline,
        } => cmd_run(&scenario, &opts, &baseline, ctx),
        Command::Sweep {
            kind,
            max_bytes,
            full,
            opts,
        } => {
            let max = if full { runner::SWEEP_FULL_MAX_BYTES } else { max_bytes };
            cmd_sweep(&kind, max, &opts, ctx)
        }
        Command::Report { csv, out_dir } => cmd_report(&csv, &out_dir, ctx),
        Command::Compare {
            csv,
            baseline,
            low_threshold,
            high_threshold,
            fail_over_threshold,
        } => cmd_compare(
            &csv,
            &baseline,
            Thresholds {
                low_pct: low_threshold,
                high_pct: high_threshold,
            },
            fail_over_threshold,
            ctx,
        ),
        Command::Suites { suite_overrides } => cmd_suites(suite_overrides.as_deref(), ctx),
    }
}

fn load_catalog(overrides: Option<&Path>) -> Result<Catalog> {
    let catalog = Catalog::builtin();
    match overrides {
        Some(path) => catalog.apply_overrides_file(path),
        None => Ok(catalog),
    }
}

fn apply_opts(mut spec: ScenarioSpec, opts: &ScenarioOpts) -> ScenarioSpec {
    if let Some(seed) = opts.seed {
        spec.base_seed = seed;
    }
    if let Some(runs) = opts.runs {
        spec.runs = runs;
    }
    if opts.per_flight_acks {
        spec.session.piggyback_handshake_acks = false;
    }
    spec
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

#[derive(Serialize)]
struct SuiteSummary {
    suite: String,
    n: usize,
    excluded_n: usize,
    handshake: Option<StatsSummary>,
    total: Option<StatsSummary>,
    mean_transfer_rate_bps: Option<f64>,
}

fn suite_summaries(groups: &[SuiteSamples]) -> Vec<SuiteSummary> {
    groups
        .iter()
        .map(|g| {
            let rates: Vec<f64> = g.valid().filter_map(|s| metrics::transfer_rate(s).ok()).collect();
            SuiteSummary {
                suite: g.suite.clone(),
                n: g.samples.len(),
                excluded_n: g.excluded_n(),
                handshake: metrics::summarize_group(g, Metric::Handshake).ok(),
                total: metrics::summarize_group(g, Metric::Total).ok(),
                mean_transfer_rate_bps: (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64),
            }
        })
        .collect()
}

fn summary_table(summaries: &[SuiteSummary]) -> String {
    let mut out = format!(
        "{:<18} {:>5} {:>5} {:>12} {:>12} {:>12} {:>12} {:>14}\n",
        "suite", "n", "excl", "hs_mean_s", "hs_median_s", "total_mean_s", "total_med_s", "rate_Bps"
    );
    for s in summaries {
        let f = |x: Option<f64>| x.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        out.push_str(&format!(
            "{:<18} {:>5} {:>5} {:>12} {:>12} {:>12} {:>12} {:>14}\n",
            s.suite,
            s.n,
            s.excluded_n,
            f(s.handshake.as_ref().map(|h| h.mean)),
            f(s.handshake.as_ref().map(|h| h.median)),
            f(s.total.as_ref().map(|h| h.mean)),
            f(s.total.as_ref().map(|h| h.median)),
            s.mean_transfer_rate_bps.map_or_else(|| "-".to_string(), |v| format!("{v:.1}")),
        ));
    }
    out
}

fn to_json(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn write_boxplots(groups: &[SuiteSamples], out_dir: &Path) -> Result<()> {
    for (metric, file) in [(Metric::Handshake, "handshake_box.svg"), (Metric::Total, "download_box.svg")] {
        let summaries: Vec<(String, StatsSummary)> = groups
            .iter()
            .filter_map(|g| metrics::summarize_group(g, metric).ok().map(|s| (g.suite.clone(), s)))
            .collect();
        if summaries.is_empty() {
            continue;
        }
        let label = match metric {
            Metric::Handshake => "SSL handshake time",
            Metric::Total => "Total download time",
        };
        metrics::emit_boxplot(&summaries, label, &out_dir.join(file))?;
    }
    Ok(())
}

fn resolve_scenario(arg: &str, opts: &ScenarioOpts, catalog: &Catalog) -> Result<ScenarioSpec> {
    let spec = if let Ok(p) = arg.parse::<Preset>() {
        let spec = p.spec();
        if opts.latency_is_rtt {
            spec.with_latency_as_rtt()
        } else {
            spec
        }
    } else {
        let path = Path::new(arg);
        if !path.is_file() {
            return Err(Error::Config(format!(
                "{arg:?} is neither a preset (valid presets: ideal, normal, congested) nor a scenario file"
            )));
        }
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut file: runner::ScenarioFile = toml::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            message: e.to_string(),
        })?;
        if opts.latency_is_rtt {
            file.latency_is_rtt = Some(true);
        }
        file.into_spec(catalog)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?
    };
    let spec = apply_opts(spec, opts);
    spec.validate(catalog)?;
    Ok(spec)
}

fn execute(spec: &ScenarioSpec, catalog: &Catalog, ctx: &mut Ctx) -> Result<RunResults> {
    ctx.progress(&format!(
        "running {} ({} suites x {} runs)",
        spec.name,
        spec.suites.len(),
        spec.runs
    ));
    runner::execute_with(spec, catalog, &MockProvider, ctx.execution)
}

fn cmd_run(scenario: &str, opts: &ScenarioOpts, baseline: &str, ctx: &mut Ctx) -> Result<i32> {
    let catalog = load_catalog(opts.suite_overrides.as_deref())?;
    let spec = resolve_scenario(scenario, opts, &catalog)?;
    let results = execute(&spec, &catalog, ctx)?;

    create_dir(&opts.out_dir)?;
    metrics::write_csv(&results, &opts.out_dir.join("results.csv"))?;
    let summaries = suite_summaries(&results.groups);
    #[derive(Serialize)]
    struct RunSummary<'a> {
        scenario: &'a ScenarioSpec,
        suites: &'a [SuiteSummary],
    }
    metrics::write_text(
        &opts.out_dir.join("summary.json"),
        &to_json(&RunSummary {
            scenario: &spec,
            suites: &summaries,
        }),
    )?;
    write_boxplots(&results.groups, &opts.out_dir)?;

    let mut text = format!(
        "scenario {}: latency {} ms one-way, loss {} %, file {} B, {} runs\n",
        spec.name,
        spec.profile.one_way_latency_s * 1e3,
        spec.profile.loss_rate * 1e2,
        spec.file_bytes,
        spec.runs
    );
    text.push_str(&summary_table(&summaries));
    if results.groups.iter().any(|g| g.suite == baseline) {
        match metrics::compare_results(&results, baseline, Thresholds::default()) {
            Ok(report) => {
                text.push('\n');
                text.push_str(&report.to_table());
            }
            Err(e) => text.push_str(&format!("\ncomparison unavailable: {e}\n")),
        }
    }
    ctx.print(&text)?;
    Ok(0)
}

fn cmd_sweep(kind: &str, max_bytes: u64, opts: &ScenarioOpts, ctx: &mut Ctx) -> Result<i32> {
    let kind: SweepKind = kind.parse().map_err(|e: Error| Error::Config(e.to_string()))?;
    let catalog = load_catalog(opts.suite_overrides.as_deref())?;
    let specs = kind.generate(max_bytes);
    if specs.is_empty() {
        return Err(Error::Config(format!(
            "no sweep points: --max-bytes must be >= {}",
            runner::SWEEP_MIN_FILE_BYTES
        )));
    }

    let mut points = Vec::with_capacity(specs.len());
    for spec in specs {
        let value = kind.value_of(&spec);
        let spec = apply_opts(
            if opts.latency_is_rtt {
                spec.with_latency_as_rtt()
            } else {
                spec
            },
            opts,
        );
        let results = execute(&spec, &catalog, ctx)?;
        points.push((value, results));
    }

    create_dir(&opts.out_dir)?;
    metrics::write_text(&opts.out_dir.join("results.csv"), &metrics::render_sweep_csv(&points))?;

    #[derive(Serialize)]
    struct Point {
        swept_value: f64,
        suites: Vec<SuiteSummary>,
    }
    #[derive(Serialize)]
    struct SweepSummary {
        kind: &'static str,
        points: Vec<Point>,
    }
    let summary = SweepSummary {
        kind: kind.name(),
        points: points
            .iter()
            .map(|(v, r)| Point {
                swept_value: *v,
                suites: suite_summaries(&r.groups),
            })
            .collect(),
    };
    metrics::write_text(&opts.out_dir.join("summary.json"), &to_json(&summary))?;

    let unit = match kind {
        SweepKind::FileSize => "bytes",
        SweepKind::Latency => "ms",
        SweepKind::Loss => "%",
    };
    let mut text = format!(
        "{:>14} {:<18} {:>12} {:>12}\n",
        format!("{} ({unit})", kind.name()),
        "suite",
        "hs_mean_s",
        "total_mean_s"
    );
    for p in &summary.points {
        for s in &p.suites {
            let f = |x: &Option<StatsSummary>| x.as_ref().map_or_else(|| "-".into(), |v| format!("{:.6}", v.mean));
            text.push_str(&format!(
                "{:>14} {:<18} {:>12} {:>12}\n",
                p.swept_value,
                s.suite,
                f(&s.handshake),
                f(&s.total)
            ));
        }
    }
    ctx.print(&text)?;
    Ok(0)
}

/// Splits records into consecutive (scenario, swept value) points.
fn split_points(records: &[CsvRecord]) -> Vec<(String, Option<f64>, Vec<SuiteSamples>)> {
    let mut keys: Vec<(String, Option<f64>)> = Vec::new();
    for r in records {
        let key = (r.scenario.clone(), r.swept_value);
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(scenario, swept)| {
            let subset: Vec<CsvRecord> = records
                .iter()
                .filter(|r| r.scenario == scenario && r.swept_value == swept)
                .cloned()
                .collect();
            (scenario, swept, metrics::group_by_suite(&subset))
        })
        .collect()
}

fn point_label(scenario: &str, swept: Option<f64>) -> String {
    match swept {
        Some(v) => format!("scenario {scenario}, swept_value {v}"),
        None => format!("scenario {scenario}"),
    }
}

fn cmd_report(csv: &Path, out_dir: &Path, ctx: &mut Ctx) -> Result<i32> {
    let records = metrics::read_csv(csv)?;
    let points = split_points(&records);
    create_dir(out_dir)?;

    #[derive(Serialize)]
    struct Point {
        scenario: String,
        swept_value: Option<f64>,
        suites: Vec<SuiteSummary>,
    }
    let mut text = String::new();
    let mut out = Vec::new();
    for (scenario, swept, groups) in &points {
        let summaries = suite_summaries(groups);
        text.push_str(&point_label(scenario, *swept));
        text.push('\n');
        text.push_str(&summary_table(&summaries));
        out.push(Point {
            scenario: scenario.clone(),
            swept_value: *swept,
            suites: summaries,
        });
    }
    metrics::write_text(&out_dir.join("summary.json"), &to_json(&out))?;
    // Box plots only make sense for a single point.
    if let [(_, _, groups)] = points.as_slice() {
        write_boxplots(groups, out_dir)?;
    }
    ctx.print(&text)?;
    Ok(0)
}

fn cmd_compare(csv: &Path, baseline: &str, thresholds: Thresholds, fail_over: bool, ctx: &mut Ctx) -> Result<i32> {
    let records = metrics::read_csv(csv)?;
    if records.is_empty() {
        return Err(Error::Config(format!("{}: no data rows", csv.display())));
    }
    let mut text = String::new();
    let mut over = false;
    let points = split_points(&records);
    for (scenario, swept, groups) in &points {
        let report = metrics::compare(groups, baseline, thresholds).map_err(|e| Error::Config(e.to_string()))?;
        over |= !report.all_within_high();
        if points.len() > 1 {
            text.push_str(&point_label(scenario, *swept));
            text.push('\n');
        }
        text.push_str(&report.to_table());
    }
    ctx.print(&text)?;
    Ok(if fail_over && over { 1 } else { 0 })
}

fn cmd_suites(overrides: Option<&Path>, ctx: &mut Ctx) -> Result<i32> {
    let catalog = load_catalog(overrides)?;
    let mut text = format!(
        "{:<16} {:<14} {:<22} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9}\n",
        "suite", "kem", "signature", "kem_cli", "kem_srv", "sig_pk", "sig", "CH", "SF", "total"
    );
    for s in catalog.suites() {
        let f = s.flight_sizes();
        text.push_str(&format!(
            "{:<16} {:<14} {:<22} {:>8} {:>8} {:>8} {:>8} {:>8} {:>8} {:>9}\n",
            s.name,
            s.kem.name,
            s.sig.name,
            s.kem.client_share_bytes,
            s.kem.server_share_bytes,
            s.sig.public_key_bytes,
            s.sig.signature_bytes,
            f.client_hello.total(),
            f.server_flight.total(),
            f.total()
        ));
    }
    ctx.print(&text)?;
    Ok(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn help_lists_presets_kinds_and_flags() {
        let mut root = Cli::command();
        let help = root.render_long_help().to_string();
        for word in ["ideal", "normal", "congested", "file-size", "latency", "loss", "--workers", "--quiet"] {
            assert!(help.contains(word), "root help lacks {word}");
        }
        let run_help = root.find_subcommand_mut("run").unwrap().render_long_help().to_string();
        for flag in ["--seed", "--runs", "--out-dir", "--latency-is-rtt", "--suite-overrides", "--per-flight-acks"] {
            assert!(run_help.contains(flag), "run help lacks {flag}");
        }
        let cmp_help = root.find_subcommand_mut("compare").unwrap().render_long_help().to_string();
        assert!(cmp_help.contains("--fail-over-threshold") && cmp_help.contains("--baseline"));
    }
}
