//! The `sagnac` command-line tool.
//!
//! Every subcommand loads a [`RunConfig`] (the bundled one unless `--config`
//! is given), applies flag overrides, validates, runs its stage and writes
//! its outputs plus `run-manifest.json` into the output directory. With
//! `--check` nothing is written; the regenerated outputs are hashed and
//! compared against the existing manifest instead.
//!
//! Exit status: 0 on success, 1 for invalid input, 2 for runtime failures
//! (including a failed `--check` or reproduction row), 64 for usage errors.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::{bundled_config_path, RunConfig};
use crate::countsim::{read_records_csv, write_records_csv, write_timetags_csv, CountRecord};
use crate::error::{Error, Result};
use crate::materials::MaterialTable;
use crate::measurement::{chsh, correlation_curve, MeasurementSetting};
use crate::pipeline::{self, CorrelationRow, OutputDir, RateSummary, RunEntry, RunManifest};
use crate::state::TwoPhotonState;
use crate::tomography::{StateMetrics, TomographyData};

pub const EXIT_USAGE: i32 = 64;
pub const MATERIAL_ENV: &str = "ESS_MATERIAL_PATH";

#[derive(Debug, Parser)]
#[command(name = "sagnac", version, about = "Design and analysis of a beam-displacer Sagnac entangled-photon source")]
struct Cli {
    /// Run configuration (JSON). Defaults to the bundled reference config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory, overriding the config's `outputs.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Extra Sellmeier models (JSON). Falls back to $ESS_MATERIAL_PATH.
    #[arg(long, global = true)]
    material_file: Option<PathBuf>,

    /// Master seed, overriding the config's `seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Regenerate outputs in memory and compare with the existing manifest.
    #[arg(long, global = true)]
    check: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Beam-displacer walk-off, delays and mode overlaps.
    Design {
        #[arg(long, value_enum)]
        sweep: Option<SweepKind>,
        /// Shortest displacer length in the sweep, mm.
        #[arg(long, default_value_t = 10.0)]
        min_mm: f64,
        #[arg(long, default_value_t = 50.0)]
        max_mm: f64,
        #[arg(long, default_value_t = 41)]
        steps: usize,
    },
    /// Quasi-phase-matching temperature tuning curve.
    Phasematch {
        #[arg(long)]
        pump_nm: Option<f64>,
        #[arg(long)]
        period_um: Option<f64>,
        #[arg(long)]
        tmin: Option<f64>,
        #[arg(long)]
        tmax: Option<f64>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Time-tag Monte Carlo of one acquisition.
    Simulate {
        #[arg(long)]
        duration_s: Option<f64>,
        #[arg(long)]
        power_mw: Option<f64>,
        #[arg(long)]
        window_ns: Option<f64>,
        /// Also write the raw time tags (binary and CSV).
        #[arg(long)]
        timetags: bool,
    },
    /// Correlation, CHSH, tomography and rate analyses.
    #[command(subcommand)]
    Analyze(Analyze),
    /// Rates and visibilities across the configured pump powers.
    Sweep {
        #[arg(long)]
        duration_s: Option<f64>,
    },
    /// Run every stage and check it against the reference values.
    Reproduce,
    /// List the dispersion models and their sources.
    Materials,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SweepKind {
    BdLength,
}

#[derive(Debug, Subcommand)]
enum Analyze {
    /// Correlation curves with the signal fixed to H, V, D and A.
    Correlation(StateInput),
    /// CHSH parameter.
    Chsh(StateInput),
    /// Maximum-likelihood state reconstruction.
    Tomography {
        /// Counts CSV `label,counts,duration_s`; simulated when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Heralding efficiencies and pair generation rates.
    Rates {
        /// Count-record CSV; one simulated acquisition when omitted.
        #[arg(long)]
        input: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
struct StateInput {
    /// Density matrix JSON to evaluate exactly instead of simulating counts.
    #[arg(long)]
    state: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn materials(cli: &Cli) -> Result<MaterialTable> {
    let mut table = MaterialTable::builtin();
    let path = cli.material_file.clone().or_else(|| std::env::var_os(MATERIAL_ENV).map(PathBuf::from));
    if let Some(path) = path {
        table.load_file(&path).map_err(|e| match e {
            Error::Io { source, .. } => Error::Validation(format!("cannot read material file {}: {source}", path.display())),
            other => other,
        })?;
    }
    Ok(table)
}

fn execute(cli: Cli) -> Result<i32> {
    let mats = materials(&cli)?;
    if let Command::Materials = cli.command {
        print!("{}", materials_listing(&mats));
        return Ok(0);
    }

    let mut cfg = RunConfig::load(cli.config.clone().unwrap_or_else(bundled_config_path))?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    apply_overrides(&mut cfg, &cli.command);
    cfg.validate(&mats)?;

    let dir = cli.out.clone().unwrap_or_else(|| cfg.outputs.dir.clone());
    let mut out = if cli.check { OutputDir::check_only(&dir) } else { OutputDir::create(&dir)? };
    let (name, code) = run_command(&cli.command, &cfg, &mats, &mut out)?;

    let entry = RunEntry::new(&cfg, &out);
    if cli.check {
        let recorded = RunManifest::load(&dir)?;
        let mut bad = match recorded.runs.get(name) {
            Some(prev) => entry.differences(prev),
            None => vec![format!("no recorded `{name}` run")],
        };
        bad.extend(recorded.mismatches(&dir));
        bad.sort();
        bad.dedup();
        if bad.is_empty() {
            println!("check passed: {} outputs match {}", entry.outputs.len(), pipeline::MANIFEST_NAME);
            return Ok(code);
        }
        eprintln!("check failed: {}", bad.join(", "));
        return Ok(2);
    }
    let mut manifest = RunManifest::load_or_default(&dir)?;
    manifest.record(name, entry);
    manifest.write(&dir)?;
    Ok(code)
}

fn apply_overrides(cfg: &mut RunConfig, cmd: &Command) {
    fn set<T: Copy>(slot: &mut T, v: Option<T>) {
        if let Some(v) = v {
            *slot = v;
        }
    }
    match cmd {
        Command::Phasematch { pump_nm, period_um, tmin, tmax, steps } => {
            set(&mut cfg.geometry.pump_nm, *pump_nm);
            set(&mut cfg.crystal.poling_period_um, *period_um);
            set(&mut cfg.tuning.t_min_c, *tmin);
            set(&mut cfg.tuning.t_max_c, *tmax);
            set(&mut cfg.tuning.steps, *steps);
        }
        Command::Simulate { duration_s, power_mw, window_ns, .. } => {
            set(&mut cfg.acquisition.duration_s, *duration_s);
            set(&mut cfg.source.pump_power_mw, *power_mw);
            set(&mut cfg.acquisition.window_ns, *window_ns);
        }
        Command::Sweep { duration_s } => set(&mut cfg.acquisition.duration_s, *duration_s),
        _ => {}
    }
}

fn run_command(cmd: &Command, cfg: &RunConfig, mats: &MaterialTable, out: &mut OutputDir) -> Result<(&'static str, i32)> {
    match cmd {
        Command::Design { sweep, min_mm, max_mm, steps } => {
            let report = pipeline::design(cfg, mats)?;
            print!("{report}");
            println!("{}\n{}", crate::interferometer::OverlapReport::CSV_HEADER, report.csv_row());
            out.write("overlap_report.csv", format!("{}\n{}\n", crate::interferometer::OverlapReport::CSV_HEADER, report.csv_row()))?;
            if sweep.is_some() {
                if *steps < 2 || !(max_mm > min_mm) || !(*min_mm > 0.0) {
                    return Err(Error::validation("bd-length sweep needs 0 < min-mm < max-mm and steps >= 2"));
                }
                let lengths: Vec<f64> =
                    (0..*steps).map(|k| min_mm + (max_mm - min_mm) * k as f64 / (*steps - 1) as f64).collect();
                let mut csv = format!("length_mm,{}\n", crate::interferometer::OverlapReport::CSV_HEADER);
                for (l, r) in pipeline::bd_length_sweep(cfg, mats, &lengths)? {
                    let _ = writeln!(csv, "{l},{}", r.csv_row());
                }
                out.write("bd_length_sweep.csv", csv)?;
            }
            Ok(("design", 0))
        }
        Command::Phasematch { .. } => {
            let pm = pipeline::phasematch(cfg, mats)?;
            match pm.operating_point {
                Some(m) => println!(
                    "at {} C: signal {:.3} nm, idler {:.3} nm",
                    cfg.crystal.temperature_c, m.triplet.signal_nm, m.triplet.idler_nm
                ),
                None => println!("no phase match at {} C", cfg.crystal.temperature_c),
            }
            if let Some(t) = pm.design_temperature_c {
                println!("signal {} nm is matched at {t:.2} C", cfg.geometry.signal_nm);
            }
            let mut csv = Vec::new();
            crate::phasematch::write_tuning_csv(&pm.curve, &mut csv).map_err(|e| Error::io("tuning_curve.csv", e))?;
            out.write("tuning_curve.csv", csv)?;
            Ok(("phasematch", 0))
        }
        Command::Simulate { timetags, .. } => {
            let (record, s, i) = pipeline::simulate(cfg)?;
            println!(
                "singles {:.1} / {:.1} cps, coincidences {:.1} cps ({:.1} corrected, {:.3} accidental)",
                record.singles_s, record.singles_i, record.coinc_raw, record.coinc_corrected, record.accidentals
            );
            out.write("count_record.csv", records_csv(&[record])?)?;
            if *timetags {
                for (name, stream) in [("signal.ttag", &s), ("idler.ttag", &i)] {
                    let mut bytes = Vec::new();
                    stream.write_binary(&mut bytes).map_err(|e| Error::io(name, e))?;
                    out.write(name, bytes)?;
                }
                let mut csv = Vec::new();
                write_timetags_csv(&[&s, &i], &mut csv)?;
                out.write("timetags.csv", csv)?;
            }
            Ok(("simulate", 0))
        }
        Command::Analyze(a) => analyze(a, cfg, out),
        Command::Sweep { .. } => {
            let sw = pipeline::sweep(cfg)?;
            let records: Vec<CountRecord> = sw.points.iter().map(|p| p.record).collect();
            out.write("power_sweep.csv", records_csv(&records)?)?;
            out.write("sweep_visibility.csv", pipeline::sweep_visibility_csv(&sw.points))?;
            for p in &sw.points {
                let v = p.visibility.map_or("n/a".to_string(), |v| format!("{:.4}", v.average()));
                println!("{:>7} mW: coincidences {:>10.1} cps, visibility {v}", p.power_mw, p.record.coinc_corrected);
            }
            if let Some(m) = sw.fitted_visibility {
                println!("fitted V(P) = {:.4} exp(-{:.4} P/mW)", m.v0, m.decay_per_mw);
                out.write("visibility_fit.csv", format!("v0,decay_per_mw\n{:.6},{:.6}\n", m.v0, m.decay_per_mw))?;
            }
            Ok(("sweep", 0))
        }
        Command::Reproduce => {
            let report = pipeline::full_reproduction(cfg, mats);
            print!("{report}");
            out.write("report.csv", report.to_csv())?;
            let passed = report.rows.iter().filter(|r| r.pass).count();
            println!("{passed}/{} rows pass", report.rows.len());
            Ok(("reproduce", if report.all_pass() { 0 } else { 2 }))
        }
        Command::Materials => unreachable!("handled before config loading"),
    }
}

fn analyze(a: &Analyze, cfg: &RunConfig, out: &mut OutputDir) -> Result<(&'static str, i32)> {
    match a {
        Analyze::Correlation(input) => {
            let rows = match &input.state {
                Some(path) => exact_correlation(cfg, &load_state(path)?)?,
                None => pipeline::correlation(cfg)?,
            };
            let mut csv = String::from("fixed_basis,angle_deg,coincidence_rate\n");
            for r in &rows {
                let _ = writeln!(csv, "{},{},{:.6}", r.fixed_basis, r.angle_deg, r.coincidence_rate);
            }
            out.write("correlation.csv", csv)?;
            let mut fits = String::from("fixed_basis,visibility,visibility_sigma,phase_deg\n");
            for (p, f) in pipeline::correlation_fits(&rows)? {
                println!("signal {p}: visibility {:.4} ± {:.4}", f.visibility, f.visibility_sigma);
                let _ = writeln!(fits, "{p},{:.6},{:.6},{:.4}", f.visibility, f.visibility_sigma, f.phase_rad.to_degrees());
            }
            out.write("correlation_fit.csv", fits)?;
            Ok(("analyze correlation", 0))
        }
        Analyze::Chsh(input) => {
            let (s, sigma) = match &input.state {
                Some(path) => (chsh(&load_state(path)?, &cfg.analysis.chsh_angles), 0.0),
                None => pipeline::chsh_measurement(cfg)?,
            };
            println!("S = {s:.4} ± {sigma:.4}");
            out.write("chsh.csv", format!("S,sigma\n{s:.6},{sigma:.6}\n"))?;
            Ok(("analyze chsh", 0))
        }
        Analyze::Tomography { input } => {
            let data = input.as_ref().map(TomographyData::read_csv_file).transpose()?;
            let simulated = data.is_none();
            let t = pipeline::tomography(cfg, data)?;
            if simulated {
                let mut csv = Vec::new();
                t.data.write_csv(&mut csv)?;
                out.write("tomography_counts.csv", csv)?;
            }
            let json = serde_json::to_string_pretty(&t.result.state.to_json())? + "\n";
            out.write("density_matrix.json", json)?;
            out.write("tomography_metrics.csv", format!("{}\n{}\n", StateMetrics::CSV_HEADER, t.metrics.csv_row()))?;
            println!(
                "concurrence {:.4}, purity {:.4}, fidelity {:.4} ({} iterations{})",
                t.metrics.concurrence,
                t.metrics.purity,
                t.metrics.fidelity,
                t.result.iterations,
                if t.result.converged { "" } else { ", not converged" }
            );
            Ok(("analyze tomography", 0))
        }
        Analyze::Rates { input } => {
            let records = match input {
                Some(path) => {
                    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
                    read_records_csv(file)?
                }
                None => vec![pipeline::simulate(cfg)?.0],
            };
            if records.is_empty() {
                return Err(Error::validation("no count records in input"));
            }
            let mut csv = format!("{}\n", RateSummary::CSV_HEADER);
            for r in &records {
                let s = RateSummary::of(r)?;
                println!(
                    "{} mW: heralding {:.4} / {:.4}, PGR {:.4e} /s ({:.4e} /s/mW)",
                    s.power_mw, s.heralding_s, s.heralding_i, s.pgr, s.pgr_per_mw
                );
                let _ = writeln!(
                    csv,
                    "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
                    s.power_mw, s.coinc_corrected, s.heralding_s, s.heralding_i, s.pgr, s.coinc_per_mw, s.pgr_per_mw
                );
            }
            out.write("rates.csv", csv)?;
            Ok(("analyze rates", 0))
        }
    }
}

fn load_state(path: &PathBuf) -> Result<TwoPhotonState> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    TwoPhotonState::from_json(&serde_json::from_str(&text)?)
}

/// Noise-free correlation curves at the configured detected-pair rate.
fn exact_correlation(cfg: &RunConfig, rho: &TwoPhotonState) -> Result<Vec<CorrelationRow>> {
    let scale = cfg.source_params()?.pair_rate() * cfg.detectors.signal.efficiency * cfg.detectors.idler.efficiency;
    let mut rows = Vec::new();
    for p in pipeline::CORRELATION_FIXED {
        let fixed: MeasurementSetting = p.setting();
        for (angle, prob) in correlation_curve(rho, &fixed, cfg.analysis.correlation_step_deg)? {
            rows.push(CorrelationRow { fixed_basis: p, angle_deg: angle, coincidence_rate: scale * prob });
        }
    }
    Ok(rows)
}

fn records_csv(records: &[CountRecord]) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    write_records_csv(records, &mut buf)?;
    Ok(buf)
}

fn materials_listing(mats: &MaterialTable) -> String {
    let mut s = String::new();
    for m in mats.models() {
        let _ = writeln!(
            s,
            "{:<10} {:>6}-{:<6} nm  {}",
            m.material_name, m.valid_range_nm[0], m.valid_range_nm[1], m.source_citation
        );
    }
    s
}
