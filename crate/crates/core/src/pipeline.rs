//! End-to-end stages driven by a [`RunConfig`], shared by the command-line
//! tool and the reproduction report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::countsim::{
    self, count_coincidences, derive_seed, generate_analyzed_timetags, generate_timetags, Analyzer, CountRecord,
    PowerPoint, TimeTagStream, VisibilityModel,
};
use crate::error::{Error, Result};
use crate::interferometer::OverlapReport;
use crate::materials::MaterialTable;
use crate::measurement::{chsh, chsh_from_counts, fit_sinusoid, ChshAngles, Polarization, Projector, SinusoidFit};
use crate::phasematch::{conjugate_wavelength, PhaseMatch, TuningPoint};
use crate::state::{Sign, TwoPhotonState};
use crate::tomography::{mle_reconstruct, simulate_tomography, MleResult, StateMetrics, TomographyData, TomographySet};

// Sub-seed indices, one per stage, so stages can run in any order.
const SEED_SIMULATE: u64 = 1;
const SEED_CORRELATION: u64 = 2;
const SEED_CHSH: u64 = 3;
const SEED_TOMOGRAPHY: u64 = 4;
const SEED_SWEEP: u64 = 5;

pub fn design(cfg: &RunConfig, materials: &MaterialTable) -> Result<OverlapReport> {
    cfg.geometry(materials)?.pair_mismatch()
}

pub fn bd_length_sweep(cfg: &RunConfig, materials: &MaterialTable, lengths_mm: &[f64]) -> Result<Vec<(f64, OverlapReport)>> {
    cfg.geometry(materials)?.length_sweep(lengths_mm)
}

/// Operating point at the configured temperature and the tuning curve.
pub struct PhaseMatchOutput {
    pub operating_point: Option<PhaseMatch>,
    /// Temperature at which the configured signal wavelength is matched.
    pub design_temperature_c: Option<f64>,
    pub curve: Vec<TuningPoint>,
}

pub fn phasematch(cfg: &RunConfig, materials: &MaterialTable) -> Result<PhaseMatchOutput> {
    let crystal = cfg.crystal(materials)?;
    let pump = cfg.geometry.pump_nm;
    let t = &cfg.tuning;
    Ok(PhaseMatchOutput {
        operating_point: crystal.solve_signal(pump)?,
        design_temperature_c: crystal.temperature_for_signal(pump, cfg.geometry.signal_nm, t.t_min_c, t.t_max_c)?,
        curve: crystal.tuning_curve(pump, t.t_min_c, t.t_max_c, t.steps)?,
    })
}

/// One acquisition at the configured power.
pub fn simulate(cfg: &RunConfig) -> Result<(CountRecord, TimeTagStream, TimeTagStream)> {
    let src = cfg.source_params()?;
    let acq = &cfg.acquisition;
    let (s, i) = generate_timetags(
        &src,
        &cfg.detectors.signal,
        &cfg.detectors.idler,
        acq.duration_s,
        derive_seed(cfg.seed, SEED_SIMULATE),
    )?;
    let record = count_coincidences(&s, &i, acq.window_ns, acq.duration_s)?.with_power(src.pump_power_mw);
    Ok((record, s, i))
}

/// Accidental-corrected coincidence rate behind a pair of analyzers.
fn analyzed_rate(cfg: &RunConfig, analyzer: &Analyzer, seed: u64) -> Result<f64> {
    let src = cfg.source_params()?;
    let acq = &cfg.acquisition;
    let (s, i) = generate_analyzed_timetags(&src, &cfg.detectors.signal, &cfg.detectors.idler, analyzer, acq.duration_s, seed)?;
    Ok(count_coincidences(&s, &i, acq.window_ns, acq.duration_s)?.coinc_corrected)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CorrelationRow {
    pub fixed_basis: Polarization,
    pub angle_deg: f64,
    pub coincidence_rate: f64,
}

pub const CORRELATION_FIXED: [Polarization; 4] = [Polarization::H, Polarization::V, Polarization::D, Polarization::A];

/// Simulated correlation curves: the signal analyzer is fixed to H, V, D and
/// A while the idler's linear analyzer turns through a full circle.
pub fn correlation(cfg: &RunConfig) -> Result<Vec<CorrelationRow>> {
    let step = cfg.analysis.correlation_step_deg;
    let n = 360.0 / step;
    if !(step > 0.0) || (n - n.round()).abs() > 1e-9 {
        return Err(Error::validation(format!("correlation step {step} deg must divide 360")));
    }
    let n = n.round() as usize;
    let base = derive_seed(cfg.seed, SEED_CORRELATION);
    let jobs: Vec<(usize, Polarization, f64)> = CORRELATION_FIXED
        .iter()
        .flat_map(|&p| (0..n).map(move |k| (p, step * k as f64)))
        .enumerate()
        .map(|(j, (p, a))| (j, p, a))
        .collect();
    jobs.par_iter()
        .map(|&(j, fixed, angle)| {
            let analyzer = Analyzer {
                signal: fixed.projector(),
                idler: Projector::linear(angle),
            };
            Ok(CorrelationRow {
                fixed_basis: fixed,
                angle_deg: angle,
                coincidence_rate: analyzed_rate(cfg, &analyzer, derive_seed(base, j as u64))?,
            })
        })
        .collect()
}

/// Sinusoid fit of each fixed-basis curve.
pub fn correlation_fits(rows: &[CorrelationRow]) -> Result<Vec<(Polarization, SinusoidFit)>> {
    CORRELATION_FIXED
        .iter()
        .map(|&p| {
            let samples: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.fixed_basis == p)
                .map(|r| (r.angle_deg, r.coincidence_rate))
                .collect();
            Ok((p, fit_sinusoid(&samples)?))
        })
        .collect()
}

/// CHSH value and its Poisson standard error from simulated counts.
pub fn chsh_measurement(cfg: &RunConfig) -> Result<(f64, f64)> {
    let angles = cfg.analysis.chsh_angles;
    let base = derive_seed(cfg.seed, SEED_CHSH);
    let duration = cfg.acquisition.duration_s;
    let jobs: Vec<(usize, usize, Analyzer)> = angles
        .pairs()
        .iter()
        .enumerate()
        .flat_map(|(k, &(a, b))| {
            [(a, b), (a, b + 90.0), (a + 90.0, b), (a + 90.0, b + 90.0)]
                .into_iter()
                .enumerate()
                .map(move |(m, (x, y))| {
                    (k, m, Analyzer { signal: Projector::linear(x), idler: Projector::linear(y) })
                })
        })
        .collect();
    let rates = jobs
        .par_iter()
        .map(|(k, m, analyzer)| analyzed_rate(cfg, analyzer, derive_seed(base, (4 * k + m) as u64)))
        .collect::<Result<Vec<f64>>>()?;
    let mut counts = [[0.0; 4]; 4];
    for (j, &(k, m, _)) in jobs.iter().enumerate() {
        counts[k][m] = (rates[j] * duration).max(0.0);
    }
    chsh_from_counts(&counts)
}

/// Tomography of the configured source state, from `data` or from counts
/// simulated at the source's expected coincidence rate.
pub struct TomographyOutput {
    pub data: TomographyData,
    pub result: MleResult,
    pub metrics: StateMetrics,
}

pub fn tomography(cfg: &RunConfig, data: Option<TomographyData>) -> Result<TomographyOutput> {
    let set = TomographySet::standard();
    let data = match data {
        Some(d) => d,
        None => {
            let src = cfg.source_params()?;
            let rate = src.pair_rate() * cfg.detectors.signal.efficiency * cfg.detectors.idler.efficiency;
            let scale = rate * cfg.analysis.tomography_duration_s;
            simulate_tomography(&src.state()?, &set, scale, derive_seed(cfg.seed, SEED_TOMOGRAPHY))?
        }
    };
    let set = data.settings()?;
    let result = mle_reconstruct(&data, &set)?;
    let metrics = StateMetrics::of(&result, &TwoPhotonState::ideal(Sign::Minus))?;
    Ok(TomographyOutput { data, result, metrics })
}

/// Derived rates for one acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateSummary {
    pub power_mw: f64,
    pub coinc_corrected: f64,
    pub heralding_s: f64,
    pub heralding_i: f64,
    pub pgr: f64,
    pub coinc_per_mw: f64,
    pub pgr_per_mw: f64,
}

impl RateSummary {
    pub const CSV_HEADER: &'static str = "power_mw,coinc_corrected,heralding_s,heralding_i,pgr,coinc_per_mw,pgr_per_mw";

    pub fn of(r: &CountRecord) -> Result<Self> {
        let pgr = r.pgr()?;
        let per_mw = |v: f64| if r.power_mw > 0.0 { v / r.power_mw } else { f64::NAN };
        Ok(RateSummary {
            power_mw: r.power_mw,
            coinc_corrected: r.coinc_corrected,
            heralding_s: r.heralding_s()?,
            heralding_i: r.heralding_i()?,
            pgr,
            coinc_per_mw: per_mw(r.coinc_corrected),
            pgr_per_mw: per_mw(pgr),
        })
    }
}

/// Power sweep and the exponential visibility model fitted to it.
pub struct SweepOutput {
    pub points: Vec<PowerPoint>,
    pub fitted_visibility: Option<VisibilityModel>,
}

pub fn sweep(cfg: &RunConfig) -> Result<SweepOutput> {
    let points = countsim::power_sweep(
        &cfg.source_params()?,
        &cfg.sweep.powers_mw,
        &cfg.detectors.signal,
        &cfg.detectors.idler,
        &cfg.acquisition,
        derive_seed(cfg.seed, SEED_SWEEP),
    )?;
    let anchors: Vec<(f64, f64)> = points
        .iter()
        .filter_map(|p| p.visibility.map(|v| (p.power_mw, v.average())))
        .collect();
    Ok(SweepOutput {
        fitted_visibility: VisibilityModel::fit(&anchors).ok(),
        points,
    })
}

pub const SWEEP_VISIBILITY_HEADER: &str = "power_mw,visibility_hv,visibility_da,visibility_rl,visibility_avg";

pub fn sweep_visibility_csv(points: &[PowerPoint]) -> String {
    let mut out = format!("{SWEEP_VISIBILITY_HEADER}\n");
    for p in points {
        match p.visibility {
            Some(v) => out.push_str(&format!("{},{:.6},{:.6},{:.6},{:.6}\n", p.power_mw, v.hv, v.da, v.rl, v.average())),
            None => out.push_str(&format!("{},,,,\n", p.power_mw)),
        }
    }
    out
}

/// Whether singles and raw coincidences never decrease with power.
pub fn monotone_rates(points: &[PowerPoint]) -> bool {
    let mut sorted: Vec<&PowerPoint> = points.iter().collect();
    sorted.sort_by(|a, b| a.power_mw.total_cmp(&b.power_mw));
    sorted.windows(2).all(|w| {
        let (a, b) = (&w[0].record, &w[1].record);
        b.singles_s >= a.singles_s && b.singles_i >= a.singles_i && b.coinc_raw >= a.coinc_raw
    })
}

/// Writes files into one directory and records their hashes. In check
/// mode nothing is written; only the hashes are computed.
pub struct OutputDir {
    dir: PathBuf,
    files: BTreeMap<String, String>,
    dry: bool,
}

impl OutputDir {
    pub fn create(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(OutputDir { dir, files: BTreeMap::new(), dry: false })
    }

    pub fn check_only(dir: impl Into<PathBuf>) -> Self {
        OutputDir { dir: dir.into(), files: BTreeMap::new(), dry: true }
    }

    pub fn path(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, bytes: impl AsRef<[u8]>) -> Result<PathBuf> {
        let path = self.dir.join(name);
        if !self.dry {
            std::fs::write(&path, bytes.as_ref()).map_err(|e| Error::io(&path, e))?;
        }
        self.files.insert(name.to_string(), sha256_hex(bytes.as_ref()));
        Ok(path)
    }

    pub fn files(&self) -> &BTreeMap<String, String> {
        &self.files
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub const MANIFEST_NAME: &str = "run-manifest.json";

/// Provenance of one subcommand's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunEntry {
    pub config_sha256: String,
    pub seed: u64,
    /// Output file name → SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
}

impl RunEntry {
    pub fn new(cfg: &RunConfig, outputs: &OutputDir) -> Self {
        RunEntry { config_sha256: cfg.hash(), seed: cfg.seed, outputs: outputs.files().clone() }
    }

    /// Differences from `recorded`: the config, or files whose hashes differ.
    pub fn differences(&self, recorded: &RunEntry) -> Vec<String> {
        let mut bad = Vec::new();
        if self.config_sha256 != recorded.config_sha256 {
            bad.push("config".to_string());
        }
        let names: std::collections::BTreeSet<&String> = self.outputs.keys().chain(recorded.outputs.keys()).collect();
        bad.extend(names.into_iter().filter(|n| self.outputs.get(*n) != recorded.outputs.get(*n)).cloned());
        bad
    }
}

/// Provenance record kept in each output directory, one entry per
/// subcommand that wrote there.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub runs: BTreeMap<String, RunEntry>,
}

impl Default for RunManifest {
    fn default() -> Self {
        RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            runs: BTreeMap::new(),
        }
    }
}

impl RunManifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_NAME);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// The existing manifest in `dir`, or an empty one.
    pub fn load_or_default(dir: &Path) -> Result<Self> {
        if dir.join(MANIFEST_NAME).exists() {
            Self::load(dir)
        } else {
            Ok(Self::default())
        }
    }

    pub fn record(&mut self, command: &str, entry: RunEntry) {
        self.tool = env!("CARGO_PKG_NAME").to_string();
        self.version = env!("CARGO_PKG_VERSION").to_string();
        self.runs.insert(command.to_string(), entry);
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_NAME);
        let text = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    /// Declared files in `dir` whose contents no longer match their hashes.
    pub fn mismatches(&self, dir: &Path) -> Vec<String> {
        let mut bad: Vec<String> = self
            .runs
            .values()
            .flat_map(|r| r.outputs.iter())
            .filter(|(name, hash)| match std::fs::read(dir.join(name)) {
                Ok(bytes) => &sha256_hex(&bytes) != *hash,
                Err(_) => true,
            })
            .map(|(name, _)| name.clone())
            .collect();
        bad.sort();
        bad.dedup();
        bad
    }
}

/// One line of the reproduction report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReportRow {
    pub id: String,
    pub quantity: String,
    pub measured: f64,
    pub target: f64,
    pub tolerance: f64,
    /// Tolerance is a fraction of the target rather than an absolute value.
    pub relative: bool,
    pub pass: bool,
}

impl ReportRow {
    fn check(id: &str, quantity: &str, measured: f64, target: f64, tolerance: f64, relative: bool) -> Self {
        let allowed = if relative { tolerance * target.abs() } else { tolerance };
        ReportRow {
            id: id.into(),
            quantity: quantity.into(),
            measured,
            target,
            tolerance,
            relative,
            pass: (measured - target).abs() <= allowed,
        }
    }

    fn flag(id: &str, quantity: &str, ok: bool) -> Self {
        ReportRow {
            id: id.into(),
            quantity: quantity.into(),
            measured: if ok { 1.0 } else { 0.0 },
            target: 1.0,
            tolerance: 0.0,
            relative: false,
            pass: ok,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Report {
    pub rows: Vec<ReportRow>,
    /// Stages that failed, with their errors.
    pub errors: Vec<String>,
}

impl Report {
    pub const CSV_HEADER: &'static str = "id,quantity,measured,target,tolerance,relative,pass";

    pub fn all_pass(&self) -> bool {
        self.errors.is_empty() && self.rows.iter().all(|r| r.pass)
    }

    pub fn row(&self, id: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.id == id)
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("{}\n", Self::CSV_HEADER);
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{},{},{}\n",
                r.id,
                r.quantity,
                r.measured,
                r.target,
                short(r.tolerance),
                r.relative,
                r.pass
            ));
        }
        out
    }

    fn stage<T>(&mut self, name: &str, r: Result<T>) -> Option<T> {
        match r {
            Ok(v) => Some(v),
            Err(e) => {
                self.errors.push(format!("{name}: {e}"));
                None
            }
        }
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<4} {:<44} {:>14} {:>14} {:>12}  result", "id", "quantity", "measured", "target", "tolerance")?;
        for r in &self.rows {
            let tol = if r.relative {
                format!("±{}%", short(r.tolerance * 100.0))
            } else {
                format!("±{}", short(r.tolerance))
            };
            writeln!(
                f,
                "{:<4} {:<44} {:>14.6} {:>14.6} {:>12}  {}",
                r.id,
                r.quantity,
                r.measured,
                r.target,
                tol,
                if r.pass { "PASS" } else { "FAIL" }
            )?;
        }
        for e in &self.errors {
            writeln!(f, "stage failed: {e}")?;
        }
        Ok(())
    }
}

/// Compact number formatting that hides float round-off.
fn short(x: f64) -> String {
    if x != 0.0 && x.abs() < 1e-4 {
        return format!("{x:e}");
    }
    let s = format!("{x:.6}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

// Published values the report is checked against.
const FITTED_VISIBILITY_BAND: (f64, f64) = (0.9526, 0.9649);

/// Runs every stage and checks the results against the reference values.
/// A failing stage is recorded and the remaining stages still run.
pub fn full_reproduction(cfg: &RunConfig, materials: &MaterialTable) -> Report {
    let mut rep = Report::default();
    if let Err(e) = cfg.validate(materials) {
        rep.errors.push(format!("config: {e}"));
    }

    if let Some(g) = rep.stage("design", design(cfg, materials)) {
        rep.rows.extend([
            ReportRow::check("G1", "pump beam separation (mm)", g.separation_mm, 3.3, 0.2, false),
            ReportRow::check("G2", "pump e/o delay (ps)", g.pump_delay_ps, 0.91, 0.1, false),
            ReportRow::check("G3", "signal residual delay (ps)", g.dtau_s_ps, 0.07, 0.05, false),
            ReportRow::check("G4", "idler residual delay (ps)", g.dtau_i_ps, 0.17, 0.05, false),
            ReportRow::check("G5", "signal residual displacement (mm)", g.dd_s_mm, 0.12, 0.05, false),
            ReportRow::check("G6", "idler residual displacement (mm)", g.dd_i_mm, 0.33, 0.05, false),
            ReportRow::check("G7", "temporal overlap", g.temporal_overlap, 0.998, 0.002, false),
            ReportRow::check("G8", "signal spatial overlap", g.spatial_overlap_s, 0.99, 0.005, false),
            ReportRow::check("G9", "idler spatial overlap", g.spatial_overlap_i, 0.98, 0.005, false),
        ]);
    }

    if let Some(idler) = rep.stage("energy conservation", conjugate_wavelength(cfg.geometry.pump_nm, cfg.geometry.signal_nm)) {
        rep.rows.push(ReportRow::check("P1", "idler wavelength (nm)", idler, 1650.7, 0.1, false));
    }
    if let Some(pm) = rep.stage("phasematch", phasematch(cfg, materials)) {
        rep.rows.push(ReportRow::check(
            "P2",
            "phase-matching temperature for signal (C)",
            pm.design_temperature_c.unwrap_or(f64::NAN),
            62.0,
            15.0,
            false,
        ));
        rep.rows.push(ReportRow::check(
            "P3",
            "signal at set temperature (nm)",
            pm.operating_point.map_or(f64::NAN, |m| m.triplet.signal_nm),
            785.0,
            15.0,
            false,
        ));
    }

    let ideal = TwoPhotonState::ideal(Sign::Minus);
    let angles = cfg.analysis.chsh_angles;
    rep.rows.push(ReportRow::check("S1", "CHSH S, ideal state", chsh(&ideal, &ChshAngles::STANDARD), 2.0 * 2f64.sqrt(), 1e-9, false));
    if let Some(state) = rep.stage("source state", cfg.source_params().and_then(|s| s.state())) {
        rep.rows.push(ReportRow::check("S2", "CHSH S, source state (exact)", chsh(&state, &angles), 2.712, 0.001, false));
    }
    if let Some((s, _sigma)) = rep.stage("chsh", chsh_measurement(cfg)) {
        rep.rows.push(ReportRow::check("S3", "CHSH S, simulated counts", s, 2.71, 0.06, false));
    }
    if let Some(fits) = rep.stage("correlation", correlation(cfg).and_then(|rows| correlation_fits(&rows))) {
        let (lo, hi) = FITTED_VISIBILITY_BAND;
        for (k, (p, fit)) in fits.iter().enumerate() {
            rep.rows.push(ReportRow::check(
                &format!("V{}", k + 1),
                &format!("fitted correlation visibility, signal {p}"),
                fit.visibility,
                0.5 * (lo + hi),
                0.5 * (hi - lo),
                false,
            ));
        }
    }

    if let Some(t) = rep.stage("tomography", tomography(cfg, None)) {
        rep.rows.extend([
            ReportRow::check("T1", "concurrence", t.metrics.concurrence, 0.947, 0.02, false),
            ReportRow::check("T2", "purity", t.metrics.purity, 0.944, 0.02, false),
            ReportRow::check("T3", "fidelity to Phi-", t.metrics.fidelity, 0.967, 0.02, false),
        ]);
    }

    if let Some((rec, _, _)) = rep.stage("simulate", simulate(cfg)) {
        if let Some(r) = rep.stage("rates", RateSummary::of(&rec)) {
            let src = cfg.source_params().expect("simulation ran");
            let det = &cfg.detectors;
            let expected_s = src.pair_rate() * det.signal.efficiency + det.signal.dark_rate_cps;
            let expected_i = src.pair_rate() * det.idler.efficiency + det.idler.dark_rate_cps;
            let expected_acc = countsim::accidentals(expected_s, expected_i, cfg.acquisition.window_ns);
            rep.rows.extend([
                ReportRow::check("C1", "corrected coincidence rate (cps)", r.coinc_corrected, 2.37e3, 0.10, true),
                ReportRow::check("C2", "pair generation rate (1/s)", r.pgr, 2.1e5, 0.10, true),
                ReportRow::check("C3", "coincidences per mW (cps/mW)", r.coinc_per_mw, 6.96e4, 0.10, true),
                ReportRow::check("C4", "pair generation per mW (1/s/mW)", r.pgr_per_mw, 6.17e6, 0.10, true),
                ReportRow::check("C5", "accidental rate (cps)", rec.accidentals, expected_acc, 0.10, true),
            ]);
        }
    }

    if let Some(sw) = rep.stage("sweep", sweep(cfg)) {
        let low = sw
            .points
            .iter()
            .min_by(|a, b| a.power_mw.total_cmp(&b.power_mw))
            .and_then(|p| p.visibility.map(|v| v.average()));
        rep.rows.push(ReportRow::check("W1", "average visibility, lowest power", low.unwrap_or(f64::NAN), 0.9588, 0.01, false));
        rep.rows.push(ReportRow::flag("W2", "singles and coincidences rise with power", monotone_rates(&sw.points)));
    }
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn short_config() -> RunConfig {
        let mut cfg = RunConfig::bundled().unwrap();
        cfg.acquisition.duration_s = 1.0;
        cfg.analysis.correlation_step_deg = 30.0;
        cfg.sweep.powers_mw = vec![0.034, 0.2];
        cfg
    }

    #[test]
    fn report_rows_scale_with_window() {
        let mats = MaterialTable::builtin();
        let mut cfg = short_config();
        let wide = full_reproduction(&cfg, &mats);
        assert!(wide.errors.is_empty(), "{:?}", wide.errors);
        assert_eq!(wide.rows.len(), 29);
        cfg.acquisition.window_ns = 1.0;
        let narrow = full_reproduction(&cfg, &mats);
        let ratio = narrow.row("C5").unwrap().measured / wide.row("C5").unwrap().measured;
        assert!((ratio - 1.0 / 3.0).abs() < 1e-12, "{ratio}");
        assert!(wide.to_csv().starts_with(Report::CSV_HEADER));
    }

    #[test]
    fn failed_stage_does_not_stop_the_rest() {
        let mut cfg = short_config();
        cfg.crystal.material = "unobtainium".into();
        let rep = full_reproduction(&cfg, &MaterialTable::builtin());
        assert!(rep.errors.iter().any(|e| e.starts_with("phasematch")));
        assert!(rep.row("P2").is_none());
        assert!(rep.row("G1").is_some() && rep.row("C1").is_some() && rep.row("W2").is_some());
        assert!(!rep.all_pass());
    }

    #[test]
    fn manifest_detects_changed_files() {
        let tmp = tempfile::tempdir().unwrap();
        let mut out = OutputDir::create(tmp.path()).unwrap();
        out.write("a.csv", "x\n").unwrap();
        let mut m = RunManifest::default();
        m.record("demo", RunEntry::new(&RunConfig::bundled().unwrap(), &out));
        m.write(tmp.path()).unwrap();
        let back = RunManifest::load(tmp.path()).unwrap();
        assert_eq!(back, m);
        assert!(back.mismatches(tmp.path()).is_empty());
        std::fs::write(tmp.path().join("a.csv"), "y\n").unwrap();
        assert_eq!(back.mismatches(tmp.path()), vec!["a.csv".to_string()]);

        let mut dry = OutputDir::check_only(tmp.path());
        dry.write("b.csv", "z").unwrap();
        assert!(!tmp.path().join("b.csv").exists());
        assert_eq!(dry.files()["b.csv"], sha256_hex(b"z"));
    }
}
