//! Photon-counting Monte Carlo and rate algebra.
//!
//! Pair emission is a homogeneous Poisson process. Thinning by detector
//! efficiency (and, optionally, by a polarization analyzer) splits it into
//! three independent Poisson processes: pairs seen by both detectors, pairs
//! seen by the signal detector only, and pairs seen by the idler detector
//! only. Each is sampled directly, so the cost scales with detected events
//! rather than emitted pairs. Dark counts, Gaussian jitter and
//! non-paralyzable dead time are then applied per channel.
//!
//! Times are integer picoseconds. Generation runs in 1 s blocks, each with
//! its own ChaCha stream derived from the master seed, so results do not
//! depend on how many threads run the blocks.

use std::io::{Read, Write};
use std::path::Path;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::kron2;
use crate::measurement::{visibility_from_counts, Basis, Polarization, Projector};
use crate::state::{source_state, ImperfectionParams, TwoPhotonState};

pub const PS_PER_S: f64 = 1e12;
const BLOCK_PS: u64 = 1_000_000_000_000;

/// Pump powers of the measured power series, mW.
pub const POWER_SERIES_MW: [f64; 6] = [0.034, 0.09, 0.2, 0.52, 1.0, 2.0];

/// `V(P) = v0 · exp(−decay_per_mw · P)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VisibilityModel {
    pub v0: f64,
    pub decay_per_mw: f64,
}

impl VisibilityModel {
    pub fn constant(v: f64) -> Self {
        VisibilityModel { v0: v, decay_per_mw: 0.0 }
    }

    /// Least-squares fit of `ln V = ln v0 − k P` to two or more anchors.
    pub fn fit(anchors: &[(f64, f64)]) -> Result<Self> {
        if anchors.len() < 2 {
            return Err(Error::validation("visibility fit needs at least two anchors"));
        }
        if anchors.iter().any(|&(p, v)| !(p >= 0.0) || !(v > 0.0 && v <= 1.0)) {
            return Err(Error::validation("visibility anchors need P ≥ 0 and 0 < V ≤ 1"));
        }
        let n = anchors.len() as f64;
        let mp = anchors.iter().map(|a| a.0).sum::<f64>() / n;
        let ml = anchors.iter().map(|a| a.1.ln()).sum::<f64>() / n;
        let sxx: f64 = anchors.iter().map(|a| (a.0 - mp).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::validation("visibility anchors need distinct powers"));
        }
        let sxy: f64 = anchors.iter().map(|a| (a.0 - mp) * (a.1.ln() - ml)).sum();
        let slope = sxy / sxx;
        Ok(VisibilityModel {
            v0: (ml - slope * mp).exp(),
            decay_per_mw: -slope,
        })
    }

    pub fn at(&self, power_mw: f64) -> f64 {
        self.v0 * (-self.decay_per_mw * power_mw).exp()
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0 && self.v0 <= 1.0) {
            return Err(Error::validation(format!("visibility v0 = {} outside (0, 1]", self.v0)));
        }
        if !(self.decay_per_mw >= 0.0) {
            return Err(Error::validation("visibility decay must be ≥ 0"));
        }
        Ok(())
    }
}

/// Pair source: brightness, pump power and the state it emits.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceParams {
    pub pgr_per_mw: f64,
    pub pump_power_mw: f64,
    pub visibility: VisibilityModel,
    /// State inputs; the isotropic noise is replaced by the value that gives
    /// the modelled average visibility at the pump power.
    pub imperfections: ImperfectionParams,
}

impl SourceParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.pgr_per_mw >= 0.0) || !self.pgr_per_mw.is_finite() {
            return Err(Error::validation("pgr_per_mw must be ≥ 0"));
        }
        if !(self.pump_power_mw >= 0.0) || !self.pump_power_mw.is_finite() {
            return Err(Error::validation("pump_power_mw must be ≥ 0"));
        }
        self.visibility.validate()?;
        self.imperfections.validate()
    }

    pub fn at_power(&self, power_mw: f64) -> Self {
        SourceParams {
            pump_power_mw: power_mw,
            ..*self
        }
    }

    pub fn pair_rate(&self) -> f64 {
        self.pgr_per_mw * self.pump_power_mw
    }

    pub fn state(&self) -> Result<TwoPhotonState> {
        let v = self.visibility.at(self.pump_power_mw);
        let cf = self.imperfections.coherence_factor;
        let noise = ImperfectionParams::noise_for_average_visibility(v, cf)?;
        source_state(&ImperfectionParams {
            isotropic_noise: noise,
            ..self.imperfections
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorParams {
    pub efficiency: f64,
    pub dark_rate_cps: f64,
    pub dead_time_ns: f64,
    pub jitter_sigma_ps: f64,
}

impl DetectorParams {
    pub fn ideal() -> Self {
        DetectorParams {
            efficiency: 1.0,
            dark_rate_cps: 0.0,
            dead_time_ns: 0.0,
            jitter_sigma_ps: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.efficiency) {
            return Err(Error::validation(format!("efficiency {} outside [0, 1]", self.efficiency)));
        }
        for (name, v) in [
            ("dark_rate_cps", self.dark_rate_cps),
            ("dead_time_ns", self.dead_time_ns),
            ("jitter_sigma_ps", self.jitter_sigma_ps),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::validation(format!("{name} must be a finite value ≥ 0")));
            }
        }
        Ok(())
    }

    fn dead_time_ps(&self) -> u64 {
        ((self.dead_time_ns * 1e3).round() as u64).max(1)
    }
}

/// Transmit-port projectors in front of the two detectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analyzer {
    pub signal: Projector,
    pub idler: Projector,
}

impl Analyzer {
    pub fn new(signal: Polarization, idler: Polarization) -> Self {
        Analyzer {
            signal: signal.projector(),
            idler: idler.projector(),
        }
    }

    /// Probabilities that (both, signal, idler) photons reach the transmit port.
    fn transmission(&self, rho: &TwoPhotonState) -> (f64, f64, f64) {
        let id = crate::linalg::Mat2::identity();
        let both = rho.expectation(&kron2(self.signal.matrix(), self.idler.matrix())).re;
        let s = rho.expectation(&kron2(self.signal.matrix(), &id)).re;
        let i = rho.expectation(&kron2(&id, self.idler.matrix())).re;
        (both.clamp(0.0, 1.0), s.clamp(0.0, 1.0), i.clamp(0.0, 1.0))
    }
}

/// Sorted detection times of one channel, in picoseconds.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TimeTagStream {
    pub channel: u16,
    pub times_ps: Vec<u64>,
}

const MAGIC: &[u8; 4] = b"TTAG";
const FORMAT_VERSION: u16 = 1;

impl TimeTagStream {
    pub fn new(channel: u16, times_ps: Vec<u64>) -> Result<Self> {
        let s = TimeTagStream { channel, times_ps };
        s.validate()?;
        Ok(s)
    }

    pub fn len(&self) -> usize {
        self.times_ps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times_ps.is_empty()
    }

    pub fn is_sorted(&self) -> bool {
        self.times_ps.windows(2).all(|w| w[0] <= w[1])
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(k) = self.times_ps.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::validation(format!(
                "channel {}: times not strictly increasing at index {}",
                self.channel,
                k + 1
            )));
        }
        Ok(())
    }

    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&self.channel.to_le_bytes())?;
        let mut buf = Vec::with_capacity(self.times_ps.len() * 8);
        for t in &self.times_ps {
            buf.extend_from_slice(&t.to_le_bytes());
        }
        w.write_all(&buf)
    }

    pub fn read_binary<R: Read>(mut r: R) -> Result<Self> {
        let mut bytes = Vec::new();
        r.read_to_end(&mut bytes).map_err(|e| Error::io("<time tags>", e))?;
        if bytes.len() < 8 || &bytes[..4] != MAGIC {
            return Err(Error::validation("not a TTAG time-tag file"));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FORMAT_VERSION {
            return Err(Error::validation(format!("unsupported TTAG version {version}")));
        }
        let channel = u16::from_le_bytes([bytes[6], bytes[7]]);
        let body = &bytes[8..];
        if body.len() % 8 != 0 {
            return Err(Error::validation("truncated TTAG payload"));
        }
        let times_ps = body
            .chunks_exact(8)
            .map(|c| u64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        TimeTagStream::new(channel, times_ps)
    }

    pub fn write_binary_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_binary(std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
    }

    pub fn read_binary_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_binary(std::io::BufReader::new(file))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct TagRow {
    channel: u16,
    time_ps: u64,
}

/// Writes streams as CSV `channel,time_ps`, one stream after another.
pub fn write_timetags_csv<W: Write>(streams: &[&TimeTagStream], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for s in streams {
        for &t in &s.times_ps {
            wtr.serialize(TagRow { channel: s.channel, time_ps: t })?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// Reads CSV `channel,time_ps` into one stream per channel, ordered by channel.
pub fn read_timetags_csv<R: Read>(r: R) -> Result<Vec<TimeTagStream>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut by_channel: std::collections::BTreeMap<u16, Vec<u64>> = Default::default();
    for row in rdr.deserialize::<TagRow>() {
        let row = row?;
        by_channel.entry(row.channel).or_default().push(row.time_ps);
    }
    by_channel
        .into_iter()
        .map(|(channel, times)| TimeTagStream::new(channel, times))
        .collect()
}

/// Poisson draw that accepts a zero mean.
fn poisson<R: Rng>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
    }
}

fn uniform_times<R: Rng>(n: u64, start: u64, len: u64, rng: &mut R) -> Vec<i64> {
    (0..n).map(|_| (start + rng.random_range(0..len)) as i64).collect()
}

fn jitter<R: Rng>(times: &mut [i64], sigma_ps: f64, rng: &mut R) {
    if sigma_ps > 0.0 {
        let normal = Normal::new(0.0, sigma_ps).expect("finite sigma");
        for t in times.iter_mut() {
            *t += normal.sample(rng).round() as i64;
        }
    }
}

struct Rates {
    both: f64,
    signal_only: f64,
    idler_only: f64,
}

fn generate_block(
    rates: &Rates,
    det_s: &DetectorParams,
    det_i: &DetectorParams,
    start: u64,
    len: u64,
    seed: u64,
    block: u64,
) -> (Vec<i64>, Vec<i64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(block);
    let secs = len as f64 / PS_PER_S;

    let pairs = uniform_times(poisson(rates.both * secs, &mut rng), start, len, &mut rng);
    let mut sig = pairs.clone();
    let mut idl = pairs;
    jitter(&mut sig, det_s.jitter_sigma_ps, &mut rng);
    jitter(&mut idl, det_i.jitter_sigma_ps, &mut rng);

    let mut lone_s = uniform_times(poisson(rates.signal_only * secs, &mut rng), start, len, &mut rng);
    jitter(&mut lone_s, det_s.jitter_sigma_ps, &mut rng);
    let mut lone_i = uniform_times(poisson(rates.idler_only * secs, &mut rng), start, len, &mut rng);
    jitter(&mut lone_i, det_i.jitter_sigma_ps, &mut rng);

    sig.extend(lone_s);
    idl.extend(lone_i);
    sig.extend(uniform_times(poisson(det_s.dark_rate_cps * secs, &mut rng), start, len, &mut rng));
    idl.extend(uniform_times(poisson(det_i.dark_rate_cps * secs, &mut rng), start, len, &mut rng));
    (sig, idl)
}

/// Sorts, clips to `[0, end)` and applies non-paralyzable dead time.
fn finish_channel(mut times: Vec<i64>, end: u64, dead_ps: u64) -> Vec<u64> {
    times.sort_unstable();
    let mut out = Vec::with_capacity(times.len());
    let mut last: Option<u64> = None;
    for t in times {
        if t < 0 || t as u64 >= end {
            continue;
        }
        let t = t as u64;
        if last.is_none_or(|l| t - l >= dead_ps) {
            out.push(t);
            last = Some(t);
        }
    }
    out
}

/// Signal (channel 1) and idler (channel 2) time tags for `duration_s`.
pub fn generate_timetags(
    src: &SourceParams,
    det_s: &DetectorParams,
    det_i: &DetectorParams,
    duration_s: f64,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream)> {
    generate_with(src, det_s, det_i, duration_s, None, seed)
}

/// As [`generate_timetags`] with polarizers in front of both detectors.
pub fn generate_analyzed_timetags(
    src: &SourceParams,
    det_s: &DetectorParams,
    det_i: &DetectorParams,
    analyzer: &Analyzer,
    duration_s: f64,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream)> {
    generate_with(src, det_s, det_i, duration_s, Some(analyzer), seed)
}

fn generate_with(
    src: &SourceParams,
    det_s: &DetectorParams,
    det_i: &DetectorParams,
    duration_s: f64,
    analyzer: Option<&Analyzer>,
    seed: u64,
) -> Result<(TimeTagStream, TimeTagStream)> {
    src.validate()?;
    det_s.validate()?;
    det_i.validate()?;
    if !(duration_s > 0.0) || !duration_s.is_finite() {
        return Err(Error::validation("duration must be > 0"));
    }
    let (p_both, p_s, p_i) = match analyzer {
        Some(a) => a.transmission(&src.state()?),
        None => (1.0, 1.0, 1.0),
    };
    let r = src.pair_rate();
    let both = r * det_s.efficiency * det_i.efficiency * p_both;
    let rates = Rates {
        both,
        signal_only: (r * det_s.efficiency * p_s - both).max(0.0),
        idler_only: (r * det_i.efficiency * p_i - both).max(0.0),
    };

    let end = (duration_s * PS_PER_S).round() as u64;
    let blocks = end.div_ceil(BLOCK_PS);
    let parts: Vec<(Vec<i64>, Vec<i64>)> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let start = b * BLOCK_PS;
            let len = BLOCK_PS.min(end - start);
            generate_block(&rates, det_s, det_i, start, len, seed, b)
        })
        .collect();
    let (sig, idl): (Vec<_>, Vec<_>) = parts.into_iter().unzip();
    let sig = finish_channel(sig.concat(), end, det_s.dead_time_ps());
    let idl = finish_channel(idl.concat(), end, det_i.dead_time_ps());
    Ok((
        TimeTagStream { channel: 1, times_ps: sig },
        TimeTagStream { channel: 2, times_ps: idl },
    ))
}

/// Rates from one acquisition. All rates in counts per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountRecord {
    pub power_mw: f64,
    pub singles_s: f64,
    pub singles_i: f64,
    pub coinc_raw: f64,
    pub accidentals: f64,
    pub coinc_corrected: f64,
    pub duration_s: f64,
    pub window_ns: f64,
}

impl CountRecord {
    pub const CSV_HEADER: &'static str =
        "power_mw,singles_s,singles_i,coinc_raw,accidentals,coinc_corrected,duration_s,window_ns";

    pub fn from_counts(n_s: u64, n_i: u64, n_c: u64, duration_s: f64, window_ns: f64) -> Self {
        let singles_s = n_s as f64 / duration_s;
        let singles_i = n_i as f64 / duration_s;
        let coinc_raw = n_c as f64 / duration_s;
        let acc = accidentals(singles_s, singles_i, window_ns);
        CountRecord {
            power_mw: 0.0,
            singles_s,
            singles_i,
            coinc_raw,
            accidentals: acc,
            coinc_corrected: coinc_raw - acc,
            duration_s,
            window_ns,
        }
    }

    pub fn with_power(self, power_mw: f64) -> Self {
        CountRecord { power_mw, ..self }
    }

    pub fn heralding_s(&self) -> Result<f64> {
        heralding(self.coinc_corrected, self.singles_s)
    }

    pub fn heralding_i(&self) -> Result<f64> {
        heralding(self.coinc_corrected, self.singles_i)
    }

    pub fn pgr(&self) -> Result<f64> {
        pgr(self.singles_s, self.singles_i, self.coinc_corrected)
    }
}

pub fn write_records_csv<W: Write>(records: &[CountRecord], w: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(w);
    for r in records {
        wtr.serialize(r)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

pub fn read_records_csv<R: Read>(r: R) -> Result<Vec<CountRecord>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<Vec<CountRecord>, _>>()?)
}

fn window_ps(window_ns: f64) -> Result<u64> {
    if !(window_ns > 0.0) || !window_ns.is_finite() {
        return Err(Error::validation("coincidence window must be > 0"));
    }
    Ok((window_ns * 1e3).round() as u64)
}

fn ensure_sorted(s: &TimeTagStream) -> Result<()> {
    if s.is_sorted() {
        Ok(())
    } else {
        Err(Error::validation(format!("channel {} is not sorted", s.channel)))
    }
}

/// Number of greedy nearest-match coincidences: signals are taken in time
/// order and each claims the nearest unclaimed idler with `|Δt| ≤ window/2`
/// (the earlier idler on a tie).
pub fn coincidence_count(s: &TimeTagStream, i: &TimeTagStream, window_ns: f64) -> Result<u64> {
    ensure_sorted(s)?;
    ensure_sorted(i)?;
    let w = window_ps(window_ns)?;
    let idl = &i.times_ps;
    let mut used = vec![false; idl.len()];
    let mut lo = 0;
    let mut n = 0;
    for &t in &s.times_ps {
        // 2|Δt| ≤ w, kept in integers
        while lo < idl.len() && idl[lo] < t && 2 * (t - idl[lo]) > w {
            lo += 1;
        }
        let mut best: Option<(usize, u64)> = None;
        for (k, &u) in idl.iter().enumerate().skip(lo) {
            let d = t.abs_diff(u);
            if u > t && 2 * d > w {
                break;
            }
            if !used[k] && 2 * d <= w && best.is_none_or(|(_, bd)| d < bd) {
                best = Some((k, d));
            }
        }
        if let Some((k, _)) = best {
            used[k] = true;
            n += 1;
        }
    }
    Ok(n)
}

/// Coincidence counting over an acquisition of `duration_s`.
pub fn count_coincidences(
    s: &TimeTagStream,
    i: &TimeTagStream,
    window_ns: f64,
    duration_s: f64,
) -> Result<CountRecord> {
    if !(duration_s > 0.0) {
        return Err(Error::validation("duration must be > 0"));
    }
    let n = coincidence_count(s, i, window_ns)?;
    Ok(CountRecord::from_counts(s.len() as u64, i.len() as u64, n, duration_s, window_ns))
}

/// Accidental coincidence rate `S_s · S_i · window`.
pub fn accidentals(singles_s: f64, singles_i: f64, window_ns: f64) -> f64 {
    singles_s * singles_i * window_ns * 1e-9
}

/// Heralding efficiency `C / S`.
pub fn heralding(coincidences: f64, singles: f64) -> Result<f64> {
    if singles == 0.0 {
        return Err(Error::Undefined("heralding efficiency with zero singles".into()));
    }
    Ok(coincidences / singles)
}

/// Pair-generation rate `S_s · S_i / C`.
pub fn pgr(singles_s: f64, singles_i: f64, coincidences: f64) -> Result<f64> {
    if coincidences == 0.0 {
        return Err(Error::Undefined("pair-generation rate with zero coincidences".into()));
    }
    Ok(singles_s * singles_i / coincidences)
}

/// Registered rate of a non-paralyzable detector.
pub fn deadtime_throughput(true_rate: f64, dead_time_ns: f64) -> f64 {
    true_rate / (1.0 + true_rate * dead_time_ns * 1e-9)
}

/// Seed for sub-run `index` of a master seed.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index.wrapping_add(1 << 32));
    rng.next_u64()
}

/// Visibilities from accidental-corrected coincidences in each basis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BasisVisibilities {
    pub hv: f64,
    pub da: f64,
    pub rl: f64,
}

impl BasisVisibilities {
    pub fn average(&self) -> f64 {
        (self.hv + self.da + self.rl) / 3.0
    }
}

/// One pump power of a sweep. `visibility` is `None` when there are no
/// coincidences to form a contrast from.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerPoint {
    pub power_mw: f64,
    pub record: CountRecord,
    pub visibility: Option<BasisVisibilities>,
}

/// Acquisition settings shared by every run of a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Acquisition {
    pub duration_s: f64,
    pub window_ns: f64,
}

/// Corrected coincidence rate with the analyzers set to one basis pair.
fn analyzed_rate(
    src: &SourceParams,
    det: (&DetectorParams, &DetectorParams),
    pair: (Polarization, Polarization),
    acq: &Acquisition,
    seed: u64,
) -> Result<f64> {
    let analyzer = Analyzer::new(pair.0, pair.1);
    let (s, i) = generate_analyzed_timetags(src, det.0, det.1, &analyzer, acq.duration_s, seed)?;
    Ok(count_coincidences(&s, &i, acq.window_ns, acq.duration_s)?.coinc_corrected)
}

/// Rates and basis visibilities at one pump power. Run `0` is the
/// unanalyzed rate measurement; runs `1..=12` are the analyzed ones.
pub fn simulate_power_point(
    src: &SourceParams,
    det_s: &DetectorParams,
    det_i: &DetectorParams,
    acq: &Acquisition,
    seed: u64,
) -> Result<PowerPoint> {
    let (s, i) = generate_timetags(src, det_s, det_i, acq.duration_s, derive_seed(seed, 0))?;
    let record = count_coincidences(&s, &i, acq.window_ns, acq.duration_s)?.with_power(src.pump_power_mw);

    let jobs: Vec<(usize, (Polarization, Polarization))> = Basis::ALL
        .iter()
        .flat_map(|b| b.projection_pairs())
        .enumerate()
        .collect();
    let rates = jobs
        .par_iter()
        .map(|&(k, pair)| analyzed_rate(src, (det_s, det_i), pair, acq, derive_seed(seed, 1 + k as u64)))
        .collect::<Result<Vec<f64>>>()?;
    let vis = |b: usize| {
        let c = &rates[4 * b..4 * b + 4];
        visibility_from_counts(c[0], c[1], c[2], c[3]).map(f64::abs)
    };
    let visibility = match (vis(0), vis(1), vis(2)) {
        (Ok(hv), Ok(da), Ok(rl)) => Some(BasisVisibilities { hv, da, rl }),
        _ => None,
    };
    Ok(PowerPoint {
        power_mw: src.pump_power_mw,
        record,
        visibility,
    })
}

/// [`simulate_power_point`] for each power, seeds derived per power index.
pub fn power_sweep(
    src: &SourceParams,
    powers_mw: &[f64],
    det_s: &DetectorParams,
    det_i: &DetectorParams,
    acq: &Acquisition,
    seed: u64,
) -> Result<Vec<PowerPoint>> {
    if powers_mw.is_empty() {
        return Err(Error::validation("power sweep needs at least one power"));
    }
    powers_mw
        .iter()
        .enumerate()
        .map(|(k, &p)| simulate_power_point(&src.at_power(p), det_s, det_i, acq, derive_seed(seed, 1000 + k as u64)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::PumpPolarization;
    use approx::assert_relative_eq;

    fn source(power_mw: f64) -> SourceParams {
        SourceParams {
            pgr_per_mw: 6.17e6,
            pump_power_mw: power_mw,
            visibility: VisibilityModel::constant(0.9588),
            imperfections: ImperfectionParams {
                coherence_factor: 1.0,
                phase_error_rad: 0.0,
                isotropic_noise: 0.0,
                pump: PumpPolarization::balanced(),
            },
        }
    }

    fn detector(efficiency: f64) -> DetectorParams {
        DetectorParams {
            efficiency,
            dark_rate_cps: 100.0,
            dead_time_ns: 32.0,
            jitter_sigma_ps: 150.0,
        }
    }

    fn stream(times: Vec<u64>) -> TimeTagStream {
        TimeTagStream { channel: 0, times_ps: times }
    }

    // All-pairs greedy matcher: each signal in order takes the nearest unused
    // idler within half a window, earliest on ties.
    fn brute_force(s: &[u64], i: &[u64], window_ps: u64) -> u64 {
        let mut used = vec![false; i.len()];
        let mut n = 0;
        for &t in s {
            let mut best: Option<(usize, u64)> = None;
            for (k, &u) in i.iter().enumerate() {
                let d = t.abs_diff(u);
                if !used[k] && 2 * d <= window_ps && best.is_none_or(|(_, bd)| d < bd) {
                    best = Some((k, d));
                }
            }
            if let Some((k, _)) = best {
                used[k] = true;
                n += 1;
            }
        }
        n
    }

    #[test]
    fn coincidences_match_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let span = rng.random_range(10..5_000u64);
            let mut s: Vec<u64> = (0..rng.random_range(0..60)).map(|_| rng.random_range(0..span)).collect();
            let mut i: Vec<u64> = (0..rng.random_range(0..60)).map(|_| rng.random_range(0..span)).collect();
            s.sort_unstable();
            i.sort_unstable();
            let w = rng.random_range(1..400u64);
            let fast = coincidence_count(&stream(s.clone()), &stream(i.clone()), w as f64 / 1e3).unwrap();
            assert_eq!(fast, brute_force(&s, &i, w));
        }
    }

    #[test]
    fn coincidence_edge_cases() {
        let t = stream(vec![10, 5_000, 90_000]);
        assert_eq!(coincidence_count(&t, &t, 0.001).unwrap(), 3);
        assert_eq!(coincidence_count(&t, &stream(vec![]), 3.0).unwrap(), 0);
        // exactly half a window apart counts, one tick more does not
        assert_eq!(coincidence_count(&stream(vec![1000]), &stream(vec![2500]), 3.0).unwrap(), 1);
        assert_eq!(coincidence_count(&stream(vec![1000]), &stream(vec![2501]), 3.0).unwrap(), 0);
        // nearest wins, each idler used once
        assert_eq!(coincidence_count(&stream(vec![1000, 1100]), &stream(vec![1090]), 3.0).unwrap(), 1);
        assert!(coincidence_count(&stream(vec![5, 1]), &t, 3.0).is_err());
        assert!(coincidence_count(&t, &t, 0.0).is_err());
    }

    #[test]
    fn rate_algebra() {
        assert_relative_eq!(accidentals(1e5, 1e4, 3.0), 3.0, max_relative = 1e-12);
        assert_eq!(accidentals(0.0, 1e4, 3.0), 0.0);
        assert_relative_eq!(accidentals(1e5, 1e4, 6.0), 2.0 * accidentals(1e5, 1e4, 3.0));
        assert_relative_eq!(heralding(2370.0, 23700.0).unwrap(), 0.1);
        assert_eq!(heralding(5.0, 5.0).unwrap(), 1.0);
        assert!(matches!(heralding(1.0, 0.0), Err(Error::Undefined(_))));
        assert_eq!(pgr(7.0, 7.0, 7.0).unwrap(), 7.0);
        assert_relative_eq!(pgr(3e4, 2e4, 50.0).unwrap() * 4.0, pgr(12e4, 8e4, 200.0).unwrap());
        assert!(matches!(pgr(1.0, 1.0, 0.0), Err(Error::Undefined(_))));
        let (c, s, i) = (2370.0, 26322.0, 19064.0);
        let product = heralding(c, s).unwrap() * heralding(c, i).unwrap() * pgr(s, i, c).unwrap();
        assert_relative_eq!(product, c, max_relative = 1e-14);
        assert_relative_eq!(deadtime_throughput(1e6, 32.0), 9.69e5, max_relative = 1e-3);
        assert_eq!(deadtime_throughput(12345.0, 0.0), 12345.0);
        assert_relative_eq!(deadtime_throughput(1e15, 32.0), 3.125e7, max_relative = 1e-5);
    }

    #[test]
    fn dead_time_matches_event_simulation() {
        // Poisson arrivals at 1e6 cps through a 32 ns non-paralyzable detector
        let det = DetectorParams { efficiency: 1.0, dark_rate_cps: 1e6, dead_time_ns: 32.0, jitter_sigma_ps: 0.0 };
        let off = DetectorParams { dark_rate_cps: 0.0, ..det };
        let (s, _) = generate_timetags(&source(0.0), &det, &off, 2.0, 3).unwrap();
        let measured = s.len() as f64 / 2.0;
        assert_relative_eq!(measured, deadtime_throughput(1e6, 32.0), max_relative = 0.01);
        assert!(s.times_ps.windows(2).all(|w| w[1] - w[0] >= 32_000));
    }

    #[test]
    fn accidentals_match_independent_streams() {
        let det = |rate| DetectorParams { efficiency: 1.0, dark_rate_cps: rate, dead_time_ns: 0.0, jitter_sigma_ps: 0.0 };
        let (s, i) = generate_timetags(&source(0.0), &det(1e5), &det(1e4), 10.0, 5).unwrap();
        let rec = count_coincidences(&s, &i, 3.0, 10.0).unwrap();
        let expected = accidentals(rec.singles_s, rec.singles_i, 3.0) * 10.0;
        let observed = rec.coinc_raw * 10.0;
        assert!((observed - expected).abs() < 3.0 * expected.sqrt(), "{observed} vs {expected}");
    }

    #[test]
    fn limiting_cases() {
        let off = DetectorParams { efficiency: 0.0, ..DetectorParams::ideal() };
        let (s, i) = generate_timetags(&source(1.0), &off, &off, 1.0, 1).unwrap();
        assert!(s.is_empty() && i.is_empty());

        let src = SourceParams { pgr_per_mw: 1e6, pump_power_mw: 1.0, ..source(1.0) };
        let (s, i) = generate_timetags(&src, &DetectorParams::ideal(), &DetectorParams::ideal(), 1.0, 2).unwrap();
        assert_eq!(s.times_ps, i.times_ps);
        assert!((s.len() as f64 - 1e6).abs() < 5.0 * 1e3);
        s.validate().unwrap();
        assert!(generate_timetags(&src, &off, &off, 0.0, 1).is_err());
    }

    #[test]
    fn generation_is_deterministic_across_thread_counts() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| generate_timetags(&source(0.034), &detector(0.125), &detector(0.0904), 3.5, 77).unwrap())
        };
        let a = run(1);
        assert_eq!(a, run(4));
        assert_ne!(a, generate_timetags(&source(0.034), &detector(0.125), &detector(0.0904), 3.5, 78).unwrap());
        a.0.validate().unwrap();
        a.1.validate().unwrap();
        assert!(a.0.times_ps.last().unwrap() < &3_500_000_000_000);
    }

    #[test]
    fn low_power_rates() {
        let (s, i) = generate_timetags(&source(0.034), &detector(0.125), &detector(0.0904), 10.0, 2024).unwrap();
        let rec = count_coincidences(&s, &i, 3.0, 10.0).unwrap();
        assert_relative_eq!(rec.coinc_corrected, 2370.0, max_relative = 0.05);
        assert_relative_eq!(rec.pgr().unwrap(), 6.17e6 * 0.034, max_relative = 0.05);
        assert!(rec.coinc_raw <= rec.singles_s.min(rec.singles_i));
    }

    #[test]
    fn analyzer_thins_by_projection() {
        let src = source(1.0);
        let det = DetectorParams::ideal();
        let hh = Analyzer::new(Polarization::H, Polarization::H);
        let hv = Analyzer::new(Polarization::H, Polarization::V);
        let (s, i) = generate_analyzed_timetags(&src, &det, &det, &hh, 1.0, 4).unwrap();
        let c_hh = count_coincidences(&s, &i, 3.0, 1.0).unwrap().coinc_corrected;
        let (s, i) = generate_analyzed_timetags(&src, &det, &det, &hv, 1.0, 4).unwrap();
        let c_hv = count_coincidences(&s, &i, 3.0, 1.0).unwrap().coinc_corrected;
        // Werner 0.9588: P(HH) = (1 + p)/4, P(HV) = (1 − p)/4
        assert_relative_eq!(c_hh / 6.17e6, (1.0 + 0.9588) / 4.0, max_relative = 0.01);
        assert_relative_eq!(c_hv / 6.17e6, (1.0 - 0.9588) / 4.0, max_relative = 0.03);
        assert_relative_eq!(s.len() as f64 / 6.17e6, 0.5, max_relative = 0.01);
    }

    #[test]
    fn power_point_visibility() {
        let acq = Acquisition { duration_s: 2.0, window_ns: 3.0 };
        let p = simulate_power_point(&source(0.034), &detector(0.125), &detector(0.0904), &acq, 9).unwrap();
        let v = p.visibility.unwrap();
        assert!((v.average() - 0.9588).abs() < 0.01, "{v:?}");

        let dark = simulate_power_point(&source(0.0), &detector(0.125), &detector(0.0904), &acq, 9).unwrap();
        assert_relative_eq!(dark.record.singles_s, 100.0, max_relative = 0.2);
        assert_relative_eq!(dark.record.singles_i, 100.0, max_relative = 0.2);
        assert!(dark.visibility.is_none());
        assert!(power_sweep(&source(1.0), &[], &detector(0.1), &detector(0.1), &acq, 1).is_err());
    }

    #[test]
    fn visibility_model_fit() {
        let m = VisibilityModel { v0: 0.96, decay_per_mw: 0.02 };
        let anchors: Vec<(f64, f64)> = POWER_SERIES_MW.iter().map(|&p| (p, m.at(p))).collect();
        let fit = VisibilityModel::fit(&anchors).unwrap();
        assert_relative_eq!(fit.v0, 0.96, max_relative = 1e-12);
        assert_relative_eq!(fit.decay_per_mw, 0.02, max_relative = 1e-10);
        assert!(VisibilityModel::fit(&[(1.0, 0.9)]).is_err());
        assert!(VisibilityModel::fit(&[(1.0, 0.9), (1.0, 0.8)]).is_err());
    }

    #[test]
    fn file_formats_round_trip() {
        let s = TimeTagStream::new(3, vec![0, 17, 1 << 40, u64::MAX]).unwrap();
        let mut buf = Vec::new();
        s.write_binary(&mut buf).unwrap();
        assert_eq!(&buf[..4], b"TTAG");
        assert_eq!(buf.len(), 8 + 4 * 8);
        assert_eq!(TimeTagStream::read_binary(&buf[..]).unwrap(), s);
        assert!(TimeTagStream::read_binary(&buf[..buf.len() - 1]).is_err());
        assert!(TimeTagStream::read_binary(&b"NOPE\x01\x00\x00\x00"[..]).is_err());

        let t = TimeTagStream::new(4, vec![5, 6]).unwrap();
        let mut csv_buf = Vec::new();
        write_timetags_csv(&[&s, &t], &mut csv_buf).unwrap();
        assert!(csv_buf.starts_with(b"channel,time_ps\n"));
        assert_eq!(read_timetags_csv(&csv_buf[..]).unwrap(), vec![s, t]);

        let rec = CountRecord::from_counts(1000, 900, 50, 2.0, 3.0).with_power(0.5);
        let mut buf = Vec::new();
        write_records_csv(&[rec], &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with(CountRecord::CSV_HEADER));
        assert_eq!(read_records_csv(&buf[..]).unwrap(), vec![rec]);
    }
}
