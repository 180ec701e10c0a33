//! Type-0 quasi-phase matching in periodically poled crystals.
//!
//! All three fields are extraordinary. Wavelengths are vacuum wavelengths in
//! nm, poling periods in µm, and the momentum mismatch is returned in rad/µm.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{OpticalAxis, SellmeierModel};

/// Number of samples used to bracket roots before bisection.
const BRACKET_SAMPLES: usize = 100;
/// Root-solve target for `|Δk|` in rad/µm.
const RESIDUAL_TARGET: f64 = 1e-6;

/// Energy-conservation partner of `signal_nm` for the given pump.
pub fn conjugate_wavelength(pump_nm: f64, signal_nm: f64) -> Result<f64> {
    if !(pump_nm > 0.0) {
        return Err(Error::Domain(format!("pump wavelength {pump_nm} nm must be positive")));
    }
    if !(signal_nm > pump_nm) {
        return Err(Error::Domain(format!(
            "no down-conversion: signal {signal_nm} nm is not longer than pump {pump_nm} nm"
        )));
    }
    Ok((1.0 / pump_nm - 1.0 / signal_nm).recip())
}

/// Pump, signal and idler wavelengths of one down-conversion process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpdcTriplet {
    pub pump_nm: f64,
    pub signal_nm: f64,
    pub idler_nm: f64,
}

impl SpdcTriplet {
    /// Builds the triplet from pump and one daughter wavelength, labelling the
    /// shorter daughter as the signal.
    pub fn from_pump_signal(pump_nm: f64, signal_nm: f64) -> Result<Self> {
        let idler_nm = conjugate_wavelength(pump_nm, signal_nm)?;
        let (signal_nm, idler_nm) = if signal_nm <= idler_nm {
            (signal_nm, idler_nm)
        } else {
            (idler_nm, signal_nm)
        };
        Ok(SpdcTriplet {
            pump_nm,
            signal_nm,
            idler_nm,
        })
    }

    /// Residual of `1/λp − 1/λs − 1/λi` in nm⁻¹.
    pub fn energy_residual(&self) -> f64 {
        1.0 / self.pump_nm - 1.0 / self.signal_nm - 1.0 / self.idler_nm
    }

    pub fn degenerate_nm(&self) -> f64 {
        2.0 * self.pump_nm
    }

    /// Same process with signal and idler labels exchanged.
    pub fn swapped(&self) -> Self {
        SpdcTriplet {
            pump_nm: self.pump_nm,
            signal_nm: self.idler_nm,
            idler_nm: self.signal_nm,
        }
    }
}

/// A periodically poled nonlinear crystal.
#[derive(Debug, Clone, PartialEq)]
pub struct CrystalSpec {
    pub material: SellmeierModel,
    pub length_mm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
    pub qpm_order: u32,
}

impl CrystalSpec {
    pub fn new(
        material: SellmeierModel,
        length_mm: f64,
        poling_period_um: f64,
        temperature_c: f64,
    ) -> Result<Self> {
        let spec = CrystalSpec {
            material,
            length_mm,
            poling_period_um,
            temperature_c,
            qpm_order: 1,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.length_mm > 0.0) {
            return Err(Error::validation("crystal length must be > 0"));
        }
        if !(self.poling_period_um > 0.0) {
            return Err(Error::validation("poling period must be > 0"));
        }
        if self.qpm_order.is_multiple_of(2) {
            return Err(Error::validation("QPM order must be a positive odd integer"));
        }
        Ok(())
    }

    pub fn at_temperature(&self, temperature_c: f64) -> Self {
        CrystalSpec {
            temperature_c,
            ..self.clone()
        }
    }

    /// Grating vector `2π m / Λ` in rad/µm.
    pub fn grating_k(&self) -> f64 {
        2.0 * PI * self.qpm_order as f64 / self.poling_period_um
    }

    /// Wavevector `2π n_e / λ` in rad/µm.
    fn k(&self, lambda_nm: f64) -> Result<f64> {
        let n = self
            .material
            .refractive_index(lambda_nm, self.temperature_c, OpticalAxis::Extraordinary)?;
        Ok(2.0 * PI * n / (lambda_nm * 1e-3))
    }

    /// Type-0 momentum mismatch `k_p − k_s − k_i − 2πm/Λ` in rad/µm.
    pub fn qpm_mismatch(&self, triplet: &SpdcTriplet) -> Result<f64> {
        Ok(self.k(triplet.pump_nm)? - self.k(triplet.signal_nm)? - self.k(triplet.idler_nm)?
            - self.grating_k())
    }

    fn mismatch_at_signal(&self, pump_nm: f64, signal_nm: f64) -> Result<f64> {
        let idler_nm = conjugate_wavelength(pump_nm, signal_nm)?;
        self.qpm_mismatch(&SpdcTriplet {
            pump_nm,
            signal_nm,
            idler_nm,
        })
    }

    /// Signal wavelength interval on the short-wavelength side of degeneracy
    /// for which pump, signal and idler all lie in the material's range.
    fn signal_search_interval(&self, pump_nm: f64) -> Result<(f64, f64)> {
        let [lo, hi] = self.material.valid_range_nm;
        if pump_nm < lo || pump_nm > hi {
            return Err(Error::Range {
                quantity: "pump wavelength (nm)",
                value: pump_nm,
                violated: if pump_nm < lo { "minimum" } else { "maximum" },
                limit: if pump_nm < lo { lo } else { hi },
                context: self.material.material_name.clone(),
            });
        }
        let degenerate = 2.0 * pump_nm;
        // smallest signal whose idler stays below the upper range limit
        let start = if hi > degenerate {
            conjugate_wavelength(pump_nm, hi)?.max(lo)
        } else {
            return Err(Error::Domain(format!(
                "degenerate wavelength {degenerate} nm lies outside the material range"
            )));
        };
        let pad = 1e-9 * degenerate;
        Ok((start + pad, degenerate - pad))
    }

    /// Non-degenerate signal wavelength satisfying `Δk = 0` at this crystal's
    /// temperature, or `None` if no sign change is bracketed.
    pub fn solve_signal(&self, pump_nm: f64) -> Result<Option<PhaseMatch>> {
        let (a, b) = self.signal_search_interval(pump_nm)?;
        let f = |s: f64| self.mismatch_at_signal(pump_nm, s);
        let step = (b - a) / (BRACKET_SAMPLES - 1) as f64;
        let mut x0 = a;
        let mut f0 = f(x0)?;
        for i in 1..BRACKET_SAMPLES {
            let x1 = if i == BRACKET_SAMPLES - 1 { b } else { a + step * i as f64 };
            let f1 = f(x1)?;
            if f0 == 0.0 {
                return self.finish(pump_nm, x0).map(Some);
            }
            if f0.signum() != f1.signum() {
                let root = bisect(&f, x0, x1, f0)?;
                return self.finish(pump_nm, root).map(Some);
            }
            x0 = x1;
            f0 = f1;
        }
        Ok(None)
    }

    /// Crystal temperature in `[t_min, t_max]` at which `signal_nm` is phase
    /// matched, or `None` if `Δk` does not change sign over the interval.
    pub fn temperature_for_signal(&self, pump_nm: f64, signal_nm: f64, t_min: f64, t_max: f64) -> Result<Option<f64>> {
        if !(t_max > t_min) {
            return Err(Error::validation("temperature search needs t_max > t_min"));
        }
        let f = |t: f64| self.at_temperature(t).mismatch_at_signal(pump_nm, signal_nm);
        let (f_lo, f_hi) = (f(t_min)?, f(t_max)?);
        if f_lo == 0.0 {
            return Ok(Some(t_min));
        }
        if f_lo.signum() == f_hi.signum() {
            return Ok(None);
        }
        bisect(&f, t_min, t_max, f_lo).map(Some)
    }

    fn finish(&self, pump_nm: f64, signal_nm: f64) -> Result<PhaseMatch> {
        let triplet = SpdcTriplet::from_pump_signal(pump_nm, signal_nm)?;
        let residual = self.qpm_mismatch(&triplet)?;
        Ok(PhaseMatch { triplet, residual })
    }

    /// Temperature tuning curve over `[t_min, t_max]` with `steps` samples.
    ///
    /// Samples without a bracketed root are reported with `phase_match: None`.
    pub fn tuning_curve(
        &self,
        pump_nm: f64,
        t_min: f64,
        t_max: f64,
        steps: usize,
    ) -> Result<Vec<TuningPoint>> {
        if steps < 2 {
            return Err(Error::validation("tuning curve needs at least 2 steps"));
        }
        if !(t_max >= t_min) {
            return Err(Error::validation("tuning curve needs tmax >= tmin"));
        }
        (0..steps)
            .into_par_iter()
            .map(|i| {
                let t = t_min + (t_max - t_min) * i as f64 / (steps - 1) as f64;
                let phase_match = self.at_temperature(t).solve_signal(pump_nm)?;
                Ok(TuningPoint {
                    temperature_c: t,
                    phase_match,
                })
            })
            .collect()
    }
}

fn bisect(f: &impl Fn(f64) -> Result<f64>, mut lo: f64, mut hi: f64, mut f_lo: f64) -> Result<f64> {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let f_mid = f(mid)?;
        if f_mid.abs() < RESIDUAL_TARGET || hi - lo < 1e-12 * hi {
            return Ok(mid);
        }
        if f_mid.signum() == f_lo.signum() {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// A solved operating point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseMatch {
    pub triplet: SpdcTriplet,
    /// `Δk` at the solution, rad/µm.
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TuningPoint {
    pub temperature_c: f64,
    pub phase_match: Option<PhaseMatch>,
}

/// Writes a tuning curve as CSV with header
/// `temperature_C,signal_nm,idler_nm,residual`. Unmatched samples have empty
/// wavelength fields and residual `no phase match`.
pub fn write_tuning_csv<W: std::io::Write>(points: &[TuningPoint], mut out: W) -> std::io::Result<()> {
    writeln!(out, "temperature_C,signal_nm,idler_nm,residual")?;
    for p in points {
        match p.phase_match {
            Some(m) => writeln!(
                out,
                "{},{:.6},{:.6},{:.3e}",
                p.temperature_c, m.triplet.signal_nm, m.triplet.idler_nm, m.residual
            )?,
            None => writeln!(out, "{},,,no phase match", p.temperature_c)?,
        }
    }
    Ok(())
}
