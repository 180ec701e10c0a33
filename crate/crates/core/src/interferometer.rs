//! Beam-displacer geometry of the Sagnac loop.
//!
//! BD1 splits the pump into two parallel beams; BD2 recombines the photon
//! pairs generated by the two counter-propagating pumps. The pump that takes
//! the extraordinary path in BD1 produces pairs that take the ordinary path
//! in BD2, so the walk-off and delay picked up by the pump are partly undone
//! by the photons. What survives is set by the dispersion of the displacer
//! birefringence between the pump and each daughter wavelength.
//!
//! Transit delays use the excess geometric path of the walk-off ray,
//! `L (1/cos ρ − 1)`, at the extraordinary index.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::materials::{extraordinary_wave_index, OpticalAxis, SellmeierModel};
use crate::phasematch::SpdcTriplet;

/// Speed of light in mm/ps.
pub const SPEED_OF_LIGHT_MM_PER_PS: f64 = 0.299_792_458;

/// Displacers are treated as temperature independent; this value is passed
/// to models that ignore it.
const ROOM_TEMPERATURE_C: f64 = 20.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamDisplacerSpec {
    pub material: SellmeierModel,
    pub length_mm: f64,
    /// Angle between optic axis and propagation direction, degrees.
    pub cut_angle_deg: f64,
}

impl BeamDisplacerSpec {
    pub fn new(material: SellmeierModel, length_mm: f64, cut_angle_deg: f64) -> Result<Self> {
        let bd = BeamDisplacerSpec {
            material,
            length_mm,
            cut_angle_deg,
        };
        bd.validate()?;
        Ok(bd)
    }

    /// 45°-cut displacer of the given material and length.
    pub fn standard(material: SellmeierModel, length_mm: f64) -> Result<Self> {
        Self::new(material, length_mm, 45.0)
    }

    pub fn validate(&self) -> Result<()> {
        // zero length is allowed as a limiting case
        if !(self.length_mm >= 0.0) {
            return Err(Error::validation("beam displacer length must be >= 0"));
        }
        if !(self.cut_angle_deg > 0.0 && self.cut_angle_deg < 90.0) {
            return Err(Error::validation("beam displacer cut angle must lie in (0, 90) degrees"));
        }
        Ok(())
    }

    pub fn with_length(&self, length_mm: f64) -> Self {
        BeamDisplacerSpec {
            length_mm,
            ..self.clone()
        }
    }

    fn indices(&self, lambda_nm: f64) -> Result<(f64, f64)> {
        let n_o = self
            .material
            .refractive_index(lambda_nm, ROOM_TEMPERATURE_C, OpticalAxis::Ordinary)?;
        let n_e = self
            .material
            .refractive_index(lambda_nm, ROOM_TEMPERATURE_C, OpticalAxis::Extraordinary)?;
        Ok((n_o, n_e))
    }

    /// Walk-off angle ρ of the extraordinary ray, radians.
    pub fn walkoff_angle(&self, lambda_nm: f64) -> Result<f64> {
        let (n_o, n_e) = self.indices(lambda_nm)?;
        let theta = self.cut_angle_deg.to_radians();
        let n_eff = extraordinary_wave_index(n_o, n_e, theta);
        let tan_rho = 0.5 * n_eff * n_eff * (2.0 * theta).sin() * (1.0 / (n_e * n_e) - 1.0 / (n_o * n_o));
        Ok(tan_rho.atan())
    }

    /// Lateral separation of the o- and e-beams at the exit face, mm.
    pub fn walkoff_separation(&self, lambda_nm: f64) -> Result<f64> {
        Ok(self.length_mm * self.walkoff_angle(lambda_nm)?.tan().abs())
    }

    /// Transit-time difference between the e- and o-paths, ps. Positive when
    /// the extraordinary (walked-off) beam arrives later.
    pub fn transit_delay_difference(&self, lambda_nm: f64) -> Result<f64> {
        let (_, n_e) = self.indices(lambda_nm)?;
        let rho = self.walkoff_angle(lambda_nm)?;
        let excess_path = self.length_mm * (1.0 / rho.cos() - 1.0);
        Ok(excess_path * n_e / SPEED_OF_LIGHT_MM_PER_PS)
    }
}

/// Everything needed to evaluate the two-path mismatch of the source.
#[derive(Debug, Clone, PartialEq)]
pub struct SetupGeometry {
    pub bd1: BeamDisplacerSpec,
    pub bd2: BeamDisplacerSpec,
    pub pump_coherence_ps: f64,
    pub photon_coherence_ps: f64,
    pub signal_beam_diameter_mm: f64,
    pub idler_beam_diameter_mm: f64,
    pub triplet: SpdcTriplet,
}

impl SetupGeometry {
    pub fn validate(&self) -> Result<()> {
        self.bd1.validate()?;
        self.bd2.validate()?;
        for (name, v) in [
            ("pump_coherence_ps", self.pump_coherence_ps),
            ("photon_coherence_ps", self.photon_coherence_ps),
            ("signal_beam_diameter_mm", self.signal_beam_diameter_mm),
            ("idler_beam_diameter_mm", self.idler_beam_diameter_mm),
        ] {
            if !(v > 0.0) {
                return Err(Error::validation(format!("{name} must be > 0")));
            }
        }
        Ok(())
    }

    /// Residual delays, displacements and the resulting overlaps.
    pub fn pair_mismatch(&self) -> Result<OverlapReport> {
        self.validate()?;
        let pump = self.triplet.pump_nm;
        let pump_delay = self.bd1.transit_delay_difference(pump)?;
        let separation = self.bd1.walkoff_separation(pump)?;

        let dtau = |l: f64| -> Result<f64> {
            Ok((pump_delay - self.bd2.transit_delay_difference(l)?).abs())
        };
        let dd = |l: f64| -> Result<f64> {
            Ok((separation - self.bd2.walkoff_separation(l)?).abs())
        };
        let dtau_s = dtau(self.triplet.signal_nm)?;
        let dtau_i = dtau(self.triplet.idler_nm)?;
        let dd_s = dd(self.triplet.signal_nm)?;
        let dd_i = dd(self.triplet.idler_nm)?;

        Ok(OverlapReport {
            dtau_s_ps: dtau_s,
            dtau_i_ps: dtau_i,
            dd_s_mm: dd_s,
            dd_i_mm: dd_i,
            pump_delay_ps: pump_delay,
            separation_mm: separation,
            temporal_overlap: temporal_overlap(dtau_s, dtau_i, self.photon_coherence_ps)?,
            spatial_overlap_s: spatial_overlap(dd_s, self.signal_beam_diameter_mm)?,
            spatial_overlap_i: spatial_overlap(dd_i, self.idler_beam_diameter_mm)?,
        })
    }

    /// Mismatch reports with both displacers set to each length in turn.
    pub fn length_sweep(&self, lengths_mm: &[f64]) -> Result<Vec<(f64, OverlapReport)>> {
        lengths_mm
            .iter()
            .map(|&l| {
                let setup = SetupGeometry {
                    bd1: self.bd1.with_length(l),
                    bd2: self.bd2.with_length(l),
                    ..self.clone()
                };
                Ok((l, setup.pair_mismatch()?))
            })
            .collect()
    }
}

/// Amplitude overlap of two Gaussian wavepackets with intensity-FWHM
/// coherence time `coherence_ps`, offset by `|Δτ_s − Δτ_i|`.
pub fn temporal_overlap(dtau_s_ps: f64, dtau_i_ps: f64, coherence_ps: f64) -> Result<f64> {
    if !(coherence_ps > 0.0) {
        return Err(Error::validation("coherence time must be > 0"));
    }
    let delta = dtau_s_ps - dtau_i_ps;
    Ok((-delta * delta * std::f64::consts::LN_2 / (coherence_ps * coherence_ps)).exp())
}

/// Amplitude overlap of two identical TEM00 modes (waist = diameter / 2)
/// displaced by `displacement_mm`.
pub fn spatial_overlap(displacement_mm: f64, beam_diameter_mm: f64) -> Result<f64> {
    if !(beam_diameter_mm > 0.0) {
        return Err(Error::validation("beam diameter must be > 0"));
    }
    let w = 0.5 * beam_diameter_mm;
    Ok((-displacement_mm * displacement_mm / (4.0 * w * w)).exp())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub dtau_s_ps: f64,
    pub dtau_i_ps: f64,
    pub dd_s_mm: f64,
    pub dd_i_mm: f64,
    pub pump_delay_ps: f64,
    pub separation_mm: f64,
    pub temporal_overlap: f64,
    pub spatial_overlap_s: f64,
    pub spatial_overlap_i: f64,
}

impl OverlapReport {
    pub const CSV_HEADER: &'static str = "dtau_s_ps,dtau_i_ps,dd_s_mm,dd_i_mm,pump_delay_ps,\
separation_mm,temporal_overlap,spatial_overlap_s,spatial_overlap_i";

    /// Product of the temporal and both spatial overlaps: the visibility of
    /// the |HH⟩⟨VV| coherence left by mode mismatch.
    pub fn coherence_factor(&self) -> f64 {
        self.temporal_overlap * self.spatial_overlap_s * self.spatial_overlap_i
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6}",
            self.dtau_s_ps,
            self.dtau_i_ps,
            self.dd_s_mm,
            self.dd_i_mm,
            self.pump_delay_ps,
            self.separation_mm,
            self.temporal_overlap,
            self.spatial_overlap_s,
            self.spatial_overlap_i
        )
    }
}

impl fmt::Display for OverlapReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let rows = [
            ("pump separation after BD1", self.separation_mm, "mm"),
            ("pump delay in BD1", self.pump_delay_ps, "ps"),
            ("signal residual delay", self.dtau_s_ps, "ps"),
            ("idler residual delay", self.dtau_i_ps, "ps"),
            ("signal residual displacement", self.dd_s_mm, "mm"),
            ("idler residual displacement", self.dd_i_mm, "mm"),
            ("temporal overlap", 100.0 * self.temporal_overlap, "%"),
            ("signal spatial overlap", 100.0 * self.spatial_overlap_s, "%"),
            ("idler spatial overlap", 100.0 * self.spatial_overlap_i, "%"),
        ];
        for (label, value, unit) in rows {
            writeln!(f, "{label:<30} {value:>10.4} {unit}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn calcite(len: f64) -> BeamDisplacerSpec {
        BeamDisplacerSpec::standard(SellmeierModel::calcite(), len).unwrap()
    }

    fn reference_setup() -> SetupGeometry {
        SetupGeometry {
            bd1: calcite(30.0),
            bd2: calcite(30.0),
            pump_coherence_ps: 23.0,
            photon_coherence_ps: 5.0,
            signal_beam_diameter_mm: 1.4,
            idler_beam_diameter_mm: 2.1,
            triplet: SpdcTriplet::from_pump_signal(532.0, 785.0).unwrap(),
        }
    }

    // Simpson quadrature of ∫ψ(t)ψ(t−δ)dt / ∫ψ² for ψ with intensity FWHM τc.
    fn overlap_by_quadrature(delta: f64, tau_c: f64) -> f64 {
        let psi = |t: f64| (-2.0 * std::f64::consts::LN_2 * t * t / (tau_c * tau_c)).exp();
        let simpson = |g: &dyn Fn(f64) -> f64| {
            let (a, b, n) = (-12.0 * tau_c, 12.0 * tau_c + delta, 20_000usize);
            let h = (b - a) / n as f64;
            let mut s = g(a) + g(b);
            for k in 1..n {
                s += g(a + h * k as f64) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        simpson(&|t| psi(t) * psi(t - delta)) / simpson(&|t| psi(t) * psi(t))
    }

    #[test]
    fn pump_separation_and_delay() {
        let bd = calcite(30.0);
        assert_abs_diff_eq!(bd.walkoff_separation(532.0).unwrap(), 3.3, epsilon = 0.2);
        assert_abs_diff_eq!(bd.transit_delay_difference(532.0).unwrap().abs(), 0.91, epsilon = 0.1);
    }

    #[test]
    fn zero_length_and_isotropic_limits() {
        let bd = calcite(0.0);
        assert_eq!(bd.walkoff_separation(532.0).unwrap(), 0.0);
        assert_eq!(bd.transit_delay_difference(532.0).unwrap(), 0.0);
        let iso = BeamDisplacerSpec::standard(SellmeierModel::constant("iso", 1.6, 1.6), 30.0).unwrap();
        assert_abs_diff_eq!(iso.walkoff_separation(532.0).unwrap(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(iso.transit_delay_difference(532.0).unwrap(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn linear_in_length() {
        let base_sep = calcite(10.0).walkoff_separation(785.0).unwrap();
        let base_dt = calcite(10.0).transit_delay_difference(785.0).unwrap();
        for k in [2.0, 3.0, 5.5] {
            let bd = calcite(10.0 * k);
            assert_abs_diff_eq!(bd.walkoff_separation(785.0).unwrap(), k * base_sep, epsilon = 1e-12);
            assert_abs_diff_eq!(bd.transit_delay_difference(785.0).unwrap(), k * base_dt, epsilon = 1e-12);
        }
    }

    #[test]
    fn reference_geometry_mismatch() {
        let r = reference_setup().pair_mismatch().unwrap();
        assert_abs_diff_eq!(r.dtau_s_ps, 0.07, epsilon = 0.05);
        assert_abs_diff_eq!(r.dtau_i_ps, 0.17, epsilon = 0.05);
        assert_abs_diff_eq!(r.dd_s_mm, 0.12, epsilon = 0.05);
        assert_abs_diff_eq!(r.dd_i_mm, 0.33, epsilon = 0.05);
        assert!(r.coherence_factor() > 0.9 && r.coherence_factor() <= 1.0);
    }

    #[test]
    fn identical_wavelengths_compensate_exactly() {
        let mut s = reference_setup();
        s.triplet = SpdcTriplet {
            pump_nm: 532.0,
            signal_nm: 532.0,
            idler_nm: 532.0,
        };
        let r = s.pair_mismatch().unwrap();
        assert_eq!((r.dtau_s_ps, r.dtau_i_ps, r.dd_s_mm, r.dd_i_mm), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(r.temporal_overlap, 1.0);
    }

    #[test]
    fn relabeling_swaps_arms() {
        let s = reference_setup();
        let mut t = s.clone();
        t.triplet = s.triplet.swapped();
        let (a, b) = (s.pair_mismatch().unwrap(), t.pair_mismatch().unwrap());
        assert_eq!(a.dtau_s_ps, b.dtau_i_ps);
        assert_eq!(a.dtau_i_ps, b.dtau_s_ps);
        assert_eq!(a.dd_s_mm, b.dd_i_mm);
        assert_eq!(a.dd_i_mm, b.dd_s_mm);
    }

    #[test]
    fn temporal_overlap_values() {
        assert_eq!(temporal_overlap(0.3, 0.3, 5.0).unwrap(), 1.0);
        assert_abs_diff_eq!(temporal_overlap(0.1, 0.0, 5.0).unwrap(), 0.998, epsilon = 0.002);
        let q = overlap_by_quadrature(5.0, 5.0);
        assert_abs_diff_eq!(temporal_overlap(5.0, 0.0, 5.0).unwrap(), q, epsilon = 1e-9);
        assert_abs_diff_eq!(temporal_overlap(1.3, 0.0, 2.0).unwrap(), overlap_by_quadrature(1.3, 2.0), epsilon = 1e-9);
        assert!(temporal_overlap(0.1, 0.0, 0.0).is_err());
    }

    #[test]
    fn spatial_overlap_values() {
        assert_abs_diff_eq!(spatial_overlap(0.12, 1.4).unwrap(), 0.993, epsilon = 5e-4);
        assert_abs_diff_eq!(spatial_overlap(0.33, 2.1).unwrap(), 0.976, epsilon = 5e-4);
        assert_eq!(spatial_overlap(0.0, 3.0).unwrap(), 1.0);
        assert!(spatial_overlap(0.1, 0.0).is_err());
    }

    #[test]
    fn overlaps_even_and_monotone() {
        let xs: Vec<f64> = (0..50).map(|k| 0.05 * k as f64).collect();
        for w in xs.windows(2) {
            let (a, b) = (w[0], w[1]);
            assert!(temporal_overlap(b, 0.0, 1.0).unwrap() <= temporal_overlap(a, 0.0, 1.0).unwrap());
            assert!(spatial_overlap(b, 1.0).unwrap() <= spatial_overlap(a, 1.0).unwrap());
            assert_eq!(temporal_overlap(a, 0.0, 1.0).unwrap(), temporal_overlap(-a, 0.0, 1.0).unwrap());
            assert_eq!(spatial_overlap(a, 1.0).unwrap(), spatial_overlap(-a, 1.0).unwrap());
        }
    }

    #[test]
    fn sweep_shortens_mismatch() {
        let sweep = reference_setup().length_sweep(&[10.0, 20.0, 30.0]).unwrap();
        assert_eq!(sweep.len(), 3);
        assert!(sweep[0].1.dd_i_mm < sweep[2].1.dd_i_mm);
        assert_abs_diff_eq!(sweep[0].1.dd_i_mm * 3.0, sweep[2].1.dd_i_mm, epsilon = 1e-9);
    }
}
