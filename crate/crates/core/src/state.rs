//! Two-photon polarization states of the source.
//!
//! Basis order is `{HH, HV, VH, VV}` everywhere (signal first), including the
//! JSON files written by [`TwoPhotonState::to_json`].

use std::f64::consts::FRAC_1_SQRT_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, r, Ket4, Mat4, C64};

pub const BASIS_LABELS: [&str; 4] = ["HH", "HV", "VH", "VV"];
pub const HH: usize = 0;
pub const HV: usize = 1;
pub const VH: usize = 2;
pub const VV: usize = 3;

/// Tolerance for Hermiticity, trace and positivity checks.
pub const STATE_TOLERANCE: f64 = 1e-10;

/// Relative sign of the `|VV⟩` term in `(|HH⟩ ± |VV⟩)/√2`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sign {
    Plus,
    Minus,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Plus => 1.0,
            Sign::Minus => -1.0,
        }
    }
}

/// A 4×4 density matrix on the signal ⊗ idler polarization space.
#[derive(Debug, Clone, PartialEq)]
pub struct TwoPhotonState {
    rho: Mat4,
}

impl TwoPhotonState {
    /// Wraps `rho` after checking Hermiticity, unit trace and positivity.
    pub fn new(rho: Mat4) -> Result<Self> {
        let herm_err = (rho - rho.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if !(herm_err <= STATE_TOLERANCE) {
            return Err(Error::validation(format!(
                "density matrix is not Hermitian (max deviation {herm_err:.3e})"
            )));
        }
        let tr = rho.trace();
        if !((tr.re - 1.0).abs() <= STATE_TOLERANCE && tr.im.abs() <= STATE_TOLERANCE) {
            return Err(Error::validation(format!("density matrix trace is {tr}, expected 1")));
        }
        let (vals, _) = hermitian_eigen(&rho);
        if !(vals[0] >= -STATE_TOLERANCE) {
            return Err(Error::validation(format!(
                "density matrix has negative eigenvalue {:.3e}",
                vals[0]
            )));
        }
        Ok(TwoPhotonState { rho })
    }

    pub(crate) fn new_unchecked(rho: Mat4) -> Self {
        TwoPhotonState { rho }
    }

    /// Projector onto a normalized copy of `psi`.
    pub fn pure(psi: &Ket4) -> Result<Self> {
        let norm = psi.norm();
        if !(norm > 0.0) {
            return Err(Error::validation("state vector must be non-zero"));
        }
        let psi = psi / r(norm);
        Ok(TwoPhotonState {
            rho: psi * psi.adjoint(),
        })
    }

    /// `(|HH⟩ ± |VV⟩)/√2`.
    pub fn ideal(sign: Sign) -> Self {
        let psi = Ket4::new(r(FRAC_1_SQRT_2), r(0.0), r(0.0), r(sign.value() * FRAC_1_SQRT_2));
        TwoPhotonState {
            rho: psi * psi.adjoint(),
        }
    }

    pub fn maximally_mixed() -> Self {
        TwoPhotonState {
            rho: Mat4::identity() * r(0.25),
        }
    }

    /// `p·|Φ±⟩⟨Φ±| + (1 − p)·I/4`.
    pub fn werner(p: f64, sign: Sign) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::validation(format!("Werner weight {p} outside [0, 1]")));
        }
        Ok(Self::ideal(sign).mix(&Self::maximally_mixed(), p))
    }

    /// `w·self + (1 − w)·other`.
    pub fn mix(&self, other: &Self, w: f64) -> Self {
        TwoPhotonState {
            rho: self.rho * r(w) + other.rho * r(1.0 - w),
        }
    }

    pub fn matrix(&self) -> &Mat4 {
        &self.rho
    }

    pub fn element(&self, row: usize, col: usize) -> C64 {
        self.rho[(row, col)]
    }

    /// `Tr(ρ O)`.
    pub fn expectation(&self, op: &Mat4) -> C64 {
        (self.rho * op).trace()
    }

    /// Ascending eigenvalues.
    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigen(&self.rho).0
    }

    /// Eigenvector of the largest eigenvalue when the state is pure.
    pub fn state_vector(&self) -> Result<Ket4> {
        let (vals, vecs) = hermitian_eigen(&self.rho);
        if (vals[3] - 1.0).abs() > 1e-8 {
            return Err(Error::validation(format!(
                "state is not pure (largest eigenvalue {:.10})",
                vals[3]
            )));
        }
        Ok(vecs.column(3).into_owned())
    }

    pub fn to_json(&self) -> DensityMatrixJson {
        DensityMatrixJson {
            basis: BASIS_LABELS.map(String::from).to_vec(),
            rho: (0..4)
                .map(|i| (0..4).map(|j| [self.rho[(i, j)].re, self.rho[(i, j)].im]).collect())
                .collect(),
        }
    }

    pub fn from_json(doc: &DensityMatrixJson) -> Result<Self> {
        if doc.basis != BASIS_LABELS {
            return Err(Error::validation(format!(
                "basis must be {:?}, found {:?}",
                BASIS_LABELS, doc.basis
            )));
        }
        if doc.rho.len() != 4 || doc.rho.iter().any(|row| row.len() != 4) {
            return Err(Error::validation("rho must be a 4x4 array of [re, im] pairs"));
        }
        Self::new(Mat4::from_fn(|i, j| c(doc.rho[i][j][0], doc.rho[i][j][1])))
    }
}

/// On-disk form of a density matrix: `basis` labels plus 4×4 `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityMatrixJson {
    pub basis: Vec<String>,
    pub rho: Vec<Vec<[f64; 2]>>,
}

/// Pump polarization `α|H⟩ + e^{iφ} β|V⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpPolarization {
    pub alpha: f64,
    pub beta: f64,
    pub phi_rad: f64,
}

impl PumpPolarization {
    /// Balanced pump with the nominal phase π.
    pub fn balanced() -> Self {
        PumpPolarization {
            alpha: FRAC_1_SQRT_2,
            beta: FRAC_1_SQRT_2,
            phi_rad: std::f64::consts::PI,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return Err(Error::validation("pump amplitudes must be non-negative"));
        }
        let norm = self.alpha * self.alpha + self.beta * self.beta;
        if !((norm - 1.0).abs() <= 1e-12) {
            return Err(Error::validation(format!(
                "pump amplitudes must satisfy alpha^2 + beta^2 = 1 (got {norm})"
            )));
        }
        if !self.phi_rad.is_finite() {
            return Err(Error::validation("pump phase must be finite"));
        }
        Ok(())
    }
}

/// Imperfections applied on top of the ideal two-path superposition.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImperfectionParams {
    /// Indistinguishability of the two paths, in [0, 1].
    pub coherence_factor: f64,
    pub phase_error_rad: f64,
    /// White-noise admixture weight, in [0, 1].
    pub isotropic_noise: f64,
    pub pump: PumpPolarization,
}

impl ImperfectionParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.coherence_factor) {
            return Err(Error::validation("coherence_factor must lie in [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.isotropic_noise) {
            return Err(Error::validation("isotropic_noise must lie in [0, 1]"));
        }
        if !self.phase_error_rad.is_finite() {
            return Err(Error::validation("phase_error_rad must be finite"));
        }
        self.pump.validate()
    }

    /// Noise weight that brings the basis-averaged (H/V, D/A, R/L) visibility
    /// of a balanced source to `visibility`, for the given coherence factor.
    pub fn noise_for_average_visibility(visibility: f64, coherence_factor: f64) -> Result<f64> {
        let scale = (1.0 + 2.0 * coherence_factor) / 3.0;
        let noise = 1.0 - visibility / scale;
        if !(0.0..=1.0).contains(&noise) {
            return Err(Error::validation(format!(
                "visibility {visibility} unreachable with coherence factor {coherence_factor}"
            )));
        }
        Ok(noise)
    }
}

/// State emitted by the source for the given imperfections.
///
/// The H pump amplitude drives the path that ends in `|VV⟩` and the V pump
/// amplitude the path that ends in `|HH⟩`, so populations are `β²` on HH and
/// `α²` on VV; mode mismatch only shrinks the HH–VV coherence.
pub fn source_state(params: &ImperfectionParams) -> Result<TwoPhotonState> {
    params.validate()?;
    let PumpPolarization {
        alpha,
        beta,
        phi_rad,
    } = params.pump;
    let eps = params.isotropic_noise;
    let coherence = C64::from_polar(
        alpha * beta * params.coherence_factor,
        phi_rad + params.phase_error_rad,
    );
    let mut rho = Mat4::zeros();
    rho[(HH, HH)] = r(beta * beta);
    rho[(VV, VV)] = r(alpha * alpha);
    rho[(HH, VV)] = coherence;
    rho[(VV, HH)] = coherence.conj();
    let rho = rho * r(1.0 - eps) + Mat4::identity() * r(eps / 4.0);
    Ok(TwoPhotonState::new_unchecked(rho))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::distance;
    use approx::assert_abs_diff_eq;

    fn assert_valid(s: &TwoPhotonState) {
        TwoPhotonState::new(*s.matrix()).expect("valid density matrix");
    }

    fn purity(s: &TwoPhotonState) -> f64 {
        (s.matrix() * s.matrix()).trace().re
    }

    fn balanced(cf: f64, pe: f64, noise: f64) -> ImperfectionParams {
        ImperfectionParams {
            coherence_factor: cf,
            phase_error_rad: pe,
            isotropic_noise: noise,
            pump: PumpPolarization::balanced(),
        }
    }

    #[test]
    fn ideal_entries() {
        let m = TwoPhotonState::ideal(Sign::Minus);
        for i in 0..4 {
            for j in 0..4 {
                let expected = match (i, j) {
                    (HH, HH) | (VV, VV) => 0.5,
                    (HH, VV) | (VV, HH) => -0.5,
                    _ => 0.0,
                };
                assert_abs_diff_eq!(m.element(i, j).re, expected, epsilon = 1e-15);
                assert_eq!(m.element(i, j).im, 0.0);
            }
        }
        let p = TwoPhotonState::ideal(Sign::Plus);
        assert_abs_diff_eq!(p.element(HH, VV).re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(purity(&m), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(purity(&p), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn werner_limits() {
        let w1 = TwoPhotonState::werner(1.0, Sign::Minus).unwrap();
        assert!(distance(w1.matrix(), TwoPhotonState::ideal(Sign::Minus).matrix()) < 1e-15);
        let w0 = TwoPhotonState::werner(0.0, Sign::Minus).unwrap();
        assert_abs_diff_eq!(purity(&w0), 0.25, epsilon = 1e-15);
        assert!(TwoPhotonState::werner(1.2, Sign::Minus).is_err());
        assert!(TwoPhotonState::werner(-0.1, Sign::Plus).is_err());
    }

    #[test]
    fn source_state_limits() {
        let ideal = source_state(&balanced(1.0, 0.0, 0.0)).unwrap();
        assert!(distance(ideal.matrix(), TwoPhotonState::ideal(Sign::Minus).matrix()) < 1e-12);

        let dephased = source_state(&balanced(0.0, 0.0, 0.0)).unwrap();
        let mut expected = Mat4::zeros();
        expected[(HH, HH)] = r(0.5);
        expected[(VV, VV)] = r(0.5);
        assert!(distance(dephased.matrix(), &expected) < 1e-12);

        let p = 0.9588;
        let noisy = source_state(&balanced(1.0, 0.0, 1.0 - p)).unwrap();
        let werner = TwoPhotonState::werner(p, Sign::Minus).unwrap();
        assert!(distance(noisy.matrix(), werner.matrix()) < 1e-12);
    }

    #[test]
    fn source_state_rejects_bad_parameters() {
        assert!(source_state(&balanced(1.1, 0.0, 0.0)).is_err());
        assert!(source_state(&balanced(1.0, 0.0, -0.1)).is_err());
        let mut p = balanced(1.0, 0.0, 0.0);
        p.pump.alpha = 0.9;
        assert!(source_state(&p).is_err());
    }

    #[test]
    fn pump_imbalance_sets_populations() {
        let mut p = balanced(0.8, 0.3, 0.05);
        p.pump = PumpPolarization {
            alpha: 0.6,
            beta: 0.8,
            phi_rad: 1.0,
        };
        let s = source_state(&p).unwrap();
        assert_valid(&s);
        assert_abs_diff_eq!(s.element(HH, HH).re, 0.64 * 0.95 + 0.0125, epsilon = 1e-12);
        assert_abs_diff_eq!(s.element(VV, VV).re, 0.36 * 0.95 + 0.0125, epsilon = 1e-12);
        assert_abs_diff_eq!(s.element(HH, VV).norm(), 0.48 * 0.8 * 0.95, epsilon = 1e-12);
        assert_abs_diff_eq!(s.element(HH, VV).arg(), 1.3, epsilon = 1e-12);
    }

    #[test]
    fn noise_for_visibility_inverts() {
        let eps = ImperfectionParams::noise_for_average_visibility(0.9588, 1.0).unwrap();
        assert_abs_diff_eq!(eps, 1.0 - 0.9588, epsilon = 1e-12);
        assert!(ImperfectionParams::noise_for_average_visibility(0.99, 0.5).is_err());
    }

    #[test]
    fn json_round_trip_and_validation() {
        let s = source_state(&balanced(0.97, 0.1, 0.03)).unwrap();
        let doc = s.to_json();
        let text = serde_json::to_string(&doc).unwrap();
        assert!(text.contains(r#""basis":["HH","HV","VH","VV"]"#));
        let back = TwoPhotonState::from_json(&serde_json::from_str(&text).unwrap()).unwrap();
        assert!(distance(back.matrix(), s.matrix()) < 1e-15);

        let mut bad = doc.clone();
        bad.rho[0][0][0] = 2.0;
        assert!(TwoPhotonState::from_json(&bad).is_err());
        let mut swapped = doc;
        swapped.basis.swap(1, 2);
        assert!(TwoPhotonState::from_json(&swapped).is_err());
    }

    #[test]
    fn pure_state_vector_recovered() {
        let s = TwoPhotonState::ideal(Sign::Minus);
        let v = s.state_vector().unwrap();
        let back = TwoPhotonState::pure(&v).unwrap();
        assert!(distance(back.matrix(), s.matrix()) < 1e-12);
        assert!(TwoPhotonState::maximally_mixed().state_vector().is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn params() -> impl Strategy<Value = ImperfectionParams> {
            (0.0..=1.0f64, -3.0..3.0f64, 0.0..=1.0f64, 0.0..=std::f64::consts::FRAC_PI_2, -7.0..7.0f64)
                .prop_map(|(cf, pe, noise, angle, phi)| ImperfectionParams {
                    coherence_factor: cf,
                    phase_error_rad: pe,
                    isotropic_noise: noise,
                    pump: PumpPolarization {
                        alpha: angle.cos(),
                        beta: angle.sin(),
                        phi_rad: phi,
                    },
                })
        }

        proptest! {
            #[test]
            fn constructor_output_is_a_density_matrix(p in params()) {
                let s = source_state(&p).unwrap();
                prop_assert!(TwoPhotonState::new(*s.matrix()).is_ok());
                let expected = p.pump.alpha * p.pump.beta * p.coherence_factor * (1.0 - p.isotropic_noise);
                prop_assert!((s.element(HH, VV).norm() - expected).abs() < 1e-12);
            }

            #[test]
            fn source_state_is_continuous(p in params(), which in 0usize..4) {
                let mut q = p;
                let d = 1e-9;
                match which {
                    0 => q.coherence_factor = (q.coherence_factor - d).max(0.0),
                    1 => q.phase_error_rad += d,
                    2 => q.isotropic_noise = (q.isotropic_noise - d).max(0.0),
                    _ => q.pump.phi_rad += d,
                }
                let a = source_state(&p).unwrap();
                let b = source_state(&q).unwrap();
                let max = (a.matrix() - b.matrix()).iter().map(|z| z.norm()).fold(0.0, f64::max);
                prop_assert!(max < 1e-6);
            }
        }
    }
}
