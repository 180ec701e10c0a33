//! Polarization analysis: waveplate projectors, coincidence probabilities,
//! visibilities, correlation curves and the CHSH statistic.
//!
//! Waveplate fast-axis angles are measured from horizontal. A half-wave
//! plate at θ rotates linear polarization by 2θ, so a linear analyzer at
//! polarization angle φ is an HWP at φ/2 followed by the PBS transmit port.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::str::FromStr;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, kron2, r, Ket2, Mat2};
use crate::state::TwoPhotonState;

/// PBS output port following the waveplates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Port {
    /// Transmits horizontal polarization.
    Transmit,
    /// Reflects vertical polarization.
    Reflect,
}

/// One arm's analyzer: optional QWP, then HWP, then a PBS port.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSetting {
    pub hwp_angle_deg: f64,
    pub qwp_angle_deg: Option<f64>,
    pub port: Port,
}

impl MeasurementSetting {
    pub fn new(hwp_angle_deg: f64, qwp_angle_deg: Option<f64>, port: Port) -> Self {
        MeasurementSetting {
            hwp_angle_deg: hwp_angle_deg.rem_euclid(360.0),
            qwp_angle_deg: qwp_angle_deg.map(|q| q.rem_euclid(360.0)),
            port,
        }
    }

    /// Linear analyzer transmitting polarization at `angle_deg` from horizontal.
    pub fn linear(angle_deg: f64) -> Self {
        Self::new(angle_deg / 2.0, None, Port::Transmit)
    }

    /// Heisenberg-picture projector `U† |port⟩⟨port| U` with `U = HWP · QWP`.
    pub fn projector(&self) -> Projector {
        let mut u = hwp(self.hwp_angle_deg.to_radians());
        if let Some(q) = self.qwp_angle_deg {
            u *= qwp(q.to_radians());
        }
        let row = match self.port {
            Port::Transmit => 0,
            Port::Reflect => 1,
        };
        let psi = Ket2::new(u[(row, 0)].conj(), u[(row, 1)].conj());
        Projector {
            m: psi * psi.adjoint(),
        }
    }
}

/// Half-wave plate Jones matrix, fast axis at `theta` (global phase dropped).
pub fn hwp(theta: f64) -> Mat2 {
    let (s, cs) = (2.0 * theta).sin_cos();
    Mat2::new(r(cs), r(s), r(s), r(-cs))
}

/// Quarter-wave plate Jones matrix, fast axis at `theta` (global phase dropped).
pub fn qwp(theta: f64) -> Mat2 {
    let (s, cs) = theta.sin_cos();
    let off = c(1.0, -1.0) * (s * cs);
    Mat2::new(c(cs * cs, s * s), off, off, c(s * s, cs * cs))
}

/// A rank-1 single-photon polarization projector in the `{H, V}` basis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projector {
    m: Mat2,
}

impl Projector {
    /// Projector onto the normalized direction of `psi`.
    pub fn onto(psi: Ket2) -> Result<Self> {
        let n = psi.norm();
        if !(n > 0.0) {
            return Err(Error::validation("projector vector must be non-zero"));
        }
        let psi = psi / r(n);
        Ok(Projector {
            m: psi * psi.adjoint(),
        })
    }

    /// Linear polarization at `angle_deg` from horizontal.
    pub fn linear(angle_deg: f64) -> Self {
        let (s, cs) = angle_deg.to_radians().sin_cos();
        let psi = Ket2::new(r(cs), r(s));
        Projector {
            m: psi * psi.adjoint(),
        }
    }

    pub fn matrix(&self) -> &Mat2 {
        &self.m
    }

    /// `I − Π`.
    pub fn orthogonal(&self) -> Self {
        Projector {
            m: Mat2::identity() - self.m,
        }
    }

    /// Largest deviation from `Π² = Π` and unit trace.
    pub fn defect(&self) -> f64 {
        let idem = (self.m * self.m - self.m).iter().map(|z| z.norm()).fold(0.0, f64::max);
        idem.max((self.m.trace() - r(1.0)).norm())
    }
}

/// The six standard polarization states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Polarization {
    H,
    V,
    D,
    A,
    R,
    L,
}

impl Polarization {
    pub const ALL: [Polarization; 6] = [
        Polarization::H,
        Polarization::V,
        Polarization::D,
        Polarization::A,
        Polarization::R,
        Polarization::L,
    ];

    /// Jones vector: `D/A = (H ± V)/√2`, `R/L = (H ± iV)/√2`.
    pub fn ket(self) -> Ket2 {
        let h = FRAC_1_SQRT_2;
        match self {
            Polarization::H => Ket2::new(r(1.0), r(0.0)),
            Polarization::V => Ket2::new(r(0.0), r(1.0)),
            Polarization::D => Ket2::new(r(h), r(h)),
            Polarization::A => Ket2::new(r(h), r(-h)),
            Polarization::R => Ket2::new(r(h), c(0.0, h)),
            Polarization::L => Ket2::new(r(h), c(0.0, -h)),
        }
    }

    pub fn projector(self) -> Projector {
        let psi = self.ket();
        Projector {
            m: psi * psi.adjoint(),
        }
    }

    /// Waveplate setting realizing this projection on the PBS transmit port.
    pub fn setting(self) -> MeasurementSetting {
        match self {
            Polarization::H => MeasurementSetting::new(0.0, None, Port::Transmit),
            Polarization::V => MeasurementSetting::new(45.0, None, Port::Transmit),
            Polarization::D => MeasurementSetting::new(22.5, None, Port::Transmit),
            Polarization::A => MeasurementSetting::new(-22.5, None, Port::Transmit),
            Polarization::R => MeasurementSetting::new(0.0, Some(45.0), Port::Transmit),
            Polarization::L => MeasurementSetting::new(0.0, Some(-45.0), Port::Transmit),
        }
    }

    pub fn orthogonal(self) -> Self {
        match self {
            Polarization::H => Polarization::V,
            Polarization::V => Polarization::H,
            Polarization::D => Polarization::A,
            Polarization::A => Polarization::D,
            Polarization::R => Polarization::L,
            Polarization::L => Polarization::R,
        }
    }

    pub fn symbol(self) -> char {
        match self {
            Polarization::H => 'H',
            Polarization::V => 'V',
            Polarization::D => 'D',
            Polarization::A => 'A',
            Polarization::R => 'R',
            Polarization::L => 'L',
        }
    }
}

impl fmt::Display for Polarization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.symbol())
    }
}

impl TryFrom<char> for Polarization {
    type Error = Error;

    fn try_from(ch: char) -> Result<Self> {
        Polarization::ALL
            .into_iter()
            .find(|p| p.symbol() == ch.to_ascii_uppercase())
            .ok_or_else(|| Error::validation(format!("unknown polarization label `{ch}`")))
    }
}

/// A pair of mutually unbiased analyzer outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Basis {
    Rectilinear,
    Diagonal,
    Circular,
}

impl Basis {
    pub const ALL: [Basis; 3] = [Basis::Rectilinear, Basis::Diagonal, Basis::Circular];

    pub fn states(self) -> (Polarization, Polarization) {
        match self {
            Basis::Rectilinear => (Polarization::H, Polarization::V),
            Basis::Diagonal => (Polarization::D, Polarization::A),
            Basis::Circular => (Polarization::R, Polarization::L),
        }
    }

    /// The four signal/idler projection pairs in visibility-formula order:
    /// `(X,X), (X,Y), (Y,X), (Y,Y)`.
    pub fn projection_pairs(self) -> [(Polarization, Polarization); 4] {
        let (x, y) = self.states();
        [(x, x), (x, y), (y, x), (y, y)]
    }

    pub fn label(self) -> &'static str {
        match self {
            Basis::Rectilinear => "H/V",
            Basis::Diagonal => "D/A",
            Basis::Circular => "R/L",
        }
    }
}

impl FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "HV" | "H/V" | "RECTILINEAR" => Ok(Basis::Rectilinear),
            "DA" | "D/A" | "DIAGONAL" => Ok(Basis::Diagonal),
            "RL" | "R/L" | "CIRCULAR" => Ok(Basis::Circular),
            other => Err(Error::validation(format!("unknown basis `{other}`"))),
        }
    }
}

/// `Tr[ρ (Π_s ⊗ Π_i)]`.
pub fn coincidence_probability(rho: &TwoPhotonState, signal: &Projector, idler: &Projector) -> f64 {
    rho.expectation(&kron2(&signal.m, &idler.m)).re
}

/// Signed contrast `(C_xx − C_xy − C_yx + C_yy) / ΣC`.
pub fn visibility_from_counts(c_xx: f64, c_xy: f64, c_yx: f64, c_yy: f64) -> Result<f64> {
    let total = c_xx + c_xy + c_yx + c_yy;
    if !(total > 0.0) {
        return Err(Error::Undefined("visibility of all-zero counts".into()));
    }
    Ok((c_xx - c_xy - c_yx + c_yy) / total)
}

/// Magnitude of the polarization visibility of `rho` in `basis`.
///
/// `|Φ⁻⟩` is correlated in H/V and R/L but anti-correlated in D/A, so the
/// contrast is reported without sign.
pub fn basis_visibility(rho: &TwoPhotonState, basis: Basis) -> f64 {
    let p = basis
        .projection_pairs()
        .map(|(s, i)| coincidence_probability(rho, &s.projector(), &i.projector()));
    visibility_from_counts(p[0], p[1], p[2], p[3])
        .map(f64::abs)
        .unwrap_or(0.0)
}

/// Mean of the H/V, D/A and R/L visibilities.
pub fn average_visibility(rho: &TwoPhotonState) -> f64 {
    Basis::ALL.iter().map(|&b| basis_visibility(rho, b)).sum::<f64>() / 3.0
}

/// Coincidence probability as the idler's linear analyzer sweeps a full turn
/// in steps of `step_deg` with the signal analyzer held at `fixed`.
pub fn correlation_curve(
    rho: &TwoPhotonState,
    fixed: &MeasurementSetting,
    step_deg: f64,
) -> Result<Vec<(f64, f64)>> {
    let n = 360.0 / step_deg;
    if !(step_deg > 0.0) || (n - n.round()).abs() > 1e-9 {
        return Err(Error::validation(format!("sweep step {step_deg} deg must divide 360")));
    }
    let signal = fixed.projector();
    Ok((0..n.round() as usize)
        .map(|k| {
            let angle = step_deg * k as f64;
            let idler = MeasurementSetting::linear(angle).projector();
            (angle, coincidence_probability(rho, &signal, &idler))
        })
        .collect())
}

/// Least-squares fit of `offset + amplitude·cos(2θ − phase)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinusoidFit {
    pub amplitude: f64,
    pub phase_rad: f64,
    pub offset: f64,
    pub visibility: f64,
    /// Standard error of `visibility` from the fit covariance.
    pub visibility_sigma: f64,
}

/// Linearized least squares on the regressors `(1, cos 2θ, sin 2θ)`; angles in degrees.
pub fn fit_sinusoid(samples: &[(f64, f64)]) -> Result<SinusoidFit> {
    if samples.len() < 4 {
        return Err(Error::Fit("need at least 4 samples".into()));
    }
    if !spans_half_turn(samples) {
        return Err(Error::Fit("samples must span at least 180 degrees".into()));
    }
    let mut xtx = Matrix3::<f64>::zeros();
    let mut xty = Vector3::<f64>::zeros();
    for &(angle, y) in samples {
        let t = 2.0 * angle.to_radians();
        let x = Vector3::new(1.0, t.cos(), t.sin());
        xtx += x * x.transpose();
        xty += x * y;
    }
    let inv = xtx
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Fit("degenerate design matrix".into()))?;
    if xtx.determinant().abs() < 1e-9 * xtx.norm().powi(3) {
        return Err(Error::Fit("degenerate design matrix".into()));
    }
    let beta = inv * xty;
    let (a, c1, c2) = (beta[0], beta[1], beta[2]);
    if a == 0.0 {
        return Err(Error::Fit("zero offset: visibility undefined".into()));
    }
    let b = c1.hypot(c2);
    let rss: f64 = samples
        .iter()
        .map(|&(angle, y)| {
            let t = 2.0 * angle.to_radians();
            let e = y - (a + c1 * t.cos() + c2 * t.sin());
            e * e
        })
        .sum();
    let dof = samples.len().saturating_sub(3).max(1) as f64;
    let cov = inv * (rss / dof);
    let grad = if b > 0.0 {
        Vector3::new(-b / (a * a), c1 / (b * a), c2 / (b * a))
    } else {
        Vector3::new(0.0, 0.0, 0.0)
    };
    let var = (grad.transpose() * cov * grad)[(0, 0)];
    Ok(SinusoidFit {
        amplitude: b,
        phase_rad: c2.atan2(c1),
        offset: a,
        visibility: b / a,
        visibility_sigma: var.max(0.0).sqrt(),
    })
}

// Angles wrap, so a set like {300, 0, 60, 120} also covers half a turn.
fn spans_half_turn(samples: &[(f64, f64)]) -> bool {
    let mut angles: Vec<f64> = samples.iter().map(|s| s.0.rem_euclid(360.0)).collect();
    angles.sort_by(f64::total_cmp);
    let mut largest_gap = 360.0 - angles[angles.len() - 1] + angles[0];
    for w in angles.windows(2) {
        largest_gap = f64::max(largest_gap, w[1] - w[0]);
    }
    360.0 - largest_gap >= 180.0 - 1e-9
}

/// Four-outcome correlator `P(xy) − P(xy⊥) − P(x⊥y) + P(x⊥y⊥)` for linear
/// analyzers at `a_deg` (signal) and `b_deg` (idler).
pub fn correlator(rho: &TwoPhotonState, a_deg: f64, b_deg: f64) -> f64 {
    let (x, xp) = (Projector::linear(a_deg), Projector::linear(a_deg + 90.0));
    let (y, yp) = (Projector::linear(b_deg), Projector::linear(b_deg + 90.0));
    coincidence_probability(rho, &x, &y) - coincidence_probability(rho, &x, &yp)
        - coincidence_probability(rho, &xp, &y)
        + coincidence_probability(rho, &xp, &yp)
}

/// Analyzer angles in degrees for a CHSH test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChshAngles {
    pub a: f64,
    pub a_prime: f64,
    pub b: f64,
    pub b_prime: f64,
}

impl ChshAngles {
    /// Signal at 0° and 45°, idler at 22.5° and 67.5°.
    pub const STANDARD: ChshAngles = ChshAngles {
        a: 0.0,
        a_prime: 45.0,
        b: 22.5,
        b_prime: 67.5,
    };

    /// The four `(signal, idler)` analyzer pairs in the order `AB, AB', A'B, A'B'`.
    pub fn pairs(&self) -> [(f64, f64); 4] {
        [
            (self.a, self.b),
            (self.a, self.b_prime),
            (self.a_prime, self.b),
            (self.a_prime, self.b_prime),
        ]
    }
}

/// `S = E(AB) − E(AB') − E(A'B) − E(A'B')`.
pub fn chsh(rho: &TwoPhotonState, angles: &ChshAngles) -> f64 {
    let e = angles.pairs().map(|(a, b)| correlator(rho, a, b));
    combine_chsh(e)
}

fn combine_chsh(e: [f64; 4]) -> f64 {
    e[0] - e[1] - e[2] - e[3]
}

/// CHSH value and its Poisson standard error from raw coincidence counts.
///
/// `counts[k]` holds `(N_xy, N_xy⊥, N_x⊥y, N_x⊥y⊥)` for the k-th analyzer
/// pair in [`ChshAngles::pairs`] order.
pub fn chsh_from_counts(counts: &[[f64; 4]; 4]) -> Result<(f64, f64)> {
    let mut e = [0.0; 4];
    let mut var = 0.0;
    for (k, n) in counts.iter().enumerate() {
        let total: f64 = n.iter().sum();
        if !(total > 0.0) {
            return Err(Error::Undefined(format!("no counts for analyzer pair {k}")));
        }
        let signs = [1.0, -1.0, -1.0, 1.0];
        e[k] = n.iter().zip(signs).map(|(x, s)| s * x).sum::<f64>() / total;
        var += n
            .iter()
            .zip(signs)
            .map(|(x, s)| (s - e[k]).powi(2) * x)
            .sum::<f64>()
            / (total * total);
    }
    Ok((combine_chsh(e), var.sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::{Sign, TwoPhotonState};
    use approx::assert_abs_diff_eq;

    fn phi_minus() -> TwoPhotonState {
        TwoPhotonState::ideal(Sign::Minus)
    }

    fn close(a: &Mat2, b: &Mat2) -> bool {
        (a - b).iter().all(|z| z.norm() < 1e-12)
    }

    #[test]
    fn hwp_settings() {
        assert!(close(
            MeasurementSetting::new(0.0, None, Port::Transmit).projector().matrix(),
            Polarization::H.projector().matrix()
        ));
        assert!(close(
            MeasurementSetting::new(22.5, None, Port::Transmit).projector().matrix(),
            Polarization::D.projector().matrix()
        ));
        assert!(close(
            MeasurementSetting::new(0.0, None, Port::Reflect).projector().matrix(),
            Polarization::V.projector().matrix()
        ));
    }

    #[test]
    fn qwp_then_hwp_is_circular() {
        // Jones product written out by hand: HWP(0)·QWP(45°) = diag(1,−1)·½[[1+i, 1−i],[1−i, 1+i]],
        // first row ½(1+i, 1−i); its conjugate ½(1−i, 1+i) ∝ (1, i).
        let by_hand = Ket2::new(c(0.5, -0.5), c(0.5, 0.5));
        let expected = by_hand * by_hand.adjoint();
        let p = MeasurementSetting::new(0.0, Some(45.0), Port::Transmit).projector();
        assert!(close(p.matrix(), &expected));
        assert!(close(p.matrix(), Polarization::R.projector().matrix()));
    }

    #[test]
    fn named_settings_realize_named_states() {
        for pol in Polarization::ALL {
            let from_setting = pol.setting().projector();
            assert!(close(from_setting.matrix(), pol.projector().matrix()), "{pol}");
            assert!(from_setting.defect() < 1e-10);
            assert!(close(pol.orthogonal().projector().matrix(), pol.projector().orthogonal().matrix()));
        }
    }

    #[test]
    fn phi_minus_coincidences() {
        let rho = phi_minus();
        let p = |a: Polarization, b: Polarization| coincidence_probability(&rho, &a.projector(), &b.projector());
        use Polarization::*;
        assert_abs_diff_eq!(p(H, H), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p(H, V), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p(D, D), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(p(D, A), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(p(R, R), 0.5, epsilon = 1e-12);
        for b in Basis::ALL {
            assert_abs_diff_eq!(basis_visibility(&rho, b), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn visibility_from_counts_cases() {
        assert_eq!(visibility_from_counts(500.0, 0.0, 0.0, 500.0).unwrap(), 1.0);
        assert_eq!(visibility_from_counts(250.0, 250.0, 250.0, 250.0).unwrap(), 0.0);
        assert!(matches!(visibility_from_counts(0.0, 0.0, 0.0, 0.0), Err(Error::Undefined(_))));

        let rho = TwoPhotonState::werner(0.9729, Sign::Minus).unwrap();
        let counts = Basis::Rectilinear
            .projection_pairs()
            .map(|(s, i)| 1e4 * coincidence_probability(&rho, &s.projector(), &i.projector()));
        let v = visibility_from_counts(counts[0], counts[1], counts[2], counts[3]).unwrap();
        assert_abs_diff_eq!(v, 0.9729, epsilon = 1e-12);
        let scaled = visibility_from_counts(3.0 * counts[0], 3.0 * counts[1], 3.0 * counts[2], 3.0 * counts[3]).unwrap();
        assert_abs_diff_eq!(v, scaled, epsilon = 1e-15);
    }

    #[test]
    fn correlation_curve_of_phi_minus() {
        let curve = correlation_curve(&phi_minus(), &Polarization::H.setting(), 12.0).unwrap();
        assert_eq!(curve.len(), 30);
        assert_abs_diff_eq!(curve[0].1, 0.5, epsilon = 1e-12);
        let min = curve.iter().map(|p| p.1).fold(f64::INFINITY, f64::min);
        assert!((-1e-12..0.01).contains(&min));
        // 90° polarization rotation = HWP at 45°
        let fine = correlation_curve(&phi_minus(), &Polarization::H.setting(), 45.0).unwrap();
        assert_abs_diff_eq!(fine[2].1, 0.0, epsilon = 1e-12);
        assert!(correlation_curve(&phi_minus(), &Polarization::H.setting(), 7.0).is_err());
    }

    #[test]
    fn werner_curve_visibility_is_p() {
        for p in [0.3, 0.8, 0.9588] {
            let rho = TwoPhotonState::werner(p, Sign::Minus).unwrap();
            for pol in [Polarization::H, Polarization::V, Polarization::D, Polarization::A] {
                let curve = correlation_curve(&rho, &pol.setting(), 12.0).unwrap();
                let fit = fit_sinusoid(&curve).unwrap();
                assert_abs_diff_eq!(fit.visibility, p, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fit_recovers_exact_sinusoid() {
        let (a, b, phase) = (3.0, 1.7, 0.4);
        let samples: Vec<(f64, f64)> = (0..30)
            .map(|k| {
                let th = 12.0 * k as f64;
                (th, a + b * (2.0 * th.to_radians() - phase).cos())
            })
            .collect();
        let fit = fit_sinusoid(&samples).unwrap();
        assert_abs_diff_eq!(fit.offset, a, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.amplitude, b, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.phase_rad, phase, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.visibility, b / a, epsilon = 1e-9);
    }

    #[test]
    fn fit_constant_and_degenerate() {
        let flat: Vec<(f64, f64)> = (0..8).map(|k| (45.0 * k as f64, 2.0)).collect();
        assert_abs_diff_eq!(fit_sinusoid(&flat).unwrap().visibility, 0.0, epsilon = 1e-12);
        // 0° and 180° are the same point of a cos 2θ model
        let degenerate = [(0.0, 1.0), (180.0, 1.0), (0.0, 1.2), (180.0, 0.9)];
        assert!(matches!(fit_sinusoid(&degenerate), Err(Error::Fit(_))));
        assert!(fit_sinusoid(&flat[..3]).is_err());
        let narrow: Vec<(f64, f64)> = (0..6).map(|k| (10.0 * k as f64, 1.0 + 0.1 * k as f64)).collect();
        assert!(fit_sinusoid(&narrow).is_err());
    }

    #[test]
    fn chsh_closed_forms() {
        let s = chsh(&phi_minus(), &ChshAngles::STANDARD);
        assert_abs_diff_eq!(s, 2.0 * 2f64.sqrt(), epsilon = 1e-12);
        // closed form E(a,b) = cos 2(a+b) for Φ⁻
        for (a, b) in ChshAngles::STANDARD.pairs() {
            let expected = (2.0 * (a + b)).to_radians().cos();
            assert_abs_diff_eq!(correlator(&phi_minus(), a, b), expected, epsilon = 1e-12);
        }
        let hh = TwoPhotonState::pure(&crate::linalg::kron_ket(&Polarization::H.ket(), &Polarization::H.ket())).unwrap();
        assert_abs_diff_eq!(chsh(&hh, &ChshAngles::STANDARD), 2f64.sqrt(), epsilon = 1e-12);
        let w = TwoPhotonState::werner(0.9588, Sign::Minus).unwrap();
        assert_abs_diff_eq!(chsh(&w, &ChshAngles::STANDARD), 2.0 * 2f64.sqrt() * 0.9588, epsilon = 1e-12);
    }

    #[test]
    fn chsh_from_noiseless_counts() {
        let rho = TwoPhotonState::werner(0.9, Sign::Minus).unwrap();
        let counts = ChshAngles::STANDARD.pairs().map(|(a, b)| {
            let (x, xp) = (Projector::linear(a), Projector::linear(a + 90.0));
            let (y, yp) = (Projector::linear(b), Projector::linear(b + 90.0));
            [(x, y), (x, yp), (xp, y), (xp, yp)].map(|(s, i)| 1e6 * coincidence_probability(&rho, &s, &i))
        });
        let (s, sigma) = chsh_from_counts(&counts).unwrap();
        assert_abs_diff_eq!(s, chsh(&rho, &ChshAngles::STANDARD), epsilon = 1e-12);
        assert!(sigma > 0.0 && sigma < 0.01);
    }
}
