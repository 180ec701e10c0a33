//! Two-qubit projective tomography with maximum-likelihood reconstruction,
//! plus the entanglement figures of merit reported for a reconstructed state.
//!
//! The density matrix is parameterized as `ρ = T†T / Tr(T†T)` with `T` lower
//! triangular (4 real diagonal entries, 6 complex off-diagonal entries), so
//! every iterate is a valid state. The unnormalized `T†T` also carries the
//! overall count rate, which is fitted jointly with the state.

use std::path::Path;

use nalgebra::{Cholesky, DMatrix, DVector, SMatrix};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{c, hermitian_eigen, hermitize, kron2, kron_ket, psd_sqrt, r, Ket4, Mat2, Mat4, C64};
use crate::measurement::Polarization;
use crate::state::TwoPhotonState;

const MAX_ITERATIONS: usize = 10_000;
const LOGLIK_TOLERANCE: f64 = 1e-10;
// Relative step size below which a small gain counts as convergence. Near a
// rank-deficient optimum the likelihood is flat, so gain alone stops early.
const STEP_TOLERANCE: f64 = 1e-12;
const MIN_DAMPING: f64 = 1e-9;
const MAX_DAMPING: f64 = 1e12;

/// One projective setting `|s⟩|i⟩⟨s|⟨i|`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TomographySetting {
    pub signal: Polarization,
    pub idler: Polarization,
}

impl TomographySetting {
    pub fn label(&self) -> String {
        format!("{}{}", self.signal, self.idler)
    }

    pub fn parse(label: &str) -> Result<Self> {
        let mut chars = label.trim().chars();
        match (chars.next(), chars.next(), chars.next()) {
            (Some(s), Some(i), None) => Ok(TomographySetting {
                signal: Polarization::try_from(s)?,
                idler: Polarization::try_from(i)?,
            }),
            _ => Err(Error::validation(format!("setting label `{label}` must be two letters"))),
        }
    }

    pub fn ket(&self) -> Ket4 {
        kron_ket(&self.signal.ket(), &self.idler.ket())
    }

    pub fn projector(&self) -> Mat4 {
        let psi = self.ket();
        psi * psi.adjoint()
    }
}

/// An ordered, informationally complete list of two-qubit projectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TomographySet {
    settings: Vec<TomographySetting>,
}

/// The 16 settings in measurement order. The first fourteen follow the order
/// used on the bench; the last two complete the set to an informationally
/// complete one (`LR`, `HR`).
pub const STANDARD_LABELS: [&str; 16] = [
    "HH", "HV", "VV", "VH", "LH", "LV", "DV", "DH", "DL", "DD", "LD", "HD", "VD", "VR", "LR", "HR",
];

impl TomographySet {
    pub fn new(settings: Vec<TomographySetting>) -> Result<Self> {
        let set = TomographySet { settings };
        set.validate()?;
        Ok(set)
    }

    pub fn standard() -> Self {
        let settings = STANDARD_LABELS
            .iter()
            .map(|l| TomographySetting::parse(l).expect("static label"))
            .collect();
        TomographySet { settings }
    }

    pub fn settings(&self) -> &[TomographySetting] {
        &self.settings
    }

    pub fn len(&self) -> usize {
        self.settings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.settings.is_empty()
    }

    /// `G_kl = Tr(Π_k Π_l)`.
    pub fn gram_matrix(&self) -> DMatrix<f64> {
        let p: Vec<Mat4> = self.settings.iter().map(|s| s.projector()).collect();
        DMatrix::from_fn(p.len(), p.len(), |k, l| (p[k] * p[l]).trace().re)
    }

    pub fn condition_number(&self) -> f64 {
        let sv = self.gram_matrix().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min <= 0.0 {
            f64::INFINITY
        } else {
            max / min
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.settings.len() != 16 {
            return Err(Error::validation(format!(
                "tomography needs 16 settings, got {}",
                self.settings.len()
            )));
        }
        let cond = self.condition_number();
        if !(cond < 1e6) {
            return Err(Error::validation(format!(
                "settings are not informationally complete (Gram condition number {cond:.3e})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TomographyEntry {
    pub label: String,
    pub counts: u64,
    pub duration_s: f64,
}

/// Counts for each setting of a [`TomographySet`], in the same order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TomographyData {
    pub entries: Vec<TomographyEntry>,
}

impl TomographyData {
    pub fn validate(&self) -> Result<()> {
        for e in &self.entries {
            if !(e.duration_s > 0.0) {
                return Err(Error::validation(format!("{}: duration must be > 0", e.label)));
            }
        }
        Ok(())
    }

    pub fn total_counts(&self) -> u64 {
        self.entries.iter().map(|e| e.counts).sum()
    }

    /// Reads CSV with header `label,counts,duration_s`.
    pub fn read_csv<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let entries = rdr.deserialize().collect::<std::result::Result<Vec<TomographyEntry>, _>>()?;
        let data = TomographyData { entries };
        data.validate()?;
        Ok(data)
    }

    pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(file)
    }

    pub fn write_csv<W: std::io::Write>(&self, writer: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(writer);
        for e in &self.entries {
            wtr.serialize(e)?;
        }
        wtr.flush().map_err(|e| Error::io("<csv>", e))?;
        Ok(())
    }

    /// Settings matching these entries, in order.
    pub fn settings(&self) -> Result<TomographySet> {
        let settings = self
            .entries
            .iter()
            .map(|e| TomographySetting::parse(&e.label))
            .collect::<Result<Vec<_>>>()?;
        TomographySet::new(settings)
    }
}

/// Draws Poisson counts with mean `rate_scale · Tr(ρ Π_k)` for a 1 s
/// acquisition per setting.
pub fn simulate_tomography(
    rho: &TwoPhotonState,
    set: &TomographySet,
    rate_scale: f64,
    seed: u64,
) -> Result<TomographyData> {
    if !(rate_scale > 0.0) {
        return Err(Error::validation("rate_scale must be > 0"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let entries = set
        .settings
        .iter()
        .map(|s| {
            let mean = rate_scale * rho.expectation(&s.projector()).re.max(0.0);
            let counts = if mean > 0.0 {
                Poisson::new(mean)
                    .map_err(|e| Error::validation(format!("Poisson mean {mean}: {e}")))?
                    .sample(&mut rng) as u64
            } else {
                0
            };
            Ok(TomographyEntry {
                label: s.label(),
                counts,
                duration_s: 1.0,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TomographyData { entries })
}

/// Counts equal to their expectation values (rounded), for exact-data checks.
pub fn expected_tomography(rho: &TwoPhotonState, set: &TomographySet, rate_scale: f64) -> TomographyData {
    TomographyData {
        entries: set
            .settings
            .iter()
            .map(|s| TomographyEntry {
                label: s.label(),
                counts: (rate_scale * rho.expectation(&s.projector()).re).round().max(0.0) as u64,
                duration_s: 1.0,
            })
            .collect(),
    }
}

/// Outcome of a maximum-likelihood reconstruction.
#[derive(Debug, Clone)]
pub struct MleResult {
    pub state: TwoPhotonState,
    /// Poisson log-likelihood `Σ n ln μ − μ` at the optimum (constant terms dropped).
    pub log_likelihood: f64,
    pub iterations: usize,
    /// False when the iteration cap was reached before the likelihood settled.
    pub converged: bool,
}

// Parameter layout: 4 diagonal entries, then (re, im) of the strictly lower
// entries in row-major order.
const OFF_DIAGONAL: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];
const N_PARAMS: usize = 16;
type Params = SMatrix<f64, N_PARAMS, 1>;
type Hessian = SMatrix<f64, N_PARAMS, N_PARAMS>;

fn params_to_t(x: &Params) -> Mat4 {
    let mut t = Mat4::zeros();
    for i in 0..4 {
        t[(i, i)] = r(x[i]);
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        t[(i, j)] = c(x[4 + 2 * k], x[5 + 2 * k]);
    }
    t
}

fn t_to_params(t: &Mat4) -> Params {
    let mut x = Params::zeros();
    for i in 0..4 {
        x[i] = t[(i, i)].re;
    }
    for (k, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        x[4 + 2 * k] = t[(i, j)].re;
        x[5 + 2 * k] = t[(i, j)].im;
    }
    x
}

/// Each mean count is a quadratic form in the parameters,
/// `μ_k = d_k ‖T ψ_k‖² = d_k xᵀ Q_k x`, so gradients and Hessians are exact.
struct Problem {
    kets: Vec<Ket4>,
    forms: Vec<Hessian>,
    counts: Vec<f64>,
    durations: Vec<f64>,
}

impl Problem {
    fn new(set: &TomographySet, data: &TomographyData) -> Self {
        let kets: Vec<Ket4> = set.settings().iter().map(|s| s.ket()).collect();
        let forms = kets.iter().map(quadratic_form).collect();
        Problem {
            kets,
            forms,
            counts: data.entries.iter().map(|e| e.counts as f64).collect(),
            durations: data.entries.iter().map(|e| e.duration_s).collect(),
        }
    }

    fn loglik(&self, x: &Params) -> f64 {
        let mut ll = 0.0;
        for k in 0..self.forms.len() {
            let mu = self.durations[k] * (x.transpose() * self.forms[k] * x)[(0, 0)];
            if self.counts[k] > 0.0 {
                if mu <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                ll += self.counts[k] * mu.ln();
            }
            ll -= mu;
        }
        ll
    }

    /// `loglik(y) − loglik(x)`, computed term by term so that it stays
    /// accurate when the two are too close to subtract.
    fn gain(&self, x: &Params, y: &Params) -> f64 {
        let (dx, sx) = (y - x, y + x);
        let mut g = 0.0;
        for k in 0..self.forms.len() {
            let d = self.durations[k];
            let mu = d * x.dot(&(self.forms[k] * x));
            let delta = d * dx.dot(&(self.forms[k] * sx));
            if self.counts[k] > 0.0 {
                if mu + delta <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                g += self.counts[k] * (delta / mu).ln_1p();
            }
            g -= delta;
        }
        g
    }

    /// Gradient and negated Hessian of the log-likelihood.
    fn derivatives(&self, x: &Params) -> (Params, Hessian) {
        let mut grad = Params::zeros();
        let mut neg_hessian = Hessian::zeros();
        for k in 0..self.forms.len() {
            let d = self.durations[k];
            let qx = self.forms[k] * x;
            let mu = d * x.dot(&qx);
            let dmu = qx * (2.0 * d);
            let n = self.counts[k];
            let weight = if mu > 0.0 { n / mu - 1.0 } else { -1.0 };
            grad += dmu * weight;
            neg_hessian -= self.forms[k] * (2.0 * d * weight);
            if n > 0.0 && mu > 0.0 {
                neg_hessian += dmu * dmu.transpose() * (n / (mu * mu));
            }
        }
        (grad, neg_hessian)
    }
}

/// `Q` with `‖T ψ‖² = xᵀ Q x`: row `i` of `T ψ` is linear in the parameters
/// of row `i` of `T`.
fn quadratic_form(psi: &Ket4) -> Hessian {
    // jac[i][p] = ∂(Tψ)_i / ∂x_p
    let mut jac = [[C64::new(0.0, 0.0); N_PARAMS]; 4];
    for i in 0..4 {
        jac[i][i] = psi[i];
    }
    for (p, &(i, j)) in OFF_DIAGONAL.iter().enumerate() {
        jac[i][4 + 2 * p] = psi[j];
        jac[i][5 + 2 * p] = c(0.0, 1.0) * psi[j];
    }
    Hessian::from_fn(|p, q| (0..4).map(|i| (jac[i][p].conj() * jac[i][q]).re).sum())
}

/// Linear-inversion estimate of the unnormalized `T†T`, projected onto the
/// positive semidefinite cone.
fn linear_inversion(problem: &Problem) -> Result<Mat4> {
    let paulis = [
        Mat2::identity(),
        Mat2::new(r(0.0), r(1.0), r(1.0), r(0.0)),
        Mat2::new(r(0.0), c(0.0, -1.0), c(0.0, 1.0), r(0.0)),
        Mat2::new(r(1.0), r(0.0), r(0.0), r(-1.0)),
    ];
    let basis: Vec<Mat4> = (0..16).map(|ab| kron2(&paulis[ab / 4], &paulis[ab % 4])).collect();
    let n = problem.kets.len();
    let design = DMatrix::from_fn(n, 16, |k, ab| {
        let psi = &problem.kets[k];
        (psi.adjoint() * basis[ab] * psi)[(0, 0)].re / 4.0
    });
    let rates = DVector::from_fn(n, |k, _| problem.counts[k] / problem.durations[k]);
    let coeffs = design
        .svd(true, true)
        .solve(&rates, 1e-12)
        .map_err(|e| Error::Fit(format!("linear inversion failed: {e}")))?;
    let m = basis
        .iter()
        .enumerate()
        .fold(Mat4::zeros(), |acc, (ab, b)| acc + b * r(coeffs[ab] / 4.0));
    let (vals, vecs) = hermitian_eigen(&hermitize(&m));
    let total: f64 = vals.iter().map(|v| v.max(0.0)).sum();
    if !(total > 0.0) {
        return Err(Error::Fit("linear inversion gave no positive weight".into()));
    }
    // a small isotropic floor keeps the factorization full rank
    let floor = 1e-3 * total / 4.0;
    let clipped = Mat4::from_diagonal(&nalgebra::Vector4::from_fn(|i, _| r(vals[i].max(0.0) + floor)));
    Ok(vecs * clipped * vecs.adjoint())
}

/// Lower-triangular `T` with `T†T = m` for positive definite `m`.
fn lower_factor(m: &Mat4) -> Result<Mat4> {
    // reverse rows and columns so an ordinary Cholesky gives the UL form
    let flip = |a: &Mat4| Mat4::from_fn(|i, j| a[(3 - i, 3 - j)]);
    let l = Cholesky::new(flip(m))
        .ok_or_else(|| Error::Fit("initial estimate is not positive definite".into()))?
        .l();
    Ok(flip(&l).adjoint())
}

/// Levenberg-Marquardt step `(−H + λD)⁻¹ g`, with `D` the magnitude of the
/// Hessian diagonal floored so every direction is regularized. `None` when
/// the damped matrix is still indefinite.
fn damped_direction(grad: &Params, neg_hessian: &Hessian, lambda: f64) -> Option<Params> {
    let diag = neg_hessian.diagonal().abs();
    let floor = 1e-8 * diag.max().max(f64::MIN_POSITIVE);
    let mut damped = *neg_hessian;
    for i in 0..N_PARAMS {
        damped[(i, i)] += lambda * diag[i].max(floor);
    }
    Cholesky::new(damped).map(|ch| ch.solve(grad))
}

/// Maximum-likelihood density matrix for `data` measured with `set`.
///
/// Damped Newton iteration (Levenberg-Marquardt) on the 16 Cholesky
/// parameters, started from the PSD-projected linear-inversion estimate.
pub fn mle_reconstruct(data: &TomographyData, set: &TomographySet) -> Result<MleResult> {
    data.validate()?;
    if data.entries.len() != set.len() {
        return Err(Error::validation(format!(
            "{} data rows for {} settings",
            data.entries.len(),
            set.len()
        )));
    }
    for (e, s) in data.entries.iter().zip(set.settings()) {
        if TomographySetting::parse(&e.label)? != *s {
            return Err(Error::validation(format!(
                "data row `{}` does not match setting `{}`",
                e.label,
                s.label()
            )));
        }
    }
    if data.total_counts() == 0 {
        return Err(Error::validation("tomography data has no counts"));
    }

    let problem = Problem::new(set, data);

    let mut x = t_to_params(&lower_factor(&linear_inversion(&problem)?)?);
    let mut ll = problem.loglik(&x);
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    'outer: while iterations < MAX_ITERATIONS {
        iterations += 1;
        let (grad, neg_hessian) = problem.derivatives(&x);
        loop {
            if lambda > MAX_DAMPING {
                converged = true;
                break 'outer;
            }
            let Some(direction) = damped_direction(&grad, &neg_hessian, lambda) else {
                lambda *= 10.0;
                continue;
            };
            let candidate = x + direction;
            let gain = problem.gain(&x, &candidate);
            if gain > 0.0 {
                x = candidate;
                ll = problem.loglik(&x);
                lambda = (lambda / 3.0).max(MIN_DAMPING);
                if gain < LOGLIK_TOLERANCE && direction.norm() <= STEP_TOLERANCE * (1.0 + x.norm()) {
                    converged = true;
                    break 'outer;
                }
                break;
            }
            lambda *= 4.0;
        }
    }

    let t = params_to_t(&x);
    let m = t.adjoint() * t;
    let rho = hermitize(&(m / m.trace()));
    Ok(MleResult {
        state: TwoPhotonState::new(rho)?,
        log_likelihood: ll,
        iterations,
        converged,
    })
}

/// `(σy ⊗ σy) ρ* (σy ⊗ σy)`.
fn spin_flip(rho: &Mat4) -> Mat4 {
    let sy = Mat2::new(r(0.0), c(0.0, -1.0), c(0.0, 1.0), r(0.0));
    let yy = kron2(&sy, &sy);
    yy * rho.conjugate() * yy
}

/// Wootters concurrence.
pub fn concurrence(rho: &TwoPhotonState) -> f64 {
    let root = psd_sqrt(rho.matrix());
    let product = root * spin_flip(rho.matrix()) * root;
    let (vals, _) = hermitian_eigen(&product);
    let mut lambdas: Vec<f64> = vals.iter().map(|v| v.max(0.0).sqrt()).collect();
    lambdas.sort_by(|a, b| b.total_cmp(a));
    (lambdas[0] - lambdas[1] - lambdas[2] - lambdas[3]).max(0.0)
}

/// `Tr ρ²`.
pub fn purity(rho: &TwoPhotonState) -> f64 {
    (rho.matrix() * rho.matrix()).trace().re
}

/// `⟨ψ|ρ|ψ⟩` for a pure target state.
pub fn fidelity(rho: &TwoPhotonState, target: &TwoPhotonState) -> Result<f64> {
    let p = purity(target);
    if (p - 1.0).abs() > 1e-8 {
        return Err(Error::validation(format!("fidelity target must be pure (purity {p})")));
    }
    Ok((rho.matrix() * target.matrix()).trace().re)
}

/// Uhlmann fidelity `(Tr √(√ρ σ √ρ))²` between two mixed states.
pub fn state_fidelity(rho: &TwoPhotonState, sigma: &TwoPhotonState) -> f64 {
    let root = psd_sqrt(rho.matrix());
    let inner = psd_sqrt(&(root * sigma.matrix() * root));
    let tr: C64 = inner.trace();
    tr.re * tr.re
}

/// Summary figures for a reconstructed state against a pure target.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StateMetrics {
    pub concurrence: f64,
    pub purity: f64,
    pub fidelity: f64,
    pub loglik: f64,
    pub converged: bool,
}

impl StateMetrics {
    pub const CSV_HEADER: &'static str = "concurrence,purity,fidelity,loglik,converged";

    pub fn of(result: &MleResult, target: &TwoPhotonState) -> Result<Self> {
        Ok(StateMetrics {
            concurrence: concurrence(&result.state),
            purity: purity(&result.state),
            fidelity: fidelity(&result.state, target)?,
            loglik: result.log_likelihood,
            converged: result.converged,
        })
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{:.6},{:.6},{:.6},{:.6},{}",
            self.concurrence, self.purity, self.fidelity, self.loglik, self.converged
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::state::Sign;
    use approx::assert_abs_diff_eq;

    fn phi_minus() -> TwoPhotonState {
        TwoPhotonState::ideal(Sign::Minus)
    }

    // Determinant by Gaussian elimination with partial pivoting, kept apart
    // from nalgebra's decompositions.
    #[allow(clippy::needless_range_loop)]
    fn det(mut a: Vec<Vec<f64>>) -> f64 {
        let n = a.len();
        let mut d = 1.0;
        for col in 0..n {
            let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
            if a[piv][col] == 0.0 {
                return 0.0;
            }
            if piv != col {
                a.swap(piv, col);
                d = -d;
            }
            d *= a[col][col];
            for row in col + 1..n {
                let f = a[row][col] / a[col][col];
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
            }
        }
        d
    }

    #[test]
    fn standard_set_shape() {
        let set = TomographySet::standard();
        assert_eq!(set.len(), 16);
        let labels: Vec<String> = set.settings().iter().map(|s| s.label()).collect();
        assert_eq!(&labels[..4], &["HH", "HV", "VV", "VH"]);
        for s in set.settings() {
            let p = s.projector();
            assert!((p * p - p).iter().all(|z| z.norm() < 1e-12));
            assert_abs_diff_eq!(p.trace().re, 1.0, epsilon = 1e-12);
        }
        assert!(set.validate().is_ok());
    }

    #[test]
    fn standard_set_gram_is_nonsingular() {
        let g = TomographySet::standard().gram_matrix();
        let rows: Vec<Vec<f64>> = (0..16).map(|i| (0..16).map(|j| g[(i, j)]).collect()).collect();
        assert!(det(rows).abs() > 1e-8);
    }

    #[test]
    fn duplicate_settings_rejected() {
        let mut labels = STANDARD_LABELS.to_vec();
        labels[14] = "LD";
        let settings = labels.iter().map(|l| TomographySetting::parse(l).unwrap()).collect();
        assert!(TomographySet::new(settings).is_err());
    }

    #[test]
    fn simulation_is_deterministic_and_unbiased() {
        let set = TomographySet::standard();
        let rho = TwoPhotonState::werner(0.7, Sign::Minus).unwrap();
        let a = simulate_tomography(&rho, &set, 1e4, 9).unwrap();
        let b = simulate_tomography(&rho, &set, 1e4, 9).unwrap();
        assert_eq!(a, b);

        let big = simulate_tomography(&rho, &set, 1e8, 1).unwrap();
        for (e, s) in big.entries.iter().zip(set.settings()) {
            let p = rho.expectation(&s.projector()).re;
            assert!((e.counts as f64 / 1e8 - p).abs() < 1e-3);
        }
        let mixed = expected_tomography(&TwoPhotonState::maximally_mixed(), &set, 4e4);
        assert!(mixed.entries.iter().all(|e| e.counts == 10_000));
        assert!(simulate_tomography(&rho, &set, 0.0, 1).is_err());
    }

    #[test]
    fn derivatives_match_finite_differences() {
        let set = TomographySet::standard();
        let data = simulate_tomography(&TwoPhotonState::werner(0.8, Sign::Minus).unwrap(), &set, 1e3, 3).unwrap();
        let problem = Problem::new(&set, &data);
        let x = Params::from_fn(|i, _| 3.0 + 0.7 * (i as f64).sin());

        // likelihood straight from ‖Tψ‖², independent of the quadratic forms
        let t = params_to_t(&x);
        let direct: f64 = set
            .settings()
            .iter()
            .zip(&data.entries)
            .map(|(s, e)| {
                let mu = (t * s.ket()).norm_squared();
                e.counts as f64 * mu.ln() - mu
            })
            .sum();
        assert!((direct - problem.loglik(&x)).abs() < 1e-9 * direct.abs());

        let (g, neg_h) = problem.derivatives(&x);
        let h = 1e-5;
        for i in 0..N_PARAMS {
            let mut xp = x;
            let mut xm = x;
            xp[i] += h;
            xm[i] -= h;
            let fd = (problem.loglik(&xp) - problem.loglik(&xm)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-4 * (1.0 + g[i].abs()), "grad {i}: {fd} vs {}", g[i]);
            let (gp, _) = problem.derivatives(&xp);
            let (gm, _) = problem.derivatives(&xm);
            for j in 0..N_PARAMS {
                let fd = -(gp[j] - gm[j]) / (2.0 * h);
                assert!((fd - neg_h[(i, j)]).abs() < 1e-4 * (1.0 + fd.abs()), "hessian {i},{j}");
            }
        }
    }

    #[test]
    fn lower_factor_reproduces_matrix() {
        let m = TwoPhotonState::werner(0.6, Sign::Plus).unwrap().matrix() * r(100.0);
        let t = lower_factor(&m).unwrap();
        for i in 0..4 {
            for j in i + 1..4 {
                assert_eq!(t[(i, j)], r(0.0));
            }
        }
        assert!(crate::linalg::distance(&(t.adjoint() * t), &m) < 1e-10);
    }

    #[test]
    fn exact_data_recovers_phi_minus() {
        let set = TomographySet::standard();
        let data = expected_tomography(&phi_minus(), &set, 1e5);
        let res = mle_reconstruct(&data, &set).unwrap();
        assert!(fidelity(&res.state, &phi_minus()).unwrap() > 0.9999);
    }

    #[test]
    fn mismatched_inputs_rejected() {
        let set = TomographySet::standard();
        let mut data = expected_tomography(&phi_minus(), &set, 1e3);
        data.entries.pop();
        assert!(matches!(mle_reconstruct(&data, &set), Err(Error::Validation(_))));
        let mut data = expected_tomography(&phi_minus(), &set, 1e3);
        data.entries.swap(0, 1);
        assert!(mle_reconstruct(&data, &set).is_err());
        let zero = TomographyData {
            entries: set
                .settings()
                .iter()
                .map(|s| TomographyEntry { label: s.label(), counts: 0, duration_s: 1.0 })
                .collect(),
        };
        assert!(mle_reconstruct(&zero, &set).is_err());
    }

    #[test]
    fn concurrence_values() {
        assert_abs_diff_eq!(concurrence(&phi_minus()), 1.0, epsilon = 1e-7);
        let hh = TwoPhotonState::pure(&kron_ket(&Polarization::H.ket(), &Polarization::H.ket())).unwrap();
        assert_abs_diff_eq!(concurrence(&hh), 0.0, epsilon = 1e-7);
        for p in [0.2, 0.5, 0.9, 0.96] {
            let w = TwoPhotonState::werner(p, Sign::Minus).unwrap();
            let closed = f64::max(0.0, (3.0 * p - 1.0) / 2.0);
            assert_abs_diff_eq!(concurrence(&w), closed, epsilon = 1e-7);
        }
    }

    #[test]
    fn purity_and_fidelity_values() {
        assert_abs_diff_eq!(purity(&phi_minus()), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(purity(&TwoPhotonState::maximally_mixed()), 0.25, epsilon = 1e-12);
        let w = TwoPhotonState::werner(0.9, Sign::Minus).unwrap();
        assert_abs_diff_eq!(purity(&w), 0.8575, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&phi_minus(), &phi_minus()).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&TwoPhotonState::maximally_mixed(), &phi_minus()).unwrap(), 0.25, epsilon = 1e-12);
        assert_abs_diff_eq!(fidelity(&w, &phi_minus()).unwrap(), 0.925, epsilon = 1e-12);
        assert!(fidelity(&phi_minus(), &w).is_err());
        assert_abs_diff_eq!(state_fidelity(&w, &phi_minus()), 0.925, epsilon = 1e-7);
        assert_abs_diff_eq!(state_fidelity(&w, &w), 1.0, epsilon = 1e-7);
    }

    #[test]
    fn csv_round_trip() {
        let set = TomographySet::standard();
        let data = simulate_tomography(&phi_minus(), &set, 1e3, 5).unwrap();
        let mut buf = Vec::new();
        data.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("label,counts,duration_s\n"));
        assert_eq!(TomographyData::read_csv(&buf[..]).unwrap(), data);
        assert_eq!(data.settings().unwrap(), set);
    }
}
