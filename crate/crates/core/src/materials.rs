//! Refractive and group indices of the birefringent and nonlinear crystals.
//!
//! Every model is a pair of dispersion formulas (ordinary and extraordinary)
//! in micrometres, evaluated on demand. The built-in table covers calcite,
//! α-BBO and 5%-MgO-doped congruent lithium niobate; further models can be
//! loaded from JSON with the same field layout as [`SellmeierModel`].

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Polarization eigen-axis of a uniaxial crystal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OpticalAxis {
    Ordinary,
    Extraordinary,
}

/// Functional form of `n²(λ, T)` with λ in micrometres and T in °C.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case", deny_unknown_fields)]
pub enum Dispersion {
    /// Wavelength-independent index. Used for synthetic test media.
    Constant { n: f64 },
    /// `n² = a + Σ bᵢ λ² / (λ² − cᵢ)`.
    Sellmeier { a: f64, terms: Vec<SellmeierTerm> },
    /// `n² = a + b / (λ² − c) − d λ²`, the short form common in handbooks.
    Handbook { a: f64, b: f64, c: f64, d: f64 },
    /// Temperature-dependent lithium niobate form with
    /// `f = (T − t_ref)(T + t_offset)`:
    ///
    /// `n² = a1 + b1 f + (a2 + b2 f) / (λ² − (a3 + b3 f)²) + (a4 + b4 f) / (λ² − a5²) − a6 λ²`
    ThermalLithiumNiobate {
        a: [f64; 6],
        b: [f64; 4],
        t_ref: f64,
        t_offset: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierTerm {
    pub b: f64,
    pub c: f64,
}

impl Dispersion {
    fn n_squared(&self, lambda_um: f64, temperature_c: f64) -> f64 {
        let l2 = lambda_um * lambda_um;
        match self {
            Dispersion::Constant { n } => n * n,
            Dispersion::Sellmeier { a, terms } => {
                a + terms.iter().map(|t| t.b * l2 / (l2 - t.c)).sum::<f64>()
            }
            Dispersion::Handbook { a, b, c, d } => a + b / (l2 - c) - d * l2,
            Dispersion::ThermalLithiumNiobate {
                a,
                b,
                t_ref,
                t_offset,
            } => {
                let f = (temperature_c - t_ref) * (temperature_c + t_offset);
                let pole = a[2] + b[2] * f;
                a[0] + b[0] * f + (a[1] + b[1] * f) / (l2 - pole * pole)
                    + (a[3] + b[3] * f) / (l2 - a[4] * a[4])
                    - a[5] * l2
            }
        }
    }
}

/// A uniaxial crystal's dispersion model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SellmeierModel {
    pub material_name: String,
    pub ordinary: Dispersion,
    pub extraordinary: Dispersion,
    /// Wavelength interval in nm over which the fit is valid.
    pub valid_range_nm: [f64; 2],
    pub temperature_dependent: bool,
    /// Temperature interval in °C; only consulted for temperature-dependent models.
    #[serde(default)]
    pub temperature_range_c: Option<[f64; 2]>,
    pub source_citation: String,
}

impl SellmeierModel {
    /// Calcite, room temperature.
    pub fn calcite() -> Self {
        SellmeierModel {
            material_name: "calcite".into(),
            ordinary: Dispersion::Handbook {
                a: 2.69705,
                b: 0.0192064,
                c: 0.01820,
                d: 0.0151624,
            },
            extraordinary: Dispersion::Handbook {
                a: 2.18438,
                b: 0.0087309,
                c: 0.01018,
                d: 0.0024411,
            },
            valid_range_nm: [200.0, 2200.0],
            temperature_dependent: false,
            temperature_range_c: None,
            source_citation: "Handbook of Optics, 3rd ed., Vol. IV, calcite dispersion \
                              formula (room temperature, 0.2-2.2 um)"
                .into(),
        }
    }

    /// α-BBO, room temperature.
    pub fn alpha_bbo() -> Self {
        SellmeierModel {
            material_name: "abbo".into(),
            ordinary: Dispersion::Handbook {
                a: 2.7471,
                b: 0.01878,
                c: 0.01822,
                d: 0.01354,
            },
            extraordinary: Dispersion::Handbook {
                a: 2.3174,
                b: 0.01224,
                c: 0.01667,
                d: 0.01516,
            },
            valid_range_nm: [190.0, 3500.0],
            temperature_dependent: false,
            temperature_range_c: None,
            source_citation: "alpha-BBO dispersion formula as published in vendor \
                              datasheets (room temperature, 0.19-3.5 um)"
                .into(),
        }
    }

    /// 5%-MgO-doped congruent lithium niobate, temperature dependent.
    pub fn ppln_mgo() -> Self {
        SellmeierModel {
            material_name: "ppln_mgo".into(),
            ordinary: Dispersion::ThermalLithiumNiobate {
                a: [5.653, 0.1185, 0.2091, 89.61, 10.85, 1.97e-2],
                b: [7.941e-7, 3.134e-8, -4.641e-9, -2.188e-6],
                t_ref: 24.5,
                t_offset: 570.82,
            },
            extraordinary: Dispersion::ThermalLithiumNiobate {
                a: [5.756, 0.0983, 0.2020, 189.32, 12.52, 1.32e-2],
                b: [2.860e-6, 4.700e-8, 6.113e-8, 1.516e-4],
                t_ref: 24.5,
                t_offset: 570.82,
            },
            valid_range_nm: [500.0, 4000.0],
            temperature_dependent: true,
            temperature_range_c: Some([20.0, 200.0]),
            source_citation: "O. Gayer, Z. Sacks, E. Galun, A. Arie, Appl. Phys. B 91, \
                              343-348 (2008); 5% MgO:CLN, 0.5-4 um, 20-200 C"
                .into(),
        }
    }

    /// A dispersionless synthetic medium, handy for limits and tests.
    pub fn constant(name: &str, n_o: f64, n_e: f64) -> Self {
        SellmeierModel {
            material_name: name.into(),
            ordinary: Dispersion::Constant { n: n_o },
            extraordinary: Dispersion::Constant { n: n_e },
            valid_range_nm: [100.0, 10_000.0],
            temperature_dependent: false,
            temperature_range_c: None,
            source_citation: "synthetic".into(),
        }
    }

    pub fn dispersion(&self, axis: OpticalAxis) -> &Dispersion {
        match axis {
            OpticalAxis::Ordinary => &self.ordinary,
            OpticalAxis::Extraordinary => &self.extraordinary,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let [lo, hi] = self.valid_range_nm;
        if !(lo > 0.0 && hi > lo) {
            return Err(Error::validation(format!(
                "{}: valid_range_nm must satisfy 0 < min < max",
                self.material_name
            )));
        }
        if self.temperature_dependent && self.temperature_range_c.is_none() {
            return Err(Error::validation(format!(
                "{}: temperature-dependent model needs temperature_range_c",
                self.material_name
            )));
        }
        Ok(())
    }

    fn check_wavelength(&self, lambda_nm: f64) -> Result<()> {
        let [lo, hi] = self.valid_range_nm;
        let violated = if lambda_nm < lo || lambda_nm.is_nan() {
            Some(("minimum", lo))
        } else if lambda_nm > hi {
            Some(("maximum", hi))
        } else {
            None
        };
        match violated {
            Some((violated, limit)) => Err(Error::Range {
                quantity: "wavelength (nm)",
                value: lambda_nm,
                violated,
                limit,
                context: self.material_name.clone(),
            }),
            None => Ok(()),
        }
    }

    fn check_temperature(&self, temperature_c: f64) -> Result<()> {
        if !self.temperature_dependent {
            return Ok(());
        }
        let Some([lo, hi]) = self.temperature_range_c else {
            return Ok(());
        };
        if temperature_c < lo || temperature_c.is_nan() {
            Err(Error::Range {
                quantity: "temperature (C)",
                value: temperature_c,
                violated: "minimum",
                limit: lo,
                context: self.material_name.clone(),
            })
        } else if temperature_c > hi {
            Err(Error::Range {
                quantity: "temperature (C)",
                value: temperature_c,
                violated: "maximum",
                limit: hi,
                context: self.material_name.clone(),
            })
        } else {
            Ok(())
        }
    }

    // Unchecked evaluation; callers have validated the range.
    fn index_unchecked(&self, lambda_nm: f64, temperature_c: f64, axis: OpticalAxis) -> f64 {
        self.dispersion(axis)
            .n_squared(lambda_nm * 1e-3, temperature_c)
            .sqrt()
    }

    /// Phase index along `axis` at `lambda_nm`.
    pub fn refractive_index(
        &self,
        lambda_nm: f64,
        temperature_c: f64,
        axis: OpticalAxis,
    ) -> Result<f64> {
        self.check_wavelength(lambda_nm)?;
        self.check_temperature(temperature_c)?;
        let n = self.index_unchecked(lambda_nm, temperature_c, axis);
        if n.is_nan() || n <= 1.0 {
            return Err(Error::Domain(format!(
                "{} gives non-physical index {n} at {lambda_nm} nm",
                self.material_name
            )));
        }
        Ok(n)
    }

    /// Group index `n − λ dn/dλ` from a central difference with step `λ·1e-4`.
    pub fn group_index(&self, lambda_nm: f64, temperature_c: f64, axis: OpticalAxis) -> Result<f64> {
        self.group_index_with_step(lambda_nm, temperature_c, axis, lambda_nm * 1e-4)
    }

    pub fn group_index_with_step(
        &self,
        lambda_nm: f64,
        temperature_c: f64,
        axis: OpticalAxis,
        step_nm: f64,
    ) -> Result<f64> {
        self.group_index_by(lambda_nm, step_nm, |l| {
            self.refractive_index(l, temperature_c, axis)
        })
    }

    /// Index of the extraordinary wave whose wavevector makes `theta_deg`
    /// with the optic axis.
    pub fn angle_index(&self, lambda_nm: f64, temperature_c: f64, theta_deg: f64) -> Result<f64> {
        let n_o = self.refractive_index(lambda_nm, temperature_c, OpticalAxis::Ordinary)?;
        let n_e = self.refractive_index(lambda_nm, temperature_c, OpticalAxis::Extraordinary)?;
        Ok(extraordinary_wave_index(n_o, n_e, theta_deg.to_radians()))
    }

    /// Group index of the extraordinary wave at `theta_deg`.
    pub fn angle_group_index(
        &self,
        lambda_nm: f64,
        temperature_c: f64,
        theta_deg: f64,
    ) -> Result<f64> {
        self.group_index_by(lambda_nm, lambda_nm * 1e-4, |l| {
            self.angle_index(l, temperature_c, theta_deg)
        })
    }

    fn group_index_by(
        &self,
        lambda_nm: f64,
        step_nm: f64,
        index: impl Fn(f64) -> Result<f64>,
    ) -> Result<f64> {
        let [lo, hi] = self.valid_range_nm;
        if lambda_nm - step_nm < lo {
            return Err(Error::Range {
                quantity: "wavelength (nm) minus stencil step",
                value: lambda_nm - step_nm,
                violated: "minimum",
                limit: lo,
                context: self.material_name.clone(),
            });
        }
        if lambda_nm + step_nm > hi {
            return Err(Error::Range {
                quantity: "wavelength (nm) plus stencil step",
                value: lambda_nm + step_nm,
                violated: "maximum",
                limit: hi,
                context: self.material_name.clone(),
            });
        }
        let n = index(lambda_nm)?;
        let slope = (index(lambda_nm + step_nm)? - index(lambda_nm - step_nm)?) / (2.0 * step_nm);
        Ok(n - lambda_nm * slope)
    }
}

/// `(cos²θ/n_o² + sin²θ/n_e²)^(-1/2)`.
pub fn extraordinary_wave_index(n_o: f64, n_e: f64, theta_rad: f64) -> f64 {
    let (s, c) = theta_rad.sin_cos();
    (c * c / (n_o * n_o) + s * s / (n_e * n_e)).sqrt().recip()
}

/// Name-addressable collection of dispersion models.
#[derive(Debug, Clone)]
pub struct MaterialTable {
    models: BTreeMap<String, SellmeierModel>,
}

impl Default for MaterialTable {
    fn default() -> Self {
        Self::builtin()
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ModelFile {
    One(Box<SellmeierModel>),
    Many(Vec<SellmeierModel>),
}

impl MaterialTable {
    pub fn builtin() -> Self {
        let mut models = BTreeMap::new();
        for m in [
            SellmeierModel::calcite(),
            SellmeierModel::alpha_bbo(),
            SellmeierModel::ppln_mgo(),
        ] {
            models.insert(m.material_name.clone(), m);
        }
        MaterialTable { models }
    }

    pub fn get(&self, name: &str) -> Result<&SellmeierModel> {
        self.models
            .get(name)
            .ok_or_else(|| Error::UnknownMaterial(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn models(&self) -> impl Iterator<Item = &SellmeierModel> {
        self.models.values()
    }

    /// Adds or replaces a model, keyed by its `material_name`.
    pub fn insert(&mut self, model: SellmeierModel) -> Result<()> {
        model.validate()?;
        self.models.insert(model.material_name.clone(), model);
        Ok(())
    }

    /// Merges a JSON file holding one model or an array of models.
    pub fn load_file(&mut self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        self.load_str(&text)
    }

    pub fn load_str(&mut self, json: &str) -> Result<()> {
        match serde_json::from_str(json)? {
            ModelFile::One(m) => self.insert(*m),
            ModelFile::Many(ms) => ms.into_iter().try_for_each(|m| self.insert(m)),
        }
    }
}
