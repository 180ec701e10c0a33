//! JSON run configuration.
//!
//! Every physical quantity must be given explicitly; unknown keys are
//! rejected. Materials are referenced by name and resolved against a
//! [`MaterialTable`].

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::countsim::{Acquisition, DetectorParams, SourceParams, VisibilityModel};
use crate::error::{Error, Result};
use crate::interferometer::{BeamDisplacerSpec, SetupGeometry};
use crate::materials::MaterialTable;
use crate::measurement::ChshAngles;
use crate::phasematch::{CrystalSpec, SpdcTriplet};
use crate::state::ImperfectionParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DisplacerConfig {
    pub material: String,
    pub length_mm: f64,
    pub cut_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub pump_nm: f64,
    pub signal_nm: f64,
    pub bd1: DisplacerConfig,
    pub bd2: DisplacerConfig,
    pub pump_coherence_ps: f64,
    pub photon_coherence_ps: f64,
    pub signal_beam_diameter_mm: f64,
    pub idler_beam_diameter_mm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrystalConfig {
    pub material: String,
    pub length_mm: f64,
    pub poling_period_um: f64,
    pub temperature_c: f64,
    pub qpm_order: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuningConfig {
    pub t_min_c: f64,
    pub t_max_c: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceConfig {
    pub pgr_per_mw: f64,
    pub pump_power_mw: f64,
    /// `(power mW, average visibility)` points the exponential model is fitted to.
    pub visibility_anchors: Vec<[f64; 2]>,
    pub imperfections: ImperfectionParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorPair {
    pub signal: DetectorParams,
    pub idler: DetectorParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub powers_mw: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub correlation_step_deg: f64,
    pub chsh_angles: ChshAngles,
    /// Acquisition time per tomography setting, s.
    pub tomography_duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    pub geometry: GeometryConfig,
    pub crystal: CrystalConfig,
    pub tuning: TuningConfig,
    pub source: SourceConfig,
    pub detectors: DetectorPair,
    pub acquisition: Acquisition,
    pub sweep: SweepConfig,
    pub analysis: AnalysisConfig,
    pub outputs: OutputConfig,
}

/// Location of the reference configuration shipped with the crate.
pub fn bundled_config_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("configs").join("paper.json")
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Reads a config file. A missing or unreadable file is a validation
    /// failure that names the path.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::validation(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::validation(format!("config {}: {e}", path.display())))
    }

    pub fn bundled() -> Result<Self> {
        Self::load(bundled_config_path())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    /// SHA-256 of the canonical serialization, so formatting and key order
    /// of the source file do not matter.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(serde_json::to_vec(self).expect("config serializes")))
    }

    /// Checks every section and reports all problems at once.
    pub fn validate(&self, materials: &MaterialTable) -> Result<()> {
        let mut problems: Vec<String> = Vec::new();
        let mut check = |field: &str, r: Result<()>| {
            if let Err(e) = r {
                problems.push(format!("{field}: {e}"));
            }
        };
        check("geometry", self.geometry(materials).map(|_| ()));
        check("crystal", self.crystal(materials).map(|_| ()));
        check(
            "tuning",
            if self.tuning.steps >= 2 && self.tuning.t_max_c >= self.tuning.t_min_c {
                Ok(())
            } else {
                Err(Error::validation("need steps >= 2 and t_max_c >= t_min_c"))
            },
        );
        check("source", self.source_params().and_then(|s| s.validate()));
        check("detectors.signal", self.detectors.signal.validate());
        check("detectors.idler", self.detectors.idler.validate());
        check("acquisition", validate_acquisition(&self.acquisition));
        check(
            "sweep.powers_mw",
            if !self.sweep.powers_mw.is_empty() && self.sweep.powers_mw.iter().all(|p| *p >= 0.0) {
                Ok(())
            } else {
                Err(Error::validation("need at least one power, all >= 0"))
            },
        );
        check(
            "analysis.correlation_step_deg",
            positive("correlation_step_deg", self.analysis.correlation_step_deg),
        );
        check(
            "analysis.tomography_duration_s",
            positive("tomography_duration_s", self.analysis.tomography_duration_s),
        );
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(format!("invalid config:\n  - {}", problems.join("\n  - "))))
        }
    }

    pub fn triplet(&self) -> Result<SpdcTriplet> {
        SpdcTriplet::from_pump_signal(self.geometry.pump_nm, self.geometry.signal_nm)
    }

    pub fn geometry(&self, materials: &MaterialTable) -> Result<SetupGeometry> {
        let g = &self.geometry;
        let bd = |c: &DisplacerConfig| {
            BeamDisplacerSpec::new(materials.get(&c.material)?.clone(), c.length_mm, c.cut_angle_deg)
        };
        let setup = SetupGeometry {
            bd1: bd(&g.bd1)?,
            bd2: bd(&g.bd2)?,
            pump_coherence_ps: g.pump_coherence_ps,
            photon_coherence_ps: g.photon_coherence_ps,
            signal_beam_diameter_mm: g.signal_beam_diameter_mm,
            idler_beam_diameter_mm: g.idler_beam_diameter_mm,
            triplet: self.triplet()?,
        };
        setup.validate()?;
        Ok(setup)
    }

    pub fn crystal(&self, materials: &MaterialTable) -> Result<CrystalSpec> {
        let c = &self.crystal;
        let spec = CrystalSpec {
            material: materials.get(&c.material)?.clone(),
            length_mm: c.length_mm,
            poling_period_um: c.poling_period_um,
            temperature_c: c.temperature_c,
            qpm_order: c.qpm_order,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn visibility_model(&self) -> Result<VisibilityModel> {
        let anchors: Vec<(f64, f64)> = self.source.visibility_anchors.iter().map(|a| (a[0], a[1])).collect();
        VisibilityModel::fit(&anchors)
    }

    pub fn source_params(&self) -> Result<SourceParams> {
        Ok(SourceParams {
            pgr_per_mw: self.source.pgr_per_mw,
            pump_power_mw: self.source.pump_power_mw,
            visibility: self.visibility_model()?,
            imperfections: self.source.imperfections,
        })
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::validation(format!("{name} must be > 0")))
    }
}

fn validate_acquisition(a: &Acquisition) -> Result<()> {
    positive("duration_s", a.duration_s)?;
    positive("window_ns", a.window_ns)
}
