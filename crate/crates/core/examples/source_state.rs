//! The two-photon state for several imperfection settings and the
//! visibilities it implies in each analysis basis.
use sagnac::measurement::{average_visibility, basis_visibility, Basis};
use sagnac::state::{source_state, ImperfectionParams, PumpPolarization};

fn main() -> sagnac::Result<()> {
    let ideal = ImperfectionParams {
        coherence_factor: 1.0,
        phase_error_rad: 0.0,
        isotropic_noise: 0.0,
        pump: PumpPolarization::balanced(),
    };
    let cases = [
        ("ideal", ideal),
        ("mode mismatch 0.97", ImperfectionParams { coherence_factor: 0.97, ..ideal }),
        ("phase error 0.2 rad", ImperfectionParams { phase_error_rad: 0.2, ..ideal }),
        ("white noise 4%", ImperfectionParams { isotropic_noise: 0.04, ..ideal }),
    ];
    for (label, params) in cases {
        let rho = source_state(&params)?;
        let v: Vec<String> = Basis::ALL
            .iter()
            .map(|&b| format!("{} {:.4}", b.label(), basis_visibility(&rho, b)))
            .collect();
        println!("{label:<20} {}  avg {:.4}", v.join("  "), average_visibility(&rho));
    }
    Ok(())
}
