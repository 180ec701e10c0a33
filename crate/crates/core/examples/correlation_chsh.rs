//! Correlation fringes and the CHSH parameter, exact and from simulated counts.
use sagnac::config::RunConfig;
use sagnac::measurement::{chsh, correlation_curve, fit_sinusoid, ChshAngles, Polarization};
use sagnac::pipeline;

fn main() -> sagnac::Result<()> {
    let cfg = RunConfig::bundled()?;
    let rho = cfg.source_params()?.state()?;
    for p in [Polarization::H, Polarization::D] {
        let fit = fit_sinusoid(&correlation_curve(&rho, &p.setting(), 12.0)?)?;
        println!("signal {p}: exact fringe visibility {:.4}", fit.visibility);
    }
    println!("S exact: {:.4}", chsh(&rho, &ChshAngles::STANDARD));

    let mut short = cfg.clone();
    short.acquisition.duration_s = 2.0;
    let (s, sigma) = pipeline::chsh_measurement(&short)?;
    println!("S from 2 s of simulated counts per setting: {s:.3} ± {sigma:.3}");
    Ok(())
}
