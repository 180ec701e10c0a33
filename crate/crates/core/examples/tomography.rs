//! Sixteen-setting tomography with maximum-likelihood reconstruction.
use sagnac::state::{Sign, TwoPhotonState};
use sagnac::tomography::{
    concurrence, fidelity, mle_reconstruct, purity, simulate_tomography, StateMetrics, TomographySet,
};

fn main() -> sagnac::Result<()> {
    let truth = TwoPhotonState::werner(0.95, Sign::Minus)?;
    let target = TwoPhotonState::ideal(Sign::Minus);
    let set = TomographySet::standard();
    println!("measurement condition number {:.2}", set.condition_number());
    println!(
        "true state: concurrence {:.4}, purity {:.4}, fidelity {:.4}",
        concurrence(&truth),
        purity(&truth),
        fidelity(&truth, &target)?
    );
    for scale in [1e3, 1e4, 1e5] {
        let data = simulate_tomography(&truth, &set, scale, 7)?;
        let fit = mle_reconstruct(&data, &set)?;
        let m = StateMetrics::of(&fit, &target)?;
        println!(
            "rate scale {:>7}: C {:.4}  P {:.4}  F {:.4}  ({} iterations)",
            scale, m.concurrence, m.purity, m.fidelity, fit.iterations
        );
    }
    Ok(())
}
