//! Time-tag Monte Carlo: singles, coincidences, accidentals and derived rates.
use sagnac::config::RunConfig;
use sagnac::countsim::{count_coincidences, generate_timetags};

fn main() -> sagnac::Result<()> {
    let cfg = RunConfig::bundled()?;
    let src = cfg.source_params()?;
    let (s, i) = generate_timetags(&src, &cfg.detectors.signal, &cfg.detectors.idler, 2.0, cfg.seed)?;
    println!("{} signal and {} idler tags in 2 s", s.len(), i.len());
    for window in [1.0, 3.0, 10.0] {
        let r = count_coincidences(&s, &i, window, 2.0)?;
        println!(
            "window {window:>4} ns: raw {:.1} cps, accidentals {:.3} cps, corrected {:.1} cps",
            r.coinc_raw, r.accidentals, r.coinc_corrected
        );
    }
    let r = count_coincidences(&s, &i, cfg.acquisition.window_ns, 2.0)?;
    println!(
        "heralding {:.4} / {:.4}, pair generation rate {:.3e} /s",
        r.heralding_s()?,
        r.heralding_i()?,
        r.pgr()?
    );
    Ok(())
}
