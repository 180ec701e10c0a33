//! Type-0 quasi-phase matching in MgO:PPLN and its temperature tuning.
use sagnac::config::RunConfig;
use sagnac::materials::MaterialTable;
use sagnac::phasematch::conjugate_wavelength;

fn main() -> sagnac::Result<()> {
    let cfg = RunConfig::bundled()?;
    let crystal = cfg.crystal(&MaterialTable::builtin())?;
    let pump = cfg.geometry.pump_nm;
    println!("idler for {} nm signal: {:.2} nm", cfg.geometry.signal_nm, conjugate_wavelength(pump, cfg.geometry.signal_nm)?);

    if let Some(m) = crystal.solve_signal(pump)? {
        println!(
            "at {} C: signal {:.2} nm, idler {:.2} nm (|dk| {:.1e} rad/um)",
            crystal.temperature_c, m.triplet.signal_nm, m.triplet.idler_nm, m.residual
        );
    }
    if let Some(t) = crystal.temperature_for_signal(pump, cfg.geometry.signal_nm, 20.0, 150.0)? {
        println!("{} nm signal is matched at {t:.2} C", cfg.geometry.signal_nm);
    }
    let curve = crystal.tuning_curve(pump, 40.0, 90.0, 11)?;
    sagnac::phasematch::write_tuning_csv(&curve, std::io::stdout()).expect("stdout");
    Ok(())
}
