//! Walk-off, residual delays and mode overlaps of the displacer pair, plus
//! how they scale with displacer length.
use sagnac::config::RunConfig;
use sagnac::materials::MaterialTable;

fn main() -> sagnac::Result<()> {
    let cfg = RunConfig::bundled()?;
    let mats = MaterialTable::builtin();
    let setup = cfg.geometry(&mats)?;
    let report = setup.pair_mismatch()?;
    print!("{report}");
    println!("coherence factor {:.4}\n", report.coherence_factor());

    println!("length_mm  separation_mm  temporal  spatial_s  spatial_i");
    for (l, r) in setup.length_sweep(&[10.0, 20.0, 30.0, 40.0, 50.0])? {
        println!(
            "{l:>9}  {:>13.3}  {:>8.5}  {:>9.5}  {:>9.5}",
            r.separation_mm, r.temporal_overlap, r.spatial_overlap_s, r.spatial_overlap_i
        );
    }
    Ok(())
}
