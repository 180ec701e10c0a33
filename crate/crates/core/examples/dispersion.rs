//! Refractive and group indices of the built-in crystals.
use sagnac::materials::{MaterialTable, OpticalAxis};

fn main() -> sagnac::Result<()> {
    let table = MaterialTable::builtin();
    for name in ["calcite", "abbo", "ppln_mgo"] {
        let m = table.get(name)?;
        println!("{name}: {}", m.source_citation);
        for lambda in [532.0, 785.0, 1650.7] {
            let no = m.refractive_index(lambda, 25.0, OpticalAxis::Ordinary)?;
            let ne = m.refractive_index(lambda, 25.0, OpticalAxis::Extraordinary)?;
            let ng = m.group_index(lambda, 25.0, OpticalAxis::Extraordinary)?;
            println!("  {lambda:>7.1} nm  n_o {no:.5}  n_e {ne:.5}  n_g,e {ng:.5}");
        }
    }
    Ok(())
}
