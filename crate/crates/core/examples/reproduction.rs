//! Every stage against the reference values, as a pass/fail table.
use sagnac::config::RunConfig;
use sagnac::materials::MaterialTable;
use sagnac::pipeline::full_reproduction;

fn main() -> sagnac::Result<()> {
    let report = full_reproduction(&RunConfig::bundled()?, &MaterialTable::builtin());
    print!("{report}");
    println!("all pass: {}", report.all_pass());
    Ok(())
}
