//! Regenerates the sample inputs under `data/` from the built-in
//! instances: `cargo run -p llot-core --example write_data`.

use std::fs::File;
use std::path::Path;

use llot_core::fixtures;
use llot_core::io::{write_density_csv, write_plan_json};

fn main() -> llot_core::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    std::fs::create_dir_all(&dir)?;

    write_density_csv(File::create(dir.join("two_site.csv"))?, &fixtures::two_site_density()?)?;
    write_density_csv(File::create(dir.join("three_site.csv"))?, &fixtures::three_site_density()?)?;
    write_density_csv(File::create(dir.join("sixteen_site.csv"))?, &fixtures::sixteen_site_density()?)?;
    write_density_csv(File::create(dir.join("semiclassical.csv"))?, &fixtures::semiclassical_density()?)?;

    for (stem, f) in [("two_points", fixtures::two_points()?), ("two_bumps", fixtures::two_bumps(64)?)] {
        write_plan_json(File::create(dir.join(format!("{stem}_plan.json")))?, &f.plan)?;
        write_density_csv(File::create(dir.join(format!("{stem}_rho.csv")))?, &f.rho)?;
    }
    println!("wrote {}", dir.canonicalize()?.display());
    Ok(())
}
