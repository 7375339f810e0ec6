//! Generates both synthetic series, prints a few statistics and writes them
//! as CSV files that `lattice-sqr train --dataset` accepts.
//!
//!     cargo run --example synthetic_data -- /tmp/series

use std::path::PathBuf;

use lattice_sqr::data::{synth_table, write_table, SeriesDataset, SynthKind, DatasetConfig, Split};

fn main() -> lattice_sqr::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "target/synthetic".into()));
    std::fs::create_dir_all(&out).map_err(|e| lattice_sqr::Error::Io { path: out.clone(), source: e })?;

    for (kind, name) in [
        (SynthKind::HeteroscedasticSine, "sine.csv"),
        (SynthKind::ClearSkyRamp, "ramp.csv"),
    ] {
        let table = synth_table(kind, 2000, 0)?;
        let path = out.join(name);
        write_table(&path, &table)?;

        let mut cfg = DatasetConfig::default();
        if kind == SynthKind::ClearSkyRamp {
            cfg.clear_sky = Some("clear_sky".into());
        }
        let ds = SeriesDataset::new(table, &cfg)?;
        let y: Vec<f64> = ds.raw().column(ds.target_column()).to_vec();
        let mean = y.iter().sum::<f64>() / y.len() as f64;
        let max = y.iter().cloned().fold(f64::MIN, f64::max);
        println!("{kind:?} -> {}", path.display());
        println!("  columns   {:?}", ds.columns());
        println!("  target    mean {mean:.3}  max {max:.3}");
        for split in [Split::Train, Split::Validation, Split::Test] {
            println!("  {split:?}: {} windows", ds.sample_count(split)?);
        }
    }
    Ok(())
}
