//! Exploitation cost as the number of requested quantile levels grows. The
//! embedding runs once per call, so only the head cost scales.

use lattice_sqr::cli::Config;
use lattice_sqr::engine::{timing_probe, SqrModel};
use lattice_sqr::heads::HeadKind;
use ndarray::Array2;

fn main() -> lattice_sqr::Result<()> {
    let config = Config::from_toml(include_str!("configs/desk.toml"))?;
    let features = 7;
    let model = SqrModel::new(config.model_config(HeadKind::Dln, features), 0)?;
    let window = Array2::from_elem((config.data.window, features), 0.5);
    println!("levels  mean ms   sd ms");
    for q in [1usize, 11, 101, 1001] {
        let taus: Vec<f64> = (0..q).map(|i| (i as f64 + 0.5) / q as f64).collect();
        let t = timing_probe(&model, window.view(), &taus, 20)?;
        println!("{q:>6}  {:>7.3}  {:>6.3}", t.mean_seconds * 1e3, t.variance_seconds.sqrt() * 1e3);
    }
    Ok(())
}
