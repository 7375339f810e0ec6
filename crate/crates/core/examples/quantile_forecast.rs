//! One embedding pass, any number of quantile levels. Trains a DLN and an
//! MLP head briefly and counts crossings on a 101-level grid over the test
//! split.

use lattice_sqr::cli::{train_model, Config};
use lattice_sqr::data::Split;
use lattice_sqr::engine::{crossover_rate, exploit};
use lattice_sqr::heads::HeadKind;

fn main() -> lattice_sqr::Result<()> {
    let mut config = Config::from_toml(include_str!("configs/desk.toml"))?;
    config.train.epochs = Some(4);
    let data = config.data.load()?;
    let taus: Vec<f64> = (0..=100).map(|i| i as f64 / 100.0).collect();
    let start = data.sample_starts(Split::Test)?.start;

    for kind in [HeadKind::Dln, HeadKind::Mlp] {
        let (model, _) = train_model(&config, kind, 1, &data, |_| {})?;
        let mut rates = Vec::new();
        for s in data.sample_starts(Split::Test)? {
            rates.push(crossover_rate(&exploit(&model, data.window_at(s), &taus)?));
        }
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        println!("{}: crossover rate {mean:.4} over {} test windows", kind.label(), rates.len());
        let batch = exploit(&model, data.window_at(start), &taus)?;
        if kind == HeadKind::Dln {
            let y = data.inverse_scale(&data.target_at(start).to_vec());
            println!("step  observed  q05     q50     q95");
            for t in 0..batch.values.ncols() {
                let q = |tau: usize| data.inverse_scale(&[batch.values[[tau, t]]])[0];
                println!("{t:>4}  {:>8.3}  {:.3}  {:.3}  {:.3}", y[t], q(5), q(50), q(95));
            }
        }
    }
    Ok(())
}
