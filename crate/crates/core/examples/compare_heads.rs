//! Trains every head in the desk config for each seed and prints the
//! aggregated table, as `lattice-sqr experiment` does.

use lattice_sqr::cli::{aggregate, train_model, Config, RunResult};
use lattice_sqr::data::Split;
use lattice_sqr::engine::evaluate_split;

fn main() -> lattice_sqr::Result<()> {
    let mut config = Config::from_toml(include_str!("configs/desk.toml"))?;
    config.train.epochs = Some(3);
    let data = config.data.load()?;

    let mut runs = Vec::new();
    for &head in &config.experiment.heads {
        for &seed in &config.experiment.seeds {
            let (model, _) = train_model(&config, head, seed, &data, |_| {})?;
            let report = evaluate_split(&model, &data, Split::Test)?;
            println!("{} seed {seed}: CRPS {:.4} crossover {:.4}", head.label(), report.crps, report.crossover_rate);
            runs.push(RunResult { head, seed, report });
        }
    }

    let fmt = |v: Option<(f64, f64)>| v.map_or("-".to_string(), |(m, s)| format!("{m:.4} ± {s:.4}"));
    println!("\n{:<10} {:<18} {:<18} {:<18}", "model", "CRPS", "MAE", "ACE");
    for &head in &config.experiment.heads {
        let mine: Vec<&RunResult> = runs.iter().filter(|r| r.head == head).collect();
        let row = aggregate(head, &mine);
        println!("{:<10} {:<18} {:<18} {:<18}", row.model, fmt(row.crps), fmt(Some(row.mae)), fmt(row.ace));
    }
    Ok(())
}
