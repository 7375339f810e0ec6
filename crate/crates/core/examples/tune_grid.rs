//! Grid search over the `[tune]` axes of the desk config, ranked by
//! validation CRPS and then ACE.

use lattice_sqr::cli::{lattice_parameters, tune, Config, TrialOutcome};

fn main() -> lattice_sqr::Result<()> {
    let config = Config::from_toml(include_str!("configs/desk.toml"))?;
    let data = config.data.load()?;
    let trials = tune(&config, &data, config.tune.max_params)?;
    for t in &trials {
        let s = &t.spec;
        let score = match &t.outcome {
            TrialOutcome::Ok { val_crps, val_ace } => format!("CRPS {val_crps:.4} ACE {val_ace:.4}"),
            TrialOutcome::Skipped { reason } | TrialOutcome::Failed { reason } => reason.clone(),
        };
        println!(
            "lr {:<6} k {} lattice params {:>6}  {score}",
            s.learning_rate,
            s.lattice_keypoints,
            lattice_parameters(s, config.embedding.hidden_size)
        );
    }
    Ok(())
}
