//! Scores a trained model on the test split: point errors, CRPS, the
//! coverage curve and per-level reliability.

use lattice_sqr::cli::{train_model, Config};
use lattice_sqr::data::{Split, SynthKind};
use lattice_sqr::engine::evaluate_split;
use lattice_sqr::heads::HeadKind;

fn main() -> lattice_sqr::Result<()> {
    let mut config = Config::from_toml(include_str!("configs/desk.toml"))?;
    // The ramp series carries a clear-sky column, so a skill score against
    // smart persistence is available.
    config.data.synthetic = Some(SynthKind::ClearSkyRamp);
    let data = config.data.load()?;
    let (model, _) = train_model(&config, HeadKind::Dln, 1, &data, |_| {})?;
    let r = evaluate_split(&model, &data, Split::Test)?;

    println!("MAE {:.4}  RMSE {:.4}  SS {:?}", r.mae, r.rmse, r.ss);
    println!("CRPS {:.4}  ACE {:.4}", r.crps, r.ace);
    println!("interval   nominal  empirical");
    for p in &r.picp_curve {
        println!("           {:.3}    {:.3}", p.nominal, p.empirical);
    }
    println!("level      share of y <= forecast");
    for p in &r.reliability_curve {
        println!("{:.3}      {:.3}", p.nominal, p.empirical);
    }
    Ok(())
}
