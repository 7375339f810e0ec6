//! Saves a model with its metadata and loads it back; forecasts from the
//! reloaded model match bit for bit.

use lattice_sqr::cli::{load_model, save_model, train_model, Config, ModelMeta};
use lattice_sqr::data::Split;
use lattice_sqr::engine::exploit;
use lattice_sqr::heads::HeadKind;
use lattice_sqr::metrics::EVAL_QUANTILES;

fn main() -> lattice_sqr::Result<()> {
    let mut config = Config::from_toml(include_str!("configs/desk.toml"))?;
    config.train.epochs = Some(2);
    let data = config.data.load()?;
    let (model, report) = train_model(&config, HeadKind::Dln, 5, &data, |_| {})?;

    let path = std::env::temp_dir().join("lattice_sqr_example.ckpt");
    save_model(&path, &model, &ModelMeta::new(&config, &model, 5, &data, Some(&report)))?;
    let (loaded, meta) = load_model(&path)?;
    println!("{}: {} parameters, best epoch {:?}", path.display(), loaded.parameter_count(), meta.best_epoch);

    let window = data.window_at(data.sample_starts(Split::Test)?.start);
    let a = exploit(&model, window, &EVAL_QUANTILES)?;
    let b = exploit(&loaded, window, &EVAL_QUANTILES)?;
    println!("forecasts identical after reload: {}", a.values == b.values);
    Ok(())
}
