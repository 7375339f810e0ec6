//! Trains the LSTM-DLN model from the desk config and prints the epoch log.
//!
//!     cargo run --release --example train_dln

use lattice_sqr::cli::{train_model, Config};
use lattice_sqr::data::Split;
use lattice_sqr::engine::evaluate_split;
use lattice_sqr::heads::HeadKind;

fn main() -> lattice_sqr::Result<()> {
    let config = Config::from_toml(include_str!("configs/desk.toml"))?;
    let data = config.data.load()?;
    let (model, report) = train_model(&config, HeadKind::Dln, config.train.seed, &data, |log| {
        println!(
            "epoch {:>2}  loss {:.4}  val CRPS {:.4}  lr {:.2e}",
            log.epoch, log.train_loss, log.val_crps, log.lr
        );
    })?;
    println!(
        "{} parameters, kept epoch {:?} (initial val CRPS {:.4})",
        model.parameter_count(),
        report.best_epoch,
        report.initial_val_crps
    );
    let test = evaluate_split(&model, &data, Split::Test)?;
    println!("test CRPS {:.4}  ACE {:.4}  crossover {}", test.crps, test.ace, test.crossover_rate);
    Ok(())
}
