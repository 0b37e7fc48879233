//! Trains the QINR variational autoencoder with β warm-up on one MNIST
//! digit, then writes a grid of prior samples as PGM.
//!
//! ```text
//! cargo run --release --example train_vae -- [digit] [epochs] [samples]
//! ```

use qinr::cli::image::{grid, save_grid};
use qinr::data::{default_data_root, load_dataset, DatasetName, DatasetSpec};
use qinr::losses::LossSchedule;
use qinr::models::ModelConfig;
use qinr::training::{Seeds, TrainSettings, Trainer};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> qinr::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let digit = args.first().copied().unwrap_or(1) as u8;
    let epochs = args.get(1).copied().unwrap_or(10) as u32;
    let samples = args.get(2).copied().unwrap_or(500);

    let data = load_dataset(&default_data_root(), &DatasetSpec::new(DatasetName::Mnist, Some(digit), samples))?;
    let settings = TrainSettings { epochs, ..TrainSettings::standard_vae() };
    let mut trainer = Trainer::new(ModelConfig::standard_vae(), settings, LossSchedule::beta_warmup(5), Seeds::from_master(0))?;
    trainer.run(&data, |_, r| {
        println!(
            "epoch {:>3}  rec {:>8.2}  kl {:>6.3}  total {:>8.2}  beta {:.2}",
            r.epoch, r.rec_loss, r.kl_loss, r.total_loss, r.beta_t
        );
        Ok(())
    })?;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let images = trainer.model.generate(20, &mut rng)?;
    let path = std::env::temp_dir().join("qinr_vae_samples");
    for p in save_grid(&grid(&images, 2, 10)?, &path, false)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
