//! Trains the QINR autoencoder on one MNIST digit and reports the mean
//! reconstruction SSIM.
//!
//! ```text
//! cargo run --release --example train_autoencoder -- [digit] [epochs] [samples]
//! ```

use std::time::Instant;

use qinr::data::{default_data_root, load_dataset, to_unit, DatasetName, DatasetSpec, IMAGE_PIXELS};
use qinr::metrics::ssim;
use qinr::models::ModelConfig;
use qinr::training::{Seeds, TrainSettings, Trainer};
use qinr::losses::LossSchedule;

fn main() -> qinr::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let digit = args.first().copied().unwrap_or(1) as u8;
    let epochs = args.get(1).copied().unwrap_or(25) as u32;
    let samples = args.get(2).copied().unwrap_or(500);

    let spec = DatasetSpec::new(DatasetName::Mnist, Some(digit), samples);
    let data = load_dataset(&default_data_root(), &spec)?;
    let settings = TrainSettings { epochs, ..TrainSettings::standard_ae() };
    let mut trainer = Trainer::new(ModelConfig::standard_ae(), settings, LossSchedule::default(), Seeds::from_master(0))?;

    let start = Instant::now();
    trainer.run(&data, |_, r| {
        println!("epoch {:>3}  rec {:>9.3}  ({:.1}s)", r.epoch, r.rec_loss, start.elapsed().as_secs_f64());
        Ok(())
    })?;

    let pixels: Vec<f64> = data.iter().flat_map(|s| s.pixels.iter().copied()).collect();
    let recon = trainer.model.reconstruct(&pixels, 64)?;
    let mut total = 0.0;
    for (s, r) in data.iter().zip(recon.chunks_exact(IMAGE_PIXELS)) {
        total += ssim(&to_unit(&s.pixels), r, 28)?;
    }
    println!("mean SSIM over {} images: {:.4}", data.len(), total / data.len() as f64);
    Ok(())
}
