//! QINR decoder against the classical linear decoder of similar size, both
//! trained as VAEs on the same digit and seed.
//!
//! ```text
//! cargo run --release --example classical_baseline -- [digit] [epochs] [samples]
//! ```

use qinr::data::{default_data_root, load_dataset, to_unit, DatasetName, DatasetSpec, IMAGE_PIXELS};
use qinr::losses::LossSchedule;
use qinr::metrics::ssim;
use qinr::models::{DecoderKind, ModelConfig};
use qinr::training::{train_vae, Seeds, TrainSettings};

fn main() -> qinr::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let digit = args.first().copied().unwrap_or(1) as u8;
    let epochs = args.get(1).copied().unwrap_or(10) as u32;
    let samples = args.get(2).copied().unwrap_or(200);
    let data = load_dataset(&default_data_root(), &DatasetSpec::new(DatasetName::Mnist, Some(digit), samples))?;
    let pixels: Vec<f64> = data.iter().flat_map(|s| s.pixels.iter().copied()).collect();

    for decoder in [DecoderKind::Qinr, DecoderKind::ClassicalLinear] {
        let cfg = ModelConfig { decoder, ..ModelConfig::standard_vae() };
        let settings = TrainSettings { epochs, ..TrainSettings::standard_vae() };
        let (mut model, records) = train_vae(cfg, settings, LossSchedule::beta_warmup(5), &data, Seeds::from_master(0))?;
        let recon = model.reconstruct(&pixels, 64)?;
        let mean = data
            .iter()
            .zip(recon.chunks_exact(IMAGE_PIXELS))
            .map(|(s, r)| ssim(&to_unit(&s.pixels), r, 28))
            .sum::<qinr::Result<f64>>()?
            / data.len() as f64;
        let last = records.last().expect("at least one epoch");
        println!(
            "{decoder:?}: {} decoder params, final rec {:.2}, kl {:.3}, mean SSIM {mean:.4}",
            model.census().decoder,
            last.rec_loss,
            last.kl_loss
        );
    }
    Ok(())
}
