//! Trains Z-only and multibasis autoencoders on every Fashion-MNIST class at
//! once, with the learnable global scale, and compares reconstruction SSIM.
//!
//! ```text
//! cargo run --release --example readout_comparison -- [epochs] [samples_per_class]
//! ```

use qinr::data::{default_data_root, load_dataset, to_unit, DatasetName, DatasetSpec, IMAGE_PIXELS};
use qinr::metrics::ssim;
use qinr::models::ModelConfig;
use qinr::qsim::ReadoutMode;
use qinr::training::{train_ae, Seeds, TrainSettings};

fn main() -> qinr::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let epochs = args.first().copied().unwrap_or(3) as u32;
    let per_class = args.get(1).copied().unwrap_or(100);
    let data = load_dataset(&default_data_root(), &DatasetSpec::new(DatasetName::FashionMnist, None, per_class))?;
    let pixels: Vec<f64> = data.iter().flat_map(|s| s.pixels.iter().copied()).collect();
    println!("{} images over 10 classes", data.len());

    for readout in [ReadoutMode::ZOnly, ReadoutMode::Multibasis] {
        let cfg = ModelConfig { reuploads: 3, global_scale: true, readout, ..ModelConfig::standard_ae() };
        let settings = TrainSettings { epochs, ..TrainSettings::standard_ae() };
        let (mut model, records) = train_ae(cfg, settings, &data, Seeds::from_master(0))?;
        let recon = model.reconstruct(&pixels, 64)?;
        let mut total = 0.0;
        for (s, r) in data.iter().zip(recon.chunks_exact(IMAGE_PIXELS)) {
            total += ssim(&to_unit(&s.pixels), r, 28)?;
        }
        let rho = match &model.decoder {
            qinr::models::Decoder::Qinr(d) => d.quantum_params().rho.unwrap_or(0.0),
            qinr::models::Decoder::Classical(_) => 0.0,
        };
        println!(
            "{readout:?}: final rec {:.2}, mean SSIM {:.4}, learned scale e^rho = {:.4}",
            records.last().map_or(f64::NAN, |r| r.rec_loss),
            total / data.len() as f64,
            rho.exp()
        );
    }
    Ok(())
}
