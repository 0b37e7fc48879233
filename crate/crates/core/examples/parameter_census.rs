//! Trainable-parameter counts for the published configurations and the
//! classical linear decoder baseline.

use qinr::cli::commands::{census, format_census};
use qinr::models::{DecoderKind, ModelConfig};
use qinr::qsim::ReadoutMode;

fn main() -> qinr::Result<()> {
    let vae = ModelConfig::standard_vae();
    println!("QINR-VAE\n{}", format_census(&census(&vae)?));

    let variants = [
        ("QINR-AE", ModelConfig::standard_ae()),
        ("QINR-VAE, global scale", ModelConfig { global_scale: true, ..vae.clone() }),
        ("QINR-AE, L=3, multibasis, global scale", ModelConfig {
            reuploads: 3,
            readout: ReadoutMode::Multibasis,
            global_scale: true,
            ..ModelConfig::standard_ae()
        }),
        ("classical-linear VAE", ModelConfig { decoder: DecoderKind::ClassicalLinear, ..vae.clone() }),
    ];
    for (name, cfg) in variants {
        let c = census(&cfg)?;
        println!("{name:<40} quantum {:>4}  decoder {:>7}  total {:>7}", c.quantum, c.decoder, c.total());
    }
    Ok(())
}
