//! SSIM, PSNR, cosine similarity and Fréchet distance on synthetic data.

use qinr::metrics::{cosine_similarity, fid, frechet_distance, psnr, ssim, FeatureBackend, GaussianStats};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn main() -> qinr::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let clean: Vec<f64> = (0..784).map(|p| if (p % 28) / 7 == 1 { 0.9 } else { 0.1 }).collect();
    for sigma in [0.0f64, 0.02, 0.1, 0.3] {
        let noise = Normal::new(0.0, sigma.max(1e-12)).expect("valid sigma");
        let noisy: Vec<f64> = clean.iter().map(|v| (v + noise.sample(&mut rng)).clamp(0.0, 1.0)).collect();
        println!(
            "sigma {sigma:<4}  ssim {:.4}  psnr {:>6.2} dB  cosine {:.4}",
            ssim(&clean, &noisy, 28)?,
            psnr(&clean, &noisy)?,
            cosine_similarity(&clean, &noisy)?.value
        );
    }

    // Two 3-D Gaussians with a known Fréchet distance.
    let draw = |rng: &mut ChaCha8Rng, shift: f64, scale: f64| -> Vec<Vec<f64>> {
        (0..4000).map(|_| (0..3).map(|_| shift + scale * rng.sample::<f64, _>(rand_distr::StandardNormal)).collect()).collect()
    };
    let a = draw(&mut rng, 0.0, 1.0);
    let b = draw(&mut rng, 1.0, 2.0);
    let exact = 3.0 * 1.0 + 3.0 * (1.0 + 4.0 - 2.0 * 2.0);
    let est = frechet_distance(&GaussianStats::fit(&a)?, &GaussianStats::fit(&b)?);
    println!("Frechet distance: sampled {est:.4}, closed form {exact:.4}");
    println!("FID(a, a) = {:.2e}", fid(&a, &a, &FeatureBackend::RawPixels)?);
    Ok(())
}
