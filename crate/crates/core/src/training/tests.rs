use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::IMAGE_PIXELS;

/// Blurry strokes: a vertical bar at a per-sample column plus noise.
fn toy_samples(n: usize, seed: u64) -> Vec<Sample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|id| {
            let col = 10 + rng.gen_range(0..8);
            let pixels = (0..IMAGE_PIXELS)
                .map(|p| {
                    let x = (p % 28) as i64;
                    if (x - col as i64).abs() <= 1 { 1.0 } else { -1.0 + rng.gen_range(0.0..0.1) }
                })
                .collect();
            Sample { pixels, label: 1, id }
        })
        .collect()
}

fn small_settings(epochs: u32) -> TrainSettings {
    TrainSettings { epochs, batch_size: 8, ..TrainSettings::standard_ae() }
}

#[test]
fn zero_epochs_returns_initial_model() {
    let (_, recs) = train_ae(ModelConfig::standard_ae(), small_settings(0), &toy_samples(8, 0), Seeds::default()).unwrap();
    assert!(recs.is_empty());
}

#[test]
fn wrong_variant_is_rejected() {
    let s = toy_samples(4, 0);
    assert!(train_ae(ModelConfig::standard_vae(), small_settings(1), &s, Seeds::default()).is_err());
    let sched = LossSchedule::default();
    assert!(train_vae(ModelConfig::standard_ae(), small_settings(1), sched, &s, Seeds::default()).is_err());
}

#[test]
fn identical_seeds_give_identical_records() {
    let s = toy_samples(16, 1);
    let run = || train_ae(ModelConfig::standard_ae(), small_settings(2), &s, Seeds::from_master(5)).unwrap().1;
    let a = run();
    assert_eq!(a, run());
    assert_eq!(records_to_csv(&a), records_to_csv(&run()));
    assert!(a.iter().all(|r| r.rec_loss.is_finite() && r.seconds == 0.0));
}

#[test]
fn capacity_schedule_is_logged() {
    let s = toy_samples(8, 2);
    let sched = LossSchedule::capacity(12.0, 2, 10.0, 0.5);
    let settings = TrainSettings { epochs: 3, batch_size: 8, ..TrainSettings::standard_vae() };
    let (_, recs) = train_vae(ModelConfig::standard_vae(), settings, sched, &s, Seeds::default()).unwrap();
    assert_eq!(recs.iter().map(|r| r.c_t).collect::<Vec<_>>(), [6.0, 12.0, 12.0]);
    assert!(recs.iter().all(|r| r.kl_loss >= 8.0 * 0.5 - 1e-12));
}

#[test]
fn csv_layout() {
    let r = TrainRecord { epoch: 1, rec_loss: 2.5, kl_loss: 0.0, total_loss: 2.5, beta_t: 1.0, c_t: 0.0, seconds: 0.0 };
    assert_eq!(records_to_csv(&[r]), format!("{CSV_HEADER}\n1,2.5,0,2.5,1,0,0\n"));
}

#[test]
fn checkpoint_round_trip_and_resume() {
    let s = toy_samples(16, 3);
    let settings = TrainSettings { epochs: 3, batch_size: 8, ..TrainSettings::standard_vae() };
    let sched = LossSchedule::beta_warmup(2);
    let mut full = Trainer::new(ModelConfig::standard_vae(), settings.clone(), sched.clone(), Seeds::from_master(9)).unwrap();
    full.run(&s, |_, _| Ok(())).unwrap();

    let mut part = Trainer::new(ModelConfig::standard_vae(), settings, sched, Seeds::from_master(9)).unwrap();
    part.train_epoch(&s).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ck.bin");
    save_checkpoint(&path, &part.checkpoint()).unwrap();

    let ck = load_checkpoint(&path).unwrap();
    assert_eq!(ck, part.checkpoint());
    let mut probe = ck.model().unwrap();
    let x: Vec<f64> = s[..2].iter().flat_map(|s| s.pixels.clone()).collect();
    assert_eq!(probe.reconstruct(&x, 2).unwrap(), part.model.reconstruct(&x, 2).unwrap());

    let mut resumed = ck.into_trainer().unwrap();
    resumed.run(&s, |_, _| Ok(())).unwrap();
    assert_eq!(resumed.records, full.records);
}

#[test]
fn checkpoint_errors_are_distinct() {
    let t = Trainer::new(ModelConfig::standard_ae(), small_settings(1), LossSchedule::default(), Seeds::default()).unwrap();
    let bytes = t.checkpoint().to_bytes().unwrap();
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 100]), Err(Error::CheckpointTruncated(_))));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..10]), Err(Error::CheckpointTruncated(_))));
    let mut v = bytes.clone();
    v[8] = 99;
    assert!(matches!(Checkpoint::from_bytes(&v), Err(Error::CheckpointVersion { found: 99, .. })));
    let mut c = bytes.clone();
    let mid = c.len() / 2;
    c[mid] ^= 0xff;
    assert!(matches!(Checkpoint::from_bytes(&c), Err(Error::CheckpointCorrupted(_))));
    let mut m = bytes;
    m[0] = b'X';
    assert!(matches!(Checkpoint::from_bytes(&m), Err(Error::CheckpointCorrupted(_))));
}
