//! Interrupts a run, saves a checkpoint, resumes it and checks that the
//! loss log matches an uninterrupted run.

use qinr::data::{default_data_root, load_dataset, DatasetName, DatasetSpec};
use qinr::losses::LossSchedule;
use qinr::models::ModelConfig;
use qinr::training::{load_checkpoint, records_to_csv, save_checkpoint, Seeds, TrainSettings, Trainer};

fn main() -> qinr::Result<()> {
    let data = load_dataset(&default_data_root(), &DatasetSpec::new(DatasetName::Mnist, Some(7), 64))?;
    let settings = TrainSettings { epochs: 4, ..TrainSettings::standard_vae() };
    let new = || Trainer::new(ModelConfig::standard_vae(), settings.clone(), LossSchedule::beta_warmup(5), Seeds::from_master(11));

    let mut full = new()?;
    full.run(&data, |_, _| Ok(()))?;

    let mut part = new()?;
    part.train_epoch(&data)?;
    part.train_epoch(&data)?;
    let path = std::env::temp_dir().join("qinr_resume_demo.ckpt");
    save_checkpoint(&path, &part.checkpoint())?;
    println!("saved epoch {} to {} ({} bytes)", part.epoch, path.display(), std::fs::metadata(&path)?.len());

    let mut resumed = load_checkpoint(&path)?.into_trainer()?;
    resumed.run(&data, |_, r| {
        println!("resumed epoch {}  total {:.4}", r.epoch, r.total_loss);
        Ok(())
    })?;
    let same = records_to_csv(&resumed.records) == records_to_csv(&full.records);
    println!("loss log identical to uninterrupted run: {same}");
    Ok(())
}
