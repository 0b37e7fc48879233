//! Reads the MNIST IDX files, selects the first images of one class and
//! prints one as ASCII art.

use qinr::data::{dataset_files, default_data_root, load_idx, prepare, DatasetName, DatasetSpec, IMAGE_SIDE};

fn main() -> qinr::Result<()> {
    let root = default_data_root();
    let (images, labels) = dataset_files(&root, DatasetName::Mnist)?;
    let raw = load_idx(&images, &labels)?;
    println!("{}: {} images of {}x{}", images.display(), raw.len(), raw.rows, raw.cols);

    let mut counts = [0usize; 10];
    raw.labels.iter().for_each(|&l| counts[l as usize] += 1);
    println!("per-class counts {counts:?}");

    let digit = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(3);
    let samples = prepare(&DatasetSpec::new(DatasetName::Mnist, Some(digit), 500), &raw)?;
    println!("{} samples of digit {digit}; first is file record {}", samples.len(), samples[0].id);
    for row in samples[0].pixels.chunks(IMAGE_SIDE) {
        let line: String = row.iter().map(|&v| if v > 0.5 { '#' } else if v > -0.5 { '+' } else { '.' }).collect();
        println!("{line}");
    }
    Ok(())
}
