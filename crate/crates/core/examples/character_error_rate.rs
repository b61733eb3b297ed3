//! CER scoring with a stand-in transcriber: generated samples are inverted to
//! audio, pseudo-labeled by the classifier and compared with the transcript.

use std::path::Path;

use stylemel::dataset::toy::{toy_cache, TOY_CLASSES};
use stylemel::evaluation::{
    cer, evaluate_cer, holdout_split, records_tensor, train_digit_classifier, ClassifierConfig,
};

fn main() -> stylemel::Result<()> {
    println!("cer(nine, five) = {}", cer("nine", "five")?);
    println!("cer(three, tree) = {}", cer("three", "tree")?);

    let cache = toy_cache(48, 1);
    let (_, held) = holdout_split(&cache, 0.25, 1);
    let cfg = ClassifierConfig {
        train_samples: 2_000,
        ..ClassifierConfig::toy()
    };
    let (clf, _) = train_digit_classifier(&cache, &held, cfg)?;
    let mels = records_tensor(&cache, &held, 32)?;
    let labels: Vec<usize> = held.iter().map(|&i| cache.labels[i] as usize).collect();

    // Mishears every other clip as "hi".
    let stub = |p: &Path| -> stylemel::Result<String> {
        let n: usize = p.file_stem().unwrap().to_string_lossy()[7..].parse().unwrap();
        Ok(if n % 2 == 0 { "low".into() } else { "hi".into() })
    };
    let names: Vec<String> = TOY_CLASSES.iter().map(|s| s.to_string()).collect();
    let dir = std::env::temp_dir().join("stylemel-cer-demo");
    let report = evaluate_cer(&mels, Some(&labels), &clf, &stub, &names, &dir, 16)?;
    print!("{}", report.to_tsv().split("# summary").nth(1).unwrap_or(""));
    println!("pseudo-label agreement {:.2}", report.label_agreement().unwrap());
    Ok(())
}
