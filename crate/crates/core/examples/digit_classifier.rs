//! Trains the FD / pseudo-label classifier on the toy corpus, saves it and
//! checks the reloaded copy agrees.

use stylemel::dataset::toy::toy_cache;
use stylemel::evaluation::{holdout_split, records_tensor, train_digit_classifier, ClassifierConfig, DigitClassifier};

fn main() -> stylemel::Result<()> {
    let cache = toy_cache(128, 5);
    let (train, held) = holdout_split(&cache, 0.2, 0);
    println!("{} training / {} held-out records", train.len(), held.len());
    let (clf, report) = train_digit_classifier(&cache, &held, ClassifierConfig::toy())?;
    println!("held-out accuracy {:.3}, final loss {:.4}", report.accuracy(), report.final_loss);

    let path = std::env::temp_dir().join("stylemel-toy-classifier.bin");
    clf.save(&path)?;
    let back = DigitClassifier::load(&path)?;
    let x = records_tensor(&cache, &held, 32)?;
    assert_eq!(clf.predict(&x)?, back.predict(&x)?);
    let feats = back.activations(&x)?;
    println!("{} feature rows of width {}", feats.len(), feats[0].len());
    Ok(())
}
