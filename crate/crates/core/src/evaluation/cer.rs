use crate::error::{Error, Result};

/// Unit-cost edit distance between the character sequences of `a` and `b`.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0; b.len() + 1];
    for i in 1..=a.len() {
        cur[0] = i;
        for j in 1..=b.len() {
            let sub = prev[j - 1] + usize::from(a[i - 1] != b[j - 1]);
            cur[j] = sub.min(prev[j] + 1).min(cur[j - 1] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// Character error rate: edit distance divided by the reference length.
pub fn cer(reference: &str, hypothesis: &str) -> Result<f64> {
    let n = reference.chars().count();
    if n == 0 {
        return Err(Error::InvalidArgument("character error rate needs a non-empty reference".into()));
    }
    Ok(levenshtein(reference, hypothesis) as f64 / n as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(cer("three", "three").unwrap(), 0.0);
        assert_eq!(cer("nine", "five").unwrap(), 0.5);
        assert_eq!(cer("two", "").unwrap(), 1.0);
        assert!(cer("", "x").is_err());
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("é", "e"), 1);
    }
}
