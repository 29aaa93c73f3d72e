use crate::error::{Error, Result};

fn check(logits: &[f64]) -> Result<f64> {
    if logits.is_empty() {
        return Err(Error::contract("softmax of an empty vector"));
    }
    if let Some(bad) = logits.iter().find(|x| !x.is_finite()) {
        return Err(Error::contract(format!("softmax of non-finite logit {bad}")));
    }
    Ok(logits.iter().copied().fold(f64::NEG_INFINITY, f64::max))
}

/// Numerically stable softmax (max-subtracted).
pub fn softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = check(logits)?;
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    Ok(exps.into_iter().map(|e| e / total).collect())
}

pub fn log_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    let max = check(logits)?;
    let lse = logits.iter().map(|&z| (z - max).exp()).sum::<f64>().ln() + max;
    Ok(logits.iter().map(|&z| z - lse).collect())
}

/// Shannon entropy of a distribution given both its probabilities and log-probabilities.
pub fn entropy(probs: &[f64], log_probs: &[f64]) -> f64 {
    -probs
        .iter()
        .zip(log_probs)
        .map(|(p, lp)| if *p > 0.0 { p * lp } else { 0.0 })
        .sum::<f64>()
}
