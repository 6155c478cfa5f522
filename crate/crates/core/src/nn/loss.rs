use crate::error::{Error, Result};

/// Predictions are clipped to `[PROB_CLIP, 1 - PROB_CLIP]` before the log.
pub const PROB_CLIP: f64 = 1e-7;

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

fn check_weight(positive_weight: f64) -> Result<()> {
    if positive_weight <= 0.0 || !positive_weight.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "positive weight must be > 0, got {positive_weight}"
        )));
    }
    Ok(())
}

/// `-(w * y * ln p + (1 - y) * ln(1 - p))` with `p` clipped.
pub fn weighted_bce(p: f64, label: bool, positive_weight: f64) -> Result<f64> {
    check_weight(positive_weight)?;
    let p = p.clamp(PROB_CLIP, 1.0 - PROB_CLIP);
    Ok(if label {
        -positive_weight * p.ln()
    } else {
        -(1.0 - p).ln()
    })
}

/// `d loss / d p`; zero where the clip is active.
pub fn weighted_bce_grad(p: f64, label: bool, positive_weight: f64) -> Result<f64> {
    check_weight(positive_weight)?;
    if !(PROB_CLIP..=1.0 - PROB_CLIP).contains(&p) {
        return Ok(0.0);
    }
    Ok(if label {
        -positive_weight / p
    } else {
        1.0 / (1.0 - p)
    })
}

/// Loss and its derivative with respect to the logit `z`, where `p = sigmoid(z)`.
pub fn weighted_bce_logit(z: f64, label: bool, positive_weight: f64) -> Result<(f64, f64)> {
    let p = sigmoid(z);
    let loss = weighted_bce(p, label, positive_weight)?;
    let dp = weighted_bce_grad(p, label, positive_weight)?;
    Ok((loss, dp * p * (1.0 - p)))
}
