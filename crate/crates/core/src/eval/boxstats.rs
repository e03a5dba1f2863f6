use super::EvalError;

/// Five-number summary with Tukey whiskers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorDistribution {
    pub min: f64,
    pub whisker_low: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_high: f64,
    pub max: f64,
    pub outliers: usize,
}

/// Quantile of sorted data by linear interpolation between order
/// statistics at position `p·(n − 1)`.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Summary of signed errors (actual − predicted). Whiskers reach the most
/// extreme values within 1.5·IQR of the box; the rest are outliers.
pub fn error_distribution(errors: &[f64]) -> Result<ErrorDistribution, EvalError> {
    if errors.len() < 4 {
        return Err(EvalError::Metrics(format!("need at least 4 errors, got {}", errors.len())));
    }
    if errors.iter().any(|e| !e.is_finite()) {
        return Err(EvalError::Metrics("non-finite error value".into()));
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let (q1, median, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let inside = s.iter().copied().filter(|&v| v >= lo_fence && v <= hi_fence);
    let whisker_low = inside.clone().fold(f64::INFINITY, f64::min).min(q1);
    let whisker_high = inside.fold(f64::NEG_INFINITY, f64::max).max(q3);
    let outliers = s.iter().filter(|&&v| v < lo_fence || v > hi_fence).count();
    Ok(ErrorDistribution {
        min: s[0],
        whisker_low,
        q1,
        median,
        q3,
        whisker_high,
        max: s[s.len() - 1],
        outliers,
    })
}
