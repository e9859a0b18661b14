//! Log-domain numerics used by every lattice computation.
//!
//! All dynamic programs in this crate run in natural-log space; linear
//! probabilities appear only at file boundaries. `NEG_INFINITY` is the
//! additive identity (probability zero) throughout.

/// Compute `log(Σ exp(v_i))` over a slice of log-domain scores.
///
/// The reduction order is fixed (max-shift, then a single left-to-right
/// pass) so results are bit-reproducible across runs. An empty slice and a
/// slice of only `-inf` both return `-inf`.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for &v in values {
        sum += (v - max).exp();
    }
    max + sum.ln()
}

/// Two-argument [`log_sum_exp`], the common case in lattice recursions.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// Softmax over a slice, max-shifted for stability. Input entries may be
/// any finite scores; the output is a probability distribution.
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|&s| (s - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Index of the largest entry; ties break toward the smallest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}
