//! Log-space scalar helpers shared by inference and the objectives.

/// Temperatures below this are treated as the exact max (zero-temperature)
/// limit everywhere; `exp(s/ε)` is never evaluated for smaller ε.
pub const TEMP_SNAP: f64 = 1e-6;

#[cfg(feature = "std")]
#[inline]
pub fn exp(x: f64) -> f64 {
    x.exp()
}

#[cfg(not(feature = "std"))]
#[inline]
pub fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn ln(x: f64) -> f64 {
    x.ln()
}

#[cfg(not(feature = "std"))]
#[inline]
pub fn ln(x: f64) -> f64 {
    libm::log(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn sqrt(x: f64) -> f64 {
    x.sqrt()
}

#[cfg(not(feature = "std"))]
#[inline]
pub fn sqrt(x: f64) -> f64 {
    libm::sqrt(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn log2(x: f64) -> f64 {
    x.log2()
}

#[cfg(not(feature = "std"))]
#[inline]
pub fn log2(x: f64) -> f64 {
    libm::log2(x)
}

#[cfg(feature = "std")]
#[inline]
pub fn ceil(x: f64) -> f64 {
    x.ceil()
}

#[cfg(not(feature = "std"))]
#[inline]
pub fn ceil(x: f64) -> f64 {
    libm::ceil(x)
}

/// `log Σ exp(v)` with the max-shift trick; `-inf` for an empty slice.
pub fn logsumexp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|&v| exp(v - m)).sum();
    m + ln(s)
}

/// Temperature-weighted reduction over `values`: `ρ·log Σ exp(v/ρ)` for
/// ρ ≥ [`TEMP_SNAP`], exact max below it.
pub fn weighted_lse(values: &[f64], rho: f64) -> f64 {
    if rho < TEMP_SNAP {
        values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    } else {
        let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if !m.is_finite() {
            return m;
        }
        let s: f64 = values.iter().map(|&v| exp((v - m) / rho)).sum();
        m + rho * ln(s)
    }
}

/// Streaming log-sum-exp accumulator, used by the enumeration oracle so it
/// never materializes the full state space.
#[derive(Clone, Copy, Debug)]
pub struct LseAccumulator {
    max: f64,
    sum: f64,
}

impl LseAccumulator {
    pub fn new() -> Self {
        LseAccumulator {
            max: f64::NEG_INFINITY,
            sum: 0.0,
        }
    }

    pub fn push(&mut self, v: f64) {
        if v <= self.max {
            self.sum += exp(v - self.max);
        } else {
            self.sum = self.sum * exp(self.max - v) + 1.0;
            self.max = v;
        }
    }

    pub fn value(&self) -> f64 {
        if self.max.is_finite() {
            self.max + ln(self.sum)
        } else {
            self.max
        }
    }
}

impl Default for LseAccumulator {
    fn default() -> Self {
        Self::new()
    }
}

/// Normalizes `scores` (log space) into a probability vector in place.
pub fn normalize_log(scores: &mut [f64]) {
    let z = logsumexp(scores);
    for s in scores.iter_mut() {
        *s = exp(*s - z);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lse_matches_direct() {
        let v: [f64; 4] = [0.3, -1.2, 2.5, 0.0];
        let direct = (v.iter().map(|x| x.exp()).sum::<f64>()).ln();
        assert!((logsumexp(&v) - direct).abs() < 1e-12);
        let mut acc = LseAccumulator::new();
        for x in v {
            acc.push(x);
        }
        assert!((acc.value() - direct).abs() < 1e-12);
    }

    #[test]
    fn weighted_lse_limits() {
        let v = [1.0, 2.0, -0.5];
        assert!((weighted_lse(&v, 1.0) - logsumexp(&v)).abs() < 1e-12);
        assert_eq!(weighted_lse(&v, 0.0), 2.0);
        // small but above snap: max + O(rho)
        let r = weighted_lse(&v, 1e-3);
        assert!(r >= 2.0 && r < 2.0 + 1e-2);
        // huge scores at tiny temperature must not overflow
        let big = [1e6, 2e6];
        assert!(weighted_lse(&big, 1e-3).is_finite());
    }
}
