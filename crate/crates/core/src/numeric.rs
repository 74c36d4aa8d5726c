//! Small numerical kernels shared by the forward model and the estimators:
//! log-binomials, compensated summation, zeta and polylogarithm values.

use statrs::function::gamma::ln_gamma;

/// Exact `ln(n!)` for small `n`, log-gamma beyond.
pub fn ln_factorial(n: usize) -> f64 {
    const TABLE_LEN: usize = 171;
    thread_local! {
        static TABLE: Vec<f64> = {
            let mut t = vec![0.0; TABLE_LEN];
            let mut acc = 1.0f64;
            for (k, slot) in t.iter_mut().enumerate().skip(1) {
                acc *= k as f64;
                *slot = acc.ln();
            }
            t
        };
    }
    if n < TABLE_LEN {
        TABLE.with(|t| t[n])
    } else {
        ln_gamma(n as f64 + 1.0)
    }
}

/// `ln C(n, k)`; `-inf` when `k > n`.
pub fn ln_choose(n: usize, k: usize) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    if k == 0 || k == n {
        return 0.0;
    }
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// Binomial coefficient as a float.
pub fn choose(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    ln_choose(n, k).exp()
}

/// Kahan–Babuška (Neumaier) accumulator.
#[derive(Debug, Clone, Copy, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// Compensated sum of the terms taken in descending order of magnitude.
pub fn sum_descending_magnitude(terms: &mut [f64]) -> f64 {
    terms.sort_by(|a, b| b.abs().total_cmp(&a.abs()));
    let mut acc = KahanSum::new();
    for &t in terms.iter() {
        acc.add(t);
    }
    acc.value()
}

/// Adaptive stopping rule for slowly decaying positive series: stop once the
/// current term has been below `rel_tol` times the running sum for `patience`
/// consecutive terms.
#[derive(Debug, Clone)]
pub struct TailStop {
    rel_tol: f64,
    patience: usize,
    small_run: usize,
}

impl TailStop {
    pub const REL_TOL: f64 = 1e-15;
    pub const PATIENCE: usize = 50;

    pub fn new() -> Self {
        Self {
            rel_tol: Self::REL_TOL,
            patience: Self::PATIENCE,
            small_run: 0,
        }
    }

    /// Feed one term and the running sum after adding it; returns true when the
    /// summation may stop.
    #[inline]
    pub fn observe(&mut self, term: f64, running: f64) -> bool {
        if running == 0.0 {
            // leading underflowed terms carry no information about the tail
            self.small_run = 0;
        } else if term.abs() < self.rel_tol * running.abs() {
            self.small_run += 1;
        } else {
            self.small_run = 0;
        }
        self.small_run >= self.patience
    }
}

impl Default for TailStop {
    fn default() -> Self {
        Self::new()
    }
}

/// Riemann zeta `ζ(s)` for `s > 1`: direct summation of `10^7` terms plus the
/// midpoint-rule integral for the remainder.
pub fn zeta(s: f64) -> f64 {
    assert!(s > 1.0, "zeta requires s > 1");
    const TERMS: usize = 10_000_000;
    let mut acc = KahanSum::new();
    // smallest terms first
    for k in (1..=TERMS).rev() {
        acc.add((k as f64).powf(-s));
    }
    let tail = (TERMS as f64 + 0.5).powf(1.0 - s) / (s - 1.0);
    acc.add(tail);
    acc.value()
}

/// Polylogarithm `Li_n(a) = Σ_{w≥1} a^w / w^n` for `|a| < 1` and any real order.
/// Terms are summed until the geometric tail bound drops below `1e-17` of the
/// running total.
pub fn polylog(order: f64, a: f64) -> f64 {
    assert!(a.abs() < 1.0, "polylog requires |a| < 1");
    if a == 0.0 {
        return 0.0;
    }
    let ln_a = a.abs().ln();
    // past this index the term ratio is below sqrt(|a|)
    let peak = if order < 0.0 {
        (-order / -ln_a).ceil() as usize
    } else {
        0
    };
    let mut acc = KahanSum::new();
    let mut w = 1usize;
    loop {
        let wf = w as f64;
        let mag = (wf * ln_a - order * wf.ln()).exp();
        let term = if a < 0.0 && w % 2 == 1 { -mag } else { mag };
        acc.add(term);
        if w > peak + 1 {
            let ratio = (ln_a + order.min(0.0).abs() * (1.0 + 1.0 / wf).ln()).exp();
            if ratio < 1.0 {
                let tail_bound = mag * ratio / (1.0 - ratio);
                if tail_bound <= 1e-17 * acc.value().abs().max(1e-300) {
                    break;
                }
            }
        }
        w += 1;
        if w > 100_000_000 {
            break;
        }
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn choose_small_values() {
        assert_eq!(choose(5, 2).round(), 10.0);
        assert!((choose(30, 15) - 155_117_520.0).abs() < 1e-3);
        assert_eq!(choose(3, 5), 0.0);
    }

    #[test]
    fn kahan_recovers_cancelled_mass() {
        let mut terms = vec![1e16, 1.0, -1e16, 1.0];
        assert_eq!(sum_descending_magnitude(&mut terms), 2.0);
    }

    #[test]
    fn zeta_two_and_three_halves() {
        let pi2_6 = std::f64::consts::PI.powi(2) / 6.0;
        assert!((zeta(2.0) - pi2_6).abs() < 1e-12);
        // ζ(2.5) reference value
        assert!((zeta(2.5) - 1.341_487_257_250_917_2).abs() < 1e-12);
    }

    #[test]
    fn polylog_closed_forms() {
        // Li_1(a) = -ln(1-a), Li_0(a) = a/(1-a), Li_{-1}(a) = a/(1-a)^2
        let a = 0.3;
        assert!((polylog(1.0, a) + (1.0f64 - a).ln()).abs() < 1e-15);
        assert!((polylog(0.0, a) - a / (1.0 - a)).abs() < 1e-15);
        assert!((polylog(-1.0, a) - a / (1.0 - a).powi(2)).abs() < 1e-14);
        assert!((polylog(-2.0, 0.9) - 0.9 * 1.9 / 0.1f64.powi(3)).abs() < 1e-9);
    }
}
