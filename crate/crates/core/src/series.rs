//! Truncated formal power series over `f64` coefficients.
//!
//! A [`CoeffSeries`] of order `M` holds the coefficients of `z^0 ..= z^M`.
//! Binary operations truncate to the smaller order of their operands instead
//! of failing on a mismatch, which mirrors working with infinite series whose
//! high-order tail is controlled elsewhere.

use crate::error::{Error, Result};

/// Default truncation order.
pub const DEFAULT_ORDER: usize = 64;

/// Minimum magnitude of the linear coefficient accepted by [`CoeffSeries::revert`].
pub const DEFAULT_REVERT_EPS: f64 = 1e-12;

/// Coefficients `c[0..=M]` of a power series truncated at order `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoeffSeries {
    coeffs: Vec<f64>,
}

impl CoeffSeries {
    /// Builds a series from its coefficients; the order is `coeffs.len() - 1`.
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::param("a series needs at least one coefficient"));
        }
        if let Some(i) = coeffs.iter().position(|c| !c.is_finite()) {
            return Err(Error::param(format!("coefficient {i} is not finite")));
        }
        Ok(Self { coeffs })
    }

    pub fn zeros(order: usize) -> Self {
        Self {
            coeffs: vec![0.0; order + 1],
        }
    }

    /// The series `z`.
    pub fn identity(order: usize) -> Self {
        let mut s = Self::zeros(order);
        if order >= 1 {
            s.coeffs[1] = 1.0;
        }
        s
    }

    /// Series with `c[n] = f(n)`.
    pub fn from_fn(order: usize, f: impl FnMut(usize) -> f64) -> Self {
        Self {
            coeffs: (0..=order).map(f).collect(),
        }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<f64> {
        self.coeffs
    }

    /// Coefficient of `z^n`, zero beyond the truncation order.
    pub fn get(&self, n: usize) -> f64 {
        self.coeffs.get(n).copied().unwrap_or(0.0)
    }

    /// Same coefficients re-truncated (or zero-padded) to `order`.
    pub fn with_order(&self, order: usize) -> Self {
        Self::from_fn(order, |n| self.get(n))
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c * k).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        Self::from_fn(order, |n| self.coeffs[n] + other.coeffs[n])
    }

    pub fn sub(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        Self::from_fn(order, |n| self.coeffs[n] - other.coeffs[n])
    }

    /// Sum of absolute coefficient values.
    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.abs()).sum()
    }

    /// Largest absolute coefficient difference over the common order.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Cauchy product truncated to the smaller order.
    pub fn convolve(&self, other: &Self) -> Self {
        let order = self.order().min(other.order());
        let mut out = vec![0.0; order + 1];
        for (i, &a) in self.coeffs.iter().enumerate().take(order + 1) {
            if a == 0.0 {
                continue;
            }
            for (j, &b) in other.coeffs[..=order - i].iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Self { coeffs: out }
    }

    /// `G_self(G_inner(z))`, by Horner accumulation of truncated products.
    pub fn compose(&self, inner: &Self) -> Result<Self> {
        if inner.coeffs[0] != 0.0 {
            return Err(Error::NonzeroConstantTerm(inner.coeffs[0]));
        }
        let order = self.order().min(inner.order());
        let inner = inner.with_order(order);
        let mut acc = Self::zeros(order);
        for &c in self.coeffs[..=order].iter().rev() {
            acc = acc.convolve(&inner);
            acc.coeffs[0] += c;
        }
        Ok(acc)
    }

    /// `k`-th derivative; the result has order `M - k`.
    pub fn derivative(&self, k: usize) -> Result<Self> {
        let order = self.order();
        if k > order {
            return Err(Error::OrderTooSmall { k, order });
        }
        Ok(Self::from_fn(order - k, |n| {
            let falling: f64 = (0..k).map(|j| (n + k - j) as f64).product();
            self.coeffs[n + k] * falling
        }))
    }

    /// Entrywise absolute values.
    pub fn abs(&self) -> Self {
        Self {
            coeffs: self.coeffs.iter().map(|c| c.abs()).collect(),
        }
    }

    /// Compositional inverse with the default threshold on the linear term.
    pub fn revert(&self) -> Result<Self> {
        self.revert_with(DEFAULT_REVERT_EPS)
    }

    /// Compositional inverse `b` with `b∘a = a∘b = z`, solved order by order.
    ///
    /// At step `n` only `a_1 b_n` involves the new unknown; the powers
    /// `B^k` for `k ≥ 2` are extended by one coefficient per step, so the
    /// whole reversion costs `O(M^3 / 6)` operations.
    pub fn revert_with(&self, eps: f64) -> Result<Self> {
        let order = self.order();
        if self.coeffs[0] != 0.0 {
            return Err(Error::NotRevertible(format!(
                "constant term {} is not zero",
                self.coeffs[0]
            )));
        }
        let a1 = self.get(1);
        if a1.abs() < eps {
            return Err(Error::NotRevertible(format!(
                "linear coefficient {a1:e} is below {eps:e}"
            )));
        }
        let a = &self.coeffs;
        let mut b = vec![0.0; order + 1];
        if order == 0 {
            return Ok(Self { coeffs: b });
        }
        b[1] = 1.0 / a1;
        // powers[k][n] = [z^n] B(z)^k, filled lazily; powers[1] is b itself.
        let mut powers: Vec<Vec<f64>> = vec![Vec::new(); order + 1];
        for (k, row) in powers.iter_mut().enumerate().skip(2) {
            *row = vec![0.0; order + 1];
            if k <= order {
                row[k] = b[1].powi(k as i32);
            }
        }
        for n in 2..=order {
            let mut acc = 0.0;
            for k in 2..=n {
                if k < n {
                    let mut v = 0.0;
                    for j in 1..=(n - k + 1) {
                        let prev = if k - 1 == 1 {
                            b[n - j]
                        } else {
                            powers[k - 1][n - j]
                        };
                        v += b[j] * prev;
                    }
                    powers[k][n] = v;
                }
                acc += a[k] * powers[k][n];
            }
            b[n] = -acc / a1;
        }
        if let Some(i) = b.iter().position(|c| !c.is_finite()) {
            return Err(Error::NotRevertible(format!(
                "coefficient {i} of the reversion overflowed"
            )));
        }
        Ok(Self { coeffs: b })
    }
}

/// Both sides of the first- and second-order remainder inequalities for
/// `x∘(y+ε)` at coefficient `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderCheck {
    pub first_order_lhs: f64,
    pub first_order_rhs: f64,
    pub second_order_lhs: f64,
    pub second_order_rhs: f64,
}

impl RemainderCheck {
    pub fn holds(&self, slack: f64) -> bool {
        self.first_order_lhs <= self.first_order_rhs + slack
            && self.second_order_lhs <= self.second_order_rhs + slack
    }
}

/// Evaluates
/// `|(x∘(y+ε) − x∘y)_n|` against `((x₊′∘(y₊+ε₊)) * ε₊)_n`, and
/// `|(x∘(y+ε) − x∘y − (x′∘y)*ε)_n|` against `½((x₊″∘(y₊+ε₊)) * ε₊ * ε₊)_n`.
///
/// Inputs are treated as polynomials, so every coefficient up to the common
/// order is exact regardless of the derivative order loss.
pub fn taylor_remainder_check(
    x: &CoeffSeries,
    y: &CoeffSeries,
    eps: &CoeffSeries,
    n: usize,
) -> Result<RemainderCheck> {
    for s in [x, y, eps] {
        if s.get(0) != 0.0 {
            return Err(Error::NonzeroConstantTerm(s.get(0)));
        }
    }
    let order = x.order().min(y.order()).min(eps.order());
    if n > order {
        return Err(Error::param(format!(
            "coefficient index {n} exceeds common order {order}"
        )));
    }
    let padded = order + 2;
    let (x, y, e) = (x.with_order(padded), y.with_order(padded), eps.with_order(padded));
    let (xp, yp, ep) = (x.abs(), y.abs(), e.abs());

    let shifted = x.compose(&y.add(&e))?;
    let base = x.compose(&y)?;
    let diff = shifted.sub(&base);

    let x1 = x.derivative(1)?.with_order(padded);
    let x1p = xp.derivative(1)?.with_order(padded);
    let x2p = xp.derivative(2)?.with_order(padded);
    let envelope = yp.add(&ep);

    let first_rhs = x1p.compose(&envelope)?.convolve(&ep);
    let linear = x1.compose(&y)?.convolve(&e);
    let second_lhs = diff.sub(&linear);
    let second_rhs = x2p.compose(&envelope)?.convolve(&ep).convolve(&ep).scale(0.5);

    Ok(RemainderCheck {
        first_order_lhs: diff.get(n).abs(),
        first_order_rhs: first_rhs.get(n),
        second_order_lhs: second_lhs.get(n).abs(),
        second_order_rhs: second_rhs.get(n),
    })
}
