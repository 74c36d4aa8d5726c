//! Forward direction of thinning: laws of the sampled count and of the sampled
//! gaps given the original model.
//!
//! Sums over the original size `w` run over the explicit support of `f_W`
//! and stop early once the summands are negligible (see [`TailStop`]).

use crate::error::{Error, Result};
use crate::grid::GridCdf;
use crate::numeric::{ln_choose, polylog, KahanSum, TailStop};
use crate::pmf::Pmf;
use crate::series::CoeffSeries;

/// Largest admissible coefficient shortfall `1 − Σ_m A_{s,m}`.
pub const MAX_SHORTFALL: f64 = 1e-6;
/// Default truncation for mixing coefficient series.
pub const DEFAULT_M_MAX: usize = 64;
/// Default stopping tolerance on the remaining coefficient mass.
pub const DEFAULT_TRUNC_TOL: f64 = 1e-8;

/// Sums `term(w, f_W(w))` over `w ≥ start` with adaptive truncation. Zero
/// probabilities are skipped so that gaps in an explicit support do not
/// trigger the stopping rule.
fn sum_over_sizes(f_w: &Pmf, start: usize, term: impl Fn(usize, f64) -> f64) -> f64 {
    let mut acc = KahanSum::new();
    let mut stop = TailStop::new();
    for w in start.max(f_w.min_support())..=f_w.max_index() {
        let p = f_w.get(w);
        if p == 0.0 {
            continue;
        }
        let t = term(w, p);
        acc.add(t);
        if stop.observe(t, acc.value()) {
            break;
        }
    }
    acc.value()
}

/// `ln P(Bin(n, q) = k)`.
#[inline]
fn ln_binom_pmf(n: usize, k: usize, ln_q: f64, ln_1q: f64) -> f64 {
    ln_choose(n, k) + k as f64 * ln_q + (n - k) as f64 * ln_1q
}

/// `P(Bin(n, q) ≥ k)`, summing whichever side of the split is shorter.
pub fn binom_sf(n: usize, k: usize, q: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let (ln_q, ln_1q) = (q.ln(), (1.0 - q).ln());
    let mut acc = KahanSum::new();
    if n - k + 1 <= k {
        for j in k..=n {
            acc.add(ln_binom_pmf(n, j, ln_q, ln_1q).exp());
        }
        acc.value().min(1.0)
    } else {
        for j in 0..k {
            acc.add(ln_binom_pmf(n, j, ln_q, ln_1q).exp());
        }
        (1.0 - acc.value()).max(0.0)
    }
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("q = {q} is not in (0, 1)")))
    }
}

/// `f_{W_q}(s) = Σ_{w≥s} C(w,s) q^s (1−q)^{w−s} f_W(w)` for `s = 0..=s_max`.
pub fn sampled_size_pmf(f_w: &Pmf, q: f64, s_max: usize) -> Result<Pmf> {
    check_q(q)?;
    let s_max = s_max.max(1);
    let (ln_q, ln_1q) = (q.ln(), (1.0 - q).ln());
    let probs: Vec<f64> = (0..=s_max)
        .map(|s| sum_over_sizes(f_w, s, |w, p| p * ln_binom_pmf(w, s, ln_q, ln_1q).exp()))
        .collect();
    let tail = if s_max >= f_w.max_index() {
        f_w.tail_mass()
    } else {
        let explicit: f64 = probs.iter().sum();
        (1.0 - explicit).max(0.0)
    };
    Ok(Pmf::new_unchecked(0, probs, tail))
}

/// `P(W_q ≥ s) = 1 − Σ_{s'<s} f_{W_q}(s')`, which keeps the tail mass of `f_W`.
pub fn sampled_survival(f_w: &Pmf, q: f64, s: usize) -> Result<f64> {
    if s == 0 {
        return Ok(1.0);
    }
    let head = sampled_size_pmf(f_w, q, s - 1)?;
    let below: f64 = head.probs()[..s].iter().sum();
    Ok((1.0 - below).max(0.0))
}

fn conditioning_mass(f_wq: &Pmf, s: usize) -> Result<f64> {
    let p = f_wq.get(s);
    if p > 0.0 {
        Ok(p)
    } else {
        Err(Error::ZeroConditioningMass(format!("P(W_q = {s}) = 0")))
    }
}

fn check_shortfall(coeffs: &[f64], total: f64, what: &str) -> Result<()> {
    let shortfall = 1.0 - total;
    if shortfall >= MAX_SHORTFALL {
        return Err(Error::TailTooHeavy(format!(
            "{what}: coefficients up to order {} leave mass {shortfall:e}",
            coeffs.len() - 1
        )));
    }
    Ok(())
}

/// `A_{s,m} = q^s / f_{W_q}(s) · Σ_{w≥s+m−1} f_W(w) C(w−m, s−1) (1−q)^{w−s}`,
/// the law of the number of original gaps spanned by one sampled gap given
/// `W_q = s`; the gap index does not enter.
pub fn gap_mix_coeffs(f_w: &Pmf, f_wq: &Pmf, q: f64, s: usize, m_max: usize) -> Result<CoeffSeries> {
    check_q(q)?;
    if s < 2 {
        return Err(Error::param("conditioning on W_q = s needs s ≥ 2"));
    }
    let ln_pref = s as f64 * q.ln() - conditioning_mass(f_wq, s)?.ln();
    let ln_1q = (1.0 - q).ln();
    let coeffs = exact_coeffs(f_w, s, m_max, |w, m, p| {
        p * (ln_pref + ln_choose(w - m, s - 1) + (w - s) as f64 * ln_1q).exp()
    });
    let total: f64 = coeffs.iter().sum();
    check_shortfall(&coeffs, total, &format!("A_{s}"))?;
    CoeffSeries::new(coeffs)
}

fn exact_coeffs(f_w: &Pmf, s: usize, m_max: usize, term: impl Fn(usize, usize, f64) -> f64) -> Vec<f64> {
    let mut coeffs = vec![0.0; m_max + 1];
    for (m, slot) in coeffs.iter_mut().enumerate().skip(1) {
        *slot = sum_over_sizes(f_w, s + m - 1, |w, p| term(w, m, p));
    }
    coeffs
}

/// `A_{s⁺,m}`: the same law given `W_q ≥ s`,
/// `q(1−q)^{m−1}/P(W_q≥s) · Σ_{w≥m+s−1} f_W(w) P(Bin(w−m, q) ≥ s−1)`.
pub fn gap_mix_coeffs_geq(f_w: &Pmf, q: f64, s: usize, m_max: usize) -> Result<CoeffSeries> {
    check_q(q)?;
    if s < 2 {
        return Err(Error::param("conditioning on W_q ≥ s needs s ≥ 2"));
    }
    let denom = sampled_survival(f_w, q, s)?;
    if denom <= 0.0 {
        return Err(Error::ZeroConditioningMass(format!("P(W_q ≥ {s}) = 0")));
    }
    let coeffs = geq_coeffs(f_w, q, s, m_max, denom);
    let total: f64 = coeffs.iter().sum();
    check_shortfall(&coeffs, total, &format!("A_{s}+"))?;
    CoeffSeries::new(coeffs)
}

fn geq_coeffs(f_w: &Pmf, q: f64, s: usize, m_max: usize, denom: f64) -> Vec<f64> {
    let mut coeffs = vec![0.0; m_max + 1];
    for (m, slot) in coeffs.iter_mut().enumerate().skip(1) {
        let pref = q * (1.0 - q).powi(m as i32 - 1) / denom;
        // beyond the explicit support the bracket is 1 to working precision
        let body = sum_over_sizes(f_w, m + s - 1, |w, p| p * binom_sf(w - m, s - 1, q));
        *slot = pref * (body + f_w.tail_mass());
    }
    coeffs
}

/// `B_{s,𝐦}` for `n` consecutive sampled gaps given `W_q = s`. The value
/// depends on `𝐦` only through its total, so it is stored by total.
#[derive(Debug, Clone, PartialEq)]
pub struct JointGapCoeffs {
    s: usize,
    n: usize,
    /// `by_total[m]` for `m = 0..=m_total_max`; zero below `m = n`.
    by_total: Vec<f64>,
}

impl JointGapCoeffs {
    pub fn s(&self) -> usize {
        self.s
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m_total_max(&self) -> usize {
        self.by_total.len() - 1
    }

    /// `B_{s,m}` as a function of the total `m = m_1 + … + m_n`.
    pub fn by_total(&self, m: usize) -> f64 {
        self.by_total.get(m).copied().unwrap_or(0.0)
    }

    /// `B_{s,𝐦}`; zero if any `m_j = 0` or the total exceeds the stored range.
    pub fn get(&self, ms: &[usize]) -> f64 {
        assert_eq!(ms.len(), self.n, "index has the wrong dimension");
        if ms.contains(&0) {
            return 0.0;
        }
        self.by_total(ms.iter().sum())
    }

    /// `Σ_𝐦 B_{s,𝐦}`: each total `m` is shared by `C(m−1, n−1)` indices.
    pub fn total_mass(&self) -> f64 {
        let mut acc = KahanSum::new();
        for (m, &b) in self.by_total.iter().enumerate().skip(self.n) {
            acc.add(b * ln_choose(m - 1, self.n - 1).exp());
        }
        acc.value()
    }
}

/// `B_{s,𝐦} = q^s / f_{W_q}(s) · Σ_{w≥s+m−n} f_W(w) C(w−m, s−n) (1−q)^{w−s}`.
pub fn joint_gap_coeffs(
    f_w: &Pmf,
    f_wq: &Pmf,
    q: f64,
    s: usize,
    n: usize,
    m_total_max: usize,
) -> Result<JointGapCoeffs> {
    check_q(q)?;
    if n < 1 || n + 1 > s {
        return Err(Error::param(format!(
            "joint law of {n} gaps needs 1 ≤ n < s = {s}"
        )));
    }
    let ln_pref = s as f64 * q.ln() - conditioning_mass(f_wq, s)?.ln();
    let ln_1q = (1.0 - q).ln();
    let mut by_total = vec![0.0; m_total_max + 1];
    for (m, slot) in by_total.iter_mut().enumerate().skip(n) {
        *slot = sum_over_sizes(f_w, s + m - n, |w, p| {
            p * (ln_pref + ln_choose(w - m, s - n) + (w - s) as f64 * ln_1q).exp()
        });
    }
    let b = JointGapCoeffs { s, n, by_total };
    let total = b.total_mass();
    if 1.0 - total >= MAX_SHORTFALL {
        return Err(Error::TailTooHeavy(format!(
            "B_{s}: totals up to {m_total_max} leave mass {:e}",
            1.0 - total
        )));
    }
    Ok(b)
}

/// `C_m = q² / P(W_q≥2) · Σ_{w≥m+1} f_W(w) (w−m) (1−q)^{w−m−1}`: the law of
/// the number of original gaps between the first and last sampled renewals.
pub fn duration_coeffs(f_w: &Pmf, q: f64, m_max: usize) -> Result<CoeffSeries> {
    check_q(q)?;
    let denom = sampled_survival(f_w, q, 2)?;
    if denom <= 0.0 {
        return Err(Error::ZeroConditioningMass("P(W_q ≥ 2) = 0".into()));
    }
    let ln_1q = (1.0 - q).ln();
    let pref = q * q / denom;
    let mut coeffs = vec![0.0; m_max + 1];
    for (m, slot) in coeffs.iter_mut().enumerate().skip(1) {
        *slot = pref
            * sum_over_sizes(f_w, m + 1, |w, p| {
                p * (w - m) as f64 * ((w - m - 1) as f64 * ln_1q).exp()
            });
    }
    CoeffSeries::new(coeffs)
}

/// `F_{D_{q,i}|s} = Σ_m A_{s,m} F_D^{*m}`, stopping once the coefficient mass
/// not yet added is below `trunc_tol`.
pub fn conditional_gap_cdf(f_d: &GridCdf, a_s: &CoeffSeries, trunc_tol: f64) -> GridCdf {
    let coeffs = a_s.coeffs();
    // remaining[m] = Σ_{k>m} |A_k|
    let mut remaining = vec![0.0; coeffs.len()];
    for m in (0..coeffs.len() - 1).rev() {
        remaining[m] = remaining[m + 1] + coeffs[m + 1].abs();
    }
    let mut out = GridCdf::zero(f_d.grid());
    if coeffs.len() < 2 {
        return out;
    }
    let mut power = f_d.clone();
    for m in 1..coeffs.len() {
        if m > 1 {
            power = power.convolve(f_d);
        }
        out.add_scaled(&power, coeffs[m]);
        if remaining[m] < trunc_tol {
            break;
        }
    }
    out
}

/// Geometric size law: `A_{s,m} = (1−ρ) ρ^{m−1}` with `ρ = c(1−q)`, for any `s`.
pub fn geometric_mix_coeffs(c: f64, q: f64, m_max: usize) -> CoeffSeries {
    let rho = c * (1.0 - q);
    CoeffSeries::from_fn(m_max, |m| {
        if m == 0 {
            0.0
        } else {
            (1.0 - rho) * rho.powi(m as i32 - 1)
        }
    })
}

fn pareto_denominator(alpha: f64, a: f64) -> f64 {
    polylog(alpha - 2.0, a) - 3.0 * polylog(alpha - 1.0, a) + 2.0 * polylog(alpha, a)
}

/// Closed form of `A_{3,1}` for the discrete Pareto size law.
pub fn pareto_a31(alpha: f64, q: f64) -> f64 {
    let a = 1.0 - q;
    let num = polylog(alpha - 1.0, a) - 3.0 * polylog(alpha, a) + 2.0 * polylog(alpha + 1.0, a);
    3.0 * num / pareto_denominator(alpha, a)
}

/// Closed form of `B_{3,(1,1)}` for the discrete Pareto size law.
pub fn pareto_b311(alpha: f64, q: f64) -> f64 {
    let a = 1.0 - q;
    let num = a + polylog(alpha, a) - 2.0 * polylog(alpha + 1.0, a);
    6.0 * num / pareto_denominator(alpha, a)
}

/// Normalized tail sequences for a size law with `f_W(w) ~ cα w^{−α−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct HeavyTailReport {
    pub alpha: f64,
    pub q: f64,
    pub s: usize,
    /// `(w, P(W_q > w)·w^α)`; limit `q^α c`.
    pub survival: Vec<(usize, f64)>,
    /// `(m, C_m·m^{α+1})`; limit `cα / P(W_q ≥ 2)`.
    pub duration: Vec<(usize, f64)>,
    /// `(m, A_{s,m}·m^{α+1}/(1−q)^m)`; limit `cα / (f_{W_q}(s)(1−q))`.
    pub gap_mix: Vec<(usize, f64)>,
    pub survival_limit: f64,
    pub duration_limit: f64,
    pub gap_mix_limit: f64,
}

impl HeavyTailReport {
    fn lookup(seq: &[(usize, f64)], k: usize) -> Option<f64> {
        seq.iter().find(|(i, _)| *i == k).map(|(_, v)| *v)
    }

    pub fn survival_at(&self, w: usize) -> Option<f64> {
        Self::lookup(&self.survival, w)
    }

    pub fn duration_at(&self, m: usize) -> Option<f64> {
        Self::lookup(&self.duration, m)
    }

    pub fn gap_mix_at(&self, m: usize) -> Option<f64> {
        Self::lookup(&self.gap_mix, m)
    }
}

/// `1, 1.25, 1.5, 2, 2.5, 3, 4, 5, 6, 8, 10, …` up to `max`, rounded.
pub fn log_spaced_indices(max: usize) -> Vec<usize> {
    const MANTISSAS: [f64; 10] = [1.0, 1.25, 1.5, 2.0, 2.5, 3.0, 4.0, 5.0, 6.0, 8.0];
    let mut out = Vec::new();
    let mut decade = 1.0;
    'outer: loop {
        for m in MANTISSAS {
            let k = (m * decade).round() as usize;
            if k > max {
                break 'outer;
            }
            if out.last() != Some(&k) {
                out.push(k);
            }
        }
        decade *= 10.0;
    }
    out
}

/// Tail diagnostics for `f_W` given explicitly up to a large `w_max` (its
/// tail mass is treated as lying beyond every probed index). `alpha` and `c`
/// describe the assumed tail `f_W(w) ~ cα w^{−α−1}`; for a light-tailed law
/// the sequences drift away from the reported limits.
pub fn heavy_tail_diagnostics(
    f_w: &Pmf,
    alpha: f64,
    c: f64,
    q: f64,
    s: usize,
    index_max: usize,
) -> Result<HeavyTailReport> {
    check_q(q)?;
    if !(alpha > 0.0 && c > 0.0) {
        return Err(Error::param("tail parameters must be positive"));
    }
    let indices = log_spaced_indices(index_max);
    let s_cap = (index_max as f64 / q * 2.0) as usize + 200;
    let f_wq = sampled_size_pmf(f_w, q, s_cap.min(f_w.max_index()).max(s))?;

    let survival = indices
        .iter()
        .map(|&w| (w, sampled_survival_above(f_w, q, w) * (w as f64).powf(alpha)))
        .collect();

    let c_series = duration_coeffs(f_w, q, index_max)?;
    let duration = indices
        .iter()
        .map(|&m| (m, c_series.get(m) * (m as f64).powf(alpha + 1.0)))
        .collect();

    let ln_pref = s as f64 * q.ln() - conditioning_mass(&f_wq, s)?.ln();
    let ln_1q = (1.0 - q).ln();
    let gap_mix = indices
        .iter()
        .map(|&m| {
            let a = sum_over_sizes(f_w, s + m - 1, |w, p| {
                p * (ln_pref + ln_choose(w - m, s - 1) + (w - s) as f64 * ln_1q).exp()
            });
            (m, a * (m as f64).powf(alpha + 1.0) / (1.0 - q).powi(m as i32))
        })
        .collect();

    Ok(HeavyTailReport {
        alpha,
        q,
        s,
        survival,
        duration,
        gap_mix,
        survival_limit: q.powf(alpha) * c,
        duration_limit: c * alpha / sampled_survival(f_w, q, 2)?,
        gap_mix_limit: c * alpha / (f_wq.get(s) * (1.0 - q)),
    })
}

/// `P(W_q > w) = Σ_{w'} f_W(w') P(Bin(w', q) > w)`, plus the tail mass of `f_W`.
fn sampled_survival_above(f_w: &Pmf, q: f64, w: usize) -> f64 {
    let mut acc = KahanSum::new();
    for v in (w + 1).max(f_w.min_support())..=f_w.max_index() {
        let sf = binom_sf(v, w + 1, q);
        if sf > 1.0 - 1e-15 {
            acc.add(f_w.survival(v));
            return acc.value();
        }
        acc.add(f_w.get(v) * sf);
    }
    acc.add(f_w.tail_mass());
    acc.value()
}
