//! Estimation of the original flow-size p.m.f. `f_W` from sampled counts.
//!
//! The estimator `f̂_W = S(f̂_{W_q})` is signed in finite samples and is
//! reported as such; [`project_to_simplex`] is a separate, optional step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::{ln_choose, sum_descending_magnitude, KahanSum};
use crate::pmf::Pmf;
use crate::simulate::{derive_seed, SampledDataset};
use crate::stats::{abs_normal_quantile, nearest_rank};

/// Seed tag for bootstrap replicates of `f̂_W`.
const BOOTSTRAP_TAG: u64 = 0x6657;
/// Consecutive nondecreasing terms after which a theoretical `R_{q,w}` is
/// reported as divergent.
const DIVERGENCE_RUN: usize = 50;
/// Paths stop halving once a node is at or below this value.
pub const PATH_THRESHOLD: f64 = 0.05;

/// A real sequence indexed `1..=w_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedSeq {
    values: Vec<f64>,
}

impl SignedSeq {
    /// `values[0]` is the entry for `w = 1`.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::param("a sequence needs w_max ≥ 1"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::param("sequence entries must be finite"));
        }
        Ok(Self { values })
    }

    pub fn w_max(&self) -> usize {
        self.values.len()
    }

    /// Entry at `w`; zero outside `1..=w_max`.
    pub fn get(&self, w: usize) -> f64 {
        if w == 0 {
            return 0.0;
        }
        self.values.get(w - 1).copied().unwrap_or(0.0)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// `max_{1≤w≤l} |self_w − other_w|`.
    pub fn sup_distance_upto(&self, other: &Self, l: usize) -> f64 {
        (1..=l)
            .map(|w| (self.get(w) - other.get(w)).abs())
            .fold(0.0, f64::max)
    }
}

/// `f̂_{W_q}(s) = #{k : s_k = s} / N` on `0..=max s`.
pub fn empirical_sampled_pmf(ds: &SampledDataset) -> Pmf {
    counts_pmf(ds.counts(), ds.n())
}

pub(crate) fn counts_pmf(counts: impl Iterator<Item = usize>, n: usize) -> Pmf {
    let mut hist: Vec<f64> = Vec::new();
    for s in counts {
        if s >= hist.len() {
            hist.resize(s + 1, 0.0);
        }
        hist[s] += 1.0;
    }
    let n = n as f64;
    Pmf::new_unchecked(0, hist.into_iter().map(|c| c / n).collect(), 0.0)
}

/// `S(x)_w = Σ_{s≥w} C(s,w) (−1)^{s−w} q^{−s} (1−q)^{s−w} x_s`, `w = 1..=w_max`.
/// Terms are summed in descending magnitude with compensation.
pub fn invert_s(x: &Pmf, q: f64, w_max: usize) -> Result<SignedSeq> {
    check_q(q)?;
    if x.tail_mass() > 0.0 {
        return Err(Error::InfiniteSupport(x.tail_mass()));
    }
    let (ln_q, ln_1q) = (q.ln(), (1.0 - q).ln());
    let top = x.max_index();
    let mut terms = Vec::with_capacity(top + 1);
    let values = (1..=w_max.max(1))
        .map(|w| {
            terms.clear();
            for s in w..=top {
                let xs = x.get(s);
                if xs == 0.0 {
                    continue;
                }
                let mag = (ln_choose(s, w) - s as f64 * ln_q + (s - w) as f64 * ln_1q).exp() * xs;
                terms.push(if (s - w) % 2 == 1 { -mag } else { mag });
            }
            sum_descending_magnitude(&mut terms)
        })
        .collect();
    SignedSeq::new(values)
}

fn check_q(q: f64) -> Result<()> {
    if q > 0.0 && q < 1.0 {
        Ok(())
    } else {
        Err(Error::param(format!("q = {q} is not in (0, 1)")))
    }
}

/// Nodes `1−q = z_0 > z_1 > … > z_l = 0`, each inside the disk
/// `|z_k − z_{k−1}| < 1 − z_{k−1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationPath {
    nodes: Vec<f64>,
}

impl ContinuationPath {
    /// Validates a user-supplied path for sampling probability `q`.
    pub fn custom(q: f64, nodes: Vec<f64>) -> Result<Self> {
        check_q(q)?;
        let bad = |m: String| Err(Error::InvalidPath(m));
        if nodes.len() < 2 {
            return bad("a path needs at least two nodes".into());
        }
        if (nodes[0] - (1.0 - q)).abs() > 1e-12 {
            return bad(format!("first node {} must equal 1 − q = {}", nodes[0], 1.0 - q));
        }
        if *nodes.last().unwrap() != 0.0 {
            return bad("last node must be 0".into());
        }
        for (k, w) in nodes.windows(2).enumerate() {
            let (prev, next) = (w[0], w[1]);
            if next >= prev {
                return bad(format!("node {} = {next} does not decrease from {prev}", k + 1));
            }
            if (next - prev).abs() >= 1.0 - prev {
                return bad(format!("node {} = {next} leaves the disk around {prev}", k + 1));
            }
        }
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn stages(&self) -> usize {
        self.nodes.len() - 1
    }
}

/// Default path: halve until a node is at or below 0.05, then step to 0.
/// For `q < 1/3` a half step would leave the disk, so each step is also
/// capped at `0.9(1 − z)`.
pub fn build_path(q: f64) -> Result<ContinuationPath> {
    check_q(q)?;
    let mut nodes = vec![1.0 - q];
    let mut z = 1.0 - q;
    while z > PATH_THRESHOLD + 1e-12 {
        let step = (0.5 * z).min(0.9 * (1.0 - z));
        z -= step;
        nodes.push(z);
    }
    nodes.push(0.0);
    ContinuationPath::custom(q, nodes)
}

/// `T^{(l)}(x)` along `path`: `T^{(0)}_i = x_i / q^i` and
/// `T^{(k)}_n = Σ_{i≥n} C(i,n) T^{(k−1)}_i (z_k − z_{k−1})^{i−n}`, each stage
/// truncated to indices `≤ per_stage_trunc`.
pub fn continuation_invert(
    x: &Pmf,
    q: f64,
    path: &ContinuationPath,
    w_max: usize,
    per_stage_trunc: usize,
) -> Result<SignedSeq> {
    check_q(q)?;
    if (path.nodes()[0] - (1.0 - q)).abs() > 1e-12 {
        return Err(Error::InvalidPath(format!(
            "path starts at {} but 1 − q = {}",
            path.nodes()[0],
            1.0 - q
        )));
    }
    let k_max = per_stage_trunc.max(w_max).max(1);
    // stage[i] for i = 0..=k_max; index 0 is never read
    let mut stage: Vec<f64> = (0..=k_max)
        .map(|i| if i == 0 { 0.0 } else { x.get(i) / q.powi(i as i32) })
        .collect();
    let mut terms = Vec::with_capacity(k_max + 1);
    for w in path.nodes().windows(2) {
        let delta = w[1] - w[0];
        let ln_d = delta.abs().ln();
        let mut next = vec![0.0; k_max + 1];
        for (n, slot) in next.iter_mut().enumerate().skip(1) {
            terms.clear();
            for (i, &t) in stage.iter().enumerate().skip(n) {
                if t == 0.0 {
                    continue;
                }
                let mag = (ln_choose(i, n) + (i - n) as f64 * ln_d).exp() * t;
                terms.push(if (i - n) % 2 == 1 && delta < 0.0 {
                    -mag
                } else {
                    mag
                });
            }
            *slot = sum_descending_magnitude(&mut terms);
        }
        stage = next;
    }
    SignedSeq::new(
        (1..=w_max.max(1))
            .map(|w| stage.get(w).copied().unwrap_or(0.0))
            .collect(),
    )
}

/// `R_{q,w} = Σ_{s≥w} C(s,w)² (1−q)^{2(s−w)} q^{−2s} f_{W_q}(s)`.
///
/// For a law with declared tail mass, `+∞` is returned once the summands have
/// been nondecreasing for 50 consecutive indices.
pub fn risk_r(f_wq: &Pmf, q: f64, w: usize) -> f64 {
    let (ln_q, ln_1q) = (q.ln(), (1.0 - q).ln());
    let mut acc = KahanSum::new();
    let mut prev = 0.0;
    let mut rising = 0;
    for s in w.max(f_wq.min_support())..=f_wq.max_index() {
        let p = f_wq.get(s);
        let t = if p > 0.0 {
            (2.0 * ln_choose(s, w) + 2.0 * (s - w) as f64 * ln_1q - 2.0 * s as f64 * ln_q).exp() * p
        } else {
            0.0
        };
        acc.add(t);
        if f_wq.tail_mass() > 0.0 {
            rising = if t > 0.0 && t >= prev { rising + 1 } else { 0 };
            if rising >= DIVERGENCE_RUN || !acc.value().is_finite() {
                return f64::INFINITY;
            }
        }
        prev = t;
    }
    acc.value()
}

/// Plug-in variance `R̂_{q,w} − f̂_W(w)²`, floored at zero.
pub fn plug_in_variance(f_hat_w: &SignedSeq, f_hat_wq: &Pmf, q: f64, w: usize) -> f64 {
    (risk_r(f_hat_wq, q, w) - f_hat_w.get(w).powi(2)).max(0.0)
}

/// `f̂_W(w) ± z_α N^{−1/2} (R̂_{q,w} − f̂_W(w)²)^{1/2}`.
pub fn normal_ci(f_hat_w: &SignedSeq, f_hat_wq: &Pmf, q: f64, w: usize, alpha: f64, n: usize) -> (f64, f64) {
    let half = abs_normal_quantile(alpha) * (plug_in_variance(f_hat_w, f_hat_wq, q, w) / n as f64).sqrt();
    let f = f_hat_w.get(w);
    (f - half, f + half)
}

/// Bootstrap radius for the simultaneous set `{f : ‖f̂_W − f‖_l ≤ N^{−1/2}·radius}`:
/// the nearest-rank `100α`-th percentile over `B` resamples of
/// `√N · max_{w≤l} |S(f̂*_{W_q})_w − S(f̂_{W_q})_w|`.
pub fn bootstrap_sup_ci(ds: &SampledDataset, l: usize, b: usize, alpha: f64, seed: u64) -> Result<f64> {
    let mut counts: Vec<usize> = ds.counts().collect();
    // canonical order: the radius must not depend on how records are listed
    counts.sort_unstable();
    bootstrap_sup_ci_counts(&counts, ds.q, l, b, alpha, seed)
}

pub(crate) fn bootstrap_sup_ci_counts(
    sorted_counts: &[usize],
    q: f64,
    l: usize,
    b: usize,
    alpha: f64,
    seed: u64,
) -> Result<f64> {
    if l < 1 {
        return Err(Error::param("sup-norm range l must be at least 1"));
    }
    if b < 100 {
        return Err(Error::param(format!("bootstrap needs B ≥ 100, got {b}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha = {alpha} is not in (0, 1)")));
    }
    let n = sorted_counts.len();
    let base = invert_s(&counts_pmf(sorted_counts.iter().copied(), n), q, l)?;
    let root_n = (n as f64).sqrt();
    let mut stats = (0..b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, BOOTSTRAP_TAG, r));
            let draw = (0..n).map(|_| sorted_counts[rng.random_range(0..n)]);
            let star = invert_s(&counts_pmf(draw, n), q, l)?;
            Ok(root_n * star.sup_distance_upto(&base, l))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(nearest_rank(&mut stats, alpha))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Stable,
    Explosive,
    Inconclusive,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Regime::Stable => "stable",
            Regime::Explosive => "explosive",
            Regime::Inconclusive => "inconclusive",
        })
    }
}

/// Engineering thresholds for [`classify_regime`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeThresholds {
    /// Explosive when the fitted log-slope exceeds this multiple of `ln(1/q)`.
    pub explosive_slope_factor: f64,
    /// Stable requires `max_w R̂ / R̂_{first probe}` below this.
    pub stable_max_ratio: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            explosive_slope_factor: 0.5,
            stable_max_ratio: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegimeReport {
    pub r_values: Vec<(usize, f64)>,
    pub variance: Vec<(usize, f64)>,
    pub classification: Regime,
    /// Least-squares slope of `ln R̂_{q,w}` against `w`.
    pub growth_rate: f64,
}

/// Fits `ln R̂_{q,w}` against `w` over the probes with `R̂ > 0`. Explosive if the
/// slope exceeds `ln(1/q)/2`; stable if the slope is `≤ 0` and `R̂` stays
/// within a factor 10 of its first value; inconclusive otherwise.
pub fn classify_regime(f_wq: &Pmf, q: f64, w_probe: &[usize], th: RegimeThresholds) -> Result<RegimeReport> {
    check_q(q)?;
    if w_probe.is_empty() || w_probe.windows(2).any(|w| w[0] >= w[1]) || w_probe[0] == 0 {
        return Err(Error::param("probe indices must be positive and increasing"));
    }
    let w_top = *w_probe.last().unwrap();
    let f_hat_w = invert_s(&f_wq.without_tail(), q, w_top)?;
    let r_values: Vec<(usize, f64)> = w_probe.iter().map(|&w| (w, risk_r(f_wq, q, w))).collect();
    let variance = r_values
        .iter()
        .map(|&(w, r)| (w, (r - f_hat_w.get(w).powi(2)).max(0.0)))
        .collect();

    if r_values.iter().any(|(_, r)| r.is_infinite()) {
        return Ok(RegimeReport {
            r_values,
            variance,
            classification: Regime::Explosive,
            growth_rate: f64::INFINITY,
        });
    }
    let pts: Vec<(f64, f64)> = r_values
        .iter()
        .filter(|(_, r)| *r > 0.0)
        .map(|&(w, r)| (w as f64, r.ln()))
        .collect();
    if pts.len() < 2 {
        return Ok(RegimeReport {
            r_values,
            variance,
            classification: Regime::Inconclusive,
            growth_rate: f64::NAN,
        });
    }
    let slope = least_squares_slope(&pts);
    let first = pts[0].1.exp();
    let max = pts.iter().map(|p| p.1.exp()).fold(0.0, f64::max);
    let classification = if slope > th.explosive_slope_factor * (1.0 / q).ln() {
        Regime::Explosive
    } else if slope <= 0.0 && max / first < th.stable_max_ratio {
        Regime::Stable
    } else {
        Regime::Inconclusive
    };
    Ok(RegimeReport {
        r_values,
        variance,
        classification,
        growth_rate: slope,
    })
}

fn least_squares_slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    sxy / sxx
}

/// Euclidean projection onto `{p ≥ 0, Σp = 1}`. This is a post-processing
/// step, not part of the estimator whose variance the module reports.
pub fn project_to_simplex(f: &SignedSeq) -> SignedSeq {
    let mut sorted = f.values().to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cum += u;
        let t = (cum - 1.0) / (j + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    SignedSeq {
        values: f.values().iter().map(|v| (v - theta).max(0.0)).collect(),
    }
}
