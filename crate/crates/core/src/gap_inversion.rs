//! Decompounding estimator of the original inter-renewal CDF `F_D`.
//!
//! Pipeline: `f̂_{W_q}` → `f̂_W = S(f̂_{W_q})` → plug-in mixing series `Â_s`
//! → reversion `â_s` → empirical conditional gap CDF `F̂` →
//! `F̂_D = Σ_{n≤n*} â_{s,n} F̂^{*n}`. The result is reported raw: it may be
//! locally decreasing or leave `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::binom_sf;
use crate::grid::{GridCdf, GridSpec};
use crate::numeric::{ln_choose, KahanSum};
use crate::pmf::Pmf;
use crate::series::CoeffSeries;
use crate::simulate::{derive_seed, FlowRecord, SampledDataset};
use crate::size_inversion::{counts_pmf, invert_s, SignedSeq};
use crate::stats::nearest_rank;

/// Seed tag for bootstrap replicates of `F̂_D`.
const BOOTSTRAP_TAG: u64 = 0x6644;
/// Below this many conditioning records the estimate carries a warning.
pub const MIN_CONDITIONING_RECORDS: usize = 30;
/// Largest tolerated relative reversion residual over the orders used in `F̂_D`.
pub const MAX_REVERSION_RESIDUAL: f64 = 1e-8;

/// Which sampled flows contribute gap observations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Conditioning {
    /// `W_q = s`.
    Exact(usize),
    /// `W_q ≥ s`, pooling the `i`-th gap of every such flow.
    AtLeast(usize),
}

impl Conditioning {
    pub fn s(self) -> usize {
        match self {
            Conditioning::Exact(s) | Conditioning::AtLeast(s) => s,
        }
    }

    fn admits(self, count: usize) -> bool {
        match self {
            Conditioning::Exact(s) => count == s,
            Conditioning::AtLeast(s) => count >= s,
        }
    }
}

impl fmt::Display for Conditioning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Conditioning::Exact(s) => write!(f, "s={s}"),
            Conditioning::AtLeast(s) => write!(f, "s>={s}"),
        }
    }
}

impl FromStr for Conditioning {
    type Err = Error;

    /// Accepts `s=2`, `s>=2`, or a bare `2`.
    fn from_str(text: &str) -> Result<Self> {
        let t = text.trim();
        let t = t.strip_prefix('s').unwrap_or(t).trim_start();
        let (geq, rest) = match t.strip_prefix(">=") {
            Some(r) => (true, r),
            None => (false, t.strip_prefix('=').unwrap_or(t)),
        };
        let s: usize = rest
            .trim()
            .parse()
            .map_err(|_| Error::param(format!("bad conditioning `{text}`; expected s=K or s>=K")))?;
        Ok(if geq {
            Conditioning::AtLeast(s)
        } else {
            Conditioning::Exact(s)
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecompoundConfig {
    pub cond: Conditioning,
    /// 1-based gap index.
    pub i: usize,
    pub n_max: usize,
    pub trunc_tol: f64,
    pub grid: GridSpec,
    pub bootstrap_b: usize,
}

impl Default for DecompoundConfig {
    fn default() -> Self {
        Self {
            cond: Conditioning::Exact(2),
            i: 1,
            n_max: 64,
            trunc_tol: 1e-8,
            grid: GridSpec::DEFAULT,
            bootstrap_b: 999,
        }
    }
}

impl DecompoundConfig {
    pub fn validate(&self) -> Result<()> {
        let s = self.cond.s();
        if s < 2 {
            return Err(Error::param(format!("conditioning {} needs s ≥ 2", self.cond)));
        }
        if self.i < 1 || self.i >= s {
            return Err(Error::param(format!(
                "gap index i = {} must be in 1..{s}",
                self.i
            )));
        }
        if self.n_max < 1 {
            return Err(Error::param("n_max must be at least 1"));
        }
        if !(self.trunc_tol > 0.0) {
            return Err(Error::param("trunc_tol must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostics {
    pub n_star: usize,
    /// `sup_t F^{*(n*+1)}(t) · Σ_{n*<k≤n_max} |â_k|`, a bound on the
    /// truncation error of `F̂_D` on the grid.
    pub tail_bound: f64,
    pub monotonicity_violations: usize,
    /// `max_n |[z^n](â∘Â − z)|` for `n ≤ n*`.
    pub reversion_residual: f64,
    /// The same, with coefficient `n` divided by `max(1, [z^n](|â|∘|Â|))`.
    pub relative_reversion_residual: f64,
    pub conditioning_records: usize,
    pub warning: Option<String>,
}

/// `Â_{s,n} = q^s / f̂_{W_q}(s) · Σ_{w≥s+n−1} f̂_W(w) C(w−n, s−1) (1−q)^{w−s}`.
pub fn empirical_a_hat(
    f_hat_w: &SignedSeq,
    f_hat_wq: &Pmf,
    q: f64,
    s: usize,
    n_max: usize,
) -> Result<CoeffSeries> {
    let mass = f_hat_wq.get(s);
    if mass <= 0.0 {
        return Err(Error::ZeroConditioningMass(format!(
            "no sampled flows with W_q = {s}"
        )));
    }
    let ln_pref = s as f64 * q.ln() - mass.ln();
    let ln_1q = (1.0 - q).ln();
    CoeffSeries::new(plug_in_coeffs(f_hat_w, s, n_max, |w, n| {
        (ln_pref + ln_choose(w - n, s - 1) + (w - s) as f64 * ln_1q).exp()
    }))
}

/// Plug-in `A_{s⁺,n} = q(1−q)^{n−1} / P̂(W_q≥s) · Σ_{w≥n+s−1} f̂_W(w) P(Bin(w−n, q) ≥ s−1)`.
pub fn empirical_a_hat_geq(
    f_hat_w: &SignedSeq,
    f_hat_wq: &Pmf,
    q: f64,
    s: usize,
    n_max: usize,
) -> Result<CoeffSeries> {
    let mass = f_hat_wq.survival(s);
    if mass <= 0.0 {
        return Err(Error::ZeroConditioningMass(format!(
            "no sampled flows with W_q ≥ {s}"
        )));
    }
    CoeffSeries::new(plug_in_coeffs(f_hat_w, s, n_max, |w, n| {
        q * (1.0 - q).powi(n as i32 - 1) / mass * binom_sf(w - n, s - 1, q)
    }))
}

fn plug_in_coeffs(
    f_hat_w: &SignedSeq,
    s: usize,
    n_max: usize,
    weight: impl Fn(usize, usize) -> f64,
) -> Vec<f64> {
    let mut coeffs = vec![0.0; n_max + 1];
    for (n, slot) in coeffs.iter_mut().enumerate().skip(1) {
        let mut acc = KahanSum::new();
        for w in (s + n - 1)..=f_hat_w.w_max() {
            let f = f_hat_w.get(w);
            if f != 0.0 {
                acc.add(f * weight(w, n));
            }
        }
        *slot = acc.value();
    }
    coeffs
}

/// Empirical CDF of the `i`-th gap (1-based) over records admitted by `cond`,
/// normalized by the number of such records.
pub fn empirical_conditional_cdf(
    ds: &SampledDataset,
    cond: Conditioning,
    i: usize,
    grid: GridSpec,
) -> Result<GridCdf> {
    let refs: Vec<&FlowRecord> = ds.records.iter().collect();
    conditional_cdf_of(&refs, cond, i, grid).map(|(f, _)| f)
}

fn conditional_cdf_of(
    records: &[&FlowRecord],
    cond: Conditioning,
    i: usize,
    grid: GridSpec,
) -> Result<(GridCdf, usize)> {
    if i < 1 || i >= cond.s() {
        return Err(Error::param(format!(
            "gap index i = {i} must be in 1..{}",
            cond.s()
        )));
    }
    let gaps: Vec<f64> = records
        .iter()
        .filter(|r| cond.admits(r.sampled_count))
        .map(|r| r.gaps[i - 1])
        .collect();
    if gaps.is_empty() {
        return Err(Error::ZeroConditioningMass(format!(
            "no sampled flows with {cond}"
        )));
    }
    let n = gaps.len();
    Ok((GridCdf::empirical(grid, gaps, n as f64), n))
}

/// `F̂_D` for conditioning `W_q = s` (or `W_q ≥ s`, see [`decompound_geq`]).
pub fn decompound(ds: &SampledDataset, cfg: &DecompoundConfig) -> Result<(GridCdf, Diagnostics)> {
    cfg.validate()?;
    let refs: Vec<&FlowRecord> = ds.records.iter().collect();
    pipeline(&refs, ds.q, cfg)
}

/// [`decompound`] with `AtLeast(s)` conditioning; an `Exact(s)` spec in `cfg`
/// is promoted.
pub fn decompound_geq(ds: &SampledDataset, cfg: &DecompoundConfig) -> Result<(GridCdf, Diagnostics)> {
    let cfg = DecompoundConfig {
        cond: Conditioning::AtLeast(cfg.cond.s()),
        ..*cfg
    };
    decompound(ds, &cfg)
}

fn pipeline(records: &[&FlowRecord], q: f64, cfg: &DecompoundConfig) -> Result<(GridCdf, Diagnostics)> {
    let s = cfg.cond.s();
    let f_hat_wq = counts_pmf(records.iter().map(|r| r.sampled_count), records.len());
    let w_top = f_hat_wq.max_index().max(1);
    let f_hat_w = invert_s(&f_hat_wq, q, w_top)?;
    let a_hat = match cfg.cond {
        Conditioning::Exact(_) => empirical_a_hat(&f_hat_w, &f_hat_wq, q, s, cfg.n_max)?,
        Conditioning::AtLeast(_) => empirical_a_hat_geq(&f_hat_w, &f_hat_wq, q, s, cfg.n_max)?,
    };
    let (f_cond, conditioning_records) = conditional_cdf_of(records, cfg.cond, cfg.i, cfg.grid)?;
    let (f_d, mut diag) = decompound_from_parts(&a_hat, &f_cond, cfg)?;
    diag.conditioning_records = conditioning_records;
    if matches!(cfg.cond, Conditioning::Exact(_)) && conditioning_records < MIN_CONDITIONING_RECORDS {
        diag.warning = Some(format!(
            "only {conditioning_records} flows with {}; the estimate is highly variable",
            cfg.cond
        ));
    }
    Ok((f_d, diag))
}

/// Reverts `a_hat` and forms `Σ_{n≤n*} â_n F^{*n}` from a given conditional
/// CDF. Exposed so exact (population) inputs can be pushed through the same
/// code path as estimates.
pub fn decompound_from_parts(
    a_hat: &CoeffSeries,
    f_cond: &GridCdf,
    cfg: &DecompoundConfig,
) -> Result<(GridCdf, Diagnostics)> {
    let a_hat = a_hat.with_order(cfg.n_max);
    let inv = a_hat.revert()?;
    let coeffs = inv.coeffs();
    // tails[n] = Σ_{n<k≤n_max} |â_k|
    let mut tails = vec![0.0; cfg.n_max + 1];
    for n in (0..cfg.n_max).rev() {
        tails[n] = tails[n + 1] + coeffs[n + 1].abs();
    }
    // Truncate at the first n with sup_t F^{*(n+1)}(t) · Σ_{k>n} |â_k| < tol.
    // Powers of a sub-CDF decrease in k, so this bounds every omitted term.
    let mut out = GridCdf::zero(f_cond.grid());
    let mut power = f_cond.clone();
    let mut cut = None;
    for (n, &a) in coeffs.iter().enumerate().skip(1) {
        out.add_scaled(&power, a);
        if n == cfg.n_max {
            break;
        }
        power = power.convolve(f_cond);
        let bound = power.values().iter().fold(0.0f64, |m, v| m.max(v.abs())) * tails[n];
        if bound < cfg.trunc_tol {
            cut = Some((n, bound));
            break;
        }
    }
    let (n_star, tail_bound) = match cut {
        Some(c) => c,
        None if cfg.n_max == 1 => (1, 0.0),
        None => {
            return Err(Error::TailTooHeavy(format!(
                "the omitted-term bound is still above {:e} at n = {}",
                cfg.trunc_tol,
                cfg.n_max - 1
            )))
        }
    };
    // Only â_1..â_{n*} enter the estimate, and coefficient n of â∘Â depends
    // on nothing beyond order n, so the check runs at order n*. Rounding in
    // coefficient n scales with Σ_k |â_k| [z^n]|Â|^k, which is the yardstick.
    let (inv_n, a_n) = (inv.with_order(n_star), a_hat.with_order(n_star));
    let err = inv_n.compose(&a_n)?.sub(&CoeffSeries::identity(n_star));
    let scale = inv_n.abs().compose(&a_n.abs())?;
    let residual = err.coeffs().iter().fold(0.0f64, |m, e| m.max(e.abs()));
    let relative = err
        .coeffs()
        .iter()
        .zip(scale.coeffs())
        .fold(0.0f64, |m, (e, s)| m.max(e.abs() / s.max(1.0)));
    if !(relative < MAX_REVERSION_RESIDUAL) {
        return Err(Error::NotRevertible(format!(
            "relative reversion residual {relative:e} exceeds {MAX_REVERSION_RESIDUAL:e}"
        )));
    }
    let diag = Diagnostics {
        n_star,
        tail_bound,
        monotonicity_violations: out.monotonicity_violations(1e-12),
        reversion_residual: residual,
        relative_reversion_residual: relative,
        conditioning_records: 0,
        warning: None,
    };
    Ok((out, diag))
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapBand {
    /// `100α`-th percentile of `sup_t |F̂*_D(t) − F̂_D(t)|`.
    pub radius: f64,
    pub replicates: usize,
    /// Replicates dropped because the resample had no conditioning flows.
    pub dropped_replicates: usize,
    /// Replicates whose series could not be reverted or truncated; they
    /// enter the percentile as an infinite distance.
    pub unstable_replicates: usize,
}

/// Heuristic sup-norm bootstrap band for `F̂_D`: resample whole records,
/// rerun the pipeline, and take the nearest-rank `100α`-th percentile of the
/// sup distance on `[0, t_max]`. A resample on which reversion or truncation
/// fails counts as an infinite distance, so such failures widen the band
/// rather than vanish from it.
pub fn bootstrap_band_fd(
    ds: &SampledDataset,
    cfg: &DecompoundConfig,
    alpha: f64,
    seed: u64,
) -> Result<BootstrapBand> {
    cfg.validate()?;
    if cfg.bootstrap_b < 100 {
        return Err(Error::param(format!(
            "bootstrap needs B ≥ 100, got {}",
            cfg.bootstrap_b
        )));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::param(format!("alpha = {alpha} is not in (0, 1)")));
    }
    // canonical order: the band must not depend on how records are listed
    let mut sorted: Vec<&FlowRecord> = ds.records.iter().collect();
    sorted.sort_by(|a, b| {
        a.sampled_count.cmp(&b.sampled_count).then_with(|| {
            a.gaps
                .iter()
                .zip(&b.gaps)
                .map(|(x, y)| x.total_cmp(y))
                .find(|o| o.is_ne())
                .unwrap_or(std::cmp::Ordering::Equal)
        })
    });
    let (base, _) = pipeline(&sorted, ds.q, cfg)?;
    let n = sorted.len();
    let outcomes = (0..cfg.bootstrap_b as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, BOOTSTRAP_TAG, r));
            let draw: Vec<&FlowRecord> = (0..n).map(|_| sorted[rng.random_range(0..n)]).collect();
            match pipeline(&draw, ds.q, cfg) {
                Ok((f, _)) => Ok(Some(f.sup_distance(&base))),
                Err(Error::ZeroConditioningMass(_)) => Ok(None),
                Err(Error::TailTooHeavy(_) | Error::NotRevertible(_)) => Ok(Some(f64::INFINITY)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let mut stats: Vec<f64> = outcomes.iter().flatten().copied().collect();
    let dropped = outcomes.len() - stats.len();
    if stats.is_empty() {
        return Err(Error::ZeroConditioningMass(
            "every bootstrap replicate lacked conditioning flows".into(),
        ));
    }
    let unstable = stats.iter().filter(|d| d.is_infinite()).count();
    Ok(BootstrapBand {
        radius: nearest_rank(&mut stats, alpha),
        replicates: outcomes.len(),
        dropped_replicates: dropped,
        unstable_replicates: unstable,
    })
}
