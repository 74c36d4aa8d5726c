//! Generative model of a flow: size law `f_W`, gap law `F_D`, sampling
//! probability `q`, plus the samplers used by the simulator.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use rand::Rng;
use rand_distr::{Distribution, Exp, Geometric};

use crate::error::{Error, Result};
use crate::grid::{GridCdf, GridSpec};
use crate::numeric::{zeta, KahanSum};
use crate::pmf::Pmf;

/// Cumulative table length for discrete Pareto inverse-CDF sampling.
pub const PARETO_TABLE_LEN: usize = 1_000_000;

#[derive(Debug, Clone, PartialEq)]
pub enum SizeDist {
    /// `f_W(w) = c^{w-1}(1-c)`, `w ≥ 1`.
    Geometric {
        c: f64,
    },
    /// `f_W(w) = w^{-α-1} / ζ(α+1)`, `w ≥ 1`.
    DiscretePareto {
        alpha: f64,
    },
    Explicit(Pmf),
}

#[derive(Debug, Clone, PartialEq)]
pub enum GapDist {
    Exponential {
        rate: f64,
    },
    /// A CDF tabulated on a grid; sampled by linear interpolation.
    Explicit(GridCdf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelSpec {
    pub size: SizeDist,
    pub gap: GapDist,
    pub q: f64,
}

impl ModelSpec {
    pub fn new(size: SizeDist, gap: GapDist, q: f64) -> Result<Self> {
        let m = Self { size, gap, q };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.q > 0.0 && self.q < 1.0) {
            return Err(Error::param(format!("q = {} is not in (0, 1)", self.q)));
        }
        match &self.size {
            SizeDist::Geometric { c } if !(*c > 0.0 && *c < 1.0) => {
                return Err(Error::param(format!("geometric c = {c} is not in (0, 1)")))
            }
            SizeDist::DiscretePareto { alpha } if !(*alpha > 0.0 && alpha.is_finite()) => {
                return Err(Error::param(format!("pareto alpha = {alpha} must be positive")))
            }
            SizeDist::Explicit(p) if p.min_support() == 0 && p.get(0) > 0.0 => {
                return Err(Error::param("flow sizes must be at least 1"))
            }
            _ => {}
        }
        match &self.gap {
            GapDist::Exponential { rate } if !(*rate > 0.0 && rate.is_finite()) => {
                Err(Error::param(format!("gap rate = {rate} must be positive")))
            }
            GapDist::Explicit(f) if !f.is_genuine_cdf() => {
                Err(Error::param("explicit gap CDF is not a distribution function"))
            }
            _ => Ok(()),
        }
    }

    /// `f_W` on `1..=w_max`, with the remaining mass kept as tail mass.
    pub fn size_pmf(&self, w_max: usize) -> Pmf {
        self.size.pmf(w_max)
    }

    /// `F_D` evaluated on the grid.
    pub fn gap_cdf(&self, grid: GridSpec) -> GridCdf {
        match &self.gap {
            GapDist::Exponential { rate } => GridCdf::from_fn(grid, |t| 1.0 - (-rate * t).exp()),
            GapDist::Explicit(f) => {
                let src = f.grid();
                GridCdf::from_fn(grid, |t| interpolate(f, src, t))
            }
        }
    }

    /// Mean gap, when finite.
    pub fn gap_mean(&self) -> f64 {
        match &self.gap {
            GapDist::Exponential { rate } => 1.0 / rate,
            GapDist::Explicit(f) => {
                let g = f.grid();
                // E D = ∫ (1 − F) dt over the tabulated range
                f.values()
                    .windows(2)
                    .map(|w| g.step * (1.0 - 0.5 * (w[0] + w[1])))
                    .sum()
            }
        }
    }
}

impl SizeDist {
    /// `P(W = w)`.
    pub fn prob(&self, w: usize) -> f64 {
        if w == 0 {
            return 0.0;
        }
        match self {
            SizeDist::Geometric { c } => (1.0 - c) * c.powi(w as i32 - 1),
            SizeDist::DiscretePareto { alpha } => (w as f64).powf(-alpha - 1.0) / zeta_cached(alpha + 1.0),
            SizeDist::Explicit(p) => p.get(w),
        }
    }

    pub fn pmf(&self, w_max: usize) -> Pmf {
        let w_max = w_max.max(1);
        if let SizeDist::Explicit(p) = self {
            if p.max_index() <= w_max {
                return p.clone();
            }
        }
        let mut probs: Vec<f64> = (1..=w_max).map(|w| self.prob(w)).collect();
        let tail = match self {
            SizeDist::Geometric { c } => c.powi(w_max as i32),
            SizeDist::Explicit(p) => p.survival(w_max + 1),
            SizeDist::DiscretePareto { .. } => {
                let mut acc = KahanSum::new();
                for &p in probs.iter().rev() {
                    acc.add(p);
                }
                (1.0 - acc.value()).max(0.0)
            }
        };
        // underflowed entries carry no mass and only slow down the sums
        while probs.len() > 1 && probs.last() == Some(&0.0) {
            probs.pop();
        }
        Pmf::new_unchecked(1, probs, tail)
    }
}

fn interpolate(f: &GridCdf, g: GridSpec, t: f64) -> f64 {
    if t <= 0.0 {
        return f.at(0);
    }
    let r = t / g.step;
    let i = r.floor() as usize;
    if i >= g.cells() {
        return f.last();
    }
    let frac = r - i as f64;
    f.at(i) * (1.0 - frac) + f.at(i + 1) * frac
}

/// `ζ(s)`, memoized per argument since a direct evaluation sums `10^7` terms.
pub fn zeta_cached(s: f64) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<u64, f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache.lock().unwrap().get(&s.to_bits()) {
        return *v;
    }
    let v = zeta(s);
    cache.lock().unwrap().insert(s.to_bits(), v);
    v
}

/// Inverse-CDF table for the discrete Pareto law on `1..=PARETO_TABLE_LEN`,
/// with a continuous Pareto tail beyond it.
#[derive(Debug)]
pub struct ParetoTable {
    alpha: f64,
    cdf: Vec<f64>,
}

impl ParetoTable {
    pub fn get(alpha: f64) -> Arc<ParetoTable> {
        static CACHE: OnceLock<Mutex<HashMap<u64, Arc<ParetoTable>>>> = OnceLock::new();
        let cache = CACHE.get_or_init(Default::default);
        if let Some(t) = cache.lock().unwrap().get(&alpha.to_bits()) {
            return t.clone();
        }
        let table = Arc::new(Self::build(alpha));
        cache.lock().unwrap().insert(alpha.to_bits(), table.clone());
        table
    }

    fn build(alpha: f64) -> Self {
        let norm = zeta_cached(alpha + 1.0);
        let mut cdf = Vec::with_capacity(PARETO_TABLE_LEN);
        let mut acc = KahanSum::new();
        for w in 1..=PARETO_TABLE_LEN {
            acc.add((w as f64).powf(-alpha - 1.0) / norm);
            cdf.push(acc.value());
        }
        Self { alpha, cdf }
    }

    pub fn sample(&self, u: f64) -> usize {
        let last = *self.cdf.last().unwrap();
        if u < last {
            return self.cdf.partition_point(|&c| c <= u) + 1;
        }
        // conditional tail: P(W > w | W > w0) ≈ ((w0 + ½)/(w + ½))^α
        let v = ((u - last) / (1.0 - last)).clamp(0.0, 1.0);
        let w0 = PARETO_TABLE_LEN as f64 + 0.5;
        let w = w0 * (1.0 - v).max(f64::MIN_POSITIVE).powf(-1.0 / self.alpha);
        (w.floor() as usize).max(PARETO_TABLE_LEN + 1)
    }
}

enum SizeSampler {
    Geometric(Geometric),
    Pareto(Arc<ParetoTable>),
    Explicit { offset: usize, cdf: Vec<f64> },
}

enum GapSampler {
    Exponential(Exp<f64>),
    Explicit(GridCdf),
}

/// Draws `(W, D_1..D_{W-1})` from a model. Building one is the expensive
/// step for Pareto sizes; sampling is cheap and thread-safe.
pub struct FlowSampler {
    size: SizeSampler,
    gap: GapSampler,
}

impl FlowSampler {
    pub fn new(model: &ModelSpec) -> Result<Self> {
        model.validate()?;
        let size = match &model.size {
            SizeDist::Geometric { c } => {
                SizeSampler::Geometric(Geometric::new(1.0 - c).map_err(|e| Error::param(e.to_string()))?)
            }
            SizeDist::DiscretePareto { alpha } => SizeSampler::Pareto(ParetoTable::get(*alpha)),
            SizeDist::Explicit(p) => {
                let mut acc = 0.0;
                let cdf = p
                    .probs()
                    .iter()
                    .map(|x| {
                        acc += x;
                        acc / p.total_mass()
                    })
                    .collect();
                SizeSampler::Explicit {
                    offset: p.min_support(),
                    cdf,
                }
            }
        };
        let gap = match &model.gap {
            GapDist::Exponential { rate } => {
                GapSampler::Exponential(Exp::new(*rate).map_err(|e| Error::param(e.to_string()))?)
            }
            GapDist::Explicit(f) => GapSampler::Explicit(f.clone()),
        };
        Ok(Self { size, gap })
    }

    pub fn sample_size<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        match &self.size {
            SizeSampler::Geometric(g) => 1 + g.sample(rng) as usize,
            SizeSampler::Pareto(t) => t.sample(rng.random::<f64>()),
            SizeSampler::Explicit { offset, cdf } => {
                let u = rng.random::<f64>();
                let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
                offset + i
            }
        }
    }

    pub fn sample_gap<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match &self.gap {
            GapSampler::Exponential(e) => loop {
                let d = e.sample(rng);
                if d > 0.0 {
                    return d;
                }
            },
            GapSampler::Explicit(f) => explicit_gap(f, rng.random::<f64>()),
        }
    }
}

/// Inverse of a gridded CDF by linear interpolation inside the bracketing cell.
fn explicit_gap(f: &GridCdf, u: f64) -> f64 {
    let g = f.grid();
    let v = f.values();
    let i = v.partition_point(|&x| x <= u);
    if i == 0 {
        // atom at the origin: report a tiny positive gap
        return g.step * 1e-9;
    }
    if i >= v.len() {
        return g.t_max;
    }
    let (lo, hi) = (v[i - 1], v[i]);
    let frac = if hi > lo { (u - lo) / (hi - lo) } else { 0.5 };
    (g.point(i - 1) + frac * g.step).max(g.step * 1e-9)
}
