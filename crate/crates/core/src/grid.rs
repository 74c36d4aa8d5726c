//! Distribution functions sampled on a uniform grid over `[0, T]`, and the
//! discretized Stieltjes convolution used for their convolution powers.
//!
//! Grid point `i` is `t_i = i·h`. Cell `j ≥ 1` is `(t_{j-1}, t_j]`; its
//! measure increment `ΔG_j = G(t_j) − G(t_{j-1})` is placed at the cell
//! midpoint, and `G(0)` is an atom at the origin. Under that convention
//!
//! ```text
//! (F*G)(t_i) = F(0)G(t_i) + G(0)F(t_i) − F(0)G(0)
//!            + Σ_{j=1..i} ΔG_j · ½[F'(t_{i−j}) + F'(t_{i−j+1})]
//! ```
//!
//! with `F' = F − F(0)`, which is exactly commutative and associative on the
//! truncated grid.

use crate::error::{Error, Result};

/// Tolerance used when snapping observations to grid points.
const SNAP_TOL: f64 = 1e-9;

/// A uniform grid `0, h, 2h, …, T`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub t_max: f64,
    pub step: f64,
}

impl GridSpec {
    pub const DEFAULT: GridSpec = GridSpec {
        t_max: 5.0,
        step: 0.005,
    };

    pub fn new(t_max: f64, step: f64) -> Result<Self> {
        if !(t_max > 0.0 && step > 0.0 && t_max.is_finite()) {
            return Err(Error::param(format!("grid {t_max}:{step} must be positive")));
        }
        let cells = t_max / step;
        if (cells - cells.round()).abs() > 1e-6 * cells.max(1.0) {
            return Err(Error::param(format!("step {step} does not divide t_max {t_max}")));
        }
        Ok(Self { t_max, step })
    }

    /// Number of cells; there are `cells() + 1` grid points.
    pub fn cells(&self) -> usize {
        (self.t_max / self.step).round() as usize
    }

    pub fn point(&self, i: usize) -> f64 {
        i as f64 * self.step
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.cells()).map(|i| self.point(i))
    }

    /// Index of the first grid point `t_i ≥ x` (the cell that receives an atom
    /// at `x`), or `None` beyond `T`.
    pub fn cell_of(&self, x: f64) -> Option<usize> {
        let r = x / self.step;
        let i = if (r - r.round()).abs() <= SNAP_TOL * r.abs().max(1.0) {
            r.round()
        } else {
            r.ceil()
        };
        let i = i.max(0.0) as usize;
        (i <= self.cells()).then_some(i)
    }
}

impl Default for GridSpec {
    fn default() -> Self {
        Self::DEFAULT
    }
}

impl std::fmt::Display for GridSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.t_max, self.step)
    }
}

impl std::str::FromStr for GridSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (t, h) = s
            .split_once(':')
            .ok_or_else(|| Error::param(format!("grid '{s}' is not of the form T:step")))?;
        let t: f64 = t
            .trim()
            .parse()
            .map_err(|_| Error::param(format!("bad grid bound '{t}'")))?;
        let h: f64 = h
            .trim()
            .parse()
            .map_err(|_| Error::param(format!("bad grid step '{h}'")))?;
        GridSpec::new(t, h)
    }
}

/// A distribution function (or a signed combination of them) on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCdf {
    grid: GridSpec,
    values: Vec<f64>,
}

impl GridCdf {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.cells() + 1 {
            return Err(Error::param(format!(
                "expected {} grid values, got {}",
                grid.cells() + 1,
                values.len()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: GridSpec, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid,
            values: grid.points().map(f).collect(),
        }
    }

    pub fn zero(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.cells() + 1],
        }
    }

    /// Unit atom at the origin, the identity for [`GridCdf::convolve`].
    pub fn unit(grid: GridSpec) -> Self {
        Self {
            grid,
            values: vec![1.0; grid.cells() + 1],
        }
    }

    /// Distribution function of an atom at `a`, snapped to the grid.
    pub fn step_at(grid: GridSpec, a: f64) -> Self {
        let cell = grid.cell_of(a);
        Self {
            grid,
            values: (0..=grid.cells())
                .map(|i| match cell {
                    Some(c) if i >= c => 1.0,
                    _ => 0.0,
                })
                .collect(),
        }
    }

    /// Right-continuous empirical distribution function of `obs` divided by
    /// `denominator`, sampled at the grid points.
    pub fn empirical(grid: GridSpec, obs: impl IntoIterator<Item = f64>, denominator: f64) -> Self {
        let mut counts = vec![0.0; grid.cells() + 1];
        for x in obs {
            if let Some(c) = grid.cell_of(x) {
                counts[c] += 1.0;
            }
        }
        let mut acc = 0.0;
        let values = counts
            .into_iter()
            .map(|c| {
                acc += c;
                acc / denominator
            })
            .collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Value at grid point `i`.
    pub fn at(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Value at the last grid point, the supremum for a sub-CDF.
    pub fn last(&self) -> f64 {
        *self.values.last().expect("grid has points")
    }

    /// Measure increments `ΔF_j`, `j = 1..=cells`; index 0 holds `F(0)`.
    pub fn increments(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.values.len());
        out.push(self.values[0]);
        out.extend(self.values.windows(2).map(|w| w[1] - w[0]));
        out
    }

    pub fn scale(&self, k: f64) -> Self {
        Self {
            grid: self.grid,
            values: self.values.iter().map(|v| v * k).collect(),
        }
    }

    pub fn add_scaled(&mut self, other: &Self, k: f64) {
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += k * b;
        }
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Sup distance restricted to grid points `t ≤ upto`.
    pub fn sup_distance_upto(&self, other: &Self, upto: f64) -> f64 {
        let n = self
            .grid
            .cell_of(upto)
            .unwrap_or(self.grid.cells())
            .min(self.values.len() - 1);
        self.values[..=n]
            .iter()
            .zip(&other.values[..=n])
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Number of grid steps where the function decreases by more than `tol`.
    pub fn monotonicity_violations(&self, tol: f64) -> usize {
        self.values.windows(2).filter(|w| w[1] < w[0] - tol).count()
    }

    /// Whether this is a nondecreasing function in `[0, 1 + 1e-6]`.
    pub fn is_genuine_cdf(&self) -> bool {
        self.values[0] >= 0.0 && self.monotonicity_violations(1e-12) == 0 && self.last() <= 1.0 + 1e-6
    }

    /// Least-squares nondecreasing fit clamped to `[0, 1]` (pool adjacent
    /// violators). The raw estimate is kept separately by callers.
    pub fn isotonic_projection(&self) -> Self {
        let mut blocks: Vec<(f64, usize)> = Vec::with_capacity(self.values.len());
        for &v in &self.values {
            blocks.push((v, 1));
            while blocks.len() > 1 {
                let (m2, n2) = blocks[blocks.len() - 1];
                let (m1, n1) = blocks[blocks.len() - 2];
                if m1 <= m2 {
                    break;
                }
                blocks.pop();
                let n = n1 + n2;
                *blocks.last_mut().unwrap() = ((m1 * n1 as f64 + m2 * n2 as f64) / n as f64, n);
            }
        }
        let values = blocks
            .into_iter()
            .flat_map(|(m, n)| std::iter::repeat_n(m.clamp(0.0, 1.0), n))
            .collect();
        Self {
            grid: self.grid,
            values,
        }
    }

    /// Discretized Stieltjes convolution with midpoint increments (see the
    /// module docs). The loop runs over the nonzero increments of the sparser
    /// operand.
    pub fn convolve(&self, other: &Self) -> Self {
        assert_eq!(self.grid, other.grid, "convolution needs a common grid");
        let inc_a = self.increments();
        let inc_b = other.increments();
        let nnz_a = inc_a.iter().skip(1).filter(|v| **v != 0.0).count();
        let nnz_b = inc_b.iter().skip(1).filter(|v| **v != 0.0).count();
        let (dense, sparse, sparse_inc) = if nnz_b <= nnz_a {
            (self, other, &inc_b)
        } else {
            (other, self, &inc_a)
        };
        let n = self.values.len();
        let f0 = dense.values[0];
        let g0 = sparse.values[0];
        let mut out: Vec<f64> = (0..n)
            .map(|i| f0 * sparse.values[i] + g0 * dense.values[i] - f0 * g0)
            .collect();
        // mid[k] = ½[F'(t_k) + F'(t_{k+1})]
        let mid: Vec<f64> = (0..n - 1)
            .map(|k| 0.5 * (dense.values[k] + dense.values[k + 1]) - f0)
            .collect();
        for (j, &g) in sparse_inc.iter().enumerate().skip(1) {
            if g == 0.0 {
                continue;
            }
            for (o, m) in out[j..].iter_mut().zip(&mid) {
                *o += g * m;
            }
        }
        Self {
            grid: self.grid,
            values: out,
        }
    }

    /// `F^{*n}` by the recursion `F^{*n} = F^{*(n−1)} * F`.
    pub fn convolve_power(&self, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::param("convolution power must be at least 1"));
        }
        let mut acc = self.clone();
        for _ in 1..n {
            acc = acc.convolve(self);
        }
        Ok(acc)
    }
}
