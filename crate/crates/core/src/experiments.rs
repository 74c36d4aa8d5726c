//! Monte Carlo presets for the simulation study: `f̂_W` percentiles in the
//! stable and explosive regimes, CI adequacy, and `F̂_D` under several
//! conditionings. Every replicate is seeded by its index, so outputs are a
//! pure function of `(preset, reps, seed)`.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::forward::sampled_size_pmf;
use crate::gap_inversion::{bootstrap_band_fd, decompound, Conditioning, DecompoundConfig};
use crate::grid::GridCdf;
use crate::model::{FlowSampler, GapDist, ModelSpec, SizeDist};
use crate::simulate::{derive_seed, simulate_with, SampledDataset};
use crate::size_inversion::{
    bootstrap_sup_ci, empirical_sampled_pmf, invert_s, normal_ci, plug_in_variance, risk_r,
};
use crate::stats::quantile;

const DATASET_TAG: u64 = 0x4453;
const BOOTSTRAP_SEED_TAG: u64 = 0x4253;
/// Support used for the exact size law when computing reference curves.
const TRUTH_W_MAX: usize = 200_000;
pub const PERCENTILES: [f64; 3] = [0.05, 0.5, 0.95];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PresetName {
    Fig2,
    Fig3,
    Fig4,
    Fig5Case1,
    Fig5Case2,
    Fig6,
}

impl PresetName {
    pub const ALL: [PresetName; 6] = [
        PresetName::Fig2,
        PresetName::Fig3,
        PresetName::Fig4,
        PresetName::Fig5Case1,
        PresetName::Fig5Case2,
        PresetName::Fig6,
    ];
}

impl fmt::Display for PresetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PresetName::Fig2 => "fig2",
            PresetName::Fig3 => "fig3",
            PresetName::Fig4 => "fig4",
            PresetName::Fig5Case1 => "fig5_case1",
            PresetName::Fig5Case2 => "fig5_case2",
            PresetName::Fig6 => "fig6",
        })
    }
}

impl FromStr for PresetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|p| p.to_string() == s)
            .ok_or_else(|| Error::param(format!("unknown preset `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    /// Percentiles of `f̂_W(w)` and of its estimated standard deviation.
    SizePercentiles,
    /// Size percentiles plus normal and bootstrap interval coverage.
    SizeCoverage,
    /// Percentiles of `F̂_D(t)`, one family per conditioning.
    GapPercentiles,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPreset {
    pub name: PresetName,
    pub kind: ExperimentKind,
    pub model: ModelSpec,
    pub n: usize,
    pub mc_reps: usize,
    /// Largest `w` reported for size presets.
    pub w_max: usize,
    /// Sup-norm range of the simultaneous bootstrap set.
    pub l: usize,
    pub alpha: f64,
    pub bootstrap_b: usize,
    pub decompound: DecompoundConfig,
    pub conditionings: Vec<Conditioning>,
    /// Whether gap presets also compute bootstrap bands.
    pub bands: bool,
}

impl ExperimentPreset {
    pub fn new(name: PresetName) -> Self {
        let exp = GapDist::Exponential { rate: 1.0 };
        let geometric = |c: f64| ModelSpec {
            size: SizeDist::Geometric { c },
            gap: exp.clone(),
            q: 0.6,
        };
        let base = Self {
            name,
            kind: ExperimentKind::SizePercentiles,
            model: geometric(0.25),
            n: 500,
            mc_reps: 1000,
            w_max: 10,
            l: 5,
            alpha: 0.9,
            bootstrap_b: 999,
            decompound: DecompoundConfig::default(),
            conditionings: vec![Conditioning::Exact(2)],
            bands: false,
        };
        match name {
            PresetName::Fig2 => base,
            PresetName::Fig3 => Self {
                model: ModelSpec {
                    size: SizeDist::DiscretePareto { alpha: 1.5 },
                    gap: exp,
                    q: 0.7,
                },
                n: 1000,
                ..base
            },
            PresetName::Fig4 => Self {
                kind: ExperimentKind::SizeCoverage,
                ..base
            },
            PresetName::Fig5Case1 => Self {
                kind: ExperimentKind::GapPercentiles,
                bands: true,
                ..base
            },
            PresetName::Fig5Case2 => Self {
                kind: ExperimentKind::GapPercentiles,
                model: geometric(0.7),
                bands: true,
                ..base
            },
            PresetName::Fig6 => Self {
                kind: ExperimentKind::GapPercentiles,
                conditionings: vec![
                    Conditioning::Exact(2),
                    Conditioning::AtLeast(2),
                    Conditioning::Exact(3),
                ],
                ..base
            },
        }
    }

    fn dataset(&self, sampler: &FlowSampler, seed: u64, rep: usize) -> Result<SampledDataset> {
        simulate_with(
            sampler,
            self.model.q,
            self.n,
            derive_seed(seed, DATASET_TAG, rep as u64),
        )
    }
}

/// Per-replicate output of a size preset; vectors are indexed by `w − 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct SizeReplicate {
    pub f_hat: Vec<f64>,
    pub sd_hat: Vec<f64>,
    pub ci: Option<SizeIntervals>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeIntervals {
    /// Normal intervals for `w = 1..=l`.
    pub normal: Vec<(f64, f64)>,
    /// Simultaneous radius on the `f̂_W` scale, i.e. bootstrap radius / √N.
    pub sup_radius: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SizeRun {
    pub truth: Vec<f64>,
    /// `(R_{q,w} − f_W(w)²)^{1/2} / √N`; infinite where `R_{q,w}` diverges.
    pub true_sd: Vec<f64>,
    pub replicates: Vec<SizeReplicate>,
}

impl SizeRun {
    /// Values of `f̂_W(w)` across replicates.
    pub fn f_hat_at(&self, w: usize) -> Vec<f64> {
        self.replicates.iter().map(|r| r.f_hat[w - 1]).collect()
    }

    pub fn sd_hat_at(&self, w: usize) -> Vec<f64> {
        self.replicates.iter().map(|r| r.sd_hat[w - 1]).collect()
    }

    /// Fraction of replicates whose normal interval at `w` covers the truth.
    pub fn normal_coverage(&self, w: usize) -> Option<f64> {
        let f = self.truth[w - 1];
        self.coverage(|_, ci| {
            let (lo, hi) = ci.normal[w - 1];
            lo <= f && f <= hi
        })
    }

    /// Fraction of replicates whose `‖·‖_l` ball contains the truth.
    pub fn simultaneous_coverage(&self, l: usize) -> Option<f64> {
        self.coverage(|r, ci| (1..=l).all(|w| (r.f_hat[w - 1] - self.truth[w - 1]).abs() <= ci.sup_radius))
    }

    fn coverage(&self, hit: impl Fn(&SizeReplicate, &SizeIntervals) -> bool) -> Option<f64> {
        let with_ci: Vec<_> = self
            .replicates
            .iter()
            .filter_map(|r| Some((r, r.ci.as_ref()?)))
            .collect();
        let hits = with_ci.iter().filter(|(r, ci)| hit(r, ci)).count();
        (!with_ci.is_empty()).then(|| hits as f64 / with_ci.len() as f64)
    }
}

/// Runs `reps` replicates of a size preset.
pub fn run_size_experiment(p: &ExperimentPreset, reps: usize, seed: u64) -> Result<SizeRun> {
    let sampler = FlowSampler::new(&p.model)?;
    let q = p.model.q;
    let f_w = p.model.size_pmf(TRUTH_W_MAX);
    let f_wq = sampled_size_pmf(&f_w, q, 4000)?;
    let truth: Vec<f64> = (1..=p.w_max).map(|w| f_w.get(w)).collect();
    let true_sd = (1..=p.w_max)
        .map(|w| ((risk_r(&f_wq, q, w) - f_w.get(w).powi(2)).max(0.0) / p.n as f64).sqrt())
        .collect();
    let with_ci = p.kind == ExperimentKind::SizeCoverage;
    let replicates = (0..reps)
        .into_par_iter()
        .map(|r| {
            let ds = p.dataset(&sampler, seed, r)?;
            let f_hat_wq = empirical_sampled_pmf(&ds);
            let f_hat = invert_s(&f_hat_wq, q, p.w_max.max(p.l))?;
            let sd_hat = (1..=p.w_max)
                .map(|w| (plug_in_variance(&f_hat, &f_hat_wq, q, w) / p.n as f64).sqrt())
                .collect();
            let ci = if with_ci {
                let normal = (1..=p.l)
                    .map(|w| normal_ci(&f_hat, &f_hat_wq, q, w, p.alpha, p.n))
                    .collect();
                let radius = bootstrap_sup_ci(
                    &ds,
                    p.l,
                    p.bootstrap_b,
                    p.alpha,
                    derive_seed(seed, BOOTSTRAP_SEED_TAG, r as u64),
                )?;
                Some(SizeIntervals {
                    normal,
                    sup_radius: radius / (p.n as f64).sqrt(),
                })
            } else {
                None
            };
            Ok(SizeReplicate {
                f_hat: f_hat.values()[..p.w_max].to_vec(),
                sd_hat,
                ci,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(SizeRun {
        truth,
        true_sd,
        replicates,
    })
}

/// Estimates of `F̂_D` for one conditioning; `None` marks a failed replicate.
#[derive(Debug, Clone, PartialEq)]
pub struct GapFamily {
    pub cond: Conditioning,
    pub estimates: Vec<Option<GridCdf>>,
    /// Failure messages by replicate index.
    pub failures: Vec<(usize, String)>,
    /// Bootstrap sup-norm radii (first conditioning only, when enabled).
    pub band_radii: Vec<Option<f64>>,
}

impl GapFamily {
    pub fn successes(&self) -> impl Iterator<Item = &GridCdf> {
        self.estimates.iter().flatten()
    }

    /// Pointwise percentile `p` over successful replicates.
    pub fn percentile_curve(&self, p: f64) -> Vec<f64> {
        let ok: Vec<&GridCdf> = self.successes().collect();
        let cells = ok.first().map_or(0, |f| f.values().len());
        (0..cells)
            .map(|i| quantile(&ok.iter().map(|f| f.at(i)).collect::<Vec<_>>(), p))
            .collect()
    }

    /// Fraction of replicates with a band whose sup-norm ball covers `truth`.
    pub fn band_coverage(&self, truth: &GridCdf) -> Option<f64> {
        let pairs: Vec<(&GridCdf, f64)> = self
            .estimates
            .iter()
            .zip(&self.band_radii)
            .filter_map(|(f, r)| Some((f.as_ref()?, (*r)?)))
            .collect();
        if pairs.is_empty() {
            return None;
        }
        let hits = pairs.iter().filter(|(f, r)| f.sup_distance(truth) <= *r).count();
        Some(hits as f64 / pairs.len() as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapRun {
    pub truth: GridCdf,
    pub families: Vec<GapFamily>,
}

/// Runs `reps` replicates of a gap preset. Pipeline failures on individual
/// replicates are recorded, not fatal.
pub fn run_gap_experiment(p: &ExperimentPreset, reps: usize, seed: u64) -> Result<GapRun> {
    let sampler = FlowSampler::new(&p.model)?;
    let truth = p.model.gap_cdf(p.decompound.grid);
    let cfgs: Vec<DecompoundConfig> = p
        .conditionings
        .iter()
        .map(|&cond| DecompoundConfig {
            cond,
            bootstrap_b: p.bootstrap_b,
            ..p.decompound
        })
        .collect();
    for c in &cfgs {
        c.validate()?;
    }
    type Rep = Vec<(std::result::Result<GridCdf, String>, Option<f64>)>;
    let per_rep: Vec<Rep> = (0..reps)
        .into_par_iter()
        .map(|r| {
            let ds = p.dataset(&sampler, seed, r)?;
            Ok(cfgs
                .iter()
                .enumerate()
                .map(|(k, cfg)| {
                    let est = decompound(&ds, cfg).map(|(f, _)| f).map_err(|e| e.to_string());
                    let band = (k == 0 && p.bands && est.is_ok())
                        .then(|| {
                            bootstrap_band_fd(
                                &ds,
                                cfg,
                                p.alpha,
                                derive_seed(seed, BOOTSTRAP_SEED_TAG, r as u64),
                            )
                            .ok()
                            .map(|b| b.radius)
                        })
                        .flatten();
                    (est, band)
                })
                .collect())
        })
        .collect::<Result<Vec<_>>>()?;
    let families = cfgs
        .iter()
        .enumerate()
        .map(|(k, cfg)| {
            let mut fam = GapFamily {
                cond: cfg.cond,
                estimates: Vec::with_capacity(reps),
                failures: Vec::new(),
                band_radii: Vec::with_capacity(reps),
            };
            for (r, rep) in per_rep.iter().enumerate() {
                let (est, band) = &rep[k];
                match est {
                    Ok(f) => fam.estimates.push(Some(f.clone())),
                    Err(msg) => {
                        fam.estimates.push(None);
                        fam.failures.push((r, msg.clone()));
                    }
                }
                fam.band_radii.push(*band);
            }
            fam
        })
        .collect();
    Ok(GapRun { truth, families })
}

pub enum ExperimentRun {
    Size(SizeRun),
    Gap(GapRun),
}

pub fn run_experiment(p: &ExperimentPreset, reps: usize, seed: u64) -> Result<ExperimentRun> {
    match p.kind {
        ExperimentKind::GapPercentiles => run_gap_experiment(p, reps, seed).map(ExperimentRun::Gap),
        _ => run_size_experiment(p, reps, seed).map(ExperimentRun::Size),
    }
}

/// Writes the CSV artifacts of a finished run into `dir`, returning the file
/// names written.
pub fn write_experiment(p: &ExperimentPreset, run: &ExperimentRun, dir: &Path) -> Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let mut emit = |name: &str, body: String| -> Result<()> {
        fs::File::create(dir.join(name))?.write_all(body.as_bytes())?;
        files.push(name.to_string());
        Ok(())
    };
    match run {
        ExperimentRun::Size(run) => {
            let pct = |vals: Vec<f64>| PERCENTILES.map(|p| quantile(&vals, p));
            let mut fw = String::from("w,p05,p50,p95\n");
            let mut sd = String::from("w,p05,p50,p95\n");
            let mut truth = String::from("w,f_w,sd\n");
            for w in 1..=p.w_max {
                let [a, b, c] = pct(run.f_hat_at(w));
                fw += &format!("{w},{a},{b},{c}\n");
                let [a, b, c] = pct(run.sd_hat_at(w));
                sd += &format!("{w},{a},{b},{c}\n");
                truth += &format!("{w},{},{}\n", run.truth[w - 1], run.true_sd[w - 1]);
            }
            emit("fw_percentiles.csv", fw)?;
            emit("sd_percentiles.csv", sd)?;
            emit("truth.csv", truth)?;
            if p.kind == ExperimentKind::SizeCoverage {
                emit("coverage.csv", size_coverage_csv(p, run))?;
            }
        }
        ExperimentRun::Gap(run) => {
            let grid = run.truth.grid();
            let mut pct = String::from("cond,t,p05,p50,p95\n");
            let mut fails = String::from("cond,replicates,failures\n");
            for fam in &run.families {
                let curves = PERCENTILES.map(|q| fam.percentile_curve(q));
                if !curves[0].is_empty() {
                    for i in 0..=grid.cells() {
                        pct += &format!(
                            "{},{},{},{},{}\n",
                            fam.cond,
                            grid.point(i),
                            curves[0][i],
                            curves[1][i],
                            curves[2][i]
                        );
                    }
                }
                fails += &format!("{},{},{}\n", fam.cond, fam.estimates.len(), fam.failures.len());
            }
            emit("fd_percentiles.csv", pct)?;
            emit("failures.csv", fails)?;
            let mut truth = String::from("t,F_D\n");
            for (i, t) in grid.points().enumerate() {
                truth += &format!("{t},{}\n", run.truth.at(i));
            }
            emit("truth.csv", truth)?;
            if p.bands {
                emit("coverage.csv", gap_coverage_csv(run))?;
            }
        }
    }
    Ok(files)
}

fn size_coverage_csv(p: &ExperimentPreset, run: &SizeRun) -> String {
    let mut out =
        String::from("target,coverage,mc_q95_error,bt_median_bound,an_true_bound,an_est_median_bound\n");
    let z = crate::stats::abs_normal_quantile(p.alpha);
    let radii: Vec<f64> = run
        .replicates
        .iter()
        .filter_map(|r| r.ci.as_ref().map(|c| c.sup_radius))
        .collect();
    let bt = quantile(&radii, 0.5);
    for w in 1..=p.l {
        let errs: Vec<f64> = run.f_hat_at(w).iter().map(|f| f - run.truth[w - 1]).collect();
        let halves: Vec<f64> = run
            .replicates
            .iter()
            .filter_map(|r| {
                r.ci.as_ref()
                    .map(|c| 0.5 * (c.normal[w - 1].1 - c.normal[w - 1].0))
            })
            .collect();
        out += &format!(
            "w={w},{},{},{bt},{},{}\n",
            run.normal_coverage(w).unwrap_or(f64::NAN),
            quantile(&errs, 0.95),
            z * run.true_sd[w - 1],
            quantile(&halves, 0.5)
        );
    }
    out += &format!(
        "sup_l{},{},,{bt},,\n",
        p.l,
        run.simultaneous_coverage(p.l).unwrap_or(f64::NAN)
    );
    out
}

fn gap_coverage_csv(run: &GapRun) -> String {
    let mut out = String::from("cond,band_coverage,median_radius,bands\n");
    if let Some(fam) = run.families.first() {
        let radii: Vec<f64> = fam.band_radii.iter().flatten().copied().collect();
        out += &format!(
            "{},{},{},{}\n",
            fam.cond,
            fam.band_coverage(&run.truth).unwrap_or(f64::NAN),
            if radii.is_empty() {
                f64::NAN
            } else {
                quantile(&radii, 0.5)
            },
            radii.len()
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_names_round_trip() {
        for p in PresetName::ALL {
            assert_eq!(p.to_string().parse::<PresetName>().unwrap(), p);
        }
        assert!("fig7".parse::<PresetName>().is_err());
    }

    #[test]
    fn presets_carry_study_parameters() {
        let f2 = ExperimentPreset::new(PresetName::Fig2);
        assert_eq!((f2.n, f2.mc_reps, f2.model.q), (500, 1000, 0.6));
        assert_eq!(f2.model.size, SizeDist::Geometric { c: 0.25 });
        let f3 = ExperimentPreset::new(PresetName::Fig3);
        assert_eq!((f3.n, f3.model.q), (1000, 0.7));
        let f5 = ExperimentPreset::new(PresetName::Fig5Case2);
        assert_eq!(f5.model.size, SizeDist::Geometric { c: 0.7 });
        assert_eq!(ExperimentPreset::new(PresetName::Fig6).conditionings.len(), 3);
    }

    #[test]
    fn size_run_is_deterministic() {
        let p = ExperimentPreset::new(PresetName::Fig2);
        let a = run_size_experiment(&p, 4, 11).unwrap();
        let b = run_size_experiment(&p, 4, 11).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, run_size_experiment(&p, 4, 12).unwrap());
    }
}
