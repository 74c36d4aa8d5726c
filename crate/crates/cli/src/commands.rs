use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::Context;
use renewal_thinning::experiments::{run_experiment, write_experiment, ExperimentPreset, PresetName};
use renewal_thinning::forward::sampled_size_pmf;
use renewal_thinning::gap_inversion::{bootstrap_band_fd, decompound, Conditioning, DecompoundConfig};
use renewal_thinning::model::{GapDist, ModelSpec, SizeDist};
use renewal_thinning::simulate::{read_dataset, simulate_dataset, write_dataset, SampledDataset};
use renewal_thinning::size_inversion::{
    bootstrap_sup_ci, classify_regime, empirical_sampled_pmf, invert_s, normal_ci, plug_in_variance,
    RegimeThresholds,
};
use renewal_thinning::{GridSpec, Pmf};

use crate::config::Config;
use crate::{EstimateFdArgs, EstimateFwArgs, ExperimentArgs, RegimeArgs, SimulateArgs, UsageError};

const SEED_ENV: &str = "RENEWAL_SEED";
/// Support of the exact size law used for theoretical regime reports.
const THEORY_W_MAX: usize = 200_000;

type Res<T> = anyhow::Result<T>;

fn seed(flag: Option<u64>, cfg: &Config) -> Res<u64> {
    if let Ok(v) = std::env::var(SEED_ENV) {
        return v
            .trim()
            .parse()
            .map_err(|_| UsageError(format!("{SEED_ENV} = `{v}` is not an unsigned integer")).into());
    }
    Ok(cfg.get(flag, "seed", 0)?)
}

fn required<T>(v: Option<T>, flag: &str) -> Res<T> {
    v.ok_or_else(|| UsageError(format!("missing required --{flag}")).into())
}

fn parse_size(text: &str) -> Res<SizeDist> {
    let (kind, param) = text
        .split_once(':')
        .ok_or_else(|| UsageError(format!("size law `{text}`: expected geometric:C or pareto:ALPHA")))?;
    let v: f64 = param
        .parse()
        .map_err(|_| UsageError(format!("size law `{text}`: bad parameter")))?;
    match kind {
        "geometric" | "geom" => Ok(SizeDist::Geometric { c: v }),
        "pareto" => Ok(SizeDist::DiscretePareto { alpha: v }),
        _ => Err(UsageError(format!("unknown size law `{kind}`")).into()),
    }
}

fn parse_gap(text: &str) -> Res<GapDist> {
    let rate = match text.split_once(':') {
        Some(("exp", r)) => r.parse().ok(),
        _ => None,
    };
    rate.map(|rate| GapDist::Exponential { rate })
        .ok_or_else(|| UsageError(format!("gap law `{text}`: expected exp:RATE")).into())
}

fn load(path: &Path) -> Res<SampledDataset> {
    Ok(read_dataset(path)?)
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, body: &str) -> Res<()> {
    match path {
        Some(p) => fs::write(p, body).with_context(|| format!("cannot write {}", p.display()))?,
        None => std::io::stdout().write_all(body.as_bytes())?,
    }
    Ok(())
}

pub fn simulate(a: SimulateArgs, cfg: &Config) -> Res<()> {
    let size = parse_size(&required(cfg.pick(a.size, "size")?, "size")?)?;
    let gap = parse_gap(&cfg.get(a.gap, "gap", "exp:1".to_string())?)?;
    let q = required(cfg.pick(a.q, "q")?, "q")?;
    let n = required(cfg.pick(a.n, "n")?, "n")?;
    let out: PathBuf = required(cfg.pick(a.out, "out")?, "out")?;
    let seed = seed(a.seed, cfg)?;
    let model = ModelSpec::new(size, gap, q)?;
    let ds = simulate_dataset(&model, n, seed)?;
    write_dataset(&ds, &out)?;
    println!("wrote {}", out.display());
    println!("n = {}", ds.n());
    println!("q = {}", ds.q);
    println!("max_s = {}", ds.max_sampled_count());
    println!("empty_fraction = {}", ds.empty_fraction());
    Ok(())
}

pub fn estimate_fw(a: EstimateFwArgs, cfg: &Config) -> Res<()> {
    let data: PathBuf = required(cfg.pick(a.data, "data")?, "data")?;
    let ds = load(&data)?;
    let w_max = cfg.get(a.wmax, "wmax", ds.max_sampled_count().max(1))?;
    let alpha = cfg.get(a.alpha, "alpha", 0.9)?;
    let b = cfg.get(a.bootstrap, "bootstrap", 0)?;
    let l = cfg.get(a.l, "l", w_max.min(5))?;
    let out = cfg.pick(a.out, "out")?;
    let regime_out = cfg
        .pick(a.regime_out, "regime_out")?
        .or_else(|| out.as_ref().map(|o| o.with_file_name("regime.csv")));
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(UsageError(format!("--alpha {alpha} is not in (0, 1)")).into());
    }
    let (q, n) = (ds.q, ds.n());
    let f_wq = empirical_sampled_pmf(&ds);
    let f_w = invert_s(&f_wq, q, w_max)?;

    let mut csv = format!("# q = {q}\n# n = {n}\n# alpha = {alpha}\n");
    if b > 0 {
        let radius = bootstrap_sup_ci(&ds, l, b, alpha, seed(a.seed, cfg)?)?;
        writeln!(
            csv,
            "# bootstrap_b = {b}\n# l = {l}\n# bootstrap_radius = {radius}"
        )?;
        writeln!(csv, "# simultaneous_halfwidth = {}", radius / (n as f64).sqrt())?;
    }
    csv += "w,f_hat,var_hat,ci_lo,ci_hi\n";
    for w in 1..=w_max {
        let var = plug_in_variance(&f_w, &f_wq, q, w) / n as f64;
        let (lo, hi) = normal_ci(&f_w, &f_wq, q, w, alpha, n);
        writeln!(csv, "{w},{},{var},{lo},{hi}", f_w.get(w))?;
    }
    emit(out.as_deref(), &csv)?;
    if let Some(path) = regime_out {
        emit(
            Some(&path),
            &regime_csv(&f_wq, q, &(1..=w_max).collect::<Vec<_>>())?,
        )?;
    }
    Ok(())
}

fn regime_csv(f_wq: &Pmf, q: f64, probes: &[usize]) -> Res<String> {
    let rep = classify_regime(f_wq, q, probes, RegimeThresholds::default())?;
    let mut csv = format!(
        "# classification = {}\n# growth_rate = {}\nw,R_hat\n",
        rep.classification, rep.growth_rate
    );
    for (w, r) in &rep.r_values {
        writeln!(csv, "{w},{r}")?;
    }
    Ok(csv)
}

pub fn estimate_fd(a: EstimateFdArgs, cfg: &Config) -> Res<()> {
    let data: PathBuf = required(cfg.pick(a.data, "data")?, "data")?;
    let cond: Conditioning = cfg.get(a.cond, "cond", "s=2".to_string())?.parse()?;
    let grid: GridSpec = cfg.get(a.grid, "grid", GridSpec::DEFAULT.to_string())?.parse()?;
    let defaults = DecompoundConfig::default();
    let dc = DecompoundConfig {
        cond,
        i: cfg.get(a.i, "i", defaults.i)?,
        n_max: cfg.get(a.n_max, "n_max", defaults.n_max)?,
        trunc_tol: cfg.get(a.trunc_tol, "trunc_tol", defaults.trunc_tol)?,
        grid,
        bootstrap_b: cfg.get(a.bootstrap, "bootstrap", defaults.bootstrap_b)?,
    };
    let alpha = cfg.get(a.alpha, "alpha", 0.9)?;
    let isotonic = a.isotonic || cfg.get(None, "isotonic", false)?;
    let out = cfg.pick(a.out, "out")?;
    let diag_out = cfg.pick(a.diagnostics, "diagnostics")?;
    dc.validate()?;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(UsageError(format!("--alpha {alpha} is not in (0, 1)")).into());
    }

    let ds = load(&data)?;
    let (raw, diag) = decompound(&ds, &dc)?;
    let f_d = if isotonic { raw.isotonic_projection() } else { raw };
    let band = if dc.bootstrap_b > 0 {
        Some(bootstrap_band_fd(&ds, &dc, alpha, seed(a.seed, cfg)?)?)
    } else {
        None
    };

    let mut csv = format!(
        "# grid = {grid}\n# cond = {cond}\n# i = {}\n# q = {}\n# n = {}\n# estimate = {}\n",
        dc.i,
        ds.q,
        ds.n(),
        if isotonic { "isotonic projection" } else { "raw" }
    );
    match &band {
        Some(_) => writeln!(
            csv,
            "# band = heuristic bootstrap sup-norm band, alpha = {alpha}, B = {}",
            dc.bootstrap_b
        )?,
        None => csv += "# band = none\n",
    }
    csv += "t,F_hat,band_lo,band_hi\n";
    for (k, t) in grid.points().enumerate() {
        let f = f_d.at(k);
        match &band {
            Some(b) => writeln!(csv, "{t},{f},{},{}", f - b.radius, f + b.radius)?,
            None => writeln!(csv, "{t},{f},,")?,
        }
    }
    emit(out.as_deref(), &csv)?;

    let mut block = String::new();
    writeln!(block, "n_star = {}", diag.n_star)?;
    writeln!(block, "tail_bound = {}", diag.tail_bound)?;
    writeln!(block, "reversion_residual = {}", diag.reversion_residual)?;
    writeln!(
        block,
        "relative_reversion_residual = {}",
        diag.relative_reversion_residual
    )?;
    writeln!(
        block,
        "monotonicity_violations = {}",
        diag.monotonicity_violations
    )?;
    writeln!(block, "conditioning_records = {}", diag.conditioning_records)?;
    if let Some(b) = &band {
        writeln!(block, "band_radius = {}", b.radius)?;
        writeln!(block, "bootstrap_replicates = {}", b.replicates)?;
        writeln!(block, "dropped_replicates = {}", b.dropped_replicates)?;
        writeln!(block, "unstable_replicates = {}", b.unstable_replicates)?;
    }
    if let Some(w) = &diag.warning {
        writeln!(block, "warning = {w}")?;
    }
    match diag_out {
        Some(p) => emit(Some(&p), &block)?,
        None => eprint!("{block}"),
    }
    Ok(())
}

fn parse_probe(text: &str) -> Res<Vec<usize>> {
    let bad = || UsageError(format!("probe range `{text}`: expected A:B with 1 ≤ A < B"));
    let (a, b) = text.split_once(':').ok_or_else(bad)?;
    let (a, b): (usize, usize) = (
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    );
    if a < 1 || b <= a {
        return Err(bad().into());
    }
    Ok((a..=b).collect())
}

pub fn regime(a: RegimeArgs, cfg: &Config) -> Res<()> {
    let probes = parse_probe(&cfg.get(a.probe, "probe", "1:10".to_string())?)?;
    let out = cfg.pick(a.out, "out")?;
    let (f_wq, q) = match (cfg.pick(a.data, "data")?, cfg.pick(a.size, "size")?) {
        (Some(path), _) => {
            let ds: SampledDataset = load(&path)?;
            (empirical_sampled_pmf(&ds), ds.q)
        }
        (None, Some(size)) => {
            let q = required(cfg.pick(a.q, "q")?, "q")?;
            let size = parse_size(&size)?;
            ModelSpec::new(size.clone(), GapDist::Exponential { rate: 1.0 }, q)?;
            (sampled_size_pmf(&size.pmf(THEORY_W_MAX), q, 2000)?, q)
        }
        (None, None) => return Err(UsageError("give --data, or --size with --q".into()).into()),
    };
    let csv = regime_csv(&f_wq, q, &probes)?;
    emit(out.as_deref(), &csv)?;
    if out.is_some() {
        let rep = classify_regime(&f_wq, q, &probes, RegimeThresholds::default())?;
        println!("classification = {}", rep.classification);
    }
    Ok(())
}

pub fn experiment(a: ExperimentArgs, cfg: &Config) -> Res<()> {
    let name: PresetName = a.preset.parse()?;
    let mut preset = ExperimentPreset::new(name);
    let reps = cfg.get(a.reps, "reps", preset.mc_reps)?;
    let seed = seed(a.seed, cfg)?;
    let dir = cfg.get(a.out, "out", PathBuf::from(name.to_string()))?;
    if a.no_bands || cfg.get(None, "no_bands", false)? {
        preset.bands = false;
    }
    if reps == 0 {
        return Err(UsageError("--reps must be positive".into()).into());
    }
    let run = run_experiment(&preset, reps, seed)?;
    for f in write_experiment(&preset, &run, &dir)? {
        println!("{}", dir.join(f).display());
    }
    Ok(())
}
