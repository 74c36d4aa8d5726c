//! Simulation of thinned flows and the newline-delimited dataset format.
//!
//! Every record draws from its own ChaCha8 stream: the generator is keyed by
//! the dataset seed and the stream number is the record index, so a dataset
//! is a pure function of `(model, n, seed)` no matter how work is scheduled.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::{Error, Result};
use crate::model::{FlowSampler, ModelSpec};

/// One sampled flow: `W_q` and the `W_q − 1` gaps between kept renewals.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub sampled_count: usize,
    pub gaps: Vec<f64>,
}

impl FlowRecord {
    pub fn new(sampled_count: usize, gaps: Vec<f64>) -> Result<Self> {
        let r = Self { sampled_count, gaps };
        r.validate().map_err(Error::param)?;
        Ok(r)
    }

    pub fn empty() -> Self {
        Self {
            sampled_count: 0,
            gaps: Vec::new(),
        }
    }

    fn validate(&self) -> std::result::Result<(), String> {
        let want = self.sampled_count.saturating_sub(1);
        if self.gaps.len() != want {
            return Err(format!(
                "s = {} needs {want} gaps, found {}",
                self.sampled_count,
                self.gaps.len()
            ));
        }
        if let Some(g) = self.gaps.iter().find(|g| !(g.is_finite() && **g > 0.0)) {
            return Err(format!("gap {g} is not positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledDataset {
    pub q: f64,
    pub records: Vec<FlowRecord>,
    pub seed: u64,
}

impl SampledDataset {
    pub fn new(q: f64, records: Vec<FlowRecord>, seed: u64) -> Result<Self> {
        if !(q > 0.0 && q < 1.0) {
            return Err(Error::param(format!("q = {q} is not in (0, 1)")));
        }
        if records.is_empty() {
            return Err(Error::param("a dataset needs at least one record"));
        }
        Ok(Self { q, records, seed })
    }

    pub fn n(&self) -> usize {
        self.records.len()
    }

    pub fn max_sampled_count(&self) -> usize {
        self.records.iter().map(|r| r.sampled_count).max().unwrap_or(0)
    }

    /// Sampled counts, in record order.
    pub fn counts(&self) -> impl Iterator<Item = usize> + '_ {
        self.records.iter().map(|r| r.sampled_count)
    }

    pub fn empty_fraction(&self) -> f64 {
        self.counts().filter(|&s| s == 0).count() as f64 / self.n() as f64
    }
}

/// Generator for record `index` of a dataset with base `seed`.
pub fn record_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// SplitMix64 finalizer; used to derive independent seeds for replicates.
pub fn derive_seed(base: u64, tag: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(index.wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Draws `(w, original gaps)` for one unthinned flow.
pub fn simulate_flow<R: Rng + ?Sized>(sampler: &FlowSampler, rng: &mut R) -> (usize, Vec<f64>) {
    let w = sampler.sample_size(rng);
    let gaps = (1..w).map(|_| sampler.sample_gap(rng)).collect();
    (w, gaps)
}

/// Keeps renewal `j` (0-based) when `keep[j]`; sampled gaps are sums of the
/// original gaps between consecutive kept renewals.
pub fn thin_with_pattern(original_gaps: &[f64], keep: &[bool]) -> FlowRecord {
    assert_eq!(keep.len(), original_gaps.len() + 1, "pattern length must be w");
    let mut gaps = Vec::new();
    let mut count = 0;
    let mut running = 0.0;
    for (j, &k) in keep.iter().enumerate() {
        if k {
            if count > 0 {
                gaps.push(running);
            }
            count += 1;
            running = 0.0;
        }
        if j < original_gaps.len() {
            running += original_gaps[j];
        }
    }
    FlowRecord {
        sampled_count: count,
        gaps,
    }
}

/// Keeps each of the `w` renewals independently with probability `q`.
pub fn thin_flow<R: Rng + ?Sized>(w: usize, original_gaps: &[f64], q: f64, rng: &mut R) -> FlowRecord {
    assert_eq!(original_gaps.len() + 1, w.max(1), "w − 1 gaps expected");
    let mut gaps = Vec::new();
    let mut count = 0;
    let mut running = 0.0;
    for j in 0..w {
        if rng.random::<f64>() < q {
            if count > 0 {
                gaps.push(running);
            }
            count += 1;
            running = 0.0;
        }
        if j + 1 < w {
            running += original_gaps[j];
        }
    }
    FlowRecord {
        sampled_count: count,
        gaps,
    }
}

/// One thinned flow drawn from the model.
fn simulate_record<R: Rng + ?Sized>(sampler: &FlowSampler, q: f64, rng: &mut R) -> FlowRecord {
    let (w, gaps) = simulate_flow(sampler, rng);
    thin_flow(w, &gaps, q, rng)
}

/// `n` independent thinned flows; record `k` uses [`record_rng`]`(seed, k)`.
pub fn simulate_dataset(model: &ModelSpec, n: usize, seed: u64) -> Result<SampledDataset> {
    let sampler = FlowSampler::new(model)?;
    simulate_with(&sampler, model.q, n, seed)
}

/// As [`simulate_dataset`], reusing a prepared sampler.
pub fn simulate_with(sampler: &FlowSampler, q: f64, n: usize, seed: u64) -> Result<SampledDataset> {
    if n == 0 {
        return Err(Error::param("a dataset needs at least one record"));
    }
    let records = (0..n as u64)
        .into_par_iter()
        .map(|k| simulate_record(sampler, q, &mut record_rng(seed, k)))
        .collect();
    SampledDataset::new(q, records, seed)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    q: f64,
    n: usize,
    seed: u64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RecordLine {
    s: usize,
    gaps: Vec<f64>,
}

/// Writes the header line and one line per record; floats carry 17
/// significant digits so the round trip is exact.
pub fn write_dataset(ds: &SampledDataset, path: &Path) -> Result<()> {
    let mut out = BufWriter::new(File::create(path)?);
    write_dataset_to(ds, &mut out)?;
    out.flush()?;
    Ok(())
}

pub fn write_dataset_to<W: Write>(ds: &SampledDataset, out: &mut W) -> Result<()> {
    writeln!(
        out,
        "{{\"q\": {:?}, \"n\": {}, \"seed\": {}}}",
        ds.q,
        ds.n(),
        ds.seed
    )?;
    let mut line = String::new();
    for r in &ds.records {
        line.clear();
        line.push_str(&format!("{{\"s\":{},\"gaps\":[", r.sampled_count));
        for (i, g) in r.gaps.iter().enumerate() {
            if i > 0 {
                line.push(',');
            }
            line.push_str(&format!("{g:.16e}"));
        }
        line.push_str("]}");
        writeln!(out, "{line}")?;
    }
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<SampledDataset> {
    let file = File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    read_dataset_from(BufReader::new(file))
}

pub fn read_dataset_from<R: BufRead>(input: R) -> Result<SampledDataset> {
    let mut lines = input.lines().enumerate().filter_map(|(i, l)| match l {
        Ok(s) if s.trim().is_empty() => None,
        other => Some((i + 1, other)),
    });
    let (hline, header) = lines.next().ok_or(Error::Format {
        line: 1,
        msg: "missing header".into(),
    })?;
    let header: Header = serde_json::from_str(&header?).map_err(|e| Error::Format {
        line: hline,
        msg: format!("bad header: {e}"),
    })?;
    let mut records = Vec::with_capacity(header.n);
    for (line, text) in lines {
        let rec: RecordLine = serde_json::from_str(&text?).map_err(|e| Error::Format {
            line,
            msg: e.to_string(),
        })?;
        let r = FlowRecord {
            sampled_count: rec.s,
            gaps: rec.gaps,
        };
        r.validate().map_err(|msg| Error::Format { line, msg })?;
        records.push(r);
    }
    if records.len() != header.n {
        return Err(Error::Format {
            line: hline,
            msg: format!("header declares {} records, found {}", header.n, records.len()),
        });
    }
    SampledDataset::new(header.q, records, header.seed).map_err(|e| Error::Format {
        line: hline,
        msg: e.to_string(),
    })
}
