//! Variant x environment x seed benchmark grid.
//!
//! Environment names:
//!
//! | name          | change from the base scenario                               |
//! |---------------|-------------------------------------------------------------|
//! | `linear`      | none                                                         |
//! | `sparse`      | sparse echo path (`scenario.sparse_active` non-zero taps)    |
//! | `clip`        | hard clipping of the loudspeaker signal at 20 dB SNER        |
//! | `snr<N>`      | noise `N` dB below the echo                                  |
//! | `tail_change` | echo path tail perturbed (amount 0.5) half way through       |
//! | `double_talk` | reverberant near-end speech from a quarter of the run on     |
//!
//! The base scenario is white far-end noise through a synthetic room path
//! as long as the filter, 30 dB below-echo noise, and no postfilter.

use std::path::{Path, PathBuf};

use crate::aec::{FilterVariant, VariantKind};
use crate::error::{Error, Result};

use super::config::{parse, parse_lines, read_text, EchoPathKind, FarSignal, PipelineConfig, StageMask};
use super::csv::{self, CsvRow};
use super::{run_pipeline, PipelineResult};

pub const CLIP_SNER_DB: f64 = 20.0;
pub const BASE_SNR_DB: f64 = 30.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    pub base: PipelineConfig,
    pub variants: Vec<VariantKind>,
    pub environments: Vec<String>,
    pub seeds: Vec<u64>,
    pub output: Option<PathBuf>,
    pub threads: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            base: bench_base(),
            variants: vec![VariantKind::Nlms],
            environments: vec!["linear".into()],
            seeds: vec![1],
            output: None,
            threads: 1,
        }
    }
}

fn bench_base() -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    let s = &mut cfg.scenario;
    s.far = FarSignal::White;
    s.echo_path = EchoPathKind::Air;
    s.echo_path_len = cfg.aec.taps;
    s.near_speech = false;
    s.snr_db = Some(BASE_SNR_DB);
    cfg.postfilter.stages = StageMask::NONE;
    cfg
}

impl BenchConfig {
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&read_text(path.as_ref())?)
    }

    /// `bench.*` keys describe the grid; every other key edits the base
    /// pipeline configuration.
    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut taps_set = false;
        let mut path_len_set = false;
        for (line, key, value) in parse_lines(text)? {
            let ctx = |e: Error| Error::Config(format!("line {line}: {e}"));
            match key.as_str() {
                "bench.variants" => {
                    cfg.variants = list(&value)
                        .map(|v| v.parse::<VariantKind>())
                        .collect::<Result<_>>()
                        .map_err(ctx)?
                }
                "bench.environments" => {
                    cfg.environments = list(&value).map(str::to_string).collect();
                    for env in &cfg.environments {
                        check_environment(env).map_err(ctx)?;
                    }
                }
                "bench.seeds" => {
                    cfg.seeds = list(&value).map(|v| parse(&key, v)).collect::<Result<_>>().map_err(ctx)?
                }
                "bench.repetitions" => {
                    let n: u64 = parse(&key, &value).map_err(ctx)?;
                    let base = cfg.base.scenario.seed;
                    cfg.seeds = (0..n).map(|i| base + i).collect();
                }
                "bench.output" => cfg.output = Some(PathBuf::from(&value)),
                "bench.threads" => cfg.threads = parse::<usize>(&key, &value).map_err(ctx)?.max(1),
                k if k.starts_with("bench.") => {
                    return Err(Error::Config(format!("line {line}: unknown key '{k}'")));
                }
                _ => {
                    taps_set |= key == "aec.taps";
                    path_len_set |= key == "scenario.echo_path_len";
                    cfg.base.set(&key, &value).map_err(ctx)?;
                }
            }
        }
        if taps_set && !path_len_set {
            cfg.base.scenario.echo_path_len = cfg.base.aec.taps;
        }
        if cfg.variants.is_empty() || cfg.environments.is_empty() || cfg.seeds.is_empty() {
            return Err(Error::Config("bench needs at least one variant, environment and seed".into()));
        }
        cfg.base.validate()?;
        Ok(cfg)
    }

    /// Replaces the seed list by `n` consecutive seeds starting at `first`.
    pub fn reseed(&mut self, first: u64) {
        let n = self.seeds.len() as u64;
        self.seeds = (0..n).map(|i| first + i).collect();
    }

    pub fn cell_count(&self) -> usize {
        self.variants.len() * self.environments.len() * self.seeds.len()
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

fn check_environment(name: &str) -> Result<()> {
    match name {
        "linear" | "sparse" | "clip" | "tail_change" | "double_talk" => Ok(()),
        n if n.starts_with("snr") => n[3..]
            .parse::<f64>()
            .map(|_| ())
            .map_err(|_| Error::Config(format!("bad noise environment '{n}'"))),
        n => Err(Error::Config(format!("unknown environment '{n}'"))),
    }
}

/// Pipeline configuration of one benchmark cell.
pub fn cell_config(base: &PipelineConfig, variant: VariantKind, environment: &str, seed: u64) -> Result<PipelineConfig> {
    check_environment(environment)?;
    let mut cfg = base.clone();
    if cfg.aec.variant.kind() != variant {
        cfg.aec.variant = FilterVariant::default_for(variant);
    }
    cfg.aec_enabled = true;
    cfg.output.dir = None;
    let s = &mut cfg.scenario;
    s.name = environment.to_string();
    s.seed = seed;
    match environment {
        "linear" => {}
        "sparse" => s.echo_path = EchoPathKind::Sparse,
        "clip" => s.clip_sner_db = Some(CLIP_SNER_DB),
        "tail_change" => s.tail_change_s = Some(s.duration_s / 2.0),
        "double_talk" => {
            s.near_speech = true;
            s.near_reverb = true;
            s.near_start_s = s.duration_s / 4.0;
        }
        n => s.snr_db = Some(n[3..].parse().expect("checked above")),
    }
    Ok(cfg)
}

#[derive(Debug, Clone)]
pub struct BenchResult {
    /// One row per cell in variant, environment, seed order.
    pub rows: Vec<CsvRow>,
    /// Per (variant, environment) medians over seeds.
    pub summary: Vec<CsvRow>,
    pub diverged: usize,
}

impl BenchResult {
    pub fn all_rows(&self) -> Vec<CsvRow> {
        self.rows.iter().chain(&self.summary).cloned().collect()
    }

    pub fn csv(&self) -> String {
        csv::render(&self.all_rows())
    }

    pub fn median(&self, variant: VariantKind, environment: &str) -> Option<&CsvRow> {
        self.summary
            .iter()
            .find(|r| r.variant == variant.name() && r.environment == environment)
    }
}

fn run_cell(cfg: &PipelineConfig) -> Result<(CsvRow, bool)> {
    let (res, _): (PipelineResult, _) = run_pipeline(cfg)?;
    Ok((res.csv_row(cfg), res.diverged_at.is_some()))
}

/// Runs every cell (in parallel when `threads > 1`) and writes the CSV if an
/// output path is configured. Row order does not depend on scheduling.
pub fn run_benchmark(bench: &BenchConfig) -> Result<BenchResult> {
    let mut cells = Vec::with_capacity(bench.cell_count());
    for &v in &bench.variants {
        for env in &bench.environments {
            for &seed in &bench.seeds {
                cells.push(cell_config(&bench.base, v, env, seed)?);
            }
        }
    }
    let mut results: Vec<Option<Result<(CsvRow, bool)>>> = (0..cells.len()).map(|_| None).collect();
    let threads = bench.threads.max(1).min(cells.len().max(1));
    if threads == 1 {
        for (slot, cfg) in results.iter_mut().zip(&cells) {
            *slot = Some(run_cell(cfg));
        }
    } else {
        let chunk = cells.len().div_ceil(threads);
        std::thread::scope(|scope| {
            for (slots, cfgs) in results.chunks_mut(chunk).zip(cells.chunks(chunk)) {
                scope.spawn(move || {
                    for (slot, cfg) in slots.iter_mut().zip(cfgs) {
                        *slot = Some(run_cell(cfg));
                    }
                });
            }
        });
    }

    let mut rows = Vec::with_capacity(cells.len());
    let mut diverged = 0;
    for r in results {
        let (row, div) = r.expect("every cell ran")?;
        diverged += div as usize;
        rows.push(row);
    }

    let per_group = bench.seeds.len();
    let summary = rows
        .chunks(per_group)
        .map(|group| {
            let col = |i: usize| csv::median(&group.iter().map(|r| r.values()[i]).collect::<Vec<_>>());
            CsvRow {
                variant: group[0].variant.clone(),
                environment: group[0].environment.clone(),
                seed: "median".into(),
                mean_erle_db: col(0),
                t20_s: col(1),
                ss_misalign_db: col(2),
                seg_snr_db: col(3),
                seg_sir_db: col(4),
                lsd_db: col(5),
            }
        })
        .collect();
    let result = BenchResult { rows, summary, diverged };
    if let Some(path) = &bench.output {
        csv::write(path, &result.all_rows())?;
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_parsing() {
        let b = BenchConfig::from_text(
            "bench.variants = nlms, apa\nbench.environments = linear,snr10\nbench.seeds = 3,4,5\naec.taps = 256\n",
        )
        .unwrap();
        assert_eq!(b.cell_count(), 12);
        assert_eq!(b.base.scenario.echo_path_len, 256);
        assert!(BenchConfig::from_text("bench.environments = lunar").is_err());
        assert!(BenchConfig::from_text("bench.variants = rls").is_err());
        assert!(BenchConfig::from_text("bench.bogus = 1").is_err());
    }

    #[test]
    fn environments_modify_the_base() {
        let base = bench_base();
        let c = cell_config(&base, VariantKind::Apa, "snr10", 9).unwrap();
        assert_eq!(c.scenario.snr_db, Some(10.0));
        assert_eq!(c.scenario.seed, 9);
        assert_eq!(c.aec.variant.kind(), VariantKind::Apa);
        let c = cell_config(&base, VariantKind::Nlms, "clip", 1).unwrap();
        assert_eq!(c.scenario.clip_sner_db, Some(CLIP_SNER_DB));
    }
}
