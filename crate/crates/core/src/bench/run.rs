//! `fetch` and `run`: populate the series cache, then fill the prediction
//! cube one (methodology, period) block at a time.

use std::collections::BTreeSet;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{PeriodConfig, RunConfig};
use crate::data::synthetic::{generate, SyntheticConfig};
use crate::data::{availability_filter, Dataset, FetchReport, FredClient, Panel};
use crate::error::{Error, Result};
use crate::evaluation::{parse_records, record_fields, CellKey, PredictionCube, CUBE_HEADER};
use crate::model_api::{fit, predict, tune, MethodologyId, PredictionRecord};
use crate::vintage::mask_vintage;

pub const CUBE_FILE: &str = "cube.csv";
pub const CUBE_META_FILE: &str = "cube.meta.json";
pub const ACTUALS_FILE: &str = "actuals.csv";

pub fn cube_path(out_dir: &Path) -> PathBuf {
    out_dir.join(CUBE_FILE)
}

/// Populates the cache with every manifest series. Fails when the target
/// series could not be loaded; other failures are listed in the report.
pub fn cmd_fetch(cfg: &RunConfig) -> Result<FetchReport> {
    let manifest = cfg.manifest()?;
    let client = FredClient::from_env(&cfg.cache_dir)?;
    let (dataset, report) = Dataset::fetch(&manifest, &client);
    dataset?;
    Ok(report)
}

/// Growth-rate panel for the run: the generated dataset when synthetic,
/// otherwise the manifest series read through the cache.
pub fn load_panel(cfg: &RunConfig) -> Result<Panel> {
    let dataset = if cfg.synthetic {
        generate(&SyntheticConfig::default()).dataset
    } else {
        let client = FredClient::from_env(&cfg.cache_dir)?;
        Dataset::fetch(&cfg.manifest()?, &client).0?
    };
    dataset.growth_panel()
}

/// Sidecar guarding an append-only cube against schema or config drift.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct CubeMeta {
    header_sha256: String,
    config_fingerprint: String,
}

fn header_digest() -> String {
    hex::encode(Sha256::digest(CUBE_HEADER.join(",").as_bytes()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellFailure {
    pub key: CellKey,
    pub cause: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSummary {
    pub written: usize,
    pub skipped: usize,
    pub failures: Vec<CellFailure>,
}

impl RunSummary {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Reads existing cube rows after checking the sidecar; starts a fresh cube
/// when neither file exists.
fn open_cube(out_dir: &Path, fingerprint: &str) -> Result<Vec<PredictionRecord>> {
    let cube = cube_path(out_dir);
    let meta_path = out_dir.join(CUBE_META_FILE);
    let expected = CubeMeta {
        header_sha256: header_digest(),
        config_fingerprint: fingerprint.to_string(),
    };
    if !cube.exists() {
        fs::write(&meta_path, serde_json::to_string_pretty(&expected)?)?;
        let mut f = File::create(&cube)?;
        writeln!(f, "{}", CUBE_HEADER.join(","))?;
        return Ok(Vec::new());
    }
    let meta: CubeMeta = match fs::read_to_string(&meta_path) {
        Ok(text) => serde_json::from_str(&text)?,
        Err(_) => return Err(Error::Config(format!("{} exists without {CUBE_META_FILE}", cube.display()))),
    };
    if meta.header_sha256 != expected.header_sha256 {
        return Err(Error::Config(format!("{} was written with a different column layout", cube.display())));
    }
    if meta.config_fingerprint != expected.config_fingerprint {
        return Err(Error::Config(format!(
            "{} was produced under different settings; use a fresh output directory",
            cube.display()
        )));
    }
    // A crash mid-append can leave a torn last line; drop it.
    let text = fs::read_to_string(&cube)?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() != text.len() {
        warn!("dropping partial trailing row in {}", cube.display());
        fs::write(&cube, complete)?;
    }
    parse_records(complete.as_bytes())
}

/// One unit of work: a methodology on a period, restricted to missing cells.
struct Block<'a> {
    id: MethodologyId,
    period: &'a PeriodConfig,
    panel: &'a Panel,
    cells: Vec<CellKey>,
}

fn run_block(cfg: &RunConfig, b: &Block) -> (Vec<PredictionRecord>, Vec<CellFailure>) {
    let fail_all = |cause: String| {
        warn!("{} {}: {cause}", b.id, b.period.name);
        let failures = b
            .cells
            .iter()
            .map(|k| CellFailure {
                key: k.clone(),
                cause: cause.clone(),
            })
            .collect();
        (Vec::new(), failures)
    };
    let split = match b.period.split() {
        Ok(s) => s,
        Err(e) => return fail_all(e.to_string()),
    };
    let mut spec = cfg.base_spec(b.id);
    if let Some(grid) = cfg.grid(b.id) {
        match tune(&spec, &grid, b.panel, &split, cfg.tune.metric) {
            Ok(s) => spec = s,
            Err(e) => return fail_all(e.to_string()),
        }
    }
    let model = match fit(&spec, b.panel, &split) {
        Ok(m) => m,
        Err(e) => return fail_all(e.to_string()),
    };
    let results: Vec<std::result::Result<PredictionRecord, CellFailure>> = b
        .cells
        .par_iter()
        .map(|k| {
            predict(&model, &mask_vintage(b.panel, k.quarter, k.offset))
                .map(|value| PredictionRecord {
                    methodology: k.methodology,
                    period: k.period.clone(),
                    quarter: k.quarter,
                    offset: k.offset,
                    value,
                })
                .map_err(|e| {
                    warn!("{} {} {} offset {}: {e}", k.methodology, k.period, k.quarter, k.offset);
                    CellFailure {
                        key: k.clone(),
                        cause: e.to_string(),
                    }
                })
        })
        .collect();
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok(rec) => records.push(rec),
            Err(f) => failures.push(f),
        }
    }
    (records, failures)
}

/// Fits and predicts every missing cell of the configured grid. Existing
/// cells are kept as they are; finished blocks are appended as they
/// complete and the file is rewritten in canonical order at the end.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunSummary> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir)?;
    let existing = open_cube(&cfg.out_dir, &cfg.fingerprint())?;
    let done: BTreeSet<CellKey> = existing
        .iter()
        .map(|r| CellKey::new(r.methodology, &r.period, r.quarter, r.offset))
        .collect();

    let full = load_panel(cfg)?;
    let periods = cfg.periods();
    let panels: Vec<Panel> = periods
        .iter()
        .map(|p| availability_filter(&full, p.availability_cutoff))
        .collect();

    let mut cube = PredictionCube::default();
    for r in existing {
        cube.insert(r)?;
    }
    let mut summary = RunSummary {
        skipped: cube.len(),
        ..RunSummary::default()
    };
    let mut blocks = Vec::new();
    for (period, panel) in periods.iter().zip(&panels) {
        let split = period.split()?;
        for q in split.test_quarters() {
            let v = panel.target_value(q).ok_or_else(|| {
                Error::MissingCells(format!("no realized target for {q} in {}", period.name))
            })?;
            cube.set_actual(q, v);
        }
        for id in &cfg.methodologies {
            let cells: Vec<CellKey> = split
                .test_quarters()
                .into_iter()
                .flat_map(|q| cfg.offsets.iter().map(move |o| (q, *o)))
                .map(|(q, o)| CellKey::new(*id, &period.name, q, o))
                .filter(|k| !done.contains(k))
                .collect();
            if cells.is_empty() {
                info!("{id} {}: complete, skipping", period.name);
                continue;
            }
            blocks.push(Block {
                id: *id,
                period,
                panel,
                cells,
            });
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.jobs)
        .build()
        .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    let writer = Mutex::new(OpenOptions::new().append(true).open(cube_path(&cfg.out_dir))?);
    let outcomes: Vec<Result<(Vec<PredictionRecord>, Vec<CellFailure>)>> = pool.install(|| {
        blocks
            .par_iter()
            .map(|b| {
                info!("{} {}: {} cells", b.id, b.period.name, b.cells.len());
                let (records, failures) = run_block(cfg, b);
                let mut w = writer.lock().expect("writer lock");
                let mut csv = csv::WriterBuilder::new().has_headers(false).from_writer(&mut *w);
                for r in &records {
                    csv.write_record(record_fields(r))?;
                }
                csv.flush()?;
                Ok((records, failures))
            })
            .collect()
    });
    for o in outcomes {
        let (records, failures) = o?;
        summary.written += records.len();
        summary.failures.extend(failures);
        for r in records {
            cube.insert(r)?;
        }
    }
    summary.failures.sort_by(|a, b| a.key.cmp(&b.key));

    write_canonical(&cube, &cfg.out_dir)?;
    Ok(summary)
}

/// Rewrites the cube and actuals in sorted order via a temporary file.
fn write_canonical(cube: &PredictionCube, out_dir: &Path) -> Result<()> {
    let tmp = out_dir.join(format!("{CUBE_FILE}.tmp"));
    cube.write_csv(File::create(&tmp)?)?;
    fs::rename(&tmp, cube_path(out_dir))?;
    cube.write_actuals_csv(File::create(out_dir.join(ACTUALS_FILE))?)?;
    Ok(())
}

/// Loads a cube and its actuals from a run's output directory.
pub fn load_cube(out_dir: &Path) -> Result<PredictionCube> {
    let path = cube_path(out_dir);
    let mut cube = PredictionCube::read_csv(File::open(&path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?)?;
    let actuals = out_dir.join(ACTUALS_FILE);
    cube.read_actuals_csv(File::open(&actuals).map_err(|e| Error::Config(format!("{}: {e}", actuals.display())))?)?;
    cube.validate()?;
    Ok(cube)
}

/// Number of data rows in a cube file, for quick checks.
pub fn cube_rows(path: &Path) -> Result<usize> {
    Ok(BufReader::new(File::open(path)?).lines().count().saturating_sub(1))
}
