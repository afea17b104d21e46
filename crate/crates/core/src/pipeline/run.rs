use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{LightingSpec, ProxyShape, RenderedRoi, RunConfig};
use super::manifest::{Manifest, ManifestRow};
use crate::analysis::{labels_from_records, EvalRecord, GroundTruthLabel};
use crate::error::{Error, Result};
use crate::extraction::{
    cheek_estimate, extract, mean_color, mmm_from_mask, ExtractionInput, Family, Landmarks, MaskSource, Method,
    RegionSpec, Side, SkinEstimate, SkinMask,
};
use crate::face_detect::{detect_faces, select_primary_face, Cascade, FaceBox};
use crate::imaging::SrgbImage;
use crate::recolor::{recolor, RecolorStrategy, Texture};
use crate::relight::{render_proxy, LightingConfig, RenderProxy, ShLighting};

const CACHE_SCHEMA: &str = "tonebench-cell-v2";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status")]
pub enum CellStatus {
    Ok,
    Skipped { reason: String },
    Error { reason: String },
}

impl CellStatus {
    pub fn key(&self) -> &'static str {
        match self {
            CellStatus::Ok => "ok",
            CellStatus::Skipped { .. } => "skipped",
            CellStatus::Error { .. } => "error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub image_id: String,
    pub method: Method,
    pub recolor: RecolorStrategy,
    pub lighting: LightingSpec,
    #[serde(flatten)]
    pub status: CellStatus,
    pub cached: bool,
    /// Wall time spent on the cell in this run; zero for cache hits.
    pub millis: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerTotals {
    pub cells: usize,
    pub ok: usize,
    pub skipped: usize,
    pub error: usize,
    pub cache_hits: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunLedger {
    pub config_hash: String,
    pub version: String,
    pub manifest: PathBuf,
    pub images: usize,
    pub config: RunConfig,
    pub totals: LedgerTotals,
    pub labels: Vec<GroundTruthLabel>,
    pub entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub ledger: RunLedger,
    pub records: Vec<EvalRecord>,
    pub records_path: PathBuf,
    pub ledger_path: PathBuf,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CachedCell {
    status: CellStatus,
    record: Option<EvalRecord>,
}

/// Per-image state shared by that image's cells.
struct ImageContext {
    sh: Option<ShLighting>,
    refs: BTreeMap<Method, std::result::Result<SkinEstimate, String>>,
}

/// Shared rendering inputs for every cell.
struct Stage {
    base: Texture,
    proxy: RenderProxy,
    coverage: SkinMask,
    coverage_box: FaceBox,
}

#[derive(Clone, Copy)]
struct Cell {
    row: usize,
    method: Method,
    recolor: RecolorStrategy,
    lighting: LightingSpec,
}

/// Runs the full grid on a dedicated pool of `config.jobs` workers.
pub fn run(manifest: &Manifest, config: &RunConfig) -> Result<RunOutput> {
    config.validate().map_err(Error::invalid)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.jobs)
        .build()
        .map_err(|e| Error::Internal(format!("thread pool: {e}")))?;
    pool.install(|| run_in_pool(manifest, config))
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn hash_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Content fingerprint of one manifest row.
fn row_fingerprint(row: &ManifestRow) -> Result<String> {
    let mut h = Sha256::new();
    h.update(row.id.as_bytes());
    h.update([0]);
    for p in [Some(&row.photo), row.albedo.as_ref(), row.landmarks.as_ref(), row.sh.as_ref()] {
        match p {
            Some(p) => h.update(hash_file(p)?.as_bytes()),
            None => h.update(b"-"),
        }
        h.update([0]);
    }
    match row.face {
        Some(f) => h.update(format!("{},{},{},{}", f.x, f.y, f.w, f.h).as_bytes()),
        None => h.update(b"-"),
    }
    Ok(hex::encode(h.finalize()))
}

fn cell_key(run_fp: &str, row_fp: &str, cell: &Cell) -> String {
    let text = format!(
        "{CACHE_SCHEMA}\n{}\n{run_fp}\n{row_fp}\n{}\n{}\n{}",
        env!("CARGO_PKG_VERSION"),
        cell.method.key(),
        cell.recolor.key(),
        cell.lighting.key()
    );
    sha256_hex(text.as_bytes())
}

fn cache_path(out: &Path, key: &str) -> PathBuf {
    out.join("cache").join(&key[..2]).join(format!("{key}.json"))
}

fn read_cache(path: &Path) -> Option<CachedCell> {
    let text = std::fs::read_to_string(path).ok()?;
    serde_json::from_str(&text).ok()
}

/// Writes via a temporary file in the target directory and an atomic rename,
/// so readers never observe a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn load_context(
    row: &ManifestRow,
    config: &RunConfig,
    cascade: Option<&Cascade>,
) -> std::result::Result<ImageContext, String> {
    let photo = SrgbImage::load(&row.photo).map_err(|e| e.to_string())?;
    let albedo = match &row.albedo {
        Some(p) => Some(SrgbImage::load(p).map_err(|e| e.to_string())?),
        None => None,
    };
    let landmarks = match &row.landmarks {
        Some(p) => Some(Landmarks::load(p).map_err(|e| e.to_string())?),
        None => None,
    };
    let sh = match &row.sh {
        Some(p) => Some(ShLighting::load(p).map_err(|e| e.to_string())?),
        None => None,
    };
    let face = row.face.or_else(|| {
        let cascade = cascade?;
        select_primary_face(&detect_faces(&photo.to_luma8(), cascade, &config.detect))
    });
    let mut input = ExtractionInput::new(&photo);
    if let Some(a) = &albedo {
        input = input.with_albedo(a);
    }
    if let Some(lm) = &landmarks {
        input = input.with_landmarks(lm);
    }
    if let Some(f) = face {
        input = input.with_face(f);
    }
    let refs = config
        .methods
        .iter()
        .filter(|m| !m.uses_albedo() || albedo.is_some())
        .map(|&m| (m, extract(&input, m, &config.extract).map_err(|e| e.to_string())))
        .collect();
    Ok(ImageContext {
        sh,
        refs,
    })
}

fn rendered_estimate(
    rendered: &SrgbImage,
    method: Method,
    stage: &Stage,
    config: &RunConfig,
) -> std::result::Result<SkinEstimate, String> {
    match config.rendered_roi {
        RenderedRoi::SameFamily => match method.family() {
            Family::Cheek => cheek_estimate(rendered, stage.coverage_box, method, &config.extract),
            Family::Mmm => mmm_from_mask(rendered, &stage.coverage, method, &config.extract)
                .map(|e| e.with_mask_source(MaskSource::Coverage)),
        },
        RenderedRoi::CentralPatch { fraction } => {
            let b = stage.coverage_box;
            let side = ((fraction * f64::from(b.w.min(b.h))).round() as u32).max(1);
            let region = RegionSpec {
                x: b.x + (b.w - side) / 2,
                y: b.y + (b.h - side) / 2,
                w: side,
                h: side,
                side: Side::Left,
            };
            mean_color(rendered, &[region], 1)
                .map(|s| SkinEstimate::new(method, s.mean, s.count, config.extract.boundary))
        }
    }
    .map_err(|e| format!("rendered-side extraction: {e}"))
}

fn compute_cell(
    row: &ManifestRow,
    ctx: &std::result::Result<ImageContext, String>,
    cell: &Cell,
    stage: &Stage,
    config: &RunConfig,
) -> CachedCell {
    let fail = |reason: String| CachedCell {
        status: CellStatus::Error { reason },
        record: None,
    };
    let skip = |reason: &str| CachedCell {
        status: CellStatus::Skipped {
            reason: reason.to_string(),
        },
        record: None,
    };
    if cell.method.uses_albedo() && row.albedo.is_none() {
        return skip("no albedo map for this image");
    }
    if cell.lighting == LightingSpec::Cfd && row.sh.is_none() {
        return skip("no SH lighting file for this image");
    }
    let ctx = match ctx {
        Ok(c) => c,
        Err(e) => return fail(format!("loading inputs: {e}")),
    };
    let reference = match ctx.refs.get(&cell.method) {
        Some(Ok(r)) => r,
        Some(Err(e)) => return fail(format!("reference extraction: {e}")),
        None => return fail("reference estimate unavailable".into()),
    };
    let light = match cell.lighting {
        LightingSpec::Frontal => LightingConfig::Frontal,
        LightingSpec::Paramount => LightingConfig::Paramount,
        LightingSpec::Cfd => LightingConfig::CfdSh(ctx.sh.expect("checked above")),
        LightingSpec::Ambient => LightingConfig::CfdSh(ShLighting::ambient(1.0)),
    };
    let recolored = match recolor(&stage.base, reference.mean, cell.recolor, config.recolor_space) {
        Ok(t) => t,
        Err(e) => return fail(format!("recolor: {e}")),
    };
    let rendered = match render_proxy(&recolored.texture, &light, &stage.proxy, config.exposure) {
        Ok(img) => img.quantized(),
        Err(e) => return fail(format!("render: {e}")),
    };
    match rendered_estimate(&rendered, cell.method, stage, config) {
        Ok(est) => CachedCell {
            status: CellStatus::Ok,
            record: Some(EvalRecord::new(
                row.id.clone(),
                cell.recolor,
                cell.lighting.key(),
                reference,
                &est,
            )),
        },
        Err(e) => fail(e),
    }
}

fn run_in_pool(manifest: &Manifest, config: &RunConfig) -> Result<RunOutput> {
    let config_hash = config.hash();
    let out = config.out.clone();
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;

    let cascade_fp = match &config.cascade {
        Some(p) => hash_file(p)?,
        None => "bundled".into(),
    };
    let mut canonical = config.clone();
    canonical.out = PathBuf::new();
    canonical.jobs = 0;
    let run_fp = sha256_hex(
        format!(
            "{}\n{cascade_fp}",
            serde_json::to_string(&canonical).map_err(|e| Error::Internal(e.to_string()))?
        )
        .as_bytes(),
    );

    let rows = &manifest.rows;
    let row_fps: Vec<std::result::Result<String, String>> =
        rows.par_iter().map(|r| row_fingerprint(r).map_err(|e| e.to_string())).collect();

    let mut cells = Vec::with_capacity(rows.len() * config.methods.len() * config.recolors.len() * config.lightings.len());
    for row in 0..rows.len() {
        for &method in &config.methods {
            for &recolor in &config.recolors {
                for &lighting in &config.lightings {
                    cells.push(Cell {
                        row,
                        method,
                        recolor,
                        lighting,
                    });
                }
            }
        }
    }

    let keys: Vec<Option<String>> = cells
        .iter()
        .map(|c| row_fps[c.row].as_ref().ok().map(|fp| cell_key(&run_fp, fp, c)))
        .collect();
    let hits: Vec<Option<CachedCell>> = keys
        .par_iter()
        .map(|k| match k {
            Some(k) if config.cache => read_cache(&cache_path(&out, k)),
            _ => None,
        })
        .collect();

    let needed: BTreeSet<usize> = cells
        .iter()
        .zip(&hits)
        .filter(|(_, h)| h.is_none())
        .map(|(c, _)| c.row)
        .collect();
    let needs_cascade = needed.iter().any(|&r| rows[r].face.is_none())
        && config.methods.iter().any(|m| m.family() == Family::Cheek);
    let cascade = if needs_cascade { Some(config.load_cascade()?) } else { None };

    let contexts: BTreeMap<usize, std::result::Result<ImageContext, String>> = needed
        .par_iter()
        .map(|&r| {
            let ctx = match &row_fps[r] {
                Err(e) => Err(e.clone()),
                Ok(_) => load_context(&rows[r], config, cascade.as_ref()),
            };
            (r, ctx)
        })
        .collect();

    let stage = if needed.is_empty() {
        None
    } else {
        let base = config.base.generate();
        let (w, h) = base.dims();
        let proxy = match config.proxy {
            ProxyShape::Sphere => RenderProxy::sphere(w, h),
            ProxyShape::Flat => RenderProxy::flat(w, h),
        };
        let coverage = proxy.coverage_mask();
        let coverage_box = proxy
            .coverage_box()
            .ok_or_else(|| Error::invalid("render proxy covers no pixels"))?;
        Some(Stage {
            base,
            proxy,
            coverage,
            coverage_box,
        })
    };

    let results: Vec<(CachedCell, bool, f64)> = cells
        .par_iter()
        .zip(hits.into_par_iter())
        .zip(keys.par_iter())
        .map(|((cell, hit), key)| {
            if let Some(h) = hit {
                return Ok((h, true, 0.0));
            }
            let start = Instant::now();
            let stage = stage.as_ref().expect("built when any cell misses");
            let res = compute_cell(&rows[cell.row], &contexts[&cell.row], cell, stage, config);
            let millis = start.elapsed().as_secs_f64() * 1e3;
            if let (true, Some(k)) = (config.cache, key) {
                let json = serde_json::to_vec(&res).map_err(|e| Error::Internal(e.to_string()))?;
                write_atomic(&cache_path(&out, k), &json)?;
            }
            Ok((res, false, millis))
        })
        .collect::<Result<_>>()?;

    let mut totals = LedgerTotals {
        cells: cells.len(),
        ..LedgerTotals::default()
    };
    let mut entries = Vec::with_capacity(cells.len());
    let mut records = Vec::new();
    for (cell, (res, cached, millis)) in cells.iter().zip(results) {
        match res.status {
            CellStatus::Ok => totals.ok += 1,
            CellStatus::Skipped { .. } => totals.skipped += 1,
            CellStatus::Error { .. } => totals.error += 1,
        }
        totals.cache_hits += usize::from(cached);
        if let Some(r) = res.record {
            records.push(r);
        }
        entries.push(LedgerEntry {
            image_id: rows[cell.row].id.clone(),
            method: cell.method,
            recolor: cell.recolor,
            lighting: cell.lighting,
            status: res.status,
            cached,
            millis,
        });
    }

    let labels = if records.is_empty() {
        Vec::new()
    } else {
        labels_from_records(&records)?.into_values().collect()
    };
    let ledger = RunLedger {
        config_hash: config_hash.clone(),
        version: env!("CARGO_PKG_VERSION").to_string(),
        manifest: manifest.path.clone(),
        images: rows.len(),
        config: config.clone(),
        totals,
        labels,
        entries,
    };

    let records_path = out.join("records.csv");
    write_atomic(&records_path, &records_csv(&records, &config_hash)?)?;
    let ledger_path = out.join("ledger.json");
    let mut ledger_json = serde_json::to_vec_pretty(&ledger).map_err(|e| Error::Internal(e.to_string()))?;
    ledger_json.push(b'\n');
    write_atomic(&ledger_path, &ledger_json)?;

    Ok(RunOutput {
        ledger,
        records,
        records_path,
        ledger_path,
    })
}

/// Records as CSV with a leading `config_hash` column.
pub fn records_csv(records: &[EvalRecord], config_hash: &str) -> Result<Vec<u8>> {
    let err = |e: csv::Error| Error::Internal(format!("records CSV: {e}"));
    let Some(first) = records.first() else {
        return Ok(Vec::new());
    };
    // csv cannot derive headers for a (scalar, struct) row, so take the
    // record's own header line and prepend the hash column.
    let mut probe = csv::Writer::from_writer(Vec::new());
    probe.serialize(first).map_err(err)?;
    let probe = probe.into_inner().map_err(|e| Error::Internal(format!("records CSV: {e}")))?;
    let fields = csv::Reader::from_reader(probe.as_slice()).headers().map_err(err)?.clone();

    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(std::iter::once("config_hash").chain(fields.iter())).map_err(err)?;
    for r in records {
        w.serialize((config_hash, r)).map_err(err)?;
    }
    w.into_inner().map_err(|e| Error::Internal(format!("records CSV: {e}")))
}

/// Reads `records.csv`, returning the records and their config hash.
pub fn read_records(path: &Path) -> Result<(Vec<EvalRecord>, Option<String>)> {
    let ctx = || path.display().to_string();
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::format(ctx(), e))?;
    let headers = rdr.headers().map_err(|e| Error::format(ctx(), e))?.clone();
    let hash_col = headers.iter().position(|h| h == "config_hash");
    let mut hashes = BTreeSet::new();
    let mut out = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format(ctx(), e))?;
        if let Some(c) = hash_col {
            hashes.insert(rec.get(c).unwrap_or("").to_string());
        }
        let r: EvalRecord = rec
            .deserialize(Some(&headers))
            .map_err(|e| Error::format(ctx(), format!("row {}: {e}", i + 1)))?;
        out.push(r);
    }
    if hashes.len() > 1 {
        return Err(Error::format(ctx(), "records come from more than one configuration"));
    }
    Ok((out, hashes.into_iter().next()))
}
