use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use docbin::classical::{run_baseline, BaselineMethod};
use docbin::dataprep::{gen_synthetic_doc, make_folds, read_manifest, write_manifest, SamplePair, SynthSpec};
use docbin::inference::{binarize as run_pipeline, Binarization, GlobalStrategy, Stage1Model, Stage2Model};
use docbin::io::{read_image, read_mask, write_image, write_mask};
use docbin::metrics::{aggregate, evaluate as score, levenshtein_percent, MetricReport, ReportRow};
use docbin::pipeline::train_pipeline;
use docbin::{BinaryMask, RasterImage};
use serde::Deserialize;

use crate::config::{Overrides, RunConfig};
use crate::CliError;

const CONFIG_FILE: &str = "config.json";

fn io(e: std::io::Error) -> CliError {
    docbin::Error::from(e).into()
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(io)
}

fn stem(path: &Path) -> Result<String, CliError> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| CliError::Usage(format!("cannot name an output for {}", path.display())))
}

/// Gray inputs are replicated across three channels.
fn to_color(img: RasterImage) -> Result<RasterImage, CliError> {
    if img.channels() == 3 {
        return Ok(img);
    }
    Ok(RasterImage::merge_channels(&img, &img, &img)?)
}

fn load_docs(pairs: &[SamplePair]) -> Result<Vec<(RasterImage, BinaryMask)>, CliError> {
    pairs
        .iter()
        .map(|p| {
            let (img, gt) = p.load()?;
            Ok((to_color(img)?, gt))
        })
        .collect()
}

fn strategy_name(s: GlobalStrategy) -> &'static str {
    match s {
        GlobalStrategy::DirectResize => "direct_resize",
        GlobalStrategy::PadThenResize => "pad_then_resize",
        GlobalStrategy::Skip => "skip",
    }
}

/// Seed of the `index`-th synthetic page of a run seeded with `seed`.
pub fn synth_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(1_000_003).wrapping_add(index as u64)
}

pub fn synth(out: &Path, count: usize, seed: u64, width: usize, height: usize, noiseless: bool) -> Result<(), CliError> {
    if width == 0 || height == 0 {
        return Err(CliError::Usage("page width and height must be positive".into()));
    }
    create_dir(out)?;
    let spec = if noiseless { SynthSpec::noiseless(width, height) } else { SynthSpec::degraded(width, height) };
    let mut pairs = Vec::with_capacity(count);
    for i in 0..count {
        let id = format!("doc{i:04}");
        let (img, gt) = gen_synthetic_doc(synth_seed(seed, i), &spec);
        write_image(&img, out.join(format!("{id}.png")))?;
        write_mask(&gt, out.join(format!("{id}_GT.png")))?;
        pairs.push(SamplePair {
            input_path: format!("{id}.png").into(),
            gt_path: format!("{id}_GT.png").into(),
            id,
        });
    }
    write_manifest(&out.join("manifest.json"), &pairs)?;
    println!("wrote {count} pages to {}", out.display());
    Ok(())
}

fn require<T>(value: Option<T>, flag: &str) -> Result<T, CliError> {
    value.ok_or_else(|| CliError::Usage(format!("--{flag} is required")))
}

pub fn train(manifest: Option<PathBuf>, out: Option<PathBuf>, overrides: &Overrides) -> Result<(), CliError> {
    let mut cfg = overrides.resolve()?;
    cfg.manifest = manifest.or(cfg.manifest);
    cfg.out = out.or(cfg.out);
    cfg.validate()?;
    let manifest = require(cfg.manifest.clone(), "manifest")?;
    let out = require(cfg.out.clone(), "out")?;
    let docs = load_docs(&read_manifest(&manifest)?)?;
    create_dir(&out)?;
    cfg.save(&out.join(CONFIG_FILE))?;
    let trained = train_pipeline(&docs, &cfg.train, &cfg.fusion, Some(&out))?;
    let last = |h: &[docbin::training::LossRecord]| h.last().map_or(f64::NAN, |r| r.bce);
    println!("stage one: {} epochs, final bce {:.4}", trained.stage1.epoch, last(&trained.stage1.history));
    println!("stage two local: {} epochs, final bce {:.4}", trained.stage2.local.epoch, last(&trained.stage2.local.history));
    match &trained.stage2.global {
        Some(g) => println!("stage two global: {} epochs, final bce {:.4}", g.epoch, last(&g.history)),
        None => println!("stage two global: skipped"),
    }
    Ok(())
}

struct Models {
    s1: Stage1Model,
    s2: Stage2Model,
}

impl Models {
    fn load(dir: &Path, cfg: &RunConfig) -> Result<Self, CliError> {
        let s1 = Stage1Model::load(&dir.join("stage1"))?;
        let mut s2 = Stage2Model::load(&dir.join("stage2"))?;
        if cfg.train.skip_global {
            s2.global = None;
        }
        Ok(Self { s1, s2 })
    }

    fn run(&self, img: &RasterImage, cfg: &RunConfig) -> Result<Binarization, CliError> {
        Ok(run_pipeline(img, &self.s1, &self.s2, &cfg.fusion)?)
    }
}

/// The model directory's saved configuration, then `--config`, then flags.
fn model_config(model: &Path, overrides: &Overrides) -> Result<RunConfig, CliError> {
    let saved = model.join(CONFIG_FILE);
    let mut cfg = if overrides.config.is_none() && saved.exists() {
        RunConfig::load(&saved)?
    } else {
        overrides.resolve()?
    };
    overrides.apply(&mut cfg);
    cfg.fusion.validate()?;
    Ok(cfg)
}

fn write_debug(out: &Path, name: &str, run: &Binarization) -> Result<(), CliError> {
    write_image(&run.enhanced, out.join(format!("{name}_enhanced.png")))?;
    write_mask(&run.local, out.join(format!("{name}_local.png")))?;
    if let Some(g) = &run.global {
        write_mask(g, out.join(format!("{name}_global.png")))?;
    }
    Ok(())
}

pub fn binarize(
    model: &Path,
    out: &Path,
    debug: bool,
    overrides: &Overrides,
    inputs: &[PathBuf],
) -> Result<(), CliError> {
    let cfg = model_config(model, overrides)?;
    let models = Models::load(model, &cfg)?;
    create_dir(out)?;
    for path in inputs {
        let name = stem(path)?;
        let img = to_color(read_image(path)?)?;
        let run = models.run(&img, &cfg)?;
        write_mask(&run.mask, out.join(format!("{name}.png")))?;
        if debug {
            write_debug(out, &name, &run)?;
        }
        println!("{name}: {}x{} global={}", img.width(), img.height(), strategy_name(run.strategy));
    }
    Ok(())
}

pub fn baseline(method: &str, out: &Path, inputs: &[PathBuf]) -> Result<(), CliError> {
    let method: BaselineMethod = method.parse().map_err(|e: docbin::Error| CliError::Usage(e.to_string()))?;
    create_dir(out)?;
    for path in inputs {
        let name = stem(path)?;
        let mask = run_baseline(&read_image(path)?, method)?;
        write_mask(&mask, out.join(format!("{name}.png")))?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct Transcript {
    pred: String,
    gt: String,
}

fn read_transcripts(path: &Path) -> Result<BTreeMap<String, Transcript>, CliError> {
    let text = std::fs::read_to_string(path).map_err(io)?;
    serde_json::from_str(&text)
        .map_err(|e| docbin::Error::Format { path: path.to_path_buf(), reason: e.to_string() }.into())
}

fn score_row(
    id: &str,
    pred: &BinaryMask,
    gt: &BinaryMask,
    transcripts: Option<&BTreeMap<String, Transcript>>,
) -> Result<ReportRow, CliError> {
    let mut report: MetricReport = score(pred, gt)?;
    if let Some(t) = transcripts.and_then(|t| t.get(id)) {
        report.lev = Some(levenshtein_percent(&t.pred, &t.gt)?);
    }
    Ok(ReportRow { id: id.to_string(), report })
}

/// Writes `report.csv` and `report.json` and returns the mean row.
fn write_report(out: &Path, rows: &[ReportRow]) -> Result<MetricReport, CliError> {
    let summary = aggregate(&rows.iter().map(|r| r.report.clone()).collect::<Vec<_>>())?;
    create_dir(out)?;
    std::fs::write(out.join("report.csv"), summary.to_csv(rows)).map_err(io)?;
    let mut json = summary.to_json(rows)?;
    json.push('\n');
    std::fs::write(out.join("report.json"), json).map_err(io)?;
    Ok(summary.mean)
}

fn print_mean(label: &str, m: &MetricReport) {
    println!("{label}: fm {:.4} pfm {:.4} psnr {:.4} drd {:.4}", m.fm, m.p_fm, m.psnr, m.drd);
}

pub fn evaluate(
    manifest: Option<PathBuf>,
    pred: Option<PathBuf>,
    out: Option<PathBuf>,
    transcripts: Option<PathBuf>,
    folds: Option<usize>,
    overrides: &Overrides,
) -> Result<(), CliError> {
    let mut cfg = overrides.resolve()?;
    cfg.manifest = manifest.or(cfg.manifest);
    cfg.out = out.or(cfg.out);
    cfg.validate()?;
    let manifest = require(cfg.manifest.clone(), "manifest")?;
    let out = require(cfg.out.clone(), "out")?;
    let mut pairs = read_manifest(&manifest)?;
    pairs.sort_by(|a, b| a.id.cmp(&b.id));
    let transcripts = transcripts.as_deref().map(read_transcripts).transpose()?;
    match (folds, pred) {
        (Some(k), _) => cross_validate(&pairs, k, &cfg, &out, transcripts.as_ref()),
        (None, Some(pred)) => {
            let mut rows = Vec::with_capacity(pairs.len());
            for p in &pairs {
                let path = pred.join(format!("{}.png", p.id));
                if !path.exists() {
                    return Err(docbin::Error::Format { path, reason: format!("no prediction for id '{}'", p.id) }.into());
                }
                rows.push(score_row(&p.id, &read_mask(&path)?, &read_mask(&p.gt_path)?, transcripts.as_ref())?);
            }
            let mean = write_report(&out, &rows)?;
            print_mean("mean", &mean);
            Ok(())
        }
        (None, None) => Err(CliError::Usage("evaluate needs --pred or --folds".into())),
    }
}

/// Trains on all but one fold and scores that fold, for every fold. Writes a
/// report per fold, one over all images, and `folds.csv` with fold means.
fn cross_validate(
    pairs: &[SamplePair],
    k: usize,
    cfg: &RunConfig,
    out: &Path,
    transcripts: Option<&BTreeMap<String, Transcript>>,
) -> Result<(), CliError> {
    let ids: Vec<String> = pairs.iter().map(|p| p.id.clone()).collect();
    let split = make_folds(&ids, k, cfg.train.optim.seed)?;
    let by_id: BTreeMap<&str, &SamplePair> = pairs.iter().map(|p| (p.id.as_str(), p)).collect();
    let mut all_rows = Vec::with_capacity(pairs.len());
    let mut fold_lines = vec!["fold,images,fm,pfm,psnr,drd".to_string()];
    for f in 0..k {
        let fold_dir = out.join(format!("fold{f}"));
        let train_pairs: Vec<SamplePair> = split.complement(f).iter().map(|id| by_id[id].clone()).collect();
        let docs = load_docs(&train_pairs)?;
        let model_dir = fold_dir.join("model");
        create_dir(&model_dir)?;
        cfg.save(&model_dir.join(CONFIG_FILE))?;
        train_pipeline(&docs, &cfg.train, &cfg.fusion, Some(&model_dir))?;
        let models = Models::load(&model_dir, cfg)?;
        let pred_dir = fold_dir.join("pred");
        create_dir(&pred_dir)?;
        let mut rows = Vec::new();
        for id in split.fold(f) {
            let (img, gt) = by_id[id].load()?;
            let run = models.run(&to_color(img)?, cfg)?;
            write_mask(&run.mask, pred_dir.join(format!("{id}.png")))?;
            rows.push(score_row(id, &run.mask, &gt, transcripts)?);
        }
        let m = write_report(&fold_dir, &rows)?;
        print_mean(&format!("fold {f}"), &m);
        fold_lines.push(format!("{f},{},{},{},{},{}", rows.len(), m.fm, m.p_fm, m.psnr, m.drd));
        all_rows.extend(rows);
    }
    all_rows.sort_by(|a, b| a.id.cmp(&b.id));
    let mean = write_report(out, &all_rows)?;
    fold_lines.push(format!("mean,{},{},{},{},{}", all_rows.len(), mean.fm, mean.p_fm, mean.psnr, mean.drd));
    std::fs::write(out.join("folds.csv"), fold_lines.join("\n") + "\n").map_err(io)?;
    print_mean("all folds", &mean);
    Ok(())
}
