use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::{info, warn};
use serde_json::json;
use vrid::dataset::{
    Corpus, DirFrames, FrameSource, PatchSource, PlatePatch, SetId, ShapePatch, SHAPE_SIZE,
};
use vrid::eval::{run_cross_validation, PairClassifier};
use vrid::fusion::{ReadingCache, TwoStreamModel};
use vrid::imgops::{from_rgb8, load_rgb8, resize};
use vrid::ocr::net::{PLATE_HEIGHT, PLATE_WIDTH};
use vrid::ocr::{train_ocr, OcrModel, OcrSample, PlateReading, PLATE_SLOTS};
use vrid::pairgen::{make_split_plan, pairs_for_set, write_manifest, PairSample};
use vrid::pipeline::{load_ocr_samples, pair_pools, read_all_plates, TwoStreamClassifier};
use vrid::synth::{generate, SynthCorpus};
use vrid::{OcrModelF32, TwoStreamModelF32};

use crate::config::PipelineConfig;
use crate::error::CliError;
use crate::manifest::RunRecorder;

/// Corpus plus the frames behind it.
pub struct Dataset {
    pub corpus: Corpus,
    pub frames: Box<dyn FrameSource>,
    /// Present when the dataset directory holds a synthetic corpus.
    pub synth: Option<SynthCorpus>,
}

pub fn open_dataset(cfg: &PipelineConfig) -> Result<Dataset, CliError> {
    let dir = cfg.paths.dataset();
    let corpus = Corpus::load_dir(&dir)?;
    if corpus.videos.is_empty() {
        return Err(
            vrid::Error::Missing(format!("no ground-truth XML in {}", dir.display())).into(),
        );
    }
    let synth = if dir.join("synth.json").is_file() {
        Some(SynthCorpus::load(&dir)?)
    } else {
        None
    };
    let frames: Box<dyn FrameSource> = match (&synth, cfg.paths.frames.is_empty()) {
        (Some(s), true) if !dir.join("frames").is_dir() => Box::new(s.clone()),
        (_, true) => Box::new(DirFrames::new(dir.join("frames"))),
        (_, false) => Box::new(DirFrames::new(&cfg.paths.frames)),
    };
    Ok(Dataset {
        corpus,
        frames,
        synth,
    })
}

fn write_json(
    path: &Path,
    value: &serde_json::Value,
    rec: &mut RunRecorder,
) -> Result<(), CliError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent)
            .map_err(|e| CliError::io(parent.display().to_string(), e))?;
    }
    let text = serde_json::to_string_pretty(value).map_err(vrid::Error::from)?;
    std::fs::write(path, text).map_err(|e| CliError::io(path.display().to_string(), e))?;
    rec.output(path);
    Ok(())
}

fn ensure_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir.display().to_string(), e))
}

fn sets(ids: &[u8]) -> Vec<SetId> {
    ids.iter().map(|&s| SetId(s)).collect()
}

pub fn ingest(cfg: &PipelineConfig, rec: &mut RunRecorder) -> Result<(), CliError> {
    let ds = open_dataset(cfg)?;
    let stats = ds.corpus.stats();
    println!("set,cam1_vehicles,cam1_plates,cam2_vehicles,cam2_plates,matchings");
    for s in &stats {
        println!(
            "{},{},{},{},{},{}",
            s.set_id, s.cam1_vehicles, s.cam1_plates, s.cam2_vehicles, s.cam2_plates, s.matchings
        );
    }
    let total = |f: fn(&vrid::dataset::SetStats) -> usize| stats.iter().map(f).sum::<usize>();
    println!(
        "total,{},{},{},{},{}",
        total(|s| s.cam1_vehicles),
        total(|s| s.cam1_plates),
        total(|s| s.cam2_vehicles),
        total(|s| s.cam2_plates),
        total(|s| s.matchings)
    );
    write_json(
        &cfg.paths.output().join("ingest.json"),
        &json!({ "sets": stats }),
        rec,
    )
}

pub fn synth(
    cfg: &PipelineConfig,
    with_frames: bool,
    rec: &mut RunRecorder,
) -> Result<(), CliError> {
    let corpus = generate(&cfg.synth)?;
    let dir = cfg.paths.dataset();
    corpus.write(&dir, with_frames)?;
    rec.output(&dir);
    println!(
        "{}",
        json!({
            "dataset": dir,
            "vehicles": corpus.vehicles.len(),
            "clone_pairs": corpus.clone_pairs.len(),
            "hamming_pairs": corpus.hamming_pairs.len(),
            "frames_written": with_frames,
        })
    );
    Ok(())
}

pub fn pairs(cfg: &PipelineConfig, rec: &mut RunRecorder) -> Result<(), CliError> {
    let ds = open_dataset(cfg)?;
    let out = cfg.paths.output();
    ensure_dir(&out)?;
    for set in SetId::ALL.into_iter().filter(|s| ds.corpus.has_set(*s)) {
        let records = pairs_for_set(&ds.corpus, set, cfg.pairs.limit())?;
        let path = out.join(format!("pairs_{set}.csv"));
        let file = std::fs::File::create(&path)
            .map_err(|e| CliError::io(path.display().to_string(), e))?;
        write_manifest(std::io::BufWriter::new(file), &records)?;
        rec.output(&path);
        let positives = records.iter().filter(|r| r.matching).count();
        println!(
            "{}",
            json!({"set": set.to_string(), "pairs": records.len(), "matching": positives, "non_matching": records.len() - positives})
        );
    }
    Ok(())
}

fn ocr_samples(cfg: &PipelineConfig, ds: &Dataset) -> Result<Vec<OcrSample<f32>>, CliError> {
    let wanted = sets(&cfg.ocr.sets);
    let labels = cfg.paths.labels();
    if labels.is_dir() {
        return Ok(load_ocr_samples(
            &ds.corpus,
            ds.frames.as_ref(),
            &labels,
            &wanted,
            cfg.ocr.max_frames,
        )?);
    }
    match &ds.synth {
        Some(s) => Ok(s.ocr_samples(&wanted, cfg.ocr.max_frames)?),
        None => Err(vrid::Error::Missing(format!(
            "character labels not found at {}",
            labels.display()
        ))
        .into()),
    }
}

pub fn train_ocr_cmd(cfg: &PipelineConfig, rec: &mut RunRecorder) -> Result<(), CliError> {
    let ds = open_dataset(cfg)?;
    let samples = ocr_samples(cfg, &ds)?;
    if samples.is_empty() {
        return Err(vrid::Error::Missing("no labeled plates in the selected sets".into()).into());
    }
    info!("training the detector on {} plates", samples.len());
    let mut model = OcrModelF32::new(cfg.ocr.seed);
    model.decoder = cfg.ocr.decoder;
    let history = train_ocr(&mut model, &samples, &cfg.ocr.train)?;
    let path = cfg.paths.ocr_checkpoint();
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    model.save(&path, &metadata(rec))?;
    rec.output(&path);
    write_json(
        &cfg.paths.output().join("ocr_train.json"),
        &json!({"plates": samples.len(), "epoch_loss": history}),
        rec,
    )?;
    println!(
        "{}",
        json!({"checkpoint": path, "plates": samples.len(), "final_loss": history.last()})
    );
    Ok(())
}

fn metadata(rec: &RunRecorder) -> BTreeMap<String, String> {
    BTreeMap::from([
        ("config_hash".to_string(), rec.config_hash().to_string()),
        (
            "vrid_version".to_string(),
            env!("CARGO_PKG_VERSION").to_string(),
        ),
    ])
}

fn load_ocr(cfg: &PipelineConfig) -> Result<OcrModel<f32>, CliError> {
    let path = cfg.paths.ocr_checkpoint();
    if !path.is_file() {
        return Err(vrid::Error::Missing(format!(
            "detector checkpoint {} (run train-ocr first)",
            path.display()
        ))
        .into());
    }
    let mut m = OcrModel::load(&path)?;
    m.decoder = cfg.ocr.decoder;
    Ok(m)
}

type Pools = BTreeMap<SetId, Vec<PairSample<f32>>>;

fn build_pools(
    cfg: &PipelineConfig,
    ds: &Dataset,
    ocr: &OcrModel<f32>,
    wanted: &[SetId],
) -> Result<(Pools, Arc<ReadingCache>), CliError> {
    let pools: Pools = pair_pools(
        &ds.corpus,
        ds.frames.as_ref(),
        wanted,
        cfg.pairs.limit(),
        &cfg.shape,
    )?
    .into_iter()
    .map(|(set, (_, samples))| (set, samples))
    .collect();
    info!(
        "reading plates for {} pairs",
        pools.values().map(Vec::len).sum::<usize>()
    );
    let readings = read_all_plates(ocr, pools.values().map(Vec::as_slice))?;
    Ok((pools, Arc::new(readings)))
}

fn fresh_model(cfg: &PipelineConfig, ocr: &OcrModel<f32>) -> TwoStreamModelF32 {
    let mut m = TwoStreamModel::new(cfg.fusion.seed, cfg.fusion.mode);
    m.ocr = ocr.clone();
    m
}

fn gather(pools: &Pools, ids: &[SetId]) -> Vec<PairSample<f32>> {
    ids.iter().flat_map(|s| pools[s].iter().cloned()).collect()
}

fn round_checkpoint(cfg: &PipelineConfig, round: usize) -> PathBuf {
    cfg.paths.output().join(format!("model_round{round}.ckpt"))
}

pub fn train_fusion(
    cfg: &PipelineConfig,
    round: usize,
    rec: &mut RunRecorder,
) -> Result<(), CliError> {
    if !(1..=5).contains(&round) {
        return Err(CliError::Usage(format!("round {round} outside 1..=5")));
    }
    let ds = open_dataset(cfg)?;
    let ocr = load_ocr(cfg)?;
    let plan = make_split_plan();
    let split = &plan.rounds[round - 1];
    let mut wanted = split.train.to_vec();
    wanted.push(split.validation);
    let (pools, readings) = build_pools(cfg, &ds, &ocr, &wanted)?;
    let mut model = fresh_model(cfg, &ocr);
    let report = model.train(
        &gather(&pools, &split.train),
        &pools[&split.validation],
        &readings,
        &cfg.fusion.train,
    )?;
    let path = round_checkpoint(cfg, round);
    ensure_dir(&cfg.paths.output())?;
    model.save(&path, &metadata(rec))?;
    rec.output(&path);
    write_json(
        &cfg.paths.output().join(format!("train_round{round}.json")),
        &serde_json::to_value(&report).map_err(vrid::Error::from)?,
        rec,
    )?;
    println!(
        "{}",
        json!({"round": round, "checkpoint": path, "best_epoch": report.best_epoch, "epochs": report.epochs})
    );
    Ok(())
}

/// Trains a fresh model per round unless a checkpoint for that round and
/// mode already exists in the output directory.
struct RoundClassifier {
    inner: TwoStreamClassifier<f32>,
    pretrained: bool,
}

impl PairClassifier<PairSample<f32>> for RoundClassifier {
    fn fit(
        &mut self,
        train: &[PairSample<f32>],
        validation: &[PairSample<f32>],
    ) -> vrid::Result<()> {
        if self.pretrained {
            return Ok(());
        }
        self.inner.fit(train, validation)
    }

    fn predict(&self, pairs: &[PairSample<f32>]) -> vrid::Result<Vec<bool>> {
        self.inner.predict(pairs)
    }
}

pub fn eval(cfg: &PipelineConfig, rec: &mut RunRecorder) -> Result<(), CliError> {
    let rounds = cfg.rounds()?;
    let ds = open_dataset(cfg)?;
    let ocr = load_ocr(cfg)?;
    let plan = make_split_plan();
    let (pools, readings) = build_pools(cfg, &ds, &ocr, &SetId::ALL)?;
    let report = run_cross_validation(&pools, &plan, &rounds, |round, _| {
        let path = round_checkpoint(cfg, round);
        let pretrained = match TwoStreamModel::<f32>::load(&path) {
            Ok(m) if m.mode == cfg.fusion.mode => {
                info!("round {round}: using {}", path.display());
                Some(m)
            }
            _ => None,
        };
        let is_pretrained = pretrained.is_some();
        let model = pretrained.unwrap_or_else(|| fresh_model(cfg, &ocr));
        Ok(RoundClassifier {
            inner: TwoStreamClassifier::new(model, readings.clone(), cfg.fusion.train.clone()),
            pretrained: is_pretrained,
        })
    })?;
    let out = cfg.paths.output();
    report.write(&out)?;
    for name in ["report.csv", "report.json", "report.png"] {
        rec.output(out.join(name));
    }
    print!("{}", report.to_csv()?);
    Ok(())
}

/// Parses `TEXT` or `TEXT@c1,c2,...` into a plate reading.
pub fn parse_reading(spec: &str) -> Result<PlateReading, CliError> {
    let (text, confs) = match spec.split_once('@') {
        Some((t, c)) => {
            let confs = c
                .split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|_| CliError::Usage(format!("bad confidences in reading {spec:?}")))?;
            (t, confs)
        }
        None => (spec, Vec::new()),
    };
    if text.chars().count() > PLATE_SLOTS {
        return Err(CliError::Usage(format!(
            "reading {text:?} longer than {PLATE_SLOTS} characters"
        )));
    }
    if confs.iter().any(|c| !(0.0..=1.0).contains(c)) {
        return Err(CliError::Usage(format!(
            "confidences in {spec:?} must lie in [0, 1]"
        )));
    }
    Ok(PlateReading::from_text(text, &confs)?)
}

fn source(name: &str, camera: u8) -> PatchSource {
    PatchSource {
        vehicle_id: name.to_string(),
        camera_id: camera,
        frame_index: 0,
    }
}

fn load_shape(path: &Path, camera: u8) -> Result<ShapePatch<f32>, CliError> {
    let pixels = resize(&from_rgb8(&load_rgb8(path)?), SHAPE_SIZE, SHAPE_SIZE)?;
    Ok(ShapePatch::new(pixels, source("a", camera))?)
}

fn load_plate(path: &Path, camera: u8) -> Result<PlatePatch<f32>, CliError> {
    let pixels = resize(&from_rgb8(&load_rgb8(path)?), PLATE_WIDTH, PLATE_HEIGHT)?;
    Ok(PlatePatch::new(pixels, source("a", camera), true)?)
}

pub struct MatchArgs<'a> {
    pub img_a: &'a Path,
    pub img_b: &'a Path,
    pub plate_a: &'a Path,
    pub plate_b: &'a Path,
    pub reading_a: Option<&'a str>,
    pub reading_b: Option<&'a str>,
}

pub fn match_pair(
    cfg: &PipelineConfig,
    args: &MatchArgs,
    rec: &mut RunRecorder,
) -> Result<(), CliError> {
    let path = cfg.paths.model();
    let model = if path.is_file() {
        TwoStreamModel::<f32>::load(&path)?
    } else {
        warn!(
            "no model at {}; scoring with untrained weights",
            path.display()
        );
        TwoStreamModel::new(cfg.fusion.seed, cfg.fusion.mode)
    };
    let shape_a = load_shape(args.img_a, 1)?;
    let shape_b = load_shape(args.img_b, 2)?;
    let read = |over: Option<&str>, plate: &Path, cam: u8| -> Result<PlateReading, CliError> {
        match over {
            Some(spec) => parse_reading(spec),
            None => Ok(model.ocr.read(&load_plate(plate, cam)?)?),
        }
    };
    let r1 = read(args.reading_a, args.plate_a, 1)?;
    let r2 = read(args.reading_b, args.plate_b, 2)?;
    let e1 = vrid::shape::embed(&model.shape, &shape_a)?;
    let e2 = vrid::shape::embed(&model.shape, &shape_b)?;
    let descriptor = model.ocr_descriptor(&r1, &r2)?;
    let decision = model.decide(&e1, &e2, &r1, &r2)?;
    let line = json!({
        "decision": if decision.is_match() { "match" } else { "non-match" },
        "p_match": decision.p_match,
        "p_nonmatch": decision.p_nonmatch,
        "reading_a": {"text": r1.text(), "confidences": r1.slots.iter().map(|s| s.1).collect::<Vec<_>>()},
        "reading_b": {"text": r2.text(), "confidences": r2.slots.iter().map(|s| s.1).collect::<Vec<_>>()},
        "ocr_descriptor": descriptor.values.iter().map(|v| shortest(*v)).collect::<Vec<_>>(),
        "model": if path.is_file() { Some(&path) } else { None },
    });
    println!("{line}");
    write_json(&cfg.paths.output().join("match.json"), &line, rec)
}

/// The decimal an `f32` prints as, widened without binary noise.
fn shortest(v: f32) -> f64 {
    v.to_string().parse().expect("f32 display parses as f64")
}
