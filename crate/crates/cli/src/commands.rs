use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};
use vistrain_core::dataset::TrainingDataset;
use vistrain_core::droploss::{drop_gate, max_gt_iou, reference_mask_loss, IouMode};
use vistrain_core::eval::{class_agnostic_remap, evaluate, spearman, EvalReport, GroundTruthVideo};
use vistrain_core::mask::{rle_decode, FrameMask, MaskTrack};
use vistrain_core::mock::{generate_dump, synth_ground_truth, NoiseConfig, SynthConfig};
use vistrain_core::nms::DetectionSet;
use vistrain_core::quality::best_match;
use vistrain_core::sampler::Sampler;

use crate::cli::*;
use crate::config::{RunConfig, ScorerKind};
use crate::error::{CliError, Result};
use crate::formats::{ground_truth_to_file, read_detections, read_ground_truth, write_detections};
use crate::pipeline::{gt_index, pseudo_predictions, quality_points, run_round, RoundCounts};
use crate::state::{load_state, save_state, sha256_hex, write_atomic, StateLock};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundManifest {
    pub round: u32,
    pub dump: String,
    pub dump_sha256: String,
    pub counts: RoundCounts,
    pub config: RunConfig,
    /// Tells the external trainer to restart from the initial weights.
    pub reset_directive: bool,
    pub previous_state_checksum: String,
    pub state_checksum: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct PrCurveJson {
    pub iou_threshold: f64,
    pub precision: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ReportJson {
    pub ap50: f64,
    pub ap75: f64,
    pub ap: f64,
    pub ap_s: Option<f64>,
    pub ap_m: Option<f64>,
    pub ap_l: Option<f64>,
    pub ar1: f64,
    pub ar10: f64,
    pub spearman_rho: Option<f64>,
    pub pr_curves: Vec<PrCurveJson>,
}

impl From<&EvalReport> for ReportJson {
    fn from(r: &EvalReport) -> Self {
        ReportJson {
            ap50: r.ap50,
            ap75: r.ap75,
            ap: r.ap,
            ap_s: r.ap_s,
            ap_m: r.ap_m,
            ap_l: r.ap_l,
            ar1: r.ar1,
            ar10: r.ar10,
            spearman_rho: r.spearman_rho,
            pr_curves: r
                .pr_curves
                .iter()
                .map(|c| PrCurveJson { iou_threshold: c.iou_threshold, precision: c.precision.clone() })
                .collect(),
        }
    }
}

pub const TABLE_HEADER: &str = "  AP50   AP75     AP   AP_S   AP_M   AP_L   AR10";

fn pct(v: Option<f64>) -> String {
    v.map_or_else(|| "     -".to_string(), |v| format!("{:6.1}", 100.0 * v))
}

/// Metrics in percent, in the column order of [`TABLE_HEADER`].
pub fn table_row(r: &EvalReport) -> String {
    [Some(r.ap50), Some(r.ap75), Some(r.ap), r.ap_s, r.ap_m, r.ap_l, Some(r.ar10)]
        .into_iter()
        .map(pct)
        .collect::<Vec<_>>()
        .join(" ")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    write_atomic(path, bytes)
}

fn json_bytes<T: Serialize>(v: &T) -> Vec<u8> {
    let mut b = serde_json::to_vec_pretty(v).expect("serializable");
    b.push(b'\n');
    b
}

fn frame_dims(v: &GroundTruthVideo, fallback: (u32, u32)) -> (u32, u32) {
    v.tracks.iter().find_map(|t| t.masks.dims()).unwrap_or(fallback)
}

pub fn init(args: &InitArgs) -> Result<()> {
    let _lock = StateLock::acquire(&args.state)?;
    if args.state.exists() && !args.force {
        return Err(CliError::Usage(format!("{} exists; pass --force to overwrite", args.state.display())));
    }
    let mut ds = TrainingDataset::new();
    if let Some(base) = &args.base {
        for v in read_ground_truth(base)? {
            let tracks = v.mask_tracks();
            ds.add_base_video(v.video_id, v.num_frames, tracks)?;
        }
    }
    let sum = save_state(&args.state, &ds)?;
    info!("initialized {} with {} base videos", args.state.display(), ds.videos.len());
    println!("{sum}");
    Ok(())
}

fn default_manifest_path(state: &Path, round: u32) -> PathBuf {
    let mut name = state.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(format!(".round{round}.manifest.json"));
    state.with_file_name(name)
}

pub fn round(cfg: &RunConfig, args: &RoundArgs) -> Result<RoundManifest> {
    let _lock = StateLock::acquire(&args.state)?;
    let (ds, prev_sum) = load_state(&args.state)?;
    let dump_bytes = std::fs::read(&args.dump).map_err(|e| CliError::io(&args.dump, e))?;
    let dump = read_detections(&args.dump)?;
    let gt = match &args.gt {
        Some(p) => Some(gt_index(&read_ground_truth(p)?)),
        None if cfg.scorer == ScorerKind::Oracle => {
            return Err(CliError::Usage("--scorer oracle needs --gt".into()));
        }
        None => None,
    };
    let (next, counts) = run_round(&ds, &dump, cfg, gt.as_ref())?;
    let state_checksum = save_state(&args.state, &next)?;
    let manifest = RoundManifest {
        round: next.round,
        dump: args.dump.display().to_string(),
        dump_sha256: sha256_hex(&dump_bytes),
        counts,
        config: cfg.clone(),
        reset_directive: cfg.reset,
        previous_state_checksum: prev_sum,
        state_checksum,
    };
    let path = args.manifest.clone().unwrap_or_else(|| default_manifest_path(&args.state, next.round));
    write_file(&path, &json_bytes(&manifest))?;
    info!(
        "round {}: {} raw -> {} filtered -> {} after NMS -> {} retained ({} fused, {} new-video, {} inserted)",
        next.round, counts.raw, counts.filtered, counts.post_nms, counts.retained, counts.fused,
        counts.new_video_inserted, counts.inserted
    );
    Ok(manifest)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub batch: usize,
    pub source: String,
    pub video_id: String,
    pub frames: [usize; 3],
}

pub fn sample_stream(ds: &TrainingDataset, batches: usize, seed: u64) -> Result<Vec<u8>> {
    let mut sampler = Sampler::new(ds, seed)?;
    let (b, p) = sampler.pool_sizes();
    info!("sampling {batches} clips from {b} base and {p} pseudo videos");
    let mut out = Vec::new();
    for batch in 0..batches {
        let plan = sampler.next_plan()?;
        let rec = SampleRecord {
            batch,
            source: plan.source.as_str().to_string(),
            video_id: plan.video_id,
            frames: plan.frame_indices,
        };
        serde_json::to_writer(&mut out, &rec).expect("serializable");
        out.push(b'\n');
    }
    Ok(out)
}

pub fn sample(cfg: &RunConfig, args: &SampleArgs) -> Result<()> {
    let (ds, _) = load_state(&args.state)?;
    let bytes = sample_stream(&ds, args.batches, args.seed.unwrap_or(cfg.seed))?;
    match &args.out {
        Some(p) => write_file(p, &bytes),
        None => std::io::stdout().write_all(&bytes).map_err(|e| CliError::io("<stdout>", e)),
    }
}

/// Reads the `quality` and `true_iou` columns of a CSV file.
pub fn read_rank_pairs(path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| CliError::schema(path, 0, e))?;
    let headers = rdr.headers().map_err(|e| CliError::schema(path, 1, e))?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| CliError::schema(path, 1, format!("missing column {name}")))
    };
    let (qi, ti) = (col("quality")?, col("true_iou")?);
    let (mut x, mut y) = (Vec::new(), Vec::new());
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| CliError::schema(path, i + 2, e))?;
        let num = |j: usize| -> Result<f64> {
            rec.get(j)
                .unwrap_or("")
                .trim()
                .parse()
                .map_err(|e| CliError::schema(path, i + 2, e))
        };
        x.push(num(qi)?);
        y.push(num(ti)?);
    }
    Ok((x, y))
}

pub fn eval_report(preds: &[DetectionSet], gts: Vec<GroundTruthVideo>) -> Result<EvalReport> {
    Ok(evaluate(preds, &class_agnostic_remap(gts))?)
}

pub fn eval(args: &EvalArgs) -> Result<EvalReport> {
    let gts = read_ground_truth(&args.gt)?;
    let preds = match (&args.preds, &args.state) {
        (Some(p), None) => read_detections(p)?,
        (None, Some(s)) => pseudo_predictions(&load_state(s)?.0),
        _ => return Err(CliError::Usage("pass exactly one of --preds and --state".into())),
    };
    let mut report = eval_report(&preds, gts)?;
    if let Some(p) = &args.spearman {
        let (x, y) = read_rank_pairs(p)?;
        report.spearman_rho = spearman(&x, &y)?;
        if report.spearman_rho.is_none() {
            warn!("rank correlation undefined: a column is constant");
        }
    }
    let table = format!("{TABLE_HEADER}\n{}\n", table_row(&report));
    if let Some(p) = &args.out {
        write_file(p, &json_bytes(&ReportJson::from(&report)))?;
    }
    if let Some(p) = &args.table {
        write_file(p, table.as_bytes())?;
    }
    print!("{table}");
    if let Some(rho) = report.spearman_rho {
        println!("spearman {rho:.4}");
    }
    Ok(report)
}

pub fn mock_gt(args: &MockGtArgs) -> Result<()> {
    let cfg = SynthConfig {
        videos: args.videos,
        frames: args.frames,
        height: args.height,
        width: args.width,
        max_objects: args.max_objects,
        seed: args.seed,
    };
    let mut videos = synth_ground_truth(&cfg)?;
    for v in &mut videos {
        let suffix = v.video_id.trim_start_matches("video").to_string();
        v.video_id = format!("{}{suffix}", args.prefix);
        for t in &mut v.tracks {
            t.gt_id = format!("{}-{}", v.video_id, t.gt_id);
        }
    }
    let file = ground_truth_to_file(&videos, |v| frame_dims(v, (args.height, args.width)));
    write_file(&args.out, &json_bytes(&file))
}

pub fn mock_dump(args: &MockDumpArgs) -> Result<()> {
    let gts = read_ground_truth(&args.gt)?;
    let cfg = NoiseConfig {
        target_iou_lo: args.iou_lo,
        target_iou_hi: args.iou_hi,
        false_positive_rate: args.fp_rate,
        miss_rate: args.miss_rate,
        duplicate_rate: args.dup_rate,
        iou_predictor_noise: args.noise,
        seed: args.seed,
    };
    let sets = generate_dump(&gts, &cfg)?;
    let mut bytes = Vec::new();
    write_detections(&mut bytes, &sets).map_err(|e| CliError::io(&args.out, e))?;
    info!("wrote {} detections for {} videos", sets.iter().map(DetectionSet::len).sum::<usize>(), sets.len());
    write_file(&args.out, &bytes)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AuditSummary {
    pub predictions: usize,
    pub dropped: usize,
    pub vanilla_total: f64,
    pub gated_total: f64,
}

fn hard_probs(m: Option<&FrameMask>, h: u32, w: u32) -> Vec<f64> {
    match m {
        Some(m) => rle_decode(m).as_column_major().iter().map(|&b| b as u8 as f64).collect(),
        None => vec![0.0; h as usize * w as usize],
    }
}

/// Mean per-frame reference loss of a hard prediction against its matched
/// ground truth, over frames where either has pixels.
fn vanilla_loss(pred: &MaskTrack, gt: Option<&MaskTrack>) -> Result<f64> {
    let Some((h, w)) = pred.dims().or_else(|| gt.and_then(MaskTrack::dims)) else {
        return Ok(0.0);
    };
    let (mut sum, mut n) = (0.0, 0usize);
    for t in 0..pred.len() {
        let p = pred.frame(t).filter(|m| !m.is_empty());
        let g = gt.and_then(|g| g.frame(t)).filter(|m| !m.is_empty());
        if p.is_none() && g.is_none() {
            continue;
        }
        let target = g.cloned().unwrap_or_else(|| FrameMask::empty(h, w));
        sum += reference_mask_loss(&hard_probs(p, h, w), &target)?;
        n += 1;
    }
    Ok(if n == 0 { 0.0 } else { sum / n as f64 })
}

pub fn droploss_audit(cfg: &RunConfig, args: &AuditArgs) -> Result<AuditSummary> {
    let preds = read_detections(&args.preds)?;
    let gt = gt_index(&read_ground_truth(&args.gt)?);
    let tau = args.tau_iou.unwrap_or(cfg.drop_iou);
    let mode = match args.iou_mode {
        IouModeArg::Track => IouMode::Track,
        IouModeArg::Frame => IouMode::Frame,
    };
    let mut rows = Vec::new();
    for set in &preds {
        let gts = gt.get(&set.video_id).map(Vec::as_slice).unwrap_or(&[]);
        for d in &set.detections {
            let iou = max_gt_iou(&d.masks, gts, mode)?;
            let matched = best_match(&d.masks, gts)?.map(|i| &gts[i]);
            rows.push((set.video_id.clone(), d.detection_id.clone(), iou, vanilla_loss(&d.masks, matched)?));
        }
    }
    let pairs: Vec<(f64, f64)> = rows.iter().map(|r| (r.2, r.3)).collect();
    let gated = drop_gate(&pairs, tau)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["video_id", "detection_id", "max_gt_iou", "vanilla_loss", "gated_loss"])
        .map_err(|e| CliError::Usage(e.to_string()))?;
    for (r, g) in rows.iter().zip(&gated) {
        w.write_record([r.0.clone(), r.1.clone(), r.2.to_string(), r.3.to_string(), g.to_string()])
            .map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(p) = &args.out {
        write_file(p, &bytes)?;
    }
    let summary = AuditSummary {
        predictions: rows.len(),
        dropped: rows.iter().zip(&gated).filter(|(r, &g)| g == 0.0 && r.3 > 0.0).count(),
        vanilla_total: pairs.iter().map(|p| p.1).sum(),
        gated_total: gated.iter().sum(),
    };
    println!("{}", serde_json::to_string(&summary).expect("serializable"));
    Ok(summary)
}

/// Runs every dump as one round from a fresh dataset, returning the
/// evaluation of the pseudo-labels after each round.
pub fn simulate(
    base: &TrainingDataset,
    dumps: &[Vec<DetectionSet>],
    gts: &[GroundTruthVideo],
    cfg: &RunConfig,
) -> Result<Vec<(EvalReport, RoundCounts, TrainingDataset)>> {
    let gt = gt_index(gts);
    let mut ds = base.clone();
    let mut out = Vec::new();
    for dump in dumps {
        let (next, counts) = run_round(&ds, dump, cfg, Some(&gt))?;
        let report = eval_report(&pseudo_predictions(&next), gts.to_vec())?;
        out.push((report, counts, next.clone()));
        ds = next;
    }
    Ok(out)
}

pub const TAU_SWEEP: [f64; 4] = [0.95, 0.85, 0.75, 0.5];

fn sweep_table(label: &str, rows: &[(String, EvalReport, usize, usize)]) -> (String, String) {
    let mut txt = format!("{label:>12} {TABLE_HEADER} retained pseudo_videos\n");
    let mut csv = format!("{label},ap50,ap75,ap,ap_s,ap_m,ap_l,ar10,retained,pseudo_videos\n");
    for (key, r, retained, videos) in rows {
        let _ = writeln!(txt, "{key:>12} {} {retained:>8} {videos:>13}", table_row(r));
        let opt = |v: Option<f64>| v.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            csv,
            "{key},{},{},{},{},{},{},{},{retained},{videos}",
            r.ap50, r.ap75, r.ap, opt(r.ap_s), opt(r.ap_m), opt(r.ap_l), r.ar10
        );
    }
    (txt, csv)
}

pub fn report(cfg: &RunConfig, args: &ReportArgs) -> Result<String> {
    let gts = read_ground_truth(&args.gt)?;
    let dumps = args.dump.iter().map(|p| read_detections(p)).collect::<Result<Vec<_>>>()?;
    if dumps.is_empty() {
        return Err(CliError::Usage("report needs at least one --dump".into()));
    }
    let mut base = TrainingDataset::new();
    if let Some(p) = &args.base {
        for v in read_ground_truth(p)? {
            let tracks = v.mask_tracks();
            base.add_base_video(v.video_id, v.num_frames, tracks)?;
        }
    }
    std::fs::create_dir_all(&args.out_dir).map_err(|e| CliError::io(&args.out_dir, e))?;
    let video_count = |ds: &TrainingDataset| ds.count_videos(vistrain_core::Provenance::Pseudo);
    let mut text = String::new();

    let mut rows = Vec::new();
    for tau in TAU_SWEEP {
        let c = RunConfig { tau_th: tau, scorer: ScorerKind::Predicted, ..cfg.clone() };
        let runs = simulate(&base, &dumps, &gts, &c)?;
        let (r, _, ds) = runs.last().expect("at least one round");
        let retained = runs.iter().map(|x| x.1.retained).sum();
        rows.push((format!("{tau}"), r.clone(), retained, video_count(ds)));
    }
    let (txt, csv) = sweep_table("tau", &rows);
    let _ = write!(text, "threshold sweep, {} round(s)\n{txt}\n", dumps.len());
    write_file(&args.out_dir.join("threshold_sweep.csv"), csv.as_bytes())?;

    let runs = simulate(&base, &dumps, &gts, cfg)?;
    let rows: Vec<_> = runs
        .iter()
        .enumerate()
        .map(|(k, (r, c, ds))| ((k + 1).to_string(), r.clone(), c.retained, video_count(ds)))
        .collect();
    let (txt, csv) = sweep_table("round", &rows);
    let _ = write!(text, "round sweep, tau {}\n{txt}\n", cfg.tau());
    write_file(&args.out_dir.join("round_sweep.csv"), csv.as_bytes())?;

    let mut rows = Vec::new();
    for scorer in [ScorerKind::Confidence, ScorerKind::Predicted, ScorerKind::Oracle] {
        let c = RunConfig { scorer, ..cfg.clone() };
        let runs = simulate(&base, &dumps, &gts, &c)?;
        let (r, _, ds) = runs.last().expect("at least one round");
        let name = serde_json::to_value(scorer).expect("serializable");
        rows.push((name.as_str().unwrap_or_default().to_string(), r.clone(), runs.iter().map(|x| x.1.retained).sum(), video_count(ds)));
    }
    let (txt, csv) = sweep_table("scorer", &rows);
    let _ = write!(text, "scorer comparison\n{txt}\n");
    write_file(&args.out_dir.join("scorer_sweep.csv"), csv.as_bytes())?;

    let pts = quality_points(&dumps[0], &gt_index(&gts))?;
    let mut w = csv::Writer::from_writer(Vec::new());
    for p in &pts {
        w.serialize(p).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Usage(e.to_string()))?;
    write_file(&args.out_dir.join("quality_points.csv"), &bytes)?;
    let iou: Vec<f64> = pts.iter().map(|p| p.true_iou).collect();
    let rho = |xs: Vec<f64>| -> Result<String> {
        Ok(spearman(&xs, &iou)?.map_or_else(|| "-".into(), |r| format!("{r:.4}")))
    };
    let _ = writeln!(
        text,
        "rank correlation with true IoU over {} frames: quality {}, confidence {}",
        pts.len(),
        rho(pts.iter().map(|p| p.quality).collect())?,
        rho(pts.iter().map(|p| p.confidence).collect())?
    );
    write_file(&args.out_dir.join("report.txt"), text.as_bytes())?;
    print!("{text}");
    Ok(text)
}
