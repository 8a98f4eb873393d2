use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;

use msface::detect::{
    detect_dhp, detect_haar, train_cascade_mined, Cascade, DetBox, NegativeScene, BASE_WINDOW,
};
use msface::forest::PoseForest;
use msface::frame::{DepthFrame, GrayFrame, Rect};
use msface::geometry::{gate, CameraIntrinsics, GateDecision, HeadPose, Vec3};
use msface::io::{read_text, write_atomic};
use msface::pgm;
use msface::pipeline::{
    run_proposed, run_traditional, sweep_csv, sync_streams, threshold_sweep, BenchReport, RunConfig, Stream,
    StreamManifest, SyncedTriple,
};
use msface::protocol::{dedup_by_kind, protocol_messages, Finding, FindingKind};
use msface::recognize::{normalize_chip, normalize_image, Gallery, Recognizer, RecognizerKind, RecognizerModel};
use msface::synth::{
    cascade_mining_scenes, cascade_training_set, gallery_chips, pose_training_set, synth_sequence, PoseRanges,
    SynthSequenceSpec, GALLERY_JITTER, GALLERY_YAWS_DEG,
};
use msface::thermal::{
    fever_check, fit_calibration, fit_roi_map, forehead_roi, parse_calibration_points, parse_correspondences,
    temp_of_roi, ForeheadParams, RoiMap, ThermalCalibration,
};
use msface::verify::{enrollment_protocol, Polarity, ScoreSet, SubjectChips, VerifyReport};

use crate::args::*;
use crate::config::Config;
use crate::UsageError;

pub struct Ctx {
    pub cfg: Config,
    pub out: Option<PathBuf>,
}

impl Ctx {
    /// Machine-readable result to `--out` (atomically) or stdout.
    fn emit(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => write_atomic(p, text.as_bytes())?,
            None => print!("{text}"),
        }
        Ok(())
    }

    fn out_path(&self, what: &str) -> Result<&Path> {
        self.out
            .as_deref()
            .ok_or_else(|| UsageError(format!("{what} needs --out <PATH> for the model file")).into())
    }

    fn calibration(&self) -> Result<ThermalCalibration> {
        match &self.cfg.calibration {
            Some(p) => Ok(ThermalCalibration::load(p)?),
            None => Ok(ThermalCalibration::reference()),
        }
    }

    fn run_config(&self, chip_size: (u32, u32)) -> Result<RunConfig> {
        Ok(RunConfig {
            stride: self.cfg.stride,
            chip_size,
            dhp: self.cfg.dhp(),
            calibration: self.calibration()?,
            fever_threshold_c: self.cfg.fever_threshold_c,
            ..RunConfig::default()
        })
    }
}

pub fn dispatch(cmd: Command, ctx: &Ctx) -> Result<()> {
    match cmd {
        Command::Synth(a) => synth(a, ctx),
        Command::TrainPose(a) => train_pose(a, ctx),
        Command::TrainCascade(a) => train_cascade_cmd(a, ctx),
        Command::Enroll(a) => enroll(a, ctx),
        Command::Gate(a) => gate_cmd(a, ctx),
        Command::Detect(a) => detect(a, ctx),
        Command::Recognize(a) => recognize(a, ctx),
        Command::Verify(a) => verify(a, ctx),
        Command::CalibrateIr(a) => calibrate_ir(a, ctx),
        Command::Temp(a) => temp(a, ctx),
        Command::Bench(a) => bench(a, ctx),
        Command::Protocol(a) => protocol(a, ctx),
    }
}

/// Synchronized frames and intrinsics of one manifest.
pub fn load_sequence(manifest: &Path) -> Result<(Vec<SyncedTriple>, CameraIntrinsics)> {
    let m = StreamManifest::load(manifest)?;
    let k = intrinsics_of(&m, manifest)?;
    let sync = sync_streams(&m)?;
    let s = &sync.stats;
    if s.dropped + s.load_errors > 0 {
        log::warn!(
            "{}: {} of {} depth frames dropped, {} failed to load",
            manifest.display(),
            s.dropped,
            s.depth_frames,
            s.load_errors
        );
    }
    Ok((sync.triples, k))
}

fn intrinsics_of(m: &StreamManifest, path: &Path) -> Result<CameraIntrinsics> {
    m.intrinsics()?
        .ok_or_else(|| anyhow!("{}: sidecar names no intrinsics file", path.display()))
}

fn model_kind(m: Method) -> RecognizerKind {
    match m {
        Method::Eigen => RecognizerKind::Eigen,
        Method::Fisher => RecognizerKind::Fisher,
        Method::Lbph => RecognizerKind::Lbph,
    }
}

fn det_box(b: [f64; 4]) -> DetBox {
    DetBox { x: b[0], y: b[1], w: b[2], h: b[3], score: 0.0 }
}

fn synth(a: SynthArgs, ctx: &Ctx) -> Result<()> {
    if a.subjects == 0 {
        bail!(UsageError("--subjects must be >= 1".into()));
    }
    let k = CameraIntrinsics::synthetic();
    let seed = ctx.cfg.synth_seed();
    let mut listing = String::new();
    if a.gallery {
        let ids: Vec<i64> = (0..a.subjects as i64).collect();
        let chips = gallery_chips(&ids, &GALLERY_YAWS_DEG, GALLERY_JITTER, &k, ctx.cfg.chip_size, seed)?;
        let mut counts = vec![0usize; a.subjects];
        for c in &chips {
            let id = c.label.expect("gallery chips are labeled");
            let dir = a.dir.join(format!("subject_{id}"));
            std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
            let path = dir.join(format!("{:03}.pgm", counts[id as usize]));
            counts[id as usize] += 1;
            let frame = GrayFrame::new(c.width, c.height, c.pixels.clone(), 0)?;
            pgm::write_gray(&path, &frame)?;
        }
        for (id, n) in counts.iter().enumerate() {
            let _ = writeln!(listing, "{}", a.dir.join(format!("subject_{id}")).display());
            log::info!("subject {id}: {n} chips");
        }
    } else {
        let jobs: Vec<SynthSequenceSpec> = (0..a.subjects)
            .map(|s| SynthSequenceSpec {
                subject_id: s as i64,
                frame_count: a.frames,
                yaw_sweep_deg: a.yaw,
                pitch_sweep_deg: a.pitch,
                forehead_temp_c: a.forehead_temp,
                seed: seed.wrapping_add(s as u64),
                ..SynthSequenceSpec::default()
            })
            .collect();
        for spec in &jobs {
            let dir = a.dir.join(format!("subject_{}", spec.subject_id));
            synth_sequence(spec, &k, &dir)?;
            let _ = writeln!(listing, "{}", dir.join(msface::synth::MANIFEST_NAME).display());
        }
    }
    ctx.emit(&listing)
}

/// `frame_0001_depth.pgm` -> `frame_0001_pose.txt`.
fn pose_path_for(depth: &Path) -> Option<PathBuf> {
    let name = depth.file_name()?.to_str()?;
    let stem = name.strip_suffix("depth.pgm")?;
    Some(depth.with_file_name(format!("{stem}pose.txt")))
}

fn labeled_frames(manifests: &[PathBuf]) -> Result<(Vec<(DepthFrame, HeadPose)>, CameraIntrinsics)> {
    let mut frames = Vec::new();
    let mut intr: Option<CameraIntrinsics> = None;
    for path in manifests {
        let m = StreamManifest::load(path)?;
        let k = intrinsics_of(&m, path)?;
        if intr.is_some_and(|i| i != k) {
            bail!("{}: intrinsics differ from the first manifest", path.display());
        }
        intr = Some(k);
        for row in m.stream_rows(Stream::Depth) {
            let depth_path = m.resolve(&row.path);
            let pose_path = pose_path_for(&depth_path)
                .ok_or_else(|| anyhow!("{}: cannot derive a pose file name", depth_path.display()))?;
            let pose = HeadPose::parse_pose_text(&read_text(&pose_path)?)?;
            frames.push((pgm::read_depth(&depth_path, row.timestamp_us)?, pose));
        }
    }
    Ok((frames, intr.expect("at least one manifest")))
}

fn train_pose(a: TrainPoseArgs, ctx: &Ctx) -> Result<()> {
    let out = ctx.out_path("train-pose")?;
    let (frames, k) = if a.manifest.is_empty() {
        let k = CameraIntrinsics::synthetic();
        (pose_training_set(a.frames, &PoseRanges::training(), a.noise_mm, &k, ctx.cfg.synth_seed())?, k)
    } else {
        labeled_frames(&a.manifest)?
    };
    let t = Instant::now();
    let forest = PoseForest::train(&frames, &k, &ctx.cfg.forest_params())?;
    forest.save(out)?;
    let nodes: usize = forest.trees.iter().map(|t| t.nodes.len()).sum();
    eprintln!(
        "trained {} trees ({nodes} nodes) on {} frames in {:.1} s -> {}",
        forest.trees.len(),
        frames.len(),
        t.elapsed().as_secs_f64(),
        out.display()
    );
    Ok(())
}

fn pgm_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
        .with_context(|| format!("reading {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "pgm"))
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("{}: no .pgm files", dir.display());
    }
    Ok(files)
}

/// Square crops at three scales on a non-overlapping grid, resized to the
/// base window, then thinned evenly down to `n`.
fn grid_negatives(images: &[GrayFrame], n: usize) -> Vec<GrayFrame> {
    let mut all = Vec::new();
    for img in images {
        for mult in [1, 2, 4] {
            let side = BASE_WINDOW * mult;
            let mut y = 0;
            while y + side <= img.height {
                let mut x = 0;
                while x + side <= img.width {
                    if let Ok(c) = img.crop(x, y, side, side) {
                        all.push(c.resize_bilinear(BASE_WINDOW, BASE_WINDOW));
                    }
                    x += side;
                }
                y += side;
            }
        }
    }
    if all.len() <= n {
        return all;
    }
    let step = all.len() as f64 / n as f64;
    (0..n).map(|i| all[(i as f64 * step) as usize].clone()).collect()
}

fn train_cascade_cmd(a: TrainCascadeArgs, ctx: &Ctx) -> Result<()> {
    let out = ctx.out_path("train-cascade")?;
    let params = ctx.cfg.cascade_params();
    let (pos, neg, scenes) = match (&a.pos_dir, &a.neg_dir) {
        (Some(pd), Some(nd)) => {
            let pos = pgm_files(pd)?
                .iter()
                .map(|p| Ok(pgm::read_gray(p, 0)?.resize_bilinear(BASE_WINDOW, BASE_WINDOW)))
                .collect::<Result<Vec<_>>>()?;
            let images = pgm_files(nd)?.iter().map(|p| pgm::read_gray(p, 0)).collect::<msface::Result<Vec<_>>>()?;
            let neg = grid_negatives(&images, a.negatives);
            let scenes = images.into_iter().map(|frame| NegativeScene { frame, exclude: Vec::new() }).collect();
            (pos, neg, scenes)
        }
        _ => {
            let seed = ctx.cfg.synth_seed();
            let (pos, neg) = cascade_training_set(a.positives, a.negatives, 20.0, seed);
            (pos, neg, cascade_mining_scenes(a.mining_scenes, seed.wrapping_add(1)))
        }
    };
    let t = Instant::now();
    let tr = train_cascade_mined(&pos, &neg, &scenes, &params)?;
    tr.cascade.save(out)?;
    let stumps: Vec<String> = tr.cascade.stages.iter().map(|s| s.stumps.len().to_string()).collect();
    eprintln!(
        "trained {} stages (stumps {}) on {} positives / {} negatives in {:.1} s -> {}",
        tr.cascade.stages.len(),
        stumps.join(","),
        pos.len(),
        neg.len(),
        t.elapsed().as_secs_f64(),
        out.display()
    );
    eprintln!("surviving training negatives: {}", tr.surviving_negatives);
    if let Some(w) = &tr.warning {
        eprintln!("warning: {w}");
    }
    Ok(())
}

fn enroll(a: EnrollArgs, ctx: &Ctx) -> Result<()> {
    let out = ctx.out_path("enroll")?;
    let (w, h) = ctx.cfg.chip_size;
    let gallery = match (&a.gallery, a.synth_subjects) {
        (Some(dir), _) => Gallery::load_dir(dir, w, h)?,
        (None, Some(n)) => {
            let ids: Vec<i64> = (0..n as i64).collect();
            let chips = gallery_chips(
                &ids,
                &GALLERY_YAWS_DEG,
                GALLERY_JITTER,
                &CameraIntrinsics::synthetic(),
                (w, h),
                ctx.cfg.synth_seed(),
            )?;
            Gallery::new(chips)?
        }
        (None, None) => bail!(UsageError("enroll needs --gallery <DIR> or --synth-subjects <N>".into())),
    };
    let model = RecognizerModel::train(model_kind(a.method), &gallery, ctx.cfg.eigen_k)?;
    model.save(out)?;
    eprintln!(
        "{} model: {} chips, {} subjects -> {}",
        model.kind().name(),
        gallery.chips.len(),
        gallery.class_count(),
        out.display()
    );
    Ok(())
}

fn gate_cmd(a: GateArgs, ctx: &Ctx) -> Result<()> {
    // rejects thresholds outside (0, 90] before any work
    gate(&HeadPose::from_euler(Vec3::new(0.0, 0.0, 1000.0), 0.0, 0.0, 0.0), ctx.cfg.threshold_deg)?;
    let (triples, k) = load_sequence(&a.manifest)?;
    let forest = PoseForest::load(&a.forest)?;
    let poses: Vec<Option<HeadPose>> = triples
        .iter()
        .map(|t| forest.estimate(&t.depth, &k, &ctx.cfg.estimate))
        .collect::<msface::Result<_>>()?;
    if !a.sweep.is_empty() {
        return ctx.emit(&sweep_csv(&threshold_sweep(&poses, &a.sweep)?));
    }
    let mut s = String::from("frame,offset_deg,accepted\n");
    for (t, p) in triples.iter().zip(&poses) {
        let g = match p {
            Some(p) => gate(p, ctx.cfg.threshold_deg)?,
            None => GateDecision::no_head(ctx.cfg.threshold_deg),
        };
        let _ = writeln!(s, "{},{:.6},{}", t.index, g.offset_deg, g.accepted);
    }
    ctx.emit(&s)
}

fn box_cols(b: Option<&DetBox>) -> String {
    match b {
        Some(b) => format!("{:.3},{:.3},{:.3},{:.3},{}", b.x, b.y, b.w, b.h, b.score),
        None => ",,,,".into(),
    }
}

fn detect(a: DetectArgs, ctx: &Ctx) -> Result<()> {
    let (triples, k) = load_sequence(&a.manifest)?;
    let cascade = Cascade::load(&a.cascade)?;
    let mut s = String::new();
    match &a.forest {
        None => {
            s.push_str("frame,box,x,y,w,h,score\n");
            for t in &triples {
                let boxes = detect_haar(&t.gray, &cascade, &ctx.cfg.detect, None);
                if boxes.is_empty() {
                    let _ = writeln!(s, "{},,{}", t.index, box_cols(None));
                }
                for (i, b) in boxes.iter().enumerate() {
                    let _ = writeln!(s, "{},{i},{}", t.index, box_cols(Some(b)));
                }
            }
        }
        Some(fp) => {
            let forest = PoseForest::load(fp)?;
            let dhp = ctx.cfg.dhp();
            s.push_str("frame,offset_deg,accepted,box,x,y,w,h,score\n");
            for t in &triples {
                let r = detect_dhp(&t.depth, &t.gray, &forest, &cascade, &k, &dhp, None)?;
                let head = format!("{},{:.6},{}", t.index, r.gate.offset_deg, r.gate.accepted);
                if r.boxes.is_empty() {
                    let _ = writeln!(s, "{head},,{}", box_cols(None));
                }
                for (i, b) in r.boxes.iter().enumerate() {
                    let _ = writeln!(s, "{head},{i},{}", box_cols(Some(b)));
                }
            }
        }
    }
    ctx.emit(&s)
}

fn recognize(a: RecognizeArgs, ctx: &Ctx) -> Result<()> {
    let model = RecognizerModel::load(&a.model)?;
    let (w, h) = model.chip_size();
    if let Some(img_path) = &a.image {
        let img = pgm::read_gray(img_path, 0)?;
        let chip = match a.bbox {
            Some(b) => normalize_chip(&img, &det_box(b), w, h)?,
            None => normalize_image(&img, w, h)?,
        };
        let p = model.predict(&chip)?;
        return ctx.emit(&format!("label,distance\n{},{:.6}\n", p.label, p.distance));
    }
    let manifest = a
        .manifest
        .as_ref()
        .ok_or_else(|| UsageError("recognize needs --image <PGM> or --manifest <CSV> with --cascade".into()))?;
    let cascade = Cascade::load(a.cascade.as_ref().expect("clap requires --cascade"))?;
    let (triples, k) = load_sequence(manifest)?;
    let cfg = ctx.run_config((w, h))?;
    let run = match &a.forest {
        Some(fp) => run_proposed(&triples, &PoseForest::load(fp)?, &cascade, &model, &k, &cfg),
        None => run_traditional(&triples, &cascade, &model, &cfg),
    };
    for m in protocol_messages(&run.findings) {
        eprintln!("{m}");
    }
    ctx.emit(&run.results_csv())
}

fn subject_chips(gallery: Gallery) -> Vec<SubjectChips> {
    let mut out: Vec<SubjectChips> = Vec::new();
    for c in gallery.chips {
        let id = c.label.expect("gallery chips are labeled");
        match out.iter_mut().find(|s| s.subject == id) {
            Some(s) => s.chips.push(c),
            None => out.push(SubjectChips { subject: id, chips: vec![c] }),
        }
    }
    out
}

fn verify(a: VerifyArgs, ctx: &Ctx) -> Result<()> {
    let polarity = match a.polarity {
        PolarityArg::Distance => Polarity::Distance,
        PolarityArg::Similarity => Polarity::Similarity,
    };
    let scores = match (&a.scores, &a.model, &a.gallery) {
        (Some(p), _, _) => ScoreSet::from_csv(&read_text(p)?, polarity)?,
        (None, Some(mp), Some(gd)) => {
            let model = RecognizerModel::load(mp)?;
            let (w, h) = model.chip_size();
            let outcome = enrollment_protocol(&subject_chips(Gallery::load_dir(gd, w, h)?), a.enroll, &model)?;
            if !outcome.excluded.is_empty() {
                log::warn!("subjects without enough chips: {:?}", outcome.excluded);
            }
            outcome.scores
        }
        _ => bail!(UsageError("verify needs --scores <CSV> or --model <BIN> with --gallery <DIR>".into())),
    };
    if let Some(p) = &a.scores_out {
        write_atomic(p, scores.to_csv().as_bytes())?;
    }
    let report = VerifyReport::build(&scores, &a.far)?;
    if let Some(p) = &a.curve {
        write_atomic(p, report.curve_csv().as_bytes())?;
    }
    ctx.emit(&report.to_text())
}

fn calibrate_ir(a: CalibrateArgs, ctx: &Ctx) -> Result<()> {
    let cal = fit_calibration(&parse_calibration_points(&read_text(&a.points)?)?)?;
    ctx.emit(&cal.to_text())
}

fn temp(a: TempArgs, ctx: &Ctx) -> Result<()> {
    let ir = pgm::read_ir(&a.ir, 0)?;
    let cal = ctx.calibration()?;
    let roi = match (a.bbox, a.roi) {
        (Some(b), _) => {
            let map = match &a.correspondences {
                Some(p) => fit_roi_map(&parse_correspondences(&read_text(p)?)?)?,
                None => RoiMap::identity(),
            };
            forehead_roi(&det_box(b), &map, &ForeheadParams::default(), ir.width, ir.height)?
        }
        (None, Some(r)) => {
            if r.iter().any(|v| *v < 0.0 || v.fract() != 0.0) {
                bail!(UsageError("--roi takes non-negative integer pixel coordinates".into()));
            }
            Rect::new(r[0] as u32, r[1] as u32, r[2] as u32, r[3] as u32)
        }
        (None, None) => bail!(UsageError("temp needs --box or --roi".into())),
    };
    let model = RunConfig::default().blood_flow;
    let reading = temp_of_roi(&ir, roi, &cal, &model)?;
    let mut s = format!(
        "roi={},{},{},{}\nmean_intensity={:.4}\ntemp_c={:.4}\nblood_flow={:.4}\n",
        roi.x, roi.y, roi.w, roi.h, reading.mean_intensity, reading.temp_c, reading.blood_flow
    );
    let findings: Vec<Finding> = fever_check(reading.temp_c, ctx.cfg.fever_threshold_c, None).into_iter().collect();
    for m in protocol_messages(&findings) {
        let _ = writeln!(s, "{m}");
    }
    ctx.emit(&s)
}

fn bench(a: BenchArgs, ctx: &Ctx) -> Result<()> {
    let t = Instant::now();
    let forest = PoseForest::load(&a.forest)?;
    let overhead_s = t.elapsed().as_secs_f64();
    let cascade = Cascade::load(&a.cascade)?;
    let model = RecognizerModel::load(&a.model)?;
    let mut videos = Vec::new();
    let mut k0: Option<CameraIntrinsics> = None;
    for m in &a.manifest {
        let (v, k) = load_sequence(m)?;
        if k0.is_some_and(|k0| k0 != k) {
            bail!("{}: intrinsics differ from the first manifest", m.display());
        }
        k0 = Some(k);
        videos.push(v);
    }
    let k = k0.expect("clap requires a manifest");
    let cfg = ctx.run_config(model.chip_size())?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(ctx.cfg.jobs).build()?;
    let runs: Vec<_> = pool.install(|| {
        videos
            .par_iter()
            .map(|v| {
                (
                    run_traditional(v, &cascade, &model, &cfg),
                    run_proposed(v, &forest, &cascade, &model, &k, &cfg),
                )
            })
            .collect()
    });
    let (trad, prop): (Vec<_>, Vec<_>) = runs.into_iter().unzip();
    let report = BenchReport::from_runs(&trad, &prop, overhead_s);
    match a.format {
        ReportFormat::Text => ctx.emit(&report.to_text()),
        ReportFormat::Csv => ctx.emit(&report.to_csv()),
    }
}

fn protocol(a: ProtocolArgs, ctx: &Ctx) -> Result<()> {
    let mut findings = Vec::new();
    if let Some(t) = a.temp {
        findings.extend(fever_check(t, ctx.cfg.fever_threshold_c, None));
    }
    for f in &a.finding {
        let (kind, detail) = match f.split_once(':') {
            Some((k, d)) => (k, d),
            None => (f.as_str(), ""),
        };
        let kind = FindingKind::parse(kind.trim())?;
        findings.push(match kind {
            FindingKind::Fever => Finding::fever(a.temp.unwrap_or(f64::NAN), None),
            FindingKind::AppearanceAnomaly => Finding::appearance(detail.trim(), None),
        });
    }
    let mut s = String::new();
    for m in protocol_messages(&dedup_by_kind(findings)) {
        let _ = writeln!(s, "{m}");
    }
    ctx.emit(&s)
}
