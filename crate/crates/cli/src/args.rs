use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "msface", version, about = "Depth-gated face analysis over synchronized depth, gray and IR streams")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args, Clone, Default)]
pub struct GlobalArgs {
    /// TOML config file; flags override it.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Write the machine-readable result here instead of stdout.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Master seed (overrides the config file and MSFACE_SEED).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Frontal gate threshold in degrees.
    #[arg(long, global = true, value_name = "DEG")]
    pub threshold: Option<f64>,
    /// Process every N-th frame in pipeline runs.
    #[arg(long, global = true, value_name = "N")]
    pub stride: Option<usize>,
    /// Recognition chip size as WxH.
    #[arg(long, global = true, value_name = "WxH", value_parser = parse_size)]
    pub chip_size: Option<(u32, u32)>,
    /// Fever threshold in °C.
    #[arg(long, global = true, value_name = "C")]
    pub fever_threshold: Option<f64>,
    /// IR calibration file (key=value or CSV form).
    #[arg(long, global = true, value_name = "PATH")]
    pub calibration: Option<PathBuf>,
    /// EigenFace components.
    #[arg(long, global = true, value_name = "K")]
    pub eigen_k: Option<usize>,
    /// Sequences processed in parallel.
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Print the effective configuration as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Eigen,
    Fisher,
    Lbph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolarityArg {
    Distance,
    Similarity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Text,
    Csv,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render synthetic sequences (one directory per subject) or a gallery tree.
    Synth(SynthArgs),
    /// Train the head-pose forest on synthetic frames or labeled manifests.
    TrainPose(TrainPoseArgs),
    /// Train the boosted face cascade.
    TrainCascade(TrainCascadeArgs),
    /// Train a recognizer on a gallery.
    Enroll(EnrollArgs),
    /// Per-frame frontal gate decisions, or a threshold sweep.
    Gate(GateArgs),
    /// Face boxes per frame, full-frame or depth-gated.
    Detect(DetectArgs),
    /// Identify one image, or run a recognition pipeline over a sequence.
    Recognize(RecognizeArgs),
    /// ROC, EER and FRR at fixed FAR from scores or an enrollment protocol.
    Verify(VerifyArgs),
    /// Fit the linear intensity-to-temperature calibration.
    CalibrateIr(CalibrateArgs),
    /// Forehead temperature and blood-flow surrogate from an IR frame.
    Temp(TempArgs),
    /// Time the traditional and depth-gated pipelines.
    Bench(BenchArgs),
    /// Protocol messages for findings.
    Protocol(ProtocolArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Output directory.
    #[arg(long)]
    pub dir: PathBuf,
    #[arg(long, default_value_t = 10)]
    pub subjects: usize,
    #[arg(long, default_value_t = 31)]
    pub frames: usize,
    /// Yaw sweep START:END in degrees.
    #[arg(long, default_value = "-75:75", value_parser = parse_range, allow_hyphen_values = true)]
    pub yaw: (f64, f64),
    /// Pitch sweep START:END in degrees.
    #[arg(long, default_value = "0:0", value_parser = parse_range, allow_hyphen_values = true)]
    pub pitch: (f64, f64),
    /// Forehead temperature of the rendered subjects, °C.
    #[arg(long, default_value_t = 33.727)]
    pub forehead_temp: f64,
    /// Write a `subject_<id>/<n>.pgm` gallery instead of sequences.
    #[arg(long)]
    pub gallery: bool,
}

#[derive(Debug, Args)]
pub struct TrainPoseArgs {
    /// Labeled manifests (depth frames with `_pose.txt` siblings); synthetic frames if absent.
    #[arg(long)]
    pub manifest: Vec<PathBuf>,
    /// Synthetic training frames.
    #[arg(long, default_value_t = 500)]
    pub frames: usize,
    /// Depth noise sigma of synthetic frames, mm.
    #[arg(long, default_value_t = 0.0)]
    pub noise_mm: f64,
}

#[derive(Debug, Args)]
pub struct TrainCascadeArgs {
    /// Directory of positive PGM crops; synthetic if absent.
    #[arg(long, requires = "neg_dir")]
    pub pos_dir: Option<PathBuf>,
    /// Directory of face-free PGM images.
    #[arg(long, requires = "pos_dir")]
    pub neg_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 600)]
    pub positives: usize,
    #[arg(long, default_value_t = 3000)]
    pub negatives: usize,
    /// Synthetic scenes used for hard-negative mining.
    #[arg(long, default_value_t = 40)]
    pub mining_scenes: usize,
}

#[derive(Debug, Args)]
pub struct EnrollArgs {
    #[arg(long, value_enum)]
    pub method: Method,
    /// Gallery tree `subject_<id>/*.pgm`.
    #[arg(long, conflicts_with = "synth_subjects")]
    pub gallery: Option<PathBuf>,
    /// Enroll synthetic subjects 0..N instead of a gallery directory.
    #[arg(long)]
    pub synth_subjects: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub forest: PathBuf,
    /// Comma-separated thresholds; emits `threshold_deg,frames_accepted`.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub sweep: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long)]
    pub cascade: PathBuf,
    /// Gate with this forest and search only the head region.
    #[arg(long)]
    pub forest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RecognizeArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Single gray image to identify.
    #[arg(long, conflicts_with = "manifest")]
    pub image: Option<PathBuf>,
    /// Face box X,Y,W,H in the image; whole image if absent.
    #[arg(long = "box", value_parser = parse_box, requires = "image")]
    pub bbox: Option<[f64; 4]>,
    /// Run a pipeline over this sequence.
    #[arg(long, requires = "cascade")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub cascade: Option<PathBuf>,
    /// Depth-gated pipeline with this forest; traditional pipeline if absent.
    #[arg(long)]
    pub forest: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Score CSV `kind,score`.
    #[arg(long, conflicts_with_all = ["model", "gallery"])]
    pub scores: Option<PathBuf>,
    /// Recognizer used to score a gallery with the enrollment protocol.
    #[arg(long, requires = "gallery")]
    pub model: Option<PathBuf>,
    /// Gallery tree whose first `--enroll` chips per subject enroll.
    #[arg(long, requires = "model")]
    pub gallery: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    pub enroll: usize,
    #[arg(long, value_enum, default_value_t = PolarityArg::Distance)]
    pub polarity: PolarityArg,
    /// FAR operating points.
    #[arg(long, value_delimiter = ',', default_value = "0.1,0.01,0.001")]
    pub far: Vec<f64>,
    /// Also write the ROC curve CSV here.
    #[arg(long)]
    pub curve: Option<PathBuf>,
    /// Also write the generated scores CSV here.
    #[arg(long)]
    pub scores_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    /// CSV `intensity,temp_c`.
    #[arg(long)]
    pub points: PathBuf,
}

#[derive(Debug, Args)]
pub struct TempArgs {
    #[arg(long)]
    pub ir: PathBuf,
    /// Face box X,Y,W,H; the forehead region is derived from it.
    #[arg(long = "box", value_parser = parse_box, conflicts_with = "roi")]
    pub bbox: Option<[f64; 4]>,
    /// Explicit IR region X,Y,W,H.
    #[arg(long, value_parser = parse_box)]
    pub roi: Option<[f64; 4]>,
    /// Gray-to-IR point correspondences CSV `u_gray,v_gray,u_ir,v_ir`.
    #[arg(long, requires = "bbox")]
    pub correspondences: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, required = true)]
    pub manifest: Vec<PathBuf>,
    #[arg(long)]
    pub forest: PathBuf,
    #[arg(long)]
    pub cascade: PathBuf,
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
    pub format: ReportFormat,
}

#[derive(Debug, Args)]
pub struct ProtocolArgs {
    /// Measured temperature; a fever finding is raised at or above the fever threshold.
    #[arg(long)]
    pub temp: Option<f64>,
    /// Finding as KIND or KIND:DETAIL (`fever`, `appearance-anomaly`).
    #[arg(long)]
    pub finding: Vec<String>,
}

fn parse_size(s: &str) -> Result<(u32, u32), String> {
    let (w, h) = s.split_once(['x', 'X']).ok_or_else(|| format!("expected WxH, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<u32>().ok().filter(|&n| n > 0).ok_or_else(|| format!("bad size {s:?}"));
    Ok((p(w)?, p(h)?))
}

fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(':').ok_or_else(|| format!("expected START:END, got {s:?}"))?;
    let p = |v: &str| v.trim().parse::<f64>().map_err(|_| format!("bad number in {s:?}"));
    Ok((p(a)?, p(b)?))
}

fn parse_box(s: &str) -> Result<[f64; 4], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| format!("expected X,Y,W,H, got {s:?}"))?;
    match v[..] {
        [x, y, w, h] if w > 0.0 && h > 0.0 => Ok([x, y, w, h]),
        [_, _, _, _] => Err("box width and height must be positive".into()),
        _ => Err(format!("expected X,Y,W,H, got {s:?}")),
    }
}
