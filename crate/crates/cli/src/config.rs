use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

use msface::detect::{CascadeParams, DetectParams, DhpParams};
use msface::forest::{EstimateParams, ForestParams};
use msface::recognize::{DEFAULT_CHIP_HEIGHT, DEFAULT_CHIP_WIDTH, DEFAULT_EIGEN_K};
use msface::thermal::DEFAULT_FEVER_THRESHOLD_C;

pub const SEED_ENV: &str = "MSFACE_SEED";

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Config {
    pub threshold_deg: f64,
    pub stride: usize,
    pub chip_size: (u32, u32),
    pub fever_threshold_c: f64,
    pub calibration: Option<PathBuf>,
    pub eigen_k: usize,
    pub jobs: usize,
    /// Master seed; `None` keeps each module's own default seed.
    pub seed: Option<u64>,
    pub forest: ForestParams,
    pub estimate: EstimateParams,
    pub cascade: CascadeParams,
    pub detect: DetectParams,
    pub k_head_mm: f64,
}

impl Default for Config {
    fn default() -> Self {
        let dhp = DhpParams::default();
        Config {
            threshold_deg: dhp.threshold_deg,
            stride: 15,
            chip_size: (DEFAULT_CHIP_WIDTH, DEFAULT_CHIP_HEIGHT),
            fever_threshold_c: DEFAULT_FEVER_THRESHOLD_C,
            calibration: None,
            eigen_k: DEFAULT_EIGEN_K,
            jobs: 1,
            seed: None,
            forest: ForestParams::default(),
            estimate: dhp.estimate,
            cascade: CascadeParams::default(),
            detect: dhp.detect,
            k_head_mm: dhp.k_head_mm,
        }
    }
}

impl Config {
    pub fn dhp(&self) -> DhpParams {
        DhpParams {
            threshold_deg: self.threshold_deg,
            k_head_mm: self.k_head_mm,
            detect: self.detect,
            estimate: self.estimate,
        }
    }

    pub fn forest_params(&self) -> ForestParams {
        ForestParams { seed: self.seed.unwrap_or(self.forest.seed), ..self.forest }
    }

    pub fn cascade_params(&self) -> CascadeParams {
        CascadeParams { seed: self.seed.unwrap_or(self.cascade.seed), ..self.cascade }
    }

    /// Seed for synthetic data.
    pub fn synth_seed(&self) -> u64 {
        self.seed.unwrap_or(42)
    }

    /// Effective settings as TOML, in the same layout the `--config` file uses.
    pub fn to_toml(&self) -> String {
        let f = FileConfig {
            threshold_deg: Some(self.threshold_deg),
            stride: Some(self.stride),
            chip_width: Some(self.chip_size.0),
            chip_height: Some(self.chip_size.1),
            fever_threshold_c: Some(self.fever_threshold_c),
            calibration: self.calibration.clone(),
            eigen_k: Some(self.eigen_k),
            jobs: Some(self.jobs),
            seed: self.seed,
            forest: Some(ForestFile {
                n_trees: Some(self.forest.n_trees),
                max_depth: Some(self.forest.max_depth),
                min_samples: Some(self.forest.min_samples),
                n_candidate_tests: Some(self.forest.n_candidate_tests),
                patch_size: Some(self.forest.patch_size),
                patches_per_frame: Some(self.forest.patches_per_frame),
                head_radius_mm: Some(self.forest.head_radius_mm),
            }),
            estimate: Some(EstimateFile {
                min_votes: Some(self.estimate.min_votes),
                min_fg_prob: Some(self.estimate.min_fg_prob),
                max_offset_var: Some(self.estimate.max_offset_var),
                max_angle_var: Some(self.estimate.max_angle_var),
                trim_frac: Some(self.estimate.trim_frac),
                grid_stride: Some(self.estimate.grid_stride),
            }),
            cascade: Some(CascadeFile {
                n_stages: Some(self.cascade.n_stages),
                stumps_per_stage: Some(self.cascade.stumps_per_stage),
                stage_fpr_target: Some(self.cascade.stage_fpr_target),
                min_hit_rate: Some(self.cascade.min_hit_rate),
                features_per_stage: Some(self.cascade.features_per_stage),
                max_negatives: Some(self.cascade.max_negatives),
            }),
            detect: Some(DetectFile {
                scale_factor: Some(self.detect.scale_factor),
                min_neighbors: Some(self.detect.min_neighbors),
                step_frac: Some(self.detect.step_frac),
                k_head_mm: Some(self.k_head_mm),
            }),
        };
        toml::to_string(&f).expect("config serializes")
    }
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub threshold_deg: Option<f64>,
    pub stride: Option<usize>,
    pub chip_width: Option<u32>,
    pub chip_height: Option<u32>,
    pub fever_threshold_c: Option<f64>,
    pub calibration: Option<PathBuf>,
    pub eigen_k: Option<usize>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub forest: Option<ForestFile>,
    pub estimate: Option<EstimateFile>,
    pub cascade: Option<CascadeFile>,
    pub detect: Option<DetectFile>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ForestFile {
    pub n_trees: Option<usize>,
    pub max_depth: Option<usize>,
    pub min_samples: Option<usize>,
    pub n_candidate_tests: Option<usize>,
    pub patch_size: Option<u32>,
    pub patches_per_frame: Option<usize>,
    pub head_radius_mm: Option<f64>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EstimateFile {
    pub min_votes: Option<usize>,
    pub min_fg_prob: Option<f64>,
    pub max_offset_var: Option<f64>,
    pub max_angle_var: Option<f64>,
    pub trim_frac: Option<f64>,
    pub grid_stride: Option<u32>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CascadeFile {
    pub n_stages: Option<usize>,
    pub stumps_per_stage: Option<usize>,
    pub stage_fpr_target: Option<f64>,
    pub min_hit_rate: Option<f64>,
    pub features_per_stage: Option<usize>,
    pub max_negatives: Option<usize>,
}

#[derive(Debug, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DetectFile {
    pub scale_factor: Option<f64>,
    pub min_neighbors: Option<usize>,
    pub step_frac: Option<f64>,
    pub k_head_mm: Option<f64>,
}

/// Command-line overrides shared by every subcommand.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Overrides {
    pub threshold_deg: Option<f64>,
    pub stride: Option<usize>,
    pub chip_size: Option<(u32, u32)>,
    pub fever_threshold_c: Option<f64>,
    pub calibration: Option<PathBuf>,
    pub eigen_k: Option<usize>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
}

fn set<T>(dst: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *dst = v;
    }
}

impl FileConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    fn apply(self, c: &mut Config, base_dir: &Path) {
        set(&mut c.threshold_deg, self.threshold_deg);
        set(&mut c.stride, self.stride);
        set(&mut c.chip_size.0, self.chip_width);
        set(&mut c.chip_size.1, self.chip_height);
        set(&mut c.fever_threshold_c, self.fever_threshold_c);
        // relative paths in a config file are relative to the file
        if let Some(p) = self.calibration {
            c.calibration = Some(base_dir.join(p));
        }
        set(&mut c.eigen_k, self.eigen_k);
        set(&mut c.jobs, self.jobs);
        if self.seed.is_some() {
            c.seed = self.seed;
        }
        if let Some(f) = self.forest {
            set(&mut c.forest.n_trees, f.n_trees);
            set(&mut c.forest.max_depth, f.max_depth);
            set(&mut c.forest.min_samples, f.min_samples);
            set(&mut c.forest.n_candidate_tests, f.n_candidate_tests);
            set(&mut c.forest.patch_size, f.patch_size);
            set(&mut c.forest.patches_per_frame, f.patches_per_frame);
            set(&mut c.forest.head_radius_mm, f.head_radius_mm);
        }
        if let Some(e) = self.estimate {
            set(&mut c.estimate.min_votes, e.min_votes);
            set(&mut c.estimate.min_fg_prob, e.min_fg_prob);
            set(&mut c.estimate.max_offset_var, e.max_offset_var);
            set(&mut c.estimate.max_angle_var, e.max_angle_var);
            set(&mut c.estimate.trim_frac, e.trim_frac);
            set(&mut c.estimate.grid_stride, e.grid_stride);
        }
        if let Some(k) = self.cascade {
            set(&mut c.cascade.n_stages, k.n_stages);
            set(&mut c.cascade.stumps_per_stage, k.stumps_per_stage);
            set(&mut c.cascade.stage_fpr_target, k.stage_fpr_target);
            set(&mut c.cascade.min_hit_rate, k.min_hit_rate);
            set(&mut c.cascade.features_per_stage, k.features_per_stage);
            set(&mut c.cascade.max_negatives, k.max_negatives);
        }
        if let Some(d) = self.detect {
            set(&mut c.detect.scale_factor, d.scale_factor);
            set(&mut c.detect.min_neighbors, d.min_neighbors);
            set(&mut c.detect.step_frac, d.step_frac);
            set(&mut c.k_head_mm, d.k_head_mm);
        }
    }
}

/// defaults < config file < `MSFACE_SEED` < flags.
pub fn resolve(file: Option<&Path>, env_seed: Option<&str>, flags: &Overrides) -> Result<Config> {
    let mut c = Config::default();
    if let Some(path) = file {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let parsed = FileConfig::parse(&text).with_context(|| format!("parsing config {}", path.display()))?;
        parsed.apply(&mut c, path.parent().unwrap_or(Path::new(".")));
    }
    if let Some(s) = env_seed {
        let seed = s.trim().parse().with_context(|| format!("{SEED_ENV}={s:?} is not an unsigned integer"))?;
        c.seed = Some(seed);
    }
    set(&mut c.threshold_deg, flags.threshold_deg);
    set(&mut c.stride, flags.stride);
    set(&mut c.chip_size, flags.chip_size);
    set(&mut c.fever_threshold_c, flags.fever_threshold_c);
    if flags.calibration.is_some() {
        c.calibration = flags.calibration.clone();
    }
    set(&mut c.eigen_k, flags.eigen_k);
    set(&mut c.jobs, flags.jobs);
    if flags.seed.is_some() {
        c.seed = flags.seed;
    }
    if c.stride == 0 {
        anyhow::bail!("stride must be >= 1");
    }
    if c.jobs == 0 {
        anyhow::bail!("jobs must be >= 1");
    }
    Ok(c)
}
