use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::frame::{DepthFrame, GrayFrame, IrFrame};
use crate::geometry::CameraIntrinsics;
use crate::io::{read_text, write_atomic};
use crate::pgm;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stream {
    Depth,
    Gray,
    Ir,
}

impl Stream {
    pub fn as_str(self) -> &'static str {
        match self {
            Stream::Depth => "depth",
            Stream::Gray => "gray",
            Stream::Ir => "ir",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.trim() {
            "depth" => Ok(Stream::Depth),
            "gray" | "rgb" => Ok(Stream::Gray),
            "ir" => Ok(Stream::Ir),
            other => Err(Error::format("manifest", format!("unknown stream {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestRow {
    pub stream: Stream,
    /// As written in the manifest; relative paths resolve against the
    /// manifest's directory.
    pub path: PathBuf,
    pub timestamp_us: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceMeta {
    pub intrinsics: Option<PathBuf>,
    pub frame_period_us: u64,
    pub subject_id: Option<i64>,
}

impl Default for SequenceMeta {
    fn default() -> Self {
        SequenceMeta {
            intrinsics: None,
            frame_period_us: 33_333,
            subject_id: None,
        }
    }
}

impl SequenceMeta {
    pub fn parse(text: &str) -> Result<Self> {
        let mut meta = SequenceMeta::default();
        for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format("manifest metadata", format!("expected key=value, got {line:?}")))?;
            let v = v.trim();
            let bad = || Error::format("manifest metadata", format!("bad value for {k}: {v:?}"));
            match k.trim() {
                "intrinsics" => meta.intrinsics = (!v.is_empty()).then(|| PathBuf::from(v)),
                "frame_period_us" => meta.frame_period_us = v.parse().map_err(|_| bad())?,
                "subject_id" => meta.subject_id = if v.is_empty() { None } else { Some(v.parse().map_err(|_| bad())?) },
                other => return Err(Error::format("manifest metadata", format!("unknown key {other:?}"))),
            }
        }
        if meta.frame_period_us == 0 {
            return Err(Error::format("manifest metadata", "frame_period_us must be > 0"));
        }
        Ok(meta)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        if let Some(p) = &self.intrinsics {
            s.push_str(&format!("intrinsics={}\n", p.display()));
        }
        s.push_str(&format!("frame_period_us={}\n", self.frame_period_us));
        if let Some(id) = self.subject_id {
            s.push_str(&format!("subject_id={id}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamManifest {
    pub rows: Vec<ManifestRow>,
    pub meta: SequenceMeta,
    pub base_dir: PathBuf,
}

/// Sidecar metadata path: the manifest path with its extension replaced by
/// `.meta`.
pub fn meta_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("meta")
}

impl StreamManifest {
    /// Parses `stream,path,timestamp_us` CSV. Timestamps must be
    /// non-decreasing within each stream.
    pub fn parse(csv_text: &str, meta: SequenceMeta, base_dir: &Path) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(csv_text.as_bytes());
        let headers = rdr.headers().map_err(|e| Error::format("manifest", e.to_string()))?.clone();
        if headers.iter().collect::<Vec<_>>() != ["stream", "path", "timestamp_us"] {
            return Err(Error::format("manifest", format!("expected header stream,path,timestamp_us, got {headers:?}")));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| Error::format("manifest", format!("row {}: {e}", i + 2)))?;
            let ts = rec[2]
                .parse()
                .map_err(|_| Error::format("manifest", format!("row {}: bad timestamp {:?}", i + 2, &rec[2])))?;
            rows.push(ManifestRow {
                stream: Stream::parse(&rec[0])?,
                path: PathBuf::from(&rec[1]),
                timestamp_us: ts,
            });
        }
        for s in [Stream::Depth, Stream::Gray, Stream::Ir] {
            let ts: Vec<u64> = rows.iter().filter(|r| r.stream == s).map(|r| r.timestamp_us).collect();
            if ts.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::format("manifest", format!("{} timestamps decrease", s.as_str())));
            }
        }
        Ok(StreamManifest {
            rows,
            meta,
            base_dir: base_dir.to_path_buf(),
        })
    }

    /// Loads the manifest and its sidecar (if present) and checks that every
    /// referenced file exists.
    pub fn load(path: &Path) -> Result<Self> {
        let text = read_text(path)?;
        let mp = meta_path(path);
        let meta = if mp.exists() { SequenceMeta::parse(&read_text(&mp)?)? } else { SequenceMeta::default() };
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        let m = Self::parse(&text, meta, &base)?;
        for r in &m.rows {
            let p = m.resolve(&r.path);
            if !p.is_file() {
                return Err(Error::format("manifest", format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(m)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("stream,path,timestamp_us\n");
        for r in &self.rows {
            s.push_str(&format!("{},{},{}\n", r.stream.as_str(), r.path.display(), r.timestamp_us));
        }
        s
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(&meta_path(path), self.meta.to_text().as_bytes())?;
        write_atomic(path, self.to_csv().as_bytes())
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Intrinsics from the sidecar's `intrinsics=` file, if any.
    pub fn intrinsics(&self) -> Result<Option<CameraIntrinsics>> {
        match &self.meta.intrinsics {
            Some(p) => Ok(Some(CameraIntrinsics::parse(&read_text(&self.resolve(p))?)?)),
            None => Ok(None),
        }
    }

    pub fn stream_rows(&self, s: Stream) -> Vec<&ManifestRow> {
        self.rows.iter().filter(|r| r.stream == s).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncedTriple {
    /// Position of the depth frame in the depth stream.
    pub index: usize,
    pub timestamp_us: u64,
    pub depth: DepthFrame,
    pub gray: GrayFrame,
    pub ir: Option<IrFrame>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SyncStats {
    pub depth_frames: usize,
    pub paired: usize,
    /// Depth frames without a gray frame within tolerance.
    pub dropped: usize,
    /// Paired frames without an IR frame within tolerance (kept, IR absent).
    pub ir_unmatched: usize,
    /// Pairings whose partner frame sits at a different stream position than
    /// the depth frame.
    pub aliased: usize,
    /// Frames whose files failed to load.
    pub load_errors: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyncResult {
    pub triples: Vec<SyncedTriple>,
    pub stats: SyncStats,
}

/// Index pairing without loading pixels: `(depth, gray, ir)` row positions.
pub fn sync_plan(manifest: &StreamManifest) -> (Vec<(usize, usize, Option<usize>)>, SyncStats) {
    let depth = manifest.stream_rows(Stream::Depth);
    let gray = manifest.stream_rows(Stream::Gray);
    let ir = manifest.stream_rows(Stream::Ir);
    let tol = manifest.meta.frame_period_us / 2;
    let nearest = |rows: &[&ManifestRow], t: u64| -> Option<usize> {
        // rows are sorted by timestamp; ties go to the earlier row
        let pos = rows.partition_point(|r| r.timestamp_us < t);
        let cands = [pos.checked_sub(1), (pos < rows.len()).then_some(pos)];
        cands
            .into_iter()
            .flatten()
            .min_by_key(|&i| (rows[i].timestamp_us.abs_diff(t), i))
            .filter(|&i| rows[i].timestamp_us.abs_diff(t) <= tol)
    };
    let mut stats = SyncStats { depth_frames: depth.len(), ..Default::default() };
    let mut plan = Vec::new();
    for (di, d) in depth.iter().enumerate() {
        let Some(gi) = nearest(&gray, d.timestamp_us) else {
            stats.dropped += 1;
            continue;
        };
        let ii = if ir.is_empty() { None } else { nearest(&ir, d.timestamp_us) };
        if !ir.is_empty() && ii.is_none() {
            stats.ir_unmatched += 1;
        }
        if gi != di || ii.is_some_and(|i| i != di) {
            stats.aliased += 1;
        }
        stats.paired += 1;
        plan.push((di, gi, ii));
    }
    (plan, stats)
}

/// Pairs every depth frame with the nearest gray (and IR) frame within half
/// a frame period and loads the pixels. Frames that fail to load are dropped
/// and counted.
pub fn sync_streams(manifest: &StreamManifest) -> Result<SyncResult> {
    let (plan, mut stats) = sync_plan(manifest);
    let depth = manifest.stream_rows(Stream::Depth);
    let gray = manifest.stream_rows(Stream::Gray);
    let ir = manifest.stream_rows(Stream::Ir);
    let mut triples = Vec::new();
    for (di, gi, ii) in plan {
        let load = || -> Result<SyncedTriple> {
            let d = depth[di];
            Ok(SyncedTriple {
                index: di,
                timestamp_us: d.timestamp_us,
                depth: pgm::read_depth(&manifest.resolve(&d.path), d.timestamp_us)?,
                gray: pgm::read_gray(&manifest.resolve(&gray[gi].path), gray[gi].timestamp_us)?,
                ir: match ii {
                    Some(i) => Some(pgm::read_ir(&manifest.resolve(&ir[i].path), ir[i].timestamp_us)?),
                    None => None,
                },
            })
        };
        match load() {
            Ok(t) => triples.push(t),
            Err(e) => {
                log::warn!("sync: frame {di} skipped: {e}");
                stats.load_errors += 1;
            }
        }
    }
    if triples.is_empty() {
        return Err(Error::InsufficientData(format!(
            "no synchronized frames: {} depth, {} gray, {} ir rows; {} dropped, {} load errors",
            depth.len(),
            gray.len(),
            ir.len(),
            stats.dropped,
            stats.load_errors
        )));
    }
    Ok(SyncResult { triples, stats })
}
