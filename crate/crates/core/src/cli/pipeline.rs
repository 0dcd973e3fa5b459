use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::config::{digest, Config};
use crate::error::{Error, Result};
use crate::ingest::{load_frames, LoadOptions, SourceKind};
use crate::keyframe::{retained_frames, select_keyframes, write_keyframes, RetainedFrame};
use crate::llm::{generate_suggestions, summarize_intent, Client, IntentSummary, SuggestionKind, SuggestionSet, TemplateKind};
use crate::stitch::stitch_batch;

pub const MANIFEST_SCHEMA: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Sample,
    Stitch,
    Summarize,
    Suggest,
}

impl Stage {
    pub const ALL: [Stage; 4] = [Stage::Sample, Stage::Stitch, Stage::Summarize, Stage::Suggest];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Sample => "sample",
            Stage::Stitch => "stitch",
            Stage::Summarize => "summarize",
            Stage::Suggest => "suggest",
        }
    }

    fn requires(self) -> Option<Stage> {
        match self {
            Stage::Sample => None,
            Stage::Stitch | Stage::Summarize => Some(Stage::Sample),
            Stage::Suggest => Some(Stage::Summarize),
        }
    }

    pub fn needs_endpoint(self) -> bool {
        matches!(self, Stage::Summarize | Stage::Suggest)
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown stage {s:?}")))
    }
}

/// Sorts and dedups `stages`, rejecting sets whose prerequisites are missing.
pub fn stage_chain(stages: &[Stage]) -> Result<Vec<Stage>> {
    let mut chain = stages.to_vec();
    chain.sort();
    chain.dedup();
    if chain.is_empty() {
        return Err(Error::Config("no stages requested".into()));
    }
    for s in &chain {
        if let Some(req) = s.requires() {
            if !chain.contains(&req) {
                return Err(Error::Config(format!("stage {s} requires stage {req}")));
            }
        }
    }
    Ok(chain)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Digests {
    pub sampling: String,
    pub ssim: String,
    pub stitch: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    pub templates: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub total_frames: usize,
    pub sampled_indices: Vec<usize>,
    pub blurry_indices: Vec<usize>,
    pub retained: Vec<RetainedFrame>,
    pub frame_compression_pct: f64,
    pub pixel_compression_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchedRecord {
    pub path: String,
    pub width: u32,
    pub height: u32,
    pub member_indices: Vec<usize>,
    pub seam_offsets: Vec<i64>,
    pub h_top: usize,
    pub h_bot: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StitchRecord {
    pub images: Vec<StitchedRecord>,
    /// Pixel area removed relative to the retained keyframes.
    pub area_compression_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRecord {
    #[serde(flatten)]
    pub summary: IntentSummary,
    /// Images sent, by relative path, in order.
    pub images: Vec<String>,
    pub retries: u32,
    pub response: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuggestionRecord {
    #[serde(flatten)]
    pub set: SuggestionSet,
    pub retries: u32,
    pub response: Option<String>,
}

/// Written as `manifest.json`; stage records are present exactly when the
/// stage ran to completion.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineManifest {
    pub schema: u32,
    pub complete: bool,
    pub source_id: String,
    pub stages: Vec<Stage>,
    pub config: Config,
    pub digests: Digests,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stitch: Option<StitchRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<SummaryRecord>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub suggestions: Option<Vec<SuggestionRecord>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    pub timing_ms: BTreeMap<String, u64>,
}

impl PipelineManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::Config(format!("unsupported manifest schema {}", m.schema)));
        }
        Ok(m)
    }

    fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

pub fn source_id(source: &Path) -> String {
    source
        .file_stem()
        .or_else(|| source.file_name())
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "source".into())
}

/// Sibling directory used while a run is in progress.
pub fn partial_dir(out: &Path) -> PathBuf {
    let mut name = out.file_name().map(|n| n.to_os_string()).unwrap_or_default();
    name.push(".partial");
    out.with_file_name(name)
}

/// Evenly spaced picks keeping the first and last, so long trajectories fit
/// the endpoint's image limit.
pub fn spread_indices(n: usize, max: usize) -> Vec<usize> {
    if n <= max {
        return (0..n).collect();
    }
    if max == 1 {
        return vec![n - 1];
    }
    (0..max).map(|i| (i * (n - 1) + (max - 1) / 2) / (max - 1)).collect()
}

struct Run<'a> {
    cfg: &'a Config,
    dir: PathBuf,
    manifest: PipelineManifest,
    /// Images for the model, with their paths relative to the output directory.
    images: Vec<(String, RgbImage)>,
}

/// Runs `stages` on `source`, writing artifacts under `out`. Work happens in
/// `<out>.partial`, which replaces `out` only on success; a failed run leaves
/// its manifest there with `complete: false`.
pub fn run_pipeline(
    source: &Path,
    cfg: &Config,
    stages: &[Stage],
    out: &Path,
    client: Option<&Client>,
) -> Result<PipelineManifest> {
    let chain = stage_chain(stages)?;
    cfg.validate()?;
    let needs_endpoint = chain.iter().any(|s| s.needs_endpoint());
    if needs_endpoint {
        cfg.endpoint()?;
        if client.is_none() {
            return Err(Error::Config("model stages requested without an endpoint client".into()));
        }
    }
    let templates = cfg.template_set()?;
    if !source.exists() {
        return Err(Error::MissingPath { path: source.into() });
    }

    let dir = partial_dir(out);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;

    let mut public_cfg = cfg.clone();
    if let Some(ep) = &mut public_cfg.endpoint {
        ep.api_key = None;
    }
    let digests = Digests {
        sampling: digest(&cfg.sampling),
        ssim: digest(&cfg.ssim),
        stitch: digest(&cfg.stitch),
        endpoint: public_cfg.endpoint.as_ref().map(digest),
        templates: digest(&TemplateKind::ALL.map(|k| templates.get(k).clone())),
    };
    let mut run = Run {
        cfg,
        dir: dir.clone(),
        manifest: PipelineManifest {
            schema: MANIFEST_SCHEMA,
            complete: false,
            source_id: source_id(source),
            stages: chain.clone(),
            config: public_cfg,
            digests,
            sample: None,
            stitch: None,
            summary: None,
            suggestions: None,
            error: None,
            timing_ms: BTreeMap::new(),
        },
        images: Vec::new(),
    };
    let client = client.map(|c| c.archived_at(dir.join("responses")));

    for stage in &chain {
        let t = Instant::now();
        let result = match stage {
            Stage::Sample => run.sample(source),
            Stage::Stitch => run.stitch(),
            Stage::Summarize => run.summarize(client.as_ref().expect("checked above"), &templates),
            Stage::Suggest => run.suggest(client.as_ref().expect("checked above"), &templates),
        };
        run.manifest
            .timing_ms
            .insert(stage.name().into(), t.elapsed().as_millis() as u64);
        if let Err(e) = result {
            run.manifest.error = Some(format!("{stage}: {e}"));
            run.manifest.write(&dir)?;
            return Err(e);
        }
    }
    run.manifest.complete = true;
    run.manifest.write(&dir)?;
    if out.exists() {
        std::fs::remove_dir_all(out).map_err(|e| Error::io(out, e))?;
    }
    std::fs::rename(&dir, out).map_err(|e| Error::io(out, e))?;
    Ok(run.manifest)
}

impl Run<'_> {
    fn sample(&mut self, source: &Path) -> Result<()> {
        let kind = if source.is_dir() {
            SourceKind::FrameDir
        } else {
            SourceKind::VideoFile
        };
        let opts = LoadOptions {
            fps: self.cfg.sampling.fps,
            decoder_cmd: self.cfg.ingest.decoder_cmd.clone(),
        };
        let frames = load_frames(source, kind, &opts)?;
        let mut km = select_keyframes(&self.manifest.source_id, &frames, &self.cfg.sampling, &self.cfg.ssim)?;
        write_keyframes(&mut km, &frames, &self.dir, "keyframes")?;
        self.images = retained_frames(&km, &frames)
            .into_iter()
            .zip(&km.retained)
            .map(|(f, r)| (r.path.clone().unwrap_or_default(), f.pixels.clone()))
            .collect();
        self.manifest.sample = Some(SampleRecord {
            total_frames: frames.len(),
            sampled_indices: km.sampled_indices,
            blurry_indices: km.blurry_indices,
            retained: km.retained,
            frame_compression_pct: km.frame_compression_pct,
            pixel_compression_pct: km.pixel_compression_pct,
        });
        Ok(())
    }

    fn stitch(&mut self) -> Result<()> {
        let sample = self.manifest.sample.as_ref().expect("sample runs first");
        let frames: Vec<crate::ingest::Frame> = sample
            .retained
            .iter()
            .zip(&self.images)
            .map(|(r, (_, px))| crate::ingest::Frame::new(r.index, 0.0, px.clone()))
            .collect();
        let stitched = stitch_batch(&frames, &self.cfg.stitch)?;
        let sub = self.dir.join("stitched");
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        let mut records = Vec::new();
        let mut images = Vec::new();
        for (i, s) in stitched.into_iter().enumerate() {
            let rel = format!("stitched/stitched_{i:03}.png");
            let path = self.dir.join(&rel);
            s.pixels.save(&path).map_err(|source| Error::Encode { path, source })?;
            records.push(StitchedRecord {
                path: rel.clone(),
                width: s.pixels.width(),
                height: s.pixels.height(),
                member_indices: s.member_indices,
                seam_offsets: s.seam_offsets,
                h_top: s.h_top,
                h_bot: s.h_bot,
            });
            images.push((rel, s.pixels));
        }
        let before: u64 = self.images.iter().map(|(_, p)| p.width() as u64 * p.height() as u64).sum();
        let after: u64 = images.iter().map(|(_, p)| p.width() as u64 * p.height() as u64).sum();
        self.manifest.stitch = Some(StitchRecord {
            images: records,
            area_compression_pct: if before == 0 {
                0.0
            } else {
                ((1.0 - after as f64 / before as f64) * 100.0).clamp(0.0, 100.0)
            },
        });
        self.images = images;
        Ok(())
    }

    fn model_images(&self, client: &Client, max_template: usize) -> (Vec<String>, Vec<RgbImage>) {
        let max = client.config().max_images.min(max_template).max(1);
        spread_indices(self.images.len(), max)
            .into_iter()
            .map(|i| self.images[i].clone())
            .unzip()
    }

    fn response_rel(&self, path: Option<PathBuf>) -> Option<String> {
        path.and_then(|p| p.strip_prefix(&self.dir).ok().map(|r| r.to_string_lossy().replace('\\', "/")))
    }

    fn summarize(&mut self, client: &Client, templates: &crate::llm::TemplateSet) -> Result<()> {
        let tpl = templates.get(TemplateKind::Summarize);
        let (paths, imgs) = self.model_images(client, tpl.max_images);
        let (summary, rec) = summarize_intent(client, tpl, &imgs, &self.cfg.pipeline.context, "summarize")?;
        self.manifest.summary = Some(SummaryRecord {
            summary,
            images: paths,
            retries: rec.retries,
            response: self.response_rel(rec.response_path),
        });
        Ok(())
    }

    fn suggest(&mut self, client: &Client, templates: &crate::llm::TemplateSet) -> Result<()> {
        let summary = self.manifest.summary.as_ref().expect("summarize runs first").summary.clone();
        let mut out = Vec::new();
        for kind in [SuggestionKind::Operation, SuggestionKind::Search] {
            let tpl = templates.get(kind.template_kind());
            let (_, imgs) = self.model_images(client, tpl.max_images);
            let label = format!("suggest_{}", if kind == SuggestionKind::Operation { "operation" } else { "search" });
            let (set, rec) = generate_suggestions(client, tpl, &summary, &imgs, kind, self.cfg.pipeline.suggest_count, &label)?;
            out.push(SuggestionRecord {
                set,
                retries: rec.retries,
                response: self.response_rel(rec.response_path),
            });
        }
        self.manifest.suggestions = Some(out);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chains() {
        use Stage::*;
        assert_eq!(stage_chain(&[Stitch, Sample]).unwrap(), vec![Sample, Stitch]);
        assert_eq!(stage_chain(&[Sample, Summarize]).unwrap(), vec![Sample, Summarize]);
        assert!(stage_chain(&[Stitch]).is_err());
        assert!(stage_chain(&[Sample, Suggest]).is_err());
        assert!(stage_chain(&[]).is_err());
    }

    #[test]
    fn spread_keeps_ends() {
        assert_eq!(spread_indices(3, 5), vec![0, 1, 2]);
        assert_eq!(spread_indices(10, 4), vec![0, 3, 6, 9]);
        assert_eq!(spread_indices(20, 16).len(), 16);
        let s = spread_indices(20, 16);
        assert_eq!((s[0], s[15]), (0, 19));
        assert!(s.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(spread_indices(5, 1), vec![4]);
    }

    #[test]
    fn partial_dir_is_a_sibling() {
        assert_eq!(partial_dir(Path::new("/tmp/out/run1")), PathBuf::from("/tmp/out/run1.partial"));
    }

    #[test]
    fn missing_endpoint_fails_before_work() {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("out");
        let err = run_pipeline(dir.path(), &Config::default(), &[Stage::Sample, Stage::Summarize], &out, None).unwrap_err();
        assert!(matches!(err, Error::Config(_)), "{err}");
        assert!(!partial_dir(&out).exists());
    }
}
