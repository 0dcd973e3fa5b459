//! Prompt templates and request rendering.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Cursor;
use std::path::Path;
use std::str::FromStr;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{ImageFormat, RgbImage};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};
use crate::ingest::resize_rgb;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateKind {
    Summarize,
    SuggestOperation,
    SuggestSearch,
    JudgeSummary,
    JudgeSuggestion,
}

impl TemplateKind {
    pub const ALL: [TemplateKind; 5] = [
        TemplateKind::Summarize,
        TemplateKind::SuggestOperation,
        TemplateKind::SuggestSearch,
        TemplateKind::JudgeSummary,
        TemplateKind::JudgeSuggestion,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TemplateKind::Summarize => "summarize",
            TemplateKind::SuggestOperation => "suggest_operation",
            TemplateKind::SuggestSearch => "suggest_search",
            TemplateKind::JudgeSummary => "judge_summary",
            TemplateKind::JudgeSuggestion => "judge_suggestion",
        }
    }

    /// Kinds that only make sense with screenshots attached.
    pub fn needs_images(self) -> bool {
        matches!(
            self,
            TemplateKind::Summarize | TemplateKind::SuggestOperation | TemplateKind::SuggestSearch
        )
    }

    fn builtin_source(self) -> &'static str {
        match self {
            TemplateKind::Summarize => include_str!("../../templates/summarize.toml"),
            TemplateKind::SuggestOperation => include_str!("../../templates/suggest_operation.toml"),
            TemplateKind::SuggestSearch => include_str!("../../templates/suggest_search.toml"),
            TemplateKind::JudgeSummary => include_str!("../../templates/judge_summary.toml"),
            TemplateKind::JudgeSuggestion => include_str!("../../templates/judge_suggestion.toml"),
        }
    }
}

impl fmt::Display for TemplateKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TemplateKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TemplateKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Template(format!("unknown template kind {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptTemplate {
    pub kind: TemplateKind,
    pub max_images: usize,
    /// Text with `{{name}}` placeholders.
    pub text: String,
}

impl PromptTemplate {
    pub fn parse(source: &str) -> Result<Self> {
        let tpl: PromptTemplate = toml::from_str(source).map_err(|e| Error::Template(e.to_string()))?;
        tpl.placeholders()?;
        Ok(tpl)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| Error::Template(format!("{}: {e}", path.display())))
    }

    pub fn builtin(kind: TemplateKind) -> Self {
        Self::parse(kind.builtin_source()).expect("bundled templates parse")
    }

    /// Placeholder names in order of first appearance.
    pub fn placeholders(&self) -> Result<Vec<String>> {
        let mut names: Vec<String> = Vec::new();
        let mut rest = self.text.as_str();
        while let Some(start) = rest.find("{{") {
            let after = &rest[start + 2..];
            let end = after
                .find("}}")
                .ok_or_else(|| Error::Template("unterminated placeholder".into()))?;
            let name = after[..end].trim();
            if name.is_empty() || !name.chars().all(|c| c.is_alphanumeric() || c == '_') {
                return Err(Error::Template(format!("malformed placeholder {{{{{name}}}}}")));
            }
            if !names.iter().any(|n| n == name) {
                names.push(name.to_owned());
            }
            rest = &after[end + 2..];
        }
        Ok(names)
    }
}

/// The five templates in use, bundled defaults unless overridden.
#[derive(Debug, Clone, PartialEq)]
pub struct TemplateSet {
    templates: BTreeMap<TemplateKind, PromptTemplate>,
}

impl Default for TemplateSet {
    fn default() -> Self {
        Self {
            templates: TemplateKind::ALL
                .into_iter()
                .map(|k| (k, PromptTemplate::builtin(k)))
                .collect(),
        }
    }
}

impl TemplateSet {
    /// Bundled templates, replaced by any `<kind>.toml` found in `dir`.
    pub fn with_overrides(dir: &Path) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::MissingPath { path: dir.into() });
        }
        let mut set = Self::default();
        for kind in TemplateKind::ALL {
            let path = dir.join(format!("{}.toml", kind.name()));
            if path.exists() {
                let tpl = PromptTemplate::load(&path)?;
                if tpl.kind != kind {
                    return Err(Error::Template(format!(
                        "{} declares kind {} but is named for {}",
                        path.display(),
                        tpl.kind,
                        kind
                    )));
                }
                set.templates.insert(kind, tpl);
            }
        }
        Ok(set)
    }

    pub fn get(&self, kind: TemplateKind) -> &PromptTemplate {
        &self.templates[&kind]
    }

    pub fn insert(&mut self, tpl: PromptTemplate) {
        self.templates.insert(tpl.kind, tpl);
    }
}

/// A PNG screenshot ready to attach to a request.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ImagePayload {
    pub width: u32,
    pub height: u32,
    pub png_base64: String,
}

impl ImagePayload {
    /// Encodes `img`, first downscaling to `max_width` when it is wider.
    pub fn encode(img: &RgbImage, max_width: Option<usize>) -> Result<Self> {
        let resized;
        let img = match max_width {
            Some(w) if (img.width() as usize) > w && w > 0 => {
                let h = ((img.height() as f64 * w as f64 / img.width() as f64).round() as usize).max(1);
                resized = resize_rgb(img, w, h);
                &resized
            }
            _ => img,
        };
        let mut buf = Cursor::new(Vec::new());
        img.write_to(&mut buf, ImageFormat::Png).map_err(|source| Error::Encode {
            path: "<memory>".into(),
            source,
        })?;
        Ok(Self {
            width: img.width(),
            height: img.height(),
            png_base64: STANDARD.encode(buf.into_inner()),
        })
    }

    pub fn data_url(&self) -> String {
        format!("data:image/png;base64,{}", self.png_base64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPrompt {
    pub kind: TemplateKind,
    pub text: String,
    pub images: Vec<ImagePayload>,
}

/// Fills every placeholder from `slots` and attaches `images` in order.
pub fn render_prompt(
    tpl: &PromptTemplate,
    slots: &BTreeMap<String, String>,
    images: Vec<ImagePayload>,
) -> Result<RenderedPrompt> {
    if images.len() > tpl.max_images {
        return Err(Error::Template(format!(
            "too many images for {}: {} > {}",
            tpl.kind,
            images.len(),
            tpl.max_images
        )));
    }
    if images.is_empty() && tpl.kind.needs_images() {
        return Err(Error::Template(format!("{} requires at least one image", tpl.kind)));
    }
    let mut text = tpl.text.clone();
    for name in tpl.placeholders()? {
        let value = slots
            .get(&name)
            .ok_or_else(|| Error::Template(format!("unbound placeholder {{{{{name}}}}}")))?;
        text = text.replace(&format!("{{{{{name}}}}}"), value);
    }
    Ok(RenderedPrompt {
        kind: tpl.kind,
        text: text.trim().to_owned(),
        images,
    })
}

/// Chat-completions request body: one user message with the text part first
/// and the images after it, in order.
pub fn chat_body(model: &str, prompt: &RenderedPrompt) -> Value {
    let mut content = vec![json!({ "type": "text", "text": prompt.text })];
    content.extend(
        prompt
            .images
            .iter()
            .map(|img| json!({ "type": "image_url", "image_url": { "url": img.data_url() } })),
    );
    json!({
        "model": model,
        "temperature": 0,
        "messages": [{ "role": "user", "content": content }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn slots(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    fn images(n: usize) -> Vec<ImagePayload> {
        (0..n)
            .map(|i| ImagePayload::encode(&RgbImage::from_pixel(8, 8, Rgb([i as u8; 3])), None).unwrap())
            .collect()
    }

    #[test]
    fn bundled_templates_load() {
        let set = TemplateSet::default();
        for kind in TemplateKind::ALL {
            assert_eq!(set.get(kind).kind, kind);
        }
        assert_eq!(
            set.get(TemplateKind::SuggestSearch).placeholders().unwrap(),
            vec!["operation", "intent", "count"]
        );
    }

    #[test]
    fn images_keep_their_order() {
        let tpl = PromptTemplate::builtin(TemplateKind::Summarize);
        let imgs = images(6);
        let p = render_prompt(&tpl, &slots(&[("context", "")]), imgs.clone()).unwrap();
        let body = chat_body("m", &p);
        let parts = body["messages"][0]["content"].as_array().unwrap();
        assert_eq!(parts.len(), 7);
        for (i, img) in imgs.iter().enumerate() {
            assert_eq!(parts[i + 1]["image_url"]["url"], img.data_url());
        }
    }

    #[test]
    fn missing_slot_is_named() {
        let tpl = PromptTemplate::builtin(TemplateKind::SuggestOperation);
        let err = render_prompt(&tpl, &slots(&[("operation", "x"), ("count", "2")]), images(1)).unwrap_err();
        assert!(err.to_string().contains("{{intent}}"), "{err}");
    }

    #[test]
    fn summarize_needs_images() {
        let tpl = PromptTemplate::builtin(TemplateKind::Summarize);
        assert!(render_prompt(&tpl, &slots(&[("context", "")]), vec![]).is_err());
        let judge = PromptTemplate::builtin(TemplateKind::JudgeSummary);
        assert!(render_prompt(&judge, &slots(&[("gold", "a"), ("prediction", "b")]), vec![]).is_ok());
    }

    #[test]
    fn too_many_images() {
        let tpl = PromptTemplate {
            max_images: 2,
            ..PromptTemplate::builtin(TemplateKind::Summarize)
        };
        assert!(render_prompt(&tpl, &slots(&[("context", "")]), images(3)).is_err());
    }

    #[test]
    fn encode_downscales_wide_images() {
        let img = RgbImage::from_pixel(1080, 2400, Rgb([1, 2, 3]));
        let p = ImagePayload::encode(&img, Some(512)).unwrap();
        assert_eq!((p.width, p.height), (512, 1138));
        let small = ImagePayload::encode(&RgbImage::new(300, 10), Some(512)).unwrap();
        assert_eq!(small.width, 300);
    }

    #[test]
    fn malformed_templates_are_rejected() {
        assert!(PromptTemplate::parse("kind = \"summarize\"\nmax_images = 1\ntext = \"{{a\"").is_err());
        assert!(PromptTemplate::parse("kind = \"nope\"\nmax_images = 1\ntext = \"\"").is_err());
    }

    #[test]
    fn overrides_replace_bundled_templates() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(
            dir.path().join("summarize.toml"),
            "kind = \"summarize\"\nmax_images = 3\ntext = \"Describe {{context}}\"",
        )
        .unwrap();
        let set = TemplateSet::with_overrides(dir.path()).unwrap();
        assert_eq!(set.get(TemplateKind::Summarize).max_images, 3);
        assert_eq!(set.get(TemplateKind::JudgeSummary), &PromptTemplate::builtin(TemplateKind::JudgeSummary));
    }
}
