//! COCO JSON subsets (annotations and results), crop-plan JSON, and config
//! files.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::Vocabulary;
use crate::geometry::{BoundingBox, CategoryId, Detection, GroundTruth, ImageId};
use crate::scm::CropPlan;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ImageInfo {
    pub id: ImageId,
    pub width: u32,
    pub height: u32,
    #[serde(default)]
    pub file_name: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub id: CategoryId,
    #[serde(default)]
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawAnnotation {
    id: u64,
    image_id: ImageId,
    category_id: CategoryId,
    bbox: [f64; 4],
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
struct RawDataset {
    #[serde(default)]
    images: Vec<ImageInfo>,
    #[serde(default)]
    annotations: Vec<RawAnnotation>,
    #[serde(default)]
    categories: Vec<Category>,
}

/// Referentially valid COCO annotation file contents.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub images: Vec<ImageInfo>,
    pub annotations: Vec<GroundTruth>,
    pub categories: Vec<Category>,
}

impl DatasetBundle {
    pub fn new(
        images: Vec<ImageInfo>,
        annotations: Vec<GroundTruth>,
        categories: Vec<Category>,
    ) -> Result<Self> {
        let image_ids: HashSet<ImageId> = images.iter().map(|i| i.id).collect();
        if image_ids.len() != images.len() {
            return Err(Error::input("duplicate image id"));
        }
        let category_ids: HashSet<CategoryId> = categories.iter().map(|c| c.id).collect();
        if category_ids.len() != categories.len() {
            return Err(Error::input("duplicate category id"));
        }
        if let Some(c) = categories.iter().find(|c| c.id == 0) {
            return Err(Error::input(format!("category '{}' has id 0; ids start at 1", c.name)));
        }
        let mut seen = HashSet::new();
        for a in &annotations {
            if !seen.insert(a.annotation_id) {
                return Err(Error::input(format!("duplicate annotation id {}", a.annotation_id)));
            }
            if !image_ids.contains(&a.image_id) {
                return Err(Error::input(format!(
                    "annotation {} references missing image_id {}",
                    a.annotation_id, a.image_id
                )));
            }
            if !category_ids.contains(&a.category_id) {
                return Err(Error::input(format!(
                    "annotation {} references missing category_id {}",
                    a.annotation_id, a.category_id
                )));
            }
        }
        Ok(Self {
            images,
            annotations,
            categories,
        })
    }

    pub fn vocabulary(&self) -> Vocabulary {
        Vocabulary::new(
            self.images.iter().map(|i| i.id),
            self.categories.iter().map(|c| c.id),
        )
    }

    pub fn image(&self, id: ImageId) -> Option<&ImageInfo> {
        self.images.iter().find(|i| i.id == id)
    }

    pub fn to_json(&self) -> String {
        let raw = RawDataset {
            images: self.images.clone(),
            annotations: self
                .annotations
                .iter()
                .map(|a| RawAnnotation {
                    id: a.annotation_id,
                    image_id: a.image_id,
                    category_id: a.category_id,
                    bbox: a.bbox.to_array(),
                })
                .collect(),
            categories: self.categories.clone(),
        };
        pretty(&raw)
    }
}

pub fn parse_dataset(text: &str) -> Result<DatasetBundle> {
    let raw: RawDataset = serde_json::from_str(text).map_err(|source| Error::Json {
        context: "COCO annotation JSON".into(),
        source,
    })?;
    let annotations = raw
        .annotations
        .into_iter()
        .map(|a| {
            let [x, y, w, h] = a.bbox;
            let bbox = BoundingBox::new(x, y, w, h).map_err(|_| {
                Error::input(format!(
                    "annotation {} has a non-positive or non-finite box {:?}",
                    a.id, a.bbox
                ))
            })?;
            if a.category_id == 0 {
                return Err(Error::input(format!("annotation {} has category_id 0", a.id)));
            }
            Ok(GroundTruth {
                annotation_id: a.id,
                image_id: a.image_id,
                category_id: a.category_id,
                bbox,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    DatasetBundle::new(raw.images, annotations, raw.categories)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<DatasetBundle> {
    let path = path.as_ref();
    parse_dataset(&read_text(path)?).map_err(|e| with_path(e, path))
}

pub fn save_dataset(bundle: &DatasetBundle, path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &bundle.to_json())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawResult {
    image_id: ImageId,
    category_id: CategoryId,
    bbox: [f64; 4],
    score: f64,
}

pub fn parse_results(text: &str) -> Result<Vec<Detection>> {
    let raw: Vec<RawResult> = serde_json::from_str(text).map_err(|source| Error::Json {
        context: "COCO results JSON".into(),
        source,
    })?;
    raw.into_iter()
        .enumerate()
        .map(|(n, r)| {
            let [x, y, w, h] = r.bbox;
            let bbox = BoundingBox::new(x, y, w, h)
                .map_err(|_| Error::input(format!("result {n} has an invalid box {:?}", r.bbox)))?;
            Detection::new(r.image_id, r.category_id, bbox, r.score)
                .map_err(|e| Error::input(format!("result {n}: {e}")))
        })
        .collect()
}

pub fn results_to_json(dets: &[Detection]) -> String {
    let raw: Vec<RawResult> = dets
        .iter()
        .map(|d| RawResult {
            image_id: d.image_id,
            category_id: d.category_id,
            bbox: d.bbox.to_array(),
            score: d.score,
        })
        .collect();
    pretty(&raw)
}

pub fn load_results(path: impl AsRef<Path>) -> Result<Vec<Detection>> {
    let path = path.as_ref();
    parse_results(&read_text(path)?).map_err(|e| with_path(e, path))
}

pub fn save_results(dets: &[Detection], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &results_to_json(dets))
}

pub fn load_plans(path: impl AsRef<Path>) -> Result<Vec<CropPlan>> {
    let path = path.as_ref();
    serde_json::from_str(&read_text(path)?).map_err(|source| Error::Json {
        context: format!("crop plans {}", path.display()),
        source,
    })
}

pub fn save_plans(plans: &[CropPlan], path: impl AsRef<Path>) -> Result<()> {
    write_text(path.as_ref(), &pretty(&plans))
}

/// Loads a TOML file, or JSON when the extension is `.json`.
pub fn load_config<T: DeserializeOwned>(path: impl AsRef<Path>) -> Result<T> {
    let path = path.as_ref();
    let text = read_text(path)?;
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json")) {
        serde_json::from_str(&text).map_err(|source| Error::Json {
            context: format!("config {}", path.display()),
            source,
        })
    } else {
        toml::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", path.display())))
    }
}

pub(crate) fn pretty<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("plain data always serializes");
    s.push('\n');
    s
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn with_path(e: Error, path: &Path) -> Error {
    match e {
        Error::Input(msg) => Error::Input(format!("{}: {msg}", path.display())),
        other => other,
    }
}
