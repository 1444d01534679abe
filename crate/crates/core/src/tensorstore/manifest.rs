use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensorstore::{read_dump, write_dump, DepthRatio, FeatureDump, Orientation, QualityTable};

pub const MANIFEST_VERSION: u32 = 1;

/// JSON description of a dataset tree. Paths are relative to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub dataset_id: String,
    /// Depth-ratio tag (`"0.00"` .. `"1.00"`) to FTB file.
    pub layer_files: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality_file: Option<String>,
    pub sample_ids: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Optional per-sample stratum key (e.g. slide or patient) for stratified splits.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<Vec<String>>,
    /// Orientation of metric columns not known to the toolkit.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metric_orientation: BTreeMap<String, Orientation>,
}

impl DatasetManifest {
    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Json {
            path: path.display().to_string(),
            source: e,
        })?;
        if manifest.version != MANIFEST_VERSION {
            return Err(Error::invalid(format!(
                "{}: unsupported manifest version {} (supported: {MANIFEST_VERSION})",
                path.display(),
                manifest.version
            )));
        }
        Ok(manifest)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// A loaded dataset: every layer dump and the quality table aligned to the
/// manifest's sample order. Immutable after construction.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    layers: BTreeMap<DepthRatio, FeatureDump>,
    quality: Option<QualityTable>,
}

impl Dataset {
    pub fn new(
        manifest: DatasetManifest,
        layers: BTreeMap<DepthRatio, FeatureDump>,
        quality: Option<QualityTable>,
    ) -> Result<Self> {
        let ids = &manifest.sample_ids;
        let mut seen = HashSet::with_capacity(ids.len());
        for id in ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::Alignment(format!("duplicate sample id {id:?} in manifest")));
            }
        }
        if let Some(strata) = &manifest.strata {
            if strata.len() != ids.len() {
                return Err(Error::Alignment(format!(
                    "strata has {} entries for {} samples",
                    strata.len(),
                    ids.len()
                )));
            }
        }
        for (layer, dump) in &layers {
            if dump.layer != *layer || &dump.sample_ids != ids {
                return Err(Error::Alignment(format!("layer {layer} is not aligned with the manifest")));
            }
        }
        if let Some(q) = &quality {
            if q.sample_ids() != ids.as_slice() {
                return Err(Error::Alignment("quality table is not aligned with the manifest".into()));
            }
        }
        Ok(Self {
            manifest,
            layers,
            quality,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.sample_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.sample_ids.is_empty()
    }

    pub fn sample_ids(&self) -> &[String] {
        &self.manifest.sample_ids
    }

    pub fn layers(&self) -> impl Iterator<Item = DepthRatio> + '_ {
        self.layers.keys().copied()
    }

    pub fn layer(&self, layer: DepthRatio) -> Result<&FeatureDump> {
        self.layers
            .get(&layer)
            .ok_or_else(|| Error::invalid(format!("dataset {} has no layer {layer}", self.manifest.dataset_id)))
    }

    pub fn quality(&self) -> Result<&QualityTable> {
        self.quality
            .as_ref()
            .ok_or_else(|| Error::invalid(format!("dataset {} has no quality table", self.manifest.dataset_id)))
    }

    pub fn has_quality(&self) -> bool {
        self.quality.is_some()
    }

    /// Restriction to the given row indices, keeping their order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut manifest = self.manifest.clone();
        manifest.sample_ids = indices.iter().map(|&i| self.manifest.sample_ids[i].clone()).collect();
        manifest.strata = self
            .manifest
            .strata
            .as_ref()
            .map(|s| indices.iter().map(|&i| s[i].clone()).collect());
        Dataset {
            manifest,
            layers: self.layers.iter().map(|(&l, d)| (l, d.subset(indices))).collect(),
            quality: self.quality.as_ref().map(|q| q.subset(indices)),
        }
    }

    /// Writes `manifest.json`, one `layer_<tag>.ftb` per layer and
    /// `quality.csv` into `dir`. Returns the manifest path.
    pub fn write_tree(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = self.manifest.clone();
        manifest.layer_files.clear();
        for (layer, dump) in &self.layers {
            let name = format!("layer_{}.ftb", layer.tag());
            write_dump(dump, dir.join(&name))?;
            manifest.layer_files.insert(layer.tag(), name);
        }
        manifest.quality_file = match &self.quality {
            Some(q) => {
                q.write_csv(dir.join("quality.csv"))?;
                Some("quality.csv".into())
            }
            None => None,
        };
        let path = dir.join("manifest.json");
        manifest.write(&path)?;
        Ok(path)
    }
}

/// Loads a manifest and everything it references, aligned by sample id.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let manifest = DatasetManifest::read(path)?;
    let root = path.parent().unwrap_or_else(|| Path::new("."));
    let ids = manifest.sample_ids.clone();
    if ids.is_empty() {
        return Err(Error::invalid(format!("{}: manifest lists no samples", path.display())));
    }
    let mut layers = BTreeMap::new();
    for (tag, file) in &manifest.layer_files {
        let layer: DepthRatio = tag.parse()?;
        let matrix = read_dump(root.join(file))?;
        if matrix.rows() != ids.len() {
            return Err(Error::Alignment(format!(
                "layer {layer} ({file}) has {} rows, manifest lists {} samples",
                matrix.rows(),
                ids.len()
            )));
        }
        let dump = FeatureDump::new(layer, ids.clone(), matrix)?;
        if layers.insert(layer, dump).is_some() {
            return Err(Error::invalid(format!("layer {layer} listed twice")));
        }
    }
    let quality = match &manifest.quality_file {
        Some(file) => {
            let table = QualityTable::read_csv(root.join(file), &manifest.metric_orientation)?;
            Some(table.aligned_to(&ids)?)
        }
        None => None,
    };
    Dataset::new(manifest, layers, quality)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn tree(dir: &Path, layers: &[DepthRatio], quality: &str) -> PathBuf {
        let ids: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let mut files = BTreeMap::new();
        for l in layers {
            let dump = FeatureDump::new(*l, ids.clone(), Matrix::new(3, 2, vec![1.0, 0.0, 0.0, 1.0, 1.0, 1.0]).unwrap()).unwrap();
            let name = format!("l{}.ftb", l.tag());
            write_dump(&dump, dir.join(&name)).unwrap();
            files.insert(l.tag(), name);
        }
        fs::write(dir.join("q.csv"), quality).unwrap();
        let m = DatasetManifest {
            version: 1,
            dataset_id: "t".into(),
            layer_files: files,
            quality_file: Some("q.csv".into()),
            sample_ids: ids,
            seed: None,
            strata: None,
            metric_orientation: BTreeMap::new(),
        };
        let p = dir.join("manifest.json");
        m.write(&p).unwrap();
        p
    }

    #[test]
    fn loads_and_aligns_quality_rows() {
        let dir = tempfile::tempdir().unwrap();
        let p = tree(dir.path(), &[DepthRatio::FIRST, DepthRatio::LAST], "sample_id,psnr,lpips\nc,3,0.3\na,1,0.1\nb,2,0.2\n");
        let ds = load_manifest(&p).unwrap();
        assert_eq!(ds.layers().collect::<Vec<_>>(), vec![DepthRatio::FIRST, DepthRatio::LAST]);
        let q = ds.quality().unwrap();
        assert_eq!(q.metric("psnr").unwrap(), &[1.0, 2.0, 3.0]);
        let olp = q.metric("one_minus_lpips").unwrap();
        assert!((olp[2] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn missing_quality_row_is_named() {
        let dir = tempfile::tempdir().unwrap();
        let p = tree(dir.path(), &[DepthRatio::LAST], "sample_id,psnr\na,1\nc,3\n");
        let err = load_manifest(&p).unwrap_err();
        assert!(matches!(err, Error::Alignment(_)));
        assert!(err.to_string().contains("\"b\""), "{err}");
    }

    #[test]
    fn duplicate_ids_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = tree(dir.path(), &[DepthRatio::LAST], "sample_id,psnr\na,1\nb,2\nc,3\n");
        let mut m = DatasetManifest::read(&p).unwrap();
        m.sample_ids[2] = "a".into();
        m.write(&p).unwrap();
        assert!(matches!(load_manifest(&p), Err(Error::Alignment(_))));
    }

    #[test]
    fn unsupported_version_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = tree(dir.path(), &[DepthRatio::LAST], "sample_id,psnr\na,1\nb,2\nc,3\n");
        let mut m = DatasetManifest::read(&p).unwrap();
        m.version = 9;
        fs::write(&p, serde_json::to_string(&m).unwrap()).unwrap();
        assert!(load_manifest(&p).unwrap_err().to_string().contains("version 9"));
    }

    #[test]
    fn write_tree_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let p = tree(dir.path(), &[DepthRatio::new(0.5).unwrap()], "sample_id,psnr\na,1\nb,2\nc,3\n");
        let ds = load_manifest(&p).unwrap();
        let out = dir.path().join("copy");
        let p2 = ds.write_tree(&out).unwrap();
        let back = load_manifest(p2).unwrap();
        assert_eq!(back.quality().unwrap(), ds.quality().unwrap());
        let l = DepthRatio::new(0.5).unwrap();
        assert_eq!(back.layer(l).unwrap(), ds.layer(l).unwrap());
    }
}
