use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{compose_document, splitmix64, DocumentSample, FontLibrary, SynthConfig, SynthError, TextSampler, WordAnnotation};
use crate::raster::io::{read_image, read_map, write_map, write_pgm};
use crate::raster::{BinaryMap, Raster};

pub const MANIFEST_VERSION: u32 = 1;

/// Seed of sample `index`: SplitMix64 of `base_seed` XOR the SplitMix64 of the index.
pub fn sample_seed(base_seed: u64, index: u64) -> u64 {
    splitmix64(base_seed ^ splitmix64(index))
}

/// Contents of an `ann_*.json` file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub seed: u64,
    pub words: Vec<WordAnnotation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub index: usize,
    pub seed: u64,
    pub image: String,
    pub gt: String,
    pub annotation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub config: SynthConfig,
    pub config_hash: String,
    pub base_seed: u64,
    pub count: usize,
    pub fonts: Vec<String>,
    pub entries: Vec<ManifestEntry>,
    /// Directory holding the manifest; entry paths are relative to it.
    #[serde(skip)]
    pub root: PathBuf,
}

impl DatasetManifest {
    pub fn load(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|e| SynthError::io(path, e))?;
        let mut m: DatasetManifest = serde_json::from_str(&text)?;
        if m.version != MANIFEST_VERSION {
            return Err(SynthError::Config(format!(
                "manifest version {} unsupported (expected {MANIFEST_VERSION})",
                m.version
            )));
        }
        if m.entries.len() != m.count {
            return Err(SynthError::Config(format!(
                "manifest lists {} entries but count is {}",
                m.entries.len(),
                m.count
            )));
        }
        m.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(m)
    }

    pub fn image_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.image)
    }
    pub fn gt_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.gt)
    }
    pub fn annotation_path(&self, e: &ManifestEntry) -> PathBuf {
        self.root.join(&e.annotation)
    }
}

/// Writes the image / GT / annotation triple of one sample into `dir`.
pub fn write_sample(dir: &Path, index: usize, doc: &DocumentSample) -> Result<ManifestEntry, SynthError> {
    let entry = ManifestEntry {
        index,
        seed: doc.seed,
        image: format!("img_{index:06}.pgm"),
        gt: format!("gt_{index:06}.pgm"),
        annotation: format!("ann_{index:06}.json"),
    };
    write_pgm(&dir.join(&entry.image), &doc.image)?;
    write_map(&dir.join(&entry.gt), &doc.gt)?;
    let ann = Annotation {
        seed: doc.seed,
        words: doc.words.clone(),
    };
    let path = dir.join(&entry.annotation);
    fs::write(&path, serde_json::to_string(&ann)?).map_err(|e| SynthError::io(&path, e))?;
    Ok(entry)
}

/// Reads back one sample listed in a manifest.
pub fn load_sample(m: &DatasetManifest, e: &ManifestEntry) -> Result<(Raster, BinaryMap, Annotation), SynthError> {
    let image = read_image(&m.image_path(e))?;
    let gt = read_map(&m.gt_path(e))?;
    let path = m.annotation_path(e);
    let text = fs::read_to_string(&path).map_err(|err| SynthError::io(&path, err))?;
    Ok((image, gt, serde_json::from_str(&text)?))
}

fn one(cfg: &SynthConfig, fonts: &FontLibrary, out: &Path, base_seed: u64, i: usize) -> Result<ManifestEntry, SynthError> {
    let doc = compose_document(cfg, fonts, &TextSampler::default(), sample_seed(base_seed, i as u64))?;
    write_sample(out, i, &doc)
}

/// Generates `n` documents into `out_dir` using up to `workers` threads.
/// Output bytes do not depend on the worker count.
pub fn generate_dataset(
    n: usize,
    cfg: &SynthConfig,
    fonts: &FontLibrary,
    out_dir: &Path,
    base_seed: u64,
    workers: usize,
) -> Result<DatasetManifest, SynthError> {
    if n == 0 {
        return Err(SynthError::Config("dataset size must be at least 1".into()));
    }
    cfg.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| SynthError::io(out_dir, e))?;
    let wrap = |i: usize| {
        one(cfg, fonts, out_dir, base_seed, i).map_err(|e| SynthError::Sample {
            index: i,
            source: Box::new(e),
        })
    };

    #[cfg(feature = "parallel")]
    let entries: Result<Vec<_>, _> = {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(workers.max(1))
            .build()
            .map_err(|e| SynthError::Config(format!("thread pool: {e}")))?;
        pool.install(|| (0..n).into_par_iter().map(wrap).collect())
    };
    #[cfg(not(feature = "parallel"))]
    let entries: Result<Vec<_>, _> = {
        let _ = workers;
        (0..n).map(wrap).collect()
    };

    let manifest = DatasetManifest {
        version: MANIFEST_VERSION,
        config: cfg.clone(),
        config_hash: cfg.hash(),
        base_seed,
        count: n,
        fonts: fonts.all().map(|f| f.name().to_string()).collect(),
        entries: entries?,
        root: out_dir.to_path_buf(),
    };
    let path = out_dir.join("manifest.json");
    fs::write(&path, serde_json::to_string_pretty(&manifest)?).map_err(|e| SynthError::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use sha2::{Digest, Sha256};

    fn tiny() -> SynthConfig {
        SynthConfig {
            doc_size: 96,
            font_size_range: [9, 24],
            ..SynthConfig::desk()
        }
    }

    fn digest_dir(dir: &Path) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = fs::read_dir(dir)
            .unwrap()
            .map(|e| {
                let p = e.unwrap().path();
                let h = Sha256::digest(fs::read(&p).unwrap());
                (p.file_name().unwrap().to_string_lossy().into_owned(), h.iter().map(|b| format!("{b:02x}")).collect())
            })
            .collect();
        out.sort();
        out
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let fonts = FontLibrary::bundled();
        generate_dataset(10, &tiny(), &fonts, a.path(), 7, 1).unwrap();
        generate_dataset(10, &tiny(), &fonts, b.path(), 7, 4).unwrap();
        let (da, db) = (digest_dir(a.path()), digest_dir(b.path()));
        assert_eq!(da.len(), 31);
        assert_eq!(da, db);
    }

    #[test]
    fn sample_regenerates_from_recorded_seed() {
        let dir = tempfile::tempdir().unwrap();
        let fonts = FontLibrary::bundled();
        generate_dataset(1, &tiny(), &fonts, dir.path(), 99, 1).unwrap();
        let m = DatasetManifest::load(&dir.path().join("manifest.json")).unwrap();
        let e = &m.entries[0];
        let doc = compose_document(&m.config, &fonts, &TextSampler::default(), e.seed).unwrap();
        let again = tempfile::tempdir().unwrap();
        write_sample(again.path(), 0, &doc).unwrap();
        for name in [&e.image, &e.gt, &e.annotation] {
            assert_eq!(fs::read(dir.path().join(name)).unwrap(), fs::read(again.path().join(name)).unwrap());
        }
        let (img, gt, ann) = load_sample(&m, e).unwrap();
        assert_eq!(img, doc.image);
        assert_eq!(gt, doc.gt);
        assert_eq!(ann.seed, e.seed);
    }

    #[test]
    fn default_config_records_full_page_size() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SynthConfig {
            tiles_per_doc_range: [1, 1],
            ..SynthConfig::default()
        };
        let m = generate_dataset(1, &cfg, &FontLibrary::bundled(), dir.path(), 0, 1).unwrap();
        let json: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("manifest.json")).unwrap()).unwrap();
        assert_eq!(json["config"]["doc_size"], 1024);
        assert_eq!(m.config_hash, SynthConfig { tiles_per_doc_range: [1, 1], ..SynthConfig::default() }.hash());
    }

    #[test]
    fn seeds_differ_per_index() {
        let s: std::collections::HashSet<u64> = (0..1000).map(|i| sample_seed(5, i)).collect();
        assert_eq!(s.len(), 1000);
        assert_ne!(sample_seed(5, 0), sample_seed(6, 0));
    }
}
