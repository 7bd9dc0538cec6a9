//! Flat binary dataset files.
//!
//! A dataset is a sequence of records, each `width · height` field values
//! (row-major, `x` fastest) followed by the three labels
//! `(alpha, lambda, theta)`, all little-endian `f64`. A sidecar text
//! manifest at `<path>.manifest` holds `key=value` lines describing the
//! record count, grid dimensions, smoothness and seeds.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::grid::{FieldGrid, GridDomain};
use crate::simulate::{Label, LabeledSample};

pub fn manifest_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".manifest");
    PathBuf::from(s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub records: usize,
    pub domain: GridDomain,
    pub nu: f64,
    pub base_seed: u64,
    pub fields_per_config: usize,
    pub grid: String,
}

impl DatasetManifest {
    pub fn to_text(&self) -> String {
        format!(
            "format=anisofield-dataset\nversion=1\nrecords={}\nwidth={}\nheight={}\nrecord_layout=field[{}] alpha lambda theta (f64 little-endian)\nnu={}\nbase_seed={}\nfields_per_config={}\ngrid={}\n",
            self.records,
            self.domain.width,
            self.domain.height,
            self.domain.len(),
            self.nu,
            self.base_seed,
            self.fields_per_config,
            self.grid
        )
    }

    pub fn parse(text: &str) -> Result<Self> {
        let map: BTreeMap<&str, &str> = text
            .lines()
            .filter_map(|l| l.split_once('='))
            .map(|(k, v)| (k.trim(), v.trim()))
            .collect();
        let get = |k: &str| {
            map.get(k)
                .copied()
                .ok_or_else(|| Error::Parse(format!("manifest is missing `{k}`")))
        };
        let num = |k: &str| -> Result<usize> {
            get(k)?
                .parse()
                .map_err(|e| Error::Parse(format!("manifest `{k}`: {e}")))
        };
        if get("format")? != "anisofield-dataset" {
            return Err(Error::Parse("not a dataset manifest".into()));
        }
        Ok(Self {
            records: num("records")?,
            domain: GridDomain::new(num("width")?, num("height")?)?,
            nu: get("nu")?
                .parse()
                .map_err(|e| Error::Parse(format!("manifest `nu`: {e}")))?,
            base_seed: get("base_seed")?
                .parse()
                .map_err(|e| Error::Parse(format!("manifest `base_seed`: {e}")))?,
            fields_per_config: num("fields_per_config")?,
            grid: get("grid")?.to_string(),
        })
    }
}

/// Writes records as they are produced; the manifest is written by
/// [`DatasetWriter::finish`].
pub struct DatasetWriter {
    out: BufWriter<File>,
    path: PathBuf,
    manifest: DatasetManifest,
}

impl DatasetWriter {
    pub fn create(path: impl AsRef<Path>, manifest: DatasetManifest) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        Ok(Self {
            out: BufWriter::new(File::create(&path)?),
            path,
            manifest: DatasetManifest {
                records: 0,
                ..manifest
            },
        })
    }

    pub fn push(&mut self, sample: &LabeledSample) -> Result<()> {
        if sample.field.domain() != self.manifest.domain {
            return Err(Error::Shape("sample grid differs from dataset grid".into()));
        }
        for &v in sample.field.values() {
            self.out.write_all(&v.to_le_bytes())?;
        }
        for v in sample.label.to_array() {
            self.out.write_all(&v.to_le_bytes())?;
        }
        self.manifest.records += 1;
        Ok(())
    }

    pub fn finish(mut self) -> Result<DatasetManifest> {
        self.out.flush()?;
        std::fs::write(manifest_path(&self.path), self.manifest.to_text())?;
        Ok(self.manifest)
    }
}

/// An in-memory dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub domain: GridDomain,
    pub fields: Vec<f64>,
    pub labels: Vec<Label>,
}

impl Dataset {
    pub fn from_samples(samples: &[LabeledSample]) -> Result<Self> {
        let domain = samples
            .first()
            .map(|s| s.field.domain())
            .ok_or(Error::EmptyData)?;
        let mut fields = Vec::with_capacity(samples.len() * domain.len());
        let mut labels = Vec::with_capacity(samples.len());
        for s in samples {
            if s.field.domain() != domain {
                return Err(Error::Shape("mixed grid sizes in dataset".into()));
            }
            if !s.field.is_complete() {
                return Err(Error::Missing("dataset fields must be complete".into()));
            }
            fields.extend_from_slice(s.field.values());
            labels.push(s.label);
        }
        Ok(Self {
            domain,
            fields,
            labels,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn field_values(&self, i: usize) -> &[f64] {
        let n = self.domain.len();
        &self.fields[i * n..(i + 1) * n]
    }

    pub fn field(&self, i: usize) -> FieldGrid {
        FieldGrid::new(self.domain, self.field_values(i).to_vec()).expect("finite dataset values")
    }

    pub fn read(path: impl AsRef<Path>) -> Result<(Self, DatasetManifest)> {
        let path = path.as_ref();
        let manifest = DatasetManifest::parse(&std::fs::read_to_string(manifest_path(path))?)?;
        let cells = manifest.domain.len();
        let record_len = (cells + 3) * 8;
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        if bytes.len() != record_len * manifest.records {
            return Err(Error::Parse(format!(
                "dataset holds {} bytes, manifest implies {}",
                bytes.len(),
                record_len * manifest.records
            )));
        }
        let mut fields = Vec::with_capacity(cells * manifest.records);
        let mut labels = Vec::with_capacity(manifest.records);
        for rec in bytes.chunks_exact(record_len) {
            let mut vals = rec
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()));
            fields.extend(vals.by_ref().take(cells));
            let l: Vec<f64> = vals.collect();
            labels.push(Label::from_array([l[0], l[1], l[2]]));
        }
        Ok((
            Self {
                domain: manifest.domain,
                fields,
                labels,
            },
            manifest,
        ))
    }
}
