//! On-disk layout `<root>/{images,labels}/{train,val,test}` and the
//! key:value dataset config.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use super::labels::{parse_labels, Annotation};
use super::split::Split;
use crate::error::{Error, Result};

pub const IMAGE_EXT: &str = "ppm";
pub const LABEL_EXT: &str = "txt";

pub fn images_dir(root: &Path, split: Split) -> PathBuf {
    root.join("images").join(split.as_str())
}

pub fn labels_dir(root: &Path, split: Split) -> PathBuf {
    root.join("labels").join(split.as_str())
}

/// Stems of files with extension `ext` directly inside `dir`.
pub fn stems(dir: &Path, ext: &str) -> Result<BTreeMap<String, PathBuf>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && path.extension().is_some_and(|e| e == ext) {
            if let Some(stem) = path.file_stem().and_then(|s| s.to_str()) {
                out.insert(stem.to_owned(), path);
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Violation {
    pub path: PathBuf,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path.display(), self.message)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct SplitCounts {
    pub images: usize,
    pub labels: usize,
    pub boxes: usize,
    /// Label files with no boxes.
    pub negatives: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClassStats {
    pub boxes: usize,
    pub mean_w: f64,
    pub mean_h: f64,
    pub min_area: f64,
    pub max_area: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ValidationReport {
    pub splits: BTreeMap<Split, SplitCounts>,
    pub classes: BTreeMap<usize, ClassStats>,
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn to_kv(&self) -> String {
        let mut s = String::new();
        for (sp, c) in &self.splits {
            s.push_str(&format!(
                "{sp}.images: {}\n{sp}.labels: {}\n{sp}.boxes: {}\n{sp}.negatives: {}\n",
                c.images, c.labels, c.boxes, c.negatives
            ));
        }
        for (k, c) in &self.classes {
            s.push_str(&format!(
                "class{k}.boxes: {}\nclass{k}.mean_w: {:.6}\nclass{k}.mean_h: {:.6}\nclass{k}.min_area: {:.6}\nclass{k}.max_area: {:.6}\n",
                c.boxes, c.mean_w, c.mean_h, c.min_area, c.max_area
            ));
        }
        s.push_str(&format!("violations: {}\n", self.violations.len()));
        for v in &self.violations {
            s.push_str(&format!("violation: {v}\n"));
        }
        s
    }
}

/// Checks image/label pairing and parses every label file. Problems are
/// collected rather than returned as errors.
pub fn validate_dataset(root: &Path) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut sums: BTreeMap<usize, (usize, f64, f64, f64, f64)> = BTreeMap::new();
    for split in Split::ALL {
        let mut counts = SplitCounts::default();
        let (idir, ldir) = (images_dir(root, split), labels_dir(root, split));
        let mut listing = |dir: &Path, ext: &str| match stems(dir, ext) {
            Ok(m) => m,
            Err(_) => {
                report.violations.push(Violation {
                    path: dir.to_path_buf(),
                    message: "missing directory".into(),
                });
                BTreeMap::new()
            }
        };
        let images = listing(&idir, IMAGE_EXT);
        let labels = listing(&ldir, LABEL_EXT);
        counts.images = images.len();
        counts.labels = labels.len();
        let all: BTreeSet<&String> = images.keys().chain(labels.keys()).collect();
        for stem in all {
            match (images.get(stem), labels.get(stem)) {
                (Some(p), None) => report.violations.push(Violation {
                    path: p.clone(),
                    message: "image has no label file".into(),
                }),
                (None, Some(p)) => report.violations.push(Violation {
                    path: p.clone(),
                    message: "label file has no image".into(),
                }),
                _ => {}
            }
        }
        for path in labels.values() {
            let anns = fs::read_to_string(path)
                .map_err(|e| e.to_string())
                .and_then(|t| parse_labels(&t).map_err(|e| e.to_string()));
            match anns {
                Ok(anns) => {
                    counts.boxes += anns.len();
                    if anns.is_empty() {
                        counts.negatives += 1;
                    }
                    for a in anns {
                        let e = sums.entry(a.class_id).or_insert((0, 0.0, 0.0, f64::INFINITY, 0.0));
                        let area = a.w * a.h;
                        *e = (e.0 + 1, e.1 + a.w, e.2 + a.h, e.3.min(area), e.4.max(area));
                    }
                }
                Err(message) => report.violations.push(Violation {
                    path: path.clone(),
                    message,
                }),
            }
        }
        report.splits.insert(split, counts);
    }
    report.classes = sums
        .into_iter()
        .map(|(k, (n, w, h, lo, hi))| {
            (
                k,
                ClassStats {
                    boxes: n,
                    mean_w: w / n as f64,
                    mean_h: h / n as f64,
                    min_area: lo,
                    max_area: hi,
                },
            )
        })
        .collect();
    report
}

/// One labelled image of a split.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub stem: String,
    pub image: PathBuf,
    pub annotations: Vec<Annotation>,
}

/// Label files of `split` paired with their image paths. A missing label
/// file is an error.
pub fn load_split(root: &Path, split: Split) -> Result<Vec<Sample>> {
    let images = stems(&images_dir(root, split), IMAGE_EXT)?;
    let ldir = labels_dir(root, split);
    images
        .into_iter()
        .map(|(stem, image)| {
            let lpath = ldir.join(format!("{stem}.{LABEL_EXT}"));
            let text = fs::read_to_string(&lpath).map_err(|e| Error::io(&lpath, e))?;
            let annotations = parse_labels(&text).map_err(|e| match e {
                Error::Parse { line, msg } => Error::Parse {
                    line,
                    msg: format!("{}: {msg}", lpath.display()),
                },
                other => other,
            })?;
            Ok(Sample {
                stem,
                image,
                annotations,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetConfig {
    pub root: PathBuf,
    pub train: String,
    pub val: String,
    pub test: String,
    pub nc: usize,
    pub names: Vec<String>,
}

impl DatasetConfig {
    /// `key: value` lines; `#` starts a comment. `root`, `nc` and `names`
    /// are required, the split paths default to `images/<split>`.
    pub fn parse(text: &str) -> Result<Self> {
        let mut kv = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once(':').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected `key: value`, got `{line}`"),
            })?;
            let k = k.trim();
            if !["root", "train", "val", "test", "nc", "names"].contains(&k) {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unknown key `{k}`"),
                });
            }
            kv.insert(k.to_owned(), (i + 1, v.trim().to_owned()));
        }
        let get = |k: &str| kv.get(k).map(|(_, v)| v.clone());
        let root = get("root").ok_or_else(|| Error::config("dataset config lacks `root`"))?;
        let (nc_line, nc_text) = kv.get("nc").cloned().ok_or_else(|| Error::config("dataset config lacks `nc`"))?;
        let nc: usize = nc_text.parse().map_err(|_| Error::Parse {
            line: nc_line,
            msg: format!("nc `{nc_text}` is not a count"),
        })?;
        let names: Vec<String> = get("names")
            .ok_or_else(|| Error::config("dataset config lacks `names`"))?
            .split(',')
            .map(|s| s.trim().to_owned())
            .filter(|s| !s.is_empty())
            .collect();
        if names.len() != nc {
            return Err(Error::config(format!("nc is {nc} but {} names given", names.len())));
        }
        Ok(DatasetConfig {
            root: PathBuf::from(root),
            train: get("train").unwrap_or_else(|| "images/train".into()),
            val: get("val").unwrap_or_else(|| "images/val".into()),
            test: get("test").unwrap_or_else(|| "images/test".into()),
            nc,
            names,
        })
    }

    pub fn to_text(&self) -> String {
        format!(
            "root: {}\ntrain: {}\nval: {}\ntest: {}\nnc: {}\nnames: {}\n",
            self.root.display(),
            self.train,
            self.val,
            self.test,
            self.nc,
            self.names.join(",")
        )
    }
}
