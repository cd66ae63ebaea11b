//! Image retrieval under query rotation.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{compensate_with, Estimator, PipelineError};
use crate::hogsvm::{hog_features, HogConfig};
use crate::raster::{rotate_circular, Image};
use crate::scorer::preprocess;
use crate::AngleDeg;

/// Mean of precision@k over the positions k of relevant items.
pub fn average_precision(relevance: &[bool]) -> Result<f64, PipelineError> {
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (k, &rel) in relevance.iter().enumerate() {
        if rel {
            hits += 1;
            sum += hits as f64 / (k + 1) as f64;
        }
    }
    if hits == 0 {
        return Err(PipelineError::NoRelevant);
    }
    Ok(sum / hits as f64)
}

pub fn maxpool_descriptors(a: &[f32], b: &[f32]) -> Result<Vec<f32>, PipelineError> {
    if a.len() != b.len() {
        return Err(PipelineError::Dimension(a.len(), b.len()));
    }
    Ok(a.iter().zip(b).map(|(&x, &y)| x.max(y)).collect())
}

/// Cosine similarity; 0 when either vector is zero.
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0f64, 0.0f64, 0.0f64);
    for (&x, &y) in a.iter().zip(b) {
        let (x, y) = (f64::from(x), f64::from(y));
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na.sqrt() * nb.sqrt())
    }
}

/// Where descriptors come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DescriptorProvider {
    /// HoG of the image preprocessed to the config's input side.
    Hog(HogConfig),
    /// Precomputed vectors in `<dir>/<key>.vec`. Keys are the image file
    /// stem, with `_rot<angle>` appended for rotated copies and `_comp` for
    /// their compensated versions (e.g. `beach_rot-45_comp`).
    External(PathBuf),
}

impl DescriptorProvider {
    pub fn describe(&self, key: &str, img: &Image) -> Result<Vec<f32>, PipelineError> {
        match self {
            DescriptorProvider::Hog(cfg) => hog_features(&preprocess(img, cfg.input_side), cfg)
                .map_err(|e| PipelineError::Scorer(e.into())),
            DescriptorProvider::External(dir) => {
                let path = dir.join(format!("{key}.vec"));
                if !path.is_file() {
                    return Err(PipelineError::MissingDescriptor(key.to_string()));
                }
                read_descriptor(&path)
            }
        }
    }

    /// External providers never look at pixels.
    fn needs_pixels(&self) -> bool {
        matches!(self, DescriptorProvider::Hog(_))
    }
}

/// Reads a `u32` little-endian length followed by that many `f32` values.
pub fn read_descriptor(path: &Path) -> Result<Vec<f32>, PipelineError> {
    let bytes = fs::read(path)?;
    let bad = |m: &str| PipelineError::Format(format!("{}: {m}", path.display()));
    let len = u32::from_le_bytes(bytes.get(..4).ok_or_else(|| bad("missing length"))?.try_into().expect("4 bytes")) as usize;
    let body = &bytes[4..];
    if body.len() != len.checked_mul(4).ok_or_else(|| bad("length overflows"))? {
        return Err(bad(&format!("expected {len} values, found {} bytes", body.len())));
    }
    Ok(body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect())
}

pub fn write_descriptor(path: &Path, values: &[f32]) -> Result<(), PipelineError> {
    let mut bytes = Vec::with_capacity(4 + 4 * values.len());
    bytes.extend_from_slice(&(values.len() as u32).to_le_bytes());
    for v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrievalMode {
    /// Rotated query described as-is.
    Raw,
    /// Rotated query described after compensation.
    Compensated,
    /// Element-wise max of the raw and compensated descriptors.
    Maxpooled,
    /// Query and every dataset image rotated by the same angle.
    Corotated,
}

impl std::str::FromStr for RetrievalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "raw" => Ok(RetrievalMode::Raw),
            "compensated" => Ok(RetrievalMode::Compensated),
            "maxpooled" => Ok(RetrievalMode::Maxpooled),
            "corotated" => Ok(RetrievalMode::Corotated),
            _ => Err(format!("unknown retrieval mode `{s}`")),
        }
    }
}

/// Named images with, per query, the dataset indices relevant to it.
#[derive(Debug, Clone, PartialEq)]
pub struct RetrievalSet {
    pub names: Vec<String>,
    pub images: Vec<Image>,
    /// `(query index, relevant indices)`.
    pub queries: Vec<(usize, Vec<usize>)>,
}

impl RetrievalSet {
    /// Every image is a query; its group mates are relevant.
    pub fn from_groups(names: Vec<String>, images: Vec<Image>, groups: &[usize]) -> Result<Self, PipelineError> {
        if names.len() != images.len() || names.len() != groups.len() {
            return Err(PipelineError::Format("names, images and groups differ in length".into()));
        }
        let queries = (0..names.len())
            .map(|q| {
                let rel: Vec<usize> = (0..names.len()).filter(|&j| j != q && groups[j] == groups[q]).collect();
                if rel.is_empty() {
                    Err(PipelineError::EmptyRelevance(names[q].clone()))
                } else {
                    Ok((q, rel))
                }
            })
            .collect::<Result<_, _>>()?;
        Ok(RetrievalSet { names, images, queries })
    }

    /// Queries in order of first appearance in `pairs`.
    pub fn from_pairs(names: Vec<String>, images: Vec<Image>, pairs: &[(String, String)]) -> Result<Self, PipelineError> {
        let index = |n: &str| {
            names
                .iter()
                .position(|m| m == n)
                .ok_or_else(|| PipelineError::UnknownImage(n.to_string()))
        };
        let mut queries: Vec<(usize, Vec<usize>)> = Vec::new();
        for (q, r) in pairs {
            let (qi, ri) = (index(q)?, index(r)?);
            if qi == ri {
                continue;
            }
            match queries.iter_mut().find(|(i, _)| *i == qi) {
                Some((_, rel)) if !rel.contains(&ri) => rel.push(ri),
                Some(_) => {}
                None => queries.push((qi, vec![ri])),
            }
        }
        if queries.is_empty() {
            return Err(PipelineError::EmptyInput("relevance list names no query"));
        }
        Ok(RetrievalSet { names, images, queries })
    }

    fn stem(&self, i: usize) -> &str {
        let name = &self.names[i];
        Path::new(name).file_stem().and_then(|s| s.to_str()).unwrap_or(name)
    }
}

fn rot_key(stem: &str, angle: AngleDeg) -> String {
    format!("{stem}_rot{}", angle.degrees())
}

/// Circular rotation, skipped entirely at 0° so unrotated runs see the
/// original pixels.
fn rotated(img: &Image, angle: AngleDeg) -> Result<Image, PipelineError> {
    if angle.degrees() == 0.0 {
        Ok(img.clone())
    } else {
        Ok(rotate_circular(&preprocess_square(img), angle)?)
    }
}

fn preprocess_square(img: &Image) -> Image {
    if img.is_square() {
        img.clone()
    } else {
        crate::raster::center_square_crop(img)
    }
}

/// Crops the centered `w`×`h` window (or less, if the image is smaller).
fn center_window(img: &Image, w: usize, h: usize) -> Image {
    let (w, h) = (w.min(img.width()), h.min(img.height()));
    let (x0, y0) = ((img.width() - w) / 2, (img.height() - h) / 2);
    Image::from_fn(w, h, img.channels(), |x, y, c| img.get(x0 + x, y0 + y, c)).expect("non-empty window")
}

/// Mean average precision per query angle. Each query is removed from its
/// own ranking; ties in similarity keep dataset order.
pub fn retrieval_eval(
    provider: &DescriptorProvider,
    set: &RetrievalSet,
    angles: &[AngleDeg],
    mode: RetrievalMode,
    estimator: Option<&dyn Estimator>,
) -> Result<Vec<(AngleDeg, f64)>, PipelineError> {
    if set.queries.is_empty() {
        return Err(PipelineError::EmptyInput("retrieval needs at least one query"));
    }
    if let Some((q, _)) = set.queries.iter().find(|(_, rel)| rel.is_empty()) {
        return Err(PipelineError::EmptyRelevance(set.names[*q].clone()));
    }
    let needs_estimator = matches!(mode, RetrievalMode::Compensated | RetrievalMode::Maxpooled);
    let estimator = match (needs_estimator, estimator) {
        (true, None) => return Err(PipelineError::EmptyInput("this retrieval mode needs a rotation estimator")),
        (_, e) => e,
    };
    let describe_all = |angle: AngleDeg| -> Result<Vec<Vec<f32>>, PipelineError> {
        (0..set.images.len())
            .into_par_iter()
            .map(|i| {
                let (key, img) = if angle.degrees() == 0.0 {
                    (set.stem(i).to_string(), set.images[i].clone())
                } else {
                    let img = if provider.needs_pixels() { rotated(&set.images[i], angle)? } else { set.images[i].clone() };
                    (rot_key(set.stem(i), angle), img)
                };
                provider.describe(&key, &img)
            })
            .collect()
    };
    let base = describe_all(AngleDeg::ZERO)?;

    let mut out = Vec::with_capacity(angles.len());
    for &angle in angles {
        let dataset = if mode == RetrievalMode::Corotated && angle.degrees() != 0.0 {
            describe_all(angle)?
        } else {
            base.clone()
        };
        let aps: Vec<f64> = set
            .queries
            .par_iter()
            .map(|(q, relevant)| {
                let q = *q;
                let key = if angle.degrees() == 0.0 { set.stem(q).to_string() } else { rot_key(set.stem(q), angle) };
                let query_img = rotated(&set.images[q], angle)?;
                let raw = || -> Result<Vec<f32>, PipelineError> {
                    if angle.degrees() == 0.0 {
                        Ok(base[q].clone())
                    } else {
                        provider.describe(&key, &query_img)
                    }
                };
                let compensated = || -> Result<Vec<f32>, PipelineError> {
                    let est = estimator.expect("checked above");
                    let r = compensate_with(est, &query_img)?;
                    let corrected = center_window(&r.corrected, query_img.width(), query_img.height());
                    provider.describe(&format!("{key}_comp"), &corrected)
                };
                let descriptor = match mode {
                    RetrievalMode::Raw | RetrievalMode::Corotated => raw()?,
                    RetrievalMode::Compensated => compensated()?,
                    RetrievalMode::Maxpooled => maxpool_descriptors(&raw()?, &compensated()?)?,
                };
                let mut ranked: Vec<(usize, f64)> = (0..dataset.len())
                    .filter(|&j| j != q)
                    .map(|j| {
                        if dataset[j].len() != descriptor.len() {
                            return Err(PipelineError::Dimension(dataset[j].len(), descriptor.len()));
                        }
                        Ok((j, cosine_similarity(&descriptor, &dataset[j])))
                    })
                    .collect::<Result<_, _>>()?;
                ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
                let relevance: Vec<bool> = ranked.iter().map(|(j, _)| relevant.contains(j)).collect();
                average_precision(&relevance)
            })
            .collect::<Result<_, _>>()?;
        out.push((angle, aps.iter().sum::<f64>() / aps.len() as f64));
    }
    Ok(out)
}

/// CSV `angle_deg,map`.
pub fn write_map_csv<W: Write>(out: W, maps: &[(AngleDeg, f64)]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["angle_deg", "map"])?;
    for (a, m) in maps {
        w.write_record([a.degrees().to_string(), m.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads `query_filename,relevant_filename` pairs (header required).
pub fn load_relevance_csv(path: &Path) -> Result<Vec<(String, String)>, PipelineError> {
    let mut r = csv::Reader::from_path(path)?;
    let headers = r.headers()?.clone();
    if headers.iter().collect::<Vec<_>>() != ["query_filename", "relevant_filename"] {
        return Err(PipelineError::Format(format!(
            "{}: header must be query_filename,relevant_filename",
            path.display()
        )));
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok((rec[0].to_string(), rec[1].to_string()))
        })
        .collect()
}

pub fn write_relevance_csv<W: Write>(out: W, pairs: &[(String, String)]) -> Result<(), PipelineError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["query_filename", "relevant_filename"])?;
    for (q, r) in pairs {
        w.write_record([q, r])?;
    }
    w.flush()?;
    Ok(())
}
