//! On-disk datasets: `manifest.csv` (`filename,label,true_angle_deg`) next
//! to an `images/` directory of PNG files.

use std::fs;
use std::path::Path;

use super::SynthError;
use crate::raster::{read_image, write_image, Image, ImageFormat};
use crate::AngleDeg;

pub const MANIFEST_FILE: &str = "manifest.csv";
pub const IMAGE_SUBDIR: &str = "images";

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetEntry {
    pub filename: String,
    pub image: Image,
    pub label: u8,
    pub true_angle: AngleDeg,
}

const HEADER: [&str; 3] = ["filename", "label", "true_angle_deg"];

fn io_err(context: &str, err: impl std::fmt::Display) -> SynthError {
    SynthError::Io(format!("{context}: {err}"))
}

/// Writes images as PNG under `dir/images/` and a manifest row for each.
pub fn write_dataset_dir(dir: &Path, entries: &[DatasetEntry]) -> Result<(), SynthError> {
    let image_dir = dir.join(IMAGE_SUBDIR);
    fs::create_dir_all(&image_dir).map_err(|e| io_err(&image_dir.display().to_string(), e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut writer = csv::Writer::from_path(&manifest_path)
        .map_err(|e| io_err(&manifest_path.display().to_string(), e))?;
    writer
        .write_record(HEADER)
        .map_err(|e| io_err("manifest", e))?;
    for entry in entries {
        let path = image_dir.join(&entry.filename);
        write_image(&path, &entry.image).map_err(|e| io_err(&path.display().to_string(), e))?;
        writer
            .write_record([
                entry.filename.clone(),
                entry.label.to_string(),
                entry.true_angle.to_string(),
            ])
            .map_err(|e| io_err("manifest", e))?;
    }
    writer.flush().map_err(|e| io_err("manifest", e))?;
    Ok(())
}

/// Reads a dataset written by [`write_dataset_dir`], in manifest order.
pub fn load_dataset_dir(dir: &Path) -> Result<Vec<DatasetEntry>, SynthError> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let mut reader = csv::Reader::from_path(&manifest_path)
        .map_err(|e| io_err(&manifest_path.display().to_string(), e))?;
    let mut entries = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| io_err("manifest", e))?;
        let bad = |what: &str| io_err("manifest", format!("row {}: bad {what}", line + 2));
        if record.len() != 3 {
            return Err(bad("column count"));
        }
        let filename = record[0].to_string();
        let label: u8 = record[1].trim().parse().map_err(|_| bad("label"))?;
        if label > 1 {
            return Err(bad("label"));
        }
        let angle: f64 = record[2].trim().parse().map_err(|_| bad("true_angle_deg"))?;
        let path = dir.join(IMAGE_SUBDIR).join(&filename);
        let image = read_image(&path).map_err(|e| io_err(&path.display().to_string(), e))?;
        entries.push(DatasetEntry {
            filename,
            image,
            label,
            true_angle: AngleDeg::new(angle),
        });
    }
    Ok(entries)
}

/// Loads every PNG/PPM/PGM file in `dir`, sorted by filename.
pub fn load_image_dir(dir: &Path) -> Result<Vec<(String, Image)>, SynthError> {
    let listing = fs::read_dir(dir).map_err(|e| io_err(&dir.display().to_string(), e))?;
    let mut paths: Vec<_> = listing
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && ImageFormat::from_path(p).is_some())
        .collect();
    paths.sort();
    paths
        .into_iter()
        .map(|p| {
            let name = p
                .file_name()
                .and_then(|n| n.to_str())
                .unwrap_or_default()
                .to_string();
            let img = read_image(&p).map_err(|e| io_err(&p.display().to_string(), e))?;
            Ok((name, img))
        })
        .collect()
}
