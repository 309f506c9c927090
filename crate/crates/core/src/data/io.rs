//! CSV and IDX ingestion.

use std::fs;
use std::path::Path;

use super::Dataset;
use crate::error::{FedError, Result};

const IDX_UBYTE_IMAGES: u32 = 0x0000_0803;
const IDX_UBYTE_LABELS: u32 = 0x0000_0801;

/// Reads a headered, comma-separated file with an integer `label` column;
/// every other column is a feature. The class count is `classes` when given,
/// otherwise one past the largest label.
pub fn load_csv(path: impl AsRef<Path>, classes: Option<usize>) -> Result<Dataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| FedError::ingest(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| FedError::ingest(path, e.to_string()))?
        .clone();
    let label_col = headers
        .iter()
        .position(|h| h.trim() == "label")
        .ok_or_else(|| FedError::ingest(path, "missing `label` column"))?;
    let dim = headers.len() - 1;
    if dim == 0 {
        return Err(FedError::ingest(path, "no feature columns"));
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let line = row + 2;
        let record = record.map_err(|e| FedError::ingest(path, format!("line {line}: {e}")))?;
        if record.len() != headers.len() {
            return Err(FedError::ingest(
                path,
                format!("line {line}: expected {} fields, found {}", headers.len(), record.len()),
            ));
        }
        for (col, field) in record.iter().enumerate() {
            let field = field.trim();
            if col == label_col {
                let label: usize = field
                    .parse()
                    .map_err(|_| FedError::ingest(path, format!("line {line}: bad label `{field}`")))?;
                labels.push(label);
            } else {
                let v: f64 = field.parse().map_err(|_| {
                    FedError::ingest(path, format!("line {line}, column {}: bad number `{field}`", col + 1))
                })?;
                if !v.is_finite() {
                    return Err(FedError::ingest(path, format!("line {line}: non-finite feature")));
                }
                features.push(v);
            }
        }
    }
    finish(path, features, dim, labels, classes)
}

fn finish(path: &Path, features: Vec<f64>, dim: usize, labels: Vec<usize>, classes: Option<usize>) -> Result<Dataset> {
    let max_label = labels.iter().copied().max();
    let classes = match (classes, max_label) {
        (Some(c), Some(m)) if m >= c => {
            return Err(FedError::ingest(path, format!("label {m} outside [0, {c})")));
        }
        (Some(c), _) => c,
        (None, Some(m)) => m + 1,
        (None, None) => return Err(FedError::ingest(path, "no rows")),
    };
    Dataset::new(features, dim, labels, classes).map_err(|e| FedError::ingest(path, e.to_string()))
}

fn be_u32(bytes: &[u8], at: usize) -> Option<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

/// Reads an MNIST-style IDX pair. Pixels are scaled to `[0, 1]` by dividing by 255.
pub fn load_idx(images: impl AsRef<Path>, labels: impl AsRef<Path>, classes: Option<usize>) -> Result<Dataset> {
    let images = images.as_ref();
    let labels_path = labels.as_ref();
    let img = fs::read(images).map_err(|e| FedError::ingest(images, e.to_string()))?;
    let lab = fs::read(labels_path).map_err(|e| FedError::ingest(labels_path, e.to_string()))?;

    match be_u32(&img, 0) {
        Some(IDX_UBYTE_IMAGES) => {}
        Some(m) => return Err(FedError::ingest(images, format!("bad magic number {m:#010x}"))),
        None => return Err(FedError::ingest(images, "truncated header")),
    }
    let (count, rows, cols) = match (be_u32(&img, 4), be_u32(&img, 8), be_u32(&img, 12)) {
        (Some(n), Some(r), Some(c)) => (n as usize, r as usize, c as usize),
        _ => return Err(FedError::ingest(images, "truncated header")),
    };
    let dim = rows * cols;
    if dim == 0 {
        return Err(FedError::ingest(images, "zero-sized images"));
    }
    let body = &img[16..];
    if body.len() != count * dim {
        return Err(FedError::ingest(
            images,
            format!("expected {} pixel bytes, found {}", count * dim, body.len()),
        ));
    }

    match be_u32(&lab, 0) {
        Some(IDX_UBYTE_LABELS) => {}
        Some(m) => return Err(FedError::ingest(labels_path, format!("bad magic number {m:#010x}"))),
        None => return Err(FedError::ingest(labels_path, "truncated header")),
    }
    let label_count = be_u32(&lab, 4).ok_or_else(|| FedError::ingest(labels_path, "truncated header"))? as usize;
    let label_body = &lab[8..];
    if label_count != count || label_body.len() != count {
        return Err(FedError::ingest(
            labels_path,
            format!("expected {count} labels, header says {label_count}, found {}", label_body.len()),
        ));
    }

    let features = body.iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels = label_body.iter().map(|&l| usize::from(l)).collect();
    finish(labels_path, features, dim, labels, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(IDX_UBYTE_IMAGES.to_be_bytes());
        out.extend(count.to_be_bytes());
        out.extend(rows.to_be_bytes());
        out.extend(cols.to_be_bytes());
        out.extend_from_slice(pixels);
        out
    }

    fn idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend(IDX_UBYTE_LABELS.to_be_bytes());
        out.extend((labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }

    #[test]
    fn idx_two_images() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        fs::write(&img, idx_images(2, 2, 2, &[0, 255, 51, 0, 255, 255, 255, 255])).unwrap();
        fs::write(&lab, idx_labels(&[3, 1])).unwrap();
        let ds = load_idx(&img, &lab, Some(10)).unwrap();
        assert_eq!((ds.len(), ds.dim()), (2, 4));
        assert_eq!(ds.features(0), &[0.0, 1.0, 0.2, 0.0]);
        assert_eq!(ds.labels(), &[3, 1]);
    }

    #[test]
    fn idx_rejects_bad_magic_and_truncation() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let mut bad = idx_images(1, 1, 1, &[7]);
        bad[3] = 0x02;
        fs::write(&img, bad).unwrap();
        fs::write(&lab, idx_labels(&[0])).unwrap();
        let err = load_idx(&img, &lab, None).unwrap_err().to_string();
        assert!(err.contains("magic"), "{err}");

        fs::write(&img, idx_images(2, 1, 1, &[7])).unwrap();
        assert!(load_idx(&img, &lab, None).is_err());

        fs::write(&img, idx_images(1, 1, 1, &[7])).unwrap();
        fs::write(&lab, idx_labels(&[12])).unwrap();
        assert!(load_idx(&img, &lab, Some(10)).is_err());
    }

    #[test]
    fn csv_happy_path_and_errors() {
        let dir = tempfile::tempdir().unwrap();
        let good = dir.path().join("good.csv");
        let mut f = fs::File::create(&good).unwrap();
        writeln!(f, "a,label,b\n0.5,1,2\n1.5,0,-3").unwrap();
        let ds = load_csv(&good, None).unwrap();
        assert_eq!(ds.classes(), 2);
        assert_eq!(ds.features(1), &[1.5, -3.0]);

        let missing = dir.path().join("missing.csv");
        fs::write(&missing, "a,b\n1,2\n").unwrap();
        assert!(load_csv(&missing, None).unwrap_err().to_string().contains("label"));

        let ragged = dir.path().join("ragged.csv");
        fs::write(&ragged, "a,label\n1,0\n2\n").unwrap();
        assert!(load_csv(&ragged, None).is_err());

        let negative = dir.path().join("neg.csv");
        fs::write(&negative, "a,label\n1,-1\n").unwrap();
        assert!(load_csv(&negative, None).is_err());

        let out_of_range = dir.path().join("oor.csv");
        fs::write(&out_of_range, "a,label\n1,4\n").unwrap();
        assert!(load_csv(&out_of_range, Some(3)).is_err());
    }
}
