//! DDM record JSONL and water-mask PGM I/O.
//!
//! Records travel one JSON object per line. Masks are binary PGM (P5) with
//! 255 = water plus a JSON sidecar carrying the georeference.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DdmRecord, WaterMask};
use crate::{Error, Result};

/// Georeference sidecar stored next to a mask PGM.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MaskSidecar {
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub cell_size_deg: f64,
}

pub fn write_records_jsonl(path: &Path, records: &[DdmRecord]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for rec in records {
        serde_json::to_writer(&mut w, rec)?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

pub fn read_records_jsonl(path: &Path) -> Result<Vec<DdmRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: DdmRecord = serde_json::from_str(&line)
            .map_err(|e| Error::data(path, format!("line {}: {e}", i + 1)))?;
        rec.validate()
            .map_err(|e| Error::data(path, format!("line {}: {e}", i + 1)))?;
        records.push(rec);
    }
    Ok(records)
}

/// Binary PGM, row 0 of the mask first; 255 = water, 0 = land.
pub fn write_mask_pgm(path: &Path, mask: &WaterMask) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write!(w, "P5\n{} {}\n255\n", mask.cols, mask.rows).map_err(|e| Error::io(path, e))?;
    let bytes: Vec<u8> = mask.labels.iter().map(|&l| l * 255).collect();
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))?;

    let sidecar = MaskSidecar {
        origin_lat: mask.origin_lat,
        origin_lon: mask.origin_lon,
        cell_size_deg: mask.cell_size_deg,
    };
    let sc_path = sidecar_path(path);
    let sc_file = File::create(&sc_path).map_err(|e| Error::io(&sc_path, e))?;
    serde_json::to_writer(BufWriter::new(sc_file), &sidecar)?;
    Ok(())
}

pub fn read_mask_pgm(path: &Path) -> Result<WaterMask> {
    let mut bytes = Vec::new();
    File::open(path)
        .map_err(|e| Error::io(path, e))?
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    let (cols, rows, data_off) = parse_pgm_header(path, &bytes)?;
    let expected = rows * cols;
    if bytes.len() < data_off + expected {
        return Err(Error::data(path, "PGM payload shorter than header promises"));
    }
    let labels: Vec<u8> = bytes[data_off..data_off + expected]
        .iter()
        .map(|&b| u8::from(b >= 128))
        .collect();

    let sc_path = sidecar_path(path);
    let sc_file = File::open(&sc_path).map_err(|e| Error::io(&sc_path, e))?;
    let sidecar: MaskSidecar = serde_json::from_reader(BufReader::new(sc_file))?;
    WaterMask::new(
        sidecar.origin_lat,
        sidecar.origin_lon,
        sidecar.cell_size_deg,
        rows,
        cols,
        labels,
    )
}

fn sidecar_path(pgm: &Path) -> std::path::PathBuf {
    pgm.with_extension("json")
}

fn parse_pgm_header(path: &Path, bytes: &[u8]) -> Result<(usize, usize, usize)> {
    // Header: "P5" <ws> cols <ws> rows <ws> maxval <single ws> data.
    let bad = |m: &str| Error::data(path, m.to_string());
    if bytes.len() < 2 || &bytes[0..2] != b"P5" {
        return Err(bad("not a binary PGM (P5)"));
    }
    let mut pos = 2;
    let mut fields = Vec::new();
    while fields.len() < 3 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if pos < bytes.len() && bytes[pos] == b'#' {
            while pos < bytes.len() && bytes[pos] != b'\n' {
                pos += 1;
            }
            continue;
        }
        let start = pos;
        while pos < bytes.len() && bytes[pos].is_ascii_digit() {
            pos += 1;
        }
        if pos == start {
            return Err(bad("truncated PGM header"));
        }
        let text = std::str::from_utf8(&bytes[start..pos]).map_err(|_| bad("bad PGM header"))?;
        fields.push(
            text.parse::<usize>()
                .map_err(|_| bad("bad PGM header number"))?,
        );
    }
    if fields[2] != 255 {
        return Err(bad("PGM maxval must be 255"));
    }
    // Exactly one whitespace byte separates maxval from data.
    pos += 1;
    Ok((fields[0], fields[1], pos))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ddm::DelayDopplerMap;

    fn sample_record(id: &str, label: Option<u8>) -> DdmRecord {
        let mut ddm = DelayDopplerMap::zeros();
        ddm.set(8, 5, 42.0);
        ddm.set(7, 4, 3.5);
        DdmRecord {
            id: id.into(),
            lat: -4.25,
            lon: -64.75,
            time: "2021-04-02T10:30:00.000Z".into(),
            sp_inc_angle_deg: 41.0,
            ant_gain_db: 7.5,
            quality_flags: 0,
            noise_avg: 1.25,
            ddm,
            label,
        }
    }

    #[test]
    fn jsonl_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.jsonl");
        let records = vec![sample_record("a", Some(1)), sample_record("b", None)];
        write_records_jsonl(&path, &records).unwrap();
        let back = read_records_jsonl(&path).unwrap();
        assert_eq!(records, back);
        // Optional label is omitted from the line, not emitted as null.
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(!text.lines().nth(1).unwrap().contains("label"));
    }

    #[test]
    fn jsonl_rejects_invalid_records() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.jsonl");
        let mut rec = sample_record("a", None);
        rec.noise_avg = 1.0;
        let mut line = serde_json::to_string(&rec).unwrap();
        line = line.replace("\"noise_avg\":1.0", "\"noise_avg\":0.0");
        std::fs::write(&path, line).unwrap();
        assert!(read_records_jsonl(&path).is_err());
    }

    #[test]
    fn pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mask.pgm");
        let mask = WaterMask::new(-5.0, -65.0, 0.01, 2, 3, vec![1, 0, 0, 0, 1, 1]).unwrap();
        write_mask_pgm(&path, &mask).unwrap();
        let back = read_mask_pgm(&path).unwrap();
        assert_eq!(mask, back);
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..3], b"P5\n");
        assert!(bytes.ends_with(&[255, 0, 0, 0, 255, 255]));
    }
}
