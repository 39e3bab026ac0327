//! On-disk formats: wrist and chest CSV recordings, the corpus manifest and
//! the binary segment store.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{SegmentBundle, WINDOW_LEN};
use crate::synth::{ManifestRow, SynthSegment, CHEST_RATE, WRIST_RATE};

pub const WRIST_COLUMNS: [&str; 8] = ["t", "ppg", "acc_x", "acc_y", "acc_z", "gyr_x", "gyr_y", "gyr_z"];
pub const CHEST_COLUMNS: [&str; 4] = ["t", "acc_x", "acc_y", "acc_z"];
const STORE_MAGIC: &[u8; 4] = b"RRS1";

fn format_err(msg: impl Into<String>) -> Error {
    Error::Format(msg.into())
}

#[derive(Debug, Clone, PartialEq)]
pub struct WristRecording {
    pub rate: f64,
    pub ppg: Vec<f64>,
    pub acc: [Vec<f64>; 3],
    pub gyr: [Vec<f64>; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChestRecording {
    pub rate: f64,
    pub acc: [Vec<f64>; 3],
}

/// Rate implied by a uniformly sampled time column, snapped to an integer
/// when within rounding of the written timestamps.
fn rate_from_times(path: &Path, t: &[f64]) -> Result<f64> {
    if t.len() < 2 {
        return Err(format_err(format!("{}: fewer than two samples", path.display())));
    }
    for (i, w) in t.windows(2).enumerate() {
        if !(w[1] > w[0]) {
            return Err(format_err(format!("{}: time column not increasing at row {}", path.display(), i + 2)));
        }
    }
    let rate = (t.len() - 1) as f64 / (t[t.len() - 1] - t[0]);
    let snapped = rate.round();
    Ok(if (rate - snapped).abs() < 1e-4 * snapped { snapped } else { rate })
}

fn read_columns(path: &Path, expected: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let got: Vec<&str> = headers.iter().map(str::trim).collect();
    if got != expected {
        return Err(format_err(format!("{}: expected columns {expected:?}, found {got:?}", path.display())));
    }
    let mut cols = vec![Vec::new(); expected.len()];
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        for (c, field) in record.iter().enumerate() {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| format_err(format!("{}: row {} column {}: not a number", path.display(), row + 2, expected[c])))?;
            if !v.is_finite() {
                return Err(format_err(format!("{}: row {} column {}: non-finite value", path.display(), row + 2, expected[c])));
            }
            cols[c].push(v);
        }
    }
    Ok(cols)
}

pub fn read_wrist_csv(path: &Path) -> Result<WristRecording> {
    let mut cols = read_columns(path, &WRIST_COLUMNS)?.into_iter();
    let t = cols.next().unwrap_or_default();
    let rate = rate_from_times(path, &t)?;
    let mut next = || cols.next().unwrap_or_default();
    let ppg = next();
    let acc = [next(), next(), next()];
    let gyr = [next(), next(), next()];
    Ok(WristRecording { rate, ppg, acc, gyr })
}

pub fn read_chest_csv(path: &Path) -> Result<ChestRecording> {
    let mut cols = read_columns(path, &CHEST_COLUMNS)?.into_iter();
    let t = cols.next().unwrap_or_default();
    let rate = rate_from_times(path, &t)?;
    let mut next = || cols.next().unwrap_or_default();
    Ok(ChestRecording { rate, acc: [next(), next(), next()] })
}

fn write_rows(path: &Path, header: &[&str], rate: f64, cols: &[&[f64]]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", header.join(","))?;
    let n = cols.first().map_or(0, |c| c.len());
    let mut line = String::new();
    for i in 0..n {
        line.clear();
        line.push_str(&format!("{:.6}", i as f64 / rate));
        for c in cols {
            line.push_str(&format!(",{:.6}", c[i]));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_wrist_csv(path: &Path, rec: &WristRecording) -> Result<()> {
    let cols = [&rec.ppg[..], &rec.acc[0], &rec.acc[1], &rec.acc[2], &rec.gyr[0], &rec.gyr[1], &rec.gyr[2]];
    write_rows(path, &WRIST_COLUMNS, rec.rate, &cols)
}

pub fn write_chest_csv(path: &Path, rec: &ChestRecording) -> Result<()> {
    let cols = [&rec.acc[0][..], &rec.acc[1], &rec.acc[2]];
    write_rows(path, &CHEST_COLUMNS, rec.rate, &cols)
}

/// Paths of one segment's recordings inside a corpus directory.
pub fn segment_paths(root: &Path, subject: &str, segment: &str) -> (PathBuf, PathBuf) {
    let dir = root.join(subject);
    (dir.join(format!("{segment}.wrist.csv")), dir.join(format!("{segment}.chest.csv")))
}

pub fn write_synth_segment(root: &Path, subject: &str, segment: &str, seg: &SynthSegment) -> Result<()> {
    std::fs::create_dir_all(root.join(subject))?;
    let (wrist, chest) = segment_paths(root, subject, segment);
    let w = WristRecording { rate: WRIST_RATE, ppg: seg.wrist.ppg.clone(), acc: seg.wrist.acc.clone(), gyr: seg.wrist.gyr.clone() };
    write_wrist_csv(&wrist, &w)?;
    write_chest_csv(&chest, &ChestRecording { rate: CHEST_RATE, acc: seg.chest.clone() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub segments: Vec<ManifestRow>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| format_err(format!("identifier too long: {s}")))?;
    w.write_u16::<LittleEndian>(len)?;
    w.write_all(s.as_bytes())?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R) -> Result<String> {
    let len = r.read_u16::<LittleEndian>()? as usize;
    let mut buf = vec![0u8; len];
    r.read_exact(&mut buf)?;
    String::from_utf8(buf).map_err(|_| format_err("identifier is not valid UTF-8"))
}

/// Binary store: magic, record count, then per record the two identifiers,
/// the three channels as f32 and the label (NaN when absent).
pub fn write_bundles(path: &Path, bundles: &[SegmentBundle]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(STORE_MAGIC)?;
    w.write_u32::<LittleEndian>(bundles.len() as u32)?;
    for b in bundles {
        b.validate()?;
        write_str(&mut w, &b.subject_id)?;
        write_str(&mut w, &b.segment_id)?;
        for ch in b.channels() {
            for &v in ch {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        w.write_f32::<LittleEndian>(b.label_rr.unwrap_or(f32::NAN))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_bundles(path: &Path) -> Result<Vec<SegmentBundle>> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != STORE_MAGIC {
        return Err(format_err(format!("{}: not a segment store", path.display())));
    }
    let n = r.read_u32::<LittleEndian>()? as usize;
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let subject_id = read_str(&mut r)?;
        let segment_id = read_str(&mut r)?;
        let mut channel = || -> Result<Vec<f32>> {
            let mut v = vec![0f32; WINDOW_LEN];
            r.read_f32_into::<LittleEndian>(&mut v)?;
            Ok(v)
        };
        let (ppg, resp_acc, resp_gyr) = (channel()?, channel()?, channel()?);
        let label = r.read_f32::<LittleEndian>()?;
        let b = SegmentBundle { subject_id, segment_id, ppg, resp_acc, resp_gyr, label_rr: (!label.is_nan()).then_some(label) };
        b.validate()?;
        out.push(b);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrist_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.wrist.csv");
        let col = |k: f64| (0..50).map(|i| (i as f64 * k).sin()).collect::<Vec<_>>();
        let rec = WristRecording { rate: 20.0, ppg: col(0.1), acc: [col(0.2), col(0.3), col(0.4)], gyr: [col(0.5), col(0.6), col(0.7)] };
        write_wrist_csv(&p, &rec).unwrap();
        let back = read_wrist_csv(&p).unwrap();
        assert_eq!(back.rate, 20.0);
        for (a, b) in back.ppg.iter().zip(&rec.ppg) {
            assert!((a - b).abs() <= 5e-7);
        }
    }

    #[test]
    fn rejects_non_monotonic_time() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(&p, "t,acc_x,acc_y,acc_z\n0,1,2,3\n0.1,1,2,3\n0.05,1,2,3\n").unwrap();
        let err = read_chest_csv(&p).unwrap_err().to_string();
        assert!(err.contains("not increasing"), "{err}");
    }

    #[test]
    fn rejects_wrong_header() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        std::fs::write(&p, "time,x,y,z\n0,1,2,3\n0.1,1,2,3\n").unwrap();
        assert!(read_chest_csv(&p).is_err());
    }

    #[test]
    fn bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.bin");
        let ch = |k: f32| (0..WINDOW_LEN).map(|i| ((i as f32) * k).sin()).collect::<Vec<_>>();
        let a = SegmentBundle { subject_id: "s001".into(), segment_id: "s001_0000".into(), ppg: ch(0.01), resp_acc: ch(0.02), resp_gyr: ch(0.03), label_rr: Some(14.5) };
        let mut b = a.clone();
        b.segment_id = "s001_0001".into();
        b.label_rr = None;
        write_bundles(&p, &[a.clone(), b.clone()]).unwrap();
        assert_eq!(read_bundles(&p).unwrap(), vec![a, b]);
    }
}
