//! On-disk formats: signal files, dataset bundles, CAV vectors, and atomic
//! writes with checksums.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::cav::Cav;
use crate::config::Provenance;
use crate::error::{Error, Result};
use crate::training::{Dataset, FaultType, Segment, SegmentMeta};
use crate::vibration_sim::Signal;

pub const SIGNAL_MAGIC: &[u8; 8] = b"VIBSIG01";
pub const DATASET_MAGIC: &[u8; 8] = b"VIBDSET1";
pub const CAV_MAGIC: &[u8; 8] = b"VIBCAV01";
pub const DATASET_SCHEMA_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes `bytes` to a sibling temporary file and renames it into place,
/// creating parent directories as needed.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    let name = path
        .file_name()
        .ok_or_else(|| Error::config(format!("{} is not a file path", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(format!(".tmp{}", std::process::id()));
    let tmp = path.with_file_name(tmp_name);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| {
        let _ = fs::remove_file(&tmp);
        Error::io(path, e)
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|e| {
        let offset = line_col_offset(&bytes, e.line(), e.column());
        Error::parse(path, offset, e.to_string())
    })
}

fn line_col_offset(bytes: &[u8], line: usize, column: usize) -> u64 {
    let mut offset = 0usize;
    for _ in 1..line {
        match bytes[offset..].iter().position(|&b| b == b'\n') {
            Some(p) => offset += p + 1,
            None => break,
        }
    }
    (offset + column.saturating_sub(1)).min(bytes.len()) as u64
}

/// One sample per line with 17 significant digits, preceded by a `sample`
/// header line.
pub fn signal_to_csv(samples: &[f64]) -> String {
    let mut out = String::with_capacity(samples.len() * 24 + 8);
    out.push_str("sample\n");
    for v in samples {
        out.push_str(&format!("{v:.16e}\n"));
    }
    out
}

/// Parses one sample per line. A non-numeric first line is taken as a
/// header; blank lines are skipped.
pub fn parse_signal_csv(bytes: &[u8], origin: &Path) -> Result<Vec<f64>> {
    let text = std::str::from_utf8(bytes).map_err(|e| Error::parse(origin, e.valid_up_to() as u64, "file is not valid UTF-8"))?;
    let mut samples = Vec::new();
    let mut offset = 0usize;
    for (i, raw) in text.split_inclusive('\n').enumerate() {
        let line = raw.trim();
        let field = line.split(',').next().unwrap_or("").trim();
        if !field.is_empty() {
            match field.parse::<f64>() {
                Ok(v) if v.is_finite() => samples.push(v),
                Ok(_) => return Err(Error::parse(origin, offset as u64, format!("non-finite sample {field:?}"))),
                Err(_) if i == 0 => {}
                Err(_) => return Err(Error::parse(origin, offset as u64, format!("invalid sample {field:?}"))),
            }
        }
        offset += raw.len();
    }
    Ok(samples)
}

/// Binary signal: magic, u32 sample count, f64 sample rate, f32 samples,
/// all little-endian. Samples are quantized to 32 bits.
pub fn signal_to_binary(signal: &Signal) -> Result<Vec<u8>> {
    let count = u32::try_from(signal.samples.len()).map_err(|_| Error::domain("signal too long for the binary format"))?;
    let mut out = Vec::with_capacity(20 + 4 * signal.samples.len());
    out.extend_from_slice(SIGNAL_MAGIC);
    out.extend_from_slice(&count.to_le_bytes());
    out.extend_from_slice(&signal.sample_rate.to_le_bytes());
    for &v in &signal.samples {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8], origin: &'a Path) -> Self {
        Self { bytes, pos: 0, origin }
    }

    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::parse(
                self.origin,
                self.pos as u64,
                format!("truncated {what}: need {n} bytes, {} left", self.bytes.len() - self.pos),
            ));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn magic(&mut self, expected: &[u8; 8]) -> Result<()> {
        let m = self.take(8, "magic")?;
        if m != expected {
            return Err(Error::parse(self.origin, 0, format!("bad magic, expected {:?}", String::from_utf8_lossy(expected))));
        }
        Ok(())
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &str) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn finish(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::parse(
                self.origin,
                self.pos as u64,
                format!("{} trailing bytes", self.bytes.len() - self.pos),
            ));
        }
        Ok(())
    }
}

pub fn parse_signal_binary(bytes: &[u8], origin: &Path) -> Result<Signal> {
    let mut c = Cursor::new(bytes, origin);
    c.magic(SIGNAL_MAGIC)?;
    let count = c.u32("sample count")? as usize;
    let rate_at = c.pos;
    let sample_rate = c.f64("sample rate")?;
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::parse(origin, rate_at as u64, format!("sample rate {sample_rate} must be positive")));
    }
    let data = c.take(4 * count, "sample payload")?;
    c.finish()?;
    let samples = data
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes(b.try_into().unwrap()) as f64)
        .collect();
    Signal::new(samples, sample_rate)
}

/// Reads a signal file, detecting the binary format by its magic. CSV files
/// carry no sample rate, so `csv_sample_rate` is used for them.
pub fn read_signal(path: &Path, csv_sample_rate: f64) -> Result<Signal> {
    let bytes = read_bytes(path)?;
    if bytes.starts_with(SIGNAL_MAGIC) {
        parse_signal_binary(&bytes, path)
    } else {
        let samples = parse_signal_csv(&bytes, path)?;
        if samples.is_empty() {
            return Err(Error::parse(path, 0, "no samples"));
        }
        Signal::new(samples, csv_sample_rate)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct DatasetHeader {
    schema_version: u32,
    segment_length: usize,
    sample_rate: f64,
    segments: Vec<SegmentHeader>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct SegmentHeader {
    label: usize,
    fault_type: FaultType,
    rotation_speed_rpm: f64,
    source: String,
}

/// Dataset bundle: magic, u32 header length, JSON header with per-segment
/// metadata, then every segment's samples as little-endian f64.
pub fn dataset_to_bytes(data: &Dataset) -> Result<Vec<u8>> {
    let header = DatasetHeader {
        schema_version: DATASET_SCHEMA_VERSION,
        segment_length: data.segment_length,
        sample_rate: data.sample_rate,
        segments: data
            .segments
            .iter()
            .map(|s| SegmentHeader {
                label: s.label,
                fault_type: s.meta.fault_type,
                rotation_speed_rpm: s.meta.rotation_speed_rpm,
                source: s.meta.source.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header)?;
    let len = u32::try_from(json.len()).map_err(|_| Error::domain("dataset header too large"))?;
    let mut out = Vec::with_capacity(12 + json.len() + 8 * data.len() * data.segment_length);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(&json);
    for s in &data.segments {
        for v in &s.samples {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

pub fn dataset_from_bytes(bytes: &[u8], origin: &Path) -> Result<Dataset> {
    let mut c = Cursor::new(bytes, origin);
    c.magic(DATASET_MAGIC)?;
    let len = c.u32("header length")? as usize;
    let header_at = c.pos;
    let header: DatasetHeader = serde_json::from_slice(c.take(len, "header")?)
        .map_err(|e| Error::parse(origin, (header_at + e.column().saturating_sub(1)) as u64, e.to_string()))?;
    if header.schema_version != DATASET_SCHEMA_VERSION {
        return Err(Error::Version(format!(
            "{}: dataset schema {} (supported: {DATASET_SCHEMA_VERSION})",
            origin.display(),
            header.schema_version
        )));
    }
    let mut segments = Vec::with_capacity(header.segments.len());
    for h in header.segments {
        let raw = c.take(8 * header.segment_length, "segment payload")?;
        segments.push(Segment {
            samples: raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().unwrap())).collect(),
            label: h.label,
            meta: SegmentMeta {
                rotation_speed_rpm: h.rotation_speed_rpm,
                fault_type: h.fault_type,
                source: h.source,
            },
        });
    }
    c.finish()?;
    Dataset::new(header.segment_length, header.sample_rate, segments)
}

pub fn write_dataset(path: &Path, data: &Dataset) -> Result<String> {
    let bytes = dataset_to_bytes(data)?;
    write_atomic(path, &bytes)?;
    Ok(sha256_hex(&bytes))
}

pub fn read_dataset(path: &Path) -> Result<Dataset> {
    dataset_from_bytes(&read_bytes(path)?, path)
}

/// JSON side of a stored CAV; the direction lives in a binary sibling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CavRecord {
    pub provenance: Provenance,
    pub layer: usize,
    pub probe_accuracy: f64,
    pub bias: f64,
    pub dimension: usize,
    pub direction_file: String,
    pub direction_sha256: String,
}

pub fn cav_direction_to_bytes(direction: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(12 + 8 * direction.len());
    out.extend_from_slice(CAV_MAGIC);
    out.extend_from_slice(&(direction.len() as u32).to_le_bytes());
    for v in direction {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn cav_direction_from_bytes(bytes: &[u8], origin: &Path) -> Result<Vec<f64>> {
    let mut c = Cursor::new(bytes, origin);
    c.magic(CAV_MAGIC)?;
    let n = c.u32("dimension")? as usize;
    let mut v = Vec::with_capacity(n);
    for _ in 0..n {
        v.push(c.f64("direction")?);
    }
    c.finish()?;
    Ok(v)
}

/// Writes `<stem>.json` and `<stem>.bin` into `dir`.
pub fn write_cav(dir: &Path, stem: &str, cav: &Cav, provenance: &Provenance) -> Result<PathBuf> {
    let bin = cav_direction_to_bytes(&cav.direction);
    let bin_name = format!("{stem}.bin");
    write_atomic(&dir.join(&bin_name), &bin)?;
    let record = CavRecord {
        provenance: provenance.clone(),
        layer: cav.layer,
        probe_accuracy: cav.probe_accuracy,
        bias: cav.bias,
        dimension: cav.direction.len(),
        direction_file: bin_name,
        direction_sha256: sha256_hex(&bin),
    };
    let json = dir.join(format!("{stem}.json"));
    write_json(&json, &record)?;
    Ok(json)
}

pub fn read_cav(json_path: &Path) -> Result<Cav> {
    let record: CavRecord = read_json(json_path)?;
    let bin_path = json_path.with_file_name(&record.direction_file);
    let direction = cav_direction_from_bytes(&read_bytes(&bin_path)?, &bin_path)?;
    if direction.len() != record.dimension {
        return Err(Error::parse(&bin_path, 8, "direction length disagrees with its record"));
    }
    Ok(Cav {
        layer: record.layer,
        direction,
        probe_accuracy: record.probe_accuracy,
        bias: record.bias,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn p() -> &'static Path {
        Path::new("mem")
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let v = vec![0.1, -1.0 / 3.0, 1e-300, 123456.789, f64::MIN_POSITIVE, -0.0];
        let text = signal_to_csv(&v);
        assert_eq!(parse_signal_csv(text.as_bytes(), p()).unwrap(), v);
    }

    #[test]
    fn csv_without_header_and_with_blank_lines() {
        assert_eq!(parse_signal_csv(b"1\n\n2.5\r\n-3\n", p()).unwrap(), vec![1.0, 2.5, -3.0]);
        assert_eq!(parse_signal_csv(b"time,value\n", p()).unwrap(), Vec::<f64>::new());
    }

    #[test]
    fn csv_error_reports_offset() {
        match parse_signal_csv(b"sample\n1.0\nabc\n", Path::new("x.csv")) {
            Err(Error::Parse { offset, path, .. }) => {
                assert_eq!(offset, 11);
                assert_eq!(path, Path::new("x.csv"));
            }
            other => panic!("{other:?}"),
        }
        assert!(parse_signal_csv(b"1\nNaN\n", p()).is_err());
    }

    #[test]
    fn binary_round_trip_quantizes_to_f32() {
        let s = Signal::new(vec![0.1, -2.5, 3.0], 12_000.0).unwrap();
        let bytes = signal_to_binary(&s).unwrap();
        assert_eq!(bytes.len(), 8 + 4 + 8 + 12);
        let back = parse_signal_binary(&bytes, p()).unwrap();
        assert_eq!(back.sample_rate, 12_000.0);
        assert_eq!(back.samples, vec![0.1f32 as f64, -2.5, 3.0]);
    }

    #[test]
    fn binary_rejects_bad_input() {
        let s = Signal::new(vec![1.0; 4], 100.0).unwrap();
        let bytes = signal_to_binary(&s).unwrap();
        match parse_signal_binary(&bytes[..bytes.len() - 2], p()) {
            Err(Error::Parse { offset, .. }) => assert_eq!(offset, 20),
            other => panic!("{other:?}"),
        }
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(parse_signal_binary(&extra, p()).is_err());
        let mut bad_rate = bytes.clone();
        bad_rate[12..20].copy_from_slice(&0.0f64.to_le_bytes());
        assert!(matches!(parse_signal_binary(&bad_rate, p()), Err(Error::Parse { offset: 12, .. })));
        assert!(matches!(parse_signal_binary(b"NOTMAGIC", p()), Err(Error::Parse { offset: 0, .. })));
    }

    fn tiny_dataset() -> Dataset {
        let seg = |v: f64, fault: FaultType| Segment {
            samples: vec![v, -v, 0.5],
            label: fault.label(),
            meta: SegmentMeta {
                rotation_speed_rpm: 1797.0,
                fault_type: fault,
                source: "a.csv".into(),
            },
        };
        Dataset::new(3, 12_000.0, vec![seg(1.0, FaultType::Inner), seg(0.25, FaultType::Healthy)]).unwrap()
    }

    #[test]
    fn dataset_round_trip() {
        let d = tiny_dataset();
        let bytes = dataset_to_bytes(&d).unwrap();
        assert_eq!(dataset_from_bytes(&bytes, p()).unwrap(), d);
        assert!(matches!(dataset_from_bytes(&bytes[..bytes.len() - 1], p()), Err(Error::Parse { .. })));
    }

    #[test]
    fn dataset_version_check() {
        let d = tiny_dataset();
        let mut bytes = dataset_to_bytes(&d).unwrap();
        let needle = b"\"schema_version\":1";
        let at = bytes.windows(needle.len()).position(|w| w == needle).unwrap();
        bytes[at + needle.len() - 1] = b'9';
        assert!(matches!(dataset_from_bytes(&bytes, p()), Err(Error::Version(_))));
    }

    #[test]
    fn atomic_write_and_cav_files() {
        let dir = tempfile::tempdir().unwrap();
        let nested = dir.path().join("a/b/c.txt");
        write_atomic(&nested, b"hello").unwrap();
        assert_eq!(fs::read(&nested).unwrap(), b"hello");
        assert_eq!(fs::read_dir(nested.parent().unwrap()).unwrap().count(), 1);

        let cav = Cav {
            layer: 7,
            direction: vec![0.6, -0.8],
            probe_accuracy: 0.9,
            bias: 0.25,
        };
        let prov = Provenance {
            tool: "t".into(),
            tool_version: "0".into(),
            schema_version: 1,
            config_hash: "h".into(),
        };
        let json = write_cav(dir.path(), "cav-0", &cav, &prov).unwrap();
        assert_eq!(read_cav(&json).unwrap(), cav);
    }

    #[test]
    fn json_parse_error_has_offset() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        fs::write(&path, "{\n  \"layer\": oops\n}").unwrap();
        match read_json::<CavRecord>(&path) {
            Err(Error::Parse { offset, .. }) => assert!((12..=16).contains(&offset), "{offset}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn checksum_known_value() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }

    proptest! {
        #[test]
        fn csv_round_trip_any(v in proptest::collection::vec(-1e12f64..1e12, 0..64)) {
            prop_assert_eq!(parse_signal_csv(signal_to_csv(&v).as_bytes(), p()).unwrap(), v);
        }

        #[test]
        fn binary_round_trip_any(v in proptest::collection::vec(-1e6f64..1e6, 1..64)) {
            let s = Signal::new(v.clone(), 1000.0).unwrap();
            let back = parse_signal_binary(&signal_to_binary(&s).unwrap(), p()).unwrap();
            let expect: Vec<f64> = v.iter().map(|x| *x as f32 as f64).collect();
            prop_assert_eq!(back.samples, expect);
        }
    }
}
