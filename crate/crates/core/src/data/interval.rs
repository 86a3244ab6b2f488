//! Interval files in two encodings.
//!
//! Binary (little-endian):
//!
//! ```text
//! magic            16 bytes  "ZSMSTM-INTERVAL\x01"
//! speaker_len      u32, then UTF-8 bytes
//! fps              f64
//! W d_text n_mels T J   u32 each
//! text vectors     W·d_text f64
//! mel segments     W × (u32 T_w, T_w·n_mels f64)
//! pose             T·2J f64
//! alignment        W × (u32 start, u32 end)
//! ```
//!
//! CSV: a `#zsmstm-interval,1` line, `speaker`, `fps` and `dims` records, then
//! `[text]`, `[mel],<word>,<T_w>`, `[pose]` and `[alignment]` sections. Floats
//! use Rust's shortest round-trip formatting, so both encodings are lossless.

use std::fmt::Write as _;
use std::path::Path;

use crate::data::sample::{Sample, Span, WordFeature};
use crate::error::{Error, Result};
use crate::tensor::Matrix;

pub const MAGIC: [u8; 16] = *b"ZSMSTM-INTERVAL\x01";
const CSV_TAG: &str = "#zsmstm-interval,1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalFormat {
    Binary,
    Csv,
}

impl IntervalFormat {
    pub fn extension(self) -> &'static str {
        match self {
            IntervalFormat::Binary => "zsi",
            IntervalFormat::Csv => "csv",
        }
    }
}

pub fn encode_binary(s: &Sample) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    put_u32(&mut out, s.speaker_id.len());
    out.extend_from_slice(s.speaker_id.as_bytes());
    out.extend_from_slice(&s.fps.to_le_bytes());
    for v in [s.word_count(), s.d_text(), s.n_mels(), s.frames(), s.joints()] {
        put_u32(&mut out, v);
    }
    for w in &s.words {
        put_f64s(&mut out, &w.text_vec);
    }
    for w in &s.words {
        put_u32(&mut out, w.mel.rows());
        put_f64s(&mut out, w.mel.as_slice());
    }
    put_f64s(&mut out, s.pose.as_slice());
    for span in &s.alignment {
        put_u32(&mut out, span.start);
        put_u32(&mut out, span.end);
    }
    out
}

fn put_u32(out: &mut Vec<u8>, v: usize) {
    out.extend_from_slice(&(v as u32).to_le_bytes());
}

fn put_f64s(out: &mut Vec<u8>, vs: &[f64]) {
    for v in vs {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::MalformedInterval(format!("truncated at byte {}", self.pos)));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let bytes = self.take(n.checked_mul(8).ok_or_else(|| Error::MalformedInterval("size overflow".into()))?)?;
        Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}

/// Decodes the binary layout. Structural invariants are checked separately.
pub fn decode_binary(buf: &[u8]) -> Result<Sample> {
    if buf.len() < MAGIC.len() || buf[..MAGIC.len()] != MAGIC {
        return Err(Error::MalformedInterval("bad magic header".into()));
    }
    let mut r = Reader { buf, pos: MAGIC.len() };
    let name_len = r.u32()?;
    let speaker_id = String::from_utf8(r.take(name_len)?.to_vec())
        .map_err(|_| Error::MalformedInterval("speaker id is not UTF-8".into()))?;
    let fps = r.f64()?;
    let (words, d_text, n_mels, frames, joints) = (r.u32()?, r.u32()?, r.u32()?, r.u32()?, r.u32()?);
    let texts = (0..words).map(|_| r.f64s(d_text)).collect::<Result<Vec<_>>>()?;
    let mut mels = Vec::with_capacity(words);
    for _ in 0..words {
        let rows = r.u32()?;
        mels.push(Matrix::from_vec(rows, n_mels, r.f64s(rows * n_mels)?));
    }
    let pose = Matrix::from_vec(frames, 2 * joints, r.f64s(frames * 2 * joints)?);
    let alignment = (0..words)
        .map(|_| Ok(Span::new(r.u32()?, r.u32()?)))
        .collect::<Result<Vec<_>>>()?;
    if r.pos != buf.len() {
        return Err(Error::MalformedInterval(format!("{} trailing bytes", buf.len() - r.pos)));
    }
    Ok(Sample {
        speaker_id,
        words: texts.into_iter().zip(mels).map(|(text_vec, mel)| WordFeature { text_vec, mel }).collect(),
        pose,
        alignment,
        fps,
    })
}

fn join_row(out: &mut String, row: &[f64]) {
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        write!(out, "{v:?}").unwrap();
    }
    out.push('\n');
}

pub fn encode_csv(s: &Sample) -> String {
    let mut out = String::new();
    writeln!(out, "{CSV_TAG}").unwrap();
    writeln!(out, "speaker,{}", s.speaker_id).unwrap();
    writeln!(out, "fps,{:?}", s.fps).unwrap();
    writeln!(out, "dims,{},{},{},{},{}", s.word_count(), s.d_text(), s.n_mels(), s.frames(), s.joints()).unwrap();
    out.push_str("[text]\n");
    for w in &s.words {
        join_row(&mut out, &w.text_vec);
    }
    for (i, w) in s.words.iter().enumerate() {
        writeln!(out, "[mel],{i},{}", w.mel.rows()).unwrap();
        for row in w.mel.iter_rows() {
            join_row(&mut out, row);
        }
    }
    out.push_str("[pose]\n");
    for row in s.pose.iter_rows() {
        join_row(&mut out, row);
    }
    out.push_str("[alignment]\n");
    for span in &s.alignment {
        writeln!(out, "{},{}", span.start, span.end).unwrap();
    }
    out
}

struct CsvLines<'a> {
    items: Vec<(usize, &'a str)>,
    pos: usize,
}

impl<'a> CsvLines<'a> {
    fn bad(line: usize, msg: &str) -> Error {
        Error::MalformedInterval(format!("line {}: {msg}", line + 1))
    }

    fn next(&mut self, what: &str) -> Result<(usize, &'a str)> {
        let item = self
            .items
            .get(self.pos)
            .copied()
            .ok_or_else(|| Error::MalformedInterval(format!("unexpected end of file, expected {what}")))?;
        self.pos += 1;
        Ok(item)
    }

    fn rows(&mut self, count: usize, width: usize, section: &str) -> Result<Vec<Vec<f64>>> {
        (0..count)
            .map(|_| {
                let (ln, l) = self.next(section)?;
                let row = l
                    .split(',')
                    .map(|v| v.trim().parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|_| Self::bad(ln, &format!("bad number in {section}")))?;
                if row.len() != width {
                    return Err(Error::DimensionMismatch(format!(
                        "line {}: {section} row has {} values, expected {width}",
                        ln + 1,
                        row.len()
                    )));
                }
                Ok(row)
            })
            .collect()
    }

    fn section(&mut self, name: &str) -> Result<Vec<&'a str>> {
        let (ln, l) = self.next(name)?;
        let parts: Vec<&str> = l.split(',').map(str::trim).collect();
        if parts[0] != name {
            return Err(Self::bad(ln, &format!("expected {name}, found {}", parts[0])));
        }
        Ok(parts)
    }
}

pub fn decode_csv(text: &str) -> Result<Sample> {
    let mut lines = CsvLines {
        items: text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()).collect(),
        pos: 0,
    };
    let bad = CsvLines::bad;

    let (ln, tag) = lines.next("header")?;
    if tag.trim() != CSV_TAG {
        return Err(bad(ln, "missing #zsmstm-interval header"));
    }
    let (ln, speaker) = lines.next("speaker")?;
    let speaker_id = speaker
        .strip_prefix("speaker,")
        .ok_or_else(|| bad(ln, "expected speaker,<id>"))?
        .to_string();
    let (ln, fps_line) = lines.next("fps")?;
    let fps: f64 = fps_line
        .strip_prefix("fps,")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| bad(ln, "expected fps,<value>"))?;
    let (ln, dims_line) = lines.next("dims")?;
    let dims: Vec<usize> = dims_line
        .strip_prefix("dims,")
        .and_then(|d| d.split(',').map(|v| v.trim().parse()).collect::<std::result::Result<Vec<_>, _>>().ok())
        .filter(|d| d.len() == 5)
        .ok_or_else(|| bad(ln, "expected dims,W,d_text,n_mels,T,J"))?;
    let (words, d_text, n_mels, frames, joints) = (dims[0], dims[1], dims[2], dims[3], dims[4]);

    lines.section("[text]")?;
    let texts = lines.rows(words, d_text, "text")?;
    let mut mels = Vec::with_capacity(words);
    for i in 0..words {
        let head = lines.section("[mel]")?;
        let idx: usize = head.get(1).and_then(|v| v.parse().ok()).unwrap_or(usize::MAX);
        let rows: usize = head
            .get(2)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::MalformedInterval(format!("mel section {i} lacks a frame count")))?;
        if idx != i {
            return Err(Error::MalformedInterval(format!("mel section {idx} out of order, expected {i}")));
        }
        let data = lines.rows(rows, n_mels, "mel")?;
        mels.push(if rows == 0 { Matrix::zeros(0, n_mels) } else { Matrix::from_rows(&data) });
    }
    lines.section("[pose]")?;
    let pose_rows = lines.rows(frames, 2 * joints, "pose")?;
    lines.section("[alignment]")?;
    let mut alignment = Vec::with_capacity(words);
    for _ in 0..words {
        let (ln, l) = lines.next("alignment")?;
        let (a, b) = l.split_once(',').ok_or_else(|| bad(ln, "expected start,end"))?;
        let start = a.trim().parse().map_err(|_| bad(ln, "bad span start"))?;
        let end = b.trim().parse().map_err(|_| bad(ln, "bad span end"))?;
        alignment.push(Span::new(start, end));
    }
    if let Ok((ln, _)) = lines.next("end") {
        return Err(bad(ln, "trailing content"));
    }
    Ok(Sample {
        speaker_id,
        words: texts.into_iter().zip(mels).map(|(text_vec, mel)| WordFeature { text_vec, mel }).collect(),
        pose: if frames == 0 { Matrix::zeros(0, 2 * joints) } else { Matrix::from_rows(&pose_rows) },
        alignment,
        fps,
    })
}

/// Detects the encoding from the leading bytes.
pub fn decode(bytes: &[u8]) -> Result<Sample> {
    if bytes.starts_with(&MAGIC) {
        decode_binary(bytes)
    } else {
        let text = std::str::from_utf8(bytes)
            .map_err(|_| Error::MalformedInterval("neither binary interval nor UTF-8 CSV".into()))?;
        decode_csv(text)
    }
}

pub fn write_interval(s: &Sample, path: &Path, format: IntervalFormat) -> Result<()> {
    if s.speaker_id.contains([',', '\t', '\n', '\r']) {
        return Err(Error::MalformedInterval(format!("speaker id {:?} contains a separator", s.speaker_id)));
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let bytes = match format {
        IntervalFormat::Binary => encode_binary(s),
        IntervalFormat::Csv => encode_csv(s).into_bytes(),
    };
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Reads either encoding without validating invariants.
pub fn read_interval(path: &Path) -> Result<Sample> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Sample {
        Sample {
            speaker_id: "Shelly".into(),
            words: vec![
                WordFeature { text_vec: vec![0.1, -2.5, 1e-300], mel: Matrix::from_fn(3, 4, |r, c| (r * 4 + c) as f64 / 7.0) },
                WordFeature { text_vec: vec![f64::MIN_POSITIVE, 3.0, -0.0], mel: Matrix::from_fn(2, 4, |r, c| -(r as f64) * 0.3 + c as f64) },
            ],
            pose: Matrix::from_fn(5, 4, |r, c| 0.5 + 0.01 * (r * c) as f64 / 3.0),
            alignment: vec![Span::new(0, 2), Span::new(2, 5)],
            fps: 15.0,
        }
    }

    #[test]
    fn binary_round_trip_is_bit_exact() {
        let s = sample();
        let bytes = encode_binary(&s);
        assert_eq!(&bytes[..16], &MAGIC);
        let back = decode(&bytes).unwrap();
        assert_eq!(encode_binary(&back), bytes);
        assert_eq!(back, s);
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        let s = sample();
        let text = encode_csv(&s);
        let back = decode(text.as_bytes()).unwrap();
        assert_eq!(encode_binary(&back), encode_binary(&s));
    }

    #[test]
    fn truncated_binary_is_malformed() {
        let bytes = encode_binary(&sample());
        assert!(matches!(decode(&bytes[..bytes.len() - 3]), Err(Error::MalformedInterval(_))));
    }

    #[test]
    fn csv_wrong_width_is_dimension_mismatch() {
        let text = encode_csv(&sample()).replacen("0.1,-2.5,1e-300", "0.1,-2.5", 1);
        assert!(matches!(decode(text.as_bytes()), Err(Error::DimensionMismatch(_))));
    }
}
