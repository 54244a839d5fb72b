//! Disparity raster I/O: PFM, 16-bit PGM and headerless CSV grids.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use roadseg::DisparityImage;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Pfm,
    Pgm,
    Csv,
}

impl Format {
    pub fn from_path(path: &Path) -> Result<Self, FormatError> {
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase();
        ext.parse()
    }

    pub fn extension(self) -> &'static str {
        match self {
            Format::Pfm => "pfm",
            Format::Pgm => "pgm",
            Format::Csv => "csv",
        }
    }
}

impl FromStr for Format {
    type Err = FormatError;

    fn from_str(s: &str) -> Result<Self, FormatError> {
        match s.to_ascii_lowercase().as_str() {
            "pfm" => Ok(Format::Pfm),
            "pgm" => Ok(Format::Pgm),
            "csv" | "txt" => Ok(Format::Csv),
            other => Err(FormatError(format!(
                "unsupported raster format '{other}' (expected pfm, pgm or csv)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FormatError(pub String);

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for FormatError {}

fn err<T>(msg: impl Into<String>) -> Result<T, FormatError> {
    Err(FormatError(msg.into()))
}

/// How stored samples map to disparities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReadOptions {
    /// Values equal to this (after scaling) are invalid. Non-finite values
    /// are always invalid.
    pub invalid_marker: f64,
    /// PGM samples are divided by this.
    pub pgm_scale: f64,
}

impl Default for ReadOptions {
    fn default() -> Self {
        Self { invalid_marker: 0.0, pgm_scale: 1.0 }
    }
}

pub fn decode(bytes: &[u8], format: Format, opts: &ReadOptions) -> Result<DisparityImage, FormatError> {
    let (w, h, values) = match format {
        Format::Pfm => decode_pfm(bytes)?,
        Format::Pgm => {
            if !(opts.pgm_scale > 0.0) {
                return err(format!("pgm scale must be positive, got {}", opts.pgm_scale));
            }
            let (w, h, raw) = decode_pgm(bytes)?;
            (w, h, raw.into_iter().map(|r| r as f64 / opts.pgm_scale).collect())
        }
        Format::Csv => decode_csv(bytes)?,
    };
    DisparityImage::new(w, h, values, opts.invalid_marker).map_err(|e| FormatError(e.to_string()))
}

pub fn read(path: &Path, opts: &ReadOptions) -> Result<DisparityImage, FormatError> {
    let format = Format::from_path(path)?;
    let bytes = std::fs::read(path).map_err(|e| FormatError(format!("cannot read {}: {e}", path.display())))?;
    decode(&bytes, format, opts).map_err(|e| FormatError(format!("{}: {e}", path.display())))
}

/// Serializes a map. Invalid pixels become `+inf` in PFM and the invalid
/// marker elsewhere; PGM samples are `round(d * pgm_scale)` clamped to 16 bits.
pub fn encode(map: &DisparityImage, format: Format, opts: &ReadOptions) -> Vec<u8> {
    match format {
        Format::Pfm => encode_pfm(map),
        Format::Pgm => encode_pgm(map, opts),
        Format::Csv => encode_csv(map, opts.invalid_marker),
    }
}

/// Whitespace-separated header tokens; `#` starts a comment (PGM only).
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    comments: bool,
}

impl<'a> Header<'a> {
    fn token(&mut self) -> Result<&'a str, FormatError> {
        loop {
            while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_whitespace() {
                self.pos += 1;
            }
            if self.comments && self.bytes.get(self.pos) == Some(&b'#') {
                while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                    self.pos += 1;
                }
                continue;
            }
            break;
        }
        let start = self.pos;
        while self.pos < self.bytes.len() && !self.bytes[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
        // every header token is followed by whitespace
        if start == self.pos || self.pos == self.bytes.len() {
            return err("truncated header");
        }
        std::str::from_utf8(&self.bytes[start..self.pos]).or_else(|_| err("header is not ASCII"))
    }

    fn number<T: FromStr>(&mut self, what: &str) -> Result<T, FormatError> {
        let tok = self.token()?;
        tok.parse().or_else(|_| err(format!("bad {what} '{tok}' in header")))
    }

    /// Consumes the single whitespace byte that ends the header.
    fn finish(mut self) -> Result<&'a [u8], FormatError> {
        match self.bytes.get(self.pos) {
            Some(b) if b.is_ascii_whitespace() => self.pos += 1,
            _ => return err("truncated header"),
        }
        Ok(&self.bytes[self.pos..])
    }
}

fn dims(w: usize, h: usize) -> Result<usize, FormatError> {
    if w == 0 || h == 0 {
        return err(format!("zero-sized raster {w}x{h}"));
    }
    w.checked_mul(h).ok_or_else(|| FormatError(format!("raster {w}x{h} too large")))
}

fn decode_pfm(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), FormatError> {
    let mut hdr = Header { bytes, pos: 0, comments: false };
    match hdr.token()? {
        "Pf" => {}
        "PF" => return err("colour PFM (PF) is not a disparity map; expected single-channel Pf"),
        other => return err(format!("not a PFM file (magic '{other}')")),
    }
    let w: usize = hdr.number("width")?;
    let h: usize = hdr.number("height")?;
    let scale: f64 = hdr.number("scale")?;
    if scale == 0.0 || !scale.is_finite() {
        return err("PFM scale must be non-zero");
    }
    let little = scale < 0.0;
    let data = hdr.finish()?;
    let n = dims(w, h)?;
    if data.len() < n * 4 {
        return err(format!("truncated PFM data: {} of {} bytes", data.len(), n * 4));
    }
    // rows are stored bottom to top
    let mut values = vec![0.0; n];
    for (i, chunk) in data[..n * 4].chunks_exact(4).enumerate() {
        let b = [chunk[0], chunk[1], chunk[2], chunk[3]];
        let x = if little { f32::from_le_bytes(b) } else { f32::from_be_bytes(b) };
        let (row, col) = (i / w, i % w);
        values[(h - 1 - row) * w + col] = x as f64;
    }
    Ok((w, h, values))
}

fn encode_pfm(map: &DisparityImage) -> Vec<u8> {
    let (w, h) = (map.width(), map.height());
    let mut out = format!("Pf\n{w} {h}\n-1.0\n").into_bytes();
    out.reserve(w * h * 4);
    for v in (0..h).rev() {
        for u in 0..w {
            let x = map.get(u, v).map_or(f32::INFINITY, |d| d as f32);
            out.extend_from_slice(&x.to_le_bytes());
        }
    }
    out
}

fn decode_pgm(bytes: &[u8]) -> Result<(usize, usize, Vec<u16>), FormatError> {
    let mut hdr = Header { bytes, pos: 0, comments: true };
    match hdr.token()? {
        "P5" => {}
        "P2" => return err("ASCII PGM (P2) is not supported; expected binary P5"),
        other => return err(format!("not a binary PGM file (magic '{other}')")),
    }
    let w: usize = hdr.number("width")?;
    let h: usize = hdr.number("height")?;
    let maxval: u32 = hdr.number("maxval")?;
    if maxval == 0 || maxval > 65535 {
        return err(format!("PGM maxval {maxval} out of range"));
    }
    let data = hdr.finish()?;
    let n = dims(w, h)?;
    let bpp = if maxval > 255 { 2 } else { 1 };
    if data.len() < n * bpp {
        return err(format!("truncated PGM data: {} of {} bytes", data.len(), n * bpp));
    }
    let raw = if bpp == 2 {
        data[..n * 2].chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]])).collect()
    } else {
        data[..n].iter().map(|&b| b as u16).collect()
    };
    Ok((w, h, raw))
}

fn encode_pgm(map: &DisparityImage, opts: &ReadOptions) -> Vec<u8> {
    let (w, h) = (map.width(), map.height());
    let mut out = format!("P5\n{w} {h}\n65535\n").into_bytes();
    let invalid = (opts.invalid_marker * opts.pgm_scale).round().clamp(0.0, 65535.0) as u16;
    for v in 0..h {
        for u in 0..w {
            let s = map.get(u, v).map_or(invalid, |d| (d * opts.pgm_scale).round().clamp(0.0, 65535.0) as u16);
            out.extend_from_slice(&s.to_be_bytes());
        }
    }
    out
}

fn decode_csv(bytes: &[u8]) -> Result<(usize, usize, Vec<f64>), FormatError> {
    let text = std::str::from_utf8(bytes).or_else(|_| err("CSV is not UTF-8"))?;
    let mut width = None;
    let mut values = Vec::new();
    let mut height = 0;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let before = values.len();
        for tok in line.split(|c: char| c == ',' || c == ';' || c.is_whitespace()).filter(|t| !t.is_empty()) {
            let x: f64 = tok
                .parse()
                .or_else(|_| err(format!("line {}: bad number '{tok}'", lineno + 1)))?;
            values.push(x);
        }
        let n = values.len() - before;
        match width {
            None => width = Some(n),
            Some(w) if w != n => return err(format!("line {}: {n} columns, expected {w}", lineno + 1)),
            _ => {}
        }
        height += 1;
    }
    let Some(w) = width else { return err("empty CSV grid") };
    Ok((w, height, values))
}

fn encode_csv(map: &DisparityImage, invalid_marker: f64) -> Vec<u8> {
    let mut out = String::with_capacity(map.width() * map.height() * 8);
    for v in 0..map.height() {
        for u in 0..map.width() {
            if u > 0 {
                out.push(',');
            }
            let d = map.get(u, v).unwrap_or(invalid_marker);
            out.push_str(&d.to_string());
        }
        out.push('\n');
    }
    out.into_bytes()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> DisparityImage {
        let values = vec![1.5, 0.0, 3.25, 4.0, 5.75, 6.0];
        DisparityImage::new(3, 2, values, 0.0).unwrap()
    }

    #[test]
    fn format_from_extension() {
        assert_eq!(Format::from_path(Path::new("a/b.PFM")).unwrap(), Format::Pfm);
        assert_eq!(Format::from_path(Path::new("x.txt")).unwrap(), Format::Csv);
        assert!(Format::from_path(Path::new("x.png")).is_err());
        assert!(Format::from_path(Path::new("noext")).is_err());
    }

    #[test]
    fn round_trips() {
        let map = sample();
        let opts = ReadOptions { pgm_scale: 4.0, ..ReadOptions::default() };
        for f in [Format::Pfm, Format::Pgm, Format::Csv] {
            let back = decode(&encode(&map, f, &opts), f, &opts).unwrap();
            assert_eq!(back, map, "{f:?}");
        }
    }

    #[test]
    fn pfm_is_bottom_up_and_honours_endianness() {
        let mut be = b"Pf\n2 2\n1.0\n".to_vec();
        for x in [1.0f32, 2.0, 3.0, 4.0] {
            be.extend_from_slice(&x.to_be_bytes());
        }
        let map = decode(&be, Format::Pfm, &ReadOptions::default()).unwrap();
        assert_eq!(map.values(), &[3.0, 4.0, 1.0, 2.0]);

        let mut le = b"Pf\n2 2\n-1.0\n".to_vec();
        for x in [1.0f32, 2.0, 3.0, f32::NAN] {
            le.extend_from_slice(&x.to_le_bytes());
        }
        let map = decode(&le, Format::Pfm, &ReadOptions::default()).unwrap();
        assert_eq!(map.get(0, 0), Some(3.0));
        assert_eq!(map.get(1, 0), None);
    }

    #[test]
    fn pgm_scale_and_comments() {
        let mut bytes = b"P5\n# disparity * 256\n2 1\n65535\n".to_vec();
        bytes.extend_from_slice(&512u16.to_be_bytes());
        bytes.extend_from_slice(&0u16.to_be_bytes());
        let opts = ReadOptions { pgm_scale: 256.0, ..ReadOptions::default() };
        let map = decode(&bytes, Format::Pgm, &opts).unwrap();
        assert_eq!(map.get(0, 0), Some(2.0));
        assert_eq!(map.get(1, 0), None);
    }

    #[test]
    fn eight_bit_pgm() {
        let bytes = b"P5 3 1 255\n\x01\x02\x03".to_vec();
        let map = decode(&bytes, Format::Pgm, &ReadOptions::default()).unwrap();
        assert_eq!(map.values(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn custom_invalid_marker() {
        let opts = ReadOptions { invalid_marker: -1.0, ..ReadOptions::default() };
        let map = decode(b"0,-1\n2,nan\n", Format::Csv, &opts).unwrap();
        assert_eq!(map.get(0, 0), Some(0.0));
        assert_eq!(map.valid_count(), 2);
    }

    #[test]
    fn truncation_is_diagnosed() {
        let full = encode(&sample(), Format::Pfm, &ReadOptions::default());
        for cut in [0, 3, 8, full.len() - 1] {
            let e = decode(&full[..cut], Format::Pfm, &ReadOptions::default()).unwrap_err();
            assert!(e.0.contains("truncated") || e.0.contains("magic"), "{cut}: {e}");
        }
        let full = encode(&sample(), Format::Pgm, &ReadOptions::default());
        assert!(decode(&full[..full.len() - 1], Format::Pgm, &ReadOptions::default()).is_err());
    }

    #[test]
    fn rejects_ragged_and_foreign_input() {
        assert!(decode(b"1,2\n3\n", Format::Csv, &ReadOptions::default()).is_err());
        assert!(decode(b"", Format::Csv, &ReadOptions::default()).is_err());
        assert!(decode(b"PF\n1 1\n-1\n\0\0\0\0", Format::Pfm, &ReadOptions::default()).is_err());
        assert!(decode(b"\x89PNG\r\n", Format::Pgm, &ReadOptions::default()).is_err());
    }
}
