//! Binary PGM (`P5`) reading and 16-bit writing.

use std::fs;
use std::path::Path;

use crate::data::IMAGE_SIDE;
use crate::field::RealMap;
use crate::{Error, Result};

/// A decoded grey image; samples are widened to `u16`.
#[derive(Debug, Clone, PartialEq)]
pub struct Pgm {
    pub width: usize,
    pub height: usize,
    pub maxval: u16,
    pub samples: Vec<u16>,
}

fn header_token(bytes: &[u8], pos: &mut usize) -> Result<usize> {
    loop {
        match bytes.get(*pos) {
            Some(b'#') => {
                while bytes.get(*pos).is_some_and(|&b| b != b'\n') {
                    *pos += 1;
                }
            }
            Some(b) if b.is_ascii_whitespace() => *pos += 1,
            Some(_) => break,
            None => return Err(Error::Format("PGM header ends early".into())),
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(u8::is_ascii_digit) {
        *pos += 1;
    }
    std::str::from_utf8(&bytes[start..*pos])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("bad number in PGM header".into()))
}

pub fn parse_pgm(bytes: &[u8]) -> Result<Pgm> {
    if !bytes.starts_with(b"P5") {
        return Err(Error::Format("not a binary PGM (missing P5)".into()));
    }
    let mut pos = 2;
    let width = header_token(bytes, &mut pos)?;
    let height = header_token(bytes, &mut pos)?;
    let maxval = header_token(bytes, &mut pos)?;
    if width == 0 || height == 0 || !(1..=65535).contains(&maxval) {
        return Err(Error::Format(format!(
            "unsupported PGM {width}x{height} maxval {maxval}"
        )));
    }
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(Error::Format("PGM header not terminated".into()));
    }
    pos += 1;
    let wide = maxval > 255;
    let n = width * height;
    let data = &bytes[pos..];
    let expected = if wide { 2 * n } else { n };
    if data.len() < expected {
        return Err(Error::Length {
            expected: pos + expected,
            found: bytes.len(),
        });
    }
    let samples = if wide {
        data[..expected]
            .chunks_exact(2)
            .map(|c| u16::from_be_bytes([c[0], c[1]]))
            .collect()
    } else {
        data[..n].iter().map(|&b| b.into()).collect()
    };
    Ok(Pgm {
        width,
        height,
        maxval: maxval as u16,
        samples,
    })
}

/// Reads an 8-bit 28×28 image, the input format of `predict`.
pub fn read_input_image(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let pgm = parse_pgm(&bytes)?;
    if pgm.width != IMAGE_SIDE || pgm.height != IMAGE_SIDE || pgm.maxval > 255 {
        return Err(Error::Format(format!(
            "{}: expected an 8-bit {IMAGE_SIDE}x{IMAGE_SIDE} image, got {}x{} maxval {}",
            path.display(),
            pgm.width,
            pgm.height,
            pgm.maxval
        )));
    }
    Ok(pgm.samples.iter().map(|&s| s as u8).collect())
}

pub fn encode_pgm8(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

/// Linear map to `0..=65535` with the map maximum at 65535. Negative values
/// clip to 0; an all-zero (or all-nonpositive) map encodes as zeros.
pub fn quantize16(map: &RealMap) -> Vec<u16> {
    let max = map.values().iter().copied().fold(0.0, f64::max);
    if !(max > 0.0) {
        return vec![0; map.values().len()];
    }
    map.values()
        .iter()
        .map(|&v| (v.max(0.0) / max * 65535.0).round() as u16)
        .collect()
}

pub fn encode_pgm16(map: &RealMap) -> Vec<u8> {
    let g = map.geometry();
    let mut out = format!("P5\n{} {}\n65535\n", g.nx, g.ny).into_bytes();
    for s in quantize16(map) {
        out.extend_from_slice(&s.to_be_bytes());
    }
    out
}

pub fn write_pgm16(path: impl AsRef<Path>, map: &RealMap) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_pgm16(map)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::GridGeometry;

    #[test]
    fn sixteen_bit_scaling() {
        let g = GridGeometry::new(3, 2, 1.0).unwrap();
        let map = RealMap::from_values(g, vec![0.0, 1.0, 2.0, 4.0, 0.5, 3.0]).unwrap();
        let pgm = parse_pgm(&encode_pgm16(&map)).unwrap();
        assert_eq!((pgm.width, pgm.height, pgm.maxval), (3, 2, 65535));
        assert_eq!(pgm.samples, vec![0, 16384, 32768, 65535, 8192, 49151]);
    }

    #[test]
    fn zero_map_is_all_zero() {
        let g = GridGeometry::square(4, 1.0).unwrap();
        let map = RealMap::zeros(g).unwrap();
        assert!(parse_pgm(&encode_pgm16(&map))
            .unwrap()
            .samples
            .iter()
            .all(|&s| s == 0));
    }

    #[test]
    fn eight_bit_with_comment() {
        let mut bytes = b"P5\n# made by hand\n2 2\n255\n".to_vec();
        bytes.extend_from_slice(&[0, 10, 200, 255]);
        let pgm = parse_pgm(&bytes).unwrap();
        assert_eq!(pgm.samples, vec![0, 10, 200, 255]);
        assert_eq!(
            parse_pgm(&encode_pgm8(2, 2, &[0, 10, 200, 255])).unwrap(),
            pgm
        );
    }

    #[test]
    fn malformed_inputs() {
        assert!(parse_pgm(b"P2\n2 2\n255\n0000").is_err());
        assert!(parse_pgm(b"P5\n2 2\n255\n000").is_err());
        assert!(parse_pgm(b"P5\n2 2").is_err());
        assert!(parse_pgm(b"P5\n0 2\n255\n").is_err());
    }
}
