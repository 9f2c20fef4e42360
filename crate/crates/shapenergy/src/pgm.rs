//! Binary graymap (P5) plan images: interior black (0x00), background white (0xFF).

use shapenergy_core::raster::BinaryImage;

const INTERIOR: u8 = 0x00;
const BACKGROUND: u8 = 0xFF;

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("byte {offset}: {kind}")]
pub struct PgmError {
    pub offset: usize,
    pub kind: PgmErrorKind,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum PgmErrorKind {
    #[error("magic is not P5")]
    BadMagic,
    #[error("malformed header")]
    BadHeader,
    #[error("expected {expected_width}x{expected_height} image, found {width}x{height}")]
    Dimensions { expected_width: usize, expected_height: usize, width: usize, height: usize },
    #[error("expected maxval 255, found {0}")]
    MaxVal(u32),
    #[error("payload truncated: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("{0} trailing bytes after the payload")]
    Trailing(usize),
    #[error("pixel value {0:#04x} is neither 0x00 nor 0xFF")]
    BadPixel(u8),
}

pub fn encode_pgm(img: &BinaryImage) -> Vec<u8> {
    let header = format!("P5\n{} {}\n255\n", img.width(), img.height());
    let mut out = Vec::with_capacity(header.len() + img.pixels().len());
    out.extend_from_slice(header.as_bytes());
    out.extend(img.pixels().iter().map(|&p| if p == 1 { INTERIOR } else { BACKGROUND }));
    out
}

/// Reads one whitespace-terminated ASCII decimal starting at `*pos`.
fn header_number(data: &[u8], pos: &mut usize) -> Result<u32, PgmError> {
    let start = *pos;
    while *pos < data.len() && data[*pos].is_ascii_digit() {
        *pos += 1;
    }
    let bad = PgmError { offset: start, kind: PgmErrorKind::BadHeader };
    if *pos == start || *pos >= data.len() || !data[*pos].is_ascii_whitespace() {
        return Err(bad);
    }
    let value = std::str::from_utf8(&data[start..*pos]).ok().and_then(|s| s.parse().ok()).ok_or(bad)?;
    // exactly one separator
    *pos += 1;
    Ok(value)
}

/// Decodes a P5 image that must be `width`×`height`.
pub fn decode_pgm(data: &[u8], width: usize, height: usize) -> Result<BinaryImage, PgmError> {
    if data.len() < 3 || &data[..2] != b"P5" || !data[2].is_ascii_whitespace() {
        return Err(PgmError { offset: 0, kind: PgmErrorKind::BadMagic });
    }
    let mut pos = 3;
    let w = header_number(data, &mut pos)? as usize;
    let h_at = pos;
    let h = header_number(data, &mut pos)? as usize;
    if (w, h) != (width, height) {
        return Err(PgmError {
            offset: h_at,
            kind: PgmErrorKind::Dimensions { expected_width: width, expected_height: height, width: w, height: h },
        });
    }
    let max_at = pos;
    let maxval = header_number(data, &mut pos)?;
    if maxval != 255 {
        return Err(PgmError { offset: max_at, kind: PgmErrorKind::MaxVal(maxval) });
    }
    let payload = &data[pos..];
    let expected = width * height;
    if payload.len() < expected {
        return Err(PgmError {
            offset: data.len(),
            kind: PgmErrorKind::Truncated { expected, found: payload.len() },
        });
    }
    if payload.len() > expected {
        return Err(PgmError { offset: pos + expected, kind: PgmErrorKind::Trailing(payload.len() - expected) });
    }
    let pixels = payload
        .iter()
        .enumerate()
        .map(|(i, &b)| match b {
            INTERIOR => Ok(1),
            BACKGROUND => Ok(0),
            other => Err(PgmError { offset: pos + i, kind: PgmErrorKind::BadPixel(other) }),
        })
        .collect::<Result<Vec<u8>, _>>()?;
    Ok(BinaryImage::from_pixels(width, height, pixels).expect("length and values checked"))
}
