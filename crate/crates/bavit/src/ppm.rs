//! Binary PPM (P6) and PGM (P5) image I/O.
//!
//! These two Netpbm formats are all the pipeline needs: P6 carries RGB
//! images, P5 carries grayscale segmentation masks. The writer always emits
//! the canonical `P6\n<w> <h>\n255\n` header; the reader additionally
//! tolerates `#` comments and arbitrary whitespace between header fields,
//! which is as liberal as the format allows. Only maxval 255 is supported.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PpmError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("bad magic {found:?}, expected {expected:?}")]
    BadMagic { expected: String, found: String },
    #[error("malformed header: {0}")]
    Header(String),
    #[error("unsupported maxval {0} (only 255)")]
    UnsupportedMaxval(u32),
    #[error("pixel data truncated: got {got} bytes, expected {expected}")]
    Truncated { got: usize, expected: usize },
}

/// Packed 8-bit RGB image, row-major, three bytes per pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, String> {
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(format!(
                "rgb data has {} bytes, expected {expected}",
                data.len()
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for _ in 0..width as usize * height as usize {
            data.extend_from_slice(&rgb);
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }
}

/// Single-channel 8-bit image; doubles as a segmentation-mask raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GrayImage {
    pub width: u32,
    pub height: u32,
    data: Vec<u8>,
}

impl GrayImage {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, String> {
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(format!(
                "gray data has {} bytes, expected {expected}",
                data.len()
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    pub fn get(&self, x: u32, y: u32) -> u8 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, v: u8) {
        self.data[y as usize * self.width as usize + x as usize] = v;
    }
}

fn write_netpbm<W: Write>(
    w: &mut W,
    magic: &str,
    width: u32,
    height: u32,
    data: &[u8],
) -> Result<(), PpmError> {
    write!(w, "{magic}\n{width} {height}\n255\n")?;
    w.write_all(data)?;
    Ok(())
}

pub fn write_ppm<W: Write>(w: &mut W, image: &RgbImage) -> Result<(), PpmError> {
    write_netpbm(w, "P6", image.width, image.height, &image.data)
}

pub fn write_pgm<W: Write>(w: &mut W, image: &GrayImage) -> Result<(), PpmError> {
    write_netpbm(w, "P5", image.width, image.height, &image.data)
}

pub fn save_ppm<P: AsRef<Path>>(path: P, image: &RgbImage) -> Result<(), PpmError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_ppm(&mut w, image)?;
    w.flush()?;
    Ok(())
}

pub fn save_pgm<P: AsRef<Path>>(path: P, image: &GrayImage) -> Result<(), PpmError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_pgm(&mut w, image)?;
    w.flush()?;
    Ok(())
}

/// Reads one whitespace/comment-separated header token.
fn read_token<R: Read>(r: &mut R) -> Result<String, PpmError> {
    let mut tok = String::new();
    let mut byte = [0u8; 1];
    let mut in_comment = false;
    loop {
        if r.read(&mut byte)? == 0 {
            if tok.is_empty() {
                return Err(PpmError::Header("unexpected end of header".into()));
            }
            return Ok(tok);
        }
        let b = byte[0];
        if in_comment {
            if b == b'\n' {
                in_comment = false;
            }
            continue;
        }
        match b {
            b'#' if tok.is_empty() => in_comment = true,
            b' ' | b'\t' | b'\r' | b'\n' => {
                if !tok.is_empty() {
                    return Ok(tok);
                }
            }
            _ => tok.push(b as char),
        }
    }
}

fn read_header<R: Read>(r: &mut R, magic: &str) -> Result<(u32, u32), PpmError> {
    let found = read_token(r)?;
    if found != magic {
        return Err(PpmError::BadMagic {
            expected: magic.into(),
            found,
        });
    }
    let parse = |tok: String, what: &str| {
        tok.parse::<u32>()
            .map_err(|_| PpmError::Header(format!("bad {what} {tok:?}")))
    };
    let width = parse(read_token(r)?, "width")?;
    let height = parse(read_token(r)?, "height")?;
    let maxval = parse(read_token(r)?, "maxval")?;
    if maxval != 255 {
        return Err(PpmError::UnsupportedMaxval(maxval));
    }
    if width == 0 || height == 0 {
        return Err(PpmError::Header(format!("empty image {width}x{height}")));
    }
    Ok((width, height))
}

fn read_payload<R: Read>(r: &mut R, expected: usize) -> Result<Vec<u8>, PpmError> {
    let mut data = vec![0u8; expected];
    let mut got = 0;
    while got < expected {
        let n = r.read(&mut data[got..])?;
        if n == 0 {
            return Err(PpmError::Truncated { got, expected });
        }
        got += n;
    }
    Ok(data)
}

pub fn read_ppm<R: Read>(r: &mut R) -> Result<RgbImage, PpmError> {
    let (width, height) = read_header(r, "P6")?;
    let data = read_payload(r, width as usize * height as usize * 3)?;
    Ok(RgbImage {
        width,
        height,
        data,
    })
}

pub fn read_pgm<R: Read>(r: &mut R) -> Result<GrayImage, PpmError> {
    let (width, height) = read_header(r, "P5")?;
    let data = read_payload(r, width as usize * height as usize)?;
    Ok(GrayImage {
        width,
        height,
        data,
    })
}

pub fn load_ppm<P: AsRef<Path>>(path: P) -> Result<RgbImage, PpmError> {
    read_ppm(&mut BufReader::new(File::open(path)?))
}

pub fn load_pgm<P: AsRef<Path>>(path: P) -> Result<GrayImage, PpmError> {
    read_pgm(&mut BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let img = RgbImage::new(2, 2, vec![255, 0, 0, 0, 255, 0, 0, 0, 255, 9, 9, 9]).unwrap();
        let mut buf = Vec::new();
        write_ppm(&mut buf, &img).unwrap();
        assert!(buf.starts_with(b"P6\n2 2\n255\n"));
        assert_eq!(buf.len(), 11 + 12);
        let back = read_ppm(&mut buf.as_slice()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn pgm_round_trip() {
        let img = GrayImage::new(3, 1, vec![0, 128, 255]).unwrap();
        let mut buf = Vec::new();
        write_pgm(&mut buf, &img).unwrap();
        let back = read_pgm(&mut buf.as_slice()).unwrap();
        assert_eq!(back, img);
    }

    #[test]
    fn reader_accepts_comments_and_odd_whitespace() {
        let bytes = b"P6 # a comment\n# another line\n  2\t1 \n 255 \x01\x02\x03\x04\x05\x06";
        let img = read_ppm(&mut bytes.as_slice()).unwrap();
        assert_eq!((img.width, img.height), (2, 1));
        assert_eq!(img.data(), &[1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let bytes = b"P5\n1 1\n255\n\x00";
        assert!(matches!(
            read_ppm(&mut bytes.as_slice()),
            Err(PpmError::BadMagic { .. })
        ));
    }

    #[test]
    fn non_255_maxval_is_rejected() {
        let bytes = b"P6\n1 1\n65535\n\x00\x00\x00\x00\x00\x00";
        assert!(matches!(
            read_ppm(&mut bytes.as_slice()),
            Err(PpmError::UnsupportedMaxval(65535))
        ));
    }

    #[test]
    fn truncated_payload_is_rejected() {
        let bytes = b"P6\n2 2\n255\n\x00\x01";
        assert!(matches!(
            read_ppm(&mut bytes.as_slice()),
            Err(PpmError::Truncated {
                got: 2,
                expected: 12
            })
        ));
    }

    #[test]
    fn save_and_load_files() {
        let dir = tempfile::tempdir().unwrap();
        let ppm_path = dir.path().join("x.ppm");
        let img = RgbImage::filled(4, 3, [10, 20, 30]);
        save_ppm(&ppm_path, &img).unwrap();
        assert_eq!(load_ppm(&ppm_path).unwrap(), img);

        let pgm_path = dir.path().join("m.pgm");
        let mask = GrayImage::new(2, 2, vec![0, 1, 2, 3]).unwrap();
        save_pgm(&pgm_path, &mask).unwrap();
        assert_eq!(load_pgm(&pgm_path).unwrap(), mask);
    }
}
