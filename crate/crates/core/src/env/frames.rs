//! On-disk frame sequences: binary PPM (P6) files named `frame_%04d.ppm`
//! next to a `frames.json` manifest. PNG is only produced for transport.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::Frame;

#[derive(Debug, Error)]
pub enum FrameError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: malformed frame manifest: {message}")]
    Manifest { path: PathBuf, message: String },
    #[error("malformed PPM: {0}")]
    Ppm(String),
    #[error("PNG encoding failed: {0}")]
    Png(String),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> FrameError + '_ {
    move |source| FrameError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameManifest {
    pub count: usize,
    pub dt: f64,
    pub width: usize,
    pub height: usize,
}

pub fn frame_file_name(index: usize) -> String {
    format!("frame_{index:04}.ppm")
}

impl Frame {
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }
}

fn ppm_token<'a>(bytes: &'a [u8], pos: &mut usize) -> Result<&'a [u8], FrameError> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(FrameError::Ppm("truncated header".into()));
    }
    Ok(&bytes[start..*pos])
}

fn ppm_number(bytes: &[u8], pos: &mut usize) -> Result<usize, FrameError> {
    let token = ppm_token(bytes, pos)?;
    std::str::from_utf8(token)
        .ok()
        .and_then(|t| t.parse().ok())
        .ok_or_else(|| FrameError::Ppm(format!("bad header field {:?}", String::from_utf8_lossy(token))))
}

pub fn decode_ppm(bytes: &[u8]) -> Result<Frame, FrameError> {
    let mut pos = 0;
    if ppm_token(bytes, &mut pos)? != b"P6" {
        return Err(FrameError::Ppm("expected P6 magic".into()));
    }
    let width = ppm_number(bytes, &mut pos)?;
    let height = ppm_number(bytes, &mut pos)?;
    let maxval = ppm_number(bytes, &mut pos)?;
    if maxval != 255 {
        return Err(FrameError::Ppm(format!("unsupported maxval {maxval}")));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let len = 3 * width * height;
    if bytes.len() < pos + len {
        return Err(FrameError::Ppm(format!(
            "raster truncated: need {len} bytes, have {}",
            bytes.len().saturating_sub(pos)
        )));
    }
    Ok(Frame {
        width,
        height,
        data: bytes[pos..pos + len].to_vec(),
    })
}

pub fn encode_png(frame: &Frame) -> Result<Vec<u8>, FrameError> {
    let mut out = Vec::new();
    {
        let mut encoder = png::Encoder::new(&mut out, frame.width as u32, frame.height as u32);
        encoder.set_color(png::ColorType::Rgb);
        encoder.set_depth(png::BitDepth::Eight);
        let mut writer = encoder
            .write_header()
            .map_err(|e| FrameError::Png(e.to_string()))?;
        writer
            .write_image_data(&frame.data)
            .map_err(|e| FrameError::Png(e.to_string()))?;
    }
    Ok(out)
}

pub fn ppm_to_png(ppm: &[u8]) -> Result<Vec<u8>, FrameError> {
    encode_png(&decode_ppm(ppm)?)
}

/// Writes `frames` into `dir` (created if needed) plus `frames.json`.
pub fn write_frames(frames: &[Frame], dir: &Path, dt: f64) -> Result<FrameManifest, FrameError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    for (i, frame) in frames.iter().enumerate() {
        let path = dir.join(frame_file_name(i));
        fs::write(&path, frame.to_ppm()).map_err(io_err(&path))?;
    }
    let (width, height) = frames.first().map_or((0, 0), |f| (f.width, f.height));
    let manifest = FrameManifest {
        count: frames.len(),
        dt,
        width,
        height,
    };
    let path = dir.join("frames.json");
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, json + "\n").map_err(io_err(&path))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<FrameManifest, FrameError> {
    let path = dir.join("frames.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    serde_json::from_str(&text).map_err(|e| FrameError::Manifest {
        path,
        message: e.to_string(),
    })
}

/// Raw PPM bytes of frame `index` in `dir`.
pub fn read_frame(dir: &Path, index: usize) -> Result<Vec<u8>, FrameError> {
    let path = dir.join(frame_file_name(index));
    fs::read(&path).map_err(io_err(&path))
}

pub fn read_frames(dir: &Path) -> Result<(FrameManifest, Vec<Frame>), FrameError> {
    let manifest = read_manifest(dir)?;
    let frames = (0..manifest.count)
        .map(|i| decode_ppm(&read_frame(dir, i)?))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((manifest, frames))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{render_frame, EnvState};

    #[test]
    fn ppm_round_trip() {
        let frame = render_frame(&EnvState::default(), 32, 20);
        let ppm = frame.to_ppm();
        assert!(ppm.starts_with(b"P6\n32 20\n255\n"));
        assert_eq!(decode_ppm(&ppm).unwrap(), frame);
    }

    #[test]
    fn ppm_with_comment_header() {
        let mut bytes = b"P6 # made by hand\n2 1\n255\n".to_vec();
        bytes.extend_from_slice(&[1, 2, 3, 4, 5, 6]);
        let frame = decode_ppm(&bytes).unwrap();
        assert_eq!(frame.pixel(1, 0), [4, 5, 6]);
        assert!(decode_ppm(b"P6\n2 2\n255\n\x00").is_err());
        assert!(decode_ppm(b"P3\n1 1\n255\n0 0 0").is_err());
    }

    #[test]
    fn png_signature() {
        let png = encode_png(&render_frame(&EnvState::default(), 16, 16)).unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
    }

    #[test]
    fn directory_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let frames: Vec<_> = (0..3)
            .map(|i| {
                render_frame(
                    &EnvState {
                        x: i as f64,
                        ..EnvState::default()
                    },
                    24,
                    16,
                )
            })
            .collect();
        let manifest = write_frames(&frames, dir.path(), 0.05).unwrap();
        assert_eq!(manifest.count, 3);
        assert!(dir.path().join("frame_0002.ppm").exists());
        let (read_back, decoded) = read_frames(dir.path()).unwrap();
        assert_eq!(read_back, manifest);
        assert_eq!(decoded, frames);
    }
}
