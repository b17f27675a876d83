use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// An 8-bit image stored row-major with interleaved channels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Image {
    width: usize,
    height: usize,
    channels: usize,
    pixels: Vec<u8>,
}

impl Image {
    pub fn new(width: usize, height: usize, channels: usize, pixels: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("image dimensions must be positive".into()));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        if pixels.len() != width * height * channels {
            return Err(Error::InvalidInput(format!(
                "{width}x{height}x{channels} image needs {} bytes, got {}",
                width * height * channels,
                pixels.len()
            )));
        }
        Ok(Self {
            width,
            height,
            channels,
            pixels,
        })
    }

    pub fn filled(width: usize, height: usize, channels: usize, value: u8) -> Result<Self> {
        Self::new(width, height, channels, vec![value; width * height * channels])
    }

    /// Builds an image from channel-planar bytes (all of channel 0, then 1, ...).
    pub fn from_planar(width: usize, height: usize, channels: usize, planar: &[u8]) -> Result<Self> {
        let plane = width * height;
        if planar.len() != plane * channels {
            return Err(Error::InvalidInput("planar buffer has the wrong length".into()));
        }
        let mut pixels = vec![0u8; planar.len()];
        for c in 0..channels {
            for i in 0..plane {
                pixels[i * channels + c] = planar[c * plane + i];
            }
        }
        Self::new(width, height, channels, pixels)
    }

    pub fn to_planar(&self) -> Vec<u8> {
        let plane = self.width * self.height;
        let mut out = vec![0u8; self.pixels.len()];
        for i in 0..plane {
            for c in 0..self.channels {
                out[c * plane + i] = self.pixels[i * self.channels + c];
            }
        }
        out
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn pixels(&self) -> &[u8] {
        &self.pixels
    }

    pub fn pixels_mut(&mut self) -> &mut [u8] {
        &mut self.pixels
    }

    pub fn into_pixels(self) -> Vec<u8> {
        self.pixels
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize, c: usize) -> u8 {
        self.pixels[(y * self.width + x) * self.channels + c]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, c: usize, v: u8) {
        self.pixels[(y * self.width + x) * self.channels + c] = v;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height && self.channels == other.channels
    }

    /// Binary PPM (P6). Grayscale images are written with the gray value
    /// replicated into all three channels.
    pub fn write_ppm<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        if self.channels == 3 {
            out.write_all(&self.pixels)?;
        } else {
            let rgb: Vec<u8> = self.pixels.iter().flat_map(|&v| [v, v, v]).collect();
            out.write_all(&rgb)?;
        }
        Ok(())
    }

    pub fn save_ppm(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        self.write_ppm(&mut w)
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(path, e))
    }

    /// Reads a P6 file with maxval 255 as a 3-channel image.
    pub fn read_ppm<R: BufRead>(mut input: R) -> Result<Image> {
        let mut header = Vec::new();
        let mut fields = Vec::new();
        while fields.len() < 4 {
            let mut byte = [0u8; 1];
            input
                .read_exact(&mut byte)
                .map_err(|_| Error::InvalidInput("truncated PPM header".into()))?;
            if byte[0].is_ascii_whitespace() {
                if !header.is_empty() {
                    fields.push(String::from_utf8_lossy(&header).into_owned());
                    header.clear();
                }
            } else {
                header.push(byte[0]);
            }
        }
        if fields[0] != "P6" || fields[3] != "255" {
            return Err(Error::InvalidInput("only 8-bit P6 PPM is supported".into()));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::InvalidInput(format!("bad PPM dimension {s:?}")))
        };
        let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
        let mut pixels = vec![0u8; w * h * 3];
        input
            .read_exact(&mut pixels)
            .map_err(|_| Error::InvalidInput("truncated PPM body".into()))?;
        Image::new(w, h, 3, pixels)
    }
}
