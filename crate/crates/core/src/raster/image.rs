//! H×W images with named float channels, plus PNG and MCI1 tensor I/O.
//!
//! MCI1 layout (all little-endian):
//! `b"MCI1"`, `u32 H`, `u32 W`, `u32 C` (floats per pixel), then one entry per
//! named channel — `u32 name_len`, UTF-8 name, `u32 k` — until the `k` sum to
//! `C`, then `H·W·C` `f32` values, row-major, channels interleaved per pixel in
//! table order.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Channel {
    Rgb,
    Alpha,
    Normal,
    Uv,
    Depth,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Rgb,
        Channel::Alpha,
        Channel::Normal,
        Channel::Uv,
        Channel::Depth,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Channel::Rgb => "rgb",
            Channel::Alpha => "alpha",
            Channel::Normal => "normal",
            Channel::Uv => "uv",
            Channel::Depth => "depth",
        }
    }

    pub fn components(self) -> usize {
        match self {
            Channel::Rgb | Channel::Normal => 3,
            Channel::Uv => 2,
            Channel::Alpha | Channel::Depth => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Plane {
    name: String,
    k: usize,
    data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelImage {
    height: usize,
    width: usize,
    planes: Vec<Plane>,
}

impl MultiChannelImage {
    pub fn new(height: usize, width: usize) -> Self {
        MultiChannelImage {
            height,
            width,
            planes: Vec::new(),
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn pixels(&self) -> usize {
        self.height * self.width
    }

    /// Adds or replaces a channel holding `k` floats per pixel.
    pub fn set(&mut self, name: &str, k: usize, data: Vec<f32>) -> Result<()> {
        if k == 0 || data.len() != self.pixels() * k {
            return Err(Error::ShapeMismatch(format!(
                "channel '{name}': {} values for {}x{}x{k}",
                data.len(),
                self.height,
                self.width
            )));
        }
        match self.planes.iter_mut().find(|p| p.name == name) {
            Some(p) => {
                p.k = k;
                p.data = data;
            }
            None => self.planes.push(Plane {
                name: name.to_string(),
                k,
                data,
            }),
        }
        Ok(())
    }

    pub fn with(mut self, name: &str, k: usize, data: Vec<f32>) -> Result<Self> {
        self.set(name, k, data)?;
        Ok(self)
    }

    pub fn get(&self, name: &str) -> Option<&[f32]> {
        self.planes.iter().find(|p| p.name == name).map(|p| p.data.as_slice())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut [f32]> {
        self.planes
            .iter_mut()
            .find(|p| p.name == name)
            .map(|p| p.data.as_mut_slice())
    }

    pub fn components(&self, name: &str) -> Option<usize> {
        self.planes.iter().find(|p| p.name == name).map(|p| p.k)
    }

    pub fn require(&self, name: &'static str) -> Result<&[f32]> {
        self.get(name).ok_or(Error::MissingAttribute(name))
    }

    pub fn channel_names(&self) -> Vec<&str> {
        self.planes.iter().map(|p| p.name.as_str()).collect()
    }

    pub fn remove(&mut self, name: &str) {
        self.planes.retain(|p| p.name != name);
    }

    /// Keeps only the listed channels (those present).
    pub fn select(&self, names: &[&str]) -> Self {
        MultiChannelImage {
            height: self.height,
            width: self.width,
            planes: self
                .planes
                .iter()
                .filter(|p| names.contains(&p.name.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn flip_horizontal(&self) -> Self {
        let (h, w) = (self.height, self.width);
        let planes = self
            .planes
            .iter()
            .map(|p| {
                let mut data = vec![0.0; p.data.len()];
                for y in 0..h {
                    for x in 0..w {
                        let src = (y * w + x) * p.k;
                        let dst = (y * w + (w - 1 - x)) * p.k;
                        data[dst..dst + p.k].copy_from_slice(&p.data[src..src + p.k]);
                    }
                }
                Plane {
                    name: p.name.clone(),
                    k: p.k,
                    data,
                }
            })
            .collect();
        MultiChannelImage {
            height: h,
            width: w,
            planes,
        }
    }

    /// Nearest-neighbor resample of every channel.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Self {
        let planes = self
            .planes
            .iter()
            .map(|p| {
                let mut data = Vec::with_capacity(height * width * p.k);
                for y in 0..height {
                    let sy = ((y as f64 + 0.5) * self.height as f64 / height as f64) as usize;
                    for x in 0..width {
                        let sx = ((x as f64 + 0.5) * self.width as f64 / width as f64) as usize;
                        let s = (sy.min(self.height - 1) * self.width + sx.min(self.width - 1)) * p.k;
                        data.extend_from_slice(&p.data[s..s + p.k]);
                    }
                }
                Plane {
                    name: p.name.clone(),
                    k: p.k,
                    data,
                }
            })
            .collect();
        MultiChannelImage {
            height,
            width,
            planes,
        }
    }

    // ------------------------------------------------------------ MCI1

    pub fn to_mci_bytes(&self) -> Vec<u8> {
        let c: usize = self.planes.iter().map(|p| p.k).sum();
        let mut out = Vec::with_capacity(16 + self.pixels() * c * 4);
        out.extend_from_slice(b"MCI1");
        for v in [self.height, self.width, c] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        for p in &self.planes {
            out.extend_from_slice(&(p.name.len() as u32).to_le_bytes());
            out.extend_from_slice(p.name.as_bytes());
            out.extend_from_slice(&(p.k as u32).to_le_bytes());
        }
        for i in 0..self.pixels() {
            for p in &self.planes {
                for v in &p.data[i * p.k..(i + 1) * p.k] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }

    pub fn from_mci_bytes(bytes: &[u8]) -> Result<Self> {
        let mut rd = Cursor { bytes, pos: 0 };
        if rd.take(4)? != b"MCI1" {
            return Err(mci_err("bad magic"));
        }
        let h = rd.u32()?;
        let w = rd.u32()?;
        let c = rd.u32()?;
        let mut table = Vec::new();
        let mut total = 0;
        while total < c {
            let len = rd.u32()?;
            let name = std::str::from_utf8(rd.take(len)?)
                .map_err(|_| mci_err("channel name not utf-8"))?
                .to_string();
            let k = rd.u32()?;
            if k == 0 {
                return Err(mci_err("zero-width channel"));
            }
            total += k;
            table.push((name, k));
        }
        if total != c {
            return Err(mci_err("channel table does not sum to C"));
        }
        let payload = rd.take(h * w * c * 4)?;
        let mut planes: Vec<Plane> = table
            .into_iter()
            .map(|(name, k)| Plane {
                name,
                k,
                data: Vec::with_capacity(h * w * k),
            })
            .collect();
        let mut floats = payload
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()));
        for _ in 0..h * w {
            for p in planes.iter_mut() {
                p.data.extend(floats.by_ref().take(p.k));
            }
        }
        Ok(MultiChannelImage {
            height: h,
            width: w,
            planes,
        })
    }

    pub fn save_mci(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_mci_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load_mci(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_mci_bytes(&bytes)
    }

    // ------------------------------------------------------------ PNG

    /// Writes `rgb` (+ `alpha` if present, else opaque) as 8-bit RGBA.
    pub fn save_png(&self, path: &Path) -> Result<()> {
        let rgb = self.require("rgb")?;
        let alpha = self.get("alpha");
        let mut buf = Vec::with_capacity(self.pixels() * 4);
        for i in 0..self.pixels() {
            for c in 0..3 {
                buf.push(to_u8(rgb[i * 3 + c]));
            }
            buf.push(alpha.map_or(255, |a| to_u8(a[i])));
        }
        image::save_buffer(path, &buf, self.width as u32, self.height as u32, image::ColorType::Rgba8)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }

    /// Writes `alpha` as an 8-bit grayscale mask.
    pub fn save_mask_png(&self, path: &Path) -> Result<()> {
        let alpha = self.require("alpha")?;
        let buf: Vec<u8> = alpha.iter().map(|&a| to_u8(a)).collect();
        image::save_buffer(path, &buf, self.width as u32, self.height as u32, image::ColorType::L8)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))
    }

    /// Reads any PNG into `rgb` + `alpha` channels in `[0,1]`.
    pub fn load_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .into_rgba8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut rgb = Vec::with_capacity(w * h * 3);
        let mut alpha = Vec::with_capacity(w * h);
        for px in img.pixels() {
            rgb.extend(px.0[..3].iter().map(|&c| c as f32 / 255.0));
            alpha.push(px.0[3] as f32 / 255.0);
        }
        MultiChannelImage::new(h, w).with("rgb", 3, rgb)?.with("alpha", 1, alpha)
    }

    /// Reads a grayscale (or color; luma is taken) PNG as a binary `alpha` mask.
    pub fn load_mask_png(path: &Path) -> Result<Self> {
        let img = image::open(path)
            .map_err(|e| Error::Image(format!("{}: {e}", path.display())))?
            .into_luma8();
        let (w, h) = (img.width() as usize, img.height() as usize);
        let alpha = img.pixels().map(|p| if p.0[0] >= 128 { 1.0 } else { 0.0 }).collect();
        MultiChannelImage::new(h, w).with("alpha", 1, alpha)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| mci_err("truncated"))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<usize> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
}

fn mci_err(m: &str) -> Error {
    Error::Format(format!("mci: {m}"))
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
