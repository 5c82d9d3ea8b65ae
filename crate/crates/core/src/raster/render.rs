//! Z-buffered orthographic rasterization, parallel over row bands.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geom::{TriangleMesh, Vec3};
use crate::raster::{Channel, MultiChannelImage, OrthoCamera};

const BAND_ROWS: usize = 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    pub background: [f32; 3],
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            background: [1.0, 1.0, 1.0],
        }
    }
}

struct ScreenTri {
    face: u32,
    p: [[f64; 3]; 3],
    // inclusive pixel bounds
    x0: usize,
    x1: usize,
    y0: usize,
    y1: usize,
    inv_area: f64,
}

/// Per-pixel winner: face index, barycentric weights, depth.
#[derive(Debug, Clone, Copy)]
struct Frag {
    face: u32,
    bary: [f64; 3],
    depth: f64,
}

pub fn render(
    camera: &OrthoCamera,
    mesh: &TriangleMesh,
    channels: &[Channel],
    opts: &RenderOptions,
) -> Result<MultiChannelImage> {
    if channels.is_empty() {
        return Err(Error::NoChannels);
    }
    if channels.contains(&Channel::Rgb) && mesh.colors().is_none() {
        return Err(Error::MissingAttribute("color"));
    }
    if channels.contains(&Channel::Uv) && mesh.uvs().is_none() {
        return Err(Error::MissingAttribute("uv"));
    }
    let frags = rasterize(camera, mesh);
    let (w, h) = (camera.width(), camera.height());
    let mut img = MultiChannelImage::new(h, w);
    let mut chans: Vec<Channel> = channels.to_vec();
    chans.sort();
    chans.dedup();
    for ch in chans {
        let k = ch.components();
        let mut data = Vec::with_capacity(w * h * k);
        for f in &frags {
            match f {
                None => match ch {
                    Channel::Rgb => data.extend_from_slice(&opts.background),
                    Channel::Depth => data.push(f32::INFINITY),
                    _ => data.extend(std::iter::repeat_n(0.0, k)),
                },
                Some(f) => {
                    let tri = mesh.faces()[f.face as usize];
                    let lerp = |vals: &[Vec3]| {
                        vals[tri[0] as usize] * f.bary[0]
                            + vals[tri[1] as usize] * f.bary[1]
                            + vals[tri[2] as usize] * f.bary[2]
                    };
                    match ch {
                        Channel::Alpha => data.push(1.0),
                        Channel::Depth => data.push(f.depth as f32),
                        Channel::Rgb => {
                            let c = lerp(mesh.colors().unwrap());
                            data.extend(c.iter().map(|&v| v as f32));
                        }
                        Channel::Uv => {
                            let t = mesh.uvs().unwrap();
                            let uv = t[tri[0] as usize] * f.bary[0]
                                + t[tri[1] as usize] * f.bary[1]
                                + t[tri[2] as usize] * f.bary[2];
                            data.extend(uv.iter().map(|&v| v as f32));
                        }
                        Channel::Normal => {
                            let n = match mesh.normals() {
                                Some(ns) => {
                                    let n = lerp(ns);
                                    if n.norm() > 1e-12 {
                                        n.normalize()
                                    } else {
                                        mesh.face_normal(f.face as usize)
                                    }
                                }
                                None => mesh.face_normal(f.face as usize),
                            };
                            let mut n = camera.to_image_frame(&n);
                            if n.z < 0.0 {
                                n = -n;
                            }
                            data.extend(n.iter().map(|&v| v as f32));
                        }
                    }
                }
            }
        }
        img.set(ch.name(), k, data)?;
    }
    Ok(img)
}

/// Rasterizes only the silhouette (cheap path used by body alignment).
pub fn render_mask(camera: &OrthoCamera, mesh: &TriangleMesh) -> Vec<bool> {
    rasterize(camera, mesh).iter().map(Option::is_some).collect()
}

fn rasterize(camera: &OrthoCamera, mesh: &TriangleMesh) -> Vec<Option<Frag>> {
    let (w, h) = (camera.width(), camera.height());
    let proj: Vec<[f64; 3]> = mesh
        .vertices()
        .iter()
        .map(|v| {
            let (u, v, d) = camera.project(v);
            [u, v, d]
        })
        .collect();
    let tris: Vec<ScreenTri> = mesh
        .faces()
        .iter()
        .enumerate()
        .filter_map(|(fi, f)| {
            let p = [proj[f[0] as usize], proj[f[1] as usize], proj[f[2] as usize]];
            let area = edge(&p[0], &p[1], &p[2]);
            if area == 0.0 {
                return None; // edge-on in this view
            }
            let lo_x = p.iter().map(|q| q[0]).fold(f64::INFINITY, f64::min).ceil();
            let hi_x = p.iter().map(|q| q[0]).fold(f64::NEG_INFINITY, f64::max).floor();
            let lo_y = p.iter().map(|q| q[1]).fold(f64::INFINITY, f64::min).ceil();
            let hi_y = p.iter().map(|q| q[1]).fold(f64::NEG_INFINITY, f64::max).floor();
            if hi_x < 0.0 || hi_y < 0.0 || lo_x > (w - 1) as f64 || lo_y > (h - 1) as f64 || lo_x > hi_x || lo_y > hi_y {
                return None;
            }
            Some(ScreenTri {
                face: fi as u32,
                p,
                x0: lo_x.max(0.0) as usize,
                x1: hi_x.min((w - 1) as f64) as usize,
                y0: lo_y.max(0.0) as usize,
                y1: hi_y.min((h - 1) as f64) as usize,
                inv_area: 1.0 / area,
            })
        })
        .collect();

    let mut frags: Vec<Option<Frag>> = vec![None; w * h];
    frags
        .par_chunks_mut(BAND_ROWS * w)
        .enumerate()
        .for_each(|(band, out)| {
            let r0 = band * BAND_ROWS;
            let r1 = r0 + out.len() / w; // exclusive
            for t in tris.iter().filter(|t| t.y1 >= r0 && t.y0 < r1) {
                for y in t.y0.max(r0)..=t.y1.min(r1 - 1) {
                    for x in t.x0..=t.x1 {
                        let q = [x as f64, y as f64, 0.0];
                        // double-sided: normalizing by the signed area makes
                        // inside weights nonnegative for either winding
                        let b0 = edge(&t.p[1], &t.p[2], &q) * t.inv_area;
                        let b1 = edge(&t.p[2], &t.p[0], &q) * t.inv_area;
                        let b2 = edge(&t.p[0], &t.p[1], &q) * t.inv_area;
                        if b0 < 0.0 || b1 < 0.0 || b2 < 0.0 {
                            continue;
                        }
                        let depth = b0 * t.p[0][2] + b1 * t.p[1][2] + b2 * t.p[2][2];
                        let slot = &mut out[(y - r0) * w + x];
                        let wins = match slot {
                            None => true,
                            Some(cur) => depth < cur.depth || (depth == cur.depth && t.face < cur.face),
                        };
                        if wins {
                            *slot = Some(Frag {
                                face: t.face,
                                bary: [b0, b1, b2],
                                depth,
                            });
                        }
                    }
                }
            }
        });
    frags
}

#[inline]
fn edge(a: &[f64; 3], b: &[f64; 3], c: &[f64; 3]) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}
