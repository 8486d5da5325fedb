//! Synthetic light fields with exact central-view ground truth.
//!
//! A scene is a back-to-front stack of textured rectangles, each at a
//! constant or planar disparity. Every view is rendered by inverse-mapping its
//! pixels onto each layer, bilinearly sampling a pre-rasterized texture and
//! box-filtering the rectangle coverage.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::Image;
use crate::lightfield::{DisparityMap, LightField};

pub type Rgb = [f64; 3];

/// Disparity of a layer as a function of central-view position:
/// `base + du·u + dv·v`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisparityModel {
    pub base: f64,
    #[serde(default)]
    pub du: f64,
    #[serde(default)]
    pub dv: f64,
}

impl DisparityModel {
    pub fn constant(d: f64) -> Self {
        DisparityModel {
            base: d,
            du: 0.0,
            dv: 0.0,
        }
    }

    pub fn at(&self, u: f64, v: f64) -> f64 {
        self.base + self.du * u + self.dv * v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Texture {
    Constant { color: Rgb },
    /// Square checkerboard with the given cell size in pixels.
    Checker { cell: f64, a: Rgb, b: Rgb },
    /// Alternating bands. `vertical` bands vary along u.
    Stripes {
        period: f64,
        vertical: bool,
        a: Rgb,
        b: Rgb,
    },
    /// Value noise: per-channel random lattice values of spacing `scale`,
    /// bilinearly interpolated, `base ± amplitude`.
    Noise { base: Rgb, amplitude: f64, scale: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer {
    /// `[x0, y0, x1, y1]` in central-view pixel coordinates, half-open.
    pub rect: [f64; 4],
    pub disparity: DisparityModel,
    pub texture: Texture,
}

impl Layer {
    fn contains(&self, u: f64, v: f64) -> bool {
        let [x0, y0, x1, y1] = self.rect;
        u >= x0 && u < x1 && v >= y0 && v < y1
    }

    /// Area of the unit pixel box centered at `(u, v)` inside the rectangle.
    fn coverage(&self, u: f64, v: f64) -> f64 {
        let [x0, y0, x1, y1] = self.rect;
        let ox = ((u + 0.5).min(x1) - (u - 0.5).max(x0)).max(0.0);
        let oy = ((v + 0.5).min(y1) - (v - 0.5).max(y0)).max(0.0);
        ox * oy
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub n_s: usize,
    pub n_t: usize,
    /// Back to front.
    pub layers: Vec<Layer>,
    #[serde(default)]
    pub noise_sigma: f64,
    #[serde(default)]
    pub edge_blur_sigma: f64,
    #[serde(default = "default_scene_dmax")]
    pub d_max: f64,
}

fn default_scene_dmax() -> f64 {
    2.0
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_s < 3 || self.n_t < 3 {
            return Err(Error::InvalidParameter("scene grid must be at least 3x3".into()));
        }
        if self.width < 4 || self.height < 4 {
            return Err(Error::InvalidParameter("scene must be at least 4x4 pixels".into()));
        }
        if self.layers.is_empty() {
            return Err(Error::InvalidParameter("scene has no layers".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            let [x0, y0, x1, y1] = l.rect;
            let corners = [(x0, y0), (x1, y0), (x0, y1), (x1, y1)];
            let (w, h) = (self.width as f64, self.height as f64);
            for (u, v) in corners {
                let d = l.disparity.at(u.clamp(0.0, w), v.clamp(0.0, h));
                if d.abs() > self.d_max + 1e-12 {
                    return Err(Error::InvalidParameter(format!(
                        "layer {i} disparity {d} exceeds d_max {}",
                        self.d_max
                    )));
                }
            }
            match &l.texture {
                Texture::Checker { cell, .. } if *cell < 4.0 => {
                    return Err(Error::InvalidParameter(format!(
                        "layer {i}: checker cell {cell} below the 4 px band limit"
                    )))
                }
                Texture::Stripes { period, .. } if *period < 8.0 => {
                    return Err(Error::InvalidParameter(format!(
                        "layer {i}: stripe period {period} below the 8 px band limit"
                    )))
                }
                Texture::Noise { scale, .. } if *scale < 4.0 => {
                    return Err(Error::InvalidParameter(format!(
                        "layer {i}: noise scale {scale} below the 4 px band limit"
                    )))
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Ground-truth disparity of the central view: the front-most layer whose
    /// rectangle contains the pixel center. Uncovered pixels are invalid.
    pub fn ground_truth(&self) -> DisparityMap {
        let mut gt = DisparityMap::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let (u, v) = (x as f64, y as f64);
                if let Some(l) = self.layers.iter().rev().find(|l| l.contains(u, v)) {
                    gt.set(x, y, l.disparity.at(u, v));
                }
            }
        }
        gt
    }
}

/// A texture rasterized at integer positions over a padded domain.
struct TextureRaster {
    origin: isize,
    img: Image,
}

impl TextureRaster {
    fn build(tex: &Texture, w: usize, h: usize, margin: usize, rng: &mut ChaCha8Rng) -> Self {
        let origin = -(margin as isize);
        let (rw, rh) = (w + 2 * margin, h + 2 * margin);
        let img = match tex {
            Texture::Constant { color } => Image::from_fn(rw, rh, 3, |_, _, px| {
                px.copy_from_slice(color);
            }),
            Texture::Checker { cell, a, b } => Image::from_fn(rw, rh, 3, |x, y, px| {
                let u = x as f64 + origin as f64;
                let v = y as f64 + origin as f64;
                let parity = ((u / cell).floor() + (v / cell).floor()).rem_euclid(2.0);
                px.copy_from_slice(if parity < 0.5 { a } else { b });
            }),
            Texture::Stripes {
                period,
                vertical,
                a,
                b,
            } => Image::from_fn(rw, rh, 3, |x, y, px| {
                let coord = if *vertical { x } else { y } as f64 + origin as f64;
                let phase = (coord / (period / 2.0)).floor().rem_euclid(2.0);
                px.copy_from_slice(if phase < 0.5 { a } else { b });
            }),
            Texture::Noise {
                base,
                amplitude,
                scale,
            } => {
                let lw = (rw as f64 / scale).ceil() as usize + 2;
                let lh = (rh as f64 / scale).ceil() as usize + 2;
                let lattice: Vec<f64> = (0..lw * lh * 3).map(|_| rng.random_range(-1.0..=1.0)).collect();
                let lat = Image::from_vec(lw, lh, 3, lattice).expect("lattice size");
                Image::from_fn(rw, rh, 3, |x, y, px| {
                    let lx = x as f64 / scale;
                    let ly = y as f64 / scale;
                    for c in 0..3 {
                        px[c] = (base[c] + amplitude * lat.bilinear(lx, ly, c)).clamp(0.0, 1.0);
                    }
                })
            }
        };
        TextureRaster { origin, img }
    }

    fn sample(&self, u: f64, v: f64, out: &mut [f64]) {
        let o = self.origin as f64;
        self.img.bilinear_into(u - o, v - o, out);
    }
}

/// Renders the scene. Returns the light field and the central-view ground truth.
pub fn render(spec: &SceneSpec, seed: u64) -> Result<(LightField, DisparityMap)> {
    spec.validate()?;
    let s_c = (spec.n_s / 2) as f64;
    let t_c = (spec.n_t / 2) as f64;
    let max_shift = (spec.n_s.max(spec.n_t) as f64 / 2.0).ceil() * spec.d_max;
    let margin = max_shift.ceil() as usize + 4;

    let mut tex_rng = ChaCha8Rng::seed_from_u64(seed);
    let rasters: Vec<TextureRaster> = spec
        .layers
        .iter()
        .map(|l| TextureRaster::build(&l.texture, spec.width, spec.height, margin, &mut tex_rng))
        .collect();

    let grid: Vec<(usize, usize)> = (0..spec.n_t)
        .flat_map(|t| (0..spec.n_s).map(move |s| (s, t)))
        .collect();
    let views: Vec<Image> = grid
        .par_iter()
        .enumerate()
        .map(|(index, &(s, t))| {
            let ds = s as f64 - s_c;
            let dt = t as f64 - t_c;
            let mut view = Image::new(spec.width, spec.height, 3);
            let mut texel = [0.0; 3];
            for y in 0..spec.height {
                for x in 0..spec.width {
                    let (u, v) = (x as f64, y as f64);
                    let px = view.pixel_mut(x, y);
                    for (layer, raster) in spec.layers.iter().zip(&rasters) {
                        let (u0, v0) = inverse_map(&layer.disparity, u, v, ds, dt);
                        let alpha = layer.coverage(u0, v0);
                        if alpha <= 0.0 {
                            continue;
                        }
                        raster.sample(u0, v0, &mut texel);
                        for c in 0..3 {
                            px[c] = px[c] * (1.0 - alpha) + texel[c] * alpha;
                        }
                    }
                }
            }
            let mut view = view.gaussian_blur(spec.edge_blur_sigma);
            if spec.noise_sigma > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(
                    seed ^ 0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index as u64 + 1),
                );
                let normal = Normal::new(0.0, spec.noise_sigma).expect("finite sigma");
                for v in view.data_mut() {
                    *v = (*v + normal.sample(&mut rng)).clamp(0.0, 1.0);
                }
            }
            view
        })
        .collect();

    let lf = LightField::from_views(spec.n_s, spec.n_t, views)?;
    Ok((lf, spec.ground_truth()))
}

/// Central-view position seen at `(u, v)` in the view offset by `(ds, dt)`.
fn inverse_map(model: &DisparityModel, u: f64, v: f64, ds: f64, dt: f64) -> (f64, f64) {
    if model.du == 0.0 && model.dv == 0.0 {
        return (u - model.base * ds, v - model.base * dt);
    }
    // u = u0 + (base + du u0 + dv v0) ds ;  v = v0 + (base + du u0 + dv v0) dt
    let a11 = 1.0 + model.du * ds;
    let a12 = model.dv * ds;
    let a21 = model.du * dt;
    let a22 = 1.0 + model.dv * dt;
    let r1 = u - model.base * ds;
    let r2 = v - model.base * dt;
    let det = a11 * a22 - a12 * a21;
    ((a22 * r1 - a12 * r2) / det, (a11 * r2 - a21 * r1) / det)
}

/// Ready-made scenes used by the test suites and examples.
pub mod presets {
    use super::*;

    fn rgb(v: f64) -> Rgb {
        [v, v, v]
    }

    /// Full-frame plane with a value-noise texture.
    pub fn textured_plane(size: usize, n: usize, d: f64) -> SceneSpec {
        SceneSpec {
            width: size,
            height: size,
            n_s: n,
            n_t: n,
            layers: vec![Layer {
                rect: [-1e4, -1e4, 1e4, 1e4],
                disparity: DisparityModel::constant(d),
                texture: Texture::Noise {
                    base: [0.5, 0.45, 0.4],
                    amplitude: 0.4,
                    scale: 5.0,
                },
            }],
            noise_sigma: 0.0,
            edge_blur_sigma: 0.0,
            d_max: 2.0,
        }
    }

    /// Full-frame plane with vertical color stripes.
    pub fn striped_plane(size: usize, n: usize, d: f64, period: f64, a: Rgb, b: Rgb) -> SceneSpec {
        SceneSpec {
            width: size,
            height: size,
            n_s: n,
            n_t: n,
            layers: vec![Layer {
                rect: [-1e4, -1e4, 1e4, 1e4],
                disparity: DisparityModel::constant(d),
                texture: Texture::Stripes {
                    period,
                    vertical: true,
                    a,
                    b,
                },
            }],
            noise_sigma: 0.0,
            edge_blur_sigma: 0.0,
            d_max: 2.0,
        }
    }

    /// Textured background plane with a textured foreground rectangle.
    pub fn two_plane(size: usize, n: usize, d_back: f64, d_front: f64) -> SceneSpec {
        let lo = (size as f64 * 0.3).round() + 0.5;
        let hi = (size as f64 * 0.7).round() + 0.5;
        SceneSpec {
            width: size,
            height: size,
            n_s: n,
            n_t: n,
            layers: vec![
                Layer {
                    rect: [-1e4, -1e4, 1e4, 1e4],
                    disparity: DisparityModel::constant(d_back),
                    texture: Texture::Checker {
                        cell: 8.0,
                        a: rgb(0.25),
                        b: rgb(0.4),
                    },
                },
                Layer {
                    rect: [lo, lo, hi, hi],
                    disparity: DisparityModel::constant(d_front),
                    texture: Texture::Noise {
                        base: [0.75, 0.6, 0.45],
                        amplitude: 0.2,
                        scale: 6.0,
                    },
                },
            ],
            noise_sigma: 0.0,
            edge_blur_sigma: 0.0,
            d_max: 2.0,
        }
    }

    /// Ten two-layer occlusion scenes with varied geometry, disparities and textures.
    pub fn occlusion_suite(size: usize, n: usize) -> Vec<SceneSpec> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x0cc1_u64);
        let s = size as f64;
        (0..10)
            .map(|i| {
                let d_back = rng.random_range(-0.8..0.3);
                let d_front = d_back + rng.random_range(0.8..1.5);
                let x0 = (s * rng.random_range(0.15..0.35)).round() + 0.5;
                let y0 = (s * rng.random_range(0.15..0.35)).round() + 0.5;
                let x1 = (s * rng.random_range(0.6..0.85)).round() + 0.5;
                let y1 = (s * rng.random_range(0.6..0.85)).round() + 0.5;
                let back_gray = rng.random_range(0.15..0.35);
                let front_base = [
                    rng.random_range(0.55..0.85),
                    rng.random_range(0.45..0.8),
                    rng.random_range(0.3..0.7),
                ];
                let back_texture = if i % 2 == 0 {
                    Texture::Checker {
                        cell: rng.random_range(6.0..10.0f64).round(),
                        a: rgb(back_gray),
                        b: rgb(back_gray + 0.12),
                    }
                } else {
                    Texture::Noise {
                        base: rgb(back_gray + 0.05),
                        amplitude: 0.08,
                        scale: rng.random_range(5.0..8.0),
                    }
                };
                SceneSpec {
                    width: size,
                    height: size,
                    n_s: n,
                    n_t: n,
                    layers: vec![
                        Layer {
                            rect: [-1e4, -1e4, 1e4, 1e4],
                            disparity: DisparityModel::constant(d_back),
                            texture: back_texture,
                        },
                        Layer {
                            rect: [x0, y0, x1, y1],
                            disparity: DisparityModel::constant(d_front),
                            texture: Texture::Noise {
                                base: front_base,
                                amplitude: 0.15,
                                scale: rng.random_range(5.0..9.0),
                            },
                        },
                    ],
                    noise_sigma: 0.0,
                    edge_blur_sigma: 0.0,
                    d_max: 2.0,
                }
            })
            .collect()
    }

    /// Five single-plane scenes whose only edges are color (texture) edges.
    pub fn texture_suite(size: usize, n: usize) -> Vec<SceneSpec> {
        let palette: [(Rgb, Rgb); 5] = [
            ([0.8, 0.2, 0.2], [0.2, 0.3, 0.8]),
            ([0.9, 0.9, 0.3], [0.2, 0.6, 0.3]),
            ([0.3, 0.3, 0.3], [0.7, 0.7, 0.7]),
            ([0.6, 0.2, 0.7], [0.9, 0.6, 0.2]),
            ([0.1, 0.5, 0.5], [0.9, 0.8, 0.8]),
        ];
        let disparities = [-1.0, -0.35, 0.0, 0.6, 1.25];
        palette
            .iter()
            .zip(disparities)
            .enumerate()
            .map(|(i, (&(a, b), d))| striped_plane(size, n, d, 12.0 + 2.0 * i as f64, a, b))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_disparity_views_are_identical() {
        let spec = presets::textured_plane(24, 3, 0.0);
        let (lf, gt) = render(&spec, 1).unwrap();
        for t in 0..3 {
            for s in 0..3 {
                assert_eq!(lf.rgb(s, t), lf.central_rgb());
            }
        }
        assert!(gt.values().iter().all(|&d| d == 0.0));
    }

    #[test]
    fn unit_disparity_shifts_by_view_offset() {
        let spec = presets::textured_plane(32, 5, 1.0);
        let (lf, _) = render(&spec, 3).unwrap();
        let c = lf.central_rgb();
        let v = lf.rgb(4, 2); // ds = +2
        for y in 4..28 {
            for x in 6..26 {
                for ch in 0..3 {
                    assert!((v.get(x + 2, y, ch) - c.get(x, y, ch)).abs() < 1e-6);
                }
            }
        }
    }

    #[test]
    fn ground_truth_edges_follow_rectangles() {
        let spec = presets::two_plane(40, 3, 0.2, 1.0);
        let gt = spec.ground_truth();
        let [x0, y0, x1, y1] = spec.layers[1].rect;
        for y in 0..40 {
            for x in 0..40 {
                let inside = (x as f64) >= x0 && (x as f64) < x1 && (y as f64) >= y0 && (y as f64) < y1;
                assert_eq!(gt.get(x, y), if inside { 1.0 } else { 0.2 });
            }
        }
    }

    #[test]
    fn planar_inverse_map_roundtrips() {
        let m = DisparityModel {
            base: 0.3,
            du: 0.01,
            dv: -0.02,
        };
        let (u0, v0) = (12.3, 7.9);
        let d = m.at(u0, v0);
        let (ds, dt) = (2.0, -3.0);
        let (u, v) = (u0 + d * ds, v0 + d * dt);
        let (ru, rv) = inverse_map(&m, u, v, ds, dt);
        assert!((ru - u0).abs() < 1e-12 && (rv - v0).abs() < 1e-12);
    }

    #[test]
    fn validation_rejects_aliasing_textures_and_big_disparity() {
        let mut spec = presets::textured_plane(16, 3, 0.0);
        spec.layers[0].texture = Texture::Checker {
            cell: 2.0,
            a: [0.0; 3],
            b: [1.0; 3],
        };
        assert!(spec.validate().is_err());
        let spec = presets::textured_plane(16, 3, 3.0);
        assert!(spec.validate().is_err());
    }

    #[test]
    fn render_is_deterministic() {
        let mut spec = presets::two_plane(24, 3, 0.0, 1.0);
        spec.noise_sigma = 0.02;
        let (a, _) = render(&spec, 9).unwrap();
        let (b, _) = render(&spec, 9).unwrap();
        for t in 0..3 {
            for s in 0..3 {
                assert_eq!(a.rgb(s, t), b.rgb(s, t));
            }
        }
    }
}
