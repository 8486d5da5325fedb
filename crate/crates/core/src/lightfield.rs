//! Light-field container, view-grid loading, angular cropping and EPI slicing.
//!
//! Disparity convention: a scene point at central-view pixel `(u, v)` with
//! disparity `d` appears at `(u + d·(s - s_c), v + d·(t - t_c))` in view `(s, t)`.
//! Both EPI axes therefore measure the same signed disparity.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{rgb_image_to_lab, Image};

/// A 4D light field: an `n_t × n_s` grid of RGB views plus their LAB versions.
#[derive(Debug, Clone)]
pub struct LightField {
    n_s: usize,
    n_t: usize,
    width: usize,
    height: usize,
    rgb: Vec<Image>,
    lab: Vec<Image>,
}

impl LightField {
    /// `views` are RGB images in row-major `(t, s)` order with values in `[0, 1]`.
    pub fn from_views(n_s: usize, n_t: usize, views: Vec<Image>) -> Result<Self> {
        if n_s < 3 || n_t < 3 {
            return Err(Error::InvalidParameter(format!(
                "angular grid must be at least 3x3, got {n_s}x{n_t}"
            )));
        }
        if views.len() != n_s * n_t {
            return Err(Error::InvalidParameter(format!(
                "{} views supplied for a {n_s}x{n_t} grid",
                views.len()
            )));
        }
        let (width, height) = (views[0].width(), views[0].height());
        for (i, v) in views.iter().enumerate() {
            if v.channels() != 3 {
                return Err(Error::InvalidParameter(format!(
                    "view {i} has {} channels, expected RGB",
                    v.channels()
                )));
            }
            if v.width() != width || v.height() != height {
                return Err(Error::DimensionMismatch {
                    s: i % n_s,
                    t: i / n_s,
                    expected_w: width,
                    expected_h: height,
                    found_w: v.width(),
                    found_h: v.height(),
                });
            }
        }
        let lab = views.par_iter().map(rgb_image_to_lab).collect();
        Ok(LightField {
            n_s,
            n_t,
            width,
            height,
            rgb: views,
            lab,
        })
    }

    pub fn n_s(&self) -> usize {
        self.n_s
    }

    pub fn n_t(&self) -> usize {
        self.n_t
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn s_center(&self) -> usize {
        self.n_s / 2
    }

    pub fn t_center(&self) -> usize {
        self.n_t / 2
    }

    pub fn rgb(&self, s: usize, t: usize) -> &Image {
        &self.rgb[t * self.n_s + s]
    }

    pub fn lab(&self, s: usize, t: usize) -> &Image {
        &self.lab[t * self.n_s + s]
    }

    pub fn central_rgb(&self) -> &Image {
        self.rgb(self.s_center(), self.t_center())
    }

    pub fn central_lab(&self) -> &Image {
        self.lab(self.s_center(), self.t_center())
    }

    /// Keeps the central `keep × keep` views.
    pub fn crop_angular(&self, keep: usize) -> Result<LightField> {
        if keep.is_multiple_of(2) || keep > self.n_s.min(self.n_t) || keep < 3 {
            return Err(Error::InvalidParameter(format!(
                "angular crop must be odd, >= 3 and <= {}, got {keep}",
                self.n_s.min(self.n_t)
            )));
        }
        let half = keep / 2;
        let s0 = self.s_center() - half;
        let t0 = self.t_center() - half;
        let mut rgb = Vec::with_capacity(keep * keep);
        let mut lab = Vec::with_capacity(keep * keep);
        for t in t0..t0 + keep {
            for s in s0..s0 + keep {
                rgb.push(self.rgb(s, t).clone());
                lab.push(self.lab(s, t).clone());
            }
        }
        Ok(LightField {
            n_s: keep,
            n_t: keep,
            width: self.width,
            height: self.height,
            rgb,
            lab,
        })
    }

    /// Slices an EPI out of the central cross-hair.
    ///
    /// Horizontal EPIs fix `t = t_c` and image row `slice_index`; EPI row `j`
    /// is that row of view `(s = j, t_c)`. Vertical EPIs fix `s = s_c` and image
    /// column `slice_index`; EPI row `j` is that column of view `(s_c, t = j)`.
    pub fn extract_epi(&self, axis: EpiAxis, slice_index: usize) -> Result<Epi> {
        let (limit, n_views, len) = match axis {
            EpiAxis::Horizontal => (self.height, self.n_s, self.width),
            EpiAxis::Vertical => (self.width, self.n_t, self.height),
        };
        if slice_index >= limit {
            return Err(Error::InvalidParameter(format!(
                "{axis:?} EPI slice {slice_index} out of range 0..{limit}"
            )));
        }
        let image = Image::from_fn(len, n_views, 3, |x, j, px| {
            let src = match axis {
                EpiAxis::Horizontal => self.lab(j, self.t_center()).pixel(x, slice_index),
                EpiAxis::Vertical => self.lab(self.s_center(), j).pixel(slice_index, x),
            };
            px.copy_from_slice(src);
        });
        let center_row = match axis {
            EpiAxis::Horizontal => self.s_center(),
            EpiAxis::Vertical => self.t_center(),
        };
        Ok(Epi {
            image,
            axis,
            slice_index,
            center_row,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpiAxis {
    Horizontal,
    Vertical,
}

impl EpiAxis {
    /// Sign applied to `(x_bottom - x_top) / (height - 1)` to obtain disparity.
    /// Both axes share the light-field convention, so no flip is needed.
    pub fn disparity_sign(self) -> f64 {
        1.0
    }
}

/// An epipolar-plane image in normalized LAB.
#[derive(Debug, Clone)]
pub struct Epi {
    pub image: Image,
    pub axis: EpiAxis,
    pub slice_index: usize,
    /// Row holding the central view.
    pub center_row: usize,
}

impl Epi {
    pub fn width(&self) -> usize {
        self.image.width()
    }

    pub fn height(&self) -> usize {
        self.image.height()
    }
}

/// Dense disparity (pixels per adjacent view) with a validity mask.
#[derive(Debug, Clone, PartialEq)]
pub struct DisparityMap {
    width: usize,
    height: usize,
    values: Vec<f64>,
    valid: Vec<bool>,
}

impl DisparityMap {
    /// All pixels invalid, value 0.
    pub fn new(width: usize, height: usize) -> Self {
        DisparityMap {
            width,
            height,
            values: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    /// All pixels valid.
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::SizeMismatch(format!(
                "{} values for a {width}x{height} map",
                values.len()
            )));
        }
        Ok(DisparityMap {
            width,
            height,
            valid: vec![true; values.len()],
            values,
        })
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let values = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect::<Vec<_>>();
        DisparityMap {
            width,
            height,
            valid: vec![true; values.len()],
            values,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    /// Stores a value and marks the pixel valid.
    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        let i = y * self.width + x;
        self.values[i] = v;
        self.valid[i] = true;
    }

    #[inline]
    pub fn is_valid(&self, x: usize, y: usize) -> bool {
        self.valid[y * self.width + x]
    }

    pub fn invalidate(&mut self, x: usize, y: usize) {
        self.valid[y * self.width + x] = false;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn valid_mask(&self) -> &[bool] {
        &self.valid
    }

    pub fn all_valid(&self) -> bool {
        self.valid.iter().all(|&v| v)
    }

    pub fn valid_range(&self) -> Option<(f64, f64)> {
        self.values
            .iter()
            .zip(&self.valid)
            .filter(|(_, &ok)| ok)
            .fold(None, |acc, (&v, _)| match acc {
                None => Some((v, v)),
                Some((lo, hi)) => Some((lo.min(v), hi.max(v))),
            })
    }

    /// Bilinear sample of the values, ignoring the mask, clamped at the borders.
    pub fn bilinear(&self, x: f64, y: f64) -> f64 {
        let max_x = (self.width - 1) as f64;
        let max_y = (self.height - 1) as f64;
        let x = x.clamp(0.0, max_x);
        let y = y.clamp(0.0, max_y);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let top = self.get(x0, y0) * (1.0 - fx) + self.get(x1, y0) * fx;
        let bot = self.get(x0, y1) * (1.0 - fx) + self.get(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    pub fn map_values(&self, f: impl Fn(f64) -> f64) -> DisparityMap {
        DisparityMap {
            width: self.width,
            height: self.height,
            values: self.values.iter().map(|&v| f(v)).collect(),
            valid: self.valid.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum IndexOrder {
    /// `idx = t * n_s + s`
    #[default]
    RowMajor,
    /// `idx = s * n_t + t`
    ColumnMajor,
}

/// How view files in a directory map onto the angular grid.
///
/// `pattern` accepts the placeholders `{idx}`, `{s}` and `{t}`, each with an
/// optional zero-padded width such as `{idx:03}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridLayout {
    pub pattern: String,
    pub n_s: usize,
    pub n_t: usize,
    #[serde(default)]
    pub index_order: IndexOrder,
    /// Reverse the file order along s so that disparity follows this crate's sign convention.
    #[serde(default)]
    pub flip_s: bool,
    #[serde(default)]
    pub flip_t: bool,
}

impl GridLayout {
    /// The 9×9 `input_Cam000.png … input_Cam080.png` naming of the HCI benchmark.
    pub fn hci() -> Self {
        GridLayout {
            pattern: "input_Cam{idx:03}.png".into(),
            n_s: 9,
            n_t: 9,
            index_order: IndexOrder::RowMajor,
            flip_s: false,
            flip_t: false,
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let text_trimmed = text.trim_start();
        if path.extension().is_some_and(|e| e == "json") || text_trimmed.starts_with('{') {
            serde_json::from_str(&text).map_err(|e| Error::Config(e.to_string()))
        } else {
            Self::from_toml_str(&text)
        }
    }

    /// File name for grid position `(s, t)` in this crate's orientation.
    pub fn file_name(&self, s: usize, t: usize) -> Result<String> {
        let fs = if self.flip_s { self.n_s - 1 - s } else { s };
        let ft = if self.flip_t { self.n_t - 1 - t } else { t };
        let idx = match self.index_order {
            IndexOrder::RowMajor => ft * self.n_s + fs,
            IndexOrder::ColumnMajor => fs * self.n_t + ft,
        };
        format_pattern(&self.pattern, idx, fs, ft)
    }
}

fn format_pattern(pattern: &str, idx: usize, s: usize, t: usize) -> Result<String> {
    let mut out = String::with_capacity(pattern.len() + 4);
    let mut rest = pattern;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let close = rest[open..]
            .find('}')
            .ok_or_else(|| Error::Config(format!("unclosed '{{' in pattern {pattern:?}")))?
            + open;
        let spec = &rest[open + 1..close];
        let (name, width) = match spec.split_once(':') {
            Some((n, w)) => {
                let w: usize = w
                    .trim_start_matches('0')
                    .parse()
                    .map_err(|_| Error::Config(format!("bad width in {{{spec}}}")))?;
                (n, w)
            }
            None => (spec, 0),
        };
        let value = match name {
            "idx" => idx,
            "s" => s,
            "t" => t,
            other => {
                return Err(Error::Config(format!(
                    "unknown placeholder {{{other}}} in pattern"
                )))
            }
        };
        out.push_str(&format!("{value:0width$}"));
        rest = &rest[close + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

/// Loads every view of a grid directory.
pub fn load_light_field(dir: &Path, layout: &GridLayout) -> Result<LightField> {
    if !dir.is_dir() {
        return Err(Error::io(
            dir,
            std::io::Error::new(std::io::ErrorKind::NotFound, "input directory not found"),
        ));
    }
    let mut jobs: Vec<(usize, usize, PathBuf)> = Vec::with_capacity(layout.n_s * layout.n_t);
    for t in 0..layout.n_t {
        for s in 0..layout.n_s {
            jobs.push((s, t, dir.join(layout.file_name(s, t)?)));
        }
    }
    if let Some((s, t, path)) = jobs.iter().find(|(_, _, p)| !p.is_file()) {
        return Err(Error::MissingView {
            s: *s,
            t: *t,
            path: path.clone(),
        });
    }
    let views = jobs
        .par_iter()
        .map(|(_, _, path)| Image::load_rgb(path))
        .collect::<Result<Vec<_>>>()?;
    LightField::from_views(layout.n_s, layout.n_t, views)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp_field(n: usize, w: usize, h: usize) -> LightField {
        let views = (0..n * n)
            .map(|i| {
                Image::from_fn(w, h, 3, |x, y, px| {
                    let v = ((x + 2 * y + i) % 17) as f64 / 16.0;
                    px.copy_from_slice(&[v, 1.0 - v, 0.5 * v]);
                })
            })
            .collect();
        LightField::from_views(n, n, views).unwrap()
    }

    #[test]
    fn pattern_formatting() {
        assert_eq!(format_pattern("input_Cam{idx:03}.png", 7, 0, 0).unwrap(), "input_Cam007.png");
        assert_eq!(format_pattern("v_{t}_{s:02}.ppm", 0, 3, 11).unwrap(), "v_11_03.ppm");
        assert!(format_pattern("x{q}.png", 0, 0, 0).is_err());
        assert!(format_pattern("x{idx.png", 0, 0, 0).is_err());
    }

    #[test]
    fn hci_layout_names() {
        let l = GridLayout::hci();
        assert_eq!(l.file_name(0, 0).unwrap(), "input_Cam000.png");
        assert_eq!(l.file_name(8, 8).unwrap(), "input_Cam080.png");
        assert_eq!(l.file_name(3, 1).unwrap(), "input_Cam012.png");
    }

    #[test]
    fn grid_must_be_at_least_3x3() {
        let views = vec![Image::new(4, 4, 3); 4];
        assert!(LightField::from_views(2, 2, views).is_err());
    }

    #[test]
    fn mismatched_view_is_named() {
        let mut views = vec![Image::new(4, 4, 3); 9];
        views[5] = Image::new(5, 4, 3);
        match LightField::from_views(3, 3, views) {
            Err(Error::DimensionMismatch { s, t, found_w, expected_w, .. }) => {
                assert_eq!((s, t, found_w, expected_w), (2, 1, 5, 4));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn crop_keeps_central_views() {
        let lf = ramp_field(9, 6, 5);
        let c = lf.crop_angular(5).unwrap();
        assert_eq!((c.n_s(), c.n_t(), c.s_center()), (5, 5, 2));
        assert_eq!(c.rgb(0, 0), lf.rgb(2, 2));
        assert_eq!(c.central_rgb(), lf.central_rgb());
        assert!(lf.crop_angular(4).is_err());
        assert!(lf.crop_angular(11).is_err());
        let same = lf.crop_angular(9).unwrap();
        assert_eq!(same.rgb, lf.rgb);
    }

    #[test]
    fn epi_center_row_matches_central_view() {
        let lf = ramp_field(5, 7, 6);
        let e = lf.extract_epi(EpiAxis::Horizontal, 3).unwrap();
        assert_eq!((e.width(), e.height()), (7, 5));
        assert_eq!(e.image.row(e.center_row), lf.central_lab().row(3));
        let v = lf.extract_epi(EpiAxis::Vertical, 2).unwrap();
        assert_eq!((v.width(), v.height()), (6, 5));
        for y in 0..6 {
            assert_eq!(v.image.pixel(y, v.center_row), lf.central_lab().pixel(2, y));
        }
        assert!(lf.extract_epi(EpiAxis::Horizontal, 6).is_err());
        assert!(lf.extract_epi(EpiAxis::Vertical, 7).is_err());
    }
}
