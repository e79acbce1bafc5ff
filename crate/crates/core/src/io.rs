//! Image loading/saving and the floating-point raster the pipeline works on.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};
use ndarray::Array2;

use crate::error::{Error, Result};

/// An image held as f64 planes in the nominal [0, 255] range.
/// One plane for grayscale, three (R, G, B) for color.
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    planes: Vec<Array2<f64>>,
}

impl Raster {
    pub fn gray(y: Array2<f64>) -> Self {
        Self { planes: vec![y] }
    }

    pub fn rgb(r: Array2<f64>, g: Array2<f64>, b: Array2<f64>) -> Self {
        assert_eq!(r.dim(), g.dim());
        assert_eq!(r.dim(), b.dim());
        Self {
            planes: vec![r, g, b],
        }
    }

    pub fn from_planes(planes: Vec<Array2<f64>>) -> Self {
        assert!(planes.len() == 1 || planes.len() == 3);
        Self { planes }
    }

    pub fn is_color(&self) -> bool {
        self.planes.len() == 3
    }

    pub fn planes(&self) -> &[Array2<f64>] {
        &self.planes
    }

    /// (height, width)
    pub fn dim(&self) -> (usize, usize) {
        self.planes[0].dim()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let img = image::open(path)?;
        Ok(Self::from_dynamic(&img))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        self.to_dynamic().save(path)?;
        Ok(())
    }

    pub fn from_dynamic(img: &DynamicImage) -> Self {
        match img {
            DynamicImage::ImageLuma8(g) => {
                let (w, h) = g.dimensions();
                let y = Array2::from_shape_fn((h as usize, w as usize), |(i, j)| {
                    g.get_pixel(j as u32, i as u32)[0] as f64
                });
                Self::gray(y)
            }
            other => {
                let rgb = other.to_rgb8();
                let (w, h) = rgb.dimensions();
                let plane = |c: usize| {
                    Array2::from_shape_fn((h as usize, w as usize), |(i, j)| {
                        rgb.get_pixel(j as u32, i as u32)[c] as f64
                    })
                };
                Self {
                    planes: vec![plane(0), plane(1), plane(2)],
                }
            }
        }
    }

    /// Quantize back to an 8-bit image, clamping to [0, 255].
    pub fn to_dynamic(&self) -> DynamicImage {
        let (h, w) = self.dim();
        let q = |v: f64| v.round().clamp(0.0, 255.0) as u8;
        if self.is_color() {
            let mut img = RgbImage::new(w as u32, h as u32);
            for i in 0..h {
                for j in 0..w {
                    img.put_pixel(
                        j as u32,
                        i as u32,
                        image::Rgb([
                            q(self.planes[0][[i, j]]),
                            q(self.planes[1][[i, j]]),
                            q(self.planes[2][[i, j]]),
                        ]),
                    );
                }
            }
            DynamicImage::ImageRgb8(img)
        } else {
            let mut img = GrayImage::new(w as u32, h as u32);
            for i in 0..h {
                for j in 0..w {
                    img.put_pixel(j as u32, i as u32, image::Luma([q(self.planes[0][[i, j]])]));
                }
            }
            DynamicImage::ImageLuma8(img)
        }
    }
}

/// Write a real-valued field as a 16-bit grayscale PNG with min-max scaling,
/// used by the symmetry-map debug dump.
pub fn save_field_png16(field: &Array2<f64>, path: &Path) -> Result<()> {
    let (h, w) = field.dim();
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in field.iter() {
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = (hi - lo).max(1e-12);
    let mut img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::new(w as u32, h as u32);
    for i in 0..h {
        for j in 0..w {
            let v = ((field[[i, j]] - lo) / span * 65535.0).round() as u16;
            img.put_pixel(j as u32, i as u32, image::Luma([v]));
        }
    }
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    img.save(path).map_err(Error::Image)
}
