//! Image tensors and the handful of geometric/metric helpers everything
//! else leans on. Images are `(H, W, C)` arrays of `f64` in `[0, 1]`,
//! C-order, channels innermost.

use ndarray::{Array1, Array3};

use crate::error::{Error, Result};

pub type Image = Array3<f64>;

/// Checks shape sanity, finiteness and the unit box. `tol` loosens the
/// box test for values that went through lossy storage.
pub fn validate_image(img: &Image, tol: f64) -> Result<()> {
    let (h, w, c) = img.dim();
    if h == 0 || w == 0 || c == 0 {
        return Err(Error::shape(format!("empty image dims ({h}, {w}, {c})")));
    }
    for &v in img.iter() {
        if !v.is_finite() {
            return Err(Error::invalid("image contains a non-finite value"));
        }
        if v < -tol || v > 1.0 + tol {
            return Err(Error::invalid(format!("image value {v} outside [0, 1]")));
        }
    }
    Ok(())
}

pub fn clamp01(img: &Image) -> Image {
    img.mapv(|v| v.clamp(0.0, 1.0))
}

pub fn clamp01_inplace(img: &mut Image) {
    img.mapv_inplace(|v| v.clamp(0.0, 1.0));
}

pub fn l2_norm(img: &Image) -> f64 {
    img.iter().map(|v| v * v).sum::<f64>().sqrt()
}

pub fn linf_norm(img: &Image) -> f64 {
    img.iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn l2_dist(a: &Image, b: &Image) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn linf_dist(a: &Image, b: &Image) -> f64 {
    debug_assert_eq!(a.dim(), b.dim());
    a.iter()
        .zip(b.iter())
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Mean value per channel, spatial average.
pub fn channel_means(img: &Image) -> Array1<f64> {
    let (h, w, c) = img.dim();
    let mut out = Array1::zeros(c);
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out[ch] += img[[y, x, ch]];
            }
        }
    }
    out.mapv_inplace(|v| v / (h * w) as f64);
    out
}

pub fn hflip(img: &Image) -> Image {
    let (h, w, c) = img.dim();
    let mut out = Image::zeros((h, w, c));
    for y in 0..h {
        for x in 0..w {
            for ch in 0..c {
                out[[y, x, ch]] = img[[y, w - 1 - x, ch]];
            }
        }
    }
    out
}

pub fn crop(img: &Image, y0: usize, x0: usize, ch: usize, cw: usize) -> Result<Image> {
    let (h, w, _) = img.dim();
    if ch == 0 || cw == 0 || y0 + ch > h || x0 + cw > w {
        return Err(Error::invalid(format!(
            "crop ({y0}, {x0}) size ({ch}, {cw}) exceeds image ({h}, {w})"
        )));
    }
    Ok(img
        .slice(ndarray::s![y0..y0 + ch, x0..x0 + cw, ..])
        .to_owned())
}

/// Bilinear resample with half-pixel centers. Same-size input is
/// returned unchanged so identity augmentations stay bit-exact.
pub fn resize_bilinear(img: &Image, oh: usize, ow: usize) -> Image {
    let (h, w, c) = img.dim();
    if oh == h && ow == w {
        return img.clone();
    }
    let mut out = Image::zeros((oh, ow, c));
    let sy = h as f64 / oh as f64;
    let sx = w as f64 / ow as f64;
    for y in 0..oh {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for x in 0..ow {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            for ch in 0..c {
                let top = img[[y0, x0, ch]] * (1.0 - wx) + img[[y0, x1, ch]] * wx;
                let bot = img[[y1, x0, ch]] * (1.0 - wx) + img[[y1, x1, ch]] * wx;
                out[[y, x, ch]] = top * (1.0 - wy) + bot * wy;
            }
        }
    }
    out
}
