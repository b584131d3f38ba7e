//! Float image planes and the small amount of filtering the pipeline needs.

use image::RgbImage;

/// One row-major `f32` channel.
#[derive(Debug, Clone, PartialEq)]
pub struct Plane {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl Plane {
    pub fn new(width: usize, height: usize) -> Self {
        Plane {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }

    pub fn max(&self) -> f32 {
        self.data.iter().copied().fold(f32::NEG_INFINITY, f32::max)
    }
}

/// Split an RGB image into three planes with values in `[0, 255]`.
pub fn rgb_planes(image: &RgbImage) -> [Plane; 3] {
    let (w, h) = (image.width() as usize, image.height() as usize);
    let mut planes = [Plane::new(w, h), Plane::new(w, h), Plane::new(w, h)];
    for (i, px) in image.pixels().enumerate() {
        for c in 0..3 {
            planes[c].data[i] = px.0[c] as f32;
        }
    }
    planes
}

fn gaussian_kernel(sigma: f32) -> Vec<f32> {
    let radius = (sigma * 4.0).ceil() as usize;
    let mut k: Vec<f32> = (0..=radius)
        .map(|i| (-0.5 * (i as f32 / sigma).powi(2)).exp())
        .collect();
    let sum = k[0] + 2.0 * k[1..].iter().sum::<f32>();
    k.iter_mut().for_each(|v| *v /= sum);
    k
}

/// Separable Gaussian blur with clamp-to-edge borders. `sigma <= 0` is a copy.
pub fn gaussian_blur(plane: &Plane, sigma: f32) -> Plane {
    if sigma <= 0.0 {
        return plane.clone();
    }
    let kernel = gaussian_kernel(sigma);
    let r = kernel.len() as isize - 1;
    let (w, h) = (plane.width as isize, plane.height as isize);
    let mut tmp = Plane::new(plane.width, plane.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = kernel[0] * plane.at(x as usize, y as usize);
            for i in 1..=r {
                let xl = (x - i).clamp(0, w - 1) as usize;
                let xr = (x + i).clamp(0, w - 1) as usize;
                acc += kernel[i as usize] * (plane.at(xl, y as usize) + plane.at(xr, y as usize));
            }
            tmp.set(x as usize, y as usize, acc);
        }
    }
    let mut out = Plane::new(plane.width, plane.height);
    for y in 0..h {
        for x in 0..w {
            let mut acc = kernel[0] * tmp.at(x as usize, y as usize);
            for i in 1..=r {
                let yu = (y - i).clamp(0, h - 1) as usize;
                let yd = (y + i).clamp(0, h - 1) as usize;
                acc += kernel[i as usize] * (tmp.at(x as usize, yu) + tmp.at(x as usize, yd));
            }
            out.set(x as usize, y as usize, acc);
        }
    }
    out
}

/// Central-difference gradients `(d/dx, d/dy)`, one-sided at the borders.
pub fn gradients(plane: &Plane) -> (Plane, Plane) {
    let (w, h) = (plane.width, plane.height);
    let mut gx = Plane::new(w, h);
    let mut gy = Plane::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
            let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
            let dx = if xr > xl {
                (plane.at(xr, y) - plane.at(xl, y)) / (xr - xl) as f32
            } else {
                0.0
            };
            let dy = if yd > yu {
                (plane.at(x, yd) - plane.at(x, yu)) / (yd - yu) as f32
            } else {
                0.0
            };
            gx.set(x, y, dx);
            gy.set(x, y, dy);
        }
    }
    (gx, gy)
}

/// Half-wave rectified directional derivatives along `n` evenly spaced
/// orientations covering the full circle.
pub fn oriented_responses(gx: &Plane, gy: &Plane, n: usize) -> Vec<Plane> {
    (0..n)
        .map(|k| {
            let theta = k as f32 * std::f32::consts::TAU / n as f32;
            let (s, c) = theta.sin_cos();
            let mut out = Plane::new(gx.width, gx.height);
            for (o, (&dx, &dy)) in out.data.iter_mut().zip(gx.data.iter().zip(&gy.data)) {
                *o = (dx * c + dy * s).max(0.0);
            }
            out
        })
        .collect()
}
