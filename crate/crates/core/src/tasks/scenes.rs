//! Hard-visibility 2D scenes. Coverage is decided by the pixel center only,
//! so every scene is piecewise constant in its parameters.

use super::image::Image;

/// Deterministic forward renderer `theta -> Image`.
pub trait Scene: Send + Sync {
    fn dim(&self) -> usize;
    fn width(&self) -> usize;
    fn height(&self) -> usize;
    fn channels(&self) -> usize;
    fn render(&self, theta: &[f64]) -> Image;
}

pub const DEFAULT_RESOLUTION: usize = 64;

/// Maps pixel `(i, j)` to the world point
/// `(x0 + (i + 0.5) * pixel_w, y0 + (j + 0.5) * pixel_h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Viewport {
    pub x0: f64,
    pub y0: f64,
    pub pixel_w: f64,
    pub pixel_h: f64,
}

impl Viewport {
    /// The unit square spread over `width x height` pixels.
    pub fn unit(width: usize, height: usize) -> Self {
        Self {
            x0: 0.0,
            y0: 0.0,
            pixel_w: 1.0 / width as f64,
            pixel_h: 1.0 / height as f64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Disc {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

impl Disc {
    /// Fills every pixel whose center lies strictly inside the disc, with
    /// the image covering the unit square.
    pub fn rasterize(&self, img: &mut Image, color: &[f64]) {
        let view = Viewport::unit(img.width(), img.height());
        self.rasterize_in(img, color, &view);
    }

    pub fn rasterize_in(&self, img: &mut Image, color: &[f64], view: &Viewport) {
        if !(self.cx.is_finite() && self.cy.is_finite()) || self.radius <= 0.0 {
            return;
        }
        let (w, h) = (img.width() as f64, img.height() as f64);
        let col = |x: f64| (x - view.x0) / view.pixel_w - 0.5;
        let row = |y: f64| (y - view.y0) / view.pixel_h - 0.5;
        let x0 = col(self.cx - self.radius).floor().max(0.0);
        let x1 = col(self.cx + self.radius).ceil().min(w - 1.0);
        let y0 = row(self.cy - self.radius).floor().max(0.0);
        let y1 = row(self.cy + self.radius).ceil().min(h - 1.0);
        if x0 > x1 || y0 > y1 {
            return;
        }
        let r2 = self.radius * self.radius;
        for y in y0 as usize..=y1 as usize {
            let dy = view.y0 + (y as f64 + 0.5) * view.pixel_h - self.cy;
            for x in x0 as usize..=x1 as usize {
                let dx = view.x0 + (x as f64 + 0.5) * view.pixel_w - self.cx;
                if dx * dx + dy * dy < r2 {
                    img.set_pixel(x, y, color);
                }
            }
        }
    }
}

/// A single white disc on black; `theta = (x, y)`. The view extends a
/// margin past the unit square so that perturbed positions stay visible.
#[derive(Debug, Clone)]
pub struct Disc2dScene {
    pub width: usize,
    pub height: usize,
    pub radius: f64,
    pub view: Viewport,
}

impl Disc2dScene {
    /// `margin` world units on every side of the unit square, at
    /// `pixels_per_unit` resolution.
    pub fn with_margin(margin: f64, pixels_per_unit: usize, radius: f64) -> Self {
        let side = ((1.0 + 2.0 * margin) * pixels_per_unit as f64).round() as usize;
        let pixel = 1.0 / pixels_per_unit as f64;
        Self {
            width: side,
            height: side,
            radius,
            view: Viewport {
                x0: -margin,
                y0: -margin,
                pixel_w: pixel,
                pixel_h: pixel,
            },
        }
    }
}

impl Default for Disc2dScene {
    fn default() -> Self {
        Self::with_margin(1.0, DEFAULT_RESOLUTION, 0.12)
    }
}

impl Scene for Disc2dScene {
    fn dim(&self) -> usize {
        2
    }
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn channels(&self) -> usize {
        1
    }

    fn render(&self, theta: &[f64]) -> Image {
        let mut img = Image::new(self.width, self.height, 1);
        Disc {
            cx: theta[0],
            cy: theta[1],
            radius: self.radius,
        }
        .rasterize_in(&mut img, &[1.0], &self.view);
        img
    }
}

/// A movable red disc `theta = (x, y, depth)` and a fixed blue occluder.
/// The smaller depth wins wherever the two overlap.
#[derive(Debug, Clone)]
pub struct OcclusionScene {
    pub width: usize,
    pub height: usize,
    pub radius: f64,
    pub occluder: Disc,
    pub occluder_depth: f64,
    pub color: [f64; 3],
    pub occluder_color: [f64; 3],
}

impl Default for OcclusionScene {
    fn default() -> Self {
        Self {
            width: DEFAULT_RESOLUTION,
            height: DEFAULT_RESOLUTION,
            radius: 0.1,
            occluder: Disc {
                cx: 0.5,
                cy: 0.5,
                radius: 0.25,
            },
            occluder_depth: 0.5,
            color: [0.9, 0.15, 0.1],
            occluder_color: [0.1, 0.2, 0.9],
        }
    }
}

impl Scene for OcclusionScene {
    fn dim(&self) -> usize {
        3
    }
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn channels(&self) -> usize {
        3
    }

    fn render(&self, theta: &[f64]) -> Image {
        let mut img = Image::new(self.width, self.height, 3);
        let movable = Disc {
            cx: theta[0],
            cy: theta[1],
            radius: self.radius,
        };
        // painter's order: far first
        if theta[2] < self.occluder_depth {
            self.occluder.rasterize(&mut img, &self.occluder_color);
            movable.rasterize(&mut img, &self.color);
        } else {
            movable.rasterize(&mut img, &self.color);
            self.occluder.rasterize(&mut img, &self.occluder_color);
        }
        img
    }
}

/// Top-down orthographic view of the ground plane `z = 0`. An occluder
/// disc outside the view casts a hard shadow from a point light at
/// `(theta[0], theta[1], light_height)`.
#[derive(Debug, Clone)]
pub struct ShadowScene {
    pub width: usize,
    pub height: usize,
    /// Window onto the ground plane `z = 0`.
    pub view: Viewport,
    pub occluder_center: [f64; 3],
    /// Unit normal of the occluder's plane.
    pub occluder_normal: [f64; 3],
    pub occluder_radius: f64,
    pub light_height: f64,
    pub lit: f64,
    pub shadow: f64,
}

impl Default for ShadowScene {
    fn default() -> Self {
        let tilt = 20f64.to_radians();
        let pixel = 1.0 / DEFAULT_RESOLUTION as f64;
        Self {
            width: 3 * DEFAULT_RESOLUTION,
            height: 3 * DEFAULT_RESOLUTION,
            view: Viewport {
                x0: -1.0,
                y0: -1.0,
                pixel_w: pixel,
                pixel_h: pixel,
            },
            occluder_center: [0.5, 2.25, 0.5],
            occluder_normal: [tilt.sin(), 0.0, tilt.cos()],
            occluder_radius: 0.1,
            light_height: 1.0,
            lit: 0.8,
            shadow: 0.15,
        }
    }
}

fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

impl ShadowScene {
    /// Light lying in the occluder's plane: the shadow is undefined and the
    /// renderer draws none.
    pub fn is_degenerate(&self, theta: &[f64]) -> bool {
        let to_light = [
            theta[0] - self.occluder_center[0],
            theta[1] - self.occluder_center[1],
            self.light_height - self.occluder_center[2],
        ];
        dot(self.occluder_normal, to_light).abs() < 1e-12
    }

    fn shadowed(&self, p: [f64; 3], light: [f64; 3]) -> bool {
        let d = [light[0] - p[0], light[1] - p[1], light[2] - p[2]];
        let denom = dot(self.occluder_normal, d);
        if denom.abs() < 1e-15 {
            return false;
        }
        let c = self.occluder_center;
        let t = dot(self.occluder_normal, [c[0] - p[0], c[1] - p[1], c[2] - p[2]]) / denom;
        if !(t > 0.0 && t < 1.0) {
            return false;
        }
        let q = [p[0] + t * d[0] - c[0], p[1] + t * d[1] - c[1], p[2] + t * d[2] - c[2]];
        dot(q, q) < self.occluder_radius * self.occluder_radius
    }
}

impl Scene for ShadowScene {
    fn dim(&self) -> usize {
        2
    }
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn channels(&self) -> usize {
        1
    }

    fn render(&self, theta: &[f64]) -> Image {
        let mut img = Image::filled(self.width, self.height, 1, self.lit);
        if self.is_degenerate(theta) {
            return img;
        }
        let light = [theta[0], theta[1], self.light_height];
        let v = self.view;
        for y in 0..self.height {
            for x in 0..self.width {
                let p = [v.x0 + (x as f64 + 0.5) * v.pixel_w, v.y0 + (y as f64 + 0.5) * v.pixel_h, 0.0];
                if self.shadowed(p, light) {
                    img.set_pixel(x, y, &[self.shadow]);
                }
            }
        }
        img
    }
}

/// `K` colored discs composited in index order (later discs on top);
/// `theta = (x_0, y_0, x_1, y_1, ...)`.
#[derive(Debug, Clone)]
pub struct SortScene {
    pub width: usize,
    pub height: usize,
    pub radius: f64,
    pub colors: Vec<[f64; 3]>,
}

impl SortScene {
    pub fn new(count: usize) -> Self {
        let colors = (0..count).map(|k| hue_to_rgb(k as f64 / count as f64)).collect();
        Self {
            width: DEFAULT_RESOLUTION,
            height: DEFAULT_RESOLUTION,
            radius: 0.06,
            colors,
        }
    }

    pub fn count(&self) -> usize {
        self.colors.len()
    }
}

fn hue_to_rgb(hue: f64) -> [f64; 3] {
    let h = (hue.rem_euclid(1.0)) * 6.0;
    let f = h - h.floor();
    match h as usize {
        0 => [1.0, f, 0.0],
        1 => [1.0 - f, 1.0, 0.0],
        2 => [0.0, 1.0, f],
        3 => [0.0, 1.0 - f, 1.0],
        4 => [f, 0.0, 1.0],
        _ => [1.0, 0.0, 1.0 - f],
    }
}

impl Scene for SortScene {
    fn dim(&self) -> usize {
        2 * self.colors.len()
    }
    fn width(&self) -> usize {
        self.width
    }
    fn height(&self) -> usize {
        self.height
    }
    fn channels(&self) -> usize {
        3
    }

    fn render(&self, theta: &[f64]) -> Image {
        let mut img = Image::new(self.width, self.height, 3);
        for (k, color) in self.colors.iter().enumerate() {
            Disc {
                cx: theta[2 * k],
                cy: theta[2 * k + 1],
                radius: self.radius,
            }
            .rasterize(&mut img, color);
        }
        img
    }
}
