use super::{coverage, Dataset, Factor, FactorSpec, FactorValue, FactorValues};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const CIRCLE_RANGE: (f64, f64) = (0.2, 0.8);
/// Diameter as a fraction of the frame.
pub const CIRCLE_DIAMETER: f64 = 0.2;

/// A single antialiased disc whose centre is the only source of variation.
#[derive(Clone, Debug)]
pub struct Circles {
    size: usize,
    spec: FactorSpec,
}

impl Circles {
    pub fn new(size: usize) -> Result<Self> {
        if size < 4 {
            return Err(Error::invalid(format!("circle frames need at least 4 pixels, got {size}")));
        }
        let (lo, hi) = CIRCLE_RANGE;
        let spec = FactorSpec::new(vec![Factor::continuous("x", lo, hi), Factor::continuous("y", lo, hi)])?;
        Ok(Circles { size, spec })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// `H × H` grayscale frame, stored as `[H, H, 1]`.
    pub fn render_xy(&self, x: f64, y: f64) -> Result<Tensor> {
        let (lo, hi) = CIRCLE_RANGE;
        if !(lo..=hi).contains(&x) || !(lo..=hi).contains(&y) {
            return Err(Error::invalid(format!("circle centre ({x}, {y}) outside [{lo}, {hi}]²")));
        }
        let h = self.size as f64;
        let (cx, cy) = (x * h, y * h);
        let r2 = (CIRCLE_DIAMETER * h / 2.0).powi(2);
        let data = coverage(self.size, self.size, |px, py| (px - cx).powi(2) + (py - cy).powi(2) <= r2);
        Tensor::new(vec![self.size, self.size, 1], data)
    }
}

impl Dataset for Circles {
    fn name(&self) -> &str {
        "circles"
    }

    fn spec(&self) -> &FactorSpec {
        &self.spec
    }

    fn image_dims(&self) -> (usize, usize, usize) {
        (self.size, self.size, 1)
    }

    fn render(&self, factors: &FactorValues) -> Result<Tensor> {
        match factors.values() {
            [FactorValue::Real(x), FactorValue::Real(y)] => self.render_xy(*x, *y),
            _ => Err(Error::invalid("circles expect two real factors (x, y)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pixel(img: &Tensor, n: usize, r: usize, c: usize) -> f64 {
        img.data()[r * n + c]
    }

    #[test]
    fn centred_disc_is_symmetric() {
        let n = 16;
        let img = Circles::new(n).unwrap().render_xy(0.5, 0.5).unwrap();
        for r in 0..n {
            for c in 0..n {
                let v = pixel(&img, n, r, c);
                assert!((v - pixel(&img, n, r, n - 1 - c)).abs() < 1e-12);
                assert!((v - pixel(&img, n, n - 1 - r, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mirrored_positions_mirror_images() {
        let n = 16;
        let ds = Circles::new(n).unwrap();
        let a = ds.render_xy(0.2, 0.5).unwrap();
        let b = ds.render_xy(0.8, 0.5).unwrap();
        for r in 0..n {
            for c in 0..n {
                assert!((pixel(&a, n, r, c) - pixel(&b, n, r, n - 1 - c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn mean_pixel_matches_disc_area() {
        let ds = Circles::new(16).unwrap();
        for &(x, y) in &[(0.5, 0.5), (0.3, 0.7), (0.61, 0.42)] {
            let img = ds.render_xy(x, y).unwrap();
            let mean = img.sum() / img.len() as f64;
            assert!((mean - std::f64::consts::PI * 0.01).abs() < 0.01, "{mean}");
        }
    }

    #[test]
    fn out_of_range_rejected() {
        let ds = Circles::new(16).unwrap();
        assert!(ds.render_xy(0.1, 0.5).is_err());
        assert!(ds.render_xy(0.5, 0.81).is_err());
    }

    #[test]
    fn rendering_is_pure_and_bounded() {
        let ds = Circles::new(16).unwrap();
        let a = ds.render_xy(0.33, 0.44).unwrap();
        assert_eq!(a, ds.render_xy(0.33, 0.44).unwrap());
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}
