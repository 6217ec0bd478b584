use super::{coverage, Dataset, Factor, FactorSpec, FactorValue, FactorValues};
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Generative factors a gridworld spec can include.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridFactor {
    PosX,
    PosY,
    Scale,
    Intensity,
    Shape,
}

impl GridFactor {
    pub fn name(self) -> &'static str {
        match self {
            GridFactor::PosX => "posx",
            GridFactor::PosY => "posy",
            GridFactor::Scale => "scale",
            GridFactor::Intensity => "intensity",
            GridFactor::Shape => "shape",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Ok(match name {
            "posx" => GridFactor::PosX,
            "posy" => GridFactor::PosY,
            "scale" => GridFactor::Scale,
            "intensity" => GridFactor::Intensity,
            "shape" => GridFactor::Shape,
            other => return Err(Error::invalid(format!("unknown gridworld factor `{other}`"))),
        })
    }
}

/// A single square or disc on a black frame; every factor is discrete.
///
/// Positions span the central half of the frame, sides run from `0.2 H` to
/// `0.5 H`, and intensity from 0.4 to 1. Factors left out of the spec take
/// their largest value (shape: square).
#[derive(Clone, Debug)]
pub struct Gridworld {
    size: usize,
    layout: Vec<GridFactor>,
    spec: FactorSpec,
}

impl Gridworld {
    pub fn new(size: usize, factors: &[(GridFactor, usize)]) -> Result<Self> {
        if size < 4 {
            return Err(Error::invalid(format!("gridworld frames need at least 4 pixels, got {size}")));
        }
        if !(2..=5).contains(&factors.len()) {
            return Err(Error::invalid(format!("gridworld needs 2 to 5 factors, got {}", factors.len())));
        }
        for required in [GridFactor::PosX, GridFactor::PosY] {
            if !factors.iter().any(|(f, _)| *f == required) {
                return Err(Error::invalid(format!("gridworld spec lacks `{}`", required.name())));
            }
        }
        if let Some((_, c)) = factors.iter().find(|(f, c)| *f == GridFactor::Shape && *c != 2) {
            return Err(Error::invalid(format!("shape has two values, not {c}")));
        }
        let spec = FactorSpec::new(factors.iter().map(|(f, c)| Factor::discrete(f.name(), *c)).collect())?;
        Ok(Gridworld { size, layout: factors.iter().map(|(f, _)| *f).collect(), spec })
    }

    /// Five-factor preset with a 4·4·3·3·2 grid.
    pub fn standard(size: usize) -> Result<Self> {
        use GridFactor::*;
        Self::new(size, &[(PosX, 4), (PosY, 4), (Scale, 3), (Intensity, 3), (Shape, 2)])
    }

    pub fn size(&self) -> usize {
        self.size
    }

    fn fraction(index: usize, cardinality: usize) -> f64 {
        if cardinality == 1 { 1.0 } else { (index - 1) as f64 / (cardinality - 1) as f64 }
    }
}

impl Dataset for Gridworld {
    fn name(&self) -> &str {
        "gridworld"
    }

    fn spec(&self) -> &FactorSpec {
        &self.spec
    }

    fn image_dims(&self) -> (usize, usize, usize) {
        (self.size, self.size, 1)
    }

    fn render(&self, factors: &FactorValues) -> Result<Tensor> {
        self.spec.check(factors)?;
        let h = self.size as f64;
        let (mut px, mut py, mut scale, mut intensity, mut disc) = (0.5, 0.5, 1.0, 1.0, false);
        for ((kind, factor), value) in self.layout.iter().zip(self.spec.factors()).zip(factors.values()) {
            let FactorValue::Index(i) = *value else { unreachable!("checked above") };
            let t = Self::fraction(i, factor.cardinality().unwrap_or(1));
            match kind {
                GridFactor::PosX => px = t,
                GridFactor::PosY => py = t,
                GridFactor::Scale => scale = t,
                GridFactor::Intensity => intensity = t,
                GridFactor::Shape => disc = i == 2,
            }
        }
        let cx = (0.25 + 0.5 * px) * h;
        let cy = (0.25 + 0.5 * py) * h;
        let half = (0.2 + 0.3 * scale) * h / 2.0;
        let level = 0.4 + 0.6 * intensity;
        let mask = if disc {
            coverage(self.size, self.size, |x, y| (x - cx).powi(2) + (y - cy).powi(2) <= half * half)
        } else {
            coverage(self.size, self.size, |x, y| (x - cx).abs() <= half && (y - cy).abs() <= half)
        };
        Tensor::new(vec![self.size, self.size, 1], mask.into_iter().map(|m| m * level).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use GridFactor::*;

    #[test]
    fn intensity_scales_pixels() {
        let ds = Gridworld::standard(16).unwrap();
        let a = ds.render(&FactorValues::discrete(&[2, 3, 2, 1, 2])).unwrap();
        let b = ds.render(&FactorValues::discrete(&[2, 3, 2, 3, 2])).unwrap();
        let ratio = 1.0 / 0.4;
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x * ratio - y).abs() < 1e-12);
        }
    }

    #[test]
    fn small_grid_images_are_distinct() {
        let ds = Gridworld::new(16, &[(PosX, 4), (PosY, 4), (Shape, 2)]).unwrap();
        let images: Vec<Tensor> =
            ds.spec().enumerate().unwrap().iter().map(|f| ds.render(f).unwrap()).collect();
        assert_eq!(images.len(), 32);
        for i in 0..images.len() {
            for j in 0..i {
                assert_ne!(images[i], images[j], "{i} vs {j}");
            }
        }
    }

    #[test]
    fn centred_largest_square_is_exact() {
        // Odd cardinality puts the middle value at the frame centre.
        let ds = Gridworld::new(16, &[(PosX, 3), (PosY, 3), (Scale, 2), (Shape, 2)]).unwrap();
        let img = ds.render(&FactorValues::discrete(&[2, 2, 2, 1])).unwrap();
        for r in 0..16 {
            for c in 0..16 {
                let expected = if (4..12).contains(&r) && (4..12).contains(&c) { 1.0 } else { 0.0 };
                assert_eq!(img.data()[r * 16 + c], expected, "({r}, {c})");
            }
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        assert!(Gridworld::new(16, &[(PosX, 4)]).is_err());
        assert!(Gridworld::new(16, &[(PosX, 4), (Scale, 3)]).is_err());
        assert!(Gridworld::new(16, &[(PosX, 4), (PosY, 4), (Shape, 3)]).is_err());
        assert!(Gridworld::new(16, &[(PosX, 4), (PosY, 4), (PosY, 2)]).is_err());
    }

    #[test]
    fn pixels_are_bounded() {
        let ds = Gridworld::standard(16).unwrap();
        for f in ds.spec().enumerate().unwrap() {
            assert!(ds.render(&f).unwrap().data().iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}
