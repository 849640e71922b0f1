use crate::error::{Error, Result};
use crate::tensor::{Plane, PlaneSet, Scalar};

/// Per-class output of the net for one window.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassPosterior<T> {
    pub values: Vec<T>,
}

impl<T: Scalar> ClassPosterior<T> {
    /// Index of the largest value; ties go to the lowest index.
    pub fn argmax(&self) -> usize {
        argmax(&self.values)
    }
}

pub(crate) fn argmax<T: Scalar>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// Dense per-pixel classification: one posterior plane per class plus the
/// argmax class map.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseOutput<T> {
    posteriors: PlaneSet<T>,
    classes: Vec<usize>,
}

impl<T: Scalar> DenseOutput<T> {
    pub fn from_posteriors(posteriors: PlaneSet<T>) -> Self {
        let (w, h) = (posteriors.width(), posteriors.height());
        let mut scratch = Vec::with_capacity(posteriors.count());
        let classes = (0..w * h)
            .map(|i| {
                scratch.clear();
                scratch.extend(posteriors.planes().iter().map(|p| p.data()[i]));
                argmax(&scratch)
            })
            .collect();
        Self { posteriors, classes }
    }

    /// Builds from row-major per-pixel vectors.
    pub fn from_pixels(width: usize, height: usize, pixels: &[Vec<T>]) -> Result<Self> {
        if pixels.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} output needs {} pixels, got {}",
                width * height,
                pixels.len()
            )));
        }
        let classes = pixels.first().map_or(0, Vec::len);
        let planes = (0..classes)
            .map(|c| Plane::new(width, height, pixels.iter().map(|p| p[c]).collect()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::from_posteriors(PlaneSet::new(planes)?))
    }

    pub fn width(&self) -> usize {
        self.posteriors.width()
    }

    pub fn height(&self) -> usize {
        self.posteriors.height()
    }

    pub fn class_count(&self) -> usize {
        self.posteriors.count()
    }

    pub fn posteriors(&self) -> &PlaneSet<T> {
        &self.posteriors
    }

    pub fn posterior(&self, x: usize, y: usize) -> ClassPosterior<T> {
        ClassPosterior {
            values: self.posteriors.planes().iter().map(|p| p.get(x, y)).collect(),
        }
    }

    /// Row-major argmax class indices.
    pub fn classes(&self) -> &[usize] {
        &self.classes
    }

    pub fn class_at(&self, x: usize, y: usize) -> usize {
        self.classes[y * self.width() + x]
    }
}
