//! Value types for 2D feature maps, sets of maps and fragments.
//!
//! Storage is row-major with `(row, col) = (y, x)`. Every type here is an
//! immutable value once built; operations return new values.

use std::fmt::{self, Debug, Display};

use num_traits::Float;

use crate::error::{range, Error, Result};

/// Floating-point element type. `f32` is the default precision, `f64` is
/// used for tight-tolerance verification.
pub trait Scalar: Float + Debug + Display + Default + Send + Sync + 'static {
    const NAME: &'static str;

    fn from_f32(v: f32) -> Self;
    fn from_f64(v: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Scalar for f32 {
    const NAME: &'static str = "f32";

    fn from_f32(v: f32) -> Self {
        v
    }
    fn from_f64(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    const NAME: &'static str = "f64";

    fn from_f32(v: f32) -> Self {
        v as f64
    }
    fn from_f64(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

/// A single 2D map.
#[derive(Clone, PartialEq)]
pub struct Plane<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Debug> Debug for Plane<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Plane")
            .field("width", &self.width)
            .field("height", &self.height)
            .field("data", &self.data)
            .finish()
    }
}

impl<T: Scalar> Plane<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!(
                "plane dimensions must be at least 1x1, got {width}x{height}"
            )));
        }
        if data.len() != width * height {
            return Err(Error::Shape(format!(
                "{width}x{height} plane needs {} values, got {}",
                width * height,
                data.len()
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: T) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> T) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::new(width, height, data)
    }

    /// Internal constructor for engine code that already guarantees the invariants.
    pub(crate) fn from_raw(width: usize, height: usize, data: Vec<T>) -> Self {
        debug_assert!(width > 0 && height > 0 && data.len() == width * height);
        Self { width, height, data }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn into_data(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self::from_raw(self.width, self.height, self.data.iter().map(|&v| f(v)).collect())
    }

    pub fn cast<U: Scalar>(&self) -> Plane<U> {
        Plane::from_raw(
            self.width,
            self.height,
            self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        )
    }

    /// Returns the `w`x`h` subwindow whose top-left corner is `(x, y)`.
    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        if w == 0 || h == 0 {
            return Err(range("crop size", format!("{w}x{h} is empty")));
        }
        if x + w > self.width {
            return Err(range(
                "crop x",
                format!("x={x} with width {w} exceeds plane width {}", self.width),
            ));
        }
        if y + h > self.height {
            return Err(range(
                "crop y",
                format!("y={y} with height {h} exceeds plane height {}", self.height),
            ));
        }
        let mut data = Vec::with_capacity(w * h);
        for row in y..y + h {
            data.extend_from_slice(&self.row(row)[x..x + w]);
        }
        Ok(Self::from_raw(w, h, data))
    }
}

/// Free-function form of [`Plane::crop`].
pub fn crop<T: Scalar>(plane: &Plane<T>, x: usize, y: usize, w: usize, h: usize) -> Result<Plane<T>> {
    plane.crop(x, y, w, h)
}

/// An ordered, non-empty set of equally sized planes.
#[derive(Clone, Debug, PartialEq)]
pub struct PlaneSet<T> {
    planes: Vec<Plane<T>>,
}

impl<T: Scalar> PlaneSet<T> {
    pub fn new(planes: Vec<Plane<T>>) -> Result<Self> {
        let first = planes
            .first()
            .ok_or_else(|| Error::Shape("plane set must hold at least one plane".into()))?;
        let (w, h) = (first.width, first.height);
        if let Some((i, p)) = planes.iter().enumerate().find(|(_, p)| p.width != w || p.height != h) {
            return Err(Error::Shape(format!(
                "plane {i} is {}x{}, expected {w}x{h}",
                p.width, p.height
            )));
        }
        Ok(Self { planes })
    }

    pub(crate) fn from_raw(planes: Vec<Plane<T>>) -> Self {
        debug_assert!(!planes.is_empty());
        Self { planes }
    }

    pub fn single(plane: Plane<T>) -> Self {
        Self { planes: vec![plane] }
    }

    pub fn planes(&self) -> &[Plane<T>] {
        &self.planes
    }

    pub fn into_planes(self) -> Vec<Plane<T>> {
        self.planes
    }

    pub fn count(&self) -> usize {
        self.planes.len()
    }

    pub fn width(&self) -> usize {
        self.planes[0].width
    }

    pub fn height(&self) -> usize {
        self.planes[0].height
    }

    pub fn crop(&self, x: usize, y: usize, w: usize, h: usize) -> Result<Self> {
        let planes = self
            .planes
            .iter()
            .map(|p| p.crop(x, y, w, h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { planes })
    }

    pub fn cast<U: Scalar>(&self) -> PlaneSet<U> {
        PlaneSet {
            planes: self.planes.iter().map(Plane::cast).collect(),
        }
    }
}

/// Where the largest difference between two plane sets was found.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffLocation {
    pub plane: usize,
    pub x: usize,
    pub y: usize,
}

/// Result of [`planes_equal`].
#[derive(Clone, Debug, PartialEq)]
pub struct Comparison {
    pub equal: bool,
    /// Largest absolute elementwise difference; infinite when a NaN was met.
    pub max_abs_diff: f64,
    pub location: Option<DiffLocation>,
    /// Set when the two sets differ in plane count or plane size.
    pub shape_mismatch: Option<String>,
}

impl Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(shape) = &self.shape_mismatch {
            return write!(f, "shape mismatch: {shape}");
        }
        write!(f, "max abs diff {:e}", self.max_abs_diff)?;
        if let Some(loc) = self.location {
            write!(f, " at plane {} (x={}, y={})", loc.plane, loc.x, loc.y)?;
        }
        Ok(())
    }
}

/// Compares two plane sets elementwise.
///
/// Returns `equal = true` iff both have the same plane count and size and
/// every `|a - b| <= tol`.
pub fn planes_equal<T: Scalar>(a: &PlaneSet<T>, b: &PlaneSet<T>, tol: f64) -> Comparison {
    if a.count() != b.count() || a.width() != b.width() || a.height() != b.height() {
        return Comparison {
            equal: false,
            max_abs_diff: f64::INFINITY,
            location: None,
            shape_mismatch: Some(format!(
                "{} planes of {}x{} vs {} planes of {}x{}",
                a.count(),
                a.width(),
                a.height(),
                b.count(),
                b.width(),
                b.height()
            )),
        };
    }
    let width = a.width();
    let mut max = 0.0f64;
    let mut location = None;
    for (pi, (pa, pb)) in a.planes.iter().zip(&b.planes).enumerate() {
        for (i, (&va, &vb)) in pa.data.iter().zip(&pb.data).enumerate() {
            let diff = (va.as_f64() - vb.as_f64()).abs();
            let diff = if diff.is_nan() { f64::INFINITY } else { diff };
            if location.is_none() || diff > max {
                max = diff;
                location = Some(DiffLocation {
                    plane: pi,
                    x: i % width,
                    y: i / width,
                });
            }
        }
    }
    Comparison {
        equal: max <= tol,
        max_abs_diff: max,
        location,
        shape_mismatch: None,
    }
}

/// A set of extended maps plus the bookkeeping that locates its windows in
/// the (padded) input image: the window whose data sits at map coordinate
/// `(cx, cy)` has its top-left corner at `(anchor_x + stride*cx, anchor_y + stride*cy)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Fragment<T> {
    maps: PlaneSet<T>,
    anchor_x: usize,
    anchor_y: usize,
    stride: usize,
}

impl<T: Scalar> Fragment<T> {
    pub fn new(maps: PlaneSet<T>, anchor_x: usize, anchor_y: usize, stride: usize) -> Result<Self> {
        if stride == 0 {
            return Err(range("stride", "stride must be at least 1"));
        }
        if anchor_x >= stride || anchor_y >= stride {
            return Err(range(
                "anchor",
                format!("anchor ({anchor_x}, {anchor_y}) must lie below stride {stride}"),
            ));
        }
        Ok(Self {
            maps,
            anchor_x,
            anchor_y,
            stride,
        })
    }

    /// The whole input image as the single fragment of layer 0.
    pub fn whole_image(maps: PlaneSet<T>) -> Self {
        Self {
            maps,
            anchor_x: 0,
            anchor_y: 0,
            stride: 1,
        }
    }

    pub(crate) fn with_maps(&self, maps: PlaneSet<T>) -> Self {
        Self {
            maps,
            anchor_x: self.anchor_x,
            anchor_y: self.anchor_y,
            stride: self.stride,
        }
    }

    pub(crate) fn from_raw(maps: PlaneSet<T>, anchor_x: usize, anchor_y: usize, stride: usize) -> Self {
        debug_assert!(anchor_x < stride && anchor_y < stride);
        Self {
            maps,
            anchor_x,
            anchor_y,
            stride,
        }
    }

    pub fn maps(&self) -> &PlaneSet<T> {
        &self.maps
    }

    pub fn anchor(&self) -> (usize, usize) {
        (self.anchor_x, self.anchor_y)
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn width(&self) -> usize {
        self.maps.width()
    }

    pub fn height(&self) -> usize {
        self.maps.height()
    }

    /// Map coordinate holding the window whose top-left corner is `(x, y)`,
    /// if this fragment's residue class contains it and its maps are large
    /// enough to hold a `window`x`window` crop there.
    pub fn locate(&self, x: usize, y: usize, window: usize) -> Option<(usize, usize)> {
        if x < self.anchor_x || y < self.anchor_y {
            return None;
        }
        let (dx, dy) = (x - self.anchor_x, y - self.anchor_y);
        if dx % self.stride != 0 || dy % self.stride != 0 {
            return None;
        }
        let (cx, cy) = (dx / self.stride, dy / self.stride);
        (cx + window <= self.width() && cy + window <= self.height()).then_some((cx, cy))
    }
}

/// All fragments present after a given layer.
#[derive(Clone, Debug, PartialEq)]
pub struct FragmentLayerState<T> {
    pub fragments: Vec<Fragment<T>>,
    pub layer_index: usize,
}

impl<T: Scalar> FragmentLayerState<T> {
    /// Layer-0 state: the input image as one fragment.
    pub fn from_image(image: PlaneSet<T>) -> Self {
        Self {
            fragments: vec![Fragment::whole_image(image)],
            layer_index: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    /// Anchors sorted by `(anchor_y, anchor_x)`.
    pub fn sorted_anchors(&self) -> Vec<(usize, usize)> {
        let mut anchors: Vec<_> = self.fragments.iter().map(Fragment::anchor).collect();
        anchors.sort_by_key(|&(x, y)| (y, x));
        anchors
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn seq(w: usize, h: usize) -> Plane<f32> {
        Plane::from_fn(w, h, |x, y| (y * w + x) as f32).unwrap()
    }

    #[test]
    fn plane_rejects_bad_shapes() {
        assert!(Plane::<f32>::new(0, 3, vec![]).is_err());
        assert!(Plane::<f32>::new(2, 2, vec![0.0; 3]).is_err());
    }

    #[test]
    fn identity_crop() {
        let p = seq(4, 4);
        assert_eq!(p.crop(0, 0, 4, 4).unwrap(), p);
    }

    #[test]
    fn crop_reads_row_major() {
        // rows/cols {(2,1),(2,2)}: row 2, columns 1 and 2
        let p = seq(4, 4);
        let c = p.crop(1, 2, 2, 1).unwrap();
        assert_eq!((c.width(), c.height()), (2, 1));
        assert_eq!(c.data(), &[9.0, 10.0]);
    }

    #[test]
    fn crop_out_of_bounds_names_coordinate() {
        let p = seq(4, 4);
        let err = p.crop(3, 0, 2, 1).unwrap_err().to_string();
        assert!(err.contains("x=3"), "{err}");
        let err = p.crop(0, 4, 1, 1).unwrap_err().to_string();
        assert!(err.contains("y=4"), "{err}");
    }

    #[test]
    fn plane_set_requires_equal_sizes() {
        assert!(PlaneSet::new(vec![seq(2, 2), seq(3, 2)]).is_err());
        assert!(PlaneSet::<f32>::new(vec![]).is_err());
    }

    #[test]
    fn planes_equal_is_reflexive() {
        let a = PlaneSet::new(vec![seq(3, 3), seq(3, 3)]).unwrap();
        let cmp = planes_equal(&a, &a, 0.0);
        assert!(cmp.equal);
        assert_eq!(cmp.max_abs_diff, 0.0);
    }

    #[test]
    fn planes_equal_reports_offending_cell() {
        let a = PlaneSet::new(vec![seq(3, 3), seq(3, 3)]).unwrap();
        let mut data = seq(3, 3).into_data();
        data[2 * 3 + 1] += 1e-4;
        let b = PlaneSet::new(vec![seq(3, 3), Plane::new(3, 3, data).unwrap()]).unwrap();
        let cmp = planes_equal(&a, &b, 1e-5);
        assert!(!cmp.equal);
        assert_eq!(cmp.location, Some(DiffLocation { plane: 1, x: 1, y: 2 }));
        assert!((cmp.max_abs_diff - 1e-4).abs() < 1e-6);
    }

    #[test]
    fn planes_equal_shape_mismatch_is_false() {
        let a = PlaneSet::single(seq(3, 3));
        let b = PlaneSet::single(seq(3, 2));
        let cmp = planes_equal(&a, &b, 1.0);
        assert!(!cmp.equal);
        assert!(cmp.shape_mismatch.is_some());
    }

    #[test]
    fn planes_equal_treats_nan_as_different() {
        let a = PlaneSet::single(Plane::filled(1, 1, 0.0f32).unwrap());
        let b = PlaneSet::single(Plane::filled(1, 1, f32::NAN).unwrap());
        assert!(!planes_equal(&a, &b, 1e9).equal);
    }

    #[test]
    fn fragment_anchor_must_be_below_stride() {
        let maps = PlaneSet::single(seq(2, 2));
        assert!(Fragment::new(maps.clone(), 2, 0, 2).is_err());
        assert!(Fragment::new(maps, 1, 1, 2).is_ok());
    }

    #[test]
    fn locate_maps_window_to_coordinate() {
        let f = Fragment::new(PlaneSet::single(seq(4, 4)), 1, 1, 2).unwrap();
        assert_eq!(f.locate(3, 5, 1), Some((1, 2)));
        assert_eq!(f.locate(2, 5, 1), None);
        assert_eq!(f.locate(3, 5, 3), None);
    }

    proptest! {
        #[test]
        fn crop_composes(
            w in 1usize..12, h in 1usize..12,
            a in any::<[u8; 8]>(),
        ) {
            let p = seq(w, h);
            let x1 = a[0] as usize % w;
            let y1 = a[1] as usize % h;
            let w1 = 1 + a[2] as usize % (w - x1);
            let h1 = 1 + a[3] as usize % (h - y1);
            let x2 = a[4] as usize % w1;
            let y2 = a[5] as usize % h1;
            let w2 = 1 + a[6] as usize % (w1 - x2);
            let h2 = 1 + a[7] as usize % (h1 - y2);
            let nested = p.crop(x1, y1, w1, h1).unwrap().crop(x2, y2, w2, h2).unwrap();
            let direct = p.crop(x1 + x2, y1 + y2, w2, h2).unwrap();
            prop_assert_eq!(nested, direct);
        }
    }
}
