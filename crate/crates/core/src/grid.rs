//! Grid data model shared by the transforms, losses, metrics and IO.
//!
//! Volumes are stored flat in C order over `(row, col[, slab])`, where `slab`
//! is the foot-head axis of a 3D scan. Multi-channel and multi-class data is
//! channel/class-major: channel `c` occupies `data[c * n..(c + 1) * n]`.
//!
//! Internally every grid is handled as 3D; a 2D grid is a 3D grid with a
//! single slab and no neighbors along the third axis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Neighborhood used for path propagation and boundary extraction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Connectivity {
    /// 4-neighborhood in 2D, 6-neighborhood in 3D.
    FacesOnly,
    /// 8-neighborhood in 2D, 26-neighborhood in 3D.
    #[default]
    Full,
}

/// Voxel counts and physical spacing (mm per voxel) along each axis.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridShape {
    dims: Vec<usize>,
    spacing: Vec<f64>,
}

impl GridShape {
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>) -> Result<Self> {
        if dims.len() != spacing.len() {
            return Err(Error::InvalidShape(format!(
                "{} dims but {} spacing values",
                dims.len(),
                spacing.len()
            )));
        }
        if !(2..=3).contains(&dims.len()) {
            return Err(Error::InvalidShape(format!(
                "expected 2 or 3 axes, got {}",
                dims.len()
            )));
        }
        if dims.contains(&0) {
            return Err(Error::InvalidShape(format!("zero-sized axis in {dims:?}")));
        }
        if spacing.iter().any(|&s| !(s.is_finite() && s > 0.0)) {
            return Err(Error::InvalidShape(format!(
                "spacing must be finite and positive, got {spacing:?}"
            )));
        }
        Ok(Self { dims, spacing })
    }

    /// Unit spacing along every axis.
    pub fn unit(dims: &[usize]) -> Result<Self> {
        Self::new(dims.to_vec(), vec![1.0; dims.len()])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Number of voxels.
    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub(crate) fn dims3(&self) -> [usize; 3] {
        [self.dims[0], self.dims[1], self.dims.get(2).copied().unwrap_or(1)]
    }

    pub(crate) fn spacing3(&self) -> [f64; 3] {
        [
            self.spacing[0],
            self.spacing[1],
            self.spacing.get(2).copied().unwrap_or(1.0),
        ]
    }

    pub fn contains(&self, coord: &[usize]) -> bool {
        coord.len() == self.ndim() && coord.iter().zip(&self.dims).all(|(&c, &d)| c < d)
    }

    /// Flat C-order index of `coord`.
    pub fn index(&self, coord: &[usize]) -> Result<usize> {
        if !self.contains(coord) {
            return Err(Error::OutOfBounds {
                coord: coord.to_vec(),
                dims: self.dims.clone(),
            });
        }
        Ok(coord.iter().zip(&self.dims).fold(0, |acc, (&c, &d)| acc * d + c))
    }

    /// Coordinate of flat index `index`. Panics if out of range.
    pub fn coord(&self, index: usize) -> Vec<usize> {
        assert!(index < self.len(), "flat index {index} out of range");
        let mut rest = index;
        let mut coord = vec![0; self.ndim()];
        for axis in (0..self.ndim()).rev() {
            coord[axis] = rest % self.dims[axis];
            rest /= self.dims[axis];
        }
        coord
    }

    pub(crate) fn coord3(&self, index: usize) -> [usize; 3] {
        let [_, d1, d2] = self.dims3();
        [index / (d1 * d2), (index / d2) % d1, index % d2]
    }

    /// Number of slabs (1 for a 2D grid).
    pub fn num_slices(&self) -> usize {
        self.dims3()[2]
    }

    /// 2D shape of one slab-plane.
    pub fn slice_shape(&self) -> GridShape {
        GridShape {
            dims: self.dims[..2].to_vec(),
            spacing: self.spacing[..2].to_vec(),
        }
    }

    pub fn with_spacing(&self, spacing: Vec<f64>) -> Result<Self> {
        Self::new(self.dims.clone(), spacing)
    }

    pub(crate) fn ensure_same(&self, other: &GridShape, what: &str) -> Result<()> {
        if self != other {
            return Err(Error::ShapeMismatch(format!(
                "{what}: {:?}/{:?} vs {:?}/{:?}",
                self.dims, self.spacing, other.dims, other.spacing
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct Offset {
    pub delta: [isize; 3],
    pub step: f64,
}

/// Precomputed neighbor offsets and physical step lengths for a grid.
#[derive(Clone, Debug)]
pub(crate) struct Stencil {
    pub dims: [usize; 3],
    pub offsets: Vec<Offset>,
}

impl Stencil {
    pub fn new(shape: &GridShape, connectivity: Connectivity) -> Self {
        let spacing = shape.spacing3();
        let slab_range: &[isize] = if shape.ndim() == 3 { &[-1, 0, 1] } else { &[0] };
        let mut offsets = Vec::with_capacity(26);
        for dr in -1isize..=1 {
            for dc in -1isize..=1 {
                for &ds in slab_range {
                    let delta = [dr, dc, ds];
                    let nonzero = delta.iter().filter(|&&d| d != 0).count();
                    let keep = match connectivity {
                        Connectivity::FacesOnly => nonzero == 1,
                        Connectivity::Full => nonzero >= 1,
                    };
                    if !keep {
                        continue;
                    }
                    let step = delta
                        .iter()
                        .zip(spacing)
                        .map(|(&d, s)| (d as f64 * s).powi(2))
                        .sum::<f64>()
                        .sqrt();
                    offsets.push(Offset { delta, step });
                }
            }
        }
        Self {
            dims: shape.dims3(),
            offsets,
        }
    }

    #[inline]
    pub fn shift(&self, coord: [usize; 3], delta: [isize; 3]) -> Option<usize> {
        let mut flat = 0usize;
        for axis in 0..3 {
            let c = coord[axis] as isize + delta[axis];
            if c < 0 || c >= self.dims[axis] as isize {
                return None;
            }
            flat = flat * self.dims[axis] + c as usize;
        }
        Some(flat)
    }

    #[inline]
    pub fn for_each_neighbor(&self, coord: [usize; 3], mut f: impl FnMut(usize, f64)) {
        for off in &self.offsets {
            if let Some(j) = self.shift(coord, off.delta) {
                f(j, off.step);
            }
        }
    }
}

/// In-bounds neighbors of `coord` with their physical step lengths.
pub fn neighbors(
    coord: &[usize],
    shape: &GridShape,
    connectivity: Connectivity,
) -> Result<Vec<(Vec<usize>, f64)>> {
    let index = shape.index(coord)?;
    let stencil = Stencil::new(shape, connectivity);
    let mut out = Vec::with_capacity(stencil.offsets.len());
    stencil.for_each_neighbor(shape.coord3(index), |j, step| {
        out.push((shape.coord(j), step));
    });
    Ok(out)
}

/// Flat indices (ascending) of the voxels of `class_id` that touch a voxel of
/// another class or the image border.
pub fn boundary_of(
    labels: &LabelVolume,
    class_id: u32,
    connectivity: Connectivity,
) -> Result<Vec<usize>> {
    if class_id as usize >= labels.num_classes() {
        return Err(Error::InvalidValue(format!(
            "class {class_id} outside [0, {})",
            labels.num_classes()
        )));
    }
    let shape = labels.shape();
    let stencil = Stencil::new(shape, connectivity);
    let data = labels.data();
    let ndim = shape.ndim();
    let dims = shape.dims3();
    let mut out = Vec::new();
    for (i, &label) in data.iter().enumerate() {
        if label != class_id {
            continue;
        }
        let coord = shape.coord3(i);
        let on_edge = (0..ndim).any(|a| coord[a] == 0 || coord[a] + 1 == dims[a]);
        let touches_other = on_edge
            || stencil.offsets.iter().any(|off| match stencil.shift(coord, off.delta) {
                Some(j) => data[j] != class_id,
                None => true,
            });
        if touches_other {
            out.push(i);
        }
    }
    Ok(out)
}

fn check_len(shape: &GridShape, planes: usize, len: usize, what: &str) -> Result<()> {
    let expected = planes * shape.len();
    if len != expected {
        return Err(Error::ShapeMismatch(format!(
            "{what}: expected {expected} values, got {len}"
        )));
    }
    Ok(())
}

/// Multi-channel intensity image.
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarVolume {
    shape: GridShape,
    channels: usize,
    data: Vec<f64>,
}

impl ScalarVolume {
    pub fn new(shape: GridShape, channels: usize, data: Vec<f64>) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidValue("scalar volume needs ≥1 channel".into()));
        }
        check_len(&shape, channels, data.len(), "scalar volume")?;
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIntensity(i % shape.len()));
        }
        Ok(Self {
            shape,
            channels,
            data,
        })
    }

    pub fn single_channel(shape: GridShape, data: Vec<f64>) -> Result<Self> {
        Self::new(shape, 1, data)
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        let n = self.shape.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub(crate) fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        let n = self.shape.len();
        &mut self.data[c * n..(c + 1) * n]
    }

    pub fn slice(&self, s: usize) -> ScalarVolume {
        let data = (0..self.channels)
            .flat_map(|c| extract_slice(self.channel(c), &self.shape, s))
            .collect();
        ScalarVolume {
            shape: self.shape.slice_shape(),
            channels: self.channels,
            data,
        }
    }
}

/// Integer class map; class 0 is background.
#[derive(Clone, Debug, PartialEq)]
pub struct LabelVolume {
    shape: GridShape,
    num_classes: usize,
    data: Vec<u32>,
}

impl LabelVolume {
    pub fn new(shape: GridShape, num_classes: usize, data: Vec<u32>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidValue("num_classes must be ≥ 1".into()));
        }
        check_len(&shape, 1, data.len(), "label volume")?;
        if let Some(&bad) = data.iter().find(|&&v| v as usize >= num_classes) {
            return Err(Error::InvalidValue(format!(
                "label {bad} outside [0, {num_classes})"
            )));
        }
        Ok(Self {
            shape,
            num_classes,
            data,
        })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[u32] {
        &self.data
    }

    pub fn count(&self, class_id: u32) -> usize {
        self.data.iter().filter(|&&v| v == class_id).count()
    }

    pub fn slice(&self, s: usize) -> LabelVolume {
        LabelVolume {
            shape: self.shape.slice_shape(),
            num_classes: self.num_classes,
            data: extract_slice(&self.data, &self.shape, s),
        }
    }
}

/// Per-class probabilities summing to one at every voxel.
#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilityVolume {
    shape: GridShape,
    num_classes: usize,
    data: Vec<f64>,
}

impl ProbabilityVolume {
    pub const SUM_TOLERANCE: f64 = 1e-6;

    pub fn new(shape: GridShape, num_classes: usize, data: Vec<f64>) -> Result<Self> {
        if num_classes == 0 {
            return Err(Error::InvalidValue("num_classes must be ≥ 1".into()));
        }
        check_len(&shape, num_classes, data.len(), "probability volume")?;
        if let Some(v) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidValue(format!("probability {v} outside [0, 1]")));
        }
        let n = shape.len();
        for i in 0..n {
            let sum: f64 = (0..num_classes).map(|k| data[k * n + i]).sum();
            if (sum - 1.0).abs() > Self::SUM_TOLERANCE {
                return Err(Error::InvalidValue(format!(
                    "probabilities at voxel {i} sum to {sum}"
                )));
            }
        }
        Ok(Self {
            shape,
            num_classes,
            data,
        })
    }

    /// One-hot probabilities of a label map.
    pub fn one_hot(labels: &LabelVolume) -> Self {
        let n = labels.shape.len();
        let mut data = vec![0.0; labels.num_classes * n];
        for (i, &k) in labels.data.iter().enumerate() {
            data[k as usize * n + i] = 1.0;
        }
        Self {
            shape: labels.shape.clone(),
            num_classes: labels.num_classes,
            data,
        }
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn class(&self, k: usize) -> &[f64] {
        let n = self.shape.len();
        &self.data[k * n..(k + 1) * n]
    }
}

/// Nonnegative distance from a class boundary; `f64::INFINITY` marks
/// unreachable voxels.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMap {
    pub(crate) shape: GridShape,
    pub(crate) class_id: u32,
    pub(crate) data: Vec<f64>,
}

impl DistanceMap {
    pub fn new(shape: GridShape, class_id: u32, data: Vec<f64>) -> Result<Self> {
        check_len(&shape, 1, data.len(), "distance map")?;
        if let Some(v) = data.iter().find(|v| v.is_nan() || **v < 0.0) {
            return Err(Error::InvalidValue(format!("distance {v} is not ≥ 0")));
        }
        Ok(Self {
            shape,
            class_id,
            data,
        })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn for_class(mut self, class_id: u32) -> Self {
        self.class_id = class_id;
        self
    }
}

/// Distance map negated inside the class region.
#[derive(Clone, Debug, PartialEq)]
pub struct SignedDistanceMap {
    pub(crate) shape: GridShape,
    pub(crate) class_id: u32,
    pub(crate) data: Vec<f64>,
}

impl SignedDistanceMap {
    pub fn new(shape: GridShape, class_id: u32, data: Vec<f64>) -> Result<Self> {
        check_len(&shape, 1, data.len(), "signed distance map")?;
        if data.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidValue("NaN in signed distance map".into()));
        }
        Ok(Self {
            shape,
            class_id,
            data,
        })
    }

    pub fn shape(&self) -> &GridShape {
        &self.shape
    }

    pub fn class_id(&self) -> u32 {
        self.class_id
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn for_class(mut self, class_id: u32) -> Self {
        self.class_id = class_id;
        self
    }

    /// Reassembles per-slab 2D maps into one map of `shape`.
    pub fn stack_slices(shape: &GridShape, class_id: u32, slices: &[SignedDistanceMap]) -> Result<Self> {
        if slices.len() != shape.num_slices() {
            return Err(Error::ShapeMismatch(format!(
                "{} slices for {} slabs",
                slices.len(),
                shape.num_slices()
            )));
        }
        let mut data = vec![0.0; shape.len()];
        let plane = shape.slice_shape();
        for (s, slice) in slices.iter().enumerate() {
            slice.shape.ensure_same(&plane, "slice")?;
            insert_slice(&mut data, shape, s, &slice.data);
        }
        Self::new(shape.clone(), class_id, data)
    }
}

pub(crate) fn extract_slice<T: Copy>(data: &[T], shape: &GridShape, s: usize) -> Vec<T> {
    let [d0, d1, d2] = shape.dims3();
    assert!(s < d2);
    (0..d0 * d1).map(|p| data[p * d2 + s]).collect()
}

pub(crate) fn insert_slice<T: Copy>(data: &mut [T], shape: &GridShape, s: usize, plane: &[T]) {
    let [_, _, d2] = shape.dims3();
    for (p, &v) in plane.iter().enumerate() {
        data[p * d2 + s] = v;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sorted_steps(mut n: Vec<(Vec<usize>, f64)>) -> Vec<f64> {
        n.sort_by(|a, b| a.1.total_cmp(&b.1));
        n.into_iter().map(|(_, s)| s).collect()
    }

    #[test]
    fn shape_validation() {
        assert!(GridShape::new(vec![3], vec![1.0]).is_err());
        assert!(GridShape::new(vec![3, 3], vec![1.0]).is_err());
        assert!(GridShape::new(vec![3, 0], vec![1.0, 1.0]).is_err());
        assert!(GridShape::new(vec![3, 3], vec![1.0, 0.0]).is_err());
        assert!(GridShape::new(vec![3, 3, 2, 1], vec![1.0; 4]).is_err());
        assert!(GridShape::new(vec![3, 3, 2], vec![1.0, 1.0, 4.0]).is_ok());
    }

    #[test]
    fn index_coord_round_trip() {
        let shape = GridShape::unit(&[3, 4, 5]).unwrap();
        for i in 0..shape.len() {
            let c = shape.coord(i);
            assert_eq!(shape.index(&c).unwrap(), i);
            assert_eq!(shape.coord3(i).to_vec(), c);
        }
    }

    #[test]
    fn center_of_3x3_full() {
        let shape = GridShape::unit(&[3, 3]).unwrap();
        let n = neighbors(&[1, 1], &shape, Connectivity::Full).unwrap();
        let steps = sorted_steps(n);
        assert_eq!(steps.len(), 8);
        assert!(steps[..4].iter().all(|&s| s == 1.0));
        assert!(steps[4..].iter().all(|&s| s == 2f64.sqrt()));
    }

    #[test]
    fn corner_of_3x3() {
        let shape = GridShape::unit(&[3, 3]).unwrap();
        assert_eq!(neighbors(&[0, 0], &shape, Connectivity::Full).unwrap().len(), 3);
        assert_eq!(neighbors(&[0, 0], &shape, Connectivity::FacesOnly).unwrap().len(), 2);
    }

    #[test]
    fn anisotropic_slab_step() {
        let shape = GridShape::new(vec![3, 3, 3], vec![1.0, 1.0, 4.0]).unwrap();
        let n = neighbors(&[1, 1, 1], &shape, Connectivity::Full).unwrap();
        assert_eq!(n.len(), 26);
        let up = n.iter().find(|(c, _)| c == &vec![1, 1, 2]).unwrap();
        assert_eq!(up.1, 4.0);
        let corner = n.iter().find(|(c, _)| c == &vec![0, 0, 0]).unwrap();
        assert!((corner.1 - 18f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn unit_3d_steps_are_1_sqrt2_sqrt3() {
        let shape = GridShape::unit(&[3, 3, 3]).unwrap();
        let steps = sorted_steps(neighbors(&[1, 1, 1], &shape, Connectivity::Full).unwrap());
        assert_eq!(steps.iter().filter(|&&s| s == 1.0).count(), 6);
        assert_eq!(steps.iter().filter(|&&s| s == 2f64.sqrt()).count(), 12);
        assert_eq!(steps.iter().filter(|&&s| s == 3f64.sqrt()).count(), 8);
    }

    #[test]
    fn out_of_bounds_neighbor_query() {
        let shape = GridShape::unit(&[3, 3]).unwrap();
        assert!(matches!(
            neighbors(&[3, 0], &shape, Connectivity::Full),
            Err(Error::OutOfBounds { .. })
        ));
    }

    #[test]
    fn full_grid_boundary_is_outer_ring() {
        let shape = GridShape::unit(&[5, 5]).unwrap();
        let labels = LabelVolume::new(shape.clone(), 2, vec![1; 25]).unwrap();
        let b = boundary_of(&labels, 1, Connectivity::Full).unwrap();
        assert_eq!(b.len(), 16);
        for i in b {
            let c = shape.coord(i);
            assert!(c[0] == 0 || c[0] == 4 || c[1] == 0 || c[1] == 4);
        }
    }

    #[test]
    fn single_voxel_and_absent_boundaries() {
        let shape = GridShape::unit(&[4, 4]).unwrap();
        let mut data = vec![0; 16];
        data[5] = 1;
        let labels = LabelVolume::new(shape, 3, data).unwrap();
        assert_eq!(boundary_of(&labels, 1, Connectivity::Full).unwrap(), vec![5]);
        assert!(boundary_of(&labels, 2, Connectivity::Full).unwrap().is_empty());
        assert!(boundary_of(&labels, 3, Connectivity::Full).is_err());
    }

    #[test]
    fn interior_rectangle_boundary_is_perimeter() {
        let shape = GridShape::unit(&[8, 9]).unwrap();
        let mut data = vec![0; 72];
        for r in 2..6 {
            for c in 1..7 {
                data[r * 9 + c] = 1;
            }
        }
        let labels = LabelVolume::new(shape.clone(), 2, data).unwrap();
        for conn in [Connectivity::Full, Connectivity::FacesOnly] {
            let b = boundary_of(&labels, 1, conn).unwrap();
            let expected: Vec<usize> = (0..72)
                .filter(|&i| {
                    let c = shape.coord(i);
                    (2..6).contains(&c[0])
                        && (1..7).contains(&c[1])
                        && (c[0] == 2 || c[0] == 5 || c[1] == 1 || c[1] == 6)
                })
                .collect();
            assert_eq!(b, expected);
        }
    }

    #[test]
    fn probability_validation() {
        let shape = GridShape::unit(&[1, 2]).unwrap();
        assert!(ProbabilityVolume::new(shape.clone(), 2, vec![0.3, 0.5, 0.7, 0.5]).is_ok());
        assert!(ProbabilityVolume::new(shape.clone(), 2, vec![0.3, 0.5, 0.6, 0.5]).is_err());
        assert!(ProbabilityVolume::new(shape, 2, vec![1.2, 0.5, -0.2, 0.5]).is_err());
    }

    #[test]
    fn slice_extraction_and_stacking() {
        let shape = GridShape::new(vec![2, 3, 4], vec![1.0, 1.0, 3.0]).unwrap();
        let data: Vec<f64> = (0..24).map(f64::from).collect();
        let vol = ScalarVolume::single_channel(shape.clone(), data.clone()).unwrap();
        let slices: Vec<_> = (0..4)
            .map(|s| {
                let v = vol.slice(s);
                assert_eq!(v.shape().dims(), &[2, 3]);
                SignedDistanceMap::new(v.shape().clone(), 1, v.data().to_vec()).unwrap()
            })
            .collect();
        let stacked = SignedDistanceMap::stack_slices(&shape, 1, &slices).unwrap();
        assert_eq!(stacked.data(), &data[..]);
    }

    #[test]
    fn invalid_labels_rejected() {
        let shape = GridShape::unit(&[2, 2]).unwrap();
        assert!(LabelVolume::new(shape.clone(), 2, vec![0, 1, 2, 0]).is_err());
        assert!(LabelVolume::new(shape, 2, vec![0, 1, 1]).is_err());
    }
}
