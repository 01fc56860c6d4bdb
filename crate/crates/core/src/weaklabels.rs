//! Synthetic point annotations and the constant maps used for classes that
//! carry no annotation.
//!
//! Randomness comes from ChaCha8 seeded with [`rand::SeedableRng::seed_from_u64`];
//! slab-plane `s` draws from stream `s` of that generator, so slices can be
//! processed in any order and the output depends only on the input and seed.

use std::collections::{HashSet, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{insert_slice, GridShape, LabelVolume, SignedDistanceMap};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PointAnnotationConfig {
    /// Semi-axes in voxels as `(along cols, along rows)`.
    pub ellipse_semi_axes: (f64, f64),
    pub rng_seed: u64,
    /// One annotation per present class in every slab-plane, rather than one
    /// per class for the whole volume.
    pub per_slice: bool,
}

impl PointAnnotationConfig {
    pub fn new(rng_seed: u64) -> Self {
        Self {
            ellipse_semi_axes: (4.0, 2.0),
            rng_seed,
            per_slice: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b) = self.ellipse_semi_axes;
        if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ellipse semi-axes must be positive, got ({a}, {b})"
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AbsentClassPolicy {
    Zeros,
    Ones,
    Constant(f64),
}

impl AbsentClassPolicy {
    pub fn value(&self) -> f64 {
        match *self {
            AbsentClassPolicy::Zeros => 0.0,
            AbsentClassPolicy::Ones => 1.0,
            AbsentClassPolicy::Constant(v) => v,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.value();
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "absent-class value must be finite and ≥ 0, got {v}"
            )));
        }
        Ok(())
    }
}

/// Constant map standing in for a class with no annotation.
pub fn absent_class_map(shape: &GridShape, policy: &AbsentClassPolicy) -> Result<SignedDistanceMap> {
    policy.validate()?;
    SignedDistanceMap::new(shape.clone(), 0, vec![policy.value(); shape.len()])
}

/// Offsets `(drow, dcol)` of the filled, axis-aligned ellipse.
pub fn ellipse_offsets(semi_axes: (f64, f64)) -> Vec<(isize, isize)> {
    let (a, b) = semi_axes;
    let (ra, rb) = (a.floor() as isize, b.floor() as isize);
    let mut out = Vec::new();
    for dr in -rb..=rb {
        for dc in -ra..=ra {
            let (x, y) = (dc as f64 / a, dr as f64 / b);
            if x * x + y * y <= 1.0 {
                out.push((dr, dc));
            }
        }
    }
    out
}

/// Writes `class_id` over the 8-connected piece of `ellipse ∩ class mask`
/// that contains `center` in a 2D plane.
fn stamp_annotation(
    full: &[u32],
    rows: usize,
    cols: usize,
    class_id: u32,
    center: usize,
    ellipse: &[(isize, isize)],
    out: &mut [u32],
) {
    let (cr, cc) = ((center / cols) as isize, (center % cols) as isize);
    let in_plane = |r: isize, c: isize| r >= 0 && c >= 0 && r < rows as isize && c < cols as isize;
    let mut candidates: HashSet<usize> = ellipse
        .iter()
        .map(|&(dr, dc)| (cr + dr, cc + dc))
        .filter(|&(r, c)| in_plane(r, c))
        .map(|(r, c)| r as usize * cols + c as usize)
        .filter(|&p| full[p] == class_id)
        .collect();

    candidates.remove(&center);
    out[center] = class_id;
    let mut queue = VecDeque::from([center]);
    while let Some(p) = queue.pop_front() {
        let (r, c) = ((p / cols) as isize, (p % cols) as isize);
        for dr in -1..=1 {
            for dc in -1..=1 {
                if !in_plane(r + dr, c + dc) {
                    continue;
                }
                let q = (r + dr) as usize * cols + (c + dc) as usize;
                if candidates.remove(&q) {
                    out[q] = class_id;
                    queue.push_back(q);
                }
            }
        }
    }
}

fn present_classes(labels: &[u32], num_classes: usize) -> Vec<u32> {
    let mut present = vec![false; num_classes];
    for &v in labels {
        present[v as usize] = true;
    }
    (1..num_classes as u32).filter(|&k| present[k as usize]).collect()
}

/// Point annotations derived from full labels.
///
/// Every slab-plane gets one ellipse per foreground class present in it,
/// centered on a uniformly drawn voxel of that class. The annotation is the
/// 8-connected piece of `ellipse ∩ class mask` containing the center, so it is
/// always a subset of the class.
pub fn generate_points(full_labels: &LabelVolume, cfg: &PointAnnotationConfig) -> Result<LabelVolume> {
    cfg.validate()?;
    let shape = full_labels.shape();
    let [rows, cols, _] = shape.dims3();
    let ellipse = ellipse_offsets(cfg.ellipse_semi_axes);
    let num_classes = full_labels.num_classes();
    let mut out = vec![0u32; shape.len()];

    if cfg.per_slice {
        let planes: Vec<Vec<u32>> = (0..shape.num_slices())
            .into_par_iter()
            .map(|s| {
                let plane = full_labels.slice(s);
                let classes = present_classes(plane.data(), num_classes);
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
                rng.set_stream(s as u64);
                let mut annotated = vec![0u32; rows * cols];
                for k in classes {
                    let members: Vec<usize> =
                        (0..plane.data().len()).filter(|&p| plane.data()[p] == k).collect();
                    let center = members[rng.gen_range(0..members.len())];
                    stamp_annotation(plane.data(), rows, cols, k, center, &ellipse, &mut annotated);
                }
                annotated
            })
            .collect();
        for (s, plane) in planes.iter().enumerate() {
            insert_slice(&mut out, shape, s, plane);
        }
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let data = full_labels.data();
        for k in present_classes(data, num_classes) {
            let members: Vec<usize> = (0..data.len()).filter(|&i| data[i] == k).collect();
            let center = members[rng.gen_range(0..members.len())];
            let s = shape.coord3(center)[2];
            let plane = full_labels.slice(s);
            let mut annotated = crate::grid::extract_slice(&out, shape, s);
            let in_plane = center / shape.num_slices();
            stamp_annotation(plane.data(), rows, cols, k, in_plane, &ellipse, &mut annotated);
            insert_slice(&mut out, shape, s, &annotated);
        }
    }
    LabelVolume::new(shape.clone(), num_classes, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Lattice points of the ellipse by direct enumeration over a generous box,
    /// using exact integer arithmetic: (dc/a)² + (dr/b)² ≤ 1 ⇔ dc²b² + dr²a² ≤ a²b².
    fn lattice_count(a: i64, b: i64) -> usize {
        let mut n = 0;
        for dr in -3 * b..=3 * b {
            for dc in -3 * a..=3 * a {
                if dc * dc * b * b + dr * dr * a * a <= a * a * b * b {
                    n += 1;
                }
            }
        }
        n
    }

    #[test]
    fn ellipse_matches_lattice_enumeration() {
        assert_eq!(lattice_count(4, 2), 25);
        assert_eq!(ellipse_offsets((4.0, 2.0)).len(), 25);
        for (a, b) in [(1, 1), (2, 1), (3, 2), (5, 3), (8, 4)] {
            assert_eq!(ellipse_offsets((a as f64, b as f64)).len(), lattice_count(a, b));
        }
        let e = ellipse_offsets((4.0, 2.0));
        assert!(e.contains(&(0, 4)) && e.contains(&(2, 0)));
        assert!(!e.contains(&(4, 0)));
    }

    fn square_labels(n: usize, lo: usize, hi: usize) -> LabelVolume {
        let shape = GridShape::unit(&[n, n]).unwrap();
        let data = (0..n * n)
            .map(|i| {
                let (r, c) = (i / n, i % n);
                u32::from((lo..hi).contains(&r) && (lo..hi).contains(&c))
            })
            .collect();
        LabelVolume::new(shape, 2, data).unwrap()
    }

    #[test]
    fn interior_ellipse_is_complete() {
        let labels = square_labels(60, 5, 55);
        let ellipse = ellipse_offsets((4.0, 2.0));
        let mut complete = 0;
        for seed in 0..40 {
            let weak = generate_points(&labels, &PointAnnotationConfig::new(seed)).unwrap();
            let pts: Vec<(isize, isize)> = (0..3600)
                .filter(|&i| weak.data()[i] == 1)
                .map(|i| ((i / 60) as isize, (i % 60) as isize))
                .collect();
            let rmin = pts.iter().map(|p| p.0).min().unwrap();
            let rmax = pts.iter().map(|p| p.0).max().unwrap();
            let cmin = pts.iter().map(|p| p.1).min().unwrap();
            let cmax = pts.iter().map(|p| p.1).max().unwrap();
            if pts.len() == 25 {
                complete += 1;
                let center = ((rmin + rmax) / 2, (cmin + cmax) / 2);
                for &(dr, dc) in &ellipse {
                    assert!(pts.contains(&(center.0 + dr, center.1 + dc)));
                }
            } else {
                assert!(pts.len() < 25);
                assert!(rmin == 5 || rmax == 54 || cmin == 5 || cmax == 54);
            }
        }
        assert!(complete > 20);
    }

    #[test]
    fn single_voxel_class() {
        let shape = GridShape::unit(&[7, 7]).unwrap();
        let mut data = vec![0; 49];
        data[24] = 2;
        let labels = LabelVolume::new(shape, 3, data).unwrap();
        let weak = generate_points(&labels, &PointAnnotationConfig::new(3)).unwrap();
        assert_eq!(weak.data(), labels.data());
    }

    #[test]
    fn deterministic_for_seed() {
        let shape = GridShape::new(vec![20, 30, 4], vec![1.0, 1.0, 3.0]).unwrap();
        let data: Vec<u32> = (0..shape.len()).map(|i| ((i / 7) % 3) as u32).collect();
        let labels = LabelVolume::new(shape, 3, data).unwrap();
        let a = generate_points(&labels, &PointAnnotationConfig::new(11)).unwrap();
        let b = generate_points(&labels, &PointAnnotationConfig::new(11)).unwrap();
        let c = generate_points(&labels, &PointAnnotationConfig::new(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        for (w, f) in a.data().iter().zip(labels.data()) {
            assert!(*w == 0 || w == f);
        }
    }

    #[test]
    fn whole_volume_mode_annotates_one_slice_per_class() {
        let shape = GridShape::new(vec![10, 10, 5], vec![1.0, 1.0, 2.0]).unwrap();
        let labels = LabelVolume::new(shape.clone(), 2, vec![1; shape.len()]).unwrap();
        let cfg = PointAnnotationConfig {
            per_slice: false,
            ..PointAnnotationConfig::new(5)
        };
        let weak = generate_points(&labels, &cfg).unwrap();
        let slices_hit = (0..5).filter(|&s| weak.slice(s).count(1) > 0).count();
        assert_eq!(slices_hit, 1);
    }

    #[test]
    fn absent_maps() {
        let shape = GridShape::unit(&[4, 4]).unwrap();
        for (policy, v) in [
            (AbsentClassPolicy::Ones, 1.0),
            (AbsentClassPolicy::Zeros, 0.0),
            (AbsentClassPolicy::Constant(2.5), 2.5),
        ] {
            let m = absent_class_map(&shape, &policy).unwrap();
            assert_eq!(m.data(), &[v; 16]);
        }
        assert!(absent_class_map(&shape, &AbsentClassPolicy::Constant(f64::INFINITY)).is_err());
        assert!(absent_class_map(&shape, &AbsentClassPolicy::Constant(-1.0)).is_err());
    }

    #[test]
    fn invalid_axes() {
        let cfg = PointAnnotationConfig {
            ellipse_semi_axes: (0.0, 2.0),
            ..PointAnnotationConfig::new(0)
        };
        let labels = square_labels(5, 1, 3);
        assert!(generate_points(&labels, &cfg).is_err());
    }
}
