//! Dice score and 95th-percentile Hausdorff distance.
//!
//! Surface distances are measured between boundary voxel centers in physical
//! units. Directed distances come from an exact separable squared Euclidean
//! distance transform of the other surface, which scales to full volumes.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{boundary_of, Connectivity, GridShape, LabelVolume};

pub const REPORT_SCHEMA: u32 = 1;

fn check_dims(gt: &LabelVolume, pred: &LabelVolume) -> Result<()> {
    if gt.shape().dims() != pred.shape().dims() {
        return Err(Error::ShapeMismatch(format!(
            "ground truth {:?} vs prediction {:?}",
            gt.shape().dims(),
            pred.shape().dims()
        )));
    }
    Ok(())
}

/// `2|G ∩ S| / (|G| + |S|)` for one class; 1.0 when both are empty.
pub fn dice(gt: &LabelVolume, pred: &LabelVolume, class_id: u32) -> Result<f64> {
    check_dims(gt, pred)?;
    let (mut g, mut s, mut both) = (0usize, 0usize, 0usize);
    for (&a, &b) in gt.data().iter().zip(pred.data()) {
        let (in_g, in_s) = (a == class_id, b == class_id);
        g += usize::from(in_g);
        s += usize::from(in_s);
        both += usize::from(in_g && in_s);
    }
    if g + s == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * both as f64 / (g + s) as f64)
}

/// Nearest-rank percentile of unsorted `values`; `q` in `(0, 100]`.
pub fn nearest_rank_percentile(values: &mut [f64], q: f64) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let rank = ((q / 100.0) * values.len() as f64).ceil().max(1.0) as usize;
    Some(values[rank.min(values.len()) - 1])
}

/// Lower envelope of parabolas along one line (Felzenszwalb–Huttenlocher),
/// with squared sample spacing `w2`.
fn edt_line(f: &[f64], w2: f64, out: &mut [f64], sites: &mut Vec<usize>, bounds: &mut Vec<f64>) {
    sites.clear();
    bounds.clear();
    let key = |q: usize| f[q] + w2 * (q * q) as f64;
    for q in (0..f.len()).filter(|&q| f[q].is_finite()) {
        loop {
            let Some(&p) = sites.last() else { break };
            let s = (key(q) - key(p)) / (2.0 * w2 * (q - p) as f64);
            if sites.len() > 1 && s <= *bounds.last().unwrap() {
                sites.pop();
                bounds.pop();
            } else {
                bounds.push(s);
                break;
            }
        }
        if sites.is_empty() {
            bounds.push(f64::NEG_INFINITY);
        }
        sites.push(q);
    }
    if sites.is_empty() {
        out.fill(f64::INFINITY);
        return;
    }
    let mut k = 0;
    for (p, o) in out.iter_mut().enumerate() {
        while k + 1 < sites.len() && bounds[k + 1] < p as f64 {
            k += 1;
        }
        let q = sites[k];
        let d = p.abs_diff(q) as f64;
        *o = w2 * d * d + f[q];
    }
}

/// Squared physical distance from every voxel to the nearest `true` voxel.
pub(crate) fn squared_edt(shape: &GridShape, features: &[bool]) -> Vec<f64> {
    let dims = shape.dims3();
    let spacing = shape.spacing3();
    let mut grid: Vec<f64> = features
        .iter()
        .map(|&f| if f { 0.0 } else { f64::INFINITY })
        .collect();
    let strides = [dims[1] * dims[2], dims[2], 1];
    let (mut sites, mut bounds) = (Vec::new(), Vec::new());
    for axis in (0..shape.ndim()).rev() {
        let len = dims[axis];
        let w2 = spacing[axis] * spacing[axis];
        let mut line = vec![0.0; len];
        let mut out = vec![0.0; len];
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        for u in 0..dims[others[0]] {
            for v in 0..dims[others[1]] {
                let base = u * strides[others[0]] + v * strides[others[1]];
                for (t, x) in line.iter_mut().enumerate() {
                    *x = grid[base + t * strides[axis]];
                }
                edt_line(&line, w2, &mut out, &mut sites, &mut bounds);
                for (t, &x) in out.iter().enumerate() {
                    grid[base + t * strides[axis]] = x;
                }
            }
        }
    }
    grid
}

fn directed_distances(shape: &GridShape, from: &[usize], to: &[usize]) -> Vec<f64> {
    let mut features = vec![false; shape.len()];
    for &i in to {
        features[i] = true;
    }
    let sq = squared_edt(shape, &features);
    from.iter().map(|&i| sq[i].sqrt()).collect()
}

/// Symmetric 95th-percentile surface distance in physical units, or `None`
/// if either surface is empty.
///
/// Surfaces are the class boundaries under full connectivity; the result is
/// the larger of the two directed nearest-rank 95th percentiles.
pub fn hd95(
    gt: &LabelVolume,
    pred: &LabelVolume,
    class_id: u32,
    spacing: &[f64],
) -> Result<Option<f64>> {
    check_dims(gt, pred)?;
    let shape = gt.shape().with_spacing(spacing.to_vec())?;
    let g = boundary_of(gt, class_id, Connectivity::Full)?;
    let s = boundary_of(pred, class_id, Connectivity::Full)?;
    if g.is_empty() || s.is_empty() {
        return Ok(None);
    }
    let mut gs = directed_distances(&shape, &g, &s);
    let mut sg = directed_distances(&shape, &s, &g);
    let a = nearest_rank_percentile(&mut gs, 95.0).unwrap();
    let b = nearest_rank_percentile(&mut sg, 95.0).unwrap();
    Ok(Some(a.max(b)))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub dsc: f64,
    /// `None` when either surface is empty.
    pub hd95: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema: u32,
    pub per_class: BTreeMap<u32, ClassMetrics>,
    /// Unweighted mean over foreground classes; undefined HD95 values are
    /// left out of the mean.
    pub overall: ClassMetrics,
    /// Number of HD95 values that were undefined and skipped.
    pub hd95_undefined: usize,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl MetricReport {
    fn from_per_class(per_class: BTreeMap<u32, ClassMetrics>, hd95_undefined: usize) -> Self {
        let overall = ClassMetrics {
            dsc: mean(per_class.values().map(|m| m.dsc)).unwrap_or(1.0),
            hd95: mean(per_class.values().filter_map(|m| m.hd95)),
        };
        Self {
            schema: REPORT_SCHEMA,
            per_class,
            overall,
            hd95_undefined,
        }
    }

    /// Per-class means over several reports (e.g. subjects).
    pub fn aggregate(reports: &[MetricReport]) -> MetricReport {
        let mut classes: BTreeMap<u32, Vec<ClassMetrics>> = BTreeMap::new();
        for r in reports {
            for (&k, &m) in &r.per_class {
                classes.entry(k).or_default().push(m);
            }
        }
        let per_class = classes
            .into_iter()
            .map(|(k, ms)| {
                let dsc = mean(ms.iter().map(|m| m.dsc)).unwrap_or(1.0);
                let hd95 = mean(ms.iter().filter_map(|m| m.hd95));
                (k, ClassMetrics { dsc, hd95 })
            })
            .collect();
        let undefined = reports.iter().map(|r| r.hd95_undefined).sum();
        Self::from_per_class(per_class, undefined)
    }
}

/// Dice and HD95 for every foreground class, using the ground-truth spacing.
pub fn evaluate(gt: &LabelVolume, pred: &LabelVolume) -> Result<MetricReport> {
    check_dims(gt, pred)?;
    let num_classes = gt.num_classes().max(pred.num_classes()) as u32;
    let mut per_class = BTreeMap::new();
    let mut undefined = 0;
    for k in 1..num_classes {
        let dsc = dice(gt, pred, k)?;
        let hd = if k as usize >= gt.num_classes() || k as usize >= pred.num_classes() {
            None
        } else {
            hd95(gt, pred, k, gt.shape().spacing())?
        };
        undefined += usize::from(hd.is_none());
        per_class.insert(k, ClassMetrics { dsc, hd95: hd });
    }
    Ok(MetricReport::from_per_class(per_class, undefined))
}
