//! Intensity-aware distance maps and the signed maps fed to the boundary loss.
//!
//! Additive kinds (`Euclidean`, `Geodesic`, `Intensity`) accumulate a
//! weighted-L1 step cost `mix * |ΔI| + (1 - mix) * step_length` along grid
//! paths, so `mix = 0` is purely spatial and `mix = 1` purely intensity
//! based. `Mbd` is the minimum barrier distance, the smallest
//! `max(I) - min(I)` over paths from the source set.
//!
//! Two engines are provided. [`distance_map_exact`] is a best-first search
//! and [`distance_map_raster`] iterates directional sweeps until a fixed
//! point or a pass budget is reached.

mod raster;
mod search;

use std::borrow::Cow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{
    boundary_of, Connectivity, DistanceMap, GridShape, LabelVolume, ScalarVolume, SignedDistanceMap,
};
use crate::weaklabels::{absent_class_map, AbsentClassPolicy};

pub use raster::RasterConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceKind {
    Euclidean,
    Geodesic,
    Intensity,
    Mbd,
}

impl DistanceKind {
    pub const ALL: [DistanceKind; 4] = [
        DistanceKind::Euclidean,
        DistanceKind::Geodesic,
        DistanceKind::Intensity,
        DistanceKind::Mbd,
    ];

    pub fn default_mix(self) -> f64 {
        match self {
            DistanceKind::Euclidean | DistanceKind::Mbd => 0.0,
            DistanceKind::Geodesic => 0.5,
            DistanceKind::Intensity => 1.0,
        }
    }

    pub fn is_additive(self) -> bool {
        self != DistanceKind::Mbd
    }

    pub fn short_name(self) -> &'static str {
        match self {
            DistanceKind::Euclidean => "euc",
            DistanceKind::Geodesic => "geo",
            DistanceKind::Intensity => "int",
            DistanceKind::Mbd => "mbd",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransformConfig {
    pub kind: DistanceKind,
    /// Weight of `|ΔI|` in the additive step cost. Ignored for `Mbd`.
    pub intensity_mix: f64,
    pub connectivity: Connectivity,
    /// Intensity channel the distances are computed on.
    pub channel: usize,
    /// Affinely map the channel to `[0, 255]` before computing maps.
    pub rescale_to_255: bool,
}

impl TransformConfig {
    pub fn new(kind: DistanceKind) -> Self {
        Self {
            kind,
            intensity_mix: kind.default_mix(),
            connectivity: Connectivity::Full,
            channel: 0,
            rescale_to_255: true,
        }
    }

    pub fn with_mix(mut self, mix: f64) -> Self {
        self.intensity_mix = mix;
        self
    }

    pub fn with_connectivity(mut self, connectivity: Connectivity) -> Self {
        self.connectivity = connectivity;
        self
    }

    pub fn with_channel(mut self, channel: usize) -> Self {
        self.channel = channel;
        self
    }

    pub fn with_rescale(mut self, rescale: bool) -> Self {
        self.rescale_to_255 = rescale;
        self
    }

    pub fn validate(&self, image: &ScalarVolume) -> Result<()> {
        if self.channel >= image.channels() {
            return Err(Error::InvalidConfig(format!(
                "channel {} but image has {} channel(s)",
                self.channel,
                image.channels()
            )));
        }
        if !(0.0..=1.0).contains(&self.intensity_mix) {
            return Err(Error::InvalidConfig(format!(
                "intensity mix {} outside [0, 1]",
                self.intensity_mix
            )));
        }
        let pinned = match self.kind {
            DistanceKind::Euclidean => Some(0.0),
            DistanceKind::Intensity => Some(1.0),
            DistanceKind::Geodesic | DistanceKind::Mbd => None,
        };
        if let Some(mix) = pinned {
            if self.intensity_mix != mix {
                return Err(Error::InvalidConfig(format!(
                    "{:?} requires intensity mix {mix}, got {}",
                    self.kind, self.intensity_mix
                )));
            }
        }
        Ok(())
    }
}

/// Which engine computes additive maps.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub enum Engine {
    #[default]
    Exact,
    Raster(RasterConfig),
}

/// Cost of one step between neighbors with intensities `a`, `b`.
#[inline]
pub fn step_cost(a: f64, b: f64, step_length: f64, mix: f64) -> f64 {
    mix * (a - b).abs() + (1.0 - mix) * step_length
}

fn validate_sources(shape: &GridShape, sources: &[usize]) -> Result<()> {
    if sources.is_empty() {
        return Err(Error::NoSources);
    }
    if let Some(&s) = sources.iter().find(|&&s| s >= shape.len()) {
        return Err(Error::InvalidValue(format!(
            "source index {s} outside grid of {} voxels",
            shape.len()
        )));
    }
    Ok(())
}

/// Distance from the `sources` (flat voxel indices) by best-first search.
///
/// Additive kinds give the exact shortest path cost. `Mbd` settles the first
/// (lowest-barrier) path interval reaching each voxel; the result is an upper
/// bound of the true minimum barrier distance and exact on 1D grids and
/// constant images.
pub fn distance_map_exact(
    image: &ScalarVolume,
    sources: &[usize],
    cfg: &TransformConfig,
) -> Result<DistanceMap> {
    cfg.validate(image)?;
    validate_sources(image.shape(), sources)?;
    let intensities = image.channel(cfg.channel);
    let data = match cfg.kind {
        DistanceKind::Mbd => {
            search::minimum_barrier(image.shape(), intensities, sources, cfg.connectivity)
        }
        _ => search::shortest_paths(
            image.shape(),
            intensities,
            sources,
            cfg.connectivity,
            cfg.intensity_mix,
        ),
    };
    Ok(DistanceMap {
        shape: image.shape().clone(),
        class_id: 0,
        data,
    })
}

/// Raster-scan approximation of the additive distances.
pub fn distance_map_raster(
    image: &ScalarVolume,
    sources: &[usize],
    cfg: &TransformConfig,
    rcfg: &RasterConfig,
) -> Result<DistanceMap> {
    cfg.validate(image)?;
    if cfg.kind == DistanceKind::Mbd {
        return Err(Error::Unsupported(
            "the raster engine does not compute minimum barrier distances".into(),
        ));
    }
    rcfg.validate()?;
    validate_sources(image.shape(), sources)?;
    let data = raster::sweep(
        image.shape(),
        image.channel(cfg.channel),
        sources,
        cfg.connectivity,
        cfg.intensity_mix,
        rcfg,
    );
    Ok(DistanceMap {
        shape: image.shape().clone(),
        class_id: 0,
        data,
    })
}

pub fn distance_map(
    image: &ScalarVolume,
    sources: &[usize],
    cfg: &TransformConfig,
    engine: &Engine,
) -> Result<DistanceMap> {
    match engine {
        Engine::Exact => distance_map_exact(image, sources, cfg),
        Engine::Raster(rcfg) => distance_map_raster(image, sources, cfg, rcfg),
    }
}

/// Negates `dist` inside the class region of `labels`.
pub fn make_signed_map(dist: &DistanceMap, labels: &LabelVolume) -> Result<SignedDistanceMap> {
    dist.shape.ensure_same(labels.shape(), "distance map vs labels")?;
    let class_id = dist.class_id;
    let data = dist
        .data
        .iter()
        .zip(labels.data())
        .map(|(&d, &label)| {
            if label == class_id && d != 0.0 {
                -d
            } else {
                d
            }
        })
        .collect();
    Ok(SignedDistanceMap {
        shape: dist.shape.clone(),
        class_id,
        data,
    })
}

/// Affinely maps `channel` onto `[0, 255]`.
pub fn rescale_intensities(image: &ScalarVolume, channel: usize) -> Result<ScalarVolume> {
    if channel >= image.channels() {
        return Err(Error::InvalidConfig(format!(
            "channel {channel} but image has {} channel(s)",
            image.channels()
        )));
    }
    let values = image.channel(channel);
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    if hi <= lo {
        return Err(Error::DegenerateRange);
    }
    let scale = 255.0 / (hi - lo);
    let mut out = image.clone();
    for v in out.channel_mut(channel) {
        *v = ((*v - lo) * scale).clamp(0.0, 255.0);
    }
    Ok(out)
}

/// Applies the configured rescale. A constant channel is left as is: every
/// kind depends only on intensity differences, which are all zero then.
fn prepare_image<'a>(image: &'a ScalarVolume, cfg: &TransformConfig) -> Result<Cow<'a, ScalarVolume>> {
    cfg.validate(image)?;
    if !cfg.rescale_to_255 {
        return Ok(Cow::Borrowed(image));
    }
    match rescale_intensities(image, cfg.channel) {
        Ok(v) => Ok(Cow::Owned(v)),
        Err(Error::DegenerateRange) => Ok(Cow::Borrowed(image)),
        Err(e) => Err(e),
    }
}

fn signed_maps_prepared(
    image: &ScalarVolume,
    weak_labels: &LabelVolume,
    cfg: &TransformConfig,
    engine: &Engine,
    absent_policy: &AbsentClassPolicy,
) -> Result<Vec<SignedDistanceMap>> {
    (1..weak_labels.num_classes() as u32)
        .into_par_iter()
        .map(|k| {
            let sources = boundary_of(weak_labels, k, cfg.connectivity)?;
            if sources.is_empty() {
                return Ok(absent_class_map(weak_labels.shape(), absent_policy)?.for_class(k));
            }
            let dist = distance_map(image, &sources, cfg, engine)?.for_class(k);
            make_signed_map(&dist, weak_labels)
        })
        .collect()
}

fn check_pair(image: &ScalarVolume, weak_labels: &LabelVolume) -> Result<()> {
    image
        .shape()
        .ensure_same(weak_labels.shape(), "image vs weak labels")?;
    if weak_labels.num_classes() < 2 {
        return Err(Error::InvalidValue(
            "weak labels need at least one foreground class".into(),
        ));
    }
    Ok(())
}

/// One signed map per foreground class, computed over the whole grid.
///
/// Classes without annotation get the constant map of `absent_policy`.
pub fn signed_maps_for_all_classes(
    image: &ScalarVolume,
    weak_labels: &LabelVolume,
    cfg: &TransformConfig,
    engine: &Engine,
    absent_policy: &AbsentClassPolicy,
) -> Result<Vec<SignedDistanceMap>> {
    check_pair(image, weak_labels)?;
    let image = prepare_image(image, cfg)?;
    signed_maps_prepared(&image, weak_labels, cfg, engine, absent_policy)
}

/// Like [`signed_maps_for_all_classes`] but each slab-plane is processed as an
/// independent 2D image. Intensities are rescaled once over the whole volume.
pub fn signed_maps_per_slice(
    image: &ScalarVolume,
    weak_labels: &LabelVolume,
    cfg: &TransformConfig,
    engine: &Engine,
    absent_policy: &AbsentClassPolicy,
) -> Result<Vec<SignedDistanceMap>> {
    check_pair(image, weak_labels)?;
    let shape = image.shape();
    if shape.ndim() == 2 {
        return signed_maps_for_all_classes(image, weak_labels, cfg, engine, absent_policy);
    }
    let image = prepare_image(image, cfg)?;
    let per_slice: Vec<Vec<SignedDistanceMap>> = (0..shape.num_slices())
        .into_par_iter()
        .map(|s| {
            signed_maps_prepared(
                &image.slice(s),
                &weak_labels.slice(s),
                cfg,
                engine,
                absent_policy,
            )
        })
        .collect::<Result<_>>()?;
    (1..weak_labels.num_classes() as u32)
        .map(|k| {
            let slices: Vec<SignedDistanceMap> = per_slice
                .iter()
                .map(|maps| maps[k as usize - 1].clone())
                .collect();
            SignedDistanceMap::stack_slices(shape, k, &slices)
        })
        .collect()
}
