//! Volumes on disk: an `.npy` array plus a `<name>.json` sidecar.
//!
//! Intensities, probabilities and distance maps are stored as float32; label
//! maps as uint8 (or int32 beyond 256 classes). Writes go to a temporary file
//! in the target directory and are renamed into place. Concurrent writers to
//! the same path must be serialized by the caller.

pub mod npy;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridShape, LabelVolume, ProbabilityVolume, ScalarVolume, SignedDistanceMap};
use npy::{NpyArray, NpyData};

pub const SPATIAL_AXES: [&str; 3] = ["row", "col", "slab"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VolumeKind {
    Scalar,
    Labels,
    Probabilities,
    SignedDistance,
}

impl VolumeKind {
    fn leading_axis(self) -> Option<&'static str> {
        match self {
            VolumeKind::Scalar => Some("channel"),
            VolumeKind::Probabilities => Some("class"),
            VolumeKind::Labels | VolumeKind::SignedDistance => None,
        }
    }
}

/// Optional descriptive fields carried in the sidecar.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Metadata {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_names: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transform_config: Option<serde_json::Value>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: VolumeKind,
    pub spacing: Vec<f64>,
    pub axes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_classes: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_id: Option<u32>,
    #[serde(flatten)]
    pub metadata: Metadata,
}

impl Sidecar {
    fn new(kind: VolumeKind, shape: &GridShape, metadata: &Metadata) -> Self {
        let axes = kind
            .leading_axis()
            .into_iter()
            .chain(SPATIAL_AXES[..shape.ndim()].iter().copied())
            .map(String::from)
            .collect();
        Self {
            kind,
            spacing: shape.spacing().to_vec(),
            axes,
            num_classes: None,
            class_id: None,
            metadata: metadata.clone(),
        }
    }

    /// Checks the sidecar against the array and returns the grid shape.
    fn grid_shape(&self, array_shape: &[usize], expected: VolumeKind) -> Result<GridShape> {
        if self.kind != expected {
            return Err(Error::Sidecar(format!(
                "expected a {expected:?} volume, sidecar says {:?}",
                self.kind
            )));
        }
        let lead = usize::from(expected.leading_axis().is_some());
        let expected_axes: Vec<&str> = expected
            .leading_axis()
            .into_iter()
            .chain(SPATIAL_AXES[..array_shape.len().saturating_sub(lead).min(3)].iter().copied())
            .collect();
        if self.axes != expected_axes || array_shape.len() != expected_axes.len() {
            return Err(Error::Sidecar(format!(
                "axes {:?} do not describe an array of shape {array_shape:?}",
                self.axes
            )));
        }
        GridShape::new(array_shape[lead..].to_vec(), self.spacing.clone())
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

fn write_pair(path: &Path, array: &NpyArray, sidecar: &Sidecar) -> Result<()> {
    write_atomic(path, &array.to_bytes())?;
    let mut json = serde_json::to_vec_pretty(sidecar)?;
    json.push(b'\n');
    write_atomic(&sidecar_path(path), &json)
}

fn read_pair(path: &Path) -> Result<(NpyArray, Sidecar)> {
    let array = NpyArray::from_bytes(&fs::read(path)?)?;
    let side = sidecar_path(path);
    let text = fs::read(&side)
        .map_err(|e| Error::Sidecar(format!("cannot read {}: {e}", side.display())))?;
    let sidecar = serde_json::from_slice(&text)
        .map_err(|e| Error::Sidecar(format!("{}: {e}", side.display())))?;
    Ok((array, sidecar))
}

fn with_plane(shape: &GridShape, planes: usize) -> Vec<usize> {
    std::iter::once(planes).chain(shape.dims().iter().copied()).collect()
}

fn to_f32(values: &[f64]) -> NpyData {
    NpyData::F32(values.iter().map(|&v| v as f32).collect())
}

fn float_payload(array: NpyArray) -> Result<Vec<f64>> {
    match array.data {
        NpyData::F32(v) => Ok(v.into_iter().map(f64::from).collect()),
        other => Err(Error::Unsupported(format!(
            "expected float32 data, found {}",
            other.dtype_name()
        ))),
    }
}

pub fn write_scalar(vol: &ScalarVolume, path: &Path, metadata: &Metadata) -> Result<()> {
    let array = NpyArray::new(with_plane(vol.shape(), vol.channels()), to_f32(vol.data()))?;
    write_pair(path, &array, &Sidecar::new(VolumeKind::Scalar, vol.shape(), metadata))
}

pub fn read_scalar(path: &Path) -> Result<ScalarVolume> {
    let (array, sidecar) = read_pair(path)?;
    let shape = sidecar.grid_shape(&array.shape, VolumeKind::Scalar)?;
    let channels = array.shape[0];
    ScalarVolume::new(shape, channels, float_payload(array)?)
}

pub fn write_labels(labels: &LabelVolume, path: &Path, metadata: &Metadata) -> Result<()> {
    let data = if labels.num_classes() <= 256 {
        NpyData::U8(labels.data().iter().map(|&v| v as u8).collect())
    } else {
        NpyData::I32(labels.data().iter().map(|&v| v as i32).collect())
    };
    let array = NpyArray::new(labels.shape().dims().to_vec(), data)?;
    let mut sidecar = Sidecar::new(VolumeKind::Labels, labels.shape(), metadata);
    sidecar.num_classes = Some(labels.num_classes());
    write_pair(path, &array, &sidecar)
}

pub fn read_labels(path: &Path) -> Result<LabelVolume> {
    let (array, sidecar) = read_pair(path)?;
    let shape = sidecar.grid_shape(&array.shape, VolumeKind::Labels)?;
    let num_classes = sidecar
        .num_classes
        .or(sidecar.metadata.class_names.as_ref().map(Vec::len))
        .ok_or_else(|| Error::Sidecar("label sidecar needs num_classes or class_names".into()))?;
    let data = match array.data {
        NpyData::U8(v) => v.into_iter().map(u32::from).collect(),
        NpyData::I32(v) => v
            .into_iter()
            .map(|x| {
                u32::try_from(x).map_err(|_| Error::InvalidValue(format!("negative label {x}")))
            })
            .collect::<Result<_>>()?,
        NpyData::F32(_) => {
            return Err(Error::Unsupported(
                "label volumes must be uint8 or int32".into(),
            ))
        }
    };
    LabelVolume::new(shape, num_classes, data)
}

pub fn write_probabilities(probs: &ProbabilityVolume, path: &Path, metadata: &Metadata) -> Result<()> {
    let array = NpyArray::new(with_plane(probs.shape(), probs.num_classes()), to_f32(probs.data()))?;
    let mut sidecar = Sidecar::new(VolumeKind::Probabilities, probs.shape(), metadata);
    sidecar.num_classes = Some(probs.num_classes());
    write_pair(path, &array, &sidecar)
}

pub fn read_probabilities(path: &Path) -> Result<ProbabilityVolume> {
    let (array, sidecar) = read_pair(path)?;
    let shape = sidecar.grid_shape(&array.shape, VolumeKind::Probabilities)?;
    let num_classes = array.shape[0];
    ProbabilityVolume::new(shape, num_classes, float_payload(array)?)
}

pub fn write_signed_map(map: &SignedDistanceMap, path: &Path, metadata: &Metadata) -> Result<()> {
    let array = NpyArray::new(map.shape().dims().to_vec(), to_f32(map.data()))?;
    let mut sidecar = Sidecar::new(VolumeKind::SignedDistance, map.shape(), metadata);
    sidecar.class_id = Some(map.class_id());
    write_pair(path, &array, &sidecar)
}

pub fn read_signed_map(path: &Path) -> Result<SignedDistanceMap> {
    let (array, sidecar) = read_pair(path)?;
    let shape = sidecar.grid_shape(&array.shape, VolumeKind::SignedDistance)?;
    let class_id = sidecar
        .class_id
        .ok_or_else(|| Error::Sidecar("signed map sidecar needs class_id".into()))?;
    SignedDistanceMap::new(shape, class_id, float_payload(array)?)
}

/// An image or a label map read from disk.
#[derive(Clone, Debug, PartialEq)]
pub enum Volume {
    Scalar(ScalarVolume),
    Labels(LabelVolume),
}

pub fn read_volume(path: &Path) -> Result<Volume> {
    let side = sidecar_path(path);
    let text = fs::read(&side)
        .map_err(|e| Error::Sidecar(format!("cannot read {}: {e}", side.display())))?;
    let sidecar: Sidecar = serde_json::from_slice(&text)
        .map_err(|e| Error::Sidecar(format!("{}: {e}", side.display())))?;
    match sidecar.kind {
        VolumeKind::Scalar => read_scalar(path).map(Volume::Scalar),
        VolumeKind::Labels => read_labels(path).map(Volume::Labels),
        other => Err(Error::Sidecar(format!(
            "{other:?} files are not image or label volumes"
        ))),
    }
}

pub fn write_volume(vol: &Volume, path: &Path) -> Result<()> {
    match vol {
        Volume::Scalar(v) => write_scalar(v, path, &Metadata::default()),
        Volume::Labels(v) => write_labels(v, path, &Metadata::default()),
    }
}

/// Writes a JSON report atomically.
pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut json = serde_json::to_vec_pretty(value)?;
    json.push(b'\n');
    write_atomic(path, &json)
}
