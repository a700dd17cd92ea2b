//! Calibration file: named cameras and named rigid transforms.
//!
//! ```json
//! {
//!   "cameras": {
//!     "rgb": {"fx": 400, "fy": 400, "cx": 319.5, "cy": 255.5, "width": 640, "height": 512, "distortion": []}
//!   },
//!   "transforms": {
//!     "rgb_to_thermal": {"rotation": [1,0,0, 0,1,0, 0,0,1], "translation": [0, -0.05, 0]}
//!   }
//! }
//! ```
//! An empty `distortion` array means pinhole; four entries are the
//! equidistant fisheye coefficients `k1..k4`.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{CameraModel, Distortion, RigidTransform};
use crate::registration::Rig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CameraEntry {
    fx: f64,
    fy: f64,
    cx: f64,
    cy: f64,
    width: usize,
    height: usize,
    #[serde(default)]
    distortion: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransformEntry {
    rotation: [f64; 9],
    translation: [f64; 3],
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct CalibrationFile {
    #[serde(default)]
    cameras: BTreeMap<String, CameraEntry>,
    #[serde(default)]
    transforms: BTreeMap<String, TransformEntry>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Calibration {
    pub cameras: BTreeMap<String, CameraModel>,
    pub transforms: BTreeMap<String, RigidTransform>,
}

impl Calibration {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let file: CalibrationFile =
            serde_json::from_str(text).map_err(|e| Error::Validation(format!("calibration json: {e}")))?;
        Self::from_file_repr(file)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: CalibrationFile = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_file_repr(file)
    }

    fn from_file_repr(file: CalibrationFile) -> Result<Self> {
        let mut cameras = BTreeMap::new();
        for (name, c) in file.cameras {
            let distortion = match c.distortion.as_slice() {
                [] => Distortion::None,
                [k1, k2, k3, k4] => Distortion::Fisheye4([*k1, *k2, *k3, *k4]),
                other => {
                    return Err(Error::Validation(format!(
                        "camera {name}: distortion must have 0 or 4 coefficients, got {}",
                        other.len()
                    )))
                }
            };
            let cam = CameraModel::new(c.fx, c.fy, c.cx, c.cy, c.width, c.height, distortion)
                .map_err(|e| Error::Validation(format!("camera {name}: {e}")))?;
            cameras.insert(name, cam);
        }
        let mut transforms = BTreeMap::new();
        for (name, t) in file.transforms {
            let tr = RigidTransform::from_row_major(t.rotation, t.translation)
                .map_err(|e| Error::Validation(format!("transform {name}: {e}")))?;
            transforms.insert(name, tr);
        }
        Ok(Calibration { cameras, transforms })
    }

    pub fn to_json_string(&self) -> String {
        let file = CalibrationFile {
            cameras: self
                .cameras
                .iter()
                .map(|(name, c)| {
                    let distortion = match c.distortion {
                        Distortion::None => vec![],
                        Distortion::Fisheye4(k) => k.to_vec(),
                    };
                    (
                        name.clone(),
                        CameraEntry {
                            fx: c.fx,
                            fy: c.fy,
                            cx: c.cx,
                            cy: c.cy,
                            width: c.width,
                            height: c.height,
                            distortion,
                        },
                    )
                })
                .collect(),
            transforms: self
                .transforms
                .iter()
                .map(|(name, t)| {
                    let r = t.rotation();
                    let mut rotation = [0.0; 9];
                    for i in 0..3 {
                        for j in 0..3 {
                            rotation[i * 3 + j] = r[(i, j)];
                        }
                    }
                    let tr = t.translation();
                    (
                        name.clone(),
                        TransformEntry {
                            rotation,
                            translation: [tr[0], tr[1], tr[2]],
                        },
                    )
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("calibration serialises")
    }

    pub fn camera(&self, name: &str) -> Result<&CameraModel> {
        self.cameras
            .get(name)
            .ok_or_else(|| Error::Validation(format!("calibration has no camera named {name:?}")))
    }

    pub fn transform(&self, name: &str) -> Result<&RigidTransform> {
        self.transforms
            .get(name)
            .ok_or_else(|| Error::Validation(format!("calibration has no transform named {name:?}")))
    }

    pub fn rig(&self, rgb: &str, thermal: &str, rgb_to_thermal: &str) -> Result<Rig> {
        Ok(Rig {
            rgb: *self.camera(rgb)?,
            thermal: *self.camera(thermal)?,
            rgb_to_thermal: *self.transform(rgb_to_thermal)?,
        })
    }
}
