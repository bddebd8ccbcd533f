//! Point-to-pixel pairing through an ideal pinhole camera.

use ndarray::Array2;

use crate::error::{Error, Result};

const ORTHO_TOL: f64 = 1e-6;

/// Pinhole camera with a rigid LiDAR-to-camera transform.
///
/// Camera coordinates follow the usual convention: x right, y down, z along
/// the optical axis. Matrices are row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraModel {
    intrinsics: [[f64; 3]; 3],
    extrinsics: [[f64; 4]; 4],
    width: usize,
    height: usize,
}

impl CameraModel {
    pub fn new(
        intrinsics: [[f64; 3]; 3],
        extrinsics: [[f64; 4]; 4],
        width: usize,
        height: usize,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidCamera("image must be non-empty".into()));
        }
        if intrinsics
            .iter()
            .flatten()
            .chain(extrinsics.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return Err(Error::InvalidCamera("non-finite matrix entry".into()));
        }
        let k = &intrinsics;
        if k[2] != [0.0, 0.0, 1.0] || k[1][0] != 0.0 {
            return Err(Error::InvalidCamera(
                "intrinsics must be upper triangular with k22 = 1".into(),
            ));
        }
        if k[0][0] <= 0.0 || k[1][1] <= 0.0 {
            return Err(Error::InvalidCamera(
                "focal lengths must be positive".into(),
            ));
        }
        if extrinsics[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(Error::InvalidCamera(
                "extrinsics bottom row must be (0, 0, 0, 1)".into(),
            ));
        }
        let r = rotation_block(&extrinsics);
        for i in 0..3 {
            for j in 0..3 {
                let d: f64 = (0..3).map(|c| r[i][c] * r[j][c]).sum();
                let target = if i == j { 1.0 } else { 0.0 };
                if (d - target).abs() > ORTHO_TOL {
                    return Err(Error::InvalidCamera(
                        "extrinsics rotation block is not orthonormal (non-invertible transform)"
                            .into(),
                    ));
                }
            }
        }
        if det3(&r) <= 0.0 {
            return Err(Error::InvalidCamera(
                "extrinsics rotation has determinant -1".into(),
            ));
        }
        Ok(Self {
            intrinsics,
            extrinsics,
            width,
            height,
        })
    }

    /// Camera at `position` (LiDAR frame) looking horizontally along azimuth
    /// `yaw` (radians, counter-clockwise from +x) with zero roll.
    pub fn horizontal(
        yaw: f64,
        position: [f64; 3],
        focal: f64,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let (s, c) = yaw.sin_cos();
        let rot = [[s, -c, 0.0], [0.0, 0.0, -1.0], [c, s, 0.0]];
        let mut ext = [[0.0; 4]; 4];
        for i in 0..3 {
            ext[i][..3].copy_from_slice(&rot[i]);
            ext[i][3] = -(0..3).map(|j| rot[i][j] * position[j]).sum::<f64>();
        }
        ext[3][3] = 1.0;
        let cx = 0.5 * width as f64 - 0.5;
        let cy = 0.5 * height as f64 - 0.5;
        let k = [[focal, 0.0, cx], [0.0, focal, cy], [0.0, 0.0, 1.0]];
        Self::new(k, ext, width, height)
    }

    pub fn intrinsics(&self) -> &[[f64; 3]; 3] {
        &self.intrinsics
    }

    pub fn extrinsics(&self) -> &[[f64; 4]; 4] {
        &self.extrinsics
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn to_camera(&self, p: [f64; 3]) -> [f64; 3] {
        let e = &self.extrinsics;
        std::array::from_fn(|i| e[i][0] * p[0] + e[i][1] * p[1] + e[i][2] * p[2] + e[i][3])
    }

    pub fn to_lidar(&self, q: [f64; 3]) -> [f64; 3] {
        let e = &self.extrinsics;
        let d = [q[0] - e[0][3], q[1] - e[1][3], q[2] - e[2][3]];
        std::array::from_fn(|j| e[0][j] * d[0] + e[1][j] * d[1] + e[2][j] * d[2])
    }

    /// Continuous pixel coordinates of a camera-frame point, `None` behind the camera.
    pub fn project(&self, q: [f64; 3]) -> Option<(f64, f64)> {
        if !(q[2] > 0.0) {
            return None;
        }
        let k = &self.intrinsics;
        let x = q[0] / q[2];
        let y = q[1] / q[2];
        Some((k[0][0] * x + k[0][1] * y + k[0][2], k[1][1] * y + k[1][2]))
    }

    /// Camera-frame point at `depth` along the ray through pixel `(u, v)`.
    pub fn back_project(&self, u: f64, v: f64, depth: f64) -> [f64; 3] {
        let k = &self.intrinsics;
        let y = (v - k[1][2]) / k[1][1];
        let x = (u - k[0][2] - k[0][1] * y) / k[0][0];
        [x * depth, y * depth, depth]
    }

    /// Nearest pixel `(u, v)` of a LiDAR-frame point, if it lands in the image.
    pub fn pixel_of(&self, p: [f64; 3]) -> Option<[usize; 2]> {
        let (u, v) = self.project(self.to_camera(p))?;
        let (u, v) = (u.round(), v.round());
        if u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64 {
            Some([u as usize, v as usize])
        } else {
            None
        }
    }
}

fn rotation_block(e: &[[f64; 4]; 4]) -> [[f64; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| e[i][j]))
}

fn det3(r: &[[f64; 3]; 3]) -> f64 {
    r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1])
        - r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0])
        + r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0])
}

/// A LiDAR point matched to one image pixel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PointPixelPair {
    pub point_index: usize,
    /// Index of the camera the pixel belongs to.
    pub camera: usize,
    /// `[u, v]`: column and row.
    pub pixel: [usize; 2],
    pub weak_label: usize,
    /// Distance from the LiDAR sensor, meters.
    pub distance: f64,
}

pub fn sensor_distance(p: [f64; 3]) -> f64 {
    (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// Pairs every point visible in `camera` with its nearest pixel.
///
/// `labels` is indexed `[row, column]` and supplies each pair's weak label.
/// Output is ordered by point index; points behind the camera, outside the
/// image, or at the sensor origin are dropped.
pub fn project_points(
    points: &[[f64; 3]],
    camera: &CameraModel,
    labels: &Array2<usize>,
) -> Result<Vec<PointPixelPair>> {
    project_points_multi(
        points,
        std::slice::from_ref(camera),
        std::slice::from_ref(labels),
    )
}

/// Like [`project_points`] over several cameras. A point seen by more than
/// one camera is assigned to the first.
pub fn project_points_multi(
    points: &[[f64; 3]],
    cameras: &[CameraModel],
    labels: &[Array2<usize>],
) -> Result<Vec<PointPixelPair>> {
    if cameras.len() != labels.len() {
        return Err(Error::DimensionMismatch {
            expected: cameras.len(),
            got: labels.len(),
        });
    }
    for (cam, lab) in cameras.iter().zip(labels) {
        if lab.dim() != (cam.height, cam.width) {
            return Err(Error::InvalidCamera(format!(
                "label image is {:?}, camera expects {}x{}",
                lab.dim(),
                cam.height,
                cam.width
            )));
        }
    }
    let mut pairs = Vec::new();
    for (index, &p) in points.iter().enumerate() {
        let distance = sensor_distance(p);
        if !(distance > 0.0) {
            continue;
        }
        let hit = cameras
            .iter()
            .enumerate()
            .find_map(|(c, cam)| cam.pixel_of(p).map(|px| (c, px)));
        if let Some((camera, pixel)) = hit {
            pairs.push(PointPixelPair {
                point_index: index,
                camera,
                pixel,
                weak_label: labels[camera][[pixel[1], pixel[0]]],
                distance,
            });
        }
    }
    Ok(pairs)
}
