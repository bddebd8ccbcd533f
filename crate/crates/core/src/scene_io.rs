//! Versioned little-endian binary scene files.
//!
//! Layout: magic `VMFDSCN\0`, `u32` version, then `u64` counts
//! (classes, points, point descriptor dim, views) and per-view headers
//! (width, height, descriptor dim, 9 intrinsics, 16 extrinsics), followed by
//! the arrays: points, point descriptors (`f64`), point labels (`u32`), and
//! for each view its descriptors (`f64`), weak labels and true labels (`u32`).

use ndarray::{Array2, Array3};
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::correspondence::CameraModel;
use crate::error::{Error, Result};
use crate::synthdata::{CameraView, Scene};

pub const SCENE_MAGIC: [u8; 8] = *b"VMFDSCN\0";
pub const SCENE_VERSION: u32 = 1;

pub(crate) struct Writer {
    pub(crate) buf: Vec<u8>,
}

impl Writer {
    pub(crate) fn new() -> Self {
        Self { buf: Vec::new() }
    }
    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }
    pub(crate) fn f64s<'a>(&mut self, vs: impl IntoIterator<Item = &'a f64>) {
        for v in vs {
            self.buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    fn labels<'a>(&mut self, vs: impl IntoIterator<Item = &'a usize>) {
        for &v in vs {
            self.u32(v as u32);
        }
    }
}

pub(crate) struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    pub(crate) fn new(data: &'a [u8]) -> Self {
        Self { data, pos: 0 }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| {
                Error::Truncated(format!(
                    "need {n} bytes at offset {}, file has {}",
                    self.pos,
                    self.data.len()
                ))
            })?;
        let out = &self.data[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(
            self.take(4)?.try_into().expect("4 bytes"),
        ))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(
            self.take(8)?.try_into().expect("8 bytes"),
        ))
    }

    pub(crate) fn count(&mut self) -> Result<usize> {
        let v = self.u64()?;
        usize::try_from(v).map_err(|_| Error::Format(format!("count {v} does not fit in memory")))
    }

    /// Checks that `n` items of `size` bytes remain before allocating for them.
    fn ensure(&self, n: usize, size: usize) -> Result<()> {
        let need = n
            .checked_mul(size)
            .ok_or_else(|| Error::Format("array size overflows".into()))?;
        if need > self.data.len() - self.pos {
            return Err(Error::Truncated(format!(
                "array of {need} bytes at offset {} exceeds file length {}",
                self.pos,
                self.data.len()
            )));
        }
        Ok(())
    }

    pub(crate) fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        self.ensure(n, 8)?;
        let bytes = self.take(n * 8)?;
        Ok(bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect())
    }

    fn labels(&mut self, n: usize) -> Result<Vec<usize>> {
        self.ensure(n, 4)?;
        let bytes = self.take(n * 4)?;
        Ok(bytes
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4 bytes")) as usize)
            .collect())
    }

    pub(crate) fn finish(&self) -> Result<()> {
        if self.pos != self.data.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes",
                self.data.len() - self.pos
            )));
        }
        Ok(())
    }

    pub(crate) fn header(&mut self, magic: &[u8; 8], version: u32) -> Result<()> {
        if self.data.len() < magic.len() {
            return Err(Error::Truncated("file shorter than its magic bytes".into()));
        }
        if self.take(magic.len())? != magic {
            return Err(Error::Format("bad magic bytes".into()));
        }
        let found = self.u32()?;
        if found != version {
            return Err(Error::Version {
                found,
                expected: version,
            });
        }
        Ok(())
    }
}

/// Writes `bytes` to a sibling temp file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = path
        .file_name()
        .ok_or_else(|| Error::Domain(format!("{} has no file name", path.display())))?;
    let mut tmp_name = std::ffi::OsString::from(".");
    tmp_name.push(name);
    tmp_name.push(".partial");
    let tmp = path.with_file_name(tmp_name);
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn encode_scene(scene: &Scene) -> Result<Vec<u8>> {
    scene.validate()?;
    let mut w = Writer::new();
    w.buf.extend_from_slice(&SCENE_MAGIC);
    w.u32(SCENE_VERSION);
    w.u64(scene.num_classes as u64);
    w.u64(scene.points.len() as u64);
    w.u64(scene.point_descriptors.ncols() as u64);
    w.u64(scene.views.len() as u64);
    for view in &scene.views {
        let cam = &view.camera;
        w.u64(cam.width() as u64);
        w.u64(cam.height() as u64);
        w.u64(view.descriptors.dim().2 as u64);
        w.f64s(cam.intrinsics().iter().flatten());
        w.f64s(cam.extrinsics().iter().flatten());
    }
    w.f64s(scene.points.iter().flatten());
    w.f64s(scene.point_descriptors.iter());
    w.labels(&scene.true_labels);
    for view in &scene.views {
        w.f64s(view.descriptors.iter());
        w.labels(view.weak_labels.iter());
        w.labels(view.true_labels.iter());
    }
    Ok(w.buf)
}

pub fn decode_scene(bytes: &[u8]) -> Result<Scene> {
    let mut r = Reader::new(bytes);
    r.header(&SCENE_MAGIC, SCENE_VERSION)?;
    let num_classes = r.count()?;
    let n = r.count()?;
    let d = r.count()?;
    let num_views = r.count()?;
    r.ensure(num_views, 3 * 8 + 25 * 8)?;
    let mut headers = Vec::with_capacity(num_views);
    for _ in 0..num_views {
        let (width, height, dim) = (r.count()?, r.count()?, r.count()?);
        let k = r.f64s(9)?;
        let e = r.f64s(16)?;
        let intrinsics = std::array::from_fn(|i| std::array::from_fn(|j| k[3 * i + j]));
        let extrinsics = std::array::from_fn(|i| std::array::from_fn(|j| e[4 * i + j]));
        let camera = CameraModel::new(intrinsics, extrinsics, width, height)
            .map_err(|err| Error::Format(format!("stored camera is invalid: {err}")))?;
        headers.push((camera, dim));
    }
    let flat = r.f64s(
        n.checked_mul(3)
            .ok_or_else(|| Error::Format("point count overflows".into()))?,
    )?;
    let points = flat.chunks_exact(3).map(|c| [c[0], c[1], c[2]]).collect();
    let shape_err = |e: ndarray::ShapeError| Error::Format(format!("array shape: {e}"));
    let nd = n
        .checked_mul(d)
        .ok_or_else(|| Error::Format("descriptor size overflows".into()))?;
    let point_descriptors = Array2::from_shape_vec((n, d), r.f64s(nd)?).map_err(shape_err)?;
    let true_labels = r.labels(n)?;
    let mut views = Vec::with_capacity(num_views);
    for (camera, dim) in headers {
        let (h, w) = (camera.height(), camera.width());
        let pixels = h
            .checked_mul(w)
            .ok_or_else(|| Error::Format("image size overflows".into()))?;
        let total = pixels
            .checked_mul(dim)
            .ok_or_else(|| Error::Format("image size overflows".into()))?;
        let descriptors = Array3::from_shape_vec((h, w, dim), r.f64s(total)?).map_err(shape_err)?;
        let weak_labels = Array2::from_shape_vec((h, w), r.labels(pixels)?).map_err(shape_err)?;
        let true_labels = Array2::from_shape_vec((h, w), r.labels(pixels)?).map_err(shape_err)?;
        views.push(CameraView {
            camera,
            descriptors,
            weak_labels,
            true_labels,
        });
    }
    r.finish()?;
    let scene = Scene {
        num_classes,
        points,
        point_descriptors,
        true_labels,
        views,
    };
    scene.validate()?;
    Ok(scene)
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    write_atomic(path, &encode_scene(scene)?)
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    decode_scene(&fs::read(path)?)
}
