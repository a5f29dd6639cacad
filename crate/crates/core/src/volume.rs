//! Volume and mask containers, plus the patch carriers used between the
//! volume and a segmenter.
//!
//! Every grid is stored z-major, then y, then x. All boxes are half-open
//! integer intervals in voxel coordinates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Anatomical viewing plane. Axial patches are z-slices, coronal patches
/// are y-slices and sagittal patches are x-slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum View {
    Axial,
    Coronal,
    Sagittal,
}

impl View {
    pub const ALL: [View; 3] = [View::Axial, View::Coronal, View::Sagittal];

    pub fn as_str(self) -> &'static str {
        match self {
            View::Axial => "axial",
            View::Coronal => "coronal",
            View::Sagittal => "sagittal",
        }
    }
}

impl std::fmt::Display for View {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for View {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "axial" => Ok(View::Axial),
            "coronal" => Ok(View::Coronal),
            "sagittal" => Ok(View::Sagittal),
            other => Err(Error::InvalidParameter(format!("unknown view {other:?}"))),
        }
    }
}

fn check_shape(shape: [usize; 3]) -> Result<usize> {
    if shape.contains(&0) {
        return Err(Error::InvalidShape(format!("{shape:?} has a zero extent")));
    }
    shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| Error::InvalidShape(format!("{shape:?} overflows")))
}

fn check_spacing(spacing: [f64; 3]) -> Result<()> {
    if spacing.iter().all(|s| s.is_finite() && *s > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidShape(format!(
            "spacing {spacing:?} must be finite and positive"
        )))
    }
}

#[inline]
fn linear_index(shape: [usize; 3], z: usize, y: usize, x: usize) -> usize {
    debug_assert!(z < shape[0] && y < shape[1] && x < shape[2]);
    (z * shape[1] + y) * shape[2] + x
}

/// Signed 16-bit intensity volume (HU) with per-axis spacing in mm.
#[derive(Debug, Clone, PartialEq)]
pub struct Volume3D {
    shape: [usize; 3],
    spacing: [f64; 3],
    voxels: Vec<i16>,
}

impl Volume3D {
    pub fn new(shape_zyx: [usize; 3], spacing_mm_zyx: [f64; 3], voxels: Vec<i16>) -> Result<Self> {
        let n = check_shape(shape_zyx)?;
        check_spacing(spacing_mm_zyx)?;
        if voxels.len() != n {
            return Err(Error::InvalidShape(format!(
                "{} voxels for shape {shape_zyx:?} (expected {n})",
                voxels.len()
            )));
        }
        Ok(Self {
            shape: shape_zyx,
            spacing: spacing_mm_zyx,
            voxels,
        })
    }

    pub fn filled(shape_zyx: [usize; 3], spacing_mm_zyx: [f64; 3], value: i16) -> Result<Self> {
        let n = check_shape(shape_zyx)?;
        Self::new(shape_zyx, spacing_mm_zyx, vec![value; n])
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    /// Slice thickness, the z spacing.
    pub fn slice_thickness(&self) -> f64 {
        self.spacing[0]
    }

    pub fn voxels(&self) -> &[i16] {
        &self.voxels
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> i16 {
        self.voxels[linear_index(self.shape, z, y, x)]
    }

    pub fn set(&mut self, z: usize, y: usize, x: usize, value: i16) {
        let i = linear_index(self.shape, z, y, x);
        self.voxels[i] = value;
    }

    /// In-plane bounds as (X, Y).
    pub fn slice_bounds(&self) -> (usize, usize) {
        (self.shape[2], self.shape[1])
    }
}

/// Binary label grid. Carries the spacing of the volume it was derived from
/// so it can be written out on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct Mask3D {
    shape: [usize; 3],
    spacing: [f64; 3],
    voxels: Vec<u8>,
}

impl Mask3D {
    pub fn new(shape_zyx: [usize; 3], spacing_mm_zyx: [f64; 3], voxels: Vec<u8>) -> Result<Self> {
        let n = check_shape(shape_zyx)?;
        check_spacing(spacing_mm_zyx)?;
        if voxels.len() != n {
            return Err(Error::InvalidShape(format!(
                "{} voxels for shape {shape_zyx:?} (expected {n})",
                voxels.len()
            )));
        }
        if let Some((index, &value)) = voxels.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::InvalidMaskValue { index, value });
        }
        Ok(Self {
            shape: shape_zyx,
            spacing: spacing_mm_zyx,
            voxels,
        })
    }

    pub fn zeros(shape_zyx: [usize; 3], spacing_mm_zyx: [f64; 3]) -> Result<Self> {
        let n = check_shape(shape_zyx)?;
        Self::new(shape_zyx, spacing_mm_zyx, vec![0; n])
    }

    /// Empty mask on the grid of `vol`.
    pub fn like(vol: &Volume3D) -> Self {
        Self {
            shape: vol.shape,
            spacing: vol.spacing,
            voxels: vec![0; vol.voxels.len()],
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        self.shape
    }

    pub fn spacing(&self) -> [f64; 3] {
        self.spacing
    }

    pub fn voxels(&self) -> &[u8] {
        &self.voxels
    }

    pub fn get(&self, z: usize, y: usize, x: usize) -> bool {
        self.voxels[linear_index(self.shape, z, y, x)] != 0
    }

    pub fn set(&mut self, z: usize, y: usize, x: usize, on: bool) {
        let i = linear_index(self.shape, z, y, x);
        self.voxels[i] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.voxels.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.voxels.iter().all(|&v| v == 0)
    }

    pub fn bounds(&self) -> Voi3D {
        Voi3D::new(0, self.shape[0], 0, self.shape[1], 0, self.shape[2])
    }

    /// Number of foreground voxels on axial slice `z`.
    pub fn slice_count(&self, z: usize) -> usize {
        let n = self.shape[1] * self.shape[2];
        self.voxels[z * n..(z + 1) * n]
            .iter()
            .filter(|&&v| v != 0)
            .count()
    }

    /// Full axial slice `z` as a 2-D mask.
    pub fn axial_slice(&self, z: usize) -> Mask2D {
        let n = self.shape[1] * self.shape[2];
        Mask2D {
            width: self.shape[2],
            height: self.shape[1],
            data: self.voxels[z * n..(z + 1) * n].to_vec(),
        }
    }

    /// Copy of the sub-grid covered by `voi`.
    pub fn crop(&self, voi: &Voi3D) -> Result<Mask3D> {
        voi.check_within(self.shape)?;
        let shape = voi.shape();
        let mut out = Vec::with_capacity(voi.len());
        for z in voi.z1..voi.z2 {
            for y in voi.y1..voi.y2 {
                let start = linear_index(self.shape, z, y, voi.x1);
                out.extend_from_slice(&self.voxels[start..start + shape[2]]);
            }
        }
        Mask3D::new(shape, self.spacing, out)
    }

    /// Overwrites the region `voi` with `sub`, whose shape must equal the
    /// box shape.
    pub fn paste(&mut self, voi: &Voi3D, sub: &Mask3D) -> Result<()> {
        voi.check_within(self.shape)?;
        if sub.shape != voi.shape() {
            return Err(Error::ShapeMismatch(sub.shape, voi.shape()));
        }
        let w = voi.x2 - voi.x1;
        for z in voi.z1..voi.z2 {
            for y in voi.y1..voi.y2 {
                let dst = linear_index(self.shape, z, y, voi.x1);
                let src = linear_index(sub.shape, z - voi.z1, y - voi.y1, 0);
                self.voxels[dst..dst + w].copy_from_slice(&sub.voxels[src..src + w]);
            }
        }
        Ok(())
    }

    /// Tight half-open bounding box of the foreground, if any.
    pub fn bounding_box(&self) -> Option<Voi3D> {
        let [nz, ny, nx] = self.shape;
        let mut lo = [usize::MAX; 3];
        let mut hi = [0usize; 3];
        let mut any = false;
        for z in 0..nz {
            for y in 0..ny {
                let row = &self.voxels[linear_index(self.shape, z, y, 0)..][..nx];
                let first = row.iter().position(|&v| v != 0);
                let Some(first) = first else { continue };
                let last = row.iter().rposition(|&v| v != 0).unwrap_or(first);
                any = true;
                lo = [lo[0].min(z), lo[1].min(y), lo[2].min(first)];
                hi = [hi[0].max(z + 1), hi[1].max(y + 1), hi[2].max(last + 1)];
            }
        }
        any.then(|| Voi3D::new(lo[0], hi[0], lo[1], hi[1], lo[2], hi[2]))
    }

    pub(crate) fn voxels_mut(&mut self) -> &mut [u8] {
        &mut self.voxels
    }
}

/// Binary 2-D mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2D {
    width: usize,
    height: usize,
    data: Vec<u8>,
}

/// Inclusive pixel bounding box of a 2-D mask's foreground.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PixelBox {
    pub row_min: usize,
    pub row_max: usize,
    pub col_min: usize,
    pub col_max: usize,
}

impl PixelBox {
    pub fn width(&self) -> usize {
        self.col_max - self.col_min + 1
    }

    pub fn height(&self) -> usize {
        self.row_max - self.row_min + 1
    }
}

impl Mask2D {
    pub fn new(width: usize, height: usize, data: Vec<u8>) -> Result<Self> {
        if width == 0 || height == 0 || data.len() != width * height {
            return Err(Error::InvalidShape(format!(
                "{} pixels for a {width}x{height} mask",
                data.len()
            )));
        }
        if let Some((index, &value)) = data.iter().enumerate().find(|(_, &v)| v > 1) {
            return Err(Error::InvalidMaskValue { index, value });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height],
        }
    }

    pub fn ones(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![1; width * height],
        }
    }

    /// Pixels `>= threshold` become foreground.
    pub fn from_probabilities(p: &Patch2D, threshold: f64) -> Self {
        Self {
            width: p.width,
            height: p.height,
            data: p
                .pixels
                .iter()
                .map(|&v| (f64::from(v) >= threshold) as u8)
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.data[row * self.width + col] != 0
    }

    pub fn set(&mut self, row: usize, col: usize, on: bool) {
        self.data[row * self.width + col] = on as u8;
    }

    /// Foreground area in pixels.
    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0).count()
    }

    pub fn is_empty(&self) -> bool {
        self.data.iter().all(|&v| v == 0)
    }

    pub fn bounding_box(&self) -> Option<PixelBox> {
        let mut b: Option<PixelBox> = None;
        for row in 0..self.height {
            let line = &self.data[row * self.width..(row + 1) * self.width];
            let Some(first) = line.iter().position(|&v| v != 0) else {
                continue;
            };
            let last = line.iter().rposition(|&v| v != 0).unwrap_or(first);
            b = Some(match b {
                None => PixelBox {
                    row_min: row,
                    row_max: row,
                    col_min: first,
                    col_max: last,
                },
                Some(b) => PixelBox {
                    row_min: b.row_min,
                    row_max: row,
                    col_min: b.col_min.min(first),
                    col_max: b.col_max.max(last),
                },
            });
        }
        b
    }

    pub fn to_patch(&self) -> Patch2D {
        Patch2D {
            width: self.width,
            height: self.height,
            pixels: self.data.iter().map(|&v| f32::from(v)).collect(),
            kind: PatchKind::Binary,
        }
    }

    /// Nearest-neighbour resize; output values are a subset of the input's.
    pub fn resize_nearest(&self, width: usize, height: usize) -> Result<Mask2D> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(format!(
                "target size {width}x{height} must be positive"
            )));
        }
        let cols: Vec<usize> = (0..width)
            .map(|i| crate::resample::nearest_source(i, self.width, width))
            .collect();
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            let sr = crate::resample::nearest_source(r, self.height, height);
            let line = &self.data[sr * self.width..(sr + 1) * self.width];
            data.extend(cols.iter().map(|&c| line[c]));
        }
        Ok(Mask2D {
            width,
            height,
            data,
        })
    }
}

/// Square window on one axial slice, `[x1, x2) x [y1, y2)` on slice `z`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Roi2D {
    pub x1: usize,
    pub x2: usize,
    pub y1: usize,
    pub y2: usize,
    pub z: usize,
}

impl Roi2D {
    /// Square ROI with top-left corner `(x, y)`.
    pub fn square(x: usize, y: usize, side: usize, z: usize) -> Self {
        Self {
            x1: x,
            x2: x + side,
            y1: y,
            y2: y + side,
            z,
        }
    }

    pub fn side(&self) -> usize {
        self.x2 - self.x1
    }

    pub fn area(&self) -> usize {
        (self.x2 - self.x1) * (self.y2 - self.y1)
    }

    pub fn at_slice(self, z: usize) -> Self {
        Self { z, ..self }
    }

    /// Checks the square/non-empty invariants and containment in `vol`.
    pub fn check_in(&self, shape_zyx: [usize; 3]) -> Result<()> {
        if self.x2 <= self.x1 || self.y2 <= self.y1 {
            return Err(Error::OutOfBounds(format!("{self:?} is empty")));
        }
        if self.x2 - self.x1 != self.y2 - self.y1 {
            return Err(Error::OutOfBounds(format!("{self:?} is not square")));
        }
        if self.x2 > shape_zyx[2] || self.y2 > shape_zyx[1] || self.z >= shape_zyx[0] {
            return Err(Error::OutOfBounds(format!(
                "{self:?} outside volume {shape_zyx:?}"
            )));
        }
        Ok(())
    }
}

/// Axis-aligned box `[z1,z2) x [y1,y2) x [x1,x2)` in voxel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Voi3D {
    pub z1: usize,
    pub z2: usize,
    pub y1: usize,
    pub y2: usize,
    pub x1: usize,
    pub x2: usize,
}

impl Voi3D {
    pub fn new(z1: usize, z2: usize, y1: usize, y2: usize, x1: usize, x2: usize) -> Self {
        Self {
            z1,
            z2,
            y1,
            y2,
            x1,
            x2,
        }
    }

    pub fn shape(&self) -> [usize; 3] {
        [self.z2 - self.z1, self.y2 - self.y1, self.x2 - self.x1]
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn contains(&self, z: usize, y: usize, x: usize) -> bool {
        (self.z1..self.z2).contains(&z) && (self.y1..self.y2).contains(&y) && (self.x1..self.x2).contains(&x)
    }

    pub fn check_within(&self, shape_zyx: [usize; 3]) -> Result<()> {
        let ok = self.z2 > self.z1
            && self.y2 > self.y1
            && self.x2 > self.x1
            && self.z2 <= shape_zyx[0]
            && self.y2 <= shape_zyx[1]
            && self.x2 <= shape_zyx[2];
        if ok {
            Ok(())
        } else {
            Err(Error::OutOfBounds(format!(
                "{self:?} not a valid box inside {shape_zyx:?}"
            )))
        }
    }

    /// Grows the box by `pad` voxels on every side, clipped to `shape_zyx`.
    pub fn padded(&self, pad: usize, shape_zyx: [usize; 3]) -> Self {
        Self {
            z1: self.z1.saturating_sub(pad),
            z2: (self.z2 + pad).min(shape_zyx[0]),
            y1: self.y1.saturating_sub(pad),
            y2: (self.y2 + pad).min(shape_zyx[1]),
            x1: self.x1.saturating_sub(pad),
            x2: (self.x2 + pad).min(shape_zyx[2]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PatchKind {
    Intensity,
    Probability,
    Binary,
}

/// Row-major 2-D carrier for ROI crops and segmenter inputs/outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct Patch2D {
    width: usize,
    height: usize,
    pixels: Vec<f32>,
    kind: PatchKind,
}

impl Patch2D {
    pub fn new(width: usize, height: usize, pixels: Vec<f32>, kind: PatchKind) -> Result<Self> {
        if width == 0 || height == 0 || pixels.len() != width * height {
            return Err(Error::InvalidShape(format!(
                "{} pixels for a {width}x{height} patch",
                pixels.len()
            )));
        }
        let ok = match kind {
            PatchKind::Intensity => pixels.iter().all(|v| v.is_finite()),
            PatchKind::Probability => pixels.iter().all(|v| (0.0..=1.0).contains(v)),
            PatchKind::Binary => pixels.iter().all(|&v| v == 0.0 || v == 1.0),
        };
        if !ok {
            return Err(Error::InvalidParameter(format!(
                "pixel values out of range for {kind:?} patch"
            )));
        }
        Ok(Self {
            width,
            height,
            pixels,
            kind,
        })
    }

    pub fn filled(width: usize, height: usize, value: f32, kind: PatchKind) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], kind)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn kind(&self) -> PatchKind {
        self.kind
    }

    pub fn pixels(&self) -> &[f32] {
        &self.pixels
    }

    pub fn get(&self, row: usize, col: usize) -> f32 {
        self.pixels[row * self.width + col]
    }

    pub fn into_pixels(self) -> Vec<f32> {
        self.pixels
    }

    pub(crate) fn from_parts(width: usize, height: usize, pixels: Vec<f32>, kind: PatchKind) -> Self {
        debug_assert_eq!(pixels.len(), width * height);
        Self {
            width,
            height,
            pixels,
            kind,
        }
    }
}

/// Crops the ROI from its axial slice: pixel `(r, c)` is voxel
/// `(roi.z, roi.y1 + r, roi.x1 + c)`.
pub fn crop_axial(vol: &Volume3D, roi: &Roi2D) -> Result<Patch2D> {
    roi.check_in(vol.shape)?;
    let side = roi.side();
    let mut pixels = Vec::with_capacity(side * side);
    for y in roi.y1..roi.y2 {
        let start = linear_index(vol.shape, roi.z, y, roi.x1);
        pixels.extend(vol.voxels[start..start + side].iter().map(|&v| f32::from(v)));
    }
    Ok(Patch2D::from_parts(side, side, pixels, PatchKind::Intensity))
}

/// Crops the ROI from a mask's axial slice.
pub fn crop_axial_mask(mask: &Mask3D, roi: &Roi2D) -> Result<Mask2D> {
    roi.check_in(mask.shape)?;
    let side = roi.side();
    let mut data = Vec::with_capacity(side * side);
    for y in roi.y1..roi.y2 {
        let start = linear_index(mask.shape, roi.z, y, roi.x1);
        data.extend_from_slice(&mask.voxels[start..start + side]);
    }
    Ok(Mask2D {
        width: side,
        height: side,
        data,
    })
}

/// Voxel behind pixel `(row, col)` of slice `index` of `voi` seen along `view`.
///
/// Axial: width x, height y. Coronal: width x, height z. Sagittal: width y,
/// height z.
#[inline]
pub fn view_voxel(voi: &Voi3D, view: View, index: usize, row: usize, col: usize) -> (usize, usize, usize) {
    match view {
        View::Axial => (voi.z1 + index, voi.y1 + row, voi.x1 + col),
        View::Coronal => (voi.z1 + row, voi.y1 + index, voi.x1 + col),
        View::Sagittal => (voi.z1 + row, voi.y1 + col, voi.x1 + index),
    }
}

/// Number of slices and their (width, height) when viewing `voi` along `view`.
pub fn view_geometry(voi: &Voi3D, view: View) -> (usize, (usize, usize)) {
    let [dz, dy, dx] = voi.shape();
    match view {
        View::Axial => (dz, (dx, dy)),
        View::Coronal => (dy, (dx, dz)),
        View::Sagittal => (dx, (dy, dz)),
    }
}

/// One slice of `voi` along `view`.
pub fn extract_view_slice(vol: &Volume3D, voi: &Voi3D, view: View, index: usize) -> Result<Patch2D> {
    voi.check_within(vol.shape)?;
    let (n, (w, h)) = view_geometry(voi, view);
    if index >= n {
        return Err(Error::OutOfBounds(format!(
            "{view} slice {index} of a VOI with {n} slices"
        )));
    }
    let mut pixels = Vec::with_capacity(w * h);
    for r in 0..h {
        for c in 0..w {
            let (z, y, x) = view_voxel(voi, view, index, r, c);
            pixels.push(f32::from(vol.get(z, y, x)));
        }
    }
    Ok(Patch2D::from_parts(w, h, pixels, PatchKind::Intensity))
}

/// All slices of `voi` along `view`, in increasing index order.
pub fn extract_view_slices(vol: &Volume3D, voi: &Voi3D, view: View) -> Result<Vec<Patch2D>> {
    voi.check_within(vol.shape)?;
    let (n, _) = view_geometry(voi, view);
    (0..n)
        .map(|i| extract_view_slice(vol, voi, view, i))
        .collect()
}

/// Stacks per-slice masks taken along `view` back into a VOI-shaped mask.
pub fn assemble_view_masks(voi: &Voi3D, view: View, slices: &[Mask2D], spacing: [f64; 3]) -> Result<Mask3D> {
    let (n, (w, h)) = view_geometry(voi, view);
    if slices.len() != n {
        return Err(Error::InvalidShape(format!(
            "{} {view} slices for a VOI needing {n}",
            slices.len()
        )));
    }
    let local = Voi3D::new(0, voi.z2 - voi.z1, 0, voi.y2 - voi.y1, 0, voi.x2 - voi.x1);
    let mut out = Mask3D::zeros(voi.shape(), spacing)?;
    for (i, m) in slices.iter().enumerate() {
        if (m.width, m.height) != (w, h) {
            return Err(Error::DimensionMismatch {
                expected: (w, h),
                found: (m.width, m.height),
            });
        }
        for r in 0..h {
            for c in 0..w {
                if m.get(r, c) {
                    let (z, y, x) = view_voxel(&local, view, i, r, c);
                    out.set(z, y, x, true);
                }
            }
        }
    }
    Ok(out)
}

/// Writes `m` into slice `roi.z` inside the ROI, overwriting what was there.
pub fn embed_slice_mask(acc: &mut Mask3D, m: &Mask2D, roi: &Roi2D) -> Result<()> {
    roi.check_in(acc.shape)?;
    let side = roi.side();
    if (m.width, m.height) != (side, side) {
        return Err(Error::DimensionMismatch {
            expected: (side, side),
            found: (m.width, m.height),
        });
    }
    for r in 0..side {
        let dst = linear_index(acc.shape, roi.z, roi.y1 + r, roi.x1);
        acc.voxels[dst..dst + side].copy_from_slice(&m.data[r * side..(r + 1) * side]);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ramp(shape: [usize; 3]) -> Volume3D {
        let n: usize = shape.iter().product();
        Volume3D::new(shape, [1.0; 3], (0..n).map(|i| i as i16).collect()).unwrap()
    }

    #[test]
    fn volume_rejects_wrong_voxel_count() {
        assert!(Volume3D::new([4, 4, 4], [1.0; 3], vec![0; 63]).is_err());
        assert!(Volume3D::new([4, 4, 4], [1.0, 0.0, 1.0], vec![0; 64]).is_err());
        assert!(Mask3D::new([1, 1, 2], [1.0; 3], vec![0, 2]).is_err());
    }

    #[test]
    fn crop_corner_is_row_major() {
        let vol = ramp([2, 8, 8]);
        let p = crop_axial(&vol, &Roi2D::square(0, 0, 4, 0)).unwrap();
        let expected: Vec<f32> = (0..4)
            .flat_map(|r| (0..4).map(move |c| (r * 8 + c) as f32))
            .collect();
        assert_eq!(p.pixels(), &expected[..]);
    }

    #[test]
    fn crop_full_slice() {
        let vol = ramp([3, 6, 6]);
        let p = crop_axial(&vol, &Roi2D::square(0, 0, 6, 2)).unwrap();
        let expected: Vec<f32> = vol.voxels()[72..108].iter().map(|&v| f32::from(v)).collect();
        assert_eq!(p.pixels(), &expected[..]);
    }

    #[test]
    fn crop_matches_per_pixel_indexing() {
        let vol = ramp([2, 48, 48]);
        let roi = Roi2D::square(10, 10, 32, 1);
        let p = crop_axial(&vol, &roi).unwrap();
        assert_eq!(p.dims(), (32, 32));
        for r in 0..32 {
            for c in 0..32 {
                assert_eq!(p.get(r, c), f32::from(vol.get(1, 10 + r, 10 + c)));
            }
        }
    }

    #[test]
    fn crop_out_of_bounds() {
        let vol = ramp([2, 8, 8]);
        assert!(matches!(
            crop_axial(&vol, &Roi2D::square(5, 0, 4, 0)),
            Err(Error::OutOfBounds(_))
        ));
        assert!(crop_axial(&vol, &Roi2D::square(0, 0, 4, 2)).is_err());
    }

    #[test]
    fn view_slice_shapes() {
        let vol = ramp([10, 10, 10]);
        let voi = Voi3D::new(1, 7, 2, 7, 3, 7);
        let cor = extract_view_slices(&vol, &voi, View::Coronal).unwrap();
        assert_eq!(cor.len(), 5);
        assert!(cor.iter().all(|p| p.dims() == (4, 6)));
        let sag = extract_view_slices(&vol, &voi, View::Sagittal).unwrap();
        assert_eq!(sag.len(), 4);
        assert!(sag.iter().all(|p| p.dims() == (5, 6)));
    }

    #[test]
    fn view_slices_reassemble_to_subvolume() {
        let vol = ramp([9, 8, 7]);
        let voi = Voi3D::new(2, 8, 1, 6, 0, 4);
        for view in View::ALL {
            let patches = extract_view_slices(&vol, &voi, view).unwrap();
            let (n, _) = view_geometry(&voi, view);
            for z in voi.z1..voi.z2 {
                for y in voi.y1..voi.y2 {
                    for x in voi.x1..voi.x2 {
                        let (idx, row, col) = match view {
                            View::Axial => (z - voi.z1, y - voi.y1, x - voi.x1),
                            View::Coronal => (y - voi.y1, z - voi.z1, x - voi.x1),
                            View::Sagittal => (x - voi.x1, z - voi.z1, y - voi.y1),
                        };
                        assert!(idx < n);
                        assert_eq!(patches[idx].get(row, col), f32::from(vol.get(z, y, x)));
                    }
                }
            }
        }
    }

    #[test]
    fn embed_counts_and_commutes() {
        let mut acc = Mask3D::zeros([3, 4, 4], [1.0; 3]).unwrap();
        embed_slice_mask(&mut acc, &Mask2D::zeros(2, 2), &Roi2D::square(0, 0, 2, 0)).unwrap();
        assert!(acc.is_empty());
        embed_slice_mask(&mut acc, &Mask2D::ones(2, 2), &Roi2D::square(0, 0, 2, 0)).unwrap();
        assert_eq!(acc.count(), 4);

        let mut m = Mask2D::zeros(3, 3);
        m.set(1, 2, true);
        let a = Roi2D::square(1, 1, 3, 1);
        let b = Roi2D::square(0, 0, 2, 2);
        let mut ab = acc.clone();
        embed_slice_mask(&mut ab, &m, &a).unwrap();
        embed_slice_mask(&mut ab, &Mask2D::ones(2, 2), &b).unwrap();
        let mut ba = acc.clone();
        embed_slice_mask(&mut ba, &Mask2D::ones(2, 2), &b).unwrap();
        embed_slice_mask(&mut ba, &m, &a).unwrap();
        assert_eq!(ab, ba);
    }

    #[test]
    fn embed_rejects_wrong_dims() {
        let mut acc = Mask3D::zeros([1, 4, 4], [1.0; 3]).unwrap();
        assert!(matches!(
            embed_slice_mask(&mut acc, &Mask2D::ones(3, 3), &Roi2D::square(0, 0, 2, 0)),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn crop_then_embed_marks_side_squared() {
        let vol = ramp([4, 16, 16]);
        let roi = Roi2D::square(3, 5, 7, 2);
        let p = crop_axial(&vol, &roi).unwrap();
        let mut acc = Mask3D::like(&vol);
        embed_slice_mask(&mut acc, &Mask2D::ones(p.width(), p.height()), &roi).unwrap();
        assert_eq!(acc.count(), 49);
        assert_eq!(acc.bounding_box(), Some(Voi3D::new(2, 3, 5, 12, 3, 10)));
    }

    #[test]
    fn mask_crop_paste_roundtrip() {
        let mut m = Mask3D::zeros([5, 6, 7], [1.0; 3]).unwrap();
        m.set(2, 3, 4, true);
        m.set(1, 1, 1, true);
        let voi = Voi3D::new(1, 4, 1, 5, 1, 6);
        let sub = m.crop(&voi).unwrap();
        assert_eq!(sub.count(), 2);
        let mut back = Mask3D::zeros([5, 6, 7], [1.0; 3]).unwrap();
        back.paste(&voi, &sub).unwrap();
        assert_eq!(back, m);
    }
}
