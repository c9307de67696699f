//! Secret alphabets and their ground metric.
//!
//! Two shapes are supported: a linear range of evenly spaced values and a
//! rectangular planar grid of square cells. Both expose `size()` and a metric
//! `dist(i, j)` used by the geometric mechanisms, by Shokri's loss and by the
//! earth mover's distance.

use crate::error::{Error, Result};

/// Kilometres per degree of latitude.
pub const KM_PER_DEG_LAT: f64 = 111.32;

/// Linear alphabet `{origin, origin + spacing, …}` with `size` elements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearAlphabet {
    size: usize,
    spacing: f64,
    origin: f64,
}

impl LinearAlphabet {
    pub fn new(size: usize, spacing: f64) -> Result<Self> {
        Self::with_origin(size, spacing, 0.0)
    }

    pub fn with_origin(size: usize, spacing: f64, origin: f64) -> Result<Self> {
        if size == 0 {
            return Err(Error::InvalidParameter("linear alphabet size must be >= 1".into()));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(Error::InvalidParameter(format!("spacing must be positive, got {spacing}")));
        }
        if !origin.is_finite() {
            return Err(Error::InvalidParameter("origin must be finite".into()));
        }
        Ok(Self { size, spacing, origin })
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> f64 {
        self.origin
    }

    /// Coordinate of element `i`.
    pub fn coordinate(&self, i: usize) -> f64 {
        self.origin + i as f64 * self.spacing
    }

    pub fn dist(&self, i: usize, j: usize) -> Result<f64> {
        check_index(i, self.size)?;
        check_index(j, self.size)?;
        Ok(i.abs_diff(j) as f64 * self.spacing)
    }
}

/// Geographic bounding box in degrees.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct BoundingBox {
    pub lat_min: f64,
    pub lat_max: f64,
    pub lon_min: f64,
    pub lon_max: f64,
}

impl BoundingBox {
    /// The San Francisco region used for the Gowalla experiments.
    pub const SAN_FRANCISCO: BoundingBox = BoundingBox {
        lat_min: 37.7228,
        lat_max: 37.7946,
        lon_min: -122.5153,
        lon_max: -122.3789,
    };

    pub fn validate(&self) -> Result<()> {
        let ok = self.lat_min < self.lat_max
            && self.lon_min < self.lon_max
            && self.lat_min >= -90.0
            && self.lat_max <= 90.0
            && self.lon_min >= -180.0
            && self.lon_max <= 180.0;
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!("degenerate bounding box {self:?}")))
        }
    }

    /// Approximate (width, height) in km, using 111.32 km per degree of
    /// latitude and 111.32·cos(mid-latitude) km per degree of longitude.
    pub fn extent_km(&self) -> (f64, f64) {
        let mid = 0.5 * (self.lat_min + self.lat_max);
        let width = (self.lon_max - self.lon_min) * KM_PER_DEG_LAT * mid.to_radians().cos();
        let height = (self.lat_max - self.lat_min) * KM_PER_DEG_LAT;
        (width, height)
    }

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        lat >= self.lat_min && lat < self.lat_max && lon >= self.lon_min && lon < self.lon_max
    }
}

/// Rectangular grid of square cells. Column index runs along longitude,
/// row index along latitude; flat index is `row * cols + col`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarGrid {
    cols: usize,
    rows: usize,
    cell_size: f64,
    bbox: Option<BoundingBox>,
}

impl PlanarGrid {
    pub fn new(cols: usize, rows: usize, cell_size: f64) -> Result<Self> {
        if cols == 0 || rows == 0 {
            return Err(Error::InvalidParameter("grid needs at least one cell".into()));
        }
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::InvalidParameter(format!("cell size must be positive, got {cell_size}")));
        }
        Ok(Self { cols, rows, cell_size, bbox: None })
    }

    pub fn with_bbox(mut self, bbox: BoundingBox) -> Result<Self> {
        bbox.validate()?;
        self.bbox = Some(bbox);
        Ok(self)
    }

    /// The 24×16 grid of 0.5 km cells over San Francisco.
    pub fn san_francisco() -> Self {
        Self { cols: 24, rows: 16, cell_size: 0.5, bbox: Some(BoundingBox::SAN_FRANCISCO) }
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn bbox(&self) -> Option<&BoundingBox> {
        self.bbox.as_ref()
    }

    pub fn size(&self) -> usize {
        self.cols * self.rows
    }

    pub fn flat_index(&self, col: usize, row: usize) -> usize {
        row * self.cols + col
    }

    /// `(col, row)` of a flat index.
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.cols, index / self.cols)
    }

    pub fn dist(&self, i: usize, j: usize) -> Result<f64> {
        let size = self.size();
        check_index(i, size)?;
        check_index(j, size)?;
        let (ci, ri) = self.coords(i);
        let (cj, rj) = self.coords(j);
        let dc = ci.abs_diff(cj) as f64;
        let dr = ri.abs_diff(rj) as f64;
        Ok(self.cell_size * dc.hypot(dr))
    }

    /// Relative mismatch between the bbox extent in km and the grid extent
    /// `cols·cell_size × rows·cell_size`, as (width, height) ratios minus one.
    pub fn bbox_mismatch(&self) -> Result<(f64, f64)> {
        let bbox = self.bbox.ok_or(Error::MissingBoundingBox)?;
        let (w, h) = bbox.extent_km();
        let gw = self.cols as f64 * self.cell_size;
        let gh = self.rows as f64 * self.cell_size;
        Ok((w / gw - 1.0, h / gh - 1.0))
    }

    /// Flat index of the cell enclosing `(lat, lon)`. Cells are half-open on
    /// their max edges, so points on `lat_max` or `lon_max` fall outside.
    pub fn cell_of(&self, lat: f64, lon: f64) -> Result<Option<usize>> {
        let bbox = self.bbox.ok_or(Error::MissingBoundingBox)?;
        if !bbox.contains(lat, lon) {
            return Ok(None);
        }
        let fx = (lon - bbox.lon_min) / (bbox.lon_max - bbox.lon_min);
        let fy = (lat - bbox.lat_min) / (bbox.lat_max - bbox.lat_min);
        let col = ((fx * self.cols as f64).floor() as usize).min(self.cols - 1);
        let row = ((fy * self.rows as f64).floor() as usize).min(self.rows - 1);
        Ok(Some(self.flat_index(col, row)))
    }

    /// `(lat, lon)` of the centre of a cell.
    pub fn cell_center(&self, index: usize) -> Result<(f64, f64)> {
        check_index(index, self.size())?;
        let bbox = self.bbox.ok_or(Error::MissingBoundingBox)?;
        let (col, row) = self.coords(index);
        let lon = bbox.lon_min + (col as f64 + 0.5) * (bbox.lon_max - bbox.lon_min) / self.cols as f64;
        let lat = bbox.lat_min + (row as f64 + 0.5) * (bbox.lat_max - bbox.lat_min) / self.rows as f64;
        Ok((lat, lon))
    }

    /// Grid obtained by merging `fx × fy` blocks of cells.
    pub fn coarsen(&self, fx: usize, fy: usize) -> Result<PlanarGrid> {
        if fx == 0 || fy == 0 || self.cols % fx != 0 || self.rows % fy != 0 {
            return Err(Error::InvalidParameter(format!(
                "cannot coarsen {}x{} grid by {fx}x{fy}",
                self.cols, self.rows
            )));
        }
        if fx != fy {
            return Err(Error::InvalidParameter("coarsening must keep cells square".into()));
        }
        Ok(PlanarGrid {
            cols: self.cols / fx,
            rows: self.rows / fy,
            cell_size: self.cell_size * fx as f64,
            bbox: self.bbox,
        })
    }

    /// Index of the coarse cell containing fine cell `index` for a
    /// coarsening factor `factor`.
    pub fn coarse_index(&self, index: usize, factor: usize) -> usize {
        let (col, row) = self.coords(index);
        let coarse_cols = self.cols / factor;
        (row / factor) * coarse_cols + col / factor
    }
}

/// A secret alphabet: linear or planar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Alphabet {
    Linear(LinearAlphabet),
    Planar(PlanarGrid),
}

impl Alphabet {
    pub fn linear(size: usize, spacing: f64) -> Result<Self> {
        LinearAlphabet::new(size, spacing).map(Alphabet::Linear)
    }

    pub fn size(&self) -> usize {
        match self {
            Alphabet::Linear(a) => a.size(),
            Alphabet::Planar(g) => g.size(),
        }
    }

    pub fn dist(&self, i: usize, j: usize) -> Result<f64> {
        match self {
            Alphabet::Linear(a) => a.dist(i, j),
            Alphabet::Planar(g) => g.dist(i, j),
        }
    }

    /// Full `size × size` distance matrix, row-major.
    pub fn distance_matrix(&self) -> Vec<f64> {
        let k = self.size();
        let mut out = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                out.push(self.dist(i, j).expect("indices in range"));
            }
        }
        out
    }
}

impl From<LinearAlphabet> for Alphabet {
    fn from(a: LinearAlphabet) -> Self {
        Alphabet::Linear(a)
    }
}

impl From<PlanarGrid> for Alphabet {
    fn from(g: PlanarGrid) -> Self {
        Alphabet::Planar(g)
    }
}

fn check_index(index: usize, size: usize) -> Result<()> {
    if index < size {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange { index, size })
    }
}
