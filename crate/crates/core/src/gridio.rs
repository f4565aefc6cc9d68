//! Sampled grids, RF recordings and array geometry, plus their on-disk formats.
//!
//! The binary layout (little-endian throughout) is:
//!
//! ```text
//! "ASAG" | u32 version (=1) | u8 dtype | u8 ndim
//! ndim x { u64 dim | f64 spacing | f64 origin }
//! payload, row-major
//! ```
//!
//! dtype codes: 0 real32, 1 real64, 2 complex64, 3 complex128. Complex samples
//! are stored as interleaved (re, im) pairs.
//!
//! A CSV form exists for real grids of one or two dimensions. Its first line is
//! a `#` header carrying `spacing=` (and optionally `origin=`, `dims=`,
//! `dtype=`), followed by one text row per index of the first axis.

use std::fs;
use std::path::Path;

use num_complex::{Complex32, Complex64};
use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};

pub const MAGIC: &[u8; 4] = b"ASAG";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    Real32,
    Real64,
    Complex64,
    Complex128,
}

impl DType {
    pub fn code(self) -> u8 {
        match self {
            DType::Real32 => 0,
            DType::Real64 => 1,
            DType::Complex64 => 2,
            DType::Complex128 => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::Real32),
            1 => Some(DType::Real64),
            2 => Some(DType::Complex64),
            3 => Some(DType::Complex128),
            _ => None,
        }
    }

    /// Bytes per sample.
    pub fn size(self) -> usize {
        match self {
            DType::Real32 => 4,
            DType::Real64 => 8,
            DType::Complex64 => 8,
            DType::Complex128 => 16,
        }
    }

    pub fn is_complex(self) -> bool {
        matches!(self, DType::Complex64 | DType::Complex128)
    }

    fn name(self) -> &'static str {
        match self {
            DType::Real32 => "real32",
            DType::Real64 => "real64",
            DType::Complex64 => "complex64",
            DType::Complex128 => "complex128",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum GridData {
    Real32(Vec<f32>),
    Real64(Vec<f64>),
    Complex64(Vec<Complex32>),
    Complex128(Vec<Complex64>),
}

impl GridData {
    pub fn len(&self) -> usize {
        match self {
            GridData::Real32(v) => v.len(),
            GridData::Real64(v) => v.len(),
            GridData::Complex64(v) => v.len(),
            GridData::Complex128(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            GridData::Real32(_) => DType::Real32,
            GridData::Real64(_) => DType::Real64,
            GridData::Complex64(_) => DType::Complex64,
            GridData::Complex128(_) => DType::Complex128,
        }
    }
}

/// A regular lattice of samples with physical spacing and origin per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dims: Vec<usize>,
    spacing: Vec<f64>,
    origin: Vec<f64>,
    data: GridData,
}

impl Grid {
    pub fn new(dims: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>, data: GridData) -> Result<Self> {
        if dims.is_empty() || dims.len() > 3 {
            return Err(AsaError::InvalidInput(format!(
                "grid must have 1 to 3 axes, got {}",
                dims.len()
            )));
        }
        if spacing.len() != dims.len() || origin.len() != dims.len() {
            return Err(AsaError::Shape(
                "spacing and origin must have one entry per axis".into(),
            ));
        }
        if dims.contains(&0) {
            return Err(AsaError::InvalidInput("all dims must be >= 1".into()));
        }
        if spacing.iter().any(|&s| !(s > 0.0) || !s.is_finite()) {
            return Err(AsaError::InvalidInput("all spacings must be finite and > 0".into()));
        }
        if origin.iter().any(|o| !o.is_finite()) {
            return Err(AsaError::InvalidInput("origin must be finite".into()));
        }
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(AsaError::Shape(format!(
                "data length {} does not match dims product {}",
                data.len(),
                expected
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            data,
        })
    }

    pub fn real(dims: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>, data: Vec<f64>) -> Result<Self> {
        Self::new(dims, spacing, origin, GridData::Real64(data))
    }

    pub fn complex(
        dims: Vec<usize>,
        spacing: Vec<f64>,
        origin: Vec<f64>,
        data: Vec<Complex64>,
    ) -> Result<Self> {
        Self::new(dims, spacing, origin, GridData::Complex128(data))
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing
    }

    pub fn origin(&self) -> &[f64] {
        &self.origin
    }

    pub fn data(&self) -> &GridData {
        &self.data
    }

    pub fn into_data(self) -> GridData {
        self.data
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    /// Physical coordinate of `index` along `axis`.
    pub fn coordinate(&self, axis: usize, index: usize) -> f64 {
        self.origin[axis] + index as f64 * self.spacing[axis]
    }

    /// Row-major flat offset of a multi-index.
    pub fn offset(&self, index: &[usize]) -> usize {
        index
            .iter()
            .zip(&self.dims)
            .fold(0, |acc, (&i, &d)| acc * d + i)
    }

    /// Inverse of [`Grid::offset`].
    pub fn unravel(&self, mut flat: usize) -> Vec<usize> {
        let mut index = vec![0; self.dims.len()];
        for axis in (0..self.dims.len()).rev() {
            index[axis] = flat % self.dims[axis];
            flat /= self.dims[axis];
        }
        index
    }

    pub fn as_real64(&self) -> Option<&[f64]> {
        match &self.data {
            GridData::Real64(v) => Some(v),
            _ => None,
        }
    }

    pub fn as_complex128(&self) -> Option<&[Complex64]> {
        match &self.data {
            GridData::Complex128(v) => Some(v),
            _ => None,
        }
    }

    /// Real samples widened to f64. Fails on complex grids.
    pub fn to_real64(&self) -> Result<Vec<f64>> {
        match &self.data {
            GridData::Real32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            GridData::Real64(v) => Ok(v.clone()),
            _ => Err(AsaError::InvalidInput("expected a real-valued grid".into())),
        }
    }

    /// Samples as complex f64; real grids get a zero imaginary part.
    pub fn to_complex128(&self) -> Vec<Complex64> {
        match &self.data {
            GridData::Real32(v) => v.iter().map(|&x| Complex64::new(x as f64, 0.0)).collect(),
            GridData::Real64(v) => v.iter().map(|&x| Complex64::new(x, 0.0)).collect(),
            GridData::Complex64(v) => v
                .iter()
                .map(|c| Complex64::new(c.re as f64, c.im as f64))
                .collect(),
            GridData::Complex128(v) => v.clone(),
        }
    }

    /// Size in bytes of the binary header for this grid.
    pub fn header_len(&self) -> usize {
        4 + 4 + 1 + 1 + self.ndim() * 24
    }
}

/// Serialise a grid into the binary layout.
pub fn encode_grid(grid: &Grid) -> Vec<u8> {
    let mut out = Vec::with_capacity(grid.header_len() + grid.len() * grid.dtype().size());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.push(grid.dtype().code());
    out.push(grid.ndim() as u8);
    for axis in 0..grid.ndim() {
        out.extend_from_slice(&(grid.dims[axis] as u64).to_le_bytes());
        out.extend_from_slice(&grid.spacing[axis].to_le_bytes());
        out.extend_from_slice(&grid.origin[axis].to_le_bytes());
    }
    match &grid.data {
        GridData::Real32(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        GridData::Real64(v) => v.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes())),
        GridData::Complex64(v) => v.iter().for_each(|c| {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }),
        GridData::Complex128(v) => v.iter().for_each(|c| {
            out.extend_from_slice(&c.re.to_le_bytes());
            out.extend_from_slice(&c.im.to_le_bytes());
        }),
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(AsaError::Corruption(format!(
                "unexpected end of data at byte {} (need {} more)",
                self.pos, n
            )));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Parse the binary layout.
pub fn decode_grid(bytes: &[u8]) -> Result<Grid> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(AsaError::Format("missing ASAG magic".into()));
    }
    let mut r = Reader { buf: bytes, pos: 4 };
    let version = r
        .u32()
        .map_err(|_| AsaError::Format("truncated header".into()))?;
    if version != FORMAT_VERSION {
        return Err(AsaError::Format(format!("unsupported version {version}")));
    }
    let code = r.u8().map_err(|_| AsaError::Format("truncated header".into()))?;
    let dtype =
        DType::from_code(code).ok_or_else(|| AsaError::Format(format!("unknown dtype code {code}")))?;
    let ndim = r.u8().map_err(|_| AsaError::Format("truncated header".into()))? as usize;
    if ndim == 0 || ndim > 3 {
        return Err(AsaError::Format(format!("unsupported ndim {ndim}")));
    }
    let mut dims = Vec::with_capacity(ndim);
    let mut spacing = Vec::with_capacity(ndim);
    let mut origin = Vec::with_capacity(ndim);
    for _ in 0..ndim {
        dims.push(r.u64()? as usize);
        spacing.push(r.f64()?);
        origin.push(r.f64()?);
    }
    let count = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| AsaError::Corruption("dims overflow".into()))?;
    let payload = &bytes[r.pos..];
    let expected = count
        .checked_mul(dtype.size())
        .ok_or_else(|| AsaError::Corruption("payload size overflow".into()))?;
    if payload.len() != expected {
        return Err(AsaError::Corruption(format!(
            "payload is {} bytes, dims imply {}",
            payload.len(),
            expected
        )));
    }
    let data = match dtype {
        DType::Real32 => GridData::Real32(
            payload
                .chunks_exact(4)
                .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        ),
        DType::Real64 => GridData::Real64(
            payload
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
                .collect(),
        ),
        DType::Complex64 => GridData::Complex64(
            payload
                .chunks_exact(8)
                .map(|b| {
                    Complex32::new(
                        f32::from_le_bytes(b[..4].try_into().unwrap()),
                        f32::from_le_bytes(b[4..].try_into().unwrap()),
                    )
                })
                .collect(),
        ),
        DType::Complex128 => GridData::Complex128(
            payload
                .chunks_exact(16)
                .map(|b| {
                    Complex64::new(
                        f64::from_le_bytes(b[..8].try_into().unwrap()),
                        f64::from_le_bytes(b[8..].try_into().unwrap()),
                    )
                })
                .collect(),
        ),
    };
    Grid::new(dims, spacing, origin, data).map_err(|e| AsaError::Corruption(e.to_string()))
}

pub fn write_grid(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_grid(grid))?;
    Ok(())
}

/// Read a grid, detecting binary vs CSV from the leading bytes.
pub fn read_grid(path: impl AsRef<Path>) -> Result<Grid> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        return decode_grid(&bytes);
    }
    let text = std::str::from_utf8(&bytes)
        .map_err(|_| AsaError::Format("neither ASAG binary nor UTF-8 CSV".into()))?;
    parse_csv(text)
}

/// Render a real grid of at most two axes as CSV text.
pub fn grid_to_csv(grid: &Grid) -> Result<String> {
    if grid.ndim() > 2 || grid.dtype().is_complex() {
        return Err(AsaError::InvalidInput(
            "CSV supports only real grids with ndim <= 2".into(),
        ));
    }
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let dims: Vec<String> = grid.dims.iter().map(|d| d.to_string()).collect();
    let mut out = format!(
        "# spacing={} origin={} dims={} dtype={}\n",
        join(&grid.spacing),
        join(&grid.origin),
        dims.join(","),
        grid.dtype().name()
    );
    let cols = *grid.dims.last().unwrap();
    let cells: Vec<String> = match &grid.data {
        GridData::Real32(v) => v.iter().map(|x| x.to_string()).collect(),
        GridData::Real64(v) => v.iter().map(|x| x.to_string()).collect(),
        _ => unreachable!(),
    };
    for row in cells.chunks(cols) {
        out.push_str(&row.join(","));
        out.push('\n');
    }
    Ok(out)
}

pub fn write_grid_csv(grid: &Grid, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, grid_to_csv(grid)?)?;
    Ok(())
}

fn parse_list(value: &str) -> Result<Vec<f64>> {
    value
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| AsaError::Format(format!("bad number '{s}' in CSV header")))
        })
        .collect()
}

/// Parse the CSV form.
pub fn parse_csv(text: &str) -> Result<Grid> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| AsaError::Format("empty CSV".into()))?
        .trim();
    let header = header
        .strip_prefix('#')
        .ok_or_else(|| AsaError::Format("CSV must start with a '# spacing=...' header".into()))?;

    let mut spacing = None;
    let mut origin = None;
    let mut dims_hint = None;
    let mut dtype = DType::Real64;
    for token in header.split_whitespace() {
        let (key, value) = token
            .split_once('=')
            .ok_or_else(|| AsaError::Format(format!("bad header token '{token}'")))?;
        match key {
            "spacing" => spacing = Some(parse_list(value)?),
            "origin" => origin = Some(parse_list(value)?),
            "dims" => {
                dims_hint = Some(
                    value
                        .split(',')
                        .map(|s| s.trim().parse::<usize>())
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|_| AsaError::Format("bad dims in CSV header".into()))?,
                )
            }
            "dtype" => {
                dtype = match value {
                    "real32" => DType::Real32,
                    "real64" => DType::Real64,
                    other => {
                        return Err(AsaError::Format(format!("unsupported CSV dtype '{other}'")))
                    }
                }
            }
            _ => {}
        }
    }
    let spacing = spacing.ok_or_else(|| AsaError::Format("CSV header lacks spacing=".into()))?;

    let mut rows: Vec<Vec<f64>> = Vec::new();
    for line in lines {
        let row = line
            .split(',')
            .map(|s| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| AsaError::Corruption(format!("bad CSV value '{s}'")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(AsaError::Corruption("ragged CSV rows".into()));
            }
        }
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(AsaError::Corruption("CSV has no data rows".into()));
    }
    let (n_rows, n_cols) = (rows.len(), rows[0].len());

    let dims = match dims_hint {
        Some(d) => d,
        None if spacing.len() == 1 && n_rows == 1 => vec![n_cols],
        None => vec![n_rows, n_cols],
    };
    if dims.len() > 2 {
        return Err(AsaError::Format("CSV grids have at most two axes".into()));
    }
    let values: Vec<f64> = rows.into_iter().flatten().collect();
    if dims.iter().product::<usize>() != values.len() {
        return Err(AsaError::Corruption("CSV dims do not match row data".into()));
    }
    let spacing = match spacing.len() {
        1 => vec![spacing[0]; dims.len()],
        n if n == dims.len() => spacing,
        _ => return Err(AsaError::Format("spacing entries do not match axes".into())),
    };
    let origin = match origin {
        None => vec![0.0; dims.len()],
        Some(o) if o.len() == 1 => vec![o[0]; dims.len()],
        Some(o) if o.len() == dims.len() => o,
        Some(_) => return Err(AsaError::Format("origin entries do not match axes".into())),
    };
    let data = match dtype {
        DType::Real32 => GridData::Real32(values.into_iter().map(|x| x as f32).collect()),
        _ => GridData::Real64(values),
    };
    Grid::new(dims, spacing, origin, data)
}

/// Element layout of a two-dimensional receive lattice.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Lattice {
    pub nx: usize,
    pub ny: usize,
    pub pitch_y: f64,
    pub origin_y: f64,
}

/// Multi-channel received time series.
///
/// Channel `j` of a linear array sits at `aperture_origin + j * pitch`. When a
/// [`Lattice`] is present, channels are ordered x-major (`j = ix * ny + iy`).
#[derive(Debug, Clone, PartialEq)]
pub struct RfRecording {
    pub channels: usize,
    pub samples: usize,
    pub dt: f64,
    pub pitch: f64,
    pub aperture_origin: f64,
    pub lattice: Option<Lattice>,
    pub data: Vec<f64>,
}

impl RfRecording {
    pub fn new(
        channels: usize,
        samples: usize,
        dt: f64,
        pitch: f64,
        aperture_origin: f64,
        data: Vec<f64>,
    ) -> Result<Self> {
        let rf = Self {
            channels,
            samples,
            dt,
            pitch,
            aperture_origin,
            lattice: None,
            data,
        };
        rf.validate()?;
        Ok(rf)
    }

    pub fn with_lattice(mut self, lattice: Lattice) -> Result<Self> {
        self.lattice = Some(lattice);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels < 2 {
            return Err(AsaError::InvalidInput("RF recording needs >= 2 channels".into()));
        }
        if self.samples == 0 {
            return Err(AsaError::InvalidInput("RF recording has no samples".into()));
        }
        if !(self.dt > 0.0) || !(self.pitch > 0.0) {
            return Err(AsaError::InvalidInput("dt and pitch must be > 0".into()));
        }
        if self.data.len() != self.channels * self.samples {
            return Err(AsaError::Shape(format!(
                "RF data has {} values, expected {} x {}",
                self.data.len(),
                self.channels,
                self.samples
            )));
        }
        if let Some(l) = self.lattice {
            if l.nx * l.ny != self.channels || !(l.pitch_y > 0.0) {
                return Err(AsaError::Shape("lattice does not match channel count".into()));
            }
        }
        Ok(())
    }

    pub fn channel(&self, j: usize) -> &[f64] {
        &self.data[j * self.samples..(j + 1) * self.samples]
    }

    /// Transverse coordinate of linear-array channel `j`.
    pub fn channel_x(&self, j: usize) -> f64 {
        self.aperture_origin + j as f64 * self.pitch
    }

    pub fn to_grid(&self) -> Grid {
        match self.lattice {
            None => Grid::real(
                vec![self.channels, self.samples],
                vec![self.pitch, self.dt],
                vec![self.aperture_origin, 0.0],
                self.data.clone(),
            ),
            Some(l) => Grid::real(
                vec![l.nx, l.ny, self.samples],
                vec![self.pitch, l.pitch_y, self.dt],
                vec![self.aperture_origin, l.origin_y, 0.0],
                self.data.clone(),
            ),
        }
        .expect("validated recording maps to a valid grid")
    }

    /// Interpret a real grid as a recording: `[channels, samples]` for a linear
    /// array, `[nx, ny, samples]` for a lattice.
    pub fn from_grid(grid: &Grid) -> Result<Self> {
        let data = grid.to_real64()?;
        match grid.ndim() {
            2 => Self::new(
                grid.dims()[0],
                grid.dims()[1],
                grid.spacing()[1],
                grid.spacing()[0],
                grid.origin()[0],
                data,
            ),
            3 => {
                let (nx, ny, ns) = (grid.dims()[0], grid.dims()[1], grid.dims()[2]);
                Self::new(nx * ny, ns, grid.spacing()[2], grid.spacing()[0], grid.origin()[0], data)?
                    .with_lattice(Lattice {
                        nx,
                        ny,
                        pitch_y: grid.spacing()[1],
                        origin_y: grid.origin()[1],
                    })
            }
            n => Err(AsaError::Shape(format!("RF grid must have 2 or 3 axes, got {n}"))),
        }
    }
}

/// Uniform linear array lying in the plane z = 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArrayGeometry {
    pub element_positions: Vec<f64>,
    pub pitch: f64,
    pub aperture: f64,
}

impl ArrayGeometry {
    /// `count` elements at `pitch`, centred on `center`.
    pub fn centered(count: usize, pitch: f64, center: f64) -> Result<Self> {
        if count < 2 {
            return Err(AsaError::InvalidInput("array needs at least 2 elements".into()));
        }
        let first = center - 0.5 * (count - 1) as f64 * pitch;
        Self::from_first(count, pitch, first)
    }

    pub fn from_first(count: usize, pitch: f64, first: f64) -> Result<Self> {
        if !(pitch > 0.0) {
            return Err(AsaError::InvalidInput("pitch must be > 0".into()));
        }
        let geometry = Self {
            element_positions: (0..count).map(|j| first + j as f64 * pitch).collect(),
            pitch,
            aperture: (count.saturating_sub(1)) as f64 * pitch,
        };
        geometry.validate()?;
        Ok(geometry)
    }

    /// Array spanning approximately `aperture` metres at `pitch`, centred on `center`.
    pub fn with_aperture(aperture: f64, pitch: f64, center: f64) -> Result<Self> {
        let count = (aperture / pitch).round() as usize + 1;
        Self::centered(count, pitch, center)
    }

    pub fn len(&self) -> usize {
        self.element_positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.element_positions.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.element_positions.len();
        if n < 2 {
            return Err(AsaError::InvalidInput("array needs at least 2 elements".into()));
        }
        let tol = 1e-9 * self.pitch.max(1e-12);
        for w in self.element_positions.windows(2) {
            let step = w[1] - w[0];
            if !(step > 0.0) || (step - self.pitch).abs() > tol.max(1e-9 * w[1].abs()) {
                return Err(AsaError::InvalidInput(
                    "element positions must be uniformly spaced at the pitch".into(),
                ));
            }
        }
        if (self.aperture - (n - 1) as f64 * self.pitch).abs() > 1e-9 * self.aperture.max(1.0) {
            return Err(AsaError::InvalidInput("aperture must equal (count - 1) * pitch".into()));
        }
        Ok(())
    }
}
