//! Sound-speed maps and the heterogeneity function derived from them.
//!
//! Medium grids store the axial coordinate on axis 0 and the transverse axes
//! after it (`[z, x]` or `[z, x, y]`), so every axial slice is contiguous.

use serde::{Deserialize, Serialize};

use crate::error::{AsaError, Result};
use crate::gridio::Grid;

/// Sound speed c(r) in m/s with its reference speed c0.
#[derive(Debug, Clone, PartialEq)]
pub struct MediumMap {
    grid: Grid,
    speeds: Vec<f64>,
    c0: f64,
}

/// lambda(x[,y]) = k0^2 (1 - c0^2 / c^2) on one axial slice.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaPlane {
    pub values: Vec<f64>,
    pub omega: f64,
    pub k0: f64,
}

impl LambdaPlane {
    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }
}

/// Arithmetic mean of all samples.
pub fn reference_speed(speeds: &[f64]) -> Result<f64> {
    if speeds.is_empty() {
        return Err(AsaError::InvalidInput("empty sound-speed grid".into()));
    }
    Ok(speeds.iter().sum::<f64>() / speeds.len() as f64)
}

impl MediumMap {
    /// Wrap a real `[z, x]` or `[z, x, y]` grid; c0 is the mean speed.
    pub fn new(grid: Grid) -> Result<Self> {
        if grid.ndim() < 2 {
            return Err(AsaError::InvalidInput(
                "medium grid needs an axial axis and at least one transverse axis".into(),
            ));
        }
        let speeds = grid.to_real64()?;
        if let Some(bad) = speeds.iter().find(|&&c| !(c > 0.0) || !c.is_finite()) {
            return Err(AsaError::InvalidInput(format!(
                "sound speed must be finite and positive, found {bad}"
            )));
        }
        let c0 = reference_speed(&speeds)?;
        Ok(Self { grid, speeds, c0 })
    }

    /// Replace the automatically computed reference speed.
    pub fn with_reference_speed(mut self, c0: f64) -> Result<Self> {
        if !(c0 > 0.0) || !c0.is_finite() {
            return Err(AsaError::InvalidInput("reference speed must be > 0".into()));
        }
        self.c0 = c0;
        Ok(self)
    }

    pub fn uniform(dims: Vec<usize>, spacing: Vec<f64>, origin: Vec<f64>, speed: f64) -> Result<Self> {
        let n = dims.iter().product();
        Self::new(Grid::real(dims, spacing, origin, vec![speed; n])?)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn speeds(&self) -> &[f64] {
        &self.speeds
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn axial_len(&self) -> usize {
        self.grid.dims()[0]
    }

    pub fn axial_spacing(&self) -> f64 {
        self.grid.spacing()[0]
    }

    pub fn axial_origin(&self) -> f64 {
        self.grid.origin()[0]
    }

    pub fn transverse_dims(&self) -> &[usize] {
        &self.grid.dims()[1..]
    }

    pub fn transverse_len(&self) -> usize {
        self.transverse_dims().iter().product()
    }

    /// Axial extent `[z_first, z_last]` of sample centres.
    pub fn axial_range(&self) -> (f64, f64) {
        let z0 = self.axial_origin();
        (z0, z0 + (self.axial_len() - 1) as f64 * self.axial_spacing())
    }

    /// Whether `z` lies within half a cell of the sampled axial range.
    pub fn covers_z(&self, z: f64) -> bool {
        let (lo, hi) = self.axial_range();
        let half = 0.5 * self.axial_spacing() * (1.0 + 1e-9);
        z >= lo - half && z <= hi + half
    }

    /// Nearest axial index to physical `z`, clamped to the grid.
    pub fn nearest_axial_index(&self, z: f64) -> usize {
        nearest_index(z, self.axial_origin(), self.axial_spacing(), self.axial_len())
    }

    pub fn slice(&self, axial_index: usize) -> &[f64] {
        let n = self.transverse_len();
        &self.speeds[axial_index * n..(axial_index + 1) * n]
    }

    /// Heterogeneity function on one axial slice.
    pub fn lambda_plane(&self, axial_index: usize, omega: f64) -> Result<LambdaPlane> {
        if axial_index >= self.axial_len() {
            return Err(AsaError::OutOfBounds {
                index: axial_index,
                len: self.axial_len(),
            });
        }
        if !(omega > 0.0) {
            return Err(AsaError::InvalidInput("omega must be > 0".into()));
        }
        let k0 = omega / self.c0;
        let values = self
            .slice(axial_index)
            .iter()
            .map(|&c| lambda_value(k0, self.c0, c))
            .collect();
        Ok(LambdaPlane { values, omega, k0 })
    }

    /// Heterogeneity function sampled at arbitrary transverse coordinates.
    ///
    /// Each coordinate takes the nearest medium column; coordinates beyond the
    /// grid take the edge column, which is the same as edge-replicated padding.
    pub fn lambda_at(&self, axial_index: usize, xs: &[f64], ys: &[f64], omega: f64) -> Result<LambdaPlane> {
        if axial_index >= self.axial_len() {
            return Err(AsaError::OutOfBounds {
                index: axial_index,
                len: self.axial_len(),
            });
        }
        let k0 = omega / self.c0;
        let slice = self.slice(axial_index);
        let (g, td) = (&self.grid, self.transverse_dims());
        let ix: Vec<usize> = xs
            .iter()
            .map(|&x| nearest_index(x, g.origin()[1], g.spacing()[1], td[0]))
            .collect();
        let values = if td.len() == 1 {
            ix.iter().map(|&i| lambda_value(k0, self.c0, slice[i])).collect()
        } else {
            let iy: Vec<usize> = ys
                .iter()
                .map(|&y| nearest_index(y, g.origin()[2], g.spacing()[2], td[1]))
                .collect();
            let mut out = Vec::with_capacity(ix.len() * iy.len());
            for &i in &ix {
                for &j in &iy {
                    out.push(lambda_value(k0, self.c0, slice[i * td[1] + j]));
                }
            }
            out
        };
        Ok(LambdaPlane { values, omega, k0 })
    }

    pub fn min_speed(&self) -> f64 {
        self.speeds.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_speed(&self) -> f64 {
        self.speeds.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn is_uniform_at_c0(&self) -> bool {
        self.speeds.iter().all(|&c| c == self.c0)
    }
}

#[inline]
pub fn lambda_value(k0: f64, c0: f64, c: f64) -> f64 {
    let mu = (c0 * c0) / (c * c);
    k0 * k0 * (1.0 - mu)
}

fn nearest_index(coord: f64, origin: f64, spacing: f64, len: usize) -> usize {
    let t = ((coord - origin) / spacing).round();
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(len - 1)
    }
}

/// Centre `data` (row-major, `dims`) inside `target` dims, replicating edge values.
pub fn pad_edge_replicate(data: &[f64], dims: &[usize], target: &[usize]) -> Result<Vec<f64>> {
    if dims.len() != target.len() {
        return Err(AsaError::Shape("target dims must have one entry per axis".into()));
    }
    if dims.iter().zip(target).any(|(&d, &t)| t < d) {
        return Err(AsaError::InvalidInput(format!(
            "target dims {target:?} smaller than source {dims:?}"
        )));
    }
    let before: Vec<usize> = dims.iter().zip(target).map(|(&d, &t)| (t - d) / 2).collect();
    let total: usize = target.iter().product();
    let mut out = Vec::with_capacity(total);
    let mut idx = vec![0usize; target.len()];
    for _ in 0..total {
        let src = idx
            .iter()
            .zip(&before)
            .zip(dims)
            .fold(0usize, |acc, ((&i, &b), &d)| {
                let s = (i as isize - b as isize).clamp(0, d as isize - 1) as usize;
                acc * d + s
            });
        out.push(data[src]);
        for axis in (0..target.len()).rev() {
            idx[axis] += 1;
            if idx[axis] < target[axis] {
                break;
            }
            idx[axis] = 0;
        }
    }
    Ok(out)
}

/// Pad a medium to `target_dims`, centred, replicating edge values.
/// The reference speed is inherited, not recomputed.
pub fn pad_medium(m: &MediumMap, target_dims: &[usize]) -> Result<MediumMap> {
    let g = m.grid();
    let data = pad_edge_replicate(m.speeds(), g.dims(), target_dims)?;
    let origin = g
        .origin()
        .iter()
        .zip(g.spacing())
        .zip(g.dims().iter().zip(target_dims))
        .map(|((&o, &s), (&d, &t))| o - ((t - d) / 2) as f64 * s)
        .collect();
    let grid = Grid::real(target_dims.to_vec(), g.spacing().to_vec(), origin, data)?;
    Ok(MediumMap {
        speeds: grid.to_real64()?,
        grid,
        c0: m.c0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn medium_2d(nz: usize, nx: usize, data: Vec<f64>) -> MediumMap {
        MediumMap::new(Grid::real(vec![nz, nx], vec![2e-4, 2e-4], vec![0.0, 0.0], data).unwrap()).unwrap()
    }

    #[test]
    fn reference_speed_examples() {
        assert_eq!(reference_speed(&[1500.0; 7]).unwrap(), 1500.0);
        assert_eq!(reference_speed(&[1400.0, 1400.0, 1600.0, 1600.0]).unwrap(), 1500.0);
        assert_eq!(reference_speed(&[1400.0, 1500.0, 1600.0]).unwrap(), 1500.0);
        assert!(reference_speed(&[]).is_err());
        assert_eq!(medium_2d(1, 3, vec![1400.0, 1500.0, 1600.0]).c0(), 1500.0);
    }

    #[test]
    fn lambda_examples() {
        let c0 = 1500.0;
        let omega = 100.0 * c0;
        let m = medium_2d(2, 3, vec![c0, 2.0 * c0, 0.5 * c0, c0, c0, c0])
            .with_reference_speed(c0)
            .unwrap();
        let l = m.lambda_plane(0, omega).unwrap();
        assert_eq!(l.k0, 100.0);
        assert_eq!(l.values[0], 0.0);
        assert!((l.values[1] - 7500.0).abs() < 1e-9);
        assert!((l.values[2] + 30000.0).abs() < 1e-9);
        assert!(m.lambda_plane(1, omega).unwrap().is_zero());
        assert!(matches!(m.lambda_plane(2, omega), Err(AsaError::OutOfBounds { .. })));
    }

    #[test]
    fn rejects_nonpositive_speed() {
        let g = Grid::real(vec![1, 2], vec![1.0, 1.0], vec![0.0, 0.0], vec![1500.0, 0.0]).unwrap();
        assert!(MediumMap::new(g).is_err());
    }

    #[test]
    fn pad_one_dimensional_replication() {
        let out = pad_edge_replicate(&[1.0, 2.0, 3.0], &[3], &[5]).unwrap();
        assert_eq!(out, vec![1.0, 1.0, 2.0, 3.0, 3.0]);
        assert!(pad_edge_replicate(&[1.0, 2.0, 3.0], &[3], &[2]).is_err());
    }

    #[test]
    fn pad_same_dims_is_identity_and_keeps_c0() {
        let m = medium_2d(2, 2, vec![1400.0, 1500.0, 1550.0, 1600.0])
            .with_reference_speed(1480.0)
            .unwrap();
        let same = pad_medium(&m, &[2, 2]).unwrap();
        assert_eq!(same, m);
        let wide = pad_medium(&m, &[2, 6]).unwrap();
        assert_eq!(wide.c0(), 1480.0);
        assert_eq!(wide.slice(0), &[1400.0, 1400.0, 1400.0, 1500.0, 1500.0, 1500.0]);
        assert_eq!(wide.grid().origin()[1], -2.0 * 2e-4);
        assert_eq!(wide.min_speed(), m.min_speed());
        assert_eq!(wide.max_speed(), m.max_speed());
    }

    #[test]
    fn lambda_at_matches_padded_medium() {
        let m = medium_2d(2, 3, vec![1450.0, 1500.0, 1600.0, 1500.0, 1520.0, 1480.0]);
        let padded = pad_medium(&m, &[2, 9]).unwrap();
        let xs: Vec<f64> = (0..9).map(|i| padded.grid().coordinate(1, i)).collect();
        for iz in 0..2 {
            let direct = padded.lambda_plane(iz, 2.0e6).unwrap();
            let sampled = m.lambda_at(iz, &xs, &[], 2.0e6).unwrap();
            assert_eq!(direct.values, sampled.values);
        }
    }
}
