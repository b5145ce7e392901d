//! Sampled scalar fields on rectangular grids and their persistence.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry of a d-dimensional tensor grid: node i along axis j sits at origin[j] + i * step[j].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub origin: Vec<f64>,
    pub step: Vec<f64>,
    pub counts: Vec<usize>,
}

impl GridSpec {
    pub fn new(origin: Vec<f64>, step: Vec<f64>, counts: Vec<usize>) -> Result<Self> {
        if origin.len() != step.len() || step.len() != counts.len() || origin.is_empty() {
            return Err(Error::Invalid("grid axes have inconsistent lengths".into()));
        }
        if step.iter().any(|&h| !(h > 0.0) || !h.is_finite()) {
            return Err(Error::Invalid("grid steps must be positive".into()));
        }
        if counts.contains(&0) {
            return Err(Error::Invalid("grid axis counts must be positive".into()));
        }
        Ok(Self { origin, step, counts })
    }

    /// Square planar grid covering [-half, half]^2 with step h (node count rounded up).
    pub fn centered_square(half: f64, h: f64) -> Result<Self> {
        let n = (2.0 * half / h).round() as usize + 1;
        let step = 2.0 * half / (n - 1).max(1) as f64;
        Self::new(vec![-half, -half], vec![step, step], vec![n, n])
    }

    /// Planar grid covering [x0, x1] x [y0, y1] with n nodes per axis.
    pub fn box2(lo: [f64; 2], hi: [f64; 2], n: [usize; 2]) -> Result<Self> {
        if n[0] < 2 || n[1] < 2 || hi[0] <= lo[0] || hi[1] <= lo[1] {
            return Err(Error::Invalid("degenerate planar grid".into()));
        }
        Self::new(
            lo.to_vec(),
            vec![(hi[0] - lo[0]) / (n[0] - 1) as f64, (hi[1] - lo[1]) / (n[1] - 1) as f64],
            n.to_vec(),
        )
    }

    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Multi-index of a flat index; axis 0 varies fastest.
    pub fn unflatten(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = Vec::with_capacity(self.dim());
        for &n in &self.counts {
            idx.push(flat % n);
            flat /= n;
        }
        idx
    }

    pub fn flatten(&self, idx: &[usize]) -> usize {
        let mut flat = 0;
        for j in (0..self.dim()).rev() {
            flat = flat * self.counts[j] + idx[j];
        }
        flat
    }

    pub fn point(&self, idx: &[usize]) -> Vec<f64> {
        idx.iter()
            .enumerate()
            .map(|(j, &i)| self.origin[j] + i as f64 * self.step[j])
            .collect()
    }

    pub fn axis(&self, j: usize) -> Vec<f64> {
        (0..self.counts[j]).map(|i| self.origin[j] + i as f64 * self.step[j]).collect()
    }

    /// Same box with the step halved (node counts 2n - 1).
    pub fn refined(&self) -> Self {
        Self {
            origin: self.origin.clone(),
            step: self.step.iter().map(|h| 0.5 * h).collect(),
            counts: self.counts.iter().map(|n| 2 * n - 1).collect(),
        }
    }

    /// Samples a function at every node, in parallel over nodes with ordered output.
    pub fn sample<F: Fn(&[f64]) -> f64 + Sync>(&self, f: F) -> Vec<f64> {
        (0..self.len())
            .into_par_iter()
            .map(|k| f(&self.point(&self.unflatten(k))))
            .collect()
    }
}

/// Metadata attached to a sampled field.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct GridMeta {
    pub description: String,
    pub eigenvalue: Option<f64>,
    pub base_point: Option<Vec<f64>>,
    pub scale: Option<f64>,
}

/// Sampled scalar field with exact geometry.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub meta: GridMeta,
}

#[derive(Serialize, Deserialize)]
struct Sidecar {
    spec: GridSpec,
    meta: GridMeta,
    layout: String,
}

const LAYOUT: &str = "f64-le-axis0-fastest";

impl FieldGrid {
    pub fn new(spec: GridSpec, values: Vec<f64>, meta: GridMeta) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Invalid(format!(
                "grid holds {} values but the geometry needs {}",
                values.len(),
                spec.len()
            )));
        }
        Ok(Self { spec, values, meta })
    }

    /// Samples `f` on `spec`.
    pub fn from_fn<F: Fn(&[f64]) -> f64 + Sync>(spec: GridSpec, meta: GridMeta, f: F) -> Self {
        let values = spec.sample(f);
        Self { spec, values, meta }
    }

    /// Value at planar node (i, j).
    pub fn at2(&self, i: usize, j: usize) -> f64 {
        self.values[j * self.spec.counts[0] + i]
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// CSV with one row per node; header x,y,value in the planar case and x0..x{d-1},value otherwise.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let d = self.spec.dim();
        let header: Vec<String> = if d == 2 {
            vec!["x".into(), "y".into(), "value".into()]
        } else {
            (0..d).map(|j| format!("x{j}")).chain(std::iter::once("value".into())).collect()
        };
        out.write_record(&header)?;
        for (k, v) in self.values.iter().enumerate() {
            let p = self.spec.point(&self.spec.unflatten(k));
            let mut rec: Vec<String> = p.iter().map(|x| format!("{x:.17e}")).collect();
            rec.push(format!("{v:.17e}"));
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    /// Writes `<stem>.bin` (little-endian f64 values) and `<stem>.json` (geometry and metadata).
    pub fn write_binary(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut bytes = Vec::with_capacity(8 * self.values.len());
        for v in &self.values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        std::fs::write(dir.join(format!("{stem}.bin")), bytes)?;
        let side = Sidecar { spec: self.spec.clone(), meta: self.meta.clone(), layout: LAYOUT.into() };
        std::fs::write(dir.join(format!("{stem}.json")), serde_json::to_vec_pretty(&side)?)?;
        Ok(())
    }

    pub fn read_binary(dir: &Path, stem: &str) -> Result<Self> {
        let side: Sidecar =
            serde_json::from_slice(&std::fs::read(dir.join(format!("{stem}.json")))?)?;
        if side.layout != LAYOUT {
            return Err(Error::Invalid(format!("unknown grid layout {}", side.layout)));
        }
        let mut raw = Vec::new();
        std::fs::File::open(dir.join(format!("{stem}.bin")))?.read_to_end(&mut raw)?;
        if raw.len() % 8 != 0 {
            return Err(Error::Invalid("binary grid length is not a multiple of 8".into()));
        }
        let values = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of eight bytes")))
            .collect();
        Self::new(side.spec, values, side.meta)
    }
}

/// Maximum over interior nodes of |discrete Laplacian + lambda * value|, with the (2d+1)-point stencil.
///
/// Returns the residual and the largest absolute sampled value.
pub fn stencil_residual(grid: &FieldGrid, lambda: f64, mask: Option<&[bool]>) -> Result<(f64, f64)> {
    let spec = &grid.spec;
    if spec.counts.iter().any(|&n| n < 5) {
        return Err(Error::Invalid("grid needs at least 3 interior nodes per axis".into()));
    }
    let d = spec.dim();
    let mut strides = vec![1usize; d];
    for j in 1..d {
        strides[j] = strides[j - 1] * spec.counts[j - 1];
    }
    let inv_h2: Vec<f64> = spec.step.iter().map(|h| 1.0 / (h * h)).collect();
    let (res, scale) = (0..spec.len())
        .into_par_iter()
        .map(|k| {
            let idx = spec.unflatten(k);
            let inside = |m: usize| mask.is_none_or(|mk| mk[m]);
            if !inside(k) {
                return (0.0, 0.0);
            }
            let v = grid.values[k];
            if idx.iter().zip(&spec.counts).any(|(&i, &n)| i == 0 || i + 1 == n) {
                return (0.0, v.abs());
            }
            let mut lap = 0.0;
            for j in 0..d {
                let (a, b) = (k - strides[j], k + strides[j]);
                if !inside(a) || !inside(b) {
                    return (0.0, v.abs());
                }
                lap += (grid.values[a] - 2.0 * v + grid.values[b]) * inv_h2[j];
            }
            ((lap + lambda * v).abs(), v.abs())
        })
        .reduce(|| (0.0, 0.0), |a, b| (a.0.max(b.0), a.1.max(b.1)));
    Ok((res, scale))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_round_trip() {
        let spec = GridSpec::box2([0.0, 0.0], [1.0, 2.0], [4, 3]).unwrap();
        let g = FieldGrid::from_fn(spec, GridMeta::default(), |p| p[0] + 10.0 * p[1]);
        let dir = std::env::temp_dir().join(format!("bl-grid-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        g.write_binary(&dir, "f").unwrap();
        let back = FieldGrid::read_binary(&dir, "f").unwrap();
        assert_eq!(g, back);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn flatten_inverts_unflatten() {
        let spec = GridSpec::new(vec![0.0; 3], vec![1.0; 3], vec![3, 4, 5]).unwrap();
        for k in 0..spec.len() {
            assert_eq!(spec.flatten(&spec.unflatten(k)), k);
        }
    }
}
