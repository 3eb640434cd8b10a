//! Band edges of the untilted lattice `(U/2)(1 - cos 2x)`, from a
//! finite-difference Bloch problem on one period. Used to tell lowest-band
//! Wannier-Stark states from states of the excited bands.

use nalgebra::DMatrix;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BandEdges {
    pub band1_bottom: f64,
    pub band1_top: f64,
    pub band2_bottom: f64,
    pub band2_top: f64,
}

impl BandEdges {
    pub fn gap(&self) -> f64 {
        self.band2_bottom - self.band1_top
    }

    pub fn midgap(&self) -> f64 {
        0.5 * (self.band1_top + self.band2_bottom)
    }

    pub fn band1_width(&self) -> f64 {
        self.band1_top - self.band1_bottom
    }
}

fn bloch_spectrum(depth_u: f64, points: usize, antiperiodic: bool) -> Vec<f64> {
    let h = std::f64::consts::PI / points as f64;
    let t = 1.0 / (h * h);
    let mut m = DMatrix::<f64>::zeros(points, points);
    for j in 0..points {
        let x = j as f64 * h;
        m[(j, j)] = 2.0 * t + 0.5 * depth_u * (1.0 - (2.0 * x).cos());
        if j + 1 < points {
            m[(j, j + 1)] = -t;
            m[(j + 1, j)] = -t;
        }
    }
    let wrap = if antiperiodic { t } else { -t };
    m[(0, points - 1)] += wrap;
    m[(points - 1, 0)] += wrap;
    let mut vals: Vec<f64> = m.symmetric_eigen().eigenvalues.iter().copied().collect();
    vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
    vals
}

/// Edges of the two lowest bands at depth `U` (in `E_r`).
pub fn band_edges(depth_u: f64, points_per_period: usize) -> BandEdges {
    let periodic = bloch_spectrum(depth_u, points_per_period, false);
    let anti = bloch_spectrum(depth_u, points_per_period, true);
    BandEdges {
        band1_bottom: periodic[0],
        band1_top: anti[0],
        band2_bottom: anti[1],
        band2_top: periodic[1],
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn free_particle_edges() {
        // U = 0: E(q) = q^2 in E_r with q in units of k_l; zone edge at q = 1
        let b = band_edges(0.0, 256);
        assert!(b.band1_bottom.abs() < 1e-10);
        assert!((b.band1_top - 1.0).abs() < 1e-4);
        assert!((b.band2_top - 4.0).abs() < 1e-3);
        assert!(b.gap().abs() < 1e-6);
    }

    #[test]
    fn gap_opens_with_depth() {
        let b = band_edges(3.0, 128);
        assert!(b.gap() > 1.0);
        assert!(b.band1_width() > 0.1 && b.band1_width() < 1.0);
        assert!(b.midgap() > b.band1_top && b.midgap() < b.band2_bottom);
    }
}
