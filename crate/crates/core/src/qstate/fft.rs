//! Separable complex FFTs on the grid layout (x fastest).

use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use super::grid::GridSpec;

const BLOCK: usize = 32;

/// Forward/inverse transforms for one grid shape. The inverse is normalized so
/// that `inverse(forward(x)) == x`.
#[derive(Clone)]
pub struct GridFft {
    nx: usize,
    ny: usize,
    fwd_x: Arc<dyn Fft<f64>>,
    inv_x: Arc<dyn Fft<f64>>,
    fwd_y: Option<Arc<dyn Fft<f64>>>,
    inv_y: Option<Arc<dyn Fft<f64>>>,
}

impl std::fmt::Debug for GridFft {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridFft").field("nx", &self.nx).field("ny", &self.ny).finish()
    }
}

impl GridFft {
    pub fn new(grid: &GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let nx = grid.nx();
        let ny = grid.ny();
        let (fwd_y, inv_y) = if grid.dims() == 2 {
            (Some(planner.plan_fft_forward(ny)), Some(planner.plan_fft_inverse(ny)))
        } else {
            (None, None)
        };
        GridFft { nx, ny, fwd_x: planner.plan_fft_forward(nx), inv_x: planner.plan_fft_inverse(nx), fwd_y, inv_y }
    }

    pub fn forward(&self, data: &mut [Complex64]) {
        self.run(data, &self.fwd_x, self.fwd_y.as_ref());
    }

    pub fn inverse(&self, data: &mut [Complex64]) {
        self.run(data, &self.inv_x, self.inv_y.as_ref());
        let scale = 1.0 / data.len() as f64;
        data.par_iter_mut().for_each(|z| *z *= scale);
    }

    fn run(&self, data: &mut [Complex64], fx: &Arc<dyn Fft<f64>>, fy: Option<&Arc<dyn Fft<f64>>>) {
        assert_eq!(data.len(), self.nx * self.ny, "buffer does not match grid");
        rows(data, self.nx, fx);
        if let Some(fy) = fy {
            let mut t = vec![Complex64::default(); data.len()];
            transpose(data, &mut t, self.nx, self.ny);
            rows(&mut t, self.ny, fy);
            transpose(&t, data, self.ny, self.nx);
        }
    }
}

fn rows(data: &mut [Complex64], len: usize, fft: &Arc<dyn Fft<f64>>) {
    let scratch_len = fft.get_inplace_scratch_len();
    data.par_chunks_mut(len).for_each_init(
        || vec![Complex64::default(); scratch_len],
        |scratch, row| fft.process_with_scratch(row, scratch),
    );
}

/// `dst[c * rows + r] = src[r * cols + c]` for a `rows x cols` source.
fn transpose(src: &[Complex64], dst: &mut [Complex64], cols: usize, rows: usize) {
    dst.par_chunks_mut(rows * BLOCK.min(cols)).enumerate().for_each(|(bc, out)| {
        let c0 = bc * BLOCK;
        let c1 = (c0 + BLOCK).min(cols);
        for r0 in (0..rows).step_by(BLOCK) {
            let r1 = (r0 + BLOCK).min(rows);
            for c in c0..c1 {
                let o = &mut out[(c - c0) * rows..];
                for r in r0..r1 {
                    o[r] = src[r * cols + c];
                }
            }
        }
    });
}
