//! Preconditioned conjugate gradients for screened, weighted grid Laplacians.
//!
//! The system is `(Λ_d + L_w) x = Λ_d s`, where `Λ_d` is a nonnegative
//! diagonal of data weights and `L_w` the graph Laplacian of the 4-connected
//! grid with positive edge weights. It is SPD whenever some data weight is
//! positive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preconditioner {
    Jacobi,
    /// One symmetric V-cycle over 2×2 piecewise-constant aggregates.
    Multigrid,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iters: usize,
    /// Stop when `‖b - Ax‖ / ‖b‖` drops below this.
    pub residual_tol: f64,
    pub preconditioner: Preconditioner,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            max_iters: 5000,
            residual_tol: 1e-9,
            preconditioner: Preconditioner::Multigrid,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.residual_tol > 0.0) {
            return Err(Error::InvalidParameter("solver residual_tol must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("solver max_iters must be > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub iterations: usize,
    pub relative_residual: f64,
    pub converged: bool,
}

/// A weighted 5-point system on a `width × height` grid.
#[derive(Debug, Clone)]
pub struct GridSystem {
    pub width: usize,
    pub height: usize,
    /// Diagonal data weight per node.
    pub data: Vec<f64>,
    /// Weight of edge `(x, y) – (x + 1, y)`, indexed `y * (width - 1) + x`.
    pub wx: Vec<f64>,
    /// Weight of edge `(x, y) – (x, y + 1)`, indexed `y * width + x`.
    pub wy: Vec<f64>,
}

impl GridSystem {
    /// Builds the system from node data weights and node smoothness weights;
    /// each edge takes the smaller smoothness weight of its two endpoints.
    pub fn from_node_weights(width: usize, height: usize, data: Vec<f64>, smooth: &[f64]) -> Self {
        let mut wx = Vec::with_capacity(width.saturating_sub(1) * height);
        for y in 0..height {
            for x in 0..width.saturating_sub(1) {
                let i = y * width + x;
                wx.push(smooth[i].min(smooth[i + 1]));
            }
        }
        let mut wy = Vec::with_capacity(width * height.saturating_sub(1));
        for y in 0..height.saturating_sub(1) {
            for x in 0..width {
                let i = y * width + x;
                wy.push(smooth[i].min(smooth[i + width]));
            }
        }
        GridSystem {
            width,
            height,
            data,
            wx,
            wy,
        }
    }

    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn diagonal(&self) -> Vec<f64> {
        let (w, h) = (self.width, self.height);
        let mut d = self.data.clone();
        for y in 0..h {
            for x in 0..w.saturating_sub(1) {
                let e = self.wx[y * (w - 1) + x];
                d[y * w + x] += e;
                d[y * w + x + 1] += e;
            }
        }
        for y in 0..h.saturating_sub(1) {
            for x in 0..w {
                let e = self.wy[y * w + x];
                d[y * w + x] += e;
                d[(y + 1) * w + x] += e;
            }
        }
        d
    }

    /// `out = A x`
    pub fn apply(&self, x: &[f64], out: &mut [f64]) {
        let (w, h) = (self.width, self.height);
        for (o, (d, xv)) in out.iter_mut().zip(self.data.iter().zip(x)) {
            *o = d * xv;
        }
        for y in 0..h {
            let row = y * w;
            for xx in 0..w.saturating_sub(1) {
                let e = self.wx[y * (w - 1) + xx];
                let diff = e * (x[row + xx] - x[row + xx + 1]);
                out[row + xx] += diff;
                out[row + xx + 1] -= diff;
            }
        }
        for y in 0..h.saturating_sub(1) {
            for xx in 0..w {
                let i = y * w + xx;
                let diff = self.wy[i] * (x[i] - x[i + w]);
                out[i] += diff;
                out[i + w] -= diff;
            }
        }
    }

    /// Sum of off-diagonal couplings `Σ_j w_ij x_j` for node `i = (x, y)`.
    #[inline]
    fn neighbor_sum(&self, x: usize, y: usize, v: &[f64]) -> f64 {
        let w = self.width;
        let i = y * w + x;
        let mut s = 0.0;
        if x > 0 {
            s += self.wx[y * (w - 1) + x - 1] * v[i - 1];
        }
        if x + 1 < w {
            s += self.wx[y * (w - 1) + x] * v[i + 1];
        }
        if y > 0 {
            s += self.wy[i - w] * v[i - w];
        }
        if y + 1 < self.height {
            s += self.wy[i] * v[i + w];
        }
        s
    }

    fn gauss_seidel(&self, diag: &[f64], b: &[f64], x: &mut [f64], forward: bool) {
        let (w, h) = (self.width, self.height);
        let mut visit = |xx: usize, y: usize| {
            let i = y * w + xx;
            if diag[i] > 0.0 {
                x[i] = (b[i] + self.neighbor_sum(xx, y, x)) / diag[i];
            }
        };
        if forward {
            for y in 0..h {
                for xx in 0..w {
                    visit(xx, y);
                }
            }
        } else {
            for y in (0..h).rev() {
                for xx in (0..w).rev() {
                    visit(xx, y);
                }
            }
        }
    }

    /// Galerkin coarsening over 2×2 aggregates.
    fn coarsen(&self) -> GridSystem {
        let (w, h) = (self.width, self.height);
        let (cw, ch) = (w.div_ceil(2), h.div_ceil(2));
        let mut data = vec![0.0; cw * ch];
        for y in 0..h {
            for x in 0..w {
                data[(y / 2) * cw + x / 2] += self.data[y * w + x];
            }
        }
        let mut wx = vec![0.0; cw.saturating_sub(1) * ch];
        for y in 0..h {
            for x in 0..w.saturating_sub(1) {
                if x % 2 == 1 {
                    wx[(y / 2) * (cw - 1) + x / 2] += self.wx[y * (w - 1) + x];
                }
            }
        }
        let mut wy = vec![0.0; cw * ch.saturating_sub(1)];
        for y in 0..h.saturating_sub(1) {
            if y % 2 == 1 {
                for x in 0..w {
                    wy[(y / 2) * cw + x / 2] += self.wy[y * w + x];
                }
            }
        }
        GridSystem {
            width: cw,
            height: ch,
            data,
            wx,
            wy,
        }
    }
}

struct Level {
    sys: GridSystem,
    diag: Vec<f64>,
}

/// Symmetric V-cycle preconditioner.
struct Multigrid {
    levels: Vec<Level>,
    sweeps: usize,
    coarse_sweeps: usize,
}

impl Multigrid {
    fn new(sys: &GridSystem) -> Self {
        let mut levels = vec![Level {
            diag: sys.diagonal(),
            sys: sys.clone(),
        }];
        while let Some(last) = levels.last() {
            if last.sys.width <= 4 && last.sys.height <= 4 || levels.len() >= 16 {
                break;
            }
            let c = last.sys.coarsen();
            levels.push(Level {
                diag: c.diagonal(),
                sys: c,
            });
        }
        Multigrid {
            levels,
            sweeps: 2,
            coarse_sweeps: 40,
        }
    }

    fn vcycle(&self, lvl: usize, b: &[f64], x: &mut [f64]) {
        let level = &self.levels[lvl];
        x.iter_mut().for_each(|v| *v = 0.0);
        if lvl + 1 == self.levels.len() {
            for _ in 0..self.coarse_sweeps {
                level.sys.gauss_seidel(&level.diag, b, x, true);
                level.sys.gauss_seidel(&level.diag, b, x, false);
            }
            return;
        }
        for _ in 0..self.sweeps {
            level.sys.gauss_seidel(&level.diag, b, x, true);
        }
        let n = level.sys.len();
        let mut ax = vec![0.0; n];
        level.sys.apply(x, &mut ax);
        let (w, h) = (level.sys.width, level.sys.height);
        let coarse = &self.levels[lvl + 1].sys;
        let mut rc = vec![0.0; coarse.len()];
        for y in 0..h {
            for xx in 0..w {
                let i = y * w + xx;
                rc[(y / 2) * coarse.width + xx / 2] += b[i] - ax[i];
            }
        }
        let mut ec = vec![0.0; coarse.len()];
        self.vcycle(lvl + 1, &rc, &mut ec);
        for y in 0..h {
            for xx in 0..w {
                x[y * w + xx] += ec[(y / 2) * coarse.width + xx / 2];
            }
        }
        for _ in 0..self.sweeps {
            level.sys.gauss_seidel(&level.diag, b, x, false);
        }
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves `A x = b` by PCG, starting from `x`.
pub fn pcg(sys: &GridSystem, b: &[f64], x: &mut [f64], cfg: &SolverConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let n = sys.len();
    if b.len() != n || x.len() != n {
        return Err(Error::SizeMismatch("pcg vectors do not match grid".into()));
    }
    if !sys.data.iter().any(|&d| d > 0.0) {
        return Err(Error::InvalidParameter("system has no positive data weight".into()));
    }
    let b_norm = dot(b, b).sqrt();
    if b_norm == 0.0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return Ok(SolveReport {
            iterations: 0,
            relative_residual: 0.0,
            converged: true,
        });
    }
    let diag = sys.diagonal();
    let mg = match cfg.preconditioner {
        Preconditioner::Multigrid => Some(Multigrid::new(sys)),
        Preconditioner::Jacobi => None,
    };
    let precond = |r: &[f64], z: &mut [f64]| match &mg {
        Some(mg) => mg.vcycle(0, r, z),
        None => {
            for ((zi, ri), di) in z.iter_mut().zip(r).zip(&diag) {
                *zi = ri / di;
            }
        }
    };

    let mut r = vec![0.0; n];
    sys.apply(x, &mut r);
    for (ri, bi) in r.iter_mut().zip(b) {
        *ri = bi - *ri;
    }
    let mut rel = dot(&r, &r).sqrt() / b_norm;
    if rel < cfg.residual_tol {
        return Ok(SolveReport {
            iterations: 0,
            relative_residual: rel,
            converged: true,
        });
    }
    let mut z = vec![0.0; n];
    precond(&r, &mut z);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=cfg.max_iters {
        sys.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if pap <= 0.0 {
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        rel = dot(&r, &r).sqrt() / b_norm;
        if rel < cfg.residual_tol {
            return Ok(SolveReport {
                iterations: it,
                relative_residual: rel,
                converged: true,
            });
        }
        precond(&r, &mut z);
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    // recompute the true residual for the report
    sys.apply(x, &mut ap);
    let true_rel = b
        .iter()
        .zip(&ap)
        .map(|(bi, ai)| (bi - ai).powi(2))
        .sum::<f64>()
        .sqrt()
        / b_norm;
    Ok(SolveReport {
        iterations: cfg.max_iters,
        relative_residual: true_rel,
        converged: true_rel < cfg.residual_tol,
    })
}
