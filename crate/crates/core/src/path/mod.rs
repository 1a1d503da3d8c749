//! Deterministic-seed path generation with the left-point Euler-Volterra scheme.
//!
//! `X_j = x_j + sum_{i<j} Kb(j-i) b(X_i) dt + sum_{i<j} Ks(j-i) sigma(X_i) dW_i`
//! where `K(l)` is the cell average of the kernel over the cell at lag `l`.

pub mod dump;
pub mod rough_vol;
pub mod tangent;

use rayon::prelude::*;

use crate::error::{invalid, Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::model::{CoefficientSet, Diffusion, SveModel};
use crate::rng::{Purpose, SeedSpec, Stream};

pub use rough_vol::{simulate_rough_vol, simulate_rough_vol_with_curve};
pub use tangent::{simulate_tangent, TangentBatch};

/// States and driving increments of a block of paths with consecutive indices.
#[derive(Debug, Clone, PartialEq)]
pub struct PathBatch {
    pub(crate) grid: TimeGrid,
    pub(crate) first_path: usize,
    pub(crate) n_paths: usize,
    pub(crate) d: usize,
    pub(crate) m: usize,
    pub(crate) x: Vec<f64>,
    pub(crate) dw: Vec<f64>,
    pub(crate) fingerprint: u64,
    pub(crate) seed: SeedSpec,
}

impl PathBatch {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    /// Global index of the first path in this block.
    pub fn first_path(&self) -> usize {
        self.first_path
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn state_dim(&self) -> usize {
        self.d
    }

    pub fn noise_dim(&self) -> usize {
        self.m
    }

    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    pub fn seed(&self) -> SeedSpec {
        self.seed
    }

    /// All states, path-major then node-major.
    pub fn states(&self) -> &[f64] {
        &self.x
    }

    /// All increments, path-major then cell-major.
    pub fn increments_all(&self) -> &[f64] {
        &self.dw
    }

    /// States of path `p` (local index), `(n + 1) * d` values.
    pub fn path(&self, p: usize) -> &[f64] {
        let len = (self.grid.steps() + 1) * self.d;
        &self.x[p * len..(p + 1) * len]
    }

    pub fn state(&self, p: usize, j: usize) -> &[f64] {
        &self.path(p)[j * self.d..(j + 1) * self.d]
    }

    pub fn terminal(&self, p: usize) -> &[f64] {
        self.state(p, self.grid.steps())
    }

    /// Increments of path `p`, `n * m` values.
    pub fn increments(&self, p: usize) -> &[f64] {
        let len = self.grid.steps() * self.m;
        &self.dw[p * len..(p + 1) * len]
    }

    pub fn increment(&self, p: usize, j: usize) -> &[f64] {
        &self.increments(p)[j * self.m..(j + 1) * self.m]
    }

    /// Coordinate `c` of path `p` at every node.
    pub fn coordinate_path(&self, p: usize, c: usize) -> Vec<f64> {
        self.path(p).iter().skip(c).step_by(self.d).copied().collect()
    }

    /// Sample mean and variance of the first coordinate at `T`.
    pub fn terminal_moments(&self) -> (f64, f64) {
        let xs: Vec<f64> = (0..self.n_paths).map(|p| self.terminal(p)[0]).collect();
        mean_var(&xs)
    }
}

pub(crate) fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 {
        xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var)
}

/// Dot product with four partial sums, evaluated in a fixed order.
#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut s = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        let k = 4 * c;
        s[0] += a[k] * b[k];
        s[1] += a[k + 1] * b[k + 1];
        s[2] += a[k + 2] * b[k + 2];
        s[3] += a[k + 3] * b[k + 3];
    }
    let mut tail = 0.0;
    for k in 4 * chunks..n {
        tail += a[k] * b[k];
    }
    (s[0] + s[1]) + (s[2] + s[3]) + tail
}

/// Lag weights of both kernels, stored reversed so that
/// `sum_{i<j} K(j-i) c_i = dot(rev[n-j..n], c[..j])`.
#[derive(Debug, Clone)]
pub(crate) struct Scheme {
    pub n: usize,
    pub dt: f64,
    pub kb: Vec<f64>,
    pub ks: Vec<f64>,
    pub kb_rev: Vec<f64>,
    pub ks_rev: Vec<f64>,
    pub merged: bool,
}

impl Scheme {
    pub fn new(model: &SveModel, grid: &TimeGrid) -> Self {
        let kb = model.kernel_b.lag_weights(grid);
        let ks = model.kernel_sigma.lag_weights(grid);
        let n = grid.steps();
        let rev = |w: &[f64]| (0..=n).map(|i| w[n - i]).collect::<Vec<f64>>();
        Self {
            n,
            dt: grid.dt(),
            kb_rev: rev(&kb),
            ks_rev: rev(&ks),
            merged: kb == ks,
            kb,
            ks,
        }
    }

    /// `sum_{i<len} K(len - i) c_i` for a reversed weight table.
    #[inline]
    pub fn conv(&self, rev: &[f64], c: &[f64], len: usize) -> f64 {
        dot(&rev[self.n - len..self.n], &c[..len])
    }
}

/// Scratch space for one path: drift and diffusion contributions per component.
pub(crate) struct Work {
    pub cb: Vec<f64>,
    pub cs: Vec<f64>,
    pub tmp_b: Vec<f64>,
    pub tmp_s: Vec<f64>,
}

impl Work {
    pub fn new(n: usize, d: usize) -> Self {
        Self {
            cb: vec![0.0; n * d],
            cs: vec![0.0; n * d],
            tmp_b: vec![0.0; d],
            tmp_s: vec![0.0; d],
        }
    }
}

/// Runs the scheme over `steps` cells from a base curve.
///
/// `base` holds `(steps + 1) * d` values, `dw` holds `steps * m` increments and
/// `out` receives `(steps + 1) * d` states. Contributions are stored
/// component-major in `work` (`cb[c * n + i]`). Returns the offending step on a
/// non-finite state.
pub(crate) fn run_scheme(
    coeffs: &CoefficientSet,
    scheme: &Scheme,
    steps: usize,
    base: &[f64],
    dw: &[f64],
    out: &mut [f64],
    work: &mut Work,
) -> std::result::Result<(), usize> {
    let d = coeffs.dim();
    let m = coeffs.noise_dim();
    let n = scheme.n;
    let dt = scheme.dt;
    for j in 0..=steps {
        for c in 0..d {
            let mut v = base[j * d + c];
            if j > 0 {
                let cb = &work.cb[c * n..c * n + j];
                let cs = &work.cs[c * n..c * n + j];
                if scheme.merged {
                    v += scheme.conv(&scheme.ks_rev, cs, j);
                } else {
                    v += scheme.conv(&scheme.kb_rev, cb, j) + scheme.conv(&scheme.ks_rev, cs, j);
                }
            }
            if !v.is_finite() {
                return Err(j);
            }
            out[j * d + c] = v;
        }
        if j == steps {
            break;
        }
        let x = &out[j * d..(j + 1) * d];
        coeffs.drift(x, &mut work.tmp_b);
        coeffs.diffusion_apply(x, &dw[j * m..(j + 1) * m], &mut work.tmp_s);
        for c in 0..d {
            let b = work.tmp_b[c] * dt;
            if scheme.merged {
                work.cs[c * n + j] = b + work.tmp_s[c];
            } else {
                work.cb[c * n + j] = b;
                work.cs[c * n + j] = work.tmp_s[c];
            }
        }
    }
    Ok(())
}

/// Scratch space for [`run_scheme_lanes`].
pub(crate) struct LaneWork {
    lanes: usize,
    cb: Vec<f64>,
    cs: Vec<f64>,
    x: Vec<f64>,
    v: Vec<f64>,
    xl: Vec<f64>,
    dwl: Vec<f64>,
    tb: Vec<f64>,
    ts: Vec<f64>,
    bl: Vec<f64>,
    sl: Vec<f64>,
}

impl LaneWork {
    pub fn new(n: usize, d: usize, m: usize, lanes: usize) -> Self {
        Self {
            lanes,
            cb: vec![0.0; n * d * lanes],
            cs: vec![0.0; n * d * lanes],
            x: vec![0.0; d * lanes],
            v: vec![0.0; lanes],
            xl: vec![0.0; d],
            dwl: vec![0.0; m],
            tb: vec![0.0; d],
            ts: vec![0.0; d],
            bl: vec![0.0; lanes],
            sl: vec![0.0; lanes],
        }
    }
}

/// Lanes per register block in [`run_scheme_lanes`].
const BLOCK: usize = 8;

/// [`run_scheme`] for `lanes` independent paths sharing one base curve.
///
/// `dw` is lane-innermost (`dw[(j * m + q) * lanes + r]`); the terminal state
/// of lane `r`, component `c` is written to `terminal[c * lanes + r]`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn run_scheme_lanes(
    coeffs: &CoefficientSet,
    scheme: &Scheme,
    steps: usize,
    base: &[f64],
    dw: &[f64],
    terminal: &mut [f64],
    work: &mut LaneWork,
) -> std::result::Result<(), usize> {
    #[cfg(target_arch = "x86_64")]
    if std::arch::is_x86_feature_detected!("avx") {
        // SAFETY: the required CPU feature was detected at runtime.
        return unsafe { run_scheme_lanes_avx(coeffs, scheme, steps, base, dw, terminal, work) };
    }
    lanes_kernel(coeffs, scheme, steps, base, dw, terminal, work)
}

/// Wider registers for the lane loops; no FMA, so results match the portable build.
#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx")]
#[allow(clippy::too_many_arguments)]
unsafe fn run_scheme_lanes_avx(
    coeffs: &CoefficientSet,
    scheme: &Scheme,
    steps: usize,
    base: &[f64],
    dw: &[f64],
    terminal: &mut [f64],
    work: &mut LaneWork,
) -> std::result::Result<(), usize> {
    lanes_kernel(coeffs, scheme, steps, base, dw, terminal, work)
}

#[inline(always)]
#[allow(clippy::too_many_arguments)]
fn lanes_kernel(
    coeffs: &CoefficientSet,
    scheme: &Scheme,
    steps: usize,
    base: &[f64],
    dw: &[f64],
    terminal: &mut [f64],
    work: &mut LaneWork,
) -> std::result::Result<(), usize> {
    let d = coeffs.dim();
    let m = coeffs.noise_dim();
    let n = scheme.n;
    let dt = scheme.dt;
    let l = work.lanes;
    for j in 0..=steps {
        for c in 0..d {
            let v = &mut work.v;
            v.fill(base[j * d + c]);
            let off = n - j;
            // Blocks of lanes accumulate in registers over the whole history;
            // the per-lane summation order is that of the scalar scheme.
            let mut start = 0;
            while start < l {
                let width = BLOCK.min(l - start);
                if width == BLOCK {
                    let mut acc = [0.0; BLOCK];
                    acc.copy_from_slice(&v[start..start + BLOCK]);
                    let ws = &scheme.ks_rev[off..off + j];
                    let cs = &work.cs[c * n * l..(c * n + j) * l];
                    if scheme.merged {
                        for (w, row) in ws.iter().zip(cs.chunks_exact(l)) {
                            let row: &[f64; BLOCK] = row[start..start + BLOCK].try_into().unwrap();
                            for (a, x) in acc.iter_mut().zip(row) {
                                *a += w * x;
                            }
                        }
                    } else {
                        let wb = &scheme.kb_rev[off..off + j];
                        let cb = &work.cb[c * n * l..(c * n + j) * l];
                        for (((w, u), row), rowb) in ws.iter().zip(wb).zip(cs.chunks_exact(l)).zip(cb.chunks_exact(l)) {
                            let row: &[f64; BLOCK] = row[start..start + BLOCK].try_into().unwrap();
                            let rowb: &[f64; BLOCK] = rowb[start..start + BLOCK].try_into().unwrap();
                            for ((a, x), y) in acc.iter_mut().zip(row).zip(rowb) {
                                *a += w * x;
                                *a += u * y;
                            }
                        }
                    }
                    v[start..start + BLOCK].copy_from_slice(&acc);
                } else {
                    for i in 0..j {
                        let row = (c * n + i) * l + start;
                        let ws = scheme.ks_rev[off + i];
                        for t in 0..width {
                            v[start + t] += ws * work.cs[row + t];
                            if !scheme.merged {
                                v[start + t] += scheme.kb_rev[off + i] * work.cb[row + t];
                            }
                        }
                    }
                }
                start += width;
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(j);
            }
            work.x[c * l..(c + 1) * l].copy_from_slice(v);
        }
        if j == steps {
            break;
        }
        if let Diffusion::Diagonal { maps } = coeffs.diffusion() {
            for c in 0..d {
                let xs = &work.x[c * l..(c + 1) * l];
                coeffs.drift_maps()[c].eval_slice(xs, &mut work.bl);
                maps[c].eval_slice(xs, &mut work.sl);
                let dwc = &dw[(j * m + c) * l..(j * m + c + 1) * l];
                let row = (c * n + j) * l;
                for r in 0..l {
                    let b = work.bl[r] * dt;
                    let s = work.sl[r] * dwc[r];
                    if scheme.merged {
                        work.cs[row + r] = b + s;
                    } else {
                        work.cb[row + r] = b;
                        work.cs[row + r] = s;
                    }
                }
            }
            continue;
        }
        for r in 0..l {
            for c in 0..d {
                work.xl[c] = work.x[c * l + r];
            }
            for q in 0..m {
                work.dwl[q] = dw[(j * m + q) * l + r];
            }
            coeffs.drift(&work.xl, &mut work.tb);
            coeffs.diffusion_apply(&work.xl, &work.dwl, &mut work.ts);
            for c in 0..d {
                let b = work.tb[c] * dt;
                let idx = (c * n + j) * l + r;
                if scheme.merged {
                    work.cs[idx] = b + work.ts[c];
                } else {
                    work.cb[idx] = b;
                    work.cs[idx] = work.ts[c];
                }
            }
        }
    }
    terminal[..d * l].copy_from_slice(&work.x[..d * l]);
    Ok(())
}

pub(crate) fn fill_increments(stream: &mut Stream, dt: f64, out: &mut [f64]) {
    let s = dt.sqrt();
    stream.fill_normal(out);
    for v in out {
        *v *= s;
    }
}

/// Simulates paths `0..n_paths` from the model's initial curve.
pub fn simulate(model: &SveModel, grid: &TimeGrid, n_paths: usize, seed: SeedSpec) -> Result<PathBatch> {
    simulate_range(model, grid, 0, n_paths, seed)
}

/// Simulates paths `first..first + count`; path `p` always reads stream `("paths", p, 0)`.
pub fn simulate_range(
    model: &SveModel,
    grid: &TimeGrid,
    first: usize,
    count: usize,
    seed: SeedSpec,
) -> Result<PathBatch> {
    let curve = model.initial.on_grid(grid);
    simulate_with_curve(model, &curve, first, count, seed)
}

/// As [`simulate_range`] with an explicit initial curve; the increments do not
/// depend on the curve, which couples bumped runs.
pub fn simulate_with_curve(
    model: &SveModel,
    curve: &GridFunction,
    first: usize,
    count: usize,
    seed: SeedSpec,
) -> Result<PathBatch> {
    model.validate()?;
    let grid = *curve.grid();
    let d = model.dim();
    let m = model.noise_dim();
    if curve.dim() != d {
        return invalid(format!("initial curve has dimension {}, model has {d}", curve.dim()));
    }
    if count == 0 {
        return invalid("a batch needs at least one path");
    }
    let n = grid.steps();
    let scheme = Scheme::new(model, &grid);
    let mut x = vec![0.0; count * (n + 1) * d];
    let mut dw = vec![0.0; count * n * m];
    let failures: Vec<Option<(usize, usize)>> = x
        .par_chunks_mut((n + 1) * d)
        .zip(dw.par_chunks_mut(n * m))
        .enumerate()
        .map_init(
            || Work::new(n, d),
            |work, (p, (xp, dwp))| {
                let global = first + p;
                let mut stream = seed.stream(Purpose::Paths, global as u64, 0);
                fill_increments(&mut stream, grid.dt(), dwp);
                run_scheme(&model.coeffs, &scheme, n, curve.values(), dwp, xp, work)
                    .err()
                    .map(|step| (global, step))
            },
        )
        .collect();
    if let Some((path, step)) = failures.into_iter().flatten().next() {
        return Err(Error::NonFinite { path, step });
    }
    Ok(PathBatch {
        grid,
        first_path: first,
        n_paths: count,
        d,
        m,
        x,
        dw,
        fingerprint: crate::model::fingerprint_of(model),
        seed,
    })
}

/// The `F_{t_k}`-measurable curve `x~_tau` for `tau` in `t_k..=T`, node-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedCurve {
    pub start: usize,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl ShiftedCurve {
    pub fn at(&self, j: usize) -> &[f64] {
        let i = j - self.start;
        &self.values[i * self.dim..(i + 1) * self.dim]
    }
}

/// `x~_tau = x(tau) + sum_{i<k} Kb(tau; cell i) b(X_i) dt + Ks(tau; cell i) sigma(X_i) dW_i`
/// for local path `p` of `parent`.
pub fn shifted_curve(parent: &PathBatch, model: &SveModel, p: usize, k: usize) -> Result<ShiftedCurve> {
    let grid = parent.grid;
    let n = grid.steps();
    if k > n || p >= parent.n_paths {
        return invalid(format!("restart node {k} or path {p} out of range"));
    }
    let d = parent.d;
    let dt = grid.dt();
    let curve = model.initial.on_grid(&grid);
    let scheme = Scheme::new(model, &grid);
    let mut tb = vec![0.0; d];
    let mut ts = vec![0.0; d];
    let mut values = Vec::with_capacity((n - k + 1) * d);
    let contributions: Vec<(Vec<f64>, Vec<f64>)> = (0..k)
        .map(|i| {
            let x = parent.state(p, i);
            model.coeffs.drift(x, &mut tb);
            model.coeffs.diffusion_apply(x, parent.increment(p, i), &mut ts);
            (tb.iter().map(|b| b * dt).collect(), ts.clone())
        })
        .collect();
    for j in k..=n {
        for c in 0..d {
            let mut v = curve.at(j)[c];
            for (i, (b, s)) in contributions.iter().enumerate() {
                v += scheme.kb[j - i] * b[c] + scheme.ks[j - i] * s[c];
            }
            values.push(v);
        }
    }
    Ok(ShiftedCurve {
        start: k,
        dim: d,
        values,
    })
}

/// Incrementally updated shifted curves along one parent path: after
/// `advance(k)` the buffer holds `x~^(k+1)` on every node.
pub(crate) struct ShiftedTracker<'a> {
    scheme: &'a Scheme,
    coeffs: &'a CoefficientSet,
    d: usize,
    pub base: Vec<f64>,
    tb: Vec<f64>,
    ts: Vec<f64>,
}

impl<'a> ShiftedTracker<'a> {
    pub fn new(scheme: &'a Scheme, coeffs: &'a CoefficientSet, curve: &[f64]) -> Self {
        let d = coeffs.dim();
        Self {
            scheme,
            coeffs,
            d,
            base: curve.to_vec(),
            tb: vec![0.0; d],
            ts: vec![0.0; d],
        }
    }

    /// Adds the contribution of cell `k` (parent state `x_k`, increment `dw_k`)
    /// to every later node.
    pub fn advance(&mut self, k: usize, x: &[f64], dw: &[f64]) {
        let (n, d, dt) = (self.scheme.n, self.d, self.scheme.dt);
        self.coeffs.drift(x, &mut self.tb);
        self.coeffs.diffusion_apply(x, dw, &mut self.ts);
        for j in k + 1..=n {
            let (wb, ws) = (self.scheme.kb[j - k], self.scheme.ks[j - k]);
            for c in 0..d {
                self.base[j * d + c] += wb * self.tb[c] * dt + ws * self.ts[c];
            }
        }
    }

    /// The current curve from node `k` on.
    pub fn curve_from(&self, k: usize) -> &[f64] {
        &self.base[k * self.d..]
    }
}
