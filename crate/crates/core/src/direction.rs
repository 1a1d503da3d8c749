//! Perturbation directions of the initial curve and their preimages under the
//! forward map `h(t) = int_{t0}^t K(t, s) h*(s) ds`.
//!
//! All closed-form families are stated in the shifted time `s' = s - t0`:
//!
//! * power law: `h = A s'^(gamma - 1/2)`, `h* = A c s'^(gamma - H - 1)` with
//!   `c = Gamma(gamma + 1/2) / (Gamma(gamma - H) Gamma(H + 1/2))`;
//! * constant: `h = L`, `h* = L c0 s'^(-H - 1/2)` with
//!   `c0 = 1 / (Gamma(H + 1/2) Gamma(1/2 - H))`;
//! * truncated power law: `h = A (delta v s')^(gamma - 1/2)`, whose preimage is
//!   `c0 d/ds' J(s')` with `J` the Abel integral of order `1/2 - H` of `h`.

use statrs::function::beta::beta;
use statrs::function::gamma::gamma;

use crate::error::{invalid, Error, Result};
use crate::grid::{GridFunction, TimeGrid};
use crate::kernel::{pow_diff, KernelKind, KernelSpec};
use crate::special::{rgamma, tanh_sinh};

const QUAD_TOL: f64 = 1e-13;

/// Which space a direction was certified to inhabit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Space {
    /// `h* in L^2`: admissible for every estimator.
    CameronMartin,
    /// `h* in L^2` against the weight `(s - t0)^(2 alpha)` only.
    Weighted { alpha: f64 },
    /// `h in L^2` without an admissible preimage: additive-noise formula only.
    SquareIntegrable,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DirectionKind {
    PreimageGiven(GridFunction),
    PowerLaw {
        gamma: f64,
        amplitude: Vec<f64>,
    },
    Constant {
        level: Vec<f64>,
    },
    TruncatedPowerLaw {
        gamma: f64,
        amplitude: Vec<f64>,
        delta: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DirectionSpec {
    kind: DirectionKind,
    hurst: f64,
    alpha_weight: Option<f64>,
    space: Space,
}

fn c0(hurst: f64) -> f64 {
    rgamma(hurst + 0.5) * rgamma(0.5 - hurst)
}

/// `Gamma(gamma + 1/2) / (Gamma(gamma - H) Gamma(H + 1/2))`; zero at `gamma = H`.
pub fn power_law_preimage_constant(gamma_exp: f64, hurst: f64) -> f64 {
    if gamma_exp == hurst {
        return 0.0;
    }
    gamma(gamma_exp + 0.5) * rgamma_any(gamma_exp - hurst) * rgamma(hurst + 0.5)
}

fn rgamma_any(x: f64) -> f64 {
    if x > 0.0 {
        rgamma(x)
    } else {
        1.0 / gamma(x)
    }
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..0.5).contains(&alpha) {
        return invalid(format!("alpha must lie in [0, 1/2), got {alpha}"));
    }
    Ok(())
}

/// Classifies a direction whose preimage behaves like `s'^q` at `t0`.
fn classify(q: f64, alpha_weight: Option<f64>, describe: &str) -> Result<Space> {
    let alpha = alpha_weight.unwrap_or(0.0);
    if q > -0.5 {
        Ok(Space::CameronMartin)
    } else if alpha > 0.0 && q > -0.5 - alpha {
        Ok(Space::Weighted { alpha })
    } else if alpha_weight.is_some() {
        Err(Error::Inadmissible(format!(
            "{describe}: preimage exponent {q} needs alpha > {}, got {alpha}",
            -0.5 - q
        )))
    } else {
        Ok(Space::SquareIntegrable)
    }
}

impl DirectionSpec {
    /// `h(t) = A (t - t0)^(gamma - 1/2)` against a power-law kernel of exponent `hurst`.
    pub fn power_law(
        gamma_exp: f64,
        amplitude: Vec<f64>,
        hurst: f64,
        alpha_weight: Option<f64>,
    ) -> Result<Self> {
        check_common(&amplitude, hurst, alpha_weight)?;
        if !(gamma_exp > 0.0 && gamma_exp.is_finite()) {
            return Err(Error::Inadmissible(format!(
                "power-law direction needs gamma > 0 to be square integrable, got {gamma_exp}"
            )));
        }
        let space = if gamma_exp > hurst {
            classify(gamma_exp - hurst - 1.0, alpha_weight, "power-law direction")?
        } else if alpha_weight.is_some() {
            return Err(Error::Inadmissible(format!(
                "power-law direction with gamma = {gamma_exp} <= H = {hurst} has no preimage"
            )));
        } else {
            Space::SquareIntegrable
        };
        Ok(Self {
            kind: DirectionKind::PowerLaw {
                gamma: gamma_exp,
                amplitude,
            },
            hurst,
            alpha_weight,
            space,
        })
    }

    /// `h(t) = level`.
    pub fn constant(level: Vec<f64>, hurst: f64, alpha_weight: Option<f64>) -> Result<Self> {
        check_common(&level, hurst, alpha_weight)?;
        let space = if level.iter().all(|&l| l == 0.0) {
            Space::CameronMartin
        } else {
            classify(-hurst - 0.5, alpha_weight, "constant direction")?
        };
        Ok(Self {
            kind: DirectionKind::Constant { level },
            hurst,
            alpha_weight,
            space,
        })
    }

    /// `h(t) = A (delta v (t - t0))^(gamma - 1/2)`.
    pub fn truncated_power_law(
        gamma_exp: f64,
        amplitude: Vec<f64>,
        delta: f64,
        hurst: f64,
        alpha_weight: Option<f64>,
    ) -> Result<Self> {
        check_common(&amplitude, hurst, alpha_weight)?;
        if !(delta > 0.0 && delta.is_finite()) {
            return invalid(format!("truncation delta must be positive, got {delta}"));
        }
        if !(gamma_exp > 0.0 && gamma_exp.is_finite()) {
            return Err(Error::Inadmissible(format!(
                "truncated direction needs gamma > 0, got {gamma_exp}"
            )));
        }
        let space = if amplitude.iter().all(|&a| a == 0.0) {
            Space::CameronMartin
        } else {
            classify(-hurst - 0.5, alpha_weight, "truncated direction")?
        };
        Ok(Self {
            kind: DirectionKind::TruncatedPowerLaw {
                gamma: gamma_exp,
                amplitude,
                delta,
            },
            hurst,
            alpha_weight,
            space,
        })
    }

    /// Direction given through its preimage sampled at the grid nodes.
    ///
    /// Non-finite node values mark singular points and require a weight `alpha`.
    pub fn preimage_given(
        hstar: GridFunction,
        hurst: f64,
        alpha_weight: Option<f64>,
    ) -> Result<Self> {
        if let Some(a) = alpha_weight {
            check_alpha(a)?;
        }
        let n = hstar.grid().steps();
        let singular = (0..=n).any(|j| hstar.is_singular(j));
        let space = match (singular, alpha_weight) {
            (false, _) => Space::CameronMartin,
            (true, Some(alpha)) if alpha > 0.0 => Space::Weighted { alpha },
            _ => {
                return Err(Error::Inadmissible(
                    "singular sampled preimage needs a positive alpha weight".into(),
                ))
            }
        };
        Ok(Self {
            kind: DirectionKind::PreimageGiven(hstar),
            hurst,
            alpha_weight,
            space,
        })
    }

    pub fn kind(&self) -> &DirectionKind {
        &self.kind
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn alpha_weight(&self) -> Option<f64> {
        self.alpha_weight
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            DirectionKind::PreimageGiven(f) => f.dim(),
            DirectionKind::PowerLaw { amplitude, .. }
            | DirectionKind::TruncatedPowerLaw { amplitude, .. } => amplitude.len(),
            DirectionKind::Constant { level } => level.len(),
        }
    }

    /// Whether `h*` lies in `L^2` with weight `(s - t0)^(2 alpha)`.
    pub fn admissible_for(&self, alpha: f64) -> bool {
        match self.space {
            Space::CameronMartin => true,
            Space::Weighted { .. } => match &self.kind {
                DirectionKind::PowerLaw { gamma, .. } => *gamma > 0.5 + self.hurst - alpha,
                DirectionKind::Constant { .. } | DirectionKind::TruncatedPowerLaw { .. } => {
                    alpha > self.hurst
                }
                DirectionKind::PreimageGiven(_) => {
                    self.alpha_weight.is_some_and(|a| alpha >= a)
                }
            },
            Space::SquareIntegrable => false,
        }
    }

    fn amplitude(&self) -> &[f64] {
        match &self.kind {
            DirectionKind::PowerLaw { amplitude, .. }
            | DirectionKind::TruncatedPowerLaw { amplitude, .. } => amplitude,
            DirectionKind::Constant { level } => level,
            DirectionKind::PreimageGiven(_) => &[],
        }
    }

    fn check_kernel(&self, kernel: &KernelSpec) -> Result<()> {
        match kernel.kind {
            KernelKind::PowerLaw { hurst } if (hurst - self.hurst).abs() < 1e-14 => {
                if kernel.scale == 0.0 {
                    return invalid("kernel scale is zero; the forward map is not invertible");
                }
                Ok(())
            }
            KernelKind::Constant { level } if (self.hurst - 0.5).abs() < 1e-14 && level != 0.0 => {
                Ok(())
            }
            _ => invalid(format!(
                "direction was built for a power-law kernel with H = {}, got {:?}",
                self.hurst, kernel.kind
            )),
        }
    }

    fn kernel_scale(kernel: &KernelSpec) -> f64 {
        match kernel.kind {
            KernelKind::Constant { level } => kernel.scale * level,
            _ => kernel.scale,
        }
    }

    /// Scalar profile of `h` at shifted time `s`.
    fn profile(&self, s: f64) -> f64 {
        match &self.kind {
            DirectionKind::PowerLaw { gamma, .. } => s.powf(gamma - 0.5),
            DirectionKind::Constant { .. } => 1.0,
            DirectionKind::TruncatedPowerLaw { gamma, delta, .. } => s.max(*delta).powf(gamma - 0.5),
            DirectionKind::PreimageGiven(_) => f64::NAN,
        }
    }

    /// Integral of the scalar profile of `h` over `[s0, s1]`.
    fn profile_integral(&self, s0: f64, s1: f64) -> f64 {
        match &self.kind {
            DirectionKind::PowerLaw { gamma, .. } => pow_diff(s1, s0, gamma + 0.5) / (gamma + 0.5),
            DirectionKind::Constant { .. } => s1 - s0,
            DirectionKind::TruncatedPowerLaw { gamma, delta, .. } => {
                let p = gamma - 0.5;
                let flat = (s1.min(*delta) - s0).max(0.0) * delta.powf(p);
                let lo = s0.max(*delta);
                let tail = if s1 > lo { pow_diff(s1, lo, p + 1.0) / (p + 1.0) } else { 0.0 };
                flat + tail
            }
            DirectionKind::PreimageGiven(_) => f64::NAN,
        }
    }

    /// `h` at every node. Singular nodes hold `inf`.
    pub fn values(&self, kernel: &KernelSpec, grid: &TimeGrid) -> Result<GridFunction> {
        if let DirectionKind::PreimageGiven(f) = &self.kind {
            return apply_forward(f, kernel, grid);
        }
        let amp = self.amplitude();
        let d = amp.len();
        let mut values = Vec::with_capacity((grid.steps() + 1) * d);
        for t in grid.nodes() {
            let p = self.profile(t - grid.t0());
            values.extend(amp.iter().map(|a| if *a == 0.0 { 0.0 } else { a * p }));
        }
        GridFunction::new(*grid, d, values)
    }

    /// `h(T)`.
    pub fn terminal(&self, kernel: &KernelSpec, grid: &TimeGrid) -> Result<Vec<f64>> {
        let v = self.values(kernel, grid)?;
        Ok(v.at(grid.steps()).to_vec())
    }

    /// Exact cell averages of `h`, cell-major (`n * d` entries).
    pub fn cell_averages(&self, kernel: &KernelSpec, grid: &TimeGrid) -> Result<Vec<f64>> {
        if let DirectionKind::PreimageGiven(_) = &self.kind {
            let v = self.values(kernel, grid)?;
            return Ok(cell_means_from_nodes(&v));
        }
        let amp = self.amplitude();
        let dt = grid.dt();
        let mut out = Vec::with_capacity(grid.steps() * amp.len());
        for j in 0..grid.steps() {
            let s0 = grid.node(j) - grid.t0();
            let s1 = grid.node(j + 1) - grid.t0();
            let m = self.profile_integral(s0, s1) / dt;
            out.extend(amp.iter().map(|a| a * m));
        }
        Ok(out)
    }

    /// Scalar preimage profile at shifted time `s > 0` (kernel scale one).
    fn preimage_profile(&self, s: f64) -> f64 {
        let h = self.hurst;
        match &self.kind {
            DirectionKind::PowerLaw { gamma, .. } => {
                power_law_preimage_constant(*gamma, h) * s.powf(gamma - h - 1.0)
            }
            DirectionKind::Constant { .. } => c0(h) * s.powf(-h - 0.5),
            DirectionKind::TruncatedPowerLaw { gamma, delta, .. } => {
                let p = gamma - 0.5;
                if s <= *delta {
                    c0(h) * delta.powf(p) * s.powf(-h - 0.5)
                } else {
                    power_law_preimage_constant(*gamma, h) * s.powf(gamma - h - 1.0)
                        + c0(h) * truncation_correction_derivative(s, *delta, p, 0.5 - h)
                }
            }
            DirectionKind::PreimageGiven(_) => f64::NAN,
        }
    }

    /// Integral of the scalar preimage profile over `[s0, s1]` (kernel scale one).
    fn preimage_profile_integral(&self, s0: f64, s1: f64) -> f64 {
        let h = self.hurst;
        let a = 0.5 - h;
        match &self.kind {
            DirectionKind::PowerLaw { gamma, .. } => {
                power_law_preimage_constant(*gamma, h) * pow_diff(s1, s0, gamma - h) / (gamma - h)
            }
            DirectionKind::Constant { .. } => c0(h) * pow_diff(s1, s0, a) / a,
            DirectionKind::TruncatedPowerLaw { gamma, delta, .. } => {
                let p = gamma - 0.5;
                let delta = *delta;
                if s1 <= delta {
                    c0(h) * delta.powf(p) * pow_diff(s1, s0, a) / a
                } else if s0 >= delta {
                    let power = power_law_preimage_constant(*gamma, h) * pow_diff(s1, s0, gamma - h)
                        / (gamma - h);
                    power + c0(h) * truncation_correction_increment(s0, s1, delta, p, a)
                } else {
                    c0(h) * (abel_truncated(s1, delta, p, a) - abel_truncated(s0, delta, p, a))
                }
            }
            DirectionKind::PreimageGiven(_) => f64::NAN,
        }
    }

    /// `h*` at every node; `inf` where the preimage is singular.
    pub fn preimage(&self, kernel: &KernelSpec, grid: &TimeGrid) -> Result<GridFunction> {
        if let DirectionKind::PreimageGiven(f) = &self.kind {
            if f.grid() != grid {
                return invalid("sampled preimage lives on a different grid");
            }
            return Ok(f.clone());
        }
        self.check_preimage_exists()?;
        self.check_kernel(kernel)?;
        let scale = Self::kernel_scale(kernel);
        let amp = self.amplitude();
        let mut values = Vec::with_capacity((grid.steps() + 1) * amp.len());
        for t in grid.nodes() {
            let s = t - grid.t0();
            let p = if s > 0.0 { self.preimage_profile(s) } else { f64::INFINITY };
            values.extend(amp.iter().map(|a| if *a == 0.0 { 0.0 } else { a * p / scale }));
        }
        GridFunction::new(*grid, amp.len(), values)
    }

    /// Exact cell averages of `h*`, cell-major (`n * d` entries).
    pub fn preimage_cell_averages(&self, kernel: &KernelSpec, grid: &TimeGrid) -> Result<Vec<f64>> {
        if let DirectionKind::PreimageGiven(f) = &self.kind {
            if f.grid() != grid {
                return invalid("sampled preimage lives on a different grid");
            }
            return Ok(cell_means_from_nodes(f));
        }
        self.check_preimage_exists()?;
        self.check_kernel(kernel)?;
        let scale = Self::kernel_scale(kernel);
        let amp = self.amplitude();
        let dt = grid.dt();
        let mut out = Vec::with_capacity(grid.steps() * amp.len());
        for j in 0..grid.steps() {
            let s0 = grid.node(j) - grid.t0();
            let s1 = grid.node(j + 1) - grid.t0();
            let m = self.preimage_profile_integral(s0, s1) / (dt * scale);
            out.extend(amp.iter().map(|a| a * m));
        }
        Ok(out)
    }

    fn check_preimage_exists(&self) -> Result<()> {
        if let DirectionKind::PowerLaw { gamma, .. } = &self.kind {
            if *gamma <= self.hurst {
                return Err(Error::Inadmissible(format!(
                    "power-law direction with gamma = {gamma} <= H = {} has no preimage",
                    self.hurst
                )));
            }
        }
        Ok(())
    }

    /// `(int (s - t0)^(2 alpha) |h*(s)|^2 ds)^(1/2)`.
    pub fn norm(&self, alpha: f64, kernel: &KernelSpec, grid: &TimeGrid) -> Result<f64> {
        check_alpha(alpha)?;
        let span = grid.horizon();
        let h = self.hurst;
        let divergent = |what: &str| {
            Err(Error::Divergent(format!(
                "{what}: weighted preimage norm diverges at alpha = {alpha}"
            )))
        };
        if let DirectionKind::PreimageGiven(f) = &self.kind {
            return preimage_norm_sampled(f, alpha);
        }
        let amp2: f64 = self.amplitude().iter().map(|a| a * a).sum();
        if amp2 == 0.0 {
            return Ok(0.0);
        }
        self.check_kernel(kernel)?;
        let scale = Self::kernel_scale(kernel);
        let sq = match &self.kind {
            DirectionKind::PowerLaw { gamma, .. } => {
                let e = 2.0 * alpha + 2.0 * (gamma - h - 1.0);
                if !(*gamma > h && e > -1.0) {
                    return divergent("power-law direction");
                }
                power_law_preimage_constant(*gamma, h).powi(2) * span.powf(e + 1.0) / (e + 1.0)
            }
            DirectionKind::Constant { .. } => {
                let e = 2.0 * alpha - 2.0 * h - 1.0;
                if e <= -1.0 {
                    return divergent("constant direction");
                }
                c0(h).powi(2) * span.powf(e + 1.0) / (e + 1.0)
            }
            DirectionKind::TruncatedPowerLaw { gamma, delta, .. } => {
                let e = 2.0 * alpha - 2.0 * h - 1.0;
                if e <= -1.0 {
                    return divergent("truncated direction");
                }
                let p = gamma - 0.5;
                let m = span.min(*delta);
                let head = (c0(h) * delta.powf(p)).powi(2) * m.powf(e + 1.0) / (e + 1.0);
                let tail = if span > *delta {
                    tanh_sinh(
                        |s, _, _| s.powf(2.0 * alpha) * self.preimage_profile(s).powi(2),
                        *delta,
                        span,
                        QUAD_TOL,
                    )
                } else {
                    0.0
                };
                head + tail
            }
            DirectionKind::PreimageGiven(_) => unreachable!(),
        };
        Ok((amp2 * sq).sqrt() / scale.abs())
    }
}

fn check_common(amplitude: &[f64], hurst: f64, alpha_weight: Option<f64>) -> Result<()> {
    if amplitude.is_empty() || amplitude.iter().any(|a| !a.is_finite()) {
        return invalid("direction amplitude must be a non-empty finite vector");
    }
    if !(hurst > 0.0 && hurst < 1.0) {
        return invalid(format!("H must lie in (0, 1), got {hurst}"));
    }
    if let Some(a) = alpha_weight {
        check_alpha(a)?;
    }
    Ok(())
}

/// `delta^p - (delta - u)^p` for `u = delta - r`, accurate at both ends.
fn flat_gap(delta: f64, p: f64, u: f64, r: f64) -> f64 {
    if u < 0.5 * delta {
        -delta.powf(p) * (p * (-u / delta).ln_1p()).exp_m1()
    } else {
        delta.powf(p) - r.powf(p)
    }
}

/// `J(s) = int_0^s (s - r)^(a-1) (delta v r)^p dr`.
fn abel_truncated(s: f64, delta: f64, p: f64, a: f64) -> f64 {
    if s <= delta {
        return delta.powf(p) * s.powf(a) / a;
    }
    let power = s.powf(a + p) * beta(a, p + 1.0);
    let corr = tanh_sinh(
        |_, u, r| (s - delta + u).powf(a - 1.0) * flat_gap(delta, p, u, r),
        0.0,
        delta,
        QUAD_TOL,
    );
    power + corr
}

/// `G(s1) - G(s0)` with `G(s) = int_0^delta (s - r)^(a-1) (delta^p - r^p) dr`, `delta <= s0 < s1`.
fn truncation_correction_increment(s0: f64, s1: f64, delta: f64, p: f64, a: f64) -> f64 {
    tanh_sinh(
        |_, u, r| pow_diff(s1 - delta + u, s0 - delta + u, a - 1.0) * flat_gap(delta, p, u, r),
        0.0,
        delta,
        QUAD_TOL,
    )
}

/// `G'(s)` for `s > delta`.
fn truncation_correction_derivative(s: f64, delta: f64, p: f64, a: f64) -> f64 {
    (a - 1.0)
        * tanh_sinh(
            |_, u, r| (s - delta + u).powf(a - 2.0) * flat_gap(delta, p, u, r),
            0.0,
            delta,
            QUAD_TOL,
        )
}

/// Cell means of a sampled function: trapezoid on regular cells; on a cell
/// whose left node is singular, the power law through the next two nodes.
pub fn cell_means_from_nodes(f: &GridFunction) -> Vec<f64> {
    let n = f.grid().steps();
    let d = f.dim();
    let mut out = Vec::with_capacity(n * d);
    for j in 0..n {
        for k in 0..d {
            let left = f.at(j)[k];
            let right = f.at(j + 1)[k];
            let m = if left.is_finite() && right.is_finite() {
                0.5 * (left + right)
            } else if !left.is_finite() && right.is_finite() {
                graded_left_mean(f, j, k)
            } else if left.is_finite() {
                left
            } else {
                0.0
            };
            out.push(m);
        }
    }
    out
}

fn graded_left_mean(f: &GridFunction, j: usize, k: usize) -> f64 {
    let n = f.grid().steps();
    let dt = f.grid().dt();
    let f1 = f.at(j + 1)[k];
    if j + 2 > n {
        return f1;
    }
    let f2 = f.at(j + 2)[k];
    if !(f2.is_finite() && f1 != 0.0 && f2 / f1 > 0.0) {
        return f1;
    }
    // Distances from the singular node: dt and 2 dt.
    let s1 = dt;
    let s2 = 2.0 * dt;
    let q = (f2 / f1).ln() / (s2 / s1).ln();
    if q > -1.0 {
        f1 / (q + 1.0)
    } else {
        f1
    }
}

fn preimage_norm_sampled(f: &GridFunction, alpha: f64) -> Result<f64> {
    let grid = f.grid();
    let means = cell_means_from_nodes(f);
    let d = f.dim();
    let t0 = grid.t0();
    let mut total = 0.0;
    for j in 0..grid.steps() {
        let s0 = grid.node(j) - t0;
        let s1 = grid.node(j + 1) - t0;
        let w = pow_diff(s1, s0, 2.0 * alpha + 1.0) / (2.0 * alpha + 1.0);
        let sq: f64 = means[j * d..(j + 1) * d].iter().map(|m| m * m).sum();
        total += w * sq;
    }
    if !total.is_finite() {
        return Err(Error::Divergent("sampled preimage norm is not finite".into()));
    }
    Ok(total.sqrt())
}

/// Closed-form (or sampled) preimage of `dir` on the grid.
pub fn preimage(dir: &DirectionSpec, kernel: &KernelSpec, grid: &TimeGrid) -> Result<GridFunction> {
    dir.preimage(kernel, grid)
}

/// `h(t_j) = int_{t0}^{t_j} K(t_j, s) h*(s) ds` by product integration against
/// the cell means of `h*`.
pub fn apply_forward(
    hstar: &GridFunction,
    kernel: &KernelSpec,
    grid: &TimeGrid,
) -> Result<GridFunction> {
    if hstar.grid() != grid {
        return invalid("preimage lives on a different grid");
    }
    let means = cell_means_from_nodes(hstar);
    apply_forward_cells(&means, hstar.dim(), kernel, grid)
}

/// Forward map of a function that is constant on each cell (`n * d` means).
pub fn apply_forward_cells(
    means: &[f64],
    dim: usize,
    kernel: &KernelSpec,
    grid: &TimeGrid,
) -> Result<GridFunction> {
    let n = grid.steps();
    if means.len() != n * dim {
        return invalid(format!("expected {} cell means, got {}", n * dim, means.len()));
    }
    let w = kernel.lag_weights(grid);
    let dt = grid.dt();
    let mut values = vec![0.0; (n + 1) * dim];
    for j in 1..=n {
        for i in 0..j {
            let wi = w[j - i] * dt;
            for k in 0..dim {
                values[j * dim + k] += wi * means[i * dim + k];
            }
        }
    }
    GridFunction::new(*grid, dim, values)
}

/// Weighted preimage norm of `dir`.
pub fn direction_norm(
    dir: &DirectionSpec,
    alpha: f64,
    kernel: &KernelSpec,
    grid: &TimeGrid,
) -> Result<f64> {
    dir.norm(alpha, kernel, grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid(n: usize) -> TimeGrid {
        TimeGrid::unit(n).unwrap()
    }

    #[test]
    fn constant_preimage_constant() {
        // 1 / (Gamma(0.6) Gamma(0.4)) = sin(0.4 pi) / pi
        let expected = (0.4 * std::f64::consts::PI).sin() / std::f64::consts::PI;
        assert_relative_eq!(c0(0.1), expected, max_relative = 1e-14);
        let dir = DirectionSpec::constant(vec![1.0], 0.1, Some(0.3)).unwrap();
        let k = KernelSpec::power_law(0.1).unwrap();
        let g = grid(4);
        let hs = dir.preimage(&k, &g).unwrap();
        assert!(hs.is_singular(0));
        assert_relative_eq!(hs.scalar_at(2), expected * 0.5f64.powf(-0.6), max_relative = 1e-14);
    }

    #[test]
    fn constant_direction_needs_alpha_above_h() {
        assert!(DirectionSpec::constant(vec![1.0], 0.1, Some(0.05)).is_err());
        assert!(matches!(
            DirectionSpec::constant(vec![1.0], 0.1, Some(0.3)).unwrap().space(),
            Space::Weighted { .. }
        ));
        let plain = DirectionSpec::constant(vec![1.0], 0.1, None).unwrap();
        assert_eq!(plain.space(), Space::SquareIntegrable);
    }

    #[test]
    fn power_law_space_classification() {
        let h = 0.25;
        let d = DirectionSpec::power_law(1.0, vec![1.0], h, None).unwrap();
        assert_eq!(d.space(), Space::CameronMartin);
        let d = DirectionSpec::power_law(0.6, vec![1.0], h, Some(0.2)).unwrap();
        assert_eq!(d.space(), Space::Weighted { alpha: 0.2 });
        assert!(DirectionSpec::power_law(0.5, vec![1.0], h, Some(0.25)).is_err());
        let kernel_dir = DirectionSpec::power_law(h, vec![1.0], h, None).unwrap();
        assert_eq!(kernel_dir.space(), Space::SquareIntegrable);
    }

    #[test]
    fn preimage_constant_matches_beta_integral() {
        // Forward of s^q is B(q + 1, H + 1/2) t^(q + H + 1/2).
        for &(g, h) in &[(1.0, 0.25), (0.7, 0.1), (1.3, 0.4)] {
            let c = power_law_preimage_constant(g, h);
            let q = g - h - 1.0;
            assert_relative_eq!(c * beta(q + 1.0, h + 0.5), 1.0, max_relative = 1e-13);
        }
    }

    #[test]
    fn constant_preimage_when_gamma_is_h_plus_one() {
        let h = 0.3;
        let dir = DirectionSpec::power_law(h + 1.0, vec![2.0], h, None).unwrap();
        let k = KernelSpec::power_law(h).unwrap();
        let g = grid(8);
        let hs = dir.preimage(&k, &g).unwrap();
        for j in 1..=8 {
            assert_relative_eq!(hs.scalar_at(j), 2.0 * (h + 0.5), max_relative = 1e-13);
        }
    }

    #[test]
    fn forward_of_unit_preimage_under_flat_kernel() {
        let g = TimeGrid::new(0.5, 1.5, 10).unwrap();
        let k = KernelSpec::power_law(0.5).unwrap();
        let ones = GridFunction::from_fn(g, |_| 1.0);
        let h = apply_forward(&ones, &k, &g).unwrap();
        for (j, t) in g.nodes().into_iter().enumerate() {
            assert_relative_eq!(h.scalar_at(j), t - 0.5, epsilon = 1e-14);
        }
        let zero = GridFunction::zeros(g, 1);
        let h = apply_forward(&zero, &k, &g).unwrap();
        assert!(h.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn preimage_given_is_identity() {
        let g = grid(6);
        let f = GridFunction::from_fn(g, |t| t * t - 0.3);
        let dir = DirectionSpec::preimage_given(f.clone(), 0.2, None).unwrap();
        let k = KernelSpec::power_law(0.2).unwrap();
        assert_eq!(dir.preimage(&k, &g).unwrap(), f);
    }

    #[test]
    fn norm_examples() {
        let g = grid(64);
        let k = KernelSpec::power_law(0.1).unwrap();
        let dir = DirectionSpec::constant(vec![1.0], 0.1, Some(0.3)).unwrap();
        let c = c0(0.1);
        let expected = (c * c / (2.0 * (0.3 - 0.1))).sqrt();
        assert_relative_eq!(dir.norm(0.3, &k, &g).unwrap(), expected, max_relative = 1e-13);
        assert_relative_eq!(expected, 0.478_65, max_relative = 1e-4);

        let zero = DirectionSpec::preimage_given(GridFunction::zeros(g, 1), 0.1, None).unwrap();
        assert_eq!(zero.norm(0.0, &k, &g).unwrap(), 0.0);

        let boundary = DirectionSpec::power_law(0.6, vec![1.0], 0.1, None).unwrap();
        assert!(matches!(boundary.norm(0.0, &k, &g), Err(Error::Divergent(_))));
    }

    #[test]
    fn norm_matches_brute_force_quadrature() {
        let g = grid(32);
        for (dir, alpha) in [
            (DirectionSpec::power_law(0.9, vec![1.5], 0.2, None).unwrap(), 0.0),
            (DirectionSpec::power_law(0.55, vec![1.0], 0.2, Some(0.3)).unwrap(), 0.3),
            (DirectionSpec::constant(vec![0.7], 0.2, Some(0.35)).unwrap(), 0.35),
        ] {
            let k = KernelSpec::power_law(0.2).unwrap();
            let closed = dir.norm(alpha, &k, &g).unwrap();
            let amp: f64 = dir.amplitude()[0];
            let brute = tanh_sinh(
                |s, _, _| s.powf(2.0 * alpha) * (amp * dir.preimage_profile(s)).powi(2),
                0.0,
                1.0,
                1e-12,
            )
            .sqrt();
            assert_relative_eq!(closed, brute, max_relative = 1e-3);
        }
    }

    #[test]
    fn truncated_cell_averages_integrate_node_values() {
        let h = 0.15;
        let dir = DirectionSpec::truncated_power_law(0.8, vec![1.0], 0.3, h, Some(0.3)).unwrap();
        let k = KernelSpec::power_law(h).unwrap();
        let g = grid(10);
        let cells = dir.preimage_cell_averages(&k, &g).unwrap();
        for (j, &m) in cells.iter().enumerate() {
            let s0 = g.node(j);
            let s1 = g.node(j + 1);
            let pieces: Vec<(f64, f64)> = if s0 < 0.3 && s1 > 0.3 {
                vec![(s0, 0.3), (0.3, s1)]
            } else {
                vec![(s0, s1)]
            };
            let direct: f64 = pieces
                .iter()
                .map(|&(a, b)| tanh_sinh(|s, _, _| dir.preimage_profile(s), a, b, 1e-12))
                .sum::<f64>()
                / g.dt();
            assert_relative_eq!(m, direct, max_relative = 1e-8);
        }
    }

    #[test]
    fn truncated_direction_reduces_to_constant_beyond_horizon() {
        let h = 0.2;
        let k = KernelSpec::power_law(h).unwrap();
        let g = grid(16);
        let trunc = DirectionSpec::truncated_power_law(0.9, vec![1.0], 2.0, h, Some(0.3)).unwrap();
        let level = 2f64.powf(0.4);
        let cons = DirectionSpec::constant(vec![level], h, Some(0.3)).unwrap();
        let a = trunc.preimage_cell_averages(&k, &g).unwrap();
        let b = cons.preimage_cell_averages(&k, &g).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert_relative_eq!(x, y, max_relative = 1e-13);
        }
    }
}
