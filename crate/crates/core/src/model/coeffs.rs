//! Closed catalog of scalar maps and the drift/diffusion coefficient set built
//! from them. Coefficients are time-homogeneous and act componentwise on the
//! state, except for a constant diffusion matrix.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::rng::{Purpose, SeedSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ScalarMap {
    /// `value`
    Const { value: f64 },
    /// `intercept + slope x`
    Affine { intercept: f64, slope: f64 },
    /// `amplitude tanh(rate x)`
    Tanh { amplitude: f64, rate: f64 },
    /// `amplitude sin(frequency x)`
    Sin { amplitude: f64, frequency: f64 },
    /// Sum of the terms.
    Sum { terms: Vec<ScalarMap> },
}

impl ScalarMap {
    pub fn constant(value: f64) -> Self {
        ScalarMap::Const { value }
    }

    pub fn eval(&self, x: f64) -> f64 {
        match self {
            ScalarMap::Const { value } => *value,
            ScalarMap::Affine { intercept, slope } => intercept + slope * x,
            ScalarMap::Tanh { amplitude, rate } => amplitude * (rate * x).tanh(),
            ScalarMap::Sin {
                amplitude,
                frequency,
            } => amplitude * (frequency * x).sin(),
            ScalarMap::Sum { terms } => terms.iter().map(|t| t.eval(x)).sum(),
        }
    }

    /// [`ScalarMap::eval`] over a slice.
    pub fn eval_slice(&self, xs: &[f64], out: &mut [f64]) {
        match self {
            ScalarMap::Const { value } => out.fill(*value),
            ScalarMap::Affine { intercept, slope } => {
                for (o, x) in out.iter_mut().zip(xs) {
                    *o = intercept + slope * x;
                }
            }
            ScalarMap::Tanh { amplitude, rate } => {
                for (o, x) in out.iter_mut().zip(xs) {
                    *o = amplitude * (rate * x).tanh();
                }
            }
            ScalarMap::Sin {
                amplitude,
                frequency,
            } => {
                for (o, x) in out.iter_mut().zip(xs) {
                    *o = amplitude * (frequency * x).sin();
                }
            }
            ScalarMap::Sum { terms } => {
                // Terms are added in order, as in `eval`.
                const CHUNK: usize = 16;
                let mut tmp = [0.0; CHUNK];
                for (xc, oc) in xs.chunks(CHUNK).zip(out.chunks_mut(CHUNK)) {
                    oc.fill(-0.0);
                    for t in terms {
                        let tc = &mut tmp[..xc.len()];
                        t.eval_slice(xc, tc);
                        for (o, v) in oc.iter_mut().zip(tc.iter()) {
                            *o += v;
                        }
                    }
                }
            }
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match self {
            ScalarMap::Const { .. } => 0.0,
            ScalarMap::Affine { slope, .. } => *slope,
            ScalarMap::Tanh { amplitude, rate } => {
                let th = (rate * x).tanh();
                amplitude * rate * (1.0 - th * th)
            }
            ScalarMap::Sin {
                amplitude,
                frequency,
            } => amplitude * frequency * (frequency * x).cos(),
            ScalarMap::Sum { terms } => terms.iter().map(|t| t.derivative(x)).sum(),
        }
    }

    /// `sup |f|`, if finite.
    pub fn sup_abs(&self) -> Option<f64> {
        match self {
            ScalarMap::Const { value } => Some(value.abs()),
            ScalarMap::Affine { intercept, slope } => (*slope == 0.0).then(|| intercept.abs()),
            ScalarMap::Tanh { amplitude, .. } => Some(amplitude.abs()),
            ScalarMap::Sin { amplitude, .. } => Some(amplitude.abs()),
            ScalarMap::Sum { terms } => terms.iter().map(|t| t.sup_abs()).sum(),
        }
    }

    /// `sup |f'|`.
    pub fn sup_abs_derivative(&self) -> f64 {
        match self {
            ScalarMap::Const { .. } => 0.0,
            ScalarMap::Affine { slope, .. } => slope.abs(),
            ScalarMap::Tanh { amplitude, rate } => (amplitude * rate).abs(),
            ScalarMap::Sin {
                amplitude,
                frequency,
            } => (amplitude * frequency).abs(),
            ScalarMap::Sum { terms } => terms.iter().map(|t| t.sup_abs_derivative()).sum(),
        }
    }

    /// A lower bound for `inf |f|`; zero when none is known.
    pub fn inf_abs(&self) -> f64 {
        match self {
            ScalarMap::Const { value } => value.abs(),
            ScalarMap::Affine { intercept, slope } if *slope == 0.0 => intercept.abs(),
            ScalarMap::Sum { terms } => {
                let level: f64 = terms.iter().filter_map(|t| t.constant_value()).sum();
                let wobble: Option<f64> = terms
                    .iter()
                    .filter(|t| t.constant_value().is_none())
                    .map(|t| t.sup_abs())
                    .sum();
                wobble.map_or(0.0, |w| (level.abs() - w).max(0.0))
            }
            _ => 0.0,
        }
    }

    /// `Some(c)` when the map is identically `c`.
    pub fn constant_value(&self) -> Option<f64> {
        match self {
            ScalarMap::Const { value } => Some(*value),
            ScalarMap::Affine { intercept, slope } if *slope == 0.0 => Some(*intercept),
            ScalarMap::Tanh { amplitude, rate } if *amplitude == 0.0 || *rate == 0.0 => Some(0.0),
            ScalarMap::Sin {
                amplitude,
                frequency,
            } if *amplitude == 0.0 || *frequency == 0.0 => Some(0.0),
            ScalarMap::Sum { terms } => terms.iter().map(|t| t.constant_value()).sum(),
            _ => None,
        }
    }

    /// `Some(slope)` when the map is affine.
    pub fn affine_slope(&self) -> Option<f64> {
        match self {
            ScalarMap::Affine { slope, .. } => Some(*slope),
            ScalarMap::Sum { terms } => terms.iter().map(|t| t.affine_slope()).sum(),
            other => other.constant_value().map(|_| 0.0),
        }
    }

    fn check_finite(&self) -> Result<()> {
        let ok = match self {
            ScalarMap::Const { value } => value.is_finite(),
            ScalarMap::Affine { intercept, slope } => intercept.is_finite() && slope.is_finite(),
            ScalarMap::Tanh { amplitude, rate } => amplitude.is_finite() && rate.is_finite(),
            ScalarMap::Sin {
                amplitude,
                frequency,
            } => amplitude.is_finite() && frequency.is_finite(),
            ScalarMap::Sum { terms } => {
                for t in terms {
                    t.check_finite()?;
                }
                true
            }
        };
        if ok {
            Ok(())
        } else {
            invalid(format!("non-finite coefficient parameter in {self:?}"))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Diffusion {
    /// `sigma = diag(g_1(x_1), ..., g_d(x_d))`.
    Diagonal { maps: Vec<ScalarMap> },
    /// State-independent `d x d` matrix, row-major rows.
    ConstantMatrix { rows: Vec<Vec<f64>> },
}

/// Declared sup-norms; `None` means unbounded.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientBounds {
    pub sigma: Option<f64>,
    pub xi: Option<f64>,
    pub grad_b: f64,
    pub grad_sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CoefficientDef", into = "CoefficientDef")]
pub struct CoefficientSet {
    drift: Vec<ScalarMap>,
    diffusion: Diffusion,
    inverse: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CoefficientDef {
    drift: Vec<ScalarMap>,
    diffusion: Diffusion,
}

impl TryFrom<CoefficientDef> for CoefficientSet {
    type Error = crate::Error;
    fn try_from(def: CoefficientDef) -> Result<Self> {
        CoefficientSet::new(def.drift, def.diffusion)
    }
}

impl From<CoefficientSet> for CoefficientDef {
    fn from(c: CoefficientSet) -> Self {
        CoefficientDef {
            drift: c.drift,
            diffusion: c.diffusion,
        }
    }
}

impl CoefficientSet {
    pub fn new(drift: Vec<ScalarMap>, diffusion: Diffusion) -> Result<Self> {
        let d = drift.len();
        if d == 0 {
            return invalid("state dimension must be at least one");
        }
        for f in &drift {
            f.check_finite()?;
        }
        let inverse = match &diffusion {
            Diffusion::Diagonal { maps } => {
                if maps.len() != d {
                    return invalid(format!(
                        "diagonal diffusion needs {d} maps, got {}",
                        maps.len()
                    ));
                }
                for g in maps {
                    g.check_finite()?;
                }
                None
            }
            Diffusion::ConstantMatrix { rows } => {
                if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                    return invalid(format!("diffusion matrix must be {d} x {d}"));
                }
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                if flat.iter().any(|v| !v.is_finite()) {
                    return invalid("non-finite diffusion matrix entry");
                }
                let inv = DMatrix::from_row_slice(d, d, &flat).try_inverse();
                match inv {
                    Some(m) => Some(m.transpose().as_slice().to_vec()),
                    None => return invalid("diffusion matrix has no right inverse"),
                }
            }
        };
        Ok(Self {
            drift,
            diffusion,
            inverse,
        })
    }

    /// Scalar model `b(x) = drift(x)`, `sigma(x) = diffusion(x)`.
    pub fn scalar(drift: ScalarMap, diffusion: ScalarMap) -> Result<Self> {
        Self::new(
            vec![drift],
            Diffusion::Diagonal {
                maps: vec![diffusion],
            },
        )
    }

    pub fn dim(&self) -> usize {
        self.drift.len()
    }

    /// Noise dimension; equal to the state dimension.
    pub fn noise_dim(&self) -> usize {
        self.drift.len()
    }

    pub fn drift_maps(&self) -> &[ScalarMap] {
        &self.drift
    }

    pub fn diffusion(&self) -> &Diffusion {
        &self.diffusion
    }

    pub fn drift(&self, x: &[f64], out: &mut [f64]) {
        for ((o, f), xi) in out.iter_mut().zip(&self.drift).zip(x) {
            *o = f.eval(*xi);
        }
    }

    /// `sigma(x) v`.
    pub fn diffusion_apply(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Diffusion::Diagonal { maps } => {
                for i in 0..out.len() {
                    out[i] = maps[i].eval(x[i]) * v[i];
                }
            }
            Diffusion::ConstantMatrix { rows } => {
                for (o, r) in out.iter_mut().zip(rows) {
                    *o = r.iter().zip(v).map(|(a, b)| a * b).sum();
                }
            }
        }
    }

    /// `xi(x) v` with `xi` the right inverse of `sigma`.
    pub fn xi_apply(&self, x: &[f64], v: &[f64], out: &mut [f64]) {
        match (&self.diffusion, &self.inverse) {
            (Diffusion::Diagonal { maps }, _) => {
                for i in 0..out.len() {
                    out[i] = v[i] / maps[i].eval(x[i]);
                }
            }
            (Diffusion::ConstantMatrix { .. }, Some(inv)) => {
                let d = out.len();
                for (i, o) in out.iter_mut().enumerate() {
                    *o = (0..d).map(|k| inv[i * d + k] * v[k]).sum();
                }
            }
            (Diffusion::ConstantMatrix { .. }, None) => unreachable!("inverse built at construction"),
        }
    }

    /// `grad b(x) y`.
    pub fn drift_jacobian_apply(&self, x: &[f64], y: &[f64], out: &mut [f64]) {
        for i in 0..out.len() {
            out[i] = self.drift[i].derivative(x[i]) * y[i];
        }
    }

    /// `sum_j (grad sigma^(j)(x) y) v_j`, the directional derivative of `sigma(x) v`.
    pub fn diffusion_derivative_apply(&self, x: &[f64], y: &[f64], v: &[f64], out: &mut [f64]) {
        match &self.diffusion {
            Diffusion::Diagonal { maps } => {
                for i in 0..out.len() {
                    out[i] = maps[i].derivative(x[i]) * y[i] * v[i];
                }
            }
            Diffusion::ConstantMatrix { .. } => out.fill(0.0),
        }
    }

    /// `sigma(x)` as a row-major `d x d` matrix.
    pub fn sigma_matrix(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d * d];
        match &self.diffusion {
            Diffusion::Diagonal { maps } => {
                for i in 0..d {
                    m[i * d + i] = maps[i].eval(x[i]);
                }
            }
            Diffusion::ConstantMatrix { rows } => {
                for (i, r) in rows.iter().enumerate() {
                    m[i * d..(i + 1) * d].copy_from_slice(r);
                }
            }
        }
        m
    }

    /// `xi(x)` as a row-major `d x d` matrix.
    pub fn xi_matrix(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim();
        let mut m = vec![0.0; d * d];
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for k in 0..d {
            e.fill(0.0);
            e[k] = 1.0;
            self.xi_apply(x, &e, &mut col);
            for i in 0..d {
                m[i * d + k] = col[i];
            }
        }
        m
    }

    /// `Some(sigma)` when the diffusion does not depend on the state.
    pub fn constant_sigma(&self) -> Option<Vec<f64>> {
        match &self.diffusion {
            Diffusion::ConstantMatrix { .. } => Some(self.sigma_matrix(&vec![0.0; self.dim()])),
            Diffusion::Diagonal { maps } => {
                let vals: Option<Vec<f64>> = maps.iter().map(|g| g.constant_value()).collect();
                vals.map(|v| {
                    let d = v.len();
                    let mut m = vec![0.0; d * d];
                    for (i, s) in v.into_iter().enumerate() {
                        m[i * d + i] = s;
                    }
                    m
                })
            }
        }
    }

    pub fn drift_is_zero(&self) -> bool {
        self.drift.iter().all(|f| f.constant_value() == Some(0.0))
    }

    pub fn bounds(&self) -> CoefficientBounds {
        let grad_b = self
            .drift
            .iter()
            .map(|f| f.sup_abs_derivative())
            .fold(0.0, f64::max);
        match &self.diffusion {
            Diffusion::Diagonal { maps } => {
                let sigma = maps
                    .iter()
                    .map(|g| g.sup_abs())
                    .try_fold(0.0_f64, |acc, s| s.map(|s| acc.max(s)));
                let floor = maps.iter().map(|g| g.inf_abs()).fold(f64::INFINITY, f64::min);
                CoefficientBounds {
                    sigma,
                    xi: (floor > 0.0).then(|| 1.0 / floor),
                    grad_b,
                    grad_sigma: maps
                        .iter()
                        .map(|g| g.sup_abs_derivative())
                        .fold(0.0, f64::max),
                }
            }
            Diffusion::ConstantMatrix { rows } => {
                let d = rows.len();
                let norm = |m: &[f64]| {
                    (0..d)
                        .map(|i| (0..d).map(|k| m[i * d + k].abs()).sum::<f64>())
                        .fold(0.0, f64::max)
                };
                let flat: Vec<f64> = rows.iter().flatten().copied().collect();
                CoefficientBounds {
                    sigma: Some(norm(&flat)),
                    xi: self.inverse.as_deref().map(norm),
                    grad_b,
                    grad_sigma: 0.0,
                }
            }
        }
    }

    /// Checks `sigma xi = I` and the declared bounds at random probe points.
    pub fn probe_violations(&self, probes: usize, seed: u64) -> Vec<String> {
        let d = self.dim();
        let bounds = self.bounds();
        let mut out = Vec::new();
        if bounds.xi.is_none() {
            out.push("diffusion is not uniformly elliptic: no bound on its right inverse".into());
            return out;
        }
        let mut stream = SeedSpec::new(seed).stream(Purpose::Probe, 0, 0);
        let row_norm = |m: &[f64]| {
            (0..d)
                .map(|i| (0..d).map(|k| m[i * d + k].abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        for _ in 0..probes {
            let x: Vec<f64> = (0..d).map(|_| 10.0 * (2.0 * stream.uniform() - 1.0)).collect();
            let s = self.sigma_matrix(&x);
            let xi = self.xi_matrix(&x);
            for i in 0..d {
                for k in 0..d {
                    let p: f64 = (0..d).map(|l| s[i * d + l] * xi[l * d + k]).sum();
                    let target = if i == k { 1.0 } else { 0.0 };
                    if (p - target).abs() > 1e-10 {
                        out.push(format!("sigma xi != I at {x:?}: entry ({i},{k}) = {p}"));
                        return out;
                    }
                }
            }
            let tol = 1.0 + 1e-12;
            if let Some(bs) = bounds.sigma {
                if row_norm(&s) > bs * tol {
                    out.push(format!("declared sigma bound {bs} exceeded at {x:?}"));
                    return out;
                }
            }
            if let Some(bx) = bounds.xi {
                if row_norm(&xi) > bx * tol {
                    out.push(format!("declared xi bound {bx} exceeded at {x:?}"));
                    return out;
                }
            }
            for (i, f) in self.drift.iter().enumerate() {
                if f.derivative(x[i]).abs() > bounds.grad_b * tol {
                    out.push(format!("declared drift gradient bound exceeded at {x:?}"));
                    return out;
                }
            }
        }
        out
    }
}
