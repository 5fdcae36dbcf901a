//! Susceptibilities, infinite-width kernel flow and criticality analysis.
//!
//! For an activation σ and hyperparameters `(C_b, C_W)`:
//!
//! ```text
//! g(K)  = ⟨σ σ⟩_K
//! χ∥(K) = C_W g'(K)   = (C_W / K) ⟨z σ' σ⟩_K
//! χ⊥(K) = C_W ⟨σ' σ'⟩_K
//! h(K)  = C_W / (4K²) ⟨σ' σ' (z² − K)⟩_K = ½ dχ⊥/dK
//! ```
//!
//! and the single-input flow
//!
//! ```text
//! K⁽ˡ⁺¹⁾   = C_b + C_W g(K⁽ˡ⁾)
//! δK₁⁽ˡ⁺¹⁾  = χ∥ δK₁⁽ˡ⁾
//! δ²K₂⁽ˡ⁺¹⁾ = χ⊥ δ²K₂⁽ˡ⁾ + h (δK₁⁽ˡ⁾)²
//! V⁽ˡ⁺¹⁾   = χ∥² V⁽ˡ⁾ + C_W² (⟨σ⁴⟩ − ⟨σ²⟩²),   V⁽¹⁾ = 0
//! ```
//!
//! RePU has closed forms for every expectation above; they are used under
//! [`Route::Auto`] and bypassed under [`Route::Quadrature`] so the two can
//! be checked against each other.

use serde::{Deserialize, Serialize};

use crate::activations::{Activation, ActivationKind};
use crate::error::{Error, Result};
pub use crate::gauss::Route;
use crate::gauss::{double_factorial, g_of_k, GaussianMeasure, Quadrature};
use crate::scalar::Scalar;

/// Initialization hyperparameters: bias variance `C_b` and rescaled
/// weight variance `C_W` (weights are drawn with variance `C_W / fan_in`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitHyperparams<T> {
    pub c_b: T,
    pub c_w: T,
}

impl<T: Scalar> InitHyperparams<T> {
    pub fn new(c_b: T, c_w: T) -> Result<Self> {
        if !(c_w > T::zero()) || !c_w.is_finite() {
            return Err(Error::Config(format!("C_W must be positive, got {c_w}")));
        }
        if !(c_b >= T::zero()) || !c_b.is_finite() {
            return Err(Error::Config(format!("C_b must be non-negative, got {c_b}")));
        }
        Ok(Self { c_b, c_w })
    }

    pub fn with_cw(c_w: T) -> Result<Self> {
        Self::new(T::zero(), c_w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SusceptibilityKind {
    Parallel,
    Perpendicular,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SusceptibilityPoint<T> {
    pub k: T,
    pub chi_par: T,
    pub chi_perp: T,
    pub h: T,
    pub g: T,
}

impl<T: Scalar> SusceptibilityPoint<T> {
    /// `χ∥ / χ⊥`, or `None` when `χ⊥` vanishes.
    pub fn ratio(&self) -> Option<T> {
        (self.chi_perp != T::zero()).then(|| self.chi_par / self.chi_perp)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowLayer<T> {
    /// 1-based layer index.
    pub layer: usize,
    pub k00: T,
    pub dk1: T,
    pub dk2: T,
    pub chi_par: T,
    pub chi_perp: T,
    pub h: T,
    pub v: Option<T>,
}

/// How a flow ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "status")]
pub enum FlowStatus {
    /// All requested layers are in the trace.
    Complete,
    /// `K00` at `layer` exceeded the upper guard (or an expectation
    /// overflowed there).
    Overflow { layer: usize },
    /// `K00` at `layer` fell below the lower guard.
    Underflow { layer: usize },
}

impl FlowStatus {
    pub fn label(&self) -> &'static str {
        match self {
            FlowStatus::Complete => "ok",
            FlowStatus::Overflow { .. } => "overflow",
            FlowStatus::Underflow { .. } => "underflow",
        }
    }

    pub fn is_truncated(&self) -> bool {
        !matches!(self, FlowStatus::Complete)
    }
}

/// Per-layer record of the theoretical single-input flow.
///
/// `layers` holds only the in-band layers. When the flow is truncated,
/// `terminal` carries the offending `K00` value at the layer named by
/// `status`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFlowTrace<T> {
    pub layers: Vec<FlowLayer<T>>,
    pub status: FlowStatus,
    pub terminal: Option<T>,
}

impl<T: Scalar> KernelFlowTrace<T> {
    pub fn k00(&self) -> Vec<T> {
        self.layers.iter().map(|l| l.k00).collect()
    }

    /// Vertex values per layer (zero where the vertex was not tracked).
    pub fn vertex(&self) -> Vec<T> {
        self.layers.iter().map(|l| l.v.unwrap_or_else(T::zero)).collect()
    }
}

/// Infinite-width theory for one activation and one set of
/// hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct KernelTheory<'q, T> {
    activation: Activation,
    hp: InitHyperparams<T>,
    quad: &'q Quadrature<T>,
    route: Route,
}

impl<'q, T: Scalar> KernelTheory<'q, T> {
    pub fn new(activation: Activation, hp: InitHyperparams<T>, quad: &'q Quadrature<T>) -> Self {
        Self { activation, hp, quad, route: Route::Auto }
    }

    pub fn with_route(mut self, route: Route) -> Self {
        self.route = route;
        self
    }

    pub fn activation(&self) -> &Activation {
        &self.activation
    }

    pub fn hyperparams(&self) -> &InitHyperparams<T> {
        &self.hp
    }

    fn closed_form(&self) -> Option<ClosedForm> {
        if self.route == Route::Quadrature {
            return None;
        }
        match self.activation.kind() {
            ActivationKind::Repu => Some(ClosedForm::Repu(self.activation.order().unwrap())),
            ActivationKind::Linear => Some(ClosedForm::Linear),
            _ => None,
        }
    }

    fn expect<F: Fn(T) -> T>(&self, k: T, f: F) -> Result<T> {
        self.quad.expect_for(GaussianMeasure::new(k)?, &self.activation, f)
    }

    pub fn g(&self, k: T) -> Result<T> {
        g_of_k(self.quad, &self.activation, k, self.route)
    }

    pub fn chi_par(&self, k: T) -> Result<T> {
        GaussianMeasure::new(k)?;
        let cw = self.hp.c_w;
        let a = self.activation;
        let v = match self.closed_form() {
            Some(ClosedForm::Repu(p)) => {
                cw * T::lit(p as f64 * double_factorial(2 * p as i64 - 1)?) * k.powi(p as i32 - 1)
                    / T::lit(2.0)
            }
            Some(ClosedForm::Linear) => cw,
            None => cw / k * self.expect(k, |z| z * a.eval_deriv(z) * a.eval(z))?,
        };
        finite(v, "parallel susceptibility")
    }

    pub fn chi_perp(&self, k: T) -> Result<T> {
        GaussianMeasure::new(k)?;
        let cw = self.hp.c_w;
        let a = self.activation;
        let v = match self.closed_form() {
            Some(ClosedForm::Repu(p)) => {
                cw * T::lit((p * p) as f64 * double_factorial(2 * p as i64 - 3)?)
                    * k.powi(p as i32 - 1)
                    / T::lit(2.0)
            }
            Some(ClosedForm::Linear) => cw,
            None => {
                cw * self.expect(k, |z| {
                    let d = a.eval_deriv(z);
                    d * d
                })?
            }
        };
        finite(v, "perpendicular susceptibility")
    }

    pub fn h(&self, k: T) -> Result<T> {
        GaussianMeasure::new(k)?;
        let cw = self.hp.c_w;
        let a = self.activation;
        let v = match self.closed_form() {
            Some(ClosedForm::Repu(p)) => {
                if p == 1 {
                    T::zero()
                } else {
                    cw * T::lit(((p * p) * (p - 1)) as f64 * double_factorial(2 * p as i64 - 3)?)
                        * k.powi(p as i32 - 2)
                        / T::lit(4.0)
                }
            }
            Some(ClosedForm::Linear) => T::zero(),
            None => {
                cw / (T::lit(4.0) * k * k)
                    * self.expect(k, |z| {
                        let d = a.eval_deriv(z);
                        d * d * (z * z - k)
                    })?
            }
        };
        finite(v, "h")
    }

    /// `⟨σ⁴⟩_K`.
    pub fn sigma4(&self, k: T) -> Result<T> {
        let v = match self.closed_form() {
            Some(ClosedForm::Repu(p)) => crate::gauss::half_gaussian_even_moment(4 * p, k)?,
            Some(ClosedForm::Linear) => T::lit(3.0) * k * k,
            None => {
                let a = self.activation;
                self.expect(k, |z| a.eval(z).powi(4))?
            }
        };
        finite(v, "fourth moment")
    }

    pub fn point(&self, k: T) -> Result<SusceptibilityPoint<T>> {
        Ok(SusceptibilityPoint {
            k,
            chi_par: self.chi_par(k)?,
            chi_perp: self.chi_perp(k)?,
            h: self.h(k)?,
            g: self.g(k)?,
        })
    }

    /// `C_b + C_W g(K)`.
    pub fn kernel_step(&self, k: T) -> Result<T> {
        finite(self.hp.c_b + self.hp.c_w * self.g(k)?, "kernel step")
    }

    /// Leading-order single-input vertex source `C_W² (⟨σ⁴⟩ − ⟨σ²⟩²)`.
    pub fn vertex_source(&self, k: T) -> Result<T> {
        let g = self.g(k)?;
        let cw = self.hp.c_w;
        finite(cw * cw * (self.sigma4(k)? - g * g), "vertex source")
    }

    /// Fixed point of the RePU kernel map with `C_b = 0`:
    /// `K* = (2 / (C_W (2p−1)!!))^{1/(p−1)}`. `None` for other kinds and
    /// for `p = 1`, where every `K` is fixed at `C_W = 2`.
    pub fn repu_fixed_point(&self) -> Option<T> {
        let p = match self.activation.kind() {
            ActivationKind::Repu => self.activation.order()?,
            _ => return None,
        };
        if p < 2 || self.hp.c_b != T::zero() {
            return None;
        }
        let df = T::lit(double_factorial(2 * p as i64 - 1).ok()?);
        Some((T::lit(2.0) / (self.hp.c_w * df)).powf(T::one() / T::lit((p - 1) as f64)))
    }

    /// Iterates the kernel, the two perturbation recursions and (when
    /// `track_vertex`) the single-input vertex for `layers` layers,
    /// starting from `K00⁽¹⁾ = k1`. Leaving the guard band truncates the
    /// trace instead of failing.
    pub fn flow(&self, k1: T, dk1: T, dk2: T, layers: usize, track_vertex: bool) -> Result<KernelFlowTrace<T>> {
        GaussianMeasure::new(k1)?;
        if layers == 0 {
            return Err(Error::Config("flow needs at least one layer".into()));
        }
        let mut trace = KernelFlowTrace { layers: Vec::with_capacity(layers), status: FlowStatus::Complete, terminal: None };
        let (mut k, mut d1, mut d2) = (k1, dk1, dk2);
        let mut v = T::zero();
        for layer in 1..=layers {
            if let Some(status) = out_of_band(k, layer) {
                trace.status = status;
                trace.terminal = Some(k);
                break;
            }
            let point = match self.point(k) {
                Ok(p) => p,
                Err(Error::Overflow(_)) => {
                    trace.status = FlowStatus::Overflow { layer };
                    trace.terminal = Some(k);
                    break;
                }
                Err(e) => return Err(e),
            };
            trace.layers.push(FlowLayer {
                layer,
                k00: k,
                dk1: d1,
                dk2: d2,
                chi_par: point.chi_par,
                chi_perp: point.chi_perp,
                h: point.h,
                v: track_vertex.then_some(v),
            });
            if layer == layers {
                break;
            }
            let next_k = self.hp.c_b + self.hp.c_w * point.g;
            let next_v = if track_vertex {
                match self.vertex_source(k) {
                    Ok(src) => point.chi_par * point.chi_par * v + src,
                    Err(Error::Overflow(_)) => T::infinity(),
                    Err(e) => return Err(e),
                }
            } else {
                T::zero()
            };
            if !next_v.is_finite() {
                trace.status = FlowStatus::Overflow { layer: layer + 1 };
                trace.terminal = Some(next_k);
                break;
            }
            d2 = point.chi_perp * d2 + point.h * d1 * d1;
            d1 = point.chi_par * d1;
            k = next_k;
            v = next_v;
        }
        Ok(trace)
    }

    /// Leading-order vertex flow with `V⁽¹⁾ = 0`.
    pub fn vertex_flow(&self, k1: T, layers: usize) -> Result<KernelFlowTrace<T>> {
        self.flow(k1, T::zero(), T::zero(), layers, true)
    }
}

#[derive(Debug, Clone, Copy)]
enum ClosedForm {
    Repu(u32),
    Linear,
}

fn out_of_band<T: Scalar>(k: T, layer: usize) -> Option<FlowStatus> {
    if k.is_nan() || k > T::guard_upper() {
        Some(FlowStatus::Overflow { layer })
    } else if k < T::guard_lower() {
        Some(FlowStatus::Underflow { layer })
    } else {
        None
    }
}

fn finite<T: Scalar>(x: T, what: &str) -> Result<T> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Overflow(what.to_string()))
    }
}

/// `χ∥ / χ⊥` at `K` (independent of `C_W`).
pub fn susceptibility_ratio<T: Scalar>(quad: &Quadrature<T>, activation: &Activation, k: T) -> Result<T> {
    let theory = KernelTheory::new(*activation, InitHyperparams::with_cw(T::one())?, quad);
    let perp = theory.chi_perp(k)?;
    if perp == T::zero() {
        return Err(Error::Degenerate(format!("{activation} has vanishing perpendicular susceptibility")));
    }
    Ok(theory.chi_par(k)? / perp)
}

/// `C_W` that sets the chosen susceptibility to 1 at `K*`. Both
/// susceptibilities are linear in `C_W`, so this is `1 / χ(C_W = 1, K*)`.
pub fn solve_critical_cw<T: Scalar>(
    quad: &Quadrature<T>,
    activation: &Activation,
    k_star: T,
    which: SusceptibilityKind,
) -> Result<T> {
    let theory = KernelTheory::new(*activation, InitHyperparams::with_cw(T::one())?, quad);
    let chi = match which {
        SusceptibilityKind::Parallel => theory.chi_par(k_star)?,
        SusceptibilityKind::Perpendicular => theory.chi_perp(k_star)?,
    };
    if chi == T::zero() {
        return Err(Error::NoCriticality(format!("{activation}: susceptibility vanishes at K = {k_star}")));
    }
    Ok(T::one() / chi)
}

/// Splits a two-input kernel into the `(K[0], K[1], K[2])` coefficients of
/// the `[[1,1],[1,1]]`, `[[1,0],[0,-1]]`, `[[1,-1],[-1,1]]` basis.
pub fn decompose_two_input_kernel<T: Scalar>(kpp: T, kmm: T, kpm: T) -> Result<(T, T, T)> {
    let tol = T::lit(1e-12) * (kpp.abs() + kmm.abs() + kpm.abs()).max(T::one());
    let det = kpp * kmm - kpm * kpm;
    if !(kpp >= -tol && kmm >= -tol && det >= -tol * (kpp.abs() + kmm.abs()).max(T::one())) {
        return Err(Error::Domain(format!(
            "kernel [[{kpp}, {kpm}], [{kpm}, {kmm}]] is not positive semidefinite"
        )));
    }
    let quarter = T::lit(0.25);
    let half = T::lit(0.5);
    let two = T::lit(2.0);
    Ok((
        quarter * (kpp + kmm + two * kpm),
        half * (kpp - kmm),
        quarter * (kpp + kmm - two * kpm),
    ))
}

/// Inverse of [`decompose_two_input_kernel`]: returns `(K++, K--, K+-)`.
pub fn recompose_two_input_kernel<T: Scalar>(k0: T, k1: T, k2: T) -> (T, T, T) {
    (k0 + k1 + k2, k0 - k1 + k2, k0 - k2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UniversalityClass {
    ScaleInvariant,
    KStarZero,
    HalfStable,
    NoCriticality,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvidencePoint {
    pub k: f64,
    /// χ∥ at `C_W = 1`.
    pub chi_par: f64,
    /// χ⊥ at `C_W = 1`.
    pub chi_perp: f64,
    pub ratio: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub activation: Activation,
    pub class: UniversalityClass,
    pub reason: String,
    pub evidence: Vec<EvidencePoint>,
}

/// Log-spaced grid of `n` points from `lo` to `hi` inclusive.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.log10(), hi.log10());
    (0..n).map(|i| 10f64.powf(a + (b - a) * i as f64 / (n - 1) as f64)).collect()
}

const SCALE_PROBES: [f64; 3] = [1e-3, 1.0, 1e3];
const SCALE_TOL: f64 = 1e-8;
const RATIO_TOL: f64 = 1e-3;

/// Heuristic universality classification from susceptibilities at
/// `C_W = 1`, evaluated on `{1e-3, 1, 1e3}` and a 50-point log grid over
/// `[1e-6, 1e3]`:
///
/// 1. scale-invariant: `χ∥`, `χ⊥` vary by less than `1e-8` (relative) over
///    the three probes and their ratio is 1;
/// 2. no criticality: `χ⊥` vanishes somewhere, or `|χ∥/χ⊥ − 1| > 1e-3` at
///    every grid point;
/// 3. `K* = 0`: the ratio is within `1e-3` of 1 at `K = 1e-6` and
///    `σ(0) = 0`;
/// 4. half-stable: everything else.
pub fn classify_universality(quad: &Quadrature<f64>, activation: &Activation) -> Result<Classification> {
    let theory = KernelTheory::new(*activation, InitHyperparams::with_cw(1.0)?, quad);
    let evidence_at = |k: f64| -> Result<EvidencePoint> {
        let chi_par = theory.chi_par(k)?;
        let chi_perp = theory.chi_perp(k)?;
        let ratio = (chi_perp != 0.0).then(|| chi_par / chi_perp);
        Ok(EvidencePoint { k, chi_par, chi_perp, ratio })
    };
    let probes = SCALE_PROBES.iter().map(|&k| evidence_at(k)).collect::<Result<Vec<_>>>()?;
    let grid = log_grid(1e-6, 1e3, 50).into_iter().map(evidence_at).collect::<Result<Vec<_>>>()?;
    let mut evidence = grid.clone();
    evidence.extend(probes.iter().copied());
    evidence.sort_by(|a, b| a.k.total_cmp(&b.k));
    evidence.dedup_by(|a, b| a.k == b.k);

    let done = |class, reason: &str| {
        Ok(Classification { activation: *activation, class, reason: reason.to_string(), evidence: evidence.clone() })
    };

    if evidence.iter().any(|e| e.ratio.is_none()) {
        return done(UniversalityClass::NoCriticality, "perpendicular susceptibility vanishes");
    }
    let spread = |f: fn(&EvidencePoint) -> f64| {
        let vals: Vec<f64> = probes.iter().map(f).collect();
        let max = vals.iter().cloned().fold(f64::MIN, f64::max);
        let min = vals.iter().cloned().fold(f64::MAX, f64::min);
        (max - min) / max.abs().max(f64::MIN_POSITIVE)
    };
    let ratios_unit = probes.iter().all(|e| (e.ratio.unwrap() - 1.0).abs() < SCALE_TOL);
    if spread(|e| e.chi_par) < SCALE_TOL && spread(|e| e.chi_perp) < SCALE_TOL && ratios_unit {
        return done(UniversalityClass::ScaleInvariant, "susceptibilities independent of K with unit ratio");
    }
    if grid.iter().all(|e| (e.ratio.unwrap() - 1.0).abs() > RATIO_TOL) {
        return done(UniversalityClass::NoCriticality, "susceptibility ratio bounded away from 1");
    }
    let small_k = grid[0].ratio.unwrap();
    if (small_k - 1.0).abs() < RATIO_TOL && activation.eval(0.0f64).abs() < 1e-12 {
        return done(UniversalityClass::KStarZero, "ratio tends to 1 as K -> 0 and sigma(0) = 0");
    }
    done(UniversalityClass::HalfStable, "residual class")
}
