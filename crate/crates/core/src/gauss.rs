//! One-dimensional Gaussian expectations `⟨O(z)⟩_K` for mean-zero `z`
//! with variance `K`.
//!
//! Smooth observables go through Gauss–Hermite quadrature after the
//! substitution `z = √(2K)·t`. Observables built from an activation with a
//! kink (ReLU, RePU, MRePU, ...) are integrated piecewise with composite
//! Gauss–Legendre panels on `[-T√K, T√K]`, split exactly at the kink, so
//! the polynomial pieces of RePU/MRePU integrands are resolved to
//! round-off.

use serde::{Deserialize, Serialize};

use crate::activations::{Activation, ActivationKind};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Default Gauss–Hermite order.
pub const DEFAULT_ORDER: usize = 200;
/// Largest accepted Gauss–Hermite order. Beyond it the outermost weights
/// underflow in double precision.
pub const MAX_ORDER: usize = 300;
/// Half-width of the truncated support, in standard deviations.
const SUPPORT_SIGMAS: f64 = 14.0;
/// Number of equal-width panels across the truncated support.
const PANELS: usize = 28;

/// Whether analytic closed forms may replace quadrature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    /// Closed forms for the RePU family, quadrature otherwise.
    #[default]
    Auto,
    /// Always integrate numerically.
    Quadrature,
}

/// A mean-zero one-dimensional Gaussian with variance `K > 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianMeasure<T> {
    variance: T,
}

impl<T: Scalar> GaussianMeasure<T> {
    pub fn new(variance: T) -> Result<Self> {
        if !(variance > T::zero()) || !variance.is_finite() {
            return Err(Error::Domain(format!(
                "Gaussian variance must be positive and finite, got {variance}"
            )));
        }
        Ok(Self { variance })
    }

    pub fn variance(&self) -> T {
        self.variance
    }

    pub fn std_dev(&self) -> T {
        self.variance.sqrt()
    }
}

/// Nodes and weights of a Gauss quadrature rule.
///
/// Hermite rules use the raw weight `e^{-t²}` (weights sum to `√π`);
/// Legendre rules live on `[-1, 1]` (weights sum to 2). Nodes are sorted
/// ascending and symmetric about zero.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule<T> {
    nodes: Vec<T>,
    weights: Vec<T>,
    order: usize,
}

impl<T: Scalar> QuadratureRule<T> {
    /// Gauss–Hermite rule, nodes found by Newton iteration on the
    /// orthonormal Hermite recurrence.
    pub fn hermite(order: usize) -> Result<Self> {
        if order == 0 || order > MAX_ORDER {
            return Err(Error::Config(format!(
                "Gauss-Hermite order must be in 1..={MAX_ORDER}, got {order}"
            )));
        }
        let (x, w) = hermite_f64(order);
        Ok(Self::from_f64(x, w, order))
    }

    /// Gauss–Legendre rule on `[-1, 1]`.
    pub fn legendre(order: usize) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("Gauss-Legendre order must be positive".into()));
        }
        let (x, w) = legendre_f64(order);
        Ok(Self::from_f64(x, w, order))
    }

    fn from_f64(x: Vec<f64>, w: Vec<f64>, order: usize) -> Self {
        Self {
            nodes: x.into_iter().map(T::lit).collect(),
            weights: w.into_iter().map(T::lit).collect(),
            order,
        }
    }

    pub fn nodes(&self) -> &[T] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn order(&self) -> usize {
        self.order
    }
}

fn hermite_f64(n: usize) -> (Vec<f64>, Vec<f64>) {
    const PIM4: f64 = 0.751_125_544_464_942_5; // π^{-1/4}
    let nf = n as f64;
    // Orthonormal recurrence: returns (p_n(z), p_n'(z)).
    let eval = |z: f64| {
        let (mut p1, mut p2) = (PIM4, 0.0f64);
        for j in 0..n {
            let p3 = p2;
            p2 = p1;
            let jf = j as f64;
            p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
        }
        (p1, (2.0 * nf).sqrt() * p2)
    };
    // Roots are the eigenvalues of the Jacobi matrix (zero diagonal,
    // off-diagonal sqrt(k/2)); Sturm-sequence bisection isolates each one
    // and Newton polishes it.
    let below = |x: f64| {
        let mut count = 0;
        let mut d = 1.0f64;
        for k in 0..n {
            let off = if k == 0 { 0.0 } else { k as f64 / 2.0 };
            d = -x - if k == 0 { 0.0 } else { off / d };
            if d == 0.0 {
                d = -f64::EPSILON * (1.0 + x.abs());
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    };
    let bound = (2.0 * nf + 1.0).sqrt() + 1.0;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    let half = n / 2;
    for i in 0..n.div_ceil(2) {
        // i-th largest root.
        let rank = n - i;
        let (mut lo, mut hi) = (0.0f64, bound);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid == lo || mid == hi {
                break;
            }
            if below(mid) >= rank {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let mut z = 0.5 * (lo + hi);
        if n % 2 == 1 && i == half {
            z = 0.0;
        }
        for _ in 0..3 {
            let (p, dp) = eval(z);
            if dp == 0.0 || !(p / dp).is_finite() {
                break;
            }
            z -= p / dp;
        }
        let (_, dp) = eval(z);
        x[n - 1 - i] = z;
        x[i] = -z;
        w[i] = 2.0 / (dp * dp);
        w[n - 1 - i] = w[i];
    }
    (x, w)
}

fn legendre_f64(n: usize) -> (Vec<f64>, Vec<f64>) {
    let nf = n as f64;
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (1.0f64, 0.0f64);
            for j in 0..n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
            }
            pp = nf * (z * p1 - p2) / (z * z - 1.0);
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        w[i] = 2.0 / ((1.0 - z * z) * pp * pp);
        w[n - 1 - i] = w[i];
    }
    if n % 2 == 1 {
        x[n / 2] = 0.0;
    }
    (x, w)
}

/// Quadrature engine for Gaussian expectations.
#[derive(Debug, Clone)]
pub struct Quadrature<T> {
    hermite: QuadratureRule<T>,
    panel: QuadratureRule<T>,
}

impl<T: Scalar> Default for Quadrature<T> {
    fn default() -> Self {
        Self::new(DEFAULT_ORDER).expect("default order is valid")
    }
}

impl<T: Scalar> Quadrature<T> {
    /// Builds an engine of the given Hermite order. The per-panel Legendre
    /// order scales with it (a quarter, at least 16).
    pub fn new(order: usize) -> Result<Self> {
        Ok(Self {
            hermite: QuadratureRule::hermite(order)?,
            panel: QuadratureRule::legendre((order / 4).max(16))?,
        })
    }

    pub fn order(&self) -> usize {
        self.hermite.order()
    }

    pub fn hermite_rule(&self) -> &QuadratureRule<T> {
        &self.hermite
    }

    /// `⟨f(z)⟩_K` by Gauss–Hermite quadrature on the whole line.
    pub fn expect<F: Fn(T) -> T>(&self, measure: GaussianMeasure<T>, f: F) -> Result<T> {
        let scale = (T::lit(2.0) * measure.variance()).sqrt();
        let acc = self
            .hermite
            .nodes
            .iter()
            .zip(&self.hermite.weights)
            .fold(T::zero(), |acc, (&t, &w)| acc + w * f(scale * t));
        finite(acc / T::PI().sqrt())
    }

    /// `⟨f(z)⟩_K` by composite Gauss–Legendre on the truncated support,
    /// with panel boundaries forced at every breakpoint inside it.
    pub fn expect_split<F: Fn(T) -> T>(
        &self,
        measure: GaussianMeasure<T>,
        f: F,
        breakpoints: &[f64],
    ) -> Result<T> {
        let k = measure.variance();
        let sd = measure.std_dev();
        let half_width = T::lit(SUPPORT_SIGMAS) * sd;
        let step = T::lit(2.0 * SUPPORT_SIGMAS / PANELS as f64) * sd;
        let mut edges: Vec<T> = (0..=PANELS)
            .map(|i| -half_width + step * T::lit(i as f64))
            .collect();
        edges.extend(
            breakpoints
                .iter()
                .map(|&b| T::lit(b))
                .filter(|&b| b > -half_width && b < half_width),
        );
        edges.sort_by(|a, b| a.partial_cmp(b).expect("finite panel edges"));
        edges.dedup();

        let two = T::lit(2.0);
        let norm = T::one() / (two * T::PI() * k).sqrt();
        let mut acc = T::zero();
        for pair in edges.windows(2) {
            let (a, b) = (pair[0], pair[1]);
            if b <= a {
                continue;
            }
            let mid = (a + b) / two;
            let half = (b - a) / two;
            let mut panel = T::zero();
            for (&x, &w) in self.panel.nodes.iter().zip(&self.panel.weights) {
                let z = mid + half * x;
                panel = panel + w * f(z) * (-(z * z) / (two * k)).exp();
            }
            acc = acc + panel * half;
        }
        finite(acc * norm)
    }

    /// `⟨f(z)⟩_K` for an observable built from `activation`: split at the
    /// activation's kinks when one falls inside the support, Hermite
    /// otherwise.
    pub fn expect_for<F: Fn(T) -> T>(
        &self,
        measure: GaussianMeasure<T>,
        activation: &Activation,
        f: F,
    ) -> Result<T> {
        let reach = SUPPORT_SIGMAS * measure.std_dev().as_f64();
        let kinks = activation.kinks();
        if kinks.iter().any(|k| k.abs() < reach) {
            self.expect_split(measure, f, kinks)
        } else {
            self.expect(measure, f)
        }
    }
}

fn finite<T: Scalar>(x: T) -> Result<T> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Overflow(format!("Gaussian expectation (got {x})")))
    }
}

/// `n!!` with the conventions `(-1)!! = 0!! = 1`.
///
/// Exact integer arithmetic up to `n = 20`, floating point above.
pub fn double_factorial(n: i64) -> Result<f64> {
    if n < -1 {
        return Err(Error::Domain(format!("double factorial undefined for n = {n}")));
    }
    if n <= 20 {
        let mut acc: u64 = 1;
        let mut k = n;
        while k > 1 {
            acc *= k as u64;
            k -= 2;
        }
        return Ok(acc as f64);
    }
    let mut acc = 1.0f64;
    let mut k = n;
    while k > 1 {
        acc *= k as f64;
        k -= 2;
    }
    Ok(acc)
}

/// `∫₀^∞ zⁿ φ_K(z) dz = (n−1)!!·K^{n/2}/2` for even `n ≥ 0`.
pub fn half_gaussian_even_moment<T: Scalar>(n: u32, k: T) -> Result<T> {
    if !n.is_multiple_of(2) {
        return Err(Error::Domain(format!("half-Gaussian moment order {n} is odd")));
    }
    let df = double_factorial(n as i64 - 1)?;
    finite(T::lit(df) * k.powi(n as i32 / 2) / T::lit(2.0))
}

/// `g(K) = ⟨σ(z)²⟩_K`. RePU uses `(2p−1)!!·K^p/2` under [`Route::Auto`].
pub fn g_of_k<T: Scalar>(
    quad: &Quadrature<T>,
    activation: &Activation,
    k: T,
    route: Route,
) -> Result<T> {
    let measure = GaussianMeasure::new(k)?;
    if route == Route::Auto {
        match activation.kind() {
            ActivationKind::Repu => {
                let p = activation.order().expect("RePU has an order");
                return half_gaussian_even_moment(2 * p, k);
            }
            ActivationKind::Linear => return Ok(k),
            _ => {}
        }
    }
    quad.expect_for(measure, activation, |z| {
        let s = activation.eval(z);
        s * s
    })
}
