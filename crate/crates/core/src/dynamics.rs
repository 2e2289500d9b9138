//! Graph Laplacian and discrete-time Schrödinger evolution of a wave row.
//!
//! One tick advances a state by `psi -> S psi`, where `S` depends on the scheme:
//!
//! * `Euler`:  `S = I + i mu L`, the explicit update. Not norm preserving.
//! * `Cayley`: `S = (I - i mu L / 2)^-1 (I + i mu L / 2)`. Unitary.
//! * `Exact`:  `S = exp(i mu L)`, through a dense eigendecomposition of `L`.
//!
//! `L = A - V` is the graph Laplacian with `V` the diagonal valence matrix, so
//! `L` is real, symmetric and negative semidefinite.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use thiserror::Error;

use crate::relgraph::RelationalGraph;

/// Largest graph for which dense spectral evolution is available.
pub const DENSE_CAP: usize = 4096;

/// Enumeration guard for [`kernel_path_sum`]: ticks and vertices.
pub const PATH_SUM_MAX_TICKS: u32 = 12;
pub const PATH_SUM_MAX_VERTICES: usize = 12;

/// Euler runs warn above this value of `mu * max|eig(L)|`.
pub const EULER_WARN_RATIO: f64 = 0.5;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DynamicsError {
    #[error("state has {found} entries, operator expects {expected}")]
    ShapeError { expected: usize, found: usize },
    #[error("mu must be finite and positive, got {0}")]
    InvalidMu(f64),
    #[error("amplitude at vertex {0} is not finite")]
    NonFinite(usize),
    #[error("linear solver failed: {0}")]
    SolverError(String),
    #[error("path enumeration limited to t <= {max_ticks} and n <= {max_vertices} (got t = {t}, n = {n})")]
    TooLargeForEnumeration {
        t: u32,
        n: usize,
        max_ticks: u32,
        max_vertices: usize,
    },
    #[error("dense spectral evolution needs n <= {cap}, graph has {n} vertices")]
    ExactUnavailable { n: usize, cap: usize },
    #[error("vertex {0} out of range")]
    InvalidVertex(usize),
    #[error("unknown scheme {0:?}")]
    UnknownScheme(String),
}

pub type Result<T> = std::result::Result<T, DynamicsError>;

/// Complex amplitudes over the spatial vertices, stamped with a tick count.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveState {
    amplitudes: Vec<Complex64>,
    tick: u64,
}

impl WaveState {
    pub fn new(amplitudes: Vec<Complex64>) -> Result<Self> {
        if let Some(v) = amplitudes
            .iter()
            .position(|a| !a.re.is_finite() || !a.im.is_finite())
        {
            return Err(DynamicsError::NonFinite(v));
        }
        Ok(Self {
            amplitudes,
            tick: 0,
        })
    }

    /// Unit amplitude at `vertex`, zero elsewhere.
    pub fn localized(n: usize, vertex: usize) -> Result<Self> {
        if vertex >= n {
            return Err(DynamicsError::InvalidVertex(vertex));
        }
        let mut amplitudes = vec![ZERO; n];
        amplitudes[vertex] = Complex64::new(1.0, 0.0);
        Ok(Self {
            amplitudes,
            tick: 0,
        })
    }

    /// Normalized plane wave `exp(i k x) / sqrt(n)` with `k = 2 pi m / n` on a
    /// ring of `n` vertices.
    pub fn plane_wave(n: usize, m: usize) -> Self {
        let k = wave_number(n, m);
        let scale = 1.0 / (n as f64).sqrt();
        let amplitudes = (0..n)
            .map(|x| Complex64::from_polar(scale, k * x as f64))
            .collect();
        Self {
            amplitudes,
            tick: 0,
        }
    }

    pub fn with_tick(mut self, tick: u64) -> Self {
        self.tick = tick;
        self
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    /// `<self|other>`, conjugate-linear in `self`.
    pub fn inner(&self, other: &WaveState) -> Complex64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum()
    }

    pub fn intensity(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn max_abs_diff(&self, other: &WaveState) -> f64 {
        self.amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// CSV dump with header `vertex,re,im` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, out: W) -> io::Result<()> {
        write_amplitudes_csv(out, &self.amplitudes)
    }
}

/// Writes `vertex,re,im` rows for a complex vector.
pub fn write_amplitudes_csv<W: Write>(mut out: W, amplitudes: &[Complex64]) -> io::Result<()> {
    writeln!(out, "vertex,re,im")?;
    for (v, a) in amplitudes.iter().enumerate() {
        writeln!(out, "{v},{:.16e},{:.16e}", a.re, a.im)?;
    }
    Ok(())
}

/// `2 pi m / n`.
pub fn wave_number(n: usize, m: usize) -> f64 {
    2.0 * std::f64::consts::PI * m as f64 / n as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    Euler,
    Cayley,
    Exact,
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::Euler => "euler",
            Scheme::Cayley => "cayley",
            Scheme::Exact => "exact",
        })
    }
}

impl FromStr for Scheme {
    type Err = DynamicsError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "cayley" => Ok(Scheme::Cayley),
            "exact" => Ok(Scheme::Exact),
            _ => Err(DynamicsError::UnknownScheme(s.to_string())),
        }
    }
}

/// A scheme together with its per-tick coupling `mu`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stepper {
    scheme: Scheme,
    mu: f64,
}

impl Stepper {
    pub fn new(scheme: Scheme, mu: f64) -> Result<Self> {
        check_mu(mu)?;
        Ok(Self { scheme, mu })
    }

    pub fn scheme(&self) -> Scheme {
        self.scheme
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

fn check_mu(mu: f64) -> Result<()> {
    if mu.is_finite() && mu > 0.0 {
        Ok(())
    } else {
        Err(DynamicsError::InvalidMu(mu))
    }
}

/// Sparse graph Laplacian `L = A - V`.
#[derive(Debug, Clone, PartialEq)]
pub struct LaplacianMatrix {
    diag: Vec<f64>,
    neighbors: Vec<Vec<usize>>,
}

/// Laplacian of the spatial relations.
pub fn laplacian(g: &RelationalGraph) -> LaplacianMatrix {
    let n = g.n_spatial();
    let neighbors: Vec<Vec<usize>> = (0..n).map(|v| g.neighbors(v).to_vec()).collect();
    let diag = neighbors.iter().map(|row| -(row.len() as f64)).collect();
    LaplacianMatrix { diag, neighbors }
}

impl LaplacianMatrix {
    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        if x == y {
            self.diag[x]
        } else if self.neighbors[x].binary_search(&y).is_ok() {
            1.0
        } else {
            0.0
        }
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for x in 0..n {
            m[(x, x)] = self.diag[x];
            for &y in &self.neighbors[x] {
                m[(x, y)] = 1.0;
            }
        }
        m
    }

    /// `L v` with a fixed per-row summation order.
    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.neighbors
            .iter()
            .enumerate()
            .map(|(x, row)| {
                let mut acc = v[x] * self.diag[x];
                for &y in row {
                    acc += v[y];
                }
                acc
            })
            .collect()
    }

    /// Gershgorin bound on the spectral radius, `2 * max degree`.
    pub fn spectral_bound(&self) -> f64 {
        self.diag.iter().map(|d| -2.0 * d).fold(0.0, f64::max)
    }

    fn check_shape(&self, psi: &WaveState) -> Result<()> {
        if psi.len() != self.dim() {
            return Err(DynamicsError::ShapeError {
                expected: self.dim(),
                found: psi.len(),
            });
        }
        Ok(())
    }
}

/// Returns a warning when an Euler run with this `mu` inflates the norm of the
/// worst mode by more than about 12% per tick.
pub fn euler_stability_warning(lap: &LaplacianMatrix, mu: f64) -> Option<String> {
    let ratio = mu * lap.spectral_bound();
    (ratio > EULER_WARN_RATIO).then(|| {
        format!(
            "euler: mu * max|eig| <= {ratio:.3} exceeds {EULER_WARN_RATIO}; norm may grow by up to {:.1}% per tick",
            ((1.0 + ratio * ratio).sqrt() - 1.0) * 100.0
        )
    })
}

/// One explicit tick, `(I + i mu L) psi`.
pub fn euler_step(psi: &WaveState, lap: &LaplacianMatrix, mu: f64) -> Result<WaveState> {
    lap.check_shape(psi)?;
    check_mu(mu)?;
    let lpsi = lap.apply(&psi.amplitudes);
    let amplitudes = psi
        .amplitudes
        .iter()
        .zip(lpsi)
        .map(|(a, l)| a + I * mu * l)
        .collect();
    Ok(WaveState {
        amplitudes,
        tick: psi.tick + 1,
    })
}

/// One Cayley tick, `(I - i mu L / 2)^-1 (I + i mu L / 2) psi`.
///
/// With `B = I + i mu L / 2` the system matrix is `B†`, so the step solves the
/// normal equations `(I + mu^2 L^2 / 4) x = B B psi`. That operator is real,
/// symmetric and positive definite, and conjugate gradients converge in a
/// handful of iterations for moderate `mu`.
pub fn cayley_step(psi: &WaveState, lap: &LaplacianMatrix, mu: f64) -> Result<WaveState> {
    lap.check_shape(psi)?;
    check_mu(mu)?;
    let half = 0.5 * mu;
    let apply_b = |v: &[Complex64]| -> Vec<Complex64> {
        let lv = lap.apply(v);
        v.iter().zip(lv).map(|(a, l)| a + I * half * l).collect()
    };
    let rhs = apply_b(&apply_b(&psi.amplitudes));
    let quarter_mu2 = half * half;
    let normal = |v: &[Complex64]| -> Vec<Complex64> {
        let llv = lap.apply(&lap.apply(v));
        v.iter()
            .zip(llv)
            .map(|(a, l)| a + l * quarter_mu2)
            .collect()
    };
    let amplitudes = conjugate_gradient(normal, &rhs, &psi.amplitudes)?;
    Ok(WaveState {
        amplitudes,
        tick: psi.tick + 1,
    })
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm_sqr(a: &[Complex64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum()
}

/// Conjugate gradients for a Hermitian positive definite operator.
fn conjugate_gradient<F>(op: F, rhs: &[Complex64], guess: &[Complex64]) -> Result<Vec<Complex64>>
where
    F: Fn(&[Complex64]) -> Vec<Complex64>,
{
    const TOL: f64 = 1e-30; // squared relative residual
    const ACCEPT: f64 = 1e-22;
    let n = rhs.len();
    let rhs_sqr = norm_sqr(rhs);
    if rhs_sqr == 0.0 {
        return Ok(vec![ZERO; n]);
    }
    let mut x = guess.to_vec();
    let ax = op(&x);
    let mut r: Vec<Complex64> = rhs.iter().zip(ax).map(|(b, a)| b - a).collect();
    let mut p = r.clone();
    let mut rr = norm_sqr(&r);
    let max_iter = 200 + 10 * n;
    let mut best = rr;
    let mut stalled = 0;
    for _ in 0..max_iter {
        if rr <= TOL * rhs_sqr {
            return Ok(x);
        }
        let ap = op(&p);
        let pap = dot(&p, &ap).re;
        if pap <= 0.0 || !pap.is_finite() {
            return Err(DynamicsError::SolverError(
                "operator is not positive definite".into(),
            ));
        }
        let alpha = rr / pap;
        for i in 0..n {
            x[i] += p[i] * alpha;
            r[i] -= ap[i] * alpha;
        }
        let rr_next = norm_sqr(&r);
        if rr_next < best {
            best = rr_next;
            stalled = 0;
        } else {
            stalled += 1;
            // rounding floor reached
            if stalled >= 5 && best <= ACCEPT * rhs_sqr {
                return Ok(x);
            }
        }
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + p[i] * beta;
        }
        rr = rr_next;
    }
    if rr <= ACCEPT * rhs_sqr {
        Ok(x)
    } else {
        Err(DynamicsError::SolverError(format!(
            "conjugate gradients did not converge (relative residual {:.3e})",
            (rr / rhs_sqr).sqrt()
        )))
    }
}

/// Dense eigendecomposition of a Laplacian, `L = V diag(lambda) V^T`.
///
/// `V` is kept as a product of Householder reflectors rather than as a dense
/// matrix. Each reflector is orthogonal for whatever vector is stored, so
/// repeated `V f(Lambda) V^T` applications lose norm only through rounding,
/// not through the ~1e-15 non-orthogonality of the solver's eigenvectors.
#[derive(Debug, Clone)]
pub struct Spectrum {
    values: DVector<f64>,
    reflectors: Vec<Reflector>,
}

/// `I - 2 v v^T / (v^T v)` acting on entries `start..`.
///
/// `v^T v` is kept as an unevaluated sum `vv + vv_lo`. Folding it into a
/// rounded `beta` would give every application the same relative error, and
/// the norm would drift steadily in one direction.
#[derive(Debug, Clone)]
struct Reflector {
    start: usize,
    v: Vec<f64>,
    vv: f64,
    /// `vv_lo / vv`.
    vv_rel_lo: f64,
}

impl Reflector {
    fn new(start: usize, v: Vec<f64>) -> Option<Self> {
        let mut acc = CompensatedReal::default();
        for &x in &v {
            let sq = x * x;
            acc.add(sq);
            acc.add(x.mul_add(x, -sq));
        }
        let (vv, lo) = acc.parts();
        (vv > 0.0).then(|| Self {
            start,
            v,
            vv,
            vv_rel_lo: lo / vv,
        })
    }

    fn apply(&self, x: &mut [Complex64]) {
        let tail = &mut x[self.start..];
        let dot: Complex64 = self.v.iter().zip(tail.iter()).map(|(v, a)| a * v).sum();
        let q = dot * 2.0 / self.vv;
        let scale = q - q * self.vv_rel_lo;
        for (a, &v) in tail.iter_mut().zip(&self.v) {
            a.re = (-scale.re).mul_add(v, a.re);
            a.im = (-scale.im).mul_add(v, a.im);
        }
    }
}

/// Householder QR of an orthogonal `q`, returning the reflectors with
/// `q = H_0 ... H_{n-2} R` and `R` diagonal with entries of modulus ~1.
fn householder_reflectors(mut q: DMatrix<f64>) -> Vec<Reflector> {
    let n = q.nrows();
    let mut out = Vec::with_capacity(n.saturating_sub(1));
    for k in 0..n.saturating_sub(1) {
        let x: Vec<f64> = q.view((k, k), (n - k, 1)).iter().copied().collect();
        let norm = x.iter().map(|a| a * a).sum::<f64>().sqrt();
        let alpha = if x[0] >= 0.0 { -norm } else { norm };
        let mut v = x;
        v[0] -= alpha;
        let Some(h) = Reflector::new(k, v) else {
            continue;
        };
        for j in k..n {
            let dot: f64 = (k..n).map(|i| h.v[i - k] * q[(i, j)]).sum();
            let scale = 2.0 * dot / h.vv;
            for i in k..n {
                q[(i, j)] -= scale * h.v[i - k];
            }
        }
        out.push(h);
    }
    out
}

impl Spectrum {
    pub fn new(lap: &LaplacianMatrix) -> Result<Self> {
        let n = lap.dim();
        if n > DENSE_CAP {
            return Err(DynamicsError::ExactUnavailable { n, cap: DENSE_CAP });
        }
        let eig = SymmetricEigen::try_new(lap.to_dense(), f64::EPSILON, 0).ok_or_else(|| {
            DynamicsError::SolverError("eigendecomposition did not converge".into())
        })?;
        Ok(Self {
            values: eig.eigenvalues,
            reflectors: householder_reflectors(eig.eigenvectors),
        })
    }

    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.values
    }

    /// `V diag(f(lambda)) V^T psi`.
    pub fn apply_function<F>(&self, amplitudes: &[Complex64], f: F) -> Vec<Complex64>
    where
        F: Fn(f64) -> Complex64,
    {
        let factors: Vec<Complex64> = self.values.iter().map(|&l| f(l)).collect();
        let mut x = amplitudes.to_vec();
        self.apply_factors(&mut x, &factors);
        x
    }

    /// Dense `V diag(f(lambda)) V^T`.
    pub fn matrix_function<F>(&self, f: F) -> DMatrix<Complex64>
    where
        F: Fn(f64) -> Complex64,
    {
        let n = self.values.len();
        let factors: Vec<Complex64> = self.values.iter().map(|&l| f(l)).collect();
        let mut out = DMatrix::from_element(n, n, ZERO);
        let mut col = vec![ZERO; n];
        for j in 0..n {
            col.fill(ZERO);
            col[j] = Complex64::new(1.0, 0.0);
            self.apply_factors(&mut col, &factors);
            out.set_column(j, &DVector::from_column_slice(&col));
        }
        out
    }

    fn apply_factors(&self, x: &mut [Complex64], factors: &[Complex64]) {
        // the signs in R cancel between V and V^T
        for h in &self.reflectors {
            h.apply(x);
        }
        for (a, f) in x.iter_mut().zip(factors) {
            *a *= f;
        }
        for h in self.reflectors.iter().rev() {
            h.apply(x);
        }
    }
}

/// `exp(i theta)` rounded to the nearby floating-point pair whose modulus is
/// closest to one. The naive rounding is off by up to one ulp, and over many
/// exact steps that bias accumulates as norm drift.
fn unit_phase(theta: f64) -> Complex64 {
    fn ulp_step(x: f64, k: i64) -> f64 {
        if x == 0.0 {
            return f64::from_bits(k.unsigned_abs()) * (k.signum() as f64);
        }
        let bits = x.to_bits() as i64 + if x > 0.0 { k } else { -k };
        f64::from_bits(bits as u64)
    }
    // c^2 + s^2 - 1, exact up to the final additions
    fn defect(c: f64, s: f64) -> f64 {
        let (cc, ss) = (c * c, s * s);
        let (cl, sl) = (c.mul_add(c, -cc), s.mul_add(s, -ss));
        ((cc - 1.0) + ss) + (cl + sl)
    }
    let (s0, c0) = theta.sin_cos();
    let mut best = (defect(c0, s0).abs(), c0, s0);
    for dc in -2..=2 {
        for ds in -2..=2 {
            let (c, s) = (ulp_step(c0, dc), ulp_step(s0, ds));
            let d = defect(c, s).abs();
            if d < best.0 {
                best = (d, c, s);
            }
        }
    }
    Complex64::new(best.1, best.2)
}

fn exact_factor(mu: f64, t: u64) -> impl Fn(f64) -> Complex64 {
    move |lambda| unit_phase(mu * t as f64 * lambda)
}

fn cayley_factor(mu: f64, t: u64) -> impl Fn(f64) -> Complex64 {
    // (1 + iz) / (1 - iz) = exp(2i atan z)
    move |lambda| unit_phase(2.0 * t as f64 * (0.5 * mu * lambda).atan())
}

/// `exp(i mu t L) psi` through the spectral decomposition.
pub fn exact_evolve(psi: &WaveState, lap: &LaplacianMatrix, mu: f64, t: u64) -> Result<WaveState> {
    lap.check_shape(psi)?;
    check_mu(mu)?;
    if t == 0 {
        return Ok(psi.clone());
    }
    let spectrum = Spectrum::new(lap)?;
    let amplitudes = spectrum.apply_function(&psi.amplitudes, exact_factor(mu, t));
    Ok(WaveState {
        amplitudes,
        tick: psi.tick + t,
    })
}

/// Repeated stepping with per-graph setup done once.
#[derive(Debug, Clone)]
pub struct Evolver {
    stepper: Stepper,
    lap: LaplacianMatrix,
    spectrum: Option<Spectrum>,
}

impl Evolver {
    pub fn new(g: &RelationalGraph, stepper: Stepper) -> Result<Self> {
        let lap = laplacian(g);
        let spectrum = match stepper.scheme {
            Scheme::Exact => Some(Spectrum::new(&lap)?),
            _ => None,
        };
        Ok(Self {
            stepper,
            lap,
            spectrum,
        })
    }

    pub fn laplacian(&self) -> &LaplacianMatrix {
        &self.lap
    }

    pub fn stepper(&self) -> Stepper {
        self.stepper
    }

    pub fn step(&self, psi: &WaveState) -> Result<WaveState> {
        let mu = self.stepper.mu;
        match (self.stepper.scheme, &self.spectrum) {
            (Scheme::Euler, _) => euler_step(psi, &self.lap, mu),
            (Scheme::Cayley, _) => cayley_step(psi, &self.lap, mu),
            (Scheme::Exact, Some(spec)) => {
                self.lap.check_shape(psi)?;
                let amplitudes = spec.apply_function(&psi.amplitudes, exact_factor(mu, 1));
                Ok(WaveState {
                    amplitudes,
                    tick: psi.tick + 1,
                })
            }
            (Scheme::Exact, None) => unreachable!("exact evolver built without a spectrum"),
        }
    }

    pub fn run(&self, psi: &WaveState, ticks: u64) -> Result<WaveState> {
        let mut state = psi.clone();
        for _ in 0..ticks {
            state = self.step(&state)?;
        }
        Ok(state)
    }
}

/// Propagation kernel `K(x, y; t)` with `psi(t) = K psi(0)`. Column `y` is the
/// propagator out of point `y`.
pub fn kernel_matrix(
    g: &RelationalGraph,
    mu: f64,
    t: u64,
    scheme: Scheme,
) -> Result<DMatrix<Complex64>> {
    check_mu(mu)?;
    let lap = laplacian(g);
    let n = lap.dim();
    if n > DENSE_CAP {
        return Err(DynamicsError::ExactUnavailable { n, cap: DENSE_CAP });
    }
    match scheme {
        Scheme::Euler => {
            let step = DMatrix::identity(n, n) + lap.to_dense().map(|a| I * mu * a);
            let mut k = DMatrix::identity(n, n);
            for _ in 0..t {
                k = &step * k;
            }
            Ok(k)
        }
        Scheme::Cayley => Ok(Spectrum::new(&lap)?.matrix_function(cayley_factor(mu, t))),
        Scheme::Exact => Ok(Spectrum::new(&lap)?.matrix_function(exact_factor(mu, t))),
    }
}

/// Weights of one Euler tick read as moves on the graph: staying at `v` costs
/// `1 - i mu deg(v)`, every hop costs `i mu`.
/// Neumaier-compensated real accumulator.
#[derive(Clone, Copy, Default)]
struct CompensatedReal {
    sum: f64,
    comp: f64,
}

impl CompensatedReal {
    fn add(&mut self, x: f64) {
        let t = self.sum + x;
        self.comp += if self.sum.abs() >= x.abs() {
            (self.sum - t) + x
        } else {
            (x - t) + self.sum
        };
        self.sum = t;
    }

    /// `(hi, lo)` with `hi = fl(hi + lo)`.
    fn parts(&self) -> (f64, f64) {
        let hi = self.sum + self.comp;
        (hi, self.comp - (hi - self.sum))
    }
}

/// Neumaier-compensated complex accumulator. Walk sums add thousands of terms
/// of mixed sign, and plain summation loses the last few digits.
#[derive(Clone, Copy, Default)]
struct CompensatedSum {
    re: CompensatedReal,
    im: CompensatedReal,
}

impl CompensatedSum {
    fn add(&mut self, x: Complex64) {
        self.re.add(x.re);
        self.im.add(x.im);
    }

    fn value(&self) -> Complex64 {
        Complex64::new(self.re.sum + self.re.comp, self.im.sum + self.im.comp)
    }
}

struct WalkWeights<'a> {
    g: &'a RelationalGraph,
    stay: Vec<Complex64>,
    hop: Complex64,
}

impl<'a> WalkWeights<'a> {
    fn new(g: &'a RelationalGraph, mu: f64) -> Self {
        let stay = (0..g.n_spatial())
            .map(|v| Complex64::new(1.0, -mu * g.degree(v) as f64))
            .collect();
        Self {
            g,
            stay,
            hop: I * mu,
        }
    }

    fn walks_to(
        &self,
        v: usize,
        left: u32,
        target: usize,
        weight: Complex64,
        acc: &mut CompensatedSum,
    ) {
        if left == 0 {
            if v == target {
                acc.add(weight);
            }
            return;
        }
        self.walks_to(v, left - 1, target, weight * self.stay[v], acc);
        for &u in self.g.neighbors(v) {
            self.walks_to(u, left - 1, target, weight * self.hop, acc);
        }
    }

    fn walks_from(&self, v: usize, left: u32, weight: Complex64, acc: &mut [CompensatedSum]) {
        if left == 0 {
            acc[v].add(weight);
            return;
        }
        self.walks_from(v, left - 1, weight * self.stay[v], acc);
        for &u in self.g.neighbors(v) {
            self.walks_from(u, left - 1, weight * self.hop, acc);
        }
    }
}

fn check_enumerable(g: &RelationalGraph, t: u32) -> Result<()> {
    if t > PATH_SUM_MAX_TICKS || g.n_spatial() > PATH_SUM_MAX_VERTICES {
        return Err(DynamicsError::TooLargeForEnumeration {
            t,
            n: g.n_spatial(),
            max_ticks: PATH_SUM_MAX_TICKS,
            max_vertices: PATH_SUM_MAX_VERTICES,
        });
    }
    Ok(())
}

/// Kernel entry `K(x, y; t)` of the Euler scheme as an explicit sum over every
/// length-`t` walk from `y` to `x`.
pub fn kernel_path_sum(
    g: &RelationalGraph,
    mu: f64,
    t: u32,
    x: usize,
    y: usize,
) -> Result<Complex64> {
    check_enumerable(g, t)?;
    let n = g.n_spatial();
    for v in [x, y] {
        if v >= n {
            return Err(DynamicsError::InvalidVertex(v));
        }
    }
    let weights = WalkWeights::new(g, mu);
    let mut acc = CompensatedSum::default();
    weights.walks_to(y, t, x, Complex64::new(1.0, 0.0), &mut acc);
    Ok(acc.value())
}

/// The whole Euler kernel by walk enumeration, one walk tree per source.
pub fn path_sum_kernel(g: &RelationalGraph, mu: f64, t: u32) -> Result<DMatrix<Complex64>> {
    check_enumerable(g, t)?;
    let n = g.n_spatial();
    let weights = WalkWeights::new(g, mu);
    let mut k = DMatrix::from_element(n, n, ZERO);
    let mut column = vec![CompensatedSum::default(); n];
    for y in 0..n {
        column.fill(CompensatedSum::default());
        weights.walks_from(y, t, Complex64::new(1.0, 0.0), &mut column);
        for x in 0..n {
            k[(x, y)] = column[x].value();
        }
    }
    Ok(k)
}

/// Largest entrywise modulus of `a - b`.
pub fn max_deviation(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(p, q)| (p - q).norm())
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::relgraph::{build_lattice, from_edge_list};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn path_three_laplacian() {
        let g = from_edge_list("0 1\n1 2").unwrap();
        let expected =
            DMatrix::from_row_slice(3, 3, &[-1.0, 1.0, 0.0, 1.0, -2.0, 1.0, 0.0, 1.0, -1.0]);
        assert_eq!(laplacian(&g).to_dense(), expected);
    }

    #[test]
    fn isolated_vertex_laplacian_is_zero() {
        let g = build_lattice(&[1], false).unwrap();
        assert_eq!(laplacian(&g).to_dense(), DMatrix::zeros(1, 1));
    }

    #[test]
    fn ring_spectrum() {
        let lap = laplacian(&build_lattice(&[100], true).unwrap());
        let spec = Spectrum::new(&lap).unwrap();
        let mut got: Vec<f64> = spec.eigenvalues().iter().copied().collect();
        got.sort_by(f64::total_cmp);
        let mut want: Vec<f64> = (0..100)
            .map(|m| -(2.0 - 2.0 * wave_number(100, m).cos()))
            .collect();
        want.sort_by(f64::total_cmp);
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn euler_leaves_isolated_vertex_alone() {
        let lap = laplacian(&build_lattice(&[1], false).unwrap());
        let psi = WaveState::new(vec![c(0.3, -0.7)]).unwrap();
        let next = euler_step(&psi, &lap, 0.4).unwrap();
        assert_eq!(next.amplitudes(), psi.amplitudes());
        assert_eq!(next.tick(), 1);
    }

    #[test]
    fn euler_on_single_edge() {
        let lap = laplacian(&build_lattice(&[2], false).unwrap());
        let psi = WaveState::localized(2, 0).unwrap();
        let next = euler_step(&psi, &lap, 0.1).unwrap();
        // (I + 0.1 i L)(1, 0) with L = [[-1, 1], [1, -1]]
        assert!((next.amplitudes()[0] - c(1.0, -0.1)).norm() < 1e-15);
        assert!((next.amplitudes()[1] - c(0.0, 0.1)).norm() < 1e-15);
        assert!((next.norm_sqr() - 1.02).abs() < 1e-15);
    }

    #[test]
    fn shape_and_mu_errors() {
        let lap = laplacian(&build_lattice(&[3], false).unwrap());
        let psi = WaveState::localized(2, 0).unwrap();
        assert_eq!(
            euler_step(&psi, &lap, 0.1),
            Err(DynamicsError::ShapeError {
                expected: 3,
                found: 2
            })
        );
        assert!(cayley_step(&psi, &lap, 0.1).is_err());
        let ok = WaveState::localized(3, 0).unwrap();
        assert_eq!(
            euler_step(&ok, &lap, 0.0),
            Err(DynamicsError::InvalidMu(0.0))
        );
        assert!(Stepper::new(Scheme::Cayley, f64::NAN).is_err());
        assert!(WaveState::new(vec![c(f64::INFINITY, 0.0)]).is_err());
    }

    #[test]
    fn cayley_on_isolated_vertex_is_identity() {
        let lap = laplacian(&build_lattice(&[1], false).unwrap());
        let psi = WaveState::new(vec![c(0.6, 0.8)]).unwrap();
        assert_eq!(
            cayley_step(&psi, &lap, 0.3).unwrap().amplitudes(),
            psi.amplitudes()
        );
    }

    #[test]
    fn cayley_single_edge_is_unitary() {
        let lap = laplacian(&build_lattice(&[2], false).unwrap());
        let psi = WaveState::localized(2, 0).unwrap();
        let next = cayley_step(&psi, &lap, 0.1).unwrap();
        assert!((next.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn cayley_keeps_plane_waves() {
        let lap = laplacian(&build_lattice(&[8], true).unwrap());
        let psi = WaveState::plane_wave(8, 1);
        let next = cayley_step(&psi, &lap, 0.3).unwrap();
        assert!((psi.inner(&next).norm() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn cayley_matches_spectral_formula() {
        let g = from_edge_list("0 1\n1 2\n2 3\n3 0\n0 2\n3 4").unwrap();
        let lap = laplacian(&g);
        let psi = WaveState::new(
            (0..5)
                .map(|x| c(x as f64 * 0.1, 0.3 - 0.05 * x as f64))
                .collect(),
        )
        .unwrap();
        let via_cg = cayley_step(&psi, &lap, 0.7).unwrap();
        let via_kernel = kernel_matrix(&g, 0.7, 1, Scheme::Cayley).unwrap()
            * DVector::from_column_slice(psi.amplitudes());
        for x in 0..5 {
            assert!((via_cg.amplitudes()[x] - via_kernel[x]).norm() < 1e-13);
        }
    }

    #[test]
    fn exact_zero_ticks_is_identity() {
        let lap = laplacian(&build_lattice(&[5], true).unwrap());
        let psi = WaveState::plane_wave(5, 2);
        assert_eq!(exact_evolve(&psi, &lap, 0.5, 0).unwrap(), psi);
    }

    #[test]
    fn exact_phase_on_ring() {
        let n = 64;
        let lap = laplacian(&build_lattice(&[n], true).unwrap());
        let mu = 0.25;
        for m in [0, 1, 2, 17, 32] {
            let psi = WaveState::plane_wave(n, m);
            let next = exact_evolve(&psi, &lap, mu, 1).unwrap();
            let overlap = psi.inner(&next);
            let k = wave_number(n, m);
            assert!((overlap.arg().abs() - mu * (2.0 - 2.0 * k.cos())).abs() < 1e-10);
        }
    }

    #[test]
    fn kernel_base_cases() {
        let g = build_lattice(&[4], false).unwrap();
        let k0 = kernel_matrix(&g, 0.3, 0, Scheme::Euler).unwrap();
        assert_eq!(k0, DMatrix::identity(4, 4));
        let k0 = kernel_matrix(&g, 0.3, 0, Scheme::Exact).unwrap();
        assert!(max_deviation(&k0, &DMatrix::identity(4, 4)) < 1e-14);
        let k1 = kernel_matrix(&g, 0.3, 1, Scheme::Euler).unwrap();
        let want = DMatrix::identity(4, 4) + laplacian(&g).to_dense().map(|a| I * 0.3 * a);
        assert_eq!(k1, want);
    }

    #[test]
    fn path_sum_base_cases() {
        let g = build_lattice(&[2], false).unwrap();
        assert_eq!(kernel_path_sum(&g, 0.3, 0, 1, 1).unwrap(), c(1.0, 0.0));
        assert_eq!(kernel_path_sum(&g, 0.3, 0, 0, 1).unwrap(), ZERO);
        assert_eq!(kernel_path_sum(&g, 0.3, 1, 0, 1).unwrap(), c(0.0, 0.3));
    }

    #[test]
    fn path_sum_matches_euler_kernel_on_p3() {
        let g = from_edge_list("0 1\n1 2").unwrap();
        let k = kernel_matrix(&g, 0.2, 3, Scheme::Euler).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                let p = kernel_path_sum(&g, 0.2, 3, x, y).unwrap();
                assert!((p - k[(x, y)]).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn enumeration_guard() {
        let big = build_lattice(&[13], false).unwrap();
        assert!(matches!(
            kernel_path_sum(&big, 0.1, 2, 0, 1),
            Err(DynamicsError::TooLargeForEnumeration { .. })
        ));
        let small = build_lattice(&[3], false).unwrap();
        assert!(kernel_path_sum(&small, 0.1, 13, 0, 1).is_err());
        assert_eq!(
            kernel_path_sum(&small, 0.1, 1, 0, 5),
            Err(DynamicsError::InvalidVertex(5))
        );
    }

    #[test]
    fn exact_unavailable_above_cap() {
        let g = build_lattice(&[DENSE_CAP + 1], false).unwrap();
        let err = Evolver::new(&g, Stepper::new(Scheme::Exact, 0.1).unwrap()).unwrap_err();
        assert_eq!(
            err,
            DynamicsError::ExactUnavailable {
                n: DENSE_CAP + 1,
                cap: DENSE_CAP
            }
        );
    }

    #[test]
    fn stability_warning_threshold() {
        let lap = laplacian(&build_lattice(&[8], true).unwrap());
        assert!(euler_stability_warning(&lap, 0.1).is_none());
        assert!(euler_stability_warning(&lap, 0.2).is_some());
    }

    #[test]
    fn scheme_parsing() {
        assert_eq!("Cayley".parse::<Scheme>().unwrap(), Scheme::Cayley);
        assert_eq!(Scheme::Exact.to_string(), "exact");
        assert!("rk4".parse::<Scheme>().is_err());
    }

    #[test]
    fn csv_dump_format() {
        let psi = WaveState::new(vec![c(1.0, -0.5), c(0.0, 0.1)]).unwrap();
        let mut buf = Vec::new();
        psi.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "vertex,re,im");
        assert_eq!(lines[1], "0,1.0000000000000000e0,-5.0000000000000000e-1");
        assert_eq!(lines[2], "1,0.0000000000000000e0,1.0000000000000001e-1");
    }
}
