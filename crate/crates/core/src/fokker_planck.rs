//! Finite-volume Fokker-Planck solver in a 2D configuration space.
//!
//! Solves ∂ψ/∂t = div((−κX + ∇Π/(2We))ψ) + Δψ/(2We) with zero flux at the
//! boundary. Face fluxes are exponentially fitted (Scharfetter-Gummel):
//!
//! ```text
//! J = D/h · (B(s)ψ_L − B(−s)ψ_R),   B(s) = s/(eˢ − 1),   D = 1/(2We)
//! s = Π(X_R) − Π(X_L) − 2We·h·eᵀκX_face
//! ```
//!
//! so ψ ∝ exp(−Π + We·XᵀκX) sampled at cell centres is an exact discrete
//! stationary state whenever κ is symmetric. Time stepping is explicit
//! Euler, positive and mass conserving under `dt·max outflow rate ≤ 1`.

use rayon::prelude::*;

use crate::dumbbell::{ForceModel, StressTensor};
use crate::error::{Error, Result};
use crate::io::{Field, Table};
use crate::linalg::solve_dense;
use crate::macro_models::VelocityGradient;
use crate::scalar::Real;
use crate::tensor::{Tensor, Vector};

/// FENE cells are active when their centre lies inside √b·(1 − this).
const FENE_MASK_MARGIN: f64 = 1e-6;
/// Hookean boxes extend this many standard deviations of the widest
/// stationary Gaussian.
const HOOKEAN_STDS: f64 = 6.0;

/// Uniform n × n mesh on [−L, L]² with an activity mask.
#[derive(Clone, Debug, PartialEq)]
pub struct Mesh<T> {
    n: usize,
    half_width: T,
    h: T,
    active: Vec<bool>,
}

impl<T: Real> Mesh<T> {
    /// Full square box, every cell active.
    pub fn square(n: usize, half_width: T) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", "grid needs at least 2 cells per axis"));
        }
        if !(half_width > T::zero()) || !half_width.is_finite() {
            return Err(Error::invalid("half_width", "must be finite and > 0"));
        }
        let h = T::lit(2.0) * half_width / T::from_usize_lossy(n);
        Ok(Self {
            n,
            half_width,
            h,
            active: vec![true; n * n],
        })
    }

    /// Box [−√b, √b]² keeping cells whose centres lie inside the FENE ball.
    pub fn disk(n: usize, b: T) -> Result<Self> {
        let radius = b.sqrt();
        let mut mesh = Self::square(n, radius)?;
        let limit = radius * (T::one() - T::lit(FENE_MASK_MARGIN));
        let limit_sq = limit * limit;
        for j in 0..n {
            for i in 0..n {
                let (x, y) = mesh.center(i, j);
                mesh.active[i + n * j] = x * x + y * y < limit_sq;
            }
        }
        Ok(mesh)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn spacing(&self) -> T {
        self.h
    }

    pub fn half_width(&self) -> T {
        self.half_width
    }

    pub fn cell_area(&self) -> T {
        self.h * self.h
    }

    pub fn is_active(&self, i: usize, j: usize) -> bool {
        self.active[i + self.n * j]
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn center(&self, i: usize, j: usize) -> (T, T) {
        let half = T::lit(0.5);
        (
            -self.half_width + (T::from_usize_lossy(i) + half) * self.h,
            -self.half_width + (T::from_usize_lossy(j) + half) * self.h,
        )
    }

    fn center_vec(&self, idx: usize) -> Vector<T> {
        let (x, y) = self.center(idx % self.n, idx / self.n);
        Vector::from_slice(&[x, y])
    }
}

/// Piecewise-constant density on a [`Mesh`]. Inactive cells hold zero.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityGrid<T> {
    mesh: Mesh<T>,
    values: Vec<T>,
}

impl<T: Real> DensityGrid<T> {
    /// Samples `f` at active cell centres and normalizes to unit mass.
    pub fn from_fn(mesh: Mesh<T>, f: impl Fn(T, T) -> T) -> Result<Self> {
        let n = mesh.n;
        let mut values = vec![T::zero(); n * n];
        for j in 0..n {
            for i in 0..n {
                if mesh.is_active(i, j) {
                    let (x, y) = mesh.center(i, j);
                    let v = f(x, y);
                    if !(v >= T::zero()) || !v.is_finite() {
                        return Err(Error::invalid("density", "values must be finite and ≥ 0"));
                    }
                    values[i + n * j] = v;
                }
            }
        }
        let mut grid = Self { mesh, values };
        grid.normalize()?;
        Ok(grid)
    }

    /// Uses `values` as given (row-major, x index fastest), without
    /// normalizing.
    pub fn from_values(mesh: Mesh<T>, values: Vec<T>) -> Result<Self> {
        if values.len() != mesh.n * mesh.n {
            return Err(Error::invalid("values", "length must equal n²"));
        }
        if values.iter().any(|v| !(*v >= T::zero()) || !v.is_finite()) {
            return Err(Error::invalid("values", "density values must be finite and ≥ 0"));
        }
        Ok(Self { mesh, values })
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn value(&self, i: usize, j: usize) -> T {
        self.values[i + self.mesh.n * j]
    }

    pub fn mass(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.mesh.cell_area()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let m = self.mass();
        if !(m > T::zero()) {
            return Err(Error::invalid("density", "mass must be positive"));
        }
        let inv = T::one() / m;
        for v in &mut self.values {
            *v *= inv;
        }
        Ok(())
    }

    /// Quadrature of g(X) against ψ over active cells.
    pub fn integrate(&self, g: impl Fn(&Vector<T>) -> T) -> T {
        let mut acc = T::zero();
        for (idx, &v) in self.values.iter().enumerate() {
            if v != T::zero() {
                acc += v * g(&self.mesh.center_vec(idx));
            }
        }
        acc * self.mesh.cell_area()
    }

    /// ∫ X ⊗ X ψ dX.
    pub fn second_moments(&self) -> Tensor<T> {
        let mut m = Tensor::zeros(2);
        for i in 0..2 {
            for j in i..2 {
                let v = self.integrate(|x| x[i] * x[j]);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    /// Columns x, y, value over active cells.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["x", "y", "value"]);
        let n = self.mesh.n;
        for j in 0..n {
            for i in 0..n {
                if self.mesh.is_active(i, j) {
                    let (x, y) = self.mesh.center(i, j);
                    t.push(vec![
                        Field::Float(x.to_f64_lossy()),
                        Field::Float(y.to_f64_lossy()),
                        Field::Float(self.value(i, j).to_f64_lossy()),
                    ]);
                }
            }
        }
        t
    }
}

/// B(s) = s/(eˢ − 1), evaluated without cancellation near 0.
fn bernoulli<T: Real>(s: T) -> T {
    if s.abs() < T::lit(1e-6) {
        T::one() - s * T::lit(0.5) + s * s / T::lit(12.0)
    } else {
        s / s.exp_m1()
    }
}

/// Assembled explicit operator for fixed (model, κ, We) on a mesh.
#[derive(Clone, Debug)]
pub struct FpOperator<T> {
    mesh: Mesh<T>,
    /// For each cell, up to four (neighbour, inflow rate from neighbour).
    inflow: Vec<[(u32, T); 4]>,
    inflow_len: Vec<u8>,
    outflow: Vec<T>,
    max_outflow: T,
}

impl<T: Real> FpOperator<T> {
    pub fn new(mesh: &Mesh<T>, model: &ForceModel<T>, kappa: &VelocityGradient<T>, we: T) -> Result<Self> {
        if kappa.dim() != 2 || !kappa.is_finite() {
            return Err(Error::invalid("kappa", "need a finite 2×2 velocity gradient"));
        }
        if !(we > T::zero()) {
            return Err(Error::invalid("weissenberg", "must be > 0"));
        }
        let n = mesh.n;
        let h = mesh.h;
        let rate = T::one() / (T::lit(2.0) * we * h * h);
        let potential: Vec<T> = (0..n * n)
            .map(|idx| {
                if mesh.active[idx] {
                    model.potential(&mesh.center_vec(idx))
                } else {
                    Ok(T::zero())
                }
            })
            .collect::<Result<_>>()?;
        let mut inflow = vec![[(0u32, T::zero()); 4]; n * n];
        let mut inflow_len = vec![0u8; n * n];
        let mut outflow = vec![T::zero(); n * n];
        let two_we_h = T::lit(2.0) * we * h;
        // Faces in +x and +y from every active cell.
        for j in 0..n {
            for i in 0..n {
                let c = i + n * j;
                if !mesh.active[c] {
                    continue;
                }
                for (axis, nb) in [(0usize, (i + 1 < n).then(|| c + 1)), (1usize, (j + 1 < n).then(|| c + n))] {
                    let Some(r) = nb else { continue };
                    if !mesh.active[r] {
                        continue;
                    }
                    let mid = (mesh.center_vec(c) + mesh.center_vec(r)).scale(T::lit(0.5));
                    let drift = kappa.apply(&mid)[axis];
                    let s = potential[r] - potential[c] - two_we_h * drift;
                    let to_r = rate * bernoulli(s);
                    let to_c = rate * bernoulli(-s);
                    outflow[c] += to_r;
                    outflow[r] += to_c;
                    inflow[r][inflow_len[r] as usize] = (c as u32, to_r);
                    inflow_len[r] += 1;
                    inflow[c][inflow_len[c] as usize] = (r as u32, to_c);
                    inflow_len[c] += 1;
                }
            }
        }
        let max_outflow = outflow.iter().fold(T::zero(), |m, &v| m.max(v));
        Ok(Self {
            mesh: mesh.clone(),
            inflow,
            inflow_len,
            outflow,
            max_outflow,
        })
    }

    /// Largest dt keeping the explicit step positive.
    pub fn stable_dt(&self) -> T {
        T::one() / self.max_outflow
    }

    pub fn mesh(&self) -> &Mesh<T> {
        &self.mesh
    }

    /// One explicit Euler step.
    pub fn step(&self, psi: &DensityGrid<T>, dt: T) -> Result<DensityGrid<T>> {
        if psi.mesh != self.mesh {
            return Err(Error::invalid("psi", "density mesh differs from operator mesh"));
        }
        if !(dt > T::zero()) || dt * self.max_outflow > T::one() {
            return Err(Error::StabilityBound {
                dt: dt.to_f64_lossy(),
                bound: self.stable_dt().to_f64_lossy(),
            });
        }
        let mut next = vec![T::zero(); psi.values.len()];
        self.apply_into(&psi.values, dt, &mut next);
        Ok(DensityGrid {
            mesh: self.mesh.clone(),
            values: next,
        })
    }

    fn apply_into(&self, src: &[T], dt: T, dst: &mut [T]) {
        let n = self.mesh.n;
        dst.par_chunks_mut(n).enumerate().for_each(|(j, row)| {
            for (i, out) in row.iter_mut().enumerate() {
                let c = i + n * j;
                if !self.mesh.active[c] {
                    *out = T::zero();
                    continue;
                }
                let mut gain = T::zero();
                for &(nb, a) in &self.inflow[c][..self.inflow_len[c] as usize] {
                    gain += a * src[nb as usize];
                }
                *out = (src[c] + dt * (gain - self.outflow[c] * src[c])).max(T::zero());
            }
        });
    }

    /// Marches until the relative change per unit time drops below `tol`.
    pub fn steady_state(&self, start: &DensityGrid<T>, tol: T, max_steps: usize) -> Result<(DensityGrid<T>, usize)> {
        let dt = self.stable_dt() * T::lit(0.9);
        let mut cur = start.values.clone();
        let mut next = vec![T::zero(); cur.len()];
        for step in 1..=max_steps {
            self.apply_into(&cur, dt, &mut next);
            let mut change = T::zero();
            let mut peak = T::zero();
            for (a, b) in cur.iter().zip(&next) {
                change = change.max((*a - *b).abs());
                peak = peak.max(b.abs());
            }
            std::mem::swap(&mut cur, &mut next);
            if change / (peak * dt) < tol {
                let mut grid = DensityGrid {
                    mesh: self.mesh.clone(),
                    values: cur,
                };
                grid.normalize()?;
                return Ok((grid, step));
            }
        }
        Err(Error::NoStationaryState(format!(
            "relative change still above {} after {max_steps} steps",
            tol.to_f64_lossy()
        )))
    }
}

/// Convenience single step that assembles the operator each call.
pub fn fp_step<T: Real>(
    psi: &DensityGrid<T>,
    model: &ForceModel<T>,
    kappa: &VelocityGradient<T>,
    we: T,
    dt: T,
) -> Result<DensityGrid<T>> {
    FpOperator::new(psi.mesh(), model, kappa, we)?.step(psi, dt)
}

/// Stationary covariance C of the Hookean dynamics:
/// κC + Cκᵀ − C/We + I/We = 0 (equivalently the steady Oldroyd-B
/// conformation). Fails when the linear flow is too strong.
pub fn hookean_stationary_covariance<T: Real>(kappa: &VelocityGradient<T>, we: T) -> Result<Tensor<T>> {
    // Stability of dX = (κ − I/(2We))X dt + ...: eigenvalues of the drift
    // matrix must have negative real part.
    let m = *kappa - Tensor::identity(2).scale(T::lit(0.5) / we);
    let tr = m.trace();
    let det = m.determinant();
    if !(tr < T::zero() && det > T::zero()) {
        return Err(Error::NoStationaryState(
            "Hookean dynamics is unstable for this velocity gradient".into(),
        ));
    }
    // Unknowns (c00, c01, c11).
    let k = kappa;
    let iw = T::one() / we;
    let mat = [
        T::lit(2.0) * k[(0, 0)] - iw,
        T::lit(2.0) * k[(0, 1)],
        T::zero(),
        k[(1, 0)],
        k[(0, 0)] + k[(1, 1)] - iw,
        k[(0, 1)],
        T::zero(),
        T::lit(2.0) * k[(1, 0)],
        T::lit(2.0) * k[(1, 1)] - iw,
    ];
    let rhs = [-iw, T::zero(), -iw];
    let c = solve_dense(3, &mat, &rhs)?;
    Ok(Tensor::from_rows(&[&[c[0], c[1]], &[c[1], c[2]]]))
}

/// Mesh appropriate for the model: a 6σ box for Hookean (σ from the
/// stationary covariance for κ), the √b disk for FENE.
pub fn mesh_for<T: Real>(model: &ForceModel<T>, kappa: &VelocityGradient<T>, we: T, n: usize) -> Result<Mesh<T>> {
    match *model {
        ForceModel::Hookean => {
            let c = hookean_stationary_covariance(kappa, we)?;
            let (vals, _) = c.symmetric_eigen();
            let widest = vals.as_slice().iter().fold(T::zero(), |m, &v| m.max(v));
            Mesh::square(n, T::lit(HOOKEAN_STDS) * widest.sqrt())
        }
        ForceModel::Fene { b } => Mesh::disk(n, b),
    }
}

/// Stationary density and whether it came from the closed form.
#[derive(Clone, Debug)]
pub struct StationaryDensity<T> {
    pub density: DensityGrid<T>,
    pub analytic: bool,
    /// Explicit steps taken when the density had to be computed.
    pub steps: usize,
}

/// Closed-form stationary density exp(−Π + We·XᵀκX) for symmetric κ.
pub fn symmetric_stationary<T: Real>(
    mesh: Mesh<T>,
    model: &ForceModel<T>,
    kappa_sym: &VelocityGradient<T>,
    we: T,
) -> Result<DensityGrid<T>> {
    if let ForceModel::Hookean = model {
        let (vals, _) = kappa_sym.symmetric_eigen();
        let top = vals.as_slice().iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        if !(top < T::lit(0.5) / we) {
            return Err(Error::NoStationaryState(format!(
                "symmetric velocity gradient eigenvalue {} is not below 1/(2We)",
                top.to_f64_lossy()
            )));
        }
    }
    // Shift the exponent by its maximum to avoid overflow.
    let n = mesh.n;
    let mut expo = vec![T::neg_infinity(); n * n];
    for (idx, e) in expo.iter_mut().enumerate() {
        if mesh.active[idx] {
            let x = mesh.center_vec(idx);
            *e = -model.potential(&x)? + we * kappa_sym.quadratic_form(&x);
        }
    }
    let top = expo.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let values = expo.iter().map(|&e| if e.is_finite() { (e - top).exp() } else { T::zero() }).collect();
    let mut grid = DensityGrid::from_values(mesh, values)?;
    grid.normalize()?;
    Ok(grid)
}

/// Stationary density on an `n × n` grid: closed form for symmetric κ,
/// otherwise explicit time marching from the closed form of the symmetric
/// part until the relative change per unit time is below 1e−10.
pub fn stationary_density<T: Real>(
    model: &ForceModel<T>,
    kappa: &VelocityGradient<T>,
    we: T,
    n: usize,
) -> Result<StationaryDensity<T>> {
    let sym = kappa.symmetric_part();
    let symmetric = kappa.max_abs_asymmetry() == T::zero();
    if symmetric {
        if let ForceModel::Hookean = model {
            // Reports the eigenvalue condition before the covariance solve.
            symmetric_stationary(Mesh::square(2, T::one())?, model, &sym, we)?;
        }
        let mesh = mesh_for(model, kappa, we, n)?;
        return Ok(StationaryDensity {
            density: symmetric_stationary(mesh, model, &sym, we)?,
            analytic: true,
            steps: 0,
        });
    }
    let mesh = mesh_for(model, kappa, we, n)?;
    let start = symmetric_stationary(mesh.clone(), model, &sym, we)
        .or_else(|_| symmetric_stationary(mesh.clone(), model, &Tensor::zeros(2), we))?;
    let op = FpOperator::new(&mesh, model, kappa, we)?;
    let (density, steps) = op.steady_state(&start, T::lit(1e-10), 50_000_000)?;
    Ok(StationaryDensity {
        density,
        analytic: false,
        steps,
    })
}

fn check_pair<T: Real>(psi: &DensityGrid<T>, psi_inf: &DensityGrid<T>) -> Result<()> {
    if psi.mesh != psi_inf.mesh {
        return Err(Error::invalid("psi", "densities live on different meshes"));
    }
    for (idx, (&p, &q)) in psi.values.iter().zip(&psi_inf.values).enumerate() {
        if p > T::zero() && !(q > T::zero()) {
            return Err(Error::SupportViolation { cell: idx });
        }
    }
    Ok(())
}

/// H(ψ|ψ∞) = Σ ψ ln(ψ/ψ∞)·area with 0·ln 0 = 0.
pub fn relative_entropy<T: Real>(psi: &DensityGrid<T>, psi_inf: &DensityGrid<T>) -> Result<T> {
    check_pair(psi, psi_inf)?;
    let mut acc = T::zero();
    for (&p, &q) in psi.values.iter().zip(&psi_inf.values) {
        if p > T::zero() {
            acc += p * (p / q).ln();
        }
    }
    Ok(acc * psi.mesh.cell_area())
}

/// Σ |ψ − ψ∞|·area.
pub fn l1_distance<T: Real>(psi: &DensityGrid<T>, psi_inf: &DensityGrid<T>) -> Result<T> {
    if psi.mesh != psi_inf.mesh {
        return Err(Error::invalid("psi", "densities live on different meshes"));
    }
    let acc: T = psi.values.iter().zip(&psi_inf.values).map(|(&p, &q)| (p - q).abs()).sum();
    Ok(acc * psi.mesh.cell_area())
}

/// Σ |∇ ln(ψ/ψ∞)|² ψ·area. Derivatives are centred where both neighbours
/// are active and one-sided otherwise.
pub fn fisher_information<T: Real>(psi: &DensityGrid<T>, psi_inf: &DensityGrid<T>) -> Result<T> {
    check_pair(psi, psi_inf)?;
    let mesh = &psi.mesh;
    let n = mesh.n;
    let usable = |idx: usize| mesh.active[idx] && psi.values[idx] > T::zero();
    let log_ratio = |idx: usize| (psi.values[idx] / psi_inf.values[idx]).ln();
    let mut acc = T::zero();
    for j in 0..n {
        for i in 0..n {
            let c = i + n * j;
            if !usable(c) {
                continue;
            }
            let mut g2 = T::zero();
            for axis in 0..2 {
                let (pos, stride, len) = if axis == 0 { (i, 1, n) } else { (j, n, n) };
                let lo = (pos > 0 && usable(c - stride)).then(|| c - stride);
                let hi = (pos + 1 < len && usable(c + stride)).then(|| c + stride);
                let d = match (lo, hi) {
                    (Some(l), Some(r)) => (log_ratio(r) - log_ratio(l)) / (T::lit(2.0) * mesh.h),
                    (None, Some(r)) => (log_ratio(r) - log_ratio(c)) / mesh.h,
                    (Some(l), None) => (log_ratio(c) - log_ratio(l)) / mesh.h,
                    (None, None) => T::zero(),
                };
                g2 += d * d;
            }
            acc += g2 * psi.values[c];
        }
    }
    Ok(acc * mesh.cell_area())
}

/// Entropy diagnostics of ψ against ψ∞.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropyReport<T> {
    pub relative_entropy: T,
    pub fisher_information: T,
    pub l1_distance: T,
}

impl<T: Real> EntropyReport<T> {
    /// Csiszar-Kullback: ‖ψ − ψ∞‖₁ ≤ √(2H).
    pub fn csiszar_kullback_holds(&self) -> bool {
        self.l1_distance <= (T::lit(2.0) * self.relative_entropy.max(T::zero())).sqrt() * (T::one() + T::lit(1e-12))
    }
}

pub fn entropy_report<T: Real>(psi: &DensityGrid<T>, psi_inf: &DensityGrid<T>) -> Result<EntropyReport<T>> {
    Ok(EntropyReport {
        relative_entropy: relative_entropy(psi, psi_inf)?,
        fisher_information: fisher_information(psi, psi_inf)?,
        l1_distance: l1_distance(psi, psi_inf)?,
    })
}

/// One row of an entropy time series.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EntropySample<T> {
    pub t: T,
    pub report: EntropyReport<T>,
}

/// Relaxation run recording H after every step and the full report every
/// `every` steps (and at the end).
#[derive(Clone, Debug)]
pub struct Relaxation<T> {
    pub dt: T,
    /// H after each step, starting with the initial state.
    pub entropy: Vec<T>,
    pub samples: Vec<EntropySample<T>>,
    pub final_density: DensityGrid<T>,
}

impl<T: Real> Relaxation<T> {
    /// Columns t, H, Fisher, L1.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["t", "H", "Fisher", "L1"]);
        for s in &self.samples {
            t.push(vec![
                s.t.to_f64_lossy().into(),
                s.report.relative_entropy.to_f64_lossy().into(),
                s.report.fisher_information.to_f64_lossy().into(),
                s.report.l1_distance.to_f64_lossy().into(),
            ]);
        }
        t
    }
}

/// Evolves `psi0` with `op` for `steps` steps of size `dt`.
pub fn relax<T: Real>(
    op: &FpOperator<T>,
    psi0: &DensityGrid<T>,
    psi_inf: &DensityGrid<T>,
    dt: T,
    steps: usize,
    every: usize,
) -> Result<Relaxation<T>> {
    let every = every.max(1);
    let mut psi = psi0.clone();
    let mut entropy = vec![relative_entropy(&psi, psi_inf)?];
    let mut samples = vec![EntropySample {
        t: T::zero(),
        report: entropy_report(&psi, psi_inf)?,
    }];
    for k in 1..=steps {
        psi = op.step(&psi, dt)?;
        entropy.push(relative_entropy(&psi, psi_inf)?);
        if k % every == 0 || k == steps {
            samples.push(EntropySample {
                t: T::from_usize_lossy(k) * dt,
                report: entropy_report(&psi, psi_inf)?,
            });
        }
    }
    Ok(Relaxation {
        dt,
        entropy,
        samples,
        final_density: psi,
    })
}

/// Least-squares slope of ln y against t over points with y > floor.
pub fn fitted_decay_rate<T: Real>(t: &[T], y: &[T], floor: T) -> Option<T> {
    let pts: Vec<(T, T)> = t.iter().zip(y).filter(|(_, v)| **v > floor).map(|(a, v)| (*a, v.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = T::from_usize_lossy(pts.len());
    let mt = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    (sxx > T::zero()).then(|| -sxy / sxx)
}

/// Bakry-Emery constant: smallest Hessian eigenvalue of Π over a
/// (2m + 1)² lattice covering the admissible region (origin included).
pub fn lsi_constant_bakry_emery<T: Real>(model: &ForceModel<T>) -> T {
    match *model {
        ForceModel::Hookean => T::one(),
        ForceModel::Fene { b } => {
            let m = 50usize;
            let reach = b.sqrt() * T::lit(0.999);
            let mut best = T::infinity();
            for j in 0..=2 * m {
                for i in 0..=2 * m {
                    let x = reach * (T::from_usize_lossy(i) - T::from_usize_lossy(m)) / T::from_usize_lossy(m);
                    let y = reach * (T::from_usize_lossy(j) - T::from_usize_lossy(m)) / T::from_usize_lossy(m);
                    let v = Vector::from_slice(&[x, y]);
                    if let Ok(h) = model.hessian(&v) {
                        best = best.min(h.min_eigenvalue());
                    }
                }
            }
            best
        }
    }
}

/// Log-Sobolev constant after a bounded perturbation: ρ·exp(−osc).
pub fn holley_stroock_bound<T: Real>(rho: T, osc: T) -> Result<T> {
    if !(rho > T::zero()) {
        return Err(Error::invalid("rho", "must be > 0"));
    }
    if !(osc >= T::zero()) {
        return Err(Error::invalid("osc", "must be ≥ 0"));
    }
    Ok(rho * (-osc).exp())
}

/// τ = (ε/We)(∫ X ⊗ F(X) ψ dX − I), symmetrized.
pub fn stress_from_density<T: Real>(psi: &DensityGrid<T>, model: &ForceModel<T>, eps: T, we: T) -> Result<StressTensor<T>> {
    let mut m = Tensor::zeros(2);
    for (idx, &v) in psi.values.iter().enumerate() {
        if psi.mesh.active[idx] && v != T::zero() {
            let x = psi.mesh.center_vec(idx);
            let f = model.force(&x)?;
            m += x.outer(&f).scale(v);
        }
    }
    let m = m.scale(psi.mesh.cell_area());
    Ok(StressTensor::new((m - Tensor::identity(2)).scale(eps / we)))
}

/// Outcome of the stationary gradient bound comparison.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradientBoundReport<T> {
    /// max over the grid of |∇ln(ψ∞e^Π) − 2κˢX|.
    pub lhs: T,
    /// 2√b·|[κ, κᵀ]|/(1 − 2|κˢ|) with spectral norms.
    pub rhs: T,
    pub tolerance: T,
    pub pass: bool,
}

/// Compares the log-density gradient of a FENE stationary state (We = 1)
/// with its theoretical bound. Gradients are centred differences at cells
/// whose four neighbours are active.
pub fn stationary_gradient_bound_check<T: Real>(
    psi_inf: &DensityGrid<T>,
    model: &ForceModel<T>,
    kappa: &VelocityGradient<T>,
    tolerance: T,
) -> Result<GradientBoundReport<T>> {
    let ForceModel::Fene { b } = *model else {
        return Err(Error::OutOfRegime("gradient bound applies to FENE dumbbells".into()));
    };
    let ks = kappa.symmetric_part();
    let ks_norm = ks.spectral_norm();
    if !(ks_norm < T::lit(0.5)) {
        return Err(Error::OutOfRegime(format!(
            "|κˢ| = {} is not below 1/2",
            ks_norm.to_f64_lossy()
        )));
    }
    let comm = kappa.commutator(&kappa.transpose()).spectral_norm();
    let rhs = T::lit(2.0) * b.sqrt() * comm / (T::one() - T::lit(2.0) * ks_norm);
    let mesh = &psi_inf.mesh;
    let n = mesh.n;
    let mut g = vec![T::nan(); n * n];
    for (idx, gv) in g.iter_mut().enumerate() {
        if mesh.active[idx] && psi_inf.values[idx] > T::zero() {
            *gv = psi_inf.values[idx].ln() + model.potential(&mesh.center_vec(idx))?;
        }
    }
    let mut lhs = T::zero();
    let two_h = T::lit(2.0) * mesh.h;
    for j in 1..n - 1 {
        for i in 1..n - 1 {
            let c = i + n * j;
            let nb = [c - 1, c + 1, c - n, c + n];
            if !g[c].is_finite() || nb.iter().any(|&k| !g[k].is_finite()) {
                continue;
            }
            let x = mesh.center_vec(c);
            let target = ks.apply(&x).scale(T::lit(2.0));
            let gx = (g[c + 1] - g[c - 1]) / two_h - target[0];
            let gy = (g[c + n] - g[c - n]) / two_h - target[1];
            lhs = lhs.max((gx * gx + gy * gy).sqrt());
        }
    }
    Ok(GradientBoundReport {
        lhs,
        rhs,
        tolerance,
        pass: lhs <= rhs + tolerance,
    })
}
