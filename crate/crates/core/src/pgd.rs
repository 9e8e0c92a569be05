//! Greedy rank-1 (proper generalized decomposition) solver for the Poisson
//! problem −Δu = f on (0,1)² with homogeneous Dirichlet data.
//!
//! Each greedy step minimizes the Dirichlet energy
//! ½·a(u_n + r⊗s) − (f, u_n + r⊗s) over rank-1 corrections by alternating
//! tridiagonal solves. Residual norms are measured in the discrete H⁻¹ norm
//! through a sine-transform diagonalisation of the 5-point Laplacian.

use crate::error::{Error, Result};
use crate::io::{Field, Table};
use crate::linalg::Tridiagonal;
use crate::scalar::Real;

/// Interior nodes of a uniform grid on the unit square.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProductGrid<T> {
    pub nx: usize,
    pub ny: usize,
    pub hx: T,
    pub hy: T,
}

impl<T: Real> ProductGrid<T> {
    pub fn unit_square(nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::invalid("nx", "need at least 2 interior nodes per direction"));
        }
        Ok(Self {
            nx,
            ny,
            hx: T::one() / T::from_usize_lossy(nx + 1),
            hy: T::one() / T::from_usize_lossy(ny + 1),
        })
    }

    pub fn x(&self, i: usize) -> T {
        T::from_usize_lossy(i + 1) * self.hx
    }

    pub fn y(&self, j: usize) -> T {
        T::from_usize_lossy(j + 1) * self.hy
    }

    /// Samples `f` at interior nodes; index `i·ny + j`.
    pub fn sample(&self, f: impl Fn(T, T) -> T) -> Vec<T> {
        let mut v = Vec::with_capacity(self.nx * self.ny);
        for i in 0..self.nx {
            for j in 0..self.ny {
                v.push(f(self.x(i), self.y(j)));
            }
        }
        v
    }

    /// Discrete L² inner product hx·hy·Σ u·v.
    pub fn inner(&self, u: &[T], v: &[T]) -> T {
        u.iter().zip(v).map(|(&a, &b)| a * b).sum::<T>() * self.hx * self.hy
    }

    pub fn l2_norm(&self, u: &[T]) -> T {
        self.inner(u, u).sqrt()
    }
}

/// 1D stiffness (1/h²)·tridiag(−1, 2, −1) applied to `v`.
fn stiffness_apply<T: Real>(v: &[T], h: T) -> Vec<T> {
    let n = v.len();
    let inv = T::one() / (h * h);
    (0..n)
        .map(|i| {
            let mut acc = T::lit(2.0) * v[i];
            if i > 0 {
                acc -= v[i - 1];
            }
            if i + 1 < n {
                acc -= v[i + 1];
            }
            acc * inv
        })
        .collect()
}

fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// −Δ_h applied to a grid function.
pub fn apply_laplacian<T: Real>(grid: &ProductGrid<T>, u: &[T]) -> Vec<T> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (ix, iy) = (T::one() / (grid.hx * grid.hx), T::one() / (grid.hy * grid.hy));
    let mut out = vec![T::zero(); nx * ny];
    for i in 0..nx {
        for j in 0..ny {
            let c = u[i * ny + j];
            let mut vx = T::lit(2.0) * c;
            if i > 0 {
                vx -= u[(i - 1) * ny + j];
            }
            if i + 1 < nx {
                vx -= u[(i + 1) * ny + j];
            }
            let mut vy = T::lit(2.0) * c;
            if j > 0 {
                vy -= u[i * ny + j - 1];
            }
            if j + 1 < ny {
                vy -= u[i * ny + j + 1];
            }
            out[i * ny + j] = vx * ix + vy * iy;
        }
    }
    out
}

/// Exact solver for −Δ_h w = f via the discrete sine transform.
#[derive(Clone, Debug)]
pub struct PoissonSolver<T> {
    grid: ProductGrid<T>,
    sx: Vec<T>,
    sy: Vec<T>,
    lx: Vec<T>,
    ly: Vec<T>,
}

fn sine_basis<T: Real>(n: usize, h: T) -> (Vec<T>, Vec<T>) {
    let np1 = T::from_usize_lossy(n + 1);
    let norm = (T::lit(2.0) / np1).sqrt();
    let pi = T::PI();
    let mut s = vec![T::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let arg = pi * T::from_usize_lossy((i + 1) * (k + 1)) / np1;
            s[i * n + k] = norm * arg.sin();
        }
    }
    let lam = (0..n)
        .map(|k| {
            let sn = (pi * T::from_usize_lossy(k + 1) / (T::lit(2.0) * np1)).sin();
            T::lit(4.0) * sn * sn / (h * h)
        })
        .collect();
    (s, lam)
}

impl<T: Real> PoissonSolver<T> {
    pub fn new(grid: &ProductGrid<T>) -> Self {
        let (sx, lx) = sine_basis(grid.nx, grid.hx);
        let (sy, ly) = sine_basis(grid.ny, grid.hy);
        Self {
            grid: *grid,
            sx,
            sy,
            lx,
            ly,
        }
    }

    /// Returns Sx·M·Sy for an nx × ny matrix M (both S symmetric).
    fn transform(&self, m: &[T]) -> Vec<T> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut tmp = vec![T::zero(); nx * ny];
        for i in 0..nx {
            for k in 0..nx {
                let s = self.sx[i * nx + k];
                if s == T::zero() {
                    continue;
                }
                for j in 0..ny {
                    tmp[i * ny + j] += s * m[k * ny + j];
                }
            }
        }
        let mut out = vec![T::zero(); nx * ny];
        for i in 0..nx {
            for l in 0..ny {
                let mut acc = T::zero();
                for j in 0..ny {
                    acc += tmp[i * ny + j] * self.sy[j * ny + l];
                }
                out[i * ny + l] = acc;
            }
        }
        out
    }

    pub fn solve(&self, f: &[T]) -> Vec<T> {
        let ny = self.grid.ny;
        let mut hat = self.transform(f);
        for (idx, v) in hat.iter_mut().enumerate() {
            *v /= self.lx[idx / ny] + self.ly[idx % ny];
        }
        self.transform(&hat)
    }

    /// √(hx·hy·Σ f·w) with −Δ_h w = f.
    pub fn h_minus1_norm(&self, f: &[T]) -> T {
        let w = self.solve(f);
        self.grid.inner(f, &w).max(T::zero()).sqrt()
    }
}

/// Discrete H⁻¹ norm of a grid function.
pub fn h_minus1_norm<T: Real>(f: &[T], grid: &ProductGrid<T>) -> T {
    PoissonSolver::new(grid).h_minus1_norm(f)
}

/// Outcome of one alternating rank-1 solve.
#[derive(Clone, Debug, PartialEq)]
pub struct RankOne<T> {
    pub r: Vec<T>,
    pub s: Vec<T>,
    pub sweeps: usize,
    /// Relative residual of the r-equation at the returned pair.
    pub euler_residual: T,
    /// The right-hand side vanished; the pair is zero.
    pub zero_rhs: bool,
    /// The sweep budget ran out before both stopping tests passed.
    pub not_converged: bool,
}

/// Energy ½a(r⊗s, r⊗s) − (F, r⊗s) of a rank-1 candidate.
pub fn rank_one_energy<T: Real>(f: &[T], grid: &ProductGrid<T>, r: &[T], s: &[T]) -> T {
    let (ss, rr) = (dot(s, s), dot(r, r));
    let rkr = dot(r, &stiffness_apply(r, grid.hx));
    let sks = dot(s, &stiffness_apply(s, grid.hy));
    let fs = mat_vec(f, grid.nx, grid.ny, s);
    grid.hx * grid.hy * (T::lit(0.5) * (rkr * ss + rr * sks) - dot(r, &fs))
}

fn mat_vec<T: Real>(f: &[T], nx: usize, ny: usize, s: &[T]) -> Vec<T> {
    (0..nx).map(|i| dot(&f[i * ny..(i + 1) * ny], s)).collect()
}

fn mat_t_vec<T: Real>(f: &[T], nx: usize, ny: usize, r: &[T]) -> Vec<T> {
    let mut out = vec![T::zero(); ny];
    for i in 0..nx {
        let ri = r[i];
        for j in 0..ny {
            out[j] += f[i * ny + j] * ri;
        }
    }
    out
}

/// Solves [α·K_h + β·I]x = rhs.
fn shifted_solve<T: Real>(n: usize, h: T, alpha: T, beta: T, rhs: &[T]) -> Result<Vec<T>> {
    let inv = alpha / (h * h);
    Tridiagonal::constant(n, T::lit(2.0) * inv + beta, -inv).solve(rhs)
}

/// Relative residual of [(sᵀs)Kx + (sᵀKy s)I]r = Fs.
fn r_residual<T: Real>(f: &[T], grid: &ProductGrid<T>, r: &[T], s: &[T]) -> T {
    let fs = mat_vec(f, grid.nx, grid.ny, s);
    let ss = dot(s, s);
    let sks = dot(s, &stiffness_apply(s, grid.hy));
    let kr = stiffness_apply(r, grid.hx);
    let num: T = kr
        .iter()
        .zip(r)
        .zip(&fs)
        .map(|((&k, &rv), &b)| {
            let e = ss * k + sks * rv - b;
            e * e
        })
        .sum();
    let den = dot(&fs, &fs);
    if den > T::zero() {
        (num / den).sqrt()
    } else {
        num.sqrt()
    }
}

/// Rank-1 minimizer of the Dirichlet energy for right-hand side `f` by
/// alternating tridiagonal solves. Stops when both the relative energy
/// change and the Euler residual fall below `als_tol`.
pub fn pgd_iteration<T: Real>(f: &[T], grid: &ProductGrid<T>, als_tol: T, als_max: usize) -> Result<RankOne<T>> {
    let (nx, ny) = (grid.nx, grid.ny);
    if f.len() != nx * ny {
        return Err(Error::invalid("f", "length must equal nx·ny"));
    }
    if f.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("f", "right-hand side must be finite"));
    }
    if f.iter().all(|&v| v == T::zero()) {
        return Ok(RankOne {
            r: vec![T::zero(); nx],
            s: vec![T::zero(); ny],
            sweeps: 0,
            euler_residual: T::zero(),
            zero_rhs: true,
            not_converged: false,
        });
    }
    // One power-iteration step towards the dominant right singular vector.
    let mut s = mat_t_vec(f, nx, ny, &mat_vec(f, nx, ny, &vec![T::one(); ny]));
    if dot(&s, &s) == T::zero() {
        let (imax, _) = (0..nx)
            .map(|i| (i, dot(&f[i * ny..(i + 1) * ny], &f[i * ny..(i + 1) * ny])))
            .fold((0, T::zero()), |best, cur| if cur.1 > best.1 { cur } else { best });
        s = f[imax * ny..(imax + 1) * ny].to_vec();
    }
    let mut r = vec![T::zero(); nx];
    let mut energy = T::zero();
    let mut sweeps = 0;
    let mut residual = T::infinity();
    let mut converged = false;
    while sweeps < als_max {
        sweeps += 1;
        let ss = dot(&s, &s);
        let sks = dot(&s, &stiffness_apply(&s, grid.hy));
        r = shifted_solve(nx, grid.hx, ss, sks, &mat_vec(f, nx, ny, &s))?;
        let rr = dot(&r, &r);
        if rr == T::zero() {
            break;
        }
        let rkr = dot(&r, &stiffness_apply(&r, grid.hx));
        s = shifted_solve(ny, grid.hy, rr, rkr, &mat_t_vec(f, nx, ny, &r))?;
        let e = rank_one_energy(f, grid, &r, &s);
        residual = r_residual(f, grid, &r, &s);
        let change = (e - energy).abs() / e.abs().max(T::min_positive_value());
        energy = e;
        if sweeps > 1 && change < als_tol && residual < als_tol {
            converged = true;
            break;
        }
    }
    let norm = (dot(&r, &r) * grid.hx).sqrt();
    if norm > T::zero() {
        for v in &mut r {
            *v /= norm;
        }
        for v in &mut s {
            *v *= norm;
        }
    }
    Ok(RankOne {
        r,
        s,
        sweeps,
        euler_residual: residual,
        zero_rhs: false,
        not_converged: !converged,
    })
}

/// Greedy decomposition u ≈ Σ r_k ⊗ s_k.
#[derive(Clone, Debug, PartialEq)]
pub struct PgdSolution<T> {
    pub grid: ProductGrid<T>,
    pub terms: Vec<(Vec<T>, Vec<T>)>,
    /// H⁻¹ norm of f_n for n = 0, 1, …
    pub residual_history: Vec<T>,
    /// Tolerance reached before the term budget ran out.
    pub converged: bool,
    /// Some inner alternating solve hit its sweep budget.
    pub inner_not_converged: bool,
}

impl<T: Real> PgdSolution<T> {
    /// Σ_{k<n} r_k ⊗ s_k on the grid.
    pub fn partial_sum(&self, n: usize) -> Vec<T> {
        let (nx, ny) = (self.grid.nx, self.grid.ny);
        let mut u = vec![T::zero(); nx * ny];
        for (r, s) in self.terms.iter().take(n) {
            add_outer(&mut u, r, s, ny);
        }
        u
    }

    pub fn reconstruct(&self) -> Vec<T> {
        self.partial_sum(self.terms.len())
    }

    /// Columns term, axis, index, coordinate, value.
    pub fn terms_table(&self) -> Table {
        let mut t = Table::new(["term", "axis", "index", "coordinate", "value"]);
        for (k, (r, s)) in self.terms.iter().enumerate() {
            for (i, v) in r.iter().enumerate() {
                t.push(vec![k.into(), "x".into(), i.into(), self.grid.x(i).to_f64_lossy().into(), v.to_f64_lossy().into()]);
            }
            for (j, v) in s.iter().enumerate() {
                t.push(vec![k.into(), "y".into(), j.into(), self.grid.y(j).to_f64_lossy().into(), v.to_f64_lossy().into()]);
            }
        }
        t
    }

    /// Columns iteration, residual_h_minus1.
    pub fn residual_table(&self) -> Table {
        let mut t = Table::new(["iteration", "residual_h_minus1"]);
        for (n, v) in self.residual_history.iter().enumerate() {
            t.push(vec![Field::from(n), v.to_f64_lossy().into()]);
        }
        t
    }
}

fn add_outer<T: Real>(u: &mut [T], r: &[T], s: &[T], ny: usize) {
    for (i, &ri) in r.iter().enumerate() {
        for (j, &sj) in s.iter().enumerate() {
            u[i * ny + j] += ri * sj;
        }
    }
}

/// Greedy loop: adds rank-1 terms until ‖f_n‖_{H⁻¹} < `eps_tol` or
/// `n_max` terms, with f_n = f + Δ_h Σ r_k ⊗ s_k.
pub fn pgd_solve<T: Real>(
    f: &[T],
    grid: &ProductGrid<T>,
    eps_tol: T,
    n_max: usize,
    als_tol: T,
    als_max: usize,
) -> Result<PgdSolution<T>> {
    if !(eps_tol > T::zero()) {
        return Err(Error::invalid("tol", "must be > 0"));
    }
    let poisson = PoissonSolver::new(grid);
    let ny = grid.ny;
    let mut residual = f.to_vec();
    let mut sol = PgdSolution {
        grid: *grid,
        terms: Vec::new(),
        residual_history: vec![poisson.h_minus1_norm(&residual)],
        converged: false,
        inner_not_converged: false,
    };
    while sol.terms.len() < n_max {
        if *sol.residual_history.last().unwrap() < eps_tol {
            sol.converged = true;
            return Ok(sol);
        }
        let pair = pgd_iteration(&residual, grid, als_tol, als_max)?;
        if pair.zero_rhs {
            sol.converged = true;
            return Ok(sol);
        }
        sol.inner_not_converged |= pair.not_converged;
        let mut term = vec![T::zero(); grid.nx * ny];
        add_outer(&mut term, &pair.r, &pair.s, ny);
        let lap = apply_laplacian(grid, &term);
        for (f_n, l) in residual.iter_mut().zip(&lap) {
            *f_n -= *l;
        }
        sol.terms.push((pair.r, pair.s));
        sol.residual_history.push(poisson.h_minus1_norm(&residual));
    }
    sol.converged = *sol.residual_history.last().unwrap() < eps_tol;
    Ok(sol)
}

/// Energy-norm errors √a(u − u_n, u − u_n) of the partial sums against a
/// reference solution, for n = 1..=terms.
pub fn energy_errors<T: Real>(solution: &PgdSolution<T>, reference: &[T]) -> Vec<T> {
    let grid = &solution.grid;
    let mut u = vec![T::zero(); grid.nx * grid.ny];
    let mut out = Vec::with_capacity(solution.terms.len());
    for (r, s) in &solution.terms {
        add_outer(&mut u, r, s, grid.ny);
        let e: Vec<T> = reference.iter().zip(&u).map(|(&a, &b)| a - b).collect();
        let ae = grid.inner(&e, &apply_laplacian(grid, &e));
        out.push(ae.max(T::zero()).sqrt());
    }
    out
}

/// Fitted log-log slope of the energy error against the term count.
#[derive(Clone, Debug, PartialEq)]
pub struct RateReport<T> {
    pub errors: Vec<T>,
    /// `None` when fewer than 8 terms are above the floor.
    pub slope: Option<T>,
    /// The error hit `floor` before enough terms were available.
    pub floor_reached: bool,
}

/// Least-squares slope of ln(error) against ln(n), using terms whose error
/// exceeds `floor`. Needs at least 8 such terms.
pub fn convergence_rate_report<T: Real>(solution: &PgdSolution<T>, reference: &[T], floor: T) -> RateReport<T> {
    let errors = energy_errors(solution, reference);
    let pts: Vec<(T, T)> = errors
        .iter()
        .enumerate()
        .take_while(|(_, &e)| e > floor)
        .map(|(k, &e)| (T::from_usize_lossy(k + 1).ln(), e.ln()))
        .collect();
    if pts.len() < 8 {
        return RateReport {
            errors,
            slope: None,
            floor_reached: true,
        };
    }
    let n = T::from_usize_lossy(pts.len());
    let mx = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxy: T = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: T = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    RateReport {
        errors,
        slope: Some(sxy / sxx),
        floor_reached: false,
    }
}
