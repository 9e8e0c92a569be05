//! Dumbbell springs, Euler-Maruyama ensembles and the Kramers stress.
//!
//! Nondimensional dumbbell dynamics under a homogeneous velocity gradient κ:
//!
//! ```text
//! dX = (κX − F(X)/(2We)) dt + dW/√We
//! τ  = (ε/We) (E[X ⊗ F(X)] − I)
//! ```

use rand::RngCore;
use rand_distr::{Beta, Distribution};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::io::{Field, Table};
use crate::rng::{self, NoiseKey, NoiseSource, Purpose};
use crate::scalar::Real;
use crate::tensor::{Tensor, Vector, MAX_DIM};

/// Nondimensional groups shared by all solvers.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowParams<T> {
    pub reynolds: T,
    pub weissenberg: T,
    /// Polymer viscosity fraction; the solvent carries 1 − ε.
    pub epsilon: T,
    pub dt: T,
}

impl<T: Real> FlowParams<T> {
    pub fn new(reynolds: T, weissenberg: T, epsilon: T, dt: T) -> Result<Self> {
        let p = Self {
            reynolds,
            weissenberg,
            epsilon,
            dt,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.reynolds > T::zero()) || !self.reynolds.is_finite() {
            return Err(Error::invalid("reynolds", "must be finite and > 0"));
        }
        if !(self.weissenberg > T::zero()) || !self.weissenberg.is_finite() {
            return Err(Error::invalid("weissenberg", "must be finite and > 0"));
        }
        if !(self.epsilon > T::zero() && self.epsilon < T::one()) {
            return Err(Error::invalid("epsilon", "must lie in (0, 1)"));
        }
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::invalid("dt", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Entropic spring law.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ForceModel<T> {
    Hookean,
    /// Finitely extensible spring confined to |X| < √b.
    Fene { b: T },
}

impl<T: Real> ForceModel<T> {
    pub fn fene(b: T) -> Result<Self> {
        if !(b > T::zero()) || !b.is_finite() {
            return Err(Error::invalid("b", "FENE extensibility must be finite and > 0"));
        }
        Ok(ForceModel::Fene { b })
    }

    pub fn extensibility(&self) -> Option<T> {
        match *self {
            ForceModel::Hookean => None,
            ForceModel::Fene { b } => Some(b),
        }
    }

    /// Scalar g with F(X) = g(|X|²)·X.
    #[inline]
    pub fn force_factor(&self, norm_sq: T) -> Result<T> {
        match *self {
            ForceModel::Hookean => Ok(T::one()),
            ForceModel::Fene { b } => {
                let s = T::one() - norm_sq / b;
                if s > T::zero() {
                    Ok(T::one() / s)
                } else {
                    Err(Error::DomainViolation {
                        norm_sq: norm_sq.to_f64_lossy(),
                        b: b.to_f64_lossy(),
                    })
                }
            }
        }
    }

    pub fn force(&self, x: &Vector<T>) -> Result<Vector<T>> {
        Ok(x.scale(self.force_factor(x.norm_sq())?))
    }

    pub fn potential(&self, x: &Vector<T>) -> Result<T> {
        let r2 = x.norm_sq();
        match *self {
            ForceModel::Hookean => Ok(r2 * T::lit(0.5)),
            ForceModel::Fene { b } => {
                self.force_factor(r2)?;
                Ok(-b * T::lit(0.5) * (-r2 / b).ln_1p())
            }
        }
    }

    /// Hessian of the potential: g·I + 2g²/b·X⊗X for FENE, I for Hookean.
    pub fn hessian(&self, x: &Vector<T>) -> Result<Tensor<T>> {
        let d = x.dim();
        match *self {
            ForceModel::Hookean => Ok(Tensor::identity(d)),
            ForceModel::Fene { b } => {
                let g = self.force_factor(x.norm_sq())?;
                Ok(Tensor::scalar(d, g) + x.outer(x).scale(T::lit(2.0) * g * g / b))
            }
        }
    }

    /// Squared radius proposals must stay strictly below, if any.
    fn admissible_radius_sq(&self, margin: T) -> Option<T> {
        self.extensibility().map(|b| {
            let shrink = T::one() - margin;
            b * shrink * shrink
        })
    }
}

/// Symmetric d×d polymer stress.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StressTensor<T>(Tensor<T>);

impl<T: Real> StressTensor<T> {
    /// Stores the symmetric part of `t`.
    pub fn new(t: Tensor<T>) -> Self {
        StressTensor(t.symmetric_part())
    }

    pub fn tensor(&self) -> &Tensor<T> {
        &self.0
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.0[(i, j)]
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }
}

/// Acceptance policy for Euler-Maruyama proposals.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepPolicy<T> {
    /// FENE proposals must land inside radius √b·(1 − margin).
    pub ball_margin: T,
    /// Redraws allowed per replica and step before failing.
    pub max_retries: usize,
    /// FENE runs require dt ≤ ratio·We; `None` disables the guard.
    pub max_dt_over_we: Option<T>,
}

impl<T: Real> Default for StepPolicy<T> {
    fn default() -> Self {
        Self {
            ball_margin: T::lit(1e-12),
            max_retries: 100,
            max_dt_over_we: Some(T::lit(0.1)),
        }
    }
}

/// Counts gathered during one ensemble step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct StepReport {
    /// Proposals rejected and redrawn.
    pub redraws: u64,
}

/// Monte Carlo state: `replicas` configurations in each of `cells` cells.
#[derive(Clone, Debug, PartialEq)]
pub struct DumbbellEnsemble<T> {
    dim: usize,
    cells: usize,
    replicas: usize,
    /// Flat storage, index ((cell·replicas) + replica)·dim + component.
    configs: Vec<T>,
    scratch: Vec<T>,
    /// Number of steps taken; keys the Brownian increments.
    step: u64,
    pub rng_root: u64,
}

/// Draws one configuration from the equilibrium law ∝ exp(−Π).
///
/// Hookean: standard normal. FENE: |X|²/b ~ Beta(d/2, b/2 + 1) with a
/// uniformly distributed direction.
pub fn equilibrium_sample<T: Real, R: RngCore>(model: &ForceModel<T>, dim: usize, rng: &mut R) -> Vector<T> {
    let mut g = [0.0f64; MAX_DIM];
    rng::fill_normals(rng, &mut g[..dim]);
    match *model {
        ForceModel::Hookean => Vector::from_slice(&g[..dim].iter().map(|&v| T::lit(v)).collect::<Vec<_>>()),
        ForceModel::Fene { b } => {
            let bf = b.to_f64_lossy();
            let beta = Beta::new(dim as f64 / 2.0, bf / 2.0 + 1.0).expect("valid beta parameters");
            let limit = (1.0 - 1e-12f64).powi(2);
            let u = loop {
                let u: f64 = beta.sample(rng);
                if u < limit {
                    break u;
                }
            };
            let mut norm = g[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
            while norm == 0.0 {
                rng::fill_normals(rng, &mut g[..dim]);
                norm = g[..dim].iter().map(|v| v * v).sum::<f64>().sqrt();
            }
            let r = (bf * u).sqrt();
            let v: Vec<T> = g[..dim].iter().map(|&c| T::lit(r * c / norm)).collect();
            Vector::from_slice(&v)
        }
    }
}

/// E|X|² under the equilibrium law.
pub fn equilibrium_second_moment<T: Real>(model: &ForceModel<T>, dim: usize) -> T {
    let d = T::from_usize_lossy(dim);
    match *model {
        ForceModel::Hookean => d,
        ForceModel::Fene { b } => d * b / (b + d + T::lit(2.0)),
    }
}

impl<T: Real> DumbbellEnsemble<T> {
    pub fn from_configs(dim: usize, cells: usize, replicas: usize, configs: Vec<T>, rng_root: u64) -> Result<Self> {
        if !(1..=MAX_DIM).contains(&dim) {
            return Err(Error::invalid("dim", "configuration dimension must be 1, 2 or 3"));
        }
        if cells == 0 || replicas == 0 {
            return Err(Error::invalid("replicas", "ensemble needs at least one cell and one replica"));
        }
        if configs.len() != dim * cells * replicas {
            return Err(Error::invalid("configs", "length must equal dim × cells × replicas"));
        }
        if configs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("configs", "configurations must be finite"));
        }
        Ok(Self {
            dim,
            cells,
            replicas,
            scratch: vec![T::zero(); configs.len()],
            configs,
            step: 0,
            rng_root,
        })
    }

    /// Independent equilibrium draws keyed by (seed, cell, replica).
    pub fn equilibrium(model: &ForceModel<T>, dim: usize, cells: usize, replicas: usize, seed: u64) -> Result<Self> {
        Self::equilibrium_with(model, dim, cells, replicas, seed, |cell, replica| {
            (rng::stream(seed, Purpose::Initial, &[cell as u64, replica as u64]), T::one())
        })
    }

    /// Equilibrium draws whose random stream and sign are chosen per
    /// (cell, replica) by `source`. The equilibrium law is symmetric, so a
    /// sign flip keeps each draw exact.
    pub fn equilibrium_with<R, S>(
        model: &ForceModel<T>,
        dim: usize,
        cells: usize,
        replicas: usize,
        seed: u64,
        source: S,
    ) -> Result<Self>
    where
        R: RngCore,
        S: Fn(usize, usize) -> (R, T) + Sync,
    {
        if cells == 0 || replicas == 0 {
            return Err(Error::invalid("replicas", "ensemble needs at least one cell and one replica"));
        }
        let mut configs = vec![T::zero(); dim * cells * replicas];
        configs.par_chunks_mut(dim).enumerate().for_each(|(idx, out)| {
            let (cell, replica) = (idx / replicas, idx % replicas);
            let (mut rng, sign) = source(cell, replica);
            let x = equilibrium_sample(model, dim, &mut rng);
            for (o, &v) in out.iter_mut().zip(x.as_slice()) {
                *o = sign * v;
            }
        });
        Self::from_configs(dim, cells, replicas, configs, seed)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn replicas(&self) -> usize {
        self.replicas
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn configs(&self) -> &[T] {
        &self.configs
    }

    /// Configurations of one cell, `replicas × dim` values.
    pub fn cell(&self, cell: usize) -> &[T] {
        let n = self.dim * self.replicas;
        &self.configs[cell * n..(cell + 1) * n]
    }

    pub fn get(&self, cell: usize, replica: usize) -> Vector<T> {
        let i = (cell * self.replicas + replica) * self.dim;
        Vector::from_slice(&self.configs[i..i + self.dim])
    }

    pub fn set(&mut self, cell: usize, replica: usize, x: &Vector<T>) {
        assert_eq!(x.dim(), self.dim);
        let i = (cell * self.replicas + replica) * self.dim;
        self.configs[i..i + self.dim].copy_from_slice(x.as_slice());
    }

    /// Snapshot with columns cell, replica, x0, x1[, x2].
    pub fn snapshot(&self) -> Table {
        let mut header = vec!["cell".to_string(), "replica".to_string()];
        header.extend((0..self.dim).map(|k| format!("x{k}")));
        let mut table = Table::new(header);
        for cell in 0..self.cells {
            for replica in 0..self.replicas {
                let mut row: Vec<Field> = vec![cell.into(), replica.into()];
                row.extend(self.get(cell, replica).as_slice().iter().map(|v| Field::Float(v.to_f64_lossy())));
                table.push(row);
            }
        }
        table
    }
}

/// Advances every replica by one Euler-Maruyama step
/// `X ← X + (κX − F(X)/(2We))·dt + √(dt/We)·ξ`.
///
/// `kappa` holds one gradient per cell, or a single gradient for all cells.
/// FENE proposals leaving the ball are redrawn with a fresh increment
/// (attempt counter in the noise key). On error the ensemble is unchanged.
pub fn evolve_ensemble<T: Real, N: NoiseSource>(
    ens: &mut DumbbellEnsemble<T>,
    model: &ForceModel<T>,
    kappa: &[Tensor<T>],
    params: &FlowParams<T>,
    noise: &N,
    policy: &StepPolicy<T>,
) -> Result<StepReport> {
    params.validate()?;
    if kappa.len() != 1 && kappa.len() != ens.cells {
        return Err(Error::invalid("kappa", "need one velocity gradient per cell or a single one"));
    }
    if kappa.iter().any(|k| !k.is_finite() || k.dim() != ens.dim) {
        return Err(Error::invalid("kappa", "velocity gradient must be finite with the ensemble dimension"));
    }
    if let (ForceModel::Fene { .. }, Some(ratio)) = (model, policy.max_dt_over_we) {
        if params.dt > ratio * params.weissenberg {
            return Err(Error::StabilityBound {
                dt: params.dt.to_f64_lossy(),
                bound: (ratio * params.weissenberg).to_f64_lossy(),
            });
        }
    }

    let dim = ens.dim;
    let replicas = ens.replicas;
    let step = ens.step;
    let dt = params.dt;
    let half_over_we = T::lit(0.5) / params.weissenberg;
    let amp = (dt / params.weissenberg).sqrt();
    let radius_sq = model.admissible_radius_sq(policy.ball_margin);
    let chunk = 1024.min(replicas);

    let configs = &ens.configs;
    let outcomes: Vec<(u64, Option<Error>)> = ens
        .scratch
        .par_chunks_mut(dim * replicas)
        .enumerate()
        .flat_map_iter(|(cell, out_cell)| {
            let k = if kappa.len() == 1 { kappa[0] } else { kappa[cell] };
            let base = cell * replicas;
            out_cell
                .chunks_mut(dim * chunk)
                .enumerate()
                .map(move |(ci, out)| (cell, base, ci, out, k))
                .collect::<Vec<_>>()
        })
        .map(|(cell, base, ci, out, k)| {
            let mut redraws = 0u64;
            let mut xi = [0.0f64; MAX_DIM];
            for (j, o) in out.chunks_mut(dim).enumerate() {
                let replica = ci * chunk + j;
                let start = (base + replica) * dim;
                let x = Vector::from_slice(&configs[start..start + dim]);
                let g = match model.force_factor(x.norm_sq()) {
                    Ok(g) => g,
                    Err(e) => return (redraws, Some(e)),
                };
                let kx = k.apply(&x);
                let mut mean = [T::zero(); MAX_DIM];
                for c in 0..dim {
                    mean[c] = x[c] + (kx[c] - half_over_we * g * x[c]) * dt;
                }
                let mut attempt = 0u32;
                loop {
                    noise.standard_normals(
                        NoiseKey {
                            cell,
                            replica,
                            step,
                            attempt,
                        },
                        &mut xi[..dim],
                    );
                    let mut r2 = T::zero();
                    for c in 0..dim {
                        let v = mean[c] + amp * T::lit(xi[c]);
                        o[c] = v;
                        r2 += v * v;
                    }
                    match radius_sq {
                        Some(limit) if !(r2 < limit) => {
                            redraws += 1;
                            attempt += 1;
                            if attempt as usize > policy.max_retries {
                                return (
                                    redraws,
                                    Some(Error::StepFailure {
                                        cell,
                                        replica,
                                        step,
                                        retries: policy.max_retries,
                                    }),
                                );
                            }
                        }
                        _ => break,
                    }
                }
                if !o.iter().all(|v| v.is_finite()) {
                    return (
                        redraws,
                        Some(Error::IntegratorFailure {
                            time: (T::from_u64(step).unwrap_or_else(T::zero) * dt).to_f64_lossy(),
                            reason: format!("non-finite configuration in cell {cell}, replica {replica}"),
                        }),
                    );
                }
            }
            (redraws, None)
        })
        .collect();

    let mut report = StepReport::default();
    for (redraws, err) in outcomes {
        if let Some(e) = err {
            return Err(e);
        }
        report.redraws += redraws;
    }
    std::mem::swap(&mut ens.configs, &mut ens.scratch);
    ens.step += 1;
    Ok(report)
}

/// Empirical moments of X ⊗ F(X) in one cell, summed in replica order.
fn cell_moment<T: Real>(cell: &[T], dim: usize, model: &ForceModel<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let mut sum = Tensor::zeros(dim);
    let mut sum_sq = Tensor::zeros(dim);
    for x in cell.chunks(dim) {
        let x = Vector::from_slice(x);
        let f = model.force(&x)?;
        for i in 0..dim {
            for j in 0..dim {
                let v = x[i] * f[j];
                sum[(i, j)] += v;
                sum_sq[(i, j)] += v * v;
            }
        }
    }
    Ok((sum, sum_sq))
}

/// Per-cell stress estimate with its Monte Carlo standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StressEstimate<T> {
    pub stress: StressTensor<T>,
    /// Componentwise standard error of the stress (not symmetrized).
    pub std_error: Tensor<T>,
}

/// Kramers stress τ = (ε/We)((1/K) Σ X ⊗ F(X) − I) in every cell.
pub fn kramers_stress<T: Real>(
    ens: &DumbbellEnsemble<T>,
    model: &ForceModel<T>,
    params: &FlowParams<T>,
) -> Result<Vec<StressTensor<T>>> {
    Ok(kramers_statistics(ens, model, params)?.into_iter().map(|s| s.stress).collect())
}

/// Kramers stress together with componentwise standard errors.
pub fn kramers_statistics<T: Real>(
    ens: &DumbbellEnsemble<T>,
    model: &ForceModel<T>,
    params: &FlowParams<T>,
) -> Result<Vec<StressEstimate<T>>> {
    let dim = ens.dim;
    let k = T::from_usize_lossy(ens.replicas);
    let scale = params.epsilon / params.weissenberg;
    (0..ens.cells)
        .into_par_iter()
        .map(|cell| {
            let (sum, sum_sq) = cell_moment(ens.cell(cell), dim, model)?;
            let mean = sum.scale(T::one() / k);
            let mut se = Tensor::zeros(dim);
            if ens.replicas > 1 {
                for i in 0..dim {
                    for j in 0..dim {
                        let var = ((sum_sq[(i, j)] - k * mean[(i, j)] * mean[(i, j)]) / (k - T::one())).max(T::zero());
                        se[(i, j)] = scale * (var / k).sqrt();
                    }
                }
            }
            Ok(StressEstimate {
                stress: StressTensor::new((mean - Tensor::identity(dim)).scale(scale)),
                std_error: se,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::IndependentNoise;

    fn v(x: &[f64]) -> Vector<f64> {
        Vector::from_slice(x)
    }

    #[test]
    fn fene_force_and_potential_by_hand() {
        let m = ForceModel::fene(4.0).unwrap();
        let f = m.force(&v(&[1.0, 0.0])).unwrap();
        assert!((f[0] - 4.0 / 3.0).abs() < 1e-15 && f[1] == 0.0);
        let p = m.potential(&v(&[1.0, 0.0])).unwrap();
        assert!((p - (-2.0 * (0.75f64).ln())).abs() < 1e-15);
        assert!(matches!(m.force(&v(&[2.0, 0.0])), Err(Error::DomainViolation { .. })));
        assert_eq!(ForceModel::<f64>::Hookean.potential(&v(&[0.0, 0.0])).unwrap(), 0.0);
    }

    #[test]
    fn force_is_gradient_of_potential() {
        let m = ForceModel::fene(9.0).unwrap();
        let x = v(&[0.5, 0.3]);
        let f = m.force(&x).unwrap();
        let h = 1e-5;
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fd = (m.potential(&xp).unwrap() - m.potential(&xm).unwrap()) / (2.0 * h);
            assert!((fd - f[c]).abs() < 1e-6);
        }
    }

    #[test]
    fn fene_hessian_matches_force_differences() {
        let m = ForceModel::fene(9.0).unwrap();
        let x = v(&[1.1, -0.7]);
        let hess = m.hessian(&x).unwrap();
        let h = 1e-6;
        for c in 0..2 {
            let mut xp = x;
            let mut xm = x;
            xp[c] += h;
            xm[c] -= h;
            let fp = m.force(&xp).unwrap();
            let fm = m.force(&xm).unwrap();
            for r in 0..2 {
                assert!(((fp[r] - fm[r]) / (2.0 * h) - hess[(r, c)]).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn two_replica_stress_by_hand() {
        let ens = DumbbellEnsemble::from_configs(2, 1, 2, vec![1.0, 0.0, -1.0, 0.0], 0).unwrap();
        let p = FlowParams::new(1.0, 1.0, 0.5, 0.01).unwrap();
        let tau = kramers_stress(&ens, &ForceModel::Hookean, &p).unwrap();
        let t = tau[0];
        assert_eq!(t.get(0, 0), 0.0);
        assert_eq!(t.get(1, 1), -0.5);
        assert_eq!(t.get(0, 1), 0.0);
    }

    #[test]
    fn stress_is_permutation_invariant_and_symmetric() {
        let ens = DumbbellEnsemble::<f64>::equilibrium(&ForceModel::Hookean, 2, 1, 64, 3).unwrap();
        let mut rev = ens.configs().chunks(2).rev().flatten().copied().collect::<Vec<_>>();
        let p = FlowParams::new(1.0, 1.0, 0.5, 0.01).unwrap();
        let a = kramers_stress(&ens, &ForceModel::Hookean, &p).unwrap()[0];
        let perm = DumbbellEnsemble::from_configs(2, 1, 64, std::mem::take(&mut rev), 3).unwrap();
        let b = kramers_stress(&perm, &ForceModel::Hookean, &p).unwrap()[0];
        assert!((a.get(0, 1) - b.get(0, 1)).abs() < 1e-14);
        assert_eq!(a.get(0, 1), a.get(1, 0));
    }

    #[test]
    fn fene_equilibrium_sampler_second_moment() {
        let m = ForceModel::fene(9.0).unwrap();
        let ens = DumbbellEnsemble::<f64>::equilibrium(&m, 2, 1, 200_000, 5).unwrap();
        let n = ens.replicas() as f64;
        let r2: Vec<f64> = ens.configs().chunks(2).map(|c| c[0] * c[0] + c[1] * c[1]).collect();
        let mean = r2.iter().sum::<f64>() / n;
        let var = r2.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
        let exact = equilibrium_second_moment(&m, 2);
        assert!((mean - exact).abs() < 4.0 * (var / n).sqrt());
        assert!(r2.iter().all(|&v| v < 9.0));
    }

    #[test]
    fn relaxation_drift_for_single_replica() {
        // Noise amplitude √(dt/We) is removed by comparing against the
        // same increments with the drift switched off.
        let p = FlowParams::<f64>::new(1.0, 2.0, 0.5, 1e-4).unwrap();
        let noise = IndependentNoise::new(1);
        let policy = StepPolicy::default();
        let mut a = DumbbellEnsemble::from_configs(2, 1, 1, vec![1.0, 0.0], 0).unwrap();
        let mut b = DumbbellEnsemble::from_configs(2, 1, 1, vec![0.0, 0.0], 0).unwrap();
        evolve_ensemble(&mut a, &ForceModel::Hookean, &[Tensor::zeros(2)], &p, &noise, &policy).unwrap();
        evolve_ensemble(&mut b, &ForceModel::Hookean, &[Tensor::zeros(2)], &p, &noise, &policy).unwrap();
        let dx = (a.get(0, 0)[0] - 1.0) - b.get(0, 0)[0];
        assert!((dx / p.dt + 1.0 / (2.0 * p.weissenberg)).abs() < 1e-6);
    }

    #[test]
    fn fene_stays_in_ball() {
        let m = ForceModel::fene(9.0).unwrap();
        let p = FlowParams::new(1.0, 1.0, 0.5, 0.01).unwrap();
        let mut ens = DumbbellEnsemble::<f64>::equilibrium(&m, 2, 2, 500, 9).unwrap();
        let noise = IndependentNoise::new(2);
        let k = Tensor::from_f64_rows(&[&[0.0, 1.0], &[0.0, 0.0]]);
        for _ in 0..1000 {
            evolve_ensemble(&mut ens, &m, &[k], &p, &noise, &StepPolicy::default()).unwrap();
        }
        assert!(ens.configs().chunks(2).all(|c| (c[0] * c[0] + c[1] * c[1]).sqrt() < 3.0));
    }

    #[test]
    fn overshooting_drift_exhausts_redraws() {
        // At 1 − |X|²/b ≈ 1e-3 the explicit drift carries the proposal mean
        // far outside the ball, so every redraw is rejected.
        let m = ForceModel::fene(9.0).unwrap();
        let p = FlowParams::new(1.0, 1.0, 0.5, 0.01).unwrap();
        let r = 3.0 * (1.0f64 - 1e-3).sqrt();
        let before = vec![r, 0.0];
        let mut ens = DumbbellEnsemble::from_configs(2, 1, 1, before.clone(), 0).unwrap();
        let err = evolve_ensemble(&mut ens, &m, &[Tensor::zeros(2)], &p, &IndependentNoise::new(1), &StepPolicy::default());
        assert!(matches!(err, Err(Error::StepFailure { cell: 0, replica: 0, step: 0, retries: 100 })));
        assert_eq!(ens.configs(), &before[..]);
        assert_eq!(ens.steps_taken(), 0);
    }

    #[test]
    fn fene_timestep_guard() {
        let m = ForceModel::fene(9.0).unwrap();
        let p = FlowParams::new(1.0, 1.0, 0.5, 0.5).unwrap();
        let mut ens = DumbbellEnsemble::<f64>::equilibrium(&m, 2, 1, 4, 9).unwrap();
        let err = evolve_ensemble(&mut ens, &m, &[Tensor::zeros(2)], &p, &IndependentNoise::new(0), &StepPolicy::default());
        assert!(matches!(err, Err(Error::StabilityBound { .. })));
    }

    #[test]
    fn single_precision_ensemble_steps() {
        let p = FlowParams::<f32>::new(1.0, 1.0, 0.5, 0.01).unwrap();
        let mut ens = DumbbellEnsemble::<f32>::equilibrium(&ForceModel::Hookean, 3, 2, 16, 1).unwrap();
        evolve_ensemble(&mut ens, &ForceModel::Hookean, &[Tensor::zeros(3)], &p, &IndependentNoise::new(4), &StepPolicy::default())
            .unwrap();
        assert_eq!(ens.steps_taken(), 1);
        assert!(ens.configs().iter().all(|v| v.is_finite()));
    }
}
