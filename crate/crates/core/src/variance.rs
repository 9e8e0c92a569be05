//! Variance reduction for the Monte Carlo stress.
//!
//! Three pieces: spatial correlation of the Brownian motions across cells,
//! control variates driven by the same increments as the primary process,
//! and a reduced basis of control variates selected greedily offline and
//! combined online by least squares.

use rand::{RngCore, SeedableRng};

use rand_distr::{Beta, Distribution};

use crate::dumbbell::{equilibrium_sample, evolve_ensemble, DumbbellEnsemble, FlowParams, ForceModel, StepPolicy};
use crate::error::{Error, Result};
use crate::io::{Field, Table};
use crate::linalg::normal_equations;
use crate::rng::{self, derive_key, extend_key, fill_normals, stream, IndependentNoise, NoiseKey, NoiseSource, Purpose};
use crate::scalar::Real;
use crate::shear::{run_to, SchemeConfig, ShearState};
use crate::tensor::Tensor;
use rand_xoshiro::SplitMix64;

/// Spatial covariance of the Brownian motion driving the coupled component.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BrownianStrategy {
    ConstantInSpace,
    IndependentPerCell,
    /// One shared increment multiplied by (−1)^cell.
    AlternatingSign,
}

impl BrownianStrategy {
    pub const ALL: [BrownianStrategy; 3] = [
        BrownianStrategy::ConstantInSpace,
        BrownianStrategy::IndependentPerCell,
        BrownianStrategy::AlternatingSign,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            BrownianStrategy::ConstantInSpace => "constant",
            BrownianStrategy::IndependentPerCell => "iid",
            BrownianStrategy::AlternatingSign => "alternating",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.name() == s)
    }

    /// Stream index and sign used for `cell`.
    fn address(&self, cell: usize) -> (u64, f64) {
        match self {
            BrownianStrategy::ConstantInSpace => (0, 1.0),
            BrownianStrategy::IndependentPerCell => (cell as u64, 1.0),
            BrownianStrategy::AlternatingSign => (0, if cell % 2 == 0 { 1.0 } else { -1.0 }),
        }
    }
}

/// How components other than the first (Q in shear) are correlated across
/// cells.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TransverseNoise {
    /// One increment per (replica, step) shared by every cell.
    Shared,
    /// Same rule as the first component.
    FollowStrategy,
}

/// Brownian increments correlated across cells according to a strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BrownianNoise {
    pub seed: u64,
    pub strategy: BrownianStrategy,
    pub transverse: TransverseNoise,
}

impl BrownianNoise {
    pub fn new(seed: u64, strategy: BrownianStrategy) -> Self {
        Self {
            seed,
            strategy,
            transverse: TransverseNoise::Shared,
        }
    }

    /// Two-component equilibrium ensemble whose initial draws carry the same
    /// cell correlation as the increments. With a shared transverse
    /// component, Q is drawn once per replica and P from its conditional law
    /// given Q on the strategy's stream (sign-flipped on odd cells when
    /// alternating). Otherwise the whole draw follows the strategy.
    pub fn initial_ensemble<T: Real>(&self, model: &ForceModel<T>, cells: usize, replicas: usize) -> Result<DumbbellEnsemble<T>> {
        if cells == 0 || replicas == 0 {
            return Err(Error::invalid("replicas", "ensemble needs at least one cell and one replica"));
        }
        let mut configs = vec![T::zero(); 2 * cells * replicas];
        for c in 0..cells {
            let (part, sign) = self.strategy.address(c);
            let sign = T::lit(sign);
            for r in 0..replicas {
                let mut own = stream(self.seed, Purpose::Initial, &[part, r as u64]);
                let x = match self.transverse {
                    TransverseNoise::FollowStrategy => {
                        let x = equilibrium_sample(model, 2, &mut own);
                        [sign * x[0], sign * x[1]]
                    }
                    TransverseNoise::Shared => {
                        let mut shared = stream(self.seed, Purpose::Initial, &[u64::MAX, r as u64]);
                        let q = equilibrium_sample(model, 2, &mut shared)[1];
                        [sign * conditional_first_component(model, q, &mut own), q]
                    }
                };
                let at = 2 * (c * replicas + r);
                configs[at] = x[0];
                configs[at + 1] = x[1];
            }
        }
        DumbbellEnsemble::from_configs(2, cells, replicas, configs, self.seed)
    }
}

/// Draw of P given Q under the 2D equilibrium law. Hookean: P ~ N(0, 1).
/// FENE: the density (1 − (P² + Q²)/b)^{b/2} factorizes, so
/// P = √(b − Q²)·(2β − 1) with β ~ Beta(b/2 + 1, b/2 + 1).
fn conditional_first_component<T: Real, R: RngCore>(model: &ForceModel<T>, q: T, rng: &mut R) -> T {
    match *model {
        ForceModel::Hookean => T::lit(rng::normal(rng)),
        ForceModel::Fene { b } => {
            let bf = b.to_f64_lossy();
            let beta = Beta::new(bf / 2.0 + 1.0, bf / 2.0 + 1.0).expect("valid beta parameters");
            let s = 2.0 * beta.sample(rng) - 1.0;
            // Keep strictly inside the admissible ball.
            let half_width = ((bf - q.to_f64_lossy().powi(2)).max(0.0)).sqrt() * (1.0 - 1e-12);
            T::lit(half_width * s)
        }
    }
}

impl NoiseSource for BrownianNoise {
    #[inline]
    fn standard_normals(&self, key: NoiseKey, out: &mut [f64]) {
        let (part, sign) = self.strategy.address(key.cell);
        // step, attempt (< 2^7) and component tag packed into one word.
        let packed = (key.step << 8) | ((key.attempt as u64) << 1);
        let prefix = extend_key(derive_key(self.seed, Purpose::Brownian, &[]), &[key.replica as u64]);
        let mut first = SplitMix64::seed_from_u64(extend_key(prefix, &[part, packed]));
        fill_normals(&mut first, &mut out[..1]);
        out[0] *= sign;
        if out.len() > 1 {
            let (tpart, tsign) = match self.transverse {
                TransverseNoise::Shared => (0, 1.0),
                TransverseNoise::FollowStrategy => (part, sign),
            };
            let mut rest = SplitMix64::seed_from_u64(extend_key(prefix, &[tpart, packed | 1]));
            fill_normals(&mut rest, &mut out[1..]);
            for v in &mut out[1..] {
                *v *= tsign;
            }
        }
    }
}

/// Per-cell increment generator for a strategy.
pub fn apply_brownian_strategy(strategy: BrownianStrategy, seed: u64) -> BrownianNoise {
    BrownianNoise::new(seed, strategy)
}

pub fn sample_mean<T: Real>(x: &[T]) -> T {
    x.iter().copied().sum::<T>() / T::from_usize_lossy(x.len().max(1))
}

/// Unbiased sample variance (divisor M − 1).
pub fn sample_variance<T: Real>(x: &[T]) -> T {
    if x.len() < 2 {
        return T::zero();
    }
    let m = sample_mean(x);
    x.iter().map(|&v| (v - m) * (v - m)).sum::<T>() / T::from_usize_lossy(x.len() - 1)
}

fn sample_covariance<T: Real>(x: &[T], y: &[T]) -> T {
    let (mx, my) = (sample_mean(x), sample_mean(y));
    x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum::<T>() / T::from_usize_lossy(x.len() - 1)
}

/// α* = Cov(Z, Y)/Var(Y).
pub fn optimal_alpha<T: Real>(z: &[T], y: &[T]) -> Result<T> {
    if z.len() != y.len() || z.len() < 2 {
        return Err(Error::invalid("samples", "need at least two paired samples"));
    }
    let vy = sample_variance(y);
    if !(vy > T::zero()) {
        return Err(Error::DegenerateControl);
    }
    Ok(sample_covariance(z, y) / vy)
}

/// Coefficients minimizing the empirical variance of Z − Σ α_n Y_n.
#[derive(Clone, Debug, PartialEq)]
pub struct ControlFit<T> {
    pub alpha: Vec<T>,
    /// The centred Gram matrix was rank deficient and a ridge was added.
    pub regularized: bool,
}

/// Least-squares fit of Z on centred controls; ridge 1e−10 on rank
/// deficiency.
pub fn fit_controls<T: Real>(z: &[T], controls: &[Vec<T>]) -> ControlFit<T> {
    let n = controls.len();
    let m = z.len();
    let centred: Vec<Vec<T>> = controls
        .iter()
        .map(|y| {
            let my = sample_mean(y);
            y.iter().map(|&v| v - my).collect()
        })
        .collect();
    let mz = sample_mean(z);
    let mut gram = vec![T::zero(); n * n];
    let mut rhs = vec![T::zero(); n];
    for a in 0..n {
        for b in a..n {
            let g: T = (0..m).map(|i| centred[a][i] * centred[b][i]).sum();
            gram[a * n + b] = g;
            gram[b * n + a] = g;
        }
        rhs[a] = (0..m).map(|i| centred[a][i] * (z[i] - mz)).sum();
    }
    let ls = normal_equations(n, &gram, &rhs, T::lit(1e-10));
    ControlFit {
        alpha: ls.coefficients,
        regularized: ls.regularized,
    }
}

/// Z − Σ α_n Y_n sample by sample.
pub fn corrected_samples<T: Real>(z: &[T], controls: &[Vec<T>], alpha: &[T]) -> Vec<T> {
    (0..z.len())
        .map(|i| z[i] - controls.iter().zip(alpha).map(|(y, &a)| a * y[i]).sum::<T>())
        .collect()
}

/// Mean, variance and 95% half-width of one or more quantities.
#[derive(Clone, Debug, PartialEq)]
pub struct VarianceReport<T> {
    pub samples: usize,
    pub mean: Vec<T>,
    pub variance: Vec<T>,
    /// 1.96·√(variance/samples).
    pub half_width: Vec<T>,
}

pub const Z_95: f64 = 1.96;

impl<T: Real> VarianceReport<T> {
    /// `columns[q]` holds the samples of quantity q.
    pub fn from_columns(columns: &[Vec<T>]) -> Self {
        let samples = columns.first().map_or(0, |c| c.len());
        let mean = columns.iter().map(|c| sample_mean(c)).collect();
        let variance: Vec<T> = columns.iter().map(|c| sample_variance(c)).collect();
        let m = T::from_usize_lossy(samples.max(1));
        let half_width = variance.iter().map(|&v| T::lit(Z_95) * (v / m).sqrt()).collect();
        Self {
            samples,
            mean,
            variance,
            half_width,
        }
    }
}

/// Choice of companion process.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ControlVariateSpec {
    /// Same model without flow; E(Y) is the equilibrium value I.
    Equilibrium,
    /// Hookean dumbbell under the same flow; E(Y) from the exact moment
    /// recursion of the Euler-Maruyama scheme.
    Hookean,
}

/// Paired per-sample tensors X⊗F(X) and X̃⊗F̃(X̃) with the known E(Y).
#[derive(Clone, Debug)]
pub struct CoupledSamples<T> {
    pub z: Vec<Tensor<T>>,
    pub y: Vec<Tensor<T>>,
    pub y_mean: Tensor<T>,
}

impl<T: Real> CoupledSamples<T> {
    /// Component (i, j) of Z and of Y as scalar sample lists.
    pub fn component(&self, i: usize, j: usize) -> (Vec<T>, Vec<T>) {
        (
            self.z.iter().map(|t| t[(i, j)]).collect(),
            self.y.iter().map(|t| t[(i, j)]).collect(),
        )
    }

    /// Plain and control-variate estimates of E(Z_ij).
    pub fn estimates(&self, i: usize, j: usize) -> Result<CvEstimate<T>> {
        let (z, y) = self.component(i, j);
        let alpha = optimal_alpha(&z, &y)?;
        let corrected: Vec<T> = z
            .iter()
            .zip(&y)
            .map(|(&a, &b)| a - alpha * (b - self.y_mean[(i, j)]))
            .collect();
        Ok(CvEstimate {
            alpha,
            plain: VarianceReport::from_columns(&[z]),
            corrected: VarianceReport::from_columns(&[corrected]),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CvEstimate<T> {
    pub alpha: T,
    pub plain: VarianceReport<T>,
    pub corrected: VarianceReport<T>,
}

fn outer_force<T: Real>(ens: &DumbbellEnsemble<T>, model: &ForceModel<T>) -> Result<Vec<Tensor<T>>> {
    (0..ens.replicas())
        .map(|r| {
            let x = ens.get(0, r);
            Ok(x.outer(&model.force(&x)?))
        })
        .collect()
}

/// Runs the primary process and its companion for `steps` steps of
/// `params.dt` under a constant gradient, sharing the initial draw and every
/// Brownian increment.
pub fn coupled_control_variate_run<T: Real>(
    spec: ControlVariateSpec,
    model: &ForceModel<T>,
    kappa: &Tensor<T>,
    params: &FlowParams<T>,
    replicas: usize,
    steps: usize,
    seed: u64,
) -> Result<CoupledSamples<T>> {
    let dim = kappa.dim();
    let mut x = DumbbellEnsemble::equilibrium(model, dim, 1, replicas, seed)?;
    let mut x_tilde = x.clone();
    let (companion, k_tilde) = match spec {
        ControlVariateSpec::Equilibrium => (*model, Tensor::zeros(dim)),
        ControlVariateSpec::Hookean => (ForceModel::Hookean, *kappa),
    };
    let noise = IndependentNoise::new(seed);
    let policy = StepPolicy::default();
    for _ in 0..steps {
        evolve_ensemble(&mut x, model, std::slice::from_ref(kappa), params, &noise, &policy)?;
        evolve_ensemble(&mut x_tilde, &companion, &[k_tilde], params, &noise, &policy)?;
    }
    let y_mean = match spec {
        ControlVariateSpec::Equilibrium => Tensor::identity(dim),
        ControlVariateSpec::Hookean => {
            let a0 = Tensor::identity(dim).scale(crate::dumbbell::equilibrium_second_moment(model, dim) / T::from_usize_lossy(dim));
            euler_maruyama_second_moment(&a0, kappa, params, steps)
        }
    };
    Ok(CoupledSamples {
        z: outer_force(&x, model)?,
        y: outer_force(&x_tilde, &companion)?,
        y_mean,
    })
}

/// E(X Xᵀ) after `steps` Hookean Euler-Maruyama steps:
/// A ← M A Mᵀ + (δt/We) I with M = I + δt(κ − I/(2We)).
pub fn euler_maruyama_second_moment<T: Real>(a0: &Tensor<T>, kappa: &Tensor<T>, params: &FlowParams<T>, steps: usize) -> Tensor<T> {
    let d = kappa.dim();
    let dt = params.dt;
    let id = Tensor::identity(d);
    let m = id + (*kappa - id.scale(T::lit(0.5) / params.weissenberg)).scale(dt);
    let mt = m.transpose();
    let mut a = *a0;
    for _ in 0..steps {
        a = m * a * mt + id.scale(dt / params.weissenberg);
    }
    a
}

/// Replicated shear runs for one strategy.
#[derive(Clone, Debug)]
pub struct StrategyReport<T> {
    pub strategy: BrownianStrategy,
    /// Velocity at every node, one row per replication.
    pub u: Vec<Vec<T>>,
    /// τ per cell, one row per replication.
    pub tau: Vec<Vec<T>>,
}

fn columns<T: Real>(rows: &[Vec<T>]) -> Vec<Vec<T>> {
    let n = rows.first().map_or(0, |r| r.len());
    (0..n).map(|j| rows.iter().map(|r| r[j]).collect()).collect()
}

impl<T: Real> StrategyReport<T> {
    pub fn velocity_report(&self) -> VarianceReport<T> {
        VarianceReport::from_columns(&columns(&self.u))
    }

    pub fn stress_report(&self) -> VarianceReport<T> {
        VarianceReport::from_columns(&columns(&self.tau))
    }

    /// Variance of u at the mid-channel node.
    pub fn var_u(&self) -> T {
        var_u_of(&self.u, &(0..self.u.len()).collect::<Vec<_>>())
    }

    /// Per-cell variance of τ averaged over cells.
    pub fn var_tau(&self) -> T {
        var_tau_of(&self.tau, &(0..self.tau.len()).collect::<Vec<_>>())
    }
}

fn var_u_of<T: Real>(u: &[Vec<T>], pick: &[usize]) -> T {
    let mid = u[0].len() / 2;
    let v: Vec<T> = pick.iter().map(|&i| u[i][mid]).collect();
    sample_variance(&v)
}

fn var_tau_of<T: Real>(tau: &[Vec<T>], pick: &[usize]) -> T {
    let cells = tau[0].len();
    let total: T = (0..cells)
        .map(|c| {
            let v: Vec<T> = pick.iter().map(|&i| tau[i][c]).collect();
            sample_variance(&v)
        })
        .sum();
    total / T::from_usize_lossy(cells)
}

/// Runs `repeats` independent Hookean shear simulations to `t_end` per
/// strategy. Replication r uses the same seed under every strategy.
pub fn variance_comparison_study<T: Real>(
    cfg: &SchemeConfig<T>,
    boundary: (T, T),
    t_end: T,
    strategies: &[BrownianStrategy],
    repeats: usize,
) -> Result<Vec<StrategyReport<T>>> {
    if repeats < 2 {
        return Err(Error::invalid("repeats", "need at least two replications"));
    }
    strategies
        .iter()
        .map(|&strategy| {
            let mut u = Vec::with_capacity(repeats);
            let mut tau = Vec::with_capacity(repeats);
            for r in 0..repeats {
                let c = SchemeConfig {
                    brownian: strategy,
                    model: ForceModel::Hookean,
                    seed: derive_key(cfg.seed, Purpose::Generic, &[r as u64]),
                    ..*cfg
                };
                let mut s = ShearState::startup_micro(&c, boundary)?;
                run_to(&mut s, &c, t_end)?;
                u.push(s.u);
                tau.push(s.tau);
            }
            Ok(StrategyReport { strategy, u, tau })
        })
        .collect()
}

/// Columns strategy, quantity, variance, replications.
pub fn strategy_table<T: Real>(reports: &[StrategyReport<T>]) -> Table {
    let mut t = Table::new(["strategy", "quantity", "variance", "replications"]);
    for r in reports {
        t.push(vec![r.strategy.name().into(), "u_mid".into(), r.var_u().to_f64_lossy().into(), r.u.len().into()]);
        t.push(vec![r.strategy.name().into(), "tau_mean_cell".into(), r.var_tau().to_f64_lossy().into(), r.tau.len().into()]);
    }
    t
}

/// Which averaged variance a bootstrap compares.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StudyQuantity {
    VelocityMid,
    StressMeanCell,
}

/// Percentile bootstrap interval of stat(a) − stat(b), resampling the
/// replications of each report independently.
pub fn bootstrap_difference<T: Real>(
    a: &StrategyReport<T>,
    b: &StrategyReport<T>,
    quantity: StudyQuantity,
    resamples: usize,
    level: f64,
    seed: u64,
) -> (T, T) {
    let stat = |r: &StrategyReport<T>, pick: &[usize]| match quantity {
        StudyQuantity::VelocityMid => var_u_of(&r.u, pick),
        StudyQuantity::StressMeanCell => var_tau_of(&r.tau, pick),
    };
    let draw = |n: usize, rng: &mut rand_xoshiro::SplitMix64| -> Vec<usize> {
        (0..n).map(|_| (rng.next_u64() % n as u64) as usize).collect()
    };
    let mut diffs: Vec<T> = (0..resamples)
        .map(|k| {
            let mut rng = stream(seed, Purpose::Resample, &[k as u64]);
            let pa = draw(a.u.len(), &mut rng);
            let pb = draw(b.u.len(), &mut rng);
            stat(a, &pa) - stat(b, &pb)
        })
        .collect();
    diffs.sort_by(|x, y| x.partial_cmp(y).unwrap_or(std::cmp::Ordering::Equal));
    let tail = (1.0 - level) / 2.0;
    let idx = |q: f64| ((q * (resamples - 1) as f64).round() as usize).min(resamples - 1);
    (diffs[idx(tail)], diffs[idx(1.0 - tail)])
}

/// X_x F_y(X) at time `steps·dt` for every gradient in `lambdas`, replica
/// by replica. All gradients share the initial draws and the increments of
/// replica i, which couples the samples across parameters.
pub fn coupled_shear_samples<T: Real>(
    lambdas: &[Tensor<T>],
    replicas: usize,
    model: &ForceModel<T>,
    params: &FlowParams<T>,
    steps: usize,
    seed: u64,
) -> Result<Vec<Vec<T>>> {
    if lambdas.is_empty() {
        return Err(Error::EmptyTrialSet);
    }
    let noise = BrownianNoise {
        seed,
        strategy: BrownianStrategy::ConstantInSpace,
        transverse: TransverseNoise::Shared,
    };
    let mut ens = noise.initial_ensemble(model, lambdas.len(), replicas)?;
    let policy = StepPolicy::default();
    for _ in 0..steps {
        evolve_ensemble(&mut ens, model, lambdas, params, &noise, &policy)?;
    }
    (0..lambdas.len())
        .map(|c| {
            (0..replicas)
                .map(|r| {
                    let x = ens.get(c, r);
                    Ok(x[0] * model.force(&x)?[1])
                })
                .collect()
        })
        .collect()
}

/// Greedily selected control variates.
#[derive(Clone, Debug, PartialEq)]
pub struct RbBasis<T> {
    /// Selected gradients λ_n, in selection order.
    pub parameters: Vec<Tensor<T>>,
    /// Position of each λ_n in the trial set.
    pub trial_indices: Vec<usize>,
    /// Large-sample mean of Z^{λ_n}.
    pub reference_means: Vec<T>,
    /// Post-projection variance of the selected trial point at selection.
    pub selection_variance: Vec<T>,
    pub m_large: usize,
    /// Seed of the offline sample schedule.
    pub seed: u64,
    pub steps: usize,
    pub model: ForceModel<T>,
    pub params: FlowParams<T>,
}

/// Offline greedy selection. Samples Z^λ for every trial gradient on a
/// common seed schedule of `m_large` replicas, then repeatedly picks the
/// not-yet-selected trial point whose variance after projection on the
/// current basis is largest (ties to the lowest index).
pub fn rb_offline<T: Real>(
    lambda_trial: &[Tensor<T>],
    n_basis: usize,
    m_large: usize,
    model: &ForceModel<T>,
    params: &FlowParams<T>,
    steps: usize,
    seed: u64,
) -> Result<RbBasis<T>> {
    if lambda_trial.is_empty() {
        return Err(Error::EmptyTrialSet);
    }
    if n_basis == 0 {
        return Err(Error::invalid("n_basis", "basis needs at least one element"));
    }
    if m_large < 2 {
        return Err(Error::invalid("m_large", "need at least two offline samples"));
    }
    let z = coupled_shear_samples(lambda_trial, m_large, model, params, steps, seed)?;
    let means: Vec<T> = z.iter().map(|s| sample_mean(s)).collect();
    let mut selected: Vec<usize> = Vec::new();
    let mut selection_variance = Vec::new();
    let mut controls: Vec<Vec<T>> = Vec::new();
    // Identical trial points collapse onto the first occurrence.
    let distinct: Vec<usize> = (0..lambda_trial.len())
        .filter(|&i| (0..i).all(|j| lambda_trial[j] != lambda_trial[i]))
        .collect();
    while selected.len() < n_basis.min(distinct.len()) {
        let mut best: Option<(usize, T)> = None;
        for &i in &distinct {
            if selected.contains(&i) {
                continue;
            }
            let fit = fit_controls(&z[i], &controls);
            let v = sample_variance(&corrected_samples(&z[i], &controls, &fit.alpha));
            if best.is_none_or(|(_, bv)| v > bv) {
                best = Some((i, v));
            }
        }
        let (i, v) = best.expect("a trial point remains");
        selected.push(i);
        selection_variance.push(v);
        controls.push(z[i].iter().map(|&s| s - means[i]).collect());
    }
    Ok(RbBasis {
        parameters: selected.iter().map(|&i| lambda_trial[i]).collect(),
        reference_means: selected.iter().map(|&i| means[i]).collect(),
        trial_indices: selected,
        selection_variance,
        m_large,
        seed,
        steps,
        model: *model,
        params: *params,
    })
}

/// Online estimate of E(Z^λ) with the reduced-basis control.
#[derive(Clone, Debug, PartialEq)]
pub struct RbEstimate<T> {
    pub alpha: Vec<T>,
    pub plain: VarianceReport<T>,
    pub corrected: VarianceReport<T>,
    /// The least-squares system needed the ridge.
    pub regularized: bool,
}

impl<T: Real> RbEstimate<T> {
    pub fn estimate(&self) -> T {
        self.corrected.mean[0]
    }

    pub fn reduction_factor(&self) -> T {
        let v = self.corrected.variance[0];
        if v > T::zero() {
            self.plain.variance[0] / v
        } else {
            T::infinity()
        }
    }
}

/// Online stage: draws `m_small` fresh coupled samples of Z^λ and of every
/// basis process, forms Y_n = Z^{λ_n} − reference mean, fits α* by least
/// squares and returns the corrected estimator.
pub fn rb_online<T: Real>(lambda: &Tensor<T>, basis: &RbBasis<T>, m_small: usize, seed: u64) -> Result<RbEstimate<T>> {
    if basis.parameters.is_empty() {
        return Err(Error::invalid("basis", "basis is empty"));
    }
    if m_small < 2 {
        return Err(Error::invalid("m_small", "need at least two online samples"));
    }
    let mut lambdas = vec![*lambda];
    lambdas.extend_from_slice(&basis.parameters);
    let samples = coupled_shear_samples(&lambdas, m_small, &basis.model, &basis.params, basis.steps, seed)?;
    let z = &samples[0];
    let controls: Vec<Vec<T>> = samples[1..]
        .iter()
        .zip(&basis.reference_means)
        .map(|(s, &m)| s.iter().map(|&v| v - m).collect())
        .collect();
    let fit = fit_controls(z, &controls);
    let corrected = corrected_samples(z, &controls, &fit.alpha);
    Ok(RbEstimate {
        plain: VarianceReport::from_columns(std::slice::from_ref(z)),
        corrected: VarianceReport::from_columns(&[corrected]),
        alpha: fit.alpha,
        regularized: fit.regularized,
    })
}

/// Columns lambda_xx, lambda_xy, lambda_yx, lambda_yy, estimate, variance,
/// plain_variance, reduction_factor.
pub fn rb_estimate_table<T: Real>(rows: &[(Tensor<T>, RbEstimate<T>)]) -> Table {
    let mut t = Table::new([
        "lambda_xx",
        "lambda_xy",
        "lambda_yx",
        "lambda_yy",
        "estimate",
        "variance",
        "plain_variance",
        "reduction_factor",
    ]);
    for (l, e) in rows {
        let mut row: Vec<Field> = Vec::new();
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            row.push(l[(i, j)].to_f64_lossy().into());
        }
        row.push(e.estimate().to_f64_lossy().into());
        row.push(e.corrected.variance[0].to_f64_lossy().into());
        row.push(e.plain.variance[0].to_f64_lossy().into());
        row.push(e.reduction_factor().to_f64_lossy().into());
        t.push(row);
    }
    t
}

/// Shear-dominated gradients [[a, γ̇], [0, −a]] on a regular grid.
pub fn shear_dominated_gradients<T: Real>(rates: &[T], elongations: &[T]) -> Vec<Tensor<T>> {
    let mut out = Vec::with_capacity(rates.len() * elongations.len());
    for &g in rates {
        for &a in elongations {
            out.push(Tensor::from_rows(&[&[a, g], &[T::zero(), -a]]));
        }
    }
    out
}

/// n evenly spaced values from lo to hi inclusive.
pub fn linspace<T: Real>(lo: T, hi: T, n: usize) -> Vec<T> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|i| lo + (hi - lo) * T::from_usize_lossy(i) / T::from_usize_lossy(n - 1))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::normal;

    #[test]
    fn strategies_agree_on_a_single_cell() {
        let mut outs = Vec::new();
        for s in BrownianStrategy::ALL {
            let n = BrownianNoise::new(9, s);
            let mut out = [0.0; 2];
            n.standard_normals(
                NoiseKey {
                    cell: 0,
                    replica: 3,
                    step: 7,
                    attempt: 0,
                },
                &mut out,
            );
            outs.push(out);
        }
        assert_eq!(outs[0], outs[1]);
        assert_eq!(outs[0], outs[2]);
    }

    #[test]
    fn alternating_flips_first_component_only() {
        let n = BrownianNoise::new(1, BrownianStrategy::AlternatingSign);
        let key = |cell| NoiseKey {
            cell,
            replica: 0,
            step: 2,
            attempt: 0,
        };
        let (mut a, mut b) = ([0.0; 2], [0.0; 2]);
        n.standard_normals(key(0), &mut a);
        n.standard_normals(key(3), &mut b);
        assert_eq!(a[0], -b[0]);
        assert_eq!(a[1], b[1]);
    }

    #[test]
    fn alpha_of_synthetic_linear_model() {
        let mut rng = stream(4, Purpose::Generic, &[]);
        let y: Vec<f64> = (0..10_000).map(|_| normal(&mut rng)).collect();
        let z: Vec<f64> = y.iter().map(|&v| 2.0 * v + normal(&mut rng)).collect();
        let a = optimal_alpha(&z, &y).unwrap();
        assert!((a - 2.0).abs() < 0.1);
        assert!((optimal_alpha(&y, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(optimal_alpha(&z, &vec![1.0; 10_000]), Err(Error::DegenerateControl)));
    }

    #[test]
    fn residual_variance_identity() {
        let mut rng = stream(5, Purpose::Generic, &[]);
        let y: Vec<f64> = (0..500).map(|_| normal(&mut rng)).collect();
        let z: Vec<f64> = y.iter().map(|&v| 0.7 * v + 0.5 * normal(&mut rng)).collect();
        let a = optimal_alpha(&z, &y).unwrap();
        let r: Vec<f64> = z.iter().zip(&y).map(|(zz, yy)| zz - a * yy).collect();
        let rho = sample_covariance(&z, &y) / (sample_variance(&z) * sample_variance(&y)).sqrt();
        let lhs = sample_variance(&r);
        let rhs = sample_variance(&z) * (1.0 - rho * rho);
        assert!((lhs - rhs).abs() < 1e-12 * rhs);
        assert!(lhs <= sample_variance(&z));
    }

    #[test]
    fn moment_recursion_matches_stationary_hookean() {
        let p = FlowParams::<f64>::new(1.0, 1.0, 0.5, 0.01).unwrap();
        let a = euler_maruyama_second_moment(&Tensor::identity(2), &Tensor::zeros(2), &p, 100);
        // Stationary value of the recursion: (dt/We)/(1 − (1 − dt/2We)²).
        let m: f64 = 1.0 - 0.005;
        let stat = 0.01 / (1.0 - m * m);
        assert!((a[(0, 0)] - (stat + (1.0 - stat) * m.powi(200))).abs() < 1e-12);
    }
}
