use micromacro::macro_models::*;
use micromacro::rng::{stream, uniform, Purpose};
use micromacro::tensor::Tensor;
use micromacro::FlowParams;

fn shear(rate: f64) -> Tensor<f64> {
    Tensor::from_f64_rows(&[&[0.0, rate], &[0.0, 0.0]])
}

fn random_spd(seed: u64) -> ConformationTensor<f64> {
    let mut rng = stream(seed, Purpose::Generic, &[]);
    let l = Tensor::from_f64_rows(&[
        &[0.3 + 2.0 * uniform(&mut rng), 0.0],
        &[2.0 * uniform(&mut rng) - 1.0, 0.3 + 2.0 * uniform(&mut rng)],
    ]);
    ConformationTensor::new(l * l.transpose()).unwrap()
}

#[test]
fn steady_shear_fixed_points() {
    for we in [0.5, 1.0, 2.0] {
        for rate in [0.1, 1.0] {
            let p = FlowParams::new(1.0, we, 0.5, 0.01 * we).unwrap();
            let run = integrate_homogeneous(&MacroModel::OldroydB, |_| shear(rate), &ConformationTensor::identity(2), &p, 40.0 * we).unwrap();
            let a = run.last().tensor();
            let wg = we * rate;
            assert!((a[(0, 1)] / wg - 1.0).abs() < 1e-6);
            assert!((a[(0, 0)] / (1.0 + 2.0 * wg * wg) - 1.0).abs() < 1e-6);
            assert!((a[(1, 1)] - 1.0).abs() < 1e-6);
        }
    }
}

#[test]
fn free_energy_decreases_from_random_states() {
    let p = FlowParams::new(1.0, 1.0, 0.5, 0.01).unwrap();
    for (model, seed0) in [(MacroModel::OldroydB, 0u64), (MacroModel::fene_p(20.0).unwrap(), 100)] {
        for seed in seed0..seed0 + 10 {
            let run = integrate_homogeneous(&model, |_| Tensor::zeros(2), &random_spd(seed), &p, 6.0).unwrap();
            let fe: Vec<f64> = run.states.iter().map(|a| model.free_energy(0.0, &[(*a, 1.0)], &p).unwrap().total).collect();
            assert!(fe.windows(2).all(|w| w[1] <= w[0]), "seed {seed}");
            assert!(fe.iter().all(|&f| f >= 0.0));
            let tail: Vec<(f64, f64)> = run.times.iter().zip(&fe).filter(|(_, f)| **f > 1e-12).map(|(t, f)| (*t, f.ln())).collect();
            let first = tail.first().unwrap();
            let last = tail.last().unwrap();
            assert!((first.1 - last.1) / (last.0 - first.0) > 0.0);
        }
    }
}

#[test]
fn energy_and_free_energy_move_apart() {
    let p = FlowParams::new(1.0, 1.0, 0.5, 0.01).unwrap();
    let a0 = ConformationTensor::new(Tensor::scalar(2, 0.1)).unwrap();
    let run = integrate_homogeneous(&MacroModel::OldroydB, |_| Tensor::zeros(2), &a0, &p, 3.0).unwrap();
    let energy: Vec<f64> = run.states.iter().map(|a| energy_functional(&[(*a, 1.0)], 0.0, &p)).collect();
    let free: Vec<f64> = run.states.iter().map(|a| oldroyd_b_free_energy(0.0, &[(*a, 1.0)], &p).unwrap().total).collect();
    assert!(energy.last().unwrap() > &energy[0]);
    assert!(free.last().unwrap() < &free[0]);
}

#[test]
fn corotational_relaxes_under_pure_strain() {
    let p = FlowParams::new(1.0, 1.0, 0.5, 0.01).unwrap();
    let a0 = ConformationTensor::new(Tensor::diag(&[2.0, 0.5])).unwrap();
    let run = integrate_homogeneous(&MacroModel::Corotational, |_| Tensor::diag(&[0.4, -0.4]), &a0, &p, 1.0).unwrap();
    let exact = 1.0 + (-1.0f64).exp();
    assert!((run.last().tensor()[(0, 0)] / exact - 1.0).abs() < 1e-2);
}

#[test]
fn strong_extension_keeps_fene_p_admissible() {
    let p = FlowParams::new(1.0, 1.0, 0.5, 0.05).unwrap();
    let b = 10.0;
    let run = integrate_homogeneous(&MacroModel::fene_p(b).unwrap(), |_| Tensor::diag(&[5.0, -5.0]), &ConformationTensor::identity(2), &p, 3.0).unwrap();
    assert!(run.states.iter().all(|a| a.trace() < b && a.tensor().min_eigenvalue() > 0.0));
}

#[test]
fn trajectory_table_columns() {
    let p = FlowParams::new(1.0, 1.0, 0.5, 0.1).unwrap();
    let run = integrate_homogeneous(&MacroModel::OldroydB, |_| shear(1.0), &ConformationTensor::identity(2), &p, 1.0).unwrap();
    let t = run.to_table(&MacroModel::OldroydB, &p).unwrap();
    assert_eq!(t.header(), ["t", "A_xx", "A_xy", "A_yy", "free_energy", "dissipation"]);
    assert_eq!(t.len(), 11);
}
