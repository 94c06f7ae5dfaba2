use koopman_core::dictionary::Dictionary;
use koopman_core::dynamics::*;
use koopman_core::linalg::{eig, C64};
use koopman_core::noise::{corrupt, NoiseSpec};
use koopman_core::operator::*;
use nalgebra::{DMatrix, DVector};

fn lag_gram(features: &DMatrix<f64>, lag: usize) -> GramPair {
    let m = features.nrows() - lag;
    let f0 = features.rows(0, m).into_owned();
    let f1 = features.rows(lag, m).into_owned();
    let g0 = f0.transpose() * &f0 / m as f64;
    let g = (&g0 + g0.transpose()) * 0.5;
    let a = f0.transpose() * &f1 / m as f64;
    GramPair::from_parts(g, a, m).unwrap()
}

fn main() {
    let net = SwingNetwork::three_machine();
    let model = DynamicsModel::SwingNetwork(net);
    let eq = equilibrium(&model, &DVector::zeros(6)).unwrap();
    let dt = 0.01;
    let fault = FaultEvent { apply_time: 0.1, clear_time: 0.2, target_bus: 1, admittance_scale: 0.95 };
    let full = simulate(&model, &eq, dt, 1020, &[fault]).unwrap();
    let clean = full.slice(full.index_at(0.2), full.n_samples()).unwrap();
    let jac_eigs = eig(&model.jacobian(&eq)).unwrap().values;
    let mut reference: Vec<C64> = jac_eigs.iter().filter(|l| l.im.abs() > 1e-9).cloned().collect();
    reference.sort_by(|a, b| a.re.abs().total_cmp(&b.re.abs()));

    let dict = Dictionary::monomials(6, 2).unwrap();
    let lag = 12usize;
    let dt_eff = dt * lag as f64;
    let noisy = corrupt(&clean, &NoiseSpec::with_snr(20.0, 3)).unwrap();
    let features = dict.lift_trajectory(&noisy).unwrap();
    let gram = GramPair::from_features_lagged(&features, lag).unwrap();
    let cmax = robust_c_max(&gram).unwrap();
    println!("normalized c_max = {cmax:.4}");
    for frac in [0.0, 1e-6, 1e-5, 1e-4, 1e-3, 3e-3, 1e-2, 3e-2, 0.1] {
        let c = cmax * frac;
        let m = robust_edmd(&gram, &dict, dt_eff, c, &Default::default()).unwrap();
        let s = spectrum(&m).unwrap();
        let mut o = s.oscillatory_by_jw_distance(1e-6);
        while o.len() < 4 { o.push(C64::new(0.0,0.0)); }
        let p2 = mode_error_lists(&o, &reference, 2).unwrap();
        let p4 = mode_error_lists(&o, &reference, 4).unwrap();
        let nnz = m.k_matrix.iter().filter(|v| v.abs() > 1e-12).count();
        println!("c = {:.2e} (frac {frac:.0e}): pair {:.3} 4modes {:.3} nnz {} top osc: {}", c, p2, p4, nnz,
            o.iter().take(3).map(|v| format!("{:.2}{:+.2}i", v.re, v.im)).collect::<Vec<_>>().join(" "));
    }
    let cv = cross_validate_c(&features, lag, 5, 20, &Default::default()).unwrap();
    println!("cv chosen = {:.4}", cv.chosen_c);
    for (c, e) in cv.grid.iter().zip(&cv.mean_errors) {
        println!("  c = {:.3e}  cv_err = {:.6}", c, e);
    }
}
