use koopman_core::dictionary::{Dictionary, DictionarySpec};
use koopman_core::dynamics::*;
use koopman_core::linalg::{eig, C64};
use koopman_core::noise::{corrupt, interpolate_missing, NoiseSpec};
use koopman_core::operator::*;
use koopman_core::predictor::*;
use nalgebra::DVector;
use std::time::Instant;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) }
}

fn main() {
    let net = SwingNetwork::three_machine();
    let model = DynamicsModel::SwingNetwork(net);
    let eq = equilibrium(&model, &DVector::zeros(6)).unwrap();
    let dt = 0.01;
    let fault = FaultEvent { apply_time: 0.1, clear_time: 0.2, target_bus: 1, admittance_scale: 0.95 };
    // 0.2s fault setup + 11s post-fault
    let full = simulate(&model, &eq, dt, 1120, &[fault]).unwrap();
    let clean = full.slice(full.index_at(0.2), full.n_samples()).unwrap(); // 11 s post-clear

    // reference modes: continuous Jacobian eigenvalues, oscillatory
    let jac = model.jacobian(&eq);
    let jac_eigs = eig(&jac).unwrap().values;
    let mut reference: Vec<C64> = jac_eigs.iter().filter(|l| l.im.abs() > 1e-9).cloned().collect();
    reference.sort_by(|a, b| a.re.abs().total_cmp(&b.re.abs()));
    println!("reference oscillatory modes: {:?}", reference);

    let dict = Dictionary::monomials(6, 2).unwrap();
    println!("dictionary K = {}", dict.size());

    for snr in [20.0, 17.0] {
        let mut edmd_errs = vec![];
        let mut robust_errs = vec![];
        let mut pair_rel = vec![];
        let mut chosen_cs = vec![];
        let t0 = Instant::now();
        for seed in 0..20u64 {
            let noisy = corrupt(&clean, &NoiseSpec::with_snr(snr, seed)).unwrap();
            let noisy = interpolate_missing(&noisy).unwrap();
            let features = dict.lift_trajectory(&noisy).unwrap();
            let gram = GramPair::from_features(&features).unwrap();
            let m_edmd = edmd(&gram, &dict, dt, 0.0).unwrap();
            let (m_rob, cv) = robust_edmd_cv(&features, &dict, dt, &Default::default()).unwrap();
            chosen_cs.push(cv.chosen_c);
            let s_edmd = spectrum(&m_edmd).unwrap();
            let s_rob = spectrum(&m_rob).unwrap();
            let e_edmd = mode_error_lists(&s_edmd.oscillatory_by_jw_distance(1e-6), &reference, 4).unwrap();
            let e_rob = mode_error_lists(&s_rob.oscillatory_by_jw_distance(1e-6), &reference, 4).unwrap();
            edmd_errs.push(e_edmd);
            robust_errs.push(e_rob);
            // dominant pair only (n=2)
            let p_rob = mode_error_lists(&s_rob.oscillatory_by_jw_distance(1e-6), &reference, 2).unwrap();
            pair_rel.push(p_rob / reference[0].norm());
        }
        println!("SNR {snr}: median edmd = {:.4}, median robust = {:.4}, median pair rel = {:.4} ({:.1?} for 20 seeds, median c = {:.5})",
            median(edmd_errs.clone()), median(robust_errs.clone()), median(pair_rel.clone()), t0.elapsed(), median(chosen_cs));
    }

    // forecast: 4s train / 2s horizon at 20 dB
    let noisy = corrupt(&clean, &NoiseSpec::with_snr(20.0, 1)).unwrap();
    let settings = ForecastSettings {
        dictionary: DictionarySpec::Monomials { degree: 2 },
        estimator: EstimatorSpec::Robust { c: None },
        denoise_x0: true,
    };
    let t0 = Instant::now();
    let reports = rolling_forecast(&settings, &noisy, Some(&clean), 4.0, 2.0).unwrap();
    for r in &reports {
        let speed_err: f64 = r.per_state_relative_error[3..6].iter().sum::<f64>() / 3.0;
        println!("window @ {:.1}s: mean rel err (all) = {:.4}, (speeds) = {:.4}, plain = {:.4}",
            r.window_start_s, r.mean_relative_error, speed_err, r.mean_plain_error);
    }
    println!("forecast took {:.1?} for {} windows", t0.elapsed(), reports.len());

    // length sweep at 20 dB
    let t0 = Instant::now();
    let sweep = error_vs_training_length(&settings, &noisy, &clean, &[1.0,2.0,3.0,4.0,5.0,6.0], 1.0).unwrap();
    for p in &sweep {
        println!("L = {} s: rel = {:.4}, plain = {:.4}", p.train_length_s, p.mean_relative_error, p.mean_plain_error);
    }
    println!("sweep took {:.1?}", t0.elapsed());
}
