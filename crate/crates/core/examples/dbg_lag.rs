use koopman_core::dictionary::Dictionary;
use koopman_core::dynamics::*;
use koopman_core::linalg::{eig, C64};
use koopman_core::noise::{corrupt, NoiseSpec};
use koopman_core::operator::*;
use nalgebra::DVector;
use std::time::Instant;

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 { v[n/2] } else { 0.5*(v[n/2-1]+v[n/2]) }
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
    let dom = reference[0];

    let dict = Dictionary::monomials(6, 2).unwrap();
    let pad_err = |s: &Spectrum, n: usize| -> f64 {
        let mut o = s.oscillatory_by_jw_distance(1e-6);
        while o.len() < n { o.push(C64::new(0.0,0.0)); }
        mode_error_lists(&o, &reference, n).unwrap()
    };
    for snr in [20.0f64, 17.0] {
        for lag in [5usize, 10, 12, 15] {
            let dt_eff = dt * lag as f64;
            let t0 = Instant::now();
            let (mut e2, mut e4, mut r2, mut r4, mut cs) = (vec![], vec![], vec![], vec![], vec![]);
            for seed in 0..10u64 {
                let noisy = corrupt(&clean, &NoiseSpec::with_snr(snr, seed)).unwrap();
                let features = dict.lift_trajectory(&noisy).unwrap();
                let gram = GramPair::from_features_lagged(&features, lag).unwrap();
                let s_e = spectrum(&edmd(&gram, &dict, dt_eff, 0.0).unwrap()).unwrap();
                let (m_r, cv) = robust_edmd_cv(&features, lag, &dict, dt, &Default::default()).unwrap();
                let s_r = spectrum(&m_r).unwrap();
                e2.push(pad_err(&s_e, 2)); e4.push(pad_err(&s_e, 4));
                r2.push(pad_err(&s_r, 2)); r4.push(pad_err(&s_r, 4));
                cs.push(cv.chosen_c);
            }
            println!("snr {snr} lag {lag:2}: edmd pair {:.3} ({:.1}%) m4 {:.3} | robust pair {:.3} ({:.1}%) m4 {:.3} | med c {:.4} [{:.1?}]",
                median(e2.clone()), 100.0*median(e2)/dom.norm(), median(e4),
                median(r2.clone()), 100.0*median(r2)/dom.norm(), median(r4), median(cs), t0.elapsed());
        }
    }
}
