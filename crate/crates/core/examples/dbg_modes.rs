use koopman_core::dictionary::Dictionary;
use koopman_core::dynamics::*;
use koopman_core::lasso::LassoOptions;
use koopman_core::linalg::{eig, C64};
use koopman_core::noise::{corrupt, NoiseSpec};
use koopman_core::operator::*;
use nalgebra::DVector;

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
    let jac = model.jacobian(&eq);
    let jac_eigs = eig(&jac).unwrap().values;
    let mut reference: Vec<C64> = jac_eigs.iter().filter(|l| l.im.abs() > 1e-9).cloned().collect();
    reference.sort_by(|a, b| a.re.abs().total_cmp(&b.re.abs()));

    let dict = Dictionary::monomials(6, 2).unwrap();
    let opts = LassoOptions::default();

    for record_s in [3.0f64, 5.0, 8.0] {
        let n_total = ((record_s + 0.2)/dt) as usize;
        let full = simulate(&model, &eq, dt, n_total, &[fault]).unwrap();
        let clean = full.slice(full.index_at(0.2), full.n_samples()).unwrap();
        for snr in [20.0f64] {
            let mut rows: Vec<(String, Vec<f64>)> = vec![];
            let labels: Vec<String> = vec!["edmd".into(), "c=1e-4".into(), "c=1e-3".into(), "c=3e-3".into(), "c=1e-2".into(), "c=3e-2".into(), "cv".into()];
            for l in &labels { rows.push((l.clone(), vec![])); }
            let mut cv_choices = vec![];
            for seed in 0..12u64 {
                let noisy = corrupt(&clean, &NoiseSpec::with_snr(snr, seed)).unwrap();
                let features = dict.lift_trajectory(&noisy).unwrap();
                let gram = GramPair::from_features(&features).unwrap();
                let mut models = vec![edmd(&gram, &dict, dt, 0.0).unwrap()];
                for c in [1e-4, 1e-3, 3e-3, 1e-2, 3e-2] {
                    models.push(robust_edmd(&gram, &dict, dt, c, &opts).unwrap());
                }
                let (mcv, cvr) = robust_edmd_cv(&features, &dict, dt, &opts).unwrap();
                cv_choices.push(cvr.chosen_c);
                models.push(mcv);
                for (i, m) in models.iter().enumerate() {
                    let s = spectrum(m).unwrap();
                    let mut ident = s.oscillatory_by_jw_distance(1e-6);
                    while ident.len() < 4 { ident.push(C64::new(0.0, 0.0)); }
                    let e = mode_error_lists(&ident, &reference, 4).unwrap();
                    rows[i].1.push(e);
                }
            }
            print!("record {record_s}s snr {snr}: ");
            for (l, v) in &rows { print!("{l}: {:.3}  ", median(v.clone())); }
            println!("\n   cv chose: {:?}", cv_choices.iter().map(|c| format!("{c:.4}")).collect::<Vec<_>>());
        }
    }
}
