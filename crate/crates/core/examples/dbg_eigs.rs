use koopman_core::dictionary::Dictionary;
use koopman_core::dynamics::*;
use koopman_core::linalg::{eig, C64};
use koopman_core::noise::{corrupt, NoiseSpec};
use koopman_core::operator::*;
use nalgebra::DVector;

fn main() {
    let net = SwingNetwork::three_machine();
    let model = DynamicsModel::SwingNetwork(net);
    let eq = equilibrium(&model, &DVector::zeros(6)).unwrap();
    let dt = 0.01;
    let fault = FaultEvent { apply_time: 0.1, clear_time: 0.2, target_bus: 1, admittance_scale: 0.95 };
    let full = simulate(&model, &eq, dt, 1020, &[fault]).unwrap();
    let clean = full.slice(full.index_at(0.2), full.n_samples()).unwrap();
    let jac_eigs = eig(&model.jacobian(&eq)).unwrap().values;
    println!("reference λc: {:?}\n", jac_eigs.iter().map(|v| format!("{:.3}{:+.3}i", v.re, v.im)).collect::<Vec<_>>());

    for (label, dict) in [("spc", Dictionary::state_plus_constant(6).unwrap()), ("mono2", Dictionary::monomials(6, 2).unwrap())] {
        for snr in [40.0, 20.0] {
            let noisy = corrupt(&clean, &NoiseSpec::with_snr(snr, 3)).unwrap();
            let features = dict.lift_trajectory(&noisy).unwrap();
            let gram = GramPair::from_features(&features).unwrap();
            let m_edmd = edmd(&gram, &dict, dt, 0.0).unwrap();
            let s_edmd = spectrum(&m_edmd).unwrap();
            let (m_rob, cv) = robust_edmd_cv(&features, &dict, dt, &Default::default()).unwrap();
            let s_rob = spectrum(&m_rob).unwrap();
            let fmt = |v: &[C64]| v.iter().take(6).map(|v| format!("{:.2}{:+.2}i", v.re, v.im)).collect::<Vec<_>>().join("  ");
            println!("[{label} @ {snr}dB] edmd osc:   {}", fmt(&s_edmd.oscillatory_by_jw_distance(1e-6)));
            println!("[{label} @ {snr}dB] robust osc: {}   (cv c = {:.4}, nnz = {})", fmt(&s_rob.oscillatory_by_jw_distance(1e-6)), cv.chosen_c,
                m_rob.k_matrix.iter().filter(|v| v.abs() > 1e-12).count());
        }
    }
}
