use koopman_core::dictionary::Dictionary;
use koopman_core::dynamics::*;
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
    let dict = Dictionary::state_plus_constant(6).unwrap();
    let lag = 12; let dt_eff = dt * lag as f64;
    let noisy = corrupt(&clean, &NoiseSpec::with_snr(20.0, 3)).unwrap();
    let features = dict.lift_trajectory(&noisy).unwrap();
    let gram = GramPair::from_features_lagged(&features, lag).unwrap();
    println!("cond(G) = {:.3e}", koopman_core::linalg::condition_estimate(gram.g()));
    let m_e = edmd(&gram, &dict, dt_eff, 0.0).unwrap();
    let c_tiny = robust_c_max(&gram).unwrap() * 1e-6;
    let m_r = robust_edmd(&gram, &dict, dt_eff, c_tiny, &Default::default()).unwrap();
    println!("entrywise |edmd - robust(c_tiny)| max = {:.3e}", (&m_e.k_matrix - &m_r.k_matrix).abs().max());
    println!("edmd K row0: {:?}", m_e.k_matrix.row(0).iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    println!("rob  K row0: {:?}", m_r.k_matrix.row(0).iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
    let s_e = spectrum(&m_e).unwrap();
    let s_r = spectrum(&m_r).unwrap();
    println!("edmd eigs: {:?}", s_e.discrete.iter().map(|v| format!("{:.3}{:+.3}i", v.re, v.im)).collect::<Vec<_>>());
    println!("rob  eigs: {:?}", s_r.discrete.iter().map(|v| format!("{:.3}{:+.3}i", v.re, v.im)).collect::<Vec<_>>());
}
