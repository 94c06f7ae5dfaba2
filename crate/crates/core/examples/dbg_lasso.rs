use koopman_core::dictionary::Dictionary;
use koopman_core::dynamics::*;
use koopman_core::noise::{corrupt, NoiseSpec};
use koopman_core::operator::GramPair;
use nalgebra::{DMatrix, DVector};

fn main() {
    let net = SwingNetwork::three_machine();
    let model = DynamicsModel::SwingNetwork(net);
    let eq = equilibrium(&model, &DVector::zeros(6)).unwrap();
    let fault = FaultEvent { apply_time: 0.1, clear_time: 0.2, target_bus: 1, admittance_scale: 0.95 };
    let full = simulate(&model, &eq, 0.01, 1120, &[fault]).unwrap();
    let clean = full.slice(full.index_at(0.2), full.n_samples()).unwrap();
    let noisy = corrupt(&clean, &NoiseSpec::with_snr(20.0, 0)).unwrap();
    let dict = Dictionary::monomials(6, 2).unwrap();
    let features = dict.lift_trajectory(&noisy).unwrap();
    let gram = GramPair::from_features(&features).unwrap();
    let g = gram.g();
    let a = gram.a();
    println!("G diag range: {:.3e} .. {:.3e}", g.diagonal().min(), g.diagonal().max());
    println!("cond(G) = {:.3e}", koopman_core::linalg::condition_estimate(g));
    let gtg = g.transpose() * g;
    let gta = g.transpose() * a;
    println!("|GtA|max (c_max) = {:.3e}", gta.abs().max());

    // raw CD on column 2, track KKT violation
    let k = g.nrows();
    let col = 2;
    let target = gta.column(col).clone_owned();
    let diag: Vec<f64> = (0..k).map(|i| gtg[(i,i)]).collect();
    let c_tilde = gta.abs().max() * 1e-6; // smallest grid point
    let mut coeffs = DVector::<f64>::zeros(k);
    let mut w = DVector::<f64>::zeros(k);
    for sweep in 0..200_001usize {
        let mut max_update: f64 = 0.0;
        for i in 0..k {
            let q = diag[i];
            if q <= 0.0 { continue; }
            let rho = target[i] - (w[i] - q*coeffs[i]);
            let s = if rho > c_tilde { rho - c_tilde } else if rho < -c_tilde { rho + c_tilde } else { 0.0 };
            let updated = s / q;
            let delta = updated - coeffs[i];
            if delta != 0.0 {
                w.axpy(delta, &gtg.column(i), 1.0);
                coeffs[i] = updated;
                max_update = max_update.max(delta.abs());
            }
        }
        if sweep % 20000 == 0 {
            let wf = &gtg * &coeffs;
            let mut viol: f64 = 0.0;
            for i in 0..k {
                let grad = wf[i] - target[i];
                let v = if coeffs[i] != 0.0 { (grad + c_tilde*coeffs[i].signum()).abs() } else { (grad.abs()-c_tilde).max(0.0) };
                viol = viol.max(v);
            }
            println!("sweep {sweep}: max_update={max_update:.3e} kkt={viol:.3e}");
        }
    }
}
