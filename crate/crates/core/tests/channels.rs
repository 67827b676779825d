//! Statistical checks on the generated Rician channels.

use isac_core::scenario::{free_space_path_loss, generate_channels};
use isac_core::{presets, ChannelModel, SystemParams};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn mean_channel_energy_matches_path_loss_times_antennas() {
    let mut cfg = presets::desk(0);
    let n_tx = 8;
    let draws = 10_000;
    cfg.params = SystemParams::new(n_tx, draws, 1, 28e9, 120e3, 1.0 / 120e3, 1.0, vec![1e-12; 4]).unwrap();
    let lambda = cfg.params.wavelength(cfg.geometry.c0);
    for kappa in [0.0, 1.0, 10.0] {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let set = generate_channels(&cfg.params, &cfg.geometry, &ChannelModel { rician_k: kappa }, &mut rng).unwrap();
        for k in 0..cfg.geometry.n_users() {
            let pl = free_space_path_loss(lambda, cfg.geometry.d_bs_user(k));
            let mean: f64 =
                (0..draws).map(|i| set.h(k, i).iter().map(|c| c.norm_sqr()).sum::<f64>()).sum::<f64>() / draws as f64;
            let ratio = mean / (pl * n_tx as f64);
            assert!((ratio - 1.0).abs() < 0.05, "kappa {kappa} user {k}: ratio {ratio}");
        }
    }
}
