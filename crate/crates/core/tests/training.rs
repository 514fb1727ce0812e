use ssrgan::checkpoint::to_bytes;
use ssrgan::trainer::{train, TrainConfig};
use ssrgan::verify::random_tensor;
use ssrgan::{ModelConfig, Side, SsrganModel, Tensor};

fn sines(n: usize, len: usize, seed: u64) -> Tensor<f64> {
    let phase = random_tensor([n, 1, 1], seed);
    let data = (0..n)
        .flat_map(|i| {
            let p = phase.data()[i];
            (0..len).map(move |t| (0.5 * t as f64 + p).sin())
        })
        .collect();
    Tensor::new([n, 1, len], data).unwrap()
}

fn small_cfg() -> TrainConfig {
    TrainConfig {
        iterations: 8,
        batch_size: 4,
        final_g_only_iters: 2,
        ..TrainConfig::default()
    }
}

fn run(cfg: &TrainConfig) -> (Vec<u8>, ssrgan::trainer::TrainHistory) {
    let mut model = SsrganModel::<f64>::build(ModelConfig::small()).unwrap();
    let a = random_tensor([16, 1, 24], 1);
    let b = random_tensor([16, 1, 24], 2);
    let h = train(&mut model, &a, &b, cfg).unwrap();
    (to_bytes(&model).unwrap(), h)
}

#[test]
fn disabling_a_subnet_equals_zeroing_its_weights() {
    let mut off = small_cfg();
    off.sn2_enabled = false;
    off.sn3_enabled = false;
    let mut zero = small_cfg();
    zero.weights.lambda_ae = 0.0;
    zero.weights.lambda_mid_mse = 0.0;
    zero.weights.lambda_mid_mmd = 0.0;

    let (p_off, h_off) = run(&off);
    let (p_zero, h_zero) = run(&zero);
    assert_eq!(p_off, p_zero, "parameters differ");
    for (r, z) in h_off.records.iter().zip(&h_zero.records) {
        assert_eq!((r.ae, r.mid_mse, r.mid_mmd), (0.0, 0.0, 0.0));
        assert!(z.ae > 0.0 && z.mid_mse > 0.0);
        assert_eq!((r.cycle, r.gan_g, r.gan_d, r.total), (z.cycle, z.gan_g, z.gan_d, z.total));
    }

    let (p_full, _) = run(&small_cfg());
    assert_ne!(p_full, p_off);
}

#[test]
fn autoencoder_alone_learns_to_reconstruct() {
    let mut cfg = TrainConfig {
        iterations: 300,
        batch_size: 8,
        final_g_only_iters: 5,
        sn3_enabled: false,
        ..TrainConfig::default()
    };
    cfg.adam.lr = 1e-2;
    cfg.weights.lambda_cyc = 0.0;
    cfg.weights.lambda_gan = 0.0;

    let mut model = SsrganModel::<f64>::build(ModelConfig::small()).unwrap();
    let a = sines(32, 24, 3);
    let b = sines(32, 24, 4);
    let err = |m: &SsrganModel<f64>| {
        let y = m.autoencode(&a, Side::A).unwrap();
        let num: f64 = y.data().iter().zip(a.data()).map(|(p, q)| (p - q).powi(2)).sum();
        num / a.data().iter().map(|v| v * v).sum::<f64>()
    };
    let before = err(&model);
    let h = train(&mut model, &a, &b, &cfg).unwrap();
    let after = err(&model);
    assert!(after < 0.05 * before, "relative AE error {before} -> {after}");
    assert!(h.records.last().unwrap().ae < 0.1 * h.records[0].ae);
}
