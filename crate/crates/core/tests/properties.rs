use proptest::prelude::*;

use ssrgan::losses::{mk_mmd, MmdConfig};
use ssrgan::metrics::{inps, ptpr};
use ssrgan::signal::{segment, stitch, Recording};
use ssrgan::tensor::{conv1d, conv1d_adjoint, leaky_relu};
use ssrgan::verify::{adjoint_error, random_tensor};
use ssrgan::{ConvSpec, Tensor};

fn spec_strategy() -> impl Strategy<Value = (ConvSpec, usize)> {
    (1usize..4, 1usize..4, 0usize..5, 1usize..4, 0usize..4, 0usize..20).prop_map(
        |(cin, cout, half_k, stride, pad, extra)| {
            let k = 2 * half_k + 1;
            let spec = ConvSpec::new(cin, cout, k, stride, pad.min(half_k)).unwrap();
            let len = k + extra;
            (spec, len)
        },
    )
}

fn samples(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-5.0f64..5.0, n)
}

fn recording(channels: usize, len: usize, seed: u64) -> Recording {
    let t = random_tensor([1, channels, len], seed);
    let data = t.data().chunks(len).map(|c| c.to_vec()).collect();
    Recording::new(250.0, data).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn adjoint_identity((spec, len) in spec_strategy(), seed in any::<u64>(), batch in 1usize..3) {
        let w = random_tensor(spec.weight_shape(), seed ^ 1);
        let e = adjoint_error(&spec, w.data(), batch, len, seed).unwrap();
        prop_assert!(e <= 1e-10, "relative error {e}");
    }

    #[test]
    fn conv_is_linear_in_x((spec, len) in spec_strategy(), seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let w = random_tensor(spec.weight_shape(), seed);
        let x1 = random_tensor([2, spec.in_channels, len], seed ^ 2);
        let x2 = random_tensor([2, spec.in_channels, len], seed ^ 3);
        let mix = Tensor::new(
            x1.shape(),
            x1.data().iter().zip(x2.data()).map(|(p, q)| a * p + b * q).collect(),
        ).unwrap();
        let lhs = conv1d(&mix, w.data(), None, &spec).unwrap();
        let y1 = conv1d(&x1, w.data(), None, &spec).unwrap();
        let y2 = conv1d(&x2, w.data(), None, &spec).unwrap();
        let scale = lhs.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for ((l, p), q) in lhs.data().iter().zip(y1.data()).zip(y2.data()) {
            prop_assert!((l - (a * p + b * q)).abs() <= 1e-12 * scale * 10.0);
        }
    }

    #[test]
    fn adjoint_output_has_original_length((spec, len) in spec_strategy(), seed in any::<u64>()) {
        let w = random_tensor(spec.weight_shape(), seed);
        let y = random_tensor([1, spec.out_channels, spec.output_len(len).unwrap()], seed ^ 9);
        let x = conv1d_adjoint(&y, w.data(), &spec, len).unwrap();
        prop_assert_eq!(x.shape(), [1, spec.in_channels, len]);
    }

    #[test]
    fn leaky_relu_is_max(v in samples(16), slope in 0.0f64..1.0) {
        let t = Tensor::new([1, 1, 16], v.clone()).unwrap();
        let out = leaky_relu(&t, slope);
        for (o, x) in out.data().iter().zip(&v) {
            prop_assert_eq!(*o, x.max(slope * x));
        }
    }

    #[test]
    fn mmd_symmetric_and_nonnegative(n in 1usize..6, m in 1usize..6, seed in any::<u64>(), shift in -2.0f64..2.0) {
        let x = random_tensor([n, 1, 4], seed);
        let y = random_tensor([m, 1, 4], seed ^ 5).map(|v| v + shift);
        for cfg in [MmdConfig::default(), MmdConfig::fixed(vec![0.5, 2.0])] {
            let xy = mk_mmd(&x, &y, &cfg).unwrap();
            let yx = mk_mmd(&y, &x, &cfg).unwrap();
            prop_assert!((xy - yx).abs() <= 1e-12 * xy.abs().max(1.0));
            prop_assert!(xy >= -1e-12);
            prop_assert_eq!(mk_mmd(&x, &x, &cfg).unwrap(), 0.0);
        }
    }

    #[test]
    fn segment_stitch_round_trip(channels in 1usize..4, windows in 1usize..5, seed in any::<u64>(), offset in -50.0f64..50.0) {
        let mut rec = recording(channels, windows * 250, seed);
        rec.channels.iter_mut().flatten().for_each(|v| *v = *v * 7.0 + offset);
        let back = stitch(&segment(&rec, 1.0, None).unwrap()).unwrap();
        for (a, b) in rec.channels.iter().flatten().zip(back.channels.iter().flatten()) {
            prop_assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0));
        }
    }

    #[test]
    fn inps_laws(seed in any::<u64>(), c in 0.01f64..100.0) {
        let x = recording(2, 750, seed);
        let y = recording(2, 750, seed ^ 11);
        prop_assert_eq!(inps(&x, &y).unwrap(), -inps(&y, &x).unwrap());
        let cx = Recording::new(250.0, x.channels.iter().map(|ch| ch.iter().map(|v| c * v).collect()).collect()).unwrap();
        prop_assert!((inps(&x, &cx).unwrap() + 20.0 * c.log10()).abs() <= 1e-6);
        let swap = |r: &Recording| Recording::new(250.0, vec![r.channels[1].clone(), r.channels[0].clone()]).unwrap();
        let direct = inps(&x, &y).unwrap();
        let permuted = inps(&swap(&x), &swap(&y)).unwrap();
        prop_assert!((direct - permuted).abs() <= 1e-12 * direct.abs().max(1.0));
    }

    #[test]
    fn ptpr_reciprocal(seed in any::<u64>(), channels in 1usize..4) {
        let x = recording(channels, 600, seed);
        let y = recording(channels, 600, seed ^ 13);
        let p = ptpr(&x, &y).unwrap() * ptpr(&y, &x).unwrap();
        prop_assert!((p - 1.0).abs() <= 1e-9);
    }
}
