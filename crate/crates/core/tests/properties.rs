mod common;

use proptest::prelude::*;
use strength_init::matrix_io::{conv_from_2d, from_csv, read_wmat, to_csv, write_wmat};
use strength_init::stats::{kruskal_wallis, pearson, welch_t_test};
use strength_init::{
    conv_to_2d, pa_rewire, pa_rewire_conv, strengths, transpose, ConvTensor, PassMode, RngStream,
    Side, StreamPurpose, WeightMatrix,
};

use common::sorted;

fn matrix(max: usize) -> impl Strategy<Value = WeightMatrix> {
    (1..=max, 1..=max).prop_flat_map(|(r, c)| {
        prop::collection::vec(-1e3..1e3f64, r * c)
            .prop_map(move |data| WeightMatrix::new(r, c, data).unwrap())
    })
}

fn sample(min: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0f64, min..30)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn rewire_keeps_the_multiset(m in matrix(24), seed: u64, both: bool) {
        let mode = if both { PassMode::Bidirectional } else { PassMode::InputOnly };
        let mut rng = RngStream::new(StreamPurpose::Rewire, seed, 0, 0);
        let out = pa_rewire(&m, mode, &mut rng).unwrap();
        prop_assert_eq!(out.shape(), m.shape());
        prop_assert_eq!(out.sorted_entries(), m.sorted_entries());
        if !both {
            for c in 0..m.cols() {
                prop_assert_eq!(sorted(out.column(c)), sorted(m.column(c)));
            }
        }
    }

    #[test]
    fn rewire_is_deterministic(m in matrix(16), seed: u64) {
        let a = pa_rewire(&m, PassMode::Bidirectional, &mut RngStream::new(StreamPurpose::Rewire, seed, 1, 2)).unwrap();
        let b = pa_rewire(&m, PassMode::Bidirectional, &mut RngStream::new(StreamPurpose::Rewire, seed, 1, 2)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn conv_rewire_keeps_the_multiset(
        (w, h, z, o) in (1..4usize, 1..4usize, 1..5usize, 1..6usize),
        seed: u64,
    ) {
        let n = w * h * z * o;
        let data: Vec<f64> = (0..n).map(|i| ((i * 7919) % 101) as f64 - 50.0).collect();
        let t = ConvTensor::new(w, h, z, o, data).unwrap();
        let out = pa_rewire_conv(&t, PassMode::Bidirectional, &mut RngStream::new(StreamPurpose::Rewire, seed, 0, 0)).unwrap();
        prop_assert_eq!(out.dims(), t.dims());
        prop_assert_eq!(sorted(out.data().to_vec()), sorted(t.data().to_vec()));
    }

    #[test]
    fn wmat_round_trip_is_bitwise(m in matrix(20)) {
        let mut bytes = Vec::new();
        write_wmat(&m, &mut bytes).unwrap();
        let back = read_wmat(bytes.as_slice()).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        let same = back.data().iter().zip(m.data()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn csv_round_trip_is_exact(m in matrix(12)) {
        prop_assert_eq!(from_csv(&to_csv(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn transpose_is_an_involution(m in matrix(40)) {
        let t = transpose(&m);
        prop_assert_eq!(t.shape(), (m.cols(), m.rows()));
        prop_assert_eq!(transpose(&t), m.clone());
        prop_assert_eq!(strengths(&t, Side::Input), strengths(&m, Side::Output));
    }

    #[test]
    fn conv_relabel_round_trips((w, h, z, o) in (1..5usize, 1..5usize, 1..5usize, 1..5usize)) {
        let data: Vec<f64> = (0..w * h * z * o).map(|i| i as f64).collect();
        let t = ConvTensor::new(w, h, z, o, data).unwrap();
        let m = conv_to_2d(&t);
        prop_assert_eq!(m.shape(), (w * h * z, o));
        prop_assert_eq!(conv_from_2d(&m, w, h, z).unwrap(), t);
    }

    #[test]
    fn strength_sums_agree(m in matrix(30)) {
        let si: f64 = strengths(&m, Side::Input).iter().sum();
        let so: f64 = strengths(&m, Side::Output).iter().sum();
        let total: f64 = m.data().iter().map(|v| v.abs()).sum::<f64>().max(1.0);
        prop_assert!((si - so).abs() <= 1e-9 * total);
    }

    #[test]
    fn welch_is_antisymmetric(a in sample(2), b in sample(2)) {
        let ab = welch_t_test(&a, &b).unwrap();
        let ba = welch_t_test(&b, &a).unwrap();
        prop_assert_eq!(ab.statistic, -ba.statistic);
        prop_assert_eq!(ab.p_value, ba.p_value);
        prop_assert!((0.0..=1.0).contains(&ab.p_value));
    }

    #[test]
    fn tests_ignore_affine_rescaling(
        a in sample(3), b in sample(3), scale in 0.01..100.0f64, shift in -50.0..50.0f64,
    ) {
        let f = |v: &[f64]| v.iter().map(|x| x * scale + shift).collect::<Vec<_>>();
        let (fa, fb) = (f(&a), f(&b));
        let w0 = welch_t_test(&a, &b).unwrap();
        let w1 = welch_t_test(&fa, &fb).unwrap();
        prop_assert!((w0.p_value - w1.p_value).abs() < 1e-7);
        let k0 = kruskal_wallis(&a, &b).unwrap();
        let k1 = kruskal_wallis(&fa, &fb).unwrap();
        prop_assert!((k0.statistic - k1.statistic).abs() < 1e-9);
        let n = a.len().min(b.len());
        if let (Ok(r0), Ok(r1)) = (pearson(&a[..n], &b[..n]), pearson(&fa[..n], &fb[..n])) {
            prop_assert!((r0.statistic - r1.statistic).abs() < 1e-7);
        }
    }
}
