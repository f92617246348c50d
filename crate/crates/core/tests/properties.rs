use num_complex::Complex64;
use proptest::prelude::*;

use qrflab::data::{decode_cache, encode_cache, parse_idx, Dataset};
use qrflab::encoding::{qrf_features_fast, qrf_features_reference, EncodingDescriptor, EncodingParams};
use qrflab::readout::{softmax_cross_entropy, ClassifierParams};
use qrflab::statevector::{fwht_in_place, sample_shots, StateVector};
use qrflab::{PermutationKind, PermutationSpec};

fn complex_vec(n: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 1usize << n)
        .prop_map(|v| v.into_iter().map(|(re, im)| Complex64::new(re, im)).collect())
}

fn kind() -> impl Strategy<Value = PermutationKind> {
    prop_oneof![Just(PermutationKind::General), Just(PermutationKind::SingleQubitOnly)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn fwht_is_an_involution_and_preserves_norm(v in (1usize..=8).prop_flat_map(complex_vec)) {
        let norm: f64 = v.iter().map(|a| a.norm_sqr()).sum();
        let mut w = v.clone();
        fwht_in_place(&mut w);
        let norm_w: f64 = w.iter().map(|a| a.norm_sqr()).sum();
        prop_assert!((norm - norm_w).abs() < 1e-12 * norm.max(1.0));
        fwht_in_place(&mut w);
        for (a, b) in v.iter().zip(&w) {
            prop_assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn permutation_inverse_and_composition(n in 1usize..=8, k in kind(), s1 in any::<u64>(), s2 in any::<u64>()) {
        let p = PermutationSpec::draw(n, k, s1).unwrap();
        let q = PermutationSpec::draw(n, k, s2).unwrap();
        prop_assert!(p.compose(&p.inverse()).unwrap().is_identity());
        prop_assert!(p.inverse().compose(&p).unwrap().is_identity());
        let pq = p.compose(&q).unwrap();
        for l in 0..p.dim() {
            prop_assert_eq!(pq.apply_index(l), p.apply_index(q.apply_index(l)));
        }
        if k == PermutationKind::SingleQubitOnly {
            prop_assert!(p.compose(&p).unwrap().is_identity());
            prop_assert_eq!(pq.kind(), PermutationKind::SingleQubitOnly);
        }
    }

    #[test]
    fn permuting_a_state_keeps_it_normalized(n in 1usize..=7, s in any::<u64>()) {
        let perm = PermutationSpec::draw(n, PermutationKind::General, s).unwrap();
        let phases: Vec<f64> = (0..1usize << n).map(|i| (i as f64 * 0.77 + s as f64 * 1e-9).sin()).collect();
        let mut st = StateVector::from_phases(&phases).unwrap();
        st.fwht();
        st.apply_permutation(&perm).unwrap();
        prop_assert!((st.norm_sqr() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn qrf_features_are_distributions(
        n in 1usize..=6,
        l in 1usize..=5,
        sigma in 0.05f64..3.0,
        seed in any::<u64>(),
        x in prop::collection::vec(0.0f64..=1.0, 5),
    ) {
        let params = EncodingParams::draw(5, n, l, sigma, seed).unwrap();
        let perm = PermutationSpec::draw(n, PermutationKind::General, seed).unwrap();
        let fast = qrf_features_fast(&x, &params, &perm).unwrap();
        prop_assert!(fast.iter().all(|&p| p >= -1e-15));
        prop_assert!((fast.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let reference = qrf_features_reference(&x, &params, &perm).unwrap();
        for (a, b) in fast.iter().zip(&reference) {
            prop_assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn descriptor_round_trip_regenerates_identical_params(
        d in 1usize..20, n in 1usize..8, l in 1usize..6, sigma in 0.01f64..5.0, seed in any::<u64>(),
    ) {
        let p = EncodingParams::draw(d, n, l, sigma, seed).unwrap();
        let text = p.descriptor().to_string();
        let back: EncodingDescriptor = text.parse().unwrap();
        prop_assert_eq!(back.regenerate().unwrap(), p);
    }

    #[test]
    fn shot_counts_sum_to_shots(n in 1usize..=8, shots in 1u64..100_000, seed in any::<u64>()) {
        let dim = 1usize << n;
        let raw: Vec<f64> = (0..dim).map(|i| ((i * 7 + 3) % 11) as f64).collect();
        let total: f64 = raw.iter().sum();
        let p: Vec<f64> = raw.iter().map(|v| v / total).collect();
        let emp = sample_shots(&p, shots, seed).unwrap();
        prop_assert_eq!(emp.counts().iter().sum::<u64>(), shots);
        for (c, q) in emp.counts().iter().zip(&p) {
            if *q == 0.0 {
                prop_assert_eq!(*c, 0);
            }
        }
        prop_assert_eq!(emp, sample_shots(&p, shots, seed).unwrap());
    }

    #[test]
    fn cross_entropy_gradient_sums_to_zero(
        logits in prop::collection::vec(-50.0f64..50.0, 2..12),
        t in any::<prop::sample::Index>(),
    ) {
        let target = t.index(logits.len());
        let (loss, grad) = softmax_cross_entropy(&logits, target).unwrap();
        prop_assert!(loss >= 0.0 && loss.is_finite());
        prop_assert!(grad.iter().sum::<f64>().abs() < 1e-12);
        prop_assert!(grad[target] <= 0.0);
    }

    #[test]
    fn checkpoint_round_trip_is_bit_exact(
        c in 1usize..5, f in 1usize..6, seed in any::<u64>(),
    ) {
        let w: Vec<f64> = (0..c * f).map(|k| ((k as u64 ^ seed) as f64).sin() * 1e3).collect();
        let b: Vec<f64> = (0..c).map(|k| (k as f64 + seed as f64).cos() / 7.0).collect();
        let p = ClassifierParams::from_parts(c, f, w, b).unwrap();
        let back = ClassifierParams::from_checkpoint(&p.to_checkpoint()).unwrap();
        prop_assert_eq!(back, p);
    }

    #[test]
    fn dataset_cache_round_trip(n in 0usize..30, d in 1usize..6, seed in any::<u64>()) {
        let inputs: Vec<f64> = (0..n * d).map(|k| (((k as u64).wrapping_mul(seed | 1)) % 256) as f64 / 255.0).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let ds = Dataset::new("prop", inputs, labels, d, 3).unwrap();
        prop_assert_eq!(decode_cache(&encode_cache(&ds)).unwrap(), ds);
    }

    #[test]
    fn idx_parser_never_panics(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let _ = parse_idx(&bytes);
    }
}
