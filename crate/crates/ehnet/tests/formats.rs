use ehnet::dump::{decode_binary, encode_binary};
use ehnet::wav::{read_wav, requantize, write_wav};
use ehnet_core::dsp::Waveform;
use ehnet_core::Matrix;
use proptest::collection::vec;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn binary_dump_round_trip((rows, cols, data) in (1usize..12, 1usize..12).prop_flat_map(|(r, c)| {
        (Just(r), Just(c), vec(any::<f32>().prop_filter("finite", |v| v.is_finite()), r * c))
    })) {
        let m = Matrix::from_vec(rows, cols, data).unwrap();
        let back = decode_binary(&encode_binary(&m)).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        prop_assert!(back.as_slice().iter().zip(m.as_slice()).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn truncated_dump_is_rejected(rows in 1usize..6, cols in 1usize..6, cut in 1usize..4) {
        let bytes = encode_binary(&Matrix::from_fn(rows, cols, |r, c| (r + c) as f32));
        prop_assert!(decode_binary(&bytes[..bytes.len() - cut]).is_err());
    }

    #[test]
    fn wav_round_trip_matches_requantize(samples in vec(-1.2f64..1.2, 1..500), deep in any::<bool>()) {
        let bits = if deep { 24 } else { 16 };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.wav");
        write_wav(&path, &Waveform::new(samples.clone(), 16_000).unwrap(), bits).unwrap();
        let back = read_wav(&path).unwrap();
        prop_assert_eq!(back.sample_rate(), 16_000);
        prop_assert_eq!(back.samples(), &requantize(&samples, bits)[..]);
        let step = 1.0 / f64::from(1u32 << (bits - 1));
        for (a, b) in back.samples().iter().zip(&samples) {
            if b.abs() < 1.0 - step {
                prop_assert!((a - b).abs() <= step / 2.0 + 1e-15);
            }
        }
    }
}
