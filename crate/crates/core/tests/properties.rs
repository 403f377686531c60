use proptest::prelude::*;
use veilkit_core::frame::Frame;
use veilkit_core::metrics::{f_lambda, rank, MetricRecord};
use veilkit_core::obfuscator::blend_value;
use veilkit_core::saliency::{reassemble, PatchScores, Reassembly};
use veilkit_core::{tensor, PatchGeometry};

proptest! {
    #[test]
    fn blend_stays_between_inputs(i in 0.0f32..=1.0, s in 0.0f32..=1.0, n in 0.0f32..=1.0) {
        let o = blend_value(i, s, n);
        prop_assert!(i.min(n) <= o && o <= i.max(n));
        prop_assert_eq!(blend_value(i, 0.0, n).to_bits(), i.to_bits());
        prop_assert_eq!(blend_value(i, 1.0, n).to_bits(), n.to_bits());
    }

    #[test]
    fn decoding_arbitrary_bytes_never_panics(bytes in proptest::collection::vec(any::<u8>(), 0..64)) {
        let _ = tensor::decode("fuzz.tnsr", &bytes);
    }

    #[test]
    fn truncating_a_valid_tensor_is_an_error(len in 0usize..31) {
        let full = tensor::Tensor::f32(vec![2, 3], vec![0.0; 6]).unwrap().encode().unwrap();
        prop_assert_eq!(full.len(), 4 + 1 + 1 + 1 + 8 + 24);
        prop_assert!(tensor::decode("cut.tnsr", &full[..len.min(full.len() - 1)]).is_err());
    }

    #[test]
    fn f_lambda_is_affine_in_lambda(a in 0.0f64..=100.0, p in 0.0f64..=100.0, l in 0.0f64..=1.0) {
        let r = MetricRecord::new("m", "d", a, p).unwrap();
        let (f0, f1) = (f_lambda(&r, 0.0).unwrap(), f_lambda(&r, 1.0).unwrap());
        prop_assert!((f_lambda(&r, l).unwrap() - ((1.0 - l) * f0 + l * f1)).abs() < 1e-12);
    }

    #[test]
    fn ranking_is_sorted_and_complete(rows in proptest::collection::vec((0.0f64..=100.0, 0.0f64..=100.0), 1..12), l in 0.0f64..=1.0) {
        let records: Vec<MetricRecord> = rows
            .iter()
            .enumerate()
            .map(|(i, &(a, p))| MetricRecord::new(&format!("m{i}"), "d", a, p).unwrap())
            .collect();
        let ranked = rank(&records, l).unwrap();
        prop_assert_eq!(ranked.len(), records.len());
        for pair in ranked.windows(2) {
            prop_assert!(pair[0].score >= pair[1].score);
        }
    }

    #[test]
    fn nearest_reassembly_keeps_grid_extrema(
        values in proptest::collection::vec(0.0f32..=1.0, 12),
        patch in 1usize..6,
        stride in 1usize..6,
    ) {
        let g = PatchGeometry::new(patch, stride).unwrap();
        let (h, w) = ((3 - 1) * stride + patch, (4 - 1) * stride + patch);
        let scores = PatchScores { grid_height: 3, grid_width: 4, values: values.clone() };
        let map = reassemble(&scores, g, h, w, Reassembly::Nearest).unwrap();
        let lo = values.iter().cloned().fold(f32::INFINITY, f32::min);
        let hi = values.iter().cloned().fold(f32::NEG_INFINITY, f32::max);
        prop_assert!(map.values.iter().all(|&v| lo <= v && v <= hi));
        if stride > patch / 2 {
            // every cell then owns at least its center pixel
            prop_assert!(map.values.contains(&lo) && map.values.contains(&hi));
        }
    }

    #[test]
    fn png_round_trip_is_lossless_on_the_8_bit_grid(px in proptest::collection::vec(0u8..=255, 2 * 3 * 3)) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("f.png");
        let f = Frame::new(2, 3, 3, px.iter().map(|&b| b as f32 / 255.0).collect()).unwrap();
        f.write_png(&path).unwrap();
        prop_assert_eq!(veilkit_core::frame::load_frame(&path).unwrap(), f);
    }
}
