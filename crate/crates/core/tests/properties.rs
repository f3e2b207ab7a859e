use proptest::prelude::*;

use wavefield_core::connection::{format_tensor, gamma_tensor, parse_tensor, rescale_tensor};
use wavefield_core::filters::{constraint_residuals, make_filters, MAX_ORDER};
use wavefield_core::fock::FockBasis;
use wavefield_core::sparse::{format_coo, parse_coo, CsrMatrix};
use wavefield_core::transform::{forward, inverse, max_levels, CoeffVector};

proptest! {
    #[test]
    fn filters_satisfy_their_constraints(order in 1..=MAX_ORDER) {
        let r = constraint_residuals(&make_filters(order).unwrap());
        prop_assert!(r.sum < 1e-12);
        prop_assert!(r.orthonormality < 1e-12);
        let tol = if order >= 8 { 1e-10 } else { 1e-12 };
        prop_assert!(r.vanishing_moments < tol);
    }

    #[test]
    fn transform_round_trip_and_parseval(
        order in 1usize..=6,
        log_len in 4u32..=9,
        seed in any::<u64>(),
        depth in 0usize..8,
    ) {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let fp = make_filters(order).unwrap();
        let n = 1usize << log_len;
        let v = CoeffVector::new(3, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let levels = depth.min(max_levels(n, &fp));
        let p = forward(&v, &fp, levels).unwrap();
        prop_assert!((p.norm_squared() - v.norm_squared()).abs() < 1e-12 * v.norm_squared().max(1.0));
        let back = inverse(&p, &fp).unwrap();
        prop_assert_eq!(back.scale, 3);
        let err = back.entries().iter().zip(v.entries()).fold(0.0f64, |a, (x, y)| a.max((x - y).abs()));
        prop_assert!(err < 1e-12);
    }

    #[test]
    fn coo_text_round_trips(entries in prop::collection::vec((0usize..12, 0usize..12, -1e6f64..1e6), 0..40)) {
        let m = CsrMatrix::from_triplets(12, entries);
        prop_assert_eq!(parse_coo(&format_coo(&m)).unwrap(), m);
    }

    #[test]
    fn basis_enumeration_is_a_bijection(modes in 1usize..5, cutoff in 0usize..5, pick in any::<prop::sample::Index>()) {
        let b = FockBasis::new(modes, cutoff).unwrap();
        let i = pick.index(b.dim());
        let occ = b.occupations(i);
        prop_assert!(occ.iter().all(|&n| n <= cutoff));
        prop_assert_eq!(b.index_of(&occ).unwrap(), i);
    }
}

#[test]
fn coefficient_files_round_trip_bit_exactly() {
    for order in 2..=4 {
        let fp = make_filters(order).unwrap();
        for m in 2..=4 {
            for scale in [0, 2] {
                let t = rescale_tensor(&gamma_tensor(&fp, m).unwrap(), scale).unwrap();
                assert_eq!(parse_tensor(&format_tensor(&t)).unwrap(), t);
            }
        }
    }
}
