use fracgel::constants::{constants, poisson_mass_residual};
use fracgel::corpus::{bump, constant, gaussian_bump};
use fracgel::extension::PoissonKernel;
use fracgel::field::{rescale, Field, Tail};
use fracgel::nonlocal::{frac_laplacian, PvQuadratureScheme};
use fracgel::regularity::scaled_mass;
use fracgel::report::blob_hash;
use fracgel::Params;
use proptest::prelude::*;

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cases(16))]

    #[test]
    fn poisson_kernel_has_unit_mass(n in 1usize..=4, s in 0.05f64..0.95, t in 1e-3f64..1e2) {
        let p = Params::new(n, s).unwrap();
        let d = constants(&p).unwrap().d_ns;
        prop_assert!(poisson_mass_residual(&p, d, t) < 1e-9);
    }

    #[test]
    fn flap_ignores_constants_and_scales_linearly(
        s in 0.15f64..0.85, a in -2.0f64..2.0, b in -3.0f64..3.0, x in -1.0f64..1.0,
    ) {
        let p = Params::new(1, s).unwrap();
        let u = bump(&p).unwrap();
        let v = u.affine(a, b);
        let lu = frac_laplacian(&u, &[x], &p, &PvQuadratureScheme::for_field(&u)).unwrap();
        let lv = frac_laplacian(&v, &[x], &p, &PvQuadratureScheme::for_field(&v)).unwrap();
        prop_assert!((lv - a * lu).abs() <= 1e-6 * (1.0 + lu.abs()), "{lv} vs {}", a * lu);
    }

    #[test]
    fn flap_is_scale_covariant(s in 0.2f64..0.8, lambda in 0.9f64..1.0, x0 in -0.1f64..0.1, x in -0.5f64..0.5) {
        // (-Δ)^s [u(x0 + λ·)](x) = λ^{2s} (-Δ)^s u(x0 + λx)
        let p = Params::new(1, s).unwrap();
        let u = bump(&p).unwrap();
        let v = rescale(&u, &[x0], lambda, &p).unwrap();
        let lu = frac_laplacian(&u, &[x0 + lambda * x], &p, &PvQuadratureScheme::for_field(&u)).unwrap();
        let lv = frac_laplacian(&v, &[x], &p, &PvQuadratureScheme::for_field(&v)).unwrap();
        let expect = lambda.powf(2.0 * s) * lu;
        prop_assert!((lv - expect).abs() <= 1e-4 * (1.0 + expect.abs()), "{lv} vs {expect}");
    }

    #[test]
    fn constants_extend_to_constants(c in -5.0f64..5.0, s in 0.1f64..0.9, x in -1.0f64..1.0, t in 0.01f64..2.0) {
        let p = Params::new(1, s).unwrap();
        let u = constant(&p, c).unwrap();
        let k = PoissonKernel::new(&p).unwrap();
        let w = k.extend_at(&u, &[x], t);
        prop_assert!((w - c).abs() <= 1e-7 * (1.0 + c.abs()), "{w} vs {c}");
    }

    #[test]
    fn scaled_mass_is_translation_invariant(shift in -1.0f64..1.0, x in -0.5f64..0.5, r in 0.05f64..0.5) {
        let p = Params::new(1, 0.25).unwrap();
        let u = gaussian_bump(&p, 1.0, 0.5, vec![0.0]).unwrap();
        let v = gaussian_bump(&p, 1.0, 0.5, vec![shift]).unwrap();
        let a = scaled_mass(&u, &[x], r, 2.0, &p);
        let b = scaled_mass(&v, &[x + shift], r, 2.0, &p);
        prop_assert!((a - b).abs() <= 1e-8 * a.abs().max(1.0), "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(cases(32))]

    #[test]
    fn grid_csv_round_trips(values in prop::collection::vec(-10.0f64..10.0, 17), tail_b in -3.0f64..3.0) {
        let p = Params::new(1, 0.5).unwrap();
        let u = Field::from_grid_samples(1, 2.0, 17, values.clone(), Tail::Constant(tail_b)).unwrap();
        let back = Field::parse_csv(&u.to_csv(), &p).unwrap();
        prop_assert_eq!(back.values(), &values[..]);
        prop_assert_eq!(back.tail(), Tail::Constant(tail_b));
        prop_assert_eq!(back.to_csv(), u.to_csv());
    }

    #[test]
    fn blob_hash_separates_lengths(bytes in prop::collection::vec(any::<u8>(), 0..64)) {
        let h = blob_hash(&bytes);
        prop_assert_eq!(h.len(), 64);
        prop_assert_eq!(h.clone(), blob_hash(&bytes));
        let mut longer = bytes.clone();
        longer.push(0);
        prop_assert_ne!(h, blob_hash(&longer));
    }
}
