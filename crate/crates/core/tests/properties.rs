use std::sync::Arc;

use proptest::prelude::*;

use bundlefactor::bundle::{dw_distance, Algebra, AlgebraField, AtlasSpec, BundleAtlas, MatrixClass, Section, Structure, Twist};
use bundlefactor::curvature::{riemann_endomorphism, MetricChart, VectorField, VectorFieldPair};
use bundlefactor::matrix::{compose_in_order, is_unipotent_rank_le};
use bundlefactor::mesh::{build_standard_complex, SimplicialComplex, StandardKind};
use bundlefactor::pointwise::{gauss_jordan_factors, gram_schmidt_factors, ShearStyle, UnipotentFactor};
use bundlefactor::symplectic::{symplectic_gauss_jordan_factors, symplectic_residual, SymplecticForm};
use bundlefactor::{Mat, ScalarKind, C64};

fn small_generator(n: usize, complex: bool, entries: &[f64]) -> Mat {
    let mut a = Mat::from_fn(n, |i, j| {
        let k = 2 * (i * n + j);
        C64::new(entries[k], if complex { entries[k + 1] } else { 0.0 })
    });
    let tr = a.trace() / C64::new(n as f64, 0.0);
    for i in 0..n {
        a[(i, i)] -= tr;
    }
    a
}

fn generator_strategy(scale: f64) -> impl Strategy<Value = (usize, bool, Vec<f64>)> {
    (2usize..=5, any::<bool>(), prop::collection::vec(-scale..scale, 50))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn gauss_jordan_round_trip((n, complex, e) in generator_strategy(0.02)) {
        let s = small_generator(n, complex, &e).exp();
        for style in [ShearStyle::Compact, ShearStyle::LineElementary] {
            let fs = gauss_jordan_factors(&s, style).unwrap();
            let ms: Vec<Mat> = fs.iter().map(|f| f.matrix()).collect();
            let prod = &compose_in_order(n, &ms) * &s;
            prop_assert!((&prod - &Mat::identity(n)).max_abs() <= 1e-10);
            for m in &ms {
                prop_assert!(is_unipotent_rank_le(m, 1, 1e-10));
            }
        }
    }

    #[test]
    fn gram_schmidt_lands_in_compact_group((n, complex, e) in generator_strategy(0.5)) {
        let s = small_generator(n, complex, &e).exp();
        let fs = gram_schmidt_factors(&s, ShearStyle::Compact).unwrap();
        let ms: Vec<Mat> = fs.iter().map(|f| f.matrix()).collect();
        let q = &compose_in_order(n, &ms) * &s;
        prop_assert!(q.unitarity_residual() <= 1e-9);
        prop_assert!((q.determinant() - C64::new(1.0, 0.0)).norm() <= 1e-9);
    }

    #[test]
    fn gram_schmidt_fixes_compact_inputs((n, complex, e) in generator_strategy(2.0)) {
        let a = small_generator(n, complex, &e);
        // skew(-Hermitian) part generates SO/SU
        let k = (&a - &a.adjoint()).scale_real(0.5);
        let q = k.exp();
        let fs = gram_schmidt_factors(&q, ShearStyle::Compact).unwrap();
        prop_assert!(fs.iter().all(|f| f.magnitude() == 0.0));
    }

    #[test]
    fn symplectic_gauss_jordan_round_trip(half in 1usize..=3, e in prop::collection::vec(-0.02f64..0.02, 36)) {
        let n = 2 * half;
        let omega = SymplecticForm::new(half).matrix();
        let raw = Mat::from_fn(n, |i, j| C64::new(e[i * n + j], 0.0));
        let sym = (&raw + &raw.transpose()).scale_real(0.5);
        let s = (&omega * &sym).scale_real(-1.0).exp();
        prop_assert!(symplectic_residual(&s).unwrap() <= 1e-12);
        let fs = symplectic_gauss_jordan_factors(&s).unwrap();
        let ms: Vec<Mat> = fs.iter().map(|f| f.matrix()).collect();
        let prod = &compose_in_order(n, &ms) * &s;
        prop_assert!((&prod - &Mat::identity(n)).max_abs() <= 1e-10);
        for m in &ms {
            prop_assert!(symplectic_residual(m).unwrap() <= 1e-10);
            prop_assert!(is_unipotent_rank_le(m, 2, 1e-10));
        }
    }

    #[test]
    fn complex_json_round_trip(kind in 0usize..4, size in 4usize..7) {
        let k = [StandardKind::Interval(size), StandardKind::Circle(size), StandardKind::TorusGrid(size), StandardKind::Icosphere(1 + size % 2)][kind];
        let c = build_standard_complex(k).unwrap();
        let back = SimplicialComplex::from_json(&c.to_json()).unwrap();
        prop_assert_eq!(back.to_file(), c.to_file());
    }

    #[test]
    fn curvature_is_antisymmetric(th in 0.3f64..2.8, ph in -3.0f64..3.0, u in prop::collection::vec(-1.0f64..1.0, 2), v in prop::collection::vec(-1.0f64..1.0, 2)) {
        let m = MetricChart::round_sphere(1.0);
        let pair = VectorFieldPair { u: VectorField::Constant { components: u.clone() }, v: VectorField::Constant { components: v.clone() } };
        let swapped = VectorFieldPair { u: pair.v.clone(), v: pair.u.clone() };
        let a = riemann_endomorphism(&m, &pair, &[th, ph]).unwrap();
        let b = riemann_endomorphism(&m, &swapped, &[th, ph]).unwrap();
        prop_assert!((&a + &b).max_abs() <= 1e-8);
        // sectional curvature one: R(U, V) = U ⊗ V♭ − V ⊗ U♭
        let g = [1.0, th.sin().powi(2)];
        let expect = Mat::from_fn(2, |l, k| C64::new(u[l] * g[k] * v[k] - v[l] * g[k] * u[k], 0.0));
        prop_assert!((&a - &expect).max_abs() <= 1e-6);
    }
}

fn circle_atlas() -> Arc<BundleAtlas> {
    let c = Arc::new(build_standard_complex(StandardKind::Circle(8)).unwrap());
    Arc::new(
        BundleAtlas::new(
            c,
            AtlasSpec {
                rank: 3,
                scalar: ScalarKind::Real,
                structure: Structure::Orthogonal,
                twist: Twist::Signs { signs: vec![vec![1.0, -1.0, -1.0]] },
                transition_scale: 1.0,
            },
        )
        .unwrap(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn dw_is_a_pseudometric(seeds in prop::array::uniform3(0u64..1000)) {
        let atlas = circle_atlas();
        let points = atlas.complex().sample_points(3);
        let s: Vec<Section> = seeds
            .iter()
            .map(|&seed| Section::new(atlas.clone(), Arc::new(AlgebraField::random(atlas.clone(), Algebra::Sl, 0.7, seed).unwrap()), MatrixClass::Special))
            .collect();
        let d = |a: &Section, b: &Section| dw_distance(a, b, &points).unwrap();
        prop_assert_eq!(d(&s[0], &s[1]), d(&s[1], &s[0]));
        prop_assert!(d(&s[0], &s[0]) <= 1e-12);
        prop_assert!(d(&s[0], &s[2]) <= d(&s[0], &s[1]) + d(&s[1], &s[2]) + 1e-10);
    }
}
