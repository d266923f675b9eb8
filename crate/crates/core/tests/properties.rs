use std::collections::BTreeSet;

use num_complex::Complex64;
use proptest::prelude::*;

use resonant::engine::{read_tensor, write_tensor, CouplingTensor, Dynamics, StructuredRhs};
use resonant::families::{canonical_tuple, orbit_size, CoefficientFamily, FAMILY_NAMES};
use resonant::manifold::{fit_manifold, ManifoldPoint};
use resonant::mode_space::{alpha_to_beta, beta_to_alpha, ModeVector, WeightParameter};
use resonant::stationary::magnetic_translate;

fn permutations(v: &[usize]) -> Vec<Vec<usize>> {
    if v.len() <= 1 {
        return vec![v.to_vec()];
    }
    let mut out = Vec::new();
    for i in 0..v.len() {
        let mut rest = v.to_vec();
        let head = rest.remove(i);
        for mut p in permutations(&rest) {
            p.insert(0, head);
            out.push(p);
        }
    }
    out
}

/// Every reordering within the two groups, plus the group swap.
fn orbit(idx: &[usize]) -> BTreeSet<Vec<usize>> {
    let h = idx.len() / 2;
    let mut set = BTreeSet::new();
    for bra in permutations(&idx[..h]) {
        for ket in permutations(&idx[h..]) {
            set.insert([bra.clone(), ket.clone()].concat());
            set.insert([ket.clone(), bra.clone()].concat());
        }
    }
    set
}

fn complex_vec(len: usize) -> impl Strategy<Value = Vec<Complex64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| Complex64::new(re, im)), len)
}

fn family_name() -> impl Strategy<Value = &'static str> {
    prop::sample::select(FAMILY_NAMES.to_vec())
}

fn resonant_tuple(width: usize, max: usize) -> impl Strategy<Value = Vec<usize>> {
    prop::collection::vec(0..=max, width).prop_filter("resonant", move |v| {
        let h = width / 2;
        v[..h].iter().sum::<usize>() == v[h..].iter().sum::<usize>()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn orbit_size_matches_enumeration(idx in prop_oneof![
        prop::collection::vec(0usize..4, 4),
        prop::collection::vec(0usize..3, 6),
    ]) {
        let orb = orbit(&idx);
        prop_assert_eq!(orbit_size(&idx), orb.len() as u64);
        let canon = canonical_tuple(&idx);
        prop_assert!(orb.contains(&canon));
        for member in &orb {
            prop_assert_eq!(&canonical_tuple(member), &canon);
        }
    }

    #[test]
    fn coefficients_are_orbit_invariant((name, idx) in family_name().prop_flat_map(|name| {
        let width = CoefficientFamily::from_name(name, None).unwrap().arity().width();
        (Just(name), resonant_tuple(width, 4))
    })) {
        let f = CoefficientFamily::from_name(name, None).unwrap();
        let c0 = f.c(&idx).unwrap();
        for member in orbit(&idx) {
            let c = f.c(&member).unwrap();
            prop_assert!((c - c0).abs() <= 1e-13 * c0.abs().max(1.0), "{name} {idx:?} {member:?}");
        }
    }

    #[test]
    fn weights_round_trip(v in complex_vec(12), g in prop_oneof![
        (0.25f64..4.0).prop_map(|g| WeightParameter::finite(g).unwrap()),
        Just(WeightParameter::Infinite),
    ]) {
        let a = ModeVector::new(v).unwrap();
        let back = beta_to_alpha(&alpha_to_beta(&a, g).unwrap(), g).unwrap();
        for (x, y) in a.iter().zip(back.iter()) {
            prop_assert!((x - y).norm() <= 1e-12 * x.norm().max(1.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// `Σ ᾱ_n F_n` is real and `F` is covariant under both U(1) actions
    /// `α_n → e^{iθ} α_n` and `α_n → e^{inθ} α_n`.
    #[test]
    fn rhs_symmetries(name in family_name(), v in complex_vec(6), theta in 0.0f64..6.3) {
        let f = CoefficientFamily::from_name(name, None).unwrap();
        let t = CouplingTensor::build(&f, 5).unwrap();
        let a = ModeVector::new(v).unwrap();
        let fa = t.rhs(&a).unwrap();
        let scale = fa.iter().map(|z| z.norm()).fold(1.0, f64::max);

        let pairing: Complex64 = a.iter().zip(fa.iter()).map(|(x, y)| x.conj() * y).sum();
        prop_assert!(pairing.im.abs() <= 1e-12 * scale);

        let rot = Complex64::from_polar(1.0, theta);
        let ga = ModeVector::new(a.iter().map(|x| x * rot).collect()).unwrap();
        let gf = t.rhs(&ga).unwrap();
        for (x, y) in gf.iter().zip(fa.iter()) {
            prop_assert!((x - y * rot).norm() <= 1e-12 * scale);
        }

        let phase = |n: usize| Complex64::from_polar(1.0, theta * n as f64);
        let sa = ModeVector::new(a.iter().enumerate().map(|(n, x)| x * phase(n)).collect()).unwrap();
        let sf = t.rhs(&sa).unwrap();
        for (n, (x, y)) in sf.iter().zip(fa.iter()).enumerate() {
            prop_assert!((x - y * phase(n)).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn tensor_and_structured_agree(name in family_name(), v in complex_vec(7)) {
        let f = CoefficientFamily::from_name(name, None).unwrap();
        let t = CouplingTensor::build(&f, 6).unwrap();
        let s = StructuredRhs::build(&f, 6).unwrap();
        let a = ModeVector::new(v).unwrap();
        let (x, y) = (t.rhs(&a).unwrap(), s.rhs(&a).unwrap());
        let scale = x.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for (p, q) in x.iter().zip(y.iter()) {
            prop_assert!((p - q).norm() <= 1e-12 * scale);
        }
    }

    #[test]
    fn tensor_file_round_trip(name in family_name(), cutoff in 0usize..5) {
        let f = CoefficientFamily::from_name(name, None).unwrap();
        let t = CouplingTensor::build(&f, cutoff).unwrap();
        let back = read_tensor(&write_tensor(&t)).unwrap();
        prop_assert_eq!(back, t);
    }

    #[test]
    fn fit_reconstructs_manifold_data(
        a in (0.05f64..2.0, 0.0f64..6.3), b in (0.0f64..2.0, 0.0f64..6.3), p in (0.1f64..0.8, 0.0f64..6.3)
    ) {
        let point = ManifoldPoint::new(
            Complex64::from_polar(a.0, a.1),
            Complex64::from_polar(b.0, b.1),
            Complex64::from_polar(p.0, p.1),
        ).unwrap();
        let beta = ModeVector::new(point.beta(40)).unwrap();
        let fit = fit_manifold(&beta).unwrap();
        prop_assert!(fit.residual <= 1e-10, "{point:?} -> {fit:?}");
    }

    /// Magnetic translations act unitarily; with a generous cutoff the
    /// truncation loss is negligible.
    #[test]
    fn translation_preserves_norm(n in 0usize..4, r in 0.0f64..1.0, phi in 0.0f64..6.3) {
        let e = ModeVector::unit(70, n).unwrap();
        let moved = magnetic_translate(&e, Complex64::from_polar(r, phi)).unwrap();
        prop_assert!((moved.norm_sqr() - 1.0).abs() <= 1e-12);
    }
}
