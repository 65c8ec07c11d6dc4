use pemap::attractor::{
    boundary_segments, check_separation, saturation_sequence, trapping_region, DEFAULT_SATURATION_STEPS,
};
use pemap::interval::DEFAULT_MERGE_TOL;
use pemap::periodic::{find_periodic, heteroclinically_related};
use pemap::stability::{sweep_family, theta_map};
use pemap::transfer::{build_ulam, ergodic_components};
use pemap::{Error, Formula, Interval, PeMap};
use proptest::prelude::*;

const N: usize = 512;

/// Affine maps with three branches whose images lie in `[0, 1]`.
fn arb_map() -> impl Strategy<Value = PeMap> {
    (
        0.15f64..0.45,
        0.55f64..0.85,
        prop::array::uniform3((0.0f64..1.0, 0.0f64..1.0, any::<bool>())),
    )
        .prop_map(|(c0, c1, params)| {
            let partition = vec![0.0, c0, c1, 1.0];
            let formulas = partition
                .windows(2)
                .zip(params)
                .map(|(w, (u, v, flip))| {
                    let len = w[1] - w[0];
                    let s = 1.1 + u * ((1.0 / len).min(3.0) - 1.1);
                    let start = v * (1.0 - s * len);
                    if flip {
                        Formula::affine(-s, start + s * len + s * w[0])
                    } else {
                        Formula::affine(s, start - s * w[0])
                    }
                })
                .collect();
            PeMap::new(partition, formulas).expect("images stay in [0, 1]")
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn ulam_rows_are_stochastic(m in arb_map()) {
        let op = build_ulam(&m, N);
        for s in op.row_sums() {
            prop_assert!((s - 1.0).abs() <= 1e-12);
        }
    }

    #[test]
    fn stationary_vectors_are_densities(m in arb_map()) {
        let comps = ergodic_components(&m, N).unwrap();
        prop_assert!(!comps.is_empty());
        for c in &comps {
            let mass: f64 = c.density.iter().sum::<f64>() / N as f64;
            prop_assert!((mass - 1.0).abs() <= 1e-9);
            prop_assert!(c.density.iter().all(|&d| d >= 0.0));
            prop_assert_eq!(c.mixing_parts.len(), c.period);
        }
    }

    #[test]
    fn saturations_grow_and_close_up(m in arb_map(), a in 0.0f64..0.95) {
        let seq = saturation_sequence(&m, Interval::new(a, a + 0.05), DEFAULT_SATURATION_STEPS, DEFAULT_MERGE_TOL);
        for w in seq.windows(2) {
            prop_assert!(w[0].is_subset_of(&w[1], 1e-12));
        }
        let last = seq.last().unwrap();
        if seq.len() <= DEFAULT_SATURATION_STEPS {
            prop_assert!(m.image_of(last).is_subset_of(last, DEFAULT_MERGE_TOL));
        }
    }

    #[test]
    fn boundary_is_covered_and_phi_is_identity(m in arb_map()) {
        let comps = ergodic_components(&m, N).unwrap();
        let sep = check_separation(&m, &comps, 32);
        for (c, sup) in comps.iter().zip(&sep.supports) {
            match boundary_segments(&m, sup, 64, 2.0 / N as f64) {
                Err(Error::BoundaryNotCovered(x)) => prop_assert!(false, "{x} not covered"),
                Err(_) => prop_assume!(!sep.passes()),
                Ok(segs) => {
                    if sep.passes() {
                        let tr = trapping_region(&m, c, &segs, &m).unwrap();
                        for e in &tr.phi {
                            prop_assert!((e.value - e.x).abs() <= 1e-9);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn theta_f_is_the_identity(m in arb_map()) {
        match theta_map(&m, &m, N) {
            Err(Error::SeparationFailed) => {}
            Err(e) => prop_assert!(false, "{e}"),
            Ok(r) => {
                prop_assert!(r.bijective && r.period_preserved);
                prop_assert!(r.matching.iter().all(|(i, j)| i == j));
                prop_assert!(r.max_hausdorff() <= 2.0 / N as f64);
            }
        }
    }

    #[test]
    fn periodic_orbits_realize_their_itineraries(m in arb_map()) {
        let s = find_periodic(&m, 5, None).unwrap();
        for o in &s.orbits {
            let mut x = o.point;
            for &w in &o.itinerary {
                let b = &m.branches()[w];
                prop_assert!(x >= b.lo - 1e-9 && x <= b.hi + 1e-9);
                x = b.eval(x);
            }
            prop_assert!((x - o.point).abs() <= 1e-9);
        }
    }

    #[test]
    fn heteroclinic_relation_is_reflexive_and_symmetric(m in arb_map(), x in 0.0f64..1.0, y in 0.0f64..1.0) {
        prop_assert!(heteroclinically_related(&m, x, x, 1e-4, 200));
        prop_assert_eq!(
            heteroclinically_related(&m, x, y, 1e-4, 200),
            heteroclinically_related(&m, y, x, 1e-4, 200)
        );
    }
}

#[test]
fn sweeps_are_deterministic() {
    let params = [1.2, 1.3, 1.5, 1.7];
    let a = sweep_family(PeMap::lorenz, &params, 1024, 16);
    let b = sweep_family(PeMap::lorenz, &params, 1024, 16);
    assert_eq!(a, b);
}
