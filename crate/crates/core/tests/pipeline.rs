use std::f64::consts::PI;
use std::sync::OnceLock;

use cloaklab::convergence::{eps_sweep, SweepConfig};
use cloaklab::geometry::{Link, LinkComponent, ManifoldModel};
use cloaklab::helmholtz::{Discretization, FourierMode, HelmholtzProblem, Source};
use cloaklab::mesh::{build_mesh, RegionWindow};
use cloaklab::transform::TransformationMap;
use proptest::prelude::*;

fn two_punctures() -> (ManifoldModel, Link) {
    let m = ManifoldModel::standard(2).unwrap();
    let l = Link::new(
        &m,
        vec![
            LinkComponent::Point { position: [1.5, 1.5] },
            LinkComponent::Point { position: [4.5, 4.5] },
        ],
        None,
    )
    .unwrap();
    (m, l)
}

#[test]
fn two_holes_topology_and_convergence() -> Result<(), cloaklab::Error> {
    let (m, l) = two_punctures();
    let mesh = build_mesh(&m, &l, 0.1, 0.1)?;
    assert_eq!(mesh.euler_characteristic(), -2);
    assert_eq!(mesh.boundary_loops().len(), 2);
    mesh.check_invariants(15.0)?;

    let cfg = SweepConfig {
        model: m,
        link: l,
        eps_list: vec![0.3, 0.15, 0.075],
        h: 0.05,
        k2: -1.0,
        source: Source::Fourier(vec![FourierMode::cos(&[1, 0], 1.0)]),
        window: RegionWindow::Box { lo: [2.6, 0.1], hi: [3.4, 0.9] },
        reference_check_h: None,
    };
    let r = eps_sweep(&cfg)?;
    assert!(r.l2_decreasing && r.final_below_half, "{:?}", r.rows);
    Ok(())
}

#[test]
fn blow_up_image_avoids_the_cloak_interior() -> Result<(), cloaklab::Error> {
    let (m, l) = two_punctures();
    let map = TransformationMap::blow_up(&l);
    let mesh = build_mesh(&m, &l, 0.05, 0.1)?;
    let r = l.radius_bound();
    for x in mesh.vertices() {
        let y = map.map_forward(x)?;
        let (_, d) = l.nearest(&y);
        // every physical point lies outside the open disk of radius R/2
        assert!(d >= r / 2.0 - 1e-12, "{x:?} -> {y:?}");
        let back = map.map_inverse(&y)?;
        assert!(l.model().wrap(&back).iter().zip(x).all(|(a, b)| (a - b).abs() < 1e-10));
    }
    Ok(())
}

fn small() -> &'static (ManifoldModel, Discretization) {
    static D: OnceLock<(ManifoldModel, Discretization)> = OnceLock::new();
    D.get_or_init(|| {
        let m = ManifoldModel::standard(2).unwrap();
        let l = Link::single_point(&m, [PI, PI]).unwrap();
        let d = Discretization::new(build_mesh(&m, &l, 0.2, 0.25).unwrap(), &m).unwrap();
        (m, d)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn resolvent_is_self_adjoint(
        seed_f in proptest::collection::vec(-1.0f64..1.0, 4),
        seed_g in proptest::collection::vec(-1.0f64..1.0, 4),
        lambda in -5.0f64..-0.1,
    ) {
        let (_, d) = small();
        let field = |c: &[f64]| -> Vec<f64> {
            d.mesh().vertices().iter().map(|x| c[0] + c[1] * x[0].sin() + c[2] * (x[1] * 2.0).cos() + c[3] * (x[0] + x[1]).sin()).collect()
        };
        let (f, g) = (field(&seed_f), field(&seed_g));
        let rf = d.resolvent(lambda, &f).unwrap();
        let rg = d.resolvent(lambda, &g).unwrap();
        let mass = &d.forms().mass;
        let a = mass.bilinear(&rf, &g).unwrap();
        let b = mass.bilinear(&f, &rg).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()), "{a} vs {b}");
    }

    #[test]
    fn solve_is_linear(a in -2.0f64..2.0, b in -2.0f64..2.0) {
        let (m, d) = small();
        let s1 = Source::Fourier(vec![FourierMode::cos(&[1, 0], 1.0)]);
        let s2 = Source::Fourier(vec![FourierMode::sin(&[0, 1], 1.0)]);
        let both = Source::Fourier(vec![FourierMode::cos(&[1, 0], a), FourierMode::sin(&[0, 1], b)]);
        let solve = |s: Source| d.solve(m, &HelmholtzProblem { k2: 0.5, source: s }).unwrap();
        let (u1, u2, u) = (solve(s1), solve(s2), solve(both));
        for i in 0..u.len() {
            prop_assert!((u[i] - a * u1[i] - b * u2[i]).abs() <= 1e-9);
        }
    }
}
