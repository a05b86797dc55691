mod common;

use proptest::prelude::*;
use vri::descriptors::{ld_point_with, SECTION_X};
use vri::dynamics::{rk4_step, IntegratorConfig};
use vri::experiments::Outcome;
use vri::*;

fn cfg_cases(n: u32) -> ProptestConfig {
    ProptestConfig::with_cases(n)
}

proptest! {
    #![proptest_config(cfg_cases(256))]

    #[test]
    fn symmetric_surface_is_even_in_y(x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let p = SystemParams::new(0.0);
        prop_assert_eq!(eval_potential(x, y, &p), eval_potential(x, -y, &p));
    }

    #[test]
    fn gradient_matches_finite_differences(x in -2.0f64..2.0, y in -2.0f64..2.0, c in -1.0f64..1.0) {
        let p = SystemParams::new(c);
        let h = 1e-6;
        let fx = (eval_potential(x + h, y, &p) - eval_potential(x - h, y, &p)) / (2.0 * h);
        let fy = (eval_potential(x, y + h, &p) - eval_potential(x, y - h, &p)) / (2.0 * h);
        let (gx, gy) = eval_gradient(x, y, &p);
        prop_assert!((gx - fx).abs() <= 1e-6 * gx.abs().max(1.0));
        prop_assert!((gy - fy).abs() <= 1e-6 * gy.abs().max(1.0));
    }

    #[test]
    fn hessian_is_symmetric(x in -2.0f64..2.0, y in -2.0f64..2.0, c in 0.0f64..0.5) {
        let h = eval_hessian(x, y, &SystemParams::new(c));
        prop_assert_eq!(h[(0, 1)], h[(1, 0)]);
    }

    #[test]
    fn upper_saddle_pinned(c in -5.0f64..5.0) {
        let p = SystemParams::new(c);
        prop_assert_eq!(eval_potential(0.0, 0.0, &p), 0.0);
        prop_assert_eq!(eval_gradient(0.0, 0.0, &p), (0.0, 0.0));
    }

    #[test]
    fn vector_field_is_hamiltonian(x in -2.0f64..2.0, y in -2.0f64..2.0, px in -1.0f64..1.0, py in -1.0f64..1.0) {
        let p = SystemParams::new(0.2);
        let v = vector_field(&PhaseState::new(x, y, px, py), &p);
        let (gx, gy) = eval_gradient(x, y, &p);
        prop_assert_eq!((v.x, v.y), (px, py));
        prop_assert!((v.px + gx).abs() < 1e-14 * gx.abs().max(1.0));
        prop_assert!((v.py + gy).abs() < 1e-14 * gy.abs().max(1.0));
    }
}

proptest! {
    #![proptest_config(cfg_cases(16))]

    #[test]
    fn trapped_energy_conserved(dx in -0.15f64..0.15, dy in -0.15f64..0.15, a in 0.0f64..std::f64::consts::TAU, c in 0.0f64..0.5) {
        let p = SystemParams::new(c);
        let set = critical_points(&p).unwrap();
        let w = set.require(CriticalKind::WellBottom).unwrap().position;
        let s0 = PhaseState::new(w.0 + dx, w.1 + dy, 0.3 * a.cos(), 0.3 * a.sin());
        let tr = integrate(s0, &p, 50.0, &[], 1e-9).unwrap();
        prop_assert_eq!(tr.termination, Termination::TimeLimit);
        prop_assert!(tr.max_energy_error < 1e-9, "{}", tr.max_energy_error);
    }

    #[test]
    fn time_reversal_returns_home(y in -0.3f64..0.3, py in -0.2f64..0.2, c in 0.0f64..0.5) {
        let p = SystemParams::new(c);
        let s0 = PhaseState::new(1.0, y, 0.1, py);
        let cfg = IntegratorConfig::default().with_record_stride(0);
        let fwd = cfg.integrate(s0, &p, 5.0, &[], 1.0).unwrap();
        prop_assume!(fwd.termination == Termination::TimeLimit);
        let back = cfg.integrate(fwd.final_state().time_reversed(), &p, 5.0, &[], 1.0).unwrap();
        let home = back.final_state().time_reversed();
        prop_assert!(home.distance(&s0) < 1e-7, "{}", home.distance(&s0));
    }

    #[test]
    fn descriptor_grows_with_tau(y in -0.4f64..0.4, py in -0.3f64..0.3, t1 in 0.5f64..4.0, dt in 0.1f64..4.0) {
        let p = SystemParams::new(0.1);
        let sec = SectionSpec::default();
        let s = lift_to_phase_space(y, py, &sec, &p);
        prop_assume!(s.is_some());
        let s = s.unwrap();
        let a = ld_point(&s, &p, t1, 0.5).unwrap();
        let b = ld_point(&s, &p, t1 + dt, 0.5).unwrap();
        prop_assert!(b.forward >= a.forward && b.backward >= a.backward);
    }

    #[test]
    fn mirrored_initial_conditions_swap_wells(y in 0.01f64..0.45) {
        let p = SystemParams::new(0.0);
        let x0 = -0.005;
        let px = (2.0 * (p.h0 - eval_potential(x0, y, &p))).sqrt();
        prop_assume!(px.is_finite());
        let ev = dynamics::EventSpec::well_entry(0.5);
        let cfg = IntegratorConfig::default().with_record_stride(0);
        let a = cfg.integrate(PhaseState::new(x0, y, px, 0.0), &p, 100.0, &ev, 1e-6).unwrap();
        let b = cfg.integrate(PhaseState::new(x0, -y, px, 0.0), &p, 100.0, &ev, 1e-6).unwrap();
        prop_assert_eq!(
            Outcome::from_termination(a.termination).mirrored(),
            Outcome::from_termination(b.termination)
        );
    }
}

#[test]
fn rk4_is_fourth_order() {
    let p = SystemParams::new(0.3);
    let s0 = PhaseState::new(1.0, 0.3, 0.2, -0.1);
    let run = |h: f64| {
        let n = (1.0 / h).round() as usize;
        (0..n).fold(s0, |s, _| rk4_step(&s, &p, h))
    };
    let reference = run(1e-4);
    let e1 = run(0.02).distance(&reference);
    let e2 = run(0.01).distance(&reference);
    let ratio = e1 / e2;
    assert!((ratio - 16.0).abs() < 2.0, "error ratio {ratio}");
}

#[test]
fn descriptor_matches_simpson_oracle() {
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
    let p = SystemParams::new(0.2);
    let sec = SectionSpec::default();
    let cfg = LdConfig::default();
    let mut checked = 0;
    while checked < 25 {
        let (y, py) = (rng.gen_range(-0.5..0.5), rng.gen_range(-0.45..0.45));
        let Some(s) = lift_to_phase_space(y, py, &sec, &p) else {
            continue;
        };
        let v = ld_point_with(&s, &p, &cfg);
        if v.truncated {
            continue;
        }
        let (f, b) = common::ld_oracle([s.x, s.y, s.px, s.py], p.c, cfg.tau, 0.5, 32000).unwrap();
        assert!((v.forward - f).abs() / f < 1e-4, "forward {} vs {f}", v.forward);
        assert!((v.backward - b).abs() / b < 1e-4, "backward {} vs {b}", v.backward);
        checked += 1;
    }
}

#[test]
fn symmetric_field_is_point_symmetric() {
    let sec = SectionSpec::default().with_grid(15, 15);
    let f = compute_field(&sec, &SystemParams::new(0.0), 2.0).unwrap();
    let (n_p, n_y) = f.status.dim();
    for i in 0..n_p {
        for j in 0..n_y {
            let (a, b) = (f.total[[i, j]], f.total[[n_p - 1 - i, n_y - 1 - j]]);
            assert!((a - b).abs() <= 1e-6 * a.abs().max(1.0), "{a} vs {b}");
            assert_eq!(f.status[[i, j]], f.status[[n_p - 1 - i, n_y - 1 - j]]);
        }
    }
}

#[test]
fn refined_grid_shares_nodes_bitwise() {
    let sec = SectionSpec::default().with_grid(7, 5);
    let p = SystemParams::new(0.3);
    let coarse = compute_field(&sec, &p, 1.0).unwrap();
    let fine = compute_field(&sec.refined(), &p, 1.0).unwrap();
    for i in 0..5 {
        for j in 0..7 {
            assert_eq!(coarse.coords(i, j), fine.coords(2 * i, 2 * j));
            assert_eq!(coarse.total[[i, j]].to_bits(), fine.total[[2 * i, 2 * j]].to_bits());
        }
    }
}

#[test]
fn labels_survive_step_halving() {
    let p = SystemParams::new(0.2);
    let base = experiments::BranchingConfig::default().with_n(200);
    let half = experiments::BranchingConfig {
        integrator: base.integrator.with_step(base.integrator.step / 2.0),
        ..base
    };
    let (_, a, _) = experiments::branching_outcomes(&p, &base).unwrap();
    let (_, b, _) = experiments::branching_outcomes(&p, &half).unwrap();
    let same = a.iter().zip(&b).filter(|(x, y)| x.outcome == y.outcome).count();
    assert!(same >= 196, "{same}/200 labels agree");
}

#[test]
fn section_point_lifts_to_section_energy() {
    let p = SystemParams::new(0.4);
    let s = lift_to_phase_space(0.1, 0.2, &SectionSpec::default(), &p).unwrap();
    assert_eq!(s.x, SECTION_X);
    assert!(s.px > 0.0);
    assert!((hamiltonian(&s, &p) - p.h0).abs() < 1e-14);
}

#[test]
fn depth_monotone_in_c() {
    let mut last: Option<(f64, f64)> = None;
    for k in 0..=20 {
        let p = SystemParams::new(k as f64 * 0.025);
        let (t, b) = (depth(&p, Well::Top).unwrap(), depth(&p, Well::Bottom).unwrap());
        if let Some((lt, lb)) = last {
            assert!(b >= lb && t <= lt);
        }
        last = Some((t, b));
    }
}
