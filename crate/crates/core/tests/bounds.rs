use evac_core::bounds::{direct_knowledge, f2f_knowledge, g, h, minimize_g, minimize_h, mu_profile, solve_lb_one_many};
use evac_core::plans::{plan_evac_rays, Capability};
use evac_core::trajectory::Trajectory;

/// Golden-section search, kept independent of the derivative-based optimisers.
fn golden(f: fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    while b - a > 1e-11 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if f(c) < f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    0.5 * (a + b)
}

#[test]
fn optimisers_hit_the_closed_forms() {
    let (u, v) = minimize_g().unwrap();
    assert!((u - 1.0 / 3.0).abs() < 1e-8 && (v - 8.0).abs() < 1e-8);
    let (u, v) = minimize_h().unwrap();
    let root2 = 2f64.sqrt();
    assert!((u - (root2 - 1.0)).abs() < 1e-8 && (v - (2.0 + 2.0 * root2)).abs() < 1e-8);
    let (s, lb) = solve_lb_one_many().unwrap();
    let root5 = 5f64.sqrt();
    assert!((s - (root5 - 2.0)).abs() < 1e-8 && (lb - (2.0 + root5)).abs() < 1e-8);
    assert!((s * s + 4.0 * s - 1.0).abs() < 1e-10);
}

#[test]
fn golden_section_agrees() {
    assert!((golden(g, 1e-6, 1.0 - 1e-6) - minimize_g().unwrap().0).abs() < 1e-6);
    assert!((golden(h, 1e-6, 1.0 - 1e-6) - minimize_h().unwrap().0).abs() < 1e-6);
}

#[test]
fn direct_knowledge_fits_the_light_cone() {
    let plan = plan_evac_rays(0.3, 2, None).unwrap();
    for agent in &plan.agents {
        for t in [0.5, 3.0, 17.0, 123.4, 999.0] {
            let k = direct_knowledge(&agent.baseline, t).unwrap();
            let x = agent.baseline.position_at(t).unwrap();
            assert!(k.is_within(x - t - 1e-12, x + t + 1e-12), "{} at t={t}", agent.label);
            assert!(k.lo <= 0.0 && k.hi >= 0.0);
        }
    }
}

#[test]
fn kd_inclusion_for_straight_lines() {
    let eps = 0.01;
    for v in [0.2, 0.5, 0.8] {
        let traj = Trajectory::constant_velocity(v);
        for t in [1e2, 1e3, 1e4] {
            let x = traj.position_at(t).unwrap();
            let m = v + eps;
            let k = direct_knowledge(&traj, t).unwrap();
            assert!(
                k.is_within(-m * (t - x) / (1.0 + m), m * (t + x) / (1.0 + m)),
                "v={v} t={t}"
            );
        }
    }
}

#[test]
fn kf2f_inclusion_for_the_rays_senders() {
    let plan = plan_evac_rays(1.0 / 3.0, 2, None).unwrap();
    let trajs: Vec<Trajectory> = plan.agents.iter().map(|a| a.baseline.clone()).collect();
    let mu_a = plan.param("v0").unwrap();
    let eps = 0.02;
    let m = mu_a + eps;
    for (idx, agent) in plan.agents.iter().enumerate() {
        if agent.capability != Capability::Sender {
            continue;
        }
        for t in [1e2, 1e3] {
            let x = trajs[idx].position_at(t).unwrap();
            let k = f2f_knowledge(&trajs, idx, t).unwrap();
            let (lo, hi) = (-m * (t - x) / (1.0 + m), m * (t + x) / (1.0 + m));
            assert!(
                k.is_within(lo, hi),
                "{} t={t}: [{}, {}] vs [{lo}, {hi}]",
                agent.label,
                k.lo,
                k.hi
            );
            assert!(k.contains(&direct_knowledge(&trajs[idx], t).unwrap()));
        }
    }
}

#[test]
fn rays_drifts_match_the_speeds() {
    for v_r in [0.15, 1.0 / 3.0, 0.45] {
        let plan = plan_evac_rays(v_r, 2, None).unwrap();
        let horizon = plan.horizon.unwrap();
        let profile = mu_profile(&plan, horizon, 0.2).unwrap();
        let v0 = plan.param("v0").unwrap();
        assert!((profile.entries["receiver"] - v_r).abs() < 1e-4);
        assert!((profile.entries["right-sender"] - v0).abs() < 1e-4);
        assert!((profile.entries["left-sender"] - v0).abs() < 1e-4);
        assert!(v0 < 1.0);
        assert_eq!(profile.mu_a, profile.entries.values().cloned().fold(0.0, f64::max));
    }
}
