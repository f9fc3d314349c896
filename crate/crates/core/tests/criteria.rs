use edpinn::criteria::{CriterionContext, CriterionKind, CriterionParams, Member, Scorer, TipThread};
use edpinn::design::DesignSpace;
use edpinn::edloop::{aggregate, optimize_design, AscentConfig};
use edpinn::network::init_params;
use edpinn::pde::{Problem, ProblemKind};
use edpinn::pinn::{train_forward, TrainConfig};
use edpinn::seed;

fn ensemble(p: &Problem, n: u64) -> (Vec<f64>, Vec<Member>) {
    let start = init_params(&p.net, 11);
    let members = (0..n)
        .map(|i| {
            let beta = p.beta_space.sample(seed::derive(12, i));
            let cfg = TrainConfig { steps: 150, lr: 0.01, lr_decay: 1.0, n_interior: 60, n_boundary: 1, seed: i };
            Member { beta: beta.clone(), theta: train_forward(p, &beta, &start, &cfg).unwrap().params.values }
        })
        .collect();
    (start.values, members)
}

fn context(members: Vec<Member>, theta_si: Vec<f64>, noise_var: f64) -> CriterionContext {
    let p = Problem::oscillator();
    let params = CriterionParams { fist_steps: 4, n_interior: 40, noise_var, ..CriterionParams::defaults(p.kind) };
    CriterionContext::new(p, DesignSpace::default_for(ProblemKind::Oscillator), members, theta_si, params, 21).unwrap()
}

#[test]
fn inverse_error_scores_are_never_positive() {
    let p = Problem::oscillator();
    let (si, members) = ensemble(&p, 3);
    let ctx = context(members, si, 0.0);
    for kind in [CriterionKind::Fist, CriterionKind::Mote] {
        let s = Scorer::new(&ctx, kind).unwrap();
        for k in 0..5 {
            let g = ctx.space.sample(seed::derive(30, k));
            let v: f64 = aggregate(&s, &g).unwrap();
            assert!(v <= 0.0, "{kind:?} {v}");
            for i in 0..3 {
                assert!(s.thread_score::<f64>(i, &g).unwrap() <= 0.0);
            }
        }
    }
}

#[test]
fn aggregation_ignores_thread_order() {
    let p = Problem::oscillator();
    let (si, members) = ensemble(&p, 4);
    let mut reversed = members.clone();
    reversed.reverse();
    reversed.swap(0, 2);
    for noise in [0.0, 1e-3] {
        let a = context(members.clone(), si.clone(), noise);
        let b = context(reversed.clone(), si.clone(), noise);
        for kind in [CriterionKind::Fist, CriterionKind::Mote, CriterionKind::Tip, CriterionKind::Mi] {
            // noisy targets can make the β-Hessian indefinite
            if kind == CriterionKind::Tip && noise > 0.0 {
                continue;
            }
            let (sa, sb) = (Scorer::new(&a, kind).unwrap(), Scorer::new(&b, kind).unwrap());
            for k in 0..3 {
                let g = a.space.sample(seed::derive(31, k));
                let (va, vb): (f64, f64) = (aggregate(&sa, &g).unwrap(), aggregate(&sb, &g).unwrap());
                assert!((va - vb).abs() <= 1e-9 * (1.0 + va.abs()), "{kind:?} noise {noise}: {va} vs {vb}");
            }
        }
    }
}

#[test]
fn scores_are_deterministic_in_the_design() {
    let p = Problem::oscillator();
    let (si, members) = ensemble(&p, 2);
    let ctx = context(members, si, 1e-3);
    for kind in [CriterionKind::Fist, CriterionKind::Mote, CriterionKind::Tip] {
        let s = Scorer::new(&ctx, kind).unwrap();
        let g = [1.0, 6.5, 13.0];
        let a: f64 = aggregate(&s, &g).unwrap();
        let b: f64 = aggregate(&s, &g).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}

#[test]
fn ascent_never_ends_below_a_restart_start() {
    let p = Problem::oscillator();
    let (si, members) = ensemble(&p, 2);
    let ctx = context(members, si, 0.0);
    let s = Scorer::new(&ctx, CriterionKind::Mote).unwrap();
    let res = optimize_design(&s, &ctx.space, &AscentConfig { restarts: 3, steps: 4, step_size: 0.05 }, 5).unwrap();
    assert!(ctx.space.contains(&res.gamma));
    for t in &res.traces {
        assert!(res.score >= t.scores[0]);
        assert!(t.gammas.iter().all(|g| ctx.space.contains(g)));
    }
    let best = res.traces.iter().flat_map(|t| t.scores.iter().copied()).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(res.score, best);
}

/// Travel times are pinned to zero at the source for every parameter, so an
/// observation there carries no information and leaves TIP unchanged.
#[test]
fn tip_ignores_observations_without_sensitivity() {
    let p = Problem::eikonal();
    let members: Vec<Member> = (0..1u64)
        .map(|i| Member { beta: p.beta_space.sample(seed::derive(40, i)), theta: init_params(&p.net, 41 + i).values })
        .collect();
    let theta_si = init_params(&p.net, 3).values;
    let params = CriterionParams { n_interior: 20, ..CriterionParams::defaults(ProblemKind::Eikonal) };
    let space = DesignSpace::Free { points: 3, lo: vec![0.0, 0.0], hi: vec![5.0, 5.0] };
    let ctx = CriterionContext::new(p, space, members, theta_si, params, 2).unwrap();
    let t = TipThread::new(&ctx, 0).unwrap();
    let x = [1.0, 2.0, 3.5, 0.5];
    let with_source = [1.0, 2.0, 3.5, 0.5, 0.0, 0.0];
    let a: f64 = t.score(&ctx, 0, &x).unwrap();
    let b: f64 = t.score(&ctx, 0, &with_source).unwrap();
    assert!((a - b).abs() <= 1e-10 * (1.0 + a.abs()), "{a} vs {b}");
}
