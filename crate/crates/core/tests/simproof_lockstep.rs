use lcqp::graph::encode;
use lcqp::ipm::{CgRule, IpmIterate, DEFAULT_EPS_LINE};
use lcqp::simproof::{sim_cg_init, sim_cg_iteration, sim_ipm_iteration, verify_sim, SimGraph, INIT_STEPS, ITERATION_STEPS};
use lcqp::{LcqpInstance, SparseMatrix};

fn scalar_system() -> (LcqpInstance, IpmIterate) {
    // P = [[1, −1], [−1, 0]], right-hand side (1, 1).
    let a = SparseMatrix::from_triplets(1, 1, vec![(0, 0, 1.0)]).unwrap();
    let inst = LcqpInstance::new(SparseMatrix::zeros(1, 1), a, vec![0.0], vec![0.0]).unwrap();
    (inst, IpmIterate { x: vec![1.0], lambda: vec![0.0], s: vec![1.0], mu: 1.0 })
}

fn w_after_two(rule: CgRule) -> (f64, f64) {
    let (inst, it) = scalar_system();
    let g = SimGraph::new(&encode(&inst, true));
    let mut st = sim_cg_init(&g, &inst, &it, 1.0).unwrap();
    assert_eq!(st.var_channel("r1").unwrap(), vec![1.0]);
    assert_eq!(st.cons_channel("r2").unwrap(), vec![1.0]);
    for t in 1..=2 {
        st = sim_cg_iteration(&g, &st, t, rule).0;
    }
    assert_eq!(st.steps, INIT_STEPS + 2 * ITERATION_STEPS);
    (st.var_channel("w1").unwrap()[0], st.cons_channel("w2").unwrap()[0])
}

#[test]
fn scalar_system_textbook_rule_solves_exactly() {
    let (dx, dl) = w_after_two(CgRule::Textbook);
    assert!((dx + 1.0).abs() < 1e-15 && (dl + 2.0).abs() < 1e-15, "{dx} {dl}");
}

#[test]
fn scalar_system_as_written_rule_matches_hand_trace() {
    // α₂ = rᵀr / rᵀPr = 2/3 with r = (1, −1), p = (2, 0).
    let (dx, dl) = w_after_two(CgRule::AsWritten);
    assert!((dx + 2.0 / 3.0).abs() < 1e-15 && (dl + 2.0).abs() < 1e-15, "{dx} {dl}");
}

#[test]
fn lockstep_both_rules() {
    for rule in [CgRule::AsWritten, CgRule::Textbook] {
        let rep = verify_sim(10, 5, 20, 3, 11, rule, DEFAULT_EPS_LINE, 0.5).unwrap();
        assert!(rep.step_counts_ok);
        assert!(rep.max_deviation <= 1e-9, "{rule:?}: {:?}", rep.deviations);
        assert!(rep.cg_iterations > 20);
        for phase in ["init", "cg.1", "cg.2", "cg.3", "cg.4", "cg.5", "cg.6", "cg.7", "outer.1", "outer.2", "outer.3", "outer.4"] {
            assert!(rep.deviations.keys().any(|k| k.starts_with(&format!("{phase}/"))), "missing {phase}");
        }
    }
}

#[test]
fn simulated_iterations_follow_the_reference_solver() {
    // Several outer iterations driven only by the simulation stay interior
    // and reduce μ geometrically.
    let (inst, _) = scalar_system();
    let g = SimGraph::new(&encode(&inst, true));
    let mut it = IpmIterate { x: vec![2.0], lambda: vec![0.5], s: vec![0.5], mu: 1.0 };
    for k in 0..5 {
        let run = sim_ipm_iteration(&g, &inst, &it, 0.5, CgRule::Textbook, 2, DEFAULT_EPS_LINE).unwrap();
        assert!(run.next.x[0] > 0.0 && run.next.s[0] > 0.0);
        assert_eq!(run.next.mu, 0.5_f64.powi(k + 1));
        it = run.next;
    }
}

#[test]
fn report_counts_breakdowns() {
    // The classical rule never divides by zero on these well-posed systems.
    let t = verify_sim(10, 5, 20, 3, 11, CgRule::Textbook, DEFAULT_EPS_LINE, 0.5).unwrap();
    assert_eq!(t.nonfinite_values, 0);
}
