mod common;

use adaptopt::graph::Topology;
use adaptopt::monitor::{interaction_dissipation, interaction_dissipation_pairwise};
use adaptopt::points::Points;
use adaptopt::protocol::{interaction_term, norm_dir, step_gains, GainMatrix, Mode, ProtocolParams, ProtocolState};
use common::{random_graph, random_point};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Random state with gains on every pair; some agents are clustered
/// inside the ramp region so both branches of `norm_dir` are hit.
fn random_state(rng: &mut impl Rng, n: usize, m: usize, mode: Mode) -> ProtocolState {
    let spread = if rng.random_bool(0.3) { 1e-3 } else { 5.0 };
    let rows: Vec<Vec<f64>> = (0..n).map(|_| random_point(rng, m, spread)).collect();
    let mut s = ProtocolState::at_rest(Points::from_rows(&rows).unwrap(), mode);
    if mode == Mode::Double {
        let v: Vec<Vec<f64>> = (0..n).map(|_| random_point(rng, m, 2.0)).collect();
        s.v = Some(Points::from_rows(&v).unwrap());
    }
    for i in 0..n {
        for j in i + 1..n {
            s.q.set_pair(i, j, rng.random_range(0.0..10.0));
        }
    }
    s
}

fn params_for(mode: Mode, rng: &mut impl Rng) -> ProtocolParams {
    match mode {
        Mode::Single => ProtocolParams::single(),
        Mode::Double => ProtocolParams::double(rng.random_range(0.2..3.0)),
    }
}

#[test]
fn interaction_dissipates_for_any_anchor() {
    let mut rng = ChaCha8Rng::seed_from_u64(40);
    for case in 0..500 {
        let mode = if case % 2 == 0 { Mode::Single } else { Mode::Double };
        let n = rng.random_range(2..=9);
        let m = rng.random_range(1..=3);
        let g = random_graph(&mut rng, n, 0.5);
        let s = random_state(&mut rng, n, m, mode);
        let params = params_for(mode, &mut rng);
        let z1 = random_point(&mut rng, m, 10.0);
        let z2 = random_point(&mut rng, m, 10.0);
        let d1 = interaction_dissipation(&s, &g, &z1, &params);
        let d2 = interaction_dissipation(&s, &g, &z2, &params);
        let pair = interaction_dissipation_pairwise(&s, &g, &params);
        let scale = pair.abs().max(1.0);
        assert!(d1 <= 1e-12 * scale, "case {case}: {d1}");
        assert!((d1 - d2).abs() <= 1e-12 * scale * 10.0, "case {case}: {d1} vs {d2}");
        assert!((d1 - pair).abs() <= 1e-12 * scale * 10.0, "case {case}: {d1} vs {pair}");
        assert!(pair <= 0.0);
    }
}

#[test]
fn interaction_is_bounded_by_incident_gains() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for _ in 0..300 {
        let n = rng.random_range(2..=8);
        let g = random_graph(&mut rng, n, 0.6);
        let s = random_state(&mut rng, n, 2, Mode::Single);
        for i in 0..n {
            let bound: f64 = g.neighbors(i).map(|(j, _)| s.q.get(i, j)).sum();
            let drive = interaction_term(i, &s.x, &s.q, &g, 1e-3);
            assert!(norm(&drive) <= bound * (1.0 + 1e-12) + 1e-15);
        }
    }
}

#[test]
fn norm_dir_is_odd_and_at_most_unit() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for _ in 0..1000 {
        let scale = 10f64.powi(rng.random_range(-6..2));
        let d = random_point(&mut rng, 3, scale);
        let a = norm_dir(&d, 1e-3);
        let neg: Vec<f64> = d.iter().map(|v| -v).collect();
        let b = norm_dir(&neg, 1e-3);
        assert!(a.iter().zip(&b).all(|(x, y)| *x == -*y));
        assert!(norm(&a) <= 1.0 + 1e-15);
    }
}

#[test]
fn gains_stay_symmetric_and_nondecreasing_under_switching() {
    let mut rng = ChaCha8Rng::seed_from_u64(43);
    for _ in 0..20 {
        let n = rng.random_range(2..=7);
        let params = ProtocolParams::single();
        let mut s = random_state(&mut rng, n, 2, Mode::Single);
        s.q = GainMatrix::zeros(n);
        for _ in 0..50 {
            let g = random_graph(&mut rng, n, 0.5);
            let next = step_gains(&s, &g, 1e-2, &params);
            assert!(next.is_well_formed());
            assert!(next.dominates(&s.q));
            // only active edges grow
            for i in 0..n {
                for j in 0..n {
                    if !g.has_edge(i, j) {
                        assert_eq!(next.get(i, j), s.q.get(i, j));
                    }
                }
            }
            s.q = next;
            // jiggle positions so pairs cross the eps_sign dead zone
            let rows: Vec<Vec<f64>> = (0..n).map(|_| random_point(&mut rng, 2, 1e-3)).collect();
            s.x = Points::from_rows(&rows).unwrap();
        }
    }
}

#[test]
fn gains_do_not_grow_off_the_graph() {
    let s = ProtocolState::at_rest(Points::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]).unwrap(), Mode::Single);
    let g = Topology::from_edges(3, &[(0, 1, 1.0)]).unwrap();
    let q = step_gains(&s, &g, 0.5, &ProtocolParams::single());
    assert_eq!(q.get(0, 1), 0.5);
    assert_eq!(q.get(1, 0), 0.5);
    assert_eq!(q.get(0, 2), 0.0);
    assert_eq!(q.get(1, 2), 0.0);
}
