//! Property tests for the optimization layer, all checked against
//! independent oracles: full enumeration for the solvers, and direct
//! evaluation of the unexpanded objective for the QUBO builder.

use proptest::prelude::*;

use qsignal_core::qubo::{
    qubo_to_ising, solve_anneal, solve_exact, AnnealConfig, Assignment, QuboProblem,
};
use qsignal_core::signal::{
    build_phase_qubo, decode_selection, penalty_floor, HaltCountMatrix, VariableLayout,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_qubo(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> QuboProblem {
    let mut p = QuboProblem::new(n);
    for i in 0..n {
        for j in i..n {
            p.add(i, j, rng.random_range(-scale..scale)).unwrap();
        }
    }
    p
}

/// Direct evaluation of the halting-count objective before expansion.
fn direct_objective(halts: &HaltCountMatrix, phi: f64, x: &Assignment, layout: &VariableLayout) -> f64 {
    let mut total = 0.0;
    for (i, row) in halts.rows().iter().enumerate() {
        let mut selected = 0.0;
        for (j, &c) in row.iter().enumerate() {
            if x.get(layout.var(i, j)) {
                total -= c as f64;
                selected += 1.0;
            }
        }
        total += phi * (1.0 - selected) * (1.0 - selected);
    }
    total
}

#[test]
fn qubo_and_ising_energies_agree_on_every_assignment() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let n = rng.random_range(1..=10usize);
        let p = random_qubo(&mut rng, n, 10.0);
        let ising = qubo_to_ising(&p);
        for index in 0..(1u64 << n) {
            let x = Assignment::from_index(n, index);
            let qe = p.energy(&x).unwrap();
            let ie = ising.energy(&x).unwrap();
            let tolerance = 1e-9 * qe.abs().max(1.0);
            assert!((qe - ie).abs() <= tolerance, "n={n} index={index}: {qe} vs {ie}");
        }
    }
}

#[test]
fn exact_solution_is_a_true_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..30 {
        let n = rng.random_range(1..=8usize);
        let p = random_qubo(&mut rng, n, 10.0);
        let best = solve_exact(&p).unwrap();
        let best_energy = p.energy(&best).unwrap();
        for index in 0..(1u64 << n) {
            let x = Assignment::from_index(n, index);
            assert!(p.energy(&x).unwrap() >= best_energy);
        }
    }
}

#[test]
fn anneal_never_beats_the_oracle_and_usually_matches_it() {
    let mut rng = ChaCha8Rng::seed_from_u64(37);
    let mut matches = 0;
    for case in 0..40 {
        let p = random_qubo(&mut rng, 8, 10.0);
        let exact_energy = p.energy(&solve_exact(&p).unwrap()).unwrap();
        let config = AnnealConfig { seed: case, ..AnnealConfig::default() };
        let annealed = solve_anneal(&p, &config).unwrap();
        let anneal_energy = p.energy(&annealed).unwrap();
        assert!(
            anneal_energy >= exact_energy - 1e-9,
            "annealer reported energy below the enumerated optimum"
        );
        if (anneal_energy - exact_energy).abs() <= 1e-9 {
            matches += 1;
        }
    }
    assert!(matches >= 38, "annealer matched the oracle on only {matches}/40 instances");
}

#[test]
fn anneal_is_deterministic_per_config() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    let p = random_qubo(&mut rng, 12, 5.0);
    let config = AnnealConfig::default();
    let a = solve_anneal(&p, &config).unwrap();
    let b = solve_anneal(&p, &config).unwrap();
    assert_eq!(a, b);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    /// The builder's expansion equals the unexpanded objective everywhere.
    #[test]
    fn built_energy_matches_direct_objective(
        rows in prop::collection::vec(prop::collection::vec(0u32..=100, 2..=6), 1..=3),
        assignments in prop::collection::vec(0u64..(1 << 18), 10),
        extra_phi in 0.0f64..50.0,
    ) {
        let halts = HaltCountMatrix::new(rows);
        let phi = penalty_floor(&halts) + extra_phi;
        let (problem, layout) = build_phase_qubo(&halts, phi).unwrap();
        for raw in assignments {
            let x = Assignment::from_index(layout.len(), raw & ((1 << layout.len()) - 1));
            let built = problem.energy(&x).unwrap();
            let direct = direct_objective(&halts, phi, &x, &layout);
            let tolerance = 1e-9 * built.abs().max(1.0);
            prop_assert!((built - direct).abs() <= tolerance);
        }
    }

    /// At the penalty floor the exact optimum is one-hot and picks a
    /// maximum-count mode per junction, lowest index on ties.
    #[test]
    fn exact_optimum_is_one_hot_argmax(
        rows in prop::collection::vec(prop::collection::vec(0u32..=100, 2..=6), 1..=3),
    ) {
        let halts = HaltCountMatrix::new(rows.clone());
        let phi = penalty_floor(&halts);
        let (problem, layout) = build_phase_qubo(&halts, phi).unwrap();
        let best = solve_exact(&problem).unwrap();
        let selection = decode_selection(&best, &layout).unwrap();
        for (i, row) in rows.iter().enumerate() {
            let max = *row.iter().max().unwrap();
            let argmax = row.iter().position(|&c| c == max).unwrap();
            prop_assert_eq!(selection[i], argmax, "junction {} counts {:?}", i, row);
        }
    }

    /// Scaling all counts at a junction (with the penalty rescaled too)
    /// leaves the decoded selection unchanged.
    #[test]
    fn selection_is_scale_invariant(
        row in prop::collection::vec(0u32..=50, 2..=6),
        factor in 2u32..=5,
    ) {
        let halts = HaltCountMatrix::from_row(row.clone());
        let phi = penalty_floor(&halts);
        let (problem, layout) = build_phase_qubo(&halts, phi).unwrap();
        let selection = decode_selection(&solve_exact(&problem).unwrap(), &layout).unwrap();

        let scaled_row: Vec<u32> = row.iter().map(|&c| c * factor).collect();
        let scaled = HaltCountMatrix::from_row(scaled_row);
        let (scaled_problem, scaled_layout) =
            build_phase_qubo(&scaled, phi * factor as f64).unwrap();
        let scaled_selection =
            decode_selection(&solve_exact(&scaled_problem).unwrap(), &scaled_layout).unwrap();
        prop_assert_eq!(selection, scaled_selection);
    }
}
