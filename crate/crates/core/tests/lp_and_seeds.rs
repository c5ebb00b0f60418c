use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempered_ot::lp_oracle::{enumerate_vertices, solve_ot_exact};
use tempered_ot::measures::{sample_density, sample_problem, DensityVector};
use tempered_ot::objectives::CostMatrix;
use tempered_ot::seeds::{expected_seed, measured_seed, zero_nesting_check};
use tempered_ot::{Temperature, Variant};

fn temp(t: f64) -> Temperature {
    Temperature::new(t).unwrap()
}

fn check_lp_certificate(m: &Array2<f64>, r: &DensityVector, c: &DensityVector) {
    let n = m.nrows();
    let sol = solve_ot_exact(m, r, c).unwrap();
    // primal feasibility
    for i in 0..n {
        let row: f64 = sol.plan.row(i).sum();
        let col: f64 = sol.plan.column(i).sum();
        assert!((row - r.entries()[i]).abs() < 1e-12);
        assert!((col - c.entries()[i]).abs() < 1e-12);
    }
    assert!(sol.plan.iter().all(|&x| x >= 0.0));
    // dual feasibility and complementary slackness
    for ((i, j), &cost) in m.indexed_iter() {
        let reduced = cost - sol.u[i] - sol.v[j];
        assert!(reduced >= -1e-10, "reduced cost {reduced} at ({i},{j})");
        if sol.plan[[i, j]] > 0.0 {
            assert!(reduced.abs() < 1e-10);
        }
    }
    let dual = sol.u.dot(r.entries()) + sol.v.dot(c.entries());
    assert!((dual - sol.objective).abs() < 1e-10 * (1.0 + sol.objective.abs()));
    assert!(sol.basis_size <= 2 * n - 1);
    assert_eq!(sol.basis_size, sol.plan.iter().filter(|&&x| x > 0.0).count());
}

#[test]
fn lp_matches_vertex_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for k in 0..60 {
        let n = 3 + k % 2;
        let m = Array2::from_shape_simple_fn((n, n), || rng.random::<f64>());
        let (r, c) = (sample_density(&mut rng, n), sample_density(&mut rng, n));
        let sol = solve_ot_exact(&m, &r, &c).unwrap();
        let best = enumerate_vertices(&r, &c)
            .unwrap()
            .iter()
            .map(|v| (v * &m).sum())
            .fold(f64::INFINITY, f64::min);
        assert!((sol.objective - best).abs() < 1e-12, "k={k}: {} vs {best}", sol.objective);
    }
}

#[test]
fn lp_certificates_random_and_degenerate() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for n in [2, 5, 16, 32, 64] {
        let m = Array2::from_shape_simple_fn((n, n), || rng.random::<f64>());
        check_lp_certificate(&m, &sample_density(&mut rng, n), &sample_density(&mut rng, n));
        // uniform marginals and integer costs: heavily degenerate
        let u = DensityVector::uniform(n);
        let mi = Array2::from_shape_simple_fn((n, n), || rng.random_range(0..4) as f64);
        check_lp_certificate(&mi, &u, &u);
    }
}

#[test]
fn lp_identity_assignment() {
    let n = 6;
    let m = Array2::from_shape_fn((n, n), |(i, j)| if i == j { 0.0 } else { 1.0 });
    let u = DensityVector::uniform(n);
    let sol = solve_ot_exact(&m, &u, &u).unwrap();
    assert!(sol.objective.abs() < 1e-15);
}

#[test]
fn seed_positivity_sides() {
    for seed in 0..30 {
        let p = sample_problem(8, seed, temp(1.0)).unwrap();
        let m = CostMatrix::new(p.cost.clone()).unwrap();
        for t in [0.0, 0.3, 0.7, 1.0] {
            assert!(expected_seed(&m, 50.0, temp(t)).unwrap().is_positive());
        }
        for t in [1.0, 1.3, 1.9] {
            let q = p.at_temperature(temp(t));
            assert!(measured_seed(&m, &q.r, &q.c, 50.0).unwrap().is_positive());
        }
    }
}

#[test]
fn seeds_decrease_in_lambda() {
    let p = sample_problem(6, 3, temp(1.0)).unwrap();
    let m = CostMatrix::new(p.cost.clone()).unwrap();
    for t in [0.2, 1.0, 1.6] {
        let q = p.at_temperature(temp(t));
        for variant in [Variant::Expected, Variant::Measured] {
            let mut prev: Option<Array2<f64>> = None;
            for lambda in [0.0, 0.5, 1.0, 3.0, 9.0] {
                let s = tempered_ot::seeds::seed(variant, &m, &q.r, &q.c, lambda).unwrap();
                if let Some(pr) = &prev {
                    assert!(s.entries().iter().zip(pr).all(|(a, b)| a <= b));
                }
                prev = Some(s.into_entries());
            }
        }
    }
}

#[test]
fn zero_sets_nest() {
    let lambdas = [1.0, 2.0, 4.0, 8.0, 16.0];
    let mut saw_zero = [false, false];
    for seed in 0..50 {
        let p = sample_problem(10, seed, temp(1.7)).unwrap();
        let m = CostMatrix::new(p.cost.clone()).unwrap();
        assert!(zero_nesting_check(&m, &p.r, &p.c, &lambdas).unwrap());
        saw_zero[0] |= expected_seed(&m, 16.0, temp(1.7)).unwrap().zero_count() > 0;
        let q = p.at_temperature(temp(0.3));
        assert!(zero_nesting_check(&m, &q.r, &q.c, &lambdas).unwrap());
        saw_zero[1] |= measured_seed(&m, &q.r, &q.c, 16.0).unwrap().zero_count() > 0;
    }
    assert_eq!(saw_zero, [true, true]);
    let p = sample_problem(3, 0, temp(0.3)).unwrap();
    let m = CostMatrix::new(p.cost.clone()).unwrap();
    assert!(zero_nesting_check(&m, &p.r, &p.c, &[2.0, 1.0]).is_err());
}

#[test]
fn seeds_are_continuous_at_one() {
    let p = sample_problem(5, 9, temp(1.0)).unwrap();
    let m = CostMatrix::new(p.cost.clone()).unwrap();
    let e1 = expected_seed(&m, 2.0, temp(1.0)).unwrap();
    let s1 = measured_seed(&m, &p.r, &p.c, 2.0).unwrap();
    for t in [1.0 - 1e-4, 1.0 + 1e-4] {
        let q = p.at_temperature(temp(t));
        let e = expected_seed(&m, 2.0, temp(t)).unwrap();
        let s = measured_seed(&m, &q.r, &q.c, 2.0).unwrap();
        for (a, b) in e.entries().iter().zip(e1.entries()) {
            assert!((a - b).abs() <= 1e-3 * b);
        }
        for (a, b) in s.entries().iter().zip(s1.entries()) {
            assert!((a - b).abs() <= 1e-3 * b);
        }
    }
}

#[test]
fn seeds_depend_on_lambda_times_cost_only() {
    // scaling M by 2^k and λ by 2^-k leaves every product λ·M_ij bit-identical
    let p = sample_problem(7, 11, temp(1.0)).unwrap();
    let m = CostMatrix::new(p.cost.clone()).unwrap();
    for t in [0.4, 1.0, 1.5] {
        let q = p.at_temperature(temp(t));
        for k in [-3i32, 1, 4] {
            let a = 2f64.powi(k);
            let ms = CostMatrix::new(p.cost.mapv(|x| x * a)).unwrap();
            for variant in [Variant::Expected, Variant::Measured] {
                let base = tempered_ot::seeds::seed(variant, &m, &q.r, &q.c, 3.0).unwrap();
                let scaled = tempered_ot::seeds::seed(variant, &ms, &q.r, &q.c, 3.0 / a).unwrap();
                assert_eq!(base.entries(), scaled.entries());
            }
        }
    }
}
