//! Named self-check suite: exact-model, derivative, degeneracy, sampler,
//! and estimator verifications against the built-in oracles, runnable in a
//! few seconds. Backs the CLI's `check` subcommand.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

use crate::combinatorics::{
    inclusion_derivatives, inclusion_first, inclusion_second, r_gradient, r_gradient_via_inclusion,
    r_value, r_value_power_sum, weights_from_probs, DerivativeOrder, InclusionDerivatives,
};
use crate::distributions::{
    cb_hessian_entry, cb_log_grad, cb_pmf, cb_pmf_grad, gcb_log_grad, gcb_pmf, pb_grad,
    pb_grad_via_inclusion, pb_pmf, pb_pmf_all, CBModel, GCBModel, PBModel, SuccessProbabilities,
};
use crate::optimizer::{project, stochastic_gradient, ConstraintSpec, Direction, Policy};
use crate::oracle::{
    bernoulli_pmf, chi_square_gof, fd_gradient, one_sided_difference, relative_error,
    within_standard_errors, FeasibleEnumeration, Side,
};
use crate::sampling::{build_q, cb_sample, gcb_sample, RandomStream};

type CheckFn = fn(u64) -> (bool, String);

/// Outcome of one named check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    /// Stable check identifier (kebab-case).
    pub name: &'static str,
    /// Whether every assertion in the check held.
    pub passed: bool,
    /// Human-readable summary (worst errors, counts).
    pub detail: String,
}

/// Runs every check with randomness derived from `seed`; deterministic for
/// a fixed seed.
#[must_use]
pub fn run_default_suite(seed: u64) -> Vec<CheckResult> {
    let checks: Vec<(&'static str, CheckFn)> = vec![
        ("r-function-values", check_r_function_values),
        ("r-gradient-routes", check_r_gradient_routes),
        ("inclusion-probabilities", check_inclusion_probabilities),
        ("inclusion-derivatives", check_inclusion_derivatives),
        ("pb-exactness", check_pb_exactness),
        ("pb-gradient", check_pb_gradient),
        ("cb-exactness", check_cb_exactness),
        ("cb-derivatives", check_cb_derivatives),
        ("degeneracy-limits", check_degeneracy_limits),
        ("gcb-model", check_gcb_model),
        ("q-matrix", check_q_matrix),
        ("cb-sampler-moments", check_cb_sampler_moments),
        ("gcb-sampler-moments", check_gcb_sampler_moments),
        ("estimator-and-projector", check_estimator_and_projector),
    ];
    checks
        .into_iter()
        .map(|(name, f)| {
            let (passed, detail) = f(seed);
            CheckResult {
                name,
                passed,
                detail,
            }
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Helpers
// ---------------------------------------------------------------------------

fn rng_for(seed: u64, salt: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn random_probs(rng: &mut ChaCha20Rng, n: usize, lo: f64, hi: f64) -> SuccessProbabilities {
    let p: Vec<f64> = (0..n).map(|_| rng.random_range(lo..hi)).collect();
    SuccessProbabilities::new(p).expect("interior probabilities")
}

/// Tracks the worst relative error seen and whether it stayed under `tol`.
struct Worst {
    max: f64,
    tol: f64,
}

impl Worst {
    fn new(tol: f64) -> Self {
        Worst { max: 0.0, tol }
    }
    fn record(&mut self, err: f64) {
        if err > self.max {
            self.max = err;
        }
    }
    fn record_pair(&mut self, a: f64, b: f64) {
        self.record(relative_error(a, b));
    }
    fn pass(&self) -> bool {
        self.max.is_finite() && self.max <= self.tol
    }
    fn detail(&self) -> String {
        format!(
            "max relative error {:.3e} (tolerance {:.1e})",
            self.max, self.tol
        )
    }
}

/// Exhaustive CB PMF by enumeration: Bernoulli mass renormalized over the
/// feasible set.
fn cb_pmf_by_enumeration(p: &[f64], z: usize, d: &[u8]) -> f64 {
    let total: f64 = FeasibleEnumeration::new(&ConstraintSpec::equality(z), p.len())
        .expect("enumerable")
        .map(|e| bernoulli_pmf(p, &e))
        .sum();
    bernoulli_pmf(p, d) / total
}

// ---------------------------------------------------------------------------
// Checks
// ---------------------------------------------------------------------------

fn check_r_function_values(seed: u64) -> (bool, String) {
    let mut worst = Worst::new(1e-10);
    // The Newton-identity route alternates signs and loses digits as n grows.
    let mut power_sum_worst = Worst::new(1e-6);
    // Pinned small case: weights (1, 2, 3).
    let probs = SuccessProbabilities::new(vec![0.5, 2.0 / 3.0, 0.75]).unwrap();
    let weights = weights_from_probs(&probs);
    worst.record_pair(r_value(2, &weights), 11.0);
    let grad = r_gradient(2, &weights);
    for (g, expect) in grad.iter().zip([5.0, 4.0, 3.0]) {
        worst.record_pair(*g, expect);
    }
    // Random instances against enumeration and the power-sum route.
    let mut rng = rng_for(seed, 1);
    for _ in 0..20 {
        let n = rng.random_range(2..=10);
        let probs = random_probs(&mut rng, n, 0.05, 0.95);
        let weights = weights_from_probs(&probs);
        for k in 0..=n {
            let direct = r_value(k, &weights);
            worst.record_pair(direct, crate::oracle::r_by_enumeration(k, weights.values()));
            match r_value_power_sum(k, &weights) {
                Ok(ps) => power_sum_worst.record_pair(direct, ps),
                Err(e) => return (false, format!("power-sum route failed: {e}")),
            }
        }
    }
    (
        worst.pass() && power_sum_worst.pass(),
        format!(
            "enumeration {}; power-sum route {}",
            worst.detail(),
            power_sum_worst.detail()
        ),
    )
}

fn check_r_gradient_routes(seed: u64) -> (bool, String) {
    let mut worst = Worst::new(1e-5);
    let mut route_worst = Worst::new(1e-10);
    let mut rng = rng_for(seed, 2);
    for _ in 0..20 {
        let n = rng.random_range(2..=8);
        let probs = random_probs(&mut rng, n, 0.1, 0.9);
        let weights = weights_from_probs(&probs);
        let k = rng.random_range(1..=n);
        let analytic = r_gradient(k, &weights);
        let via_pi = match r_gradient_via_inclusion(k, &weights) {
            Ok(v) => v,
            Err(e) => return (false, format!("inclusion route failed: {e}")),
        };
        for (a, b) in analytic.iter().zip(&via_pi) {
            route_worst.record_pair(*a, *b);
        }
        let fd = fd_gradient(
            |w| crate::oracle::r_by_enumeration(k, w),
            weights.values(),
            1e-6,
        );
        for (a, e) in analytic.iter().zip(&fd) {
            worst.record_pair(*a, *e);
        }
    }
    (
        worst.pass() && route_worst.pass(),
        format!(
            "FD {}; route agreement {}",
            worst.detail(),
            route_worst.detail()
        ),
    )
}

fn check_inclusion_probabilities(seed: u64) -> (bool, String) {
    let mut worst = Worst::new(1e-10);
    // Pinned: w = (1, 2, 3), z = 2 → π = (5/11, 8/11, 9/11).
    let probs = SuccessProbabilities::new(vec![0.5, 2.0 / 3.0, 0.75]).unwrap();
    let weights = weights_from_probs(&probs);
    let pi = inclusion_first(2, &weights).expect("valid z");
    for (value, expect) in pi
        .first_order
        .iter()
        .zip([5.0 / 11.0, 8.0 / 11.0, 9.0 / 11.0])
    {
        worst.record_pair(*value, expect);
    }
    // Pinned: equal weights, z = 2, N = 3 → π_{0,1} = 1/3.
    let equal = SuccessProbabilities::new(vec![0.5; 3]).unwrap();
    let wequal = weights_from_probs(&equal);
    match inclusion_second(2, &wequal, 0, 1) {
        Ok(pair) => worst.record_pair(pair, 1.0 / 3.0),
        Err(e) => return (false, format!("pair probability failed: {e}")),
    }
    // Random: Σπ = z and strict negative association.
    let mut rng = rng_for(seed, 3);
    let mut association_ok = true;
    for _ in 0..15 {
        let n = rng.random_range(3..=9);
        let z = rng.random_range(1..n);
        let probs = random_probs(&mut rng, n, 0.05, 0.95);
        let weights = weights_from_probs(&probs);
        let pi = inclusion_first(z, &weights).expect("valid z");
        worst.record_pair(pi.total(), z as f64);
        for i in 0..n {
            for j in (i + 1)..n {
                let pair = inclusion_second(z, &weights, i, j).expect("valid pair");
                if pi.first_order[i] * pi.first_order[j] <= pair {
                    association_ok = false;
                }
            }
        }
    }
    (
        worst.pass() && association_ok,
        format!(
            "{}; negative association {}",
            worst.detail(),
            if association_ok { "strict" } else { "VIOLATED" }
        ),
    )
}

fn check_inclusion_derivatives(seed: u64) -> (bool, String) {
    let mut worst = Worst::new(1e-5);
    let mut rng = rng_for(seed, 4);
    for _ in 0..6 {
        let n = rng.random_range(3..=6);
        let z = rng.random_range(1..n);
        let probs = random_probs(&mut rng, n, 0.15, 0.85);
        let derivs =
            match inclusion_derivatives(z, &weights_from_probs(&probs), DerivativeOrder::First) {
                Ok(InclusionDerivatives::First(f)) => f,
                Ok(InclusionDerivatives::Second(_)) => unreachable!("asked for first order"),
                Err(e) => return (false, format!("derivative tensor failed: {e}")),
            };
        for i in 0..n {
            let fd = fd_gradient(
                |p| {
                    let sp = SuccessProbabilities::new(p.to_vec()).expect("interior");
                    inclusion_first(z, &weights_from_probs(&sp))
                        .expect("valid z")
                        .first_order[i]
                },
                probs.values(),
                1e-6,
            );
            for (a, e) in derivs.p_space[i].iter().zip(&fd) {
                worst.record_pair(*a, *e);
            }
        }
    }
    (worst.pass(), worst.detail())
}

fn check_pb_exactness(seed: u64) -> (bool, String) {
    let mut worst = Worst::new(1e-10);
    // Pinned: p = (0.5, 0.5, 0.5), z = 1 → 3/8.
    let model = PBModel::new(SuccessProbabilities::new(vec![0.5; 3]).unwrap());
    worst.record_pair(pb_pmf(&model, 1), 3.0 / 8.0);
    let mut rng = rng_for(seed, 5);
    for _ in 0..12 {
        let n = rng.random_range(2..=10);
        let probs = random_probs(&mut rng, n, 0.05, 0.95);
        let p = probs.values().to_vec();
        let model = PBModel::new(probs);
        let all = pb_pmf_all(&model);
        worst.record_pair(all.iter().sum::<f64>(), 1.0);
        for (z, mass) in all.iter().enumerate() {
            let exact: f64 = FeasibleEnumeration::new(&ConstraintSpec::equality(z), n)
                .expect("enumerable")
                .map(|d| bernoulli_pmf(&p, &d))
                .sum();
            worst.record_pair(*mass, exact);
        }
    }
    (worst.pass(), worst.detail())
}

fn check_pb_gradient(seed: u64) -> (bool, String) {
    let mut fd_worst = Worst::new(1e-5);
    let mut route_worst = Worst::new(1e-12);
    let mut rng = rng_for(seed, 6);
    for _ in 0..12 {
        let n = rng.random_range(2..=8);
        let z = rng.random_range(0..=n);
        let probs = random_probs(&mut rng, n, 0.1, 0.9);
        let model = PBModel::new(probs.clone());
        let analytic = pb_grad(&model, z);
        for (a, b) in analytic.iter().zip(pb_grad_via_inclusion(&model, z)) {
            route_worst.record_pair(*a, b);
        }
        let fd = fd_gradient(
            |p| {
                let sp = SuccessProbabilities::new(p.to_vec()).expect("interior");
                pb_pmf(&PBModel::new(sp), z)
            },
            probs.values(),
            1e-6,
        );
        for (a, e) in analytic.iter().zip(&fd) {
            fd_worst.record_pair(*a, *e);
        }
    }
    (
        fd_worst.pass() && route_worst.pass(),
        format!(
            "FD {}; route agreement {}",
            fd_worst.detail(),
            route_worst.detail()
        ),
    )
}

fn check_cb_exactness(seed: u64) -> (bool, String) {
    let mut worst = Worst::new(1e-10);
    // Pinned: equal p, N = 5, z = 2 → every feasible design has mass 1/10.
    let equal = CBModel::new(SuccessProbabilities::new(vec![0.3; 5]).unwrap(), 2).unwrap();
    worst.record_pair(cb_pmf(&equal, &[1, 1, 0, 0, 0]).unwrap(), 0.1);
    // Pinned: w = (1, 2, 3), d = (1, 1, 0) → 2/11.
    let pinned = CBModel::new(
        SuccessProbabilities::new(vec![0.5, 2.0 / 3.0, 0.75]).unwrap(),
        2,
    )
    .unwrap();
    worst.record_pair(cb_pmf(&pinned, &[1, 1, 0]).unwrap(), 2.0 / 11.0);
    let mut rng = rng_for(seed, 7);
    for _ in 0..10 {
        let n = rng.random_range(2..=9);
        let z = rng.random_range(0..=n);
        let probs = random_probs(&mut rng, n, 0.05, 0.95);
        let p = probs.values().to_vec();
        let model = CBModel::new(probs, z).expect("feasible");
        let mut total = 0.0;
        for d in FeasibleEnumeration::new(&ConstraintSpec::equality(z), n).expect("enumerable") {
            let mass = cb_pmf(&model, &d).expect("feasible design");
            worst.record_pair(mass, cb_pmf_by_enumeration(&p, z, &d));
            total += mass;
        }
        worst.record_pair(total, 1.0);
    }
    (worst.pass(), worst.detail())
}

fn check_cb_derivatives(seed: u64) -> (bool, String) {
    let mut grad_worst = Worst::new(1e-5);
    let mut hess_worst = Worst::new(1e-4);
    let mut rng = rng_for(seed, 8);
    for _ in 0..8 {
        let n = rng.random_range(2..=7);
        let z = rng.random_range(1..=n);
        let probs = random_probs(&mut rng, n, 0.15, 0.85);
        let model = CBModel::new(probs.clone(), z).expect("feasible");
        let mut designs =
            FeasibleEnumeration::new(&ConstraintSpec::equality(z), n).expect("enumerable");
        let d = designs.next().expect("at least one feasible design");
        let log_grad = cb_log_grad(&model, &d).expect("interior");
        let fd_log = fd_gradient(
            |p| {
                let sp = SuccessProbabilities::new(p.to_vec()).expect("interior");
                cb_pmf(&CBModel::new(sp, z).expect("feasible"), &d)
                    .expect("feasible design")
                    .ln()
            },
            probs.values(),
            1e-6,
        );
        for (a, e) in log_grad.iter().zip(&fd_log) {
            grad_worst.record_pair(*a, *e);
        }
        let pmf_grad = cb_pmf_grad(&model, &d).expect("interior");
        let fd_pmf = fd_gradient(
            |p| {
                let sp = SuccessProbabilities::new(p.to_vec()).expect("interior");
                cb_pmf(&CBModel::new(sp, z).expect("feasible"), &d).expect("feasible design")
            },
            probs.values(),
            1e-6,
        );
        for (a, e) in pmf_grad.iter().zip(&fd_pmf) {
            grad_worst.record_pair(*a, *e);
        }
        // Hessian: one diagonal and one off-diagonal entry per instance,
        // against second differences of log cb_pmf.
        let log_pmf_at = |p: &[f64]| {
            let sp = SuccessProbabilities::new(p.to_vec()).expect("interior");
            cb_pmf(&CBModel::new(sp, z).expect("feasible"), &d)
                .expect("feasible design")
                .ln()
        };
        let h = 1e-4;
        let entries: Vec<(usize, usize)> = if n >= 2 {
            vec![(0, 0), (0, 1)]
        } else {
            vec![(0, 0)]
        };
        for (i, j) in entries {
            let analytic = cb_hessian_entry(&model, &d, i, j)
                .expect("interior")
                .log_pmf;
            let p0 = probs.values();
            let estimate = if i == j {
                let mut plus = p0.to_vec();
                plus[i] += h;
                let mut minus = p0.to_vec();
                minus[i] -= h;
                (log_pmf_at(&plus) - 2.0 * log_pmf_at(p0) + log_pmf_at(&minus)) / (h * h)
            } else {
                let mut pp = p0.to_vec();
                pp[i] += h;
                pp[j] += h;
                let mut pm = p0.to_vec();
                pm[i] += h;
                pm[j] -= h;
                let mut mp = p0.to_vec();
                mp[i] -= h;
                mp[j] += h;
                let mut mm = p0.to_vec();
                mm[i] -= h;
                mm[j] -= h;
                (log_pmf_at(&pp) - log_pmf_at(&pm) - log_pmf_at(&mp) + log_pmf_at(&mm))
                    / (4.0 * h * h)
            };
            hess_worst.record_pair(analytic, estimate);
        }
    }
    (
        grad_worst.pass() && hess_worst.pass(),
        format!(
            "gradients {}; Hessian {}",
            grad_worst.detail(),
            hess_worst.detail()
        ),
    )
}

fn check_degeneracy_limits(seed: u64) -> (bool, String) {
    let mut rng = rng_for(seed, 9);
    let mut ok = true;
    let mut worst_coarse: f64 = 0.0;
    for _ in 0..6 {
        let n = rng.random_range(3..=6);
        let z = rng.random_range(1..n);
        // Random interior p with coordinate 0 pinned at a boundary.
        let boundary = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let mut p: Vec<f64> = (0..n).map(|_| rng.random_range(0.2..0.8)).collect();
        p[0] = boundary;
        if boundary == 1.0 && z == 0 {
            continue;
        }
        let probs = SuccessProbabilities::new(p.clone()).unwrap();
        let model = match CBModel::new(probs, z) {
            Ok(m) => m,
            Err(_) => continue,
        };
        let mut designs = FeasibleEnumeration::new(&ConstraintSpec::equality(z), n)
            .expect("enumerable")
            .filter(|d| f64::from(d[0]) == boundary);
        let Some(d) = designs.next() else { continue };
        let analytic = cb_log_grad(&model, &d).expect("matching design")[0];
        let side = if boundary == 1.0 {
            Side::Backward
        } else {
            Side::Forward
        };
        let log_pmf = |pv: &[f64]| {
            let sp = SuccessProbabilities::new(pv.to_vec()).expect("in range");
            cb_pmf(&CBModel::new(sp, z).expect("feasible"), &d)
                .expect("feasible design")
                .ln()
        };
        let coarse = (one_sided_difference(log_pmf, &p, 0, 1e-4, side) - analytic).abs();
        let fine = (one_sided_difference(log_pmf, &p, 0, 1e-6, side) - analytic).abs();
        worst_coarse = worst_coarse.max(coarse);
        // One-sided error decreases linearly in the step.
        if !(coarse < 1e-2 && fine < coarse / 10.0 + 1e-10) {
            ok = false;
        }
    }
    (
        ok,
        format!("one-sided limits linear in step; worst coarse error {worst_coarse:.3e}"),
    )
}

fn check_gcb_model(seed: u64) -> (bool, String) {
    let mut worst = Worst::new(1e-10);
    let mut fd_worst = Worst::new(1e-5);
    let mut rng = rng_for(seed, 10);
    for _ in 0..8 {
        let n = rng.random_range(3..=7);
        let z_lo = rng.random_range(0..n);
        let z_hi = rng.random_range(z_lo..=n);
        let budgets: Vec<usize> = (z_lo..=z_hi).collect();
        let probs = random_probs(&mut rng, n, 0.15, 0.85);
        let model = GCBModel::new(probs.clone(), budgets.clone()).expect("feasible");
        let constraint = ConstraintSpec::inclusion(budgets.clone()).expect("nonempty");
        // Normalization over the feasible union.
        let mut total = 0.0;
        for d in FeasibleEnumeration::new(&constraint, n).expect("enumerable") {
            total += gcb_pmf(&model, &d).expect("feasible design");
        }
        worst.record_pair(total, 1.0);
        // Singleton budget set collapses to the CB PMF exactly.
        let z = budgets[budgets.len() / 2];
        if let Ok(cb) = CBModel::new(probs.clone(), z) {
            let single = GCBModel::new(probs.clone(), vec![z]).expect("feasible");
            if let Some(d) = FeasibleEnumeration::new(&ConstraintSpec::equality(z), n)
                .expect("enumerable")
                .next()
            {
                let a = gcb_pmf(&single, &d).expect("feasible design");
                let b = cb_pmf(&cb, &d).expect("feasible design");
                if a != b {
                    return (false, format!("singleton collapse not exact: {a} vs {b}"));
                }
            }
        }
        // Log-gradient against finite differences.
        if let Some(d) = FeasibleEnumeration::new(&constraint, n)
            .expect("enumerable")
            .next()
        {
            let analytic = gcb_log_grad(&model, &d).expect("interior");
            let fd = fd_gradient(
                |p| {
                    let sp = SuccessProbabilities::new(p.to_vec()).expect("interior");
                    gcb_pmf(&GCBModel::new(sp, budgets.clone()).expect("feasible"), &d)
                        .expect("feasible design")
                        .ln()
                },
                probs.values(),
                1e-6,
            );
            for (a, e) in analytic.iter().zip(&fd) {
                fd_worst.record_pair(*a, *e);
            }
        }
    }
    (
        worst.pass() && fd_worst.pass(),
        format!(
            "exactness {}; log-gradient FD {}",
            worst.detail(),
            fd_worst.detail()
        ),
    )
}

fn check_q_matrix(seed: u64) -> (bool, String) {
    let mut worst = Worst::new(1e-12);
    let mut rng = rng_for(seed, 11);
    for _ in 0..10 {
        let n = rng.random_range(2..=10);
        let z = rng.random_range(0..=n);
        let probs = random_probs(&mut rng, n, 0.05, 0.95);
        let cb = CBModel::new(probs.clone(), z).expect("feasible");
        let q = match build_q(&cb) {
            Ok(q) => q,
            Err(e) => return (false, format!("tabulation failed: {e}")),
        };
        let pb = PBModel::new(probs);
        worst.record_pair(q.value(z + 1, 1), pb_pmf(&pb, z));
    }
    (
        worst.pass(),
        format!("q(z+1, 1) vs PB mass: {}", worst.detail()),
    )
}

fn check_cb_sampler_moments(seed: u64) -> (bool, String) {
    let n = 8;
    let z = 3;
    let draws = 20_000;
    let mut rng = rng_for(seed, 12);
    let probs = random_probs(&mut rng, n, 0.2, 0.8);
    let model = CBModel::new(probs, z).expect("feasible");
    let batch = cb_sample(&model, draws, &RandomStream::new(seed ^ 0xC0FF_EE00))
        .expect("sampling succeeds");
    // Constraint satisfaction: zero violations.
    let violations = batch
        .designs
        .iter()
        .filter(|d| crate::design::popcount(d) != z)
        .count();
    // Per-coordinate frequencies within 4 standard errors of π.
    let pi = model.pi();
    let mut freq_ok = true;
    for i in 0..n {
        let mean = batch.designs.iter().map(|d| f64::from(d[i])).sum::<f64>() / draws as f64;
        let variance = pi[i] * (1.0 - pi[i]);
        if !within_standard_errors(mean, pi[i], variance, draws, 4.0) {
            freq_ok = false;
        }
    }
    // Chi-square against the exact PMF over all feasible designs.
    let designs: Vec<Vec<u8>> = FeasibleEnumeration::new(&ConstraintSpec::equality(z), n)
        .expect("enumerable")
        .collect();
    let index: HashMap<&[u8], usize> = designs
        .iter()
        .enumerate()
        .map(|(k, d)| (d.as_slice(), k))
        .collect();
    let expected: Vec<f64> = designs
        .iter()
        .map(|d| cb_pmf(&model, d).expect("feasible design"))
        .collect();
    let mut observed = vec![0u64; designs.len()];
    for d in &batch.designs {
        observed[index[d.as_slice()]] += 1;
    }
    let chi = match chi_square_gof(&observed, &expected, 0.001) {
        Ok(r) => r,
        Err(e) => return (false, format!("chi-square setup failed: {e}")),
    };
    (
        violations == 0 && freq_ok && chi.pass,
        format!(
            "{draws} draws: {violations} constraint violations; frequencies within 4 SE: {freq_ok}; chi-square {:.1} < {:.1}",
            chi.statistic, chi.critical_value
        ),
    )
}

fn check_gcb_sampler_moments(seed: u64) -> (bool, String) {
    let n = 6;
    let budgets = vec![1, 3];
    let draws = 20_000;
    let mut rng = rng_for(seed, 13);
    let probs = random_probs(&mut rng, n, 0.2, 0.8);
    let model = GCBModel::new(probs, budgets.clone()).expect("feasible");
    let batch = gcb_sample(&model, draws, &RandomStream::new(seed ^ 0xBEEF_0000))
        .expect("sampling succeeds");
    let violations = batch
        .designs
        .iter()
        .filter(|d| !budgets.contains(&crate::design::popcount(d)))
        .count();
    let constraint = ConstraintSpec::inclusion(budgets).expect("nonempty");
    let designs: Vec<Vec<u8>> = FeasibleEnumeration::new(&constraint, n)
        .expect("enumerable")
        .collect();
    let index: HashMap<&[u8], usize> = designs
        .iter()
        .enumerate()
        .map(|(k, d)| (d.as_slice(), k))
        .collect();
    let expected: Vec<f64> = designs
        .iter()
        .map(|d| gcb_pmf(&model, d).expect("feasible design"))
        .collect();
    let mut observed = vec![0u64; designs.len()];
    for d in &batch.designs {
        observed[index[d.as_slice()]] += 1;
    }
    let chi = match chi_square_gof(&observed, &expected, 0.001) {
        Ok(r) => r,
        Err(e) => return (false, format!("chi-square setup failed: {e}")),
    };
    (
        violations == 0 && chi.pass,
        format!(
            "{draws} draws: {violations} constraint violations; chi-square {:.1} < {:.1}",
            chi.statistic, chi.critical_value
        ),
    )
}

fn check_estimator_and_projector(seed: u64) -> (bool, String) {
    // Constant objective with matching baseline → exact zero gradient.
    let probs = SuccessProbabilities::new(vec![0.3, 0.5, 0.7, 0.4]).unwrap();
    let policy = Policy::new(probs, &ConstraintSpec::equality(2)).expect("feasible");
    let mut batch = policy
        .sample(50, &RandomStream::new(seed ^ 0xABCD))
        .expect("sampling succeeds");
    let values: Vec<f64> = batch.designs.iter().map(|_| 4.5).collect();
    batch.attach_values(values).expect("lengths match");
    let g = stochastic_gradient(&policy, &batch, 4.5).expect("interior");
    let zero_ok = g.iter().all(|&gi| gi == 0.0);
    // Projector: pinned binding case and randomized box membership.
    let pinned = project(&[0.9], &[0.5], Direction::Maximize);
    let pinned_ok = (0.9 + pinned[0] - 1.0).abs() == 0.0;
    let mut rng = rng_for(seed, 14);
    let mut box_ok = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..=10);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let grad: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let direction = if rng.random::<bool>() {
            Direction::Maximize
        } else {
            Direction::Minimize
        };
        let eta: f64 = rng.random_range(0.01..=1.0);
        let pg = project(&p, &grad, direction);
        for (pi, pgi) in p.iter().zip(&pg) {
            let updated = (pi + eta * direction.step_sign() * pgi).clamp(0.0, 1.0);
            if !(0.0..=1.0).contains(&updated) {
                box_ok = false;
            }
        }
    }
    (
        zero_ok && pinned_ok && box_ok,
        format!(
            "constant-objective gradient exactly zero: {zero_ok}; pinned projector step lands on 1: {pinned_ok}; 1000 random updates stay in the box: {box_ok}"
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    // ----- Default suite -----

    #[test]
    fn default_suite_passes_and_names_are_unique() {
        let results = run_default_suite(0);
        assert_eq!(results.len(), 14);
        let mut names: Vec<&str> = results.iter().map(|r| r.name).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), 14, "duplicate check names");
        for r in &results {
            assert!(r.passed, "check {} failed: {}", r.name, r.detail);
        }
    }

    #[test]
    fn suite_is_deterministic_per_seed() {
        let a = run_default_suite(5);
        let b = run_default_suite(5);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.name, y.name);
            assert_eq!(x.passed, y.passed);
            assert_eq!(x.detail, y.detail);
        }
    }
}
