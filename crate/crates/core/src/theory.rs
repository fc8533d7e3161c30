//! Exact information-theoretic oracles on small discrete problems.
//!
//! A [`DiscreteJoint`] is a table `q(x, y, z)`; a [`TableExtractor`] maps
//! each `x` to one of finitely many representation values. Every quantity
//! here is an exact finite sum in nats, and the optimum over extractors is
//! found by enumerating all of them.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest extractor space [`optimal_extractor_search`] will enumerate.
pub const SEARCH_LIMIT: u128 = 1_000_000;

/// Tolerance for merging numerically equal posterior vectors.
const POSTERIOR_TOL: f64 = 1e-12;

const CERT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteJoint {
    nx: usize,
    ny: usize,
    nz: usize,
    /// `q[(x * ny + y) * nz + z]`
    q: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Y,
    Z,
}

/// Conditioning variable given as a class label for every `x`.
pub type Partition = Vec<usize>;

impl DiscreteJoint {
    pub fn new(nx: usize, ny: usize, nz: usize, q: Vec<f64>) -> Result<Self> {
        if nx == 0 || ny == 0 || nz == 0 || q.len() != nx * ny * nz {
            return Err(Error::Shape(format!(
                "joint table {nx}x{ny}x{nz} with {} entries",
                q.len()
            )));
        }
        if q.iter().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::config("joint probabilities must be finite and non-negative"));
        }
        let total: f64 = q.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::config(format!("joint table sums to {total}")));
        }
        Ok(Self { nx, ny, nz, q })
    }

    /// Random joint with binary `y` and at most `posterior_classes`
    /// distinct posteriors `q(y|x)`.
    pub fn random(nx: usize, nz: usize, posterior_classes: usize, seed: u64) -> Result<Self> {
        if posterior_classes == 0 {
            return Err(Error::config("need at least one posterior class"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let posteriors: Vec<f64> = (0..posterior_classes).map(|_| rng.random_range(0.02..0.98)).collect();
        let mut q = Vec::with_capacity(nx * 2 * nz);
        for x in 0..nx {
            let px = rng.random_range(0.1..1.0);
            let p1 = posteriors[if x < posterior_classes {
                x
            } else {
                rng.random_range(0..posterior_classes)
            }];
            for py in [1.0 - p1, p1] {
                let w: Vec<f64> = (0..nz).map(|_| rng.random_range(0.05..1.0)).collect();
                let s: f64 = w.iter().sum();
                q.extend(w.iter().map(|v| px * py * v / s));
            }
        }
        let total: f64 = q.iter().sum();
        q.iter_mut().for_each(|v| *v /= total);
        Self::new(nx, 2, nz, q)
    }

    pub fn nx(&self) -> usize {
        self.nx
    }

    pub fn ny(&self) -> usize {
        self.ny
    }

    pub fn nz(&self) -> usize {
        self.nz
    }

    pub fn prob(&self, x: usize, y: usize, z: usize) -> f64 {
        self.q[(x * self.ny + y) * self.nz + z]
    }

    pub fn target_size(&self, t: Target) -> usize {
        match t {
            Target::Y => self.ny,
            Target::Z => self.nz,
        }
    }

    /// `q(x, t)` for the chosen target.
    pub fn xt(&self, x: usize, t: Target, v: usize) -> f64 {
        match t {
            Target::Y => (0..self.nz).map(|z| self.prob(x, v, z)).sum(),
            Target::Z => (0..self.ny).map(|y| self.prob(x, y, v)).sum(),
        }
    }

    pub fn px(&self, x: usize) -> f64 {
        (0..self.ny).map(|y| self.xt(x, Target::Y, y)).sum()
    }

    /// `q(t | x)`; uniform for zero-probability `x`.
    pub fn posterior_given_x(&self, x: usize, t: Target) -> Vec<f64> {
        let n = self.target_size(t);
        let px = self.px(x);
        if px == 0.0 {
            return vec![1.0 / n as f64; n];
        }
        (0..n).map(|v| self.xt(x, t, v) / px).collect()
    }

    /// `q(t | c)` for every class `c` of `part`, indexed by class.
    pub fn class_posteriors(&self, part: &[usize], t: Target) -> Vec<Vec<f64>> {
        let n = self.target_size(t);
        let classes = part.iter().max().map_or(0, |m| m + 1);
        let mut mass = vec![vec![0.0; n]; classes];
        for (x, &c) in part.iter().enumerate() {
            for (v, m) in mass[c].iter_mut().enumerate() {
                *m += self.xt(x, t, v);
            }
        }
        for row in &mut mass {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                row.iter_mut().for_each(|v| *v /= s);
            } else {
                row.iter_mut().for_each(|v| *v = 1.0 / n as f64);
            }
        }
        mass
    }

    pub fn identity_partition(&self) -> Partition {
        (0..self.nx).collect()
    }

    pub fn constant_partition(&self) -> Partition {
        vec![0; self.nx]
    }

    /// Classes of `x` by the value of `q_y(. | x)`.
    pub fn posterior_partition(&self) -> Partition {
        let post: Vec<_> = (0..self.nx).map(|x| self.posterior_given_x(x, Target::Y)).collect();
        group_vectors(&post)
    }
}

/// Labels rows with equal vectors (within the posterior tolerance) by the
/// same class, numbered in order of first appearance.
fn group_vectors(rows: &[Vec<f64>]) -> Partition {
    let mut reps: Vec<&Vec<f64>> = Vec::new();
    rows.iter()
        .map(|r| {
            match reps
                .iter()
                .position(|p| p.iter().zip(r).all(|(a, b)| (a - b).abs() <= POSTERIOR_TOL))
            {
                Some(i) => i,
                None => {
                    reps.push(r);
                    reps.len() - 1
                }
            }
        })
        .collect()
}

/// Meet of two partitions: `x` and `x'` share a class iff they do in both.
pub fn pair_partition(a: &[usize], b: &[usize]) -> Partition {
    let pairs: Vec<Vec<f64>> = a.iter().zip(b).map(|(&i, &j)| vec![i as f64, j as f64]).collect();
    group_vectors(&pairs)
}

/// `H(t | C)` in nats, with `C` given as a partition of `x`.
pub fn conditional_entropy(joint: &DiscreteJoint, target: Target, cond: &[usize]) -> f64 {
    let n = joint.target_size(target);
    let classes = cond.iter().max().map_or(0, |m| m + 1);
    let mut mass = vec![vec![0.0; n]; classes];
    for (x, &c) in cond.iter().enumerate() {
        for (v, m) in mass[c].iter_mut().enumerate() {
            *m += joint.xt(x, target, v);
        }
    }
    let mut h = 0.0;
    for row in &mass {
        let pc: f64 = row.iter().sum();
        for &p in row {
            if p > 0.0 {
                h -= p * (p / pc).ln();
            }
        }
    }
    h.max(0.0)
}

pub fn entropy(joint: &DiscreteJoint, target: Target) -> f64 {
    conditional_entropy(joint, target, &joint.constant_partition())
}

/// Total function from `x` to `0..codomain`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableExtractor {
    pub map: Vec<usize>,
    pub codomain: usize,
}

impl TableExtractor {
    pub fn new(map: Vec<usize>, codomain: usize) -> Result<Self> {
        if let Some(&bad) = map.iter().find(|&&v| v >= codomain) {
            return Err(Error::config(format!(
                "extractor value {bad} outside codomain {codomain}"
            )));
        }
        Ok(Self { map, codomain })
    }

    /// `x -> class of q_y(. | x)`; `None` if the codomain is too small.
    pub fn posterior_witness(joint: &DiscreteJoint, codomain: usize) -> Option<Self> {
        let part = joint.posterior_partition();
        Self::new(part, codomain).ok()
    }

    /// Class of `q_y(. | E(x))` for every `x`.
    pub fn induced_posterior_partition(&self, joint: &DiscreteJoint) -> Partition {
        let post = joint.class_posteriors(&self.map, Target::Y);
        let rows: Vec<Vec<f64>> = self.map.iter().map(|&c| post[c].clone()).collect();
        group_vectors(&rows)
    }
}

/// Minimizes `sum_k a_k * (-ln pi_k)` over the probability simplex by
/// golden-section search on stick-breaking coordinates. Knows nothing of the
/// closed-form answer, so it serves as an independent check of it.
pub fn minimize_cross_entropy(a: &[f64]) -> (Vec<f64>, f64) {
    let n = a.len();
    let mut pi = vec![0.0; n];
    let mut remaining = 1.0;
    for k in 0..n {
        if k == n - 1 {
            pi[k] = remaining;
            break;
        }
        let later: f64 = a[k + 1..].iter().sum();
        let f = |s: f64| xlog(a[k], s) + xlog(later, 1.0 - s);
        let s = golden_section(f, 0.0, 1.0, 1e-14);
        pi[k] = remaining * s;
        remaining *= 1.0 - s;
    }
    let value = a.iter().zip(&pi).map(|(&w, &p)| xlog(w, p)).sum();
    (pi, value)
}

/// `-w ln p` with `0 ln 0 = 0`.
fn xlog(w: f64, p: f64) -> f64 {
    if w == 0.0 {
        0.0
    } else {
        -w * p.ln()
    }
}

fn golden_section(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc <= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    let mid = 0.5 * (lo + hi);
    // the optimum may sit on the boundary
    [lo, mid, hi]
        .into_iter()
        .min_by(|x, y| f(*x).total_cmp(&f(*y)))
        .unwrap_or(mid)
}

/// Outcome of a "minimal cross-entropy equals conditional entropy" check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimalityReport {
    /// Loss of the closed-form posterior table.
    pub posterior_loss: f64,
    /// Loss found by direct numeric minimization.
    pub numeric_min_loss: f64,
    /// The conditional entropy the loss should equal.
    pub entropy: f64,
    pub max_deviation: f64,
    pub passed: bool,
}

fn optimality(joint: &DiscreteJoint, target: Target, cond: &[usize]) -> OptimalityReport {
    let n = joint.target_size(target);
    let classes = cond.iter().max().map_or(0, |m| m + 1);
    let post = joint.class_posteriors(cond, target);
    let (mut posterior_loss, mut numeric) = (0.0, 0.0);
    for c in 0..classes {
        let a: Vec<f64> = (0..n)
            .map(|v| {
                cond.iter()
                    .enumerate()
                    .filter(|(_, &k)| k == c)
                    .map(|(x, _)| joint.xt(x, target, v))
                    .sum()
            })
            .collect();
        posterior_loss += a.iter().zip(&post[c]).map(|(&w, &p)| xlog(w, p)).sum::<f64>();
        numeric += minimize_cross_entropy(&a).1;
    }
    let entropy = conditional_entropy(joint, target, cond);
    let max_deviation = (posterior_loss - entropy).abs().max((numeric - entropy).abs());
    OptimalityReport {
        posterior_loss,
        numeric_min_loss: numeric,
        entropy,
        max_deviation,
        passed: max_deviation <= CERT_TOL,
    }
}

/// The posterior `q(y | E(x))` minimizes the predictor cross-entropy and
/// the minimum equals `H(y | E(x))`.
pub fn optimal_predictor_check(joint: &DiscreteJoint, extractor: &TableExtractor) -> OptimalityReport {
    optimality(joint, Target::Y, &extractor.map)
}

/// The minimal discriminator cross-entropy given `(E(x), P(. | E(x)))`
/// equals `H(z | E(x), P(. | E(x)))`. `predictor_table[e]` is the predictor
/// output for representation value `e`.
pub fn optimal_discriminator_check(
    joint: &DiscreteJoint,
    extractor: &TableExtractor,
    predictor_table: &[Vec<f64>],
) -> Result<OptimalityReport> {
    if predictor_table.len() < extractor.codomain {
        return Err(Error::Shape(format!(
            "predictor table covers {} of {} representation values",
            predictor_table.len(),
            extractor.codomain
        )));
    }
    let outputs: Vec<Vec<f64>> = extractor.map.iter().map(|&e| predictor_table[e].clone()).collect();
    let cond = pair_partition(&extractor.map, &group_vectors(&outputs));
    Ok(optimality(joint, Target::Z, &cond))
}

/// `V(E) = H(y | E(x)) - lambda * H(z | E(x), q_y(. | E(x)))`.
pub fn virtual_value(joint: &DiscreteJoint, extractor: &TableExtractor, lambda: f64) -> f64 {
    let hy = conditional_entropy(joint, Target::Y, &extractor.map);
    let cond = pair_partition(&extractor.map, &extractor.induced_posterior_partition(joint));
    hy - lambda * conditional_entropy(joint, Target::Z, &cond)
}

/// `H(y | x) - lambda * H(z | q_y(. | E(x)))`, the per-extractor lower bound
/// on `V(E)`.
pub fn value_lower_bound(joint: &DiscreteJoint, extractor: &TableExtractor, lambda: f64) -> f64 {
    let hyx = conditional_entropy(joint, Target::Y, &joint.identity_partition());
    hyx - lambda * conditional_entropy(joint, Target::Z, &extractor.induced_posterior_partition(joint))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorCertificate {
    pub lambda: f64,
    pub codomain: usize,
    pub candidates: u64,
    pub min_value: f64,
    pub minimizers: Vec<Vec<usize>>,
    /// Largest `bound - V(E)` over all candidates; `<= 0` means the bound held.
    pub max_bound_violation: f64,
    pub bound_holds: bool,
    pub witness: Option<Vec<usize>>,
    pub witness_value: Option<f64>,
    pub witness_bound: Option<f64>,
    pub witness_attains_bound: bool,
    pub witness_is_optimal: bool,
    /// Worst `|H(y|E*) - H(y|x)|` over minimizers.
    pub max_dev_sufficiency: f64,
    /// Worst `|H(z|E*, q_y(E*)) - H(z|q_y(E*))|` over minimizers.
    pub max_dev_independence: f64,
    pub minimizers_satisfy_properties: bool,
}

fn candidate_count(nx: usize, codomain: usize) -> u128 {
    (codomain as u128).checked_pow(nx as u32).unwrap_or(u128::MAX)
}

/// Enumerates every extractor `X -> 0..codomain` and certifies the
/// optimal-extractor claims at the exhaustive minimum of `V`.
pub fn optimal_extractor_search(
    joint: &DiscreteJoint,
    lambda: f64,
    codomain: usize,
) -> Result<(TableExtractor, ExtractorCertificate)> {
    if codomain == 0 {
        return Err(Error::config("codomain must be non-empty"));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::config(format!("lambda must be finite and >= 0, got {lambda}")));
    }
    let total = candidate_count(joint.nx, codomain);
    if total > SEARCH_LIMIT {
        return Err(Error::SearchTooLarge {
            candidates: total,
            bound: SEARCH_LIMIT,
        });
    }
    let mut values = Vec::with_capacity(total as usize);
    let mut max_violation = f64::NEG_INFINITY;
    let mut map = vec![0usize; joint.nx];
    for _ in 0..total {
        let e = TableExtractor {
            map: map.clone(),
            codomain,
        };
        let v = virtual_value(joint, &e, lambda);
        max_violation = max_violation.max(value_lower_bound(joint, &e, lambda) - v);
        values.push(v);
        // odometer increment
        for digit in map.iter_mut() {
            *digit += 1;
            if *digit < codomain {
                break;
            }
            *digit = 0;
        }
    }
    let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
    let decode = |mut k: usize| -> Vec<usize> {
        (0..joint.nx)
            .map(|_| {
                let d = k % codomain;
                k /= codomain;
                d
            })
            .collect()
    };
    let minimizers: Vec<Vec<usize>> = values
        .iter()
        .enumerate()
        .filter(|(_, v)| **v - min_value <= CERT_TOL)
        .map(|(k, _)| decode(k))
        .collect();

    let hyx = conditional_entropy(joint, Target::Y, &joint.identity_partition());
    let (mut dev11, mut dev12) = (0.0f64, 0.0f64);
    for m in &minimizers {
        let e = TableExtractor {
            map: m.clone(),
            codomain,
        };
        dev11 = dev11.max((conditional_entropy(joint, Target::Y, &e.map) - hyx).abs());
        let qy = e.induced_posterior_partition(joint);
        let joint_cond = pair_partition(&e.map, &qy);
        dev12 = dev12.max(
            (conditional_entropy(joint, Target::Z, &joint_cond) - conditional_entropy(joint, Target::Z, &qy)).abs(),
        );
    }

    let witness = TableExtractor::posterior_witness(joint, codomain);
    let witness_value = witness.as_ref().map(|w| virtual_value(joint, w, lambda));
    let witness_bound = witness.as_ref().map(|w| value_lower_bound(joint, w, lambda));
    let witness_attains_bound =
        matches!((witness_value, witness_bound), (Some(v), Some(b)) if (v - b).abs() <= CERT_TOL);
    let witness_is_optimal = matches!(witness_value, Some(v) if (v - min_value).abs() <= CERT_TOL);

    let best = TableExtractor {
        map: minimizers[0].clone(),
        codomain,
    };
    let cert = ExtractorCertificate {
        lambda,
        codomain,
        candidates: total as u64,
        min_value,
        minimizers,
        max_bound_violation: max_violation,
        bound_holds: max_violation <= 1e-12,
        witness: witness.map(|w| w.map),
        witness_value,
        witness_bound,
        witness_attains_bound,
        witness_is_optimal,
        max_dev_sufficiency: dev11,
        max_dev_independence: dev12,
        minimizers_satisfy_properties: dev11 <= CERT_TOL && dev12 <= CERT_TOL,
    };
    Ok((best, cert))
}

/// Optimal-output check at a searched optimum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputCertificate {
    pub lambda: f64,
    pub optimum: Vec<usize>,
    /// `max_x |P*(. | E*(x)) - q_y(. | x)|`
    pub predictor_deviation: f64,
    /// `max_x |D*(. | E*(x), P*) - q_z(. | q_y(. | x))|`
    pub discriminator_deviation: f64,
    pub predictor_matches: bool,
    pub discriminator_matches: bool,
    pub passed: bool,
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Composes the search with the predictor/discriminator oracles: at the
/// exhaustive optimum `E*`, compares the optimal predictor with `q_y(. | x)`
/// and the optimal discriminator with `q_z(. | q_y(. | x))`.
pub fn optimal_output_check(joint: &DiscreteJoint, lambda: f64, codomain: usize) -> Result<OutputCertificate> {
    let (best, _) = optimal_extractor_search(joint, lambda, codomain)?;
    Ok(output_certificate(joint, lambda, &best))
}

/// The optimal-output comparison at a given extractor.
pub fn output_certificate(joint: &DiscreteJoint, lambda: f64, best: &TableExtractor) -> OutputCertificate {
    let p_star = joint.class_posteriors(&best.map, Target::Y);
    let qy_part = best.induced_posterior_partition(joint);
    let d_cond = pair_partition(&best.map, &qy_part);
    let d_star = joint.class_posteriors(&d_cond, Target::Z);
    let true_post = joint.posterior_partition();
    let qz_given_post = joint.class_posteriors(&true_post, Target::Z);
    let (mut dp, mut dd) = (0.0f64, 0.0f64);
    for x in 0..joint.nx {
        if joint.px(x) == 0.0 {
            continue;
        }
        dp = dp.max(max_abs_diff(
            &p_star[best.map[x]],
            &joint.posterior_given_x(x, Target::Y),
        ));
        dd = dd.max(max_abs_diff(&d_star[d_cond[x]], &qz_given_post[true_post[x]]));
    }
    OutputCertificate {
        lambda,
        optimum: best.map.clone(),
        predictor_deviation: dp,
        discriminator_deviation: dd,
        predictor_matches: dp <= CERT_TOL,
        discriminator_matches: dd <= CERT_TOL,
        passed: dp <= CERT_TOL && dd <= CERT_TOL,
    }
}

/// Sizes and weights of a batch of random certificate instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TheoryCheckConfig {
    pub instances: usize,
    /// `|X|` is drawn from `2..=max_x`.
    pub max_x: usize,
    /// `|Z|` is drawn from `2..=max_z`.
    pub max_z: usize,
    pub codomain: usize,
    pub lambdas: Vec<f64>,
}

impl Default for TheoryCheckConfig {
    fn default() -> Self {
        Self {
            instances: 20,
            max_x: 8,
            max_z: 3,
            codomain: 4,
            lambdas: vec![0.1, 1.0, 10.0],
        }
    }
}

impl TheoryCheckConfig {
    pub fn validate(&self) -> Result<()> {
        if self.instances == 0 || self.max_x < 2 || self.max_z < 2 || self.codomain < 2 {
            return Err(Error::config(
                "theory check needs instances >= 1, max_x, max_z, codomain >= 2",
            ));
        }
        if self.lambdas.is_empty() || self.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return Err(Error::config("theory check lambdas must be finite and > 0"));
        }
        let worst = candidate_count(self.max_x, self.codomain);
        if worst > SEARCH_LIMIT {
            return Err(Error::SearchTooLarge {
                candidates: worst,
                bound: SEARCH_LIMIT,
            });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCertificate {
    pub lambda: f64,
    pub extractor: ExtractorCertificate,
    pub output: OutputCertificate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceCertificate {
    pub seed: u64,
    pub nx: usize,
    pub nz: usize,
    pub posterior_classes: usize,
    /// Random extractor the predictor/discriminator checks run at.
    pub probe_extractor: Vec<usize>,
    pub predictor: OptimalityReport,
    pub discriminator: OptimalityReport,
    pub per_lambda: Vec<LambdaCertificate>,
}

/// Pass/fail roll-up for one claim across all instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClaimSummary {
    pub checked: usize,
    pub failures: usize,
    pub max_deviation: f64,
    pub passed: bool,
}

impl ClaimSummary {
    fn new() -> Self {
        Self {
            checked: 0,
            failures: 0,
            max_deviation: 0.0,
            passed: true,
        }
    }

    fn record(&mut self, ok: bool, deviation: f64) {
        self.checked += 1;
        self.max_deviation = self.max_deviation.max(deviation);
        if !ok {
            self.failures += 1;
            self.passed = false;
        }
    }
}

pub const THEORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryReport {
    pub schema_version: u32,
    pub seed: u64,
    pub config: TheoryCheckConfig,
    /// Minimal predictor cross-entropy equals `H(y | E(x))`.
    pub predictor_optimum: ClaimSummary,
    /// Minimal discriminator cross-entropy equals `H(z | E(x), P)`.
    pub discriminator_optimum: ClaimSummary,
    /// `V(E) >= H(y|x) - lambda H(z | q_y(E(x)))` for every extractor.
    pub extractor_bound: ClaimSummary,
    /// `E(x) = q_y(. | x)` attains its own lower bound.
    pub witness_attains_bound: ClaimSummary,
    /// `E(x) = q_y(. | x)` is a global minimizer of `V`.
    pub witness_optimal: ClaimSummary,
    /// Every exhaustive minimizer is sufficient for `y` and its
    /// representation carries no extra information on `z`.
    pub all_minimizers_characterized: ClaimSummary,
    /// Optimal predictor and discriminator outputs at the searched optimum.
    pub optimal_outputs: ClaimSummary,
    pub instances: Vec<InstanceCertificate>,
}

/// Certifies every claim on `config.instances` random joints. Instance `i`
/// uses seed `mix(seed, i)`; instances are independent and run in parallel.
pub fn theory_check(config: &TheoryCheckConfig, seed: u64) -> Result<TheoryReport> {
    use rayon::prelude::*;
    config.validate()?;
    let instances: Vec<InstanceCertificate> = (0..config.instances)
        .into_par_iter()
        .map(|i| certify_instance(config, crate::ban_synth::mix_seed(seed, i as u64)))
        .collect::<Result<_>>()?;
    let mut report = TheoryReport {
        schema_version: THEORY_SCHEMA_VERSION,
        seed,
        config: config.clone(),
        predictor_optimum: ClaimSummary::new(),
        discriminator_optimum: ClaimSummary::new(),
        extractor_bound: ClaimSummary::new(),
        witness_attains_bound: ClaimSummary::new(),
        witness_optimal: ClaimSummary::new(),
        all_minimizers_characterized: ClaimSummary::new(),
        optimal_outputs: ClaimSummary::new(),
        instances: Vec::new(),
    };
    for inst in &instances {
        report
            .predictor_optimum
            .record(inst.predictor.passed, inst.predictor.max_deviation);
        report
            .discriminator_optimum
            .record(inst.discriminator.passed, inst.discriminator.max_deviation);
        for l in &inst.per_lambda {
            let e = &l.extractor;
            report
                .extractor_bound
                .record(e.bound_holds, e.max_bound_violation.max(0.0));
            let (attain, gap) = match (e.witness_value, e.witness_bound) {
                (Some(v), Some(b)) => ((v - b).abs(), (v - e.min_value).abs()),
                _ => (f64::INFINITY, f64::INFINITY),
            };
            report.witness_attains_bound.record(e.witness_attains_bound, attain);
            report.witness_optimal.record(e.witness_is_optimal, gap);
            report.all_minimizers_characterized.record(
                e.minimizers_satisfy_properties,
                e.max_dev_sufficiency.max(e.max_dev_independence),
            );
            let o = &l.output;
            report
                .optimal_outputs
                .record(o.passed, o.predictor_deviation.max(o.discriminator_deviation));
        }
    }
    report.instances = instances;
    Ok(report)
}

fn certify_instance(config: &TheoryCheckConfig, seed: u64) -> Result<InstanceCertificate> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nx = rng.random_range(2..=config.max_x);
    let nz = rng.random_range(2..=config.max_z);
    let posterior_classes = rng.random_range(1..=config.codomain.min(nx));
    let joint = DiscreteJoint::random(nx, nz, posterior_classes, rng.random())?;
    let probe = TableExtractor::new(
        (0..nx).map(|_| rng.random_range(0..config.codomain)).collect(),
        config.codomain,
    )?;
    let predictor = optimal_predictor_check(&joint, &probe);
    let table = joint.class_posteriors(&probe.map, Target::Y);
    let mut padded = table;
    padded.resize(config.codomain, vec![0.5, 0.5]);
    let discriminator = optimal_discriminator_check(&joint, &probe, &padded)?;
    let per_lambda = config
        .lambdas
        .iter()
        .map(|&lambda| {
            let (best, extractor) = optimal_extractor_search(&joint, lambda, config.codomain)?;
            let output = output_certificate(&joint, lambda, &best);
            Ok(LambdaCertificate {
                lambda,
                extractor,
                output,
            })
        })
        .collect::<Result<_>>()?;
    Ok(InstanceCertificate {
        seed,
        nx,
        nz,
        posterior_classes,
        probe_extractor: probe.map,
        predictor,
        discriminator,
        per_lambda,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `H(T, C) - H(C)` from explicit joint cells.
    fn chain_rule_entropy(j: &DiscreteJoint, t: Target, cond: &[usize]) -> f64 {
        let classes = cond.iter().max().unwrap() + 1;
        let n = j.target_size(t);
        let mut cells = vec![0.0; classes * n];
        for x in 0..j.nx() {
            for y in 0..j.ny() {
                for z in 0..j.nz() {
                    let v = if t == Target::Y { y } else { z };
                    cells[cond[x] * n + v] += j.prob(x, y, z);
                }
            }
        }
        let h = |ps: &[f64]| -> f64 { ps.iter().filter(|p| **p > 0.0).map(|p| -p * p.ln()).sum() };
        let marg: Vec<f64> = cells.chunks(n).map(|c| c.iter().sum()).collect();
        h(&cells) - h(&marg)
    }

    fn fair_coin(nx: usize) -> DiscreteJoint {
        DiscreteJoint::new(nx, 2, 1, vec![0.5 / nx as f64; 2 * nx]).unwrap()
    }

    #[test]
    fn entropy_reference_values() {
        let j = fair_coin(3);
        assert!((conditional_entropy(&j, Target::Y, &j.identity_partition()) - 2f64.ln()).abs() < 1e-15);

        // y = x mod 2
        let mut q = vec![0.0; 4 * 2];
        for x in 0..4 {
            q[x * 2 + x % 2] = 0.25;
        }
        let j = DiscreteJoint::new(4, 2, 1, q).unwrap();
        assert_eq!(conditional_entropy(&j, Target::Y, &j.identity_partition()), 0.0);
        assert!((entropy(&j, Target::Y) - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn entropy_matches_chain_rule_implementation() {
        for seed in 0..20 {
            let j = DiscreteJoint::random(4, 3, 4, seed).unwrap();
            for part in [vec![0, 1, 2, 3], vec![0, 0, 1, 1], vec![0, 1, 0, 0], vec![0; 4]] {
                for t in [Target::Y, Target::Z] {
                    let a = conditional_entropy(&j, t, &part);
                    let b = chain_rule_entropy(&j, t, &part);
                    assert!((a - b).abs() < 1e-12, "{a} {b}");
                }
            }
        }
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(DiscreteJoint::new(2, 2, 1, vec![0.25; 3]).is_err());
        assert!(DiscreteJoint::new(2, 2, 1, vec![0.5, 0.5, 0.5, -0.5]).is_err());
        assert!(DiscreteJoint::new(2, 2, 1, vec![0.3; 4]).is_err());
        assert!(TableExtractor::new(vec![0, 3], 3).is_err());
    }

    #[test]
    fn simplex_minimizer_finds_normalized_weights() {
        let (pi, v) = minimize_cross_entropy(&[0.2, 0.0, 0.6]);
        // the argmin is only resolvable to about sqrt(machine epsilon)
        assert!(
            (pi[0] - 0.25).abs() < 1e-7 && pi[1] < 1e-9 && (pi[2] - 0.75).abs() < 1e-7,
            "{pi:?}"
        );
        let exact = -0.2 * 0.25f64.ln() - 0.6 * 0.75f64.ln();
        assert!((v - exact).abs() < 1e-12);
    }

    #[test]
    fn predictor_optimum_is_conditional_entropy() {
        let j = DiscreteJoint::random(5, 3, 3, 7).unwrap();
        let id = TableExtractor::new(j.identity_partition(), 5).unwrap();
        let r = optimal_predictor_check(&j, &id);
        assert!(r.passed, "{r:?}");
        assert!((r.entropy - conditional_entropy(&j, Target::Y, &j.identity_partition())).abs() < 1e-15);
        let c = TableExtractor::new(j.constant_partition(), 1).unwrap();
        let r = optimal_predictor_check(&j, &c);
        assert!(r.passed && (r.entropy - entropy(&j, Target::Y)).abs() < 1e-15);
        let e = TableExtractor::new(vec![0, 1, 1, 0, 1], 2).unwrap();
        assert!(optimal_predictor_check(&j, &e).passed);
    }

    #[test]
    fn discriminator_optimum_cases() {
        // z = x, so z is determined by the identity representation
        let mut q = vec![0.0; 3 * 2 * 3];
        for x in 0..3 {
            q[(x * 2) * 3 + x] = 1.0 / 6.0;
            q[(x * 2 + 1) * 3 + x] = 1.0 / 6.0;
        }
        let j = DiscreteJoint::new(3, 2, 3, q).unwrap();
        let id = TableExtractor::new(j.identity_partition(), 3).unwrap();
        let table = j.class_posteriors(&id.map, Target::Y);
        let r = optimal_discriminator_check(&j, &id, &table).unwrap();
        assert!(r.passed && r.numeric_min_loss.abs() < 1e-9, "{r:?}");

        // z independent of everything
        let pz = [0.2, 0.3, 0.5];
        let mut q = Vec::new();
        for _x in 0..2 {
            for py in [0.3, 0.7] {
                q.extend(pz.iter().map(|p| 0.5 * py * p));
            }
        }
        let j = DiscreteJoint::new(2, 2, 3, q).unwrap();
        let id = TableExtractor::new(vec![0, 1], 2).unwrap();
        let r = optimal_discriminator_check(&j, &id, &j.class_posteriors(&id.map, Target::Y)).unwrap();
        assert!(r.passed && (r.entropy - entropy(&j, Target::Z)).abs() < 1e-12);
        assert!(optimal_discriminator_check(&j, &id, &[vec![0.5, 0.5]]).is_err());
    }

    #[test]
    fn virtual_value_compositions() {
        let j = DiscreteJoint::random(6, 3, 3, 11).unwrap();
        let e = TableExtractor::new(vec![0, 1, 2, 0, 1, 2], 3).unwrap();
        let lambda = 0.8;
        let hy = chain_rule_entropy(&j, Target::Y, &e.map);
        let hz = chain_rule_entropy(&j, Target::Z, &e.map);
        assert!((virtual_value(&j, &e, lambda) - (hy - lambda * hz)).abs() < 1e-12);
        let c = TableExtractor::new(j.constant_partition(), 1).unwrap();
        let expect = entropy(&j, Target::Y) - lambda * entropy(&j, Target::Z);
        assert!((virtual_value(&j, &c, lambda) - expect).abs() < 1e-12);
    }

    #[test]
    fn bound_and_witness_on_random_instances() {
        for seed in 0..8 {
            let j = DiscreteJoint::random(6, 3, 3, 100 + seed).unwrap();
            for lambda in [0.1, 1.0, 10.0] {
                let (_, cert) = optimal_extractor_search(&j, lambda, 3).unwrap();
                assert!(cert.bound_holds, "{cert:?}");
                assert!(cert.witness_attains_bound, "{cert:?}");
                assert_eq!(cert.candidates, 729);
            }
        }
    }

    #[test]
    fn independent_nuisance_is_discarded() {
        // x = (a, b): y depends on a, z = b, a and b independent
        let (py_a, pb) = ([0.1, 0.8], [0.3, 0.7]);
        let mut q = vec![0.0; 4 * 2 * 2];
        for a in 0..2 {
            for b in 0..2 {
                let x = a * 2 + b;
                let px = 0.5 * pb[b];
                q[(x * 2 + 1) * 2 + b] = px * py_a[a];
                q[(x * 2) * 2 + b] = px * (1.0 - py_a[a]);
            }
        }
        let j = DiscreteJoint::new(4, 2, 2, q).unwrap();
        for lambda in [0.1, 1.0, 10.0] {
            let (best, cert) = optimal_extractor_search(&j, lambda, 2).unwrap();
            assert!(
                cert.minimizers_satisfy_properties && cert.witness_is_optimal,
                "{cert:?}"
            );
            let hz = conditional_entropy(&j, Target::Z, &best.map);
            assert!((hz - entropy(&j, Target::Z)).abs() < 1e-12, "representation leaks z");
            assert!(optimal_output_check(&j, lambda, 2).unwrap().passed);
        }
    }

    #[test]
    fn identity_optimal_when_nuisance_is_independent() {
        let j = {
            let pz = [0.6, 0.4];
            let py = [0.2, 0.9, 0.5];
            let mut q = Vec::new();
            for p1 in py {
                for p in [1.0 - p1, p1] {
                    q.extend(pz.iter().map(|z| p * z / 3.0));
                }
            }
            DiscreteJoint::new(3, 2, 2, q).unwrap()
        };
        for lambda in [0.1, 1.0, 10.0] {
            let (_, cert) = optimal_extractor_search(&j, lambda, 3).unwrap();
            let id = j.identity_partition();
            assert!(cert.minimizers.contains(&id), "{cert:?}");
        }
    }

    #[test]
    fn deterministic_label_gives_one_hot_output() {
        let mut q = vec![0.0; 3 * 2 * 2];
        for (x, y) in [(0, 1), (1, 0), (2, 1)] {
            q[(x * 2 + y) * 2] = 1.0 / 6.0;
            q[(x * 2 + y) * 2 + 1] = 1.0 / 6.0;
        }
        let j = DiscreteJoint::new(3, 2, 2, q).unwrap();
        let out = optimal_output_check(&j, 1.0, 2).unwrap();
        assert!(out.passed, "{out:?}");
        let best = TableExtractor::new(out.optimum.clone(), 2).unwrap();
        for row in j.class_posteriors(&best.map, Target::Y) {
            assert!(row.iter().all(|p| *p == 0.0 || *p == 1.0));
        }
    }

    #[test]
    fn refuses_oversized_search() {
        let j = DiscreteJoint::random(12, 2, 2, 1).unwrap();
        match optimal_extractor_search(&j, 1.0, 4) {
            Err(Error::SearchTooLarge { candidates, bound }) => {
                assert_eq!(candidates, 4u128.pow(12));
                assert_eq!(bound, SEARCH_LIMIT);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn theory_check_report() {
        let cfg = TheoryCheckConfig {
            instances: 4,
            max_x: 5,
            ..TheoryCheckConfig::default()
        };
        let r = theory_check(&cfg, 11).unwrap();
        assert_eq!(r.instances.len(), 4);
        assert!(r.predictor_optimum.passed && r.discriminator_optimum.passed);
        assert!(r.extractor_bound.passed && r.witness_attains_bound.passed);
        assert_eq!(r.extractor_bound.checked, 12);
        assert_eq!(theory_check(&cfg, 11).unwrap(), r);
        let json = serde_json::to_string(&r).unwrap();
        assert_eq!(serde_json::from_str::<TheoryReport>(&json).unwrap(), r);
        assert!(theory_check(
            &TheoryCheckConfig {
                max_x: 12,
                ..cfg.clone()
            },
            0
        )
        .is_err());
        assert!(theory_check(&TheoryCheckConfig { lambdas: vec![], ..cfg }, 0).is_err());
    }

    #[test]
    fn optimum_trades_sufficiency_when_nuisance_tracks_label() {
        // y = z = x, x uniform on two values
        let mut q = vec![0.0; 2 * 2 * 2];
        q[0] = 0.5;
        q[(2 + 1) * 2 + 1] = 0.5;
        let j = DiscreteJoint::new(2, 2, 2, q).unwrap();
        let ident = TableExtractor::new(vec![0, 1], 2).unwrap();
        let constant = TableExtractor::new(vec![0, 0], 2).unwrap();
        let ln2 = std::f64::consts::LN_2;
        assert!(virtual_value(&j, &ident, 3.0).abs() < 1e-15);
        assert!((virtual_value(&j, &constant, 3.0) - (1.0 - 3.0) * ln2).abs() < 1e-15);
        let (best, cert) = optimal_extractor_search(&j, 3.0, 2).unwrap();
        assert_eq!(best.map[0], best.map[1]);
        assert!(!cert.minimizers_satisfy_properties && !cert.witness_is_optimal);
        assert!(cert.bound_holds && cert.witness_attains_bound);
        let (_, low) = optimal_extractor_search(&j, 0.5, 2).unwrap();
        assert!(low.minimizers_satisfy_properties);
    }
}
