//! The full verification suite: one simulated window plus a few fixed
//! auxiliary cases, checked against closed forms.

use serde::Serialize;

use crate::analytic::{geometric_moments, geometric_pgf, intensities, population_mgf, renewal_sequence};
use crate::error::{Error, Result};
use crate::marks::{MarkDistribution, SeedSpec};
use crate::population::{
    burn_in, original_ancestors, population_process, regeneration_cycles, MarkWindow, PopulationTrace,
};
use crate::stats::{
    distribution_equality_test, empirical_intensity, kernel_gof_test, lag_autocorrelation, mtp_balance,
    pair_independence_test, palm_mean, palm_split, ratio_identity_check, registered_functionals, time_average,
    total_cousins, ephemeral_tree_size, Estimate,
};
use crate::tree::{build_forest, component_count, FamilyForest, NodeLabel};

/// Standard errors allowed between an estimate and its target.
pub const SE_MULTIPLIER: f64 = 3.0;
/// Significance level of the chi-square checks.
pub const ALPHA: f64 = 0.01;
/// Relative tolerance of the distance-ratio checks.
pub const RATIO_TOLERANCE: f64 = 0.10;
/// Window length of the auxiliary component-count cases.
pub const COMPONENT_WINDOW: u64 = 10_000;

/// Core range minus a right margin of a tenth of the window: orbits of
/// nodes closer to the right end may leave the window before they meet.
fn component_range(trace: &PopulationTrace) -> Result<(i64, i64)> {
    let (lo, hi) = trace.core().ok_or(Error::EmptyCore)?;
    let hi = hi - trace.window().len() as i64 / 10;
    if hi < lo {
        return Err(Error::EmptyCore);
    }
    Ok((lo, hi))
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyConfig {
    pub dist: String,
    pub window: u64,
    pub eps: f64,
    pub seed: u64,
    /// Replication index; replication 0 is the plain seed.
    pub replication: u64,
    /// Degrees at which cousin and ephemeral-depth laws are compared.
    pub cousin_degrees: Vec<usize>,
}

impl VerifyConfig {
    pub fn new(dist: &MarkDistribution, window: u64, eps: f64, seed: u64) -> Self {
        VerifyConfig {
            dist: dist.spec().to_string(),
            window,
            eps,
            seed,
            replication: 0,
            cousin_degrees: vec![1, 2],
        }
    }

    fn seed_for(&self, purpose: &str) -> SeedSpec {
        SeedSpec::with_purpose(self.seed, purpose).replication(self.replication)
    }
}

/// One line of the report.
#[derive(Clone, Debug, Serialize)]
pub struct Check {
    pub name: String,
    /// The identity or statement being checked.
    pub identity: String,
    pub estimate: f64,
    pub target: Option<f64>,
    pub se: Option<f64>,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub config: VerifyConfig,
    pub checks: Vec<Check>,
    pub passed: bool,
}

impl VerifyReport {
    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

struct Suite {
    checks: Vec<Check>,
}

impl Suite {
    fn push(&mut self, name: &str, identity: &str, estimate: f64, target: Option<f64>, se: Option<f64>, pass: bool) {
        self.checks.push(Check {
            name: name.into(),
            identity: identity.into(),
            estimate,
            target,
            se,
            pass,
            note: None,
        });
    }

    fn note(&mut self, note: String) {
        if let Some(c) = self.checks.last_mut() {
            c.note = Some(note);
        }
    }

    /// Estimate within `SE_MULTIPLIER` standard errors of `target`.
    fn near(&mut self, name: &str, identity: &str, e: &Estimate, target: f64) {
        let pass = e.within(target, SE_MULTIPLIER);
        self.push(name, identity, e.value, Some(target), Some(e.se), pass);
    }

    fn exact(&mut self, name: &str, identity: &str, estimate: f64, target: f64, tol: f64) {
        let pass = (estimate - target).abs() <= tol;
        self.push(name, identity, estimate, Some(target), None, pass);
    }

    fn failed(&mut self, name: &str, identity: &str, err: &Error) {
        self.push(name, identity, f64::NAN, None, None, false);
        self.note(err.to_string());
    }
}

/// Smallest admissible window for `eps`: ten burn-in lengths.
pub fn minimum_window(dist: &MarkDistribution, eps: f64) -> u64 {
    10 * burn_in(dist, eps).max(1)
}

/// Runs every check on one replication.
///
/// Errors only for configurations the suite cannot run at all: a law without
/// mass at 1, or a window shorter than [`minimum_window`].
pub fn run_suite(cfg: &VerifyConfig) -> Result<VerifyReport> {
    let dist = MarkDistribution::parse(&cfg.dist)?;
    if !dist.has_unit_mass() {
        return Err(Error::AssumptionViolated("verification needs P[a = 1] > 0".into()));
    }
    let b = burn_in(&dist, cfg.eps);
    let needed = minimum_window(&dist, cfg.eps);
    if cfg.window < needed {
        return Err(Error::WindowTooShort { len: cfg.window, needed });
    }
    let window = MarkWindow::simulate(&dist, cfg.seed_for("marks"), 0, cfg.window as i64 - 1)?;
    let trace = population_process(window, b);
    let forest = build_forest(&trace, &original_ancestors(&trace)?);

    let mut s = Suite { checks: Vec::new() };
    worked_example(&mut s);
    population_checks(&mut s, &dist, &trace);
    transform_checks(&mut s, &dist);
    kernel_checks(&mut s, &dist, &trace);
    criticality_checks(&mut s, &forest);
    transport_checks(&mut s, &forest);
    cousin_checks(&mut s, cfg, &forest);
    component_checks(&mut s, cfg, &trace);
    renewal_checks(&mut s, &dist);
    cycle_checks(&mut s, &trace);

    let passed = s.checks.iter().all(|c| c.pass);
    Ok(VerifyReport { config: cfg.clone(), checks: s.checks, passed })
}

fn worked_example(s: &mut Suite) {
    let w = MarkWindow::from_marks(-6, vec![10, 3, 8, 3, 3, 6, 1]).unwrap();
    let t = population_process(w, 0);
    let n0 = t.at(0).unwrap() as f64;
    s.exact("worked_example_population", "N_0 = 1 + #{m < 0 : f(m) > 0} on the worked example", n0, 5.0, 0.0);
}

fn population_checks(s: &mut Suite, dist: &MarkDistribution, trace: &PopulationTrace) {
    let anc = match original_ancestors(trace) {
        Ok(a) => a,
        Err(e) => return s.failed("original_ancestors", "original ancestors form a renewal process", &e),
    };
    let cycles = match regeneration_cycles(trace, &anc) {
        Ok(c) => c,
        Err(e) => return s.failed("regeneration_cycles", "regenerative with independent cycles", &e),
    };
    let n = |x: i64| trace.at(x).unwrap() as f64;
    match time_average(trace, Some(&cycles), n) {
        Ok(e) => s.near("littles_law", "E[N_0] = E[a_0]", &e, dist.mean()),
        Err(e) => s.failed("littles_law", "E[N_0] = E[a_0]", &e),
    }

    let forest = build_forest(trace, &anc);
    let report = intensities(dist, 1e-10).unwrap();
    let succ = forest.atoms(NodeLabel::Successful).and_then(|p| empirical_intensity(&p, Some(&cycles)));
    match &succ {
        Ok(e) => s.near("lambda_s", "lambda^s = 1 / E[a_0]", e, report.lambda_s),
        Err(e) => s.failed("lambda_s", "lambda^s = 1 / E[a_0]", e),
    }
    match empirical_intensity(&anc, Some(&cycles)) {
        Ok(e) => s.near("lambda_o", "lambda^o = prod_i P[a_0 <= i]", &e, report.lambda_o),
        Err(e) => s.failed("lambda_o", "lambda^o = prod_i P[a_0 <= i]", &e),
    }
    let eph = forest.atoms(NodeLabel::Ephemeral).and_then(|p| empirical_intensity(&p, None));
    match (&succ, &eph) {
        (Ok(a), Ok(b)) => s.exact("lambda_s_plus_lambda_e", "lambda^s + lambda^e = 1", a.value + b.value, 1.0, 1e-12),
        (Err(e), _) | (_, Err(e)) => s.failed("lambda_s_plus_lambda_e", "lambda^s + lambda^e = 1", e),
    }

    for t in [-1.0, 0.5] {
        let name = format!("mgf_t{t}");
        let reference = "E[exp(t N_0)] = e^t prod_i (e^t P[a_0 > i] + P[a_0 <= i])";
        let analytic = population_mgf(dist, t, 1e-10);
        let empirical = time_average(trace, Some(&cycles), |x| (t * n(x)).exp());
        match (analytic, empirical) {
            (Ok(a), Ok(e)) => s.near(&name, reference, &e, a.value),
            (Err(e), _) | (_, Err(e)) => s.failed(&name, reference, &e),
        }
    }
}

fn transform_checks(s: &mut Suite, dist: &MarkDistribution) {
    let capped = MarkDistribution::parse("zeta:2.5,1000").unwrap();
    let reference = "E[exp(t N_0)] < infinity for every t under light tails";
    match population_mgf(&capped, 1.0, 1e-10) {
        Ok(v) => s.push("mgf_zeta_capped_t1", reference, v.value, None, None, v.value.is_finite() && v.value > 1.0),
        Err(e) => s.failed("mgf_zeta_capped_t1", reference, &e),
    }

    let sp = dist.geometric_parameter().filter(|&x| x < 1.0).unwrap_or(0.5);
    let r = 1.0 - sp;
    let g = |z: f64| geometric_pgf(sp, z, 1e-16).unwrap().value;
    let residual = [0.0, 0.25, 0.5, 0.75, 1.0]
        .iter()
        .map(|&z| (g(z) - z * g(r * z + sp)).abs())
        .fold(0.0, f64::max);
    s.exact("pgf_functional_equation", "G(z) = z G(r z + s) for geometric marks", residual, 0.0, 1e-12);
    s.note(format!("s = {sp}, max residual over z in {{0, .25, .5, .75, 1}}"));
    let m = geometric_moments(sp).unwrap();
    let h = 1e-4;
    let d1 = (g(1.0 + h) - g(1.0 - h)) / (2.0 * h);
    let d2 = (g(1.0 + h) - 2.0 * g(1.0) + g(1.0 - h)) / (h * h);
    s.exact("pgf_mean", "G'(1) = 1/s", d1, m.mean, 1e-6);
    s.exact("pgf_second_factorial_moment", "G''(1) = 2r / (s (1 - r^2))", d2, m.second_factorial_moment, 1e-6);
}

fn kernel_checks(s: &mut Suite, dist: &MarkDistribution, trace: &PopulationTrace) {
    let Some(sp) = dist.geometric_parameter().filter(|&x| x < 1.0) else {
        return;
    };
    let reference = "N is a Markov chain with binomial-thinning kernel under geometric marks";
    match kernel_gof_test(trace, sp) {
        Ok(g) => {
            s.push("markov_kernel_gof", reference, g.p_value(), Some(ALPHA), None, g.p_value() > ALPHA);
            s.note(format!("Fisher combination over {} states; pass iff p > {ALPHA}", g.states.len()));
        }
        Err(e) => s.failed("markov_kernel_gof", reference, &e),
    }
    let lo = intensities(dist, 1e-10).unwrap().lambda_o;
    let cycles = original_ancestors(trace).and_then(|a| regeneration_cycles(trace, &a));
    let reference = "stationary P[N = 1] = lambda^o";
    match time_average(trace, cycles.as_ref().ok(), |x| f64::from(u8::from(trace.at(x) == Some(1)))) {
        Ok(e) => s.near("stationary_mass_at_one", reference, &e, lo),
        Err(e) => s.failed("stationary_mass_at_one", reference, &e),
    }
}

fn criticality_checks(s: &mut Suite, forest: &FamilyForest) {
    let p1 = forest.window().dist().map_or(0.0, MarkDistribution::p1);
    for n in [1usize, 2] {
        let split = match palm_split(forest, n) {
            Ok(x) => x,
            Err(e) => return s.failed(&format!("palm_split_d{n}"), "E^s[d_n(0)] > 1 > E^e[d_n(0)]", &e),
        };
        if n == 1 {
            s.near("criticality_d1", "E[d_1(0)] = 1", &split.total, 1.0);
        }
        if p1 >= 1.0 {
            continue;
        }
        let e = split.successful;
        let pass = e.exceeds(1.0, SE_MULTIPLIER);
        s.push(&format!("palm_successful_d{n}"), "E^s[d_n(0)] > 1", e.value, Some(1.0), Some(e.se), pass);
        s.note("pass iff estimate exceeds target by more than 3 SE".into());
        let e = split.ephemeral;
        let pass = e.below(1.0, SE_MULTIPLIER);
        s.push(&format!("palm_ephemeral_d{n}"), "E^e[d_n(0)] < 1", e.value, Some(1.0), Some(e.se), pass);
        s.note("pass iff estimate is below target by more than 3 SE".into());
    }
}

fn transport_checks(s: &mut Suite, forest: &FamilyForest) {
    for h in registered_functionals() {
        let name = format!("mass_transport_{}", h.name());
        let reference = "mass transport: E[mass received at 0] = E[mass sent from 0]";
        match mtp_balance(forest, h.as_ref()) {
            Ok(b) => {
                let se = b.lhs.se.hypot(b.rhs.se);
                let pass = b.balanced(SE_MULTIPLIER);
                s.push(&name, reference, b.lhs.value - b.rhs.value, Some(0.0), Some(se), pass);
                s.note(format!(
                    "received {:.12}, sent {:.12}, target {:?}, boundary {:.3e}, radius {}",
                    b.lhs.value, b.rhs.value, b.target, b.boundary, b.radius
                ));
            }
            Err(e) => s.failed(&name, reference, &e),
        }
    }
}

fn cousin_checks(s: &mut Suite, cfg: &VerifyConfig, forest: &FamilyForest) {
    let succ = forest.successful();
    let profiles = forest.ephemeral_profiles();
    let depth = |i: usize, j: usize| profiles[i].as_ref().and_then(|p| p.get(j).copied()).unwrap_or(0);
    let max_j = cfg.cousin_degrees.iter().copied().max().unwrap_or(0).max(3);
    let mut exact: Vec<Vec<u64>> = vec![Vec::new(); max_j + 1];
    let mut mismatches = 0u64;
    let mut compared = 0u64;
    for (i, &k) in succ.iter().enumerate() {
        if i + max_j >= succ.len() {
            break;
        }
        for j in 1..=max_j {
            let Ok(foil) = forest.foil(k, j) else {
                continue;
            };
            let l = foil.exact_count() as u64;
            exact[j].push(l);
            if j <= 3 {
                compared += 1;
                mismatches += u64::from(l != depth(i + j, j));
            }
        }
    }
    s.push(
        "foil_duality",
        "l_j(k_0) = d^e_j(k_j) for successful k_0, j <= 3",
        mismatches as f64,
        Some(0.0),
        None,
        mismatches == 0 && compared > 0,
    );
    s.note(format!("{compared} (atom, degree) pairs compared"));

    // the duality makes the cousin sample a shift of the depth sample, so
    // the two-sample test draws them from disjoint halves of the atoms
    let half = exact[1].len().min(succ.len()) / 2;
    for &j in &cfg.cousin_degrees {
        let d: Vec<u64> = (half.max(1)..succ.len()).map(|i| depth(i, j)).collect();
        let l = &exact[j][..half.min(exact[j].len())];
        let name = format!("cousin_law_j{j}");
        let reference = "P^s[d^e_j(0) = q] = P^s[l_j(0) = q]";
        match distribution_equality_test(&d, l) {
            Ok(t) => s.push(&name, reference, t.p_value, Some(ALPHA), None, t.p_value > ALPHA),
            Err(e) => s.failed(&name, reference, &e),
        }
    }

    let mean = forest.window().dist().map_or(f64::NAN, MarkDistribution::mean);
    match palm_mean(forest, NodeLabel::Successful, total_cousins(forest)) {
        Ok(e) => s.near("palm_total_cousins", "E^s[l(0)] = E[a_0]", &e, mean),
        Err(e) => s.failed("palm_total_cousins", "E^s[l(0)] = E[a_0]", &e),
    }
    match palm_mean(forest, NodeLabel::Successful, ephemeral_tree_size(forest)) {
        Ok(e) => s.near("palm_ephemeral_tree_size", "E^s[d~^e(0)] = E[a_0]", &e, mean),
        Err(e) => s.failed("palm_ephemeral_tree_size", "E^s[d~^e(0)] = E[a_0]", &e),
    }
    ratio_checks(s, "", forest);

    let tp = MarkDistribution::two_point(0.5, 2).unwrap();
    let len = cfg.window.max(minimum_window(&tp, cfg.eps));
    let aux = MarkWindow::simulate(&tp, cfg.seed_for("two-point ratio"), 0, len as i64 - 1)
        .map(|w| population_process(w, burn_in(&tp, cfg.eps)))
        .and_then(|t| original_ancestors(&t).map(|a| build_forest(&t, &a)));
    match aux {
        Ok(f) => ratio_checks(s, "_two_point", &f),
        Err(e) => s.failed("distance_ratio_two_point", "distance ratio = E[a_0] - 1", &e),
    }
}

fn ratio_checks(s: &mut Suite, suffix: &str, forest: &FamilyForest) {
    let reference = "E^s[sum_{n in tree} |n|] / E^e[|root(0)|] = E[a_0] - 1";
    match ratio_identity_check(forest) {
        Ok(r) => {
            let rel = |x: f64| ((x - r.target) / r.target).abs() <= RATIO_TOLERANCE;
            s.push(&format!("distance_ratio_direct{suffix}"), reference, r.d_ratio, Some(r.target), None, rel(r.d_ratio));
            s.note(format!("pass iff within {}% of target", RATIO_TOLERANCE * 100.0));
            s.push(&format!("distance_ratio_cousin{suffix}"), reference, r.l_ratio, Some(r.target), None, rel(r.l_ratio));
            s.note(format!("pass iff within {}% of target", RATIO_TOLERANCE * 100.0));
        }
        Err(e) => s.failed(&format!("distance_ratio{suffix}"), reference, &e),
    }
}

fn component_checks(s: &mut Suite, cfg: &VerifyConfig, trace: &PopulationTrace) {
    let reference = "forest of f has one component per residue class of the smallest mark";
    let cases = [("empirical:2=0.5,3=0.5", "components_support_2_3", 2.0), ("constant:2", "components_constant_2", 2.0)];
    for (spec, name, target) in cases {
        let d = MarkDistribution::parse(spec).unwrap();
        let counted = MarkWindow::simulate(&d, cfg.seed_for(name), 0, COMPONENT_WINDOW as i64 - 1).and_then(|w| {
            let t = population_process(w, burn_in(&d, cfg.eps));
            let (lo, hi) = component_range(&t)?;
            component_count(t.window(), lo, hi)
        });
        match counted {
            Ok(c) => {
                s.exact(name, reference, c as f64, target, 0.0);
                if c as f64 != target {
                    s.note("orbits under coprime steps meet; the observed count is the gcd of the support".into());
                }
            }
            Err(e) => s.failed(name, reference, &e),
        }
    }
    let reference = "one connected component when P[a_0 = 1] > 0";
    let counted = component_range(trace).and_then(|(lo, hi)| component_count(trace.window(), lo, hi));
    match counted {
        Ok(c) => s.exact("components_main", reference, c as f64, 1.0, 0.0),
        Err(e) => s.failed("components_main", reference, &e),
    }
}

fn renewal_checks(s: &mut Suite, dist: &MarkDistribution) {
    let sp = dist.geometric_parameter().unwrap_or(0.5);
    let g = MarkDistribution::geometric(sp).unwrap();
    let u = renewal_sequence(&g, 200);
    let dev = u[1..].iter().map(|x| (x - sp).abs()).fold(0.0, f64::max);
    s.exact("renewal_geometric", "u_k = s for k >= 1 under geometric(s) marks", dev, 0.0, 1e-12);
    s.note(format!("max |u_k - {sp}| over k = 1..200"));
    let tp = MarkDistribution::two_point(0.5, 2).unwrap();
    let u = renewal_sequence(&tp, 50);
    s.exact("renewal_two_point_u50", "u_k -> 1 / E[a_0]", u[50], 2.0 / 3.0, 1e-6);
}

fn cycle_checks(s: &mut Suite, trace: &PopulationTrace) {
    let lengths = match original_ancestors(trace).and_then(|a| regeneration_cycles(trace, &a)) {
        Ok(c) => c.lengths(),
        Err(e) => return s.failed("cycle_independence", "cycles between original ancestors are i.i.d.", &e),
    };
    let xs: Vec<f64> = lengths.iter().map(|&l| l as f64).collect();
    match lag_autocorrelation(&xs, 1) {
        Ok(e) => s.near("cycle_lag1_autocorrelation", "cycles between original ancestors are i.i.d.", &e, 0.0),
        Err(e) => s.failed("cycle_lag1_autocorrelation", "cycles between original ancestors are i.i.d.", &e),
    }
    match pair_independence_test(&lengths) {
        Ok(t) => s.push(
            "cycle_pair_independence",
            "cycles between original ancestors are i.i.d.",
            t.p_value,
            Some(ALPHA),
            None,
            t.p_value > ALPHA,
        ),
        Err(e) => s.failed("cycle_pair_independence", "cycles between original ancestors are i.i.d.", &e),
    }
}
