//! End-to-end scenarios across modules: stacked learners on smooth and MDP
//! adversaries, statistical checks of the query process, and exact oracles
//! cross-validated against Monte Carlo.

use std::sync::{Arc, Mutex};

use mentorcore::budget::BudgetedActive;
use mentorcore::env::{
    cliff_line, mentor_rollout, CliffTarget, MdpAdversary, MdpInstance, MuFromMdp, Region, RegionPlan,
    SmoothSequenceAdversary, TinyMdp, TinyMuInstance,
};
use mentorcore::experts::{realizable_smooth_learner, ExpWeights, Policy, PolicyClass};
use mentorcore::metrics::{
    estimate_regret_mdp, estimate_regret_plus, estimate_regret_sa, exact_regret_oracle, packing_number_bruteforce,
    run_trials, summarize, Evaluation, RegretKind,
};
use mentorcore::protocol::{is_query_agnostic_at, UniformRandom};
use mentorcore::rng::{aux_stream, trial_seed};
use mentorcore::safe::{default_params, full_stack};
use mentorcore::{run_protocol, ActionId, ActiveAlgorithm, Adversary, History, State};
use rand::Rng;

fn boxed<A: ActiveAlgorithm + 'static>(a: A) -> Box<dyn ActiveAlgorithm> {
    Box::new(a)
}

fn uniform_thresholds(theta: f64) -> Box<dyn Adversary> {
    Box::new(SmoothSequenceAdversary::uniform(1, Policy::threshold(theta), 2))
}

#[test]
fn stacked_learners_are_query_agnostic() {
    let mut rng = aux_stream(11);
    let horizon = 256;
    let mut checked = 0;
    for pair in 0..1000u64 {
        let prefix = rng.gen_range(0..64);
        let mut alg: Box<dyn ActiveAlgorithm> = match pair % 3 {
            0 => boxed(realizable_smooth_learner(&PolicyClass::Thresholds, horizon).unwrap()),
            1 => {
                let base = boxed(realizable_smooth_learner(&PolicyClass::Thresholds, 64).unwrap());
                boxed(BudgetedActive::new(base, 64.0, horizon).unwrap())
            }
            _ => boxed(full_stack(&PolicyClass::Thresholds, horizon, 1).unwrap()),
        };
        let seed = trial_seed(11, pair);
        if prefix > 0 {
            run_protocol(alg.as_mut(), uniform_thresholds(0.4).as_mut(), prefix, seed).unwrap();
        }
        if pair % 3 == 2 {
            // the safe wrapper's own output depends on the cache; agnosticism is
            // a property of the base it drives
            continue;
        }
        let probe = State::scalar(rng.gen());
        assert!(is_query_agnostic_at(alg.as_ref(), &probe, seed).unwrap(), "pair {pair}");
        checked += 1;
    }
    assert!(checked > 600);
}

#[test]
fn query_decisions_are_independent_of_states() {
    // 2 x 4 contingency table of (queried, state quartile)
    let horizon = 10_000;
    let base = boxed(realizable_smooth_learner(&PolicyClass::Thresholds, 2500).unwrap());
    let mut alg = BudgetedActive::new(base, 2500.0, horizon).unwrap();
    let trace = run_protocol(&mut alg, uniform_thresholds(0.5).as_mut(), horizon, 7).unwrap();
    let mut table = [[0f64; 4]; 2];
    for step in trace.history.steps() {
        let bin = ((step.state.coords()[0] * 4.0) as usize).min(3);
        table[usize::from(step.queried())][bin] += 1.0;
    }
    let n = horizon as f64;
    let mut chi2 = 0.0;
    for (r, row) in table.iter().enumerate() {
        for c in 0..4 {
            let expected = row.iter().sum::<f64>() * (table[0][c] + table[1][c]) / n;
            chi2 += (table[r][c] - expected).powi(2) / expected;
        }
    }
    // 0.999 quantile of chi-square with 3 degrees of freedom
    assert!(chi2 < 16.27, "chi2 = {chi2}");
    let rate = trace.query_count() as f64 / n;
    assert!((rate - 0.25).abs() < 4.0 * (0.25f64 * 0.75 / n).sqrt());
}

#[test]
fn budgeted_regret_inherits_base_regret() {
    let (horizon, k, trials) = (4096usize, 256usize, 200);
    let adv = || Ok(uniform_thresholds(0.37));
    let base = || Ok(boxed(realizable_smooth_learner(&PolicyClass::Thresholds, k)?));
    let direct = estimate_regret_sa(&base, &adv, &PolicyClass::Thresholds, k, trials, 3).unwrap();
    let wrapped = || Ok(boxed(BudgetedActive::new(base()?, k as f64, horizon)?));
    let inherited = estimate_regret_sa(&wrapped, &adv, &PolicyClass::Thresholds, horizon, trials, 4).unwrap();
    let scale = horizon as f64 / k as f64;
    let slack = scale * direct.ci_halfwidth + inherited.ci_halfwidth;
    assert!(
        inherited.estimate <= scale * direct.estimate + slack,
        "{} > {} * {} + {slack}",
        inherited.estimate,
        scale,
        direct.estimate
    );
}

#[test]
fn realizable_smooth_learner_loss_is_logarithmic() {
    let e = std::f64::consts::E;
    let constant = e / (e - 1.0) * ((41.0f64 * 1024.0).ln() + 1.0);
    assert!((constant - 18.42).abs() < 0.01);
    let alg = || Ok(boxed(realizable_smooth_learner(&PolicyClass::Thresholds, 1024)?));
    let adv = || Ok(uniform_thresholds(0.37));
    let samples = run_trials(&alg, &adv, &Evaluation::default(), 1024, 200, 9).unwrap();
    let mean = samples.iter().map(|s| s.loss).sum::<f64>() / 200.0;
    assert!(mean <= constant * (1024f64.ln() + 1.0), "mean loss {mean}");
}

#[test]
fn margin_adversary_stays_within_cover_bound() {
    // states never fall between two cover thresholds adjacent to the mentor's
    let horizon = 1024;
    let theta = 0.5;
    let margin = 2.0 / horizon as f64;
    let region = |lo: f64, hi: f64| Region { lo: vec![lo], hi: vec![hi] };
    let plan = RegionPlan::Schedule(vec![region(0.0, theta - margin), region(theta + margin, 1.0)]);
    let mut adv = SmoothSequenceAdversary::new(0.45, plan, Policy::threshold(theta), 2).unwrap();
    let mut alg = realizable_smooth_learner(&PolicyClass::Thresholds, horizon).unwrap();
    run_protocol(&mut alg, &mut adv, horizon, 5).unwrap();
    let e = std::f64::consts::E;
    let bound = e / (e - 1.0) * (alg.policies().len() as f64).ln();
    assert!(alg.cumulative_expected_loss() <= bound + 1e-9);
}

#[test]
fn cliff_cache_is_bounded_by_packing() {
    let horizon = 4096;
    let line = cliff_line(1, 2.0, 0.1, horizon).unwrap();
    let dead = line.dead();
    let cliff: Arc<dyn MdpInstance> = Arc::new(line);
    let (_, eps) = default_params(horizon, 1).unwrap();
    assert_eq!(eps, 1.0 / 64.0);
    for seed in 0..5 {
        let mut alg = full_stack(&PolicyClass::Thresholds, horizon, 1).unwrap();
        let trace = run_protocol(&mut alg, &mut MdpAdversary::new(cliff.clone()), horizon, seed).unwrap();
        // the ball bounding the visited live states
        let xs: Vec<f64> =
            trace.history.steps().iter().filter(|s| s.state != dead).map(|s| s.state.coords()[0]).collect();
        let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        // in one dimension the greedy packing of a fine sorted grid is maximal
        let steps = ((hi - lo) / (eps / 16.0)).ceil() as usize;
        let grid: Vec<Vec<f64>> = (0..=steps).map(|i| vec![lo + (hi - lo) * i as f64 / steps.max(1) as f64]).collect();
        let packing = packing_number_bruteforce(&grid, eps).count;
        // matched entries are an eps-packing per action; the rest are charged
        // to the base's wrong proposals
        let matched = alg.cache().entries().iter().filter(|e| e.matched_proposal).count();
        let wrong_proposals =
            alg.log().iter().zip(&trace.mentor_actions).filter(|(r, m)| r.sim_action != **m).count();
        assert!(matched <= 2 * packing, "{matched} matched entries vs 2 * {packing}");
        assert!(alg.cache().len() - matched <= wrong_proposals);
    }
}

#[test]
fn cliff_mentor_never_dies_over_many_rollouts() {
    let cliff = cliff_line(1, 2.0, 0.1, 1000).unwrap();
    let dead = cliff.dead();
    let deaths = (0..1000).filter(|&seed| mentor_rollout(&cliff, 1000, seed).unwrap().contains(&dead)).count();
    assert_eq!(deaths, 0);
}

fn max_bin_density(draws: impl Iterator<Item = f64>, bins: usize) -> (f64, usize) {
    let mut counts = vec![0usize; bins];
    let mut n = 0;
    for x in draws {
        counts[((x * bins as f64) as usize).min(bins - 1)] += 1;
        n += 1;
    }
    let top = *counts.iter().max().unwrap() as f64;
    (top * bins as f64 / n as f64, n)
}

#[test]
fn narrow_region_density_is_bounded() {
    let sigma = 0.25;
    let plan = RegionPlan::Fixed(Region { lo: vec![0.0], hi: vec![0.25] });
    let mut adv = SmoothSequenceAdversary::new(sigma, plan, Policy::threshold(0.1), 2).unwrap();
    let mut rng = aux_stream(3);
    let history = History::new();
    let draws: Vec<f64> = (0..100_000).map(|_| adv.next(&history, &mut rng).unwrap().0.coords()[0]).collect();
    let (density, n) = max_bin_density(draws.into_iter(), 20);
    assert!(density <= 1.0 / sigma + 4.0 * (20.0 / n as f64).sqrt(), "density {density}");
}

#[test]
fn cliff_transitions_are_smooth() {
    let sigma = 0.1;
    let cliff = cliff_line(1, 2.0, sigma, 100).unwrap();
    let mut rng = aux_stream(4);
    for x in [0.2, 0.5, 0.9] {
        let s = State::scalar(x);
        for a in 0..2 {
            let draws: Vec<f64> = (0..50_000)
                .map(|_| cliff.sample_transition(&s, ActionId(a), &mut rng))
                .filter(|n| *n != cliff.dead())
                .map(|n| n.coords()[0])
                .collect();
            let (density, n) = max_bin_density(draws.into_iter(), 20);
            assert!(density <= 1.0 / sigma + 4.0 * (20.0 / n as f64).sqrt(), "x={x} a={a} density {density}");
        }
    }
}

fn tiny_algorithm(kind: usize, rng: &mut impl Rng, states: usize, actions: usize, horizon: usize) -> Box<dyn ActiveAlgorithm> {
    let policies: Vec<Policy> = (0..3)
        .map(|_| Policy::lookup((0..states).map(|s| (vec![s as f64], ActionId(rng.gen_range(0..actions)))).collect()))
        .collect();
    match kind {
        0 => boxed(UniformRandom::new(actions)),
        1 => boxed(ExpWeights::new(policies, actions, 1.0).unwrap()),
        _ => {
            let base = boxed(ExpWeights::new(policies, actions, 1.0).unwrap());
            boxed(BudgetedActive::new(base, rng.gen_range(0.5..=horizon as f64), horizon).unwrap())
        }
    }
}

fn agrees(exact: f64, estimate: f64, ci_halfwidth: f64) -> bool {
    let se = ci_halfwidth / 1.96;
    (exact - estimate).abs() <= (4.0 * se).max(1e-9)
}

#[test]
fn exact_oracle_matches_monte_carlo() {
    let mut rng = aux_stream(21);
    let trials = 100_000;
    for case in 0..20 {
        let states = rng.gen_range(1..=3);
        let actions = rng.gen_range(2..=3);
        let horizon = rng.gen_range(1..=4);
        let kind = case % 3;
        let template = tiny_algorithm(kind, &mut rng, states, actions, horizon);
        let shared = Mutex::new(template.box_clone());
        if case % 2 == 0 {
            let inst = TinyMuInstance::random(&mut rng, states, actions, horizon).unwrap();
            let eval = Evaluation { mu: Some(&inst.mu), ..Default::default() };
            let exact = exact_regret_oracle(&inst, template.as_ref(), horizon, &eval).unwrap();
            let alg = || Ok(shared.lock().unwrap().box_clone());
            let adv = || Ok(Box::new(inst.clone()) as Box<dyn Adversary>);
            let samples = run_trials(&alg, &adv, &eval, horizon, trials, case as u64).unwrap();
            let plus = summarize(RegretKind::Plus, &samples).unwrap();
            assert!(agrees(exact.plus.unwrap(), plus.estimate, plus.ci_halfwidth), "case {case}: {exact:?} vs {plus:?}");
            let queries = summarize(RegretKind::Queries, &samples).unwrap();
            assert!(agrees(exact.expected_queries, queries.estimate, queries.ci_halfwidth), "case {case} queries");
        } else {
            let mdp: Arc<dyn MdpInstance> = Arc::new(TinyMdp::random(&mut rng, states, actions).unwrap());
            let eval = Evaluation { mdp: Some(mdp.as_ref()), ..Default::default() };
            let exact = exact_regret_oracle(&MdpAdversary::new(mdp.clone()), template.as_ref(), horizon, &eval).unwrap();
            let alg = || Ok(shared.lock().unwrap().box_clone());
            let report = estimate_regret_mdp(&alg, mdp.clone(), horizon, trials, case as u64).unwrap();
            assert!(agrees(exact.mdp.unwrap(), report.estimate, report.ci_halfwidth), "case {case}: {exact:?} vs {report:?}");
        }
    }
}

#[test]
fn cliff_plus_regret_decreases_with_horizon() {
    let mut previous = f64::INFINITY;
    for horizon in [256usize, 1024, 4096, 16384] {
        let cliff = Arc::new(cliff_line(1, 2.0, 0.1, horizon).unwrap());
        let mdp: Arc<dyn MdpInstance> = cliff.clone();
        let mu = MuFromMdp::constant(mdp.clone(), cliff.target(CliffTarget::Band), horizon).unwrap();
        let alg = || Ok(boxed(full_stack(&PolicyClass::Thresholds, horizon, 1)?));
        let adv = || Ok(Box::new(MdpAdversary::new(mdp.clone())) as Box<dyn Adversary>);
        let r = estimate_regret_plus(&alg, &adv, &mu, horizon, 200, 17).unwrap();
        assert!(r.estimate < previous, "T={horizon}: {} !< {previous}", r.estimate);
        previous = r.estimate;
    }
}

#[test]
fn mentor_and_action_independent_mu_give_zero() {
    let mut rng = aux_stream(5);
    let inst = TinyMuInstance::random(&mut rng, 3, 2, 4).unwrap();
    let mentor = inst.mu.clone();
    let copy = || Ok(boxed(mentorcore::protocol::MentorCopy::new(2)));
    let adv = || Ok(Box::new(inst.clone()) as Box<dyn Adversary>);
    let r = estimate_regret_plus(&copy, &adv, &mentor, 4, 100, 1).unwrap();
    assert_eq!(r.estimate, 0.0);

    let cliff = Arc::new(cliff_line(1, 2.0, 0.1, 64).unwrap());
    let mdp: Arc<dyn MdpInstance> = cliff.clone();
    let everything = MuFromMdp::constant(mdp.clone(), mentorcore::env::TestSet::All, 64).unwrap();
    let random = || Ok(boxed(UniformRandom::new(2)));
    let adv = || Ok(Box::new(MdpAdversary::new(mdp.clone())) as Box<dyn Adversary>);
    let r = estimate_regret_plus(&random, &adv, &everything, 64, 50, 2).unwrap();
    assert_eq!(r.estimate, 0.0);
}
