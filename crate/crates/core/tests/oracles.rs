use dampnet::control::{distribution_params, optimal_inflow_profile, InformationPolicy, SplitRule};
use dampnet::damping::DampingShape;
use dampnet::demand::{DemandPath, JacobiDemandSpec};
use dampnet::experiment::{objective_estimate, run_monte_carlo, run_single};
use dampnet::network::{ArcSpec, NodeKind, NodeSpec, TreeNetwork};
use dampnet::pde::{Series, SplitProvider};
use dampnet::scenario::{reference_scenario, ScenarioFile, UpdatesSection};
use dampnet::timefuncs::{SineTerm, TimeFunction};
use proptest::prelude::*;

fn positive_function() -> impl Strategy<Value = TimeFunction> {
    (
        2.0..20.0f64,
        prop::collection::vec((0.0..0.6f64, 0.5..4.0f64, -3.0..3.0f64), 0..3),
    )
        .prop_map(|(c, terms)| {
            let n = terms.len().max(1) as f64;
            TimeFunction::new(
                c,
                terms
                    .into_iter()
                    .map(|(a, w, p)| SineTerm::new(a * c / n, w, p))
                    .collect(),
            )
        })
}

fn rk4<F: Fn(f64, f64) -> f64>(f: F, t0: f64, y0: f64, t1: f64, steps: usize) -> f64 {
    let h = (t1 - t0) / steps as f64;
    let (mut t, mut y) = (t0, y0);
    for _ in 0..steps {
        let k1 = f(t, y);
        let k2 = f(t + h / 2.0, y + h / 2.0 * k1);
        let k3 = f(t + h / 2.0, y + h / 2.0 * k2);
        let k4 = f(t + h, y + h * k3);
        y += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        t += h;
    }
    y
}

proptest! {
    #[test]
    fn lambda_round_trip(f in positive_function(), t0 in -2.0..3.0f64, target in 0.0..20.0f64) {
        let t1 = f.advance_by_integral(t0, target).unwrap();
        prop_assert!((f.integral(t0, t1).unwrap() - target).abs() <= 1e-10);
        let back = f.retreat_by_integral(t1, target).unwrap();
        prop_assert!((back - t0).abs() <= 1e-10 * (1.0 + t0.abs()));
    }

    #[test]
    fn advance_is_monotone(f in positive_function(), t0 in 0.0..2.0f64, a in 0.0..5.0f64, b in 0.0..5.0f64) {
        prop_assume!(a < b);
        prop_assert!(f.advance_by_integral(t0, a).unwrap() < f.advance_by_integral(t0, b).unwrap());
    }

    #[test]
    fn integral_is_additive(f in positive_function(), a in -3.0..3.0f64, b in -3.0..3.0f64, c in -3.0..3.0f64) {
        let (a, b, c) = {
            let mut v = [a, b, c];
            v.sort_by(f64::total_cmp);
            (v[0], v[1], v[2])
        };
        let lhs = f.integral(a, b).unwrap() + f.integral(b, c).unwrap();
        prop_assert!((lhs - f.integral(a, c).unwrap()).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn damping_round_trip(degree in 1u32..=4, mass in 0.0..0.5f64, z in 0.01..1.0f64) {
        let shape = DampingShape::reference(degree).unwrap();
        if let Ok(up) = shape.backward_by_mass(mass, z) {
            prop_assert!(up >= z);
            let down = shape.forward_by_mass(mass, up).unwrap();
            prop_assert!((down - z).abs() <= 1e-10 * z.max(1e-3));
        }
        let down = shape.forward_by_mass(mass, z).unwrap();
        prop_assert!(down <= z && down >= 0.0);
    }

    #[test]
    fn backward_damping_is_monotone(degree in 1u32..=4, mass in 0.0..0.01f64, z in 0.01..0.5f64, dz in 1e-4..0.1f64) {
        let shape = DampingShape::reference(degree).unwrap();
        let lo = shape.backward_by_mass(mass, z);
        let hi = shape.backward_by_mass(mass, z + dz);
        if let (Ok(lo), Ok(hi)) = (lo, hi) {
            prop_assert!(lo < hi);
        }
    }

    #[test]
    fn jacobi_stays_in_unit_interval(
        kappa in 0.0..5.0f64,
        sigma in 0.0..3.0f64,
        d0 in 0.0..=1.0f64,
        level in 0.0..=1.0f64,
        seed in any::<u64>(),
    ) {
        let spec = JacobiDemandSpec {
            node: "v".into(),
            kappa,
            theta: TimeFunction::constant(level),
            sigma,
            d0,
        };
        let path = spec.simulate(0.0, 0.5, 1e-3, seed).unwrap();
        prop_assert!(path.values.iter().all(|d| (0.0..=1.0).contains(d)));
    }

    #[test]
    fn random_trees_validate(parents in prop::collection::vec(any::<prop::sample::Index>(), 1..12)) {
        let (tree, leaves) = random_tree(&parents);
        let net = tree.into_validated().unwrap();
        prop_assert_eq!(net.root_to_leaf_paths().len(), leaves);
        prop_assert_eq!(net.demand_nodes().len(), leaves);
    }

    #[test]
    fn shares_sum_to_one(
        parents in prop::collection::vec(any::<prop::sample::Index>(), 1..8),
        levels in prop::collection::vec(0.05..0.95f64, 8),
        t in 0.0..1.0f64,
    ) {
        let (tree, _) = random_tree(&parents);
        let net = tree.into_validated().unwrap().with_damping(DampingShape::reference(1).unwrap());
        let targets = |slot: usize, _t: f64| levels[slot % levels.len()];
        for j in net.junctions() {
            let shares = distribution_params(&net, j, t, &targets).unwrap();
            let sum: f64 = shares.iter().map(|s| s.1).sum();
            prop_assert!((sum - 1.0).abs() <= 1e-12);
            prop_assert!(shares.iter().all(|s| (0.0..=1.0).contains(&s.1)));
        }
    }
}

/// Node 0 is the source, node 1 its only child; node `i ≥ 2` hangs below a
/// node chosen among `1..i`. Nodes with children are junctions, the rest
/// demand nodes.
fn random_tree(parents: &[prop::sample::Index]) -> (TreeNetwork, usize) {
    let n = parents.len() + 2;
    let mut parent = vec![0usize; n];
    for i in 2..n {
        parent[i] = 1 + parents[i - 2].index(i - 1);
    }
    let mut has_child = vec![false; n];
    for &p in &parent[1..] {
        has_child[p] = true;
    }
    let nodes = (0..n)
        .map(|i| {
            let kind = match i {
                0 => NodeKind::Source,
                _ if has_child[i] => NodeKind::Junction,
                _ => NodeKind::Demand,
            };
            NodeSpec::new(format!("v{i}"), kind)
        })
        .collect();
    let arcs = (1..n)
        .map(|i| {
            ArcSpec::new(
                format!("a{i}"),
                format!("v{}", parent[i]),
                format!("v{i}"),
                TimeFunction::constant(2.0 + i as f64),
            )
            .with_damping(TimeFunction::constant(0.5), DampingShape::None)
        })
        .collect();
    let leaves = (1..n).filter(|&i| !has_child[i]).count();
    (TreeNetwork::new(nodes, arcs), leaves)
}

#[test]
fn binary_tree_has_four_paths() {
    let nodes = vec![
        NodeSpec::new("s", NodeKind::Source),
        NodeSpec::new("j0", NodeKind::Junction),
        NodeSpec::new("j1", NodeKind::Junction),
        NodeSpec::new("j2", NodeKind::Junction),
        NodeSpec::new("d0", NodeKind::Demand),
        NodeSpec::new("d1", NodeKind::Demand),
        NodeSpec::new("d2", NodeKind::Demand),
        NodeSpec::new("d3", NodeKind::Demand),
    ];
    let speed = TimeFunction::constant(3.0);
    let arcs = [
        ("r", "s", "j0"),
        ("a", "j0", "j1"),
        ("b", "j0", "j2"),
        ("c", "j1", "d0"),
        ("d", "j1", "d1"),
        ("e", "j2", "d2"),
        ("f", "j2", "d3"),
    ]
    .iter()
    .map(|(id, t, h)| ArcSpec::new(*id, *t, *h, speed.clone()))
    .collect();
    let net = TreeNetwork::new(nodes, arcs).into_validated().unwrap();
    let paths: Vec<Vec<&str>> = net
        .root_to_leaf_paths()
        .iter()
        .map(|p| p.iter().map(|&k| net.arc(k).id.as_str()).collect())
        .collect();
    assert_eq!(
        paths,
        vec![
            vec!["r", "a", "c"],
            vec!["r", "a", "d"],
            vec!["r", "b", "e"],
            vec!["r", "b", "f"]
        ]
    );
}

#[test]
fn conditional_mean_matches_rk4() {
    for spec in reference_scenario().demands {
        for (t_cond, d_cond) in [(0.0, spec.d0), (0.7, 0.05), (1.3, 0.99)] {
            for dt in [0.1, 0.5, 1.0, 2.0] {
                let t = t_cond + dt;
                let exact = spec.conditional_mean(t_cond, d_cond, t).unwrap();
                let oracle = rk4(
                    |s, m| spec.kappa * (spec.theta.eval(s) - m),
                    t_cond,
                    d_cond,
                    t,
                    4000,
                );
                assert!(
                    (exact - oracle).abs() < 1e-11,
                    "{} at {t}: {exact} vs {oracle}",
                    spec.node
                );
            }
        }
    }
}

fn short_reference() -> ScenarioFile {
    let mut file = reference_scenario();
    file.horizon.t_end = 0.6;
    file.updates = UpdatesSection {
        times: None,
        count: Some(3),
    };
    file.experiment.variants.truncate(3);
    file
}

#[test]
fn runs_are_deterministic() {
    let scenario = short_reference().build().unwrap();
    let a = run_single(&scenario, 5).unwrap();
    let b = run_single(&scenario, 5).unwrap();
    assert_eq!(a, b);
    let c = run_single(&scenario, 6).unwrap();
    assert_ne!(a.demand[0].values, c.demand[0].values);
}

#[test]
fn ensemble_does_not_depend_on_worker_count() {
    let mut file = short_reference();
    file.experiment.monte_carlo_runs = 70;
    file.experiment.workers = Some(1);
    let one = run_monte_carlo(&file.build().unwrap()).unwrap();
    file.experiment.workers = Some(3);
    let three = run_monte_carlo(&file.build().unwrap()).unwrap();
    assert_eq!(one, three);
    assert_eq!(one.runs, 70);
}

#[test]
fn deterministic_demand_has_zero_standard_error() {
    let mut file = short_reference();
    for d in &mut file.demands {
        d.sigma = 0.0;
    }
    file.experiment.monte_carlo_runs = 2;
    let scenario = file.build().unwrap();
    let ens = run_monte_carlo(&scenario).unwrap();
    let single = run_single(&scenario, 0).unwrap();
    for (v, s) in ens.variants.iter().zip(&single.variants) {
        assert!(v.inflow.se.iter().all(|&x| x == 0.0));
        assert_eq!(v.inflow.mean, s.inflow.values);
        for m in &v.supply {
            assert!(m.se.iter().all(|&x| x == 0.0));
        }
    }
    assert!(ens.demand.iter().all(|m| m.se.iter().all(|&x| x == 0.0)));
}

#[test]
fn ensemble_demand_mean_matches_conditional_mean() {
    let mut file = short_reference();
    file.experiment.monte_carlo_runs = 400;
    file.experiment.variants.truncate(1);
    let scenario = file.build().unwrap();
    let ens = run_monte_carlo(&scenario).unwrap();
    for (m, spec) in ens.demand.iter().zip(&scenario.demands) {
        for (i, &t) in ens.demand_times.iter().enumerate().step_by(100).skip(1) {
            let exact = spec.conditional_mean(0.0, spec.d0, t).unwrap();
            assert!(
                (m.mean[i] - exact).abs() <= 3.0 * m.se[i],
                "{} at t={t}: {} vs {exact} (se {})",
                spec.node,
                m.mean[i],
                m.se[i]
            );
        }
    }
}

#[test]
fn objective_examples() {
    let demand = DemandPath {
        t0: 0.0,
        dt: 0.01,
        values: (0..=200)
            .map(|j| 0.5 + 0.2 * (j as f64 * 0.03).sin())
            .collect(),
    };
    let times = demand.times();
    let exact = Series::new(times.clone(), demand.values.clone());
    let zero = objective_estimate(&demand, &exact, &[]).unwrap();
    assert_eq!(zero.total, 0.0);

    let offset = Series::new(times, demand.values.iter().map(|d| d + 0.1).collect());
    let split = objective_estimate(&demand, &offset, &[0.5, 1.25]).unwrap();
    assert!((split.total - 0.01 * 2.0).abs() < 1e-12);
    assert_eq!(split.windows.len(), 3);
    let sum: f64 = split.windows.iter().map(|w| w.value).sum();
    assert!((sum - split.total).abs() < 1e-12);
    assert!((split.windows[1].value - 0.01 * 0.75).abs() < 1e-12);
}

#[test]
fn update_matching_prior_keeps_profile_continuous() {
    let scenario = {
        let mut file = reference_scenario();
        file.horizon.t_end = 1.0;
        file.updates = UpdatesSection {
            times: Some(vec![0.0, 0.3]),
            count: None,
        };
        file.build().unwrap()
    };
    let specs = &scenario.demands;
    let prior: Vec<f64> = specs
        .iter()
        .map(|s| s.conditional_mean(0.0, s.d0, 0.3).unwrap())
        .collect();
    let initial: Vec<f64> = specs.iter().map(|s| s.d0).collect();
    let policy = InformationPolicy::new(vec![0.0, 0.3], vec![initial.clone(), prior]).unwrap();
    let single = InformationPolicy::single(0.0, initial).unwrap();
    let grid = scenario.injection_grid().unwrap();
    for variant in &scenario.variants {
        let net = scenario.variant_network(variant);
        let updated = optimal_inflow_profile(&net, specs, &policy, &grid).unwrap();
        let plain = optimal_inflow_profile(&net, specs, &single, &grid).unwrap();
        for (a, b) in updated.values.iter().zip(&plain.values) {
            assert!(
                (a - b).abs() <= 1e-12 * b.max(1.0),
                "{}: {a} vs {b}",
                variant.label
            );
        }
        let rule = SplitRule::new(&net, specs, &policy);
        let j = net.junctions()[0];
        for &k in net.out_arcs(j) {
            let s = rule.share(j, k, 0.5).unwrap();
            assert!((0.0..=1.0).contains(&s));
        }
    }
}
