use pfcell::experiment::{run_experiment, ExperimentSpec, Method};
use pfcell::radio::{is_feasible, utility};
use pfcell::scenario::{Cluster, ScenarioConfig};
use pfcell::solver::{solve_joint, SolveParams};

const SMALL: &str = r#"
num_sbs = 3
num_users = 6
num_rbs = 4
backhaul_capacity_bps = [15e6, 25e6, 40e6]
rng_seed = 21

[iters]
outer_rounds = 4
"#;

#[test]
fn toml_scenario_solves_to_a_consistent_feasible_point() {
    let cfg = ScenarioConfig::from_toml_str(SMALL).unwrap();
    let cl = Cluster::from_config(&cfg).unwrap();
    let out = solve_joint(&cl, &SolveParams::from(&cfg)).unwrap();

    let r = cl.rates(&out.power);
    assert_eq!(out.utility, utility(&out.assignment, &r).utility);
    assert!(out.feasible);
    assert!(is_feasible(&out.assignment, &r, &cl.backhaul_mbps, &out.power).feasible);
    assert!(!out.rounds.is_empty() && out.rounds.len() <= 4);
    for (j, z) in cl.backhaul_mbps.iter().enumerate() {
        assert!(cl.report(&out.assignment, &out.power).load[j] <= *z);
        assert!(out.power.sum(j) <= out.power.p_max(j) * (1.0 + 1e-12));
    }
}

#[test]
fn campaign_writes_all_outputs() {
    let mut spec = ExperimentSpec::new(ScenarioConfig::from_toml_str(SMALL).unwrap());
    spec.sweep_mbps = vec![10.0, 30.0];
    spec.trials = 2;
    spec.methods = vec![Method::Greedy, Method::Proposed];
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&spec, dir.path()).unwrap();
    assert_eq!(out.summary.len(), 2 * 2 * 2);
    for file in ["summary.csv", "convergence.csv", "spec.json"] {
        assert!(dir.path().join(file).is_file(), "{file}");
    }
    let proposed: Vec<_> = out.summary.iter().filter(|r| r.method == Method::Proposed).collect();
    assert!(proposed.iter().all(|r| r.feasible && r.min_slack_mbps >= 0.0));
}
