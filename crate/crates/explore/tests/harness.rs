use max_explore::config::{AgentKind, RunConfig};
use max_explore::metrics::NullSink;
use max_explore::run::run_exploration;
use max_explore::sweep::run_sweep;

fn short_chain(agent: AgentKind) -> RunConfig {
    let mut cfg = RunConfig::chain(10, false);
    cfg.agent = agent;
    cfg.episodes = 6;
    cfg
}

#[test]
fn repeated_runs_are_identical() {
    for agent in [AgentKind::Max, AgentKind::Eb, AgentKind::Boot, AgentKind::Random] {
        let cfg = short_chain(agent);
        let a = run_exploration(&cfg, &mut NullSink).unwrap();
        let b = run_exploration(&cfg, &mut NullSink).unwrap();
        assert_eq!(a, b, "{}", agent.name());
    }
}

#[test]
fn sweep_matches_sequential_runs() {
    let cfgs: Vec<RunConfig> = (0..3).map(|seed| RunConfig { seed, ..short_chain(AgentKind::Eb) }).collect();
    let parallel = run_sweep(&cfgs, 3).unwrap();
    for (cfg, outcome) in cfgs.iter().zip(&parallel.outcomes) {
        let alone = run_exploration(cfg, &mut NullSink).unwrap();
        assert_eq!(outcome.as_ref().unwrap(), &alone);
    }
    let agg = parallel.aggregate("chain-L10-eb").unwrap();
    assert_eq!(agg.rows.len(), 6);
    assert!(agg.rows.iter().all(|r| r.p25 <= r.median && r.median <= r.p75));
}

#[test]
fn max_explores_a_short_chain_completely() {
    let mut cfg = short_chain(AgentKind::Max);
    cfg.episodes = 20;
    cfg.stop_when_explored = true;
    let record = run_exploration(&cfg, &mut NullSink).unwrap();
    assert_eq!(record.summary.final_fraction, 1.0);
    assert!(record.summary.episodes_to_full.is_some());
}

#[test]
fn explored_fraction_never_decreases() {
    let record = run_exploration(&short_chain(AgentKind::Boot), &mut NullSink).unwrap();
    for w in record.rows.windows(2) {
        assert!(w[0].explored_fraction <= w[1].explored_fraction);
    }
}
