use mcsim::circuitnet::{Evaluation, LoadClasses, Network, Policy, Route, Switchboard};
use mcsim::config::{parse_config, Model, Params};
use mcsim::dispenser::{linear_scan_select, Delegator, RateTree};
use mcsim::stats;
use mcsim::telecom::{self, Market, Plan, TelecomParams};
use mcsim::RandomStream;
use proptest::prelude::*;

proptest! {
    #[test]
    fn tree_tracks_updates(
        rates in prop::collection::vec(0.0f64..50.0, 1..200),
        updates in prop::collection::vec((0usize..200, 0.0f64..50.0), 0..100),
        q in 0.0f64..1.0,
    ) {
        let mut tree = RateTree::from_rates(&rates).unwrap();
        let mut plain = rates.clone();
        for (i, r) in updates {
            let i = i % plain.len();
            tree.update(i, r).unwrap();
            plain[i] = r;
        }
        let sum: f64 = plain.iter().sum();
        prop_assert!((tree.total() - sum).abs() <= 1e-9 * sum.max(1.0));
        if sum > 0.0 {
            prop_assert_eq!(tree.select_leaf(q).unwrap(), linear_scan_select(&plain, q).unwrap());
        }
    }

    #[test]
    fn switchboard_ledger_stays_consistent(ops in prop::collection::vec((0usize..5, 0usize..5, any::<bool>()), 1..300)) {
        let mut board = Switchboard::new(
            Network::uniform(5, 2).unwrap(),
            Policy::Alba(LoadClasses::new(vec![0.5]).unwrap()),
            Evaluation::Anticipatory,
        );
        let mut live = Vec::new();
        for (a, b, release) in ops {
            if release && !live.is_empty() {
                board.release_call(live.remove(0)).unwrap();
            } else if a != b {
                let (route, id) = board.place_call(a, b).unwrap();
                prop_assert_eq!(route == Route::Blocked, id.is_none());
                live.extend(id);
            }
            prop_assert!(board.ledger_consistent());
        }
    }
}

#[test]
fn time_driven_switch_time_is_exponential() {
    let plan = Plan::friends_and_family(0.10, 0.25).unwrap();
    let params = TelecomParams::new(plan, plan, 0.1).unwrap();
    // Customer 0 calls only customer 1, who is on the other provider.
    let market = Market::new(vec![1, 2], &[(0, 1, 100)]).unwrap();
    let r = market.rate(0, &params);
    assert!(r > 0.0 && market.rate(1, &params) == 0.0);
    let dt = 1e-3 / r;
    let mut times: Vec<f64> = (0..2000)
        .map(|seed| {
            let run = telecom::run_time_driven(&market, &params, dt, 50.0 / r, &mut RandomStream::new(seed, 0)).unwrap();
            assert_eq!(run.events.len(), 1);
            run.events[0].time
        })
        .collect();
    times.sort_by(f64::total_cmp);
    let d = stats::ks_one_sample(&times, |t| 1.0 - (-r * t).exp());
    assert!(d < stats::ks_one_sample_critical(times.len(), 0.001), "KS {d}");
}

#[test]
fn echoed_config_parses_to_the_same_config() {
    for (model, toml) in [
        (Model::Billiards, "n = 10\nhorizon = 3.0\nengine = \"timedriven\"\ndt = 0.01\n"),
        (Model::Deposition, "length = 30.0\nsectors = 6\nhorizon = 4.0\nengine = \"cautious\"\nworkers = 2\n"),
        (Model::Ising, "n = 8\ntemperature = 2.0\nupdate_count = 100\nvariant = \"uniformized\"\n"),
        (Model::Telecom, "n = 40\nhorizon = 2.0\nalpha = 0.3\n"),
        (Model::Circuitnet, "n = 6\ntrunks = 3\nrate = 0.5\nhorizon = 2.0\npolicy = \"alba\"\n"),
    ] {
        let dir = tempfile::tempdir().unwrap();
        let file = dir.path().join("c.toml");
        std::fs::write(&file, toml).unwrap();
        let first = parse_config(model, Some(&file), &Params::default()).unwrap();
        std::fs::write(&file, first.echo()).unwrap();
        let second = parse_config(model, Some(&file), &Params::default()).unwrap();
        assert_eq!(first, second, "{model}");
    }
}
