//! Generated-case properties, 256 cases each.

mod common;

use common::props;

const CASES: u32 = 256;

macro_rules! suite {
    ($name:ident) => {
        #[test]
        fn $name() {
            if let Err(failure) = props::$name(CASES) {
                panic!("{failure}");
            }
        }
    };
}

suite!(template_round_trip);
suite!(state_round_trip);
suite!(plan_round_trip);
suite!(classify_serialized_plan);
suite!(classify_total);
suite!(event_log_replay);
suite!(unchanged_snapshot_quiet);
suite!(tick_matches_oracle);
suite!(subset_monotonicity);
suite!(no_relevance_safety);
suite!(cost_linearity);

#[test]
fn oracle_fixed_cases() {
    let template = homegoal::home::builtin_home(homegoal::home::BuiltinHomeId::H3);
    let seven = common::oracle::seven_am_case();
    assert_eq!(common::oracle::oracle(&seven), vec![vec![], vec![1], vec![], vec![]]);
    common::oracle::check(&template, &seven).unwrap();
    let rain = common::oracle::rain_case();
    assert_eq!(common::oracle::oracle(&rain), vec![vec![], vec![1], vec![]]);
    common::oracle::check(&template, &rain).unwrap();
}
