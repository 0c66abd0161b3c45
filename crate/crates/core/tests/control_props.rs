mod common;

use common::{demand, geometry, random_state, rng, Options};
use proptest::prelude::*;
use rand::Rng;
use tollway_core::control::{growth_bounds, reduction_at, toll_targets, TollController};
use tollway_core::geometry::{split_lanes, LaneSplit};
use tollway_core::node::TollNodeInput;
use tollway_core::sim::{dual_demands_supplies, step, step_dual, DualState, SplitController};

fn toll_input() -> impl Strategy<Value = TollNodeInput> {
    (
        0.1..20.0f64,
        prop::array::uniform2(0.0..20.0f64),
        prop::array::uniform2(0.0..20.0f64),
        prop::array::uniform2(0.0..1.0f64),
        0.0..1.0f64,
    )
        .prop_map(|(rd, fd, fs, pf, pr)| TollNodeInput {
            alpha: [0.5, 0.5],
            ramp_demand: rd,
            upstream_demand: fd,
            supply: fs,
            upstream_priority: pf,
            ramp_priority: pr,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn grid_never_beats_optimum(input in toll_input()) {
        let b = growth_bounds(&input);
        let best = (0..=1000)
            .map(|k| reduction_at(&input, k as f64 / 1000.0))
            .fold(0.0, f64::max);
        prop_assert!(best <= b.lambda_star + 1e-6);
        for a in b.alpha_set {
            prop_assert!((reduction_at(&input, a) - b.lambda_star).abs() < 1e-6);
        }
        prop_assert!(b.r_min <= b.r_max + 1e-12);
    }

    #[test]
    fn group_reduction_is_nonincreasing(input in toll_input(), a in 0.0..1.0f64, da in 0.0..1.0f64) {
        let hi = (a + da).min(1.0);
        for g in 0..2 {
            prop_assert!(input.group_reduction(g, hi) <= input.group_reduction(g, a) + 1e-12);
        }
    }

    #[test]
    fn toll_lane_stays_in_target_zone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let opts = Options { free_first_link: true, ..Options::default() };
        let g = geometry(&mut r, &opts);
        let dual = split_lanes(&g, LaneSplit::new(r.gen_range(1..3), r.gen_range(1..4)).unwrap()).unwrap();
        let Ok(targets) = toll_targets(&dual) else { return Ok(()) };
        let mut s = DualState::from_single(&random_state(&mut r, &g), &dual);
        for i in 1..dual.links().len() {
            s.vehicles[0][i] = r.gen_range(0.0..=targets.n_e[i]);
        }
        let splits: Vec<f64> = (0..dual.links().len()).map(|_| r.gen_range(0.0..=1.0)).collect();
        let cond = dual_demands_supplies(&s, &dual);
        let d = demand(&mut r, &g, 1.0);
        let (next, flows) = step_dual(&s, &dual, &d, &splits).unwrap();
        let admissible = targets.entrances.iter().all(|&i| {
            flows.on_ramp[0][i] + cond.outflow_demand[0][i - 1]
                <= targets.f_e[i] / dual.link(i).split_through() + 1e-12
        });
        if admissible {
            for i in 1..dual.links().len() {
                prop_assert!(next.vehicles[0][i] <= targets.n_e[i] + 1e-9);
            }
        }
    }

    #[test]
    fn controller_keeps_toll_lane_in_target_zone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let opts = Options { free_first_link: true, off_ramps: false, ..Options::default() };
        let g = geometry(&mut r, &opts);
        let dual = split_lanes(&g, LaneSplit::new(1, r.gen_range(1..4)).unwrap()).unwrap();
        let mut ctl = TollController::new(&dual).unwrap();
        let targets = ctl.targets().unwrap().clone();
        let mut s = DualState::from_single(&random_state(&mut r, &g), &dual);
        for i in 1..dual.links().len() {
            s.vehicles[0][i] = r.gen_range(0.0..=targets.n_e[i]);
        }
        let d = demand(&mut r, &g, 1.0);
        let splits = ctl.request(&s, &dual);
        // Only when the general lanes can absorb every entrance.
        if ctl.last.iter().any(|c| c.bounds.r_min > 1e-12) {
            return Ok(());
        }
        let (next, _) = step_dual(&s, &dual, &d, &splits).unwrap();
        let total: f64 = (1..dual.links().len()).map(|i| next.vehicles[0][i]).sum();
        prop_assert!(total <= targets.budgets.iter().sum::<f64>() + 1e-6);
    }

    #[test]
    fn step_is_monotone(seed in any::<u64>()) {
        let mut r = rng(seed);
        let g = geometry(&mut r, &Options::default());
        let lo = random_state(&mut r, &g);
        let mut hi = lo.clone();
        for i in 0..g.links().len() {
            let room = if i == 0 { 10.0 } else { g.link(i).diagram.max_vehicles - lo.vehicles[i] };
            hi.vehicles[i] += r.gen_range(0.0..=room);
            if g.link(i).ramp.has_on_ramp() {
                hi.queues[i] += r.gen_range(0.0..5.0);
            }
        }
        let d = demand(&mut r, &g, 1.0);
        let (a, _) = step(&lo, &g, &d).unwrap();
        let (b, _) = step(&hi, &g, &d).unwrap();
        for i in 1..g.links().len() {
            prop_assert!(a.vehicles[i] <= b.vehicles[i] + 1e-9);
        }
    }
}
