use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tollway::{bundled, compare::compare_runs, run_config, Trajectory};
use tollway_core::control::{growth_bounds, reduction_at, toll_targets, TollController};
use tollway_core::equilibrium::{analyze, equilibrium_witness, FeasibilityClass};
use tollway_core::geometry::{split_lanes, DualGeometry, FreewayGeometry, FundamentalDiagram, LaneSplit, RampSpec};
use tollway_core::node::{solve_merge, solve_node, NodeProblem};
use tollway_core::pricing::{run_auction, AuctionVariant, VotDistribution, VotPricer};
use tollway_core::sim::{
    dual_demands_supplies, demands_supplies, run_dual, step, step_dual, toll_node_input, DemandProfile, DualState,
    FreewayFlows, FreewayState, StepDemand,
};

type Outcome = Result<String, String>;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn diagram(r: &mut ChaCha8Rng) -> FundamentalDiagram {
    let v = r.gen_range(0.2..=1.0);
    let w = r.gen_range(0.1..=1.0);
    let f = r.gen_range(1.0..20.0);
    FundamentalDiagram::new(f, f / v + f / w + r.gen_range(0.0..20.0), v, w)
}

fn corridor(r: &mut ChaCha8Rng, max_k: usize, free_first_link: bool) -> FreewayGeometry {
    let k = r.gen_range(1..=max_k);
    let diagrams: Vec<_> = (0..k + 2).map(|_| diagram(r)).collect();
    let mut ramps = vec![RampSpec::NONE; k + 2];
    for (i, ramp) in ramps.iter_mut().enumerate().take(k + 1).skip(1) {
        if !(free_first_link && i == 1) && r.gen_bool(0.5) {
            *ramp = RampSpec::on_ramp(r.gen_range(0.5..10.0), r.gen_range(0.2..=1.0));
        }
        if r.gen_bool(0.4) {
            *ramp = ramp.with_off_ramp(r.gen_range(0.5..10.0), r.gen_range(0.0..0.5));
        }
    }
    FreewayGeometry::new(diagrams, ramps).unwrap()
}

fn demand(r: &mut ChaCha8Rng, g: &FreewayGeometry, scale: f64) -> StepDemand {
    let entrance = r.gen_range(0.0..=scale * g.link(0).diagram.capacity);
    let ramps = (0..g.links().len())
        .map(|i| {
            if i != g.exit() && g.link(i).ramp.has_on_ramp() {
                r.gen_range(0.0..=scale * g.link(i).ramp.on_capacity)
            } else {
                0.0
            }
        })
        .collect();
    StepDemand { entrance, ramps }
}

fn random_state(r: &mut ChaCha8Rng, g: &FreewayGeometry) -> FreewayState {
    let mut s = FreewayState::empty(g);
    for i in 0..g.links().len() {
        let cap = if i == 0 { 20.0 } else { g.link(i).diagram.max_vehicles };
        s.vehicles[i] = r.gen_range(0.0..=cap);
        if g.link(i).ramp.has_on_ramp() {
            s.queues[i] = r.gen_range(0.0..20.0);
        }
    }
    s
}

fn node_problem(r: &mut ChaCha8Rng) -> NodeProblem {
    let (m, n) = (r.gen_range(1..=6), r.gen_range(1..=6));
    let demands = (0..m).map(|_| r.gen_range(0.0..20.0)).collect();
    let supplies = (0..n).map(|_| r.gen_range(0.0..20.0)).collect();
    let splits = (0..m)
        .map(|_| {
            let mut row: Vec<f64> = (0..n).map(|_| if r.gen_bool(0.3) { 0.0 } else { r.gen::<f64>() }).collect();
            let sum: f64 = row.iter().sum();
            if sum <= 1e-6 {
                row.iter_mut().for_each(|x| *x = 0.0);
                row[0] = 1.0;
            } else {
                row.iter_mut().for_each(|x| *x /= sum);
                let top = (0..n).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
                let rest: f64 = (0..n).filter(|&j| j != top).map(|j| row[j]).sum();
                row[top] = 1.0 - rest;
            }
            row
        })
        .collect();
    let priorities = (0..m).map(|_| r.gen_range(0.01..1.0)).collect();
    NodeProblem::new(demands, supplies, splits, priorities).unwrap()
}

fn node_suite() -> Outcome {
    const TOL: f64 = 1e-9;
    let mut r = rng(1);
    for case in 0..10_000 {
        let p = node_problem(&mut r);
        let f = solve_node(&p);
        ensure(f.iterations <= p.inputs(), || format!("case {case}: {} iterations", f.iterations))?;
        for i in 0..p.inputs() {
            let d = p.demands()[i];
            ensure(f.outflow(i) <= d + TOL, || format!("case {case}: input {i} above demand"))?;
            let ratio = if d > 0.0 { f.outflow(i) / d } else { 0.0 };
            for j in 0..p.outputs() {
                let oriented = d * p.splits()[i][j];
                ensure(f.flows[i][j] >= 0.0, || format!("case {case}: negative flow"))?;
                ensure((f.flows[i][j] - ratio * oriented).abs() <= TOL, || {
                    format!("case {case}: FIFO broken at ({i},{j})")
                })?;
            }
        }
        for j in 0..p.outputs() {
            ensure(f.inflow(j) <= p.supplies()[j] + TOL, || format!("case {case}: output {j} above supply"))?;
        }
    }
    for case in 0..10_000 {
        let (fu, rd, fs) = (r.gen_range(0.0..20.0), r.gen_range(0.0..20.0), r.gen_range(0.0..20.0));
        let p = r.gen_range(0.01..0.99);
        let (a, b) = solve_merge(fu, rd, fs, p, 1.0 - p);
        let prob = NodeProblem::new(vec![fu, rd], vec![fs], vec![vec![1.0], vec![1.0]], vec![p, 1.0 - p]).unwrap();
        let f = solve_node(&prob);
        ensure((a - f.flows[0][0]).abs() <= TOL && (b - f.flows[1][0]).abs() <= TOL, || {
            format!("merge {case} differs from general solver")
        })?;
    }
    Ok("10000 node problems, 10000 merges".into())
}

/// Mainline densities are still and no queue shrinks. Queues fed above
/// what they can release keep growing at equilibrium.
fn settled(a: &FreewayState, b: &FreewayState) -> bool {
    let still = (1..a.vehicles.len()).all(|i| (b.vehicles[i] - a.vehicles[i]).abs() <= 1e-13);
    let growing = b.vehicles[0] >= a.vehicles[0] - 1e-13 && b.queues.iter().zip(&a.queues).all(|(x, y)| x >= &(y - 1e-13));
    still && growing
}

fn flows_converge() -> Outcome {
    let mut r = rng(2);
    let mut worst: f64 = 0.0;
    let (mut extended, mut longest) = (0, 0);
    for case in 0..1000 {
        let g = corridor(&mut r, 8, false);
        let d = demand(&mut r, &g, 1.3);
        let a = analyze(&g, d.entrance, &d.ramps);
        let mut s = random_state(&mut r, &g);
        let exit = g.exit();
        let ex = g.link(exit).diagram;
        s.vehicles[exit] = s.vehicles[exit].min(ex.capacity / ex.freeflow);
        let mut last;
        let mut steps = 0;
        // At least 10^4 steps, then on until no queue is still draining.
        loop {
            let (next, flows) = step(&s, &g, &d).map_err(|e| e.to_string())?;
            let done = steps >= 10_000 && settled(&s, &next);
            s = next;
            last = flows;
            steps += 1;
            if done || steps >= 2_000_000 {
                break;
            }
        }
        longest = longest.max(steps);
        if steps > 10_001 {
            extended += 1;
        }
        let flows: FreewayFlows = last;
        for i in 0..=g.exit() {
            let err = (flows.mainline[i] - a.flows.mainline[i]).abs();
            worst = worst.max(err);
            ensure(err <= 1e-6, || {
                format!("corridor {case}: f_{i} = {} vs {}", flows.mainline[i], a.flows.mainline[i])
            })?;
        }
        for i in 1..g.exit() {
            let err = (flows.on_ramp[i] - a.flows.on_ramp[i]).abs();
            worst = worst.max(err);
            ensure(err <= 1e-6, || {
                format!("corridor {case}: r_{i} = {} vs {}", flows.on_ramp[i], a.flows.on_ramp[i])
            })?;
        }
        // A link carrying less than its maximum flow is held back below its demand.
        let cond = demands_supplies(&s, &g);
        for i in 0..=g.exit() {
            if flows.mainline[i] < a.flows.max.mainline[i] - 1e-6 {
                ensure(flows.mainline[i] < cond.outflow_demand[i], || {
                    format!("corridor {case}: link {i} flow below max but at demand")
                })?;
            }
        }
    }
    Ok(format!(
        "1000 corridors, worst flow error {worst:.2e}, {extended} needed more than 10^4 steps (longest {longest})"
    ))
}

fn bottleneck_corridor() -> (FreewayGeometry, StepDemand) {
    let link = FundamentalDiagram::new(10.0, 60.0, 1.0, 0.25);
    let exit = FundamentalDiagram::new(6.0, 60.0, 1.0, 0.25);
    let ramps = vec![RampSpec::NONE, RampSpec::NONE, RampSpec::on_ramp(5.0, 1.0), RampSpec::NONE];
    let g = FreewayGeometry::new(vec![link, link, link, exit], ramps).unwrap();
    let d = StepDemand { entrance: 4.0, ramps: vec![0.0, 0.0, 2.0, 0.0] };
    (g, d)
}

fn equilibrium_structure() -> Outcome {
    let (g, d) = bottleneck_corridor();
    let a = analyze(&g, d.entrance, &d.ramps);
    ensure(a.structure.bottlenecks.len() == 1, || format!("bottlenecks {:?}", a.structure.bottlenecks))?;
    let grid: Vec<f64> = (0..20).map(|k| k as f64 / 19.0).collect();
    let mut states = 0;
    for &x in &grid {
        for &y in &grid {
            for &z in &grid {
                let mut s = FreewayState::empty(&g);
                s.vehicles[1] = x * g.link(1).diagram.max_vehicles;
                s.vehicles[2] = y * g.link(2).diagram.max_vehicles;
                // Exits start in free flow, where they stay.
                s.vehicles[3] = z * g.link(3).diagram.capacity / g.link(3).diagram.freeflow;
                let mut settled = false;
                for _ in 0..100_000 {
                    let (next, _) = step(&s, &g, &d).map_err(|e| e.to_string())?;
                    let moved = (0..g.links().len())
                        .map(|i| (next.vehicles[i] - s.vehicles[i]).abs() + (next.queues[i] - s.queues[i]).abs())
                        .fold(0.0, f64::max);
                    s = next;
                    if moved < 1e-13 {
                        settled = true;
                        break;
                    }
                }
                ensure(settled, || format!("start ({x:.3}, {y:.3}, {z:.3}) did not settle"))?;
                ensure(a.structure.contains(&s.vehicles), || {
                    format!("fixed point {:?} outside the equilibrium set", &s.vehicles[1..])
                })?;
                states += 1;
            }
        }
    }
    let mut r = rng(3);
    let mut held = d.clone();
    held.entrance = a.flows.mainline[0];
    held.ramps[2] = a.flows.on_ramp[2];
    for _ in 0..1000 {
        let picks: Vec<(usize, f64)> = a.structure.segments.iter().map(|_| (r.gen_range(0..4), r.gen())).collect();
        let n = a.structure.member(&picks);
        let s = equilibrium_witness(&g, &a.flows, &n);
        let (next, _) = step(&s, &g, &held).map_err(|e| e.to_string())?;
        for i in 0..g.links().len() {
            ensure((next.vehicles[i] - s.vehicles[i]).abs() <= 1e-9, || format!("member {n:?} moves at link {i}"))?;
        }
    }
    Ok(format!("{states} grid starts settle inside the set, 1000 members are fixed"))
}

fn strict_feasibility() -> Outcome {
    let mut r = rng(4);
    let mut found = 0;
    while found < 100 {
        let g = corridor(&mut r, 8, false);
        let d = demand(&mut r, &g, 0.6);
        let a = analyze(&g, d.entrance, &d.ramps);
        if a.class != FeasibilityClass::StrictlyFeasible {
            continue;
        }
        found += 1;
        let s = &a.structure;
        ensure(s.is_unique(), || format!("instance {found}: set not unique"))?;
        let n = s.member(&[]);
        for i in 1..=g.exit() {
            ensure((n[i] - s.uncongested[i]).abs() <= 1e-9, || format!("instance {found}: link {i} not free"))?;
        }
        for i in 1..g.exit() {
            let bar = d.ramps[i].min(g.link(i).ramp.on_capacity);
            ensure((a.flows.on_ramp[i] - bar).abs() <= 1e-9, || format!("instance {found}: r_{i} below demand"))?;
        }
    }
    Ok("100 strictly feasible instances".into())
}

fn controller_optimality() -> Outcome {
    let mut r = rng(5);
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    while checked < 1000 {
        let g = corridor(&mut r, 6, true);
        let split = LaneSplit::new(r.gen_range(1..3), r.gen_range(1..4)).unwrap();
        let dual = split_lanes(&g, split).unwrap();
        let s = DualState::from_single(&random_state(&mut r, &g), &dual);
        let cond = dual_demands_supplies(&s, &dual);
        for i in dual.entrances() {
            let input = toll_node_input(&cond, &dual, i, split.toll_share());
            let b = growth_bounds(&input);
            let best = (0..=1000).map(|k| reduction_at(&input, k as f64 * 1e-3)).fold(0.0, f64::max);
            worst = worst.max(best - b.lambda_star);
            ensure(best <= b.lambda_star + 1e-6, || {
                format!("entrance {i}: grid {best} beats {}", b.lambda_star)
            })?;
            checked += 1;
        }
    }
    Ok(format!("{checked} entrance states, grid excess at most {worst:.1e}"))
}

fn toll_lane_rows(out: &tollway::RunOutput) -> Result<(&DualGeometry, Vec<Vec<f64>>), String> {
    let dual = out.dual.as_ref().ok_or("not a toll-lane run")?;
    let Trajectory::Dual(tr) = &out.trajectory else {
        return Err("not a toll-lane run".into());
    };
    let mut rows: Vec<Vec<f64>> = tr.steps.iter().map(|s| s.state.vehicles[0].clone()).collect();
    rows.push(tr.final_state.vehicles[0].clone());
    Ok((dual, rows))
}

fn scenario(name: &str) -> Result<tollway::RunOutput, String> {
    let c = bundled(name).ok_or("missing scenario")?;
    run_config(&c, 0).map_err(|e| e.to_string())
}

fn controller_convergence() -> Outcome {
    let out = scenario("scenario_1b")?;
    let (dual, rows) = toll_lane_rows(&out)?;
    let targets = toll_targets(dual).map_err(|e| e.to_string())?;
    let inside = |row: &[f64]| (1..=dual.exit()).all(|i| row[i] <= targets.n_e[i] + 1e-3);
    let t = rows.iter().position(|row| inside(row)).ok_or("toll lane never reaches its target")?;
    let after = rows[t..].iter().position(|row| !inside(row));
    ensure(after.is_none(), || format!("target left again at step {}", t + after.unwrap()))?;
    Ok(format!("inside the target zone from step T = {t} of {}", rows.len() - 1))
}

fn congested(dual: &DualGeometry, row: &[f64], group: usize) -> Vec<usize> {
    (1..=dual.exit())
        .filter(|&i| {
            let d = dual.link(i).groups[group];
            row[i] > d.capacity / d.freeflow + 1e-6
        })
        .collect()
}

const GOLDENS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/goldens/scenarios.json");

/// Compare against the pinned run; `TOLLWAY_BLESS=1` rewrites the file.
fn check_goldens(now: &serde_json::Map<String, serde_json::Value>) -> Result<(), String> {
    if std::env::var_os("TOLLWAY_BLESS").is_some() {
        let text = serde_json::to_string_pretty(now).map_err(|e| e.to_string())?;
        return std::fs::write(GOLDENS, text + "\n").map_err(|e| e.to_string());
    }
    let text = std::fs::read_to_string(GOLDENS).map_err(|e| format!("goldens: {e}"))?;
    let pinned: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    ensure(pinned.len() == now.len(), || "goldens: different keys".into())?;
    for (key, want) in &pinned {
        let got = now.get(key).ok_or_else(|| format!("goldens: missing {key}"))?;
        let same = match (want.as_f64(), got.as_f64()) {
            (Some(a), Some(b)) => (a - b).abs() <= 1e-9 * a.abs().max(1.0),
            _ => want == got,
        };
        ensure(same, || format!("goldens: {key} is {got}, pinned {want}"))?;
    }
    Ok(())
}

fn scenario_behavior() -> Outcome {
    let mut notes = Vec::new();
    let mut pinned = serde_json::Map::new();
    let mut pin = |name: &str, out: &tollway::RunOutput| {
        pinned.insert(format!("{name}_vmt"), out.metrics.vmt.into());
        pinned.insert(format!("{name}_delay"), out.metrics.delay.into());
    };

    let out = scenario("scenario_1a")?;
    pin("1a", &out);
    let (dual, rows) = toll_lane_rows(&out)?;
    let last = congested(dual, rows.last().unwrap(), 0);
    ensure(!last.is_empty() && last.len() < dual.exit(), || {
        format!("1a: toll lane congested at {last:?} at the end")
    })?;
    notes.push(format!("1a ends with {} congested toll links", last.len()));

    let out = scenario("scenario_1b")?;
    pin("1b", &out);
    let (dual, rows) = toll_lane_rows(&out)?;
    let free = rows.iter().position(|row| congested(dual, row, 0).is_empty()).ok_or("1b: toll lane never decongests")?;
    ensure(rows[free..].iter().all(|row| congested(dual, row, 0).is_empty()), || "1b: congestion returns".into())?;
    notes.push(format!("1b free from step {free}"));

    let out = scenario("scenario_2")?;
    pin("2", &out);
    let dual = out.dual.as_ref().ok_or("2: not a toll-lane run")?;
    let Trajectory::Dual(tr) = &out.trajectory else {
        return Err("2: not a toll-lane run".into());
    };
    let states: Vec<&DualState> = tr.steps.iter().map(|s| &s.state).collect();
    let surge = states
        .iter()
        .position(|s| s.t >= 20 && !congested(dual, &s.vehicles[0], 0).is_empty())
        .ok_or("2: toll lane never congests in the surge")?;
    let toll_free = states[surge..]
        .iter()
        .position(|s| congested(dual, &s.vehicles[0], 0).is_empty())
        .map(|k| k + surge)
        .ok_or("2: toll lane never recovers")?;
    let gp_free = states[surge..]
        .iter()
        .position(|s| congested(dual, &s.vehicles[1], 1).is_empty())
        .map(|k| k + surge);
    ensure(gp_free.map_or(true, |g| toll_free < g), || {
        format!("2: toll lane recovers at {toll_free}, general lanes at {gp_free:?}")
    })?;
    notes.push(format!(
        "2 toll congests at {surge}, recovers at {toll_free}, general lanes {}",
        gp_free.map_or("stay congested".to_string(), |t| format!("recover at {t}"))
    ));

    let out = scenario("scenario_3")?;
    pin("3", &out);
    let dual = out.dual.as_ref().ok_or("3: not a toll-lane run")?;
    let Trajectory::Dual(tr) = &out.trajectory else {
        return Err("3: not a toll-lane run".into());
    };
    let share = dual.lane_split.toll_share();
    let entrances = dual.entrances();
    ensure(entrances.len() == 2, || format!("3: entrances {entrances:?}"))?;
    for &i in &entrances {
        let steered = tr.steps.iter().any(|s| (s.requested[i] - share).abs() > 1e-6);
        let feeds = tr.steps.iter().any(|s| s.flows.on_ramp[0][i] > 1e-6);
        ensure(steered && feeds, || format!("3: entrance {i} steered {steered}, feeds toll lane {feeds}"))?;
    }
    notes.push("3 both entrances steered".into());
    pinned.insert("1a_congested_toll_links".into(), last.len().into());
    pinned.insert("1b_free_from".into(), free.into());
    pinned.insert("2_toll_congests".into(), surge.into());
    pinned.insert("2_toll_recovers".into(), toll_free.into());
    pinned.insert("2_general_recovers".into(), gp_free.into());
    check_goldens(&pinned)?;
    Ok(notes.join("; "))
}

fn comparison() -> Outcome {
    let c = bundled("compare_corridor").ok_or("missing compare corridor")?;
    let runs = compare_runs(&c, 0).map_err(|e| e.to_string())?;
    let [base, all_gp, hot] = [&runs[0].metrics, &runs[1].metrics, &runs[2].metrics];
    let detail = format!(
        "VMT {:.3}/{:.3}/{:.3}, delay base {:.2} all-GP {:.2} HOT {:.2}",
        base.vmt, all_gp.vmt, hot.vmt, base.delay, all_gp.delay, hot.delay
    );
    let scale = base.vmt.abs().max(1.0);
    let equal = (base.vmt - all_gp.vmt).abs() <= 1e-6 * scale && (hot.vmt - all_gp.vmt).abs() <= 1e-6 * scale;
    ensure(equal, || format!("unequal VMT: {detail}"))?;
    ensure(hot.delay <= all_gp.delay && all_gp.delay <= base.delay, || format!("delay order broken: {detail}"))?;
    Ok(detail)
}

fn pricing() -> Outcome {
    let mut r = rng(9);
    for case in 0..10_000 {
        let h = r.gen_range(1..500);
        let bids: Vec<f64> = (0..h).map(|_| r.gen_range(0.0..100.0)).collect();
        let alpha = r.gen::<f64>();
        let out = run_auction(&bids, alpha, AuctionVariant::Nearest, r.gen());
        let err = (out.admitted as f64 / h as f64 - alpha).abs();
        ensure(err <= 0.5 / h as f64 + 1e-12, || format!("auction {case}: h*/H off by {err}"))?;
    }

    let link = FundamentalDiagram::new(10.0, 60.0, 1.0, 0.25);
    let mut ramps = vec![RampSpec::NONE; 6];
    ramps[3] = RampSpec::on_ramp(6.0, 1.0);
    let g = FreewayGeometry::new(vec![link; 6], ramps).unwrap();
    let dual = split_lanes(&g, LaneSplit::new(1, 1).unwrap()).unwrap();
    let profile = DemandProfile::constant(8.0, vec![0.0, 0.0, 0.0, 4.0, 0.0, 0.0]);
    let uniform = VotDistribution::uniform(60.0);
    let mut pricer = VotPricer::new(uniform.clone(), uniform, 9);
    pricer.travelers_per_step = 10_000;
    let mut controller = TollController::new(&dual).map_err(|e| e.to_string())?;
    let tr = run_dual(&dual, &profile, DualState::empty(&dual), 100, Some(&mut controller), Some(&mut pricer))
        .map_err(|e| e.to_string())?;
    let h = pricer.travelers_per_step as f64;
    let (mut dev, mut var, mut worst) = (0.0, 0.0, 0.0f64);
    let mut samples = 0;
    for s in &tr.steps {
        for i in dual.entrances() {
            let want = 1.0 - s.requested[i];
            let got = 1.0 - s.realized[i].alpha1;
            let v = want * (1.0 - want) / h;
            dev += got - want;
            var += v;
            if v > 0.0 {
                worst = worst.max((got - want).abs() / v.sqrt());
            }
            samples += 1;
        }
    }
    let z = if var > 0.0 { dev / var.sqrt() } else { dev.abs() * f64::INFINITY };
    ensure(z.abs() <= 3.0 || dev == 0.0, || format!("realized general-lane share off by {z:.2} sigma"))?;
    Ok(format!(
        "10000 auctions exact; {samples} priced splits, aggregate {z:.2} sigma, largest single step {worst:.2} sigma"
    ))
}

fn fuzz_safety() -> Outcome {
    let mut r = rng(10);
    let runs = 20;
    for case in 0..runs {
        let g = corridor(&mut r, 8, true);
        let mut s = random_state(&mut r, &g);
        let exit = g.exit();
        let ex = g.link(exit).diagram;
        let free_exit = ex.capacity / ex.freeflow;
        s.vehicles[exit] = s.vehicles[exit].min(free_exit);
        let dual = split_lanes(&g, LaneSplit::new(r.gen_range(1..3), r.gen_range(1..4)).unwrap()).unwrap();
        let mut ds = DualState::from_single(&s, &dual);
        for t in 0..10_000 {
            let d = demand(&mut r, &g, 1.5);
            let arrivals = d.entrance + d.ramps.iter().sum::<f64>();

            let before = s.total_vehicles();
            let (next, flows) = step(&s, &g, &d).map_err(|e| format!("run {case} step {t}: {e}"))?;
            let departures = flows.mainline[exit] + flows.off_ramp.iter().sum::<f64>();
            ensure((next.total_vehicles() - (before + arrivals - departures)).abs() <= 1e-6, || {
                format!("run {case} step {t}: conservation")
            })?;
            for i in 0..g.links().len() {
                let cap = if i == 0 { f64::INFINITY } else { g.link(i).diagram.max_vehicles };
                ensure(next.vehicles[i] >= -1e-9 && next.vehicles[i] <= cap + 1e-9 && next.queues[i] >= -1e-9, || {
                    format!("run {case} step {t}: link {i} out of range")
                })?;
            }
            ensure(next.vehicles[exit] <= free_exit + 1e-9, || format!("run {case} step {t}: exit congested"))?;
            s = next;

            let splits: Vec<f64> = (0..dual.links().len()).map(|_| r.gen::<f64>()).collect();
            let before = ds.total_vehicles();
            let (next, flows) = step_dual(&ds, &dual, &d, &splits).map_err(|e| format!("run {case} step {t}: {e}"))?;
            let departures: f64 =
                (0..2).map(|k| flows.mainline[k][exit] + flows.off_ramp[k].iter().sum::<f64>()).sum();
            ensure((next.total_vehicles() - (before + arrivals - departures)).abs() <= 1e-6, || {
                format!("run {case} step {t}: toll-lane conservation")
            })?;
            for k in 0..2 {
                for i in 1..dual.links().len() {
                    let cap = dual.link(i).groups[k].max_vehicles;
                    ensure(next.vehicles[k][i] >= -1e-9 && next.vehicles[k][i] <= cap + 1e-9, || {
                        format!("run {case} step {t}: group {k} link {i} out of range")
                    })?;
                }
                let d = dual.link(exit).groups[k];
                ensure(next.vehicles[k][exit] <= d.capacity / d.freeflow + 1e-9, || {
                    format!("run {case} step {t}: exit group {k} congested")
                })?;
            }
            ensure(next.queues.iter().all(|&q| q >= -1e-9), || format!("run {case} step {t}: negative queue"))?;
            ds = next;
        }
    }
    Ok(format!("{runs} corridors, 10000 steps each, single and toll-lane"))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 10] = [
        ("node model", node_suite, Some(Duration::from_secs(10))),
        ("flows converge to equilibrium", flows_converge, Some(Duration::from_secs(60))),
        ("equilibrium set structure", equilibrium_structure, Some(Duration::from_secs(30))),
        ("strict feasibility", strict_feasibility, None),
        ("controller optimality", controller_optimality, None),
        ("toll lane target zone", controller_convergence, Some(Duration::from_secs(30))),
        ("scenario behavior", scenario_behavior, None),
        ("lane policy comparison", comparison, None),
        ("pricing", pricing, None),
        ("simulation safety", fuzz_safety, None),
    ];
    let mut failed = 0;
    for (k, (name, check, limit)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let mut outcome = check();
        let elapsed = start.elapsed();
        if let (Ok(detail), Some(limit)) = (&outcome, limit) {
            if elapsed > limit {
                outcome = Err(format!("{detail}; took longer than {}s", limit.as_secs()));
            }
        }
        let secs = elapsed.as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.2}s): {detail}", k + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.2}s): {detail}", k + 1);
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
