//! Acceptance suite. Prints one line per criterion and exits non-zero if
//! any criterion fails.

use std::collections::BTreeSet;
use std::time::Instant;

use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roamsim::addr::{AddressRole, Prefix};
use roamsim::analytic::{handoff_time_approx, handoff_time_exact, jitter_ratio_exact, DelayProfile};
use roamsim::metrics::{jitter_amplification, percentile};
use roamsim::packet::{Body, DataKind, Packet};
use roamsim::report::{HandoverKind, TrialResult};
use roamsim::runner::{rows, run_trials, run_trials_sequential};
use roamsim::scenario::Scenario;
use roamsim::time::{Micros, SimTime, MS};
use roamsim::world::simulate;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn fixture(name: &str) -> Scenario {
    let path = format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"));
    Scenario::load(&path).unwrap_or_else(|e| panic!("{path}: {e}"))
}

fn with(text: &str, extra: &str) -> Scenario {
    Scenario::parse(&format!("{text}\n{extra}\n")).expect("scenario parses")
}

fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).expect("fixture exists")
}

/// All-pairs shortest latencies by Floyd-Warshall over an explicit edge list.
fn all_pairs(n: usize, edges: &[(usize, usize, u64)]) -> Vec<Vec<u64>> {
    let inf = u64::MAX / 4;
    let mut d = vec![vec![inf; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0;
    }
    for &(a, b, w) in edges {
        d[a][b] = d[a][b].min(w);
        d[b][a] = d[b][a].min(w);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                if d[i][k] + d[k][j] < d[i][j] {
                    d[i][j] = d[i][k] + d[k][j];
                }
            }
        }
    }
    d
}

fn criterion_1() -> Outcome {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xacce97);
    let mut worst: u64 = 0;
    let mut checked = 0;
    for topo in 0..120 {
        let routers = rng.gen_range(2..7);
        // node indices: routers, then ha, cn, ap1, ap2
        let (ha, cn, ap1, ap2) = (routers, routers + 1, routers + 2, routers + 3);
        let names: Vec<String> = (0..routers)
            .map(|i| format!("r{i}"))
            .chain(["ha", "cn", "ap1", "ap2"].iter().map(|s| s.to_string()))
            .collect();
        let mut edges = Vec::new();
        for i in 1..routers {
            edges.push((i, rng.gen_range(0..i), rng.gen_range(100..20_000)));
        }
        for _ in 0..rng.gen_range(0..3) {
            let a = rng.gen_range(0..routers);
            let b = rng.gen_range(0..routers);
            if a != b {
                edges.push((a, b, rng.gen_range(100..20_000)));
            }
        }
        for leaf in [ha, cn, ap1, ap2] {
            edges.push((leaf, rng.gen_range(0..routers), rng.gen_range(100..20_000)));
        }
        let radio: u64 = rng.gen_range(100..3_000);
        let mut text = format!(
            "seed {topo}\nduration 3s\nvariant mipv6\nset detection=l2-trigger readdress=2ms\n"
        );
        for (i, name) in names.iter().enumerate() {
            let kind = match i {
                _ if i < routers => "router",
                _ if i == ha => "home-agent",
                _ if i == cn => "correspondent-node",
                _ => "access-point",
            };
            let extra = if i >= ap1 { format!(" radio={radio}us") } else { String::new() };
            text += &format!("node {name} kind={kind}{extra}\n");
        }
        for (a, b, w) in &edges {
            text += &format!("link {} {} latency={w}us\n", names[*a], names[*b]);
        }
        text += "mobile mn home=ha start=ap1\nmove 1s ap2\nprobe from=mn to=cn interval=15ms start=100ms stop=2.9s\n";
        let sc = Scenario::parse(&text).expect("generated scenario parses");
        let r = simulate(&sc, 0, topo).expect("runs");
        let h = &r.handovers[0];
        let d = all_pairs(names.len(), &edges);
        let p = DelayProfile::new(
            h.local().expect("address configured"),
            2 * (radio + d[ap2][ha]),
            2 * (radio + d[ap2][cn]),
        )
        .with_ha_cn(2 * d[ha][cn]);
        let expected = handoff_time_exact(&p).expect("even sums");
        let got = h.unicast_disruption().expect("restored");
        worst = worst.max(got.abs_diff(expected));
        checked += 1;
    }
    let secs = started.elapsed().as_secs_f64();
    Outcome {
        pass: worst <= 1 && checked >= 100 && secs < 10.0,
        detail: format!("{checked} random topologies, max |simulated - exact| = {worst} us, {secs:.2} s"),
    }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for _ in 0..10_000 {
        let t_cn = 2 * rng.gen_range(0..1u64 << 28);
        let t_ha = 2 * rng.gen_range(0..1u64 << 28);
        let p = DelayProfile::new(rng.gen_range(0..1 << 28), t_ha, t_cn).with_ha_cn(t_cn);
        assert!(p.ha_cn() + p.t_ha >= p.t_cn);
        if handoff_time_approx(&p) != handoff_time_exact(&p) {
            mismatches += 1;
        }
    }
    Outcome {
        pass: mismatches == 0,
        detail: format!("10000 profiles on the subdomain, {mismatches} mismatches"),
    }
}

fn disruptions(results: &[TrialResult]) -> Vec<Micros> {
    results
        .iter()
        .flat_map(|r| r.handovers.iter().filter_map(|h| h.disruption()))
        .collect()
}

fn criterion_3() -> Outcome {
    let mut sc = fixture("fig1.scn");
    sc.trials = 1000;
    let d = disruptions(&run_trials(&sc).expect("runs"));
    let p90 = percentile(&d, 90.0).expect("samples");
    let pass = (85 * MS..=105 * MS).contains(&p90);

    let mut literal = sc.clone();
    literal.timers.readdress = roamsim::config::Span::fixed(25 * MS);
    let lit = percentile(&disruptions(&run_trials(&literal).expect("runs")), 90.0).expect("samples");
    Outcome {
        pass,
        detail: format!(
            "{} handovers, P90 disturbance = {:.1} ms (target 85..105); info: 25 ms configuration time on top of the advertisement wait gives P90 = {:.1} ms",
            d.len(),
            p90 as f64 / 1e3,
            lit as f64 / 1e3
        ),
    }
}

fn criterion_4() -> Outcome {
    let mut sc = fixture("fig1.scn");
    sc.trials = 1000;
    roamsim::scenario::apply_setting_str(&mut sc.timers, "detection", "l2-trigger").unwrap();
    for (k, v) in [("rs_delay", "1ms"), ("ra_delay", "1ms"), ("handshake", "1ms"), ("readdress", "2ms")] {
        roamsim::scenario::apply_setting_str(&mut sc.timers, k, v).unwrap();
    }
    let results = run_trials(&sc).expect("runs");
    let local: Vec<Micros> = results
        .iter()
        .flat_map(|r| r.handovers.iter().map(|h| h.readdressing().expect("address configured")))
        .collect();
    let max = local.iter().copied().max().unwrap_or(0);
    Outcome {
        pass: max < 5 * MS && local.len() == 2000,
        detail: format!("{} handovers, max link-up to address = {:.3} ms", local.len(), max as f64 / 1e3),
    }
}

const DOMAINS: &str = "
seed 21
duration 6s
set detection=l2-trigger readdress=2ms
node core kind=router
node far  kind=router
node ha   kind=home-agent
node cn   kind=correspondent-node
node m1   kind=map
node m2   kind=map
node ap1  kind=access-point map=m1 radio=1ms
node ap2  kind=access-point map=m2 radio=1ms
link core m1  latency=4ms
link core m2  latency=6ms
link m1 ap1   latency=1ms
link m2 ap2   latency=2ms
link core far latency=10ms
link far ha   latency={HA}
link far cn   latency={CN}
mobile mn home=ha start=ap1
move 2s ap2
move 4s ap1
probe from=mn to=cn interval=15ms start=100ms stop=5.9s
";

fn domains(variant: &str, scale: u64) -> Scenario {
    let text = DOMAINS
        .replace("{HA}", &format!("{}ms", 25 * scale))
        .replace("{CN}", &format!("{}ms", 12 * scale));
    with(&text, &format!("variant {variant}"))
}

fn unicast_disruptions(sc: &Scenario, seed: u64) -> Vec<Micros> {
    simulate(sc, 0, seed)
        .expect("runs")
        .handovers
        .iter()
        .map(|h| h.unicast_disruption().expect("restored"))
        .collect()
}

fn criterion_5() -> Outcome {
    let mut shuffled = Vec::new();
    let mut plain = Vec::new();
    for seed in 0..20 {
        let a = unicast_disruptions(&domains("hmipv6-shuffling", 1), seed);
        let b = unicast_disruptions(&domains("hmipv6-shuffling", 2), seed);
        shuffled.extend(a.iter().zip(&b).map(|(x, y)| y.abs_diff(*x)));
        let a = unicast_disruptions(&domains("mipv6", 1), seed);
        let b = unicast_disruptions(&domains("mipv6", 2), seed);
        plain.extend(a.iter().zip(&b).map(|(x, y)| *y as i64 - *x as i64));
    }
    let shuffle_change = shuffled.iter().copied().max().unwrap_or(0);
    let plain_min = plain.iter().copied().min().unwrap_or(0);
    Outcome {
        pass: shuffle_change == 0 && plain_min > 0,
        detail: format!(
            "{} handovers: shuffling change = {shuffle_change} us, plain MIPv6 minimum increase = {:.1} ms",
            shuffled.len(),
            plain_min as f64 / 1e3
        ),
    }
}

const TRIANGLE: &str = "
seed 6
duration 152s
variant mipv6
set detection=l2-trigger
node r   kind=router
node ha  kind=home-agent
node cn  kind=correspondent-node
node ap  kind=access-point radio=100us eps=0
link ap r  latency=10ms eps=0.1
link r cn  latency=10ms eps=0.1
link ap ha latency=20ms eps=0.1
link ha cn latency=20ms eps=0.1
mobile mn home=ha start=ap
probe from=cn to=mn interval=15ms start=10ms stop=150.01s
";

fn criterion_6() -> Outcome {
    let started = Instant::now();
    let direct = with(TRIANGLE, "set route_optimization=true");
    let triangular = with(TRIANGLE, "set route_optimization=false");
    let before = simulate(&direct, 0, 61).expect("runs").probes[0].stats();
    let after = simulate(&triangular, 0, 62).expect("runs").probes[0].stats();
    let ratio = jitter_amplification(&before, &after).expect("noisy baseline");
    let topo = &direct.topology;
    let (ap, ha, cn) = (topo.find("ap").unwrap(), topo.find("ha").unwrap(), topo.find("cn").unwrap());
    let p = DelayProfile::new(0, 2 * topo.static_delay(ap, ha).unwrap(), 2 * topo.static_delay(ap, cn).unwrap())
        .with_ha_cn(2 * topo.static_delay(ha, cn).unwrap());
    let predicted = jitter_ratio_exact(&p).unwrap();
    let secs = started.elapsed().as_secs_f64();
    Outcome {
        pass: (1.8..=2.2).contains(&ratio) && before.received_unique >= 10_000 && after.received_unique >= 10_000 && secs < 30.0,
        detail: format!(
            "{} / {} packets, jitter ratio = {ratio:.3} (closed form {predicted:.2}), {secs:.2} s",
            before.received_unique, after.received_unique
        ),
    }
}

fn arb_packet() -> impl Strategy<Value = Packet> {
    let addr = (1u16..50, any::<u64>()).prop_map(|(p, i)| Prefix::for_index(p).address(i, AddressRole::Plain));
    (addr.clone(), addr.clone(), proptest::option::of(addr.clone()), proptest::option::of(addr), any::<u64>(), 0u16..1500, any::<u32>())
        .prop_map(|(src, dst, rh2, hao, seq, size, flow)| {
            Packet::new(src, dst, rh2, hao, Body::Data { flow, kind: DataKind::Probe, size }, seq, SimTime(seq >> 20))
        })
}

fn criterion_7() -> Outcome {
    let mut runner = TestRunner::new(Config {
        cases: 10_000,
        failure_persistence: None,
        ..Config::default()
    });
    let other = Prefix::for_index(99).address(7, AddressRole::LinkCareOf);
    let result = runner.run(&(arb_packet(), any::<bool>()), |(p, corrupt)| {
        let mut p = p;
        if corrupt {
            p.upper_checksum ^= 0x5a5a;
        }
        let valid = p.verify_checksum();
        prop_assert_eq!(valid, !corrupt);
        if p.rh2.is_some() {
            let q = p.clone().rewrite_dest(other).unwrap();
            prop_assert_eq!(q.verify_checksum(), valid);
        }
        if p.hao.is_some() {
            let q = p.clone().rewrite_src(other).unwrap();
            prop_assert_eq!(q.verify_checksum(), valid);
        }
        let t = p.clone().encapsulate(other, p.dst).unwrap().decapsulate().unwrap();
        prop_assert_eq!(&t, &p);
        Ok(())
    });
    Outcome {
        pass: result.is_ok(),
        detail: match result {
            Ok(()) => "10000 packets: verification unchanged by rewrites, tunnel round trip is identity".into(),
            Err(e) => format!("{e}"),
        },
    }
}

fn criterion_8() -> Outcome {
    let sc = fixture("fig5-receiver.scn");
    let r = simulate(&sc, 0, 8).expect("runs");
    let unicast_only = {
        let text: String = fixture_text("fig5-receiver.scn")
            .lines()
            .filter(|l| !l.starts_with("group"))
            .map(|l| format!("{l}\n"))
            .collect();
        simulate(&Scenario::parse(&text).unwrap(), 0, 8).expect("runs")
    };
    let mut equal = true;
    let mut parts = Vec::new();
    for (h, u) in r.handovers.iter().zip(&unicast_only.handovers) {
        let g = h.group_disruption();
        equal &= g.is_some() && g == u.unicast_disruption() && g == h.unicast_disruption();
        parts.push(format!("{:.3}/{:.3} ms", g.unwrap_or(0) as f64 / 1e3, u.unicast_disruption().unwrap_or(0) as f64 / 1e3));
    }
    let mn = sc.topology.find("mn").unwrap();
    let rx: Vec<_> = r.group_receptions[0].iter().filter(|x| x.receiver == mn).collect();
    let mut seen = BTreeSet::new();
    let mut during = 0;
    let mut after_release = 0;
    // from each release (plus packets already in flight) up to the next move
    let settled: Vec<(SimTime, SimTime)> = r
        .handovers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| {
            let end = r.handovers.get(i + 1).map_or(SimTime(u64::MAX), |n| n.at);
            h.previous_released.map(|t| (t + 200 * MS, end))
        })
        .collect();
    for x in &rx {
        if !seen.insert(x.seq) {
            if settled.iter().any(|(a, b)| *a <= x.at && x.at < *b) {
                after_release += 1;
            } else {
                during += 1;
            }
        }
    }
    let released = settled.len();
    Outcome {
        pass: equal && during > 0 && after_release == 0 && released == r.handovers.len(),
        detail: format!(
            "group/unicast disruption {}; duplicates during overlap = {during}, after release = {after_release}",
            parts.join(", ")
        ),
    }
}

fn criterion_9() -> Outcome {
    let sc = fixture("fig5-source.scn");
    let interval = sc.groups[0].interval;
    let r = simulate(&sc, 0, 9).expect("runs");
    let quiet: Vec<(SimTime, SimTime)> = r
        .handovers
        .iter()
        .map(|h| (h.at, h.address_ready.expect("configured") + interval))
        .collect();
    let mut stray = 0;
    let mut identities = BTreeSet::new();
    for log in r.groups[0].values() {
        let got: BTreeSet<u64> = log.received.iter().map(|x| x.seq).collect();
        for (seq, at) in &log.sent {
            if !got.contains(seq) && !quiet.iter().any(|(a, b)| a <= at && at < b) {
                stray += 1;
            }
        }
    }
    for x in &r.group_receptions[0] {
        identities.insert(x.identity);
    }
    let domain_moves = r.handovers.iter().filter(|h| h.kind == Some(HandoverKind::InterDomain)).count();

    let mut zero = sc.clone();
    zero.timers.t_bicast = Some(0);
    let z = simulate(&zero, 0, 9).expect("runs");
    let tree = zero.timers.tree_delay;
    let mut windows = Vec::new();
    let log = z.groups[0].values().next().expect("listener");
    let got: BTreeSet<u64> = log.received.iter().map(|x| x.seq).collect();
    for (i, h) in z.handovers.iter().enumerate() {
        if h.kind != Some(HandoverKind::InterDomain) {
            continue;
        }
        let from = h.address_ready.unwrap();
        let to = z.handovers.get(i + 1).map_or(SimTime(sc.groups[0].stop.as_micros()), |n| n.at);
        if to - from < tree + 2 * interval {
            continue;
        }
        let lost = log
            .sent
            .iter()
            .filter(|(s, at)| *at >= from && *at < to && !got.contains(s))
            .count() as u64;
        windows.push(lost * interval);
    }
    let windows_ok = !windows.is_empty() && windows.iter().all(|w| w.abs_diff(tree) <= interval);
    Outcome {
        pass: stray == 0 && identities.len() == 1 && domain_moves >= 3 && windows_ok,
        detail: format!(
            "{domain_moves} domain moves: loss outside local gaps = {stray}, distinct source identities = {}; without bicasting loss windows = {:?} ms vs convergence {} ms",
            identities.len(),
            windows.iter().map(|w| w / MS).collect::<Vec<_>>(),
            tree / MS
        ),
    }
}

fn csv_bytes(sc: &Scenario, results: &[TrialResult]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows(sc, results) {
        w.serialize(row).unwrap();
    }
    w.into_inner().unwrap()
}

fn criterion_10() -> Outcome {
    let mut identical = true;
    let mut names = Vec::new();
    for f in ["fig1.scn", "geometry.scn", "fig5-receiver.scn", "fig5-source.scn"] {
        let mut sc = fixture(f);
        sc.trials = sc.trials.min(20);
        let a = csv_bytes(&sc, &run_trials(&sc).unwrap());
        let b = csv_bytes(&sc, &run_trials(&sc).unwrap());
        let c = csv_bytes(&sc, &run_trials_sequential(&sc).unwrap());
        identical &= a == b && a == c && !a.is_empty();
        names.push(f);
    }
    let jitter = with(TRIANGLE, "set route_optimization=false\ntrials 8\nduration 5s");
    let a = csv_bytes(&jitter, &run_trials(&jitter).unwrap());
    let b = csv_bytes(&jitter, &run_trials_sequential(&jitter).unwrap());
    identical &= a == b;
    Outcome {
        pass: identical,
        detail: format!("{} fixtures plus a jittered scenario: repeated and sequential runs byte-identical", names.len()),
    }
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("formula-simulation equivalence", criterion_1),
        ("approximation consistency", criterion_2),
        ("router-advertisement disturbance P90", criterion_3),
        ("layer-2 trigger local readdressing", criterion_4),
        ("shuffling invariance", criterion_5),
        ("jitter amplification", criterion_6),
        ("checksum neutrality", criterion_7),
        ("multicast receiver handover", criterion_8),
        ("multicast source handover", criterion_9),
        ("determinism", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let o = f();
        if !o.pass {
            failed += 1;
        }
        println!("criterion {:>2} {} {name}: {}", i + 1, if o.pass { "PASS" } else { "FAIL" }, o.detail);
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
