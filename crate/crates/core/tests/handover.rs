use roamsim::report::{HandoverKind, TrialResult};
use roamsim::runner::{compare, run_trials};
use roamsim::scenario::Scenario;
use roamsim::time::{Micros, MS, SEC};
use roamsim::world::simulate;

fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn fixture(name: &str) -> Scenario {
    Scenario::parse(&fixture_text(name)).unwrap()
}

fn run(sc: &Scenario, seed: u64) -> TrialResult {
    simulate(sc, 0, seed).unwrap()
}

#[test]
fn stretched_geometry_matches_hand_computation() {
    // home roundtrip 44ms, correspondent roundtrip 24ms, HA-CN leg 60ms
    let r = run(&fixture("stretched-x1.scn"), 3);
    let h = &r.handovers[0];
    assert_eq!(h.kind, Some(HandoverKind::InterDomain));
    assert_eq!(h.unicast_disruption().unwrap() - h.local().unwrap(), 160 * MS);
    assert_eq!(h.home_ack.unwrap() - h.address_ready.unwrap(), 44 * MS);
}

#[test]
fn disruption_grows_with_stretch() {
    let d: Vec<Micros> = ["stretched-x1.scn", "stretched-x2.scn", "stretched-x4.scn"]
        .iter()
        .map(|f| {
            let h = &run(&fixture(f), 1).handovers[0];
            h.unicast_disruption().unwrap() - h.local().unwrap()
        })
        .collect();
    assert!(d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
}

#[test]
fn predictions_match_every_fixture_without_jitter() {
    for f in ["fig1.scn", "geometry.scn", "stretched-x2.scn", "fig5-receiver.scn", "fig5-source.scn"] {
        let mut sc = fixture(f);
        sc.trials = sc.trials.min(5);
        let rows = compare(&sc, &run_trials(&sc).unwrap(), 1).unwrap();
        assert!(!rows.is_empty(), "{f}");
        assert!(rows.iter().all(|r| !r.flagged), "{f}: {rows:?}");
    }
}

const DOMAINS: &str = "
seed 4
duration 8s
variant hmipv6
set detection=l2-trigger readdress=2ms
node core kind=router
node ha   kind=home-agent radio=1ms
node cn   kind=correspondent-node
node m1   kind=map
node ap1  kind=access-point map=m1 radio=1ms
node ap2  kind=access-point map=m1 radio=1ms
link core ha latency=20ms
link core cn latency=8ms
link core m1 latency=5ms
link m1 ap1  latency=2ms
link m1 ap2  latency=3ms
mobile mn home=ha start=ap1
move 2s ap2
move 4s ha
probe from=mn to=cn interval=15ms start=100ms stop=7.9s
";

#[test]
fn intra_domain_move_costs_one_map_roundtrip() {
    let r = run(&Scenario::parse(DOMAINS).unwrap(), 2);
    let h = &r.handovers[0];
    assert_eq!(h.kind, Some(HandoverKind::IntraDomain));
    // radio 1ms plus 3ms to the MAP, both ways
    assert_eq!(h.unicast_disruption().unwrap(), h.local().unwrap() + 8 * MS);
    assert!(h.home_ack.is_none());
}

#[test]
fn returning_home_deregisters_with_the_home_agent() {
    let r = run(&Scenario::parse(DOMAINS).unwrap(), 2);
    let h = &r.handovers[1];
    assert_eq!(h.kind, Some(HandoverKind::ReturnHome));
    assert_eq!(h.home_ack.unwrap() - h.address_ready.unwrap(), 2 * MS);
    let after = r.probes[0].window(h.unicast_restored.unwrap() + 100 * MS, roamsim::time::SimTime(7 * SEC));
    assert_eq!(after.lost, 0);
    assert!(after.received_unique > 100);
}

#[test]
fn correspondent_acknowledgement_adds_half_a_roundtrip() {
    let base = fixture_text("stretched-x1.scn");
    let plain = run(&Scenario::parse(&base).unwrap(), 5);
    let acked = run(&Scenario::parse(&format!("{base}\nset cn_ack=true\n")).unwrap(), 5);
    let (p, a) = (&plain.handovers[0], &acked.handovers[0]);
    let extra = a.unicast_disruption().unwrap() - a.local().unwrap() - (p.unicast_disruption().unwrap() - p.local().unwrap());
    assert_eq!(extra, 12 * MS);
}

#[test]
fn unreachable_home_agent_exhausts_retransmissions() {
    let text = format!(
        "{}\nset bu_retransmit=200ms bu_tries=3\ncut 1s edge ha\n",
        fixture_text("stretched-x1.scn")
    );
    let r = run(&Scenario::parse(&text).unwrap(), 1);
    let h = &r.handovers[0];
    assert!(h.address_ready.is_some());
    assert!(h.home_ack.is_none());
    assert!(h.unicast_restored.is_none());
    assert_eq!(r.counters.retransmissions, 2);
    assert_eq!(r.counters.abandoned_updates, 1);
}

#[test]
fn packets_are_conserved_and_checksums_hold() {
    for f in ["fig1.scn", "geometry.scn", "stretched-x4.scn", "fig5-receiver.scn"] {
        let r = run(&fixture(f), 17);
        assert_eq!(r.counters.checksum_failures, 0, "{f}");
        for p in &r.probes {
            let s = p.stats();
            assert_eq!(s.received_unique + s.lost, s.sent, "{f}");
            assert!(s.sent > 0);
        }
    }
}

#[test]
fn exact_links_carry_no_jitter() {
    let sc = fixture("geometry.scn");
    let r = run(&sc, 9);
    let before = r.probes[0].window(roamsim::time::SimTime(0), r.handovers[0].at);
    assert!(before.received_unique > 50);
    assert_eq!(before.jitter_mad, 0.0);
}

#[test]
fn shuffling_keeps_the_previous_anchor_until_release() {
    let r = run(&fixture("fig5-receiver.scn"), 4);
    for h in &r.handovers {
        assert!(h.previous_anchor.is_some());
        let restored = h.unicast_restored.unwrap();
        let released = h.previous_released.unwrap();
        assert!(released > restored);
    }
}
