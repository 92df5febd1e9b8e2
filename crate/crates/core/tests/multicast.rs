use roamsim::report::{HandoverKind, TrialResult};
use roamsim::scenario::Scenario;
use roamsim::time::{Micros, MS, SEC};
use roamsim::world::simulate;

fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(format!("{}/../../fixtures/{name}", env!("CARGO_MANIFEST_DIR"))).unwrap()
}

fn run(text: &str) -> TrialResult {
    simulate(&Scenario::parse(text).unwrap(), 0, 7).unwrap()
}

/// Receiver scenario with the home agent `scale` times further away.
fn receiver(mode: &str, scale: u64) -> String {
    format!(
        "
seed 3
duration 20s
variant hmipv6
multicast {mode}
set detection=l2-trigger readdress=2ms join_delay=2s tree_delay=2s
node core kind=router
node ha   kind=home-agent
node src  kind=multicast-router
node m1   kind=map
node m2   kind=map
node ap1  kind=access-point map=m1 radio=1ms
node ap2  kind=access-point map=m2 radio=1ms
node ap3  kind=access-point map=m2 radio=1ms
link core ha  latency={}ms
link core src latency=6ms
link core m1  latency=5ms
link core m2  latency=5ms
link m1 ap1   latency=1ms
link m2 ap2   latency=1ms
link m2 ap3   latency=2ms
mobile mn home=ha start=ap1
move 5s ap2
move 12s ap3
group ff0e::1:9 sender=src listeners=mn interval=20ms start=1s stop=19s
",
        10 * scale
    )
}

#[test]
fn remote_subscription_waits_for_the_local_join() {
    let r = run(&receiver("remote-subscription", 1));
    let h = &r.handovers[0];
    let wait = h.group_disruption().unwrap() - h.local().unwrap();
    assert!((2 * SEC..2 * SEC + 100 * MS).contains(&wait), "{wait}");
    let log = r.groups[0].values().next().unwrap();
    let lost = log.window(h.at, h.group_restored.unwrap()).lost;
    assert!(lost as Micros * 20 * MS >= 2 * SEC);
}

#[test]
fn bidirectional_tunnelling_scales_with_the_home_distance() {
    let d: Vec<Micros> = [1, 2, 4]
        .iter()
        .map(|&s| {
            let h = &run(&receiver("bidirectional-tunnelling", s)).handovers[0];
            h.group_disruption().unwrap() - h.local().unwrap()
        })
        .collect();
    assert!(d.windows(2).all(|w| w[1] > w[0]), "{d:?}");
    assert!(d[0] < SEC);
}

#[test]
fn anchored_reception_is_independent_of_the_home_distance() {
    let near = run(&receiver("m-hmipv6", 1));
    let far = run(&receiver("m-hmipv6", 4));
    for (a, b) in near.handovers.iter().zip(&far.handovers) {
        assert_eq!(a.group_disruption(), b.group_disruption());
    }
}

#[test]
fn intra_domain_moves_are_transparent_to_the_group() {
    let r = run(&receiver("m-hmipv6", 1));
    let h = &r.handovers[1];
    assert_eq!(h.kind, Some(HandoverKind::IntraDomain));
    // radio 1ms plus 2ms to the MAP, both ways
    let bound = h.map_ack.unwrap();
    assert_eq!(bound - h.address_ready.unwrap(), 6 * MS);
    // first group packet after the binding, within one send interval plus the MAP leg
    let gap = h.group_restored.unwrap() - bound;
    assert!(gap <= 20 * MS + 3 * MS, "{gap}");
    assert!(h.previous_anchor.is_none());
    let log = r.groups[0].values().next().unwrap();
    assert_eq!(log.window(bound, h.group_restored.unwrap()).lost, 0);
}

#[test]
fn lost_previous_map_falls_back_to_the_new_branch() {
    let text = format!("{}\ncut 10001ms core m1\n", fixture_text("fig5-receiver.scn"));
    let r = run(&text);
    let h = &r.handovers[0];
    let wait = h.group_disruption().expect("group restored") - h.local().unwrap();
    assert!(wait >= 5 * SEC, "{wait}");
    assert!(wait < 6 * SEC, "{wait}");
    assert_eq!(r.counters.checksum_failures, 0);
}

#[test]
fn source_identity_survives_every_move() {
    let r = run(&fixture_text("fig5-source.scn"));
    let ids: std::collections::BTreeSet<_> = r.group_receptions[0].iter().map(|x| x.identity).collect();
    assert_eq!(ids.len(), 1);
    assert!(r.counters.sent_previous_path > 0);
    assert!(r.handovers.iter().all(|h| h.address_ready.is_some()));
}
