mod common;

use common::{data, scenario};
use factsched::netmodel::{load_device_config, load_profiles, parse_matpower_case, write_matpower_case, BusKind, DeviceKind};

#[test]
fn nine_bus_case_and_devices() {
    let net = parse_matpower_case(&data("case9.m")).unwrap();
    assert_eq!((net.buses.len(), net.lines.len(), net.gens.len()), (9, 9, 3));
    assert_eq!(net.buses.iter().filter(|b| b.kind == BusKind::Slack).count(), 1);
    let devices = load_device_config(&data("case9_devices.toml"), &net).unwrap();
    assert_eq!(devices.len(), 4);
    let kinds: Vec<&str> = devices.iter().map(|d| d.kind.name()).collect();
    assert_eq!(kinds, ["shunt", "statcom", "oltc", "tcsc"]);
    let oltc = devices.iter().find(|d| d.is_oltc()).unwrap();
    // the tap grid contains the unity ratio and starts there
    let unity = (1..=oltc.grid_len()).find(|&n| (oltc.tap_ratio(n).unwrap() - 1.0).abs() < 1e-12);
    assert_eq!(unity, Some(oltc.initial.tap));
}

#[test]
fn bundled_profiles_cover_their_horizons() {
    let nine = parse_matpower_case(&data("case9.m")).unwrap();
    assert_eq!(load_profiles(&data("case9_profile.csv"), &nine).unwrap().periods(), 24);
    let thirty = parse_matpower_case(&data("case30.m")).unwrap();
    assert_eq!(thirty.buses.len(), 30);
    assert_eq!(load_profiles(&data("case30_profile.csv"), &thirty).unwrap().periods(), 12);
}

#[test]
fn demand_follows_multipliers() {
    let sc = scenario("case9.m", None, "case9_profile.csv", 24, 1);
    let net = &sc.network;
    let bus5 = net.bus_by_ext(5).unwrap();
    assert!((sc.demand.p[0][bus5] - 0.6499 * net.buses[bus5].base_demand_p).abs() < 1e-12);
    // buses without a profile row keep their base demand
    let bus1 = net.bus_by_ext(1).unwrap();
    assert!(sc.demand.p.iter().all(|row| row[bus1] == net.buses[bus1].base_demand_p));
}

#[test]
fn written_case_parses_back_identically() {
    for case in ["case9.m", "case30.m", "toy3.m"] {
        let net = parse_matpower_case(&data(case)).unwrap();
        assert_eq!(parse_matpower_case(&write_matpower_case(&net)).unwrap(), net, "{case}");
    }
}

#[test]
fn tcsc_hosts_resolve_to_lines() {
    let net = parse_matpower_case(&data("case30.m")).unwrap();
    let devices = load_device_config(&data("case30_devices.toml"), &net).unwrap();
    let tcsc = devices.iter().find_map(|d| match d.kind {
        DeviceKind::Tcsc { line, x_line } => Some((line, x_line)),
        _ => None,
    });
    let (line, x_line) = tcsc.unwrap();
    assert_eq!(Some(line), net.line_by_ext(2, 6));
    assert_eq!(x_line, net.lines[line].x);
}
