//! Scenario description and its line-oriented text format.
//!
//! See `docs/scenario-format.md` for the grammar.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::net::Ipv6Addr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::addr::Addr;
use crate::config::{BicastMode, Detection, MulticastMode, Span, Timers, Variant};
use crate::time::{Micros, SimTime, MS, SEC};
use crate::topology::{LinkParams, NodeId, NodeKind, Topology};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MobileSpec {
    pub node: NodeId,
    pub home: NodeId,
    pub start: NodeId,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbeSpec {
    pub from: NodeId,
    pub to: NodeId,
    pub interval: Micros,
    pub start: SimTime,
    pub stop: SimTime,
    pub size: u16,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupSpec {
    pub group: Addr,
    pub sender: NodeId,
    pub listeners: Vec<NodeId>,
    pub interval: Micros,
    pub start: SimTime,
    pub stop: SimTime,
    pub size: u16,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub seed: u64,
    pub trials: u32,
    pub duration: Micros,
    pub variant: Variant,
    pub multicast: MulticastMode,
    pub timers: Timers,
    pub topology: Topology,
    pub mobile: Option<MobileSpec>,
    pub moves: Vec<(SimTime, NodeId)>,
    pub cuts: Vec<(SimTime, NodeId, NodeId)>,
    pub probes: Vec<ProbeSpec>,
    pub groups: Vec<GroupSpec>,
}

impl Scenario {
    /// A scenario over `topology` with default settings and no traffic.
    /// Routes are computed here.
    pub fn new(mut topology: Topology) -> Self {
        topology.compute_routes();
        Scenario {
            seed: 1,
            trials: 1,
            duration: 10 * SEC,
            variant: Variant::Mipv6,
            multicast: MulticastMode::MHmipv6,
            timers: Timers::default(),
            topology,
            mobile: None,
            moves: Vec::new(),
            cuts: Vec::new(),
            probes: Vec::new(),
            groups: Vec::new(),
        }
    }

    /// Nodes other than the mobile node.
    pub fn fixed_node_count(&self) -> usize {
        self.topology
            .nodes()
            .iter()
            .filter(|n| n.kind != NodeKind::MobileNode)
            .count()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Scenario, ScenarioError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| ScenarioError::Io(format!("{}: {e}", path.as_ref().display())))?;
        Scenario::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Scenario, ScenarioError> {
        Parser::default().run(text)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Problem {
    Parse,
    Validation,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    /// 1-based line number, 0 for whole-file problems.
    pub line: usize,
    pub problem: Problem,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.message)
        } else {
            write!(f, "line {}: {}", self.line, self.message)
        }
    }
}

fn render(list: &[Diagnostic]) -> String {
    list.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("; ")
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("parse error: {}", render(.0))]
    Parse(Vec<Diagnostic>),
    #[error("invalid scenario: {}", render(.0))]
    Validation(Vec<Diagnostic>),
    #[error("cannot read scenario: {0}")]
    Io(String),
}

impl ScenarioError {
    pub fn diagnostics(&self) -> &[Diagnostic] {
        match self {
            ScenarioError::Parse(d) | ScenarioError::Validation(d) => d,
            ScenarioError::Io(_) => &[],
        }
    }
}

/// A parsed scalar that may still fail validation.
enum Value<T> {
    Ok(T),
    Negative,
}

/// Parses `15ms`, `1.5s`, `250us` or a bare microsecond count.
pub fn parse_duration(s: &str) -> Result<Micros, String> {
    match parse_signed_duration(s)? {
        Value::Ok(v) => Ok(v),
        Value::Negative => Err(format!("negative duration `{s}`")),
    }
}

fn parse_signed_duration(s: &str) -> Result<Value<Micros>, String> {
    let (num, scale) = if let Some(n) = s.strip_suffix("us") {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix("ms") {
        (n, MS as f64)
    } else if let Some(n) = s.strip_suffix('s') {
        (n, SEC as f64)
    } else {
        (s, 1.0)
    };
    let v: f64 = num
        .parse()
        .map_err(|_| format!("bad duration `{s}`"))?;
    if !v.is_finite() {
        return Err(format!("bad duration `{s}`"));
    }
    if v < 0.0 {
        return Ok(Value::Negative);
    }
    Ok(Value::Ok((v * scale).round() as Micros))
}

/// Parses `a..b` or a single duration.
pub fn parse_span(s: &str) -> Result<Span, String> {
    match s.split_once("..") {
        Some((a, b)) => {
            let (lo, hi) = (parse_duration(a)?, parse_duration(b)?);
            if lo > hi {
                return Err(format!("empty range `{s}`"));
            }
            Ok(Span::new(lo, hi))
        }
        None => Ok(Span::fixed(parse_duration(s)?)),
    }
}

fn parse_bool(s: &str) -> Result<bool, String> {
    match s {
        "true" | "on" | "yes" => Ok(true),
        "false" | "off" | "no" => Ok(false),
        _ => Err(format!("bad boolean `{s}`")),
    }
}

struct Line<'a> {
    no: usize,
    words: Vec<&'a str>,
}

impl<'a> Line<'a> {
    /// `key=value` pairs following the first `skip` words.
    fn pairs(&self, skip: usize) -> Result<BTreeMap<&'a str, &'a str>, String> {
        let mut out = BTreeMap::new();
        for w in self.words.iter().skip(skip) {
            let (k, v) = w
                .split_once('=')
                .ok_or_else(|| format!("expected key=value, found `{w}`"))?;
            if out.insert(k, v).is_some() {
                return Err(format!("duplicate key `{k}`"));
            }
        }
        Ok(out)
    }
}

#[derive(Default)]
struct Parser {
    diags: Vec<Diagnostic>,
}

struct NodeDecl<'a> {
    line: usize,
    name: &'a str,
    kind: NodeKind,
    map: Option<&'a str>,
    radio: Option<Micros>,
    eps: f64,
}

impl Parser {
    fn parse_err(&mut self, line: usize, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            line,
            problem: Problem::Parse,
            message: message.into(),
        });
    }

    fn invalid(&mut self, line: usize, message: impl Into<String>) {
        self.diags.push(Diagnostic {
            line,
            problem: Problem::Validation,
            message: message.into(),
        });
    }

    fn duration(&mut self, line: usize, what: &str, s: &str) -> Option<Micros> {
        match parse_signed_duration(s) {
            Ok(Value::Ok(v)) => Some(v),
            Ok(Value::Negative) => {
                self.invalid(line, format!("{what} must not be negative"));
                None
            }
            Err(e) => {
                self.parse_err(line, e);
                None
            }
        }
    }

    fn run(mut self, text: &str) -> Result<Scenario, ScenarioError> {
        let lines: Vec<Line> = text
            .lines()
            .enumerate()
            .map(|(i, raw)| {
                let body = raw.split('#').next().unwrap_or("");
                Line {
                    no: i + 1,
                    words: body.split_whitespace().collect(),
                }
            })
            .filter(|l| !l.words.is_empty())
            .collect();

        let mut topo = Topology::new();
        let mut names: BTreeMap<String, NodeId> = BTreeMap::new();
        let mut decls = Vec::new();
        let mut mobile_line = None;

        // nodes first so that later lines may reference any of them
        for l in &lines {
            match l.words[0] {
                "node" => {
                    if let Some(d) = self.node_decl(l) {
                        if names.contains_key(d.name) {
                            self.invalid(l.no, format!("duplicate node `{}`", d.name));
                            continue;
                        }
                        let id = topo.add_node(d.name, d.kind);
                        names.insert(d.name.to_string(), id);
                        decls.push(d);
                    }
                }
                "mobile" => {
                    if mobile_line.is_some() {
                        self.invalid(l.no, "only one mobile node is supported");
                        continue;
                    }
                    match l.words.get(1) {
                        Some(name) if !name.contains('=') => {
                            if names.contains_key(*name) {
                                self.invalid(l.no, format!("duplicate node `{name}`"));
                                continue;
                            }
                            let id = topo.add_node(*name, NodeKind::MobileNode);
                            names.insert(name.to_string(), id);
                            mobile_line = Some(l);
                        }
                        _ => self.parse_err(l.no, "expected `mobile <name> home=<ha> start=<ap>`"),
                    }
                }
                _ => {}
            }
        }

        let lookup = |p: &mut Parser, line: usize, name: &str| -> Option<NodeId> {
            let id = names.get(name).copied();
            if id.is_none() {
                p.invalid(line, format!("unknown node `{name}`"));
            }
            id
        };

        for d in &decls {
            let id = names[d.name];
            let radio = match (d.radio, d.kind) {
                (Some(r), _) => Some(r),
                (None, NodeKind::AccessPoint) => Some(MS),
                _ => None,
            };
            if let Some(r) = radio {
                match LinkParams::new(r, d.eps) {
                    Ok(p) => {
                        let _ = topo.set_radio(id, p);
                    }
                    Err(e) => self.invalid(d.line, format!("radio: {e}")),
                }
            }
            if let Some(m) = d.map {
                if let Some(mid) = lookup(&mut self, d.line, m) {
                    if topo.kind(mid) != Some(NodeKind::Map) {
                        self.invalid(d.line, format!("`{m}` is not a map"));
                    } else {
                        let _ = topo.set_domain(id, mid);
                    }
                }
            }
        }

        let mut sc = Scenario::new(Topology::new());
        let mut seen_moves: Vec<(usize, SimTime, NodeId)> = Vec::new();

        for l in &lines {
            let no = l.no;
            match l.words[0] {
                "node" | "mobile" => {}
                "seed" | "trials" => {
                    let Some(v) = l.words.get(1).and_then(|w| w.parse::<u64>().ok()) else {
                        self.parse_err(no, format!("expected `{} <integer>`", l.words[0]));
                        continue;
                    };
                    if l.words[0] == "seed" {
                        sc.seed = v;
                    } else if v == 0 || v > u32::MAX as u64 {
                        self.invalid(no, "trials must be between 1 and 2^32-1");
                    } else {
                        sc.trials = v as u32;
                    }
                }
                "duration" => match l.words.get(1) {
                    Some(w) => {
                        if let Some(d) = self.duration(no, "duration", w) {
                            if d == 0 {
                                self.invalid(no, "duration must be positive");
                            }
                            sc.duration = d;
                        }
                    }
                    None => self.parse_err(no, "expected `duration <time>`"),
                },
                "variant" => match l.words.get(1).and_then(|w| Variant::parse(w)) {
                    Some(v) => sc.variant = v,
                    None => self.parse_err(no, "expected `variant mipv6|hmipv6|hmipv6-shuffling`"),
                },
                "multicast" => match l.words.get(1).and_then(|w| MulticastMode::parse(w)) {
                    Some(m) => sc.multicast = m,
                    None => self.parse_err(
                        no,
                        "expected `multicast m-hmipv6|bidirectional-tunnelling|remote-subscription`",
                    ),
                },
                "set" => match l.pairs(1) {
                    Ok(p) => {
                        for (k, v) in p {
                            if let Err(e) = apply_setting(&mut sc.timers, k, v) {
                                match e {
                                    SettingError::Parse(m) => self.parse_err(no, m),
                                    SettingError::Invalid(m) => self.invalid(no, m),
                                }
                            }
                        }
                    }
                    Err(e) => self.parse_err(no, e),
                },
                "link" => {
                    if l.words.len() < 3 {
                        self.parse_err(no, "expected `link <a> <b> latency=<time> [eps=<x>]`");
                        continue;
                    }
                    let p = match l.pairs(3) {
                        Ok(p) => p,
                        Err(e) => {
                            self.parse_err(no, e);
                            continue;
                        }
                    };
                    let a = lookup(&mut self, no, l.words[1]);
                    let b = lookup(&mut self, no, l.words[2]);
                    let latency = match p.get("latency") {
                        Some(v) => self.duration(no, "link latency", v),
                        None => {
                            self.parse_err(no, "link needs latency=");
                            None
                        }
                    };
                    let eps = match p.get("eps").map(|v| v.parse::<f64>()) {
                        None => Some(0.0),
                        Some(Ok(e)) => Some(e),
                        Some(Err(_)) => {
                            self.parse_err(no, "bad eps");
                            None
                        }
                    };
                    for k in p.keys().filter(|k| !matches!(**k, "latency" | "eps")) {
                        self.parse_err(no, format!("unknown link attribute `{k}`"));
                    }
                    if let (Some(a), Some(b), Some(lat), Some(eps)) = (a, b, latency, eps) {
                        if a == b {
                            self.invalid(no, "link endpoints must differ");
                            continue;
                        }
                        match LinkParams::new(lat, eps) {
                            Ok(params) => {
                                if let Err(e) = topo.add_link(a, b, params) {
                                    self.invalid(no, e.to_string());
                                }
                            }
                            Err(e) => self.invalid(no, e.to_string()),
                        }
                    }
                }
                "move" => {
                    if l.words.len() != 3 {
                        self.parse_err(no, "expected `move <time> <access-point>`");
                        continue;
                    }
                    let t = self.duration(no, "move time", l.words[1]);
                    let ap = lookup(&mut self, no, l.words[2]);
                    if let (Some(t), Some(ap)) = (t, ap) {
                        if topo.radio(ap).is_err() {
                            self.invalid(no, format!("`{}` is not an attachment point", l.words[2]));
                        }
                        if let Some((_, prev, _)) = seen_moves.last() {
                            if SimTime(t) <= *prev {
                                self.invalid(no, "mobility script times must be strictly increasing (non-increasing move)");
                            }
                        }
                        seen_moves.push((no, SimTime(t), ap));
                    }
                }
                "cut" => {
                    if l.words.len() != 4 {
                        self.parse_err(no, "expected `cut <time> <a> <b>`");
                        continue;
                    }
                    let t = self.duration(no, "cut time", l.words[1]);
                    let a = lookup(&mut self, no, l.words[2]);
                    let b = lookup(&mut self, no, l.words[3]);
                    if let (Some(t), Some(a), Some(b)) = (t, a, b) {
                        sc.cuts.push((SimTime(t), a, b));
                    }
                }
                "probe" => {
                    if let Some(p) = self.probe(l, &names) {
                        sc.probes.push(p);
                    }
                }
                "group" => {
                    if let Some(g) = self.group(l, &names) {
                        sc.groups.push(g);
                    }
                }
                other => self.parse_err(no, format!("unknown directive `{other}`")),
            }
        }

        if let Some(l) = mobile_line {
            let mn = names[l.words[1]];
            match l.pairs(2) {
                Ok(p) => {
                    let home = p.get("home").and_then(|h| lookup(&mut self, l.no, h));
                    let start = p.get("start").and_then(|s| lookup(&mut self, l.no, s));
                    match (home, start) {
                        (Some(home), Some(start)) => {
                            if topo.kind(home) != Some(NodeKind::HomeAgent) {
                                self.invalid(l.no, "home must be a home-agent node");
                            }
                            if topo.radio(start).is_err() {
                                self.invalid(l.no, "start must be an attachment point");
                            } else {
                                let _ = topo.attach(mn, start);
                            }
                            sc.mobile = Some(MobileSpec {
                                node: mn,
                                home,
                                start,
                            });
                        }
                        _ => self.parse_err(l.no, "mobile needs home= and start="),
                    }
                }
                Err(e) => self.parse_err(l.no, e),
            }
        }
        if !seen_moves.is_empty() && sc.mobile.is_none() {
            self.invalid(seen_moves[0].0, "move without a mobile node");
        }
        sc.moves = seen_moves.iter().map(|(_, t, ap)| (*t, *ap)).collect();

        topo.compute_routes();
        if let Err(e) = topo.check_connected() {
            self.invalid(0, e.to_string());
        }
        sc.topology = topo;

        if self.diags.iter().any(|d| d.problem == Problem::Parse) {
            return Err(ScenarioError::Parse(self.diags));
        }
        if !self.diags.is_empty() {
            return Err(ScenarioError::Validation(self.diags));
        }
        Ok(sc)
    }

    fn node_decl<'a>(&mut self, l: &Line<'a>) -> Option<NodeDecl<'a>> {
        let name = match l.words.get(1) {
            Some(n) if !n.contains('=') => *n,
            _ => {
                self.parse_err(l.no, "expected `node <name> kind=<kind>`");
                return None;
            }
        };
        let p = match l.pairs(2) {
            Ok(p) => p,
            Err(e) => {
                self.parse_err(l.no, e);
                return None;
            }
        };
        let kind = match p.get("kind").map(|k| NodeKind::parse(k)) {
            Some(Some(NodeKind::MobileNode)) => {
                self.parse_err(l.no, "declare mobile nodes with `mobile`");
                return None;
            }
            Some(Some(k)) => k,
            Some(None) => {
                self.parse_err(l.no, format!("unknown node kind `{}`", p["kind"]));
                return None;
            }
            None => {
                self.parse_err(l.no, "node needs kind=");
                return None;
            }
        };
        for k in p.keys().filter(|k| !matches!(**k, "kind" | "map" | "radio" | "eps")) {
            self.parse_err(l.no, format!("unknown node attribute `{k}`"));
        }
        let radio = match p.get("radio") {
            Some(r) => Some(self.duration(l.no, "radio latency", r)?),
            None => None,
        };
        let eps = match p.get("eps").map(|e| e.parse::<f64>()) {
            None => 0.0,
            Some(Ok(e)) => e,
            Some(Err(_)) => {
                self.parse_err(l.no, "bad eps");
                return None;
            }
        };
        Some(NodeDecl {
            line: l.no,
            name,
            kind,
            map: p.get("map").copied(),
            radio,
            eps,
        })
    }

    fn window(
        &mut self,
        no: usize,
        p: &BTreeMap<&str, &str>,
        default_interval: Micros,
    ) -> Option<(Micros, SimTime, SimTime, u16)> {
        let interval = match p.get("interval") {
            Some(v) => self.duration(no, "interval", v)?,
            None => default_interval,
        };
        if interval == 0 {
            self.invalid(no, "interval must be positive");
            return None;
        }
        let start = match p.get("start") {
            Some(v) => self.duration(no, "start", v)?,
            None => 0,
        };
        let stop = match p.get("stop") {
            Some(v) => self.duration(no, "stop", v)?,
            None => u64::MAX,
        };
        let size = match p.get("size").map(|s| s.parse::<u16>()) {
            None => 32,
            Some(Ok(s)) => s,
            Some(Err(_)) => {
                self.parse_err(no, "bad size");
                return None;
            }
        };
        Some((interval, SimTime(start), SimTime(stop), size))
    }

    fn probe(&mut self, l: &Line, names: &BTreeMap<String, NodeId>) -> Option<ProbeSpec> {
        let p = match l.pairs(1) {
            Ok(p) => p,
            Err(e) => {
                self.parse_err(l.no, e);
                return None;
            }
        };
        for k in p
            .keys()
            .filter(|k| !matches!(**k, "from" | "to" | "interval" | "start" | "stop" | "size"))
        {
            self.parse_err(l.no, format!("unknown probe attribute `{k}`"));
        }
        let node = |this: &mut Parser, key: &str| -> Option<NodeId> {
            let Some(n) = p.get(key) else {
                this.parse_err(l.no, format!("probe needs {key}="));
                return None;
            };
            let id = names.get(*n).copied();
            if id.is_none() {
                this.invalid(l.no, format!("unknown node `{n}`"));
            }
            id
        };
        let from = node(self, "from");
        let to = node(self, "to");
        let (interval, start, stop, size) = self.window(l.no, &p, 15 * MS)?;
        let (from, to) = (from?, to?);
        if from == to {
            self.invalid(l.no, "probe endpoints must differ");
        }
        Some(ProbeSpec {
            from,
            to,
            interval,
            start,
            stop,
            size,
        })
    }

    fn group(&mut self, l: &Line, names: &BTreeMap<String, NodeId>) -> Option<GroupSpec> {
        let Some(addr) = l.words.get(1) else {
            self.parse_err(l.no, "expected `group <address> sender=<node> listeners=<a,b>`");
            return None;
        };
        let group = match addr.parse::<Ipv6Addr>() {
            Ok(ip) => Addr::from(ip),
            Err(_) => {
                self.parse_err(l.no, format!("bad address `{addr}`"));
                return None;
            }
        };
        if !group.is_multicast() {
            self.invalid(l.no, format!("`{addr}` is not a multicast address"));
        }
        let p = match l.pairs(2) {
            Ok(p) => p,
            Err(e) => {
                self.parse_err(l.no, e);
                return None;
            }
        };
        for k in p.keys().filter(|k| {
            !matches!(
                **k,
                "sender" | "listeners" | "interval" | "start" | "stop" | "size"
            )
        }) {
            self.parse_err(l.no, format!("unknown group attribute `{k}`"));
        }
        let resolve = |this: &mut Parser, n: &str| -> Option<NodeId> {
            let id = names.get(n).copied();
            if id.is_none() {
                this.invalid(l.no, format!("unknown node `{n}`"));
            }
            id
        };
        let sender = match p.get("sender") {
            Some(s) => resolve(self, s),
            None => {
                self.parse_err(l.no, "group needs sender=");
                None
            }
        };
        let mut listeners = Vec::new();
        let mut seen = HashSet::new();
        for n in p.get("listeners").copied().unwrap_or("").split(',').filter(|s| !s.is_empty()) {
            if let Some(id) = resolve(self, n) {
                if seen.insert(id) {
                    listeners.push(id);
                }
            }
        }
        let (interval, start, stop, size) = self.window(l.no, &p, 20 * MS)?;
        Some(GroupSpec {
            group,
            sender: sender?,
            listeners,
            interval,
            start,
            stop,
            size,
        })
    }
}

enum SettingError {
    Parse(String),
    Invalid(String),
}

impl From<String> for SettingError {
    fn from(s: String) -> Self {
        if s.starts_with("negative") {
            SettingError::Invalid(s)
        } else {
            SettingError::Parse(s)
        }
    }
}

/// Applies one `set key=value` pair.
pub fn apply_setting_str(t: &mut Timers, key: &str, value: &str) -> Result<(), String> {
    apply_setting(t, key, value).map_err(|e| match e {
        SettingError::Parse(m) | SettingError::Invalid(m) => m,
    })
}

fn apply_setting(t: &mut Timers, key: &str, value: &str) -> Result<(), SettingError> {
    match key {
        "detection" => {
            t.detection = match value {
                "ra" => Detection::RouterAdvert,
                "l2-trigger" => Detection::L2Trigger,
                _ => return Err(SettingError::Parse(format!("bad detection `{value}`"))),
            }
        }
        "ra_interval" => {
            t.ra_interval = parse_span(value)?;
            if t.ra_interval.hi == 0 {
                return Err(SettingError::Invalid("ra_interval must be positive".into()));
            }
        }
        "rs_delay" => t.rs_delay = parse_duration(value)?,
        "ra_delay" => t.ra_delay = parse_duration(value)?,
        "handshake" => t.handshake = parse_duration(value)?,
        "readdress" => t.readdress = parse_span(value)?,
        "l2_delay" => t.l2_delay = parse_span(value)?,
        "bu_retransmit" => t.bu_retransmit = parse_duration(value)?,
        "bu_tries" => {
            t.bu_tries = value
                .parse()
                .map_err(|_| SettingError::Parse(format!("bad bu_tries `{value}`")))?
        }
        "dual_lifetime" => t.dual_lifetime = parse_duration(value)?,
        "cn_ack" => t.cn_ack = parse_bool(value)?,
        "route_optimization" => t.route_optimization = parse_bool(value)?,
        "join_delay" => t.join_delay = parse_duration(value)?,
        "tree_delay" => t.tree_delay = parse_duration(value)?,
        "t_bicast" => t.t_bicast = Some(parse_duration(value)?),
        "bicast_mode" => {
            t.bicast_mode = match value {
                "bicast" => BicastMode::Bicast,
                "probe" => BicastMode::Probe,
                _ => return Err(SettingError::Parse(format!("bad bicast_mode `{value}`"))),
            }
        }
        "empty_probe_interval" => {
            t.empty_probe_interval = parse_duration(value)?;
            if t.empty_probe_interval == 0 {
                return Err(SettingError::Invalid("empty_probe_interval must be positive".into()));
            }
        }
        _ => return Err(SettingError::Parse(format!("unknown setting `{key}`"))),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const SMALL: &str = "
        seed 7
        trials 3
        duration 2s
        variant hmipv6-shuffling
        set readdress=1.5ms l2_delay=40ms..50ms detection=l2-trigger
        node r kind=router
        node ha kind=home-agent
        node m1 kind=map
        node ap1 kind=access-point map=m1 radio=500us
        node ap2 kind=access-point
        link r ha latency=5ms
        link r m1 latency=2ms eps=0.1
        link m1 ap1 latency=1ms
        link r ap2 latency=1000   # bare microseconds
        mobile mn home=ha start=ap1
        move 1s ap2
        probe from=mn to=ha interval=15ms stop=1.9s
    ";

    #[test]
    fn parses_small_scenario() {
        let sc = Scenario::parse(SMALL).unwrap();
        assert_eq!((sc.seed, sc.trials, sc.duration), (7, 3, 2 * SEC));
        assert_eq!(sc.variant, Variant::Shuffling);
        assert_eq!(sc.timers.readdress, Span::fixed(1_500));
        assert_eq!(sc.timers.l2_delay, Span::new(40 * MS, 50 * MS));
        assert_eq!(sc.fixed_node_count(), 5);
        let ap1 = sc.topology.find("ap1").unwrap();
        assert_eq!(sc.topology.radio(ap1).unwrap().latency, 500);
        assert_eq!(sc.topology.node(ap1).unwrap().map_domain, sc.topology.find("m1"));
        let ap2 = sc.topology.find("ap2").unwrap();
        assert_eq!(sc.topology.radio(ap2).unwrap().latency, MS);
        assert_eq!(sc.moves, vec![(SimTime(SEC), ap2)]);
        assert_eq!(sc.probes[0].stop, SimTime(1_900_000));
        let ha = sc.topology.find("ha").unwrap();
        assert_eq!(sc.topology.static_delay(ha, ap2).unwrap(), 6 * MS);
    }

    #[test]
    fn negative_latency_is_a_validation_error() {
        let text = SMALL.replace("latency=5ms", "latency=-1");
        match Scenario::parse(&text) {
            Err(ScenarioError::Validation(d)) => {
                assert!(d.iter().any(|d| d.line == 12 && d.message.contains("negative")))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn non_increasing_moves_rejected() {
        let text = format!("{SMALL}\nmove 10s ap1\nmove 5s ap2\n");
        match Scenario::parse(&text) {
            Err(ScenarioError::Validation(d)) => {
                assert!(d.iter().any(|d| d.message.contains("non-increasing")))
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn errors_are_aggregated_with_lines() {
        let text = "node a kind=router\nbogus 1\nlink a nowhere latency=1ms\nnode b kind=spaceship\n";
        match Scenario::parse(text) {
            Err(ScenarioError::Parse(d)) => {
                let lines: Vec<usize> = d.iter().map(|d| d.line).collect();
                assert!(lines.contains(&2) && lines.contains(&3) && lines.contains(&4), "{d:?}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn durations() {
        assert_eq!(parse_duration("15ms"), Ok(15_000));
        assert_eq!(parse_duration("1.5s"), Ok(1_500_000));
        assert_eq!(parse_duration("250us"), Ok(250));
        assert_eq!(parse_duration("42"), Ok(42));
        assert!(parse_duration("fast").is_err());
        assert!(parse_span("5ms..1ms").is_err());
    }
}
