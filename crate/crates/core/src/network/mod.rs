//! The space-time-SoC network: nodes carry (location, interval, SoC level),
//! arcs encode depot moves, travel, terminal dwells, short turns and the
//! three charging phases. The graph restricted to time-bearing nodes is a
//! DAG: every arc strictly increases time.

mod transform;

pub use transform::{
    aggregate_super_arcs, compute_soc_bounds, compute_time_bounds, downsize, DownsizeOpts,
    StationBounds,
};

use crate::instance::{Facility, FacilityIdx, Instance, SegmentIdx, StationIdx};

pub type NodeId = u32;
pub type ArcId = u32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    DepotSource { depot: usize },
    DepotSink { depot: usize },
    Station { station: StationIdx, t: u32, e: u16 },
    Charge { facility: FacilityIdx, t: u32, e: u16 },
}

impl Node {
    pub fn time(&self) -> Option<u32> {
        match self {
            Node::Station { t, .. } | Node::Charge { t, .. } => Some(*t),
            _ => None,
        }
    }

    pub fn soc(&self) -> Option<u16> {
        match self {
            Node::Station { e, .. } | Node::Charge { e, .. } => Some(*e),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArcKind {
    LeaveDepot(usize),
    EnterDepot(usize),
    Travel,
    Dwell,
    Turn,
    StartCharge(FacilityIdx),
    Charge(FacilityIdx),
    EndCharge(FacilityIdx),
    SuperTravel,
}

#[derive(Debug, Clone)]
pub struct Arc {
    pub kind: ArcKind,
    pub tail: NodeId,
    pub head: NodeId,
    pub time_len: u32,
    /// SoC change in grid steps; negative on consuming arcs.
    pub soc_delta: i32,
    pub money: f64,
    /// Segment-interval pairs this arc occupies, by entry interval.
    pub covered: Vec<(SegmentIdx, u32)>,
    /// Interior points of an aggregated chain, for expansion back to the
    /// original node sequence.
    pub expansion: Vec<(StationIdx, u32, u16)>,
}

impl Arc {
    pub fn is_travel_like(&self) -> bool {
        matches!(self.kind, ArcKind::Travel | ArcKind::SuperTravel)
    }
}

/// Static geometry shared by the network and its transformations.
#[derive(Debug, Clone)]
pub struct NetMeta {
    pub stations: usize,
    pub horizon: u32,
    pub levels: u16,
    pub full_level: u16,
    pub segments: Vec<(StationIdx, StationIdx)>,
    /// Consumption per segment in grid steps.
    pub seg_soc: Vec<u32>,
    /// Fastest travel time per segment over all departure intervals.
    pub seg_time_min: Vec<u32>,
    pub facilities: Vec<Facility>,
    /// (dispatch station, return station, posts) per depot.
    pub depots: Vec<(StationIdx, StationIdx, u32)>,
    pub terminals: [StationIdx; 2],
    /// (from, to, time, soc steps) short-turn hops at fast facilities.
    pub turn_edges: Vec<(StationIdx, StationIdx, u32, u32)>,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub nodes: Vec<Node>,
    pub arcs: Vec<Arc>,
    /// Outgoing arc ids per node.
    pub out: Vec<Vec<ArcId>>,
    /// Incoming arc counts per node (for cleanup passes).
    pub indeg: Vec<u32>,
    /// Arc ids covering (segment, interval), indexed q * horizon + (t - 1).
    pub seg_index: Vec<Vec<ArcId>>,
    /// Charge arcs at (facility, interval), indexed f * horizon + (t - 1).
    pub charge_index: Vec<Vec<ArcId>>,
    pub depot_source: Vec<NodeId>,
    pub depot_sink: Vec<NodeId>,
    /// Node ids in topological (time) order.
    pub topo: Vec<NodeId>,
    pub meta: NetMeta,
}

impl Network {
    pub fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id as usize]
    }

    pub fn arc(&self, id: ArcId) -> &Arc {
        &self.arcs[id as usize]
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    pub fn seg_arcs(&self, q: SegmentIdx, t: u32) -> &[ArcId] {
        &self.seg_index[q * self.meta.horizon as usize + (t as usize - 1)]
    }

    pub fn charge_arcs(&self, f: FacilityIdx, t: u32) -> &[ArcId] {
        &self.charge_index[f * self.meta.horizon as usize + (t as usize - 1)]
    }

    /// Rebuild adjacency, indexes and the topological order from `nodes`
    /// and `arcs`.
    pub(crate) fn reindex(&mut self) {
        let n = self.nodes.len();
        let horizon = self.meta.horizon as usize;
        self.out = vec![Vec::new(); n];
        self.indeg = vec![0; n];
        self.seg_index = vec![Vec::new(); self.meta.segments.len() * horizon];
        self.charge_index = vec![Vec::new(); self.meta.facilities.len() * horizon];
        for (id, arc) in self.arcs.iter().enumerate() {
            self.out[arc.tail as usize].push(id as ArcId);
            self.indeg[arc.head as usize] += 1;
            for &(q, t) in &arc.covered {
                self.seg_index[q * horizon + (t as usize - 1)].push(id as ArcId);
            }
            if let ArcKind::Charge(f) = arc.kind {
                let t = self.nodes[arc.tail as usize].time().expect("charge tail has time");
                self.charge_index[f * horizon + (t as usize - 1)].push(id as ArcId);
            }
        }
        let mut order: Vec<NodeId> = (0..n as NodeId).collect();
        let key = |id: &NodeId| -> (u32, u32) {
            match self.nodes[*id as usize] {
                Node::DepotSource { .. } => (0, *id),
                Node::Station { t, .. } | Node::Charge { t, .. } => (t + 1, *id),
                Node::DepotSink { .. } => (u32::MAX, *id),
            }
        };
        order.sort_by_key(key);
        self.topo = order;
    }

    /// Structural invariants: SoC conservation within the grid, strictly
    /// increasing time on time-bearing arcs, index consistency.
    pub fn check_invariants(&self) -> Result<(), String> {
        for (id, arc) in self.arcs.iter().enumerate() {
            let tail = self.node(arc.tail);
            let head = self.node(arc.head);
            if let (Some(te), Some(he)) = (tail.soc(), head.soc()) {
                if he as i64 != te as i64 + arc.soc_delta as i64 {
                    return Err(format!("arc {id}: SoC not conserved"));
                }
                if he as usize >= self.meta.levels as usize {
                    return Err(format!("arc {id}: head SoC off grid"));
                }
            }
            if let (Some(tt), Some(ht)) = (tail.time(), head.time()) {
                if ht != tt + arc.time_len {
                    return Err(format!("arc {id}: time length inconsistent"));
                }
                if arc.time_len == 0 {
                    return Err(format!("arc {id}: zero-length arc between timed nodes"));
                }
                if ht > self.meta.horizon {
                    return Err(format!("arc {id}: head beyond horizon"));
                }
            }
            if arc.is_travel_like() {
                if arc.soc_delta > 0 {
                    return Err(format!("arc {id}: travel arc gains SoC"));
                }
                if arc.time_len < 1 {
                    return Err(format!("arc {id}: travel arc too short"));
                }
            }
            if matches!(arc.kind, ArcKind::Charge(_)) && arc.soc_delta <= 0 {
                return Err(format!("arc {id}: charge arc must gain SoC"));
            }
            if matches!(arc.kind, ArcKind::Dwell) && arc.soc_delta != 0 {
                return Err(format!("arc {id}: dwell arc changes SoC"));
            }
        }
        // every covered pair appears exactly once in the segment index
        let horizon = self.meta.horizon as usize;
        for (slot, arcs) in self.seg_index.iter().enumerate() {
            let q = slot / horizon;
            let t = (slot % horizon + 1) as u32;
            for &a in arcs {
                let count = self.arc(a).covered.iter().filter(|&&(aq, at)| aq == q && at == t).count();
                if count != 1 {
                    return Err(format!("arc {a}: covers ({q},{t}) {count} times"));
                }
            }
        }
        Ok(())
    }
}

/// Instantiate every node and arc family over the full grids.
pub fn build_network(inst: &Instance) -> Network {
    let disc = &inst.discretization;
    let horizon = disc.horizon as u32;
    let levels = disc.soc_levels() as u16;
    let full_level = disc.full_level() as u16;
    let stations = inst.station_count();
    let segments = inst.segments();
    let facilities = inst.facilities();

    let seg_soc: Vec<u32> = (0..segments.len())
        .map(|q| inst.segment_soc_steps(q))
        .collect();
    let seg_time_min: Vec<u32> = (0..segments.len())
        .map(|q| inst.segment_time_min(q))
        .collect();
    let depots: Vec<(StationIdx, StationIdx, u32)> = inst
        .topology
        .depots
        .iter()
        .map(|d| (inst.dispatch_station(d), inst.return_station(d), d.posts))
        .collect();
    let mut turn_edges = Vec::new();
    for fc in &inst.topology.fast_candidates {
        let up = inst.up_station(fc.stop);
        let down = inst.down_station(fc.stop);
        turn_edges.push((up, down, fc.turn_time, fc.turn_soc_steps));
        turn_edges.push((down, up, fc.turn_time, fc.turn_soc_steps));
    }

    let meta = NetMeta {
        stations,
        horizon,
        levels,
        full_level,
        segments: segments.clone(),
        seg_soc: seg_soc.clone(),
        seg_time_min,
        facilities: facilities.clone(),
        depots: depots.clone(),
        terminals: inst.terminal_stations(),
        turn_edges: turn_edges.clone(),
    };

    // node ids: stations, then charge grids, then depot source/sink pairs
    let t_count = horizon as usize;
    let l_count = levels as usize;
    let station_base = 0usize;
    let charge_base = station_base + stations * t_count * l_count;
    let depot_base = charge_base + facilities.len() * t_count * l_count;

    let station_node = |s: StationIdx, t: u32, e: u16| -> NodeId {
        (station_base + (s * t_count + (t as usize - 1)) * l_count + e as usize) as NodeId
    };
    let charge_node = |f: FacilityIdx, t: u32, e: u16| -> NodeId {
        (charge_base + (f * t_count + (t as usize - 1)) * l_count + e as usize) as NodeId
    };
    let source_node = |d: usize| -> NodeId { (depot_base + 2 * d) as NodeId };
    let sink_node = |d: usize| -> NodeId { (depot_base + 2 * d + 1) as NodeId };

    let mut nodes = Vec::with_capacity(depot_base + 2 * depots.len());
    for s in 0..stations {
        for t in 1..=horizon {
            for e in 0..levels {
                nodes.push(Node::Station { station: s, t, e });
            }
        }
    }
    for f in 0..facilities.len() {
        for t in 1..=horizon {
            for e in 0..levels {
                nodes.push(Node::Charge { facility: f, t, e });
            }
        }
    }
    for d in 0..depots.len() {
        nodes.push(Node::DepotSource { depot: d });
        nodes.push(Node::DepotSink { depot: d });
    }

    let oper = inst.dynamics.costs.operating_per_interval;
    let elec_step = inst.electricity_per_step();
    let fix_charge = inst.dynamics.costs.fixed_charge;

    let mut arcs: Vec<Arc> = Vec::new();

    // leave-depot: dispatch at full SoC, any arrival interval
    for (d, &(dispatch, _, _)) in depots.iter().enumerate() {
        for t in 1..=horizon {
            arcs.push(Arc {
                kind: ArcKind::LeaveDepot(d),
                tail: source_node(d),
                head: station_node(dispatch, t, full_level),
                time_len: 0,
                soc_delta: 0,
                money: 0.0,
                covered: Vec::new(),
                expansion: Vec::new(),
            });
        }
    }
    // enter-depot: from the return station at any interval and SoC
    for (d, &(_, ret, _)) in depots.iter().enumerate() {
        for t in 1..=horizon {
            for e in 0..levels {
                arcs.push(Arc {
                    kind: ArcKind::EnterDepot(d),
                    tail: station_node(ret, t, e),
                    head: sink_node(d),
                    time_len: 0,
                    soc_delta: 0,
                    money: 0.0,
                    covered: Vec::new(),
                    expansion: Vec::new(),
                });
            }
        }
    }
    // travel
    for (q, &(from, to)) in segments.iter().enumerate() {
        let theta = seg_soc[q] as u16;
        for t in 1..=horizon {
            let chi = inst.segment_time(q, t as usize);
            let t2 = t + chi;
            if t2 > horizon {
                continue;
            }
            for e in theta..levels {
                arcs.push(Arc {
                    kind: ArcKind::Travel,
                    tail: station_node(from, t, e),
                    head: station_node(to, t2, e - theta),
                    time_len: chi,
                    soc_delta: -(theta as i32),
                    money: chi as f64 * oper,
                    covered: vec![(q, t)],
                    expansion: Vec::new(),
                });
            }
        }
    }
    // dwell at terminal stations
    for &s in &meta.terminals {
        for t in 1..horizon {
            for e in 0..levels {
                arcs.push(Arc {
                    kind: ArcKind::Dwell,
                    tail: station_node(s, t, e),
                    head: station_node(s, t + 1, e),
                    time_len: 1,
                    soc_delta: 0,
                    money: 0.0,
                    covered: Vec::new(),
                    expansion: Vec::new(),
                });
            }
        }
    }
    // short turns at fast facilities
    for &(from, to, chi, theta) in &turn_edges {
        let theta = theta as u16;
        for t in 1..=horizon {
            let t2 = t + chi;
            if t2 > horizon {
                continue;
            }
            for e in theta..levels {
                arcs.push(Arc {
                    kind: ArcKind::Turn,
                    tail: station_node(from, t, e),
                    head: station_node(to, t2, e - theta),
                    time_len: chi,
                    soc_delta: -(theta as i32),
                    money: chi as f64 * oper,
                    covered: Vec::new(),
                    expansion: Vec::new(),
                });
            }
        }
    }
    // charging: connect from an anchor, charge intervals, disconnect back
    for (f, fac) in facilities.iter().enumerate() {
        for &a in &fac.anchors {
            let chi = fac.connect_time;
            for t in 1..=horizon {
                let t2 = t + chi;
                if t2 > horizon {
                    continue;
                }
                for e in 0..levels {
                    if e == full_level {
                        continue;
                    }
                    arcs.push(Arc {
                        kind: ArcKind::StartCharge(f),
                        tail: station_node(a, t, e),
                        head: charge_node(f, t2, e),
                        time_len: chi,
                        soc_delta: 0,
                        money: fix_charge,
                        covered: Vec::new(),
                        expansion: Vec::new(),
                    });
                }
            }
        }
        for t in 1..horizon {
            for e in 0..levels {
                if e == full_level || e + 1 >= levels {
                    continue;
                }
                let gain = fac.gain_steps.min((levels - 1 - e) as u32) as u16;
                arcs.push(Arc {
                    kind: ArcKind::Charge(f),
                    tail: charge_node(f, t, e),
                    head: charge_node(f, t + 1, e + gain),
                    time_len: 1,
                    soc_delta: gain as i32,
                    money: gain as f64 * elec_step,
                    covered: Vec::new(),
                    expansion: Vec::new(),
                });
            }
        }
        for &a in &fac.anchors {
            let chi = fac.disconnect_time;
            for t in 1..=horizon {
                let t2 = t + chi;
                if t2 > horizon {
                    continue;
                }
                for e in 0..levels {
                    arcs.push(Arc {
                        kind: ArcKind::EndCharge(f),
                        tail: charge_node(f, t, e),
                        head: station_node(a, t2, e),
                        time_len: chi,
                        soc_delta: 0,
                        money: 0.0,
                        covered: Vec::new(),
                        expansion: Vec::new(),
                    });
                }
            }
        }
    }

    let depot_source = (0..depots.len()).map(source_node).collect();
    let depot_sink = (0..depots.len()).map(sink_node).collect();

    let mut net = Network {
        nodes,
        arcs,
        out: Vec::new(),
        indeg: Vec::new(),
        seg_index: Vec::new(),
        charge_index: Vec::new(),
        depot_source,
        depot_sink,
        topo: Vec::new(),
        meta,
    };
    net.reindex();
    net
}

/// Dump nodes and arcs as CSV text (debugging aid).
pub fn dump_csv(net: &Network) -> (String, String) {
    use std::fmt::Write;
    let mut nodes = String::from("id,kind,location,t,e\n");
    for (id, n) in net.nodes.iter().enumerate() {
        match n {
            Node::DepotSource { depot } => {
                let _ = writeln!(nodes, "{id},depot-source,{depot},,");
            }
            Node::DepotSink { depot } => {
                let _ = writeln!(nodes, "{id},depot-sink,{depot},,");
            }
            Node::Station { station, t, e } => {
                let _ = writeln!(nodes, "{id},station,{station},{t},{e}");
            }
            Node::Charge { facility, t, e } => {
                let _ = writeln!(nodes, "{id},charge,{facility},{t},{e}");
            }
        }
    }
    let mut arcs = String::from("id,kind,tail,head,time_len,soc_delta,money,covered\n");
    for (id, a) in net.arcs.iter().enumerate() {
        let kind = match a.kind {
            ArcKind::LeaveDepot(d) => format!("leave-depot:{d}"),
            ArcKind::EnterDepot(d) => format!("enter-depot:{d}"),
            ArcKind::Travel => "travel".into(),
            ArcKind::Dwell => "dwell".into(),
            ArcKind::Turn => "turn".into(),
            ArcKind::StartCharge(f) => format!("start-charge:{f}"),
            ArcKind::Charge(f) => format!("charge:{f}"),
            ArcKind::EndCharge(f) => format!("end-charge:{f}"),
            ArcKind::SuperTravel => "super-travel".into(),
        };
        let covered = a
            .covered
            .iter()
            .map(|&(q, t)| format!("{q}@{t}"))
            .collect::<Vec<_>>()
            .join(";");
        let _ = writeln!(
            arcs,
            "{id},{kind},{},{},{},{},{:.6},{covered}",
            a.tail, a.head, a.time_len, a.soc_delta, a.money
        );
    }
    (nodes, arcs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{self, SynthParams};

    #[test]
    fn node_families_count_exactly() {
        // 4 stations (2 per direction), 5 intervals, 3 SoC levels, charging
        // only at the 2 depots: 60 station + 30 charge + 4 depot nodes
        let mut params = SynthParams::tiny(0);
        params.stations_per_direction = 2;
        params.horizon = 5;
        params.soc_step_pct = 30;
        params.soc_min_pct = 20;
        params.soc_max_pct = 80;
        params.fast_count = 0;
        let inst = synth::generate(&params);
        assert_eq!(inst.discretization.soc_levels(), 3);
        let net = build_network(&inst);
        let stations = net
            .nodes
            .iter()
            .filter(|n| matches!(n, Node::Station { .. }))
            .count();
        let charges = net
            .nodes
            .iter()
            .filter(|n| matches!(n, Node::Charge { .. }))
            .count();
        let depots = net
            .nodes
            .iter()
            .filter(|n| matches!(n, Node::DepotSource { .. } | Node::DepotSink { .. }))
            .count();
        assert_eq!(stations, 4 * 5 * 3);
        assert_eq!(charges, 2 * 5 * 3);
        assert_eq!(depots, 4);
        assert_eq!(net.node_count(), 94);
        net.check_invariants().unwrap();
    }

    #[test]
    fn no_fast_candidates_means_no_turn_arcs() {
        let mut params = SynthParams::small(1);
        params.fast_count = 0;
        let inst = synth::generate(&params);
        let net = build_network(&inst);
        assert!(net.arcs.iter().all(|a| a.kind != ArcKind::Turn));
    }

    #[test]
    fn single_full_level_grid_has_no_start_charge() {
        let mut params = SynthParams::tiny(2);
        // one level: min == max is rejected, so use a two-level grid where
        // only the full level exists after consumption pruning is separate;
        // instead check the e == full exclusion directly
        params.soc_step_pct = 60;
        params.soc_min_pct = 20;
        params.soc_max_pct = 80;
        let inst = synth::generate(&params);
        let net = build_network(&inst);
        let full = inst.discretization.full_level() as u16;
        for a in &net.arcs {
            if let ArcKind::StartCharge(_) = a.kind {
                assert_ne!(net.node(a.tail).soc().unwrap(), full);
            }
        }
        net.check_invariants().unwrap();
    }

    #[test]
    fn invariants_hold_on_presets() {
        for seed in 0..2 {
            let net = build_network(&synth::generate(&SynthParams::tiny(seed)));
            net.check_invariants().unwrap();
            let net = build_network(&synth::generate(&SynthParams::small(seed)));
            net.check_invariants().unwrap();
        }
    }

    #[test]
    fn leave_depot_lands_at_full_soc() {
        let inst = synth::generate(&SynthParams::tiny(3));
        let net = build_network(&inst);
        let full = inst.discretization.full_level() as u16;
        for a in &net.arcs {
            if let ArcKind::LeaveDepot(_) = a.kind {
                assert_eq!(net.node(a.head).soc().unwrap(), full);
            }
        }
    }
}
