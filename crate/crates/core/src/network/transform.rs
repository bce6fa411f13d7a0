//! Network reductions: per-station SoC and arrival-time bounds derived from
//! shortest subpaths to/from charging opportunities, pruning against those
//! bounds, and aggregation of uninterruptible travel-arc chains into super
//! travel arcs.

use std::collections::BinaryHeap;

use super::{Arc, ArcId, ArcKind, Network, Node, NodeId};
use crate::instance::StationIdx;

/// Per-station bounds on reachable SoC levels and intervals. `None` marks a
/// station with no valid value at all (pruned entirely).
#[derive(Debug, Clone, PartialEq)]
pub struct StationBounds {
    pub soc_lo: Vec<Option<u16>>,
    pub soc_hi: Vec<Option<u16>>,
    pub t_lo: Vec<Option<u32>>,
    pub t_hi: Vec<Option<u32>>,
}

impl StationBounds {
    fn trivially_full(net: &Network) -> Self {
        let s = net.meta.stations;
        StationBounds {
            soc_lo: vec![Some(0); s],
            soc_hi: vec![Some(net.meta.levels - 1); s],
            t_lo: vec![Some(1); s],
            t_hi: vec![Some(net.meta.horizon); s],
        }
    }

    /// Tightest combination of two bound sets.
    pub fn intersect(&self, other: &StationBounds) -> StationBounds {
        let lo = |a: Option<u16>, b: Option<u16>| match (a, b) {
            (Some(x), Some(y)) => Some(x.max(y)),
            _ => None,
        };
        let hi = |a: Option<u16>, b: Option<u16>| match (a, b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            _ => None,
        };
        StationBounds {
            soc_lo: self
                .soc_lo
                .iter()
                .zip(&other.soc_lo)
                .map(|(&a, &b)| lo(a, b))
                .collect(),
            soc_hi: self
                .soc_hi
                .iter()
                .zip(&other.soc_hi)
                .map(|(&a, &b)| hi(a, b))
                .collect(),
            t_lo: self
                .t_lo
                .iter()
                .zip(&other.t_lo)
                .map(|(&a, &b)| match (a, b) {
                    (Some(x), Some(y)) => Some(x.max(y)),
                    _ => None,
                })
                .collect(),
            t_hi: self
                .t_hi
                .iter()
                .zip(&other.t_hi)
                .map(|(&a, &b)| match (a, b) {
                    (Some(x), Some(y)) => Some(x.min(y)),
                    _ => None,
                })
                .collect(),
        }
    }

    /// Both bound families at once.
    pub fn compute(net: &Network) -> StationBounds {
        compute_soc_bounds(net).intersect(&compute_time_bounds(net))
    }
}

/// Directed hop in the projected station graph with a nonnegative weight.
struct Hop {
    from: StationIdx,
    to: StationIdx,
    weight: u32,
}

fn projected_hops(net: &Network, time_weights: bool) -> Vec<Hop> {
    let meta = &net.meta;
    let mut hops = Vec::new();
    for (q, &(from, to)) in meta.segments.iter().enumerate() {
        let weight = if time_weights {
            meta.seg_time_min[q]
        } else {
            meta.seg_soc[q]
        };
        hops.push(Hop { from, to, weight });
    }
    for &(from, to, chi, theta) in &meta.turn_edges {
        let weight = if time_weights { chi } else { theta };
        hops.push(Hop { from, to, weight });
    }
    hops
}

/// Multi-source Dijkstra over the projected station graph.
fn dijkstra(
    stations: usize,
    hops: &[Hop],
    reverse: bool,
    sources: &[(StationIdx, u32)],
) -> Vec<Option<u32>> {
    let mut adj: Vec<Vec<(usize, u32)>> = vec![Vec::new(); stations];
    for h in hops {
        if reverse {
            adj[h.to].push((h.from, h.weight));
        } else {
            adj[h.from].push((h.to, h.weight));
        }
    }
    let mut dist: Vec<Option<u32>> = vec![None; stations];
    let mut heap: BinaryHeap<std::cmp::Reverse<(u32, usize)>> = BinaryHeap::new();
    for &(s, init) in sources {
        if dist[s].map_or(true, |d| init < d) {
            dist[s] = Some(init);
            heap.push(std::cmp::Reverse((init, s)));
        }
    }
    while let Some(std::cmp::Reverse((d, s))) = heap.pop() {
        if dist[s] != Some(d) {
            continue;
        }
        for &(to, w) in &adj[s] {
            let nd = d + w;
            if dist[to].map_or(true, |cur| nd < cur) {
                dist[to] = Some(nd);
                heap.push(std::cmp::Reverse((nd, to)));
            }
        }
    }
    dist
}

/// SoC bounds: the highest level at a station is the grid top minus the
/// cheapest consumption from any charging exit (or a depot dispatch at the
/// full level); the lowest is the grid bottom plus the cheapest consumption
/// to the next charging entry or depot return.
pub fn compute_soc_bounds(net: &Network) -> StationBounds {
    let meta = &net.meta;
    let mut bounds = StationBounds::trivially_full(net);
    let hops = projected_hops(net, false);
    let top = (meta.levels - 1) as u32;

    let mut exit_sources: Vec<(StationIdx, u32)> = Vec::new();
    for fac in &meta.facilities {
        for &a in &fac.anchors {
            exit_sources.push((a, 0));
        }
    }
    for &(dispatch, _, _) in &meta.depots {
        exit_sources.push((dispatch, top - meta.full_level as u32));
    }
    let from_exit = dijkstra(meta.stations, &hops, false, &exit_sources);

    let mut entry_targets: Vec<(StationIdx, u32)> = Vec::new();
    for fac in &meta.facilities {
        for &a in &fac.anchors {
            entry_targets.push((a, 0));
        }
    }
    for &(_, ret, _) in &meta.depots {
        entry_targets.push((ret, 0));
    }
    let to_entry = dijkstra(meta.stations, &hops, true, &entry_targets);

    for s in 0..meta.stations {
        bounds.soc_hi[s] = match from_exit[s] {
            Some(d) if d <= top => Some((top - d) as u16),
            _ => None,
        };
        bounds.soc_lo[s] = match to_entry[s] {
            Some(d) if d <= top => Some(d as u16),
            _ => None,
        };
        if let (Some(lo), Some(hi)) = (bounds.soc_lo[s], bounds.soc_hi[s]) {
            if lo > hi {
                bounds.soc_lo[s] = None;
                bounds.soc_hi[s] = None;
            }
        } else {
            bounds.soc_lo[s] = None;
            bounds.soc_hi[s] = None;
        }
    }
    bounds
}

/// Arrival-time bounds: the earliest time at a station follows the fastest
/// subpath from a dispatch (interval 1) or a charging exit; the latest
/// leaves enough time to reach a charging entry or a depot return within
/// the horizon. Time-dependent travel times enter via their per-segment
/// minimum, which keeps both bounds valid.
pub fn compute_time_bounds(net: &Network) -> StationBounds {
    let meta = &net.meta;
    let mut bounds = StationBounds::trivially_full(net);
    let hops = projected_hops(net, true);
    let horizon = meta.horizon;

    let mut sources: Vec<(StationIdx, u32)> = Vec::new();
    for &(dispatch, _, _) in &meta.depots {
        sources.push((dispatch, 1));
    }
    for fac in &meta.facilities {
        for &a in &fac.anchors {
            sources.push((a, 1 + fac.disconnect_time));
        }
    }
    let earliest = dijkstra(meta.stations, &hops, false, &sources);

    let mut targets: Vec<(StationIdx, u32)> = Vec::new();
    for &(_, ret, _) in &meta.depots {
        targets.push((ret, 0));
    }
    for fac in &meta.facilities {
        for &a in &fac.anchors {
            targets.push((a, fac.connect_time));
        }
    }
    let to_absorb = dijkstra(meta.stations, &hops, true, &targets);

    for s in 0..meta.stations {
        bounds.t_lo[s] = match earliest[s] {
            Some(d) if d <= horizon => Some(d),
            _ => None,
        };
        bounds.t_hi[s] = match to_absorb[s] {
            Some(d) if d < horizon => Some(horizon - d),
            Some(d) if d == horizon => None,
            _ => None,
        };
        if let (Some(lo), Some(hi)) = (bounds.t_lo[s], bounds.t_hi[s]) {
            if lo > hi {
                bounds.t_lo[s] = None;
                bounds.t_hi[s] = None;
            }
        } else {
            bounds.t_lo[s] = None;
            bounds.t_hi[s] = None;
        }
    }
    bounds
}

#[derive(Debug, Clone, Copy)]
pub struct DownsizeOpts {
    pub use_soc: bool,
    pub use_time: bool,
}

impl Default for DownsizeOpts {
    fn default() -> Self {
        DownsizeOpts {
            use_soc: true,
            use_time: true,
        }
    }
}

/// Remove station and charge nodes outside the bounds, with all incident
/// arcs.
pub fn downsize(net: &Network, bounds: &StationBounds, opts: DownsizeOpts) -> Network {
    let meta = &net.meta;
    // charge-node windows per facility: the loosest anchor window (a charge
    // visit starts and ends at an anchor station, so anchor bounds carry over)
    let mut fac_windows = Vec::with_capacity(meta.facilities.len());
    for fac in &meta.facilities {
        let mut t_min: Option<u32> = None;
        let mut t_max: Option<u32> = None;
        let mut e_min: Option<u16> = None;
        for &a in &fac.anchors {
            if let Some(lo) = bounds.t_lo[a] {
                t_min = Some(t_min.map_or(lo, |cur: u32| cur.min(lo)));
            }
            if let Some(hi) = bounds.t_hi[a] {
                t_max = Some(t_max.map_or(hi, |cur: u32| cur.max(hi)));
            }
            if let Some(lo) = bounds.soc_lo[a] {
                e_min = Some(e_min.map_or(lo, |cur: u16| cur.min(lo)));
            }
        }
        fac_windows.push((t_min, t_max, e_min));
    }

    let keep = |node: &Node| -> bool {
        match *node {
            Node::DepotSource { .. } | Node::DepotSink { .. } => true,
            Node::Station { station, t, e } => {
                if opts.use_soc {
                    match (bounds.soc_lo[station], bounds.soc_hi[station]) {
                        (Some(lo), Some(hi)) => {
                            if e < lo || e > hi {
                                return false;
                            }
                        }
                        _ => return false,
                    }
                }
                if opts.use_time {
                    match (bounds.t_lo[station], bounds.t_hi[station]) {
                        (Some(lo), Some(hi)) => {
                            if t < lo || t > hi {
                                return false;
                            }
                        }
                        _ => return false,
                    }
                }
                true
            }
            Node::Charge { facility, t, e } => {
                let (t_min, t_max, e_min) = fac_windows[facility];
                if opts.use_time {
                    match (t_min, t_max) {
                        (Some(lo), Some(hi)) => {
                            if t < lo || t > hi {
                                return false;
                            }
                        }
                        _ => return false,
                    }
                }
                if opts.use_soc {
                    match e_min {
                        Some(lo) => {
                            if e < lo {
                                return false;
                            }
                        }
                        None => return false,
                    }
                }
                true
            }
        }
    };

    rebuild(net, keep, |arc| Some(arc.clone()))
}

/// Replace each maximal chain of travel arcs between consecutive facility
/// stations by a single super travel arc carrying the summed time, SoC and
/// money and the concatenated segment coverage. Chains of length one keep
/// their original arc. Interior nodes left without arcs are dropped.
pub fn aggregate_super_arcs(net: &Network) -> Network {
    let meta = &net.meta;
    let mut breaker = vec![false; meta.stations];
    for fac in &meta.facilities {
        for &a in &fac.anchors {
            breaker[a] = true;
        }
    }
    for &(dispatch, ret, _) in &meta.depots {
        breaker[dispatch] = true;
        breaker[ret] = true;
    }
    for &t in &meta.terminals {
        breaker[t] = true;
    }

    let station_of = |id: NodeId| -> Option<StationIdx> {
        match net.node(id) {
            Node::Station { station, .. } => Some(*station),
            _ => None,
        }
    };

    let mut new_arcs: Vec<Arc> = Vec::new();
    for (id, arc) in net.arcs.iter().enumerate() {
        match arc.kind {
            ArcKind::Travel => {
                let tail_station = station_of(arc.tail).expect("travel tail is a station");
                if !breaker[tail_station] {
                    continue; // interior link, consumed by its chain
                }
                // walk the unique continuation until the next breaker
                let mut chain: Vec<ArcId> = vec![id as ArcId];
                let mut head = arc.head;
                let mut complete = false;
                loop {
                    let s = station_of(head).expect("travel head is a station");
                    if breaker[s] {
                        complete = true;
                        break;
                    }
                    let next = net.out[head as usize]
                        .iter()
                        .copied()
                        .find(|&a| matches!(net.arc(a).kind, ArcKind::Travel));
                    match next {
                        Some(a) => {
                            chain.push(a);
                            head = net.arc(a).head;
                        }
                        None => break, // dead chain: no exit at an interior stop
                    }
                }
                if !complete {
                    continue;
                }
                if chain.len() == 1 {
                    new_arcs.push(arc.clone());
                } else {
                    let mut time_len = 0u32;
                    let mut soc_delta = 0i32;
                    let mut money = 0.0;
                    let mut covered = Vec::with_capacity(chain.len());
                    let mut expansion = Vec::with_capacity(chain.len() - 1);
                    for (k, &a) in chain.iter().enumerate() {
                        let link = net.arc(a);
                        time_len += link.time_len;
                        soc_delta += link.soc_delta;
                        money += link.money;
                        covered.extend_from_slice(&link.covered);
                        if k + 1 < chain.len() {
                            if let Node::Station { station, t, e } = *net.node(link.head) {
                                expansion.push((station, t, e));
                            }
                        }
                    }
                    new_arcs.push(Arc {
                        kind: ArcKind::SuperTravel,
                        tail: arc.tail,
                        head,
                        time_len,
                        soc_delta,
                        money,
                        covered,
                        expansion,
                    });
                }
            }
            _ => new_arcs.push(arc.clone()),
        }
    }

    // drop nodes with no remaining incident arcs (keep depot endpoints)
    let mut used = vec![false; net.nodes.len()];
    for arc in &new_arcs {
        used[arc.tail as usize] = true;
        used[arc.head as usize] = true;
    }
    for &d in net.depot_source.iter().chain(net.depot_sink.iter()) {
        used[d as usize] = true;
    }

    let mut remap: Vec<Option<NodeId>> = vec![None; net.nodes.len()];
    let mut nodes = Vec::new();
    for (old, &keep) in used.iter().enumerate() {
        if keep {
            remap[old] = Some(nodes.len() as NodeId);
            nodes.push(net.nodes[old]);
        }
    }
    for arc in &mut new_arcs {
        arc.tail = remap[arc.tail as usize].expect("used tail kept");
        arc.head = remap[arc.head as usize].expect("used head kept");
    }

    let mut out = Network {
        nodes,
        arcs: new_arcs,
        out: Vec::new(),
        indeg: Vec::new(),
        seg_index: Vec::new(),
        charge_index: Vec::new(),
        depot_source: net
            .depot_source
            .iter()
            .map(|&d| remap[d as usize].unwrap())
            .collect(),
        depot_sink: net
            .depot_sink
            .iter()
            .map(|&d| remap[d as usize].unwrap())
            .collect(),
        topo: Vec::new(),
        meta: net.meta.clone(),
    };
    out.reindex();
    out
}

/// Rebuild a network keeping only the nodes accepted by `keep` and the arcs
/// mapped to `Some` by `map_arc` whose endpoints survive.
fn rebuild(
    net: &Network,
    keep: impl Fn(&Node) -> bool,
    map_arc: impl Fn(&Arc) -> Option<Arc>,
) -> Network {
    let mut remap: Vec<Option<NodeId>> = vec![None; net.nodes.len()];
    let mut nodes = Vec::new();
    for (old, node) in net.nodes.iter().enumerate() {
        if keep(node) {
            remap[old] = Some(nodes.len() as NodeId);
            nodes.push(*node);
        }
    }
    let mut arcs = Vec::new();
    for arc in &net.arcs {
        let (Some(tail), Some(head)) = (remap[arc.tail as usize], remap[arc.head as usize])
        else {
            continue;
        };
        if let Some(mut a) = map_arc(arc) {
            a.tail = tail;
            a.head = head;
            arcs.push(a);
        }
    }
    let mut out = Network {
        nodes,
        arcs,
        out: Vec::new(),
        indeg: Vec::new(),
        seg_index: Vec::new(),
        charge_index: Vec::new(),
        depot_source: net
            .depot_source
            .iter()
            .map(|&d| remap[d as usize].expect("depot endpoints survive"))
            .collect(),
        depot_sink: net
            .depot_sink
            .iter()
            .map(|&d| remap[d as usize].expect("depot endpoints survive"))
            .collect(),
        topo: Vec::new(),
        meta: net.meta.clone(),
    };
    out.reindex();
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::build_network;
    use crate::synth::{self, SynthParams};

    #[test]
    fn trivial_bounds_leave_network_unchanged() {
        let inst = synth::generate(&SynthParams::tiny(1));
        let net = build_network(&inst);
        let bounds = StationBounds::trivially_full(&net);
        let pruned = downsize(&net, &bounds, DownsizeOpts::default());
        assert_eq!(pruned.node_count(), net.node_count());
        assert_eq!(pruned.arc_count(), net.arc_count());
    }

    #[test]
    fn adjacent_depot_station_bounds() {
        // single 1-step segment from the dispatch station: the next station
        // tops out one step below the grid top and bottoms out one step
        // above the grid bottom (the entry back to a charger costs a hop)
        let mut params = SynthParams::tiny(2);
        params.fast_count = 0;
        let inst = synth::generate(&params);
        let net = build_network(&inst);
        let b = compute_soc_bounds(&net);
        let top = (net.meta.levels - 1) as u16;
        // dispatch stations are facility anchors: full range available
        for &(dispatch, ret, _) in &net.meta.depots {
            assert_eq!(b.soc_hi[dispatch], Some(top));
            assert_eq!(b.soc_lo[ret], Some(0));
        }
        net.check_invariants().unwrap();
    }

    #[test]
    fn time_bounds_match_hand_example() {
        // an interior station one 2-interval segment from the dispatch:
        // earliest arrival = 1 + 2
        let mut params = SynthParams::tiny(3);
        params.stations_per_direction = 3;
        params.horizon = 12;
        params.fast_count = 0;
        params.gap_km = (1.0, 1.0001); // 2 minutes at 30 km/h
        params.speed_kmh = 30.0;
        let inst = synth::generate(&params);
        let net = build_network(&inst);
        assert_eq!(inst.segment_time(0, 1), 2);
        let b = compute_time_bounds(&net);
        let next_up = 1; // interior station after the west dispatch
        assert_eq!(b.t_lo[next_up], Some(3));
        // terminal return station: horizon minus nothing (absorbs at cost 0)
        let horizon = net.meta.horizon;
        for &(_, ret, _) in &net.meta.depots {
            assert_eq!(b.t_hi[ret], Some(horizon));
        }
        // the interior station needs 2 intervals to reach the east return
        // station: latest arrival = 12 - 2
        assert_eq!(b.t_hi[next_up], Some(10));
    }

    #[test]
    fn downsize_then_aggregate_keeps_invariants() {
        let inst = synth::generate(&SynthParams::small(4));
        let net = build_network(&inst);
        let bounds = StationBounds::compute(&net);
        let pruned = downsize(&net, &bounds, DownsizeOpts::default());
        pruned.check_invariants().unwrap();
        assert!(pruned.node_count() < net.node_count());
        let agg = aggregate_super_arcs(&pruned);
        agg.check_invariants().unwrap();
        assert!(agg.arc_count() <= pruned.arc_count());
        // super arcs cover each chained segment exactly once
        for a in &agg.arcs {
            if matches!(a.kind, super::super::ArcKind::SuperTravel) {
                assert!(a.covered.len() >= 2);
                assert_eq!(a.expansion.len(), a.covered.len() - 1);
            }
        }
    }

    #[test]
    fn chain_of_length_one_keeps_original_arc() {
        // two stops per direction: every travel arc runs between breakers
        let inst = synth::generate(&SynthParams::tiny(5));
        let net = build_network(&inst);
        let agg = aggregate_super_arcs(&net);
        assert!(agg
            .arcs
            .iter()
            .all(|a| !matches!(a.kind, super::super::ArcKind::SuperTravel)));
    }
}
