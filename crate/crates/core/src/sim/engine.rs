use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use super::event::{EventKind, EventQueue};
use super::metrics::{batch_means_rel_half_width, percentile, MetricsReport, QuarterAverages};
use super::SimConfig;
use crate::accel::{AcceleratorConfig, BatchExecutionStats};
use crate::energy::{batch_energy, requests_per_joule, EnergyBreakdown, EnergyModel};
use crate::error::{Error, Result};
use crate::model::RnnModel;
use crate::sched::{BatchPlan, PolicyConfig, Scheduler, Segment};
use crate::workload::{Request, RequestId};

/// Tolerance when converting an arrival instant into a lane step.
const STEP_EPS: f64 = 1e-9;

struct Dispatch {
    plan: BatchPlan,
    layers: Vec<usize>,
    pos: usize,
    start: f64,
    resident: bool,
    swap_cycles: u64,
    ts_cycles: u64,
    /// Scheduled completion of the current layer.
    end: f64,
    /// Lanes power gated for lack of work during the first layer.
    gated: BTreeSet<usize>,
}

impl Dispatch {
    fn layer(&self) -> usize {
        self.layers[self.pos]
    }

    fn joins_open(&self) -> bool {
        self.pos == 0 && self.plan.joins_enabled
    }
}

struct InFlight {
    arrival: f64,
    total: u32,
    /// Time-steps evaluated so far on each layer.
    progress: Vec<u32>,
}

#[derive(Default)]
struct Accum {
    batches: u64,
    batch_layers: u64,
    swaps: u64,
    dram_weight_bytes: u64,
    useful_lane_s: f64,
    padded_lane_s: f64,
    useful_macs: u64,
    padded_macs: u64,
    energy: EnergyBreakdown,
    /// Latest end of a counted batch-layer, to close the lane-time budget.
    last_end: f64,
}

/// Discrete-event simulation of one policy on one accelerator over a trace.
pub struct Engine<'a> {
    model: &'a RnnModel,
    accel: &'a AcceleratorConfig,
    policy: &'a PolicyConfig,
    energy: &'a EnergyModel,
    sim: &'a SimConfig,
    offered_load_rps: Option<f64>,
    log: Option<Vec<String>>,
}

impl<'a> Engine<'a> {
    pub fn new(
        model: &'a RnnModel,
        accel: &'a AcceleratorConfig,
        policy: &'a PolicyConfig,
        energy: &'a EnergyModel,
        sim: &'a SimConfig,
    ) -> Self {
        Engine {
            model,
            accel,
            policy,
            energy,
            sim,
            offered_load_rps: None,
            log: None,
        }
    }

    pub fn offered_load(mut self, rps: f64) -> Self {
        self.offered_load_rps = Some(rps);
        self
    }

    /// Records a human-readable event log (arrivals, dispatches, joins, lane
    /// occupancy, completions).
    pub fn with_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.accel.validate()?;
        self.energy.validate()?;
        self.policy.validate(self.accel.num_lanes())?;
        self.sim.validate()
    }

    pub fn run(self, trace: &[Request]) -> Result<(MetricsReport, Vec<String>)> {
        self.validate()?;
        for w in trace.windows(2) {
            if w[1].arrival_time < w[0].arrival_time || w[1].id <= w[0].id {
                return Err(Error::config("trace", "arrivals must be ordered by time and id"));
            }
        }
        Run::new(self).execute(trace)
    }
}

/// Convenience wrapper with the offered load taken from the trace itself.
pub fn run_scenario(
    trace: &[Request],
    model: &RnnModel,
    accel: &AcceleratorConfig,
    policy: &PolicyConfig,
    energy: &EnergyModel,
    sim: &SimConfig,
) -> Result<MetricsReport> {
    Ok(Engine::new(model, accel, policy, energy, sim).run(trace)?.0)
}

struct Run<'a> {
    cfg: Engine<'a>,
    sched: Scheduler,
    events: EventQueue,
    freq: f64,
    chipless: EnergyModel,
    warm: f64,
    end: f64,
    running: Option<Dispatch>,
    resident: Option<usize>,
    timer: Option<u64>,
    timer_gen: u64,
    timeout_fired: bool,
    inflight: HashMap<RequestId, InFlight>,
    in_system: QuarterAverages,
    arrivals_in_window: u64,
    completed_in_window: u64,
    latencies: Vec<(RequestId, f64)>,
    acc: Accum,
    conservation_violations: u64,
    causality_violations: u64,
    aborted: bool,
}

impl<'a> Run<'a> {
    fn new(cfg: Engine<'a>) -> Self {
        let sched = Scheduler::new(cfg.policy.clone(), cfg.model.num_layers);
        let freq = cfg.accel.frequency_hz();
        let chipless = EnergyModel {
            static_watts: 0.0,
            ..*cfg.energy
        };
        let end = cfg.sim.duration;
        let warm = end * cfg.sim.warmup_fraction;
        Run {
            cfg,
            sched,
            events: EventQueue::new(),
            freq,
            chipless,
            warm,
            end,
            running: None,
            resident: None,
            timer: None,
            timer_gen: 0,
            timeout_fired: false,
            inflight: HashMap::new(),
            in_system: QuarterAverages::new(warm, end),
            arrivals_in_window: 0,
            completed_in_window: 0,
            latencies: Vec::new(),
            acc: Accum::default(),
            conservation_violations: 0,
            causality_violations: 0,
            aborted: false,
        }
    }

    fn log(&mut self, line: impl FnOnce() -> String) {
        if let Some(log) = self.cfg.log.as_mut() {
            log.push(line());
        }
    }

    fn in_window(&self, t: f64) -> bool {
        t >= self.warm && t < self.end
    }

    fn execute(mut self, trace: &[Request]) -> Result<(MetricsReport, Vec<String>)> {
        if let Some(first) = trace.first() {
            self.events.push(first.arrival_time, EventKind::Arrival(0));
        }
        self.events.push(self.end, EventKind::SimulationEnd);

        let mut now = 0.0;
        while let Some(ev) = self.events.pop() {
            now = ev.time;
            match ev.kind {
                EventKind::SimulationEnd => break,
                EventKind::Arrival(idx) => self.on_arrival(trace, idx, now)?,
                EventKind::LaneIdle { batch_id, lane } => self.on_lane_idle(batch_id, lane, now)?,
                EventKind::BatchLayerComplete { batch_id, layer } => self.on_layer_complete(batch_id, layer, now)?,
                EventKind::TimeoutExpired(gen) => {
                    if self.timer == Some(gen) {
                        self.timer = None;
                        self.timeout_fired = true;
                    }
                }
            }
            if self.sched.waiting() > self.cfg.sim.abort_queue_len {
                self.aborted = true;
                let waiting = self.sched.waiting();
                self.log(|| format!("{now:.3} abort queue={waiting}"));
                break;
            }
            // Dispatch decisions see every event that happens at this instant.
            if self.events.peek_time() != Some(now) {
                self.try_dispatch(now)?;
            }
        }
        let stop = if self.aborted { now } else { self.end };
        Ok(self.finish(stop))
    }

    fn on_arrival(&mut self, trace: &[Request], idx: usize, now: f64) -> Result<()> {
        let r = &trace[idx];
        if let Some(next) = trace.get(idx + 1) {
            self.events.push(next.arrival_time, EventKind::Arrival(idx + 1));
        }
        if self.in_window(now) {
            self.arrivals_in_window += 1;
        }
        self.inflight.insert(
            r.id,
            InFlight {
                arrival: r.arrival_time,
                total: r.total_time_steps,
                progress: vec![0; self.cfg.model.num_layers],
            },
        );
        self.in_system.set(now, self.inflight.len() as f64);
        self.sched.enqueue(r);
        self.log(|| format!("{now:.3} arrive r{} len={}", r.id, r.total_time_steps));

        // A gated lane of a running first layer picks the newcomer up at the
        // next step boundary.
        let Some(d) = self.running.as_ref() else {
            return Ok(());
        };
        if !d.joins_open() || d.gated.is_empty() {
            return Ok(());
        }
        let compute_start = d.start + d.swap_cycles as f64 / self.freq;
        let elapsed_steps = ((now - compute_start) * self.freq / d.ts_cycles as f64 - STEP_EPS)
            .ceil()
            .max(0.0) as u32;
        if elapsed_steps >= d.plan.lane_budget {
            return Ok(());
        }
        let lane = *d.gated.iter().next().expect("non-empty");
        self.join(lane, elapsed_steps, now)
    }

    fn on_lane_idle(&mut self, batch_id: u64, lane: usize, now: f64) -> Result<()> {
        let Some(d) = self.running.as_ref() else {
            return Ok(());
        };
        if d.plan.batch_id != batch_id || !d.joins_open() {
            return Ok(());
        }
        let at = d
            .plan
            .lanes
            .iter()
            .find(|l| l.lane == lane)
            .map_or(0, |l| l.end_offset());
        self.join(lane, at, now)
    }

    /// Offers lane `lane`, free from step `at`, to the oldest waiting request.
    fn join(&mut self, lane: usize, at: u32, now: f64) -> Result<()> {
        let d = self.running.as_mut().expect("running dispatch");
        let layer = d.layer();
        match self.sched.refill(&mut d.plan, lane, at, layer)? {
            Some(seg) => {
                d.gated.remove(&lane);
                let end = seg.lane_end();
                let budget = d.plan.lane_budget;
                let batch_id = d.plan.batch_id;
                if end < budget {
                    let t = d.start + (d.swap_cycles + end as u64 * d.ts_cycles) as f64 / self.freq;
                    self.events.push(t, EventKind::LaneIdle { batch_id, lane });
                }
                self.log(|| {
                    format!(
                        "{now:.3} join b{batch_id} lane{lane} r{} steps={}..{} at={at}",
                        seg.request,
                        seg.start_timestep,
                        seg.start_timestep + seg.num_timesteps
                    )
                });
            }
            None => {
                let batch_id = d.plan.batch_id;
                let newly = d.gated.insert(lane);
                // Every lane is dry and nothing is waiting: the first layer
                // ends here instead of idling out the rest of its budget.
                let used = d.plan.lanes.iter().map(|l| l.end_offset()).max().unwrap_or(0);
                let drained = d.gated.len() == d.plan.lanes.len() && used < d.plan.lane_budget;
                if drained {
                    d.plan.lane_budget = used;
                    d.end = d.start + (d.swap_cycles + used as u64 * d.ts_cycles) as f64 / self.freq;
                    self.events
                        .push(d.end, EventKind::BatchLayerComplete { batch_id, layer });
                }
                if newly {
                    self.log(|| format!("{now:.3} gate b{batch_id} lane{lane} at={at}"));
                }
                if drained {
                    self.log(|| format!("{now:.3} drain b{batch_id} budget={used}"));
                }
            }
        }
        Ok(())
    }

    fn try_dispatch(&mut self, now: f64) -> Result<()> {
        if self.running.is_some() || self.sched.waiting() == 0 {
            self.timeout_fired = false;
            return Ok(());
        }
        if !self.timeout_fired && self.sched.should_wait() {
            if self.timer.is_none() {
                self.timer_gen += 1;
                self.timer = Some(self.timer_gen);
                let until = now + self.cfg.policy.timeout_s();
                self.events.push(until, EventKind::TimeoutExpired(self.timer_gen));
                self.log(|| format!("{now:.3} wait until={until:.3}"));
            }
            return Ok(());
        }
        self.timer = None;
        self.timeout_fired = false;
        let Some(plan) = self.sched.next_plan() else {
            return Ok(());
        };
        let layers = plan.layer_span.layers(self.cfg.model.num_layers);
        self.acc.batches += u64::from(self.in_window(now));
        self.start_layer(
            Dispatch {
                plan,
                layers,
                pos: 0,
                start: now,
                resident: false,
                swap_cycles: 0,
                ts_cycles: 0,
                end: now,
                gated: BTreeSet::new(),
            },
            now,
        )
    }

    fn start_layer(&mut self, mut d: Dispatch, now: f64) -> Result<()> {
        let (model, accel) = (self.cfg.model, self.cfg.accel);
        let layer = d.layer();
        d.start = now;
        d.resident = self.resident == Some(layer);
        d.swap_cycles = accel.critical_swap_cycles(model, layer, d.resident)?;
        d.ts_cycles = accel.effective_timestep_cycles(model, layer)?;
        d.gated.clear();
        self.resident = Some(layer);

        let budget = d.plan.lane_budget;
        let batch_id = d.plan.batch_id;
        let wall = d.swap_cycles + budget as u64 * d.ts_cycles;
        d.end = now + wall as f64 / self.freq;
        self.events
            .push(d.end, EventKind::BatchLayerComplete { batch_id, layer });
        if d.joins_open() {
            for l in &d.plan.lanes {
                let end = l.end_offset();
                if end < budget {
                    let t = now + (d.swap_cycles + end as u64 * d.ts_cycles) as f64 / self.freq;
                    self.events.push(t, EventKind::LaneIdle { batch_id, lane: l.lane });
                }
            }
        }
        if self.cfg.log.is_some() {
            let swap = if d.resident { "resident" } else { "swap" };
            let lanes = describe_lanes(&d.plan);
            self.log(|| format!("{now:.3} dispatch b{batch_id} layer={layer} budget={budget} {swap} {lanes}"));
        }
        self.running = Some(d);
        Ok(())
    }

    fn on_layer_complete(&mut self, batch_id: u64, layer: usize, now: f64) -> Result<()> {
        // Completions superseded by an early drain are stale.
        match self.running.as_ref() {
            Some(d) if d.plan.batch_id == batch_id && d.layer() == layer && d.end == now => {}
            _ => return Ok(()),
        }
        let mut d = self.running.take().expect("checked above");
        let stats = self
            .cfg
            .accel
            .execute_batch_layer(self.cfg.model, layer, &d.plan, d.resident)?;
        self.check_conservation(&stats, &d.plan);
        self.check_causality(&d, layer);
        self.account(&stats, d.start, now);
        if self.cfg.log.is_some() {
            let grid = occupancy_grid(&d.plan, &d.gated);
            let (u, p) = (stats.useful_timesteps(), stats.padded_timesteps());
            self.log(|| format!("{now:.3} done b{batch_id} layer={layer} useful={u} padded={p}{grid}"));
        }

        if d.pos + 1 < d.layers.len() {
            if d.pos == 0 && d.plan.joins_enabled {
                d.plan = d.plan.locked();
            }
            d.pos += 1;
            return self.start_layer(d, now);
        }

        for id in self.sched.complete(&d.plan) {
            self.retire(id, now);
        }
        Ok(())
    }

    fn retire(&mut self, id: RequestId, now: f64) {
        let Some(r) = self.inflight.remove(&id) else {
            self.conservation_violations += 1;
            return;
        };
        if r.progress.iter().any(|&p| p != r.total) {
            self.conservation_violations += 1;
        }
        self.in_system.set(now, self.inflight.len() as f64);
        if self.in_window(now) {
            self.completed_in_window += 1;
        }
        if r.arrival >= self.warm && now < self.end {
            self.latencies.push((id, now - r.arrival));
        }
        self.log(|| format!("{now:.3} complete r{id} latency={:.3}", now - r.arrival));
    }

    fn check_conservation(&mut self, stats: &BatchExecutionStats, plan: &BatchPlan) {
        let lanes = stats.active_lanes() as u64;
        if stats.useful_timesteps() + stats.padded_timesteps() != lanes * stats.lane_budget as u64
            || stats.useful_timesteps() != plan.useful_timesteps()
        {
            self.conservation_violations += 1;
        }
    }

    fn check_causality(&mut self, d: &Dispatch, layer: usize) {
        let compute_start = d.start + d.swap_cycles as f64 / self.freq;
        for (_, seg) in d.plan.segments() {
            let Some(r) = self.inflight.get_mut(&seg.request) else {
                self.causality_violations += 1;
                continue;
            };
            let seg_start = compute_start + (seg.lane_offset as u64 * d.ts_cycles) as f64 / self.freq;
            let in_order = r.progress[layer] == seg.start_timestep;
            let fed = layer == 0 || r.progress[layer - 1] >= seg.start_timestep + seg.num_timesteps;
            let arrived = r.arrival <= seg_start + 1e-12;
            if !(in_order && fed && arrived) {
                self.causality_violations += 1;
            }
            r.progress[layer] = r.progress[layer].max(seg.start_timestep + seg.num_timesteps);
        }
    }

    fn account(&mut self, stats: &BatchExecutionStats, start: f64, end: f64) {
        if !self.in_window(start) {
            return;
        }
        let ts_s = stats.timestep_cycles as f64 / self.freq;
        let padded_exec = stats.padded_timesteps() - stats.gated_lane_timesteps;
        let a = &mut self.acc;
        a.batch_layers += 1;
        a.swaps += u64::from(stats.weights_swapped);
        a.dram_weight_bytes += stats.dram_weight_bytes;
        a.useful_lane_s += stats.useful_timesteps() as f64 * ts_s;
        a.padded_lane_s += padded_exec as f64 * ts_s;
        a.useful_macs += stats.mac_count_useful;
        a.padded_macs += stats.mac_count_padded - stats.mac_count_gated;
        a.energy += batch_energy(stats, &self.chipless, self.freq);
        a.last_end = a.last_end.max(end);
    }

    fn finish(mut self, stop: f64) -> (MetricsReport, Vec<String>) {
        let (start, window) = if stop > self.warm {
            (self.warm, stop - self.warm)
        } else {
            (0.0, stop)
        };
        let quarters = self.in_system.finish(stop);
        let incomplete = self.inflight.len() as u64;

        self.latencies.sort_unstable_by_key(|&(id, _)| id);
        let in_order: Vec<f64> = self.latencies.iter().map(|&(_, l)| l).collect();
        let rel_hw = batch_means_rel_half_width(&in_order);
        let mut sorted = in_order.clone();
        sorted.sort_unstable_by(f64::total_cmp);
        let mean = if sorted.is_empty() {
            0.0
        } else {
            sorted.iter().sum::<f64>() / sorted.len() as f64
        };

        let a = &self.acc;
        let mut energy = a.energy;
        energy.static_ += self.cfg.energy.static_watts * window;
        let completed = self.completed_in_window;
        let rpj = requests_per_joule(completed, energy.total()).unwrap_or(0.0);

        let lanes = self.cfg.policy.batch_size as f64;
        let span = window + (a.last_end - (start + window)).max(0.0);
        let lane_time = lanes * span;
        let (useful, padded) = if lane_time > 0.0 {
            (a.useful_lane_s / lane_time, a.padded_lane_s / lane_time)
        } else {
            (0.0, 0.0)
        };
        let executed = a.useful_macs + a.padded_macs;
        let offered = self.cfg.offered_load_rps.unwrap_or(if window > 0.0 {
            self.arrivals_in_window as f64 / window
        } else {
            0.0
        });

        let completion = if self.arrivals_in_window == 0 {
            1.0
        } else {
            completed as f64 / self.arrivals_in_window as f64
        };
        let stable = quarters[3] <= 1.2 * quarters[2] + lanes;
        let sustainable = !self.aborted && completion >= 0.99 && stable;

        let report = MetricsReport {
            policy: self.cfg.policy.label(),
            offered_load_rps: offered,
            measured_seconds: window,
            arrivals: self.arrivals_in_window,
            completed_requests: completed,
            incomplete,
            throughput_rps: if window > 0.0 { completed as f64 / window } else { 0.0 },
            mean_latency_s: mean,
            p50_latency_s: percentile(&sorted, 50.0),
            p95_latency_s: percentile(&sorted, 95.0),
            p99_latency_s: percentile(&sorted, 99.0),
            latency_rel_half_width: rel_hw,
            energy_joules: energy.total(),
            energy_dram_joules: energy.dram,
            energy_sram_joules: energy.sram,
            energy_mac_joules: energy.mac,
            energy_static_joules: energy.static_,
            requests_per_joule: rpj,
            useful_mac_fraction: useful,
            padded_mac_fraction: padded,
            idle_fraction: (1.0 - useful - padded).max(0.0),
            padded_compute_fraction: if executed > 0 {
                a.padded_macs as f64 / executed as f64
            } else {
                0.0
            },
            dram_weight_bytes_per_request: if completed > 0 {
                a.dram_weight_bytes as f64 / completed as f64
            } else {
                0.0
            },
            batches_dispatched: a.batches,
            batch_layers: a.batch_layers,
            weight_swaps: a.swaps,
            mean_in_system: quarters.iter().sum::<f64>() / 4.0,
            in_system_q3: quarters[2],
            in_system_q4: quarters[3],
            sustainable,
            aborted: self.aborted,
            conservation_violations: self.conservation_violations,
            causality_violations: self.causality_violations,
        };
        (report, self.cfg.log.take().unwrap_or_default())
    }
}

fn describe_segment(s: &Segment) -> String {
    format!(
        "r{}[{}..{})@{}",
        s.request,
        s.start_timestep,
        s.start_timestep + s.num_timesteps,
        s.lane_offset
    )
}

fn describe_lanes(plan: &BatchPlan) -> String {
    let mut out = String::new();
    for l in &plan.lanes {
        let segs: Vec<String> = l.segments.iter().map(describe_segment).collect();
        let _ = write!(
            out,
            "| lane{}: {} ",
            l.lane,
            if segs.is_empty() { "-".into() } else { segs.join(" ") }
        );
    }
    out.trim_end().to_string()
}

/// One line per lane, one column per step: the request evaluated, `.` for a
/// padded step and `_` for a power-gated one.
fn occupancy_grid(plan: &BatchPlan, gated: &BTreeSet<usize>) -> String {
    let mut out = String::new();
    for l in &plan.lanes {
        let mut cells = vec![
            if plan.power_gating {
                "_".to_string()
            } else {
                ".".to_string()
            };
            plan.lane_budget as usize
        ];
        for s in &l.segments {
            for k in s.lane_offset..s.lane_end() {
                cells[k as usize] = format!("r{}", s.request);
            }
        }
        let mark = if gated.contains(&l.lane) { " (gated)" } else { "" };
        let _ = write!(out, "\n    lane{}: {}{mark}", l.lane, cells.join(" "));
    }
    out
}
