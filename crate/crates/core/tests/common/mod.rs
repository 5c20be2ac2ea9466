//! Fixtures and independent oracles shared by the integration targets.

#![allow(dead_code, clippy::needless_range_loop)]

use std::time::{Duration, Instant};

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use gsp::autodiff::{gumbel_noise, Tape, Tensor};
use gsp::event_model::{DeltaMode, DELTA_COUNT};
use gsp::graph::{
    EdgeState, Labels, LeadTimeObservation, NetworkGraph, NetworkSnapshot, NodeState, PlannedEvent, ShipmentRecord,
};
use gsp::model::{GspModel, ModelConfig};
use gsp::nn::Parameters;
use gsp::rollout::{LeadTimeModel, RolloutSetup};
use gsp::training::{example_loss_on_tape, LossWeights, TrainConfig, TrainingExample};

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

/// Plant `A` -> hub `B` -> store `C` over 28 days, with two planned events
/// per edge, shipment history and labels that differ from the plan.
pub fn three_node_snapshot() -> NetworkSnapshot {
    let graph = NetworkGraph::new("X", &["A", "B", "C"], &[("A", "B"), ("B", "C")]).unwrap();
    let node = |start: f64, inv: [f64; 3], demand: [f64; 4], inc: [f64; 4], out: [f64; 4]| NodeState {
        actual_inventory_start: start,
        planned_inventory: inv.to_vec(),
        predicted_demand: demand.to_vec(),
        planned_incoming: inc.to_vec(),
        planned_outgoing: out.to_vec(),
    };
    let nodes = vec![
        node(300.0, [240.0, 200.0, 200.0], [0.0; 4], [0.0; 4], [60.0, 40.0, 0.0, 0.0]),
        node(
            20.0,
            [30.0, 25.0, 20.0],
            [0.0; 4],
            [60.0, 40.0, 0.0, 0.0],
            [50.0, 45.0, 5.0, 5.0],
        ),
        node(
            10.0,
            [25.0, 30.0, 20.0],
            [35.0, 40.0, 15.0, 10.0],
            [50.0, 45.0, 5.0, 5.0],
            [0.0; 4],
        ),
    ];
    let history = |q: f64| {
        vec![
            ShipmentRecord {
                date: date(2024, 3, 1),
                quantity: q,
            },
            ShipmentRecord {
                date: date(2024, 2, 23),
                quantity: q * 0.8,
            },
        ]
    };
    let edges = vec![
        EdgeState {
            planned: vec![
                PlannedEvent {
                    offset: 2,
                    quantity: 60.0,
                },
                PlannedEvent {
                    offset: 9,
                    quantity: 40.0,
                },
            ],
            history: history(55.0),
        },
        EdgeState {
            planned: vec![
                PlannedEvent {
                    offset: 3,
                    quantity: 50.0,
                },
                PlannedEvent {
                    offset: 11,
                    quantity: 45.0,
                },
            ],
            history: history(48.0),
        },
    ];
    let mut daily = vec![vec![0.0; 28], vec![0.0; 28]];
    daily[0][4] = 48.0;
    daily[0][11] = 32.0;
    daily[1][5] = 40.0;
    daily[1][13] = 36.0;
    let labels = Labels {
        daily_outgoing: daily,
        weekly_inventory: vec![
            vec![300.0, 252.0, 220.0, 220.0],
            vec![20.0, 28.0, 24.0, 24.0],
            vec![10.0, 15.0, 11.0, 0.0],
        ],
        actual_events: None,
    };
    let obs = |s: NaiveDate, r: NaiveDate| LeadTimeObservation { ship: s, receive: r };
    let leadtimes = vec![
        vec![
            obs(date(2024, 2, 23), date(2024, 2, 25)),
            obs(date(2024, 3, 1), date(2024, 3, 3)),
        ],
        vec![obs(date(2024, 3, 1), date(2024, 3, 2))],
    ];
    NetworkSnapshot::new(graph, date(2024, 3, 4), 28, nodes, edges, Some(labels), leadtimes).unwrap()
}

/// Default depth, head count and delta head at reduced widths.
pub fn narrow_config() -> ModelConfig {
    let mut c = ModelConfig::default();
    c.gat.layer_widths = vec![48, 16];
    c.heads.rate_hidden = vec![32, 16, 8];
    c
}

pub struct GradientCheck {
    pub parameters: usize,
    pub worst_relative: f64,
    pub worst_name: String,
    pub elapsed: Duration,
}

const FD_STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const FD_FLOOR: f64 = 1e-6;

/// Central finite differences of the full soft-Gumbel training loss with
/// fixed noise, against the tape gradient, for every parameter entry.
pub fn full_loss_gradient_check(config: ModelConfig, snap: &NetworkSnapshot, seed: u64) -> GradientCheck {
    let started = Instant::now();
    let model = GspModel::new(config, seed).unwrap();
    let lead = LeadTimeModel::fallback(snap.horizon_days, 2);
    let example = TrainingExample::new(snap, snap.max_planned_quantity(), &lead, &model.config).unwrap();
    let weights = LossWeights::new(0.5, example.edges(), example.nodes());
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let noise = gumbel_noise(example.batch.events.len(), DELTA_COUNT, &mut rng);
    let clip = TrainConfig::default().clip;

    let loss_of = |m: &GspModel| -> f64 {
        let mut tape = Tape::new();
        let vars = m.register(&mut tape);
        let (total, _) =
            example_loss_on_tape(&mut tape, &vars, &example, weights, DeltaMode::Soft, Some(&noise), clip).unwrap();
        tape.value(total).item()
    };

    let mut tape = Tape::new();
    let vars = model.register(&mut tape);
    let (total, _) =
        example_loss_on_tape(&mut tape, &vars, &example, weights, DeltaMode::Soft, Some(&noise), clip).unwrap();
    let grads = tape.backward(total).unwrap();
    let analytic: Vec<Tensor> = vars.vars().into_iter().map(|v| grads.wrt(v)).collect();
    let names: Vec<String> = model.params().into_iter().map(|(n, _)| n).collect();
    let entries: Vec<(usize, usize)> = analytic
        .iter()
        .enumerate()
        .flat_map(|(p, g)| (0..g.len()).map(move |i| (p, i)))
        .collect();

    let errors: Vec<(f64, usize, usize)> = entries
        .par_iter()
        .map_init(
            || model.clone(),
            |m, &(p, i)| {
                let original = m.params_mut()[p].data()[i];
                m.params_mut()[p].data_mut()[i] = original + FD_STEP;
                let plus = loss_of(m);
                m.params_mut()[p].data_mut()[i] = original - FD_STEP;
                let minus = loss_of(m);
                m.params_mut()[p].data_mut()[i] = original;
                let numeric = (plus - minus) / (2.0 * FD_STEP);
                let a = analytic[p].data()[i];
                ((a - numeric).abs() / a.abs().max(numeric.abs()).max(FD_FLOOR), p, i)
            },
        )
        .collect();
    let (worst_relative, p, i) = errors
        .iter()
        .copied()
        .fold((0.0, 0, 0), |w, e| if e.0 > w.0 { e } else { w });
    GradientCheck {
        parameters: entries.len(),
        worst_relative,
        worst_name: format!("{}[{i}]", names[p]),
        elapsed: started.elapsed(),
    }
}

/// Day-granular weekly accounting written from the definitions, with every
/// shipment tracked as a discrete event.
pub struct OracleRun {
    pub inventory: Vec<Vec<f64>>,
    pub incoming: Vec<Vec<f64>>,
    pub outgoing: Vec<Vec<f64>>,
    pub requested: Vec<Vec<f64>>,
    pub capacity: Vec<Vec<f64>>,
    pub timelines: Vec<Vec<f64>>,
}

struct Shipment {
    edge: usize,
    day: usize,
    quantity: f64,
    arrives: usize,
}

/// `lead_days[e]` is the deterministic lead time of edge `e`. Within a pass,
/// a shipment counts toward its destination's receipts at its clipped
/// quantity when it left in an earlier week and at its requested quantity
/// when it leaves in the receiving week.
pub fn brute_force_rollout(
    nodes: usize,
    edges: &[(usize, usize)],
    start: &[f64],
    demand: &[Vec<f64>],
    lead_days: &[usize],
    timelines: &[Vec<f64>],
    clip: bool,
) -> OracleRun {
    let horizon = timelines.first().map_or(0, Vec::len);
    let weeks = horizon / 7;
    let mut shipments: Vec<Shipment> = Vec::new();
    for (e, t) in timelines.iter().enumerate() {
        for (day, &q) in t.iter().enumerate() {
            if q != 0.0 {
                shipments.push(Shipment {
                    edge: e,
                    day,
                    quantity: q,
                    arrives: day + lead_days[e],
                });
            }
        }
    }
    let mut clipped: Vec<f64> = shipments.iter().map(|s| s.quantity).collect();
    let mut run = OracleRun {
        inventory: vec![vec![0.0; weeks + 1]; nodes],
        incoming: vec![vec![0.0; weeks]; nodes],
        outgoing: vec![vec![0.0; weeks]; nodes],
        requested: vec![vec![0.0; weeks]; nodes],
        capacity: vec![vec![0.0; weeks]; nodes],
        timelines: vec![vec![0.0; horizon]; timelines.len()],
    };
    for v in 0..nodes {
        run.inventory[v][0] = start[v];
    }
    for w in 0..weeks {
        let in_week = |day: usize| day / 7 == w;
        for v in 0..nodes {
            let mut received = 0.0;
            let mut asked = 0.0;
            for (k, s) in shipments.iter().enumerate() {
                let (src, dst) = edges[s.edge];
                if dst == v && s.arrives < horizon && in_week(s.arrives) {
                    received += if s.day / 7 < w { clipped[k] } else { s.quantity };
                }
                if src == v && in_week(s.day) {
                    asked += s.quantity;
                }
            }
            let cap = run.inventory[v][w] + received - demand[v][w];
            let ratio = if clip && asked > 0.0 && asked > cap.max(0.0) {
                cap.max(0.0) / asked
            } else {
                1.0
            };
            let mut sent = 0.0;
            for (k, s) in shipments.iter().enumerate() {
                if edges[s.edge].0 == v && in_week(s.day) {
                    clipped[k] = s.quantity * ratio;
                    sent += clipped[k];
                }
            }
            run.incoming[v][w] = received;
            run.requested[v][w] = asked;
            run.outgoing[v][w] = sent;
            run.capacity[v][w] = cap;
            run.inventory[v][w + 1] = cap - sent;
        }
    }
    for (k, s) in shipments.iter().enumerate() {
        run.timelines[s.edge][s.day] += clipped[k];
    }
    run
}

pub struct OracleInstance {
    pub setup: RolloutSetup,
    pub lead_days: Vec<usize>,
    pub timelines: Vec<Vec<f64>>,
}

/// Random DAG with sparse integer shipments, some weeks over capacity.
pub fn random_instance(seed: u64) -> OracleInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nodes = rng.random_range(2..=5);
    let mut edges = Vec::new();
    for a in 0..nodes {
        for b in a + 1..nodes {
            if rng.random_bool(0.6) {
                edges.push((a, b));
            }
        }
    }
    if edges.is_empty() {
        edges.push((0, nodes - 1));
    }
    let horizon = 7 * rng.random_range(1..=4);
    let weeks = horizon / 7;
    let lead_days: Vec<usize> = edges.iter().map(|_| rng.random_range(0..=9)).collect();
    let timelines: Vec<Vec<f64>> = edges
        .iter()
        .map(|_| {
            (0..horizon)
                .map(|_| {
                    if rng.random_bool(0.2) {
                        rng.random_range(1..40) as f64
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    let lead = lead_days
        .iter()
        .map(|&l| {
            let mut p = vec![0.0; horizon];
            if l < horizon {
                p[l] = 1.0;
            }
            p
        })
        .collect();
    let setup = RolloutSetup {
        nodes,
        edges,
        horizon_days: horizon,
        start_inventory: (0..nodes).map(|_| rng.random_range(0..60) as f64).collect(),
        demand: (0..nodes)
            .map(|_| (0..weeks).map(|_| rng.random_range(0..25) as f64).collect())
            .collect(),
        lead,
    };
    OracleInstance {
        setup,
        lead_days,
        timelines,
    }
}

/// Croston recursions over the non-zero positions, written independently of
/// the library.
pub fn croston_oracle(series: &[f64], alpha: f64) -> Option<(f64, f64)> {
    let hits: Vec<(usize, f64)> = series
        .iter()
        .enumerate()
        .filter(|(_, &z)| z != 0.0)
        .map(|(i, &z)| (i + 1, z))
        .collect();
    let (&(p0, z0), rest) = hits.split_first()?;
    let mut size = z0;
    let mut interval = p0 as f64;
    let mut last = p0;
    for &(p, z) in rest {
        size = alpha * z + (1.0 - alpha) * size;
        interval = alpha * (p - last) as f64 + (1.0 - alpha) * interval;
        last = p;
    }
    Some((size, interval))
}

/// Twenty constructed intermittent series: periodic, bursty, single-event,
/// empty, leading and trailing zeros.
pub fn croston_series() -> Vec<Vec<f64>> {
    let mut out = vec![
        vec![0.0, 10.0, 0.0, 0.0, 20.0],
        vec![5.0; 12],
        vec![0.0; 15],
        vec![0.0, 0.0, 0.0, 42.0],
        vec![7.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        vec![1.0, 0.0, 2.0, 0.0, 0.0, 3.0, 0.0, 0.0, 0.0, 4.0],
        vec![100.0, 0.0, 100.0, 0.0, 100.0, 0.0, 100.0],
        vec![0.0, 0.0, 12.5, 0.0, 0.0, 12.5, 0.0, 0.0, 12.5],
        vec![3.0, 9.0, 0.0, 27.0, 0.0, 0.0, 81.0],
        vec![0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 55.5, 0.0],
    ];
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    while out.len() < 20 {
        let len = rng.random_range(10..60);
        let density = rng.random_range(0.05..0.6);
        out.push(
            (0..len)
                .map(|_| {
                    if rng.random_bool(density) {
                        rng.random_range(1..200) as f64
                    } else {
                        0.0
                    }
                })
                .collect(),
        );
    }
    out
}
