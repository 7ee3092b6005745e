//! Run evaluation. Everything here is a pure function of a [`Trace`], so
//! metrics recomputed from a stored trace match the ones produced by the run.

use serde::{Deserialize, Serialize};

use crate::control::{invariant_set_residual, SystemSnapshot};
use crate::error::MetricsError;
use crate::model::{ConnectivityMatrix, DissipativeGains, RestLengths, VirtualNode};
use crate::trace::{Trace, TraceRecord};
use crate::Vec3;

/// Linear-interpolation quantile of an ascending slice.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty());
    let pos = p.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
    pub iqr: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q25 = quantile(&v, 0.25);
        let q75 = quantile(&v, 0.75);
        Some(Self {
            count: v.len(),
            min: v[0],
            q25,
            median: quantile(&v, 0.5),
            q75,
            max: v[v.len() - 1],
            mean: v.iter().sum::<f64>() / v.len() as f64,
            iqr: q75 - q25,
        })
    }
}

/// How the payload is compared with the reference.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TrackingMode {
    /// Full 3-D distance to the time-indexed reference.
    #[default]
    Euclidean,
    /// Distance in the horizontal plane only.
    Horizontal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackingError {
    /// Distance at every record, m.
    pub series: Vec<f64>,
    /// Statistics over records at or after the warmup.
    pub summary: Summary,
}

pub fn tracking_error(records: &[TraceRecord], warmup: f64, mode: TrackingMode) -> Result<TrackingError, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let series: Vec<f64> = records
        .iter()
        .map(|r| {
            let mut d = r.payload.position - r.reference.position;
            if mode == TrackingMode::Horizontal {
                d.z = 0.0;
            }
            d.norm()
        })
        .collect();
    let settled: Vec<f64> = records
        .iter()
        .zip(&series)
        .filter(|(r, _)| r.t >= warmup)
        .map(|(_, e)| *e)
        .collect();
    let summary = Summary::of(if settled.is_empty() { &series } else { &settled }).expect("non-empty");
    Ok(TrackingError { series, summary })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotTension {
    pub id: usize,
    /// Tension magnitude statistics over the window, N.
    pub summary: Summary,
    /// Whether the cable stayed attached over the whole window.
    pub attached_throughout: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensionStats {
    pub window_start: f64,
    pub per_robot: Vec<RobotTension>,
    /// (max mean − min mean) / overall mean, over robots attached throughout.
    pub imbalance: f64,
}

pub fn tension_stats(records: &[TraceRecord], window_start: f64) -> Result<TensionStats, MetricsError> {
    let window: Vec<&TraceRecord> = records.iter().filter(|r| r.t >= window_start).collect();
    if window.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let n = window.iter().map(|r| r.robots.len()).max().unwrap_or(0);
    let mut per_robot = Vec::new();
    for id in 0..n {
        let mut samples = Vec::new();
        let mut throughout = true;
        for r in &window {
            match r.robots.iter().find(|b| b.id == id) {
                Some(b) => {
                    samples.push(b.tension.norm());
                    throughout &= b.attached;
                }
                None => throughout = false,
            }
        }
        if let Some(summary) = Summary::of(&samples) {
            per_robot.push(RobotTension {
                id,
                summary,
                attached_throughout: throughout,
            });
        }
    }
    let means: Vec<f64> = per_robot
        .iter()
        .filter(|r| r.attached_throughout)
        .map(|r| r.summary.mean)
        .collect();
    let imbalance = if means.is_empty() {
        0.0
    } else {
        let overall = means.iter().sum::<f64>() / means.len() as f64;
        let hi = means.iter().copied().fold(f64::MIN, f64::max);
        let lo = means.iter().copied().fold(f64::MAX, f64::min);
        if overall > 0.0 {
            (hi - lo) / overall
        } else {
            0.0
        }
    };
    Ok(TensionStats {
        window_start,
        per_robot,
        imbalance,
    })
}

fn cross(o: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
}

/// Counter-clockwise convex hull (monotone chain), collinear points dropped.
pub fn convex_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut p = points.to_vec();
    p.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &(f64, f64)>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &pt in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], pt) <= 0.0 {
                hull.pop();
            }
            hull.push(pt);
        }
        hull.pop();
    }
    hull
}

fn segment_distance(p: (f64, f64), a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dx, dy) = (b.0 - a.0, b.1 - a.1);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 {
        (((p.0 - a.0) * dx + (p.1 - a.1) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (cx, cy) = (a.0 + s * dx, a.1 + s * dy);
    ((p.0 - cx).powi(2) + (p.1 - cy).powi(2)).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HullResidual {
    /// Horizontal distance from the payload to the node hull, 0 inside, m.
    pub residual: f64,
    pub inside: bool,
    /// Normalized convex-combination weights, one per node.
    pub weights: Vec<f64>,
    /// Weighted combination of the node positions (horizontal).
    pub combination: Vec3,
    /// Horizontal distance between the payload and `combination`, m.
    pub combination_error: f64,
}

/// Tests the payload against the hull of the node positions in the
/// horizontal plane, and forms the weighted combination with
/// `α_i = 1 − l_i(0)/l_i`, `l_i` the payload-node distance.
///
/// When every `α_i` vanishes (the formation sits at its lock geometry) the
/// weights are the limit of equal `α`, i.e. the centroid.
pub fn convex_hull_residual(nodes: &[Vec3], payload: &Vec3, rest: &[f64]) -> Result<HullResidual, MetricsError> {
    assert_eq!(nodes.len(), rest.len());
    let pts: Vec<(f64, f64)> = nodes.iter().map(|q| (q.x, q.y)).collect();
    let hull = convex_hull(&pts);
    if hull.len() < 3 {
        return Err(MetricsError::DegenerateHull { count: nodes.len() });
    }
    let p = (payload.x, payload.y);
    let inside = (0..hull.len()).all(|k| cross(hull[k], hull[(k + 1) % hull.len()], p) >= 0.0);
    let residual = if inside {
        0.0
    } else {
        (0..hull.len())
            .map(|k| segment_distance(p, hull[k], hull[(k + 1) % hull.len()]))
            .fold(f64::INFINITY, f64::min)
    };

    let alpha: Vec<f64> = nodes
        .iter()
        .zip(rest)
        .map(|(q, &l0)| {
            let l = (payload - q).norm();
            if l > 0.0 {
                1.0 - l0 / l
            } else {
                0.0
            }
        })
        .collect();
    let sum: f64 = alpha.iter().sum();
    let weights: Vec<f64> = if sum.abs() > 1e-12 {
        alpha.iter().map(|a| a / sum).collect()
    } else {
        vec![1.0 / nodes.len() as f64; nodes.len()]
    };
    let mut combination = nodes
        .iter()
        .zip(&weights)
        .fold(Vec3::zeros(), |acc, (q, w)| acc + q * *w);
    combination.z = 0.0;
    let combination_error = ((payload.x - combination.x).powi(2) + (payload.y - combination.y).powi(2)).sqrt();
    Ok(HullResidual {
        residual,
        inside,
        weights,
        combination,
        combination_error,
    })
}

/// Hull check on one record, over attached robots that have a lock-time
/// payload-node distance.
pub fn hull_from_record(record: &TraceRecord, payload_node_rest: &[Option<f64>]) -> Result<HullResidual, MetricsError> {
    let mut nodes = Vec::new();
    let mut rest = Vec::new();
    for r in record.robots.iter().filter(|r| r.attached) {
        if let (Some(node), Some(Some(l0))) = (r.node, payload_node_rest.get(r.id)) {
            nodes.push(node.position);
            rest.push(*l0);
        }
    }
    convex_hull_residual(&nodes, &record.payload.position, &rest)
}

/// Terminal-set residual of one record, over attached robots.
pub fn residual_of(record: &TraceRecord) -> f64 {
    let attached: Vec<_> = record
        .robots
        .iter()
        .filter(|r| r.attached && r.node.is_some())
        .collect();
    let index = |id: usize| attached.iter().position(|r| r.id == id);
    let edges: Vec<(usize, usize)> = record
        .edges
        .iter()
        .filter_map(|&(a, b)| Some((index(a)?, index(b)?)))
        .collect();
    let snapshot = SystemSnapshot {
        positions: attached.iter().map(|r| r.position).collect(),
        velocities: attached.iter().map(|r| r.velocity).collect(),
        nodes: attached.iter().map(|r| r.node.expect("filtered")).collect(),
        connectivity: ConnectivityMatrix::from_edges(attached.len(), &edges),
        center_velocity: record.center.map_or_else(Vec3::zeros, |c| c.velocity),
    };
    invariant_set_residual(&snapshot)
}

/// Earliest record time after which the residual stays below `tol` until the
/// end of the trace, provided that tail lasts at least `window` seconds.
pub fn convergence_time(times: &[f64], residuals: &[f64], tol: f64, window: f64) -> Option<f64> {
    assert_eq!(times.len(), residuals.len());
    let last = *times.last()?;
    let mut start = None;
    for (k, &r) in residuals.iter().enumerate().rev() {
        if r < tol {
            start = Some(k);
        } else {
            break;
        }
    }
    let t = times[start?];
    (last - t >= window - 1e-9).then_some(t)
}

/// Lyapunov-style energy of the node system for one record.
///
/// Kinetic part: `½ m_i |q̇_i − q̇_0|²` with `q̇_0` the velocity of the node
/// centroid. Potential part: every spring in the control law exerts
/// `k (1 − l0/l) d` along its separation `d`, i.e. a force of magnitude
/// `k (l − l0)`, whose potential is `½ k (l − l0)²` (zero at rest length).
/// Springs counted: perceived node pairs, each robot's node-center link and
/// each node-robot link.
pub fn energy(record: &TraceRecord, rest: &RestLengths, gains: &DissipativeGains) -> f64 {
    let center_vel = record.center.map_or_else(Vec3::zeros, |c| c.velocity);
    let mut v = 0.0;
    let node = |id: usize| -> Option<VirtualNode> { record.robots.iter().find(|r| r.id == id && r.attached)?.node };
    for r in record.robots.iter().filter(|r| r.attached) {
        let Some(q) = r.node else { continue };
        v += 0.5 * r.mass * (q.velocity - center_vel).norm_squared();
        if let Some(l0) = rest.node_robot.get(r.id) {
            let l = (q.position - r.position).norm();
            v += 0.5 * gains.k_i * (l - l0).powi(2);
        }
        if let (Some(c), Some(Some(l0))) = (r.center_estimate, rest.center.get(r.id)) {
            if record.edges.iter().any(|&(a, b)| a == r.id || b == r.id) {
                let l = (q.position - c.position).norm();
                v += 0.5 * gains.k_ij * (l - l0).powi(2);
            }
        }
    }
    for &(a, b) in &record.edges {
        if let (Some(qa), Some(qb), Some(l0)) = (node(a), node(b), rest.pair(a, b)) {
            let l = (qa.position - qb.position).norm();
            v += 0.5 * gains.k_ij * (l - l0).powi(2);
        }
    }
    v
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// V at every record, J.
    pub series: Vec<f64>,
    /// V(k+1) − V(k), one shorter than `series`, J.
    pub deltas: Vec<f64>,
}

pub fn energy_ledger(
    records: &[TraceRecord],
    rest: &RestLengths,
    gains: &DissipativeGains,
) -> Result<EnergyLedger, MetricsError> {
    if records.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let series: Vec<f64> = records.iter().map(|r| energy(r, rest, gains)).collect();
    let deltas = series.windows(2).map(|w| w[1] - w[0]).collect();
    Ok(EnergyLedger { series, deltas })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub schema_version: u32,
    pub times: Vec<f64>,
    pub tracking: TrackingError,
    /// Cable tension magnitudes per record, N (0 for detached robots).
    pub tensions: Vec<Vec<f64>>,
    pub tension_stats: TensionStats,
    pub residual: Vec<f64>,
    pub convergence_time: Option<f64>,
    pub steady_window_start: f64,
    /// Hull check at the final record; absent when the node set is degenerate.
    pub hull: Option<HullResidual>,
    pub energy: EnergyLedger,
    pub event_times: Vec<f64>,
}

/// Computes every metric from a trace and the scenario it records.
pub fn compute_metrics(trace: &Trace, mode: TrackingMode) -> Result<RunMetrics, MetricsError> {
    let records = &trace.records;
    if records.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let spec = &trace.header.spec;
    let times: Vec<f64> = records.iter().map(|r| r.t).collect();
    let tracking = tracking_error(records, spec.metrics.warmup, mode)?;
    let tensions = records
        .iter()
        .map(|r| r.robots.iter().map(|b| b.tension.norm()).collect())
        .collect();
    let residual: Vec<f64> = records.iter().map(residual_of).collect();
    let convergence_time = convergence_time(
        &times,
        &residual,
        spec.metrics.convergence_tol,
        spec.metrics.convergence_window,
    );
    let t_end = *times.last().expect("non-empty");
    let final_share = times[0] + 0.8 * (t_end - times[0]);
    let steady_window_start = convergence_time.map_or(final_share, |t| t.min(final_share));
    let tension_stats = tension_stats(records, steady_window_start)?;
    let hull = hull_from_record(records.last().expect("non-empty"), &trace.header.payload_node_rest).ok();
    let energy = energy_ledger(records, &trace.header.rest, &spec.gains)?;
    Ok(RunMetrics {
        schema_version: crate::trace::SCHEMA_VERSION,
        times,
        tracking,
        tensions,
        tension_stats,
        residual,
        convergence_time,
        steady_window_start,
        hull,
        energy,
        event_times: trace.header.events.iter().map(|e| e.t).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::ReferenceSample;
    use crate::trace::{Diagnostics, PayloadRecord, RobotRecord, SCHEMA_VERSION};
    use approx::assert_relative_eq;

    fn record(t: f64, payload: Vec3, reference: Vec3) -> TraceRecord {
        TraceRecord {
            schema_version: SCHEMA_VERSION,
            tick: (t * 1000.0) as u64,
            t,
            robots: vec![],
            payload: PayloadRecord {
                position: payload,
                velocity: Vec3::zeros(),
            },
            reference: ReferenceSample {
                position: reference,
                ..Default::default()
            },
            center: None,
            edges: vec![],
            wind: Vec3::zeros(),
            diagnostics: Diagnostics::default(),
        }
    }

    fn robot(id: usize, tension: f64, attached: bool) -> RobotRecord {
        RobotRecord {
            id,
            mass: 1.0,
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            command: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            tension: Vec3::new(0.0, 0.0, -tension),
            alive: true,
            attached,
            node: None,
            center_estimate: None,
        }
    }

    #[test]
    fn summary_of_known_values() {
        let s = Summary::of(&[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.mean, 2.0);
        assert_eq!(s.max, 3.0);
        assert_eq!(s.iqr, 1.0);
        let one = Summary::of(&[0.7]).unwrap();
        assert_eq!((one.median, one.mean, one.iqr), (0.7, 0.7, 0.0));
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn tracking_error_examples() {
        let on: Vec<_> = (0..10)
            .map(|k| record(k as f64, Vec3::new(k as f64, 0.0, 1.0), Vec3::new(k as f64, 0.0, 1.0)))
            .collect();
        let e = tracking_error(&on, 0.0, TrackingMode::Euclidean).unwrap();
        assert!(e.series.iter().all(|&x| x == 0.0));

        let off: Vec<_> = (0..10)
            .map(|k| record(k as f64, Vec3::new(0.0, 1.0, 0.0), Vec3::zeros()))
            .collect();
        let e = tracking_error(&off, 0.0, TrackingMode::Euclidean).unwrap();
        assert_eq!(e.summary.median, 1.0);
        assert_eq!(e.summary.mean, 1.0);

        let three: Vec<_> = [1.0, 2.0, 3.0]
            .iter()
            .enumerate()
            .map(|(k, &d)| record(k as f64, Vec3::new(d, 0.0, 0.0), Vec3::zeros()))
            .collect();
        assert_eq!(
            tracking_error(&three, 0.0, TrackingMode::Euclidean)
                .unwrap()
                .summary
                .median,
            2.0
        );

        assert!(matches!(
            tracking_error(&[], 0.0, TrackingMode::Euclidean),
            Err(MetricsError::EmptyTrace)
        ));
    }

    #[test]
    fn horizontal_mode_ignores_altitude() {
        let r = [record(0.0, Vec3::new(3.0, 4.0, 7.0), Vec3::zeros())];
        assert_eq!(
            tracking_error(&r, 0.0, TrackingMode::Horizontal).unwrap().series,
            vec![5.0]
        );
    }

    #[test]
    fn warmup_excludes_early_records() {
        let recs: Vec<_> = (0..10)
            .map(|k| {
                record(
                    k as f64,
                    Vec3::new(if k < 5 { 10.0 } else { 1.0 }, 0.0, 0.0),
                    Vec3::zeros(),
                )
            })
            .collect();
        let e = tracking_error(&recs, 5.0, TrackingMode::Euclidean).unwrap();
        assert_eq!(e.summary.max, 1.0);
        assert_eq!(e.series.len(), 10);
    }

    #[test]
    fn tension_imbalance_and_unplugged_robot() {
        let recs: Vec<_> = (0..4)
            .map(|k| {
                let mut r = record(k as f64, Vec3::zeros(), Vec3::zeros());
                r.robots = vec![robot(0, 10.0, true), robot(1, 12.0, true), robot(2, 0.0, k < 1)];
                r
            })
            .collect();
        let s = tension_stats(&recs, 1.0).unwrap();
        assert_relative_eq!(s.imbalance, 2.0 / 11.0);
        assert!(!s.per_robot[2].attached_throughout);
        assert_eq!(s.per_robot[2].summary.max, 0.0);
    }

    #[test]
    fn hull_examples() {
        let square = [
            Vec3::new(1.0, 1.0, 5.0),
            Vec3::new(-1.0, 1.0, 5.0),
            Vec3::new(-1.0, -1.0, 5.0),
            Vec3::new(1.0, -1.0, 5.0),
        ];
        // equal α: every payload-node distance is twice its rest length
        let payload = Vec3::new(0.0, 0.0, 0.0);
        let rest: Vec<f64> = square.iter().map(|q| (payload - q).norm() / 2.0).collect();
        let h = convex_hull_residual(&square, &payload, &rest).unwrap();
        assert!(h.inside);
        assert_eq!(h.residual, 0.0);
        assert_relative_eq!(h.combination, Vec3::zeros(), epsilon = 1e-12);
        assert_relative_eq!(h.weights.iter().sum::<f64>(), 1.0, epsilon = 1e-12);

        let at_vertex = convex_hull_residual(&square, &Vec3::new(1.0, 1.0, 0.0), &[1.0; 4]).unwrap();
        assert!(at_vertex.inside);
        assert_eq!(at_vertex.residual, 0.0);

        let outside = convex_hull_residual(&square, &Vec3::new(3.0, 0.0, 0.0), &[1.0; 4]).unwrap();
        assert!(!outside.inside);
        assert_relative_eq!(outside.residual, 2.0);

        let line = [Vec3::zeros(), Vec3::new(1.0, 0.0, 0.0), Vec3::new(2.0, 0.0, 0.0)];
        assert!(matches!(
            convex_hull_residual(&line, &Vec3::zeros(), &[1.0; 3]),
            Err(MetricsError::DegenerateHull { count: 3 })
        ));
    }

    #[test]
    fn hull_weights_fall_back_to_centroid_at_lock() {
        let tri = [
            Vec3::new(0.0, 0.0, 1.0),
            Vec3::new(3.0, 0.0, 1.0),
            Vec3::new(0.0, 3.0, 1.0),
        ];
        let payload = Vec3::new(0.5, 0.5, 0.0);
        let rest: Vec<f64> = tri.iter().map(|q| (payload - q).norm()).collect();
        let h = convex_hull_residual(&tri, &payload, &rest).unwrap();
        assert_relative_eq!(h.combination, Vec3::new(1.0, 1.0, 0.0), epsilon = 1e-12);
    }

    #[test]
    fn convergence_time_examples() {
        let times: Vec<f64> = (0..100).map(|k| k as f64 * 0.1).collect();
        assert_eq!(convergence_time(&times, &[0.0; 100], 1e-2, 2.0), Some(0.0));
        let diverging: Vec<f64> = times.iter().map(|t| t * t).collect();
        assert_eq!(convergence_time(&times, &diverging, 1e-2, 2.0), None);
        let decaying: Vec<f64> = times.iter().map(|t| (-t).exp()).collect();
        let t = convergence_time(&times, &decaying, 1e-2, 2.0).unwrap();
        // first sample with e^{-t} < 0.01 is t = 4.7
        assert_relative_eq!(t, 4.7, epsilon = 1e-9);
        // a tail shorter than the window is not convergence
        assert_eq!(convergence_time(&times, &decaying, 1e-4, 2.0), None);
    }

    #[test]
    fn quantile_interpolates() {
        assert_eq!(quantile(&[0.0, 10.0], 0.25), 2.5);
        assert_eq!(quantile(&[4.0], 0.9), 4.0);
    }
}
