//! Packet delay and jitter, and the acceptance thresholds they are held to.
//!
//! Two jitter measures are kept side by side: the raw successive-difference
//! series `|d[i+1] - d[i]|` and the 1/16-gain recursive estimator
//! `J += (|D| - J) / 16` with `J = 0` initially. Both must stay under the
//! jitter threshold.

use std::fmt::Write as _;
use std::io::{self, Write};

use thiserror::Error;

use crate::scalar::Scalar;
use crate::sim::{Direction, PacketTraceEvent};

pub const DELAY_THRESHOLD_MS: f64 = 150.0;
pub const JITTER_THRESHOLD_MS: f64 = 30.0;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("trace is empty")]
    EmptyTrace,
    #[error("packet {packet_id}: timestamps go backwards along the path")]
    CausalityViolation { packet_id: u64 },
    #[error("I/O failure: {0}")]
    IoFailure(#[from] io::Error),
}

/// End-to-end delay of every delivered packet, in send order.
pub fn packet_delays<T: Scalar>(trace: &[PacketTraceEvent]) -> Result<Vec<T>, MetricsError> {
    if trace.is_empty() {
        return Err(MetricsError::EmptyTrace);
    }
    let mut delivered: Vec<&PacketTraceEvent> = Vec::with_capacity(trace.len());
    for ev in trace {
        if !ev.is_causal() {
            return Err(MetricsError::CausalityViolation {
                packet_id: ev.packet_id,
            });
        }
        if ev.receive_time_ms.is_some() {
            delivered.push(ev);
        }
    }
    delivered.sort_by(|a, b| {
        a.send_time_ms
            .total_cmp(&b.send_time_ms)
            .then(a.packet_id.cmp(&b.packet_id))
    });
    Ok(delivered
        .into_iter()
        .filter_map(|ev| ev.end_to_end_ms())
        .map(T::from_f64_lossy)
        .collect())
}

pub fn jitter_instantaneous<T: Scalar>(delays: &[T]) -> Vec<T> {
    delays.windows(2).map(|w| (w[1] - w[0]).abs()).collect()
}

pub fn jitter_smoothed<T: Scalar>(delays: &[T]) -> T {
    let gain = T::from_count(16);
    delays
        .windows(2)
        .fold(T::zero(), |j, w| j + ((w[1] - w[0]).abs() - j) / gain)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSummary<T> {
    pub direction: Direction,
    /// Packets sent.
    pub packet_count: usize,
    pub delays_ms: Vec<T>,
    pub delay_min_ms: T,
    pub delay_mean_ms: T,
    pub delay_max_ms: T,
    pub jitter_inst_ms: Vec<T>,
    pub jitter_inst_max_ms: T,
    pub jitter_smoothed_ms: T,
    pub drops: u64,
    pub delay_threshold_ms: T,
    pub jitter_threshold_ms: T,
}

impl<T: Scalar> MetricsSummary<T> {
    /// Builds a summary from raw delays. An empty series yields zero
    /// statistics; [`check_acceptance`] fails it on delivery.
    pub fn from_delays(direction: Direction, packet_count: usize, delays_ms: Vec<T>, drops: u64) -> Self {
        let (min, max, mean) = if delays_ms.is_empty() {
            (T::zero(), T::zero(), T::zero())
        } else {
            let min = delays_ms.iter().copied().fold(T::infinity(), T::min);
            let max = delays_ms.iter().copied().fold(T::neg_infinity(), T::max);
            let sum = delays_ms.iter().copied().fold(T::zero(), |a, b| a + b);
            // rounding in the sum can push the mean a hair outside [min, max]
            let mean = (sum / T::from_count(delays_ms.len())).max(min).min(max);
            (min, max, mean)
        };
        let jitter_inst_ms = jitter_instantaneous(&delays_ms);
        let jitter_inst_max_ms = jitter_inst_ms.iter().copied().fold(T::zero(), T::max);
        let jitter_smoothed_ms = jitter_smoothed(&delays_ms);
        Self {
            direction,
            packet_count,
            delays_ms,
            delay_min_ms: min,
            delay_mean_ms: mean,
            delay_max_ms: max,
            jitter_inst_ms,
            jitter_inst_max_ms,
            jitter_smoothed_ms,
            drops,
            delay_threshold_ms: T::from_f64_lossy(DELAY_THRESHOLD_MS),
            jitter_threshold_ms: T::from_f64_lossy(JITTER_THRESHOLD_MS),
        }
    }

    pub fn delivered(&self) -> usize {
        self.delays_ms.len()
    }
}

/// Summarizes the packets of one direction from a trace.
pub fn summarize<T: Scalar>(
    direction: Direction,
    trace: &[PacketTraceEvent],
) -> Result<MetricsSummary<T>, MetricsError> {
    let own: Vec<PacketTraceEvent> = trace.iter().filter(|ev| ev.direction == direction).cloned().collect();
    let delays = packet_delays::<T>(&own)?;
    let drops = own.iter().filter(|ev| ev.receive_time_ms.is_none()).count() as u64;
    Ok(MetricsSummary::from_delays(direction, own.len(), delays, drops))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check<T> {
    pub name: &'static str,
    pub value: T,
    pub threshold: T,
    /// threshold - value; positive means headroom.
    pub margin: T,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PassFailReport<T> {
    pub direction: Direction,
    pub checks: Vec<Check<T>>,
    pub pass: bool,
}

impl<T: Scalar> PassFailReport<T> {
    pub fn render(&self) -> String {
        let mut s = String::new();
        for c in &self.checks {
            let _ = writeln!(
                s,
                "{:<10} {:<18} value={:>9.3} limit={:>8.3} margin={:>9.3} {}",
                self.direction.label(),
                c.name,
                c.value,
                c.threshold,
                c.margin,
                if c.pass { "PASS" } else { "FAIL" }
            );
        }
        s
    }
}

/// Strict threshold checks on max delay and both jitter measures.
///
/// A summary with no delivered packets also fails.
pub fn check_acceptance<T: Scalar>(summary: &MetricsSummary<T>) -> PassFailReport<T> {
    let strict = |name, value: T, threshold: T| Check {
        name,
        value,
        threshold,
        margin: threshold - value,
        pass: value < threshold,
    };
    let delivered = T::from_count(summary.delivered());
    let checks = vec![
        strict("delay_max_ms", summary.delay_max_ms, summary.delay_threshold_ms),
        strict(
            "jitter_inst_max_ms",
            summary.jitter_inst_max_ms,
            summary.jitter_threshold_ms,
        ),
        strict(
            "jitter_smoothed_ms",
            summary.jitter_smoothed_ms,
            summary.jitter_threshold_ms,
        ),
        Check {
            name: "delivered",
            value: delivered,
            threshold: T::one(),
            margin: delivered - T::one(),
            pass: summary.delivered() > 0,
        },
    ];
    let pass = checks.iter().all(|c| c.pass);
    PassFailReport {
        direction: summary.direction,
        checks,
        pass,
    }
}

pub const SUMMARY_CSV_HEADER: &str =
    "direction,packets,delay_min,delay_mean,delay_max,jitter_inst_max,jitter_smoothed,drops,pass";

/// Writes one row per summary, ordered by direction then packet count.
pub fn write_csv<T: Scalar, W: Write>(summaries: &[MetricsSummary<T>], mut out: W) -> Result<(), MetricsError> {
    let mut ordered: Vec<&MetricsSummary<T>> = summaries.iter().collect();
    ordered.sort_by_key(|s| (s.direction, s.packet_count));
    writeln!(out, "{SUMMARY_CSV_HEADER}")?;
    for s in ordered {
        writeln!(
            out,
            "{},{},{:.3},{:.3},{:.3},{:.3},{:.3},{},{}",
            s.direction.label(),
            s.packet_count,
            s.delay_min_ms,
            s.delay_mean_ms,
            s.delay_max_ms,
            s.jitter_inst_max_ms,
            s.jitter_smoothed_ms,
            s.drops,
            check_acceptance(s).pass
        )?;
    }
    out.flush()?;
    Ok(())
}

/// Plain-text table of summaries for terminals.
pub fn render_table<T: Scalar>(summaries: &[MetricsSummary<T>]) -> String {
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:<10} {:>7} {:>9} {:>9} {:>9} {:>11} {:>11} {:>5}  result",
        "direction", "packets", "dmin_ms", "dmean_ms", "dmax_ms", "jinst_max", "jsmooth", "drops"
    );
    for m in summaries {
        let _ = writeln!(
            s,
            "{:<10} {:>7} {:>9.3} {:>9.3} {:>9.3} {:>11.3} {:>11.3} {:>5}  {}",
            m.direction.label(),
            m.packet_count,
            m.delay_min_ms,
            m.delay_mean_ms,
            m.delay_max_ms,
            m.jitter_inst_max_ms,
            m.jitter_smoothed_ms,
            m.drops,
            if check_acceptance(m).pass { "PASS" } else { "FAIL" }
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(id: u64, send: f64, recv: Option<f64>) -> PacketTraceEvent {
        PacketTraceEvent {
            packet_id: id,
            direction: Direction::IaxToRsw,
            send_time_ms: send,
            gateway_in_ms: send,
            gateway_out_ms: recv,
            receive_time_ms: recv,
            size_bytes_in: 37,
            size_bytes_out: 45,
        }
    }

    #[test]
    fn delays_basic() {
        assert_eq!(packet_delays::<f64>(&[ev(0, 0.0, Some(7.5))]).unwrap(), vec![7.5]);
        let zero = [ev(0, 0.0, Some(0.0)), ev(1, 20.0, Some(20.0))];
        assert_eq!(packet_delays::<f64>(&zero).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn delays_errors() {
        assert!(matches!(packet_delays::<f64>(&[]), Err(MetricsError::EmptyTrace)));
        let mut bad = ev(3, 10.0, Some(5.0));
        bad.gateway_in_ms = 10.0;
        assert!(matches!(
            packet_delays::<f64>(&[bad]),
            Err(MetricsError::CausalityViolation { packet_id: 3 })
        ));
    }

    #[test]
    fn delays_in_send_order_skip_drops() {
        let trace = [ev(1, 20.0, Some(23.0)), ev(0, 0.0, Some(2.0)), ev(2, 40.0, None)];
        assert_eq!(packet_delays::<f32>(&trace).unwrap(), vec![2.0f32, 3.0]);
    }

    #[test]
    fn instantaneous() {
        assert_eq!(jitter_instantaneous(&[5.0, 5.0, 5.0]), vec![0.0, 0.0]);
        assert_eq!(jitter_instantaneous(&[5.0, 9.0, 6.0]), vec![4.0, 3.0]);
        assert!(jitter_instantaneous(&[5.0f64]).is_empty());
    }

    #[test]
    fn smoothed() {
        assert_eq!(jitter_smoothed(&[3.0, 3.0, 3.0, 3.0]), 0.0);
        assert_eq!(jitter_smoothed(&[0.0, 16.0]), 1.0);
        assert_eq!(jitter_smoothed(&[0.0, 16.0, 16.0]), 0.9375);
        assert_eq!(jitter_smoothed(&[0.0f32, 16.0, 16.0]), 0.9375f32);
        assert_eq!(jitter_smoothed(&[4.0f64]), 0.0);
    }

    fn summary(delay_max: f64, jitter: f64) -> MetricsSummary<f64> {
        let mut s = MetricsSummary::from_delays(Direction::RswToIax, 2, vec![0.0, delay_max], 0);
        s.jitter_inst_max_ms = jitter;
        s.jitter_smoothed_ms = jitter;
        s
    }

    #[test]
    fn acceptance_examples() {
        assert!(check_acceptance(&summary(15.0, 4.3)).pass);
        assert!(!check_acceptance(&summary(150.0, 0.0)).pass);
        assert!(check_acceptance(&summary(0.0, 0.0)).pass);
        assert!(!check_acceptance(&summary(10.0, 30.0)).pass);
        let r = check_acceptance(&summary(15.0, 4.3));
        assert_eq!(r.checks[0].margin, 135.0);
    }

    #[test]
    fn acceptance_requires_delivery() {
        let s = MetricsSummary::<f64>::from_delays(Direction::IaxToRsw, 5, vec![], 5);
        assert!(!check_acceptance(&s).pass);
    }

    #[test]
    fn summary_invariants() {
        let s = MetricsSummary::from_delays(Direction::IaxToRsw, 3, vec![5.0, 9.0, 6.0], 0);
        assert_eq!((s.delay_min_ms, s.delay_max_ms), (5.0, 9.0));
        assert!((s.delay_mean_ms - 20.0f64 / 3.0).abs() < 1e-12);
        assert_eq!(s.jitter_inst_ms.len(), 2);
        assert_eq!(s.jitter_inst_max_ms, 4.0);
    }

    #[test]
    fn csv_shapes() {
        let mut buf = Vec::new();
        write_csv::<f64, _>(&[], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), format!("{SUMMARY_CSV_HEADER}\n"));

        let mut buf = Vec::new();
        write_csv(&[summary(12.0, 2.0)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1], "rsw-to-iax,2,0.000,6.000,12.000,2.000,2.000,0,true");
    }

    #[test]
    fn csv_ordering() {
        let a = MetricsSummary::from_delays(Direction::RswToIax, 10, vec![1.0], 0);
        let b = MetricsSummary::from_delays(Direction::IaxToRsw, 20, vec![1.0], 0);
        let c = MetricsSummary::from_delays(Direction::IaxToRsw, 10, vec![1.0], 0);
        let mut buf = Vec::new();
        write_csv(&[a, b, c], &mut buf).unwrap();
        let rows: Vec<String> = String::from_utf8(buf)
            .unwrap()
            .lines()
            .skip(1)
            .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
            .collect();
        assert_eq!(rows, vec!["iax-to-rsw,10", "iax-to-rsw,20", "rsw-to-iax,10"]);
    }
}
