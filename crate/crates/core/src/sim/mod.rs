//! Slot-level simulation.
//!
//! Each slot runs: arrivals, the barring gate, the access scheme, decoding,
//! and bookkeeping. Failed packets stay backlogged until they succeed or use
//! up `max_attempts`. All randomness comes from per-purpose streams derived
//! from the run seed (see [`crate::rng`]), and RB decoding is pure, so a run
//! is reproducible bit for bit whatever the worker count.

mod engine;
mod metrics;
mod sweep;

pub use engine::run_simulation;
pub use metrics::{MetricsSeries, SlotMetrics, Summary, WindowMetrics};
pub use sweep::{sweep, sweep_with_seeds, SweepRow};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytics::{exact_aar, DecodeMode, SelectionModel};
    use crate::config::{parse_config, RunConfig};
    use crate::grid::PowerGrid;

    fn cfg(text: &str) -> RunConfig {
        parse_config(text, None).unwrap().config
    }

    const GF: &str = "scheme = \"gf\"\nslots = 100\n[grid]\nN = 2\nM = 1\n[traffic]\ntotal_devices = 1\n";

    #[test]
    fn lone_saturated_device_always_succeeds() {
        let m = run_simulation(&cfg(GF), 3, 1).unwrap();
        assert_eq!(m.summary.aar, 1.0);
        assert_eq!(m.slots.len(), 100);
        assert!(m.slots.iter().all(|s| s.successes == 1 && s.active == 1));
    }

    #[test]
    fn runs_are_reproducible_across_workers() {
        let c = cfg(&GF.replace("M = 1", "M = 4").replace("total_devices = 1", "total_devices = 12"));
        let a = run_simulation(&c, 9, 1).unwrap();
        let b = run_simulation(&c, 9, 1).unwrap();
        let p = run_simulation(&c, 9, 4).unwrap();
        assert_eq!(a, b);
        assert_eq!(a, p);
        assert_ne!(a, run_simulation(&c, 10, 1).unwrap());
    }

    #[test]
    fn conservation_and_load_bound() {
        for scheme in ["\"gb\"", "\"gf\""] {
            let c = cfg(&format!(
                "scheme = {scheme}\nslots = 300\n[grid]\nN = 2\nM = 3\n[traffic]\ntotal_devices = 9\n\
                 model = {{ kind = \"bernoulli\", activation_prob = 0.3 }}\n[barring]\nenabled = true\nperiod = 5\n"
            ));
            let m = run_simulation(&c, 1, 1).unwrap();
            for s in &m.slots {
                assert_eq!(s.successes + s.failures + s.silent, s.active);
                assert!(s.active <= s.backlog && s.backlog <= 9);
            }
        }
    }

    #[test]
    fn windowed_aar_is_the_window_mean() {
        let c = cfg(&GF.replace("total_devices = 1", "total_devices = 3").replace("slots = 100", "slots = 250"));
        let m = run_simulation(&c, 2, 1).unwrap();
        assert_eq!(m.windows.len(), 3);
        for w in &m.windows {
            let slice = &m.slots[w.start as usize..(w.start + w.slots) as usize];
            let mean = slice.iter().map(|s| s.successes as f64).sum::<f64>() / w.slots as f64;
            assert!((w.aar - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn saturation_matches_exact_two_devices_one_rb() {
        let c = cfg(&GF.replace("total_devices = 1", "total_devices = 2").replace("slots = 100", "slots = 1000000\nrecord_slots = false"));
        let m = run_simulation(&c, 11, 1).unwrap();
        let grid = PowerGrid::new(2, 1, 1.0, 1.0, 1.0).unwrap();
        let exact = exact_aar(2, &grid, &SelectionModel::Uniform, DecodeMode::CollisionLimited).unwrap();
        assert_eq!(exact.expected_successes_per_slot, 1.0);
        let s = &m.summary;
        assert!((s.aar - 1.0).abs() <= 4.0 * s.aar_stderr, "{} ± {}", s.aar, s.aar_stderr);
    }

    #[test]
    fn gb_baseline_serves_min_of_backlog_and_rbs() {
        let base = "scheme = \"gb\"\nslots = 50\n[grid]\nN = 2\nM = 10\n[traffic]\n";
        for (n, want) in [(3, 3.0), (10, 10.0), (50, 10.0)] {
            let m = run_simulation(&cfg(&format!("{base}total_devices = {n}\n")), 0, 1).unwrap();
            assert_eq!(m.summary.aar, want);
        }
    }

    #[test]
    fn dropped_after_max_attempts() {
        // Three saturated devices on one PD-RB always collide.
        let c = cfg("scheme = \"gf\"\nslots = 20\n[grid]\nN = 1\nM = 1\n[traffic]\ntotal_devices = 3\nmax_attempts = 4\n");
        let m = run_simulation(&c, 0, 1).unwrap();
        assert_eq!(m.summary.aar, 0.0);
        assert_eq!(m.summary.dropped, 15);
        assert_eq!(m.slots[3].dropped, 3);
    }

    #[test]
    fn sweep_single_value_matches_the_run() {
        let c = cfg(&GF.replace("total_devices = 1", "total_devices = 4").replace("M = 1", "M = 2"));
        let rows = sweep(&c, "traffic.total_devices", &[toml::Value::Integer(4)], 1, 5, 1).unwrap();
        let run = run_simulation(&c, 5, 1).unwrap().summary;
        assert_eq!(rows.len(), 1);
        assert_eq!((rows[0].aar_mean, rows[0].aar_stderr), (run.aar, 0.0));
        assert_eq!(rows[0].value, "4");
        let same = sweep_with_seeds(&c, "traffic.total_devices", &[toml::Value::Integer(4)], &[7, 7], 2).unwrap();
        assert_eq!(same[0].aar_stderr, 0.0);
        assert!(sweep(&c, "grid.N", &[toml::Value::Integer(0)], 1, 0, 1).is_err());
        assert!(sweep(&c, "grid.N", &[], 1, 0, 1).unwrap().is_empty());
    }

    #[test]
    fn gf_sweep_rises_then_falls() {
        let c = cfg("scheme = \"gf\"\nslots = 4000\nrecord_slots = false\n[grid]\nN = 2\nM = 10\n");
        let values: Vec<_> = (1..=60).step_by(3).map(toml::Value::Integer).collect();
        let rows = sweep(&c, "traffic.total_devices", &values, 1, 1, 4).unwrap();
        let aar: Vec<f64> = rows.iter().map(|r| r.aar_mean).collect();
        let peak = aar.iter().cloned().enumerate().max_by(|a, b| a.1.total_cmp(&b.1)).unwrap().0;
        assert!(peak > 0 && peak < aar.len() - 1, "{aar:?}");
        // Unimodal up to noise: no step against the trend larger than 0.3.
        for w in aar[..=peak].windows(2) {
            assert!(w[1] > w[0] - 0.3, "{aar:?}");
        }
        for w in aar[peak..].windows(2) {
            assert!(w[1] < w[0] + 0.3, "{aar:?}");
        }
        assert!(aar[aar.len() - 1] < 0.5 * aar[peak]);
    }
}
