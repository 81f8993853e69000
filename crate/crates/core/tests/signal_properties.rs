use std::f64::consts::PI;

use proptest::prelude::*;
use ridetilt::sensor_model::{rest_reading, Sample, Trace};
use ridetilt::signal::{align, lowpass, resample_linear, residual_stats, subtract, FilterSpec};

fn trace_from(values: &[[f64; 3]], rate: f64) -> Trace {
    Trace::new(
        "p",
        rate,
        values
            .iter()
            .enumerate()
            .map(|(i, v)| Sample::from_axes(i as f64 / rate, *v))
            .collect(),
    )
}

fn values(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<[f64; 3]>> {
    prop::collection::vec(prop::array::uniform3(-2.0f64..2.0), n)
}

/// Independent oracle: least-squares amplitude of a sinusoid at `f` over
/// whole periods, by projection onto sin and cos.
fn fitted_amplitude(ts: &[f64], ys: &[f64], f: f64) -> f64 {
    let (mut s, mut c) = (0.0, 0.0);
    for (t, y) in ts.iter().zip(ys) {
        s += y * (2.0 * PI * f * t).sin();
        c += y * (2.0 * PI * f * t).cos();
    }
    let n = ts.len() as f64;
    2.0 * (s * s + c * c).sqrt() / n
}

/// Magnitude of `y[n] = y[n-1] + α (x[n] - y[n-1])` at frequency `f`.
fn discrete_first_order_gain(alpha: f64, f: f64, dt: f64) -> f64 {
    let w = 2.0 * PI * f * dt;
    let re = 1.0 - (1.0 - alpha) * w.cos();
    let im = (1.0 - alpha) * w.sin();
    alpha / (re * re + im * im).sqrt()
}

fn measured_gain(rate: f64, cutoff: f64, f: f64) -> f64 {
    let spec = FilterSpec::new(cutoff, 1);
    let n = (rate * 40.0) as usize;
    let input = Trace::from_fn("s", rate, n, |t| [0.0, (2.0 * PI * f * t).sin(), 1.0]);
    let out = lowpass(&input, &spec).unwrap();
    let settle = 5.0 * spec.rc();
    // whole periods after the transient
    let period_samples = (rate / f).round() as usize;
    let start = (settle * rate).ceil() as usize;
    let periods = (n - start) / period_samples;
    let end = start + periods * period_samples;
    let ts: Vec<f64> = out.samples()[start..end].iter().map(|s| s.t).collect();
    let ys: Vec<f64> = out.samples()[start..end].iter().map(|s| s.ay).collect();
    fitted_amplitude(&ts, &ys, f)
}

#[test]
fn first_order_gain_at_cutoff() {
    let g = measured_gain(100.0, 1.0, 1.0);
    assert!((g - std::f64::consts::FRAC_1_SQRT_2).abs() <= 0.05, "{g}");
    let alpha = FilterSpec::new(1.0, 1).alpha(0.01);
    assert!((g - discrete_first_order_gain(alpha, 1.0, 0.01)).abs() < 2e-3, "{g}");
}

#[test]
fn first_order_gain_at_ten_times_cutoff() {
    let g = measured_gain(100.0, 1.0, 10.0);
    assert!(g < 0.12, "{g}");
    let alpha = FilterSpec::new(1.0, 1).alpha(0.01);
    assert!((g - discrete_first_order_gain(alpha, 10.0, 0.01)).abs() < 2e-3, "{g}");
}

#[test]
fn second_order_attenuates_more() {
    let spec1 = FilterSpec::new(1.0, 1);
    let spec2 = FilterSpec::new(1.0, 2);
    let input = Trace::from_fn("s", 100.0, 2000, |t| [0.0, (20.0 * PI * t).sin(), 0.0]);
    let peak = |t: &Trace| t.samples()[500..].iter().map(|s| s.ay.abs()).fold(0.0, f64::max);
    let p1 = peak(&lowpass(&input, &spec1).unwrap());
    let p2 = peak(&lowpass(&input, &spec2).unwrap());
    assert!(p2 < p1 * 0.2, "{p1} {p2}");
}

proptest! {
    #[test]
    fn rest_reading_has_unit_norm_and_odd_y(theta in -90.0f64..=90.0) {
        let r = rest_reading(theta).unwrap();
        let norm = (r[0] * r[0] + r[1] * r[1] + r[2] * r[2]).sqrt();
        prop_assert!((norm - 1.0).abs() <= 1e-12);
        let m = rest_reading(-theta).unwrap();
        prop_assert_eq!(m[1], -r[1]);
    }

    #[test]
    fn lowpass_is_linear(a in values(10..120), b in values(10..120), cutoff in 0.1f64..10.0, order in 1u8..=2) {
        let n = a.len().min(b.len());
        let sum: Vec<[f64; 3]> = (0..n).map(|i| [a[i][0] + b[i][0], a[i][1] + b[i][1], a[i][2] + b[i][2]]).collect();
        let spec = FilterSpec::new(cutoff, order);
        let fa = lowpass(&trace_from(&a[..n], 25.0), &spec).unwrap();
        let fb = lowpass(&trace_from(&b[..n], 25.0), &spec).unwrap();
        let fs = lowpass(&trace_from(&sum, 25.0), &spec).unwrap();
        for i in 0..n {
            for k in 0..3 {
                let lhs = fs.samples()[i].axes()[k];
                let rhs = fa.samples()[i].axes()[k] + fb.samples()[i].axes()[k];
                prop_assert!((lhs - rhs).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn subtract_self_is_zero(a in values(1..100)) {
        let t = trace_from(&a, 25.0);
        let z = subtract(&t, &t).unwrap();
        prop_assert!(z.samples().iter().all(|s| s.axes() == [0.0; 3]));
    }

    #[test]
    fn resample_preserves_constants_and_stays_in_range(
        a in values(2..80),
        c in -2.0f64..2.0,
        rate in 1.0f64..100.0,
        jitter in prop::collection::vec(0.2f64..1.0, 80),
    ) {
        // irregular but increasing timestamps
        let mut t = 0.0;
        let samples: Vec<Sample> = a.iter().zip(&jitter).map(|(v, j)| {
            let s = Sample::from_axes(t, *v);
            t += j * 0.05;
            s
        }).collect();
        let trace = Trace::new("x", 25.0, samples.clone());
        let r = resample_linear(&trace, rate).unwrap();
        prop_assert_eq!(r.first_t(), trace.first_t());
        for k in 0..3 {
            let lo = samples.iter().map(|s| s.axes()[k]).fold(f64::INFINITY, f64::min);
            let hi = samples.iter().map(|s| s.axes()[k]).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(r.samples().iter().all(|s| s.axes()[k] >= lo && s.axes()[k] <= hi));
        }
        prop_assert!(r.samples().windows(2).all(|w| w[1].t > w[0].t));
        let flat = Trace::new("c", 25.0, samples.iter().map(|s| Sample::new(s.t, c, c, c)).collect());
        let rf = resample_linear(&flat, rate).unwrap();
        prop_assert!(rf.samples().iter().all(|s| s.axes() == [c, c, c]));
    }

    #[test]
    fn align_recovers_integer_shift(
        base in prop::collection::vec(-1.0f64..1.0, 160..240),
        shift in -12i64..=12,
    ) {
        // other(t) = reference(t - shift·dt), both on the same grid
        let k_max = 12usize;
        let n = base.len() - 2 * k_max;
        let reference: Vec<[f64; 3]> = (0..n).map(|i| [0.0, base[i + k_max], 1.0]).collect();
        let other: Vec<[f64; 3]> = (0..n)
            .map(|i| [0.0, base[(i as i64 + k_max as i64 - shift) as usize], 1.0])
            .collect();
        let a = align(&trace_from(&reference, 25.0), &trace_from(&other, 25.0), 0.5).unwrap();
        prop_assert_eq!(a.lag_samples, shift);
        prop_assert!(!a.degenerate_correlation);
        for (r, o) in a.reference.samples().iter().zip(a.other.samples()) {
            prop_assert_eq!(r.t, o.t);
            prop_assert!((r.ay - o.ay).abs() < 1e-9);
        }
    }

    #[test]
    fn residual_rms_never_exceeds_peak(a in values(1..200)) {
        let st = residual_stats(&trace_from(&a, 25.0)).unwrap();
        for k in 0..3 {
            prop_assert!(st.rms[k] >= 0.0 && st.rms[k] <= st.peak[k]);
        }
        prop_assert!(st.duration_s > 0.0);
    }
}
