//! Dormand-Prince 5(4) with PI step-size control.

#[derive(Clone, Copy, Debug)]
pub struct OdeOpts {
    pub rtol: f64,
    pub atol: f64,
    pub h0: f64,
    pub h_min: f64,
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOpts {
    pub fn new(rtol: f64, atol: f64) -> OdeOpts {
        OdeOpts { rtol, atol, h0: 1e-3, h_min: 1e-14, h_max: f64::INFINITY, max_steps: 200_000 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

#[derive(Clone, Debug, PartialEq)]
pub enum OdeEnd {
    /// Reached the requested end of the interval.
    Reached,
    /// The observer asked to stop.
    Stopped,
    StepUnderflow,
    MaxSteps,
    /// The right-hand side could not be evaluated.
    RhsFailed(String),
}

#[derive(Clone, Debug)]
pub struct OdeResult {
    pub s: f64,
    pub y: Vec<f64>,
    pub end: OdeEnd,
    pub steps: usize,
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// error coefficients: b - b*
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Integrate y' = f(y) over s in [0, s_end] (autonomous).
///
/// `observe(s, y)` is called after every accepted step and may stop early.
pub fn dopri5<F, O>(mut f: F, y0: &[f64], s_end: f64, opts: &OdeOpts, mut observe: O) -> OdeResult
where
    F: FnMut(&[f64], &mut [f64]) -> Result<(), String>,
    O: FnMut(f64, &[f64]) -> Control,
{
    let d = y0.len();
    let mut y = y0.to_vec();
    let mut s = 0.0;
    let mut k: [Vec<f64>; 7] = std::array::from_fn(|_| vec![0.0; d]);
    let mut tmp = vec![0.0; d];
    let mut ynew = vec![0.0; d];
    let fail = |s, y: Vec<f64>, e: String, steps| OdeResult { s, y, end: OdeEnd::RhsFailed(e), steps };
    if let Err(e) = f(&y, &mut k[0]) {
        return fail(s, y, e, 0);
    }
    let mut h = opts.h0.min(s_end).min(opts.h_max);
    let mut err_prev: f64 = 1e-4;
    let mut steps = 0;
    while s < s_end {
        if steps >= opts.max_steps {
            return OdeResult { s, y, end: OdeEnd::MaxSteps, steps };
        }
        if h < opts.h_min {
            return OdeResult { s, y, end: OdeEnd::StepUnderflow, steps };
        }
        let last = s + h >= s_end;
        if last {
            h = s_end - s;
        }
        macro_rules! stage {
            ($dst:expr, $($c:expr, $ki:expr),+) => {{
                for i in 0..d {
                    tmp[i] = y[i] + h * (0.0 $(+ $c * k[$ki][i])+);
                }
                let (lo, hi) = k.split_at_mut($dst);
                let _ = lo;
                if let Err(e) = f(&tmp, &mut hi[0]) {
                    return fail(s, y, e, steps);
                }
            }};
        }
        stage!(1, A21, 0);
        stage!(2, A31, 0, A32, 1);
        stage!(3, A41, 0, A42, 1, A43, 2);
        stage!(4, A51, 0, A52, 1, A53, 2, A54, 3);
        stage!(5, A61, 0, A62, 1, A63, 2, A64, 3, A65, 4);
        for i in 0..d {
            ynew[i] = y[i] + h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
        if let Err(e) = f(&ynew, &mut k[6]) {
            // treat as a rejected step: shrink and retry
            h *= 0.25;
            if h < opts.h_min {
                return fail(s, y, e, steps);
            }
            continue;
        }
        let mut err = 0.0;
        for i in 0..d {
            let e = h * (E1 * k[0][i] + E3 * k[2][i] + E4 * k[3][i] + E5 * k[4][i] + E6 * k[5][i] + E7 * k[6][i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / d as f64).sqrt();
        if !err.is_finite() {
            h *= 0.25;
            continue;
        }
        if err <= 1.0 {
            steps += 1;
            s = if last { s_end } else { s + h };
            std::mem::swap(&mut y, &mut ynew);
            k.swap(0, 6);
            let fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.7 / 5.0) * err_prev.powf(0.4 / 5.0) };
            h = (h * fac.clamp(0.2, 5.0)).min(opts.h_max);
            err_prev = err.max(1e-4);
            if observe(s, &y) == Control::Stop {
                return OdeResult { s, y, end: OdeEnd::Stopped, steps };
            }
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h *= fac;
        }
    }
    OdeResult { s, y, end: OdeEnd::Reached, steps }
}
