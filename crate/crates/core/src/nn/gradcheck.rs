//! Finite-difference gradient checking.

use super::mat::Mat;
use super::tape::Params;

/// Compares `analytic` gradients against central differences of `loss`,
/// probing at most `per_tensor` evenly spaced entries of each tensor.
/// Returns `‖a − n‖ / max(‖a‖, ‖n‖)` over the probed entries.
pub fn gradient_error(
    params: &Params,
    analytic: &[Mat],
    h: f64,
    per_tensor: usize,
    loss: impl Fn(&Params) -> f64,
) -> f64 {
    let mut p = params.clone();
    let (mut diff, mut na, mut nn) = (0.0, 0.0, 0.0);
    for k in 0..p.len() {
        let len = p.values[k].data.len();
        let stride = len.div_ceil(per_tensor.max(1)).max(1);
        for i in (0..len).step_by(stride) {
            let orig = p.values[k].data[i];
            p.values[k].data[i] = orig + h;
            let up = loss(&p);
            p.values[k].data[i] = orig - h;
            let down = loss(&p);
            p.values[k].data[i] = orig;
            let num = (up - down) / (2.0 * h);
            let a = analytic[k].data[i];
            diff += (a - num) * (a - num);
            na += a * a;
            nn += num * num;
        }
    }
    let scale = na.sqrt().max(nn.sqrt());
    if scale == 0.0 {
        0.0
    } else {
        diff.sqrt() / scale
    }
}
