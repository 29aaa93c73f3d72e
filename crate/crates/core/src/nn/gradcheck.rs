use super::params::Parameters;

/// Compares an analytic gradient against central finite differences.
///
/// `loss_and_grad` must return the scalar loss and its gradient at the given
/// parameters. Returns `max |analytic − numeric| / max(1, |analytic|)` over every
/// parameter entry.
pub fn grad_check<P, F>(loss_and_grad: F, params: &P, h: f64) -> f64
where
    P: Parameters + Clone,
    F: Fn(&P) -> (f64, P),
{
    let (_, analytic) = loss_and_grad(params);
    let analytic = analytic.flatten();
    let base = params.flatten();
    let mut probe = params.clone();
    let mut flat = base.clone();
    let mut worst = 0.0f64;
    for k in 0..base.len() {
        flat[k] = base[k] + h;
        probe.assign_flat(&flat);
        let plus = loss_and_grad(&probe).0;
        flat[k] = base[k] - h;
        probe.assign_flat(&flat);
        let minus = loss_and_grad(&probe).0;
        flat[k] = base[k];
        let numeric = (plus - minus) / (2.0 * h);
        let err = (analytic[k] - numeric).abs() / analytic[k].abs().max(1.0);
        worst = worst.max(err);
    }
    worst
}
