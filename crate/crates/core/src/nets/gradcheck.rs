//! Central finite-difference checks of [`Sequential::backward`].

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{Sequential, Tensor};

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheck {
    /// Relative error over the sampled parameter coordinates.
    pub params: f64,
    /// Relative error over sampled input coordinates and random input directions.
    pub input: f64,
    /// Probes compared.
    pub coordinates: usize,
    /// Probes dropped because the difference stencil crossed a ReLU kink.
    pub skipped: usize,
}

impl GradCheck {
    pub fn worst(&self) -> f64 {
        self.params.max(self.input)
    }
}

fn loss(net: &Sequential, x: &Tensor, upstream: &Tensor) -> f64 {
    let y = net.output(x).expect("shapes checked by caller");
    y.data().iter().zip(upstream.data()).map(|(a, b)| a * b).sum()
}

/// Compares backward against central differences of `⟨upstream, net(x)⟩`.
///
/// Up to `per_block` coordinates of every parameter block and `input_coords`
/// input coordinates are probed, plus `directions` random input directions.
/// Along any single probe the network is piecewise linear, so the one-sided
/// slopes agree to rounding unless the stencil crosses a kink; such probes
/// are skipped and counted.
pub fn check_sequential<R: Rng + ?Sized>(
    net: &Sequential,
    x: &Tensor,
    per_block: usize,
    input_coords: usize,
    directions: usize,
    step: f64,
    rng: &mut R,
) -> GradCheck {
    let trace = net.forward(x).expect("input shape");
    let out = trace.output();
    let upstream =
        Tensor::new(out.shape().to_vec(), (0..out.len()).map(|_| rng.sample(StandardNormal)).collect()).expect("shape");
    let mut grads = net.zero_grads();
    let dx = net.backward(&trace, &upstream, Some(&mut grads)).expect("shapes");

    let center = loss(net, x, &upstream);
    let mut skipped = 0;
    let mut keep = |up: f64, down: f64| {
        let (right, left) = ((up - center) / step, (center - down) / step);
        let smooth = (right - left).abs() <= 1e-3 * right.abs().max(left.abs()) + 1e-7;
        skipped += usize::from(!smooth);
        smooth.then_some((up - down) / (2.0 * step))
    };
    let (mut fd, mut an) = (Vec::new(), Vec::new());
    let mut probe = net.clone();
    for (blk, g) in grads.0.iter().enumerate() {
        let n = g.len();
        for i in sample(rng, n, per_block.min(n)) {
            let orig = probe.params()[blk][i];
            probe.params_mut()[blk][i] = orig + step;
            let up = loss(&probe, x, &upstream);
            probe.params_mut()[blk][i] = orig - step;
            let down = loss(&probe, x, &upstream);
            probe.params_mut()[blk][i] = orig;
            if let Some(d) = keep(up, down) {
                fd.push(d);
                an.push(g[i]);
            }
        }
    }
    let params = relative_error(&fd, &an);
    let coordinates = fd.len();

    let (mut fdx, mut anx) = (Vec::new(), Vec::new());
    let n = x.len();
    let mut xp = x.clone();
    for i in sample(rng, n, input_coords.min(n)) {
        let orig = x.data()[i];
        xp.data_mut()[i] = orig + step;
        let up = loss(net, &xp, &upstream);
        xp.data_mut()[i] = orig - step;
        let down = loss(net, &xp, &upstream);
        xp.data_mut()[i] = orig;
        if let Some(d) = keep(up, down) {
            fdx.push(d);
            anx.push(dx.data()[i]);
        }
    }
    for _ in 0..directions {
        let mut v: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        v.iter_mut().for_each(|a| *a /= norm);
        let shifted = |s: f64| {
            let d = x.data().iter().zip(&v).map(|(a, b)| a + s * b).collect();
            Tensor::new(x.shape().to_vec(), d).expect("shape")
        };
        let up = loss(net, &shifted(step), &upstream);
        let down = loss(net, &shifted(-step), &upstream);
        if let Some(d) = keep(up, down) {
            fdx.push(d);
            anx.push(dx.data().iter().zip(&v).map(|(a, b)| a * b).sum());
        }
    }
    GradCheck { params, input: relative_error(&fdx, &anx), coordinates: coordinates + fdx.len(), skipped }
}
