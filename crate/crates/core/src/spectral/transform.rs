use std::sync::Arc;

use rustdct::{DctPlanner, TransformType2And3};

/// Per-axis DCT/DST plans for a fixed grid shape.
#[derive(Clone)]
pub(crate) struct AxisTransforms {
    shape: Vec<usize>,
    plans: Vec<Arc<dyn TransformType2And3<f64>>>,
}

impl AxisTransforms {
    pub(crate) fn new(shape: &[usize]) -> Self {
        let mut planner = DctPlanner::new();
        let plans = shape.iter().map(|&n| planner.plan_dct2(n)).collect();
        Self {
            shape: shape.to_vec(),
            plans,
        }
    }

    /// `out[j] = Σ_k a_k cos(k π (j+½) / N)` along `axis`.
    pub(crate) fn cos_synthesis(&self, buf: &mut [f64], axis: usize) {
        let plan = &self.plans[axis];
        for_each_lane(buf, &self.shape, axis, |lane| {
            lane[0] *= 2.0;
            plan.process_dct3(lane);
        });
    }

    /// `out[j] = Σ_{k≥1} a_k sin(k π (j+½) / N)` along `axis`, with `a_0` ignored.
    pub(crate) fn sin_synthesis(&self, buf: &mut [f64], axis: usize) {
        let plan = &self.plans[axis];
        for_each_lane(buf, &self.shape, axis, |lane| {
            let n = lane.len();
            lane.copy_within(1..n, 0);
            lane[n - 1] = 0.0;
            plan.process_dst3(lane);
        });
    }

    /// `out[k] = Σ_j f_j cos(k π (j+½) / N)` along `axis`.
    pub(crate) fn cos_analysis(&self, buf: &mut [f64], axis: usize) {
        let plan = &self.plans[axis];
        for_each_lane(buf, &self.shape, axis, |lane| plan.process_dct2(lane));
    }
}

/// Applies `f` to every lane of a row-major buffer along `axis`.
pub(crate) fn for_each_lane(
    buf: &mut [f64],
    shape: &[usize],
    axis: usize,
    mut f: impl FnMut(&mut [f64]),
) {
    let len = shape[axis];
    let stride: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    if stride == 1 {
        for lane in buf.chunks_exact_mut(len) {
            f(lane);
        }
        return;
    }
    let mut scratch = vec![0.0; len];
    for o in 0..outer {
        for i in 0..stride {
            let base = o * len * stride + i;
            for (j, s) in scratch.iter_mut().enumerate() {
                *s = buf[base + j * stride];
            }
            f(&mut scratch);
            for (j, s) in scratch.iter().enumerate() {
                buf[base + j * stride] = *s;
            }
        }
    }
}
