//! Finite-difference verification of reverse-mode gradients.
//!
//! The harness treats the function under test as a black box from a flat
//! parameter vector to (scalar value, analytic gradient) and compares the
//! analytic gradient against central differences on probed coordinates.
//! Everything here runs in `f64`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::TensorError;

/// Outcome of one gradient check.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub op_name: String,
    pub max_relative_error: f64,
    pub probe_count: usize,
}

impl GradCheckReport {
    pub fn passes(&self, threshold: f64) -> bool {
        self.max_relative_error < threshold
    }
}

fn rel_err(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(1e-6);
    (analytic - numeric).abs() / denom
}

/// Compare the analytic gradient of `f` against central finite differences.
///
/// `f` must be deterministic (dropout disabled, any noise fixed); this is
/// verified by evaluating it twice and requiring bit-identical values. Up to
/// `max_probes` coordinates are probed, sampled without replacement when the
/// parameter vector is larger than the probe budget.
pub fn finite_diff_check<Ff>(
    op_name: &str,
    f: Ff,
    params: &[f64],
    eps: f64,
    max_probes: usize,
    rng: &mut ChaCha8Rng,
) -> Result<GradCheckReport, TensorError>
where
    Ff: Fn(&[f64]) -> Result<(f64, Vec<f64>), TensorError>,
{
    let (v1, analytic) = f(params)?;
    let (v2, _) = f(params)?;
    if v1.to_bits() != v2.to_bits() {
        return Err(TensorError::Contract {
            op: "finite_diff_check",
            msg: format!("function is not deterministic: {v1:e} vs {v2:e}"),
        });
    }
    if analytic.len() != params.len() {
        return Err(TensorError::Contract {
            op: "finite_diff_check",
            msg: format!(
                "gradient length {} does not match parameter length {}",
                analytic.len(),
                params.len()
            ),
        });
    }

    let coords: Vec<usize> = if params.len() <= max_probes {
        (0..params.len()).collect()
    } else {
        // sample distinct coordinates
        let mut chosen = std::collections::BTreeSet::new();
        while chosen.len() < max_probes {
            chosen.insert(rng.random_range(0..params.len()));
        }
        chosen.into_iter().collect()
    };

    let mut work = params.to_vec();
    let mut max_err = 0.0f64;
    for &j in &coords {
        let orig = work[j];
        work[j] = orig + eps;
        let (plus, _) = f(&work)?;
        work[j] = orig - eps;
        let (minus, _) = f(&work)?;
        work[j] = orig;
        let numeric = (plus - minus) / (2.0 * eps);
        let err = rel_err(analytic[j], numeric);
        if err > max_err {
            max_err = err;
        }
    }

    Ok(GradCheckReport {
        op_name: op_name.to_string(),
        max_relative_error: max_err,
        probe_count: coords.len(),
    })
}

/// Helper: run a graph builder as a checkable function. The builder receives
/// the parameter slice, constructs a graph, and returns (graph, param leaf,
/// scalar loss). Used by the per-op and end-to-end checks.
pub fn graph_fn<B>(builder: B) -> impl Fn(&[f64]) -> Result<(f64, Vec<f64>), TensorError>
where
    B: Fn(&[f64]) -> Result<(super::Graph<f64>, super::TensorId, super::TensorId), TensorError>,
{
    move |p: &[f64]| {
        let (mut g, leaf, loss) = builder(p)?;
        g.backward(loss)?;
        let grad = g
            .grad(leaf)
            .map(|v| v.to_vec())
            .unwrap_or_else(|| vec![0.0; p.len()]);
        Ok((g.scalar_value(loss), grad))
    }
}

/// Split a flat parameter vector into gradient-bearing leaves of the given
/// shapes, run `build` to produce a scalar loss, and return the value plus the
/// concatenated gradient of every leaf.
fn multi_leaf_fn<B>(
    shapes: Vec<Vec<usize>>,
    build: B,
) -> impl Fn(&[f64]) -> Result<(f64, Vec<f64>), TensorError>
where
    B: Fn(&mut super::Graph<f64>, &[super::TensorId]) -> Result<super::TensorId, TensorError>,
{
    move |p: &[f64]| {
        let mut g: super::Graph<f64> = super::Graph::new();
        let mut leaves = Vec::with_capacity(shapes.len());
        let mut off = 0;
        for shape in &shapes {
            let n: usize = shape.iter().product();
            leaves.push(g.param(p[off..off + n].to_vec(), shape.clone())?);
            off += n;
        }
        debug_assert_eq!(off, p.len());
        let loss = build(&mut g, &leaves)?;
        g.backward(loss)?;
        let mut grad = Vec::with_capacity(p.len());
        for (leaf, shape) in leaves.iter().zip(&shapes) {
            let n: usize = shape.iter().product();
            match g.grad(*leaf) {
                Some(gv) => grad.extend_from_slice(gv),
                None => grad.extend(std::iter::repeat(0.0).take(n)),
            }
        }
        Ok((g.scalar_value(loss), grad))
    }
}

/// Finite-difference checks for every differentiable op in this module.
///
/// Inputs to ops with gradient kinks (relu, abs) are kept away from zero so
/// the probes stay on one side of the kink. All checks run in `f64` with
/// `eps = 1e-4`.
pub fn op_gradient_checks(seed: u64) -> Result<Vec<GradCheckReport>, TensorError> {
    use crate::rng::{derive_rng, stream};

    let mut rng = derive_rng(seed, &[stream::CHECK]);
    let mut reports = Vec::new();

    let mut uniform = {
        let mut r = derive_rng(seed, &[stream::CHECK, 1]);
        move |n: usize, lo: f64, hi: f64| -> Vec<f64> {
            (0..n).map(|_| lo + (hi - lo) * r.random::<f64>()).collect()
        }
    };
    // magnitudes in [0.2, 1.2] with random signs: bounded away from kinks
    let mut signed = {
        let mut r = derive_rng(seed, &[stream::CHECK, 2]);
        move |n: usize| -> Vec<f64> {
            (0..n)
                .map(|_| {
                    let mag = 0.2 + r.random::<f64>();
                    if r.random::<f64>() < 0.5 {
                        -mag
                    } else {
                        mag
                    }
                })
                .collect()
        }
    };

    let eps = 1e-4;
    let probes = 64;

    let mut run = |name: &str,
                   shapes: Vec<Vec<usize>>,
                   params: Vec<f64>,
                   build: Box<
        dyn Fn(&mut super::Graph<f64>, &[super::TensorId]) -> Result<super::TensorId, TensorError>,
    >|
     -> Result<(), TensorError> {
        let f = multi_leaf_fn(shapes, move |g, leaves| build(g, leaves));
        let report = finite_diff_check(name, f, &params, eps, probes, &mut rng)?;
        reports.push(report);
        Ok(())
    };

    // affine over x [3,4], w [4,2], b [2]
    {
        let shapes = vec![vec![3, 4], vec![4, 2], vec![2]];
        let params = uniform(3 * 4 + 4 * 2 + 2, -1.0, 1.0);
        run(
            "affine",
            shapes,
            params,
            Box::new(|g, l| {
                let y = g.affine(l[0], l[1], l[2])?;
                let t = g.tanh(y)?;
                g.sum_all(t)
            }),
        )?;
    }
    // matmul / matmul_nt
    {
        let shapes = vec![vec![3, 4], vec![4, 2]];
        let params = uniform(3 * 4 + 4 * 2, -1.0, 1.0);
        run(
            "matmul",
            shapes,
            params,
            Box::new(|g, l| {
                let y = g.matmul(l[0], l[1])?;
                let t = g.tanh(y)?;
                g.sum_all(t)
            }),
        )?;
        let shapes = vec![vec![3, 4], vec![5, 4]];
        let params = uniform(3 * 4 + 5 * 4, -1.0, 1.0);
        run(
            "matmul_nt",
            shapes,
            params,
            Box::new(|g, l| {
                let y = g.matmul_nt(l[0], l[1])?;
                let t = g.tanh(y)?;
                g.sum_all(t)
            }),
        )?;
    }
    // conv1d_same: x [7,3], kernels [3,3,2], bias [2]
    {
        let shapes = vec![vec![7, 3], vec![3, 3, 2], vec![2]];
        let params = uniform(7 * 3 + 3 * 3 * 2 + 2, -1.0, 1.0);
        run(
            "conv1d_same",
            shapes,
            params,
            Box::new(|g, l| {
                let y = g.conv1d_same(l[0], l[1], l[2])?;
                let t = g.tanh(y)?;
                g.sum_all(t)
            }),
        )?;
    }
    // pooling
    {
        let shapes = vec![vec![7, 3]];
        let params = uniform(21, -1.0, 1.0);
        run(
            "avg_pool_time",
            shapes,
            params,
            Box::new(|g, l| {
                let y = g.avg_pool_time(l[0], 2)?;
                let t = g.tanh(y)?;
                g.sum_all(t)
            }),
        )?;
        let shapes = vec![vec![6, 4]];
        let params = uniform(24, -1.0, 1.0);
        run(
            "global_avg_pool_time",
            shapes,
            params,
            Box::new(|g, l| {
                let y = g.global_avg_pool_time(l[0])?;
                let t = g.tanh(y)?;
                g.sum_all(t)
            }),
        )?;
    }
    // elementwise activations
    {
        let shapes = vec![vec![3, 5]];
        run(
            "relu",
            shapes.clone(),
            signed(15),
            Box::new(|g, l| {
                let y = g.relu(l[0])?;
                let sq = g.mul(y, y)?;
                g.sum_all(sq)
            }),
        )?;
        run(
            "abs",
            shapes.clone(),
            signed(15),
            Box::new(|g, l| {
                let y = g.abs(l[0])?;
                let sq = g.mul(y, y)?;
                g.sum_all(sq)
            }),
        )?;
        run(
            "tanh",
            shapes.clone(),
            uniform(15, -2.0, 2.0),
            Box::new(|g, l| {
                let y = g.tanh(l[0])?;
                g.sum_all(y)
            }),
        )?;
        run(
            "exp",
            shapes.clone(),
            uniform(15, -1.5, 1.5),
            Box::new(|g, l| {
                let y = g.exp(l[0])?;
                g.mean_all(y)
            }),
        )?;
        run(
            "softmax_lastdim",
            shapes.clone(),
            uniform(15, -2.0, 2.0),
            Box::new(|g, l| {
                let y = g.softmax_lastdim(l[0])?;
                let sq = g.mul(y, y)?;
                g.sum_all(sq)
            }),
        )?;
    }
    // binary elementwise + scalars
    {
        let shapes = vec![vec![4, 3], vec![4, 3]];
        let params = uniform(24, -1.0, 1.0);
        run(
            "add_sub_mul_scale",
            shapes,
            params,
            Box::new(|g, l| {
                let a = g.add(l[0], l[1])?;
                let s = g.sub(a, l[1])?;
                let m = g.mul(s, l[0])?;
                let sc = g.scale(m, 0.7)?;
                let off = g.add_scalar(sc, -0.3)?;
                let t = g.tanh(off)?;
                g.sum_all(t)
            }),
        )?;
    }
    // concat + slice + reshape + tile
    {
        let shapes = vec![vec![4, 2], vec![4, 3], vec![5]];
        let params = uniform(8 + 12 + 5, -1.0, 1.0);
        run(
            "concat_slice_tile_reshape",
            shapes,
            params,
            Box::new(|g, l| {
                let cat = g.concat_channels(&[l[0], l[1]])?;
                let sl = g.slice_channels(cat, 1, 4)?;
                let tiled = g.tile_rows(l[2], 4)?;
                let flat = g.reshape(tiled, vec![4, 5])?;
                let sl2 = g.slice_channels(flat, 0, 3)?;
                let m = g.mul(sl, sl2)?;
                let t = g.tanh(m)?;
                g.mean_all(t)
            }),
        )?;
    }
    // dropout with a frozen mask (rate 0.3, training)
    {
        let shapes = vec![vec![6, 3]];
        let params = uniform(18, -1.0, 1.0);
        run(
            "dropout",
            shapes,
            params,
            Box::new(move |g, l| {
                let mut mask_rng = derive_rng(99, &[stream::DROPOUT, 0]);
                let y = g.dropout(l[0], 0.3, true, &mut mask_rng)?;
                let t = g.tanh(y)?;
                g.sum_all(t)
            }),
        )?;
    }
    // layer_norm over x [4,6], gamma [6], beta [6]
    {
        let shapes = vec![vec![4, 6], vec![6], vec![6]];
        let mut params = uniform(24, -1.0, 1.0);
        params.extend(uniform(6, 0.5, 1.5)); // gamma away from zero
        params.extend(uniform(6, -0.5, 0.5));
        run(
            "layer_norm",
            shapes,
            params,
            Box::new(|g, l| {
                let y = g.layer_norm(l[0], l[1], l[2])?;
                let t = g.tanh(y)?;
                g.sum_all(t)
            }),
        )?;
    }
    // reductions
    {
        let shapes = vec![vec![3, 4]];
        run(
            "sum_all_mean_all",
            shapes,
            uniform(12, -1.0, 1.0),
            Box::new(|g, l| {
                let s = g.sum_all(l[0])?;
                let m = g.mean_all(l[0])?;
                let both = g.add(s, m)?;
                let t = g.tanh(both)?;
                g.sum_all(t)
            }),
        )?;
    }

    Ok(reports)
}
