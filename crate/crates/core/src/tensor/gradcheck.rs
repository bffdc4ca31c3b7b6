use std::sync::Arc;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::{OpKind, Tape, Tensor, TensorError, Var};

#[derive(Debug, Clone)]
pub struct GradCheckOptions {
    /// Step of the five-point central difference.
    pub eps: f64,
    pub tol: f64,
    /// Check at most this many entries per parameter, sampled with `seed`.
    pub max_entries: Option<usize>,
    pub seed: u64,
    #[doc(hidden)]
    pub fault: Option<OpKind>,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions {
            eps: 1e-4,
            tol: 1e-5,
            max_entries: None,
            seed: 0,
            fault: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamCheck {
    pub index: usize,
    pub checked: usize,
    /// Entries where the function has a kink within one step.
    pub excluded: usize,
    pub max_rel_err: f64,
    pub worst_entry: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub tol: f64,
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_err).fold(0.0, f64::max)
    }

    pub fn excluded(&self) -> usize {
        self.params.iter().map(|p| p.excluded).sum()
    }

    pub fn checked(&self) -> usize {
        self.params.iter().map(|p| p.checked).sum()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < self.tol
    }
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-8)
}

/// Compares reverse-mode gradients of `f` against five-point central differences.
///
/// `f` receives the tape and one variable per parameter and must return a
/// `1×1` result. A mismatching entry counts as excluded instead of failed
/// when the difference quotient is not smooth there: the one-sided slopes
/// disagree or halving the step moves the estimate by more than `tol / 2`.
pub fn grad_check<F, E>(mut f: F, params: &mut [Tensor<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport, E>
where
    F: FnMut(&mut Tape<f64>, &[Var]) -> Result<Var, E>,
    E: From<TensorError>,
{
    let mut eval = |params: &[Tensor<f64>], fault: Option<OpKind>, grads: bool| {
        let mut tape = Tape::new();
        tape.inject_fault(fault);
        let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
        let out = f(&mut tape, &vars)?;
        let value = tape.value(out)?.item();
        let g = if grads {
            let g = tape.backward(out)?;
            vars.iter().zip(params).map(|(&v, p)| g.get_or_zeros(v, p.shape())).collect()
        } else {
            Vec::new()
        };
        Ok::<_, E>((value, g))
    };

    let (f0, analytic) = eval(params, opts.fault, true)?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        tol: opts.tol,
        params: Vec::new(),
    };
    for p in 0..params.len() {
        let n = params[p].len();
        let entries: Vec<usize> = match opts.max_entries {
            Some(m) if m < n => {
                let mut v = sample(&mut rng, n, m).into_vec();
                v.sort_unstable();
                v
            }
            _ => (0..n).collect(),
        };
        let mut check = ParamCheck {
            index: p,
            checked: 0,
            excluded: 0,
            max_rel_err: 0.0,
            worst_entry: None,
        };
        for k in entries {
            let x0 = params[p].data()[k];
            let mut at = |x: f64, params: &mut [Tensor<f64>]| {
                params[p].data_mut()[k] = x;
                let r = eval(params, None, false).map(|r| r.0);
                params[p].data_mut()[k] = x0;
                r
            };
            let h = opts.eps;
            let mut five_point = |h: f64, params: &mut [Tensor<f64>]| -> Result<_, E> {
                let f1 = at(x0 + h, params)?;
                let fm1 = at(x0 - h, params)?;
                let f2 = at(x0 + 2.0 * h, params)?;
                let fm2 = at(x0 - 2.0 * h, params)?;
                Ok(((8.0 * (f1 - fm1) - (f2 - fm2)) / (12.0 * h), f1, fm1))
            };
            let (fd, fp, fm) = five_point(h, params)?;
            let ad = analytic[p].data()[k];
            let err = rel_err(ad, fd);
            if err >= opts.tol {
                let fwd = (fp - f0) / h;
                let bwd = (f0 - fm) / h;
                let (half, _, _) = five_point(h / 2.0, params)?;
                let scale = fwd.abs().max(bwd.abs()).max(1e-8);
                // a kink within the stencil shows up as disagreeing one-sided
                // slopes or as an estimate that moves when the step halves
                if (fwd - bwd).abs() > 1e-2 * scale || rel_err(fd, half) > 0.5 * opts.tol {
                    check.excluded += 1;
                    continue;
                }
            }
            check.checked += 1;
            if err > check.max_rel_err {
                check.max_rel_err = err;
                check.worst_entry = Some(k);
            }
        }
        report.params.push(check);
    }
    Ok(report)
}

/// Result of checking one op in isolation.
#[derive(Debug, Clone, Serialize)]
pub struct OpCheck {
    pub op: String,
    pub max_rel_err: f64,
    pub excluded: usize,
    pub passed: bool,
}

fn random(rng: &mut ChaCha8Rng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.random_range(lo..hi)).collect();
    Tensor::new(rows, cols, data).unwrap()
}

/// Values bounded away from zero, either sign.
fn away_from_zero(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor<f64> {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.random_range(0.2..1.5);
            if rng.random_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(rows, cols, data).unwrap()
}

fn sorted_ids(rng: &mut ChaCha8Rng, len: usize, segments: usize) -> Arc<[usize]> {
    let mut ids: Vec<usize> = (0..len).map(|_| rng.random_range(0..segments)).collect();
    ids.sort_unstable();
    Arc::from(ids)
}

type OpFn = Box<dyn Fn(&mut Tape<f64>, &[Var]) -> Result<Var, TensorError>>;

/// Runs `grad_check` on every differentiable op with randomized shapes.
/// Each op output is contracted with fixed random weights so that every
/// adjoint entry matters.
#[allow(clippy::vec_init_then_push)]
pub fn op_suite(seed: u64, fault: Option<OpKind>) -> Result<Vec<OpCheck>, TensorError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (m, k, n) = (rng.random_range(2..6), rng.random_range(2..6), rng.random_range(2..6));
    let rows = rng.random_range(4..9);
    let seg = sorted_ids(&mut rng, rows, 3);
    let scatter: Arc<[usize]> = Arc::from((0..rows).map(|_| rng.random_range(0..4)).collect::<Vec<_>>());
    let gather_idx: Arc<[usize]> = Arc::from((0..rows + 2).map(|_| rng.random_range(0..rows)).collect::<Vec<_>>());

    let mut cases: Vec<(&str, Vec<Tensor<f64>>, OpFn)> = Vec::new();
    cases.push(("matmul", vec![random(&mut rng, m, k, -1.0, 1.0), random(&mut rng, k, n, -1.0, 1.0)], Box::new(|t, v| t.matmul(v[0], v[1]))));
    cases.push(("matmul_t", vec![random(&mut rng, m, k, -1.0, 1.0), random(&mut rng, n, k, -1.0, 1.0)], Box::new(|t, v| t.matmul_t(v[0], v[1]))));
    cases.push(("add", vec![random(&mut rng, m, n, -1.0, 1.0), random(&mut rng, m, n, -1.0, 1.0)], Box::new(|t, v| t.add(v[0], v[1]))));
    cases.push(("add_broadcast", vec![random(&mut rng, m, n, -1.0, 1.0), random(&mut rng, 1, n, -1.0, 1.0)], Box::new(|t, v| t.add(v[0], v[1]))));
    cases.push(("sub", vec![random(&mut rng, m, n, -1.0, 1.0), random(&mut rng, m, n, -1.0, 1.0)], Box::new(|t, v| t.sub(v[0], v[1]))));
    cases.push(("mul", vec![random(&mut rng, m, n, -1.0, 1.0), random(&mut rng, m, n, -1.0, 1.0)], Box::new(|t, v| t.mul(v[0], v[1]))));
    cases.push(("div", vec![random(&mut rng, m, n, -1.0, 1.0), away_from_zero(&mut rng, m, n)], Box::new(|t, v| t.div(v[0], v[1]))));
    cases.push(("scale", vec![random(&mut rng, m, n, -1.0, 1.0)], Box::new(|t, v| t.scale(v[0], -1.7))));
    cases.push(("scale_by", vec![random(&mut rng, m, n, -1.0, 1.0), random(&mut rng, 1, 1, -1.0, 1.0)], Box::new(|t, v| t.scale_by(v[0], v[1]))));
    cases.push(("concat_cols", vec![random(&mut rng, m, k, -1.0, 1.0), random(&mut rng, m, n, -1.0, 1.0)], Box::new(|t, v| t.concat_cols(&[v[0], v[1], v[0]]))));
    cases.push(("concat_rows", vec![random(&mut rng, m, n, -1.0, 1.0), random(&mut rng, k, n, -1.0, 1.0)], Box::new(|t, v| t.concat_rows(&[v[0], v[1]]))));
    cases.push(("slice_cols", vec![random(&mut rng, m, n + 2, -1.0, 1.0)], Box::new(move |t, v| t.slice_cols(v[0], 1, n))));
    cases.push(("slice_rows", vec![random(&mut rng, m + 2, n, -1.0, 1.0)], Box::new(move |t, v| t.slice_rows(v[0], 1, m))));
    cases.push(("relu", vec![away_from_zero(&mut rng, m, n)], Box::new(|t, v| t.relu(v[0]))));
    cases.push(("exp", vec![random(&mut rng, m, n, -2.0, 2.0)], Box::new(|t, v| t.exp(v[0]))));
    cases.push(("log", vec![random(&mut rng, m, n, 0.3, 3.0)], Box::new(|t, v| t.log(v[0]))));
    cases.push(("abs", vec![away_from_zero(&mut rng, m, n)], Box::new(|t, v| t.abs(v[0]))));
    cases.push(("softmax_rows", vec![random(&mut rng, m, n, -2.0, 2.0)], Box::new(|t, v| t.softmax_rows(v[0]))));
    {
        let seg = seg.clone();
        cases.push(("segment_softmax", vec![random(&mut rng, rows, n, -2.0, 2.0)], Box::new(move |t, v| t.segment_softmax(v[0], seg.clone()))));
    }
    {
        let seg = seg.clone();
        cases.push((
            "segment_normalize",
            vec![random(&mut rng, rows, n, 0.2, 2.0)],
            Box::new(move |t, v| t.segment_normalize(v[0], seg.clone(), 1e-8)),
        ));
    }
    cases.push(("segment_sum", vec![random(&mut rng, rows, n, -1.0, 1.0)], Box::new(move |t, v| t.segment_sum(v[0], scatter.clone(), 4))));
    cases.push(("embedding_lookup", vec![random(&mut rng, rows, n, -1.0, 1.0)], Box::new(move |t, v| t.embedding_lookup(v[0], gather_idx.clone()))));
    cases.push(("sum", vec![random(&mut rng, m, n, -1.0, 1.0)], Box::new(|t, v| t.sum(v[0]))));
    cases.push(("mean", vec![random(&mut rng, m, n, -1.0, 1.0)], Box::new(|t, v| t.mean(v[0]))));

    let opts = GradCheckOptions {
        fault,
        ..GradCheckOptions::default()
    };
    let mut out = Vec::new();
    for (name, mut inputs, op) in cases {
        // probe the output shape once to draw the contraction weights
        let mut probe = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|x| probe.constant(x.clone())).collect();
        let y = op(&mut probe, &vars)?;
        let shape = probe.shape(y)?;
        let w = random(&mut rng, shape[0], shape[1], -1.0, 1.0);
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let y = op(t, v)?;
            let wv = t.constant(w.clone());
            let p = t.mul(y, wv)?;
            t.sum(p)
        };
        let report = grad_check(f, &mut inputs, &opts)?;
        out.push(OpCheck {
            op: name.to_string(),
            max_rel_err: report.max_rel_err(),
            excluded: report.excluded(),
            passed: report.passed(),
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_form() {
        let a = Tensor::new(3, 3, vec![2.0, 0.5, 0.1, 0.5, 3.0, -0.4, 0.1, -0.4, 1.5]).unwrap();
        let mut params = vec![Tensor::new(3, 1, vec![0.3, -1.2, 0.8]).unwrap()];
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let av = t.constant(a.clone());
            let ax = t.matmul(av, v[0])?;
            let xax = t.mul(ax, v[0])?;
            t.sum(xax)
        };
        let report = grad_check(f, &mut params, &GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_err() < 1e-8, "{report:?}");
        assert_eq!(report.checked(), 3);
    }

    #[test]
    fn relu_at_zero_is_excluded() {
        let mut params = vec![Tensor::new(1, 3, vec![0.0, 1.0, -1.0]).unwrap()];
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let r = t.relu(v[0])?;
            t.sum(r)
        };
        let report = grad_check(f, &mut params, &GradCheckOptions::default()).unwrap();
        assert!(report.passed());
        assert_eq!(report.excluded(), 1);
        assert_eq!(report.checked(), 2);
    }

    #[test]
    fn softmax_composition() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut params = vec![random(&mut rng, 4, 5, -2.0, 2.0), random(&mut rng, 5, 3, -1.0, 1.0)];
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let h = t.matmul(v[0], v[1])?;
            let s = t.softmax_rows(h)?;
            let l = t.log(s)?;
            let e = t.exp(h)?;
            let p = t.mul(l, e)?;
            t.mean(p)
        };
        let report = grad_check(f, &mut params, &GradCheckOptions::default()).unwrap();
        assert!(report.max_rel_err() < 1e-6, "{report:?}");
    }

    #[test]
    fn every_op_passes() {
        for seed in 0..3 {
            for check in op_suite(seed, None).unwrap() {
                assert!(check.passed, "{check:?}");
                assert!(check.max_rel_err < 1e-5);
            }
        }
    }

    #[test]
    fn sabotaged_adjoint_is_caught() {
        for kind in [OpKind::MatMul, OpKind::SegmentSoftmax, OpKind::Gather] {
            let checks = op_suite(0, Some(kind)).unwrap();
            assert!(checks.iter().any(|c| !c.passed), "{kind:?}");
        }
    }

    #[test]
    fn sampling_limits_entries() {
        let mut params = vec![Tensor::new(1, 10, (0..10).map(f64::from).collect()).unwrap()];
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let sq = t.mul(v[0], v[0])?;
            t.sum(sq)
        };
        let opts = GradCheckOptions {
            max_entries: Some(4),
            ..GradCheckOptions::default()
        };
        assert_eq!(grad_check(f, &mut params, &opts).unwrap().checked(), 4);
    }
}
