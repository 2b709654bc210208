//! Central finite-difference verification of reverse-mode gradients.
//!
//! Used by the test suites as an oracle that is independent of the
//! backward pass: the loss is re-evaluated forward at perturbed parameter
//! values only.

use rand::Rng;

use crate::error::Result;
use crate::numerics::graph::{Graph, NodeId};
use crate::numerics::params::ParamStore;

/// Outcome of one finite-difference comparison sweep.
#[derive(Debug, Clone, Copy)]
pub struct GradCheck {
    pub max_rel_err: f64,
    pub entries_checked: usize,
}

/// Compare analytic gradients of `build`'s scalar loss against central
/// finite differences at the current parameter values.
///
/// `entries_per_param` random entries of every parameter are probed with
/// step `h`. The relative error uses a small floor so near-zero gradients
/// are compared absolutely.
pub fn check<B>(
    store: &mut ParamStore,
    build: B,
    entries_per_param: usize,
    h: f64,
    rng: &mut impl Rng,
) -> Result<GradCheck>
where
    B: for<'g> Fn(&mut Graph<'g>) -> Result<NodeId>,
{
    store.zero_grads();
    let analytic: Vec<(usize, Vec<f64>)> = {
        let mut g = Graph::new(store);
        let loss = build(&mut g)?;
        let grads = g.backward(loss)?;
        g.collect_param_grads(&grads)
            .into_iter()
            .map(|(pid, v)| (pid.index(), v))
            .collect()
    };

    let mut max_rel_err = 0.0f64;
    let mut entries_checked = 0;

    for (pidx, grad) in &analytic {
        let n = grad.len();
        if n == 0 {
            continue;
        }
        let picks: Vec<usize> = if n <= entries_per_param {
            (0..n).collect()
        } else {
            (0..entries_per_param).map(|_| rng.gen_range(0..n)).collect()
        };
        for k in picks {
            let pid = crate::numerics::params::ParamId(*pidx);
            let orig = store.values(pid)[k];

            store.get_mut(pid).values[k] = orig + h;
            let f_plus = eval(store, &build)?;
            store.get_mut(pid).values[k] = orig - h;
            let f_minus = eval(store, &build)?;
            store.get_mut(pid).values[k] = orig;

            let fd = (f_plus - f_minus) / (2.0 * h);
            let an = grad[k];
            let denom = fd.abs().max(an.abs()).max(1e-4);
            let rel = (fd - an).abs() / denom;
            if rel > max_rel_err {
                max_rel_err = rel;
            }
            entries_checked += 1;
        }
    }

    Ok(GradCheck {
        max_rel_err,
        entries_checked,
    })
}

fn eval<B>(store: &ParamStore, build: &B) -> Result<f64>
where
    B: for<'g> Fn(&mut Graph<'g>) -> Result<NodeId>,
{
    let mut g = Graph::new(store);
    let loss = build(&mut g)?;
    Ok(g.scalar(loss))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::mlp::{Mlp, MlpSpec};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut store = ParamStore::new();
        let mlp = Mlp::new("m", MlpSpec::new(3, 2, &[5]), &mut store, &mut rng).unwrap();
        let input = [0.3, -0.8, 1.2];
        let target = [0.5, -0.25];

        let build = move |g: &mut Graph| {
            let x = g.input(&input);
            let y = mlp.forward(g, x)?;
            let t = g.input(&target);
            let d = g.sub(y, t);
            Ok(g.dot(d, d))
        };

        let report = check(&mut store, build, 8, 1e-5, &mut rng).unwrap();
        assert!(report.entries_checked > 0);
        assert!(
            report.max_rel_err < 1e-4,
            "max relative error {}",
            report.max_rel_err
        );
    }
}
