//! Central finite-difference gradient checking (64-bit only in practice).

use crate::autodiff::params::ParamStore;
use crate::autodiff::tape::{NodeId, Tape};
use crate::error::{Error, Result};

/// Maximum relative error between analytic gradients and central finite
/// differences over every element of every trainable parameter.
///
/// `f` records a scalar loss for the current parameter values; it is called
/// once for the analytic pass and twice per parameter element for the
/// differences. Relative error uses max(|analytic|, |fd|, 1e-8) in the
/// denominator.
pub fn grad_check<F>(f: F, params: &mut ParamStore<f64>, eps: f64) -> Result<f64>
where
    F: Fn(&ParamStore<f64>, &mut Tape<f64>) -> Result<NodeId>,
{
    let eval = |params: &ParamStore<f64>| -> Result<f64> {
        let mut tape = Tape::new();
        let loss = f(params, &mut tape)?;
        let v = tape.scalar(loss)?;
        if !v.is_finite() {
            return Err(Error::Train(format!("non-finite loss {v} in grad_check")));
        }
        Ok(v)
    };

    let mut tape = Tape::new();
    let loss = f(params, &mut tape)?;
    if !tape.scalar(loss)?.is_finite() {
        return Err(Error::Train("non-finite loss in grad_check".into()));
    }
    let grads = tape.backward(loss)?;

    let mut max_rel: f64 = 0.0;
    let names: Vec<String> = (0..params.len())
        .filter(|&i| params.trainable_at(i))
        .map(|i| params.name_at(i).to_string())
        .collect();
    for name in names {
        let n = params.get(&name).unwrap().numel();
        for i in 0..n {
            let orig = params.get(&name).unwrap().data()[i];
            params.get_mut(&name).unwrap().data_mut()[i] = orig + eps;
            let plus = eval(params)?;
            params.get_mut(&name).unwrap().data_mut()[i] = orig - eps;
            let minus = eval(params)?;
            params.get_mut(&name).unwrap().data_mut()[i] = orig;
            let fd = (plus - minus) / (2.0 * eps);
            let analytic = grads.get(&name).map_or(0.0, |g| g.data()[i]);
            let rel = (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::rng::Rng;
    use crate::numerics::tensor::Tensor;

    #[test]
    fn square_function() {
        // f(w) = w^2 at w = 3: analytic 6, fd 6
        let mut params = ParamStore::new();
        params.insert("w", Tensor::scalar(3.0), true, true).unwrap();
        let err = grad_check(
            |p, tape| {
                let w = tape.param(p, "w")?;
                let sq = tape.mul(w, w)?;
                tape.sum(sq)
            },
            &mut params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn quadratic_through_matmul() {
        // loss = sum((A x)^2)
        let mut params = ParamStore::new();
        let x: Tensor<f64> = Rng::seeded(1).normal_tensor(&[3, 1], 0.0, 1.0).unwrap();
        params.insert("x", x, true, true).unwrap();
        let a: Tensor<f64> = Rng::seeded(2).normal_tensor(&[4, 3], 0.0, 1.0).unwrap();
        let err = grad_check(
            |p, tape| {
                let a_id = tape.input(a.clone());
                let x_id = tape.param(p, "x")?;
                let ax = tape.matmul(a_id, x_id)?;
                let sq = tape.mul(ax, ax)?;
                tape.sum(sq)
            },
            &mut params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn spectral_gate_composition() {
        // loss through rfft2 -> gate -> irfft2 -> sum: checks the Hermitian
        // column weighting in the K gradients against plain differences
        let (h, w, c) = (4usize, 4usize, 2usize);
        let mut rng = Rng::seeded(33);
        let mut params = ParamStore::new();
        params
            .insert("k_re", rng.normal_tensor(&[h, w / 2 + 1, c], 1.0, 0.3).unwrap(), true, false)
            .unwrap();
        params
            .insert("k_im", rng.normal_tensor(&[h, w / 2 + 1, c], 0.0, 0.3).unwrap(), true, false)
            .unwrap();
        params
            .insert("x", rng.normal_tensor(&[h, w, c], 0.0, 1.0).unwrap(), true, true)
            .unwrap();
        let weights: Tensor<f64> = Rng::seeded(34).normal_tensor(&[h, w, c], 0.0, 1.0).unwrap();
        let err = grad_check(
            |p, tape| {
                let x = tape.param(p, "x")?;
                let kr = tape.param(p, "k_re")?;
                let ki = tape.param(p, "k_im")?;
                let spec = tape.rfft2(x)?;
                let gated = tape.gate_mul(spec, kr, ki)?;
                let back = tape.irfft2(gated)?;
                // weighted sum makes every output position matter
                let w_id = tape.input(weights.clone());
                let prod = tape.mul(back, w_id)?;
                tape.sum(prod)
            },
            &mut params,
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-5, "err {err}");
    }
}
