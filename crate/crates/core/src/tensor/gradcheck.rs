//! Central finite-difference checks of the analytic gradients.

use rand::Rng;

use super::{Graph, Tensor, Var};
use crate::{Error, Result};

/// Names accepted by [`grad_check`].
pub const PRIMITIVES: &[&str] = &[
    "add",
    "sub",
    "mul",
    "scale",
    "add_scalar",
    "matmul",
    "conv2d",
    "conv_transpose2d",
    "relu",
    "leaky_relu",
    "sigmoid",
    "exp",
    "log",
    "softmax",
    "log_softmax",
    "sum",
    "sum_last",
    "mean",
    "reshape",
    "concat",
    "add_bias",
    "bce_with_logits",
];

type LossFn = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;

/// Maximum over all input elements of |analytic - numeric| / max(1, |numeric|)
/// for the scalar function `f` evaluated at `inputs`.
pub fn grad_check_fn<F>(f: F, inputs: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    if h <= 0.0 {
        return Err(Error::invalid("finite-difference step must be positive"));
    }
    let eval = |values: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let out = f(&mut g, &vars)?;
        g.value(out).item()
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    let mut grads = g.backward(out)?;
    let analytic: Vec<Tensor> =
        vars.iter().zip(inputs).map(|(v, t)| grads.take_or_zeros(*v, t.shape())).collect();

    let mut worst = 0.0f64;
    let mut probe = inputs.to_vec();
    for (k, input) in inputs.iter().enumerate() {
        for i in 0..input.len() {
            let x0 = input.data()[i];
            probe[k].data_mut()[i] = x0 + h;
            let up = eval(&probe)?;
            probe[k].data_mut()[i] = x0 - h;
            let down = eval(&probe)?;
            probe[k].data_mut()[i] = x0;
            let numeric = (up - down) / (2.0 * h);
            let err = (analytic[k].data()[i] - numeric).abs() / numeric.abs().max(1.0);
            worst = worst.max(err);
        }
    }
    Ok(worst)
}

fn weighted_sum(g: &mut Graph, out: Var, weights: &Tensor) -> Result<Var> {
    let w = g.input(weights.clone());
    let p = g.mul(out, w)?;
    Ok(g.sum(p))
}

fn expect_shapes(name: &str, shapes: &[Vec<usize>], n: usize) -> Result<()> {
    if shapes.len() != n {
        return Err(Error::invalid(format!("`{name}` needs {n} input shapes, got {}", shapes.len())));
    }
    Ok(())
}

/// Forward-only evaluation used to size the random projection weights.
fn output_shape(inputs: &[Tensor], f: &dyn Fn(&mut Graph, &[Var]) -> Result<Var>) -> Result<Vec<usize>> {
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.input(t.clone())).collect();
    let out = f(&mut g, &vars)?;
    Ok(g.value(out).shape().to_vec())
}

fn instance<R: Rng + ?Sized>(name: &str, shapes: &[Vec<usize>], rng: &mut R) -> Result<(Vec<Tensor>, LossFn)> {
    type Prim = Box<dyn Fn(&mut Graph, &[Var]) -> Result<Var>>;
    let randn = |s: &Vec<usize>, rng: &mut R| Tensor::randn(s, rng);
    let mut inputs: Vec<Tensor> = shapes.iter().map(|s| randn(s, rng)).collect();
    let prim: Prim = match name {
        "add" | "sub" | "mul" => {
            expect_shapes(name, shapes, 2)?;
            match name {
                "add" => Box::new(|g, v| g.add(v[0], v[1])),
                "sub" => Box::new(|g, v| g.sub(v[0], v[1])),
                _ => Box::new(|g, v| g.mul(v[0], v[1])),
            }
        }
        "matmul" => {
            expect_shapes(name, shapes, 2)?;
            Box::new(|g, v| g.matmul(v[0], v[1]))
        }
        "conv2d" => {
            expect_shapes(name, shapes, 2)?;
            Box::new(|g, v| g.conv2d(v[0], v[1], 1, 0))
        }
        "conv_transpose2d" => {
            expect_shapes(name, shapes, 2)?;
            Box::new(|g, v| g.conv_transpose2d(v[0], v[1], 1, 0))
        }
        "add_bias" => {
            expect_shapes(name, shapes, 2)?;
            let axis = if shapes[0].len() > 1 { 1 } else { 0 };
            Box::new(move |g, v| g.add_bias(v[0], v[1], axis))
        }
        "bce_with_logits" => {
            expect_shapes(name, shapes, 1)?;
            let target = Tensor::rand_uniform(&shapes[0], 0.0, 1.0, rng);
            Box::new(move |g, v| {
                let t = g.input(target.clone());
                g.bce_with_logits(v[0], t)
            })
        }
        "concat" => {
            if shapes.is_empty() {
                return Err(Error::invalid("`concat` needs at least one input shape"));
            }
            Box::new(|g, v| g.concat(v, 0))
        }
        _ => {
            expect_shapes(name, shapes, 1)?;
            match name {
                "scale" => Box::new(|g, v| Ok(g.scale(v[0], 1.7))),
                "add_scalar" => Box::new(|g, v| Ok(g.add_scalar(v[0], -0.3))),
                "relu" => Box::new(|g, v| Ok(g.relu(v[0]))),
                "leaky_relu" => Box::new(|g, v| Ok(g.leaky_relu(v[0], 0.2))),
                "sigmoid" => Box::new(|g, v| Ok(g.sigmoid(v[0]))),
                "exp" => Box::new(|g, v| Ok(g.exp(v[0]))),
                "log" => {
                    inputs = shapes.iter().map(|s| Tensor::rand_uniform(s, 0.5, 2.0, rng)).collect();
                    Box::new(|g, v| Ok(g.log(v[0])))
                }
                "softmax" => Box::new(|g, v| Ok(g.softmax(v[0]))),
                "log_softmax" => Box::new(|g, v| Ok(g.log_softmax(v[0]))),
                "sum" => Box::new(|g, v| Ok(g.sum(v[0]))),
                "sum_last" => Box::new(|g, v| Ok(g.sum_last(v[0]))),
                "mean" => Box::new(|g, v| Ok(g.mean(v[0]))),
                "reshape" => {
                    let numel: usize = shapes[0].iter().product();
                    Box::new(move |g, v| g.reshape(v[0], &[numel]))
                }
                other => return Err(Error::UnknownPrimitive(other.to_string())),
            }
        }
    };
    let out_shape = output_shape(&inputs, &*prim)?;
    let weights = Tensor::randn(&out_shape, rng);
    let loss: LossFn = Box::new(move |g, v| {
        let out = prim(g, v)?;
        weighted_sum(g, out, &weights)
    });
    Ok((inputs, loss))
}

/// Checks a registered primitive on `trials` random instances, projecting its
/// output onto fixed random weights so every Jacobian entry contributes.
pub fn grad_check<R: Rng + ?Sized>(
    primitive: &str,
    shapes: &[Vec<usize>],
    trials: usize,
    h: f64,
    rng: &mut R,
) -> Result<f64> {
    if !PRIMITIVES.contains(&primitive) {
        return Err(Error::UnknownPrimitive(primitive.to_string()));
    }
    let mut worst = 0.0f64;
    for _ in 0..trials {
        let (inputs, loss) = instance(primitive, shapes, rng)?;
        worst = worst.max(grad_check_fn(&*loss, &inputs, h)?);
    }
    Ok(worst)
}

/// Default probe shapes for each registered primitive.
pub fn default_shapes(primitive: &str) -> Vec<Vec<usize>> {
    match primitive {
        "add" | "sub" | "mul" => vec![vec![3, 4], vec![3, 4]],
        "matmul" => vec![vec![4, 3], vec![3, 5]],
        "conv2d" => vec![vec![1, 1, 8, 8], vec![4, 1, 3, 3]],
        "conv_transpose2d" => vec![vec![1, 2, 4, 4], vec![2, 3, 3, 3]],
        "add_bias" => vec![vec![4, 3], vec![3]],
        "concat" => vec![vec![2, 3], vec![1, 3], vec![3, 3]],
        "softmax" | "log_softmax" => vec![vec![3, 8]],
        _ => vec![vec![3, 4]],
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng_from_seed;

    #[test]
    fn add_is_exact() {
        let mut rng = rng_from_seed(1);
        let err = grad_check("add", &[vec![4], vec![4]], 1, 1e-5, &mut rng).unwrap();
        assert!(err < 1e-7, "{err}");
    }

    #[test]
    fn softmax_vector() {
        let mut rng = rng_from_seed(2);
        let err = grad_check("softmax", &[vec![8]], 10, 1e-5, &mut rng).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn conv2d_small_image() {
        let mut rng = rng_from_seed(3);
        let shapes = [vec![1, 1, 8, 8], vec![4, 1, 3, 3]];
        let err = grad_check("conv2d", &shapes, 3, 1e-5, &mut rng).unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn strided_padded_convolutions() {
        let mut rng = rng_from_seed(4);
        let x = Tensor::randn(&[2, 2, 6, 6], &mut rng);
        let k = Tensor::randn(&[3, 2, 4, 4], &mut rng);
        let w = Tensor::randn(&[2, 3, 3, 3], &mut rng);
        let err = grad_check_fn(
            |g, v| {
                let y = g.conv2d(v[0], v[1], 2, 1)?;
                let wv = g.input(w.clone());
                let p = g.mul(y, wv)?;
                Ok(g.sum(p))
            },
            &[x, k],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");

        let x = Tensor::randn(&[1, 2, 3, 3], &mut rng);
        let k = Tensor::randn(&[2, 2, 4, 4], &mut rng);
        let w = Tensor::randn(&[1, 2, 6, 6], &mut rng);
        let err = grad_check_fn(
            |g, v| {
                let y = g.conv_transpose2d(v[0], v[1], 2,1)?;
                let wv = g.input(w.clone());
                let p = g.mul(y, wv)?;
                Ok(g.sum(p))
            },
            &[x, k],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn relu_matmul_chain() {
        let mut rng = rng_from_seed(5);
        let x = Tensor::randn(&[4, 3], &mut rng);
        let w = Tensor::randn(&[3, 5], &mut rng);
        let err = grad_check_fn(
            |g, v| {
                let y = g.matmul(v[0], v[1])?;
                let r = g.relu(y);
                Ok(g.sum(r))
            },
            &[x, w],
            1e-5,
        )
        .unwrap();
        assert!(err < 1e-4, "{err}");
    }

    #[test]
    fn every_primitive_passes() {
        let mut rng = rng_from_seed(6);
        for name in PRIMITIVES {
            let err = grad_check(name, &default_shapes(name), 10, 1e-5, &mut rng).unwrap();
            assert!(err < 1e-4, "{name}: {err}");
        }
    }

    #[test]
    fn unknown_primitive_rejected() {
        let mut rng = rng_from_seed(7);
        assert!(matches!(
            grad_check("tanh", &[vec![2]], 1, 1e-5, &mut rng),
            Err(Error::UnknownPrimitive(_))
        ));
    }
}
