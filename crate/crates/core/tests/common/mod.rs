#![allow(dead_code)]

use slac_core::numerics::{argmax, gumbel_softmax, softmax, Matrix, Mlp, ParamSet, RngStream};

pub fn l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// `|a - b| / max(|a|, |b|)` in the Euclidean norm; zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let scale = l2(a).max(l2(b));
    if scale == 0.0 {
        0.0
    } else {
        l2(&diff) / scale
    }
}

fn flatten(net: &Mlp) -> Vec<f64> {
    net.tensors().concat()
}

fn assign(net: &mut Mlp, flat: &[f64]) {
    let mut at = 0;
    for t in net.tensors_mut() {
        let len = t.len();
        t.copy_from_slice(&flat[at..at + len]);
        at += len;
    }
}

/// Checks reverse-mode gradients of `L = <w, net(x)>` against central
/// differences, for both parameters and inputs. Returns the worse of the two
/// relative errors.
pub fn mlp_gradient_error(sizes: &[usize], batch: usize, rng: &mut RngStream) -> f64 {
    let net = Mlp::new(sizes, rng);
    let input = *sizes.first().unwrap();
    let output = *sizes.last().unwrap();
    let x = Matrix::from_vec(batch, input, (0..batch * input).map(|_| rng.normal()).collect()).unwrap();
    let w = Matrix::from_vec(batch, output, (0..batch * output).map(|_| rng.normal()).collect()).unwrap();
    let loss = |net: &Mlp, x: &Matrix| -> f64 {
        let y = net.predict(x).unwrap();
        y.data.iter().zip(&w.data).map(|(a, b)| a * b).sum()
    };

    let (_, cache) = net.forward(&x).unwrap();
    let (grads, dx) = net.backward(&cache, &w).unwrap();

    let theta = flatten(&net);
    let mut probe = net.clone();
    let fd_params = slac_core::numerics::finite_difference_gradient(
        |p| {
            assign(&mut probe, p);
            loss(&probe, &x)
        },
        &theta,
        1e-6,
    );
    let fd_input = slac_core::numerics::finite_difference_gradient(
        |v| loss(&net, &Matrix::from_vec(batch, input, v.to_vec()).unwrap()),
        &x.data,
        1e-6,
    );
    relative_error(&flatten(&grads), &fd_params).max(relative_error(&dx.data, &fd_input))
}

/// Total variation between the argmax frequencies of Gumbel-softmax samples
/// and `softmax(logits)`.
pub fn gumbel_argmax_tv(logits: &[f64], samples: usize, rng: &mut RngStream) -> f64 {
    let mut counts = vec![0usize; logits.len()];
    for _ in 0..samples {
        let (soft, _) = gumbel_softmax(logits, 1.0, rng).unwrap();
        counts[argmax(&soft)] += 1;
    }
    let p = softmax(logits);
    0.5 * counts
        .iter()
        .zip(&p)
        .map(|(&c, q)| (c as f64 / samples as f64 - q).abs())
        .sum::<f64>()
}

/// Assorted MLP shapes for gradient checks.
pub fn gradient_check_shapes() -> Vec<Vec<usize>> {
    (0..20)
        .map(|i| {
            let depth = 1 + i % 3;
            let mut sizes = vec![2 + i % 5];
            for d in 0..depth {
                sizes.push(3 + (i + d) % 6);
            }
            sizes.push(1 + i % 4);
            sizes
        })
        .collect()
}
