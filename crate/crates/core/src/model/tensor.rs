//! Row-major dense kernels used by the transformer. Weight matrices are
//! stored `[in][out]`, so `y = x W`.

pub(crate) const LN_EPS: f64 = 1e-5;

/// `x` is `rows x n_in`; returns `rows x n_out`.
pub(crate) fn matmul(x: &[f64], rows: usize, w: &[f64], n_in: usize, n_out: usize, bias: Option<&[f64]>) -> Vec<f64> {
    debug_assert_eq!(x.len(), rows * n_in);
    debug_assert_eq!(w.len(), n_in * n_out);
    let mut y = vec![0.0; rows * n_out];
    for r in 0..rows {
        let out = &mut y[r * n_out..(r + 1) * n_out];
        if let Some(b) = bias {
            out.copy_from_slice(b);
        }
        for (i, &xi) in x[r * n_in..(r + 1) * n_in].iter().enumerate() {
            if xi == 0.0 {
                continue;
            }
            for (o, &wij) in out.iter_mut().zip(&w[i * n_out..(i + 1) * n_out]) {
                *o += xi * wij;
            }
        }
    }
    y
}

/// Accumulates `dW += x^T dy` and `db += sum_rows dy`, and returns `dx = dy W^T`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn matmul_backward(
    x: &[f64],
    dy: &[f64],
    rows: usize,
    w: &[f64],
    n_in: usize,
    n_out: usize,
    dw: &mut [f64],
    db: Option<&mut [f64]>,
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * n_in];
    for r in 0..rows {
        let dyr = &dy[r * n_out..(r + 1) * n_out];
        let xr = &x[r * n_in..(r + 1) * n_in];
        let dxr = &mut dx[r * n_in..(r + 1) * n_in];
        for i in 0..n_in {
            let wrow = &w[i * n_out..(i + 1) * n_out];
            let dwrow = &mut dw[i * n_out..(i + 1) * n_out];
            let xi = xr[i];
            let mut acc = 0.0;
            for o in 0..n_out {
                acc += dyr[o] * wrow[o];
                dwrow[o] += xi * dyr[o];
            }
            dxr[i] = acc;
        }
    }
    if let Some(db) = db {
        for r in 0..rows {
            for (b, d) in db.iter_mut().zip(&dy[r * n_out..(r + 1) * n_out]) {
                *b += d;
            }
        }
    }
    dx
}

#[derive(Debug, Clone, Default)]
pub(crate) struct LnCache {
    pub xhat: Vec<f64>,
    pub rstd: Vec<f64>,
}

pub(crate) fn layer_norm(x: &[f64], rows: usize, n: usize, g: &[f64], b: &[f64]) -> (Vec<f64>, LnCache) {
    let mut y = vec![0.0; rows * n];
    let mut cache = LnCache { xhat: vec![0.0; rows * n], rstd: vec![0.0; rows] };
    for r in 0..rows {
        let xr = &x[r * n..(r + 1) * n];
        let mean = xr.iter().sum::<f64>() / n as f64;
        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        let rstd = 1.0 / (var + LN_EPS).sqrt();
        cache.rstd[r] = rstd;
        for i in 0..n {
            let xh = (xr[i] - mean) * rstd;
            cache.xhat[r * n + i] = xh;
            y[r * n + i] = g[i] * xh + b[i];
        }
    }
    (y, cache)
}

pub(crate) fn layer_norm_backward(
    dy: &[f64],
    cache: &LnCache,
    rows: usize,
    n: usize,
    g: &[f64],
    dg: &mut [f64],
    db: &mut [f64],
) -> Vec<f64> {
    let mut dx = vec![0.0; rows * n];
    let mut dxhat = vec![0.0; n];
    for r in 0..rows {
        let xh = &cache.xhat[r * n..(r + 1) * n];
        let dyr = &dy[r * n..(r + 1) * n];
        let mut mean_d = 0.0;
        let mut mean_dx = 0.0;
        for i in 0..n {
            dg[i] += dyr[i] * xh[i];
            db[i] += dyr[i];
            dxhat[i] = dyr[i] * g[i];
            mean_d += dxhat[i];
            mean_dx += dxhat[i] * xh[i];
        }
        mean_d /= n as f64;
        mean_dx /= n as f64;
        let rstd = cache.rstd[r];
        for i in 0..n {
            dx[r * n + i] = rstd * (dxhat[i] - mean_d - xh[i] * mean_dx);
        }
    }
    dx
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub(crate) fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

pub(crate) fn silu_grad(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 + x * (1.0 - s))
}

/// Softmax of one row, in place, max-shifted.
pub(crate) fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in row.iter_mut() {
        *v /= sum;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_small() {
        // [1 2] x [[1 0 1],[0 1 1]] + [0 0 1]
        let y = matmul(&[1.0, 2.0], 1, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0], 2, 3, Some(&[0.0, 0.0, 1.0]));
        assert_eq!(y, vec![1.0, 2.0, 4.0]);
    }

    #[test]
    fn layer_norm_normalizes() {
        let (y, _) = layer_norm(&[1.0, 2.0, 3.0, 4.0], 1, 4, &[1.0; 4], &[0.0; 4]);
        let mean: f64 = y.iter().sum::<f64>() / 4.0;
        let var: f64 = y.iter().map(|v| v * v).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12);
        assert!((var - 1.25 / (1.25 + LN_EPS)).abs() < 1e-12);
    }

    #[test]
    fn silu_grad_matches_difference() {
        for x in [-3.0, -0.5, 0.0, 0.7, 4.0] {
            let fd = (silu(x + 1e-6) - silu(x - 1e-6)) / 2e-6;
            assert!((fd - silu_grad(x)).abs() < 1e-8);
        }
    }
}
