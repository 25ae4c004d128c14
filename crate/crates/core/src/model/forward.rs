use super::{ForecasterParams, Layout};
use crate::data::{DataPoint, Mat};
use crate::error::{Error, Result};

/// Activations kept for the backward pass.
struct Trace {
    pooled: Vec<f64>,
    /// `s_0 .. s_T`, each `hidden` long.
    states: Vec<f64>,
    /// `yhat_0 .. yhat_{T-1}`: what each step consumed.
    fed: Vec<f64>,
    output: Mat,
}

#[inline]
fn matvec_add(w: &[f64], x: &[f64], out: &mut [f64]) {
    let cols = x.len();
    for (o, row) in out.iter_mut().zip(w.chunks_exact(cols)) {
        *o += row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    }
}

/// `out += w^T g` for `w` with `g.len()` rows.
#[inline]
fn matvec_t_add(w: &[f64], g: &[f64], out: &mut [f64]) {
    let cols = out.len();
    for (gi, row) in g.iter().zip(w.chunks_exact(cols)) {
        if *gi != 0.0 {
            out.iter_mut().zip(row).for_each(|(o, r)| *o += gi * r);
        }
    }
}

/// `w += g x^T`.
#[inline]
fn outer_add(w: &mut [f64], g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (gi, row) in g.iter().zip(w.chunks_exact_mut(cols)) {
        if *gi != 0.0 {
            row.iter_mut().zip(x).for_each(|(r, xi)| *r += gi * xi);
        }
    }
}

fn check_input(e: &Mat, params: &ForecasterParams) -> Result<()> {
    let d = params.dims();
    if e.shape() != (d.input_len, d.embed_dim) {
        return Err(Error::Config(format!(
            "embedding is {}x{}, model expects {}x{}",
            e.rows(),
            e.cols(),
            d.input_len,
            d.embed_dim
        )));
    }
    Ok(())
}

fn run(e: &Mat, params: &ForecasterParams, feed: &mut dyn FnMut(usize, &[f64], &mut [f64])) -> Trace {
    let d = params.dims();
    let Layout { pool, w_enc, b_enc, w_s, w_y, b_s, w_o, b_o, .. } = params.layout();
    let p = params.as_slice();
    let (hid, nv, n, heads) = (d.hidden_dim, d.n_vars, d.embed_dim, d.pool_heads);

    let mut pooled = vec![0.0; heads * n];
    let pool_w = &p[pool.clone()];
    for k in 0..heads {
        let dst = &mut pooled[k * n..(k + 1) * n];
        for h in 0..d.input_len {
            let a = pool_w[k * d.input_len + h];
            dst.iter_mut().zip(e.row(h)).for_each(|(o, x)| *o += a * x);
        }
    }

    let mut states = vec![0.0; (d.horizon + 1) * hid];
    {
        let s0 = &mut states[..hid];
        s0.copy_from_slice(&p[b_enc.clone()]);
        matvec_add(&p[w_enc.clone()], &pooled, s0);
        s0.iter_mut().for_each(|v| *v = v.tanh());
    }

    let mut fed = vec![0.0; d.horizon * nv];
    let mut output = Mat::zeros(d.horizon, nv);
    for t in 0..d.horizon {
        let (prev, rest) = states.split_at_mut((t + 1) * hid);
        let s_prev = &prev[t * hid..];
        let s = &mut rest[..hid];
        let y_in = &fed[t * nv..(t + 1) * nv];
        s.copy_from_slice(&p[b_s.clone()]);
        matvec_add(&p[w_s.clone()], s_prev, s);
        matvec_add(&p[w_y.clone()], y_in, s);
        s.iter_mut().for_each(|v| *v = v.tanh());
        let out = output.row_mut(t);
        out.copy_from_slice(&p[b_o.clone()]);
        matvec_add(&p[w_o.clone()], s, out);
        if t + 1 < d.horizon {
            feed(t, output.row(t), &mut fed[(t + 1) * nv..(t + 2) * nv]);
        }
    }
    Trace { pooled, states, fed, output }
}

/// Iterative multi-step forecast of `horizon` steps from embedding `e`.
pub fn forecast(e: &Mat, params: &ForecasterParams) -> Result<Mat> {
    check_input(e, params)?;
    if !params.is_finite() {
        return Err(Error::Evaluation("forecaster parameters contain NaN or infinity".into()));
    }
    Ok(run(e, params, &mut |_, y, next| next.copy_from_slice(y)).output)
}

/// Unroll with a caller-chosen decoder input: after step `t` produced
/// `pred`, `feed(t, pred)` returns what step `t + 1` consumes. Passing the
/// prediction back unchanged is exactly [`forecast`].
pub fn forecast_with_feed(
    e: &Mat,
    params: &ForecasterParams,
    mut feed: impl FnMut(usize, &[f64]) -> Vec<f64>,
) -> Result<Mat> {
    check_input(e, params)?;
    let nv = params.dims().n_vars;
    let mut err = None;
    let out = run(e, params, &mut |t, y, next| {
        let v = feed(t, y);
        if v.len() == nv {
            next.copy_from_slice(&v);
        } else {
            err = Some(Error::Config(format!("feed returned {} values, expected {nv}", v.len())));
        }
    })
    .output;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Loss and gradients of one sample's masked MSE.
#[derive(Clone, Debug)]
pub struct SampleGradient {
    pub loss: f64,
    /// Gradient with respect to the flat forecaster parameters.
    pub params: Vec<f64>,
    /// Gradient with respect to the input embedding.
    pub embedding: Mat,
}

/// Backpropagate `(1/|m|) ||(f(e) - y) * m||^2` through the decoder unroll
/// and the encoder.
pub fn mmse_gradient(x: &DataPoint, params: &ForecasterParams) -> Result<SampleGradient> {
    check_input(&x.e, params)?;
    let d = *params.dims();
    if x.y.shape() != (d.horizon, d.n_vars) || x.m.shape() != x.y.shape() {
        return Err(Error::Config("target/mask shape does not match the model".into()));
    }
    let count = x.m.count();
    if count == 0 {
        return Err(Error::Domain("empty target mask".into()));
    }
    let tr = run(&x.e, params, &mut |_, y, next| next.copy_from_slice(y));

    let (hid, nv, n, heads) = (d.hidden_dim, d.n_vars, d.embed_dim, d.pool_heads);
    let mut d_out = Mat::zeros(d.horizon, nv);
    let mut loss = 0.0;
    let scale = 2.0 / count as f64;
    for t in 0..d.horizon {
        for f in 0..nv {
            if x.m.get(t, f) {
                let r = tr.output.get(t, f) - x.y.get(t, f);
                loss += r * r;
                d_out.set(t, f, scale * r);
            }
        }
    }
    loss /= count as f64;

    let l = params.layout().clone();
    let p = params.as_slice();
    let mut g = vec![0.0; params.len()];

    let mut da_next = vec![0.0; hid];
    let mut dy = vec![0.0; nv];
    let mut ds = vec![0.0; hid];
    let mut da = vec![0.0; hid];
    for t in (0..d.horizon).rev() {
        // yhat_t feeds step t + 1 through w_y
        dy.copy_from_slice(d_out.row(t));
        if t + 1 < d.horizon {
            matvec_t_add(&p[l.w_y.clone()], &da_next, &mut dy);
        }
        let s_t = &tr.states[(t + 1) * hid..(t + 2) * hid];
        let s_prev = &tr.states[t * hid..(t + 1) * hid];
        outer_add(&mut g[l.w_o.clone()], &dy, s_t);
        g[l.b_o.clone()].iter_mut().zip(&dy).for_each(|(a, b)| *a += b);

        ds.iter_mut().for_each(|v| *v = 0.0);
        matvec_t_add(&p[l.w_o.clone()], &dy, &mut ds);
        if t + 1 < d.horizon {
            matvec_t_add(&p[l.w_s.clone()], &da_next, &mut ds);
        }
        for ((a, s), v) in da.iter_mut().zip(s_t).zip(&ds) {
            *a = v * (1.0 - s * s);
        }
        outer_add(&mut g[l.w_s.clone()], &da, s_prev);
        outer_add(&mut g[l.w_y.clone()], &da, &tr.fed[t * nv..(t + 1) * nv]);
        g[l.b_s.clone()].iter_mut().zip(&da).for_each(|(a, b)| *a += b);
        da_next.copy_from_slice(&da);
    }

    // encoder
    let s0 = &tr.states[..hid];
    let mut ds0 = vec![0.0; hid];
    matvec_t_add(&p[l.w_s.clone()], &da_next, &mut ds0);
    let dz: Vec<f64> = ds0.iter().zip(s0).map(|(v, s)| v * (1.0 - s * s)).collect();
    outer_add(&mut g[l.w_enc.clone()], &dz, &tr.pooled);
    g[l.b_enc.clone()].iter_mut().zip(&dz).for_each(|(a, b)| *a += b);
    let mut dpooled = vec![0.0; heads * n];
    matvec_t_add(&p[l.w_enc.clone()], &dz, &mut dpooled);

    let pool_w = &p[l.pool.clone()];
    let mut de = Mat::zeros(d.input_len, n);
    {
        let gp = &mut g[l.pool.clone()];
        for k in 0..heads {
            let dp = &dpooled[k * n..(k + 1) * n];
            for h in 0..d.input_len {
                let row = x.e.row(h);
                gp[k * d.input_len + h] += dp.iter().zip(row).map(|(a, b)| a * b).sum::<f64>();
                let a = pool_w[k * d.input_len + h];
                de.row_mut(h).iter_mut().zip(dp).for_each(|(o, v)| *o += a * v);
            }
        }
    }

    Ok(SampleGradient { loss, params: g, embedding: de })
}
