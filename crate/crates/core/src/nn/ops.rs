//! Dense row-major kernels shared by the layers.

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `out += W[:, col_off..col_off + x.len()] · x` for a `rows × cols` matrix `w`.
#[inline]
pub fn matvec_cols_acc(w: &[f64], cols: usize, col_off: usize, x: &[f64], out: &mut [f64]) {
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols + col_off..r * cols + col_off + x.len()];
        *o += dot(row, x);
    }
}

/// `out += W · x`.
#[inline]
pub fn matvec_acc(w: &[f64], cols: usize, x: &[f64], out: &mut [f64]) {
    matvec_cols_acc(w, cols, 0, x, out)
}

/// `out += Wᵀ · d` for a `rows × cols` matrix.
#[inline]
pub fn matvec_t_acc(w: &[f64], cols: usize, d: &[f64], out: &mut [f64]) {
    debug_assert_eq!(out.len(), cols);
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        let row = &w[r * cols..(r + 1) * cols];
        for (o, &wv) in out.iter_mut().zip(row) {
            *o += wv * dr;
        }
    }
}

/// `g += d · xᵀ`.
#[inline]
pub fn outer_acc(g: &mut [f64], cols: usize, d: &[f64], x: &[f64]) {
    debug_assert_eq!(x.len(), cols);
    for (r, &dr) in d.iter().enumerate() {
        if dr == 0.0 {
            continue;
        }
        let row = &mut g[r * cols..(r + 1) * cols];
        for (gv, &xv) in row.iter_mut().zip(x) {
            *gv += dr * xv;
        }
    }
}

#[inline]
pub fn add_assign(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

pub fn concat(parts: &[&[f64]]) -> Vec<f64> {
    let mut out = Vec::with_capacity(parts.iter().map(|p| p.len()).sum());
    for p in parts {
        out.extend_from_slice(p);
    }
    out
}
