//! Windowed iterate history `X`, `Y`, `R = X − Y` with cached inner products.
//!
//! Alongside the columns the history keeps the consecutive differences
//! `YC` and `RC` (column `j` is `y_j − y_{j+1}`, resp. `r_j − r_{j+1}`),
//! formed from the vectors themselves, and the cross products the solvers
//! need: `RᵀR`, `(YC)ᵀR`, `(YC)ᵀRC`, `(RC)ᵀR`, `(RC)ᵀRC`, plus `Rᵀ(G−I)R`,
//! `(RC)ᵀ(G−I)R` and `(RC)ᵀ(G−I)RC` when curvature columns `(G − I)r_i`
//! are tracked. Differences are translation invariant, so none of these
//! products degrade when an iterate sits at the origin or `‖x*‖` is large.
//! Each push costs `O(Nd)`.

use std::collections::VecDeque;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};

/// Result of a [`IterateHistory::push`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PushOutcome {
    /// The oldest column triple was dropped to respect the window.
    pub evicted: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Seq {
    R,
    Dy,
    Dr,
    Ar,
    Dar,
}

impl Seq {
    fn curvature(self) -> bool {
        matches!(self, Seq::Ar | Seq::Dar)
    }
}

const PAIRS: [(Seq, Seq); 8] = [
    (Seq::R, Seq::R),
    (Seq::Dy, Seq::R),
    (Seq::Dy, Seq::Dr),
    (Seq::Dr, Seq::R),
    (Seq::Dr, Seq::Dr),
    (Seq::R, Seq::Ar),
    (Seq::Dr, Seq::Ar),
    (Seq::Dr, Seq::Dar),
];

#[derive(Clone, Debug)]
pub struct IterateHistory {
    dim: usize,
    capacity: Option<usize>,
    y: VecDeque<DVector<f64>>,
    x: VecDeque<DVector<f64>>,
    r: VecDeque<DVector<f64>>,
    dy: VecDeque<DVector<f64>>,
    dr: VecDeque<DVector<f64>>,
    /// `(G − I) r_i` and its differences, for curvature-tracking histories.
    ar: Option<VecDeque<DVector<f64>>>,
    dar: VecDeque<DVector<f64>>,
    cross: [DMatrix<f64>; 8],
}

impl IterateHistory {
    /// Empty history; `capacity = None` keeps every column.
    pub fn new(dim: usize, capacity: Option<usize>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidInput("dimension must be positive".into()));
        }
        if capacity == Some(0) {
            return Err(Error::InvalidInput("window capacity must be positive".into()));
        }
        Ok(Self {
            dim,
            capacity,
            y: VecDeque::new(),
            x: VecDeque::new(),
            r: VecDeque::new(),
            dy: VecDeque::new(),
            dr: VecDeque::new(),
            ar: None,
            dar: VecDeque::new(),
            cross: std::array::from_fn(|_| DMatrix::zeros(0, 0)),
        })
    }

    /// Enables storage of `(G − I) r_i` columns; must be called while empty.
    pub fn with_curvature(mut self) -> Self {
        assert!(
            self.is_empty(),
            "curvature tracking must be enabled on an empty history"
        );
        self.ar = Some(VecDeque::new());
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn capacity(&self) -> Option<usize> {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn tracks_curvature(&self) -> bool {
        self.ar.is_some()
    }

    /// Appends `(y, x)`, evicting the oldest pair when the window is full.
    pub fn push(&mut self, y: DVector<f64>, x: DVector<f64>) -> Result<PushOutcome> {
        if self.ar.is_some() {
            return Err(Error::InvalidInput(
                "curvature-tracking history needs push_with_curvature".into(),
            ));
        }
        self.push_inner(y, x, None)
    }

    /// Appends `(y, x)` together with `(G − I)(x − y)`.
    pub fn push_with_curvature(
        &mut self,
        y: DVector<f64>,
        x: DVector<f64>,
        curvature: DVector<f64>,
    ) -> Result<PushOutcome> {
        if self.ar.is_none() {
            return Err(Error::InvalidInput("history does not track curvature".into()));
        }
        check_dim(self.dim, curvature.len())?;
        self.push_inner(y, x, Some(curvature))
    }

    fn seq(&self, s: Seq) -> &VecDeque<DVector<f64>> {
        match s {
            Seq::R => &self.r,
            Seq::Dy => &self.dy,
            Seq::Dr => &self.dr,
            Seq::Ar => self.ar.as_ref().expect("curvature columns"),
            Seq::Dar => &self.dar,
        }
    }

    fn seq_mut(&mut self, s: Seq) -> &mut VecDeque<DVector<f64>> {
        match s {
            Seq::R => &mut self.r,
            Seq::Dy => &mut self.dy,
            Seq::Dr => &mut self.dr,
            Seq::Ar => self.ar.as_mut().expect("curvature columns"),
            Seq::Dar => &mut self.dar,
        }
    }

    fn push_inner(
        &mut self,
        y: DVector<f64>,
        x: DVector<f64>,
        curvature: Option<DVector<f64>>,
    ) -> Result<PushOutcome> {
        check_dim(self.dim, y.len())?;
        check_dim(self.dim, x.len())?;
        let evicted = matches!(self.capacity, Some(cap) if self.len() == cap);
        if evicted {
            self.evict_front();
        }
        let r = &x - &y;
        let mut fresh: Vec<(Seq, DVector<f64>)> = Vec::with_capacity(5);
        if let (Some(py), Some(pr)) = (self.y.back(), self.r.back()) {
            fresh.push((Seq::Dy, py - &y));
            fresh.push((Seq::Dr, pr - &r));
        }
        fresh.push((Seq::R, r));
        if let Some(c) = curvature {
            if let Some(pa) = self.ar.as_ref().and_then(|ar| ar.back()) {
                fresh.push((Seq::Dar, pa - &c));
            }
            fresh.push((Seq::Ar, c));
        }
        let tracking = self.ar.is_some();
        let active = |l: Seq, r: Seq| tracking || !(l.curvature() || r.curvature());

        self.y.push_back(y);
        self.x.push_back(x);
        let added: Vec<Seq> = fresh.iter().map(|(s, _)| *s).collect();
        for (s, v) in fresh {
            self.seq_mut(s).push_back(v);
        }
        // which fresh columns each stored sequence must be dotted with
        let mut partners: Vec<(Seq, Vec<Seq>)> = Vec::new();
        let mut need = |stored: Seq, new: Seq| match partners.iter_mut().find(|(s, _)| *s == stored) {
            Some((_, list)) if !list.contains(&new) => list.push(new),
            Some(_) => {}
            None => partners.push((stored, vec![new])),
        };
        for &(left, right) in PAIRS.iter().filter(|(l, r)| active(*l, *r)) {
            if added.contains(&left) {
                need(right, left);
            }
            if added.contains(&right) {
                need(left, right);
            }
        }
        // each stored column is read from memory once and reused from cache
        let mut table: Vec<((Seq, Seq), Vec<f64>)> = Vec::new();
        for (stored, news) in &partners {
            let cols = self.seq(*stored);
            let fresh_cols: Vec<&DVector<f64>> = news
                .iter()
                .map(|n| self.seq(*n).back().expect("column just pushed"))
                .collect();
            let mut out = vec![Vec::with_capacity(cols.len()); news.len()];
            for c in cols {
                for (o, f) in out.iter_mut().zip(&fresh_cols) {
                    o.push(f.dot(c));
                }
            }
            table.extend(news.iter().zip(out).map(|(n, o)| ((*stored, *n), o)));
        }
        let lookup = |stored: Seq, new: Seq| {
            &table
                .iter()
                .find(|(key, _)| *key == (stored, new))
                .expect("planned dot products")
                .1
        };
        for (k, &(left, right)) in PAIRS.iter().enumerate() {
            if !active(left, right) {
                continue;
            }
            let (grow_row, grow_col) = (added.contains(&left), added.contains(&right));
            if !grow_row && !grow_col {
                continue;
            }
            let (rows, cols) = (self.seq(left).len(), self.seq(right).len());
            let old = &self.cross[k];
            let (old_rows, old_cols) = old.shape();
            let next = DMatrix::from_fn(rows, cols, |i, j| {
                if i < old_rows && j < old_cols {
                    old[(i, j)]
                } else if grow_row && i == rows - 1 {
                    lookup(right, left)[j]
                } else {
                    lookup(left, right)[i]
                }
            });
            self.cross[k] = next;
        }
        Ok(PushOutcome { evicted })
    }

    fn evict_front(&mut self) {
        for cols in [
            &mut self.y,
            &mut self.x,
            &mut self.r,
            &mut self.dy,
            &mut self.dr,
            &mut self.dar,
        ] {
            cols.pop_front();
        }
        if let Some(ar) = self.ar.as_mut() {
            ar.pop_front();
        }
        for m in &mut self.cross {
            *m = drop_first(m);
        }
    }

    /// Removes every column.
    pub fn clear(&mut self) {
        for cols in [
            &mut self.y,
            &mut self.x,
            &mut self.r,
            &mut self.dy,
            &mut self.dr,
            &mut self.dar,
        ] {
            cols.clear();
        }
        if let Some(ar) = self.ar.as_mut() {
            ar.clear();
        }
        for m in &mut self.cross {
            *m = DMatrix::zeros(0, 0);
        }
    }

    /// Copy of the oldest `n` columns (for offline extrapolation on prefixes).
    pub fn prefix(&self, n: usize) -> Result<Self> {
        if n == 0 || n > self.len() {
            return Err(Error::InvalidInput(format!(
                "prefix length {n} outside 1..={}",
                self.len()
            )));
        }
        let mut out = Self::new(self.dim, None)?;
        if self.ar.is_some() {
            out = out.with_curvature();
        }
        for i in 0..n {
            let (y, x) = (self.y[i].clone(), self.x[i].clone());
            match &self.ar {
                Some(ar) => out.push_with_curvature(y, x, ar[i].clone())?,
                None => out.push(y, x)?,
            };
        }
        Ok(out)
    }

    pub fn y_col(&self, i: usize) -> &DVector<f64> {
        &self.y[i]
    }

    pub fn x_col(&self, i: usize) -> &DVector<f64> {
        &self.x[i]
    }

    pub fn r_col(&self, i: usize) -> &DVector<f64> {
        &self.r[i]
    }

    pub fn curvature_col(&self, i: usize) -> Option<&DVector<f64>> {
        self.ar.as_ref().map(|ar| &ar[i])
    }

    pub fn y_cols(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.y.iter()
    }

    pub fn x_cols(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.x.iter()
    }

    pub fn r_cols(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.r.iter()
    }

    pub fn last_y(&self) -> Option<&DVector<f64>> {
        self.y.back()
    }

    pub fn last_x(&self) -> Option<&DVector<f64>> {
        self.x.back()
    }

    pub fn y_matrix(&self) -> DMatrix<f64> {
        stack(&self.y, self.dim)
    }

    pub fn x_matrix(&self) -> DMatrix<f64> {
        stack(&self.x, self.dim)
    }

    pub fn r_matrix(&self) -> DMatrix<f64> {
        stack(&self.r, self.dim)
    }

    /// `YC`, built from exact differences.
    pub fn yc_matrix(&self) -> DMatrix<f64> {
        stack(&self.dy, self.dim)
    }

    /// `RC`, built from exact differences.
    pub fn rc_matrix(&self) -> DMatrix<f64> {
        stack(&self.dr, self.dim)
    }

    /// `RᵀR`.
    pub fn gram_rr(&self) -> &DMatrix<f64> {
        &self.cross[0]
    }

    /// `(YC)ᵀR`, of size `(N − 1) × N`.
    pub fn yc_r(&self) -> &DMatrix<f64> {
        &self.cross[1]
    }

    /// `(YC)ᵀRC`.
    pub fn yc_rc(&self) -> &DMatrix<f64> {
        &self.cross[2]
    }

    /// `(RC)ᵀR`.
    pub fn rc_r(&self) -> &DMatrix<f64> {
        &self.cross[3]
    }

    /// `(RC)ᵀRC`.
    pub fn rc_rc(&self) -> &DMatrix<f64> {
        &self.cross[4]
    }

    /// `Rᵀ(G − I)R` when curvature is tracked.
    pub fn gram_rar(&self) -> Option<&DMatrix<f64>> {
        self.ar.as_ref().map(|_| &self.cross[5])
    }

    /// `(RC)ᵀ(G − I)R` when curvature is tracked.
    pub fn rc_ar(&self) -> Option<&DMatrix<f64>> {
        self.ar.as_ref().map(|_| &self.cross[6])
    }

    /// `(RC)ᵀ(G − I)RC` when curvature is tracked.
    pub fn rc_arc(&self) -> Option<&DMatrix<f64>> {
        self.ar.as_ref().map(|_| &self.cross[7])
    }

    /// `Y w`.
    pub fn combine_y(&self, w: &DVector<f64>) -> DVector<f64> {
        combine(&self.y, w, self.dim)
    }

    /// `R w`.
    pub fn combine_r(&self, w: &DVector<f64>) -> DVector<f64> {
        combine(&self.r, w, self.dim)
    }

    /// `X w`.
    pub fn combine_x(&self, w: &DVector<f64>) -> DVector<f64> {
        combine(&self.x, w, self.dim)
    }

    /// `YC z`.
    pub fn combine_yc(&self, z: &DVector<f64>) -> DVector<f64> {
        combine(&self.dy, z, self.dim)
    }

    /// `RC z`.
    pub fn combine_rc(&self, z: &DVector<f64>) -> DVector<f64> {
        combine(&self.dr, z, self.dim)
    }

    /// `(G − I)R w` from cached curvature columns.
    pub fn combine_curvature(&self, w: &DVector<f64>) -> Option<DVector<f64>> {
        self.ar.as_ref().map(|ar| combine(ar, w, self.dim))
    }

    /// Smallest singular value of `R`, used to monitor column rank.
    pub fn min_singular_value_r(&self) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.r_matrix().singular_values().min()
    }
}

/// Consecutive-difference matrix: column `j` is `e_j − e_{j+1}`.
///
/// It has `N − 1` columns, rank `N − 1`, and `1ᵀC = 0`.
pub fn difference_matrix(n: usize) -> Result<DMatrix<f64>> {
    if n < 2 {
        return Err(Error::InsufficientHistory { needed: 2, have: n });
    }
    let mut c = DMatrix::zeros(n, n - 1);
    for j in 0..n - 1 {
        c[(j, j)] = 1.0;
        c[(j + 1, j)] = -1.0;
    }
    Ok(c)
}

/// `C z` without forming `C`.
pub fn apply_difference(z: &DVector<f64>) -> DVector<f64> {
    let m = z.len();
    DVector::from_fn(m + 1, |i, _| {
        let plus = if i < m { z[i] } else { 0.0 };
        let minus = if i > 0 { z[i - 1] } else { 0.0 };
        plus - minus
    })
}

/// `Cᵀ v` without forming `C`.
pub fn apply_difference_transpose(v: &DVector<f64>) -> DVector<f64> {
    let n = v.len();
    DVector::from_fn(n.saturating_sub(1), |j, _| v[j] - v[j + 1])
}

fn drop_first(m: &DMatrix<f64>) -> DMatrix<f64> {
    let (r, c) = m.shape();
    let (r2, c2) = (r.saturating_sub(1), c.saturating_sub(1));
    m.view((r - r2, c - c2), (r2, c2)).into_owned()
}

fn combine(cols: &VecDeque<DVector<f64>>, w: &DVector<f64>, dim: usize) -> DVector<f64> {
    assert_eq!(cols.len(), w.len(), "weight length must equal column count");
    let mut out = DVector::zeros(dim);
    for (c, &wi) in cols.iter().zip(w.iter()) {
        if wi != 0.0 {
            out.axpy(wi, c, 1.0);
        }
    }
    out
}

fn stack(cols: &VecDeque<DVector<f64>>, dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, cols.len());
    for (j, c) in cols.iter().enumerate() {
        m.set_column(j, c);
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn push_onto_empty() {
        let mut h = IterateHistory::new(2, None).unwrap();
        let out = h.push(v(&[1.0, 2.0]), v(&[3.0, 1.0])).unwrap();
        assert!(!out.evicted);
        assert_eq!(h.len(), 1);
        assert_eq!(h.r_col(0), &v(&[2.0, -1.0]));
        assert_eq!(h.yc_r().shape(), (0, 1));
    }

    #[test]
    fn window_evicts_oldest() {
        let mut h = IterateHistory::new(1, Some(3)).unwrap();
        for i in 0..3 {
            assert!(!h.push(v(&[i as f64]), v(&[0.0])).unwrap().evicted);
        }
        assert!(h.push(v(&[3.0]), v(&[0.0])).unwrap().evicted);
        assert_eq!(h.len(), 3);
        let ys: Vec<f64> = h.y_cols().map(|c| c[0]).collect();
        assert_eq!(ys, vec![1.0, 2.0, 3.0]);
        assert_eq!(h.gram_rr().nrows(), 3);
        assert_eq!(h.gram_rr()[(0, 0)], 1.0);
        assert_eq!(h.yc_rc().shape(), (2, 2));
    }

    #[test]
    fn residual_is_bitwise_difference() {
        let mut h = IterateHistory::new(3, None).unwrap();
        let y = v(&[0.1, 0.2, 0.3]);
        let x = v(&[0.7, -0.11, 1e-17]);
        h.push(y.clone(), x.clone()).unwrap();
        assert_eq!(h.r_col(h.len() - 1), &(&x - &y));
    }

    #[test]
    fn cross_products_match_dense() {
        let a = DMatrix::from_fn(4, 4, |i, j| 1.0 / (1.0 + i as f64 + j as f64));
        for cap in [None, Some(1), Some(3)] {
            let mut h = IterateHistory::new(4, cap).unwrap().with_curvature();
            for k in 0..7 {
                let y = DVector::from_fn(4, |i, _| ((i + 3 * k) as f64).sin());
                let x = DVector::from_fn(4, |i, _| ((i * k + 1) as f64).cos());
                let ar = &a * (&x - &y);
                h.push_with_curvature(y, x, ar).unwrap();
                let (ym, rm) = (h.y_matrix(), h.r_matrix());
                let arm = &a * &rm;
                assert!((h.gram_rr() - rm.transpose() * &rm).norm() < 1e-13);
                assert!((h.gram_rar().unwrap() - rm.transpose() * &arm).norm() < 1e-13);
                if h.len() < 2 {
                    assert_eq!(h.yc_rc().len(), 0);
                    continue;
                }
                let c = difference_matrix(h.len()).unwrap();
                let (yc, rc) = (&ym * &c, &rm * &c);
                assert!((h.yc_matrix() - &yc).norm() < 1e-14);
                assert!((h.yc_r() - yc.transpose() * &rm).norm() < 1e-13);
                assert!((h.yc_rc() - yc.transpose() * &rc).norm() < 1e-13);
                assert!((h.rc_r() - rc.transpose() * &rm).norm() < 1e-13);
                assert!((h.rc_rc() - rc.transpose() * &rc).norm() < 1e-13);
                assert!((h.rc_ar().unwrap() - rc.transpose() * &arm).norm() < 1e-13);
                assert!((h.rc_arc().unwrap() - rc.transpose() * (&a * &rc)).norm() < 1e-13);
            }
        }
    }

    #[test]
    fn plain_history_skips_curvature_products() {
        let mut h = IterateHistory::new(2, None).unwrap();
        h.push(v(&[0.0, 0.0]), v(&[1.0, 0.0])).unwrap();
        h.push(v(&[1.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        assert!(h.gram_rar().is_none());
        assert_eq!(h.yc_r(), &DMatrix::from_row_slice(1, 2, &[-1.0, 0.0]));
    }

    #[test]
    fn difference_matrix_small() {
        assert_eq!(
            difference_matrix(2).unwrap(),
            DMatrix::from_column_slice(2, 1, &[1.0, -1.0])
        );
        assert_eq!(
            difference_matrix(3).unwrap(),
            DMatrix::from_column_slice(3, 2, &[1.0, -1.0, 0.0, 0.0, 1.0, -1.0])
        );
        assert!(matches!(
            difference_matrix(1),
            Err(Error::InsufficientHistory { needed: 2, have: 1 })
        ));
    }

    #[test]
    fn difference_matrix_structure() {
        for n in 2..8 {
            let c = difference_matrix(n).unwrap();
            let colsum = DMatrix::from_element(1, n, 1.0) * &c;
            assert!(colsum.iter().all(|&s| s == 0.0));
            assert_eq!(c.clone().svd(false, false).rank(1e-12), n - 1);
            let z = DVector::from_fn(n - 1, |i, _| (i as f64 + 0.5).sqrt());
            let w = DVector::from_fn(n, |i, _| (i as f64 * 0.7).cos());
            assert_eq!(apply_difference(&z), &c * &z);
            assert_eq!(apply_difference_transpose(&w), c.transpose() * &w);
        }
    }

    #[test]
    fn rc_columns_are_consecutive_differences() {
        let mut h = IterateHistory::new(2, None).unwrap();
        for k in 0..4 {
            h.push(v(&[k as f64, 1.0]), v(&[(k * k) as f64, -(k as f64)]))
                .unwrap();
        }
        for j in 0..3 {
            let expect = h.r_col(j) - h.r_col(j + 1);
            assert_eq!(h.rc_matrix().column(j).into_owned(), expect);
        }
    }

    #[test]
    fn dimension_checks() {
        let mut h = IterateHistory::new(2, None).unwrap();
        assert!(h.push(v(&[1.0]), v(&[1.0, 2.0])).is_err());
        assert!(IterateHistory::new(2, Some(0)).is_err());
        assert!(h
            .push_with_curvature(v(&[1.0, 0.0]), v(&[1.0, 2.0]), v(&[0.0, 0.0]))
            .is_err());
    }
}
