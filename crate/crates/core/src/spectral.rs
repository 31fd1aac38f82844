//! Diffusion-map embeddings of graphs.
//!
//! The operator is `M = D^{-1/2} A D^{-1/2}`. It shares its spectrum with the
//! random-walk matrix `D^{-1} A`, lies in `[-1, 1]`, and its orthonormal
//! eigenvectors are exactly the eigenfunctions `f_j` with `Σ_v f_j(v)² = 1`.
//! A vertex is mapped to `Φ(v)_j = λ_j^k f_j(v)`.

use std::fmt::Write as _;
use std::io::Write;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::norm::{FeatureVector, NormSpec};
use crate::rng::RngStream;
use crate::tol;

/// Off-diagonal Frobenius threshold for Jacobi sweeps, relative to `max(1, ‖M‖_F)`.
pub const JACOBI_THRESHOLD: f64 = 1e-12;
pub const JACOBI_MAX_SWEEPS: usize = 100;

/// Dense square matrix, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    n: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(n: usize) -> Self {
        Matrix {
            n,
            data: vec![0.0; n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::domain("matrix must be square"));
        }
        Ok(Matrix {
            n,
            data: rows.concat(),
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, j)).collect()
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| (self.get(i, j) - self.get(j, i)).abs() <= tol))
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum::<f64>().sqrt()
    }

    fn off_diagonal(&self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.n {
            for j in 0..self.n {
                if i != j {
                    s += self.get(i, j).powi(2);
                }
            }
        }
        s.sqrt()
    }
}

/// Eigenvalues in descending order with orthonormal eigenvectors as columns.
#[derive(Debug, Clone, PartialEq)]
pub struct Eigen {
    pub values: Vec<f64>,
    pub vectors: Matrix,
    pub sweeps: usize,
}

/// Symmetric eigendecomposition by cyclic Jacobi rotations.
pub fn eigendecompose(m: &Matrix) -> Result<Eigen> {
    if !m.is_symmetric(tol::SYMMETRY) {
        return Err(Error::domain("eigendecompose needs a symmetric matrix"));
    }
    if m.data.iter().any(|x| !x.is_finite()) {
        return Err(Error::domain("matrix entries must be finite"));
    }
    let n = m.n;
    let mut a = m.clone();
    let mut v = Matrix::identity(n);
    let threshold = JACOBI_THRESHOLD * m.frobenius().max(1.0);
    let mut sweeps = 0;
    while a.off_diagonal() > threshold {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::Numerical {
                what: format!("Jacobi did not converge in {JACOBI_MAX_SWEEPS} sweeps"),
                residual: a.off_diagonal(),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let theta = (a.get(q, q) - a.get(p, p)) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                rotate(&mut a, &mut v, p, q, c, s, t);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).total_cmp(&a.get(i, i)).then(i.cmp(&j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Matrix::zeros(n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        // fix the sign so the first clearly nonzero entry is positive
        let flip = col
            .iter()
            .find(|x| x.abs() > 1e-10)
            .is_some_and(|x| *x < 0.0);
        for (i, x) in col.into_iter().enumerate() {
            vectors.set(i, dst, if flip { -x } else { x });
        }
    }
    Ok(Eigen {
        values,
        vectors,
        sweeps,
    })
}

#[allow(clippy::too_many_arguments)]
fn rotate(a: &mut Matrix, v: &mut Matrix, p: usize, q: usize, c: f64, s: f64, t: f64) {
    let n = a.n;
    let apq = a.get(p, q);
    let app = a.get(p, p) - t * apq;
    let aqq = a.get(q, q) + t * apq;
    for k in 0..n {
        if k == p || k == q {
            continue;
        }
        let akp = a.get(k, p);
        let akq = a.get(k, q);
        let np = c * akp - s * akq;
        let nq = s * akp + c * akq;
        a.set(k, p, np);
        a.set(p, k, np);
        a.set(k, q, nq);
        a.set(q, k, nq);
    }
    a.set(p, p, app);
    a.set(q, q, aqq);
    a.set(p, q, 0.0);
    a.set(q, p, 0.0);
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}

/// An undirected graph on `0..n` with positive edge weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    n: usize,
    edges: Vec<(usize, usize, f64)>,
}

impl Graph {
    /// Validates the edge list: no self-loops, indices in range, weights
    /// positive, every vertex with positive degree.
    pub fn new(n: usize, edges: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("graph needs at least one vertex"));
        }
        let mut deg = vec![0.0; n];
        for &(u, v, w) in &edges {
            if u >= n || v >= n {
                return Err(Error::domain(format!(
                    "edge ({u}, {v}) out of range for n = {n}"
                )));
            }
            if u == v {
                return Err(Error::domain(format!("self-loop at vertex {u}")));
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::domain(format!(
                    "edge ({u}, {v}) has non-positive weight {w}"
                )));
            }
            deg[u] += w;
            deg[v] += w;
        }
        if let Some(i) = deg.iter().position(|d| *d == 0.0) {
            return Err(Error::domain(format!(
                "vertex {i} is isolated (degree zero)"
            )));
        }
        Ok(Graph { n, edges })
    }

    pub fn unweighted(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        Self::new(n, edges.iter().map(|&(u, v)| (u, v, 1.0)).collect())
    }

    pub fn complete(n: usize) -> Result<Self> {
        let edges: Vec<_> = (0..n)
            .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
            .collect();
        Self::unweighted(n, &edges)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edges(&self) -> &[(usize, usize, f64)] {
        &self.edges
    }

    pub fn adjacency(&self) -> Matrix {
        let mut a = Matrix::zeros(self.n);
        for &(u, v, w) in &self.edges {
            a.set(u, v, a.get(u, v) + w);
            a.set(v, u, a.get(v, u) + w);
        }
        a
    }

    /// Parses `u v [weight]` lines; `#` starts a comment, and an optional
    /// `n <count>` line fixes the vertex count (otherwise max index + 1).
    pub fn parse_edge_list(text: &str) -> Result<Self> {
        let mut declared = None;
        let mut edges = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let toks: Vec<&str> = line.split_whitespace().collect();
            let bad = || Error::Parse(format!("line {}: cannot parse {raw:?}", lineno + 1));
            if toks[0] == "n" {
                if toks.len() != 2 || declared.is_some() {
                    return Err(bad());
                }
                declared = Some(toks[1].parse::<usize>().map_err(|_| bad())?);
                continue;
            }
            if toks.len() < 2 || toks.len() > 3 {
                return Err(bad());
            }
            let u = toks[0].parse::<usize>().map_err(|_| bad())?;
            let v = toks[1].parse::<usize>().map_err(|_| bad())?;
            let w = match toks.get(2) {
                Some(t) => t.parse::<f64>().map_err(|_| bad())?,
                None => 1.0,
            };
            edges.push((u, v, w));
        }
        let inferred = edges
            .iter()
            .map(|&(u, v, _)| u.max(v) + 1)
            .max()
            .unwrap_or(0);
        Graph::new(declared.unwrap_or(inferred), edges)
    }

    pub fn to_edge_list(&self) -> String {
        let mut s = format!("n {}\n", self.n);
        for &(u, v, w) in &self.edges {
            if w == 1.0 {
                let _ = writeln!(s, "{u} {v}");
            } else {
                let _ = writeln!(s, "{u} {v} {w:.16e}");
            }
        }
        s
    }
}

/// Seeded `G(n, p)` conditioned on having no isolated vertex (redrawn from
/// the same stream until the condition holds).
pub fn erdos_renyi(n: usize, p: f64, rng: &mut RngStream) -> Result<Graph> {
    if !(p > 0.0 && p <= 1.0) || n < 2 {
        return Err(Error::domain(format!(
            "G(n, p) needs n >= 2 and p in (0, 1], got n={n}, p={p}"
        )));
    }
    for _ in 0..10_000 {
        let mut edges = Vec::new();
        let mut touched = vec![false; n];
        for u in 0..n {
            for v in u + 1..n {
                if rng.random_bool(p) {
                    edges.push((u, v));
                    touched[u] = true;
                    touched[v] = true;
                }
            }
        }
        if touched.iter().all(|t| *t) {
            return Graph::unweighted(n, &edges);
        }
    }
    Err(Error::domain(format!(
        "G({n}, {p}) kept producing isolated vertices"
    )))
}

/// `D^{-1/2} A D^{-1/2}`, symmetric bit-for-bit.
pub fn normalized_operator(g: &Graph) -> Result<Matrix> {
    let a = g.adjacency();
    let n = g.n;
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|i| {
            let d: f64 = (0..n).map(|j| a.get(i, j)).sum();
            if d > 0.0 {
                Ok(1.0 / d.sqrt())
            } else {
                Err(Error::domain(format!("vertex {i} has degree zero")))
            }
        })
        .collect::<Result<_>>()?;
    let mut m = Matrix::zeros(n);
    for i in 0..n {
        for j in i + 1..n {
            let x = a.get(i, j) * inv_sqrt[i] * inv_sqrt[j];
            m.set(i, j, x);
            m.set(j, i, x);
        }
    }
    Ok(m)
}

/// Per-vertex diffusion-map coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralEmbedding {
    /// `λ_1 ≥ … ≥ λ_n`, all of them, including a dropped top eigenvalue.
    pub eigenvalues: Vec<f64>,
    /// Column `j` is the unit-norm eigenfunction `f_j`.
    pub eigenfunctions: Matrix,
    pub k: u32,
    /// Whether the trivial top eigenfunction is excluded from the features.
    pub drop_top: bool,
    pub features: Vec<FeatureVector>,
}

impl SpectralEmbedding {
    /// Eigenvalues that contribute a coordinate to `Φ`.
    pub fn used_eigenvalues(&self) -> &[f64] {
        if self.drop_top {
            &self.eigenvalues[1..]
        } else {
            &self.eigenvalues
        }
    }

    pub fn n(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.used_eigenvalues().len();
        let mut header = vec!["vertex".to_string()];
        header.extend((1..=dim).map(|j| format!("phi_{j}")));
        w.write_record(&header)?;
        for (v, f) in self.features.iter().enumerate() {
            let mut row = vec![v.to_string()];
            row.extend(f.coords.iter().map(|x| format!("{x:.16e}")));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub fn diffusion_map(g: &Graph, k: u32) -> Result<SpectralEmbedding> {
    diffusion_map_with(g, k, false)
}

pub fn diffusion_map_with(g: &Graph, k: u32, drop_top: bool) -> Result<SpectralEmbedding> {
    let m = normalized_operator(g)?;
    let eig = eigendecompose(&m)?;
    let n = g.n;
    let start = usize::from(drop_top);
    let features = (0..n)
        .map(|v| {
            let coords = (start..n)
                .map(|j| eig.values[j].powi(k as i32) * eig.vectors.get(v, j))
                .collect();
            FeatureVector::new(coords, NormSpec::l2())
        })
        .collect::<Result<_>>()?;
    Ok(SpectralEmbedding {
        eigenvalues: eig.values,
        eigenfunctions: eig.vectors,
        k,
        drop_top,
        features,
    })
}

/// `(1/n) Σ_v ‖Φ(v)‖₂²`, computed from the features.
pub fn mean_squared_norm(e: &SpectralEmbedding) -> f64 {
    let n = e.features.len() as f64;
    e.features
        .iter()
        .map(|f| f.coords.iter().map(|x| x * x).sum::<f64>())
        .sum::<f64>()
        / n
}

/// `Σ_j λ_j^{2k} / n` over the eigenvalues used by the features.
pub fn eigenvalue_moment(e: &SpectralEmbedding) -> f64 {
    let n = e.n() as f64;
    e.used_eigenvalues()
        .iter()
        .map(|l| l.powi(2 * e.k as i32))
        .sum::<f64>()
        / n
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;

    fn random_symmetric(n: usize, rng: &mut RngStream) -> Matrix {
        let mut m = Matrix::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let x: f64 = rng.random_range(-1.0..1.0);
                m.set(i, j, x);
                m.set(j, i, x);
            }
        }
        m
    }

    fn reconstruction_error(m: &Matrix, e: &Eigen) -> f64 {
        let n = m.n();
        let mut err = 0.0;
        for i in 0..n {
            for j in 0..n {
                let r: f64 = (0..n)
                    .map(|k| e.vectors.get(i, k) * e.values[k] * e.vectors.get(j, k))
                    .sum();
                err += (r - m.get(i, j)).powi(2);
            }
        }
        err.sqrt()
    }

    #[test]
    fn identity_spectrum() {
        let e = eigendecompose(&Matrix::identity(3)).unwrap();
        assert_eq!(e.values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn swap_matrix_spectrum() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let e = eigendecompose(&m).unwrap();
        assert_relative_eq!(e.values[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(e.values[1], -1.0, epsilon = 1e-14);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_relative_eq!(e.vectors.get(0, 0), h, epsilon = 1e-14);
        assert_relative_eq!(e.vectors.get(1, 0), h, epsilon = 1e-14);
        assert_relative_eq!(e.vectors.get(0, 1).abs(), h, epsilon = 1e-14);
        assert_relative_eq!(e.vectors.get(0, 1), -e.vectors.get(1, 1), epsilon = 1e-14);
    }

    #[test]
    fn random_reconstruction_and_residuals() {
        let mut rng = RngStream::new(3, 0);
        for n in [1, 2, 5, 8, 17] {
            let m = random_symmetric(n, &mut rng);
            let e = eigendecompose(&m).unwrap();
            assert!(reconstruction_error(&m, &e) <= 1e-8);
            assert!(e.values.windows(2).all(|w| w[0] >= w[1]));
            for j in 0..n {
                let v = e.vectors.column(j);
                let res: f64 = (0..n)
                    .map(|i| {
                        let mv: f64 = (0..n).map(|k| m.get(i, k) * v[k]).sum();
                        (mv - e.values[j] * v[i]).powi(2)
                    })
                    .sum::<f64>()
                    .sqrt();
                assert!(res <= 1e-8 * n as f64);
                for l in 0..n {
                    let d: f64 = (0..n).map(|i| v[i] * e.vectors.get(i, l)).sum();
                    let want = if l == j { 1.0 } else { 0.0 };
                    assert!((d - want).abs() <= 1e-8);
                }
            }
        }
    }

    #[test]
    fn rejects_asymmetric() {
        let m = Matrix::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.0]]).unwrap();
        assert!(matches!(eigendecompose(&m), Err(Error::Domain(_))));
    }

    #[test]
    fn single_edge_operator() {
        let g = Graph::unweighted(2, &[(0, 1)]).unwrap();
        let m = normalized_operator(&g).unwrap();
        assert_eq!(
            m,
            Matrix::from_rows(&[vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap()
        );
    }

    #[test]
    fn triangle_spectrum() {
        let g = Graph::complete(3).unwrap();
        let m = normalized_operator(&g).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 0.0 } else { 0.5 };
                assert_relative_eq!(m.get(i, j), want, epsilon = 1e-15);
            }
        }
        // oracle: characteristic polynomial of [[0,h,h],[h,0,h],[h,h,0]] is
        // -(λ-1)(λ+1/2)², so the spectrum is {1, -1/2, -1/2}
        let charpoly = |l: f64| -(l.powi(3)) + 3.0 * 0.25 * l + 2.0 * 0.125;
        for l in [1.0, -0.5] {
            assert!(charpoly(l).abs() < 1e-15);
        }
        let e = eigendecompose(&m).unwrap();
        assert_relative_eq!(e.values[0], 1.0, epsilon = 1e-12);
        assert_relative_eq!(e.values[1], -0.5, epsilon = 1e-12);
        assert_relative_eq!(e.values[2], -0.5, epsilon = 1e-12);
    }

    #[test]
    fn graph_validation() {
        assert!(Graph::unweighted(3, &[(0, 1)]).is_err());
        assert!(Graph::unweighted(2, &[(0, 0)]).is_err());
        assert!(Graph::unweighted(2, &[(0, 2)]).is_err());
        assert!(Graph::new(2, vec![(0, 1, -1.0)]).is_err());
    }

    #[test]
    fn edge_list_parsing() {
        let g = Graph::parse_edge_list("# a path\n0 1\n1 2 0.5 # weighted\n\n").unwrap();
        assert_eq!(g.n(), 3);
        assert_eq!(g.edges()[1], (1, 2, 0.5));
        let g2 = Graph::parse_edge_list(&g.to_edge_list()).unwrap();
        assert_eq!(g, g2);
        assert!(Graph::parse_edge_list("n 4\n0 1\n2 3\n").is_ok());
        assert!(Graph::parse_edge_list("n 5\n0 1\n2 3\n").is_err());
        assert!(Graph::parse_edge_list("0 x\n").is_err());
    }

    #[test]
    fn two_vertex_laplacian_eigenmap() {
        let g = Graph::unweighted(2, &[(0, 1)]).unwrap();
        let e = diffusion_map(&g, 0).unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        for f in &e.features {
            for x in &f.coords {
                assert_relative_eq!(x.abs(), h, epsilon = 1e-14);
            }
        }
        assert_relative_eq!(mean_squared_norm(&e), 1.0, epsilon = 1e-14);
    }

    #[test]
    fn triangle_moment() {
        let e = diffusion_map(&Graph::complete(3).unwrap(), 1).unwrap();
        assert_relative_eq!(mean_squared_norm(&e), 0.5, epsilon = 1e-12);
        assert_relative_eq!(eigenvalue_moment(&e), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn large_k_keeps_only_unit_eigenvalues() {
        // connected, non-bipartite: only λ₁ = 1 survives
        let g = Graph::unweighted(4, &[(0, 1), (1, 2), (2, 0), (2, 3)]).unwrap();
        let e = diffusion_map(&g, 200).unwrap();
        for (v, f) in e.features.iter().enumerate() {
            assert_relative_eq!(f.coords[0], e.eigenfunctions.get(v, 0), epsilon = 1e-12);
            assert!(f.coords[1..].iter().all(|x| x.abs() < 1e-10));
        }
    }

    #[test]
    fn random_graph_moments() {
        let mut rng = RngStream::new(11, 0);
        let g = erdos_renyi(16, 0.5, &mut rng).unwrap();
        for k in [0, 1, 2, 4] {
            let e = diffusion_map(&g, k).unwrap();
            let m = mean_squared_norm(&e);
            assert!(m <= 1.0 + 1e-8);
            assert!((m - eigenvalue_moment(&e)).abs() <= 1e-8);
            if k == 0 {
                assert!((m - 1.0).abs() < 1e-10);
            }
            assert!(e.eigenvalues.iter().all(|l| l.abs() <= 1.0 + 1e-8));
            assert!((e.eigenvalues[0] - 1.0).abs() < 1e-10);
        }
        let e = diffusion_map_with(&g, 1, true).unwrap();
        assert_eq!(e.features[0].dim(), 15);
        assert!((mean_squared_norm(&e) - eigenvalue_moment(&e)).abs() <= 1e-8);
    }

    #[test]
    fn sign_flip_leaves_moment() {
        let mut rng = RngStream::new(5, 1);
        let g = erdos_renyi(10, 0.4, &mut rng).unwrap();
        let mut e = diffusion_map(&g, 2).unwrap();
        let before = mean_squared_norm(&e);
        for f in &mut e.features {
            f.coords[3] = -f.coords[3];
        }
        assert_eq!(before, mean_squared_norm(&e));
    }

    #[test]
    fn embedding_csv_header() {
        let e = diffusion_map(&Graph::complete(3).unwrap(), 1).unwrap();
        let mut buf = Vec::new();
        e.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        assert!(s.starts_with("vertex,phi_1,phi_2,phi_3\n0,"));
        assert_eq!(s.lines().count(), 4);
    }

    #[test]
    fn erdos_renyi_is_reproducible() {
        let a = erdos_renyi(32, 0.25, &mut RngStream::new(9, 2)).unwrap();
        let b = erdos_renyi(32, 0.25, &mut RngStream::new(9, 2)).unwrap();
        assert_eq!(a, b);
    }
}
