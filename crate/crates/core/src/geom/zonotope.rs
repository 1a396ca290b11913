use super::{convex_hull, ConvexPolygon, GeomError, Point2, EPS_AREA, EPS_LP};
use crate::lp::{self, LpStatus, StandardLp};
use nalgebra::{DMatrix, DVector};

/// Constrained zonotope `{ c + Gξ : ‖ξ‖∞ ≤ 1, Aξ = b }`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstrainedZonotope {
    center: DVector<f64>,
    generators: DMatrix<f64>,
    constraint_a: DMatrix<f64>,
    constraint_b: DVector<f64>,
}

impl ConstrainedZonotope {
    pub fn new(
        center: DVector<f64>,
        generators: DMatrix<f64>,
        constraint_a: DMatrix<f64>,
        constraint_b: DVector<f64>,
    ) -> Result<Self, GeomError> {
        let n = center.len();
        let ng = generators.ncols();
        if generators.nrows() != n {
            return Err(GeomError::DimensionMismatch {
                expected: n,
                got: generators.nrows(),
            });
        }
        if constraint_a.ncols() != ng {
            return Err(GeomError::InvalidZonotope(format!(
                "constraint matrix has {} columns for {} generators",
                constraint_a.ncols(),
                ng
            )));
        }
        if constraint_a.nrows() != constraint_b.len() {
            return Err(GeomError::InvalidZonotope(format!(
                "{} constraint rows but {} right-hand sides",
                constraint_a.nrows(),
                constraint_b.len()
            )));
        }
        let finite = center.iter().all(|v| v.is_finite())
            && generators.iter().all(|v| v.is_finite())
            && constraint_a.iter().all(|v| v.is_finite())
            && constraint_b.iter().all(|v| v.is_finite());
        if !finite {
            return Err(GeomError::InvalidZonotope("non-finite entry".into()));
        }
        let z = Self {
            center,
            generators,
            constraint_a,
            constraint_b,
        };
        if z.num_constraints() > z.num_generators() {
            return Ok(z.reduce_constraints());
        }
        Ok(z)
    }

    /// Plain zonotope (no equality constraints).
    pub fn zonotope(center: DVector<f64>, generators: DMatrix<f64>) -> Result<Self, GeomError> {
        let ng = generators.ncols();
        Self::new(center, generators, DMatrix::zeros(0, ng), DVector::zeros(0))
    }

    /// Axis-aligned box with the given half widths.
    pub fn axis_box(center: &[f64], half_widths: &[f64]) -> Result<Self, GeomError> {
        if center.len() != half_widths.len() {
            return Err(GeomError::DimensionMismatch {
                expected: center.len(),
                got: half_widths.len(),
            });
        }
        Self::zonotope(
            DVector::from_column_slice(center),
            DMatrix::from_diagonal(&DVector::from_column_slice(half_widths)),
        )
    }

    pub fn dim(&self) -> usize {
        self.center.len()
    }

    pub fn num_generators(&self) -> usize {
        self.generators.ncols()
    }

    pub fn num_constraints(&self) -> usize {
        self.constraint_a.nrows()
    }

    pub fn center(&self) -> &DVector<f64> {
        &self.center
    }

    pub fn generators(&self) -> &DMatrix<f64> {
        &self.generators
    }

    pub fn constraint_a(&self) -> &DMatrix<f64> {
        &self.constraint_a
    }

    pub fn constraint_b(&self) -> &DVector<f64> {
        &self.constraint_b
    }

    /// Point of the set for a given factor vector (no feasibility check).
    pub fn point_at(&self, xi: &DVector<f64>) -> DVector<f64> {
        &self.center + &self.generators * xi
    }

    /// `{Mc, MG, A, b}`.
    pub fn linear_map(&self, m: &DMatrix<f64>) -> Result<Self, GeomError> {
        if m.ncols() != self.dim() {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim(),
                got: m.ncols(),
            });
        }
        Self::new(
            m * &self.center,
            m * &self.generators,
            self.constraint_a.clone(),
            self.constraint_b.clone(),
        )
    }

    /// Exact intersection by generator/constraint stacking:
    /// `c = c₁, G = [G₁ 0], A = [A₁ 0; 0 A₂; G₁ −G₂], b = [b₁; b₂; c₂ − c₁]`.
    pub fn intersect(&self, other: &Self) -> Result<Self, GeomError> {
        if self.dim() != other.dim() {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let n = self.dim();
        let (g1, g2) = (self.num_generators(), other.num_generators());
        let (c1, c2) = (self.num_constraints(), other.num_constraints());
        let mut g = DMatrix::zeros(n, g1 + g2);
        g.view_mut((0, 0), (n, g1)).copy_from(&self.generators);
        let mut a = DMatrix::zeros(c1 + c2 + n, g1 + g2);
        a.view_mut((0, 0), (c1, g1)).copy_from(&self.constraint_a);
        a.view_mut((c1, g1), (c2, g2)).copy_from(&other.constraint_a);
        a.view_mut((c1 + c2, 0), (n, g1)).copy_from(&self.generators);
        a.view_mut((c1 + c2, g1), (n, g2)).copy_from(&(-&other.generators));
        let mut b = DVector::zeros(c1 + c2 + n);
        b.rows_mut(0, c1).copy_from(&self.constraint_b);
        b.rows_mut(c1, c2).copy_from(&other.constraint_b);
        b.rows_mut(c1 + c2, n).copy_from(&(&other.center - &self.center));
        Self::new(self.center.clone(), g, a, b)
    }

    /// `{c₁ + c₂, [G₁ G₂], blkdiag(A₁, A₂), [b₁; b₂]}`.
    pub fn minkowski_sum(&self, other: &Self) -> Result<Self, GeomError> {
        if self.dim() != other.dim() {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        let n = self.dim();
        let (g1, g2) = (self.num_generators(), other.num_generators());
        let (c1, c2) = (self.num_constraints(), other.num_constraints());
        let mut g = DMatrix::zeros(n, g1 + g2);
        g.view_mut((0, 0), (n, g1)).copy_from(&self.generators);
        g.view_mut((0, g1), (n, g2)).copy_from(&other.generators);
        let mut a = DMatrix::zeros(c1 + c2, g1 + g2);
        a.view_mut((0, 0), (c1, g1)).copy_from(&self.constraint_a);
        a.view_mut((c1, g1), (c2, g2)).copy_from(&other.constraint_a);
        let mut b = DVector::zeros(c1 + c2);
        b.rows_mut(0, c1).copy_from(&self.constraint_b);
        b.rows_mut(c1, c2).copy_from(&other.constraint_b);
        Self::new(&self.center + &other.center, g, a, b)
    }

    /// Drops linearly dependent constraint rows. An inconsistent system
    /// collapses to a canonical infeasible constraint `ξ₁ = 2`.
    fn reduce_constraints(self) -> Self {
        let ng = self.num_generators();
        let mut rows: Vec<Vec<f64>> = (0..self.num_constraints())
            .map(|i| {
                let mut r: Vec<f64> = self.constraint_a.row(i).iter().copied().collect();
                r.push(self.constraint_b[i]);
                r
            })
            .collect();
        let scale = rows
            .iter()
            .flatten()
            .fold(1.0f64, |acc, v| acc.max(v.abs()));
        let tol = 1e-12 * scale;
        let mut rank = 0;
        for col in 0..ng {
            let Some(piv) = (rank..rows.len())
                .filter(|&r| rows[r][col].abs() > tol)
                .max_by(|&a, &b| rows[a][col].abs().total_cmp(&rows[b][col].abs()))
            else {
                continue;
            };
            rows.swap(rank, piv);
            let p = rows[rank][col];
            let prow = rows[rank].clone();
            for r in rows.iter_mut().skip(rank + 1) {
                let f = r[col] / p;
                if f != 0.0 {
                    for (v, pv) in r.iter_mut().zip(&prow) {
                        *v -= f * pv;
                    }
                }
            }
            rank += 1;
        }
        let inconsistent = rows[rank..].iter().any(|r| r[ng].abs() > tol.max(EPS_LP));
        let (mut generators, center) = (self.generators, self.center);
        let (a, b) = if inconsistent {
            if ng == 0 {
                generators = DMatrix::zeros(center.len(), 1);
            }
            let cols = generators.ncols();
            let mut a = DMatrix::zeros(1, cols);
            a[(0, 0)] = 1.0;
            (a, DVector::from_element(1, 2.0))
        } else {
            let mut a = DMatrix::zeros(rank, ng);
            let mut b = DVector::zeros(rank);
            for (i, r) in rows.iter().take(rank).enumerate() {
                for j in 0..ng {
                    a[(i, j)] = r[j];
                }
                b[i] = r[ng];
            }
            (a, b)
        };
        Self {
            center,
            generators,
            constraint_a: a,
            constraint_b: b,
        }
    }

    /// Builds the LP over `u = ξ + 1 ∈ [0, 2]` with extra equality rows
    /// `extra_a · ξ = extra_b`.
    fn factor_lp(&self, extra_a: Option<(&DMatrix<f64>, &DVector<f64>)>, cost: &[f64]) -> StandardLp {
        let ng = self.num_generators();
        let mut a = Vec::new();
        let mut b = Vec::new();
        let mut push_rows = |m: &DMatrix<f64>, rhs: &DVector<f64>| {
            for i in 0..m.nrows() {
                let mut row = vec![0.0; 2 * ng];
                let mut shift = 0.0;
                for j in 0..ng {
                    row[j] = m[(i, j)];
                    shift += m[(i, j)];
                }
                a.push(row);
                b.push(rhs[i] + shift);
            }
        };
        push_rows(&self.constraint_a, &self.constraint_b);
        if let Some((m, rhs)) = extra_a {
            push_rows(m, rhs);
        }
        for j in 0..ng {
            let mut row = vec![0.0; 2 * ng];
            row[j] = 1.0;
            row[ng + j] = 1.0;
            a.push(row);
            b.push(2.0);
        }
        let mut c = vec![0.0; 2 * ng];
        c[..ng].copy_from_slice(cost);
        StandardLp { a, b, c }
    }

    /// True iff no factor vector in the unit box satisfies `Aξ = b`.
    pub fn is_empty(&self) -> Result<bool, GeomError> {
        if self.num_constraints() == 0 {
            return Ok(false);
        }
        let ng = self.num_generators();
        let status = lp::solve(&self.factor_lp(None, &vec![0.0; ng]), EPS_LP)?;
        Ok(!status.is_feasible())
    }

    pub fn contains_point(&self, p: &[f64]) -> Result<bool, GeomError> {
        if p.len() != self.dim() {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim(),
                got: p.len(),
            });
        }
        let ng = self.num_generators();
        let rhs = DVector::from_column_slice(p) - &self.center;
        if ng == 0 {
            return Ok(rhs.amax() <= EPS_LP && !self.is_empty()?);
        }
        let status = lp::solve(
            &self.factor_lp(Some((&self.generators, &rhs)), &vec![0.0; ng]),
            EPS_LP,
        )?;
        Ok(status.is_feasible())
    }

    /// Support value and a maximizing point in `direction`; `None` if empty.
    pub fn support(&self, direction: &[f64]) -> Result<Option<(f64, DVector<f64>)>, GeomError> {
        if direction.len() != self.dim() {
            return Err(GeomError::DimensionMismatch {
                expected: self.dim(),
                got: direction.len(),
            });
        }
        let d = DVector::from_column_slice(direction);
        let w = self.generators.transpose() * &d;
        let xi = if self.num_constraints() == 0 {
            w.map(|v| if v >= 0.0 { 1.0 } else { -1.0 })
        } else {
            let cost: Vec<f64> = w.iter().map(|v| -v).collect();
            match lp::solve(&self.factor_lp(None, &cost), EPS_LP)? {
                LpStatus::Optimal { x, .. } => {
                    DVector::from_iterator(w.len(), x.iter().take(w.len()).map(|u| u - 1.0))
                }
                LpStatus::Infeasible { .. } => return Ok(None),
                // bounded factors: cannot happen, treat as a solver fault
                LpStatus::Unbounded => {
                    return Err(GeomError::InvalidZonotope("unbounded support lp".into()))
                }
            }
        };
        let point = self.point_at(&xi);
        Ok(Some((d.dot(&point), point)))
    }

    /// Exact planar polygon of a 2D constrained zonotope.
    ///
    /// Support points from a fixed fan of directions seed a hull; each hull
    /// edge is then probed along its outward normal and split whenever the set
    /// reaches beyond it, until every edge is confirmed.
    pub fn to_polygon(&self) -> Result<ConvexPolygon, GeomError> {
        if self.dim() != 2 {
            return Err(GeomError::DimensionMismatch {
                expected: 2,
                got: self.dim(),
            });
        }
        let scale = 1.0
            + self.center.amax()
            + self.generators.column_iter().map(|g| g.amax()).sum::<f64>();
        let tol = 1e-9 * scale;
        let to_p = |v: &DVector<f64>| Point2::new(v[0], v[1]);

        let mut points: Vec<Point2> = Vec::new();
        for k in 0..8 {
            let ang = 0.1234 + k as f64 * std::f64::consts::TAU / 8.0;
            match self.support(&[ang.cos(), ang.sin()])? {
                Some((_, p)) => points.push(to_p(&p)),
                None => return Err(GeomError::EmptySet),
            }
        }
        let mut hull = convex_hull(&points);
        // A single support point for a positively spanning fan means the set
        // is that point. Two points may still bound a thin set: the probes
        // below look at both sides of the segment.
        if hull.len() < 2 {
            return Err(GeomError::DegenerateRegion { area: 0.0 });
        }
        for _ in 0..256 {
            let n = hull.len();
            let mut added = false;
            for i in 0..n {
                let a = hull[i];
                let b = hull[(i + 1) % n];
                let e = b - a;
                let len = e.norm();
                if len == 0.0 {
                    continue;
                }
                let normal = Point2::new(e.y, -e.x) / len;
                if let Some((val, p)) = self.support(&[normal.x, normal.y])? {
                    if val > normal.dot(&a) + tol {
                        points.push(to_p(&p));
                        added = true;
                    }
                }
            }
            if !added {
                break;
            }
            hull = convex_hull(&points);
        }
        let area = if hull.len() >= 3 {
            let n = hull.len();
            (0..n)
                .map(|i| super::cross(hull[i], hull[(i + 1) % n]))
                .sum::<f64>()
                * 0.5
        } else {
            0.0
        };
        if area < EPS_AREA {
            return Err(GeomError::DegenerateRegion { area });
        }
        ConvexPolygon::new(hull).map_err(|_| GeomError::DegenerateRegion { area })
    }
}
