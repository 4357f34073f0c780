//! Derivative-free optimizers: a box-bounded Nelder–Mead simplex and a
//! golden-section line search.

#[derive(Debug, Clone)]
pub struct NelderMead {
    /// Per-coordinate `(lower, upper)`; trial points are projected onto the box.
    pub bounds: Vec<(f64, f64)>,
    /// Edge lengths of the initial simplex.
    pub step: Vec<f64>,
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub ftol: f64,
    /// ... and every vertex is within this distance of the best one.
    pub xtol: f64,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evals: usize,
    pub converged: bool,
}

impl NelderMead {
    pub fn new(bounds: Vec<(f64, f64)>, step: Vec<f64>) -> Self {
        NelderMead {
            bounds,
            step,
            max_evals: 2000,
            ftol: 1e-9,
            xtol: 1e-7,
        }
    }

    fn project(&self, x: &mut [f64]) {
        for (xi, (lo, hi)) in x.iter_mut().zip(&self.bounds) {
            *xi = xi.clamp(*lo, *hi);
        }
    }

    /// Minimizes `f` from `x0`. Non-finite values are treated as `+∞`.
    pub fn minimize(&self, mut f: impl FnMut(&[f64]) -> f64, x0: &[f64]) -> Minimum {
        let n = x0.len();
        let mut evals = 0usize;
        let mut eval = |x: &[f64], evals: &mut usize| {
            *evals += 1;
            let v = f(x);
            if v.is_nan() {
                f64::INFINITY
            } else {
                v
            }
        };

        let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
        let mut start = x0.to_vec();
        self.project(&mut start);
        simplex.push(start.clone());
        for i in 0..n {
            let mut v = start.clone();
            v[i] += self.step[i];
            self.project(&mut v);
            if v[i] == start[i] {
                v[i] -= self.step[i];
                self.project(&mut v);
            }
            simplex.push(v);
        }
        let mut values: Vec<f64> = simplex.iter().map(|v| eval(v, &mut evals)).collect();

        let mut converged = false;
        while evals < self.max_evals {
            let mut order: Vec<usize> = (0..=n).collect();
            order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
            simplex = order.iter().map(|&i| simplex[i].clone()).collect();
            values = order.iter().map(|&i| values[i]).collect();

            let spread = values[n] - values[0];
            let size = simplex[1..]
                .iter()
                .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
                .fold(0.0f64, f64::max);
            if values[0].is_finite() && spread.abs() <= self.ftol && size <= self.xtol {
                converged = true;
                break;
            }
            if values[0].is_finite() && spread.abs() <= self.ftol * 1e-3 && size <= self.xtol * 1e3 {
                converged = true;
                break;
            }

            let centroid: Vec<f64> = (0..n)
                .map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64)
                .collect();
            let along = |t: f64| -> Vec<f64> {
                let mut p: Vec<f64> = centroid
                    .iter()
                    .zip(&simplex[n])
                    .map(|(c, w)| c + t * (c - w))
                    .collect();
                self.project(&mut p);
                p
            };

            let reflected = along(1.0);
            let fr = eval(&reflected, &mut evals);
            if fr < values[0] {
                let expanded = along(2.0);
                let fe = eval(&expanded, &mut evals);
                if fe < fr {
                    simplex[n] = expanded;
                    values[n] = fe;
                } else {
                    simplex[n] = reflected;
                    values[n] = fr;
                }
                continue;
            }
            if fr < values[n - 1] {
                simplex[n] = reflected;
                values[n] = fr;
                continue;
            }
            let (contracted, fc) = if fr < values[n] {
                let c = along(0.5);
                let fc = eval(&c, &mut evals);
                (c, fc)
            } else {
                let c = along(-0.5);
                let fc = eval(&c, &mut evals);
                (c, fc)
            };
            if fc < values[n].min(fr) {
                simplex[n] = contracted;
                values[n] = fc;
                continue;
            }
            // shrink toward the best vertex
            for i in 1..=n {
                let mut p: Vec<f64> = simplex[i]
                    .iter()
                    .zip(&simplex[0])
                    .map(|(v, b)| b + 0.5 * (v - b))
                    .collect();
                self.project(&mut p);
                values[i] = eval(&p, &mut evals);
                simplex[i] = p;
            }
        }

        let best = (0..=n)
            .min_by(|&a, &b| values[a].total_cmp(&values[b]))
            .expect("non-empty simplex");
        Minimum {
            x: simplex[best].clone(),
            value: values[best],
            evals,
            converged,
        }
    }
}

/// Maximizes a unimodal `f` on `[lo, hi]` to bracket width `tol`.
pub fn golden_section_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    if fc >= fd {
        (c, fc)
    } else {
        (d, fd)
    }
}
