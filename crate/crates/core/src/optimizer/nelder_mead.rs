//! Derivative-free Nelder-Mead simplex minimizer.

#[derive(Debug, Clone, Copy)]
pub struct NelderMeadOptions {
    pub max_iters: usize,
    /// Stop when the spread of simplex values and the simplex diameter both
    /// drop below this.
    pub tolerance: f64,
}

#[derive(Debug, Clone)]
pub struct NelderMeadResult<const N: usize> {
    pub point: [f64; N],
    pub value: f64,
    pub iterations: usize,
    pub evaluations: usize,
}

const REFLECT: f64 = 1.0;
const EXPAND: f64 = 2.0;
const CONTRACT: f64 = 0.5;
const SHRINK: f64 = 0.5;

/// Minimize `f` from `start` with an axis-aligned initial simplex of edge
/// lengths `steps`.
pub fn minimize<const N: usize, F>(f: F, start: [f64; N], steps: [f64; N], opts: NelderMeadOptions) -> NelderMeadResult<N>
where
    F: Fn(&[f64; N]) -> f64,
{
    let mut evaluations = 0usize;
    let mut eval = |x: &[f64; N]| {
        evaluations += 1;
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };

    let mut simplex: Vec<([f64; N], f64)> = Vec::with_capacity(N + 1);
    simplex.push((start, eval(&start)));
    for i in 0..N {
        let mut p = start;
        p[i] += steps[i];
        let v = eval(&p);
        simplex.push((p, v));
    }

    let mut iterations = 0;
    while iterations < opts.max_iters {
        // Stable sort keeps earlier vertices first among ties.
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[N].1;
        let spread = (worst - best).abs();
        let diameter = simplex[1..]
            .iter()
            .map(|(p, _)| p.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread <= opts.tolerance && diameter <= opts.tolerance {
            break;
        }
        iterations += 1;

        let mut centroid = [0.0; N];
        for (p, _) in &simplex[..N] {
            for i in 0..N {
                centroid[i] += p[i] / N as f64;
            }
        }
        let along = |t: f64| {
            let mut out = [0.0; N];
            for i in 0..N {
                out[i] = centroid[i] + t * (simplex[N].0[i] - centroid[i]);
            }
            out
        };

        let xr = along(-REFLECT);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-EXPAND);
            let fe = eval(&xe);
            simplex[N] = if fe < fr { (xe, fe) } else { (xr, fr) };
            continue;
        }
        if fr < simplex[N - 1].1 {
            simplex[N] = (xr, fr);
            continue;
        }
        let (xc, fc) = if fr < worst {
            let xc = along(-CONTRACT);
            (xc, eval(&xc))
        } else {
            let xc = along(CONTRACT);
            (xc, eval(&xc))
        };
        if fc < fr.min(worst) {
            simplex[N] = (xc, fc);
            continue;
        }
        let anchor = simplex[0].0;
        for vertex in simplex.iter_mut().skip(1) {
            let mut p = vertex.0;
            for i in 0..N {
                p[i] = anchor[i] + SHRINK * (p[i] - anchor[i]);
            }
            *vertex = (p, eval(&p));
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    NelderMeadResult {
        point: simplex[0].0,
        value: simplex[0].1,
        iterations,
        evaluations,
    }
}
