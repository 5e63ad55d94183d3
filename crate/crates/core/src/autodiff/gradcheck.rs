use super::{AutodiffError, Tape, Tensor, Var};

/// Denominator floor for the relative error, so that coordinates whose true
/// gradient is zero are judged by absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub passed: bool,
    /// Set when the function produced a non-finite value at some probe.
    pub non_finite: bool,
    /// `(input, coordinate)` of the worst disagreement.
    pub worst: Option<(usize, usize)>,
    pub analytic: Vec<Vec<f64>>,
    pub numeric: Vec<Vec<f64>>,
}

fn eval<F>(f: &F, points: &[Tensor]) -> Result<(f64, Option<Vec<Vec<f64>>>), AutodiffError>
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = points.iter().map(|p| tape.leaf(p.clone(), true)).collect();
    let root = f(&mut tape, &vars)?;
    let value = tape.value(root)[0];
    let grads = tape.backward(root)?;
    let per_input = vars
        .iter()
        .zip(points)
        .map(|(&v, p)| grads.get(v).map_or_else(|| vec![0.0; p.numel()], <[f64]>::to_vec))
        .collect();
    Ok((value, Some(per_input)))
}

fn value_at<F>(f: &F, points: &[Tensor]) -> Result<f64, AutodiffError>
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var, AutodiffError>,
{
    let mut tape = Tape::new();
    let vars: Vec<Var> = points.iter().map(|p| tape.leaf(p.clone(), false)).collect();
    let root = f(&mut tape, &vars)?;
    Ok(tape.value(root)[0])
}

/// Compares reverse-mode gradients of a scalar function against central
/// differences with step `eps` at every coordinate of every input.
pub fn grad_check<F>(f: F, points: &[Tensor], eps: f64, tol: f64) -> Result<GradCheckReport, AutodiffError>
where
    F: for<'t> Fn(&mut Tape<'t>, &[Var]) -> Result<Var, AutodiffError>,
{
    let (base, analytic) = eval(&f, points)?;
    let analytic = analytic.unwrap_or_default();
    let mut non_finite = !base.is_finite() || analytic.iter().flatten().any(|g| !g.is_finite());

    let mut probe = points.to_vec();
    let mut numeric = Vec::with_capacity(points.len());
    let mut max_rel_error: f64 = 0.0;
    let mut worst = None;
    for i in 0..points.len() {
        let mut row = Vec::with_capacity(points[i].numel());
        for j in 0..points[i].numel() {
            let orig = points[i].data()[j];
            probe[i].data_mut()[j] = orig + eps;
            let plus = value_at(&f, &probe)?;
            probe[i].data_mut()[j] = orig - eps;
            let minus = value_at(&f, &probe)?;
            probe[i].data_mut()[j] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                non_finite = true;
            }
            let fd = (plus - minus) / (2.0 * eps);
            let a = analytic[i][j];
            let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(REL_ERROR_FLOOR);
            if rel > max_rel_error || rel.is_nan() {
                max_rel_error = if rel.is_nan() { f64::INFINITY } else { rel };
                worst = Some((i, j));
            }
            row.push(fd);
        }
        numeric.push(row);
    }
    Ok(GradCheckReport {
        max_rel_error,
        passed: !non_finite && max_rel_error <= tol,
        non_finite,
        worst,
        analytic,
        numeric,
    })
}
