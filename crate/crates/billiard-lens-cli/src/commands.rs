//! One runner per subcommand.

use std::f64::consts::PI;

use billiard_lens::billiards::{
    genus_of_polygon, irrationality_partition, robin_eigenfunction, robin_equation_residual, robin_frequencies,
    robin_frequency, BilliardKind, BilliardSpec, Boundary, Coefficient, CompiledField, EigenExpansion, ExpansionTerm,
    SideSquare,
};
use billiard_lens::field::TrigField;
use billiard_lens::grid::{FieldGrid, GridMeta, GridSpec};
use billiard_lens::kernel::{
    base_grid, derandomized_eigenfunction, empirical_covariance, kernel_vs_bessel, probe_pairs,
};
use billiard_lens::lattice::{
    angular_discrepancy, enumerate_shell, representation_count, shell_growth_ratio, QuadraticForm,
};
use billiard_lens::localize::{
    admissible_fraction, base_points, build_fixed_point, build_localized, build_on_lattice_polygon, error_sweep,
    field_distance, kernel_shell, point_parity_residual, CellDecomposition, ErrorSummary, GluedField, GluingMode,
    LocalizationJob, Window, WindowSamples,
};
use billiard_lens::nodal::{extract_nodal, find_critical_points, CriticalKind, RootedTree};
use billiard_lens::obstruction::{
    disk_constraint_residual, disk_ray, jet_at, ode_resultant, plane_wave_distance, planar_ray, radial_samples,
    rectangle_variety_residual, shifted_bessel_profile, BlockQuadratics, FitGrid, SampleBlock,
};
use billiard_lens::special::bessel_zero;
use billiard_lens::waves::{
    required_symmetry, symmetrize_row, BesselTranslateSum, ParityClass, PolygonKind, SymmetryRow, SymmetryTable,
    WaveSpec,
};
use num_rational::Ratio;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::*;
use crate::output::{Outcome, Table};
use crate::{invalid, Result};

const PRIME_SHELLS: [i64; 5] = [5, 65, 1105, 32045, 1185665];

pub fn dispatch(command: &Command, seed: u64) -> Result<Outcome> {
    match command {
        Command::Shell(a) => shell(a),
        Command::Kernel(a) => kernel(a),
        Command::Localize(a) => localize(a),
        Command::Fixed(a) => fixed(a),
        Command::LatticePolygon(a) => lattice_polygon(a),
        Command::ObstructRect(a) => obstruct_rect(a, seed),
        Command::ObstructDisk(a) => obstruct_disk(a, seed),
        Command::ObstructRobin(a) => obstruct_robin(a, seed),
        Command::RobinFreqs(a) => robin_freqs(a),
        Command::Nodal(a) => nodal(a),
        Command::Covariance(a) => covariance(a),
        Command::Genus(a) => genus(a),
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(invalid(format!("{name} must be positive, got {v}")))
    }
}

fn nonempty<T: Clone>(name: &str, v: &Option<Vec<T>>, default: &[T]) -> Result<Vec<T>> {
    let v = v.clone().unwrap_or_else(|| default.to_vec());
    if v.is_empty() {
        return Err(invalid(format!("{name} must not be empty")));
    }
    Ok(v)
}

fn boundary(name: &str) -> Result<Boundary> {
    match name {
        "dirichlet" => Ok(Boundary::Dirichlet),
        "neumann" => Ok(Boundary::Neumann),
        "periodic" => Ok(Boundary::Periodic),
        other => Err(invalid(format!("unknown boundary condition '{other}'"))),
    }
}

fn billiard_kind(name: &str) -> Result<BilliardKind> {
    match name {
        "square" => Ok(BilliardKind::Rectangle { sides: vec![SideSquare::rational(1, 1)] }),
        "iso" => Ok(BilliardKind::IsoTriangle),
        "equi" => Ok(BilliardKind::EquiTriangle),
        "hemi" => Ok(BilliardKind::HemiTriangle),
        other => Err(invalid(format!("unknown billiard '{other}'"))),
    }
}

fn billiard(name: &str, bc: Boundary) -> Result<BilliardSpec> {
    Ok(BilliardSpec::new(billiard_kind(name)?, bc)?)
}

fn parse_ratio(s: &str) -> Result<Ratio<i64>> {
    let bad = || invalid(format!("'{s}' is not a fraction"));
    let (n, d) = match s.trim().split_once('/') {
        Some((n, d)) => (n.trim().parse().map_err(|_| bad())?, d.trim().parse().map_err(|_| bad())?),
        None => (s.trim().parse().map_err(|_| bad())?, 1),
    };
    if d == 0 {
        return Err(bad());
    }
    Ok(Ratio::new(n, d))
}

fn load_target(path: &Option<std::path::PathBuf>) -> Result<Option<WaveSpec>> {
    let Some(p) = path else { return Ok(None) };
    let w: WaveSpec = crate::config::load(p)?;
    w.validate()?;
    Ok(Some(w))
}

fn radial_j0() -> WaveSpec {
    WaveSpec::translates(BesselTranslateSum::radial(2))
}

fn two_translates() -> WaveSpec {
    WaveSpec::translates(BesselTranslateSum::planar(&[([0.0, 0.0], 1.0), ([0.8, -0.5], 0.6)]))
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    billiard_lens::localize::nearest_rank(&s, 0.5)
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

#[derive(Serialize)]
struct ShellRow {
    mu: i64,
    count: usize,
    exhaustive_count: Option<u64>,
    angular_discrepancy: Option<f64>,
    growth_ratio: f64,
}

fn shell(a: &ShellArgs) -> Result<Outcome> {
    let coeffs = nonempty("form", &a.form, &[1, 1])?;
    let mus = nonempty("mus", &a.mus, &[65])?;
    let form = QuadraticForm::integer(&coeffs)?;
    let circle = coeffs == [1, 1];
    let mut points = Table::new("shell_points", &["mu", "point"]);
    let mut rows = Vec::new();
    let mut mismatches = Vec::new();
    for &mu in &mus {
        if mu < 0 {
            return Err(invalid("shell values must be nonnegative"));
        }
        let s = enumerate_shell(&form, mu)?;
        for p in &s.points {
            let coords: Vec<String> = p.iter().map(|x| x.to_string()).collect();
            points.push([mu.to_string(), coords.join(" ")]);
        }
        let exhaustive = circle.then(|| representation_count(mu as u64));
        if exhaustive.is_some_and(|c| c != s.len() as u64) {
            mismatches.push(mu);
        }
        let disc = if form.dim() == 2 && !s.is_empty() && mu > 0 { Some(angular_discrepancy(&s)?) } else { None };
        rows.push(ShellRow {
            mu,
            count: s.len(),
            exhaustive_count: exhaustive,
            angular_discrepancy: disc,
            growth_ratio: shell_growth_ratio(&s),
        });
    }
    let mut summary = Table::new("shell", &["mu", "count", "angular_discrepancy"]);
    for r in &rows {
        summary.push([r.mu.to_string(), r.count.to_string(), r.angular_discrepancy.map_or(String::new(), fmt)]);
    }
    #[derive(Serialize)]
    struct Body {
        form: Vec<i64>,
        shells: Vec<ShellRow>,
    }
    let mut out = Outcome::new(&Body { form: coeffs, shells: rows }).with_table(summary).with_table(points);
    for mu in mismatches {
        out.require(false, format!("shell count at mu = {mu} disagrees with exhaustive enumeration"));
    }
    Ok(out)
}

fn kernel(a: &KernelArgs) -> Result<Outcome> {
    let mus = nonempty("mus", &a.mus, &PRIME_SHELLS)?;
    let radius = positive("R", a.radius.unwrap_or(4.0))?;
    let half_nodes = a.half_nodes.unwrap_or(80);
    if half_nodes == 0 {
        return Err(invalid("half-nodes must be positive"));
    }
    let spec = billiard(a.billiard.as_deref().unwrap_or("square"), Boundary::Periodic)
        .or_else(|_| billiard(a.billiard.as_deref().unwrap_or("square"), Boundary::Dirichlet))?;
    let polygon = spec.polygon_kind().ok_or_else(|| invalid("kernel needs a polygon"))?;
    let form = spec.shell_form().ok_or_else(|| invalid("kernel needs a rational polygon"))?;
    #[derive(Serialize)]
    struct Row {
        mu: i64,
        shell_size: usize,
        sup_error: f64,
    }
    let mut rows = Vec::new();
    let mut table = Table::new("kernel", &["mu", "shell_size", "sup_error"]);
    for &mu in &mus {
        let s = enumerate_shell(&form, spec.shell_value(mu))?;
        if s.is_empty() {
            return Err(invalid(format!("shell at mu = {mu} is empty")));
        }
        let e = kernel_vs_bessel(&s, polygon, radius, half_nodes)?;
        table.push([mu.to_string(), s.len().to_string(), fmt(e)]);
        rows.push(Row { mu, shell_size: s.len(), sup_error: e });
    }
    let errs: Vec<f64> = rows.iter().map(|r| r.sup_error).collect();
    #[derive(Serialize)]
    struct Body {
        polygon: PolygonKind,
        radius: f64,
        half_nodes: usize,
        rows: Vec<Row>,
        strictly_decreasing: bool,
        final_over_first: f64,
    }
    let body = Body {
        polygon,
        radius,
        half_nodes,
        strictly_decreasing: strictly_decreasing(&errs),
        final_over_first: errs[errs.len() - 1] / errs[0],
        rows,
    };
    Ok(Outcome::new(&body).with_table(table))
}

#[derive(Serialize)]
struct LocalizeShell {
    mu: i64,
    shell_size: usize,
    base_points: usize,
    errors: ErrorSummary,
    admissible_fraction: f64,
}

fn localize(a: &LocalizeArgs) -> Result<Outcome> {
    let job: Option<LocalizationJob> = a.job.as_deref().map(crate::config::load).transpose()?;
    let mut spec = job.as_ref().map_or_else(|| BilliardSpec::unit_square(Boundary::Neumann), |j| j.spec.clone());
    if let Some(b) = &a.billiard {
        spec.kind = billiard_kind(b)?;
    }
    if let Some(bc) = &a.bc {
        spec.bc = boundary(bc)?;
    }
    spec.validate()?;
    let target = match load_target(&a.target)? {
        Some(t) => t,
        None => job.as_ref().map_or_else(radial_j0, |j| j.target.clone()),
    };
    let mus = nonempty("mus", &a.mus.clone().or(job.as_ref().map(|j| j.mus.clone())), &PRIME_SHELLS)?;
    let (nx, ny) = match (a.grid, &job) {
        (Some(n), _) => (n, n),
        (None, Some(j)) => (j.z0_grid.nx, j.z0_grid.ny),
        (None, None) => (40, 40),
    };
    let radius = positive("R", a.radius.or(job.as_ref().map(|j| j.window_r)).unwrap_or(4.0))?;
    let step = positive("step", a.step.or(job.as_ref().map(|j| j.step)).unwrap_or(0.05))?;
    let k = a.k.or(job.as_ref().map(|j| j.k)).unwrap_or(1);
    let epsilon = a.epsilon.or(job.as_ref().map(|j| j.epsilon)).map(|e| positive("epsilon", e)).transpose()?;
    if target.envelope() > radius {
        return Err(invalid("window radius is below the target envelope"));
    }
    let window = Window::new(radius, step)?;
    let mut sweeps = Vec::with_capacity(mus.len());
    let mut errors_table = Table::new("localize_errors", &["mu", "x0", "y0", "error"]);
    for &mu in &mus {
        let shell = kernel_shell(&spec, mu)?;
        let lambda = spec.lambda_of_mu(mu)?;
        let base = base_points(&spec, nx, ny, radius / lambda.sqrt())?;
        let errors = error_sweep(&spec, &target, mu, &base, &window, k)?;
        for (z, e) in base.iter().zip(&errors) {
            errors_table.push([mu.to_string(), fmt(z[0]), fmt(z[1]), fmt(*e)]);
        }
        sweeps.push((mu, shell.len(), base.len(), errors));
    }
    let epsilon_mu = a.epsilon_mu.unwrap_or(if mus.contains(&1105) { 1105 } else { mus[0] });
    let eps_index = mus.iter().position(|&m| m == epsilon_mu);
    let epsilon = match (epsilon, eps_index) {
        (Some(e), _) => e,
        (None, Some(i)) => ErrorSummary::from_errors(&sweeps[i].3)?.median,
        (None, None) => return Err(invalid(format!("epsilon-mu {epsilon_mu} is not among the shells"))),
    };
    let mut shells = Vec::with_capacity(sweeps.len());
    let mut table = Table::new(
        "localize",
        &["mu", "shell_size", "base_points", "min", "best_decile", "q1", "median", "q3", "max", "mean", "admissible_fraction"],
    );
    for (mu, shell_size, base_points, errors) in &sweeps {
        let s = ErrorSummary::from_errors(errors)?;
        let frac = admissible_fraction(errors, epsilon)?;
        table.push([
            mu.to_string(),
            shell_size.to_string(),
            base_points.to_string(),
            fmt(s.min),
            fmt(s.best_decile),
            fmt(s.q1),
            fmt(s.median),
            fmt(s.q3),
            fmt(s.max),
            fmt(s.mean),
            fmt(frac),
        ]);
        shells.push(LocalizeShell {
            mu: *mu,
            shell_size: *shell_size,
            base_points: *base_points,
            errors: s,
            admissible_fraction: frac,
        });
    }
    let deciles: Vec<f64> = shells.iter().map(|s| s.errors.best_decile).collect();
    let fraction_grows = eps_index
        .filter(|&i| i + 1 < shells.len())
        .map(|i| shells[i + 1].admissible_fraction > shells[i].admissible_fraction);
    #[derive(Serialize)]
    struct Body {
        billiard: BilliardSpec,
        target: WaveSpec,
        window_r: f64,
        step: f64,
        k: usize,
        epsilon: f64,
        epsilon_mu: Option<i64>,
        shells: Vec<LocalizeShell>,
        best_decile_strictly_decreasing: bool,
        admissible_fraction_grows_after_epsilon_shell: Option<bool>,
    }
    let body = Body {
        billiard: spec,
        target,
        window_r: radius,
        step,
        k,
        epsilon,
        epsilon_mu: a.epsilon.is_none().then_some(epsilon_mu),
        shells,
        best_decile_strictly_decreasing: strictly_decreasing(&deciles),
        admissible_fraction_grows_after_epsilon_shell: fraction_grows,
    };
    Ok(Outcome::new(&body).with_table(table).with_table(errors_table))
}

/// Max over the window of |v(F z) - s v(z)| for the coordinate flips of `axes`, relative to max|v|.
fn axis_parity_residual(field: &TrigField, window: &Window, odd: &[usize], even: &[usize]) -> f64 {
    let axis = window.axis();
    let mut worst: f64 = 0.0;
    let mut scale: f64 = f64::MIN_POSITIVE;
    for &y in &axis {
        for &x in &axis {
            let v = field.value_at(&[x, y]);
            scale = scale.max(v.abs());
            for (axes, sign) in [(odd, -1.0), (even, 1.0)] {
                for &j in axes {
                    let mut z = [x, y];
                    z[j] = -z[j];
                    worst = worst.max((field.value_at(&z) - sign * v).abs());
                }
            }
        }
    }
    worst / scale
}

fn fixed(a: &FixedArgs) -> Result<Outcome> {
    let bc = boundary(a.bc.as_deref().unwrap_or("dirichlet"))?;
    let sym = bc.symmetry_bc().ok_or_else(|| invalid("fixed-point localization needs dirichlet or neumann"))?;
    let spec = BilliardSpec::unit_square(bc);
    let row = SymmetryRow::new(SymmetryTable::FixedPoint, PolygonKind::Rectangle, sym);
    let target = match load_target(&a.target)? {
        Some(t) => t,
        None => symmetrize_row(&two_translates(), &row)?,
    };
    let z0_raw = nonempty("z0", &a.z0, &["1/2".to_string(), "1/2".to_string()])?;
    let z0: Vec<Ratio<i64>> = z0_raw.iter().map(|s| parse_ratio(s)).collect::<Result<_>>()?;
    let z0f: Vec<f64> = z0.iter().map(|q| *q.numer() as f64 / *q.denom() as f64).collect();
    if z0f.len() != 2 {
        return Err(invalid("z0 must have two coordinates"));
    }
    let mus = nonempty("mus", &a.mus, &[65, 1105, 32045])?;
    let window = Window::new(positive("R", a.radius.unwrap_or(4.0))?, positive("step", a.step.unwrap_or(0.05))?)?;
    let tol = positive("tolerance", a.tolerance.unwrap_or(1e-10))?;
    let samples = WindowSamples::new(&target, window);
    #[derive(Serialize)]
    struct Row {
        mu: i64,
        eigen_mu: Option<i64>,
        s: i64,
        terms: usize,
        parity_class: ParityClass,
        parity_residual: Option<f64>,
        error: f64,
    }
    let mut rows = Vec::new();
    let mut table = Table::new("fixed", &["mu", "eigen_mu", "s", "parity_residual", "error"]);
    for &mu in &mus {
        let fp = build_fixed_point(&spec, &target, mu, &z0)?;
        let r = fp.rescaled()?;
        let eigen_mu = fp.expansion.mu.unwrap_or(mu);
        let class = required_symmetry(true, bc == Boundary::Dirichlet, [z0f[0], z0f[1]], eigen_mu);
        let parity = match &class {
            ParityClass::PointEven => Some(point_parity_residual(&r, &window, true)),
            ParityClass::PointOdd => Some(point_parity_residual(&r, &window, false)),
            ParityClass::Axes { odd, even } => Some(axis_parity_residual(&r, &window, odd, even)),
            ParityClass::NotClassified => None,
        };
        let error = samples.error_trig(&r, 0)?;
        table.push([mu.to_string(), eigen_mu.to_string(), fp.s.to_string(), parity.map_or(String::new(), fmt), fmt(error)]);
        rows.push(Row {
            mu,
            eigen_mu: fp.expansion.mu,
            s: fp.s,
            terms: fp.expansion.terms.len(),
            parity_class: class,
            parity_residual: parity,
            error,
        });
    }
    let errs: Vec<f64> = rows.iter().map(|r| r.error).collect();
    #[derive(Serialize)]
    struct Body {
        bc: Boundary,
        z0: Vec<String>,
        target: WaveSpec,
        tolerance: f64,
        rows: Vec<Row>,
        parity_within_tolerance: bool,
        error_strictly_decreasing: bool,
    }
    let body = Body {
        bc,
        z0: z0.iter().map(|q| q.to_string()).collect(),
        target,
        tolerance: tol,
        parity_within_tolerance: rows.iter().all(|r| r.parity_residual.is_none_or(|p| p <= tol)),
        error_strictly_decreasing: strictly_decreasing(&errs),
        rows,
    };
    Ok(Outcome::new(&body).with_table(table))
}

/// Deterministic interior points of the base triangle (0,0), (1,0), (1/2, sqrt3/2).
fn triangle_points(count: usize) -> Vec<[f64; 2]> {
    let golden = 0.618_033_988_749_894_9;
    let (b, c) = ([1.0, 0.0], [0.5, 0.5 * 3f64.sqrt()]);
    let centroid = [0.5, 3f64.sqrt() / 6.0];
    (0..count)
        .map(|i| {
            let mut u = ((i as f64 + 0.5) * golden).fract();
            let mut v = ((i as f64 + 0.5) * golden * golden).fract();
            if u + v > 1.0 {
                (u, v) = (1.0 - u, 1.0 - v);
            }
            let p = [u * b[0] + v * c[0], u * b[1] + v * c[1]];
            [centroid[0] + 0.8 * (p[0] - centroid[0]), centroid[1] + 0.8 * (p[1] - centroid[1])]
        })
        .collect()
}

fn lattice_polygon(a: &LatticePolygonArgs) -> Result<Outcome> {
    let bc = boundary(a.bc.as_deref().unwrap_or("dirichlet"))?;
    let sym = bc.symmetry_bc().ok_or_else(|| invalid("gluing needs dirichlet or neumann"))?;
    let decomp = CellDecomposition::four_cell_equilateral(bc)?;
    let mode = match a.mode.as_deref().unwrap_or("roaming") {
        "roaming" => GluingMode::Roaming,
        "fixed" => GluingMode::Fixed,
        other => return Err(invalid(format!("unknown gluing mode '{other}'"))),
    };
    let target = match (load_target(&a.target)?, mode) {
        (Some(t), _) => t,
        (None, GluingMode::Roaming) => two_translates(),
        (None, GluingMode::Fixed) => {
            symmetrize_row(&two_translates(), &SymmetryRow::new(SymmetryTable::Lattice, PolygonKind::Equi, sym))?
        }
    };
    let mu = a.mu.unwrap_or(1729);
    let per_cell = a.per_cell.unwrap_or(5);
    if per_cell == 0 {
        return Err(invalid("per-cell must be positive"));
    }
    let window = Window::new(positive("R", a.radius.unwrap_or(4.0))?, positive("step", a.step.unwrap_or(0.05))?)?;
    let k = a.k.unwrap_or(0);
    let edge_samples = a.edge_samples.unwrap_or(100);
    let probe = build_localized(&decomp.base, &target, mu, &[0.4, 0.3])?;
    let (jump, normal_jump) = GluedField::new(decomp.clone(), &probe.expansion)?.gluing_residuals(edge_samples)?;
    #[derive(Serialize)]
    struct Row {
        cell: usize,
        z0: [f64; 2],
        min_error: f64,
        single_cell_error: f64,
    }
    let mut rows = Vec::new();
    let mut table = Table::new("lattice_polygon", &["cell", "x0", "y0", "min_error", "single_cell_error"]);
    for cell in 0..decomp.cells.len() {
        for local in triangle_points(per_cell) {
            let z0 = decomp.cell_point(cell, local);
            let glued = build_on_lattice_polygon(&decomp, &target, mu, z0, mode, &window, k)?;
            let home = decomp.unfold(z0)?;
            let single = build_localized(&decomp.base, &target, mu, &home.local)?;
            let single_error = field_distance(&single.rescaled()?, &target, &window, k)?;
            table.push([cell.to_string(), fmt(z0[0]), fmt(z0[1]), fmt(glued.best_error()), fmt(single_error)]);
            rows.push(Row { cell, z0, min_error: glued.best_error(), single_cell_error: single_error });
        }
    }
    let glued_median = median(&rows.iter().map(|r| r.min_error).collect::<Vec<_>>());
    let single_median = median(&rows.iter().map(|r| r.single_cell_error).collect::<Vec<_>>());
    #[derive(Serialize)]
    struct Body {
        bc: Boundary,
        mode: GluingMode,
        mu: i64,
        target: WaveSpec,
        continuity_jump: f64,
        normal_jump: f64,
        points: Vec<Row>,
        median_min_error: f64,
        median_single_cell_error: f64,
        ratio: f64,
    }
    let body = Body {
        bc,
        mode,
        mu,
        target,
        continuity_jump: jump,
        normal_jump,
        points: rows,
        median_min_error: glued_median,
        median_single_cell_error: single_median,
        ratio: glued_median / single_median,
    };
    Ok(Outcome::new(&body).with_table(table))
}

fn irrational_rectangle(bc: Boundary) -> Result<BilliardSpec> {
    Ok(BilliardSpec::new(BilliardKind::Rectangle { sides: vec![SideSquare::Root { radicand: 2, index: 2 }] }, bc)?)
}

fn random_two_translates(rng: &mut ChaCha8Rng) -> WaveSpec {
    let a = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
    WaveSpec::translates(BesselTranslateSum::planar(&[([0.0, 0.0], 1.0), (a, rng.random_range(0.3..1.0))]))
}

fn obstruct_rect(a: &ObstructRectArgs, seed: u64) -> Result<Outcome> {
    let count = a.count.unwrap_or(20);
    let max_index = a.max_index.unwrap_or(40);
    let ceiling = positive("ceiling", a.ceiling.unwrap_or(1e-10))?;
    if count == 0 || max_index < 2 {
        return Err(invalid("count must be positive and max-index at least 2"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let part = irrationality_partition(&irrational_rectangle(Boundary::Dirichlet)?);
    let first = part[0].clone();
    let mut table = Table::new("obstruct_rect", &["family", "index", "residual"]);
    let mut eigen = Vec::with_capacity(count);
    for i in 0..count {
        let bc = if rng.random_bool(0.5) { Boundary::Dirichlet } else { Boundary::Neumann };
        let spec = irrational_rectangle(bc)?;
        let n = vec![rng.random_range(1..max_index), rng.random_range(1..max_index)];
        let e = EigenExpansion::new(spec.clone(), vec![ExpansionTerm { index: n, coeff: Coefficient::Scalar(1.0) }])?;
        let l = spec.side_lengths();
        let z0 = [rng.random_range(0.0..l[0]), rng.random_range(0.0..l[1])];
        let compiled = e.compile()?;
        let f = compiled.trig().expect("rectangle fields are trigonometric").rescaled(&z0, e.lambda.sqrt());
        let r = rectangle_variety_residual(&jet_at(&f, [0.0, 0.0]), &first)?
            .ok_or_else(|| invalid("eigenfunction jet vanished"))?;
        table.push(["eigenfunction".to_string(), i.to_string(), fmt(r)]);
        eigen.push(r);
    }
    let mut waves = Vec::with_capacity(count);
    for i in 0..count {
        let w = random_two_translates(&mut rng);
        let r = rectangle_variety_residual(&jet_at(&w, [0.0, 0.0]), &first)?
            .ok_or_else(|| invalid("wave jet vanished"))?;
        table.push(["wave".to_string(), i.to_string(), fmt(r)]);
        waves.push(r);
    }
    #[derive(Serialize)]
    struct Body {
        sides: Vec<SideSquare>,
        ceiling: f64,
        eigen_max: f64,
        eigen_median: f64,
        wave_min: f64,
        wave_median: f64,
        eigen_within_ceiling: bool,
        waves_above_hundred_ceilings: bool,
        disjoint: bool,
    }
    let body = Body {
        sides: vec![SideSquare::Root { radicand: 2, index: 2 }],
        ceiling,
        eigen_max: max_of(&eigen),
        eigen_median: median(&eigen),
        wave_min: min_of(&waves),
        wave_median: median(&waves),
        eigen_within_ceiling: max_of(&eigen) <= ceiling,
        waves_above_hundred_ceilings: min_of(&waves) >= 1e2 * ceiling,
        disjoint: min_of(&waves) > max_of(&eigen),
    };
    Ok(Outcome::new(&body).with_table(table))
}

fn random_disk_ray_blocks(
    d: usize,
    rng: &mut ChaCha8Rng,
    radius: f64,
    blocks: usize,
) -> Result<Vec<SampleBlock>> {
    let bc = if rng.random_bool(0.5) { Boundary::Dirichlet } else { Boundary::Neumann };
    let spec = BilliardSpec::new(BilliardKind::Disk { d }, bc)?;
    let l = rng.random_range(0..6i64);
    let n = rng.random_range(3..8i64);
    let ms: Vec<i64> = if d == 2 { vec![l, -l] } else { (-l..=l).collect() };
    let terms = ms
        .iter()
        .filter(|&&m| !(d == 2 && l == 0 && m < 0))
        .map(|&m| ExpansionTerm { index: vec![l, n, m], coeff: Coefficient::Scalar(rng.random_range(-1.0..1.0)) })
        .collect();
    let e = EigenExpansion::new(spec, terms)?;
    let mut dir: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let nrm = dir.iter().map(|x| x * x).sum::<f64>().sqrt();
    dir.iter_mut().for_each(|x| *x /= nrm);
    let r0 = rng.random_range(0.1..0.5);
    let CompiledField::Disk(field) = e.compile()? else {
        return Err(invalid("disk expansion compiled to a non-disk field"));
    };
    let ray = disk_ray(&field, &dir, r0, e.lambda, radius)?;
    Ok(radial_samples(ray, radius, blocks)?)
}

fn obstruct_disk(a: &ObstructDiskArgs, seed: u64) -> Result<Outcome> {
    let count = a.count.unwrap_or(10);
    let blocks = a.blocks.unwrap_or(3);
    let radius = positive("radius", a.radius.unwrap_or(2.0))?;
    let resultant_blocks = a.resultant_blocks.unwrap_or(100);
    let ceiling = positive("ceiling", a.ceiling.unwrap_or(1e-6))?;
    let floor = positive("floor", a.floor.unwrap_or(1e-3))?;
    if count == 0 || blocks == 0 {
        return Err(invalid("count and blocks must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = Table::new("obstruct_disk", &["family", "index", "worst_block_residual"]);
    let worst = |v: Vec<f64>| v.into_iter().fold(0.0, f64::max);
    let mut eigen = Vec::new();
    for i in 0..count {
        let d = 2 + i % 2;
        let b = random_disk_ray_blocks(d, &mut rng, radius, blocks)?;
        let r = worst(disk_constraint_residual(&b, d)?);
        table.push(["eigenfunction".to_string(), i.to_string(), fmt(r)]);
        eigen.push(r);
    }
    let mut direct = Vec::new();
    for i in 0..count {
        let (t, l) = (rng.random_range(0.5..20.0), rng.random_range(0..6usize));
        let b = radial_samples(shifted_bessel_profile(2, t, l), radius, blocks)?;
        let r = worst(disk_constraint_residual(&b, 2)?);
        table.push(["shifted-bessel".to_string(), i.to_string(), fmt(r)]);
        direct.push(r);
    }
    let mut generic = Vec::new();
    for i in 0..count {
        let w = random_two_translates(&mut rng);
        let b = radial_samples(planar_ray(&w, [0.0, 0.0], [1.0, 0.0]), radius, blocks)?;
        let r = worst(disk_constraint_residual(&b, 2)?);
        table.push(["wave".to_string(), i.to_string(), fmt(r)]);
        generic.push(r);
    }
    let mut mismatch: f64 = 0.0;
    for _ in 0..resultant_blocks {
        let mut values = [0.0; 12];
        values.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
        let b = SampleBlock { values, alpha: rng.random_range(0.0..2.0), width: rng.random_range(0.2..1.0) };
        for d in [2usize, 3] {
            let q = BlockQuadratics::new(&b, d);
            let (x2, y2d) = q.eliminant_terms();
            let diff = (q.q_tilde() - 4.0 * q.a * q.a * ode_resultant(&b, d)).abs();
            mismatch = mismatch.max(diff / (x2 + y2d.abs()));
        }
    }
    #[derive(Serialize)]
    struct Body {
        ceiling: f64,
        floor: f64,
        eigen_max: f64,
        shifted_bessel_max: f64,
        wave_min: f64,
        resultant_mismatch: f64,
        eigen_within_ceiling: bool,
        shifted_bessel_within_ceiling: bool,
        waves_above_floor: bool,
    }
    let body = Body {
        ceiling,
        floor,
        eigen_max: max_of(&eigen),
        shifted_bessel_max: max_of(&direct),
        wave_min: min_of(&generic),
        resultant_mismatch: mismatch,
        eigen_within_ceiling: max_of(&eigen) <= ceiling,
        shifted_bessel_within_ceiling: max_of(&direct) <= ceiling,
        waves_above_floor: min_of(&generic) >= floor,
    };
    let mut out = Outcome::new(&body).with_table(table);
    out.require(mismatch <= 1e-9, format!("eliminant and resultant differ by {mismatch:e}"));
    Ok(out)
}

fn obstruct_robin(a: &ObstructRobinArgs, seed: u64) -> Result<Outcome> {
    let sigma = a.sigma.unwrap_or(0.3);
    if !(sigma >= 0.0) {
        return Err(invalid("sigma must be nonnegative"));
    }
    let modes = nonempty("modes", &a.modes, &[7, 4])?;
    let [m, n] = modes[..] else { return Err(invalid("modes takes two indices")) };
    let z0 = nonempty("z0", &a.z0, &[0.41, 0.33])?;
    if z0.len() != 2 {
        return Err(invalid("z0 must have two coordinates"));
    }
    let waves = a.waves.unwrap_or(8);
    let restarts = a.restarts.unwrap_or(50);
    let radius = positive("R", a.radius.unwrap_or(4.0))?;
    let step = positive("step", a.step.unwrap_or(0.2))?;
    if waves < 8 {
        return Err(invalid("the warm start needs at least 8 plane waves"));
    }
    let e = robin_eigenfunction(sigma, m, n, [0.8, -0.5])?;
    let compiled = e.compile()?;
    let f = compiled.trig().expect("Robin fields are trigonometric").rescaled(&z0, e.lambda.sqrt());
    let grid = FitGrid::sample(&f, radius, step)?;
    let (km, kn) = (robin_frequency(sigma, m)?, robin_frequency(sigma, n)?);
    let mut warm: Vec<f64> = [(km, kn), (km, -kn), (kn, km), (kn, -km), (-km, kn), (-km, -kn), (-kn, km), (-kn, -km)]
        .iter()
        .map(|(x, y)| y.atan2(*x))
        .collect();
    warm.extend((8..waves).map(|i| PI * i as f64 / waves as f64));
    let warm_fit = plane_wave_distance(&grid, waves, 0, seed, Some(&warm))?;
    let target = WaveSpec::translates(BesselTranslateSum::planar(&[([0.0, 0.0], 1.0), ([1.2, 0.4], 0.7)]));
    let target_grid = FitGrid::sample(&target, radius, step)?;
    let multi = plane_wave_distance(&target_grid, waves, restarts, seed, None)?;
    let mut table = Table::new("obstruct_robin", &["fit", "residual", "angles"]);
    for (name, fit) in [("robin-warm", &warm_fit), ("two-translate-multistart", &multi)] {
        let angles: Vec<String> = fit.angles.iter().map(|x| fmt(*x)).collect();
        table.push([name.to_string(), fmt(fit.residual), angles.join(" ")]);
    }
    #[derive(Serialize)]
    struct Body {
        sigma: f64,
        modes: [usize; 2],
        z0: Vec<f64>,
        waves: usize,
        restarts: usize,
        grid_points: usize,
        robin_warm_residual: f64,
        two_translate_floor: f64,
        two_translate_best_restart: usize,
    }
    let body = Body {
        sigma,
        modes: [m, n],
        z0,
        waves,
        restarts,
        grid_points: grid.points.len(),
        robin_warm_residual: warm_fit.residual,
        two_translate_floor: multi.residual,
        two_translate_best_restart: multi.restart,
    };
    Ok(Outcome::new(&body).with_table(table))
}

fn robin_freqs(a: &RobinFreqsArgs) -> Result<Outcome> {
    let sigmas = nonempty("sigmas", &a.sigmas, &[0.1, 0.5, 1.0])?;
    let n_max = a.n_max.unwrap_or(20);
    let tol = positive("tolerance", a.tolerance.unwrap_or(1e-12))?;
    if sigmas.iter().any(|s| !(*s >= 0.0)) {
        return Err(invalid("sigmas must be nonnegative"));
    }
    let mut table = Table::new("robin_freqs", &["sigma", "n", "k", "residual"]);
    let mut worst: f64 = 0.0;
    let mut outside = Vec::new();
    for &sigma in &sigmas {
        for (n, k) in robin_frequencies(sigma, n_max)?.into_iter().enumerate() {
            let r = robin_equation_residual(sigma, k);
            worst = worst.max(r);
            let (lo, hi) = (n as f64 * PI, (n + 1) as f64 * PI);
            let inside = if sigma == 0.0 { k == lo } else { k > lo && k < hi };
            if !inside {
                outside.push(format!("sigma = {sigma}, n = {n}: k = {k}"));
            }
            table.push([fmt(sigma), n.to_string(), fmt(k), fmt(r)]);
        }
    }
    #[derive(Serialize)]
    struct Body {
        sigmas: Vec<f64>,
        n_max: usize,
        tolerance: f64,
        max_residual: f64,
        all_bracketed: bool,
    }
    let mut out = Outcome::new(&Body { sigmas, n_max, tolerance: tol, max_residual: worst, all_bracketed: outside.is_empty() })
        .with_table(table);
    out.require(worst <= tol, format!("equation residual {worst:e} exceeds {tol:e}"));
    for o in outside {
        out.require(false, format!("root outside its bracket: {o}"));
    }
    Ok(out)
}

fn nodal(a: &NodalArgs) -> Result<Outcome> {
    let bc = boundary(a.bc.as_deref().unwrap_or("neumann"))?;
    let spec = billiard(a.billiard.as_deref().unwrap_or("square"), bc)?;
    let target = load_target(&a.target)?.unwrap_or_else(radial_j0);
    let mu = a.mu.unwrap_or(48612265);
    let z0 = nonempty("z0", &a.z0, &[0.41, 0.13])?;
    let radius = positive("R", a.radius.unwrap_or(6.5))?;
    let step = positive("step", a.step.unwrap_or(0.05))?;
    let loc = build_localized(&spec, &target, mu, &z0)?;
    let f = loc.rescaled()?;
    let grid = FieldGrid::from_fn(GridSpec::centered_square(radius, step)?, GridMeta::default(), |z| f.value_at(z));
    let mut analysis = extract_nodal(&grid)?;
    let polish_shift = match a.polish.unwrap_or(0) {
        0 => None,
        steps => Some(analysis.polish(&f, steps)),
    };
    let first_zero = bessel_zero(0.0, 1)?;
    let reference_area = PI * first_zero * first_zero;
    #[derive(Serialize)]
    struct Component {
        contour: usize,
        area: Option<f64>,
        tree: RootedTree,
        tree_code: String,
    }
    let component = |i: Option<usize>| -> Result<Option<Component>> {
        let Some(i) = i else { return Ok(None) };
        let tree = analysis.nesting_tree(i)?.root.canonical();
        Ok(Some(Component { contour: i, area: analysis.contours[i].enclosed_area(), tree_code: tree.code(), tree }))
    };
    let inner = component(analysis.innermost_around([0.0, 0.0]))?;
    let outer = component(analysis.outermost_around([0.0, 0.0]))?;
    let scan = find_critical_points(&f, &GridSpec::box2([-1.0, -1.0], [1.0, 1.0], [21, 21])?)?;
    let mut contours = Table::new("nodal_contours", &["contour", "closed", "x", "y"]);
    for (i, c) in analysis.contours.iter().enumerate() {
        for p in &c.points {
            contours.push([i.to_string(), c.closed.to_string(), fmt(p[0]), fmt(p[1])]);
        }
    }
    let mut critical = Table::new("nodal_critical", &["x", "y", "value", "hessian_det", "kind"]);
    for c in &scan.points {
        let kind = serde_json::to_value(c.kind).expect("kinds serialize");
        critical.push([fmt(c.point[0]), fmt(c.point[1]), fmt(c.value), fmt(c.hessian_det), kind.as_str().unwrap_or("").to_string()]);
    }
    let central_max = scan
        .points
        .iter()
        .filter(|c| c.kind == CriticalKind::Maximum)
        .map(|c| c.point)
        .min_by(|p, q| p[0].hypot(p[1]).total_cmp(&q[0].hypot(q[1])));
    #[derive(Serialize)]
    struct Body {
        billiard: BilliardSpec,
        mu: i64,
        z0: Vec<f64>,
        half_width: f64,
        step: f64,
        domain_count: usize,
        contour_count: usize,
        closed_contours: usize,
        contour_residual: f64,
        polish_shift: Option<f64>,
        reference_area: f64,
        inner: Option<Component>,
        inner_area_ratio: Option<f64>,
        outer: Option<Component>,
        critical_points: usize,
        central_maximum: Option<[f64; 2]>,
    }
    let inner_area_ratio = inner.as_ref().and_then(|c| c.area).map(|a| a / reference_area);
    let body = Body {
        billiard: spec,
        mu,
        z0,
        half_width: radius,
        step,
        domain_count: analysis.domain_count,
        contour_count: analysis.contours.len(),
        closed_contours: analysis.closed_contours().len(),
        contour_residual: analysis.contour_residual(),
        polish_shift,
        reference_area,
        inner,
        inner_area_ratio,
        outer,
        critical_points: scan.points.len(),
        central_maximum: central_max,
    };
    Ok(Outcome::new(&body).with_table(contours).with_table(critical))
}

fn covariance(a: &CovarianceArgs) -> Result<Outcome> {
    let bc = boundary(a.bc.as_deref().unwrap_or("dirichlet"))?;
    let mus = nonempty("mus", &a.mus, &[1105, 32045])?;
    let n = a.grid.unwrap_or(50);
    let count = a.pairs.unwrap_or(20);
    let radius = positive("R", a.radius.unwrap_or(4.0))?;
    if n == 0 || count == 0 {
        return Err(invalid("grid and pairs must be positive"));
    }
    let spec = BilliardSpec::unit_square(bc);
    let base = base_grid(&spec, n, n)?;
    let pairs = probe_pairs(count, radius);
    let mut table = Table::new("covariance", &["mu", "pair", "x1", "x2", "y1", "y2", "distance", "empirical", "bessel"]);
    #[derive(Serialize)]
    struct Row {
        mu: i64,
        terms: usize,
        deviation: f64,
    }
    let mut rows = Vec::new();
    for &mu in &mus {
        let e = derandomized_eigenfunction(mu, bc)?;
        let mut worst: f64 = 0.0;
        for (i, (x, y)) in pairs.iter().enumerate() {
            let c = empirical_covariance(&e, &base, *x, *y)?;
            let r = (x[0] - y[0]).hypot(x[1] - y[1]);
            let j = billiard_lens::kernel::bessel_limit(2, r);
            worst = worst.max((c - j).abs());
            table.push([mu.to_string(), i.to_string(), fmt(x[0]), fmt(x[1]), fmt(y[0]), fmt(y[1]), fmt(r), fmt(c), fmt(j)]);
        }
        rows.push(Row { mu, terms: e.terms.len(), deviation: worst });
    }
    let devs: Vec<f64> = rows.iter().map(|r| r.deviation).collect();
    #[derive(Serialize)]
    struct Body {
        bc: Boundary,
        base_grid: usize,
        pairs: usize,
        radius: f64,
        rows: Vec<Row>,
        deviation_shrinks: bool,
    }
    let body = Body { bc, base_grid: n, pairs: count, radius, deviation_shrinks: strictly_decreasing(&devs), rows };
    Ok(Outcome::new(&body).with_table(table))
}

fn genus(a: &GenusArgs) -> Result<Outcome> {
    let raw = a.angles.clone().unwrap_or_default();
    if raw.is_empty() {
        return Err(invalid("angles are required"));
    }
    let angles: Vec<Ratio<i64>> = raw.iter().map(|s| parse_ratio(s)).collect::<Result<_>>()?;
    let g = genus_of_polygon(&angles)?;
    #[derive(Serialize)]
    struct Body {
        angles: Vec<String>,
        genus: i64,
    }
    Ok(Outcome::new(&Body { angles: angles.iter().map(|q| q.to_string()).collect(), genus: g }))
}
