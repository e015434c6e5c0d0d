//! Independent low-order reference solvers: explicit upwind finite differences
//! for the kinetic equation and central differences for its diffusion limit,
//! plus an on-disk cache of their profiles.
//!
//! Kinetic model: `ε∂_t f + v∂_x f = (σ_s/ε)(⟨f⟩ − f) − εσ_a f + εG`.
//! Diffusion limit: `∂_t ρ = ⟨v²⟩∂_x(∂_x ρ/σ_s) − σ_a ρ + G`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::boundary::InflowData;
use crate::error::{Error, Result};
use crate::material::MaterialCoefficients;
use crate::quadrature::VelocityQuadrature;

/// Uniform grid of `cells` intervals on `[a, b]`, time step and final time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FdGrid {
    pub a: f64,
    pub b: f64,
    pub cells: usize,
    pub dt: f64,
    pub t_end: f64,
}

impl FdGrid {
    pub fn new(a: f64, b: f64, cells: usize, dt: f64, t_end: f64) -> Result<Self> {
        if !(b > a) || cells < 2 {
            return Err(Error::InvalidMesh(format!("need a < b and at least 2 cells, got [{a}, {b}], {cells}")));
        }
        if !(dt > 0.0) || !dt.is_finite() || !(t_end >= 0.0) {
            return Err(Error::InvalidParameter(format!("need dt > 0 and t_end ≥ 0, got {dt}, {t_end}")));
        }
        Ok(FdGrid { a, b, cells, dt, t_end })
    }

    /// Grid with spacing as close as possible to `dx`.
    pub fn with_spacing(a: f64, b: f64, dx: f64, dt: f64, t_end: f64) -> Result<Self> {
        Self::new(a, b, ((b - a) / dx).round() as usize, dt, t_end)
    }

    pub fn dx(&self) -> f64 {
        (self.b - self.a) / self.cells as f64
    }

    /// Step sizes reaching `t_end` exactly; the last one may be shorter.
    fn steps(&self) -> Vec<f64> {
        if self.t_end == 0.0 {
            return Vec::new();
        }
        let n = (self.t_end / self.dt - 1e-9).ceil().max(1.0) as usize;
        let last = self.t_end - (n - 1) as f64 * self.dt;
        let mut v = vec![self.dt; n - 1];
        v.push(last);
        v
    }
}

/// Sampled solution: nodes, density and (optionally) current `j = ⟨vg⟩`.
#[derive(Debug, Clone, PartialEq)]
pub struct Profile {
    pub x: Vec<f64>,
    pub rho: Vec<f64>,
    pub j: Option<Vec<f64>>,
}

impl Profile {
    /// Piecewise-linear interpolation of `values` at `x`, clamped at the ends.
    pub fn interpolate(&self, values: &[f64], x: f64) -> f64 {
        let n = self.x.len();
        if x <= self.x[0] {
            return values[0];
        }
        if x >= self.x[n - 1] {
            return values[n - 1];
        }
        let i = self.x.partition_point(|&p| p <= x) - 1;
        let t = (x - self.x[i]) / (self.x[i + 1] - self.x[i]);
        values[i] * (1.0 - t) + values[i + 1] * t
    }

    /// CSV with header `x,rho` or `x,rho,j`; 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut s = String::from(if self.j.is_some() { "x,rho,j\n" } else { "x,rho\n" });
        for i in 0..self.x.len() {
            let _ = write!(s, "{:.16e},{:.16e}", self.x[i], self.rho[i]);
            if let Some(j) = &self.j {
                let _ = write!(s, ",{:.16e}", j[i]);
            }
            s.push('\n');
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::Io(format!("malformed profile CSV: {m}"));
        let mut lines = text.lines();
        let header = lines.next().ok_or_else(|| bad("empty"))?;
        let with_j = match header {
            "x,rho" => false,
            "x,rho,j" => true,
            _ => return Err(bad("header")),
        };
        let (mut x, mut rho, mut j) = (Vec::new(), Vec::new(), Vec::new());
        for line in lines {
            let vals: Vec<f64> = line
                .split(',')
                .map(|t| t.parse::<f64>().map_err(|_| bad(line)))
                .collect::<Result<_>>()?;
            if vals.len() != 2 + with_j as usize {
                return Err(bad(line));
            }
            x.push(vals[0]);
            rho.push(vals[1]);
            if with_j {
                j.push(vals[2]);
            }
        }
        Ok(Profile {
            x,
            rho,
            j: with_j.then_some(j),
        })
    }
}

/// Boundary treatment of the kinetic reference.
#[derive(Debug, Clone)]
pub enum FdBoundary {
    Periodic,
    /// Incoming values imposed at ghost nodes.
    Inflow(InflowData),
}

/// Distribution at every node and ordinate after the run.
#[derive(Debug, Clone, PartialEq)]
pub struct KineticFdSolution {
    /// Cell centres `a + (i + ½)Δx`.
    pub x: Vec<f64>,
    /// `f[l][i]` at ordinate `l`.
    pub f: Vec<Vec<f64>>,
    pub time: f64,
    pub epsilon: f64,
}

impl KineticFdSolution {
    pub fn rho(&self, quad: &VelocityQuadrature) -> Vec<f64> {
        let mut rho = vec![0.0; self.x.len()];
        for (fl, w) in self.f.iter().zip(quad.weights()) {
            rho.iter_mut().zip(fl).for_each(|(r, f)| *r += w * f);
        }
        rho
    }

    /// `j = ⟨vf⟩/ε`, which equals `⟨vg⟩` for `f = ρ + εg`.
    pub fn current(&self, quad: &VelocityQuadrature) -> Vec<f64> {
        let mut j = vec![0.0; self.x.len()];
        for (l, fl) in self.f.iter().enumerate() {
            let c = quad.weight(l) * quad.node(l) / self.epsilon;
            j.iter_mut().zip(fl).for_each(|(r, f)| *r += c * f);
        }
        j
    }

    pub fn profile(&self, quad: &VelocityQuadrature) -> Profile {
        Profile {
            x: self.x.clone(),
            rho: self.rho(quad),
            j: Some(self.current(quad)),
        }
    }
}

/// Forward-Euler upwind finite differences for the kinetic equation.
///
/// The step must keep the update monotone:
/// `Δt (v_∞/(εΔx) + max σ_s/ε² + max σ_a) ≤ 1`.
pub fn kinetic_fd(
    coefficients: &MaterialCoefficients,
    quad: &VelocityQuadrature,
    f0: impl Fn(f64, f64) -> f64,
    boundary: &FdBoundary,
    grid: &FdGrid,
) -> Result<KineticFdSolution> {
    let n = grid.cells;
    let dx = grid.dx();
    let eps = coefficients.epsilon();
    let x: Vec<f64> = (0..n).map(|i| grid.a + (i as f64 + 0.5) * dx).collect();
    let sigma_s: Vec<f64> = x.iter().map(|&p| coefficients.sigma_s(p)).collect();
    let sigma_a: Vec<f64> = x.iter().map(|&p| coefficients.sigma_a(p)).collect();
    let source: Vec<f64> = x.iter().map(|&p| coefficients.source(p)).collect();

    let s_max = sigma_s.iter().cloned().fold(0.0, f64::max);
    let a_max = sigma_a.iter().cloned().fold(0.0, f64::max);
    let rate = quad.v_inf() / (eps * dx) + s_max / (eps * eps) + a_max;
    if grid.dt * rate > 1.0 + 1e-12 {
        return Err(Error::Cfl(format!(
            "kinetic reference needs dt ≤ {:.6e}, got {:.6e}",
            1.0 / rate,
            grid.dt
        )));
    }

    let nv = quad.len();
    let mut f: Vec<Vec<f64>> = quad.nodes().iter().map(|&v| x.iter().map(|&p| f0(p, v)).collect()).collect();
    let mut next = vec![0.0; n];
    let mut rho = vec![0.0; n];
    // f_i ← (keep_i − c) f_i + c f_upwind + scatter_i ρ_i + load_i
    let mut keep = vec![0.0; n];
    let mut scatter = vec![0.0; n];
    let mut load = vec![0.0; n];
    let mut base = vec![0.0; n];
    let mut t = 0.0;
    let mut current_dt = f64::NAN;
    for (step, dt) in grid.steps().into_iter().enumerate() {
        if dt != current_dt {
            for i in 0..n {
                scatter[i] = dt * sigma_s[i] / (eps * eps);
                keep[i] = 1.0 - scatter[i] - dt * sigma_a[i];
                load[i] = dt * source[i];
            }
            current_dt = dt;
        }
        rho.iter_mut().for_each(|r| *r = 0.0);
        for (fl, w) in f.iter().zip(quad.weights()) {
            rho.iter_mut().zip(fl).for_each(|(r, v)| *r += w * v);
        }
        if !rho.iter().sum::<f64>().is_finite() {
            return Err(Error::NonFinite { step });
        }
        // ordinate-independent part of the update
        for i in 0..n {
            base[i] = scatter[i] * rho[i] + load[i];
        }
        for l in 0..nv {
            let v = quad.node(l);
            let c = dt * v.abs() / (eps * dx);
            let fl = &f[l];
            let ghost = match boundary {
                FdBoundary::Periodic => {
                    if v >= 0.0 {
                        fl[n - 1]
                    } else {
                        fl[0]
                    }
                }
                FdBoundary::Inflow(data) => {
                    if v >= 0.0 {
                        (data.f_left)(v, t)
                    } else {
                        (data.f_right)(v, t)
                    }
                }
            };
            let (own, up, out, k, b) = if v >= 0.0 {
                next[0] = (keep[0] - c) * fl[0] + c * ghost + base[0];
                (&fl[1..], &fl[..n - 1], &mut next[1..], &keep[1..], &base[1..])
            } else {
                next[n - 1] = (keep[n - 1] - c) * fl[n - 1] + c * ghost + base[n - 1];
                (&fl[..n - 1], &fl[1..], &mut next[..n - 1], &keep[..n - 1], &base[..n - 1])
            };
            for ((((o, &fo), &fu), &kk), &bb) in out.iter_mut().zip(own).zip(up).zip(k).zip(b) {
                *o = (kk - c) * fo + c * fu + bb;
            }
            std::mem::swap(&mut f[l], &mut next);
        }
        t += dt;
    }
    if f.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite { step: grid.steps().len() });
    }
    Ok(KineticFdSolution {
        x,
        f,
        time: t,
        epsilon: eps,
    })
}

/// Boundary treatment of the diffusion reference.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DiffusionBoundary {
    Periodic,
    Dirichlet { left: f64, right: f64 },
}

/// Forward-Euler central differences for the diffusion limit with
/// `D = ⟨v²⟩/σ_s` evaluated at half nodes.
///
/// Periodic grids use the `cells` nodes `a + iΔx`; Dirichlet grids add the node
/// at `b` and hold both end values fixed. The step must keep the update
/// monotone: `Δt (2 max D/Δx² + max σ_a) ≤ 1`. The returned current is
/// `j = −D ∂_x ρ` by central differences (one-sided at the ends).
pub fn diffusion_fd(
    coefficients: &MaterialCoefficients,
    v_sq: f64,
    rho0: impl Fn(f64) -> f64,
    boundary: DiffusionBoundary,
    grid: &FdGrid,
) -> Result<Profile> {
    let dx = grid.dx();
    let periodic = boundary == DiffusionBoundary::Periodic;
    let n = if periodic { grid.cells } else { grid.cells + 1 };
    let x: Vec<f64> = (0..n).map(|i| grid.a + i as f64 * dx).collect();
    // d[i] = D(x_{i+1/2}); the periodic wrap uses d[n−1] between x_{n−1} and x_0
    let d: Vec<f64> = (0..n).map(|i| v_sq / coefficients.sigma_s(grid.a + (i as f64 + 0.5) * dx)).collect();
    if d.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::InvalidParameter("diffusion reference needs σ_s > 0".into()));
    }
    let sigma_a: Vec<f64> = x.iter().map(|&p| coefficients.sigma_a(p)).collect();
    let source: Vec<f64> = x.iter().map(|&p| coefficients.source(p)).collect();
    let d_max = d.iter().cloned().fold(0.0, f64::max);
    let a_max = sigma_a.iter().cloned().fold(0.0, f64::max);
    let rate = 2.0 * d_max / (dx * dx) + a_max;
    if grid.dt * rate > 1.0 + 1e-12 {
        return Err(Error::Cfl(format!(
            "diffusion reference needs dt ≤ {:.6e}, got {:.6e}",
            1.0 / rate,
            grid.dt
        )));
    }

    let mut rho: Vec<f64> = x.iter().map(|&p| rho0(p)).collect();
    if let DiffusionBoundary::Dirichlet { left, right } = boundary {
        rho[0] = left;
        rho[n - 1] = right;
    }
    let mut next = rho.clone();
    let inv = 1.0 / (dx * dx);
    for (step, dt) in grid.steps().into_iter().enumerate() {
        let (lo, hi) = if periodic { (0, n) } else { (1, n - 1) };
        for i in lo..hi {
            let (im, ip) = if periodic { ((i + n - 1) % n, (i + 1) % n) } else { (i - 1, i + 1) };
            let flux = d[i] * (rho[ip] - rho[i]) - d[im] * (rho[i] - rho[im]);
            next[i] = rho[i] + dt * (flux * inv - sigma_a[i] * rho[i] + source[i]);
        }
        // Dirichlet end values are never written, so both buffers keep them
        std::mem::swap(&mut rho, &mut next);
        if !rho.iter().sum::<f64>().is_finite() {
            return Err(Error::NonFinite { step: step + 1 });
        }
    }

    let j = (0..n)
        .map(|i| {
            let (im, ip, span) = if periodic {
                ((i + n - 1) % n, (i + 1) % n, 2.0 * dx)
            } else if i == 0 {
                (0, 1, dx)
            } else if i == n - 1 {
                (n - 2, n - 1, dx)
            } else {
                (i - 1, i + 1, 2.0 * dx)
            };
            -v_sq / coefficients.sigma_s(x[i]) * (rho[ip] - rho[im]) / span
        })
        .collect();
    Ok(Profile { x, rho, j: Some(j) })
}

/// Directory of reference profiles keyed by the SHA-256 of a canonical
/// description of the run. Each entry is `<hex>.csv` in [`Profile::to_csv`]
/// format.
#[derive(Debug, Clone)]
pub struct ReferenceCache {
    dir: PathBuf,
}

impl ReferenceCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReferenceCache { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn key(description: &str) -> String {
        let digest = Sha256::digest(description.as_bytes());
        digest.iter().fold(String::with_capacity(64), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    pub fn path(&self, description: &str) -> PathBuf {
        self.dir.join(format!("{}.csv", Self::key(description)))
    }

    /// Cached profile for `description`, computing and storing it on a miss.
    /// Unreadable entries are recomputed.
    pub fn get_or_compute(&self, description: &str, compute: impl FnOnce() -> Result<Profile>) -> Result<Profile> {
        let path = self.path(description);
        if let Ok(text) = fs::read_to_string(&path) {
            if let Ok(p) = Profile::from_csv(&text) {
                return Ok(p);
            }
        }
        let profile = compute()?;
        fs::create_dir_all(&self.dir)?;
        // write then rename so a concurrent reader never sees a partial file
        let tmp = path.with_extension(format!("tmp{}", std::process::id()));
        fs::write(&tmp, profile.to_csv())?;
        fs::rename(&tmp, &path)?;
        Ok(profile)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn constant_state_is_steady() {
        let coeff = MaterialCoefficients::constant(2.0, 0.0, 0.5).unwrap();
        let quad = VelocityQuadrature::slab(8);
        let grid = FdGrid::new(0.0, 1.0, 50, 1e-3, 0.05).unwrap();
        let s = kinetic_fd(&coeff, &quad, |_, _| 3.0, &FdBoundary::Periodic, &grid).unwrap();
        assert!(s.f.iter().flatten().all(|v| (v - 3.0).abs() < 1e-13));
        let s = kinetic_fd(&coeff, &quad, |_, _| 3.0, &FdBoundary::Inflow(InflowData::isotropic(3.0, 3.0)), &grid).unwrap();
        assert!(s.f.iter().flatten().all(|v| (v - 3.0).abs() < 1e-13));
        let p = diffusion_fd(&coeff, 1.0 / 3.0, |_| 3.0, DiffusionBoundary::Periodic, &grid).unwrap();
        assert!(p.rho.iter().all(|v| (v - 3.0).abs() < 1e-13));
    }

    #[test]
    fn periodic_mass_is_conserved() {
        let coeff = MaterialCoefficients::new(|x| 1.0 + x, |_| 0.0, 0.3).unwrap();
        let quad = VelocityQuadrature::slab(4);
        let grid = FdGrid::new(0.0, 2.0, 80, 1e-3, 0.2).unwrap();
        let f0 = |x: f64, v: f64| 1.0 + (PI * x).sin() + v * (PI * x).cos();
        let before: f64 = {
            let s = kinetic_fd(&coeff, &quad, f0, &FdBoundary::Periodic, &FdGrid { t_end: 0.0, ..grid }).unwrap();
            s.rho(&quad).iter().sum()
        };
        let s = kinetic_fd(&coeff, &quad, f0, &FdBoundary::Periodic, &grid).unwrap();
        let after: f64 = s.rho(&quad).iter().sum();
        assert!((after - before).abs() <= 1e-10 * before.abs());

        let dgrid = FdGrid::new(0.0, 2.0, 80, 2e-4, 0.2).unwrap();
        let rho0 = |x: f64| 1.0 + (PI * x).sin();
        let before: f64 = (0..80).map(|i| rho0(i as f64 * dgrid.dx())).sum();
        let p = diffusion_fd(&coeff, 1.0 / 3.0, rho0, DiffusionBoundary::Periodic, &dgrid).unwrap();
        let after: f64 = p.rho.iter().sum();
        assert!((after - before).abs() <= 1e-10 * before);
    }

    #[test]
    fn diffusion_of_a_sine_decays_at_the_exact_rate() {
        // σ_s = 1: ρ = e^{−⟨v²⟩t} sin x; error O(Δx²)
        let coeff = MaterialCoefficients::constant(1.0, 0.0, 1.0).unwrap();
        let v_sq = 1.0 / 3.0;
        let t = 0.5;
        let mut errors = Vec::new();
        for cells in [32, 64, 128] {
            let dx = 2.0 * PI / cells as f64;
            let grid = FdGrid::new(0.0, 2.0 * PI, cells, 0.25 * dx * dx, t).unwrap();
            let p = diffusion_fd(&coeff, v_sq, f64::sin, DiffusionBoundary::Periodic, &grid).unwrap();
            let decay = (-v_sq * t).exp();
            let err = p.x.iter().zip(&p.rho).map(|(x, r)| (r - decay * x.sin()).abs()).fold(0.0, f64::max);
            errors.push(err);
        }
        for w in errors.windows(2) {
            let order = (w[0] / w[1]).log2();
            assert!((order - 2.0).abs() < 0.2, "{errors:?}");
        }
    }

    #[test]
    fn diffusion_keeps_a_maximum_principle() {
        let coeff = MaterialCoefficients::new(|x| 1.0 + 10.0 * x * x, |_| 0.0, 1.0).unwrap();
        let grid = FdGrid::new(0.0, 1.0, 100, 1e-5, 0.01).unwrap();
        let rho0 = |x: f64| if x < 0.4 { 2.0 } else { -1.0 };
        let p = diffusion_fd(&coeff, 1.0, rho0, DiffusionBoundary::Periodic, &grid).unwrap();
        assert!(p.rho.iter().all(|r| (-1.0..=2.0).contains(r)));
    }

    #[test]
    fn dirichlet_diffusion_reaches_the_linear_profile() {
        let coeff = MaterialCoefficients::constant(1.0, 0.0, 1.0).unwrap();
        let dx = 1.0 / 20.0;
        let grid = FdGrid::new(0.0, 1.0, 20, 0.25 * dx * dx, 3.0).unwrap();
        let p = diffusion_fd(&coeff, 1.0, |_| 0.0, DiffusionBoundary::Dirichlet { left: 1.0, right: 0.0 }, &grid).unwrap();
        assert_eq!(p.x.len(), 21);
        for (x, r) in p.x.iter().zip(&p.rho) {
            assert!((r - (1.0 - x)).abs() < 1e-4);
        }
        assert!(p.j.unwrap().iter().all(|j| (j - 1.0).abs() < 1e-3));
    }

    #[test]
    fn step_size_limits_are_enforced() {
        let coeff = MaterialCoefficients::constant(1.0, 0.0, 0.1).unwrap();
        let quad = VelocityQuadrature::telegraph();
        let grid = FdGrid::new(0.0, 1.0, 100, 1e-3, 0.1).unwrap();
        assert!(matches!(
            kinetic_fd(&coeff, &quad, |_, _| 0.0, &FdBoundary::Periodic, &grid),
            Err(Error::Cfl(_))
        ));
        assert!(matches!(
            diffusion_fd(&coeff, 1.0, |_| 0.0, DiffusionBoundary::Periodic, &grid),
            Err(Error::Cfl(_))
        ));
    }

    #[test]
    fn profile_csv_round_trip_and_interpolation() {
        let p = Profile {
            x: vec![0.0, 0.5, 1.0],
            rho: vec![1.0, 1.0 / 3.0, -2.5e-17],
            j: Some(vec![0.1, 0.2, 0.3]),
        };
        let q = Profile::from_csv(&p.to_csv()).unwrap();
        assert_eq!(p, q);
        assert!((p.interpolate(&p.rho, 0.25) - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(p.interpolate(&p.rho, -1.0), 1.0);
        let r = Profile { j: None, ..p };
        assert_eq!(Profile::from_csv(&r.to_csv()).unwrap(), r);
    }

    #[test]
    fn cache_computes_once() {
        let dir = std::env::temp_dir().join(format!("kdg-cache-test-{}", std::process::id()));
        let cache = ReferenceCache::new(&dir);
        let mut calls = 0;
        let make = |calls: &mut i32| {
            *calls += 1;
            Ok(Profile {
                x: vec![0.0, 1.0],
                rho: vec![2.0, 3.0],
                j: None,
            })
        };
        let a = cache.get_or_compute("run A", || make(&mut calls)).unwrap();
        let b = cache.get_or_compute("run A", || make(&mut calls)).unwrap();
        assert_eq!(a, b);
        assert_eq!(calls, 1);
        cache.get_or_compute("run B", || make(&mut calls)).unwrap();
        assert_eq!(calls, 2);
        assert_eq!(ReferenceCache::key("").len(), 64);
        fs::remove_dir_all(&dir).unwrap();
    }
}
