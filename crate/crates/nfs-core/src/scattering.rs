//! Forward-scattered field at the sample exit as a series in scattering
//! order.
//!
//! Fields are dimensionless: the incident pulse area per lifetime is the
//! unit, so the unperturbed first-order field at `t -> 0+` has modulus `xi`.
//! Intensities are divided by `xi^2`.

use std::io::Write;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::angular::LevelScheme;
use crate::currents::{cnorm, complexify, hdot, unit_current, CVec3, Geometry, NuclearConstants};
use crate::error::{NfsError, Result};
use crate::switching::{amplitude_history, initial_amplitudes, AmplitudeSet, Coherence, SwitchSequence};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleConfig {
    /// Effective thickness.
    pub xi: f64,
}

impl SampleConfig {
    pub fn new(xi: f64) -> Result<Self> {
        let s = SampleConfig { xi };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            return Err(NfsError::Input(format!("effective thickness must be positive, got {}", self.xi)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub samples: usize,
}

impl TimeGrid {
    /// Uniform grid from `t_start`; `t_end` is rounded to a whole number of steps.
    pub fn new(t_start: f64, t_end: f64, dt: f64) -> Result<Self> {
        if !(t_start >= 0.0 && t_end > t_start && dt > 0.0 && t_end.is_finite()) {
            return Err(NfsError::Input(format!("invalid time grid [{t_start:e}, {t_end:e}] step {dt:e}")));
        }
        let steps = ((t_end - t_start) / dt).round() as usize;
        if steps == 0 {
            return Err(NfsError::Input("time grid has fewer than two samples".into()));
        }
        Ok(TimeGrid { t_start, t_end: t_start + steps as f64 * dt, dt, samples: steps + 1 })
    }

    /// 0 to 300 ns in 0.05 ns steps.
    pub fn default_window() -> Self {
        TimeGrid::new(0.0, 300e-9, 0.05e-9).expect("static grid")
    }

    pub fn time(&self, i: usize) -> f64 {
        self.t_start + i as f64 * self.dt
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.samples).map(|i| self.time(i)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderTerm {
    pub e_sigma: Vec<C64>,
    pub e_pi: Vec<C64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldRecord {
    pub grid: TimeGrid,
    pub e_sigma: Vec<C64>,
    pub e_pi: Vec<C64>,
    pub orders: Option<Vec<OrderTerm>>,
    pub truncation_order: usize,
    /// `max |E_n|` over the internal nodes for each computed order.
    pub order_maxima: Vec<f64>,
    pub converged: bool,
    /// Last computed order relative to the summed field, both in max norm.
    pub residual: f64,
    pub xi: f64,
}

impl FieldRecord {
    fn from_vectors(grid: TimeGrid, fields: &[CVec3], geom: &Geometry, xi: f64) -> Self {
        let (es, ep) = project(fields, geom);
        FieldRecord {
            grid,
            e_sigma: es,
            e_pi: ep,
            orders: None,
            truncation_order: 1,
            order_maxima: Vec::new(),
            converged: true,
            residual: 0.0,
            xi,
        }
    }

    /// Unperturbed first-order intensity at `t -> 0+` in field units.
    pub fn reference_intensity(&self) -> f64 {
        self.xi * self.xi
    }
}

fn project(fields: &[CVec3], geom: &Geometry) -> (Vec<C64>, Vec<C64>) {
    let s = complexify(&geom.sigma_dir());
    let p = complexify(&geom.pi_dir());
    fields.iter().map(|f| (hdot(&s, f), hdot(&p, f))).unzip()
}

/// Closed-form first-order field from per-interval amplitude sets.
pub fn first_order_field(history: &[AmplitudeSet], grid: &TimeGrid, consts: &NuclearConstants) -> Result<FieldRecord> {
    let first = history.first().ok_or_else(|| NfsError::Input("empty amplitude history".into()))?;
    if first.valid_from > grid.t_start.max(0.0) {
        return Err(NfsError::Input("amplitude history starts after the grid".into()));
    }
    for w in history.windows(2) {
        if w[0].valid_to != w[1].valid_from {
            return Err(NfsError::Input(format!(
                "amplitude sets do not join at {:e} s / {:e} s",
                w[0].valid_to, w[1].valid_from
            )));
        }
    }
    let mut fields = Vec::with_capacity(grid.samples);
    for t in grid.times() {
        let set = history
            .iter()
            .find(|s| s.valid_from <= t && t < s.valid_to)
            .ok_or_else(|| NfsError::Input(format!("no amplitude set covers t = {t:e} s")))?;
        let decay = (-0.5 * t / consts.tau_s).exp();
        let mut e = [C64::new(0.0, 0.0); 3];
        for a in &set.amplitudes {
            let ph = C64::from_polar(decay, -a.line.omega_hf * (t - set.valid_from));
            for (ei, ai) in e.iter_mut().zip(&a.vector) {
                *ei -= ai * ph;
            }
        }
        fields.push(e);
    }
    Ok(FieldRecord::from_vectors(*grid, &fields, &first.geometry, first.xi))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesOptions {
    pub max_order: usize,
    pub tol_rel: f64,
    pub keep_orders: bool,
}

impl Default for SeriesOptions {
    fn default() -> Self {
        SeriesOptions { max_order: 32, tol_rel: 1e-8, keep_orders: false }
    }
}

struct Segment {
    /// node times, first and last on the segment boundaries
    times: Vec<f64>,
    /// output sample carried by each node
    out: Vec<Option<usize>>,
    /// currents per coherence pair, row-major (g, e)
    currents: Vec<CVec3>,
    /// basis change entering this segment, (M_g, M_e)
    entry: Option<(Vec<Vec<C64>>, Vec<Vec<C64>>)>,
}

fn build_segments(history: &[AmplitudeSet], sequence: &SwitchSequence, grid: &TimeGrid) -> Vec<Segment> {
    let scheme = &history[0].scheme;
    let base = {
        let mut b = Vec::new();
        if grid.t_start > 0.0 {
            let n = (grid.t_start / grid.dt).ceil().max(1.0) as usize;
            b.extend((0..n).map(|i| i as f64 * grid.t_start / n as f64).map(|t| (t, None)));
        }
        b.extend(grid.times().into_iter().enumerate().map(|(i, t)| (t, Some(i))));
        b
    };
    let events: Vec<_> = sequence.events().iter().filter(|e| e.time < grid.t_end).collect();
    let mut bounds = vec![0.0];
    bounds.extend(events.iter().map(|e| e.time));
    bounds.push(grid.t_end);
    let snap = 1e-6 * grid.dt;

    let mut segs = Vec::with_capacity(bounds.len() - 1);
    for k in 0..bounds.len() - 1 {
        let (a, b) = (bounds[k], bounds[k + 1]);
        let last = k == bounds.len() - 2;
        let mut times = vec![a];
        let mut out = vec![base.iter().find(|(t, _)| (t - a).abs() < snap).and_then(|x| x.1)];
        for &(t, o) in &base {
            if t > a + snap && t < b - snap {
                times.push(t);
                out.push(o);
            }
        }
        times.push(b);
        out.push(if last { base.iter().find(|(t, _)| (t - b).abs() < snap).and_then(|x| x.1) } else { None });
        let set = &history[k];
        let mut currents = Vec::new();
        for mg in scheme.i_g.projections() {
            for me in scheme.i_e.projections() {
                currents.push(unit_current(scheme, mg, me, &set.geometry));
            }
        }
        let entry = (k > 0).then(|| {
            let r = events[k - 1].rotation;
            (r.basis_change(scheme.i_g), r.basis_change(scheme.i_e))
        });
        segs.push(Segment { times, out, currents, entry });
    }
    segs
}

fn pair_rates(scheme: &LevelScheme, consts: &NuclearConstants) -> Vec<C64> {
    let mut v = Vec::new();
    for mg in scheme.i_g.projections() {
        for me in scheme.i_e.projections() {
            let om = scheme.pair_frequency(mg, me).expect("enumerated");
            v.push(C64::new(-0.5 / consts.tau_s, -om));
        }
    }
    v
}

fn emit(currents: &[CVec3], c: &Coherence, factor: f64) -> CVec3 {
    let mut e = [C64::new(0.0, 0.0); 3];
    for (j, x) in currents.iter().zip(&c.data) {
        for (ei, ji) in e.iter_mut().zip(j) {
            *ei -= ji * x * factor;
        }
    }
    e
}

/// Multiple-scattering series at the exit plane.
///
/// Order 1 comes from the delta pulse exciting the coherences at `t = 0`.
/// Order `n` re-excites them with the order `n - 1` field through running
/// per-pair integrals, trapezoidal in time with the exact exponential
/// propagator, and radiates with weight `xi / (n tau)`.
pub fn solve_series(
    sample: &SampleConfig,
    geom: &Geometry,
    scheme: &LevelScheme,
    sequence: &SwitchSequence,
    grid: &TimeGrid,
    consts: &NuclearConstants,
    opts: &SeriesOptions,
) -> Result<FieldRecord> {
    if opts.max_order < 1 {
        return Err(NfsError::Input("max_order must be at least 1".into()));
    }
    if !(opts.tol_rel > 0.0) {
        return Err(NfsError::Input("tol_rel must be positive".into()));
    }
    let init = initial_amplitudes(geom, scheme, sample)?;
    let history = amplitude_history(&init, sequence)?;
    let segs = build_segments(&history, sequence, grid);
    let rates = pair_rates(scheme, consts);
    let (ng, ne) = (scheme.i_g.multiplicity(), scheme.i_e.multiplicity());
    let xi = sample.xi;

    let shape: Vec<usize> = segs.iter().map(|s| s.times.len()).collect();
    let zero_field = || -> Vec<Vec<CVec3>> { shape.iter().map(|&n| vec![[C64::new(0.0, 0.0); 3]; n]).collect() };

    // order 1
    let mut term = zero_field();
    let mut c = init.coherence.clone();
    for (k, seg) in segs.iter().enumerate() {
        if let Some((mg, me)) = &seg.entry {
            c = c.transformed(mg, me);
        }
        let t0 = seg.times[0];
        for (i, &t) in seg.times.iter().enumerate() {
            let mut ct = c.clone();
            for (x, r) in ct.data.iter_mut().zip(&rates) {
                *x *= (r * (t - t0)).exp();
            }
            term[k][i] = emit(&seg.currents, &ct, xi);
        }
        let h = seg.times.last().unwrap() - t0;
        for (x, r) in c.data.iter_mut().zip(&rates) {
            *x *= (r * h).exp();
        }
    }

    let mut total = term.clone();
    let node_max = |f: &Vec<Vec<CVec3>>| f.iter().flatten().map(cnorm).fold(0.0, f64::max);
    let mut order_maxima = vec![node_max(&term)];
    let mut kept = Vec::new();
    if opts.keep_orders {
        kept.push(sample_output(&segs, &term, grid, geom));
    }
    let mut residual = 1.0;
    let mut order = 1;

    while order < opts.max_order {
        order += 1;
        let factor = xi / (order as f64 * consts.tau_s);
        let mut next = zero_field();
        let mut s = Coherence::zeros(ng, ne);
        for (k, seg) in segs.iter().enumerate() {
            if let Some((mg, me)) = &seg.entry {
                s = s.transformed(mg, me);
            }
            let src = |i: usize| -> Vec<C64> { seg.currents.iter().map(|j| hdot(j, &term[k][i])).collect() };
            let mut prev_src = src(0);
            next[k][0] = emit(&seg.currents, &s, factor);
            for i in 1..seg.times.len() {
                let h = seg.times[i] - seg.times[i - 1];
                let cur_src = src(i);
                for p in 0..s.data.len() {
                    let e = (rates[p] * h).exp();
                    s.data[p] = e * s.data[p] + 0.5 * h * (e * prev_src[p] + cur_src[p]);
                }
                next[k][i] = emit(&seg.currents, &s, factor);
                prev_src = cur_src;
            }
        }
        for (tk, nk) in total.iter_mut().zip(&next) {
            for (a, b) in tk.iter_mut().zip(nk) {
                for (x, y) in a.iter_mut().zip(b) {
                    *x += y;
                }
            }
        }
        let m = node_max(&next);
        order_maxima.push(m);
        if opts.keep_orders {
            kept.push(sample_output(&segs, &next, grid, geom));
        }
        term = next;
        let tm = node_max(&total);
        residual = if tm > 0.0 { m / tm } else { 0.0 };
        if residual < opts.tol_rel {
            break;
        }
    }
    if order == 1 {
        let tm = node_max(&total);
        residual = if tm > 0.0 { 1.0 } else { 0.0 };
    }
    let out = sample_output(&segs, &total, grid, geom);
    let converged = residual < opts.tol_rel;
    if !converged {
        log::warn!("series stopped at order {order} with residual {residual:e}");
    }
    Ok(FieldRecord {
        grid: *grid,
        e_sigma: out.e_sigma,
        e_pi: out.e_pi,
        orders: opts.keep_orders.then_some(kept),
        truncation_order: order,
        order_maxima,
        converged,
        residual,
        xi,
    })
}

fn sample_output(segs: &[Segment], field: &[Vec<CVec3>], grid: &TimeGrid, geom: &Geometry) -> OrderTerm {
    let mut v = vec![[C64::new(0.0, 0.0); 3]; grid.samples];
    for (seg, f) in segs.iter().zip(field) {
        for (o, x) in seg.out.iter().zip(f) {
            if let Some(i) = o {
                v[*i] = *x;
            }
        }
    }
    let (e_sigma, e_pi) = project(&v, geom);
    OrderTerm { e_sigma, e_pi }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityRow {
    /// s
    pub t: f64,
    pub total: f64,
    pub sigma: f64,
    pub pi: f64,
}

pub fn intensity_series(rec: &FieldRecord) -> Vec<IntensityRow> {
    let r = rec.reference_intensity();
    let r = if r > 0.0 { r } else { 1.0 };
    rec.grid
        .times()
        .into_iter()
        .zip(rec.e_sigma.iter().zip(&rec.e_pi))
        .map(|(t, (s, p))| {
            let (is, ip) = (s.norm_sqr() / r, p.norm_sqr() / r);
            IntensityRow { t, total: is + ip, sigma: is, pi: ip }
        })
        .collect()
}

pub const INTENSITY_CSV_HEADER: &str = "t_ns,I_total,I_sigma,I_pi,ReE_sigma,ImE_sigma,ReE_pi,ImE_pi";

pub fn write_intensity_csv<W: Write>(rec: &FieldRecord, mut w: W) -> std::io::Result<()> {
    writeln!(w, "{INTENSITY_CSV_HEADER}")?;
    for (row, (s, p)) in intensity_series(rec).iter().zip(rec.e_sigma.iter().zip(&rec.e_pi)) {
        writeln!(
            w,
            "{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
            row.t * 1e9,
            row.total,
            row.sigma,
            row.pi,
            s.re,
            s.im,
            p.re,
            p.im
        )?;
    }
    Ok(())
}

/// Convenience: closed-form first order for a sequence.
pub fn first_order_for_sequence(
    sample: &SampleConfig,
    geom: &Geometry,
    scheme: &LevelScheme,
    sequence: &SwitchSequence,
    grid: &TimeGrid,
    consts: &NuclearConstants,
) -> Result<FieldRecord> {
    let init = initial_amplitudes(geom, scheme, sample)?;
    let history = amplitude_history(&init, sequence)?;
    first_order_field(&history, grid, consts)
}

/// Trapezoidal integral of `f` over the grid samples inside `[a, b]`, in ns.
pub fn integrate_window(grid: &TimeGrid, f: &[f64], a: f64, b: f64) -> f64 {
    let mut acc = 0.0;
    for i in 1..grid.samples {
        let (t0, t1) = (grid.time(i - 1), grid.time(i));
        if t0 >= a && t1 <= b {
            acc += 0.5 * (f[i - 1] + f[i]) * (t1 - t0) * 1e9;
        }
    }
    acc
}
