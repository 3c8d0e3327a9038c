//! Hybrid ATES plant: two radial aquifer models coupled by a cocurrent heat
//! exchanger (HX) to the building loop.
//!
//! The state holds the building-side HX outlet temperature `T_b` and, per
//! aquifer, the borehole-face temperature followed by `n_cells` finite-volume
//! cell temperatures (`1 + 2 (n_cells + 1)` states in total, 33 with the
//! default 15 cells). The sign of the groundwater flow selects the mode:
//!
//! * heating (`q > 0`): water is pumped from the warm borehole through the HX
//!   and injected into the cold aquifer,
//! * storing (`q = 0`): no flow, both aquifers only conduct,
//! * cooling (`q < 0`): the roles of the two aquifers are swapped.
//!
//! Flows are given in m³/h at the interface and converted to m³/s here.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::linalg::solve_tridiagonal;
use crate::{Error, Result, SECONDS_PER_HOUR};

/// Treatment of the far-field boundary at `r_max`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OuterBoundary {
    /// Dirichlet condition at the ambient ground temperature.
    #[default]
    Ambient,
    /// Zero conductive flux; only meaningful for conservation checks.
    Insulated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantParams {
    /// Volumetric heat capacity of the saturated aquifer, J/(m³ K).
    pub c_a: f64,
    /// Volumetric heat capacity of water, J/(m³ K).
    pub c_w: f64,
    /// Conduction coefficient per cell, W/(m K).
    pub lambda: Vec<f64>,
    /// Borehole filter length, m.
    pub filter_length: f64,
    /// Borehole radius, m.
    pub r0: f64,
    /// Outer radius of the ground domain, m.
    pub r_max: f64,
    pub n_cells: usize,
    /// Step size, s.
    pub dt: f64,
    /// Ambient ground temperature, K.
    pub t_amb: f64,
    /// HX heat transfer coefficient, W/(m² K).
    pub hx_coefficient: f64,
    /// HX transfer area, m².
    pub hx_area: f64,
    /// Constant building-side volumetric flow through the HX, m³/s.
    pub building_flow: f64,
    /// Standard deviation of the Gaussian perturbation of the borehole
    /// temperatures, K.
    pub noise_std: f64,
    /// Pump flow bounds, m³/h.
    pub q_min: f64,
    pub q_max: f64,
    #[serde(default)]
    pub outer_boundary: OuterBoundary,
}

impl PlantParams {
    /// Parameter set of the reference ATES installation with a fixed
    /// conductivity field drawn from `seed`.
    pub fn reference(seed: u64) -> Self {
        let n_cells = 15;
        Self {
            c_a: 4.4625e6,
            c_w: 4.2e6,
            lambda: draw_conductivities(n_cells, 3.0, 5.0, seed),
            filter_length: 38.0,
            r0: 0.4,
            r_max: 4.0,
            n_cells,
            dt: 60.0,
            t_amb: 284.85,
            hx_coefficient: 0.1e6,
            hx_area: 10.0,
            building_flow: 0.1,
            noise_std: 0.3,
            q_min: -100.0,
            q_max: 100.0,
            outer_boundary: OuterBoundary::Ambient,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("c_a", self.c_a),
            ("c_w", self.c_w),
            ("filter_length", self.filter_length),
            ("r0", self.r0),
            ("dt", self.dt),
            ("building_flow", self.building_flow),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.r_max > self.r0) {
            return Err(Error::InvalidParameter("r_max must exceed r0".into()));
        }
        if self.n_cells < 2 {
            return Err(Error::InvalidParameter("n_cells must be at least 2".into()));
        }
        if self.lambda.len() != self.n_cells {
            return Err(Error::DimensionMismatch(format!(
                "lambda has {} entries for {} cells",
                self.lambda.len(),
                self.n_cells
            )));
        }
        if self.lambda.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
            return Err(Error::InvalidParameter("every lambda must be positive".into()));
        }
        if !(self.q_min < 0.0 && self.q_max > 0.0) {
            return Err(Error::InvalidParameter("flow bounds must satisfy q_min < 0 < q_max".into()));
        }
        if !(self.hx_coefficient >= 0.0 && self.hx_area >= 0.0) {
            return Err(Error::InvalidParameter("HX coefficient and area must be non-negative".into()));
        }
        if !(self.noise_std >= 0.0 && self.t_amb.is_finite()) {
            return Err(Error::InvalidParameter("noise_std must be non-negative".into()));
        }
        Ok(())
    }

    /// Building-side capacity rate `c_w V_b`, W/K.
    pub fn building_capacity_rate(&self) -> f64 {
        self.c_w * self.building_flow
    }

    /// Number of state entries, `1 + 2 (n_cells + 1)`.
    pub fn state_dim(&self) -> usize {
        1 + 2 * (self.n_cells + 1)
    }
}

/// Draws one conductivity per cell uniformly from `[lo, hi]`.
pub fn draw_conductivities(n_cells: usize, lo: f64, hi: f64, seed: u64) -> Vec<f64> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    (0..n_cells).map(|_| if hi > lo { rng.random_range(lo..=hi) } else { lo }).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OperatingMode {
    Heating,
    Storing,
    Cooling,
}

pub fn mode_of(q: f64) -> OperatingMode {
    if q > 0.0 {
        OperatingMode::Heating
    } else if q < 0.0 {
        OperatingMode::Cooling
    } else {
        OperatingMode::Storing
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlantInput {
    /// Signed groundwater flow, m³/h (positive = heating).
    pub q: f64,
    /// Building return temperature, K.
    pub t_r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub t_b: f64,
    /// Warm aquifer: borehole face followed by the cell temperatures.
    pub warm: Vec<f64>,
    /// Cold aquifer, same layout as `warm`.
    pub cold: Vec<f64>,
}

impl PlantState {
    pub fn uniform(params: &PlantParams, t: f64) -> Self {
        Self { t_b: t, warm: vec![t; params.n_cells + 1], cold: vec![t; params.n_cells + 1] }
    }

    /// Output triple `(T_b, T_w(r0), T_c(r0))`.
    pub fn output(&self) -> [f64; 3] {
        [self.t_b, self.warm[0], self.cold[0]]
    }

    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(1 + self.warm.len() + self.cold.len());
        v.push(self.t_b);
        v.extend_from_slice(&self.warm);
        v.extend_from_slice(&self.cold);
        v
    }

    fn check(&self, params: &PlantParams) -> Result<()> {
        let n = params.n_cells + 1;
        if self.warm.len() != n || self.cold.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "state vectors must have {n} entries (got {} / {})",
                self.warm.len(),
                self.cold.len()
            )));
        }
        if !self.t_b.is_finite() || self.warm.iter().chain(&self.cold).any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("plant state"));
        }
        Ok(())
    }
}

/// Temperature change coefficients of the cocurrent HX.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HxAlpha {
    /// Ground side: `T_out = (1 - a) T_in + a T_r`.
    pub ates: f64,
    /// Building side: `T_b = (1 - b) T_r + b T_in`.
    pub building: f64,
}

/// Cocurrent (parallel-flow) effectiveness relation expressed per stream.
///
/// With capacity rates `C_a = c_w |q|` and `C_b = c_w V_b` and
/// `k = 1 - exp(-kA (1/C_a + 1/C_b))`, the ground-side outlet moves the
/// fraction `C_b / (C_a + C_b) * k` of the inlet difference and the
/// building-side outlet the fraction `C_a / (C_a + C_b) * k`.
pub fn hx_alpha(q: f64, params: &PlantParams) -> Result<HxAlpha> {
    if !q.is_finite() {
        return Err(Error::NonFinite("flow"));
    }
    if q == 0.0 {
        return Err(Error::HxInactive);
    }
    let c_ates = params.c_w * q.abs() / SECONDS_PER_HOUR;
    let c_building = params.building_capacity_rate();
    let ua = params.hx_coefficient * params.hx_area;
    let transfer = -(-ua * (1.0 / c_ates + 1.0 / c_building)).exp_m1();
    let total = c_ates + c_building;
    Ok(HxAlpha { ates: c_building / total * transfer, building: c_ates / total * transfer })
}

/// Outlet temperatures `(T_ates_out, T_b)` of the HX for ground inlet
/// `t_ates_in` and building return `t_r`.
pub fn hx_outlets(t_ates_in: f64, t_r: f64, alpha: HxAlpha) -> (f64, f64) {
    let t_out = (1.0 - alpha.ates) * t_ates_in + alpha.ates * t_r;
    let t_b = (1.0 - alpha.building) * t_r + alpha.building * t_ates_in;
    (t_out, t_b)
}

/// Finite-volume discretisation of one aquifer.
///
/// Cells are uniform in radius between `r0` and `r_max`; conduction uses
/// harmonic-mean face conductivities, convection first-order upwinding, and
/// each step is advanced with backward Euler.
#[derive(Clone, Debug)]
pub struct AquiferGrid {
    /// `c_a V_i / dt` per cell, W/K.
    storage: Vec<f64>,
    /// Conductance of face `i` (between cell `i-1` and `i`), W/K. Face 0 is
    /// the borehole wall, face `n` the outer boundary.
    conductance: Vec<f64>,
    volumes: Vec<f64>,
    centers: Vec<f64>,
    c_a: f64,
    c_w: f64,
    t_amb: f64,
}

impl AquiferGrid {
    pub fn new(params: &PlantParams) -> Result<Self> {
        params.validate()?;
        let n = params.n_cells;
        let dr = (params.r_max - params.r0) / n as f64;
        let two_pi_l = 2.0 * std::f64::consts::PI * params.filter_length;
        let faces: Vec<f64> = (0..=n).map(|i| params.r0 + i as f64 * dr).collect();
        let volumes: Vec<f64> = (0..n)
            .map(|i| std::f64::consts::PI * params.filter_length * (faces[i + 1].powi(2) - faces[i].powi(2)))
            .collect();
        let centers = (0..n).map(|i| params.r0 + (i as f64 + 0.5) * dr).collect();
        let mut conductance = vec![0.0; n + 1];
        conductance[0] = two_pi_l * faces[0] * params.lambda[0] / (0.5 * dr);
        for i in 1..n {
            let (a, b) = (params.lambda[i - 1], params.lambda[i]);
            let harmonic = 2.0 * a * b / (a + b);
            conductance[i] = two_pi_l * faces[i] * harmonic / dr;
        }
        conductance[n] = match params.outer_boundary {
            OuterBoundary::Ambient => two_pi_l * faces[n] * params.lambda[n - 1] / (0.5 * dr),
            OuterBoundary::Insulated => 0.0,
        };
        let storage = volumes.iter().map(|v| params.c_a * v / params.dt).collect();
        Ok(Self { storage, conductance, volumes, centers, c_a: params.c_a, c_w: params.c_w, t_amb: params.t_amb })
    }

    pub fn n_cells(&self) -> usize {
        self.volumes.len()
    }

    pub fn cell_centers(&self) -> &[f64] {
        &self.centers
    }

    /// Thermal energy `sum c_a V_i T_i` of the cells (borehole node excluded).
    pub fn energy(&self, x: &[f64]) -> f64 {
        self.volumes.iter().zip(&x[1..]).map(|(v, t)| self.c_a * v * t).sum()
    }

    /// Advances one aquifer by one step.
    ///
    /// `x` holds the borehole node followed by the cells. `flow` is the signed
    /// radial flow in m³/h, positive for injection into this aquifer, in which
    /// case `t_inject` fixes the borehole temperature. For extraction and for
    /// zero flow the borehole face carries no conductive flux and the returned
    /// borehole node equals the adjacent cell.
    pub fn step(&self, x: &[f64], flow: f64, t_inject: Option<f64>) -> Result<Vec<f64>> {
        let n = self.n_cells();
        if x.len() != n + 1 {
            return Err(Error::DimensionMismatch(format!("aquifer state needs {} entries, got {}", n + 1, x.len())));
        }
        if !flow.is_finite() || x.iter().any(|t| !t.is_finite()) {
            return Err(Error::NonFinite("aquifer temperatures"));
        }
        let injecting = flow > 0.0;
        let t_in = if injecting {
            match t_inject {
                Some(t) if t.is_finite() => t,
                Some(_) => return Err(Error::NonFinite("injection temperature")),
                None => return Err(Error::InvalidParameter("injection needs an inlet temperature".into())),
            }
        } else {
            0.0
        };
        let advection = self.c_w * flow.abs() / SECONDS_PER_HOUR;

        let mut lower = vec![0.0; n];
        let mut diag = vec![0.0; n];
        let mut upper = vec![0.0; n];
        let mut rhs = vec![0.0; n];
        for i in 0..n {
            // conduction through the borehole wall only when it is held at the
            // injection temperature; otherwise the wall is adiabatic
            let g_west = if i > 0 || injecting { self.conductance[i] } else { 0.0 };
            let g_east = self.conductance[i + 1];
            // upwind: the advective inflow enters through the west face when
            // injecting and through the east face when extracting
            let (a_west, a_east) = if injecting { (advection, 0.0) } else { (0.0, advection) };

            diag[i] = self.storage[i] + g_west + g_east + advection;
            rhs[i] = self.storage[i] * x[i + 1];
            if i == 0 {
                rhs[i] += (g_west + a_west) * t_in;
            } else {
                lower[i] = -(g_west + a_west);
            }
            if i + 1 == n {
                rhs[i] += (g_east + a_east) * self.t_amb;
            } else {
                upper[i] = -(g_east + a_east);
            }
        }

        let cells = solve_tridiagonal(&lower, &diag, &upper, &rhs);
        let mut out = Vec::with_capacity(n + 1);
        out.push(if injecting { t_in } else { cells[0] });
        out.extend(cells);
        Ok(out)
    }
}

/// Simulator for the coupled warm/cold aquifer system.
#[derive(Clone, Debug)]
pub struct Plant {
    params: PlantParams,
    grid: AquiferGrid,
    noise: Option<Normal<f64>>,
}

/// Result of one plant step: the next state and its output triple.
#[derive(Clone, Debug)]
pub struct StepResult {
    pub state: PlantState,
    pub output: [f64; 3],
    pub mode: OperatingMode,
}

impl Plant {
    pub fn new(params: PlantParams) -> Result<Self> {
        let grid = AquiferGrid::new(&params)?;
        let noise = if params.noise_std > 0.0 {
            Some(Normal::new(0.0, params.noise_std).map_err(|e| Error::InvalidParameter(e.to_string()))?)
        } else {
            None
        };
        Ok(Self { params, grid, noise })
    }

    pub fn params(&self) -> &PlantParams {
        &self.params
    }

    pub fn grid(&self) -> &AquiferGrid {
        &self.grid
    }

    /// Copy of this plant with the noise switched off.
    pub fn noise_free(&self) -> Self {
        let mut params = self.params.clone();
        params.noise_std = 0.0;
        Self { params, grid: self.grid.clone(), noise: None }
    }

    pub fn pde_step(&self, x: &[f64], flow: f64, t_inject: Option<f64>) -> Result<Vec<f64>> {
        self.grid.step(x, flow, t_inject)
    }

    /// Initial condition with a radial Gaussian temperature bump of
    /// `amplitude` K at the warm borehole and the mirrored dip in the cold
    /// aquifer. `t_b` starts at `t_b0`.
    pub fn charged_state(&self, amplitude: f64, width: f64, t_b0: f64) -> PlantState {
        let p = &self.params;
        let profile = |r: f64| (-0.5 * ((r - p.r0) / width).powi(2)).exp();
        let mut warm = Vec::with_capacity(p.n_cells + 1);
        let mut cold = Vec::with_capacity(p.n_cells + 1);
        warm.push(p.t_amb + amplitude);
        cold.push(p.t_amb - amplitude);
        for &r in self.grid.cell_centers() {
            warm.push(p.t_amb + amplitude * profile(r));
            cold.push(p.t_amb - amplitude * profile(r));
        }
        PlantState { t_b: t_b0, warm, cold }
    }

    /// Advances the plant by one step.
    ///
    /// When noise is enabled, the borehole-face temperatures of both aquifers
    /// receive an independent Gaussian perturbation after the step. These
    /// nodes are the measured ground outputs and the HX inlet of the next
    /// step, so the perturbation acts as measurement and process noise at
    /// once. `T_b` is algebraic in the HX inlet and sees the noise through it.
    pub fn step<R: Rng + ?Sized>(
        &self,
        state: &PlantState,
        input: PlantInput,
        rng: Option<&mut R>,
    ) -> Result<StepResult> {
        state.check(&self.params)?;
        if !input.q.is_finite() || !input.t_r.is_finite() {
            return Err(Error::NonFinite("plant input"));
        }
        if input.q < self.params.q_min || input.q > self.params.q_max {
            return Err(Error::FlowOutOfBounds { q: input.q, min: self.params.q_min, max: self.params.q_max });
        }
        let mode = mode_of(input.q);
        let mut next = match mode {
            OperatingMode::Storing => PlantState {
                t_b: state.t_b,
                warm: self.grid.step(&state.warm, 0.0, None)?,
                cold: self.grid.step(&state.cold, 0.0, None)?,
            },
            OperatingMode::Heating | OperatingMode::Cooling => {
                let (source, sink) = match mode {
                    OperatingMode::Heating => (&state.warm, &state.cold),
                    _ => (&state.cold, &state.warm),
                };
                let alpha = hx_alpha(input.q, &self.params)?;
                let (t_out, t_b) = hx_outlets(source[0], input.t_r, alpha);
                let flow = input.q.abs();
                let source_next = self.grid.step(source, -flow, None)?;
                let sink_next = self.grid.step(sink, flow, Some(t_out))?;
                let (warm, cold) = match mode {
                    OperatingMode::Heating => (source_next, sink_next),
                    _ => (sink_next, source_next),
                };
                PlantState { t_b, warm, cold }
            }
        };
        if let (Some(noise), Some(rng)) = (self.noise.as_ref(), rng) {
            next.warm[0] += noise.sample(rng);
            next.cold[0] += noise.sample(rng);
        }
        let output = next.output();
        Ok(StepResult { state: next, output, mode })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn params() -> PlantParams {
        let mut p = PlantParams::reference(7);
        p.noise_std = 0.0;
        p
    }

    fn no_rng() -> Option<&'static mut ChaCha8Rng> {
        None
    }

    #[test]
    fn mode_follows_sign() {
        assert_eq!(mode_of(50.0), OperatingMode::Heating);
        assert_eq!(mode_of(0.0), OperatingMode::Storing);
        assert_eq!(mode_of(-100.0), OperatingMode::Cooling);
        assert_eq!(mode_of(-0.0), OperatingMode::Storing);
    }

    #[test]
    fn hx_alpha_rejects_storing() {
        assert!(matches!(hx_alpha(0.0, &params()), Err(Error::HxInactive)));
    }

    #[test]
    fn hx_alpha_limits() {
        let mut p = params();
        p.hx_coefficient = 1e-9;
        let a = hx_alpha(100.0, &p).unwrap();
        assert!(a.ates < 1e-9 && a.building < 1e-9);

        // equal capacity rates, huge transfer: both outlets meet halfway
        let mut p = params();
        p.hx_coefficient = 1e12;
        p.building_flow = 100.0 / SECONDS_PER_HOUR;
        let a = hx_alpha(100.0, &p).unwrap();
        assert!((a.ates - 0.5).abs() < 1e-12);
        assert!((a.building - 0.5).abs() < 1e-12);
    }

    #[test]
    fn hx_alpha_reference_golden() {
        // epsilon-NTU parallel-flow relation on the C_min basis, evaluated in python
        let a = hx_alpha(100.0, &params()).unwrap();
        assert!((a.ates - HX_GOLDEN_ATES).abs() < 1e-12, "{}", a.ates);
        assert!((a.building - HX_GOLDEN_BUILDING).abs() < 1e-12, "{}", a.building);
        // symmetric in the flow sign
        assert_eq!(hx_alpha(-100.0, &params()).unwrap(), a);
        assert!(a.ates > 0.0 && a.ates < 1.0);
    }

    const HX_GOLDEN_ATES: f64 = 0.7825949872746021;
    const HX_GOLDEN_BUILDING: f64 = 0.21738749646516722;

    #[test]
    fn hx_outlets_convex_combination() {
        let full = HxAlpha { ates: 1.0, building: 1.0 };
        let none = HxAlpha { ates: 0.0, building: 0.0 };
        assert_eq!(hx_outlets(290.0, 280.0, none), (290.0, 280.0));
        assert_eq!(hx_outlets(290.0, 280.0, full), (280.0, 290.0));
        let (out, _) = hx_outlets(290.0, 280.0, HxAlpha { ates: 0.3, building: 0.1 });
        assert!((out - 287.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_ambient_is_steady() {
        let p = params();
        let grid = AquiferGrid::new(&p).unwrap();
        let x = vec![p.t_amb; p.n_cells + 1];
        let next = grid.step(&x, 0.0, None).unwrap();
        for t in next {
            assert!((t - p.t_amb).abs() < 1e-12);
        }
    }

    #[test]
    fn injection_requires_temperature() {
        let p = params();
        let grid = AquiferGrid::new(&p).unwrap();
        let x = vec![p.t_amb; p.n_cells + 1];
        assert!(grid.step(&x, 50.0, None).is_err());
        let mut bad = x.clone();
        bad[3] = f64::NAN;
        assert!(matches!(grid.step(&bad, 0.0, None), Err(Error::NonFinite(_))));
    }

    #[test]
    fn insulated_diffusion_conserves_energy() {
        let mut p = params();
        p.outer_boundary = OuterBoundary::Insulated;
        let grid = AquiferGrid::new(&p).unwrap();
        let mut x: Vec<f64> = (0..=p.n_cells).map(|i| 280.0 + (i as f64 * 1.7).sin() * 5.0).collect();
        let e0 = grid.energy(&x);
        for _ in 0..200 {
            let e_prev = grid.energy(&x);
            x = grid.step(&x, 0.0, None).unwrap();
            assert!(((grid.energy(&x) - e_prev) / e_prev).abs() < 1e-12);
        }
        assert!(((grid.energy(&x) - e0) / e0).abs() < 1e-10);
    }

    #[test]
    fn spike_decays_monotonically() {
        let p = params();
        let grid = AquiferGrid::new(&p).unwrap();
        let mut x = vec![p.t_amb; p.n_cells + 1];
        x[6] += 10.0;
        let mut amp = 10.0;
        for _ in 0..100 {
            x = grid.step(&x, 0.0, None).unwrap();
            let now = x[6] - p.t_amb;
            assert!(now < amp);
            amp = now;
        }
        assert!(amp > 0.0);
    }

    #[test]
    fn step_is_affine_in_state() {
        let p = params();
        let grid = AquiferGrid::new(&p).unwrap();
        let x1: Vec<f64> = (0..=p.n_cells).map(|i| 280.0 + i as f64).collect();
        let x2: Vec<f64> = (0..=p.n_cells).map(|i| 290.0 - 0.5 * i as f64).collect();
        let zero = vec![0.0; p.n_cells + 1];
        for flow in [-80.0, 0.0, 60.0] {
            let t_in = if flow > 0.0 { Some(283.0) } else { None };
            let (a, b) = (0.7, -1.3);
            let mix: Vec<f64> = x1.iter().zip(&x2).map(|(u, v)| a * u + b * v).collect();
            let s1 = grid.step(&x1, flow, t_in).unwrap();
            let s2 = grid.step(&x2, flow, t_in).unwrap();
            let s0 = grid.step(&zero, flow, t_in).unwrap();
            let sm = grid.step(&mix, flow, t_in).unwrap();
            for i in 1..=p.n_cells {
                // affine map: f(a x1 + b x2) = a f(x1) + b f(x2) + (1 - a - b) f(0)
                let expected = a * s1[i] + b * s2[i] + (1.0 - a - b) * s0[i];
                assert!((sm[i] - expected).abs() < 1e-9, "flow {flow} cell {i}");
            }
        }
    }

    #[test]
    fn storing_at_equilibrium_holds_outputs() {
        let p = params();
        let plant = Plant::new(p.clone()).unwrap();
        let state = PlantState { t_b: 287.0, ..PlantState::uniform(&p, p.t_amb) };
        let r = plant.step(&state, PlantInput { q: 0.0, t_r: 280.0 }, no_rng()).unwrap();
        assert_eq!(r.mode, OperatingMode::Storing);
        assert_eq!(r.output[0], 287.0);
        assert!((r.output[1] - p.t_amb).abs() < 1e-12);
        assert!((r.output[2] - p.t_amb).abs() < 1e-12);
    }

    #[test]
    fn heating_injects_between_inlets() {
        let p = params();
        let plant = Plant::new(p.clone()).unwrap();
        let state = plant.charged_state(7.5, 1.8, 280.0);
        let t_r = 278.0;
        let r = plant.step(&state, PlantInput { q: 50.0, t_r }, no_rng()).unwrap();
        let injected = r.state.cold[0];
        assert!(injected > t_r && injected < state.warm[0]);
        assert!(r.output[0] > t_r && r.output[0] < state.warm[0]);
    }

    #[test]
    fn flow_bounds_enforced() {
        let p = params();
        let plant = Plant::new(p.clone()).unwrap();
        let state = PlantState::uniform(&p, p.t_amb);
        let err = plant.step(&state, PlantInput { q: 150.0, t_r: 280.0 }, no_rng()).unwrap_err();
        assert!(matches!(err, Error::FlowOutOfBounds { .. }));
    }

    #[test]
    fn cooling_mirrors_heating() {
        let p = params();
        let plant = Plant::new(p.clone()).unwrap();
        let state = plant.charged_state(6.0, 1.5, 281.0);
        let swapped = PlantState { t_b: state.t_b, warm: state.cold.clone(), cold: state.warm.clone() };
        let input = PlantInput { q: 70.0, t_r: 283.0 };
        let heat = plant.step(&state, input, no_rng()).unwrap();
        let cool = plant.step(&swapped, PlantInput { q: -70.0, ..input }, no_rng()).unwrap();
        assert_eq!(heat.state.warm, cool.state.cold);
        assert_eq!(heat.state.cold, cool.state.warm);
        assert_eq!(heat.state.t_b, cool.state.t_b);
    }

    #[test]
    fn noise_is_seeded() {
        let p = PlantParams::reference(3);
        let plant = Plant::new(p.clone()).unwrap();
        let state = plant.charged_state(7.5, 1.8, 280.0);
        let input = PlantInput { q: 25.0, t_r: 280.0 };
        let mut r1 = ChaCha8Rng::seed_from_u64(1);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        let a = plant.step(&state, input, Some(&mut r1)).unwrap();
        let b = plant.step(&state, input, Some(&mut r2)).unwrap();
        assert_eq!(a.output, b.output);
        let clean = plant.noise_free().step(&state, input, no_rng()).unwrap();
        assert_ne!(a.output[1], clean.output[1]);
    }
}
