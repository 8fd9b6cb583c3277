//! C ABI over `chns-core`.
//!
//! Every entry point returns a [`ChnsStatus`]; on failure the message is
//! available from [`chns_last_error_message`] on the same thread. Fields
//! cross the boundary as row-major `nx * ny` arrays of doubles, index
//! `iy * nx + ix`. Panics never unwind into C; they become `CHNS_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use chns_core::control::{feedback_sigma, hamiltonian_closed, ControlSignal};
use chns_core::operators::energy;
use chns_core::{simulate, ChnsError, GridSpec, Params, PotentialSpec, ScalarField, SchemeConfig, State, VelocityField};

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChnsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    DimensionMismatch = 3,
    /// The run blew up or produced a non-finite value.
    Numerical = 4,
    Panic = 5,
}

/// Physical constants. `radius` bounds the control norm.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChnsParams {
    pub nu: f64,
    pub mobility: f64,
    pub capillary: f64,
    pub radius: f64,
}

impl From<ChnsParams> for Params {
    fn from(p: ChnsParams) -> Self {
        Params {
            nu: p.nu,
            mobility: p.mobility,
            capillary: p.capillary,
            r: p.radius,
        }
    }
}

/// Opaque simulation handle.
pub struct ChnsSimulation {
    state: State,
    params: Params,
    scheme: SchemeConfig,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &ChnsError) -> ChnsStatus {
    match e {
        ChnsError::DimensionMismatch { .. } => ChnsStatus::DimensionMismatch,
        ChnsError::BlowUp { .. } | ChnsError::NonFinite => ChnsStatus::Numerical,
        _ => ChnsStatus::InvalidArgument,
    }
}

fn fail(status: ChnsStatus, msg: impl Into<String>) -> ChnsStatus {
    set_error(msg);
    status
}

/// Runs `f`, recording its error and containing panics.
fn guard(f: impl FnOnce() -> Result<(), ChnsStatus>) -> ChnsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ChnsStatus::Ok
        }
        Ok(Err(s)) => s,
        Err(_) => fail(ChnsStatus::Panic, "internal panic"),
    }
}

trait OrStatus<T> {
    fn or_status(self) -> Result<T, ChnsStatus>;
}

impl<T> OrStatus<T> for chns_core::Result<T> {
    fn or_status(self) -> Result<T, ChnsStatus> {
        self.map_err(|e| fail(status_of(&e), e.to_string()))
    }
}

unsafe fn slice<'a>(ptr: *const f64, len: usize, what: &str) -> Result<&'a [f64], ChnsStatus> {
    if ptr.is_null() {
        return Err(fail(ChnsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn slice_mut<'a>(ptr: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], ChnsStatus> {
    if ptr.is_null() {
        return Err(fail(ChnsStatus::NullPointer, format!("{what} is null")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, len))
}

unsafe fn sim_ref<'a>(sim: *const ChnsSimulation) -> Result<&'a ChnsSimulation, ChnsStatus> {
    sim.as_ref().ok_or_else(|| fail(ChnsStatus::NullPointer, "simulation handle is null"))
}

unsafe fn sim_mut<'a>(sim: *mut ChnsSimulation) -> Result<&'a mut ChnsSimulation, ChnsStatus> {
    sim.as_mut().ok_or_else(|| fail(ChnsStatus::NullPointer, "simulation handle is null"))
}

unsafe fn velocity(grid: GridSpec, x: *const f64, y: *const f64, what: &str) -> Result<VelocityField, ChnsStatus> {
    let n = grid.len();
    let ux = slice(x, n, what)?.to_vec();
    let uy = slice(y, n, what)?.to_vec();
    VelocityField::from_components(grid, ux, uy).or_status()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn chns_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

#[no_mangle]
pub extern "C" fn chns_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

#[no_mangle]
pub extern "C" fn chns_params_default() -> ChnsParams {
    let p = Params::default();
    ChnsParams {
        nu: p.nu,
        mobility: p.mobility,
        capillary: p.capillary,
        radius: p.r,
    }
}

/// Creates a simulation at rest on an `nx` by `ny` periodic grid of side
/// `length`, stepping with `dt`. Free the handle with [`chns_simulation_free`].
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn chns_simulation_new(
    nx: usize,
    ny: usize,
    length: f64,
    params: *const ChnsParams,
    dt: f64,
    out: *mut *mut ChnsSimulation,
) -> ChnsStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(ChnsStatus::NullPointer, "out is null"));
        }
        *out = std::ptr::null_mut();
        let params: Params = (*params.as_ref().ok_or_else(|| fail(ChnsStatus::NullPointer, "params is null"))?).into();
        params.validate().or_status()?;
        let grid = GridSpec::new(nx, ny, length).or_status()?;
        let scheme = SchemeConfig::with_dt(dt);
        scheme.validate().or_status()?;
        let sim = ChnsSimulation {
            state: State::rest(grid, 0.0),
            params,
            scheme,
        };
        *out = Box::into_raw(Box::new(sim));
        Ok(())
    })
}

/// # Safety
/// `sim` must come from [`chns_simulation_new`] and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn chns_simulation_free(sim: *mut ChnsSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Number of grid points, the length of every field array.
///
/// # Safety
/// `sim` must be a live handle or null (returns 0).
#[no_mangle]
pub unsafe extern "C" fn chns_simulation_len(sim: *const ChnsSimulation) -> usize {
    sim.as_ref().map_or(0, |s| s.state.grid().len())
}

/// Replaces the state with band-limited random data of RMS `amplitude`
/// and zero mean, keeping the current time.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chns_simulation_init_spinodal(sim: *mut ChnsSimulation, amplitude: f64, seed: u64) -> ChnsStatus {
    guard(|| {
        let sim = sim_mut(sim)?;
        sim.state = State::spinodal(*sim.state.grid(), sim.state.t, amplitude, 4.0, seed).or_status()?;
        Ok(())
    })
}

/// Sets time and fields. `u` must be divergence-free.
///
/// # Safety
/// `sim` must be a live handle; each array must hold `chns_simulation_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn chns_simulation_set_state(
    sim: *mut ChnsSimulation,
    t: f64,
    phi: *const f64,
    ux: *const f64,
    uy: *const f64,
) -> ChnsStatus {
    guard(|| {
        let sim = sim_mut(sim)?;
        let grid = *sim.state.grid();
        let phi = ScalarField::from_values(grid, slice(phi, grid.len(), "phi")?.to_vec()).or_status()?;
        let u = velocity(grid, ux, uy, "u")?;
        sim.state = State::new(t, phi, u).or_status()?;
        Ok(())
    })
}

/// Advances `steps` steps under a constant control. Null `cx` and `cy`
/// mean no control. On failure the state is left unchanged.
///
/// # Safety
/// `sim` must be a live handle; non-null control arrays must hold
/// `chns_simulation_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn chns_simulation_step(
    sim: *mut ChnsSimulation,
    steps: usize,
    cx: *const f64,
    cy: *const f64,
) -> ChnsStatus {
    guard(|| {
        let sim = sim_mut(sim)?;
        if steps == 0 {
            return Ok(());
        }
        let grid = *sim.state.grid();
        let t0 = sim.state.t;
        let t1 = t0 + steps as f64 * sim.scheme.dt;
        let control = if cx.is_null() && cy.is_null() {
            ControlSignal::zero(grid, t0, t1)
        } else {
            let v = velocity(grid, cx, cy, "control")?;
            if v.l2_norm() > sim.params.r * (1.0 + 1e-12) {
                return Err(fail(
                    ChnsStatus::InvalidArgument,
                    format!("control norm {} exceeds R = {}", v.l2_norm(), sim.params.r),
                ));
            }
            ControlSignal::constant(v, t0, t1).or_status()?
        };
        let tr = simulate(&sim.state, &control, t1, &sim.params, &sim.scheme).or_status()?;
        sim.state = tr.final_state().clone();
        Ok(())
    })
}

/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn chns_simulation_time(sim: *const ChnsSimulation, out: *mut f64) -> ChnsStatus {
    guard(|| {
        let t = sim_ref(sim)?.state.t;
        slice_mut(out, 1, "out")?[0] = t;
        Ok(())
    })
}

/// Spatial mean of φ.
///
/// # Safety
/// `sim` must be a live handle and `out` valid.
#[no_mangle]
pub unsafe extern "C" fn chns_simulation_mean_phi(sim: *const ChnsSimulation, out: *mut f64) -> ChnsStatus {
    guard(|| {
        let m = sim_ref(sim)?.state.phi.mean();
        slice_mut(out, 1, "out")?[0] = m;
        Ok(())
    })
}

/// Free energy E(φ) and kinetic energy ½‖u‖². Either output may be null.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn chns_simulation_energy(
    sim: *const ChnsSimulation,
    free_energy: *mut f64,
    kinetic: *mut f64,
) -> ChnsStatus {
    guard(|| {
        let s = &sim_ref(sim)?.state;
        let e = energy(&s.phi, &s.u, &PotentialSpec::default());
        if let Some(p) = free_energy.as_mut() {
            *p = e.phi;
        }
        if let Some(p) = kinetic.as_mut() {
            *p = e.kinetic;
        }
        Ok(())
    })
}

/// Copies the fields out. Any output may be null to skip it.
///
/// # Safety
/// `sim` must be a live handle; non-null arrays must hold `chns_simulation_len` doubles.
#[no_mangle]
pub unsafe extern "C" fn chns_simulation_copy_fields(
    sim: *const ChnsSimulation,
    phi: *mut f64,
    ux: *mut f64,
    uy: *mut f64,
) -> ChnsStatus {
    guard(|| {
        let s = &sim_ref(sim)?.state;
        let n = s.grid().len();
        for (dst, src) in [(phi, s.phi.values()), (ux, s.u.ux()), (uy, s.u.uy())] {
            if !dst.is_null() {
                slice_mut(dst, n, "output")?.copy_from_slice(src);
            }
        }
        Ok(())
    })
}

/// Closed-form Hamiltonian value at costate norm `p_norm` for ball radius `r`.
///
/// # Safety
/// `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn chns_hamiltonian(p_norm: f64, r: f64, out: *mut f64) -> ChnsStatus {
    guard(|| {
        let h = hamiltonian_closed(p_norm, r).or_status()?;
        slice_mut(out, 1, "out")?[0] = h;
        Ok(())
    })
}

/// Minimizing feedback control for the divergence-free costate `(px, py)`
/// on an `nx` by `ny` grid of side `length`.
///
/// # Safety
/// All arrays must hold `nx * ny` doubles.
#[no_mangle]
pub unsafe extern "C" fn chns_feedback(
    nx: usize,
    ny: usize,
    length: f64,
    px: *const f64,
    py: *const f64,
    r: f64,
    out_x: *mut f64,
    out_y: *mut f64,
) -> ChnsStatus {
    guard(|| {
        let grid = GridSpec::new(nx, ny, length).or_status()?;
        let p = velocity(grid, px, py, "costate")?;
        let sigma = feedback_sigma(&p, r).or_status()?;
        slice_mut(out_x, grid.len(), "out_x")?.copy_from_slice(sigma.ux());
        slice_mut(out_y, grid.len(), "out_y")?.copy_from_slice(sigma.uy());
        Ok(())
    })
}
