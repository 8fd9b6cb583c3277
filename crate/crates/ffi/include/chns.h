#ifndef CHNS_H
#define CHNS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum ChnsStatus {
  CHNS_STATUS_OK = 0,
  CHNS_STATUS_NULL_POINTER = 1,
  CHNS_STATUS_INVALID_ARGUMENT = 2,
  CHNS_STATUS_DIMENSION_MISMATCH = 3,
  // The run blew up or produced a non-finite value.
  CHNS_STATUS_NUMERICAL = 4,
  CHNS_STATUS_PANIC = 5,
} ChnsStatus;

// Opaque simulation handle.
typedef struct ChnsSimulation ChnsSimulation;

// Physical constants. `radius` bounds the control norm.
typedef struct ChnsParams {
  double nu;
  double mobility;
  double capillary;
  double radius;
} ChnsParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call on this thread.
const char *chns_last_error_message(void);

const char *chns_version(void);

struct ChnsParams chns_params_default(void);

// Creates a simulation at rest on an `nx` by `ny` periodic grid of side
// `length`, stepping with `dt`. Free the handle with [`chns_simulation_free`].
//
// # Safety
// `params` and `out` must be valid pointers.
enum ChnsStatus chns_simulation_new(size_t nx,
                                    size_t ny,
                                    double length,
                                    const struct ChnsParams *params,
                                    double dt,
                                    struct ChnsSimulation **out);

// # Safety
// `sim` must come from [`chns_simulation_new`] and not be used afterwards.
// Null is ignored.
void chns_simulation_free(struct ChnsSimulation *sim);

// Number of grid points, the length of every field array.
//
// # Safety
// `sim` must be a live handle or null (returns 0).
size_t chns_simulation_len(const struct ChnsSimulation *sim);

// Replaces the state with band-limited random data of RMS `amplitude`
// and zero mean, keeping the current time.
//
// # Safety
// `sim` must be a live handle.
enum ChnsStatus chns_simulation_init_spinodal(struct ChnsSimulation *sim,
                                              double amplitude,
                                              uint64_t seed);

// Sets time and fields. `u` must be divergence-free.
//
// # Safety
// `sim` must be a live handle; each array must hold `chns_simulation_len` doubles.
enum ChnsStatus chns_simulation_set_state(struct ChnsSimulation *sim,
                                          double t,
                                          const double *phi,
                                          const double *ux,
                                          const double *uy);

// Advances `steps` steps under a constant control. Null `cx` and `cy`
// mean no control. On failure the state is left unchanged.
//
// # Safety
// `sim` must be a live handle; non-null control arrays must hold
// `chns_simulation_len` doubles.
enum ChnsStatus chns_simulation_step(struct ChnsSimulation *sim,
                                     size_t steps,
                                     const double *cx,
                                     const double *cy);

// # Safety
// `sim` must be a live handle and `out` valid.
enum ChnsStatus chns_simulation_time(const struct ChnsSimulation *sim, double *out);

// Spatial mean of φ.
//
// # Safety
// `sim` must be a live handle and `out` valid.
enum ChnsStatus chns_simulation_mean_phi(const struct ChnsSimulation *sim, double *out);

// Free energy E(φ) and kinetic energy ½‖u‖². Either output may be null.
//
// # Safety
// `sim` must be a live handle.
enum ChnsStatus chns_simulation_energy(const struct ChnsSimulation *sim,
                                       double *free_energy,
                                       double *kinetic);

// Copies the fields out. Any output may be null to skip it.
//
// # Safety
// `sim` must be a live handle; non-null arrays must hold `chns_simulation_len` doubles.
enum ChnsStatus chns_simulation_copy_fields(const struct ChnsSimulation *sim,
                                            double *phi,
                                            double *ux,
                                            double *uy);

// Closed-form Hamiltonian value at costate norm `p_norm` for ball radius `r`.
//
// # Safety
// `out` must be valid.
enum ChnsStatus chns_hamiltonian(double p_norm, double r, double *out);

// Minimizing feedback control for the divergence-free costate `(px, py)`
// on an `nx` by `ny` grid of side `length`.
//
// # Safety
// All arrays must hold `nx * ny` doubles.
enum ChnsStatus chns_feedback(size_t nx,
                              size_t ny,
                              double length,
                              const double *px,
                              const double *py,
                              double r,
                              double *out_x,
                              double *out_y);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHNS_H */
