#ifndef BOHMTAU_H
#define BOHMTAU_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BtStatus {
  BT_STATUS_OK = 0,
  BT_STATUS_NULL_POINTER = 1,
  BT_STATUS_INVALID_ARGUMENT = 2,
  BT_STATUS_NUMERICAL = 3,
  BT_STATUS_DOMAIN = 4,
  BT_STATUS_PANIC = 5,
} BtStatus;

// Opaque solver handle holding the current wave packet.
typedef struct BtSolver BtSolver;

// Physical parameters in any consistent unit system.
typedef struct BtParams {
  double mass;
  double hbar;
  double nu;
  double kappa;
  double delta0;
  double x0;
  double v0;
  double deltadot0;
} BtParams;

// Periodic grid `[x_min, x_max)` with `n_points` nodes and time step `dt`.
typedef struct BtGrid {
  double x_min;
  double x_max;
  size_t n_points;
  double dt;
} BtGrid;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into this library on the same thread.
const char *bt_last_error_message(void);

// Measurement resolution that keeps a packet of width `delta0` stationary.
//
// # Safety
// `params` and `out` must be valid pointers or null.
enum BtStatus bt_gausson_kappa(const struct BtParams *params, double *out);

// Time constant of the quantum-to-classical transition, `1/kappa`.
//
// # Safety
// `out` must be a valid pointer or null.
enum BtStatus bt_bohmian_time_constant(double kappa, double *out);

// Integrates the width equation and writes δ at each of the `n` increasing
// `times` (the first is the initial time) into `out`.
//
// # Safety
// `times` and `out` must each point to `n` doubles.
enum BtStatus bt_integrate_width(const struct BtParams *params,
                                 const double *times,
                                 size_t n,
                                 double *out);

// Creates a solver with default options and the initial Gaussian packet.
// Parameters are taken in solver units (ħ = 1, m = 1/2, δ₀ = 1 for the
// standard scaling).
//
// # Safety
// `params`, `grid` and `out` must be valid pointers or null. On success
// `*out` owns a handle that must be released with `bt_solver_free`.
enum BtStatus bt_solver_new(const struct BtParams *params,
                            const struct BtGrid *grid,
                            struct BtSolver **out);

// Releases a solver. Null is accepted.
//
// # Safety
// `solver` must come from `bt_solver_new` and not be used afterwards.
void bt_solver_free(struct BtSolver *solver);

// Advances the packet by `steps` time steps. On failure the packet keeps
// its state from before the call.
//
// # Safety
// `solver` must be a live handle or null.
enum BtStatus bt_solver_step(struct BtSolver *solver, size_t steps);

// Current time of the packet.
//
// # Safety
// `solver` and `out` must be valid pointers or null.
enum BtStatus bt_solver_time(const struct BtSolver *solver, double *out);

// Width `sqrt(<x²> − <x>²)` of the current density.
//
// # Safety
// `solver` and `out` must be valid pointers or null.
enum BtStatus bt_solver_width(const struct BtSolver *solver, double *out);

// Number of grid points.
//
// # Safety
// `solver` and `out` must be valid pointers or null.
enum BtStatus bt_solver_len(const struct BtSolver *solver, size_t *out);

// Copies the density |ψ|² into `out`, which holds `len` doubles and must
// match the grid size.
//
// # Safety
// `out` must point to `len` writable doubles.
enum BtStatus bt_solver_density(const struct BtSolver *solver, double *out, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BOHMTAU_H */
