#ifndef BEAMGAP_H
#define BEAMGAP_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum BgStatus {
  BG_STATUS_OK = 0,
  BG_STATUS_NULL_POINTER = 1,
  BG_STATUS_INVALID_UTF8 = 2,
  BG_STATUS_IO = 3,
  BG_STATUS_PARSE = 4,
  BG_STATUS_VALIDATION = 5,
  BG_STATUS_GEOMETRY_OVERFLOW = 6,
  BG_STATUS_DOMAIN = 7,
  BG_STATUS_STRUCTURE = 8,
  BG_STATUS_SINGULAR = 9,
  BG_STATUS_NEAR_RESONANCE = 10,
  BG_STATUS_POLE = 11,
  BG_STATUS_EIGENSOLVER = 12,
  BG_STATUS_ASYMMETRY = 13,
  BG_STATUS_NO_CONVERGENCE = 14,
  BG_STATUS_INDEX_OUT_OF_RANGE = 15,
  BG_STATUS_PANIC = 99,
} BgStatus;

typedef enum BgClassification {
  BG_CLASSIFICATION_BAND = 0,
  BG_CLASSIFICATION_FULL_GAP = 1,
  BG_CLASSIFICATION_WEAK_GAP = 2,
  BG_CLASSIFICATION_RESONANCE = 3,
} BgClassification;

typedef enum BgBoundary {
  BG_BOUNDARY_ZERO = 0,
  BG_BOUNDARY_POLE = 1,
} BgBoundary;

// Opaque result of a gap scan.
typedef struct BgGapScan BgGapScan;

// Opaque unit cell.
typedef struct BgLattice BgLattice;

typedef struct BgBeta {
  double lambda;
  // Row-major symmetric 2x2.
  double entries[4];
  // Ascending.
  double eigenvalues[2];
  enum BgClassification classification;
} BgBeta;

typedef struct BgGapInterval {
  double lo;
  double hi;
  enum BgClassification classification;
  enum BgBoundary boundary;
} BgGapInterval;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL-terminated,
// truncated to `len`). Returns the full message length in bytes.
//
// # Safety
// `buf` must be null or valid for `len` bytes.
size_t bg_last_error(char *buf, size_t len);

// Square cell with one soft segment of half length `a` at `alpha_deg`, all
// coefficients one.
//
// # Safety
// `out` must be valid for writing a pointer.
enum BgStatus bg_lattice_square(double alpha_deg, double a, struct BgLattice **out);

// Cell from a JSON config document.
//
// # Safety
// `json` must be a NUL-terminated string; `out` must be valid for writing.
enum BgStatus bg_lattice_from_json(const char *json, struct BgLattice **out);

// # Safety
// `lat` must be null or a handle from this library not yet freed.
void bg_lattice_free(struct BgLattice *lat);

// Homogenized tensor of the stiff part in Voigt form, row-major 3x3.
//
// # Safety
// `lat` must be a live handle; `out` must hold 9 doubles.
enum BgStatus bg_homogenized_tensor(const struct BgLattice *lat, double h, double *out);

// Closed-form frequency response of a unit segment.
//
// # Safety
// `out` must be valid for writing.
enum BgStatus bg_beta_closed(double lambda, double a, double alpha_deg, struct BgBeta *out);

// Frequency response of the soft part from finite elements of size `h`.
//
// # Safety
// `lat` must be a live handle; `out` must be valid for writing.
enum BgStatus bg_beta_matrix(const struct BgLattice *lat,
                             double lambda,
                             double h,
                             struct BgBeta *out);

// Lowest `n_bands` Bloch eigenvalues at quasi-momentum `(k1, k2)`.
//
// # Safety
// `lat` must be a live handle; `out` must hold `n_bands` doubles.
enum BgStatus bg_dispersion_at(const struct BgLattice *lat,
                               double k1,
                               double k2,
                               double h,
                               size_t n_bands,
                               double *out);

// Partition `(0, lambda_max]`. With `h <= 0` the closed forms are used,
// otherwise finite elements of size `h`.
//
// # Safety
// `lat` must be a live handle; `out` must be valid for writing a pointer.
enum BgStatus bg_scan_gaps(const struct BgLattice *lat,
                           double lambda_max,
                           size_t samples,
                           double h,
                           struct BgGapScan **out);

// Number of intervals in a scan; zero for a null handle.
//
// # Safety
// `scan` must be null or a live handle.
size_t bg_gap_scan_len(const struct BgGapScan *scan);

// # Safety
// `scan` must be a live handle; `out` must be valid for writing.
enum BgStatus bg_gap_scan_get(const struct BgGapScan *scan,
                              size_t index,
                              struct BgGapInterval *out);

// # Safety
// `scan` must be null or a handle from this library not yet freed.
void bg_gap_scan_free(struct BgGapScan *scan);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BEAMGAP_H */
