#ifndef QRFLAB_H
#define QRFLAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define QRF_OK 0

#define QRF_ERR_NULL_POINTER 1

#define QRF_ERR_DIMENSION 2

#define QRF_ERR_VALIDATION 3

#define QRF_ERR_RESOURCE 4

#define QRF_ERR_NUMERICAL 5

#define QRF_ERR_PARSE 6

#define QRF_ERR_CONFIG 7

#define QRF_ERR_IO 8

#define QRF_ERR_CSV 9

#define QRF_ERR_FETCH 10

#define QRF_ERR_PANIC 11

// Softmax readout trained with mini-batch AdaGrad.
typedef struct QrfClassifier QrfClassifier;

// Any of the four feature maps.
typedef struct QrfFeatureMap QrfFeatureMap;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread, or NULL. The pointer
// stays valid until the next failing call on the same thread.
const char *qrf_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *qrf_version(void);

// QRF with a random basis permutation; `single_qubit_only != 0` restricts
// the permutation to bit flips (the non-entangling variant).
//
// # Safety
// `out` must be a valid pointer to a handle slot.
int32_t qrf_model_new_qrf(size_t d,
                          size_t n_qubits,
                          size_t layers,
                          double sigma,
                          uint64_t seed,
                          int32_t single_qubit_only,
                          struct QrfFeatureMap **out);

// The RFF-like extreme model with `2^N` independent phases.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
int32_t qrf_model_new_qrf_rff(size_t d,
                              size_t n_qubits,
                              double sigma,
                              uint64_t seed,
                              struct QrfFeatureMap **out);

// QRF with the permutation replaced by Ising evolution `e^{-iHt}`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
int32_t qrf_model_new_qdrf(size_t d,
                           size_t n_qubits,
                           size_t layers,
                           double sigma,
                           uint64_t seed,
                           double j,
                           double g,
                           double alpha,
                           double t,
                           struct QrfFeatureMap **out);

// Classical random Fourier features `√(2/D) cos(Wx + b)`.
//
// # Safety
// `out` must be a valid pointer to a handle slot.
int32_t qrf_model_new_rff(size_t d,
                          size_t n_features,
                          double sigma,
                          uint64_t seed,
                          struct QrfFeatureMap **out);

// Input width, or 0 for a NULL handle.
//
// # Safety
// `model` must be NULL or a live handle.
size_t qrf_model_input_dim(const struct QrfFeatureMap *model);

// Feature count, or 0 for a NULL handle.
//
// # Safety
// `model` must be NULL or a live handle.
size_t qrf_model_feature_dim(const struct QrfFeatureMap *model);

// Features of one input.
//
// # Safety
// `x` must hold `x_len` doubles and `out` must hold `out_len` doubles.
int32_t qrf_model_features(const struct QrfFeatureMap *model,
                           const double *x,
                           size_t x_len,
                           double *out,
                           size_t out_len);

// Features of `n_rows` inputs stored row-major in `x`; `out` receives
// `n_rows × feature_dim` doubles, row-major.
//
// # Safety
// `x` must hold `n_rows × input_dim` doubles and `out` must hold
// `n_rows × feature_dim` doubles.
int32_t qrf_model_features_batch(const struct QrfFeatureMap *model,
                                 const double *x,
                                 size_t n_rows,
                                 double *out);

// # Safety
// `model` must be NULL or a handle not yet freed.
void qrf_model_free(struct QrfFeatureMap *model);

// Trains a classifier on `n_rows × n_cols` row-major features.
//
// # Safety
// `features` must hold `n_rows × n_cols` doubles, `labels` must hold
// `n_rows` entries and `out` must be a valid handle slot.
int32_t qrf_classifier_train(const double *features,
                             size_t n_rows,
                             size_t n_cols,
                             const uint32_t *labels,
                             size_t n_classes,
                             double lr,
                             size_t batch_size,
                             size_t epochs,
                             uint64_t seed,
                             struct QrfClassifier **out);

// Most likely class of one feature vector.
//
// # Safety
// `x` must hold `len` doubles and `class_out` must be writable.
int32_t qrf_classifier_predict(const struct QrfClassifier *clf,
                               const double *x,
                               size_t len,
                               uint32_t *class_out);

// Top-1 accuracy on `n_rows` labelled feature vectors.
//
// # Safety
// `features` must hold `n_rows × n_features` doubles, `labels` must hold
// `n_rows` entries and `accuracy_out` must be writable.
int32_t qrf_classifier_evaluate(const struct QrfClassifier *clf,
                                const double *features,
                                size_t n_rows,
                                const uint32_t *labels,
                                double *accuracy_out);

// # Safety
// `clf` must be NULL or a handle not yet freed.
void qrf_classifier_free(struct QrfClassifier *clf);

// In-place orthonormal Walsh-Hadamard transform of `dim` complex values
// stored as interleaved (re, im) pairs. `dim` must be a power of two.
//
// # Safety
// `data` must hold `2 × dim` doubles.
int32_t qrf_fwht(double *data, size_t dim);

// Draws `shots` samples from the distribution `p` and writes the counts.
//
// # Safety
// `p` and `counts_out` must each hold `dim` elements.
int32_t qrf_sample_shots(const double *p,
                         size_t dim,
                         uint64_t shots,
                         uint64_t seed,
                         uint64_t *counts_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QRFLAB_H */
