#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mole/errors.hpp"
#include "mole/rng.hpp"

namespace mole {

/// Dense real vector, 64-bit floats throughout.
struct Tensor1D {
    std::vector<double> data;

    Tensor1D() = default;
    explicit Tensor1D(int len, double fill = 0.0) : data(static_cast<std::size_t>(len), fill) {}

    int len() const { return static_cast<int>(data.size()); }
    double& operator[](int i) { return data[static_cast<std::size_t>(i)]; }
    double operator[](int i) const { return data[static_cast<std::size_t>(i)]; }

    bool all_finite() const;
};

/// Dense row-major real matrix. Shapes are explicit; there is no broadcasting.
struct Tensor2D {
    int rows = 0;
    int cols = 0;
    std::vector<double> data; // rows * cols, row-major

    Tensor2D() = default;
    Tensor2D(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

    double* row_ptr(int r) { return data.data() + static_cast<std::size_t>(r) * cols; }
    const double* row_ptr(int r) const { return data.data() + static_cast<std::size_t>(r) * cols; }

    Tensor1D row(int r) const;
    std::string shape_str() const;
    bool all_finite() const;

    static Tensor2D random_uniform(int r, int c, double lo, double hi, Rng& rng);
    static Tensor2D random_normal(int r, int c, double stddev, Rng& rng);

    bool operator==(const Tensor2D& o) const {
        return rows == o.rows && cols == o.cols && data == o.data;
    }
};

// ---- products -------------------------------------------------------------

/// C = A * B. Throws ShapeError naming both shapes when a.cols != b.rows.
Tensor2D matmul(const Tensor2D& a, const Tensor2D& b);

/// C = A * B^T (avoids materializing the transpose).
Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b);

/// C = A^T * B.
Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b);

/// y = A * x.
Tensor1D matvec(const Tensor2D& a, const Tensor1D& x);

/// y = A^T * x.
Tensor1D matvec_t(const Tensor2D& a, const Tensor1D& x);

// ---- softmax and loss -----------------------------------------------------

/// Max-subtracted softmax; output entries are positive and sum to 1.
Tensor1D softmax(const Tensor1D& z);

/// In-place row-wise max-subtracted softmax.
void softmax_rows_inplace(Tensor2D& m);

/// Given y = softmax(z) and an upstream cotangent, returns J^T * upstream
/// where J_ij = y_i (delta_ij - y_j).
Tensor1D softmax_jacobian_vecprod(const Tensor1D& y, const Tensor1D& upstream);

struct CrossEntropyResult {
    double loss = 0.0;  // mean NLL over masked positions
    Tensor2D grad;      // dloss/dlogits, zero at unmasked rows
};

/// Token-level cross entropy over the positions where mask is true.
/// logits has one row per position; targets[i] is the class index scored at row i.
CrossEntropyResult cross_entropy_with_grad(const Tensor2D& logits,
                                           const std::vector<int>& targets,
                                           const std::vector<std::uint8_t>& mask);

// ---- small helpers used across layers --------------------------------------

void add_inplace(Tensor2D& dst, const Tensor2D& src);
void add_inplace(Tensor1D& dst, const Tensor1D& src);
void scale_inplace(Tensor2D& m, double s);
void fill_zero(Tensor2D& m);

/// dst += s * src, both row-major matrices of identical shape.
void axpy_inplace(Tensor2D& dst, double s, const Tensor2D& src);

} // namespace mole
