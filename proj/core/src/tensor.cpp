#include "mole/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <sstream>

#ifdef MOLE_WITH_BLAS
#include <dlfcn.h>
#endif

namespace mole {

bool Tensor1D::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor1D Tensor2D::row(int r) const {
    Tensor1D out(cols);
    const double* p = row_ptr(r);
    std::copy(p, p + cols, out.data.begin());
    return out;
}

std::string Tensor2D::shape_str() const {
    std::ostringstream os;
    os << rows << "x" << cols;
    return os.str();
}

bool Tensor2D::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor2D Tensor2D::random_uniform(int r, int c, double lo, double hi, Rng& rng) {
    Tensor2D m(r, c);
    for (double& v : m.data) v = rng.uniform(lo, hi);
    return m;
}

Tensor2D Tensor2D::random_normal(int r, int c, double stddev, Rng& rng) {
    Tensor2D m(r, c);
    for (double& v : m.data) v = stddev * rng.normal();
    return m;
}

namespace {

[[noreturn]] void throw_shape(const char* op, const Tensor2D& a, const Tensor2D& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                     b.shape_str());
}

#ifdef MOLE_WITH_BLAS
// Small products stay on the scalar path: they are cheaper without dgemm call
// overhead, and the small-shape oracle tests pin their exact summation order.
bool use_blas(int m, int n, int k) {
    return static_cast<long long>(m) * n * k >= 16384;
}

struct BlasInit {
    BlasInit() { openblas_set_num_threads(1); } // keep results run-to-run identical
};
const BlasInit g_blas_init;
#endif

} // namespace

Tensor2D matmul(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols != b.rows) throw_shape("matmul", a, b);
    Tensor2D c(a.rows, b.cols);
#ifdef MOLE_WITH_BLAS
    if (use_blas(a.rows, b.cols, a.cols)) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, a.rows, b.cols, a.cols, 1.0,
                    a.data.data(), a.cols, b.data.data(), b.cols, 0.0, c.data.data(), c.cols);
        return c;
    }
#endif
    // ikj order: unit-stride FMA over the output row.
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* crow = c.row_ptr(i);
        for (int k = 0; k < a.cols; ++k) {
            const double aik = arow[k];
            const double* brow = b.row_ptr(k);
            for (int j = 0; j < b.cols; ++j) {
                crow[j] += aik * brow[j];
            }
        }
    }
    return c;
}

Tensor2D matmul_nt(const Tensor2D& a, const Tensor2D& b) {
    if (a.cols != b.cols) {
        throw ShapeError(std::string("matmul_nt: incompatible shapes ") + a.shape_str() +
                         " and " + b.shape_str() + "^T");
    }
    Tensor2D c(a.rows, b.rows);
#ifdef MOLE_WITH_BLAS
    if (use_blas(a.rows, b.rows, a.cols)) {
        cblas_dgemm(CblasRowMajor, CblasNoTrans, CblasTrans, a.rows, b.rows, a.cols, 1.0,
                    a.data.data(), a.cols, b.data.data(), b.cols, 0.0, c.data.data(), c.cols);
        return c;
    }
#endif
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double* crow = c.row_ptr(i);
        for (int j = 0; j < b.rows; ++j) {
            const double* brow = b.row_ptr(j);
            double acc = 0.0;
            for (int k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
            crow[j] = acc;
        }
    }
    return c;
}

Tensor2D matmul_tn(const Tensor2D& a, const Tensor2D& b) {
    if (a.rows != b.rows) {
        throw ShapeError(std::string("matmul_tn: incompatible shapes ") + a.shape_str() +
                         "^T and " + b.shape_str());
    }
    Tensor2D c(a.cols, b.cols);
#ifdef MOLE_WITH_BLAS
    if (use_blas(a.cols, b.cols, a.rows)) {
        cblas_dgemm(CblasRowMajor, CblasTrans, CblasNoTrans, a.cols, b.cols, a.rows, 1.0,
                    a.data.data(), a.cols, b.data.data(), b.cols, 0.0, c.data.data(), c.cols);
        return c;
    }
#endif
    for (int k = 0; k < a.rows; ++k) {
        const double* arow = a.row_ptr(k);
        const double* brow = b.row_ptr(k);
        for (int i = 0; i < a.cols; ++i) {
            const double aki = arow[i];
            double* crow = c.row_ptr(i);
            for (int j = 0; j < b.cols; ++j) {
                crow[j] += aki * brow[j];
            }
        }
    }
    return c;
}

Tensor1D matvec(const Tensor2D& a, const Tensor1D& x) {
    if (a.cols != x.len()) {
        throw ShapeError("matvec: matrix " + a.shape_str() + " does not match vector of length " +
                         std::to_string(x.len()));
    }
    Tensor1D y(a.rows);
    for (int i = 0; i < a.rows; ++i) {
        const double* arow = a.row_ptr(i);
        double acc = 0.0;
        for (int k = 0; k < a.cols; ++k) acc += arow[k] * x[k];
        y[i] = acc;
    }
    return y;
}

Tensor1D matvec_t(const Tensor2D& a, const Tensor1D& x) {
    if (a.rows != x.len()) {
        throw ShapeError("matvec_t: matrix " + a.shape_str() +
                         "^T does not match vector of length " + std::to_string(x.len()));
    }
    Tensor1D y(a.cols);
    for (int k = 0; k < a.rows; ++k) {
        const double xk = x[k];
        const double* arow = a.row_ptr(k);
        for (int j = 0; j < a.cols; ++j) y[j] += xk * arow[j];
    }
    return y;
}

Tensor1D softmax(const Tensor1D& z) {
    if (z.len() == 0) throw ShapeError("softmax: empty vector");
    Tensor1D y(z.len());
    double mx = z[0];
    for (int i = 1; i < z.len(); ++i) mx = std::max(mx, z[i]);
    double sum = 0.0;
    for (int i = 0; i < z.len(); ++i) {
        y[i] = std::exp(z[i] - mx);
        sum += y[i];
    }
    const double inv = 1.0 / sum;
    for (int i = 0; i < z.len(); ++i) y[i] *= inv;
    return y;
}

void softmax_rows_inplace(Tensor2D& m) {
    for (int i = 0; i < m.rows; ++i) {
        double* row = m.row_ptr(i);
        double mx = row[0];
        for (int j = 1; j < m.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < m.cols; ++j) {
            row[j] = std::exp(row[j] - mx);
            sum += row[j];
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < m.cols; ++j) row[j] *= inv;
    }
}

Tensor1D softmax_jacobian_vecprod(const Tensor1D& y, const Tensor1D& upstream) {
    if (y.len() != upstream.len()) {
        throw ShapeError("softmax_jacobian_vecprod: lengths " + std::to_string(y.len()) +
                         " and " + std::to_string(upstream.len()) + " differ");
    }
    // J^T u with J_ij = y_i (delta_ij - y_j)  =>  out_j = y_j (u_j - <y, u>).
    double dot = 0.0;
    for (int i = 0; i < y.len(); ++i) dot += y[i] * upstream[i];
    Tensor1D out(y.len());
    for (int j = 0; j < y.len(); ++j) out[j] = y[j] * (upstream[j] - dot);
    return out;
}

CrossEntropyResult cross_entropy_with_grad(const Tensor2D& logits,
                                           const std::vector<int>& targets,
                                           const std::vector<std::uint8_t>& mask) {
    const int n = logits.rows;
    if (static_cast<int>(targets.size()) != n || static_cast<int>(mask.size()) != n) {
        throw ShapeError("cross_entropy_with_grad: logits rows " + std::to_string(n) +
                         ", targets " + std::to_string(targets.size()) + ", mask " +
                         std::to_string(mask.size()));
    }
    int n_masked = 0;
    for (int i = 0; i < n; ++i) n_masked += mask[i] ? 1 : 0;
    if (n_masked == 0) {
        throw DegenerateInputError("cross_entropy_with_grad: mask selects no positions");
    }

    CrossEntropyResult res;
    res.grad = Tensor2D(n, logits.cols);
    const double inv_n = 1.0 / n_masked;
    double loss = 0.0;
    std::vector<double> probs(static_cast<std::size_t>(logits.cols));
    for (int i = 0; i < n; ++i) {
        if (!mask[i]) continue;
        const int t = targets[static_cast<std::size_t>(i)];
        if (t < 0 || t >= logits.cols) {
            throw ShapeError("cross_entropy_with_grad: target " + std::to_string(t) +
                             " out of range for vocab " + std::to_string(logits.cols));
        }
        const double* row = logits.row_ptr(i);
        double mx = row[0];
        for (int j = 1; j < logits.cols; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            probs[static_cast<std::size_t>(j)] = std::exp(row[j] - mx);
            sum += probs[static_cast<std::size_t>(j)];
        }
        const double inv_sum = 1.0 / sum;
        loss += -(row[t] - mx - std::log(sum));
        double* grow = res.grad.row_ptr(i);
        for (int j = 0; j < logits.cols; ++j) {
            grow[j] = probs[static_cast<std::size_t>(j)] * inv_sum * inv_n;
        }
        grow[t] -= inv_n;
    }
    res.loss = loss * inv_n;
    return res;
}

void add_inplace(Tensor2D& dst, const Tensor2D& src) {
    if (dst.rows != src.rows || dst.cols != src.cols) {
        throw ShapeError("add_inplace: shapes " + dst.shape_str() + " and " + src.shape_str() +
                         " differ");
    }
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void add_inplace(Tensor1D& dst, const Tensor1D& src) {
    if (dst.len() != src.len()) {
        throw ShapeError("add_inplace: lengths " + std::to_string(dst.len()) + " and " +
                         std::to_string(src.len()) + " differ");
    }
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

void scale_inplace(Tensor2D& m, double s) {
    for (double& v : m.data) v *= s;
}

void fill_zero(Tensor2D& m) {
    std::fill(m.data.begin(), m.data.end(), 0.0);
}

void axpy_inplace(Tensor2D& dst, double s, const Tensor2D& src) {
    if (dst.rows != src.rows || dst.cols != src.cols) {
        throw ShapeError("axpy_inplace: shapes " + dst.shape_str() + " and " + src.shape_str() +
                         " differ");
    }
    for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += s * src.data[i];
}

} // namespace mole
