#include "mole/mole_linear.hpp"

#include <atomic>
#include <cmath>

namespace mole {

namespace {
std::atomic<std::uint64_t> g_next_layer_id{1};
} // namespace

void MoleLinear::assign_id() {
    layer_id_ = g_next_layer_id.fetch_add(1, std::memory_order_relaxed);
}

MoleLinear MoleLinear::init(int out_dim, int in_dim, int num_experts, int rank, double alpha,
                            Rng& rng) {
    if (out_dim <= 0 || in_dim <= 0 || num_experts <= 0 || rank <= 0 || alpha <= 0.0) {
        throw ValidationError("MoleLinear::init: dimensions, expert count, rank, and alpha must "
                              "be positive");
    }
    if (rank > std::min(out_dim, in_dim)) {
        throw ValidationError("MoleLinear::init: rank " + std::to_string(rank) +
                              " exceeds min(out_dim, in_dim) = " +
                              std::to_string(std::min(out_dim, in_dim)));
    }
    MoleLinear layer;
    const double w0_std = 1.0 / std::sqrt(static_cast<double>(in_dim));
    layer.w0_ = Tensor2D::random_normal(out_dim, in_dim, w0_std, rng);
    const double a_bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    layer.experts_.reserve(static_cast<std::size_t>(num_experts));
    for (int i = 0; i < num_experts; ++i) {
        LoraExpert e;
        e.a = Tensor2D::random_uniform(rank, in_dim, -a_bound, a_bound, rng);
        e.b = Tensor2D(out_dim, rank, 0.0);
        e.rank = rank;
        e.alpha = alpha;
        layer.experts_.push_back(std::move(e));
    }
    layer.router_.w_g = Tensor2D(num_experts, in_dim, 0.0);
    layer.scaling_ = alpha / static_cast<double>(rank);
    layer.assign_id();
    return layer;
}

MoleLinear MoleLinear::from_parts(Tensor2D w0, std::vector<LoraExpert> experts, Router router) {
    if (experts.empty()) throw ValidationError("MoleLinear::from_parts: no experts");
    const int m = w0.rows;
    const int n = w0.cols;
    const int r = experts[0].rank;
    const double alpha = experts[0].alpha;
    for (const LoraExpert& e : experts) {
        if (e.rank != r || e.alpha != alpha) {
            throw ValidationError("MoleLinear::from_parts: experts must share rank and alpha");
        }
        if (e.a.rows != r || e.a.cols != n || e.b.rows != m || e.b.cols != r) {
            throw ValidationError("MoleLinear::from_parts: expert shapes inconsistent with base " +
                                  w0.shape_str());
        }
    }
    if (r > std::min(m, n)) {
        throw ValidationError("MoleLinear::from_parts: rank exceeds min(out_dim, in_dim)");
    }
    if (router.w_g.rows != static_cast<int>(experts.size()) || router.w_g.cols != n) {
        throw ValidationError("MoleLinear::from_parts: router shape " + router.w_g.shape_str() +
                              " inconsistent with " + std::to_string(experts.size()) +
                              " experts of in_dim " + std::to_string(n));
    }
    MoleLinear layer;
    layer.w0_ = std::move(w0);
    layer.experts_ = std::move(experts);
    layer.router_ = std::move(router);
    layer.scaling_ = alpha / static_cast<double>(r);
    layer.assign_id();
    return layer;
}

void MoleLinear::check_input(int len) const {
    if (len != in_dim()) {
        throw ShapeError("MoleLinear: input length " + std::to_string(len) +
                         " does not match in_dim " + std::to_string(in_dim()));
    }
}

Tensor1D MoleLinear::route(const Tensor1D& x) const {
    check_input(x.len());
    return softmax(matvec(router_.w_g, x));
}

Tensor2D MoleLinear::route_batch(const Tensor2D& x) const {
    check_input(x.cols);
    Tensor2D r = matmul_nt(x, router_.w_g);
    softmax_rows_inplace(r);
    return r;
}

std::pair<Tensor1D, MoleLinear::ForwardCache> MoleLinear::forward(const Tensor1D& x) const {
    check_input(x.len());
    ForwardCache cache;
    cache.layer_id = layer_id_;
    cache.revision = revision_;
    cache.x = x;
    cache.r = route(x);

    Tensor1D h = matvec(w0_, x);
    const int t_count = num_experts();
    cache.u.reserve(static_cast<std::size_t>(t_count));
    cache.v.reserve(static_cast<std::size_t>(t_count));
    for (int i = 0; i < t_count; ++i) {
        Tensor1D u = matvec(experts_[static_cast<std::size_t>(i)].a, x);
        Tensor1D v = matvec(experts_[static_cast<std::size_t>(i)].b, u);
        const double w = cache.r[i] * scaling_;
        for (int j = 0; j < h.len(); ++j) h[j] += w * v[j];
        cache.u.push_back(std::move(u));
        cache.v.push_back(std::move(v));
    }
    return {std::move(h), std::move(cache)};
}

MoleGradients MoleLinear::backward(const ForwardCache& cache, const Tensor1D& upstream) const {
    if (cache.layer_id != layer_id_) {
        throw ContractError("MoleLinear::backward: cache belongs to a different layer");
    }
    if (cache.revision != revision_) {
        throw ContractError("MoleLinear::backward: cache is stale; parameters changed since "
                            "forward");
    }
    if (upstream.len() != out_dim()) {
        throw ShapeError("MoleLinear::backward: upstream length " + std::to_string(upstream.len()) +
                         " does not match out_dim " + std::to_string(out_dim()));
    }

    const int t_count = num_experts();
    MoleGradients g;
    g.d_a.resize(static_cast<std::size_t>(t_count));
    g.d_b.resize(static_cast<std::size_t>(t_count));
    g.d_x = matvec_t(w0_, upstream);

    Tensor1D d_r(t_count);
    for (int i = 0; i < t_count; ++i) {
        const LoraExpert& e = experts_[static_cast<std::size_t>(i)];
        const Tensor1D& u = cache.u[static_cast<std::size_t>(i)];
        const Tensor1D& v = cache.v[static_cast<std::size_t>(i)];

        // dL/dR_i = s * <upstream, v_i>
        double dot = 0.0;
        for (int j = 0; j < upstream.len(); ++j) dot += upstream[j] * v[j];
        d_r[i] = scaling_ * dot;

        // dv = R_i s * upstream; dB = dv u^T; du = B^T dv; dA = du x^T
        const double w = cache.r[i] * scaling_;
        Tensor1D dv(upstream.len());
        for (int j = 0; j < upstream.len(); ++j) dv[j] = w * upstream[j];

        Tensor2D db(e.b.rows, e.b.cols);
        for (int row = 0; row < db.rows; ++row) {
            for (int col = 0; col < db.cols; ++col) db.at(row, col) = dv[row] * u[col];
        }
        Tensor1D du = matvec_t(e.b, dv);
        Tensor2D da(e.a.rows, e.a.cols);
        for (int row = 0; row < da.rows; ++row) {
            for (int col = 0; col < da.cols; ++col) da.at(row, col) = du[row] * cache.x[col];
        }
        add_inplace(g.d_x, matvec_t(e.a, du));
        g.d_a[static_cast<std::size_t>(i)] = std::move(da);
        g.d_b[static_cast<std::size_t>(i)] = std::move(db);
    }

    Tensor1D d_logits = softmax_jacobian_vecprod(cache.r, d_r);
    g.d_wg = Tensor2D(t_count, in_dim());
    for (int i = 0; i < t_count; ++i) {
        for (int j = 0; j < in_dim(); ++j) g.d_wg.at(i, j) = d_logits[i] * cache.x[j];
    }
    add_inplace(g.d_x, matvec_t(router_.w_g, d_logits));
    return g;
}

std::pair<Tensor2D, MoleLinear::BatchCache> MoleLinear::forward_batch(const Tensor2D& x) const {
    check_input(x.cols);
    BatchCache cache;
    cache.layer_id = layer_id_;
    cache.revision = revision_;
    cache.x = x;
    cache.r = route_batch(x);

    Tensor2D h = matmul_nt(x, w0_);
    const int t_count = num_experts();
    cache.u.reserve(static_cast<std::size_t>(t_count));
    cache.v.reserve(static_cast<std::size_t>(t_count));
    for (int i = 0; i < t_count; ++i) {
        const LoraExpert& e = experts_[static_cast<std::size_t>(i)];
        Tensor2D u = matmul_nt(x, e.a);
        Tensor2D v = matmul_nt(u, e.b);
        for (int row = 0; row < h.rows; ++row) {
            const double w = cache.r.at(row, i) * scaling_;
            double* hrow = h.row_ptr(row);
            const double* vrow = v.row_ptr(row);
            for (int col = 0; col < h.cols; ++col) hrow[col] += w * vrow[col];
        }
        cache.u.push_back(std::move(u));
        cache.v.push_back(std::move(v));
    }
    return {std::move(h), std::move(cache)};
}

Tensor2D MoleLinear::apply_batch(const Tensor2D& x, Tensor2D* routes) const {
    check_input(x.cols);
    Tensor2D r = route_batch(x);
    Tensor2D h = matmul_nt(x, w0_);
    for (int i = 0; i < num_experts(); ++i) {
        const LoraExpert& e = experts_[static_cast<std::size_t>(i)];
        Tensor2D u = matmul_nt(x, e.a);
        Tensor2D v = matmul_nt(u, e.b);
        for (int row = 0; row < h.rows; ++row) {
            const double w = r.at(row, i) * scaling_;
            double* hrow = h.row_ptr(row);
            const double* vrow = v.row_ptr(row);
            for (int col = 0; col < h.cols; ++col) hrow[col] += w * vrow[col];
        }
    }
    if (routes != nullptr) *routes = std::move(r);
    return h;
}

MoleBatchGradients MoleLinear::backward_batch(const BatchCache& cache,
                                              const Tensor2D& upstream) const {
    if (cache.layer_id != layer_id_) {
        throw ContractError("MoleLinear::backward_batch: cache belongs to a different layer");
    }
    if (cache.revision != revision_) {
        throw ContractError("MoleLinear::backward_batch: cache is stale; parameters changed "
                            "since forward");
    }
    if (upstream.rows != cache.x.rows || upstream.cols != out_dim()) {
        throw ShapeError("MoleLinear::backward_batch: upstream " + upstream.shape_str() +
                         " does not match rows " + std::to_string(cache.x.rows) + ", out_dim " +
                         std::to_string(out_dim()));
    }

    const int rows = cache.x.rows;
    const int t_count = num_experts();
    MoleBatchGradients g;
    g.d_a.resize(static_cast<std::size_t>(t_count));
    g.d_b.resize(static_cast<std::size_t>(t_count));
    g.d_x = matmul(upstream, w0_);

    Tensor2D d_r(rows, t_count);
    Tensor2D dv(rows, out_dim());
    for (int i = 0; i < t_count; ++i) {
        const LoraExpert& e = experts_[static_cast<std::size_t>(i)];
        const Tensor2D& u = cache.u[static_cast<std::size_t>(i)];
        const Tensor2D& v = cache.v[static_cast<std::size_t>(i)];

        for (int row = 0; row < rows; ++row) {
            const double* urow = upstream.row_ptr(row);
            const double* vrow = v.row_ptr(row);
            double dot = 0.0;
            for (int col = 0; col < out_dim(); ++col) dot += urow[col] * vrow[col];
            d_r.at(row, i) = scaling_ * dot;

            const double w = cache.r.at(row, i) * scaling_;
            double* dvrow = dv.row_ptr(row);
            for (int col = 0; col < out_dim(); ++col) dvrow[col] = w * urow[col];
        }
        g.d_b[static_cast<std::size_t>(i)] = matmul_tn(dv, u);
        Tensor2D du = matmul(dv, e.b);
        g.d_a[static_cast<std::size_t>(i)] = matmul_tn(du, cache.x);
        add_inplace(g.d_x, matmul(du, e.a));
    }

    Tensor2D d_logits(rows, t_count);
    for (int row = 0; row < rows; ++row) {
        double dot = 0.0;
        const double* rrow = cache.r.row_ptr(row);
        const double* drrow = d_r.row_ptr(row);
        for (int i = 0; i < t_count; ++i) dot += rrow[i] * drrow[i];
        double* out = d_logits.row_ptr(row);
        for (int i = 0; i < t_count; ++i) out[i] = rrow[i] * (drrow[i] - dot);
    }
    g.d_wg = matmul_tn(d_logits, cache.x);
    add_inplace(g.d_x, matmul(d_logits, router_.w_g));
    return g;
}

Tensor2D& MoleLinear::mutable_expert_a(int i) {
    ++revision_;
    return experts_[static_cast<std::size_t>(i)].a;
}

Tensor2D& MoleLinear::mutable_expert_b(int i) {
    ++revision_;
    return experts_[static_cast<std::size_t>(i)].b;
}

Tensor2D& MoleLinear::mutable_router_weight() {
    ++revision_;
    return router_.w_g;
}

std::int64_t MoleLinear::trainable_param_count() const {
    std::int64_t n = static_cast<std::int64_t>(router_.w_g.data.size());
    for (const LoraExpert& e : experts_) {
        n += static_cast<std::int64_t>(e.a.data.size() + e.b.data.size());
    }
    return n;
}

std::map<std::string, Tensor1D> mean_router_weights(
    const std::map<std::string, std::vector<Tensor2D>>& per_task_routes) {
    std::map<std::string, Tensor1D> out;
    for (const auto& [task, matrices] : per_task_routes) {
        std::int64_t total_rows = 0;
        int width = 0;
        for (const Tensor2D& m : matrices) {
            total_rows += m.rows;
            width = m.cols;
        }
        if (total_rows == 0) {
            throw DegenerateInputError("mean_router_weights: task '" + task +
                                       "' has no routing rows");
        }
        Tensor1D mean(width);
        for (const Tensor2D& m : matrices) {
            if (m.cols != width) {
                throw ShapeError("mean_router_weights: routing width mismatch in task '" + task +
                                 "'");
            }
            for (int row = 0; row < m.rows; ++row) {
                const double* p = m.row_ptr(row);
                for (int col = 0; col < width; ++col) mean[col] += p[col];
            }
        }
        const double inv = 1.0 / static_cast<double>(total_rows);
        for (int col = 0; col < width; ++col) mean[col] *= inv;
        out.emplace(task, std::move(mean));
    }
    return out;
}

} // namespace mole
