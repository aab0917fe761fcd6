#include "mole/checkpoint.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

namespace mole {

namespace {

constexpr char kMagic[8] = {'M', 'O', 'L', 'E', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kFormatVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char buf[4];
    for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 4);
}

void write_i32(std::ostream& os, std::int32_t v) {
    write_u32(os, static_cast<std::uint32_t>(v));
}

void write_f64(std::ostream& os, double v) {
    const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
    os.write(reinterpret_cast<const char*>(buf), 8);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char buf[4];
    if (!is.read(reinterpret_cast<char*>(buf), 4)) throw IoError("checkpoint: truncated file");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
    return v;
}

std::int32_t read_i32(std::istream& is) { return static_cast<std::int32_t>(read_u32(is)); }

double read_f64(std::istream& is) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8)) throw IoError("checkpoint: truncated file");
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
    return std::bit_cast<double>(bits);
}

void write_tensor(std::ostream& os, const Tensor2D& t) {
    write_i32(os, t.rows);
    write_i32(os, t.cols);
    for (double v : t.data) write_f64(os, v);
}

Tensor2D read_tensor(std::istream& is) {
    const std::int32_t rows = read_i32(is);
    const std::int32_t cols = read_i32(is);
    if (rows < 0 || cols < 0 || static_cast<std::int64_t>(rows) * cols > (1LL << 31)) {
        throw IoError("checkpoint: implausible tensor shape " + std::to_string(rows) + "x" +
                      std::to_string(cols));
    }
    Tensor2D t(rows, cols);
    for (double& v : t.data) v = read_f64(is);
    return t;
}

void write_config(std::ostream& os, const ModelConfig& cfg) {
    write_i32(os, cfg.vocab_size);
    write_i32(os, cfg.embed_dim);
    write_i32(os, cfg.num_layers);
    write_i32(os, cfg.num_heads);
    write_i32(os, cfg.max_seq_len);
    write_i32(os, cfg.num_experts);
    write_i32(os, cfg.rank);
    write_f64(os, cfg.alpha);
}

ModelConfig read_config(std::istream& is) {
    ModelConfig cfg;
    cfg.vocab_size = read_i32(is);
    cfg.embed_dim = read_i32(is);
    cfg.num_layers = read_i32(is);
    cfg.num_heads = read_i32(is);
    cfg.max_seq_len = read_i32(is);
    cfg.num_experts = read_i32(is);
    cfg.rank = read_i32(is);
    cfg.alpha = read_f64(is);
    return cfg;
}

void write_linear(std::ostream& os, const MoleLinear& lin) {
    write_tensor(os, lin.base_weight());
    write_i32(os, lin.num_experts());
    for (const LoraExpert& e : lin.experts()) {
        write_i32(os, e.rank);
        write_f64(os, e.alpha);
        write_tensor(os, e.a);
        write_tensor(os, e.b);
    }
    write_tensor(os, lin.router().w_g);
}

MoleLinear read_linear(std::istream& is) {
    Tensor2D w0 = read_tensor(is);
    const std::int32_t n_experts = read_i32(is);
    if (n_experts <= 0 || n_experts > 4096) {
        throw IoError("checkpoint: implausible expert count " + std::to_string(n_experts));
    }
    std::vector<LoraExpert> experts;
    experts.reserve(static_cast<std::size_t>(n_experts));
    for (int i = 0; i < n_experts; ++i) {
        LoraExpert e;
        e.rank = read_i32(is);
        e.alpha = read_f64(is);
        e.a = read_tensor(is);
        e.b = read_tensor(is);
        experts.push_back(std::move(e));
    }
    Router router;
    router.w_g = read_tensor(is);
    return MoleLinear::from_parts(std::move(w0), std::move(experts), std::move(router));
}

void check_shape(const Tensor2D& t, int rows, int cols, const std::string& name) {
    if (t.rows != rows || t.cols != cols) {
        throw ConfigMismatchError("checkpoint: " + name + " has shape " + t.shape_str() +
                                  " but the embedded config implies " + std::to_string(rows) +
                                  "x" + std::to_string(cols));
    }
}

} // namespace

void save_checkpoint(const TinyLM& model, const std::string& path) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    os.write(kMagic, sizeof(kMagic));
    write_u32(os, kFormatVersion);
    write_config(os, model.config());
    write_tensor(os, model.token_embedding());
    write_tensor(os, model.position_embedding());
    for (const Block& blk : model.blocks()) {
        write_linear(os, blk.q);
        write_linear(os, blk.k);
        write_linear(os, blk.v);
        write_linear(os, blk.o);
        write_linear(os, blk.up);
        write_linear(os, blk.down);
    }
    os.flush();
    if (!os) throw IoError("checkpoint: write to '" + path + "' failed");
}

TinyLM load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw IoError("checkpoint: '" + path + "' is not a model checkpoint");
    }
    const std::uint32_t version = read_u32(is);
    if (version != kFormatVersion) {
        throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    }
    ModelConfig cfg = read_config(is);
    cfg.validate();

    TinyLM model;
    model.set_config(cfg);
    model.mutable_token_embedding() = read_tensor(is);
    model.mutable_position_embedding() = read_tensor(is);
    check_shape(model.token_embedding(), cfg.vocab_size, cfg.embed_dim, "token embedding");
    check_shape(model.position_embedding(), cfg.max_seq_len, cfg.embed_dim,
                "position embedding");

    model.mutable_blocks().resize(static_cast<std::size_t>(cfg.num_layers));
    const int d = cfg.embed_dim;
    for (Block& blk : model.mutable_blocks()) {
        blk.q = read_linear(is);
        blk.k = read_linear(is);
        blk.v = read_linear(is);
        blk.o = read_linear(is);
        blk.up = read_linear(is);
        blk.down = read_linear(is);
        check_shape(blk.q.base_weight(), d, d, "q projection");
        check_shape(blk.k.base_weight(), d, d, "k projection");
        check_shape(blk.v.base_weight(), d, d, "v projection");
        check_shape(blk.o.base_weight(), d, d, "o projection");
        check_shape(blk.up.base_weight(), 4 * d, d, "up projection");
        check_shape(blk.down.base_weight(), d, 4 * d, "down projection");
        for (const MoleLinear* lin : {&blk.q, &blk.k, &blk.v, &blk.o, &blk.up, &blk.down}) {
            if (lin->num_experts() != cfg.num_experts || lin->rank() != cfg.rank ||
                lin->alpha() != cfg.alpha) {
                throw ConfigMismatchError(
                    "checkpoint: layer expert configuration disagrees with the embedded config");
            }
        }
    }
    model.rebuild_grad_buffers();
    return model;
}

ModelConfig peek_checkpoint_config(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0) {
        throw IoError("checkpoint: '" + path + "' is not a model checkpoint");
    }
    const std::uint32_t version = read_u32(is);
    if (version != kFormatVersion) {
        throw IoError("checkpoint: unsupported format version " + std::to_string(version));
    }
    return read_config(is);
}

} // namespace mole
